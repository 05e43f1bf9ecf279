// SPDX-License-Identifier: Apache-2.0

//! TA identifiers in canonical 8-4-4-4-12 text form.

use std::fmt;

use crate::error::WireError;

/// 16-octet universally unique identifier naming a TA.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Uuid(pub [u8; 16]);

/// Positions of the hyphens in the canonical text form.
const HYPHENS: [usize; 4] = [8, 13, 18, 23];

impl Uuid {
    pub const NIL: Uuid = Uuid([0; 16]);

    pub fn from_bytes(bytes: [u8; 16]) -> Self {
        Uuid(bytes)
    }

    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }

    /// Parse the canonical lowercase-or-uppercase hex form.
    pub fn parse(text: &str) -> Result<Self, WireError> {
        let bad = || WireError::MalformedUuid(text.to_string());
        if text.len() != 36 {
            return Err(bad());
        }
        let chars = text.as_bytes();
        for &pos in &HYPHENS {
            if chars[pos] != b'-' {
                return Err(bad());
            }
        }
        let hex: String = text.chars().filter(|&c| c != '-').collect();
        if hex.len() != 32 {
            return Err(bad());
        }
        let bytes = hex::decode(&hex).map_err(|_| bad())?;
        let mut out = [0u8; 16];
        out.copy_from_slice(&bytes);
        Ok(Uuid(out))
    }

    /// Canonical lowercase 8-4-4-4-12 form.
    pub fn format(&self) -> String {
        let h = hex::encode(self.0);
        format!(
            "{}-{}-{}-{}-{}",
            &h[0..8],
            &h[8..12],
            &h[12..16],
            &h[16..20],
            &h[20..32]
        )
    }
}

impl fmt::Display for Uuid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format())
    }
}

impl std::str::FromStr for Uuid {
    type Err = WireError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Uuid::parse(s)
    }
}
