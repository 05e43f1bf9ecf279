// SPDX-License-Identifier: Apache-2.0

//! Image measurements. A task or enclave image is measured once at load time
//! and the resulting digest is the identity everything else hangs off:
//! manifest binding, IPC sender authentication and install verification.

use std::fmt;

use sha2::{Digest as _, Sha256};

/// SHA-256 measurement of a task/enclave image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Digest(pub [u8; 32]);

impl Digest {
    pub fn from_hex(s: &str) -> Option<Self> {
        let bytes = hex::decode(s).ok()?;
        let arr: [u8; 32] = bytes.try_into().ok()?;
        Some(Digest(arr))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for Digest {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

/// Measure an image. Pure function of the image bytes.
pub fn compute_digest(image: &[u8]) -> Digest {
    let mut h = Sha256::new();
    h.update(image);
    Digest(h.finalize().into())
}
