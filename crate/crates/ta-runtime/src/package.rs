// SPDX-License-Identifier: Apache-2.0

//! On-disk TA package: a manifest plus the image it authorizes. A package
//! is a single file — magic, length-prefixed manifest text, then the raw
//! image — and loading verifies the image digest against the manifest's
//! valid set before anything else looks at it.

use std::io;
use std::path::Path;

use gp_core::{compute_digest, TaManifest};
use thiserror::Error;

const MAGIC: &[u8; 8] = b"VTEEPKG\x01";

#[derive(Debug, Error)]
pub enum PackageError {
    #[error("io: {0}")]
    Io(#[from] io::Error),
    #[error("not a TA package (bad magic)")]
    BadMagic,
    #[error("truncated package")]
    Truncated,
    #[error("manifest is not valid UTF-8")]
    BadManifestEncoding,
    #[error("malformed manifest: {0}")]
    BadManifest(#[from] gp_core::WireError),
    #[error("image digest not in the manifest's valid set")]
    DigestMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaPackage {
    pub manifest: TaManifest,
    pub image: Vec<u8>,
}

impl TaPackage {
    /// Seal a manifest and image into package bytes. The image digest is
    /// added to the manifest's valid set if missing.
    pub fn build(mut manifest: TaManifest, image: Vec<u8>) -> Self {
        manifest.valid_digests.insert(compute_digest(&image));
        TaPackage { manifest, image }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let manifest_text = self.manifest.to_kv_string();
        let mut out = Vec::with_capacity(8 + 4 + manifest_text.len() + self.image.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(manifest_text.len() as u32).to_le_bytes());
        out.extend_from_slice(manifest_text.as_bytes());
        out.extend_from_slice(&self.image);
        out
    }

    /// Parse and authenticate a package: the embedded image must hash to a
    /// digest the manifest permits.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, PackageError> {
        let rest = bytes.strip_prefix(MAGIC).ok_or(PackageError::BadMagic)?;
        if rest.len() < 4 {
            return Err(PackageError::Truncated);
        }
        let manifest_len = u32::from_le_bytes(rest[..4].try_into().unwrap()) as usize;
        let rest = &rest[4..];
        if rest.len() < manifest_len {
            return Err(PackageError::Truncated);
        }
        let manifest_text = std::str::from_utf8(&rest[..manifest_len])
            .map_err(|_| PackageError::BadManifestEncoding)?;
        let manifest = TaManifest::from_kv_str(manifest_text)?;
        let image = rest[manifest_len..].to_vec();
        if !manifest.permits(&compute_digest(&image)) {
            return Err(PackageError::DigestMismatch);
        }
        Ok(TaPackage { manifest, image })
    }

    pub fn save(&self, path: &Path) -> Result<(), PackageError> {
        Ok(std::fs::write(path, self.to_bytes())?)
    }

    pub fn load(path: &Path) -> Result<Self, PackageError> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
