// SPDX-License-Identifier: Apache-2.0

//! Installed-TA registry: a directory of authenticated TA packages keyed
//! by UUID. Installation re-verifies the image digest against the
//! manifest; the manager loads instances lazily from here.

use std::path::{Path, PathBuf};

use gp_core::{TaManifest, Uuid};
use ta_runtime::package::{PackageError, TaPackage};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum RegistryError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("package rejected: {0}")]
    Package(#[from] PackageError),
    #[error("no TA installed under {0}")]
    NotInstalled(String),
}

pub struct Registry {
    dir: PathBuf,
}

impl Registry {
    pub fn open(dir: &Path) -> Result<Self, RegistryError> {
        std::fs::create_dir_all(dir)?;
        Ok(Registry {
            dir: dir.to_path_buf(),
        })
    }

    fn path_for(&self, uuid: &Uuid) -> PathBuf {
        self.dir.join(format!("{}.pkg", uuid.format()))
    }

    /// Verify and persist a package; returns its manifest.
    pub fn install(&self, bytes: &[u8]) -> Result<TaManifest, RegistryError> {
        let pkg = TaPackage::from_bytes(bytes)?;
        std::fs::write(self.path_for(&pkg.manifest.uuid), bytes)?;
        Ok(pkg.manifest)
    }

    pub fn load(&self, uuid: &Uuid) -> Result<TaPackage, RegistryError> {
        let path = self.path_for(uuid);
        if !path.exists() {
            return Err(RegistryError::NotInstalled(uuid.format()));
        }
        Ok(TaPackage::load(&path)?)
    }

    pub fn manifest(&self, uuid: &Uuid) -> Result<TaManifest, RegistryError> {
        Ok(self.load(uuid)?.manifest)
    }

    pub fn list(&self) -> Result<Vec<TaManifest>, RegistryError> {
        let mut out = Vec::new();
        for entry in std::fs::read_dir(&self.dir)? {
            let path = entry?.path();
            if path.extension().is_some_and(|e| e == "pkg") {
                out.push(TaPackage::load(&path)?.manifest);
            }
        }
        out.sort_by_key(|m| m.uuid);
        Ok(out)
    }
}
