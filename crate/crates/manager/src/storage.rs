// SPDX-License-Identifier: Apache-2.0

//! Sealed object storage. Every object is one file, encrypted under a
//! per-TA key derived from the manager's master key, with the file header
//! authenticated as associated data. File names are blinded so the host
//! directory listing leaks neither owner nor object names.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use aes_gcm::aead::{Aead, Payload};
use aes_gcm::{Aes256Gcm, Key, KeyInit, Nonce};
use gp_core::Uuid;
use hkdf::Hkdf;
use rand::RngCore;
use sha2::{Digest as _, Sha256};
use thiserror::Error;

const MAGIC: &[u8; 4] = b"VTEE";
const VERSION: u8 = 0x01;
const NONCE_LEN: usize = 12;
const TAG_LEN: usize = 16;
const KEY_INFO: &[u8] = b"vtee-storage";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("object not found")]
    NotFound,
    #[error("sealed object rejected: {0}")]
    Corrupt(&'static str),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// HKDF-SHA256 over the master key with info = "vtee-storage" || uuid.
pub fn derive_ta_key(master: &[u8; 32], uuid: &Uuid) -> [u8; 32] {
    let hk = Hkdf::<Sha256>::new(None, master);
    let mut info = KEY_INFO.to_vec();
    info.extend_from_slice(uuid.as_bytes());
    let mut okm = [0u8; 32];
    hk.expand(&info, &mut okm).expect("32 bytes is a valid okm length");
    okm
}

/// Blinded file name: hex(SHA-256(uuid || 0x00 || object_id)).
pub fn object_file_name(uuid: &Uuid, object_id: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(uuid.as_bytes());
    h.update([0u8]);
    h.update(object_id);
    hex::encode(h.finalize())
}

fn header(uuid: &Uuid, object_id: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(4 + 1 + 16 + 2 + object_id.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.extend_from_slice(uuid.as_bytes());
    out.extend_from_slice(&(object_id.len() as u16).to_le_bytes());
    out.extend_from_slice(object_id);
    out
}

pub struct SealedStore {
    dir: PathBuf,
    master_key: [u8; 32],
    /// plaintext length of every live object, for quota accounting
    lens: BTreeMap<(Uuid, Vec<u8>), u64>,
}

impl SealedStore {
    /// Open (or create) a store directory, recovering the quota ledger
    /// from the authenticated headers of existing files.
    pub fn open(dir: &Path, master_key: [u8; 32]) -> Result<Self, StoreError> {
        std::fs::create_dir_all(dir)?;
        let mut lens = BTreeMap::new();
        for entry in std::fs::read_dir(dir)? {
            let entry = entry?;
            if !entry.file_type()?.is_file() {
                continue;
            }
            let bytes = std::fs::read(entry.path())?;
            if let Ok((uuid, object_id, ct_len)) = parse_header(&bytes) {
                lens.insert((uuid, object_id), (ct_len - TAG_LEN) as u64);
            }
        }
        Ok(SealedStore {
            dir: dir.to_path_buf(),
            master_key,
            lens,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Total plaintext bytes currently sealed for one owner.
    pub fn usage(&self, uuid: &Uuid) -> u64 {
        self.lens
            .iter()
            .filter(|((u, _), _)| u == uuid)
            .map(|(_, len)| len)
            .sum()
    }

    pub fn len_of(&self, uuid: &Uuid, object_id: &[u8]) -> Option<u64> {
        self.lens.get(&(*uuid, object_id.to_vec())).copied()
    }

    fn path_for(&self, uuid: &Uuid, object_id: &[u8]) -> PathBuf {
        self.dir.join(object_file_name(uuid, object_id))
    }

    pub fn write(&mut self, uuid: &Uuid, object_id: &[u8], data: &[u8]) -> Result<(), StoreError> {
        let key = derive_ta_key(&self.master_key, uuid);
        let cipher = Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(&key));
        let mut nonce = [0u8; NONCE_LEN];
        rand::thread_rng().fill_bytes(&mut nonce);
        let hdr = header(uuid, object_id);
        let ct = cipher
            .encrypt(
                Nonce::from_slice(&nonce),
                Payload {
                    msg: data,
                    aad: &hdr,
                },
            )
            .map_err(|_| StoreError::Corrupt("encryption failed"))?;
        let mut file = hdr;
        file.extend_from_slice(&nonce);
        file.extend_from_slice(&ct);
        std::fs::write(self.path_for(uuid, object_id), file)?;
        self.lens
            .insert((*uuid, object_id.to_vec()), data.len() as u64);
        Ok(())
    }

    pub fn read(&self, uuid: &Uuid, object_id: &[u8]) -> Result<Vec<u8>, StoreError> {
        let path = self.path_for(uuid, object_id);
        let bytes = match std::fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(StoreError::NotFound),
            Err(e) => return Err(e.into()),
        };
        let (file_uuid, file_object, _) = parse_header(&bytes)?;
        if file_uuid != *uuid || file_object != object_id {
            return Err(StoreError::Corrupt("header identity mismatch"));
        }
        let hdr = header(uuid, object_id);
        let rest = &bytes[hdr.len()..];
        let (nonce, ct) = rest.split_at(NONCE_LEN);
        let key = derive_ta_key(&self.master_key, uuid);
        let cipher = Aes256Gcm::new(Key::<Aes256Gcm>::from_slice(&key));
        cipher
            .decrypt(
                Nonce::from_slice(nonce),
                Payload { msg: ct, aad: &hdr },
            )
            .map_err(|_| StoreError::Corrupt("authentication failed"))
    }

    pub fn delete(&mut self, uuid: &Uuid, object_id: &[u8]) -> Result<(), StoreError> {
        let path = self.path_for(uuid, object_id);
        match std::fs::remove_file(&path) {
            Ok(()) => {
                self.lens.remove(&(*uuid, object_id.to_vec()));
                Ok(())
            }
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Err(StoreError::NotFound),
            Err(e) => Err(e.into()),
        }
    }
}

/// Parse and sanity-check a sealed file header. Returns the owner, the
/// object id and the ciphertext length (tag included).
fn parse_header(bytes: &[u8]) -> Result<(Uuid, Vec<u8>, usize), StoreError> {
    let rest = bytes
        .strip_prefix(MAGIC)
        .ok_or(StoreError::Corrupt("bad magic"))?;
    let (&version, rest) = rest
        .split_first()
        .ok_or(StoreError::Corrupt("truncated"))?;
    if version != VERSION {
        return Err(StoreError::Corrupt("unknown version"));
    }
    if rest.len() < 16 + 2 {
        return Err(StoreError::Corrupt("truncated"));
    }
    let uuid = Uuid::from_bytes(rest[..16].try_into().unwrap());
    let id_len = u16::from_le_bytes(rest[16..18].try_into().unwrap()) as usize;
    let rest = &rest[18..];
    if rest.len() < id_len + NONCE_LEN + TAG_LEN {
        return Err(StoreError::Corrupt("truncated"));
    }
    let object_id = rest[..id_len].to_vec();
    let ct_len = rest.len() - id_len - NONCE_LEN;
    Ok((uuid, object_id, ct_len))
}
