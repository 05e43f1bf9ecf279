// SPDX-License-Identifier: Apache-2.0

//! Sealed storage in isolation: key separation, header authentication,
//! blinded names, nonce freshness, and ledger recovery after reopen.

use gp_core::Uuid;
use manager::{derive_ta_key, object_file_name, SealedStore, StoreError};
use sha2::{Digest, Sha256};

fn uuid(n: u8) -> Uuid {
    let mut b = [0u8; 16];
    b[0] = n;
    Uuid::from_bytes(b)
}

const MASTER: [u8; 32] = [7u8; 32];

/// Independent HKDF-SHA256 oracle built from the RFC 5869 formulas with a
/// hand-rolled HMAC, sharing no code with the implementation under test.
fn oracle_hkdf(master: &[u8; 32], info: &[u8]) -> [u8; 32] {
    fn hmac(key: &[u8], msg: &[u8]) -> [u8; 32] {
        let mut k = [0u8; 64];
        if key.len() > 64 {
            k[..32].copy_from_slice(&Sha256::digest(key));
        } else {
            k[..key.len()].copy_from_slice(key);
        }
        let ipad: Vec<u8> = k.iter().map(|b| b ^ 0x36).collect();
        let opad: Vec<u8> = k.iter().map(|b| b ^ 0x5c).collect();
        let inner = Sha256::digest([ipad.as_slice(), msg].concat());
        Sha256::digest([opad.as_slice(), &inner[..]].concat()).into()
    }
    // extract with empty salt, then a single expand block
    let prk = hmac(&[0u8; 32], master);
    let mut t1 = info.to_vec();
    t1.push(0x01);
    hmac(&prk, &t1)
}

#[test]
fn key_derivation_matches_rfc5869_oracle() {
    for n in [0u8, 1, 9] {
        let u = uuid(n);
        let mut info = b"vtee-storage".to_vec();
        info.extend_from_slice(u.as_bytes());
        assert_eq!(derive_ta_key(&MASTER, &u), oracle_hkdf(&MASTER, &info));
    }
    assert_ne!(derive_ta_key(&MASTER, &uuid(1)), derive_ta_key(&MASTER, &uuid(2)));
}

#[test]
fn file_name_is_blinded_hash() {
    let name = object_file_name(&uuid(3), b"secret-object");
    let mut h = Sha256::new();
    h.update(uuid(3).as_bytes());
    h.update([0u8]);
    h.update(b"secret-object");
    assert_eq!(name, hex::encode(h.finalize()));
    assert!(!name.contains("secret"));
}

#[test]
fn round_trip_and_delete() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = SealedStore::open(dir.path(), MASTER).unwrap();
    store.write(&uuid(1), b"obj", b"payload").unwrap();
    assert_eq!(store.read(&uuid(1), b"obj").unwrap(), b"payload");
    assert_eq!(store.usage(&uuid(1)), 7);
    store.delete(&uuid(1), b"obj").unwrap();
    assert!(matches!(store.read(&uuid(1), b"obj"), Err(StoreError::NotFound)));
    assert_eq!(store.usage(&uuid(1)), 0);
    assert!(matches!(store.delete(&uuid(1), b"obj"), Err(StoreError::NotFound)));
}

#[test]
fn owners_are_cryptographically_separated() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = SealedStore::open(dir.path(), MASTER).unwrap();
    store.write(&uuid(1), b"obj", b"mine").unwrap();
    // same object id, different owner: a different file entirely
    assert!(matches!(store.read(&uuid(2), b"obj"), Err(StoreError::NotFound)));
    // an attacker renaming owner-1's file to owner-2's slot still loses:
    // the header identity and the AEAD tag both disagree
    let from = dir.path().join(object_file_name(&uuid(1), b"obj"));
    let to = dir.path().join(object_file_name(&uuid(2), b"obj"));
    std::fs::copy(&from, &to).unwrap();
    assert!(matches!(store.read(&uuid(2), b"obj"), Err(StoreError::Corrupt(_))));
}

#[test]
fn ciphertext_tamper_detected() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = SealedStore::open(dir.path(), MASTER).unwrap();
    store.write(&uuid(1), b"obj", b"sensitive data").unwrap();
    let path = dir.path().join(object_file_name(&uuid(1), b"obj"));
    let mut bytes = std::fs::read(&path).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0x01;
    std::fs::write(&path, bytes).unwrap();
    assert!(matches!(store.read(&uuid(1), b"obj"), Err(StoreError::Corrupt(_))));
}

#[test]
fn plaintext_never_on_disk_and_nonces_fresh() {
    let dir = tempfile::tempdir().unwrap();
    let mut store = SealedStore::open(dir.path(), MASTER).unwrap();
    let mut nonces = std::collections::BTreeSet::new();
    for i in 0..50u8 {
        store.write(&uuid(1), b"obj", b"very secret plaintext").unwrap();
        let bytes = std::fs::read(dir.path().join(object_file_name(&uuid(1), b"obj"))).unwrap();
        assert!(
            !bytes.windows(6).any(|w| w == b"secret"),
            "plaintext leaked on write {i}"
        );
        // nonce sits after the header: magic(4) ver(1) uuid(16) len(2) id(3)
        let nonce: [u8; 12] = bytes[26..38].try_into().unwrap();
        nonces.insert(nonce);
    }
    assert_eq!(nonces.len(), 50, "nonce reuse across writes");
}

#[test]
fn ledger_recovered_after_reopen() {
    let dir = tempfile::tempdir().unwrap();
    {
        let mut store = SealedStore::open(dir.path(), MASTER).unwrap();
        store.write(&uuid(1), b"a", b"12345").unwrap();
        store.write(&uuid(1), b"b", b"678").unwrap();
        store.write(&uuid(2), b"a", b"x").unwrap();
    }
    let store = SealedStore::open(dir.path(), MASTER).unwrap();
    assert_eq!(store.usage(&uuid(1)), 8);
    assert_eq!(store.usage(&uuid(2)), 1);
    assert_eq!(store.read(&uuid(1), b"a").unwrap(), b"12345");
}

#[test]
fn wrong_master_key_cannot_read() {
    let dir = tempfile::tempdir().unwrap();
    {
        let mut store = SealedStore::open(dir.path(), MASTER).unwrap();
        store.write(&uuid(1), b"obj", b"data").unwrap();
    }
    let store = SealedStore::open(dir.path(), [8u8; 32]).unwrap();
    assert!(matches!(store.read(&uuid(1), b"obj"), Err(StoreError::Corrupt(_))));
}
