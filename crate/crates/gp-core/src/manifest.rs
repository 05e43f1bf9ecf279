// SPDX-License-Identifier: Apache-2.0

//! TA manifests bind a UUID to the set of image measurements that may run
//! under it. The on-disk form is key=value lines.

use std::collections::BTreeSet;

use crate::digest::Digest;
use crate::error::WireError;
use crate::uuid::Uuid;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaManifest {
    pub uuid: Uuid,
    pub name: String,
    pub single_instance: bool,
    pub valid_digests: BTreeSet<Digest>,
    pub storage_quota: u64,
}

impl TaManifest {
    /// Parse key=value lines: uuid, name, single_instance, digests
    /// (comma-separated hex), quota. Blank lines and '#' comments ignored.
    pub fn from_kv_str(text: &str) -> Result<Self, WireError> {
        let err = |msg: &str| WireError::MalformedManifest(msg.to_string());
        let mut uuid = None;
        let mut name = None;
        let mut single_instance = true;
        let mut valid_digests = BTreeSet::new();
        let mut storage_quota = 64 * 1024u64;
        for line in text.lines() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(&format!("expected key=value, got {line:?}")))?;
            match key.trim() {
                "uuid" => uuid = Some(Uuid::parse(value.trim())?),
                "name" => name = Some(value.trim().to_string()),
                "single_instance" => {
                    single_instance = value
                        .trim()
                        .parse::<bool>()
                        .map_err(|_| err("single_instance must be true or false"))?
                }
                "digests" => {
                    for d in value.split(',') {
                        let d = d.trim();
                        if d.is_empty() {
                            continue;
                        }
                        valid_digests.insert(
                            Digest::from_hex(d).ok_or_else(|| err("bad digest hex"))?,
                        );
                    }
                }
                "quota" => {
                    storage_quota = value
                        .trim()
                        .parse()
                        .map_err(|_| err("quota must be a byte count"))?
                }
                other => return Err(err(&format!("unknown key {other:?}"))),
            }
        }
        let manifest = TaManifest {
            uuid: uuid.ok_or_else(|| err("missing uuid"))?,
            name: name.ok_or_else(|| err("missing name"))?,
            single_instance,
            valid_digests,
            storage_quota,
        };
        if manifest.valid_digests.is_empty() {
            return Err(err("digests must be non-empty"));
        }
        Ok(manifest)
    }

    pub fn to_kv_string(&self) -> String {
        let digests: Vec<String> = self.valid_digests.iter().map(|d| d.to_hex()).collect();
        format!(
            "uuid={}\nname={}\nsingle_instance={}\ndigests={}\nquota={}\n",
            self.uuid,
            self.name,
            self.single_instance,
            digests.join(","),
            self.storage_quota
        )
    }

    /// An image is installable only if its measurement is bound to the UUID.
    pub fn permits(&self, digest: &Digest) -> bool {
        self.valid_digests.contains(digest)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digest::compute_digest;

    fn sample() -> TaManifest {
        TaManifest {
            uuid: Uuid([1; 16]),
            name: "echo".into(),
            single_instance: true,
            valid_digests: [compute_digest(b"image")].into_iter().collect(),
            storage_quota: 4096,
        }
    }

    #[test]
    fn kv_round_trip() {
        let m = sample();
        assert_eq!(TaManifest::from_kv_str(&m.to_kv_string()).unwrap(), m);
    }

    #[test]
    fn empty_digest_set_rejected() {
        let text = "uuid=01010101-0101-0101-0101-010101010101\nname=echo\ndigests=\n";
        assert!(TaManifest::from_kv_str(text).is_err());
    }

    #[test]
    fn binding_check() {
        let m = sample();
        assert!(m.permits(&compute_digest(b"image")));
        assert!(!m.permits(&compute_digest(b"tampered")));
    }
}
