//! Overlap identification by salted SHA-256 digests of sample ids. This
//! hides ids from casual inspection only: anyone who can guess an id and
//! knows the salt can test membership.

use std::collections::{HashMap, HashSet};

use sha2::{Digest as _, Sha256};

use crate::error::ProtocolError;
use crate::protocol::message::Digest;
use crate::rng::{stream, SplitMix64};

/// SHA-256(salt ∥ 0x00 ∥ utf8(id)).
pub fn hash_id(salt: &[u8; 16], id: &str) -> Digest {
    let mut h = Sha256::new();
    h.update(salt);
    h.update([0u8]);
    h.update(id.as_bytes());
    h.finalize().into()
}

/// The alignment salt both sides (and the centralized trainer) derive from
/// the shared seed.
pub fn salt_from_seed(seed: u64) -> [u8; 16] {
    let mut salt = [0u8; 16];
    SplitMix64::derived(seed, stream::SALT).fill_bytes(&mut salt);
    salt
}

/// Sorted digests of local ids; duplicate ids are an error.
pub fn local_digests(ids: &[String], salt: &[u8; 16]) -> Result<Vec<Digest>, ProtocolError> {
    let mut ds: Vec<Digest> = ids.iter().map(|id| hash_id(salt, id)).collect();
    ds.sort_unstable();
    if let Some(w) = ds.windows(2).position(|w| w[0] == w[1]) {
        let dup = ids
            .iter()
            .find(|id| hash_id(salt, id) == ds[w])
            .cloned()
            .unwrap_or_default();
        return Err(ProtocolError::DuplicateDigest(dup));
    }
    Ok(ds)
}

/// The shared sample universe: ascending digests present on both sides,
/// and for each the position of the matching local record.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AlignmentSet {
    pub salt: [u8; 16],
    pub digests: Vec<Digest>,
    pub local: Vec<usize>,
}

impl AlignmentSet {
    pub fn len(&self) -> usize {
        self.digests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.digests.is_empty()
    }
}

pub fn align(
    local_ids: &[String],
    remote: &[Digest],
    salt: &[u8; 16],
) -> Result<AlignmentSet, ProtocolError> {
    let mut by_digest = HashMap::with_capacity(local_ids.len());
    for (i, id) in local_ids.iter().enumerate() {
        if by_digest.insert(hash_id(salt, id), i).is_some() {
            return Err(ProtocolError::DuplicateDigest(id.clone()));
        }
    }
    let mut seen = HashSet::with_capacity(remote.len());
    let mut digests = Vec::new();
    for d in remote {
        if !seen.insert(*d) {
            return Err(ProtocolError::DuplicateDigest(hex::encode(d)));
        }
        if by_digest.contains_key(d) {
            digests.push(*d);
        }
    }
    if digests.is_empty() {
        return Err(ProtocolError::EmptyIntersection);
    }
    digests.sort_unstable();
    let local = digests.iter().map(|d| by_digest[d]).collect();
    Ok(AlignmentSet {
        salt: *salt,
        digests,
        local,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn overlap_of_two() {
        let salt = [3u8; 16];
        let a = ids(&["a", "b", "c"]);
        let b = ids(&["d", "c", "b"]);
        let sa = align(&a, &local_digests(&b, &salt).unwrap(), &salt).unwrap();
        let sb = align(&b, &local_digests(&a, &salt).unwrap(), &salt).unwrap();
        assert_eq!(sa.len(), 2);
        assert_eq!(sa.digests, sb.digests);
        for (i, j) in sa.local.iter().zip(&sb.local) {
            assert_eq!(a[*i], b[*j]);
        }
    }

    #[test]
    fn disjoint_and_duplicates() {
        let salt = [0u8; 16];
        let remote = local_digests(&ids(&["x"]), &salt).unwrap();
        assert!(matches!(
            align(&ids(&["y"]), &remote, &salt),
            Err(ProtocolError::EmptyIntersection)
        ));
        assert!(matches!(
            local_digests(&ids(&["y", "y"]), &salt),
            Err(ProtocolError::DuplicateDigest(_))
        ));
        let dup = vec![remote[0], remote[0]];
        assert!(align(&ids(&["x"]), &dup, &salt).is_err());
    }

    #[test]
    fn salt_changes_digest() {
        assert_eq!(hash_id(&[1; 16], "id"), hash_id(&[1; 16], "id"));
        assert_ne!(hash_id(&[1; 16], "id"), hash_id(&[2; 16], "id"));
        assert_eq!(salt_from_seed(5), salt_from_seed(5));
        assert_ne!(salt_from_seed(5), salt_from_seed(6));
    }
}
