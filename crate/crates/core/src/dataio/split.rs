use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 64-bit FNV-1a over raw bytes.
pub fn fnv1a64(bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    bytes.iter().fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitAssignment {
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub ratio: f64,
}

pub fn is_train(id: &str, train_pct: u32) -> bool {
    fnv1a64(id.as_bytes()) % 100 < u64::from(train_pct)
}

/// Hash split: an id is train iff `fnv1a64(id) mod 100 < train_pct`.
/// Input order is preserved within each side.
pub fn split_files<S: AsRef<str>>(ids: &[S], train_pct: u32) -> Result<SplitAssignment> {
    if train_pct > 100 {
        return Err(Error::Usage(format!("train_pct {train_pct} exceeds 100")));
    }
    let mut seen = HashSet::with_capacity(ids.len());
    let (mut train_ids, mut val_ids) = (Vec::new(), Vec::new());
    for id in ids {
        let id = id.as_ref();
        if !seen.insert(id) {
            return Err(Error::Usage(format!("duplicate id '{id}' in split input")));
        }
        if is_train(id, train_pct) {
            train_ids.push(id.to_string());
        } else {
            val_ids.push(id.to_string());
        }
    }
    Ok(SplitAssignment {
        train_ids,
        val_ids,
        ratio: f64::from(train_pct) / 100.0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fnv_reference_values() {
        assert_eq!(fnv1a64(b""), 0xcbf2_9ce4_8422_2325);
        assert_eq!(fnv1a64(b"a"), 0xaf63_dc4c_8601_ec8c);
        assert_eq!(fnv1a64(b"foobar"), 0x8594_4171_f739_67e8);
    }

    #[test]
    fn boundaries() {
        let s = split_files::<&str>(&[], 70).unwrap();
        assert!(s.train_ids.is_empty() && s.val_ids.is_empty());
        let ids = ["a", "b", "c", "d"];
        assert_eq!(split_files(&ids, 100).unwrap().train_ids.len(), 4);
        assert_eq!(split_files(&ids, 0).unwrap().val_ids.len(), 4);
    }

    #[test]
    fn duplicates_are_usage_errors() {
        assert!(matches!(split_files(&["x", "y", "x"], 70), Err(Error::Usage(_))));
    }

    #[test]
    fn growth_never_flips_existing_ids() {
        let small: Vec<String> = (0..50).map(|i| format!("granule_{i}")).collect();
        let big: Vec<String> = (0..500).map(|i| format!("granule_{i}")).collect();
        let a = split_files(&small, 70).unwrap();
        let b = split_files(&big, 70).unwrap();
        for id in &a.train_ids {
            assert!(b.train_ids.contains(id));
        }
        for id in &a.val_ids {
            assert!(b.val_ids.contains(id));
        }
    }
}
