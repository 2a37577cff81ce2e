//! Per-party ledger of masks, blinds, and shares with single-use
//! enforcement.
//!
//! Every secret a party draws or derives during a run is recorded here
//! under (kind, block ordinal, inference index) with an explicit use
//! budget fixed at insertion. Taking a value past its budget — the bug
//! class where a mask protects two different things — fails with
//! [`Error::ShareReuse`] instead of silently weakening the masking. The
//! audit reads records non-destructively to recombine shares across
//! parties and compare against the plaintext oracle.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

/// What a recorded vector is. One inference's record for a block holds at
/// most one value per kind.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum ShareKind {
    /// User-drawn input mask `r` for a gateway block (or the transition).
    GatewayMask,
    /// A's blind `s` on the gateway linear product.
    GatewayBlind,
    /// A's garbled-circuit password `d` re-masking a gateway hand-off.
    Password,
    /// User's decryption `y_c = F·r − s` of the blinded product.
    UserDecrypt,
    /// A's online gateway share `y_s = F·(x−r) + b + s`.
    GatewayShare,
    /// One party's additive share of a remote-block input mask.
    RemoteMask,
    /// A remote server's blind share `s` on its linear share.
    RemoteBlind,
    /// A's jointly decrypted correction `E = F·r − s² − s³ + b`.
    Correction,
    /// A remote server's online linear share `F^j·(x−r) + s^j`.
    RemoteShare,
    /// A masked activation a party holds in the clear (`x − r`).
    HeldValue,
    /// User's un-truncated hand-off re-mask `δ = y_c − r`.
    HandoffDelta,
    /// The decrypted logits (user side).
    Logits,
}

/// Record key: kind, block ordinal, inference index.
pub type ShareKey = (ShareKind, usize, u32);

#[derive(Debug, Clone)]
struct Entry {
    uses_left: u32,
    values: Vec<u64>,
}

/// One party's append-only share ledger.
#[derive(Debug, Default, Clone)]
pub struct ShareRecord {
    entries: BTreeMap<ShareKey, Entry>,
}

impl ShareRecord {
    /// Empty ledger.
    pub fn new() -> Self {
        Self::default()
    }

    /// Record a freshly drawn or derived vector with its total use budget.
    /// Re-inserting an existing key is itself a reuse.
    pub fn insert(
        &mut self,
        kind: ShareKind,
        ordinal: usize,
        inference: u32,
        uses: u32,
        values: Vec<u64>,
    ) -> Result<()> {
        let key = (kind, ordinal, inference);
        if self.entries.contains_key(&key) {
            return Err(Error::ShareReuse(format!(
                "{kind:?} for block {ordinal}, inference {inference} recorded twice"
            )));
        }
        self.entries.insert(
            key,
            Entry {
                uses_left: uses,
                values,
            },
        );
        Ok(())
    }

    /// Consume one use of a recorded vector.
    pub fn take(&mut self, kind: ShareKind, ordinal: usize, inference: u32) -> Result<Vec<u64>> {
        let key = (kind, ordinal, inference);
        let entry = self.entries.get_mut(&key).ok_or_else(|| {
            Error::ShareReuse(format!(
                "{kind:?} for block {ordinal}, inference {inference} was never recorded"
            ))
        })?;
        if entry.uses_left == 0 {
            return Err(Error::ShareReuse(format!(
                "{kind:?} for block {ordinal}, inference {inference} used past its budget"
            )));
        }
        entry.uses_left -= 1;
        Ok(entry.values.clone())
    }

    /// Read a record without consuming a use (audit path).
    pub fn peek(&self, kind: ShareKind, ordinal: usize, inference: u32) -> Option<&[u64]> {
        self.entries
            .get(&(kind, ordinal, inference))
            .map(|e| e.values.as_slice())
    }

    /// Iterate every record (audit path).
    pub fn iter(&self) -> impl Iterator<Item = (&ShareKey, &[u64])> {
        self.entries.iter().map(|(k, e)| (k, e.values.as_slice()))
    }

    /// Whether any record of `kind` exists (audit path).
    pub fn has_kind(&self, kind: ShareKind) -> bool {
        self.entries.keys().any(|(k, _, _)| *k == kind)
    }

    /// Number of records.
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Whether the ledger is empty.
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn budget_enforced_and_overuse_reported() {
        let mut rec = ShareRecord::new();
        rec.insert(ShareKind::GatewayMask, 1, 0, 2, vec![10, 20])
            .expect("insert");
        assert_eq!(rec.take(ShareKind::GatewayMask, 1, 0).expect("first"), vec![10, 20]);
        assert_eq!(rec.take(ShareKind::GatewayMask, 1, 0).expect("second"), vec![10, 20]);
        let err = rec.take(ShareKind::GatewayMask, 1, 0).unwrap_err();
        assert!(matches!(err, Error::ShareReuse(_)), "got {err:?}");
    }

    #[test]
    fn missing_and_duplicate_records_are_reuse_errors() {
        let mut rec = ShareRecord::new();
        assert!(matches!(
            rec.take(ShareKind::Correction, 3, 1),
            Err(Error::ShareReuse(_))
        ));
        rec.insert(ShareKind::Correction, 3, 1, 1, vec![1]).expect("insert");
        assert!(matches!(
            rec.insert(ShareKind::Correction, 3, 1, 1, vec![2]),
            Err(Error::ShareReuse(_))
        ));
        assert_eq!(rec.peek(ShareKind::Correction, 3, 1), Some(&[1u64][..]));
        assert_eq!(rec.len(), 1);
    }

    #[test]
    fn distinct_inferences_are_distinct_records() {
        let mut rec = ShareRecord::new();
        rec.insert(ShareKind::RemoteMask, 4, 0, 1, vec![5]).expect("inf 0");
        rec.insert(ShareKind::RemoteMask, 4, 1, 1, vec![6]).expect("inf 1");
        assert_eq!(rec.take(ShareKind::RemoteMask, 4, 0).expect("take 0"), vec![5]);
        assert_eq!(rec.take(ShareKind::RemoteMask, 4, 1).expect("take 1"), vec![6]);
    }
}
