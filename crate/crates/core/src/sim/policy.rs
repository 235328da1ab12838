//! Choice of which heralded photons to synchronize within one frame.
//!
//! The source that heralds first is stored. The other source's first herald
//! at or after that moment fixes the release slot. Under the latest-slot rule
//! the stored photon is the first source's most recent herald before release,
//! which minimizes memory loss; the first-herald rule keeps its earliest one.
//! Slot indices are shared by both sources. With the τ/2 interleave, B's slot
//! `t` lies between A's slots `t` and `t + 1`, so a tie is a usable pair with
//! A nominally stored for zero cycles.

use serde::{Deserialize, Serialize};

use crate::analytic::Source;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PolicyKind {
    LatestSlot,
    FirstHerald,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SyncDecision {
    /// Source whose photon waits in the memory.
    pub stored: Source,
    pub stored_slot: u32,
    /// Slot of the last-born herald, when both photons leave.
    pub release_slot: u32,
    /// Cycles spent waiting: `release_slot - stored_slot`.
    pub storage_cycles: u32,
}

impl SyncDecision {
    /// Memory passes of the stored photon, including the mandatory one.
    pub fn stored_passes(&self) -> u32 {
        self.storage_cycles + 1
    }
}

/// Latest-slot selection. Returns `None` when a source never heralds or the
/// stored photon would need more than `max_storage` memory passes.
pub fn latest_slot_policy(heralds_a: &[u32], heralds_b: &[u32], max_storage: u32) -> Option<SyncDecision> {
    decide(PolicyKind::LatestSlot, heralds_a, heralds_b, max_storage)
}

pub fn first_herald_policy(heralds_a: &[u32], heralds_b: &[u32], max_storage: u32) -> Option<SyncDecision> {
    decide(PolicyKind::FirstHerald, heralds_a, heralds_b, max_storage)
}

pub fn decide(
    kind: PolicyKind,
    heralds_a: &[u32],
    heralds_b: &[u32],
    max_storage: u32,
) -> Option<SyncDecision> {
    let (&first_a, &first_b) = (heralds_a.first()?, heralds_b.first()?);
    let (stored, early, late_first) = if first_a <= first_b {
        (Source::A, heralds_a, first_b)
    } else {
        (Source::B, heralds_b, first_a)
    };
    let stored_slot = match kind {
        PolicyKind::FirstHerald => early[0],
        PolicyKind::LatestSlot => {
            let upto = early.partition_point(|&s| s <= late_first);
            early[upto - 1]
        }
    };
    let storage_cycles = late_first - stored_slot;
    if storage_cycles >= max_storage {
        return None;
    }
    Some(SyncDecision {
        stored,
        stored_slot,
        release_slot: late_first,
        storage_cycles,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_example_stores_two_cycles() {
        let d = latest_slot_policy(&[3, 29], &[31], 40).unwrap();
        assert_eq!(d.stored, Source::A);
        assert_eq!(d.release_slot, 31);
        assert_eq!(d.storage_cycles, 2);
        assert_eq!(d.stored_passes(), 3);
        let f = first_herald_policy(&[3, 29], &[31], 40).unwrap();
        assert_eq!(f.storage_cycles, 28);
    }

    #[test]
    fn failures() {
        assert!(latest_slot_policy(&[], &[5], 40).is_none());
        assert!(latest_slot_policy(&[5], &[], 40).is_none());
        assert!(latest_slot_policy(&[1], &[50], 40).is_none());
        // 39 waiting cycles means 40 passes: the largest allowed
        assert!(latest_slot_policy(&[1], &[40], 40).is_some());
        assert!(latest_slot_policy(&[1], &[41], 40).is_none());
        // one slot of storage means no waiting at all
        assert!(latest_slot_policy(&[4], &[5], 1).is_none());
        assert!(latest_slot_policy(&[5], &[5], 1).is_some());
    }

    #[test]
    fn ties_and_symmetry() {
        let d = latest_slot_policy(&[7], &[7], 40).unwrap();
        assert_eq!((d.stored, d.storage_cycles), (Source::A, 0));
        let d = latest_slot_policy(&[12, 30], &[2, 9, 11], 40).unwrap();
        assert_eq!((d.stored, d.stored_slot, d.release_slot, d.storage_cycles), (Source::B, 11, 12, 1));
        // re-herald of the first source in the release slot
        let d = latest_slot_policy(&[3, 20], &[20], 40).unwrap();
        assert_eq!((d.stored_slot, d.storage_cycles), (20, 0));
        // heralds after the release do not matter
        let d = latest_slot_policy(&[3, 29, 33], &[31, 32], 40).unwrap();
        assert_eq!(d.stored_slot, 29);
    }

    #[test]
    fn latest_never_waits_longer_than_first() {
        let patterns: [(&[u32], &[u32]); 4] = [
            (&[1, 5, 9], &[10]),
            (&[2], &[3, 4]),
            (&[8, 9], &[1, 20]),
            (&[1, 38], &[45]),
        ];
        for (a, b) in patterns {
            let latest = latest_slot_policy(a, b, 40);
            let first = first_herald_policy(a, b, 40);
            if let Some(f) = first {
                assert!(latest.unwrap().storage_cycles <= f.storage_cycles);
            }
        }
        assert!(first_herald_policy(&[1, 38], &[45], 40).is_none());
        assert!(latest_slot_policy(&[1, 38], &[45], 40).is_some());
    }
}
