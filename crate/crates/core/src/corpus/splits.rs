use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Partition {
    Train,
    Validation,
    Test,
}

impl Partition {
    pub const ALL: [Partition; 3] = [Partition::Train, Partition::Validation, Partition::Test];
}

/// Document id → partition.
pub type SplitAssignment = BTreeMap<String, Partition>;

/// Channel-disjoint train/validation/test split.
///
/// Documents are grouped by channel; channels with a single document are
/// pooled into one group. Groups are shuffled with `seed` and each goes to
/// the partition currently furthest below its target document count
/// (ties to the earlier partition).
pub fn make_splits(docs: &[(String, String)], ratios: [f64; 3], seed: u64) -> Result<SplitAssignment, CorpusError> {
    if ratios.iter().any(|r| !(*r >= 0.0)) || (ratios.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
        return Err(CorpusError::BadConfig(format!("split ratios {ratios:?} must be non-negative and sum to 1")));
    }
    let mut by_channel: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
    for (id, channel) in docs {
        by_channel.entry(channel).or_default().push(id);
    }
    if by_channel.len() < 3 {
        return Err(CorpusError::InsufficientData(format!("{} channels, need at least 3", by_channel.len())));
    }
    let mut singles = Vec::new();
    let mut groups: Vec<Vec<&str>> = Vec::new();
    for (_, ids) in by_channel {
        if ids.len() == 1 {
            singles.extend(ids);
        } else {
            groups.push(ids);
        }
    }
    if !singles.is_empty() {
        groups.push(singles);
    }
    groups.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let total = docs.len() as f64;
    let mut filled = [0usize; 3];
    let mut out = SplitAssignment::new();
    for group in groups {
        let mut pick = 0;
        let mut best = f64::NEG_INFINITY;
        for p in 0..3 {
            let deficit = ratios[p] * total - filled[p] as f64;
            if deficit > best {
                best = deficit;
                pick = p;
            }
        }
        filled[pick] += group.len();
        for id in group {
            out.insert(id.to_string(), Partition::ALL[pick]);
        }
    }
    Ok(out)
}
