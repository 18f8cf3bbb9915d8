use serde::{Deserialize, Serialize};

use super::MetricError;

/// A linear segmentation stored as segment masses (sentence counts).
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Segmentation {
    masses: Vec<usize>,
}

impl Segmentation {
    pub fn from_masses(masses: Vec<usize>) -> Result<Self, MetricError> {
        if masses.is_empty() || masses.contains(&0) {
            return Err(MetricError::BadMasses(masses));
        }
        Ok(Self { masses })
    }

    /// Builds from segment-final labels. The last unit always closes a
    /// segment, whatever its label says.
    pub fn from_labels(labels: &[bool]) -> Result<Self, MetricError> {
        if labels.is_empty() {
            return Err(MetricError::BadMasses(Vec::new()));
        }
        let mut masses = Vec::new();
        let mut run = 0;
        for (i, &l) in labels.iter().enumerate() {
            run += 1;
            if l || i + 1 == labels.len() {
                masses.push(run);
                run = 0;
            }
        }
        Ok(Self { masses })
    }

    pub fn masses(&self) -> &[usize] {
        &self.masses
    }

    pub fn total(&self) -> usize {
        self.masses.iter().sum()
    }

    pub fn segment_count(&self) -> usize {
        self.masses.len()
    }

    /// Segment-final labels; the last entry is always `true`.
    pub fn to_labels(&self) -> Vec<bool> {
        let mut out = Vec::with_capacity(self.total());
        for &m in &self.masses {
            out.extend(std::iter::repeat_n(false, m - 1));
            out.push(true);
        }
        out
    }

    /// Internal boundary positions as gap indices in `[1, total - 1]`:
    /// position `p` separates unit `p - 1` from unit `p`.
    pub fn boundary_positions(&self) -> Vec<usize> {
        let mut acc = 0;
        let mut out = Vec::with_capacity(self.masses.len().saturating_sub(1));
        for &m in &self.masses[..self.masses.len() - 1] {
            acc += m;
            out.push(acc);
        }
        out
    }

    /// Segment index of every unit.
    pub fn segment_ids(&self) -> Vec<usize> {
        self.masses
            .iter()
            .enumerate()
            .flat_map(|(s, &m)| std::iter::repeat_n(s, m))
            .collect()
    }

    pub fn mean_mass(&self) -> f64 {
        self.total() as f64 / self.masses.len() as f64
    }
}
