//! Boundary edit distance and Boundary Similarity.

use serde::{Deserialize, Serialize};

use super::{check_mass, MetricError, Segmentation};

/// Which segmentation an unpaired boundary belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Side {
    Reference,
    Hypothesis,
}

/// Edit operations turning one boundary set into the other.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryEdits {
    pub matches: Vec<usize>,
    /// `(reference position, hypothesis position)` near misses.
    pub transpositions: Vec<(usize, usize)>,
    pub additions: Vec<(usize, Side)>,
}

impl BoundaryEdits {
    /// `|A| + Σ |offset| / n_t`.
    pub fn cost(&self, n_t: usize) -> f64 {
        self.additions.len() as f64
            + self
                .transpositions
                .iter()
                .map(|&(r, h)| r.abs_diff(h) as f64 / n_t as f64)
                .sum::<f64>()
    }

    pub fn operations(&self) -> usize {
        self.matches.len() + self.transpositions.len() + self.additions.len()
    }
}

/// Pairs reference and hypothesis boundary positions.
///
/// Exact matches are taken first. Remaining boundaries are scanned left to
/// right; each unpaired one is joined to the nearest unpaired boundary of
/// the other side lying to its right at offset `< n_t` (ties go left).
/// Whatever is left over counts as an addition.
pub fn boundary_edit_distance(ref_bounds: &[usize], hyp_bounds: &[usize], n_t: usize) -> BoundaryEdits {
    let mut r: Vec<usize> = ref_bounds.to_vec();
    let mut h: Vec<usize> = hyp_bounds.to_vec();
    r.sort_unstable();
    r.dedup();
    h.sort_unstable();
    h.dedup();

    let mut edits = BoundaryEdits::default();
    let mut rest: Vec<(usize, Side)> = Vec::new();
    let (mut i, mut j) = (0, 0);
    while i < r.len() || j < h.len() {
        match (r.get(i), h.get(j)) {
            (Some(&a), Some(&b)) if a == b => {
                edits.matches.push(a);
                i += 1;
                j += 1;
            }
            (Some(&a), Some(&b)) if a < b => {
                rest.push((a, Side::Reference));
                i += 1;
            }
            (Some(_), Some(&b)) => {
                rest.push((b, Side::Hypothesis));
                j += 1;
            }
            (Some(&a), None) => {
                rest.push((a, Side::Reference));
                i += 1;
            }
            (None, Some(&b)) => {
                rest.push((b, Side::Hypothesis));
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }

    let mut used = vec![false; rest.len()];
    for a in 0..rest.len() {
        if used[a] {
            continue;
        }
        let (pa, sa) = rest[a];
        let partner = (a + 1..rest.len())
            .take_while(|&b| rest[b].0 < pa + n_t)
            .filter(|&b| !used[b] && rest[b].1 != sa)
            .min_by_key(|&b| rest[b].0 - pa);
        match partner {
            Some(b) => {
                used[a] = true;
                used[b] = true;
                let pb = rest[b].0;
                edits.transpositions.push(match sa {
                    Side::Reference => (pa, pb),
                    Side::Hypothesis => (pb, pa),
                });
            }
            None => {
                used[a] = true;
                edits.additions.push((pa, sa));
            }
        }
    }
    edits
}

/// `1 - cost / operations`; vacuously 1 when neither side has a boundary.
pub fn boundary_similarity(reference: &Segmentation, hypothesis: &Segmentation, n_t: usize) -> Result<f64, MetricError> {
    check_mass(reference, hypothesis)?;
    if n_t < 2 {
        return Err(MetricError::BadWindow(n_t));
    }
    let edits = boundary_edit_distance(&reference.boundary_positions(), &hypothesis.boundary_positions(), n_t);
    Ok(similarity_from_edits(&edits, n_t))
}

pub(crate) fn similarity_from_edits(edits: &BoundaryEdits, n_t: usize) -> f64 {
    let ops = edits.operations();
    if ops == 0 {
        return 1.0;
    }
    1.0 - edits.cost(n_t) / ops as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn worked_examples() {
        let e = boundary_edit_distance(&[3, 7], &[3, 7], 2);
        assert_eq!(e.matches, vec![3, 7]);
        assert!(e.additions.is_empty() && e.transpositions.is_empty());

        let e = boundary_edit_distance(&[3], &[4], 2);
        assert_eq!(e.transpositions, vec![(3, 4)]);

        let e = boundary_edit_distance(&[3, 7], &[4, 9], 2);
        assert_eq!(e.transpositions, vec![(3, 4)]);
        assert_eq!(e.additions, vec![(7, Side::Reference), (9, Side::Hypothesis)]);

        let r = Segmentation::from_masses(vec![3, 3]).unwrap();
        let h = Segmentation::from_masses(vec![4, 2]).unwrap();
        assert_eq!(boundary_similarity(&r, &h, 2).unwrap(), 0.5);
        let one = Segmentation::from_masses(vec![6]).unwrap();
        assert_eq!(boundary_similarity(&one, &one, 2).unwrap(), 1.0);
        assert_eq!(boundary_similarity(&r, &one, 2).unwrap(), 0.0);
    }

    #[test]
    fn hypothesis_side_transposition_orientation() {
        let e = boundary_edit_distance(&[5], &[4], 2);
        assert_eq!(e.transpositions, vec![(5, 4)]);
    }
}
