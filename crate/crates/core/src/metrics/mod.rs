//! Segmentation scores: boundary P/R/F1, P_k, Boundary Similarity and
//! bootstrap deviations.

mod boundary;
mod segmentation;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use boundary::{boundary_edit_distance, boundary_similarity, BoundaryEdits, Side};
pub use segmentation::Segmentation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("segmentations cover {reference} and {hypothesis} units")]
    MassMismatch { reference: usize, hypothesis: usize },
    #[error("document of {total} units is too short for window {k}")]
    DegenerateLength { total: usize, k: usize },
    #[error("bad segment masses {0:?}")]
    BadMasses(Vec<usize>),
    #[error("transposition window must be at least 2, got {0}")]
    BadWindow(usize),
    #[error("bootstrap needs at least one document and one resample")]
    TooFewDocuments,
}

pub(crate) fn check_mass(r: &Segmentation, h: &Segmentation) -> Result<(), MetricError> {
    if r.total() != h.total() {
        return Err(MetricError::MassMismatch {
            reference: r.total(),
            hypothesis: h.total(),
        });
    }
    Ok(())
}

/// Boundary confusion counts over internal positions.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryCounts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl BoundaryCounts {
    pub fn between(reference: &Segmentation, hypothesis: &Segmentation) -> Result<Self, MetricError> {
        check_mass(reference, hypothesis)?;
        let r = reference.to_labels();
        let h = hypothesis.to_labels();
        let mut c = Self::default();
        // the last unit is always segment-final on both sides; skip it
        for i in 0..r.len() - 1 {
            match (r[i], h[i]) {
                (true, true) => c.tp += 1,
                (false, true) => c.fp += 1,
                (true, false) => c.fn_ += 1,
                _ => {}
            }
        }
        Ok(c)
    }

    pub fn add(self, o: Self) -> Self {
        Self {
            tp: self.tp + o.tp,
            fp: self.fp + o.fp,
            fn_: self.fn_ + o.fn_,
        }
    }

    pub fn prf(&self) -> Prf {
        let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let p = ratio(self.tp, self.tp + self.fp);
        let r = ratio(self.tp, self.tp + self.fn_);
        let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        Prf { precision: p, recall: r, f1 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prf {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of the positive (boundary) class.
pub fn boundary_prf(reference: &Segmentation, hypothesis: &Segmentation) -> Result<Prf, MetricError> {
    Ok(BoundaryCounts::between(reference, hypothesis)?.prf())
}

/// P_k probe distance.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PkWindow {
    /// Half the mean reference segment mass, rounded, at least 1.
    #[default]
    Auto,
    Fixed(usize),
}

impl PkWindow {
    pub fn resolve(self, reference: &Segmentation) -> usize {
        match self {
            PkWindow::Fixed(k) => k,
            PkWindow::Auto => ((reference.mean_mass() / 2.0).round() as usize).max(1),
        }
    }
}

/// Share of probes `(i, i + k)` on which the two segmentations disagree
/// about "same segment".
pub fn pk(reference: &Segmentation, hypothesis: &Segmentation, window: PkWindow) -> Result<f64, MetricError> {
    check_mass(reference, hypothesis)?;
    let k = window.resolve(reference);
    let total = reference.total();
    if k == 0 || total <= k {
        return Err(MetricError::DegenerateLength { total, k });
    }
    let r = reference.segment_ids();
    let h = hypothesis.segment_ids();
    let probes = total - k;
    let errors = (0..probes)
        .filter(|&i| (r[i] == r[i + k]) != (h[i] == h[i + k]))
        .count();
    Ok(errors as f64 / probes as f64)
}

/// Mean and population standard deviation of a resampled statistic.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BootstrapStat {
    pub mean: f64,
    pub std: f64,
}

/// Resamples `items` with replacement `count` times and evaluates `metric`
/// on each resample.
pub fn bootstrap_std<D, F>(items: &[D], metric: F, count: usize, seed: u64) -> Result<BootstrapStat, MetricError>
where
    F: Fn(&[&D]) -> f64,
{
    if items.is_empty() || count == 0 {
        return Err(MetricError::TooFewDocuments);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut values = Vec::with_capacity(count);
    let mut sample: Vec<&D> = Vec::with_capacity(items.len());
    for _ in 0..count {
        sample.clear();
        sample.extend((0..items.len()).map(|_| &items[rng.gen_range(0..items.len())]));
        values.push(metric(&sample));
    }
    let (mean, std) = mean_std(&values);
    Ok(BootstrapStat { mean, std })
}

/// Mean and population standard deviation; `(0, 0)` when empty.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricConfig {
    pub pk_window: PkWindow,
    pub transposition_window: usize,
    pub bootstrap_count: usize,
    pub bootstrap_seed: u64,
}

impl Default for MetricConfig {
    fn default() -> Self {
        Self {
            pk_window: PkWindow::Auto,
            transposition_window: 2,
            bootstrap_count: 100,
            bootstrap_seed: 0,
        }
    }
}

/// Point estimate plus bootstrap deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scored {
    pub value: f64,
    pub std: f64,
}

/// Corpus-level scores. P/R/F1 pool boundary counts over documents; P_k and
/// B are averaged per document. Documents too short for the P_k window are
/// left out of the P_k average.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub documents: usize,
    pub precision: Scored,
    pub recall: Scored,
    pub f1: Scored,
    pub pk: Scored,
    pub boundary_similarity: Scored,
}

struct DocScores {
    counts: BoundaryCounts,
    pk: Option<f64>,
    b: f64,
}

fn aggregate(docs: &[&DocScores]) -> [f64; 5] {
    let counts = docs.iter().fold(BoundaryCounts::default(), |a, d| a.add(d.counts));
    let prf = counts.prf();
    let pks: Vec<f64> = docs.iter().filter_map(|d| d.pk).collect();
    let bs: Vec<f64> = docs.iter().map(|d| d.b).collect();
    [prf.precision, prf.recall, prf.f1, mean_std(&pks).0, mean_std(&bs).0]
}

/// Scores `(reference, hypothesis)` pairs.
pub fn evaluate(pairs: &[(Segmentation, Segmentation)], cfg: &MetricConfig) -> Result<MetricReport, MetricError> {
    if pairs.is_empty() {
        return Err(MetricError::TooFewDocuments);
    }
    let mut docs = Vec::with_capacity(pairs.len());
    for (r, h) in pairs {
        let pk = match pk(r, h, cfg.pk_window) {
            Ok(v) => Some(v),
            Err(MetricError::DegenerateLength { .. }) => None,
            Err(e) => return Err(e),
        };
        docs.push(DocScores {
            counts: BoundaryCounts::between(r, h)?,
            pk,
            b: boundary_similarity(r, h, cfg.transposition_window)?,
        });
    }
    let all: Vec<&DocScores> = docs.iter().collect();
    let point = aggregate(&all);
    let mut stds = [0.0; 5];
    for (m, std) in stds.iter_mut().enumerate() {
        *std = bootstrap_std(&docs, |s| aggregate(s)[m], cfg.bootstrap_count, cfg.bootstrap_seed)?.std;
    }
    let s = |m: usize| Scored {
        value: point[m],
        std: stds[m],
    };
    Ok(MetricReport {
        documents: pairs.len(),
        precision: s(0),
        recall: s(1),
        f1: s(2),
        pk: s(3),
        boundary_similarity: s(4),
    })
}
