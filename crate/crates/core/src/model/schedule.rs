use serde::{Deserialize, Serialize};

use super::ModelError;
use crate::autograd::AttnMask;

/// Attention visibility of the document encoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum MaskSchedule {
    /// Every layer sees the whole document.
    Offline { layers: usize },
    /// Layer `l <= alpha.len()` lets position `i` see `j <= i + alpha[l-1]`;
    /// later layers are causal.
    Online { alpha: Vec<usize>, layers: usize },
}

/// Future-context presets: `(c, alpha)`.
pub const PRESETS: &[(usize, &[usize])] = &[
    (0, &[]),
    (1, &[1]),
    (3, &[2, 1]),
    (5, &[2, 2, 1]),
    (8, &[2, 2, 2, 2]),
    (10, &[2, 2, 2, 2, 2]),
    (20, &[4, 4, 4, 2, 2, 2, 2]),
];

impl MaskSchedule {
    pub fn offline(layers: usize) -> Self {
        MaskSchedule::Offline { layers }
    }

    pub fn online(alpha: Vec<usize>, layers: usize) -> Result<Self, ModelError> {
        let s = MaskSchedule::Online { alpha, layers };
        s.validate()?;
        Ok(s)
    }

    pub fn causal(layers: usize) -> Self {
        MaskSchedule::Online { alpha: Vec::new(), layers }
    }

    /// Preset schedule for future context `c`.
    pub fn preset(c: usize, layers: usize) -> Result<Self, ModelError> {
        let alpha = PRESETS
            .iter()
            .find(|(pc, _)| *pc == c)
            .ok_or_else(|| ModelError::BadSchedule(format!("no preset for c = {c}")))?
            .1;
        Self::online(alpha.to_vec(), layers)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        match self {
            MaskSchedule::Offline { layers } | MaskSchedule::Online { layers, .. } if *layers == 0 => {
                Err(ModelError::BadSchedule("schedule needs at least one layer".into()))
            }
            MaskSchedule::Online { alpha, layers } if alpha.len() > *layers => Err(ModelError::BadSchedule(format!(
                "{} offsets for {} layers",
                alpha.len(),
                layers
            ))),
            _ => Ok(()),
        }
    }

    pub fn layers(&self) -> usize {
        match self {
            MaskSchedule::Offline { layers } | MaskSchedule::Online { layers, .. } => *layers,
        }
    }

    pub fn with_layers(&self, layers: usize) -> Result<Self, ModelError> {
        let s = match self {
            MaskSchedule::Offline { .. } => MaskSchedule::Offline { layers },
            MaskSchedule::Online { alpha, .. } => MaskSchedule::Online { alpha: alpha.clone(), layers },
        };
        s.validate()?;
        Ok(s)
    }

    pub fn is_online(&self) -> bool {
        matches!(self, MaskSchedule::Online { .. })
    }

    pub fn alpha(&self) -> &[usize] {
        match self {
            MaskSchedule::Offline { .. } => &[],
            MaskSchedule::Online { alpha, .. } => alpha,
        }
    }

    /// Total future context `c`; `None` when unbounded.
    pub fn future_context(&self) -> Option<usize> {
        match self {
            MaskSchedule::Offline { .. } => None,
            MaskSchedule::Online { alpha, .. } => Some(alpha.iter().sum()),
        }
    }

    fn check_layer(&self, layer: usize) -> Result<(), ModelError> {
        if layer == 0 || layer > self.layers() {
            return Err(ModelError::BadSchedule(format!("layer {layer} outside 1..={}", self.layers())));
        }
        Ok(())
    }

    /// Mask of 1-based `layer` for a document of `n` sentences.
    pub fn mask_for_layer(&self, layer: usize, n: usize) -> Result<AttnMask, ModelError> {
        self.check_layer(layer)?;
        Ok(match self {
            MaskSchedule::Offline { .. } => AttnMask::Full,
            MaskSchedule::Online { alpha, .. } => AttnMask::right_offset(n, alpha.get(layer - 1).copied().unwrap_or(0)),
        })
    }

    /// Future positions visible after `after_layer` layers; `None` offline.
    pub fn receptive_field(&self, after_layer: usize) -> Option<usize> {
        let alpha = match self {
            MaskSchedule::Offline { .. } => return None,
            MaskSchedule::Online { alpha, .. } => alpha,
        };
        Some(alpha.iter().take(after_layer).sum())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bits(m: &AttnMask, n: usize) -> Vec<Vec<bool>> {
        (0..n).map(|i| (0..n).map(|j| m.allows(i, j)).collect()).collect()
    }

    #[test]
    fn layer_masks() {
        let s = MaskSchedule::online(vec![2, 1], 4).unwrap();
        let m = s.mask_for_layer(1, 5).unwrap();
        assert_eq!(bits(&m, 5)[0], vec![true, true, true, false, false]);
        let m = s.mask_for_layer(2, 5).unwrap();
        assert_eq!(bits(&m, 5)[0], vec![true, true, false, false, false]);
        let m = s.mask_for_layer(3, 5).unwrap();
        assert_eq!(bits(&m, 5)[2], vec![true, true, true, false, false]);

        let c = MaskSchedule::causal(3);
        for l in 1..=3 {
            let b = bits(&c.mask_for_layer(l, 4).unwrap(), 4);
            assert!((0..4).all(|i| (0..4).all(|j| b[i][j] == (j <= i))));
        }
        let off = MaskSchedule::offline(2).mask_for_layer(2, 3).unwrap();
        assert!(bits(&off, 3).iter().flatten().all(|&x| x));
        assert!(s.mask_for_layer(5, 3).is_err());
        assert!(s.mask_for_layer(0, 3).is_err());
    }

    #[test]
    fn receptive_fields() {
        let s = MaskSchedule::online(vec![2, 2, 1], 12).unwrap();
        assert_eq!(s.receptive_field(3), Some(5));
        assert_eq!(s.receptive_field(1), Some(2));
        assert_eq!(s.receptive_field(12), Some(5));
        assert_eq!(MaskSchedule::causal(4).receptive_field(4), Some(0));
        let big = MaskSchedule::preset(20, 12).unwrap();
        assert_eq!(big.receptive_field(7), Some(20));
        assert_eq!(MaskSchedule::offline(4).receptive_field(1), None);
        for &(c, alpha) in PRESETS {
            let s = MaskSchedule::preset(c, 12).unwrap();
            assert_eq!(s.future_context(), Some(c));
            assert_eq!(s.alpha(), alpha);
            let rf: Vec<usize> = (1..=12).map(|l| s.receptive_field(l).unwrap()).collect();
            assert!(rf.windows(2).all(|w| w[0] <= w[1]));
            assert!(rf[alpha.len().max(1) - 1..].iter().all(|&x| x == c));
        }
    }

    #[test]
    fn invalid_schedules() {
        assert!(MaskSchedule::online(vec![1; 5], 4).is_err());
        assert!(MaskSchedule::preset(4, 12).is_err());
        assert!(MaskSchedule::offline(0).validate().is_err());
    }

    #[test]
    fn serde_shape() {
        let s = MaskSchedule::online(vec![2, 1], 4).unwrap();
        let j = serde_json::to_string(&s).unwrap();
        assert_eq!(j, r#"{"mode":"online","alpha":[2,1],"layers":4}"#);
        assert_eq!(serde_json::from_str::<MaskSchedule>(&j).unwrap(), s);
    }
}
