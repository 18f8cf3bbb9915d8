use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{AutogradError, Graph, Tensor, Var};

/// Options for [`grad_check`].
#[derive(Clone, Debug)]
pub struct GradCheckOptions {
    /// Relative step: `h = step · max(1, |x|)`.
    pub step: f64,
    /// Check at most this many coordinates per input (all when `None`).
    pub max_coords_per_input: Option<usize>,
    /// Gradients smaller than this are compared absolutely at this scale.
    pub floor: f64,
    pub seed: u64,
    /// Richardson-extrapolate central differences at `h` and `h/2`, which
    /// cancels the `h^2` error term at twice the evaluations.
    pub extrapolate: bool,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-4,
            max_coords_per_input: None,
            floor: 1e-3,
            seed: 0,
            extrapolate: false,
        }
    }
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// `(input, coordinate, analytic, numeric)` of the worst coordinate.
    pub worst: Option<(usize, usize, f64, f64)>,
}

/// Compares analytic gradients of a scalar-valued graph builder against
/// central finite differences at 64-bit.
///
/// `build` receives a fresh graph plus one trainable leaf per input and
/// must return a scalar node. The error per coordinate is
/// `|a - n| / max(|a|, |n|, floor)`.
pub fn grad_check<F>(build: F, inputs: &[Tensor<f64>], opts: &GradCheckOptions) -> Result<GradCheckReport, AutogradError>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var, AutogradError>,
{
    let eval = |values: &[Tensor<f64>]| -> Result<f64, AutogradError> {
        let mut g = Graph::new();
        let vars: Vec<Var> = values.iter().map(|t| g.param(t.clone())).collect();
        let out = build(&mut g, &vars)?;
        if g.value(out).numel() != 1 {
            return Err(AutogradError::NonScalarLoss(g.value(out).shape().to_vec()));
        }
        Ok(g.value(out).data()[0])
    };

    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.param(t.clone())).collect();
    let out = build(&mut g, &vars)?;
    g.backward(out)?;
    let analytic: Vec<Vec<f64>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| g.grad(v).map_or_else(|| vec![0.0; t.numel()], |x| x.to_vec()))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        coords_checked: 0,
        worst: None,
    };
    let mut current = inputs.to_vec();
    for (which, input) in inputs.iter().enumerate() {
        let coords: Vec<usize> = match opts.max_coords_per_input {
            Some(k) if k < input.numel() => {
                let mut c = sample(&mut rng, input.numel(), k).into_vec();
                c.sort_unstable();
                c
            }
            _ => (0..input.numel()).collect(),
        };
        for c in coords {
            let x = input.data()[c];
            let h = opts.step * x.abs().max(1.0);
            let mut central = |h: f64| -> Result<f64, AutogradError> {
                current[which] = input.with_value(c, x + h);
                let plus = eval(&current)?;
                current[which] = input.with_value(c, x - h);
                let minus = eval(&current)?;
                current[which] = input.clone();
                Ok((plus - minus) / (2.0 * h))
            };
            let numeric = if opts.extrapolate {
                let coarse = central(h)?;
                (4.0 * central(h / 2.0)? - coarse) / 3.0
            } else {
                central(h)?
            };
            let a = analytic[which][c];
            let err = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            report.coords_checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((which, c, a, numeric));
            }
        }
    }
    Ok(report)
}
