//! Central finite-difference verification of reverse-mode gradients.

use super::{Scalar, Tape, Tensor, Var};
use crate::error::Result;

/// Outcome of one gradient check. Failures are reported, never thrown.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub name: String,
    pub max_rel_err: f64,
    /// (input index, flat coordinate) of the worst disagreement.
    pub worst: (usize, usize),
    pub checked: usize,
    /// Coordinates excluded because the perturbation straddles a ReLU kink
    /// (the two-step finite differences disagree with each other).
    pub excluded: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }
}

impl std::fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "{}: {} (max rel err {:.3e} over {} coords, worst at input {} coord {}, tol {:.1e})",
            self.name,
            if self.passed() { "pass" } else { "FAIL" },
            self.max_rel_err,
            self.checked,
            self.worst.0,
            self.worst.1,
            self.tolerance
        )
    }
}

/// Compare tape gradients against central finite differences.
///
/// `build` must construct the graph from scratch on every call (any internal
/// state such as batch-norm running statistics must be fresh per call) and
/// return a scalar loss. Every entry of every input is perturbed by ±h.
pub fn grad_check<E: Scalar>(
    name: &str,
    inputs: &[Tensor<E>],
    h: f64,
    tolerance: f64,
    build: impl Fn(&mut Tape<E>, &[Var]) -> Result<Var>,
) -> Result<GradCheckReport> {
    // Reverse-mode gradients in one pass.
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.leaf(t.clone(), true)).collect();
    let loss = build(&mut tape, &vars)?;
    tape.backward(loss)?;
    let analytic: Vec<Tensor<E>> = vars
        .iter()
        .zip(inputs)
        .map(|(&v, t)| tape.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape)))
        .collect();

    let eval = |perturbed: &[Tensor<E>]| -> Result<f64> {
        let mut tape = Tape::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| tape.leaf(t.clone(), false)).collect();
        let loss = build(&mut tape, &vars)?;
        Ok(tape.value(loss).data[0].to_f64())
    };

    let mut max_rel = 0.0f64;
    let mut worst = (0usize, 0usize);
    let mut checked = 0usize;
    let mut excluded = 0usize;
    let mut work: Vec<Tensor<E>> = inputs.to_vec();
    for (ti, t) in inputs.iter().enumerate() {
        for j in 0..t.len() {
            let orig = t.data[j];
            let mut fd_at = |step: f64| -> Result<f64> {
                work[ti].data[j] = orig + E::from_f64(step);
                let up = eval(&work)?;
                work[ti].data[j] = orig - E::from_f64(step);
                let down = eval(&work)?;
                work[ti].data[j] = orig;
                Ok((up - down) / (2.0 * step))
            };
            let fd = fd_at(h)?;
            let ad = analytic[ti].data[j].to_f64();
            let rel = rel_err(ad, fd);
            if rel >= tolerance {
                // A kink under the perturbation makes the two-step estimate
                // inconsistent with the one-step estimate; a genuine gradient
                // bug leaves them agreeing with each other.
                let fd2 = fd_at(2.0 * h)?;
                if rel_err(fd, fd2) > 10.0 * tolerance {
                    excluded += 1;
                    continue;
                }
            }
            if rel > max_rel {
                max_rel = rel;
                worst = (ti, j);
            }
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        name: name.to_string(),
        max_rel_err: max_rel,
        worst,
        checked,
        excluded,
        tolerance,
    })
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-6)
}


impl<E: Scalar> Tape<E> {
    /// Reduce a tensor to a scalar through a fixed pseudo-random weighting,
    /// so gradient checks exercise non-uniform output sensitivities.
    pub fn sum_all_weighted(&mut self, x: Var, seed: u64) -> Var {
        use rand::SeedableRng;
        let shape = self.value(x).shape;
        let w = Tensor::rand_uniform(
            shape,
            0.25,
            1.75,
            &mut rand_chacha::ChaCha8Rng::seed_from_u64(seed),
        );
        let wv = self.leaf(w, false);
        let prod = self.mul(x, wv).expect("shapes match by construction");
        self.sum_all(prod)
    }
}
