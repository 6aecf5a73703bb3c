//! Central-difference gradient verification. Analytic gradient collection and
//! the finite-difference comparison are separate stages, so tests can corrupt
//! the gradients in between and prove the comparison actually detects faults.

use super::params::ParamSet;
use super::tape::{Tape, Var};
use super::{Elem, Tensor};
use crate::error::Result;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub eps: f64,
    /// Maximum accepted relative error, |a - fd| / max(1, |a|, |fd|).
    pub tolerance: f64,
    /// Parameters with more coordinates than this get a random subsample.
    pub max_coords_per_param: usize,
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            eps: 1e-5,
            tolerance: 1e-4,
            max_coords_per_param: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_err: f64,
    pub n_checked: usize,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub checks: Vec<ParamCheck>,
    pub max_rel_err: f64,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_err < self.tolerance
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.checks
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }
}

/// Scalar loss of `f` at the current parameters.
pub fn loss_value<E, F>(params: &ParamSet<E>, f: &F) -> Result<f64>
where
    E: Elem,
    F: Fn(&ParamSet<E>) -> Result<(Tape<E>, Var)>,
{
    let (tape, loss) = f(params)?;
    Ok(tape.value(loss).scalar().as_f64())
}

/// Backward-pass gradients of `f` for every parameter.
pub fn analytic_param_grads<E, F>(params: &ParamSet<E>, f: &F) -> Result<Vec<Option<Tensor<E>>>>
where
    E: Elem,
    F: Fn(&ParamSet<E>) -> Result<(Tape<E>, Var)>,
{
    let (tape, loss) = f(params)?;
    tape.backward_params(loss, params.len())
}

/// Compares supplied gradients against central differences of `f`. Parameters
/// are perturbed in place and restored. Coordinate subsampling is seeded, so
/// reports are reproducible.
pub fn compare_with_fd<E, F>(
    params: &mut ParamSet<E>,
    f: &F,
    grads: &[Option<Tensor<E>>],
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    E: Elem,
    F: Fn(&ParamSet<E>) -> Result<(Tape<E>, Var)>,
{
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut checks = Vec::with_capacity(params.len());
    for idx in 0..params.len() {
        let id = super::params::ParamId(idx);
        let numel = params.get(id).numel();
        let coords: Vec<usize> = if numel <= cfg.max_coords_per_param {
            (0..numel).collect()
        } else {
            let mut picked =
                rand::seq::index::sample(&mut rng, numel, cfg.max_coords_per_param).into_vec();
            picked.sort_unstable();
            picked
        };
        let mut max_rel_err = 0.0f64;
        for &k in &coords {
            let original = params.get(id).data()[k];
            params.get_mut(id).data_mut()[k] = E::from_f64(original.as_f64() + cfg.eps);
            let up = loss_value(params, f)?;
            params.get_mut(id).data_mut()[k] = E::from_f64(original.as_f64() - cfg.eps);
            let down = loss_value(params, f)?;
            params.get_mut(id).data_mut()[k] = original;

            let fd = (up - down) / (2.0 * cfg.eps);
            let analytic = grads[idx]
                .as_ref()
                .map_or(0.0, |g| g.data()[k].as_f64());
            let rel = (analytic - fd).abs() / 1f64.max(analytic.abs()).max(fd.abs());
            max_rel_err = max_rel_err.max(rel);
        }
        checks.push(ParamCheck {
            name: params.name(id).to_string(),
            max_rel_err,
            n_checked: coords.len(),
        });
    }
    let max_rel_err = checks
        .iter()
        .map(|c| c.max_rel_err)
        .fold(0.0f64, f64::max);
    Ok(GradCheckReport {
        checks,
        max_rel_err,
        tolerance: cfg.tolerance,
    })
}

/// Full check: analytic gradients vs central differences.
pub fn grad_check<E, F>(
    params: &mut ParamSet<E>,
    f: &F,
    cfg: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    E: Elem,
    F: Fn(&ParamSet<E>) -> Result<(Tape<E>, Var)>,
{
    let grads = analytic_param_grads(params, f)?;
    compare_with_fd(params, f, &grads, cfg)
}
