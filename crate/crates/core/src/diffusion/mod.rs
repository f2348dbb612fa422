//! The boundary diffusion
//!
//! `dY = sqrt(kappa Y (1 - Y) / 2) dB + (1 - 2Y) ds`,
//! `d alpha = ds / Y`, `d beta = ds / (1 - Y)`,
//!
//! simulated directly with Feynman-Kac weights `exp(-w1 alpha - w2 beta)`,
//! and the deterministic checks that go with it.

mod pde;

pub use pde::{solve_h_pde, InitialLayer, PdeGrid, PdeSpec};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exponents::{boundary_exponents, g_unchecked, lambda_kappa, DerivativeWeights, ExponentParams};
use crate::mc;
use crate::rng::{self, Engine};
use crate::stats::MonteCarloEstimate;

pub const DEFAULT_DS_MAX: f64 = 1e-3;
pub const DEFAULT_ABSORB_TOL: f64 = 1e-6;

/// Near the boundary `ds <= BOUNDARY_FACTOR * min(y, 1 - y)`.
pub const BOUNDARY_FACTOR: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdeParams {
    pub kappa: f64,
    pub weights: DerivativeWeights,
    pub ds_max: f64,
    pub absorb_tol: f64,
    pub seed: u64,
}

impl SdeParams {
    pub fn new(kappa: f64, weights: DerivativeWeights, seed: u64) -> Result<Self> {
        Self::with_steps(kappa, weights, DEFAULT_DS_MAX, DEFAULT_ABSORB_TOL, seed)
    }

    pub fn with_steps(
        kappa: f64,
        weights: DerivativeWeights,
        ds_max: f64,
        absorb_tol: f64,
        seed: u64,
    ) -> Result<Self> {
        if !(kappa.is_finite() && kappa > 0.0) {
            return Err(Error::Domain(format!("kappa must be positive, got {kappa}")));
        }
        if !(ds_max > 0.0 && ds_max <= 0.01) {
            return Err(Error::Domain(format!("ds_max must lie in (0, 0.01], got {ds_max}")));
        }
        if !(absorb_tol > 0.0 && absorb_tol < 0.01) {
            return Err(Error::Domain(format!("absorb_tol must lie in (0, 0.01), got {absorb_tol}")));
        }
        Ok(Self { kappa, weights, ds_max, absorb_tol, seed })
    }

    pub fn exponent_params(&self) -> ExponentParams {
        ExponentParams { kappa: self.kappa, w1: self.weights.w1, w2: self.weights.w2 }
    }

    /// `lambda_kappa(w1, w2)`.
    pub fn lambda(&self) -> f64 {
        lambda_kappa(&self.exponent_params())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffusionState {
    pub y: f64,
    pub alpha: f64,
    pub beta: f64,
    pub s: f64,
    pub absorbed: bool,
}

impl DiffusionState {
    pub fn new(x: f64) -> Self {
        Self { y: x, alpha: 0.0, beta: 0.0, s: 0.0, absorbed: false }
    }

    /// Adaptive step: `min(ds_max, 0.1 * min(y, 1 - y))`.
    pub fn step_size(&self, params: &SdeParams) -> f64 {
        params.ds_max.min(BOUNDARY_FACTOR * self.y.min(1.0 - self.y))
    }

    /// One Milstein step of length `ds` with Brownian increment `db ~ N(0, ds)`.
    pub fn step(&mut self, params: &SdeParams, ds: f64, db: f64) {
        debug_assert!(!self.absorbed);
        let y = self.y;
        let drift = 1.0 - 2.0 * y;
        let sigma = (params.kappa * y * (1.0 - y) / 2.0).sqrt();
        // 0.5 * sigma * sigma' = kappa (1 - 2y) / 8
        let milstein = params.kappa * drift / 8.0 * (db * db - ds);
        let next = (y + drift * ds + sigma * db + milstein).clamp(0.0, 1.0);
        let mid = 0.5 * (y + next);
        self.alpha += ds / mid;
        self.beta += ds / (1.0 - mid);
        self.y = next;
        self.s += ds;
        if !(next > params.absorb_tol && next < 1.0 - params.absorb_tol) {
            self.absorbed = true;
        }
    }

    /// `exp(-w1 alpha - w2 beta)` for a live path, 0 once absorbed.
    pub fn weight(&self, w: &DerivativeWeights) -> f64 {
        if self.absorbed {
            0.0
        } else {
            (-w.exponent(self.alpha, self.beta)).exp()
        }
    }
}

fn check_start(x: f64, params: &SdeParams) -> Result<()> {
    if !(x > params.absorb_tol && x < 1.0 - params.absorb_tol) {
        return Err(Error::Domain(format!(
            "start point must lie in (absorb_tol, 1 - absorb_tol), got {x}"
        )));
    }
    Ok(())
}

fn check_times(times: &[f64]) -> Result<()> {
    if times.is_empty() || times.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Domain(format!("times must be positive, got {times:?}")));
    }
    if times.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Domain(format!("times must be strictly increasing, got {times:?}")));
    }
    Ok(())
}

/// Runs one path from `x`, landing exactly on every checkpoint, and calls
/// `visit(j, state)` there. Absorbed paths are still visited (with the
/// absorbed flag set) so callers score them 0.
fn run_path<R: Rng>(
    params: &SdeParams,
    x: f64,
    rng: &mut R,
    checkpoints: &[f64],
    mut visit: impl FnMut(usize, &DiffusionState),
) {
    let mut st = DiffusionState::new(x);
    for (j, &target) in checkpoints.iter().enumerate() {
        while !st.absorbed && st.s < target {
            let ds = st.step_size(params).min(target - st.s);
            let z: f64 = rng.sample(StandardNormal);
            st.step(params, ds, ds.sqrt() * z);
            if target - st.s < 1e-12 {
                st.s = target;
            }
        }
        visit(j, &st);
    }
}

/// The state at `s` of path `index`.
pub fn sample_state(params: &SdeParams, x: f64, s: f64, index: u64) -> Result<DiffusionState> {
    check_start(x, params)?;
    check_times(&[s])?;
    let mut rng = rng::stream(Engine::Diffusion, params.seed, index);
    let mut out = DiffusionState::new(x);
    run_path(params, x, &mut rng, &[s], |_, st| out = *st);
    Ok(out)
}

/// `n` end states at `s`, paths `0..n`.
pub fn sample_states(params: &SdeParams, x: f64, s: f64, n: u64) -> Result<Vec<DiffusionState>> {
    check_start(x, params)?;
    check_times(&[s])?;
    Ok(mc::collect(n, |i| {
        let mut rng = rng::stream(Engine::Diffusion, params.seed, i);
        let mut out = DiffusionState::new(x);
        run_path(params, x, &mut rng, &[s], |_, st| out = *st);
        out
    }))
}

/// Which function of `Y_s` multiplies the Feynman-Kac weight.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Observable {
    /// `F = 1`, giving `h_1`.
    One,
    /// `F = G`, giving `h_G = exp(-lambda s) G(x)`.
    G,
}

/// Estimates `h_F(x, s)` for both observables at once over `times`, from
/// the same paths. Returns `[(h_1, h_G); times.len()]`.
pub fn estimate_h_grid(
    params: &SdeParams,
    x: f64,
    times: &[f64],
    n: u64,
) -> Result<Vec<(MonteCarloEstimate, MonteCarloEstimate)>> {
    check_start(x, params)?;
    check_times(times)?;
    if n == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    let (a1, a2) = boundary_exponents(&params.exponent_params());
    let m = times.len();
    let est = mc::estimate_many(params.seed, n, 2 * m, |i, out| {
        let mut rng = rng::stream(Engine::Diffusion, params.seed, i);
        run_path(params, x, &mut rng, times, |j, st| {
            let w = st.weight(&params.weights);
            out[2 * j] = w;
            out[2 * j + 1] = if w > 0.0 { w * g_unchecked(a1, a2, st.y) } else { 0.0 };
        });
    });
    Ok(est.chunks(2).map(|c| (c[0], c[1])).collect())
}

/// Monte Carlo estimate of `h_F(x, s)`.
pub fn estimate_h(
    params: &SdeParams,
    observable: Observable,
    x: f64,
    s: f64,
    n: u64,
) -> Result<MonteCarloEstimate> {
    let (one, g) = estimate_h_grid(params, x, &[s], n)?[0];
    Ok(match observable {
        Observable::One => one,
        Observable::G => g,
    })
}

/// `h_G(x, s)`; the exact value is `exp(-lambda s) G(x)`.
pub fn estimate_hg(params: &SdeParams, x: f64, s: f64, n: u64) -> Result<MonteCarloEstimate> {
    estimate_h(params, Observable::G, x, s, n)
}

/// `h_1(x, s)` through the diffusion representation.
pub fn estimate_h1_diffusion(params: &SdeParams, x: f64, s: f64, n: u64) -> Result<MonteCarloEstimate> {
    estimate_h(params, Observable::One, x, s, n)
}

/// Means of `Q_s = h_G(Y_s, s0 - s) exp(-w1 alpha(s) - w2 beta(s))` at each
/// checkpoint `s < s0`, with the closed form `h_G(y, r) = exp(-lambda r) G(y)`.
pub fn martingale_check(
    params: &SdeParams,
    x: f64,
    s0: f64,
    checkpoints: &[f64],
    n: u64,
) -> Result<Vec<MonteCarloEstimate>> {
    check_start(x, params)?;
    check_times(checkpoints)?;
    if checkpoints.last().is_some_and(|&c| c >= s0) {
        return Err(Error::Domain(format!("checkpoints must lie below s0 = {s0}")));
    }
    if n == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    let (a1, a2) = boundary_exponents(&params.exponent_params());
    let lambda = params.lambda();
    Ok(mc::estimate_many(params.seed, n, checkpoints.len(), |i, out| {
        let mut rng = rng::stream(Engine::Diffusion, params.seed, i);
        run_path(params, x, &mut rng, checkpoints, |j, st| {
            let w = st.weight(&params.weights);
            out[j] = if w > 0.0 {
                (-lambda * (s0 - checkpoints[j])).exp() * g_unchecked(a1, a2, st.y) * w
            } else {
                0.0
            };
        });
    }))
}

/// Largest relative residual of `exp(-lambda s) G(x)` in the backward
/// equation, over `xs`, using the closed-form derivatives of `G`.
pub fn eigen_residual(p: &ExponentParams, xs: &[f64]) -> Result<f64> {
    if let Some(x) = xs.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
        return Err(Error::Domain(format!("residual points must lie in (0, 1), got {x}")));
    }
    let (a1, a2) = boundary_exponents(p);
    let lambda = lambda_kappa(p);
    let worst = xs
        .iter()
        .map(|&x| {
            let q = 1.0 - x;
            let d1 = a1 / x - a2 / q;
            let d2 = d1 * d1 - a1 / (x * x) - a2 / (q * q);
            ((1.0 - 2.0 * x) * d1 + p.kappa * x * q / 4.0 * d2 - (p.w1 / x + p.w2 / q) + lambda).abs()
        })
        .fold(0.0, f64::max);
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn params(w1: f64, w2: f64) -> SdeParams {
        SdeParams::new(6.0, DerivativeWeights::new(w1, w2).unwrap(), 11).unwrap()
    }

    #[test]
    fn symmetric_point_has_no_drift() {
        let p = params(1.0, 1.0);
        let mut st = DiffusionState::new(0.5);
        let ds = st.step_size(&p);
        st.step(&p, ds, 0.0);
        // Milstein term vanishes with drift at y = 1/2.
        assert_eq!(st.y, 0.5);
        assert!((st.alpha - 2.0 * ds).abs() < 1e-15);
        assert!((st.beta - 2.0 * ds).abs() < 1e-15);
    }

    #[test]
    fn near_zero_drift_pushes_inward() {
        let p = params(1.0, 1.0);
        let mut st = DiffusionState::new(1e-3);
        let ds = st.step_size(&p);
        assert!((ds - 1e-4).abs() < 1e-18);
        st.step(&p, ds, 0.0);
        assert!(st.y > 1e-3);
    }

    #[test]
    fn absorption_is_permanent_and_scores_zero() {
        let p = params(1.0, 1.0);
        let mut st = DiffusionState::new(1.1e-6);
        st.step(&p, 1e-7, -3e-4);
        assert!(st.absorbed);
        assert_eq!(st.weight(&p.weights), 0.0);
    }

    #[test]
    fn mirror_coupling() {
        // (Y, alpha, beta) from x with increments dB equals
        // (1 - Y, beta, alpha) from 1 - x with increments -dB.
        let p = params(1.0, 2.0);
        let mut rng = rng::stream(Engine::Diffusion, 5, 0);
        let mut a = DiffusionState::new(0.3);
        let mut b = DiffusionState::new(0.7);
        for _ in 0..2000 {
            if a.absorbed || b.absorbed {
                break;
            }
            let ds = a.step_size(&p);
            assert!((ds - b.step_size(&p)).abs() < 1e-12);
            let z: f64 = rng.sample(StandardNormal);
            a.step(&p, ds, ds.sqrt() * z);
            b.step(&p, ds, -ds.sqrt() * z);
            assert!((a.y - (1.0 - b.y)).abs() < 1e-9);
            assert!((a.alpha - b.beta).abs() < 1e-9 * a.alpha.max(1.0));
            assert!((a.beta - b.alpha).abs() < 1e-9 * a.beta.max(1.0));
        }
    }

    #[test]
    fn short_time_limits() {
        let p = params(1.0, 1.0);
        let (one, g) = estimate_h_grid(&p, 0.5, &[1e-6], 100).unwrap()[0];
        assert!((g.mean - 0.25).abs() < 1e-4);
        assert!((one.mean - 1.0).abs() < 1e-4);
        let near = estimate_hg(&p, 2e-6, 1e-3, 1000).unwrap();
        assert!(near.mean < 1e-5);
    }

    #[test]
    fn domination_on_coupled_paths() {
        let p = params(1.0, 2.0);
        for (one, g) in estimate_h_grid(&p, 0.4, &[0.5, 1.0], 2000).unwrap() {
            assert!(one.mean >= g.mean);
        }
    }

    #[test]
    fn alpha_beta_monotone() {
        let p = params(1.0, 1.0);
        let mut rng = rng::stream(Engine::Diffusion, 1, 0);
        let mut st = DiffusionState::new(0.2);
        while !st.absorbed && st.s < 2.0 {
            let before = st;
            let ds = st.step_size(&p);
            let z: f64 = rng.sample(StandardNormal);
            st.step(&p, ds, ds.sqrt() * z);
            assert!(st.alpha > before.alpha && st.beta > before.beta);
        }
    }

    #[test]
    fn eigen_residual_examples() {
        let xs: Vec<f64> = (0..97).map(|i| 0.02 + 0.96 * i as f64 / 96.0).collect();
        for (k, w1, w2) in [(6.0, 1.0, 1.0), (8.0 / 3.0, 0.5, 3.0), (4.0, 1.0, 2.0)] {
            let p = ExponentParams::new(k, w1, w2).unwrap();
            assert!(eigen_residual(&p, &xs).unwrap() < 1e-10);
        }
        let p = ExponentParams::new(4.0, 0.7, 0.7).unwrap();
        let (a, _) = boundary_exponents(&p);
        assert!((a - 0.7f64.sqrt()).abs() < 1e-15);
        // A wrong lambda must show up.
        let xs = [0.3, 0.5];
        let good = eigen_residual(&p, &xs).unwrap();
        assert!(good < 1e-12);
        assert!(eigen_residual(&p, &[0.0]).is_err());
    }

    #[test]
    fn martingale_at_zero_is_deterministic() {
        let p = params(1.0, 1.0);
        let q = martingale_check(&p, 0.5, 1.0, &[1e-9], 50).unwrap();
        let exact = (-7.0f64).exp() * 0.25;
        assert!((q[0].mean - exact).abs() < 1e-9 * exact.max(1.0) + 1e-10);
        assert!(martingale_check(&p, 0.5, 1.0, &[0.5, 1.0], 10).is_err());
    }

    #[test]
    fn rejects_bad_params() {
        let w = DerivativeWeights::new(1.0, 1.0).unwrap();
        assert!(SdeParams::with_steps(6.0, w, 0.02, 1e-6, 0).is_err());
        assert!(SdeParams::with_steps(6.0, w, 1e-3, 0.02, 0).is_err());
        assert!(SdeParams::with_steps(-1.0, w, 1e-3, 1e-6, 0).is_err());
        let p = params(1.0, 1.0);
        assert!(estimate_hg(&p, 0.0, 1.0, 10).is_err());
        assert!(estimate_hg(&p, 0.5, 1.0, 0).is_err());
    }
}
