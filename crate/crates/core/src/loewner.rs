//! Chordal Loewner chain tracking the boundary points `0` and `1`.
//!
//! The driving function is held constant over each step, so every step is
//! the exact vertical-slit map `u -> W + sign(u - W) sqrt((u - W)^2 + 4h)`
//! applied to the two tracked images, followed by a Gaussian jump of `W`
//! with variance `kappa * h`.
//!
//! With `D = g_t(1) - g_t(0)` the renormalised map is
//! `f_t = (g_t - g_t(0)) / D`, so
//!
//! * `s = log D` (zero at `t = 0`),
//! * `alpha = -log f_t'(0) = s - log g_t'(0)` and likewise `beta`,
//! * `Y_s = (W_t - g_t(0)) / D`.
//!
//! Step sizes are relative to `D^2`, which makes the scheme scale invariant.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::exponents::DerivativeWeights;
use crate::mc;
use crate::rng::{self, Engine};
use crate::stats::MonteCarloEstimate;

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_SWALLOW_TOL: f64 = 1e-9;

/// Near a tracked point the step is at most `GAP_FACTOR * gap^2`, so the
/// driving jump is a small multiple of the gap.
pub const GAP_FACTOR: f64 = 0.01;

/// Smallest admissible step, as a fraction of `dt * D^2`.
pub const DT_FLOOR: f64 = 1e-6;

/// `ln(1e-300)`: paths whose weight falls below this are scored 0.
pub const LOG_WEIGHT_FLOOR: f64 = -690.775_527_898_213_7;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainParams {
    pub kappa: f64,
    /// Starting point of the driving function, `W_0 = x0`.
    pub x0: f64,
    /// Base capacity-time step in units of `D^2`.
    pub dt: f64,
    pub seed: u64,
    /// Guard band around the tracked images, relative to `D`.
    pub swallow_tol: f64,
}

impl ChainParams {
    pub fn new(kappa: f64, x0: f64, dt: f64, seed: u64) -> Result<Self> {
        Self { kappa, x0, dt, seed, swallow_tol: DEFAULT_SWALLOW_TOL }.validated()
    }

    pub fn with_swallow_tol(self, swallow_tol: f64) -> Result<Self> {
        Self { swallow_tol, ..self }.validated()
    }

    fn validated(self) -> Result<Self> {
        if !(self.kappa.is_finite() && self.kappa > 0.0) {
            return Err(Error::Domain(format!("kappa must be positive, got {}", self.kappa)));
        }
        if !(self.x0 > 0.0 && self.x0 < 1.0) {
            return Err(Error::Domain(format!("x0 must lie in (0, 1), got {}", self.x0)));
        }
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(Error::Domain(format!("dt must be positive, got {}", self.dt)));
        }
        let margin = self.x0.min(1.0 - self.x0);
        if !(self.swallow_tol > 0.0 && self.swallow_tol < 1e-3 * margin) {
            return Err(Error::Domain(format!(
                "swallow_tol must lie in (0, 1e-3 * min(x0, 1 - x0)), got {}",
                self.swallow_tol
            )));
        }
        Ok(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainState {
    pub t: f64,
    pub w: f64,
    pub g0: f64,
    pub g1: f64,
    /// `log g_t'(0)`.
    pub logd0: f64,
    /// `log g_t'(1)`.
    pub logd1: f64,
    /// `log(g1 - g0)`.
    pub s: f64,
    pub swallowed: bool,
}

impl ChainState {
    pub fn new(x0: f64) -> Self {
        Self { t: 0.0, w: x0, g0: 0.0, g1: 1.0, logd0: 0.0, logd1: 0.0, s: 0.0, swallowed: false }
    }

    pub fn width(&self) -> f64 {
        self.g1 - self.g0
    }

    /// `Z_t = (W_t - g_t(0)) / (g_t(1) - g_t(0))`.
    pub fn y(&self) -> f64 {
        (self.w - self.g0) / self.width()
    }

    /// `-log f_t'(0)`.
    pub fn alpha(&self) -> f64 {
        self.s - self.logd0
    }

    /// `-log f_t'(1)`.
    pub fn beta(&self) -> f64 {
        self.s - self.logd1
    }

    /// Adaptive capacity step for the current configuration.
    pub fn step_size(&self, params: &ChainParams) -> f64 {
        let d2 = self.width() * self.width();
        let gap = (self.w - self.g0).min(self.g1 - self.w);
        (params.dt * d2).min(GAP_FACTOR * gap * gap).max(params.dt * DT_FLOOR * d2)
    }

    /// Flows the tracked images for capacity time `h` with `W` frozen.
    pub fn flow(&mut self, h: f64) {
        let (g0, l0) = slit_map(self.g0, self.w, h);
        let (g1, l1) = slit_map(self.g1, self.w, h);
        self.g0 = g0;
        self.g1 = g1;
        self.logd0 += l0;
        self.logd1 += l1;
        self.t += h;
        self.s = self.width().ln();
    }

    /// Moves the driving point by `dw` and flags swallowing if it reached
    /// the guard band of either tracked image.
    pub fn drive(&mut self, dw: f64, swallow_tol: f64) {
        self.w += dw;
        let band = swallow_tol * self.width();
        if self.w <= self.g0 + band || self.w >= self.g1 - band {
            self.swallowed = true;
        }
    }

    /// One full step: [`flow`](Self::flow) for `h`, then [`drive`](Self::drive) by `dw`.
    pub fn advance(&mut self, params: &ChainParams, h: f64, dw: f64) {
        debug_assert!(!self.swallowed);
        self.flow(h);
        self.drive(dw, params.swallow_tol);
    }
}

/// Image of a real point `u` under the slit map of capacity `h` at `w`, and
/// the log of the map's derivative there.
#[inline]
fn slit_map(u: f64, w: f64, h: f64) -> (f64, f64) {
    let d = u - w;
    let r = (d * d + 4.0 * h).sqrt();
    (w + r.copysign(d), -0.5 * (4.0 * h / (d * d)).ln_1p())
}

/// The chain observed at `t(s)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoSidedSample {
    /// `t(s) < T`. Paths stopped by the weight floor also report `false`.
    pub reached_s: bool,
    pub alpha: f64,
    pub beta: f64,
    pub y: f64,
}

impl TwoSidedSample {
    const LOST: Self = Self { reached_s: false, alpha: f64::INFINITY, beta: f64::INFINITY, y: f64::NAN };

    /// `1{reached} exp(-w1 alpha - w2 beta)`.
    pub fn weight(&self, w: &DerivativeWeights) -> f64 {
        if self.reached_s {
            (-w.exponent(self.alpha, self.beta)).exp()
        } else {
            0.0
        }
    }
}

fn check_grid(s_grid: &[f64]) -> Result<()> {
    if s_grid.is_empty() {
        return Err(Error::Domain("empty s grid".into()));
    }
    if s_grid.iter().any(|s| !(s.is_finite() && *s > 0.0)) {
        return Err(Error::Domain(format!("s values must be positive, got {s_grid:?}")));
    }
    if s_grid.windows(2).any(|p| p[1] <= p[0]) {
        return Err(Error::Domain(format!("s grid must be strictly increasing, got {s_grid:?}")));
    }
    Ok(())
}

/// Runs one chain and records it at every checkpoint of `s_grid`
/// (ascending). With `floor`, the path stops once its weight drops below
/// `1e-300`.
fn run_path<R: Rng>(
    params: &ChainParams,
    rng: &mut R,
    s_grid: &[f64],
    floor: Option<&DerivativeWeights>,
    out: &mut Vec<TwoSidedSample>,
) {
    let sigma = params.kappa.sqrt();
    let mut st = ChainState::new(params.x0);
    let mut next = 0;
    while next < s_grid.len() {
        let h = st.step_size(params);
        let (s0, l0, l1, y0) = (st.s, st.logd0, st.logd1, st.y());
        st.flow(h);
        let y1 = st.y();
        while next < s_grid.len() && st.s >= s_grid[next] {
            let target = s_grid[next];
            let theta = (target - s0) / (st.s - s0);
            out.push(TwoSidedSample {
                reached_s: true,
                alpha: target - (l0 + theta * (st.logd0 - l0)),
                beta: target - (l1 + theta * (st.logd1 - l1)),
                y: y0 + theta * (y1 - y0),
            });
            next += 1;
        }
        if next == s_grid.len() {
            break;
        }
        let z: f64 = rng.sample(StandardNormal);
        st.drive(sigma * h.sqrt() * z, params.swallow_tol);
        let floored = floor.is_some_and(|w| -w.exponent(st.alpha(), st.beta()) < LOG_WEIGHT_FLOOR);
        if st.swallowed || floored {
            out.resize(out.len() + s_grid.len() - next, TwoSidedSample::LOST);
            break;
        }
    }
}

/// Runs chain `index` of the run until `s_target` or swallowing.
pub fn run_to_s(params: &ChainParams, s_target: f64, index: u64) -> Result<TwoSidedSample> {
    check_grid(&[s_target])?;
    let mut rng = rng::stream(Engine::Loewner, params.seed, index);
    let mut out = Vec::with_capacity(1);
    run_path(params, &mut rng, &[s_target], None, &mut out);
    Ok(out[0])
}

/// `n` samples at `s_target`, chains `0..n`.
pub fn sample_paths(params: &ChainParams, s_target: f64, n: u64) -> Result<Vec<TwoSidedSample>> {
    check_grid(&[s_target])?;
    Ok(mc::collect(n, |i| {
        let mut rng = rng::stream(Engine::Loewner, params.seed, i);
        let mut out = Vec::with_capacity(1);
        run_path(params, &mut rng, &[s_target], None, &mut out);
        out[0]
    }))
}

/// Every chain up to `s_max`, state by state. Mostly for inspection.
pub fn trace(params: &ChainParams, s_max: f64, index: u64) -> Vec<ChainState> {
    let mut rng = rng::stream(Engine::Loewner, params.seed, index);
    let sigma = params.kappa.sqrt();
    let mut st = ChainState::new(params.x0);
    let mut path = vec![st];
    while !st.swallowed && st.s < s_max {
        let h = st.step_size(params);
        let z: f64 = rng.sample(StandardNormal);
        st.advance(params, h, sigma * h.sqrt() * z);
        path.push(st);
    }
    path
}

/// Monte Carlo estimate of `h_1(x0, s) = E[1{t(s) < T} f'(0)^w1 f'(1)^w2]`.
pub fn estimate_h1(
    params: &ChainParams,
    s_target: f64,
    weights: &DerivativeWeights,
    n: u64,
) -> Result<MonteCarloEstimate> {
    Ok(estimate_h1_grid(params, &[s_target], weights, n)?.remove(0))
}

/// [`estimate_h1`] at every point of an increasing grid, reading each chain
/// at all checkpoints. Entry `j` is identical to `estimate_h1(s_grid[j])`.
pub fn estimate_h1_grid(
    params: &ChainParams,
    s_grid: &[f64],
    weights: &DerivativeWeights,
    n: u64,
) -> Result<Vec<MonteCarloEstimate>> {
    check_grid(s_grid)?;
    if n == 0 {
        return Err(Error::Domain("sample count must be positive".into()));
    }
    Ok(mc::estimate_many(params.seed, n, s_grid.len(), |i, vals| {
        let mut rng = rng::stream(Engine::Loewner, params.seed, i);
        let mut out = Vec::with_capacity(s_grid.len());
        run_path(params, &mut rng, s_grid, Some(weights), &mut out);
        for (v, sample) in vals.iter_mut().zip(&out) {
            *v = sample.weight(weights);
        }
    }))
}

/// Estimator of `H(a, R)` at `log R`: the same stopping rule as
/// [`estimate_h1`] with `s = log R`, since `sigma_R` is `t(log R)` up to
/// bounded factors in `R`.
pub fn estimate_big_h(
    params: &ChainParams,
    log_r: f64,
    weights: &DerivativeWeights,
    n: u64,
) -> Result<MonteCarloEstimate> {
    estimate_h1(params, log_r, weights, n)
}

/// [`estimate_big_h`] over an increasing grid of `log R` values.
pub fn estimate_big_h_grid(
    params: &ChainParams,
    log_r_grid: &[f64],
    weights: &DerivativeWeights,
    n: u64,
) -> Result<Vec<MonteCarloEstimate>> {
    estimate_h1_grid(params, log_r_grid, weights, n)
}
