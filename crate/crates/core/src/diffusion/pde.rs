//! Crank-Nicolson solver for
//!
//! `h_s = (1 - 2x) h_x + kappa x (1 - x) / 4 h_xx - (w1 / x + w2 / (1 - x)) h`
//!
//! on `[0, 1]` with `h(0, s) = h(1, s) = 0`. The first two steps are
//! replaced by four implicit Euler half steps (Rannacher start-up) to damp
//! the boundary discontinuity of the `h = 1` initial layer.

use std::io::Write;

use crate::error::{Error, Result};
use crate::exponents::{boundary_exponents, g_unchecked, ExponentParams};

const RANNACHER_STEPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitialLayer {
    /// `h(x, 0) = 1` on the interior: the solution is `h_1`.
    One,
    /// `h(x, 0) = G(x)`: the solution is `h_G = exp(-lambda s) G(x)`.
    G,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdeSpec {
    /// Spatial nodes including both boundary nodes.
    pub nx: usize,
    /// Time steps; the grid stores `ns + 1` layers.
    pub ns: usize,
    pub s_max: f64,
    pub initial: InitialLayer,
}

impl PdeSpec {
    /// Largest grid accepted, in stored values.
    pub const MAX_VALUES: usize = 50_000_000;

    fn validate(&self) -> Result<()> {
        if self.nx < 16 || self.ns < 16 {
            return Err(Error::Domain(format!("grid needs nx, ns >= 16, got {} x {}", self.nx, self.ns)));
        }
        if self.nx.saturating_mul(self.ns + 1) > Self::MAX_VALUES {
            return Err(Error::Domain(format!("grid {} x {} exceeds the resource bound", self.nx, self.ns)));
        }
        if !(self.s_max.is_finite() && self.s_max > 0.0) {
            return Err(Error::Domain(format!("s_max must be positive, got {}", self.s_max)));
        }
        Ok(())
    }
}

/// Solution values, layer by layer: `values[j * nx + i] = h(x_i, s_j)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PdeGrid {
    pub nx: usize,
    pub ns: usize,
    pub s_max: f64,
    pub values: Vec<f64>,
}

impl PdeGrid {
    pub fn dx(&self) -> f64 {
        1.0 / (self.nx - 1) as f64
    }

    pub fn ds(&self) -> f64 {
        self.s_max / self.ns as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        i as f64 * self.dx()
    }

    pub fn layer(&self, j: usize) -> &[f64] {
        &self.values[j * self.nx..(j + 1) * self.nx]
    }

    /// Bilinear interpolation in `(x, s)`.
    pub fn value_at(&self, x: f64, s: f64) -> Result<f64> {
        if !(0.0..=1.0).contains(&x) || !(0.0..=self.s_max).contains(&s) {
            return Err(Error::Domain(format!("({x}, {s}) lies outside the grid")));
        }
        let (i, fx) = bracket(x / self.dx(), self.nx - 1);
        let (j, fs) = bracket(s / self.ds(), self.ns);
        let at = |jj: usize| {
            let row = self.layer(jj);
            row[i] + fx * (row[(i + 1).min(self.nx - 1)] - row[i])
        };
        let lo = at(j);
        Ok(if fs > 0.0 { lo + fs * (at(j + 1) - lo) } else { lo })
    }

    /// Writes layers `0, stride, 2 stride, ...` as a CSV matrix with a leading `s` column.
    pub fn write_csv_matrix<W: Write>(&self, mut out: W, stride: usize) -> Result<()> {
        let stride = stride.max(1);
        write!(out, "s")?;
        for i in 0..self.nx {
            write!(out, ",{}", crate::records::fmt_sig(self.x(i)))?;
        }
        writeln!(out)?;
        for j in (0..=self.ns).step_by(stride) {
            write!(out, "{}", crate::records::fmt_sig(j as f64 * self.ds()))?;
            for v in self.layer(j) {
                write!(out, ",{}", crate::records::fmt_sig(*v))?;
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

fn bracket(pos: f64, last: usize) -> (usize, f64) {
    let i = (pos.floor() as usize).min(last);
    if i == last {
        (last, 0.0)
    } else {
        (i, pos - i as f64)
    }
}

/// Factored tridiagonal system `a_i u_{i-1} + b_i u_i + c_i u_{i+1} = r_i`.
struct Tridiagonal {
    lower: Vec<f64>,
    upper_mod: Vec<f64>,
    pivot_inv: Vec<f64>,
}

impl Tridiagonal {
    fn factor(lower: &[f64], diag: &[f64], upper: &[f64]) -> Self {
        let m = diag.len();
        let mut upper_mod = vec![0.0; m];
        let mut pivot_inv = vec![0.0; m];
        let mut prev = 0.0;
        for i in 0..m {
            let pivot = diag[i] - if i > 0 { lower[i] * prev } else { 0.0 };
            pivot_inv[i] = 1.0 / pivot;
            prev = upper[i] * pivot_inv[i];
            upper_mod[i] = prev;
        }
        Self { lower: lower.to_vec(), upper_mod, pivot_inv }
    }

    fn solve(&self, rhs: &mut [f64]) {
        let m = rhs.len();
        for i in 0..m {
            let carry = if i > 0 { self.lower[i] * rhs[i - 1] } else { 0.0 };
            rhs[i] = (rhs[i] - carry) * self.pivot_inv[i];
        }
        for i in (0..m.saturating_sub(1)).rev() {
            rhs[i] -= self.upper_mod[i] * rhs[i + 1];
        }
    }
}

/// Spatial operator on the interior nodes as three diagonals.
fn operator(p: &ExponentParams, nx: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let dx = 1.0 / (nx - 1) as f64;
    let m = nx - 2;
    let (mut lo, mut di, mut up) = (vec![0.0; m], vec![0.0; m], vec![0.0; m]);
    for k in 0..m {
        let x = (k + 1) as f64 * dx;
        let diff = p.kappa * x * (1.0 - x) / 4.0 / (dx * dx);
        let adv = (1.0 - 2.0 * x) / (2.0 * dx);
        lo[k] = diff - adv;
        up[k] = diff + adv;
        di[k] = -2.0 * diff - (p.w1 / x + p.w2 / (1.0 - x));
    }
    (lo, di, up)
}

/// `(I - theta ds A)` factored.
fn implicit_part(op: &(Vec<f64>, Vec<f64>, Vec<f64>), theta_ds: f64) -> Tridiagonal {
    let lo: Vec<f64> = op.0.iter().map(|v| -theta_ds * v).collect();
    let di: Vec<f64> = op.1.iter().map(|v| 1.0 - theta_ds * v).collect();
    let up: Vec<f64> = op.2.iter().map(|v| -theta_ds * v).collect();
    Tridiagonal::factor(&lo, &di, &up)
}

/// `out = (I + theta ds A) u` on the interior.
fn explicit_part(op: &(Vec<f64>, Vec<f64>, Vec<f64>), theta_ds: f64, u: &[f64], out: &mut [f64]) {
    let m = u.len();
    for k in 0..m {
        let left = if k > 0 { op.0[k] * u[k - 1] } else { 0.0 };
        let right = if k + 1 < m { op.2[k] * u[k + 1] } else { 0.0 };
        out[k] = u[k] + theta_ds * (left + op.1[k] * u[k] + right);
    }
}

/// Solves the backward equation for `h_1` or `h_G` up to `s_max`.
pub fn solve_h_pde(kappa: f64, w1: f64, w2: f64, spec: &PdeSpec) -> Result<PdeGrid> {
    spec.validate()?;
    let p = ExponentParams::new(kappa, w1, w2)?;
    let (nx, ns) = (spec.nx, spec.ns);
    let dx = 1.0 / (nx - 1) as f64;
    let ds = spec.s_max / ns as f64;
    let op = operator(&p, nx);

    let mut values = vec![0.0; nx * (ns + 1)];
    let (a1, a2) = boundary_exponents(&p);
    for i in 1..nx - 1 {
        let x = i as f64 * dx;
        values[i] = match spec.initial {
            InitialLayer::One => 1.0,
            InitialLayer::G => g_unchecked(a1, a2, x),
        };
    }
    let bound = 10.0 * values[..nx].iter().fold(1.0f64, |a, v| a.max(v.abs()));

    // The Crank-Nicolson left side is also the implicit Euler half step.
    let implicit = implicit_part(&op, 0.5 * ds);
    let mut u: Vec<f64> = values[1..nx - 1].to_vec();
    let mut rhs = vec![0.0; nx - 2];
    for j in 1..=ns {
        if j <= RANNACHER_STEPS {
            implicit.solve(&mut u);
            implicit.solve(&mut u);
        } else {
            explicit_part(&op, 0.5 * ds, &u, &mut rhs);
            implicit.solve(&mut rhs);
            std::mem::swap(&mut u, &mut rhs);
        }
        if u.iter().any(|v| !v.is_finite() || v.abs() > bound) {
            return Err(Error::Instability { step: j, ratio: ds / (dx * dx) });
        }
        values[j * nx + 1..(j + 1) * nx - 1].copy_from_slice(&u);
    }
    Ok(PdeGrid { nx, ns, s_max: spec.s_max, values })
}
