//! Consolidation of result files into a pass/fail table.
//!
//! Estimate rows sharing `(method, observable, kappa, x0, w1, w2, s)` are
//! pooled through their sufficient statistics; walker rows sharing
//! `(packs, radius)` are pooled by inverse-variance weighting of their logs.
//! The pooled data are then checked against closed forms:
//!
//! * `h1` and `hG` groups with three or more `s` values get a decay-rate fit;
//! * every `hG` point must match `exp(-lambda s) G(x)`;
//! * every `h1` point must respect `h1 >= exp(-lambda s) G(x)`;
//! * every `Q` point must match `exp(-lambda s0) G(x)`, with `s0` read from
//!   the file's configuration;
//! * `h1` estimates from different methods at the same point must agree;
//! * walker groups with three or more radii from 16 on get an exponent fit.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::exponents::{eigenfunction_g, lambda_kappa, xi_tilde, ExponentParams, WeightVector};
use crate::records::{fmt_sig, format_packs, EstimateRow, Method, ObservableKind, ResultFile, Rows, WalkerRow};
use crate::stats::{fit_lambda, MonteCarloEstimate, Z_95};
use crate::walkers::{fit_xi_tilde, MIN_FIT_RADIUS};

/// Relative tolerance on fitted decay rates.
pub const LAMBDA_TOL: f64 = 0.10;
/// Number of standard errors allowed in pointwise checks.
pub const POINT_SIGMAS: f64 = 3.0;
/// Relative discretization error granted to grid solutions.
pub const PDE_REL_TOL: f64 = 1e-3;

/// Relative tolerance on a fitted walk exponent for the given packs.
pub fn walker_tolerance(packs: &[u32]) -> f64 {
    match packs {
        [_] => 0.10,
        [1, 1] => 0.15,
        _ => 0.20,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub quantity: String,
    pub predicted: f64,
    pub estimate: f64,
    /// Half-width of the acceptance interval around `estimate`.
    pub ci: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Report {
    pub rows: Vec<ReportRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
struct PointKey {
    kappa: u64,
    x0: u64,
    w1: u64,
    w2: u64,
}

impl PointKey {
    fn of(r: &EstimateRow) -> Self {
        Self { kappa: r.kappa.to_bits(), x0: r.x0.to_bits(), w1: r.w1.to_bits(), w2: r.w2.to_bits() }
    }

    fn kappa(&self) -> f64 {
        f64::from_bits(self.kappa)
    }
    fn x0(&self) -> f64 {
        f64::from_bits(self.x0)
    }
    fn w1(&self) -> f64 {
        f64::from_bits(self.w1)
    }
    fn w2(&self) -> f64 {
        f64::from_bits(self.w2)
    }

    fn label(&self) -> String {
        format!(
            "kappa={} x={} w=({},{})",
            fmt_sig(self.kappa()),
            fmt_sig(self.x0()),
            fmt_sig(self.w1()),
            fmt_sig(self.w2())
        )
    }

    /// `(lambda, G(x0))`, or `None` off the exponent formula's domain.
    fn closed_form(&self) -> Option<(f64, f64)> {
        let p = ExponentParams::exploratory(self.kappa(), self.w1(), self.w2()).ok()?;
        let g = eigenfunction_g(&p, self.x0()).ok()?;
        Some((lambda_kappa(&p), g))
    }
}

type SeriesKey = (Method, ObservableKind, PointKey);

/// Pooled estimates per series, keyed by `s` bits; `Q` series also carry `s0`.
#[derive(Default)]
struct Pool {
    series: BTreeMap<SeriesKey, BTreeMap<u64, MonteCarloEstimate>>,
    s0: BTreeMap<SeriesKey, u64>,
    walkers: BTreeMap<(Vec<u32>, u32), (f64, f64)>,
}

impl Pool {
    fn add_estimates(&mut self, rows: &[EstimateRow], config: &serde_json::Value) -> Result<()> {
        for r in rows {
            let key = (r.method, r.observable, PointKey::of(r));
            if r.observable == ObservableKind::Q {
                let s0 = config
                    .get("s")
                    .and_then(serde_json::Value::as_f64)
                    .ok_or_else(|| Error::Schema("Q rows need a numeric `s` in the configuration".into()))?;
                if *self.s0.entry(key).or_insert(s0.to_bits()) != s0.to_bits() {
                    return Err(Error::Schema("Q rows with conflicting horizons".into()));
                }
            }
            let e = r.estimate();
            let slot = self.series.entry(key).or_default();
            match slot.get_mut(&r.s.to_bits()) {
                // Grid solutions are deterministic; keep the first.
                Some(_) if r.method == Method::Pde => {}
                Some(prev) => *prev = prev.merge(&e),
                None => {
                    slot.insert(r.s.to_bits(), e);
                }
            }
        }
        Ok(())
    }

    fn add_walkers(&mut self, rows: &[WalkerRow]) {
        for r in rows {
            let sigma = r.log_ci / Z_95;
            let (log_e, var) = (r.estimate.ln(), sigma * sigma);
            self.walkers
                .entry((r.packs.clone(), r.radius))
                .and_modify(|(m, v)| {
                    if *v > 0.0 && var > 0.0 {
                        let w = *v / (*v + var);
                        *m = *m + w * (log_e - *m);
                        *v = *v * var / (*v + var);
                    }
                })
                .or_insert((log_e, var));
        }
    }
}

/// Builds the consolidated table from parsed result files.
pub fn build(files: &[ResultFile]) -> Result<Report> {
    let mut pool = Pool::default();
    for f in files {
        match &f.rows {
            Rows::Estimates(rows) => pool.add_estimates(rows, &f.config)?,
            Rows::Walkers(rows) => pool.add_walkers(rows),
        }
    }
    let mut report = Report::default();
    for (key, points) in &pool.series {
        estimate_rows(&mut report, key, points, pool.s0.get(key).map(|b| f64::from_bits(*b)));
    }
    cross_rows(&mut report, &pool);
    walker_rows(&mut report, &pool);
    Ok(report)
}

/// Parses and consolidates result files given as text.
pub fn build_from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Result<Report> {
    let files = texts.into_iter().map(ResultFile::parse).collect::<Result<Vec<_>>>()?;
    build(&files)
}

fn estimate_rows(
    report: &mut Report,
    key: &SeriesKey,
    points: &BTreeMap<u64, MonteCarloEstimate>,
    s0: Option<f64>,
) {
    let (method, obs, pk) = key;
    let label = format!("{obs} {method} {}", pk.label());
    let Some((lambda, g)) = pk.closed_form() else {
        report.rows.push(ReportRow {
            quantity: format!("{label} (no closed form)"),
            predicted: f64::NAN,
            estimate: f64::NAN,
            ci: f64::NAN,
            pass: false,
        });
        return;
    };
    let slack = |target: f64, e: &MonteCarloEstimate| {
        POINT_SIGMAS * e.stderr + if *method == Method::Pde { PDE_REL_TOL * target.abs() } else { 0.0 }
    };
    let series: Vec<(f64, MonteCarloEstimate)> =
        points.iter().map(|(s, e)| (f64::from_bits(*s), *e)).collect();

    if matches!(obs, ObservableKind::H1 | ObservableKind::HG) && series.len() >= 3 {
        let positive: Vec<_> = series.iter().copied().filter(|(s, _)| *s > 0.0).collect();
        let row = match fit_lambda(&positive) {
            Ok(fit) => ReportRow {
                quantity: format!("lambda from {label}"),
                predicted: lambda,
                estimate: fit.lambda_hat,
                ci: fit.ci_halfwidth,
                pass: fit.relative_error(lambda) <= LAMBDA_TOL,
            },
            Err(_) => ReportRow {
                quantity: format!("lambda from {label} (fit failed)"),
                predicted: lambda,
                estimate: f64::NAN,
                ci: f64::NAN,
                pass: false,
            },
        };
        report.rows.push(row);
    }

    for (s, e) in &series {
        let (target, pass) = match obs {
            ObservableKind::HG => {
                let t = (-lambda * s).exp() * g;
                (t, (e.mean - t).abs() <= slack(t, e))
            }
            ObservableKind::H1 => {
                let t = (-lambda * s).exp() * g;
                (t, e.mean + slack(t, e) >= t)
            }
            ObservableKind::Q => {
                let t = (-lambda * s0.unwrap_or(f64::NAN)).exp() * g;
                (t, (e.mean - t).abs() <= slack(t, e))
            }
        };
        report.rows.push(ReportRow {
            quantity: format!("{label} s={}", fmt_sig(*s)),
            predicted: target,
            estimate: e.mean,
            ci: slack(target, e),
            pass,
        });
    }
}

/// Pairwise agreement of `h1` between methods at identical points.
fn cross_rows(report: &mut Report, pool: &Pool) {
    let mut by_point: BTreeMap<(PointKey, u64), Vec<(Method, MonteCarloEstimate)>> = BTreeMap::new();
    for ((method, obs, pk), points) in &pool.series {
        if *obs != ObservableKind::H1 {
            continue;
        }
        for (s, e) in points {
            by_point.entry((*pk, *s)).or_default().push((*method, *e));
        }
    }
    for ((pk, s), list) in &by_point {
        for (i, (ma, a)) in list.iter().enumerate() {
            for (mb, b) in &list[i + 1..] {
                let grid = if *ma == Method::Pde || *mb == Method::Pde {
                    PDE_REL_TOL * a.mean.abs().max(b.mean.abs())
                } else {
                    0.0
                };
                let ci = POINT_SIGMAS * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt() + grid;
                report.rows.push(ReportRow {
                    quantity: format!("h1 {ma} vs {mb} {} s={}", pk.label(), fmt_sig(f64::from_bits(*s))),
                    predicted: b.mean,
                    estimate: a.mean,
                    ci,
                    pass: (a.mean - b.mean).abs() <= ci,
                });
            }
        }
    }
}

fn walker_rows(report: &mut Report, pool: &Pool) {
    let mut groups: BTreeMap<&[u32], Vec<(f64, f64, f64)>> = BTreeMap::new();
    for ((packs, radius), (log_e, var)) in pool.walkers.iter().filter(|((_, r), _)| *r >= MIN_FIT_RADIUS) {
        groups.entry(packs).or_default().push((*radius as f64, log_e.exp(), Z_95 * var.sqrt()));
    }
    for (packs, points) in groups {
        let label = format!("xi_tilde({})", format_packs(packs));
        let predicted = WeightVector::new(packs.iter().map(|&n| n as f64).collect())
            .map(|w| xi_tilde(&w))
            .unwrap_or(f64::NAN);
        if points.len() < 3 {
            continue;
        }
        let row = match fit_xi_tilde(&points) {
            Ok(fit) => ReportRow {
                quantity: format!("{label} from walks"),
                predicted,
                estimate: fit.lambda_hat,
                ci: fit.ci_halfwidth,
                pass: fit.relative_error(predicted) <= walker_tolerance(packs),
            },
            Err(_) => ReportRow {
                quantity: format!("{label} from walks (fit failed)"),
                predicted,
                estimate: f64::NAN,
                ci: f64::NAN,
                pass: false,
            },
        };
        report.rows.push(row);
    }
}

const COLUMNS: [&str; 5] = ["quantity", "predicted", "estimate", "ci", "pass"];

impl Report {
    pub fn all_pass(&self) -> bool {
        self.rows.iter().all(|r| r.pass)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| !r.pass).count()
    }

    pub fn to_markdown(&self) -> String {
        let mut out = format!("| {} |\n|---|---:|---:|---:|:---:|\n", COLUMNS.join(" | "));
        for r in &self.rows {
            out.push_str(&format!(
                "| {} | {} | {} | {} | {} |\n",
                r.quantity,
                fmt_sig(r.predicted),
                fmt_sig(r.estimate),
                fmt_sig(r.ci),
                if r.pass { "pass" } else { "FAIL" }
            ));
        }
        out
    }

    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::CRLF).from_writer(Vec::new());
        w.write_record(COLUMNS)?;
        for r in &self.rows {
            w.write_record([
                r.quantity.clone(),
                fmt_sig(r.predicted),
                fmt_sig(r.estimate),
                fmt_sig(r.ci),
                if r.pass { "pass" } else { "fail" }.to_string(),
            ])?;
        }
        w.into_inner().map_err(|e| Error::Io(e.into_error()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(method: Method, obs: ObservableKind, s: f64, mean: f64, stderr: f64, seed: u64) -> EstimateRow {
        EstimateRow { kappa: 6.0, x0: 0.5, w1: 1.0, w2: 1.0, s, mean, stderr, n: 1000, seed, method, observable: obs }
    }

    fn file(rows: Vec<EstimateRow>) -> ResultFile {
        ResultFile { config: serde_json::json!({}), rows: Rows::Estimates(rows) }
    }

    #[test]
    fn empty_input_gives_empty_table() {
        let r = build(&[]).unwrap();
        assert!(r.rows.is_empty() && r.all_pass());
        assert_eq!(r.to_markdown().lines().count(), 2);
        assert_eq!(String::from_utf8(r.to_csv().unwrap()).unwrap(), "quantity,predicted,estimate,ci,pass\r\n");
    }

    #[test]
    fn exact_hg_series_passes_and_fits() {
        let rows: Vec<_> = [0.5, 1.0, 1.5, 2.0]
            .iter()
            .map(|&s: &f64| row(Method::Pde, ObservableKind::HG, s, 0.25 * (-7.0 * s).exp(), 0.0, 0))
            .collect();
        let r = build(&[file(rows)]).unwrap();
        assert_eq!(r.rows.len(), 5);
        assert!(r.all_pass(), "{}", r.to_markdown());
        assert!((r.rows[0].estimate - 7.0).abs() < 1e-9);
    }

    #[test]
    fn violated_bound_fails() {
        let t = 0.25 * (-7.0f64).exp();
        let r = build(&[file(vec![row(Method::Sde, ObservableKind::H1, 1.0, 0.5 * t, 0.01 * t, 0)])]).unwrap();
        assert_eq!(r.failures(), 1);
    }

    #[test]
    fn disjoint_runs_pool_like_one() {
        let a = row(Method::Loewner, ObservableKind::H1, 1.0, 1e-3, 1e-5, 0);
        let b = row(Method::Loewner, ObservableKind::H1, 1.0, 1.2e-3, 2e-5, 1000);
        let r = build(&[file(vec![a.clone()]), file(vec![b.clone()])]).unwrap();
        let merged = a.estimate().merge(&b.estimate());
        assert_eq!(r.rows[0].estimate, merged.mean);
    }

    #[test]
    fn q_rows_need_horizon() {
        let q = row(Method::Sde, ObservableKind::Q, 0.5, 1e-3, 1e-5, 0);
        assert!(build(&[file(vec![q.clone()])]).is_err());
        let target = 0.25 * (-7.0f64).exp();
        let q = EstimateRow { mean: target, ..q };
        let f = ResultFile { config: serde_json::json!({"s": 1.0}), rows: Rows::Estimates(vec![q]) };
        let r = build(&[f]).unwrap();
        assert!(r.all_pass());
        assert!((r.rows[0].predicted - target).abs() < 1e-15);
    }

    #[test]
    fn cross_method_rows() {
        let a = row(Method::Sde, ObservableKind::H1, 1.0, 1.00e-3, 1e-5, 0);
        let b = row(Method::Pde, ObservableKind::H1, 1.0, 1.01e-3, 0.0, 0);
        let r = build(&[file(vec![a, b])]).unwrap();
        let cross: Vec<_> = r.rows.iter().filter(|r| r.quantity.contains(" vs ")).collect();
        assert_eq!(cross.len(), 1);
        assert!(cross[0].pass);
    }

    #[test]
    fn walker_fit_row() {
        let rows = [16u32, 32, 64, 128]
            .iter()
            .map(|&r| WalkerRow {
                packs: vec![1, 1],
                radius: r,
                estimate: (r as f64).powf(-10.0 / 3.0),
                log_ci: 0.05,
                population: 10_000,
                seed: 0,
            })
            .collect();
        let f = ResultFile { config: serde_json::Value::Null, rows: Rows::Walkers(rows) };
        let r = build(&[f]).unwrap();
        assert_eq!(r.rows.len(), 1);
        assert!(r.rows[0].pass);
        assert!((r.rows[0].predicted - 10.0 / 3.0).abs() < 1e-12);
    }
}
