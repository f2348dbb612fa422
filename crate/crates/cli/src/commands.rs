use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::Value;
use sle_lab::diffusion::{self, InitialLayer, PdeSpec, SdeParams};
use sle_lab::exponents::{
    boundary_exponents, eigenfunction_g, lambda_kappa, xi, xi_tilde, DerivativeWeights, ExponentParams, WeightVector,
};
use sle_lab::loewner::{self, ChainParams};
use sle_lab::records::{fmt_sig, EstimateRow, Method, ObservableKind, ResultFile, Rows, WalkerRow};
use sle_lab::report::{self, Report};
use sle_lab::stats::MonteCarloEstimate;
use sle_lab::walkers::{fit_xi_tilde, splitting_estimate, WalkPairConfig};

use crate::args::{
    Command, DiffusionArgs, EigenArgs, ExponentsArgs, FileFormat, Initial, LoewnerArgs, MartingaleArgs, PdeArgs,
    ReportArgs, RunOpts, TableFormat, WalkerArgs,
};
use crate::output::{emit, write_atomic};
use crate::surd::{xi_label, xi_tilde_label};
use crate::Failure;

/// Residual bound for `eigen-check --check`.
pub const EIGEN_TOL: f64 = 1e-10;

pub fn run(command: &Command, workers: usize) -> Result<(), Failure> {
    match command {
        Command::Exponents(a) => exponents(a),
        Command::SimLoewner(a) => sim_loewner(a, config(command, a, workers)?),
        Command::SimDiffusion(a) => sim_diffusion(a, config(command, a, workers)?),
        Command::SolvePde(a) => solve_pde(a, config(command, a, workers)?),
        Command::EigenCheck(a) => eigen_check(a),
        Command::MartingaleCheck(a) => martingale(a, config(command, a, workers)?),
        Command::Walkers(a) => walkers(a, config(command, a, workers)?),
        Command::Report(a) => report_cmd(a),
    }
}

/// The resolved configuration embedded in every result file.
fn config<T: Serialize>(command: &Command, args: &T, workers: usize) -> Result<Value, Failure> {
    let mut v = serde_json::to_value(args).map_err(|e| Failure::Io(e.to_string()))?;
    let obj = v.as_object_mut().expect("argument structs serialize to objects");
    obj.remove("out");
    obj.remove("check");
    obj.insert("command".into(), command.name().into());
    obj.insert("workers".into(), workers.into());
    obj.insert("version".into(), env!("CARGO_PKG_VERSION").into());
    Ok(v)
}

fn format_of(f: FileFormat) -> sle_lab::records::Format {
    match f {
        FileFormat::Csv => sle_lab::records::Format::Csv,
        FileFormat::Json => sle_lab::records::Format::Json,
    }
}

/// Writes the result file, prints the summary and applies `--check`.
fn finish(file: ResultFile, run: &RunOpts, summary: String) -> Result<(), Failure> {
    emit(run.out.as_deref(), &file.to_bytes(format_of(run.format))?)?;
    eprintln!("{summary}");
    if run.check {
        gate(&report::build(&[file])?)?;
    }
    Ok(())
}

fn gate(report: &Report) -> Result<(), Failure> {
    if report.all_pass() {
        return Ok(());
    }
    for r in report.rows.iter().filter(|r| !r.pass) {
        eprintln!(
            "check failed: {} (predicted {}, estimate {}, ci {})",
            r.quantity,
            fmt_sig(r.predicted),
            fmt_sig(r.estimate),
            fmt_sig(r.ci)
        );
    }
    Err(Failure::Check(format!("{} of {} checks failed", report.failures(), report.rows.len())))
}

fn with_label(value: f64, label: Option<String>) -> String {
    match label {
        Some(l) => format!("{}  = {l}", fmt_sig(value)),
        None => fmt_sig(value),
    }
}

fn list(ws: &[f64]) -> String {
    ws.iter().map(|w| fmt_sig(*w)).collect::<Vec<_>>().join(",")
}

fn exponents(a: &ExponentsArgs) -> Result<(), Failure> {
    let mut any = false;
    if let Some(ws) = &a.xi {
        let v = xi(&WeightVector::new(ws.clone())?)?;
        println!("xi({}) = {}", list(ws), with_label(v, xi_label(ws)));
        any = true;
    }
    if let Some(ws) = &a.xi_tilde {
        let v = xi_tilde(&WeightVector::new(ws.clone())?);
        println!("xi_tilde({}) = {}", list(ws), with_label(v, xi_tilde_label(ws)));
        any = true;
    }
    if let Some(kappa) = a.kappa {
        let p = ExponentParams::new(kappa, a.w1.unwrap_or(1.0), a.w2.unwrap_or(1.0))?;
        let (a1, a2) = boundary_exponents(&p);
        println!(
            "lambda_{}({}, {}) = {}  a1 = {}  a2 = {}",
            fmt_sig(kappa),
            fmt_sig(p.w1),
            fmt_sig(p.w2),
            fmt_sig(lambda_kappa(&p)),
            fmt_sig(a1),
            fmt_sig(a2)
        );
        any = true;
    }
    if !any {
        return Err(Failure::Usage("nothing to evaluate: give --xi, --xi-tilde or --kappa".into()));
    }
    Ok(())
}

struct Point {
    kappa: f64,
    x0: f64,
    w1: f64,
    w2: f64,
}

impl Point {
    fn row(&self, s: f64, e: &MonteCarloEstimate, method: Method, observable: ObservableKind) -> EstimateRow {
        EstimateRow {
            kappa: self.kappa,
            x0: self.x0,
            w1: self.w1,
            w2: self.w2,
            s,
            mean: e.mean,
            stderr: e.stderr,
            n: e.n,
            seed: e.seed,
            method,
            observable,
        }
    }

    /// `(lambda, G(x0))`.
    fn closed_form(&self) -> Result<(f64, f64), Failure> {
        let p = ExponentParams::new(self.kappa, self.w1, self.w2)?;
        Ok((lambda_kappa(&p), eigenfunction_g(&p, self.x0)?))
    }
}

/// One line: a decay fit over three or more times, else the last point.
fn h1_summary(cmd: &str, point: &Point, grid: &[f64], h1: &[MonteCarloEstimate]) -> Result<String, Failure> {
    let (lambda, g) = point.closed_form()?;
    if grid.len() >= 3 {
        let pts: Vec<_> = grid.iter().copied().zip(h1.iter().copied()).collect();
        if let Ok(fit) = sle_lab::stats::fit_lambda(&pts) {
            return Ok(format!(
                "{cmd}: lambda_hat = {:.4} +- {:.4} over s in [{}, {}] (predicted lambda = {})",
                fit.lambda_hat,
                fit.ci_halfwidth,
                fmt_sig(grid[0]),
                fmt_sig(grid[grid.len() - 1]),
                fmt_sig(lambda)
            ));
        }
    }
    let (s, e) = (grid[grid.len() - 1], h1[h1.len() - 1]);
    Ok(format!(
        "{cmd}: h1(x={}, s={}) = {:.6e} +- {:.2e} (n = {}); predicted lower bound G e^(-lambda s) = {:.6e}, lambda = {}",
        fmt_sig(point.x0),
        fmt_sig(s),
        e.mean,
        e.stderr,
        e.n,
        g * (-lambda * s).exp(),
        fmt_sig(lambda)
    ))
}

fn sim_loewner(a: &LoewnerArgs, config: Value) -> Result<(), Failure> {
    let params = ChainParams::new(a.weights.kappa, a.x0, a.dt, a.run.seed)?;
    let w = DerivativeWeights::new(a.weights.w1, a.weights.w2)?;
    let grid = match &a.logr_grid {
        Some(g) => g.0.clone(),
        None => a.times.resolve(1.0),
    };
    let est = loewner::estimate_h1_grid(&params, &grid, &w, a.samples)?;
    let point = Point { kappa: a.weights.kappa, x0: a.x0, w1: a.weights.w1, w2: a.weights.w2 };
    let rows = grid.iter().zip(&est).map(|(&s, e)| point.row(s, e, Method::Loewner, ObservableKind::H1)).collect();
    let summary = h1_summary("sim-loewner", &point, &grid, &est)?;
    finish(ResultFile { config, rows: Rows::Estimates(rows) }, &a.run, summary)
}

fn sim_diffusion(a: &DiffusionArgs, config: Value) -> Result<(), Failure> {
    let w = DerivativeWeights::new(a.weights.w1, a.weights.w2)?;
    let params = SdeParams::with_steps(a.weights.kappa, w, a.ds_max, a.absorb_tol, a.run.seed)?;
    let grid = a.times.resolve(1.0);
    let est = diffusion::estimate_h_grid(&params, a.x0, &grid, a.samples)?;
    let point = Point { kappa: a.weights.kappa, x0: a.x0, w1: a.weights.w1, w2: a.weights.w2 };
    let mut rows = Vec::with_capacity(2 * grid.len());
    for (&s, (one, g)) in grid.iter().zip(&est) {
        rows.push(point.row(s, one, Method::Sde, ObservableKind::H1));
        rows.push(point.row(s, g, Method::Sde, ObservableKind::HG));
    }
    let h1: Vec<_> = est.iter().map(|(one, _)| *one).collect();
    let (lambda, g0) = point.closed_form()?;
    let (s, hg) = (grid[grid.len() - 1], est[est.len() - 1].1);
    let summary = format!(
        "{}; h_G(s={}) = {:.6e} +- {:.2e} vs predicted e^(-lambda s) G(x) = {:.6e}",
        h1_summary("sim-diffusion", &point, &grid, &h1)?,
        fmt_sig(s),
        hg.mean,
        hg.stderr,
        (-lambda * s).exp() * g0
    );
    finish(ResultFile { config, rows: Rows::Estimates(rows) }, &a.run, summary)
}

fn solve_pde(a: &PdeArgs, config: Value) -> Result<(), Failure> {
    let grid = a.times.resolve(1.0);
    let s_max = grid.iter().copied().fold(f64::NAN, f64::max);
    let initial = match a.initial {
        Initial::One => InitialLayer::One,
        Initial::G => InitialLayer::G,
    };
    let spec = PdeSpec { nx: a.nx, ns: a.ns, s_max, initial };
    let sol = diffusion::solve_h_pde(a.weights.kappa, a.weights.w1, a.weights.w2, &spec)?;
    if let Some(path) = &a.dump_grid {
        let mut buf = Vec::new();
        sol.write_csv_matrix(&mut buf, 1)?;
        write_atomic(path, &buf)?;
    }
    let point = Point { kappa: a.weights.kappa, x0: a.x0, w1: a.weights.w1, w2: a.weights.w2 };
    let observable = match a.initial {
        Initial::One => ObservableKind::H1,
        Initial::G => ObservableKind::HG,
    };
    let mut rows = Vec::with_capacity(grid.len());
    let mut last = 0.0;
    for &s in &grid {
        last = sol.value_at(a.x0, s)?;
        let e = MonteCarloEstimate { mean: last, stderr: 0.0, n: 0, seed: 0 };
        rows.push(point.row(s, &e, Method::Pde, observable));
    }
    let (lambda, g) = point.closed_form()?;
    let s = grid[grid.len() - 1];
    let summary = format!(
        "solve-pde: h(x={}, s={}) = {:.8e} on {} x {}; predicted {} {:.8e}, lambda = {}",
        fmt_sig(a.x0),
        fmt_sig(s),
        last,
        a.nx,
        a.ns,
        if a.initial == Initial::G { "e^(-lambda s) G(x) =" } else { "lower bound e^(-lambda s) G(x) =" },
        (-lambda * s).exp() * g,
        fmt_sig(lambda)
    );
    finish(ResultFile { config, rows: Rows::Estimates(rows) }, &a.run, summary)
}

fn eigen_check(a: &EigenArgs) -> Result<(), Failure> {
    let p = ExponentParams::new(a.weights.kappa, a.weights.w1, a.weights.w2)?;
    let xs: Vec<f64> = (1..=97).map(|i| i as f64 / 98.0).collect();
    let r = diffusion::eigen_residual(&p, &xs)?;
    let (a1, a2) = boundary_exponents(&p);
    println!(
        "eigen-check: max residual {r:.3e} over {} points (lambda = {}, a1 = {}, a2 = {})",
        xs.len(),
        fmt_sig(lambda_kappa(&p)),
        fmt_sig(a1),
        fmt_sig(a2)
    );
    if a.check && !(r < EIGEN_TOL) {
        return Err(Failure::Check(format!("residual {r:.3e} exceeds {EIGEN_TOL:e}")));
    }
    Ok(())
}

fn martingale(a: &MartingaleArgs, config: Value) -> Result<(), Failure> {
    let w = DerivativeWeights::new(a.weights.w1, a.weights.w2)?;
    let params = SdeParams::with_steps(a.weights.kappa, w, a.ds_max, a.absorb_tol, a.run.seed)?;
    let checkpoints = match &a.s_grid {
        Some(g) => g.0.clone(),
        None => vec![0.25 * a.s, 0.5 * a.s, 0.75 * a.s],
    };
    let qs = diffusion::martingale_check(&params, a.x0, a.s, &checkpoints, a.samples)?;
    let point = Point { kappa: a.weights.kappa, x0: a.x0, w1: a.weights.w1, w2: a.weights.w2 };
    let rows = checkpoints.iter().zip(&qs).map(|(&s, q)| point.row(s, q, Method::Sde, ObservableKind::Q)).collect();
    let (lambda, g) = point.closed_form()?;
    let means: Vec<String> = qs.iter().map(|q| format!("{:.4e} +- {:.1e}", q.mean, q.stderr)).collect();
    let summary = format!(
        "martingale-check: Q means [{}] vs predicted e^(-lambda s0) G(x) = {:.4e}",
        means.join(", "),
        (-lambda * a.s).exp() * g
    );
    finish(ResultFile { config, rows: Rows::Estimates(rows) }, &a.run, summary)
}

fn walkers(a: &WalkerArgs, config: Value) -> Result<(), Failure> {
    let cfg = WalkPairConfig::new(a.packs.0.clone(), a.radii.0.clone(), a.population, a.run.seed)?;
    let run = splitting_estimate(&cfg)?;
    let rows = run
        .radii
        .iter()
        .enumerate()
        .map(|(j, &radius)| WalkerRow {
            packs: a.packs.0.clone(),
            radius,
            estimate: run.estimates[j],
            log_ci: run.log_cis[j],
            population: run.population[j] as u64,
            seed: a.run.seed,
        })
        .collect();
    let ws: Vec<f64> = a.packs.0.iter().map(|&n| n as f64).collect();
    let predicted = with_label(xi_tilde(&WeightVector::new(ws.clone())?), xi_tilde_label(&ws));
    let packs = a.packs.0.iter().map(u32::to_string).collect::<Vec<_>>().join(",");
    let summary = match fit_xi_tilde(&run.points()) {
        Ok(fit) => format!(
            "walkers: exponent for packs ({packs}) = {:.4} +- {:.4} (predicted xi_tilde = {predicted})",
            fit.lambda_hat, fit.ci_halfwidth
        ),
        Err(_) => format!(
            "walkers: P(R = {}) = {:.4e}, log CI +- {:.3} (predicted exponent xi_tilde = {predicted})",
            run.radii[run.radii.len() - 1],
            run.estimate,
            run.log_ci
        ),
    };
    finish(ResultFile { config, rows: Rows::Walkers(rows) }, &a.run, summary)
}

fn report_cmd(a: &ReportArgs) -> Result<(), Failure> {
    let mut files = Vec::with_capacity(a.paths.len());
    for p in &a.paths {
        files.push(read_result(p)?);
    }
    let table = report::build(&files)?;
    let bytes = match a.format {
        TableFormat::Markdown => table.to_markdown().into_bytes(),
        TableFormat::Csv => table.to_csv()?,
    };
    emit(a.out.as_deref(), &bytes)?;
    eprintln!("report: {} rows from {} files, {} failed", table.rows.len(), files.len(), table.failures());
    if a.check {
        gate(&table)?;
    }
    Ok(())
}

fn read_result(path: &Path) -> Result<ResultFile, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    ResultFile::parse(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}
