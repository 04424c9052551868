//! Benchmark harness: runs PIP-ADMM at several stepsizes and the
//! relative-error baseline on LASSO or logistic instances and tabulates
//! outer/inner iteration counts, wall time and final objective.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use pipadmm::data::{
    apply_scaling, gen_random_lasso, gen_random_logreg, load_dataset, LoadOptions, ScalingMode,
};
use pipadmm::monitor::{d0_estimate, CertificateRow};
use pipadmm::problems::{lasso_problem, logreg_problem};
use pipadmm::solver::{default_tau1, run, run_observed, theta_upper_bound};
use pipadmm::{
    CertificateMonitor64, Dataset64, Iterate, LassoInstance64, LogRegInstance64, MSeminorm, Method,
    RandomLassoSpec, SolveResult64, SolveStatus, SolverConfig64, SplitProblem,
};
use serde::{Deserialize, Serialize};

/// Tolerance and budget of the reference solve that estimates `d0`.
const REFERENCE_TOL: f64 = 1e-8;
const REFERENCE_MAX_OUTER: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Lasso,
    Logreg,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Source {
    /// Seeded random instance of size `m x n`.
    Random { m: usize, n: usize },
    Dataset { path: PathBuf, options: LoadOptions },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MethodSpec {
    pub method: Method,
    pub theta: f64,
}

impl MethodSpec {
    pub fn pip(theta: f64) -> Self {
        Self {
            method: Method::Pip,
            theta,
        }
    }

    pub fn relerr() -> Self {
        Self {
            method: Method::RelerrBaseline,
            theta: 1.0,
        }
    }

    pub fn label(&self) -> &'static str {
        match self.method {
            Method::Pip => "pip",
            Method::RelerrBaseline => "relerr",
        }
    }

    /// The default configuration for this method.
    pub fn config(&self) -> Result<SolverConfig64> {
        match self.method {
            Method::Pip => Ok(SolverConfig64::pip(self.theta)?),
            Method::RelerrBaseline => {
                if self.theta != 1.0 {
                    bail!("the relative-error baseline runs with theta = 1, got {}", self.theta);
                }
                Ok(SolverConfig64::relerr_baseline())
            }
        }
    }

    fn validate(&self) -> Result<()> {
        if self.method == Method::Pip {
            let tau1 = default_tau1(self.theta).with_context(|| format!("theta = {}", self.theta))?;
            let bound = theta_upper_bound(tau1)?;
            if self.theta.partial_cmp(&bound) != Some(std::cmp::Ordering::Less) {
                bail!("theta = {} is not below its upper bound {bound}", self.theta);
            }
        }
        self.config().map(|_| ())
    }
}

/// The default comparison: the baseline and PIP at the three stepsizes of
/// the experiments.
pub fn default_methods() -> Vec<MethodSpec> {
    vec![MethodSpec::relerr(), MethodSpec::pip(1.0), MethodSpec::pip(1.3), MethodSpec::pip(1.6)]
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ConfigOverrides {
    pub beta: Option<f64>,
    pub outer_tol: Option<f64>,
    pub max_outer: Option<usize>,
    pub max_inner: Option<usize>,
}

impl ConfigOverrides {
    fn apply(&self, mut config: SolverConfig64) -> SolverConfig64 {
        if let Some(beta) = self.beta {
            config.beta = beta;
        }
        if let Some(tol) = self.outer_tol {
            config.outer_tol = tol;
        }
        if let Some(max_outer) = self.max_outer {
            config.max_outer = max_outer;
        }
        if self.max_inner.is_some() {
            config.max_inner = self.max_inner;
        }
        config
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub problem: ProblemKind,
    pub source: Source,
    pub methods: Vec<MethodSpec>,
    pub overrides: ConfigOverrides,
    /// First seed; repetitions use `seed, seed + 1, ...`.
    pub seed: u64,
    pub reps: usize,
    /// Certify the PIP runs; baseline rows are never certified.
    pub certify: bool,
}

impl RunSpec {
    pub fn random(problem: ProblemKind, m: usize, n: usize, seed: u64) -> Self {
        Self {
            problem,
            source: Source::Random { m, n },
            methods: default_methods(),
            overrides: ConfigOverrides::default(),
            seed,
            reps: 1,
            certify: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            bail!("no methods to run");
        }
        if self.reps == 0 {
            bail!("reps must be at least 1");
        }
        for m in &self.methods {
            m.validate()?;
            self.overrides.apply(m.config()?).validate()?;
        }
        if let Source::Random { m, n } = self.source {
            RandomLassoSpec::new(m, n, self.seed).validate()?;
        }
        Ok(())
    }

    fn seeds(&self) -> impl Iterator<Item = u64> + '_ {
        (0..self.reps as u64).map(|r| self.seed.wrapping_add(r))
    }
}

/// One (instance, method, stepsize) solve.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub dataset: String,
    pub dim: String,
    pub method: String,
    pub theta: f64,
    pub out: usize,
    pub inner: usize,
    pub time_s: f64,
    pub objective: f64,
    pub step_norm: f64,
    pub seed: u64,
    pub status: String,
    /// Number of violated certificate inequalities, when certification ran.
    pub cert_violations: Option<usize>,
}

impl BenchRow {
    pub fn failed(&self) -> bool {
        self.status != "converged" || self.cert_violations.is_some_and(|v| v > 0)
    }
}

/// A certificate row tagged with the run it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertRecord {
    pub dataset: String,
    pub method: String,
    pub theta: f64,
    pub seed: u64,
    pub k: usize,
    pub slack: f64,
    pub slack_scale: f64,
    pub eta: f64,
    pub step_norm: f64,
    pub best_step_norm: f64,
    pub pointwise_bound: f64,
    pub r_a_norm: f64,
    pub ergodic_bound: f64,
    pub eps_x: f64,
    pub eps_y: f64,
    pub eps_bound: f64,
    pub feasibility_gap: f64,
}

impl CertRecord {
    fn new(row: &BenchRow, c: &CertificateRow) -> Self {
        Self {
            dataset: row.dataset.clone(),
            method: row.method.clone(),
            theta: row.theta,
            seed: row.seed,
            k: c.k,
            slack: c.slack,
            slack_scale: c.slack_scale,
            eta: c.eta,
            step_norm: c.step_norm,
            best_step_norm: c.best_step_norm,
            pointwise_bound: c.pointwise_bound,
            r_a_norm: c.r_a_norm,
            ergodic_bound: c.ergodic_bound,
            eps_x: c.eps_x,
            eps_y: c.eps_y,
            eps_bound: c.eps_bound,
            feasibility_gap: c.feasibility_gap,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct BenchReport {
    pub rows: Vec<BenchRow>,
    pub certificates: Vec<CertRecord>,
}

impl BenchReport {
    pub fn any_failed(&self) -> bool {
        self.rows.iter().any(BenchRow::failed)
    }

    pub fn write_certificates(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
        for r in &self.certificates {
            w.serialize(r)?;
        }
        w.flush()?;
        Ok(())
    }
}

enum Instance {
    Lasso(LassoInstance64),
    Logreg(LogRegInstance64),
}

impl Instance {
    fn load(spec: &RunSpec, seed: u64) -> Result<(String, Self)> {
        let (name, ds) = match &spec.source {
            Source::Random { m, n } => {
                let rs = RandomLassoSpec::new(*m, *n, seed);
                let name = format!("random-{seed}");
                return Ok(match spec.problem {
                    ProblemKind::Lasso => (name, Self::Lasso(gen_random_lasso(&rs)?)),
                    ProblemKind::Logreg => (name, Self::Logreg(gen_random_logreg(&rs)?)),
                });
            }
            Source::Dataset { path, options } => {
                let ds: Dataset64 =
                    load_dataset(path, options).with_context(|| format!("loading {}", path.display()))?;
                (ds.name.clone(), ds)
            }
        };
        Ok(match spec.problem {
            ProblemKind::Lasso => {
                let ds = apply_scaling(ds, ScalingMode::Columns)?;
                (name, Self::Lasso(LassoInstance64::from_dataset(&ds)?))
            }
            ProblemKind::Logreg => {
                let ds = apply_scaling(ds, ScalingMode::Auto)?;
                (name, Self::Logreg(LogRegInstance64::from_dataset(&ds)?))
            }
        })
    }

    fn dim(&self) -> String {
        match self {
            Self::Lasso(i) => format!("{}x{}", i.m(), i.n()),
            Self::Logreg(i) => format!("{}x{}", i.m(), i.n()),
        }
    }
}

struct Outcome {
    result: SolveResult64,
    time_s: f64,
    objective: f64,
    certificates: Option<Vec<CertificateRow>>,
}

fn solve<P: SplitProblem<f64>>(
    problem: &P,
    config: &SolverConfig64,
    certify: bool,
    objective: impl Fn(&SolveResult64) -> f64,
) -> Result<Outcome> {
    let start = Instant::now();
    let result = run(problem, config, Iterate::zeros(problem))?;
    let time_s = start.elapsed().as_secs_f64();
    let certificates = if certify {
        let reference = config.with_outer_tol(REFERENCE_TOL).with_max_outer(REFERENCE_MAX_OUTER);
        let reference = run(problem, &reference, Iterate::zeros(problem))?;
        let metric = MSeminorm::new(problem, config.beta, config.theta);
        let d0 = d0_estimate(&Iterate::zeros(problem).z(), &reference.final_iterate.z(), &metric)?;
        let mut monitor = CertificateMonitor64::new(config, d0)?;
        run_observed(problem, config, Iterate::zeros(problem), &mut monitor)?;
        Some(monitor.rows().to_vec())
    } else {
        None
    };
    Ok(Outcome {
        objective: objective(&result),
        result,
        time_s,
        certificates,
    })
}

fn status_label(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Converged => "converged",
        SolveStatus::MaxIter => "max_iter",
        SolveStatus::InnerFailure => "inner_failure",
    }
}

/// Runs every method on every repetition. Solver errors are recorded in the
/// row's status instead of aborting the batch.
pub fn run_bench(spec: &RunSpec) -> Result<BenchReport> {
    spec.validate()?;
    let mut report = BenchReport::default();
    for seed in spec.seeds() {
        let (name, instance) = Instance::load(spec, seed)?;
        let dim = instance.dim();
        for m in &spec.methods {
            let config = spec.overrides.apply(m.config()?);
            // The baseline's acceptance test only implies the PIP test with
            // tau2 = 1, where the contraction factor is 1 and no bound holds.
            let certify = spec.certify && m.method == Method::Pip;
            let outcome = match &instance {
                Instance::Lasso(inst) => lasso_problem(inst, &config).map_err(Into::into).and_then(|p| {
                    solve(&p, &config, certify, |r| p.objective(r.final_iterate.y.view()))
                }),
                Instance::Logreg(inst) => logreg_problem(inst, &config).map_err(Into::into).and_then(|p| {
                    solve(&p, &config, certify, |r| p.objective(r.final_iterate.y.view()))
                }),
            };
            let mut row = BenchRow {
                dataset: name.clone(),
                dim: dim.clone(),
                method: m.label().to_string(),
                theta: m.theta,
                out: 0,
                inner: 0,
                time_s: 0.0,
                objective: f64::NAN,
                step_norm: f64::NAN,
                seed,
                status: String::new(),
                cert_violations: None,
            };
            match outcome {
                Ok(o) => {
                    row.out = o.result.outer_count;
                    row.inner = o.result.total_inner_count;
                    row.time_s = o.time_s;
                    row.objective = o.objective;
                    row.step_norm = o.result.final_step_norm().unwrap_or(f64::NAN);
                    row.status = status_label(o.result.status).to_string();
                    if let Some(certs) = o.certificates {
                        row.cert_violations = Some(certs.iter().map(|c| c.violations().len()).sum());
                        report.certificates.extend(certs.iter().map(|c| CertRecord::new(&row, c)));
                    }
                }
                Err(e) => row.status = format!("error: {e}"),
            }
            report.rows.push(row);
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
    Markdown,
}

const HEADERS: [&str; 12] = [
    "dataset", "dim", "method", "theta", "out", "inner", "time_s", "objective", "step_norm", "seed",
    "status", "cert_violations",
];

fn cells(row: &BenchRow) -> [String; 12] {
    [
        row.dataset.clone(),
        row.dim.clone(),
        row.method.clone(),
        format!("{:.1}", row.theta),
        row.out.to_string(),
        row.inner.to_string(),
        format!("{:.3}", row.time_s),
        format!("{:.6}", row.objective),
        format!("{:.3e}", row.step_norm),
        row.seed.to_string(),
        row.status.clone(),
        row.cert_violations.map_or_else(|| "-".to_string(), |v| v.to_string()),
    ]
}

/// Mean and range of the outer/inner counts of one method across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub method: String,
    pub theta: f64,
    pub runs: usize,
    pub out_mean: f64,
    pub out_range: (usize, usize),
    pub inner_mean: f64,
    pub inner_range: (usize, usize),
}

pub fn summarize(rows: &[BenchRow]) -> Vec<Summary> {
    let mut keys: Vec<(String, f64)> = Vec::new();
    for r in rows {
        if !keys.iter().any(|(m, t)| *m == r.method && *t == r.theta) {
            keys.push((r.method.clone(), r.theta));
        }
    }
    keys.into_iter()
        .map(|(method, theta)| {
            let group: Vec<&BenchRow> = rows.iter().filter(|r| r.method == method && r.theta == theta).collect();
            let n = group.len();
            let range = |f: fn(&BenchRow) -> usize| {
                let vals = group.iter().map(|r| f(r));
                (vals.clone().min().unwrap_or(0), vals.max().unwrap_or(0))
            };
            let mean = |f: fn(&BenchRow) -> usize| group.iter().map(|r| f(r) as f64).sum::<f64>() / n as f64;
            Summary {
                runs: n,
                out_mean: mean(|r| r.out),
                out_range: range(|r| r.out),
                inner_mean: mean(|r| r.inner),
                inner_range: range(|r| r.inner),
                method,
                theta,
            }
        })
        .collect()
}

fn write_summary(out: &mut String, rows: &[BenchRow], markdown: bool) {
    let summaries = summarize(rows);
    if summaries.iter().all(|s| s.runs < 2) {
        return;
    }
    out.push('\n');
    for s in summaries {
        let line = format!(
            "{} theta={:.1}: out {:.1} [{}, {}], inner {:.1} [{}, {}] over {} runs",
            s.method, s.theta, s.out_mean, s.out_range.0, s.out_range.1, s.inner_mean, s.inner_range.0,
            s.inner_range.1, s.runs
        );
        if markdown {
            let _ = writeln!(out, "- {line}");
        } else {
            let _ = writeln!(out, "{line}");
        }
    }
}

/// Renders the rows. CSV output has one header line followed by one record
/// per row in `BenchRow` field order and parses back into identical rows.
pub fn emit_table(rows: &[BenchRow], format: TableFormat) -> Result<String> {
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in rows {
                w.serialize(r)?;
            }
            if rows.is_empty() {
                w.write_record(HEADERS)?;
            }
            Ok(String::from_utf8(w.into_inner()?)?)
        }
        TableFormat::Text => {
            let table: Vec<[String; 12]> = rows.iter().map(cells).collect();
            let widths: Vec<usize> = (0..HEADERS.len())
                .map(|j| table.iter().map(|r| r[j].len()).chain([HEADERS[j].len()]).max().unwrap())
                .collect();
            let mut out = String::new();
            let line = |cols: &[String]| {
                cols.iter()
                    .zip(&widths)
                    .map(|(c, w)| format!("{c:>w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
            };
            let header: Vec<String> = HEADERS.iter().map(|h| h.to_string()).collect();
            let _ = writeln!(out, "{}", line(&header));
            for r in &table {
                let _ = writeln!(out, "{}", line(r));
            }
            write_summary(&mut out, rows, false);
            Ok(out)
        }
        TableFormat::Markdown => {
            let mut out = String::new();
            let _ = writeln!(out, "| {} |", HEADERS.join(" | "));
            let _ = writeln!(out, "|{}", "---|".repeat(HEADERS.len()));
            for r in rows {
                let _ = writeln!(out, "| {} |", cells(r).join(" | "));
            }
            write_summary(&mut out, rows, true);
            Ok(out)
        }
    }
}

/// Parses CSV produced by [`emit_table`].
pub fn parse_csv(text: &str) -> Result<Vec<BenchRow>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// `<out>.cert.csv` next to the table output.
pub fn cert_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".cert.csv");
    PathBuf::from(s)
}

/// Writes the table to `out` and, when certificates were collected, the
/// certificate report next to it.
pub fn write_outputs(report: &BenchReport, format: TableFormat, out: &Path) -> Result<()> {
    let text = emit_table(&report.rows, format)?;
    std::fs::write(out, text).with_context(|| format!("writing {}", out.display()))?;
    if !report.certificates.is_empty() {
        report.write_certificates(&cert_path(out))?;
    }
    Ok(())
}
