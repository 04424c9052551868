use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, ValueEnum};
use pipadmm::data::{LabelColumn, LoadOptions};
use pipadmm::Method;
use pipadmm_bench::{
    default_methods, emit_table, run_bench, write_outputs, ConfigOverrides, MethodSpec, ProblemKind, RunSpec,
    Source, TableFormat,
};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ProblemArg {
    Lasso,
    Logreg,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Sparse,
}

#[derive(Debug, Clone, Copy, PartialEq, ValueEnum)]
enum MethodArg {
    Pip,
    Relerr,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EmitArg {
    Text,
    Csv,
    Markdown,
}

/// Compare PIP-ADMM stepsizes against the relative-error ADMM baseline.
#[derive(Debug, Parser)]
#[command(version, about)]
struct Cli {
    #[arg(long, value_enum, default_value = "lasso")]
    problem: ProblemArg,

    /// Random instance dimensions as `m,n`.
    #[arg(long, value_name = "M,N", conflicts_with = "dataset")]
    random: Option<String>,

    #[arg(long, value_name = "PATH")]
    dataset: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,

    /// Label column of a CSV dataset: a 0-based index, a header name, `last`
    /// or `none`.
    #[arg(long, value_name = "K", default_value = "0")]
    label_col: String,

    /// The CSV dataset starts with a header row.
    #[arg(long)]
    header: bool,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Number of seeds `seed, seed + 1, ...` to run.
    #[arg(long, default_value_t = 1)]
    reps: usize,

    /// Method to run; repeatable. Defaults to relerr plus pip at 1, 1.3, 1.6.
    #[arg(long, value_enum)]
    method: Vec<MethodArg>,

    /// Stepsize paired with the `--method` of the same position; repeatable.
    #[arg(long)]
    theta: Vec<f64>,

    #[arg(long)]
    beta: Option<f64>,

    #[arg(long)]
    outer_tol: Option<f64>,

    #[arg(long)]
    max_outer: Option<usize>,

    #[arg(long)]
    max_inner: Option<usize>,

    /// Run the HPE certificate monitor on every solve.
    #[arg(long)]
    certify: bool,

    /// Write the table here (and certificates to `<out>.cert.csv`).
    #[arg(long, value_name = "PATH")]
    out: Option<PathBuf>,

    #[arg(long, value_enum, default_value = "text")]
    emit: EmitArg,
}

fn parse_dims(s: &str) -> Result<(usize, usize)> {
    let Some((m, n)) = s.split_once(',') else {
        bail!("--random expects m,n, got {s:?}");
    };
    Ok((m.trim().parse()?, n.trim().parse()?))
}

fn parse_label_column(s: &str) -> LabelColumn {
    match s {
        "none" => LabelColumn::None,
        "last" => LabelColumn::Last,
        _ => s.parse().map_or_else(|_| LabelColumn::Name(s.to_string()), LabelColumn::Index),
    }
}

fn methods(method: &[MethodArg], theta: &[f64]) -> Result<Vec<MethodSpec>> {
    let to_spec = |m: MethodArg, t: f64| MethodSpec {
        method: match m {
            MethodArg::Pip => Method::Pip,
            MethodArg::Relerr => Method::RelerrBaseline,
        },
        theta: t,
    };
    Ok(match (method.is_empty(), theta.is_empty()) {
        (true, true) => default_methods(),
        (true, false) => theta.iter().map(|&t| MethodSpec::pip(t)).collect(),
        (false, true) => method.iter().map(|&m| to_spec(m, 1.0)).collect(),
        (false, false) if method.len() == theta.len() => {
            method.iter().zip(theta).map(|(&m, &t)| to_spec(m, t)).collect()
        }
        _ => bail!("{} --theta values for {} --method flags", theta.len(), method.len()),
    })
}

fn spec(cli: &Cli) -> Result<RunSpec> {
    let source = match (&cli.random, &cli.dataset) {
        (Some(dims), None) => {
            let (m, n) = parse_dims(dims)?;
            Source::Random { m, n }
        }
        (None, Some(path)) => Source::Dataset {
            path: path.clone(),
            options: match cli.format {
                FormatArg::Csv => LoadOptions::csv(parse_label_column(&cli.label_col), cli.header),
                FormatArg::Sparse => LoadOptions::sparse(),
            },
        },
        _ => bail!("give exactly one of --random or --dataset"),
    };
    Ok(RunSpec {
        problem: match cli.problem {
            ProblemArg::Lasso => ProblemKind::Lasso,
            ProblemArg::Logreg => ProblemKind::Logreg,
        },
        source,
        methods: methods(&cli.method, &cli.theta)?,
        overrides: ConfigOverrides {
            beta: cli.beta,
            outer_tol: cli.outer_tol,
            max_outer: cli.max_outer,
            max_inner: cli.max_inner,
        },
        seed: cli.seed,
        reps: cli.reps,
        certify: cli.certify,
    })
}

fn main() -> Result<ExitCode> {
    let cli = Cli::parse();
    let spec = spec(&cli)?;
    let format = match cli.emit {
        EmitArg::Text => TableFormat::Text,
        EmitArg::Csv => TableFormat::Csv,
        EmitArg::Markdown => TableFormat::Markdown,
    };
    let report = run_bench(&spec)?;
    match &cli.out {
        Some(out) => write_outputs(&report, format, out)?,
        None => print!("{}", emit_table(&report.rows, format)?),
    }
    for row in report.rows.iter().filter(|r| r.failed()) {
        eprintln!(
            "failed: {} {} theta={} seed={}: {}{}",
            row.dataset,
            row.method,
            row.theta,
            row.seed,
            row.status,
            row.cert_violations.map_or_else(String::new, |v| format!(", {v} certificate violations"))
        );
    }
    Ok(if report.any_failed() { ExitCode::from(2) } else { ExitCode::SUCCESS })
}
