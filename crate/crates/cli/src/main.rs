//! `otconv`: W₂ distances, optimal plans, curve traces and convexity checks
//! from the command line.
//!
//! Machine output goes to stdout, diagnostics to stderr. Exit codes: 0 ok,
//! 1 other failure, 2 unreadable input or invalid argument, 3 dimension
//! mismatch, 4 convexity violated, 5 gradient unavailable.

use std::fmt::Write as _;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use otconv::convexity::{
    check_convex_along_curve, check_equivalence_suite, check_first_order_suite, unit_grid, ConvexityReport,
    SuiteConfig, Verdict, DEFAULT_TOL,
};
use otconv::curves::AccelerationFreeCurve;
use otconv::functionals::{builtin, interaction_energy, w_epsilon_kernel, Functional};
use otconv::measures::DiscreteMeasure;
use otconv::sampler::{crossing_pair_plan, SamplerConfig, DEFAULT_SEED};
use otconv::transport::{solve_w2, TransportPlan};
use serde::de::DeserializeOwned;
use thiserror::Error;

#[derive(Debug, Error)]
enum Failure {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: io::Error },
    #[error("cannot parse {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("cannot write {path}: {source}")]
    Write { path: PathBuf, source: io::Error },
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] otconv::Error),
    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        use otconv::Error as E;
        match self {
            Failure::Read { .. } | Failure::Parse { .. } | Failure::Usage(_) => 2,
            Failure::Core(E::DimensionMismatch { .. }) => 3,
            Failure::Core(E::GradientUnavailable(_)) => 5,
            Failure::Core(E::InvalidArgument(_) | E::NonpositiveEpsilon(_) | E::OutOfRange { .. }) => 2,
            _ => 1,
        }
    }
}

type Result<T> = std::result::Result<T, Failure>;

#[derive(Parser)]
#[command(name = "otconv", version, about = "Discrete optimal transport and Wasserstein convexity checks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// W₂ distance, squared cost and optimal plan between two measure files.
    Distance { mu: PathBuf, nu: PathBuf },
    /// Optimal plan between two measure files.
    Plan {
        mu: PathBuf,
        nu: PathBuf,
        #[arg(long, value_enum, default_value_t = Format::Json)]
        format: Format,
    },
    /// Trace a curve over a uniform time grid: the geodesic between two
    /// measures, a generalized geodesic with `--anchor`, or the
    /// acceleration-free curve of a plan file with `--plan`.
    Curve(CurveArgs),
    /// Check λ-convexity of a functional over sampled curves, or along a
    /// single plan curve with `--plan`.
    Check(CheckArgs),
    /// Write the W_ε crossing-curve and kinked-geodesic traces plus a summary.
    ReproExample {
        #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
        eps: f64,
        /// Output directory, created if missing.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 1001)]
        grid: usize,
    },
}

#[derive(Args)]
struct CurveArgs {
    mu: Option<PathBuf>,
    nu: Option<PathBuf>,
    #[arg(long, conflicts_with_all = ["mu", "nu", "anchor"])]
    plan: Option<PathBuf>,
    #[arg(long)]
    anchor: Option<PathBuf>,
    #[arg(long, default_value_t = 101)]
    grid: usize,
    #[arg(long, value_enum, default_value_t = Format::Csv)]
    format: Format,
}

#[derive(Args)]
struct CheckArgs {
    /// second-moment, potential:{quadratic,neg-quadratic,quartic,gaussian-bump},
    /// interaction:{weps,gaussian}
    #[arg(long, default_value = "second-moment")]
    functional: String,
    /// Convexity modulus; defaults to the functional's own claim, else 0.
    #[arg(long, allow_negative_numbers = true)]
    lambda: Option<f64>,
    /// ε of the W_ε kernel.
    #[arg(long, default_value_t = 1.0, allow_negative_numbers = true)]
    eps: f64,
    /// Width of the Gaussian interaction kernel.
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, default_value_t = 101)]
    grid: usize,
    #[arg(long, default_value_t = 100)]
    budget: usize,
    #[arg(long, env = "OTCONV_SEED")]
    seed: Option<u64>,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Inclusive dimension range of sampled measures, e.g. `1:3`.
    #[arg(long, value_parser = parse_range)]
    dims: Option<(usize, usize)>,
    /// Inclusive atom-count range of sampled measures, e.g. `2:5`.
    #[arg(long, value_parser = parse_range)]
    atoms: Option<(usize, usize)>,
    /// Make sample 0 the two-particle crossing configuration at scale ε.
    #[arg(long)]
    include_paper_pair: bool,
    /// Check displacement monotonicity instead of chord inequalities.
    #[arg(long)]
    first_order: bool,
    /// Check along this plan's acceleration-free curve only.
    #[arg(long, conflicts_with = "first_order")]
    plan: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Format::Json)]
    format: Format,
}

fn parse_range(s: &str) -> std::result::Result<(usize, usize), String> {
    let (lo, hi) = s.split_once(':').unwrap_or((s, s));
    let lo: usize = lo.trim().parse().map_err(|e| format!("{e}"))?;
    let hi: usize = hi.trim().parse().map_err(|e| format!("{e}"))?;
    if lo == 0 || lo > hi {
        return Err(format!("need 1 <= lo <= hi, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

/// 17 significant digits, enough to round-trip any `f64`.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|source| Failure::Read { path: path.into(), source })?;
    serde_json::from_str(&text).map_err(|source| Failure::Parse { path: path.into(), source })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|source| Failure::Write { path: path.into(), source })
}

fn json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

fn check_grid(grid: usize) -> Result<()> {
    if grid < 3 {
        return Err(Failure::Usage(format!("--grid must be at least 3, got {grid}")));
    }
    Ok(())
}

/// Output text plus the process exit status it implies.
struct Output {
    stdout: String,
    code: u8,
}

impl Output {
    fn ok(stdout: String) -> Self {
        Output { stdout, code: 0 }
    }
}

fn cmd_distance(mu: &Path, nu: &Path) -> Result<Output> {
    let (mu, nu): (DiscreteMeasure, DiscreteMeasure) = (read_json(mu)?, read_json(nu)?);
    let ot = solve_w2(&mu, &nu)?;
    let body = serde_json::json!({ "w2": ot.w2, "cost": ot.cost, "plan": ot.plan });
    Ok(Output::ok(json(&body)))
}

fn cmd_plan(mu: &Path, nu: &Path, format: Format) -> Result<Output> {
    let (mu, nu): (DiscreteMeasure, DiscreteMeasure) = (read_json(mu)?, read_json(nu)?);
    let ot = solve_w2(&mu, &nu)?;
    Ok(Output::ok(match format {
        Format::Json => json(&ot.plan),
        Format::Csv => {
            let mut out = String::from("source,target,mass\n");
            for e in ot.plan.entries() {
                let _ = writeln!(out, "{},{},{}", e.source, e.target, num(e.mass));
            }
            out
        }
    }))
}

fn curve_csv(curve: &AccelerationFreeCurve, grid: usize) -> Result<String> {
    let mut out = String::from("t,atom_index");
    for k in 1..=curve.dim() {
        let _ = write!(out, ",x_{k}");
    }
    out.push_str(",weight\n");
    for t in unit_grid(grid) {
        let mu = curve.eval(t)?;
        for (i, (x, w)) in mu.atoms().zip(mu.weights()).enumerate() {
            let _ = write!(out, "{},{i}", num(t));
            for c in x {
                let _ = write!(out, ",{}", num(*c));
            }
            let _ = writeln!(out, ",{}", num(*w));
        }
    }
    Ok(out)
}

fn cmd_curve(args: &CurveArgs) -> Result<Output> {
    check_grid(args.grid)?;
    let curve = match (&args.plan, &args.mu, &args.nu, &args.anchor) {
        (Some(plan), ..) => AccelerationFreeCurve::from_plan(&read_json::<TransportPlan>(plan)?),
        (None, Some(mu), Some(nu), None) => AccelerationFreeCurve::geodesic(&read_json(mu)?, &read_json(nu)?)?,
        (None, Some(mu), Some(nu), Some(anchor)) => {
            AccelerationFreeCurve::generalized_geodesic(&read_json(anchor)?, &read_json(mu)?, &read_json(nu)?)?
        }
        _ => return Err(Failure::Usage("curve needs two measure files or --plan".into())),
    };
    eprintln!("{}", curve.description());
    Ok(Output::ok(match args.format {
        Format::Csv => curve_csv(&curve, args.grid)?,
        Format::Json => {
            let steps = unit_grid(args.grid)
                .into_iter()
                .map(|t| Ok(serde_json::json!({ "t": t, "measure": curve.eval(t)? })))
                .collect::<Result<Vec<_>>>()?;
            json(&serde_json::json!({ "kind": curve.kind(), "plan_cost": curve.plan_cost(), "grid": steps }))
        }
    }))
}

fn load_functional(args: &CheckArgs) -> Result<Box<dyn Functional>> {
    let param = if args.functional == "interaction:gaussian" { args.sigma } else { args.eps };
    Ok(builtin(&args.functional, param)?)
}

fn report_csv(rows: &[(&str, &ConvexityReport)]) -> String {
    let mut out = String::from("family,verdict,worst_slack,checks_run\n");
    for (name, r) in rows {
        let _ = writeln!(out, "{name},{:?},{},{}", r.verdict, num(r.worst_slack), r.checks_run);
    }
    out
}

fn verdict_code(v: Verdict) -> u8 {
    if v == Verdict::Violated {
        4
    } else {
        0
    }
}

fn cmd_check(args: &CheckArgs) -> Result<Output> {
    check_grid(args.grid)?;
    if !(args.tol > 0.0) {
        return Err(Failure::Usage(format!("--tol must be positive, got {}", args.tol)));
    }
    if args.budget == 0 {
        return Err(Failure::Usage("--budget must be at least 1".into()));
    }
    let f = load_functional(args)?;
    let lambda = args.lambda.or(f.claimed_lambda()).unwrap_or(0.0);
    let seed = args.seed.unwrap_or(DEFAULT_SEED);
    eprintln!("checking {} at lambda = {lambda}, seed = {seed}", f.name());

    if let Some(path) = &args.plan {
        let curve = AccelerationFreeCurve::from_plan(&read_json::<TransportPlan>(path)?);
        let mut r = check_convex_along_curve(&f, &curve, lambda, args.grid, args.tol)?;
        r.seed = None;
        let stdout = match args.format {
            Format::Json => json(&r),
            Format::Csv => report_csv(&[("curve", &r)]),
        };
        return Ok(Output { stdout, code: verdict_code(r.verdict) });
    }

    let defaults = SamplerConfig::default();
    let config = SuiteConfig {
        sampler: SamplerConfig {
            dims: args.dims.unwrap_or(defaults.dims),
            atoms: args.atoms.unwrap_or(defaults.atoms),
            seed,
            include_paper_pair: args.include_paper_pair,
            paper_pair_scale: args.eps,
            ..defaults
        },
        grid_size: args.grid,
        tol: args.tol,
    };

    if args.first_order {
        let r = check_first_order_suite(&f, lambda, &config, args.budget)?;
        let stdout = match args.format {
            Format::Json => json(&r),
            Format::Csv => report_csv(&[("first-order", &r)]),
        };
        return Ok(Output { stdout, code: verdict_code(r.verdict) });
    }

    let r = check_equivalence_suite(&f, lambda, &config, args.budget)?;
    if r.disagreements > 0 {
        eprintln!("{} samples where curve families disagree", r.disagreements);
    }
    if r.non_differentiability_witness {
        eprintln!("geodesics satisfied while plan curves violated: the functional is not differentiable");
    }
    let stdout = match args.format {
        Format::Json => json(&r),
        Format::Csv => report_csv(&[
            ("geodesics", &r.geodesics),
            ("generalized-geodesics", &r.generalized_geodesics),
            ("plan-curves", &r.plan_curves),
            ("overall", &r.overall),
        ]),
    };
    Ok(Output { stdout, code: verdict_code(r.overall.verdict) })
}

fn value_trace<F: Functional>(f: &F, curve: &AccelerationFreeCurve, grid: usize) -> Result<(String, Vec<f64>)> {
    let mut out = String::from("t,value\n");
    let mut values = Vec::with_capacity(grid);
    for t in unit_grid(grid) {
        let v = f.evaluate(&curve.eval(t)?);
        let _ = writeln!(out, "{},{}", num(t), num(v));
        values.push(v);
    }
    Ok((out, values))
}

fn cmd_repro_example(eps: f64, out: &Path, grid: usize) -> Result<Output> {
    check_grid(grid)?;
    let f = interaction_energy(w_epsilon_kernel(eps)?);

    // x = ε, x' = 0 swapped with y = 0, y' = ε: both particles cross at t = ½.
    let crossing = AccelerationFreeCurve::from_plan(&crossing_pair_plan(eps));
    // ½(δ_0 + δ_{ε/2}) to ½(δ_0 + δ_{2ε}): the pair separation grows
    // linearly and leaves the kernel's support part-way through.
    let start = DiscreteMeasure::uniform(vec![vec![0.0], vec![eps / 2.0]])?;
    let end = DiscreteMeasure::uniform(vec![vec![0.0], vec![2.0 * eps]])?;
    let geodesic = AccelerationFreeCurve::geodesic(&start, &end)?;

    let (crossing_csv, _) = value_trace(&f, &crossing, grid)?;
    let (geodesic_csv, geo_values) = value_trace(&f, &geodesic, grid)?;

    let p = geodesic.particles();
    let gap0 = p[1].start[0] - p[0].start[0];
    let gap_rate = p[1].displacement[0] - p[0].displacement[0];
    let summary = serde_json::json!({
        "eps": eps,
        "F_end": f.evaluate(&crossing.eval(0.0)?),
        "F_mid": f.evaluate(&crossing.eval(0.5)?),
        "kink_t": (eps - gap0) / gap_rate,
        "geodesic_F_start": geo_values[0],
        "geodesic_F_end": geo_values[grid - 1],
    });

    fs::create_dir_all(out).map_err(|source| Failure::Write { path: out.into(), source })?;
    write_file(&out.join("crossing.csv"), &crossing_csv)?;
    write_file(&out.join("geodesic.csv"), &geodesic_csv)?;
    let summary = json(&summary);
    write_file(&out.join("summary.json"), &summary)?;
    eprintln!("wrote crossing.csv, geodesic.csv and summary.json to {}", out.display());
    Ok(Output::ok(summary))
}

fn run(cli: Cli) -> Result<Output> {
    match cli.command {
        Command::Distance { mu, nu } => cmd_distance(&mu, &nu),
        Command::Plan { mu, nu, format } => cmd_plan(&mu, &nu, format),
        Command::Curve(args) => cmd_curve(&args),
        Command::Check(args) => cmd_check(&args),
        Command::ReproExample { eps, out, grid } => cmd_repro_example(eps, &out, grid),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(output) => {
            let mut stdout = io::stdout().lock();
            if let Err(e) = stdout.write_all(output.stdout.as_bytes()).and_then(|_| stdout.flush()) {
                eprintln!("error: {e}");
                return ExitCode::from(1);
            }
            ExitCode::from(output.code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
