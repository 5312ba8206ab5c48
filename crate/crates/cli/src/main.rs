mod output;
mod selftest;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use levyheat::harness::{self, Quantity, Scaling, VerifyOptions};
use levyheat::heat;
use levyheat::hitting::{self, HittingEngine};
use levyheat::montecarlo::{self, RngStream, SurvivalConfig};
use levyheat::perimeter;
use levyheat::{Error, LevyModel, ModelKind, OpenSet1D};

use output::{num, Csv};

/// Small-time heat content of open sets in R under symmetric Lévy processes.
#[derive(Debug, Parser)]
#[command(name = "levyheat", version, args_override_self = true)]
struct Cli {
    /// Base seed for every random stream.
    #[arg(long, global = true, env = "LEVYHEAT_SEED", default_value_t = 1)]
    seed: u64,
    /// JSON file whose keys mirror the flags; flags on the command line win.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output format; each command has its own default.
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Write the main output here instead of stdout.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum QuantityArg {
    Heat,
    Spectral,
}

impl From<QuantityArg> for Quantity {
    fn from(q: QuantityArg) -> Self {
        match q {
            QuantityArg::Heat => Quantity::Heat,
            QuantityArg::Spectral => Quantity::Spectral,
        }
    }
}

#[derive(Debug, Args)]
struct Grid {
    /// A single time instead of a grid.
    #[arg(long)]
    t: Option<f64>,
    #[arg(long, default_value_t = 1e-6)]
    t_min: f64,
    #[arg(long, default_value_t = 1e-3)]
    t_max: f64,
    #[arg(long, default_value_t = 2)]
    per_decade: usize,
}

impl Grid {
    fn times(&self) -> levyheat::Result<Vec<f64>> {
        match self.t {
            Some(t) if t > 0.0 => Ok(vec![t]),
            Some(t) => Err(Error::Domain(format!("time must be positive, got {t}"))),
            None => heat::time_grid(self.t_min, self.t_max, self.per_decade),
        }
    }
}

#[derive(Debug, Args)]
struct Budget {
    /// Paths per grid time.
    #[arg(long, alias = "budget", default_value_t = 20_000, value_parser = clap::value_parser!(u64).range(2..))]
    paths: u64,
    /// Steps of the finest monitoring grid.
    #[arg(long, default_value_t = 1024, value_parser = clap::value_parser!(u64).range(1..))]
    steps: u64,
    /// Nested grids used for step extrapolation.
    #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u64).range(1..=4))]
    levels: u64,
}

impl Budget {
    fn survival_config(&self) -> SurvivalConfig {
        SurvivalConfig {
            paths: self.paths as usize,
            steps: self.steps as usize,
            levels: self.levels as usize,
            bridge: true,
            control_variate: true,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// List the model catalog with each model's route.
    Models,
    /// Components, adjacent points and measure of a set.
    DescribeSet {
        #[arg(long)]
        set: OpenSet1D,
    },
    /// Perimeter `Per_X(Ω)`, optionally with its cutoff trace.
    Perimeter {
        #[arg(long)]
        model: LevyModel,
        #[arg(long)]
        set: OpenSet1D,
        /// Print the inner-cutoff trace as well.
        #[arg(long)]
        trace: bool,
    },
    /// Heat-content deficit `|Ω| - H_Ω(t)` on a time grid.
    Heat {
        #[arg(long)]
        model: LevyModel,
        #[arg(long)]
        set: OpenSet1D,
        #[command(flatten)]
        grid: Grid,
        /// Estimate by Monte Carlo with this many samples instead of quadrature.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Spectral deficit `|Ω| - Q_Ω(t)` on a time grid.
    Shc {
        #[arg(long)]
        model: LevyModel,
        #[arg(long)]
        set: OpenSet1D,
        #[command(flatten)]
        grid: Grid,
        #[command(flatten)]
        budget: Budget,
    },
    /// Point-hitting probability `P(T_y ≤ t)`.
    Hitting {
        #[arg(long)]
        model: LevyModel,
        #[arg(long, allow_negative_numbers = true)]
        y: f64,
        #[arg(long)]
        t: f64,
    },
    /// The adjacent-point constant C₁(α).
    C1 {
        #[arg(long)]
        alpha: f64,
        /// Also integrate the hitting probability numerically.
        #[arg(long)]
        validate: bool,
    },
    /// `E[sup_{s≤1} S^{(α)}_s]` by Monte Carlo.
    Esup {
        #[arg(long)]
        alpha: f64,
        #[arg(long, default_value_t = 20_000)]
        paths: usize,
    },
    /// Campaign over the time grid compared with the predicted limit.
    Verify {
        #[arg(long)]
        model: LevyModel,
        #[arg(long)]
        set: OpenSet1D,
        #[arg(long, value_enum, default_value_t = QuantityArg::Spectral)]
        quantity: QuantityArg,
        #[command(flatten)]
        grid: Grid,
        #[command(flatten)]
        budget: Budget,
        /// Paths for the supremum constant.
        #[arg(long, default_value_t = 20_000)]
        sup_paths: usize,
        /// Stop adding grid times after this many seconds.
        #[arg(long)]
        max_seconds: Option<f64>,
    },
    /// Perturbation envelopes between an unperturbed and a perturbed model.
    Perturb {
        #[arg(long)]
        model_x: LevyModel,
        #[arg(long)]
        model_y: LevyModel,
        #[arg(long)]
        set: OpenSet1D,
        #[command(flatten)]
        grid: Grid,
        #[command(flatten)]
        budget: Budget,
        #[arg(long, default_value_t = 20_000)]
        sup_paths: usize,
        /// Also write the envelope table (t,lower,mc,upper) here.
        #[arg(long)]
        table: Option<PathBuf>,
    },
    /// Run the identity and degenerate-case checks of every module.
    Selftest,
    /// Survival probabilities per starting-point stratum at one time.
    Simulate {
        #[arg(long)]
        model: LevyModel,
        #[arg(long)]
        set: OpenSet1D,
        #[arg(long)]
        t: f64,
        #[command(flatten)]
        budget: Budget,
    },
}

/// Outcome of a command: its text and whether its checks passed.
struct Report {
    text: String,
    pass: bool,
}

impl Report {
    fn ok(text: String) -> Self {
        Self { text, pass: true }
    }
}

#[derive(Debug)]
enum Failure {
    Numeric(Error),
    Io(std::io::Error),
    Config(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Numeric(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Io(e)
    }
}

impl Failure {
    fn to_json(&self) -> Value {
        let (kind, message) = match self {
            Failure::Numeric(e) => (error_kind(e), e.to_string()),
            Failure::Io(e) => ("io", e.to_string()),
            Failure::Config(m) => ("config", m.clone()),
        };
        json!({ "error": { "kind": kind, "message": message } })
    }
}

fn error_kind(e: &Error) -> &'static str {
    match e {
        Error::InvalidSet(_) => "invalid_set",
        Error::InvalidModel(_) => "invalid_model",
        Error::Parse { .. } => "parse",
        Error::OutsideSet(_) => "outside_set",
        Error::Domain(_) => "domain",
        Error::Numerical(_) => "numerical",
        Error::Unsupported(_) => "unsupported",
        Error::InsufficientData(_) => "insufficient_data",
    }
}

const SUBCOMMANDS: &[&str] = &[
    "models",
    "describe-set",
    "perimeter",
    "heat",
    "shc",
    "hitting",
    "c1",
    "esup",
    "verify",
    "perturb",
    "selftest",
    "simulate",
];

fn config_path(args: &[OsString]) -> Option<PathBuf> {
    let mut it = args.iter().skip(1);
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Turns a JSON object into flags: `{"t_max": 0.01, "trace": true}` becomes
/// `--t-max 0.01 --trace`.
fn config_flags(path: &Path) -> Result<Vec<OsString>, Failure> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let value: Value = serde_json::from_str(&text).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))?;
    let Value::Object(map) = value else {
        return Err(Failure::Config(format!("{}: expected a JSON object", path.display())));
    };
    let mut flags = Vec::new();
    for (key, v) in map {
        let flag = format!("--{}", key.replace('_', "-"));
        if flag == "--config" {
            continue;
        }
        match v {
            Value::Bool(true) => flags.push(flag.into()),
            Value::Bool(false) | Value::Null => {}
            Value::String(s) => {
                flags.push(flag.into());
                flags.push(s.into());
            }
            Value::Number(n) => {
                flags.push(flag.into());
                flags.push(n.to_string().into());
            }
            other => return Err(Failure::Config(format!("{key}: unsupported value {other}"))),
        }
    }
    Ok(flags)
}

/// Places config-file flags right after the subcommand, ahead of every
/// command-line flag, so that the command line overrides them.
fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>, Failure> {
    let Some(path) = config_path(&args) else {
        return Ok(args);
    };
    let flags = config_flags(&path)?;
    let Some(pos) = args.iter().position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref())) else {
        return Ok(args);
    };
    let mut merged = vec![args[0].clone(), args[pos].clone()];
    merged.extend(flags);
    merged.extend(args[1..pos].iter().cloned());
    merged.extend(args[pos + 1..].iter().cloned());
    Ok(merged)
}

const CATALOG: &[&str] = &[
    "brownian",
    "stable:alpha=0.5",
    "cauchy",
    "stable:alpha=1.5",
    "relativistic:alpha=1,m=1",
    "relativistic:alpha=1.5,m=1",
    "truncated:alpha=0.5",
    "truncated:alpha=1",
    "truncated:alpha=1.5",
    "logperturbed:alpha=1,beta=-2",
    "logperturbed:alpha=1.5,beta=1",
    "drift:gamma=1",
];

fn models(format: Format) -> Result<Report, Failure> {
    let mut rows = Vec::new();
    for lit in CATALOG {
        let m: LevyModel = lit.parse()?;
        let (route, scaling) = match harness::route_of(&m) {
            Ok(r) => (r.to_string(), harness::scaling_of(&m)?.to_string()),
            Err(_) => ("unsupported".to_string(), String::new()),
        };
        let variation = format!("{:?}", m.variation_class()).to_lowercase();
        rows.push((m.to_string(), m.alpha(), variation, route, scaling));
    }
    let text = match format {
        Format::Json => output::json(
            &rows
                .iter()
                .map(|(m, a, v, r, s)| json!({"model": m, "alpha": a, "variation": v, "route": r, "scaling": s}))
                .collect::<Vec<_>>(),
        ),
        Format::Csv => {
            let mut csv = Csv::new(&["model", "alpha", "variation", "route", "scaling"]);
            for (m, a, v, r, s) in &rows {
                csv.row([quote(m), a.map_or(String::new(), num), v.clone(), quote(r), quote(s)]);
            }
            csv.into_string()
        }
    };
    Ok(Report::ok(text))
}

fn quote(s: &str) -> String {
    if s.contains([',', '"']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn describe_set(set: &OpenSet1D, format: Format) -> Report {
    let top = set.augment();
    let text = match format {
        Format::Json => output::json(&json!({
            "set": set.to_string(),
            "components": set.len(),
            "augmented": top.augmented.to_string(),
            "A": top.a,
            "B": top.b,
            "adjacent_points": top.adjacent_points,
            "measure": set.measure(),
        })),
        Format::Csv => {
            let mut csv = Csv::new(&["components", "A", "B", "measure"]);
            csv.row([set.len().to_string(), top.a.to_string(), top.b.to_string(), num(set.measure())]);
            csv.into_string()
        }
    };
    Report::ok(text)
}

fn perimeter_cmd(model: &LevyModel, set: &OpenSet1D, trace: bool, format: Format) -> Result<Report, Failure> {
    let r = perimeter::perimeter(model, set)?;
    let text = match format {
        Format::Json => output::json(&r),
        Format::Csv => {
            let mut csv = Csv::new(&["perimeter", "diverging", "quadrature_error"]);
            csv.row([num(r.value), r.diverging.to_string(), num(r.quadrature_error)]);
            let mut text = csv.into_string();
            if trace {
                let mut t = Csv::new(&["delta", "truncated_integral"]);
                for &(d, v) in &r.inner_cutoff_trace {
                    t.row([num(d), num(v)]);
                }
                text.push('\n');
                text.push_str(&t.into_string());
            }
            text
        }
    };
    Ok(Report::ok(text))
}

/// The route's scaling; the drift model gets `t` so that its failure to
/// converge to the perimeter is visible.
fn scaling(model: &LevyModel) -> levyheat::Result<Scaling> {
    match harness::scaling_of(model) {
        Err(_) if matches!(model.kind(), ModelKind::Drift { .. }) => Ok(Scaling::Linear),
        other => other,
    }
}

/// Rows `(t, raw, scaled, stderr)` where `stderr` belongs to the scaled value.
fn deficit_table(rows: &[(f64, f64, f64, f64)], format: Format, scaling: &Scaling) -> String {
    match format {
        Format::Json => output::json(&json!({
            "scaling": scaling.to_string(),
            "rows": rows.iter().map(|r| json!({"t": r.0, "raw": r.1, "scaled": r.2, "stderr": r.3})).collect::<Vec<_>>(),
        })),
        Format::Csv => {
            let mut csv = Csv::new(&["t", "raw", "scaled", "stderr"]);
            for &(t, raw, scaled, se) in rows {
                csv.row([num(t), num(raw), num(scaled), num(se)]);
            }
            csv.into_string()
        }
    }
}

fn heat_cmd(
    model: &LevyModel,
    set: &OpenSet1D,
    grid: &Grid,
    samples: Option<usize>,
    seed: u64,
    format: Format,
) -> Result<Report, Failure> {
    let scaling = scaling(model)?;
    let mut rows = Vec::new();
    for (k, t) in grid.times()?.into_iter().enumerate() {
        let f = scaling.factor(t);
        let (raw, se) = match samples {
            Some(n) => {
                let e = heat::heat_deficit_mc(model, set, t, n, RngStream::new(seed, k as u64))?;
                (e.mean, e.stderr)
            }
            None => (heat::heat_deficit(model, set, t)?, 0.0),
        };
        rows.push((t, raw, raw * f, se * f));
    }
    Ok(Report::ok(deficit_table(&rows, format, &scaling)))
}

fn shc_cmd(
    model: &LevyModel,
    set: &OpenSet1D,
    grid: &Grid,
    budget: &Budget,
    seed: u64,
    format: Format,
) -> Result<Report, Failure> {
    let scaling = scaling(model)?;
    let engine = match harness::route_of(model) {
        Ok(route) => harness::hybrid_engine(model, set, route, Quantity::Spectral)?,
        Err(_) => None,
    };
    let config = budget.survival_config();
    let mut rows = Vec::new();
    for (k, t) in grid.times()?.into_iter().enumerate() {
        let (d, _) = harness::spectral_deficit(model, set, t, &config, RngStream::new(seed, k as u64), engine.as_ref())?;
        let f = scaling.factor(t);
        rows.push((t, d.mean, d.mean * f, d.stderr * f));
    }
    Ok(Report::ok(deficit_table(&rows, format, &scaling)))
}

fn hitting_cmd(model: &LevyModel, y: f64, t: f64, format: Format) -> Result<Report, Failure> {
    let p = HittingEngine::new(model)?.hitting_cdf(y, t)?;
    let text = match format {
        Format::Json => output::json(&json!({"model": model, "y": y, "t": t, "hitting_cdf": p})),
        Format::Csv => {
            let mut csv = Csv::new(&["y", "t", "hitting_cdf"]);
            csv.row([num(y), num(t), num(p)]);
            csv.into_string()
        }
    };
    Ok(Report::ok(text))
}

fn c1_cmd(alpha: f64, validate: bool, format: Format) -> Result<Report, Failure> {
    let c1 = hitting::c1_constant(alpha)?;
    let check = if validate { Some(hitting::c1_cross_validate(alpha)?) } else { None };
    let text = match (format, check) {
        (Format::Json, None) => output::json(&json!({"alpha": alpha, "c1": c1})),
        (Format::Json, Some(v)) => output::json(&json!({"alpha": alpha, "c1": c1, "numeric": v.numeric, "relative_gap": v.relative_gap})),
        (Format::Csv, None) => format!("{}\n", num(c1)),
        (Format::Csv, Some(v)) => {
            let mut csv = Csv::new(&["alpha", "c1", "numeric", "relative_gap"]);
            csv.row([num(alpha), num(c1), num(v.numeric), num(v.relative_gap)]);
            csv.into_string()
        }
    };
    Ok(Report::ok(text))
}

fn esup_cmd(alpha: f64, paths: usize, seed: u64, format: Format) -> Result<Report, Failure> {
    let e = hitting::expected_sup_stable(alpha, paths, RngStream::new(seed, harness::SUP_STREAM))?;
    let text = match format {
        Format::Json => output::json(&json!({
            "estimate": e,
            "extrapolation_spread": e.extrapolation_spread(),
        })),
        Format::Csv => {
            let mut csv = Csv::new(&["steps", "mean", "stderr", "paths"]);
            for (n, l) in e.steps.iter().zip(&e.by_level) {
                csv.row([n.to_string(), num(l.mean), num(l.stderr), l.n.to_string()]);
            }
            csv.row(["extrapolated".to_string(), num(e.value.mean), num(e.value.stderr), e.value.n.to_string()]);
            csv.into_string()
        }
    };
    Ok(Report::ok(text))
}

fn verify_options(quantity: Quantity, grid: &Grid, budget: &Budget, sup_paths: usize, seed: u64) -> VerifyOptions {
    VerifyOptions {
        quantity,
        t_min: grid.t_min,
        t_max: grid.t_max,
        per_decade: grid.per_decade,
        paths: budget.paths as usize,
        steps: budget.steps as usize,
        levels: budget.levels as usize,
        sup_paths,
        seed,
        max_seconds: None,
    }
}

fn verify_cmd(model: &LevyModel, set: &OpenSet1D, options: &VerifyOptions, format: Format) -> Result<Report, Failure> {
    let r = harness::verify(model, set, options)?;
    let text = match format {
        Format::Json => output::json(&r),
        Format::Csv => {
            let mut csv = Csv::new(&["t", "raw", "scaled", "stderr"]);
            for row in &r.rows {
                csv.row([num(row.t), num(row.deficit), num(row.scaled), num(row.scaled_stderr)]);
            }
            csv.into_string()
        }
    };
    Ok(Report { text, pass: r.pass })
}

fn perturb_cmd(
    x: &LevyModel,
    y: &LevyModel,
    set: &OpenSet1D,
    grid: &Grid,
    options: &VerifyOptions,
    table: Option<&Path>,
    format: Format,
) -> Result<Report, Failure> {
    let r = harness::perturbation_envelope(x, y, set, &grid.times()?, options)?;
    let mut csv = Csv::new(&["t", "lower", "mc", "upper"]);
    for row in &r.rows {
        csv.row([num(row.t), num(row.lower), num(row.deficit_y.mean), num(row.upper)]);
    }
    let csv = csv.into_string();
    if let Some(p) = table {
        fs::write(p, &csv)?;
    }
    let text = match format {
        Format::Json => output::json(&r),
        Format::Csv => csv,
    };
    Ok(Report { text, pass: r.pass })
}

fn simulate_cmd(
    model: &LevyModel,
    set: &OpenSet1D,
    t: f64,
    budget: &Budget,
    seed: u64,
    format: Format,
) -> Result<Report, Failure> {
    let mut config = budget.survival_config();
    config.control_variate = false;
    let e = montecarlo::survival_probability(model, set, t, &config, RngStream::new(seed, 0))?;
    let text = match format {
        Format::Json => output::json(&e),
        Format::Csv => {
            let mut csv = Csv::new(&["stratum", "mean", "stderr", "n"]);
            for (i, s) in e.strata.iter().enumerate() {
                csv.row([i.to_string(), num(s.survival), num(s.stderr), s.paths.to_string()]);
            }
            let q = e.survival();
            csv.row(["total".to_string(), num(q.mean / e.measure), num(q.stderr / e.measure), q.n.to_string()]);
            csv.into_string()
        }
    };
    Ok(Report::ok(text))
}

fn run(cli: Cli) -> Result<Report, Failure> {
    let seed = cli.seed;
    let fmt = |default: Format| cli.format.unwrap_or(default);
    match &cli.command {
        Command::Models => models(fmt(Format::Csv)),
        Command::DescribeSet { set } => Ok(describe_set(set, fmt(Format::Json))),
        Command::Perimeter { model, set, trace } => perimeter_cmd(model, set, *trace, fmt(Format::Csv)),
        Command::Heat { model, set, grid, samples } => heat_cmd(model, set, grid, *samples, seed, fmt(Format::Csv)),
        Command::Shc { model, set, grid, budget } => shc_cmd(model, set, grid, budget, seed, fmt(Format::Csv)),
        Command::Hitting { model, y, t } => hitting_cmd(model, *y, *t, fmt(Format::Csv)),
        Command::C1 { alpha, validate } => c1_cmd(*alpha, *validate, fmt(Format::Csv)),
        Command::Esup { alpha, paths } => esup_cmd(*alpha, *paths, seed, fmt(Format::Csv)),
        Command::Verify { model, set, quantity, grid, budget, sup_paths, max_seconds } => {
            let mut options = verify_options((*quantity).into(), grid, budget, *sup_paths, seed);
            options.max_seconds = *max_seconds;
            verify_cmd(model, set, &options, fmt(Format::Json))
        }
        Command::Perturb { model_x, model_y, set, grid, budget, sup_paths, table } => {
            let options = verify_options(Quantity::Spectral, grid, budget, *sup_paths, seed);
            perturb_cmd(model_x, model_y, set, grid, &options, table.as_deref(), fmt(Format::Json))
        }
        Command::Selftest => {
            let (text, failed) = selftest::run();
            Ok(Report { text, pass: failed == 0 })
        }
        Command::Simulate { model, set, t, budget } => simulate_cmd(model, set, *t, budget, seed, fmt(Format::Csv)),
    }
}

fn fail(f: &Failure) -> ExitCode {
    print!("{}", output::json(&f.to_json()));
    ExitCode::from(3)
}

fn main() -> ExitCode {
    let args = match merge_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(f) => return fail(&f),
    };
    let cli = Cli::parse_from(args);
    let out = cli.output.clone();
    match run(cli) {
        Ok(report) => match output::emit(&report.text, out.as_deref()) {
            Ok(()) if report.pass => ExitCode::SUCCESS,
            Ok(()) => ExitCode::FAILURE,
            Err(e) => fail(&Failure::Io(e)),
        },
        Err(f) => fail(&f),
    }
}
