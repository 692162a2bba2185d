use std::fs;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use extremecast::bootstrap::{pointwise_interval, sieve_bootstrap_forecasts, simultaneous_band};
use extremecast::forecast::{forecast_tsgaevm, FgevPanel, GaevPanel, VarOptions};
use extremecast::gaev::{coarse_lattice, full_grid, select_dims, GaevDims};
use extremecast::ingest::{parse_csv, slice_annual, FunctionalSeries};
use extremecast::persist;
use extremecast::simulate::{
    expanding_window_eval, generate, monte_carlo, temperature_fixture, DgpSpec, EvalConfig,
    FixtureSpec, Forecaster,
};

/// Forecast annual curves of daily maxima with GEV and spline-GEV models.
#[derive(Debug, Parser, Serialize)]
#[command(name = "extremecast", version)]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "EXTREMECAST_OUT", default_value = "out")]
    out: PathBuf,
    /// Worker threads; defaults to the number of cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
enum Command {
    /// Forecast a quantile curve from a daily record or a saved series.
    Forecast(ForecastArgs),
    /// Sieve-bootstrap pointwise and simultaneous bands for the fGAEVM
    /// quantile forecast.
    Intervals(IntervalArgs),
    /// Monte-Carlo comparison of the three forecasters.
    Simulate(SimulateArgs),
    /// Select spline dimensions by holding out the last curve.
    Cv(CvArgs),
    /// Expanding-window evaluation on one simulated series.
    Eval(EvalArgs),
    /// Write the synthetic 120-year temperature record.
    GenFixture(FixtureArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
enum Method {
    Fgev,
    Tsgaevm,
    Fgaevm,
}

#[derive(Debug, Args, Serialize)]
struct DimsArgs {
    /// Spline dimensions `d_mu,d_sigma,d_xi` (0 = intercept only).
    #[arg(long, value_parser = parse_dims, conflicts_with = "cv")]
    dims: Option<GaevDims>,
    /// Choose the dimensions by cross-validation.
    #[arg(long)]
    cv: bool,
    /// Cross-validate over every dimension combination instead of the
    /// coarse lattice.
    #[arg(long)]
    full_grid: bool,
    /// Let the shape be functional during cross-validation.
    #[arg(long)]
    free_xi: bool,
}

#[derive(Debug, Args, Serialize)]
struct ForecastArgs {
    /// `date,tmax` CSV or a saved functional series.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "fgaevm")]
    method: Method,
    #[command(flatten)]
    dims: DimsArgs,
    #[arg(long, default_value_t = 1)]
    horizon: usize,
    #[arg(long, default_value_t = 0.999)]
    quantile: f64,
    /// Model the first differences of the coefficient series.
    #[arg(long)]
    difference: bool,
}

#[derive(Debug, Args, Serialize)]
struct IntervalArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    dims: DimsArgs,
    #[arg(long, default_value_t = 0.999)]
    quantile: f64,
    /// Bootstrap replicates.
    #[arg(long = "B", alias = "b", default_value_t = 1000)]
    b: usize,
    #[arg(long, default_value_t = 0.95)]
    level: f64,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

#[derive(Debug, Args, Serialize)]
struct DgpArgs {
    #[arg(long, default_value_t = 2)]
    setting: u8,
    #[arg(long = "T", alias = "t", default_value_t = 50)]
    t: usize,
    #[arg(long = "J", alias = "j", default_value_t = 30)]
    j: usize,
    #[arg(long, default_value_t = 7)]
    seed: u64,
    /// Half-width of the range of the coefficient means.
    #[arg(long)]
    coef_mean_range: Option<f64>,
}

impl DgpArgs {
    fn spec(&self) -> DgpSpec {
        let base = DgpSpec::default();
        DgpSpec {
            setting: self.setting,
            t: self.t,
            j: self.j,
            seed: self.seed,
            coef_mean_range: self.coef_mean_range.unwrap_or(base.coef_mean_range),
            ..base
        }
    }
}

#[derive(Debug, Args, Serialize)]
struct SimulateArgs {
    #[command(flatten)]
    dgp: DgpArgs,
    #[arg(long, default_value_t = 50)]
    reps: usize,
}

#[derive(Debug, Args, Serialize)]
struct CvArgs {
    #[arg(long)]
    input: PathBuf,
    /// Evaluate only these candidates (repeatable).
    #[arg(long = "candidate", value_parser = parse_dims)]
    candidates: Vec<GaevDims>,
    #[arg(long)]
    full_grid: bool,
    #[arg(long)]
    free_xi: bool,
}

#[derive(Debug, Args, Serialize)]
struct EvalArgs {
    #[command(flatten)]
    dgp: DgpArgs,
    #[arg(long, default_value_t = 0.2)]
    test_fraction: f64,
    /// Fixed dimensions for the spline methods instead of per-window CV.
    #[arg(long, value_parser = parse_dims)]
    dims: Option<GaevDims>,
}

#[derive(Debug, Args, Serialize)]
struct FixtureArgs {
    #[arg(long)]
    output: PathBuf,
    #[arg(long, default_value_t = 1900)]
    first_year: i32,
    #[arg(long, default_value_t = 2019)]
    last_year: i32,
    #[arg(long, default_value_t = FixtureSpec::default().seed)]
    seed: u64,
}

fn parse_dims(s: &str) -> Result<GaevDims, String> {
    let parts: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse::<usize>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<Result<_, _>>()?;
    match parts[..] {
        [a, b, c] => GaevDims::new(a, b, c).map_err(|e| e.to_string()),
        _ => Err(format!("expected three comma-separated dimensions, got `{s}`")),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let kind = e
                .downcast_ref::<extremecast::Error>()
                .map(|e| e.kind())
                .unwrap_or("error");
            let body = serde_json::json!({ "error": kind, "message": format!("{e:#}") });
            eprintln!("{body}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: &Cli) -> anyhow::Result<()> {
    #[cfg(feature = "parallel")]
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    #[cfg(not(feature = "parallel"))]
    let _ = cli.threads;

    if let Command::GenFixture(a) = &cli.command {
        return gen_fixture(a);
    }
    fs::create_dir_all(&cli.out).with_context(|| format!("creating {}", cli.out.display()))?;
    fs::write(cli.out.join("config.json"), serde_json::to_string_pretty(cli)? + "\n")?;
    match &cli.command {
        Command::Forecast(a) => forecast(&cli.out, a),
        Command::Intervals(a) => intervals(&cli.out, a),
        Command::Simulate(a) => simulate(&cli.out, a),
        Command::Cv(a) => cv(&cli.out, a),
        Command::Eval(a) => eval(&cli.out, a),
        Command::GenFixture(_) => unreachable!(),
    }
}

fn load_input(path: &Path) -> anyhow::Result<FunctionalSeries> {
    let mut first = String::new();
    BufReader::new(fs::File::open(path).with_context(|| format!("opening {}", path.display()))?)
        .read_line(&mut first)?;
    if first.starts_with("# schema=") {
        return Ok(persist::load_series(path)?);
    }
    let sliced = slice_annual(&parse_csv(path)?)?;
    for d in &sliced.dropped {
        eprintln!("dropped {}: {}", d.year, d.reason);
    }
    Ok(sliced.series)
}

fn candidates(full: bool, free_xi: bool) -> Vec<GaevDims> {
    let c = if full {
        full_grid(free_xi)
    } else {
        coarse_lattice(if free_xi { 3 } else { 0 })
    };
    eprintln!("candidates: {}", c.len());
    c
}

fn resolve_dims(series: &FunctionalSeries, a: &DimsArgs) -> anyhow::Result<GaevDims> {
    match (a.dims, a.cv) {
        (Some(d), _) => Ok(d),
        (None, true) => {
            let d = select_dims(series, &candidates(a.full_grid, a.free_xi))?;
            eprintln!("selected dims {d}");
            Ok(d)
        }
        (None, false) => bail!("either --dims or --cv is required for the spline methods"),
    }
}

fn check_prob(p: f64) -> anyhow::Result<()> {
    if !(p > 0.0 && p < 1.0) {
        return Err(extremecast::Error::Domain(format!(
            "quantile probability must lie in (0, 1), got {p}"
        ))
        .into());
    }
    Ok(())
}

fn forecast(out: &Path, a: &ForecastArgs) -> anyhow::Result<()> {
    check_prob(a.quantile)?;
    let series = load_input(&a.input)?;
    let n = series.len();
    let var_options = VarOptions {
        difference: a.difference,
        ..VarOptions::default()
    };
    let fd = match a.method {
        Method::Fgev => {
            let panel = FgevPanel::fit_with(&series, var_options)?;
            persist::save_json(out.join("var_model.json"), &panel.fit_var(n)?)?;
            panel.forecast(n, a.horizon)?
        }
        Method::Fgaevm => {
            let dims = resolve_dims(&series, &a.dims)?;
            let panel = GaevPanel::fit_with(&series, dims, var_options)?;
            persist::save_json(out.join("dims.json"), &dims)?;
            persist::save_json(out.join("var_model.json"), &panel.fit_var(n)?)?;
            panel.forecast(n, a.horizon)?
        }
        Method::Tsgaevm => {
            if a.horizon != 1 {
                bail!("tsGAEVM forecasts one year ahead only");
            }
            let dims = resolve_dims(&series, &a.dims)?;
            persist::save_json(out.join("dims.json"), &dims)?;
            forecast_tsgaevm(series.curve(n - 1), &series.grid, dims, series.grid_len())?
        }
    };
    let curve = fd.quantile_curve(a.quantile)?;
    let label = format!("{}_q{}", method_name(a.method), a.quantile);
    persist::save_curves(out.join("forecast_curve.csv"), &fd.grid, &[(&label, &curve)])?;
    persist::save_json(out.join("forecast_density.json"), &fd)?;
    Ok(())
}

fn method_name(m: Method) -> &'static str {
    match m {
        Method::Fgev => "fgev",
        Method::Tsgaevm => "tsgaevm",
        Method::Fgaevm => "fgaevm",
    }
}

fn intervals(out: &Path, a: &IntervalArgs) -> anyhow::Result<()> {
    check_prob(a.quantile)?;
    let series = load_input(&a.input)?;
    let dims = resolve_dims(&series, &a.dims)?;
    let curves = sieve_bootstrap_forecasts(&series, dims, a.quantile, a.b, a.seed)?;
    let point = pointwise_interval(&curves, &series.grid, a.level)?;
    let simul = simultaneous_band(&curves, &series.grid, a.level)?;
    persist::save_band(out.join("band_pointwise.csv"), &point)?;
    persist::save_band(out.join("band_simultaneous.csv"), &simul)?;
    let labels: Vec<String> = (0..curves.len()).map(|r| format!("rep{r}")).collect();
    let named: Vec<(&str, &[f64])> = labels
        .iter()
        .zip(&curves)
        .map(|(l, c)| (l.as_str(), c.as_slice()))
        .collect();
    persist::save_curves(out.join("bootstrap_curves.csv"), &series.grid, &named)?;
    Ok(())
}

fn simulate(out: &Path, a: &SimulateArgs) -> anyhow::Result<()> {
    let mc = monte_carlo(&a.dgp.spec(), a.reps, &Forecaster::COMPETITORS, &EvalConfig::default())?;
    let mut w = csv::Writer::from_path(out.join("summary.csv"))?;
    for row in &mc.summary {
        w.serialize(row)?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_path(out.join("details.csv"))?;
    for d in &mc.details {
        w.serialize(d)?;
    }
    w.flush()?;
    for row in &mc.summary {
        println!("{:>8} {} {:.4} ({:.4})", row.method, row.metric, row.mean, row.sd);
    }
    Ok(())
}

fn cv(out: &Path, a: &CvArgs) -> anyhow::Result<()> {
    let series = load_input(&a.input)?;
    let cands = if a.candidates.is_empty() {
        candidates(a.full_grid, a.free_xi)
    } else {
        a.candidates.clone()
    };
    let dims = select_dims(&series, &cands)?;
    persist::save_json(out.join("dims.json"), &dims)?;
    println!("{dims}");
    Ok(())
}

fn eval(out: &Path, a: &EvalArgs) -> anyhow::Result<()> {
    let truth = generate(&a.dgp.spec())?;
    let cfg = EvalConfig {
        test_fraction: a.test_fraction,
        fixed_dims: a.dims,
        ..EvalConfig::default()
    };
    let evals = expanding_window_eval(&truth, &Forecaster::COMPETITORS, &cfg)?;
    persist::save_series(out.join("series.csv"), &truth.series)?;
    for ev in &evals {
        let name = ev.method.name();
        persist::save_json(out.join(format!("report_{name}.json")), &ev.report)?;
        for (w, reason) in &ev.failures {
            eprintln!("{name}: window {w} failed: {reason}");
        }
        println!("{name:>8} jsd {:.4} kld {:.4}", ev.report.mean_jsd, ev.report.mean_kld);
    }
    Ok(())
}

fn gen_fixture(a: &FixtureArgs) -> anyhow::Result<()> {
    let obs = temperature_fixture(&FixtureSpec {
        first_year: a.first_year,
        last_year: a.last_year,
        seed: a.seed,
    })?;
    if let Some(dir) = a.output.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    extremecast::ingest::write_observations_csv(&a.output, &obs)?;
    eprintln!("wrote {} observations to {}", obs.len(), a.output.display());
    Ok(())
}
