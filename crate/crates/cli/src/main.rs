use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nbfts::forecast::tables::{
    mae_by_week_table, read_table, summarize, write_table, CellRecord, TaskRecord,
    MAE_BY_WEEK_HEADER, SUMMARY_HEADER,
};
use nbfts::forecast::{forecast_years, write_batch, BatchSpec, Reference};
use nbfts::gibbs::{fit, validate_store_dir, FitConfig, Variant};
use nbfts::io::{load_panel, write_counts, KeyValueConfig};
use nbfts::sim::{read_truth, simulate, write_truth, SimConfig};
use nbfts::{Error, Result};

#[derive(Parser, Debug)]
#[command(
    name = "nbfts",
    version,
    about = "Bayesian forecasting of seasonal count curves"
)]
struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the sampler on a count panel and store the draws.
    Fit(FitArgs),
    /// Forecast the remaining weeks of one or more target years.
    Forecast(ForecastArgs),
    /// Write simulated panels and their ground truth.
    Simulate(SimulateArgs),
    /// Aggregate forecast tables into a summary.
    Evaluate(EvaluateArgs),
}

/// Sampler settings shared by `fit` and `forecast`. Unset flags fall back to
/// the config file, then to the built-in defaults.
#[derive(Args, Debug, Default)]
struct ModelArgs {
    /// Flat `key = value` file using the long flag names as keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    burnin: Option<usize>,
    #[arg(long)]
    thin: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    r_fixed: Option<f64>,
    /// Spline basis size.
    #[arg(long)]
    basis_size: Option<usize>,
}

#[derive(Args, Debug)]
struct InputArgs {
    /// `year,week,count` table.
    #[arg(long)]
    counts: Option<PathBuf>,
    /// `year,population` table; unit offsets when absent.
    #[arg(long)]
    offsets: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct FitArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Output directory for the draw store.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ForecastArgs {
    #[command(flatten)]
    input: InputArgs,
    #[command(flatten)]
    model: ModelArgs,
    /// Truth table from `simulate`; scores against its complete counts.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Comma-separated years or `first-last` ranges; defaults to the last year.
    #[arg(long)]
    target_years: Option<String>,
    #[arg(long)]
    m0: Option<usize>,
    #[arg(long)]
    level: Option<f64>,
    /// Label for grouping tasks in the summary.
    #[arg(long)]
    era: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dispersion of the generated counts.
    #[arg(long)]
    r: Option<f64>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    missing_frac: Option<f64>,
    /// Treat sqrt(1 - phi^2) as the innovation variance instead of its sd.
    #[arg(long)]
    innovation_variance: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Directories holding `tasks.csv` and `cells.csv`.
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

const MODEL_KEYS: [&str; 8] = [
    "variant",
    "k",
    "iterations",
    "burnin",
    "thin",
    "seed",
    "r-fixed",
    "basis-size",
];

fn load_config(path: Option<&Path>, extra: &[&str]) -> Result<KeyValueConfig> {
    let Some(path) = path else {
        return Ok(KeyValueConfig::default());
    };
    let cfg = KeyValueConfig::load(path)?;
    let allowed: Vec<&str> = MODEL_KEYS.iter().chain(extra).copied().collect();
    cfg.check_keys(&allowed)?;
    Ok(cfg)
}

fn pick<T: std::str::FromStr>(
    flag: Option<T>,
    file: &KeyValueConfig,
    key: &str,
) -> Result<Option<T>> {
    match flag {
        Some(v) => Ok(Some(v)),
        None => file.get(key),
    }
}

fn pick_path(flag: &Option<PathBuf>, file: &KeyValueConfig, key: &str) -> Option<PathBuf> {
    flag.clone()
        .or_else(|| file.get_str(key).map(PathBuf::from))
}

fn required<T>(v: Option<T>, name: &str) -> Result<T> {
    v.ok_or_else(|| Error::InvalidParameter(format!("missing required setting `--{name}`")))
}

fn fit_config(m: &ModelArgs, file: &KeyValueConfig) -> Result<FitConfig> {
    let d = FitConfig::default();
    let cfg = FitConfig {
        variant: pick(m.variant, file, "variant")?.unwrap_or(d.variant),
        k: pick(m.k, file, "k")?.unwrap_or(d.k),
        iterations: pick(m.iterations, file, "iterations")?.unwrap_or(d.iterations),
        burn_in: pick(m.burnin, file, "burnin")?.unwrap_or(d.burn_in),
        thin: pick(m.thin, file, "thin")?.unwrap_or(d.thin),
        seed: pick(m.seed, file, "seed")?.unwrap_or(d.seed),
        r_fixed: pick(m.r_fixed, file, "r-fixed")?,
        l_m: pick(m.basis_size, file, "basis-size")?,
        ..d
    };
    cfg.validate()?;
    Ok(cfg)
}

fn run_fit(a: &FitArgs) -> Result<()> {
    let file = load_config(a.model.config.as_deref(), &["counts", "offsets", "out"])?;
    let cfg = fit_config(&a.model, &file)?;
    let counts = required(pick_path(&a.input.counts, &file, "counts"), "counts")?;
    let offsets = pick_path(&a.input.offsets, &file, "offsets");
    let out = required(pick_path(&a.out, &file, "out"), "out")?;
    let panel = load_panel(&counts, offsets.as_deref())?;
    let store = fit(&panel, &cfg)?;
    store.save(&out)?;
    validate_store_dir(&out)?;
    println!("wrote {} draws to {}", store.n_draws(), out.display());
    Ok(())
}

fn parse_years(spec: &str) -> Result<Vec<i64>> {
    let bad = || Error::InvalidParameter(format!("cannot parse target years `{spec}`"));
    let mut years = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        // a leading minus belongs to the number, not to a range
        match part
            .char_indices()
            .skip(1)
            .find(|&(_, c)| c == '-')
            .map(|(i, _)| i)
        {
            Some(i) => {
                let a: i64 = part[..i].trim().parse().map_err(|_| bad())?;
                let b: i64 = part[i + 1..].trim().parse().map_err(|_| bad())?;
                if b < a {
                    return Err(bad());
                }
                years.extend(a..=b);
            }
            None => years.push(part.parse().map_err(|_| bad())?),
        }
    }
    if years.is_empty() {
        return Err(bad());
    }
    Ok(years)
}

fn run_forecast_cmd(a: &ForecastArgs) -> Result<()> {
    let file = load_config(
        a.model.config.as_deref(),
        &[
            "counts",
            "offsets",
            "out",
            "truth",
            "target-years",
            "m0",
            "level",
            "era",
        ],
    )?;
    let cfg = fit_config(&a.model, &file)?;
    let counts = required(pick_path(&a.input.counts, &file, "counts"), "counts")?;
    let offsets = pick_path(&a.input.offsets, &file, "offsets");
    let out = required(pick_path(&a.out, &file, "out"), "out")?;
    let panel = load_panel(&counts, offsets.as_deref())?;
    let reference = match pick_path(&a.truth, &file, "truth") {
        Some(p) => {
            let t = read_truth(p, &panel)?;
            Reference {
                counts: Some(t.full_counts),
                curves: Some(t.true_curves),
            }
        }
        None => Reference::default(),
    };
    let years = match a
        .target_years
        .clone()
        .or_else(|| file.get_str("target-years").map(String::from))
    {
        Some(s) => parse_years(&s)?,
        None => vec![*panel.year_labels().last().expect("panel has rows")],
    };
    let stem = counts
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let spec = BatchSpec {
        target_years: years,
        m0: required(pick(a.m0, &file, "m0")?, "m0")?,
        level: pick(a.level, &file, "level")?.unwrap_or(0.95),
        prefix: format!("{stem}:"),
        era: pick(a.era.clone(), &file, "era")?.unwrap_or_else(|| "all".into()),
    };
    let batch = forecast_years(&panel, &reference, &spec, &cfg)?;
    write_batch(&out, &batch)?;
    read_table::<TaskRecord>(out.join("tasks.csv"))?;
    read_table::<CellRecord>(out.join("cells.csv"))?;
    for t in &batch.tasks {
        println!(
            "{} {}: mae {:.3} ecp {:.3} miw {:.1}",
            t.task_id, t.variant, t.mae, t.ecp, t.miw
        );
    }
    Ok(())
}

fn run_simulate(a: &SimulateArgs) -> Result<()> {
    let file = match &a.config {
        Some(p) => {
            let c = KeyValueConfig::load(p)?;
            c.check_keys(&["r", "reps", "seed", "n", "m", "missing-frac", "out"])?;
            c
        }
        None => KeyValueConfig::default(),
    };
    let d = SimConfig::default();
    let base = SimConfig {
        r: pick(a.r, &file, "r")?.unwrap_or(d.r),
        seed: pick(a.seed, &file, "seed")?.unwrap_or(d.seed),
        n: pick(a.n, &file, "n")?.unwrap_or(d.n),
        m: pick(a.m, &file, "m")?.unwrap_or(d.m),
        missing_frac: pick(a.missing_frac, &file, "missing-frac")?.unwrap_or(d.missing_frac),
        innovation_sd_is_sd: !a.innovation_variance,
        ..d
    };
    let reps = pick(a.reps, &file, "reps")?.unwrap_or(1);
    let out = required(pick_path(&a.out, &file, "out"), "out")?;
    std::fs::create_dir_all(&out).map_err(|e| Error::io(&out, e))?;
    for j in 0..reps {
        let cfg = SimConfig {
            stream: j as u64,
            ..base.clone()
        };
        let (panel, truth) = simulate(&cfg)?;
        write_counts(out.join(format!("panel_{j:03}.csv")), &panel)?;
        write_truth(out.join(format!("truth_{j:03}.csv")), &panel, &truth)?;
    }
    println!("wrote {reps} panels to {}", out.display());
    Ok(())
}

fn run_evaluate(a: &EvaluateArgs) -> Result<()> {
    let mut tasks: Vec<TaskRecord> = Vec::new();
    let mut cells: Vec<CellRecord> = Vec::new();
    for dir in &a.reports {
        tasks.extend(read_table::<TaskRecord>(dir.join("tasks.csv"))?);
        cells.extend(read_table::<CellRecord>(dir.join("cells.csv"))?);
    }
    let summary = summarize(&tasks, &cells);
    std::fs::create_dir_all(&a.out).map_err(|e| Error::io(&a.out, e))?;
    write_table(a.out.join("summary.csv"), &summary, &SUMMARY_HEADER)?;
    write_table(
        a.out.join("mae_by_week.csv"),
        &mae_by_week_table(&cells)?,
        &MAE_BY_WEEK_HEADER,
    )?;
    for s in &summary {
        println!(
            "{} {} m0={}: ecp {:.3} miw {:.2} mae {:.3} ({} tasks)",
            s.variant, s.era, s.m0, s.ecp, s.miw, s.mae, s.tasks
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match &cli.command {
        Command::Fit(a) => run_fit(a),
        Command::Forecast(a) => run_forecast_cmd(a),
        Command::Simulate(a) => run_simulate(a),
        Command::Evaluate(a) => run_evaluate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.code());
            ExitCode::FAILURE
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn year_lists() {
        assert_eq!(parse_years("1960").unwrap(), vec![1960]);
        assert_eq!(
            parse_years("1950-1952, 1960").unwrap(),
            vec![1950, 1951, 1952, 1960]
        );
        assert!(parse_years("1952-1950").is_err());
        assert!(parse_years("x").is_err());
        assert!(parse_years("").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file =
            KeyValueConfig::parse("run.cfg", "k = 3\niterations = 400\nburnin = 100\n").unwrap();
        let m = ModelArgs {
            k: Some(2),
            ..ModelArgs::default()
        };
        let cfg = fit_config(&m, &file).unwrap();
        assert_eq!(
            (cfg.k, cfg.iterations, cfg.burn_in, cfg.thin),
            (2, 400, 100, 5)
        );
    }
}
