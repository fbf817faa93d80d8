//! `crease`: fit, inspect and compare batting careers from the
//! command line.
//!
//! Exit codes follow sysexits: 65 for malformed input data, 70 for
//! numerical failures inside the sampler, 74 for filesystem errors,
//! and clap's usual 2 for usage mistakes.

use clap::{ArgGroup, Parser, Subcommand};
use crease::gp::GpError;
use crease::io::{
    career_average, emit_comparison_tsv, emit_nu_curve_tsv, emit_sample_curves_tsv,
    emit_scores, read_fit, read_scores, write_fit, FitArchive, IoError,
};
use crease::math::fnv1a64;
use crease::model::Career;
use crease::predict::{self, Forecast, PredictError};
use crease::sampler::{posterior_resample, NsConfig, SamplerError, Shrinkage};
use crease::simulate::{simulate_career, AbilitySpec, SimError, SimSpec};
use crease::{fit, ModelError};
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const DEFAULT_SEED: u64 = 42;
const SEED_ENV: &str = "CREASE_SEED";

#[derive(Parser)]
#[command(
    name = "crease",
    version,
    about = "Bayesian batting-career modelling: censored innings scores, \
             drifting ability, nested-sampling posteriors"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Fit the career model to a score list and archive the posterior
    Fit(FitArgs),
    /// Summarise ability trajectories and forecast future innings from an archive
    Predict(PredictArgs),
    /// Compare two fitted players innings-for-innings
    Compare(CompareArgs),
    /// Draw a synthetic career from the generative model
    Simulate(SimulateArgs),
    /// Print the headline numbers of a fit archive
    Summary(SummaryArgs),
}

#[derive(clap::Args)]
struct FitArgs {
    /// Score list: one innings per line, `*` suffix for not-outs
    #[arg(long)]
    scores: PathBuf,
    /// Player identifier (defaults to the score file's stem)
    #[arg(long)]
    player: Option<String>,
    /// Directory for the archive and progress files
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Live particles
    #[arg(long, default_value_t = 1000)]
    particles: usize,
    /// Constrained random-walk steps per replacement
    #[arg(long, default_value_t = 1000)]
    mcmc_steps: usize,
    /// Stop once the live set can add at most this fraction of the evidence
    #[arg(long, default_value_t = 1e-6)]
    term_frac: f64,
    /// Initial proposal scale on the unit cube
    #[arg(long, default_value_t = 0.02)]
    step_scale: f64,
    /// Draw prior-mass compression factors instead of the
    /// deterministic schedule
    #[arg(long)]
    stochastic_shrinkage: bool,
    /// RNG seed (overrides CREASE_SEED; default 42)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads: 1 runs sequentially, 0 uses every core
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Write a progress line every N iterations (0 disables)
    #[arg(long, default_value_t = 100)]
    progress_every: u64,
}

#[derive(clap::Args)]
struct PredictArgs {
    /// Fit archive produced by `crease fit`
    #[arg(long)]
    fit: PathBuf,
    /// Future innings to forecast
    #[arg(long, default_value_t = 10)]
    horizon: usize,
    /// Central credible mass of the reported bands
    #[arg(long, default_value_t = 0.68)]
    level: f64,
    /// Posterior draws used for curves and forecasts
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    /// Also write every per-draw trajectory
    #[arg(long)]
    retain_curves: bool,
    /// RNG seed (overrides CREASE_SEED; default 42)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads: 1 runs sequentially, 0 uses every core
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(clap::Args)]
struct CompareArgs {
    /// Fit archive of the first player
    #[arg(long)]
    fit_a: PathBuf,
    /// Fit archive of the second player
    #[arg(long)]
    fit_b: PathBuf,
    /// Posterior draws per player
    #[arg(long, default_value_t = 2000)]
    samples: usize,
    /// RNG seed (overrides CREASE_SEED; default 42)
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads: 1 runs sequentially, 0 uses every core
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(clap::Args)]
#[command(group(
    ArgGroup::new("ability").required(true).args(["mu", "c"])
))]
struct SimulateArgs {
    /// Career length in innings
    #[arg(long)]
    innings: usize,
    #[arg(long, default_value = "sim")]
    player: String,
    /// Constant set average (geometric scores)
    #[arg(long)]
    mu: Option<f64>,
    /// Fresh-start fraction of the set average (GP path)
    #[arg(long, requires_all = ["d", "m", "sigma", "ell"])]
    c: Option<f64>,
    /// Settling-in timescale as a fraction of the set average
    #[arg(long, requires = "c")]
    d: Option<f64>,
    /// Median set average of the GP path
    #[arg(long, requires = "c")]
    m: Option<f64>,
    /// Log-space amplitude of ability drift
    #[arg(long, requires = "c")]
    sigma: Option<f64>,
    /// Correlation length of the drift, in innings
    #[arg(long, requires = "c")]
    ell: Option<f64>,
    /// Fraction of innings recorded as not-outs
    #[arg(long, default_value_t = 0.0)]
    not_out_rate: f64,
    /// RNG seed (overrides CREASE_SEED; default 42)
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Also write the latent per-innings set averages
    #[arg(long)]
    truth_out: bool,
}

#[derive(clap::Args)]
struct SummaryArgs {
    /// Fit archive produced by `crease fit`
    #[arg(long)]
    fit: PathBuf,
}

enum CliError {
    Data(String),
    Numeric(String),
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Data(_) => 65,
            CliError::Numeric(_) => 70,
            CliError::Io(_) => 74,
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Data(m) | CliError::Numeric(m) | CliError::Io(m) => m,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Io(_) => CliError::Io(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<SamplerError> for CliError {
    fn from(e: SamplerError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<PredictError> for CliError {
    fn from(e: PredictError) -> Self {
        match e {
            PredictError::Gp(GpError::FactorisationFailed { .. }) => {
                CliError::Numeric(e.to_string())
            }
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<GpError> for CliError {
    fn from(e: GpError) -> Self {
        match e {
            GpError::FactorisationFailed { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Data(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.cmd {
        Cmd::Fit(args) => cmd_fit(args),
        Cmd::Predict(args) => cmd_predict(args),
        Cmd::Compare(args) => cmd_compare(args),
        Cmd::Simulate(args) => cmd_simulate(args),
        Cmd::Summary(args) => cmd_summary(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("crease: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

/// Flag beats environment beats the built-in default.
fn resolve_seed(flag: Option<u64>) -> Result<u64, CliError> {
    if let Some(s) = flag {
        return Ok(s);
    }
    match std::env::var(SEED_ENV) {
        Ok(v) => v.parse().map_err(|_| {
            CliError::Data(format!("{SEED_ENV} must be an unsigned integer, got {v:?}"))
        }),
        Err(_) => Ok(DEFAULT_SEED),
    }
}

/// Streams derived from one user seed stay distinct per purpose and
/// per player, and identical for identical players, so self-comparison
/// is exactly symmetric.
fn purpose_seed(purpose: &str, player: &str, seed: u64) -> u64 {
    fnv1a64(purpose.as_bytes()) ^ fnv1a64(player.as_bytes()) ^ seed
}

fn init_threads(threads: usize) -> Result<(), CliError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| CliError::Numeric(format!("thread pool: {e}")))
}

/// Score files named `<player>.scores.txt` should yield `<player>`.
fn default_player(scores: &Path) -> String {
    let stem = scores
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "player".to_string());
    stem.strip_suffix(".scores").unwrap_or(&stem).to_string()
}

/// Attach the offending path to IO failures.
fn ctx(path: &Path) -> impl Fn(IoError) -> CliError + '_ {
    move |e| match e {
        IoError::Io(io) => CliError::Io(format!("{}: {io}", path.display())),
        other => CliError::Data(format!("{}: {other}", path.display())),
    }
}

fn file_tag(player: &str) -> String {
    player
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect()
}

fn write_run_config(path: &Path, seed: u64) -> Result<(), CliError> {
    let argv: Vec<String> = std::env::args().collect();
    let config = serde_json::json!({
        "argv": argv,
        "resolved_seed": seed,
        "version": env!("CARGO_PKG_VERSION"),
    });
    fs::write(path, format!("{config}\n"))?;
    Ok(())
}

fn print_career_lines(career: &Career) {
    println!("player        {}", career.player_id());
    println!(
        "innings       {} ({} not out)",
        career.len(),
        career.not_outs()
    );
    println!("runs          {}", career.total_runs());
    match career_average(career) {
        Some(avg) => println!("average       {avg:.2}"),
        None => println!("average       n/a (never dismissed)"),
    }
}

fn cmd_fit(args: FitArgs) -> Result<(), CliError> {
    init_threads(args.threads)?;
    let seed = resolve_seed(args.seed)?;
    let player = match &args.player {
        Some(p) => p.clone(),
        None => default_player(&args.scores),
    };
    let career = read_scores(&args.scores, &player).map_err(ctx(&args.scores))?;
    let cfg = NsConfig {
        n_particles: args.particles,
        mcmc_steps: args.mcmc_steps,
        termination_frac: args.term_frac,
        seed,
        step_scale: args.step_scale,
        shrinkage: if args.stochastic_shrinkage {
            Shrinkage::Stochastic
        } else {
            Shrinkage::Deterministic
        },
    };

    fs::create_dir_all(&args.out_dir)?;
    let tag = file_tag(&player);
    write_run_config(&args.out_dir.join(format!("{tag}.run_config.json")), seed)?;
    let progress_path = args.out_dir.join(format!("{tag}.progress.jsonl"));
    let mut progress_file = std::io::BufWriter::new(fs::File::create(&progress_path)?);

    let every = args.progress_every;
    let mut progress_err: Option<std::io::Error> = None;
    let result = fit::fit_career_with_progress(&career, &cfg, |p| {
        if every > 0 && p.iteration % every == 0 && progress_err.is_none() {
            let line = serde_json::to_string(p).expect("progress serialises");
            if let Err(e) = writeln!(progress_file, "{line}") {
                progress_err = Some(e);
            }
        }
    })?;
    if let Some(e) = progress_err {
        return Err(e.into());
    }
    progress_file.flush()?;

    let archive = FitArchive::new(career, cfg, result);
    let archive_path = args.out_dir.join(format!("{tag}.fit.json"));
    write_fit(&archive_path, &archive)?;

    print_career_lines(&archive.career);
    println!(
        "log_z         {:.4} ± {:.4}",
        archive.result.log_z, archive.result.log_z_err
    );
    println!("information   {:.2} nats", archive.result.information);
    println!("iterations    {}", archive.result.n_iterations);
    println!("ess           {:.1}", archive.result.ess());
    println!("archive       {}", archive_path.display());
    Ok(())
}

/// Resample an archive's weighted run and decode the draws.
fn decoded_draws(
    archive: &FitArchive,
    samples: usize,
    seed: u64,
) -> Result<Vec<crease::gp::TransformedSample>, CliError> {
    let resample_seed = purpose_seed("resample", &archive.player_id, seed);
    let u = posterior_resample(&archive.result, samples, resample_seed)?;
    Ok(predict::decode_draws(&u, archive.career.len())?)
}

fn cmd_predict(args: PredictArgs) -> Result<(), CliError> {
    init_threads(args.threads)?;
    let seed = resolve_seed(args.seed)?;
    let archive = read_fit(&args.fit).map_err(ctx(&args.fit))?;
    let draws = decoded_draws(&archive, args.samples, seed)?;

    let curve = predict::nu_curve(&draws, args.level, args.retain_curves)?;
    let forecast = predict::extrapolate(
        &draws,
        args.horizon,
        args.level,
        purpose_seed("extrapolate", &archive.player_id, seed),
    )?;

    fs::create_dir_all(&args.out_dir)?;
    let tag = file_tag(&archive.player_id);
    let curve_path = args.out_dir.join(format!("{tag}.nu.tsv"));
    fs::write(&curve_path, emit_nu_curve_tsv(&curve))?;
    let forecast_path = args.out_dir.join(format!("{tag}.forecast.tsv"));
    fs::write(&forecast_path, emit_nu_curve_tsv(&forecast.curve))?;
    if let Some(tsv) = emit_sample_curves_tsv(&curve) {
        fs::write(args.out_dir.join(format!("{tag}.nu_samples.tsv")), tsv)?;
    }

    print_career_lines(&archive.career);
    println!(
        "next innings  ν = {:.2} (band {:.2} – {:.2} at level {})",
        forecast.next_innings_nu(),
        forecast.curve.band_low[0],
        forecast.curve.band_high[0],
        args.level
    );
    println!("trajectory    {}", curve_path.display());
    println!("forecast      {}", forecast_path.display());
    Ok(())
}

fn forecast_for_compare(
    path: &Path,
    samples: usize,
    seed: u64,
) -> Result<(FitArchive, Forecast), CliError> {
    let archive = read_fit(path).map_err(ctx(path))?;
    let draws = decoded_draws(&archive, samples, seed)?;
    let forecast = predict::extrapolate(
        &draws,
        1,
        0.68,
        purpose_seed("extrapolate", &archive.player_id, seed),
    )?;
    Ok((archive, forecast))
}

fn cmd_compare(args: CompareArgs) -> Result<(), CliError> {
    init_threads(args.threads)?;
    let seed = resolve_seed(args.seed)?;
    let (archive_a, forecast_a) = forecast_for_compare(&args.fit_a, args.samples, seed)?;
    let (archive_b, forecast_b) = forecast_for_compare(&args.fit_b, args.samples, seed)?;
    let cmp = predict::compare(&forecast_a, &forecast_b)?;

    fs::create_dir_all(&args.out_dir)?;
    let name_a = archive_a.player_id.as_str();
    let name_b = archive_b.player_id.as_str();
    let out_path = args
        .out_dir
        .join(format!("{}_vs_{}.tsv", file_tag(name_a), file_tag(name_b)));
    fs::write(&out_path, emit_comparison_tsv(name_a, name_b, &cmp))?;

    let mut table = String::new();
    for (archive, forecast) in [(&archive_a, &forecast_a), (&archive_b, &forecast_b)] {
        let avg = career_average(&archive.career)
            .map(|a| format!("{a:.2}"))
            .unwrap_or_else(|| "n/a".to_string());
        writeln!(
            table,
            "{:<20} average {:>8}  next ν {:>7.2}",
            archive.player_id,
            avg,
            forecast.next_innings_nu()
        )
        .expect("string write");
    }
    print!("{table}");
    println!("expected margin   {:+.2}", cmp.expected_margin);
    println!("P({name_a} outscores {name_b})  {:.3}", cmp.p_outscore);
    println!("P(tie)            {:.3}", cmp.p_tie);
    println!("P({name_b} outscores {name_a})  {:.3}", cmp.p_outscored);
    println!("table             {}", out_path.display());
    Ok(())
}

fn cmd_simulate(args: SimulateArgs) -> Result<(), CliError> {
    let seed = resolve_seed(args.seed)?;
    let ability = match (args.mu, args.c) {
        (Some(mu), None) => AbilitySpec::Constant { mu },
        (None, Some(c)) => AbilitySpec::GpPath {
            c,
            // clap's `requires` guarantees the rest of the group.
            d: args.d.expect("clap group"),
            m: args.m.expect("clap group"),
            sigma: args.sigma.expect("clap group"),
            ell: args.ell.expect("clap group"),
        },
        _ => unreachable!("clap group enforces exactly one ability spec"),
    };
    let spec = SimSpec { ability, innings: args.innings, not_out_rate: args.not_out_rate };
    let sim = simulate_career(&spec, &args.player, seed)?;

    fs::create_dir_all(&args.out_dir)?;
    let tag = file_tag(&args.player);
    let scores_path = args.out_dir.join(format!("{tag}.scores.txt"));
    fs::write(&scores_path, emit_scores(&sim.career))?;
    if args.truth_out {
        let mut tsv = String::from("innings\tmu2\n");
        for (i, m2) in sim.mu2_path.iter().enumerate() {
            writeln!(tsv, "{}\t{m2:.6}", i + 1).expect("string write");
        }
        fs::write(args.out_dir.join(format!("{tag}.truth.tsv")), tsv)?;
    }

    print_career_lines(&sim.career);
    println!("scores        {}", scores_path.display());
    Ok(())
}

fn cmd_summary(args: SummaryArgs) -> Result<(), CliError> {
    let archive = read_fit(&args.fit).map_err(ctx(&args.fit))?;
    print_career_lines(&archive.career);
    println!(
        "log_z         {:.4} ± {:.4}",
        archive.result.log_z, archive.result.log_z_err
    );
    println!("information   {:.2} nats", archive.result.information);
    println!("iterations    {}", archive.result.n_iterations);
    println!("samples       {}", archive.result.samples.len());
    println!("ess           {:.1}", archive.result.ess());
    let rates = &archive.result.diagnostics.acceptance_rates;
    if !rates.is_empty() {
        let mean = rates.iter().sum::<f64>() / rates.len() as f64;
        println!("acceptance    {mean:.3} mean over {} replacements", rates.len());
    }
    println!(
        "sampler       {} particles, {} walk steps, seed {}",
        archive.config.n_particles, archive.config.mcmc_steps, archive.config.seed
    );
    println!("created_unix  {}", archive.created_unix);
    Ok(())
}
