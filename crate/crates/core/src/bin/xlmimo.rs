use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use xlmimo_sparse::analysis::nmse;
use xlmimo_sparse::config::{ExperimentConfig, Scale};
use xlmimo_sparse::geometry::synthesize_scene;
use xlmimo_sparse::sweep::{
    model_error_command, point_seed, run_sweep, verify_theorem1, write_model_error_csv, write_results_csv,
    write_theorem_csv, SweepContext,
};
use xlmimo_sparse::{Error, Result};

#[derive(Parser)]
#[command(name = "xlmimo", version, about = "Near-field XL-MIMO channel estimation experiments")]
struct Cli {
    /// TOML config layered over the scale preset.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides sweep.seed_base.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    jobs: usize,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, default_value = "desk")]
    scale: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// NMSE over the configured SNR and pilot-length grid.
    Sweep,
    /// Far-field, polar and generalized LoS model error against range.
    ModelError,
    /// DFT-subspace power and effective rank of the coupling window.
    VerifyTheorem1,
    /// Draw one scene and print it as TOML.
    Synth,
    /// Run every configured method once at the first SNR and pilot length.
    Estimate,
    /// Print the resolved config.
    ShowConfig,
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let base = ExperimentConfig::preset(cli.scale.parse::<Scale>()?);
    let mut cfg = match &cli.config {
        Some(path) => ExperimentConfig::from_toml(&std::fs::read_to_string(path)?, &base)?,
        None => base,
    };
    if let Some(seed) = cli.seed {
        cfg.sweep.seed_base = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output.csv = Some(out.clone());
    }
    cfg.validate()?;
    Ok(cfg)
}

fn open_output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn configure_threads(jobs: usize) {
    #[cfg(feature = "parallel")]
    if jobs > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(jobs).build_global() {
            log::warn!("could not size worker pool: {e}");
        }
    }
    #[cfg(not(feature = "parallel"))]
    if jobs > 1 {
        log::warn!("built without the parallel feature; --jobs {jobs} ignored");
    }
}

fn run(cli: &Cli, cfg: ExperimentConfig) -> Result<()> {
    configure_threads(cli.jobs);
    let csv = cfg.output.csv.as_deref();
    match cli.command {
        Command::Sweep => {
            let rows = run_sweep(&cfg)?;
            let mut w = open_output(csv)?;
            write_results_csv(&rows, &mut w)?;
            w.flush()?;
        }
        Command::ModelError => {
            let rows = model_error_command(&cfg)?;
            let mut w = open_output(csv)?;
            write_model_error_csv(&rows, &mut w)?;
            w.flush()?;
        }
        Command::VerifyTheorem1 => {
            let rows = verify_theorem1(&cfg)?;
            let mut w = open_output(csv)?;
            write_theorem_csv(&rows, cfg.theorem.n, &mut w)?;
            w.flush()?;
        }
        Command::Synth => {
            let scene = synthesize_scene(&cfg.scene_config(), cfg.sweep.seed_base)?;
            let text = toml::to_string(&scene).map_err(|e| Error::Format(e.to_string()))?;
            let mut w = open_output(csv)?;
            w.write_all(text.as_bytes())?;
            w.flush()?;
        }
        Command::Estimate => {
            let ctx = SweepContext::new(&cfg)?;
            let (snr, t) = (cfg.sweep.snr_db[0], cfg.sweep.pilot_len[0]);
            let seed = point_seed(cfg.sweep.seed_base, snr, t, 0);
            let (h, pilots, m) = ctx.trial_inputs(seed, snr, t)?;
            let mut w = open_output(csv)?;
            writeln!(w, "snr_db={snr} pilot_len={t} seed={seed}")?;
            for &method in &ctx.methods {
                let est = ctx.run_method(method, &m, &pilots)?;
                writeln!(
                    w,
                    "{method:>13}: nmse {:8.3} dB, {} LoS + {} NLoS atoms, {} warnings",
                    nmse(&est.channel, &h)?,
                    est.support.los.len(),
                    est.support.nlos_tx.len(),
                    est.warnings()
                )?;
            }
            w.flush()?;
        }
        Command::ShowConfig => {
            let mut w = open_output(csv)?;
            w.write_all(cfg.to_toml()?.as_bytes())?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = load_config(&cli);
    let level = cfg.as_ref().map_or("info", |c| c.output.verbosity.as_str());
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match cfg.and_then(|c| run(&cli, c)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Error::Config(errs)) => {
            eprintln!("invalid configuration:");
            for e in errs {
                eprintln!("  {e}");
            }
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
