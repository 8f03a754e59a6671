use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sifo_harness::experiments::{
    adaptation_records, configured, evaluate, key_records, run_ablation, run_all, run_effective_rate, run_loco, Ablation, Workspace,
    ADAPTATION_SCHEMES,
};
use sifo_harness::{emit_csv, emit_plot_script, ExperimentConfig, HarnessError, MetricsRecord, Result};

#[derive(Parser)]
#[command(name = "harness", about = "Site-specific CSI acquisition experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML or JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Small CI profile (ignored when --config is given).
    #[arg(long)]
    tiny: bool,
    /// Record wall-clock milliseconds in the CSV (breaks byte determinism).
    #[arg(long)]
    timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Write the synthetic site models.
    GenSites(Common),
    /// Learn codebooks and train scorers for every held-out site and seed.
    Pretrain(Common),
    /// Build and save the calibration memories at every budget.
    Calibrate(Common),
    /// Leave-one-site-out budget sweep.
    Eval(Common),
    /// Adaptation-mode or key-coordinate ablation.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// adaptation_mode, key_coordinates or all.
        #[arg(long, default_value = "all")]
        which: String,
    },
    /// Effective-rate sweep with crossing report.
    Rate(Common),
    /// Every experiment from one set of pretrained models.
    All(Common),
}

fn load(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None if c.tiny => ExperimentConfig::tiny(),
        None => ExperimentConfig::desk(),
    };
    if let Some(s) = c.seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    std::fs::create_dir_all(&c.out)?;
    std::fs::write(c.out.join("config.toml"), cfg.to_toml())?;
    Ok(cfg)
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

fn emit(out: &Path, stem: &str, records: &[MetricsRecord]) -> Result<()> {
    let csv = format!("{stem}.csv");
    emit_csv(records, &out.join(&csv))?;
    emit_plot_script(records, &csv, &out.join(format!("{stem}.gp")))?;
    log::info!("wrote {} rows to {}", records.len(), out.join(&csv).display());
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenSites(c) => {
            let cfg = load(&c)?;
            let ws = Workspace::new(cfg)?;
            for pool in &ws.sites {
                write(&c.out.join(format!("site_{}.json", pool.site_id())), &pool.model.to_json()?)?;
            }
        }
        Command::Pretrain(c) => {
            let cfg = load(&c)?;
            let ws = Workspace::new(cfg)?;
            for rep in ws.replicates()? {
                let tag = format!("{}_{}", rep.site(), rep.seed);
                write(&c.out.join(format!("codebook_{tag}.json")), &rep.pretrained.codebook.to_json()?)?;
                write(&c.out.join(format!("model_{tag}.json")), &rep.pretrained.model.to_json()?)?;
            }
        }
        Command::Calibrate(c) => {
            let cfg = load(&c)?;
            let ws = Workspace::new(cfg)?;
            for rep in ws.replicates()? {
                for &b in &ws.cfg.budgets {
                    let path = c.out.join(format!("memory_{}_{}_{b}.json", rep.site(), rep.seed));
                    write(&path, &rep.memory(b).to_json()?)?;
                }
            }
        }
        Command::Eval(c) => {
            let cfg = load(&c)?;
            emit(&c.out, "loco", &run_loco(&cfg, c.timing)?)?;
        }
        Command::Ablate { common: c, which } => {
            let cfg = load(&c)?;
            if which == "all" {
                let ws = Workspace::new(cfg)?;
                let reps = ws.replicates()?;
                let outcomes = evaluate(&reps, &configured(&ws.cfg, &ADAPTATION_SCHEMES), &ws.cfg.budgets)?;
                emit(&c.out, "ablation_adaptation_mode", &adaptation_records(&ws.cfg, &outcomes, c.timing))?;
                emit(&c.out, "ablation_key_coordinates", &key_records(&reps, c.timing)?)?;
            } else {
                let ablation: Ablation = which.parse()?;
                emit(&c.out, &format!("ablation_{ablation}"), &run_ablation(&cfg, &which, c.timing)?)?;
            }
        }
        Command::Rate(c) => {
            let cfg = load(&c)?;
            let (records, report) = run_effective_rate(&cfg, c.timing)?;
            emit(&c.out, "rate", &records)?;
            write(&c.out.join("crossing.txt"), &report.to_text())?;
            print!("{}", report.to_text());
        }
        Command::All(c) => {
            let cfg = load(&c)?;
            let run = run_all(&cfg, c.timing)?;
            emit(&c.out, "loco", &run.loco)?;
            emit(&c.out, "ablation_adaptation_mode", &run.adaptation)?;
            emit(&c.out, "ablation_key_coordinates", &run.keys)?;
            emit(&c.out, "rate", &run.rate)?;
            write(&c.out.join("crossing.txt"), &run.crossing.to_text())?;
            let mut s = String::from("site seed initial_objective final_objective moves gram_energy max_coherence\n");
            for (site, seed, cb) in &run.codebooks {
                s.push_str(&format!(
                    "{site} {seed} {:.6} {:.6} {} {:.6} {:.6}\n",
                    cb.initial_objective, cb.final_objective, cb.accepted_moves, cb.gram_energy, cb.max_coherence
                ));
            }
            write(&c.out.join("codebooks.txt"), &s)?;
            print!("{}", run.crossing.to_text());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
