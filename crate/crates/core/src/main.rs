use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mmfusion::harness::{emit_scatter, run_kl_analysis, run_regime_sweep, run_roc_experiment, CaseSelector, ExperimentConfig};
use mmfusion::{Error, Result};

#[derive(Parser)]
#[command(name = "mmfusion", version, about = "Detection with dependent multimodal data: experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// ROC curves for the configured detectors.
    Roc(Common),
    /// H1 scatter data in the raw and compressed domains.
    Scatter {
        #[command(flatten)]
        common: Common,
        /// Pairs per domain (defaults to `scatter_points`).
        #[arg(long)]
        points: Option<usize>,
    },
    /// KL divergences and the regime decision for one H1 copula.
    Kl(Common),
    /// Regime table over all four fusion copulas.
    Regime(Common),
}

#[derive(Args)]
struct Common {
    /// JSON config file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Preset case (1 or 2).
    #[arg(long)]
    case: Option<u8>,
    /// Comma-separated compression ratios.
    #[arg(long, value_delimiter = ',')]
    cr: Option<Vec<f64>>,
    #[arg(long)]
    trials: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated detectors: product, compressed_gaussian, copula:<family>.
    #[arg(long, value_delimiter = ',')]
    detectors: Option<Vec<String>>,
    /// Worker threads (does not affect results).
    #[arg(long)]
    threads: Option<usize>,
}

impl Common {
    fn config(&self) -> Result<ExperimentConfig> {
        let mut cfg = match &self.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::default(),
        };
        if let Some(c) = self.case {
            cfg.case = Some(CaseSelector::Preset(c));
        }
        if let Some(cr) = &self.cr {
            cfg.compression_ratios = cr.clone();
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(s) = self.seed {
            cfg.seed = Some(s);
        }
        if let Some(o) = &self.out {
            cfg.output_dir = o.clone();
        }
        if let Some(d) = &self.detectors {
            cfg.detectors = d.clone();
        }
        Ok(cfg)
    }

    fn init_threads(&self) -> Result<()> {
        if let Some(n) = self.threads {
            if n == 0 {
                return Err(Error::Config("--threads must be positive".into()));
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| Error::Config(e.to_string()))?;
        }
        Ok(())
    }
}

fn run(cli: Cli) -> Result<()> {
    let (common, points) = match &cli.command {
        Command::Roc(c) | Command::Kl(c) | Command::Regime(c) => (c, None),
        Command::Scatter { common, points } => (common, *points),
    };
    common.init_threads()?;
    let cfg = common.config()?;
    let record = match cli.command {
        Command::Roc(_) => run_roc_experiment(&cfg)?,
        Command::Scatter { .. } => emit_scatter(&cfg, points.unwrap_or(cfg.scatter_points))?,
        Command::Kl(_) => run_kl_analysis(&cfg)?,
        Command::Regime(_) => run_regime_sweep(&cfg)?,
    };
    for c in &record.curves {
        eprintln!("{:<28} AUC {:.4}  Pd@Pf={} {:.4}", c.detector, c.auc, c.pf, c.pd_at_pf);
    }
    for row in &record.kl {
        let k = &row.report;
        eprintln!(
            "{:<12} M={:<5} d_cg {:.5}  d_up {:.5}  Upsilon {:.5} ± {:.5}  compressed preferred: {}{}",
            row.copula.as_deref().unwrap_or(&cfg.kl_copula),
            row.m,
            k.d_cg,
            k.d_up,
            k.upsilon,
            k.upsilon_se.unwrap_or(0.0),
            k.regime_compressed_preferred,
            if k.inconclusive { " (inconclusive)" } else { "" }
        );
    }
    for w in &record.warnings.messages {
        eprintln!("warning: {w}");
    }
    eprintln!("wrote {} files to {} in {:.1}s", record.files.len(), cfg.output_dir.display(), record.wall_time_s);
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 1 })
        }
    }
}
