use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use pickopt::learn::ModelKind;
use pickopt_cli::{config::RunConfig, CliError};

#[derive(Parser)]
#[command(name = "pickopt", version, about = "Learned pick refinement pipeline")]
struct Cli {
    /// JSON run configuration; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (falls back to the config file, then PICKOPT_SEED).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    /// Oracle weights file, replacing the config's oracle.
    #[arg(long, global = true)]
    oracle_config: Option<PathBuf>,
    /// PSP parameters file, replacing the config's PSP model.
    #[arg(long, global = true)]
    psp_config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate random scenes as JSON lines.
    GenScenes {
        /// Number of scenes (default: the config's scene_count).
        #[arg(long)]
        count: Option<u64>,
        /// Output path, written atomically.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one control-arm pick per scene and log the outcomes.
    CollectPicks {
        /// Scenes file from gen-scenes.
        #[arg(long)]
        scenes: PathBuf,
        /// Output path, written atomically.
        #[arg(long)]
        out: PathBuf,
    },
    /// Perturb logged picks into labeled training pairs.
    GenDataset {
        /// Scenes file from gen-scenes.
        #[arg(long)]
        scenes: PathBuf,
        /// Picks file from collect-picks on the same scenes.
        #[arg(long)]
        picks: PathBuf,
        /// Output path, written atomically.
        #[arg(long)]
        out: PathBuf,
        /// Perturbations per logged pick.
        #[arg(long)]
        n_perturb: Option<usize>,
        /// Fraction of picks used for training.
        #[arg(long)]
        split: Option<f64>,
    },
    /// Train a refinement chain and print its held-out RMSE.
    Train {
        /// Dataset file from gen-dataset.
        #[arg(long)]
        dataset: PathBuf,
        /// gbdt or mlp.
        #[arg(long)]
        kind: Option<ModelKind>,
        /// Output path, written atomically.
        #[arg(long)]
        out: PathBuf,
    },
    /// Refine every logged pick and write the traces.
    Optimize {
        /// Trained chain from train.
        #[arg(long)]
        model: PathBuf,
        /// Scenes file from gen-scenes.
        #[arg(long)]
        scenes: PathBuf,
        /// Picks file from collect-picks on the same scenes.
        #[arg(long)]
        picks: PathBuf,
        /// Output path, written atomically.
        #[arg(long)]
        out: PathBuf,
        /// Refinement steps per pick.
        #[arg(long)]
        iterations: Option<usize>,
    },
    /// Paired control/treatment experiment.
    Abtest {
        /// Trained chain from train.
        #[arg(long)]
        model: PathBuf,
        /// Inducts per arm.
        #[arg(long)]
        inducts: Option<u64>,
        /// Machine-readable report.
        #[arg(long)]
        json: PathBuf,
        /// Human-readable table.
        #[arg(long)]
        text: PathBuf,
    },
    /// Dump one induct's scene and refinement trace.
    DumpTrace {
        /// Trained chain from train.
        #[arg(long)]
        model: PathBuf,
        /// Induct index within the experiment.
        #[arg(long, default_value_t = 0)]
        index: u64,
        /// Include the rendered sensor frame (row-major grids).
        #[arg(long)]
        frame: bool,
        /// Output path, written atomically.
        #[arg(long)]
        out: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let mut cfg = RunConfig::load(cli.config.as_deref())?;
    if cli.oracle_config.is_some() || cli.psp_config.is_some() {
        cfg.paths.oracle_config = cli.oracle_config.or(cfg.paths.oracle_config);
        cfg.paths.psp_config = cli.psp_config.or(cfg.paths.psp_config);
        cfg.apply_model_files()?;
    }
    let seed = cfg.resolve_seed(cli.seed)?;
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| CliError::Config(format!("--threads: {e}")))?;
    }
    match cli.command {
        Command::GenScenes { count, out } => {
            let count = count.unwrap_or(cfg.scene_count);
            pickopt_cli::gen_scenes(&cfg, seed, count, &out)?;
            println!("wrote {count} scenes to {}", out.display());
        }
        Command::CollectPicks { scenes, out } => {
            let records = pickopt_cli::collect_picks(&cfg, seed, &scenes, &out)?;
            println!("wrote {} pick records to {} {:?}", records.len(), out.display(), pickopt_cli::outcome_counts(&records));
        }
        Command::GenDataset {
            scenes,
            picks,
            out,
            n_perturb,
            split,
        } => {
            if let Some(n) = n_perturb {
                cfg.noise.n_perturb = n;
            }
            if let Some(s) = split {
                cfg.split_fraction = s;
            }
            let ds = pickopt_cli::gen_dataset(&cfg, seed, &scenes, &picks, &out)?;
            println!("wrote {} train / {} test pairs to {}", ds.train.len(), ds.test.len(), out.display());
        }
        Command::Train { dataset, kind, out } => {
            let s = pickopt_cli::train(&cfg, seed, &dataset, kind.unwrap_or(cfg.model_kind), &out)?;
            print!("{}", pickopt_cli::rmse_table(&s));
            println!("trained on {} pairs, evaluated on {}; model written to {}", s.n_train, s.n_test, out.display());
        }
        Command::Optimize {
            model,
            scenes,
            picks,
            out,
            iterations,
        } => {
            if let Some(n) = iterations {
                cfg.optimize.iterations = n;
            }
            let res = pickopt_cli::optimize(&cfg, seed, &model, &scenes, &picks, &out)?;
            let gain = res.iter().map(|r| r.best_psp - r.initial_psp).sum::<f64>() / res.len().max(1) as f64;
            println!("refined {} picks, mean psp gain {gain:.4}; traces written to {}", res.len(), out.display());
        }
        Command::Abtest {
            model,
            inducts,
            json,
            text,
        } => {
            if let Some(n) = inducts {
                cfg.inducts = n;
            }
            let report = pickopt_cli::abtest(&cfg, seed, &model, &json, &text)?;
            print!("{}", report.to_table());
        }
        Command::DumpTrace { model, index, frame, out } => {
            let d = pickopt_cli::dump_trace(&cfg, seed, &model, index, frame, &out)?;
            match &d.trace {
                Some(t) => println!("induct {index}: {} steps, best step {}; written to {}", t.steps.len(), t.best_index, out.display()),
                None => println!("induct {index}: no feasible control pick; written to {}", out.display()),
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
