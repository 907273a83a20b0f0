use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use cellfree_core::experiment::{
    self, bench_csv, bench_json, curves_csv, parse_policies, write_dataset_bundle, write_simulation, ExperimentConfig,
    Models, Policy, Preset, Trial,
};
use cellfree_core::ml::{Dataset, Model};
use cellfree_core::{BeamformerKind, Direction, Error};
use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "cellfree", version, about = "EMF-aware power control for user-centric cell-free massive MIMO")]
struct Cli {
    /// TOML experiment file overlaid on the preset
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory (overrides the config)
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Base parameter set: small or paper
    #[arg(long, global = true, default_value = "paper")]
    preset: String,

    /// Comma-separated policies, e.g. `upc,fpc-fair,opc-maximin,u-dnn(2)`
    #[arg(long, global = true)]
    policy: Option<String>,

    /// dl or ul
    #[arg(long, global = true)]
    direction: Option<String>,

    /// cb or rzf
    #[arg(long, global = true)]
    beamformer: Option<String>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Evaluate every policy over Monte-Carlo trials; writes per-policy CSVs and summary.json
    Simulate {
        #[arg(long)]
        trials: Option<usize>,
        /// Also write each trial's geometry to `deployment-<trial>.csv`
        #[arg(long)]
        deployments: bool,
        #[command(flatten)]
        models: ModelArgs,
    },
    /// Solve scenarios and store FPC features with optimizer labels
    Dataset {
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Train the learned policies on a dataset file
    Train { dataset: PathBuf },
    /// Time each policy's allocation step
    Bench {
        #[arg(long)]
        trials: Option<usize>,
        #[command(flatten)]
        models: ModelArgs,
    },
}

#[derive(clap::Args)]
struct ModelArgs {
    /// End-to-end model JSON for e2e-dnn
    #[arg(long)]
    model: Option<PathBuf>,
    /// Unfolded cascade JSON for u-dnn(n)
    #[arg(long)]
    unfolded_model: Option<PathBuf>,
}

/// A failure and the exit code it maps to.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::InvalidConfig(_) | Error::Toml(_) | Error::Dimension(_) => 2,
            _ => 1,
        };
        Failure { code, message: e.to_string() }
    }
}

fn usage(message: String) -> Failure {
    Failure { code: 2, message }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig, Failure> {
    let preset: Preset = cli.preset.parse()?;
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = fs::read_to_string(path).map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_toml_str(&text, preset)?
        }
        None => preset.config(),
    };
    let e = &mut cfg.experiment;
    if let Some(seed) = cli.seed {
        e.seed = seed;
        cfg.train.seed = seed;
    }
    if let Some(out) = &cli.out {
        e.out_dir = out.clone();
    }
    if let Some(p) = &cli.policy {
        e.policies = parse_policies(p)?;
    }
    if let Some(d) = &cli.direction {
        e.direction = d.parse::<Direction>()?;
    }
    if let Some(b) = &cli.beamformer {
        e.beamformer = b.parse::<BeamformerKind>()?;
    }
    Ok(cfg)
}

fn load_models(cfg: &ExperimentConfig, args: &ModelArgs) -> Result<Models, Failure> {
    let open = |p: Option<&PathBuf>| -> Result<Option<Model>, Failure> {
        p.map(|p| Model::load(p).map_err(|e| usage(format!("cannot load model {}: {e}", p.display()))))
            .transpose()
    };
    Ok(Models {
        e2e: open(args.model.as_ref().or(cfg.experiment.model.as_ref()))?,
        unfolded: open(args.unfolded_model.as_ref().or(cfg.experiment.unfolded_model.as_ref()))?,
    })
}

fn write(path: &Path, contents: String) -> Result<(), Failure> {
    fs::write(path, contents).map_err(|e| Failure { code: 1, message: format!("{}: {e}", path.display()) })
}

fn run(cli: Cli) -> Result<(), Failure> {
    let mut cfg = load_config(&cli)?;
    match &cli.command {
        Command::Simulate { trials, deployments, models } => {
            if let Some(n) = trials {
                cfg.experiment.trials = *n;
            }
            cfg.validate()?;
            let models = load_models(&cfg, models)?;
            let report = experiment::simulate(&cfg, &models)?;
            let paths = write_simulation(&cfg, &report, &cfg.experiment.out_dir)?;
            for p in &report.policies {
                let s = p.summary();
                let median = s.min_rate_bps.map(|r| r.p50).unwrap_or(f64::NAN);
                println!(
                    "{:<12} median min-rate {:>12.4e} bit/s  violations {}  failures {}",
                    s.policy, median, s.violations, s.failures
                );
            }
            let mut written = paths.len();
            if *deployments {
                let e = &cfg.experiment;
                for t in 0..e.trials {
                    let trial = Trial::generate(&cfg.system, e.beamformer, e.seed, t)?;
                    let mut csv = Vec::new();
                    trial.deployment.write_csv(&mut csv).map_err(Error::from)?;
                    let path = e.out_dir.join(format!("deployment-{t}.csv"));
                    fs::write(&path, csv).map_err(|err| Failure { code: 1, message: format!("{}: {err}", path.display()) })?;
                    written += 1;
                }
            }
            println!("wrote {written} files to {}", cfg.experiment.out_dir.display());
        }
        Command::Dataset { samples } => {
            let n = samples.unwrap_or(cfg.experiment.dataset_size);
            let bundle = experiment::generate_dataset(&cfg, n)?;
            for p in write_dataset_bundle(&bundle, &cfg.experiment.out_dir)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Train { dataset } => {
            cfg.validate()?;
            let ds = Dataset::read(dataset).map_err(|e| usage(format!("cannot read dataset {}: {e}", dataset.display())))?;
            let learned: Vec<Policy> = cfg.experiment.policies.iter().copied().filter(|p| p.is_learned()).collect();
            let learned = if learned.is_empty() { vec![Policy::E2eDnn] } else { learned };
            let dir = &cfg.experiment.out_dir;
            fs::create_dir_all(dir).map_err(|e| Failure { code: 1, message: e.to_string() })?;
            for policy in learned {
                let model = experiment::train_policy(&cfg, policy, &ds)?;
                let slug = policy.slug();
                model.save(&dir.join(format!("model-{slug}.json")))?;
                write(&dir.join(format!("curve-{slug}.csv")), curves_csv(&model))?;
                for (i, c) in model.curves.iter().enumerate() {
                    let best = c.epochs[c.best_epoch].val_mae.unwrap_or(c.epochs[c.best_epoch].train_mae);
                    println!("{slug} stage {}: best epoch {} (MAE {best:.4e})", i + 1, c.best_epoch);
                }
            }
        }
        Command::Bench { trials, models } => {
            if let Some(n) = trials {
                cfg.experiment.trials = *n;
            }
            cfg.validate()?;
            let models = load_models(&cfg, models)?;
            let report = experiment::bench(&cfg, &models)?;
            let dir = &cfg.experiment.out_dir;
            fs::create_dir_all(dir).map_err(|e| Failure { code: 1, message: e.to_string() })?;
            let table = bench_csv(&report);
            write(&dir.join("bench.csv"), table.clone())?;
            let summary = serde_json::to_string_pretty(&bench_json(&report)).map_err(Error::from)?;
            write(&dir.join("bench.json"), summary + "\n")?;
            print!("{table}");
            if let (_, Some(ratio)) = report.ordering() {
                println!("opc-maximin / opc-lse = {ratio:.2}{}", if ratio < 1.0 { " (maximin faster)" } else { "" });
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
