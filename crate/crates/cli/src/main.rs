use clap::{Args, Parser, Subcommand};
use radarim::ccnn::{read_checkpoint, write_checkpoint, Checkpoint};
use radarim::experiment::{
    mitigate, range_angle_map, run_evaluation, ExperimentConfig, Method, ModelChoice, TrainedModel,
    DEFAULT_ANGLE_UPSAMPLING, PGM_FLOOR_DB,
};
use radarim::sim::{generate_dataset, load_sample, manifest_root, Manifest};
use radarim::train::{history_csv, train_model, Predictor};
use radarim::Error;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "radarim",
    version,
    about = "FMCW radar interference mitigation experiments"
)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration (JSON); defaults apply to missing keys.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Overrides the dataset and training seeds.
    #[arg(long, global = true, value_name = "N")]
    seed: Option<u64>,
    /// Pins every interferer's angle of arrival, degrees.
    #[arg(long, global = true, value_name = "DEG", allow_negative_numbers = true)]
    fixed_aoa: Option<f64>,
    /// Record the run as deterministic. Results never depend on the thread count.
    #[arg(long, global = true)]
    deterministic: bool,
    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the train/val/test splits and write a manifest.
    Generate {
        /// Replace an existing non-empty output directory.
        #[arg(long)]
        overwrite: bool,
    },
    /// Train a network and write `model.ckp1` and `history.csv`.
    Train {
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        /// Preset name; overrides the configuration's model.
        #[arg(long)]
        model: Option<String>,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long, value_name = "PATH")]
        resume: Option<PathBuf>,
    },
    /// Score mitigation methods on the test split.
    Evaluate {
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        /// Trained network for a table row, as METHOD=PATH.
        #[arg(long = "checkpoint", value_name = "METHOD=PATH")]
        checkpoints: Vec<String>,
        /// Network trained on fixed-AoA data, as METHOD=PATH.
        #[arg(long = "fixed-aoa-checkpoint", value_name = "METHOD=PATH")]
        fixed_aoa_checkpoints: Vec<String>,
        /// Comma-separated methods; overrides the configuration.
        #[arg(long, value_delimiter = ',')]
        methods: Vec<String>,
    },
    /// Draw a sample as a range-angle map (PGM plus ASCII preview).
    Render {
        #[arg(long, value_name = "PATH")]
        manifest: PathBuf,
        /// Sample id, e.g. test-00003.
        #[arg(long)]
        sample: String,
        /// `interfered`, `clean` or a method name.
        #[arg(long, default_value = "interfered")]
        source: String,
        /// Needed when the source is a network.
        #[arg(long, value_name = "PATH")]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_ANGLE_UPSAMPLING)]
        upsample: usize,
    },
}

/// Exit codes: 1 usage, 2 data, 3 numerical.
fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InvalidArgument(_) | Error::InvalidConfig(_) => 1,
        Error::Numerical(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(1);
    }
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(v) = std::env::var("RADARIM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("RADARIM_THREADS must be a positive integer, got {v:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn load_config(c: &Common) -> radarim::Result<ExperimentConfig> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = c.seed {
        cfg.dataset.seed = seed;
        cfg.train.seed = seed;
    }
    if c.fixed_aoa.is_some() {
        cfg.dataset.fixed_aoa = c.fixed_aoa;
    }
    cfg.train.deterministic |= c.deterministic;
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> radarim::Result<()> {
    let mut cfg = load_config(&cli.common)?;
    let out = |default: &str| {
        cli.common
            .out
            .clone()
            .unwrap_or_else(|| PathBuf::from(default))
    };
    match cli.command {
        Command::Generate { overwrite } => {
            let dir = out("data");
            cfg.dataset.overwrite |= overwrite;
            let m = generate_dataset(&cfg.dataset_options(), &cfg.radar, &dir)?;
            println!(
                "{}: {}/{}/{} samples",
                dir.join("manifest.json").display(),
                m.splits.train.len(),
                m.splits.val.len(),
                m.splits.test.len()
            );
        }
        Command::Train {
            manifest,
            model,
            resume,
        } => {
            if let Some(name) = model {
                cfg.model = ModelChoice::Preset(name);
            }
            let spec = cfg.model.resolve()?;
            let dir = out("checkpoints");
            std::fs::create_dir_all(&dir).map_err(|e| Error::Io {
                path: dir.clone(),
                source: e,
            })?;
            let resume = resume.as_deref().map(read_checkpoint).transpose()?;
            let ckpt_path = dir.join("model.ckp1");
            println!("epoch,lr,train_mse,val_mse");
            let outcome = train_model(&spec, &manifest, &cfg.train, resume.as_ref(), |rec, ck| {
                println!("{},{},{},{}", rec.epoch, rec.lr, rec.train_mse, rec.val_mse);
                write_checkpoint(&ckpt_path, ck)
            })?;
            write_checkpoint(&ckpt_path, &outcome.checkpoint)?;
            let hist = dir.join("history.csv");
            std::fs::write(&hist, history_csv(&outcome.history)).map_err(|e| Error::Io {
                path: hist,
                source: e,
            })?;
            eprintln!(
                "{}: best epoch {} of {}",
                ckpt_path.display(),
                outcome.checkpoint.header.best_epoch,
                outcome.history.len()
            );
        }
        Command::Evaluate {
            manifest,
            checkpoints,
            fixed_aoa_checkpoints,
            methods,
        } => {
            if !methods.is_empty() {
                cfg.methods = methods
                    .iter()
                    .map(|m| m.parse())
                    .collect::<radarim::Result<_>>()?;
            }
            let models = bind_checkpoints(&checkpoints)?;
            let fixed = bind_checkpoints(&fixed_aoa_checkpoints)?;
            let dir = out("report");
            let rep = run_evaluation(&manifest, &cfg, &models, &fixed, &dir)?;
            print!("{}", radarim::experiment::aggregate_csv(&rep.aggregate));
            if !rep.fixed_aoa.is_empty() {
                println!("# trained with fixed AoA");
                print!("{}", radarim::experiment::aggregate_csv(&rep.fixed_aoa));
            }
        }
        Command::Render {
            manifest,
            sample,
            source,
            checkpoint,
            upsample,
        } => {
            render(
                &manifest,
                &sample,
                &source,
                checkpoint.as_deref(),
                upsample,
                &cfg,
                &out("render"),
            )?;
        }
    }
    Ok(())
}

fn bind_checkpoints(args: &[String]) -> radarim::Result<Vec<TrainedModel>> {
    args.iter()
        .map(|a| {
            let (name, path) = a.split_once('=').ok_or_else(|| {
                Error::InvalidArgument(format!("expected METHOD=PATH, got {a:?}"))
            })?;
            let method: Method = name.parse()?;
            let ck: Checkpoint = read_checkpoint(Path::new(path))?;
            TrainedModel::new(method, &ck)
        })
        .collect()
}

fn render(
    manifest_path: &Path,
    id: &str,
    source: &str,
    checkpoint: Option<&Path>,
    upsample: usize,
    cfg: &ExperimentConfig,
    dir: &Path,
) -> radarim::Result<()> {
    let manifest = Manifest::load(manifest_path)?;
    let record = ["train", "val", "test"]
        .iter()
        .flat_map(|s| manifest.split(s).unwrap_or_default())
        .find(|r| r.id == id)
        .ok_or_else(|| Error::InvalidArgument(format!("no sample {id:?} in the manifest")))?;
    let sample = load_sample(
        &manifest_root(manifest_path),
        record,
        &manifest.radar_config,
    )?;
    let rda = match source {
        "interfered" => sample.interfered_rda.clone(),
        "clean" => sample.clean_rda.clone(),
        other => {
            let method: Method = other.parse()?;
            let predictor = checkpoint
                .map(|p| read_checkpoint(p).map(|ck| Predictor::from_checkpoint(&ck)))
                .transpose()?;
            let pred = mitigate(
                method,
                &sample.interfered_rda,
                &cfg.mitigation,
                predictor.as_ref(),
            )?;
            radarim::dsp::rd_to_rda(&pred.to_rd()?)?
        }
    };
    let map = range_angle_map(&rda, upsample)?;
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.into(),
        source: e,
    })?;
    let stem = dir.join(format!("{id}_{source}"));
    let (pgm, txt) = (stem.with_extension("pgm"), stem.with_extension("txt"));
    std::fs::write(&pgm, map.to_pgm(PGM_FLOOR_DB)).map_err(|e| Error::Io {
        path: pgm.clone(),
        source: e,
    })?;
    let ascii = map.to_ascii(PGM_FLOOR_DB, 96);
    std::fs::write(&txt, &ascii).map_err(|e| Error::Io {
        path: txt.clone(),
        source: e,
    })?;
    print!("{ascii}");
    eprintln!(
        "{} ({} range x {} angle bins)",
        pgm.display(),
        map.rows,
        map.cols
    );
    Ok(())
}
