mod commands;
mod config;
mod error;
mod run_dir;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, CommandFactory, FromArgMatches, Parser, Subcommand};

use config::RunConfig;
use error::CliResult;
use run_dir::RunDir;

/// Cartoon-face recognition toolkit.
#[derive(Debug, Parser)]
#[command(name = "toonface", version)]
struct Cli {
    /// Configuration file of `key = value` lines.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Overrides one configuration key; repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Run directory (default: first unused $TOONFACE_RUN_ROOT/<command>-NNN).
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Seed for every stochastic step [config: seed].
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// character or gender [config: task].
    #[arg(long, global = true)]
    task: Option<String>,
    #[command(flatten)]
    data: DataArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct DataArgs {
    /// Image directory [config: data.images].
    #[arg(long, global = true, value_name = "DIR")]
    images: Option<String>,
    /// Labels CSV [config: data.labels].
    #[arg(long, global = true, value_name = "FILE")]
    labels: Option<String>,
    /// Landmark table CSV [config: data.landmarks].
    #[arg(long, global = true, value_name = "FILE")]
    landmarks: Option<String>,
    /// Split CSV [config: data.split].
    #[arg(long, global = true, value_name = "FILE")]
    split: Option<String>,
    /// Validation dataset directory [config: data.val_dataset].
    #[arg(long, global = true, value_name = "DIR")]
    val_dataset: Option<String>,
    /// Feature vectors CSV [config: data.features].
    #[arg(long, global = true, value_name = "FILE")]
    features: Option<String>,
    /// Model file [config: model.path].
    #[arg(long, global = true, value_name = "FILE")]
    model: Option<String>,
    /// Ranked predictions CSV [config: data.predictions].
    #[arg(long, global = true, value_name = "FILE")]
    predictions: Option<String>,
    /// Ground-truth boxes CSV [config: data.boxes_truth].
    #[arg(long, global = true, value_name = "FILE")]
    truth_boxes: Option<String>,
    /// Detected boxes CSV [config: data.boxes_detected].
    #[arg(long, global = true, value_name = "FILE")]
    detected_boxes: Option<String>,
}

#[derive(Debug, Args)]
struct TrainArgs {
    /// [config: train.max_epochs]
    #[arg(long)]
    max_epochs: Option<usize>,
    /// [config: train.batch_size]
    #[arg(long)]
    batch_size: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a landmark table for out-of-range and outlier coordinates.
    ValidateAnnotations {
        /// [config: validate.sigma_k]
        #[arg(long)]
        sigma_k: Option<f64>,
    },
    /// Balance classes (and optionally genders) by augmentation and subsampling.
    Augment {
        /// Also equalize genders [config: balance.gender].
        #[arg(long)]
        balance_gender: bool,
    },
    /// Stratified 70/10/20 train/validation/test split.
    Split,
    /// Train the hybrid pixel + landmark CNN.
    TrainHcnn(TrainArgs),
    /// Train the landmark regressor.
    TrainLandmarks(TrainArgs),
    /// Train an RBF SVM on feature vectors.
    TrainSvm {
        /// [config: svm.c]
        #[arg(long)]
        c: Option<f64>,
        /// [config: svm.gamma]
        #[arg(long)]
        gamma: Option<f64>,
    },
    /// Train gradient boosting on feature vectors.
    TrainGb {
        /// [config: gb.shrinkage]
        #[arg(long)]
        shrinkage: Option<f64>,
        /// [config: gb.max_depth]
        #[arg(long)]
        max_depth: Option<usize>,
        /// [config: gb.stages]
        #[arg(long)]
        stages: Option<usize>,
    },
    /// Cross-validated grid search, then refit the best cell on all rows.
    GridSearch {
        /// svm or gb [config: grid.model].
        #[arg(long)]
        family: Option<String>,
        /// [config: grid.folds]
        #[arg(long)]
        folds: Option<usize>,
    },
    /// Predict with a trained model (classes or landmarks, by model kind).
    Predict {
        /// [config: predict.top_k]
        #[arg(long)]
        top_k: Option<usize>,
    },
    /// Accuracy, macro precision/recall/F1, top-5 error and confusion matrix.
    EvalRecognition,
    /// True-positive, false-positive and false-negative rates of face detection.
    EvalDetection {
        /// [config: eval.iou_threshold]
        #[arg(long)]
        iou_threshold: Option<f64>,
    },
    /// Train the HCNN with and without skip connection + batch norm and compare.
    AblateHcnn(TrainArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::ValidateAnnotations { .. } => "validate-annotations",
            Command::Augment { .. } => "augment",
            Command::Split => "split",
            Command::TrainHcnn(_) => "train-hcnn",
            Command::TrainLandmarks(_) => "train-landmarks",
            Command::TrainSvm { .. } => "train-svm",
            Command::TrainGb { .. } => "train-gb",
            Command::GridSearch { .. } => "grid-search",
            Command::Predict { .. } => "predict",
            Command::EvalRecognition => "eval-recognition",
            Command::EvalDetection { .. } => "eval-detection",
            Command::AblateHcnn(_) => "ablate-hcnn",
        }
    }

    /// Subcommand flags as config overrides.
    fn overrides(&self) -> Vec<(&'static str, Option<String>)> {
        fn s<T: ToString>(v: &Option<T>) -> Option<String> {
            v.as_ref().map(ToString::to_string)
        }
        let train =
            |t: &TrainArgs| vec![("train.max_epochs", s(&t.max_epochs)), ("train.batch_size", s(&t.batch_size))];
        match self {
            Command::ValidateAnnotations { sigma_k } => vec![("validate.sigma_k", s(sigma_k))],
            Command::Augment { balance_gender } => {
                vec![("balance.gender", balance_gender.then(|| "true".to_string()))]
            }
            Command::Split | Command::EvalRecognition => Vec::new(),
            Command::TrainHcnn(t) | Command::TrainLandmarks(t) | Command::AblateHcnn(t) => train(t),
            Command::TrainSvm { c, gamma } => vec![("svm.c", s(c)), ("svm.gamma", s(gamma))],
            Command::TrainGb { shrinkage, max_depth, stages } => {
                vec![("gb.shrinkage", s(shrinkage)), ("gb.max_depth", s(max_depth)), ("gb.stages", s(stages))]
            }
            Command::GridSearch { family, folds } => vec![("grid.model", s(family)), ("grid.folds", s(folds))],
            Command::Predict { top_k } => vec![("predict.top_k", s(top_k))],
            Command::EvalDetection { iou_threshold } => vec![("eval.iou_threshold", s(iou_threshold))],
        }
    }
}

fn resolve(cli: &Cli) -> CliResult<RunConfig> {
    let mut cfg = RunConfig::default();
    if let Some(p) = &cli.config {
        cfg.merge_file(p)?;
    }
    for pair in &cli.set {
        cfg.set_pair(pair)?;
    }
    let d = &cli.data;
    let flags = [
        ("seed", cli.seed.map(|v| v.to_string())),
        ("task", cli.task.clone()),
        ("data.images", d.images.clone()),
        ("data.labels", d.labels.clone()),
        ("data.landmarks", d.landmarks.clone()),
        ("data.split", d.split.clone()),
        ("data.val_dataset", d.val_dataset.clone()),
        ("data.features", d.features.clone()),
        ("model.path", d.model.clone()),
        ("data.predictions", d.predictions.clone()),
        ("data.boxes_truth", d.truth_boxes.clone()),
        ("data.boxes_detected", d.detected_boxes.clone()),
    ];
    for (k, v) in flags.into_iter().chain(cli.command.overrides()) {
        if let Some(v) = v {
            cfg.set(k, v)?;
        }
    }
    cfg.task()?;
    Ok(cfg)
}

/// Rejects invalid hyperparameters before a run directory is created.
fn precheck(cmd: &Command, cfg: &RunConfig) -> CliResult<()> {
    match cmd {
        Command::TrainHcnn(_) | Command::AblateHcnn(_) => {
            cfg.train(0)?;
            cfg.hcnn(2)?;
        }
        Command::TrainLandmarks(_) => {
            cfg.train(0)?;
            cfg.landmark_net()?;
        }
        Command::TrainSvm { .. } => {
            cfg.svm()?;
        }
        Command::TrainGb { .. } => {
            cfg.gb()?;
        }
        Command::GridSearch { .. } => {
            cfg.usize("grid.folds")?;
            cfg.f64_list("grid.svm.c")?;
            cfg.f64_list("grid.svm.gamma")?;
            cfg.f64_list("grid.gb.shrinkage")?;
            cfg.usize_list("grid.gb.max_depth")?;
            cfg.usize_list("grid.gb.stages")?;
        }
        Command::Augment { .. } => {
            cfg.usize("balance.min")?;
            cfg.usize("balance.max")?;
        }
        Command::ValidateAnnotations { .. } => {
            cfg.f64("validate.sigma_k")?;
        }
        Command::Predict { .. } => {
            cfg.usize("predict.top_k")?;
        }
        Command::EvalDetection { .. } => {
            cfg.f64("eval.iou_threshold")?;
        }
        Command::Split | Command::EvalRecognition => {}
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult<()> {
    let cfg = resolve(&cli)?;
    precheck(&cli.command, &cfg)?;
    let name = cli.command.name();
    let run = RunDir::open(cli.out.as_deref(), name)?;
    run.write_config(name, &cfg)?;
    log::info!("run directory {}", run.path().display());
    let ctx = commands::Ctx { cfg: &cfg, run: &run };
    match &cli.command {
        Command::ValidateAnnotations { .. } => commands::validate_annotations(&ctx),
        Command::Augment { .. } => commands::augment(&ctx),
        Command::Split => commands::split_cmd(&ctx),
        Command::TrainHcnn(_) => commands::train_hcnn_cmd(&ctx),
        Command::TrainLandmarks(_) => commands::train_landmarks_cmd(&ctx),
        Command::TrainSvm { .. } => commands::train_svm_cmd(&ctx),
        Command::TrainGb { .. } => commands::train_gb_cmd(&ctx),
        Command::GridSearch { .. } => commands::grid_search_cmd(&ctx),
        Command::Predict { .. } => commands::predict_cmd(&ctx),
        Command::EvalRecognition => commands::eval_recognition_cmd(&ctx),
        Command::EvalDetection { .. } => commands::eval_detection_cmd(&ctx),
        Command::AblateHcnn(_) => commands::ablate_hcnn_cmd(&ctx),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let matches = Cli::command().after_long_help(config::defaults_help()).get_matches();
    let cli = match Cli::from_arg_matches(&matches) {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("toonface: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::error::CliError;

    #[test]
    fn clap_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn flags_override_set_which_overrides_defaults() {
        let cli = Cli::parse_from([
            "toonface",
            "--set",
            "train.max_epochs=7",
            "--set",
            "svm.c=3",
            "train-hcnn",
            "--max-epochs",
            "9",
        ]);
        let cfg = resolve(&cli).unwrap();
        assert_eq!(cfg.raw("train.max_epochs"), "9");
        assert_eq!(cfg.raw("svm.c"), "3");
    }

    #[test]
    fn bad_task_is_an_argument_error() {
        let cli = Cli::parse_from(["toonface", "--task", "species", "split"]);
        assert!(matches!(resolve(&cli), Err(CliError::BadArgs(_))));
    }
}
