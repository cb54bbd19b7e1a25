//! Plain-text `key = value` run configuration with dotted keys. Values are
//! resolved as built-in defaults, then the config file, then `--set` pairs,
//! then subcommand flags.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use toonface::data::{Task, DEFAULT_SIGMA_K};
use toonface::metrics::DEFAULT_IOU_THRESHOLD;
use toonface::models::{HcnnConfig, LandmarkNetConfig, TrainConfig};
use toonface::nn::{AdamConfig, PlateauConfig, SgdConfig};
use toonface::shallow::{GbParams, SvmParams, DEFAULT_FOLDS};

use crate::error::{bad_args, CliError, CliResult};

fn list<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn f(v: f64) -> String {
    format!("{v:?}")
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|v| v.to_string()).unwrap_or_default()
}

/// Every recognized key with its default and a one-line description. An
/// empty default means "unset".
pub fn defaults() -> Vec<(&'static str, String, &'static str)> {
    let h = HcnnConfig::new(2);
    let t = TrainConfig::default();
    let l = LandmarkNetConfig::default();
    let svm = SvmParams::default();
    let gb = GbParams::default();
    vec![
        ("seed", String::new(), "seed for every stochastic step (required where randomness is used)"),
        ("task", "character".into(), "label to predict: character or gender"),
        ("data.images", String::new(), "directory of <image_id>.pgm/.ppm images"),
        ("data.labels", String::new(), "labels CSV: image_id,class,gender"),
        ("data.landmarks", String::new(), "landmark table CSV"),
        ("data.split", String::new(), "split CSV (image_id,partition) for the loaded dataset"),
        (
            "data.val_dataset",
            String::new(),
            "dataset directory (images/, labels.csv, landmarks.csv) used for validation",
        ),
        ("data.features", String::new(), "feature vectors CSV: image_id,label,f0..f{dim-1}"),
        ("data.feature_dim", "2048".into(), "width of each feature vector"),
        ("data.predictions", String::new(), "ranked predictions CSV: image_id,class,p,class,p,..."),
        ("data.boxes_truth", String::new(), "ground-truth face boxes CSV"),
        ("data.boxes_detected", String::new(), "detected face boxes CSV"),
        ("model.path", String::new(), "trained model file"),
        ("hcnn.conv_filters", list(&h.conv_filters), "filters of the four conv stacks"),
        ("hcnn.fc_widths", list(&h.fc_widths), "widths of the two layers before the auxiliary head"),
        ("hcnn.main_widths", list(&h.main_widths), "hidden widths of the main branch"),
        ("hcnn.dropout", f(h.dropout), "dropout before each softmax layer"),
        ("hcnn.leaky_slope", f(h.leaky_slope), "leaky ReLU slope"),
        ("hcnn.aux_discount", f(h.aux_discount), "weight of the auxiliary loss"),
        ("hcnn.skip_connection", h.skip_connection.to_string(), "concatenate conv features into the main branch"),
        ("hcnn.batch_norm", h.batch_norm.to_string(), "batch norm after each conv"),
        ("hcnn.dense_batch_norm", h.dense_batch_norm.to_string(), "batch norm on the linear dense layers too"),
        ("hcnn.conv_init_limit", f(h.conv_init_limit), "conv weights start uniform on ±limit"),
        ("hcnn.bn_eps", f(h.bn_eps), "batch norm epsilon"),
        ("hcnn.bn_momentum", f(h.bn_momentum), "batch norm running-statistics momentum"),
        ("train.batch_size", t.batch_size.to_string(), "mini-batch size"),
        ("train.max_epochs", t.max_epochs.to_string(), "epoch limit"),
        ("train.adam.lr", f(t.adam.lr), "Adam learning rate (main branch, landmark net)"),
        ("train.adam.beta1", f(t.adam.beta1), "Adam beta1"),
        ("train.adam.beta2", f(t.adam.beta2), "Adam beta2"),
        ("train.adam.eps", f(t.adam.eps), "Adam epsilon"),
        ("train.sgd.lr", f(t.sgd.lr), "SGD learning rate (auxiliary head)"),
        ("train.sgd.momentum", f(t.sgd.momentum), "Nesterov momentum"),
        ("train.sgd.weight_decay", f(t.sgd.weight_decay), "SGD weight decay"),
        (
            "train.plateau.patience",
            t.plateau.patience.to_string(),
            "epochs without improvement before the aux lr drops",
        ),
        ("train.plateau.min_delta", f(t.plateau.min_delta), "improvement that resets the plateau counter"),
        ("train.plateau.factor", f(t.plateau.factor), "aux lr divisor on a plateau"),
        ("train.plateau.min_lr", f(t.plateau.min_lr), "aux lr floor"),
        ("train.min_delta", f(t.min_delta), "improvement counted for convergence and early stopping"),
        ("train.early_stop_patience", opt(t.early_stop_patience), "stop after this many epochs without improvement"),
        ("train.stop_at_train_accuracy", opt(t.stop_at_train_accuracy), "stop once training accuracy reaches this"),
        ("train.recalibrate_batch_norm", t.recalibrate_batch_norm.to_string(), "recompute BN statistics each epoch"),
        ("landmarks.conv_filters", list(&l.conv_filters), "filters of the three conv stacks"),
        ("landmarks.hidden_widths", list(&l.hidden_widths), "hidden dense widths"),
        ("landmarks.conv_dropout", list(&l.conv_dropout), "dropout after each conv stack"),
        ("landmarks.hidden_dropout", list(&l.hidden_dropout), "dropout after each hidden layer"),
        ("landmarks.leaky_slope", f(l.leaky_slope), "leaky ReLU slope"),
        ("landmarks.conv_init_limit", f(l.conv_init_limit), "conv weights start uniform on ±limit"),
        ("svm.c", f(svm.c), "penalty C"),
        ("svm.gamma", f(svm.gamma), "RBF kernel width"),
        ("svm.probability", svm.probability.to_string(), "fit Platt sigmoids for probability output"),
        ("svm.tolerance", f(svm.tolerance), "SMO stopping tolerance"),
        ("gb.shrinkage", f(gb.shrinkage), "learning rate"),
        ("gb.max_depth", gb.max_depth.to_string(), "tree depth"),
        ("gb.stages", gb.stages.to_string(), "boosting stages"),
        ("shallow.landmark_features", "false".into(), "append the 30 landmark coordinates to each feature vector"),
        ("grid.model", "svm".into(), "model family searched: svm or gb"),
        ("grid.folds", DEFAULT_FOLDS.to_string(), "cross-validation folds"),
        ("grid.svm.c", "1,10,50,100".into(), "C values searched"),
        ("grid.svm.gamma", "0.0001,0.001,0.01".into(), "gamma values searched"),
        ("grid.gb.shrinkage", "0.05,0.08,0.1".into(), "shrinkage values searched"),
        ("grid.gb.max_depth", "2,3".into(), "depths searched"),
        ("grid.gb.stages", "50,100".into(), "stage counts searched"),
        ("balance.min", toonface::data::MIN_PER_CLASS.to_string(), "classes below this are oversampled"),
        ("balance.max", toonface::data::MAX_PER_CLASS.to_string(), "classes above this are subsampled"),
        ("balance.gender", "false".into(), "also bring both genders to equal counts"),
        ("validate.sigma_k", f(DEFAULT_SIGMA_K), "outlier bound in standard deviations"),
        ("predict.top_k", "5".into(), "classes listed per prediction"),
        ("eval.iou_threshold", f(DEFAULT_IOU_THRESHOLD), "IoU needed for a detection to match a face"),
    ]
}

/// Defaults table for `--help`.
pub fn defaults_help() -> String {
    let mut out = String::from("Configuration keys (set in --config files or with --set key=value):\n");
    for (k, v, help) in defaults() {
        let v = if v.is_empty() { "<unset>".to_string() } else { v };
        let _ = writeln!(out, "  {k} = {v}\n      {help}");
    }
    out.push_str("\nEnvironment:\n  TOONFACE_RUN_ROOT  parent of default run directories (default `runs`)\n");
    out.push_str("\nExit codes: 0 success, 1 validation failure, 2 bad arguments, 3 internal error.\n");
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig { values: defaults().into_iter().map(|(k, v, _)| (k.to_string(), v)).collect() }
    }
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: impl Into<String>) -> CliResult<()> {
        match self.values.get_mut(key) {
            Some(slot) => {
                let value = value.into();
                if value.contains('\n') {
                    return Err(CliError::BadArgs(format!("config `{key}`: value spans lines")));
                }
                *slot = value;
                Ok(())
            }
            None => Err(CliError::BadArgs(format!("unknown config key `{key}`"))),
        }
    }

    /// Applies `key=value` (as given to `--set`).
    pub fn set_pair(&mut self, pair: &str) -> CliResult<()> {
        let (k, v) =
            pair.split_once('=').ok_or_else(|| CliError::BadArgs(format!("`--set {pair}` is not key=value")))?;
        self.set(k.trim(), v.trim())
    }

    pub fn merge_file(&mut self, path: &Path) -> CliResult<()> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::BadArgs(format!("cannot read config `{}`: {e}", path.display())))?;
        for (n, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::BadArgs(format!("{}:{}: expected `key = value`", path.display(), n + 1)))?;
            self.set(k.trim(), v.trim()).map_err(|e| match e {
                CliError::BadArgs(m) => CliError::BadArgs(format!("{}:{}: {m}", path.display(), n + 1)),
                other => other,
            })?;
        }
        Ok(())
    }

    /// Every key, sorted, in the file format read by [`RunConfig::merge_file`].
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.values {
            let _ = writeln!(out, "{k} = {v}");
        }
        out
    }

    pub fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_else(|| panic!("undeclared config key `{key}`"))
    }

    pub fn is_set(&self, key: &str) -> bool {
        !self.raw(key).is_empty()
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, what: &str) -> CliResult<T> {
        let raw = self.raw(key);
        if raw.is_empty() {
            return Err(CliError::BadArgs(format!("config `{key}` must be set")));
        }
        raw.parse().map_err(|_| CliError::BadArgs(format!("config `{key}`: `{raw}` is not {what}")))
    }

    pub fn usize(&self, key: &str) -> CliResult<usize> {
        self.parse(key, "a non-negative integer")
    }

    pub fn f64(&self, key: &str) -> CliResult<f64> {
        let v: f64 = self.parse(key, "a number")?;
        if !v.is_finite() {
            return Err(CliError::BadArgs(format!("config `{key}` must be finite")));
        }
        Ok(v)
    }

    pub fn bool(&self, key: &str) -> CliResult<bool> {
        self.parse(key, "true or false")
    }

    pub fn opt_usize(&self, key: &str) -> CliResult<Option<usize>> {
        if self.is_set(key) {
            self.usize(key).map(Some)
        } else {
            Ok(None)
        }
    }

    pub fn opt_f64(&self, key: &str) -> CliResult<Option<f64>> {
        if self.is_set(key) {
            self.f64(key).map(Some)
        } else {
            Ok(None)
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str, what: &str) -> CliResult<Vec<T>> {
        let raw = self.raw(key);
        raw.split(',')
            .map(|t| t.trim().parse().map_err(|_| CliError::BadArgs(format!("config `{key}`: `{t}` is not {what}"))))
            .collect()
    }

    pub fn usize_list(&self, key: &str) -> CliResult<Vec<usize>> {
        self.list(key, "a non-negative integer")
    }

    pub fn f64_list(&self, key: &str) -> CliResult<Vec<f64>> {
        self.list(key, "a number")
    }

    fn array<T: std::str::FromStr + Copy, const N: usize>(&self, key: &str, what: &str) -> CliResult<[T; N]> {
        let v: Vec<T> = self.list(key, what)?;
        let n = v.len();
        v.try_into().map_err(|_| CliError::BadArgs(format!("config `{key}` needs {N} values, got {n}")))
    }

    pub fn seed(&self) -> CliResult<u64> {
        if !self.is_set("seed") {
            return Err(CliError::BadArgs("this subcommand is stochastic: pass --seed or set `seed`".into()));
        }
        self.parse("seed", "an unsigned 64-bit integer")
    }

    pub fn task(&self) -> CliResult<Task> {
        bad_args(self.raw("task").parse())
    }

    /// A required input path that must exist.
    pub fn input(&self, key: &str) -> CliResult<PathBuf> {
        self.opt_input(key)?.ok_or_else(|| CliError::BadArgs(format!("config `{key}` must be set")))
    }

    pub fn opt_input(&self, key: &str) -> CliResult<Option<PathBuf>> {
        if !self.is_set(key) {
            return Ok(None);
        }
        let p = PathBuf::from(self.raw(key));
        if !p.exists() {
            return Err(CliError::BadArgs(format!("config `{key}`: `{}` does not exist", p.display())));
        }
        Ok(Some(p))
    }

    pub fn hcnn(&self, num_classes: usize) -> CliResult<HcnnConfig> {
        let mut c = HcnnConfig::new(num_classes);
        c.conv_filters = self.array("hcnn.conv_filters", "a positive integer")?;
        c.fc_widths = self.array("hcnn.fc_widths", "a positive integer")?;
        c.main_widths = self.array("hcnn.main_widths", "a positive integer")?;
        c.dropout = self.f64("hcnn.dropout")?;
        c.leaky_slope = self.f64("hcnn.leaky_slope")?;
        c.aux_discount = self.f64("hcnn.aux_discount")?;
        c.skip_connection = self.bool("hcnn.skip_connection")?;
        c.batch_norm = self.bool("hcnn.batch_norm")?;
        c.dense_batch_norm = self.bool("hcnn.dense_batch_norm")?;
        c.conv_init_limit = self.f64("hcnn.conv_init_limit")?;
        c.bn_eps = self.f64("hcnn.bn_eps")?;
        c.bn_momentum = self.f64("hcnn.bn_momentum")?;
        bad_args(c.validate())?;
        Ok(c)
    }

    pub fn landmark_net(&self) -> CliResult<LandmarkNetConfig> {
        let c = LandmarkNetConfig {
            conv_filters: self.array("landmarks.conv_filters", "a positive integer")?,
            hidden_widths: self.array("landmarks.hidden_widths", "a positive integer")?,
            conv_dropout: self.array("landmarks.conv_dropout", "a rate")?,
            hidden_dropout: self.array("landmarks.hidden_dropout", "a rate")?,
            leaky_slope: self.f64("landmarks.leaky_slope")?,
            conv_init_limit: self.f64("landmarks.conv_init_limit")?,
            ..LandmarkNetConfig::default()
        };
        bad_args(c.validate())?;
        Ok(c)
    }

    pub fn train(&self, seed: u64) -> CliResult<TrainConfig> {
        let c = TrainConfig {
            seed,
            batch_size: self.usize("train.batch_size")?,
            max_epochs: self.usize("train.max_epochs")?,
            adam: AdamConfig {
                lr: self.f64("train.adam.lr")?,
                beta1: self.f64("train.adam.beta1")?,
                beta2: self.f64("train.adam.beta2")?,
                eps: self.f64("train.adam.eps")?,
            },
            sgd: SgdConfig {
                lr: self.f64("train.sgd.lr")?,
                momentum: self.f64("train.sgd.momentum")?,
                weight_decay: self.f64("train.sgd.weight_decay")?,
            },
            plateau: PlateauConfig {
                patience: self.usize("train.plateau.patience")?,
                min_delta: self.f64("train.plateau.min_delta")?,
                factor: self.f64("train.plateau.factor")?,
                min_lr: self.f64("train.plateau.min_lr")?,
            },
            min_delta: self.f64("train.min_delta")?,
            early_stop_patience: self.opt_usize("train.early_stop_patience")?,
            stop_at_train_accuracy: self.opt_f64("train.stop_at_train_accuracy")?,
            recalibrate_batch_norm: self.bool("train.recalibrate_batch_norm")?,
        };
        bad_args(c.validate())?;
        Ok(c)
    }

    pub fn svm(&self) -> CliResult<SvmParams> {
        let p = SvmParams {
            c: self.f64("svm.c")?,
            gamma: self.f64("svm.gamma")?,
            probability: self.bool("svm.probability")?,
            tolerance: self.f64("svm.tolerance")?,
        };
        bad_args(p.smo().validate())?;
        Ok(p)
    }

    pub fn gb(&self) -> CliResult<GbParams> {
        let p = GbParams {
            shrinkage: self.f64("gb.shrinkage")?,
            max_depth: self.usize("gb.max_depth")?,
            stages: self.usize("gb.stages")?,
        };
        bad_args(p.validate())?;
        Ok(p)
    }
}
