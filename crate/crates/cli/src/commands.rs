use std::collections::HashMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use log::{info, warn};

use toonface::data::landmarks::column_name;
use toonface::data::load_boxes;
use toonface::data::{
    balance_classes, balance_gender, load_dataset, load_feature_vectors, load_labels, load_landmark_table,
    load_landmark_table_with, parse_feature_vectors, save_dataset, split, to_hcnn_data, to_landmark_data, Bounds,
    Dataset, FeatureSet, Gender, LandmarkImputer, LandmarkSet, LandmarkTable, SplitSpec, Task,
};
use toonface::metrics::report::kv;
use toonface::metrics::{
    detection_rates, evaluate_recognition, format_predictions, parse_predictions, topk_error, PredictionRecord,
};
use toonface::models::train::{evaluate_hcnn, train_hcnn, train_landmark_net, TrainRun};
use toonface::models::{predict_proba, rank_row, scale_coord, unscale_coord, Container, Hcnn, LandmarkNet};
use toonface::shallow::{gb_grid, grid_search_cv, svm_grid, GridCell, ShallowModel, ShallowPipeline};

use crate::config::RunConfig;
use crate::error::{bad_args, CliError, CliResult};
use crate::run_dir::RunDir;

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub run: &'a RunDir,
}

fn class_names(ds: &Dataset, task: Task) -> Vec<String> {
    match task {
        Task::Character => ds.classes.clone(),
        Task::Gender => vec![Gender::Male.to_string(), Gender::Female.to_string()],
    }
}

fn load_table(cfg: &RunConfig) -> CliResult<Option<LandmarkTable>> {
    match cfg.opt_input("data.landmarks")? {
        Some(p) => Ok(Some(load_landmark_table(p)?)),
        None => Ok(None),
    }
}

fn load_main_dataset(cfg: &RunConfig) -> CliResult<Dataset> {
    let table = load_table(cfg)?;
    let ds = load_dataset(&cfg.input("data.images")?, &cfg.input("data.labels")?, table.as_ref())?;
    info!("loaded {} images in {} classes", ds.len(), ds.classes.len());
    Ok(ds)
}

/// Loads a dataset directory as written by `augment` and relabels its classes
/// into `classes`.
fn load_dataset_dir(dir: &Path, classes: &[String]) -> CliResult<Dataset> {
    let lm = dir.join("landmarks.csv");
    let table = if lm.exists() { Some(load_landmark_table(&lm)?) } else { None };
    let ds = load_dataset(&dir.join("images"), &dir.join("labels.csv"), table.as_ref())?;
    align_classes(ds, classes)
}

fn align_classes(ds: Dataset, classes: &[String]) -> CliResult<Dataset> {
    let mut samples = ds.samples;
    for s in &mut samples {
        let name = &ds.classes[s.class_label];
        s.class_label = classes.iter().position(|c| c == name).ok_or_else(|| {
            CliError::Validation(format!("image `{}` has class `{name}`, unknown to the training set", s.image_id))
        })?;
    }
    Ok(Dataset::new(classes.to_vec(), samples)?)
}

struct Parts {
    train: Dataset,
    val: Option<Dataset>,
    test: Option<Dataset>,
}

/// Training, validation and test sets from `data.split` or `data.val_dataset`.
fn partitions(cfg: &RunConfig, ds: Dataset, task: Task, seed: u64) -> CliResult<Parts> {
    let non_empty = |d: Dataset| if d.is_empty() { None } else { Some(d) };
    if let Some(p) = cfg.opt_input("data.split")? {
        let spec = SplitSpec::load(&ds, p, task, seed)?;
        return Ok(Parts {
            train: ds.subset(&spec.train),
            val: non_empty(ds.subset(&spec.val)),
            test: non_empty(ds.subset(&spec.test)),
        });
    }
    let val = match cfg.opt_input("data.val_dataset")? {
        Some(dir) => non_empty(load_dataset_dir(&dir, &ds.classes)?),
        None => None,
    };
    Ok(Parts { train: ds, val, test: None })
}

fn require_seed(cfg: &RunConfig) -> CliResult<u64> {
    cfg.seed()
}

pub fn validate_annotations(ctx: &Ctx) -> CliResult<()> {
    let path = ctx.cfg.input("data.landmarks")?;
    let table = load_landmark_table_with(&path, Bounds::Report)?;
    let report = toonface::data::validate_annotations(&table, ctx.cfg.f64("validate.sigma_k")?);
    let mut out = format!(
        "table: {}\nrows: {}\nvalues checked: {}\nviolations: {}\n",
        path.display(),
        table.len(),
        report.checked,
        report.violations.len()
    );
    if !report.skipped_columns.is_empty() {
        let names: Vec<String> = report.skipped_columns.iter().map(|&c| column_name(c)).collect();
        let _ = writeln!(out, "columns skipped (fewer than 2 values): {}", names.join(", "));
    }
    for v in &report.violations {
        let _ = writeln!(out, "{}", v.describe());
    }
    ctx.run.write("report.txt", &out)?;
    if report.is_valid() {
        Ok(())
    } else {
        Err(CliError::Validation(format!(
            "{} annotation violations in {} (see {})",
            report.violations.len(),
            path.display(),
            ctx.run.file("report.txt").display()
        )))
    }
}

fn balance(cfg: &RunConfig, ds: &Dataset, seed: u64) -> CliResult<Dataset> {
    let mut out = balance_classes(ds, cfg.usize("balance.min")?, cfg.usize("balance.max")?, seed)?;
    if cfg.bool("balance.gender")? {
        out = balance_gender(&out, seed)?;
    }
    Ok(out)
}

pub fn augment(ctx: &Ctx) -> CliResult<()> {
    let seed = require_seed(ctx.cfg)?;
    let ds = load_main_dataset(ctx.cfg)?;
    let mut summary = Vec::new();
    if ctx.cfg.is_set("data.split") {
        let parts = partitions(ctx.cfg, ds, ctx.cfg.task()?, seed)?;
        let train = balance(ctx.cfg, &parts.train, seed)?;
        save_dataset(&train, &ctx.run.file("train"))?;
        summary.push(("train", train.len().to_string()));
        for (name, part) in [("val", parts.val), ("test", parts.test)] {
            let part = part.unwrap_or_else(|| Dataset::new(train.classes.clone(), Vec::new()).expect("empty dataset"));
            save_dataset(&part, &ctx.run.file(name))?;
            summary.push((name, part.len().to_string()));
        }
    } else {
        warn!("no split given: balancing the whole dataset; never evaluate on its augmented images");
        let out = balance(ctx.cfg, &ds, seed)?;
        save_dataset(&out, &ctx.run.file("dataset"))?;
        summary.push(("dataset", out.len().to_string()));
    }
    ctx.run.write("summary.txt", kv(&summary.iter().map(|(k, v)| (*k, v.clone())).collect::<Vec<_>>()))?;
    Ok(())
}

pub fn split_cmd(ctx: &Ctx) -> CliResult<()> {
    let seed = require_seed(ctx.cfg)?;
    let ds = load_main_dataset(ctx.cfg)?;
    let spec = split(&ds, ctx.cfg.task()?, seed)?;
    spec.save(&ds, ctx.run.file("split.csv"))?;
    info!("split: {} train / {} val / {} test", spec.train.len(), spec.val.len(), spec.test.len());
    Ok(())
}

fn history_csv(run: &TrainRun) -> String {
    let mut out = String::from(
        "epoch,train_main_loss,train_aux_loss,train_total_loss,train_accuracy,val_main_loss,val_aux_loss,val_total_loss,val_accuracy,aux_lr\n",
    );
    for e in &run.epochs {
        let t = &e.train;
        let v = e.validation.map_or_else(
            || ",,,".to_string(),
            |v| format!("{},{},{},{}", v.main_loss, v.aux_loss, v.total_loss, v.accuracy),
        );
        let _ = writeln!(
            out,
            "{},{},{},{},{},{v},{}",
            e.epoch, t.main_loss, t.aux_loss, t.total_loss, t.accuracy, e.aux_lr
        );
    }
    out
}

fn hcnn_container(model: &Hcnn, task: Task, classes: &[String], imputer: &LandmarkImputer) -> Container {
    let mut c = model.to_container();
    c.config.push(("meta.task".into(), task.to_string()));
    c.config.push(("meta.classes".into(), classes.join(",")));
    c.config.push(("meta.imputer".into(), imputer.to_config_value()));
    c
}

fn meta_classes(c: &Container) -> CliResult<Vec<String>> {
    Ok(c.config_value("meta.classes")?.split(',').map(str::to_string).collect())
}

fn meta_imputer(c: &Container) -> CliResult<LandmarkImputer> {
    Ok(LandmarkImputer::from_config_value(c.config_value("meta.imputer")?)?)
}

pub fn train_hcnn_cmd(ctx: &Ctx) -> CliResult<()> {
    let seed = require_seed(ctx.cfg)?;
    let task = ctx.cfg.task()?;
    let tc = ctx.cfg.train(seed)?;
    let ds = load_main_dataset(ctx.cfg)?;
    let classes = class_names(&ds, task);
    let hc = ctx.cfg.hcnn(classes.len())?;
    let parts = partitions(ctx.cfg, ds, task, seed)?;
    let imputer = LandmarkImputer::fit(&parts.train.samples);
    let train = to_hcnn_data(&parts.train.samples, task, &imputer)?;
    let val = parts.val.as_ref().map(|v| to_hcnn_data(&v.samples, task, &imputer)).transpose()?;
    if val.is_none() {
        warn!("no validation set: plateau schedule and convergence follow the training loss");
    }
    let mut model = Hcnn::build(hc, seed)?;
    let run = train_hcnn(&mut model, &train, val.as_ref(), &tc)?;
    hcnn_container(&model, task, &classes, &imputer).save(ctx.run.file("model.bin"))?;
    ctx.run.write("history.csv", history_csv(&run))?;
    let last = run.epochs.last().expect("at least one epoch");
    let mut summary = vec![
        ("epochs", run.epochs.len().to_string()),
        ("convergence_epoch", run.convergence_epoch.to_string()),
        ("train_accuracy", last.train.accuracy.to_string()),
        ("train_total_loss", last.train.total_loss.to_string()),
    ];
    if let Some(v) = last.validation {
        summary.push(("val_accuracy", v.accuracy.to_string()));
        summary.push(("val_total_loss", v.total_loss.to_string()));
    }
    ctx.run.write("summary.txt", kv(&summary))?;
    Ok(())
}

pub fn train_landmarks_cmd(ctx: &Ctx) -> CliResult<()> {
    let seed = require_seed(ctx.cfg)?;
    let tc = ctx.cfg.train(seed)?;
    let lc = ctx.cfg.landmark_net()?;
    ctx.cfg.input("data.landmarks")?;
    let ds = load_main_dataset(ctx.cfg)?;
    let parts = partitions(ctx.cfg, ds, ctx.cfg.task()?, seed)?;
    let annotated = |d: &Dataset| -> Vec<toonface::data::Sample> {
        d.samples.iter().filter(|s| s.landmarks.present_count() > 0).cloned().collect()
    };
    let train_samples = annotated(&parts.train);
    if train_samples.is_empty() {
        return Err(CliError::Validation("no training image has any landmark".into()));
    }
    let train = to_landmark_data(&train_samples)?;
    let val = match parts.val.as_ref().map(annotated) {
        Some(s) if !s.is_empty() => Some(to_landmark_data(&s)?),
        _ => None,
    };
    let mut net = LandmarkNet::build(lc, seed)?;
    let run = train_landmark_net(&mut net, &train, val.as_ref(), &tc)?;
    net.to_container().save(ctx.run.file("model.bin"))?;
    let mut hist = String::from("epoch,train_loss,val_rmse_px\n");
    for e in &run.epochs {
        let v = e.validation_rmse_px.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(hist, "{},{},{v}", e.epoch, e.train_loss);
    }
    ctx.run.write("history.csv", hist)?;
    let mut summary = vec![("epochs", run.epochs.len().to_string())];
    if let Some(r) = run.final_validation_rmse_px {
        summary.push(("val_rmse_px", r.to_string()));
    }
    ctx.run.write("summary.txt", kv(&summary))?;
    Ok(())
}

struct ShallowInput {
    features: FeatureSet,
    rows: Vec<Vec<f64>>,
    imputer: Option<LandmarkImputer>,
}

fn load_features(cfg: &RunConfig) -> CliResult<FeatureSet> {
    let path = cfg.input("data.features")?;
    let dim = cfg.usize("data.feature_dim")?;
    if dim == toonface::data::FEATURE_DIM {
        return Ok(load_feature_vectors(&path)?);
    }
    Ok(parse_feature_vectors(&fs::read_to_string(&path)?, &path, dim)?)
}

fn landmark_sets(table: &LandmarkTable, ids: &[String]) -> Vec<LandmarkSet> {
    ids.iter().map(|id| table.get(id).copied().unwrap_or_else(LandmarkSet::missing)).collect()
}

fn with_landmarks(rows: &[Vec<f64>], sets: &[LandmarkSet], imputer: &LandmarkImputer) -> Vec<Vec<f64>> {
    rows.iter().zip(sets).map(|(r, s)| r.iter().copied().chain(imputer.impute(s).map(scale_coord)).collect()).collect()
}

/// Feature rows, extended with imputed landmark coordinates when configured.
/// `imputer` is fitted on these rows when not supplied.
fn shallow_input(cfg: &RunConfig, imputer: Option<LandmarkImputer>) -> CliResult<ShallowInput> {
    let features = load_features(cfg)?;
    if !cfg.bool("shallow.landmark_features")? {
        let rows = features.rows.clone();
        return Ok(ShallowInput { features, rows, imputer: None });
    }
    let table =
        load_table(cfg)?.ok_or_else(|| CliError::BadArgs("shallow.landmark_features needs `data.landmarks`".into()))?;
    let sets = landmark_sets(&table, &features.ids);
    let imputer = imputer.unwrap_or_else(|| LandmarkImputer::fit_sets(&sets));
    let rows = with_landmarks(&features.rows, &sets, &imputer);
    Ok(ShallowInput { features, rows, imputer: Some(imputer) })
}

fn shallow_container(p: &ShallowPipeline, input: &ShallowInput) -> CliResult<Container> {
    let mut c = p.to_container()?;
    c.config.push(("meta.classes".into(), input.features.vocabulary.join(",")));
    c.config.push(("meta.landmark_features".into(), input.imputer.is_some().to_string()));
    if let Some(imp) = &input.imputer {
        c.config.push(("meta.imputer".into(), imp.to_config_value()));
    }
    Ok(c)
}

fn training_accuracy(p: &ShallowPipeline, rows: &[Vec<f64>], labels: &[usize]) -> CliResult<f64> {
    let mut hits = 0;
    for (r, &l) in rows.iter().zip(labels) {
        hits += usize::from(p.predict_row(r)? == l);
    }
    Ok(hits as f64 / rows.len().max(1) as f64)
}

fn fit_shallow(ctx: &Ctx, cell: GridCell) -> CliResult<()> {
    let input = shallow_input(ctx.cfg, None)?;
    info!(
        "fitting {} on {} rows of width {}",
        cell.describe(),
        input.rows.len(),
        input.rows.first().map_or(0, Vec::len)
    );
    let pipe = cell.fit(&input.rows, &input.features.labels)?;
    shallow_container(&pipe, &input)?.save(ctx.run.file("model.bin"))?;
    let acc = training_accuracy(&pipe, &input.rows, &input.features.labels)?;
    ctx.run.write(
        "summary.txt",
        kv(&[("model", cell.describe()), ("rows", input.rows.len().to_string()), ("train_accuracy", acc.to_string())]),
    )?;
    Ok(())
}

pub fn train_svm_cmd(ctx: &Ctx) -> CliResult<()> {
    fit_shallow(ctx, GridCell::Svm(ctx.cfg.svm()?))
}

pub fn train_gb_cmd(ctx: &Ctx) -> CliResult<()> {
    fit_shallow(ctx, GridCell::Gb(ctx.cfg.gb()?))
}

pub fn grid_search_cmd(ctx: &Ctx) -> CliResult<()> {
    let seed = require_seed(ctx.cfg)?;
    let cfg = ctx.cfg;
    let grid = match cfg.raw("grid.model") {
        "svm" => svm_grid(&cfg.f64_list("grid.svm.c")?, &cfg.f64_list("grid.svm.gamma")?, cfg.svm()?),
        "gb" => gb_grid(
            &cfg.f64_list("grid.gb.shrinkage")?,
            &cfg.usize_list("grid.gb.max_depth")?,
            &cfg.usize_list("grid.gb.stages")?,
        ),
        other => return Err(CliError::BadArgs(format!("config `grid.model`: `{other}` is not svm or gb"))),
    };
    for cell in &grid {
        match cell {
            GridCell::Svm(p) => bad_args(p.smo().validate())?,
            GridCell::Gb(p) => bad_args(p.validate())?,
        }
    }
    let input = shallow_input(cfg, None)?;
    let result = grid_search_cv(&input.rows, &input.features.labels, &grid, cfg.usize("grid.folds")?, seed)?;
    let mut csv = String::from("cell,");
    csv.push_str(&(1..=result.folds).map(|f| format!("fold{f}")).collect::<Vec<_>>().join(","));
    csv.push_str(",mean_accuracy\n");
    for s in &result.cells {
        let folds: Vec<String> = s.fold_accuracy.iter().map(f64::to_string).collect();
        let _ = writeln!(csv, "{},{},{}", s.cell.describe(), folds.join(","), s.mean_accuracy);
    }
    ctx.run.write("grid.csv", csv)?;
    let best = result.best_cell();
    let pipe = best.fit(&input.rows, &input.features.labels)?;
    shallow_container(&pipe, &input)?.save(ctx.run.file("model.bin"))?;
    ctx.run.write(
        "summary.txt",
        kv(&[
            ("best", best.describe()),
            ("best_mean_accuracy", result.cells[result.best].mean_accuracy.to_string()),
            ("folds", result.folds.to_string()),
        ]),
    )?;
    Ok(())
}

fn ranked(names: &[String], scores: &[f64], k: usize) -> CliResult<Vec<(String, f64)>> {
    Ok(rank_row(scores, k.min(scores.len()))?.into_iter().map(|(c, p)| (names[c].clone(), p)).collect())
}

pub fn predict_cmd(ctx: &Ctx) -> CliResult<()> {
    let path = ctx.cfg.input("model.path")?;
    let top_k = ctx.cfg.usize("predict.top_k")?;
    if top_k == 0 {
        return Err(CliError::BadArgs("config `predict.top_k` must be at least 1".into()));
    }
    let container = Container::load(&path)?;
    match container.kind.as_str() {
        "hcnn" => {
            let model = Hcnn::from_container(&container)?;
            let names = meta_classes(&container)?;
            let imputer = meta_imputer(&container)?;
            let ds = load_main_dataset(ctx.cfg)?;
            // The labels file only supplies image ids here; its classes are ignored.
            let data = to_hcnn_data(&ds.samples, Task::Gender, &imputer)?;
            let probs = predict_proba(&model, &data.pixels, &data.landmarks)?;
            let records = ds
                .samples
                .iter()
                .enumerate()
                .map(|(i, s)| {
                    Ok(PredictionRecord { image_id: s.image_id.clone(), ranked: ranked(&names, probs.row(i), top_k)? })
                })
                .collect::<CliResult<Vec<_>>>()?;
            ctx.run.write("predictions.csv", format_predictions(&records))?;
        }
        "svm" | "gb" => {
            let pipe = ShallowPipeline::from_container(&container)?;
            if let ShallowModel::Svm(m) = &pipe.model {
                if m.machines.iter().any(|mc| mc.sigmoid.is_none()) {
                    return Err(CliError::BadArgs(format!(
                        "{}: SVM was trained without `svm.probability`; predictions need class probabilities",
                        path.display()
                    )));
                }
            }
            let names = meta_classes(&container)?;
            let uses_landmarks: bool = container.parse_config("meta.landmark_features")?;
            let imputer = if uses_landmarks { Some(meta_imputer(&container)?) } else { None };
            if uses_landmarks != ctx.cfg.bool("shallow.landmark_features")? {
                warn!("model was trained with landmark features = {uses_landmarks}; following the model");
            }
            let features = load_features(ctx.cfg)?;
            let rows = match &imputer {
                Some(imp) => {
                    let table = load_table(ctx.cfg)?
                        .ok_or_else(|| CliError::BadArgs("this model needs `data.landmarks`".into()))?;
                    with_landmarks(&features.rows, &landmark_sets(&table, &features.ids), imp)
                }
                None => features.rows.clone(),
            };
            let mut records = Vec::with_capacity(rows.len());
            for (id, r) in features.ids.iter().zip(&rows) {
                records.push(PredictionRecord {
                    image_id: id.clone(),
                    ranked: ranked(&names, &pipe.scores_row(r)?, top_k)?,
                });
            }
            ctx.run.write("predictions.csv", format_predictions(&records))?;
        }
        "landmark_net" => {
            let net = LandmarkNet::from_container(&container)?;
            let ds = load_main_dataset(ctx.cfg)?;
            let data = to_landmark_data(&ds.samples)?;
            let pred = net.predict_scaled(&data.pixels)?;
            let mut table = LandmarkTable::new();
            for (i, s) in ds.samples.iter().enumerate() {
                let vals: Vec<Option<f64>> = pred.row(i).iter().map(|&v| Some(unscale_coord(v))).collect();
                table.insert(s.image_id.clone(), LandmarkSet::from_features(&vals)?)?;
            }
            table.save(ctx.run.file("landmarks.csv"))?;
        }
        other => return Err(CliError::Validation(format!("{}: unknown model kind `{other}`", path.display()))),
    }
    Ok(())
}

pub fn eval_recognition_cmd(ctx: &Ctx) -> CliResult<()> {
    let pred_path = ctx.cfg.input("data.predictions")?;
    let preds = parse_predictions(&fs::read_to_string(&pred_path)?, &pred_path)?;
    let truth: HashMap<String, String> = if let Some(labels) = ctx.cfg.opt_input("data.labels")? {
        let task = ctx.cfg.task()?;
        load_labels(labels)?
            .into_iter()
            .map(|r| {
                let label = match task {
                    Task::Character => r.class,
                    Task::Gender => r.gender.to_string(),
                };
                (r.image_id, label)
            })
            .collect()
    } else if ctx.cfg.is_set("data.features") {
        let f = load_features(ctx.cfg)?;
        f.ids.iter().cloned().zip(f.labels.iter().map(|&l| f.vocabulary[l].clone())).collect()
    } else {
        return Err(CliError::BadArgs(
            "eval-recognition needs `data.labels` or `data.features` for ground truth".into(),
        ));
    };
    let report = evaluate_recognition(&preds, &truth)?;
    ctx.run.write("metrics.txt", report.to_kv())?;
    ctx.run.write("report.txt", report.to_text())?;
    print!("{}", report.to_text());
    Ok(())
}

pub fn eval_detection_cmd(ctx: &Ctx) -> CliResult<()> {
    let truth = load_boxes(ctx.cfg.input("data.boxes_truth")?)?;
    let detected = load_boxes(ctx.cfg.input("data.boxes_detected")?)?;
    let threshold = ctx.cfg.f64("eval.iou_threshold")?;
    if !(0.0..=1.0).contains(&threshold) {
        return Err(CliError::BadArgs(format!("config `eval.iou_threshold`: {threshold} outside [0, 1]")));
    }
    let r = detection_rates(&truth, &detected, threshold)?;
    let text = kv(&[
        ("images", r.images.to_string()),
        ("iou_threshold", threshold.to_string()),
        ("tpr", r.tpr.to_string()),
        ("fpr", r.fpr.to_string()),
        ("fnr", r.fnr.to_string()),
    ]);
    ctx.run.write("rates.txt", &text)?;
    print!("{text}");
    Ok(())
}

pub fn ablate_hcnn_cmd(ctx: &Ctx) -> CliResult<()> {
    let seed = require_seed(ctx.cfg)?;
    let task = ctx.cfg.task()?;
    let tc = ctx.cfg.train(seed)?;
    let ds = load_main_dataset(ctx.cfg)?;
    let classes = class_names(&ds, task);
    let base = ctx.cfg.hcnn(classes.len())?;
    let parts = partitions(ctx.cfg, ds, task, seed)?;
    let val_set = parts.val.ok_or_else(|| {
        CliError::BadArgs("ablate-hcnn needs a validation set (`data.split` or `data.val_dataset`)".into())
    })?;
    let imputer = LandmarkImputer::fit(&parts.train.samples);
    let train = to_hcnn_data(&parts.train.samples, task, &imputer)?;
    let val = to_hcnn_data(&val_set.samples, task, &imputer)?;
    let eval_set = match &parts.test {
        Some(t) => to_hcnn_data(&t.samples, task, &imputer)?,
        None => val.clone(),
    };
    let k = 5.min(classes.len());
    let mut csv = String::from("variant,skip_connection,batch_norm,convergence_epoch,epochs,top5_error,val_accuracy\n");
    for (name, on) in [("with", true), ("without", false)] {
        let hc = toonface::models::HcnnConfig { skip_connection: on, batch_norm: on, ..base.clone() };
        let mut model = Hcnn::build(hc, seed)?;
        info!("training variant `{name}`");
        let run = train_hcnn(&mut model, &train, Some(&val), &tc)?;
        let probs = predict_proba(&model, &eval_set.pixels, &eval_set.landmarks)?;
        let rankings: Vec<Vec<usize>> = (0..eval_set.len())
            .map(|i| Ok(rank_row(probs.row(i), k)?.into_iter().map(|(c, _)| c).collect()))
            .collect::<CliResult<_>>()?;
        let top5 = topk_error(&rankings, &eval_set.labels, k)?;
        let acc = evaluate_hcnn(&model, &val)?.accuracy;
        let _ = writeln!(csv, "{name},{on},{on},{},{},{top5},{acc}", run.convergence_epoch, run.epochs.len());
    }
    ctx.run.write("ablation.csv", &csv)?;
    print!("{csv}");
    Ok(())
}
