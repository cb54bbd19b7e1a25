//! Training loops for the HCNN and the landmark regressor.

use log::{debug, info};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::hcnn::Hcnn;
use crate::models::landmark_net::LandmarkNet;
use crate::models::{COORD_SCALE, NUM_LANDMARK_FEATURES};
use crate::nn::{
    one_hot, Adam, AdamConfig, Graph, Mode, Optimizer, PlateauConfig, PlateauSchedule, SgdConfig, SgdNesterov, Tensor,
};

/// Pixel + landmark inputs with class labels.
#[derive(Clone, Debug)]
pub struct HcnnData {
    /// `[N, 1, S, S]`
    pub pixels: Tensor,
    /// `[N, 30]`, already scaled to roughly `[-1, 1]`.
    pub landmarks: Tensor,
    pub labels: Vec<usize>,
}

impl HcnnData {
    pub fn new(pixels: Tensor, landmarks: Tensor, labels: Vec<usize>) -> Result<Self> {
        if pixels.rank() != 4 || pixels.shape()[1] != 1 {
            return Err(Error::shape("hcnn data", format!("pixels must be [N, 1, S, S], got {:?}", pixels.shape())));
        }
        if landmarks.shape() != [pixels.batch(), NUM_LANDMARK_FEATURES] || labels.len() != pixels.batch() {
            return Err(Error::shape("hcnn data", "pixels, landmarks and labels disagree on N"));
        }
        Ok(HcnnData { pixels, landmarks, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> HcnnData {
        HcnnData {
            pixels: self.pixels.select_rows(indices),
            landmarks: self.landmarks.select_rows(indices),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub adam: AdamConfig,
    pub sgd: SgdConfig,
    pub plateau: PlateauConfig,
    /// Improvement threshold used for the convergence epoch and early stopping.
    pub min_delta: f64,
    /// Stop once the monitored loss has not improved for this many epochs.
    pub early_stop_patience: Option<usize>,
    /// Stop as soon as infer-mode training accuracy reaches this value.
    pub stop_at_train_accuracy: Option<f64>,
    /// Recompute batch-norm running statistics over the training set with the
    /// epoch's final weights before evaluating.
    pub recalibrate_batch_norm: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 0,
            batch_size: 32,
            max_epochs: 1000,
            adam: AdamConfig::default(),
            sgd: SgdConfig::default(),
            plateau: PlateauConfig::default(),
            min_delta: 1e-4,
            early_stop_patience: None,
            stop_at_train_accuracy: None,
            recalibrate_batch_norm: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::invalid("batch size must be at least 2"));
        }
        if self.max_epochs == 0 {
            return Err(Error::invalid("max epochs must be at least 1"));
        }
        Ok(())
    }
}

/// Losses of one optimizer step as logged during training.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepRecord {
    pub main_loss: f64,
    pub aux_loss: f64,
    pub total_loss: f64,
    pub discount: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalStats {
    pub main_loss: f64,
    pub aux_loss: f64,
    pub total_loss: f64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train: EvalStats,
    pub validation: Option<EvalStats>,
    pub aux_lr: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainRun {
    pub seed: u64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub epochs: Vec<EpochRecord>,
    pub steps: Vec<StepRecord>,
    /// 1-based epoch after which the monitored loss never again improved by
    /// more than `min_delta`.
    pub convergence_epoch: usize,
}

impl TrainRun {
    /// First 1-based epoch whose training accuracy reached `target`.
    pub fn epoch_reaching_train_accuracy(&self, target: f64) -> Option<usize> {
        self.epochs.iter().find(|e| e.train.accuracy >= target).map(|e| e.epoch)
    }

    pub fn monitored_losses(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.validation.unwrap_or(e.train).total_loss).collect()
    }
}

/// Index of the last significant improvement, 1-based.
pub fn convergence_epoch(losses: &[f64], min_delta: f64) -> usize {
    let mut best = f64::INFINITY;
    let mut epoch = 0;
    for (i, &l) in losses.iter().enumerate() {
        if l < best - min_delta {
            best = l;
            epoch = i + 1;
        }
    }
    epoch.max(1).min(losses.len().max(1))
}

/// Shuffled batches; a trailing batch of one sample is folded into the
/// previous batch so batch norm always sees at least two samples.
pub(crate) fn epoch_batches(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut batches: Vec<Vec<usize>> = order.chunks(batch_size).map(<[usize]>::to_vec).collect();
    if batches.len() > 1 && batches.last().is_some_and(|b| b.len() == 1) {
        let tail = batches.pop().unwrap();
        batches.last_mut().unwrap().extend(tail);
    }
    batches
}

fn step_seed(seed: u64, epoch: usize, batch: usize) -> u64 {
    seed.wrapping_mul(0x2545_F491_4F6C_DD1D) ^ ((epoch as u64) << 32) ^ batch as u64
}

/// Infer-mode losses and accuracy over `data`.
pub fn evaluate_hcnn(model: &Hcnn, data: &HcnnData) -> Result<EvalStats> {
    if data.is_empty() {
        return Err(Error::Empty("evaluation set".into()));
    }
    let k = model.config().num_classes;
    let (mut main, mut aux, mut correct) = (0.0, 0.0, 0usize);
    for start in (0..data.len()).step_by(64) {
        let idx: Vec<usize> = (start..(start + 64).min(data.len())).collect();
        let chunk = data.subset(&idx);
        let mut g = Graph::new(Mode::Infer, 0);
        let px = g.input(chunk.pixels)?;
        let lm = g.input(chunk.landmarks)?;
        let out = model.forward_infer(&mut g, px, lm)?;
        let targets = one_hot(&chunk.labels, k)?;
        let ml = g.softmax_cross_entropy(out.main_logits, targets.clone())?;
        let al = g.softmax_cross_entropy(out.aux_logits, targets)?;
        main += g.scalar(ml) * idx.len() as f64;
        aux += g.scalar(al) * idx.len() as f64;
        let logits = g.value(out.main_logits);
        for (row, &label) in chunk.labels.iter().enumerate() {
            if argmax(logits.row(row)) == label {
                correct += 1;
            }
        }
    }
    let n = data.len() as f64;
    let discount = model.config().aux_discount;
    Ok(EvalStats {
        main_loss: main / n,
        aux_loss: aux / n,
        total_loss: (main + discount * aux) / n,
        accuracy: correct as f64 / n,
    })
}

fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best
}

/// Trains on `main + discount * aux`. Gradients of the combined loss reach
/// every parameter; the auxiliary head's own weights are stepped by Nesterov
/// SGD (with the plateau schedule on the auxiliary loss), everything else by Adam.
pub fn train_hcnn(model: &mut Hcnn, train: &HcnnData, val: Option<&HcnnData>, cfg: &TrainConfig) -> Result<TrainRun> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    if train.len() < 2 {
        return Err(Error::invalid("training set needs at least two samples"));
    }
    let k = model.config().num_classes;
    if let Some(&bad) = train.labels.iter().find(|&&l| l >= k) {
        return Err(Error::invalid(format!("label {bad} out of range for {k} classes")));
    }
    let discount = model.config().aux_discount;
    let mut adam = Adam::new(cfg.adam, model.main_param_ids(), model.params());
    let mut sgd = SgdNesterov::new(cfg.sgd, model.aux_param_ids(), model.params());
    let mut schedule = PlateauSchedule::new(cfg.plateau, cfg.sgd.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);

    let mut run = TrainRun {
        seed: cfg.seed,
        batch_size: cfg.batch_size,
        max_epochs: cfg.max_epochs,
        epochs: Vec::new(),
        steps: Vec::new(),
        convergence_epoch: 1,
    };
    let mut best = f64::INFINITY;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        for (b, batch) in epoch_batches(train.len(), cfg.batch_size, &mut rng).iter().enumerate() {
            let chunk = train.subset(batch);
            model.params_mut().zero_grad();
            let mut g = Graph::new(Mode::Train, step_seed(cfg.seed, epoch, b));
            let px = g.input(chunk.pixels)?;
            let lm = g.input(chunk.landmarks)?;
            let out = model.forward(&mut g, px, lm)?;
            let targets = one_hot(&chunk.labels, k)?;
            let main = g.softmax_cross_entropy(out.main_logits, targets.clone())?;
            let aux = g.softmax_cross_entropy(out.aux_logits, targets)?;
            let total = g.weighted_sum(&[(main, 1.0), (aux, discount)])?;
            let record = StepRecord {
                main_loss: g.scalar(main),
                aux_loss: g.scalar(aux),
                total_loss: g.scalar(total),
                discount,
            };
            if !record.total_loss.is_finite() {
                return Err(Error::NonFinite("training loss"));
            }
            g.backward(total, model.params_mut())?;
            adam.step(model.params_mut())?;
            sgd.step(model.params_mut())?;
            run.steps.push(record);
        }

        if cfg.recalibrate_batch_norm {
            model.recalibrate_batch_norm(&train.pixels, &train.landmarks, 64)?;
        }
        let train_stats = evaluate_hcnn(model, train)?;
        let val_stats = val.map(|v| evaluate_hcnn(model, v)).transpose()?;
        let monitored = val_stats.unwrap_or(train_stats);
        sgd.set_learning_rate(schedule.observe(monitored.aux_loss));
        run.epochs.push(EpochRecord { epoch, train: train_stats, validation: val_stats, aux_lr: sgd.learning_rate() });
        debug!(
            "epoch {epoch}: train loss {:.5} acc {:.3}, monitored loss {:.5}",
            train_stats.total_loss, train_stats.accuracy, monitored.total_loss
        );

        if monitored.total_loss < best - cfg.min_delta {
            best = monitored.total_loss;
            since_best = 0;
            run.convergence_epoch = epoch;
        } else {
            since_best += 1;
        }
        if cfg.stop_at_train_accuracy.is_some_and(|t| train_stats.accuracy >= t) {
            info!("reached target training accuracy at epoch {epoch}");
            break;
        }
        if cfg.early_stop_patience.is_some_and(|p| since_best >= p) {
            info!("no improvement for {since_best} epochs; stopping at epoch {epoch}");
            break;
        }
    }
    Ok(run)
}

/// Pixels with scaled landmark targets and a per-coordinate presence mask.
#[derive(Clone, Debug)]
pub struct LandmarkData {
    pub pixels: Tensor,
    /// `[N, 30]` targets scaled by `(c - 48) / 48`; masked entries are ignored.
    pub targets: Tensor,
    /// `[N, 30]`, 1 where the coordinate is present.
    pub mask: Tensor,
}

impl LandmarkData {
    /// Drops rows whose 30 targets are all missing, with a warning.
    pub fn new(pixels: Tensor, targets: Tensor, mask: Tensor) -> Result<Self> {
        if targets.shape() != [pixels.batch(), NUM_LANDMARK_FEATURES] || mask.shape() != targets.shape() {
            return Err(Error::shape("landmark data", "pixels, targets and mask disagree"));
        }
        let keep: Vec<usize> = (0..pixels.batch()).filter(|&i| mask.row(i).iter().any(|&m| m != 0.0)).collect();
        if keep.len() < pixels.batch() {
            log::warn!("excluding {} samples with no annotated landmarks", pixels.batch() - keep.len());
        }
        if keep.is_empty() {
            return Err(Error::Empty("no sample has any annotated landmark".into()));
        }
        Ok(LandmarkData {
            pixels: pixels.select_rows(&keep),
            targets: targets.select_rows(&keep),
            mask: mask.select_rows(&keep),
        })
    }

    pub fn len(&self) -> usize {
        self.pixels.batch()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn subset(&self, idx: &[usize]) -> LandmarkData {
        LandmarkData {
            pixels: self.pixels.select_rows(idx),
            targets: self.targets.select_rows(idx),
            mask: self.mask.select_rows(idx),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkEpoch {
    pub epoch: usize,
    pub train_loss: f64,
    pub validation_rmse_px: Option<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkTrainRun {
    pub epochs: Vec<LandmarkEpoch>,
    pub final_validation_rmse_px: Option<f64>,
}

/// RMSE in pixels over present coordinates of `data`.
pub fn landmark_rmse_px(net: &LandmarkNet, data: &LandmarkData) -> Result<f64> {
    let pred = net.predict_scaled(&data.pixels)?;
    let mse = crate::nn::masked_mse(&pred, &data.targets, &data.mask)?;
    Ok(mse.sqrt() * COORD_SCALE)
}

/// Adam on the mean masked squared error of scaled coordinates.
pub fn train_landmark_net(
    net: &mut LandmarkNet,
    train: &LandmarkData,
    val: Option<&LandmarkData>,
    cfg: &TrainConfig,
) -> Result<LandmarkTrainRun> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training set".into()));
    }
    let mut adam = Adam::new(cfg.adam, net.params().ids().collect(), net.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut epochs = Vec::new();
    for epoch in 1..=cfg.max_epochs {
        let mut total = 0.0;
        let mut seen = 0;
        for (b, batch) in epoch_batches(train.len(), cfg.batch_size, &mut rng).iter().enumerate() {
            let chunk = train.subset(batch);
            if chunk.mask.data().iter().all(|&m| m == 0.0) {
                continue;
            }
            net.params_mut().zero_grad();
            let mut g = Graph::new(Mode::Train, step_seed(cfg.seed, epoch, b));
            let px = g.input(chunk.pixels)?;
            let y = net.forward(&mut g, px)?;
            let loss = g.masked_mse(y, chunk.targets, chunk.mask)?;
            total += g.scalar(loss) * batch.len() as f64;
            seen += batch.len();
            g.backward(loss, net.params_mut())?;
            adam.step(net.params_mut())?;
        }
        let rmse = val.map(|v| landmark_rmse_px(net, v)).transpose()?;
        epochs.push(LandmarkEpoch { epoch, train_loss: total / seen.max(1) as f64, validation_rmse_px: rmse });
    }
    let final_validation_rmse_px = epochs.last().and_then(|e| e.validation_rmse_px);
    Ok(LandmarkTrainRun { epochs, final_validation_rmse_px })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn convergence_epoch_is_last_significant_improvement() {
        assert_eq!(convergence_epoch(&[5.0, 4.0, 3.0, 3.0, 3.00001, 2.99995], 1e-4), 3);
        assert_eq!(convergence_epoch(&[1.0, 1.0, 1.0], 1e-4), 1);
        assert_eq!(convergence_epoch(&[3.0, 2.0, 1.0], 1e-4), 3);
    }

    #[test]
    fn batches_never_leave_a_singleton() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let batches = epoch_batches(33, 32, &mut rng);
        assert_eq!(batches.len(), 1);
        assert_eq!(batches[0].len(), 33);
        let mut all: Vec<usize> = epoch_batches(60, 32, &mut rng).concat();
        all.sort_unstable();
        assert_eq!(all, (0..60).collect::<Vec<_>>());
    }
}
