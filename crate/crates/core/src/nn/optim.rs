use crate::error::{Error, Result};
use crate::nn::{ParamId, ParamStore};

/// Common surface of the per-parameter-group optimizers.
pub trait Optimizer {
    fn step(&mut self, store: &mut ParamStore) -> Result<()>;
    fn learning_rate(&self) -> f64;
    fn set_learning_rate(&mut self, lr: f64);
    fn steps(&self) -> u64;
    fn params(&self) -> &[ParamId];
}

fn check_ready(params: &[ParamId], store: &ParamStore) -> Result<()> {
    if params.is_empty() {
        return Err(Error::Empty("optimizer has no parameters".into()));
    }
    for &id in params {
        let p = store.get(id);
        if !p.grad_populated() {
            return Err(Error::MissingGradients(p.name().to_string()));
        }
    }
    Ok(())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 0.001, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Bias-corrected Adam over a fixed set of parameters.
#[derive(Clone, Debug)]
pub struct Adam {
    config: AdamConfig,
    params: Vec<ParamId>,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, params: Vec<ParamId>, store: &ParamStore) -> Self {
        let zeros = |id: &ParamId| vec![0.0; store.value(*id).len()];
        let m = params.iter().map(zeros).collect();
        let v = params.iter().map(zeros).collect();
        Adam { config, params, m, v, t: 0 }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        check_ready(&self.params, store)?;
        self.t += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.t as i32);
        let c2 = 1.0 - beta2.powi(self.t as i32);
        for (k, &id) in self.params.iter().enumerate() {
            let p = store.get_mut(id);
            let grad = p.grad().data().to_vec();
            let (m, v) = (&mut self.m[k], &mut self.v[k]);
            for (i, w) in p.value_mut().data_mut().iter_mut().enumerate() {
                let g = grad[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * g;
                v[i] = beta2 * v[i] + (1.0 - beta2) * g * g;
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *w -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }

    fn learning_rate(&self) -> f64 {
        self.config.lr
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    fn steps(&self) -> u64 {
        self.t
    }

    fn params(&self) -> &[ParamId] {
        &self.params
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SgdConfig {
    pub lr: f64,
    pub momentum: f64,
    pub weight_decay: f64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig { lr: 0.2, momentum: 0.9, weight_decay: 1e-4 }
    }
}

/// SGD with Nesterov momentum in look-ahead form:
/// `v <- mu v - lr g`, `w <- w + mu v - lr g`, where `g` includes `weight_decay * w`.
#[derive(Clone, Debug)]
pub struct SgdNesterov {
    config: SgdConfig,
    params: Vec<ParamId>,
    velocity: Vec<Vec<f64>>,
    t: u64,
}

impl SgdNesterov {
    pub fn new(config: SgdConfig, params: Vec<ParamId>, store: &ParamStore) -> Self {
        let velocity = params.iter().map(|id| vec![0.0; store.value(*id).len()]).collect();
        SgdNesterov { config, params, velocity, t: 0 }
    }
}

impl Optimizer for SgdNesterov {
    fn step(&mut self, store: &mut ParamStore) -> Result<()> {
        check_ready(&self.params, store)?;
        self.t += 1;
        let SgdConfig { lr, momentum, weight_decay } = self.config;
        for (k, &id) in self.params.iter().enumerate() {
            let p = store.get_mut(id);
            let grad = p.grad().data().to_vec();
            let vel = &mut self.velocity[k];
            for (i, w) in p.value_mut().data_mut().iter_mut().enumerate() {
                let g = grad[i] + weight_decay * *w;
                vel[i] = momentum * vel[i] - lr * g;
                *w += momentum * vel[i] - lr * g;
            }
        }
        Ok(())
    }

    fn learning_rate(&self) -> f64 {
        self.config.lr
    }

    fn set_learning_rate(&mut self, lr: f64) {
        self.config.lr = lr;
    }

    fn steps(&self) -> u64 {
        self.t
    }

    fn params(&self) -> &[ParamId] {
        &self.params
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PlateauConfig {
    pub patience: usize,
    pub min_delta: f64,
    pub factor: f64,
    pub min_lr: f64,
}

impl Default for PlateauConfig {
    fn default() -> Self {
        PlateauConfig { patience: 50, min_delta: 1e-4, factor: 10.0, min_lr: 1e-6 }
    }
}

/// Divides the learning rate by `factor` once the monitored loss has failed
/// to improve on its best value by more than `min_delta` for `patience`
/// consecutive observations. The counter restarts after each reduction.
#[derive(Clone, Debug)]
pub struct PlateauSchedule {
    config: PlateauConfig,
    lr: f64,
    best: f64,
    wait: usize,
}

impl PlateauSchedule {
    pub fn new(config: PlateauConfig, initial_lr: f64) -> Self {
        PlateauSchedule { config, lr: initial_lr, best: f64::INFINITY, wait: 0 }
    }

    pub fn lr(&self) -> f64 {
        self.lr
    }

    pub fn observe(&mut self, loss: f64) -> f64 {
        if loss < self.best - self.config.min_delta {
            self.best = loss;
            self.wait = 0;
        } else {
            self.wait += 1;
            if self.wait >= self.config.patience {
                self.lr = (self.lr / self.config.factor).max(self.config.min_lr);
                self.wait = 0;
            }
        }
        self.lr
    }
}

/// Replays a validation-loss history through a default [`PlateauSchedule`]
/// that started at `initial_lr` and returns the resulting rate.
pub fn plateau_lr_schedule(history: &[f64], initial_lr: f64) -> f64 {
    plateau_lr_schedule_with(history, initial_lr, PlateauConfig::default())
}

pub fn plateau_lr_schedule_with(history: &[f64], initial_lr: f64, config: PlateauConfig) -> f64 {
    let mut schedule = PlateauSchedule::new(config, initial_lr);
    for &loss in history {
        schedule.observe(loss);
    }
    schedule.lr()
}
