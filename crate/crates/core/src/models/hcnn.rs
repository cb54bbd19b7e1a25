//! Hybrid pixel + landmark CNN with a main and an auxiliary softmax head.
//!
//! Topology (each conv stack is conv → [BN] → leaky ReLU → 2x2 max pool):
//!
//! ```text
//! pixels ─ stack1..stack4 ─ flatten ─┬─ FC1 ─ FC2 ─┬─ aux dense ─ softmax
//!                                    │              │
//!                    (shortcut) ─────┴──────────────┴─ concat(FC2, flat, landmarks)
//! landmarks ─────────────────────────────────────────┘   ─ main1 ─ main2 ─ dropout ─ out ─ softmax
//! ```

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::container::Container;
use crate::models::NUM_LANDMARK_FEATURES;
use crate::nn::init::{glorot_uniform, uniform, DEFAULT_CONV_INIT_LIMIT};
use crate::nn::norm::{DEFAULT_EPS, DEFAULT_MOMENTUM};
use crate::nn::{BatchNormState, Graph, NodeId, ParamId, ParamStore, Tensor};

pub const DEFAULT_AUX_DISCOUNT: f64 = 0.60;

#[derive(Clone, Debug, PartialEq)]
pub struct HcnnConfig {
    pub num_classes: usize,
    /// Side of the square grayscale input.
    pub input_size: usize,
    pub conv_filter_shapes: [(usize, usize); 4],
    pub conv_filters: [usize; 4],
    pub pool: (usize, usize),
    /// Widths of the two feed-forward layers between the conv stack and the aux head.
    pub fc_widths: [usize; 2],
    /// Hidden widths of the main branch; its output layer has `num_classes` units.
    pub main_widths: [usize; 2],
    pub landmark_features: usize,
    pub dropout: f64,
    pub leaky_slope: f64,
    pub aux_discount: f64,
    pub skip_connection: bool,
    pub batch_norm: bool,
    /// Batch norm on the linear-activation dense layers (never on the softmax
    /// layers). Off by default: BN sits between a layer and its non-linearity.
    pub dense_batch_norm: bool,
    pub conv_init_limit: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl HcnnConfig {
    pub fn new(num_classes: usize) -> Self {
        HcnnConfig {
            num_classes,
            input_size: 96,
            conv_filter_shapes: [(4, 4), (3, 3), (2, 2), (1, 1)],
            conv_filters: [32, 64, 128, 256],
            pool: (2, 2),
            fc_widths: [512, 256],
            main_widths: [512, 128],
            landmark_features: NUM_LANDMARK_FEATURES,
            dropout: 0.5,
            leaky_slope: 0.01,
            aux_discount: DEFAULT_AUX_DISCOUNT,
            skip_connection: true,
            batch_norm: true,
            dense_batch_norm: false,
            conv_init_limit: DEFAULT_CONV_INIT_LIMIT,
            bn_eps: DEFAULT_EPS,
            bn_momentum: DEFAULT_MOMENTUM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::invalid(format!("HCNN needs at least 2 classes, got {}", self.num_classes)));
        }
        if self.conv_filter_shapes[0] != (4, 4) || self.conv_filter_shapes[3] != (1, 1) {
            return Err(Error::invalid("conv filter shapes must descend from (4,4) to (1,1)"));
        }
        let positive = self.conv_filter_shapes.iter().all(|&(a, b)| a > 0 && b > 0)
            && self.conv_filters.iter().all(|&f| f > 0)
            && self.fc_widths.iter().chain(&self.main_widths).all(|&w| w > 0)
            && self.pool.0 > 0
            && self.pool.1 > 0;
        if !positive {
            return Err(Error::invalid("filter shapes, filter counts, pool shape and widths must be positive"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::invalid(format!("dropout rate {} outside [0, 1)", self.dropout)));
        }
        if !(self.leaky_slope > 0.0 && self.leaky_slope < 1.0) {
            return Err(Error::invalid(format!("leaky slope {} outside (0, 1)", self.leaky_slope)));
        }
        if !(self.aux_discount >= 0.0 && self.aux_discount.is_finite()) {
            return Err(Error::invalid("aux discount must be finite and non-negative"));
        }
        self.try_spatial_trace().map(|_| ())
    }

    fn try_spatial_trace(&self) -> Result<Vec<usize>> {
        let mut side = self.input_size;
        let mut trace = vec![side];
        for (i, &(kh, kw)) in self.conv_filter_shapes.iter().enumerate() {
            if kh != kw {
                return Err(Error::invalid("only square filters are supported by the trace"));
            }
            if side < kh {
                return Err(Error::invalid(format!(
                    "input {} too small: stack {} sees {side}px",
                    self.input_size,
                    i + 1
                )));
            }
            side = side - kh + 1;
            trace.push(side);
            if side < self.pool.0 {
                return Err(Error::invalid(format!(
                    "input {} too small to pool after conv {}",
                    self.input_size,
                    i + 1
                )));
            }
            side /= self.pool.0;
            trace.push(side);
        }
        Ok(trace)
    }

    /// Side length after the input and after each conv and pool, e.g.
    /// `[96, 93, 46, 44, 22, 21, 10, 10, 5]` for the default config.
    pub fn spatial_trace(&self) -> Vec<usize> {
        self.try_spatial_trace().expect("validated config")
    }

    /// Length of the flattened conv-stack output.
    pub fn flattened_len(&self) -> usize {
        let side = *self.spatial_trace().last().unwrap();
        side * side * self.conv_filters[3]
    }

    pub fn main_input_width(&self) -> usize {
        self.fc_widths[1] + if self.skip_connection { self.flattened_len() } else { 0 } + self.landmark_features
    }

    pub(crate) fn to_pairs(&self) -> Vec<(String, String)> {
        let shapes = self.conv_filter_shapes.iter().map(|(a, b)| format!("{a}x{b}")).collect::<Vec<_>>().join(",");
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        vec![
            ("num_classes".into(), self.num_classes.to_string()),
            ("input_size".into(), self.input_size.to_string()),
            ("conv_filter_shapes".into(), shapes),
            ("conv_filters".into(), join(&self.conv_filters)),
            ("pool".into(), format!("{}x{}", self.pool.0, self.pool.1)),
            ("fc_widths".into(), join(&self.fc_widths)),
            ("main_widths".into(), join(&self.main_widths)),
            ("landmark_features".into(), self.landmark_features.to_string()),
            ("dropout".into(), float_repr(self.dropout)),
            ("leaky_slope".into(), float_repr(self.leaky_slope)),
            ("aux_discount".into(), float_repr(self.aux_discount)),
            ("skip_connection".into(), self.skip_connection.to_string()),
            ("batch_norm".into(), self.batch_norm.to_string()),
            ("dense_batch_norm".into(), self.dense_batch_norm.to_string()),
            ("conv_init_limit".into(), float_repr(self.conv_init_limit)),
            ("bn_eps".into(), float_repr(self.bn_eps)),
            ("bn_momentum".into(), float_repr(self.bn_momentum)),
        ]
    }

    pub(crate) fn from_container(c: &Container) -> Result<Self> {
        let mut cfg = HcnnConfig::new(c.parse_config("num_classes")?);
        cfg.input_size = c.parse_config("input_size")?;
        cfg.conv_filter_shapes = to_array(parse_pairs(c.config_value("conv_filter_shapes")?)?)?;
        cfg.conv_filters = to_array(parse_list(c.config_value("conv_filters")?)?)?;
        cfg.pool =
            parse_pairs(c.config_value("pool")?)?.first().copied().ok_or_else(|| Error::Format("pool".into()))?;
        cfg.fc_widths = to_array(parse_list(c.config_value("fc_widths")?)?)?;
        cfg.main_widths = to_array(parse_list(c.config_value("main_widths")?)?)?;
        cfg.landmark_features = c.parse_config("landmark_features")?;
        cfg.dropout = c.parse_config("dropout")?;
        cfg.leaky_slope = c.parse_config("leaky_slope")?;
        cfg.aux_discount = c.parse_config("aux_discount")?;
        cfg.skip_connection = c.parse_config("skip_connection")?;
        cfg.batch_norm = c.parse_config("batch_norm")?;
        cfg.dense_batch_norm = c.parse_config("dense_batch_norm")?;
        cfg.conv_init_limit = c.parse_config("conv_init_limit")?;
        cfg.bn_eps = c.parse_config("bn_eps")?;
        cfg.bn_momentum = c.parse_config("bn_momentum")?;
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Shortest decimal that round-trips to the same `f64`.
pub(crate) fn float_repr(v: f64) -> String {
    format!("{v:?}")
}

pub(crate) fn parse_list(s: &str) -> Result<Vec<usize>> {
    s.split(',').map(|t| t.trim().parse().map_err(|_| Error::Format(format!("bad integer list `{s}`")))).collect()
}

pub(crate) fn parse_pairs(s: &str) -> Result<Vec<(usize, usize)>> {
    s.split(',')
        .map(|t| {
            let (a, b) = t.trim().split_once('x').ok_or_else(|| Error::Format(format!("bad shape `{t}`")))?;
            let a = a.parse().map_err(|_| Error::Format(format!("bad shape `{t}`")))?;
            let b = b.parse().map_err(|_| Error::Format(format!("bad shape `{t}`")))?;
            Ok((a, b))
        })
        .collect()
}

pub(crate) fn to_array<T: Copy + std::fmt::Debug, const N: usize>(v: Vec<T>) -> Result<[T; N]> {
    v.clone().try_into().map_err(|_| Error::Format(format!("expected {N} entries, got {v:?}")))
}

#[derive(Clone, Debug)]
struct Affine {
    weight: ParamId,
    bias: ParamId,
}

#[derive(Clone, Debug)]
struct Norm {
    gamma: ParamId,
    beta: ParamId,
    state: usize,
}

#[derive(Clone, Debug)]
struct Layout {
    convs: Vec<Affine>,
    conv_norms: Vec<Option<Norm>>,
    fcs: Vec<Affine>,
    fc_norms: Vec<Option<Norm>>,
    aux: Affine,
    mains: Vec<Affine>,
    main_norms: Vec<Option<Norm>>,
    main_out: Affine,
}

/// Node handles produced by one forward pass.
#[derive(Clone, Debug)]
pub struct HcnnForward {
    pub main_logits: NodeId,
    pub aux_logits: NodeId,
    /// Flattened conv-stack output (the shortcut source).
    pub flattened: NodeId,
    /// Observed side length after the input and after each conv and pool.
    pub trace: Vec<usize>,
    pub main_input_width: usize,
}

/// The hybrid CNN: configuration, parameters and batch-norm running statistics.
#[derive(Clone, Debug)]
pub struct Hcnn {
    config: HcnnConfig,
    params: ParamStore,
    norms: Vec<(String, BatchNormState)>,
    layout: Layout,
}

impl Hcnn {
    /// Builds the network. Dense weights are Glorot-uniform, conv weights
    /// uniform on `±conv_init_limit`, biases and BN shifts zero, BN scales one.
    pub fn build(config: HcnnConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut norms = Vec::new();

        let add_norm = |params: &mut ParamStore,
                        norms: &mut Vec<(String, BatchNormState)>,
                        name: &str,
                        ch: usize|
         -> Result<Norm> {
            let gamma = params.add(format!("{name}.gamma"), Tensor::filled(&[ch], 1.0))?;
            let beta = params.add(format!("{name}.beta"), Tensor::zeros(&[ch]))?;
            let mut state = BatchNormState::new(ch);
            state.eps = config.bn_eps;
            state.momentum = config.bn_momentum;
            norms.push((name.to_string(), state));
            Ok(Norm { gamma, beta, state: norms.len() - 1 })
        };

        let mut convs = Vec::new();
        let mut conv_norms = Vec::new();
        let mut in_ch = 1;
        for (i, (&(kh, kw), &f)) in config.conv_filter_shapes.iter().zip(&config.conv_filters).enumerate() {
            let name = format!("conv{}", i + 1);
            let w = uniform(&[f, in_ch, kh, kw], config.conv_init_limit, &mut rng);
            let weight = params.add(format!("{name}.weight"), w)?;
            let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[f]))?;
            convs.push(Affine { weight, bias });
            conv_norms.push(if config.batch_norm {
                Some(add_norm(&mut params, &mut norms, &format!("{name}.bn"), f)?)
            } else {
                None
            });
            in_ch = f;
        }

        let dense = |params: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d: usize, k: usize| -> Result<Affine> {
            let weight = params.add(format!("{name}.weight"), glorot_uniform(&[d, k], d, k, rng))?;
            let bias = params.add(format!("{name}.bias"), Tensor::zeros(&[k]))?;
            Ok(Affine { weight, bias })
        };
        let dense_norm = config.batch_norm && config.dense_batch_norm;

        let mut fcs = Vec::new();
        let mut fc_norms = Vec::new();
        let mut width = config.flattened_len();
        for (i, &k) in config.fc_widths.iter().enumerate() {
            let name = format!("fc{}", i + 1);
            fcs.push(dense(&mut params, &mut rng, &name, width, k)?);
            fc_norms.push(if dense_norm {
                Some(add_norm(&mut params, &mut norms, &format!("{name}.bn"), k)?)
            } else {
                None
            });
            width = k;
        }
        let aux = dense(&mut params, &mut rng, "aux", width, config.num_classes)?;

        let mut mains = Vec::new();
        let mut main_norms = Vec::new();
        let mut width = config.main_input_width();
        for (i, &k) in config.main_widths.iter().enumerate() {
            let name = format!("main{}", i + 1);
            mains.push(dense(&mut params, &mut rng, &name, width, k)?);
            main_norms.push(if dense_norm {
                Some(add_norm(&mut params, &mut norms, &format!("{name}.bn"), k)?)
            } else {
                None
            });
            width = k;
        }
        let main_out = dense(&mut params, &mut rng, "main_out", width, config.num_classes)?;

        let layout = Layout { convs, conv_norms, fcs, fc_norms, aux, mains, main_norms, main_out };
        Ok(Hcnn { config, params, norms, layout })
    }

    pub fn config(&self) -> &HcnnConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    pub fn batch_norms(&self) -> &[(String, BatchNormState)] {
        &self.norms
    }

    /// Parameters updated only through the auxiliary head.
    pub fn aux_param_ids(&self) -> Vec<ParamId> {
        vec![self.layout.aux.weight, self.layout.aux.bias]
    }

    /// Trunk and main-branch parameters.
    pub fn main_param_ids(&self) -> Vec<ParamId> {
        let aux = self.aux_param_ids();
        self.params.ids().filter(|id| !aux.contains(id)).collect()
    }

    /// Records a forward pass. `pixels` is `[N, 1, S, S]`, `landmarks` `[N, 30]`.
    /// Train-mode passes update batch-norm running statistics.
    pub fn forward(&mut self, g: &mut Graph, pixels: NodeId, landmarks: NodeId) -> Result<HcnnForward> {
        let Hcnn { config, params, norms, layout } = self;
        let mut states: Vec<&mut BatchNormState> = norms.iter_mut().map(|(_, s)| s).collect();
        forward_impl(config, params, layout, &mut states, g, pixels, landmarks)
    }

    /// Replaces every batch-norm running statistic with its average over
    /// train-mode passes across `pixels`/`landmarks` in chunks of `chunk`
    /// rows, using the current weights. Each chunk is weighted by its size.
    pub fn recalibrate_batch_norm(&mut self, pixels: &Tensor, landmarks: &Tensor, chunk: usize) -> Result<()> {
        let n = pixels.batch();
        if n < 2 || chunk < 2 {
            return Err(Error::invalid("batch-norm recalibration needs chunks of at least two rows"));
        }
        if self.norms.is_empty() {
            return Ok(());
        }
        let momenta: Vec<f64> = self.norms.iter().map(|(_, s)| s.momentum).collect();
        let mut chunks: Vec<Vec<usize>> = (0..n).collect::<Vec<_>>().chunks(chunk).map(<[usize]>::to_vec).collect();
        if chunks.len() > 1 && chunks.last().is_some_and(|c| c.len() == 1) {
            let tail = chunks.pop().unwrap();
            chunks.last_mut().unwrap().extend(tail);
        }
        let result = self.average_batch_statistics(pixels, landmarks, &chunks);
        for ((_, s), m) in self.norms.iter_mut().zip(momenta) {
            s.momentum = m;
        }
        result
    }

    fn average_batch_statistics(&mut self, pixels: &Tensor, landmarks: &Tensor, chunks: &[Vec<usize>]) -> Result<()> {
        let mut seen = 0usize;
        for idx in chunks {
            seen += idx.len();
            let keep = 1.0 - idx.len() as f64 / seen as f64;
            self.norms.iter_mut().for_each(|(_, s)| s.momentum = keep);
            let mut g = Graph::new(crate::nn::Mode::Train, 0);
            let px = g.input(pixels.select_rows(idx))?;
            let lm = g.input(landmarks.select_rows(idx))?;
            self.forward(&mut g, px, lm)?;
        }
        Ok(())
    }

    /// Infer-mode forward that leaves the model untouched.
    pub fn forward_infer(&self, g: &mut Graph, pixels: NodeId, landmarks: NodeId) -> Result<HcnnForward> {
        if g.mode() != crate::nn::Mode::Infer {
            return Err(Error::invalid("forward_infer requires an infer-mode graph"));
        }
        let mut scratch: Vec<BatchNormState> = self.norms.iter().map(|(_, s)| s.clone()).collect();
        let mut states: Vec<&mut BatchNormState> = scratch.iter_mut().collect();
        forward_impl(&self.config, &self.params, &self.layout, &mut states, g, pixels, landmarks)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new("hcnn");
        c.config = self.config.to_pairs();
        for (_, p) in self.params.iter() {
            c.tensors.push((p.name().to_string(), p.value().clone()));
        }
        for (name, st) in &self.norms {
            let ch = st.channels();
            c.tensors.push((format!("{name}.running_mean"), Tensor::new(&[ch], st.running_mean.clone()).unwrap()));
            c.tensors.push((format!("{name}.running_var"), Tensor::new(&[ch], st.running_var.clone()).unwrap()));
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("hcnn")?;
        let config = HcnnConfig::from_container(c)?;
        let mut model = Hcnn::build(config, 0)?;
        let mut seen = 0;
        let ids: Vec<ParamId> = model.params.ids().collect();
        for id in ids {
            let name = model.params.get(id).name().to_string();
            let t = c.tensor(&name)?;
            if t.shape() != model.params.value(id).shape() {
                return Err(Error::Format(format!("`{name}` has shape {:?}", t.shape())));
            }
            *model.params.get_mut(id).value_mut() = t.clone();
            seen += 1;
        }
        for (name, st) in &mut model.norms {
            st.running_mean = c.tensor(&format!("{name}.running_mean"))?.data().to_vec();
            st.running_var = c.tensor(&format!("{name}.running_var"))?.data().to_vec();
            seen += 2;
        }
        if seen != c.tensors.len() {
            return Err(Error::Format(format!("model file has {} tensors, expected {seen}", c.tensors.len())));
        }
        Ok(model)
    }
}

fn normed(
    g: &mut Graph,
    params: &ParamStore,
    x: NodeId,
    norm: &Option<Norm>,
    states: &mut [&mut BatchNormState],
) -> Result<NodeId> {
    match norm {
        Some(n) => g.batch_norm(params, x, n.gamma, n.beta, states[n.state]),
        None => Ok(x),
    }
}

fn forward_impl(
    config: &HcnnConfig,
    params: &ParamStore,
    layout: &Layout,
    states: &mut [&mut BatchNormState],
    g: &mut Graph,
    pixels: NodeId,
    landmarks: NodeId,
) -> Result<HcnnForward> {
    let shape = g.value(pixels).shape().to_vec();
    if shape.len() != 4 || shape[1] != 1 || shape[2] != config.input_size || shape[3] != config.input_size {
        return Err(Error::shape("hcnn", format!("pixels must be [N, 1, {0}, {0}], got {shape:?}", config.input_size)));
    }
    let lm_shape = g.value(landmarks).shape().to_vec();
    if lm_shape != [shape[0], config.landmark_features] {
        return Err(Error::shape(
            "hcnn",
            format!("landmarks must be [{}, {}], got {lm_shape:?}", shape[0], config.landmark_features),
        ));
    }

    let mut trace = vec![shape[2]];
    let mut x = pixels;
    for (conv, norm) in layout.convs.iter().zip(&layout.conv_norms) {
        x = g.conv2d(params, x, conv.weight, conv.bias)?;
        trace.push(g.value(x).shape()[2]);
        x = normed(g, params, x, norm, states)?;
        x = g.leaky_relu(x, config.leaky_slope)?;
        x = g.maxpool2d(x, config.pool)?;
        trace.push(g.value(x).shape()[2]);
    }
    let flattened = g.flatten(x)?;

    let mut h = flattened;
    for (fc, norm) in layout.fcs.iter().zip(&layout.fc_norms) {
        h = g.dense(params, h, fc.weight, fc.bias)?;
        h = normed(g, params, h, norm, states)?;
    }
    let aux_logits = g.dense(params, h, layout.aux.weight, layout.aux.bias)?;

    let parts: Vec<NodeId> = if config.skip_connection { vec![h, flattened, landmarks] } else { vec![h, landmarks] };
    let mut m = g.concat(&parts)?;
    let main_input_width = g.value(m).shape()[1];
    for (dense, norm) in layout.mains.iter().zip(&layout.main_norms) {
        m = g.dense(params, m, dense.weight, dense.bias)?;
        m = normed(g, params, m, norm, states)?;
    }
    m = g.dropout(m, config.dropout)?;
    let main_logits = g.dense(params, m, layout.main_out.weight, layout.main_out.bias)?;

    Ok(HcnnForward { main_logits, aux_logits, flattened, trace, main_input_width })
}

/// Combined training objective: `main + 0.60 * aux`.
pub fn hcnn_loss(main_loss: f64, aux_loss: f64) -> f64 {
    hcnn_loss_with(main_loss, aux_loss, DEFAULT_AUX_DISCOUNT)
}

pub fn hcnn_loss_with(main_loss: f64, aux_loss: f64, discount: f64) -> f64 {
    main_loss + discount * aux_loss
}
