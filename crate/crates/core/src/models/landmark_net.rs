//! LeNet-style landmark regressor: three conv/pool stacks, two hidden dense
//! layers, and a linear 30-wide output, with dropout after every stage.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::models::container::Container;
use crate::models::hcnn::{float_repr, parse_list, parse_pairs, to_array};
use crate::models::NUM_LANDMARK_FEATURES;
use crate::nn::init::{glorot_uniform, uniform, DEFAULT_CONV_INIT_LIMIT};
use crate::nn::{Graph, Mode, NodeId, ParamId, ParamStore, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct LandmarkNetConfig {
    pub input_size: usize,
    pub conv_filter_shapes: [(usize, usize); 3],
    pub conv_filters: [usize; 3],
    pub hidden_widths: [usize; 2],
    pub conv_dropout: [f64; 3],
    pub hidden_dropout: [f64; 2],
    pub leaky_slope: f64,
    pub conv_init_limit: f64,
}

impl Default for LandmarkNetConfig {
    fn default() -> Self {
        LandmarkNetConfig {
            input_size: 96,
            conv_filter_shapes: [(3, 3), (2, 2), (2, 2)],
            conv_filters: [32, 64, 128],
            hidden_widths: [500, 500],
            conv_dropout: [0.1, 0.2, 0.3],
            hidden_dropout: [0.5, 0.5],
            leaky_slope: 0.01,
            conv_init_limit: DEFAULT_CONV_INIT_LIMIT,
        }
    }
}

impl LandmarkNetConfig {
    pub fn output_width(&self) -> usize {
        NUM_LANDMARK_FEATURES
    }

    pub fn flattened_len(&self) -> Result<usize> {
        let mut side = self.input_size;
        for &(k, _) in &self.conv_filter_shapes {
            if side < k || side - k + 1 < 2 {
                return Err(Error::invalid(format!("input size {} too small for the conv stack", self.input_size)));
            }
            side = (side - k).div_ceil(2);
        }
        Ok(side * side * self.conv_filters[2])
    }

    pub fn validate(&self) -> Result<()> {
        let rates = self.conv_dropout.iter().chain(&self.hidden_dropout);
        for &r in rates {
            if !(0.0..1.0).contains(&r) {
                return Err(Error::invalid(format!("dropout rate {r} outside [0, 1)")));
            }
        }
        if self.conv_filter_shapes.iter().any(|&(a, b)| a == 0 || a != b) {
            return Err(Error::invalid("landmark filters must be square and positive"));
        }
        if self.conv_filters.iter().chain(&self.hidden_widths).any(|&w| w == 0) {
            return Err(Error::invalid("widths must be positive"));
        }
        self.flattened_len().map(|_| ())
    }

    fn to_pairs(&self) -> Vec<(String, String)> {
        let ints = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let floats = |v: &[f64]| v.iter().map(|&x| float_repr(x)).collect::<Vec<_>>().join(",");
        let shapes = self.conv_filter_shapes.iter().map(|(a, b)| format!("{a}x{b}")).collect::<Vec<_>>().join(",");
        vec![
            ("input_size".into(), self.input_size.to_string()),
            ("conv_filter_shapes".into(), shapes),
            ("conv_filters".into(), ints(&self.conv_filters)),
            ("hidden_widths".into(), ints(&self.hidden_widths)),
            ("conv_dropout".into(), floats(&self.conv_dropout)),
            ("hidden_dropout".into(), floats(&self.hidden_dropout)),
            ("leaky_slope".into(), float_repr(self.leaky_slope)),
            ("conv_init_limit".into(), float_repr(self.conv_init_limit)),
        ]
    }

    fn from_container(c: &Container) -> Result<Self> {
        let floats = |key: &str| -> Result<Vec<f64>> {
            c.config_value(key)?
                .split(',')
                .map(|t| t.parse().map_err(|_| Error::Format(format!("bad float list for `{key}`"))))
                .collect()
        };
        let cfg = LandmarkNetConfig {
            input_size: c.parse_config("input_size")?,
            conv_filter_shapes: to_array(parse_pairs(c.config_value("conv_filter_shapes")?)?)?,
            conv_filters: to_array(parse_list(c.config_value("conv_filters")?)?)?,
            hidden_widths: to_array(parse_list(c.config_value("hidden_widths")?)?)?,
            conv_dropout: to_array(floats("conv_dropout")?)?,
            hidden_dropout: to_array(floats("hidden_dropout")?)?,
            leaky_slope: c.parse_config("leaky_slope")?,
            conv_init_limit: c.parse_config("conv_init_limit")?,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug)]
pub struct LandmarkNet {
    config: LandmarkNetConfig,
    params: ParamStore,
    convs: Vec<(ParamId, ParamId)>,
    denses: Vec<(ParamId, ParamId)>,
}

impl LandmarkNet {
    pub fn build(config: LandmarkNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut convs = Vec::new();
        let mut in_ch = 1;
        for (i, (&(k, _), &f)) in config.conv_filter_shapes.iter().zip(&config.conv_filters).enumerate() {
            let w = params
                .add(format!("conv{}.weight", i + 1), uniform(&[f, in_ch, k, k], config.conv_init_limit, &mut rng))?;
            let b = params.add(format!("conv{}.bias", i + 1), Tensor::zeros(&[f]))?;
            convs.push((w, b));
            in_ch = f;
        }
        let mut denses = Vec::new();
        let mut width = config.flattened_len()?;
        let widths = [config.hidden_widths[0], config.hidden_widths[1], NUM_LANDMARK_FEATURES];
        for (i, &k) in widths.iter().enumerate() {
            let name = if i == 2 { "out".to_string() } else { format!("fc{}", i + 1) };
            let w = params.add(format!("{name}.weight"), glorot_uniform(&[width, k], width, k, &mut rng))?;
            let b = params.add(format!("{name}.bias"), Tensor::zeros(&[k]))?;
            denses.push((w, b));
            width = k;
        }
        Ok(LandmarkNet { config, params, convs, denses })
    }

    pub fn config(&self) -> &LandmarkNetConfig {
        &self.config
    }

    pub fn params(&self) -> &ParamStore {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore {
        &mut self.params
    }

    /// `pixels [N,1,S,S] -> [N,30]` scaled coordinates.
    pub fn forward(&self, g: &mut Graph, pixels: NodeId) -> Result<NodeId> {
        let shape = g.value(pixels).shape().to_vec();
        let s = self.config.input_size;
        if shape.len() != 4 || shape[1] != 1 || shape[2] != s || shape[3] != s {
            return Err(Error::shape("landmark_net", format!("pixels must be [N, 1, {s}, {s}], got {shape:?}")));
        }
        let mut x = pixels;
        for (&(w, b), &rate) in self.convs.iter().zip(&self.config.conv_dropout) {
            x = g.conv2d(&self.params, x, w, b)?;
            x = g.leaky_relu(x, self.config.leaky_slope)?;
            x = g.maxpool2d(x, (2, 2))?;
            x = g.dropout(x, rate)?;
        }
        x = g.flatten(x)?;
        for (i, &(w, b)) in self.denses.iter().enumerate() {
            x = g.dense(&self.params, x, w, b)?;
            if i < 2 {
                x = g.leaky_relu(x, self.config.leaky_slope)?;
                x = g.dropout(x, self.config.hidden_dropout[i])?;
            }
        }
        Ok(x)
    }

    /// Infer-mode prediction of scaled coordinates, evaluated in chunks.
    pub fn predict_scaled(&self, pixels: &Tensor) -> Result<Tensor> {
        let n = pixels.batch();
        let mut out = Vec::with_capacity(n * NUM_LANDMARK_FEATURES);
        for start in (0..n).step_by(64) {
            let idx: Vec<usize> = (start..(start + 64).min(n)).collect();
            let mut g = Graph::new(Mode::Infer, 0);
            let px = g.input(pixels.select_rows(&idx))?;
            let y = self.forward(&mut g, px)?;
            out.extend_from_slice(g.value(y).data());
        }
        Tensor::new(&[n, NUM_LANDMARK_FEATURES], out)
    }

    pub fn to_container(&self) -> Container {
        let mut c = Container::new("landmark_net");
        c.config = self.config.to_pairs();
        for (_, p) in self.params.iter() {
            c.tensors.push((p.name().to_string(), p.value().clone()));
        }
        c
    }

    pub fn from_container(c: &Container) -> Result<Self> {
        c.expect_kind("landmark_net")?;
        let mut net = LandmarkNet::build(LandmarkNetConfig::from_container(c)?, 0)?;
        if c.tensors.len() != net.params.len() {
            return Err(Error::Format(format!("expected {} tensors, found {}", net.params.len(), c.tensors.len())));
        }
        let ids: Vec<ParamId> = net.params.ids().collect();
        for id in ids {
            let name = net.params.get(id).name().to_string();
            let t = c.tensor(&name)?;
            if t.shape() != net.params.value(id).shape() {
                return Err(Error::Format(format!("`{name}` has shape {:?}", t.shape())));
            }
            *net.params.get_mut(id).value_mut() = t.clone();
        }
        Ok(net)
    }
}
