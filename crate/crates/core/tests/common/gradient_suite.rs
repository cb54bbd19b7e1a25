//! Finite-difference checks of every differentiable operation and of the
//! assembled networks.

use rand::Rng;
use toonface::models::{Hcnn, HcnnConfig, LandmarkNet, LandmarkNetConfig};
use toonface::nn::{one_hot, BatchNormState, Graph, Mode, NodeId, ParamStore, Tensor};

use super::{
    hcnn_gradient_check, numeric_input_grad, numeric_param_grad, random_tensor, rng, sample_coords, Tally,
    FULL_SIZE_GRAD_FLOOR, GRAD_FLOOR,
};

pub const SEEDS: u64 = 20;

/// Compares analytic and central-difference gradients of the scalar produced by
/// `build`, for sampled parameter coordinates and input entries.
pub fn check(
    seed: u64,
    store: &mut ParamStore,
    input: &Tensor,
    build: impl Fn(&mut Graph, &ParamStore, NodeId) -> NodeId,
) -> Tally {
    check_in_mode(Mode::Train, seed, store, input, build)
}

pub fn check_in_mode(
    mode: Mode,
    seed: u64,
    store: &mut ParamStore,
    input: &Tensor,
    build: impl Fn(&mut Graph, &ParamStore, NodeId) -> NodeId,
) -> Tally {
    let run = |params: &ParamStore, x: &Tensor| {
        let mut g = Graph::new(mode, seed);
        let xi = g.input(x.clone()).unwrap();
        let l = build(&mut g, params, xi);
        (g, xi, l)
    };
    let eval = |params: &ParamStore, x: &Tensor| {
        let (g, _, l) = run(params, x);
        (g.scalar(l), g.branch_pattern())
    };
    store.zero_grad();
    let (g, xi, l) = run(store, input);
    let grads = g.backward(l, store).unwrap();
    let dx = grads.wrt(xi).cloned().unwrap_or_else(|| Tensor::zeros(input.shape()));

    let mut tally = Tally::default();
    let mut r = rng(seed ^ 0xABCD);
    for (id, idx) in sample_coords(store, 12, &mut r) {
        let analytic = store.get(id).grad().data()[idx];
        let numeric = numeric_param_grad(store, id, idx, &mut |p| eval(p, input));
        tally.record(&format!("seed {seed} `{}`[{idx}]", store.get(id).name()), analytic, numeric);
    }
    for _ in 0..12 {
        let idx = r.random_range(0..input.len());
        let numeric = numeric_input_grad(input, idx, &mut |x| eval(store, x));
        tally.record(&format!("seed {seed} input[{idx}]"), dx.data()[idx], numeric);
    }
    tally
}

/// Runs `case` for every seed and requires most sampled coordinates to be
/// comparable.
pub fn over_seeds(mut case: impl FnMut(u64) -> Tally) -> Tally {
    let mut total = Tally::default();
    for seed in 0..SEEDS {
        total.merge(case(seed));
    }
    assert!(total.compared >= 10 * total.kinked, "too few comparable coordinates: {total:?}");
    total
}

pub fn projection(shape: &[usize], seed: u64) -> Tensor {
    random_tensor(shape, 1.0, &mut rng(seed ^ 0x5151))
}

pub fn conv2d_gradients(seed: u64) -> Tally {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let w = store.add("w", random_tensor(&[3, 2, 3, 2], 0.5, &mut r)).unwrap();
    let b = store.add("b", random_tensor(&[3], 0.5, &mut r)).unwrap();
    let x = random_tensor(&[2, 2, 6, 5], 1.0, &mut r);
    let proj = projection(&[2, 3, 4, 4], seed);
    check(seed, &mut store, &x, |g, p, xi| {
        let y = g.conv2d(p, xi, w, b).unwrap();
        g.project(y, proj.clone()).unwrap()
    })
}

pub fn maxpool_gradients(seed: u64) -> Tally {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let x = random_tensor(&[2, 3, 5, 6], 1.0, &mut r);
    let proj = projection(&[2, 3, 2, 3], seed);
    check(seed, &mut store, &x, |g, _, xi| {
        let y = g.maxpool2d(xi, (2, 2)).unwrap();
        g.project(y, proj.clone()).unwrap()
    })
}

pub fn batchnorm_gradients_train_and_infer(seed: u64) -> Tally {
    let mut tally = Tally::default();
    for (shape, mode) in [(vec![4, 3, 2, 2], Mode::Train), (vec![5, 4], Mode::Train), (vec![3, 2, 3, 3], Mode::Infer)] {
        let mut r = rng(seed);
        let ch = shape[1];
        let mut store = ParamStore::new();
        let gamma = store.add("gamma", random_tensor(&[ch], 1.0, &mut r).map(|v| v + 1.5)).unwrap();
        let beta = store.add("beta", random_tensor(&[ch], 1.0, &mut r)).unwrap();
        let x = random_tensor(&shape, 2.0, &mut r);
        let proj = projection(&shape, seed);
        let mut state = BatchNormState::new(ch);
        state.running_mean = random_tensor(&[ch], 1.0, &mut r).into_data();
        state.running_var = vec![0.7; ch];
        tally.merge(check_in_mode(mode, seed, &mut store, &x, |g, p, xi| {
            let mut st = state.clone();
            let y = g.batch_norm(p, xi, gamma, beta, &mut st).unwrap();
            g.project(y, proj.clone()).unwrap()
        }));
    }
    tally
}

pub fn dense_and_leaky_relu_gradients(seed: u64) -> Tally {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let w = store.add("w", random_tensor(&[4, 3], 1.0, &mut r)).unwrap();
    let b = store.add("b", random_tensor(&[3], 1.0, &mut r)).unwrap();
    let x = random_tensor(&[5, 4], 1.0, &mut r);
    let proj = projection(&[5, 3], seed);
    check(seed, &mut store, &x, |g, p, xi| {
        let y = g.dense(p, xi, w, b).unwrap();
        let y = g.leaky_relu(y, 0.01).unwrap();
        g.project(y, proj.clone()).unwrap()
    })
}

pub fn dropout_softmax_flatten_gradients(seed: u64) -> Tally {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let x = random_tensor(&[3, 2, 2, 2], 1.0, &mut r);
    let proj = projection(&[3, 8], seed);
    check(seed, &mut store, &x, |g, _, xi| {
        let y = g.flatten(xi).unwrap();
        let y = g.dropout(y, 0.3).unwrap();
        let y = g.softmax(y).unwrap();
        g.project(y, proj.clone()).unwrap()
    })
}

pub fn cross_entropy_concat_and_weighted_sum_gradients(seed: u64) -> Tally {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let w = store.add("w", random_tensor(&[2, 3], 1.0, &mut r)).unwrap();
    let b = store.add("b", random_tensor(&[3], 1.0, &mut r)).unwrap();
    let x = random_tensor(&[2, 3], 2.0, &mut r);
    let labels = vec![r.random_range(0..3), r.random_range(0..3)];
    let other = random_tensor(&[2, 2], 1.0, &mut r);
    check(seed, &mut store, &x, |g, p, xi| {
        let o = g.input(other.clone()).unwrap();
        let h = g.dense(p, o, w, b).unwrap();
        let c = g.concat(&[xi, h]).unwrap();
        let ce1 = g.softmax_cross_entropy(xi, one_hot(&labels, 3).unwrap()).unwrap();
        let ce2 = g.softmax_cross_entropy(h, one_hot(&labels, 3).unwrap()).unwrap();
        let pr = g.project(c, projection(&[2, 6], seed)).unwrap();
        g.weighted_sum(&[(ce1, 1.0), (ce2, 0.6), (pr, 0.25)]).unwrap()
    })
}

pub fn masked_mse_gradients(seed: u64) -> Tally {
    let mut r = rng(seed);
    let mut store = ParamStore::new();
    let x = random_tensor(&[3, 30], 1.0, &mut r);
    let target = random_tensor(&[3, 30], 1.0, &mut r);
    let mask = Tensor::new(&[3, 30], (0..90).map(|_| if r.random_bool(0.7) { 1.0 } else { 0.0 }).collect()).unwrap();
    check(seed, &mut store, &x, |g, _, xi| g.masked_mse(xi, target.clone(), mask.clone()).unwrap())
}

pub fn small_hcnn(seed: u64, skip: bool) -> Hcnn {
    small_hcnn_with(seed, skip, false)
}

pub fn small_hcnn_with(seed: u64, skip: bool, dense_batch_norm: bool) -> Hcnn {
    let mut cfg = HcnnConfig::new(3);
    cfg.input_size = 32;
    cfg.conv_filters = [2, 3, 4, 5];
    cfg.fc_widths = [6, 5];
    cfg.main_widths = [7, 4];
    cfg.skip_connection = skip;
    cfg.conv_init_limit = 0.5;
    cfg.dense_batch_norm = dense_batch_norm;
    Hcnn::build(cfg, seed).unwrap()
}

pub fn assembled_hcnn_gradients(seed: u64) -> Tally {
    let mut tally = Tally::default();
    for skip in [true, false] {
        let mut model = small_hcnn(seed, skip);
        tally.merge(hcnn_gradient_check(&mut model, seed, 2, 4, GRAD_FLOOR));
    }
    tally
}

/// Dense-layer batch norm over two samples is nearly singular, so this variant
/// is checked on batches of four.
pub fn hcnn_with_dense_batch_norm_gradients(seed: u64) -> Tally {
    let mut model = small_hcnn_with(seed, true, true);
    hcnn_gradient_check(&mut model, seed, 4, 4, GRAD_FLOOR)
}

pub fn full_size_hcnn_gradients_sampled() -> Tally {
    let mut model = Hcnn::build(HcnnConfig::new(5), 11).unwrap();
    let tally = hcnn_gradient_check(&mut model, 11, 2, 3, FULL_SIZE_GRAD_FLOOR);
    assert!(tally.compared >= 2 * tally.kinked, "{tally:?}");
    tally
}

pub fn landmark_net_gradients(seed: u64) -> Tally {
    let cfg = LandmarkNetConfig {
        input_size: 24,
        conv_filters: [2, 3, 4],
        hidden_widths: [6, 5],
        conv_init_limit: 0.5,
        ..LandmarkNetConfig::default()
    };
    let net = LandmarkNet::build(cfg, seed).unwrap();
    let mut store = net.params().clone();
    let mut r = rng(seed);
    let x = random_tensor(&[3, 1, 24, 24], 1.0, &mut r);
    let target = random_tensor(&[3, 30], 1.0, &mut r);
    let mask = Tensor::filled(&[3, 30], 1.0);
    check(seed, &mut store, &x, |g, p, xi| {
        let mut local = net.clone();
        *local.params_mut() = p.clone();
        let y = local.forward(g, xi).unwrap();
        g.masked_mse(y, target.clone(), mask.clone()).unwrap()
    })
}

/// Every seeded case, run over [`SEEDS`] seeds by [`over_seeds`].
pub const SEEDED_CASES: [(&str, fn(u64) -> Tally); 10] = [
    ("conv2d_gradients", conv2d_gradients),
    ("maxpool_gradients", maxpool_gradients),
    ("batchnorm_gradients_train_and_infer", batchnorm_gradients_train_and_infer),
    ("dense_and_leaky_relu_gradients", dense_and_leaky_relu_gradients),
    ("dropout_softmax_flatten_gradients", dropout_softmax_flatten_gradients),
    ("cross_entropy_concat_and_weighted_sum_gradients", cross_entropy_concat_and_weighted_sum_gradients),
    ("masked_mse_gradients", masked_mse_gradients),
    ("assembled_hcnn_gradients", assembled_hcnn_gradients),
    ("hcnn_with_dense_batch_norm_gradients", hcnn_with_dense_batch_norm_gradients),
    ("landmark_net_gradients", landmark_net_gradients),
];
