//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

pub mod gradient_suite;
pub mod metric_oracles;
pub mod shallow_oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toonface::models::Hcnn;
use toonface::nn::{one_hot, Graph, Mode, ParamId, ParamStore, Tensor};

pub const FD_STEP: f64 = 1e-5;
pub const GRAD_REL_TOL: f64 = 1e-4;
/// Below this magnitude the error is judged absolutely (tolerance
/// `GRAD_REL_TOL * GRAD_FLOOR`), which absorbs summation round-off in the loss.
pub const GRAD_FLOOR: f64 = 1e-4;
/// Floor for the full-size HCNN, whose loss sums ~10^5 activations per layer.
pub const FULL_SIZE_GRAD_FLOOR: f64 = 1e-2;

pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central difference of a loss evaluated at offsets `0, +h, -h`. `eval`
/// returns the loss and the graph's branch pattern; `None` when the
/// perturbation switched a leaky-ReLU sign or pool arg-max, since the function
/// is not differentiable across that interval.
pub fn central_difference(mut eval: impl FnMut(f64) -> (f64, u64)) -> Option<f64> {
    let (_, base) = eval(0.0);
    let (up, p_up) = eval(FD_STEP);
    let (down, p_down) = eval(-FD_STEP);
    (p_up == base && p_down == base).then(|| (up - down) / (2.0 * FD_STEP))
}

/// Central difference w.r.t. one scalar of a parameter.
pub fn numeric_param_grad(
    store: &mut ParamStore,
    id: ParamId,
    index: usize,
    loss: &mut dyn FnMut(&ParamStore) -> (f64, u64),
) -> Option<f64> {
    let orig = store.value(id).data()[index];
    let out = central_difference(|d| {
        store.get_mut(id).value_mut().data_mut()[index] = orig + d;
        loss(store)
    });
    store.get_mut(id).value_mut().data_mut()[index] = orig;
    out
}

/// Central difference w.r.t. one entry of an input tensor.
pub fn numeric_input_grad(input: &Tensor, index: usize, loss: &mut dyn FnMut(&Tensor) -> (f64, u64)) -> Option<f64> {
    let mut x = input.clone();
    central_difference(|d| {
        x.data_mut()[index] = input.data()[index] + d;
        loss(&x)
    })
}

/// Running summary of one gradient check.
#[derive(Debug)]
pub struct Tally {
    pub worst: f64,
    pub compared: usize,
    pub kinked: usize,
    pub floor: f64,
}

impl Default for Tally {
    fn default() -> Self {
        Tally::with_floor(GRAD_FLOOR)
    }
}

impl Tally {
    pub fn with_floor(floor: f64) -> Self {
        Tally { worst: 0.0, compared: 0, kinked: 0, floor }
    }

    /// Records one coordinate, panicking if the error exceeds tolerance.
    pub fn record(&mut self, what: &str, analytic: f64, numeric: Option<f64>) {
        let Some(numeric) = numeric else {
            self.kinked += 1;
            return;
        };
        let e = rel_err(analytic, numeric, self.floor);
        assert!(e <= GRAD_REL_TOL, "{what}: analytic {analytic:e} numeric {numeric:e} (rel {e:e})");
        self.worst = self.worst.max(e);
        self.compared += 1;
    }

    pub fn merge(&mut self, other: Tally) {
        self.worst = self.worst.max(other.worst);
        self.compared += other.compared;
        self.kinked += other.kinked;
    }
}

pub fn random_tensor(shape: &[usize], scale: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let n: usize = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-scale..scale)).collect()).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Up to `per_param` random coordinates of every parameter.
pub fn sample_coords(store: &ParamStore, per_param: usize, rng: &mut ChaCha8Rng) -> Vec<(ParamId, usize)> {
    let mut out = Vec::new();
    for (id, p) in store.iter() {
        let n = p.value().len();
        if n <= per_param {
            out.extend((0..n).map(|i| (id, i)));
        } else {
            out.extend((0..per_param).map(|_| (id, rng.random_range(0..n))));
        }
    }
    out
}

/// Finite-difference check of the full HCNN loss (main CE + discounted aux CE)
/// on a random batch: `per_param` coordinates of every parameter plus a few
/// pixel and landmark inputs.
pub fn hcnn_gradient_check(model: &mut Hcnn, seed: u64, batch: usize, per_param: usize, floor: f64) -> Tally {
    let size = model.config().input_size;
    let k = model.config().num_classes;
    let discount = model.config().aux_discount;
    let mut r = rng(seed ^ 77);
    let pixels = random_tensor(&[batch, 1, size, size], 1.0, &mut r).map(|v| v.abs());
    let landmarks = random_tensor(&[batch, 30], 1.0, &mut r);
    let labels: Vec<usize> = (0..batch).map(|i| i % k).collect();
    let targets = one_hot(&labels, k).unwrap();

    let run = |m: &mut Hcnn, px: &Tensor, lm: &Tensor| {
        let mut g = Graph::new(Mode::Train, seed);
        let pi = g.input(px.clone()).unwrap();
        let li = g.input(lm.clone()).unwrap();
        let out = m.forward(&mut g, pi, li).unwrap();
        let main = g.softmax_cross_entropy(out.main_logits, targets.clone()).unwrap();
        let aux = g.softmax_cross_entropy(out.aux_logits, targets.clone()).unwrap();
        let total = g.weighted_sum(&[(main, 1.0), (aux, discount)]).unwrap();
        (g, total, pi, li)
    };

    model.params_mut().zero_grad();
    let (g, total, pi, li) = run(model, &pixels, &landmarks);
    let grads = g.backward(total, model.params_mut()).unwrap();
    let dpx = grads.wrt(pi).unwrap().clone();
    let dlm = grads.wrt(li).unwrap().clone();
    drop(g);

    let mut tally = Tally::with_floor(floor);
    for (id, idx) in sample_coords(model.params(), per_param, &mut r) {
        let analytic = model.params().get(id).grad().data()[idx];
        let orig = model.params().value(id).data()[idx];
        let numeric = central_difference(|d| {
            model.params_mut().get_mut(id).value_mut().data_mut()[idx] = orig + d;
            let (g, t, ..) = run(model, &pixels, &landmarks);
            (g.scalar(t), g.branch_pattern())
        });
        model.params_mut().get_mut(id).value_mut().data_mut()[idx] = orig;
        tally.record(&format!("seed {seed} `{}`[{idx}]", model.params().get(id).name()), analytic, numeric);
    }
    for (is_pixels, analytic) in [(true, &dpx), (false, &dlm)] {
        let input = if is_pixels { &pixels } else { &landmarks };
        for _ in 0..6 {
            let idx = r.random_range(0..input.len());
            let numeric = numeric_input_grad(input, idx, &mut |x| {
                let (px, lm) = if is_pixels { (x, &landmarks) } else { (&pixels, x) };
                let (g, t, ..) = run(model, px, lm);
                (g.scalar(t), g.branch_pattern())
            });
            tally.record(&format!("seed {seed} input[{idx}]"), analytic.data()[idx], numeric);
        }
    }
    tally
}
