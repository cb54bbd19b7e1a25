//! Multi-class RBF SVM: one-vs-rest binary machines with Platt-scaled outputs.

use std::collections::BTreeMap;

use log::warn;

use crate::error::{Error, Result};
use crate::models::Container;
use crate::nn::Tensor;
use crate::shallow::smo::{rbf, solve_binary, SmoParams};
use crate::shallow::{check_rows, class_count};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmParams {
    pub c: f64,
    pub gamma: f64,
    pub probability: bool,
    pub tolerance: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams { c: 50.0, gamma: 1e-3, probability: true, tolerance: 1e-3 }
    }
}

impl SvmParams {
    pub fn smo(&self) -> SmoParams {
        SmoParams { tolerance: self.tolerance, ..SmoParams::new(self.c, self.gamma) }
    }
}

/// One binary machine: class `c` against the rest.
#[derive(Clone, Debug, PartialEq)]
pub struct Machine {
    /// `αᵢyᵢ` for each stored support vector.
    pub coef: Vec<f64>,
    pub rho: f64,
    /// Platt sigmoid `P(c | f) = 1 / (1 + exp(A·f + B))`.
    pub sigmoid: Option<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel {
    pub params: SvmParams,
    pub num_classes: usize,
    /// Union of the support vectors of every machine.
    pub support: Vec<Vec<f64>>,
    pub machines: Vec<Machine>,
}

pub fn svm_train(rows: &[Vec<f64>], labels: &[usize], params: &SvmParams) -> Result<SvmModel> {
    params.smo().validate()?;
    check_rows(rows, labels)?;
    let k = class_count(labels)?;
    let mut coefs: Vec<BTreeMap<usize, f64>> = Vec::with_capacity(k);
    let mut rhos = Vec::with_capacity(k);
    let mut sigmoids = Vec::with_capacity(k);
    for class in 0..k {
        let y: Vec<f64> = labels.iter().map(|&l| if l == class { 1.0 } else { -1.0 }).collect();
        if !y.contains(&1.0) {
            return Err(Error::invalid(format!("class {class} has no training rows")));
        }
        let sol = solve_binary(rows, &y, &params.smo())?;
        let coef: BTreeMap<usize, f64> =
            sol.alpha.iter().enumerate().filter(|(_, a)| **a > 0.0).map(|(i, a)| (i, a * y[i])).collect();
        let sigmoid = if params.probability {
            let dec: Vec<f64> = rows
                .iter()
                .map(|x| coef.iter().map(|(&i, c)| c * rbf(&rows[i], x, params.gamma)).sum::<f64>() - sol.rho)
                .collect();
            Some(platt(&dec, &y))
        } else {
            None
        };
        coefs.push(coef);
        rhos.push(sol.rho);
        sigmoids.push(sigmoid);
    }
    let mut union: Vec<usize> = coefs.iter().flat_map(|c| c.keys().copied()).collect();
    union.sort_unstable();
    union.dedup();
    let machines = coefs
        .iter()
        .zip(rhos)
        .zip(sigmoids)
        .map(|((c, rho), sigmoid)| Machine {
            coef: union.iter().map(|i| c.get(i).copied().unwrap_or(0.0)).collect(),
            rho,
            sigmoid,
        })
        .collect();
    let support = union.iter().map(|&i| rows[i].clone()).collect();
    Ok(SvmModel { params: *params, num_classes: k, support, machines })
}

/// Fits `P(y=1|f) = 1/(1+exp(A·f+B))` by Newton's method with backtracking on
/// regularized targets.
pub fn platt(dec: &[f64], y: &[f64]) -> (f64, f64) {
    let prior1 = y.iter().filter(|v| **v > 0.0).count() as f64;
    let prior0 = y.len() as f64 - prior1;
    let hi = (prior1 + 1.0) / (prior1 + 2.0);
    let lo = 1.0 / (prior0 + 2.0);
    let t: Vec<f64> = y.iter().map(|v| if *v > 0.0 { hi } else { lo }).collect();
    let objective = |a: f64, b: f64| -> f64 {
        dec.iter()
            .zip(&t)
            .map(|(f, ti)| {
                let z = f * a + b;
                if z >= 0.0 {
                    ti * z + (-z).exp().ln_1p()
                } else {
                    (ti - 1.0) * z + z.exp().ln_1p()
                }
            })
            .sum()
    };
    let (max_iter, min_step, sigma, eps) = (100, 1e-10, 1e-12, 1e-5);
    let mut a = 0.0;
    let mut b = ((prior0 + 1.0) / (prior1 + 1.0)).ln();
    let mut fval = objective(a, b);
    for _ in 0..max_iter {
        let (mut h11, mut h22, mut h21, mut g1, mut g2) = (sigma, sigma, 0.0, 0.0, 0.0);
        for (f, ti) in dec.iter().zip(&t) {
            let z = f * a + b;
            let (p, q) = if z >= 0.0 {
                let e = (-z).exp();
                (e / (1.0 + e), 1.0 / (1.0 + e))
            } else {
                let e = z.exp();
                (1.0 / (1.0 + e), e / (1.0 + e))
            };
            let d2 = p * q;
            h11 += f * f * d2;
            h22 += d2;
            h21 += f * d2;
            let d1 = ti - p;
            g1 += f * d1;
            g2 += d1;
        }
        if g1.abs() < eps && g2.abs() < eps {
            break;
        }
        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let gd = g1 * da + g2 * db;
        let mut step = 1.0;
        while step >= min_step {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * gd {
                a = na;
                b = nb;
                fval = nf;
                break;
            }
            step /= 2.0;
        }
        if step < min_step {
            warn!("Platt line search failed");
            break;
        }
    }
    (a, b)
}

impl SvmModel {
    pub fn dim(&self) -> usize {
        self.support.first().map_or(0, Vec::len)
    }

    /// Raw decision value of every machine.
    pub fn decision(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.dim() {
            return Err(Error::shape("svm", format!("row has {} features, model expects {}", x.len(), self.dim())));
        }
        let k: Vec<f64> = self.support.iter().map(|s| rbf(s, x, self.params.gamma)).collect();
        Ok(self.machines.iter().map(|m| m.coef.iter().zip(&k).map(|(c, kv)| c * kv).sum::<f64>() - m.rho).collect())
    }

    pub fn has_probability(&self) -> bool {
        self.machines.iter().all(|m| m.sigmoid.is_some())
    }

    /// Per-class probabilities: each machine's sigmoid output, renormalized.
    pub fn predict_proba_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        let dec = self.decision(x)?;
        let mut p = Vec::with_capacity(dec.len());
        for (m, f) in self.machines.iter().zip(dec) {
            let (a, b) = m.sigmoid.ok_or_else(|| Error::invalid("model was trained without probability estimates"))?;
            p.push(sigmoid_prob(a * f + b));
        }
        let s: f64 = p.iter().sum();
        if s > 0.0 {
            p.iter_mut().for_each(|v| *v /= s);
        } else {
            let u = 1.0 / p.len() as f64;
            p.fill(u);
        }
        Ok(p)
    }

    /// Probabilities when available, raw decision values otherwise.
    pub fn scores_row(&self, x: &[f64]) -> Result<Vec<f64>> {
        if self.has_probability() {
            self.predict_proba_row(x)
        } else {
            self.decision(x)
        }
    }

    pub(crate) fn write(&self, c: &mut Container) -> Result<()> {
        let p = &self.params;
        c.config.push(("svm.c".into(), p.c.to_string()));
        c.config.push(("svm.gamma".into(), p.gamma.to_string()));
        c.config.push(("svm.probability".into(), p.probability.to_string()));
        c.config.push(("svm.tolerance".into(), p.tolerance.to_string()));
        c.config.push(("svm.classes".into(), self.num_classes.to_string()));
        let (n, d, k) = (self.support.len(), self.dim(), self.num_classes);
        c.tensors.push(("svm.support".into(), Tensor::new(&[n, d], self.support.concat())?));
        let coef: Vec<f64> = self.machines.iter().flat_map(|m| m.coef.iter().copied()).collect();
        c.tensors.push(("svm.coef".into(), Tensor::new(&[k, n], coef)?));
        c.tensors.push(("svm.rho".into(), Tensor::new(&[k], self.machines.iter().map(|m| m.rho).collect())?));
        if p.probability {
            let ab: Vec<f64> = self
                .machines
                .iter()
                .flat_map(|m| {
                    let (a, b) = m.sigmoid.unwrap_or((0.0, 0.0));
                    [a, b]
                })
                .collect();
            c.tensors.push(("svm.sigmoid".into(), Tensor::new(&[k, 2], ab)?));
        }
        Ok(())
    }

    pub(crate) fn read(c: &Container) -> Result<Self> {
        let params = SvmParams {
            c: c.parse_config("svm.c")?,
            gamma: c.parse_config("svm.gamma")?,
            probability: c.parse_config("svm.probability")?,
            tolerance: c.parse_config("svm.tolerance")?,
        };
        let k: usize = c.parse_config("svm.classes")?;
        let sv = c.tensor("svm.support")?;
        let coef = c.tensor("svm.coef")?;
        let rho = c.tensor("svm.rho")?;
        if sv.rank() != 2 || coef.shape() != [k, sv.shape()[0]] || rho.shape() != [k] {
            return Err(Error::Format("svm tensors have inconsistent shapes".into()));
        }
        let (n, d) = (sv.shape()[0], sv.shape()[1]);
        let sigmoid = if params.probability {
            let s = c.tensor("svm.sigmoid")?;
            if s.shape() != [k, 2] {
                return Err(Error::Format("svm sigmoid table has the wrong shape".into()));
            }
            Some(s.data().to_vec())
        } else {
            None
        };
        let machines = (0..k)
            .map(|m| Machine {
                coef: coef.data()[m * n..(m + 1) * n].to_vec(),
                rho: rho.data()[m],
                sigmoid: sigmoid.as_ref().map(|s| (s[2 * m], s[2 * m + 1])),
            })
            .collect();
        let support = (0..n).map(|i| sv.data()[i * d..(i + 1) * d].to_vec()).collect();
        Ok(SvmModel { params, num_classes: k, support, machines })
    }
}

fn sigmoid_prob(z: f64) -> f64 {
    if z >= 0.0 {
        let e = (-z).exp();
        e / (1.0 + e)
    } else {
        1.0 / (1.0 + z.exp())
    }
}
