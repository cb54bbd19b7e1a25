//! Brute-force references for the SMO solver and one boosting stage.

/// `exp(−γ‖a−b‖²)`, written out independently of the library.
pub fn kernel(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let mut d2 = 0.0;
    for i in 0..a.len() {
        d2 += (a[i] - b[i]).powi(2);
    }
    (-gamma * d2).exp()
}

fn q_matrix(rows: &[Vec<f64>], y: &[f64], gamma: f64) -> Vec<Vec<f64>> {
    (0..rows.len())
        .map(|i| (0..rows.len()).map(|j| y[i] * y[j] * kernel(&rows[i], &rows[j], gamma)).collect())
        .collect()
}

fn dual(q: &[Vec<f64>], alpha: &[f64]) -> f64 {
    let mut quad = 0.0;
    for i in 0..alpha.len() {
        for j in 0..alpha.len() {
            quad += alpha[i] * q[i][j] * alpha[j];
        }
    }
    alpha.iter().sum::<f64>() - 0.5 * quad
}

pub fn dual_value(rows: &[Vec<f64>], y: &[f64], gamma: f64, alpha: &[f64]) -> f64 {
    dual(&q_matrix(rows, y, gamma), alpha)
}

/// Completes `free` (the first n−1 multipliers) with the one that satisfies
/// `Σ αᵢyᵢ = 0`, if it lies in `[0, C]`.
fn complete(free: &[f64], y: &[f64], c: f64) -> Option<Vec<f64>> {
    let n = y.len();
    let s: f64 = free.iter().zip(y).map(|(a, y)| a * y).sum();
    let last = -y[n - 1] * s;
    if !(-1e-12..=c + 1e-12).contains(&last) {
        return None;
    }
    let mut a = free.to_vec();
    a.push(last.clamp(0.0, c));
    Some(a)
}

/// Maximum of the dual over a uniform grid on `[0, C]^(n−1)` (the last
/// multiplier fixed by the equality constraint), polished by a pattern search
/// over every ±step move with the step halved until it falls below `C·1e-9`.
pub fn grid_dual_oracle(rows: &[Vec<f64>], y: &[f64], c: f64, gamma: f64) -> (f64, Vec<f64>) {
    let n = rows.len();
    let q = q_matrix(rows, y, gamma);
    let free = n - 1;
    let mut levels = 100usize;
    while free > 0 && ((levels + 1) as f64).powi(free as i32) > 5e6 {
        levels -= 1;
    }
    let step0 = c / levels as f64;
    let mut best = (f64::NEG_INFINITY, vec![0.0; n]);
    let mut digits = vec![0usize; free];
    loop {
        let point: Vec<f64> = digits.iter().map(|&d| d as f64 * step0).collect();
        if let Some(a) = complete(&point, y, c) {
            let v = dual(&q, &a);
            if v > best.0 {
                best = (v, a);
            }
        }
        let mut k = 0;
        while k < free {
            digits[k] += 1;
            if digits[k] <= levels {
                break;
            }
            digits[k] = 0;
            k += 1;
        }
        if k == free {
            break;
        }
    }
    let moves = 3usize.pow(free as u32);
    let mut step = step0;
    while step > c * 1e-9 {
        let mut improved = false;
        for m in 0..moves {
            let mut code = m;
            let mut cand = best.1[..free].to_vec();
            let mut ok = true;
            for v in cand.iter_mut() {
                *v += (code % 3) as f64 * step - step;
                code /= 3;
                if *v < -1e-15 || *v > c + 1e-15 {
                    ok = false;
                }
            }
            if !ok {
                continue;
            }
            if let Some(a) = complete(&cand, y, c) {
                let v = dual(&q, &a);
                if v > best.0 + 1e-15 {
                    best = (v, a);
                    improved = true;
                }
            }
        }
        if !improved {
            step /= 2.0;
        }
    }
    best
}

/// Largest violation of the KKT conditions at `alpha` with offset `rho`:
/// `α=0 ⇒ yf ≥ 1`, `0<α<C ⇒ yf = 1`, `α=C ⇒ yf ≤ 1`.
pub fn kkt_violation(rows: &[Vec<f64>], y: &[f64], c: f64, gamma: f64, alpha: &[f64], rho: f64) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..rows.len() {
        let mut f = -rho;
        for j in 0..rows.len() {
            f += alpha[j] * y[j] * kernel(&rows[j], &rows[i], gamma);
        }
        let yf = y[i] * f;
        let v = if alpha[i] <= 0.0 {
            (1.0 - yf).max(0.0)
        } else if alpha[i] >= c {
            (yf - 1.0).max(0.0)
        } else {
            (yf - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}

/// Binary problems with at most 8 points: `(rows, y, C, gamma)`.
pub fn smo_fixtures() -> Vec<(&'static str, Vec<Vec<f64>>, Vec<f64>, f64, f64)> {
    vec![
        ("two points", vec![vec![-1.0], vec![1.0]], vec![-1.0, 1.0], 50.0, 1.0),
        (
            "xor",
            vec![vec![0.0, 0.0], vec![1.0, 1.0], vec![0.0, 1.0], vec![1.0, 0.0]],
            vec![1.0, 1.0, -1.0, -1.0],
            50.0,
            1.024,
        ),
        (
            "overlapping line",
            vec![vec![0.0], vec![0.4], vec![0.9], vec![1.1], vec![1.5]],
            vec![-1.0, -1.0, 1.0, -1.0, 1.0],
            1.0,
            2.0,
        ),
        (
            "six in the plane",
            vec![vec![0.1, 0.2], vec![0.8, 0.1], vec![0.5, 0.9], vec![0.3, 0.4], vec![0.9, 0.7], vec![0.2, 0.8]],
            vec![1.0, -1.0, 1.0, 1.0, -1.0, -1.0],
            2.0,
            1.5,
        ),
        (
            "seven bounded",
            vec![
                vec![0.0, 0.0],
                vec![0.2, 0.1],
                vec![0.1, 0.3],
                vec![0.4, 0.4],
                vec![0.35, 0.45],
                vec![0.6, 0.5],
                vec![0.7, 0.9],
            ],
            vec![1.0, 1.0, -1.0, 1.0, -1.0, -1.0, 1.0],
            0.5,
            3.0,
        ),
        (
            "eight in space",
            vec![
                vec![0.0, 0.0, 0.0],
                vec![1.0, 0.0, 0.0],
                vec![0.0, 1.0, 0.0],
                vec![0.0, 0.0, 1.0],
                vec![1.0, 1.0, 0.0],
                vec![1.0, 0.0, 1.0],
                vec![0.0, 1.0, 1.0],
                vec![1.0, 1.0, 1.0],
            ],
            vec![1.0, -1.0, -1.0, -1.0, 1.0, 1.0, 1.0, -1.0],
            1.0,
            0.7,
        ),
    ]
}

/// Scores after one boosting stage of depth-1 trees, by exhaustive search
/// over every split (minimum summed squared error about each side's mean).
pub fn one_stage_stump_scores(rows: &[Vec<f64>], labels: &[usize], k: usize, shrinkage: f64) -> Vec<Vec<f64>> {
    let n = rows.len();
    let prior: Vec<f64> = (0..k).map(|c| labels.iter().filter(|&&l| l == c).count() as f64 / n as f64).collect();
    let init: Vec<f64> = prior.iter().map(|p| p.ln()).collect();
    let mut out = vec![init.clone(); n];
    for c in 0..k {
        let r: Vec<f64> = labels.iter().map(|&l| f64::from(u8::from(l == c)) - prior[c]).collect();
        let sse = |idx: &[usize]| -> f64 {
            if idx.is_empty() {
                return 0.0;
            }
            let m = idx.iter().map(|&i| r[i]).sum::<f64>() / idx.len() as f64;
            idx.iter().map(|&i| (r[i] - m).powi(2)).sum()
        };
        let all: Vec<usize> = (0..n).collect();
        let mut best: Option<(f64, usize, f64)> = None;
        for f in 0..rows[0].len() {
            let mut vals: Vec<f64> = rows.iter().map(|x| x[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = (w[0] + w[1]) / 2.0;
                let (l, rr): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| rows[i][f] <= t);
                let s = sse(&l) + sse(&rr);
                if best.is_none_or(|(b, _, _)| s < b - 1e-12) {
                    best = Some((s, f, t));
                }
            }
        }
        let leaf = |idx: &[usize]| -> f64 {
            let num: f64 = idx.iter().map(|&i| r[i]).sum();
            let den: f64 = idx.len() as f64 * prior[c] * (1.0 - prior[c]);
            (k as f64 - 1.0) / k as f64 * num / den
        };
        let split = best.filter(|(s, _, _)| *s < sse(&all) - 1e-12);
        match split {
            Some((_, f, t)) => {
                let (l, rr): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| rows[i][f] <= t);
                let (vl, vr) = (leaf(&l), leaf(&rr));
                for i in 0..n {
                    out[i][c] += shrinkage * if rows[i][f] <= t { vl } else { vr };
                }
            }
            None => {
                let v = leaf(&all);
                for s in out.iter_mut() {
                    s[c] += shrinkage * v;
                }
            }
        }
    }
    out
}
