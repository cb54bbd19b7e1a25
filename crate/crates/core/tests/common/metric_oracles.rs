//! Direct counting references for the recognition metrics.

/// Macro precision, recall and mean per-class F, from label lists.
pub fn macro_prf_oracle(k: usize, truth: &[usize], predicted: &[usize]) -> (f64, f64, f64) {
    let (mut ps, mut rs, mut fs) = (0.0, 0.0, 0.0);
    for c in 0..k {
        let mut tp = 0u64;
        let mut fp = 0u64;
        let mut fn_ = 0u64;
        for (&t, &p) in truth.iter().zip(predicted) {
            match (t == c, p == c) {
                (true, true) => tp += 1,
                (false, true) => fp += 1,
                (true, false) => fn_ += 1,
                _ => {}
            }
        }
        let p = if tp + fp == 0 { 0.0 } else { tp as f64 / (tp + fp) as f64 };
        let r = if tp + fn_ == 0 { 0.0 } else { tp as f64 / (tp + fn_) as f64 };
        let f = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
        ps += p;
        rs += r;
        fs += f;
    }
    (ps / k as f64, rs / k as f64, fs / k as f64)
}

pub fn accuracy_oracle(truth: &[usize], predicted: &[usize]) -> f64 {
    let hits = truth.iter().zip(predicted).filter(|(t, p)| t == p).count();
    hits as f64 / truth.len() as f64
}

/// Top-k error from the rank at which each truth appears.
pub fn topk_oracle(rankings: &[Vec<usize>], truths: &[usize], k: usize) -> f64 {
    let mut misses = 0usize;
    for (r, &t) in rankings.iter().zip(truths) {
        match r.iter().position(|&c| c == t) {
            Some(rank) if rank < k => {}
            _ => misses += 1,
        }
    }
    misses as f64 / truths.len() as f64
}

/// IoU of integer boxes `(x, y, w, h)` by counting unit cells.
pub fn cell_iou(a: (i64, i64, i64, i64), b: (i64, i64, i64, i64)) -> f64 {
    let inside = |r: (i64, i64, i64, i64), x: i64, y: i64| x >= r.0 && x < r.0 + r.2 && y >= r.1 && y < r.1 + r.3;
    let (lo_x, lo_y) = (a.0.min(b.0), a.1.min(b.1));
    let (hi_x, hi_y) = ((a.0 + a.2).max(b.0 + b.2), (a.1 + a.3).max(b.1 + b.3));
    let (mut inter, mut union) = (0u64, 0u64);
    for y in lo_y..hi_y {
        for x in lo_x..hi_x {
            let (ia, ib) = (inside(a, x, y), inside(b, x, y));
            inter += u64::from(ia && ib);
            union += u64::from(ia || ib);
        }
    }
    inter as f64 / union as f64
}

/// RMSE over the coordinates present in the truth, points as `(x, y)` pairs.
pub fn rmse_oracle(predicted: &[Vec<(f64, f64)>], truth: &[Vec<Option<(f64, f64)>>]) -> f64 {
    let mut sum = 0.0;
    let mut count = 0usize;
    for (p, t) in predicted.iter().zip(truth) {
        for (pp, tp) in p.iter().zip(t) {
            if let Some((tx, ty)) = tp {
                sum += (pp.0 - tx) * (pp.0 - tx);
                sum += (pp.1 - ty) * (pp.1 - ty);
                count += 2;
            }
        }
    }
    (sum / count as f64).sqrt()
}

pub type IntBox = (i64, i64, i64, i64);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum OracleVerdict {
    Tp,
    Fp,
    Fn,
}

/// Rescans every unused pair for the best remaining one (highest IoU, then
/// lowest truth index, then lowest prediction index) until none reaches the
/// threshold.
pub fn verdict_oracle(truth: &[IntBox], predicted: &[IntBox], threshold: f64) -> OracleVerdict {
    let mut t_used = vec![false; truth.len()];
    let mut p_used = vec![false; predicted.len()];
    let mut matches = 0;
    loop {
        let mut best: Option<(f64, usize, usize)> = None;
        for (t, &tb) in truth.iter().enumerate() {
            for (p, &pb) in predicted.iter().enumerate() {
                if t_used[t] || p_used[p] {
                    continue;
                }
                let v = cell_iou(tb, pb);
                if v >= threshold && best.is_none_or(|(bv, _, _)| v > bv) {
                    best = Some((v, t, p));
                }
            }
        }
        let Some((_, t, p)) = best else { break };
        t_used[t] = true;
        p_used[p] = true;
        matches += 1;
    }
    if p_used.iter().any(|u| !u) {
        OracleVerdict::Fp
    } else if matches > 0 {
        OracleVerdict::Tp
    } else {
        OracleVerdict::Fn
    }
}

/// `(TPR, FPR, FNR)` over images with at least one truth box; images without
/// predictions have none.
pub fn rates_oracle(images: &[(Vec<IntBox>, Option<Vec<IntBox>>)], threshold: f64) -> (f64, f64, f64) {
    let (mut tp, mut fp, mut fn_) = (0usize, 0usize, 0usize);
    for (truth, pred) in images {
        if truth.is_empty() {
            continue;
        }
        match verdict_oracle(truth, pred.as_deref().unwrap_or(&[]), threshold) {
            OracleVerdict::Tp => tp += 1,
            OracleVerdict::Fp => fp += 1,
            OracleVerdict::Fn => fn_ += 1,
        }
    }
    let n = (tp + fp + fn_) as f64;
    (tp as f64 / n, fp as f64 / n, fn_ as f64 / n)
}
