//! Brute-force reference implementations used as oracles by the
//! integration and acceptance suites. These deliberately avoid the library's
//! code paths: ranks are found by counting comparisons instead of sorting,
//! and pair aggregation is written as plain nested loops.

use densedet::metrics::VideoPredictions;

/// Tie-broken rank (1-based) of item `p` under descending score with
/// earlier-index-first ties.
fn rank_of(scores: &[f64], p: usize) -> usize {
    1 + (0..scores.len())
        .filter(|&k| scores[k] > scores[p] || (scores[k] == scores[p] && k < p))
        .count()
}

/// All-points AP computed by selecting each rank in turn (O(n²)).
pub fn oracle_average_precision(scores: &[f64], labels: &[u8]) -> Option<f64> {
    let n = scores.len();
    let npos = labels.iter().filter(|&&l| l == 1).count();
    if npos == 0 {
        return None;
    }
    let ranks: Vec<usize> = (0..n).map(|p| rank_of(scores, p)).collect();
    let mut hits = 0usize;
    let mut total = 0.0;
    for r in 1..=n {
        let item = ranks.iter().position(|&x| x == r).expect("ranks are a permutation");
        if labels[item] == 1 {
            hits += 1;
            total += hits as f64 / r as f64;
        }
    }
    Some(total / npos as f64)
}

/// Per-class AP over pooled frames plus the unweighted mean over evaluated
/// classes.
pub fn oracle_per_frame_map(videos: &[VideoPredictions]) -> (f64, Vec<Option<f64>>) {
    let c = videos[0].c;
    let mut per_class = Vec::with_capacity(c);
    let mut sum = 0.0;
    let mut evaluated = 0usize;
    for class in 0..c {
        let mut scores = Vec::new();
        let mut labels = Vec::new();
        for v in videos {
            for t in 0..v.t {
                scores.push(v.scores[t * v.c + class]);
                labels.push(v.labels[t * v.c + class]);
            }
        }
        let ap = oracle_average_precision(&scores, &labels);
        if let Some(a) = ap {
            sum += a;
            evaluated += 1;
        }
        per_class.push(ap);
    }
    (sum / evaluated as f64, per_class)
}

/// Naive action-conditional aggregation over ordered class pairs.
pub fn oracle_action_conditional(
    videos: &[VideoPredictions],
    tau: usize,
    threshold: f64,
) -> Option<(f64, f64, f64, f64, usize)> {
    let c = videos[0].c;
    let mut p_sum = 0.0;
    let mut r_sum = 0.0;
    let mut ap_sum = 0.0;
    let mut pairs = 0usize;
    for observed in 0..c {
        for conditioning in 0..c {
            if observed == conditioning {
                continue;
            }
            let mut scores = Vec::new();
            let mut labels = Vec::new();
            for v in videos {
                for t in 0..v.t {
                    let mut conditioned = false;
                    for s in 0..v.t {
                        let within = if s >= t { s - t <= tau } else { t - s <= tau };
                        if within && v.labels[s * v.c + conditioning] == 1 {
                            conditioned = true;
                        }
                    }
                    if conditioned {
                        scores.push(v.scores[t * v.c + observed]);
                        labels.push(v.labels[t * v.c + observed]);
                    }
                }
            }
            let npos = labels.iter().filter(|&&l| l == 1).count();
            if scores.is_empty() || npos == 0 {
                continue;
            }
            let mut tp = 0;
            let mut fp = 0;
            let mut fn_ = 0;
            for (s, l) in scores.iter().zip(labels.iter()) {
                if *s >= threshold {
                    if *l == 1 {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                } else if *l == 1 {
                    fn_ += 1;
                }
            }
            p_sum += if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
            r_sum += tp as f64 / (tp + fn_) as f64;
            ap_sum += oracle_average_precision(&scores, &labels).expect("npos > 0");
            pairs += 1;
        }
    }
    if pairs == 0 {
        return None;
    }
    let p = p_sum / pairs as f64;
    let r = r_sum / pairs as f64;
    let f1 = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    Some((p, r, f1, ap_sum / pairs as f64, pairs))
}
