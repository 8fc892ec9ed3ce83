//! Per-frame mAP and action-conditional metrics.
//!
//! AP is all-points (no interpolation): frames are ranked by descending
//! score with stable tie-breaking, and precision is accumulated at every
//! positive. Classes with zero test positives are excluded from the mAP
//! mean rather than scored zero; their counts stay in the report.
//!
//! The action-conditional family scores one class on the timesteps where
//! another class is ground-truth-active within ±τ, aggregated as the
//! unweighted mean over ordered class pairs whose condition sets are
//! nonempty and contain at least one positive. The AP ranking pool is
//! conditioned per pair.

use serde::Serialize;

use crate::error::{Error, Result};

/// Pooled predictions for one video: row-major T×C scores and binary labels.
#[derive(Debug, Clone)]
pub struct VideoPredictions {
    pub t: usize,
    pub c: usize,
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl VideoPredictions {
    pub fn new(t: usize, c: usize, scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.len() != t * c || labels.len() != t * c {
            return Err(Error::Contract(format!(
                "predictions need t*c = {} values, got {} scores / {} labels",
                t * c,
                scores.len(),
                labels.len()
            )));
        }
        if labels.iter().any(|l| *l > 1) {
            return Err(Error::Contract("labels must be binary".into()));
        }
        Ok(VideoPredictions { t, c, scores, labels })
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassAp {
    /// None when the class has no positives in the evaluation pool.
    pub ap: Option<f64>,
    pub positives: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct ActionConditional {
    pub tau: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub map: f64,
    /// Ordered class pairs that entered the aggregation.
    pub pairs_evaluated: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct MetricsReport {
    pub per_frame_map: f64,
    pub per_class_ap: Vec<ClassAp>,
    pub action_conditional: Vec<ActionConditional>,
    pub frames: usize,
    pub threshold: f64,
}

/// All-points average precision with stable tie-breaking. Returns `None`
/// when there are no positive labels.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Option<f64> {
    debug_assert_eq!(scores.len(), labels.len());
    let positives = labels.iter().filter(|&&l| l == 1).count();
    if positives == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    // stable: ties keep original order
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (rank0, &idx) in order.iter().enumerate() {
        if labels[idx] == 1 {
            hits += 1;
            ap += hits as f64 / (rank0 + 1) as f64;
        }
    }
    Some(ap / positives as f64)
}

/// Per-class AP over all frames pooled across videos, and their unweighted
/// mean over evaluated classes.
pub fn per_frame_map(videos: &[VideoPredictions]) -> Result<(f64, Vec<ClassAp>, usize)> {
    let c = match videos.first() {
        Some(v) => v.c,
        None => return Err(Error::Metrics("no videos to evaluate".into())),
    };
    if videos.iter().any(|v| v.c != c) {
        return Err(Error::Metrics("class count differs across videos".into()));
    }
    let frames: usize = videos.iter().map(|v| v.t).sum();
    let mut per_class = Vec::with_capacity(c);
    let mut sum = 0.0;
    let mut evaluated = 0usize;
    for class in 0..c {
        let mut scores = Vec::with_capacity(frames);
        let mut labels = Vec::with_capacity(frames);
        for v in videos {
            for t in 0..v.t {
                scores.push(v.scores[t * v.c + class]);
                labels.push(v.labels[t * v.c + class]);
            }
        }
        let positives = labels.iter().filter(|&&l| l == 1).count();
        let ap = average_precision(&scores, &labels);
        if let Some(a) = ap {
            sum += a;
            evaluated += 1;
        }
        per_class.push(ClassAp { ap, positives });
    }
    if evaluated == 0 {
        return Err(Error::Metrics("no class has positive labels".into()));
    }
    Ok((sum / evaluated as f64, per_class, frames))
}

/// Steps of one video where `class` is active somewhere in [t−τ, t+τ].
fn condition_mask(v: &VideoPredictions, class: usize, tau: usize) -> Vec<bool> {
    let mut mask = vec![false; v.t];
    for (t, slot) in mask.iter_mut().enumerate() {
        let lo = t.saturating_sub(tau);
        let hi = (t + tau).min(v.t - 1);
        *slot = (lo..=hi).any(|s| v.labels[s * v.c + class] == 1);
    }
    mask
}

pub fn action_conditional_metrics(
    videos: &[VideoPredictions],
    tau: usize,
    threshold: f64,
) -> Result<ActionConditional> {
    let c = match videos.first() {
        Some(v) => v.c,
        None => return Err(Error::Metrics("no videos to evaluate".into())),
    };
    if !(0.0..1.0).contains(&threshold) || threshold <= 0.0 {
        return Err(Error::Metrics(format!("threshold {threshold} outside (0, 1)")));
    }
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
                let mask = condition_mask(v, conditioning, tau);
                for (t, &conditioned) in mask.iter().enumerate() {
                    if conditioned {
                        scores.push(v.scores[t * v.c + observed]);
                        labels.push(v.labels[t * v.c + observed]);
                    }
                }
            }
            let positives = labels.iter().filter(|&&l| l == 1).count();
            if scores.is_empty() || positives == 0 {
                continue; // excluded, not counted as zero
            }
            let mut tp = 0usize;
            let mut fp = 0usize;
            let mut fn_ = 0usize;
            for (s, l) in scores.iter().zip(labels.iter()) {
                let pred = *s >= threshold;
                match (pred, *l == 1) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
            let precision = if tp + fp > 0 { tp as f64 / (tp + fp) as f64 } else { 0.0 };
            let recall = tp as f64 / (tp + fn_) as f64;
            let ap = average_precision(&scores, &labels).expect("positives checked above");
            p_sum += precision;
            r_sum += recall;
            ap_sum += ap;
            pairs += 1;
        }
    }
    if pairs == 0 {
        return Err(Error::Metrics("no ordered class pair has a usable condition set".into()));
    }
    let precision = p_sum / pairs as f64;
    let recall = r_sum / pairs as f64;
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    };
    Ok(ActionConditional {
        tau,
        precision,
        recall,
        f1,
        map: ap_sum / pairs as f64,
        pairs_evaluated: pairs,
    })
}

/// Full evaluation: per-frame mAP plus action-conditional records at each τ.
pub fn evaluate(
    videos: &[VideoPredictions],
    taus: &[usize],
    threshold: f64,
) -> Result<MetricsReport> {
    let (map, per_class, frames) = per_frame_map(videos)?;
    let mut action_conditional = Vec::with_capacity(taus.len());
    for &tau in taus {
        action_conditional.push(action_conditional_metrics(videos, tau, threshold)?);
    }
    Ok(MetricsReport { per_frame_map: map, per_class_ap: per_class, action_conditional, frames, threshold })
}

impl MetricsReport {
    /// Human-readable report.
    pub fn render_text(&self) -> String {
        use std::fmt::Write;
        let mut out = String::new();
        let _ = writeln!(out, "frames evaluated: {}", self.frames);
        let _ = writeln!(out, "per-frame mAP: {:.4}", self.per_frame_map);
        let _ = writeln!(out, "\nclass  positives  AP");
        for (i, c) in self.per_class_ap.iter().enumerate() {
            match c.ap {
                Some(ap) => {
                    let _ = writeln!(out, "{:<6} {:<10} {:.4}", i, c.positives, ap);
                }
                None => {
                    let _ = writeln!(out, "{:<6} {:<10} (no positives, excluded)", i, c.positives);
                }
            }
        }
        if !self.action_conditional.is_empty() {
            let _ = writeln!(out, "\naction-conditional metrics (threshold {:.2}):", self.threshold);
            let _ = writeln!(out, "tau    P_AC    R_AC    F1_AC   mAP_AC  pairs");
            for ac in &self.action_conditional {
                let _ = writeln!(
                    out,
                    "{:<6} {:.4}  {:.4}  {:.4}  {:.4}  {}",
                    ac.tau, ac.precision, ac.recall, ac.f1, ac.map, ac.pairs_evaluated
                );
            }
        }
        out
    }

    /// Machine-readable flat JSON.
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialization")
    }
}
