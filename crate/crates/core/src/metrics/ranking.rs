//! Clip-level ranking and thresholded measures.
//!
//! Rankings sort scores in descending order; equal scores keep their index order, so results are
//! deterministic in the presence of ties.

use std::cmp::Ordering;

use crate::error::{Error, Result};

/// Scores and binary targets for `n` clips and `k` classes, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipScores {
    n: usize,
    k: usize,
    scores: Vec<f64>,
    targets: Vec<bool>,
    logits: bool,
}

impl ClipScores {
    /// Probability scores in `[0, 1]`.
    pub fn new(n: usize, k: usize, scores: Vec<f64>, targets: Vec<bool>) -> Result<Self> {
        if scores.len() != n * k || targets.len() != n * k {
            return Err(Error::Shape(format!(
                "{n}×{k} clip scores need {} scores and targets, got {} and {}",
                n * k,
                scores.len(),
                targets.len()
            )));
        }
        if scores.iter().any(|s| s.is_nan()) {
            return Err(Error::Numeric("NaN clip score".into()));
        }
        Ok(Self {
            n,
            k,
            scores,
            targets,
            logits: false,
        })
    }

    /// Raw logits; thresholded measures apply a sigmoid first.
    pub fn from_logits(n: usize, k: usize, logits: Vec<f64>, targets: Vec<bool>) -> Result<Self> {
        Ok(Self {
            logits: true,
            ..Self::new(n, k, logits, targets)?
        })
    }

    pub fn n_clips(&self) -> usize {
        self.n
    }

    pub fn n_classes(&self) -> usize {
        self.k
    }

    pub fn score(&self, i: usize, j: usize) -> f64 {
        self.scores[i * self.k + j]
    }

    pub fn target(&self, i: usize, j: usize) -> bool {
        self.targets[i * self.k + j]
    }

    fn probability(&self, i: usize, j: usize) -> f64 {
        let s = self.score(i, j);
        if self.logits {
            1.0 / (1.0 + (-s).exp())
        } else {
            s
        }
    }

    /// Rolls fine classes up to coarse ones by taking the maximum score and OR of targets.
    pub fn coarse(&self, taxonomy: &Taxonomy) -> Result<ClipScores> {
        if taxonomy.n_fine() != self.k {
            return Err(Error::Shape(format!(
                "taxonomy maps {} fine classes, scores have {}",
                taxonomy.n_fine(),
                self.k
            )));
        }
        let kc = taxonomy.n_coarse();
        let mut scores = vec![f64::NEG_INFINITY; self.n * kc];
        let mut targets = vec![false; self.n * kc];
        for i in 0..self.n {
            for (j, &c) in taxonomy.fine_to_coarse.iter().enumerate() {
                let s = &mut scores[i * kc + c];
                *s = s.max(self.score(i, j));
                targets[i * kc + c] |= self.target(i, j);
            }
        }
        Ok(ClipScores {
            n: self.n,
            k: kc,
            scores,
            targets,
            logits: self.logits,
        })
    }
}

/// Fine-to-coarse class map of a hierarchical label set.
#[derive(Debug, Clone, PartialEq)]
pub struct Taxonomy {
    fine_to_coarse: Vec<usize>,
    n_coarse: usize,
}

impl Taxonomy {
    /// Every coarse index from 0 to the maximum must be used by at least one fine class.
    pub fn new(fine_to_coarse: Vec<usize>) -> Result<Self> {
        let n_coarse = fine_to_coarse.iter().max().map_or(0, |m| m + 1);
        let mut used = vec![false; n_coarse];
        for &c in &fine_to_coarse {
            used[c] = true;
        }
        if let Some(c) = used.iter().position(|u| !u) {
            return Err(Error::InvalidInput(format!(
                "coarse class {c} has no fine class"
            )));
        }
        Ok(Self {
            fine_to_coarse,
            n_coarse,
        })
    }

    pub fn n_fine(&self) -> usize {
        self.fine_to_coarse.len()
    }

    pub fn n_coarse(&self) -> usize {
        self.n_coarse
    }

    pub fn coarse_of(&self, fine: usize) -> usize {
        self.fine_to_coarse[fine]
    }
}

fn descending(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(Ordering::Equal));
    order
}

/// Step-wise average precision of one ranked list; `None` without positives.
fn ranked_precision(scores: &[f64], targets: &[bool]) -> Option<f64> {
    let positives = targets.iter().filter(|&&t| t).count();
    if positives == 0 {
        return None;
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, &i) in descending(scores).iter().enumerate() {
        if targets[i] {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Some(sum / positives as f64)
}

/// Mean over classes of per-class recall; classes absent from the reference are skipped.
pub fn accuracy_classwise(predicted: &[usize], truth: &[usize], k: usize) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::Shape(format!(
            "{} predictions for {} references",
            predicted.len(),
            truth.len()
        )));
    }
    let mut total = vec![0usize; k];
    let mut correct = vec![0usize; k];
    for (&p, &t) in predicted.iter().zip(truth) {
        if t >= k || p >= k {
            return Err(Error::InvalidInput(format!(
                "class index out of range 0..{k}"
            )));
        }
        total[t] += 1;
        correct[t] += usize::from(p == t);
    }
    let recalls: Vec<f64> = (0..k)
        .filter(|&c| total[c] > 0)
        .map(|c| correct[c] as f64 / total[c] as f64)
        .collect();
    if recalls.is_empty() {
        return Err(Error::InvalidInput("empty reference".into()));
    }
    Ok(recalls.iter().sum::<f64>() / recalls.len() as f64)
}

/// Label-weighted label-ranking average precision.
///
/// Every positive label in the corpus carries equal weight: for each one, the precision of the
/// clip's label ranking down to that label is averaged. Clips without positives contribute nothing.
pub fn lwlrap(c: &ClipScores) -> Result<f64> {
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..c.n {
        let row = &c.scores[i * c.k..(i + 1) * c.k];
        let tgt = &c.targets[i * c.k..(i + 1) * c.k];
        let mut hits = 0usize;
        for (rank, &j) in descending(row).iter().enumerate() {
            if tgt[j] {
                hits += 1;
                sum += hits as f64 / (rank + 1) as f64;
            }
        }
        count += hits;
    }
    if count == 0 {
        return Err(Error::InvalidInput(
            "lwLRAP needs at least one positive label".into(),
        ));
    }
    Ok(sum / count as f64)
}

/// Per-class average precision over clips; `None` for classes with no positive clip.
pub fn average_precision(c: &ClipScores) -> Vec<Option<f64>> {
    (0..c.k)
        .map(|j| {
            let s: Vec<f64> = (0..c.n).map(|i| c.score(i, j)).collect();
            let t: Vec<bool> = (0..c.n).map(|i| c.target(i, j)).collect();
            ranked_precision(&s, &t)
        })
        .collect()
}

/// Unweighted mean of the defined per-class APs.
pub fn mean_average_precision(c: &ClipScores) -> Result<f64> {
    mean_defined(&average_precision(c))
}

fn mean_defined(values: &[Option<f64>]) -> Result<f64> {
    let defined: Vec<f64> = values.iter().flatten().copied().collect();
    if defined.is_empty() {
        return Err(Error::InvalidInput(
            "no class has a positive example".into(),
        ));
    }
    Ok(defined.iter().sum::<f64>() / defined.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    /// One curve over all (clip, class) pairs.
    Micro,
    /// Mean of per-class areas.
    Macro,
}

/// Area under the precision-recall curve by the step estimator, optionally after a coarse roll-up.
pub fn auprc(c: &ClipScores, averaging: Averaging, taxonomy: Option<&Taxonomy>) -> Result<f64> {
    let rolled;
    let c = match taxonomy {
        Some(t) => {
            rolled = c.coarse(t)?;
            &rolled
        }
        None => c,
    };
    match averaging {
        Averaging::Micro => ranked_precision(&c.scores, &c.targets)
            .ok_or_else(|| Error::InvalidInput("no positive example".into())),
        Averaging::Macro => mean_defined(&average_precision(c)),
    }
}

/// Counts of a binary decision problem.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counts {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Counts {
    /// `2TP / (2TP + FP + FN)`, zero when nothing is positive on either side.
    pub fn f1(&self) -> f64 {
        let d = 2 * self.tp + self.fp + self.fn_;
        if d == 0 {
            0.0
        } else {
            2.0 * self.tp as f64 / d as f64
        }
    }
}

/// F1 over all (clip, class) decisions after thresholding probabilities.
pub fn micro_f1(c: &ClipScores, threshold: f64) -> f64 {
    let mut counts = Counts::default();
    for i in 0..c.n {
        for j in 0..c.k {
            match (c.probability(i, j) >= threshold, c.target(i, j)) {
                (true, true) => counts.tp += 1,
                (true, false) => counts.fp += 1,
                (false, true) => counts.fn_ += 1,
                (false, false) => {}
            }
        }
    }
    counts.f1()
}
