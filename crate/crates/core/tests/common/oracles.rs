//! Brute-force reference implementations of the ranking measures.
//!
//! Ranks are counted directly from pairwise comparisons: an item ranks above another when its score
//! is higher, or equal with a smaller index.

use listenkit::metrics::ClipScores;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn at_or_above(scores: &[f64], a: usize, b: usize) -> bool {
    scores[a] > scores[b] || (scores[a] == scores[b] && a <= b)
}

pub fn lwlrap(scores: &[Vec<f64>], targets: &[Vec<bool>]) -> f64 {
    let mut sum = 0.0;
    let mut labels = 0usize;
    for (s, t) in scores.iter().zip(targets) {
        for j in (0..s.len()).filter(|&j| t[j]) {
            let rank = (0..s.len()).filter(|&k| at_or_above(s, k, j)).count();
            let hits = (0..s.len())
                .filter(|&k| t[k] && at_or_above(s, k, j))
                .count();
            sum += hits as f64 / rank as f64;
            labels += 1;
        }
    }
    sum / labels as f64
}

/// Mean precision at the rank of each positive.
pub fn average_precision(scores: &[f64], targets: &[bool]) -> Option<f64> {
    let pos: Vec<usize> = (0..scores.len()).filter(|&i| targets[i]).collect();
    if pos.is_empty() {
        return None;
    }
    let total: f64 = pos
        .iter()
        .map(|&j| {
            let rank = (0..scores.len())
                .filter(|&k| at_or_above(scores, k, j))
                .count();
            let hits = pos.iter().filter(|&&k| at_or_above(scores, k, j)).count();
            hits as f64 / rank as f64
        })
        .sum();
    Some(total / pos.len() as f64)
}

/// Area under the step precision-recall curve swept over every cut-off of the ranked list.
pub fn step_auprc(scores: &[f64], targets: &[bool]) -> Option<f64> {
    let positives = targets.iter().filter(|&&t| t).count();
    if positives == 0 {
        return None;
    }
    let mut area = 0.0;
    let mut prev_recall = 0.0;
    for cut in 1..=scores.len() {
        let chosen: Vec<usize> = (0..scores.len())
            .filter(|&i| {
                (0..scores.len())
                    .filter(|&k| at_or_above(scores, k, i))
                    .count()
                    <= cut
            })
            .collect();
        let tp = chosen.iter().filter(|&&i| targets[i]).count();
        let recall = tp as f64 / positives as f64;
        area += (recall - prev_recall) * tp as f64 / cut as f64;
        prev_recall = recall;
    }
    Some(area)
}

pub struct Instance {
    pub scores: Vec<Vec<f64>>,
    pub targets: Vec<Vec<bool>>,
}

impl Instance {
    pub fn clip_scores(&self) -> ClipScores {
        let k = self.scores[0].len();
        ClipScores::new(
            self.scores.len(),
            k,
            self.scores.concat(),
            self.targets.concat(),
        )
        .unwrap()
    }

    pub fn column(&self, j: usize) -> (Vec<f64>, Vec<bool>) {
        (
            self.scores.iter().map(|r| r[j]).collect(),
            self.targets.iter().map(|r| r[j]).collect(),
        )
    }
}

/// Random instance with `N ≤ 20`, `K ≤ 8` and at least one positive. Odd seeds draw scores from
/// five levels so that ties are common.
pub fn random_instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=20);
    let k = rng.gen_range(1..=8);
    let tied = seed % 2 == 1;
    let scores = (0..n)
        .map(|_| {
            (0..k)
                .map(|_| {
                    if tied {
                        rng.gen_range(0..5) as f64 / 4.0
                    } else {
                        rng.gen::<f64>()
                    }
                })
                .collect()
        })
        .collect();
    let mut targets: Vec<Vec<bool>> = (0..n)
        .map(|_| (0..k).map(|_| rng.gen_bool(0.35)).collect())
        .collect();
    if targets.iter().flatten().all(|t| !t) {
        let (i, j) = (rng.gen_range(0..n), rng.gen_range(0..k));
        targets[i][j] = true;
    }
    Instance { scores, targets }
}
