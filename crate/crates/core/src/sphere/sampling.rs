use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{Point, PointCloud};

/// Draws `n_samples` distinct indices, each draw proportional to the remaining scores.
///
/// Implemented with exponential-race keys `ln(u_i) / s_i` (Efraimidis–Spirakis): sorting
/// the keys in descending order has the same distribution as sequential weighted draws
/// without replacement, and the returned order is that draw order. Points with zero score
/// are never drawn while positive-score points remain; if the positive scores run out the
/// rest is filled uniformly with a warning.
pub fn downsample(scores: &[f64], n_samples: usize, seed: u64) -> Result<Vec<usize>> {
    let n = scores.len();
    if n_samples == 0 || n_samples > n {
        return Err(Error::Size(format!("cannot draw {n_samples} of {n} points")));
    }
    if let Some(i) = scores.iter().position(|s| !(s.is_finite() && *s >= 0.0)) {
        return Err(Error::Numerical(format!("score {i} is negative or non-finite")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let uniforms: Vec<f64> = (0..n).map(|_| 1.0 - rng.random::<f64>()).collect();
    let positive = scores.iter().filter(|s| **s > 0.0).count();
    if positive == 0 {
        log::warn!("all sampling scores are zero; sampling uniformly");
    } else if positive < n_samples {
        log::warn!("only {positive} points have positive score; filling {} uniformly", n_samples - positive);
    }
    // (tier, key): positive scores first, then the zero-score fill ordered by a uniform race.
    let mut keyed: Vec<(u8, f64, usize)> = (0..n)
        .map(|i| {
            let u = uniforms[i];
            if scores[i] > 0.0 {
                (1, u.ln() / scores[i], i)
            } else {
                (0, u.ln(), i)
            }
        })
        .collect();
    keyed.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.total_cmp(&a.1)).then(a.2.cmp(&b.2)));
    Ok(keyed.into_iter().take(n_samples).map(|(_, _, i)| i).collect())
}

/// Affine map followed by ReLU from unit directions to nonnegative confidences.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfidenceMap {
    pub weights: [f64; 3],
    pub bias: f64,
}

impl ConfidenceMap {
    pub fn constant(value: f64) -> Self {
        Self {
            weights: [0.0; 3],
            bias: value,
        }
    }

    pub fn eval(&self, v: &Point) -> f64 {
        (self.weights[0] * v.x + self.weights[1] * v.y + self.weights[2] * v.z + self.bias).max(0.0)
    }
}

/// Confidences of the unit directions from the centroid point to every point.
pub fn attention_scores(cloud: &PointCloud, centroid_index: usize, map: &ConfidenceMap) -> Result<Vec<f64>> {
    if centroid_index >= cloud.len() {
        return Err(Error::Size(format!(
            "centroid {centroid_index} out of range for {} points",
            cloud.len()
        )));
    }
    let m = cloud.point(centroid_index);
    Ok(cloud
        .points()
        .iter()
        .map(|x| {
            let d = x - m;
            let r = d.norm();
            if r == 0.0 {
                0.0
            } else {
                map.eval(&(d / r))
            }
        })
        .collect())
}

/// Subset drawn with [`downsample`] semantics from the attention confidences.
pub fn attention_subset(
    cloud: &PointCloud,
    centroid_index: usize,
    map: &ConfidenceMap,
    n_samples: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    let scores = attention_scores(cloud, centroid_index, map)?;
    downsample(&scores, n_samples, seed)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use std::collections::HashMap;

    #[test]
    fn degenerate_distribution_picks_the_only_positive_score() {
        for seed in 0..20 {
            assert_eq!(downsample(&[0.0, 0.0, 1.0, 0.0], 1, seed).unwrap(), vec![2]);
        }
    }

    #[test]
    fn deterministic_per_seed() {
        let s = [0.3, 1.0, 0.2, 0.7, 0.9, 0.1];
        assert_eq!(downsample(&s, 3, 42).unwrap(), downsample(&s, 3, 42).unwrap());
    }

    #[test]
    fn indices_are_distinct() {
        let s: Vec<f64> = (0..50).map(|i| (i % 7) as f64).collect();
        let mut d = downsample(&s, 40, 1).unwrap();
        d.sort();
        d.dedup();
        assert_eq!(d.len(), 40);
    }

    /// Exact probability of an ordered sequence under sequential weighted draws.
    fn sequence_probability(w: &[f64], seq: &[usize]) -> f64 {
        let mut remaining: f64 = w.iter().sum();
        let mut p = 1.0;
        for &i in seq {
            p *= w[i] / remaining;
            remaining -= w[i];
        }
        p
    }

    fn permutations(items: &[usize], k: usize) -> Vec<Vec<usize>> {
        if k == 0 {
            return vec![vec![]];
        }
        let mut out = vec![];
        for (i, &x) in items.iter().enumerate() {
            let mut rest = items.to_vec();
            rest.remove(i);
            for mut tail in permutations(&rest, k - 1) {
                tail.insert(0, x);
                out.push(tail);
            }
        }
        out
    }

    #[test]
    fn ordered_draws_match_exact_enumeration() {
        let w = [0.5, 1.0, 2.0, 0.25, 1.25];
        let trials = 20000;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for seed in 0..trials {
            *counts.entry(downsample(&w, 2, seed).unwrap()).or_default() += 1;
        }
        let mut chi2 = 0.0;
        let cells = permutations(&[0, 1, 2, 3, 4], 2);
        for seq in &cells {
            let expected = sequence_probability(&w, seq) * trials as f64;
            let observed = *counts.get(seq).unwrap_or(&0) as f64;
            chi2 += (observed - expected).powi(2) / expected;
        }
        // 19 degrees of freedom; 99.9% quantile is about 43.8.
        assert!(chi2 < 43.8, "chi2 = {chi2}");
    }

    #[test]
    fn uniform_scores_make_all_subsets_equiprobable() {
        let w = [1.0; 5];
        let trials = 10000;
        let mut counts: HashMap<Vec<usize>, usize> = HashMap::new();
        for seed in 0..trials {
            let mut s = downsample(&w, 4, seed).unwrap();
            s.sort();
            *counts.entry(s).or_default() += 1;
        }
        assert_eq!(counts.len(), 5);
        let expected = trials as f64 / 5.0;
        let chi2: f64 = counts.values().map(|&o| (o as f64 - expected).powi(2) / expected).sum();
        // 4 degrees of freedom; 99.9% quantile is about 18.5.
        assert!(chi2 < 18.5, "chi2 = {chi2}");
    }

    #[test]
    fn all_zero_scores_fall_back_to_uniform() {
        let d = downsample(&[0.0; 6], 3, 9).unwrap();
        assert_eq!(d.len(), 3);
    }

    #[test]
    fn invalid_requests_are_rejected() {
        assert!(matches!(downsample(&[1.0, 2.0], 3, 0), Err(Error::Size(_))));
        assert!(matches!(downsample(&[1.0, 2.0], 0, 0), Err(Error::Size(_))));
        assert!(matches!(downsample(&[1.0, -2.0], 1, 0), Err(Error::Numerical(_))));
    }

    fn ring_cloud(n: usize) -> PointCloud {
        let mut pts = vec![[0.0, 0.0, 0.0]];
        for i in 0..n {
            let t = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
            pts.push([t.cos(), t.sin(), 0.1 * (i % 3) as f64]);
        }
        PointCloud::from_coords(&pts).unwrap()
    }

    #[test]
    fn zero_score_points_are_excluded() {
        let cloud = ring_cloud(12);
        let map = ConfidenceMap {
            weights: [1.0, 0.0, 0.0],
            bias: 0.0,
        };
        let scores = attention_scores(&cloud, 0, &map).unwrap();
        assert_eq!(scores[0], 0.0);
        let positive = scores.iter().filter(|s| **s > 0.0).count();
        for seed in 0..50 {
            for i in attention_subset(&cloud, 0, &map, positive, seed).unwrap() {
                assert!(cloud.point(i).x > 0.0);
            }
        }
    }

    #[test]
    fn constant_map_gives_equal_scores_except_the_centroid() {
        let cloud = ring_cloud(8);
        let scores = attention_scores(&cloud, 0, &ConfidenceMap::constant(2.0)).unwrap();
        assert_eq!(scores[0], 0.0);
        assert!(scores[1..].iter().all(|s| *s == 2.0));
    }

    #[test]
    fn first_draw_frequencies_match_normalized_scores() {
        let cloud = ring_cloud(20);
        let map = ConfidenceMap {
            weights: [0.4, -0.3, 0.8],
            bias: 0.6,
        };
        let scores = attention_scores(&cloud, 0, &map).unwrap();
        let total: f64 = scores.iter().sum();
        let trials = 10000;
        let mut counts = vec![0usize; scores.len()];
        for seed in 0..trials {
            counts[attention_subset(&cloud, 0, &map, 1, seed).unwrap()[0]] += 1;
        }
        for (c, s) in counts.iter().zip(&scores) {
            let p = s / total;
            let sigma = (trials as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - trials as f64 * p).abs() <= 3.0 * sigma + 1.0);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn draws_are_distinct_and_prefer_positive_scores(scores in prop::collection::vec(prop_oneof![Just(0.0), 0.01f64..5.0], 1..40), k in 1usize..40, seed in 0u64..1000) {
            let k = k.min(scores.len());
            let picked = downsample(&scores, k, seed).unwrap();
            prop_assert_eq!(picked.len(), k);
            let mut sorted = picked.clone();
            sorted.sort_unstable();
            sorted.dedup();
            prop_assert_eq!(sorted.len(), k);
            let positive = scores.iter().filter(|s| **s > 0.0).count();
            let drawn_positive = picked.iter().filter(|&&i| scores[i] > 0.0).count();
            prop_assert_eq!(drawn_positive, k.min(positive));
            prop_assert_eq!(downsample(&scores, k, seed).unwrap(), picked);
        }
    }
}
