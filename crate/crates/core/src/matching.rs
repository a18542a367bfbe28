//! Inlier preselection for putative 3D feature matches.
//!
//! Each hypothesis takes one match `k0` as reference and expresses both point
//! sets relative to it, which removes the unknown translation. The rotation
//! is then estimated by alternating weighted Procrustes fits with the
//! reweighting `w_k = min(H / d_k, 1)`. The best-supported hypothesis decides
//! which matches are preselected; the rest receive the soft weight
//! `clamp(1 - d_k / (5 H), 0, 1)`.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::geom::{Mat3, Vec3};
use crate::par;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatchError {
    #[error("need at least 2 matches, got {0}")]
    TooFewMatches(usize),
    #[error("reference index {index} out of range for {len} matches")]
    BadReference { index: usize, len: usize },
    #[error("weighted columns span fewer than two dimensions")]
    DegenerateConfiguration,
    #[error("every reference hypothesis was discarded")]
    NoValidHypothesis,
    #[error("invalid preselection config: {0}")]
    InvalidConfig(&'static str),
}

/// Putative matches `(template point, observed point)` with weights.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MatchSet {
    pub pairs: Vec<(Vec3, Vec3)>,
    /// Per-match weight in `[0, 1]`.
    pub weights: Vec<f64>,
    /// Selected by the winning hypothesis; implies a positive weight.
    pub preselected: Vec<bool>,
}

impl MatchSet {
    /// Unit weights, nothing preselected.
    pub fn new(pairs: Vec<(Vec3, Vec3)>) -> Self {
        let n = pairs.len();
        Self {
            pairs,
            weights: alloc::vec![1.0; n],
            preselected: alloc::vec![false; n],
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct RansacConfig {
    /// Distance threshold `H` (mm).
    pub threshold: f64,
    /// Number of reference matches tried.
    pub n_refs: usize,
    /// Rotation/reweight rounds per reference.
    pub n_iters: usize,
    /// Final weight at or above which a match is preselected.
    pub inlier_weight_min: f64,
    /// Hypotheses with `sum(w) < min_support * N` are discarded.
    pub min_support: f64,
    pub seed: u64,
}

impl Default for RansacConfig {
    fn default() -> Self {
        Self {
            threshold: 5.0,
            n_refs: 30,
            n_iters: 10,
            inlier_weight_min: 0.5,
            min_support: 0.2,
            seed: 0,
        }
    }
}

impl RansacConfig {
    pub fn validate(&self) -> Result<(), MatchError> {
        if !(self.threshold > 0.0) {
            return Err(MatchError::InvalidConfig("threshold must be positive"));
        }
        if self.n_refs == 0 || self.n_iters == 0 {
            return Err(MatchError::InvalidConfig("n_refs and n_iters must be at least 1"));
        }
        Ok(())
    }
}

/// Columns `o_k - o_k0` for both sides.
pub fn rectify(matches: &MatchSet, k0: usize) -> Result<(Vec<Vec3>, Vec<Vec3>), MatchError> {
    if matches.len() < 2 {
        return Err(MatchError::TooFewMatches(matches.len()));
    }
    let (a0, b0) = *matches.pairs.get(k0).ok_or(MatchError::BadReference {
        index: k0,
        len: matches.len(),
    })?;
    Ok(matches.pairs.iter().map(|(a, b)| (a - a0, b - b0)).unzip())
}

/// `argmin_R sum_k w_k |s2_k - R s1_k|^2` over proper rotations.
pub fn weighted_rotation(s1: &[Vec3], s2: &[Vec3], weights: &[f64]) -> Result<Mat3, MatchError> {
    let mut m = Mat3::zeros();
    for ((a, b), &w) in s1.iter().zip(s2).zip(weights) {
        if w > 0.0 {
            m += (b * a.transpose()) * w;
        }
    }
    let svd = m.svd(true, true);
    let sv = svd.singular_values;
    let mut sorted = [sv[0], sv[1], sv[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if !(sorted[0] > 0.0) || sorted[1] <= 1e-12 * sorted[0] {
        return Err(MatchError::DegenerateConfiguration);
    }
    let u = svd.u.ok_or(MatchError::DegenerateConfiguration)?;
    let v_t = svd.v_t.ok_or(MatchError::DegenerateConfiguration)?;
    let smallest = (0..3).min_by(|&i, &j| sv[i].total_cmp(&sv[j])).unwrap_or(2);
    let mut d = Mat3::identity();
    if (u * v_t).determinant() < 0.0 {
        d[(smallest, smallest)] = -1.0;
    }
    Ok(u * d * v_t)
}

/// `d_k = |s2_k - R s1_k|`.
pub fn residual_distances(s1: &[Vec3], s2: &[Vec3], rotation: &Mat3) -> Vec<f64> {
    s1.iter().zip(s2).map(|(a, b)| (b - rotation * a).norm()).collect()
}

/// `min(H / d, 1)`, with 1 at `d = 0`.
pub fn reweight_distance(d: f64, threshold: f64) -> f64 {
    if d <= threshold {
        1.0
    } else {
        threshold / d
    }
}

pub fn reweight(s1: &[Vec3], s2: &[Vec3], rotation: &Mat3, threshold: f64) -> Vec<f64> {
    residual_distances(s1, s2, rotation)
        .into_iter()
        .map(|d| reweight_distance(d, threshold))
        .collect()
}

/// `clamp(1 - d / (5 H), 0, 1)`.
pub fn soft_weight(d: f64, threshold: f64) -> f64 {
    (1.0 - d / (5.0 * threshold)).clamp(0.0, 1.0)
}

/// Outcome of one reference match.
#[derive(Debug, Clone, PartialEq)]
pub struct Hypothesis {
    pub reference: usize,
    pub rotation: Mat3,
    pub weights: Vec<f64>,
    pub distances: Vec<f64>,
    pub support: f64,
}

/// Alternates rotation fits and reweighting from uniform weights.
pub fn run_hypothesis(matches: &MatchSet, k0: usize, cfg: &RansacConfig) -> Result<Hypothesis, MatchError> {
    let (s1, s2) = rectify(matches, k0)?;
    let mut weights = alloc::vec![1.0; matches.len()];
    let mut rotation = Mat3::identity();
    for _ in 0..cfg.n_iters {
        rotation = weighted_rotation(&s1, &s2, &weights)?;
        weights = reweight(&s1, &s2, &rotation, cfg.threshold);
    }
    let distances = residual_distances(&s1, &s2, &rotation);
    let support = weights.iter().sum();
    Ok(Hypothesis {
        reference: k0,
        rotation,
        weights,
        distances,
        support,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Preselection {
    pub matches: MatchSet,
    pub hypothesis: Hypothesis,
    /// References tried.
    pub evaluated: usize,
    /// References rejected as degenerate or under-supported.
    pub discarded: usize,
}

/// Reference indices: all matches when fewer than `n_refs`, otherwise a
/// seeded sample without replacement, in ascending order.
pub fn choose_references(n: usize, cfg: &RansacConfig) -> Vec<usize> {
    if n <= cfg.n_refs {
        return (0..n).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut refs = rand::seq::index::sample(&mut rng, n, cfg.n_refs).into_vec();
    refs.sort_unstable();
    refs
}

/// Assigns preselection weights and flags to `matches`.
///
/// Hypotheses are independent and run in parallel; the winner is the largest
/// support, ties going to the lowest reference index.
pub fn preselect_inliers(matches: &MatchSet, cfg: &RansacConfig) -> Result<Preselection, MatchError> {
    cfg.validate()?;
    let n = matches.len();
    if n < 2 {
        return Err(MatchError::NoValidHypothesis);
    }
    let refs = choose_references(n, cfg);
    let results = par::map_indexed(refs.len(), |i| run_hypothesis(matches, refs[i], cfg).ok());
    let min_support = cfg.min_support * n as f64;
    let mut best: Option<Hypothesis> = None;
    let mut discarded = 0;
    for h in results {
        match h {
            Some(h) if h.support >= min_support => {
                if best.as_ref().is_none_or(|b| h.support > b.support) {
                    best = Some(h);
                }
            }
            _ => discarded += 1,
        }
    }
    let hypothesis = best.ok_or(MatchError::NoValidHypothesis)?;
    let mut out = matches.clone();
    for k in 0..n {
        let w = hypothesis.weights[k];
        if w >= cfg.inlier_weight_min {
            out.weights[k] = w;
            out.preselected[k] = true;
        } else {
            out.weights[k] = soft_weight(hypothesis.distances[k], cfg.threshold);
            out.preselected[k] = false;
        }
    }
    Ok(Preselection {
        matches: out,
        hypothesis,
        evaluated: refs.len(),
        discarded,
    })
}
