//! Seeded K-means over sparse vectors with dense centroids, plus elbow
//! selection of K from an inertia curve.
//!
//! Initialization is greedy k-means++: each new seed is the best (lowest
//! resulting potential) of `2 + ln k` candidates drawn with probability
//! proportional to squared distance. Lloyd iterations then alternate nearest
//! centroid assignment (ties to the lowest index) and mean updates until the
//! assignment is a fixed point or `max_iter` is reached.

use rand::distributions::{Distribution, WeightedIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::KMeansError;
use crate::vectorizer::SparseVector;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KMeansConfig {
    pub k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub tol: f64,
    /// Independent seeded runs; the lowest-inertia one is kept.
    pub restarts: usize,
}

impl KMeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        KMeansConfig {
            k,
            seed,
            ..Default::default()
        }
    }
}

impl Default for KMeansConfig {
    fn default() -> Self {
        KMeansConfig {
            k: 8,
            seed: 42,
            max_iter: 300,
            tol: 1e-4,
            restarts: 10,
        }
    }
}

/// Fitted centroids.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KMeansRepr")]
pub struct KMeansModel {
    pub k: usize,
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
    pub seed: u64,
    pub n_iter: usize,
    pub inertia: f64,
    #[serde(skip)]
    centroid_sq_norms: Vec<f64>,
}

#[derive(Deserialize)]
struct KMeansRepr {
    k: usize,
    dim: usize,
    centroids: Vec<Vec<f64>>,
    seed: u64,
    n_iter: usize,
    inertia: f64,
}

impl TryFrom<KMeansRepr> for KMeansModel {
    type Error = String;

    fn try_from(r: KMeansRepr) -> Result<Self, String> {
        if r.centroids.len() != r.k || r.centroids.iter().any(|c| c.len() != r.dim) {
            return Err(format!("centroid block does not match k = {} and dim = {}", r.k, r.dim));
        }
        if r.centroids.iter().flatten().any(|x| !x.is_finite()) {
            return Err("non-finite centroid coordinate".into());
        }
        KMeansModel::from_centroids(r.centroids, r.seed, r.n_iter, r.inertia).map_err(|e| e.to_string())
    }
}

/// A fitted model together with training-time diagnostics.
#[derive(Debug, Clone)]
pub struct KMeansFit {
    pub model: KMeansModel,
    /// Cluster index of every training point under the final centroids.
    pub labels: Vec<usize>,
    /// Inertia after each assignment step.
    pub inertia_history: Vec<f64>,
    pub converged: bool,
}

impl KMeansModel {
    pub fn from_centroids(centroids: Vec<Vec<f64>>, seed: u64, n_iter: usize, inertia: f64) -> Result<Self, KMeansError> {
        let k = centroids.len();
        if k == 0 {
            return Err(KMeansError::ZeroK);
        }
        let dim = centroids[0].len();
        if let Some(bad) = centroids.iter().find(|c| c.len() != dim) {
            return Err(KMeansError::DimensionMismatch {
                expected: dim,
                found: bad.len(),
            });
        }
        let mut model = KMeansModel {
            k,
            dim,
            centroids,
            seed,
            n_iter,
            inertia,
            centroid_sq_norms: Vec::new(),
        };
        model.refresh_norms();
        Ok(model)
    }

    /// Recomputes cached centroid norms after the centroids change.
    pub fn refresh_norms(&mut self) {
        self.centroid_sq_norms = self.centroids.iter().map(|c| c.iter().map(|x| x * x).sum()).collect();
    }

    fn sq_norm(&self, j: usize) -> f64 {
        match self.centroid_sq_norms.get(j) {
            Some(&n) => n,
            None => self.centroids[j].iter().map(|x| x * x).sum(),
        }
    }

    /// Squared Euclidean distance between `v` and centroid `j`.
    pub fn sq_distance(&self, v: &SparseVector, j: usize) -> f64 {
        sq_dist(v, v.squared_norm(), &self.centroids[j], self.sq_norm(j))
    }

    /// Index of the nearest centroid; ties go to the lowest index.
    pub fn assign(&self, v: &SparseVector) -> Result<usize, KMeansError> {
        if v.dim() != self.dim {
            return Err(KMeansError::DimensionMismatch {
                expected: self.dim,
                found: v.dim(),
            });
        }
        Ok(self.nearest(v, v.squared_norm()).0)
    }

    fn nearest(&self, v: &SparseVector, v_sq: f64) -> (usize, f64) {
        let mut best = (0, f64::INFINITY);
        for j in 0..self.k {
            let d = sq_dist(v, v_sq, &self.centroids[j], self.sq_norm(j));
            if d < best.1 {
                best = (j, d);
            }
        }
        best
    }
}

fn sq_dist(v: &SparseVector, v_sq: f64, c: &[f64], c_sq: f64) -> f64 {
    (v_sq - 2.0 * v.dot_dense(c) + c_sq).max(0.0)
}

fn check_inputs(vectors: &[SparseVector], k: usize) -> Result<usize, KMeansError> {
    if k == 0 {
        return Err(KMeansError::ZeroK);
    }
    if k > vectors.len() {
        return Err(KMeansError::TooManyClusters { k, n: vectors.len() });
    }
    let dim = vectors[0].dim();
    if let Some(bad) = vectors.iter().find(|v| v.dim() != dim) {
        return Err(KMeansError::DimensionMismatch {
            expected: dim,
            found: bad.dim(),
        });
    }
    Ok(dim)
}

/// Fits K-means. With `restarts > 1`, run `r` uses seed `seed + r` and the
/// lowest final inertia wins (earliest run on ties).
pub fn fit(vectors: &[SparseVector], config: &KMeansConfig) -> Result<KMeansFit, KMeansError> {
    let dim = check_inputs(vectors, config.k)?;
    let mut best: Option<KMeansFit> = None;
    for r in 0..config.restarts.max(1) {
        let run = fit_once(vectors, dim, config, config.seed.wrapping_add(r as u64));
        if best.as_ref().is_none_or(|b| run.model.inertia < b.model.inertia) {
            best = Some(run);
        }
    }
    let mut best = best.expect("at least one run");
    best.model.seed = config.seed;
    Ok(best)
}

fn fit_once(vectors: &[SparseVector], dim: usize, config: &KMeansConfig, seed: u64) -> KMeansFit {
    let k = config.k;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sq_norms: Vec<f64> = vectors.iter().map(SparseVector::squared_norm).collect();

    let seeds = kmeans_plus_plus(vectors, &sq_norms, k, &mut rng);
    let centroids: Vec<Vec<f64>> = seeds.iter().map(|&i| vectors[i].to_dense()).collect();
    let mut model = KMeansModel::from_centroids(centroids, seed, 0, 0.0).expect("k >= 1");

    let mut history = Vec::new();
    let mut prev_labels: Option<Vec<usize>> = None;
    let mut converged = false;
    let mut n_iter = 0;
    let mut labels;
    let mut dists;
    loop {
        (labels, dists) = assign_all(&model, vectors, &sq_norms);
        repair_empty(&mut model, vectors, &sq_norms, &mut labels, &mut dists);
        history.push(dists.iter().sum());

        if prev_labels.as_ref() == Some(&labels) {
            converged = true;
            break;
        }
        if n_iter == config.max_iter {
            break;
        }
        let next = means(vectors, &labels, k, dim, &model.centroids);
        let shift = total_shift(&next, &model.centroids);
        model.centroids = next;
        model.refresh_norms();
        n_iter += 1;
        prev_labels = Some(labels);
        // A shift below tol is only accepted once the next assignment
        // confirms it; otherwise Lloyd continues.
        if shift < config.tol {
            log::trace!("centroid shift {shift:e} below tol after {n_iter} iterations");
        }
    }
    model.n_iter = n_iter;
    model.inertia = *history.last().expect("one assignment");
    KMeansFit {
        model,
        labels,
        inertia_history: history,
        converged,
    }
}

fn total_shift(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.iter().zip(y).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt())
        .sum()
}

fn assign_all(model: &KMeansModel, vectors: &[SparseVector], sq_norms: &[f64]) -> (Vec<usize>, Vec<f64>) {
    vectors
        .par_iter()
        .zip(sq_norms.par_iter())
        .map(|(v, &sq)| model.nearest(v, sq))
        .unzip()
}

/// Gives every empty cluster the point currently farthest from its own
/// centroid, taken only from clusters with more than one member.
fn repair_empty(
    model: &mut KMeansModel,
    vectors: &[SparseVector],
    sq_norms: &[f64],
    labels: &mut [usize],
    dists: &mut [f64],
) {
    let mut sizes = vec![0usize; model.k];
    for &l in labels.iter() {
        sizes[l] += 1;
    }
    for j in 0..model.k {
        if sizes[j] > 0 {
            continue;
        }
        let donor = (0..vectors.len())
            .filter(|&i| sizes[labels[i]] > 1)
            .fold(None, |best: Option<usize>, i| match best {
                Some(b) if dists[b] >= dists[i] => Some(b),
                _ => Some(i),
            });
        let Some(i) = donor else { continue };
        sizes[labels[i]] -= 1;
        sizes[j] = 1;
        labels[i] = j;
        dists[i] = 0.0;
        model.centroids[j] = vectors[i].to_dense();
        model.centroid_sq_norms[j] = sq_norms[i];
    }
}

fn means(vectors: &[SparseVector], labels: &[usize], k: usize, dim: usize, previous: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (v, &l) in vectors.iter().zip(labels) {
        counts[l] += 1;
        for &(i, w) in v.entries() {
            sums[l][i] += w;
        }
    }
    sums.into_iter()
        .zip(counts)
        .enumerate()
        .map(|(j, (mut s, c))| {
            if c == 0 {
                return previous[j].clone();
            }
            let n = c as f64;
            s.iter_mut().for_each(|x| *x /= n);
            s
        })
        .collect()
}

fn kmeans_plus_plus(vectors: &[SparseVector], sq_norms: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let n = vectors.len();
    let trials = 2 + (k as f64).ln().floor() as usize;
    let first = rng.gen_range(0..n);
    let mut chosen = vec![first];
    let mut closest = point_sq_dists(vectors, sq_norms, first);

    while chosen.len() < k {
        let potential: f64 = closest.iter().sum();
        let candidates: Vec<usize> = match WeightedIndex::new(&closest) {
            Ok(dist) if potential > 0.0 => (0..trials).map(|_| dist.sample(rng)).collect(),
            // All remaining mass is zero: duplicates everywhere.
            _ => vec![(0..n).find(|i| !chosen.contains(i)).expect("k <= n")],
        };
        let mut best: Option<(usize, f64, Vec<f64>)> = None;
        for c in candidates {
            let to_c = point_sq_dists(vectors, sq_norms, c);
            let updated: Vec<f64> = closest.iter().zip(&to_c).map(|(a, b)| a.min(*b)).collect();
            let pot: f64 = updated.iter().sum();
            if best.as_ref().is_none_or(|b| pot < b.1) {
                best = Some((c, pot, updated));
            }
        }
        let (c, _, updated) = best.expect("at least one candidate");
        chosen.push(c);
        closest = updated;
    }
    chosen
}

fn point_sq_dists(vectors: &[SparseVector], sq_norms: &[f64], center: usize) -> Vec<f64> {
    let dense = vectors[center].to_dense();
    let c_sq = sq_norms[center];
    vectors
        .par_iter()
        .zip(sq_norms.par_iter())
        .map(|(v, &sq)| sq_dist(v, sq, &dense, c_sq))
        .collect()
}

/// One fit per grid value, all with the same seed.
pub fn inertia_curve(
    vectors: &[SparseVector],
    k_grid: &[usize],
    config: &KMeansConfig,
) -> Result<Vec<(usize, f64)>, KMeansError> {
    if k_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(KMeansError::UnsortedGrid);
    }
    let curve: Vec<(usize, f64)> = k_grid
        .iter()
        .map(|&k| fit(vectors, &KMeansConfig { k, ..*config }).map(|f| (k, f.model.inertia)))
        .collect::<Result<_, _>>()?;
    for w in curve.windows(2) {
        if w[1].1 > w[0].1 + 1e-6 {
            log::info!(
                "inertia rose from k={} ({}) to k={} ({}): local optimum",
                w[0].0,
                w[0].1,
                w[1].0,
                w[1].1
            );
        }
    }
    Ok(curve)
}

/// Knee of an inertia curve: the interior point farthest from the chord
/// between the endpoints, measured after scaling both axes to [0, 1].
/// Distances within 1e-12 count as ties and go to the smaller k.
pub fn elbow_select(curve: &[(usize, f64)]) -> Result<usize, KMeansError> {
    if curve.len() < 3 {
        return Err(KMeansError::ShortCurve(curve.len()));
    }
    if curve.windows(2).any(|w| w[0].0 >= w[1].0) {
        return Err(KMeansError::UnsortedGrid);
    }
    let (k0, k1) = (curve[0].0 as f64, curve[curve.len() - 1].0 as f64);
    let (lo, hi) = curve
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &(_, y)| (lo.min(y), hi.max(y)));
    let yspan = if hi > lo { hi - lo } else { 1.0 };
    let scale = |&(k, y): &(usize, f64)| ((k as f64 - k0) / (k1 - k0), (y - lo) / yspan);

    let (ax, ay) = scale(&curve[0]);
    let (bx, by) = scale(&curve[curve.len() - 1]);
    let (dx, dy) = (bx - ax, by - ay);
    let len = (dx * dx + dy * dy).sqrt();

    let mut best = (curve[1].0, f64::NEG_INFINITY);
    for p in &curve[1..curve.len() - 1] {
        let (px, py) = scale(p);
        let dist = (dx * (ay - py) - dy * (ax - px)).abs() / len;
        if dist > best.1 + 1e-12 {
            best = (p.0, dist);
        }
    }
    Ok(best.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pts(raw: &[[f64; 2]]) -> Vec<SparseVector> {
        raw.iter().map(|p| SparseVector::from_dense(p)).collect()
    }

    #[test]
    fn k_equals_n_zero_inertia() {
        let v = pts(&[[0.0, 0.0], [1.0, 0.0], [0.0, 3.0], [5.0, 5.0]]);
        let fit = fit(&v, &KMeansConfig::new(4, 1)).unwrap();
        assert_eq!(fit.model.inertia, 0.0);
        let mut labels = fit.labels.clone();
        labels.sort();
        labels.dedup();
        assert_eq!(labels.len(), 4);
        for (p, &l) in v.iter().zip(&fit.labels) {
            assert_eq!(fit.model.centroids[l], p.to_dense());
        }
    }

    #[test]
    fn k_one_is_mean() {
        // mean (1, 1); squared deviations 1+1, 1+1, 4+0 -> inertia 8
        let v = pts(&[[0.0, 0.0], [2.0, 0.0], [1.0, 3.0]]);
        let fit = fit(&v, &KMeansConfig::new(1, 3)).unwrap();
        let c = &fit.model.centroids[0];
        assert!((c[0] - 1.0).abs() < 1e-12 && (c[1] - 1.0).abs() < 1e-12);
        assert!((fit.model.inertia - 6.0 - 2.0).abs() < 1e-9);
    }

    #[test]
    fn errors() {
        let v = pts(&[[0.0, 0.0]]);
        assert_eq!(fit(&v, &KMeansConfig::new(2, 0)).unwrap_err(), KMeansError::TooManyClusters { k: 2, n: 1 });
        assert_eq!(fit(&v, &KMeansConfig::new(0, 0)).unwrap_err(), KMeansError::ZeroK);
        let mixed = vec![SparseVector::zeros(2), SparseVector::zeros(3)];
        assert!(matches!(fit(&mixed, &KMeansConfig::new(1, 0)), Err(KMeansError::DimensionMismatch { .. })));
    }

    #[test]
    fn assign_rules() {
        let m = KMeansModel::from_centroids(
            vec![vec![1.0, 0.0], vec![5.0, 5.0], vec![0.0, 1.0], vec![3.0, 3.0]],
            0,
            0,
            0.0,
        )
        .unwrap();
        assert_eq!(m.assign(&SparseVector::from_dense(&[3.0, 3.0])).unwrap(), 3);
        assert_eq!(m.assign(&SparseVector::zeros(2)).unwrap(), 0);
        assert_eq!(m.assign(&SparseVector::from_dense(&[0.5, 0.5])).unwrap(), 0);
        assert!(m.assign(&SparseVector::zeros(3)).is_err());
    }

    #[test]
    fn zero_vector_goes_to_smallest_norm_centroid() {
        let m = KMeansModel::from_centroids(vec![vec![2.0, 0.0], vec![0.0, 0.5]], 0, 0, 0.0).unwrap();
        assert_eq!(m.assign(&SparseVector::zeros(2)).unwrap(), 1);
    }

    #[test]
    fn empty_cluster_repair() {
        // Duplicates force k-means++ onto identical seeds; repair must still
        // give every cluster a member.
        let v = pts(&[[1.0, 1.0], [1.0, 1.0], [1.0, 1.0], [9.0, 9.0]]);
        let fit = fit(&v, &KMeansConfig::new(3, 5)).unwrap();
        for j in 0..3 {
            assert!(fit.labels.contains(&j));
        }
    }

    #[test]
    fn elbow_hand_example() {
        let curve = [(1, 100.0), (2, 20.0), (3, 18.0), (4, 17.0)];
        assert_eq!(elbow_select(&curve).unwrap(), 2);
    }

    #[test]
    fn elbow_linear_picks_first_interior() {
        let curve: Vec<(usize, f64)> = (1..=6).map(|k| (k, 60.0 - 10.0 * k as f64)).collect();
        assert_eq!(elbow_select(&curve).unwrap(), 2);
    }

    #[test]
    fn elbow_short_curve() {
        assert_eq!(elbow_select(&[(1, 2.0), (2, 1.0)]), Err(KMeansError::ShortCurve(2)));
    }

    #[test]
    fn serde_roundtrip_keeps_assignments() {
        let v = pts(&[[0.0, 0.0], [0.1, 0.0], [4.0, 4.0], [4.0, 4.2]]);
        let fit = fit(&v, &KMeansConfig::new(2, 9)).unwrap();
        let json = serde_json::to_string(&fit.model).unwrap();
        let back: KMeansModel = serde_json::from_str(&json).unwrap();
        assert_eq!(back, fit.model);
        for p in &v {
            assert_eq!(back.assign(p).unwrap(), fit.model.assign(p).unwrap());
        }
    }
}
