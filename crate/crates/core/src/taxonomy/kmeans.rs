//! Seeded k-means (k-means++ seeding, Lloyd iterations).

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use super::TaxonomyError;

pub const DEFAULT_K: usize = 12;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_MAX_ITER: usize = 300;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Vec<Vec<f64>>,
    /// Within-cluster sum of squares after seeding and after every iteration.
    pub inertia_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl KMeansResult {
    pub fn inertia(&self) -> f64 {
        *self.inertia_history.last().expect("history is never empty")
    }
}

pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

pub fn inertia(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &c)| sq_dist(p, &centroids[c]))
        .sum()
}

pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64) -> Result<KMeansResult, TaxonomyError> {
    kmeans_with_cap(points, k, seed, DEFAULT_MAX_ITER)
}

pub fn kmeans_with_cap(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    max_iter: usize,
) -> Result<KMeansResult, TaxonomyError> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(TaxonomyError::Usage(format!("k must lie in 1..={n}, got {k}")));
    }
    let dim = points[0].len();
    if let Some(i) = points.iter().position(|p| p.len() != dim) {
        return Err(TaxonomyError::Usage(format!(
            "vector {i} has dimension {}, expected {dim}",
            points[i].len()
        )));
    }
    if points.iter().flatten().any(|x| !x.is_finite()) {
        return Err(TaxonomyError::Usage("vectors must be finite".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_plus_plus(points, k, &mut rng);
    let mut assignments: Vec<usize> = points.iter().map(|p| nearest(p, &centroids, None)).collect();
    let mut history = vec![inertia(points, &centroids, &assignments)];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < max_iter {
        iterations += 1;
        update_centroids(points, &assignments, &mut centroids);
        let mut changed = false;
        for (p, a) in points.iter().zip(assignments.iter_mut()) {
            let best = nearest(p, &centroids, Some(*a));
            if best != *a {
                *a = best;
                changed = true;
            }
        }
        history.push(inertia(points, &centroids, &assignments));
        if !changed {
            converged = true;
            break;
        }
    }
    if !converged {
        update_centroids(points, &assignments, &mut centroids);
        history.push(inertia(points, &centroids, &assignments));
    }
    Ok(KMeansResult {
        assignments,
        centroids,
        inertia_history: history,
        iterations,
        converged,
    })
}

/// Nearest centroid. Ties go to `current` when given, else the lowest index.
fn nearest(p: &[f64], centroids: &[Vec<f64>], current: Option<usize>) -> usize {
    let mut best = current.unwrap_or(0);
    let mut best_d = sq_dist(p, &centroids[best]);
    for (c, centroid) in centroids.iter().enumerate() {
        let d = sq_dist(p, centroid);
        if d < best_d {
            best = c;
            best_d = d;
        }
    }
    best
}

/// Means of the assigned points; an empty cluster keeps its centroid.
fn update_centroids(points: &[Vec<f64>], assignments: &[usize], centroids: &mut [Vec<f64>]) {
    let dim = centroids[0].len();
    let mut sums = vec![vec![0.0; dim]; centroids.len()];
    let mut counts = vec![0usize; centroids.len()];
    for (p, &a) in points.iter().zip(assignments) {
        counts[a] += 1;
        for (s, x) in sums[a].iter_mut().zip(p) {
            *s += x;
        }
    }
    for ((c, s), n) in centroids.iter_mut().zip(sums).zip(counts) {
        if n > 0 {
            *c = s.into_iter().map(|x| x / n as f64).collect();
        }
    }
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|p| sq_dist(p, &points[first])).collect();
    while centroids.len() < k {
        let next = match WeightedIndex::new(&d2) {
            Ok(dist) => dist.sample(rng),
            // every remaining point duplicates a centroid
            Err(_) => {
                let free: Vec<usize> = (0..n).filter(|&i| !chosen[i]).collect();
                free[rng.random_range(0..free.len())]
            }
        };
        chosen[next] = true;
        centroids.push(points[next].clone());
        for (d, p) in d2.iter_mut().zip(points) {
            *d = d.min(sq_dist(p, &points[next]));
        }
    }
    centroids
}
