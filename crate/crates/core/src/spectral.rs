//! Spectral baseline: relaxation of the synchronization objective
//! followed by k-means rounding.
//!
//! The block matrix `Z` approximates the off-diagonal part of `X Xᵀ`, so its
//! `d` leading eigenvectors span (approximately) the columns of `X`. Each
//! point is embedded as its row in that eigenbasis and all points are
//! clustered jointly, which makes the labels globally consistent.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{assemble_block_z, Labeling, MotionProblem};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralParams {
    pub d: usize,
    pub restarts: usize,
    pub max_iter: usize,
    pub seed: u64,
    /// Use `D^{-1/2} Z D^{-1/2}` instead of `Z`.
    #[serde(default)]
    pub normalized: bool,
}

impl SpectralParams {
    pub fn new(d: usize) -> Self {
        Self { d, restarts: 10, max_iter: 100, seed: 0, normalized: false }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn distinct_rows(rows: &[Vec<f64>]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for (i, r) in rows.iter().enumerate() {
        if !out.iter().any(|&j| sq_dist(&rows[j], r) <= 1e-24) {
            out.push(i);
        }
    }
    out
}

fn lloyd(rows: &[Vec<f64>], mut centers: Vec<Vec<f64>>, max_iter: usize) -> (Vec<usize>, f64) {
    let nearest = |r: &[f64], centers: &[Vec<f64>]| -> (usize, f64) {
        centers
            .iter()
            .enumerate()
            .map(|(c, ctr)| (c, sq_dist(r, ctr)))
            .fold((0, f64::INFINITY), |best, cur| if cur.1 < best.1 { cur } else { best })
    };
    let dim = rows.first().map_or(0, Vec::len);
    let mut assign: Vec<usize> = rows.iter().map(|r| nearest(r, &centers).0).collect();
    for _ in 0..max_iter {
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut sizes = vec![0usize; centers.len()];
        for (r, &c) in rows.iter().zip(&assign) {
            sizes[c] += 1;
            for (s, v) in sums[c].iter_mut().zip(r) {
                *s += v;
            }
        }
        for (c, ctr) in centers.iter_mut().enumerate() {
            // an emptied cluster keeps its previous center
            if sizes[c] > 0 {
                *ctr = sums[c].iter().map(|s| s / sizes[c] as f64).collect();
            }
        }
        let next: Vec<usize> = rows.iter().map(|r| nearest(r, &centers).0).collect();
        if next == assign {
            break;
        }
        assign = next;
    }
    let wcss = rows.iter().zip(&assign).map(|(r, &c)| sq_dist(r, &centers[c])).sum();
    (assign, wcss)
}

/// Renumbers clusters in order of first appearance.
fn canonical(assign: &[usize], d: usize) -> Vec<usize> {
    let mut map = vec![usize::MAX; d];
    let mut next = 0;
    assign
        .iter()
        .map(|&c| {
            if map[c] == usize::MAX {
                map[c] = next;
                next += 1;
            }
            map[c]
        })
        .collect()
}

/// Lloyd's k-means from seeded random distinct-row initializations; best of
/// `params.restarts` by within-cluster sum of squares.
pub fn kmeans(rows: &[Vec<f64>], d: usize, params: &SpectralParams) -> Result<Vec<usize>> {
    if d == 0 || params.restarts == 0 {
        return Err(Error::InvalidParams("k-means needs d >= 1 and restarts >= 1".into()));
    }
    let distinct = distinct_rows(rows);
    if distinct.len() < d {
        return Err(Error::DegenerateInput(format!(
            "{} distinct rows for {d} clusters",
            distinct.len()
        )));
    }
    let mut best: Option<(Vec<usize>, f64)> = None;
    for restart in 0..params.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
        rng.set_stream(restart as u64);
        let centers =
            sample(&mut rng, distinct.len(), d).into_iter().map(|i| rows[distinct[i]].clone()).collect();
        let (assign, wcss) = lloyd(rows, centers, params.max_iter);
        if best.as_ref().is_none_or(|b| wcss < b.1 - 1e-12) {
            best = Some((assign, wcss));
        }
    }
    Ok(canonical(&best.unwrap().0, d))
}

/// Spectral segmentation of `problem` into `params.d` motions.
pub fn spectral_segment(problem: &MotionProblem, params: &SpectralParams) -> Result<Labeling> {
    let d = params.d;
    if d == 0 {
        return Err(Error::InvalidParams("d must be at least 1".into()));
    }
    let z = assemble_block_z(problem);
    let p = z.rows();
    if p < d {
        return Err(Error::DegenerateInput(format!("{p} points for {d} motions")));
    }
    let mut m = DMatrix::from_fn(p, p, |a, b| z.get(a, b) as f64);
    if params.normalized {
        let inv_sqrt: Vec<f64> = (0..p)
            .map(|a| {
                let deg: f64 = m.row(a).sum();
                if deg > 0.0 { 1.0 / deg.sqrt() } else { 0.0 }
            })
            .collect();
        for a in 0..p {
            for b in 0..p {
                m[(a, b)] *= inv_sqrt[a] * inv_sqrt[b];
            }
        }
    }
    let eig = SymmetricEigen::try_new(m, f64::EPSILON, 10_000)
        .ok_or_else(|| Error::DegenerateInput("eigen-solver did not converge".into()))?;
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let top = &order[..d];
    let rows: Vec<Vec<f64>> =
        (0..p).map(|a| top.iter().map(|&c| eig.eigenvectors[(a, c)]).collect()).collect();
    let flat = if d == 1 { vec![0; p] } else { kmeans(&rows, d, params)? };
    let labels = problem
        .offsets()
        .iter()
        .zip(problem.point_counts())
        .map(|(&o, &c)| flat[o..o + c].to_vec())
        .collect();
    Ok(Labeling::new(labels))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::aligned_accuracy;
    use crate::problem::labels_to_bits;
    use crate::synthetic::{generate, SyntheticConfig};

    fn aligned(problem: &MotionProblem, lab: &Labeling) -> f64 {
        let y = labels_to_bits(lab, problem.d()).unwrap();
        let gt = labels_to_bits(problem.ground_truth().unwrap(), problem.d()).unwrap();
        aligned_accuracy(&y.bits, &gt.bits, problem.d(), problem.total_points()).unwrap().0
    }

    #[test]
    fn kmeans_separates_two_groups() {
        let rows = vec![
            vec![0.0, 0.1],
            vec![10.0, 10.0],
            vec![0.2, 0.0],
            vec![10.1, 9.9],
            vec![0.1, 0.1],
        ];
        let l = kmeans(&rows, 2, &SpectralParams::new(2)).unwrap();
        assert_eq!(l, vec![0, 1, 0, 1, 0]);
    }

    #[test]
    fn kmeans_single_cluster_and_degenerate() {
        let rows = vec![vec![1.0, 2.0]; 4];
        assert_eq!(kmeans(&rows, 1, &SpectralParams::new(1)).unwrap(), vec![0; 4]);
        assert!(matches!(kmeans(&rows, 2, &SpectralParams::new(2)), Err(Error::DegenerateInput(_))));
    }

    #[test]
    fn kmeans_deterministic() {
        let rows: Vec<Vec<f64>> =
            (0..30).map(|i| vec![(i * 7 % 11) as f64, (i * 3 % 5) as f64]).collect();
        let p = SpectralParams::new(3).with_seed(4);
        assert_eq!(kmeans(&rows, 3, &p).unwrap(), kmeans(&rows, 3, &p).unwrap());
    }

    #[test]
    fn noiseless_recovery() {
        for seed in 0..10 {
            let p = generate(&SyntheticConfig::new(3, 2, 16).with_seed(seed)).unwrap();
            let lab = spectral_segment(&p, &SpectralParams::new(2).with_seed(seed)).unwrap();
            assert!(aligned(&p, &lab) >= 0.95, "seed {seed}");
            let norm = SpectralParams { normalized: true, ..SpectralParams::new(2) };
            let lab = spectral_segment(&p, &norm).unwrap();
            assert!(aligned(&p, &lab) >= 0.95, "normalized, seed {seed}");
        }
    }

    #[test]
    fn single_motion() {
        let p = generate(&SyntheticConfig::new(3, 1, 5)).unwrap();
        let lab = spectral_segment(&p, &SpectralParams::new(1)).unwrap();
        assert_eq!(aligned(&p, &lab), 1.0);
    }

    #[test]
    fn heavy_noise_degrades_accuracy() {
        let mean = |noise: f64| -> f64 {
            (0..10)
                .map(|s| {
                    let p = generate(&SyntheticConfig::new(3, 2, 16).with_noise(noise).with_seed(s)).unwrap();
                    aligned(&p, &spectral_segment(&p, &SpectralParams::new(2)).unwrap())
                })
                .sum::<f64>()
                / 10.0
        };
        assert!(mean(0.5) < mean(0.0));
    }
}
