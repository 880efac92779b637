//! Synthetic instances with label-switching noise.
//!
//! Ground-truth labels are drawn per point; every measured pair `(i, j)` gets
//! `Z_ij = X_i X_jᵀ` from a privately corrupted copy of the labels involved,
//! so edges are corrupted independently of each other.

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::{relative_from_absolute, Labeling, MotionProblem, PartialSegmentation};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PointSpec {
    /// Same number of points in every image, labels drawn uniformly.
    Uniform(usize),
    /// Explicit per-image point counts, labels drawn uniformly.
    PerImage(Vec<usize>),
    /// Exact motion counts `m_i` per image; labels are a seeded shuffle.
    Counts(Vec<Vec<usize>>),
}

/// Which local labels of an edge are eligible for corruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseSide {
    /// `⌊ρ·(p_i + p_j)⌋` points drawn from both images.
    #[default]
    Both,
    /// `⌊ρ·p_j⌋` points drawn from the second image only.
    One,
}

impl std::str::FromStr for NoiseSide {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(Self::Both),
            "one" => Ok(Self::One),
            _ => Err(Error::InvalidParams(format!("unknown noise side {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub d: usize,
    pub points: PointSpec,
    #[serde(default)]
    pub noise: f64,
    #[serde(default)]
    pub noise_side: NoiseSide,
    /// Measured pairs; `None` is the complete graph.
    #[serde(default)]
    pub edges: Option<Vec<(usize, usize)>>,
    #[serde(default)]
    pub seed: u64,
}

impl SyntheticConfig {
    /// Complete graph, uniform labels, no noise.
    pub fn new(n: usize, d: usize, points_per_image: usize) -> Self {
        Self {
            n,
            d,
            points: PointSpec::Uniform(points_per_image),
            noise: 0.0,
            noise_side: NoiseSide::Both,
            edges: None,
            seed: 0,
        }
    }

    pub fn with_noise(mut self, noise: f64) -> Self {
        self.noise = noise;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn point_counts(&self) -> Vec<usize> {
        match &self.points {
            PointSpec::Uniform(c) => vec![*c; self.n],
            PointSpec::PerImage(v) => v.clone(),
            PointSpec::Counts(m) => m.iter().map(|mi| mi.iter().sum()).collect(),
        }
    }

    /// `k = d·p` of the generated instances.
    pub fn num_variables(&self) -> usize {
        self.d * self.point_counts().iter().sum::<usize>()
    }

    fn validate(&self) -> Result<()> {
        if self.n == 0 || self.d == 0 {
            return Err(Error::InvalidParams("n and d must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::InvalidParams(format!("noise {} outside [0, 1]", self.noise)));
        }
        match &self.points {
            PointSpec::Uniform(0) => {
                return Err(Error::InvalidParams("points per image must be positive".into()))
            }
            PointSpec::PerImage(v) if v.len() != self.n || v.contains(&0) => {
                return Err(Error::InvalidParams(format!(
                    "need {} positive point counts, got {v:?}",
                    self.n
                )))
            }
            PointSpec::Counts(m) => {
                if m.len() != self.n || m.iter().any(|mi| mi.len() != self.d) {
                    return Err(Error::InvalidCounts(format!(
                        "need {} count vectors of length {}",
                        self.n, self.d
                    )));
                }
                if m.iter().any(|mi| mi.iter().sum::<usize>() == 0) {
                    return Err(Error::InvalidCounts("every image needs at least one point".into()));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn edge_list(&self) -> Vec<(usize, usize)> {
        match &self.edges {
            Some(e) => e.iter().map(|&(i, j)| (i.min(j), i.max(j))).collect(),
            None => (0..self.n).flat_map(|i| (i + 1..self.n).map(move |j| (i, j))).collect(),
        }
    }
}

/// Noise-free instance: labels drawn from `config.seed`, `Z_ij = X_i X_jᵀ`.
pub fn generate_ground_truth(config: &SyntheticConfig) -> Result<MotionProblem> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let labels: Vec<Vec<usize>> = match &config.points {
        PointSpec::Counts(m) => m
            .iter()
            .map(|mi| {
                let mut l: Vec<usize> =
                    mi.iter().enumerate().flat_map(|(k, &c)| std::iter::repeat_n(k, c)).collect();
                l.shuffle(&mut rng);
                l
            })
            .collect(),
        _ => config
            .point_counts()
            .iter()
            .map(|&c| (0..c).map(|_| rng.gen_range(0..config.d)).collect())
            .collect(),
    };
    let gt = Labeling::new(labels);
    let edges = config
        .edge_list()
        .into_iter()
        .map(|(i, j)| {
            if j >= config.n || i == j {
                return Err(Error::InvalidParams(format!("invalid edge ({i}, {j})")));
            }
            Ok(PartialSegmentation { i, j, z: relative_from_absolute(&gt, i, j) })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MotionProblem::new(config.d, gt.point_counts(), edges, Some(gt))?
        .with_provenance(None, Some(config.seed)))
}

/// Stream id of the per-edge generator; disjoint from stream 0 used for labels.
fn edge_stream(i: usize, j: usize) -> u64 {
    (1 << 62) | ((i as u64) << 31) | j as u64
}

fn corrupt(labels: &mut [usize], count: usize, d: usize, rng: &mut ChaCha8Rng) {
    if d < 2 {
        return;
    }
    for idx in sample(rng, labels.len(), count.min(labels.len())).into_vec() {
        let shift = rng.gen_range(1..d);
        labels[idx] = (labels[idx] + shift) % d;
    }
}

/// Number of local labels switched on an edge with `points` eligible points.
pub fn corruption_count(noise: f64, points: usize) -> usize {
    // the epsilon keeps e.g. 0.29·100 from landing on 28
    (noise * points as f64 + 1e-9).floor() as usize
}

/// Rebuilds every edge from a corrupted copy of the ground-truth labels.
pub fn inject_noise(
    problem: &MotionProblem,
    noise: f64,
    seed: u64,
    side: NoiseSide,
) -> Result<MotionProblem> {
    let gt = problem.ground_truth().ok_or(Error::MissingGroundTruth)?;
    if !(0.0..=1.0).contains(&noise) {
        return Err(Error::InvalidParams(format!("noise {noise} outside [0, 1]")));
    }
    if noise == 0.0 {
        return Ok(problem.clone());
    }
    let d = problem.d();
    let edges = problem
        .edges()
        .iter()
        .map(|e| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(edge_stream(e.i, e.j));
            let mut li = gt.image(e.i).to_vec();
            let mut lj = gt.image(e.j).to_vec();
            match side {
                NoiseSide::Both => {
                    let mut local = [li.as_slice(), lj.as_slice()].concat();
                    let count = corruption_count(noise, local.len());
                    corrupt(&mut local, count, d, &mut rng);
                    lj = local.split_off(li.len());
                    li = local;
                }
                NoiseSide::One => {
                    let count = corruption_count(noise, lj.len());
                    corrupt(&mut lj, count, d, &mut rng);
                }
            }
            let local = Labeling::new(vec![li, lj]);
            PartialSegmentation { i: e.i, j: e.j, z: relative_from_absolute(&local, 0, 1) }
        })
        .collect();
    Ok(problem.with_edges(edges))
}

/// Ground truth followed by `config.noise`, with the noise seeded from `config.seed`.
pub fn generate(config: &SyntheticConfig) -> Result<MotionProblem> {
    let gt = generate_ground_truth(config)?;
    inject_noise(&gt, config.noise, config.seed, config.noise_side)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{consistency_error, BinaryMatrix};

    #[test]
    fn ninety_six_variable_noiseless_instance() {
        let p = generate(&SyntheticConfig::new(3, 2, 16).with_seed(7)).unwrap();
        assert_eq!(p.num_variables(), 96);
        assert_eq!(p.edges().len(), 3);
        assert_eq!(consistency_error(&p, p.ground_truth().unwrap()), 0);
        let p4 = generate(&SyntheticConfig::new(4, 2, 16)).unwrap();
        assert_eq!(p4.num_variables(), 128);
    }

    #[test]
    fn single_motion_gives_all_ones() {
        let p = generate(&SyntheticConfig::new(3, 1, 5).with_noise(0.4)).unwrap();
        for e in p.edges() {
            assert_eq!(e.z, BinaryMatrix::ones(5, 5));
        }
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let cfg = SyntheticConfig::new(4, 3, 6).with_noise(0.3).with_seed(99);
        assert_eq!(generate(&cfg).unwrap(), generate(&cfg).unwrap());
        assert_ne!(generate(&cfg).unwrap(), generate(&cfg.clone().with_seed(98)).unwrap());
    }

    #[test]
    fn zero_noise_is_identity() {
        let p = generate_ground_truth(&SyntheticConfig::new(3, 2, 8).with_seed(1)).unwrap();
        assert_eq!(inject_noise(&p, 0.0, 5, NoiseSide::Both).unwrap(), p);
    }

    #[test]
    fn half_noise_corrupts_sixteen_of_thirty_two() {
        // d = 2: each corrupted local label flips, so the corrupted points are
        // exactly the rows/columns whose pattern changed.
        let p = generate_ground_truth(&SyntheticConfig::new(3, 2, 16).with_seed(3)).unwrap();
        let gt = p.ground_truth().unwrap();
        let noisy = inject_noise(&p, 0.5, 11, NoiseSide::Both).unwrap();
        assert_eq!(corruption_count(0.5, 32), 16);
        for e in noisy.edges() {
            let mut rng = ChaCha8Rng::seed_from_u64(11);
            rng.set_stream(edge_stream(e.i, e.j));
            let mut local = [gt.image(e.i), gt.image(e.j)].concat();
            let before = local.clone();
            corrupt(&mut local, 16, 2, &mut rng);
            let changed = before.iter().zip(&local).filter(|(a, b)| a != b).count();
            assert_eq!(changed, 16);
            let lj = local.split_off(16);
            let want = relative_from_absolute(&Labeling::new(vec![local, lj]), 0, 1);
            assert_eq!(e.z, want);
        }
        assert_eq!(noisy.ground_truth(), p.ground_truth());
    }

    #[test]
    fn corrupted_point_always_changes_motion() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for d in 2..5 {
            let orig: Vec<usize> = (0..40).map(|a| a % d).collect();
            let mut l = orig.clone();
            corrupt(&mut l, 13, d, &mut rng);
            assert_eq!(orig.iter().zip(&l).filter(|(a, b)| a != b).count(), 13);
            assert!(l.iter().all(|&x| x < d));
        }
    }

    #[test]
    fn edges_are_corrupted_independently() {
        let p = generate_ground_truth(&SyntheticConfig::new(4, 2, 6).with_seed(2)).unwrap();
        let a = inject_noise(&p, 0.25, 100, NoiseSide::Both).unwrap();
        // dropping edges from the graph does not change the remaining corruptions
        let sub = p.with_edges(p.edges()[2..].to_vec());
        let b = inject_noise(&sub, 0.25, 100, NoiseSide::Both).unwrap();
        assert_eq!(&a.edges()[2..], b.edges());
    }

    #[test]
    fn one_sided_noise_leaves_first_image() {
        let p = generate_ground_truth(&SyntheticConfig::new(2, 2, 10).with_seed(4)).unwrap();
        let gt = p.ground_truth().unwrap();
        let noisy = inject_noise(&p, 0.3, 8, NoiseSide::One).unwrap();
        let z = &noisy.edges()[0].z;
        // rows of Z are indexed by image-0 points; a flipped image-1 point flips its column
        let clean = relative_from_absolute(gt, 0, 1);
        let flipped_cols = (0..10).filter(|&c| (0..10).any(|r| z.get(r, c) != clean.get(r, c))).count();
        assert_eq!(flipped_cols, 3);
    }

    #[test]
    fn explicit_counts_are_respected() {
        let cfg = SyntheticConfig {
            points: PointSpec::Counts(vec![vec![3, 5], vec![8, 0], vec![1, 1]]),
            ..SyntheticConfig::new(3, 2, 0)
        };
        let p = generate(&cfg).unwrap();
        assert_eq!(p.ground_truth_counts().unwrap(), vec![vec![3, 5], vec![8, 0], vec![1, 1]]);
        let bad = SyntheticConfig { points: PointSpec::Counts(vec![vec![3, 5]]), ..cfg };
        assert!(matches!(generate(&bad), Err(Error::InvalidCounts(_))));
    }

    #[test]
    fn noise_requires_ground_truth() {
        let p = MotionProblem::new(2, vec![1, 1], vec![], None).unwrap();
        assert!(matches!(inject_noise(&p, 0.1, 0, NoiseSide::Both), Err(Error::MissingGroundTruth)));
    }

    #[test]
    fn custom_edge_list() {
        let cfg = SyntheticConfig { edges: Some(vec![(2, 0), (1, 2)]), ..SyntheticConfig::new(3, 2, 4) };
        let p = generate(&cfg).unwrap();
        let pairs: Vec<_> = p.edges().iter().map(|e| (e.i, e.j)).collect();
        assert_eq!(pairs, vec![(0, 2), (1, 2)]);
    }
}
