//! QUBO solvers and sample-set statistics.
//!
//! All solvers work on an `f64` copy of the instance with the linear part
//! folded onto the diagonal and off-diagonal couplings in adjacency lists.
//! Reported energies are re-evaluated from scratch per bitstring, so they do
//! not carry the drift of incremental updates.

mod anneal;
mod brute;
mod random;

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use anneal::{simulated_annealing, AnnealParams, RestartPolicy, Schedule};
pub use brute::{brute_force, MAX_BRUTE_FORCE_VARIABLES};
pub use random::random_sampler;

use crate::error::{Error, Result};
use crate::problem::{bits_to_string, parse_bitstring};
use crate::qubo::QuboInstance;
use crate::scalar::Scalar;

/// Absolute tolerance for energy comparisons.
pub const ENERGY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub bits: Vec<u8>,
    pub energy: f64,
    pub count: usize,
}

/// Solver output, sorted by energy; ties go to the lexicographically smaller
/// bitstring.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    pub samples: Vec<Sample>,
    pub solver: String,
    pub seed: Option<u64>,
    pub reads: usize,
    pub wall_time_ms: f64,
}

fn energy_key(e: f64) -> i64 {
    (e / ENERGY_TOLERANCE).round() as i64
}

impl SampleSet {
    /// Aggregates raw `(bits, energy)` reads into a sorted set with
    /// multiplicities.
    pub fn from_reads(
        reads: impl IntoIterator<Item = (Vec<u8>, f64)>,
        solver: impl Into<String>,
        seed: Option<u64>,
    ) -> Self {
        let mut agg: BTreeMap<Vec<u8>, (f64, usize)> = BTreeMap::new();
        let mut total = 0;
        for (bits, e) in reads {
            total += 1;
            agg.entry(bits).or_insert((e, 0)).1 += 1;
        }
        let samples =
            agg.into_iter().map(|(bits, (energy, count))| Sample { bits, energy, count }).collect();
        let mut set =
            Self { samples, solver: solver.into(), seed, reads: total, wall_time_ms: 0.0 };
        set.sort();
        set
    }

    fn sort(&mut self) {
        self.samples.sort_by(|a, b| {
            energy_key(a.energy).cmp(&energy_key(b.energy)).then_with(|| a.bits.cmp(&b.bits))
        });
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn total_count(&self) -> usize {
        self.samples.iter().map(|s| s.count).sum()
    }

    pub fn lowest_energy(&self) -> Option<f64> {
        self.samples.first().map(|s| s.energy)
    }

    /// Keeps the `t` best distinct samples.
    pub fn truncate(&mut self, t: usize) {
        self.samples.truncate(t);
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&SampleSetFile::from(self))?)
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        let f: SampleSetFile = serde_json::from_str(s)?;
        let samples = f
            .samples
            .into_iter()
            .map(|s| Ok(Sample { bits: parse_bitstring(&s.y)?, energy: s.energy, count: s.count }))
            .collect::<Result<Vec<_>>>()?;
        let reads = f.reads.unwrap_or_else(|| samples.iter().map(|s| s.count).sum());
        let mut set =
            Self { samples, solver: f.solver, seed: f.seed, reads, wall_time_ms: f.wall_time_ms };
        set.sort();
        Ok(set)
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json_string()?)?;
        Ok(())
    }

    pub fn read_json(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct SampleFile {
    y: String,
    energy: f64,
    count: usize,
}

#[derive(Serialize, Deserialize)]
struct SampleSetFile {
    solver: String,
    seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    reads: Option<usize>,
    samples: Vec<SampleFile>,
    wall_time_ms: f64,
}

impl From<&SampleSet> for SampleSetFile {
    fn from(s: &SampleSet) -> Self {
        Self {
            solver: s.solver.clone(),
            seed: s.seed,
            reads: Some(s.reads),
            samples: s
                .samples
                .iter()
                .map(|x| SampleFile { y: bits_to_string(&x.bits), energy: x.energy, count: x.count })
                .collect(),
            wall_time_ms: s.wall_time_ms,
        }
    }
}

/// Lowest-energy sample; ties go to the lexicographically smaller bitstring.
pub fn best_sample(set: &SampleSet) -> Result<&Sample> {
    set.samples.first().ok_or(Error::EmptySampleSet)
}

/// Fraction of reads whose energy is within tolerance of `reference_energy`
/// or below it.
pub fn success_probability(set: &SampleSet, reference_energy: f64) -> Result<f64> {
    let total = set.total_count();
    if total == 0 {
        return Err(Error::EmptySampleSet);
    }
    let hit: usize = set
        .samples
        .iter()
        .filter(|s| s.energy <= reference_energy + ENERGY_TOLERANCE)
        .map(|s| s.count)
        .sum();
    Ok(hit as f64 / total as f64)
}

/// `f64` form used by the solvers: `E(y) = c + Σ h_i y_i + Σ_{i<j} J_ij y_i y_j`
/// with `h_i = Q_ii + s_i` and `J_ij = 2·Q_ij`.
#[derive(Debug, Clone)]
pub(crate) struct Compiled {
    pub h: Vec<f64>,
    pub nbrs: Vec<Vec<(usize, f64)>>,
    pub offset: f64,
}

impl Compiled {
    pub fn new<T: Scalar>(q: &QuboInstance<T>) -> Self {
        let k = q.num_variables();
        let quad = q.quadratic();
        let h = (0..k).map(|i| quad.get(i, i).as_f64() + q.linear()[i].as_f64()).collect();
        let nbrs = (0..k)
            .map(|i| {
                (0..k)
                    .filter(|&j| j != i)
                    .map(|j| (j, 2.0 * quad.get(i, j).as_f64()))
                    .filter(|&(_, w)| w != 0.0)
                    .collect()
            })
            .collect();
        Self { h, nbrs, offset: q.offset().as_f64() }
    }

    #[inline]
    pub fn k(&self) -> usize {
        self.h.len()
    }

    pub fn energy(&self, y: &[u8]) -> f64 {
        let mut e = self.offset;
        for i in 0..self.k() {
            if y[i] == 1 {
                e += self.h[i];
                for &(j, w) in &self.nbrs[i] {
                    if j > i && y[j] == 1 {
                        e += w;
                    }
                }
            }
        }
        e
    }

    /// `field[i] = Σ_j J_ij y_j`.
    pub fn fields(&self, y: &[u8]) -> Vec<f64> {
        self.nbrs
            .iter()
            .map(|row| row.iter().filter(|&&(j, _)| y[j] == 1).map(|&(_, w)| w).sum())
            .collect()
    }

    /// Energy change of flipping bit `i`.
    #[inline]
    pub fn flip_delta(&self, y: &[u8], field: &[f64], i: usize) -> f64 {
        let d = self.h[i] + field[i];
        if y[i] == 1 {
            -d
        } else {
            d
        }
    }

    #[inline]
    pub fn apply_flip(&self, y: &mut [u8], field: &mut [f64], i: usize) {
        let sign = if y[i] == 1 { -1.0 } else { 1.0 };
        y[i] ^= 1;
        for &(j, w) in &self.nbrs[i] {
            field[j] += sign * w;
        }
    }
}
