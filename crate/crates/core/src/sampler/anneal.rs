use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Compiled, SampleSet};
use crate::error::{Error, Result};
use crate::qubo::QuboInstance;
use crate::scalar::Scalar;

const PROBE_FLIPS: usize = 100;
/// Acceptance probability of the smallest uphill move at the final temperature.
const FINAL_ACCEPTANCE: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Schedule {
    /// Start at the largest single-flip |ΔE| seen on a random-walk probe; end
    /// where the smallest nonzero |ΔE| is accepted with probability 0.01.
    Auto,
    Geometric { t_initial: f64, t_final: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum RestartPolicy {
    /// Every read starts from a uniformly random bitstring.
    Random,
    /// Every read starts from the given bitstring.
    Fixed(Vec<u8>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnealParams {
    pub reads: usize,
    pub sweeps: usize,
    pub schedule: Schedule,
    pub seed: u64,
    pub restart: RestartPolicy,
}

impl Default for AnnealParams {
    fn default() -> Self {
        Self { reads: 1000, sweeps: 64, schedule: Schedule::Auto, seed: 0, restart: RestartPolicy::Random }
    }
}

impl AnnealParams {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_reads(mut self, reads: usize) -> Self {
        self.reads = reads;
        self
    }

    pub fn with_sweeps(mut self, sweeps: usize) -> Self {
        self.sweeps = sweeps;
        self
    }

    pub fn validate(&self, k: usize) -> Result<()> {
        if self.reads == 0 || self.sweeps == 0 {
            return Err(Error::InvalidParams("reads and sweeps must be at least 1".into()));
        }
        if let Schedule::Geometric { t_initial, t_final } = self.schedule {
            if !(t_initial > 0.0 && t_final > 0.0 && t_final <= t_initial) {
                return Err(Error::InvalidParams(format!(
                    "temperatures must be positive and non-increasing, got {t_initial} -> {t_final}"
                )));
            }
        }
        if let RestartPolicy::Fixed(y) = &self.restart {
            if y.len() != k {
                return Err(Error::LengthMismatch { expected: k, got: y.len() });
            }
        }
        Ok(())
    }
}

/// Per-read generator: stream 0 is reserved for the temperature probe.
fn read_rng(seed: u64, read: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(read as u64 + 1);
    rng
}

fn auto_temperatures(c: &Compiled, seed: u64) -> (f64, f64) {
    let k = c.k();
    if k == 0 {
        return (1.0, 1.0);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    let mut y: Vec<u8> = (0..k).map(|_| rng.gen_range(0..2)).collect();
    let mut field = c.fields(&y);
    let (mut hi, mut lo) = (0.0f64, f64::INFINITY);
    for _ in 0..PROBE_FLIPS {
        let i = rng.gen_range(0..k);
        let d = c.flip_delta(&y, &field, i).abs();
        hi = hi.max(d);
        if d > 1e-12 {
            lo = lo.min(d);
        }
        c.apply_flip(&mut y, &mut field, i);
    }
    if hi <= 1e-12 {
        return (1.0, 1.0);
    }
    (hi, lo / (1.0 / FINAL_ACCEPTANCE).ln())
}

fn temperatures(t0: f64, t1: f64, sweeps: usize) -> Vec<f64> {
    if sweeps == 1 {
        return vec![t0];
    }
    let ratio = t1 / t0;
    (0..sweeps).map(|s| t0 * ratio.powf(s as f64 / (sweeps - 1) as f64)).collect()
}

/// One read: sequential single-flip Metropolis sweeps; returns the lowest
/// state visited.
fn anneal_read(c: &Compiled, temps: &[f64], init: Option<&[u8]>, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let k = c.k();
    let mut y: Vec<u8> = match init {
        Some(y0) => y0.to_vec(),
        None => (0..k).map(|_| rng.gen_range(0..2)).collect(),
    };
    let mut field = c.fields(&y);
    let mut e = 0.0;
    let mut best_e = 0.0;
    let mut best = y.clone();
    for &t in temps {
        let beta = 1.0 / t;
        for i in 0..k {
            let d = c.flip_delta(&y, &field, i);
            if d <= 0.0 || rng.gen::<f64>() < (-d * beta).exp() {
                c.apply_flip(&mut y, &mut field, i);
                e += d;
            }
        }
        if e <= best_e + 1e-12 {
            best_e = e;
            best.copy_from_slice(&y);
        }
    }
    best
}

/// Simulated annealing under a geometric schedule.
///
/// Reads are independent and seeded by `(seed, read index)`, so results do
/// not depend on how reads are scheduled across threads, and the first `r`
/// reads of a run with `R > r` reads equal a run with `r` reads.
pub fn simulated_annealing<T: Scalar>(
    qubo: &QuboInstance<T>,
    params: &AnnealParams,
) -> Result<SampleSet> {
    let k = qubo.num_variables();
    params.validate(k)?;
    let start = Instant::now();
    let c = Compiled::new(qubo);
    let (t0, t1) = match params.schedule {
        Schedule::Auto => auto_temperatures(&c, params.seed),
        Schedule::Geometric { t_initial, t_final } => (t_initial, t_final),
    };
    let temps = temperatures(t0, t1, params.sweeps);
    let init = match &params.restart {
        RestartPolicy::Random => None,
        RestartPolicy::Fixed(y) => Some(y.as_slice()),
    };
    let reads: Vec<(Vec<u8>, f64)> = (0..params.reads)
        .into_par_iter()
        .map(|r| {
            let mut rng = read_rng(params.seed, r);
            let y = anneal_read(&c, &temps, init, &mut rng);
            let e = c.energy(&y);
            (y, e)
        })
        .collect();
    let mut set = SampleSet::from_reads(reads, "sa", Some(params.seed));
    set.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(set)
}
