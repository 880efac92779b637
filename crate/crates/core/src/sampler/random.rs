use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Compiled, SampleSet};
use crate::qubo::QuboInstance;
use crate::scalar::Scalar;

/// Uniformly random bitstrings with their energies; the floor baseline.
pub fn random_sampler<T: Scalar>(qubo: &QuboInstance<T>, reads: usize, seed: u64) -> SampleSet {
    let start = Instant::now();
    let c = Compiled::new(qubo);
    let k = c.k();
    let draws = (0..reads).map(|r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(r as u64 + 1);
        let y: Vec<u8> = (0..k).map(|_| rng.gen_range(0..2)).collect();
        let e = c.energy(&y);
        (y, e)
    });
    let mut set = SampleSet::from_reads(draws, "random", Some(seed));
    set.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    set
}
