use std::collections::BinaryHeap;
use std::time::Instant;

use super::{energy_key, Compiled, SampleSet};
use crate::error::{Error, Result};
use crate::qubo::QuboInstance;
use crate::scalar::Scalar;

/// Largest instance [`brute_force`] will enumerate.
pub const MAX_BRUTE_FORCE_VARIABLES: usize = 26;

/// Exhaustive enumeration of all `2^k` bitstrings in Gray-code order.
///
/// With `keep = Some(t)` only the `t` best bitstrings are retained; otherwise
/// the full energy-sorted set is returned. The first sample is the certified
/// global minimum.
pub fn brute_force<T: Scalar>(qubo: &QuboInstance<T>, keep: Option<usize>) -> Result<SampleSet> {
    let k = qubo.num_variables();
    if k > MAX_BRUTE_FORCE_VARIABLES {
        return Err(Error::SizeGuard { k, max: MAX_BRUTE_FORCE_VARIABLES });
    }
    let start = Instant::now();
    let c = Compiled::new(qubo);
    let mut y = vec![0u8; k];
    let mut field = vec![0.0; k];
    let mut e = c.offset;
    let total: u64 = 1 << k;

    // heap key: (energy bucket, bitstring in lexicographic order); max-heap keeps the worst on top
    let lex = |code: u64| -> u64 {
        if k == 0 {
            0
        } else {
            code.reverse_bits() >> (64 - k)
        }
    };
    let cap = keep.map_or(total as usize, |t| t.min(total as usize));
    let mut heap: BinaryHeap<(i64, u64)> = BinaryHeap::with_capacity(cap + 1);
    let mut code: u64 = 0;
    let offer = |code: u64, e: f64, heap: &mut BinaryHeap<(i64, u64)>| {
        if cap == 0 {
            return;
        }
        let key = (energy_key(e), lex(code));
        if heap.len() < cap {
            heap.push(key);
        } else if key < *heap.peek().unwrap() {
            heap.pop();
            heap.push(key);
        }
    };
    offer(code, e, &mut heap);
    for step in 1..total {
        let i = step.trailing_zeros() as usize;
        e += c.flip_delta(&y, &field, i);
        c.apply_flip(&mut y, &mut field, i);
        code ^= 1 << i;
        offer(code, e, &mut heap);
    }

    let reads = heap.into_iter().map(|(_, lexcode)| {
        let bits: Vec<u8> = (0..k).map(|b| ((lexcode >> (k - 1 - b)) & 1) as u8).collect();
        let energy = c.energy(&bits);
        (bits, energy)
    });
    let mut set = SampleSet::from_reads(reads, "brute", None);
    set.reads = total as usize;
    set.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(set)
}
