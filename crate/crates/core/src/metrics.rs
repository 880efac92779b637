//! Accuracy `μ = 1 - H(y_gt, y) / (d·p)`, gauge alignment and constraint
//! diagnostics.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::problem::MotionProblem;

/// Largest `d` for which [`aligned_accuracy`] enumerates all `d!` relabelings.
pub const MAX_ALIGN_MOTIONS: usize = 6;

fn check_lengths(y: &[u8], y_gt: &[u8], d: usize, p: usize) -> Result<()> {
    for v in [y, y_gt] {
        if v.len() != d * p {
            return Err(Error::LengthMismatch { expected: d * p, got: v.len() });
        }
    }
    Ok(())
}

pub fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

/// Fraction of agreeing entries between two bit assignments.
pub fn accuracy(y: &[u8], y_gt: &[u8], d: usize, p: usize) -> Result<f64> {
    check_lengths(y, y_gt, d, p)?;
    if d * p == 0 {
        return Ok(1.0);
    }
    Ok(1.0 - hamming(y, y_gt) as f64 / (d * p) as f64)
}

/// Relabels motion blocks: block `k` of `y` becomes block `perm[k]`.
pub fn permute_motions(y: &[u8], perm: &[usize], p: usize) -> Vec<u8> {
    let mut out = vec![0; y.len()];
    for (k, &to) in perm.iter().enumerate() {
        out[to * p..(to + 1) * p].copy_from_slice(&y[k * p..(k + 1) * p]);
    }
    out
}

/// Next permutation in lexicographic order; `false` once exhausted.
fn next_permutation(v: &mut [usize]) -> bool {
    let Some(i) = (1..v.len()).rev().find(|&i| v[i - 1] < v[i]) else {
        return false;
    };
    let j = (i..v.len()).rev().find(|&j| v[j] > v[i - 1]).unwrap();
    v.swap(i - 1, j);
    v[i..].reverse();
    true
}

/// Best accuracy over all global motion relabelings of `y`, with the first
/// maximizing permutation in lexicographic order.
pub fn aligned_accuracy(y: &[u8], y_gt: &[u8], d: usize, p: usize) -> Result<(f64, Vec<usize>)> {
    check_lengths(y, y_gt, d, p)?;
    if d > MAX_ALIGN_MOTIONS {
        return Err(Error::InvalidParams(format!(
            "aligned accuracy enumerates d! relabelings; d = {d} exceeds {MAX_ALIGN_MOTIONS}"
        )));
    }
    let mut perm: Vec<usize> = (0..d).collect();
    let mut best = (accuracy(y, y_gt, d, p)?, perm.clone());
    while next_permutation(&mut perm) {
        let acc = accuracy(&permute_motions(y, &perm, p), y_gt, d, p)?;
        if acc > best.0 {
            best = (acc, perm.clone());
        }
    }
    Ok(best)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violations {
    /// Global points whose motion slots do not sum to one.
    pub row_violations: Vec<usize>,
    /// `|column sum - m_ik|` per image and motion, when counts were given.
    pub count_deviations: Option<Vec<Vec<usize>>>,
}

impl Violations {
    pub fn row_count(&self) -> usize {
        self.row_violations.len()
    }

    /// Number of (image, motion) cells with a nonzero deviation.
    pub fn count_violations(&self) -> usize {
        self.count_deviations
            .as_ref()
            .map_or(0, |dev| dev.iter().flatten().filter(|&&v| v != 0).count())
    }

    pub fn is_feasible(&self) -> bool {
        self.row_violations.is_empty() && self.count_violations() == 0
    }
}

pub fn violations(
    y: &[u8],
    problem: &MotionProblem,
    counts: Option<&[Vec<usize>]>,
) -> Result<Violations> {
    let (d, p) = (problem.d(), problem.total_points());
    if y.len() != d * p {
        return Err(Error::LengthMismatch { expected: d * p, got: y.len() });
    }
    let row_violations =
        (0..p).filter(|&a| (0..d).map(|k| y[k * p + a] as usize).sum::<usize>() != 1).collect();
    let count_deviations = match counts {
        None => None,
        Some(counts) => {
            if counts.len() != problem.n() || counts.iter().any(|m| m.len() != d) {
                return Err(Error::InvalidCounts(format!(
                    "expected {} count vectors of length {d}",
                    problem.n()
                )));
            }
            let dev = (0..problem.n())
                .map(|i| {
                    let o = problem.offsets()[i];
                    let pi = problem.point_counts()[i];
                    (0..d)
                        .map(|k| {
                            let col: usize = y[k * p + o..k * p + o + pi].iter().map(|&b| b as usize).sum();
                            col.abs_diff(counts[i][k])
                        })
                        .collect()
                })
                .collect();
            Some(dev)
        }
    };
    Ok(Violations { row_violations, count_deviations })
}

/// Evaluation of one solution against the ground truth.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy_raw: f64,
    pub accuracy_aligned: f64,
    pub permutation: Vec<usize>,
    pub row_violations: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count_violations: Option<usize>,
    pub energy: f64,
    pub feasible: bool,
}

pub fn evaluate(
    y: &[u8],
    y_gt: &[u8],
    problem: &MotionProblem,
    counts: Option<&[Vec<usize>]>,
    energy: f64,
) -> Result<EvalReport> {
    let (d, p) = (problem.d(), problem.total_points());
    let accuracy_raw = accuracy(y, y_gt, d, p)?;
    let (accuracy_aligned, permutation) = aligned_accuracy(y, y_gt, d, p)?;
    let v = violations(y, problem, counts)?;
    Ok(EvalReport {
        accuracy_raw,
        accuracy_aligned,
        permutation,
        row_violations: v.row_count(),
        count_violations: counts.map(|_| v.count_violations()),
        energy,
        feasible: v.is_feasible(),
    })
}
