//! Multi-instance experiment harness: synthetic configs × noise grid ×
//! instances × solvers, one [`SweepRow`] per (instance, solver).
//!
//! Every cell is seeded from the master seed and its grid position, and rows
//! come back in canonical (config, noise, instance, solver) order, so output
//! does not depend on thread scheduling.

use std::fmt;
use std::str::FromStr;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{aligned_accuracy, evaluate, EvalReport};
use crate::problem::{bits_to_labels, consistency_error, labels_to_bits, MotionProblem};
use crate::qubo::{build, FillMode, PenaltyWeights, QuboInstance, Variant};
use crate::sampler::{
    brute_force, random_sampler, simulated_annealing, AnnealParams, SampleSet, ENERGY_TOLERANCE,
};
use crate::spectral::{spectral_segment, SpectralParams};
use crate::synthetic::{generate_ground_truth, inject_noise, SyntheticConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SolverKind {
    #[serde(rename = "v1-sa")]
    V1Sa,
    #[serde(rename = "v2-sa")]
    V2Sa,
    #[serde(rename = "v1-brute")]
    V1Brute,
    #[serde(rename = "v2-brute")]
    V2Brute,
    #[serde(rename = "synch-like")]
    SynchLike,
    #[serde(rename = "random")]
    Random,
}

impl SolverKind {
    pub const ALL: [SolverKind; 6] = [
        SolverKind::V1Sa,
        SolverKind::V2Sa,
        SolverKind::V1Brute,
        SolverKind::V2Brute,
        SolverKind::SynchLike,
        SolverKind::Random,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SolverKind::V1Sa => "v1-sa",
            SolverKind::V2Sa => "v2-sa",
            SolverKind::V1Brute => "v1-brute",
            SolverKind::V2Brute => "v2-brute",
            SolverKind::SynchLike => "synch-like",
            SolverKind::Random => "random",
        }
    }

    /// QUBO the solver samples (or, for the spectral baseline, is scored on).
    pub fn variant(self) -> Variant {
        match self {
            SolverKind::V2Sa | SolverKind::V2Brute => Variant::V2,
            _ => Variant::V1,
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SolverKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParams(format!("unknown solver {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Instance templates; their `noise` and `seed` are overridden per cell.
    pub configs: Vec<SyntheticConfig>,
    pub noise_grid: Vec<f64>,
    pub instances: usize,
    pub solvers: Vec<SolverKind>,
    #[serde(default)]
    pub weights: PenaltyWeights,
    #[serde(default)]
    pub fill: FillMode,
    pub reads: usize,
    pub sweeps: usize,
    /// Bitstrings retained by brute-force solvers.
    pub brute_keep: usize,
    pub spectral_restarts: usize,
    pub master_seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            configs: vec![SyntheticConfig::new(3, 2, 16), SyntheticConfig::new(4, 2, 16)],
            noise_grid: (0..=10).map(|i| i as f64 * 0.05).collect(),
            instances: 20,
            solvers: vec![SolverKind::V1Sa, SolverKind::V2Sa, SolverKind::SynchLike, SolverKind::Random],
            weights: PenaltyWeights::SYNTHETIC,
            fill: FillMode::Zeroed,
            reads: 1000,
            sweeps: 64,
            brute_keep: 1000,
            spectral_restarts: 10,
            master_seed: 0,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if self.configs.is_empty() || self.noise_grid.is_empty() || self.solvers.is_empty() {
            return Err(Error::InvalidParams("configs, noise grid and solvers must be nonempty".into()));
        }
        if self.instances == 0 || self.reads == 0 || self.sweeps == 0 {
            return Err(Error::InvalidParams("instances, reads and sweeps must be at least 1".into()));
        }
        if let Some(r) = self.noise_grid.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(Error::InvalidParams(format!("noise level {r} outside [0, 1]")));
        }
        Ok(())
    }
}

/// Short label of a synthetic config, e.g. `n3-d2-p16`.
pub fn config_label(c: &SyntheticConfig) -> String {
    let pc = c.point_counts();
    let pts = if pc.windows(2).all(|w| w[0] == w[1]) {
        pc.first().map_or("0".to_string(), |p| p.to_string())
    } else {
        pc.iter().map(|p| p.to_string()).collect::<Vec<_>>().join("_")
    };
    let mut s = format!("n{}-d{}-p{}", c.n, c.d, pts);
    if c.edges.is_some() {
        s.push_str("-sparse");
    }
    s
}

/// Seed for grid position `(tag, a, b, c)`; each coordinate must be < 2^20.
pub fn derive_seed(master: u64, tag: u64, a: usize, b: usize, c: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream((tag << 60) | ((a as u64) << 40) | ((b as u64) << 20) | c as u64);
    rng.next_u64()
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub config: String,
    pub instance: usize,
    pub solver: String,
    pub variant: String,
    pub k: usize,
    pub noise: f64,
    pub seed: u64,
    pub accuracy_raw: Option<f64>,
    pub accuracy_aligned: Option<f64>,
    pub energy: Option<f64>,
    pub consistency_error: Option<u64>,
    pub feasible: Option<bool>,
    pub row_violations: Option<usize>,
    pub success_probability: Option<f64>,
    /// Aligned accuracy averaged over every returned sample, weighted by count.
    pub sample_mean_accuracy: Option<f64>,
    pub wall_time_ms: f64,
    pub error: String,
}

/// Result of one solver on one instance, with the persisted sample set.
#[derive(Debug, Clone)]
pub struct SolverRun {
    pub row: SweepRow,
    pub samples: Option<SampleSet>,
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub config_index: usize,
    pub noise_index: usize,
    pub instance: usize,
    pub problem: MotionProblem,
    pub runs: Vec<SolverRun>,
}

/// Reads/`2^k` fraction of samples within tolerance of the set's lowest energy.
fn success_fraction(set: &SampleSet) -> Option<f64> {
    let best = set.lowest_energy()?;
    let hits: usize = set
        .samples
        .iter()
        .filter(|s| s.energy <= best + ENERGY_TOLERANCE)
        .map(|s| s.count)
        .sum();
    Some(hits as f64 / set.reads.max(1) as f64)
}

/// Scores the best sample of `set` against the ground truth of `problem`.
pub fn evaluate_best(
    problem: &MotionProblem,
    qubo: &QuboInstance<f64>,
    set: &SampleSet,
    variant: Variant,
) -> Result<EvalReport> {
    let gt = problem.ground_truth().ok_or(Error::MissingGroundTruth)?;
    let best = crate::sampler::best_sample(set)?;
    let y_gt = labels_to_bits(gt, problem.d())?;
    let counts = match variant {
        Variant::V2 => Some(problem.ground_truth_counts()?),
        Variant::V1 => None,
    };
    let energy = qubo.energy(&best.bits)?;
    evaluate(&best.bits, &y_gt.bits, problem, counts.as_deref(), energy)
}

fn run_solver(
    problem: &MotionProblem,
    kind: SolverKind,
    cfg: &SweepConfig,
    seed: u64,
) -> Result<SampleSet> {
    let variant = kind.variant();
    let qubo = build(problem, variant, &cfg.weights, cfg.fill, None)?;
    let anneal = AnnealParams::default().with_reads(cfg.reads).with_sweeps(cfg.sweeps).with_seed(seed);
    match kind {
        SolverKind::V1Sa | SolverKind::V2Sa => simulated_annealing(&qubo, &anneal),
        SolverKind::V1Brute | SolverKind::V2Brute => brute_force(&qubo, Some(cfg.brute_keep)),
        SolverKind::Random => Ok(random_sampler(&qubo, cfg.reads, seed)),
        SolverKind::SynchLike => {
            let start = std::time::Instant::now();
            let params = SpectralParams {
                restarts: cfg.spectral_restarts,
                ..SpectralParams::new(problem.d()).with_seed(seed)
            };
            let lab = spectral_segment(problem, &params)?;
            let y = labels_to_bits(&lab, problem.d())?.bits;
            let e = qubo.energy(&y)?;
            let mut set = SampleSet::from_reads([(y, e)], "synch-like", Some(seed));
            set.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            Ok(set)
        }
    }
}

/// Row for `set`, re-derivable from the problem and the sample set alone.
pub fn score_run(
    problem: &MotionProblem,
    kind: SolverKind,
    cfg: &SweepConfig,
    set: &SampleSet,
) -> Result<SweepRowScores> {
    let variant = kind.variant();
    let qubo = build(problem, variant, &cfg.weights, cfg.fill, None)?;
    let report = evaluate_best(problem, &qubo, set, variant)?;
    let best = crate::sampler::best_sample(set)?;
    let cons = bits_to_labels(&crate::problem::BitAssignment::new(best.bits.clone()), problem)
        .ok()
        .map(|lab| consistency_error(problem, &lab));
    let success = match kind {
        SolverKind::SynchLike => None,
        _ => success_fraction(set),
    };
    let sample_mean = sample_mean_accuracy(problem, set)?;
    Ok(SweepRowScores {
        report,
        consistency_error: cons,
        success_probability: success,
        sample_mean_accuracy: Some(sample_mean),
    })
}

/// Count-weighted mean of the aligned accuracy over all samples in `set`.
pub fn sample_mean_accuracy(problem: &MotionProblem, set: &SampleSet) -> Result<f64> {
    let gt = problem.ground_truth().ok_or(Error::MissingGroundTruth)?;
    let y_gt = labels_to_bits(gt, problem.d())?;
    let total = set.total_count();
    if total == 0 {
        return Err(Error::EmptySampleSet);
    }
    let mut acc = 0.0;
    for s in &set.samples {
        let (mu, _) = aligned_accuracy(&s.bits, &y_gt.bits, problem.d(), problem.total_points())?;
        acc += mu * s.count as f64;
    }
    Ok(acc / total as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRowScores {
    pub report: EvalReport,
    pub consistency_error: Option<u64>,
    pub success_probability: Option<f64>,
    pub sample_mean_accuracy: Option<f64>,
}

fn cell_problem(cfg: &SweepConfig, ci: usize, ni: usize, inst: usize) -> Result<MotionProblem> {
    let template = &cfg.configs[ci];
    let gt_seed = derive_seed(cfg.master_seed, 1, ci, inst, 0);
    let noise_seed = derive_seed(cfg.master_seed, 2, ci, inst, ni);
    let base = generate_ground_truth(&SyntheticConfig { noise: 0.0, seed: gt_seed, ..template.clone() })?;
    let id = format!("{}-rho{}-i{}", config_label(template), cfg.noise_grid[ni], inst);
    Ok(inject_noise(&base, cfg.noise_grid[ni], noise_seed, template.noise_side)?
        .with_provenance(Some(id), Some(gt_seed)))
}

/// Runs the full grid. Solver failures are recorded in the row's `error`
/// column; only an invalid config aborts.
pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<CellResult>> {
    cfg.validate()?;
    let cells: Vec<(usize, usize, usize)> = (0..cfg.configs.len())
        .flat_map(|ci| {
            (0..cfg.noise_grid.len()).flat_map(move |ni| (0..cfg.instances).map(move |i| (ci, ni, i)))
        })
        .collect();
    cells
        .into_par_iter()
        .map(|(ci, ni, inst)| {
            let problem = cell_problem(cfg, ci, ni, inst)?;
            let label = config_label(&cfg.configs[ci]);
            let solver_seed = derive_seed(cfg.master_seed, 3, ci, inst, ni);
            let runs = cfg
                .solvers
                .iter()
                .map(|&kind| {
                    let mut row = SweepRow {
                        config: label.clone(),
                        instance: inst,
                        solver: kind.name().to_string(),
                        variant: kind.variant().to_string(),
                        k: problem.num_variables(),
                        noise: cfg.noise_grid[ni],
                        seed: solver_seed,
                        accuracy_raw: None,
                        accuracy_aligned: None,
                        energy: None,
                        consistency_error: None,
                        feasible: None,
                        row_violations: None,
                        success_probability: None,
                        sample_mean_accuracy: None,
                        wall_time_ms: 0.0,
                        error: String::new(),
                    };
                    let outcome = run_solver(&problem, kind, cfg, solver_seed)
                        .and_then(|set| score_run(&problem, kind, cfg, &set).map(|s| (set, s)));
                    match outcome {
                        Ok((set, s)) => {
                            row.accuracy_raw = Some(s.report.accuracy_raw);
                            row.accuracy_aligned = Some(s.report.accuracy_aligned);
                            row.energy = Some(s.report.energy);
                            row.consistency_error = s.consistency_error;
                            row.feasible = Some(s.report.feasible);
                            row.row_violations = Some(s.report.row_violations);
                            row.success_probability = s.success_probability;
                            row.sample_mean_accuracy = s.sample_mean_accuracy;
                            row.wall_time_ms = set.wall_time_ms;
                            SolverRun { row, samples: Some(set) }
                        }
                        Err(e) => {
                            row.error = e.to_string();
                            SolverRun { row, samples: None }
                        }
                    }
                })
                .collect();
            Ok(CellResult { config_index: ci, noise_index: ni, instance: inst, problem, runs })
        })
        .collect()
}

/// Mean and standard deviation per (config, noise, solver).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub config: String,
    pub solver: String,
    pub k: usize,
    pub noise: f64,
    pub instances: usize,
    pub failures: usize,
    pub accuracy_raw_mean: f64,
    pub accuracy_raw_std: f64,
    pub accuracy_aligned_mean: f64,
    pub accuracy_aligned_std: f64,
    pub feasible_rate: f64,
    pub success_probability_mean: Option<f64>,
    pub sample_mean_accuracy_mean: f64,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    if v.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Groups rows by (config, noise, solver) in first-appearance order.
pub fn summarize(rows: &[SweepRow]) -> Vec<SummaryRow> {
    let mut keys: Vec<(String, u64, String)> = Vec::new();
    for r in rows {
        let key = (r.config.clone(), r.noise.to_bits(), r.solver.clone());
        if !keys.contains(&key) {
            keys.push(key);
        }
    }
    keys.into_iter()
        .map(|(config, noise_bits, solver)| {
            let group: Vec<&SweepRow> = rows
                .iter()
                .filter(|r| r.config == config && r.noise.to_bits() == noise_bits && r.solver == solver)
                .collect();
            let ok: Vec<&&SweepRow> = group.iter().filter(|r| r.error.is_empty()).collect();
            let raw: Vec<f64> = ok.iter().filter_map(|r| r.accuracy_raw).collect();
            let aligned: Vec<f64> = ok.iter().filter_map(|r| r.accuracy_aligned).collect();
            let succ: Vec<f64> = ok.iter().filter_map(|r| r.success_probability).collect();
            let per_sample: Vec<f64> = ok.iter().filter_map(|r| r.sample_mean_accuracy).collect();
            let feasible = ok.iter().filter(|r| r.feasible == Some(true)).count();
            let (raw_m, raw_s) = mean_std(&raw);
            let (al_m, al_s) = mean_std(&aligned);
            SummaryRow {
                k: group[0].k,
                noise: f64::from_bits(noise_bits),
                instances: group.len(),
                failures: group.len() - ok.len(),
                accuracy_raw_mean: raw_m,
                accuracy_raw_std: raw_s,
                accuracy_aligned_mean: al_m,
                accuracy_aligned_std: al_s,
                feasible_rate: if ok.is_empty() { f64::NAN } else { feasible as f64 / ok.len() as f64 },
                success_probability_mean: (!succ.is_empty()).then(|| mean_std(&succ).0),
                sample_mean_accuracy_mean: mean_std(&per_sample).0,
                config,
                solver,
            }
        })
        .collect()
}

pub fn rows(cells: &[CellResult]) -> Vec<SweepRow> {
    cells.iter().flat_map(|c| c.runs.iter().map(|r| r.row.clone())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SweepConfig {
        SweepConfig {
            configs: vec![SyntheticConfig::new(2, 2, 3)],
            noise_grid: vec![0.0, 0.2],
            instances: 3,
            solvers: SolverKind::ALL.to_vec(),
            reads: 50,
            sweeps: 16,
            master_seed: 42,
            ..SweepConfig::default()
        }
    }

    #[test]
    fn solver_names_round_trip() {
        for k in SolverKind::ALL {
            assert_eq!(k.name().parse::<SolverKind>().unwrap(), k);
        }
        assert!("mode".parse::<SolverKind>().is_err());
    }

    #[test]
    fn grid_shape_and_order() {
        let cells = run_sweep(&small()).unwrap();
        let rows = rows(&cells);
        assert_eq!(rows.len(), 2 * 3 * 6);
        assert!(rows.iter().all(|r| r.error.is_empty() && r.k == 12));
        assert_eq!(rows[0].solver, "v1-sa");
        assert_eq!(rows[6].instance, 1);
        assert_eq!(rows[18].noise, 0.2);
        // same ground truth across noise levels
        assert_eq!(cells[0].problem.ground_truth(), cells[3].problem.ground_truth());
    }

    #[test]
    fn deterministic_rows() {
        let strip = |mut v: Vec<SweepRow>| {
            v.iter_mut().for_each(|r| r.wall_time_ms = 0.0);
            v
        };
        let a = strip(rows(&run_sweep(&small()).unwrap()));
        let b = strip(rows(&run_sweep(&small()).unwrap()));
        assert_eq!(a, b);
    }

    #[test]
    fn failures_are_recorded_per_row() {
        let cfg = SweepConfig {
            configs: vec![SyntheticConfig::new(2, 2, 7)],
            solvers: vec![SolverKind::V1Brute, SolverKind::V1Sa],
            noise_grid: vec![0.0],
            instances: 1,
            reads: 10,
            ..SweepConfig::default()
        };
        let rows = rows(&run_sweep(&cfg).unwrap());
        assert!(rows[0].error.contains("brute force refused"));
        assert!(rows[1].error.is_empty());
        let s = summarize(&rows);
        assert_eq!(s[0].failures, 1);
        assert!(s[0].accuracy_raw_mean.is_nan());
    }

    #[test]
    fn summary_means_match_rows() {
        let rows = rows(&run_sweep(&small()).unwrap());
        for s in summarize(&rows) {
            let vals: Vec<f64> = rows
                .iter()
                .filter(|r| r.config == s.config && r.noise == s.noise && r.solver == s.solver)
                .map(|r| r.accuracy_aligned.unwrap())
                .collect();
            let mean = vals.iter().sum::<f64>() / vals.len() as f64;
            assert!((mean - s.accuracy_aligned_mean).abs() < 1e-9);
            assert_eq!(s.instances, 3);
        }
    }

    #[test]
    fn mean_std_sample_convention() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
        assert_eq!(mean_std(&[0.5]), (0.5, 0.0));
    }
}
