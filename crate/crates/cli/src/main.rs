use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use sha2::{Digest, Sha256};

use mseg::metrics::{evaluate, EvalReport};
use mseg::problem::{labels_to_bits, BitAssignment};
use mseg::qubo::{build, FillMode, PenaltyWeights, Variant};
use mseg::sampler::{best_sample, brute_force, random_sampler, simulated_annealing, AnnealParams};
use mseg::spectral::{spectral_segment, SpectralParams};
use mseg::sweep::{rows, run_sweep, summarize, SolverKind, SweepConfig};
use mseg::synthetic::{generate, NoiseSide, PointSpec, SyntheticConfig};
use mseg::{MotionProblem, SampleSet};

const WORKERS_ENV: &str = "MSEG_WORKERS";

#[derive(Parser)]
#[command(name = "mseg", version, about = "Motion segmentation as binary-matrix synchronization over QUBOs")]
struct Cli {
    /// Worker threads for parallel reads and sweep cells.
    #[arg(long, global = true, env = WORKERS_ENV)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic problem files.
    Generate(GenerateArgs),
    /// Compile a problem file into a QUBO file.
    Build(BuildArgs),
    /// Solve a problem and write the sample set.
    Solve(SolveArgs),
    /// Score the best sample of a sample set against the ground truth.
    Eval(EvalArgs),
    /// Run a noise sweep and write per-row and summary CSVs.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Preset {
    Synthetic,
    Dataset,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Sa,
    Brute,
    Random,
    Synch,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    /// Points per image.
    #[arg(long, conflicts_with = "point_list")]
    points: Option<usize>,
    /// Comma-separated points per image.
    #[arg(long, value_delimiter = ',')]
    point_list: Option<Vec<usize>>,
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value = "both")]
    noise_side: NoiseSide,
    #[arg(long, default_value_t = 1)]
    instances: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ModelArgs {
    #[arg(long, default_value = "v1")]
    variant: Variant,
    #[arg(long, default_value = "zeroed")]
    fill: FillMode,
    /// Penalty weight defaults.
    #[arg(long, value_enum, default_value = "dataset")]
    preset: Preset,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    /// Motion counts per image for v2, e.g. `10,6;9,7`. Defaults to the ground truth.
    #[arg(long)]
    counts: Option<String>,
}

impl ModelArgs {
    fn weights(&self) -> PenaltyWeights {
        let base = match self.preset {
            Preset::Synthetic => PenaltyWeights::SYNTHETIC,
            Preset::Dataset => PenaltyWeights::DATASET,
        };
        PenaltyWeights {
            lambda1: self.lambda1.unwrap_or(base.lambda1),
            lambda2: self.lambda2.unwrap_or(base.lambda2),
            lambda3: self.lambda3.unwrap_or(base.lambda3),
        }
    }

    fn counts(&self) -> anyhow::Result<Option<Vec<Vec<usize>>>> {
        self.counts.as_deref().map(parse_counts).transpose()
    }
}

#[derive(Args)]
struct BuildArgs {
    problem: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SolveArgs {
    problem: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, value_enum, default_value = "sa")]
    solver: SolverArg,
    #[arg(long, default_value_t = 1000)]
    reads: usize,
    #[arg(long, default_value_t = 64)]
    sweeps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Bitstrings kept by the brute-force solver.
    #[arg(long, default_value_t = 1000)]
    keep: usize,
    /// Also evaluate the best sample and print the report.
    #[arg(long)]
    eval: bool,
    /// Sample-set output; the evaluation report goes next to it.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct EvalArgs {
    problem: PathBuf,
    samples: PathBuf,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// JSON sweep config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Image counts, one config per value.
    #[arg(long, value_delimiter = ',')]
    n: Option<Vec<usize>>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    points: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    noise_grid: Option<Vec<f64>>,
    #[arg(long)]
    instances: Option<usize>,
    /// Comma-separated: v1-sa, v2-sa, v1-brute, v2-brute, synch-like, random.
    #[arg(long, value_delimiter = ',')]
    solvers: Option<Vec<SolverKind>>,
    #[arg(long)]
    fill: Option<FillMode>,
    /// Penalty weight defaults.
    #[arg(long, value_enum, default_value = "synthetic")]
    preset: Preset,
    #[arg(long)]
    lambda1: Option<f64>,
    #[arg(long)]
    lambda2: Option<f64>,
    #[arg(long)]
    lambda3: Option<f64>,
    #[arg(long)]
    reads: Option<usize>,
    #[arg(long)]
    sweeps: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Per-row CSV.
    #[arg(long)]
    out: PathBuf,
    /// Summary CSV; defaults to `<out stem>.summary.csv`.
    #[arg(long)]
    summary: Option<PathBuf>,
    /// Directory for per-cell problem and sample-set files.
    #[arg(long)]
    artifacts: Option<PathBuf>,
    /// Write 0 in the timing column so reruns are byte-identical.
    #[arg(long)]
    omit_timing: bool,
}

fn parse_counts(s: &str) -> anyhow::Result<Vec<Vec<usize>>> {
    s.split(';')
        .map(|img| {
            img.split(',')
                .map(|c| c.trim().parse::<usize>().with_context(|| format!("bad count {c:?}")))
                .collect()
        })
        .collect()
}

fn write_text(path: &Path, text: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn read_problem(path: &Path) -> anyhow::Result<MotionProblem> {
    MotionProblem::read_json(path).with_context(|| format!("reading {}", path.display()))
}

fn config_hash(cfg: &SyntheticConfig) -> String {
    let digest = Sha256::digest(serde_json::to_vec(cfg).expect("config serializes"));
    format!("{digest:x}")[..12].to_string()
}

fn cmd_generate(a: GenerateArgs) -> anyhow::Result<()> {
    let points = match (a.points, a.point_list) {
        (Some(p), None) => PointSpec::Uniform(p),
        (None, Some(list)) => PointSpec::PerImage(list),
        _ => bail!(mseg::Error::InvalidParams("give --points or --point-list".into())),
    };
    let template = SyntheticConfig {
        points,
        noise: a.noise,
        noise_side: a.noise_side,
        seed: a.seed,
        ..SyntheticConfig::new(a.n, a.d, 0)
    };
    let hash = config_hash(&template);
    fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    let mut stdout = std::io::stdout().lock();
    for idx in 0..a.instances {
        let seed = a.seed.wrapping_add(idx as u64);
        let problem = generate(&template.clone().with_seed(seed))?
            .with_provenance(Some(format!("{hash}-{idx:03}")), Some(seed));
        let path = a.out.join(format!("{hash}-{idx:03}.json"));
        problem.write_json(&path)?;
        writeln!(stdout, "{}\tk={}\tseed={seed}", path.display(), problem.num_variables())?;
    }
    Ok(())
}

fn cmd_build(a: BuildArgs) -> anyhow::Result<()> {
    let problem = read_problem(&a.problem)?;
    let counts = a.model.counts()?;
    let qubo = build(&problem, a.model.variant, &a.model.weights(), a.model.fill, counts.as_deref())?;
    qubo.write_json(&a.out)?;
    println!("{}\tk={}\tvariant={}", a.out.display(), qubo.num_variables(), a.model.variant);
    Ok(())
}

fn report_for(
    problem: &MotionProblem,
    model: &ModelArgs,
    set: &SampleSet,
) -> anyhow::Result<EvalReport> {
    let gt = problem.ground_truth().ok_or(mseg::Error::MissingGroundTruth)?;
    let counts = match model.variant {
        Variant::V1 => None,
        Variant::V2 => Some(model.counts()?.map_or_else(|| problem.ground_truth_counts(), Ok)?),
    };
    let qubo = build(problem, model.variant, &model.weights(), model.fill, counts.as_deref())?;
    let best = best_sample(set)?;
    let y_gt = labels_to_bits(gt, problem.d())?;
    Ok(evaluate(&best.bits, &y_gt.bits, problem, counts.as_deref(), qubo.energy(&best.bits)?)?)
}

#[derive(Serialize)]
struct SolveSummary<'a> {
    solver: &'a str,
    k: usize,
    best_energy: f64,
    best: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    report: Option<EvalReport>,
}

fn cmd_solve(a: SolveArgs) -> anyhow::Result<()> {
    let problem = read_problem(&a.problem)?;
    let counts = a.model.counts()?;
    let qubo = build(&problem, a.model.variant, &a.model.weights(), a.model.fill, counts.as_deref())?;
    let set = match a.solver {
        SolverArg::Sa => {
            let params = AnnealParams::default().with_reads(a.reads).with_sweeps(a.sweeps).with_seed(a.seed);
            simulated_annealing(&qubo, &params)?
        }
        SolverArg::Brute => brute_force(&qubo, Some(a.keep))?,
        SolverArg::Random => random_sampler(&qubo, a.reads, a.seed),
        SolverArg::Synch => {
            let start = std::time::Instant::now();
            let lab = spectral_segment(&problem, &SpectralParams::new(problem.d()).with_seed(a.seed))?;
            let y = labels_to_bits(&lab, problem.d())?.bits;
            let e = qubo.energy(&y)?;
            let mut set = SampleSet::from_reads([(y, e)], "synch-like", Some(a.seed));
            set.wall_time_ms = start.elapsed().as_secs_f64() * 1e3;
            set
        }
    };
    set.write_json(&a.out)?;
    let best = best_sample(&set)?;
    let report = if a.eval { Some(report_for(&problem, &a.model, &set)?) } else { None };
    if let Some(r) = &report {
        write_text(&a.out.with_extension("report.json"), &serde_json::to_string_pretty(r)?)?;
    }
    let summary = SolveSummary {
        solver: &set.solver,
        k: qubo.num_variables(),
        best_energy: best.energy,
        best: BitAssignment::new(best.bits.clone()).to_bitstring(),
        report,
    };
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> anyhow::Result<()> {
    let problem = read_problem(&a.problem)?;
    let set = SampleSet::read_json(&a.samples).with_context(|| format!("reading {}", a.samples.display()))?;
    let report = report_for(&problem, &a.model, &set)?;
    let text = serde_json::to_string_pretty(&report)?;
    if let Some(out) = &a.out {
        write_text(out, &text)?;
    }
    println!("{text}");
    Ok(())
}

fn sweep_config(a: &SweepArgs) -> anyhow::Result<SweepConfig> {
    let mut cfg = match &a.config {
        Some(path) => {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            serde_json::from_str(&text).map_err(mseg::Error::from)?
        }
        None => SweepConfig::default(),
    };
    if a.n.is_some() || a.d.is_some() || a.points.is_some() {
        let ns = a.n.clone().unwrap_or_else(|| cfg.configs.iter().map(|c| c.n).collect());
        let d = a.d.or(cfg.configs.first().map(|c| c.d)).unwrap_or(2);
        let p = a.points.unwrap_or(16);
        cfg.configs = ns.into_iter().map(|n| SyntheticConfig::new(n, d, p)).collect();
    }
    if let Some(g) = &a.noise_grid {
        cfg.noise_grid = g.clone();
    }
    if let Some(i) = a.instances {
        cfg.instances = i;
    }
    if let Some(s) = &a.solvers {
        cfg.solvers = s.clone();
    }
    if let Some(f) = a.fill {
        cfg.fill = f;
    }
    if a.config.is_none() {
        cfg.weights = match a.preset {
            Preset::Synthetic => PenaltyWeights::SYNTHETIC,
            Preset::Dataset => PenaltyWeights::DATASET,
        };
    }
    cfg.weights.lambda1 = a.lambda1.unwrap_or(cfg.weights.lambda1);
    cfg.weights.lambda2 = a.lambda2.unwrap_or(cfg.weights.lambda2);
    cfg.weights.lambda3 = a.lambda3.unwrap_or(cfg.weights.lambda3);
    if let Some(r) = a.reads {
        cfg.reads = r;
    }
    if let Some(s) = a.sweeps {
        cfg.sweeps = s;
    }
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write_csv<T: Serialize>(path: &Path, items: &[T]) -> anyhow::Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    for item in items {
        w.serialize(item)?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> anyhow::Result<()> {
    let cfg = sweep_config(&a)?;
    let cells = run_sweep(&cfg)?;
    if let Some(dir) = &a.artifacts {
        fs::create_dir_all(dir)?;
        for cell in &cells {
            let stem = cell.runs[0].row.config.clone()
                + &format!("-rho{}-i{:03}", cell.runs[0].row.noise, cell.instance);
            cell.problem.write_json(dir.join(format!("{stem}.problem.json")))?;
            for run in &cell.runs {
                if let Some(set) = &run.samples {
                    set.write_json(dir.join(format!("{stem}.{}.samples.json", run.row.solver)))?;
                }
            }
        }
    }
    let mut table = rows(&cells);
    if a.omit_timing {
        for r in &mut table {
            r.wall_time_ms = 0.0;
        }
    }
    let summary = summarize(&table);
    write_csv(&a.out, &table)?;
    let summary_path = a.summary.clone().unwrap_or_else(|| {
        let stem = a.out.file_stem().map_or("sweep".into(), |s| s.to_string_lossy().into_owned());
        a.out.with_file_name(format!("{stem}.summary.csv"))
    });
    write_csv(&summary_path, &summary)?;
    let failures = table.iter().filter(|r| !r.error.is_empty()).count();
    println!(
        "{} rows -> {}\n{} summary rows -> {}\n{failures} failed runs",
        table.len(),
        a.out.display(),
        summary.len(),
        summary_path.display()
    );
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<mseg::Error>() {
        Some(mseg::Error::SizeGuard { .. }) => 4,
        Some(mseg::Error::InvalidParams(_)) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(w) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(w).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    let result = match cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Build(a) => cmd_build(a),
        Command::Solve(a) => cmd_solve(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
