//! `tfn`: dataset generation, training, evaluation, equivariance checks and
//! radial-curve export. Exit codes: 0 success, 1 invalid input, 2 a property
//! check failed.

mod config;

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use tfn::autodiff::ParamStore;
use tfn::equivariance::{
    check_permutation, check_rotation, check_translation, random_rotations, EquivarianceReport, LayerMap, Output,
    PointMap, DEFAULT_TOL, DEFAULT_TRIALS,
};
use tfn::tasks::{
    evaluate, gen_test_set, gen_train_set, radial_curves, radius_grid, read_jsonl, task_defaults, train_with,
    write_jsonl, write_metrics_csv, write_radial_csv, DatasetHeader, EvalReport, Model, ModelFile, ModelMap, TaskKind,
    DATASET_SCHEMA,
};
use tfn::{CgTable, Features, Rotation};

use config::{config_hash, RunConfig};

#[derive(Parser)]
#[command(name = "tfn", version, about = "Rotation-equivariant point-cloud networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a JSON-lines dataset.
    GenData(GenData),
    /// Train from a key=value config; writes model.json and metrics.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a trained model on a dataset and print the task metric.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Also write the JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Rotation, translation and permutation checks of a model and each of its layers.
    CheckEquivariance(CheckArgs),
    /// Sample learned radial functions (with analytic references where known) to CSV.
    DumpRadial {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        r_min: f64,
        #[arg(long, default_value_t = 2.0)]
        r_max: f64,
        #[arg(long, default_value_t = 64)]
        steps: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the real coupling coefficients up to an order as JSON.
    DumpCg {
        #[arg(long, default_value_t = 2)]
        l_max: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum Split {
    Train,
    Test,
}

#[derive(Args)]
struct GenData {
    #[arg(long)]
    task: TaskKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Defaults to the task's standard split size.
    #[arg(long)]
    count: Option<usize>,
    /// `train`: canonical Tetris shapes; `test`: randomly rotated and translated.
    #[arg(long, value_enum, default_value_t = Split::Train)]
    split: Split,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, required_unless_present = "random_init", conflicts_with = "random_init")]
    checkpoint: Option<PathBuf>,
    /// Check an untrained model of this task.
    #[arg(long)]
    random_init: Option<TaskKind>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[arg(long, default_value_t = DEFAULT_TOL)]
    tol: f64,
    /// Use identity transformations only; every residual must be exactly zero.
    #[arg(long)]
    identity: bool,
    /// Write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Raised when a check ran but failed, as opposed to bad input.
#[derive(Debug)]
struct PropertyFailure(String);

impl std::fmt::Display for PropertyFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for PropertyFailure {}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.is::<PropertyFailure>() => {
            eprintln!("FAILED: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn run(cmd: Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Train { config } => train_cmd(&config),
        Command::Eval { checkpoint, data, out } => eval_cmd(&checkpoint, &data, out.as_deref()),
        Command::CheckEquivariance(a) => check_cmd(a),
        Command::DumpRadial { checkpoint, r_min, r_max, steps, out } => {
            let (file, model, params) = load_model(&checkpoint)?;
            let radii = radius_grid(r_min, r_max, steps)?;
            let curves = radial_curves(&model, &params, &radii)?;
            if curves.is_empty() {
                bail!("model has no convolution layers");
            }
            let mut w = create(&out)?;
            write_radial_csv(&mut w, &file.config_hash, &radii, &curves)?;
            w.flush()?;
            Ok(())
        }
        Command::DumpCg { l_max, out } => {
            if l_max > 8 {
                bail!("--l-max {l_max} is above the supported maximum of 8");
            }
            #[derive(Serialize)]
            struct Dump {
                schema: &'static str,
                l_max: usize,
                records: Vec<tfn::so3::CgRecord>,
            }
            let dump = Dump { schema: "tfn-cg/1", l_max, records: CgTable::new(l_max).records() };
            write_json(out.as_deref(), &dump)
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn write_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => {
            let mut w = create(p)?;
            serde_json::to_writer_pretty(&mut w, value)?;
            writeln!(w)?;
            w.flush()?;
        }
        None => writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(value)?)?,
    }
    Ok(())
}

fn load_model(path: &Path) -> Result<(ModelFile, Model, ParamStore)> {
    ModelFile::load(path).with_context(|| format!("loading model {}", path.display()))
}

fn gen_data(a: GenData) -> Result<()> {
    let d = task_defaults(a.task);
    let count = a.count.unwrap_or(match a.split {
        Split::Train => d.train_count,
        Split::Test => d.test_count,
    });
    if count == 0 {
        bail!("--count must be positive");
    }
    let split = match a.split {
        Split::Train => "train",
        Split::Test => "test",
    };
    let samples = match a.split {
        Split::Train => gen_train_set(a.task, a.seed, count),
        Split::Test => gen_test_set(a.task, a.seed, count),
    };
    let canonical = format!("gen-data\ntask={}\nseed={}\ncount={count}\nsplit={split}\n", a.task, a.seed);
    let header = DatasetHeader {
        schema: DATASET_SCHEMA.into(),
        task: a.task,
        seed: a.seed,
        count,
        config_hash: config_hash(&canonical),
    };
    let mut w = create(&a.out)?;
    write_jsonl(&mut w, &header, &samples)?;
    w.flush()?;
    eprintln!("wrote {count} {} samples to {}", a.task, a.out.display());
    Ok(())
}

fn read_dataset(path: &Path) -> Result<(DatasetHeader, Vec<tfn::tasks::LabeledSample>)> {
    let f = File::open(path).with_context(|| format!("opening dataset {}", path.display()))?;
    read_jsonl(BufReader::new(f)).with_context(|| format!("reading dataset {}", path.display()))
}

fn train_cmd(path: &Path) -> Result<()> {
    let cfg = RunConfig::load(path)?;
    let hash = cfg.hash();
    let model = Model::new(cfg.spec())?;
    let data = match &cfg.data {
        Some(p) => {
            let (header, samples) = read_dataset(p)?;
            if header.task != cfg.task {
                bail!("config task is {} but {} holds {} samples", cfg.task, p.display(), header.task);
            }
            samples
        }
        None => gen_train_set(cfg.task, cfg.seed, cfg.train_count),
    };
    let mut params = model.init_params(cfg.seed);
    let log = train_with(&model, &mut params, &data, &cfg.train, |m| {
        eprintln!("epoch {:>4}  steps {:>7}  loss {:.6e}  {} {:.6}", m.epoch, m.steps, m.loss, tfn::tasks::metric_name(cfg.task), m.metric);
    })?;
    std::fs::create_dir_all(&cfg.out_dir).with_context(|| format!("creating {}", cfg.out_dir.display()))?;
    let model_path = cfg.out_dir.join("model.json");
    ModelFile::new(&model, &params, &hash).save(&model_path)?;
    let mut w = create(&cfg.out_dir.join("metrics.csv"))?;
    write_metrics_csv(&mut w, cfg.task, &hash, &log)?;
    w.flush()?;
    eprintln!("wrote {} (config_hash={hash})", model_path.display());
    Ok(())
}

#[derive(Serialize)]
struct EvalOutput {
    schema: &'static str,
    config_hash: String,
    data_hash: String,
    #[serde(flatten)]
    report: EvalReport,
}

fn eval_cmd(checkpoint: &Path, data: &Path, out: Option<&Path>) -> Result<()> {
    let (file, model, params) = load_model(checkpoint)?;
    let (header, samples) = read_dataset(data)?;
    if header.task != model.task() {
        bail!("model is for {} but the dataset holds {} samples", model.task(), header.task);
    }
    let report = evaluate(&model, &params, &samples)?;
    let output = EvalOutput { schema: "tfn-eval/1", config_hash: file.config_hash, data_hash: header.config_hash, report };
    if let Some(p) = out {
        write_json(Some(p), &output)?;
    }
    writeln!(std::io::stdout().lock(), "{}", serde_json::to_string_pretty(&output)?)?;
    Ok(())
}

#[derive(Serialize)]
struct CheckOutput {
    schema: &'static str,
    config_hash: String,
    task: TaskKind,
    seed: u64,
    trials: usize,
    identity: bool,
    report: EquivarianceReport,
}

fn check_cmd(a: CheckArgs) -> Result<()> {
    if a.trials == 0 {
        bail!("--trials must be positive");
    }
    if !(a.tol >= 0.0) {
        bail!("--tol must be non-negative");
    }
    let (hash, model, params) = match (&a.checkpoint, a.random_init) {
        (Some(p), _) => {
            let (file, model, params) = load_model(p)?;
            (file.config_hash, model, params)
        }
        (None, Some(task)) => {
            let d = task_defaults(task);
            let model = Model::new(tfn::tasks::ModelSpec::default_for(task, d.channels, d.radial))?;
            let params = model.init_params(a.seed);
            (config_hash(&format!("random-init\ntask={task}\nseed={}\n", a.seed)), model, params)
        }
        (None, None) => unreachable!("clap requires a source"),
    };
    let sample = gen_test_set(model.task(), a.seed, 1).remove(0);
    let cloud = sample.cloud.clone();
    let n = cloud.len();
    let mut rng = ChaCha8Rng::seed_from_u64(a.seed ^ 0x5EED);
    let (rotations, shifts, perms) = if a.identity {
        (vec![Rotation::identity(); a.trials], vec![[0.0; 3]; a.trials], vec![(0..n).collect::<Vec<_>>(); a.trials])
    } else {
        let shifts = (0..a.trials).map(|_| [0; 3].map(|_| rng.random_range(-3.0..3.0))).collect();
        let perms = (0..a.trials)
            .map(|_| {
                let mut p: Vec<usize> = (0..n).collect();
                p.shuffle(&mut rng);
                p
            })
            .collect();
        (random_rotations(a.seed, a.trials), shifts, perms)
    };
    let families = |map: &dyn PointMap, x: &Features| -> Result<EquivarianceReport> {
        Ok(check_rotation(map, &cloud, x, &rotations, a.tol)?
            .merge(check_translation(map, &cloud, x, &shifts, a.tol)?)
            .merge(check_permutation(map, &cloud, x, &perms, a.tol)?))
    };
    let input = model.input_features(&sample)?;
    let mut report = families(&ModelMap { model: &model, params: &params }, &input)?;
    let net = model.network();
    let mut x = input;
    for i in 0..net.layers().len() {
        let layer = LayerMap::of(net, &params, i);
        report = report.merge(families(&layer, &x)?);
        x = match layer.apply(&cloud, &x)? {
            Output::PerPoint(f) => f,
            _ => unreachable!("layers act per point"),
        };
    }
    let mut stdout = std::io::stdout().lock();
    write!(stdout, "{}", report.table())?;
    writeln!(stdout, "max residual {:.3e} (tol {:.1e}): {}", report.max, a.tol, if report.passed { "pass" } else { "FAIL" })?;
    let passed = report.passed;
    let max = report.max;
    let output = CheckOutput {
        schema: "tfn-equivariance/1",
        config_hash: hash,
        task: model.task(),
        seed: a.seed,
        trials: a.trials,
        identity: a.identity,
        report,
    };
    if let Some(p) = &a.out {
        write_json(Some(p), &output)?;
    }
    if !passed {
        return Err(PropertyFailure(format!("max residual {max:.3e} exceeds tolerance {:.1e}", a.tol)).into());
    }
    Ok(())
}
