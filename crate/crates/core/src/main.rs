use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use eqodds::attain::{check_thm4, search_fair_deterministic};
use eqodds::experiment::{run_experiment, ExperimentSpec, Pipeline};
use eqodds::postprocess::{
    feasible_area_in, feasible_area_in_pseudo, fit_postprocess_with, Costs, OutcomeTable, PostprocessOptions,
};
use eqodds::probcore::{eo_violation, positive_rates, DeterministicClassifier};
use eqodds::report::render_regions;
use eqodds::rocgeom::{feasible_area_post, group_hull, nontriviality_margin, ConvexRegion};
use eqodds::sample::{load_csv, Sample};
use eqodds::simulate::{gen_discrete, gen_linear_scm, AttributeLaw, BuiltinJoint, LinearScm, NoiseLaw, ScmOptions};
use eqodds::statmod::{ci_test, Bandwidth, KernelConfig};
use eqodds::tablefile::{format_deterministic, parse_classifier, parse_joint, ClassifierFile, JointFile};
use eqodds::trainer::{train, Activation, FittedModel, MlpSpec, Optimizer, Task, TrainConfig};
use eqodds::{Error, Result};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

/// Writes a line to stdout, returning write errors instead of panicking.
macro_rules! out {
    ($($arg:tt)*) => {
        writeln!(io::stdout(), $($arg)*)?
    };
}

#[derive(Parser)]
#[command(name = "eqodds", version, about = "Equalized Odds attainability, ROC geometry, and fair training")]
struct Cli {
    /// Directory for generated reports and artifacts.
    #[arg(long, global = true, env = "EQODDS_OUT", default_value = "eqodds-out")]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a sample from the linear structural model or a discrete joint.
    Simulate(SimulateArgs),
    /// Train a deterministic or stochastic network with the fairness penalty.
    Train(TrainArgs),
    /// Append model predictions to a data file.
    Predict(PredictArgs),
    /// Kernel conditional independence test of a prediction column.
    Citest(CitestArgs),
    /// Check whether a deterministic classifier attains Equalized Odds on a joint.
    Check(CheckArgs),
    /// List every deterministic classifier that attains Equalized Odds on a joint.
    Search(SearchArgs),
    /// Fit the optimal fair post-processor and sweep the feasible areas.
    Postprocess(PostprocessArgs),
    /// Draw the group hulls and feasible areas of a joint.
    Regions(RegionsArgs),
    /// Run a named experiment pipeline.
    Experiment(ExperimentArgs),
}

#[derive(Args)]
struct SimulateArgs {
    /// `linear`, or a discrete joint: `expL`, `expR`, `independent`, or a table file.
    #[arg(long, default_value = "linear")]
    model: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 0.7)]
    q: f64,
    #[arg(long, default_value_t = 0.6)]
    b: f64,
    #[arg(long, default_value_t = 0.9)]
    c: f64,
    #[arg(long, default_value_t = 0.6)]
    d: f64,
    /// Noise of X as FAMILY:SCALE, e.g. `uniform:0.2` or `laplace:0.4`.
    #[arg(long, default_value = "uniform:0.2")]
    ex: String,
    #[arg(long, default_value = "uniform:0.2")]
    eh: String,
    #[arg(long, default_value = "uniform:0.1")]
    ey: String,
    /// Law of A: `bernoulli:P` or `uniform`.
    #[arg(long, default_value = "bernoulli:0.5")]
    a_law: String,
    /// Refuse coefficients with c = 0 or qc + bd = 0.
    #[arg(long)]
    thm1: bool,
    /// Output CSV; defaults to OUT_DIR/sample.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct DataArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "a")]
    protected: String,
    #[arg(long, default_value = "y")]
    target: String,
}

#[derive(Args)]
struct TrainArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long, default_value = "reg")]
    task: Task,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    /// 1 adds noise inputs to the network.
    #[arg(long, default_value_t = 0, value_parser = clap::value_parser!(u8).range(0..=1))]
    stochastic: u8,
    /// Number of noise inputs of a stochastic network.
    #[arg(long, default_value_t = 4)]
    noise_dim: usize,
    /// Hidden layer widths, comma separated; empty for a linear model.
    #[arg(long, default_value = "50,50")]
    hidden: String,
    #[arg(long, default_value = "selu")]
    activation: Activation,
    #[arg(long, default_value_t = 500)]
    epochs: usize,
    #[arg(long, default_value_t = 128)]
    batch: usize,
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    #[arg(long, default_value = "adam")]
    optimizer: Optimizer,
    /// Compute each step on the whole data set.
    #[arg(long)]
    full_batch: bool,
    /// Do not feed A to the network.
    #[arg(long)]
    exclude_protected: bool,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model file; the text sidecar is written next to it.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct KernelArgs {
    /// Bandwidth of the prediction kernel: `median`, `median*K`, or a number.
    #[arg(long)]
    bandwidth: Option<Bandwidth>,
    /// Ridge of the prediction and attribute projections, times n.
    #[arg(long)]
    ridge: Option<f64>,
    /// Ridge of the regression on the target, times n.
    #[arg(long)]
    cond_ridge: Option<f64>,
}

impl KernelArgs {
    fn apply(&self, mut cfg: KernelConfig) -> KernelConfig {
        if let Some(b) = self.bandwidth {
            cfg.bandwidth = b;
        }
        if let Some(r) = self.ridge {
            cfg.ridge_scale = r;
        }
        if let Some(r) = self.cond_ridge {
            cfg.cond_ridge_scale = r;
        }
        cfg
    }
}

#[derive(Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    #[command(flatten)]
    data: DataArgs,
    /// Name of the appended prediction column.
    #[arg(long, default_value = "yhat")]
    pred_col: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV; defaults to OUT_DIR/predictions.csv.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CitestArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    pred_col: String,
    /// Number of permutations.
    #[arg(long)]
    perms: Option<usize>,
    /// Number of target quantile bins.
    #[arg(long)]
    bins: Option<usize>,
    #[command(flatten)]
    kernel: KernelArgs,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct JointArg {
    /// Joint table file, or one of `expL`, `expR`, `independent`.
    #[arg(long)]
    joint: String,
}

#[derive(Args)]
struct CheckArgs {
    #[command(flatten)]
    joint: JointArg,
    /// Deterministic classifier table file.
    #[arg(long)]
    clf: PathBuf,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct SearchArgs {
    #[command(flatten)]
    joint: JointArg,
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Args)]
struct PostprocessArgs {
    #[command(flatten)]
    joint: JointArg,
    /// Base classifier table file; the Bayes classifier of the joint when absent.
    #[arg(long)]
    clf: Option<PathBuf>,
    /// False-positive and false-negative costs.
    #[arg(long, default_value = "1,1")]
    costs: String,
    /// Allowed rate gap between groups instead of exact equality.
    #[arg(long)]
    slack: Option<f64>,
    #[arg(long, default_value_t = eqodds::postprocess::DEFAULT_GRID)]
    grid: usize,
}

#[derive(Args)]
struct RegionsArgs {
    #[command(flatten)]
    joint: JointArg,
    #[arg(long)]
    clf: Option<PathBuf>,
    #[arg(long, default_value_t = eqodds::postprocess::DEFAULT_GRID)]
    grid: usize,
}

#[derive(Args)]
struct ExperimentArgs {
    /// Pipeline name.
    pipeline: String,
    /// Seeds as a list `0,1,5` or a range `0..10`.
    #[arg(long, default_value = "0..10")]
    seeds: String,
    /// Pipeline setting as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(Error::Io(e)) if e.kind() == io::ErrorKind::BrokenPipe => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Argument(_) | Error::Parse(_) => 2,
                _ => 1,
            })
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    let out_dir = cli.out_dir;
    match cli.command {
        Command::Simulate(a) => simulate(&a, &out_dir),
        Command::Train(a) => train_cmd(&a, &out_dir),
        Command::Predict(a) => predict(&a, &out_dir),
        Command::Citest(a) => citest(&a),
        Command::Check(a) => check(&a),
        Command::Search(a) => search(&a),
        Command::Postprocess(a) => postprocess(&a, &out_dir),
        Command::Regions(a) => regions(&a, &out_dir),
        Command::Experiment(a) => experiment(&a, &out_dir),
    }
}

fn write_file(path: &Path, contents: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, contents)?;
    Ok(())
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

fn load_data(d: &DataArgs) -> Result<Sample> {
    let file = fs::File::open(&d.data)
        .map_err(|e| Error::Io(io::Error::new(e.kind(), format!("{}: {e}", d.data.display()))))?;
    load_csv(io::BufReader::new(file), &d.protected, &d.target)
}

fn load_joint(arg: &JointArg) -> Result<JointFile> {
    match BuiltinJoint::parse(&arg.joint) {
        Ok(p) => Ok(JointFile { joint: p.joint(), exact: Some(p.exact()) }),
        Err(_) => parse_joint(&read_text(Path::new(&arg.joint))?),
    }
}

fn load_classifier(path: &Path) -> Result<ClassifierFile> {
    parse_classifier(&read_text(path)?)
}

fn parse_a_law(text: &str) -> Result<AttributeLaw> {
    match text.split_once(':') {
        None if text == "uniform" => Ok(AttributeLaw::Uniform01),
        Some(("bernoulli", p)) => {
            p.parse().map(AttributeLaw::Bernoulli).map_err(|e| Error::Parse(format!("Bernoulli parameter {p:?}: {e}")))
        }
        _ => Err(Error::Parse(format!("attribute law {text:?} is not `uniform` or `bernoulli:P`"))),
    }
}

fn simulate(a: &SimulateArgs, out_dir: &Path) -> Result<ExitCode> {
    let sample = if a.model == "linear" {
        let scm = LinearScm {
            q: a.q,
            b: a.b,
            c: a.c,
            d: a.d,
            e_x: NoiseLaw::parse(&a.ex)?,
            e_h: NoiseLaw::parse(&a.eh)?,
            e_y: NoiseLaw::parse(&a.ey)?,
        };
        let opts = ScmOptions { a_law: parse_a_law(&a.a_law)?, require_hypotheses: a.thm1 };
        gen_linear_scm(&scm, opts, a.n, a.seed)?
    } else {
        let joint = load_joint(&JointArg { joint: a.model.clone() })?;
        gen_discrete(&joint.joint, a.n, a.seed)?
    };
    let path = a.out.clone().unwrap_or_else(|| out_dir.join("sample.csv"));
    let mut buf = Vec::new();
    sample.write_csv(&mut buf)?;
    write_file(&path, &buf)?;
    out!("wrote {} rows to {}", sample.n(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn parse_hidden(text: &str) -> Result<Vec<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|s| s.parse().map_err(|e| Error::Parse(format!("hidden width {s:?}: {e}"))))
        .collect()
}

/// The sidecar lives next to the model file with `.txt` appended.
fn sidecar_path(model: &Path) -> PathBuf {
    let mut s = model.as_os_str().to_owned();
    s.push(".txt");
    PathBuf::from(s)
}

fn train_cmd(a: &TrainArgs, out_dir: &Path) -> Result<ExitCode> {
    let data = load_data(&a.data)?;
    let spec = MlpSpec {
        hidden: parse_hidden(&a.hidden)?,
        activation: a.activation,
        noise_dim: if a.stochastic == 1 { a.noise_dim.max(1) } else { 0 },
        task: a.task,
        exclude_protected: a.exclude_protected,
        seed: a.seed,
    };
    let cfg = TrainConfig {
        lambda: a.lambda,
        learning_rate: a.lr,
        batch: a.batch,
        epochs: a.epochs,
        optimizer: a.optimizer,
        full_batch: a.full_batch,
        kernel: a.kernel.apply(KernelConfig::default()),
    };
    let model = train(&data, &spec, &cfg)?;
    let path = a.out.clone().unwrap_or_else(|| out_dir.join("model.eqom"));
    let mut buf = Vec::new();
    model.write_to(&mut buf)?;
    write_file(&path, &buf)?;
    write_file(&sidecar_path(&path), model.sidecar(Some(&cfg)).as_bytes())?;
    if let Some(last) = model.trace.last() {
        out!("epoch={}\nloss={}\npenalty={}\nobjective={}", last.epoch, last.loss, last.penalty, last.objective);
    }
    out!("model={}", path.display());
    Ok(ExitCode::SUCCESS)
}

fn predict(a: &PredictArgs, out_dir: &Path) -> Result<ExitCode> {
    let bytes = fs::read(&a.model)?;
    let model = FittedModel::read_from(bytes.as_slice())?;
    let mut data = load_data(&a.data)?;
    let mut rng = ChaCha20Rng::seed_from_u64(a.seed);
    data.yhat = Some(model.predict_sample(&data, &mut rng)?);
    data.yhat_name = a.pred_col.clone();
    let path = a.out.clone().unwrap_or_else(|| out_dir.join("predictions.csv"));
    let mut buf = Vec::new();
    data.write_csv(&mut buf)?;
    write_file(&path, &buf)?;
    out!("wrote {} predictions to {}", data.n(), path.display());
    Ok(ExitCode::SUCCESS)
}

fn citest(a: &CitestArgs) -> Result<ExitCode> {
    let data = load_data(&a.data)?.with_prediction_column(&a.pred_col)?;
    let mut cfg = a.kernel.apply(KernelConfig::test_default());
    cfg.seed = a.seed;
    if let Some(p) = a.perms {
        cfg.permutations = p;
    }
    if a.bins.is_some() {
        cfg.bins = a.bins;
    }
    let yhat = data.yhat.as_deref().unwrap_or_default();
    let r = ci_test(yhat, &data.a, &data.y, &cfg)?;
    io::stdout().write_all(r.to_key_values().as_bytes())?;
    Ok(ExitCode::SUCCESS)
}

fn deterministic_of(c: &ClassifierFile) -> Result<DeterministicClassifier> {
    match c {
        ClassifierFile::Deterministic(f) => Ok(f.clone()),
        ClassifierFile::Stochastic { .. } => Err(Error::Argument("check needs a deterministic classifier".into())),
    }
}

fn check(a: &CheckArgs) -> Result<ExitCode> {
    let joint = load_joint(&a.joint)?;
    let f = deterministic_of(&load_classifier(&a.clf)?)?;
    let (holds, gap, failed, witness, violation) = match &joint.exact {
        Some(exact) if a.tol.is_none() => {
            let r = check_thm4(exact, &f, num_rational::Rational64::from_integer(0))?;
            let v = eo_violation(&positive_rates(exact, &f)?)?;
            (r.holds, r.max_gap, r.failed_condition, r.witness, v.to_string())
        }
        _ => {
            let r = check_thm4(&joint.joint, &f, a.tol.unwrap_or(1e-6))?;
            let v = eo_violation(&positive_rates(&joint.joint, &f)?)?;
            (r.holds, r.max_gap, r.failed_condition, r.witness, v.to_string())
        }
    };
    out!("holds={holds}\nfailed_condition={failed:?}\nmax_gap={gap}\neo_violation={violation}");
    if let Some(w) = witness {
        out!("witness=yhat:{} a:{} a_prime:{} y:{}", w.yhat, w.a, w.a_prime, w.y);
    }
    for (g, r) in positive_rates(&joint.joint, &f)?.iter().enumerate() {
        out!("rates_{g}=fpr:{} tpr:{}", r.fpr, r.tpr);
    }
    Ok(ExitCode::SUCCESS)
}

fn search(a: &SearchArgs) -> Result<ExitCode> {
    let joint = load_joint(&a.joint)?;
    let found = match &joint.exact {
        Some(exact) if a.tol.is_none() => search_fair_deterministic(exact, num_rational::Rational64::from_integer(0))?,
        _ => search_fair_deterministic(&joint.joint, a.tol.unwrap_or(1e-6))?,
    };
    out!("count={}", found.len());
    for f in &found {
        out!("{}", format_deterministic(f).trim_end());
        out!("constant={}", f.is_constant());
    }
    Ok(ExitCode::SUCCESS)
}

fn base_classifier(joint: &JointFile, clf: Option<&Path>) -> Result<ClassifierFile> {
    match clf {
        Some(p) => load_classifier(p),
        None => Ok(ClassifierFile::Deterministic(joint.joint.bayes_classifier()?)),
    }
}

fn parse_costs(text: &str) -> Result<Costs> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    let [fp, fn_] = parts.as_slice() else {
        return Err(Error::Parse(format!("costs {text:?} are not FP,FN")));
    };
    let num = |s: &str| s.parse::<f64>().map_err(|e| Error::Parse(format!("cost {s:?}: {e}")));
    Ok(Costs { false_pos: num(fp)?, false_neg: num(fn_)? })
}

fn postprocess(a: &PostprocessArgs, out_dir: &Path) -> Result<ExitCode> {
    let joint = load_joint(&a.joint)?;
    let clf = base_classifier(&joint, a.clf.as_deref())?;
    let base = clf.stochastic();
    let table = OutcomeTable::from_joint(&joint.joint, &base)?;
    let opts = PostprocessOptions { slack: a.slack, require_nontrivial: false };
    let fit = fit_postprocess_with(&table, parse_costs(&a.costs)?, opts)?;
    let rates = table.rates()?;
    let post = feasible_area_post(&rates)?;
    let inn = feasible_area_in(&joint.joint, a.grid)?;
    let pseudo = feasible_area_in_pseudo(&joint.joint, &base, a.grid)?;
    write_file(&out_dir.join("feasible_in.csv"), inn.sweep_csv().as_bytes())?;
    write_file(&out_dir.join("feasible_in_pseudo.csv"), pseudo.sweep_csv().as_bytes())?;
    let svg = render_regions(
        &[post.clone(), inn.region.clone(), pseudo.region.clone()],
        &["post-processing", "all predictors", "pseudo-constrained"],
    )?;
    write_file(&out_dir.join("feasible.svg"), svg.as_bytes())?;
    for (g, (b0, b1)) in fit.params.beta0.iter().zip(&fit.params.beta1).enumerate() {
        out!("beta_{g}=yhat0:{b0} yhat1:{b1}");
    }
    out!("point=fpr:{} tpr:{}\nloss={}", fit.point.fpr, fit.point.tpr, fit.loss);
    out!("eo_violation={}\narea_post={}\nout_dir={}", eo_violation(&fit.rates)?, post.area(), out_dir.display());
    Ok(ExitCode::SUCCESS)
}

fn regions(a: &RegionsArgs, out_dir: &Path) -> Result<ExitCode> {
    let joint = load_joint(&a.joint)?;
    let base = base_classifier(&joint, a.clf.as_deref())?.stochastic();
    let rates = positive_rates(&joint.joint, &base)?;
    let post = feasible_area_post(&rates)?;
    let inn = feasible_area_in(&joint.joint, a.grid)?;
    let mut shown: Vec<ConvexRegion> = rates.iter().map(|g| group_hull(*g)).collect();
    let mut labels: Vec<String> = (0..rates.len()).map(|g| format!("group {g} hull")).collect();
    shown.push(post.clone());
    labels.push("post-processing".into());
    shown.push(inn.region.clone());
    labels.push("all predictors".into());
    let refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    write_file(&out_dir.join("regions.svg"), render_regions(&shown, &refs)?.as_bytes())?;
    write_file(&out_dir.join("post_vertices.txt"), post.to_vertex_text().as_bytes())?;
    write_file(&out_dir.join("in_vertices.txt"), inn.region.to_vertex_text().as_bytes())?;
    out!(
        "margin={}\narea_post={}\narea_in={}\nout_dir={}",
        nontriviality_margin(&rates),
        post.area(),
        inn.region.area(),
        out_dir.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn parse_seeds(text: &str) -> Result<Vec<u64>> {
    let bad = |e: std::num::ParseIntError| Error::Parse(format!("seeds {text:?}: {e}"));
    if let Some((lo, hi)) = text.split_once("..") {
        let (lo, hi): (u64, u64) = (lo.trim().parse().map_err(bad)?, hi.trim().parse().map_err(bad)?);
        return Ok((lo..hi).collect());
    }
    text.split(',').map(|s| s.trim().parse().map_err(bad)).collect()
}

fn experiment(a: &ExperimentArgs, out_dir: &Path) -> Result<ExitCode> {
    let pipeline: Pipeline = a.pipeline.parse()?;
    let mut spec = ExperimentSpec::new(pipeline, parse_seeds(&a.seeds)?);
    for kv in &a.overrides {
        let (k, v) = kv.split_once('=').ok_or_else(|| Error::Parse(format!("override {kv:?} is not KEY=VALUE")))?;
        spec = spec.with(k.trim(), v.trim());
    }
    let bundle = run_experiment(&spec)?;
    let dir = out_dir.join(pipeline.name());
    for (name, text) in &bundle.files {
        write_file(&dir.join(name), text.as_bytes())?;
    }
    let mut stdout = io::stdout().lock();
    stdout.write_all(bundle.summary.as_bytes())?;
    writeln!(stdout, "out_dir={}", dir.display())?;
    Ok(if bundle.completed() { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}
