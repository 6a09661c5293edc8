//! Reproducible experiment pipelines. Each pipeline returns an in-memory
//! [`Bundle`] of CSV, SVG and summary text; writing it out is left to the
//! caller.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::attain::{corollary_ratio, gaussian_q_gap};
use crate::error::{Error, Result};
use crate::postprocess::{feasible_area_in, feasible_area_in_pseudo, DEFAULT_GRID};
use crate::probcore::{
    accuracy, eo_violation, positive_rates, DeterministicClassifier, DiscreteJoint, StochasticClassifier,
};
use crate::report::{csv_table, median, render_lines, render_pvalues, render_regions, Series};
use crate::rocgeom::{feasible_area_post, group_hull, nontriviality_margin, region_hausdorff, ConvexRegion};
use crate::sample::Sample;
use crate::simulate::{gen_discrete, gen_linear_scm, random_joint, AttributeLaw, BuiltinJoint, LinearScm, ScmOptions};
use crate::statmod::{ci_test, kmcd, CiTestResult, KernelConfig};
use crate::trainer::{train, FittedModel, MlpSpec, Task, TrainConfig};

/// The available pipelines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Pipeline {
    Fig2,
    Fig3Style,
    Table1,
    Table2,
    Table3,
    Thm5Regions,
    Thm6Equiv,
    Corollary6,
}

impl Pipeline {
    pub const ALL: [Pipeline; 8] = [
        Pipeline::Fig2,
        Pipeline::Fig3Style,
        Pipeline::Table1,
        Pipeline::Table2,
        Pipeline::Table3,
        Pipeline::Thm5Regions,
        Pipeline::Thm6Equiv,
        Pipeline::Corollary6,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Pipeline::Fig2 => "fig2",
            Pipeline::Fig3Style => "fig3-style",
            Pipeline::Table1 => "table1",
            Pipeline::Table2 => "table2",
            Pipeline::Table3 => "table3",
            Pipeline::Thm5Regions => "thm5-regions",
            Pipeline::Thm6Equiv => "thm6-equiv",
            Pipeline::Corollary6 => "corollary6",
        }
    }

    /// Override keys the pipeline accepts.
    pub fn keys(self) -> &'static [&'static str] {
        match self {
            Pipeline::Fig2 => &["n", "n_test", "lambdas", "epochs", "noise_dim", "hidden", "noise"],
            Pipeline::Fig3Style => &["n", "n_test", "lambda", "epochs", "noise_dim", "hidden", "noise"],
            Pipeline::Table1 => &["n", "lambda", "epochs", "noise_dim", "hidden", "draws"],
            Pipeline::Table2 | Pipeline::Table3 => &["n", "n_test", "lambda", "epochs", "noise_dim", "hidden"],
            Pipeline::Thm5Regions => &["joint", "grid"],
            Pipeline::Thm6Equiv => &["joint", "grid"],
            Pipeline::Corollary6 => &["n", "mult", "perms"],
        }
    }
}

impl FromStr for Pipeline {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Pipeline::ALL.into_iter().find(|p| p.name() == s).ok_or_else(|| {
            let names: Vec<&str> = Pipeline::ALL.iter().map(|p| p.name()).collect();
            Error::Argument(format!("unknown pipeline {s:?}; valid names: {}", names.join(", ")))
        })
    }
}

impl std::fmt::Display for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// What to run: a pipeline, its seeds, and `key=value` overrides.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub pipeline: Pipeline,
    pub seeds: Vec<u64>,
    pub overrides: BTreeMap<String, String>,
}

impl ExperimentSpec {
    pub fn new(pipeline: Pipeline, seeds: Vec<u64>) -> Self {
        Self { pipeline, seeds, overrides: BTreeMap::new() }
    }

    pub fn with(mut self, key: &str, value: &str) -> Self {
        self.overrides.insert(key.into(), value.into());
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Argument("an experiment needs at least one seed".into()));
        }
        let keys = self.pipeline.keys();
        if let Some(bad) = self.overrides.keys().find(|k| !keys.contains(&k.as_str())) {
            return Err(Error::Argument(format!(
                "pipeline {} does not take override {bad:?}; accepted: {}",
                self.pipeline,
                keys.join(", ")
            )));
        }
        Ok(())
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        match self.overrides.get(key) {
            None => Ok(default),
            Some(v) => v.parse().map_err(|e| Error::Argument(format!("override {key}={v}: {e}"))),
        }
    }

    fn get_list<T>(&self, key: &str, default: &[T]) -> Result<Vec<T>>
    where
        T: FromStr + Clone,
        T::Err: std::fmt::Display,
    {
        match self.overrides.get(key) {
            None => Ok(default.to_vec()),
            Some(v) => v
                .split(',')
                .map(|s| s.trim().parse().map_err(|e| Error::Argument(format!("override {key}={v}: {e}"))))
                .collect(),
        }
    }

    /// Canonical text of the spec, the input of the config hash.
    pub fn canonical(&self) -> String {
        let seeds: Vec<String> = self.seeds.iter().map(ToString::to_string).collect();
        let mut s = format!("pipeline={}\nseeds={}\n", self.pipeline, seeds.join(","));
        for (k, v) in &self.overrides {
            let _ = writeln!(s, "{k}={v}");
        }
        s
    }

    pub fn config_hash(&self) -> String {
        hex(&Sha256::digest(self.canonical().as_bytes()))
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Name of the bundle file listing checksums of the others.
pub const MANIFEST: &str = "MANIFEST";

/// A named pass/fail outcome of a pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Self { name: name.into(), passed, detail }
    }
}

/// Outputs of one pipeline run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Bundle {
    /// File name to contents.
    pub files: BTreeMap<String, String>,
    pub checks: Vec<Check>,
    /// Sub-runs that raised an error, as `seed N: message`.
    pub failures: Vec<String>,
    pub summary: String,
}

impl Bundle {
    /// True when every sub-run completed.
    pub fn completed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn all_checks_pass(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    fn add(&mut self, name: &str, text: String) {
        self.files.insert(name.into(), text);
    }

    /// MANIFEST text: config hash, seeds, overrides, failures, and the
    /// SHA-256 of every other file.
    pub fn manifest(&self, spec: &ExperimentSpec) -> String {
        let mut m = format!("config_hash={}\n{}", spec.config_hash(), spec.canonical());
        let _ = writeln!(m, "completed={}", self.completed());
        for f in &self.failures {
            let _ = writeln!(m, "failure={f}");
        }
        for (name, text) in self.files.iter().filter(|(name, _)| name.as_str() != MANIFEST) {
            let _ = writeln!(m, "sha256 {} {name}", hex(&Sha256::digest(text.as_bytes())));
        }
        m
    }
}

/// Runs a pipeline. Per-seed errors are recorded in the bundle's failures
/// and the remaining seeds still run.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Bundle> {
    spec.validate()?;
    let mut bundle = match spec.pipeline {
        Pipeline::Fig2 => fig2(spec)?,
        Pipeline::Fig3Style => fig3_style(spec)?,
        Pipeline::Table1 => table1(spec)?,
        Pipeline::Table2 => regression_table(spec, LinearScm::uniform_setting(), "Uniform noise")?,
        Pipeline::Table3 => regression_table(spec, LinearScm::laplace_setting(), "Laplace noise")?,
        Pipeline::Thm5Regions => thm5_regions(spec)?,
        Pipeline::Thm6Equiv => thm6_equiv(spec)?,
        Pipeline::Corollary6 => corollary6(spec)?,
    };
    let mut summary = format!("pipeline {}\n", spec.pipeline);
    summary += &bundle.summary;
    for c in &bundle.checks {
        let _ = writeln!(summary, "{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for f in &bundle.failures {
        let _ = writeln!(summary, "ERROR {f}");
    }
    bundle.summary = summary.clone();
    bundle.add("summary.txt", summary);
    let manifest = bundle.manifest(spec);
    bundle.add(MANIFEST, manifest);
    Ok(bundle)
}

/// Runs `f` for every seed in parallel, keeping seed order, and splits
/// successes from failures.
fn per_seed<T: Send>(seeds: &[u64], f: impl Fn(u64) -> Result<T> + Sync) -> (Vec<(u64, T)>, Vec<String>) {
    let results: Vec<(u64, Result<T>)> = seeds.par_iter().map(|&s| (s, f(s))).collect();
    let mut ok = Vec::new();
    let mut failed = Vec::new();
    for (s, r) in results {
        match r {
            Ok(v) => ok.push((s, v)),
            Err(e) => failed.push(format!("seed {s}: {e}")),
        }
    }
    (ok, failed)
}

fn fmt(v: f64) -> String {
    format!("{v}")
}

fn seed_rng(seed: u64, stream: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// The structural model used by the regression pipelines: the standard
/// coefficients with a continuous protected attribute `A ~ U[0, 1]`.
pub fn regression_options() -> ScmOptions {
    ScmOptions { a_law: AttributeLaw::Uniform01, ..ScmOptions::default() }
}

/// Conditional independence test of the linear predictor `α·A + β·X` on a
/// fresh sample from `scm`.
pub fn linear_predictor_test(
    scm: &LinearScm,
    opts: ScmOptions,
    alpha: f64,
    beta: f64,
    n: usize,
    seed: u64,
    perms: usize,
) -> Result<CiTestResult> {
    let s = gen_linear_scm(scm, opts, n, seed)?;
    let yt: Vec<f64> = s.a.iter().zip(&s.x).map(|(a, x)| alpha * a + beta * x).collect();
    ci_test(&yt, &s.a, &s.y, &KernelConfig { seed, permutations: perms, ..KernelConfig::test_default() })
}

fn corollary6(spec: &ExperimentSpec) -> Result<Bundle> {
    let n: usize = spec.get("n", 5000)?;
    let mult: f64 = spec.get("mult", 1.5)?;
    let perms: usize = spec.get("perms", KernelConfig::default().permutations)?;
    let scm = LinearScm::gaussian_setting();
    let ratio = corollary_ratio(&scm)?;
    let opts = ScmOptions::default();
    let (runs, failures) = per_seed(&spec.seeds, |seed| {
        let fair = linear_predictor_test(&scm, opts, ratio, 1.0, n, seed, perms)?;
        let off = linear_predictor_test(&scm, opts, mult * ratio, 1.0, n, seed, perms)?;
        Ok((fair, off))
    });
    let grid: Vec<f64> = (0..9).map(|k| -1.0 + 0.25 * k as f64).collect();
    let gap = gaussian_q_gap(&scm, ratio, 1.0, &[0.0, 1.0], &grid, &grid)?;
    let mut rows = Vec::new();
    for (seed, (fair, off)) in &runs {
        for (arm, r) in [("ratio", fair), ("scaled", off)] {
            rows.push(vec![seed.to_string(), arm.into(), fmt(r.statistic), fmt(r.p_value)]);
        }
    }
    let fair_p: Vec<f64> = runs.iter().map(|(_, (f, _))| f.p_value).collect();
    let off_p: Vec<f64> = runs.iter().map(|(_, (_, o))| o.p_value).collect();
    let kept = fair_p.iter().filter(|&&p| p > 0.05).count();
    let rejected = off_p.iter().filter(|&&p| p <= 0.05).count();
    let s = spec.seeds.len();
    let need = (4 * s).div_ceil(5);
    let mut b = Bundle::default();
    b.add("runs.csv", csv_table(&["seed", "arm", "statistic", "p_value"], &rows)?);
    b.add(
        "pvalues.svg",
        render_pvalues(
            "Linear predictor at the fair ratio",
            &[("alpha/beta = ratio".into(), fair_p), (format!("ratio x {mult}"), off_p)],
        )?,
    );
    b.summary = format!("ratio={ratio}\nn={n}\nq_gap={gap:e}\n");
    b.checks = vec![
        Check::new("fair ratio kept", kept >= need, format!("p > 0.05 in {kept}/{s} seeds (need {need})")),
        Check::new(
            "scaled ratio rejected",
            rejected >= need,
            format!("p <= 0.05 in {rejected}/{s} seeds (need {need})"),
        ),
        Check::new("gaussian_q gap", gap <= 1e-12, format!("max gap {gap:e} on a 2x9x9 grid")),
    ];
    b.failures = failures;
    Ok(b)
}

/// One trained regressor evaluated on held-out data.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionOutcome {
    pub mse: f64,
    /// Penalty on the first 300 test rows.
    pub penalty: f64,
    pub p_value: f64,
}

/// Settings shared by the regression pipelines.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionSetup {
    pub n: usize,
    pub n_test: usize,
    pub epochs: usize,
    pub noise_dim: usize,
    pub hidden: usize,
}

impl RegressionSetup {
    fn from_spec(spec: &ExperimentSpec) -> Result<Self> {
        Ok(Self {
            n: spec.get("n", 1000)?,
            n_test: spec.get("n_test", 1000)?,
            epochs: spec.get("epochs", 150)?,
            noise_dim: spec.get("noise_dim", 4)?,
            hidden: spec.get("hidden", 50)?,
        })
    }
}

/// Kernel settings of the training penalty in the experiments, equal to
/// the test's settings.
pub fn experiment_penalty() -> KernelConfig {
    KernelConfig::test_default()
}

fn fit_and_test(
    train_s: &Sample,
    test_s: &Sample,
    spec: &MlpSpec,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<(FittedModel, RegressionOutcome)> {
    let model = train(train_s, spec, cfg)?;
    let pred = model.predict_sample(test_s, &mut seed_rng(seed, 7))?;
    let mse = pred.iter().zip(&test_s.y).map(|(p, y)| (p - y).powi(2)).sum::<f64>() / test_s.n() as f64;
    let m = test_s.n().min(300);
    let penalty = kmcd(&pred[..m], &test_s.a[..m], &test_s.y[..m], &model.penalty.config())?;
    let test = ci_test(&pred, &test_s.a, &test_s.y, &KernelConfig { seed, ..KernelConfig::test_default() })?;
    Ok((model, RegressionOutcome { mse, penalty, p_value: test.p_value }))
}

/// A deterministic and a stochastic regressor trained with the same
/// penalty weight, plus an unpenalized deterministic base model.
fn regression_trio(
    scm: &LinearScm,
    setup: &RegressionSetup,
    lambdas: &[f64],
    with_base: bool,
    seed: u64,
) -> Result<Vec<(String, f64, RegressionOutcome)>> {
    let opts = regression_options();
    let train_s = gen_linear_scm(scm, opts, setup.n, seed)?;
    let test_s = gen_linear_scm(scm, opts, setup.n_test, seed.wrapping_add(1 << 32))?;
    let base_spec = MlpSpec { hidden: vec![setup.hidden; 2], seed, ..MlpSpec::default() };
    let cfg = |lambda: f64| TrainConfig {
        lambda,
        epochs: setup.epochs,
        kernel: experiment_penalty(),
        ..TrainConfig::default()
    };
    let mut out = Vec::new();
    if with_base {
        out.push(("base".into(), 0.0, fit_and_test(&train_s, &test_s, &base_spec, &cfg(0.0), seed)?.1));
    }
    for &lambda in lambdas {
        out.push(("deterministic".into(), lambda, fit_and_test(&train_s, &test_s, &base_spec, &cfg(lambda), seed)?.1));
        let stoch = MlpSpec { noise_dim: setup.noise_dim, ..base_spec.clone() };
        out.push(("stochastic".into(), lambda, fit_and_test(&train_s, &test_s, &stoch, &cfg(lambda), seed)?.1));
    }
    Ok(out)
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (m, var.sqrt())
}

fn regression_table(spec: &ExperimentSpec, scm: LinearScm, title: &str) -> Result<Bundle> {
    let setup = RegressionSetup::from_spec(spec)?;
    let lambda: f64 = spec.get("lambda", 1000.0)?;
    let (runs, failures) = per_seed(&spec.seeds, |seed| regression_trio(&scm, &setup, &[lambda], true, seed));
    let mut rows = Vec::new();
    let mut by_model: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (seed, outs) in &runs {
        for (model, l, o) in outs {
            rows.push(vec![seed.to_string(), model.clone(), fmt(*l), fmt(o.mse), fmt(o.penalty), fmt(o.p_value)]);
            let e = by_model.entry(model.clone()).or_default();
            e.0.push(o.mse);
            e.1.push(o.p_value);
        }
    }
    let s = runs.len();
    let mut summary_rows = Vec::new();
    let mut text = format!("{title}, lambda={lambda}, {s} seeds\nmodel,mse_mean,mse_sd,count_p_gt_0.05\n");
    let mut count = BTreeMap::new();
    let mut mse = BTreeMap::new();
    for model in ["base", "deterministic", "stochastic"] {
        let Some((m, p)) = by_model.get(model) else { continue };
        let (mu, sd) = mean_sd(m);
        let kept = p.iter().filter(|&&v| v > 0.05).count();
        count.insert(model, kept);
        mse.insert(model, mu);
        let _ = writeln!(text, "{model},{mu:.4},{sd:.4},{kept}/{s}");
        summary_rows.push(vec![model.to_string(), fmt(mu), fmt(sd), format!("{kept}/{s}")]);
    }
    let mut b = Bundle::default();
    b.add("runs.csv", csv_table(&["seed", "model", "lambda", "mse", "penalty", "p_value"], &rows)?);
    b.add("table.csv", csv_table(&["model", "mse_mean", "mse_sd", "count_p_gt_0.05"], &summary_rows)?);
    let groups: Vec<(String, Vec<f64>)> = by_model.iter().map(|(k, v)| (k.clone(), v.1.clone())).collect();
    b.add("pvalues.svg", render_pvalues(title, &groups)?);
    if let (Some(&md), Some(&ms), Some(&cd), Some(&cs)) =
        (mse.get("deterministic"), mse.get("stochastic"), count.get("deterministic"), count.get("stochastic"))
    {
        let rel = (md - ms).abs() / md.min(ms);
        b.checks.push(Check::new(
            "matched MSE",
            rel <= 0.15,
            format!("deterministic {md:.4} vs stochastic {ms:.4} ({:.1}% apart)", 100.0 * rel),
        ));
        let need_s = (6 * s).div_ceil(10);
        let max_d = 2 * s / 10;
        b.checks.push(Check::new(
            "stochastic often fair",
            cs >= need_s,
            format!("p > 0.05 in {cs}/{s} (need {need_s})"),
        ));
        b.checks.push(Check::new(
            "deterministic rarely fair",
            cd <= max_d,
            format!("p > 0.05 in {cd}/{s} (allowed {max_d})"),
        ));
    }
    b.summary = text;
    b.failures = failures;
    Ok(b)
}

fn fig2(spec: &ExperimentSpec) -> Result<Bundle> {
    let setup = RegressionSetup::from_spec(spec)?;
    let lambdas: Vec<f64> = spec.get_list("lambdas", &[0.0, 10.0, 100.0, 1000.0, 10000.0])?;
    let noise: String = spec.get("noise", "uniform".to_string())?;
    let scm = scm_by_name(&noise)?;
    let (runs, failures) = per_seed(&spec.seeds, |seed| regression_trio(&scm, &setup, &lambdas, false, seed));
    let mut rows = Vec::new();
    let mut agg: BTreeMap<(String, u64), [Vec<f64>; 3]> = BTreeMap::new();
    for (seed, outs) in &runs {
        for (model, l, o) in outs {
            rows.push(vec![seed.to_string(), model.clone(), fmt(*l), fmt(o.mse), fmt(o.penalty), fmt(o.p_value)]);
            let e = agg.entry((model.clone(), l.to_bits())).or_default();
            e[0].push(o.mse);
            e[1].push(o.penalty);
            e[2].push(o.p_value);
        }
    }
    let mut series = Vec::new();
    let mut text = String::from("model,lambda,median_mse,median_penalty,median_p,count_p_gt_0.05\n");
    for model in ["deterministic", "stochastic"] {
        let mut pts = Vec::new();
        for &l in &lambdas {
            if let Some([m, pen, p]) = agg.get(&(model.to_string(), l.to_bits())) {
                pts.push((median(pen), median(m)));
                let kept = p.iter().filter(|&&v| v > 0.05).count();
                let _ = writeln!(text, "{model},{l},{},{},{},{kept}/{}", median(m), median(pen), median(p), p.len());
            }
        }
        series.push(Series { label: model.into(), points: pts });
    }
    let mut b = Bundle::default();
    b.add("runs.csv", csv_table(&["seed", "model", "lambda", "mse", "penalty", "p_value"], &rows)?);
    b.add("tradeoff.svg", render_lines("Fairness and prediction error", "penalty (median)", "MSE (median)", &series)?);
    if let Some(&top) = lambdas.iter().max_by(|a, b| a.total_cmp(b)) {
        let groups: Vec<(String, Vec<f64>)> = ["deterministic", "stochastic"]
            .iter()
            .filter_map(|m| agg.get(&(m.to_string(), top.to_bits())).map(|v| (m.to_string(), v[2].clone())))
            .collect();
        b.add("pvalues.svg", render_pvalues(&format!("p-values at lambda = {top}"), &groups)?);
    }
    b.summary = text;
    b.failures = failures;
    Ok(b)
}

fn scm_by_name(name: &str) -> Result<LinearScm> {
    match name {
        "uniform" => Ok(LinearScm::uniform_setting()),
        "laplace" => Ok(LinearScm::laplace_setting()),
        "gaussian" => Ok(LinearScm::gaussian_setting()),
        _ => Err(Error::Argument(format!("unknown noise setting {name:?}, expected uniform, laplace or gaussian"))),
    }
}

fn fig3_style(spec: &ExperimentSpec) -> Result<Bundle> {
    let setup = RegressionSetup::from_spec(spec)?;
    let lambda: f64 = spec.get("lambda", 1000.0)?;
    let noise: String = spec.get("noise", "laplace".to_string())?;
    let scm = scm_by_name(&noise)?;
    let opts = regression_options();
    let (runs, failures) = per_seed(&spec.seeds, |seed| {
        let train_s = gen_linear_scm(&scm, opts, setup.n, seed)?;
        let test_s = gen_linear_scm(&scm, opts, setup.n_test, seed.wrapping_add(1 << 32))?;
        let cfg = TrainConfig { lambda, epochs: setup.epochs, kernel: experiment_penalty(), ..TrainConfig::default() };
        let mut out = Vec::new();
        for (base, hidden) in [("linear", vec![]), ("network", vec![setup.hidden; 2])] {
            for (kind, noise_dim) in [("deterministic", 0), ("stochastic", setup.noise_dim)] {
                let spec = MlpSpec { hidden: hidden.clone(), noise_dim, seed, ..MlpSpec::default() };
                out.push((format!("{base} {kind}"), fit_and_test(&train_s, &test_s, &spec, &cfg, seed)?.1));
            }
        }
        Ok(out)
    });
    let mut rows = Vec::new();
    let mut groups: BTreeMap<String, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (seed, outs) in &runs {
        for (model, o) in outs {
            rows.push(vec![seed.to_string(), model.clone(), fmt(o.mse), fmt(o.penalty), fmt(o.p_value)]);
            let e = groups.entry(model.clone()).or_default();
            e.0.push(o.mse);
            e.1.push(o.p_value);
        }
    }
    let mut text = format!("noise={noise}, lambda={lambda}\nmodel,median_mse,median_p,count_p_gt_0.05\n");
    for (k, (m, p)) in &groups {
        let kept = p.iter().filter(|&&v| v > 0.05).count();
        let _ = writeln!(text, "{k},{},{},{kept}/{}", median(m), median(p), p.len());
    }
    let mut b = Bundle::default();
    b.add("runs.csv", csv_table(&["seed", "model", "mse", "penalty", "p_value"], &rows)?);
    let pv: Vec<(String, Vec<f64>)> = groups.iter().map(|(k, v)| (k.clone(), v.1.clone())).collect();
    b.add("pvalues.svg", render_pvalues("Linear and network base models", &pv)?);
    b.summary = text;
    b.failures = failures;
    Ok(b)
}

/// Relative frequencies of the `(a, x, y)` cells of a discrete sample.
pub fn empirical_joint(s: &Sample, a_levels: usize, x_levels: usize, y_levels: usize) -> Result<DiscreteJoint> {
    if s.x_dim != 1 {
        return Err(Error::Dimension(format!("expected one discrete feature, got {}", s.x_dim)));
    }
    let mut counts = vec![0.0; a_levels * x_levels * y_levels];
    for i in 0..s.n() {
        let (a, x, y) = (s.a[i], s.x_row(i)[0], s.y[i]);
        let idx = |v: f64, levels: usize| (v >= 0.0 && v.fract() == 0.0 && (v as usize) < levels).then_some(v as usize);
        match (idx(a, a_levels), idx(x, x_levels), idx(y, y_levels)) {
            (Some(a), Some(x), Some(y)) => counts[(a * x_levels + x) * y_levels + y] += 1.0,
            _ => return Err(Error::Ingestion { row: i, msg: format!("({a}, {x}, {y}) is outside the table") }),
        }
    }
    let n = s.n() as f64;
    DiscreteJoint::new(a_levels, x_levels, y_levels, counts.into_iter().map(|c| c / n).collect())
}

/// `P(Ŷ = 1 | a, x)` of a classification network, averaged over `draws`
/// noise draws per cell.
pub fn network_table(
    model: &FittedModel,
    a_levels: usize,
    x_levels: usize,
    draws: usize,
    seed: u64,
) -> Result<StochasticClassifier> {
    let mut rng = seed_rng(seed, 9);
    let mut p1 = Vec::with_capacity(a_levels * x_levels);
    for a in 0..a_levels {
        for x in 0..x_levels {
            let s = model.scores(&vec![a as f64; draws], &vec![x as f64; draws], &mut rng)?;
            p1.push((s.iter().sum::<f64>() / draws as f64).clamp(0.0, 1.0));
        }
    }
    StochasticClassifier::new(a_levels, x_levels, p1)
}

/// One row of the classification comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct ClassifierOutcome {
    pub accuracy: f64,
    pub violation: f64,
}

fn evaluate_classifier(joint: &DiscreteJoint, c: &StochasticClassifier) -> Result<ClassifierOutcome> {
    Ok(ClassifierOutcome { accuracy: accuracy(joint, c)?, violation: eo_violation(&positive_rates(joint, c)?)? })
}

/// The non-constant deterministic table with the smallest violation among
/// those whose accuracy is within `window` of `target`.
pub fn best_deterministic_near(
    joint: &DiscreteJoint,
    target: f64,
    window: f64,
) -> Result<Option<(DeterministicClassifier, ClassifierOutcome)>> {
    let (na, nx) = (joint.a_levels(), joint.x_levels());
    let cells = na * nx;
    if cells > 20 {
        return Err(Error::TooLarge { cells, cap: 20 });
    }
    let mut best: Option<(DeterministicClassifier, ClassifierOutcome)> = None;
    for index in 0..(1u64 << cells) {
        let f = DeterministicClassifier::from_index(na, nx, index);
        if f.is_constant() {
            continue;
        }
        let o = evaluate_classifier(joint, &f.to_stochastic())?;
        if (o.accuracy - target).abs() > window + 1e-12 {
            continue;
        }
        if best.as_ref().is_none_or(|(_, b)| o.violation < b.violation) {
            best = Some((f, o));
        }
    }
    Ok(best)
}

fn table1(spec: &ExperimentSpec) -> Result<Bundle> {
    let n: usize = spec.get("n", 500)?;
    let lambda: f64 = spec.get("lambda", 10_000.0)?;
    let epochs: usize = spec.get("epochs", 200)?;
    let noise_dim: usize = spec.get("noise_dim", 2)?;
    let hidden: usize = spec.get("hidden", 20)?;
    let draws: usize = spec.get("draws", 20_000)?;
    let truth = BuiltinJoint::ExpR.joint();
    let (runs, failures) = per_seed(&spec.seeds, |seed| {
        let s = gen_discrete(&truth, n, seed)?;
        let emp = empirical_joint(&s, 2, 2, 2)?;
        let bayes = emp.bayes_classifier()?.to_stochastic();
        let mspec = MlpSpec { hidden: vec![hidden; 2], noise_dim, task: Task::Binary, seed, ..MlpSpec::default() };
        let cfg = TrainConfig { lambda, epochs, batch: 100, kernel: experiment_penalty(), ..TrainConfig::default() };
        let model = train(&s, &mspec, &cfg)?;
        let table = network_table(&model, 2, 2, draws, seed)?;
        let stoch = evaluate_classifier(&truth, &table)?;
        let det = match best_deterministic_near(&truth, stoch.accuracy, 0.05)? {
            Some((f, o)) => {
                let on_sample = evaluate_classifier(&emp, &f.to_stochastic())?;
                Some((f, o, on_sample))
            }
            None => None,
        };
        let base = (evaluate_classifier(&truth, &bayes)?, evaluate_classifier(&emp, &bayes)?);
        Ok((base, (stoch, evaluate_classifier(&emp, &table)?), det))
    });
    let mut rows = Vec::new();
    let (mut sv, mut dv, mut sa, mut da, mut ba, mut bv) = (vec![], vec![], vec![], vec![], vec![], vec![]);
    let mut missing = 0;
    let row = |seed: u64, model: &str, o: &ClassifierOutcome, on_sample: &ClassifierOutcome, table: String| {
        vec![
            seed.to_string(),
            model.to_string(),
            fmt(o.accuracy),
            fmt(o.violation),
            fmt(on_sample.accuracy),
            fmt(on_sample.violation),
            table,
        ]
    };
    for (seed, ((base, base_s), (stoch, stoch_s), det)) in &runs {
        rows.push(row(*seed, "base", base, base_s, String::new()));
        rows.push(row(*seed, "stochastic", stoch, stoch_s, String::new()));
        ba.push(base.accuracy);
        bv.push(base.violation);
        sa.push(stoch.accuracy);
        sv.push(stoch.violation);
        match det {
            Some((f, o, o_s)) => {
                let labels: Vec<String> = f.labels().iter().map(ToString::to_string).collect();
                rows.push(row(*seed, "deterministic", o, o_s, labels.join("")));
                da.push(o.accuracy);
                dv.push(o.violation);
            }
            None => missing += 1,
        }
    }
    let mut b = Bundle::default();
    b.add(
        "runs.csv",
        csv_table(&["seed", "model", "accuracy", "violation", "sample_accuracy", "sample_violation", "table"], &rows)?,
    );
    let line = |name: &str, acc: &[f64], vio: &[f64]| {
        let (am, asd) = mean_sd(acc);
        let (vm, vsd) = mean_sd(vio);
        format!("{name},{am:.3},{asd:.3},{vm:.3},{vsd:.3}\n")
    };
    let mut text =
        format!("expR, n={n}, lambda={lambda}\nmodel,accuracy_mean,accuracy_sd,violation_mean,violation_sd\n");
    text += &line("base", &ba, &bv);
    text += &line("deterministic", &da, &dv);
    text += &line("stochastic", &sa, &sv);
    if missing > 0 {
        let _ = writeln!(text, "no deterministic table within 0.05 accuracy in {missing} seeds");
    }
    let (svm, _) = mean_sd(&sv);
    let (dvm, _) = mean_sd(&dv);
    b.checks = vec![
        Check::new("stochastic violation", !sv.is_empty() && svm <= 0.08, format!("mean {svm:.3} (need <= 0.08)")),
        Check::new(
            "deterministic violation",
            !dv.is_empty() && missing == 0 && dvm >= 0.2,
            format!("mean {dvm:.3} over {} seeds (need >= 0.2)", dv.len()),
        ),
    ];
    b.summary = text;
    b.failures = failures;
    Ok(b)
}

fn joint_for(spec: &ExperimentSpec, seed: u64) -> Result<(String, DiscreteJoint)> {
    match spec.overrides.get("joint") {
        Some(name) => Ok((name.clone(), BuiltinJoint::parse(name)?.joint())),
        None => Ok((format!("random-{seed}"), random_joint(2, 2, &mut seed_rng(seed, 3))?)),
    }
}

fn grid_of(spec: &ExperimentSpec) -> Result<usize> {
    let grid: usize = spec.get("grid", DEFAULT_GRID)?;
    if grid < 2 {
        return Err(Error::Argument("grid needs at least 2 points".into()));
    }
    Ok(grid)
}

fn thm5_regions(spec: &ExperimentSpec) -> Result<Bundle> {
    let grid = grid_of(spec)?;
    let mut spec_fixed = spec.clone();
    spec_fixed.overrides.entry("joint".into()).or_insert_with(|| "expR".into());
    let (name, joint) = joint_for(&spec_fixed, 0)?;
    let clf = joint.bayes_classifier()?;
    let rates = positive_rates(&joint, &clf)?;
    let post = feasible_area_post(&rates)?;
    let inn = feasible_area_in(&joint, grid)?;
    let mut b = Bundle::default();
    let mut regions: Vec<ConvexRegion> = rates.iter().map(|g| group_hull(*g)).collect();
    let mut labels: Vec<String> = (0..rates.len()).map(|a| format!("group {a} hull")).collect();
    regions.push(post.clone());
    labels.push("post-processing".into());
    regions.push(inn.region.clone());
    labels.push("all predictors".into());
    let label_refs: Vec<&str> = labels.iter().map(String::as_str).collect();
    b.add("regions.svg", render_regions(&regions, &label_refs)?);
    b.add("feasible_in.csv", inn.sweep_csv());
    b.add("post_vertices.txt", post.to_vertex_text());
    b.add("in_vertices.txt", inn.region.to_vertex_text());
    let subset = post.vertices().iter().all(|v| inn.region.contains(*v, 1e-6));
    b.summary = format!(
        "joint={name}\nbase classifier={:?}\nrates={:?}\narea_post={}\narea_in={}\nmargin={}\n",
        clf.labels(),
        rates.iter().map(|g| (g.fpr, g.tpr)).collect::<Vec<_>>(),
        post.area(),
        inn.region.area(),
        nontriviality_margin(&rates)
    );
    b.checks.push(Check::new(
        "post within in",
        subset,
        format!("{} post vertices checked at tol 1e-6", post.vertices().len()),
    ));
    Ok(b)
}

/// Geometry outcome on one joint.
#[derive(Debug, Clone, PartialEq)]
pub struct GeometryOutcome {
    pub margin: f64,
    pub post_nonempty: bool,
    pub post_has_diagonal: bool,
    pub post_within_in: bool,
    pub hausdorff: f64,
}

/// Compares `Ω(Ỹ_post)` of the Bayes classifier with `Ω(Ỹ_in)` and
/// `Ω(Ỹ_in^*)` on one joint.
pub fn geometry_outcome(joint: &DiscreteJoint, grid: usize) -> Result<GeometryOutcome> {
    let opt = joint.bayes_classifier()?;
    let rates = positive_rates(joint, &opt)?;
    let post = feasible_area_post(&rates)?;
    let inn = feasible_area_in(joint, grid)?;
    let pseudo = feasible_area_in_pseudo(joint, &opt, grid)?;
    let diag = ConvexRegion::diagonal();
    Ok(GeometryOutcome {
        margin: nontriviality_margin(&rates),
        post_nonempty: !post.is_empty(),
        post_has_diagonal: diag.vertices().iter().all(|v| post.contains(*v, 1e-9)),
        post_within_in: post.vertices().iter().all(|v| inn.region.contains(*v, 1e-6)),
        hausdorff: region_hausdorff(&pseudo.region, &post),
    })
}

fn thm6_equiv(spec: &ExperimentSpec) -> Result<Bundle> {
    let grid = grid_of(spec)?;
    let step = 1.0 / (grid - 1) as f64;
    let (runs, failures) = per_seed(&spec.seeds, |seed| {
        let (name, joint) = joint_for(spec, seed)?;
        Ok((name, geometry_outcome(&joint, grid)?))
    });
    let mut rows = Vec::new();
    let (mut a_ok, mut b_ok, mut c_ok) = (0, 0, 0);
    let mut worst: f64 = 0.0;
    for (seed, (name, g)) in &runs {
        let a = g.margin <= 0.0 || (g.post_nonempty && g.post_has_diagonal);
        let c = g.hausdorff <= 2.0 * step;
        a_ok += usize::from(a);
        b_ok += usize::from(g.post_within_in);
        c_ok += usize::from(c);
        worst = worst.max(g.hausdorff);
        rows.push(vec![
            seed.to_string(),
            name.clone(),
            fmt(g.margin),
            g.post_nonempty.to_string(),
            g.post_has_diagonal.to_string(),
            g.post_within_in.to_string(),
            fmt(g.hausdorff),
            if c { "PASS" } else { "FAIL" }.into(),
        ]);
    }
    let s = spec.seeds.len();
    let mut b = Bundle::default();
    b.add(
        "geometry.csv",
        csv_table(
            &[
                "seed",
                "joint",
                "margin",
                "post_nonempty",
                "post_has_diagonal",
                "post_within_in",
                "hausdorff",
                "hausdorff_check",
            ],
            &rows,
        )?,
    );
    b.summary = format!("grid={grid}\ninstances={s}\nmax_hausdorff={worst}\n");
    b.checks = vec![
        Check::new("post nonempty with diagonal", a_ok == s, format!("{a_ok}/{s} instances")),
        Check::new("post within in", b_ok == s, format!("{b_ok}/{s} instances at tol 1e-6")),
        Check::new("in* equals post", c_ok == s, format!("{c_ok}/{s} within {:.3}, worst {worst:.2e}", 2.0 * step)),
    ];
    b.failures = failures;
    Ok(b)
}
