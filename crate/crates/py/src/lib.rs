//! Python bindings for the `eqodds` toolkit.

use std::collections::BTreeMap;

use eqodds::attain::{check_thm4, corollary_ratio, search_fair_deterministic};
use eqodds::experiment::{run_experiment, ExperimentSpec, Pipeline};
use eqodds::postprocess::{fit_postprocess, Costs, OutcomeTable};
use eqodds::probcore::{
    accuracy, eo_violation, positive_rates, DeterministicClassifier, DiscreteJoint, StochasticClassifier,
};
use eqodds::simulate::{gen_linear_scm, AttributeLaw, LinearScm, ScmOptions};
use eqodds::statmod::{ci_test as run_ci_test, KernelConfig};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn py_err(e: eqodds::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Builds a joint from a nested list `p[a][x][y]`.
fn joint_from(p: Vec<Vec<Vec<f64>>>) -> PyResult<DiscreteJoint> {
    let a_levels = p.len();
    let x_levels = p.first().map_or(0, Vec::len);
    let y_levels = p.first().and_then(|r| r.first()).map_or(0, Vec::len);
    if p.iter().any(|r| r.len() != x_levels || r.iter().any(|c| c.len() != y_levels)) {
        return Err(PyValueError::new_err("joint must be a rectangular nested list p[a][x][y]"));
    }
    DiscreteJoint::new(a_levels, x_levels, y_levels, p.into_iter().flatten().flatten().collect()).map_err(py_err)
}

fn stochastic_from(p1: Vec<Vec<f64>>) -> PyResult<StochasticClassifier> {
    let a_levels = p1.len();
    let x_levels = p1.first().map_or(0, Vec::len);
    if p1.iter().any(|r| r.len() != x_levels) {
        return Err(PyValueError::new_err("classifier must be a rectangular nested list p1[a][x]"));
    }
    StochasticClassifier::new(a_levels, x_levels, p1.into_iter().flatten().collect()).map_err(py_err)
}

fn deterministic_from(f: Vec<Vec<u8>>) -> PyResult<DeterministicClassifier> {
    let a_levels = f.len();
    let x_levels = f.first().map_or(0, Vec::len);
    if f.iter().any(|r| r.len() != x_levels) {
        return Err(PyValueError::new_err("classifier must be a rectangular nested list f[a][x]"));
    }
    DeterministicClassifier::new(a_levels, x_levels, f.into_iter().flatten().collect()).map_err(py_err)
}

/// Per-group `(fpr, tpr)` of a classifier with `P(Ŷ=1|a,x) = p1[a][x]`.
#[pyfunction]
pub fn rates(joint: Vec<Vec<Vec<f64>>>, p1: Vec<Vec<f64>>) -> PyResult<Vec<(f64, f64)>> {
    let r = positive_rates(&joint_from(joint)?, &stochastic_from(p1)?).map_err(py_err)?;
    Ok(r.iter().map(|g| (g.fpr, g.tpr)).collect())
}

/// Largest gap of false or true positive rates across groups.
#[pyfunction]
pub fn violation(joint: Vec<Vec<Vec<f64>>>, p1: Vec<Vec<f64>>) -> PyResult<f64> {
    eo_violation(&positive_rates(&joint_from(joint)?, &stochastic_from(p1)?).map_err(py_err)?).map_err(py_err)
}

/// Expected accuracy of a classifier on a joint.
#[pyfunction]
#[pyo3(name = "accuracy")]
pub fn accuracy_py(joint: Vec<Vec<Vec<f64>>>, p1: Vec<Vec<f64>>) -> PyResult<f64> {
    accuracy(&joint_from(joint)?, &stochastic_from(p1)?).map_err(py_err)
}

/// Whether the deterministic table `f[a][x]` attains Equalized Odds,
/// and the largest preimage-mass gap.
#[pyfunction]
#[pyo3(signature = (joint, f, tol = 1e-9))]
pub fn check(joint: Vec<Vec<Vec<f64>>>, f: Vec<Vec<u8>>, tol: f64) -> PyResult<(bool, f64)> {
    let r = check_thm4(&joint_from(joint)?, &deterministic_from(f)?, tol).map_err(py_err)?;
    Ok((r.holds, r.max_gap))
}

/// Every deterministic table that attains Equalized Odds on the joint.
#[pyfunction]
#[pyo3(signature = (joint, tol = 1e-9))]
pub fn search(joint: Vec<Vec<Vec<f64>>>, tol: f64) -> PyResult<Vec<Vec<Vec<u32>>>> {
    let found = search_fair_deterministic(&joint_from(joint)?, tol).map_err(py_err)?;
    Ok(found
        .iter()
        .map(|f| (0..f.a_levels()).map(|a| (0..f.x_levels()).map(|x| u32::from(f.label(a, x))).collect()).collect())
        .collect())
}

/// Optimal fair post-processor of the classifier `p1`: returns
/// `(beta0, beta1, (fpr, tpr), loss)`.
#[pyfunction]
#[pyo3(signature = (joint, p1, false_pos = 1.0, false_neg = 1.0))]
#[allow(clippy::type_complexity)]
pub fn postprocess(
    joint: Vec<Vec<Vec<f64>>>,
    p1: Vec<Vec<f64>>,
    false_pos: f64,
    false_neg: f64,
) -> PyResult<(Vec<f64>, Vec<f64>, (f64, f64), f64)> {
    let table = OutcomeTable::from_joint(&joint_from(joint)?, &stochastic_from(p1)?).map_err(py_err)?;
    let fit = fit_postprocess(&table, Costs { false_pos, false_neg }).map_err(py_err)?;
    Ok((fit.params.beta0, fit.params.beta1, (fit.point.fpr, fit.point.tpr), fit.loss))
}

/// Kernel conditional independence test of `yhat ⫫ a | y`; returns
/// `(statistic, p_value)`.
#[pyfunction]
#[pyo3(signature = (yhat, a, y, permutations = 199, seed = 0))]
pub fn ci_test(yhat: Vec<f64>, a: Vec<f64>, y: Vec<f64>, permutations: usize, seed: u64) -> PyResult<(f64, f64)> {
    let cfg = KernelConfig { permutations, seed, ..KernelConfig::test_default() };
    let r = run_ci_test(&yhat, &a, &y, &cfg).map_err(py_err)?;
    Ok((r.statistic, r.p_value))
}

fn scm_named(noise: &str) -> PyResult<LinearScm> {
    match noise {
        "uniform" => Ok(LinearScm::uniform_setting()),
        "laplace" => Ok(LinearScm::laplace_setting()),
        "gaussian" => Ok(LinearScm::gaussian_setting()),
        _ => Err(PyValueError::new_err(format!("unknown noise setting {noise:?}"))),
    }
}

/// Sample of the linear structural model as `(a, x, y)` lists.
#[pyfunction]
#[pyo3(signature = (n, seed = 0, noise = "uniform", continuous_a = false))]
pub fn simulate_linear(
    n: usize,
    seed: u64,
    noise: &str,
    continuous_a: bool,
) -> PyResult<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let a_law = if continuous_a { AttributeLaw::Uniform01 } else { AttributeLaw::default() };
    let s =
        gen_linear_scm(&scm_named(noise)?, ScmOptions { a_law, ..ScmOptions::default() }, n, seed).map_err(py_err)?;
    Ok((s.a, s.x, s.y))
}

/// The ratio `α/β` at which `α·A + β·X` satisfies Equalized Odds in the
/// Gaussian setting.
#[pyfunction]
pub fn gaussian_fair_ratio() -> PyResult<f64> {
    corollary_ratio(&LinearScm::gaussian_setting()).map_err(py_err)
}

/// Runs a named pipeline; returns `(files, summary, completed)`.
#[pyfunction]
#[pyo3(signature = (pipeline, seeds, overrides = None))]
pub fn experiment(
    pipeline: &str,
    seeds: Vec<u64>,
    overrides: Option<BTreeMap<String, String>>,
) -> PyResult<(BTreeMap<String, String>, String, bool)> {
    let p: Pipeline = pipeline.parse().map_err(py_err)?;
    let spec = ExperimentSpec { pipeline: p, seeds, overrides: overrides.unwrap_or_default() };
    let b = run_experiment(&spec).map_err(py_err)?;
    let completed = b.completed();
    Ok((b.files, b.summary, completed))
}

#[pymodule]
fn eqodds_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(rates, m)?)?;
    m.add_function(wrap_pyfunction!(violation, m)?)?;
    m.add_function(wrap_pyfunction!(accuracy_py, m)?)?;
    m.add_function(wrap_pyfunction!(check, m)?)?;
    m.add_function(wrap_pyfunction!(search, m)?)?;
    m.add_function(wrap_pyfunction!(postprocess, m)?)?;
    m.add_function(wrap_pyfunction!(ci_test, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_linear, m)?)?;
    m.add_function(wrap_pyfunction!(gaussian_fair_ratio, m)?)?;
    m.add_function(wrap_pyfunction!(experiment, m)?)?;
    Ok(())
}
