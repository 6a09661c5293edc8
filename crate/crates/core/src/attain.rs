//! Attainability of Equalized Odds by deterministic predictors.
//!
//! For discrete classification a deterministic `f` is fair exactly when
//! (i) every predicted label occurs in all groups or in none, and (ii) the
//! mass each group puts on the preimage of a label is the same across
//! groups for each true label. For the linear-Gaussian structural model a
//! linear predictor `αA + βX` is fair exactly at one ratio `α/β`.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::probcore::{DeterministicClassifier, DiscreteJoint, Prob};

pub use crate::simulate::{LinearScm, NoiseLaw};

/// Largest `|A|·|X|` accepted by [`search_fair_deterministic`].
pub const ENUMERATION_CAP: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailedCondition {
    None,
    /// Some label is predicted in one group and never in another.
    Coverage,
    /// Preimage masses differ across groups.
    Matching,
}

/// The cell `(ŷ, a, a′, y)` where the largest preimage-mass gap occurs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Witness {
    pub yhat: usize,
    pub a: usize,
    pub a_prime: usize,
    pub y: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionReport {
    pub holds: bool,
    pub failed_condition: FailedCondition,
    pub witness: Option<Witness>,
    pub max_gap: f64,
}

fn check_arity<T: Prob>(joint: &DiscreteJoint<T>, f: &DeterministicClassifier) -> Result<()> {
    joint.ensure_binary()?;
    if f.a_levels() != joint.a_levels() || f.x_levels() != joint.x_levels() {
        return Err(Error::Dimension(format!(
            "classifier is {}x{}, joint is {}x{}",
            f.a_levels(),
            f.x_levels(),
            joint.a_levels(),
            joint.x_levels()
        )));
    }
    Ok(())
}

/// Evaluates conditions (i) and (ii) by building the preimage sets
/// `S^(ŷ)_{X|a} = {x : f(a,x) = ŷ, P(a,x) > 0}` and summing `P(x|a,y)` over
/// them. The report holds when every gap is at most `tol`.
pub fn check_thm4<T: Prob>(joint: &DiscreteJoint<T>, f: &DeterministicClassifier, tol: T) -> Result<ConditionReport> {
    check_arity(joint, f)?;
    let na = joint.a_levels();
    let mut coverage_ok = true;
    let mut best: Option<(T, Witness)> = None;
    for yhat in 0..2u8 {
        let preimage: Vec<Vec<usize>> = (0..na)
            .map(|a| (0..joint.x_levels()).filter(|&x| f.label(a, x) == yhat && joint.p_ax(a, x) > T::zero()).collect())
            .collect();
        let covered = preimage.iter().filter(|s| !s.is_empty()).count();
        if covered != 0 && covered != na {
            coverage_ok = false;
        }
        for y in 0..2 {
            let mass: Vec<T> = preimage
                .iter()
                .enumerate()
                .map(|(a, s)| s.iter().fold(T::zero(), |acc, &x| acc + joint.x_given_ay(x, a, y)))
                .collect();
            for a in 0..na {
                for a2 in (a + 1)..na {
                    let gap = (mass[a].clone() - mass[a2].clone()).abs();
                    if best.as_ref().is_none_or(|(g, _)| gap > *g) {
                        best = Some((gap, Witness { yhat: yhat as usize, a, a_prime: a2, y }));
                    }
                }
            }
        }
    }
    let (gap, witness) = match best {
        Some((g, w)) => (g, Some(w)),
        None => (T::zero(), None),
    };
    let holds = gap <= tol;
    let failed_condition = match (holds, coverage_ok) {
        (true, _) => FailedCondition::None,
        (false, false) => FailedCondition::Coverage,
        (false, true) => FailedCondition::Matching,
    };
    Ok(ConditionReport { holds, failed_condition, witness: if holds { None } else { witness }, max_gap: gap.as_f64() })
}

/// Every deterministic table `f: A × X → {0, 1}` that satisfies both
/// conditions, in enumeration order.
pub fn search_fair_deterministic<T: Prob>(joint: &DiscreteJoint<T>, tol: T) -> Result<Vec<DeterministicClassifier>> {
    joint.ensure_binary()?;
    let cells = joint.a_levels() * joint.x_levels();
    if cells > ENUMERATION_CAP {
        return Err(Error::TooLarge { cells, cap: ENUMERATION_CAP });
    }
    let (na, nx) = (joint.a_levels(), joint.x_levels());
    (0..1u64 << cells)
        .into_par_iter()
        .map(|index| {
            let f = DeterministicClassifier::from_index(na, nx, index);
            Ok(check_thm4(joint, &f, tol.clone())?.holds.then_some(f))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().flatten().collect())
}

fn require_gaussian(scm: &LinearScm) -> Result<()> {
    if scm.is_gaussian() {
        Ok(())
    } else {
        Err(Error::WrongLaw(
            "E_X and E = d·E_H + E_Y must be Gaussian; with non-Gaussian noise no linear ratio is fair".into(),
        ))
    }
}

/// Conditional law of `X` given `(A=a, Y=y)` in the linear-Gaussian model,
/// as `(mean, variance)`.
pub fn gaussian_x_given_ay(scm: &LinearScm, a: f64, y: f64) -> Result<(f64, f64)> {
    require_gaussian(scm)?;
    let s2x = scm.sigma2_ex();
    let den = scm.c * scm.c * s2x + scm.sigma2_e();
    let mean = scm.q * a + scm.c * s2x * (y - (scm.q * scm.c + scm.b * scm.d) * a) / den;
    let var = (1.0 - scm.c * scm.c * s2x / den) * s2x;
    Ok((mean, var))
}

/// Density of `Ŷ = αA + βX` at `ŷ` given `(A=a, Y=y)`: the conditional
/// density of `X` at `(ŷ − αa)/β`, divided by `|β|`.
pub fn gaussian_q(scm: &LinearScm, alpha: f64, beta: f64, a: f64, y: f64, yhat: f64) -> Result<f64> {
    if beta == 0.0 {
        return Err(Error::Degenerate("beta = 0: the predictor ignores X".into()));
    }
    scm.check_hypotheses()?;
    let (mean, var) = gaussian_x_given_ay(scm, a, y)?;
    let x = (yhat - alpha * a) / beta;
    let z2 = (x - mean).powi(2) / var;
    Ok((-0.5 * z2).exp() / (2.0 * std::f64::consts::PI * var).sqrt() / beta.abs())
}

/// Largest `|Q(a,y,ŷ) − Q(a′,y,ŷ)|` over all grid combinations.
pub fn gaussian_q_gap(
    scm: &LinearScm,
    alpha: f64,
    beta: f64,
    a_grid: &[f64],
    y_grid: &[f64],
    yhat_grid: &[f64],
) -> Result<f64> {
    let mut gap: f64 = 0.0;
    for &y in y_grid {
        for &yh in yhat_grid {
            let q: Vec<f64> = a_grid.iter().map(|&a| gaussian_q(scm, alpha, beta, a, y, yh)).collect::<Result<_>>()?;
            let (lo, hi) = q.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
            gap = gap.max(hi - lo);
        }
    }
    Ok(gap)
}

/// The ratio `α/β = (bdc·σ²_EX − q·σ²_E)/(c²·σ²_EX + σ²_E)` at which
/// `αA + βX` satisfies Equalized Odds in the linear-Gaussian model.
pub fn corollary_ratio(scm: &LinearScm) -> Result<f64> {
    require_gaussian(scm)?;
    let (s2x, s2e) = (scm.sigma2_ex(), scm.sigma2_e());
    let den = scm.c * scm.c * s2x + s2e;
    if !(den > 0.0) {
        return Err(Error::Precondition("c²·σ²_EX + σ²_E must be positive".into()));
    }
    Ok((scm.b * scm.d * scm.c * s2x - scm.q * s2e) / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probcore::{eo_violation, positive_rates};
    use crate::simulate::BuiltinJoint;
    use num_rational::Rational64;

    fn zero() -> Rational64 {
        Rational64::from_integer(0)
    }

    #[test]
    fn expl_crafted_predictor_is_fair() {
        let j = BuiltinJoint::ExpL.exact();
        let f = DeterministicClassifier::from_fn(2, 2, |a, x| u8::from(a == x)).unwrap();
        let r = check_thm4(&j, &f, zero()).unwrap();
        assert!(r.holds);
        assert_eq!(r.failed_condition, FailedCondition::None);
    }

    #[test]
    fn expr_admits_only_constants() {
        let fair = search_fair_deterministic(&BuiltinJoint::ExpR.exact(), zero()).unwrap();
        assert_eq!(fair.len(), 2);
        assert!(fair.iter().all(DeterministicClassifier::is_constant));
    }

    #[test]
    fn expl_search_contains_the_crafted_pair() {
        let fair = search_fair_deterministic(&BuiltinJoint::ExpL.exact(), zero()).unwrap();
        let f = DeterministicClassifier::from_fn(2, 2, |a, x| u8::from(a == x)).unwrap();
        assert!(fair.contains(&f) && fair.contains(&f.flipped()));
        assert!(fair.iter().filter(|g| g.is_constant()).count() == 2);
    }

    #[test]
    fn x_only_predictors_are_fair_when_x_ignores_a() {
        let j = BuiltinJoint::Independent.exact();
        for f in [|_: usize, x: usize| x as u8, |_: usize, x: usize| 1 - x as u8] {
            let f = DeterministicClassifier::from_fn(2, 2, f).unwrap();
            assert!(check_thm4(&j, &f, zero()).unwrap().holds);
        }
    }

    #[test]
    fn coverage_failure_is_reported() {
        let j = BuiltinJoint::ExpR.exact();
        let f = DeterministicClassifier::from_fn(2, 2, |a, _| a as u8).unwrap();
        let r = check_thm4(&j, &f, zero()).unwrap();
        assert!(!r.holds);
        assert_eq!(r.failed_condition, FailedCondition::Coverage);
        assert_eq!(r.max_gap, 1.0);
        let v = eo_violation(&positive_rates(&j, &f).unwrap()).unwrap();
        assert_eq!(v, Rational64::from_integer(1));
    }

    #[test]
    fn oversized_domain_is_refused() {
        let j = DiscreteJoint::new(3, 7, 2, vec![1.0 / 42.0; 42]).unwrap();
        assert!(matches!(search_fair_deterministic(&j, 1e-9), Err(Error::TooLarge { cells: 21, .. })));
    }

    #[test]
    fn corollary_ratio_equalizes_q() {
        let scm = LinearScm::gaussian_setting();
        let r = corollary_ratio(&scm).unwrap();
        let grid: Vec<f64> = (0..5).map(|i| -1.0 + 0.5 * i as f64).collect();
        assert!(gaussian_q_gap(&scm, r, 1.0, &grid, &grid, &grid).unwrap() <= 1e-12);
        assert!(gaussian_q_gap(&scm, r + 0.1, 1.0, &grid, &grid, &grid).unwrap() > 1e-3);
    }

    #[test]
    fn corollary_ratio_limits() {
        let g = |s| NoiseLaw::gaussian(s).unwrap();
        let scm = LinearScm { q: 0.0, b: 0.0, c: 0.9, d: 0.6, e_x: g(0.4), e_h: g(0.4), e_y: g(0.2) };
        assert_eq!(corollary_ratio(&scm).unwrap(), 0.0);
        let tiny = LinearScm { e_h: g(1e-6), e_y: g(1e-4), ..LinearScm::gaussian_setting() };
        let want = tiny.b * tiny.d / tiny.c;
        assert!((corollary_ratio(&tiny).unwrap() - want).abs() < 1e-6);
        assert!(matches!(corollary_ratio(&LinearScm::laplace_setting()), Err(Error::WrongLaw(_))));
    }

    #[test]
    fn q_preconditions() {
        let scm = LinearScm { q: 0.0, b: 0.0, ..LinearScm::gaussian_setting() };
        assert!(matches!(gaussian_q(&scm, 0.0, 1.0, 0.0, 0.0, 0.0), Err(Error::Precondition(_))));
        let scm = LinearScm::gaussian_setting();
        assert!(matches!(gaussian_q(&scm, 0.0, 0.0, 0.0, 0.0, 0.0), Err(Error::Degenerate(_))));
    }

    #[test]
    fn q_integrates_to_one() {
        let scm = LinearScm::gaussian_setting();
        let (alpha, beta, a, y) = (0.3, -1.7, 1.0, 0.5);
        let (m, v) = gaussian_x_given_ay(&scm, a, y).unwrap();
        let (mu, sd) = (alpha * a + beta * m, beta.abs() * v.sqrt());
        let steps = 20_000;
        let h = 16.0 * sd / steps as f64;
        // composite Simpson over mu ± 8 sd
        let mut s = 0.0;
        for i in 0..=steps {
            let w = if i == 0 || i == steps {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            s += w * gaussian_q(&scm, alpha, beta, a, y, mu - 8.0 * sd + i as f64 * h).unwrap();
        }
        assert!((s * h / 3.0 - 1.0).abs() < 1e-6);
    }
}
