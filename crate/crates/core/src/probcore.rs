//! Exact finite probability arithmetic over `A × X × Y` tables.
//!
//! Tables are generic over [`Prob`], implemented for `f64` and for
//! [`Rational64`], so worked examples with small fractions reproduce
//! bit-exactly while the geometry and LP layers run on doubles.

use std::collections::BTreeMap;
use std::fmt::Debug;

use num_rational::Rational64;
use num_traits::{Num, Signed, ToPrimitive};

use crate::error::{Error, Result};
use crate::sample::Sample;

/// Scalar type for probability tables.
pub trait Prob: Clone + PartialOrd + Debug + Send + Sync + Num + Signed + ToPrimitive + 'static {
    /// Allowed deviation of a table's total mass from one.
    fn norm_tol() -> Self;

    fn as_f64(&self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Prob for f64 {
    fn norm_tol() -> Self {
        1e-12
    }
}

impl Prob for Rational64 {
    fn norm_tol() -> Self {
        Rational64::from_integer(0)
    }
}

fn in_unit<T: Prob>(v: &T) -> bool {
    *v >= T::zero() && *v <= T::one()
}

/// Joint probability table `P(A=a, X=x, Y=y)` over finite domains.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscreteJoint<T = f64> {
    a_levels: usize,
    x_levels: usize,
    y_levels: usize,
    p: Vec<T>,
}

impl<T: Prob> DiscreteJoint<T> {
    /// Builds a joint from a flat table laid out `[a][x][y]`.
    pub fn new(a_levels: usize, x_levels: usize, y_levels: usize, p: Vec<T>) -> Result<Self> {
        if a_levels == 0 || x_levels == 0 || y_levels < 2 {
            return Err(Error::Dimension(format!(
                "need |A|,|X| >= 1 and |Y| >= 2, got {a_levels}x{x_levels}x{y_levels}"
            )));
        }
        if p.len() != a_levels * x_levels * y_levels {
            return Err(Error::Dimension(format!(
                "table has {} entries, expected {}",
                p.len(),
                a_levels * x_levels * y_levels
            )));
        }
        if let Some(bad) = p.iter().position(|v| *v < T::zero() || v.as_f64().is_nan()) {
            return Err(Error::InvalidTable(format!("entry {bad} is negative or NaN")));
        }
        let total = p.iter().cloned().fold(T::zero(), |s, v| s + v);
        if (total.clone() - T::one()).abs() > T::norm_tol() {
            return Err(Error::InvalidTable(format!("entries sum to {total:?}, not 1")));
        }
        let joint = Self { a_levels, x_levels, y_levels, p };
        for a in 0..a_levels {
            for y in 0..y_levels {
                if joint.p_ay(a, y) <= T::zero() {
                    return Err(Error::InvalidTable(format!("marginal P(A={a}, Y={y}) is not positive")));
                }
            }
        }
        Ok(joint)
    }

    /// Builds a joint from `P(A=a, Y=y)` (indexed `[a][y]`) and
    /// `P(X=x | A=a, Y=y)` (indexed `[a][y][x]`).
    pub fn from_conditionals(p_ay: &[Vec<T>], x_given_ay: &[Vec<Vec<T>>]) -> Result<Self> {
        let a_levels = p_ay.len();
        let y_levels = p_ay.first().map_or(0, Vec::len);
        let x_levels = x_given_ay.first().and_then(|r| r.first()).map_or(0, Vec::len);
        if x_given_ay.len() != a_levels {
            return Err(Error::Dimension("conditional table has wrong |A|".into()));
        }
        let mut p = vec![T::zero(); a_levels * x_levels * y_levels];
        for a in 0..a_levels {
            if p_ay[a].len() != y_levels || x_given_ay[a].len() != y_levels {
                return Err(Error::Dimension(format!("row a={a} has wrong |Y|")));
            }
            for y in 0..y_levels {
                let cond = &x_given_ay[a][y];
                if cond.len() != x_levels {
                    return Err(Error::Dimension(format!("row (a={a}, y={y}) has wrong |X|")));
                }
                let mass = cond.iter().cloned().fold(T::zero(), |s, v| s + v);
                if (mass.clone() - T::one()).abs() > T::norm_tol() {
                    return Err(Error::InvalidTable(format!("P(X | A={a}, Y={y}) sums to {mass:?}")));
                }
                for x in 0..x_levels {
                    p[(a * x_levels + x) * y_levels + y] = p_ay[a][y].clone() * cond[x].clone();
                }
            }
        }
        Self::new(a_levels, x_levels, y_levels, p)
    }

    pub fn a_levels(&self) -> usize {
        self.a_levels
    }

    pub fn x_levels(&self) -> usize {
        self.x_levels
    }

    pub fn y_levels(&self) -> usize {
        self.y_levels
    }

    pub fn entries(&self) -> &[T] {
        &self.p
    }

    #[inline]
    pub fn p(&self, a: usize, x: usize, y: usize) -> T {
        self.p[(a * self.x_levels + x) * self.y_levels + y].clone()
    }

    pub fn p_ay(&self, a: usize, y: usize) -> T {
        (0..self.x_levels).fold(T::zero(), |s, x| s + self.p(a, x, y))
    }

    pub fn p_ax(&self, a: usize, x: usize) -> T {
        (0..self.y_levels).fold(T::zero(), |s, y| s + self.p(a, x, y))
    }

    pub fn p_y(&self, y: usize) -> T {
        (0..self.a_levels).fold(T::zero(), |s, a| s + self.p_ay(a, y))
    }

    /// `P(X=x | A=a, Y=y)`; the marginal is positive by construction.
    pub fn x_given_ay(&self, x: usize, a: usize, y: usize) -> T {
        self.p(a, x, y) / self.p_ay(a, y)
    }

    /// `P(Y=y | A=a, X=x)`, or `None` when the `(a, x)` cell has no mass.
    pub fn y_given_ax(&self, y: usize, a: usize, x: usize) -> Option<T> {
        let m = self.p_ax(a, x);
        if m <= T::zero() {
            None
        } else {
            Some(self.p(a, x, y) / m)
        }
    }

    pub fn ensure_binary(&self) -> Result<()> {
        if self.y_levels != 2 {
            return Err(Error::Dimension(format!(
                "classification paths need binary Y, table has |Y| = {}",
                self.y_levels
            )));
        }
        Ok(())
    }

    pub fn to_f64(&self) -> DiscreteJoint<f64> {
        DiscreteJoint {
            a_levels: self.a_levels,
            x_levels: self.x_levels,
            y_levels: self.y_levels,
            p: self.p.iter().map(Prob::as_f64).collect(),
        }
    }

    /// Bayes-optimal deterministic classifier: predicts 1 where
    /// `P(Y=1 | a, x) > 1/2`. Zero-mass cells predict 0.
    pub fn bayes_classifier(&self) -> Result<DeterministicClassifier> {
        self.ensure_binary()?;
        let half = T::one() / (T::one() + T::one());
        let labels = (0..self.a_levels)
            .flat_map(|a| (0..self.x_levels).map(move |x| (a, x)))
            .map(|(a, x)| match self.y_given_ax(1, a, x) {
                Some(p) if p > half => 1,
                _ => 0,
            })
            .collect();
        DeterministicClassifier::new(self.a_levels, self.x_levels, labels)
    }
}

/// A deterministic classifier given as a table `f(a, x)` of labels.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DeterministicClassifier {
    a_levels: usize,
    x_levels: usize,
    labels: Vec<u8>,
}

impl DeterministicClassifier {
    pub fn new(a_levels: usize, x_levels: usize, labels: Vec<u8>) -> Result<Self> {
        if labels.len() != a_levels * x_levels {
            return Err(Error::Dimension(format!(
                "classifier table has {} cells, expected {}",
                labels.len(),
                a_levels * x_levels
            )));
        }
        if let Some(bad) = labels.iter().find(|&&l| l > 1) {
            return Err(Error::Argument(format!("label {bad} is not binary")));
        }
        Ok(Self { a_levels, x_levels, labels })
    }

    pub fn from_fn(a_levels: usize, x_levels: usize, f: impl Fn(usize, usize) -> u8) -> Result<Self> {
        let labels = (0..a_levels).flat_map(|a| (0..x_levels).map(move |x| (a, x))).map(|(a, x)| f(a, x)).collect();
        Self::new(a_levels, x_levels, labels)
    }

    pub fn constant(a_levels: usize, x_levels: usize, label: u8) -> Result<Self> {
        Self::new(a_levels, x_levels, vec![label; a_levels * x_levels])
    }

    /// Decodes the `index`-th table in binary enumeration order: bit `a*|X|+x`
    /// of `index` is `f(a, x)`.
    pub fn from_index(a_levels: usize, x_levels: usize, index: u64) -> Self {
        let labels = (0..a_levels * x_levels).map(|i| ((index >> i) & 1) as u8).collect();
        Self { a_levels, x_levels, labels }
    }

    pub fn label(&self, a: usize, x: usize) -> u8 {
        self.labels[a * self.x_levels + x]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn a_levels(&self) -> usize {
        self.a_levels
    }

    pub fn x_levels(&self) -> usize {
        self.x_levels
    }

    pub fn flipped(&self) -> Self {
        Self { labels: self.labels.iter().map(|l| 1 - l).collect(), ..self.clone() }
    }

    pub fn is_constant(&self) -> bool {
        self.labels.windows(2).all(|w| w[0] == w[1])
    }

    pub fn to_stochastic<T: Prob>(&self) -> StochasticClassifier<T> {
        StochasticClassifier {
            a_levels: self.a_levels,
            x_levels: self.x_levels,
            p1: self.labels.iter().map(|&l| if l == 1 { T::one() } else { T::zero() }).collect(),
        }
    }
}

/// A randomized classifier: `p1(a, x) = P(Ŷ=1 | A=a, X=x)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StochasticClassifier<T = f64> {
    a_levels: usize,
    x_levels: usize,
    p1: Vec<T>,
}

impl<T: Prob> StochasticClassifier<T> {
    pub fn new(a_levels: usize, x_levels: usize, p1: Vec<T>) -> Result<Self> {
        if p1.len() != a_levels * x_levels {
            return Err(Error::Dimension(format!(
                "classifier table has {} cells, expected {}",
                p1.len(),
                a_levels * x_levels
            )));
        }
        if let Some(i) = p1.iter().position(|v| !in_unit(v)) {
            return Err(Error::Argument(format!("p1 entry {i} = {:?} outside [0,1]", p1[i])));
        }
        Ok(Self { a_levels, x_levels, p1 })
    }

    pub fn constant(a_levels: usize, x_levels: usize, p: T) -> Result<Self> {
        Self::new(a_levels, x_levels, vec![p; a_levels * x_levels])
    }

    pub fn p1(&self, a: usize, x: usize) -> T {
        self.p1[a * self.x_levels + x].clone()
    }

    pub fn table(&self) -> &[T] {
        &self.p1
    }

    pub fn a_levels(&self) -> usize {
        self.a_levels
    }

    pub fn x_levels(&self) -> usize {
        self.x_levels
    }

    pub fn flipped(&self) -> Self {
        Self { p1: self.p1.iter().map(|p| T::one() - p.clone()).collect(), ..self.clone() }
    }

    /// `weight * self + (1 - weight) * other`, entrywise.
    pub fn mix(&self, weight: T, other: &Self) -> Result<Self> {
        if other.a_levels != self.a_levels || other.x_levels != self.x_levels {
            return Err(Error::Dimension("mixing classifiers of different arity".into()));
        }
        if !in_unit(&weight) {
            return Err(Error::Argument("mixture weight outside [0,1]".into()));
        }
        let p1 = self
            .p1
            .iter()
            .zip(&other.p1)
            .map(|(p, q)| weight.clone() * p.clone() + (T::one() - weight.clone()) * q.clone())
            .collect();
        Ok(Self { p1, ..self.clone() })
    }
}

/// Anything that assigns `P(Ŷ=1 | a, x)` to each table cell.
pub trait Classifier<T: Prob> {
    fn arity(&self) -> (usize, usize);
    fn positive_prob(&self, a: usize, x: usize) -> T;
}

impl<T: Prob> Classifier<T> for DeterministicClassifier {
    fn arity(&self) -> (usize, usize) {
        (self.a_levels, self.x_levels)
    }

    fn positive_prob(&self, a: usize, x: usize) -> T {
        if self.label(a, x) == 1 {
            T::one()
        } else {
            T::zero()
        }
    }
}

impl<T: Prob> Classifier<T> for StochasticClassifier<T> {
    fn arity(&self) -> (usize, usize) {
        (self.a_levels, self.x_levels)
    }

    fn positive_prob(&self, a: usize, x: usize) -> T {
        self.p1(a, x)
    }
}

/// A point on the ROC plane: `(P(Ŷ=1 | Y=0), P(Ŷ=1 | Y=1))` for one group.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RocPoint<T = f64> {
    pub fpr: T,
    pub tpr: T,
}

impl RocPoint<f64> {
    pub fn new(fpr: f64, tpr: f64) -> Self {
        Self { fpr, tpr }
    }

    /// Rates of the output-flipped predictor `1 - Ŷ`.
    pub fn flipped(self) -> Self {
        Self { fpr: 1.0 - self.fpr, tpr: 1.0 - self.tpr }
    }

    pub fn in_unit_square(&self) -> bool {
        (0.0..=1.0).contains(&self.fpr) && (0.0..=1.0).contains(&self.tpr)
    }
}

impl<T: Prob> RocPoint<T> {
    pub fn to_f64(&self) -> RocPoint<f64> {
        RocPoint { fpr: self.fpr.as_f64(), tpr: self.tpr.as_f64() }
    }
}

fn check_arity<T: Prob, C: Classifier<T> + ?Sized>(joint: &DiscreteJoint<T>, clf: &C) -> Result<()> {
    let (a, x) = clf.arity();
    if a != joint.a_levels || x != joint.x_levels {
        return Err(Error::Dimension(format!("classifier is {a}x{x}, joint is {}x{}", joint.a_levels, joint.x_levels)));
    }
    Ok(())
}

/// `P(Ŷ=1 | A=a, Y=y)` by exact summation over `x`.
pub fn positive_rate<T: Prob, C: Classifier<T> + ?Sized>(joint: &DiscreteJoint<T>, clf: &C, a: usize, y: usize) -> T {
    let mass = (0..joint.x_levels).fold(T::zero(), |s, x| s + clf.positive_prob(a, x) * joint.p(a, x, y));
    mass / joint.p_ay(a, y)
}

/// Per-group ROC points `γ_a`, indexed by group.
pub fn positive_rates<T: Prob, C: Classifier<T> + ?Sized>(
    joint: &DiscreteJoint<T>,
    clf: &C,
) -> Result<Vec<RocPoint<T>>> {
    joint.ensure_binary()?;
    check_arity(joint, clf)?;
    Ok((0..joint.a_levels)
        .map(|a| RocPoint { fpr: positive_rate(joint, clf, a, 0), tpr: positive_rate(joint, clf, a, 1) })
        .collect())
}

/// Largest absolute rate gap between any two groups, over both labels.
/// Zero exactly when Equalized Odds holds.
pub fn eo_violation<T: Prob>(rates: &[RocPoint<T>]) -> Result<T> {
    if rates.is_empty() {
        return Err(Error::Argument("no groups to compare".into()));
    }
    let spread = |get: fn(&RocPoint<T>) -> &T| {
        let mut lo = get(&rates[0]).clone();
        let mut hi = lo.clone();
        for r in &rates[1..] {
            let v = get(r);
            if *v < lo {
                lo = v.clone();
            }
            if *v > hi {
                hi = v.clone();
            }
        }
        hi - lo
    };
    let f = spread(|r| &r.fpr);
    let t = spread(|r| &r.tpr);
    Ok(if f > t { f } else { t })
}

/// Accuracy `P(Ŷ = Y)` of a classifier under the joint.
pub fn accuracy<T: Prob, C: Classifier<T> + ?Sized>(joint: &DiscreteJoint<T>, clf: &C) -> Result<T> {
    joint.ensure_binary()?;
    check_arity(joint, clf)?;
    let mut acc = T::zero();
    for a in 0..joint.a_levels {
        for x in 0..joint.x_levels {
            let p1 = clf.positive_prob(a, x);
            acc = acc + p1.clone() * joint.p(a, x, 1) + (T::one() - p1) * joint.p(a, x, 0);
        }
    }
    Ok(acc)
}

/// Plug-in estimates of each group's ROC point from a labelled sample.
///
/// Groups are keyed by the integer code of the protected column. The
/// prediction column may hold hard labels or predicted probabilities.
pub fn empirical_rates(s: &Sample) -> Result<BTreeMap<i64, RocPoint>> {
    let yhat = s.yhat.as_ref().ok_or_else(|| Error::Argument("sample has no prediction column".into()))?;
    // (sum of predictions, count) per group and label
    let mut acc: BTreeMap<i64, [(f64, usize); 2]> = BTreeMap::new();
    for (i, &p) in yhat.iter().enumerate() {
        let group = s.a[i].round() as i64;
        let label = match s.y[i] {
            0.0 => 0,
            1.0 => 1,
            v => return Err(Error::Argument(format!("row {i}: target {v} is not binary"))),
        };
        let cell = &mut acc.entry(group).or_insert([(0.0, 0); 2])[label];
        cell.0 += p;
        cell.1 += 1;
    }
    acc.into_iter()
        .map(|(g, cells)| {
            for (label, (_, count)) in cells.iter().enumerate() {
                if *count == 0 {
                    return Err(Error::UndefinedRate { group: g, label: label as u8 });
                }
            }
            let rate = |c: (f64, usize)| c.0 / c.1 as f64;
            Ok((g, RocPoint::new(rate(cells[0]), rate(cells[1]))))
        })
        .collect()
}

/// Empirical accuracy of the prediction column, thresholding probabilities
/// by their expectation: a prediction `p` scores `p` on `y=1` and `1-p` on `y=0`.
pub fn empirical_accuracy(s: &Sample) -> Result<f64> {
    let yhat = s.yhat.as_ref().ok_or_else(|| Error::Argument("sample has no prediction column".into()))?;
    let hits: f64 = yhat.iter().zip(&s.y).map(|(&p, &y)| if y == 1.0 { p } else { 1.0 - p }).sum();
    Ok(hits / s.n() as f64)
}
