//! Post-processing and in-processing under Equalized Odds as linear programs.
//!
//! A post-processed predictor draws `Ỹ` from `P(Ỹ=1 | a, Ŷ=ŷ) = β_a^(ŷ)`, so
//! its group rates are affine in the `β`. An in-processed stochastic
//! predictor is a table `p1(a, x)`, and its group rates are linear in the
//! table. Both feasible areas are projections of polytopes onto the ROC
//! plane and are computed exactly by support-function expansion. A grid
//! sweep of `(fpr, tpr_min, tpr_max)` rows is reported alongside.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::lp::{LpProblem, Relation, Sense};
use crate::probcore::{Classifier, DiscreteJoint, Prob, RocPoint, StochasticClassifier};
use crate::rocgeom::{nontriviality_margin, ConvexRegion};

/// Default number of fpr values in a feasible-area sweep.
pub const DEFAULT_GRID: usize = 101;

/// A direction's support value must exceed the current edge by this much
/// before a new vertex is accepted.
const EXPAND_TOL: f64 = 1e-10;
const MAX_EXPANSIONS: usize = 512;

/// Per-group mixing probabilities `β0_a = P(Ỹ=1|a,Ŷ=0)` and
/// `β1_a = P(Ỹ=1|a,Ŷ=1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PostParams {
    pub beta0: Vec<f64>,
    pub beta1: Vec<f64>,
}

impl PostParams {
    pub fn new(beta0: Vec<f64>, beta1: Vec<f64>) -> Result<Self> {
        if beta0.len() != beta1.len() {
            return Err(Error::Dimension("beta0 and beta1 differ in length".into()));
        }
        if beta0.iter().chain(&beta1).any(|b| !(0.0..=1.0).contains(b)) {
            return Err(Error::Argument("post-processing probabilities must lie in [0, 1]".into()));
        }
        Ok(Self { beta0, beta1 })
    }

    /// `β0 = 0, β1 = 1` for every group: keep `Ŷ` unchanged.
    pub fn identity(groups: usize) -> Self {
        Self { beta0: vec![0.0; groups], beta1: vec![1.0; groups] }
    }

    pub fn groups(&self) -> usize {
        self.beta0.len()
    }
}

/// Rates of the post-processed predictor: `β1·r + β0·(1 − r)` for both the
/// false and true positive rate of every group.
pub fn postprocess_rates(rates_hat: &[RocPoint], beta: &PostParams) -> Result<Vec<RocPoint>> {
    if rates_hat.len() != beta.groups() {
        return Err(Error::Dimension(format!("{} groups of rates, {} of parameters", rates_hat.len(), beta.groups())));
    }
    Ok(rates_hat
        .iter()
        .enumerate()
        .map(|(a, g)| {
            let mix = |r: f64| beta.beta1[a] * r + beta.beta0[a] * (1.0 - r);
            RocPoint::new(mix(g.fpr), mix(g.tpr))
        })
        .collect())
}

/// Joint probabilities `P(A=a, Y=y, Ŷ=ŷ)` of a base predictor, laid out
/// `[a][y][ŷ]`.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeTable {
    p: Vec<[[f64; 2]; 2]>,
}

impl OutcomeTable {
    pub fn new(p: Vec<[[f64; 2]; 2]>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::Argument("outcome table has no groups".into()));
        }
        let total: f64 = p.iter().flatten().flatten().sum();
        if p.iter().flatten().flatten().any(|v| !(*v >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidTable(format!(
                "outcome table must be nonnegative and sum to 1, sums to {total}"
            )));
        }
        Ok(Self { p })
    }

    /// Outcome table of `clf` applied under `joint`.
    pub fn from_joint<T: Prob, C: Classifier<T> + ?Sized>(joint: &DiscreteJoint<T>, clf: &C) -> Result<Self> {
        joint.ensure_binary()?;
        let (ca, cx) = clf.arity();
        if ca != joint.a_levels() || cx != joint.x_levels() {
            return Err(Error::Dimension(format!(
                "classifier is {ca}x{cx}, joint is {}x{}",
                joint.a_levels(),
                joint.x_levels()
            )));
        }
        let p = (0..joint.a_levels())
            .map(|a| {
                let mut cell = [[0.0; 2]; 2];
                for (y, row) in cell.iter_mut().enumerate() {
                    for x in 0..joint.x_levels() {
                        let pr = joint.p(a, x, y).as_f64();
                        let p1 = clf.positive_prob(a, x).as_f64();
                        row[1] += pr * p1;
                        row[0] += pr * (1.0 - p1);
                    }
                }
                cell
            })
            .collect();
        Ok(Self { p })
    }

    pub fn groups(&self) -> usize {
        self.p.len()
    }

    pub fn p(&self, a: usize, y: usize, yhat: usize) -> f64 {
        self.p[a][y][yhat]
    }

    pub fn p_ay(&self, a: usize, y: usize) -> f64 {
        self.p[a][y][0] + self.p[a][y][1]
    }

    /// Per-group ROC points of the base predictor.
    pub fn rates(&self) -> Result<Vec<RocPoint>> {
        (0..self.groups())
            .map(|a| {
                for y in 0..2 {
                    if self.p_ay(a, y) <= 0.0 {
                        return Err(Error::UndefinedRate { group: a as i64, label: y as u8 });
                    }
                }
                Ok(RocPoint::new(self.p[a][0][1] / self.p_ay(a, 0), self.p[a][1][1] / self.p_ay(a, 1)))
            })
            .collect()
    }
}

/// Misclassification costs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Costs {
    pub false_pos: f64,
    pub false_neg: f64,
}

impl Default for Costs {
    fn default() -> Self {
        Self { false_pos: 1.0, false_neg: 1.0 }
    }
}

/// Options of [`fit_postprocess_with`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PostprocessOptions {
    /// Allowed rate gap between groups; `None` imposes exact equality.
    pub slack: Option<f64>,
    /// Fail with a degenerate-input error when some group's base rates lie
    /// on the diagonal.
    pub require_nontrivial: bool,
}

/// Result of fitting a post-processor.
#[derive(Debug, Clone, PartialEq)]
pub struct PostprocessFit {
    pub params: PostParams,
    /// Rates of the post-processed predictor, per group.
    pub rates: Vec<RocPoint>,
    /// The common rate point (group 0's rates under slack).
    pub point: RocPoint,
    /// Expected cost of the post-processed predictor.
    pub loss: f64,
}

/// Expected cost of a predictor with the given per-group rates.
pub fn expected_loss(table: &OutcomeTable, rates: &[RocPoint], costs: Costs) -> f64 {
    rates
        .iter()
        .enumerate()
        .map(|(a, g)| costs.false_pos * table.p_ay(a, 0) * g.fpr + costs.false_neg * table.p_ay(a, 1) * (1.0 - g.tpr))
        .sum()
}

/// Cost-optimal post-processor under exact Equalized Odds.
pub fn fit_postprocess(table: &OutcomeTable, costs: Costs) -> Result<PostprocessFit> {
    fit_postprocess_with(table, costs, PostprocessOptions::default())
}

/// Cost-optimal post-processor. Variables are `(β0_a, β1_a)` for every
/// group, ordered `[β0_0, β1_0, β0_1, β1_1, ...]`.
pub fn fit_postprocess_with(table: &OutcomeTable, costs: Costs, opts: PostprocessOptions) -> Result<PostprocessFit> {
    let rates = table.rates()?;
    if opts.require_nontrivial && nontriviality_margin(&rates) <= 0.0 {
        return Err(Error::Degenerate(
            "a group's base rates lie on the diagonal, so only trivial predictors are fair".into(),
        ));
    }
    let m = table.groups();
    // group rate r maps to r·β1 + (1−r)·β0
    let rate_terms = |a: usize, r: f64| [(2 * a, 1.0 - r), (2 * a + 1, r)];
    let mut lp = LpProblem::new(2 * m, Sense::Minimize);
    let mut c = vec![0.0; 2 * m];
    for (a, g) in rates.iter().enumerate() {
        for (j, w) in rate_terms(a, g.fpr) {
            c[j] += costs.false_pos * table.p_ay(a, 0) * w;
        }
        for (j, w) in rate_terms(a, g.tpr) {
            c[j] -= costs.false_neg * table.p_ay(a, 1) * w;
        }
    }
    lp.set_objective(c)?;
    for j in 0..2 * m {
        lp.set_bounds(j, 0.0, 1.0)?;
    }
    for a in 0..m {
        for b in (a + 1)..m {
            for (ra, rb) in [(rates[a].fpr, rates[b].fpr), (rates[a].tpr, rates[b].tpr)] {
                let mut terms = rate_terms(a, ra).to_vec();
                terms.extend(rate_terms(b, rb).iter().map(|&(j, w)| (j, -w)));
                match opts.slack {
                    None => {
                        lp.add_sparse(&terms, Relation::Eq, 0.0)?;
                    }
                    Some(tau) => {
                        lp.add_sparse(&terms, Relation::Le, tau)?;
                        lp.add_sparse(&terms, Relation::Ge, -tau)?;
                    }
                }
            }
            if opts.slack.is_none() {
                // equalities with group 0 imply the rest
                break;
            }
        }
    }
    let sol = lp.solve()?;
    let clamp = |v: f64| v.clamp(0.0, 1.0);
    let params = PostParams {
        beta0: (0..m).map(|a| clamp(sol.x[2 * a])).collect(),
        beta1: (0..m).map(|a| clamp(sol.x[2 * a + 1])).collect(),
    };
    let post = postprocess_rates(&rates, &params)?;
    let loss = expected_loss(table, &post, costs);
    Ok(PostprocessFit { point: post[0], rates: post, params, loss })
}

/// Coefficients `β^(ŷ)_{ay} = Σ_x P(Ỹ_in=1|a,x) · P(x | a, y, Ŷ_opt=ŷ)`,
/// indexed `[ŷ][a][y]`.
pub fn pseudo_betas<T: Prob>(
    joint: &DiscreteJoint<T>,
    in_clf: &StochasticClassifier<T>,
    opt_clf: &StochasticClassifier<T>,
) -> Result<Vec<Vec<Vec<T>>>> {
    joint.ensure_binary()?;
    for clf in [in_clf, opt_clf] {
        if clf.a_levels() != joint.a_levels() || clf.x_levels() != joint.x_levels() {
            return Err(Error::Dimension("classifier arity does not match the joint".into()));
        }
    }
    let opt_prob = |a: usize, x: usize, yhat: usize| {
        let p1 = opt_clf.p1(a, x);
        if yhat == 1 {
            p1
        } else {
            T::one() - p1
        }
    };
    let mut out = vec![vec![vec![T::zero(); 2]; joint.a_levels()]; 2];
    for (yhat, table) in out.iter_mut().enumerate() {
        for (a, row) in table.iter_mut().enumerate() {
            for (y, cell) in row.iter_mut().enumerate() {
                let mut num = T::zero();
                let mut den = T::zero();
                for x in 0..joint.x_levels() {
                    let w = joint.p(a, x, y) * opt_prob(a, x, yhat);
                    num = num + in_clf.p1(a, x) * w.clone();
                    den = den + w;
                }
                if den <= T::zero() {
                    return Err(Error::Conditioning { a, y, yhat });
                }
                *cell = num / den;
            }
        }
    }
    Ok(out)
}

/// One row of a feasible-area sweep: the attainable common tpr range at a
/// fixed common fpr.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub fpr: f64,
    pub tpr_min: f64,
    pub tpr_max: f64,
}

/// A feasible area as both a sweep table and its exact polygon.
#[derive(Debug, Clone, PartialEq)]
pub struct FeasibleArea {
    pub sweep: Vec<SweepRow>,
    pub region: ConvexRegion,
}

impl FeasibleArea {
    /// The sweep as CSV text with header `fpr,tpr_min,tpr_max`.
    pub fn sweep_csv(&self) -> String {
        let mut s = String::from("fpr,tpr_min,tpr_max\n");
        for r in &self.sweep {
            s.push_str(&format!("{},{},{}\n", r.fpr, r.tpr_min, r.tpr_max));
        }
        s
    }
}

/// A polytope of decision variables in `[0, 1]^n` with linear equalities,
/// plus the two linear maps giving the common fpr and tpr.
struct RateProgram {
    n: usize,
    equalities: Vec<Vec<(usize, f64)>>,
    fpr: Vec<(usize, f64)>,
    tpr: Vec<(usize, f64)>,
    offset: RocPoint,
}

impl RateProgram {
    fn base(&self, sense: Sense) -> Result<LpProblem> {
        let mut lp = LpProblem::new(self.n, sense);
        for j in 0..self.n {
            lp.set_bounds(j, 0.0, 1.0)?;
        }
        for eq in &self.equalities {
            lp.add_sparse(eq, Relation::Eq, 0.0)?;
        }
        Ok(lp)
    }

    fn eval(&self, x: &[f64]) -> RocPoint {
        let dot = |terms: &[(usize, f64)]| terms.iter().map(|&(j, w)| w * x[j]).sum::<f64>();
        RocPoint::new(self.offset.fpr + dot(&self.fpr), self.offset.tpr + dot(&self.tpr))
    }

    fn objective(&self, u: f64, v: f64) -> Vec<f64> {
        let mut c = vec![0.0; self.n];
        for &(j, w) in &self.fpr {
            c[j] += u * w;
        }
        for &(j, w) in &self.tpr {
            c[j] += v * w;
        }
        c
    }

    /// The attainable point maximizing `u·fpr + v·tpr`.
    fn support(&self, u: f64, v: f64) -> Result<RocPoint> {
        let mut lp = self.base(Sense::Maximize)?;
        lp.set_objective(self.objective(u, v))?;
        Ok(self.eval(&lp.solve()?.x))
    }

    /// Range of the common tpr with the common fpr pinned to `f`; `None`
    /// when no attainable point has that fpr.
    fn tpr_range(&self, f: f64) -> Result<Option<SweepRow>> {
        let mut pinned = self.base(Sense::Maximize)?;
        pinned.add_sparse(&self.fpr, Relation::Eq, f - self.offset.fpr)?;
        let mut out = [0.0; 2];
        for (k, sense) in [Sense::Minimize, Sense::Maximize].into_iter().enumerate() {
            let mut lp = pinned.clone();
            let mut c = self.objective(0.0, 1.0);
            if sense == Sense::Minimize {
                c.iter_mut().for_each(|v| *v = -*v);
            }
            lp.set_objective(c)?;
            match lp.solve() {
                Ok(sol) => out[k] = self.eval(&sol.x).tpr,
                Err(Error::Lp("infeasible")) => return Ok(None),
                Err(e) => return Err(e),
            }
        }
        Ok(Some(SweepRow { fpr: f, tpr_min: out[0], tpr_max: out[1] }))
    }

    fn sweep(&self, grid: usize) -> Result<Vec<SweepRow>> {
        if grid < 2 {
            return Err(Error::Argument("sweep grid needs at least 2 points".into()));
        }
        let rows: Vec<Option<SweepRow>> =
            (0..grid).into_par_iter().map(|i| self.tpr_range(i as f64 / (grid - 1) as f64)).collect::<Result<_>>()?;
        Ok(rows.into_iter().flatten().collect())
    }

    /// Exact projection: grow a hull of attainable points until the support
    /// along every edge normal is attained by the edge itself.
    fn exact_points(&self) -> Result<Vec<RocPoint>> {
        let dirs =
            [(1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0), (1.0, -1.0), (-1.0, 1.0), (1.0, 1.0), (-1.0, -1.0)];
        let mut points: Vec<RocPoint> = dirs.iter().map(|&(u, v)| self.support(u, v)).collect::<Result<_>>()?;
        let mut settled: Vec<(RocPoint, RocPoint)> = Vec::new();
        for _ in 0..MAX_EXPANSIONS {
            let hull = ConvexRegion::from_points(&points);
            let v = hull.vertices();
            let edges: Vec<(RocPoint, RocPoint)> = match v.len() {
                0 | 1 => return Ok(points),
                2 => vec![(v[0], v[1]), (v[1], v[0])],
                n => (0..n).map(|i| (v[i], v[(i + 1) % n])).collect(),
            };
            let mut grew = false;
            for (p, q) in edges {
                if settled.contains(&(p, q)) {
                    continue;
                }
                // outward normal of a counterclockwise edge
                let (u, w) = (q.tpr - p.tpr, p.fpr - q.fpr);
                let norm = u.hypot(w);
                let r = self.support(u / norm, w / norm)?;
                let gain = (u * (r.fpr - p.fpr) + w * (r.tpr - p.tpr)) / norm;
                if gain > EXPAND_TOL {
                    points.push(r);
                    grew = true;
                } else {
                    settled.push((p, q));
                }
            }
            if !grew {
                return Ok(points);
            }
        }
        Ok(points)
    }

    fn area(&self, grid: usize) -> Result<FeasibleArea> {
        let sweep = self.sweep(grid)?;
        let mut points = self.exact_points()?;
        for r in &sweep {
            points.push(RocPoint::new(r.fpr, r.tpr_min));
            points.push(RocPoint::new(r.fpr, r.tpr_max));
        }
        Ok(FeasibleArea { sweep, region: ConvexRegion::from_points(&points) })
    }
}

fn check_joint(joint: &DiscreteJoint) -> Result<()> {
    joint.ensure_binary()
}

/// Variables `p1(a, x)` at index `a·|X| + x`; rate of group `a` at label `y`
/// is `Σ_x p1(a,x) P(x|a,y)`. Groups are tied to group 0.
fn in_program(joint: &DiscreteJoint) -> RateProgram {
    let (na, nx) = (joint.a_levels(), joint.x_levels());
    let rate = |a: usize, y: usize| -> Vec<(usize, f64)> {
        (0..nx).map(|x| (a * nx + x, joint.x_given_ay(x, a, y))).collect()
    };
    let mut equalities = Vec::new();
    for a in 1..na {
        for y in 0..2 {
            let mut t = rate(a, y);
            t.extend(rate(0, y).into_iter().map(|(j, w)| (j, -w)));
            equalities.push(t);
        }
    }
    RateProgram { n: na * nx, equalities, fpr: rate(0, 0), tpr: rate(0, 1), offset: RocPoint::new(0.0, 0.0) }
}

/// Feasible area `Ω(Ỹ_in)` of stochastic predictors of `(A, X)` that
/// satisfy Equalized Odds.
pub fn feasible_area_in(joint: &DiscreteJoint, grid: usize) -> Result<FeasibleArea> {
    check_joint(joint)?;
    in_program(joint).area(grid)
}

/// Feasible area `Ω(Ỹ_in^*)`: as [`feasible_area_in`], with the additional
/// equalities `β^(ŷ)_{a0} = β^(ŷ)_{a1}` tying the predictor to `opt_clf`.
/// Cells `(a, ŷ)` with `P(a, y, ŷ) = 0` for some `y` contribute no equality.
pub fn feasible_area_in_pseudo<C: Classifier<f64> + ?Sized>(
    joint: &DiscreteJoint,
    opt_clf: &C,
    grid: usize,
) -> Result<FeasibleArea> {
    check_joint(joint)?;
    let (ca, cx) = opt_clf.arity();
    if ca != joint.a_levels() || cx != joint.x_levels() {
        return Err(Error::Dimension("classifier arity does not match the joint".into()));
    }
    let mut prog = in_program(joint);
    let nx = joint.x_levels();
    for a in 0..joint.a_levels() {
        for yhat in 0..2 {
            let w = |x: usize, y: usize| {
                let p1 = opt_clf.positive_prob(a, x);
                joint.p(a, x, y) * if yhat == 1 { p1 } else { 1.0 - p1 }
            };
            let den: Vec<f64> = (0..2).map(|y| (0..nx).map(|x| w(x, y)).sum()).collect();
            if den.iter().any(|&d| d <= 0.0) {
                continue;
            }
            let terms = (0..nx).map(|x| (a * nx + x, w(x, 0) / den[0] - w(x, 1) / den[1])).collect();
            prog.equalities.push(terms);
        }
    }
    prog.area(grid)
}

/// Feasible area `Ω(Ỹ_post)` computed by linear programming over the
/// post-processing parameters, a second route to
/// [`crate::rocgeom::feasible_area_post`].
pub fn feasible_area_post_lp(rates: &[RocPoint], grid: usize) -> Result<FeasibleArea> {
    let m = rates.len();
    if m == 0 {
        return Err(Error::Argument("no groups".into()));
    }
    let rate = |a: usize, r: f64| vec![(2 * a, 1.0 - r), (2 * a + 1, r)];
    let mut equalities = Vec::new();
    for a in 1..m {
        for (ra, r0) in [(rates[a].fpr, rates[0].fpr), (rates[a].tpr, rates[0].tpr)] {
            let mut t = rate(a, ra);
            t.extend(rate(0, r0).into_iter().map(|(j, w)| (j, -w)));
            equalities.push(t);
        }
    }
    let prog = RateProgram {
        n: 2 * m,
        equalities,
        fpr: rate(0, rates[0].fpr),
        tpr: rate(0, rates[0].tpr),
        offset: RocPoint::new(0.0, 0.0),
    };
    prog.area(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::probcore::{eo_violation, positive_rates, DeterministicClassifier};
    use crate::rocgeom::{feasible_area_post, group_hull, region_hausdorff};

    fn expr() -> DiscreteJoint {
        joint_with([[0.4, 0.6], [0.7, 0.2]])
    }

    fn expl() -> DiscreteJoint {
        joint_with([[0.3, 0.8], [0.7, 0.2]])
    }

    /// Built-in joint of `(A, Y)` with `x1[a][y] = P(X=1|a,y)`.
    fn joint_with(x1: [[f64; 2]; 2]) -> DiscreteJoint {
        let p_ay = vec![vec![0.2, 0.4], vec![0.3, 0.1]];
        let cond: Vec<Vec<Vec<f64>>> =
            (0..2).map(|a| (0..2).map(|y| vec![1.0 - x1[a][y], x1[a][y]]).collect()).collect();
        DiscreteJoint::from_conditionals(&p_ay, &cond).unwrap()
    }

    #[test]
    fn identity_and_constant_parameters() {
        let g = [RocPoint::new(0.2, 0.7), RocPoint::new(0.4, 0.9)];
        assert_eq!(postprocess_rates(&g, &PostParams::identity(2)).unwrap(), g.to_vec());
        let c = PostParams::new(vec![0.3, 0.3], vec![0.3, 0.3]).unwrap();
        for r in postprocess_rates(&g, &c).unwrap() {
            assert!((r.fpr - 0.3).abs() < 1e-15 && (r.tpr - 0.3).abs() < 1e-15);
        }
    }

    #[test]
    fn mixed_point_lies_in_hull() {
        let g = RocPoint::new(0.2, 0.8);
        let b = PostParams::new(vec![0.5], vec![0.75]).unwrap();
        let r = postprocess_rates(&[g], &b).unwrap()[0];
        assert!(group_hull(g).contains(r, 1e-12));
    }

    #[test]
    fn fair_base_keeps_its_loss() {
        let t = OutcomeTable::new(vec![[[0.2, 0.05], [0.05, 0.2]], [[0.2, 0.05], [0.05, 0.2]]]).unwrap();
        let fit = fit_postprocess(&t, Costs::default()).unwrap();
        let base = expected_loss(&t, &t.rates().unwrap(), Costs::default());
        assert!((fit.loss - base).abs() < 1e-12);
    }

    #[test]
    fn postprocessing_removes_violation() {
        let f = DeterministicClassifier::from_fn(2, 2, |_, x| x as u8).unwrap();
        // expR: (0.4, 0.6) vs (0.7, 0.2); expL: (0.3, 0.8) vs (0.7, 0.2)
        for (j, base_violation) in [(expr(), 0.4), (expl(), 0.6)] {
            let base = positive_rates(&j, &f).unwrap();
            assert!((eo_violation(&base).unwrap() - base_violation).abs() < 1e-12);
            let fit = fit_postprocess(&OutcomeTable::from_joint(&j, &f).unwrap(), Costs::default()).unwrap();
            assert!(eo_violation(&fit.rates).unwrap() <= 1e-9);
            assert!(feasible_area_post(&base).unwrap().contains(fit.point, 1e-9));
        }
    }

    #[test]
    fn diagonal_group_is_degenerate_when_nontriviality_required() {
        let t = OutcomeTable::new(vec![[[0.1, 0.1], [0.15, 0.15]], [[0.2, 0.05], [0.05, 0.2]]]).unwrap();
        let opts = PostprocessOptions { slack: None, require_nontrivial: true };
        assert!(matches!(fit_postprocess_with(&t, Costs::default(), opts), Err(Error::Degenerate(_))));
        assert!(fit_postprocess(&t, Costs::default()).is_ok());
    }

    #[test]
    fn slack_never_costs_more() {
        let j = expr();
        let f = DeterministicClassifier::from_fn(2, 2, |_, x| x as u8).unwrap();
        let t = OutcomeTable::from_joint(&j, &f).unwrap();
        let exact = fit_postprocess(&t, Costs::default()).unwrap();
        let opts = PostprocessOptions { slack: Some(0.05), require_nontrivial: false };
        let slack = fit_postprocess_with(&t, Costs::default(), opts).unwrap();
        assert!(slack.loss <= exact.loss + 1e-12);
        assert!(eo_violation(&slack.rates).unwrap() <= 0.05 + 1e-9);
    }

    #[test]
    fn constant_in_classifier_gives_constant_betas() {
        let j = expr();
        let c = StochasticClassifier::constant(2, 2, 0.35).unwrap();
        let opt = DeterministicClassifier::from_fn(2, 2, |a, x| u8::from(a != x)).unwrap().to_stochastic();
        for b in pseudo_betas(&j, &c, &opt).unwrap().iter().flatten().flatten() {
            assert!((b - 0.35).abs() < 1e-12);
        }
    }

    #[test]
    fn empty_conditioning_cell_is_named() {
        let j = expr();
        let c = StochasticClassifier::constant(2, 2, 0.5).unwrap();
        let one = StochasticClassifier::constant(2, 2, 1.0).unwrap();
        assert!(matches!(pseudo_betas(&j, &c, &one), Err(Error::Conditioning { yhat: 0, .. })));
    }

    #[test]
    fn useless_features_give_the_diagonal() {
        // X independent of Y given A
        let p_ay = vec![vec![0.25, 0.25], vec![0.3, 0.2]];
        let cond = vec![vec![vec![0.3, 0.7], vec![0.3, 0.7]], vec![vec![0.6, 0.4], vec![0.6, 0.4]]];
        let j = DiscreteJoint::from_conditionals(&p_ay, &cond).unwrap();
        let area = feasible_area_in(&j, 11).unwrap();
        assert!(region_hausdorff(&area.region, &ConvexRegion::diagonal()) < 1e-9);
        assert_eq!(area.sweep.len(), 11);
    }

    #[test]
    fn post_lp_matches_hull_intersection() {
        let g = [RocPoint::new(0.1, 0.7), RocPoint::new(0.3, 0.9)];
        let lp = feasible_area_post_lp(&g, 21).unwrap();
        let geo = feasible_area_post(&g).unwrap();
        assert!(region_hausdorff(&lp.region, &geo) < 1e-9);
    }
}
