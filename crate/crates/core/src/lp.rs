//! Dense two-phase simplex for the small linear programs of the
//! post-processing and feasible-area computations.
//!
//! Pivoting follows Bland's rule (lowest-index entering column, ratio ties
//! broken by lowest basic index), which cannot cycle on the degenerate
//! vertices that polygon corners produce.

use crate::error::{Error, Result};

const PIVOT_EPS: f64 = 1e-11;
const MAX_PIVOTS: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Relation {
    Le,
    Ge,
    Eq,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sense {
    Minimize,
    Maximize,
}

#[derive(Debug, Clone)]
struct Row {
    coeffs: Vec<f64>,
    rel: Relation,
    rhs: f64,
}

/// A linear program over `n` bounded variables.
#[derive(Debug, Clone)]
pub struct LpProblem {
    sense: Sense,
    objective: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    rows: Vec<Row>,
}

#[derive(Debug, Clone)]
pub struct LpSolution {
    pub x: Vec<f64>,
    pub objective: f64,
}

impl LpProblem {
    /// `n` variables, zero objective, each bounded to `[0, +inf)`.
    pub fn new(n: usize, sense: Sense) -> Self {
        Self { sense, objective: vec![0.0; n], lower: vec![0.0; n], upper: vec![f64::INFINITY; n], rows: Vec::new() }
    }

    pub fn n_vars(&self) -> usize {
        self.objective.len()
    }

    pub fn n_constraints(&self) -> usize {
        self.rows.len()
    }

    pub fn set_objective(&mut self, c: Vec<f64>) -> Result<&mut Self> {
        if c.len() != self.n_vars() {
            return Err(Error::Dimension(format!(
                "objective has {} coefficients for {} variables",
                c.len(),
                self.n_vars()
            )));
        }
        self.objective = c;
        Ok(self)
    }

    pub fn set_bounds(&mut self, var: usize, lower: f64, upper: f64) -> Result<&mut Self> {
        if var >= self.n_vars() || lower > upper || lower.is_nan() || upper.is_nan() {
            return Err(Error::Argument(format!("bad bounds [{lower}, {upper}] for variable {var}")));
        }
        self.lower[var] = lower;
        self.upper[var] = upper;
        Ok(self)
    }

    /// Adds `coeffs · x (rel) rhs`.
    pub fn add_constraint(&mut self, coeffs: Vec<f64>, rel: Relation, rhs: f64) -> Result<&mut Self> {
        if coeffs.len() != self.n_vars() {
            return Err(Error::Dimension(format!(
                "constraint has {} coefficients for {} variables",
                coeffs.len(),
                self.n_vars()
            )));
        }
        self.rows.push(Row { coeffs, rel, rhs });
        Ok(self)
    }

    /// Adds a sparse constraint given as `(variable, coefficient)` pairs.
    pub fn add_sparse(&mut self, terms: &[(usize, f64)], rel: Relation, rhs: f64) -> Result<&mut Self> {
        let mut coeffs = vec![0.0; self.n_vars()];
        for &(j, v) in terms {
            if j >= coeffs.len() {
                return Err(Error::Dimension(format!("variable {j} out of range")));
            }
            coeffs[j] += v;
        }
        self.add_constraint(coeffs, rel, rhs)
    }

    pub fn solve(&self) -> Result<LpSolution> {
        StandardForm::build(self)?.solve(self)
    }
}

/// How an original variable maps onto nonnegative standard-form columns.
#[derive(Debug, Clone, Copy)]
enum VarMap {
    /// `x = offset + s`
    Shift { col: usize, offset: f64 },
    /// `x = offset - s`
    Mirror { col: usize, offset: f64 },
    /// `x = s+ - s-`
    Split { pos: usize, neg: usize },
}

struct StandardForm {
    maps: Vec<VarMap>,
    n_struct: usize,
    rows: Vec<(Vec<f64>, Relation, f64)>,
    cost: Vec<f64>,
}

impl StandardForm {
    fn build(p: &LpProblem) -> Result<Self> {
        let mut maps = Vec::with_capacity(p.n_vars());
        let mut ncol = 0;
        for j in 0..p.n_vars() {
            let (l, u) = (p.lower[j], p.upper[j]);
            let m = if l.is_finite() {
                VarMap::Shift { col: ncol, offset: l }
            } else if u.is_finite() {
                VarMap::Mirror { col: ncol, offset: u }
            } else {
                ncol += 1;
                VarMap::Split { pos: ncol - 1, neg: ncol }
            };
            ncol += 1;
            maps.push(m);
        }
        let sign = if p.sense == Sense::Maximize { -1.0 } else { 1.0 };
        let mut cost = vec![0.0; ncol];
        let mut rows = Vec::new();

        let substitute = |coeffs: &[f64], out: &mut Vec<f64>| -> f64 {
            let mut shift = 0.0;
            for (j, &a) in coeffs.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                match maps[j] {
                    VarMap::Shift { col, offset } => {
                        out[col] += a;
                        shift += a * offset;
                    }
                    VarMap::Mirror { col, offset } => {
                        out[col] -= a;
                        shift += a * offset;
                    }
                    VarMap::Split { pos, neg } => {
                        out[pos] += a;
                        out[neg] -= a;
                    }
                }
            }
            shift
        };

        let objective: Vec<f64> = p.objective.iter().map(|c| sign * c).collect();
        substitute(&objective, &mut cost);

        for r in &p.rows {
            let mut coeffs = vec![0.0; ncol];
            let shift = substitute(&r.coeffs, &mut coeffs);
            rows.push((coeffs, r.rel, r.rhs - shift));
        }
        for (j, m) in maps.iter().enumerate() {
            if let VarMap::Shift { col, offset } = *m {
                if p.upper[j].is_finite() {
                    let mut coeffs = vec![0.0; ncol];
                    coeffs[col] = 1.0;
                    rows.push((coeffs, Relation::Le, p.upper[j] - offset));
                }
            }
        }
        Ok(Self { maps, n_struct: ncol, rows, cost })
    }

    fn solve(self, p: &LpProblem) -> Result<LpSolution> {
        let m = self.rows.len();
        let n_slack = self.rows.iter().filter(|r| r.1 != Relation::Eq).count();
        let first_art = self.n_struct + n_slack;
        let width = first_art + m + 1;
        let rhs_col = width - 1;

        let mut t = vec![vec![0.0; width]; m + 1];
        let mut basis = vec![0; m];
        let mut slack = self.n_struct;
        for (i, (coeffs, rel, rhs)) in self.rows.iter().enumerate() {
            let flip = if *rhs < 0.0 { -1.0 } else { 1.0 };
            for (j, &a) in coeffs.iter().enumerate() {
                t[i][j] = flip * a;
            }
            t[i][rhs_col] = flip * rhs;
            match rel {
                Relation::Le | Relation::Ge => {
                    let s = if *rel == Relation::Le { 1.0 } else { -1.0 };
                    t[i][slack] = flip * s;
                    slack += 1;
                }
                Relation::Eq => {}
            }
            t[i][first_art + i] = 1.0;
            basis[i] = first_art + i;
        }

        // Phase 1: minimize the sum of artificials.
        for i in 0..m {
            let (rows, objective) = t.split_at_mut(m);
            for (o, v) in objective[0].iter_mut().zip(&rows[i]) {
                *o -= v;
            }
        }
        for i in 0..m {
            t[m][first_art + i] = 0.0;
        }
        let mut tab = Tableau { t, basis, rhs_col };
        tab.run(width - 1)?;
        if -tab.t[m][rhs_col] > 1e-9 * (1.0 + m as f64) {
            return Err(Error::Lp("infeasible"));
        }
        tab.expel_artificials(first_art);

        // Phase 2 over structural and slack columns only.
        let rows = tab.t.len() - 1;
        let obj = rows;
        for j in 0..width {
            tab.t[obj][j] = 0.0;
        }
        for (j, &c) in self.cost.iter().enumerate() {
            tab.t[obj][j] = c;
        }
        for i in 0..rows {
            let cb = if tab.basis[i] < self.n_struct { self.cost[tab.basis[i]] } else { 0.0 };
            if cb != 0.0 {
                for j in 0..width {
                    tab.t[obj][j] -= cb * tab.t[i][j];
                }
            }
        }
        tab.run(first_art)?;

        let mut s = vec![0.0; self.n_struct];
        for (i, &b) in tab.basis.iter().enumerate() {
            if b < self.n_struct {
                s[b] = tab.t[i][rhs_col];
            }
        }
        let x: Vec<f64> = self
            .maps
            .iter()
            .map(|m| match *m {
                VarMap::Shift { col, offset } => offset + s[col],
                VarMap::Mirror { col, offset } => offset - s[col],
                VarMap::Split { pos, neg } => s[pos] - s[neg],
            })
            .collect();
        let objective = p.objective.iter().zip(&x).map(|(c, v)| c * v).sum();
        Ok(LpSolution { x, objective })
    }
}

struct Tableau {
    /// Constraint rows followed by the reduced-cost row.
    t: Vec<Vec<f64>>,
    basis: Vec<usize>,
    rhs_col: usize,
}

impl Tableau {
    fn pivot(&mut self, r: usize, c: usize) {
        let pv = self.t[r][c];
        for v in self.t[r].iter_mut() {
            *v /= pv;
        }
        let pivot_row = self.t[r].clone();
        for (i, row) in self.t.iter_mut().enumerate() {
            if i == r {
                continue;
            }
            let f = row[c];
            if f != 0.0 {
                for (v, p) in row.iter_mut().zip(&pivot_row) {
                    *v -= f * p;
                }
                row[c] = 0.0;
            }
        }
        self.basis[r] = c;
    }

    /// Simplex iterations using columns `0..ncols` as candidates.
    fn run(&mut self, ncols: usize) -> Result<()> {
        let obj = self.t.len() - 1;
        for _ in 0..MAX_PIVOTS {
            let Some(c) = (0..ncols).find(|&j| self.t[obj][j] < -PIVOT_EPS) else {
                return Ok(());
            };
            let mut best: Option<(usize, f64)> = None;
            for i in 0..obj {
                let a = self.t[i][c];
                if a > PIVOT_EPS {
                    let ratio = self.t[i][self.rhs_col] / a;
                    best = match best {
                        None => Some((i, ratio)),
                        Some((bi, br)) => {
                            if ratio < br - 1e-13 || (ratio <= br + 1e-13 && self.basis[i] < self.basis[bi]) {
                                Some((i, ratio))
                            } else {
                                Some((bi, br))
                            }
                        }
                    };
                }
            }
            let Some((r, _)) = best else {
                return Err(Error::Lp("unbounded"));
            };
            self.pivot(r, c);
        }
        Err(Error::Lp("not converging (pivot limit reached)"))
    }

    /// Pivots artificial columns out of the basis after phase 1, dropping
    /// rows that turn out to be redundant.
    fn expel_artificials(&mut self, first_art: usize) {
        let mut i = 0;
        while i < self.basis.len() {
            if self.basis[i] >= first_art {
                match (0..first_art).find(|&j| self.t[i][j].abs() > 1e-9) {
                    Some(j) => {
                        self.pivot(i, j);
                        i += 1;
                    }
                    None => {
                        self.t.remove(i);
                        self.basis.remove(i);
                    }
                }
            } else {
                i += 1;
            }
        }
    }
}
