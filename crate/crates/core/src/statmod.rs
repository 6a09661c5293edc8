//! Kernel measure of conditional dependence between a prediction `Ỹ` and a
//! protected attribute `A` given the target `Y`, and a conditional
//! independence test built on it.
//!
//! With centered Gram matrices `G = HKH` and ridge `ε`, each variable gets
//! the regularized projection `R = G(G + εI)^{-1}`. The statistic is
//!
//! ```text
//! T = Tr[ R_Ỹ (I − R_Y) R_A (I − R_Y) ]
//! ```
//!
//! the squared norm of the cross-covariance between `Ỹ` and `A` after both
//! are regressed on `Y`. It is nonnegative and differentiable in `Ỹ`.
//!
//! The test permutes `A` within quantile bins of `Y` and works on low-rank
//! factors `R ≈ ΨΨᵀ` from a pivoted incomplete Cholesky decomposition, so
//! each permutation costs `O(n · rank_A · rank_Ỹ)`.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Smallest sample accepted by the statistic.
pub const MIN_N: usize = 8;

/// Pairs used by the median heuristic are drawn from at most this many
/// evenly spaced points.
const MEDIAN_POINTS: usize = 1000;

/// Bandwidth of the Gaussian kernel on the prediction `Ỹ`. The kernels on
/// `A` and `Y` always use the median heuristic.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// Lower median of the pairwise distances.
    Median,
    /// A multiple of the median heuristic.
    ScaledMedian(f64),
    Fixed(f64),
}

impl Bandwidth {
    /// The bandwidth for `v`, with the pair of indices it depends on and the
    /// derivative factor with respect to that pair's distance.
    fn resolve(self, v: &[f64]) -> (f64, Option<(usize, usize)>, f64) {
        match self {
            Bandwidth::Median => {
                let (s, pair) = median_pair(v);
                (s, pair, 1.0)
            }
            Bandwidth::ScaledMedian(k) => {
                let (s, pair) = median_pair(v);
                (k * s, pair, k)
            }
            Bandwidth::Fixed(s) => (s, None, 0.0),
        }
    }
}

impl std::fmt::Display for Bandwidth {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Bandwidth::Median => write!(f, "median"),
            Bandwidth::ScaledMedian(k) => write!(f, "median*{k}"),
            Bandwidth::Fixed(s) => write!(f, "{s}"),
        }
    }
}

impl std::str::FromStr for Bandwidth {
    type Err = Error;

    /// Parses `median`, `median*K` or a positive number.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "median" {
            return Ok(Bandwidth::Median);
        }
        let num = |t: &str| t.parse::<f64>().map_err(|e| Error::Parse(format!("bandwidth {s:?}: {e}")));
        match s.strip_prefix("median*") {
            Some(k) => Ok(Bandwidth::ScaledMedian(num(k)?)),
            None => Ok(Bandwidth::Fixed(num(s)?)),
        }
    }
}

/// Kernel on the protected attribute.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AKernel {
    /// Delta kernel when `A` takes at most 16 distinct integer values,
    /// Gaussian otherwise.
    Auto,
    Rbf,
    Delta,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub bandwidth: Bandwidth,
    pub a_kernel: AKernel,
    /// Ridge of the `Ỹ` and `A` projections, `ε = ridge_scale · n`.
    pub ridge_scale: f64,
    /// Ridge of the regression on `Y`, as a multiple of `n`.
    pub cond_ridge_scale: f64,
    /// Number of permutations `B` of the test.
    pub permutations: usize,
    /// Number of `Y` quantile bins; `None` uses `max(4, ⌈n^{1/3}⌉)`.
    pub bins: Option<usize>,
    /// Rank cap of the incomplete Cholesky factors.
    pub max_rank: usize,
    /// Seed of the permutation stream.
    pub seed: u64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        Self {
            bandwidth: Bandwidth::Median,
            a_kernel: AKernel::Auto,
            ridge_scale: 1e-3,
            cond_ridge_scale: 1e-3,
            permutations: 199,
            bins: None,
            max_rank: 200,
            seed: 0,
        }
    }
}

impl KernelConfig {
    /// Settings of the conditional independence test: a wide kernel on
    /// `Ỹ` with a strong ridge, and a tight regression on `Y`.
    pub fn test_default() -> Self {
        Self { bandwidth: Bandwidth::ScaledMedian(4.0), ridge_scale: 1.0, cond_ridge_scale: 1e-5, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge_scale > 0.0) || !(self.cond_ridge_scale > 0.0) {
            return Err(Error::Argument("ridge scales must be positive".into()));
        }
        if self.permutations < 19 {
            return Err(Error::Argument(format!("need at least 19 permutations, got {}", self.permutations)));
        }
        if matches!(self.bins, Some(b) if b < 2) {
            return Err(Error::Argument("need at least 2 bins".into()));
        }
        if let Bandwidth::Fixed(s) | Bandwidth::ScaledMedian(s) = self.bandwidth {
            if !(s > 0.0) || !s.is_finite() {
                return Err(Error::Argument(format!("bandwidth must be positive, got {s}")));
            }
        }
        if self.max_rank == 0 {
            return Err(Error::Argument("rank cap must be positive".into()));
        }
        Ok(())
    }

    pub fn ridge(&self, n: usize) -> f64 {
        self.ridge_scale * n as f64
    }

    pub fn cond_ridge(&self, n: usize) -> f64 {
        self.cond_ridge_scale * n as f64
    }

    pub fn bin_count(&self, n: usize) -> usize {
        self.bins.unwrap_or_else(|| ((n as f64).cbrt().ceil() as usize).max(4)).min(n)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CiTestResult {
    pub statistic: f64,
    pub p_value: f64,
    pub n: usize,
    pub bins: usize,
    /// `A` was constant within every bin, so no permutation could move it
    /// and the p-value is set to 1.
    pub degenerate: bool,
    pub config: KernelConfig,
}

impl CiTestResult {
    /// `key=value` lines for reports.
    pub fn to_key_values(&self) -> String {
        format!(
            "statistic={}\np_value={}\nn={}\npermutations={}\nbins={}\nridge_scale={}\ncond_ridge_scale={}\nbandwidth={}\nseed={}\ndegenerate={}\n",
            self.statistic,
            self.p_value,
            self.n,
            self.config.permutations,
            self.bins,
            self.config.ridge_scale,
            self.config.cond_ridge_scale,
            self.config.bandwidth,
            self.config.seed,
            self.degenerate
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Kernel {
    Rbf(f64),
    Delta,
}

impl Kernel {
    fn eval(self, u: f64, v: f64) -> f64 {
        match self {
            Kernel::Rbf(s) => (-(u - v) * (u - v) / (2.0 * s * s)).exp(),
            Kernel::Delta => f64::from(u8::from(u == v)),
        }
    }
}

/// Lower median of `|v_i − v_j|` over pairs `i < j`, with the indices of
/// the pair attaining it. Large inputs use evenly spaced points only.
/// Returns bandwidth 1 without a pair when all values coincide.
fn median_pair(v: &[f64]) -> (f64, Option<(usize, usize)>) {
    let n = v.len();
    let idx: Vec<usize> =
        if n <= MEDIAN_POINTS { (0..n).collect() } else { (0..MEDIAN_POINTS).map(|k| k * n / MEDIAN_POINTS).collect() };
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(idx.len() * idx.len() / 2);
    for (s, &i) in idx.iter().enumerate() {
        for &j in &idx[s + 1..] {
            pairs.push(((v[i] - v[j]).abs(), i, j));
        }
    }
    if pairs.is_empty() {
        return (1.0, None);
    }
    let mid = (pairs.len() - 1) / 2;
    let (_, &mut (d, i, j), _) = pairs.select_nth_unstable_by(mid, |a, b| a.0.total_cmp(&b.0));
    if d > 0.0 {
        (d, Some((i, j)))
    } else {
        (1.0, None)
    }
}

/// Median-heuristic bandwidth of a vector.
pub fn median_bandwidth(v: &[f64]) -> f64 {
    median_pair(v).0
}

fn a_kernel(a: &[f64], choice: AKernel) -> Kernel {
    let discrete = || {
        let mut levels: Vec<f64> = Vec::new();
        for &v in a {
            if v.fract() != 0.0 {
                return false;
            }
            if !levels.contains(&v) {
                levels.push(v);
                if levels.len() > 16 {
                    return false;
                }
            }
        }
        true
    };
    match choice {
        AKernel::Delta => Kernel::Delta,
        AKernel::Rbf => Kernel::Rbf(median_bandwidth(a)),
        AKernel::Auto if discrete() => Kernel::Delta,
        AKernel::Auto => Kernel::Rbf(median_bandwidth(a)),
    }
}

fn check_inputs(yt: &[f64], a: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<()> {
    cfg.validate()?;
    let n = yt.len();
    if a.len() != n || y.len() != n {
        return Err(Error::Argument(format!("lengths differ: {} / {} / {}", n, a.len(), y.len())));
    }
    if n < MIN_N {
        return Err(Error::Argument(format!("need at least {MIN_N} observations, got {n}")));
    }
    if yt.iter().chain(a).chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Argument("inputs contain NaN or infinite values".into()));
    }
    Ok(())
}

fn gram(k: Kernel, v: &[f64]) -> DMatrix<f64> {
    let n = v.len();
    DMatrix::from_fn(n, n, |i, j| k.eval(v[i], v[j]))
}

/// `HMH` for the centering matrix `H = I − 11ᵀ/n`.
fn center(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows();
    let nf = n as f64;
    let row: Vec<f64> = (0..n).map(|i| m.row(i).sum() / nf).collect();
    let col: Vec<f64> = (0..n).map(|j| m.column(j).sum() / nf).collect();
    let all = row.iter().sum::<f64>() / nf;
    DMatrix::from_fn(n, n, |i, j| m[(i, j)] - row[i] - col[j] + all)
}

/// `(G + εI)^{-1}` for a centered Gram matrix `G`.
fn ridge_inverse(g: &DMatrix<f64>, eps: f64) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    let mut s = g.clone();
    for i in 0..n {
        s[(i, i)] += eps;
    }
    // symmetrize against rounding before factoring
    let s = (&s + s.transpose()) * 0.5;
    s.cholesky()
        .map(|c| c.inverse())
        .ok_or_else(|| Error::Degenerate("ridge-regularized Gram matrix is not positive definite".into()))
}

fn frob_inner(x: &DMatrix<f64>, y: &DMatrix<f64>) -> f64 {
    x.iter().zip(y.iter()).map(|(a, b)| a * b).sum()
}

/// Pieces shared by the statistic and its gradient.
struct Exact {
    value: f64,
    eps: f64,
    k_t: DMatrix<f64>,
    s_t_inv: DMatrix<f64>,
    /// `(I − R_Y) R_A (I − R_Y)`
    n_mat: DMatrix<f64>,
    sigma: f64,
    pair: Option<(usize, usize)>,
    /// `dσ / d|ỹ_i − ỹ_j|` for the pair above.
    pair_factor: f64,
}

fn exact(yt: &[f64], a: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<Exact> {
    check_inputs(yt, a, y, cfg)?;
    let n = yt.len();
    let eps = cfg.ridge(n);
    let (sigma, pair, pair_factor) = cfg.bandwidth.resolve(yt);
    let k_t = gram(Kernel::Rbf(sigma), yt);
    let g_a = center(&gram(a_kernel(a, cfg.a_kernel), a));
    let g_y = center(&gram(Kernel::Rbf(median_bandwidth(y)), y));
    let eps_y = cfg.cond_ridge(n);
    let m = ridge_inverse(&g_y, eps_y)? * eps_y;
    let r_a = DMatrix::identity(n, n) - ridge_inverse(&g_a, eps)? * eps;
    let n_mat = &m * r_a * &m;
    let s_t_inv = ridge_inverse(&center(&k_t), eps)?;
    let r_t = DMatrix::identity(n, n) - &s_t_inv * eps;
    let value = frob_inner(&r_t, &n_mat).max(0.0);
    Ok(Exact { value, eps, k_t, s_t_inv, n_mat, sigma, pair, pair_factor })
}

/// The conditional-dependence statistic `T` computed from full Gram
/// matrices.
pub fn kmcd(yt: &[f64], a: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<f64> {
    Ok(exact(yt, a, y, cfg)?.value)
}

/// Gradient of [`kmcd`] with respect to `ỹ`.
pub fn kmcd_grad(yt: &[f64], a: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<Vec<f64>> {
    Ok(kmcd_value_and_grad(yt, a, y, cfg)?.1)
}

/// [`kmcd`] and [`kmcd_grad`] from one factorization.
pub fn kmcd_value_and_grad(yt: &[f64], a: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<(f64, Vec<f64>)> {
    let e = exact(yt, a, y, cfg)?;
    let n = yt.len();
    // dT = Tr[dK · P] with P = H (ε S⁻¹ N S⁻¹) H
    let w = &e.s_t_inv * &e.n_mat * &e.s_t_inv * e.eps;
    let p = center(&w);
    let s2 = e.sigma * e.sigma;
    let mut grad = vec![0.0; n];
    let mut d_sigma = 0.0;
    for k in 0..n {
        let mut g = 0.0;
        for j in 0..n {
            let diff = yt[k] - yt[j];
            let pk = p[(k, j)] * e.k_t[(k, j)];
            g -= pk * diff / s2;
            d_sigma += pk * diff * diff / (s2 * e.sigma);
        }
        grad[k] = 2.0 * g;
    }
    if let Some((i, j)) = e.pair {
        let s = (yt[i] - yt[j]).signum() * e.pair_factor;
        grad[i] += d_sigma * s;
        grad[j] -= d_sigma * s;
    }
    Ok((e.value, grad))
}

/// Pivoted incomplete Cholesky `K ≈ LLᵀ`, stopped when the residual trace
/// falls below `tol` or the rank reaches `max_rank`.
fn incomplete_cholesky(k: Kernel, v: &[f64], tol: f64, max_rank: usize) -> DMatrix<f64> {
    let n = v.len();
    let mut diag: Vec<f64> = v.iter().map(|&u| k.eval(u, u)).collect();
    let mut cols: Vec<Vec<f64>> = Vec::new();
    while cols.len() < max_rank.min(n) {
        let residual: f64 = diag.iter().sum();
        if residual <= tol {
            break;
        }
        let (piv, &dmax) = diag.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("nonempty");
        if dmax <= 1e-12 {
            break;
        }
        let root = dmax.sqrt();
        let col: Vec<f64> = (0..n)
            .map(|i| {
                let dot: f64 = cols.iter().map(|c| c[i] * c[piv]).sum();
                (k.eval(v[i], v[piv]) - dot) / root
            })
            .collect();
        for (d, c) in diag.iter_mut().zip(&col) {
            *d = (*d - c * c).max(0.0);
        }
        diag[piv] = 0.0;
        cols.push(col);
    }
    let r = cols.len();
    DMatrix::from_fn(n, r, |i, j| cols[j][i])
}

/// `Ψ` with `ΨΨᵀ ≈ G(G + εI)^{-1}` for `G = HKH`.
fn projection_factor(k: Kernel, v: &[f64], eps: f64, max_rank: usize) -> DMatrix<f64> {
    let mut l = incomplete_cholesky(k, v, 1e-4 * eps, max_rank);
    let n = l.nrows() as f64;
    for mut c in l.column_iter_mut() {
        let m = c.sum() / n;
        c.add_scalar_mut(-m);
    }
    if l.ncols() == 0 {
        return l;
    }
    let eig = SymmetricEigen::new(l.transpose() * &l);
    let scale = DMatrix::from_diagonal(&eig.eigenvalues.map(|s| 1.0 / (s.max(0.0) + eps).sqrt()));
    l * eig.eigenvectors * scale
}

/// Index groups of `y` in sorted order, split into `bins` near-equal runs.
fn quantile_bins(y: &[f64], bins: usize) -> Vec<Vec<usize>> {
    let n = y.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| y[i].total_cmp(&y[j]).then(i.cmp(&j)));
    (0..bins).map(|b| order[b * n / bins..(b + 1) * n / bins].to_vec()).collect()
}

/// `‖Ψ_A[π]ᵀ C‖²_F`, where row `i` of `Ψ_A[π]` is row `perm[i]` of `Ψ_A`.
fn permuted_statistic(psi_a: &DMatrix<f64>, c: &DMatrix<f64>, perm: &[usize]) -> f64 {
    let (ra, rt) = (psi_a.ncols(), c.ncols());
    let mut m = vec![0.0; ra * rt];
    for (i, &pi) in perm.iter().enumerate() {
        for k in 0..ra {
            let a = psi_a[(pi, k)];
            if a == 0.0 {
                continue;
            }
            for l in 0..rt {
                m[k * rt + l] += a * c[(i, l)];
            }
        }
    }
    m.iter().map(|v| v * v).sum()
}

/// Permutation test of `Ỹ ⟂ A | Y`. The null distribution permutes `A`
/// within quantile bins of `Y`; the p-value is
/// `(1 + #{T_π ≥ T}) / (B + 1)`.
pub fn ci_test(yt: &[f64], a: &[f64], y: &[f64], cfg: &KernelConfig) -> Result<CiTestResult> {
    check_inputs(yt, a, y, cfg)?;
    let n = yt.len();
    let eps = cfg.ridge(n);
    let (sigma_t, _, _) = cfg.bandwidth.resolve(yt);
    let psi_t = projection_factor(Kernel::Rbf(sigma_t), yt, eps, cfg.max_rank);
    let eps_y = cfg.cond_ridge(n);
    let psi_y = projection_factor(Kernel::Rbf(median_bandwidth(y)), y, eps_y, cfg.max_rank);
    let psi_a = projection_factor(a_kernel(a, cfg.a_kernel), a, eps, cfg.max_rank);
    let c = &psi_t - &psi_y * (psi_y.transpose() * &psi_t);
    let identity: Vec<usize> = (0..n).collect();
    let statistic = permuted_statistic(&psi_a, &c, &identity);

    let bins = quantile_bins(y, cfg.bin_count(n));
    let degenerate = bins.iter().all(|b| b.iter().all(|&i| a[i] == a[b[0]]));
    if degenerate {
        return Ok(CiTestResult { statistic, p_value: 1.0, n, bins: bins.len(), degenerate, config: *cfg });
    }
    let tie = statistic - 1e-12 * statistic.abs();
    let exceed: usize = (0..cfg.permutations)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
            rng.set_stream(b as u64 + 1);
            let mut perm = identity.clone();
            for group in &bins {
                let mut shuffled = group.clone();
                shuffled.shuffle(&mut rng);
                for (&dst, &src) in group.iter().zip(&shuffled) {
                    perm[dst] = src;
                }
            }
            usize::from(permuted_statistic(&psi_a, &c, &perm) >= tie)
        })
        .sum();
    let p_value = (1 + exceed) as f64 / (cfg.permutations + 1) as f64;
    Ok(CiTestResult { statistic, p_value, n, bins: bins.len(), degenerate, config: *cfg })
}
