//! Data generators: the linear structural model
//! `X = qA + E_X, H = bA + E_H, Y = cX + dH + E_Y`, multinomial sampling
//! from discrete joints, and the built-in joints used in the worked
//! examples.
//!
//! Every generator draws from a `ChaCha20Rng` seeded with
//! `seed_from_u64(seed)`, so streams are reproducible across platforms.

use num_rational::Rational64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::probcore::{DiscreteJoint, Prob};
use crate::sample::Sample;

pub use crate::sample::load_csv;

/// Seeded generator used throughout the crate.
pub fn rng_from_seed(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NoiseFamily {
    Gaussian,
    Laplace,
    /// `U[loc − s, loc + s]`.
    Uniform,
}

/// A location-scale noise law. For the Gaussian the scale is the standard
/// deviation, for the Laplace the diversity `b`, for the uniform the
/// half-width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseLaw {
    pub family: NoiseFamily,
    pub location: f64,
    pub scale: f64,
}

impl NoiseLaw {
    pub fn new(family: NoiseFamily, location: f64, scale: f64) -> Result<Self> {
        if !(scale > 0.0) || !scale.is_finite() || !location.is_finite() {
            return Err(Error::Argument(format!("noise scale must be positive and finite, got {scale}")));
        }
        Ok(Self { family, location, scale })
    }

    pub fn gaussian(sd: f64) -> Result<Self> {
        Self::new(NoiseFamily::Gaussian, 0.0, sd)
    }

    pub fn laplace(b: f64) -> Result<Self> {
        Self::new(NoiseFamily::Laplace, 0.0, b)
    }

    pub fn uniform(half_width: f64) -> Result<Self> {
        Self::new(NoiseFamily::Uniform, 0.0, half_width)
    }

    pub fn variance(&self) -> f64 {
        let s2 = self.scale * self.scale;
        match self.family {
            NoiseFamily::Gaussian => s2,
            NoiseFamily::Laplace => 2.0 * s2,
            NoiseFamily::Uniform => s2 / 3.0,
        }
    }

    pub fn is_gaussian(&self) -> bool {
        self.family == NoiseFamily::Gaussian
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z = match self.family {
            NoiseFamily::Gaussian => rng.sample::<f64, _>(StandardNormal),
            NoiseFamily::Laplace => {
                // inverse CDF on u in (-1/2, 1/2)
                let u: f64 = rng.random::<f64>() - 0.5;
                -u.signum() * (1.0 - 2.0 * u.abs()).ln()
            }
            NoiseFamily::Uniform => 2.0 * rng.random::<f64>() - 1.0,
        };
        self.location + self.scale * z
    }

    /// Parses `gaussian:SD`, `laplace:B` or `uniform:S`.
    pub fn parse(text: &str) -> Result<Self> {
        let (fam, scale) =
            text.split_once(':').ok_or_else(|| Error::Parse(format!("noise law {text:?} is not FAMILY:SCALE")))?;
        let scale: f64 = scale.trim().parse().map_err(|e| Error::Parse(format!("noise scale {scale:?}: {e}")))?;
        let family = match fam.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => NoiseFamily::Gaussian,
            "laplace" => NoiseFamily::Laplace,
            "uniform" => NoiseFamily::Uniform,
            other => return Err(Error::Parse(format!("unknown noise family {other:?}"))),
        };
        Self::new(family, 0.0, scale)
    }
}

impl std::fmt::Display for NoiseLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let name = match self.family {
            NoiseFamily::Gaussian => "gaussian",
            NoiseFamily::Laplace => "laplace",
            NoiseFamily::Uniform => "uniform",
        };
        write!(f, "{name}:{}", self.scale)
    }
}

/// Law of the protected attribute in the structural model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AttributeLaw {
    /// `A ∈ {0, 1}` with `P(A=1) = p`.
    Bernoulli(f64),
    /// `A ~ U[0, 1]`.
    Uniform01,
}

impl Default for AttributeLaw {
    fn default() -> Self {
        Self::Bernoulli(0.5)
    }
}

impl AttributeLaw {
    pub fn variance(&self) -> f64 {
        match *self {
            Self::Bernoulli(p) => p * (1.0 - p),
            Self::Uniform01 => 1.0 / 12.0,
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            Self::Bernoulli(p) => f64::from(u8::from(rng.random::<f64>() < p)),
            Self::Uniform01 => rng.random::<f64>(),
        }
    }

    fn validate(&self) -> Result<()> {
        match *self {
            Self::Bernoulli(p) if !(0.0..=1.0).contains(&p) => {
                Err(Error::Argument(format!("Bernoulli parameter {p} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

/// Coefficients and noise laws of the linear structural model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearScm {
    pub q: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e_x: NoiseLaw,
    pub e_h: NoiseLaw,
    pub e_y: NoiseLaw,
}

impl LinearScm {
    /// Coefficients of the simulated experiments: `q = 0.7, b = 0.6,
    /// c = 0.9, d = 0.6`.
    pub fn standard_coefficients(e_x: NoiseLaw, e_h: NoiseLaw, e_y: NoiseLaw) -> Self {
        Self { q: 0.7, b: 0.6, c: 0.9, d: 0.6, e_x, e_h, e_y }
    }

    /// Uniform noises `E_X, E_H ~ U[−0.2, 0.2]`, `E_Y ~ U[−0.1, 0.1]`.
    pub fn uniform_setting() -> Self {
        let u = |s| NoiseLaw::uniform(s).expect("positive scale");
        Self::standard_coefficients(u(0.2), u(0.2), u(0.1))
    }

    /// Laplace noises with scales 0.4, 0.4, 0.2.
    pub fn laplace_setting() -> Self {
        let l = |s| NoiseLaw::laplace(s).expect("positive scale");
        Self::standard_coefficients(l(0.4), l(0.4), l(0.2))
    }

    /// Gaussian noises with standard deviations 0.4, 0.4, 0.2.
    pub fn gaussian_setting() -> Self {
        let g = |s| NoiseLaw::gaussian(s).expect("positive scale");
        Self::standard_coefficients(g(0.4), g(0.4), g(0.2))
    }

    /// `var(E_X)`.
    pub fn sigma2_ex(&self) -> f64 {
        self.e_x.variance()
    }

    /// Variance of the aggregate noise `E = d·E_H + E_Y`.
    pub fn sigma2_e(&self) -> f64 {
        self.e_y.variance() + self.d * self.d * self.e_h.variance()
    }

    /// Whether `X` and the aggregate noise `E` are both Gaussian.
    pub fn is_gaussian(&self) -> bool {
        self.e_x.is_gaussian() && self.e_y.is_gaussian() && (self.d == 0.0 || self.e_h.is_gaussian())
    }

    /// Hypotheses under which no deterministic predictor is fair:
    /// `c ≠ 0` and `qc + bd ≠ 0`.
    pub fn check_hypotheses(&self) -> Result<()> {
        if self.c == 0.0 {
            return Err(Error::Precondition("c = 0: X has no effect on Y".into()));
        }
        if self.q * self.c + self.b * self.d == 0.0 {
            return Err(Error::Precondition("qc + bd = 0: A has no total effect on Y".into()));
        }
        Ok(())
    }

    /// `var(Y)` for the given law of `A`.
    pub fn var_y(&self, a_law: AttributeLaw) -> f64 {
        let k = self.q * self.c + self.b * self.d;
        k * k * a_law.variance() + self.c * self.c * self.sigma2_ex() + self.sigma2_e()
    }
}

/// Options of [`gen_linear_scm`].
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ScmOptions {
    pub a_law: AttributeLaw,
    /// Refuse coefficient settings outside the unattainability hypotheses.
    pub require_hypotheses: bool,
}

/// `n` i.i.d. rows `(a, x, y)` of the structural model. The hidden `H` is
/// drawn but not emitted.
pub fn gen_linear_scm(scm: &LinearScm, opts: ScmOptions, n: usize, seed: u64) -> Result<Sample> {
    if n == 0 {
        return Err(Error::Argument("sample size must be at least 1".into()));
    }
    opts.a_law.validate()?;
    if opts.require_hypotheses {
        scm.check_hypotheses()?;
    }
    let mut rng = rng_from_seed(seed);
    let mut a = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let ai = opts.a_law.sample(&mut rng);
        let xi = scm.q * ai + scm.e_x.sample(&mut rng);
        let hi = scm.b * ai + scm.e_h.sample(&mut rng);
        let yi = scm.c * xi + scm.d * hi + scm.e_y.sample(&mut rng);
        a.push(ai);
        x.push(vec![xi]);
        y.push(yi);
    }
    Ok(Sample::from_columns(a, x, y))
}

/// `n` rows drawn from a discrete joint, with integer codes for `a`, `x`, `y`.
pub fn gen_discrete<T: Prob>(joint: &DiscreteJoint<T>, n: usize, seed: u64) -> Result<Sample> {
    if n == 0 {
        return Err(Error::Argument("sample size must be at least 1".into()));
    }
    let weights: Vec<f64> = joint.entries().iter().map(Prob::as_f64).collect();
    let dist = WeightedIndex::new(&weights).map_err(|e| Error::InvalidTable(e.to_string()))?;
    let (nx, ny) = (joint.x_levels(), joint.y_levels());
    let mut rng = rng_from_seed(seed);
    let mut a = Vec::with_capacity(n);
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let k = dist.sample(&mut rng);
        a.push((k / (nx * ny)) as f64);
        x.push(vec![((k / ny) % nx) as f64]);
        y.push((k % ny) as f64);
    }
    Ok(Sample::from_columns(a, x, y))
}

/// A random binary-label joint whose entries are bounded away from zero.
pub fn random_joint<R: Rng + ?Sized>(a_levels: usize, x_levels: usize, rng: &mut R) -> Result<DiscreteJoint> {
    let raw: Vec<f64> = (0..a_levels * x_levels * 2).map(|_| 0.05 + rng.random::<f64>()).collect();
    let total: f64 = raw.iter().sum();
    let mut p: Vec<f64> = raw.iter().map(|v| v / total).collect();
    // put rounding residue on the largest cell so the table sums to 1
    let residue = 1.0 - p.iter().sum::<f64>();
    let big = (0..p.len()).max_by(|&i, &j| p[i].total_cmp(&p[j])).unwrap_or(0);
    p[big] += residue;
    DiscreteJoint::new(a_levels, x_levels, 2, p)
}

/// The binary joints of the discrete worked examples.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BuiltinJoint {
    /// Conditionals under which `1{A = X}` is fair.
    ExpL,
    /// Conditionals under which only constant deterministic predictors are fair.
    ExpR,
    /// `X ⟂ A | Y`, with `P(X=1|Y=0) = 0.3` and `P(X=1|Y=1) = 0.8`.
    Independent,
}

impl BuiltinJoint {
    /// `P(X=1 | A=a, Y=y)` as `[a][y]`, in tenths.
    fn x1_tenths(self) -> [[i64; 2]; 2] {
        match self {
            Self::ExpL => [[3, 8], [7, 2]],
            Self::ExpR => [[4, 6], [7, 2]],
            Self::Independent => [[3, 8], [3, 8]],
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "expl" => Ok(Self::ExpL),
            "expr" => Ok(Self::ExpR),
            "independent" | "indep" => Ok(Self::Independent),
            other => Err(Error::Parse(format!("unknown joint {other:?}; expected expl, expr or independent"))),
        }
    }

    /// The joint with exact rational entries. `P(A, Y)` is
    /// `(0,0) = 0.2, (0,1) = 0.4, (1,0) = 0.3, (1,1) = 0.1`.
    pub fn exact(self) -> DiscreteJoint<Rational64> {
        let r = |n: i64| Rational64::new(n, 10);
        let p_ay = vec![vec![r(2), r(4)], vec![r(3), r(1)]];
        let x1 = self.x1_tenths();
        let cond: Vec<Vec<Vec<Rational64>>> =
            (0..2).map(|a| (0..2).map(|y| vec![r(10 - x1[a][y]), r(x1[a][y])]).collect()).collect();
        DiscreteJoint::from_conditionals(&p_ay, &cond).expect("built-in joints are valid")
    }

    pub fn joint(self) -> DiscreteJoint {
        self.exact().to_f64()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mean_var(v: &[f64]) -> (f64, f64) {
        let n = v.len() as f64;
        let m = v.iter().sum::<f64>() / n;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0))
    }

    #[test]
    fn noise_variances_match_their_laws() {
        let mut rng = rng_from_seed(1);
        for law in [NoiseLaw::gaussian(0.4).unwrap(), NoiseLaw::laplace(0.4).unwrap(), NoiseLaw::uniform(0.2).unwrap()]
        {
            let v: Vec<f64> = (0..200_000).map(|_| law.sample(&mut rng)).collect();
            let (m, s2) = mean_var(&v);
            assert!(m.abs() < 0.01, "{law}: mean {m}");
            assert!((s2 / law.variance() - 1.0).abs() < 0.02, "{law}: var {s2} vs {}", law.variance());
        }
    }

    #[test]
    fn null_model_is_uncorrelated() {
        let z = NoiseLaw::gaussian(1.0).unwrap();
        let scm = LinearScm { q: 0.0, b: 0.0, c: 0.0, d: 0.0, e_x: z, e_h: z, e_y: z };
        let n = 10_000;
        let s = gen_linear_scm(&scm, ScmOptions::default(), n, 3).unwrap();
        let (mx, vx) = mean_var(&s.x);
        let (my, vy) = mean_var(&s.y);
        let cov = s.x.iter().zip(&s.y).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>() / (n as f64 - 1.0);
        assert!((cov / (vx * vy).sqrt()).abs() <= 3.0 / (n as f64).sqrt());
    }

    #[test]
    fn hypothesis_guard() {
        let mut scm = LinearScm::laplace_setting();
        scm.c = 0.0;
        let opts = ScmOptions { require_hypotheses: true, ..Default::default() };
        assert!(matches!(gen_linear_scm(&scm, opts, 10, 0), Err(Error::Precondition(_))));
        assert!(gen_linear_scm(&scm, ScmOptions::default(), 10, 0).is_ok());
    }

    #[test]
    fn seeded_generation_is_reproducible() {
        let scm = LinearScm::uniform_setting();
        let s1 = gen_linear_scm(&scm, ScmOptions::default(), 100, 9).unwrap();
        let s2 = gen_linear_scm(&scm, ScmOptions::default(), 100, 9).unwrap();
        let s3 = gen_linear_scm(&scm, ScmOptions::default(), 100, 10).unwrap();
        assert_eq!(s1, s2);
        assert_ne!(s1, s3);
    }

    #[test]
    fn builtin_joints_have_the_stated_marginals() {
        let j = BuiltinJoint::ExpR.exact();
        assert_eq!(j.p_ay(0, 0), Rational64::new(1, 5));
        assert_eq!(j.p_ay(1, 1), Rational64::new(1, 10));
        assert_eq!(j.x_given_ay(1, 0, 1), Rational64::new(3, 5));
    }

    #[test]
    fn noise_law_text_round_trip() {
        let law = NoiseLaw::parse("laplace:0.4").unwrap();
        assert_eq!(law, NoiseLaw::laplace(0.4).unwrap());
        assert_eq!(NoiseLaw::parse(&law.to_string()).unwrap(), law);
        assert!(NoiseLaw::parse("cauchy:1").is_err());
        assert!(NoiseLaw::parse("gaussian:0").is_err());
    }
}
