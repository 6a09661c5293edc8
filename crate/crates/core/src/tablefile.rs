//! Keyed text files for discrete joints and classifiers.
//!
//! Both are TOML documents. Every probability may be written as a number
//! (`0.3`), or as a string holding a fraction or decimal (`"3/10"`,
//! `"0.3"`). When every entry of a table is an integer or a string, the
//! table is also available in exact rational arithmetic.
//!
//! A joint is given either as the full table
//!
//! ```toml
//! # p[a][x][y] = P(A=a, X=x, Y=y)
//! p = [[["1/10", "1/10"], ...], ...]
//! ```
//!
//! or through its conditionals
//!
//! ```toml
//! # p_ay[a][y] = P(A=a, Y=y), p_x_given_ay[a][y][x] = P(X=x | A=a, Y=y)
//! p_ay = [["1/5", "2/5"], ["3/10", "1/10"]]
//! p_x_given_ay = [[["7/10", "3/10"], ["1/5", "4/5"]], ...]
//! ```
//!
//! A classifier is either deterministic, with labels `f[a][x]`, or
//! stochastic, with `p1[a][x] = P(Ŷ=1 | A=a, X=x)`:
//!
//! ```toml
//! kind = "deterministic"
//! f = [[0, 1], [1, 0]]
//! ```

use num_rational::Rational64;
use num_traits::ToPrimitive;
use toml::Value;

use crate::error::{Error, Result};
use crate::probcore::{DeterministicClassifier, DiscreteJoint, StochasticClassifier};

/// One table entry, exact when it was written exactly.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Entry {
    Exact(Rational64),
    Float(f64),
}

impl Entry {
    fn as_f64(self) -> f64 {
        match self {
            Entry::Exact(r) => r.to_f64().unwrap_or(f64::NAN),
            Entry::Float(v) => v,
        }
    }
}

fn parse_decimal(s: &str) -> Option<Rational64> {
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s),
    };
    let (int, frac) = body.split_once('.').unwrap_or((body, ""));
    if int.is_empty() && frac.is_empty() {
        return None;
    }
    if !int.chars().chain(frac.chars()).all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{int}{frac}");
    let num: i64 = digits.parse().ok()?;
    let den = 10i64.checked_pow(u32::try_from(frac.len()).ok()?)?;
    let r = Rational64::new(num, den);
    Some(if neg { -r } else { r })
}

fn parse_exact(s: &str) -> Option<Rational64> {
    let s = s.trim();
    match s.split_once('/') {
        Some((n, d)) => {
            let n: i64 = n.trim().parse().ok()?;
            let d: i64 = d.trim().parse().ok()?;
            (d != 0).then(|| Rational64::new(n, d))
        }
        None => parse_decimal(s),
    }
}

fn entry(v: &Value, what: &str) -> Result<Entry> {
    match v {
        Value::Integer(i) => Ok(Entry::Exact(Rational64::from_integer(*i))),
        Value::Float(f) => Ok(Entry::Float(*f)),
        Value::String(s) => parse_exact(s)
            .map(Entry::Exact)
            .ok_or_else(|| Error::Parse(format!("{what}: cannot read {s:?} as a number or fraction"))),
        other => Err(Error::Parse(format!("{what}: expected a number, got {}", other.type_str()))),
    }
}

/// A nested array of entries with its shape.
struct Table {
    shape: Vec<usize>,
    flat: Vec<Entry>,
}

impl Table {
    fn read(v: &Value, depth: usize, what: &str) -> Result<Self> {
        let mut shape = Vec::new();
        let mut flat = Vec::new();
        Self::walk(v, depth, 0, &mut shape, &mut flat, what)?;
        Ok(Self { shape, flat })
    }

    fn walk(
        v: &Value,
        depth: usize,
        level: usize,
        shape: &mut Vec<usize>,
        flat: &mut Vec<Entry>,
        what: &str,
    ) -> Result<()> {
        if level == depth {
            flat.push(entry(v, what)?);
            return Ok(());
        }
        let arr =
            v.as_array().ok_or_else(|| Error::Parse(format!("{what}: expected a {}-level nested array", depth)))?;
        if shape.len() == level {
            shape.push(arr.len());
        } else if shape[level] != arr.len() {
            return Err(Error::Dimension(format!("{what}: ragged array at depth {level}")));
        }
        if arr.is_empty() {
            return Err(Error::Dimension(format!("{what}: empty array at depth {level}")));
        }
        for item in arr {
            Self::walk(item, depth, level + 1, shape, flat, what)?;
        }
        Ok(())
    }

    fn exact(&self) -> Option<Vec<Rational64>> {
        self.flat
            .iter()
            .map(|e| match e {
                Entry::Exact(r) => Some(*r),
                Entry::Float(_) => None,
            })
            .collect()
    }

    fn floats(&self) -> Vec<f64> {
        self.flat.iter().map(|e| e.as_f64()).collect()
    }
}

/// A joint read from a file: always in floating point, and in exact
/// arithmetic when every entry was written exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct JointFile {
    pub joint: DiscreteJoint<f64>,
    pub exact: Option<DiscreteJoint<Rational64>>,
}

fn document(text: &str) -> Result<toml::Table> {
    text.parse::<toml::Table>().map_err(|e| Error::Parse(e.to_string()))
}

fn nest3<T: Clone>(flat: &[T], d0: usize, d1: usize, d2: usize) -> Vec<Vec<Vec<T>>> {
    (0..d0).map(|i| (0..d1).map(|j| flat[(i * d1 + j) * d2..(i * d1 + j + 1) * d2].to_vec()).collect()).collect()
}

fn nest2<T: Clone>(flat: &[T], d1: usize) -> Vec<Vec<T>> {
    flat.chunks(d1).map(<[T]>::to_vec).collect()
}

pub fn parse_joint(text: &str) -> Result<JointFile> {
    let doc = document(text)?;
    if let Some(p) = doc.get("p") {
        let t = Table::read(p, 3, "p")?;
        let (na, nx, ny) = (t.shape[0], t.shape[1], t.shape[2]);
        let joint = DiscreteJoint::new(na, nx, ny, t.floats())?;
        let exact = t.exact().map(|e| DiscreteJoint::new(na, nx, ny, e)).transpose()?;
        return Ok(JointFile { joint, exact });
    }
    match (doc.get("p_ay"), doc.get("p_x_given_ay")) {
        (Some(pay), Some(pxg)) => {
            let ay = Table::read(pay, 2, "p_ay")?;
            let xg = Table::read(pxg, 3, "p_x_given_ay")?;
            let (na, ny) = (ay.shape[0], ay.shape[1]);
            if xg.shape[0] != na || xg.shape[1] != ny {
                return Err(Error::Dimension(
                    "p_x_given_ay must be indexed [a][y][x] over the same A and Y as p_ay".into(),
                ));
            }
            let nx = xg.shape[2];
            let joint = DiscreteJoint::from_conditionals(&nest2(&ay.floats(), ny), &nest3(&xg.floats(), na, ny, nx))?;
            let exact = match (ay.exact(), xg.exact()) {
                (Some(a), Some(x)) => Some(DiscreteJoint::from_conditionals(&nest2(&a, ny), &nest3(&x, na, ny, nx))?),
                _ => None,
            };
            Ok(JointFile { joint, exact })
        }
        _ => Err(Error::Parse("joint file needs `p`, or both `p_ay` and `p_x_given_ay`".into())),
    }
}

/// Writes a joint as a full `p[a][x][y]` table with exact fractions.
pub fn format_joint_exact(j: &DiscreteJoint<Rational64>) -> String {
    let mut out = String::from("# p[a][x][y] = P(A=a, X=x, Y=y)\np = [\n");
    for a in 0..j.a_levels() {
        let rows: Vec<String> = (0..j.x_levels())
            .map(|x| {
                let cells: Vec<String> = (0..j.y_levels()).map(|y| format!("\"{}\"", j.p(a, x, y))).collect();
                format!("[{}]", cells.join(", "))
            })
            .collect();
        out += &format!("  [{}],\n", rows.join(", "));
    }
    out + "]\n"
}

/// Writes a joint as a full `p[a][x][y]` table of floats.
pub fn format_joint(j: &DiscreteJoint<f64>) -> String {
    let mut out = String::from("# p[a][x][y] = P(A=a, X=x, Y=y)\np = [\n");
    for a in 0..j.a_levels() {
        let rows: Vec<String> = (0..j.x_levels())
            .map(|x| {
                let cells: Vec<String> = (0..j.y_levels()).map(|y| format!("{:?}", j.p(a, x, y))).collect();
                format!("[{}]", cells.join(", "))
            })
            .collect();
        out += &format!("  [{}],\n", rows.join(", "));
    }
    out + "]\n"
}

/// A classifier read from a file.
#[derive(Debug, Clone, PartialEq)]
pub enum ClassifierFile {
    Deterministic(DeterministicClassifier),
    Stochastic { table: StochasticClassifier<f64>, exact: Option<StochasticClassifier<Rational64>> },
}

impl ClassifierFile {
    pub fn arity(&self) -> (usize, usize) {
        match self {
            ClassifierFile::Deterministic(d) => (d.a_levels(), d.x_levels()),
            ClassifierFile::Stochastic { table, .. } => (table.a_levels(), table.x_levels()),
        }
    }

    /// The classifier as a table of `P(Ŷ=1 | a, x)`.
    pub fn stochastic(&self) -> StochasticClassifier<f64> {
        match self {
            ClassifierFile::Deterministic(d) => d.to_stochastic(),
            ClassifierFile::Stochastic { table, .. } => table.clone(),
        }
    }

    pub fn exact(&self) -> Option<StochasticClassifier<Rational64>> {
        match self {
            ClassifierFile::Deterministic(d) => Some(d.to_stochastic()),
            ClassifierFile::Stochastic { exact, .. } => exact.clone(),
        }
    }
}

pub fn parse_classifier(text: &str) -> Result<ClassifierFile> {
    let doc = document(text)?;
    let kind = doc.get("kind").and_then(Value::as_str).unwrap_or(if doc.contains_key("f") {
        "deterministic"
    } else {
        "stochastic"
    });
    match kind {
        "deterministic" => {
            let f = doc.get("f").ok_or_else(|| Error::Parse("deterministic classifier needs `f`".into()))?;
            let t = Table::read(f, 2, "f")?;
            let labels = t
                .flat
                .iter()
                .map(|e| match e {
                    Entry::Exact(r) if *r == Rational64::from_integer(0) => Ok(0),
                    Entry::Exact(r) if *r == Rational64::from_integer(1) => Ok(1),
                    _ => Err(Error::Parse("labels in `f` must be 0 or 1".into())),
                })
                .collect::<Result<Vec<u8>>>()?;
            Ok(ClassifierFile::Deterministic(DeterministicClassifier::new(t.shape[0], t.shape[1], labels)?))
        }
        "stochastic" => {
            let p1 = doc.get("p1").ok_or_else(|| Error::Parse("stochastic classifier needs `p1`".into()))?;
            let t = Table::read(p1, 2, "p1")?;
            let (na, nx) = (t.shape[0], t.shape[1]);
            let table = StochasticClassifier::new(na, nx, t.floats())?;
            let exact = t.exact().map(|e| StochasticClassifier::new(na, nx, e)).transpose()?;
            Ok(ClassifierFile::Stochastic { table, exact })
        }
        other => Err(Error::Parse(format!("unknown classifier kind {other:?}, expected deterministic or stochastic"))),
    }
}

/// Writes a stochastic classifier table.
pub fn format_classifier(c: &StochasticClassifier<f64>) -> String {
    let rows: Vec<String> = (0..c.a_levels())
        .map(|a| {
            let cells: Vec<String> = (0..c.x_levels()).map(|x| format!("{:?}", c.p1(a, x))).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("kind = \"stochastic\"\n# p1[a][x] = P(Yhat=1 | A=a, X=x)\np1 = [{}]\n", rows.join(", "))
}

/// Writes a deterministic classifier table.
pub fn format_deterministic(c: &DeterministicClassifier) -> String {
    let rows: Vec<String> = (0..c.a_levels())
        .map(|a| {
            let cells: Vec<String> = (0..c.x_levels()).map(|x| c.label(a, x).to_string()).collect();
            format!("[{}]", cells.join(", "))
        })
        .collect();
    format!("kind = \"deterministic\"\n# f[a][x]\nf = [{}]\n", rows.join(", "))
}
