//! Finite datasets of `(a, x, y)` rows and their CSV form.
//!
//! CSV files need a header row. The protected and target columns are named
//! by the caller; every other column is a feature. A column holding any cell
//! that does not parse as a number is categorical: its distinct values are
//! sorted lexicographically and replaced by their dense index, and the
//! mapping is kept in the sample's codebook.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{Read, Write};

use crate::error::{Error, Result};

/// A dataset with one protected attribute, a feature vector, a target, and
/// an optional prediction column.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub protected_name: String,
    pub target_name: String,
    pub feature_names: Vec<String>,
    pub a: Vec<f64>,
    /// Row-major features, `x_dim` values per row.
    pub x: Vec<f64>,
    pub x_dim: usize,
    pub y: Vec<f64>,
    pub yhat: Option<Vec<f64>>,
    pub yhat_name: String,
    /// Category labels for categorical columns, indexed by code.
    pub codebook: BTreeMap<String, Vec<String>>,
}

impl Sample {
    /// Builds a sample with default column names `a`, `x0..`, `y`.
    pub fn from_columns(a: Vec<f64>, x_rows: Vec<Vec<f64>>, y: Vec<f64>) -> Self {
        let x_dim = x_rows.first().map_or(0, Vec::len);
        Self {
            protected_name: "a".into(),
            target_name: "y".into(),
            feature_names: (0..x_dim).map(|j| format!("x{j}")).collect(),
            a,
            x: x_rows.into_iter().flatten().collect(),
            x_dim,
            y,
            yhat: None,
            yhat_name: "yhat".into(),
            codebook: BTreeMap::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.a.len()
    }

    pub fn x_row(&self, i: usize) -> &[f64] {
        &self.x[i * self.x_dim..(i + 1) * self.x_dim]
    }

    /// Checks the invariants: at least one row, consistent column lengths.
    pub fn validate(&self) -> Result<()> {
        let n = self.a.len();
        if n == 0 {
            return Err(Error::Argument("sample has no rows".into()));
        }
        if self.y.len() != n || self.x.len() != n * self.x_dim || self.feature_names.len() != self.x_dim {
            return Err(Error::Dimension("sample columns have inconsistent lengths".into()));
        }
        if let Some(p) = &self.yhat {
            if p.len() != n {
                return Err(Error::Dimension("prediction column has wrong length".into()));
            }
        }
        Ok(())
    }

    /// Moves the named feature column into the prediction column.
    pub fn with_prediction_column(mut self, name: &str) -> Result<Self> {
        let j = self
            .feature_names
            .iter()
            .position(|f| f == name)
            .ok_or_else(|| Error::Argument(format!("no column named {name:?}")))?;
        let n = self.n();
        let d = self.x_dim;
        let pred: Vec<f64> = (0..n).map(|i| self.x[i * d + j]).collect();
        self.x = (0..n)
            .flat_map(|i| (0..d).filter(move |&k| k != j).map(move |k| (i, k)))
            .map(|(i, k)| self.x[i * d + k])
            .collect();
        self.x_dim -= 1;
        self.feature_names.remove(j);
        self.yhat = Some(pred);
        self.yhat_name = name.to_string();
        Ok(self)
    }

    /// Rows `idx`, in that order.
    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            a: idx.iter().map(|&i| self.a[i]).collect(),
            x: idx.iter().flat_map(|&i| self.x_row(i).iter().copied()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            yhat: self.yhat.as_ref().map(|p| idx.iter().map(|&i| p[i]).collect()),
            ..self.clone_header()
        }
    }

    /// Splits into the first `n_first` rows and the rest.
    pub fn split_at(&self, n_first: usize) -> (Self, Self) {
        let n_first = n_first.min(self.n());
        let head: Vec<usize> = (0..n_first).collect();
        let tail: Vec<usize> = (n_first..self.n()).collect();
        (self.subset(&head), self.subset(&tail))
    }

    fn clone_header(&self) -> Self {
        Self {
            protected_name: self.protected_name.clone(),
            target_name: self.target_name.clone(),
            feature_names: self.feature_names.clone(),
            a: Vec::new(),
            x: Vec::new(),
            x_dim: self.x_dim,
            y: Vec::new(),
            yhat: None,
            yhat_name: self.yhat_name.clone(),
            codebook: self.codebook.clone(),
        }
    }

    fn render(&self, column: &str, v: f64) -> String {
        match self.codebook.get(column) {
            Some(labels) => labels[v as usize].clone(),
            None => format!("{v}"),
        }
    }

    /// Writes the sample as CSV: protected, features, target, then the
    /// prediction column if present. Categorical codes are written back as
    /// their labels, so [`load_csv`] reproduces the sample exactly.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let mut header = vec![self.protected_name.clone()];
        header.extend(self.feature_names.iter().cloned());
        header.push(self.target_name.clone());
        if self.yhat.is_some() {
            header.push(self.yhat_name.clone());
        }
        out.write_record(&header).map_err(csv_err)?;
        for i in 0..self.n() {
            let mut rec = vec![self.render(&self.protected_name, self.a[i])];
            for (j, name) in self.feature_names.iter().enumerate() {
                rec.push(self.render(name, self.x_row(i)[j]));
            }
            rec.push(self.render(&self.target_name, self.y[i]));
            if let Some(p) = &self.yhat {
                rec.push(self.render(&self.yhat_name, p[i]));
            }
            out.write_record(&rec).map_err(csv_err)?;
        }
        out.flush()?;
        Ok(())
    }
}

fn csv_err(e: csv::Error) -> Error {
    let row = e.position().map_or(0, |p| p.line() as usize);
    Error::Ingestion { row, msg: e.to_string() }
}

/// Reads a CSV with a header row; `protected` and `target` name the
/// protected and target columns, the remaining columns become features.
pub fn load_csv<R: Read>(reader: R, protected: &str, target: &str) -> Result<Sample> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header: Vec<String> = rdr.headers().map_err(csv_err)?.iter().map(str::to_string).collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::Ingestion { row: 1, msg: format!("missing column {name:?}") })
    };
    let a_col = find(protected)?;
    let y_col = find(target)?;

    let mut cells: Vec<Vec<String>> = vec![Vec::new(); header.len()];
    for (i, rec) in rdr.records().enumerate() {
        // header is line 1
        let row = i + 2;
        let rec = rec.map_err(csv_err)?;
        if rec.len() != header.len() {
            return Err(Error::Ingestion { row, msg: format!("expected {} cells, found {}", header.len(), rec.len()) });
        }
        for (j, cell) in rec.iter().enumerate() {
            if cell.is_empty() {
                return Err(Error::Ingestion { row, msg: format!("empty cell in column {:?}", header[j]) });
            }
            cells[j].push(cell.to_string());
        }
    }
    let n = cells.first().map_or(0, Vec::len);
    if n == 0 {
        return Err(Error::Ingestion { row: 2, msg: "no data rows".into() });
    }

    let mut codebook = BTreeMap::new();
    let mut columns: Vec<Vec<f64>> = Vec::with_capacity(header.len());
    for (j, col) in cells.iter().enumerate() {
        let parsed: Option<Vec<f64>> = col.iter().map(|c| c.parse::<f64>().ok()).collect();
        match parsed {
            Some(v) => {
                if let Some(row) = v.iter().position(|x| !x.is_finite()) {
                    return Err(Error::Ingestion {
                        row: row + 2,
                        msg: format!("non-finite value in column {:?}", header[j]),
                    });
                }
                columns.push(v);
            }
            None => {
                let labels: Vec<String> = col.iter().cloned().collect::<BTreeSet<_>>().into_iter().collect();
                let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(k, l)| (l.as_str(), k)).collect();
                columns.push(col.iter().map(|c| index[c.as_str()] as f64).collect());
                codebook.insert(header[j].clone(), labels);
            }
        }
    }

    let feature_cols: Vec<usize> = (0..header.len()).filter(|&j| j != a_col && j != y_col).collect();
    let x = (0..n).flat_map(|i| feature_cols.iter().map(move |&j| (i, j))).map(|(i, j)| columns[j][i]).collect();
    Ok(Sample {
        protected_name: protected.to_string(),
        target_name: target.to_string(),
        feature_names: feature_cols.iter().map(|&j| header[j].clone()).collect(),
        a: columns[a_col].clone(),
        x,
        x_dim: feature_cols.len(),
        y: columns[y_col].clone(),
        yhat: None,
        yhat_name: "yhat".into(),
        codebook,
    })
}
