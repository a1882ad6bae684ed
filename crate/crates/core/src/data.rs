//! Analysis datasets: outcome, binary exposure and confounder columns.

use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    y: Vec<f64>,
    a: Vec<bool>,
    /// Column-major confounders: `columns[j][i]` is confounder j of individual i.
    columns: Vec<Vec<f64>>,
    names: Vec<String>,
}

/// One individual's record.
#[derive(Debug, Clone, Copy)]
pub struct Record<'a> {
    pub y: f64,
    pub a: bool,
    ds: &'a Dataset,
    i: usize,
}

impl Record<'_> {
    pub fn confounder(&self, j: usize) -> f64 {
        self.ds.columns[j][self.i]
    }
}

impl Dataset {
    pub fn new(y: Vec<f64>, a: Vec<bool>, columns: Vec<Vec<f64>>, names: Vec<String>) -> Result<Self> {
        if y.len() != a.len() {
            return Err(Error::Dataset(format!(
                "{} outcomes but {} exposure values",
                y.len(),
                a.len()
            )));
        }
        if columns.len() != names.len() {
            return Err(Error::Dataset(format!(
                "{} confounder columns but {} names",
                columns.len(),
                names.len()
            )));
        }
        if let Some((name, col)) = names.iter().zip(&columns).find(|(_, c)| c.len() != y.len()) {
            return Err(Error::Dataset(format!(
                "confounder `{name}` has {} values, expected {}",
                col.len(),
                y.len()
            )));
        }
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(Error::Dataset(format!("duplicate confounder name `{dup}`")));
        }
        if y.iter().chain(columns.iter().flatten()).any(|v| !v.is_finite()) {
            return Err(Error::Dataset("non-finite value".into()));
        }
        Ok(Self { y, a, columns, names })
    }

    /// A dataset with no individuals and no confounders.
    pub fn empty() -> Self {
        Self {
            y: vec![],
            a: vec![],
            columns: vec![],
            names: vec![],
        }
    }

    /// Default confounder labels `l_1..l_p`.
    pub fn default_names(p: usize) -> Vec<String> {
        (1..=p).map(|j| format!("l_{j}")).collect()
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn y(&self) -> &[f64] {
        &self.y
    }

    pub fn a(&self) -> &[bool] {
        &self.a
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn n_confounders(&self) -> usize {
        self.columns.len()
    }

    pub fn record(&self, i: usize) -> Record<'_> {
        Record {
            y: self.y[i],
            a: self.a[i],
            ds: self,
            i,
        }
    }

    pub fn column_index(&self, name: &str) -> Result<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::Dataset(format!("no confounder named `{name}`")))
    }

    pub fn column(&self, name: &str) -> Result<&[f64]> {
        Ok(&self.columns[self.column_index(name)?])
    }

    pub fn n_exposed(&self) -> usize {
        self.a.iter().filter(|a| **a).count()
    }

    /// Fails unless both exposure arms contain at least one individual.
    pub fn check_positivity(&self) -> Result<()> {
        let n1 = self.n_exposed();
        if n1 == 0 {
            return Err(Error::Dataset("no exposed individuals".into()));
        }
        if n1 == self.len() {
            return Err(Error::Dataset("no unexposed individuals".into()));
        }
        Ok(())
    }

    /// Keeps only the named confounder columns, in the given order.
    pub fn select(&self, names: &[String]) -> Result<Dataset> {
        let cols = names
            .iter()
            .map(|n| self.column(n).map(<[f64]>::to_vec))
            .collect::<Result<Vec<_>>>()?;
        Dataset::new(self.y.clone(), self.a.clone(), cols, names.to_vec())
    }

    /// Row subset (used for strata).
    pub fn subset(&self, rows: &[usize]) -> Dataset {
        Dataset {
            y: rows.iter().map(|&i| self.y[i]).collect(),
            a: rows.iter().map(|&i| self.a[i]).collect(),
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&i| c[i]).collect())
                .collect(),
            names: self.names.clone(),
        }
    }

    pub fn with_outcome(&self, y: Vec<f64>) -> Result<Dataset> {
        Dataset::new(y, self.a.clone(), self.columns.clone(), self.names.clone())
    }

    /// Writes the `y,a,<confounders>` CSV.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut w = csv::Writer::from_path(path).map_err(|e| Error::parse(path, e))?;
        let mut header = vec!["y".to_string(), "a".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(|e| Error::parse(path, e))?;
        let mut row = Vec::with_capacity(header.len());
        for i in 0..self.len() {
            row.clear();
            row.push(self.y[i].to_string());
            row.push(if self.a[i] { "1".into() } else { "0".into() });
            row.extend(self.columns.iter().map(|c| c[i].to_string()));
            w.write_record(&row).map_err(|e| Error::parse(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Dataset> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::io(
                path,
                std::io::Error::new(std::io::ErrorKind::NotFound, "file not found"),
            ));
        }
        let mut r = csv::Reader::from_path(path).map_err(|e| Error::parse(path, e))?;
        let header: Vec<String> = r
            .headers()
            .map_err(|e| Error::parse(path, e))?
            .iter()
            .map(str::to_string)
            .collect();
        if header.len() < 2 || header[0] != "y" || header[1] != "a" {
            return Err(Error::parse(path, "header must start with `y,a`"));
        }
        let names = header[2..].to_vec();
        let (mut y, mut a) = (Vec::new(), Vec::new());
        let mut cols = vec![Vec::new(); names.len()];
        for (line, rec) in r.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(path, e))?;
            let field = |k: usize| -> Result<f64> {
                rec.get(k)
                    .ok_or_else(|| Error::parse(path, format!("line {}: missing column {}", line + 2, header[k])))?
                    .trim()
                    .parse::<f64>()
                    .map_err(|e| Error::parse(path, format!("line {}, column `{}`: {e}", line + 2, header[k])))
            };
            y.push(field(0)?);
            a.push(match field(1)? {
                v if v == 0.0 => false,
                v if v == 1.0 => true,
                v => return Err(Error::parse(path, format!("line {}: exposure must be 0 or 1, got {v}", line + 2))),
            });
            for (j, col) in cols.iter_mut().enumerate() {
                col.push(field(j + 2)?);
            }
        }
        Dataset::new(y, a, cols, names).map_err(|e| Error::parse(path, e))
    }
}
