//! Multivariate functional observations and their long-format CSV form.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Observations of one function for one subject.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Curve {
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl Curve {
    pub fn new(grid: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        let c = Self { grid, values };
        c.validate()?;
        Ok(c)
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    fn validate(&self) -> Result<()> {
        if self.grid.len() != self.values.len() {
            return Err(Error::DimensionMismatch(format!(
                "curve has {} grid points but {} values",
                self.grid.len(),
                self.values.len()
            )));
        }
        if self.grid.is_empty() {
            return Err(Error::InvalidConfiguration("curve without observations".into()));
        }
        if let Some(&x) = self.grid.iter().find(|x| !(0.0..=1.0).contains(*x)) {
            return Err(Error::Domain(x));
        }
        if self.grid.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::InvalidConfiguration("curve grid is not sorted".into()));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfiguration("non-finite observation".into()));
        }
        Ok(())
    }
}

/// `n` subjects × `p` functions; curve `(i, j)` is stored at `i * p + j`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FunctionalDataset {
    labels: Vec<String>,
    subjects: Vec<String>,
    curves: Vec<Curve>,
}

impl FunctionalDataset {
    pub fn new(labels: Vec<String>, subjects: Vec<String>, curves: Vec<Curve>) -> Result<Self> {
        if curves.len() != labels.len() * subjects.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} curves for {} subjects x {} functions",
                curves.len(),
                subjects.len(),
                labels.len()
            )));
        }
        for c in &curves {
            c.validate()?;
        }
        Ok(Self {
            labels,
            subjects,
            curves,
        })
    }

    /// A dataset with `p` functions and no subjects.
    pub fn empty(p: usize) -> Self {
        Self {
            labels: default_labels(p),
            subjects: Vec::new(),
            curves: Vec::new(),
        }
    }

    pub fn n(&self) -> usize {
        self.subjects.len()
    }

    pub fn p(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    #[inline]
    pub fn curve(&self, i: usize, j: usize) -> &Curve {
        &self.curves[i * self.p() + j]
    }

    pub fn curves(&self) -> &[Curve] {
        &self.curves
    }

    /// Number of observations of function `j` across all subjects.
    pub fn total_points(&self, j: usize) -> usize {
        (0..self.n()).map(|i| self.curve(i, j).len()).sum()
    }

    /// Largest grid size over all curves.
    pub fn max_grid_len(&self) -> usize {
        self.curves.iter().map(Curve::len).max().unwrap_or(0)
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path)?;
        Self::from_csv_reader(file, &path.display().to_string())
    }

    /// Parses `subject_id,function_id,grid_point,value` rows.
    ///
    /// Subjects and functions are numbered in order of first appearance.
    /// Every subject must observe every function at least once.
    pub fn from_csv_reader<R: Read>(input: R, source: &str) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(input);
        let headers = reader.headers()?.clone();
        let expected = ["subject_id", "function_id", "grid_point", "value"];
        if headers.len() != 4 || headers.iter().zip(expected).any(|(h, e)| h != e) {
            return Err(Error::Parse {
                path: source.to_string(),
                line: 1,
                message: format!("expected header {}", expected.join(",")),
            });
        }

        let mut subject_index: HashMap<String, usize> = HashMap::new();
        let mut function_index: HashMap<String, usize> = HashMap::new();
        let mut subjects = Vec::new();
        let mut labels = Vec::new();
        let mut points: Vec<((usize, usize), f64, f64)> = Vec::new();

        for record in reader.records() {
            let record = record?;
            let line = record.position().map_or(0, |p| p.line());
            let parse_err = |message: String| Error::Parse {
                path: source.to_string(),
                line,
                message,
            };
            if record.len() != 4 {
                return Err(parse_err(format!("expected 4 fields, found {}", record.len())));
            }
            let number = |idx: usize, name: &str| -> Result<f64> {
                let v: f64 = record[idx]
                    .parse()
                    .map_err(|_| parse_err(format!("{name} {:?} is not a number", &record[idx])))?;
                if !v.is_finite() {
                    return Err(parse_err(format!("{name} is not finite")));
                }
                Ok(v)
            };
            let grid = number(2, "grid_point")?;
            let value = number(3, "value")?;
            if !(0.0..=1.0).contains(&grid) {
                return Err(parse_err(format!("grid_point {grid} outside [0, 1]")));
            }
            let i = *subject_index.entry(record[0].to_string()).or_insert_with(|| {
                subjects.push(record[0].to_string());
                subjects.len() - 1
            });
            let j = *function_index.entry(record[1].to_string()).or_insert_with(|| {
                labels.push(record[1].to_string());
                labels.len() - 1
            });
            points.push(((i, j), grid, value));
        }

        let p = labels.len();
        let mut raw: Vec<Vec<(f64, f64)>> = vec![Vec::new(); subjects.len() * p];
        for ((i, j), g, v) in points {
            raw[i * p + j].push((g, v));
        }
        let mut curves = Vec::with_capacity(raw.len());
        for (idx, mut pts) in raw.into_iter().enumerate() {
            if pts.is_empty() {
                return Err(Error::Parse {
                    path: source.to_string(),
                    line: 0,
                    message: format!(
                        "subject {:?} has no observations of function {:?}",
                        subjects[idx / p],
                        labels[idx % p]
                    ),
                });
            }
            pts.sort_by(|a, b| a.0.total_cmp(&b.0));
            let (grid, values) = pts.into_iter().unzip();
            curves.push(Curve { grid, values });
        }
        Self::new(labels, subjects, curves)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["subject_id", "function_id", "grid_point", "value"])?;
        for i in 0..self.n() {
            for j in 0..self.p() {
                let c = self.curve(i, j);
                for (g, v) in c.grid.iter().zip(&c.values) {
                    w.write_record([
                        self.subjects[i].as_str(),
                        self.labels[j].as_str(),
                        &g.to_string(),
                        &v.to_string(),
                    ])?;
                }
            }
        }
        w.flush()?;
        Ok(())
    }
}

pub fn default_labels(p: usize) -> Vec<String> {
    (1..=p).map(|j| format!("X{j}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> FunctionalDataset {
        let curves = vec![
            Curve::new(vec![0.0, 0.5, 1.0], vec![1.0, 2.0, 3.0]).unwrap(),
            Curve::new(vec![0.25], vec![-1.5]).unwrap(),
            Curve::new(vec![0.1, 0.2], vec![0.0, 1e-17]).unwrap(),
            Curve::new(vec![0.3, 0.9], vec![4.0, 5.0]).unwrap(),
        ];
        FunctionalDataset::new(
            vec!["a".into(), "b".into()],
            vec!["s1".into(), "s2".into()],
            curves,
        )
        .unwrap()
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = tiny();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let back = FunctionalDataset::from_csv_reader(&buf[..], "mem").unwrap();
        assert_eq!(back, ds);
    }

    #[test]
    fn rows_may_arrive_in_any_order() {
        let text = "subject_id,function_id,grid_point,value\n\
                    s,f,0.9,2\ns,f,0.1,1\n";
        let ds = FunctionalDataset::from_csv_reader(text.as_bytes(), "mem").unwrap();
        assert_eq!(ds.curve(0, 0).grid, vec![0.1, 0.9]);
    }

    #[test]
    fn malformed_rows_report_their_line() {
        let text = "subject_id,function_id,grid_point,value\n\
                    s,f,0.1,1\ns,f,zero,2\n";
        match FunctionalDataset::from_csv_reader(text.as_bytes(), "d.csv") {
            Err(Error::Parse { line, path, .. }) => {
                assert_eq!(line, 3);
                assert_eq!(path, "d.csv");
            }
            other => panic!("unexpected {other:?}"),
        }
        let text = "subject_id,function_id,grid_point,value\ns,f,1.5,1\n";
        assert!(FunctionalDataset::from_csv_reader(text.as_bytes(), "d.csv").is_err());
    }

    #[test]
    fn header_is_required() {
        let text = "s,f,0.1,1\n";
        assert!(matches!(
            FunctionalDataset::from_csv_reader(text.as_bytes(), "d.csv"),
            Err(Error::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn missing_curve_is_rejected() {
        let text = "subject_id,function_id,grid_point,value\n\
                    s1,f,0.1,1\ns1,g,0.1,1\ns2,f,0.1,1\n";
        assert!(FunctionalDataset::from_csv_reader(text.as_bytes(), "d.csv").is_err());
    }

    #[test]
    fn curve_invariants() {
        assert!(Curve::new(vec![0.1, 0.2], vec![1.0]).is_err());
        assert!(Curve::new(vec![], vec![]).is_err());
        assert!(Curve::new(vec![0.5, 0.1], vec![1.0, 2.0]).is_err());
    }
}
