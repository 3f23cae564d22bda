//! Spatial datasets, their CSV representation and an optional linear trend.
//!
//! CSV layout: header `x,y,value,latent,split`, optionally followed by
//! covariate columns. `latent` is empty for real data; `split` is one of
//! `train`, `test_interp`, `test_extrap`.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};

use crate::dense::DenseCholesky;
use crate::error::{GpError, Result};
use crate::kernel::Point;

pub const CSV_HEADER: [&str; 5] = ["x", "y", "value", "latent", "split"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    TestInterp,
    TestExtrap,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::TestInterp, Split::TestExtrap];

    pub fn label(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::TestInterp => "test_interp",
            Split::TestExtrap => "test_extrap",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Split {
    type Err = GpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "test_interp" => Ok(Split::TestInterp),
            "test_extrap" => Ok(Split::TestExtrap),
            other => Err(GpError::InvalidParameter(format!("unknown split label {other:?}"))),
        }
    }
}

/// Locations with responses, optional latent truth and covariates, and a
/// split label per point.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub locations: Vec<Point>,
    pub values: Vec<f64>,
    /// Noise-free process values, known only for simulated data.
    pub latent: Option<Vec<f64>>,
    /// One row per point.
    pub covariates: Option<DMatrix<f64>>,
    pub split: Vec<Split>,
}

impl Dataset {
    pub fn validate(&self) -> Result<()> {
        let n = self.locations.len();
        let mismatch = |what: &str, len: usize| {
            Err(GpError::DimensionMismatch(format!("{what} has {len} entries for {n} locations")))
        };
        if self.values.len() != n {
            return mismatch("values", self.values.len());
        }
        if self.split.len() != n {
            return mismatch("split", self.split.len());
        }
        if let Some(l) = &self.latent {
            if l.len() != n {
                return mismatch("latent", l.len());
            }
        }
        if let Some(x) = &self.covariates {
            if x.nrows() != n {
                return mismatch("covariates", x.nrows());
            }
        }
        if self.locations.iter().any(|p| !p[0].is_finite() || !p[1].is_finite()) {
            return Err(GpError::InvalidParameter("non-finite coordinate".into()));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    /// The points carrying `split`, in their original order.
    pub fn select(&self, split: Split) -> Dataset {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.split[i] == split).collect();
        Dataset {
            locations: idx.iter().map(|&i| self.locations[i]).collect(),
            values: idx.iter().map(|&i| self.values[i]).collect(),
            latent: self.latent.as_ref().map(|l| idx.iter().map(|&i| l[i]).collect()),
            covariates: self.covariates.as_ref().map(|x| x.select_rows(idx.iter())),
            split: vec![split; idx.len()],
        }
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
        let header = rdr.headers().map_err(|e| csv_err(1, e))?.clone();
        let cols: Vec<&str> = header.iter().collect();
        if cols.len() < 5 || cols[..5] != CSV_HEADER {
            return Err(GpError::Csv {
                line: 1,
                message: format!("expected header starting with {}", CSV_HEADER.join(",")),
            });
        }
        let n_cov = cols.len() - 5;
        let mut ds = Dataset {
            locations: Vec::new(),
            values: Vec::new(),
            latent: None,
            covariates: None,
            split: Vec::new(),
        };
        let mut latent: Vec<Option<f64>> = Vec::new();
        let mut cov: Vec<f64> = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let line = i as u64 + 2;
            let rec = rec.map_err(|e| csv_err(line, e))?;
            let num = |j: usize| -> Result<f64> {
                rec[j].trim().parse::<f64>().map_err(|e| GpError::Csv {
                    line,
                    message: format!("column {}: {e}", cols[j]),
                })
            };
            ds.locations.push([num(0)?, num(1)?]);
            ds.values.push(num(2)?);
            latent.push(if rec[3].trim().is_empty() { None } else { Some(num(3)?) });
            ds.split.push(rec[4].trim().parse().map_err(|e: GpError| GpError::Csv {
                line,
                message: e.to_string(),
            })?);
            for j in 0..n_cov {
                cov.push(num(5 + j)?);
            }
        }
        if latent.iter().all(Option::is_some) && !latent.is_empty() {
            ds.latent = Some(latent.into_iter().flatten().collect());
        } else if latent.iter().any(Option::is_some) {
            return Err(GpError::Csv { line: 0, message: "latent column is only partially filled".into() });
        }
        if n_cov > 0 {
            ds.covariates = Some(DMatrix::from_row_slice(ds.len(), n_cov, &cov));
        }
        ds.validate()?;
        Ok(ds)
    }

    /// Writes the dataset with 17 significant digits per number.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let n_cov = self.covariates.as_ref().map_or(0, |x| x.ncols());
        let mut header: Vec<String> = CSV_HEADER.iter().map(|s| s.to_string()).collect();
        header.extend((0..n_cov).map(|j| format!("x{}", j + 1)));
        w.write_record(&header).map_err(|e| csv_err(1, e))?;
        for i in 0..self.len() {
            let mut rec = vec![
                fmt17(self.locations[i][0]),
                fmt17(self.locations[i][1]),
                fmt17(self.values[i]),
                self.latent.as_ref().map_or(String::new(), |l| fmt17(l[i])),
                self.split[i].label().to_string(),
            ];
            if let Some(x) = &self.covariates {
                rec.extend((0..n_cov).map(|j| fmt17(x[(i, j)])));
            }
            w.write_record(&rec).map_err(|e| csv_err(i as u64 + 2, e))?;
        }
        w.flush()?;
        Ok(())
    }
}

/// 17 significant digits in scientific notation.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

fn csv_err(line: u64, e: csv::Error) -> GpError {
    GpError::Csv { line, message: e.to_string() }
}

/// Ordinary least-squares trend with an intercept, fitted before the GP so
/// that every approximation works on zero-mean residuals.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearTrend {
    /// Intercept first, then one coefficient per covariate column.
    pub coefficients: Vec<f64>,
}

impl LinearTrend {
    pub fn fit(covariates: &DMatrix<f64>, y: &[f64]) -> Result<Self> {
        if covariates.nrows() != y.len() {
            return Err(GpError::DimensionMismatch("covariate rows differ from responses".into()));
        }
        let design = with_intercept(covariates);
        let xtx = design.tr_mul(&design);
        let xty = design.tr_mul(&DVector::from_column_slice(y));
        let beta = DenseCholesky::new(xtx)?.solve_vec(&xty);
        Ok(Self { coefficients: beta.iter().copied().collect() })
    }

    pub fn predict(&self, covariates: &DMatrix<f64>) -> Result<Vec<f64>> {
        if covariates.ncols() + 1 != self.coefficients.len() {
            return Err(GpError::DimensionMismatch("covariate columns differ from the fitted trend".into()));
        }
        let beta = DVector::from_column_slice(&self.coefficients);
        Ok((with_intercept(covariates) * beta).iter().copied().collect())
    }
}

fn with_intercept(x: &DMatrix<f64>) -> DMatrix<f64> {
    let mut d = DMatrix::from_element(x.nrows(), x.ncols() + 1, 1.0);
    d.view_mut((0, 1), (x.nrows(), x.ncols())).copy_from(x);
    d
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> Dataset {
        Dataset {
            locations: vec![[0.1, 0.2], [0.7, 0.9], [0.3, 0.1]],
            values: vec![1.0 / 3.0, -2.5e-7, 12345.678901234567],
            latent: Some(vec![0.1, 0.2, std::f64::consts::PI]),
            covariates: None,
            split: vec![Split::Train, Split::TestExtrap, Split::TestInterp],
        }
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let ds = sample();
        let mut buf = Vec::new();
        ds.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("x,y,value,latent,split\n"));
        assert!(text.contains("3.3333333333333331e-1"));
        assert_eq!(Dataset::read_csv(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn real_data_has_empty_latent_and_covariates() {
        let text = "x,y,value,latent,split,age,area\n0,0,1.5,,train,3,4\n1,1,2.5,,test_interp,5,7\n";
        let ds = Dataset::read_csv(text.as_bytes()).unwrap();
        assert!(ds.latent.is_none());
        assert_eq!(ds.covariates.as_ref().unwrap()[(1, 1)], 7.0);
        let train = ds.select(Split::Train);
        assert_eq!(train.len(), 1);
        assert_eq!(train.covariates.unwrap()[(0, 0)], 3.0);
    }

    #[test]
    fn csv_errors_carry_line_numbers() {
        let bad = "x,y,value,latent,split\n0,0,1,,train\n0,zz,1,,train\n";
        match Dataset::read_csv(bad.as_bytes()) {
            Err(GpError::Csv { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let bad_split = "x,y,value,latent,split\n0,0,1,,validation\n";
        assert!(Dataset::read_csv(bad_split.as_bytes()).is_err());
        assert!(Dataset::read_csv("a,b\n1,2\n".as_bytes()).is_err());
    }

    #[test]
    fn linear_trend_recovers_coefficients() {
        let x = DMatrix::from_fn(30, 2, |i, j| ((i * (j + 3)) % 7) as f64 + 0.1 * i as f64);
        let y: Vec<f64> = (0..30).map(|i| 2.0 - 0.5 * x[(i, 0)] + 3.0 * x[(i, 1)]).collect();
        let t = LinearTrend::fit(&x, &y).unwrap();
        for (c, e) in t.coefficients.iter().zip([2.0, -0.5, 3.0]) {
            assert!((c - e).abs() < 1e-9);
        }
        let p = t.predict(&x).unwrap();
        assert!((p[7] - y[7]).abs() < 1e-9);
    }
}
