//! Observed data `(X, W, Yobs)`, synthetic ground truth, and their CSV forms.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Arm, Error, Result};
use crate::matrix::Matrix;

/// Observed data: features, binary treatment, observed outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: Matrix,
    treatment: Vec<bool>,
    outcome: Vec<f64>,
}

impl Dataset {
    pub fn new(features: Matrix, treatment: Vec<bool>, outcome: Vec<f64>) -> Result<Self> {
        let n = features.rows();
        if treatment.len() != n || outcome.len() != n {
            return Err(Error::InvalidDimension(format!(
                "features have {n} rows, treatment {}, outcome {}",
                treatment.len(),
                outcome.len()
            )));
        }
        if features.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("features must be finite".into()));
        }
        Ok(Self {
            features,
            treatment,
            outcome,
        })
    }

    pub fn len(&self) -> usize {
        self.outcome.len()
    }

    pub fn is_empty(&self) -> bool {
        self.outcome.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.cols()
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn treatment(&self) -> &[bool] {
        &self.treatment
    }

    pub fn outcome(&self) -> &[f64] {
        &self.outcome
    }

    /// Treatment as 0.0 / 1.0.
    pub fn treatment_f64(&self) -> Vec<f64> {
        self.treatment.iter().map(|&w| f64::from(u8::from(w))).collect()
    }

    pub fn arm_indices(&self, arm: Arm) -> Vec<usize> {
        let want = arm == Arm::Treated;
        (0..self.len()).filter(|&i| self.treatment[i] == want).collect()
    }

    pub fn n_treated(&self) -> usize {
        self.treatment.iter().filter(|&&w| w).count()
    }

    pub fn n_control(&self) -> usize {
        self.len() - self.n_treated()
    }

    /// Features and outcomes of one arm.
    pub fn arm(&self, arm: Arm) -> (Matrix, Vec<f64>) {
        let idx = self.arm_indices(arm);
        let y = idx.iter().map(|&i| self.outcome[i]).collect();
        (self.features.select_rows(&idx), y)
    }

    /// Rows in the given order; indices may repeat (bootstrap resamples).
    pub fn select(&self, idx: &[usize]) -> Self {
        Self {
            features: self.features.select_rows(idx),
            treatment: idx.iter().map(|&i| self.treatment[i]).collect(),
            outcome: idx.iter().map(|&i| self.outcome[i]).collect(),
        }
    }

    /// FNV-1a over the exact bit patterns of every field.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut feed = |bytes: &[u8]| {
            for &b in bytes {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for v in self.features.as_slice() {
            feed(&v.to_bits().to_le_bytes());
        }
        for &w in &self.treatment {
            feed(&[u8::from(w)]);
        }
        for v in &self.outcome {
            feed(&v.to_bits().to_le_bytes());
        }
        h
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let mut header: Vec<String> = (1..=self.dim()).map(|j| format!("x{j}")).collect();
        header.push("w".into());
        header.push("y".into());
        writeln!(out, "{}", header.join(","))?;
        let mut line = String::new();
        for i in 0..self.len() {
            line.clear();
            for &v in self.features.row(i) {
                push_float(&mut line, v);
                line.push(',');
            }
            line.push(if self.treatment[i] { '1' } else { '0' });
            line.push(',');
            push_float(&mut line, self.outcome[i]);
            writeln!(out, "{line}")?;
        }
        Ok(())
    }

    /// Reads the `x1,...,xd,w,y` schema. Lines starting with `#` are skipped.
    /// Errors carry the 1-based physical line number.
    pub fn read_csv<R: BufRead>(input: R) -> Result<Self> {
        let mut header: Option<usize> = None;
        let mut features = Matrix::zeros(0, 0);
        let mut treatment = Vec::new();
        let mut outcome = Vec::new();
        for (lineno, line) in input.lines().enumerate() {
            let lineno = lineno + 1;
            let line = line?;
            let trimmed = line.trim();
            if trimmed.is_empty() || trimmed.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = trimmed.split(',').map(str::trim).collect();
            let Some(ncols) = header else {
                let d = fields.len().checked_sub(2).filter(|&d| d >= 1).ok_or_else(|| {
                    Error::Parse {
                        line: lineno,
                        message: "header must be x1,...,xd,w,y".into(),
                    }
                })?;
                let expected_ok = fields[..d]
                    .iter()
                    .enumerate()
                    .all(|(j, f)| *f == format!("x{}", j + 1))
                    && fields[d] == "w"
                    && fields[d + 1] == "y";
                if !expected_ok {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("unexpected header `{trimmed}`; expected x1,...,xd,w,y"),
                    });
                }
                header = Some(fields.len());
                features = Matrix::zeros(0, d);
                continue;
            };
            if fields.len() != ncols {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected {ncols} fields, found {}", fields.len()),
                });
            }
            let parse = |s: &str, what: &str| -> Result<f64> {
                let v: f64 = s.parse().map_err(|_| Error::Parse {
                    line: lineno,
                    message: format!("cannot parse {what} `{s}` as a number"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("{what} `{s}` is not finite"),
                    });
                }
                Ok(v)
            };
            let d = ncols - 2;
            let mut row = Vec::with_capacity(d);
            for (j, f) in fields[..d].iter().enumerate() {
                row.push(parse(f, &format!("x{}", j + 1))?);
            }
            let w = match fields[d] {
                "0" | "0.0" => false,
                "1" | "1.0" => true,
                other => {
                    return Err(Error::Parse {
                        line: lineno,
                        message: format!("treatment must be 0 or 1, found `{other}`"),
                    })
                }
            };
            let y = parse(fields[d + 1], "y")?;
            features.push_row(&row)?;
            treatment.push(w);
            outcome.push(y);
        }
        if header.is_none() {
            return Err(Error::Parse {
                line: 0,
                message: "empty input".into(),
            });
        }
        Dataset::new(features, treatment, outcome)
    }
}

/// Synthetic-only ground truth aligned row by row with a [`Dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub mu0: Vec<f64>,
    pub mu1: Vec<f64>,
    pub tau: Vec<f64>,
    pub propensity: Vec<f64>,
    pub y0: Vec<f64>,
    pub y1: Vec<f64>,
    pub ite: Vec<f64>,
}

impl GroundTruth {
    pub fn len(&self) -> usize {
        self.tau.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tau.is_empty()
    }

    pub fn select(&self, idx: &[usize]) -> Self {
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            mu0: pick(&self.mu0),
            mu1: pick(&self.mu1),
            tau: pick(&self.tau),
            propensity: pick(&self.propensity),
            y0: pick(&self.y0),
            y1: pick(&self.y1),
            ite: pick(&self.ite),
        }
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "mu0,mu1,tau,e,y0,y1,ite")?;
        let mut line = String::new();
        for i in 0..self.len() {
            line.clear();
            for (k, v) in [
                self.mu0[i],
                self.mu1[i],
                self.tau[i],
                self.propensity[i],
                self.y0[i],
                self.y1[i],
                self.ite[i],
            ]
            .into_iter()
            .enumerate()
            {
                if k > 0 {
                    line.push(',');
                }
                push_float(&mut line, v);
            }
            writeln!(out, "{line}")?;
        }
        Ok(())
    }
}

/// Quotes fields that contain commas.
pub fn csv_field(s: &str) -> String {
    if s.contains(',') || s.contains('"') {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

/// Decimal with 17 significant digits; round-trips every f64.
pub fn format_float(v: f64) -> String {
    let mut s = String::new();
    push_float(&mut s, v);
    s
}

fn push_float(buf: &mut String, v: f64) {
    let _ = write!(buf, "{v:.16e}");
}
