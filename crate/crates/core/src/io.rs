//! Structured-text (JSON) schemas for behaviors, realizations and reports.
//!
//! A behavior file looks like
//!
//! ```json
//! {
//!   "card": {"alice_inputs": 2, "bob_inputs": 3, "alice_outputs": 2, "bob_outputs": 2},
//!   "table": [ ... Pr(ab|xy) at index ((a*|B| + b)*|X| + x)*|Y| + y ... ],
//!   "pe_inputs": [2, 2],
//!   "key": [0, 2]
//! }
//! ```
//!
//! `pe_inputs` are the numbers of parameter-estimation settings (the first
//! settings of each party); `key` names the key-generation settings.
//!
//! A run configuration looks like
//!
//! ```json
//! {
//!   "scenario": "werner",
//!   "grid": [0.0, 0.02, 0.04],
//!   "constraints": "full",
//!   "pinching": "one",
//!   "level": null,
//!   "lambda_budget": 200,
//!   "tol": 1e-8,
//!   "seed": 1,
//!   "onesided": false
//! }
//! ```
//!
//! `scenario` is one of `werner` (grid over the noise q), `efficiency` (grid
//! over the detection efficiency η) or `six-state` (grid over the QBER).
//! `constraints` is `full`, `chsh` or `tilted:α`; `level` is `[alice_depth,
//! bob_depth]` or null for the smallest level admitting K.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::linalg::CMat;

#[derive(Serialize, Deserialize)]
struct ComplexMatrix {
    re: Vec<Vec<f64>>,
    im: Vec<Vec<f64>>,
}

/// Serde adapter storing a complex matrix as separate real and imaginary row lists.
pub mod cmat {
    use super::*;
    use num_complex::Complex64;

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> std::result::Result<S::Ok, S::Error> {
        let rows = |f: fn(&Complex64) -> f64| (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| f(&m[(i, j)])).collect()).collect();
        ComplexMatrix { re: rows(|z| z.re), im: rows(|z| z.im) }.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<CMat, D::Error> {
        let cm = ComplexMatrix::deserialize(d)?;
        let n = cm.re.len();
        let m = cm.re.first().map_or(0, |r| r.len());
        if cm.im.len() != n || cm.re.iter().chain(&cm.im).any(|r| r.len() != m) {
            return Err(serde::de::Error::custom("ragged complex matrix"));
        }
        Ok(CMat::from_fn(n, m, |i, j| Complex64::new(cm.re[i][j], cm.im[i][j])))
    }
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    serde_json::to_string_pretty(value).map_err(|e| Error::Parse(e.to_string()))
}

pub fn from_json<T: DeserializeOwned>(text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    from_json(&text)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, to_json(value)? + "\n").map_err(|e| Error::Parse(format!("{}: {e}", path.display())))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    Werner,
    Efficiency,
    SixState,
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "werner" => Ok(Self::Werner),
            "efficiency" | "eta" => Ok(Self::Efficiency),
            "six-state" | "sixstate" => Ok(Self::SixState),
            _ => Err(Error::Parse(format!("unknown scenario '{s}' (werner, efficiency, six-state)"))),
        }
    }
}

/// Constraint family requested on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ConstraintChoice {
    Full,
    Chsh,
    Tilted(f64),
}

impl FromStr for ConstraintChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Self::Full),
            "chsh" => Ok(Self::Chsh),
            _ => match s.strip_prefix("tilted:") {
                Some(a) => a
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .map(Self::Tilted)
                    .ok_or_else(|| Error::Parse(format!("bad tilt '{a}'"))),
                None => Err(Error::Parse(format!("unknown constraints '{s}' (full, chsh, tilted:α)"))),
            },
        }
    }
}

impl fmt::Display for ConstraintChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Full => write!(f, "full"),
            Self::Chsh => write!(f, "chsh"),
            Self::Tilted(a) => write!(f, "tilted:{a}"),
        }
    }
}

impl TryFrom<String> for ConstraintChoice {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ConstraintChoice> for String {
    fn from(c: ConstraintChoice) -> Self {
        c.to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PinchingMode {
    /// `H(A0|E)`.
    One,
    /// `H(A0B0|E)`.
    Two,
}

impl FromStr for PinchingMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one" => Ok(Self::One),
            "two" => Ok(Self::Two),
            _ => Err(Error::Parse(format!("unknown pinching '{s}' (one, two)"))),
        }
    }
}

fn default_budget() -> usize {
    200
}

fn default_tol() -> f64 {
    1e-8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: Scenario,
    pub grid: Vec<f64>,
    pub constraints: ConstraintChoice,
    pub pinching: PinchingMode,
    #[serde(default)]
    pub level: Option<(usize, usize)>,
    #[serde(default = "default_budget")]
    pub lambda_budget: usize,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub onesided: bool,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if self.grid.is_empty() {
            return Err(Error::Domain("grid is empty".into()));
        }
        if self.grid.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("grid has non-finite entries".into()));
        }
        if self.lambda_budget == 0 {
            return Err(Error::Domain("lambda budget must be at least 1".into()));
        }
        if !(self.tol > 0.0 && self.tol < 1.0) {
            return Err(Error::Domain(format!("solver tolerance {} outside (0, 1)", self.tol)));
        }
        if self.onesided && self.scenario != Scenario::SixState {
            return Err(Error::Domain("one-sided runs need the six-state scenario".into()));
        }
        Ok(())
    }
}

/// Parse `a,b,c` or `start:step:stop` (inclusive, to within half a step).
pub fn parse_grid(s: &str) -> Result<Vec<f64>> {
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| Error::Parse(format!("bad number '{t}' in grid")));
    if s.trim().is_empty() {
        return Ok(Vec::new());
    }
    let parts: Vec<&str> = s.split(':').collect();
    if parts.len() == 3 {
        let (a, h, b) = (num(parts[0])?, num(parts[1])?, num(parts[2])?);
        if !(h > 0.0) || b < a {
            return Err(Error::Parse(format!("bad grid range '{s}'")));
        }
        let n = ((b - a) / h + 0.5).floor() as usize;
        return Ok((0..=n).map(|k| a + k as f64 * h).collect());
    }
    s.split(',').map(num).collect()
}

/// Parse `a,b` into per-party depths.
pub fn parse_level(s: &str) -> Result<(usize, usize)> {
    let v: Vec<&str> = s.split(',').collect();
    let p = |t: &str| t.trim().parse::<usize>().map_err(|_| Error::Parse(format!("bad level '{s}'")));
    match v.as_slice() {
        [a] => Ok((p(a)?, p(a)?)),
        [a, b] => Ok((p(a)?, p(b)?)),
        _ => Err(Error::Parse(format!("bad level '{s}'"))),
    }
}

/// One CSV row of a sweep. Column order is part of the output contract.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateRow {
    pub parameter: f64,
    pub chsh: Option<f64>,
    pub bound_bits: Option<f64>,
    pub h_ab_bits: Option<f64>,
    pub dw_rate: Option<f64>,
    pub pg: Option<f64>,
    pub min_entropy_bits: Option<f64>,
    pub briet_bits: Option<f64>,
    pub pironio_bits: Option<f64>,
    /// λ* entries joined by `;`.
    pub lambda: String,
    pub level: String,
    pub evaluations: usize,
    pub iterations: usize,
    pub solve_seconds: f64,
    pub status: String,
}

/// Write rows as CSV with a header.
pub fn write_rows(w: impl std::io::Write, rows: &[RateRow]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| Error::Parse(e.to_string()))?;
    }
    out.flush().map_err(|e| Error::Parse(e.to_string()))
}

pub fn read_rows(r: impl std::io::Read) -> Result<Vec<RateRow>> {
    csv::Reader::from_reader(r).deserialize().map(|row| row.map_err(|e| Error::Parse(e.to_string()))).collect()
}
