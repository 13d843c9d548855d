//! Machine-readable verification reports.
//!
//! Floats are written with 17 significant digits. Non-finite values are
//! written as `null`.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::ser::{SerializeSeq, Serializer};
use serde::Serialize;
use serde_json::value::RawValue;

pub const SCHEMA_VERSION: u32 = 1;

pub fn real<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
    if v.is_finite() {
        let raw = RawValue::from_string(format!("{v:.16e}")).map_err(serde::ser::Error::custom)?;
        raw.serialize(s)
    } else {
        s.serialize_none()
    }
}

pub fn real_vec<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(v.len()))?;
    for x in v {
        seq.serialize_element(&Real(*x))?;
    }
    seq.end()
}

pub fn real_opt<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => real(x, s),
        None => s.serialize_none(),
    }
}

pub fn real_opt_vec<S: Serializer>(v: &Option<Vec<f64>>, s: S) -> Result<S::Ok, S::Error> {
    match v {
        Some(x) => real_vec(x, s),
        None => s.serialize_none(),
    }
}

pub fn real_mat<S: Serializer>(m: &[Vec<f64>], s: S) -> Result<S::Ok, S::Error> {
    let mut seq = s.serialize_seq(Some(m.len()))?;
    for row in m {
        seq.serialize_element(&RealRow(row))?;
    }
    seq.end()
}

/// A float serialized with [`real`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        real(&self.0, s)
    }
}

struct RealRow<'a>(&'a [f64]);

impl Serialize for RealRow<'_> {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        real_vec(self.0, s)
    }
}

pub fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// One named residual compared against its tolerance.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    #[serde(serialize_with = "real")]
    pub residual: f64,
    #[serde(serialize_with = "real")]
    pub tolerance: f64,
    pub pass: bool,
    pub samples_used: usize,
    #[serde(serialize_with = "real_opt_vec")]
    pub worst_sample_point: Option<Vec<f64>>,
}

impl Check {
    pub fn new(name: impl Into<String>, residual: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            residual,
            tolerance,
            pass: residual <= tolerance,
            samples_used: 1,
            worst_sample_point: None,
        }
    }

    pub fn at(mut self, point: &DVector<f64>) -> Self {
        self.worst_sample_point = Some(point.iter().copied().collect());
        self
    }

    /// Check that passes iff `flag` holds; residual 0 or 1.
    pub fn flag(name: impl Into<String>, flag: bool) -> Self {
        Self::new(name, if flag { 0.0 } else { 1.0 }, 0.5)
    }
}

fn worse(candidate: f64, current: f64) -> bool {
    candidate.is_nan() && !current.is_nan() || candidate > current
}

/// Accumulates per-sample residuals into one [`Check`] per name, keeping the
/// worst sample. Names keep their first-seen order.
#[derive(Debug, Clone, Default)]
pub struct Checks {
    items: Vec<Check>,
    index: BTreeMap<String, usize>,
}

impl Checks {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(&mut self, name: &str, residual: f64, tolerance: f64, point: Option<&DVector<f64>>) {
        let point_vec = point.map(|p| p.iter().copied().collect::<Vec<f64>>());
        match self.index.get(name) {
            Some(&i) => {
                let c = &mut self.items[i];
                c.samples_used += 1;
                if worse(residual, c.residual) {
                    c.residual = residual;
                    c.worst_sample_point = point_vec;
                }
                c.tolerance = c.tolerance.min(tolerance);
                c.pass = c.residual <= c.tolerance;
            }
            None => {
                let mut c = Check::new(name, residual, tolerance);
                c.worst_sample_point = point_vec;
                self.index.insert(name.to_string(), self.items.len());
                self.items.push(c);
            }
        }
    }

    pub fn push(&mut self, check: Check) {
        match self.index.get(&check.name) {
            Some(&i) => {
                let c = &mut self.items[i];
                c.samples_used += check.samples_used;
                if worse(check.residual, c.residual) {
                    c.residual = check.residual;
                    c.worst_sample_point = check.worst_sample_point;
                }
                c.tolerance = c.tolerance.min(check.tolerance);
                c.pass = c.residual <= c.tolerance;
            }
            None => {
                self.index.insert(check.name.clone(), self.items.len());
                self.items.push(check);
            }
        }
    }

    pub fn extend(&mut self, other: Checks) {
        for c in other.items {
            self.push(c);
        }
    }

    pub fn get(&self, name: &str) -> Option<&Check> {
        self.index.get(name).map(|&i| &self.items[i])
    }

    pub fn all_pass(&self) -> bool {
        self.items.iter().all(|c| c.pass)
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Check> {
        self.items.iter()
    }

    pub fn into_vec(self) -> Vec<Check> {
        self.items
    }
}

/// A closed form that disagrees with the value computed from its definition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Discrepancy {
    pub name: String,
    pub note: String,
    #[serde(serialize_with = "real_opt")]
    pub max_abs_diff: Option<f64>,
    #[serde(serialize_with = "real_opt_vec")]
    pub sample_point: Option<Vec<f64>>,
    #[serde(serialize_with = "real_mat")]
    pub computed: Vec<Vec<f64>>,
    #[serde(serialize_with = "real_mat")]
    pub printed: Vec<Vec<f64>>,
}

impl Discrepancy {
    pub fn note(name: impl Into<String>, note: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            note: note.into(),
            max_abs_diff: None,
            sample_point: None,
            computed: Vec::new(),
            printed: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SuiteReport {
    pub name: String,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn new(name: impl Into<String>, checks: Checks) -> Self {
        let checks = checks.into_vec();
        Self {
            name: name.into(),
            pass: checks.iter().all(|c| c.pass),
            checks,
        }
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}
