//! Run configuration, suite orchestration and the JSON report.

use std::collections::BTreeMap;
use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::Serialize;

use crate::catalog::{self, CatalogEntry};
use crate::connection::{
    common_class, sample_calculus, step_halving, verify_anti_invariant_props, verify_components, verify_connection,
    verify_invariant_props, verify_nabla_t2, verify_nijenhuis,
};
use crate::error::{Error, Result};
use crate::immersion::{DerivativeMode, FRAME_TOL};
use crate::report::{real, rows, Check, Checks, Discrepancy, SuiteReport, SCHEMA_VERSION};
use crate::scalars::power_identity_residual;
use crate::sigma::{classify_pointwise, decompose, structure_identity_residuals, verify_inheritance_chain, PointClass, STRUCTURE_IDENTITY_NAMES};
use crate::slant::{classify_slant, SlantClass, SlantReport};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Structure,
    Slant,
    Connection,
    Inheritance,
}

impl Suite {
    pub const ALL: [Suite; 4] = [Suite::Structure, Suite::Slant, Suite::Connection, Suite::Inheritance];
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "structure" => Ok(Suite::Structure),
            "slant" => Ok(Suite::Slant),
            "connection" => Ok(Suite::Connection),
            "inheritance" => Ok(Suite::Inheritance),
            other => Err(Error::BadParameter(format!("unknown suite `{other}`"))),
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Suite::Structure => "structure",
            Suite::Slant => "slant",
            Suite::Connection => "connection",
            Suite::Inheritance => "inheritance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Tolerances {
    /// Flat entries: every residual is exact up to rounding.
    #[serde(serialize_with = "real")]
    pub linear: f64,
    /// Algebraic identities with analytic derivatives.
    #[serde(serialize_with = "real")]
    pub analytic: f64,
    /// Algebraic identities with difference derivatives.
    #[serde(serialize_with = "real")]
    pub fd: f64,
    /// Identities involving derivatives of frames on curved entries.
    #[serde(serialize_with = "real")]
    pub connection: f64,
    #[serde(serialize_with = "real")]
    pub angle: f64,
    #[serde(serialize_with = "real")]
    pub class: f64,
    #[serde(serialize_with = "real")]
    pub oracle: f64,
    #[serde(serialize_with = "real")]
    pub inheritance: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            linear: 1e-10,
            analytic: 1e-9,
            fd: 1e-5,
            connection: 1e-5,
            angle: 1e-6,
            class: 1e-7,
            oracle: 1e-8,
            inheritance: 1e-8,
        }
    }
}

impl Tolerances {
    fn all(&self) -> [(&'static str, f64); 8] {
        [
            ("linear", self.linear),
            ("analytic", self.analytic),
            ("fd", self.fd),
            ("connection", self.connection),
            ("angle", self.angle),
            ("class", self.class),
            ("oracle", self.oracle),
            ("inheritance", self.inheritance),
        ]
    }

    /// Tolerance for derivative identities: the flat tier needs exact second
    /// derivatives, so difference mode always uses the connection tier.
    pub fn derivative(&self, flat: bool, mode: DerivativeMode) -> f64 {
        if flat && mode == DerivativeMode::Analytic {
            self.linear
        } else {
            self.connection
        }
    }

    /// Tolerance for algebraic identities in `mode`.
    pub fn identity(&self, mode: DerivativeMode) -> f64 {
        match mode {
            DerivativeMode::Analytic => self.analytic,
            DerivativeMode::CentralDifference => self.fd,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub entry: String,
    pub params: Vec<(String, String)>,
    pub samples: usize,
    pub seed: u64,
    pub mode: DerivativeMode,
    pub tolerances: Tolerances,
    /// Suites to run; empty means all.
    pub suites: Vec<Suite>,
    /// Seeded directions per sample in the slant suite, beyond the frame axes.
    pub extra_directions: usize,
    pub out: Option<PathBuf>,
}

impl RunConfig {
    pub fn new(entry: impl Into<String>) -> Self {
        Self {
            entry: entry.into(),
            params: Vec::new(),
            samples: 100,
            seed: 0,
            mode: DerivativeMode::Analytic,
            tolerances: Tolerances::default(),
            suites: Vec::new(),
            extra_directions: 8,
            out: None,
        }
    }

    pub fn param(mut self, key: &str, value: &str) -> Self {
        self.params.push((key.to_string(), value.to_string()));
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.samples < 1 {
            return Err(Error::BadParameter("samples must be at least 1".into()));
        }
        for (name, t) in self.tolerances.all() {
            if !(t > 0.0) || !t.is_finite() {
                return Err(Error::BadParameter(format!("tolerance {name} must be positive, got {t}")));
            }
        }
        Ok(())
    }

    fn selected(&self) -> Vec<Suite> {
        let mut s = if self.suites.is_empty() { Suite::ALL.to_vec() } else { self.suites.clone() };
        s.sort();
        s.dedup();
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metadata {
    pub entry: String,
    pub parameters: BTreeMap<String, String>,
    pub seed: u64,
    pub samples: usize,
    pub mode: DerivativeMode,
    pub suites: Vec<Suite>,
    pub tolerances: Tolerances,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerificationReport {
    pub schema_version: u32,
    pub metadata: Metadata,
    pub pass: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub pointwise_classes: Option<BTreeMap<PointClass, usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub structure_suite: Option<SuiteReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slant: Option<SlantReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub slant_suite: Option<SuiteReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub connection_suite: Option<SuiteReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub inheritance_suite: Option<SuiteReport>,
    pub discrepancies: Vec<Discrepancy>,
}

impl VerificationReport {
    pub fn suites(&self) -> impl Iterator<Item = &SuiteReport> {
        [&self.structure_suite, &self.slant_suite, &self.connection_suite, &self.inheritance_suite]
            .into_iter()
            .flatten()
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.suites().find_map(|s| s.check(name))
    }

    pub fn failures(&self) -> Vec<&Check> {
        self.suites().flat_map(|s| s.checks.iter()).filter(|c| !c.pass).collect()
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    pub fn summary(&self) -> String {
        let mut out = format!(
            "{} {:?} seed={} samples={} mode={:?}\n",
            self.metadata.entry, self.metadata.parameters, self.metadata.seed, self.metadata.samples, self.metadata.mode
        );
        if let Some(slant) = &self.slant {
            out.push_str(&format!("classification: {:?}\n", slant.classification));
        }
        for suite in self.suites() {
            let failed = suite.checks.iter().filter(|c| !c.pass).count();
            out.push_str(&format!(
                "{:<12} {} ({} checks, {} failed)\n",
                suite.name,
                if suite.pass { "PASS" } else { "FAIL" },
                suite.checks.len(),
                failed
            ));
            for c in suite.checks.iter().filter(|c| !c.pass) {
                out.push_str(&format!("  FAIL {} residual {:e} > {:e}\n", c.name, c.residual, c.tolerance));
            }
        }
        for d in &self.discrepancies {
            out.push_str(&format!("discrepancy {}: {}\n", d.name, d.note));
        }
        out.push_str(if self.pass { "overall: PASS\n" } else { "overall: FAIL\n" });
        out
    }
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::UnknownEntry(_) => 2,
        Error::BadParameter(_) | Error::Domain(_) | Error::Precondition(_) => 3,
        Error::Io(_) => 4,
        _ => 1,
    }
}

fn metadata(config: &RunConfig, entry: &CatalogEntry, suites: Vec<Suite>) -> Metadata {
    Metadata {
        entry: entry.name.clone(),
        parameters: entry.params.clone(),
        seed: config.seed,
        samples: config.samples,
        mode: config.mode,
        suites,
        tolerances: config.tolerances,
        version: env!("CARGO_PKG_VERSION").to_string(),
    }
}

pub fn build_entry(config: &RunConfig) -> Result<CatalogEntry> {
    config.validate()?;
    Ok(catalog::build(&config.entry, &config.params)?.with_mode(config.mode))
}

/// Runs the selected suites in fixed order and writes the report when an
/// output path is set.
pub fn run(config: &RunConfig) -> Result<VerificationReport> {
    let entry = build_entry(config)?;
    let suites = config.selected();
    let mut report = VerificationReport {
        schema_version: SCHEMA_VERSION,
        metadata: metadata(config, &entry, suites.clone()),
        pass: true,
        pointwise_classes: None,
        structure_suite: None,
        slant: None,
        slant_suite: None,
        connection_suite: None,
        inheritance_suite: None,
        discrepancies: Vec::new(),
    };
    for suite in suites {
        match suite {
            Suite::Structure => {
                let (checks, classes, disc) = structure_suite(config, &entry)?;
                report.pointwise_classes = Some(classes);
                report.structure_suite = Some(SuiteReport::new("structure", checks));
                report.discrepancies.extend(disc);
            }
            Suite::Slant => {
                let (checks, slant) = slant_suite(config, &entry)?;
                report.slant = Some(slant);
                report.slant_suite = Some(SuiteReport::new("slant", checks));
            }
            Suite::Connection => {
                let (checks, disc) = connection_suite(config, &entry)?;
                report.connection_suite = Some(SuiteReport::new("connection", checks));
                report.discrepancies.extend(disc);
            }
            Suite::Inheritance => {
                if let Some(chain) = &entry.chain {
                    let t = &config.tolerances;
                    let checks = verify_inheritance_chain(
                        &entry.ambient,
                        chain,
                        config.samples,
                        config.seed,
                        t.inheritance,
                        t.identity(config.mode),
                    )?;
                    report.inheritance_suite = Some(SuiteReport::new("inheritance", checks));
                }
            }
        }
    }
    let pass = report.suites().all(|s| s.pass);
    report.pass = pass;
    if let Some(path) = &config.out {
        std::fs::write(path, report.to_json()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(report)
}

fn structure_suite(
    config: &RunConfig,
    entry: &CatalogEntry,
) -> Result<(Checks, BTreeMap<PointClass, usize>, Vec<Discrepancy>)> {
    let t = &config.tolerances;
    let tol = t.identity(config.mode);
    let imm = &entry.immersion;
    let amb = &entry.ambient;
    let mut checks = Checks::new();
    let mut classes = BTreeMap::new();
    checks.record(
        "structure.ambient_power_identity",
        power_identity_residual(amb.matrix(), amb.params(), 12)?,
        t.analytic,
        None,
    );
    for u in imm.sample_points(config.samples, config.seed)? {
        let frame = imm.frame_at(&u)?;
        checks.record("structure.frame_orthonormality", frame.orthonormality_defect(), FRAME_TOL, Some(&u));
        let sigma = decompose(amb, &frame)?;
        for (name, res) in STRUCTURE_IDENTITY_NAMES.iter().zip(structure_identity_residuals(&sigma, amb.params())) {
            checks.record(name, res, tol, Some(&u));
        }
        *classes.entry(classify_pointwise(&sigma, t.class)).or_insert(0) += 1;
    }
    let oracle_tol = match config.mode {
        DerivativeMode::Analytic => t.oracle,
        DerivativeMode::CentralDifference => t.fd,
    };
    let outcome = catalog::verify_oracle(entry, config.samples, config.seed, t.oracle, oracle_tol)?;
    checks.extend(outcome.checks);
    Ok((checks, classes, outcome.discrepancies))
}

fn slant_suite(config: &RunConfig, entry: &CatalogEntry) -> Result<(Checks, SlantReport)> {
    let t = &config.tolerances;
    let imm = &entry.immersion;
    let n = imm.n();
    let report = classify_slant(
        imm,
        &entry.ambient,
        config.samples,
        n + config.extra_directions,
        config.seed,
        t.angle,
    )?;
    let mut checks = Checks::new();
    checks.push(Check::flag(
        "slant.classification",
        entry.expected_class.matches(&report.classification),
    ));
    let tol = if entry.flat && config.mode == DerivativeMode::Analytic {
        t.linear
    } else {
        t.identity(config.mode)
    };
    if let Some(r) = report.quadratic_residual {
        checks.record("slant.t_squared_lambda", r, tol, None);
    }
    if let Some(r) = report.angle_identities_residual {
        checks.record("slant.angle_identities", r, tol, None);
    }
    if let Some(r) = report.eta_xi_residual {
        checks.record("slant.t_squared_eta_xi", r, tol, None);
    }
    let theta = match report.classification {
        SlantClass::Invariant => Some(0.0),
        SlantClass::AntiInvariant => Some(std::f64::consts::FRAC_PI_2),
        SlantClass::ProperSlant { theta } => Some(theta),
        SlantClass::NotSlant => None,
    };
    if let Some(theta) = theta {
        let points = sample_calculus(imm, &entry.ambient, config.samples, config.seed)?;
        let ctol = t.derivative(entry.flat, config.mode);
        checks.extend(verify_nabla_t2(&points, theta, config.seed, ctol, t.angle));
    }
    Ok((checks, report))
}

/// Below this size the step-halving ratio only measures rounding.
const HALVING_FLOOR: f64 = 1e-9;
const HALVING_SAMPLES: usize = 10;

fn connection_suite(config: &RunConfig, entry: &CatalogEntry) -> Result<(Checks, Vec<Discrepancy>)> {
    let t = &config.tolerances;
    let imm = &entry.immersion;
    let amb = &entry.ambient;
    let tol = t.derivative(entry.flat, config.mode);
    let points = sample_calculus(imm, amb, config.samples, config.seed)?;
    let (mut checks, mut disc) = verify_connection(&points, config.seed, tol);
    checks.extend(verify_nijenhuis(&points, config.seed, tol));
    let class = common_class(&points, t.class);
    checks.extend(verify_components(&points, config.seed, tol, class));
    match class {
        Some(PointClass::Invariant) => {
            checks.extend(verify_invariant_props(&points, config.seed, tol, t.class)?);
        }
        Some(PointClass::AntiInvariant) => {
            checks.extend(verify_anti_invariant_props(&points, config.seed, tol, t.class)?);
            disc.push(Discrepancy::note(
                "anti.h_n",
                "printed display omits N_a in the term X(eta_a(Y)); the checked form includes it",
            ));
        }
        _ => {}
    }
    if !entry.flat && config.mode == DerivativeMode::Analytic {
        let (coarse, fine) = step_halving(imm, amb, config.samples.min(HALVING_SAMPLES), config.seed)?;
        if coarse > HALVING_FLOOR {
            checks.push(Check::new("connection.step_halving", fine / coarse, 0.5));
        }
    }
    Ok((checks, disc))
}

/// Induced structure at one sample point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointStructure {
    #[serde(serialize_with = "crate::report::real_vec")]
    pub u: Vec<f64>,
    #[serde(serialize_with = "crate::report::real_vec")]
    pub x: Vec<f64>,
    pub class: PointClass,
    #[serde(serialize_with = "crate::report::real_mat")]
    pub t: Vec<Vec<f64>>,
    #[serde(serialize_with = "crate::report::real_mat")]
    pub eta: Vec<Vec<f64>>,
    #[serde(serialize_with = "crate::report::real_mat")]
    pub xi: Vec<Vec<f64>>,
    #[serde(serialize_with = "crate::report::real_mat")]
    pub a: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalysisReport {
    pub schema_version: u32,
    pub metadata: Metadata,
    pub pointwise_classes: BTreeMap<PointClass, usize>,
    pub points: Vec<PointStructure>,
    pub slant: SlantReport,
}

impl AnalysisReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// Points listed in full in an analysis report.
const LISTED_POINTS: usize = 3;

/// Induced structure and slant classification without the identity suites.
pub fn analyze(config: &RunConfig) -> Result<AnalysisReport> {
    let entry = build_entry(config)?;
    let t = &config.tolerances;
    let imm = &entry.immersion;
    let mut classes = BTreeMap::new();
    let mut points = Vec::new();
    for u in imm.sample_points(config.samples, config.seed)? {
        let frame = imm.frame_at(&u)?;
        let sigma = decompose(&entry.ambient, &frame)?;
        let class = classify_pointwise(&sigma, t.class);
        *classes.entry(class).or_insert(0) += 1;
        if points.len() < LISTED_POINTS {
            points.push(PointStructure {
                u: u.iter().copied().collect(),
                x: frame.x.iter().copied().collect(),
                class,
                t: rows(&sigma.t),
                eta: rows(&sigma.eta),
                xi: rows(&sigma.xi),
                a: rows(&sigma.a),
            });
        }
    }
    let slant = classify_slant(
        imm,
        &entry.ambient,
        config.samples,
        imm.n() + config.extra_directions,
        config.seed,
        t.angle,
    )?;
    let report = AnalysisReport {
        schema_version: SCHEMA_VERSION,
        metadata: metadata(config, &entry, Vec::new()),
        pointwise_classes: classes,
        points,
        slant,
    };
    if let Some(path) = &config.out {
        std::fs::write(path, report.to_json()).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    }
    Ok(report)
}
