//! Named example immersions, their parameters and their closed-form structures.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::ambient::{make_product_structure, make_split_structure, AmbientStructure};
use crate::chart::{hyperspherical_angles, scaled, unit_sphere_monomials, ChartMap, LinearChart, Trig, TrigChart, TrigMonomial};
use crate::error::{Error, Result};
use crate::immersion::{DerivativeMode, Immersion, ParamBox, PointFrame};
use crate::linalg::{max_abs, thin_qr};
use crate::report::{rows, Checks, Discrepancy};
use crate::scalars::{make_params, MetallicParams};
use crate::sigma::{decompose, Chain, SigmaStructure};
use crate::slant::SlantClass;

/// Classification a catalog entry is expected to receive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExpectedClass {
    Invariant,
    AntiInvariant,
    ProperSlant,
    NotSlant,
}

impl ExpectedClass {
    pub fn matches(self, class: &SlantClass) -> bool {
        matches!(
            (self, class),
            (ExpectedClass::Invariant, SlantClass::Invariant)
                | (ExpectedClass::AntiInvariant, SlantClass::AntiInvariant)
                | (ExpectedClass::ProperSlant, SlantClass::ProperSlant { .. })
                | (ExpectedClass::NotSlant, SlantClass::NotSlant)
        )
    }
}

impl fmt::Display for ExpectedClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ExpectedClass::Invariant => "invariant",
            ExpectedClass::AntiInvariant => "anti-invariant",
            ExpectedClass::ProperSlant => "proper slant",
            ExpectedClass::NotSlant => "not slant",
        })
    }
}

/// One component of the induced structure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    A(usize, usize),
    Xi(usize),
    Eta(usize),
    T,
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Component::A(i, j) => write!(f, "a{}{}", i + 1, j + 1),
            Component::Xi(a) => write!(f, "xi{}", a + 1),
            Component::Eta(a) => write!(f, "eta{}", a + 1),
            Component::T => f.write_str("T"),
        }
    }
}

/// Closed-form values at an ambient point:
/// `A(i, j)` as a 1x1 matrix, `Xi(a)` as an ambient vector, `Eta(a)` as an
/// ambient covector `w` with `eta_a(X) = w . X`, and `T` as an ambient matrix
/// `M` with `T X = M X` on tangent vectors.
pub type Oracle = Arc<dyn Fn(&DVector<f64>) -> Vec<(Component, DMatrix<f64>)> + Send + Sync>;

/// A built catalog entry.
#[derive(Clone)]
pub struct CatalogEntry {
    pub name: String,
    pub params: BTreeMap<String, String>,
    pub ambient: AmbientStructure,
    pub immersion: Immersion,
    pub oracle: Option<Oracle>,
    pub expected_class: ExpectedClass,
    pub chain: Option<Chain>,
    /// Linear chart: the flat tolerance ladder applies.
    pub flat: bool,
}

impl fmt::Debug for CatalogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CatalogEntry")
            .field("name", &self.name)
            .field("params", &self.params)
            .field("immersion", &self.immersion)
            .field("oracle", &self.oracle.is_some())
            .field("expected_class", &self.expected_class)
            .field("chain", &self.chain.is_some())
            .field("flat", &self.flat)
            .finish()
    }
}

impl CatalogEntry {
    pub fn with_mode(mut self, mode: DerivativeMode) -> Self {
        self.immersion = self.immersion.with_mode(mode);
        if let Some(chain) = self.chain.take() {
            self.chain = Some(Chain {
                outer: chain.outer.with_mode(mode),
                inner: chain.inner,
                composed: chain.composed.with_mode(mode),
            });
        }
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Natural,
    Sign,
    Real,
    Choice(&'static [&'static str]),
}

#[derive(Debug, Clone, Copy)]
pub struct ParamSpec {
    pub key: &'static str,
    pub kind: ParamKind,
    pub default: &'static str,
}

pub struct EntrySpec {
    pub name: &'static str,
    pub summary: &'static str,
    pub params: &'static [ParamSpec],
    pub expected: &'static str,
    build: fn(&Params) -> Result<CatalogEntry>,
}

const fn nat(key: &'static str, default: &'static str) -> ParamSpec {
    ParamSpec { key, kind: ParamKind::Natural, default }
}

const fn real(key: &'static str, default: &'static str) -> ParamSpec {
    ParamSpec { key, kind: ParamKind::Real, default }
}

/// `printed`: the normals written in the closed forms; `pivot`: the generic frame rule.
const FRAME_CHOICES: &[&str] = &["pivot", "printed"];

const SLANT_SPECS: &[&str] = &[
    "anti_kplane",
    "anti_line",
    "invariant_line",
    "mixed_line",
    "not_slant_plane",
    "slant_plane",
];

static ENTRIES: &[EntrySpec] = &[
    EntrySpec {
        name: "anti_circle",
        summary: "anti-invariant circle (cos t, sin t, k cos t, k sin t), k = sigma/sqrt(q), in E^4",
        params: &[nat("p", "1"), nat("q", "1")],
        expected: "anti-invariant",
        build: build_anti_circle,
    },
    EntrySpec {
        name: "example1",
        summary: "S^(2a-1)(r) x S^(b-1)(r3) in S^(2a+b-1)(R) in E^(2a+b), product structure",
        params: &[
            nat("a", "1"),
            nat("b", "2"),
            real("r1", "1"),
            real("r2", "1"),
            real("r3", "1"),
            nat("p", "1"),
            nat("q", "1"),
            ParamSpec { key: "lambda", kind: ParamKind::Sign, default: "1" },
            ParamSpec { key: "frame", kind: ParamKind::Choice(FRAME_CHOICES), default: "printed" },
        ],
        expected: "not slant",
        build: build_example1,
    },
    EntrySpec {
        name: "example2",
        summary: "S^(a-1)(r1) x S^(b-1)(r2) in S^(a+b-1)(r) in E^(a+b), split structure",
        params: &[
            nat("a", "2"),
            nat("b", "2"),
            real("r1", "1"),
            real("r2", "1"),
            nat("p", "1"),
            nat("q", "1"),
            ParamSpec { key: "frame", kind: ParamKind::Choice(FRAME_CHOICES), default: "printed" },
        ],
        expected: "invariant",
        build: build_example2,
    },
    EntrySpec {
        name: "linear_chain",
        summary: "plane in a hyperplane of E^4, both linear",
        params: &[nat("p", "1"), nat("q", "1")],
        expected: "not slant",
        build: build_linear_chain,
    },
    EntrySpec {
        name: "linear_slant",
        summary: "linear subspaces with prescribed angle behaviour",
        params: &[
            ParamSpec { key: "spec", kind: ParamKind::Choice(SLANT_SPECS), default: "mixed_line" },
            nat("p", "1"),
            nat("q", "1"),
            real("phi", "0.7"),
            real("slope", "1"),
            nat("k", "2"),
        ],
        expected: "depends on spec",
        build: build_linear_slant,
    },
    EntrySpec {
        name: "slant_circle",
        summary: "proper slant circle (cos t, sin t, cos t, sin t) in E^4",
        params: &[nat("p", "1"), nat("q", "1")],
        expected: "proper slant",
        build: build_slant_circle,
    },
    EntrySpec {
        name: "sphere",
        summary: "S^m(R) in E^(m+1) with split structure (a, m+1-a)",
        params: &[nat("m", "2"), real("radius", "1"), nat("a", "1"), nat("p", "1"), nat("q", "1")],
        expected: "not slant",
        build: build_sphere,
    },
];

pub fn entries() -> &'static [EntrySpec] {
    ENTRIES
}

/// Resolved `key=value` parameters of one entry.
#[derive(Debug, Clone)]
pub struct Params {
    values: BTreeMap<String, String>,
}

impl Params {
    fn raw(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or_default()
    }

    pub fn natural(&self, key: &str) -> Result<usize> {
        self.raw(key)
            .parse()
            .map_err(|_| Error::BadParameter(format!("{key} must be a natural number, got `{}`", self.raw(key))))
    }

    pub fn real(&self, key: &str) -> Result<f64> {
        let v: f64 = self
            .raw(key)
            .parse()
            .map_err(|_| Error::BadParameter(format!("{key} must be a real number, got `{}`", self.raw(key))))?;
        if !v.is_finite() {
            return Err(Error::BadParameter(format!("{key} must be finite")));
        }
        Ok(v)
    }

    pub fn positive(&self, key: &str) -> Result<f64> {
        let v = self.real(key)?;
        if v <= 0.0 {
            return Err(Error::BadParameter(format!("{key} must be positive, got {v}")));
        }
        Ok(v)
    }

    pub fn sign(&self, key: &str) -> Result<i8> {
        match self.raw(key) {
            "1" | "+1" => Ok(1),
            "-1" => Ok(-1),
            other => Err(Error::BadParameter(format!("{key} must be 1 or -1, got `{other}`"))),
        }
    }

    pub fn text(&self, key: &str) -> &str {
        self.raw(key)
    }

    pub fn metallic(&self) -> Result<MetallicParams> {
        let p = self.natural("p")?;
        let q = self.natural("q")?;
        make_params(p as i64, q as i64).map_err(|e| Error::BadParameter(e.to_string()))
    }

    pub fn values(&self) -> &BTreeMap<String, String> {
        &self.values
    }
}

fn resolve(spec: &EntrySpec, overrides: &[(String, String)]) -> Result<Params> {
    let mut values: BTreeMap<String, String> =
        spec.params.iter().map(|p| (p.key.to_string(), p.default.to_string())).collect();
    for (k, v) in overrides {
        let Some(ps) = spec.params.iter().find(|p| p.key == k) else {
            return Err(Error::BadParameter(format!("entry {} has no parameter `{k}`", spec.name)));
        };
        if let ParamKind::Choice(options) = ps.kind {
            if !options.contains(&v.as_str()) {
                return Err(Error::BadParameter(format!("{k} must be one of {options:?}, got `{v}`")));
            }
        }
        values.insert(k.clone(), v.clone());
    }
    Ok(Params { values })
}

/// Splits `key=value` arguments.
pub fn parse_assignments<S: AsRef<str>>(args: &[S]) -> Result<Vec<(String, String)>> {
    args.iter()
        .map(|a| {
            let a = a.as_ref();
            match a.split_once('=') {
                Some((k, v)) if !k.is_empty() => Ok((k.trim().to_string(), v.trim().to_string())),
                _ => Err(Error::BadParameter(format!("expected key=value, got `{a}`"))),
            }
        })
        .collect()
}

/// Builds entry `name` with parameter overrides.
pub fn build(name: &str, overrides: &[(String, String)]) -> Result<CatalogEntry> {
    let spec = ENTRIES
        .iter()
        .find(|e| e.name == name)
        .ok_or_else(|| Error::UnknownEntry(name.to_string()))?;
    let params = resolve(spec, overrides)?;
    let mut entry = (spec.build)(&params).map_err(|e| match e {
        Error::Domain(m) => Error::BadParameter(m),
        other => other,
    })?;
    entry.params = params.values.clone();
    Ok(entry)
}

/// Entry names, parameter schemas and expected classifications, sorted by name.
pub fn catalog_list() -> String {
    let mut names: Vec<&EntrySpec> = ENTRIES.iter().collect();
    names.sort_by_key(|e| e.name);
    let mut out = String::new();
    for e in names {
        out.push_str(&format!("{}\n  {}\n  expected: {}\n  params:", e.name, e.summary, e.expected));
        for p in e.params {
            let kind = match p.kind {
                ParamKind::Natural => "natural".to_string(),
                ParamKind::Sign => "+1|-1".to_string(),
                ParamKind::Real => "real".to_string(),
                ParamKind::Choice(o) => o.join("|"),
            };
            out.push_str(&format!(" {}=<{}> (default {})", p.key, kind, p.default));
        }
        out.push('\n');
    }
    out
}

/// Bounds of the hyperspherical chart of `S^m`: polar angles, then the azimuth.
fn sphere_ranges(m: usize, margin: f64) -> Vec<(f64, f64)> {
    (0..m)
        .map(|k| if k + 1 == m { (-PI + margin, PI - margin) } else { (margin, PI - margin) })
        .collect()
}

fn param_box(ranges: &[(f64, f64)]) -> Result<ParamBox> {
    ParamBox::new(ranges.iter().map(|r| r.0).collect(), ranges.iter().map(|r| r.1).collect())
}

fn outward_normal() -> crate::immersion::FrameOverride {
    Arc::new(|_u, x: &DVector<f64>| DMatrix::from_column_slice(x.len(), 1, (x / x.norm()).as_slice()))
}

/// Round sphere `S^m(radius)` in `E^(m+1)`, outward normal.
fn round_sphere(m: usize, radius: f64, margin: f64) -> Result<Immersion> {
    let chart = TrigChart::new(m, scaled(unit_sphere_monomials(m, 0), radius, &[]));
    Ok(Immersion::new(Arc::new(chart), param_box(&sphere_ranges(m, margin))?)?.with_frame_override(outward_normal()))
}

/// Hyperspherical angles of `chart(v) / radius`.
#[derive(Debug)]
struct SphereAngles {
    chart: TrigChart,
    radius: f64,
}

impl ChartMap for SphereAngles {
    fn intrinsic_dim(&self) -> usize {
        self.chart.intrinsic_dim()
    }

    fn ambient_dim(&self) -> usize {
        self.chart.ambient_dim() - 1
    }

    fn eval(&self, v: &DVector<f64>) -> DVector<f64> {
        hyperspherical_angles(&(self.chart.eval(v) / self.radius))
    }
}

const DOMAIN_MARGIN: f64 = 0.1;
const OUTER_MARGIN: f64 = 0.01;

fn sphere_chain(chart: &TrigChart, composed: &Immersion, radius: f64) -> Result<Chain> {
    let dim = chart.ambient_dim();
    Ok(Chain {
        outer: round_sphere(dim - 1, radius, OUTER_MARGIN)?,
        inner: Arc::new(SphereAngles { chart: chart.clone(), radius }),
        composed: composed.clone(),
    })
}

fn build_example1(ps: &Params) -> Result<CatalogEntry> {
    let a = ps.natural("a")?;
    let b = ps.natural("b")?;
    if a < 1 || b < 2 {
        return Err(Error::BadParameter(format!("example1 needs a >= 1 and b >= 2, got a={a}, b={b}")));
    }
    let r1 = ps.positive("r1")?;
    let r2 = ps.positive("r2")?;
    let r3 = ps.positive("r3")?;
    let lambda = ps.sign("lambda")?;
    let params = ps.metallic()?;
    let r = r1.hypot(r2);
    let big_r = r.hypot(r3);
    let ambient = make_product_structure(a, b, lambda, params)?;

    let n = 2 * a + b - 2;
    let mut coords = scaled(unit_sphere_monomials(a - 1, 1), r, &[(0, Trig::Cos)]);
    coords.extend(scaled(unit_sphere_monomials(a - 1, a), r, &[(0, Trig::Sin)]));
    coords.extend(scaled(unit_sphere_monomials(b - 1, 2 * a - 1), r3, &[]));
    let chart = TrigChart::new(n, coords);
    let mut ranges = vec![(DOMAIN_MARGIN, PI / 2.0 - DOMAIN_MARGIN)];
    ranges.extend(sphere_ranges(a - 1, DOMAIN_MARGIN));
    ranges.extend(sphere_ranges(a - 1, DOMAIN_MARGIN));
    ranges.extend(sphere_ranges(b - 1, DOMAIN_MARGIN));
    let normals = move |_u: &DVector<f64>, x: &DVector<f64>| {
        let rr = x.rows(0, 2 * a).norm();
        let r3 = x.rows(2 * a, b).norm();
        let big_r = x.norm();
        let n1 = x / big_r;
        let n2 = DVector::from_fn(x.len(), |i, _| {
            if i < 2 * a {
                r3 / rr * x[i] / big_r
            } else {
                -rr / r3 * x[i] / big_r
            }
        });
        DMatrix::from_columns(&[n1, n2])
    };
    let printed = ps.text("frame") == "printed";
    let mut immersion = Immersion::new(Arc::new(chart.clone()), param_box(&ranges)?)?;
    if printed {
        immersion = immersion.with_frame_override(Arc::new(normals));
    }
    let chain = sphere_chain(&chart, &immersion, big_r)?;
    let oracle = (lambda == 1 && printed).then(|| example1_oracle(a, params));
    Ok(CatalogEntry {
        name: "example1".into(),
        params: BTreeMap::new(),
        ambient,
        immersion,
        oracle,
        expected_class: ExpectedClass::NotSlant,
        chain: Some(chain),
        flat: false,
    })
}

/// The printed closed forms for `lambda = 1`, with `r1 = |x|`, `r2 = |y|`,
/// `r3 = |z|` taken at the point.
fn example1_oracle(a: usize, params: MetallicParams) -> Oracle {
    Arc::new(move |pt: &DVector<f64>| {
        let big_n = pt.len();
        let (s, sb) = (params.sigma, params.sigma_bar);
        let sd = params.sqrt_delta();
        let p = params.pf();
        let x = pt.rows(0, a);
        let y = pt.rows(a, a);
        let z = pt.rows(2 * a, big_n - 2 * a);
        let (r1s, r2s, r3s) = (x.norm_squared(), y.norm_squared(), z.norm_squared());
        let r3 = r3s.sqrt();
        let r = (r1s + r2s).sqrt();
        let rs = r * r;
        let big_rs = rs + r3s;
        let big_r = big_rs.sqrt();
        let tau = s * r1s + sb * r2s + s * r3s;
        let block = |fx: f64, fy: f64, fz: f64| {
            DMatrix::from_fn(big_n, 1, |i, _| {
                if i < a {
                    fx * pt[i]
                } else if i < 2 * a {
                    fy * pt[i]
                } else {
                    fz * pt[i]
                }
            })
        };
        let scalar = |v: f64| DMatrix::from_element(1, 1, v);
        let a11 = (s * r1s + sb * r2s + s * r3s) / big_rs;
        let a12 = (sb - s) * r3 * r2s / (r * big_rs);
        let a22 = r3 * (s * r1s + sb * r2s + s * rs) / (r * big_rs);
        let xi1 = block((s - sb) * r2s / rs, -(s - sb) * r1s / rs, 0.0);
        let k = 1.0 / (r * big_r.powi(3));
        let cxy = k * (r3 * tau - p * r2s * r3s / r);
        let cz = k * (r * tau - sd * r2s * r3 - r * big_rs * s / r3s);
        let xi2 = block(cxy, cxy, cz);
        let eta1 = block(sd, 0.0, 0.0);
        let eta2 = DMatrix::zeros(big_n, 1);
        let diag = DVector::from_fn(big_n, |i, _| if (a..2 * a).contains(&i) { sb } else { s });
        let x_only = block(1.0, 0.0, 0.0);
        let t = DMatrix::from_diagonal(&diag) - DMatrix::from_column_slice(big_n, 1, pt.as_slice()) * x_only.transpose() * (sd / big_r);
        vec![
            (Component::A(0, 0), scalar(a11)),
            (Component::A(0, 1), scalar(a12)),
            (Component::A(1, 0), scalar(a12)),
            (Component::A(1, 1), scalar(a22)),
            (Component::Xi(0), xi1),
            (Component::Xi(1), xi2),
            (Component::Eta(0), eta1),
            (Component::Eta(1), eta2),
            (Component::T, t),
        ]
    })
}

fn build_example2(ps: &Params) -> Result<CatalogEntry> {
    let a = ps.natural("a")?;
    let b = ps.natural("b")?;
    if a < 2 || b < 2 {
        return Err(Error::BadParameter(format!("example2 needs a, b >= 2, got a={a}, b={b}")));
    }
    let r1 = ps.positive("r1")?;
    let r2 = ps.positive("r2")?;
    let params = ps.metallic()?;
    let ambient = make_split_structure(a, b, params)?;
    let n = a + b - 2;
    let mut coords = scaled(unit_sphere_monomials(a - 1, 0), r1, &[]);
    coords.extend(scaled(unit_sphere_monomials(b - 1, a - 1), r2, &[]));
    let chart = TrigChart::new(n, coords);
    let mut ranges = sphere_ranges(a - 1, DOMAIN_MARGIN);
    ranges.extend(sphere_ranges(b - 1, DOMAIN_MARGIN));
    let normals = move |_u: &DVector<f64>, pt: &DVector<f64>| {
        let r1 = pt.rows(0, a).norm();
        let r2 = pt.rows(a, b).norm();
        let r = pt.norm();
        let n1 = pt / r;
        let n2 = DVector::from_fn(pt.len(), |i, _| if i < a { r2 / r1 * pt[i] / r } else { -r1 / r2 * pt[i] / r });
        DMatrix::from_columns(&[n1, n2])
    };
    let printed = ps.text("frame") == "printed";
    let mut immersion = Immersion::new(Arc::new(chart.clone()), param_box(&ranges)?)?;
    if printed {
        immersion = immersion.with_frame_override(Arc::new(normals));
    }
    let r = r1.hypot(r2);
    let chain = sphere_chain(&chart, &immersion, r)?;
    let j = ambient.matrix().clone();
    let (s, sb) = (params.sigma, params.sigma_bar);
    let rs = r * r;
    let oracle: Oracle = Arc::new(move |pt: &DVector<f64>| {
        let big_n = pt.len();
        let scalar = |v: f64| DMatrix::from_element(1, 1, v);
        let off = r1 * r2 * (s - sb) / rs;
        vec![
            (Component::A(0, 0), scalar((s * r1 * r1 + sb * r2 * r2) / rs)),
            (Component::A(0, 1), scalar(off)),
            (Component::A(1, 0), scalar(off)),
            (Component::A(1, 1), scalar((sb * r1 * r1 + s * r2 * r2) / rs)),
            (Component::Xi(0), DMatrix::zeros(big_n, 1)),
            (Component::Xi(1), DMatrix::zeros(big_n, 1)),
            (Component::Eta(0), DMatrix::zeros(big_n, 1)),
            (Component::Eta(1), DMatrix::zeros(big_n, 1)),
            (Component::T, j.clone()),
        ]
    });
    Ok(CatalogEntry {
        name: "example2".into(),
        params: BTreeMap::new(),
        ambient,
        immersion,
        oracle: printed.then_some(oracle),
        expected_class: ExpectedClass::Invariant,
        chain: Some(chain),
        flat: false,
    })
}

fn linear(basis: DMatrix<f64>, half_width: f64) -> Result<Immersion> {
    let n = basis.ncols();
    let sv = basis.clone().singular_values();
    if sv.min() < 1e-8 {
        return Err(Error::BadParameter("linear chart basis is rank deficient".into()));
    }
    Immersion::new(Arc::new(LinearChart::new(basis)), ParamBox::cube(n, -half_width, half_width))
}

fn linear_entry(name: &str, ambient: AmbientStructure, basis: DMatrix<f64>, expected: ExpectedClass) -> Result<CatalogEntry> {
    Ok(CatalogEntry {
        name: name.into(),
        params: BTreeMap::new(),
        ambient,
        immersion: linear(basis, 1.0)?,
        oracle: None,
        expected_class: expected,
        chain: None,
        flat: true,
    })
}

fn build_linear_chain(ps: &Params) -> Result<CatalogEntry> {
    let params = ps.metallic()?;
    let ambient = make_split_structure(2, 2, params)?;
    let outer_basis = DMatrix::from_column_slice(4, 3, &[1.0, 0.0, 0.0, 0.5, 0.0, 1.0, 0.0, -0.2, 0.0, 0.0, 1.0, 0.7]);
    let inner = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 1.0, 1.0, 0.0, 2.0]);
    let composed = linear(&outer_basis * &inner, 0.4)?;
    let chain = Chain {
        outer: linear(outer_basis, 1.0)?,
        inner: Arc::new(LinearChart::new(inner)),
        composed: composed.clone(),
    };
    Ok(CatalogEntry {
        name: "linear_chain".into(),
        params: BTreeMap::new(),
        ambient,
        immersion: composed,
        oracle: None,
        expected_class: ExpectedClass::NotSlant,
        chain: Some(chain),
        flat: true,
    })
}

/// Class of a direction `v` in a split structure by the ratio `|Tv| / |Jv|`
/// when every tangent direction shares it.
fn class_from_ratio(cos_theta: f64) -> ExpectedClass {
    if cos_theta.abs() < 1e-12 {
        ExpectedClass::AntiInvariant
    } else if (cos_theta.abs() - 1.0).abs() < 1e-12 {
        ExpectedClass::Invariant
    } else {
        ExpectedClass::ProperSlant
    }
}

/// Orthonormal basis of `span(e_i + c e_(k+i))`, on which `J` is anti-invariant
/// when `c = sigma / sqrt(q)`.
pub fn anti_invariant_kplane(k: usize, params: &MetallicParams) -> DMatrix<f64> {
    let c = params.sigma / params.qf().sqrt();
    let w = DMatrix::from_fn(2 * k, k, |i, j| {
        if i == j {
            1.0
        } else if i == k + j {
            c
        } else {
            0.0
        }
    });
    thin_qr(&w).expect("independent columns").0
}

fn build_linear_slant(ps: &Params) -> Result<CatalogEntry> {
    let params = ps.metallic()?;
    let (s, sb) = (params.sigma, params.sigma_bar);
    let spec = ps.text("spec").to_string();
    let name = "linear_slant";
    match spec.as_str() {
        "invariant_line" => linear_entry(
            name,
            make_split_structure(1, 1, params)?,
            DMatrix::from_column_slice(2, 1, &[1.0, 0.0]),
            ExpectedClass::Invariant,
        ),
        "anti_line" => linear_entry(
            name,
            make_split_structure(1, 1, params)?,
            DMatrix::from_column_slice(2, 1, &[1.0, s / params.qf().sqrt()]),
            ExpectedClass::AntiInvariant,
        ),
        "mixed_line" => {
            let t = (s + sb) / 2.0;
            let jn = (s * s + sb * sb).sqrt() / 2f64.sqrt();
            linear_entry(
                name,
                make_split_structure(1, 1, params)?,
                DMatrix::from_column_slice(2, 1, &[1.0, 1.0]),
                class_from_ratio(t / jn),
            )
        }
        "slant_plane" => {
            let phi = ps.real("phi")?;
            let (sp, cp) = phi.sin_cos();
            let basis = DMatrix::from_column_slice(4, 2, &[cp, 0.0, sp, 0.0, 0.0, cp, 0.0, sp]);
            let t = s * cp * cp + sb * sp * sp;
            let jn = (s * s * cp * cp + sb * sb * sp * sp).sqrt();
            linear_entry(name, make_split_structure(2, 2, params)?, basis, class_from_ratio(t / jn))
        }
        "not_slant_plane" => {
            let slope = ps.real("slope")?;
            if slope == 0.0 {
                return Err(Error::BadParameter("slope must be nonzero".into()));
            }
            let basis = DMatrix::from_column_slice(4, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, slope]);
            linear_entry(name, make_split_structure(2, 2, params)?, basis, ExpectedClass::NotSlant)
        }
        "anti_kplane" => {
            let k = ps.natural("k")?;
            if k < 1 || 2 * k > crate::ambient::MAX_AMBIENT_DIM {
                return Err(Error::BadParameter(format!("k out of range: {k}")));
            }
            linear_entry(
                name,
                make_split_structure(k, k, params)?,
                anti_invariant_kplane(k, &params),
                ExpectedClass::AntiInvariant,
            )
        }
        other => Err(Error::BadParameter(format!("unknown spec `{other}`"))),
    }
}

fn circle_in_e4(k: f64, params: MetallicParams, name: &str, expected: ExpectedClass) -> Result<CatalogEntry> {
    let ambient = make_split_structure(2, 2, params)?;
    let m = |scale: f64, t: Trig| TrigMonomial { scale, factors: vec![(0, t)] };
    let chart = TrigChart::new(1, vec![m(1.0, Trig::Cos), m(1.0, Trig::Sin), m(k, Trig::Cos), m(k, Trig::Sin)]);
    let normals = move |_u: &DVector<f64>, x: &DVector<f64>| {
        let (c, s) = (x[0], x[1]);
        let n3 = DVector::from_vec(vec![-k * s, k * c, s, -c]) / (1.0 + k * k).sqrt();
        DMatrix::from_columns(&[
            DVector::from_vec(vec![c, s, 0.0, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, c, s]),
            n3,
        ])
    };
    let immersion = Immersion::new(Arc::new(chart), param_box(&[(-PI + DOMAIN_MARGIN, PI - DOMAIN_MARGIN)])?)?
        .with_frame_override(Arc::new(normals));
    Ok(CatalogEntry {
        name: name.into(),
        params: BTreeMap::new(),
        ambient,
        immersion,
        oracle: None,
        expected_class: expected,
        chain: None,
        flat: false,
    })
}

fn build_anti_circle(ps: &Params) -> Result<CatalogEntry> {
    let params = ps.metallic()?;
    circle_in_e4(params.sigma / params.qf().sqrt(), params, "anti_circle", ExpectedClass::AntiInvariant)
}

fn build_slant_circle(ps: &Params) -> Result<CatalogEntry> {
    let params = ps.metallic()?;
    circle_in_e4(1.0, params, "slant_circle", ExpectedClass::ProperSlant)
}

fn build_sphere(ps: &Params) -> Result<CatalogEntry> {
    let m = ps.natural("m")?;
    let a = ps.natural("a")?;
    let radius = ps.positive("radius")?;
    if m < 1 || m + 1 > crate::ambient::MAX_AMBIENT_DIM {
        return Err(Error::BadParameter(format!("m out of range: {m}")));
    }
    if a < 1 || a > m {
        return Err(Error::BadParameter(format!("need 1 <= a <= m, got a={a}")));
    }
    let params = ps.metallic()?;
    Ok(CatalogEntry {
        name: "sphere".into(),
        params: BTreeMap::new(),
        ambient: make_split_structure(a, m + 1 - a, params)?,
        immersion: round_sphere(m, radius, DOMAIN_MARGIN)?,
        oracle: None,
        expected_class: ExpectedClass::NotSlant,
        chain: None,
        flat: false,
    })
}

/// The structure value a component takes in the pipeline representation.
fn component_value(c: Component, frame: &PointFrame, sigma: &SigmaStructure) -> DMatrix<f64> {
    match c {
        Component::A(i, j) => DMatrix::from_element(1, 1, sigma.a[(i, j)]),
        Component::Xi(a) => {
            let v = &frame.e * sigma.xi.column(a);
            DMatrix::from_column_slice(v.len(), 1, v.as_slice())
        }
        Component::Eta(a) => sigma.eta.rows(a, 1).clone_owned(),
        Component::T => &frame.e * &sigma.t,
    }
}

/// The same component from the defining decompositions, using the frame's normals.
fn definitional_value(c: Component, frame: &PointFrame, j: &DMatrix<f64>) -> DMatrix<f64> {
    let f = &frame.f;
    let e = &frame.e;
    let a = f.transpose() * j * f;
    let xi = |k: usize| -> DVector<f64> {
        let jn = j * f.column(k);
        jn - f * a.row(k).transpose()
    };
    match c {
        Component::A(i, k) => DMatrix::from_element(1, 1, a[(i, k)]),
        Component::Xi(k) => DMatrix::from_column_slice(e.nrows(), 1, xi(k).as_slice()),
        Component::Eta(k) => {
            let x = xi(k);
            DMatrix::from_fn(1, e.ncols(), |_, i| e.column(i).dot(&x))
        }
        Component::T => {
            let mut t = j * e;
            for k in 0..f.ncols() {
                let x = xi(k);
                for i in 0..e.ncols() {
                    let eta = e.column(i).dot(&x);
                    let col = t.column(i) - f.column(k) * eta;
                    t.set_column(i, &col);
                }
            }
            t
        }
    }
}

/// The printed value in the pipeline representation.
fn printed_value(c: Component, frame: &PointFrame, value: &DMatrix<f64>) -> DMatrix<f64> {
    match c {
        Component::A(..) | Component::Xi(_) => value.clone(),
        Component::Eta(_) => value.transpose() * &frame.e,
        Component::T => value * &frame.e,
    }
}

/// Outcome of comparing an entry's closed forms with the pipeline.
#[derive(Debug, Clone, Default)]
pub struct OracleOutcome {
    pub checks: Checks,
    pub discrepancies: Vec<Discrepancy>,
    /// Components whose printed value fails the self-consistency gate.
    pub gated_out: Vec<Component>,
}

struct Worst {
    diff: f64,
    u: DVector<f64>,
    computed: DMatrix<f64>,
    printed: DMatrix<f64>,
}

/// Checks every closed-form component against the definitional decomposition
/// (the gate) and the pipeline against both.
pub fn verify_oracle(entry: &CatalogEntry, samples: usize, seed: u64, gate_tol: f64, tol: f64) -> Result<OracleOutcome> {
    let Some(oracle) = &entry.oracle else {
        return Ok(OracleOutcome::default());
    };
    let imm = &entry.immersion;
    let j = entry.ambient.matrix();
    let points = imm.sample_points(samples, seed)?;
    let mut gate: BTreeMap<Component, Worst> = BTreeMap::new();
    let mut pipe_def: BTreeMap<Component, Checks> = BTreeMap::new();
    let mut pipe_printed: BTreeMap<Component, Checks> = BTreeMap::new();
    for u in &points {
        let frame = imm.frame_at(u)?;
        let sigma = decompose(&entry.ambient, &frame)?;
        for (c, value) in oracle(&frame.x) {
            let printed = printed_value(c, &frame, &value);
            let def = definitional_value(c, &frame, j);
            let pipe = component_value(c, &frame, &sigma);
            let g = max_abs(&(&printed - &def));
            let w = gate.entry(c).or_insert(Worst {
                diff: -1.0,
                u: u.clone(),
                computed: def.clone(),
                printed: printed.clone(),
            });
            if g > w.diff || g.is_nan() {
                *w = Worst { diff: g, u: u.clone(), computed: def.clone(), printed: printed.clone() };
            }
            let name = format!("oracle.{c}.definitional");
            pipe_def.entry(c).or_default().record(&name, max_abs(&(&pipe - &def)), tol, Some(u));
            let name = format!("oracle.{c}");
            pipe_printed.entry(c).or_default().record(&name, max_abs(&(&pipe - &printed)), tol, Some(u));
        }
    }
    let mut out = OracleOutcome::default();
    for (c, w) in &gate {
        out.checks.extend(pipe_def.remove(c).unwrap_or_default());
        if w.diff <= gate_tol {
            out.checks.extend(pipe_printed.remove(c).unwrap_or_default());
        } else {
            out.gated_out.push(*c);
            out.discrepancies.push(Discrepancy {
                name: format!("{}.{c}", entry.name),
                note: format!("printed {c} disagrees with its definition from the printed normals"),
                max_abs_diff: Some(w.diff),
                sample_point: Some(w.u.iter().copied().collect()),
                computed: rows(&w.computed),
                printed: rows(&w.printed),
            });
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sigma::{classify_pointwise, PointClass};

    fn kv(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn listing_is_sorted() {
        let text = catalog_list();
        let names: Vec<&str> = text.lines().filter(|l| !l.starts_with(' ')).collect();
        let mut sorted = names.clone();
        sorted.sort();
        assert_eq!(names, sorted);
        assert!(names.contains(&"example1") && names.contains(&"example2"));
    }

    #[test]
    fn unknown_entry_and_bad_parameters() {
        assert!(matches!(build("torus", &[]), Err(Error::UnknownEntry(_))));
        assert!(matches!(build("example2", &kv(&[("a", "x")])), Err(Error::BadParameter(_))));
        assert!(matches!(build("example2", &kv(&[("c", "1")])), Err(Error::BadParameter(_))));
        assert!(matches!(build("example1", &kv(&[("r2", "0")])), Err(Error::BadParameter(_))));
        assert!(matches!(build("example2", &kv(&[("a", "1")])), Err(Error::BadParameter(_))));
        assert!(matches!(build("linear_slant", &kv(&[("spec", "cone")])), Err(Error::BadParameter(_))));
        assert!(parse_assignments(&["a=1", "b"]).is_err());
    }

    #[test]
    fn example2_matrix_at_unit_radii() {
        let e = build("example2", &[]).unwrap();
        let u = e.immersion.sample_points(1, 3).unwrap().remove(0);
        let s = decompose(&e.ambient, &e.immersion.frame_at(&u).unwrap()).unwrap();
        let h = 5f64.sqrt() / 2.0;
        let want = DMatrix::from_row_slice(2, 2, &[0.5, h, h, 0.5]);
        assert!((s.a - want).amax() < 1e-12);
    }

    #[test]
    fn example1_first_entry() {
        let e = build("example1", &[]).unwrap();
        let u = e.immersion.sample_points(1, 3).unwrap().remove(0);
        let frame = e.immersion.frame_at(&u).unwrap();
        let printed = (e.oracle.as_ref().unwrap())(&frame.x);
        let x = &frame.x;
        // At r1 = r2 = r3 = 1 the closed form gives sigma^2 / 3.
        let sig = MetallicParams::golden().sigma;
        let general = printed[0].1[(0, 0)];
        let (r1s, r2s) = (x[0] * x[0], x[1] * x[1]);
        let expect = (sig * r1s + (1.0 - sig) * r2s + sig) / 3.0;
        assert!((general - expect).abs() < 1e-12);
        assert!(((sig + (1.0 - sig) + sig) / 3.0 - sig * sig / 3.0).abs() < 1e-12);
    }

    #[test]
    fn anti_kplane_is_anti_invariant() {
        let params = make_params(2, 3).unwrap();
        let q = anti_invariant_kplane(3, &params);
        let amb = make_split_structure(3, 3, params).unwrap();
        assert!((q.transpose() * amb.matrix() * &q).amax() < 1e-12);
    }

    #[test]
    fn gate_flags_example1_components() {
        let e = build("example1", &[]).unwrap();
        let out = verify_oracle(&e, 10, 1, 1e-8, 1e-8).unwrap();
        assert!(out.checks.all_pass(), "{:?}", out.checks);
        assert!(out.gated_out.contains(&Component::A(1, 1)));
        assert!(!out.gated_out.contains(&Component::A(0, 0)));
        assert!(!out.gated_out.contains(&Component::A(0, 1)));
    }

    #[test]
    fn example2_oracle_passes() {
        let e = build("example2", &kv(&[("a", "3"), ("r1", "2")])).unwrap();
        let out = verify_oracle(&e, 10, 1, 1e-8, 1e-9).unwrap();
        assert!(out.gated_out.is_empty());
        assert!(out.checks.all_pass());
        let u = e.immersion.sample_points(1, 0).unwrap().remove(0);
        let s = decompose(&e.ambient, &e.immersion.frame_at(&u).unwrap()).unwrap();
        assert_eq!(classify_pointwise(&s, 1e-7), PointClass::Invariant);
    }
}
