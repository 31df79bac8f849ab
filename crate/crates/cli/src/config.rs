//! The JSON job configuration: schema, parsing with document paths in error
//! messages, and resolution of named systems into operator specs.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::{Path, PathBuf};

use incstab::iqc::Multiplier;
use incstab::lti::log_grid;
use incstab::probes::ProbeFamily;
use incstab::srg::{Primitive, Region};
use incstab::{OperatorSpec, StateSpace, StaticFn};
use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::Deserialize;

/// A configuration problem, located by its path in the document.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub path: String,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.path.is_empty() {
            write!(f, "{}", self.message)
        } else {
            write!(f, "{}: {}", self.path, self.message)
        }
    }
}

impl std::error::Error for ConfigError {}

fn err(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError { path: path.to_string(), message: message.into() }
}

pub type ConfigResult<T> = std::result::Result<T, ConfigError>;

#[derive(Debug, Clone)]
pub struct Config {
    pub systems: BTreeMap<String, SystemConfig>,
    pub job: Job,
    /// Seed of every pseudo-random probe (default 0).
    pub seed: u64,
    /// Copied verbatim into certificates; leave unset for byte-reproducible output.
    pub generated: Option<String>,
    pub outputs: Outputs,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default)]
    systems: BTreeMap<String, SystemConfig>,
    job: JobName,
    #[serde(default)]
    parameters: Option<serde_json::Value>,
    #[serde(default)]
    seed: u64,
    #[serde(default)]
    generated: Option<String>,
    #[serde(default)]
    outputs: Outputs,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "snake_case")]
enum JobName {
    SmallGain,
    CertifySrg,
    CertifyIqc,
    Simulate,
    SrgSample,
    ArctanExperiment,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Outputs {
    pub certificate: Option<PathBuf>,
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemConfig {
    pub node: NodeConfig,
    #[serde(default)]
    pub declared_gain: Option<f64>,
    #[serde(default)]
    pub declared_srg: Option<Vec<Primitive>>,
    #[serde(default)]
    pub srg_cover: Option<CoverConfig>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum CoverConfig {
    Nyquist {
        #[serde(default)]
        padding: f64,
    },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum NodeConfig {
    Lti {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "B")]
        b: Vec<Vec<f64>>,
        #[serde(rename = "C")]
        c: Vec<Vec<f64>>,
        #[serde(rename = "D")]
        d: Vec<Vec<f64>>,
    },
    Static {
        #[serde(rename = "fn")]
        function: FnName,
        #[serde(default)]
        k: Option<f64>,
        #[serde(default)]
        limit: Option<f64>,
        #[serde(default)]
        width: Option<f64>,
    },
    Scale {
        c: f64,
        inner: Box<NodeConfig>,
    },
    Sum {
        left: Box<NodeConfig>,
        right: Box<NodeConfig>,
    },
    Feedback {
        forward: Box<NodeConfig>,
        backward: Box<NodeConfig>,
        tau: f64,
    },
    Ref {
        name: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FnName {
    Identity,
    Gain,
    Saturation,
    Deadzone,
    NegArctan,
    Tanh,
}

#[derive(Debug, Clone)]
pub enum Job {
    SmallGain(SmallGainParams),
    CertifySrg(SrgParams),
    CertifyIqc(IqcParams),
    Simulate(SimulateParams),
    SrgSample(SampleParams),
    ArctanExperiment(ArctanParams),
}

impl Job {
    pub fn name(&self) -> &'static str {
        match self {
            Job::SmallGain(_) => "small_gain",
            Job::CertifySrg(_) => "certify_srg",
            Job::CertifyIqc(_) => "certify_iqc",
            Job::Simulate(_) => "simulate",
            Job::SrgSample(_) => "srg_sample",
            Job::ArctanExperiment(_) => "arctan_experiment",
        }
    }

    /// Output keys the job can produce.
    fn allowed_outputs(&self) -> &'static [&'static str] {
        match self {
            Job::SmallGain(_) => &["certificate"],
            Job::CertifySrg(_) => &["certificate", "svg"],
            Job::CertifyIqc(_) => &["certificate"],
            Job::Simulate(_) => &["csv", "report"],
            Job::SrgSample(_) => &["csv", "svg"],
            Job::ArctanExperiment(_) => &["csv", "svg", "report"],
        }
    }
}

fn yes() -> bool {
    true
}

/// Overrides of the standard probe family (the seed comes from the top level).
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    pub len: Option<usize>,
    pub dt: Option<f64>,
    pub sinusoids: Option<usize>,
    pub noise: Option<usize>,
    pub amplitudes: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmallGainParams {
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub h1: Option<String>,
    pub h2: Option<String>,
    #[serde(default = "yes")]
    pub cross_check: bool,
    #[serde(default)]
    pub probes: ProbeConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SrgParams {
    pub h1: String,
    pub h2: String,
    #[serde(default)]
    pub relaxed: bool,
    #[serde(default)]
    pub well_posedness_assumed: bool,
    #[serde(default = "yes")]
    pub cross_check: bool,
    #[serde(default)]
    pub probes: ProbeConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IqcParams {
    pub h1: String,
    pub h2: String,
    pub multiplier: MultiplierConfig,
    #[serde(default)]
    pub grid: Option<GridConfig>,
    #[serde(default = "yes")]
    pub cross_check: bool,
    #[serde(default)]
    pub probes: ProbeConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub lo: f64,
    pub hi: f64,
    pub points: usize,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum MultiplierConfig {
    Smallgain { gamma: f64 },
    Passivity {},
    Constant { matrix: Vec<Vec<Entry>> },
    Table(Vec<TableEntry>),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TableEntry {
    pub omega: f64,
    pub matrix: Vec<Vec<Entry>>,
}

/// A matrix entry: `[re, im]` or a plain real number.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
pub enum Entry {
    Complex([f64; 2]),
    Real(f64),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulateParams {
    pub h1: String,
    pub h2: String,
    #[serde(default = "one")]
    pub tau: f64,
    pub input: InputConfig,
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InputConfig {
    /// `amplitude` on `[0, duration)`, zero afterwards.
    Step { amplitude: f64, duration: f64, len: usize, dt: f64 },
    /// `amplitude sin(frequency t)`.
    Sine { amplitude: f64, frequency: f64, len: usize, dt: f64 },
    /// A signal file with header `t,x1,...`; relative to the configuration file.
    Csv { path: PathBuf },
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleParams {
    pub system: String,
    #[serde(default)]
    pub probes: ProbeConfig,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArctanParams {
    #[serde(default = "default_amplitudes")]
    pub amplitudes: Vec<f64>,
    #[serde(default = "default_dt")]
    pub dt: f64,
}

pub fn default_amplitudes() -> Vec<f64> {
    vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6]
}

fn default_dt() -> f64 {
    1e-3
}

fn located(e: serde_path_to_error::Error<serde_json::Error>, prefix: &str) -> ConfigError {
    let inner = e.path().to_string();
    let path = match (prefix.is_empty(), inner == ".") {
        (true, true) => String::new(),
        (true, false) => inner,
        (false, true) => prefix.to_string(),
        (false, false) => format!("{prefix}.{inner}"),
    };
    err(&path, e.inner().to_string())
}

fn params<T: serde::de::DeserializeOwned>(value: Option<serde_json::Value>) -> ConfigResult<T> {
    let value = value.unwrap_or_else(|| serde_json::Value::Object(Default::default()));
    serde_path_to_error::deserialize(value).map_err(|e| located(e, "parameters"))
}

/// Parses a configuration document; errors carry the path of the offending value.
pub fn parse(text: &str) -> ConfigResult<Config> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| located(e, ""))?;
    let p = raw.parameters;
    let job = match raw.job {
        JobName::SmallGain => Job::SmallGain(params(p)?),
        JobName::CertifySrg => Job::CertifySrg(params(p)?),
        JobName::CertifyIqc => Job::CertifyIqc(params(p)?),
        JobName::Simulate => Job::Simulate(params(p)?),
        JobName::SrgSample => Job::SrgSample(params(p)?),
        JobName::ArctanExperiment => Job::ArctanExperiment(params(p)?),
    };
    Ok(Config { systems: raw.systems, job, seed: raw.seed, generated: raw.generated, outputs: raw.outputs })
}

fn matrix(rows: &[Vec<f64>], path: &str) -> ConfigResult<DMatrix<f64>> {
    let ncols = rows.first().map_or(0, Vec::len);
    for (i, r) in rows.iter().enumerate() {
        if r.len() != ncols {
            return Err(err(path, format!("row {i} has {} entries, row 0 has {ncols}", r.len())));
        }
        if r.iter().any(|x| !x.is_finite()) {
            return Err(err(path, format!("row {i} has a non-finite entry")));
        }
    }
    Ok(DMatrix::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

fn cmatrix(rows: &[Vec<Entry>], path: &str) -> ConfigResult<DMatrix<Complex64>> {
    let n = rows.len();
    for (i, r) in rows.iter().enumerate() {
        if r.len() != n {
            return Err(err(path, format!("matrix must be square: row {i} has {} entries, expected {n}", r.len())));
        }
    }
    Ok(DMatrix::from_fn(n, n, |i, j| match rows[i][j] {
        Entry::Complex([re, im]) => Complex64::new(re, im),
        Entry::Real(re) => Complex64::new(re, 0.0),
    }))
}

fn lti(a: &[Vec<f64>], b: &[Vec<f64>], c: &[Vec<f64>], d: &[Vec<f64>], path: &str) -> ConfigResult<StateSpace> {
    let am = matrix(a, &format!("{path}.A"))?;
    let bm = matrix(b, &format!("{path}.B"))?;
    let cm = matrix(c, &format!("{path}.C"))?;
    let dm = matrix(d, &format!("{path}.D"))?;
    let n = am.nrows();
    if am.ncols() != n {
        return Err(err(&format!("{path}.A"), format!("must be square, got {}x{}", n, am.ncols())));
    }
    if bm.nrows() != n {
        return Err(err(&format!("{path}.B"), format!("must have {n} rows (states), got {}", bm.nrows())));
    }
    if cm.ncols() != n {
        return Err(err(&format!("{path}.C"), format!("must have {n} columns (states), got {}", cm.ncols())));
    }
    if dm.nrows() != cm.nrows() || dm.ncols() != bm.ncols() {
        return Err(err(
            &format!("{path}.D"),
            format!("must be {}x{} (outputs x inputs), got {}x{}", cm.nrows(), bm.ncols(), dm.nrows(), dm.ncols()),
        ));
    }
    StateSpace::new(am, bm, cm, dm).map_err(|e| err(&format!("{path}.A"), e.to_string()))
}

fn static_fn(
    function: FnName,
    k: Option<f64>,
    limit: Option<f64>,
    width: Option<f64>,
    path: &str,
) -> ConfigResult<StaticFn> {
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| err(path, format!("fn requires `{name}`")));
    let extra = |present: bool, name: &str| -> ConfigResult<()> {
        if present {
            Err(err(&format!("{path}.{name}"), "not used by this fn"))
        } else {
            Ok(())
        }
    };
    let f = match function {
        FnName::Gain => {
            extra(limit.is_some(), "limit")?;
            extra(width.is_some(), "width")?;
            StaticFn::Gain { k: need(k, "k")? }
        }
        FnName::Saturation => {
            extra(k.is_some(), "k")?;
            extra(width.is_some(), "width")?;
            StaticFn::Saturation { limit: need(limit, "limit")? }
        }
        FnName::Deadzone => {
            extra(k.is_some(), "k")?;
            extra(limit.is_some(), "limit")?;
            StaticFn::Deadzone { width: need(width, "width")? }
        }
        other => {
            extra(k.is_some(), "k")?;
            extra(limit.is_some(), "limit")?;
            extra(width.is_some(), "width")?;
            match other {
                FnName::Identity => StaticFn::Identity,
                FnName::NegArctan => StaticFn::NegArctan,
                _ => StaticFn::Tanh,
            }
        }
    };
    f.validate().map_err(|e| err(path, e.to_string()))?;
    Ok(f)
}

/// Builds named systems, resolving `ref` nodes (cycles are rejected).
pub struct Resolver<'a> {
    systems: &'a BTreeMap<String, SystemConfig>,
    built: BTreeMap<String, OperatorSpec>,
}

impl<'a> Resolver<'a> {
    pub fn new(systems: &'a BTreeMap<String, SystemConfig>) -> Self {
        Resolver { systems, built: BTreeMap::new() }
    }

    /// The fully declared operator for system `name`; `path` locates the reference.
    pub fn system(&mut self, name: &str, path: &str) -> ConfigResult<OperatorSpec> {
        self.system_inner(name, path, &mut BTreeSet::new())
    }

    fn system_inner(&mut self, name: &str, path: &str, stack: &mut BTreeSet<String>) -> ConfigResult<OperatorSpec> {
        if let Some(op) = self.built.get(name) {
            return Ok(op.clone());
        }
        let sys = self.systems.get(name).ok_or_else(|| err(path, format!("unknown system `{name}`")))?;
        if !stack.insert(name.to_string()) {
            return Err(err(path, format!("reference cycle through system `{name}`")));
        }
        let base = format!("systems.{name}");
        let mut op = self.node(&sys.node, &format!("{base}.node"), stack)?;
        if let Some(g) = sys.declared_gain {
            op = op.with_declared_gain(g).map_err(|e| err(&format!("{base}.declared_gain"), e.to_string()))?;
        }
        match (&sys.declared_srg, &sys.srg_cover) {
            (Some(_), Some(_)) => {
                return Err(err(&base, "declare either `declared_srg` or `srg_cover`, not both"));
            }
            (Some(prims), None) => {
                if prims.is_empty() {
                    return Err(err(&format!("{base}.declared_srg"), "region must have at least one primitive"));
                }
                op = op.with_declared_srg(Region::new(prims.clone()));
            }
            (None, Some(CoverConfig::Nyquist { padding })) => {
                op = op.with_nyquist_cover(*padding).map_err(|e| err(&format!("{base}.srg_cover"), e.to_string()))?;
            }
            (None, None) => {}
        }
        stack.remove(name);
        self.built.insert(name.to_string(), op.clone());
        Ok(op)
    }

    fn node(&mut self, node: &NodeConfig, path: &str, stack: &mut BTreeSet<String>) -> ConfigResult<OperatorSpec> {
        let wrap = |e: incstab::Error| err(path, e.to_string());
        Ok(match node {
            NodeConfig::Lti { a, b, c, d } => OperatorSpec::lti(lti(a, b, c, d, path)?),
            NodeConfig::Static { function, k, limit, width } => {
                OperatorSpec::static_nl(static_fn(*function, *k, *limit, *width, path)?).map_err(wrap)?
            }
            NodeConfig::Scale { c, inner } => {
                let inner = self.node(inner, &format!("{path}.inner"), stack)?;
                OperatorSpec::scale(*c, inner).map_err(wrap)?
            }
            NodeConfig::Sum { left, right } => {
                let l = self.node(left, &format!("{path}.left"), stack)?;
                let r = self.node(right, &format!("{path}.right"), stack)?;
                OperatorSpec::sum(l, r).map_err(wrap)?
            }
            NodeConfig::Feedback { forward, backward, tau } => {
                let f = self.node(forward, &format!("{path}.forward"), stack)?;
                let b = self.node(backward, &format!("{path}.backward"), stack)?;
                OperatorSpec::feedback(f, b, *tau).map_err(wrap)?
            }
            NodeConfig::Ref { name } => self.system_inner(name, &format!("{path}.name"), stack)?,
        })
    }
}

impl ProbeConfig {
    pub fn family(&self, seed: u64, dim: usize, path: &str) -> ConfigResult<ProbeFamily> {
        let d = ProbeFamily::default();
        let fam = ProbeFamily {
            len: self.len.unwrap_or(d.len),
            dt: self.dt.unwrap_or(d.dt),
            dim,
            seed,
            sinusoids: self.sinusoids.unwrap_or(d.sinusoids),
            noise: self.noise.unwrap_or(d.noise),
            amplitudes: self.amplitudes.clone().unwrap_or(d.amplitudes),
        };
        fam.validate().map_err(|e| err(path, e.to_string()))?;
        Ok(fam)
    }
}

impl GridConfig {
    pub fn build(&self, path: &str) -> ConfigResult<Vec<f64>> {
        if !(self.lo > 0.0 && self.hi > self.lo && self.hi.is_finite()) {
            return Err(err(path, "need 0 < lo < hi < inf"));
        }
        if self.points < 2 {
            return Err(err(&format!("{path}.points"), "need at least 2 points"));
        }
        Ok(log_grid(self.lo, self.hi, self.points, true))
    }
}

impl MultiplierConfig {
    /// Block sizes default to `(outputs, inputs)` of the LTI block.
    pub fn build(&self, n_y: usize, n_w: usize, path: &str) -> ConfigResult<Multiplier> {
        let res = match self {
            MultiplierConfig::Smallgain { gamma } => {
                if n_y != n_w {
                    return Err(err(path, format!("small-gain preset needs a square LTI block, got {n_y}x{n_w}")));
                }
                Multiplier::small_gain(*gamma, n_y)
            }
            MultiplierConfig::Passivity {} => {
                if n_y != n_w {
                    return Err(err(path, format!("passivity preset needs a square LTI block, got {n_y}x{n_w}")));
                }
                Multiplier::passivity(n_y)
            }
            MultiplierConfig::Constant { matrix } => {
                let p = format!("{path}.constant.matrix");
                let m = cmatrix(matrix, &p)?;
                if m.nrows() != n_y + n_w {
                    return Err(err(
                        &p,
                        format!("expected size {0}x{0} (n_y + n_w), got {1}x{1}", n_y + n_w, m.nrows()),
                    ));
                }
                Multiplier::constant(m, n_y, n_w)
            }
            MultiplierConfig::Table(entries) => {
                let mut out = Vec::with_capacity(entries.len());
                for (i, e) in entries.iter().enumerate() {
                    let p = format!("{path}.table[{i}].matrix");
                    let m = cmatrix(&e.matrix, &p)?;
                    if m.nrows() != n_y + n_w {
                        return Err(err(
                            &p,
                            format!("expected size {0}x{0} (n_y + n_w), got {1}x{1}", n_y + n_w, m.nrows()),
                        ));
                    }
                    out.push((e.omega, m));
                }
                Multiplier::table(out, n_y, n_w)
            }
        };
        res.map_err(|e| err(path, e.to_string()))
    }
}

impl Config {
    /// Output paths given in the document, resolved against `base` (the
    /// configuration file's directory); rejects outputs the job cannot produce.
    pub fn output_paths(&self, base: &Path) -> ConfigResult<BTreeMap<&'static str, PathBuf>> {
        let allowed = self.job.allowed_outputs();
        let mut out = BTreeMap::new();
        for (key, p) in [
            ("certificate", &self.outputs.certificate),
            ("csv", &self.outputs.csv),
            ("svg", &self.outputs.svg),
            ("report", &self.outputs.report),
        ] {
            if let Some(p) = p {
                if !allowed.contains(&key) {
                    return Err(err(
                        &format!("outputs.{key}"),
                        format!(
                            "job {} does not produce this output (allowed: {})",
                            self.job.name(),
                            allowed.join(", ")
                        ),
                    ));
                }
                out.insert(key, if p.is_absolute() { p.clone() } else { base.join(p) });
            }
        }
        Ok(out)
    }
}
