//! Job execution: every job computes all of its artifacts in memory first;
//! they are written only once the computation has finished.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use incstab::certify::{certify_relaxed, certify_srg, check_small_gain, empirical_cross_check, Timestamps, Verdict};
use incstab::feedback::{arctan_experiment, solve_feedback, SolveOptions};
use incstab::iqc::certify_iqc;
use incstab::operators::OperatorSpec;
use incstab::srg::{sample_srg, Primitive, Region};
use incstab::{Error, Signal};
use num_complex::Complex64;
use serde::Serialize;

use crate::config::{
    ArctanParams, Config, ConfigError, InputConfig, IqcParams, Job, ProbeConfig, Resolver, SampleParams,
    SimulateParams, SmallGainParams, SrgParams,
};
use crate::svg;

/// Whether the job's claim was established.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    /// Certified, or the computation succeeded.
    Success,
    /// Refused, falsified, or diverged.
    Negative,
}

/// A finished job: status, a one-line summary, and artifact contents keyed
/// by output name.
#[derive(Debug)]
pub struct Outcome {
    pub status: Status,
    pub summary: String,
    pub artifacts: BTreeMap<&'static str, Vec<u8>>,
}

fn cfg_err(e: ConfigError) -> anyhow::Error {
    anyhow!(e)
}

fn json_bytes<T: Serialize>(value: &T) -> Result<Vec<u8>> {
    let mut out = serde_json::to_vec_pretty(value)?;
    out.push(b'\n');
    Ok(out)
}

/// Certificate or refusal document, stamped with the seed and timestamps.
fn verdict_document(verdict: &Verdict, cfg: &Config) -> Result<Vec<u8>> {
    let mut value = serde_json::to_value(verdict)?;
    if let Some(obj) = value.as_object_mut() {
        obj.insert("seed".into(), cfg.seed.into());
        obj.insert("timestamps".into(), serde_json::json!({ "generated": cfg.generated }));
    }
    json_bytes(&value)
}

fn stamp(verdict: &mut Verdict, cfg: &Config) {
    if let Some(cert) = verdict.certificate_mut() {
        cert.seed = Some(cfg.seed);
        cert.timestamps = Timestamps { generated: cfg.generated.clone() };
    }
}

fn verdict_summary(verdict: &Verdict) -> String {
    match verdict {
        Verdict::Certified(c) => format!(
            "certified: route={} gamma={} r_min={} schedule(nu={}, tau_step={}, steps={}){}",
            serde_json::to_value(c.route).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default(),
            c.gamma,
            c.r_min,
            c.schedule.nu,
            c.schedule.tau_step,
            c.schedule.steps,
            c.empirical
                .map(|e| format!(" empirical max ratio={} over {} pairs", e.max_ratio, e.pairs))
                .unwrap_or_default()
        ),
        Verdict::Refused(r) => format!("refused: {}", r.reason),
    }
}

fn probe_pairs(probes: &ProbeConfig, seed: u64, dim: usize) -> Result<Vec<(Signal, Signal)>> {
    Ok(probes.family(seed, dim, "parameters.probes").map_err(cfg_err)?.pairs()?)
}

/// Cross-checks a certificate against the closed loop on the probe family.
fn cross_check(
    verdict: &mut Verdict,
    h1: &OperatorSpec,
    h2: &OperatorSpec,
    probes: &ProbeConfig,
    seed: u64,
) -> Result<()> {
    if let Some(cert) = verdict.certificate_mut() {
        let pairs = probe_pairs(probes, seed, h1.in_dim().or(h2.out_dim()).unwrap_or(1))?;
        empirical_cross_check(cert, h1, h2, &pairs, &SolveOptions::default())
            .context("certificate failed its empirical cross-check")?;
    }
    Ok(())
}

fn certificate_outcome(mut verdict: Verdict, cfg: &Config, svg_doc: Option<String>) -> Result<Outcome> {
    stamp(&mut verdict, cfg);
    let mut artifacts = BTreeMap::new();
    artifacts.insert("certificate", verdict_document(&verdict, cfg)?);
    if let Some(s) = svg_doc {
        artifacts.insert("svg", s.into_bytes());
    }
    Ok(Outcome {
        status: if verdict.is_certified() { Status::Success } else { Status::Negative },
        summary: verdict_summary(&verdict),
        artifacts,
    })
}

fn small_gain(p: &SmallGainParams, cfg: &Config, res: &mut Resolver) -> Result<Outcome> {
    let systems = match (&p.h1, &p.h2) {
        (Some(a), Some(b)) => {
            Some((res.system(a, "parameters.h1").map_err(cfg_err)?, res.system(b, "parameters.h2").map_err(cfg_err)?))
        }
        (None, None) => None,
        _ => bail!("parameters: give both h1 and h2, or neither"),
    };
    let (g1, g2) = match (p.gamma1, p.gamma2, &systems) {
        (Some(a), Some(b), _) => (a, b),
        (None, None, Some((h1, h2))) => (
            h1.declared_inc_gain().ok_or_else(|| anyhow!("parameters.h1: system has no declared_gain"))?,
            h2.declared_inc_gain().ok_or_else(|| anyhow!("parameters.h2: system has no declared_gain"))?,
        ),
        (None, None, None) => bail!("parameters: give gamma1/gamma2 or systems h1/h2"),
        _ => bail!("parameters: give both gamma1 and gamma2, or neither"),
    };
    let mut verdict = check_small_gain(g1, g2)?;
    if let (true, Some((h1, h2))) = (p.cross_check, &systems) {
        cross_check(&mut verdict, h1, h2, &p.probes, cfg.seed)?;
    }
    certificate_outcome(verdict, cfg, None)
}

fn certify_srg_job(p: &SrgParams, cfg: &Config, res: &mut Resolver, want_svg: bool) -> Result<Outcome> {
    let h1 = res.system(&p.h1, "parameters.h1").map_err(cfg_err)?;
    let h2 = res.system(&p.h2, "parameters.h2").map_err(cfg_err)?;
    if p.well_posedness_assumed && !p.relaxed {
        bail!("parameters.well_posedness_assumed: only meaningful with relaxed = true");
    }
    let mut verdict =
        if p.relaxed { certify_relaxed(&h1, &h2, p.well_posedness_assumed)? } else { certify_srg(&h1, &h2)? };
    if p.cross_check {
        cross_check(&mut verdict, &h1, &h2, &p.probes, cfg.seed)?;
    }
    let svg_doc = if want_svg {
        // inverse SRG of H1 against -chord(SRG(H2)) at tau = 1
        let s1_inv = h1.declared_srg().map(|r| r.conjugate_closure().invert()).transpose()?;
        let s2 = h2.declared_srg().map(|r| r.conjugate_closure().chord_closure()).transpose()?;
        let mut prims: Vec<Primitive> = Vec::new();
        prims.extend(s1_inv.iter().flat_map(|r| r.primitives().to_vec()));
        prims.extend(s2.iter().flat_map(|r| r.negate().primitives().to_vec()));
        Some(svg::srg_plot(&[], &prims, Some(cfg.seed), "inverse SRG of H1 and -chord(SRG of H2)"))
    } else {
        None
    };
    certificate_outcome(verdict, cfg, svg_doc)
}

fn certify_iqc_job(p: &IqcParams, cfg: &Config, res: &mut Resolver) -> Result<Outcome> {
    let h1 = res.system(&p.h1, "parameters.h1").map_err(cfg_err)?;
    let h2 = res.system(&p.h2, "parameters.h2").map_err(cfg_err)?;
    let (Some(n_y), Some(n_w)) = (h1.out_dim(), h1.in_dim()) else {
        bail!("parameters.h1: the IQC route needs an LTI h1");
    };
    let m = p.multiplier.build(n_y, n_w, "parameters.multiplier").map_err(cfg_err)?;
    let grid = p.grid.as_ref().map(|g| g.build("parameters.grid")).transpose().map_err(cfg_err)?;
    let y_pairs = probe_pairs(&p.probes, cfg.seed, n_y)?;
    let mut verdict = certify_iqc(&h1, &h2, &m, grid.as_deref(), &y_pairs)?;
    if p.cross_check {
        cross_check(&mut verdict, &h1, &h2, &p.probes, cfg.seed)?;
    }
    certificate_outcome(verdict, cfg, None)
}

fn input_signal(input: &InputConfig, base: &Path) -> Result<Signal> {
    Ok(match input {
        InputConfig::Step { amplitude, duration, len, dt } => {
            Signal::from_fn(*len, *dt, |t| if t < *duration { *amplitude } else { 0.0 })?
        }
        InputConfig::Sine { amplitude, frequency, len, dt } => {
            Signal::from_fn(*len, *dt, |t| amplitude * (frequency * t).sin())?
        }
        InputConfig::Csv { path } => {
            let full = if path.is_absolute() { path.clone() } else { base.join(path) };
            let file = fs::File::open(&full).with_context(|| format!("parameters.input.path: {}", full.display()))?;
            Signal::read_csv(file).with_context(|| format!("parameters.input.path: {}", full.display()))?
        }
    })
}

#[derive(Serialize)]
struct SimulationReport<'a> {
    job: &'static str,
    seed: u64,
    tau: f64,
    converged: bool,
    iterates: usize,
    contraction_estimate: f64,
    equation_residual: Option<f64>,
    tolerance: f64,
    final_residual: Option<f64>,
    error: Option<&'a str>,
}

fn signals_csv(seed: u64, parts: &[(&str, &Signal)]) -> String {
    let mut out = format!("# seed={seed}\nt");
    for (name, s) in parts {
        for j in 1..=s.dim() {
            let _ = write!(out, ",{name}{j}");
        }
    }
    out.push('\n');
    let (len, dt) = (parts[0].1.len(), parts[0].1.dt());
    for k in 0..len {
        let _ = write!(out, "{}", k as f64 * dt);
        for (_, s) in parts {
            for x in s.sample(k) {
                let _ = write!(out, ",{x}");
            }
        }
        out.push('\n');
    }
    out
}

fn simulate(p: &SimulateParams, cfg: &Config, res: &mut Resolver, base: &Path) -> Result<Outcome> {
    let h1 = res.system(&p.h1, "parameters.h1").map_err(cfg_err)?;
    let h2 = res.system(&p.h2, "parameters.h2").map_err(cfg_err)?;
    if !(0.0..=1.0).contains(&p.tau) {
        bail!("parameters.tau: must lie in [0, 1], got {}", p.tau);
    }
    let u = input_signal(&p.input, base)?;
    let mut artifacts = BTreeMap::new();
    match solve_feedback(&u, &h1, &h2, p.tau, &SolveOptions::default()) {
        Ok(sol) => {
            let t = &sol.trace;
            let report = SimulationReport {
                job: "simulate",
                seed: cfg.seed,
                tau: p.tau,
                converged: true,
                iterates: t.iterates,
                contraction_estimate: t.contraction_estimate,
                equation_residual: Some(t.equation_residual),
                tolerance: t.tolerance,
                final_residual: t.residuals.last().copied(),
                error: None,
            };
            artifacts.insert("report", json_bytes(&report)?);
            artifacts.insert("csv", signals_csv(cfg.seed, &[("u", &u), ("e", &sol.e), ("y", &sol.y)]).into_bytes());
            Ok(Outcome {
                status: Status::Success,
                summary: format!(
                    "converged in {} iterations (contraction estimate {}, loop-equation residual {:e})",
                    t.iterates, t.contraction_estimate, t.equation_residual
                ),
                artifacts,
            })
        }
        Err(Error::Divergence { trace }) => {
            let msg = format!("feedback solve diverged after {} iterations", trace.iterates);
            let report = SimulationReport {
                job: "simulate",
                seed: cfg.seed,
                tau: p.tau,
                converged: false,
                iterates: trace.iterates,
                contraction_estimate: trace.contraction_estimate,
                equation_residual: None,
                tolerance: trace.tolerance,
                final_residual: trace.residuals.last().copied(),
                error: Some(&msg),
            };
            artifacts.insert("report", json_bytes(&report)?);
            Ok(Outcome { status: Status::Negative, summary: msg.clone(), artifacts })
        }
        Err(e) => Err(e.into()),
    }
}

fn srg_sample(p: &SampleParams, cfg: &Config, res: &mut Resolver) -> Result<Outcome> {
    let op = res.system(&p.system, "parameters.system").map_err(cfg_err)?;
    let pairs = probe_pairs(&p.probes, cfg.seed, op.in_dim().unwrap_or(1))?;
    let cloud = sample_srg(&op, &pairs)?;
    let declared = op.declared_srg().map(Region::conjugate_closure);
    let outside = declared.as_ref().map_or(0, |r| cloud.outside(r, 1e-9).count());

    let mut csv = format!("# seed={}\nre,im,pair\n", cfg.seed);
    for (z, id) in cloud.points.iter().zip(&cloud.pair_ids) {
        let _ = writeln!(csv, "{},{},{id}", z.re, z.im);
    }
    let prims = declared.as_ref().map(|r| r.primitives().to_vec()).unwrap_or_default();
    let plot = svg::srg_plot(&cloud.points, &prims, Some(cfg.seed), &format!("sampled SRG of {}", p.system));
    let mut artifacts = BTreeMap::new();
    artifacts.insert("csv", csv.into_bytes());
    artifacts.insert("svg", plot.into_bytes());
    let summary = format!(
        "{} points from {} pairs, max radius {}{}",
        cloud.len(),
        pairs.len(),
        cloud.max_radius(),
        match &declared {
            Some(_) => format!(", {outside} outside the declared region"),
            None => String::new(),
        }
    );
    Ok(Outcome { status: if outside == 0 { Status::Success } else { Status::Negative }, summary, artifacts })
}

#[derive(Serialize)]
struct ArctanReport<'a> {
    job: &'static str,
    seed: u64,
    dt: f64,
    reference_slope: f64,
    table: &'a incstab::feedback::ArctanTable,
}

fn arctan(p: &ArctanParams, cfg: &Config) -> Result<Outcome> {
    let table = arctan_experiment(&p.amplitudes, p.dt).context("parameters.amplitudes")?;
    let mut csv = format!("# seed={}\na,ratio\n", cfg.seed);
    for r in &table.rows {
        let _ = writeln!(csv, "{},{}", r.a, r.ratio);
    }
    let rows: Vec<(f64, f64)> = table.rows.iter().map(|r| (r.a, r.ratio)).collect();
    let plot = svg::loglog_plot(
        &rows,
        -2.0 / 3.0,
        Some(cfg.seed),
        "closed-loop ratio vs amplitude, -arctan in unity feedback",
    );
    let report =
        ArctanReport { job: "arctan_experiment", seed: cfg.seed, dt: p.dt, reference_slope: -2.0 / 3.0, table: &table };
    let mut artifacts = BTreeMap::new();
    artifacts.insert("csv", csv.into_bytes());
    artifacts.insert("svg", plot.into_bytes());
    artifacts.insert("report", json_bytes(&report)?);
    Ok(Outcome {
        status: if table.monotone { Status::Success } else { Status::Negative },
        summary: format!(
            "{} amplitudes, log-log slope {}, monotone: {}",
            table.rows.len(),
            table.slope,
            table.monotone
        ),
        artifacts,
    })
}

/// Runs a parsed configuration; `base` resolves relative input paths.
pub fn execute(cfg: &Config, base: &Path, want_svg: bool) -> Result<Outcome> {
    let mut res = Resolver::new(&cfg.systems);
    match &cfg.job {
        Job::SmallGain(p) => small_gain(p, cfg, &mut res),
        Job::CertifySrg(p) => certify_srg_job(p, cfg, &mut res, want_svg),
        Job::CertifyIqc(p) => certify_iqc_job(p, cfg, &mut res),
        Job::Simulate(p) => simulate(p, cfg, &mut res, base),
        Job::SrgSample(p) => srg_sample(p, cfg, &mut res),
        Job::ArctanExperiment(p) => arctan(p, cfg),
    }
}

/// Static checks only: systems referenced by the job resolve, parameter
/// ranges and outputs are valid. No certification or simulation runs.
pub fn validate(cfg: &Config, base: &Path) -> std::result::Result<(), ConfigError> {
    cfg.output_paths(base)?;
    let mut res = Resolver::new(&cfg.systems);
    for name in cfg.systems.keys() {
        res.system(name, &format!("systems.{name}"))?;
    }
    let reference = |res: &mut Resolver, name: &str, path: &str| res.system(name, path).map(|_| ());
    let check = |ok: bool, path: &str, msg: &str| {
        if ok {
            Ok(())
        } else {
            Err(ConfigError { path: path.into(), message: msg.into() })
        }
    };
    match &cfg.job {
        Job::SmallGain(p) => {
            if let Some(h1) = &p.h1 {
                reference(&mut res, h1, "parameters.h1")?;
            }
            if let Some(h2) = &p.h2 {
                reference(&mut res, h2, "parameters.h2")?;
            }
            check(p.gamma1.is_none() == p.gamma2.is_none(), "parameters", "give both gamma1 and gamma2, or neither")?;
            check(p.h1.is_none() == p.h2.is_none(), "parameters", "give both h1 and h2, or neither")?;
            check(p.gamma1.is_some() || p.h1.is_some(), "parameters", "give gamma1/gamma2 or systems h1/h2")?;
            for (path, g) in [("parameters.gamma1", p.gamma1), ("parameters.gamma2", p.gamma2)] {
                check(g.is_none_or(|g| g >= 0.0 && g.is_finite()), path, "must be finite and >= 0")?;
            }
            p.probes.family(cfg.seed, 1, "parameters.probes")?;
        }
        Job::CertifySrg(p) => {
            reference(&mut res, &p.h1, "parameters.h1")?;
            reference(&mut res, &p.h2, "parameters.h2")?;
            p.probes.family(cfg.seed, 1, "parameters.probes")?;
        }
        Job::CertifyIqc(p) => {
            let h1 = res.system(&p.h1, "parameters.h1")?;
            reference(&mut res, &p.h2, "parameters.h2")?;
            let (Some(n_y), Some(n_w)) = (h1.out_dim(), h1.in_dim()) else {
                return Err(ConfigError {
                    path: "parameters.h1".into(),
                    message: "the IQC route needs an LTI h1".into(),
                });
            };
            p.multiplier.build(n_y, n_w, "parameters.multiplier")?;
            if let Some(g) = &p.grid {
                g.build("parameters.grid")?;
            }
            p.probes.family(cfg.seed, 1, "parameters.probes")?;
        }
        Job::Simulate(p) => {
            reference(&mut res, &p.h1, "parameters.h1")?;
            reference(&mut res, &p.h2, "parameters.h2")?;
            check((0.0..=1.0).contains(&p.tau), "parameters.tau", "must lie in [0, 1]")?;
            if let InputConfig::Step { len, dt, .. } | InputConfig::Sine { len, dt, .. } = &p.input {
                check(*len >= 1, "parameters.input.len", "must be >= 1")?;
                check(*dt > 0.0 && dt.is_finite(), "parameters.input.dt", "must be positive")?;
            }
        }
        Job::SrgSample(p) => {
            reference(&mut res, &p.system, "parameters.system")?;
            p.probes.family(cfg.seed, 1, "parameters.probes")?;
        }
        Job::ArctanExperiment(p) => {
            check(!p.amplitudes.is_empty(), "parameters.amplitudes", "must not be empty")?;
            for (i, a) in p.amplitudes.iter().enumerate() {
                check(*a > 0.0 && *a <= 0.1, &format!("parameters.amplitudes[{i}]"), "must lie in (0, 0.1]")?;
            }
            check(p.dt > 0.0 && p.dt <= 0.1, "parameters.dt", "must lie in (0, 0.1]")?;
        }
    }
    Ok(())
}

/// Writes all artifacts atomically: each goes to a temporary file in its
/// destination directory, and nothing is renamed into place until every
/// file has been written.
pub fn write_artifacts(files: &[(PathBuf, Vec<u8>)]) -> Result<()> {
    let mut staged = Vec::with_capacity(files.len());
    for (path, bytes) in files {
        let dir = match path.parent() {
            Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
            _ => PathBuf::from("."),
        };
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        let mut tmp = tempfile::NamedTempFile::new_in(&dir).with_context(|| format!("staging {}", path.display()))?;
        tmp.write_all(bytes).with_context(|| format!("writing {}", path.display()))?;
        tmp.as_file().sync_all()?;
        staged.push((tmp, path));
    }
    for (tmp, path) in staged {
        tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    }
    Ok(())
}

/// Reads a cloud CSV with `re,im[,pair]` columns (`#` lines are comments).
pub fn read_cloud(text: &str) -> Result<Vec<Complex64>> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().context("cloud CSV header")?.clone();
    let col =
        |name: &str| header.iter().position(|h| h == name).ok_or_else(|| anyhow!("cloud CSV header lacks `{name}`"));
    let (ire, iim) = (col("re")?, col("im")?);
    let mut out = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.with_context(|| format!("cloud CSV row {}", row + 1))?;
        let get = |i: usize| -> Result<f64> {
            record
                .get(i)
                .ok_or_else(|| anyhow!("cloud CSV row {}: missing column", row + 1))?
                .parse::<f64>()
                .with_context(|| format!("cloud CSV row {}", row + 1))
        };
        out.push(Complex64::new(get(ire)?, get(iim)?));
    }
    Ok(out)
}

/// Parses a region literal: JSON (`{"disc":{"re":0,"im":0,"r":1}}`) or the
/// compact forms `disc:RE,IM,R`, `halfplane:NRE,NIM,OFFSET`, `discext:RE,IM,R`.
pub fn parse_region_literal(text: &str) -> Result<Primitive> {
    let t = text.trim();
    if t.starts_with('{') {
        return serde_json::from_str(t).with_context(|| format!("region literal `{t}`"));
    }
    let (kind, args) = t.split_once(':').ok_or_else(|| anyhow!("region literal `{t}`: expected KIND:A,B,C"))?;
    let v: Vec<f64> = args
        .split(',')
        .map(|x| x.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .with_context(|| format!("region literal `{t}`"))?;
    let [a, b, c] = v[..] else { bail!("region literal `{t}`: expected three numbers") };
    let z = Complex64::new(a, b);
    Ok(match kind {
        "disc" => Primitive::disc(z, c)?,
        "halfplane" => Primitive::half_plane(z, c)?,
        "discext" => Primitive::disc_exterior(z, c)?,
        other => bail!("region literal `{t}`: unknown kind `{other}`"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn region_literals() {
        assert_eq!(parse_region_literal("disc:0,0,1").unwrap(), Primitive::real_disc(0.0, 1.0));
        assert_eq!(parse_region_literal(r#"{"disc":{"re":0,"im":0,"r":1}}"#).unwrap(), Primitive::real_disc(0.0, 1.0));
        assert!(parse_region_literal("disc:0,1").is_err());
        assert!(parse_region_literal("blob:0,0,1").is_err());
        assert!(parse_region_literal("disc:0,0,-1").is_err());
    }

    #[test]
    fn cloud_csv() {
        let pts = read_cloud("# seed=0\nre,im,pair\n0.5,0.25,0\n0.5,-0.25,0\n").unwrap();
        assert_eq!(pts, vec![Complex64::new(0.5, 0.25), Complex64::new(0.5, -0.25)]);
        assert!(read_cloud("x,y\n1,2\n").is_err());
    }

    #[test]
    fn atomic_write_creates_files() {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("sub/a.txt");
        write_artifacts(&[(a.clone(), b"hello".to_vec())]).unwrap();
        assert_eq!(fs::read(&a).unwrap(), b"hello");
        assert_eq!(fs::read_dir(dir.path().join("sub")).unwrap().count(), 1);
    }
}
