//! Batch front end: load a model, certify it, and report truncation bounds,
//! measured errors or coupled sample paths.

use std::fmt::Write as _;
use std::path::PathBuf;

use rayon::prelude::*;
use serde::Serialize;

use bmtrunc::block_matrix::{
    block_dominates, closed_classes, is_block_monotone, lcb_truncate, BlockStochasticMatrix,
};
use bmtrunc::coupling::{run_coupled_dominance, run_coupled_monotone, StreamId};
use bmtrunc::drift_bounds::{
    compare_against_oracle, default_m_max, optimized_bounds, verify_certificate, BoundReport,
    BoundRoute, DriftCertificate, DEFAULT_VERIFY_TOLERANCE,
};
use bmtrunc::gig1::{
    build_certificate_gig1, mean_drift, mg1_certificate, mg1_mismatches, AlphaOptions,
    GIG1DriftData, GIG1Model,
};
use bmtrunc::io::{reports_to_json, to_json_string, write_reports_csv, Model, ModelFile};
use bmtrunc::Error;

pub const EXIT_OK: i32 = 0;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_BOUND_VIOLATED: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Validate,
    Bound,
    Compare,
    Couple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

/// Everything one run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: PathBuf,
    pub command: Command,
    pub n: Vec<usize>,
    /// Defaults to `10 * ceil(1 / (1 - gamma))`.
    pub m_max: Option<usize>,
    pub reference_level: Option<usize>,
    pub verify_tol: f64,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    pub couple: CoupleConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CoupleConfig {
    pub steps: usize,
    pub paths: usize,
    pub low: usize,
    pub high: usize,
    pub phase: usize,
    /// Levels of the finite corner used for chains with a tail.
    pub corner: usize,
    /// Directory for per-path trajectory CSVs.
    pub dump_dir: Option<PathBuf>,
}

impl Default for CoupleConfig {
    fn default() -> Self {
        Self {
            steps: 1000,
            paths: 1000,
            low: 0,
            high: 5,
            phase: 0,
            corner: 400,
            dump_dir: None,
        }
    }
}

impl RunConfig {
    pub fn new(model: impl Into<PathBuf>, command: Command) -> Self {
        Self {
            model: model.into(),
            command,
            n: Vec::new(),
            m_max: None,
            reference_level: None,
            verify_tol: DEFAULT_VERIFY_TOLERANCE,
            seed: 0,
            out: None,
            format: Format::Csv,
            couple: CoupleConfig::default(),
        }
    }

    fn check(&self) -> Result<(), CliError> {
        if self.n.contains(&0) {
            return Err(CliError::Validation("n values must be >= 1".into()));
        }
        if matches!(self.command, Command::Bound | Command::Compare) && self.n.is_empty() {
            return Err(CliError::Validation("--n is required".into()));
        }
        if self.m_max == Some(0) {
            return Err(CliError::Validation("--m-max must be >= 1".into()));
        }
        if self.command == Command::Compare {
            if let (Some(r), Some(&top)) = (self.reference_level, self.n.iter().max()) {
                if r <= top {
                    return Err(CliError::Validation(format!(
                        "--reference-level {r} must exceed the largest n = {top}"
                    )));
                }
            }
        }
        if self.command == Command::Couple && self.couple.low > self.couple.high {
            return Err(CliError::Validation("--low must not exceed --high".into()));
        }
        Ok(())
    }
}

/// Parses `"10,20,50"`, `"10..50"` (inclusive) and `"10..50:5"`, or any
/// comma-separated mix of them.
pub fn parse_n_list(text: &str) -> Result<Vec<usize>, String> {
    let mut out = Vec::new();
    for part in text.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| format!("{s:?} is not a non-negative integer"))
        };
        match part.split_once("..") {
            None => out.push(num(part)?),
            Some((a, rest)) => {
                let (b, step) = match rest.split_once(':') {
                    Some((b, s)) => (num(b)?, num(s)?),
                    None => (num(rest)?, 1),
                };
                let a = num(a)?;
                if step == 0 || a > b {
                    return Err(format!("bad range {part:?}"));
                }
                out.extend((a..=b).step_by(step));
            }
        }
    }
    if out.is_empty() {
        return Err("empty n list".into());
    }
    Ok(out)
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => EXIT_VALIDATION,
            CliError::Io(_) => EXIT_IO,
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Validation(e.to_string())
    }
}

/// Rendered output and the exit status it implies.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub output: String,
    pub status: i32,
    pub message: Option<String>,
}

impl Outcome {
    fn ok(output: String) -> Self {
        Self {
            output,
            status: EXIT_OK,
            message: None,
        }
    }
}

/// How the certificate was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum CertificateSource {
    /// Closed form for the M/G/1 boundary.
    Mg1Boundary,
    /// GI/G/1 construction lifted to a level-0 boundary.
    Gig1Lifted,
    /// Read from the model file.
    Supplied,
}

/// A certificate ready for bounding, with the chain it certifies.
#[derive(Debug, Clone)]
pub struct Certified {
    pub cert: DriftCertificate,
    pub source: CertificateSource,
    pub route: BoundRoute,
    pub drift_data: Option<GIG1DriftData>,
}

fn load(config: &RunConfig) -> Result<ModelFile, CliError> {
    ModelFile::from_path(&config.model).map_err(|e| match e {
        bmtrunc::io::LoadError::Io(e) => {
            CliError::Io(format!("{}: {e}", config.model.display()))
        }
        bmtrunc::io::LoadError::Invalid(e) => CliError::Validation(e.to_string()),
    })
}

fn as_gig1(model: &Model) -> Option<&GIG1Model> {
    match model {
        Model::Gig1(m) => Some(m),
        _ => None,
    }
}

fn derive_certificate(
    model: &Model,
) -> Result<(DriftCertificate, CertificateSource, Option<GIG1DriftData>), CliError> {
    let Some(g) = as_gig1(model) else {
        return Err(CliError::Validation(
            "no certificate available: supply one in the model file".into(),
        ));
    };
    let opts = AlphaOptions::default();
    let result = if mg1_mismatches(g).is_empty() {
        mg1_certificate(g, &opts).map(|c| (c, CertificateSource::Mg1Boundary, None))
    } else {
        build_certificate_gig1(g, &opts).map(|(d, c)| (c, CertificateSource::Gig1Lifted, Some(d)))
    };
    result.map_err(|e| CliError::Validation(format!("no certificate available: {e}")))
}

/// Finds or checks a certificate. With a dominating model, the certificate
/// belongs to it and the model must be block-wise dominated by it.
pub fn certify(file: &ModelFile, tol: f64) -> Result<Certified, CliError> {
    let target = file.model.matrix()?;
    let (certified_model, route) = match &file.dominating {
        Some(dom) => (&dom.model, BoundRoute::Dominated),
        None => (&file.model, BoundRoute::Direct),
    };
    let certified = certified_model.matrix()?;
    if !is_block_monotone(&certified, certified.row_tolerance()) {
        return Err(CliError::Validation(match route {
            BoundRoute::Direct => "model is not block-monotone".into(),
            BoundRoute::Dominated => "dominating model is not block-monotone".into(),
        }));
    }
    if route == BoundRoute::Dominated && !block_dominates(&target, &certified, target.row_tolerance())? {
        return Err(CliError::Validation(
            "model is not block-wise dominated by the dominating model".into(),
        ));
    }
    let (cert, source, drift_data) = match &file.certificate {
        Some(c) => (c.clone(), CertificateSource::Supplied, None),
        None => derive_certificate(certified_model)?,
    };
    if cert.boundary_level() != 0 {
        return Err(CliError::Validation(
            "certificate must have boundary level K = 0".into(),
        ));
    }
    let check = verify_certificate(&certified, &cert, tol)?;
    if !check.is_valid() {
        let v = &check.violations[0];
        return Err(CliError::Validation(format!(
            "certificate fails the drift check at level {:?}, phase {} ({} > {}); {} violations",
            v.k,
            v.i,
            v.lhs,
            v.rhs,
            check.violations.len()
        )));
    }
    Ok(Certified {
        cert,
        source,
        route,
        drift_data,
    })
}

#[derive(Debug, Serialize)]
struct ValidationReport {
    d: usize,
    kind: &'static str,
    stored_levels: usize,
    stochastic: bool,
    block_monotone: bool,
    irreducible: Option<bool>,
    mean_drift: Option<f64>,
    dominated: Option<bool>,
    route: Option<String>,
    certificate_source: Option<CertificateSource>,
    certificate: Option<DriftCertificate>,
    drift_data: Option<GIG1DriftData>,
    message: Option<String>,
}

fn irreducible(model: &Model, p: &BlockStochasticMatrix) -> Option<bool> {
    match model {
        Model::Finite(_) => closed_classes(p)
            .ok()
            .map(|c| c.len() == 1 && c[0].len() == p.num_states()),
        // The phase kernel is irreducible by construction; the level
        // process is checked through the drift sign.
        _ => None,
    }
}

/// Structure checks plus the certificate route that applies, as JSON.
pub fn cmd_validate(config: &RunConfig) -> Result<Outcome, CliError> {
    config.check()?;
    let file = load(config)?;
    let p = file.model.matrix()?;
    let kind = match &file.model {
        Model::Finite(_) => "finite",
        Model::Gig1(_) => "gig1",
        Model::Perturbed { .. } => "gig1-perturbed",
    };
    let drift_model = match &file.model {
        Model::Gig1(m) => Some(m),
        Model::Perturbed { base, .. } => Some(base),
        Model::Finite(_) => None,
    };
    let drift = drift_model.map(mean_drift).transpose()?;
    let dominated = match &file.dominating {
        Some(d) => Some(block_dominates(&p, &d.model.matrix()?, p.row_tolerance())?),
        None => None,
    };
    let mut report = ValidationReport {
        d: p.d(),
        kind,
        stored_levels: p.levels(),
        stochastic: true,
        block_monotone: is_block_monotone(&p, p.row_tolerance()),
        irreducible: irreducible(&file.model, &p),
        mean_drift: drift,
        dominated,
        route: None,
        certificate_source: None,
        certificate: None,
        drift_data: None,
        message: None,
    };
    match certify(&file, config.verify_tol) {
        Ok(c) => {
            report.route = Some(
                match (c.route, c.source) {
                    (BoundRoute::Dominated, _) => "dominated",
                    (_, CertificateSource::Mg1Boundary) => "mg1-boundary",
                    (_, CertificateSource::Gig1Lifted) => "gig1-lifted",
                    (_, CertificateSource::Supplied) => "supplied",
                }
                .to_string(),
            );
            report.certificate_source = Some(c.source);
            report.certificate = Some(c.cert);
            report.drift_data = c.drift_data;
        }
        Err(e) => report.message = Some(e.to_string()),
    }
    Ok(Outcome::ok(to_json_string(&report) + "\n"))
}

fn render_reports(reports: &[BoundReport], format: Format) -> String {
    match format {
        Format::Csv => {
            let mut buf = Vec::new();
            write_reports_csv(reports, &mut buf).expect("writing to memory");
            String::from_utf8(buf).expect("ASCII output")
        }
        Format::Json => reports_to_json(reports) + "\n",
    }
}

/// Bounds at each requested `n`, optimised over `m`.
pub fn cmd_bound(config: &RunConfig) -> Result<Outcome, CliError> {
    config.check()?;
    let file = load(config)?;
    let c = certify(&file, config.verify_tol)?;
    let m_max = config.m_max.unwrap_or_else(|| default_m_max(c.cert.gamma()));
    let reports = config
        .n
        .par_iter()
        .map(|&n| optimized_bounds(&c.cert, n, m_max, None))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Outcome::ok(render_reports(&reports, config.format)))
}

/// Bounds next to measured errors. Exit status 3 if any error exceeds its
/// bound.
pub fn cmd_compare(config: &RunConfig) -> Result<Outcome, CliError> {
    config.check()?;
    let file = load(config)?;
    let c = certify(&file, config.verify_tol)?;
    let p = file.model.matrix()?;
    let top = config.n.iter().copied().max().unwrap_or(1);
    let reference_level = match (config.reference_level, p.is_finite()) {
        (Some(r), _) => r,
        (None, true) => p.levels() - 1,
        (None, false) => 8 * top,
    };
    let m_max = config.m_max.unwrap_or_else(|| default_m_max(c.cert.gamma()));
    let reports = compare_against_oracle(&p, &config.n, &c.cert, m_max, reference_level, c.route)?;
    let bad: Vec<usize> = reports
        .iter()
        .filter(|r| r.is_violated(1e-12))
        .map(|r| r.n)
        .collect();
    let mut outcome = Outcome::ok(render_reports(&reports, config.format));
    if !bad.is_empty() {
        outcome.status = EXIT_BOUND_VIOLATED;
        outcome.message = Some(format!("measured error exceeds the bound at n = {bad:?}"));
    }
    Ok(outcome)
}

#[derive(Debug, Serialize)]
struct PathSummary {
    path: u64,
    steps: usize,
    ordered: bool,
    first_meeting: Option<usize>,
    hit_top: bool,
    error: Option<String>,
}

fn corner(model: &Model, levels: usize) -> Result<BlockStochasticMatrix, CliError> {
    let p = model.matrix()?;
    if p.is_finite() {
        return Ok(p);
    }
    if levels < 2 {
        return Err(CliError::Validation("--corner must be >= 2".into()));
    }
    Ok(lcb_truncate(&p, levels - 1)?)
}

/// Coupled paths on a finite corner; exit status 3 on any ordering failure.
pub fn cmd_couple(config: &RunConfig) -> Result<Outcome, CliError> {
    config.check()?;
    let file = load(config)?;
    let cc = &config.couple;
    let low = corner(&file.model, cc.corner)?;
    let high = match &file.dominating {
        Some(d) => Some(corner(&d.model, cc.corner)?),
        None => None,
    };
    // Surface precondition failures once, before sampling.
    let probe = StreamId::new(config.seed, 0);
    match &high {
        None => run_coupled_monotone(&low, cc.low, cc.high, cc.phase, 0, probe)?,
        Some(h) => run_coupled_dominance(&low, h, cc.low, cc.high, cc.phase, 0, probe)?,
    };
    if let Some(dir) = &cc.dump_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    }
    let results = (0..cc.paths as u64)
        .into_par_iter()
        .map(|path| {
            let stream = StreamId::new(config.seed, path);
            let run = match &high {
                None => run_coupled_monotone(&low, cc.low, cc.high, cc.phase, cc.steps, stream),
                Some(h) => run_coupled_dominance(&low, h, cc.low, cc.high, cc.phase, cc.steps, stream),
            };
            let summary = match &run {
                Ok(t) => PathSummary {
                    path,
                    steps: cc.steps,
                    ordered: t.is_ordered(),
                    first_meeting: t.first_meeting(),
                    hit_top: t.hit_top,
                    error: None,
                },
                Err(e) => PathSummary {
                    path,
                    steps: cc.steps,
                    ordered: false,
                    first_meeting: None,
                    hit_top: false,
                    error: Some(e.to_string()),
                },
            };
            if let (Some(dir), Ok(t)) = (&cc.dump_dir, &run) {
                let file = dir.join(format!("path_{path}.csv"));
                let f = std::fs::File::create(&file)
                    .map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
                t.write_csv(std::io::BufWriter::new(f))
                    .map_err(|e| CliError::Io(format!("{}: {e}", file.display())))?;
            }
            Ok(summary)
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let failures = results.iter().filter(|s| !s.ordered).count();
    let output = match config.format {
        Format::Json => to_json_string(&results) + "\n",
        Format::Csv => {
            let mut s = String::from("path,steps,ordered,first_meeting,hit_top\n");
            for r in &results {
                let meet = r.first_meeting.map(|m| m.to_string()).unwrap_or_default();
                writeln!(s, "{},{},{},{},{}", r.path, r.steps, r.ordered, meet, r.hit_top)
                    .expect("writing to a String");
            }
            s
        }
    };
    let mut outcome = Outcome::ok(output);
    if failures > 0 {
        outcome.status = EXIT_BOUND_VIOLATED;
        outcome.message = Some(format!("{failures} of {} paths lost their ordering", cc.paths));
    }
    Ok(outcome)
}

/// Runs one command, writes its output, and returns the process exit code.
pub fn run(config: &RunConfig) -> i32 {
    let result = match config.command {
        Command::Validate => cmd_validate(config),
        Command::Bound => cmd_bound(config),
        Command::Compare => cmd_compare(config),
        Command::Couple => cmd_couple(config),
    };
    let outcome = match result {
        Ok(o) => o,
        Err(e) => {
            eprintln!("bmtrunc: {e}");
            return e.exit_code();
        }
    };
    let written = match &config.out {
        Some(path) => std::fs::write(path, &outcome.output)
            .map_err(|e| format!("{}: {e}", path.display())),
        None => {
            use std::io::Write;
            std::io::stdout()
                .write_all(outcome.output.as_bytes())
                .map_err(|e| e.to_string())
        }
    };
    if let Err(e) = written {
        eprintln!("bmtrunc: i/o error: {e}");
        return EXIT_IO;
    }
    if let Some(m) = &outcome.message {
        eprintln!("bmtrunc: {m}");
    }
    outcome.status
}
