//! Experiment configuration, orchestration and persistence.
//!
//! Trials run in parallel, but every random stream is derived from
//! `(seed, domain, hypothesis, trial)` and results are collected in trial
//! order, so outputs do not depend on the number of worker threads.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analysis::{
    estimate_upsilon, kl_gaussian, kl_marginal_product, regime_decision_with_se, roc, KlReport, RocCurve,
    UpsilonEstimate,
};
use crate::copulas::{fit_copula_or_independence, CopulaFamily, CopulaFit, CopulaSpec, DEFAULT_STUDENT_T_DOF};
use crate::detectors::{llr_compressed_gaussian, llr_copula, llr_product, DetectorKind, MarginalPair};
use crate::error::{Error, Result};
use crate::moments::{case1_moments, case2_moments, MomentModel};
use crate::multimodal_gen::{generate, Case, Hypothesis, SampleBlock};
use crate::projection::{push_moments, CompressedMoments, ProjectionDescriptor, ProjectionKind, ProjectionSet};
use crate::rng::{mix_seed, SeedDomain};

pub const ARTIFACT_VERSION: &str = env!("CARGO_PKG_VERSION");
pub const MIN_TRIALS: usize = 100;
pub const REPORT_PF: f64 = 0.1;

/// A preset number or a fully specified case.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CaseSelector {
    Preset(u8),
    Custom(Case),
}

impl CaseSelector {
    pub fn resolve(&self) -> Result<Case> {
        let case = match *self {
            CaseSelector::Preset(k) => Case::preset(k)?,
            CaseSelector::Custom(c) => c,
        };
        case.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(case)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    /// One projection per compression ratio, shared by every trial.
    #[default]
    Fixed,
    /// A fresh projection for every trial.
    PerTrial,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub case: Option<CaseSelector>,
    pub n: usize,
    pub compression_ratios: Vec<f64>,
    /// Monte Carlo trials per hypothesis.
    pub trials: usize,
    pub detectors: Vec<String>,
    pub projection: ProjectionKind,
    pub projection_entry_std: f64,
    pub projection_mode: ProjectionMode,
    pub seed: Option<u64>,
    pub output_dir: PathBuf,
    pub student_t_dof: f64,
    /// H1 pairs used to fit copulas; drawn from a seed domain disjoint from evaluation.
    pub training_samples: usize,
    /// H1 copula family used by the `kl` command.
    pub kl_copula: String,
    pub upsilon_trials: usize,
    pub scatter_points: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            case: None,
            n: 1000,
            compression_ratios: vec![0.2],
            trials: 5000,
            detectors: vec!["product".into(), "compressed_gaussian".into()],
            projection: ProjectionKind::Gaussian,
            projection_entry_std: 1.0,
            projection_mode: ProjectionMode::Fixed,
            seed: None,
            output_dir: PathBuf::from("results"),
            student_t_dof: DEFAULT_STUDENT_T_DOF,
            training_samples: 10_000,
            kl_copula: "gaussian".into(),
            upsilon_trials: 10_000,
            scatter_points: 1000,
        }
    }
}

/// A config after validation, with everything resolved to concrete values.
#[derive(Debug, Clone)]
pub struct ResolvedConfig {
    pub config: ExperimentConfig,
    pub case: Case,
    pub seed: u64,
    pub detectors: Vec<DetectorKind>,
    /// `(c_r, M)` in configured order.
    pub ratios: Vec<(f64, usize)>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn resolve(&self) -> Result<ResolvedConfig> {
        let cfg = |msg: String| Error::Config(msg);
        let case = self.case.ok_or_else(|| cfg("`case` is required".into()))?.resolve()?;
        let seed = self.seed.ok_or_else(|| cfg("`seed` is required".into()))?;
        if self.n == 0 {
            return Err(cfg("`n` must be positive".into()));
        }
        if self.trials < MIN_TRIALS {
            return Err(cfg(format!("`trials` must be at least {MIN_TRIALS}, got {}", self.trials)));
        }
        if self.compression_ratios.is_empty() {
            return Err(cfg("`compression_ratios` is empty".into()));
        }
        let mut ratios = Vec::with_capacity(self.compression_ratios.len());
        for &cr in &self.compression_ratios {
            if !(cr > 0.0 && cr <= 1.0) {
                return Err(cfg(format!("compression ratio {cr} is outside (0, 1]")));
            }
            let m = (cr * self.n as f64).round() as usize;
            if m == 0 {
                return Err(cfg(format!("compression ratio {cr} gives M = 0 at N = {}", self.n)));
            }
            if self.projection == ProjectionKind::Identity && m != self.n {
                return Err(cfg("identity projection requires compression ratio 1".into()));
            }
            if ratios.iter().any(|&(_, m2)| m2 == m) {
                return Err(cfg(format!("compression ratios repeat M = {m}")));
            }
            ratios.push((cr, m));
        }
        if self.detectors.is_empty() {
            return Err(cfg("`detectors` is empty".into()));
        }
        let mut detectors = Vec::new();
        for d in &self.detectors {
            let kind = DetectorKind::parse(d).map_err(|e| cfg(e.to_string()))?;
            if detectors.contains(&kind) {
                return Err(cfg(format!("detector '{d}' listed twice")));
            }
            detectors.push(kind);
        }
        if !(self.projection_entry_std.is_finite() && self.projection_entry_std > 0.0) {
            return Err(cfg("`projection_entry_std` must be positive".into()));
        }
        if !(self.student_t_dof.is_finite() && self.student_t_dof > 0.0) {
            return Err(cfg("`student_t_dof` must be positive".into()));
        }
        if self.training_samples < 2 {
            return Err(cfg("`training_samples` must be at least 2".into()));
        }
        CopulaFamily::parse(&self.kl_copula).map_err(|e| cfg(e.to_string()))?;
        if self.scatter_points == 0 {
            return Err(cfg("`scatter_points` must be positive".into()));
        }
        let mut config = self.clone();
        config.case = Some(CaseSelector::Custom(case));
        Ok(ResolvedConfig { config, case, seed, detectors, ratios })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveSummary {
    pub detector: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compression_ratio: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<usize>,
    pub auc: f64,
    pub pf: f64,
    pub pd_at_pf: f64,
    pub n0: usize,
    pub n1: usize,
    pub points: usize,
    pub clamps: u64,
    /// CSV holding the full curve, relative to the output directory.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KlRow {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub copula: Option<String>,
    pub compression_ratio: f64,
    pub m: usize,
    #[serde(flatten)]
    pub report: KlReport,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Warnings {
    pub clamps: u64,
    pub fallbacks: u64,
    pub messages: Vec<String>,
}

/// Everything persisted about a run. `config` is the resolved echo and is
/// sufficient to reproduce the run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub artifact_version: String,
    pub command: String,
    pub config: ExperimentConfig,
    pub curves: Vec<CurveSummary>,
    pub copula_fits: Vec<CopulaFit>,
    pub kl: Vec<KlRow>,
    pub warnings: Warnings,
    pub files: Vec<String>,
    /// Kept out of the serialized record so outputs stay byte-identical.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl ResultRecord {
    fn new(command: &str, resolved: &ResolvedConfig) -> Self {
        Self {
            artifact_version: ARTIFACT_VERSION.into(),
            command: command.into(),
            config: resolved.config.clone(),
            curves: Vec::new(),
            copula_fits: Vec::new(),
            kl: Vec::new(),
            warnings: Warnings::default(),
            files: Vec::new(),
            wall_time_s: 0.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LabeledCurve {
    pub label: String,
    pub detector: DetectorKind,
    pub m: Option<usize>,
    pub curve: RocCurve,
}

#[derive(Debug, Clone)]
pub struct RocOutcome {
    pub record: ResultRecord,
    pub curves: Vec<LabeledCurve>,
}

impl RocOutcome {
    pub fn curve(&self, label: &str) -> Option<&RocCurve> {
        self.curves.iter().find(|c| c.label == label).map(|c| &c.curve)
    }
}

pub fn moment_model(case: &Case, n: usize) -> Result<MomentModel> {
    match case {
        Case::Case1(p) => case1_moments(p, n),
        Case::Case2(p) => case2_moments(p, n),
    }
}

pub fn evaluation_seed(seed: u64, h: Hypothesis, trial: usize) -> u64 {
    mix_seed(seed, &[SeedDomain::Evaluation.tag(), h.index() as u64, trial as u64])
}

pub fn training_seed(seed: u64) -> u64 {
    mix_seed(seed, &[SeedDomain::Training.tag(), Hypothesis::H1.index() as u64])
}

fn projection_seed(seed: u64, trial: Option<(Hypothesis, usize)>) -> u64 {
    match trial {
        None => mix_seed(seed, &[SeedDomain::Projection.tag()]),
        Some((h, t)) => mix_seed(seed, &[SeedDomain::Projection.tag(), h.index() as u64, t as u64]),
    }
}

fn descriptor(r: &ResolvedConfig, m: usize, seed: u64) -> ProjectionDescriptor {
    ProjectionDescriptor {
        kind: r.config.projection,
        m,
        n: r.config.n,
        sensors: 2,
        seed,
        entry_std: r.config.projection_entry_std,
    }
}

/// Fit a copula of `family` to `training_samples` H1 pairs.
pub fn fit_training_copula(r: &ResolvedConfig, family: CopulaFamily) -> Result<CopulaFit> {
    let block = generate(&r.case, Hypothesis::H1, r.config.training_samples, training_seed(r.seed))?;
    let pairs: Vec<(f64, f64)> = block.pairs().collect();
    fit_copula_or_independence(family, &pairs, r.config.student_t_dof)
}

enum Scorer {
    Product,
    Copula { c1: CopulaSpec },
    Compressed { m: usize, fixed: Option<Box<(ProjectionSet, CompressedMoments)>> },
}

struct Prepared {
    label: String,
    kind: DetectorKind,
    m: Option<usize>,
    cr: Option<f64>,
    scorer: Scorer,
}

fn prepare(r: &ResolvedConfig, record: &mut ResultRecord) -> Result<(Vec<Prepared>, Option<MomentModel>)> {
    let mut out = Vec::new();
    let needs_model = r.detectors.iter().any(DetectorKind::uses_projection);
    let model = if needs_model { Some(moment_model(&r.case, r.config.n)?) } else { None };
    for &kind in &r.detectors {
        match kind {
            DetectorKind::Product => out.push(Prepared {
                label: kind.label(),
                kind,
                m: None,
                cr: None,
                scorer: Scorer::Product,
            }),
            DetectorKind::Copula(family) => {
                let fit = fit_training_copula(r, family)?;
                if let Some(w) = &fit.warning {
                    record.warnings.fallbacks += 1;
                    record.warnings.messages.push(format!("{}: {w}", kind.label()));
                }
                out.push(Prepared {
                    label: kind.label(),
                    kind,
                    m: None,
                    cr: None,
                    scorer: Scorer::Copula { c1: fit.spec },
                });
                record.copula_fits.push(fit);
            }
            DetectorKind::CompressedGaussian => {
                for &(cr, m) in &r.ratios {
                    let fixed = match r.config.projection_mode {
                        ProjectionMode::Fixed => {
                            let proj = descriptor(r, m, projection_seed(r.seed, None)).build()?;
                            let cm = push_moments(model.as_ref().expect("model built"), &proj)?;
                            Some(Box::new((proj, cm)))
                        }
                        ProjectionMode::PerTrial => None,
                    };
                    out.push(Prepared {
                        label: format!("{}_m{m}", kind.label()),
                        kind,
                        m: Some(m),
                        cr: Some(cr),
                        scorer: Scorer::Compressed { m, fixed },
                    });
                }
            }
        }
    }
    Ok((out, model))
}

fn score_trial(
    r: &ResolvedConfig,
    detectors: &[Prepared],
    model: Option<&MomentModel>,
    marginals: &[MarginalPair],
    h: Hypothesis,
    t: usize,
) -> Result<Vec<(f64, u32)>> {
    let seed = evaluation_seed(r.seed, h, t);
    let run = || -> Result<Vec<(f64, u32)>> {
        let block: SampleBlock = generate(&r.case, h, r.config.n, seed)?;
        let independence = CopulaSpec::independence();
        detectors
            .iter()
            .map(|d| {
                let s = match &d.scorer {
                    Scorer::Product => llr_product(&block, marginals)?,
                    Scorer::Copula { c1 } => llr_copula(&block, marginals, c1, &independence)?,
                    Scorer::Compressed { fixed: Some(fixed), .. } => {
                        let (proj, cm) = &**fixed;
                        llr_compressed_gaussian(&proj.compress(&block)?, cm)?
                    }
                    Scorer::Compressed { m, fixed: None } => {
                        let proj = descriptor(r, *m, projection_seed(r.seed, Some((h, t)))).build()?;
                        let cm = push_moments(model.expect("model built"), &proj)?;
                        llr_compressed_gaussian(&proj.compress(&block)?, &cm)?
                    }
                };
                Ok((s.value, s.clamps))
            })
            .collect()
    };
    run().map_err(|e| Error::Trial { seed, source: Box::new(e) })
}

/// Score every configured detector on `trials` blocks per hypothesis and build
/// the ROC curves, without touching the filesystem.
pub fn compute_roc_experiment(config: &ExperimentConfig) -> Result<RocOutcome> {
    let start = Instant::now();
    let r = config.resolve()?;
    let mut record = ResultRecord::new("roc", &r);
    let marginals = r.case.marginals()?;
    let (detectors, model) = prepare(&r, &mut record)?;

    let mut scores: [Vec<Vec<f64>>; 2] = Default::default();
    let mut clamps = vec![0u64; detectors.len()];
    for h in Hypothesis::BOTH {
        let per_trial: Vec<Vec<(f64, u32)>> = (0..r.config.trials)
            .into_par_iter()
            .map(|t| score_trial(&r, &detectors, model.as_ref(), &marginals, h, t))
            .collect::<Result<_>>()?;
        let mut cols = vec![Vec::with_capacity(r.config.trials); detectors.len()];
        for trial in &per_trial {
            for (k, &(v, c)) in trial.iter().enumerate() {
                cols[k].push(v);
                clamps[k] += c as u64;
            }
        }
        scores[h.index()] = cols;
    }

    let mut curves = Vec::with_capacity(detectors.len());
    for (k, d) in detectors.iter().enumerate() {
        let curve = roc(&scores[0][k], &scores[1][k])?;
        record.curves.push(CurveSummary {
            detector: d.label.clone(),
            compression_ratio: d.cr,
            m: d.m,
            auc: curve.auc,
            pf: REPORT_PF,
            pd_at_pf: curve.pd_at_pf(REPORT_PF),
            n0: curve.n0,
            n1: curve.n1,
            points: curve.points.len(),
            clamps: clamps[k],
            file: format!("roc_{}.csv", d.label),
        });
        record.warnings.clamps += clamps[k];
        curves.push(LabeledCurve { label: d.label.clone(), detector: d.kind, m: d.m, curve });
    }
    record.wall_time_s = start.elapsed().as_secs_f64();
    Ok(RocOutcome { record, curves })
}

fn roc_csv(curve: &RocCurve) -> String {
    let mut s = String::from("pf,pd\n");
    for p in &curve.points {
        let _ = writeln!(s, "{},{}", p.pf, p.pd);
    }
    s
}

fn write_json(dir: &Path, name: &str, record: &ResultRecord) -> Result<()> {
    let mut text = serde_json::to_string_pretty(record)?;
    text.push('\n');
    fs::write(dir.join(name), text)?;
    Ok(())
}

/// Run the ROC experiment and persist one CSV per curve plus `summary.json`.
pub fn run_roc_experiment(config: &ExperimentConfig) -> Result<ResultRecord> {
    let mut outcome = compute_roc_experiment(config)?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    for c in &outcome.curves {
        let name = format!("roc_{}.csv", c.label);
        fs::write(dir.join(&name), roc_csv(&c.curve))?;
        outcome.record.files.push(name);
    }
    outcome.record.files.push("summary.json".into());
    write_json(dir, "summary.json", &outcome.record)?;
    Ok(outcome.record)
}

/// H1 scatter data: `points` uncompressed pairs `(x_n1, x_n2)` followed by
/// `points` compressed pairs `(y_m1, y_m2)` at the first compression ratio.
pub fn scatter_pairs(config: &ExperimentConfig, points: usize) -> Result<Vec<(f64, f64, &'static str)>> {
    let r = config.resolve()?;
    let n = r.config.n;
    let m = r.ratios[0].1;
    if points == 0 || points > n.saturating_mul(r.config.trials) {
        return Err(Error::Config(format!(
            "scatter needs 1 <= points <= N * trials = {}",
            n.saturating_mul(r.config.trials)
        )));
    }
    let proj = descriptor(&r, m, projection_seed(r.seed, None)).build()?;
    let block_seed = |b: usize| mix_seed(r.seed, &[SeedDomain::Scatter.tag(), Hypothesis::H1.index() as u64, b as u64]);

    let mut out = Vec::with_capacity(2 * points);
    let mut b = 0;
    while out.len() < points {
        let block = generate(&r.case, Hypothesis::H1, n, block_seed(b))?;
        out.extend(block.pairs().take(points - out.len()).map(|(a, c)| (a, c, "uncompressed")));
        b += 1;
    }
    let mut b = 0;
    while out.len() < 2 * points {
        let block = generate(&r.case, Hypothesis::H1, n, block_seed(b))?;
        let y = proj.compress(&block)?;
        let need = 2 * points - out.len();
        out.extend((0..m.min(need)).map(|i| (y[i], y[m + i], "compressed")));
        b += 1;
    }
    Ok(out)
}

/// Write `scatter.csv` (header `u1,u2,domain`) and `scatter.json`.
pub fn emit_scatter(config: &ExperimentConfig, points: usize) -> Result<ResultRecord> {
    let start = Instant::now();
    let r = config.resolve()?;
    let pairs = scatter_pairs(config, points)?;
    let mut csv = String::from("u1,u2,domain\n");
    for (a, b, d) in &pairs {
        let _ = writeln!(csv, "{a},{b},{d}");
    }
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("scatter.csv"), csv)?;
    let mut record = ResultRecord::new("scatter", &r);
    record.config.scatter_points = points;
    record.files = vec!["scatter.csv".into(), "scatter.json".into()];
    write_json(dir, "scatter.json", &record)?;
    record.wall_time_s = start.elapsed().as_secs_f64();
    Ok(record)
}

/// `d_cg` for each configured compression ratio, using the fixed projection.
pub fn compressed_kls(r: &ResolvedConfig) -> Result<Vec<(f64, usize, f64)>> {
    let model = moment_model(&r.case, r.config.n)?;
    r.ratios
        .iter()
        .map(|&(cr, m)| {
            let proj = descriptor(r, m, projection_seed(r.seed, None)).build()?;
            Ok((cr, m, kl_gaussian(&push_moments(&model, &proj)?)))
        })
        .collect()
}

fn upsilon_for(r: &ResolvedConfig, fit: &CopulaFit, marginals: &[MarginalPair]) -> Result<UpsilonEstimate> {
    estimate_upsilon(
        &fit.spec,
        &r.case,
        marginals,
        r.config.n,
        r.config.upsilon_trials,
        mix_seed(r.seed, &[SeedDomain::Upsilon.tag(), fit.family as u64]),
    )
}

fn kl_rows(
    r: &ResolvedConfig,
    families: &[CopulaFamily],
    record: &mut ResultRecord,
    label_copula: bool,
) -> Result<Vec<KlRow>> {
    let marginals = r.case.marginals()?;
    let d_up = kl_marginal_product(&marginals, r.config.n)?;
    let d_cg = compressed_kls(r)?;
    let mut rows = Vec::new();
    for &family in families {
        let fit = fit_training_copula(r, family)?;
        if let Some(w) = &fit.warning {
            record.warnings.fallbacks += 1;
            record.warnings.messages.push(format!("copula_{}: {w}", family.name()));
        }
        let ups = upsilon_for(r, &fit, &marginals)?;
        record.warnings.clamps += ups.clamps;
        for &(cr, m, d) in &d_cg {
            rows.push(KlRow {
                copula: label_copula.then(|| family.name().to_string()),
                compression_ratio: cr,
                m,
                report: regime_decision_with_se(ups.value, ups.se, d_up, d),
            });
        }
        record.copula_fits.push(fit);
    }
    Ok(rows)
}

fn kl_csv(rows: &[KlRow], with_copula: bool) -> String {
    let mut s = String::new();
    if with_copula {
        s.push_str("copula,");
    }
    s.push_str("cr,m,d_cg,d_up,upsilon,upsilon_se,compressed_preferred,inconclusive\n");
    for row in rows {
        if with_copula {
            let _ = write!(s, "{},", row.copula.as_deref().unwrap_or(""));
        }
        let k = &row.report;
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{}",
            row.compression_ratio,
            row.m,
            k.d_cg,
            k.d_up,
            k.upsilon,
            k.upsilon_se.unwrap_or(0.0),
            k.regime_compressed_preferred,
            k.inconclusive
        );
    }
    s
}

/// KL regime table for the configured `kl_copula`; writes `kl.csv` and `kl.json`.
pub fn run_kl_analysis(config: &ExperimentConfig) -> Result<ResultRecord> {
    let start = Instant::now();
    let r = config.resolve()?;
    let family = CopulaFamily::parse(&r.config.kl_copula)?;
    let mut record = ResultRecord::new("kl", &r);
    let rows = kl_rows(&r, &[family], &mut record, false)?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("kl.csv"), kl_csv(&rows, false))?;
    record.kl = rows;
    record.files = vec!["kl.csv".into(), "kl.json".into()];
    write_json(dir, "kl.json", &record)?;
    record.wall_time_s = start.elapsed().as_secs_f64();
    Ok(record)
}

/// The KL regime table for all four fusion copulas; writes `regime.csv` and `regime.json`.
pub fn run_regime_sweep(config: &ExperimentConfig) -> Result<ResultRecord> {
    let start = Instant::now();
    let r = config.resolve()?;
    let mut record = ResultRecord::new("regime", &r);
    let rows = kl_rows(&r, &CopulaFamily::FUSION, &mut record, true)?;
    let dir = &config.output_dir;
    fs::create_dir_all(dir)?;
    fs::write(dir.join("regime.csv"), kl_csv(&rows, true))?;
    record.kl = rows;
    record.files = vec!["regime.csv".into(), "regime.json".into()];
    write_json(dir, "regime.json", &record)?;
    record.wall_time_s = start.elapsed().as_secs_f64();
    Ok(record)
}
