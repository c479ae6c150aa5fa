//! Pipeline stages. Each reads upstream artifacts (verified against their
//! manifests), writes its own artifacts and a manifest listing both.

use std::fs;
use std::path::{Path, PathBuf};

use log::{info, warn};
use serde::{Deserialize, Serialize};

use sgmus::analysis::{convergence_study, estimate_pdf, l1_distance, EmpiricalPdf};
use sgmus::dataset::DataTable;
use sgmus::manifold::{diffusion_maps, label_dataset, LabelTransform, MAX_POINTS};
use sgmus::nn::ScoreNetwork;
use sgmus::rng::derive_seed;
use sgmus::sampling::coupled_pipeline;
use sgmus::sde::{simulate_ensemble, stationary_pdf_on};
use sgmus::sgm::{generate, generated_table, max_pairwise_distance, train, LabeledDataset};

use crate::config::{LabelMode, PipelineConfig};
use crate::error::{CliError, CliResult};
use crate::manifest::{manifest_path, upstream, StageManifest};

pub const DATASET_BIN: &str = "dataset.bin";
pub const DATASET_CSV: &str = "dataset.csv";
pub const LABELED_BIN: &str = "labeled.bin";
pub const LABEL_TRANSFORM: &str = "label_transform.json";
pub const DMAP_CSV: &str = "diffusion_map.csv";
pub const DMAP_META: &str = "diffusion_map.json";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const TRAIN_LOG: &str = "train_log.csv";
pub const POOLED_CSV: &str = "pooled_pdf.csv";
pub const POOLED_JSON: &str = "pooled_pdf.json";
pub const WINDOWS: &str = "windows.json";
pub const PROVENANCE: &str = "provenance.json";
pub const ANALYSIS: &str = "analysis.json";

/// Kernel width applied before locating modes.
const MODE_SMOOTHING: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    Simulate,
    Label,
    Train,
    Generate,
    Couple,
    Analyze,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Simulate,
        Stage::Label,
        Stage::Train,
        Stage::Generate,
        Stage::Couple,
        Stage::Analyze,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Simulate => "simulate",
            Stage::Label => "label",
            Stage::Train => "train",
            Stage::Generate => "generate",
            Stage::Couple => "couple",
            Stage::Analyze => "analyze",
        }
    }

    /// Stream tag under the master seed.
    fn tag(self) -> u64 {
        Stage::ALL.iter().position(|s| *s == self).unwrap() as u64
    }
}

/// A validated config bound to its output directory.
pub struct Context {
    pub config: PipelineConfig,
    pub dir: PathBuf,
    digest: String,
}

impl Context {
    /// Resolves `config.output_dir` against `root`; the directory must exist.
    pub fn new(config: PipelineConfig, root: Option<&Path>) -> CliResult<Self> {
        let dir = match root {
            Some(r) if config.output_dir.is_relative() => r.join(&config.output_dir),
            _ => config.output_dir.clone(),
        };
        if !dir.is_dir() {
            return Err(CliError::MissingPath {
                path: dir,
                what: "output directory does not exist".into(),
            });
        }
        let digest = config.digest();
        Ok(Self {
            config,
            dir,
            digest,
        })
    }

    fn seed(&self, stage: Stage) -> u64 {
        derive_seed(self.config.seed, &[stage.tag()])
    }

    fn manifest(&self, stage: Stage) -> StageManifest {
        StageManifest::new(stage.name(), self.seed(stage), self.digest.clone())
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> CliResult<()> {
        let path = self.path(name);
        fs::write(&path, contents).map_err(|e| CliError::Io { path, source: e })
    }

    fn read_table(&self, name: &str) -> CliResult<DataTable> {
        Ok(DataTable::read(&self.path(name))?)
    }

    fn finish(&self, mut m: StageManifest, outputs: &[String]) -> CliResult<StageManifest> {
        for name in outputs {
            m.add_output(&self.dir, name)?;
        }
        m.write(&self.dir)?;
        info!(
            "{} done: {} artifacts in {}",
            m.stage,
            m.outputs.len(),
            self.dir.display()
        );
        Ok(m)
    }

    fn label_transform(&self, m: &mut StageManifest) -> CliResult<Option<LabelTransform>> {
        if self.config.label.mode != LabelMode::DiffusionMaps {
            return Ok(None);
        }
        m.inputs
            .push(upstream(&self.dir, "label", LABEL_TRANSFORM)?);
        let text = fs::read_to_string(self.path(LABEL_TRANSFORM)).map_err(|e| CliError::Io {
            path: self.path(LABEL_TRANSFORM),
            source: e,
        })?;
        let t = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{LABEL_TRANSFORM}: {e}")))?;
        Ok(Some(t))
    }

    fn load_checkpoint(&self, m: &mut StageManifest) -> CliResult<ScoreNetwork> {
        m.inputs.push(upstream(&self.dir, "train", CHECKPOINT)?);
        Ok(ScoreNetwork::load(&self.path(CHECKPOINT))?)
    }
}

fn to_label(transform: Option<&LabelTransform>, raw: f64) -> f64 {
    transform.map_or(raw, |t| t.apply(raw))
}

fn points_of(table: &DataTable) -> CliResult<Vec<[f64; 2]>> {
    let x1 = table
        .column("x1")
        .ok_or_else(|| CliError::Validation("dataset has no x1 column".into()))?;
    let x2 = table
        .column("x2")
        .ok_or_else(|| CliError::Validation("dataset has no x2 column".into()))?;
    Ok(x1.into_iter().zip(x2).map(|(a, b)| [a, b]).collect())
}

/// Unbiased trajectories from every configured initial state.
pub fn simulate(ctx: &Context) -> CliResult<StageManifest> {
    let cfg = &ctx.config;
    let m = ctx.manifest(Stage::Simulate);
    let sim = &cfg.simulate;
    let trajectories = simulate_ensemble(
        &cfg.system()?,
        &sim.initial_states,
        sim.dt,
        sim.n_steps,
        sim.stride,
        m.seed,
    )?;
    let table = DataTable::from_trajectories(&trajectories, m.seed)?;
    info!("simulated {} states", table.rows());
    table.write(&ctx.path(DATASET_BIN))?;
    ctx.write(DATASET_CSV, table.to_csv())?;
    ctx.finish(m, &[DATASET_BIN.into(), DATASET_CSV.into()])
}

/// Attaches a conditioning label to every state.
pub fn label(ctx: &Context) -> CliResult<StageManifest> {
    let cfg = &ctx.config;
    let mut m = ctx.manifest(Stage::Label);
    m.inputs.push(upstream(&ctx.dir, "simulate", DATASET_BIN)?);
    let table = ctx.read_table(DATASET_BIN)?;
    let mut data = LabeledDataset::from_table(&table, &["x1", "x2"], &["x1"])?;
    if let Some(stride) = cfg.label.subsample {
        data = data.subsample(stride)?;
    }
    let mut outputs = vec![LABELED_BIN.to_string()];
    if cfg.label.mode == LabelMode::DiffusionMaps {
        if data.len() > MAX_POINTS {
            return Err(CliError::config(
                "label.subsample",
                format!("{} points exceed the diffusion-map cap of {MAX_POINTS}; set a subsample stride", data.len()),
            ));
        }
        let result = diffusion_maps(&data.points, 2, &cfg.label.diffusion_maps)?;
        let (labeled, transform) = label_dataset(&data.points, 2, &result)?;
        info!("diffusion-map eigenvalues {:?}", result.eigenvalues);
        ctx.write(DMAP_CSV, result.to_csv())?;
        ctx.write(
            DMAP_META,
            serde_json::to_string_pretty(&result.metadata()).expect("metadata serializes"),
        )?;
        ctx.write(
            LABEL_TRANSFORM,
            serde_json::to_string_pretty(&transform).expect("transform serializes"),
        )?;
        outputs.extend([DMAP_CSV.into(), DMAP_META.into(), LABEL_TRANSFORM.into()]);
        data = labeled;
    }
    let values = (0..data.len())
        .flat_map(|i| [data.point(i)[0], data.point(i)[1], data.label(i)[0]])
        .collect();
    DataTable::new(
        vec!["x1".into(), "x2".into(), "y".into()],
        values,
        table.dt,
        table.seed,
        None,
    )?
    .write(&ctx.path(LABELED_BIN))?;
    ctx.finish(m, &outputs)
}

/// Fits the conditional score network.
pub fn train_stage(ctx: &Context) -> CliResult<StageManifest> {
    let cfg = &ctx.config;
    let mut m = ctx.manifest(Stage::Train);
    m.inputs.push(upstream(&ctx.dir, "label", LABELED_BIN)?);
    let data = LabeledDataset::from_table(&ctx.read_table(LABELED_BIN)?, &["x1", "x2"], &["y"])?;
    let norm = sgmus::nn::NormStats::from_data(&data.points, 2, &data.labels, 1)?;
    let schedule = cfg
        .schedule
        .build(max_pairwise_distance(&norm.normalize_x(&data.points), 2)?)?;
    // The master seed drives training; `train.seed` is replaced.
    let train_cfg = sgmus::sgm::TrainConfig {
        seed: m.seed,
        ..cfg.train.clone()
    };
    info!(
        "training on {} samples, sigma_max {:.4}",
        data.len(),
        schedule.sigma_max
    );
    let trained = train(&data, &train_cfg, &schedule)?;
    trained.net.save(&ctx.path(CHECKPOINT))?;
    ctx.write(TRAIN_LOG, trained.log.to_csv())?;
    ctx.finish(m, &[CHECKPOINT.into(), TRAIN_LOG.into()])
}

pub fn samples_name(index: usize) -> (String, String) {
    (
        format!("samples_{index}.bin"),
        format!("samples_{index}.csv"),
    )
}

/// Draws samples at every configured label; labels outside the training
/// range are flagged in the manifest.
pub fn generate_stage(ctx: &Context) -> CliResult<StageManifest> {
    let cfg = &ctx.config;
    let mut m = ctx.manifest(Stage::Generate);
    let net = ctx.load_checkpoint(&mut m)?;
    let transform = ctx.label_transform(&mut m)?;
    m.inputs.push(upstream(&ctx.dir, "label", LABELED_BIN)?);
    let y = ctx.read_table(LABELED_BIN)?.column("y").unwrap_or_default();
    let lo = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = y.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut outputs = Vec::new();
    for (i, &raw) in cfg.generate.labels.iter().enumerate() {
        let label = to_label(transform.as_ref(), raw);
        if !(lo..=hi).contains(&label) {
            let msg = format!("label {raw} lies outside the training range [{lo}, {hi}]; samples are extrapolated");
            warn!("{msg}");
            m.warnings.push(msg);
        }
        let seed = derive_seed(m.seed, &[i as u64]);
        let samples = generate(
            &net,
            &[label],
            cfg.generate.n_samples,
            cfg.generate.n_steps,
            seed,
        )?;
        let table = generated_table(samples, 2, Some(raw), seed)?;
        let (bin, csv) = samples_name(i);
        table.write(&ctx.path(&bin))?;
        ctx.write(&csv, table.to_csv())?;
        outputs.extend([bin, csv]);
    }
    ctx.finish(m, &outputs)
}

/// Umbrella windows initialized from generated states.
pub fn couple(ctx: &Context) -> CliResult<StageManifest> {
    let cfg = &ctx.config;
    let mut m = ctx.manifest(Stage::Couple);
    let net = ctx.load_checkpoint(&mut m)?;
    let transform = ctx.label_transform(&mut m)?;
    let c = &cfg.couple;
    let label = to_label(transform.as_ref(), c.label);
    let result = coupled_pipeline(&net, &cfg.system()?, label, c.n_windows, &c.window, m.seed)?;
    info!(
        "coupled estimate at center {:.4}: {} windows, in-range fraction {:.4}",
        result.provenance.bias_center, c.n_windows, result.provenance.in_range_fraction
    );
    ctx.write(POOLED_CSV, result.pdf.to_csv())?;
    ctx.write(
        POOLED_JSON,
        serde_json::to_string(&result.pdf).expect("pdf serializes"),
    )?;
    result.provenance.manifest.write(&ctx.path(WINDOWS))?;
    ctx.write(
        PROVENANCE,
        serde_json::to_string_pretty(&result.provenance).expect("provenance serializes"),
    )?;
    ctx.finish(
        m,
        &[
            POOLED_CSV.into(),
            POOLED_JSON.into(),
            WINDOWS.into(),
            PROVENANCE.into(),
        ],
    )
}

/// Error summary of one estimated density against the analytic conditional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PdfReport {
    pub source: String,
    pub label: f64,
    /// Slow-coordinate value of the analytic reference.
    pub slow_value: f64,
    pub l1: f64,
    pub modes: Vec<f64>,
    pub mass_negative: f64,
    pub mass_positive: f64,
    pub in_range_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub generated: Vec<PdfReport>,
    pub coupled: Option<PdfReport>,
    pub convergence: Vec<sgmus::analysis::ConvergenceCurve>,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn report(
    source: String,
    label: f64,
    slow: f64,
    pdf: &EmpiricalPdf,
    truth: &EmpiricalPdf,
    in_range: f64,
) -> CliResult<PdfReport> {
    Ok(PdfReport {
        source,
        label,
        slow_value: slow,
        l1: l1_distance(pdf, truth)?,
        modes: pdf.smoothed(MODE_SMOOTHING).modes(0.2),
        mass_negative: pdf.mass_between(f64::NEG_INFINITY, 0.0),
        mass_positive: pdf.mass_between(0.0, f64::INFINITY),
        in_range_fraction: in_range,
    })
}

fn chain_if_present(
    ctx: &Context,
    stage: &str,
    name: &str,
    m: &mut StageManifest,
) -> CliResult<bool> {
    if !manifest_path(&ctx.dir, stage).exists() {
        return Ok(false);
    }
    m.inputs.push(upstream(&ctx.dir, stage, name)?);
    Ok(true)
}

/// Scores generated and coupled densities against the analytic conditional
/// and runs the optional convergence study.
pub fn analyze(ctx: &Context) -> CliResult<StageManifest> {
    let cfg = &ctx.config;
    let mut m = ctx.manifest(Stage::Analyze);
    let system = cfg.system()?;
    let grid = cfg.analyze.grid;
    let mut outputs = Vec::new();
    let mut rep = AnalysisReport {
        generated: Vec::new(),
        coupled: None,
        convergence: Vec::new(),
    };

    for i in 0..cfg.generate.labels.len() {
        let (bin, _) = samples_name(i);
        if !chain_if_present(ctx, "generate", &bin, &mut m)? {
            break;
        }
        let table = ctx.read_table(&bin)?;
        let pts = points_of(&table)?;
        let label = table.label.unwrap_or(f64::NAN);
        let slow = match cfg.label.mode {
            LabelMode::KnownSlow => label,
            LabelMode::DiffusionMaps => median(pts.iter().map(|p| p[0]).collect()),
        };
        let est = estimate_pdf(&pts.iter().map(|p| p[1]).collect::<Vec<_>>(), &grid)?;
        let truth = stationary_pdf_on(&system, slow, &grid)?;
        let r = report(
            bin.clone(),
            label,
            slow,
            &est.pdf,
            &truth,
            est.in_range_fraction(),
        )?;
        info!("{}: L1 {:.4}, modes {:?}", r.source, r.l1, r.modes);
        let csv = format!("samples_{i}_pdf.csv");
        ctx.write(&csv, est.pdf.to_csv())?;
        outputs.push(csv);
        rep.generated.push(r);
    }

    if chain_if_present(ctx, "couple", POOLED_JSON, &mut m)? {
        m.inputs.push(upstream(&ctx.dir, "couple", PROVENANCE)?);
        let read = |name: &str| {
            fs::read_to_string(ctx.path(name)).map_err(|e| CliError::Io {
                path: ctx.path(name),
                source: e,
            })
        };
        let pdf: EmpiricalPdf = serde_json::from_str(&read(POOLED_JSON)?)
            .map_err(|e| CliError::Validation(format!("{POOLED_JSON}: {e}")))?;
        let prov: sgmus::sampling::Provenance = serde_json::from_str(&read(PROVENANCE)?)
            .map_err(|e| CliError::Validation(format!("{PROVENANCE}: {e}")))?;
        let truth = stationary_pdf_on(&system, prov.bias_center, &prov.window_config.grid)?;
        let r = report(
            POOLED_JSON.into(),
            cfg.couple.label,
            prov.bias_center,
            &pdf,
            &truth,
            prov.in_range_fraction,
        )?;
        info!("coupled: L1 {:.4}, modes {:?}", r.l1, r.modes);
        ctx.write("analytic_pdf.csv", truth.to_csv())?;
        outputs.push("analytic_pdf.csv".into());
        rep.coupled = Some(r);
    }

    if let Some(study) = &cfg.analyze.study {
        m.inputs.push(upstream(&ctx.dir, "label", LABELED_BIN)?);
        let training = points_of(&ctx.read_table(LABELED_BIN)?)?;
        let net = match cfg.label.mode {
            LabelMode::KnownSlow => Some(ctx.load_checkpoint(&mut m)?),
            LabelMode::DiffusionMaps => {
                let msg = "convergence study conditions on slow-coordinate values; the diffusion-map network is skipped".to_string();
                warn!("{msg}");
                m.warnings.push(msg);
                None
            }
        };
        let study = sgmus::analysis::StudyConfig {
            seed: derive_seed(m.seed, &[0]),
            ..study.clone()
        };
        let curves = convergence_study(&system, net.as_ref(), &training, &study)?;
        for c in &curves {
            let name = format!("convergence_{}.csv", c.method.tag());
            ctx.write(&name, c.to_csv())?;
            outputs.push(name);
        }
        rep.convergence = curves;
    }

    if rep.generated.is_empty() && rep.coupled.is_none() && rep.convergence.is_empty() {
        return Err(CliError::Validation(
            "nothing to analyze: run generate or couple, or configure analyze.study".into(),
        ));
    }
    ctx.write(
        ANALYSIS,
        serde_json::to_string_pretty(&rep).expect("report serializes"),
    )?;
    outputs.push(ANALYSIS.into());
    ctx.finish(m, &outputs)
}

pub fn run(ctx: &Context, stage: Stage) -> CliResult<StageManifest> {
    info!("stage {}", stage.name());
    match stage {
        Stage::Simulate => simulate(ctx),
        Stage::Label => label(ctx),
        Stage::Train => train_stage(ctx),
        Stage::Generate => generate_stage(ctx),
        Stage::Couple => couple(ctx),
        Stage::Analyze => analyze(ctx),
    }
}

/// Every stage in order; stops at the first failure.
pub fn run_all(ctx: &Context) -> CliResult<Vec<StageManifest>> {
    Stage::ALL.iter().map(|&s| run(ctx, s)).collect()
}
