//! Run orchestration: configuration, the sequential stage graph, and
//! artifact emission.
//!
//! A run executes ingest, dimension sweep, volume selection, training
//! evaluation, holdout evaluation, and map construction in order, writing
//! every artifact under one run directory. Subject-level work inside a
//! stage is parallel; stages themselves are sequential and all files are
//! written from the orchestration thread, so two runs with the same
//! configuration and seed produce byte-identical directories. A failed
//! stage leaves completed artifacts in place next to a `FAILED` marker
//! naming the stage.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::classify::SelectionResult;
use crate::error::{Error, Result};
use crate::evaluate::{
    d_grid, holdout_evaluate, stratified_split, sweep, training_report, EvaluationReport, Method,
    SweepResult,
};
use crate::grid::{ClassLabel, GridDims, ScanVolume};
use crate::io::{load_dataset, load_manifest, write_raw_volume, Dataset};
use crate::lle::{AlphaNorm, EigvecChoice, EmbedConfig, SRule};
use crate::statmap::{build_map, threshold_map, write_statmap, TtestKind};
use crate::synth::{generate_synthetic, SyntheticSpec};

/// Synthetic-cohort settings carried inside [`RunConfig`].
///
/// `voxels` and `volumes` of `None` mean "auto": a 3-wide cube centered in
/// the grid, and the three middle volumes.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub dims: GridDims,
    pub patients: usize,
    pub controls: usize,
    pub effect: f64,
    pub sigma: f64,
    pub voxels: Option<Vec<usize>>,
    pub volumes: Option<Vec<usize>>,
}

/// Full run configuration. Every field has a default, a config-file key,
/// and a stable text rendering, so a resolved config file reproduces the
/// run exactly.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub method: Method,
    /// Neighborhood radius; a manifest `radius` declaration wins.
    pub radius: usize,
    pub xi: f64,
    /// Number of log-spaced dimension grid points when `grid` is auto.
    pub grid_points: usize,
    /// Explicit dimension grid; a manifest `grid` declaration wins.
    pub grid: Option<Vec<usize>>,
    pub alpha: f64,
    /// Unequal-variance t-statistics instead of pooled.
    pub welch: bool,
    pub seed: u64,
    pub holdout_fraction: f64,
    pub eigvec: EigvecChoice,
    pub alpha_norm: AlphaNorm,
    pub s_rule: SRule,
    pub solver_tol: f64,
    pub synth: SynthConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            method: Method::Lle,
            radius: 1,
            xi: 0.0,
            grid_points: 12,
            grid: None,
            alpha: 0.05,
            welch: false,
            seed: 0,
            holdout_fraction: 0.25,
            eigvec: EigvecChoice::SmallestEigenvalues,
            alpha_norm: AlphaNorm::SquaredNorm,
            s_rule: SRule::TargetDim,
            solver_tol: 1e-8,
            synth: SynthConfig {
                dims: GridDims::new(5, 5, 5, 20).expect("static dims"),
                patients: 15,
                controls: 15,
                effect: 2.0,
                sigma: 1.0,
                voxels: None,
                volumes: None,
            },
        }
    }
}

fn config_err(origin: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Manifest {
        path: origin.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_list(value: &str) -> Option<Vec<usize>> {
    if value == "auto" {
        return Some(Vec::new());
    }
    value
        .split(',')
        .map(|p| p.trim().parse().ok())
        .collect::<Option<Vec<usize>>>()
}

fn parse_dims_value(value: &str) -> Option<GridDims> {
    let parts: Vec<usize> = value
        .split('x')
        .map(|p| p.trim().parse().ok())
        .collect::<Option<_>>()?;
    if parts.len() != 4 {
        return None;
    }
    GridDims::new(parts[0], parts[1], parts[2], parts[3]).ok()
}

impl RunConfig {
    /// Applies one `key = value` setting.
    pub fn set(&mut self, key: &str, value: &str, origin: &Path, line: usize) -> Result<()> {
        let bad = |what: &str| config_err(origin, line, format!("bad {what} value {value:?}"));
        let list = |what: &str| -> Result<Option<Vec<usize>>> {
            match parse_list(value) {
                Some(v) if v.is_empty() => Ok(None),
                Some(v) => Ok(Some(v)),
                None => Err(bad(what)),
            }
        };
        match key {
            "method" => self.method = value.parse().map_err(|_| bad("method"))?,
            "radius" => {
                self.radius = value.parse().map_err(|_| bad("radius"))?;
                if self.radius == 0 {
                    return Err(config_err(origin, line, "radius must be at least 1"));
                }
            }
            "xi" => self.xi = value.parse().map_err(|_| bad("xi"))?,
            "grid_points" => self.grid_points = value.parse().map_err(|_| bad("grid_points"))?,
            "grid" => self.grid = list("grid")?,
            "alpha" => self.alpha = value.parse().map_err(|_| bad("alpha"))?,
            "welch" => self.welch = value.parse().map_err(|_| bad("welch"))?,
            "seed" => self.seed = value.parse().map_err(|_| bad("seed"))?,
            "holdout_fraction" => {
                self.holdout_fraction = value.parse().map_err(|_| bad("holdout_fraction"))?
            }
            "eigvec" => {
                self.eigvec = match value {
                    "smallest" => EigvecChoice::SmallestEigenvalues,
                    "largest" => EigvecChoice::LargestEigenvalues,
                    _ => return Err(bad("eigvec")),
                }
            }
            "alpha_norm" => {
                self.alpha_norm = match value {
                    "squared" => AlphaNorm::SquaredNorm,
                    "norm" => AlphaNorm::Norm,
                    _ => return Err(bad("alpha_norm")),
                }
            }
            "s_rule" => {
                self.s_rule = match value {
                    "target" => SRule::TargetDim,
                    "unit" => SRule::UnitDim,
                    _ => return Err(bad("s_rule")),
                }
            }
            "solver_tol" => self.solver_tol = value.parse().map_err(|_| bad("solver_tol"))?,
            "synth_dims" => self.synth.dims = parse_dims_value(value).ok_or_else(|| bad("synth_dims"))?,
            "synth_patients" => {
                self.synth.patients = value.parse().map_err(|_| bad("synth_patients"))?
            }
            "synth_controls" => {
                self.synth.controls = value.parse().map_err(|_| bad("synth_controls"))?
            }
            "synth_effect" => self.synth.effect = value.parse().map_err(|_| bad("synth_effect"))?,
            "synth_sigma" => self.synth.sigma = value.parse().map_err(|_| bad("synth_sigma"))?,
            "synth_voxels" => self.synth.voxels = list("synth_voxels")?,
            "synth_volumes" => self.synth.volumes = list("synth_volumes")?,
            other => return Err(config_err(origin, line, format!("unknown key {other:?}"))),
        }
        Ok(())
    }

    /// The sorted `key = value` rendering; parses back to an equal config.
    pub fn resolved_text(&self) -> String {
        let fmt_list = |v: &Option<Vec<usize>>| match v {
            None => "auto".to_string(),
            Some(items) => items
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join(","),
        };
        let mut pairs: Vec<(&str, String)> = vec![
            ("alpha", self.alpha.to_string()),
            (
                "alpha_norm",
                match self.alpha_norm {
                    AlphaNorm::SquaredNorm => "squared".into(),
                    AlphaNorm::Norm => "norm".into(),
                },
            ),
            (
                "eigvec",
                match self.eigvec {
                    EigvecChoice::SmallestEigenvalues => "smallest".into(),
                    EigvecChoice::LargestEigenvalues => "largest".into(),
                },
            ),
            ("grid", fmt_list(&self.grid)),
            ("grid_points", self.grid_points.to_string()),
            ("holdout_fraction", self.holdout_fraction.to_string()),
            ("method", self.method.to_string()),
            ("radius", self.radius.to_string()),
            (
                "s_rule",
                match self.s_rule {
                    SRule::TargetDim => "target".into(),
                    SRule::UnitDim => "unit".into(),
                },
            ),
            ("seed", self.seed.to_string()),
            ("solver_tol", self.solver_tol.to_string()),
            ("synth_controls", self.synth.controls.to_string()),
            ("synth_dims", self.synth.dims.to_string()),
            ("synth_effect", self.synth.effect.to_string()),
            ("synth_patients", self.synth.patients.to_string()),
            ("synth_sigma", self.synth.sigma.to_string()),
            ("synth_volumes", fmt_list(&self.synth.volumes)),
            ("synth_voxels", fmt_list(&self.synth.voxels)),
            ("welch", self.welch.to_string()),
            ("xi", self.xi.to_string()),
        ];
        pairs.sort_by_key(|(k, _)| *k);
        let mut out = String::new();
        for (k, v) in pairs {
            writeln!(out, "{k} = {v}").expect("string write");
        }
        out
    }

    /// Embedding settings; a manifest radius declaration overrides.
    pub fn embed_config(&self, manifest_radius: Option<usize>) -> EmbedConfig {
        EmbedConfig {
            radius: manifest_radius.unwrap_or(self.radius),
            xi: self.xi,
            eigvec_choice: self.eigvec,
            alpha_norm: self.alpha_norm,
            s_rule: self.s_rule,
            solver_tol: self.solver_tol,
        }
    }

    fn ttest_kind(&self) -> TtestKind {
        if self.welch {
            TtestKind::Welch
        } else {
            TtestKind::Pooled
        }
    }

    /// Materializes the synthetic settings, filling auto plants with a
    /// centered 3-wide cube and the middle three volumes.
    pub fn synthetic_spec(&self) -> Result<SyntheticSpec> {
        let dims = self.synth.dims;
        let voxels = match &self.synth.voxels {
            Some(v) => v.clone(),
            None => {
                let (cx, cy, cz) = (dims.l / 2, dims.w / 2, dims.h / 2);
                let around = |c: usize, extent: usize| {
                    let lo = c.saturating_sub(1);
                    let hi = (c + 1).min(extent - 1);
                    lo..=hi
                };
                let mut out = Vec::new();
                for z in around(cz, dims.h) {
                    for y in around(cy, dims.w) {
                        for x in around(cx, dims.l) {
                            out.push(dims.linear_index(x, y, z)?);
                        }
                    }
                }
                out
            }
        };
        let volumes = match &self.synth.volumes {
            Some(v) => v.clone(),
            None => {
                let mid = dims.t / 2;
                (mid.saturating_sub(1)..=(mid + 1).min(dims.t - 1)).collect()
            }
        };
        Ok(SyntheticSpec {
            dims,
            patients: self.synth.patients,
            controls: self.synth.controls,
            planted_voxels: voxels,
            planted_volumes: volumes,
            effect: self.synth.effect,
            sigma: self.synth.sigma,
            seed: self.seed,
        })
    }
}

/// Parses config text. `origin` names the source in errors.
pub fn parse_config(text: &str, origin: &Path) -> Result<RunConfig> {
    let mut cfg = RunConfig::default();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| config_err(origin, line, "expected key = value"))?;
        cfg.set(key.trim(), value.trim(), origin, line)?;
    }
    Ok(cfg)
}

/// Reads and parses a config file.
pub fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_config(&text, path)
}

/// Generates a synthetic cohort on disk: one raw volume per subject plus
/// a manifest whose partitions come from a seeded stratified split.
/// Returns the manifest path.
pub fn synthesize_cohort(cfg: &RunConfig, out_dir: &Path) -> Result<PathBuf> {
    let spec = cfg.synthetic_spec()?;
    let scans = generate_synthetic(&spec)?;
    let labels: Vec<ClassLabel> = scans
        .iter()
        .map(|s| s.label.expect("synthetic scans are labelled"))
        .collect();
    let split = stratified_split(&labels, cfg.holdout_fraction, cfg.seed)?;

    std::fs::create_dir_all(out_dir)?;
    let mut manifest = String::new();
    writeln!(manifest, "name = synthetic").expect("string write");
    writeln!(manifest, "dims = {}", spec.dims).expect("string write");
    writeln!(manifest, "radius = {}", cfg.radius).expect("string write");
    for (idx, scan) in scans.iter().enumerate() {
        let file = format!("{}.rawvol", scan.subject);
        write_raw_volume(scan, &out_dir.join(&file))?;
        let label = match labels[idx] {
            ClassLabel::Patient => "patient",
            ClassLabel::Control => "control",
        };
        let partition = if split.holdout.binary_search(&idx).is_ok() {
            "holdout"
        } else {
            "training"
        };
        writeln!(manifest, "subject = {}, {file}, {label}, {partition}", scan.subject)
            .expect("string write");
    }
    let manifest_path = out_dir.join("cohort.manifest");
    std::fs::write(&manifest_path, manifest)?;
    Ok(manifest_path)
}

/// Everything a completed run produced, with the artifacts on disk under
/// `out_dir`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub method: Method,
    pub sweep: SweepResult,
    pub selection: SelectionResult,
    pub training: EvaluationReport,
    pub holdout: EvaluationReport,
    /// Volumes maps were written for, ascending.
    pub map_volumes: Vec<usize>,
    pub out_dir: PathBuf,
}

fn join_indices(v: &[usize]) -> String {
    v.iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}

fn fmt_with_half(v: Option<f64>, half: Option<f64>) -> String {
    match (v, half) {
        (Some(v), Some(h)) => format!("{v:.3} ± {h:.3}"),
        (Some(v), None) => format!("{v:.3}"),
        _ => "n/a".into(),
    }
}

fn metrics_row(report: &EvaluationReport, model: &str) -> String {
    let m = &report.metrics;
    let hw = report.half_widths.as_ref();
    format!(
        "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{:.3}\n",
        report.partition,
        model,
        report.n,
        fmt_with_half(Some(m.accuracy), hw.map(|h| h.accuracy)),
        fmt_with_half(m.sensitivity, hw.and_then(|h| h.sensitivity)),
        fmt_with_half(m.specificity, hw.and_then(|h| h.specificity)),
        fmt_with_half(m.precision, hw.and_then(|h| h.precision)),
        report.chance,
    )
}

fn sweep_table(result: &SweepResult) -> String {
    let mut out = String::from("d\taccuracy\tvolumes\tnote\n");
    for p in &result.points {
        match (&p.selection, &p.error) {
            (Some(sel), _) => {
                let note = if p.d == result.chosen_d { "chosen" } else { "ok" };
                let volumes = sel
                    .volumes
                    .iter()
                    .map(|v| v.to_string())
                    .collect::<Vec<_>>()
                    .join(";");
                writeln!(out, "{}\t{:.6}\t{}\t{}", p.d, sel.accuracy, volumes, note)
                    .expect("string write");
            }
            (None, err) => {
                let msg = err.as_deref().unwrap_or("unknown failure");
                writeln!(out, "{}\tn/a\tn/a\terror: {}", p.d, msg).expect("string write");
            }
        }
    }
    out
}

fn run_stages(
    manifest_path: &Path,
    cfg: &RunConfig,
    out_dir: &Path,
    log: &mut Vec<String>,
) -> Result<RunSummary> {
    std::fs::write(out_dir.join("config.resolved"), cfg.resolved_text())?;

    let manifest = load_manifest(manifest_path).map_err(|e| e.in_stage("ingest"))?;
    let Dataset { training, holdout } =
        load_dataset(&manifest).map_err(|e| e.in_stage("ingest"))?;
    log.push(format!(
        "stage ingest: {} training + {} holdout subjects, dims {}",
        training.len(),
        holdout.len(),
        manifest.dims
    ));

    let ecfg = cfg.embed_config(manifest.radius);
    let t = manifest.dims.t;
    let grid = match (&manifest.grid_override, &cfg.grid) {
        (Some(g), _) => g.clone(),
        (None, Some(g)) => g.clone(),
        (None, None) => d_grid(t, cfg.grid_points).map_err(|e| e.in_stage("sweep"))?,
    };
    if cfg.method != Method::Original {
        log.push(format!(
            "stage reconstruct: method {}, radius {}, grid [{}]",
            cfg.method,
            ecfg.radius,
            join_indices(&grid)
        ));
    }

    let sweep_result =
        sweep(&training, cfg.method, &ecfg, &grid).map_err(|e| e.in_stage("sweep"))?;
    let selection = sweep_result.chosen().clone();
    std::fs::write(out_dir.join("sweep.tsv"), sweep_table(&sweep_result))?;
    let mut selection_text = format!(
        "method = {}\nchosen d = {}\n",
        cfg.method, sweep_result.chosen_d
    );
    selection_text.push_str(&selection.to_report());
    std::fs::write(out_dir.join("selection.txt"), selection_text)?;
    log.push(format!(
        "stage sweep: {} grid points, chosen d = {}",
        sweep_result.points.len(),
        sweep_result.chosen_d
    ));
    log.push(format!(
        "stage select: volumes [{}], training accuracy {:.6}",
        join_indices(&selection.volumes),
        selection.accuracy
    ));

    let training_eval = training_report(
        &training,
        cfg.method,
        sweep_result.chosen_d,
        &selection.volumes,
        &ecfg,
    )
    .map_err(|e| e.in_stage("train"))?;
    log.push(format!(
        "stage train: loocv accuracy {:.6}, chance {:.6}, n = {}",
        training_eval.metrics.accuracy, training_eval.chance, training_eval.n
    ));

    let holdout_eval = holdout_evaluate(
        &training,
        &holdout,
        sweep_result.chosen_d,
        &selection.volumes,
        cfg.method,
        &ecfg,
    )
    .map_err(|e| e.in_stage("eval"))?;
    log.push(format!(
        "stage eval: holdout accuracy {:.6}, chance {:.6}, n = {}",
        holdout_eval.metrics.accuracy, holdout_eval.chance, holdout_eval.n
    ));

    let mut metrics = String::from(
        "partition\tmodel\tn\taccuracy\tsensitivity\tspecificity\tprecision\tchance\n",
    );
    let model = cfg.method.to_string();
    metrics.push_str(&metrics_row(&training_eval, &model));
    metrics.push_str(&metrics_row(&holdout_eval, &model));
    std::fs::write(out_dir.join("metrics.tsv"), metrics)?;

    let maps_dir = out_dir.join("maps");
    std::fs::create_dir_all(&maps_dir)?;
    let combined: Vec<ScanVolume> = training.iter().chain(&holdout).cloned().collect();
    let modes = crate::evaluate::reduced_modes(&combined, cfg.method, sweep_result.chosen_d, &ecfg)
        .map_err(|e| e.in_stage("maps"))?;
    let mut patients: Vec<Array2<f64>> = Vec::new();
    let mut controls: Vec<Array2<f64>> = Vec::new();
    for (scan, m) in combined.iter().zip(modes) {
        match scan.label {
            Some(ClassLabel::Patient) => patients.push(m),
            Some(ClassLabel::Control) => controls.push(m),
            None => {}
        }
    }
    let mut map_volumes = selection.volumes.clone();
    map_volumes.sort_unstable();
    for &volume in &map_volumes {
        let map = build_map(
            &patients,
            &controls,
            &manifest.dims,
            volume,
            cfg.ttest_kind(),
            cfg.alpha,
        )
        .map_err(|e| e.in_stage("maps"))?;
        let (_, significant) =
            threshold_map(&map, cfg.alpha).map_err(|e| e.in_stage("maps"))?;
        write_statmap(&map, &maps_dir.join(format!("volume_{volume}.statmap")))?;
        log.push(format!(
            "stage maps: volume {volume} -> {significant} of {} voxels significant",
            manifest.dims.voxels()
        ));
    }

    Ok(RunSummary {
        method: cfg.method,
        sweep: sweep_result,
        selection,
        training: training_eval,
        holdout: holdout_eval,
        map_volumes,
        out_dir: out_dir.to_path_buf(),
    })
}

/// Executes the full pipeline for one manifest, writing artifacts under
/// `out_dir`: `config.resolved`, `sweep.tsv`, `selection.txt`,
/// `metrics.tsv`, `maps/volume_<v>.statmap`, and `run.log`. On failure,
/// artifacts produced so far stay in place next to a `FAILED` marker.
pub fn run_pipeline(manifest_path: &Path, cfg: &RunConfig, out_dir: &Path) -> Result<RunSummary> {
    std::fs::create_dir_all(out_dir)?;
    let _ = std::fs::remove_file(out_dir.join("FAILED"));
    let mut log = Vec::new();
    let result = run_stages(manifest_path, cfg, out_dir, &mut log);
    match &result {
        Ok(_) => log.push("stage report: artifacts written".into()),
        Err(e) => {
            log.push(format!("failed: {e}"));
            let _ = std::fs::write(out_dir.join("FAILED"), format!("{e}\n"));
        }
    }
    std::fs::write(out_dir.join("run.log"), log.join("\n") + "\n")?;
    result
}
