//! Python bindings for the voxelle pipeline.
//!
//! The module mirrors the library's main entry points at smoke-test
//! scale: scan containers, the spatial embedding, the PCA baseline,
//! voxel statistics, synthetic cohorts, and full pipeline runs. Matrices
//! cross the boundary as nested lists, small enough here that the
//! convenience beats a numpy dependency.

use std::path::{Path, PathBuf};

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use voxelle::evaluate;
use voxelle::lle::{reconstruct_scan, EmbedConfig};
use voxelle::pca::PcaModel;
use voxelle::pipeline::{load_config, run_pipeline, synthesize_cohort, RunConfig};
use voxelle::statmap::{voxel_ttest, TtestKind};
use voxelle::synth::generate_synthetic;
use voxelle::{ClassLabel, GridDims, ScanVolume};

fn py_err(e: voxelle::Error) -> PyErr {
    match e {
        voxelle::Error::Io(_) => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn parse_label(text: &str) -> PyResult<ClassLabel> {
    match text {
        "patient" => Ok(ClassLabel::Patient),
        "control" => Ok(ClassLabel::Control),
        other => Err(PyValueError::new_err(format!(
            "label must be 'patient' or 'control', got '{other}'"
        ))),
    }
}

fn label_name(label: ClassLabel) -> &'static str {
    match label {
        ClassLabel::Patient => "patient",
        ClassLabel::Control => "control",
    }
}

fn rows(m: &ndarray::Array2<f64>) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn read_scan(path: &Path) -> PyResult<ScanVolume> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("rawvol") => voxelle::io::read_raw_volume(path).map_err(py_err),
        Some("nii") => voxelle::io::read_nifti1(path).map_err(py_err),
        _ => Err(PyValueError::new_err(format!(
            "unsupported scan extension on {}",
            path.display()
        ))),
    }
}

/// One subject's 4D scan: spatial extents `(l, w, h)` and a waveform of
/// length `t` per voxel.
#[pyclass(name = "Scan", skip_from_py_object)]
#[derive(Clone)]
struct PyScan {
    inner: ScanVolume,
}

#[pymethods]
impl PyScan {
    #[new]
    #[pyo3(signature = (dims, samples, subject = String::from("scan"), label = None))]
    fn new(
        dims: (usize, usize, usize, usize),
        samples: Vec<f64>,
        subject: String,
        label: Option<String>,
    ) -> PyResult<Self> {
        let dims = GridDims::new(dims.0, dims.1, dims.2, dims.3).map_err(py_err)?;
        let label = label.as_deref().map(parse_label).transpose()?;
        let inner = ScanVolume::new(dims, samples, subject, label).map_err(py_err)?;
        Ok(PyScan { inner })
    }

    /// Loads a `.rawvol` or uncompressed single-file `.nii` scan.
    #[staticmethod]
    fn read(path: PathBuf) -> PyResult<Self> {
        Ok(PyScan {
            inner: read_scan(&path)?,
        })
    }

    /// Writes the scan in the raw volume format.
    fn write(&self, path: PathBuf) -> PyResult<()> {
        voxelle::io::write_raw_volume(&self.inner, &path).map_err(py_err)
    }

    #[getter]
    fn dims(&self) -> (usize, usize, usize, usize) {
        let d = self.inner.dims();
        (d.l, d.w, d.h, d.t)
    }

    #[getter]
    fn subject(&self) -> String {
        self.inner.subject.clone()
    }

    #[getter]
    fn label(&self) -> Option<&'static str> {
        self.inner.label.map(label_name)
    }

    /// The length-`t` waveform of one voxel (linear index).
    fn waveform(&self, voxel: usize) -> PyResult<Vec<f64>> {
        let d = self.inner.dims();
        if voxel >= d.voxels() {
            return Err(PyValueError::new_err(format!(
                "voxel {voxel} out of range for {} voxels",
                d.voxels()
            )));
        }
        Ok(self.inner.waveform(voxel).to_vec())
    }

    /// All samples, voxel-major: sample `(v, t)` at index `v*t_len + t`.
    fn samples(&self) -> Vec<f64> {
        self.inner.samples().to_vec()
    }

    fn __repr__(&self) -> String {
        let d = self.inner.dims();
        let label = match self.inner.label {
            Some(l) => format!("'{}'", label_name(l)),
            None => "None".to_string(),
        };
        format!(
            "Scan(subject='{}', dims=({}, {}, {}, {}), label={label})",
            self.inner.subject, d.l, d.w, d.h, d.t
        )
    }
}

/// Embeds one scan into `d` spatially smooth modes. Returns
/// `(modes, eigenvalues)` where `modes` is a voxels-by-`d` nested list
/// with orthonormal, zero-sum columns.
#[pyfunction]
#[pyo3(signature = (scan, d, radius = 1, xi = 0.0))]
fn embed(scan: &PyScan, d: usize, radius: usize, xi: f64) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let cfg = EmbedConfig {
        radius,
        xi,
        ..EmbedConfig::default()
    };
    let out = reconstruct_scan(&scan.inner, d, &cfg).map_err(py_err)?;
    Ok((rows(&out.modes), out.eigenvalues.to_vec()))
}

/// Projects one scan onto its top `d` principal components. Returns
/// `(scores, singular_values)` with `scores` voxels-by-`d`.
#[pyfunction]
fn pca_modes(scan: &PyScan, d: usize) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let x = scan.inner.to_matrix();
    let model = PcaModel::fit(x.view()).map_err(py_err)?;
    let scores = model.scores(x.view(), d).map_err(py_err)?;
    Ok((rows(&scores), model.singular_values.to_vec()))
}

/// Two-sample t-test. Returns `(t, p, df)`; Welch uses per-group
/// variances instead of the pooled estimate.
#[pyfunction]
#[pyo3(signature = (a, b, welch = false))]
fn ttest(a: Vec<f64>, b: Vec<f64>, welch: bool) -> PyResult<(f64, f64, f64)> {
    let kind = if welch { TtestKind::Welch } else { TtestKind::Pooled };
    let r = voxel_ttest(&a, &b, kind).map_err(py_err)?;
    Ok((r.t, r.p, r.df))
}

/// 95% binomial half-width for a proportion `p` estimated from `n`
/// subjects.
#[pyfunction]
fn binomial_error(p: f64, n: usize) -> PyResult<f64> {
    evaluate::binomial_error(p, n).map_err(py_err)
}

/// Log-spaced candidate dimensions between 1 and `t`.
#[pyfunction]
fn d_grid(t: usize, points: usize) -> PyResult<Vec<usize>> {
    evaluate::d_grid(t, points).map_err(py_err)
}

/// Generates a labelled synthetic cohort with a planted group effect.
/// Plant locations default to a centered voxel block and the middle
/// volumes, as in the pipeline's `synth` stage.
#[pyfunction]
#[pyo3(signature = (dims, patients, controls, effect = 2.0, sigma = 1.0, seed = 0, voxels = None, volumes = None))]
#[allow(clippy::too_many_arguments)]
fn synthesize(
    dims: (usize, usize, usize, usize),
    patients: usize,
    controls: usize,
    effect: f64,
    sigma: f64,
    seed: u64,
    voxels: Option<Vec<usize>>,
    volumes: Option<Vec<usize>>,
) -> PyResult<Vec<PyScan>> {
    let mut cfg = RunConfig::default();
    cfg.synth.dims = GridDims::new(dims.0, dims.1, dims.2, dims.3).map_err(py_err)?;
    cfg.synth.patients = patients;
    cfg.synth.controls = controls;
    cfg.synth.effect = effect;
    cfg.synth.sigma = sigma;
    cfg.synth.voxels = voxels;
    cfg.synth.volumes = volumes;
    cfg.seed = seed;
    let spec = cfg.synthetic_spec().map_err(py_err)?;
    let scans = generate_synthetic(&spec).map_err(py_err)?;
    Ok(scans.into_iter().map(|inner| PyScan { inner }).collect())
}

/// Writes a synthetic cohort plus manifest under `out_dir` and returns
/// the manifest path. `config` is an optional run-config file.
#[pyfunction]
#[pyo3(signature = (out_dir, config = None, seed = None))]
fn synth_cohort(out_dir: PathBuf, config: Option<PathBuf>, seed: Option<u64>) -> PyResult<PathBuf> {
    let mut cfg = match config {
        Some(path) => load_config(&path).map_err(py_err)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    synthesize_cohort(&cfg, &out_dir).map_err(py_err)
}

/// Key numbers from one full pipeline run.
#[pyclass(name = "RunSummary")]
struct PyRunSummary {
    #[pyo3(get)]
    method: String,
    #[pyo3(get)]
    chosen_d: usize,
    #[pyo3(get)]
    volumes: Vec<usize>,
    #[pyo3(get)]
    training_accuracy: f64,
    #[pyo3(get)]
    training_chance: f64,
    #[pyo3(get)]
    holdout_accuracy: f64,
    #[pyo3(get)]
    holdout_chance: f64,
    #[pyo3(get)]
    out_dir: PathBuf,
}

#[pymethods]
impl PyRunSummary {
    fn __repr__(&self) -> String {
        format!(
            "RunSummary(method='{}', chosen_d={}, training={:.3}, holdout={:.3})",
            self.method, self.chosen_d, self.training_accuracy, self.holdout_accuracy
        )
    }
}

/// Runs the full pipeline on a dataset manifest, writing artifacts
/// under `out_dir`.
#[pyfunction]
#[pyo3(signature = (manifest, out_dir, config = None, seed = None))]
fn run(
    manifest: PathBuf,
    out_dir: PathBuf,
    config: Option<PathBuf>,
    seed: Option<u64>,
) -> PyResult<PyRunSummary> {
    let mut cfg = match config {
        Some(path) => load_config(&path).map_err(py_err)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = seed {
        cfg.seed = seed;
    }
    let summary = run_pipeline(&manifest, &cfg, &out_dir).map_err(py_err)?;
    Ok(PyRunSummary {
        method: summary.method.to_string(),
        chosen_d: summary.sweep.chosen_d,
        volumes: summary.selection.volumes.clone(),
        training_accuracy: summary.training.metrics.accuracy,
        training_chance: summary.training.chance,
        holdout_accuracy: summary.holdout.metrics.accuracy,
        holdout_chance: summary.holdout.chance,
        out_dir: summary.out_dir,
    })
}

#[pymodule]
fn voxelle_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScan>()?;
    m.add_class::<PyRunSummary>()?;
    m.add_function(wrap_pyfunction!(embed, m)?)?;
    m.add_function(wrap_pyfunction!(pca_modes, m)?)?;
    m.add_function(wrap_pyfunction!(ttest, m)?)?;
    m.add_function(wrap_pyfunction!(binomial_error, m)?)?;
    m.add_function(wrap_pyfunction!(d_grid, m)?)?;
    m.add_function(wrap_pyfunction!(synthesize, m)?)?;
    m.add_function(wrap_pyfunction!(synth_cohort, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    Ok(())
}
