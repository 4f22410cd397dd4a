//! Diagonal-covariance Gaussian linear discriminant and greedy forward
//! selection of diagnostic volumes.
//!
//! Subjects are represented by a `V x d` mode matrix; a feature vector for
//! classification concatenates a chosen subset of mode columns. The
//! discriminant models each class as an axis-aligned Gaussian with shared
//! per-feature variance, and selection grows the column subset one volume
//! at a time while an accuracy functional strictly improves.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::ClassLabel;

/// Variance floor applied to pooled per-feature variances.
pub const VARIANCE_FLOOR: f64 = 1e-12;

/// Tie margin below which a prediction falls back to the control class.
const GAP_TIE: f64 = 1e-12;

/// Concatenates the selected mode columns, ascending column index,
/// voxel-major within each column.
pub fn flatten_volumes(modes: ArrayView2<f64>, volumes: &[usize]) -> Result<Array1<f64>> {
    if volumes.is_empty() {
        return Err(Error::Empty("flatten over an empty volume set"));
    }
    let d = modes.ncols();
    let mut sorted = volumes.to_vec();
    sorted.sort_unstable();
    for pair in sorted.windows(2) {
        if pair[0] == pair[1] {
            return Err(Error::InvalidArgument(format!(
                "duplicate volume index {}",
                pair[0]
            )));
        }
    }
    if let Some(&bad) = sorted.iter().find(|&&v| v >= d) {
        return Err(Error::InvalidArgument(format!(
            "volume index {bad} out of range for {d} volumes"
        )));
    }
    let v = modes.nrows();
    let mut out = Array1::<f64>::zeros(v * sorted.len());
    for (k, &vol) in sorted.iter().enumerate() {
        out.slice_mut(ndarray::s![k * v..(k + 1) * v])
            .assign(&modes.column(vol));
    }
    Ok(out)
}

/// A fitted two-class diagonal-covariance discriminant.
#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// Per-class feature means, indexed by `ClassLabel::as_index`.
    pub means: [Array1<f64>; 2],
    /// Pooled within-class per-feature variance, floored at
    /// `VARIANCE_FLOOR`.
    pub variances: Array1<f64>,
    /// Class priors (training proportions), summing to 1.
    pub priors: [f64; 2],
}

/// Fits the discriminant. Pooled variance uses denominator `n - 2`; with
/// exactly one subject per class every variance sits at the floor.
pub fn lda_fit(features: &[Array1<f64>], labels: &[ClassLabel]) -> Result<LdaModel> {
    let n = features.len();
    if n != labels.len() {
        return Err(Error::DimMismatch(format!(
            "{n} feature vectors for {} labels",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::Empty("discriminant fit over no subjects"));
    }
    let p = features[0].len();
    if features.iter().any(|f| f.len() != p) {
        return Err(Error::DimMismatch("feature vectors differ in length".into()));
    }

    // A missing class subsumes the n >= 2 requirement: one subject cannot
    // cover both classes.
    let counts = [
        labels.iter().filter(|l| **l == ClassLabel::Control).count(),
        labels.iter().filter(|l| **l == ClassLabel::Patient).count(),
    ];
    if counts[0] == 0 || counts[1] == 0 {
        return Err(Error::SingleClass);
    }

    let mut means = [Array1::<f64>::zeros(p), Array1::<f64>::zeros(p)];
    for (f, l) in features.iter().zip(labels) {
        means[l.as_index()] += f;
    }
    for k in 0..2 {
        means[k] /= counts[k] as f64;
    }

    let mut scatter = Array1::<f64>::zeros(p);
    for (f, l) in features.iter().zip(labels) {
        let r = f - &means[l.as_index()];
        scatter += &(&r * &r);
    }
    let variances = if n > 2 {
        scatter.mapv(|s| (s / (n - 2) as f64).max(VARIANCE_FLOOR))
    } else {
        Array1::from_elem(p, VARIANCE_FLOOR)
    };

    Ok(LdaModel {
        means,
        variances,
        priors: [counts[0] as f64 / n as f64, counts[1] as f64 / n as f64],
    })
}

/// Predicts a class for `z` and returns the log-posterior gap
/// (patient score minus control score). Gaps within the tie margin go to
/// the control class.
pub fn lda_predict(model: &LdaModel, z: ArrayView1<f64>) -> Result<(ClassLabel, f64)> {
    let p = model.variances.len();
    if z.len() != p {
        return Err(Error::DimMismatch(format!(
            "input has {} features, model has {p}",
            z.len()
        )));
    }
    let mut scores = [0.0f64; 2];
    for k in 0..2 {
        let mut quad = 0.0;
        for j in 0..p {
            let r = z[j] - model.means[k][j];
            quad += r * r / model.variances[j];
        }
        scores[k] = model.priors[k].ln() - 0.5 * quad;
    }
    let gap = scores[1] - scores[0];
    let label = if gap > GAP_TIE {
        ClassLabel::Patient
    } else {
        ClassLabel::Control
    };
    Ok((label, gap))
}

/// Outcome of the greedy volume selection.
#[derive(Debug, Clone, PartialEq)]
pub struct SelectionResult {
    /// Selected volume indices in the order they were accepted.
    pub volumes: Vec<usize>,
    /// Accuracy after each accepted step; strictly increasing.
    pub accuracy_trace: Vec<f64>,
    /// Accuracy of the final set.
    pub accuracy: f64,
}

impl SelectionResult {
    /// Text form: one line of accepted indices, one accuracy per step.
    pub fn to_report(&self) -> String {
        let mut out = String::new();
        out.push_str("volumes:");
        for v in &self.volumes {
            out.push_str(&format!(" {v}"));
        }
        out.push('\n');
        for (step, acc) in self.accuracy_trace.iter().enumerate() {
            out.push_str(&format!("step {} accuracy {:.6}\n", step + 1, acc));
        }
        out
    }
}

/// Greedy forward selection of mode columns.
///
/// `evaluate` scores a candidate feature set (one vector per subject) by
/// the number of correctly classified subjects. Each round evaluates every
/// unselected volume in parallel and keeps the best (ties break toward the
/// lowest index); after the first round an addition is accepted only when
/// it classifies at least one more subject correctly.
pub fn sfs_select<F>(
    modes: &[Array2<f64>],
    labels: &[ClassLabel],
    evaluate: &F,
) -> Result<SelectionResult>
where
    F: Fn(&[Array1<f64>], &[ClassLabel]) -> Result<usize> + Sync,
{
    let n = modes.len();
    if n != labels.len() {
        return Err(Error::DimMismatch(format!(
            "{n} mode matrices for {} labels",
            labels.len()
        )));
    }
    if n == 0 {
        return Err(Error::Empty("selection over an empty dataset"));
    }
    let shape = modes[0].dim();
    if modes.iter().any(|m| m.dim() != shape) {
        return Err(Error::DimMismatch("mode matrices differ in shape".into()));
    }
    let d = shape.1;
    if d == 0 {
        return Err(Error::Empty("selection with no volumes"));
    }

    let mut chosen: Vec<usize> = Vec::new();
    let mut trace: Vec<f64> = Vec::new();
    let mut best_correct: Option<usize> = None;

    loop {
        let remaining: Vec<usize> = (0..d).filter(|t| !chosen.contains(t)).collect();
        if remaining.is_empty() {
            break;
        }
        let scored: Vec<(usize, usize)> = remaining
            .par_iter()
            .map(|&t| {
                let mut vols = chosen.clone();
                vols.push(t);
                let feats: Vec<Array1<f64>> = modes
                    .iter()
                    .map(|m| flatten_volumes(m.view(), &vols))
                    .collect::<Result<_>>()?;
                Ok((t, evaluate(&feats, labels)?))
            })
            .collect::<Result<_>>()?;

        // Ascending candidate order plus strict `>` keeps the lowest index
        // on ties.
        let mut round_best: Option<(usize, usize)> = None;
        for (t, c) in scored {
            if round_best.map_or(true, |(_, bc)| c > bc) {
                round_best = Some((t, c));
            }
        }
        let (t_star, c_star) = round_best.unwrap();

        let accept = match best_correct {
            None => true,
            Some(bc) => c_star >= bc + 1,
        };
        if !accept {
            break;
        }
        chosen.push(t_star);
        trace.push(c_star as f64 / n as f64);
        best_correct = Some(c_star);
    }

    let accuracy = trace.last().copied().unwrap_or(0.0);
    Ok(SelectionResult {
        volumes: chosen,
        accuracy_trace: trace,
        accuracy,
    })
}
