//! Central finite-difference gradient verification.
//!
//! This is the independent oracle the rest of the crate is checked against:
//! it never touches the tape, only re-evaluates the supplied scalar function
//! at perturbed parameter values.

use super::tensor::Tensor;
use crate::error::Result;

/// Per-parameter worst and mean error.
#[derive(Debug, Clone)]
pub struct ParamGradError {
    pub param: usize,
    pub max_rel: f64,
    pub mean_rel: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub per_param: Vec<ParamGradError>,
    pub max_rel_err: f64,
    pub mean_rel_err: f64,
}

/// Measurement floor for the error denominator. A central difference with
/// step h carries O(h²) truncation error, so gradients smaller than ~1e-4
/// cannot be resolved relatively; below the floor the comparison is
/// effectively absolute (zeros compare at machine scale).
const DENOM_FLOOR: f64 = 1e-4;

fn grad_error(fd: f64, analytic: f64) -> f64 {
    (fd - analytic).abs() / fd.abs().max(analytic.abs()).max(DENOM_FLOOR)
}

/// Compares `analytic` gradients of `scalar_fn` against central finite
/// differences with the given step, coordinate by coordinate.
///
/// `scalar_fn` must be deterministic for fixed params. The report never
/// fails by itself — callers assert on `max_rel_err`.
pub fn finite_diff_check<F>(
    scalar_fn: F,
    params: &[Tensor],
    analytic: &[Tensor],
    step: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&[Tensor]) -> Result<f64>,
{
    assert_eq!(params.len(), analytic.len(), "one analytic gradient per parameter");
    let mut per_param = Vec::with_capacity(params.len());
    let mut global_max = 0.0f64;
    let mut global_sum = 0.0f64;
    let mut global_count = 0usize;

    let mut work: Vec<Tensor> = params.to_vec();
    for (pi, grad) in analytic.iter().enumerate() {
        assert_eq!(
            params[pi].shape(),
            grad.shape(),
            "gradient {pi} shaped like its parameter"
        );
        let mut max_rel = 0.0f64;
        let mut sum_rel = 0.0f64;
        for ci in 0..params[pi].len() {
            let orig = params[pi].data()[ci];
            work[pi].data_mut()[ci] = orig + step;
            let up = scalar_fn(&work)?;
            work[pi].data_mut()[ci] = orig - step;
            let down = scalar_fn(&work)?;
            work[pi].data_mut()[ci] = orig;
            let fd = (up - down) / (2.0 * step);
            let err = grad_error(fd, grad.data()[ci]);
            max_rel = max_rel.max(err);
            sum_rel += err;
        }
        let count = params[pi].len();
        per_param.push(ParamGradError {
            param: pi,
            max_rel,
            mean_rel: sum_rel / count as f64,
        });
        global_max = global_max.max(max_rel);
        global_sum += sum_rel;
        global_count += count;
    }

    Ok(GradCheckReport {
        per_param,
        max_rel_err: global_max,
        mean_rel_err: if global_count == 0 { 0.0 } else { global_sum / global_count as f64 },
    })
}
