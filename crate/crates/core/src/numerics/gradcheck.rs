use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Denominator floor for the relative error, so coordinates whose true gradient is
/// zero are compared absolutely.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// `(tensor index, flat coordinate)` of the worst coordinate.
    pub worst: Option<(usize, usize)>,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheck {
    pub fn passed(&self) -> bool {
        self.max_rel_error <= self.tolerance
    }
}

pub fn relative_error(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_ERROR_FLOOR)
}

/// Compares `analytic` against central finite differences of `loss` at `params`,
/// one coordinate at a time.
pub fn grad_check<F>(
    loss: F,
    params: &[Tensor],
    analytic: &[Tensor],
    h: f64,
    tol: f64,
) -> Result<GradCheck>
where
    F: Fn(&[Tensor]) -> Result<f64>,
{
    if !(1e-6..=1e-3).contains(&h) {
        return Err(Error::Invalid(format!("finite-difference step {h} outside [1e-6, 1e-3]")));
    }
    if params.len() != analytic.len() || params.iter().zip(analytic).any(|(p, a)| !p.same_shape(a)) {
        return Err(Error::dim("analytic gradients do not match parameter shapes"));
    }
    let base = loss(params)?;
    if !base.is_finite() {
        return Err(Error::NonFinite("loss at base point".into()));
    }
    let mut work = params.to_vec();
    let mut report = GradCheck {
        max_rel_error: 0.0,
        worst: None,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        tolerance: tol,
    };
    for ti in 0..work.len() {
        for ci in 0..work[ti].len() {
            let orig = work[ti].data()[ci];
            work[ti].data_mut()[ci] = orig + h;
            let plus = loss(&work)?;
            work[ti].data_mut()[ci] = orig - h;
            let minus = loss(&work)?;
            work[ti].data_mut()[ci] = orig;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("loss near tensor {ti} coordinate {ci}")));
            }
            let numeric = (plus - minus) / (2.0 * h);
            let a = analytic[ti].data()[ci];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = err;
                report.worst = Some((ti, ci));
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
