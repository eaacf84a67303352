//! Central-difference verification of tape gradients.

use super::params::{Bound, ParamStore};
use super::tape::{Tape, Var};
use super::DiffError;
use crate::scalar::Scalar;

/// Outcome of [`finite_diff_check`].
#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// `(parameter name, flat index)` where the maximum occurred.
    pub worst: Option<(String, usize)>,
    /// `(analytic, numeric)` at the worst entry.
    pub worst_values: Option<(f64, f64)>,
    pub checked: usize,
}

/// Compares reverse-mode gradients of `loss` against central differences
/// with step `h`, returning the worst relative error
/// `|analytic − numeric| / max(|analytic|, |numeric|, 1e-12)`.
pub fn finite_diff_check<T, F>(
    loss: F,
    params: &ParamStore<T>,
    h: T,
) -> Result<GradCheckReport, DiffError>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &Bound) -> Result<Var, DiffError>,
{
    finite_diff_check_with_floor(loss, params, h, 1e-12)
}

/// Same as [`finite_diff_check`] with a caller-chosen denominator floor.
/// A larger floor stops near-zero entries, where roundoff dominates the
/// difference quotient, from swamping the report.
pub fn finite_diff_check_with_floor<T, F>(
    loss: F,
    params: &ParamStore<T>,
    h: T,
    floor: f64,
) -> Result<GradCheckReport, DiffError>
where
    T: Scalar,
    F: Fn(&mut Tape<T>, &Bound) -> Result<Var, DiffError>,
{
    if !(h > T::zero()) {
        return Err(DiffError::InvalidArgument(format!("step {h} must be positive")));
    }
    let eval = |p: &ParamStore<T>| -> Result<T, DiffError> {
        let mut tape = Tape::new();
        let bound = p.bind(&mut tape, false);
        let out = loss(&mut tape, &bound)?;
        let v = tape.scalar_value(out);
        if v.is_finite() {
            Ok(v)
        } else {
            Err(DiffError::NonFinite { primitive: "loss" })
        }
    };

    let mut tape = Tape::new();
    let bound = params.bind(&mut tape, true);
    let out = loss(&mut tape, &bound)?;
    if !tape.scalar_value(out).is_finite() {
        return Err(DiffError::NonFinite { primitive: "loss" });
    }
    let analytic = bound.gradients(&tape.backward(out)?, params);

    let mut work = params.clone();
    let two_h = h + h;
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        worst_values: None,
        checked: 0,
    };
    for (pi, grad) in analytic.iter().enumerate() {
        for k in 0..grad.len() {
            let orig = work.values()[pi].as_slice()[k];
            work.values_mut()[pi].as_mut_slice()[k] = orig + h;
            let plus = eval(&work)?;
            work.values_mut()[pi].as_mut_slice()[k] = orig - h;
            let minus = eval(&work)?;
            work.values_mut()[pi].as_mut_slice()[k] = orig;

            let numeric = ((plus - minus) / two_h).to_f64_lossy();
            let exact = grad.as_slice()[k].to_f64_lossy();
            let denom = exact.abs().max(numeric.abs()).max(floor);
            let rel = (exact - numeric).abs() / denom;
            report.checked += 1;
            if report.worst.is_none() || rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((params.name(super::ParamId(pi)).to_string(), k));
                report.worst_values = Some((exact, numeric));
            }
        }
    }
    Ok(report)
}
