//! Central-difference verification of analytic gradients.

use super::params::ModelParams;
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Coordinate where the maximum was attained.
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares the analytic gradient returned by `f` against central
/// differences with step `h` on every coordinate.
pub fn grad_check<F>(f: F, point: &[f64], h: f64) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    let all: Vec<usize> = (0..point.len()).collect();
    grad_check_coords(f, point, h, &all)
}

/// Like [`grad_check`] but only differentiates numerically along `coords`.
pub fn grad_check_coords<F>(mut f: F, point: &[f64], h: f64, coords: &[usize]) -> Result<GradCheckReport>
where
    F: FnMut(&[f64]) -> Result<(f64, Vec<f64>)>,
{
    if h <= 0.0 || !h.is_finite() {
        return Err(Error::Parameter(format!("step h must be positive, got {h}")));
    }
    let (v0, analytic) = f(point)?;
    let (v1, _) = f(point)?;
    if v0.to_bits() != v1.to_bits() {
        return Err(Error::Contract(format!(
            "function is not deterministic: {v0} then {v1} at the same point"
        )));
    }
    if analytic.len() != point.len() {
        return Err(Error::Shape(format!(
            "gradient has {} entries for {} coordinates",
            analytic.len(),
            point.len()
        )));
    }
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
    };
    let mut x = point.to_vec();
    for &i in coords {
        let orig = x[i];
        x[i] = orig + h;
        let (plus, _) = f(&x)?;
        x[i] = orig - h;
        let (minus, _) = f(&x)?;
        x[i] = orig;
        let numeric = (plus - minus) / (2.0 * h);
        let err = relative_error(analytic[i], numeric);
        if err > report.max_rel_error || report.checked == 0 {
            report.max_rel_error = err;
            report.worst_index = i;
            report.analytic = analytic[i];
            report.numeric = numeric;
        }
        report.checked += 1;
    }
    Ok(report)
}

/// Adapts a loss built on a tape from `params` into a flat scalar function
/// of all parameter values (name order, as [`ModelParams::flatten`]).
pub fn params_fn<'a, B>(
    params: &'a ModelParams<f64>,
    build: B,
) -> impl FnMut(&[f64]) -> Result<(f64, Vec<f64>)> + 'a
where
    B: Fn(&mut Tape<f64>, &ModelParams<f64>) -> Result<Var> + 'a,
{
    let mut work = params.clone();
    move |flat: &[f64]| {
        work.assign_flat(flat)?;
        let mut tape = Tape::new();
        let loss = build(&mut tape, &work)?;
        tape.backward(loss)?;
        let grads = tape.param_grads();
        let mut g = Vec::with_capacity(flat.len());
        for (name, t) in work.iter() {
            match grads.get(name) {
                Some(v) => g.extend_from_slice(v),
                None => g.extend(std::iter::repeat_n(0.0, t.len())),
            }
        }
        Ok((tape.scalar_value(loss), g))
    }
}
