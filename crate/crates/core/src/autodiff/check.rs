//! Central finite-difference gradient checking.

use super::{Graph, ParamSet, Var};
use crate::error::Result;

/// Default perturbation for central differences.
pub const DEFAULT_EPS: f64 = 1e-5;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    /// `name[flat index]` of the coordinate with the largest error.
    pub worst: Option<String>,
    pub checked: usize,
    pub pass: bool,
    /// Set when a non-finite value showed up, naming where.
    pub failure: Option<String>,
}

/// `|a - n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares analytic gradients of `build` against central differences over
/// every coordinate of every non-frozen parameter.
///
/// `build` must be deterministic: it is re-run twice per coordinate against
/// a perturbed copy of `params`. Passing requires `max_rel_err < tolerance`.
pub fn grad_check<F>(params: &ParamSet, build: F, eps: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<'_>) -> Result<Var>,
{
    let eval = |p: &ParamSet| -> Result<f64> {
        let mut g = Graph::new(p);
        let loss = build(&mut g)?;
        Ok(g.scalar(loss))
    };

    let mut g = Graph::new(params);
    let loss = build(&mut g)?;
    let base = g.scalar(loss);
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst: None,
        checked: 0,
        pass: false,
        failure: None,
    };
    if !base.is_finite() {
        report.failure = Some(format!("loss is {base}"));
        return Ok(report);
    }
    let grads = g.backward(loss)?;
    drop(g);

    let mut work = params.clone();
    for id in params.ids() {
        if params.is_frozen(id) {
            continue;
        }
        let analytic = grads.dense_or_zero(id, params);
        for (k, &want) in analytic.iter().enumerate() {
            let orig = work.get(id).values()[k];
            work.get_mut(id).values_mut()[k] = orig + eps;
            let plus = eval(&work)?;
            work.get_mut(id).values_mut()[k] = orig - eps;
            let minus = eval(&work)?;
            work.get_mut(id).values_mut()[k] = orig;

            let location = || format!("{}[{k}]", params.name(id));
            let numeric = (plus - minus) / (2.0 * eps);
            if !numeric.is_finite() || !want.is_finite() {
                report.failure = Some(format!(
                    "{}: analytic {want} numeric {numeric}",
                    location()
                ));
                return Ok(report);
            }
            let err = relative_error(want, numeric);
            if err > report.max_rel_err || report.worst.is_none() {
                report.max_rel_err = report.max_rel_err.max(err);
                report.worst = Some(location());
            }
            report.checked += 1;
        }
    }
    report.pass = report.max_rel_err < tolerance;
    Ok(report)
}
