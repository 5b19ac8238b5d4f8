use super::params::{Bound, ParamSet};
use super::tape::{Tape, Var};
use crate::error::{Error, Result};

/// Gradient magnitudes below this are compared in absolute rather than relative terms.
pub const RELATIVE_ERROR_FLOOR: f64 = 1e-4;

/// Outcome of comparing tape gradients with central differences.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_param: String,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// `|a - n| / max(|a|, |n|, RELATIVE_ERROR_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    let denom = analytic.abs().max(numeric.abs()).max(RELATIVE_ERROR_FLOOR);
    (analytic - numeric).abs() / denom
}

/// Checks every component of `params` against central differences of `f`.
///
/// `f` builds a scalar on the given tape from the bound parameters. It must be
/// deterministic: any noise it uses has to be fixed outside the closure.
pub fn finite_diff_check<F>(f: F, params: &ParamSet, step: f64, tol: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Bound) -> Result<Var>,
{
    if !(step > 0.0) || !(tol > 0.0) {
        return Err(Error::Config(format!(
            "finite_diff_check needs step > 0 and tol > 0, got step={step}, tol={tol}"
        )));
    }

    let mut tape = Tape::new();
    let bound = tape.bind(params);
    let loss = f(&mut tape, &bound)?;
    let analytic = tape.backward(loss)?.for_bound(&bound);

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::without_recording();
        let b = tape.bind(p);
        let v = f(&mut tape, &b)?;
        Ok(tape.value(v).item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst_param: String::new(),
        worst_index: 0,
        analytic: 0.0,
        numeric: 0.0,
        checked: 0,
        tolerance: tol,
    };
    let mut probe = params.clone();
    for (pi, name) in params.names().iter().enumerate() {
        for idx in 0..params.get(pi).numel() {
            let orig = params.get(pi).data()[idx];
            let mut value_at = |delta: f64| -> Result<f64> {
                probe.get_mut(pi).data_mut()[idx] = orig + delta;
                let v = eval(&probe)?;
                probe.get_mut(pi).data_mut()[idx] = orig;
                if !v.is_finite() {
                    return Err(Error::NonFiniteProbe {
                        param: name.clone(),
                        index: idx,
                        delta,
                        value: v,
                    });
                }
                Ok(v)
            };
            let plus = value_at(step)?;
            let minus = value_at(-step)?;
            let numeric = (plus - minus) / (2.0 * step);
            let a = analytic[pi].data()[idx];
            let err = relative_error(a, numeric);
            report.checked += 1;
            if err > report.max_rel_error || report.worst_param.is_empty() {
                report.max_rel_error = err;
                report.worst_param = name.clone();
                report.worst_index = idx;
                report.analytic = a;
                report.numeric = numeric;
            }
        }
    }
    Ok(report)
}
