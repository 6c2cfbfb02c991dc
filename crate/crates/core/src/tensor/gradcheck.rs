//! Central-difference verification of reverse-mode gradients.

use super::params::{ParamId, ParamStore};
use super::tape::{Tape, Var};
use super::Result;

pub const FD_STEP: f64 = 1e-5;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    /// Largest `|a - n| / max(1, |a|, |n|)` over all checked elements.
    pub max_rel_error: f64,
    /// Parameter name and flat element index of the worst element.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

impl GradCheckReport {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_error < tolerance
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

/// Compares the tape gradient of the scalar produced by `f` against central
/// differences for every element of `params`.
///
/// `f` must be a pure function of the store; it is re-run twice per element.
pub fn grad_check<F>(store: &mut ParamStore, params: &[ParamId], f: F) -> Result<GradCheckReport>
where
    F: Fn(&ParamStore, &mut Tape) -> Result<Var>,
{
    store.zero_grad();
    let mut tape = Tape::new();
    let root = f(store, &mut tape)?;
    tape.backward(root, store)?;
    let analytic: Vec<Vec<f64>> = params
        .iter()
        .map(|&id| store.grad(id).data().to_vec())
        .collect();
    store.zero_grad();

    let eval = |store: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new();
        let root = f(store, &mut tape)?;
        Ok(tape.scalar(root))
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
    };
    for (&id, grads) in params.iter().zip(&analytic) {
        for (k, &a) in grads.iter().enumerate() {
            let orig = store.value(id).data()[k];
            store.get_mut(id).value_mut().data_mut()[k] = orig + FD_STEP;
            let plus = eval(store)?;
            store.get_mut(id).value_mut().data_mut()[k] = orig - FD_STEP;
            let minus = eval(store)?;
            store.get_mut(id).value_mut().data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * FD_STEP);
            let err = relative_error(a, numeric);
            report.checked += 1;
            if report.worst.is_none() || err > report.max_rel_error {
                report.max_rel_error = err;
                report.worst = Some((store.get(id).name().to_string(), k));
            }
        }
    }
    Ok(report)
}
