//! Central finite-difference gradient checking.

use crate::params::{ParamId, ParamStore};
use crate::scalar::Scalar;

use super::{Graph, Var};

/// Worst discrepancy found for one parameter tensor.
#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub checked: usize,
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub worst_analytic: f64,
    pub worst_numeric: f64,
}

/// Relative error `|a − n| / max(|a|, |n|)`, defined as 0 when both magnitudes are below `floor`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    let scale = analytic.abs().max(numeric.abs());
    if scale < floor {
        0.0
    } else {
        (analytic - numeric).abs() / scale
    }
}

/// Compare analytic gradients of `loss_fn` against central differences with step `h`.
///
/// At most `per_param` entries of each tensor are probed, spread evenly over
/// the tensor. `loss_fn` must be deterministic (no dropout, fixed noise).
pub fn check_gradients<T, F>(
    store: &ParamStore<T>,
    loss_fn: F,
    h: f64,
    per_param: usize,
    floor: f64,
) -> Vec<ParamCheck>
where
    T: Scalar,
    F: Fn(&mut Graph<'_, T>) -> Var,
{
    let analytic = {
        let mut g = Graph::new(store);
        let loss = loss_fn(&mut g);
        g.backward(loss)
    };
    let eval = |s: &ParamStore<T>| -> f64 {
        let mut g = Graph::new(s);
        let loss = loss_fn(&mut g);
        g.scalar(loss).as_f64()
    };

    let mut work = store.clone();
    let mut reports = Vec::new();
    for id in store.ids() {
        let n = store.get(id).len();
        let stride = (n / per_param.max(1)).max(1);
        let mut report = ParamCheck {
            name: store.name(id).to_owned(),
            checked: 0,
            max_rel_error: 0.0,
            max_abs_error: 0.0,
            worst_analytic: 0.0,
            worst_numeric: 0.0,
        };
        for flat in (0..n).step_by(stride).take(per_param) {
            let a = analytic_entry(&analytic, id, flat);
            let orig = flat_get(&work, id, flat);
            flat_set(&mut work, id, flat, T::c(orig.as_f64() + h));
            let plus = eval(&work);
            flat_set(&mut work, id, flat, T::c(orig.as_f64() - h));
            let minus = eval(&work);
            flat_set(&mut work, id, flat, orig);
            let num = (plus - minus) / (2.0 * h);
            let rel = relative_error(a, num, floor);
            report.checked += 1;
            report.max_abs_error = report.max_abs_error.max((a - num).abs());
            if rel >= report.max_rel_error {
                report.max_rel_error = rel;
                report.worst_analytic = a;
                report.worst_numeric = num;
            }
        }
        reports.push(report);
    }
    reports
}

fn analytic_entry<T: Scalar>(grads: &crate::params::Gradients<T>, id: ParamId, flat: usize) -> f64 {
    grads
        .get(id)
        .map(|g| g.iter().nth(flat).copied().unwrap_or(T::zero()).as_f64())
        .unwrap_or(0.0)
}

fn flat_get<T: Scalar>(s: &ParamStore<T>, id: ParamId, flat: usize) -> T {
    let a = s.get(id);
    let cols = a.ncols();
    a[[flat / cols, flat % cols]]
}

fn flat_set<T: Scalar>(s: &mut ParamStore<T>, id: ParamId, flat: usize, v: T) {
    let a = s.get_mut(id);
    let cols = a.ncols();
    a[[flat / cols, flat % cols]] = v;
}
