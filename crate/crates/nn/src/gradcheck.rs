//! Finite-difference verification of analytic gradients (64-bit only).

use rand::seq::index::sample;
use rand::Rng;

use crate::error::Result;
use crate::graph::{Graph, NodeId};
use crate::params::ParamStore;

/// Denominator floor for the relative error, so entries whose true gradient
/// is zero are judged on absolute error.
pub const REL_ERROR_FLOOR: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub checked: usize,
}

fn eval<B>(store: &ParamStore<f64>, build: &B) -> Result<f64>
where
    B: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<NodeId>,
{
    let mut g = Graph::new();
    let l = build(&mut g, store)?;
    Ok(g.scalar(l))
}

/// Compares back-propagated gradients with central differences of step
/// `eps`. `per_param` limits how many entries of each parameter tensor are
/// probed (chosen at random); `None` probes every entry.
pub fn gradient_check<B, R>(
    store: &mut ParamStore<f64>,
    build: B,
    eps: f64,
    per_param: Option<usize>,
    rng: &mut R,
) -> Result<GradCheckReport>
where
    B: Fn(&mut Graph<f64>, &ParamStore<f64>) -> Result<NodeId>,
    R: Rng + ?Sized,
{
    store.zero_grad();
    {
        let mut g = Graph::new();
        let l = build(&mut g, store)?;
        g.backward(l, store)?;
    }
    let ids: Vec<_> = store.ids().collect();
    let mut report = GradCheckReport { max_rel_error: 0.0, max_abs_error: 0.0, checked: 0 };
    for id in ids {
        let n = store.value(id).len();
        let which: Vec<usize> = match per_param {
            Some(k) if k < n => sample(rng, n, k).into_vec(),
            _ => (0..n).collect(),
        };
        for i in which {
            let analytic = store.grad(id).data()[i];
            let orig = store.value(id).data()[i];
            store.value_mut(id).data_mut()[i] = orig + eps;
            let up = eval(store, &build)?;
            store.value_mut(id).data_mut()[i] = orig - eps;
            let down = eval(store, &build)?;
            store.value_mut(id).data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * eps);
            let abs = (analytic - numeric).abs();
            let rel = abs / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR);
            report.max_abs_error = report.max_abs_error.max(abs);
            report.max_rel_error = report.max_rel_error.max(rel);
            report.checked += 1;
        }
    }
    Ok(report)
}
