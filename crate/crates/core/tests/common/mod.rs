//! Shared helpers for the integration suites: a central finite-difference
//! gradient oracle, independent of every backward pass it checks.

use har_core::models::Model;
use har_core::Tensor;

/// Central finite differences of `loss` w.r.t. every model parameter.
///
/// Perturbs one scalar at a time by `h`, evaluating the loss through the
/// model's own forward path only.
pub fn finite_diff_grads<M, F>(model: &mut M, loss: F, h: f64) -> Vec<Tensor>
where
    M: Model,
    F: Fn(&M) -> f64,
{
    let n_params = model.parameters().len();
    let mut grads = Vec::with_capacity(n_params);
    for idx in 0..n_params {
        let shape = model.parameters()[idx].shape().to_vec();
        let len = model.parameters()[idx].len();
        let mut g = Tensor::zeros(&shape);
        for k in 0..len {
            let orig = model.parameters()[idx].data()[k];
            model.parameters_mut()[idx].data_mut()[k] = orig + h;
            let up = loss(model);
            model.parameters_mut()[idx].data_mut()[k] = orig - h;
            let down = loss(model);
            model.parameters_mut()[idx].data_mut()[k] = orig;
            g.data_mut()[k] = (up - down) / (2.0 * h);
        }
        grads.push(g);
    }
    grads
}

/// Worst per-component relative error between two gradient sets.
pub fn max_rel_error(analytic: &[Tensor], numeric: &[Tensor]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = 0.0f64;
    for (a, n) in analytic.iter().zip(numeric) {
        assert_eq!(a.shape(), n.shape());
        for (&av, &nv) in a.data().iter().zip(n.data()) {
            let denom = (av.abs() + nv.abs()).max(1e-6);
            let err = (av - nv).abs() / denom;
            if err > worst {
                worst = err;
            }
        }
    }
    worst
}
