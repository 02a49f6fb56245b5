//! Central finite-difference gradient checking. Run in `f64`; finite
//! differences are unreliable at 32-bit.

use super::{Graph, Result, Tensor, TensorError, VarId};
use std::collections::BTreeMap;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// max over coordinates of |g_a - g_n| / max(1e-8, |g_a| + |g_n|)
    pub max_rel_error: f64,
    /// (param name, coordinate) attaining the max.
    pub worst: Option<(String, usize)>,
    pub coordinates_checked: usize,
}

/// Compares analytic gradients of a scalar-valued function against central
/// finite differences `(f(x+eps) - f(x-eps)) / (2 eps)` per coordinate of
/// every parameter.
///
/// `forward` must rebuild the graph from the given parameters and return
/// the scalar output node; it is invoked once per probe, so any sampling
/// it relies on must be held fixed by the caller.
pub fn check_gradients<F>(
    params: &mut BTreeMap<String, Tensor<f64>>,
    eps: f64,
    mut forward: F,
) -> Result<GradCheckReport>
where
    F: FnMut(&mut Graph<f64>, &BTreeMap<String, Tensor<f64>>) -> Result<VarId>,
{
    // Analytic pass.
    let mut g = Graph::<f64>::new();
    let out = forward(&mut g, params)?;
    g.backward(out)?;
    let analytic: BTreeMap<String, Vec<f64>> = g.param_grads().into_iter().collect();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates_checked: 0,
    };

    let names: Vec<String> = params.keys().cloned().collect();
    for name in names {
        let len = params[&name].data.len();
        let zero_grad = vec![0.0; len];
        let ga = analytic.get(&name).unwrap_or(&zero_grad).clone();
        for i in 0..len {
            let orig = params.get_mut(&name).unwrap().data[i];

            params.get_mut(&name).unwrap().data[i] = orig + eps;
            let mut gp = Graph::<f64>::new();
            let fp = forward(&mut gp, params)?;
            let vp = gp.scalar(fp);

            params.get_mut(&name).unwrap().data[i] = orig - eps;
            let mut gm = Graph::<f64>::new();
            let fm = forward(&mut gm, params)?;
            let vm = gm.scalar(fm);

            params.get_mut(&name).unwrap().data[i] = orig;

            if !vp.is_finite() || !vm.is_finite() {
                return Err(TensorError::NonFiniteProbe {
                    param: name.clone(),
                    coordinate: i,
                });
            }
            let gn = (vp - vm) / (2.0 * eps);
            let rel = (ga[i] - gn).abs() / 1e-8f64.max(ga[i].abs() + gn.abs());
            report.coordinates_checked += 1;
            if rel > report.max_rel_error {
                report.max_rel_error = rel;
                report.worst = Some((name.clone(), i));
            }
        }
    }
    Ok(report)
}
