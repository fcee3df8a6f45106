//! Central finite-difference verification of analytic gradients.

use super::graph::{Graph, Var};
use super::params::ParamStore;
use crate::error::Result;

/// Settings for [`grad_check`].
#[derive(Clone, Copy, Debug)]
pub struct GradCheckConfig {
    /// Perturbation half-width.
    pub step: f64,
    /// Pass threshold on the reported maximum relative error.
    pub tolerance: f64,
    /// Denominator floor; below this magnitude errors are effectively absolute.
    pub floor: f64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        Self {
            step: 1e-3,
            tolerance: 1e-3,
            floor: 1e-3,
        }
    }
}

/// Outcome of a gradient check.
#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter name and flat index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error.is_finite() && self.max_rel_error < self.tolerance
    }
}

/// `|a − n| / max(|a|, |n|, floor)`.
pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Compares every parameter's analytic gradient against central differences.
///
/// `loss` builds the scalar loss on a fresh graph from the store's current
/// values. The store's values are restored before returning; its gradients
/// are left holding the analytic result.
pub fn grad_check<F>(store: &mut ParamStore, config: GradCheckConfig, loss: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    store.zero_grad();
    let mut g = Graph::new();
    let l = loss(&mut g, store)?;
    let grads = g.backward(l)?;
    store.accumulate(&g, &grads);

    let eval = |s: &ParamStore| -> Result<f64> {
        let mut g = Graph::new();
        let l = loss(&mut g, s)?;
        Ok(g.value(l).item())
    };

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        tolerance: config.tolerance,
    };
    let ids: Vec<_> = (0..store.len()).map(super::params::ParamId).collect();
    for id in ids {
        for i in 0..store.get(id).value.len() {
            let original = store.get(id).value.data()[i];
            store.get_mut(id).value.data_mut()[i] = original + config.step;
            let plus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = original - config.step;
            let minus = eval(store)?;
            store.get_mut(id).value.data_mut()[i] = original;

            let numeric = (plus - minus) / (2.0 * config.step);
            let analytic = store.get(id).grad.data()[i];
            let err = relative_error(analytic, numeric, config.floor);
            report.checked += 1;
            if err > report.max_rel_error || err.is_nan() {
                report.max_rel_error = if err.is_nan() { f64::INFINITY } else { err };
                report.worst = Some((store.get(id).name.clone(), i));
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn linear_model_passes_tightly() {
        let mut store = ParamStore::new();
        let w = store
            .add("w", Tensor::from_rows(&[vec![0.3, -0.2], vec![0.5, 0.1], vec![-0.7, 0.9]]).unwrap())
            .unwrap();
        let b = store.add("b", Tensor::row(&[0.05, -0.1])).unwrap();
        let x = Tensor::from_rows(&[vec![1.0, 2.0, -1.0], vec![0.5, -0.3, 0.2]]).unwrap();
        let cfg = GradCheckConfig {
            tolerance: 1e-5,
            ..Default::default()
        };
        let report = grad_check(&mut store, cfg, |g, s| {
            let xv = g.constant(x.clone());
            let wv = g.param(s, w);
            let bv = g.param(s, b);
            let y = crate::tensor::linear(g, xv, wv, bv)?;
            let sq = g.mul(y, y)?;
            Ok(g.sum(sq))
        })
        .unwrap();
        assert!(report.passed(), "{report:?}");
        assert_eq!(report.checked, 8);
    }

    #[test]
    fn corrupted_backward_rule_is_caught() {
        let mut store = ParamStore::new();
        let a = store.add("a", Tensor::row(&[0.4, -1.1, 2.0])).unwrap();
        let report = grad_check(&mut store, GradCheckConfig::default(), |g, s| {
            let av = g.param(s, a);
            // sin with a deliberately wrong derivative (sin instead of cos)
            let y = g.map(av, f64::sin, |x, _| x.sin());
            Ok(g.sum(y))
        })
        .unwrap();
        assert!(!report.passed());
        assert!(report.max_rel_error > report.tolerance);
    }
}
