//! Checks every differentiable operation, layer and loss against finite differences.

use proactive_ft::harness::gradient_suite;
use proactive_ft::tensor::{grad_check, GradCheckConfig, ParamStore, Tensor};

fn main() -> anyhow::Result<()> {
    for e in gradient_suite(0)? {
        println!("{:<6} {:<36} {:.2e}", if e.report.passed() { "ok" } else { "FAIL" }, e.name, e.report.max_rel_error);
    }

    // a custom check: f(x) = sum(tanh(x) * x)
    let mut store = ParamStore::new();
    let x = store.add("x", Tensor::new(vec![2, 3], vec![0.3, -1.2, 0.7, 2.0, -0.1, 0.5])?)?;
    let report = grad_check(&mut store, GradCheckConfig::default(), |g, s| {
        let v = g.param(s, x);
        let t = g.tanh(v);
        let p = g.mul(t, v)?;
        Ok(g.sum(p))
    })?;
    println!("custom: max rel error {:.2e}", report.max_rel_error);
    Ok(())
}
