//! Central finite-difference gradient checking against [`Var::backward`].

use crate::graph::Var;
use crate::params::Param;

#[derive(Clone, Copy, Debug)]
pub struct GradCheckOptions {
    /// Perturbation applied on each side of the probed entry.
    pub step: f64,
    /// Entries probed per parameter; larger tensors are strided evenly.
    pub max_entries: usize,
    /// Denominator floor in `|a - n| / max(|a|, |n|, floor)`.
    pub floor: f64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-6,
            max_entries: 12,
            floor: 1e-3,
        }
    }
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub max_abs_analytic: f64,
    pub probed: usize,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub params: Vec<ParamCheck>,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.params.iter().map(|p| p.max_rel_error).fold(0.0, f64::max)
    }

    pub fn worst(&self) -> Option<&ParamCheck> {
        self.params
            .iter()
            .max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error))
    }
}

/// Compares analytic gradients of `loss` with respect to `params` against
/// central differences. `loss` must rebuild the graph from the parameters'
/// current values on every call.
pub fn check(params: &[(String, Param)], loss: impl Fn() -> Var, opts: GradCheckOptions) -> GradCheckReport {
    let grads = loss().backward();
    let analytic: Vec<Option<Vec<f64>>> = params
        .iter()
        .map(|(_, p)| grads.get(&p.var()).map(|g| g.data().to_vec()))
        .collect();
    drop(grads);

    let mut report = GradCheckReport { params: Vec::new() };
    for ((name, param), analytic) in params.iter().zip(analytic) {
        let base = param.value();
        let n = base.numel();
        let analytic = analytic.unwrap_or_else(|| vec![0.0; n]);
        let stride = n.div_ceil(opts.max_entries.max(1)).max(1);
        let mut check = ParamCheck {
            name: name.clone(),
            max_rel_error: 0.0,
            max_abs_analytic: analytic.iter().fold(0.0, |m, x| m.max(x.abs())),
            probed: 0,
        };
        for i in (0..n).step_by(stride) {
            let mut plus = base.clone();
            plus.data_mut()[i] += opts.step;
            param.set(plus);
            let f_plus = loss().item();
            let mut minus = base.clone();
            minus.data_mut()[i] -= opts.step;
            param.set(minus);
            let f_minus = loss().item();
            param.set(base.clone());
            let numeric = (f_plus - f_minus) / (2.0 * opts.step);
            let a = analytic[i];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(opts.floor);
            check.max_rel_error = check.max_rel_error.max(rel);
            check.probed += 1;
        }
        report.params.push(check);
    }
    report
}
