use serde::{Deserialize, Serialize};

use super::loss::{bce_logit_grad, bce_loss};
use super::{Model, NnError, Tensor};

/// Outcome of a finite-difference comparison over every parameter.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    pub worst_block: String,
    pub worst_index: usize,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares analytic `dL/dθ` against `(L(θ+ε) − L(θ−ε)) / 2ε` for every θ,
/// with dropout disabled in both passes.
pub fn gradient_check(model: &Model, input: &Tensor, target: f64, epsilon: f64) -> Result<GradCheckReport, NnError> {
    if !(1e-6..=1e-3).contains(&epsilon) {
        return Err(NnError::InvalidSpec(format!("epsilon {epsilon} outside [1e-6, 1e-3]")));
    }
    let trace = model.forward(input, None)?;
    let mut grads = model.zero_grads();
    model.backward(&trace, bce_logit_grad(trace.probability, target), &mut grads);

    let mut probe = model.clone();
    let names: Vec<String> = model.blocks().iter().map(|b| b.name.clone()).collect();
    let mut report = GradCheckReport { max_relative_error: 0.0, worst_block: String::new(), worst_index: 0, checked: 0 };
    for (bi, g) in grads.iter().enumerate() {
        for (i, &analytic) in g.iter().enumerate() {
            let orig = probe.blocks()[bi].values[i];
            let mut loss_at = |v: f64| -> Result<f64, NnError> {
                probe.blocks_mut()[bi].values[i] = v;
                Ok(bce_loss(probe.predict(input)?, target))
            };
            let numeric = (loss_at(orig + epsilon)? - loss_at(orig - epsilon)?) / (2.0 * epsilon);
            probe.blocks_mut()[bi].values[i] = orig;
            let err = relative_error(analytic, numeric);
            report.checked += 1;
            if err > report.max_relative_error || report.worst_block.is_empty() {
                report.max_relative_error = err;
                report.worst_block = names[bi].clone();
                report.worst_index = i;
            }
        }
    }
    Ok(report)
}
