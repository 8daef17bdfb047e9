/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before the logarithm.
pub const PROB_EPS: f64 = 1e-7;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Binary cross-entropy `-(y ln p + (1 - y) ln(1 - p))`.
pub fn bce_loss(p: f64, y: f64) -> f64 {
    let p = clamp_prob(p);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// `d bce / d p`; zero where the clamp is active.
pub fn bce_grad(p: f64, y: f64) -> f64 {
    if p != clamp_prob(p) {
        return 0.0;
    }
    -y / p + (1.0 - y) / (1.0 - p)
}

/// `d bce / d logit` for `p = sigmoid(logit)`.
pub fn bce_logit_grad(p: f64, y: f64) -> f64 {
    if p != clamp_prob(p) {
        return 0.0;
    }
    p - y
}
