//! Closed-form per-gate click probabilities, written independently of the
//! simulation engine.
#![allow(dead_code)]

pub mod plans;

/// Φ⁺ pairs through analyzers at `t1`, `t2`, unpolarized noise, dark counts.
#[derive(Debug, Clone, Copy)]
pub struct GateModel {
    pub mu: f64,
    pub noise: f64,
    pub eta1: f64,
    pub eta2: f64,
    pub dark: f64,
    pub t1: f64,
    pub t2: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct GateProbs {
    pub click1: f64,
    pub click2: f64,
    pub coincidence: f64,
    /// Expected delayed-gate pairing: independent gates, so P₁·P₂.
    pub accidental: f64,
}

impl GateModel {
    /// Exact Poisson result. Each pair lands on detector 1 with probability
    /// ½η₁, on detector 2 with ½η₂ and on both with ½cos²(t1 − t2)η₁η₂.
    pub fn exact(&self) -> GateProbs {
        let both = 0.5 * (self.t1 - self.t2).cos().powi(2) * self.eta1 * self.eta2;
        let (q1, q2) = (0.5 * self.eta1, 0.5 * self.eta2);
        let (n1, n2) = (0.5 * self.noise * self.eta1, 0.5 * self.noise * self.eta2);
        let quiet = 1.0 - self.dark;
        let none1 = (-self.mu * q1 - n1).exp() * quiet;
        let none2 = (-self.mu * q2 - n2).exp() * quiet;
        let none12 = (-self.mu * (q1 + q2 - both) - n1 - n2).exp() * quiet * quiet;
        let (click1, click2) = (1.0 - none1, 1.0 - none2);
        GateProbs {
            click1,
            click2,
            coincidence: 1.0 - none1 - none2 + none12,
            accidental: click1 * click2,
        }
    }

    /// Leading order in μ, noise and dark probability.
    pub fn first_order(&self) -> GateProbs {
        let click1 = self.mu * 0.5 * self.eta1 + 0.5 * self.noise * self.eta1 + self.dark;
        let click2 = self.mu * 0.5 * self.eta2 + 0.5 * self.noise * self.eta2 + self.dark;
        let true_pairs = self.mu * 0.5 * (self.t1 - self.t2).cos().powi(2) * self.eta1 * self.eta2;
        GateProbs {
            click1,
            click2,
            coincidence: true_pairs + click1 * click2,
            accidental: click1 * click2,
        }
    }
}

/// `|observed − n·p| ≤ k·√(n·p(1−p))`, with a floor of one count.
pub fn within_sigma(observed: u64, n: u64, p: f64, k: f64) -> bool {
    let mean = n as f64 * p;
    let sigma = (n as f64 * p * (1.0 - p)).sqrt().max(1.0);
    (observed as f64 - mean).abs() <= k * sigma
}
