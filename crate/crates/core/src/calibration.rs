//! Logistic (Platt) calibration of SVM decision values.
//!
//! Fits `P(passenger | d) = sigmoid(scale * d + offset)` by Newton's method
//! with backtracking, using the regularized targets `(N+ + 1) / (N+ + 2)`
//! and `1 / (N- + 2)` so separable data still gives finite parameters.

use serde::{Deserialize, Serialize};

pub const MAX_NEWTON_STEPS: usize = 100;
const MIN_STEP: f64 = 1e-10;
const HESSIAN_RIDGE: f64 = 1e-12;
const GRAD_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub scale: f64,
    pub offset: f64,
}

impl Calibration {
    /// `sigmoid(d)`; used when raw margins are requested.
    pub const IDENTITY: Calibration = Calibration {
        scale: 1.0,
        offset: 0.0,
    };

    pub fn apply(&self, decision: f64) -> f64 {
        sigmoid(self.scale * decision + self.offset)
    }
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

// log(1 + e^z) without overflow
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CalibrationFit {
    pub calibration: Calibration,
    pub iterations: usize,
    pub converged: bool,
}

/// Fits the calibration on decision values and their labels
/// (`true` = passenger).
pub fn fit_platt(decisions: &[f64], positive: &[bool]) -> CalibrationFit {
    assert_eq!(decisions.len(), positive.len());
    let n_pos = positive.iter().filter(|&&p| p).count() as f64;
    let n_neg = positive.len() as f64 - n_pos;
    let hi = (n_pos + 1.0) / (n_pos + 2.0);
    let lo = 1.0 / (n_neg + 2.0);
    let targets: Vec<f64> = positive.iter().map(|&p| if p { hi } else { lo }).collect();

    let objective = |a: f64, b: f64| -> f64 {
        decisions
            .iter()
            .zip(&targets)
            .map(|(&d, &t)| {
                let z = a * d + b;
                softplus(z) - t * z
            })
            .sum()
    };

    let mut a = 0.0;
    let mut b = ((n_pos + 1.0) / (n_neg + 1.0)).ln();
    let mut fval = objective(a, b);
    let mut iterations = 0;
    let mut converged = false;

    while iterations < MAX_NEWTON_STEPS {
        let (mut h11, mut h22, mut h21) = (HESSIAN_RIDGE, HESSIAN_RIDGE, 0.0);
        let (mut g1, mut g2) = (0.0, 0.0);
        for (&d, &t) in decisions.iter().zip(&targets) {
            let p = sigmoid(a * d + b);
            let w = p * (1.0 - p);
            h11 += d * d * w;
            h22 += w;
            h21 += d * w;
            g1 += (p - t) * d;
            g2 += p - t;
        }
        if g1.abs() < GRAD_TOL && g2.abs() < GRAD_TOL {
            converged = true;
            break;
        }
        iterations += 1;

        let det = h11 * h22 - h21 * h21;
        let da = -(h22 * g1 - h21 * g2) / det;
        let db = -(-h21 * g1 + h11 * g2) / det;
        let slope = g1 * da + g2 * db;

        let mut step = 1.0;
        let mut accepted = false;
        while step >= MIN_STEP {
            let (na, nb) = (a + step * da, b + step * db);
            let nf = objective(na, nb);
            if nf < fval + 1e-4 * step * slope {
                a = na;
                b = nb;
                fval = nf;
                accepted = true;
                break;
            }
            step /= 2.0;
        }
        if !accepted {
            break;
        }
    }

    CalibrationFit {
        calibration: Calibration {
            scale: a,
            offset: b,
        },
        iterations,
        converged,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_midpoint_and_symmetry() {
        assert_eq!(sigmoid(0.0), 0.5);
        for z in [-40.0, -3.0, -0.1, 0.7, 5.0, 800.0] {
            assert!((sigmoid(z) + sigmoid(-z) - 1.0).abs() < 1e-15);
        }
        assert!(sigmoid(-800.0) >= 0.0);
    }

    #[test]
    fn fit_on_overlapping_scores_is_increasing() {
        let d: Vec<f64> = (-20..=20).map(|i| i as f64 / 10.0).collect();
        // positives mostly on the right, with some noise on both sides
        let y: Vec<bool> = d
            .iter()
            .enumerate()
            .map(|(i, &v)| if i % 7 == 0 { v < 0.0 } else { v > 0.0 })
            .collect();
        let fit = fit_platt(&d, &y);
        assert!(fit.converged);
        assert!(fit.calibration.scale > 0.0);
        assert!(fit.calibration.apply(1.0) > fit.calibration.apply(-1.0));
    }

    #[test]
    fn separable_scores_stay_finite() {
        let d = [-2.0, -1.5, -1.0, 1.0, 1.5, 2.0];
        let y = [false, false, false, true, true, true];
        let fit = fit_platt(&d, &y);
        assert!(fit.calibration.scale.is_finite() && fit.calibration.offset.is_finite());
        assert!(fit.calibration.apply(1.0) > 0.5);
        assert!(fit.calibration.apply(-1.0) < 0.5);
        assert!(fit.iterations <= MAX_NEWTON_STEPS);
    }

    #[test]
    fn stationary_point_matches_finite_differences() {
        let d = [-1.2, -0.4, 0.1, 0.3, 0.9, 1.4, -0.2, 0.6];
        let y = [false, false, true, false, true, true, true, false];
        let c = fit_platt(&d, &y).calibration;
        let n_pos = 4.0;
        let n_neg = 4.0;
        let f = |a: f64, b: f64| -> f64 {
            d.iter()
                .zip(y)
                .map(|(&x, p)| {
                    let t = if p {
                        (n_pos + 1.0) / (n_pos + 2.0)
                    } else {
                        1.0 / (n_neg + 2.0)
                    };
                    let q = 1.0 / (1.0 + (-(a * x + b)).exp());
                    -(t * q.ln() + (1.0 - t) * (1.0 - q).ln())
                })
                .sum()
        };
        let h = 1e-6;
        let ga = (f(c.scale + h, c.offset) - f(c.scale - h, c.offset)) / (2.0 * h);
        let gb = (f(c.scale, c.offset + h) - f(c.scale, c.offset - h)) / (2.0 * h);
        assert!(ga.abs() < 1e-4 && gb.abs() < 1e-4, "{ga} {gb}");
    }
}
