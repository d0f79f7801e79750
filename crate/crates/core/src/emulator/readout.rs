//! Single-shot IQ synthesis and angular state assignment.

use std::f64::consts::{PI, TAU};

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::quadrature::{integrate, QuadratureOptions};

/// Blob layout: resolved states sit on a circle, one `spacing` apart going clockwise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReadoutGeometry {
    pub n_levels: usize,
    pub radius: f64,
    /// Angle of state 0 (rad).
    pub start_angle: f64,
    pub spacing: f64,
    /// Distance between neighbouring blob centres over the blob σ.
    pub separation_to_sigma: f64,
    /// Outer thresholds sit this many angular σ beyond the extreme blobs.
    pub outer_multiple: f64,
}

impl Default for ReadoutGeometry {
    fn default() -> Self {
        Self {
            n_levels: 4,
            radius: 1.0,
            start_angle: PI / 2.0,
            spacing: PI / 3.0,
            separation_to_sigma: 6.0,
            outer_multiple: 4.0,
        }
    }
}

/// Calibrated thresholds, clockwise from the outer edge of state 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssignmentThresholds {
    /// n_levels + 1 angles, strictly decreasing, spanning less than 2π.
    pub thresholds: Vec<f64>,
    /// Blob centre angles; the last entry is the lumped state, centred in the leftover arc.
    pub mean_angles: Vec<f64>,
    pub radius: f64,
    /// Per-quadrature Gaussian spread.
    pub sigma: f64,
}

impl AssignmentThresholds {
    /// Midpoints between neighbours plus outer thresholds `outer_multiple` angular σ out.
    pub fn calibrate(geom: &ReadoutGeometry) -> Result<Self> {
        let l = geom.n_levels;
        if l < 2 {
            return Err(invalid("need at least two resolved states"));
        }
        if !(geom.radius > 0.0 && geom.spacing > 0.0 && geom.outer_multiple >= 0.0) {
            return Err(invalid("radius and spacing must be positive, outer_multiple non-negative"));
        }
        if !(geom.separation_to_sigma > 0.0) {
            return Err(invalid("separation_to_sigma must be positive"));
        }
        let separation = 2.0 * geom.radius * (0.5 * geom.spacing).sin();
        let sigma = if geom.separation_to_sigma.is_infinite() { 0.0 } else { separation / geom.separation_to_sigma };
        let sigma_angle = sigma / geom.radius;
        let mut means: Vec<f64> = (0..l).map(|k| geom.start_angle - k as f64 * geom.spacing).collect();
        let mut thresholds = vec![means[0] + geom.outer_multiple * sigma_angle];
        thresholds.extend((1..l).map(|k| means[k - 1] - 0.5 * geom.spacing));
        thresholds.push(means[l - 1] - geom.outer_multiple * sigma_angle);
        let span = thresholds[0] - thresholds[l];
        if span >= TAU {
            return Err(invalid("blobs and outer margins do not fit on the circle"));
        }
        means.push(thresholds[l] - 0.5 * (TAU - span));
        Ok(Self {
            thresholds,
            mean_angles: means,
            radius: geom.radius,
            sigma,
        })
    }

    pub fn n_levels(&self) -> usize {
        self.thresholds.len() - 1
    }

    /// Clockwise distance of an angle from the first threshold, in [0, 2π).
    fn clockwise_offset(&self, theta: f64) -> f64 {
        (self.thresholds[0] - theta).rem_euclid(TAU)
    }

    /// P(assigned j | true k) for the Gaussian blobs.
    pub fn confusion_matrix(&self) -> Result<DMatrix<f64>> {
        let n = self.n_levels() + 1;
        let mut c = DMatrix::zeros(n, n);
        if self.sigma == 0.0 {
            for k in 0..n {
                let (i, q) = (self.mean_angles[k].cos(), self.mean_angles[k].sin());
                c[(assign_state((i, q), self), k)] = 1.0;
            }
            return Ok(c);
        }
        let rho = self.radius / self.sigma;
        let opts = QuadratureOptions {
            rel_tol: 1e-10,
            abs_tol: 1e-15,
            max_intervals: 4000,
        };
        let mut edges: Vec<f64> = self.thresholds.iter().map(|&t| self.thresholds[0] - t).collect();
        edges.push(TAU);
        for k in 0..n {
            let offset = self.clockwise_offset(self.mean_angles[k]);
            for j in 0..n {
                let density = |phi: f64| angular_density(rho, phi - offset);
                // The blob centre is a kink-free but sharply peaked point; split there.
                let est = integrate(density, edges[j], edges[j + 1], &[offset], &[], opts)?;
                c[(j, k)] = est.value;
            }
            let s: f64 = c.column(k).sum();
            c.column_mut(k).scale_mut(1.0 / s);
        }
        Ok(c)
    }
}

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// Density of the polar angle of a unit-variance 2D Gaussian centred at distance ρ on angle 0.
fn angular_density(rho: f64, alpha: f64) -> f64 {
    let b = rho * alpha.cos();
    (-0.5 * rho * rho).exp() / TAU
        + b / (TAU).sqrt() * (-0.5 * (rho * rho - b * b)).exp() * normal_cdf(b)
}

/// One shot: isotropic Gaussian around the state's blob centre.
pub fn synthesize_iq<R: Rng + ?Sized>(state: usize, thresholds: &AssignmentThresholds, rng: &mut R) -> (f64, f64) {
    let theta = thresholds.mean_angles[state.min(thresholds.n_levels())];
    let (s, c) = theta.sin_cos();
    let ni: f64 = rng.sample(StandardNormal);
    let nq: f64 = rng.sample(StandardNormal);
    (
        thresholds.radius * c + thresholds.sigma * ni,
        thresholds.radius * s + thresholds.sigma * nq,
    )
}

/// Label by angular band; a point on a threshold goes to the lower index.
pub fn assign_state(iq: (f64, f64), thresholds: &AssignmentThresholds) -> usize {
    let phi = thresholds.clockwise_offset(iq.1.atan2(iq.0));
    let l = thresholds.n_levels();
    if phi == 0.0 {
        return 0;
    }
    (0..l)
        .find(|&k| phi <= thresholds.thresholds[0] - thresholds.thresholds[k + 1])
        .unwrap_or(l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn thr() -> AssignmentThresholds {
        AssignmentThresholds::calibrate(&ReadoutGeometry::default()).unwrap()
    }

    #[test]
    fn calibration_layout() {
        let t = thr();
        assert_eq!(t.thresholds.len(), 5);
        assert!(t.thresholds.windows(2).all(|w| w[1] < w[0]));
        assert!((t.sigma - 1.0 / 6.0).abs() < 1e-15);
        assert!((t.mean_angles[4].rem_euclid(TAU) - PI).abs() < 1e-12);
        let bad = ReadoutGeometry { spacing: 2.0, ..Default::default() };
        assert!(AssignmentThresholds::calibrate(&bad).is_err());
    }

    #[test]
    fn noiseless_points_assign_to_their_state() {
        let t = AssignmentThresholds::calibrate(&ReadoutGeometry {
            separation_to_sigma: f64::INFINITY,
            ..Default::default()
        })
        .unwrap();
        assert_eq!(t.sigma, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for k in 0..5 {
            let iq = synthesize_iq(k, &t, &mut rng);
            assert!((iq.1.atan2(iq.0) - t.mean_angles[k]).abs().rem_euclid(TAU) < 1e-12);
            assert_eq!(assign_state(iq, &t), k);
        }
        assert_eq!(t.confusion_matrix().unwrap(), DMatrix::identity(5, 5));
    }

    #[test]
    fn threshold_tie_break_goes_low() {
        let t = thr();
        for k in 1..4 {
            let a = t.thresholds[k];
            assert_eq!(assign_state((a.cos(), a.sin()), &t), k - 1);
        }
        let a = t.thresholds[0];
        assert_eq!(assign_state((a.cos(), a.sin()), &t), 0);
        let a = t.thresholds[4];
        assert_eq!(assign_state((a.cos(), a.sin()), &t), 3);
    }

    #[test]
    fn neighbour_error_matches_gaussian_tail() {
        let c = thr().confusion_matrix().unwrap();
        // The midpoint ray sits 3σ from each centre: one-sided tail 1.35e-3.
        let tail = 0.5 * libm::erfc(3.0 / std::f64::consts::SQRT_2);
        assert!((c[(2, 1)] / tail - 1.0).abs() < 0.01, "{}", c[(2, 1)]);
        assert!(c[(2, 1)] < 3e-3);
        for k in 0..5 {
            assert!((c.column(k).sum() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn confusion_matches_monte_carlo() {
        let t = thr();
        let c = t.confusion_matrix().unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let mut hits = [0usize; 5];
        for _ in 0..n {
            hits[assign_state(synthesize_iq(2, &t, &mut rng), &t)] += 1;
        }
        assert!(hits[2] as f64 / n as f64 >= 0.99);
        for j in 0..5 {
            let f = hits[j] as f64 / n as f64;
            let sigma = (c[(j, 2)] * (1.0 - c[(j, 2)]) / n as f64).sqrt();
            assert!((f - c[(j, 2)]).abs() <= 4.0 * sigma + 1e-6, "{j}: {f} vs {}", c[(j, 2)]);
        }
    }

    #[test]
    fn angular_density_normalized() {
        for rho in [0.0, 1.0, 6.0] {
            let opts = QuadratureOptions { rel_tol: 1e-12, abs_tol: 0.0, max_intervals: 4000 };
            let v = integrate(|a| angular_density(rho, a), -PI, PI, &[0.0], &[], opts).unwrap().value;
            assert!((v - 1.0).abs() < 1e-10);
        }
    }
}
