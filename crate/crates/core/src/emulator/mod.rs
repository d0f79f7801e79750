//! Monte-Carlo emulation of the rate-measurement pipeline.
//!
//! Levels 0..L−1 are resolved; index L is the absorbing "L+" macro-state
//! that collects everything higher.

mod experiment;
mod fit;
mod readout;

pub use experiment::{read_shots_csv, run_experiment, write_shots_csv, PulseSequence, ReadoutSettings, ShotRecord};
pub use fit::{extract_rates, linear_rate_estimates, Extraction, ExtractionModel, LinearEstimate};
pub use readout::{assign_state, synthesize_iq, AssignmentThresholds, ReadoutGeometry};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Distribution, Exp};

use crate::error::{invalid, Error, Result};
use crate::rates::RateSet;

/// "3", or "4+" for the lumped state when four levels are resolved.
pub fn state_label(index: usize, n_levels: usize) -> String {
    if index >= n_levels {
        format!("{n_levels}+")
    } else {
        index.to_string()
    }
}

/// Inverse of [`state_label`].
pub fn parse_state_label(s: &str, n_levels: usize) -> Result<usize> {
    let s = s.trim();
    if let Some(head) = s.strip_suffix('+') {
        return match head.parse::<usize>() {
            Ok(n) if n == n_levels => Ok(n_levels),
            _ => Err(invalid(format!("state label {s:?} does not match {n_levels} resolved levels"))),
        };
    }
    match s.parse::<usize>() {
        Ok(k) if k < n_levels => Ok(k),
        _ => Err(invalid(format!("bad state label {s:?}"))),
    }
}

/// Continuous-time Markov generator: G[n][m] = Γ_{m→n}, columns sum to zero.
#[derive(Debug, Clone, PartialEq)]
pub struct RateGenerator {
    pub matrix: DMatrix<f64>,
    /// Resolved levels; the matrix has one more row for the lumped state.
    pub n_levels: usize,
}

impl RateGenerator {
    pub fn dim(&self) -> usize {
        self.n_levels + 1
    }

    pub fn rate(&self, from: usize, to: usize) -> f64 {
        self.matrix[(to, from)]
    }

    pub fn exit_rate(&self, from: usize) -> f64 {
        -self.matrix[(from, from)]
    }

    /// Largest |column sum| relative to the largest rate.
    pub fn column_sum_error(&self) -> f64 {
        let scale = self.matrix.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        if scale == 0.0 {
            return 0.0;
        }
        self.matrix.column_iter().map(|c| c.sum().abs()).fold(0.0, f64::max) / scale
    }

    /// Same structure with the given off-diagonal rates.
    pub fn from_rates(n_levels: usize, rates: &[((usize, usize), f64)]) -> Result<Self> {
        let dim = n_levels + 1;
        let mut g = DMatrix::zeros(dim, dim);
        for &((from, to), r) in rates {
            if !(r >= 0.0) {
                return Err(Error::NegativeRate {
                    initial: from,
                    final_level: to,
                    rate: r,
                });
            }
            let (from, to) = (from.min(n_levels), to.min(n_levels));
            if from == n_levels || from == to {
                // The lumped state is absorbing; transitions inside it are invisible.
                continue;
            }
            g[(to, from)] += r;
            g[(from, from)] -= r;
        }
        Ok(Self { matrix: g, n_levels })
    }
}

/// Sums every mechanism per level pair; final levels ≥ `n_levels` go to the lumped state.
pub fn build_generator(rates: &RateSet, n_levels: usize) -> Result<RateGenerator> {
    if n_levels < 2 {
        return Err(invalid("need at least two resolved levels"));
    }
    let pairs: Vec<_> = rates.entries.iter().map(|e| ((e.initial, e.final_level), e.rate)).collect();
    RateGenerator::from_rates(n_levels, &pairs)
}

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter().map(|c| c.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// exp(A) by Taylor series with scaling and squaring.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    let n = a.nrows();
    let norm = norm1(a);
    let s = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let scaled = a / 2f64.powi(s);
    let mut sum = DMatrix::identity(n, n);
    let mut term = DMatrix::identity(n, n);
    for k in 1..40 {
        term = &term * &scaled / k as f64;
        sum += &term;
        if norm1(&term) <= 1e-17 * norm1(&sum) {
            break;
        }
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

fn check_stochastic(p: &DVector<f64>, dim: usize) -> Result<()> {
    if p.len() != dim {
        return Err(Error::NonStochastic(format!("length {} for {dim} states", p.len())));
    }
    if p.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::NonStochastic("negative or NaN entry".into()));
    }
    let total = p.sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::NonStochastic(format!("entries sum to {total}")));
    }
    Ok(())
}

/// p(t) = exp(G t)·p₀, clipped at zero and renormalized.
pub fn evolve_populations(g: &RateGenerator, p0: &DVector<f64>, t: f64) -> Result<DVector<f64>> {
    check_stochastic(p0, g.dim())?;
    if !(t >= 0.0) {
        return Err(invalid("time must be non-negative"));
    }
    let mut p = expm(&(&g.matrix * t)) * p0;
    p.apply(|x| *x = x.max(0.0));
    let s = p.sum();
    Ok(p / s)
}

/// Gillespie sampling of the level occupied after `duration`.
pub fn sample_trajectory<R: Rng + ?Sized>(g: &RateGenerator, initial: usize, duration: f64, rng: &mut R) -> usize {
    let mut state = initial.min(g.n_levels);
    let mut t = 0.0;
    loop {
        let total = g.exit_rate(state);
        if total <= 0.0 {
            return state;
        }
        t += Exp::new(total).expect("positive exit rate").sample(rng);
        if t > duration {
            return state;
        }
        let mut u = rng.random::<f64>() * total;
        let mut next = state;
        for to in 0..g.dim() {
            if to == state {
                continue;
            }
            let r = g.rate(state, to);
            if r <= 0.0 {
                continue;
            }
            next = to;
            if u < r {
                break;
            }
            u -= r;
        }
        state = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rates::Mechanism;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn two_state(down: f64, up: f64) -> RateGenerator {
        RateGenerator::from_rates(2, &[((1, 0), down), ((0, 1), up)]).unwrap()
    }

    fn basis(dim: usize, k: usize) -> DVector<f64> {
        let mut v = DVector::zeros(dim);
        v[k] = 1.0;
        v
    }

    #[test]
    fn generator_examples() {
        let g = build_generator(&RateSet::new(), 4).unwrap();
        assert_eq!(g.matrix, DMatrix::zeros(5, 5));
        let mut r = RateSet::new();
        r.push(0, 2, 3.0, Mechanism::Raman).unwrap();
        let g = build_generator(&r, 4).unwrap();
        assert_eq!(g.matrix[(2, 0)], 3.0);
        assert_eq!(g.matrix[(0, 0)], -3.0);
        r.push(1, 7, 1.0, Mechanism::Resonant).unwrap();
        r.push(1, 3, 2.0, Mechanism::Raman).unwrap();
        r.push(1, 3, 0.5, Mechanism::TwoOut).unwrap();
        let g = build_generator(&r, 4).unwrap();
        assert_eq!(g.matrix[(4, 1)], 1.0);
        assert_eq!(g.matrix[(3, 1)], 2.5);
        assert_eq!(g.column_sum_error(), 0.0);
        assert!(RateGenerator::from_rates(4, &[((0, 1), -1.0)]).is_err());
    }

    #[test]
    fn expm_matches_closed_forms() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]) * 3.0;
        let e = expm(&a);
        assert!((e[(0, 0)] - 3f64.cos()).abs() < 1e-13);
        assert!((e[(0, 1)] - 3f64.sin()).abs() < 1e-13);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![-50.0, 2.0]));
        let e = expm(&d);
        assert!((e[(0, 0)] / (-50f64).exp() - 1.0).abs() < 1e-12);
        assert!((e[(1, 1)] / 2f64.exp() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn evolve_examples() {
        let g = two_state(1e4, 0.0);
        let p0 = basis(3, 1);
        assert_eq!(evolve_populations(&g, &p0, 0.0).unwrap(), p0);
        for t in [1e-5, 1e-4, 3e-4] {
            let p = evolve_populations(&g, &p0, t).unwrap();
            assert!((p[1] - (-1e4 * t).exp()).abs() < 1e-12);
        }
        assert!(evolve_populations(&g, &DVector::from_vec(vec![0.5, 0.6, 0.0]), 1.0).is_err());
        assert!(evolve_populations(&g, &DVector::from_vec(vec![1.0, 0.0]), 1.0).is_err());
    }

    #[test]
    fn detailed_balance_stationary_state() {
        let w = crate::units::mhz(758.0);
        let (down, up) = crate::rates::thermal_rates(w, 0.016, 2000.0).unwrap();
        let g = two_state(down, up);
        let b = crate::rates::boltzmann_factor(w, 0.016);
        let stat = DVector::from_vec(vec![1.0, b, 0.0]) / (1.0 + b);
        assert!((&g.matrix * &stat).amax() < 1e-12 * down);
        let long = evolve_populations(&g, &basis(3, 1), 50.0 / down).unwrap();
        assert!((&long - &stat).amax() < 1e-12);
    }

    #[test]
    fn sampler_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let zero = RateGenerator::from_rates(3, &[]).unwrap();
        assert_eq!(sample_trajectory(&zero, 2, 1.0, &mut rng), 2);
        let leak = RateGenerator::from_rates(3, &[((1, 3), 1e6)]).unwrap();
        for _ in 0..100 {
            assert_eq!(sample_trajectory(&leak, 1, 1e-3, &mut rng), 3);
            assert_eq!(sample_trajectory(&leak, 3, 1e-3, &mut rng), 3);
        }
    }

    #[test]
    fn sampler_agrees_with_propagator() {
        let g = RateGenerator::from_rates(
            4,
            &[((1, 0), 2000.0), ((0, 1), 200.0), ((1, 2), 300.0), ((0, 2), 100.0), ((1, 3), 400.0), ((1, 4), 50.0)],
        )
        .unwrap();
        let t = 4e-4;
        let n = 100_000;
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut counts = [0usize; 5];
        for _ in 0..n {
            counts[sample_trajectory(&g, 1, t, &mut rng)] += 1;
        }
        let p = evolve_populations(&g, &basis(5, 1), t).unwrap();
        let mut tv = 0.0;
        for k in 0..5 {
            let f = counts[k] as f64 / n as f64;
            let sigma = (p[k] * (1.0 - p[k]) / n as f64).sqrt();
            assert!((f - p[k]).abs() <= 3.0 * sigma + 1e-12, "state {k}: {f} vs {}", p[k]);
            tv += 0.5 * (f - p[k]).abs();
        }
        assert!(tv < 0.01);
    }

    #[test]
    fn labels() {
        assert_eq!(state_label(4, 4), "4+");
        assert_eq!(state_label(2, 4), "2");
        assert_eq!(parse_state_label("4+", 4).unwrap(), 4);
        assert_eq!(parse_state_label("3", 4).unwrap(), 3);
        assert!(parse_state_label("5+", 4).is_err());
        assert!(parse_state_label("4", 4).is_err());
    }

    proptest! {
        #[test]
        fn columns_sum_to_zero(rates in proptest::collection::vec(((0usize..6, 0usize..6), 0.0f64..1e4), 0..20)) {
            let g = RateGenerator::from_rates(4, &rates).unwrap();
            prop_assert!(g.column_sum_error() <= 1e-12);
            for i in 0..g.dim() {
                for j in 0..g.dim() {
                    if i != j {
                        prop_assert!(g.matrix[(i, j)] >= 0.0);
                    }
                }
            }
        }

        #[test]
        fn probability_is_conserved(
            rates in proptest::collection::vec(((0usize..5, 0usize..5), 1.0f64..1e4), 1..12),
            start in 0usize..5,
            frac in 0.0f64..1.0,
        ) {
            let g = RateGenerator::from_rates(4, &rates).unwrap();
            let min_rate = (0..4).map(|m| g.exit_rate(m)).filter(|&r| r > 0.0).fold(f64::INFINITY, f64::min);
            let t = if min_rate.is_finite() { 10.0 / min_rate * frac } else { frac };
            let p = expm(&(&g.matrix * t)) * basis(5, start);
            prop_assert!((p.sum() - 1.0).abs() < 1e-10);
            prop_assert!(p.iter().all(|&x| x >= -1e-12));
        }
    }
}
