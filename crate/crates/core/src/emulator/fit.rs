//! Maximum-likelihood rate extraction from assignment histograms.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use super::experiment::ShotRecord;
use super::{expm, state_label, RateGenerator};
use crate::error::{invalid, Error, Result};
use crate::rates::{Mechanism, RateEntry, RateSet};

/// One-sided 95% normal quantile.
const UPPER_QUANTILE: f64 = 1.645;

/// Which rates to fit and how the readout confuses states.
#[derive(Debug, Clone, PartialEq)]
pub struct ExtractionModel {
    pub n_levels: usize,
    /// Fitted Γ_{m→n}; n = n_levels is the lumped state.
    pub transitions: Vec<(usize, usize)>,
    /// P(assigned j | true k), columns summing to one.
    pub confusion: DMatrix<f64>,
}

impl ExtractionModel {
    pub fn new(n_levels: usize, transitions: Vec<(usize, usize)>, confusion: DMatrix<f64>) -> Result<Self> {
        let dim = n_levels + 1;
        if confusion.shape() != (dim, dim) {
            return Err(invalid(format!("confusion matrix must be {dim}x{dim}")));
        }
        if transitions.is_empty() {
            return Err(invalid("no transitions to fit"));
        }
        for &(m, n) in &transitions {
            if m >= n_levels || n > n_levels || m == n {
                return Err(invalid(format!("cannot fit {m} -> {n}")));
            }
        }
        let mut seen = transitions.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != transitions.len() {
            return Err(invalid("duplicate transitions"));
        }
        Ok(Self {
            n_levels,
            transitions,
            confusion,
        })
    }

    /// Every transition out of the given initial levels, lumped state included.
    pub fn all_from(initials: &[usize], n_levels: usize, confusion: DMatrix<f64>) -> Result<Self> {
        let t = initials
            .iter()
            .flat_map(|&m| (0..=n_levels).filter(move |&n| n != m).map(move |n| (m, n)))
            .collect();
        Self::new(n_levels, t, confusion)
    }

    fn name(&self, a: usize) -> String {
        let (m, n) = self.transitions[a];
        format!("{} -> {}", state_label(m, self.n_levels), state_label(n, self.n_levels))
    }
}

/// Fitted rates with standard errors (mechanism `measured`).
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub rates: RateSet,
    pub covariance: DMatrix<f64>,
    pub log_likelihood: f64,
    pub iterations: usize,
}

struct Group {
    initial: usize,
    duration: f64,
    counts: Vec<f64>,
    total: f64,
}

fn histograms(records: &[ShotRecord], n_levels: usize) -> Result<Vec<Group>> {
    let mut map: BTreeMap<(usize, usize), Group> = BTreeMap::new();
    for r in records {
        if r.assigned > n_levels || r.initial >= n_levels {
            return Err(invalid("record label outside the model"));
        }
        // Post-select on the heralding measurement.
        if r.pre_assigned != r.initial {
            continue;
        }
        let g = map.entry((r.initial, r.duration_index)).or_insert_with(|| Group {
            initial: r.initial,
            duration: r.duration,
            counts: vec![0.0; n_levels + 1],
            total: 0.0,
        });
        g.counts[r.assigned] += 1.0;
        g.total += 1.0;
    }
    Ok(map.into_values().collect())
}

struct Evaluation {
    log_likelihood: f64,
    score: DVector<f64>,
    fisher: DMatrix<f64>,
}

struct Problem<'a> {
    model: &'a ExtractionModel,
    groups: Vec<Group>,
}

impl Problem<'_> {
    fn generator(&self, theta: &DVector<f64>) -> Result<DMatrix<f64>> {
        let pairs: Vec<_> = self.model.transitions.iter().copied().zip(theta.iter().map(|x| x.max(0.0))).collect();
        Ok(RateGenerator::from_rates(self.model.n_levels, &pairs)?.matrix)
    }

    fn direction(&self, a: usize) -> DMatrix<f64> {
        let dim = self.model.n_levels + 1;
        let (m, n) = self.model.transitions[a];
        let mut e = DMatrix::zeros(dim, dim);
        e[(n, m)] = 1.0;
        e[(m, m)] = -1.0;
        e
    }

    fn evaluate(&self, theta: &DVector<f64>, want_fisher: bool) -> Result<Evaluation> {
        let dim = self.model.n_levels + 1;
        let k = theta.len();
        let g = self.generator(theta)?;
        let dirs: Vec<DMatrix<f64>> = (0..k).map(|a| self.direction(a)).collect();
        let c = &self.model.confusion;
        let mut ll = 0.0;
        let mut score = DVector::zeros(k);
        let mut fisher = DMatrix::zeros(k, k);
        for grp in &self.groups {
            let gt = &g * grp.duration;
            let p_true = expm(&gt).column(grp.initial).into_owned();
            let p = (c * p_true).map(|x| x.max(1e-300));
            // Fréchet derivatives of exp at Gt from the block-triangular exponential.
            let mut dp = DMatrix::zeros(dim, k);
            if grp.duration > 0.0 {
                for (a, e) in dirs.iter().enumerate() {
                    let mut block = DMatrix::zeros(2 * dim, 2 * dim);
                    block.view_mut((0, 0), (dim, dim)).copy_from(&gt);
                    block.view_mut((dim, dim), (dim, dim)).copy_from(&gt);
                    block.view_mut((0, dim), (dim, dim)).copy_from(&(e * grp.duration));
                    let eb = expm(&block);
                    let d_true = eb.view((0, dim), (dim, dim)).column(grp.initial).into_owned();
                    dp.set_column(a, &(c * d_true));
                }
            }
            for j in 0..dim {
                ll += grp.counts[j] * p[j].ln();
                for a in 0..k {
                    score[a] += grp.counts[j] / p[j] * dp[(j, a)];
                }
                if want_fisher {
                    for a in 0..k {
                        for b in 0..k {
                            fisher[(a, b)] += grp.total * dp[(j, a)] * dp[(j, b)] / p[j];
                        }
                    }
                }
            }
        }
        Ok(Evaluation {
            log_likelihood: ll,
            score,
            fisher,
        })
    }
}

fn check_identifiable(model: &ExtractionModel, fisher: &DMatrix<f64>) -> Result<()> {
    let eig = SymmetricEigen::new(fisher.clone());
    let max = eig.eigenvalues.amax();
    let (imin, min) = eig
        .eigenvalues
        .iter()
        .copied()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("non-empty");
    if max == 0.0 || min <= 1e-10 * max {
        let v = eig.eigenvectors.column(imin);
        let a = v.iamax();
        return Err(Error::NonIdentifiable {
            parameter: model.name(a),
        });
    }
    Ok(())
}

fn invert_spd(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    m.clone().cholesky().map(|c| c.inverse())
}

/// Short-time slope of an assignment fraction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearEstimate {
    pub initial: usize,
    pub final_level: usize,
    pub rate: f64,
    pub std_error: f64,
}

/// Least-squares slope of P(assigned n | initial m, t) against t.
///
/// Only meaningful while Γ·t ≪ 1; the intercept absorbs misassignment.
pub fn linear_rate_estimates(records: &[ShotRecord], n_levels: usize) -> Result<Vec<LinearEstimate>> {
    let groups = histograms(records, n_levels)?;
    let mut by_initial: BTreeMap<usize, Vec<&Group>> = BTreeMap::new();
    for g in &groups {
        by_initial.entry(g.initial).or_default().push(g);
    }
    let mut out = Vec::new();
    for (initial, gs) in by_initial {
        if gs.len() < 2 {
            return Err(invalid("linear estimate needs at least two durations per initial state"));
        }
        let tbar = gs.iter().map(|g| g.duration).sum::<f64>() / gs.len() as f64;
        let sxx: f64 = gs.iter().map(|g| (g.duration - tbar).powi(2)).sum();
        for n in (0..=n_levels).filter(|&n| n != initial) {
            let f: Vec<f64> = gs.iter().map(|g| g.counts[n] / g.total).collect();
            let fbar = f.iter().sum::<f64>() / f.len() as f64;
            let sxy: f64 = gs.iter().zip(&f).map(|(g, fi)| (g.duration - tbar) * (fi - fbar)).sum();
            let var: f64 = gs
                .iter()
                .map(|g| {
                    // Laplace-smoothed binomial variance keeps empty bins informative.
                    let q = (g.counts[n] + 1.0) / (g.total + 2.0);
                    (g.duration - tbar).powi(2) * q * (1.0 - q) / g.total
                })
                .sum();
            out.push(LinearEstimate {
                initial,
                final_level: n,
                rate: sxy / sxx,
                std_error: var.sqrt() / sxx,
            });
        }
    }
    Ok(out)
}

/// Fisher-scoring maximum likelihood on the duration-resolved histograms.
///
/// Shots whose heralding measurement disagrees with the prepared state are
/// dropped. Standard errors come from the observed information; a rate at
/// the zero boundary also gets a one-sided 95% upper bound.
pub fn extract_rates(records: &[ShotRecord], model: &ExtractionModel) -> Result<Extraction> {
    let groups = histograms(records, model.n_levels)?;
    let mut durations: Vec<f64> = groups.iter().map(|g| g.duration).collect();
    durations.sort_by(f64::total_cmp);
    durations.dedup();
    if durations.len() < 3 {
        return Err(invalid("rate extraction needs at least three distinct durations"));
    }
    let t_max = durations[durations.len() - 1];
    let floor = 1e-3 / t_max;
    let problem = Problem { model, groups };
    let k = model.transitions.len();

    let linear = linear_rate_estimates(records, model.n_levels).unwrap_or_default();
    let mut theta = DVector::from_fn(k, |a, _| {
        let (m, n) = model.transitions[a];
        linear
            .iter()
            .find(|e| e.initial == m && e.final_level == n)
            .map_or(floor, |e| e.rate.max(floor))
    });

    let mut eval = problem.evaluate(&theta, true)?;
    check_identifiable(model, &eval.fisher)?;
    let mut iterations = 0;
    for it in 1..=200 {
        iterations = it;
        // Rates pinned at zero with the likelihood pushing outward stay fixed.
        let free: Vec<usize> = (0..k).filter(|&a| theta[a] > 0.0 || eval.score[a] > 0.0).collect();
        if free.is_empty() {
            break;
        }
        let sub = DMatrix::from_fn(free.len(), free.len(), |i, j| eval.fisher[(free[i], free[j])]);
        let rhs = DVector::from_fn(free.len(), |i, _| eval.score[free[i]]);
        let Some(step) = sub.clone().cholesky().map(|c| c.solve(&rhs)) else {
            check_identifiable(model, &eval.fisher)?;
            return Err(invalid("Fisher information lost positive definiteness"));
        };
        let mut scale = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let mut cand = theta.clone();
            for (i, &a) in free.iter().enumerate() {
                cand[a] = (theta[a] + scale * step[i]).max(0.0);
            }
            let e = problem.evaluate(&cand, true)?;
            if e.log_likelihood >= eval.log_likelihood - 1e-12 * eval.log_likelihood.abs() {
                accepted = Some((cand, e));
                break;
            }
            scale *= 0.5;
        }
        let Some((cand, e)) = accepted else { break };
        let change = (0..k)
            .map(|a| (cand[a] - theta[a]).abs() / (theta[a].abs() + floor))
            .fold(0.0, f64::max);
        let gain = e.log_likelihood - eval.log_likelihood;
        theta = cand;
        eval = e;
        if change < 1e-9 || gain.abs() < 1e-11 * eval.log_likelihood.abs().max(1.0) && change < 1e-6 {
            break;
        }
    }

    // Observed information by differentiating the analytic score.
    let mut observed = DMatrix::zeros(k, k);
    for b in 0..k {
        let h = 1e-4 * theta[b].max(floor);
        let mut up = theta.clone();
        up[b] += h;
        let s_up = problem.evaluate(&up, false)?.score;
        let col = if theta[b] - h >= 0.0 {
            let mut dn = theta.clone();
            dn[b] -= h;
            (s_up - problem.evaluate(&dn, false)?.score) / (2.0 * h)
        } else {
            (s_up - &eval.score) / h
        };
        observed.set_column(b, &(-col));
    }
    let observed = (&observed + observed.transpose()) * 0.5;
    let covariance = invert_spd(&observed)
        .or_else(|| invert_spd(&eval.fisher))
        .ok_or_else(|| {
            check_identifiable(model, &eval.fisher).err().unwrap_or_else(|| invalid("singular information matrix"))
        })?;

    let mut rates = RateSet::new();
    for (a, &(m, n)) in model.transitions.iter().enumerate() {
        let se = covariance[(a, a)].max(0.0).sqrt();
        rates.push_entry(RateEntry {
            initial: m,
            final_level: n,
            rate: theta[a],
            mechanism: Mechanism::Measured,
            std_error: Some(se),
            upper_bound: (theta[a] == 0.0).then_some(UPPER_QUANTILE * se),
        })?;
    }
    Ok(Extraction {
        rates,
        covariance,
        log_likelihood: eval.log_likelihood,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use super::super::experiment::{run_experiment, PulseSequence, ReadoutSettings};
    use super::super::readout::{AssignmentThresholds, ReadoutGeometry};
    use super::*;

    fn thresholds() -> AssignmentThresholds {
        AssignmentThresholds::calibrate(&ReadoutGeometry::default()).unwrap()
    }

    fn records(g: &RateGenerator, initials: &[usize], durations: &[f64], shots: usize, seed: u64) -> Vec<ShotRecord> {
        let t = thresholds();
        initials
            .iter()
            .flat_map(|&i| {
                let seq = PulseSequence {
                    initial_state: i,
                    durations: durations.to_vec(),
                    drive: None,
                    readout: ReadoutSettings::default(),
                };
                run_experiment(&seq, g, &t, shots, seed).unwrap()
            })
            .collect()
    }

    const TRUTH: [((usize, usize), f64); 5] =
        [((1, 0), 2000.0), ((0, 1), 206.0), ((1, 2), 150.0), ((0, 2), 45.0), ((1, 3), 140.0)];

    fn model() -> ExtractionModel {
        let c = thresholds().confusion_matrix().unwrap();
        ExtractionModel::new(4, TRUTH.iter().map(|x| x.0).collect(), c).unwrap()
    }

    #[test]
    fn recovers_known_generator() {
        let g = RateGenerator::from_rates(4, &TRUTH).unwrap();
        let durations = [0.0, 5e-5, 1e-4, 1.5e-4, 2e-4];
        let recs = records(&g, &[0, 1], &durations, 10_000, 17);
        let fit = extract_rates(&recs, &model()).unwrap();
        for &((m, n), r) in &TRUTH {
            let e = fit.rates.entries.iter().find(|e| e.initial == m && e.final_level == n).unwrap();
            let se = e.std_error.unwrap();
            assert!((e.rate - r).abs() < 3.5 * se, "{m}->{n}: {} ± {se} vs {r}", e.rate);
            assert_eq!(e.mechanism, Mechanism::Measured);
        }
    }

    #[test]
    fn no_transitions_gives_zero_with_upper_bound() {
        let g = RateGenerator::from_rates(4, &[((1, 0), 2000.0)]).unwrap();
        let recs = records(&g, &[1], &[0.0, 1e-4, 2e-4], 5000, 3);
        let c = thresholds().confusion_matrix().unwrap();
        let m = ExtractionModel::new(4, vec![(1, 0), (1, 3)], c).unwrap();
        let fit = extract_rates(&recs, &m).unwrap();
        let e = fit.rates.entries.iter().find(|e| e.final_level == 3).unwrap();
        assert!(e.rate < 2.0 * e.std_error.unwrap());
        if e.rate == 0.0 {
            let ub = e.upper_bound.unwrap();
            assert!((ub - 1.645 * e.std_error.unwrap()).abs() < 1e-12 && ub > 0.0);
        }
    }

    #[test]
    fn unpopulated_level_is_not_identifiable() {
        let g = RateGenerator::from_rates(4, &[((1, 0), 2000.0)]).unwrap();
        let recs = records(&g, &[1], &[0.0, 1e-4, 2e-4], 2000, 3);
        let c = thresholds().confusion_matrix().unwrap();
        let m = ExtractionModel::new(4, vec![(1, 0), (2, 3)], c).unwrap();
        match extract_rates(&recs, &m) {
            Err(Error::NonIdentifiable { parameter }) => assert_eq!(parameter, "2 -> 3"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn needs_three_durations() {
        let g = RateGenerator::from_rates(4, &TRUTH).unwrap();
        let recs = records(&g, &[1], &[0.0, 1e-4], 100, 3);
        assert!(extract_rates(&recs, &model()).is_err());
    }

    #[test]
    fn linear_estimate_agrees_with_mle_at_short_times() {
        let g = RateGenerator::from_rates(4, &TRUTH).unwrap();
        // Γ_{1→0}·t_max = 0.04.
        let durations = [0.0, 5e-6, 1e-5, 1.5e-5, 2e-5];
        let recs = records(&g, &[0, 1], &durations, 40_000, 23);
        let fit = extract_rates(&recs, &model()).unwrap();
        let lin = linear_rate_estimates(&recs, 4).unwrap();
        for e in &fit.rates.entries {
            let l = lin.iter().find(|l| l.initial == e.initial && l.final_level == e.final_level).unwrap();
            let combined = (l.std_error.powi(2) + e.std_error.unwrap().powi(2)).sqrt();
            assert!((l.rate - e.rate).abs() < 3.0 * combined, "{l:?} vs {e:?}");
        }
    }

    #[test]
    fn model_validation() {
        let c = thresholds().confusion_matrix().unwrap();
        assert!(ExtractionModel::new(4, vec![(1, 1)], c.clone()).is_err());
        assert!(ExtractionModel::new(4, vec![(4, 1)], c.clone()).is_err());
        assert!(ExtractionModel::new(4, vec![(1, 0), (1, 0)], c.clone()).is_err());
        assert!(ExtractionModel::new(3, vec![(1, 0)], c.clone()).is_err());
        assert_eq!(ExtractionModel::all_from(&[0, 1], 4, c).unwrap().transitions.len(), 8);
    }
}
