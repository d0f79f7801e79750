//! Pulse sequences and shot records.

use std::io::{Read, Write};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::readout::{assign_state, synthesize_iq, AssignmentThresholds};
use super::{parse_state_label, sample_trajectory, state_label, RateGenerator};
use crate::error::{invalid, Result};
use crate::rates::DriveSpec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReadoutSettings {
    /// Let the generator act during the readout windows as well.
    pub backaction: bool,
    /// Readout window (s).
    pub duration: f64,
}

impl Default for ReadoutSettings {
    fn default() -> Self {
        Self {
            backaction: false,
            duration: 4e-6,
        }
    }
}

/// Prepare, measure, drive for a variable time, measure again.
#[derive(Debug, Clone, PartialEq)]
pub struct PulseSequence {
    pub initial_state: usize,
    /// Drive durations (s), strictly increasing.
    pub durations: Vec<f64>,
    pub drive: Option<DriveSpec>,
    pub readout: ReadoutSettings,
}

impl PulseSequence {
    pub fn validate(&self, n_levels: usize) -> Result<()> {
        if self.initial_state >= n_levels {
            return Err(invalid("initial state must be a resolved level"));
        }
        if self.durations.is_empty() {
            return Err(invalid("need at least one drive duration"));
        }
        if self.durations.iter().any(|&t| !(t >= 0.0 && t.is_finite())) {
            return Err(invalid("durations must be finite and non-negative"));
        }
        if self.durations.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("durations must be strictly increasing"));
        }
        if !(self.readout.duration >= 0.0) {
            return Err(invalid("readout duration must be non-negative"));
        }
        Ok(())
    }
}

/// One repetition of the sequence. Level indices equal to the resolved
/// level count denote the lumped state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotRecord {
    pub duration_index: usize,
    pub duration: f64,
    pub initial: usize,
    pub pre_assigned: usize,
    pub iq: (f64, f64),
    pub assigned: usize,
    /// Emulator-only ground truth at the final measurement.
    pub truth: usize,
}

fn shot_rng(seed: u64, initial: usize, duration_index: usize, shot: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((initial as u64) << 56) | ((duration_index as u64) << 32) | shot as u64);
    rng
}

/// Shots for every duration; shot (d, s) draws from its own substream, so
/// results do not depend on scheduling.
pub fn run_experiment(
    seq: &PulseSequence,
    g: &RateGenerator,
    thresholds: &AssignmentThresholds,
    shots_per_duration: usize,
    seed: u64,
) -> Result<Vec<ShotRecord>> {
    seq.validate(g.n_levels)?;
    if thresholds.n_levels() != g.n_levels {
        return Err(invalid("readout thresholds and generator resolve different level counts"));
    }
    if shots_per_duration == 0 {
        return Err(invalid("shots_per_duration must be positive"));
    }
    if shots_per_duration >= 1 << 32 || seq.durations.len() >= 1 << 24 {
        return Err(invalid("too many shots or durations for the substream layout"));
    }
    let total = seq.durations.len() * shots_per_duration;
    let records = (0..total)
        .into_par_iter()
        .map(|idx| {
            let (d, s) = (idx / shots_per_duration, idx % shots_per_duration);
            let t = seq.durations[d];
            let mut rng = shot_rng(seed, seq.initial_state, d, s);
            let pre_assigned = assign_state(synthesize_iq(seq.initial_state, thresholds, &mut rng), thresholds);
            let mut state = seq.initial_state;
            if seq.readout.backaction {
                state = sample_trajectory(g, state, seq.readout.duration, &mut rng);
            }
            state = sample_trajectory(g, state, t, &mut rng);
            if seq.readout.backaction {
                state = sample_trajectory(g, state, seq.readout.duration, &mut rng);
            }
            let iq = synthesize_iq(state, thresholds, &mut rng);
            ShotRecord {
                duration_index: d,
                duration: t,
                initial: seq.initial_state,
                pre_assigned,
                iq,
                assigned: assign_state(iq, thresholds),
                truth: state,
            }
        })
        .collect();
    Ok(records)
}

#[derive(Serialize, Deserialize)]
struct ShotRow {
    duration_s: f64,
    i: f64,
    q: f64,
    assigned: String,
    truth: String,
    initial: usize,
    pre_assigned: String,
}

/// CSV columns duration_s, i, q, assigned, truth, initial, pre_assigned.
pub fn write_shots_csv<W: Write>(records: &[ShotRecord], n_levels: usize, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    for r in records {
        w.serialize(ShotRow {
            duration_s: r.duration,
            i: r.iq.0,
            q: r.iq.1,
            assigned: state_label(r.assigned, n_levels),
            truth: state_label(r.truth, n_levels),
            initial: r.initial,
            pre_assigned: state_label(r.pre_assigned, n_levels),
        })
        .map_err(|e| invalid(format!("writing shots: {e}")))?;
    }
    w.flush().map_err(|e| invalid(format!("writing shots: {e}")))?;
    Ok(())
}

/// Reads [`write_shots_csv`] output; duration indices follow increasing duration.
pub fn read_shots_csv<R: Read>(reader: R, n_levels: usize) -> Result<Vec<ShotRecord>> {
    let mut rows = Vec::new();
    for row in csv::Reader::from_reader(reader).deserialize::<ShotRow>() {
        rows.push(row.map_err(|e| invalid(format!("reading shots: {e}")))?);
    }
    let mut durations: Vec<f64> = rows.iter().map(|r| r.duration_s).collect();
    durations.sort_by(f64::total_cmp);
    durations.dedup();
    rows.into_iter()
        .map(|r| {
            Ok(ShotRecord {
                duration_index: durations.partition_point(|&d| d < r.duration_s),
                duration: r.duration_s,
                initial: r.initial,
                pre_assigned: parse_state_label(&r.pre_assigned, n_levels)?,
                iq: (r.i, r.q),
                assigned: parse_state_label(&r.assigned, n_levels)?,
                truth: parse_state_label(&r.truth, n_levels)?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::super::readout::ReadoutGeometry;
    use super::super::{evolve_populations, RateGenerator};
    use super::*;
    use nalgebra::DVector;

    fn setup() -> (RateGenerator, AssignmentThresholds) {
        let g = RateGenerator::from_rates(4, &[((1, 0), 2000.0), ((0, 1), 206.0), ((1, 2), 100.0), ((1, 3), 300.0)])
            .unwrap();
        (g, AssignmentThresholds::calibrate(&ReadoutGeometry::default()).unwrap())
    }

    fn seq(initial: usize, durations: Vec<f64>) -> PulseSequence {
        PulseSequence {
            initial_state: initial,
            durations,
            drive: None,
            readout: ReadoutSettings::default(),
        }
    }

    #[test]
    fn zero_duration_keeps_initial_state() {
        let (g, t) = setup();
        let recs = run_experiment(&seq(1, vec![0.0]), &g, &t, 2000, 3).unwrap();
        assert!(recs.iter().all(|r| r.truth == 1));
        let wrong = recs.iter().filter(|r| r.assigned != 1).count();
        assert!(wrong < 20, "{wrong}");
    }

    #[test]
    fn seeds_are_deterministic() {
        let (g, t) = setup();
        let s = seq(1, vec![0.0, 1e-4, 2e-4]);
        let a = run_experiment(&s, &g, &t, 500, 42).unwrap();
        let b = run_experiment(&s, &g, &t, 500, 42).unwrap();
        let c = run_experiment(&s, &g, &t, 500, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        assert_eq!(pool.install(|| run_experiment(&s, &g, &t, 500, 42).unwrap()), a);
    }

    #[test]
    fn long_thermal_run_reaches_stationary_populations() {
        let w = crate::units::mhz(758.0);
        let (down, up) = crate::rates::thermal_rates(w, 0.016, 2000.0).unwrap();
        let g = RateGenerator::from_rates(4, &[((1, 0), down), ((0, 1), up)]).unwrap();
        let t = AssignmentThresholds::calibrate(&ReadoutGeometry::default()).unwrap();
        let n = 40_000;
        let recs = run_experiment(&seq(1, vec![0.02]), &g, &t, n, 5).unwrap();
        let b = crate::rates::boltzmann_factor(w, 0.016);
        let p1 = b / (1.0 + b);
        let f1 = recs.iter().filter(|r| r.truth == 1).count() as f64 / n as f64;
        assert!((f1 - p1).abs() < 4.0 * (p1 * (1.0 - p1) / n as f64).sqrt());
    }

    #[test]
    fn leakage_grows_linearly_at_short_times() {
        let (g, t) = setup();
        let n = 50_000;
        let recs = run_experiment(&seq(1, vec![2e-5]), &g, &t, n, 9).unwrap();
        let f3 = recs.iter().filter(|r| r.truth == 3).count() as f64 / n as f64;
        let p = evolve_populations(&g, &DVector::from_vec(vec![0.0, 1.0, 0.0, 0.0, 0.0]), 2e-5).unwrap();
        assert!((p[3] / (300.0 * 2e-5) - 1.0).abs() < 0.03);
        assert!((f3 - p[3]).abs() < 4.0 * (p[3] / n as f64).sqrt());
    }

    #[test]
    fn backaction_adds_readout_time() {
        let (g, t) = setup();
        let mut s = seq(1, vec![0.0]);
        s.readout.backaction = true;
        s.readout.duration = 1e-4;
        let recs = run_experiment(&s, &g, &t, 5000, 1).unwrap();
        assert!(recs.iter().filter(|r| r.truth != 1).count() > 1000);
    }

    #[test]
    fn validation() {
        let (g, t) = setup();
        assert!(run_experiment(&seq(1, vec![0.0]), &g, &t, 0, 1).is_err());
        assert!(run_experiment(&seq(1, vec![1e-5, 1e-5]), &g, &t, 10, 1).is_err());
        assert!(run_experiment(&seq(1, vec![]), &g, &t, 10, 1).is_err());
        assert!(run_experiment(&seq(4, vec![0.0]), &g, &t, 10, 1).is_err());
    }

    #[test]
    fn csv_round_trip() {
        let (g, t) = setup();
        let recs = run_experiment(&seq(0, vec![0.0, 1e-3]), &g, &t, 50, 2).unwrap();
        let mut buf = Vec::new();
        write_shots_csv(&recs, 4, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("duration_s,i,q,assigned,truth,initial,pre_assigned\n"));
        let back = read_shots_csv(buf.as_slice(), 4).unwrap();
        assert_eq!(back, recs);
    }
}
