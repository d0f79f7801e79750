//! Resonance finding and rate maps over the (ω_q, δω) plane.
//!
//! Qubit frequency is tuned through E_J. All root finding brackets sign
//! changes of a matching condition on a grid in √E_J, then bisects with the
//! exact spectrum evaluated at every probe.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::environment::EnvironmentModel;
use crate::error::{invalid, Result};
use crate::rates::{assemble_rate_set, DriveSpec, MixingFeature, RateOptions, RateSet};
use crate::spectrum::{
    eigensystem, eigensystem_unchecked, ej_for_qubit_frequency, squid_ej, stark_shifted_transition, SpectrumResult,
    TransmonParams, DEFAULT_N_CUT,
};
use crate::units::{angular_to_hz, serde_hz, serde_hz_vec};

/// Number of probes used to bracket roots.
const BRACKET_POINTS: usize = 240;
/// Root tolerance on ω_q: 1 kHz.
const OMEGA_Q_TOL: f64 = 2.0 * std::f64::consts::PI * 1e3;
/// Root tolerance on the matching condition, relative to ω_in.
const RESIDUAL_TOL: f64 = 1e-6;

/// Flux-tunable transmon with a SQUID junction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TunableTransmon {
    pub e_c: f64,
    pub e_j_max: f64,
    /// Junction asymmetry d ∈ [0, 1).
    pub asymmetry: f64,
    /// Swept flux window in units of Φ₀, inside [0, ½].
    pub flux_min: f64,
    pub flux_max: f64,
}

impl TunableTransmon {
    pub fn validate(&self) -> Result<()> {
        if !(self.e_c > 0.0 && self.e_j_max > 0.0) {
            return Err(invalid("e_c and e_j_max must be positive"));
        }
        if !(0.0..1.0).contains(&self.asymmetry) {
            return Err(invalid("asymmetry must lie in [0, 1)"));
        }
        if !(0.0 <= self.flux_min && self.flux_min < self.flux_max && self.flux_max <= 0.5) {
            return Err(invalid("flux window must satisfy 0 <= flux_min < flux_max <= 0.5"));
        }
        if self.asymmetry == 0.0 && self.flux_max >= 0.5 {
            return Err(invalid("a symmetric SQUID has E_J = 0 at half flux; use flux_max < 0.5"));
        }
        Ok(())
    }

    /// Symmetric SQUID swept so that ω_10 covers [omega_q_min, omega_q_max].
    pub fn from_qubit_range(e_c: f64, omega_q_min: f64, omega_q_max: f64) -> Result<Self> {
        if !(omega_q_min < omega_q_max) {
            return Err(invalid("omega_q_min must be below omega_q_max"));
        }
        let e_j_max = ej_for_qubit_frequency(e_c, omega_q_max, DEFAULT_N_CUT)?;
        let e_j_min = ej_for_qubit_frequency(e_c, omega_q_min, DEFAULT_N_CUT)?;
        let mut device = Self {
            e_c,
            e_j_max,
            asymmetry: 0.0,
            flux_min: 0.0,
            flux_max: 0.25,
        };
        device.flux_max = device.flux_for_ej(e_j_min)?;
        device.validate()?;
        Ok(device)
    }

    pub fn params_at(&self, flux: f64) -> Result<TransmonParams> {
        TransmonParams::new(self.e_c, squid_ej(self.e_j_max, flux, self.asymmetry))
    }

    /// (E_J at flux_max, E_J at flux_min); E_J falls monotonically on [0, ½].
    pub fn ej_range(&self) -> (f64, f64) {
        (
            squid_ej(self.e_j_max, self.flux_max, self.asymmetry),
            squid_ej(self.e_j_max, self.flux_min, self.asymmetry),
        )
    }

    /// Flux in [0, ½] giving the requested E_J.
    pub fn flux_for_ej(&self, e_j: f64) -> Result<f64> {
        let r = e_j / self.e_j_max;
        if !(r >= self.asymmetry && r <= 1.0) {
            return Err(invalid("E_J outside the SQUID tuning range"));
        }
        let s2 = (1.0 - r * r) / (1.0 - self.asymmetry * self.asymmetry);
        Ok(s2.sqrt().min(1.0).asin() / std::f64::consts::PI)
    }

    pub fn qubit_frequency_at(&self, flux: f64) -> Result<f64> {
        Ok(eigensystem_unchecked(&self.params_at(flux)?, DEFAULT_N_CUT, 2)?.qubit_frequency())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HitKind {
    Multiphoton,
    Sideband,
    SixWave,
    Tls,
}

/// A point where a matching condition holds exactly.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResonanceHit {
    pub kind: HitKind,
    pub initial: usize,
    #[serde(rename = "final")]
    pub final_level: usize,
    pub n_drive: u32,
    #[serde(rename = "omega_q_star_hz", with = "serde_hz")]
    pub omega_q_star: f64,
    #[serde(rename = "delta_omega_hz", with = "serde_hz")]
    pub delta_omega: f64,
    #[serde(rename = "residual_hz", with = "serde_hz")]
    pub residual: f64,
    pub forbidden: bool,
}

/// Charge-parity selection rule: a process exchanging `quanta` photons
/// through the odd charge operator needs final − initial of the same parity.
pub fn parity_forbidden(initial: usize, final_level: usize, quanta: u32) -> bool {
    (initial.abs_diff(final_level) + quanta as usize) % 2 == 1
}

struct Probe {
    e_j: f64,
    spec: SpectrumResult,
}

struct Root {
    spec: SpectrumResult,
    residual: f64,
}

struct Sweep {
    e_c: f64,
    n_levels: usize,
    n_cut: usize,
    grid: Vec<Probe>,
}

impl Sweep {
    fn new(device: &TunableTransmon, n_levels: usize) -> Result<Self> {
        device.validate()?;
        if n_levels < 2 {
            return Err(invalid("need at least two levels"));
        }
        let n_cut = DEFAULT_N_CUT.max(n_levels + 10);
        let (lo, hi) = device.ej_range();
        // Truncation is checked once at both ends of the range.
        eigensystem(&TransmonParams::new(device.e_c, lo)?, n_cut, n_levels)?;
        eigensystem(&TransmonParams::new(device.e_c, hi)?, n_cut, n_levels)?;
        let (a, b) = (lo.sqrt(), hi.sqrt());
        let grid = (0..BRACKET_POINTS)
            .into_par_iter()
            .map(|i| {
                let s = a + (b - a) * i as f64 / (BRACKET_POINTS - 1) as f64;
                let e_j = s * s;
                Ok(Probe {
                    e_j,
                    spec: eigensystem_unchecked(&TransmonParams::new(device.e_c, e_j)?, n_cut, n_levels)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            e_c: device.e_c,
            n_levels,
            n_cut,
            grid,
        })
    }

    fn spectrum(&self, e_j: f64) -> Result<SpectrumResult> {
        eigensystem_unchecked(&TransmonParams::new(self.e_c, e_j)?, self.n_cut, self.n_levels)
    }

    /// All roots of `cond` in the swept range, ordered by ω_q.
    fn roots<F>(&self, cond: F, scale: f64) -> Result<Vec<Root>>
    where
        F: Fn(&SpectrumResult) -> Result<f64>,
    {
        let values = self.grid.iter().map(|p| cond(&p.spec)).collect::<Result<Vec<_>>>()?;
        let mut out = Vec::new();
        for i in 0..self.grid.len() - 1 {
            let (ga, gb) = (values[i], values[i + 1]);
            if ga == 0.0 {
                out.push(Root {
                    spec: self.grid[i].spec.clone(),
                    residual: 0.0,
                });
                continue;
            }
            if ga * gb >= 0.0 {
                continue;
            }
            let (mut lo, mut hi) = (self.grid[i].e_j, self.grid[i + 1].e_j);
            let (mut g_lo, mut wq_lo, mut wq_hi) =
                (ga, self.grid[i].spec.qubit_frequency(), self.grid[i + 1].spec.qubit_frequency());
            let mut best = (self.grid[i].spec.clone(), ga);
            for _ in 0..200 {
                let mid = 0.5 * (lo + hi);
                let spec = self.spectrum(mid)?;
                let g = cond(&spec)?;
                let wq = spec.qubit_frequency();
                let converged = (wq_hi - wq_lo).abs() < OMEGA_Q_TOL && g.abs() < RESIDUAL_TOL * scale;
                best = (spec, g);
                if g == 0.0 || converged {
                    break;
                }
                if g * g_lo > 0.0 {
                    lo = mid;
                    g_lo = g;
                    wq_lo = wq;
                } else {
                    hi = mid;
                    wq_hi = wq;
                }
            }
            out.push(Root {
                spec: best.0,
                residual: best.1,
            });
        }
        Ok(out)
    }
}

/// Roots of n·ω_in = ω_{f,i}[δω] + (n−1)·ω_res for i ∈ {0, 1}, i < f ≤ max_level, 1 ≤ n ≤ max_order.
pub fn find_multiphoton_resonances(
    device: &TunableTransmon,
    omega_in: f64,
    omega_res: f64,
    delta_omega: f64,
    max_level: usize,
    max_order: u32,
) -> Result<Vec<ResonanceHit>> {
    if !(1..=5).contains(&max_order) {
        return Err(invalid("max_order must lie in 1..=5"));
    }
    if max_level < 1 {
        return Err(invalid("max_level must be at least 1"));
    }
    let sweep = Sweep::new(device, max_level + 1)?;
    multiphoton_on_sweep(&sweep, omega_in, omega_res, &[delta_omega], max_order)
}

fn multiphoton_on_sweep(
    sweep: &Sweep,
    omega_in: f64,
    omega_res: f64,
    delta_omegas: &[f64],
    max_order: u32,
) -> Result<Vec<ResonanceHit>> {
    let max_level = sweep.n_levels - 1;
    let mut hits = Vec::new();
    for &dw in delta_omegas {
        for initial in 0..=1usize.min(max_level - 1) {
            for final_level in initial + 1..=max_level {
                for n in 1..=max_order {
                    let target = n as f64 * omega_in - (n - 1) as f64 * omega_res;
                    let cond = |s: &SpectrumResult| Ok(target - stark_shifted_transition(s, initial, final_level, dw)?);
                    for root in sweep.roots(cond, omega_in)? {
                        hits.push(ResonanceHit {
                            kind: if n == 1 { HitKind::Multiphoton } else { HitKind::Sideband },
                            initial,
                            final_level,
                            n_drive: n,
                            omega_q_star: root.spec.qubit_frequency(),
                            delta_omega: dw,
                            residual: root.residual,
                            forbidden: parity_forbidden(initial, final_level, 2 * n - 1),
                        });
                    }
                }
            }
        }
    }
    Ok(hits)
}

/// ω_q*(n = 2) − ω_q*(n = 1) for one transition.
pub fn sideband_spacing(
    device: &TunableTransmon,
    omega_in: f64,
    omega_res: f64,
    transition: (usize, usize),
    delta_omega: f64,
) -> Result<f64> {
    let (i, f) = (transition.0.min(transition.1), transition.0.max(transition.1));
    let sweep = Sweep::new(device, f + 1)?;
    let root_for = |n: f64| -> Result<Option<f64>> {
        let target = n * omega_in - (n - 1.0) * omega_res;
        let roots = sweep.roots(|s| Ok(target - stark_shifted_transition(s, i, f, delta_omega)?), omega_in)?;
        Ok(roots.first().map(|r| r.spec.qubit_frequency()))
    };
    match (root_for(1.0)?, root_for(2.0)?) {
        (Some(a), Some(b)) => Ok(b - a),
        _ => Err(invalid(format!(
            "fewer than two sideband roots for {i} -> {f} in the swept range"
        ))),
    }
}

/// (ω_q, δω) points where ω_{n,m}[δω] = ω_TLS.
pub fn tls_lines(
    device: &TunableTransmon,
    omega_tls: f64,
    transition: (usize, usize),
    delta_omega_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    let (m, n) = (transition.0.min(transition.1), transition.0.max(transition.1));
    if m == n {
        return Err(invalid("transition needs two distinct levels"));
    }
    let sweep = Sweep::new(device, n + 1)?;
    let mut out = Vec::new();
    for &dw in delta_omega_grid {
        for r in sweep.roots(|s| Ok(stark_shifted_transition(s, m, n, dw)? - omega_tls), omega_tls)? {
            out.push((r.spec.qubit_frequency(), dw));
        }
    }
    Ok(out)
}

/// Drive frequencies solving p·ω_in = ω_{f,i}[δω] + ω_s at fixed flux.
pub fn mixing_line(
    spec: &SpectrumResult,
    initial: usize,
    final_level: usize,
    photons: u32,
    omega_s: f64,
    delta_omega_grid: &[f64],
) -> Result<Vec<(f64, f64)>> {
    if photons == 0 {
        return Err(invalid("at least one drive photon"));
    }
    delta_omega_grid
        .iter()
        .map(|&dw| Ok(((stark_shifted_transition(spec, initial, final_level, dw)? + omega_s) / photons as f64, dw)))
        .collect()
}

/// 3ω_in = ω_{3,1}[δω] + ω_s.
pub fn six_wave_line(omega_s: f64, spec: &SpectrumResult, delta_omega_grid: &[f64]) -> Result<Vec<(f64, f64)>> {
    mixing_line(spec, 1, 3, 3, omega_s, delta_omega_grid)
}

/// How the drive frequency is chosen across a map.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveTuning {
    Fixed(#[serde(with = "serde_hz")] f64),
    /// ω_in = ω_res + offset.
    ResonatorOffset(#[serde(with = "serde_hz")] f64),
}

/// Inputs of [`build_rate_map`] besides the grids.
#[derive(Debug, Clone, PartialEq)]
pub struct RateMapConfig {
    pub e_c: f64,
    pub env: EnvironmentModel,
    pub drive: DriveTuning,
    pub temperature: f64,
    pub gamma_down_0: f64,
    pub options: RateOptions,
    pub n_levels: usize,
    pub max_order: u32,
    /// Cell-annotation tolerance on a matching condition; `None` uses κ.
    pub match_tolerance: Option<f64>,
}

/// One (ω_q, δω) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapCell {
    #[serde(rename = "omega_q_hz", with = "serde_hz")]
    pub omega_q: f64,
    #[serde(rename = "delta_omega_hz", with = "serde_hz")]
    pub delta_omega: f64,
    pub rates: Option<RateSet>,
    pub error: Option<String>,
    pub on_feature: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateMap {
    #[serde(rename = "omega_q_hz", with = "serde_hz_vec")]
    pub omega_q: Vec<f64>,
    #[serde(rename = "delta_omega_hz", with = "serde_hz_vec")]
    pub delta_omega: Vec<f64>,
    /// Row-major: ω_q index outer, δω index inner.
    pub cells: Vec<MapCell>,
    pub annotations: Vec<ResonanceHit>,
}

#[derive(Serialize)]
struct MapRow {
    omega_q_hz: f64,
    delta_omega_hz: f64,
    initial: usize,
    #[serde(rename = "final")]
    final_level: usize,
    rate_hz: f64,
    mechanism: crate::rates::Mechanism,
}

impl RateMap {
    pub fn cell(&self, iq: usize, idw: usize) -> &MapCell {
        &self.cells[iq * self.delta_omega.len() + idw]
    }

    pub fn failed_cells(&self) -> usize {
        self.cells.iter().filter(|c| c.rates.is_none()).count()
    }

    /// Long-format CSV, one row per rate entry.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for c in &self.cells {
            let Some(rates) = &c.rates else { continue };
            for e in &rates.entries {
                w.serialize(MapRow {
                    omega_q_hz: angular_to_hz(c.omega_q),
                    delta_omega_hz: angular_to_hz(c.delta_omega),
                    initial: e.initial,
                    final_level: e.final_level,
                    rate_hz: e.rate,
                    mechanism: e.mechanism,
                })?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

fn strictly_increasing(v: &[f64]) -> bool {
    v.iter().all(|x| x.is_finite()) && v.windows(2).all(|w| w[1] > w[0])
}

fn drive_frequency(cfg: &RateMapConfig, omega_q: f64) -> Result<f64> {
    Ok(match cfg.drive {
        DriveTuning::Fixed(w) => w,
        DriveTuning::ResonatorOffset(off) => cfg.env.effective_channel(cfg.e_c, omega_q)?.omega_res + off,
    })
}

fn evaluate_cell(cfg: &RateMapConfig, params: &TransmonParams, spec: &SpectrumResult, dw: f64) -> Result<(RateSet, bool)> {
    let omega_q = spec.qubit_frequency();
    let omega_in = drive_frequency(cfg, omega_q)?;
    let drive = DriveSpec::new(omega_in, dw)?;
    let rates = assemble_rate_set(spec, params, &cfg.env, &drive, cfg.temperature, cfg.gamma_down_0, &cfg.options)?;
    let channel = cfg.env.effective_channel(cfg.e_c, omega_q)?;
    let tol = cfg.match_tolerance.unwrap_or(channel.kappa);
    let mut on = false;
    for i in 0..=1 {
        for f in i + 1..spec.n_levels {
            let w = stark_shifted_transition(spec, i, f, dw)?;
            for n in 1..=cfg.max_order {
                let x = n as f64 * omega_in - (n - 1) as f64 * channel.omega_res - w;
                on |= x.abs() <= tol;
            }
        }
    }
    for t in &cfg.env.tls {
        for (m, n) in [(0, 1), (1, 2)] {
            let x = stark_shifted_transition(spec, m, n, dw)? - t.omega_tls;
            on |= x.abs() <= tol.max(t.width);
        }
    }
    for feat in &cfg.options.mixing {
        if feat.final_level < spec.n_levels {
            on |= feat.detuning(spec, omega_in, dw)?.abs() <= tol.max(feat.width);
        }
    }
    Ok((rates, on))
}

fn mixing_hits(sweep: &Sweep, cfg: &RateMapConfig, feat: &MixingFeature, dw: f64, omega_in_scale: f64) -> Result<Vec<ResonanceHit>> {
    if feat.final_level >= sweep.n_levels {
        return Ok(Vec::new());
    }
    let cond = |s: &SpectrumResult| -> Result<f64> {
        let omega_in = drive_frequency(cfg, s.qubit_frequency())?;
        feat.detuning(s, omega_in, dw)
    };
    Ok(sweep
        .roots(cond, omega_in_scale)?
        .into_iter()
        .map(|r| ResonanceHit {
            kind: HitKind::SixWave,
            initial: feat.initial,
            final_level: feat.final_level,
            n_drive: feat.photons,
            omega_q_star: r.spec.qubit_frequency(),
            delta_omega: dw,
            residual: r.residual,
            forbidden: parity_forbidden(feat.initial, feat.final_level, feat.photons + 1),
        })
        .collect())
}

fn annotate(cfg: &RateMapConfig, omega_q_grid: &[f64], delta_omega_grid: &[f64]) -> Result<Vec<ResonanceHit>> {
    let (q_lo, q_hi) = (omega_q_grid[0], omega_q_grid[omega_q_grid.len() - 1]);
    let device = TunableTransmon::from_qubit_range(cfg.e_c, q_lo, q_hi)?;
    let sweep = Sweep::new(&device, cfg.n_levels)?;
    let mut hits = Vec::new();
    let omega_res = cfg.env.effective_channel(cfg.e_c, q_hi)?.omega_res;
    let omega_in_scale = drive_frequency(cfg, q_hi)?;
    if let DriveTuning::Fixed(omega_in) = cfg.drive {
        hits.extend(multiphoton_on_sweep(&sweep, omega_in, omega_res, delta_omega_grid, cfg.max_order)?);
    }
    for &dw in delta_omega_grid {
        for t in &cfg.env.tls {
            for (m, n) in [(0usize, 1usize), (1, 2)] {
                let roots = sweep.roots(|s| Ok(stark_shifted_transition(s, m, n, dw)? - t.omega_tls), t.omega_tls)?;
                hits.extend(roots.into_iter().map(|r| ResonanceHit {
                    kind: HitKind::Tls,
                    initial: m,
                    final_level: n,
                    n_drive: 1,
                    omega_q_star: r.spec.qubit_frequency(),
                    delta_omega: dw,
                    residual: r.residual,
                    forbidden: false,
                }));
            }
        }
        for feat in &cfg.options.mixing {
            hits.extend(mixing_hits(&sweep, cfg, feat, dw, omega_in_scale)?);
        }
    }
    Ok(hits)
}

/// Rates on every (ω_q, δω) cell plus resonance annotations.
///
/// Cells are evaluated in parallel and gathered by index, so the result does
/// not depend on the worker count. A failing cell keeps its error message.
pub fn build_rate_map(cfg: &RateMapConfig, omega_q_grid: &[f64], delta_omega_grid: &[f64]) -> Result<RateMap> {
    if !strictly_increasing(omega_q_grid) || !strictly_increasing(delta_omega_grid) {
        return Err(invalid("grids must be finite and strictly increasing"));
    }
    if cfg.n_levels < 4 {
        return Err(invalid("rate maps need at least four levels"));
    }
    cfg.env.validate()?;
    if omega_q_grid.is_empty() || delta_omega_grid.is_empty() {
        return Ok(RateMap {
            omega_q: omega_q_grid.to_vec(),
            delta_omega: delta_omega_grid.to_vec(),
            cells: Vec::new(),
            annotations: Vec::new(),
        });
    }
    let n_cut = DEFAULT_N_CUT.max(cfg.n_levels + 10);
    let columns: Vec<Vec<MapCell>> = omega_q_grid
        .par_iter()
        .map(|&wq| {
            let device = ej_for_qubit_frequency(cfg.e_c, wq, n_cut)
                .and_then(|e_j| TransmonParams::new(cfg.e_c, e_j))
                .and_then(|p| Ok((p, eigensystem(&p, n_cut, cfg.n_levels)?)));
            delta_omega_grid
                .iter()
                .map(|&dw| {
                    let result = device.clone().and_then(|(p, s)| evaluate_cell(cfg, &p, &s, dw));
                    match result {
                        Ok((rates, on_feature)) => MapCell {
                            omega_q: wq,
                            delta_omega: dw,
                            rates: Some(rates),
                            error: None,
                            on_feature,
                        },
                        Err(e) => MapCell {
                            omega_q: wq,
                            delta_omega: dw,
                            rates: None,
                            error: Some(e.to_string()),
                            on_feature: false,
                        },
                    }
                })
                .collect()
        })
        .collect();
    let annotations = if omega_q_grid.len() >= 2 {
        annotate(cfg, omega_q_grid, delta_omega_grid).unwrap_or_else(|e| {
            log::warn!("resonance annotation skipped: {e}");
            Vec::new()
        })
    } else {
        Vec::new()
    };
    Ok(RateMap {
        omega_q: omega_q_grid.to_vec(),
        delta_omega: delta_omega_grid.to_vec(),
        cells: columns.into_iter().flatten().collect(),
        annotations,
    })
}
