//! Golden-rule transition rates of a driven transmon.
//!
//! Drive power enters as the AC Stark shift δω and the environment as the
//! weighted impedance (ω_q/ω)·2π Re Z[ω]/R_Q; see [`crate::environment`].

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::environment::{total_weighted_impedance, EnvironmentModel, SpuriousMode};
use crate::error::{invalid, Error, Result};
use crate::quadrature::{integrate, QuadratureOptions};
use crate::spectrum::{stark_shifted_transition, transition_frequency, SpectrumResult, TransmonParams};
use crate::units::{BOLTZMANN, HBAR};

/// Physical origin of a rate entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mechanism {
    Raman,
    TwoPhoton,
    TwoOut,
    Thermal,
    Tls,
    Resonant,
    /// Re-extracted from (emulated) measurement records.
    Measured,
}

impl Mechanism {
    pub fn as_str(&self) -> &'static str {
        match self {
            Mechanism::Raman => "raman",
            Mechanism::TwoPhoton => "two_photon",
            Mechanism::TwoOut => "two_out",
            Mechanism::Thermal => "thermal",
            Mechanism::Tls => "tls",
            Mechanism::Resonant => "resonant",
            Mechanism::Measured => "measured",
        }
    }
}

impl std::fmt::Display for Mechanism {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

/// Drive frequency and strength.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub omega_in: f64,
    /// Absolute AC Stark shift (rad/s).
    pub delta_omega: f64,
    /// Mean resonator photon number, if known.
    pub n_bar: Option<f64>,
}

impl DriveSpec {
    pub fn new(omega_in: f64, delta_omega: f64) -> Result<Self> {
        let d = Self {
            omega_in,
            delta_omega,
            n_bar: None,
        };
        d.validate(None)?;
        Ok(d)
    }

    /// Checks δω ≥ 0 and, when both n̄ and χ are known, δω = |χ|·n̄.
    pub fn validate(&self, chi: Option<f64>) -> Result<()> {
        if !(self.omega_in > 0.0) {
            return Err(invalid("omega_in must be positive"));
        }
        if !(self.delta_omega >= 0.0) {
            return Err(invalid("delta_omega must be non-negative"));
        }
        if let (Some(n), Some(chi)) = (self.n_bar, chi) {
            let expect = chi.abs() * n;
            if (self.delta_omega - expect).abs() > 1e-9 * expect.abs().max(self.delta_omega) {
                return Err(invalid(format!(
                    "delta_omega {} inconsistent with chi * n_bar = {expect}",
                    self.delta_omega
                )));
            }
        }
        Ok(())
    }
}

/// One Γ_{initial→final} contribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateEntry {
    pub initial: usize,
    #[serde(rename = "final")]
    pub final_level: usize,
    /// Rate in 1/s.
    pub rate: f64,
    pub mechanism: Mechanism,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub std_error: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper_bound: Option<f64>,
}

/// Transition rates, possibly several mechanisms per level pair.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RateSet {
    pub entries: Vec<RateEntry>,
}

#[derive(Serialize)]
struct RateRow {
    initial: usize,
    #[serde(rename = "final")]
    final_level: usize,
    rate_hz: f64,
    mechanism: Mechanism,
}

impl RateSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, initial: usize, final_level: usize, rate: f64, mechanism: Mechanism) -> Result<()> {
        self.push_entry(RateEntry {
            initial,
            final_level,
            rate,
            mechanism,
            std_error: None,
            upper_bound: None,
        })
    }

    pub fn push_entry(&mut self, entry: RateEntry) -> Result<()> {
        if entry.initial == entry.final_level {
            return Err(invalid(format!("self-transition {0} -> {0}", entry.initial)));
        }
        if !(entry.rate >= 0.0) {
            return Err(Error::NegativeRate {
                initial: entry.initial,
                final_level: entry.final_level,
                rate: entry.rate,
            });
        }
        self.entries.push(entry);
        Ok(())
    }

    /// Sum over mechanisms of Γ_{initial→final}.
    pub fn total(&self, initial: usize, final_level: usize) -> f64 {
        self.entries
            .iter()
            .filter(|e| e.initial == initial && e.final_level == final_level)
            .map(|e| e.rate)
            .sum()
    }

    pub fn get(&self, initial: usize, final_level: usize, mechanism: Mechanism) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.initial == initial && e.final_level == final_level && e.mechanism == mechanism)
            .map(|e| e.rate)
    }

    pub fn pairs(&self) -> BTreeSet<(usize, usize)> {
        self.entries.iter().map(|e| (e.initial, e.final_level)).collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// CSV rows `initial,final,rate_hz,mechanism`.
    pub fn write_csv<W: Write>(&self, writer: W) -> csv::Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for e in &self.entries {
            w.serialize(RateRow {
                initial: e.initial,
                final_level: e.final_level,
                rate_hz: e.rate,
                mechanism: e.mechanism,
            })?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_non_negative(name: &str, x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(invalid(format!("{name} must be non-negative, got {x}")))
    }
}

/// Γ_{m→m+2} = (m+1)(m+2)·weighted_z·δω.
///
/// `weighted_z` is (ω_q/ω_out)·2π Re Z[ω_out]/R_Q at ω_out = ω_in − ω_{m+2,m}.
pub fn raman_rate(m: usize, omega_q: f64, weighted_z: f64, delta_omega: f64) -> Result<f64> {
    check_non_negative("omega_q", omega_q)?;
    check_non_negative("weighted_z", weighted_z)?;
    check_non_negative("delta_omega", delta_omega)?;
    let m = m as f64;
    Ok((m + 1.0) * (m + 2.0) * weighted_z * delta_omega)
}

/// ω_out = ω_in − ω_{m+2,m} from the exact spectrum.
pub fn raman_output_frequency(spec: &SpectrumResult, m: usize, omega_in: f64) -> Result<f64> {
    let w = omega_in - transition_frequency(spec, m, m + 2)?;
    if w > 0.0 {
        Ok(w)
    } else {
        Err(invalid("drive frequency below the m -> m+2 transition"))
    }
}

/// (m+1)(m+2)·κχδω/(16ω_q²), valid for ω_res ≫ ω_q and η² ≪ 1.
pub fn raman_rate_simplified(m: usize, kappa: f64, chi: f64, omega_q: f64, delta_omega: f64) -> f64 {
    let m = m as f64;
    (m + 1.0) * (m + 2.0) * kappa * chi.abs() * delta_omega / (16.0 * omega_q * omega_q)
}

/// Output photon frequency of the two-photon process from level m.
///
/// Down: 2ω_in + ω_{m,m−1}. Up: 2ω_in − ω_{m+1,m}.
pub fn two_photon_output_frequency(spec: &SpectrumResult, m: usize, direction: Direction, omega_in: f64) -> Result<f64> {
    match direction {
        Direction::Down => {
            if m == 0 {
                return Err(invalid("no level below the ground state"));
            }
            Ok(2.0 * omega_in + transition_frequency(spec, m - 1, m)?)
        }
        Direction::Up => Ok(2.0 * omega_in - transition_frequency(spec, m, m + 1)?),
    }
}

fn two_photon_prefactor(m: usize, direction: Direction) -> f64 {
    match direction {
        Direction::Down => m as f64,
        Direction::Up => (m + 1) as f64,
    }
}

/// Two drive photons in, one photon out, qubit m → m∓1.
///
/// Γ = m·(ω_q/ω_out)(π Re Z[ω_out]/R_Q)·δω²/E_C for down, (m+1)·… for up.
pub fn two_photon_rate(
    m: usize,
    direction: Direction,
    omega_q: f64,
    omega_out: f64,
    weighted_z_at_out: f64,
    delta_omega: f64,
    e_c: f64,
) -> Result<f64> {
    check_non_negative("omega_q", omega_q)?;
    check_non_negative("omega_out", omega_out)?;
    check_non_negative("weighted_z_at_out", weighted_z_at_out)?;
    check_non_negative("delta_omega", delta_omega)?;
    if !(e_c > 0.0) {
        return Err(invalid("e_c must be positive"));
    }
    // weighted_z carries 2π Re Z; the two-photon rate needs π Re Z.
    Ok(two_photon_prefactor(m, direction) * 0.5 * weighted_z_at_out * delta_omega * delta_omega / e_c)
}

/// Closed form (2m/9)·κχ/ω_res²·δω²/E_C for ω_res ≫ ω_q.
pub fn two_photon_rate_simplified(m: usize, kappa: f64, chi: f64, omega_res: f64, delta_omega: f64, e_c: f64) -> f64 {
    2.0 * m as f64 / 9.0 * kappa * chi.abs() / (omega_res * omega_res) * delta_omega * delta_omega / e_c
}

/// Two-photon relaxation into a spurious mode:
/// m·κ_s/((κ_s/2)² + (ω_out − ω_s)²)·g_s²ω_out²/(ω_out² − ω_q²)²·δω².
pub fn two_photon_rate_resonant(m: usize, mode: &SpuriousMode, omega_q: f64, omega_out: f64, delta_omega: f64) -> Result<f64> {
    mode.validate()?;
    check_non_negative("delta_omega", delta_omega)?;
    if (omega_out - omega_q).abs() < 1e-6 * omega_q {
        return Err(Error::Pole(format!("omega_out = {omega_out:.6e} at the qubit frequency")));
    }
    let hk = 0.5 * mode.kappa_s;
    let x = omega_out - mode.omega_s;
    let w2 = omega_out * omega_out;
    let d = w2 - omega_q * omega_q;
    Ok(m as f64 * mode.kappa_s / (hk * hk + x * x) * mode.g_s * mode.g_s * w2 / (d * d) * delta_omega * delta_omega)
}

/// One drive photon in, two photons out, qubit m → m±1.
///
/// Γ = p·64π·E_J·δω·∫₀^top dω₁ (Re Z[top−ω₁]/((top−ω₁)R_Q))·(Re Z[ω₁]/(ω₁R_Q)),
/// top = ω_in − ω_{m+1,m} (up, p = m+1) or ω_in + ω_{m,m−1} (down, p = m).
/// Both photon frequencies avoid the qubit-peak band.
#[allow(clippy::too_many_arguments)]
pub fn two_out_rate(
    m: usize,
    direction: Direction,
    omega_in: f64,
    spec: &SpectrumResult,
    params: &TransmonParams,
    env: &EnvironmentModel,
    delta_omega: f64,
    quadrature: QuadratureOptions,
) -> Result<f64> {
    check_non_negative("delta_omega", delta_omega)?;
    let (top, prefactor) = match direction {
        Direction::Up => (omega_in - transition_frequency(spec, m, m + 1)?, (m + 1) as f64),
        Direction::Down => {
            if m == 0 {
                return Err(invalid("no level below the ground state"));
            }
            (omega_in + transition_frequency(spec, m - 1, m)?, m as f64)
        }
    };
    if delta_omega == 0.0 || prefactor == 0.0 || top <= 0.0 {
        return Ok(0.0);
    }
    let e_c = params.e_c;
    let omega_q = spec.qubit_frequency();
    let channel = env.effective_channel(e_c, omega_q)?;
    let band = env.qubit_band_half_width(e_c, omega_q)?;
    let probe = EnvironmentModel {
        channel: Some(channel),
        circuit: None,
        spurious: env.spurious.clone(),
        tls: Vec::new(),
        qubit_band: Some(0.0),
    };
    // Re Z[ω]/(ω R_Q) = weighted/(2π ω_q). Quadrature nodes never touch the
    // excised band, so the pole guard cannot fire there.
    let z_over_omega = |w: f64| -> f64 {
        total_weighted_impedance(&probe, e_c, omega_q, w).map_or(0.0, |z| z / (2.0 * PI * omega_q))
    };
    let integrand = |w1: f64| z_over_omega(top - w1) * z_over_omega(w1);
    let mut breaks = vec![channel.omega_res, top - channel.omega_res];
    for s in &env.spurious {
        breaks.push(s.omega_s);
        breaks.push(top - s.omega_s);
    }
    let excluded = [
        (omega_q - band, omega_q + band),
        (top - omega_q - band, top - omega_q + band),
    ];
    let est = integrate(integrand, 0.0, top, &breaks, &excluded, quadrature)?;
    Ok(prefactor * 64.0 * PI * params.e_j * delta_omega * est.value)
}

/// exp(−ħω/k_B T).
pub fn boltzmann_factor(omega: f64, temperature: f64) -> f64 {
    (-HBAR * omega / (BOLTZMANN * temperature)).exp()
}

/// Detailed balance: returns (γ_down, γ_down·exp(−ħω_q/k_B T)).
pub fn thermal_rates(omega_q: f64, temperature: f64, gamma_down: f64) -> Result<(f64, f64)> {
    if !(temperature > 0.0) {
        return Err(invalid("temperature must be positive"));
    }
    check_non_negative("gamma_down", gamma_down)?;
    Ok((gamma_down, gamma_down * boltzmann_factor(omega_q, temperature)))
}

/// Normal-mode participation μ_k = ω_k λ_k/(ω_k² − ω_q²).
pub fn mode_participation(omega_k: f64, lambda_k: f64, omega_q: f64) -> f64 {
    omega_k * lambda_k / (omega_k * omega_k - omega_q * omega_q)
}

/// √(m+1)√(m+2)·(ω_q/4)·√n_in·|μ_in||μ_out| (energy in rad/s).
pub fn matrix_element_normal_mode(m: usize, n_in: f64, mu_in: f64, mu_out: f64, omega_q: f64) -> f64 {
    let m = m as f64;
    ((m + 1.0) * (m + 2.0)).sqrt() * omega_q / 4.0 * n_in.sqrt() * mu_in.abs() * mu_out.abs()
}

/// Fermi's golden rule 2π·ν·|M|² with M in rad/s and ν per rad/s.
pub fn golden_rule_rate(matrix_element: f64, density_of_states: f64) -> f64 {
    2.0 * PI * density_of_states * matrix_element * matrix_element
}

/// Re Z[ω_out]/R_Q = ω_out·ν_out·|μ_out|²/8.
pub fn re_z_from_mode_density(omega_out: f64, mu_out: f64, nu_out: f64) -> f64 {
    omega_out * nu_out * mu_out * mu_out / 8.0
}

/// δω = (ω_q/2)|μ_in|²n_in.
pub fn stark_shift_from_drive(omega_q: f64, mu_in: f64, n_in: f64) -> f64 {
    0.5 * omega_q * mu_in * mu_in * n_in
}

/// Second-order T-matrix element split by intermediate qubit state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TMatrixElement {
    /// Via |m+1⟩.
    pub via_up_one: f64,
    /// Via |m+3⟩.
    pub via_up_three: f64,
    /// Via |m−1⟩ (zero for m = 0).
    pub via_down_one: f64,
}

impl TMatrixElement {
    pub fn total(&self) -> f64 {
        self.via_up_one + self.via_up_three + self.via_down_one
    }
}

/// Raman matrix element ⟨m+2, out|T|m, in⟩ from the exact spectrum.
pub fn matrix_element_t_matrix(
    m: usize,
    spec: &SpectrumResult,
    lambda_in: f64,
    lambda_out: f64,
    n_in: f64,
    omega_in: f64,
) -> Result<TMatrixElement> {
    spec.check_level(m + 3)?;
    let e = &spec.energies;
    let omega_q = spec.qubit_frequency();
    let scale = n_in.sqrt() * lambda_in * lambda_out;
    let term = |p: usize| -> Result<f64> {
        let d1 = omega_in + e[p] - e[m + 2];
        let d2 = omega_in + e[m] - e[p];
        for d in [d1, d2] {
            if d.abs() < 1e-3 * omega_q {
                return Err(Error::Pole(format!("energy denominator vanishes for intermediate state |{p}⟩")));
            }
        }
        let n = spec.charge_element(m + 2, p)? * spec.charge_element(p, m)?;
        Ok(n * scale * (2.0 * e[p] - e[m] - e[m + 2]) / (d1 * d2))
    };
    Ok(TMatrixElement {
        via_up_one: term(m + 1)?,
        via_up_three: term(m + 3)?,
        via_down_one: if m == 0 { 0.0 } else { term(m - 1)? },
    })
}

/// A narrow mixing process: p drive photons drive |i⟩ → |f⟩ and excite a mode at ω_s.
///
/// Γ = A·δω^p·L(p·ω_in − ω_{f,i}[δω] − ω_s), L a unit-height Lorentzian of FWHM `width`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MixingFeature {
    pub omega_s: f64,
    pub initial: usize,
    #[serde(rename = "final")]
    pub final_level: usize,
    pub photons: u32,
    /// A in 1/s per (rad/s)^p.
    pub amplitude: f64,
    pub width: f64,
}

impl MixingFeature {
    /// Detuning p·ω_in − ω_{f,i}[δω] − ω_s.
    pub fn detuning(&self, spec: &SpectrumResult, omega_in: f64, delta_omega: f64) -> Result<f64> {
        let w = stark_shifted_transition(spec, self.initial, self.final_level, delta_omega)?;
        Ok(self.photons as f64 * omega_in - w - self.omega_s)
    }

    pub fn rate(&self, spec: &SpectrumResult, omega_in: f64, delta_omega: f64) -> Result<f64> {
        let x = self.detuning(spec, omega_in, delta_omega)?;
        let hw = 0.5 * self.width;
        Ok(self.amplitude * delta_omega.powi(self.photons as i32) * hw * hw / (hw * hw + x * x))
    }
}

/// Which optional mechanisms [`assemble_rate_set`] evaluates.
#[derive(Debug, Clone, PartialEq)]
pub struct RateOptions {
    pub two_photon: bool,
    pub two_out: bool,
    pub mixing: Vec<MixingFeature>,
    pub quadrature: QuadratureOptions,
}

impl Default for RateOptions {
    fn default() -> Self {
        Self {
            two_photon: true,
            two_out: false,
            mixing: Vec::new(),
            quadrature: QuadratureOptions::default(),
        }
    }
}

fn push_positive(set: &mut RateSet, i: usize, f: usize, rate: f64, mech: Mechanism) -> Result<()> {
    if rate > 0.0 {
        set.push(i, f, rate, mech)
    } else {
        Ok(())
    }
}

/// Rates out of |0⟩ and |1⟩ for one device, environment and drive.
///
/// `gamma_down_0` is the undriven Γ_{1→0}; thermal Γ_{0→1} follows from
/// detailed balance and thermal Γ_{1→2} from the same bath scaled by
/// |⟨2|N|1⟩|²/|⟨1|N|0⟩|².
#[allow(clippy::too_many_arguments)]
pub fn assemble_rate_set(
    spec: &SpectrumResult,
    params: &TransmonParams,
    env: &EnvironmentModel,
    drive: &DriveSpec,
    temperature: f64,
    gamma_down_0: f64,
    opts: &RateOptions,
) -> Result<RateSet> {
    spec.check_level(3)?;
    drive.validate(None)?;
    let e_c = params.e_c;
    let omega_q = spec.qubit_frequency();
    let w21 = transition_frequency(spec, 1, 2)?;
    let dw = drive.delta_omega;
    let mut set = RateSet::new();

    let (down, up) = thermal_rates(omega_q, temperature, gamma_down_0)?;
    let ladder = (spec.charge_element(2, 1)? / spec.charge_element(1, 0)?).powi(2);
    push_positive(&mut set, 1, 0, down, Mechanism::Thermal)?;
    push_positive(&mut set, 0, 1, up, Mechanism::Thermal)?;
    push_positive(&mut set, 1, 2, gamma_down_0 * ladder * boltzmann_factor(w21, temperature), Mechanism::Thermal)?;

    let w10_shifted = stark_shifted_transition(spec, 0, 1, dw)?;
    let w21_shifted = stark_shifted_transition(spec, 1, 2, dw)?;
    for tls in &env.tls {
        push_positive(&mut set, 1, 0, tls.rate(w10_shifted), Mechanism::Tls)?;
        push_positive(&mut set, 0, 1, tls.rate(w10_shifted), Mechanism::Tls)?;
        push_positive(&mut set, 1, 2, tls.rate(w21_shifted), Mechanism::Tls)?;
    }

    if dw > 0.0 {
        for m in 0..=1 {
            if let Ok(w_out) = raman_output_frequency(spec, m, drive.omega_in) {
                let z = total_weighted_impedance(env, e_c, omega_q, w_out)?;
                push_positive(&mut set, m, m + 2, raman_rate(m, omega_q, z, dw)?, Mechanism::Raman)?;
            }
        }
        if opts.two_photon {
            for (m, dir, f) in [(1, Direction::Down, 0), (0, Direction::Up, 1), (1, Direction::Up, 2)] {
                let w_out = two_photon_output_frequency(spec, m, dir, drive.omega_in)?;
                if w_out <= 0.0 {
                    continue;
                }
                let z = total_weighted_impedance(env, e_c, omega_q, w_out)?;
                let r = two_photon_rate(m, dir, omega_q, w_out, z, dw, e_c)?;
                push_positive(&mut set, m, f, r, Mechanism::TwoPhoton)?;
            }
        }
        if opts.two_out {
            for (m, dir, f) in [(1, Direction::Down, 0), (0, Direction::Up, 1), (1, Direction::Up, 2)] {
                let r = two_out_rate(m, dir, drive.omega_in, spec, params, env, dw, opts.quadrature)?;
                push_positive(&mut set, m, f, r, Mechanism::TwoOut)?;
            }
        }
        for feature in &opts.mixing {
            if feature.initial <= 1 && feature.final_level < spec.n_levels {
                let r = feature.rate(spec, drive.omega_in, dw)?;
                push_positive(&mut set, feature.initial, feature.final_level, r, Mechanism::Resonant)?;
            }
        }
    }
    Ok(set)
}
