//! Dissipative impedance Re Z[ω] seen from the transmon island.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::units::{charging_energy, RESISTANCE_QUANTUM};

/// Lumped readout circuit with the junction replaced by a linear inductor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LumpedCircuit {
    /// Qubit capacitance (F).
    pub c_q: f64,
    /// Coupling capacitance (F).
    pub c_c: f64,
    /// Resonator capacitance (F).
    pub c_res: f64,
    /// Resonator inductance (H).
    pub l_res: f64,
    /// Tap inductance to the transmission line (H).
    pub l_tr: f64,
    /// Line impedance (Ω).
    #[serde(default = "default_line_resistance")]
    pub r: f64,
}

fn default_line_resistance() -> f64 {
    50.0
}

impl LumpedCircuit {
    pub fn validate(&self) -> Result<()> {
        let all = [self.c_q, self.c_c, self.c_res, self.l_res, self.l_tr, self.r];
        if all.iter().any(|&x| !(x.is_finite() && x > 0.0)) {
            return Err(invalid("all lumped circuit elements must be positive"));
        }
        if self.l_tr >= 0.1 * self.l_res {
            return Err(invalid("l_tr must be below 0.1 l_res"));
        }
        Ok(())
    }

    /// C_Σ² = C_res C_q + C_res C_C + C_q C_C.
    pub fn c_sigma_sq(&self) -> f64 {
        self.c_res * self.c_q + self.c_res * self.c_c + self.c_q * self.c_c
    }

    /// ω_res from ω_res² = (C_q + C_C)/(L_res C_Σ²).
    pub fn resonator_frequency(&self) -> f64 {
        ((self.c_q + self.c_c) / (self.l_res * self.c_sigma_sq())).sqrt()
    }

    /// Resonator linewidth ω_res² L_tr²/(L_res R).
    pub fn linewidth(&self) -> f64 {
        let w = self.resonator_frequency();
        w * w * self.l_tr * self.l_tr / (self.l_res * self.r)
    }

    /// E_C/ħ of the island, e²/(2ħ(C_q + C_C)).
    pub fn charging_energy(&self) -> f64 {
        charging_energy(self.c_q + self.c_c)
    }
}

/// Readout resonator as seen by the qubit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReadoutChannel {
    pub omega_res: f64,
    pub kappa: f64,
    pub eta: f64,
    pub chi: f64,
}

impl ReadoutChannel {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_res > 0.0 && self.kappa > 0.0) {
            return Err(invalid("omega_res and kappa must be positive"));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(invalid(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        Ok(())
    }

    /// Channel with η inferred from a measured dispersive shift at `omega_q`.
    pub fn from_chi(omega_res: f64, kappa: f64, chi: f64, e_c: f64, omega_q: f64) -> Result<Self> {
        let eta = (chi.abs() * omega_res / (2.0 * e_c * omega_q)).sqrt();
        let ch = Self { omega_res, kappa, eta, chi };
        ch.validate()?;
        Ok(ch)
    }

    pub fn from_eta(omega_res: f64, kappa: f64, eta: f64, e_c: f64, omega_q: f64) -> Result<Self> {
        let ch = Self {
            omega_res,
            kappa,
            eta,
            chi: dispersive_shift(eta, e_c, omega_q, omega_res),
        };
        ch.validate()?;
        Ok(ch)
    }

    pub fn from_circuit(circuit: &LumpedCircuit, e_c: f64, omega_q: f64) -> Result<Self> {
        circuit.validate()?;
        Self::from_eta(
            circuit.resonator_frequency(),
            circuit.linewidth(),
            coupling_efficiency(circuit),
            e_c,
            omega_q,
        )
    }

    /// Same channel with χ re-evaluated at another qubit frequency (η fixed).
    pub fn at_qubit_frequency(&self, e_c: f64, omega_q: f64) -> Self {
        Self {
            chi: dispersive_shift(self.eta, e_c, omega_q, self.omega_res),
            ..*self
        }
    }

    /// Qubit-resonator coupling (η/2)√(ω_q ω_res).
    pub fn coupling(&self, omega_q: f64) -> f64 {
        0.5 * self.eta * (omega_q * self.omega_res).sqrt()
    }

    /// Purcell decay rate κ g²/Δ² of the qubit through the resonator.
    pub fn purcell_width(&self, omega_q: f64) -> f64 {
        let g = self.coupling(omega_q);
        let delta = self.omega_res - omega_q;
        self.kappa * g * g / (delta * delta)
    }
}

/// Spurious electromagnetic mode coupled to the qubit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpuriousMode {
    pub omega_s: f64,
    pub kappa_s: f64,
    pub g_s: f64,
}

impl SpuriousMode {
    pub fn validate(&self) -> Result<()> {
        if !(self.omega_s > 0.0 && self.kappa_s > 0.0 && self.g_s >= 0.0) {
            return Err(invalid("spurious mode needs positive omega_s, kappa_s and non-negative g_s"));
        }
        if self.kappa_s >= self.omega_s {
            return Err(invalid("spurious mode linewidth must be below its frequency"));
        }
        Ok(())
    }
}

/// Material defect that resonantly enhances direct qubit transitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlsDefect {
    pub omega_tls: f64,
    /// Peak rate (1/s).
    pub gamma_peak: f64,
    /// Full width at half maximum (rad/s).
    pub width: f64,
}

impl TlsDefect {
    /// γ_peak·(w/2)²/((w/2)² + (ω − ω_TLS)²).
    pub fn rate(&self, omega: f64) -> f64 {
        let hw = 0.5 * self.width;
        let x = omega - self.omega_tls;
        self.gamma_peak * hw * hw / (hw * hw + x * x)
    }
}

/// Everything the qubit couples to.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct EnvironmentModel {
    pub channel: Option<ReadoutChannel>,
    pub circuit: Option<LumpedCircuit>,
    pub spurious: Vec<SpuriousMode>,
    pub tls: Vec<TlsDefect>,
    /// Half-width (rad/s) of the band around ω_q excluded from inelastic
    /// integrands; `None` means 100 Purcell widths.
    pub qubit_band: Option<f64>,
}

impl EnvironmentModel {
    pub fn from_channel(channel: ReadoutChannel) -> Self {
        Self {
            channel: Some(channel),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.channel, &self.circuit) {
            (None, None) => return Err(invalid("environment needs a readout channel or a lumped circuit")),
            (Some(ch), _) => ch.validate()?,
            (None, Some(c)) => c.validate()?,
        }
        if let Some(c) = &self.circuit {
            c.validate()?;
        }
        for m in &self.spurious {
            m.validate()?;
        }
        if self.tls.iter().any(|t| !(t.width > 0.0 && t.gamma_peak >= 0.0)) {
            return Err(invalid("TLS widths must be positive and peak rates non-negative"));
        }
        if let Some(b) = self.qubit_band {
            if !(b >= 0.0) {
                return Err(invalid("qubit band half-width must be non-negative"));
            }
        }
        Ok(())
    }

    /// The readout channel; derived from the circuit when none is given.
    pub fn effective_channel(&self, e_c: f64, omega_q: f64) -> Result<ReadoutChannel> {
        match (&self.channel, &self.circuit) {
            (Some(ch), _) => Ok(*ch),
            (None, Some(c)) => ReadoutChannel::from_circuit(c, e_c, omega_q),
            (None, None) => Err(invalid("environment needs a readout channel or a lumped circuit")),
        }
    }

    /// Mismatches above 5% between the channel and the circuit-derived values.
    pub fn consistency_warnings(&self, e_c: f64, omega_q: f64) -> Vec<String> {
        let (Some(ch), Some(c)) = (&self.channel, &self.circuit) else {
            return Vec::new();
        };
        let Ok(derived) = ReadoutChannel::from_circuit(c, e_c, omega_q) else {
            return vec!["lumped circuit is invalid; using the readout channel".into()];
        };
        [
            ("omega_res", ch.omega_res, derived.omega_res),
            ("kappa", ch.kappa, derived.kappa),
            ("eta", ch.eta, derived.eta),
        ]
        .into_iter()
        .filter(|&(_, given, circ)| (given / circ - 1.0).abs() > 0.05)
        .map(|(name, given, circ)| format!("{name}: channel {given:.6e} vs circuit {circ:.6e}; channel wins"))
        .collect()
    }

    /// Half-width of the excluded qubit-peak band.
    pub fn qubit_band_half_width(&self, e_c: f64, omega_q: f64) -> Result<f64> {
        match self.qubit_band {
            Some(b) => Ok(b),
            None => Ok(100.0 * self.effective_channel(e_c, omega_q)?.purcell_width(omega_q)),
        }
    }
}

/// C_C/√((C_res + C_C)(C_q + C_C)).
pub fn coupling_efficiency(circuit: &LumpedCircuit) -> f64 {
    circuit.c_c / ((circuit.c_res + circuit.c_c) * (circuit.c_q + circuit.c_c)).sqrt()
}

/// Re Z[ω] (Ω) of the lumped circuit near the resonator.
pub fn re_z_lumped(circuit: &LumpedCircuit, omega_q: f64, omega: f64) -> Result<f64> {
    circuit.validate()?;
    if !(omega > 0.0) {
        return Err(invalid("omega must be positive"));
    }
    let ch = ReadoutChannel::from_circuit(circuit, circuit.charging_energy(), omega_q)?;
    if (omega - omega_q).abs() < 100.0 * ch.purcell_width(omega_q) {
        return Err(Error::QubitPeak { omega, omega_q });
    }
    let c = circuit;
    let wr = c.resonator_frequency();
    let pre = (c.c_c / (c.c_q + c.c_c)).powi(2);
    let damping = omega * c.l_tr * c.l_tr / (c.l_res * c.r);
    let detune = 1.0 - omega * omega / (wr * wr);
    Ok(pre * (omega * c.l_res) * damping / (detune * detune + damping * damping))
}

/// (R_Q/π)·(η²/(1−η²))·E_C·ω²κ/((ω² − ω_res²)² + ω²κ²), in Ω.
pub fn re_z_reduced(channel: &ReadoutChannel, e_c: f64, omega: f64) -> f64 {
    let eta2 = channel.eta * channel.eta;
    let w2 = omega * omega;
    let d = w2 - channel.omega_res * channel.omega_res;
    RESISTANCE_QUANTUM / PI * eta2 / (1.0 - eta2) * e_c * w2 * channel.kappa
        / (d * d + w2 * channel.kappa * channel.kappa)
}

/// Spurious-mode contribution to (ω_q/ω)·2π Re Z[ω]/R_Q.
pub fn re_z_spurious(mode: &SpuriousMode, e_c: f64, omega_q: f64, omega: f64) -> Result<f64> {
    if (omega - omega_q).abs() < 1e-6 * omega_q {
        return Err(Error::Pole(format!(
            "spurious-mode impedance at omega = {omega:.6e} too close to omega_q = {omega_q:.6e}"
        )));
    }
    let hk = 0.5 * mode.kappa_s;
    let x = omega - mode.omega_s;
    let lorentz = hk / (hk * hk + x * x);
    let w2 = omega * omega;
    let d = w2 - omega_q * omega_q;
    Ok(4.0 * e_c * lorentz * mode.g_s * mode.g_s * w2 / (d * d))
}

/// χ = 2η²E_C ω_q/ω_res.
pub fn dispersive_shift(eta: f64, e_c: f64, omega_q: f64, omega_res: f64) -> f64 {
    2.0 * eta * eta * e_c * omega_q / omega_res
}

/// (ω_q/ω)·2π Re Z[ω]/R_Q summed over the readout channel and spurious modes.
pub fn total_weighted_impedance(env: &EnvironmentModel, e_c: f64, omega_q: f64, omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(invalid("omega must be positive"));
    }
    if (omega - omega_q).abs() < env.qubit_band_half_width(e_c, omega_q)? {
        return Err(Error::QubitPeak { omega, omega_q });
    }
    let channel = env.effective_channel(e_c, omega_q)?;
    let mut total = omega_q / omega * 2.0 * PI * re_z_reduced(&channel, e_c, omega) / RESISTANCE_QUANTUM;
    for mode in &env.spurious {
        total += re_z_spurious(mode, e_c, omega_q, omega)?;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::{mhz, to_mhz};
    use proptest::prelude::*;

    fn paper_channel() -> ReadoutChannel {
        ReadoutChannel::from_chi(mhz(9227.0), mhz(1.80), mhz(0.90), mhz(36.0), mhz(758.0)).unwrap()
    }

    // C_q = 80 fF, C_C = 10 fF, C_res = 300 fF, ω_res/2π ≈ 9.2 GHz, κ/2π ≈ 1.8 MHz.
    fn circuit() -> LumpedCircuit {
        let (c_q, c_c, c_res) = (80e-15, 10e-15, 300e-15);
        let c_sigma_sq = c_res * c_q + c_res * c_c + c_q * c_c;
        let wr = mhz(9200.0);
        let l_res = (c_q + c_c) / (c_sigma_sq * wr * wr);
        let l_tr = (mhz(1.8) * l_res * 50.0).sqrt() / wr;
        LumpedCircuit { c_q, c_c, c_res, l_res, l_tr, r: 50.0 }
    }

    #[test]
    fn coupling_efficiency_examples() {
        let mut c = circuit();
        c.c_c = 1e-22;
        assert!(coupling_efficiency(&c) < 1e-6);
        let f = 1e-13;
        let sym = LumpedCircuit { c_q: f, c_c: f, c_res: f, ..circuit() };
        assert!((coupling_efficiency(&sym) - 0.5).abs() < 1e-15);
        let d = LumpedCircuit { c_q: 99e-15, c_c: 1e-15, c_res: 399e-15, ..circuit() };
        assert!((coupling_efficiency(&d) - 0.005).abs() < 1e-15);
    }

    #[test]
    fn circuit_derived_values() {
        let c = circuit();
        assert!((to_mhz(c.resonator_frequency()) - 9200.0).abs() < 1e-6);
        assert!((to_mhz(c.linewidth()) - 1.8).abs() < 1e-9);
    }

    #[test]
    fn lumped_matches_reduced_near_resonance() {
        let c = circuit();
        let e_c = c.charging_energy();
        let wq = mhz(900.0);
        let ch = ReadoutChannel::from_circuit(&c, e_c, wq).unwrap();
        for i in -100..=100 {
            let w = ch.omega_res + 0.5 * i as f64 * ch.kappa;
            let a = re_z_lumped(&c, wq, w).unwrap();
            let b = re_z_reduced(&ch, e_c, w);
            assert!((a / b - 1.0).abs() < 0.01, "{i}: {a} vs {b}");
        }
    }

    #[test]
    fn lumped_limits_and_peak() {
        let c = circuit();
        let wq = mhz(900.0);
        assert!(re_z_lumped(&c, wq, 1e-3).unwrap() < 1e-20);
        let wr = c.resonator_frequency();
        let k = c.linewidth();
        let peak = re_z_lumped(&c, wq, wr).unwrap();
        for x in [-2.0, -0.5, -0.1, 0.1, 0.5, 2.0] {
            assert!(re_z_lumped(&c, wq, wr + x * k).unwrap() < peak);
        }
        assert!(matches!(re_z_lumped(&c, wq, wq * (1.0 + 1e-9)), Err(Error::QubitPeak { .. })));
    }

    #[test]
    fn reduced_examples() {
        let ch = paper_channel();
        let e_c = mhz(36.0);
        let eta2 = ch.eta * ch.eta;
        let on = RESISTANCE_QUANTUM / PI * eta2 / (1.0 - eta2) * e_c / ch.kappa;
        assert!((re_z_reduced(&ch, e_c, ch.omega_res) / on - 1.0).abs() < 1e-12);
        let weak = ReadoutChannel { eta: 1e-9, ..ch };
        assert!(re_z_reduced(&weak, e_c, ch.omega_res) < 1e-12);
        // ω ≪ ω_res: ω²κ/ω_res⁴ asymptote
        let w = 1e-3 * ch.omega_res;
        let asym = RESISTANCE_QUANTUM / PI * eta2 / (1.0 - eta2) * e_c * w * w * ch.kappa / ch.omega_res.powi(4);
        assert!((re_z_reduced(&ch, e_c, w) / asym - 1.0).abs() < 1e-5);
    }

    #[test]
    fn reduced_peak_location() {
        let ch = paper_channel();
        let e_c = mhz(36.0);
        let n = 20_001;
        let span = 5.0 * ch.kappa;
        let (best, _) = (0..n)
            .map(|i| ch.omega_res - span + 2.0 * span * i as f64 / (n - 1) as f64)
            .map(|w| (w, re_z_reduced(&ch, e_c, w)))
            .fold((0.0, 0.0), |acc, (w, z)| if z > acc.1 { (w, z) } else { acc });
        assert!((best - ch.omega_res).abs() < ch.kappa / 10.0);
    }

    #[test]
    fn near_resonance_tail_is_inverse_square() {
        let ch = paper_channel();
        let e_c = mhz(36.0);
        let probe = |w: f64| re_z_reduced(&ch, e_c, w) * (w - ch.omega_res).powi(2);
        let reference = probe(ch.omega_res - 50.0 * ch.kappa);
        for frac in [0.005, 0.01, 0.02, 0.03, 0.04] {
            for sign in [-1.0, 1.0] {
                let w = ch.omega_res * (1.0 + sign * frac);
                assert!((probe(w) / reference - 1.0).abs() < 0.05, "{frac} {sign}");
            }
        }
    }

    #[test]
    fn spurious_examples() {
        let e_c = mhz(36.0);
        let wq = mhz(670.0);
        let m = SpuriousMode { omega_s: mhz(26_720.0), kappa_s: mhz(5.0), g_s: mhz(50.0) };
        let on = re_z_spurious(&m, e_c, wq, m.omega_s).unwrap();
        let closed = 4.0 * e_c * (2.0 / m.kappa_s) * m.g_s.powi(2) * m.omega_s.powi(2)
            / (m.omega_s.powi(2) - wq * wq).powi(2);
        assert!((on / closed - 1.0).abs() < 1e-12);
        let zero = SpuriousMode { g_s: 0.0, ..m };
        assert_eq!(re_z_spurious(&zero, e_c, wq, m.omega_s).unwrap(), 0.0);
        // Prefactor ω²/(ω²−ω_q²)² changes slightly across κ_s, so compare the Lorentzian part.
        let half = re_z_spurious(&m, e_c, wq, m.omega_s + 0.5 * m.kappa_s).unwrap();
        let w = m.omega_s + 0.5 * m.kappa_s;
        let weight = |w: f64| w * w / (w * w - wq * wq).powi(2);
        let lorentz_ratio = (half / weight(w)) / (on / weight(m.omega_s));
        assert!((lorentz_ratio - 0.5).abs() < 1e-12);
        assert!(matches!(re_z_spurious(&m, e_c, wq, wq), Err(Error::Pole(_))));
    }

    #[test]
    fn dispersive_shift_examples() {
        let ch = paper_channel();
        assert!((ch.eta * ch.eta - 0.1522).abs() < 1e-4);
        assert!((ch.eta - 0.390).abs() < 1e-3);
        assert_eq!(dispersive_shift(0.0, 1.0, 2.0, 3.0), 0.0);
        let a = dispersive_shift(0.3, 1.0, 2.0, 10.0);
        assert!((dispersive_shift(0.3, 1.0, 4.0, 10.0) / a - 2.0).abs() < 1e-15);
    }

    #[test]
    fn coupling_matches_quoted_value() {
        // g/2π ≈ 515 MHz at the working point.
        let g = to_mhz(paper_channel().coupling(mhz(758.0)));
        assert!((g - 515.0).abs() < 5.0, "{g}");
    }

    #[test]
    fn total_weighted_additivity() {
        let e_c = mhz(36.0);
        let wq = mhz(758.0);
        let ch = paper_channel();
        let env = EnvironmentModel::from_channel(ch);
        let w = mhz(7804.0);
        let alone = total_weighted_impedance(&env, e_c, wq, w).unwrap();
        let direct = wq / w * 2.0 * PI * re_z_reduced(&ch, e_c, w) / RESISTANCE_QUANTUM;
        assert!((alone / direct - 1.0).abs() < 1e-14);
        let m = SpuriousMode { omega_s: mhz(7900.0), kappa_s: mhz(10.0), g_s: mhz(20.0) };
        let one = EnvironmentModel { spurious: vec![m], ..env.clone() };
        let two = EnvironmentModel { spurious: vec![m, m], ..env.clone() };
        let t1 = total_weighted_impedance(&one, e_c, wq, w).unwrap() - alone;
        let t2 = total_weighted_impedance(&two, e_c, wq, w).unwrap() - alone;
        assert!((t2 / t1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn weighted_impedance_falls_away_from_resonator() {
        let e_c = mhz(36.0);
        let wq = mhz(758.0);
        let env = EnvironmentModel::from_channel(paper_channel());
        let mut prev = f64::INFINITY;
        for f in [7804.0, 7500.0, 7000.0, 6000.0] {
            let z = total_weighted_impedance(&env, e_c, wq, mhz(f)).unwrap();
            assert!(z.is_finite() && z > 0.0 && z < 1e-3);
            assert!(z < prev);
            prev = z;
        }
        assert!(matches!(
            total_weighted_impedance(&env, e_c, wq, wq + mhz(0.01)),
            Err(Error::QubitPeak { .. })
        ));
    }

    #[test]
    fn channel_precedence_and_warning() {
        let c = circuit();
        let e_c = c.charging_energy();
        let wq = mhz(900.0);
        let derived = ReadoutChannel::from_circuit(&c, e_c, wq).unwrap();
        let env = EnvironmentModel { circuit: Some(c), ..Default::default() };
        assert_eq!(env.effective_channel(e_c, wq).unwrap(), derived);
        assert!(env.consistency_warnings(e_c, wq).is_empty());
        let other = ReadoutChannel { kappa: 2.0 * derived.kappa, ..derived };
        let both = EnvironmentModel { channel: Some(other), circuit: Some(c), ..Default::default() };
        assert_eq!(both.effective_channel(e_c, wq).unwrap(), other);
        assert_eq!(both.consistency_warnings(e_c, wq).len(), 1);
        assert!(EnvironmentModel::default().validate().is_err());
    }

    proptest! {
        #[test]
        fn passivity(w in 1e6f64..2e11, eta in 0.01f64..0.95, kappa in 1e5f64..1e9) {
            let ch = ReadoutChannel { omega_res: mhz(9000.0), kappa, eta, chi: 0.0 };
            prop_assert!(re_z_reduced(&ch, mhz(36.0), w) >= 0.0);
            let c = circuit();
            if let Ok(z) = re_z_lumped(&c, mhz(900.0), w) {
                prop_assert!(z >= 0.0);
            }
        }
    }
}
