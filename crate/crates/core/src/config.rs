//! JSON run configuration. Frequencies are ordinary frequencies in Hz.

use serde::{Deserialize, Serialize};

use crate::emulator::{ReadoutGeometry, ReadoutSettings};
use crate::environment::{EnvironmentModel, LumpedCircuit, ReadoutChannel, SpuriousMode, TlsDefect};
use crate::error::{Error, Result};
use crate::quadrature::QuadratureOptions;
use crate::rates::{MixingFeature, RateOptions};
use crate::scanner::{DriveTuning, RateMapConfig, TunableTransmon};
use crate::spectrum::{eigensystem, ej_for_qubit_frequency, squid_ej, SpectrumResult, TransmonParams, DEFAULT_N_CUT};
use crate::units::hz_to_angular;

fn config_err(path: &str, message: impl Into<String>) -> Error {
    Error::Config {
        path: path.to_string(),
        message: message.into(),
    }
}

fn positive(path: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(config_err(path, format!("must be positive, got {x}")))
    }
}

fn default_n_levels() -> usize {
    6
}

fn default_n_cut() -> usize {
    DEFAULT_N_CUT
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FluxSweepConfig {
    /// E_J at zero flux; alternatively `omega_q_max_hz`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_j_max_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_q_max_hz: Option<f64>,
    #[serde(default)]
    pub asymmetry: f64,
    pub flux_min: f64,
    pub flux_max: f64,
    pub points: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceConfig {
    pub e_c_hz: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub e_j_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_q_hz: Option<f64>,
    #[serde(default = "default_n_levels")]
    pub n_levels: usize,
    #[serde(default = "default_n_cut")]
    pub n_cut: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flux_sweep: Option<FluxSweepConfig>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpuriousConfig {
    pub omega_s_hz: f64,
    pub kappa_s_hz: f64,
    pub g_s_hz: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsConfig {
    pub omega_tls_hz: f64,
    /// Peak rate (1/s).
    pub gamma_peak: f64,
    pub width_hz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_res_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kappa_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub chi_hz: Option<f64>,
    /// Element values in SI units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub circuit: Option<LumpedCircuit>,
    #[serde(default)]
    pub spurious: Vec<SpuriousConfig>,
    #[serde(default)]
    pub tls: Vec<TlsConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub qubit_band_hz: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    /// Fixed drive frequency; alternatively `resonator_offset_hz`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_in_hz: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resonator_offset_hz: Option<f64>,
    /// Absolute AC Stark shifts δω/2π.
    pub delta_omega_hz: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixingConfig {
    pub omega_s_hz: f64,
    pub initial: usize,
    #[serde(rename = "final")]
    pub final_level: usize,
    pub photons: u32,
    /// Peak rate (1/s) at δω/2π = 1 MHz.
    pub rate_at_1mhz: f64,
    pub width_hz: f64,
}

fn yes() -> bool {
    true
}

fn default_rel_tol() -> f64 {
    1e-3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub temperature_k: f64,
    /// Undriven Γ_{1→0} (1/s).
    pub gamma_down: f64,
    #[serde(default = "yes")]
    pub two_photon: bool,
    #[serde(default)]
    pub two_out: bool,
    #[serde(default = "default_rel_tol")]
    pub quadrature_rel_tol: f64,
    #[serde(default)]
    pub mixing: Vec<MixingConfig>,
}

fn default_max_order() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanConfig {
    pub omega_q_min_hz: f64,
    pub omega_q_max_hz: f64,
    pub points: usize,
    #[serde(default = "default_max_order")]
    pub max_order: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub match_tolerance_hz: Option<f64>,
}

fn default_initial_states() -> Vec<usize> {
    vec![0, 1]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmulationConfig {
    pub shots: usize,
    pub durations_s: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default = "default_initial_states")]
    pub initial_states: Vec<usize>,
    /// Drive strength whose rates are injected; defaults to the last grid value.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub delta_omega_hz: Option<f64>,
    #[serde(default)]
    pub geometry: ReadoutGeometry,
    #[serde(default)]
    pub readout: ReadoutSettings,
}

fn default_impedance_points() -> usize {
    2000
}

/// Frequency grid of the impedance dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ImpedanceConfig {
    pub f_min_hz: f64,
    pub f_max_hz: f64,
    #[serde(default = "default_impedance_points")]
    pub points: usize,
}

fn default_directory() -> String {
    "out".into()
}

fn default_formats() -> Vec<String> {
    vec!["csv".into(), "json".into()]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default = "default_directory")]
    pub directory: String,
    #[serde(default = "default_formats")]
    pub formats: Vec<String>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: default_directory(),
            formats: default_formats(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub device: DeviceConfig,
    pub environment: EnvironmentConfig,
    pub drive: DriveConfig,
    pub rates: RatesConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub emulation: Option<EmulationConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub impedance: Option<ImpedanceConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl RunConfig {
    /// Parses and validates; errors name the offending field.
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(&path, e.into_inner().to_string())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let d = &self.device;
        positive("device.e_c_hz", d.e_c_hz)?;
        match (d.e_j_hz, d.omega_q_hz) {
            (Some(e), None) => positive("device.e_j_hz", e)?,
            (None, Some(w)) => {
                positive("device.omega_q_hz", w)?;
                if w <= 4.0 * d.e_c_hz {
                    return Err(config_err("device.omega_q_hz", "must exceed 4 E_C"));
                }
            }
            _ => return Err(config_err("device", "give exactly one of e_j_hz or omega_q_hz")),
        }
        if d.n_levels < 2 {
            return Err(config_err("device.n_levels", "must be at least 2"));
        }
        if d.n_cut < d.n_levels + 10 {
            return Err(config_err("device.n_cut", "must be at least n_levels + 10"));
        }
        if let Some(f) = &d.flux_sweep {
            match (f.e_j_max_hz, f.omega_q_max_hz) {
                (Some(e), None) => positive("device.flux_sweep.e_j_max_hz", e)?,
                (None, Some(w)) => positive("device.flux_sweep.omega_q_max_hz", w)?,
                _ => {
                    return Err(config_err(
                        "device.flux_sweep",
                        "give exactly one of e_j_max_hz or omega_q_max_hz",
                    ))
                }
            }
            if f.points == 0 {
                return Err(config_err("device.flux_sweep.points", "must be positive"));
            }
        }

        let e = &self.environment;
        let has_channel = e.omega_res_hz.is_some() || e.kappa_hz.is_some();
        if has_channel {
            positive("environment.omega_res_hz", e.omega_res_hz.unwrap_or(f64::NAN))?;
            positive("environment.kappa_hz", e.kappa_hz.unwrap_or(f64::NAN))?;
            match (e.eta, e.chi_hz) {
                (Some(eta), None) if eta > 0.0 && eta < 1.0 => {}
                (None, Some(chi)) => positive("environment.chi_hz", chi.abs())?,
                (Some(_), None) => return Err(config_err("environment.eta", "must lie in (0, 1)")),
                _ => return Err(config_err("environment", "give exactly one of eta or chi_hz")),
            }
        } else if e.circuit.is_none() {
            return Err(config_err("environment", "needs omega_res_hz/kappa_hz or a circuit"));
        }
        if let Some(c) = &e.circuit {
            c.validate().map_err(|err| config_err("environment.circuit", err.to_string()))?;
        }
        for (i, s) in e.spurious.iter().enumerate() {
            positive(&format!("environment.spurious[{i}].omega_s_hz"), s.omega_s_hz)?;
            positive(&format!("environment.spurious[{i}].kappa_s_hz"), s.kappa_s_hz)?;
        }
        for (i, t) in e.tls.iter().enumerate() {
            positive(&format!("environment.tls[{i}].omega_tls_hz"), t.omega_tls_hz)?;
            positive(&format!("environment.tls[{i}].width_hz"), t.width_hz)?;
        }

        match (self.drive.omega_in_hz, self.drive.resonator_offset_hz) {
            (Some(w), None) => positive("drive.omega_in_hz", w)?,
            (None, Some(_)) => {}
            _ => return Err(config_err("drive", "give exactly one of omega_in_hz or resonator_offset_hz")),
        }
        let grid = &self.drive.delta_omega_hz;
        if grid.is_empty() {
            return Err(config_err("drive.delta_omega_hz", "grid must be non-empty"));
        }
        if grid.iter().any(|&x| !(x >= 0.0)) || grid.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_err("drive.delta_omega_hz", "must be non-negative and strictly increasing"));
        }

        positive("rates.temperature_k", self.rates.temperature_k)?;
        if !(self.rates.gamma_down >= 0.0) {
            return Err(config_err("rates.gamma_down", "must be non-negative"));
        }
        for (i, m) in self.rates.mixing.iter().enumerate() {
            positive(&format!("rates.mixing[{i}].width_hz"), m.width_hz)?;
            if m.photons == 0 || m.initial == m.final_level {
                return Err(config_err(&format!("rates.mixing[{i}]"), "needs photons >= 1 and distinct levels"));
            }
        }

        if let Some(s) = &self.scan {
            positive("scan.omega_q_min_hz", s.omega_q_min_hz)?;
            if !(s.omega_q_max_hz > s.omega_q_min_hz) {
                return Err(config_err("scan.omega_q_max_hz", "must exceed omega_q_min_hz"));
            }
            if s.points == 0 {
                return Err(config_err("scan.points", "grid must be non-empty"));
            }
            if !(1..=5).contains(&s.max_order) {
                return Err(config_err("scan.max_order", "must lie in 1..=5"));
            }
        }

        if let Some(z) = &self.impedance {
            positive("impedance.f_min_hz", z.f_min_hz)?;
            if !(z.f_max_hz > z.f_min_hz) {
                return Err(config_err("impedance.f_max_hz", "must exceed f_min_hz"));
            }
            if z.points < 2 {
                return Err(config_err("impedance.points", "need at least two points"));
            }
        }
        if self.output.formats.is_empty() || self.output.formats.iter().any(|f| f != "csv" && f != "json") {
            return Err(config_err("output.formats", "entries must be \"csv\" or \"json\""));
        }

        if let Some(em) = &self.emulation {
            if em.shots == 0 {
                return Err(config_err("emulation.shots", "must be positive"));
            }
            if em.seed.is_none() {
                return Err(config_err("emulation.seed", "required when emulation is requested"));
            }
            if em.durations_s.len() < 3 {
                return Err(config_err("emulation.durations_s", "need at least three durations"));
            }
            if em.durations_s.iter().any(|&t| !(t >= 0.0)) || em.durations_s.windows(2).any(|w| w[1] <= w[0]) {
                return Err(config_err("emulation.durations_s", "must be non-negative and strictly increasing"));
            }
            if em.initial_states.is_empty() || em.initial_states.iter().any(|&s| s >= em.geometry.n_levels) {
                return Err(config_err("emulation.initial_states", "must be resolved levels"));
            }
        }
        Ok(())
    }

    pub fn e_c(&self) -> f64 {
        hz_to_angular(self.device.e_c_hz)
    }

    /// Device energies at the working point; ω_q is inverted on the exact spectrum.
    pub fn device_params(&self) -> Result<TransmonParams> {
        let e_c = self.e_c();
        let e_j = match (self.device.e_j_hz, self.device.omega_q_hz) {
            (Some(e), _) => hz_to_angular(e),
            (None, Some(w)) => ej_for_qubit_frequency(e_c, hz_to_angular(w), self.device.n_cut)?,
            (None, None) => return Err(config_err("device", "missing e_j_hz / omega_q_hz")),
        };
        TransmonParams::new(e_c, e_j)
    }

    pub fn working_spectrum(&self) -> Result<SpectrumResult> {
        eigensystem(&self.device_params()?, self.device.n_cut, self.device.n_levels)
    }

    /// The environment. With χ given, η is fixed at the working point.
    pub fn environment(&self) -> Result<EnvironmentModel> {
        let e = &self.environment;
        let e_c = self.e_c();
        let circuit = e.circuit;
        let channel = match (e.omega_res_hz, e.kappa_hz) {
            (Some(w), Some(k)) => {
                let (w, k) = (hz_to_angular(w), hz_to_angular(k));
                Some(match (e.eta, e.chi_hz) {
                    (Some(eta), _) => {
                        let wq = self.working_spectrum()?.qubit_frequency();
                        ReadoutChannel::from_eta(w, k, eta, e_c, wq)?
                    }
                    (None, Some(chi)) => {
                        let wq = self.working_spectrum()?.qubit_frequency();
                        ReadoutChannel::from_chi(w, k, hz_to_angular(chi), e_c, wq)?
                    }
                    _ => return Err(config_err("environment", "give exactly one of eta or chi_hz")),
                })
            }
            _ => None,
        };
        let env = EnvironmentModel {
            channel,
            circuit,
            spurious: e
                .spurious
                .iter()
                .map(|s| SpuriousMode {
                    omega_s: hz_to_angular(s.omega_s_hz),
                    kappa_s: hz_to_angular(s.kappa_s_hz),
                    g_s: hz_to_angular(s.g_s_hz),
                })
                .collect(),
            tls: e
                .tls
                .iter()
                .map(|t| TlsDefect {
                    omega_tls: hz_to_angular(t.omega_tls_hz),
                    gamma_peak: t.gamma_peak,
                    width: hz_to_angular(t.width_hz),
                })
                .collect(),
            qubit_band: e.qubit_band_hz.map(hz_to_angular),
        };
        env.validate()?;
        Ok(env)
    }

    /// Resonator frequency of the effective channel at the working point.
    pub fn omega_res(&self) -> Result<f64> {
        let wq = self.working_spectrum()?.qubit_frequency();
        Ok(self.environment()?.effective_channel(self.e_c(), wq)?.omega_res)
    }

    pub fn drive_tuning(&self) -> DriveTuning {
        match (self.drive.omega_in_hz, self.drive.resonator_offset_hz) {
            (Some(w), _) => DriveTuning::Fixed(hz_to_angular(w)),
            (None, off) => DriveTuning::ResonatorOffset(hz_to_angular(off.unwrap_or(0.0))),
        }
    }

    pub fn omega_in(&self) -> Result<f64> {
        Ok(match self.drive_tuning() {
            DriveTuning::Fixed(w) => w,
            DriveTuning::ResonatorOffset(off) => self.omega_res()? + off,
        })
    }

    pub fn delta_omega_grid(&self) -> Vec<f64> {
        self.drive.delta_omega_hz.iter().map(|&f| hz_to_angular(f)).collect()
    }

    pub fn rate_options(&self) -> RateOptions {
        RateOptions {
            two_photon: self.rates.two_photon,
            two_out: self.rates.two_out,
            mixing: self
                .rates
                .mixing
                .iter()
                .map(|m| MixingFeature {
                    omega_s: hz_to_angular(m.omega_s_hz),
                    initial: m.initial,
                    final_level: m.final_level,
                    photons: m.photons,
                    amplitude: m.rate_at_1mhz / hz_to_angular(1e6).powi(m.photons as i32),
                    width: hz_to_angular(m.width_hz),
                })
                .collect(),
            quadrature: QuadratureOptions {
                rel_tol: self.rates.quadrature_rel_tol,
                ..Default::default()
            },
        }
    }

    /// The flux-tunable device, if a sweep is configured.
    pub fn tunable_device(&self) -> Result<Option<TunableTransmon>> {
        let Some(f) = &self.device.flux_sweep else {
            return Ok(None);
        };
        let e_c = self.e_c();
        let e_j_max = match (f.e_j_max_hz, f.omega_q_max_hz) {
            (Some(e), _) => hz_to_angular(e),
            (_, Some(w)) => ej_for_qubit_frequency(e_c, hz_to_angular(w), self.device.n_cut)?,
            _ => return Err(config_err("device.flux_sweep", "missing e_j_max_hz / omega_q_max_hz")),
        };
        let d = TunableTransmon {
            e_c,
            e_j_max,
            asymmetry: f.asymmetry,
            flux_min: f.flux_min,
            flux_max: f.flux_max,
        };
        d.validate().map_err(|e| config_err("device.flux_sweep", e.to_string()))?;
        Ok(Some(d))
    }

    /// Flux points of the configured sweep with their device energies.
    pub fn flux_points(&self) -> Result<Vec<(f64, TransmonParams)>> {
        let Some(d) = self.tunable_device()? else {
            return Ok(vec![(0.0, self.device_params()?)]);
        };
        let n = self.device.flux_sweep.as_ref().map_or(1, |f| f.points);
        (0..n)
            .map(|i| {
                let flux = if n == 1 {
                    d.flux_min
                } else {
                    d.flux_min + (d.flux_max - d.flux_min) * i as f64 / (n - 1) as f64
                };
                Ok((flux, TransmonParams::new(d.e_c, squid_ej(d.e_j_max, flux, d.asymmetry))?))
            })
            .collect()
    }

    pub fn omega_q_grid(&self) -> Result<Vec<f64>> {
        let s = self.scan.as_ref().ok_or_else(|| config_err("scan", "section required"))?;
        let (a, b) = (hz_to_angular(s.omega_q_min_hz), hz_to_angular(s.omega_q_max_hz));
        Ok(if s.points == 1 {
            vec![a]
        } else {
            (0..s.points).map(|i| a + (b - a) * i as f64 / (s.points - 1) as f64).collect()
        })
    }

    pub fn rate_map_config(&self) -> Result<RateMapConfig> {
        let s = self.scan.as_ref().ok_or_else(|| config_err("scan", "section required"))?;
        Ok(RateMapConfig {
            e_c: self.e_c(),
            env: self.environment()?,
            drive: self.drive_tuning(),
            temperature: self.rates.temperature_k,
            gamma_down_0: self.rates.gamma_down,
            options: self.rate_options(),
            n_levels: self.device.n_levels.max(4),
            max_order: s.max_order,
            match_tolerance: s.match_tolerance_hz.map(hz_to_angular),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::units::to_mhz;

    pub(crate) const PAPER: &str = r#"{
        "device": {"e_c_hz": 36e6, "omega_q_hz": 758e6, "n_levels": 6},
        "environment": {"omega_res_hz": 9227e6, "kappa_hz": 1.8e6, "chi_hz": 0.9e6},
        "drive": {"omega_in_hz": 9280e6, "delta_omega_hz": [0, 1e6, 2e6]},
        "rates": {"temperature_k": 0.016, "gamma_down": 2000},
        "emulation": {"shots": 100, "durations_s": [0, 1e-4, 2e-4], "seed": 7}
    }"#;

    #[test]
    fn parses_paper_config() {
        let c = RunConfig::from_json_str(PAPER).unwrap();
        let p = c.device_params().unwrap();
        assert!((to_mhz(p.e_j) - 2199.3).abs() < 0.5);
        let env = c.environment().unwrap();
        assert!((env.channel.unwrap().eta.powi(2) - 0.152).abs() < 0.002);
        assert_eq!(c.delta_omega_grid().len(), 3);
        assert_eq!(c.output.directory, "out");
    }

    #[test]
    fn round_trip_is_identity() {
        let c = RunConfig::from_json_str(PAPER).unwrap();
        let again = RunConfig::from_json_str(&c.to_json_string()).unwrap();
        assert_eq!(c, again);
    }

    #[test]
    fn errors_name_the_field() {
        let bad = PAPER.replace("\"e_c_hz\": 36e6", "\"e_c_hz\": \"x\"");
        match RunConfig::from_json_str(&bad) {
            Err(Error::Config { path, .. }) => assert_eq!(path, "device.e_c_hz"),
            other => panic!("{other:?}"),
        }
        let both = PAPER.replace("\"omega_q_hz\": 758e6", "\"omega_q_hz\": 758e6, \"e_j_hz\": 2e9");
        assert!(matches!(RunConfig::from_json_str(&both), Err(Error::Config { path, .. }) if path == "device"));
        let no_seed = PAPER.replace(", \"seed\": 7", "");
        assert!(matches!(RunConfig::from_json_str(&no_seed), Err(Error::Config { path, .. }) if path == "emulation.seed"));
        let empty = PAPER.replace("[0, 1e6, 2e6]", "[]");
        assert!(matches!(RunConfig::from_json_str(&empty), Err(Error::Config { path, .. }) if path == "drive.delta_omega_hz"));
        let zero = PAPER.replace("\"shots\": 100", "\"shots\": 0");
        assert!(matches!(RunConfig::from_json_str(&zero), Err(Error::Config { path, .. }) if path == "emulation.shots"));
        let typo = PAPER.replace("\"kappa_hz\"", "\"kapa_hz\"");
        assert!(matches!(RunConfig::from_json_str(&typo), Err(Error::Config { .. })));
    }

    proptest::proptest! {
        #[test]
        fn round_trip_random(
            e_c in 1e6f64..1e9,
            wq in 5e9f64..1e10,
            kappa in 1e5f64..1e7,
            eta in 0.01f64..0.9,
            grid in proptest::collection::vec(0.0f64..1e7, 1..6),
            seed in proptest::prelude::any::<u64>(),
            spurious in proptest::option::of((2e10f64..3e10, 1e6f64..1e8, 1e6f64..1e8)),
        ) {
            let mut grid = grid;
            grid.sort_by(f64::total_cmp);
            grid.dedup();
            let cfg = RunConfig {
                device: DeviceConfig {
                    e_c_hz: e_c,
                    e_j_hz: None,
                    omega_q_hz: Some(wq / 10.0 + 4.0 * e_c),
                    n_levels: 6,
                    n_cut: 40,
                    flux_sweep: None,
                },
                environment: EnvironmentConfig {
                    omega_res_hz: Some(wq),
                    kappa_hz: Some(kappa),
                    eta: Some(eta),
                    chi_hz: None,
                    circuit: None,
                    spurious: spurious
                        .map(|(w, k, g)| SpuriousConfig { omega_s_hz: w, kappa_s_hz: k, g_s_hz: g })
                        .into_iter()
                        .collect(),
                    tls: vec![],
                    qubit_band_hz: None,
                },
                drive: DriveConfig { omega_in_hz: Some(wq + 5e7), resonator_offset_hz: None, delta_omega_hz: grid },
                rates: RatesConfig {
                    temperature_k: 0.016,
                    gamma_down: 2000.0,
                    two_photon: true,
                    two_out: false,
                    quadrature_rel_tol: 1e-3,
                    mixing: vec![],
                },
                scan: None,
                impedance: None,
                emulation: Some(EmulationConfig {
                    shots: 10,
                    durations_s: vec![0.0, 1e-5, 2e-5],
                    seed: Some(seed),
                    initial_states: vec![0, 1],
                    delta_omega_hz: None,
                    geometry: ReadoutGeometry::default(),
                    readout: ReadoutSettings::default(),
                }),
                output: OutputConfig::default(),
            };
            cfg.validate().unwrap();
            let text = cfg.to_json_string();
            let back = RunConfig::from_json_str(&text).unwrap();
            proptest::prop_assert_eq!(&back, &cfg);
            proptest::prop_assert_eq!(back.to_json_string(), text);
        }
    }
}
