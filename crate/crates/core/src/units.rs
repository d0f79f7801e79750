//! Physical constants and frequency-unit helpers.
//!
//! Everything inside the crate is an angular frequency in rad/s; energies are
//! stored as E/ħ. Files and configs carry ordinary frequencies in Hz.

use std::f64::consts::PI;

/// Planck constant (J·s).
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Reduced Planck constant (J·s).
pub const HBAR: f64 = PLANCK / (2.0 * PI);
/// Elementary charge (C).
pub const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
/// Boltzmann constant (J/K).
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Resistance quantum h/e² (Ω).
pub const RESISTANCE_QUANTUM: f64 = PLANCK / (ELEMENTARY_CHARGE * ELEMENTARY_CHARGE);
/// Flux quantum h/2e (Wb).
pub const FLUX_QUANTUM: f64 = PLANCK / (2.0 * ELEMENTARY_CHARGE);

/// Ordinary frequency (Hz) to angular frequency (rad/s).
#[inline]
pub fn hz_to_angular(f: f64) -> f64 {
    2.0 * PI * f
}

/// Angular frequency (rad/s) to ordinary frequency (Hz).
#[inline]
pub fn angular_to_hz(w: f64) -> f64 {
    w / (2.0 * PI)
}

/// Angular frequency for a value given in MHz.
#[inline]
pub fn mhz(f: f64) -> f64 {
    hz_to_angular(f * 1e6)
}

/// Angular frequency expressed in MHz.
#[inline]
pub fn to_mhz(w: f64) -> f64 {
    angular_to_hz(w) * 1e-6
}

/// Charging energy E_C/ħ (rad/s) of a total capacitance (F).
pub fn charging_energy(capacitance: f64) -> f64 {
    ELEMENTARY_CHARGE * ELEMENTARY_CHARGE / (2.0 * HBAR * capacitance)
}

/// Serde adapter: stored in rad/s, written as Hz.
pub mod serde_hz {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(w: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(super::angular_to_hz(*w))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d).map(super::hz_to_angular)
    }
}

/// [`serde_hz`] for vectors.
pub mod serde_hz_vec {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(w: &[f64], s: S) -> Result<S::Ok, S::Error> {
        w.iter().map(|&x| super::angular_to_hz(x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        Ok(Vec::<f64>::deserialize(d)?.into_iter().map(super::hz_to_angular).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn resistance_quantum_value() {
        assert!((RESISTANCE_QUANTUM - 25_812.807_45).abs() < 1e-3);
    }

    #[test]
    fn flux_quantum_value() {
        assert!((FLUX_QUANTUM / 2.067_833_848e-15 - 1.0).abs() < 1e-9);
    }

    #[test]
    fn mhz_round_trip() {
        assert!((to_mhz(mhz(758.0)) - 758.0).abs() < 1e-12);
    }
}
