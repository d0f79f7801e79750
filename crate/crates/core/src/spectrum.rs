//! Exact transmon spectrum in the charge basis at zero offset charge.
//!
//! The Hamiltonian 4E_C N² − E_J cos φ is tridiagonal in the charge basis
//! |k⟩, k = −n_cut..=n_cut. At n_g = 0 it commutes with k → −k, so it splits
//! into an even block over (|k⟩+|−k⟩)/√2 and an odd block over
//! (|k⟩−|−k⟩)/√2. N maps the even block onto the odd block, which makes the
//! same-parity charge elements exactly zero.

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::units::angular_to_hz;

/// Default charge-basis cutoff.
pub const DEFAULT_N_CUT: usize = 40;

/// Device energies E_C/ħ and E_J/ħ in rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmonParams {
    pub e_c: f64,
    pub e_j: f64,
}

impl TransmonParams {
    pub fn new(e_c: f64, e_j: f64) -> Result<Self> {
        let p = Self { e_c, e_j };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.e_c.is_finite() && self.e_c > 0.0) {
            return Err(invalid(format!("e_c must be positive, got {}", self.e_c)));
        }
        if !(self.e_j.is_finite() && self.e_j > 0.0) {
            return Err(invalid(format!("e_j must be positive, got {}", self.e_j)));
        }
        Ok(())
    }

    /// E_J/E_C.
    pub fn ratio(&self) -> f64 {
        self.e_j / self.e_c
    }

    /// True when E_J/E_C ≥ 20.
    pub fn is_transmon_regime(&self) -> bool {
        self.ratio() >= 20.0
    }

    /// Zero-point charge fluctuation (E_J/32E_C)^{1/4}.
    pub fn charge_zpf(&self) -> f64 {
        (self.e_j / (32.0 * self.e_c)).powf(0.25)
    }
}

/// Lowest eigenlevels of a transmon with their charge matrix elements.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    /// ε_m/ħ in rad/s, ε_0 = 0.
    pub energies: Vec<f64>,
    /// Row-major ⟨m|N|n⟩, `n_levels × n_levels`.
    pub charge_elements: Vec<f64>,
    pub n_levels: usize,
    pub n_cut: usize,
}

#[derive(Serialize, Deserialize)]
struct SpectrumJson {
    energies_hz: Vec<f64>,
    charge_elements: Vec<Vec<f64>>,
    n_cut: usize,
}

impl Serialize for SpectrumResult {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        SpectrumJson {
            energies_hz: self.energies.iter().map(|&w| angular_to_hz(w)).collect(),
            charge_elements: self
                .charge_elements
                .chunks(self.n_levels)
                .map(<[f64]>::to_vec)
                .collect(),
            n_cut: self.n_cut,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for SpectrumResult {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let j = SpectrumJson::deserialize(d)?;
        let energies: Vec<f64> = j.energies_hz.iter().map(|&f| crate::units::hz_to_angular(f)).collect();
        SpectrumResult::from_parts(energies, j.charge_elements.concat(), j.n_cut)
            .map_err(serde::de::Error::custom)
    }
}

impl SpectrumResult {
    /// Builds a spectrum from explicit energies and a row-major charge matrix.
    pub fn from_parts(energies: Vec<f64>, charge_elements: Vec<f64>, n_cut: usize) -> Result<Self> {
        let n = energies.len();
        if n < 2 {
            return Err(invalid("a spectrum needs at least two levels"));
        }
        if charge_elements.len() != n * n {
            return Err(invalid(format!(
                "charge matrix has {} entries, expected {}",
                charge_elements.len(),
                n * n
            )));
        }
        if energies.windows(2).any(|w| w[1] <= w[0]) {
            return Err(invalid("energies must be strictly increasing"));
        }
        Ok(Self {
            energies,
            charge_elements,
            n_levels: n,
            n_cut,
        })
    }

    /// Harmonic ladder ε_m = mω with ⟨m+1|N|m⟩ = √(m+1)·n_zpf.
    pub fn harmonic(omega: f64, n_zpf: f64, n_levels: usize) -> Result<Self> {
        let energies: Vec<f64> = (0..n_levels).map(|m| m as f64 * omega).collect();
        let mut charge = vec![0.0; n_levels * n_levels];
        for m in 0..n_levels.saturating_sub(1) {
            let v = ((m + 1) as f64).sqrt() * n_zpf;
            charge[(m + 1) * n_levels + m] = v;
            charge[m * n_levels + m + 1] = v;
        }
        Self::from_parts(energies, charge, 0)
    }

    pub fn energy(&self, m: usize) -> Result<f64> {
        self.check_level(m)?;
        Ok(self.energies[m])
    }

    /// ⟨m|N|n⟩.
    pub fn charge_element(&self, m: usize, n: usize) -> Result<f64> {
        self.check_level(m)?;
        self.check_level(n)?;
        Ok(self.charge_elements[m * self.n_levels + n])
    }

    /// ω_{1,0}.
    pub fn qubit_frequency(&self) -> f64 {
        self.energies[1]
    }

    pub(crate) fn check_level(&self, m: usize) -> Result<()> {
        if m < self.n_levels {
            Ok(())
        } else {
            Err(Error::LevelOutOfRange {
                level: m,
                n_levels: self.n_levels,
            })
        }
    }
}

struct SectorState {
    energy: f64,
    even: bool,
    // Amplitudes on |k⟩ ± |−k⟩; the even sector starts at k = 0, the odd at k = 1.
    vector: Vec<f64>,
}

fn sector_eigen(params: &TransmonParams, n_cut: usize, even: bool) -> Vec<SectorState> {
    let k0 = if even { 0 } else { 1 };
    let dim = n_cut + 1 - k0;
    let mut h = DMatrix::<f64>::zeros(dim, dim);
    for i in 0..dim {
        let k = (i + k0) as f64;
        h[(i, i)] = 4.0 * params.e_c * k * k;
        if i + 1 < dim {
            let t = if even && i == 0 {
                -params.e_j / std::f64::consts::SQRT_2
            } else {
                -params.e_j / 2.0
            };
            h[(i, i + 1)] = t;
            h[(i + 1, i)] = t;
        }
    }
    let eig = SymmetricEigen::new(h);
    (0..dim)
        .map(|c| SectorState {
            energy: eig.eigenvalues[c],
            even,
            vector: eig.eigenvectors.column(c).iter().copied().collect(),
        })
        .collect()
}

fn parity_charge_element(a: &SectorState, b: &SectorState) -> f64 {
    if a.even == b.even {
        return 0.0;
    }
    let (e, o) = if a.even { (a, b) } else { (b, a) };
    // N(|k⟩+|−k⟩)/√2 = k(|k⟩−|−k⟩)/√2
    o.vector
        .iter()
        .enumerate()
        .map(|(i, &ov)| {
            let k = (i + 1) as f64;
            k * ov * e.vector[i + 1]
        })
        .sum()
}

/// Diagonalizes without the truncation self-check.
pub fn eigensystem_unchecked(params: &TransmonParams, n_cut: usize, n_levels: usize) -> Result<SpectrumResult> {
    params.validate()?;
    if n_levels < 2 {
        return Err(invalid("n_levels must be at least 2"));
    }
    if n_cut < n_levels + 10 {
        return Err(invalid(format!("n_cut = {n_cut} must be at least n_levels + 10 = {}", n_levels + 10)));
    }
    let mut states = sector_eigen(params, n_cut, true);
    states.extend(sector_eigen(params, n_cut, false));
    states.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    states.truncate(n_levels);

    // Fix signs so that ⟨m|N|m−1⟩ > 0.
    for m in 1..n_levels {
        let (lo, hi) = states.split_at_mut(m);
        if parity_charge_element(&hi[0], &lo[m - 1]) < 0.0 {
            hi[0].vector.iter_mut().for_each(|x| *x = -*x);
        }
    }

    let ground = states[0].energy;
    let energies: Vec<f64> = states.iter().map(|s| s.energy - ground).collect();
    let mut charge = vec![0.0; n_levels * n_levels];
    for m in 0..n_levels {
        for n in 0..m {
            let v = parity_charge_element(&states[m], &states[n]);
            charge[m * n_levels + n] = v;
            charge[n * n_levels + m] = v;
        }
    }
    SpectrumResult::from_parts(energies, charge, n_cut)
}

/// Lowest `n_levels` eigenpairs of the charge-basis Hamiltonian.
///
/// Fails with [`Error::TruncationInsufficient`] if the highest retained level
/// moves by more than 1e−9 relative when `n_cut` is doubled.
pub fn eigensystem(params: &TransmonParams, n_cut: usize, n_levels: usize) -> Result<SpectrumResult> {
    let spec = eigensystem_unchecked(params, n_cut, n_levels)?;
    let wide = eigensystem_unchecked(params, 2 * n_cut, n_levels)?;
    let top = n_levels - 1;
    let shift = ((spec.energies[top] - wide.energies[top]) / wide.energies[top]).abs();
    if shift > 1e-9 {
        return Err(Error::TruncationInsufficient {
            n_cut,
            relative_shift: shift,
        });
    }
    Ok(spec)
}

/// ω_{n,m} = (ε_n − ε_m)/ħ for m < n.
pub fn transition_frequency(spec: &SpectrumResult, m: usize, n: usize) -> Result<f64> {
    spec.check_level(n)?;
    if m >= n {
        return Err(invalid(format!("transition requires m < n, got ({m}, {n})")));
    }
    Ok(spec.energies[n] - spec.energies[m])
}

/// √(8E_J E_C).
pub fn plasma_frequency(params: &TransmonParams) -> f64 {
    (8.0 * params.e_j * params.e_c).sqrt()
}

/// Algebraic inverse of [`plasma_frequency`]: ω_q²/(8E_C).
pub fn ej_from_qubit_frequency(e_c: f64, omega_q: f64) -> Result<f64> {
    if !(e_c > 0.0 && omega_q > 0.0) {
        return Err(invalid("e_c and omega_q must be positive"));
    }
    Ok(omega_q * omega_q / (8.0 * e_c))
}

/// E_J for which the exact ω_{1,0} equals `omega_q`.
pub fn ej_for_qubit_frequency(e_c: f64, omega_q: f64, n_cut: usize) -> Result<f64> {
    if !(e_c > 0.0 && omega_q > 0.0) {
        return Err(invalid("e_c and omega_q must be positive"));
    }
    if omega_q <= 4.0 * e_c {
        return Err(invalid("omega_q must exceed 4 E_C for a bound qubit transition"));
    }
    let w10 = |e_j: f64| -> Result<f64> {
        let s = eigensystem_unchecked(&TransmonParams { e_c, e_j }, n_cut, 2)?;
        Ok(s.energies[1])
    };
    let guess = (omega_q + e_c).powi(2) / (8.0 * e_c);
    let mut lo = guess * 0.5;
    let mut hi = guess * 2.0;
    while w10(lo)? > omega_q {
        lo *= 0.5;
        if lo < 1e-9 * e_c {
            return Err(invalid("no E_J reproduces the requested qubit frequency"));
        }
    }
    while w10(hi)? < omega_q {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if w10(mid)? < omega_q {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// E_J,max·√(cos²(πΦ/Φ₀) + d²·sin²(πΦ/Φ₀)).
pub fn squid_ej(e_j_max: f64, flux: f64, asymmetry: f64) -> f64 {
    let (s, c) = (std::f64::consts::PI * flux).sin_cos();
    e_j_max * (c * c + asymmetry * asymmetry * s * s).sqrt()
}

/// ω_{n,m}[δω] = ω_{n,m}[0] − (n−m)·δω (level m shifts by −m·δω).
pub fn stark_shifted_transition(spec: &SpectrumResult, m: usize, n: usize, delta_omega: f64) -> Result<f64> {
    if !(delta_omega >= 0.0) {
        return Err(invalid(format!("delta_omega must be non-negative, got {delta_omega}")));
    }
    let w = transition_frequency(spec, m, n)?;
    Ok(w - (n - m) as f64 * delta_omega)
}

/// Large-E_J/E_C estimate of |⟨m+3|N|m⟩|: (E_C/4ω_q)·√((m+1)(m+2)(m+3))·N_zpf.
pub fn asymptotic_charge_element_3(params: &TransmonParams, m: usize, omega_q: f64) -> f64 {
    let m = m as f64;
    params.e_c / (4.0 * omega_q) * ((m + 1.0) * (m + 2.0) * (m + 3.0)).sqrt() * params.charge_zpf()
}
