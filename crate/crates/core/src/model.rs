//! Shared domain types: discretized mode sets, vacuum profiles, mode
//! amplitude maps and the Z-weighted scalar product.
//!
//! Every quantity downstream works with a finite list of modes. Each mode
//! carries a frequency `omega` and a weight `z`; the weight already contains
//! both the vacuum density `Z(k)` and the quadrature weight of the momentum
//! measure, so `Σ z = 1` plays the role of `∫ dΓ(k) Z(k) = 1`.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Tolerance on `Σ z = 1` when a mode set is loaded from an external source.
pub const NORMALIZATION_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("mode set must contain at least one mode")]
    Empty,
    #[error("mode frequency {0} at index {1} is not positive")]
    NonPositiveFrequency(f64, usize),
    #[error("mode frequencies must be strictly increasing (index {0})")]
    NotIncreasing(usize),
    #[error("weight {0} at index {1} is negative or not finite")]
    BadWeight(f64, usize),
    #[error("weights sum to {0}, cannot normalize")]
    ZeroMass(f64),
    #[error("weights sum to {0}, expected 1 within {NORMALIZATION_TOLERANCE}")]
    NotNormalized(f64),
    #[error("invalid grid: need 0 < omega_min < omega_max, got [{0}, {1}]")]
    BadBounds(f64, f64),
    #[error("invalid profile parameter: {0}")]
    BadProfile(String),
    #[error("amplitude map covers {got} modes, mode set has {expected}")]
    DomainMismatch { expected: usize, got: usize },
    #[error("amplitude at mode {0} is not finite")]
    NonFinite(usize),
    #[error("failed to parse mode set: {0}")]
    Parse(String),
}

/// Photon helicity. Exactly two values.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Helicity {
    Plus,
    Minus,
}

impl Helicity {
    pub const ALL: [Helicity; 2] = [Helicity::Plus, Helicity::Minus];

    pub fn index(self) -> usize {
        match self {
            Helicity::Plus => 0,
            Helicity::Minus => 1,
        }
    }
}

/// Vacuum profile families. The shape functions are unnormalized; every
/// consumer normalizes against its own measure.
///
/// None of these is singled out by the theory: they are three convenient
/// choices, one flat (IR-singular in the sense that it does not vanish at the
/// origin), one vanishing at the origin, and one localized.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum VacuumProfile {
    /// `Z(k) ∝ 1` for `k ≤ cutoff`, zero beyond.
    FlatCutoff { cutoff: f64 },
    /// `Z(k) ∝ (k/scale)^power · exp(-k/scale)`.
    PowerExp { power: f64, scale: f64 },
    /// `Z(k) ∝ exp(-(k - center)² / (2 width²))`.
    Gaussian { center: f64, width: f64 },
}

impl VacuumProfile {
    pub fn validate(&self) -> Result<(), ModelError> {
        let ok = match *self {
            VacuumProfile::FlatCutoff { cutoff } => cutoff > 0.0 && cutoff.is_finite(),
            VacuumProfile::PowerExp { power, scale } => {
                power >= 0.0 && power.is_finite() && scale > 0.0 && scale.is_finite()
            }
            VacuumProfile::Gaussian { center, width } => {
                center.is_finite() && width > 0.0 && width.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(ModelError::BadProfile(format!("{self:?}")))
        }
    }

    /// Unnormalized shape `Z(k)`.
    pub fn shape(&self, k: f64) -> f64 {
        if k < 0.0 {
            return 0.0;
        }
        match *self {
            VacuumProfile::FlatCutoff { cutoff } => {
                if k <= cutoff {
                    1.0
                } else {
                    0.0
                }
            }
            VacuumProfile::PowerExp { power, scale } => {
                let x = k / scale;
                if power == 0.0 {
                    (-x).exp()
                } else {
                    x.powf(power) * (-x).exp()
                }
            }
            VacuumProfile::Gaussian { center, width } => {
                let d = (k - center) / width;
                (-0.5 * d * d).exp()
            }
        }
    }

    /// `∫₀^∞ k · shape(k) dk` in closed form.
    pub fn first_moment(&self) -> f64 {
        match *self {
            VacuumProfile::FlatCutoff { cutoff } => 0.5 * cutoff * cutoff,
            VacuumProfile::PowerExp { power, scale } => scale * scale * libm::tgamma(power + 2.0),
            VacuumProfile::Gaussian { center, width } => {
                let a = center / (width * std::f64::consts::SQRT_2);
                width * width * (-0.5 * (center / width).powi(2)).exp()
                    + center * width * (PI / 2.0).sqrt() * (1.0 + libm::erf(a))
            }
        }
    }

    /// Radial density `Z(k)` normalized so that `∫ dΓ(k) Z(k) = 1` with the
    /// isotropic Lorentz-invariant measure `dΓ = d³k / ((2π)³ 2|k|)`, which
    /// reduces to `k dk / (4π²)` after the angular integration.
    pub fn radial_density(&self, k: f64) -> f64 {
        4.0 * PI * PI * self.shape(k) / self.first_moment()
    }

    /// Frequency below which all but `tail` of the normalized mass lives.
    pub fn support_bound(&self, tail: f64) -> f64 {
        match *self {
            VacuumProfile::FlatCutoff { cutoff } => cutoff,
            VacuumProfile::PowerExp { power, scale } => {
                // k·Z(k) is a Gamma(power + 2) density in k/scale; its upper
                // tail is bounded by x^(a-1) e^(-x) / (Γ(a) (1 - (a-1)/x)).
                let a = power + 2.0;
                let mut x = a + 1.0;
                loop {
                    let log_tail =
                        (a - 1.0) * x.ln() - x - libm::lgamma(a) - (1.0 - (a - 1.0) / x).ln();
                    if log_tail < tail.ln() {
                        break x * scale;
                    }
                    x += 0.5;
                }
            }
            VacuumProfile::Gaussian { center, width } => {
                let sigmas = (-2.0 * tail.ln()).sqrt() + 2.0;
                center.max(0.0) + sigmas * width
            }
        }
    }

    /// True when `Z(k) → 0` as `k → 0`.
    pub fn vanishes_at_origin(&self) -> bool {
        match *self {
            VacuumProfile::FlatCutoff { .. } => false,
            VacuumProfile::PowerExp { power, .. } => power > 0.0,
            VacuumProfile::Gaussian { .. } => false,
        }
    }
}

/// How a frequency cell is weighted before normalization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Measure {
    /// Isotropic 3D momentum measure `dΓ ∝ ω dω`.
    #[default]
    Radial,
    /// One-dimensional cavity spectrum, `dω` only.
    Cavity,
}

impl Measure {
    pub fn factor(self, omega: f64) -> f64 {
        match self {
            Measure::Radial => omega,
            Measure::Cavity => 1.0,
        }
    }
}

/// Provenance of a mode set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ModeSetMeta {
    #[serde(default)]
    pub scheme: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub measure: Option<Measure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<VacuumProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub omega_max: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Mode {
    pub omega: f64,
    pub z: f64,
}

/// Discrete stand-in for the photon momentum continuum.
///
/// Invariants: frequencies positive and strictly increasing, weights
/// nonnegative and summing to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSet {
    modes: Vec<Mode>,
    meta: ModeSetMeta,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawModeSet {
    modes: Vec<Mode>,
    #[serde(default)]
    meta: ModeSetMeta,
}

impl<'de> Deserialize<'de> for ModeSet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = RawModeSet::deserialize(deserializer)?;
        ModeSet::validated(raw.modes, raw.meta).map_err(serde::de::Error::custom)
    }
}

impl ModeSet {
    /// Builds a mode set from frequencies and unnormalized weights. The
    /// weights are rescaled to sum to one.
    pub fn new(omegas: &[f64], weights: &[f64]) -> Result<Self, ModelError> {
        Self::with_meta(omegas, weights, ModeSetMeta { scheme: "explicit".into(), ..Default::default() })
    }

    pub fn with_meta(omegas: &[f64], weights: &[f64], meta: ModeSetMeta) -> Result<Self, ModelError> {
        if omegas.len() != weights.len() {
            return Err(ModelError::DomainMismatch { expected: omegas.len(), got: weights.len() });
        }
        check_frequencies(omegas)?;
        for (i, &w) in weights.iter().enumerate() {
            if !(w >= 0.0) || !w.is_finite() {
                return Err(ModelError::BadWeight(w, i));
            }
        }
        let total: f64 = weights.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(ModelError::ZeroMass(total));
        }
        let modes = omegas
            .iter()
            .zip(weights)
            .map(|(&omega, &w)| Mode { omega, z: w / total })
            .collect();
        Ok(Self { modes, meta })
    }

    /// Accepts already-normalized weights, rejecting anything off by more
    /// than [`NORMALIZATION_TOLERANCE`].
    pub fn validated(modes: Vec<Mode>, meta: ModeSetMeta) -> Result<Self, ModelError> {
        let omegas: Vec<f64> = modes.iter().map(|m| m.omega).collect();
        check_frequencies(&omegas)?;
        for (i, m) in modes.iter().enumerate() {
            if !(m.z >= 0.0) || !m.z.is_finite() {
                return Err(ModelError::BadWeight(m.z, i));
            }
        }
        let total: f64 = modes.iter().map(|m| m.z).sum();
        if (total - 1.0).abs() > NORMALIZATION_TOLERANCE {
            return Err(ModelError::NotNormalized(total));
        }
        Ok(Self { modes, meta })
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(|e| ModelError::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("mode set serializes")
    }

    pub fn len(&self) -> usize {
        self.modes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.modes.is_empty()
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    pub fn meta(&self) -> &ModeSetMeta {
        &self.meta
    }

    pub fn omega(&self, k: usize) -> f64 {
        self.modes[k].omega
    }

    pub fn z(&self, k: usize) -> f64 {
        self.modes[k].z
    }

    pub fn omegas(&self) -> impl Iterator<Item = f64> + '_ {
        self.modes.iter().map(|m| m.omega)
    }

    pub fn weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.modes.iter().map(|m| m.z)
    }
}

fn check_frequencies(omegas: &[f64]) -> Result<(), ModelError> {
    if omegas.is_empty() {
        return Err(ModelError::Empty);
    }
    for (i, &w) in omegas.iter().enumerate() {
        if !(w > 0.0) || !w.is_finite() {
            return Err(ModelError::NonPositiveFrequency(w, i));
        }
        if i > 0 && !(w > omegas[i - 1]) {
            return Err(ModelError::NotIncreasing(i));
        }
    }
    Ok(())
}

/// Discretizes a vacuum profile on a uniform midpoint grid with the radial
/// measure.
pub fn build_mode_set(
    profile: &VacuumProfile,
    omega_min: f64,
    omega_max: f64,
    count: usize,
) -> Result<ModeSet, ModelError> {
    build_mode_set_with(profile, Measure::Radial, omega_min, omega_max, count)
}

/// Midpoint rule on `count` equal cells of `[omega_min, omega_max]`:
/// `z_i ∝ Z(ω_i) · measure(ω_i)`, then normalized. The common cell width
/// cancels in the normalization.
pub fn build_mode_set_with(
    profile: &VacuumProfile,
    measure: Measure,
    omega_min: f64,
    omega_max: f64,
    count: usize,
) -> Result<ModeSet, ModelError> {
    if count == 0 {
        return Err(ModelError::Empty);
    }
    if !(omega_min > 0.0 && omega_max > omega_min && omega_max.is_finite()) {
        return Err(ModelError::BadBounds(omega_min, omega_max));
    }
    profile.validate()?;
    let h = (omega_max - omega_min) / count as f64;
    let omegas: Vec<f64> = (0..count).map(|i| omega_min + (i as f64 + 0.5) * h).collect();
    let weights: Vec<f64> = omegas.iter().map(|&w| profile.shape(w) * measure.factor(w)).collect();
    let meta = ModeSetMeta {
        scheme: "midpoint-uniform".into(),
        measure: Some(measure),
        profile: Some(*profile),
        omega_min: Some(omega_min),
        omega_max: Some(omega_max),
    };
    ModeSet::with_meta(&omegas, &weights, meta)
}

/// A complex amplitude for every (mode, helicity) pair, stored as
/// `[plus, minus]` per mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeAmplitudes(pub Vec<[Complex64; 2]>);

impl ModeAmplitudes {
    pub fn zeros(modes: usize) -> Self {
        Self(vec![[Complex64::new(0.0, 0.0); 2]; modes])
    }

    /// Same value on every mode and helicity.
    pub fn constant(modes: usize, value: Complex64) -> Self {
        Self(vec![[value; 2]; modes])
    }

    /// Indicator of a single (mode, helicity).
    pub fn indicator(modes: usize, k: usize, s: Helicity) -> Self {
        let mut a = Self::zeros(modes);
        a.0[k][s.index()] = Complex64::new(1.0, 0.0);
        a
    }

    pub fn from_fn(modes: usize, mut f: impl FnMut(usize, Helicity) -> Complex64) -> Self {
        Self(
            (0..modes)
                .map(|k| [f(k, Helicity::Plus), f(k, Helicity::Minus)])
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn get(&self, k: usize, s: Helicity) -> Complex64 {
        self.0[k][s.index()]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|[p, m]| [p * c, m * c]).collect())
    }

    pub fn check_domain(&self, modes: &ModeSet) -> Result<(), ModelError> {
        if self.0.len() != modes.len() {
            return Err(ModelError::DomainMismatch { expected: modes.len(), got: self.0.len() });
        }
        for (k, pair) in self.0.iter().enumerate() {
            if pair.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
                return Err(ModelError::NonFinite(k));
            }
        }
        Ok(())
    }
}

/// Coherent-state amplitudes `α(k, s)` at the single-oscillator level. The
/// `1/√N` rescaling for N oscillators is applied by the operations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoherentSpec(pub ModeAmplitudes);

impl CoherentSpec {
    pub fn amplitudes(&self) -> &ModeAmplitudes {
        &self.0
    }

    /// `Σ_s Σ_k z_k |α(k,s)|²`, the mean excitation number.
    pub fn mean_excitations(&self, modes: &ModeSet) -> Result<f64, ModelError> {
        Ok(z_inner_product(&self.0, &self.0, modes)?.re)
    }
}

/// Classical current amplitudes `j(k, s)` together with their declared
/// small-frequency power law `|j|² ~ ω^ir_exponent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurrentSpec {
    pub j: ModeAmplitudes,
    pub ir_exponent: f64,
}

impl CurrentSpec {
    /// Power-law current `|j(k,s)|² = g_s² ω^exponent` sampled on a mode set.
    pub fn power_law(modes: &ModeSet, g_plus: f64, g_minus: f64, exponent: f64) -> Self {
        let j = ModeAmplitudes::from_fn(modes.len(), |k, s| {
            let g = match s {
                Helicity::Plus => g_plus,
                Helicity::Minus => g_minus,
            };
            Complex64::new(g * modes.omega(k).powf(0.5 * exponent), 0.0)
        });
        Self { j, ir_exponent: exponent }
    }

    /// Log-log slope of `Σ_s |j|²` over the lowest `probe` modes.
    pub fn measured_ir_exponent(&self, modes: &ModeSet, probe: usize) -> Option<f64> {
        let probe = probe.min(modes.len());
        if probe < 2 {
            return None;
        }
        let pts: Vec<(f64, f64)> = (0..probe)
            .filter_map(|k| {
                let p: f64 = self.j.0[k].iter().map(|c| c.norm_sqr()).sum();
                (p > 0.0).then(|| (modes.omega(k).ln(), p.ln()))
            })
            .collect();
        if pts.len() < 2 {
            return None;
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        Some(sxy / sxx)
    }
}

/// `⟨f|g⟩_Z = Σ_s Σ_k z_k conj(f(k,s)) g(k,s)`.
pub fn z_inner_product(
    f: &ModeAmplitudes,
    g: &ModeAmplitudes,
    modes: &ModeSet,
) -> Result<Complex64, ModelError> {
    f.check_domain(modes)?;
    g.check_domain(modes)?;
    Ok(f.0
        .iter()
        .zip(&g.0)
        .zip(modes.weights())
        .map(|((fk, gk), z)| (fk[0].conj() * gk[0] + fk[1].conj() * gk[1]) * z)
        .sum())
}
