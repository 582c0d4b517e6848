//! The vacuum-smeared Jordan–Pauli function and radiation observables for
//! isotropic vacuum profiles.
//!
//! Every integral here runs over the radial frequency with the single weight
//! density [`RadialProfile::gamma_density`], `γ(k) = k Z(k) / (4π²)`, the
//! angular reduction of `dΓ(k) Z(k) = d³k Z / ((2π)³ 2|k|)`. Its integral is
//! one, so the coincidence limit `2 ∫ dΓ Z` equals two for every profile.
//! With it
//!
//! ```text
//! D_Z(t, r) = (2/r) ∫ dk γ(k) sin(kr) sin(kt) / k = (1/(2π² r)) ∫ dk Z(k) sin(kr) sin(kt)
//! ⟨n⟩      = Σ_s ∫ dk γ(k) |j(k,s)|²
//! ⟨P⁰⟩     = Σ_s ∫ dk γ(k) k |j(k,s)|²
//! ```

use std::f64::consts::PI;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ModelError, VacuumProfile};
use crate::output::{fmt_f64, CsvError, CsvTable};
use crate::quadrature::{adaptive, breakpoints, gk15, QuadError, QuadResult, Tolerance};

/// Tail mass of `Z` beyond the integration limits.
pub const TAIL_MASS: f64 = 1e-10;

#[derive(Debug, Error)]
pub enum PropagatorError {
    #[error(transparent)]
    Quadrature(#[from] QuadError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error("radial separation must be nonnegative and finite, got {0}")]
    BadRadius(f64),
    #[error("infrared cutoff must be nonnegative, got {0}")]
    BadCutoff(f64),
    #[error("no peak above the noise floor: max |D_Z| = {0:e}")]
    FlatLandscape(f64),
    #[error(
        "photon number diverges logarithmically at zero cutoff: <n>(eps) ~ {} ln(1/eps) + {} (R^2 = {})",
        .0.slope, .0.intercept, .0.r_squared
    )]
    DeclaredDivergence(LogFit),
    #[error(transparent)]
    Csv(#[from] CsvError),
}

/// An isotropic vacuum profile with its integration range and tolerances.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RadialProfile {
    pub profile: VacuumProfile,
    pub k_min: f64,
    pub k_max: f64,
    pub tolerance: Tolerance,
}

impl RadialProfile {
    /// Limits chosen so the neglected tails of `γ` carry less than
    /// [`TAIL_MASS`].
    pub fn new(profile: VacuumProfile) -> Result<Self, PropagatorError> {
        profile.validate()?;
        let k_max = profile.support_bound(TAIL_MASS);
        let k_min = match profile {
            VacuumProfile::Gaussian { center, width } => {
                let sigmas = (-2.0 * TAIL_MASS.ln()).sqrt() + 2.0;
                (center - sigmas * width).max(0.0)
            }
            _ => 0.0,
        };
        Ok(Self { profile, k_min, k_max, tolerance: Tolerance::default() })
    }

    pub fn with_tolerance(mut self, tolerance: Tolerance) -> Self {
        self.tolerance = tolerance;
        self
    }

    /// Normalized `Z(k)`.
    pub fn z(&self, k: f64) -> f64 {
        self.profile.radial_density(k)
    }

    /// `γ(k) = k Z(k) / (4π²)`, integrating to one over `k ≥ 0`.
    pub fn gamma_density(&self, k: f64) -> f64 {
        k * self.profile.shape(k) / self.profile.first_moment()
    }

    /// Power `p` in `Z(k) ~ k^p` as `k → 0`.
    pub fn origin_power(&self) -> f64 {
        match self.profile {
            VacuumProfile::PowerExp { power, .. } => power,
            _ => 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpacetimePoint {
    pub t: f64,
    pub r: f64,
}

impl SpacetimePoint {
    pub fn new(t: f64, r: f64) -> Result<Self, PropagatorError> {
        if !(r >= 0.0 && r.is_finite()) || !t.is_finite() {
            return Err(PropagatorError::BadRadius(r));
        }
        Ok(Self { t, r })
    }
}

/// `D_Z(t, r)` with its quadrature diagnostics. Panels are at most `π` wide
/// in the fastest phase `k(r + |t|)`, so each Gauss–Kronrod panel sees less
/// than half an oscillation before adaptive refinement.
pub fn d_z_with_error(profile: &RadialProfile, p: SpacetimePoint) -> Result<QuadResult, PropagatorError> {
    let SpacetimePoint { t, r } = SpacetimePoint::new(p.t, p.r)?;
    if t == 0.0 {
        return Ok(QuadResult { value: 0.0, error: 0.0, evaluations: 0, panels: 0 });
    }
    let phase = r + t.abs();
    let breaks = breakpoints(profile.k_min, profile.k_max, PI / phase);
    let res = if r > 0.0 {
        let f = |k: f64| {
            if k == 0.0 {
                0.0
            } else {
                profile.gamma_density(k) * (k * r).sin() * (k * t).sin() / k
            }
        };
        adaptive(&f, &breaks, &profile.tolerance)?
    } else {
        // r → 0: sin(kr)/r → k
        adaptive(&|k: f64| profile.gamma_density(k) * (k * t).sin(), &breaks, &profile.tolerance)?
    };
    let scale = if r > 0.0 { 2.0 / r } else { 2.0 };
    Ok(QuadResult { value: res.value * scale, error: res.error * scale, ..res })
}

pub fn d_z(profile: &RadialProfile, p: SpacetimePoint) -> Result<f64, PropagatorError> {
    Ok(d_z_with_error(profile, p)?.value)
}

/// `D_Z` for the flat cutoff profile in closed form.
pub fn d_z_flat_closed_form(cutoff: f64, p: SpacetimePoint) -> f64 {
    let z0 = 8.0 * PI * PI / (cutoff * cutoff);
    let term = |u: f64| if u == 0.0 { cutoff } else { (cutoff * u).sin() / u };
    z0 / (4.0 * PI * PI * p.r) * (term(p.r - p.t) - term(p.r + p.t))
}

/// Location and full width at half maximum of `|D_Z(t, r)|` over
/// `t ∈ [0, 2r]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LightconePeak {
    pub peak_time: f64,
    pub width: f64,
    pub peak_value: f64,
    /// Set when a half-maximum crossing is missing or a competing maximum
    /// reaches 90% of the peak outside the main lobe.
    pub ambiguous: bool,
    pub samples: usize,
}

fn golden_max(f: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let mut c = b - g * (b - a);
    let mut d = a + g * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    for _ in 0..80 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
        if b - a < 1e-12 * (1.0 + a.abs()) {
            break;
        }
    }
    0.5 * (a + b)
}

fn bisect_level(f: &impl Fn(f64) -> f64, level: f64, mut inside: f64, mut outside: f64) -> f64 {
    for _ in 0..100 {
        let mid = 0.5 * (inside + outside);
        if f(mid) >= level {
            inside = mid;
        } else {
            outside = mid;
        }
        if (outside - inside).abs() < 1e-13 * (1.0 + inside.abs()) {
            break;
        }
    }
    0.5 * (inside + outside)
}

pub fn lightcone_deviation(profile: &RadialProfile, r: f64) -> Result<LightconePeak, PropagatorError> {
    if !(r > 0.0 && r.is_finite()) {
        return Err(PropagatorError::BadRadius(r));
    }
    let t_max = 2.0 * r;
    // about ten samples across the narrowest feature, width ~ 4/k_max
    let samples = ((t_max * profile.k_max * 2.5).ceil() as usize + 1).clamp(401, 40_001);
    let grid: Vec<f64> = (0..samples).map(|i| t_max * i as f64 / (samples - 1) as f64).collect();
    let values: Vec<f64> = grid
        .par_iter()
        .map(|&t| d_z(profile, SpacetimePoint { t, r }).map(f64::abs))
        .collect::<Result<_, _>>()?;
    let (imax, &vmax) = values.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).expect("grid is nonempty");
    let floor = 1e3 * profile.tolerance.abs * 2.0 / r;
    if vmax <= floor {
        return Err(PropagatorError::FlatLandscape(vmax));
    }
    let abs_d = |t: f64| d_z(profile, SpacetimePoint { t, r }).map(f64::abs).unwrap_or(0.0);
    let lo = grid[imax.saturating_sub(1)];
    let hi = grid[(imax + 1).min(samples - 1)];
    let peak_time = golden_max(&abs_d, lo, hi);
    let peak_value = abs_d(peak_time).max(vmax);
    let half = 0.5 * peak_value;

    let mut ambiguous = false;
    let left_idx = (0..imax).rev().find(|&j| values[j] < half);
    let right_idx = (imax + 1..samples).find(|&j| values[j] < half);
    let left = match left_idx {
        Some(j) => bisect_level(&abs_d, half, grid[j + 1].min(peak_time), grid[j]),
        None => {
            ambiguous = true;
            0.0
        }
    };
    let right = match right_idx {
        Some(j) => bisect_level(&abs_d, half, grid[j - 1].max(peak_time), grid[j]),
        None => {
            ambiguous = true;
            t_max
        }
    };
    let lobe = left_idx.unwrap_or(0)..=right_idx.unwrap_or(samples - 1);
    let competing = (1..samples - 1).any(|j| {
        !lobe.contains(&j) && values[j] >= values[j - 1] && values[j] >= values[j + 1] && values[j] >= 0.9 * peak_value
    });
    Ok(LightconePeak { peak_time, width: right - left, peak_value, ambiguous: ambiguous || competing, samples })
}

/// `|D_Z(0, r)|`, the equal-time scalar commutator.
pub fn equal_time_commutator_check(profile: &RadialProfile, r: f64) -> Result<f64, PropagatorError> {
    Ok(d_z(profile, SpacetimePoint::new(0.0, r)?)?.abs())
}

/// `2 ∫ dΓ Z` evaluated by quadrature of the shape function, independently
/// of the closed-form normalization constant.
pub fn coincidence_limit(profile: &RadialProfile) -> Result<f64, PropagatorError> {
    let shape = |k: f64| k * profile.profile.shape(k);
    let width = (profile.k_max - profile.k_min) / 64.0;
    let res = adaptive(&shape, &breakpoints(profile.k_min, profile.k_max, width), &profile.tolerance)?;
    Ok(2.0 * res.value / profile.profile.first_moment())
}

/// Isotropic current with `|j(k,s)|² = g_s² k^exponent`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialCurrent {
    pub g_plus: f64,
    pub g_minus: f64,
    pub exponent: f64,
}

impl RadialCurrent {
    pub fn zero() -> Self {
        Self { g_plus: 0.0, g_minus: 0.0, exponent: 0.0 }
    }

    /// `Σ_s |j(k,s)|²`.
    pub fn intensity(&self, k: f64) -> f64 {
        (self.g_plus * self.g_plus + self.g_minus * self.g_minus) * k.powf(self.exponent)
    }

    fn is_zero(&self) -> bool {
        self.g_plus == 0.0 && self.g_minus == 0.0
    }
}

/// `∫_ε^{k_max} γ(k) |j|² k^extra dk` in the variable `u = ln k`. At `ε = 0`
/// the part below `k₀` is taken from the leading power law, which is exact
/// to the tolerance at the chosen `k₀`.
fn radiation_integral(
    profile: &RadialProfile,
    current: &RadialCurrent,
    extra: f64,
    eps: f64,
) -> Result<f64, PropagatorError> {
    if !(eps >= 0.0) {
        return Err(PropagatorError::BadCutoff(eps));
    }
    if current.is_zero() {
        return Ok(0.0);
    }
    let q = 2.0 + profile.origin_power() + current.exponent + extra;
    let hi = profile.k_max;
    let lo = eps.max(profile.k_min);
    if eps == 0.0 && profile.k_min == 0.0 && q <= 0.0 {
        return Err(PropagatorError::DeclaredDivergence(photon_number_log_fit(profile, current, 1e-6, 1e-2, 9)?));
    }
    let (lo, tail) = if lo > 0.0 {
        (lo, 0.0)
    } else {
        let k0 = (hi * 1e-16f64.powf(1.0 / q)).max(1e-300);
        let integrand_k0 = profile.gamma_density(k0) * current.intensity(k0) * k0.powf(extra);
        (k0, k0 * integrand_k0 / q)
    };
    if lo >= hi {
        return Ok(0.0);
    }
    let f = |u: f64| {
        let k = u.exp();
        k * profile.gamma_density(k) * current.intensity(k) * k.powf(extra)
    };
    let breaks = breakpoints(lo.ln(), hi.ln(), 0.5);
    Ok(adaptive(&f, &breaks, &profile.tolerance)?.value + tail)
}

/// `⟨n⟩ = Σ_s ∫_{k ≥ ε} dΓ Z |j|²`. Refuses `ε = 0` when the integral
/// diverges at the origin and reports the fitted logarithm instead.
pub fn radiated_photon_number(
    profile: &RadialProfile,
    current: &RadialCurrent,
    ir_cutoff: f64,
) -> Result<f64, PropagatorError> {
    radiation_integral(profile, current, 0.0, ir_cutoff)
}

/// Energy and momentum magnitude of the radiation field. The momentum is
/// the radial integral times the angular average of the unit vector, which
/// vanishes for isotropic currents.
pub fn radiated_four_momentum(
    profile: &RadialProfile,
    current: &RadialCurrent,
    ir_cutoff: f64,
) -> Result<(f64, f64), PropagatorError> {
    let energy = radiation_integral(profile, current, 1.0, ir_cutoff)?;
    let (cos_average, _) = gk15(&|u: f64| 0.5 * u, -1.0, 1.0);
    Ok((energy, (energy * cos_average).abs()))
}

/// Least-squares fit `⟨n⟩(ε) = slope · ln(1/ε) + intercept`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

pub fn linear_fit(xs: &[f64], ys: &[f64]) -> LogFit {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { sxy * sxy / (sxx * syy) };
    LogFit { slope, intercept: my - slope * mx, r_squared }
}

/// Log-spaced cutoffs from `eps_lo` to `eps_hi`.
pub fn cutoff_grid(eps_lo: f64, eps_hi: f64, points: usize) -> Vec<f64> {
    let (a, b) = (eps_lo.ln(), eps_hi.ln());
    (0..points).map(|i| (a + (b - a) * i as f64 / (points - 1).max(1) as f64).exp()).collect()
}

/// `(ε, ⟨n⟩(ε))` over a log-spaced sweep.
pub fn photon_number_sweep(
    profile: &RadialProfile,
    current: &RadialCurrent,
    cutoffs: &[f64],
) -> Result<Vec<(f64, f64)>, PropagatorError> {
    cutoffs
        .par_iter()
        .map(|&eps| {
            if eps <= 0.0 {
                return Err(PropagatorError::BadCutoff(eps));
            }
            Ok((eps, radiated_photon_number(profile, current, eps)?))
        })
        .collect()
}

pub fn photon_number_log_fit(
    profile: &RadialProfile,
    current: &RadialCurrent,
    eps_lo: f64,
    eps_hi: f64,
    points: usize,
) -> Result<LogFit, PropagatorError> {
    let sweep = photon_number_sweep(profile, current, &cutoff_grid(eps_lo, eps_hi, points))?;
    let xs: Vec<f64> = sweep.iter().map(|(e, _)| -e.ln()).collect();
    let ys: Vec<f64> = sweep.iter().map(|(_, n)| *n).collect();
    Ok(linear_fit(&xs, &ys))
}

/// `D_Z` over a time grid at fixed `r`.
pub fn d_z_table(profile: &RadialProfile, r: f64, times: &[f64]) -> Result<Vec<(f64, f64, f64)>, PropagatorError> {
    times
        .par_iter()
        .map(|&t| Ok((t, r, d_z(profile, SpacetimePoint::new(t, r)?)?)))
        .collect()
}

pub fn write_d_z_csv<W: Write>(rows: &[(f64, f64, f64)], sink: W) -> Result<W, PropagatorError> {
    let mut table = CsvTable::new(sink, &["t", "r", "D_Z"])?;
    for &(t, r, d) in rows {
        table.row([fmt_f64(t), fmt_f64(r), fmt_f64(d)])?;
    }
    Ok(table.finish()?)
}

pub fn write_sweep_csv<W: Write>(rows: &[(f64, f64)], sink: W) -> Result<W, PropagatorError> {
    let mut table = CsvTable::new(sink, &["eps", "n"])?;
    for &(e, n) in rows {
        table.row([fmt_f64(e), fmt_f64(n)])?;
    }
    Ok(table.finish()?)
}
