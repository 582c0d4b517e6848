//! Vacuum survival amplitude of a two-level atom coupled to the modes.
//!
//! The amplitude solves
//!
//! ```text
//! F(t) = 1 − C ∫₀ᵗ dt₁ ∫₀^{t₁} dt₂ f_Z(t₁ − t₂) F(t₂),   f_Z(τ) = Σ_k z_k e^{−iΔ_k τ} / ω_k
//! ```
//!
//! Its Laplace transform is `1 / (s + C Σ_k z_k / (ω_k (s + iΔ_k)))`, which is
//! the top-left resolvent entry of the bordered matrix
//!
//! ```text
//! M = | 0   −cᵀ  |,   c_k = √(C z_k / ω_k),
//!     | c   −iΔ  |
//! ```
//!
//! so `F(t) = [exp(Mt)]₀₀`. `M` is anti-Hermitian: with `U = diag(1, i, …, i)`
//! it equals `−i U S U†` for the real symmetric `S = [[0, cᵀ], [c, Δ]]`, and
//! `F(t) = Σ_n v₀ₙ² e^{−iλₙ t}` over the eigenpairs of `S`.

use std::io::Write;

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::model::{Measure, ModeSet, ModeSetMeta, ModelError};
use crate::output::{fmt_f64, CsvError, CsvTable};

/// Largest number of frequency tuples the exact noncanonical sum enumerates.
pub const TUPLE_CAP: u128 = 1_000_000;
/// Monte Carlo samples per independently seeded chunk.
pub const MC_CHUNK: usize = 256;
const MAX_STEPS: f64 = 1e6;

#[derive(Debug, Error)]
pub enum AmplitudeError {
    #[error("coupling C must be positive and finite, got {0}")]
    BadCoupling(f64),
    #[error("atomic frequency must be finite, got {0}")]
    BadFrequency(f64),
    #[error("step h = {h} and horizon t_max = {t_max} must be positive with t_max/h <= 1e6")]
    BadStep { h: f64, t_max: f64 },
    #[error("time grid must start at 0 and increase")]
    BadGrid,
    #[error("weights must be nonnegative and frequencies positive")]
    BadCouplings,
    #[error("Volterra refinement ratio {ratio} outside [3.5, 4.5]")]
    NonConvergent { ratio: f64 },
    #[error("{tuples} frequency tuples exceed the cap of {cap}; use the Monte Carlo estimator")]
    TupleCap { tuples: u128, cap: u128 },
    #[error("need at least {min} samples, got {got}")]
    TooFewSamples { min: usize, got: usize },
    #[error("need at least one oscillator")]
    NoOscillators,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] CsvError),
}

/// Coupling strength, atomic frequency and the vacuum's modes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CouplingModel {
    pub c: f64,
    pub omega0: f64,
    pub modes: ModeSet,
}

impl CouplingModel {
    pub fn new(c: f64, omega0: f64, modes: ModeSet) -> Result<Self, AmplitudeError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(AmplitudeError::BadCoupling(c));
        }
        if !omega0.is_finite() {
            return Err(AmplitudeError::BadFrequency(omega0));
        }
        Ok(Self { c, omega0, modes })
    }

    /// `Δ_k = ω_k − ω₀`.
    pub fn detunings(&self) -> Vec<f64> {
        self.modes.omegas().map(|w| w - self.omega0).collect()
    }

    /// `(ω_k, z_k)` pairs for [`solve_resolvent`].
    pub fn couplings(&self) -> Vec<(f64, f64)> {
        self.modes.modes().iter().map(|m| (m.omega, m.z)).collect()
    }

    /// Fastest rate in the problem: the vacuum Rabi rate or the largest detuning.
    pub fn rate(&self) -> f64 {
        let f0: f64 = self.modes.modes().iter().map(|m| m.z / m.omega).sum();
        let detune = self.detunings().iter().fold(0.0f64, |a, d| a.max(d.abs()));
        (self.c * f0).sqrt().max(detune)
    }

    /// Step with `rate · h = 0.01`.
    pub fn default_step(&self) -> f64 {
        0.01 / self.rate().max(1e-12)
    }
}

/// `f_Z(τ) = Σ_k z_k e^{−iΔ_k τ} / ω_k`.
pub fn kernel_fz(model: &CouplingModel, tau: f64) -> Complex64 {
    model
        .modes
        .modes()
        .iter()
        .map(|m| Complex64::from_polar(m.z / m.omega, -(m.omega - model.omega0) * tau))
        .sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Volterra,
    Resolvent,
    MatrixExponential,
    NoncanonicalExact,
    MonteCarlo,
}

/// Refinement diagnostics of the Volterra solver.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Richardson {
    /// `sup|F_h − F_{h/2}| / sup|F_{h/2} − F_{h/4}|`; `None` when both
    /// differences are at round-off level.
    pub ratio: Option<f64>,
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AmplitudeSeries {
    pub t: Vec<f64>,
    pub values: Vec<Complex64>,
    pub method: Method,
    /// Grid spacing, zero for nonuniform grids.
    pub h: f64,
    pub error_estimate: f64,
    /// Per-time standard error of Monte Carlo estimates.
    pub stderr: Option<Vec<f64>>,
    pub richardson: Option<Richardson>,
}

impl AmplitudeSeries {
    fn new(t: &[f64], values: Vec<Complex64>, method: Method) -> Self {
        Self { h: grid_step(t), t: t.to_vec(), values, method, error_estimate: 0.0, stderr: None, richardson: None }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        sup_distance(&self.values, &other.values)
    }

    pub fn max_stderr(&self) -> f64 {
        self.stderr.as_ref().map_or(0.0, |s| s.iter().copied().fold(0.0, f64::max))
    }

    /// Columns `t, re, im, abs` and `stderr` for Monte Carlo series.
    pub fn write_csv<W: Write>(&self, sink: W) -> Result<W, AmplitudeError> {
        let mut header = vec!["t", "re", "im", "abs"];
        if self.stderr.is_some() {
            header.push("stderr");
        }
        let mut table = CsvTable::new(sink, &header)?;
        for (i, (t, v)) in self.t.iter().zip(&self.values).enumerate() {
            let mut row = vec![fmt_f64(*t), fmt_f64(v.re), fmt_f64(v.im), fmt_f64(v.norm())];
            if let Some(s) = &self.stderr {
                row.push(fmt_f64(s[i]));
            }
            table.row(row)?;
        }
        Ok(table.finish()?)
    }
}

fn sup_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

fn grid_step(t: &[f64]) -> f64 {
    if t.len() < 2 {
        return 0.0;
    }
    let h = t[1] - t[0];
    let uniform = t.windows(2).all(|w| ((w[1] - w[0]) - h).abs() <= 1e-9 * h.abs().max(1.0));
    if uniform {
        h
    } else {
        0.0
    }
}

/// `points` equally spaced times on `[0, t_max]`.
pub fn uniform_grid(t_max: f64, points: usize) -> Vec<f64> {
    let n = points.max(2) - 1;
    (0..=n).map(|i| t_max * i as f64 / n as f64).collect()
}

fn check_grid(t: &[f64]) -> Result<(), AmplitudeError> {
    let ok = t.first() == Some(&0.0) && t.windows(2).all(|w| w[1] > w[0]) && t.iter().all(|x| x.is_finite());
    if ok {
        Ok(())
    } else {
        Err(AmplitudeError::BadGrid)
    }
}

/// Product trapezoid on `F' = −C ∫₀ᵗ f(t−s) F(s) ds`, implicit in the
/// newest value (a scalar solve per step).
fn volterra_steps(kernel: &[Complex64], c: f64, h: f64) -> Vec<Complex64> {
    let n = kernel.len() - 1;
    let mut f = Vec::with_capacity(n + 1);
    let mut g = Vec::with_capacity(n + 1);
    f.push(Complex64::new(1.0, 0.0));
    g.push(Complex64::new(0.0, 0.0));
    let denom = Complex64::new(1.0, 0.0) + kernel[0] * (c * h * h / 4.0);
    for step in 0..n {
        let mut s = kernel[step + 1] * f[0] * 0.5;
        for j in 1..=step {
            s += kernel[step + 1 - j] * f[j];
        }
        s *= h;
        let next = (f[step] - (g[step] + s) * (0.5 * c * h)) / denom;
        f.push(next);
        g.push(s + kernel[0] * next * (0.5 * h));
    }
    f
}

/// Solves the integral equation on `[0, t_max]` at steps `h`, `h/2`, `h/4`,
/// checks the refinement ratio against second order and returns the
/// Richardson-extrapolated values on the coarse grid.
pub fn solve_volterra(model: &CouplingModel, t_max: f64, h: f64) -> Result<AmplitudeSeries, AmplitudeError> {
    if !(h > 0.0 && t_max > 0.0 && t_max / h <= MAX_STEPS && t_max.is_finite()) {
        return Err(AmplitudeError::BadStep { h, t_max });
    }
    let steps = (t_max / h).round().max(1.0) as usize;
    let h = t_max / steps as f64;
    let solve = |refine: usize| {
        let hh = h / refine as f64;
        let kernel: Vec<Complex64> = (0..=steps * refine).map(|j| kernel_fz(model, j as f64 * hh)).collect();
        volterra_steps(&kernel, model.c, hh)
    };
    let coarse = solve(1);
    let mid: Vec<Complex64> = solve(2).into_iter().step_by(2).collect();
    let fine: Vec<Complex64> = solve(4).into_iter().step_by(4).collect();
    let d1 = sup_distance(&coarse, &mid);
    let d2 = sup_distance(&mid, &fine);
    let ratio = (d2 > 1e-13).then(|| d1 / d2);
    if let Some(r) = ratio {
        if !(3.5..=4.5).contains(&r) {
            return Err(AmplitudeError::NonConvergent { ratio: r });
        }
    }
    let values: Vec<Complex64> = fine.iter().zip(&mid).map(|(f, m)| f + (f - m) / 3.0).collect();
    let t: Vec<f64> = (0..=steps).map(|i| i as f64 * h).collect();
    Ok(AmplitudeSeries {
        h,
        error_estimate: d2 / 3.0,
        richardson: Some(Richardson { ratio, order: ratio.map(f64::log2) }),
        ..AmplitudeSeries::new(&t, values, Method::Volterra)
    })
}

/// The bordered matrix for given couplings and detunings.
#[derive(Debug, Clone, PartialEq)]
pub struct BorderedMatrix {
    pub border: Vec<f64>,
    pub detunings: Vec<f64>,
}

impl BorderedMatrix {
    /// `c_j = √(C w_j / ω_j)`, `Δ_j = ω_j − ω₀`.
    pub fn new(c: f64, couplings: &[(f64, f64)], omega0: f64) -> Result<Self, AmplitudeError> {
        if !(c > 0.0 && c.is_finite()) {
            return Err(AmplitudeError::BadCoupling(c));
        }
        if couplings.iter().any(|&(w, z)| !(w > 0.0 && w.is_finite() && z >= 0.0 && z.is_finite())) {
            return Err(AmplitudeError::BadCouplings);
        }
        Ok(Self {
            border: couplings.iter().map(|&(w, z)| (c * z / w).sqrt()).collect(),
            detunings: couplings.iter().map(|&(w, _)| w - omega0).collect(),
        })
    }

    pub fn dim(&self) -> usize {
        self.border.len() + 1
    }

    /// `M` itself.
    pub fn matrix(&self) -> DMatrix<Complex64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| match (i, j) {
            (0, 0) => Complex64::new(0.0, 0.0),
            (0, j) => Complex64::new(-self.border[j - 1], 0.0),
            (i, 0) => Complex64::new(self.border[i - 1], 0.0),
            (i, j) if i == j => Complex64::new(0.0, -self.detunings[i - 1]),
            _ => Complex64::new(0.0, 0.0),
        })
    }

    /// The real symmetric `S` with `M = −i U S U†`.
    pub fn symmetric(&self) -> DMatrix<f64> {
        let n = self.dim();
        DMatrix::from_fn(n, n, |i, j| match (i, j) {
            (0, 0) => 0.0,
            (0, j) => self.border[j - 1],
            (i, 0) => self.border[i - 1],
            (i, j) if i == j => self.detunings[i - 1],
            _ => 0.0,
        })
    }

    /// Eigenvalues of `M` from a complex Schur decomposition, independent of
    /// the symmetric reduction.
    pub fn poles(&self) -> Vec<Complex64> {
        let (_, t) = self.matrix().schur().unpack();
        t.diagonal().iter().copied().collect()
    }

    /// `max |Re λ| / ‖M‖_F` over the poles.
    pub fn relative_real_part(&self) -> f64 {
        let m = self.matrix();
        let norm = m.norm().max(f64::MIN_POSITIVE);
        self.poles().iter().map(|p| p.re.abs()).fold(0.0, f64::max) / norm
    }

    /// `[exp(Mt)]₀₀` on the grid, and whether the exponential fallback was
    /// used.
    pub fn amplitude(&self, t: &[f64]) -> (Vec<Complex64>, bool) {
        let s = self.symmetric();
        match SymmetricEigen::try_new(s, 1e-15, 10_000) {
            Some(eig) => {
                let weights: Vec<f64> = eig.eigenvectors.row(0).iter().map(|v| v * v).collect();
                let values = t
                    .iter()
                    .map(|&time| {
                        if time == 0.0 {
                            // exact initial condition
                            return Complex64::new(1.0, 0.0);
                        }
                        eig.eigenvalues
                            .iter()
                            .zip(&weights)
                            .map(|(&lam, &w)| Complex64::from_polar(w, -lam * time))
                            .sum()
                    })
                    .collect();
                (values, false)
            }
            None => {
                let m = self.matrix();
                let values = t
                    .iter()
                    .map(|&time| {
                        if time == 0.0 {
                            Complex64::new(1.0, 0.0)
                        } else {
                            (&m * Complex64::new(time, 0.0)).exp()[(0, 0)]
                        }
                    })
                    .collect();
                (values, true)
            }
        }
    }
}

/// Survival amplitude for couplings `(ω_j, w_j)` with unnormalized weights.
pub fn solve_resolvent(
    c: f64,
    couplings: &[(f64, f64)],
    omega0: f64,
    t: &[f64],
) -> Result<AmplitudeSeries, AmplitudeError> {
    check_grid(t)?;
    let (values, fallback) = BorderedMatrix::new(c, couplings, omega0)?.amplitude(t);
    let method = if fallback { Method::MatrixExponential } else { Method::Resolvent };
    Ok(AmplitudeSeries::new(t, values, method))
}

/// The canonical amplitude: all modes with weights `z_k`.
pub fn canonical_amplitude(model: &CouplingModel, t: &[f64]) -> Result<AmplitudeSeries, AmplitudeError> {
    solve_resolvent(model.c, &model.couplings(), model.omega0, t)
}

/// Couplings of one frequency tuple, repeated frequencies merged with
/// summed weight `count / N`.
fn tuple_couplings(model: &CouplingModel, counts: &[usize], n: usize) -> Vec<(f64, f64)> {
    counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c > 0)
        .map(|(k, &c)| (model.modes.omega(k), c as f64 / n as f64))
        .collect()
}

fn multisets(n: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in (0..=n).rev() {
        for mut rest in multisets(n - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// `F′_N(t) = Σ_{k₁…k_N} z_{k₁}⋯z_{k_N} F_{k₁…k_N}(t)`, each tuple amplitude
/// solved with weights `1/N`. Tuples are grouped by their multiset of
/// frequencies, which fixes the amplitude, with multinomial multiplicity.
pub fn noncanonical_amplitude_exact(
    model: &CouplingModel,
    n: usize,
    t: &[f64],
) -> Result<AmplitudeSeries, AmplitudeError> {
    if n == 0 {
        return Err(AmplitudeError::NoOscillators);
    }
    check_grid(t)?;
    let tuples = (model.modes.len() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if tuples > TUPLE_CAP {
        return Err(AmplitudeError::TupleCap { tuples, cap: TUPLE_CAP });
    }
    let ln_n_fact = libm::lgamma(n as f64 + 1.0);
    let groups = multisets(n, model.modes.len());
    let terms: Vec<Vec<Complex64>> = groups
        .par_iter()
        .map(|counts| {
            let mut ln_w = ln_n_fact;
            for (k, &c) in counts.iter().enumerate() {
                if c > 0 {
                    ln_w += c as f64 * model.modes.z(k).ln() - libm::lgamma(c as f64 + 1.0);
                }
            }
            let bm = BorderedMatrix::new(model.c, &tuple_couplings(model, counts, n), model.omega0)?;
            let w = ln_w.exp();
            Ok(bm.amplitude(t).0.into_iter().map(|v| v * w).collect())
        })
        .collect::<Result<_, AmplitudeError>>()?;
    let mut values = vec![Complex64::new(0.0, 0.0); t.len()];
    for term in terms {
        for (v, x) in values.iter_mut().zip(term) {
            *v += x;
        }
    }
    values[0] = Complex64::new(1.0, 0.0);
    Ok(AmplitudeSeries::new(t, values, Method::NoncanonicalExact))
}

/// Per-chunk sums of `F` and `|F|²`.
#[derive(Clone)]
struct Moments {
    count: usize,
    sum: Vec<Complex64>,
    sum_sq: Vec<f64>,
}

impl Moments {
    fn merge(mut self, other: Self) -> Self {
        self.count += other.count;
        self.sum.iter_mut().zip(other.sum).for_each(|(a, b)| *a += b);
        self.sum_sq.iter_mut().zip(other.sum_sq).for_each(|(a, b)| *a += b);
        self
    }
}

/// Merges in a fixed balanced-tree order so the result does not depend on
/// how the chunks were scheduled.
fn tree_reduce(mut parts: Vec<Moments>) -> Moments {
    while parts.len() > 1 {
        let mut next = Vec::with_capacity(parts.len().div_ceil(2));
        let mut it = parts.into_iter();
        while let Some(a) = it.next() {
            next.push(match it.next() {
                Some(b) => a.merge(b),
                None => a,
            });
        }
        parts = next;
    }
    parts.pop().expect("at least one chunk")
}

/// Monte Carlo estimate of `F′_N`: frequency tuples drawn i.i.d. from `z`.
/// Chunk `i` of [`MC_CHUNK`] samples uses ChaCha8 seeded with `seed` on
/// stream `i`, and chunk sums are merged pairwise in index order, so the
/// output is bit-identical for any number of worker threads.
pub fn noncanonical_amplitude_mc(
    model: &CouplingModel,
    n: usize,
    samples: usize,
    seed: u64,
    t: &[f64],
) -> Result<AmplitudeSeries, AmplitudeError> {
    if n == 0 {
        return Err(AmplitudeError::NoOscillators);
    }
    if samples < 2 {
        return Err(AmplitudeError::TooFewSamples { min: 2, got: samples });
    }
    check_grid(t)?;
    let dist = WeightedIndex::new(model.modes.weights()).map_err(|_| AmplitudeError::BadCouplings)?;
    let chunks = samples.div_ceil(MC_CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|chunk| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(chunk as u64);
            let size = MC_CHUNK.min(samples - chunk * MC_CHUNK);
            let mut acc = Moments { count: size, sum: vec![Complex64::new(0.0, 0.0); t.len()], sum_sq: vec![0.0; t.len()] };
            let mut counts = vec![0usize; model.modes.len()];
            for _ in 0..size {
                counts.iter_mut().for_each(|c| *c = 0);
                for _ in 0..n {
                    counts[dist.sample(&mut rng)] += 1;
                }
                let bm = BorderedMatrix::new(model.c, &tuple_couplings(model, &counts, n), model.omega0)?;
                for (i, v) in bm.amplitude(t).0.into_iter().enumerate() {
                    acc.sum[i] += v;
                    acc.sum_sq[i] += v.norm_sqr();
                }
            }
            Ok(acc)
        })
        .collect::<Result<_, AmplitudeError>>()?;
    let total = tree_reduce(parts);
    let s = total.count as f64;
    let mut values: Vec<Complex64> = total.sum.iter().map(|v| v / s).collect();
    let stderr: Vec<f64> = values
        .iter()
        .zip(&total.sum_sq)
        .map(|(mean, sq)| ((sq / s - mean.norm_sqr()).max(0.0) * s / (s - 1.0) / s).sqrt())
        .collect();
    values[0] = Complex64::new(1.0, 0.0);
    let max_err = stderr.iter().copied().fold(0.0, f64::max);
    Ok(AmplitudeSeries {
        stderr: Some(stderr),
        error_estimate: max_err,
        ..AmplitudeSeries::new(t, values, Method::MonteCarlo)
    })
}

/// A flat window of equally spaced modes starting at `lambda1`, widened by
/// doubling its width while the product of coupling and plateau height is
/// held fixed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RenormSweep {
    pub lambda1: f64,
    pub base_width: f64,
    pub spacing: f64,
    pub omega0: f64,
    /// `C · Z`, held fixed across the sequence.
    pub coupling_times_z: f64,
    /// Plateau height relative to the normalized one.
    pub z_scale: f64,
    pub doublings: usize,
    pub threshold: f64,
}

impl Default for RenormSweep {
    fn default() -> Self {
        Self {
            lambda1: 1.0,
            base_width: 1.0,
            spacing: 0.05,
            omega0: 1.5,
            coupling_times_z: 0.002,
            z_scale: 1.0,
            doublings: 3,
            threshold: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RenormWindow {
    pub lambda2: f64,
    pub modes: usize,
    pub plateau: f64,
    pub coupling: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RenormReport {
    pub windows: Vec<RenormWindow>,
    pub amplitudes: Vec<AmplitudeSeries>,
    /// `sup_t |F_{i+1} − F_i|` between consecutive windows.
    pub drifts: Vec<f64>,
    pub decreasing: bool,
    pub passed: bool,
}

impl RenormSweep {
    /// Mode set of the window of width `width`, with cavity weights.
    pub fn window(&self, width: f64) -> Result<ModeSet, AmplitudeError> {
        let count = ((width / self.spacing).round() as usize).max(1);
        let omegas: Vec<f64> = (0..count).map(|j| self.lambda1 + (j as f64 + 0.5) * self.spacing).collect();
        let meta = ModeSetMeta {
            scheme: "flat-window".into(),
            measure: Some(Measure::Cavity),
            profile: None,
            omega_min: Some(self.lambda1),
            omega_max: Some(self.lambda1 + count as f64 * self.spacing),
        };
        Ok(ModeSet::with_meta(&omegas, &vec![1.0; count], meta)?)
    }
}

/// Widens the window `doublings` times. Each window has plateau
/// `Z = z_scale / n` over its `n` modes and coupling `C = (C·Z) / Z`.
pub fn renormalization_sweep(config: &RenormSweep, t: &[f64]) -> Result<RenormReport, AmplitudeError> {
    check_grid(t)?;
    let mut windows = Vec::new();
    let mut amplitudes = Vec::new();
    for i in 0..=config.doublings {
        let width = config.base_width * 2f64.powi(i as i32);
        let modes = config.window(width)?;
        let plateau = config.z_scale / modes.len() as f64;
        let coupling = config.coupling_times_z / plateau;
        let couplings: Vec<(f64, f64)> = modes.omegas().map(|w| (w, plateau)).collect();
        amplitudes.push(solve_resolvent(coupling, &couplings, config.omega0, t)?);
        windows.push(RenormWindow { lambda2: modes.meta().omega_max.unwrap_or(config.lambda1), modes: modes.len(), plateau, coupling });
    }
    let drifts: Vec<f64> = amplitudes.windows(2).map(|w| w[0].sup_distance(&w[1])).collect();
    let decreasing = drifts.windows(2).all(|w| w[1] < w[0]);
    let passed = decreasing && drifts.last().is_none_or(|&d| d < config.threshold);
    Ok(RenormReport { windows, amplitudes, drifts, decreasing, passed })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single_mode(c_: f64, omega: f64, omega0: f64) -> CouplingModel {
        CouplingModel::new(c_, omega0, ModeSet::new(&[omega], &[1.0]).unwrap()).unwrap()
    }

    fn random_model(rng: &mut ChaCha8Rng) -> CouplingModel {
        let m = rng.random_range(1..=16);
        let omegas: Vec<f64> = {
            let mut w: Vec<f64> = (0..m).map(|_| rng.random_range(0.5..3.0)).collect();
            w.sort_by(f64::total_cmp);
            w.dedup();
            w
        };
        let weights: Vec<f64> = omegas.iter().map(|_| rng.random_range(0.1..1.0)).collect();
        let cc = 10f64.powf(rng.random_range(-2.0..1.0));
        let omega0 = if rng.random_bool(0.3) { omegas[0] } else { rng.random_range(0.5..3.0) };
        CouplingModel::new(cc, omega0, ModeSet::new(&omegas, &weights).unwrap()).unwrap()
    }

    #[test]
    fn kernel_properties() {
        let model = CouplingModel::new(1.0, 1.2, ModeSet::new(&[1.0, 2.0], &[0.3, 0.7]).unwrap()).unwrap();
        let f0 = kernel_fz(&model, 0.0);
        assert!((f0 - c(0.3 + 0.35, 0.0)).norm() < 1e-15);
        for i in 0..40 {
            assert!(kernel_fz(&model, 0.37 * i as f64).norm() <= f0.re + 1e-15);
        }
        let res = single_mode(1.0, 2.0, 2.0);
        assert!((kernel_fz(&res, 5.3) - c(0.5, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn single_resonant_mode_is_rabi_cosine() {
        let (cc, w) = (0.8, 1.6);
        let model = single_mode(cc, w, w);
        let vol = solve_volterra(&model, 10.0, model.default_step()).unwrap();
        let res = canonical_amplitude(&model, &vol.t).unwrap();
        let rate = (cc / w).sqrt();
        for (t, (a, b)) in vol.t.iter().zip(vol.values.iter().zip(&res.values)) {
            let want = (rate * t).cos();
            assert!((a - c(want, 0.0)).norm() < 1e-6, "volterra t={t}");
            assert!((b - c(want, 0.0)).norm() < 1e-12, "resolvent t={t}");
        }
        assert_eq!(vol.values[0], c(1.0, 0.0));
    }

    #[test]
    fn two_by_two_closed_form_fixes_the_sign() {
        // F(t) = e^{−iΔt/2}(cos Ωt + i Δ/(2Ω) sin Ωt), Ω² = Δ²/4 + c²,
        // whose Laplace transform is 1/(s + c²/(s + iΔ))
        let (cc, w, w0) = (0.6, 2.0, 1.3);
        let t = uniform_grid(8.0, 161);
        let series = solve_resolvent(cc, &[(w, 1.0)], w0, &t).unwrap();
        let d = w - w0;
        let c2 = cc / w;
        let om = (0.25 * d * d + c2).sqrt();
        for (&time, v) in t.iter().zip(&series.values) {
            let want = Complex64::from_polar(1.0, -0.5 * d * time)
                * c((om * time).cos(), 0.5 * d / om * (om * time).sin());
            assert!((v - want).norm() < 1e-12);
        }
        // numerical Laplace transform at a few real s
        for s in [0.7, 1.5, 3.0] {
            let f = |time: f64| {
                Complex64::from_polar(1.0, -0.5 * d * time) * c((om * time).cos(), 0.5 * d / om * (om * time).sin())
            };
            let re = crate::quadrature::composite_simpson(&|x| (f(x) * (-s * x).exp()).re, 0.0, 60.0, 200_000);
            let im = crate::quadrature::composite_simpson(&|x| (f(x) * (-s * x).exp()).im, 0.0, 60.0, 200_000);
            let want = 1.0 / (c(s, 0.0) + c2 / c(s, d));
            assert!((c(re, im) - want).norm() < 1e-9, "s={s}");
        }
        // the opposite diagonal sign disagrees with the Volterra solution
        let model = single_mode(cc, w, w0);
        let vol = solve_volterra(&model, 8.0, 0.05).unwrap();
        let flipped = solve_resolvent(cc, &[(w0 - d, 1.0)], w0 + 0.0 * d, &vol.t).unwrap();
        let right = solve_resolvent(cc, &[(w, 1.0)], w0, &vol.t).unwrap();
        assert!(vol.sup_distance(&right) < 1e-6);
        assert!(vol.sup_distance(&flipped) > 1e-2);
    }

    #[test]
    fn volterra_agrees_with_resolvent_on_random_models() {
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..6 {
            let model = random_model(&mut rng);
            let vol = solve_volterra(&model, 10.0, model.default_step()).unwrap();
            let res = canonical_amplitude(&model, &vol.t).unwrap();
            assert!(vol.sup_distance(&res) < 1e-6, "{model:?}: {}", vol.sup_distance(&res));
            let order = vol.richardson.unwrap().order.unwrap();
            assert!((1.8..=2.2).contains(&order), "{order}");
            assert!(vol.max_abs() <= 1.0 + 1e-9 && res.max_abs() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn bad_steps_are_rejected() {
        let model = single_mode(1.0, 1.0, 1.0);
        assert!(matches!(solve_volterra(&model, 10.0, 0.0), Err(AmplitudeError::BadStep { .. })));
        assert!(matches!(solve_volterra(&model, 10.0, 1e-6), Err(AmplitudeError::BadStep { .. })));
        assert!(matches!(solve_resolvent(1.0, &[(1.0, 1.0)], 1.0, &[0.5, 1.0]), Err(AmplitudeError::BadGrid)));
    }

    #[test]
    fn poles_are_imaginary() {
        let bm = BorderedMatrix::new(2.0, &[(0.7, 0.2), (1.1, 0.5), (2.4, 0.3)], 1.0).unwrap();
        assert!(bm.relative_real_part() <= 1e-10);
        let mut eig: Vec<f64> = bm.poles().iter().map(|p| -p.im).collect();
        eig.sort_by(f64::total_cmp);
        let mut sym: Vec<f64> = SymmetricEigen::new(bm.symmetric()).eigenvalues.iter().copied().collect();
        sym.sort_by(f64::total_cmp);
        for (a, b) in eig.iter().zip(&sym) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn matrix_exponential_agrees_with_eigen_route() {
        let bm = BorderedMatrix::new(1.5, &[(0.9, 0.4), (1.7, 0.6)], 1.2).unwrap();
        let t = uniform_grid(5.0, 11);
        let (eig, fallback) = bm.amplitude(&t);
        assert!(!fallback);
        for (&time, v) in t.iter().zip(&eig) {
            let direct = (bm.matrix() * c(time, 0.0)).exp()[(0, 0)];
            assert!((direct - v).norm() < 1e-10);
        }
    }

    #[test]
    fn repeated_frequencies_collapse() {
        let t = uniform_grid(6.0, 61);
        let spread = solve_resolvent(0.9, &[(1.3, 0.25); 4], 1.1, &t).unwrap();
        let single = solve_resolvent(0.9, &[(1.3, 1.0)], 1.1, &t).unwrap();
        assert!(spread.sup_distance(&single) < 1e-12);
    }

    #[test]
    fn only_products_of_coupling_and_weight_matter() {
        let t = uniform_grid(6.0, 61);
        let w = [(0.8, 0.3), (1.4, 0.5), (2.2, 0.2)];
        let a = solve_resolvent(1.2, &w, 1.0, &t).unwrap();
        let halved: Vec<(f64, f64)> = w.iter().map(|&(o, z)| (o, z / 2.0)).collect();
        let b = solve_resolvent(2.4, &halved, 1.0, &t).unwrap();
        assert!(a.sup_distance(&b) < 1e-10);
    }

    #[test]
    fn noncanonical_exact_limits() {
        let modes = ModeSet::new(&[1.0, 1.5, 2.5], &[0.2, 0.5, 0.3]).unwrap();
        let model = CouplingModel::new(0.7, 1.4, modes.clone()).unwrap();
        let t = uniform_grid(8.0, 81);
        // N = 1: weighted sum of single-mode amplitudes with full weight
        let one = noncanonical_amplitude_exact(&model, 1, &t).unwrap();
        let mut want = vec![c(0.0, 0.0); t.len()];
        for k in 0..3 {
            let s = solve_resolvent(0.7, &[(modes.omega(k), 1.0)], 1.4, &t).unwrap();
            for (w, v) in want.iter_mut().zip(&s.values) {
                *w += v * modes.z(k);
            }
        }
        assert!(sup_distance(&one.values, &want) < 1e-12);
        // one mode: every N reproduces the canonical amplitude
        let lone = CouplingModel::new(0.7, 1.4, ModeSet::new(&[1.2], &[1.0]).unwrap()).unwrap();
        let canon = canonical_amplitude(&lone, &t).unwrap();
        for n in [1, 3, 7] {
            assert!(noncanonical_amplitude_exact(&lone, n, &t).unwrap().sup_distance(&canon) < 1e-12);
        }
        let big = CouplingModel::new(0.7, 1.4, build_modes(8)).unwrap();
        assert!(matches!(noncanonical_amplitude_exact(&big, 7, &t), Err(AmplitudeError::TupleCap { .. })));
    }

    fn build_modes(m: usize) -> ModeSet {
        let omegas: Vec<f64> = (0..m).map(|i| 0.8 + 0.25 * i as f64).collect();
        ModeSet::new(&omegas, &vec![1.0; m]).unwrap()
    }

    #[test]
    fn exact_sum_matches_literal_tuple_enumeration() {
        let modes = ModeSet::new(&[1.0, 1.5, 2.5], &[0.2, 0.5, 0.3]).unwrap();
        let model = CouplingModel::new(1.1, 1.6, modes.clone()).unwrap();
        let t = uniform_grid(6.0, 31);
        let n = 3;
        let mut want = vec![c(0.0, 0.0); t.len()];
        for a in 0..3 {
            for b in 0..3 {
                for d in 0..3 {
                    let tuple = [a, b, d];
                    let couplings: Vec<(f64, f64)> = tuple.iter().map(|&k| (modes.omega(k), 1.0 / n as f64)).collect();
                    let w: f64 = tuple.iter().map(|&k| modes.z(k)).product();
                    let s = solve_resolvent(1.1, &couplings, 1.6, &t).unwrap();
                    for (x, v) in want.iter_mut().zip(&s.values) {
                        *x += v * w;
                    }
                }
            }
        }
        let got = noncanonical_amplitude_exact(&model, n, &t).unwrap();
        assert!(sup_distance(&got.values, &want) < 1e-12);
    }

    #[test]
    fn monte_carlo_is_unbiased_and_deterministic() {
        let modes = ModeSet::new(&[1.0, 1.5, 2.5], &[0.2, 0.5, 0.3]).unwrap();
        let model = CouplingModel::new(1.1, 1.6, modes).unwrap();
        let t = uniform_grid(6.0, 31);
        for n in [1, 3] {
            let exact = noncanonical_amplitude_exact(&model, n, &t).unwrap();
            let mc = noncanonical_amplitude_mc(&model, n, 4000, 7, &t).unwrap();
            let se = mc.stderr.as_ref().unwrap();
            for i in 1..t.len() {
                assert!((mc.values[i] - exact.values[i]).norm() <= 3.0 * se[i] * 2f64.sqrt() + 1e-12, "N={n} i={i}");
            }
        }
        let a = noncanonical_amplitude_mc(&model, 4, 1000, 42, &t).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let b = pool.install(|| noncanonical_amplitude_mc(&model, 4, 1000, 42, &t).unwrap());
        assert_eq!(a, b);
        assert!(matches!(noncanonical_amplitude_mc(&model, 4, 1, 42, &t), Err(AmplitudeError::TooFewSamples { .. })));
    }

    #[test]
    fn amplitudes_stay_in_unit_disk() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let model = random_model(&mut rng);
            let t = uniform_grid(20.0, 401);
            let f = canonical_amplitude(&model, &t).unwrap();
            assert_eq!(f.values[0], c(1.0, 0.0));
            assert!(f.max_abs() <= 1.0 + 1e-9);
        }
    }

    #[test]
    fn renormalization_sweep_settles() {
        let t = uniform_grid(10.0, 201);
        let report = renormalization_sweep(&RenormSweep::default(), &t).unwrap();
        assert_eq!(report.windows.len(), 4);
        assert!(report.passed, "{:?}", report.drifts);
        let scaled = renormalization_sweep(&RenormSweep { z_scale: 0.5, ..RenormSweep::default() }, &t).unwrap();
        for (a, b) in report.amplitudes.iter().zip(&scaled.amplitudes) {
            assert!(a.sup_distance(b) < 1e-10);
        }
    }

    #[test]
    fn degenerate_window_is_rabi_cosine() {
        let t = uniform_grid(10.0, 101);
        let cfg = RenormSweep { base_width: 0.0, lambda1: 1.475, omega0: 1.5, doublings: 1, ..RenormSweep::default() };
        let report = renormalization_sweep(&cfg, &t).unwrap();
        let w = report.windows[0].clone();
        assert_eq!(w.modes, 1);
        let rate = (w.coupling * w.plateau / 1.5).sqrt();
        for (time, v) in t.iter().zip(&report.amplitudes[0].values) {
            assert!((v - c((rate * time).cos(), 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn csv_columns() {
        let t = uniform_grid(1.0, 3);
        let s = solve_resolvent(1.0, &[(1.0, 1.0)], 1.0, &t).unwrap();
        let out = String::from_utf8(s.write_csv(Vec::new()).unwrap()).unwrap();
        assert!(out.starts_with("t,re,im,abs\r\n0,1,0,1\r\n0.5,"));
        let model = single_mode(1.0, 1.0, 1.0);
        let mc = noncanonical_amplitude_mc(&model, 2, 4, 1, &t).unwrap();
        let out = String::from_utf8(mc.write_csv(Vec::new()).unwrap()).unwrap();
        assert!(out.starts_with("t,re,im,abs,stderr\r\n"));
    }
}
