use num_complex::Complex64;

use super::operators::{apply_to_slot, smeared, SmearKind};
use super::{FockError, OscillatorBasis, TruncationSpec};
use crate::model::{CoherentSpec, Helicity, ModeAmplitudes, ModeSet};
use crate::sparse::SparseMatrix;

/// Dense amplitudes over `(k, n₊, n₋)^⊗N`, oscillator-major: oscillator 0 is
/// the most significant digit, and within one oscillator the order is mode,
/// then `n₊`, then `n₋`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    pub amplitudes: Vec<Complex64>,
    pub oscillators: usize,
    pub single_dim: usize,
    /// `1 − ‖ψ‖²` caused by truncation.
    pub norm_deficit: f64,
}

impl StateVector {
    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn inner(&self, other: &Self) -> Complex64 {
        self.amplitudes.iter().zip(&other.amplitudes).map(|(a, b)| a.conj() * b).sum()
    }

    fn product(single: &[Complex64], n: usize) -> Vec<Complex64> {
        let mut out = vec![Complex64::new(1.0, 0.0)];
        for _ in 0..n {
            out = out.iter().flat_map(|&hi| single.iter().map(move |&lo| hi * lo)).collect();
        }
        out
    }

    /// `scaling · Σ_j op^{(j)} |ψ⟩` without forming the lifted matrix.
    pub fn apply_lifted(&self, op: &SparseMatrix, scaling: Option<f64>) -> Result<Self, FockError> {
        if op.rows() != self.single_dim {
            return Err(FockError::DimensionMismatch { expected: self.single_dim, got: op.rows() });
        }
        let scale = scaling.unwrap_or(1.0 / (self.oscillators as f64).sqrt());
        let mut out = vec![Complex64::new(0.0, 0.0); self.amplitudes.len()];
        for slot in 0..self.oscillators {
            for (o, v) in out.iter_mut().zip(apply_to_slot(op, &self.amplitudes, self.oscillators, slot)) {
                *o += v * scale;
            }
        }
        Ok(Self { amplitudes: out, norm_deficit: 0.0, ..*self })
    }
}

/// N copies of `Σ_k √z_k |k,0,0⟩`.
pub fn vacuum_state(modes: &ModeSet, n: usize, trunc: &TruncationSpec) -> Result<StateVector, FockError> {
    let basis = OscillatorBasis::new(modes.len(), trunc);
    basis.tensor_dim(n, trunc.dimension_cap)?;
    let mut single = vec![Complex64::new(0.0, 0.0); basis.dim()];
    for k in 0..modes.len() {
        single[basis.index(k, 0, 0)] = Complex64::new(modes.z(k).sqrt(), 0.0);
    }
    Ok(StateVector { amplitudes: StateVector::product(&single, n), oscillators: n, single_dim: basis.dim(), norm_deficit: 0.0 })
}

fn coherent_factor(beta: Complex64, levels: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(levels);
    let mut term = Complex64::new((-0.5 * beta.norm_sqr()).exp(), 0.0);
    for n in 0..levels {
        out.push(term);
        term *= beta / ((n + 1) as f64).sqrt();
    }
    out
}

/// Product of single-oscillator coherent states with amplitudes `α/√N`.
pub fn coherent_state(
    modes: &ModeSet,
    alpha: &CoherentSpec,
    n: usize,
    trunc: &TruncationSpec,
) -> Result<StateVector, FockError> {
    alpha.amplitudes().check_domain(modes)?;
    let basis = OscillatorBasis::new(modes.len(), trunc);
    basis.tensor_dim(n, trunc.dimension_cap)?;
    let scale = 1.0 / (n as f64).sqrt();
    let mut single = vec![Complex64::new(0.0, 0.0); basis.dim()];
    for k in 0..modes.len() {
        let plus = coherent_factor(alpha.amplitudes().get(k, Helicity::Plus) * scale, basis.levels());
        let minus = coherent_factor(alpha.amplitudes().get(k, Helicity::Minus) * scale, basis.levels());
        for (p, vp) in plus.iter().enumerate() {
            for (m, vm) in minus.iter().enumerate() {
                single[basis.index(k, p, m)] = vp * vm * modes.z(k).sqrt();
            }
        }
    }
    let mut state =
        StateVector { amplitudes: StateVector::product(&single, n), oscillators: n, single_dim: basis.dim(), norm_deficit: 0.0 };
    state.norm_deficit = (1.0 - state.norm_sqr()).max(0.0);
    if state.norm_deficit > trunc.norm_tolerance {
        return Err(FockError::TruncationBreach { deficit: state.norm_deficit, tolerance: trunc.norm_tolerance });
    }
    Ok(state)
}

/// `⟨ψ|A|ψ⟩` for an operator on the full N-oscillator space.
pub fn expectation(state: &StateVector, op: &SparseMatrix) -> Result<Complex64, FockError> {
    if op.cols() != state.amplitudes.len() || op.rows() != op.cols() {
        return Err(FockError::DimensionMismatch { expected: state.amplitudes.len(), got: op.cols() });
    }
    let image = op.apply(&state.amplitudes);
    Ok(state.amplitudes.iter().zip(&image).map(|(a, b)| a.conj() * b).sum())
}

/// Field average per helicity in a coherent state: the closed form next to
/// the value computed on the truncated space.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FieldAverage {
    pub analytic: [Complex64; 2],
    pub exact: [Complex64; 2],
    pub norm_deficit: f64,
}

impl FieldAverage {
    pub fn max_deviation(&self) -> f64 {
        (0..2).map(|i| (self.analytic[i] - self.exact[i]).norm()).fold(0.0, f64::max)
    }
}

/// `Σ_k z_k α(k,s) e^{−iω_k t}` per helicity, and the normalized expectation
/// of the lifted smeared annihilator that produces it.
pub fn coherent_field_average(
    modes: &ModeSet,
    alpha: &CoherentSpec,
    n: usize,
    t: f64,
    trunc: &TruncationSpec,
) -> Result<FieldAverage, FockError> {
    let state = coherent_state(modes, alpha, n, trunc)?;
    let norm = state.norm_sqr();
    let mut analytic = [Complex64::new(0.0, 0.0); 2];
    let mut exact = analytic;
    for s in Helicity::ALL {
        let i = s.index();
        analytic[i] = (0..modes.len())
            .map(|k| alpha.amplitudes().get(k, s) * Complex64::from_polar(modes.z(k), -modes.omega(k) * t))
            .sum();
        // conj f(k,s) = e^{−iω t} on helicity s only
        let f = ModeAmplitudes::from_fn(modes.len(), |k, h| {
            if h == s {
                Complex64::from_polar(1.0, modes.omega(k) * t)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        let op = smeared(&f, SmearKind::Annihilate, modes, trunc)?.matrix;
        exact[i] = state.inner(&state.apply_lifted(&op, None)?) / norm;
    }
    Ok(FieldAverage { analytic, exact, norm_deficit: state.norm_deficit })
}
