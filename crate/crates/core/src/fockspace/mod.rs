//! Exact finite-dimensional representation of the non-CCR algebra.
//!
//! The single-oscillator space is spanned by `|k, n₊, n₋⟩`: a mode label and
//! one truncated Fock factor per helicity. The annihilator of mode `k` and
//! helicity `s` is `a(k,s) = |k⟩⟨k| ⊗ a_s`, so
//!
//! ```text
//! [a(k,s), a(k',s')†] = δ_ss' δ_kk' I_k,    I_k = |k⟩⟨k| ⊗ 1
//! ```
//!
//! with `I_k` central. N-oscillator operators are lifted as
//! `(1/√N) Σ_j 1 ⊗ … ⊗ a ⊗ … ⊗ 1`.
//!
//! Discrete transcription, kept in one place:
//!
//! | continuum                          | here                                   |
//! |------------------------------------|----------------------------------------|
//! | `∫ dΓ(k) Z(k) (…)`                 | `Σ_k z_k (…)`                          |
//! | `⟨k|k'⟩ = δ_Γ(k,k')`               | `⟨k|k'⟩ = δ_kk'` (orthonormal kets)    |
//! | `|O⟩ = ∫ dΓ O(k) |k,0,0⟩`          | `Σ_k √z_k |k,0,0⟩`                     |
//! | `a(f) = Σ_s ∫ dΓ conj f(k,s) a(k,s)` | `Σ_{k,s} conj f(k,s) a(k,s)`         |
//!
//! All weight sits in the vacuum amplitudes `√z_k`; smearing sums carry the
//! bare wavepacket values. With these conventions
//! `⟨O|a(f) a(g)†|O⟩ = Σ_s Σ_k z_k conj f g = ⟨f|g⟩_Z`.
//!
//! Only product states and permutation-symmetric operators appear, so no
//! explicit symmetrization of the multi-oscillator space is needed.

mod operators;
mod states;
mod vacuum_average;

pub use operators::{
    annihilator, compressed_commutator, creator, displacement_matrix, displacement_operator,
    interior_commutator_defect, lift, lifted_commutator_compressed, number_operator, projector, smeared,
    DisplacementOperator, ModeOperator, OperatorKind, SmearKind,
};
pub use states::{coherent_field_average, coherent_state, expectation, vacuum_state, FieldAverage, StateVector};
pub use vacuum_average::{
    permanent, thermodynamic_expectation, uv_scalar_product, vacuum_expectation, vacuum_expectation_class_sum,
    vacuum_expectation_dense, vacuum_expectation_tensor, VacuumExpectation,
};

use thiserror::Error;

use crate::combinatorics::CombinatoricsError;
use crate::model::ModelError;

/// Default cap on the number of amplitudes of a multi-oscillator object.
pub const DEFAULT_DIMENSION_CAP: usize = 1 << 22;

#[derive(Debug, Error)]
pub enum FockError {
    #[error("mode index {0} out of range for {1} modes")]
    ModeOutOfRange(usize, usize),
    #[error("dimension {dimension} exceeds cap {cap}")]
    DimensionCap { dimension: u128, cap: usize },
    #[error("truncation norm deficit {deficit:e} exceeds tolerance {tolerance:e}")]
    TruncationBreach { deficit: f64, tolerance: f64 },
    #[error("truncation n_max = {n_max} cannot hold {m} excitations")]
    TruncationInsufficient { n_max: usize, m: usize },
    #[error("need at least one oscillator")]
    NoOscillators,
    #[error("need the same number (>= 1) of bra and ket wavepackets, got {0} and {1}")]
    WavepacketCount(usize, usize),
    #[error("operator acts on dimension {got}, expected {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("tensor and class-sum evaluations disagree: {tensor} vs {class_sum}")]
    PathsDisagree { tensor: num_complex::Complex64, class_sum: num_complex::Complex64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Combinatorics(#[from] CombinatoricsError),
}

/// Truncation of each helicity factor to `0..=n_max` quanta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncationSpec {
    pub n_max: usize,
    /// Largest accepted norm lost to truncation.
    pub norm_tolerance: f64,
    pub dimension_cap: usize,
}

impl Default for TruncationSpec {
    fn default() -> Self {
        Self { n_max: 4, norm_tolerance: 1e-8, dimension_cap: DEFAULT_DIMENSION_CAP }
    }
}

impl TruncationSpec {
    pub fn with_n_max(n_max: usize) -> Self {
        assert!(n_max >= 1, "n_max must be at least 1");
        Self { n_max, ..Self::default() }
    }

    /// Number of levels per helicity factor.
    pub fn levels(&self) -> usize {
        self.n_max + 1
    }
}

/// Index arithmetic of the single-oscillator basis `|k, n₊, n₋⟩`:
/// mode-major, then `n₊`, then `n₋`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OscillatorBasis {
    pub modes: usize,
    pub n_max: usize,
}

impl OscillatorBasis {
    pub fn new(modes: usize, trunc: &TruncationSpec) -> Self {
        Self { modes, n_max: trunc.n_max }
    }

    pub fn levels(&self) -> usize {
        self.n_max + 1
    }

    pub fn dim(&self) -> usize {
        self.modes * self.levels() * self.levels()
    }

    pub fn index(&self, k: usize, n_plus: usize, n_minus: usize) -> usize {
        let l = self.levels();
        (k * l + n_plus) * l + n_minus
    }

    /// Inverse of [`OscillatorBasis::index`].
    pub fn label(&self, idx: usize) -> (usize, usize, usize) {
        let l = self.levels();
        (idx / (l * l), (idx / l) % l, idx % l)
    }

    /// Dimension of the N-fold tensor power, refusing anything above `cap`.
    pub fn tensor_dim(&self, n: usize, cap: usize) -> Result<usize, FockError> {
        if n == 0 {
            return Err(FockError::NoOscillators);
        }
        let d = (self.dim() as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
        if d > cap as u128 {
            return Err(FockError::DimensionCap { dimension: d, cap });
        }
        Ok(d as usize)
    }
}
