//! Numerical laboratory for non-canonically quantized radiation fields.
//!
//! Modules, bottom-up:
//!
//! * [`model`]: mode sets, vacuum profiles, amplitude maps, `⟨f|g⟩_Z`.
//! * [`combinatorics`]: coincidence classes of oscillator tuples and the
//!   excitation statistics of multi-oscillator coherent states.
//! * [`fockspace`]: the non-CCR algebra on truncated single- and
//!   multi-oscillator Fock spaces, vacuum averages and their large-N limit.
//! * [`amplitude`]: vacuum survival amplitude of a two-level atom, canonical
//!   and non-canonical, by three independent routes.
//! * [`propagator`]: the vacuum-smeared Jordan-Pauli function and radiation
//!   observables with the infrared study.

pub mod amplitude;
pub mod combinatorics;
pub mod fockspace;
pub mod model;
pub mod output;
pub mod propagator;
pub mod quadrature;
pub mod sparse;

pub use model::{Helicity, ModeAmplitudes, ModeSet, VacuumProfile};
