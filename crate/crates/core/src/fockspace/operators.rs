use num_complex::Complex64;

use super::{FockError, OscillatorBasis, StateVector, TruncationSpec};
use crate::model::{CoherentSpec, Helicity, ModeAmplitudes, ModeSet};
use crate::sparse::SparseMatrix;

const ONE: Complex64 = Complex64::new(1.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmearKind {
    Create,
    Annihilate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorKind {
    Annihilate,
    Create,
    Projector,
    Number,
    Smeared(SmearKind),
}

/// An operator on the truncated single-oscillator space.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeOperator {
    pub matrix: SparseMatrix,
    pub kind: OperatorKind,
    pub mode: Option<usize>,
    pub helicity: Option<Helicity>,
}

fn check_mode(modes: &ModeSet, k: usize) -> Result<(), FockError> {
    if k >= modes.len() {
        Err(FockError::ModeOutOfRange(k, modes.len()))
    } else {
        Ok(())
    }
}

fn ladder_triplets(basis: OscillatorBasis, k: usize, s: Helicity) -> Vec<(usize, usize, Complex64)> {
    let l = basis.levels();
    let mut out = Vec::new();
    for np in 0..l {
        for nm in 0..l {
            let from = basis.index(k, np, nm);
            match s {
                Helicity::Plus if np > 0 => {
                    out.push((basis.index(k, np - 1, nm), from, Complex64::new((np as f64).sqrt(), 0.0)))
                }
                Helicity::Minus if nm > 0 => {
                    out.push((basis.index(k, np, nm - 1), from, Complex64::new((nm as f64).sqrt(), 0.0)))
                }
                _ => {}
            }
        }
    }
    out
}

/// `a(k,s) = |k⟩⟨k| ⊗ a_s`.
pub fn annihilator(modes: &ModeSet, k: usize, s: Helicity, trunc: &TruncationSpec) -> Result<ModeOperator, FockError> {
    check_mode(modes, k)?;
    let basis = OscillatorBasis::new(modes.len(), trunc);
    let matrix = SparseMatrix::from_triplets(basis.dim(), basis.dim(), ladder_triplets(basis, k, s));
    Ok(ModeOperator { matrix, kind: OperatorKind::Annihilate, mode: Some(k), helicity: Some(s) })
}

pub fn creator(modes: &ModeSet, k: usize, s: Helicity, trunc: &TruncationSpec) -> Result<ModeOperator, FockError> {
    let a = annihilator(modes, k, s, trunc)?;
    Ok(ModeOperator { matrix: a.matrix.adjoint(), kind: OperatorKind::Create, ..a })
}

/// `I_k = |k⟩⟨k| ⊗ 1`.
pub fn projector(modes: &ModeSet, k: usize, trunc: &TruncationSpec) -> Result<ModeOperator, FockError> {
    check_mode(modes, k)?;
    let basis = OscillatorBasis::new(modes.len(), trunc);
    let l = basis.levels();
    let diag = (0..l * l).map(|i| {
        let idx = basis.index(k, i / l, i % l);
        (idx, idx, ONE)
    });
    let matrix = SparseMatrix::from_triplets(basis.dim(), basis.dim(), diag.collect::<Vec<_>>());
    Ok(ModeOperator { matrix, kind: OperatorKind::Projector, mode: Some(k), helicity: None })
}

/// Single-oscillator excitation number `n₊ + n₋`.
pub fn number_operator(modes: &ModeSet, trunc: &TruncationSpec) -> ModeOperator {
    let basis = OscillatorBasis::new(modes.len(), trunc);
    let diag: Vec<Complex64> = (0..basis.dim())
        .map(|i| {
            let (_, p, m) = basis.label(i);
            Complex64::new((p + m) as f64, 0.0)
        })
        .collect();
    ModeOperator {
        matrix: SparseMatrix::from_diagonal(&diag),
        kind: OperatorKind::Number,
        mode: None,
        helicity: None,
    }
}

/// `a(f) = Σ_{k,s} conj f(k,s) a(k,s)` or its adjoint
/// `a(f)† = Σ_{k,s} f(k,s) a(k,s)†`.
pub fn smeared(
    f: &ModeAmplitudes,
    kind: SmearKind,
    modes: &ModeSet,
    trunc: &TruncationSpec,
) -> Result<ModeOperator, FockError> {
    f.check_domain(modes)?;
    let basis = OscillatorBasis::new(modes.len(), trunc);
    let mut triplets = Vec::new();
    for k in 0..modes.len() {
        for s in Helicity::ALL {
            let w = f.get(k, s);
            if w == Complex64::new(0.0, 0.0) {
                continue;
            }
            for (r, c, v) in ladder_triplets(basis, k, s) {
                match kind {
                    SmearKind::Annihilate => triplets.push((r, c, v * w.conj())),
                    SmearKind::Create => triplets.push((c, r, v * w)),
                }
            }
        }
    }
    Ok(ModeOperator {
        matrix: SparseMatrix::from_triplets(basis.dim(), basis.dim(), triplets),
        kind: OperatorKind::Smeared(kind),
        mode: None,
        helicity: None,
    })
}

/// `scaling · Σ_j 1^{⊗j} ⊗ op ⊗ 1^{⊗(N-j-1)}`; `scaling` defaults to `1/√N`.
pub fn lift(op: &SparseMatrix, n: usize, scaling: Option<f64>, cap: usize) -> Result<SparseMatrix, FockError> {
    if n == 0 {
        return Err(FockError::NoOscillators);
    }
    let d = op.rows();
    let total = (d as u128).checked_pow(n as u32).unwrap_or(u128::MAX);
    if total > cap as u128 {
        return Err(FockError::DimensionCap { dimension: total, cap });
    }
    let scale = Complex64::new(scaling.unwrap_or(1.0 / (n as f64).sqrt()), 0.0);
    let mut acc = SparseMatrix::zeros(total as usize, total as usize);
    for j in 0..n {
        let left = SparseMatrix::identity(d.pow(j as u32));
        let right = SparseMatrix::identity(d.pow((n - j - 1) as u32));
        acc = acc.add(&left.kron(op).kron(&right));
    }
    Ok(acc.scale(scale))
}

/// Largest deviation of `[a(k,s), a(k',s')†] − δ_ss' δ_kk' I_k` on basis
/// states with both occupations below `n_max`, over all mode and helicity
/// pairs. On the truncation edge the identity fails by construction.
pub fn interior_commutator_defect(modes: &ModeSet, trunc: &TruncationSpec) -> Result<f64, FockError> {
    let basis = OscillatorBasis::new(modes.len(), trunc);
    let interior: Vec<usize> = (0..basis.dim())
        .filter(|&i| {
            let (_, p, m) = basis.label(i);
            p < trunc.n_max && m < trunc.n_max
        })
        .collect();
    let mut worst = 0.0f64;
    for k in 0..modes.len() {
        for s in Helicity::ALL {
            let a = annihilator(modes, k, s, trunc)?.matrix;
            for kp in 0..modes.len() {
                for sp in Helicity::ALL {
                    let ad = creator(modes, kp, sp, trunc)?.matrix;
                    let comm = a.commutator(&ad);
                    let expected = if k == kp && s == sp {
                        projector(modes, k, trunc)?.matrix
                    } else {
                        SparseMatrix::zeros(basis.dim(), basis.dim())
                    };
                    let diff = comm.sub(&expected);
                    for &col in &interior {
                        for r in 0..basis.dim() {
                            worst = worst.max(diff.get(r, col).norm());
                        }
                    }
                }
            }
        }
    }
    Ok(worst)
}

/// Positions of the `n_max` basis inside the `n_max + 1` basis, N-fold.
fn embedding(modes: usize, trunc: &TruncationSpec, n: usize) -> Vec<usize> {
    let small = OscillatorBasis { modes, n_max: trunc.n_max };
    let big = OscillatorBasis { modes, n_max: trunc.n_max + 1 };
    let single: Vec<usize> = (0..small.dim())
        .map(|i| {
            let (k, p, m) = small.label(i);
            big.index(k, p, m)
        })
        .collect();
    let mut out = vec![0usize];
    for _ in 0..n {
        out = out.iter().flat_map(|&hi| single.iter().map(move |&lo| hi * big.dim() + lo)).collect();
    }
    out
}

/// The commutator `[a(k,s), a(k',s')†]` of the untruncated algebra
/// compressed to the truncated space: computed with one extra level, then
/// projected. Equal to `δδ I_k` everywhere, edge included.
pub fn compressed_commutator(
    modes: &ModeSet,
    (k, s): (usize, Helicity),
    (kp, sp): (usize, Helicity),
    trunc: &TruncationSpec,
) -> Result<SparseMatrix, FockError> {
    let wider = TruncationSpec { n_max: trunc.n_max + 1, ..*trunc };
    let a = annihilator(modes, k, s, &wider)?.matrix;
    let ad = creator(modes, kp, sp, &wider)?.matrix;
    Ok(a.commutator(&ad).submatrix(&embedding(modes.len(), trunc, 1)))
}

/// Commutator of the lifted (`1/√N`) operators, compressed to the truncated
/// N-oscillator space the same way as [`compressed_commutator`].
pub fn lifted_commutator_compressed(
    modes: &ModeSet,
    (k, s): (usize, Helicity),
    (kp, sp): (usize, Helicity),
    n: usize,
    trunc: &TruncationSpec,
) -> Result<SparseMatrix, FockError> {
    let wider = TruncationSpec { n_max: trunc.n_max + 1, ..*trunc };
    let a = lift(&annihilator(modes, k, s, &wider)?.matrix, n, None, wider.dimension_cap)?;
    let ad = lift(&creator(modes, kp, sp, &wider)?.matrix, n, None, wider.dimension_cap)?;
    Ok(a.commutator(&ad).submatrix(&embedding(modes.len(), trunc, n)))
}

/// Generalized Laguerre polynomial `L_n^{(a)}(x)`.
fn laguerre(n: usize, a: f64, x: f64) -> f64 {
    let (mut prev, mut cur) = (1.0, 1.0 + a - x);
    if n == 0 {
        return prev;
    }
    for k in 1..n {
        let kf = k as f64;
        let next = ((2.0 * kf + 1.0 + a - x) * cur - (kf + a) * prev) / (kf + 1.0);
        prev = cur;
        cur = next;
    }
    cur
}

/// Exact matrix elements `⟨m|exp(β a† − β̄ a)|n⟩` for `m, n < levels`.
pub fn displacement_matrix(beta: Complex64, levels: usize) -> Vec<Vec<Complex64>> {
    let x = beta.norm_sqr();
    let damp = (-0.5 * x).exp();
    let ln_fact: Vec<f64> = (0..levels).map(|n| libm::lgamma(n as f64 + 1.0)).collect();
    let mut out = vec![vec![Complex64::new(0.0, 0.0); levels]; levels];
    for (m, row) in out.iter_mut().enumerate() {
        for (n, cell) in row.iter_mut().enumerate() {
            *cell = if m >= n {
                let d = m - n;
                let ratio = (0.5 * (ln_fact[n] - ln_fact[m])).exp();
                beta.powu(d as u32) * (ratio * damp * laguerre(n, d as f64, x))
            } else {
                let d = n - m;
                let ratio = (0.5 * (ln_fact[m] - ln_fact[n])).exp();
                (-beta.conj()).powu(d as u32) * (ratio * damp * laguerre(m, d as f64, x))
            };
        }
    }
    out
}

/// Product of identical single-oscillator displacement blocks over N
/// oscillators.
#[derive(Debug, Clone, PartialEq)]
pub struct DisplacementOperator {
    pub single: SparseMatrix,
    pub oscillators: usize,
}

impl DisplacementOperator {
    pub fn adjoint(&self) -> Self {
        Self { single: self.single.adjoint(), oscillators: self.oscillators }
    }

    pub fn apply(&self, state: &StateVector) -> StateVector {
        let mut amps = state.amplitudes.clone();
        for slot in 0..self.oscillators {
            amps = apply_to_slot(&self.single, &amps, self.oscillators, slot);
        }
        StateVector { amplitudes: amps, oscillators: state.oscillators, single_dim: state.single_dim, norm_deficit: 0.0 }
    }

    /// The full N-fold tensor product, when it fits under `cap` entries per
    /// side.
    pub fn matrix(&self, cap: usize) -> Result<SparseMatrix, FockError> {
        let d = self.single.rows() as u128;
        let total = d.checked_pow(self.oscillators as u32).unwrap_or(u128::MAX);
        if total > cap as u128 {
            return Err(FockError::DimensionCap { dimension: total, cap });
        }
        let mut acc = SparseMatrix::identity(1);
        for _ in 0..self.oscillators {
            acc = acc.kron(&self.single);
        }
        Ok(acc)
    }
}

/// Applies a single-oscillator operator to tensor slot `slot` (0 is the most
/// significant) of an N-oscillator amplitude vector.
pub(crate) fn apply_to_slot(op: &SparseMatrix, amps: &[Complex64], n: usize, slot: usize) -> Vec<Complex64> {
    let d = op.rows();
    let right = d.pow((n - slot - 1) as u32);
    let left = amps.len() / (d * right);
    let mut out = vec![Complex64::new(0.0, 0.0); amps.len()];
    for l in 0..left {
        for row in 0..d {
            for (col, v) in op.row(row) {
                let src = (l * d + col) * right;
                let dst = (l * d + row) * right;
                for r in 0..right {
                    out[dst + r] += v * amps[src + r];
                }
            }
        }
    }
    out
}

/// Norm lost when a coherent amplitude `beta` is cut at `levels` levels.
pub(crate) fn coherent_deficit(beta: Complex64, levels: usize) -> f64 {
    let x = beta.norm_sqr();
    let mut term = (-x).exp();
    let mut kept = 0.0;
    for n in 0..levels {
        kept += term;
        term *= x / (n + 1) as f64;
    }
    (1.0 - kept).max(0.0)
}

/// Worst-case norm deficit over modes of an N-oscillator coherent state.
pub(crate) fn product_deficit(modes: &ModeSet, amps: &ModeAmplitudes, n: usize, trunc: &TruncationSpec) -> f64 {
    let scale = 1.0 / (n as f64).sqrt();
    let per_oscillator = modes
        .modes()
        .iter()
        .zip(&amps.0)
        .map(|(mode, [p, m])| {
            let kept = (1.0 - coherent_deficit(p * scale, trunc.levels()))
                * (1.0 - coherent_deficit(m * scale, trunc.levels()));
            mode.z * (1.0 - kept)
        })
        .sum::<f64>();
    1.0 - (1.0 - per_oscillator).powi(n as i32)
}

/// `𝒟(β) = ⊗_N Σ_k |k⟩⟨k| ⊗ D(β(k,+)/√N) ⊗ D(β(k,−)/√N)`.
pub fn displacement_operator(
    beta: &CoherentSpec,
    modes: &ModeSet,
    n: usize,
    trunc: &TruncationSpec,
) -> Result<DisplacementOperator, FockError> {
    if n == 0 {
        return Err(FockError::NoOscillators);
    }
    beta.amplitudes().check_domain(modes)?;
    let deficit = product_deficit(modes, beta.amplitudes(), n, trunc);
    if deficit > trunc.norm_tolerance {
        return Err(FockError::TruncationBreach { deficit, tolerance: trunc.norm_tolerance });
    }
    let basis = OscillatorBasis::new(modes.len(), trunc);
    let l = basis.levels();
    let scale = 1.0 / (n as f64).sqrt();
    let mut triplets = Vec::new();
    for k in 0..modes.len() {
        let dp = displacement_matrix(beta.amplitudes().get(k, Helicity::Plus) * scale, l);
        let dm = displacement_matrix(beta.amplitudes().get(k, Helicity::Minus) * scale, l);
        for (p1, row_p) in dp.iter().enumerate() {
            for (p2, &vp) in row_p.iter().enumerate() {
                for (m1, row_m) in dm.iter().enumerate() {
                    for (m2, &vm) in row_m.iter().enumerate() {
                        triplets.push((basis.index(k, p1, m1), basis.index(k, p2, m2), vp * vm));
                    }
                }
            }
        }
    }
    basis.tensor_dim(n, trunc.dimension_cap)?;
    Ok(DisplacementOperator {
        single: SparseMatrix::from_triplets(basis.dim(), basis.dim(), triplets),
        oscillators: n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::z_inner_product;

    fn modes3() -> ModeSet {
        ModeSet::new(&[1.0, 1.5, 2.5], &[0.3, 0.5, 0.2]).unwrap()
    }

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn basis_vec(dim: usize, i: usize) -> Vec<Complex64> {
        let mut v = vec![c(0.0, 0.0); dim];
        v[i] = c(1.0, 0.0);
        v
    }

    #[test]
    fn annihilator_kills_vacuum_and_other_modes() {
        let modes = modes3();
        let t = TruncationSpec::default();
        let b = OscillatorBasis::new(3, &t);
        let a = annihilator(&modes, 1, Helicity::Plus, &t).unwrap();
        let out = a.matrix.apply(&basis_vec(b.dim(), b.index(1, 0, 0)));
        assert!(out.iter().all(|x| x.norm() == 0.0));
        let out = a.matrix.apply(&basis_vec(b.dim(), b.index(0, 1, 0)));
        assert!(out.iter().all(|x| x.norm() == 0.0));
        let out = a.matrix.apply(&basis_vec(b.dim(), b.index(1, 3, 2)));
        assert_eq!(out[b.index(1, 2, 2)], c(3f64.sqrt(), 0.0));
        assert!(matches!(annihilator(&modes, 3, Helicity::Plus, &t), Err(FockError::ModeOutOfRange(3, 3))));
    }

    #[test]
    fn creator_is_adjoint_and_projector_idempotent() {
        let modes = modes3();
        let t = TruncationSpec::default();
        let a = annihilator(&modes, 2, Helicity::Minus, &t).unwrap();
        let ad = creator(&modes, 2, Helicity::Minus, &t).unwrap();
        assert_eq!(a.matrix.adjoint(), ad.matrix);
        let p = projector(&modes, 2, &t).unwrap().matrix;
        assert_eq!(p.matmul(&p), p);
        assert_eq!(p.adjoint(), p);
    }

    #[test]
    fn commutator_identity_away_from_edge() {
        let modes = modes3();
        let defect = interior_commutator_defect(&modes, &TruncationSpec::default()).unwrap();
        assert!(defect < 1e-12, "{defect}");
    }

    #[test]
    fn commutator_fails_on_edge() {
        let modes = modes3();
        let t = TruncationSpec::with_n_max(2);
        let b = OscillatorBasis::new(3, &t);
        let a = annihilator(&modes, 0, Helicity::Plus, &t).unwrap().matrix;
        let ad = creator(&modes, 0, Helicity::Plus, &t).unwrap().matrix;
        let edge = b.index(0, 2, 0);
        // truncated [a, a†] gives -n_max on the top level instead of 1
        assert!((a.commutator(&ad).get(edge, edge) - c(-2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn compressed_commutator_is_projector_everywhere() {
        let modes = modes3();
        let t = TruncationSpec::with_n_max(3);
        for k in 0..3 {
            for kp in 0..3 {
                for s in Helicity::ALL {
                    for sp in Helicity::ALL {
                        let cm = compressed_commutator(&modes, (k, s), (kp, sp), &t).unwrap();
                        let want = if k == kp && s == sp {
                            projector(&modes, k, &t).unwrap().matrix
                        } else {
                            SparseMatrix::zeros(cm.rows(), cm.cols())
                        };
                        assert!(cm.max_abs_diff(&want) < 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn smeared_indicator_is_ladder_operator() {
        let modes = modes3();
        let t = TruncationSpec::default();
        let f = ModeAmplitudes::indicator(3, 1, Helicity::Minus);
        let sa = smeared(&f, SmearKind::Annihilate, &modes, &t).unwrap();
        assert_eq!(sa.matrix, annihilator(&modes, 1, Helicity::Minus, &t).unwrap().matrix);
        let sc = smeared(&f, SmearKind::Create, &modes, &t).unwrap();
        assert_eq!(sc.matrix, creator(&modes, 1, Helicity::Minus, &t).unwrap().matrix);
        let zero = smeared(&ModeAmplitudes::zeros(3), SmearKind::Create, &modes, &t).unwrap();
        assert_eq!(zero.matrix.nnz(), 0);
    }

    #[test]
    fn smeared_adjointness_is_exact() {
        let modes = modes3();
        let t = TruncationSpec::with_n_max(3);
        let f = ModeAmplitudes::from_fn(3, |k, s| c(0.3 * k as f64 - 0.2, if s == Helicity::Plus { 0.7 } else { -1.1 }));
        let a = smeared(&f, SmearKind::Annihilate, &modes, &t).unwrap().matrix;
        let ad = smeared(&f, SmearKind::Create, &modes, &t).unwrap().matrix;
        assert_eq!(a.adjoint(), ad);
    }

    #[test]
    fn smeared_commutator_in_vacuum_is_z_product() {
        let modes = modes3();
        let t = TruncationSpec::with_n_max(2);
        let b = OscillatorBasis::new(3, &t);
        let f = ModeAmplitudes::from_fn(3, |k, s| c(1.0 + k as f64, if s == Helicity::Plus { 0.5 } else { 0.0 }));
        let g = ModeAmplitudes::from_fn(3, |k, s| c(0.2, k as f64 * if s == Helicity::Minus { 1.0 } else { -0.3 }));
        let a = smeared(&f, SmearKind::Annihilate, &modes, &t).unwrap().matrix;
        let ad = smeared(&g, SmearKind::Create, &modes, &t).unwrap().matrix;
        let comm = a.commutator(&ad);
        let mut vac = vec![c(0.0, 0.0); b.dim()];
        for k in 0..3 {
            vac[b.index(k, 0, 0)] = c(modes.z(k).sqrt(), 0.0);
        }
        let cv = comm.apply(&vac);
        let value: Complex64 = vac.iter().zip(&cv).map(|(x, y)| x.conj() * y).sum();
        let want = z_inner_product(&f, &g, &modes).unwrap();
        assert!((value - want).norm() < 1e-14);
    }

    #[test]
    fn lift_single_oscillator_is_identity_map() {
        let modes = modes3();
        let t = TruncationSpec::with_n_max(2);
        let a = annihilator(&modes, 0, Helicity::Plus, &t).unwrap().matrix;
        assert_eq!(lift(&a, 1, None, 1 << 20).unwrap(), a);
        assert!(matches!(lift(&a, 6, None, 1 << 20), Err(FockError::DimensionCap { .. })));
    }

    #[test]
    fn lifted_commutator_is_averaged_projector_and_central() {
        let modes = ModeSet::new(&[1.0, 2.0], &[0.4, 0.6]).unwrap();
        let t = TruncationSpec::with_n_max(2);
        let n = 2;
        let cap = 1 << 22;
        let p1 = lift(&projector(&modes, 1, &t).unwrap().matrix, n, Some(1.0 / n as f64), cap).unwrap();
        let comm = lifted_commutator_compressed(&modes, (1, Helicity::Minus), (1, Helicity::Minus), n, &t).unwrap();
        assert!(comm.max_abs_diff(&p1) < 1e-12);
        let off = lifted_commutator_compressed(&modes, (1, Helicity::Minus), (0, Helicity::Minus), n, &t).unwrap();
        assert!(off.max_abs() < 1e-12);
        for k in 0..2 {
            for s in Helicity::ALL {
                let a = lift(&annihilator(&modes, k, s, &t).unwrap().matrix, n, None, cap).unwrap();
                assert!(comm.commutator(&a).max_abs() < 1e-12);
                assert!(comm.commutator(&a.adjoint()).max_abs() < 1e-12);
            }
        }
    }

    #[test]
    fn displacement_matrix_matches_series_exponential() {
        // oracle: Taylor series of exp(β a† − β̄ a) at a much larger truncation
        let beta = c(0.4, -0.3);
        let big = 40;
        let mut gen = vec![vec![c(0.0, 0.0); big]; big];
        for n in 1..big {
            gen[n][n - 1] = beta * (n as f64).sqrt();
            gen[n - 1][n] = -beta.conj() * (n as f64).sqrt();
        }
        let mut term: Vec<Vec<Complex64>> = (0..big).map(|i| (0..big).map(|j| c((i == j) as u8 as f64, 0.0)).collect()).collect();
        let mut sum = term.clone();
        for order in 1..60 {
            let mut next = vec![vec![c(0.0, 0.0); big]; big];
            for i in 0..big {
                for k in 0..big {
                    if term[i][k].norm() == 0.0 {
                        continue;
                    }
                    for j in 0..big {
                        next[i][j] += term[i][k] * gen[k][j] / order as f64;
                    }
                }
            }
            term = next;
            for i in 0..big {
                for j in 0..big {
                    sum[i][j] += term[i][j];
                }
            }
        }
        let d = displacement_matrix(beta, 8);
        for m in 0..8 {
            for n in 0..8 {
                assert!((d[m][n] - sum[m][n]).norm() < 1e-13, "({m},{n})");
            }
        }
    }

    #[test]
    fn displacement_zero_is_identity() {
        let modes = modes3();
        let t = TruncationSpec::with_n_max(3);
        let d = displacement_operator(&CoherentSpec(ModeAmplitudes::zeros(3)), &modes, 2, &t).unwrap();
        assert!(d.single.max_abs_diff(&SparseMatrix::identity(d.single.rows())) < 1e-15);
    }

    #[test]
    fn displacement_breach_is_reported() {
        let modes = modes3();
        let t = TruncationSpec::with_n_max(2);
        let big = CoherentSpec(ModeAmplitudes::constant(3, c(2.0, 0.0)));
        assert!(matches!(displacement_operator(&big, &modes, 1, &t), Err(FockError::TruncationBreach { .. })));
    }

    #[test]
    fn slot_application_matches_kron() {
        let modes = ModeSet::new(&[1.0, 2.0], &[0.5, 0.5]).unwrap();
        let t = TruncationSpec::with_n_max(1);
        let a = annihilator(&modes, 1, Helicity::Plus, &t).unwrap().matrix;
        let d = a.rows();
        let v: Vec<Complex64> = (0..d * d * d).map(|i| c(i as f64 * 0.01, (i % 7) as f64)).collect();
        let full = SparseMatrix::identity(d).kron(&a).kron(&SparseMatrix::identity(d));
        let want = full.apply(&v);
        let got = apply_to_slot(&a, &v, 3, 1);
        for (x, y) in want.iter().zip(&got) {
            assert!((x - y).norm() < 1e-14);
        }
    }
}
