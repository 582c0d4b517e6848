use std::collections::HashMap;

use num_complex::Complex64;
use num_traits::ToPrimitive;
use rayon::prelude::*;

use super::operators::{smeared, SmearKind};
use super::states::vacuum_state;
use super::{FockError, TruncationSpec};
use crate::combinatorics::{class_probabilities, rational_to_f64, CoincidenceClass};
use crate::model::{z_inner_product, Helicity, ModeAmplitudes, ModeSet};

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Both evaluations of `⟨O| a(f₁)…a(f_m) a(g₁)†…a(g_m)† |O⟩`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VacuumExpectation {
    pub value: Complex64,
    pub tensor: Complex64,
    pub class_sum: Complex64,
}

fn check_inputs(fs: &[ModeAmplitudes], gs: &[ModeAmplitudes], modes: &ModeSet, n: usize) -> Result<(), FockError> {
    if fs.is_empty() || fs.len() != gs.len() {
        return Err(FockError::WavepacketCount(fs.len(), gs.len()));
    }
    if n == 0 {
        return Err(FockError::NoOscillators);
    }
    for f in fs.iter().chain(gs) {
        f.check_domain(modes)?;
    }
    Ok(())
}

/// Ryser's formula; the permanent of the empty matrix is 1.
pub fn permanent(a: &[Vec<Complex64>]) -> Complex64 {
    let n = a.len();
    if n == 0 {
        return Complex64::new(1.0, 0.0);
    }
    let mut total = ZERO;
    for subset in 1u64..(1 << n) {
        let mut prod = Complex64::new(1.0, 0.0);
        for row in a {
            let s: Complex64 = (0..n).filter(|j| subset >> j & 1 == 1).map(|j| row[j]).sum();
            prod *= s;
        }
        let sign = if (n as u32 - subset.count_ones()) % 2 == 0 { 1.0 } else { -1.0 };
        total += prod * sign;
    }
    total
}

/// Permanent of the Gram matrix `G_ij = ⟨fᵢ|gⱼ⟩_Z`: the `N → ∞` limit of
/// the vacuum expectation.
pub fn thermodynamic_expectation(
    fs: &[ModeAmplitudes],
    gs: &[ModeAmplitudes],
    modes: &ModeSet,
) -> Result<Complex64, FockError> {
    check_inputs(fs, gs, modes, 1)?;
    let gram = fs
        .iter()
        .map(|f| gs.iter().map(|g| z_inner_product(f, g, modes)).collect::<Result<Vec<_>, _>>())
        .collect::<Result<Vec<_>, _>>()?;
    Ok(permanent(&gram))
}

/// Set partitions of `{0..m}` as restricted growth strings.
fn set_partitions(m: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, m: usize, out: &mut Vec<Vec<usize>>) {
        if prefix.len() == m {
            out.push(prefix.clone());
            return;
        }
        let next = prefix.iter().max().map_or(0, |&b| b + 1);
        for b in 0..=next {
            prefix.push(b);
            go(prefix, m, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::with_capacity(m), m, &mut out);
    out
}

fn permutations(m: usize) -> Vec<Vec<usize>> {
    if m == 0 {
        return vec![Vec::new()];
    }
    let mut out = Vec::new();
    for p in permutations(m - 1) {
        for pos in 0..m {
            let mut q = p.clone();
            q.insert(pos, m - 1);
            out.push(q);
        }
    }
    out
}

/// Contraction formula: each annihilator `i` pairs with creator `σ(i)` on a
/// shared oscillator; grouping the oscillator assignments by the set
/// partition they induce gives
///
/// ```text
/// Σ_π w(π) Σ_σ ∏_{B∈π} Σ_k z_k ∏_{i∈B} h_{i,σ(i)}(k),   h_ij(k) = Σ_s conj fᵢ(k,s) gⱼ(k,s)
/// ```
///
/// with `w(π) = N(N−1)…(N−|π|+1) / N^m`, the class probability of `π`'s
/// block sizes divided by the number of set partitions in that class.
pub fn vacuum_expectation_class_sum(
    fs: &[ModeAmplitudes],
    gs: &[ModeAmplitudes],
    modes: &ModeSet,
    n: usize,
) -> Result<Complex64, FockError> {
    check_inputs(fs, gs, modes, n)?;
    let m = fs.len();
    let table = class_probabilities(n as u64, m as u32)?;
    let h: Vec<Vec<Vec<Complex64>>> = fs
        .iter()
        .map(|f| {
            gs.iter()
                .map(|g| {
                    (0..modes.len())
                        .map(|k| Helicity::ALL.iter().map(|&s| f.get(k, s).conj() * g.get(k, s)).sum())
                        .collect()
                })
                .collect()
        })
        .collect();
    let perms = permutations(m);
    let mut total = ZERO;
    for rgs in set_partitions(m) {
        let blocks = rgs.iter().max().unwrap() + 1;
        let mut sizes = vec![0u32; blocks];
        for &b in &rgs {
            sizes[b] += 1;
        }
        sizes.sort_unstable_by(|a, b| b.cmp(a));
        let class = CoincidenceClass::new(sizes)?;
        let weight = rational_to_f64(table.probability(&class).expect("every partition is tabulated"))
            / class.set_partition_count().to_f64().unwrap_or(f64::INFINITY);
        if weight == 0.0 {
            continue;
        }
        let mut inner = ZERO;
        for sigma in &perms {
            let mut prod = Complex64::new(1.0, 0.0);
            for b in 0..blocks {
                let block: Complex64 = (0..modes.len())
                    .map(|k| {
                        let mut p = Complex64::new(modes.z(k), 0.0);
                        for i in (0..m).filter(|&i| rgs[i] == b) {
                            p *= h[i][sigma[i]][k];
                        }
                        p
                    })
                    .sum();
                prod *= block;
            }
            inner += prod;
        }
        total += inner * weight;
    }
    Ok(total)
}

fn compositions(n: usize, parts: usize) -> Vec<Vec<usize>> {
    if parts == 1 {
        return vec![vec![n]];
    }
    let mut out = Vec::new();
    for first in (0..=n).rev() {
        for mut rest in compositions(n - first, parts - 1) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

fn binomial_f64(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

type FockMap = HashMap<Vec<u8>, Complex64>;

/// Applies `(1/√N) Σ_{o,s} coef(o,s) a†_{o,s}` to a sparse Fock state over
/// `2N` (oscillator, helicity) slots, dropping anything above `n_max`.
fn create(state: &FockMap, coef: &[Complex64], n_max: u8, scale: f64) -> FockMap {
    let mut out = FockMap::new();
    for (occ, &amp) in state {
        for (slot, &c) in coef.iter().enumerate() {
            if c == ZERO || occ[slot] >= n_max {
                continue;
            }
            let mut next = occ.clone();
            next[slot] += 1;
            *out.entry(next).or_insert(ZERO) += amp * c * (f64::from(occ[slot] + 1).sqrt() * scale);
        }
    }
    out
}

fn block_overlap(
    fs: &[ModeAmplitudes],
    gs: &[ModeAmplitudes],
    config: &[usize],
    n_max: u8,
) -> Complex64 {
    let n = config.len();
    let scale = 1.0 / (n as f64).sqrt();
    let coefs = |f: &ModeAmplitudes| -> Vec<Complex64> {
        config.iter().flat_map(|&k| Helicity::ALL.map(|s| f.get(k, s))).collect()
    };
    let build = |packets: &[ModeAmplitudes]| {
        let mut state = FockMap::from([(vec![0u8; 2 * n], Complex64::new(1.0, 0.0))]);
        for p in packets {
            state = create(&state, &coefs(p), n_max, scale);
        }
        state
    };
    let bra = build(fs);
    let ket = build(gs);
    ket.iter().filter_map(|(occ, &v)| bra.get(occ).map(|&b| b.conj() * v)).sum()
}

/// Evaluates the expectation with truncated ladder operators in the Fock
/// basis. Mode labels are conserved, so the vacuum splits into blocks of
/// fixed mode configuration; configurations sharing the same mode counts
/// contribute equally and are weighted by multinomial coefficients.
pub fn vacuum_expectation_tensor(
    fs: &[ModeAmplitudes],
    gs: &[ModeAmplitudes],
    modes: &ModeSet,
    n: usize,
    trunc: &TruncationSpec,
) -> Result<Complex64, FockError> {
    check_inputs(fs, gs, modes, n)?;
    let m = fs.len();
    if trunc.n_max < m {
        return Err(FockError::TruncationInsufficient { n_max: trunc.n_max, m });
    }
    let comps = compositions(n, modes.len());
    let per_block = binomial_f64(2 * n + m - 1, m);
    let work = comps.len() as f64 * per_block;
    if work > trunc.dimension_cap as f64 {
        return Err(FockError::DimensionCap { dimension: work as u128, cap: trunc.dimension_cap });
    }
    let n_max = trunc.n_max.min(u8::MAX as usize) as u8;
    let ln_n_fact = libm::lgamma(n as f64 + 1.0);
    let terms: Vec<Complex64> = comps
        .par_iter()
        .map(|counts| {
            let mut ln_w = ln_n_fact;
            let mut config = Vec::with_capacity(n);
            for (k, &c) in counts.iter().enumerate() {
                ln_w += c as f64 * modes.z(k).ln() - libm::lgamma(c as f64 + 1.0);
                config.extend(std::iter::repeat_n(k, c));
            }
            block_overlap(fs, gs, &config, n_max) * ln_w.exp()
        })
        .collect();
    Ok(terms.into_iter().sum())
}

/// The same expectation on the full dense N-oscillator state vector; only
/// feasible for a handful of oscillators.
pub fn vacuum_expectation_dense(
    fs: &[ModeAmplitudes],
    gs: &[ModeAmplitudes],
    modes: &ModeSet,
    n: usize,
    trunc: &TruncationSpec,
) -> Result<Complex64, FockError> {
    check_inputs(fs, gs, modes, n)?;
    if trunc.n_max < fs.len() {
        return Err(FockError::TruncationInsufficient { n_max: trunc.n_max, m: fs.len() });
    }
    let vac = vacuum_state(modes, n, trunc)?;
    let build = |packets: &[ModeAmplitudes]| -> Result<_, FockError> {
        let mut state = vac.clone();
        for p in packets {
            let op = smeared(p, SmearKind::Create, modes, trunc)?.matrix;
            state = state.apply_lifted(&op, None)?;
        }
        Ok(state)
    };
    Ok(build(fs)?.inner(&build(gs)?))
}

/// `⟨O| a(f₁)…a(f_m) a(g₁)†…a(g_m)† |O⟩` on N oscillators, evaluated by the
/// Fock-basis route and by the contraction formula; fails if they differ by
/// more than `1e-12` relative to the value's scale.
pub fn vacuum_expectation(
    fs: &[ModeAmplitudes],
    gs: &[ModeAmplitudes],
    modes: &ModeSet,
    n: usize,
    trunc: &TruncationSpec,
) -> Result<VacuumExpectation, FockError> {
    let tensor = vacuum_expectation_tensor(fs, gs, modes, n, trunc)?;
    let class_sum = vacuum_expectation_class_sum(fs, gs, modes, n)?;
    if (tensor - class_sum).norm() > 1e-12 * class_sum.norm().max(1.0) {
        return Err(FockError::PathsDisagree { tensor, class_sum });
    }
    Ok(VacuumExpectation { value: class_sum, tensor, class_sum })
}

/// `2 Σ_k z_k e^{iω_k (t_x − t_y)}`: the coincidence-finite vacuum scalar
/// product, reduced to its time dependence. The spatial dependence lives in
/// the propagator module.
pub fn uv_scalar_product(modes: &ModeSet, t_x: f64, t_y: f64) -> Complex64 {
    let dt = t_x - t_y;
    modes.modes().iter().map(|m| Complex64::from_polar(2.0 * m.z, m.omega * dt)).sum()
}
