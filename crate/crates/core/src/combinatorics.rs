//! Coincidence classes of oscillator index tuples and the excitation
//! statistics of N-oscillator coherent states.
//!
//! Two different counting problems live here and share the same class
//! labels (integer partitions of `m`):
//!
//! * ordered tuples `(A, …, Z) ∈ {1..N}^m` grouped by which coordinates
//!   coincide. These weight the contraction terms of multi-photon vacuum
//!   averages ([`class_probabilities`]).
//! * non-decreasing tuples `1 ≤ j₁ ≤ … ≤ j_m ≤ N`, i.e. ways to hand `m`
//!   excitations to `N` oscillators ([`count_occupancy`]).
//!
//! Counts and probabilities of the first kind are exact rationals.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use num_bigint::{BigInt, BigUint};
use num_rational::BigRational;
use num_traits::{One, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{CoherentSpec, ModeSet, ModelError};
use crate::output::{fmt_f64, CsvError, CsvTable};

/// Extra Poisson coefficients kept beyond `m_max` in generating polynomials.
pub const GUARD_BAND: usize = 8;

#[derive(Debug, Error)]
pub enum CombinatoricsError {
    #[error("invalid partition {0:?}: parts must be positive and non-increasing")]
    InvalidPartition(Vec<u32>),
    #[error("tuple length m must be at least {min}, got {got}")]
    TupleLength { min: u32, got: u32 },
    #[error("oscillator count must be at least 1")]
    NoOscillators,
    #[error("oscillator distribution sums to {0}, expected exactly 1")]
    NotNormalized(String),
    #[error("P(X_m) = 0 for m = {0}: the conditional probability is undefined")]
    UndefinedConditional(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] CsvError),
}

/// An integer partition `n₁ ≥ … ≥ n_k ≥ 1` of `m`, describing which entries
/// of an m-tuple coincide.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CoincidenceClass(Vec<u32>);

impl CoincidenceClass {
    pub fn new(parts: Vec<u32>) -> Result<Self, CombinatoricsError> {
        let valid = !parts.is_empty()
            && parts.iter().all(|&p| p >= 1)
            && parts.windows(2).all(|w| w[0] >= w[1]);
        if valid {
            Ok(Self(parts))
        } else {
            Err(CombinatoricsError::InvalidPartition(parts))
        }
    }

    /// Class of a concrete tuple, from its coordinate multiplicities.
    pub fn of_tuple<T: Ord>(tuple: &[T]) -> Self {
        let mut counts: BTreeMap<&T, u32> = BTreeMap::new();
        for x in tuple {
            *counts.entry(x).or_default() += 1;
        }
        let mut parts: Vec<u32> = counts.into_values().collect();
        parts.sort_unstable_by(|a, b| b.cmp(a));
        Self(parts)
    }

    /// The class in which all `m` coordinates differ.
    pub fn all_distinct(m: u32) -> Self {
        Self(vec![1; m as usize])
    }

    pub fn parts(&self) -> &[u32] {
        &self.0
    }

    /// Tuple length `m = Σ nᵢ`.
    pub fn m(&self) -> u32 {
        self.0.iter().sum()
    }

    /// Number of distinct coordinate values `k`.
    pub fn blocks(&self) -> u32 {
        self.0.len() as u32
    }

    /// `j = m - k`, the number of coincidences.
    pub fn coincidence_order(&self) -> u32 {
        self.m() - self.blocks()
    }

    pub fn is_all_distinct(&self) -> bool {
        self.0.iter().all(|&p| p == 1)
    }

    /// How often each part value repeats.
    fn value_multiplicities(&self) -> Vec<u32> {
        let mut out: Vec<u32> = Vec::new();
        for (i, p) in self.0.iter().enumerate() {
            if i > 0 && self.0[i - 1] == *p {
                *out.last_mut().unwrap() += 1;
            } else {
                out.push(1);
            }
        }
        out
    }

    /// Number of set partitions of `{1..m}` whose block sizes are this
    /// partition: `m! / (∏ nᵢ! ∏_v mult_v!)`.
    pub fn set_partition_count(&self) -> BigUint {
        let mut den = BigUint::one();
        for &p in &self.0 {
            den *= factorial(p as u64);
        }
        for mult in self.value_multiplicities() {
            den *= factorial(mult as u64);
        }
        factorial(self.m() as u64) / den
    }

    /// Distinct orderings of the block sizes: `k! / ∏_v mult_v!`.
    pub fn arrangement_count(&self) -> BigUint {
        let mut den = BigUint::one();
        for mult in self.value_multiplicities() {
            den *= factorial(mult as u64);
        }
        factorial(self.blocks() as u64) / den
    }
}

impl fmt::Display for CoincidenceClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|p| p.to_string()).collect();
        write!(f, "({})", parts.join(","))
    }
}

pub fn factorial(n: u64) -> BigUint {
    (1..=n).fold(BigUint::one(), |acc, i| acc * i)
}

pub fn binomial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    let k = k.min(n - k);
    let mut acc = BigUint::one();
    for i in 0..k {
        acc = acc * (n - i) / (i + 1);
    }
    acc
}

/// `N (N-1) … (N-k+1)`.
pub fn falling_factorial(n: u64, k: u64) -> BigUint {
    if k > n {
        return BigUint::zero();
    }
    (0..k).fold(BigUint::one(), |acc, i| acc * (n - i))
}

/// All partitions of `m` in lexicographic order of their part sequences,
/// e.g. `m = 3`: `(1,1,1), (2,1), (3)`.
pub fn partitions(m: u32) -> Vec<CoincidenceClass> {
    fn rec(remaining: u32, max_part: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if remaining == 0 {
            out.push(prefix.clone());
            return;
        }
        for p in 1..=remaining.min(max_part) {
            prefix.push(p);
            rec(remaining - p, p, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    if m > 0 {
        rec(m, m, &mut Vec::new(), &mut out);
    }
    out.sort();
    out.into_iter().map(CoincidenceClass).collect()
}

/// Number of ways to spread `m` excitations over `N` oscillators so that the
/// occupied oscillators carry the block sizes of `class` (in any order):
/// `C(N, k) · k! / ∏_v mult_v!`.
pub fn count_occupancy(n: u64, class: &CoincidenceClass) -> Result<BigUint, CombinatoricsError> {
    if n == 0 {
        return Err(CombinatoricsError::NoOscillators);
    }
    CoincidenceClass::new(class.0.clone())?;
    Ok(binomial(n, class.blocks() as u64) * class.arrangement_count())
}

/// Which oscillator ensemble a table describes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Ensemble {
    /// Exactly `N` oscillators.
    Fixed(u64),
    /// A probability distribution over `N`.
    Mixture(Vec<(u64, BigRational)>),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassEntry {
    pub class: CoincidenceClass,
    /// Number of ordered tuples in the class; absent for mixtures.
    pub count: Option<BigUint>,
    pub probability: BigRational,
}

/// Exact probabilities of every coincidence class among ordered m-tuples.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClassProbabilityTable {
    pub ensemble: Ensemble,
    pub m: u32,
    /// Lexicographic partition order.
    pub entries: Vec<ClassEntry>,
}

impl ClassProbabilityTable {
    pub fn probability(&self, class: &CoincidenceClass) -> Option<&BigRational> {
        self.entries.iter().find(|e| &e.class == class).map(|e| &e.probability)
    }

    pub fn total(&self) -> BigRational {
        self.entries.iter().fold(BigRational::zero(), |acc, e| acc + &e.probability)
    }

    /// Coarse grouping `𝒫_j`, `j = m − #distinct coordinates`, for
    /// `j = 0..m-1`.
    pub fn by_coincidence_order(&self) -> Vec<BigRational> {
        let mut out = vec![BigRational::zero(); self.m as usize];
        for e in &self.entries {
            out[e.class.coincidence_order() as usize] += &e.probability;
        }
        out
    }

    pub fn write_classes_csv<W: Write>(&self, sink: W) -> Result<W, CombinatoricsError> {
        let mut t = CsvTable::new(sink, &["partition", "count", "probability", "probability_exact"])?;
        for e in &self.entries {
            t.row([
                e.class.to_string(),
                e.count.as_ref().map(|c| c.to_string()).unwrap_or_default(),
                fmt_f64(rational_to_f64(&e.probability)),
                e.probability.to_string(),
            ])?;
        }
        Ok(t.finish()?)
    }

    pub fn write_coincidence_csv<W: Write>(&self, sink: W) -> Result<W, CombinatoricsError> {
        let mut t = CsvTable::new(sink, &["j", "probability", "probability_exact"])?;
        for (j, p) in self.by_coincidence_order().iter().enumerate() {
            t.row([j.to_string(), fmt_f64(rational_to_f64(p)), p.to_string()])?;
        }
        Ok(t.finish()?)
    }
}

pub fn rational_to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

/// Classifies all `N^m` ordered tuples by coincidence pattern. The class
/// with `k` blocks holds `set_partition_count · N(N-1)…(N-k+1)` tuples.
pub fn class_probabilities(n: u64, m: u32) -> Result<ClassProbabilityTable, CombinatoricsError> {
    if n == 0 {
        return Err(CombinatoricsError::NoOscillators);
    }
    if m == 0 {
        return Err(CombinatoricsError::TupleLength { min: 1, got: 0 });
    }
    let cube = BigInt::from(BigUint::from(n).pow(m));
    let entries = partitions(m)
        .into_iter()
        .map(|class| {
            let count = class.set_partition_count() * falling_factorial(n, class.blocks() as u64);
            let probability = BigRational::new(BigInt::from(count.clone()), cube.clone());
            ClassEntry { class, count: Some(count), probability }
        })
        .collect();
    Ok(ClassProbabilityTable { ensemble: Ensemble::Fixed(n), m, entries })
}

/// Class probabilities for a vacuum that superposes several oscillator
/// numbers with probabilities `p_N`. Because every fixed-N probability is a
/// polynomial in `1/N`, averaging the tables substitutes the moments
/// `⟨1/N⟩, ⟨1/N²⟩, …`.
pub fn averaged_class_probabilities(
    distribution: &[(u64, BigRational)],
    m: u32,
) -> Result<ClassProbabilityTable, CombinatoricsError> {
    let total = distribution.iter().fold(BigRational::zero(), |acc, (_, p)| acc + p);
    if !total.is_one() || distribution.iter().any(|(_, p)| p < &BigRational::zero()) {
        return Err(CombinatoricsError::NotNormalized(total.to_string()));
    }
    let mut entries: Vec<ClassEntry> = partitions(m)
        .into_iter()
        .map(|class| ClassEntry { class, count: None, probability: BigRational::zero() })
        .collect();
    for (n, p) in distribution {
        let table = class_probabilities(*n, m)?;
        for (acc, e) in entries.iter_mut().zip(&table.entries) {
            acc.probability += p * &e.probability;
        }
    }
    Ok(ClassProbabilityTable { ensemble: Ensemble::Mixture(distribution.to_vec()), m, entries })
}

/// Moment `⟨N^-power⟩` of an oscillator-number distribution.
pub fn inverse_moment(distribution: &[(u64, BigRational)], power: u32) -> BigRational {
    distribution.iter().fold(BigRational::zero(), |acc, (n, p)| {
        acc + p / BigRational::from_integer(BigInt::from(*n).pow(power))
    })
}

/// Poisson probabilities `e^{-μ} μ^n / n!` for `n = 0..=n_max`.
pub fn poisson_pmf(mu: f64, n_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut p = (-mu).exp();
    for n in 0..=n_max {
        out.push(p);
        p *= mu / (n + 1) as f64;
    }
    out
}

/// Distribution of the total excitation number of an N-oscillator coherent
/// state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcitationDistribution {
    pub oscillators: u64,
    /// `P(X_m)` for `m = 0..=m_max`.
    pub probabilities: Vec<f64>,
    /// Mass beyond `m_max`.
    pub tail_mass: f64,
}

impl ExcitationDistribution {
    pub fn m_max(&self) -> usize {
        self.probabilities.len() - 1
    }

    pub fn mean(&self) -> f64 {
        self.probabilities.iter().enumerate().map(|(m, p)| m as f64 * p).sum()
    }

    /// Total-variation distance to `Poisson(mu)`, counting both tails.
    pub fn tv_distance_to_poisson(&self, mu: f64) -> f64 {
        let pois = poisson_pmf(mu, self.m_max());
        let pois_tail = (1.0 - pois.iter().sum::<f64>()).max(0.0);
        let body: f64 = self.probabilities.iter().zip(&pois).map(|(a, b)| (a - b).abs()).sum();
        0.5 * (body + (self.tail_mass - pois_tail).abs())
    }

    pub fn write_csv<W: Write>(&self, sink: W) -> Result<W, CombinatoricsError> {
        let mut t = CsvTable::new(sink, &["m", "P"])?;
        for (m, p) in self.probabilities.iter().enumerate() {
            t.row([m.to_string(), fmt_f64(*p)])?;
        }
        Ok(t.finish()?)
    }
}

/// Per-oscillator excitation probabilities `q_n = Σ_k z_k Poisson(λ_k)_n`
/// with `λ_k = Σ_s |α(k,s)|² / N`, for `n = 0..=n_max`.
pub fn oscillator_distribution(
    modes: &ModeSet,
    alpha: &CoherentSpec,
    n: u64,
    n_max: usize,
) -> Result<Vec<f64>, CombinatoricsError> {
    if n == 0 {
        return Err(CombinatoricsError::NoOscillators);
    }
    alpha.amplitudes().check_domain(modes)?;
    let mut q = vec![0.0; n_max + 1];
    for (k, mode) in modes.modes().iter().enumerate() {
        let [p, m] = alpha.amplitudes().0[k];
        let lambda = (p.norm_sqr() + m.norm_sqr()) / n as f64;
        for (qn, pn) in q.iter_mut().zip(poisson_pmf(lambda, n_max)) {
            *qn += mode.z * pn;
        }
    }
    Ok(q)
}

/// Product of two power series truncated to `len` coefficients.
fn truncated_product(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, &ai) in a.iter().enumerate().take(len) {
        if ai == 0.0 {
            continue;
        }
        for (j, &bj) in b.iter().enumerate().take(len - i) {
            out[i + j] += ai * bj;
        }
    }
    out
}

/// `series^power` truncated to `len` coefficients, by repeated squaring.
/// The coefficients below `len` are exact: truncation never feeds back into
/// lower degrees.
fn truncated_power(series: &[f64], power: u64, len: usize) -> Vec<f64> {
    let mut result = vec![0.0; len];
    result[0] = 1.0;
    let mut base: Vec<f64> = series.iter().copied().take(len).collect();
    base.resize(len, 0.0);
    let mut e = power;
    while e > 0 {
        if e & 1 == 1 {
            result = truncated_product(&result, &base, len);
        }
        e >>= 1;
        if e > 0 {
            base = truncated_product(&base, &base, len);
        }
    }
    result
}

/// Exact distribution of the total number of excitations among `N`
/// independent oscillators, each in the coherent state with amplitudes
/// `α/√N`: the N-th power of the per-oscillator generating polynomial.
pub fn excitation_distribution(
    modes: &ModeSet,
    alpha: &CoherentSpec,
    n: u64,
    m_max: usize,
) -> Result<ExcitationDistribution, CombinatoricsError> {
    if m_max == 0 {
        return Err(CombinatoricsError::TupleLength { min: 1, got: 0 });
    }
    let len = m_max + 1 + GUARD_BAND;
    let q = oscillator_distribution(modes, alpha, n, len - 1)?;
    let full = truncated_power(&q, n, len);
    let probabilities: Vec<f64> = full[..=m_max].to_vec();
    let tail_mass = (1.0 - probabilities.iter().sum::<f64>()).max(0.0);
    Ok(ExcitationDistribution { oscillators: n, probabilities, tail_mass })
}

/// Bernoulli parameter of the two-level reduction, `q₁ / (q₀ + q₁)`.
pub fn bernoulli_parameter(modes: &ModeSet, alpha: &CoherentSpec, n: u64) -> Result<f64, CombinatoricsError> {
    let q = oscillator_distribution(modes, alpha, n, 1)?;
    Ok(q[1] / (q[0] + q[1]))
}

/// Both halves of `P(X_m)`: the boundary (some oscillator excited twice or
/// more) and the interior (`m` distinct singly excited oscillators).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundarySplit {
    pub total: f64,
    pub interior: f64,
    /// `P(Y_m | X_m)`.
    pub conditional: f64,
}

/// `P(Y_m | X_m) = 1 − C(N,m) q₁^m q₀^(N−m) / P(X_m)`.
pub fn boundary_split(
    modes: &ModeSet,
    alpha: &CoherentSpec,
    n: u64,
    m: usize,
) -> Result<BoundarySplit, CombinatoricsError> {
    if m < 2 {
        return Err(CombinatoricsError::TupleLength { min: 2, got: m as u32 });
    }
    let dist = excitation_distribution(modes, alpha, n, m)?;
    let total = dist.probabilities[m];
    if total <= 0.0 {
        return Err(CombinatoricsError::UndefinedConditional(m));
    }
    let interior = if (m as u64) > n {
        0.0
    } else {
        let q = oscillator_distribution(modes, alpha, n, 1)?;
        let ln_binom = libm::lgamma(n as f64 + 1.0)
            - libm::lgamma(m as f64 + 1.0)
            - libm::lgamma((n - m as u64) as f64 + 1.0);
        (ln_binom + m as f64 * q[1].ln() + (n - m as u64) as f64 * q[0].ln()).exp()
    };
    let conditional = (1.0 - interior / total).clamp(0.0, 1.0);
    Ok(BoundarySplit { total, interior, conditional })
}

pub fn boundary_conditional(
    modes: &ModeSet,
    alpha: &CoherentSpec,
    n: u64,
    m: usize,
) -> Result<f64, CombinatoricsError> {
    boundary_split(modes, alpha, n, m).map(|s| s.conditional)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Helicity, ModeAmplitudes};
    use num_complex::Complex64;

    fn q(a: i64, b: i64) -> BigRational {
        BigRational::new(a.into(), b.into())
    }

    fn class(parts: &[u32]) -> CoincidenceClass {
        CoincidenceClass::new(parts.to_vec()).unwrap()
    }

    /// Oracle: every non-decreasing m-tuple over 1..=N, classified.
    fn brute_occupancy(n: u64, m: u32) -> BTreeMap<CoincidenceClass, u64> {
        fn rec(start: u64, n: u64, left: u32, cur: &mut Vec<u64>, out: &mut BTreeMap<CoincidenceClass, u64>) {
            if left == 0 {
                *out.entry(CoincidenceClass::of_tuple(cur)).or_default() += 1;
                return;
            }
            for j in start..=n {
                cur.push(j);
                rec(j, n, left - 1, cur, out);
                cur.pop();
            }
        }
        let mut out = BTreeMap::new();
        rec(1, n, m, &mut Vec::new(), &mut out);
        out
    }

    /// Oracle: every ordered m-tuple over 1..=N, classified.
    fn brute_ordered(n: u64, m: u32) -> BTreeMap<CoincidenceClass, u64> {
        let mut out = BTreeMap::new();
        let total = n.pow(m);
        let mut tuple = vec![0u64; m as usize];
        for code in 0..total {
            let mut c = code;
            for slot in tuple.iter_mut() {
                *slot = c % n;
                c /= n;
            }
            *out.entry(CoincidenceClass::of_tuple(&tuple)).or_default() += 1;
        }
        out
    }

    #[test]
    fn partition_listing() {
        let p4: Vec<Vec<u32>> = partitions(4).into_iter().map(|c| c.0).collect();
        assert_eq!(p4, vec![vec![1, 1, 1, 1], vec![2, 1, 1], vec![2, 2], vec![3, 1], vec![4]]);
        assert_eq!(partitions(10).len(), 42);
    }

    #[test]
    fn invalid_partitions_rejected() {
        assert!(CoincidenceClass::new(vec![1, 2]).is_err());
        assert!(CoincidenceClass::new(vec![2, 0]).is_err());
        assert!(CoincidenceClass::new(vec![]).is_err());
    }

    #[test]
    fn occupancy_small_cases() {
        assert_eq!(count_occupancy(2, &class(&[1, 1])).unwrap(), BigUint::from(1u32));
        assert_eq!(count_occupancy(1, &class(&[7])).unwrap(), BigUint::from(1u32));
        assert!(count_occupancy(0, &class(&[1])).is_err());
    }

    #[test]
    fn occupancy_twelve_oscillators_ten_excitations() {
        let brute = brute_occupancy(12, 10);
        // (2,2,2,5,5,7,7,7,11,11) has block sizes 3,2,3,2
        let target = class(&[3, 3, 2, 2]);
        let expected = brute[&target];
        assert_eq!(count_occupancy(12, &target).unwrap(), BigUint::from(expected));
        assert_eq!(expected, 2970);
        for (c, cnt) in &brute {
            assert_eq!(count_occupancy(12, c).unwrap(), BigUint::from(*cnt), "{c}");
        }
    }

    #[test]
    fn occupancy_matches_enumeration_for_small_grids() {
        for n in 1..=8 {
            for m in 1..=4 {
                let brute = brute_occupancy(n, m);
                for c in partitions(m) {
                    let want = brute.get(&c).copied().unwrap_or(0);
                    assert_eq!(count_occupancy(n, &c).unwrap(), BigUint::from(want));
                }
            }
        }
    }

    #[test]
    fn class_probabilities_match_enumeration() {
        for n in 1..=8u64 {
            for m in 1..=4u32 {
                let table = class_probabilities(n, m).unwrap();
                let brute = brute_ordered(n, m);
                let cube = n.pow(m) as i64;
                for e in &table.entries {
                    let want = brute.get(&e.class).copied().unwrap_or(0);
                    assert_eq!(e.count.clone().unwrap(), BigUint::from(want));
                    assert_eq!(e.probability, q(want as i64, cube));
                }
                assert!(table.total().is_one());
            }
        }
    }

    #[test]
    fn two_and_three_tuples_reproduce_closed_forms() {
        let t = class_probabilities(4, 2).unwrap();
        assert_eq!(t.probability(&class(&[1, 1])).unwrap(), &q(3, 4));
        assert_eq!(t.probability(&class(&[2])).unwrap(), &q(1, 4));

        let t = class_probabilities(10, 3).unwrap();
        let pj = t.by_coincidence_order();
        assert_eq!(pj, vec![q(72, 100), q(27, 100), q(1, 100)]);

        let t = class_probabilities(1, 2).unwrap();
        assert!(t.probability(&class(&[1, 1])).unwrap().is_zero());
        assert!(t.probability(&class(&[2])).unwrap().is_one());
    }

    #[test]
    fn all_distinct_probability_is_falling_product() {
        for n in [3u64, 7, 50, 1000] {
            for m in 1..=5u32 {
                let t = class_probabilities(n, m).unwrap();
                let mut want = BigRational::one();
                for i in 0..m as i64 {
                    want *= q(n as i64 - i, n as i64);
                }
                if m as u64 > n {
                    want = BigRational::zero();
                }
                assert_eq!(t.probability(&CoincidenceClass::all_distinct(m)).unwrap(), &want);
            }
        }
        // and it approaches one with m fixed
        let p = |n| rational_to_f64(class_probabilities(n, 4).unwrap().probability(&CoincidenceClass::all_distinct(4)).unwrap());
        assert!(p(10) < p(100) && p(100) < p(10_000) && p(10_000) > 0.999);
    }

    #[test]
    fn zero_length_tuple_is_an_error() {
        assert!(matches!(class_probabilities(3, 0), Err(CombinatoricsError::TupleLength { .. })));
    }

    #[test]
    fn averaged_tables() {
        let point = averaged_class_probabilities(&[(4, BigRational::one())], 2).unwrap();
        assert_eq!(point.entries, {
            let mut t = class_probabilities(4, 2).unwrap().entries;
            t.iter_mut().for_each(|e| e.count = None);
            t
        });

        let uniform = vec![(2, q(1, 2)), (4, q(1, 2))];
        let t2 = averaged_class_probabilities(&uniform, 2).unwrap();
        assert_eq!(t2.by_coincidence_order()[1], q(3, 8));
        assert_eq!(inverse_moment(&uniform, 1), q(3, 8));
        let t3 = averaged_class_probabilities(&uniform, 3).unwrap();
        assert_eq!(t3.by_coincidence_order()[2], q(5, 32));
        assert_eq!(inverse_moment(&uniform, 2), q(5, 32));
        // 𝒫₀ = 1 − 3⟨1/N⟩ + 2⟨1/N²⟩
        let expect = BigRational::one() - q(3, 1) * q(3, 8) + q(2, 1) * q(5, 32);
        assert_eq!(t3.by_coincidence_order()[0], expect);

        assert!(averaged_class_probabilities(&[(2, q(1, 2))], 2).is_err());
    }

    fn flat_modes() -> ModeSet {
        ModeSet::new(&[1.0, 2.0, 3.0], &[0.2, 0.5, 0.3]).unwrap()
    }

    fn constant_alpha(m: usize, a: f64) -> CoherentSpec {
        CoherentSpec(ModeAmplitudes::constant(m, Complex64::new(a, 0.0)))
    }

    fn varied_alpha() -> CoherentSpec {
        CoherentSpec(ModeAmplitudes::from_fn(3, |k, s| {
            let base = [0.3, 1.1, 2.0][k];
            match s {
                Helicity::Plus => Complex64::new(base, 0.2),
                Helicity::Minus => Complex64::new(0.0, 0.5 * base),
            }
        }))
    }

    #[test]
    fn vacuum_has_no_excitations() {
        let d = excitation_distribution(&flat_modes(), &constant_alpha(3, 0.0), 5, 4).unwrap();
        assert_eq!(d.probabilities[0], 1.0);
        assert!(d.probabilities[1..].iter().all(|&p| p == 0.0));
    }

    #[test]
    fn constant_alpha_is_exactly_poisson() {
        let a = 0.9;
        let mu = 2.0 * a * a;
        for n in [1u64, 2, 3, 7, 64] {
            let d = excitation_distribution(&flat_modes(), &constant_alpha(3, a), n, 30).unwrap();
            let want = poisson_pmf(mu, 30);
            for (x, y) in d.probabilities.iter().zip(&want) {
                assert!((x - y).abs() < 1e-14, "N={n}");
            }
        }
    }

    #[test]
    fn mean_matches_z_norm() {
        let modes = flat_modes();
        let alpha = varied_alpha();
        let want = alpha.mean_excitations(&modes).unwrap();
        for n in [1u64, 2, 5, 16, 100] {
            let d = excitation_distribution(&modes, &alpha, n, 80).unwrap();
            assert!(d.tail_mass < 1e-15);
            assert!((d.mean() - want).abs() < 1e-12, "N={n}: {} vs {want}", d.mean());
        }
    }

    #[test]
    fn tv_distance_shrinks_with_oscillator_count() {
        let modes = flat_modes();
        let alpha = varied_alpha();
        let mu = alpha.mean_excitations(&modes).unwrap();
        let tv: Vec<f64> = [1u64, 2, 4, 8, 16, 32]
            .iter()
            .map(|&n| excitation_distribution(&modes, &alpha, n, 80).unwrap().tv_distance_to_poisson(mu))
            .collect();
        assert!(tv.windows(2).all(|w| w[1] < w[0]), "{tv:?}");
        assert!(tv[5] < 0.1 * tv[0]);
    }

    #[test]
    fn power_series_oracle() {
        // independent check of the N-fold convolution: direct repeated convolution
        let qn = [0.5, 0.3, 0.15, 0.05];
        let mut direct = vec![1.0];
        for _ in 0..5 {
            let mut next = vec![0.0; direct.len() + qn.len() - 1];
            for (i, a) in direct.iter().enumerate() {
                for (j, b) in qn.iter().enumerate() {
                    next[i + j] += a * b;
                }
            }
            direct = next;
        }
        let fast = truncated_power(&qn, 5, 10);
        for i in 0..10 {
            assert!((fast[i] - direct[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn boundary_conditional_two_oscillators_is_half() {
        for a in [0.1, 0.7, 1.5] {
            let c = boundary_conditional(&flat_modes(), &constant_alpha(3, a), 2, 2).unwrap();
            assert!((c - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn boundary_conditional_edge_cases() {
        let modes = flat_modes();
        assert_eq!(boundary_conditional(&modes, &constant_alpha(3, 0.8), 2, 3).unwrap(), 1.0);
        assert!(matches!(
            boundary_conditional(&modes, &constant_alpha(3, 0.0), 4, 2),
            Err(CombinatoricsError::UndefinedConditional(2))
        ));
        assert!(boundary_conditional(&modes, &constant_alpha(3, 0.8), 4, 1).is_err());
    }

    #[test]
    fn boundary_conditional_decreases_with_n() {
        let modes = flat_modes();
        let alpha = varied_alpha();
        let vals: Vec<f64> = [8u64, 16, 32, 64]
            .iter()
            .map(|&n| boundary_conditional(&modes, &alpha, n, 3).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] < w[0]), "{vals:?}");
        let split = boundary_split(&modes, &alpha, 16, 3).unwrap();
        assert!((split.conditional * split.total + split.interior - split.total).abs() < 1e-12);
    }

    #[test]
    fn bernoulli_parameter_scales_like_inverse_n() {
        let modes = flat_modes();
        let a = 1.2;
        let alpha = constant_alpha(3, a);
        for n in [10u64, 100, 10_000] {
            let p = bernoulli_parameter(&modes, &alpha, n).unwrap();
            let x = 2.0 * a * a / n as f64;
            assert!((p - x / (1.0 + x)).abs() < 1e-15);
        }
        let big = bernoulli_parameter(&modes, &alpha, 1_000_000).unwrap() * 1e6;
        assert!((big - 2.0 * a * a).abs() < 1e-4);
    }

    #[test]
    fn csv_rows_are_lexicographic() {
        let t = class_probabilities(10, 3).unwrap();
        let out = String::from_utf8(t.write_coincidence_csv(Vec::new()).unwrap()).unwrap();
        assert!(out.contains("0,0.72,18/25"));
        assert!(out.contains("1,0.27,27/100"));
        assert!(out.contains("2,0.01,1/100"));
        let classes = String::from_utf8(t.write_classes_csv(Vec::new()).unwrap()).unwrap();
        let lines: Vec<&str> = classes.lines().collect();
        assert_eq!(lines[1], "\"(1,1,1)\",720,0.72,18/25");
        assert_eq!(lines[3], "(3),10,0.01,1/100");
    }
}
