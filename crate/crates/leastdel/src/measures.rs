//! Product measures on binary Cantor space, defined by rule.
//!
//! A measure assigns every index an exact rational marginal (m_n(0), m_n(1)).
//! Three families are provided: the period-j family (one 1-biased index per
//! period, the rest 0-biased), the sparse family (heavily 1-biased bits at a
//! super-exponentially sparse schedule, fair elsewhere), and fully custom
//! rules (explicit head plus eventually-periodic tail). All evaluation is in
//! arbitrary-precision rationals; no floating point enters measure values.

use std::fmt;
use std::str::FromStr;

use num::{BigUint, Integer, One, Signed, ToPrimitive, Zero};

use crate::bitspace::BitPrefix;
use crate::error::{Error, Result};
use crate::rng;
use crate::{Int, Rational, Uint};

/// An exact Bernoulli marginal: strictly positive rationals summing to 1.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Marginal {
    p0: Rational,
    p1: Rational,
}

impl Marginal {
    pub fn new(p0: Rational, p1: Rational) -> Result<Self> {
        let one = Rational::one();
        if &p0 + &p1 != one || !p0.is_positive() || !p1.is_positive() || p0 >= one || p1 >= one {
            return Err(Error::InvalidMarginal {
                p0: p0.to_string(),
                p1: p1.to_string(),
            });
        }
        Ok(Marginal { p0, p1 })
    }

    /// Marginal from p0 alone; p1 is the exact complement.
    pub fn from_p0(p0: Rational) -> Result<Self> {
        let p1 = Rational::one() - &p0;
        Marginal::new(p0, p1)
    }

    pub fn fair() -> Self {
        Marginal {
            p0: crate::ratio(1, 2),
            p1: crate::ratio(1, 2),
        }
    }

    pub fn p0(&self) -> &Rational {
        &self.p0
    }

    pub fn p1(&self) -> &Rational {
        &self.p1
    }

    pub fn prob(&self, bit: u8) -> &Rational {
        if bit == 0 {
            &self.p0
        } else {
            &self.p1
        }
    }

    /// m(0)/m(1), the single-flip Radon-Nikodym ratio at this index.
    pub fn ratio(&self) -> Rational {
        &self.p0 / &self.p1
    }
}

impl fmt::Display for Marginal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.p0, self.p1)
    }
}

impl FromStr for Marginal {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut parts = s.split_whitespace();
        let (a, b) = match (parts.next(), parts.next(), parts.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::Config(format!(
                    "marginal must be two rationals like \"1/3 2/3\", got {s:?}"
                )))
            }
        };
        let parse = |t: &str| {
            Rational::from_str(t)
                .map_err(|e| Error::Config(format!("bad rational {t:?} in marginal: {e}")))
        };
        Marginal::new(parse(a)?, parse(b)?)
    }
}

/// The sparse schedule of special indices: n_0 = 0, n_1 = SPARSE_N1, and
/// n_{k+1} = n_k + p_k^k with p_k = 2^{k(k+1)/2}. Index 0 is not special;
/// the special indices are n_1, n_2, ...
pub struct SparseSchedule;

/// The recurrence defines n_{k+1} only for k >= 1, leaving n_1 free; this
/// constant pins the minimal strictly increasing choice.
pub const SPARSE_N1: u64 = 1;

impl SparseSchedule {
    /// log2 of p_k, i.e. k(k+1)/2.
    pub fn p_log2(k: u32) -> u64 {
        let k = k as u64;
        k * (k + 1) / 2
    }

    /// p_k = 2^{k(k+1)/2}, k >= 1.
    pub fn p(k: u32) -> Uint {
        assert!(k >= 1, "p_k is defined for k >= 1");
        Uint::one() << Self::p_log2(k)
    }

    /// log2 of the block span p_k^k = n_{k+1} - n_k.
    pub fn span_log2(k: u32) -> u64 {
        (k as u64) * Self::p_log2(k)
    }

    /// n_k for k >= 0.
    pub fn n(k: u32) -> Uint {
        if k == 0 {
            return Uint::zero();
        }
        let mut n = Uint::from(SPARSE_N1);
        for i in 1..k {
            n += Uint::one() << Self::span_log2(i);
        }
        n
    }

    /// n_k when it fits in a machine word (k <= 5 under the n_1 = 1 convention).
    pub fn n_u64(k: u32) -> Option<u64> {
        Self::n(k).to_u64()
    }

    /// k such that n = n_k, if any (special indices only, so k >= 1).
    pub fn k_for_index(n: u64) -> Option<u32> {
        let mut k = 1;
        loop {
            match Self::n_u64(k) {
                Some(nk) if nk == n => return Some(k),
                Some(nk) if nk < n => k += 1,
                _ => return None,
            }
        }
    }

    /// Marginal at n_k: (1/(2^k+1), 2^k/(2^k+1)).
    pub fn special_marginal(k: u32) -> Marginal {
        assert!(k >= 1);
        let den = Int::from((Uint::one() << k) + Uint::one());
        Marginal {
            p0: Rational::new(Int::one(), den.clone()),
            p1: Rational::new(Int::from(Uint::one() << k), den),
        }
    }

    /// Number of fair indices strictly between n_k and n_{k+1}: p_k^k - 1.
    pub fn interior_len(k: u32) -> Uint {
        (Uint::one() << Self::span_log2(k)) - Uint::one()
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Variant {
    Periodic { rule: Vec<Marginal> },
    Sparse,
    Custom { explicit: Vec<Marginal>, tail: Vec<Marginal> },
}

#[derive(Clone, Debug)]
enum ThresholdTable {
    Periodic(Vec<u64>),
    Sparse { fair: u64, specials: Vec<(u64, u64)> },
    Custom { explicit: Vec<u64>, tail: Vec<u64> },
}

/// A product measure defined by an index -> marginal rule.
#[derive(Clone, Debug)]
pub struct MeasureSpec {
    variant: Variant,
    thresholds: ThresholdTable,
    log_base: Option<u64>,
}

impl PartialEq for MeasureSpec {
    fn eq(&self, other: &Self) -> bool {
        self.variant == other.variant
    }
}

impl MeasureSpec {
    /// Period-j measure, j >= 3: residue 0 has marginal (1/j, (j-1)/j) (biased
    /// toward 1), all other residues ((j-1)/j, 1/j) (biased toward 0).
    pub fn period_j(j: u32) -> Result<Self> {
        if j < 3 {
            return Err(Error::InvalidParameter(format!(
                "period-j family requires j >= 3, got {j}"
            )));
        }
        let j_int = i64::from(j);
        let biased_one = Marginal::new(crate::ratio(1, j_int), crate::ratio(j_int - 1, j_int))?;
        let biased_zero = Marginal::new(crate::ratio(j_int - 1, j_int), crate::ratio(1, j_int))?;
        let mut rule = vec![biased_one];
        rule.resize(j as usize, biased_zero);
        Self::periodic(rule)
    }

    /// Periodic measure with an explicit residue -> marginal rule.
    pub fn periodic(rule: Vec<Marginal>) -> Result<Self> {
        if rule.is_empty() {
            return Err(Error::InvalidParameter("periodic rule must be nonempty".into()));
        }
        let thresholds =
            ThresholdTable::Periodic(rule.iter().map(|m| rng::bernoulli_threshold(m.p1())).collect());
        let variant = Variant::Periodic { rule };
        let log_base = infer_log_base(&variant);
        Ok(MeasureSpec {
            variant,
            thresholds,
            log_base,
        })
    }

    /// The sparse measure: special marginal (1/(2^k+1), 2^k/(2^k+1)) at n_k,
    /// fair everywhere else.
    pub fn sparse() -> Self {
        let mut specials = Vec::new();
        let mut k = 1;
        while let Some(nk) = SparseSchedule::n_u64(k) {
            let t = rng::bernoulli_threshold(SparseSchedule::special_marginal(k).p1());
            specials.push((nk, t));
            k += 1;
        }
        MeasureSpec {
            variant: Variant::Sparse,
            thresholds: ThresholdTable::Sparse {
                fair: 1u64 << 63,
                specials,
            },
            log_base: Some(2),
        }
    }

    /// Custom measure: explicit marginals for the first indices, then an
    /// eventually-periodic tail rule.
    pub fn custom(explicit: Vec<Marginal>, tail: Vec<Marginal>) -> Result<Self> {
        if tail.is_empty() {
            return Err(Error::InvalidParameter(
                "custom measure needs a nonempty periodic tail rule".into(),
            ));
        }
        let thresholds = ThresholdTable::Custom {
            explicit: explicit.iter().map(|m| rng::bernoulli_threshold(m.p1())).collect(),
            tail: tail.iter().map(|m| rng::bernoulli_threshold(m.p1())).collect(),
        };
        let variant = Variant::Custom { explicit, tail };
        let log_base = infer_log_base(&variant);
        Ok(MeasureSpec {
            variant,
            thresholds,
            log_base,
        })
    }

    pub fn marginal_at(&self, n: u64) -> Marginal {
        match &self.variant {
            Variant::Periodic { rule } => rule[(n % rule.len() as u64) as usize].clone(),
            Variant::Sparse => match SparseSchedule::k_for_index(n) {
                Some(k) => SparseSchedule::special_marginal(k),
                None => Marginal::fair(),
            },
            Variant::Custom { explicit, tail } => {
                let len = explicit.len() as u64;
                if n < len {
                    explicit[n as usize].clone()
                } else {
                    tail[((n - len) % tail.len() as u64) as usize].clone()
                }
            }
        }
    }

    /// m_n(0)/m_n(1), exactly.
    pub fn ratio_at(&self, n: u64) -> Rational {
        self.marginal_at(n).ratio()
    }

    /// Exact measure of the cylinder set of sequences extending `c`.
    pub fn cylinder_measure(&self, c: &BitPrefix) -> Rational {
        let mut acc = Rational::one();
        for (n, bit) in c.bits().iter().enumerate() {
            acc *= self.marginal_at(n as u64).prob(*bit);
        }
        acc
    }

    /// Bernoulli threshold for the bit at index n (P(bit = 1) = m_n(1) up to
    /// 2^-64): `noise < threshold` samples the bit.
    pub fn bit_threshold(&self, n: u64) -> u64 {
        match &self.thresholds {
            ThresholdTable::Periodic(t) => t[(n % t.len() as u64) as usize],
            ThresholdTable::Sparse { fair, specials } => specials
                .iter()
                .find(|(idx, _)| *idx == n)
                .map(|(_, t)| *t)
                .unwrap_or(*fair),
            ThresholdTable::Custom { explicit, tail } => {
                let len = explicit.len() as u64;
                if n < len {
                    explicit[n as usize]
                } else {
                    tail[((n - len) % tail.len() as u64) as usize]
                }
            }
        }
    }

    /// Deterministic sampled bit at index n for the given seed.
    pub fn sample_bit(&self, n: u64, seed: u64) -> u8 {
        u8::from(rng::noise(seed, n) < self.bit_threshold(n))
    }

    /// The canonical base b such that every ratio m_n(0)/m_n(1) is an integer
    /// power of b, when one exists: j-1 for the period-j family, 2 for the
    /// sparse family.
    pub fn preferred_log_base(&self) -> Option<u64> {
        self.log_base
    }

    /// Exponent e with ratio_at(n) = base^e, exactly.
    pub fn ratio_log(&self, n: u64, base: u64) -> Result<i64> {
        let r = self.ratio_at(n);
        ratio_power_exponent(&r, base).ok_or_else(|| Error::NotPowerCompatible {
            ratio: r.to_string(),
            index: n,
            base,
        })
    }

    /// Precomputed ratio exponents for every index, for long integer walks.
    /// Fails eagerly if any marginal the rule can produce is incompatible
    /// with the base.
    pub fn ratio_log_table(&self, base: u64) -> Result<RatioLogTable> {
        match &self.variant {
            Variant::Periodic { rule } => {
                let mut exps = Vec::with_capacity(rule.len());
                for (i, _) in rule.iter().enumerate() {
                    exps.push(self.ratio_log(i as u64, base)?);
                }
                Ok(RatioLogTable::Periodic(exps))
            }
            Variant::Sparse => {
                // ratio at n_k is 1/2^k, so every k must be a multiple of
                // log2(base); only base 2 covers k = 1
                if base != 2 {
                    return Err(Error::NotPowerCompatible {
                        ratio: "1/2".into(),
                        index: SPARSE_N1,
                        base,
                    });
                }
                let specials = match &self.thresholds {
                    ThresholdTable::Sparse { specials, .. } => specials
                        .iter()
                        .enumerate()
                        .map(|(i, (n, _))| (*n, -(i as i64 + 1)))
                        .collect(),
                    _ => unreachable!(),
                };
                Ok(RatioLogTable::Sparse(specials))
            }
            Variant::Custom { explicit, tail } => {
                let mut head = Vec::with_capacity(explicit.len());
                for (i, _) in explicit.iter().enumerate() {
                    head.push(self.ratio_log(i as u64, base)?);
                }
                let mut cycle = Vec::with_capacity(tail.len());
                for (i, _) in tail.iter().enumerate() {
                    cycle.push(self.ratio_log(explicit.len() as u64 + i as u64, base)?);
                }
                Ok(RatioLogTable::Custom { head, cycle })
            }
        }
    }

    /// Period length for periodic measures.
    pub fn period(&self) -> Option<usize> {
        match &self.variant {
            Variant::Periodic { rule } => Some(rule.len()),
            _ => None,
        }
    }

    pub fn is_sparse(&self) -> bool {
        matches!(self.variant, Variant::Sparse)
    }

    pub fn variant_name(&self) -> &'static str {
        match self.variant {
            Variant::Periodic { .. } => "periodic",
            Variant::Sparse => "sparse",
            Variant::Custom { .. } => "custom",
        }
    }

    /// The marginals accessible for serialization: (explicit list, tail rule).
    pub fn custom_parts(&self) -> Option<(&[Marginal], &[Marginal])> {
        match &self.variant {
            Variant::Custom { explicit, tail } => Some((explicit, tail)),
            _ => None,
        }
    }

    pub fn periodic_rule(&self) -> Option<&[Marginal]> {
        match &self.variant {
            Variant::Periodic { rule } => Some(rule),
            _ => None,
        }
    }
}

/// Exponents of m_n(0)/m_n(1) in a fixed base, indexed without rational
/// arithmetic.
#[derive(Clone, Debug)]
pub enum RatioLogTable {
    Periodic(Vec<i64>),
    Sparse(Vec<(u64, i64)>),
    Custom { head: Vec<i64>, cycle: Vec<i64> },
}

impl RatioLogTable {
    pub fn exponent_at(&self, n: u64) -> i64 {
        match self {
            RatioLogTable::Periodic(exps) => exps[(n % exps.len() as u64) as usize],
            RatioLogTable::Sparse(specials) => specials
                .iter()
                .find(|(idx, _)| *idx == n)
                .map(|(_, e)| *e)
                .unwrap_or(0),
            RatioLogTable::Custom { head, cycle } => {
                let len = head.len() as u64;
                if n < len {
                    head[n as usize]
                } else {
                    cycle[((n - len) % cycle.len() as u64) as usize]
                }
            }
        }
    }
}

/// Exponent e with r = base^e, if one exists (e = 0 for r = 1).
pub fn ratio_power_exponent(r: &Rational, base: u64) -> Option<i64> {
    if base < 2 {
        return None;
    }
    if r.is_one() {
        return Some(0);
    }
    let numer = r.numer().magnitude();
    let denom = r.denom().magnitude();
    if denom.is_one() {
        exact_log(numer, base).map(|e| e as i64)
    } else if numer.is_one() {
        exact_log(denom, base).map(|e| -(e as i64))
    } else {
        None
    }
}

fn exact_log(m: &BigUint, base: u64) -> Option<u64> {
    let base = BigUint::from(base);
    let mut m = m.clone();
    let mut e = 0;
    while m > BigUint::one() {
        let (q, rem) = m.div_rem(&base);
        if !rem.is_zero() {
            return None;
        }
        m = q;
        e += 1;
    }
    if e == 0 {
        None // m was 1, i.e. ratio 1, handled by the caller
    } else {
        Some(e)
    }
}

/// Largest base b >= 2 such that every non-unit ratio of the rule is an
/// integer power of b.
fn infer_log_base(variant: &Variant) -> Option<u64> {
    let marginals: Vec<&Marginal> = match variant {
        Variant::Periodic { rule } => rule.iter().collect(),
        Variant::Sparse => return Some(2),
        Variant::Custom { explicit, tail } => explicit.iter().chain(tail.iter()).collect(),
    };
    let mut magnitudes: Vec<BigUint> = Vec::new();
    for m in marginals {
        let r = m.ratio();
        if r.is_one() {
            continue;
        }
        let (numer, denom) = (r.numer().magnitude().clone(), r.denom().magnitude().clone());
        if denom.is_one() {
            magnitudes.push(numer);
        } else if numer.is_one() {
            magnitudes.push(denom);
        } else {
            return None;
        }
    }
    magnitudes.sort();
    magnitudes.dedup();
    if magnitudes.is_empty() {
        return None;
    }
    // Primitive root of the smallest magnitude, then the gcd of all exponents.
    let smallest = magnitudes[0].clone();
    let max_e = smallest.bits();
    let mut root = smallest.clone();
    let mut root_exp = 1u64;
    for e in (2..=max_e).rev() {
        let r = smallest.nth_root(e as u32);
        if num::pow(r.clone(), e as usize) == smallest {
            root = r;
            root_exp = e;
            break;
        }
    }
    let mut exps = vec![root_exp];
    for m in &magnitudes[1..] {
        match exact_log_big(m, &root) {
            Some(e) => exps.push(e),
            None => return None,
        }
    }
    let g = exps.into_iter().fold(0u64, num::integer::gcd);
    num::pow(root, g as usize).to_u64()
}

fn exact_log_big(m: &BigUint, base: &BigUint) -> Option<u64> {
    let mut m = m.clone();
    let mut e = 0;
    while m > BigUint::one() {
        let (q, rem) = m.div_rem(base);
        if !rem.is_zero() {
            return None;
        }
        m = q;
        e += 1;
    }
    Some(e)
}
