//! Quantitative tail machinery for the sparse measure: exact binomial tails
//! for the rare low-count blocks, the exponent inequality chain bounding
//! them, summability certificates, and block-coarse trajectory simulation of
//! the vanishing-but-nonsummable cocycle.
//!
//! Everything decision-relevant is exact (big integers and rationals);
//! base-2 log floats appear only in reports, and any comparison that would
//! land within 1e-6 of a boundary must be re-done exactly.

use std::cmp::Ordering;

use num::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;

use crate::cocycle::CocycleValue;
use crate::error::{Error, Result};
use crate::measures::SparseSchedule;
use crate::rng;
use crate::{Int, Rational, Uint};

/// Whether a block's fair-bit run is the open interval (n_k, n_{k+1}) with
/// p_k^k - 1 indices, or the full span of length p_k^k.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum BlockConvention {
    Open,
    Closed,
}

impl BlockConvention {
    pub fn interior_length(self, k: u32) -> Uint {
        let span = Uint::one() << SparseSchedule::span_log2(k) as usize;
        match self {
            BlockConvention::Open => span - Uint::one(),
            BlockConvention::Closed => span,
        }
    }
}

/// One member of the tail-bound inequality chain.
#[derive(Clone, Debug)]
pub struct ChainMember {
    pub label: &'static str,
    /// Exact value when representable (k <= 3).
    pub exact: Option<Rational>,
    /// Certified upper bound on log2 of the member (clamped to f64::MIN when
    /// even that underflows).
    pub log2_upper: f64,
}

/// Upper bounds on mu(Z_k), the measure of blocks with at most p_k ones.
#[derive(Clone, Debug)]
pub struct TailBound {
    pub k: u32,
    pub convention: BlockConvention,
    pub interior_length: Uint,
    pub threshold: Uint,
    /// The exact tail, for k <= 3.
    pub exact_tail: Option<Rational>,
    /// Certified upper bound on log2 mu(Z_k).
    pub log2_upper: f64,
    /// The closed-form final exponent: k p_k k(k+1)/2 - p_k^k.
    pub chain_final_exponent: Int,
    pub chain: Vec<ChainMember>,
}

/// k p_k k(k+1)/2 - p_k^k, exactly.
pub fn chain_exponent(k: u32) -> Int {
    let tri = SparseSchedule::p_log2(k);
    let pk = Int::from(Uint::one() << tri as usize);
    let span = Int::one() << SparseSchedule::span_log2(k) as usize;
    Int::from(k as u64) * pk * Int::from(tri) - span
}

fn pow2(e: i64) -> Rational {
    if e >= 0 {
        Rational::from(Int::one() << e as usize)
    } else {
        Rational::new(Int::one(), Int::one() << (-e) as usize)
    }
}

fn pow2_big(e: &Int) -> Option<Rational> {
    let mag = e.magnitude().to_usize()?;
    if mag > 1 << 22 {
        return None; // denominators beyond half a megabit are not worth it
    }
    Some(if e.is_negative() {
        Rational::new(Int::one(), Int::one() << mag)
    } else {
        Rational::from(Int::one() << mag)
    })
}

fn factorial(n: u64) -> Uint {
    let mut acc = Uint::one();
    for i in 2..=n {
        acc *= Uint::from(i);
    }
    acc
}

/// Sum of C(n, i) for i = 0..=t, by the incremental recurrence.
fn binomial_head_sum(n: u64, t: u64) -> Uint {
    let mut c = Uint::one();
    let mut sum = Uint::one();
    for i in 0..t.min(n) {
        c = c * Uint::from(n - i) / Uint::from(i + 1);
        sum += &c;
    }
    sum
}

/// Exact tail and exact chain for k <= 3; TooLarge beyond (the denominators
/// would need p_k^k bits).
pub fn exact_tail(k: u32, convention: BlockConvention) -> Result<TailBound> {
    if k == 0 {
        return Err(Error::InvalidParameter("blocks are indexed from 1".into()));
    }
    if k > 3 {
        return Err(Error::TooLarge { k, max: 3 });
    }
    let n = convention.interior_length(k).to_u64().expect("k <= 3 fits");
    let t = SparseSchedule::p(k).to_u64().expect("k <= 3 fits");
    let tail = Rational::new(
        Int::from(binomial_head_sum(n, t)),
        Int::one() << n as usize,
    );

    let half_pow = Rational::new(Int::one(), Int::one() << n as usize);
    let n_big = Uint::from(n);
    let mut poisson_sum = Rational::zero();
    for i in 1..=t {
        poisson_sum += Rational::new(
            Int::from(num::pow(n_big.clone(), i as usize)),
            Int::from(factorial(i)),
        );
    }
    let m1 = &half_pow * poisson_sum;
    let top = Rational::new(
        Int::from(num::pow(n_big.clone(), t as usize)),
        Int::from(factorial(t)),
    );
    let m2 = &half_pow * (Rational::from(Int::from(t)) * top);
    let m3 = &half_pow * Rational::from(Int::from(num::pow(n_big, t as usize)));
    let final_exponent = chain_exponent(k);
    let final_value = pow2_big(&final_exponent).expect("k <= 3 exponent is small");

    let member = |label, v: &Rational| ChainMember {
        label,
        exact: Some(v.clone()),
        log2_upper: log2_bounds(v).1,
    };
    let chain = vec![
        member("poisson_style_sum", &m1),
        member("count_times_top_term", &m2),
        member("drop_factorial", &m3),
        member("closed_form_exponent", &final_value),
    ];
    Ok(TailBound {
        k,
        convention,
        interior_length: Uint::from(n),
        threshold: Uint::from(t),
        log2_upper: log2_bounds(&tail).1,
        exact_tail: Some(tail),
        chain_final_exponent: final_exponent,
        chain,
    })
}

/// Total tail bound: exact for k <= 3, exponent arithmetic beyond. The
/// certified log bound for k >= 2 is E_k for the closed convention and
/// E_k + 1 for the open one (the shorter interior costs one halving factor).
pub fn tail_bound(k: u32, convention: BlockConvention) -> Result<TailBound> {
    if k <= 3 {
        return exact_tail(k, convention);
    }
    let final_exponent = chain_exponent(k);
    let adjust = match convention {
        BlockConvention::Open => 1,
        BlockConvention::Closed => 0,
    };
    let upper_exp = &final_exponent + Int::from(adjust);
    let chain = vec![
        ChainMember {
            label: "drop_factorial",
            exact: None,
            log2_upper: int_to_f64_upper(&upper_exp),
        },
        ChainMember {
            label: "closed_form_exponent",
            exact: None,
            log2_upper: int_to_f64_upper(&final_exponent),
        },
    ];
    Ok(TailBound {
        k,
        convention,
        interior_length: convention.interior_length(k),
        threshold: SparseSchedule::p(k),
        exact_tail: None,
        log2_upper: int_to_f64_upper(&upper_exp),
        chain_final_exponent: final_exponent,
        chain,
    })
}

/// Proves mu(Z_k) <= 2^{-k} for this k (exactly for k <= 3, by integer
/// exponent arithmetic beyond).
pub fn tail_le_2_pow_neg_k(k: u32, convention: BlockConvention) -> Result<bool> {
    if k <= 3 {
        let b = exact_tail(k, convention)?;
        Ok(b.exact_tail.unwrap() <= pow2(-(k as i64)))
    } else {
        let adjust = match convention {
            BlockConvention::Open => 1,
            BlockConvention::Closed => 0,
        };
        Ok(chain_exponent(k) + Int::from(adjust) <= Int::from(-(k as i64)))
    }
}

/// Certified upper bound on the partial sum of mu(Z_k) for k <= K: exact
/// tails for k <= 3 (clamped at 1), 2^{-k} beyond, each term certified.
pub fn tail_summability_report(k_max: u32, convention: BlockConvention) -> Result<Rational> {
    if k_max == 0 {
        return Err(Error::InvalidParameter("need at least one block".into()));
    }
    let mut total = Rational::zero();
    for k in 1..=k_max {
        let term = if k <= 3 {
            let t = exact_tail(k, convention)?.exact_tail.unwrap();
            t.min(Rational::one())
        } else {
            if !tail_le_2_pow_neg_k(k, convention)? {
                return Err(Error::InvalidParameter(format!(
                    "exponent bound does not certify 2^-k at k = {k}"
                )));
            }
            pow2(-(k as i64))
        };
        total += term;
    }
    Ok(total)
}

/// Exact partial sum of m_{n_k}(0) = 1/(2^k + 1) for k = 1..=k_max.
pub fn special_zero_partial_sum(k_max: u32) -> Rational {
    let mut sum = Rational::zero();
    for k in 1..=k_max {
        sum += Rational::new(Int::one(), Int::from((Uint::one() << k as usize) + Uint::one()));
    }
    sum
}

/// Partial sum through k = 64 plus the geometric tail bound 2^{-63}
/// (each further term is below 2^{-k}, so the tail is below 2^{-64}):
/// a certified upper bound on the full series.
pub fn special_zero_certified_sum() -> Rational {
    special_zero_partial_sum(64) + pow2(-63)
}

/// Exact product of the special-hit probabilities 2^k/(2^k+1) over
/// k_lo..=k_hi: the chance that every special bit in that range is 1.
pub fn all_specials_hit_probability(k_lo: u32, k_hi: u32) -> Rational {
    let mut prod = Rational::one();
    for k in k_lo..=k_hi {
        let m = SparseSchedule::special_marginal(k);
        prod *= m.p1();
    }
    prod
}

/// Certified (lower, upper) bounds on log2 of a positive rational, within
/// about 1e-12 of each other.
pub fn log2_bounds(r: &Rational) -> (f64, f64) {
    assert!(r.is_positive(), "log2 of a nonpositive rational");
    let num = r.numer().magnitude();
    let den = r.denom().magnitude();
    let a = num.bits() as i64;
    let b = den.bits() as i64;
    // scale so the quotient carries ~64 significant bits
    let shift = 64 + b - a;
    let q: Uint = if shift >= 0 {
        (num << shift as usize) / den
    } else {
        num / (den << (-shift) as usize)
    };
    let q = q.to_f64().expect("quotient fits by construction");
    let guard = 1e-12;
    (
        q.log2() - shift as f64 - guard,
        (q + 1.0).log2() - shift as f64 + guard,
    )
}

/// Compares r with 2^e. Float log bounds decide when they clear the boundary
/// by more than 1e-6; otherwise the comparison escalates to exact arithmetic.
pub fn cmp_log2(r: &Rational, e: i64) -> Ordering {
    let (lo, hi) = log2_bounds(r);
    let margin = 1e-6;
    if hi < e as f64 - margin {
        return Ordering::Less;
    }
    if lo > e as f64 + margin {
        return Ordering::Greater;
    }
    let num = r.numer().magnitude().clone();
    let den = r.denom().magnitude().clone();
    if e >= 0 {
        num.cmp(&(den << e as usize))
    } else {
        (num << (-e) as usize).cmp(&den)
    }
}

fn int_to_f64_upper(e: &Int) -> f64 {
    match e.to_f64() {
        Some(v) if v.is_finite() => v,
        _ => {
            if e.is_negative() {
                f64::MIN
            } else {
                f64::MAX
            }
        }
    }
}

/// One simulated block of a trajectory: boundary bit, interior ones count,
/// entry weight of the geodesic, and the exact block contribution to the
/// cocycle series.
#[derive(Clone, Debug)]
pub struct BlockReport {
    pub k: u32,
    pub interior_length: Uint,
    pub threshold: Uint,
    pub special_bit: u8,
    pub ones_count: Uint,
    /// False when the count came from the normal surrogate (k >= 4).
    pub count_is_exact: bool,
    /// The surrogate's normal draw hit the +-8 sigma clamp.
    pub surrogate_clamped: bool,
    pub weight_entry: CocycleValue,
    pub weight_entry_log2: i64,
    /// ones_count x weight_entry, exact.
    pub block_sum: Rational,
    pub exceeds_threshold: bool,
}

const SPECIAL_LANE: u64 = 1 << 33;
const INTERIOR_LANE: u64 = 1 << 34;
const SURROGATE_CLAMP: f64 = 8.0;

fn special_threshold(k: u32) -> u64 {
    rng::bernoulli_threshold(SparseSchedule::special_marginal(k).p1())
}

fn sample_special_bit(seed: u64, k: u32) -> u8 {
    let th = special_threshold(k);
    let draw = match SparseSchedule::n_u64(k) {
        // matches the bit-level lazy tail at the same seed
        Some(nk) => rng::noise(seed, nk),
        None => rng::noise(rng::split(seed, SPECIAL_LANE + k as u64), 0),
    };
    u8::from(draw < th)
}

/// Exact interior count by scanning each fair bit (k <= 3 only).
fn exact_interior_count(seed: u64, k: u32) -> u64 {
    let lo = SparseSchedule::n_u64(k).expect("k <= 3");
    let hi = SparseSchedule::n_u64(k + 1).expect("k <= 4");
    let mut count = 0u64;
    for n in (lo + 1)..hi {
        count += u64::from(rng::noise(seed, n) >> 63 == 0);
    }
    count
}

/// Normal surrogate for Binomial(n', 1/2) at scales where bit-level
/// simulation is impossible: mean + z * sqrt(n')/2 with z clamped to
/// +-8 sigma, in fixed-point big-integer arithmetic.
fn surrogate_interior_count(seed: u64, k: u32, interior: &Uint) -> (Uint, bool) {
    let lane = rng::split(seed, INTERIOR_LANE + k as u64);
    let z = rng::standard_normal(rng::noise(lane, 0), rng::noise(lane, 1));
    let clamped = z.abs() > SURROGATE_CLAMP;
    let z = z.clamp(-SURROGATE_CLAMP, SURROGATE_CLAMP);
    let mean: Uint = interior >> 1;
    let sd2 = interior.sqrt(); // 2 * sd
    let z_fixed = Uint::from((z.abs() * (1u64 << 20) as f64).round() as u64);
    let dev: Uint = (sd2 * z_fixed) >> 21;
    let count = if z < 0.0 {
        if dev > mean {
            Uint::zero()
        } else {
            &mean - &dev
        }
    } else {
        (&mean + &dev).min(interior.clone())
    };
    (count, clamped)
}

/// Simulates blocks 1..=k_blocks of the sparse geodesic at block
/// granularity: special boundary bits and interior ones counts only, which
/// determine the entry weight and the block's contribution exactly.
pub fn block_coarse_trajectory(seed: u64, k_blocks: u32) -> Result<Vec<BlockReport>> {
    block_coarse_trajectory_with(seed, k_blocks, BlockConvention::Open)
}

pub fn block_coarse_trajectory_with(
    seed: u64,
    k_blocks: u32,
    convention: BlockConvention,
) -> Result<Vec<BlockReport>> {
    if k_blocks == 0 || k_blocks > 16 {
        return Err(Error::InvalidParameter(
            "block-coarse trajectories cover 1..=16 blocks".into(),
        ));
    }
    let mut reports = Vec::with_capacity(k_blocks as usize);
    let mut weight_log2 = 0i64;
    for k in 1..=k_blocks {
        let special_bit = sample_special_bit(seed, k);
        if special_bit == 1 {
            weight_log2 -= k as i64;
        }
        let interior = convention.interior_length(k);
        let (ones_count, count_is_exact, surrogate_clamped) = if k <= 3 {
            let mut c = exact_interior_count(seed, k);
            if convention == BlockConvention::Closed {
                // the closed span includes the left boundary index n_k
                c += u64::from(special_bit);
            }
            (Uint::from(c), true, false)
        } else {
            let (c, clamped) = surrogate_interior_count(seed, k, &interior);
            (c, false, clamped)
        };
        let threshold = SparseSchedule::p(k);
        let weight = pow2(weight_log2);
        let block_sum = Rational::from(Int::from(ones_count.clone())) * &weight;
        reports.push(BlockReport {
            k,
            interior_length: interior,
            threshold: threshold.clone(),
            special_bit,
            ones_count: ones_count.clone(),
            count_is_exact,
            surrogate_clamped,
            weight_entry: CocycleValue::new(weight, Some(2)),
            weight_entry_log2: weight_log2,
            block_sum,
            exceeds_threshold: ones_count > threshold,
        });
    }
    Ok(reports)
}

/// Per-trajectory roll-up used by the vanishing report and its CSV.
#[derive(Clone, Debug)]
pub struct TrajectorySummary {
    pub seed: u64,
    /// log2 of the cocycle envelope after the last block.
    pub envelope_log2: i64,
    /// Exact cumulative sum of block sums.
    pub partial_sum: Rational,
    /// Special bits were 1 for every k in 3..=min(10, k_blocks).
    pub all_specials_hit_3_to_10: bool,
    /// Every block with ones_count > p_k had block_sum >= 1.
    pub claim_holds: bool,
    /// Any block used the surrogate sampler.
    pub any_approximate: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VanishingReport {
    pub master_seed: u64,
    pub n_paths: u64,
    pub k_blocks: u32,
    /// Paths whose envelope is at most 2^{envelope_bound_log2}.
    pub envelope_bound_log2: i64,
    pub envelope_fraction: f64,
    /// Paths whose cumulative block sum reaches 2^{partial_sum_bound_log2}
    /// (compared exactly).
    pub partial_sum_bound_log2: i64,
    pub partial_sum_fraction: f64,
    pub all_specials_hit_fraction: f64,
    /// Exact check across every path and block: ones_count > p_k implies
    /// block_sum >= 1.
    pub claim_holds_everywhere: bool,
    pub mean_envelope_log2: f64,
}

/// Simulates n_paths block-coarse trajectories (path p seeded by
/// split(master_seed, p)) and aggregates the vanishing/nonsummability
/// statistics.
pub fn vanishing_report(
    master_seed: u64,
    n_paths: u64,
    k_blocks: u32,
    envelope_bound_log2: i64,
    partial_sum_bound_log2: i64,
) -> Result<(VanishingReport, Vec<TrajectorySummary>)> {
    let summaries: Vec<TrajectorySummary> = (0..n_paths)
        .into_par_iter()
        .map(|p| {
            let seed = rng::split(master_seed, p);
            let blocks = block_coarse_trajectory(seed, k_blocks)?;
            Ok(summarize_trajectory(seed, &blocks))
        })
        .collect::<Result<_>>()?;
    let count = |f: &dyn Fn(&TrajectorySummary) -> bool| {
        summaries.iter().filter(|s| f(s)).count() as f64 / n_paths as f64
    };
    let partial_bound = pow2(partial_sum_bound_log2);
    let report = VanishingReport {
        master_seed,
        n_paths,
        k_blocks,
        envelope_bound_log2,
        envelope_fraction: count(&|s| s.envelope_log2 <= envelope_bound_log2),
        partial_sum_bound_log2,
        partial_sum_fraction: count(&|s| s.partial_sum >= partial_bound),
        all_specials_hit_fraction: count(&|s| s.all_specials_hit_3_to_10),
        claim_holds_everywhere: summaries.iter().all(|s| s.claim_holds),
        mean_envelope_log2: summaries.iter().map(|s| s.envelope_log2 as f64).sum::<f64>()
            / n_paths as f64,
    };
    Ok((report, summaries))
}

pub fn summarize_trajectory(seed: u64, blocks: &[BlockReport]) -> TrajectorySummary {
    let mut partial_sum = Rational::zero();
    let mut claim_holds = true;
    let mut any_approximate = false;
    let mut all_hit = true;
    for b in blocks {
        partial_sum += &b.block_sum;
        if b.exceeds_threshold && b.block_sum < Rational::one() {
            claim_holds = false;
        }
        any_approximate |= !b.count_is_exact;
        if (3..=10).contains(&b.k) && b.special_bit == 0 {
            all_hit = false;
        }
    }
    TrajectorySummary {
        seed,
        envelope_log2: blocks.last().map(|b| b.weight_entry_log2).unwrap_or(0),
        partial_sum,
        all_specials_hit_3_to_10: all_hit,
        claim_holds,
        any_approximate,
    }
}

/// CSV: one row per (path, block); log columns are certified-f64 renderings
/// of the exact rationals.
pub fn write_trajectories_csv<W: std::io::Write>(
    mut w: W,
    master_seed: u64,
    n_paths: u64,
    k_blocks: u32,
) -> Result<()> {
    writeln!(
        w,
        "path,seed,k,special_bit,ones_count,count_is_exact,envelope_log2,block_sum_log2,partial_sum_log2"
    )?;
    for p in 0..n_paths {
        let seed = rng::split(master_seed, p);
        let blocks = block_coarse_trajectory(seed, k_blocks)?;
        let mut partial = Rational::zero();
        for b in &blocks {
            partial += &b.block_sum;
            let block_log2 = if b.ones_count.is_zero() {
                f64::NEG_INFINITY
            } else {
                log2_bounds(&b.block_sum).1
            };
            let partial_log2 = if partial.is_zero() {
                f64::NEG_INFINITY
            } else {
                log2_bounds(&partial).1
            };
            writeln!(
                w,
                "{},{},{},{},{},{},{},{},{}",
                p,
                seed,
                b.k,
                b.special_bit,
                b.ones_count,
                b.count_is_exact,
                b.weight_entry_log2,
                block_log2,
                partial_log2
            )?;
        }
    }
    Ok(())
}
