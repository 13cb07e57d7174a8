//! The Radon-Nikodym cocycle of the orbit relation, along flips and forward
//! geodesics, with an integer log-domain fast path.
//!
//! Every value is an exact positive rational. When the measure's ratios are
//! all integer powers of one base (period-j: base j-1; sparse: base 2) the
//! value also carries its exponent, and long walks can stay in machine
//! integers.

use num::{One, Signed, Zero};

use crate::bitspace::{BitPrefix, BitSequence};
use crate::error::Result;
use crate::measures::{ratio_power_exponent, MeasureSpec};
use crate::{Int, Rational, Uint};

/// An exact cocycle value, optionally with a proof that it is base^exponent.
#[derive(Clone, Debug, PartialEq)]
pub struct CocycleValue {
    value: Rational,
    pow: Option<PowerForm>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PowerForm {
    pub base: u64,
    pub exponent: i64,
}

impl CocycleValue {
    pub fn new(value: Rational, preferred_base: Option<u64>) -> Self {
        assert!(value > Rational::zero(), "cocycle values are positive");
        let pow = preferred_base.and_then(|base| {
            ratio_power_exponent(&value, base).map(|exponent| PowerForm { base, exponent })
        });
        CocycleValue { value, pow }
    }

    pub fn one(preferred_base: Option<u64>) -> Self {
        Self::new(Rational::one(), preferred_base)
    }

    pub fn value(&self) -> &Rational {
        &self.value
    }

    pub fn pow(&self) -> Option<PowerForm> {
        self.pow
    }

    /// Exponent e with value = 2^e, when the value is dyadic.
    pub fn log2(&self) -> Option<i64> {
        ratio_power_exponent(&self.value, 2)
    }
}

/// m_n(1 - b) / m_n(b): the mass ratio a single flip at n trades when the
/// current bit is b.
pub fn flip_weight_for_bit(spec: &MeasureSpec, n: u64, bit: u8) -> Rational {
    let m = spec.marginal_at(n);
    match bit {
        1 => m.p0() / m.p1(),
        _ => m.p1() / m.p0(),
    }
}

/// w_x(b_n x) = (1 - m_n(x_n)) / m_n(x_n).
pub fn flip_weight(spec: &MeasureSpec, x: &BitSequence, n: u64) -> Result<CocycleValue> {
    let value = flip_weight_for_bit(spec, n, x.bit(n)?);
    Ok(CocycleValue::new(value, spec.preferred_log_base()))
}

/// w_x(f^k x): the product of m_n(0)/m_n(1) over the first k ones of x.
pub fn geodesic_cocycle(spec: &MeasureSpec, x: &BitSequence, k: u64) -> Result<CocycleValue> {
    let mut value = Rational::one();
    for n in x.ones_positions(k)? {
        value *= spec.ratio_at(n);
    }
    Ok(CocycleValue::new(value, spec.preferred_log_base()))
}

/// The lazy cocycle: scan indices 0..k, multiplying in the ratio only where
/// x has a 1. Its jumps happen exactly at the positions of ones.
pub fn lazy_cocycle(spec: &MeasureSpec, x: &BitSequence, k: u64) -> Result<CocycleValue> {
    let mut value = Rational::one();
    for n in 0..k {
        if x.bit(n)? == 1 {
            value *= spec.ratio_at(n);
        }
    }
    Ok(CocycleValue::new(value, spec.preferred_log_base()))
}

/// Integer log of the lazy cocycle: L_0 = 0 and L_{k+1} adds the ratio
/// exponent at k when x_k = 1. Length steps + 1.
pub fn log_walk(
    spec: &MeasureSpec,
    x: &BitSequence,
    steps: u64,
    base: u64,
) -> Result<Vec<i64>> {
    let table = spec.ratio_log_table(base)?;
    let mut walk = Vec::with_capacity(steps as usize + 1);
    let mut l = 0i64;
    walk.push(l);
    for n in 0..steps {
        if x.bit(n)? == 1 {
            l += table.exponent_at(n);
        }
        walk.push(l);
    }
    Ok(walk)
}

/// Exact check of the cocycle identity
/// w_x(f^{k+m} x) = w_x(f^k x) * w_{f^k x}(f^m (f^k x)).
pub fn chain_rule_check(spec: &MeasureSpec, x: &BitSequence, k: u64, m: u64) -> Result<bool> {
    let whole = geodesic_cocycle(spec, x, k + m)?;
    let first = geodesic_cocycle(spec, x, k)?;
    let shifted = x.geodesic_point(k)?;
    let second = geodesic_cocycle(spec, &shifted, m)?;
    Ok(whole.value() == &(first.value() * second.value()))
}

/// One row of a geodesic trace: after step k the cocycle holds `value` and
/// the running sum of values (steps 0..=k) is `partial_sum`.
#[derive(Clone, Debug)]
pub struct TraceEntry {
    pub k: u64,
    pub flipped_position: Option<u64>,
    pub value: CocycleValue,
    pub partial_sum: Rational,
}

/// The cocycle along a forward geodesic, with running partial sums of
/// w_x(f^k x) (the series whose divergence the vanishing phenomenon probes).
#[derive(Clone, Debug)]
pub struct GeodesicTrace {
    pub start_prefix: BitPrefix,
    pub seed: u64,
    pub entries: Vec<TraceEntry>,
}

impl GeodesicTrace {
    /// Trace `steps` applications of the least-deletion map from x.
    pub fn compute(spec: &MeasureSpec, x: &BitSequence, steps: u64) -> Result<GeodesicTrace> {
        let base = spec.preferred_log_base();
        let mut entries = Vec::with_capacity(steps as usize + 1);
        let mut value = Rational::one();
        let mut partial = Rational::one();
        entries.push(TraceEntry {
            k: 0,
            flipped_position: None,
            value: CocycleValue::one(base),
            partial_sum: partial.clone(),
        });
        for (i, pos) in x.ones_positions(steps)?.into_iter().enumerate() {
            value *= spec.ratio_at(pos);
            partial += &value;
            entries.push(TraceEntry {
                k: i as u64 + 1,
                flipped_position: Some(pos),
                value: CocycleValue::new(value.clone(), base),
                partial_sum: partial.clone(),
            });
        }
        Ok(GeodesicTrace {
            start_prefix: x.prefix().clone(),
            seed: x.seed(),
            entries,
        })
    }

    pub fn final_partial_sum(&self) -> &Rational {
        &self.entries.last().expect("trace has a base row").partial_sum
    }

    /// CSV with one row per step. The log column is the base-2 exponent and
    /// stays empty for non-dyadic values; partial sums are 12-digit decimals.
    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "k,flipped_position,value_numerator,value_denominator,log_value_if_dyadic,partial_sum"
        )?;
        for e in &self.entries {
            let pos = e.flipped_position.map(|p| p.to_string()).unwrap_or_default();
            let log = e.value.log2().map(|l| l.to_string()).unwrap_or_default();
            writeln!(
                w,
                "{},{},{},{},{},{}",
                e.k,
                pos,
                e.value.value().numer(),
                e.value.value().denom(),
                log,
                decimal_string(&e.partial_sum, 12)
            )?;
        }
        Ok(())
    }
}

/// Fixed-point decimal rendering of a nonnegative rational, truncated toward
/// zero at `digits` fractional digits.
pub fn decimal_string(r: &Rational, digits: u32) -> String {
    assert!(!r.numer().is_negative(), "decimal rendering expects r >= 0");
    let scale = Int::from(Uint::from(10u8).pow(digits));
    let scaled: Int = r.numer() * scale / r.denom();
    let s = scaled.to_string();
    let digits = digits as usize;
    let padded = if s.len() <= digits {
        format!("{}{s}", "0".repeat(digits + 1 - s.len()))
    } else {
        s
    };
    let (ip, fp) = padded.split_at(padded.len() - digits);
    format!("{ip}.{fp}")
}
