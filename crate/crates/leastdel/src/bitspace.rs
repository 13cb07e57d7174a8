//! Points of binary Cantor space, the least-deletion map, and bit flips.
//!
//! A point is an infinite binary sequence. We store a finite explicit prefix
//! plus a deterministic lazy tail sampled from a measure; bits beyond the
//! prefix are pure functions of (seed, index, marginal), so reads are
//! order-independent and two sequences built from the same data agree
//! everywhere. Orbit moves (flip the first 1, flip bit n) are recorded as a
//! toggle set on top of the base point.

use std::fmt;
use std::str::FromStr;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::measures::MeasureSpec;

/// Default materialization cap: sequences that stay zero this long are
/// treated as outside the space rather than scanned forever.
pub const DEFAULT_CAP: u64 = 1 << 26;

/// A finite binary word, used both as an explicit sequence head and as a
/// cylinder set.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BitPrefix {
    bits: Vec<u8>,
}

impl BitPrefix {
    pub fn new(bits: Vec<u8>) -> Result<Self> {
        if let Some(b) = bits.iter().find(|b| **b > 1) {
            return Err(Error::InvalidParameter(format!(
                "prefix digits must be 0 or 1, got {b}"
            )));
        }
        Ok(BitPrefix { bits })
    }

    pub fn empty() -> Self {
        BitPrefix { bits: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn bit(&self, index: usize) -> Result<u8> {
        self.bits
            .get(index)
            .copied()
            .ok_or(Error::IndexOutOfPrefix {
                index: index as u64,
                depth: self.bits.len(),
            })
    }

    /// The word with bit `index` complemented; the image cylinder under b_n.
    pub fn flipped(&self, index: usize) -> Result<Self> {
        let mut bits = self.bits.clone();
        match bits.get_mut(index) {
            Some(b) => {
                *b = 1 - *b;
                Ok(BitPrefix { bits })
            }
            None => Err(Error::IndexOutOfPrefix {
                index: index as u64,
                depth: self.bits.len(),
            }),
        }
    }

    pub fn extended(&self, bit: u8) -> Result<Self> {
        let mut bits = self.bits.clone();
        bits.push(bit);
        BitPrefix::new(bits)
    }

    /// All 2^depth words of the given length, in lexicographic order with
    /// index 0 varying slowest.
    pub fn enumerate(depth: usize) -> Vec<BitPrefix> {
        assert!(depth < usize::BITS as usize - 1);
        (0..1usize << depth)
            .map(|w| BitPrefix {
                bits: (0..depth).map(|i| ((w >> (depth - 1 - i)) & 1) as u8).collect(),
            })
            .collect()
    }
}

impl fmt::Display for BitPrefix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in &self.bits {
            write!(f, "{b}")?;
        }
        Ok(())
    }
}

impl FromStr for BitPrefix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut bits = Vec::with_capacity(s.len());
        for c in s.chars() {
            match c {
                '0' => bits.push(0),
                '1' => bits.push(1),
                c if c.is_whitespace() => {}
                c => {
                    return Err(Error::InvalidParameter(format!(
                        "prefix strings use only 0 and 1, got {c:?}"
                    )))
                }
            }
        }
        Ok(BitPrefix { bits })
    }
}

/// One step of a forward geodesic: step k consumed the 1 at this position.
#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize)]
pub struct GeodesicStep {
    pub step_index: u64,
    pub flipped_position: u64,
}

/// A point of the space: explicit prefix, deterministic sampled tail, and a
/// set of positions toggled by orbit moves.
#[derive(Debug)]
pub struct BitSequence {
    prefix: BitPrefix,
    seed: u64,
    measure: Arc<MeasureSpec>,
    flipped: BTreeSet<u64>,
    cap: u64,
    frontier: AtomicU64,
}

impl Clone for BitSequence {
    fn clone(&self) -> Self {
        BitSequence {
            prefix: self.prefix.clone(),
            seed: self.seed,
            measure: Arc::clone(&self.measure),
            flipped: self.flipped.clone(),
            cap: self.cap,
            frontier: AtomicU64::new(self.frontier.load(Ordering::Relaxed)),
        }
    }
}

impl BitSequence {
    pub fn new(prefix: BitPrefix, measure: Arc<MeasureSpec>, seed: u64) -> Self {
        Self::with_cap(prefix, measure, seed, DEFAULT_CAP)
    }

    pub fn with_cap(prefix: BitPrefix, measure: Arc<MeasureSpec>, seed: u64, cap: u64) -> Self {
        let frontier = AtomicU64::new(prefix.len() as u64);
        BitSequence {
            prefix,
            seed,
            measure,
            flipped: BTreeSet::new(),
            cap,
            frontier,
        }
    }

    pub fn prefix(&self) -> &BitPrefix {
        &self.prefix
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn measure(&self) -> &Arc<MeasureSpec> {
        &self.measure
    }

    pub fn cap(&self) -> u64 {
        self.cap
    }

    /// Highest index materialized so far, plus one.
    pub fn generated_upto(&self) -> u64 {
        self.frontier.load(Ordering::Relaxed)
    }

    /// The bit at index n. Errors rather than read past the cap.
    pub fn bit(&self, n: u64) -> Result<u8> {
        if n >= self.cap {
            return Err(Error::CapExceeded { cap: self.cap });
        }
        self.frontier.fetch_max(n + 1, Ordering::Relaxed);
        let base = if (n as usize) < self.prefix.len() {
            self.prefix.bits()[n as usize]
        } else {
            self.measure.sample_bit(n, self.seed)
        };
        Ok(if self.flipped.contains(&n) { 1 - base } else { base })
    }

    /// min{ n : x_n = 1 }.
    pub fn first_one_index(&self) -> Result<u64> {
        self.first_one_from(0)
    }

    fn first_one_from(&self, start: u64) -> Result<u64> {
        for n in start..self.cap {
            if self.bit(n)? == 1 {
                return Ok(n);
            }
        }
        Err(Error::CapExceeded { cap: self.cap })
    }

    /// x with bit n complemented; applying twice returns the original point.
    pub fn bit_flip(&self, n: u64) -> BitSequence {
        let mut out = self.clone();
        if !out.flipped.remove(&n) {
            out.flipped.insert(n);
        }
        out
    }

    /// The least-deletion map: flip the first 1 to 0.
    pub fn least_deletion(&self) -> Result<BitSequence> {
        let n = self.first_one_index()?;
        Ok(self.bit_flip(n))
    }

    /// Positions of the first k ones, in increasing order.
    pub fn ones_positions(&self, k: u64) -> Result<Vec<u64>> {
        let mut out = Vec::with_capacity(k as usize);
        let mut from = 0;
        for _ in 0..k {
            let n = self.first_one_from(from)?;
            out.push(n);
            from = n + 1;
        }
        Ok(out)
    }

    /// The positions consumed by the first k applications of the
    /// least-deletion map, as geodesic steps.
    pub fn forward_geodesic(&self, k: u64) -> Result<Vec<GeodesicStep>> {
        Ok(self
            .ones_positions(k)?
            .into_iter()
            .enumerate()
            .map(|(i, p)| GeodesicStep {
                step_index: i as u64,
                flipped_position: p,
            })
            .collect())
    }

    /// f^k x: the point with its first k ones deleted.
    pub fn geodesic_point(&self, k: u64) -> Result<BitSequence> {
        let mut out = self.clone();
        for p in self.ones_positions(k)? {
            out = out.bit_flip(p);
        }
        Ok(out)
    }

    /// Bit-for-bit agreement on indices [0, upto).
    pub fn agrees_with(&self, other: &BitSequence, upto: u64) -> Result<bool> {
        for n in 0..upto {
            if self.bit(n)? != other.bit(n)? {
                return Ok(false);
            }
        }
        Ok(true)
    }
}
