//! Brute-force oracle for the tilted mass transport identity on finite
//! cylinder algebras: finite flip compositions as partial bijections,
//! depth-d simple functions as integrands, and both sides of the transport
//! identity evaluated as exact rational sums along independent code paths.

use std::collections::BTreeSet;

use num::{One, Zero};
use serde::Serialize;

use crate::bitspace::BitPrefix;
use crate::cocycle::flip_weight_for_bit;
use crate::error::{Error, Result};
use crate::measures::MeasureSpec;
use crate::Rational;

/// Exhaustive evaluation walks all 2^d prefixes; past this the oracle is no
/// longer brute-forceable in reasonable time.
pub const MAX_DEPTH: usize = 12;

/// A composition of coordinate flips b_n over a finite index set, optionally
/// restricted to a cylinder. Flips commute, so the set determines the map,
/// and the composition is an involution on its domain.
#[derive(Clone, Debug, Default)]
pub struct FlipBijection {
    flips: BTreeSet<u64>,
    domain_constraint: Option<BitPrefix>,
}

impl FlipBijection {
    pub fn new(flips: impl IntoIterator<Item = u64>) -> Self {
        FlipBijection {
            flips: flips.into_iter().collect(),
            domain_constraint: None,
        }
    }

    pub fn identity() -> Self {
        FlipBijection::default()
    }

    pub fn restricted_to(mut self, domain: BitPrefix) -> Self {
        self.domain_constraint = Some(domain);
        self
    }

    pub fn flips(&self) -> &BTreeSet<u64> {
        &self.flips
    }

    pub fn domain_constraint(&self) -> Option<&BitPrefix> {
        self.domain_constraint.as_ref()
    }

    /// Largest index this map touches (flips and domain cylinder alike).
    pub fn max_index(&self) -> Option<u64> {
        let flip_max = self.flips.iter().next_back().copied();
        let dom_max = self
            .domain_constraint
            .as_ref()
            .filter(|d| !d.is_empty())
            .map(|d| d.len() as u64 - 1);
        flip_max.max(dom_max)
    }

    /// Applies the flip composition to a prefix long enough to contain every
    /// flipped index.
    pub fn apply(&self, p: &BitPrefix) -> Result<BitPrefix> {
        let mut out = p.clone();
        for &n in &self.flips {
            out = out.flipped(n as usize)?;
        }
        Ok(out)
    }

    /// Whether the cylinder [p] lies inside the domain.
    pub fn contains(&self, p: &BitPrefix) -> bool {
        match &self.domain_constraint {
            None => true,
            Some(d) => p.len() >= d.len() && p.bits()[..d.len()] == *d.bits(),
        }
    }

    /// Whether [p] lies inside the image, i.e. its preimage is in the domain.
    pub fn image_contains(&self, p: &BitPrefix) -> Result<bool> {
        Ok(self.contains(&self.apply(p)?))
    }

    /// Product of single-flip mass ratios at p's bits: the cocycle weight
    /// w_x(gamma x) for any x in the cylinder [p].
    pub fn weight_at(&self, spec: &MeasureSpec, p: &BitPrefix) -> Result<Rational> {
        let mut w = Rational::one();
        for &n in &self.flips {
            let bit = p.bit(n as usize)?;
            w *= flip_weight_for_bit(spec, n, bit);
        }
        Ok(w)
    }
}

/// A simple function constant on depth-d cylinders, stored as one exact
/// rational per lexicographic prefix.
#[derive(Clone, Debug)]
pub struct SimpleFunction {
    depth: usize,
    values: Vec<Rational>,
}

impl SimpleFunction {
    pub fn new(depth: usize, values: Vec<Rational>) -> Result<Self> {
        if depth > MAX_DEPTH {
            return Err(Error::InvalidParameter(format!(
                "simple-function depth {depth} above exhaustive cap {MAX_DEPTH}"
            )));
        }
        if values.len() != 1 << depth {
            return Err(Error::InvalidParameter(format!(
                "depth {depth} needs {} values, got {}",
                1usize << depth,
                values.len()
            )));
        }
        Ok(SimpleFunction { depth, values })
    }

    pub fn constant(depth: usize, value: Rational) -> Result<Self> {
        SimpleFunction::new(depth, vec![value; 1 << depth])
    }

    /// Indicator of the cylinder [c], refined to the given depth.
    pub fn indicator(c: &BitPrefix, depth: usize) -> Result<Self> {
        if depth < c.len() {
            return Err(Error::DepthMismatch {
                needed: c.len(),
                depth,
            });
        }
        let values = BitPrefix::enumerate(depth)
            .iter()
            .map(|p| {
                if p.bits()[..c.len()] == *c.bits() {
                    Rational::one()
                } else {
                    Rational::zero()
                }
            })
            .collect();
        SimpleFunction::new(depth, values)
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn value_at(&self, p: &BitPrefix) -> &Rational {
        assert_eq!(p.len(), self.depth, "prefix depth mismatch");
        let mut idx = 0usize;
        for &b in p.bits() {
            idx = (idx << 1) | b as usize;
        }
        &self.values[idx]
    }

    /// Exact integral against the measure.
    pub fn integral(&self, spec: &MeasureSpec) -> Rational {
        let mut acc = Rational::zero();
        for p in BitPrefix::enumerate(self.depth) {
            acc += self.value_at(&p) * spec.cylinder_measure(&p);
        }
        acc
    }
}

/// Both measures in the single-flip pushforward identity
/// mu(b_n(c)) = (m_n(1 - a_n)/m_n(a_n)) mu(c), evaluated independently.
#[derive(Clone, Debug)]
pub struct PushforwardCheck {
    pub flipped: BitPrefix,
    pub pushed_measure: Rational,
    pub base_measure: Rational,
    pub weight: Rational,
    pub identity_holds: bool,
}

pub fn pushforward_check(spec: &MeasureSpec, n: u64, c: &BitPrefix) -> Result<PushforwardCheck> {
    let flipped = c.flipped(n as usize)?;
    let pushed_measure = spec.cylinder_measure(&flipped);
    let base_measure = spec.cylinder_measure(c);
    let weight = flip_weight_for_bit(spec, n, c.bit(n as usize)?);
    let identity_holds = pushed_measure == &weight * &base_measure;
    Ok(PushforwardCheck {
        flipped,
        pushed_measure,
        base_measure,
        weight,
        identity_holds,
    })
}

/// mu(b_n(c)), exactly; the identity against the flip weight is checked on
/// the way.
pub fn pushforward_cylinder(spec: &MeasureSpec, n: u64, c: &BitPrefix) -> Result<Rational> {
    let check = pushforward_check(spec, n, c)?;
    debug_assert!(check.identity_holds);
    Ok(check.pushed_measure)
}

/// Outcome of one transport-identity evaluation.
#[derive(Clone, Debug)]
pub struct MtpVerification {
    pub lhs: Rational,
    pub rhs: Rational,
    pub residual: Rational,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct MtpReport {
    pub case: String,
    pub lhs: String,
    pub rhs: String,
    pub residual: String,
    pub pass: bool,
}

impl MtpVerification {
    pub fn report(&self, case: impl Into<String>) -> MtpReport {
        MtpReport {
            case: case.into(),
            lhs: self.lhs.to_string(),
            rhs: self.rhs.to_string(),
            residual: self.residual.to_string(),
            pass: self.pass,
        }
    }
}

/// Evaluates both sides of
///   int_{dom} g dmu = int_{im} g(gamma x) w_x(gamma x) dmu(x)
/// over the depth-d cylinder algebra. The left side sums g directly over
/// domain prefixes; the right side walks image prefixes, applies gamma, and
/// builds the weight coordinate by coordinate. The residual must be zero.
pub fn verify_mtp(
    spec: &MeasureSpec,
    gamma: &FlipBijection,
    g: &SimpleFunction,
) -> Result<MtpVerification> {
    if let Some(m) = gamma.max_index() {
        if m >= g.depth() as u64 {
            return Err(Error::DepthMismatch {
                needed: m as usize + 1,
                depth: g.depth(),
            });
        }
    }
    let prefixes = BitPrefix::enumerate(g.depth());

    let mut lhs = Rational::zero();
    for p in &prefixes {
        if gamma.contains(p) {
            lhs += g.value_at(p) * spec.cylinder_measure(p);
        }
    }

    let mut rhs = Rational::zero();
    for p in &prefixes {
        if gamma.image_contains(p)? {
            let image = gamma.apply(p)?;
            rhs += g.value_at(&image) * gamma.weight_at(spec, p)? * spec.cylinder_measure(p);
        }
    }

    let residual = &lhs - &rhs;
    let pass = residual.is_zero();
    Ok(MtpVerification {
        lhs,
        rhs,
        residual,
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measures::Marginal;
    use crate::{ratio, rng};

    fn families() -> Vec<MeasureSpec> {
        vec![
            MeasureSpec::period_j(3).unwrap(),
            MeasureSpec::sparse(),
            MeasureSpec::custom(
                vec![
                    Marginal::from_p0(ratio(2, 7)).unwrap(),
                    Marginal::from_p0(ratio(1, 2)).unwrap(),
                ],
                vec![
                    Marginal::from_p0(ratio(3, 5)).unwrap(),
                    Marginal::from_p0(ratio(1, 4)).unwrap(),
                    Marginal::from_p0(ratio(5, 6)).unwrap(),
                ],
            )
            .unwrap(),
        ]
    }

    fn prefix(bits: &[u8]) -> BitPrefix {
        BitPrefix::new(bits.to_vec()).unwrap()
    }

    #[test]
    fn pushforward_flip_at_zero_on_period3() {
        let spec = MeasureSpec::period_j(3).unwrap();
        let c = prefix(&[1]);
        let check = pushforward_check(&spec, 0, &c).unwrap();
        assert_eq!(check.pushed_measure, ratio(1, 3));
        assert_eq!(check.base_measure, ratio(2, 3));
        assert_eq!(check.weight, ratio(1, 2));
        assert!(check.identity_holds);
        assert_eq!(pushforward_cylinder(&spec, 0, &c).unwrap(), ratio(1, 3));
    }

    #[test]
    fn pushforward_is_invariant_for_the_fair_measure() {
        let fair = MeasureSpec::periodic(vec![Marginal::fair()]).unwrap();
        for depth in 1..=6usize {
            for c in BitPrefix::enumerate(depth) {
                for n in 0..depth as u64 {
                    let check = pushforward_check(&fair, n, &c).unwrap();
                    assert_eq!(check.pushed_measure, check.base_measure);
                    assert!(check.weight.is_one());
                    assert!(check.identity_holds);
                }
            }
        }
    }

    #[test]
    fn pushforward_identity_exhaustive_depth6() {
        for spec in families() {
            for c in BitPrefix::enumerate(6) {
                for n in 0..6u64 {
                    assert!(pushforward_check(&spec, n, &c).unwrap().identity_holds);
                }
            }
        }
    }

    #[test]
    fn pushforward_ratio_depends_only_on_the_bit_at_n() {
        for spec in families() {
            for n in 0..4u64 {
                let mut seen = [None, None];
                for c in BitPrefix::enumerate(4) {
                    let check = pushforward_check(&spec, n, &c).unwrap();
                    let r = check.pushed_measure / check.base_measure;
                    let slot = &mut seen[c.bit(n as usize).unwrap() as usize];
                    match slot {
                        None => *slot = Some(r),
                        Some(prev) => assert_eq!(*prev, r),
                    }
                }
            }
        }
    }

    #[test]
    fn pushforward_needs_the_index_inside_the_prefix() {
        let spec = MeasureSpec::period_j(3).unwrap();
        assert!(matches!(
            pushforward_cylinder(&spec, 3, &prefix(&[1, 0, 1])),
            Err(Error::IndexOutOfPrefix { index: 3, depth: 3 })
        ));
    }

    #[test]
    fn identity_bijection_reduces_to_the_plain_integral() {
        for spec in families() {
            let g = SimpleFunction::new(
                3,
                (0..8).map(|i| ratio(i - 3, 5)).collect(),
            )
            .unwrap();
            let v = verify_mtp(&spec, &FlipBijection::identity(), &g).unwrap();
            assert!(v.pass);
            assert_eq!(v.lhs, g.integral(&spec));
            assert_eq!(v.rhs, g.integral(&spec));
        }
    }

    #[test]
    fn single_flip_against_indicator_hand_sum() {
        let spec = MeasureSpec::period_j(3).unwrap();
        let gamma = FlipBijection::new([1]);
        let g = SimpleFunction::indicator(&prefix(&[1, 0]), 2).unwrap();
        let v = verify_mtp(&spec, &gamma, &g).unwrap();
        // lhs: mu([10]) = (2/3)(2/3); rhs collects only [11], with weight
        // m_1(0)/m_1(1) = 2 and mu([11]) = (2/3)(1/3)
        assert_eq!(v.lhs, ratio(4, 9));
        assert_eq!(v.rhs, ratio(4, 9));
        assert!(v.pass);
        assert!(v.residual.is_zero());
    }

    #[test]
    fn restricted_domain_transports_the_right_mass() {
        let spec = MeasureSpec::period_j(3).unwrap();
        let gamma = FlipBijection::new([0]).restricted_to(prefix(&[1]));
        let g = SimpleFunction::constant(2, Rational::one()).unwrap();
        let v = verify_mtp(&spec, &gamma, &g).unwrap();
        assert_eq!(v.lhs, ratio(2, 3));
        assert!(v.pass);
        // domain and image are disjoint cylinders here
        assert!(gamma.contains(&prefix(&[1, 0])));
        assert!(!gamma.contains(&prefix(&[0, 1])));
        assert!(gamma.image_contains(&prefix(&[0, 1])).unwrap());
        assert!(!gamma.image_contains(&prefix(&[1, 0])).unwrap());
    }

    #[test]
    fn composition_applies_and_inverts() {
        let gamma = FlipBijection::new([0, 2, 3]);
        let p = prefix(&[1, 1, 0, 0, 1]);
        let q = gamma.apply(&p).unwrap();
        assert_eq!(q.bits(), &[0, 1, 1, 1, 1]);
        assert_eq!(gamma.apply(&q).unwrap(), p);
        assert_eq!(gamma.max_index(), Some(3));
        assert!(FlipBijection::identity().max_index().is_none());
    }

    #[test]
    fn depth_mismatch_is_reported() {
        let spec = MeasureSpec::period_j(3).unwrap();
        let g = SimpleFunction::constant(3, Rational::one()).unwrap();
        assert!(matches!(
            verify_mtp(&spec, &FlipBijection::new([5]), &g),
            Err(Error::DepthMismatch { needed: 6, depth: 3 })
        ));
        let wide = FlipBijection::new([0]).restricted_to(prefix(&[1, 0, 1, 1]));
        assert!(matches!(
            verify_mtp(&spec, &wide, &g),
            Err(Error::DepthMismatch { needed: 4, depth: 3 })
        ));
    }

    #[test]
    fn simple_function_validation() {
        assert!(SimpleFunction::new(2, vec![Rational::one(); 3]).is_err());
        assert!(SimpleFunction::new(13, vec![Rational::one(); 1 << 13]).is_err());
        assert!(SimpleFunction::indicator(&prefix(&[1, 0, 1]), 2).is_err());
        let g = SimpleFunction::indicator(&prefix(&[1, 0]), 3).unwrap();
        assert!(g.value_at(&prefix(&[1, 0, 1])).is_one());
        assert!(g.value_at(&prefix(&[0, 0, 1])).is_zero());
        // indicator integral is the cylinder mass
        let spec = MeasureSpec::period_j(3).unwrap();
        assert_eq!(g.integral(&spec), spec.cylinder_measure(&prefix(&[1, 0])));
    }

    #[test]
    fn randomized_cases_have_zero_residual() {
        let fams = families();
        let seed = 0x6d74_7031u64;
        let mut draw = {
            let mut ctr = 0u64;
            move || {
                ctr += 1;
                rng::noise(seed, ctr)
            }
        };
        for case in 0..500u64 {
            let spec = &fams[(case % 3) as usize];
            let depth = 2 + (draw() % 7) as usize;
            let n_flips = (draw() % 4) as usize;
            let mut gamma = FlipBijection::new((0..n_flips).map(|_| draw() % depth as u64));
            if draw() % 2 == 0 {
                let d = 1 + (draw() % depth as u64) as usize;
                let bits: Vec<u8> = (0..d).map(|_| (draw() & 1) as u8).collect();
                gamma = gamma.restricted_to(prefix(&bits));
            }
            let values: Vec<Rational> = (0..1usize << depth)
                .map(|_| ratio(draw() as i64 % 17 - 8, 1 + (draw() % 9) as i64))
                .collect();
            let g = SimpleFunction::new(depth, values).unwrap();
            let v = verify_mtp(spec, &gamma, &g).unwrap();
            assert!(v.residual.is_zero(), "case {case}");
            assert!(v.pass);
        }
    }

    #[test]
    fn report_serializes_exact_rationals() {
        let spec = MeasureSpec::period_j(3).unwrap();
        let g = SimpleFunction::indicator(&prefix(&[1, 0]), 2).unwrap();
        let v = verify_mtp(&spec, &FlipBijection::new([1]), &g).unwrap();
        let json = serde_json::to_string(&v.report("single_flip")).unwrap();
        assert_eq!(
            json,
            r#"{"case":"single_flip","lhs":"4/9","rhs":"4/9","residual":"0","pass":true}"#
        );
    }
}
