//! Step laws and lattice mass functions.
//!
//! A lattice step law is supported on `shift + span * k` for a finite set of
//! integer offsets `k`. At time `n` the walk lives on `shift * n + span * Z`, so
//! every mass function in the crate is indexed by the integer `k` and the
//! physical point is rebuilt as `shift * n + span * k`.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepKind {
    Lattice,
    /// Grid discretization of an absolutely continuous law.
    ContinuousGrid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepLaw<T> {
    shift: T,
    span: T,
    atoms: Vec<(i64, T)>,
    variance: T,
    period: i64,
    kind: StepKind,
}

/// JSON form `{"shift": .., "span": .., "atoms": [[k, p], ..]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLawJson {
    pub shift: f64,
    pub span: f64,
    pub atoms: Vec<(i64, f64)>,
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Builds and validates a lattice step law.
///
/// Duplicate offsets are merged and zero masses dropped. A law whose offsets
/// share a common factor is rejected, since its span is not the least one.
/// A law whose offset *differences* share a factor `d > 1` (the simple walk)
/// is accepted and reported as periodic with period `d`.
pub fn make_lattice_step<T: Real>(shift: T, span: T, offsets_masses: &[(i64, T)]) -> Result<StepLaw<T>> {
    build_step(shift, span, offsets_masses, StepKind::Lattice)
}

pub(crate) fn build_step<T: Real>(
    shift: T,
    span: T,
    offsets_masses: &[(i64, T)],
    kind: StepKind,
) -> Result<StepLaw<T>> {
    if !shift.is_finite() || !span.is_finite() || span <= T::zero() {
        return Err(Error::BadMass(format!("shift {shift} / span {span} invalid")));
    }
    let mut atoms: Vec<(i64, T)> = Vec::with_capacity(offsets_masses.len());
    for &(k, p) in offsets_masses {
        if !p.is_finite() || p < T::zero() {
            return Err(Error::BadMass(format!("mass {p} at offset {k}")));
        }
        atoms.push((k, p));
    }
    atoms.sort_by_key(|a| a.0);
    atoms.dedup_by(|later, first| {
        if later.0 == first.0 {
            first.1 += later.1;
            true
        } else {
            false
        }
    });
    let total: T = atoms.iter().map(|a| a.1).sum();
    if (total - T::one()).abs() > T::tol(1e-14) {
        return Err(Error::BadMass(format!("masses sum to {total:e}, not 1")));
    }
    atoms.retain(|a| a.1 > T::zero());
    if atoms.len() < 2 {
        return Err(Error::DegenerateSupport);
    }

    let g = atoms.iter().fold(0, |g, a| gcd(g, a.0));
    if g > 1 {
        return Err(Error::NonMaximalSpan { gcd: g });
    }
    let k0 = atoms[0].0;
    let period = atoms.iter().fold(0, |g, a| gcd(g, a.0 - k0));

    let value = |k: i64| shift + span * T::from_i64_lossy(k);
    let mean: T = atoms.iter().map(|&(k, p)| value(k) * p).sum();
    let scale = atoms.iter().map(|&(k, _)| value(k).abs()).fold(T::one(), T::max);
    if mean.abs() > T::tol(1e-12) * scale {
        return Err(Error::NonZeroMean { mean: mean.as_f64() });
    }
    let variance: T = atoms.iter().map(|&(k, p)| value(k) * value(k) * p).sum();

    Ok(StepLaw { shift, span, atoms, variance, period, kind })
}

impl<T: Real> StepLaw<T> {
    pub fn from_json(spec: &StepLawJson) -> Result<Self> {
        let atoms: Vec<(i64, T)> = spec.atoms.iter().map(|&(k, p)| (k, T::lit(p))).collect();
        make_lattice_step(T::lit(spec.shift), T::lit(spec.span), &atoms)
    }

    pub fn to_json(&self) -> StepLawJson {
        StepLawJson {
            shift: self.shift.as_f64(),
            span: self.span.as_f64(),
            atoms: self.atoms.iter().map(|&(k, p)| (k, p.as_f64())).collect(),
        }
    }

    pub fn shift(&self) -> T {
        self.shift
    }

    pub fn span(&self) -> T {
        self.span
    }

    /// Support offsets with their masses, sorted by offset.
    pub fn atoms(&self) -> &[(i64, T)] {
        &self.atoms
    }

    pub fn kind(&self) -> StepKind {
        self.kind
    }

    pub fn variance(&self) -> T {
        self.variance
    }

    pub fn sigma(&self) -> T {
        self.variance.sqrt()
    }

    /// gcd of offset differences; 1 for aperiodic laws, 2 for the simple walk.
    pub fn period(&self) -> i64 {
        self.period
    }

    /// Span of the sublattice that actually carries `S_n` (span times period).
    pub fn effective_span(&self) -> T {
        self.span * T::from_i64_lossy(self.period)
    }

    pub fn min_offset(&self) -> i64 {
        self.atoms[0].0
    }

    pub fn max_offset(&self) -> i64 {
        self.atoms[self.atoms.len() - 1].0
    }

    /// Physical point `shift * n + span * k`.
    #[inline]
    pub fn point(&self, n: usize, k: i64) -> T {
        self.shift * T::from_usize_lossy(n) + self.span * T::from_i64_lossy(k)
    }

    /// Whether index `k` can carry mass at time `n` (parity class for periodic laws).
    pub fn admissible(&self, n: usize, k: i64) -> bool {
        let d = self.period;
        let base = (n as i64).wrapping_mul(self.min_offset());
        (k - base).rem_euclid(d) == 0
    }

    pub fn mass(&self, k: i64) -> T {
        self.atoms
            .binary_search_by_key(&k, |a| a.0)
            .map(|i| self.atoms[i].1)
            .unwrap_or_else(|_| T::zero())
    }

    /// `E(X^2; |X| <= t)`.
    pub fn truncated_variance(&self, t: T) -> T {
        self.atoms
            .iter()
            .map(|&(k, p)| (self.point(1, k), p))
            .filter(|(x, _)| x.abs() <= t)
            .map(|(x, p)| x * x * p)
            .sum()
    }

    /// Norming function `a(t) = sigma * sqrt(t)` for finite variance laws.
    pub fn norming_a(&self, t: T) -> T {
        self.sigma() * t.sqrt()
    }

    /// `E|X|^3`, used by Berry-Esseen style sanity bounds.
    pub fn third_absolute_moment(&self) -> T {
        self.atoms
            .iter()
            .map(|&(k, p)| {
                let x = self.point(1, k).abs();
                x * x * x * p
            })
            .sum()
    }
}

pub fn truncated_variance<T: Real>(step: &StepLaw<T>, t: T) -> T {
    step.truncated_variance(t)
}

pub fn norming_a<T: Real>(step: &StepLaw<T>, t: T) -> T {
    step.norming_a(t)
}

/// A (sub-)probability mass function on `shift * n + span * [k_min, k_max]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LatticePmf<T> {
    n: usize,
    k_min: i64,
    masses: Vec<T>,
    total: T,
    shift: T,
    span: T,
}

impl<T: Real> LatticePmf<T> {
    pub fn new(n: usize, k_min: i64, masses: Vec<T>, shift: T, span: T) -> Self {
        let total = masses.iter().copied().sum();
        LatticePmf { n, k_min, masses, total, shift, span }
    }

    pub fn point_mass(n: usize, k: i64, shift: T, span: T) -> Self {
        Self::new(n, k, vec![T::one()], shift, span)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn k_min(&self) -> i64 {
        self.k_min
    }

    pub fn k_max(&self) -> i64 {
        self.k_min + self.masses.len() as i64 - 1
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    pub fn total(&self) -> T {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.masses.is_empty()
    }

    pub fn get(&self, k: i64) -> T {
        if k < self.k_min {
            return T::zero();
        }
        self.masses.get((k - self.k_min) as usize).copied().unwrap_or_else(T::zero)
    }

    #[inline]
    pub fn point(&self, k: i64) -> T {
        self.shift * T::from_usize_lossy(self.n) + self.span * T::from_i64_lossy(k)
    }

    /// `(k, point, mass)` for every stored index.
    pub fn iter(&self) -> impl Iterator<Item = (i64, T, T)> + '_ {
        self.masses
            .iter()
            .enumerate()
            .map(move |(i, &m)| {
                let k = self.k_min + i as i64;
                (k, self.point(k), m)
            })
    }

    /// Returns a copy scaled by `factor` (used to normalize killed laws).
    pub fn scaled(&self, factor: T) -> Self {
        let masses = self.masses.iter().map(|&m| m * factor).collect();
        Self::new(self.n, self.k_min, masses, self.shift, self.span)
    }

    pub fn max_abs_diff(&self, other: &Self) -> T {
        let lo = self.k_min.min(other.k_min);
        let hi = self.k_max().max(other.k_max());
        (lo..=hi)
            .map(|k| (self.get(k) - other.get(k)).abs())
            .fold(T::zero(), T::max)
    }

    /// CSV with header `n,point,mass`, 17 significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,point,mass\n");
        for (_, x, m) in self.iter() {
            let _ = writeln!(out, "{},{:.16e},{:.16e}", self.n, x.as_f64(), m.as_f64());
        }
        out
    }
}

/// Step laws used throughout the tests and the acceptance suite.
pub mod laws {
    use super::*;

    pub fn simple<T: Real>() -> StepLaw<T> {
        make_lattice_step(T::zero(), T::one(), &[(-1, T::lit(0.5)), (1, T::lit(0.5))]).unwrap()
    }

    pub fn lazy<T: Real>() -> StepLaw<T> {
        make_lattice_step(
            T::zero(),
            T::one(),
            &[(-1, T::lit(0.25)), (0, T::lit(0.5)), (1, T::lit(0.25))],
        )
        .unwrap()
    }

    /// Up-jumps of size two: ladder heights are not identically one.
    pub fn skewed_up<T: Real>() -> StepLaw<T> {
        make_lattice_step(
            T::zero(),
            T::one(),
            &[(-1, T::lit(0.5)), (0, T::lit(0.25)), (2, T::lit(0.25))],
        )
        .unwrap()
    }

    /// Down-jumps of size two.
    pub fn skewed_down<T: Real>() -> StepLaw<T> {
        make_lattice_step(
            T::zero(),
            T::one(),
            &[(-2, T::lit(0.25)), (0, T::lit(0.25)), (1, T::lit(0.5))],
        )
        .unwrap()
    }

    /// Support `{-1/2, +1/2}` written with a nonzero shift.
    pub fn shifted<T: Real>() -> StepLaw<T> {
        make_lattice_step(T::lit(0.5), T::one(), &[(-1, T::lit(0.5)), (0, T::lit(0.5))]).unwrap()
    }

    pub fn shipped<T: Real>() -> Vec<(&'static str, StepLaw<T>)> {
        vec![
            ("simple", simple()),
            ("lazy", lazy()),
            ("skewed-up", skewed_up()),
            ("skewed-down", skewed_down()),
            ("shifted", shifted()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn simple_and_lazy_variances() {
        let s = laws::simple::<f64>();
        assert_eq!(s.variance(), 1.0);
        assert_eq!(s.period(), 2);
        let l = laws::lazy::<f64>();
        assert_eq!(l.variance(), 0.5);
        assert_eq!(l.period(), 1);
    }

    #[test]
    fn rejects_even_offsets() {
        let err = make_lattice_step(0.0, 1.0, &[(-2, 0.25), (2, 0.25), (0, 0.5)]).unwrap_err();
        assert!(matches!(err, Error::NonMaximalSpan { gcd: 2 }));
    }

    #[test]
    fn rejection_paths() {
        assert!(matches!(
            make_lattice_step(0.0, 1.0, &[(-1, 0.5), (2, 0.5)]).unwrap_err(),
            Error::NonZeroMean { .. }
        ));
        assert!(matches!(
            make_lattice_step(0.0, 1.0, &[(0, 1.0)]).unwrap_err(),
            Error::DegenerateSupport
        ));
        assert!(matches!(
            make_lattice_step(0.0, 1.0, &[(-1, 0.6), (1, 0.6)]).unwrap_err(),
            Error::BadMass(_)
        ));
        assert!(matches!(
            make_lattice_step(0.0, 1.0, &[(-1, -0.5), (1, 1.5)]).unwrap_err(),
            Error::BadMass(_)
        ));
    }

    #[test]
    fn truncated_variance_examples() {
        let s = laws::simple::<f64>();
        assert_eq!(s.truncated_variance(2.0), 1.0);
        assert_eq!(s.truncated_variance(0.5), 0.0);
        assert_eq!(laws::lazy::<f64>().truncated_variance(1.0), 0.5);
    }

    #[test]
    fn norming_examples() {
        assert_eq!(laws::simple::<f64>().norming_a(4.0), 2.0);
        assert!((laws::lazy::<f64>().norming_a(2.0) - 1.0).abs() < 1e-15);
        assert_eq!(laws::simple::<f64>().norming_a(1.0), 1.0);
    }

    #[test]
    fn shifted_law_points() {
        let s = laws::shifted::<f64>();
        assert_eq!(s.point(1, -1), -0.5);
        assert_eq!(s.point(1, 0), 0.5);
        assert_eq!(s.point(2, -1), 0.0);
    }

    #[test]
    fn parity_classes() {
        let s = laws::simple::<f64>();
        assert!(s.admissible(3, 1));
        assert!(!s.admissible(3, 2));
        assert!(s.admissible(4, 0));
        assert!(laws::lazy::<f64>().admissible(3, 2));
    }

    #[test]
    fn json_field_names() {
        let json = serde_json::to_string(&laws::simple::<f64>().to_json()).unwrap();
        assert_eq!(json, r#"{"shift":0.0,"span":1.0,"atoms":[[-1,0.5],[1,0.5]]}"#);
        let back: StepLawJson = serde_json::from_str(&json).unwrap();
        assert_eq!(StepLaw::<f64>::from_json(&back).unwrap(), laws::simple());
    }

    #[test]
    fn works_in_single_precision() {
        let s = laws::lazy::<f32>();
        assert!((s.variance() - 0.5).abs() < 1e-7);
    }

    fn arbitrary_atoms() -> impl Strategy<Value = Vec<(i64, f64)>> {
        prop::collection::vec((-4i64..=4, 0.0f64..1.0), 1..6).prop_map(|raw| {
            let total: f64 = raw.iter().map(|a| a.1).sum();
            if total > 0.0 {
                raw.into_iter().map(|(k, p)| (k, p / total)).collect()
            } else {
                raw
            }
        })
    }

    proptest! {
        #[test]
        fn accepted_laws_satisfy_invariants(atoms in arbitrary_atoms(), shift in -1.0f64..1.0) {
            if let Ok(step) = make_lattice_step(shift, 1.0, &atoms) {
                let total: f64 = step.atoms().iter().map(|a| a.1).sum();
                prop_assert!((total - 1.0).abs() <= 1e-14);
                prop_assert!(step.atoms().iter().all(|a| a.1 > 0.0));
                let mean: f64 = step.atoms().iter().map(|&(k, p)| step.point(1, k) * p).sum();
                prop_assert!(mean.abs() <= 1e-12 * 5.0);
                let g = step.atoms().iter().fold(0, |g, a| gcd(g, a.0));
                prop_assert_eq!(g, 1);
                prop_assert!(step.variance() > 0.0 && step.variance().is_finite());
            }
        }

        #[test]
        fn centred_laws_are_accepted(p in 0.05f64..0.95, lo in 1i64..4, hi in 1i64..4) {
            // mass q at -lo and 1-q at +hi with zero mean
            let q = hi as f64 / (lo + hi) as f64;
            let mut atoms = vec![(-lo, q * p), (hi, (1.0 - q) * p), (0, 1.0 - p)];
            atoms.retain(|a| a.1 > 0.0);
            let res = make_lattice_step(0.0, 1.0, &atoms);
            if gcd(lo, hi) == 1 {
                prop_assert!(res.is_ok());
            } else {
                prop_assert!(matches!(res, Err(Error::NonMaximalSpan { .. })), "unexpected result");
            }
        }

        #[test]
        fn truncated_variance_monotone(t1 in 0.0f64..5.0, dt in 0.0f64..5.0) {
            let s = laws::skewed_up::<f64>();
            prop_assert!(s.truncated_variance(t1) <= s.truncated_variance(t1 + dt));
        }
    }
}
