//! The rescaled ladder renewal measure `mu_n` and the exact mixture
//! representation of the law of `S_n` given `C_n`:
//!
//! ```text
//! n P(C_n, S_n = x) = sum_{m < n} sum_{0 <= z < x} u(m, z) P(S_{n-m} = x - z)
//! ```

use std::fmt::Write as _;

use crate::dp::{pmf_sequence, DpConfig};
use crate::error::{Error, Result};
use crate::ladder::{build_ladder_table, weak_descending_epoch_law, LadderTable};
use crate::norming::NormingData;
use crate::quadrature::{integrate, QuadConfig};
use crate::real::Real;
use crate::walk::{LatticePmf, StepLaw};

/// `mu_n`: atoms `(m / n, z / a_n)` with weight `u(m, z) / b^{-1}(n)`, `m < n`.
#[derive(Debug, Clone)]
pub struct MixtureMeasure<T> {
    n: usize,
    a_n: T,
    b_inv_n: T,
    slices: Vec<LatticePmf<T>>,
}

impl<T: Real> MixtureMeasure<T> {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn a_n(&self) -> T {
        self.a_n
    }

    pub fn b_inv_n(&self) -> T {
        self.b_inv_n
    }

    /// Weight of the atom at `(0, 0)`.
    pub fn origin_weight(&self) -> T {
        self.slices[0].get(0) / self.b_inv_n
    }

    pub fn total_mass(&self) -> T {
        self.slices.iter().map(|p| p.total()).sum::<T>() / self.b_inv_n
    }

    /// `((alpha, beta), weight)` for every positive atom.
    pub fn atoms(&self) -> impl Iterator<Item = ((T, T), T)> + '_ {
        let nn = T::from_usize_lossy(self.n);
        self.slices.iter().enumerate().flat_map(move |(m, p)| {
            let alpha = T::from_usize_lossy(m) / nn;
            p.iter()
                .filter(|e| e.2 > T::zero())
                .map(move |(_, z, w)| ((alpha, z / self.a_n), w / self.b_inv_n))
        })
    }

    /// `mu_n([0, a] x [0, b])`; `b` may be infinite.
    pub fn f_n(&self, a: T, b: T) -> T {
        let nn = T::from_usize_lossy(self.n);
        let mut total = T::zero();
        for (m, p) in self.slices.iter().enumerate() {
            if T::from_usize_lossy(m) / nn > a {
                break;
            }
            for (_, z, w) in p.iter() {
                if z / self.a_n <= b {
                    total += w;
                }
            }
        }
        total / self.b_inv_n
    }
}

/// Builds `mu_n` from a ladder table reaching time `n - 1`.
pub fn build_mu_n<T: Real>(
    step: &StepLaw<T>,
    n: usize,
    ladder: &LadderTable<T>,
    norming: &NormingData<T>,
) -> Result<MixtureMeasure<T>> {
    if n == 0 {
        return Err(Error::OutOfRange { value: 0.0, lower: 1.0, upper: f64::INFINITY });
    }
    if ladder.horizon() + 1 < n {
        return Err(Error::HorizonTooLarge { cells: n - 1, budget: ladder.horizon() });
    }
    let nn = T::from_usize_lossy(n);
    let b_inv_n = norming.b_inverse_unchecked(nn)?;
    let slices = ladder.u_slices()[..n].to_vec();
    Ok(MixtureMeasure { n, a_n: step.norming_a(nn), b_inv_n, slices })
}

/// `F(a, b) = mu([0, a] x [0, b])`, by quadrature of
/// `(2 / sqrt(2 pi)) int_0^{sqrt a} (1 - e^{-b^2 / (2 s^2)}) ds` (`alpha = s^2`).
pub fn f_limit<T: Real>(a: T, b: T) -> Result<T> {
    f_limit_with(a, b, T::tol(1e-10))
}

pub fn f_limit_with<T: Real>(a: T, b: T, tol: T) -> Result<T> {
    if !(a >= T::zero() && a <= T::one()) || !(b >= T::zero()) {
        return Err(Error::OutOfRange { value: a.min(b).as_f64(), lower: 0.0, upper: 1.0 });
    }
    if a == T::zero() || b == T::zero() {
        return Ok(T::zero());
    }
    let two = T::lit(2.0);
    let scale = two * T::lit(0.398_942_280_401_432_7);
    let r = integrate(
        |s| {
            if b.is_infinite() {
                T::one()
            } else {
                -(-b * b / (two * s * s)).exp_m1()
            }
        },
        T::zero(),
        a.sqrt(),
        QuadConfig::abs(tol / scale),
    )?;
    Ok(scale * r.value)
}

/// Evaluates the mixture side for every `n` in `2..=horizon + 1` from one ladder table.
#[derive(Debug, Clone)]
pub struct MixtureEvaluator<'a, T> {
    step: &'a StepLaw<T>,
    ladder: &'a LadderTable<T>,
    pmfs: Vec<LatticePmf<T>>,
    survival: Vec<T>,
}

impl<'a, T: Real> MixtureEvaluator<'a, T> {
    pub fn new(step: &'a StepLaw<T>, ladder: &'a LadderTable<T>) -> Result<Self> {
        let top = ladder.horizon() + 1;
        let config = DpConfig::default();
        let pmfs = pmf_sequence(step, top, config)?;
        let epochs = weak_descending_epoch_law(step, top, config)?;
        let mut survival = Vec::with_capacity(top + 1);
        let mut tail = T::one();
        for &p in &epochs {
            tail -= p;
            survival.push(tail.max(T::zero()));
        }
        Ok(MixtureEvaluator { step, ladder, pmfs, survival })
    }

    pub fn max_n(&self) -> usize {
        self.ladder.horizon() + 1
    }

    /// `sum_{m < n} sum_{z < x} u(m, z) P(S_{n-m} = x - z)`, i.e. `n P(C_n, S_n = x)`.
    pub fn renewal_side(&self, n: usize) -> Result<LatticePmf<T>> {
        if n < 2 || n > self.max_n() {
            return Err(Error::OutOfRange { value: n as f64, lower: 2.0, upper: self.max_n() as f64 });
        }
        let (shift, span) = (self.step.shift(), self.step.span());
        let mut lo = i64::MAX;
        let mut hi = i64::MIN;
        for m in 0..n {
            let (u, p) = (self.ladder.u(m), &self.pmfs[n - m]);
            if !u.is_empty() && !p.is_empty() {
                lo = lo.min(u.k_min() + p.k_min());
                hi = hi.max(u.k_max() + p.k_max());
            }
        }
        if lo > hi {
            return Ok(LatticePmf::new(n, 0, Vec::new(), shift, span));
        }
        let mut acc = vec![T::zero(); (hi - lo + 1) as usize];
        for m in 0..n {
            let u = self.ladder.u(m);
            let p = &self.pmfs[n - m];
            // x - z = S_{n-m} must be > 0
            let first_positive = p.iter().position(|e| e.1 > T::zero());
            let Some(start) = first_positive else { continue };
            let tail = &p.masses()[start..];
            let tail_k = p.k_min() + start as i64;
            for (kz, _, wz) in u.iter() {
                if wz == T::zero() {
                    continue;
                }
                let base = (kz + tail_k - lo) as usize;
                for (slot, &py) in acc[base..].iter_mut().zip(tail) {
                    *slot += wz * py;
                }
            }
        }
        Ok(LatticePmf::new(n, lo, acc, shift, span))
    }

    /// Law of `S_n` given `C_n` from the mixture side.
    pub fn conditioned_law(&self, n: usize) -> Result<LatticePmf<T>> {
        let side = self.renewal_side(n)?;
        let survival = self.survival[n];
        if survival <= T::zero() {
            return Err(Error::ZeroSurvival { n });
        }
        Ok(side.scaled(T::one() / (T::from_usize_lossy(n) * survival)))
    }
}

/// Right side of the mixture identity at a single `n >= 2`.
pub fn mixture_conditioned_law<T: Real>(step: &StepLaw<T>, n: usize) -> Result<LatticePmf<T>> {
    if n < 2 {
        return Err(Error::OutOfRange { value: n as f64, lower: 2.0, upper: f64::INFINITY });
    }
    let ladder = build_ladder_table(step, n - 1, n - 1)?;
    MixtureEvaluator::new(step, &ladder)?.conditioned_law(n)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeakRow<T> {
    pub n: usize,
    pub a: T,
    pub b: T,
    pub f_n: T,
    pub f: T,
}

impl<T: Real> WeakRow<T> {
    pub fn abs_err(&self) -> T {
        (self.f_n - self.f).abs()
    }
}

/// `F_n` against `F` on the product grid `a_grid x b_grid`.
pub fn weak_convergence_rows<T: Real>(mu: &MixtureMeasure<T>, a_grid: &[T], b_grid: &[T]) -> Result<Vec<WeakRow<T>>> {
    let mut rows = Vec::with_capacity(a_grid.len() * b_grid.len());
    for &a in a_grid {
        for &b in b_grid {
            rows.push(WeakRow { n: mu.n(), a, b, f_n: mu.f_n(a, b), f: f_limit(a, b)? });
        }
    }
    Ok(rows)
}

pub fn weak_convergence_csv<T: Real>(rows: &[WeakRow<T>]) -> String {
    let mut out = String::from("n,a,b,F_n,F,abs_err\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{:.16e},{:.16e},{:.16e}",
            r.n,
            r.a.as_f64(),
            r.b.as_f64(),
            r.f_n.as_f64(),
            r.f.as_f64(),
            r.abs_err().as_f64()
        );
    }
    out
}

/// Rectangle corners used by the weak-convergence checks.
pub fn default_grid<T: Real>() -> (Vec<T>, Vec<T>) {
    let a = [0.2, 0.4, 0.6, 0.8, 1.0].iter().map(|&v| T::lit(v)).collect();
    let b = [0.5, 1.0, 1.5, 2.0].iter().map(|&v| T::lit(v)).chain([T::infinity()]).collect();
    (a, b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::conditioned_pmf;
    use crate::limits::mu_density;
    use crate::walk::laws;
    use statrs::function::erf::erfc;
    use std::f64::consts::PI;

    fn f_closed(a: f64, b: f64) -> f64 {
        if b.is_infinite() {
            return (2.0 * a / PI).sqrt();
        }
        (2.0 / PI).sqrt()
            * (a.sqrt() - a.sqrt() * (-b * b / (2.0 * a)).exp() + (PI / 2.0).sqrt() * b * erfc(b / (2.0 * a).sqrt()))
    }

    #[test]
    fn f_limit_values() {
        assert!((f_limit(1.0f64, f64::INFINITY).unwrap() - (2.0 / PI).sqrt()).abs() < 1e-12);
        assert_eq!(f_limit(0.7f64, 0.0).unwrap(), 0.0);
        for &a in &[0.1, 0.5, 1.0] {
            for &b in &[0.2, 1.0, 3.0] {
                assert!((f_limit(a, b).unwrap() - f_closed(a, b)).abs() < 1e-10, "a={a} b={b}");
            }
        }
        assert!(f_limit(1.5f64, 1.0).is_err());
    }

    #[test]
    fn f_limit_grid_oracle() {
        // midpoint sum of the mu density after alpha = s^2, beta = r s (density 2 r phi(r) on the unit s-interval)
        let n = 2000;
        let r_max = 9.0;
        let (hs, hr) = (1.0 / n as f64, r_max / n as f64);
        let mut sum = 0.0;
        for i in 0..n {
            let s = (i as f64 + 0.5) * hs;
            for j in 0..n {
                let r = (j as f64 + 0.5) * hr;
                let (alpha, beta) = (s * s, r * s);
                if beta <= 1.0 {
                    sum += mu_density(alpha, beta) * 2.0 * s * s;
                }
            }
        }
        let grid = sum * hs * hr;
        assert!((grid - f_limit(1.0, 1.0).unwrap()).abs() <= 1e-4);
    }

    #[test]
    fn density_is_mixed_derivative() {
        let f = |a: f64, b: f64| f_limit_with(a, b, 1e-15).unwrap();
        let mixed = |a: f64, b: f64, h: f64| (f(a + h, b + h) - f(a + h, b - h) - f(a - h, b + h) + f(a - h, b - h)) / (4.0 * h * h);
        for &(a, b) in &[(0.3, 0.5), (0.5, 1.0), (0.8, 0.7), (0.6, 1.5)] {
            let h = 0.02;
            let rich = (4.0 * mixed(a, b, h / 2.0) - mixed(a, b, h)) / 3.0;
            let d = mu_density(a, b);
            assert!(((rich - d) / d).abs() < 1e-4, "a={a} b={b}: {rich} vs {d}");
        }
    }

    #[test]
    fn mixture_examples() {
        let step = laws::simple::<f64>();
        let law = mixture_conditioned_law(&step, 3).unwrap();
        assert!((law.get(1) - 0.5).abs() < 1e-15);
        assert!((law.get(3) - 0.5).abs() < 1e-15);
        assert!(law.max_abs_diff(&conditioned_pmf(&step, 3).unwrap()) <= 1e-13);
        let law = mixture_conditioned_law(&step, 2).unwrap();
        assert!((law.get(2) - 1.0).abs() < 1e-15);
        assert!(law.iter().filter(|e| e.1 <= 0.0).all(|e| e.2 == 0.0));
        assert!(mixture_conditioned_law(&step, 1).is_err());
    }

    #[test]
    fn mixture_identity_all_shipped_laws() {
        for (name, step) in laws::shipped::<f64>() {
            let ladder = build_ladder_table(&step, 59, 59).unwrap();
            let eval = MixtureEvaluator::new(&step, &ladder).unwrap();
            for n in 2..=60 {
                let lhs = eval.conditioned_law(n).unwrap();
                let rhs = conditioned_pmf(&step, n).unwrap();
                assert!(lhs.max_abs_diff(&rhs) <= 1e-12, "{name} n={n}");
                assert!(lhs.iter().filter(|e| e.1 <= 0.0).all(|e| e.2 == 0.0));
            }
        }
    }

    #[test]
    fn unnormalized_side_is_n_times_killed_law() {
        let step = laws::skewed_up::<f64>();
        let ladder = build_ladder_table(&step, 20, 20).unwrap();
        let eval = MixtureEvaluator::new(&step, &ladder).unwrap();
        let side = eval.renewal_side(21).unwrap();
        let killed = crate::dp::positive_part_pmf(&step, 21).unwrap().pmf.scaled(21.0);
        assert!(side.max_abs_diff(&killed) < 1e-13);
    }

    #[test]
    fn mu_n_small_examples() {
        let step = laws::simple::<f64>();
        let norming = NormingData::new(&step, 10).unwrap();
        let ladder = build_ladder_table(&step, 3, 3).unwrap();
        let mu = build_mu_n(&step, 2, &ladder, &norming).unwrap();
        let b_inv = norming.b_inverse(2.0).unwrap();
        let atoms: Vec<_> = mu.atoms().collect();
        assert_eq!(atoms.len(), 2);
        assert_eq!(atoms[0], ((0.0, 0.0), 1.0 / b_inv));
        assert!((atoms[1].0 .0 - 0.5).abs() < 1e-15);
        assert!((atoms[1].0 .1 - 1.0 / 2f64.sqrt()).abs() < 1e-15);
        assert!((atoms[1].1 - 0.5 / b_inv).abs() < 1e-15);
        assert_eq!(mu.f_n(0.0, 0.0), mu.origin_weight());
        assert_eq!(mu.f_n(1.0, f64::INFINITY), mu.total_mass());
        let one = build_mu_n(&step, 1, &ladder, &norming).unwrap();
        assert_eq!(one.atoms().count(), 1);
    }

    #[test]
    fn mu_n_mass_and_monotonicity() {
        let step = laws::lazy::<f64>();
        let norming = NormingData::new(&step, 10).unwrap();
        let ladder = LadderTable::via_duality(&step, 299, DpConfig::default()).unwrap();
        let mu = build_mu_n(&step, 300, &ladder, &norming).unwrap();
        let expected = ladder.g()[299] / mu.b_inv_n();
        assert!((mu.total_mass() - expected).abs() < 1e-12);
        assert!(mu.atoms().all(|((a, b), w)| w > 0.0 && (0.0..1.0).contains(&a) && b >= 0.0));
        let (ag, bg) = default_grid::<f64>();
        for w in ag.windows(2) {
            for &b in &bg {
                assert!(mu.f_n(w[0], b) <= mu.f_n(w[1], b));
            }
        }
        for &a in &ag {
            for w in bg.windows(2) {
                assert!(mu.f_n(a, w[0]) <= mu.f_n(a, w[1]));
            }
        }
    }

    #[test]
    fn horizon_too_short() {
        let step = laws::simple::<f64>();
        let norming = NormingData::new(&step, 10).unwrap();
        let ladder = build_ladder_table(&step, 3, 3).unwrap();
        assert!(matches!(build_mu_n(&step, 10, &ladder, &norming), Err(Error::HorizonTooLarge { .. })));
    }

    #[test]
    fn weak_csv_layout() {
        let step = laws::simple::<f64>();
        let norming = NormingData::new(&step, 10).unwrap();
        let ladder = LadderTable::via_duality(&step, 99, DpConfig::default()).unwrap();
        let mu = build_mu_n(&step, 100, &ladder, &norming).unwrap();
        let (a, b) = default_grid();
        let rows = weak_convergence_rows(&mu, &a, &b).unwrap();
        assert_eq!(rows.len(), 25);
        let csv = weak_convergence_csv(&rows);
        assert!(csv.starts_with("n,a,b,F_n,F,abs_err\n100,0.2,0.5,"));
        assert!(csv.contains(",inf,"));
    }
}
