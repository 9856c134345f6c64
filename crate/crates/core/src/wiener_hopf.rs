//! Wiener-Hopf factorization of integer-valued step laws with bounded support.
//!
//! For a step law with offsets in `[-D, K]` and `|s| <= 1`, the polynomial
//! `z^D (1 - s E z^X)` has exactly `K` roots `r_j` outside the closed unit disk
//! when `s < 1`, and the strict ascending ladder factor is
//!
//! ```text
//! 1 - E(s^{T_1} z^{H_1}) = prod_j (1 - z / r_j).
//! ```
//!
//! At `s = 1` two roots merge at `z = 1` (zero mean); after removing them the
//! ladder-height generating function is `1 - (1 - z) prod_{j < K} (1 - z / r_j)`.

use num_complex::Complex;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::walk::StepLaw;

fn horner<T: Real>(coeffs: &[T], z: Complex<T>) -> (Complex<T>, Complex<T>) {
    let mut p = Complex::new(T::zero(), T::zero());
    let mut dp = Complex::new(T::zero(), T::zero());
    for &c in coeffs.iter().rev() {
        dp = dp * z + p;
        p = p * z + Complex::new(c, T::zero());
    }
    (p, dp)
}

/// All complex roots of `sum_i coeffs[i] z^i` (Aberth-Ehrlich iteration).
pub fn polynomial_roots<T: Real>(coeffs: &[T]) -> Vec<Complex<T>> {
    let mut coeffs = coeffs.to_vec();
    while coeffs.len() > 1 && coeffs[coeffs.len() - 1] == T::zero() {
        coeffs.pop();
    }
    let deg = coeffs.len() - 1;
    if deg == 0 {
        return Vec::new();
    }
    let lead = coeffs[deg].abs();
    // Cauchy bound for the initial circle
    let radius = T::one() + coeffs[..deg].iter().map(|c| c.abs() / lead).fold(T::zero(), T::max);
    let two_pi = T::lit(std::f64::consts::TAU);
    let mut z: Vec<Complex<T>> = (0..deg)
        .map(|i| {
            let angle = two_pi * (T::from_usize_lossy(i) + T::lit(0.25)) / T::from_usize_lossy(deg);
            Complex::from_polar(radius * T::lit(0.5), angle)
        })
        .collect();
    let tol = T::epsilon() * T::lit(4.0);
    for _ in 0..1000 {
        let mut converged = true;
        for i in 0..deg {
            let (p, dp) = horner(&coeffs, z[i]);
            if p.norm() == T::zero() {
                continue;
            }
            let ratio = p / dp;
            let mut repulsion = Complex::new(T::zero(), T::zero());
            for j in 0..deg {
                if j != i {
                    repulsion += (z[i] - z[j]).inv();
                }
            }
            let w = ratio / (Complex::new(T::one(), T::zero()) - ratio * repulsion);
            if w.re.is_finite() && w.im.is_finite() {
                z[i] -= w;
                if w.norm() > tol * z[i].norm().max(T::one()) {
                    converged = false;
                }
            }
        }
        if converged {
            break;
        }
    }
    // Newton polish
    for r in z.iter_mut() {
        for _ in 0..3 {
            let (p, dp) = horner(&coeffs, *r);
            if dp.norm() > T::zero() {
                let step = p / dp;
                if step.re.is_finite() && step.im.is_finite() {
                    *r -= step;
                }
            }
        }
    }
    z
}

fn binomial<T: Real>(n: usize, j: usize) -> T {
    if j > n {
        return T::zero();
    }
    let mut c = T::one();
    for i in 0..j {
        c = c * T::from_usize_lossy(n - i) / T::from_usize_lossy(i + 1);
    }
    c
}

/// Wiener-Hopf data of a shift-free lattice step law.
///
/// The kernel is expanded around `z = 1` (`z = 1 + w`) so that the roots near
/// one, which carry the whole singular behaviour as `s -> 1`, are resolved in
/// relative precision even when `1 - s` is tiny.
#[derive(Debug, Clone)]
pub struct WienerHopf<T> {
    /// `d_j = sum_k p_k (C(k + D, j) - C(D, j))`, with `d_0 = d_1 = 0` (zero mean).
    d: Vec<T>,
    down: usize,
    up: usize,
}

impl<T: Real> WienerHopf<T> {
    pub fn new(step: &StepLaw<T>) -> Result<Self> {
        if step.shift() != T::zero() {
            return Err(Error::ConfigInvalid(
                "Wiener-Hopf factorization needs a shift-free lattice law".into(),
            ));
        }
        let down = (-step.min_offset()) as usize;
        let up = step.max_offset() as usize;
        let mut d = vec![T::zero(); down + up + 1];
        for (j, slot) in d.iter_mut().enumerate().skip(2) {
            let base: T = binomial(down, j);
            *slot = step
                .atoms()
                .iter()
                .map(|&(k, p)| p * (binomial::<T>((k + down as i64) as usize, j) - base))
                .sum();
        }
        Ok(WienerHopf { d, down, up })
    }

    /// Coefficients in `w` of `z^D (1 - s E z^X)` at `z = 1 + w`, with `q = 1 - s`.
    fn kernel(&self, q: T) -> Vec<T> {
        let s = T::one() - q;
        self.d
            .iter()
            .enumerate()
            .map(|(j, &dj)| q * binomial::<T>(self.down, j) - s * dj)
            .collect()
    }

    /// `r - 1` for the kernel roots `r` outside the unit disk, for `0 < q <= 1`.
    fn outer_offsets(&self, q: T) -> Result<Vec<Complex<T>>> {
        let one = Complex::new(T::one(), T::zero());
        let outer: Vec<_> = polynomial_roots(&self.kernel(q))
            .into_iter()
            .filter(|w| (one + w).norm() > T::one())
            .collect();
        if outer.len() != self.up {
            return Err(Error::NumericalFailure(format!(
                "expected {} roots outside the unit disk, found {}",
                self.up,
                outer.len()
            )));
        }
        Ok(outer)
    }

    /// `sum_m (s^m / m) P(S_m > 0) = -log(1 - E s^{T_1})` with `s = 1 - q`, `0 < q <= 1`.
    pub fn positivity_series_q(&self, q: T) -> Result<T> {
        if !(q > T::zero() && q <= T::one()) {
            return Err(Error::OutOfRange { value: q.as_f64(), lower: 0.0, upper: 1.0 });
        }
        let one = Complex::new(T::one(), T::zero());
        // 1 - 1/r = w / (1 + w)
        let log_sum = self
            .outer_offsets(q)?
            .iter()
            .map(|w| (w / (one + w)).ln())
            .fold(Complex::new(T::zero(), T::zero()), |a, b| a + b);
        Ok(-log_sum.re)
    }

    /// As [`Self::positivity_series_q`] with `s` given directly.
    pub fn positivity_series(&self, s: T) -> Result<T> {
        self.positivity_series_q(T::one() - s)
    }

    /// `E s^{T_1}`.
    pub fn epoch_transform(&self, s: T) -> Result<T> {
        Ok(T::one() - (-self.positivity_series(s)?).exp())
    }

    /// Law of the first strict ascending ladder height: entry `j - 1` is `P(H_1 = j)` (lattice units).
    pub fn ladder_height_law(&self) -> Result<Vec<T>> {
        // at s = 1 the kernel is w^2 times a polynomial whose outer roots are the K - 1 others
        let c = self.kernel(T::zero());
        let one = Complex::new(T::one(), T::zero());
        let outer: Vec<_> = polynomial_roots(&c[2..])
            .into_iter()
            .filter(|w| (one + w).norm() > T::one())
            .collect();
        if outer.len() + 1 != self.up {
            return Err(Error::NumericalFailure(format!(
                "expected {} roots outside the unit disk at s = 1, found {}",
                self.up - 1,
                outer.len()
            )));
        }
        // expand (1 - z) prod (1 - z / r)
        let zero = Complex::new(T::zero(), T::zero());
        let mut poly = vec![one, -one];
        for w in &outer {
            let inv = (one + w).inv();
            let mut next = vec![zero; poly.len() + 1];
            for (i, &a) in poly.iter().enumerate() {
                next[i] += a;
                next[i + 1] -= a * inv;
            }
            poly = next;
        }
        let law: Vec<T> = poly[1..].iter().map(|c| (-c.re).max(T::zero())).collect();
        Ok(law)
    }
}
