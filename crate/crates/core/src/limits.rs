//! Limit densities and two integral identities of Brownian first-passage times.

use crate::error::{Error, Result};
use crate::quadrature::{integrate, try_integrate, QuadConfig};
use crate::real::{gauss, meander, Real};

/// Truncation point for Gaussian-type integrands: `phi(9) < 1e-16`.
const GAUSS_CUT: f64 = 9.0;

fn inv_sqrt_2pi<T: Real>() -> T {
    T::lit(0.398_942_280_401_432_7)
}

/// Densities of the limit objects.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LimitDensity<T> {
    /// `phi(x)`
    Gauss,
    /// `phi+(x) = x e^{-x^2/2}` on `x >= 0`
    MeanderEndpoint,
    /// `e^{-1/(2x)} / (sqrt(2 pi) x^{3/2})` on `x >= 0`
    StableHalf,
    /// `(beta / (sqrt(2 pi) alpha^{3/2})) e^{-beta^2/(2 alpha)}` on `[0, 1] x [0, inf)`
    MuDensity,
    /// First-passage density `g(a, t)` of level `a` as a function of `t`
    FirstPassage { a: T },
}

/// `g(a, t) = a / (sqrt(2 pi) t^{3/2}) e^{-a^2 / (2 t)}`.
pub fn first_passage_density<T: Real>(a: T, t: T) -> T {
    if t <= T::zero() {
        return T::zero();
    }
    a * inv_sqrt_2pi::<T>() / (t * t.sqrt()) * (-a * a / (T::lit(2.0) * t)).exp()
}

pub fn stable_half_density<T: Real>(x: T) -> T {
    first_passage_density(T::one(), x)
}

/// `P(Y <= x) = 2 (1 - Phi(1 / sqrt x))`.
pub fn stable_half_cdf<T: Real>(x: T) -> T {
    if x <= T::zero() {
        return T::zero();
    }
    let v = statrs::function::erf::erfc(1.0 / (2.0 * x.as_f64()).sqrt());
    T::lit(v)
}

pub fn mu_density<T: Real>(alpha: T, beta: T) -> T {
    if alpha <= T::zero() || alpha > T::one() || beta < T::zero() {
        return T::zero();
    }
    beta * inv_sqrt_2pi::<T>() / (alpha * alpha.sqrt()) * (-beta * beta / (T::lit(2.0) * alpha)).exp()
}

impl<T: Real> LimitDensity<T> {
    fn arity(&self) -> usize {
        match self {
            LimitDensity::MuDensity => 2,
            _ => 1,
        }
    }

    /// Closed-form evaluation; `point` has one coordinate (two for the mu density).
    pub fn eval(&self, point: &[T]) -> Result<T> {
        if point.len() != self.arity() {
            return Err(Error::ConfigInvalid(format!(
                "density takes {} coordinates, got {}",
                self.arity(),
                point.len()
            )));
        }
        let x = point[0];
        Ok(match *self {
            LimitDensity::Gauss => gauss(x),
            LimitDensity::MeanderEndpoint => meander(x),
            LimitDensity::StableHalf => stable_half_density(x),
            LimitDensity::MuDensity => mu_density(x, point[1]),
            LimitDensity::FirstPassage { a } => first_passage_density(a, x),
        })
    }

    /// Total mass of a one-dimensional density by quadrature.
    ///
    /// Gaussian-type tails are cut at 9. The stable and first-passage laws are
    /// integrated after `t = a^2 / y^2`, which turns them into `2 phi(y)` on `y > 0`.
    pub fn total_mass(&self, tol: T) -> Result<T> {
        let cut = T::lit(GAUSS_CUT);
        let cfg = QuadConfig::abs(tol);
        let r = match *self {
            LimitDensity::Gauss => integrate(gauss, -cut, cut, cfg)?,
            LimitDensity::MeanderEndpoint => integrate(meander, T::zero(), cut, cfg)?,
            LimitDensity::StableHalf | LimitDensity::FirstPassage { .. } => {
                let a = match *self {
                    LimitDensity::FirstPassage { a } => a,
                    _ => T::one(),
                };
                integrate(
                    |y| {
                        let t = a * a / (y * y);
                        first_passage_density(a, t) * T::lit(2.0) * a * a / (y * y * y)
                    },
                    T::zero(),
                    cut,
                    cfg,
                )?
            }
            LimitDensity::MuDensity => {
                return Err(Error::ConfigInvalid("mu is a finite measure on a plane region".into()))
            }
        };
        Ok(r.value)
    }
}

/// `int_0^1 int_0^1 phi(w) z^{-3/2} (1 - z)^{-beta} exp(-(x^2 / 2)(w^2 / z + (1 - w)^2 / (1 - z))) dw dz`.
///
/// The endpoint singularities in `z` are removed by `z = s^2` on `[0, 1/2]` and
/// `1 - z = u^2` on `[1/2, 1]`; the inner `w` integral is split where its
/// Gaussian peak (width `s / x` or `u / x`) ends.
fn singular_double<T, W>(x: T, beta: T, weight: W, abs_tol: T) -> Result<T>
where
    T: Real,
    W: Fn(T) -> T + Copy,
{
    let two = T::lit(2.0);
    let half_x2 = x * x / two;
    let kernel = move |w: T, z: T, zc: T| weight(w) * (-half_x2 * (w * w / z + (T::one() - w) * (T::one() - w) / zc)).exp();
    let inner_cfg = QuadConfig::rel(T::tol(1e-13), T::min_positive_value());
    let edge = T::lit(0.5).sqrt();
    let peak = |width: T| (T::lit(12.0) * width / x).min(T::one());

    // z = s^2
    let near_zero = try_integrate(
        |s| {
            let z = s * s;
            let zc = T::one() - z;
            let cut = peak(s);
            let mut inner = integrate(|w| kernel(w, z, zc), T::zero(), cut, inner_cfg)?.value;
            if cut < T::one() {
                inner += integrate(|w| kernel(w, z, zc), cut, T::one(), inner_cfg)?.value;
            }
            Ok(two * s.powi(-2) * zc.powf(-beta) * inner)
        },
        T::zero(),
        edge,
        QuadConfig::rel(T::tol(1e-12), abs_tol),
    )?;
    // 1 - z = u^2
    let near_one = try_integrate(
        |u| {
            let zc = u * u;
            let z = T::one() - zc;
            let cut = T::one() - peak(u);
            let mut inner = integrate(|w| kernel(w, z, zc), cut, T::one(), inner_cfg)?.value;
            if cut > T::zero() {
                inner += integrate(|w| kernel(w, z, zc), T::zero(), cut, inner_cfg)?.value;
            }
            Ok(two * u.powf(T::one() - two * beta) * z.powf(-T::lit(1.5)) * inner)
        },
        T::zero(),
        edge,
        QuadConfig::rel(T::tol(1e-12), abs_tol),
    )?;
    Ok(near_zero.value + near_one.value)
}

fn require_positive<T: Real>(x: T) -> Result<()> {
    if !(x > T::zero()) {
        return Err(Error::OutOfRange { value: x.as_f64(), lower: 0.0, upper: f64::INFINITY });
    }
    Ok(())
}

/// `|x e^{-x^2/2} - (x^2 / sqrt(2 pi)) int int w z^{-3/2} (1-z)^{-1/2} e^{...} dw dz|`.
pub fn meander_identity_residual<T: Real>(x: T, tol: T) -> Result<T> {
    require_positive(x)?;
    let pref = x * x * inv_sqrt_2pi::<T>();
    let budget = tol / (T::lit(100.0) * pref);
    let rhs = pref * singular_double(x, T::lit(0.5), |w| w, budget)?;
    let residual = (meander(x) - rhs).abs();
    if residual > tol {
        return Err(Error::QuadratureFailure { tol: tol.as_f64(), estimate: residual.as_f64() });
    }
    Ok(residual)
}

/// `|g(x, 1) - int_0^1 int_0^1 g(w x, z) g((1 - w) x, 1 - z) dz dw|`.
pub fn first_passage_convolution_check<T: Real>(x: T, tol: T) -> Result<T> {
    require_positive(x)?;
    let pref = x * x * inv_sqrt_2pi::<T>() * inv_sqrt_2pi::<T>();
    let budget = tol / (T::lit(100.0) * pref);
    let rhs = pref * singular_double(x, T::lit(1.5), |w| w * (T::one() - w), budget)?;
    let residual = (first_passage_density(x, T::one()) - rhs).abs();
    if residual > tol {
        return Err(Error::QuadratureFailure { tol: tol.as_f64(), estimate: residual.as_f64() });
    }
    Ok(residual)
}

/// `int_0^1 g(a1, z) g(a2, 1 - z) dz`, which equals `g(a1 + a2, 1)`.
pub fn first_passage_slice<T: Real>(a1: T, a2: T, tol: T) -> Result<T> {
    let two = T::lit(2.0);
    let edge = T::lit(0.5).sqrt();
    let cfg = QuadConfig::abs(tol);
    let left = integrate(
        |s| {
            let z = s * s;
            first_passage_density(a1, z) * first_passage_density(a2, T::one() - z) * two * s
        },
        T::zero(),
        edge,
        cfg,
    )?;
    let right = integrate(
        |u| {
            let zc = u * u;
            first_passage_density(a1, T::one() - zc) * first_passage_density(a2, zc) * two * u
        },
        T::zero(),
        edge,
        cfg,
    )?;
    Ok(left.value + right.value)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_form_values() {
        assert_eq!(LimitDensity::<f64>::Gauss.eval(&[0.0]).unwrap(), 0.3989422804014327);
        assert!((LimitDensity::<f64>::MeanderEndpoint.eval(&[1.0]).unwrap() - (-0.5f64).exp()).abs() < 1e-16);
        assert_eq!(LimitDensity::<f64>::MeanderEndpoint.eval(&[-1.0]).unwrap(), 0.0);
        assert!(LimitDensity::<f64>::MuDensity.eval(&[0.5]).is_err());
    }

    #[test]
    fn meander_is_scaled_gauss() {
        let root = (2.0 * std::f64::consts::PI).sqrt();
        for i in 1..200 {
            let x = i as f64 * 0.05;
            assert!((meander(x) - root * x * gauss(x)).abs() <= 1e-14);
        }
    }

    #[test]
    fn densities_have_unit_mass() {
        for d in [
            LimitDensity::Gauss,
            LimitDensity::MeanderEndpoint,
            LimitDensity::StableHalf,
            LimitDensity::FirstPassage { a: 0.7 },
        ] {
            let m: f64 = d.total_mass(1e-12).unwrap();
            assert!((m - 1.0).abs() < 1e-10, "{d:?}: {m}");
        }
    }

    #[test]
    fn stable_half_distribution_function() {
        for x in [0.1f64, 1.0, 10.0] {
            let q = integrate(stable_half_density, 0.0, x, QuadConfig::abs(1e-13)).unwrap().value;
            assert!((q - stable_half_cdf(x)).abs() <= 1e-10, "x={x}");
        }
    }

    #[test]
    fn first_passage_slice_closed_form() {
        let v: f64 = first_passage_slice(0.5, 0.5, 1e-13).unwrap();
        let exact = 0.3989422804014327 * (-0.5f64).exp();
        assert!((v - exact).abs() < 1e-11);
        assert!((first_passage_density(1.0, 1.0) - exact).abs() < 1e-16);
    }

    #[test]
    fn identities_hold() {
        for x in [0.5f64, 1.0, 2.0, 1e-3] {
            assert!(meander_identity_residual(x, 1e-6).unwrap() < 1e-6);
        }
        for x in [0.5f64, 1.0] {
            assert!(first_passage_convolution_check(x, 1e-6).unwrap() < 1e-6);
        }
    }

    #[test]
    fn residuals_are_far_below_tolerance() {
        assert!(meander_identity_residual(1.0f64, 1e-9).unwrap() < 1e-9);
        assert!(first_passage_convolution_check(0.5f64, 1e-9).unwrap() < 1e-9);
    }

    #[test]
    fn domain_errors() {
        assert!(meander_identity_residual(0.0f64, 1e-6).is_err());
        assert!(first_passage_convolution_check(-1.0f64, 1e-6).is_err());
    }
}
