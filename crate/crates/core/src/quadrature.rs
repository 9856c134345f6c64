//! Globally adaptive Gauss-Kronrod (7/15) quadrature on finite intervals.

use crate::error::{Error, Result};
use crate::real::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_5,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_48,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224,
    0.063_092_092_629_978_56,
    0.104_790_010_322_250_19,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_42,
    0.204_432_940_075_298_89,
    0.209_482_141_084_727_82,
];

/// Gauss weights for the nodes `XGK[1], XGK[3], XGK[5], XGK[7]`.
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_64,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult<T> {
    pub value: T,
    pub error: T,
    pub intervals: usize,
}

/// Stopping rule and budget.
#[derive(Debug, Clone, Copy)]
pub struct QuadConfig<T> {
    pub abs_tol: T,
    pub rel_tol: T,
    pub max_intervals: usize,
}

impl<T: Real> QuadConfig<T> {
    pub fn abs(tol: T) -> Self {
        QuadConfig { abs_tol: tol, rel_tol: T::zero(), max_intervals: 2000 }
    }

    pub fn rel(rel: T, abs: T) -> Self {
        QuadConfig { abs_tol: abs, rel_tol: rel, max_intervals: 2000 }
    }
}

fn gk15<T, F>(f: &mut F, a: T, b: T) -> Result<(T, T)>
where
    T: Real,
    F: FnMut(T) -> Result<T>,
{
    let half = (b - a) / T::lit(2.0);
    let center = (a + b) / T::lit(2.0);
    let mut kronrod = T::zero();
    let mut gauss = T::zero();
    for i in 0..8 {
        let dx = half * T::lit(XGK[i]);
        let fx = if i == 7 { f(center)? } else { f(center - dx)? + f(center + dx)? };
        kronrod += T::lit(WGK[i]) * fx;
        if i % 2 == 1 {
            gauss += T::lit(WG[i / 2]) * fx;
        }
    }
    Ok((kronrod * half, ((kronrod - gauss) * half).abs()))
}

/// Integrates a fallible integrand over `[a, b]`.
pub fn try_integrate<T, F>(mut f: F, a: T, b: T, config: QuadConfig<T>) -> Result<QuadResult<T>>
where
    T: Real,
    F: FnMut(T) -> Result<T>,
{
    if a == b {
        return Ok(QuadResult { value: T::zero(), error: T::zero(), intervals: 0 });
    }
    let (v, e) = gk15(&mut f, a, b)?;
    let mut parts = vec![(a, b, v, e)];
    loop {
        let value: T = parts.iter().map(|p| p.2).sum();
        let error: T = parts.iter().map(|p| p.3).sum();
        let target = config.abs_tol.max(config.rel_tol * value.abs());
        if !error.is_finite() || !value.is_finite() {
            return Err(Error::QuadratureFailure { tol: target.as_f64(), estimate: error.as_f64() });
        }
        if error <= target {
            return Ok(QuadResult { value, error, intervals: parts.len() });
        }
        if parts.len() >= config.max_intervals {
            return Err(Error::QuadratureFailure { tol: target.as_f64(), estimate: error.as_f64() });
        }
        let worst = (0..parts.len())
            .max_by(|&i, &j| parts[i].3.partial_cmp(&parts[j].3).unwrap())
            .unwrap();
        let (lo, hi, _, _) = parts.swap_remove(worst);
        let mid = (lo + hi) / T::lit(2.0);
        if mid <= lo || mid >= hi {
            return Err(Error::QuadratureFailure { tol: target.as_f64(), estimate: error.as_f64() });
        }
        let (v1, e1) = gk15(&mut f, lo, mid)?;
        let (v2, e2) = gk15(&mut f, mid, hi)?;
        parts.push((lo, mid, v1, e1));
        parts.push((mid, hi, v2, e2));
    }
}

pub fn integrate<T, F>(mut f: F, a: T, b: T, config: QuadConfig<T>) -> Result<QuadResult<T>>
where
    T: Real,
    F: FnMut(T) -> T,
{
    try_integrate(|x| Ok(f(x)), a, b, config)
}
