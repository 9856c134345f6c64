//! Grid convolution for absolutely continuous step laws.
//!
//! Densities live on the grid `i * delta`, so `x = 0` is always a grid point.
//! All integrals use the trapezoid rule on the stored window. Step laws are
//! discretized by hat-function projection, which keeps total mass and the
//! mean exact on the grid even when the density jumps between grid points.
//!
//! Killing keeps `x >= 0`: the value stored at `0` is the one-sided limit
//! `f(0+)`, weighted by one half as the left endpoint of the window.

use std::fmt::Write as _;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::real::{gauss, meander, Real};

const TRIM: f64 = 1e-300;

#[derive(Debug, Clone, PartialEq)]
pub struct GridDensity<T> {
    grid_step: T,
    first: i64,
    values: Vec<T>,
    n: usize,
}

impl<T: Real> GridDensity<T> {
    /// Values at `(first + i) * grid_step`.
    pub fn new(grid_step: T, first: i64, values: Vec<T>, n: usize) -> Result<Self> {
        if !(grid_step > T::zero()) || values.iter().any(|v| !(*v >= T::zero())) {
            return Err(Error::BadMass("grid density needs a positive step and nonnegative values".into()));
        }
        Ok(GridDensity { grid_step, first, values, n })
    }

    pub fn grid_step(&self) -> T {
        self.grid_step
    }

    pub fn origin(&self) -> T {
        T::from_i64_lossy(self.first) * self.grid_step
    }

    pub fn first_index(&self) -> i64 {
        self.first
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn x(&self, i: usize) -> T {
        T::from_i64_lossy(self.first + i as i64) * self.grid_step
    }

    /// Value at grid index `k` (zero outside the window).
    pub fn at(&self, k: i64) -> T {
        let i = k - self.first;
        if i < 0 || i as usize >= self.values.len() {
            T::zero()
        } else {
            self.values[i as usize]
        }
    }

    fn weight(&self, i: usize) -> T {
        if i == 0 || i + 1 == self.values.len() {
            T::lit(0.5)
        } else {
            T::one()
        }
    }

    /// Trapezoid integral over the window.
    pub fn integral(&self) -> T {
        if self.values.len() < 2 {
            return T::zero();
        }
        let inner: T = self.values.iter().copied().sum();
        (inner - (self.values[0] + self.values[self.values.len() - 1]) * T::lit(0.5)) * self.grid_step
    }

    /// Trapezoid integral over grid indices `[k0, k1]`.
    pub fn interval(&self, k0: i64, k1: i64) -> T {
        let lo = k0.max(self.first);
        let hi = k1.min(self.first + self.values.len() as i64 - 1);
        if hi <= lo {
            return T::zero();
        }
        let (a, b) = ((lo - self.first) as usize, (hi - self.first) as usize);
        let inner: T = self.values[a..=b].iter().copied().sum();
        (inner - (self.values[a] + self.values[b]) * T::lit(0.5)) * self.grid_step
    }

    pub fn scaled(&self, factor: T) -> Self {
        GridDensity { values: self.values.iter().map(|&v| v * factor).collect(), ..self.clone() }
    }

    fn trim(&mut self) {
        let floor = T::lit(TRIM);
        let lead = self.values.iter().take_while(|&&v| v <= floor).count();
        if lead == self.values.len() {
            self.values.clear();
            return;
        }
        let trail = self.values.iter().rev().take_while(|&&v| v <= floor).count();
        // one zero of padding is kept on each side
        let lead = lead.saturating_sub(1);
        let trail = trail.saturating_sub(1);
        self.values.truncate(self.values.len() - trail);
        self.values.drain(..lead);
        self.first += lead as i64;
    }

    /// Restriction to `x >= 0`; the value at `0` is kept as the right limit.
    pub fn killed(&self) -> Self {
        let start = (-self.first).max(0) as usize;
        let values = if start < self.values.len() { self.values[start..].to_vec() } else { Vec::new() };
        GridDensity { grid_step: self.grid_step, first: self.first.max(0), values, n: self.n }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,value\n");
        for (i, v) in self.values.iter().enumerate() {
            let _ = writeln!(out, "{:.12e},{:.16e}", self.x(i).as_f64(), v.as_f64());
        }
        out
    }
}

/// Trapezoid convolution `(f * g)(x_i) = delta * sum_j w_j f(x_j) g(x_i - x_j)`.
pub fn grid_self_convolve<T: Real>(density: &GridDensity<T>, step_density: &GridDensity<T>) -> Result<GridDensity<T>> {
    let (d, s) = (density.grid_step, step_density.grid_step);
    if (d - s).abs() > T::tol(1e-12) * d {
        return Err(Error::GridMismatch(d.as_f64(), s.as_f64()));
    }
    let delta = d;
    let n = density.n + step_density.n;
    if density.values.is_empty() || step_density.values.is_empty() {
        return GridDensity::new(delta, density.first + step_density.first, Vec::new(), n);
    }
    let weighted: Vec<T> = (0..density.values.len()).map(|j| density.values[j] * density.weight(j) * delta).collect();
    let g = &step_density.values;
    let len = weighted.len() + g.len() - 1;
    let mut out = vec![T::zero(); len];
    out.par_chunks_mut(256).enumerate().for_each(|(c, chunk)| {
        for (o, slot) in chunk.iter_mut().enumerate() {
            let i = c * 256 + o;
            let j_lo = i.saturating_sub(g.len() - 1);
            let j_hi = i.min(weighted.len() - 1);
            // outside-in pairs keep mirrored outputs bit-identical
            let (mut lo, mut hi) = (j_lo, j_hi);
            let mut acc = T::zero();
            while lo < hi {
                acc += weighted[lo] * g[i - lo] + weighted[hi] * g[i - hi];
                lo += 1;
                hi -= 1;
            }
            if lo == hi {
                acc += weighted[lo] * g[i - lo];
            }
            *slot = acc;
        }
    });
    let mut result = GridDensity { grid_step: delta, first: density.first + step_density.first, values: out, n };
    result.trim();
    Ok(result)
}

/// Absolutely continuous step laws with mean zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ContinuousLaw<T> {
    Uniform { lo: T, hi: T },
}

impl<T: Real> ContinuousLaw<T> {
    pub fn uniform(lo: T, hi: T) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::DegenerateSupport);
        }
        if (lo + hi).abs() > T::tol(1e-12) * (hi - lo) {
            return Err(Error::NonZeroMean { mean: ((lo + hi) / T::lit(2.0)).as_f64() });
        }
        Ok(ContinuousLaw::Uniform { lo, hi })
    }

    pub fn variance(&self) -> T {
        match *self {
            ContinuousLaw::Uniform { lo, hi } => (hi - lo) * (hi - lo) / T::lit(12.0),
        }
    }

    pub fn sigma(&self) -> T {
        self.variance().sqrt()
    }

    pub fn density(&self, x: T) -> T {
        match *self {
            ContinuousLaw::Uniform { lo, hi } => {
                if x >= lo && x <= hi {
                    T::one() / (hi - lo)
                } else {
                    T::zero()
                }
            }
        }
    }

    pub fn default_grid_step(&self) -> T {
        self.sigma() / T::lit(64.0)
    }

    pub fn norming_a(&self, n: T) -> T {
        self.sigma() * n.sqrt()
    }

    /// Hat-function projection `v_i = (1 / delta) int f(x) hat_i(x) dx`.
    pub fn discretize(&self, delta: T) -> Result<GridDensity<T>> {
        if !(delta > T::zero()) {
            return Err(Error::OutOfRange { value: delta.as_f64(), lower: 0.0, upper: f64::INFINITY });
        }
        match *self {
            ContinuousLaw::Uniform { lo, hi } => {
                // antiderivative of the unit hat in units of delta
                let hat_cdf = |t: T| {
                    if t <= -T::one() {
                        T::zero()
                    } else if t <= T::zero() {
                        (t + T::one()) * (t + T::one()) / T::lit(2.0)
                    } else if t < T::one() {
                        T::one() - (T::one() - t) * (T::one() - t) / T::lit(2.0)
                    } else {
                        T::one()
                    }
                };
                let k_lo = (lo / delta).floor().to_i64().unwrap() - 1;
                let k_hi = (hi / delta).ceil().to_i64().unwrap() + 1;
                let height = T::one() / (hi - lo);
                let values = (k_lo..=k_hi)
                    .map(|k| {
                        let xk = T::from_i64_lossy(k) * delta;
                        height * (hat_cdf((hi - xk) / delta) - hat_cdf((lo - xk) / delta))
                    })
                    .collect();
                GridDensity::new(delta, k_lo, values, 1)
            }
        }
    }
}

fn evolve<T: Real>(step_density: &GridDensity<T>, n: usize, kill: bool, mut visit: impl FnMut(&GridDensity<T>) -> Result<()>) -> Result<()> {
    if n == 0 {
        return Err(Error::OutOfRange { value: 0.0, lower: 1.0, upper: f64::INFINITY });
    }
    let mut cur = if kill { step_density.killed() } else { step_density.clone() };
    visit(&cur)?;
    for _ in 1..n {
        cur = grid_self_convolve(&cur, step_density)?;
        if kill {
            cur = cur.killed();
        }
        visit(&cur)?;
    }
    Ok(())
}

/// Grid density of `S_n`.
pub fn grid_density<T: Real>(step_density: &GridDensity<T>, n: usize) -> Result<GridDensity<T>> {
    let mut last = None;
    evolve(step_density, n, false, |g| {
        if g.n() == n {
            last = Some(g.clone());
        }
        Ok(())
    })?;
    Ok(last.unwrap())
}

/// Density of `S_n` given `C_n` (normalized) together with the survival `P(C_n)`.
pub fn positive_grid_density<T: Real>(step_density: &GridDensity<T>, n: usize) -> Result<(GridDensity<T>, T)> {
    let mut out = positive_grid_densities(step_density, &[n])?;
    Ok(out.pop().unwrap())
}

/// As [`positive_grid_density`] for every `n` in `ns`, in one sweep.
pub fn positive_grid_densities<T: Real>(step_density: &GridDensity<T>, ns: &[usize]) -> Result<Vec<(GridDensity<T>, T)>> {
    let n_max = ns.iter().copied().max().unwrap_or(0);
    let mut out = Vec::with_capacity(ns.len());
    evolve(step_density, n_max, true, |g| {
        if ns.contains(&g.n()) {
            let survival = g.integral();
            if !(survival > T::zero()) {
                return Err(Error::ZeroSurvival { n: g.n() });
            }
            out.push((g.scaled(T::one() / survival), survival));
        }
        Ok(())
    })?;
    out.sort_by_key(|e| ns.iter().position(|&n| n == e.0.n()));
    Ok(out)
}

/// Survival probabilities `P(C_1), ..., P(C_n)` on the grid.
pub fn grid_survival<T: Real>(step_density: &GridDensity<T>, n: usize) -> Result<Vec<T>> {
    let mut out = Vec::with_capacity(n);
    evolve(step_density, n, true, |g| {
        out.push(g.integral());
        Ok(())
    })?;
    Ok(out)
}

/// `sup_x |a f(a x) - limit(x)|` over the grid points of `density`.
pub fn density_sup_error<T: Real>(density: &GridDensity<T>, a: T, limit: impl Fn(T) -> T) -> T {
    density
        .values
        .iter()
        .enumerate()
        .map(|(i, &v)| (a * v - limit(density.x(i) / a)).abs())
        .fold(T::zero(), |m, e| m.max(e))
}

/// Sup errors of the two interval local limit statements at one `(n, h)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LltErrors<T> {
    pub n: usize,
    pub h: T,
    pub uncond: T,
    pub cond: T,
}

fn interval_sup<T: Real>(density: &GridDensity<T>, a: T, steps: i64, limit: impl Fn(T) -> T, h: T) -> T {
    let last = density.first + density.values.len() as i64 - 1;
    let mut sup = T::zero();
    // beyond the window both sides vanish up to the limit tail, covered by one extra h
    for k in (density.first - steps)..=last {
        let x = T::from_i64_lossy(k) * density.grid_step;
        let p = density.interval(k, k + steps);
        sup = sup.max((a * p - h * limit(x / a)).abs());
    }
    sup
}

/// `sup_x |a_n P(S_n in [x, x + h)) - h phi(x / a_n)|` and its conditioned analogue with `phi+`.
pub fn stone_llt_error<T: Real>(law: &ContinuousLaw<T>, step_density: &GridDensity<T>, n: usize, h: T) -> Result<LltErrors<T>> {
    let steps = grid_steps(h, step_density.grid_step)?;
    let a = law.norming_a(T::from_usize_lossy(n));
    let f = grid_density(step_density, n)?;
    let (fp, _) = positive_grid_density(step_density, n)?;
    if steps == 0 {
        return Ok(LltErrors { n, h, uncond: T::zero(), cond: T::zero() });
    }
    Ok(LltErrors {
        n,
        h,
        uncond: interval_sup(&f, a, steps, gauss, h),
        cond: interval_sup(&fp, a, steps, meander, h),
    })
}

fn grid_steps<T: Real>(h: T, delta: T) -> Result<i64> {
    let steps = (h / delta).round();
    if !(h >= T::zero()) || (steps * delta - h).abs() > T::tol(1e-9) * delta.max(h) {
        return Err(Error::OutOfRange { value: h.as_f64(), lower: 0.0, upper: f64::INFINITY });
    }
    Ok(steps.to_i64().unwrap())
}

/// `h` rounded to the nearest positive multiple of the grid step.
pub fn snap_to_grid<T: Real>(h: T, delta: T) -> T {
    (h / delta).round().max(T::one()) * delta
}

/// Density errors `(n, sup |a f_n(a x) - phi(x)|, sup |a f_n+(a x) - phi+(x)|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityErrors<T> {
    pub n: usize,
    pub uncond: T,
    pub cond: T,
    pub survival: T,
}

pub fn density_case_errors<T: Real>(law: &ContinuousLaw<T>, delta: T, ns: &[usize]) -> Result<Vec<DensityErrors<T>>> {
    let step = law.discretize(delta)?;
    let cond = positive_grid_densities(&step, ns)?;
    ns.par_iter()
        .zip(cond.par_iter())
        .map(|(&n, (fp, survival))| {
            let a = law.norming_a(T::from_usize_lossy(n));
            let f = grid_density(&step, n)?;
            Ok(DensityErrors {
                n,
                uncond: density_sup_error(&f, a, gauss),
                cond: density_sup_error(fp, a, meander),
                survival: *survival,
            })
        })
        .collect()
}

/// Discretization budget `10 delta^2 n` for masses at time `n`.
pub fn discretization_budget<T: Real>(delta: T, n: usize) -> T {
    T::lit(10.0) * delta * delta * T::from_usize_lossy(n)
}

pub fn density_errors_csv<T: Real>(rows: &[DensityErrors<T>]) -> String {
    let mut out = String::from("n,sup_err_uncond,sup_err_cond,survival\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.16e},{:.16e},{:.16e}", r.n, r.uncond.as_f64(), r.cond.as_f64(), r.survival.as_f64());
    }
    out
}

pub fn llt_errors_csv<T: Real>(rows: &[LltErrors<T>]) -> String {
    let mut out = String::from("n,h,sup_err_uncond,sup_err_cond\n");
    for r in rows {
        let _ = writeln!(out, "{},{:.12e},{:.16e},{:.16e}", r.n, r.h.as_f64(), r.uncond.as_f64(), r.cond.as_f64());
    }
    out
}
