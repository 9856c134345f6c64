//! Norming sequences of the ladder variables.
//!
//! `b(n)` solves `log(n / sqrt 2) = sum_m (rho_m / m) e^{-m / b}` with
//! `rho_m = P(S_m > 0)`, for real `n >= 2`, and `c(n) = a(b(n))` with
//! `a(t) = sigma sqrt(t)`. Solving the same equation for `n` gives the inverse
//! in closed form, `b^{-1}(t) = sqrt 2 exp(sum_m (rho_m / m) e^{-m / t})`.
//!
//! The series is evaluated two ways: truncated at depth `M` with the bound
//! `sum_{m > M} e^{-m / b} / m` on the remainder, and (shift-free lattice laws)
//! in closed form from the Wiener-Hopf factorization.

use std::fmt::Write as _;

use crate::dp::{positive_part_pmf_with, DpConfig, Evolution, Keep};
use crate::error::{Error, Result};
use crate::ladder::first_epoch_tail;
use crate::real::Real;
use crate::walk::StepLaw;
use crate::wiener_hopf::WienerHopf;

/// `(rho_m, rho_bar_m)` for `m = 0..=depth` (entry 0 is `(0, 1)`).
pub fn rho_sequence<T: Real>(step: &StepLaw<T>, depth: usize) -> Result<(Vec<T>, Vec<T>)> {
    rho_sequence_with(step, depth, DpConfig::default())
}

pub fn rho_sequence_with<T: Real>(step: &StepLaw<T>, depth: usize, config: DpConfig<T>) -> Result<(Vec<T>, Vec<T>)> {
    if depth == 0 {
        return Err(Error::OutOfRange { value: 0.0, lower: 1.0, upper: f64::INFINITY });
    }
    let mut evo = Evolution::new(step, Keep::All, config);
    let mut rho = vec![T::zero()];
    let mut rho_bar = vec![T::one()];
    for m in 1..=depth {
        evo.advance()?;
        let (mut pos, mut neg) = (T::zero(), T::zero());
        for (i, &p) in evo.masses().iter().enumerate() {
            if step.point(m, evo.k_min() + i as i64) > T::zero() {
                pos += p;
            } else {
                neg += p;
            }
        }
        rho.push(pos);
        rho_bar.push(neg);
    }
    Ok((rho, rho_bar))
}

/// `sum_{m > depth} e^{-m / b} / m`.
pub fn harmonic_tail<T: Real>(depth: usize, b: T) -> T {
    let q = (-T::one() / b).exp();
    // closed form minus the partial sum, and a geometric bound; both are upper bounds
    let mut partial = T::zero();
    let mut qm = T::one();
    for m in 1..=depth {
        qm *= q;
        partial += qm / T::from_usize_lossy(m);
    }
    let total = -(-(-T::one() / b).exp_m1()).ln();
    // rounding slack of the partial sum keeps the closed form an upper bound
    let slack = T::epsilon() * T::from_usize_lossy(depth + 2) * total.abs();
    let closed = total - partial + slack;
    let next = T::from_usize_lossy(depth + 1);
    let geometric = qm * q / (next * (T::one() - q));
    closed.max(T::zero()).min(geometric)
}

/// Everything needed to evaluate `b`, `c`, their inverses and the survival asymptotics.
#[derive(Debug, Clone)]
pub struct NormingData<T> {
    rho: Vec<T>,
    rho_bar: Vec<T>,
    sigma: T,
    tol: T,
    exact: Option<WienerHopf<T>>,
}

impl<T: Real> NormingData<T> {
    /// Tabulates `rho_m` to `depth`; shift-free lattice laws also get the closed-form route.
    pub fn new(step: &StepLaw<T>, depth: usize) -> Result<Self> {
        let mut data = Self::truncated_only(step, depth)?;
        if step.shift() == T::zero() {
            data.exact = Some(WienerHopf::new(step)?);
        }
        Ok(data)
    }

    /// Series evaluated only by truncation (every law).
    pub fn truncated_only(step: &StepLaw<T>, depth: usize) -> Result<Self> {
        let (rho, rho_bar) = rho_sequence(step, depth)?;
        Ok(NormingData { rho, rho_bar, sigma: step.sigma(), tol: T::tol(1e-9), exact: None })
    }

    pub fn with_tolerance(mut self, tol: T) -> Self {
        self.tol = tol;
        self
    }

    pub fn depth(&self) -> usize {
        self.rho.len() - 1
    }

    pub fn rho(&self) -> &[T] {
        &self.rho
    }

    pub fn rho_bar(&self) -> &[T] {
        &self.rho_bar
    }

    pub fn sigma(&self) -> T {
        self.sigma
    }

    pub fn has_exact_route(&self) -> bool {
        self.exact.is_some()
    }

    /// `a(t) = sigma sqrt(t)`.
    pub fn a(&self, t: T) -> T {
        self.sigma * t.sqrt()
    }

    /// Partial sum `sum_{m <= M} (w_m / m) e^{-m / b}` and the bound on the remainder.
    fn truncated(weights: &[T], b: T) -> (T, T) {
        let q = (-T::one() / b).exp();
        let mut qm = T::one();
        let mut sum = T::zero();
        for (m, &w) in weights.iter().enumerate().skip(1) {
            qm *= q;
            sum += w * qm / T::from_usize_lossy(m);
        }
        (sum, harmonic_tail(weights.len() - 1, b))
    }

    /// `sum_m (rho_m / m) e^{-m / b}` by truncation, with its remainder bound.
    pub fn rho_series_truncated(&self, b: T) -> (T, T) {
        Self::truncated(&self.rho, b)
    }

    /// `sum_m (rho_bar_m / m) e^{-m / b}` by truncation, with its remainder bound.
    pub fn rho_bar_series_truncated(&self, b: T) -> (T, T) {
        Self::truncated(&self.rho_bar, b)
    }

    fn checked(&self, (sum, tail): (T, T)) -> Result<T> {
        if tail > self.tol {
            return Err(Error::TruncationInsufficient {
                tail: tail.as_f64(),
                tol: self.tol.as_f64(),
                depth: self.depth(),
            });
        }
        Ok(sum)
    }

    /// `sum_m (rho_m / m) e^{-m / b}`.
    pub fn rho_series(&self, b: T) -> Result<T> {
        match &self.exact {
            Some(wh) => wh.positivity_series_q(-(-T::one() / b).exp_m1()),
            None => self.checked(self.rho_series_truncated(b)),
        }
    }

    /// `sum_m (rho_bar_m / m) e^{-m t}`, i.e. `-log(1 - psi(t))`.
    pub fn rho_bar_series(&self, t: T) -> Result<T> {
        match &self.exact {
            Some(wh) => {
                let q = -(-t).exp_m1();
                Ok(-q.ln() - wh.positivity_series_q(q)?)
            }
            None => self.checked(self.rho_bar_series_truncated(T::one() / t)),
        }
    }

    /// `b(n)` for real `n >= 2`.
    pub fn solve_b(&self, n: T) -> Result<T> {
        let two = T::lit(2.0);
        if !(n >= two) {
            return Err(Error::OutOfRange { value: n.as_f64(), lower: 2.0, upper: f64::INFINITY });
        }
        let target = (n / two.sqrt()).ln();
        let f = |b: T| self.rho_series(b).map(|v| v - target);
        let mut lo = T::one();
        let mut hi = n * n * n;
        while f(lo)? > T::zero() {
            lo /= two;
            if lo < T::lit(1e-6) {
                return Err(Error::NumericalFailure("no bracket for b below".into()));
            }
        }
        while f(hi)? < T::zero() {
            lo = hi;
            hi *= two;
        }
        let (mut llo, mut lhi) = (lo.ln(), hi.ln());
        let rel = T::tol(1e-10);
        while lhi - llo > rel {
            let mid = (llo + lhi) / two;
            if f(mid.exp())? < T::zero() {
                llo = mid;
            } else {
                lhi = mid;
            }
        }
        let b = ((llo + lhi) / two).exp();
        let residual = f(b)?.abs();
        if residual > self.tol {
            return Err(Error::NumericalFailure(format!("defining equation residual {residual:e} at b = {b}")));
        }
        Ok(b)
    }

    /// `b^{-1}(t)` for `t >= b(2)`.
    pub fn b_inverse(&self, t: T) -> Result<T> {
        let two = T::lit(2.0);
        let lower = self.solve_b(two)?;
        if !(t >= lower * (T::one() - T::tol(1e-9))) {
            return Err(Error::OutOfRange { value: t.as_f64(), lower: lower.as_f64(), upper: f64::INFINITY });
        }
        Ok(two.sqrt() * self.rho_series(t)?.exp())
    }

    /// The explicit formula for any `t > 0`, without the `t >= b(2)` domain check.
    pub fn b_inverse_unchecked(&self, t: T) -> Result<T> {
        if !(t > T::zero()) {
            return Err(Error::OutOfRange { value: t.as_f64(), lower: 0.0, upper: f64::INFINITY });
        }
        Ok(T::lit(2.0).sqrt() * self.rho_series(t)?.exp())
    }

    /// `c(n) = a(b(n))`.
    pub fn c(&self, n: T) -> Result<T> {
        Ok(self.a(self.solve_b(n)?))
    }

    /// `c^{-1}(y) = b^{-1}((y / sigma)^2)`.
    pub fn c_inverse(&self, y: T) -> Result<T> {
        let t = y / self.sigma;
        self.b_inverse(t * t)
    }
}

/// The three survival quantities compared by the asymptotic relation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SurvivalAsymptotics<T> {
    pub n: usize,
    /// `P(C_n)`.
    pub exact: T,
    /// `(1 - psi(1/n)) / sqrt(pi)`.
    pub spitzer: T,
    /// `b^{-1}(n) / (n sqrt(2 pi))`.
    pub limit_form: T,
}

impl<T: Real> SurvivalAsymptotics<T> {
    pub fn limit_ratio(&self) -> T {
        self.exact / self.limit_form
    }

    pub fn spitzer_ratio(&self) -> T {
        self.exact / self.spitzer
    }
}

pub fn survival_asymptotics<T: Real>(
    step: &StepLaw<T>,
    norming: &NormingData<T>,
    n: usize,
) -> Result<SurvivalAsymptotics<T>> {
    if n == 0 {
        return Err(Error::OutOfRange { value: 0.0, lower: 1.0, upper: f64::INFINITY });
    }
    let exact = positive_part_pmf_with(step, n, DpConfig::default())?.survival;
    let nn = T::from_usize_lossy(n);
    let pi = T::lit(std::f64::consts::PI);
    // 1 - psi(t) = exp(-sum (rho_bar_m / m) e^{-m t})
    let spitzer = (-norming.rho_bar_series(T::one() / nn)?).exp() / pi.sqrt();
    let limit_form = norming.b_inverse(nn)? / (nn * (T::lit(2.0) * pi).sqrt());
    Ok(SurvivalAsymptotics { n, exact, spitzer, limit_form })
}

/// `P(T_1 > b(n)) n sqrt(pi / 2)`, which tends to one.
pub fn stable_tail_check<T: Real>(step: &StepLaw<T>, norming: &NormingData<T>, n: usize) -> Result<T> {
    let nn = T::from_usize_lossy(n);
    let b = norming.solve_b(nn)?;
    let t = b.floor().to_usize().ok_or(Error::HorizonTooLarge { cells: usize::MAX, budget: 0 })?;
    let config = DpConfig::default();
    if t > config.max_cells {
        return Err(Error::HorizonTooLarge { cells: t, budget: config.max_cells });
    }
    let tail = first_epoch_tail(step, t, config)?[t];
    Ok(tail * nn * (T::lit(std::f64::consts::PI) / T::lit(2.0)).sqrt())
}

/// One row of the norming report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormingRow<T> {
    pub n: usize,
    pub b_n: T,
    pub c_n: T,
    pub b_inv_n: T,
    pub exact: T,
    pub limit: T,
}

pub fn norming_report<T: Real>(step: &StepLaw<T>, norming: &NormingData<T>, ns: &[usize]) -> Result<Vec<NormingRow<T>>> {
    ns.iter()
        .map(|&n| {
            let nn = T::from_usize_lossy(n);
            let s = survival_asymptotics(step, norming, n)?;
            Ok(NormingRow {
                n,
                b_n: norming.solve_b(nn)?,
                c_n: norming.c(nn)?,
                b_inv_n: norming.b_inverse(nn)?,
                exact: s.exact,
                limit: s.limit_form,
            })
        })
        .collect()
}

pub fn norming_csv<T: Real>(rows: &[NormingRow<T>]) -> String {
    let mut out = String::from("n,b_n,c_n,b_inv_n,P_Cn_exact,P_Cn_limit,ratio\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.n,
            r.b_n.as_f64(),
            r.c_n.as_f64(),
            r.b_inv_n.as_f64(),
            r.exact.as_f64(),
            r.limit.as_f64(),
            (r.exact / r.limit).as_f64()
        );
    }
    out
}
