//! Exact laws of `S_n`, of `(C_n, S_n)` and of `S_n` conditioned on `C_n`.
//!
//! Every law is computed by iterated direct convolution with the step masses.
//! Killing removes the mass sitting on the forbidden half-line after each step;
//! the point `0` itself is forbidden for the positive half-line, matching the
//! strict inequalities in `C_n = (S_1 > 0, ..., S_n > 0)`.

use crate::error::{Error, Result};
use crate::real::Real;
use crate::walk::{LatticePmf, StepLaw};

/// Numerical budget of a DP run.
#[derive(Debug, Clone, Copy)]
pub struct DpConfig<T> {
    /// Edge entries below this mass are dropped (and accounted for).
    pub floor: T,
    /// Largest window (single slice) or table (all slices) in cells.
    pub max_cells: usize,
}

impl<T: Real> Default for DpConfig<T> {
    fn default() -> Self {
        DpConfig { floor: T::mass_floor(), max_cells: 60_000_000 }
    }
}

impl<T: Real> DpConfig<T> {
    pub fn with_floor(floor: T) -> Self {
        DpConfig { floor, ..Self::default() }
    }
}

/// Which part of the lattice survives each step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Keep {
    All,
    /// Points `> 0`.
    Positive,
    /// Points `<= 0`.
    NonPositive,
}

impl Keep {
    #[inline]
    fn keeps<T: Real>(self, x: T) -> bool {
        match self {
            Keep::All => true,
            Keep::Positive => x > T::zero(),
            Keep::NonPositive => x <= T::zero(),
        }
    }
}

/// State of a (possibly killed) walk, advanced one step at a time.
#[derive(Debug, Clone)]
pub struct Evolution<'a, T> {
    step: &'a StepLaw<T>,
    keep: Keep,
    config: DpConfig<T>,
    t: usize,
    k_min: i64,
    masses: Vec<T>,
    scratch: Vec<T>,
    dropped: T,
}

impl<'a, T: Real> Evolution<'a, T> {
    pub fn new(step: &'a StepLaw<T>, keep: Keep, config: DpConfig<T>) -> Self {
        Evolution {
            step,
            keep,
            config,
            t: 0,
            k_min: 0,
            masses: vec![T::one()],
            scratch: Vec::new(),
            dropped: T::zero(),
        }
    }

    pub fn time(&self) -> usize {
        self.t
    }

    pub fn k_min(&self) -> i64 {
        self.k_min
    }

    pub fn masses(&self) -> &[T] {
        &self.masses
    }

    /// Mass dropped at window edges so far.
    pub fn dropped(&self) -> T {
        self.dropped
    }

    pub fn total(&self) -> T {
        self.masses.iter().copied().sum()
    }

    pub fn current(&self) -> LatticePmf<T> {
        LatticePmf::new(self.t, self.k_min, self.masses.clone(), self.step.shift(), self.step.span())
    }

    /// Advances one step and returns the mass removed by the kill, as a pmf at the new time.
    pub fn advance(&mut self) -> Result<LatticePmf<T>> {
        let lo = self.step.min_offset();
        let width = (self.step.max_offset() - lo) as usize;
        let len = self.masses.len() + width;
        if len > self.config.max_cells {
            return Err(Error::HorizonTooLarge { cells: len, budget: self.config.max_cells });
        }
        convolve_symmetric(&self.masses, self.step, &mut self.scratch);
        std::mem::swap(&mut self.masses, &mut self.scratch);
        self.k_min += lo;
        self.t += 1;

        let mut killed = Vec::new();
        let mut killed_k_min = self.k_min;
        if self.keep != Keep::All {
            let (shift, span) = (self.step.shift(), self.step.span());
            let tt = T::from_usize_lossy(self.t);
            let mut first_killed = None;
            let mut last_killed = 0;
            for (i, m) in self.masses.iter().enumerate() {
                let x = shift * tt + span * T::from_i64_lossy(self.k_min + i as i64);
                if !self.keep.keeps(x) && *m > T::zero() {
                    first_killed.get_or_insert(i);
                    last_killed = i;
                }
            }
            if let Some(first) = first_killed {
                killed_k_min = self.k_min + first as i64;
                killed = self.masses[first..=last_killed].to_vec();
                for (j, slot) in self.masses[first..=last_killed].iter_mut().enumerate() {
                    let x = shift * tt + span * T::from_i64_lossy(killed_k_min + j as i64);
                    if self.keep.keeps(x) {
                        killed[j] = T::zero();
                    } else {
                        *slot = T::zero();
                    }
                }
            }
        }
        self.trim();
        Ok(LatticePmf::new(self.t, killed_k_min, killed, self.step.shift(), self.step.span()))
    }

    fn trim(&mut self) {
        let floor = self.config.floor;
        let start = self.masses.iter().position(|&m| m >= floor).unwrap_or(self.masses.len());
        let end = self.masses.iter().rposition(|&m| m >= floor).map_or(start, |i| i + 1);
        if start == 0 && end == self.masses.len() {
            return;
        }
        let head: T = self.masses[..start].iter().copied().sum();
        let tail: T = self.masses[end..].iter().copied().sum();
        self.dropped += head + tail;
        self.masses.truncate(end);
        self.masses.drain(..start);
        self.k_min += start as i64;
    }

    pub fn run_to(&mut self, n: usize) -> Result<()> {
        while self.t < n {
            self.advance()?;
        }
        Ok(())
    }
}

/// Convolves `masses` with the step law into `out`.
///
/// Terms are added in outer-inner atom pairs so that a symmetric input and a
/// symmetric step law give a bit-exactly symmetric output.
fn convolve_symmetric<T: Real>(masses: &[T], step: &StepLaw<T>, out: &mut Vec<T>) {
    let atoms = step.atoms();
    let lo = step.min_offset();
    let width = (step.max_offset() - lo) as usize;
    let len = masses.len() + width;
    let mut padded = vec![T::zero(); masses.len() + 2 * width];
    padded[width..width + masses.len()].copy_from_slice(masses);
    out.clear();
    out.resize(len, T::zero());
    let a = atoms.len();
    for j in 0..a / 2 {
        let (k1, p1) = atoms[j];
        let (k2, p2) = atoms[a - 1 - j];
        let s1 = &padded[width - (k1 - lo) as usize..];
        let s2 = &padded[width - (k2 - lo) as usize..];
        for ((o, &m1), &m2) in out.iter_mut().zip(s1).zip(s2) {
            *o += m1 * p1 + m2 * p2;
        }
    }
    if a % 2 == 1 {
        let (k, p) = atoms[a / 2];
        let s = &padded[width - (k - lo) as usize..];
        for (o, &m) in out.iter_mut().zip(s) {
            *o += m * p;
        }
    }
}

/// Killed law `P(C_n, S_n = x)` with its total `P(C_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct KilledLawResult<T> {
    pub pmf: LatticePmf<T>,
    pub survival: T,
    /// Mass dropped at window edges (not killed mass).
    pub dropped: T,
}

/// Law of `S_n`.
pub fn pmf<T: Real>(step: &StepLaw<T>, n: usize) -> Result<LatticePmf<T>> {
    pmf_with(step, n, DpConfig::default())
}

pub fn pmf_with<T: Real>(step: &StepLaw<T>, n: usize, config: DpConfig<T>) -> Result<LatticePmf<T>> {
    let mut evo = Evolution::new(step, Keep::All, config);
    evo.run_to(n)?;
    Ok(evo.current())
}

/// Laws of `S_0, ..., S_n`.
pub fn pmf_sequence<T: Real>(step: &StepLaw<T>, n: usize, config: DpConfig<T>) -> Result<Vec<LatticePmf<T>>> {
    let mut evo = Evolution::new(step, Keep::All, config);
    let mut out = Vec::with_capacity(n + 1);
    let mut cells = 0usize;
    out.push(evo.current());
    for _ in 0..n {
        evo.advance()?;
        cells += evo.masses().len();
        if cells > config.max_cells {
            return Err(Error::HorizonTooLarge { cells, budget: config.max_cells });
        }
        out.push(evo.current());
    }
    Ok(out)
}

/// `P(C_n, S_n = x)` by convolve-then-kill.
pub fn positive_part_pmf<T: Real>(step: &StepLaw<T>, n: usize) -> Result<KilledLawResult<T>> {
    positive_part_pmf_with(step, n, DpConfig::default())
}

pub fn positive_part_pmf_with<T: Real>(
    step: &StepLaw<T>,
    n: usize,
    config: DpConfig<T>,
) -> Result<KilledLawResult<T>> {
    let mut evo = Evolution::new(step, Keep::Positive, config);
    evo.run_to(n)?;
    let pmf = evo.current();
    Ok(KilledLawResult { survival: pmf.total(), pmf, dropped: evo.dropped() })
}

/// Killed laws at times `0..=n` (time 0 is the point mass at the origin).
pub fn killed_sequence<T: Real>(
    step: &StepLaw<T>,
    n: usize,
    config: DpConfig<T>,
) -> Result<Vec<LatticePmf<T>>> {
    let mut evo = Evolution::new(step, Keep::Positive, config);
    let mut out = Vec::with_capacity(n + 1);
    let mut cells = 1usize;
    out.push(evo.current());
    for _ in 0..n {
        evo.advance()?;
        cells += evo.masses().len();
        if cells > config.max_cells {
            return Err(Error::HorizonTooLarge { cells, budget: config.max_cells });
        }
        out.push(evo.current());
    }
    Ok(out)
}

/// Law of `S_n` given `C_n`.
pub fn conditioned_pmf<T: Real>(step: &StepLaw<T>, n: usize) -> Result<LatticePmf<T>> {
    let killed = positive_part_pmf(step, n)?;
    normalize_killed(killed, n)
}

pub(crate) fn normalize_killed<T: Real>(killed: KilledLawResult<T>, n: usize) -> Result<LatticePmf<T>> {
    if killed.survival <= T::zero() {
        return Err(Error::ZeroSurvival { n });
    }
    Ok(killed.pmf.scaled(T::one() / killed.survival))
}

/// `sup |(a_n / c) P(S_n = x) - limit(x / a_n)|` over admissible points `x` of the
/// pmf window, where `c` is the effective span (span times period).
pub fn lattice_llt_error<T: Real>(step: &StepLaw<T>, law: &LatticePmf<T>, limit: impl Fn(T) -> T) -> T {
    let n = law.n();
    let a = step.norming_a(T::from_usize_lossy(n));
    let scale = a / step.effective_span();
    law.iter()
        .filter(|&(k, _, _)| step.admissible(n, k))
        .map(|(_, x, m)| (scale * m - limit(x / a)).abs())
        .fold(T::zero(), |acc, e| acc.max(e))
}

/// Sup errors of the unconditioned and conditioned lattice local limit theorems at `n`.
pub fn lattice_llt_errors<T: Real>(step: &StepLaw<T>, n: usize) -> Result<(T, T)> {
    let plain = lattice_llt_error(step, &pmf(step, n)?, crate::real::gauss);
    let cond = lattice_llt_error(step, &conditioned_pmf(step, n)?, crate::real::meander);
    Ok((plain, cond))
}

/// `P(C_m)` for `m = 0..=n`.
pub fn survival_sequence<T: Real>(step: &StepLaw<T>, n: usize, config: DpConfig<T>) -> Result<Vec<T>> {
    let mut evo = Evolution::new(step, Keep::Positive, config);
    let mut out = Vec::with_capacity(n + 1);
    out.push(T::one());
    for _ in 0..n {
        evo.advance()?;
        out.push(evo.total());
    }
    Ok(out)
}
