//! Brute-force path enumeration: the ground truth for every exact identity.
//!
//! All `|support|^n` paths are visited depth-first; the probability of a path is
//! the product of its step masses.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::real::Real;
use crate::walk::StepLaw;

pub const DEFAULT_PATH_CAP: f64 = 1e8;

/// A complete path of length `n`, seen through its partial sums.
pub struct PathView<'a, T> {
    step: &'a StepLaw<T>,
    /// Lattice index of `S_t` for `t = 0..=n`.
    indices: &'a [i64],
}

impl<T: Real> PathView<'_, T> {
    /// Number of steps.
    pub fn len(&self) -> usize {
        self.indices.len() - 1
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Lattice index of `S_t`.
    pub fn index(&self, t: usize) -> i64 {
        self.indices[t]
    }

    /// Physical value of `S_t`.
    pub fn point(&self, t: usize) -> T {
        self.step.point(t, self.indices[t])
    }

    /// Strict ascending ladder epochs `T_1 < T_2 < ...` up to time `n`.
    pub fn ladder_epochs(&self) -> Vec<usize> {
        let mut out = Vec::new();
        let mut record = T::zero();
        for t in 1..=self.len() {
            let x = self.point(t);
            if x > record {
                out.push(t);
                record = x;
            }
        }
        out
    }
}

fn check_cap<T: Real>(step: &StepLaw<T>, n: usize, cap: f64) -> Result<()> {
    let paths = (step.atoms().len() as f64).powi(n as i32);
    if paths > cap {
        return Err(Error::ExplosionGuard { paths, cap });
    }
    Ok(())
}

/// Visits every path with its probability.
pub fn for_each_path<T, F>(step: &StepLaw<T>, n: usize, cap: f64, mut visit: F) -> Result<()>
where
    T: Real,
    F: FnMut(&PathView<'_, T>, T),
{
    check_cap(step, n, cap)?;
    let atoms = step.atoms();
    let mut choice = vec![0usize; n];
    let mut indices = vec![0i64; n + 1];
    let mut prob = vec![T::one(); n + 1];
    if n == 0 {
        visit(&PathView { step, indices: &indices }, T::one());
        return Ok(());
    }
    // depth = number of fixed steps
    let mut depth = 0usize;
    loop {
        if depth == n {
            visit(&PathView { step, indices: &indices }, prob[n]);
            // backtrack to the deepest position with a remaining choice
            loop {
                if depth == 0 {
                    return Ok(());
                }
                depth -= 1;
                choice[depth] += 1;
                if choice[depth] < atoms.len() {
                    break;
                }
                choice[depth] = 0;
            }
        }
        let (k, p) = atoms[choice[depth]];
        indices[depth + 1] = indices[depth] + k;
        prob[depth + 1] = prob[depth] * p;
        depth += 1;
    }
}

/// Probability that the path satisfies `event`.
pub fn enumerate_paths_oracle<T, F>(step: &StepLaw<T>, n: usize, mut event: F) -> Result<T>
where
    T: Real,
    F: FnMut(&PathView<'_, T>) -> bool,
{
    let mut total = T::zero();
    for_each_path(step, n, DEFAULT_PATH_CAP, |path, p| {
        if event(path) {
            total += p;
        }
    })?;
    Ok(total)
}

/// Law of an observable defined on part of the path space (`None` = event fails).
pub fn enumerate_paths_distribution<T, K, F>(step: &StepLaw<T>, n: usize, mut observe: F) -> Result<BTreeMap<K, T>>
where
    T: Real,
    K: Ord,
    F: FnMut(&PathView<'_, T>) -> Option<K>,
{
    let mut out = BTreeMap::new();
    for_each_path(step, n, DEFAULT_PATH_CAP, |path, p| {
        if let Some(key) = observe(path) {
            *out.entry(key).or_insert_with(T::zero) += p;
        }
    })?;
    Ok(out)
}
