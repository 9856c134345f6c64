//! Seeded Monte Carlo for lattice walks.
//!
//! Every sampler is a pure function of `(step, n, count, seed)`. Work is cut
//! into fixed chunks and chunk `c` draws from the ChaCha20 stream `c` of the
//! seed, so output does not depend on the thread count.
//!
//! The conditioned sampler is exact: endpoints come from the conditioned law
//! and paths are rebuilt backward from the killed DP. Only an audit subsample
//! of paths is materialized; the killed DP is kept as checkpoints every
//! `~sqrt(n)` steps and each segment is recomputed when the backward pass
//! reaches it.

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::dp::{DpConfig, Evolution, Keep};
use crate::error::{Error, Result};
use crate::real::Real;
use crate::walk::{LatticePmf, StepLaw};

pub const RNG_ID: &str = "chacha20";
const CHUNK: usize = 1 << 14;
/// Audit streams are numbered down from the top of the stream space.
const AUDIT_STREAM_BASE: u64 = u64::MAX;

fn stream(seed: u64, id: u64) -> ChaCha20Rng {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampleBatch {
    pub seed: u64,
    pub count: usize,
    pub n: usize,
    /// Lattice indices `k` of `S_n = shift * n + span * k`.
    pub endpoints: Vec<i64>,
    /// Paths in the batch that satisfy `C_n` (all of them for conditioned batches).
    pub survival_count: usize,
    /// Paths drawn to produce the batch.
    pub attempts: usize,
    pub survival_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BatchMetadata {
    pub seed: u64,
    pub rng: String,
    pub n: usize,
    pub count: usize,
    pub survival_rate: f64,
}

impl SampleBatch {
    pub fn metadata(&self) -> BatchMetadata {
        BatchMetadata { seed: self.seed, rng: RNG_ID.into(), n: self.n, count: self.count, survival_rate: self.survival_rate }
    }

    pub fn points<T: Real>(&self, step: &StepLaw<T>) -> Vec<T> {
        self.endpoints.iter().map(|&k| step.point(self.n, k)).collect()
    }
}

fn atom_sampler<T: Real>(step: &StepLaw<T>) -> (Vec<i64>, WeightedIndex<f64>) {
    let offsets = step.atoms().iter().map(|a| a.0).collect();
    let weights: Vec<f64> = step.atoms().iter().map(|a| a.1.as_f64()).collect();
    (offsets, WeightedIndex::new(weights).expect("validated step masses"))
}

fn positive<T: Real>(step: &StepLaw<T>, t: usize, k: i64) -> bool {
    step.point(t, k) > T::zero()
}

/// IID endpoints of `n`-step paths; also counts paths that stay positive.
pub fn sample_unconditioned<T: Real>(step: &StepLaw<T>, n: usize, count: usize, seed: u64) -> Result<SampleBatch> {
    if count == 0 {
        return Err(Error::OutOfRange { value: 0.0, lower: 1.0, upper: f64::INFINITY });
    }
    let (offsets, dist) = atom_sampler(step);
    let chunks: Vec<(Vec<i64>, usize)> = (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = stream(seed, c as u64);
            let len = CHUNK.min(count - c * CHUNK);
            let mut ends = Vec::with_capacity(len);
            let mut alive = 0;
            for _ in 0..len {
                let mut k = 0i64;
                let mut ok = true;
                for t in 1..=n {
                    k += offsets[dist.sample(&mut rng)];
                    ok &= positive(step, t, k);
                }
                alive += ok as usize;
                ends.push(k);
            }
            (ends, alive)
        })
        .collect();
    let survival_count = chunks.iter().map(|c| c.1).sum();
    let endpoints = chunks.into_iter().flat_map(|c| c.0).collect();
    Ok(SampleBatch {
        seed,
        count,
        n,
        endpoints,
        survival_count,
        attempts: count,
        survival_rate: survival_count as f64 / count as f64,
    })
}

/// Naive rejection: unconditioned paths until `count` of them satisfy `C_n`.
pub fn sample_rejection<T: Real>(step: &StepLaw<T>, n: usize, count: usize, seed: u64, max_attempts: usize) -> Result<SampleBatch> {
    if count == 0 {
        return Err(Error::OutOfRange { value: 0.0, lower: 1.0, upper: f64::INFINITY });
    }
    let (offsets, dist) = atom_sampler(step);
    let mut endpoints = Vec::with_capacity(count);
    let mut attempts = 0;
    let mut c = 0u64;
    // chunks are drawn in rounds of fixed size, accepted in chunk order
    while endpoints.len() < count {
        let round: Vec<Vec<i64>> = (c..c + 64)
            .into_par_iter()
            .map(|id| {
                let mut rng = stream(seed, id);
                let mut acc = Vec::new();
                for _ in 0..CHUNK {
                    let mut k = 0i64;
                    let mut t = 0;
                    while t < n {
                        t += 1;
                        k += offsets[dist.sample(&mut rng)];
                        if !positive(step, t, k) {
                            break;
                        }
                    }
                    // marker for a rejected path
                    acc.push(if positive(step, t, k) && t == n { k } else { i64::MIN });
                }
                acc
            })
            .collect();
        c += 64;
        for k in round.into_iter().flatten() {
            if endpoints.len() == count || attempts == max_attempts {
                break;
            }
            attempts += 1;
            if k != i64::MIN {
                endpoints.push(k);
            }
        }
        if attempts >= max_attempts && endpoints.len() < count {
            return Err(Error::ExplosionGuard { paths: attempts as f64, cap: max_attempts as f64 });
        }
    }
    Ok(SampleBatch {
        seed,
        count,
        n,
        endpoints,
        survival_count: count,
        attempts,
        survival_rate: count as f64 / attempts as f64,
    })
}

/// Killed DP stored as checkpoints.
struct CheckpointedKilled<'a, T> {
    stride: usize,
    checkpoints: Vec<Evolution<'a, T>>,
    last: LatticePmf<T>,
}

impl<'a, T: Real> CheckpointedKilled<'a, T> {
    fn run(step: &'a StepLaw<T>, n: usize, config: DpConfig<T>) -> Result<Self> {
        let stride = ((n as f64).sqrt().ceil() as usize).max(1);
        let mut evo = Evolution::new(step, Keep::Positive, config);
        let mut checkpoints = vec![evo.clone()];
        while evo.time() < n {
            evo.advance()?;
            if evo.time().is_multiple_of(stride) && evo.time() < n {
                checkpoints.push(evo.clone());
            }
        }
        Ok(CheckpointedKilled { stride, checkpoints, last: evo.current() })
    }

    /// Slices `t0..=t1` of segment `s`.
    fn segment(&self, s: usize, n: usize) -> Result<(usize, Vec<LatticePmf<T>>)> {
        let mut evo = self.checkpoints[s].clone();
        let t0 = evo.time();
        let t1 = (t0 + self.stride).min(n);
        let mut slices = vec![evo.current()];
        while evo.time() < t1 {
            evo.advance()?;
            slices.push(evo.current());
        }
        Ok((t0, slices))
    }
}

/// One backward step from `k` at time `t` to time `t - 1`; returns the offset taken.
fn backward_step<T: Real, R: Rng>(prev: &LatticePmf<T>, step: &StepLaw<T>, k: i64, rng: &mut R) -> Option<i64> {
    let mut total = 0.0;
    let weights: Vec<(i64, f64)> = step
        .atoms()
        .iter()
        .map(|&(j, p)| {
            let w = (prev.get(k - j) * p).as_f64();
            total += w;
            (j, w)
        })
        .collect();
    if !(total > 0.0) {
        return None;
    }
    let mut u = rng.random::<f64>() * total;
    let mut chosen = None;
    for &(j, w) in &weights {
        if w > 0.0 {
            chosen = Some(j);
            if u < w {
                break;
            }
            u -= w;
        }
    }
    chosen
}

/// Exactly sampled conditioned batch with audited paths.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedBatch {
    pub batch: SampleBatch,
    /// Indices into `batch.endpoints` whose paths were rebuilt.
    pub audit_indices: Vec<usize>,
    /// Increments of each audited path, in time order.
    pub audit_paths: Vec<Vec<i32>>,
}

impl ConditionedBatch {
    /// Replays audited increments; returns the number of paths violating `C_n`
    /// or not ending at their recorded endpoint.
    pub fn audit_violations<T: Real>(&self, step: &StepLaw<T>) -> usize {
        let atoms: Vec<i64> = step.atoms().iter().map(|a| a.0).collect();
        self.audit_indices
            .iter()
            .zip(&self.audit_paths)
            .filter(|(&i, path)| {
                let mut k = 0i64;
                let mut ok = path.len() == self.batch.n;
                for (t, &j) in path.iter().enumerate() {
                    ok &= atoms.contains(&(j as i64));
                    k += j as i64;
                    ok &= positive(step, t + 1, k);
                }
                !(ok && k == self.batch.endpoints[i])
            })
            .count()
    }
}

pub fn sample_conditioned<T: Real>(step: &StepLaw<T>, n: usize, count: usize, seed: u64) -> Result<ConditionedBatch> {
    sample_conditioned_with(step, n, count, seed, DpConfig::default())
}

pub fn sample_conditioned_with<T: Real>(
    step: &StepLaw<T>,
    n: usize,
    count: usize,
    seed: u64,
    config: DpConfig<T>,
) -> Result<ConditionedBatch> {
    if count == 0 {
        return Err(Error::OutOfRange { value: 0.0, lower: 1.0, upper: f64::INFINITY });
    }
    let table = CheckpointedKilled::run(step, n, config)?;
    let survival = table.last.total();
    if !(survival > T::zero()) {
        return Err(Error::ZeroSurvival { n });
    }
    let weights: Vec<f64> = table.last.masses().iter().map(|m| m.as_f64()).collect();
    let dist = WeightedIndex::new(&weights).map_err(|_| Error::ZeroSurvival { n })?;
    let k_min = table.last.k_min();
    let endpoints: Vec<i64> = (0..count.div_ceil(CHUNK))
        .into_par_iter()
        .flat_map_iter(|c| {
            let mut rng = stream(seed, c as u64);
            let len = CHUNK.min(count - c * CHUNK);
            (0..len).map(|_| k_min + dist.sample(&mut rng) as i64).collect::<Vec<_>>()
        })
        .collect();

    let audit_indices: Vec<usize> = (0..count).step_by(100).collect();
    let mut positions: Vec<i64> = audit_indices.iter().map(|&i| endpoints[i]).collect();
    let mut rngs: Vec<ChaCha20Rng> = (0..audit_indices.len()).map(|a| stream(seed, AUDIT_STREAM_BASE - a as u64)).collect();
    let mut reversed: Vec<Vec<i32>> = vec![Vec::with_capacity(n); audit_indices.len()];
    for s in (0..table.checkpoints.len()).rev() {
        let (t0, slices) = table.segment(s, n)?;
        for t in (t0 + 1..t0 + slices.len()).rev() {
            let prev = &slices[t - 1 - t0];
            positions
                .par_iter_mut()
                .zip(rngs.par_iter_mut())
                .zip(reversed.par_iter_mut())
                .try_for_each(|((k, rng), path)| {
                    let j = backward_step(prev, step, *k, rng)
                        .ok_or(Error::DualityViolation { n: t, discrepancy: f64::NAN })?;
                    *k -= j;
                    path.push(j as i32);
                    Ok::<(), Error>(())
                })?;
        }
    }
    if positions.iter().any(|&k| k != 0) {
        return Err(Error::DualityViolation { n: 0, discrepancy: f64::NAN });
    }
    let audit_paths = reversed
        .into_iter()
        .map(|mut p| {
            p.reverse();
            p
        })
        .collect();
    Ok(ConditionedBatch {
        batch: SampleBatch {
            seed,
            count,
            n,
            endpoints,
            survival_count: count,
            attempts: count,
            survival_rate: survival.as_f64(),
        },
        audit_indices,
        audit_paths,
    })
}

/// Pearson chi-square test of endpoint counts against a lattice law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiSquare {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Bins with expected count below 5 are pooled into one bin; an observation
/// where the law has no mass gives `p_value = 0`.
pub fn chi_square<T: Real>(endpoints: &[i64], law: &LatticePmf<T>) -> Result<ChiSquare> {
    let total = law.total().as_f64();
    if endpoints.is_empty() || !(total > 0.0) {
        return Err(Error::EmptyRange);
    }
    let count = endpoints.len() as f64;
    let mut observed = vec![0usize; law.masses().len()];
    for &k in endpoints {
        let i = k - law.k_min();
        if i < 0 || i as usize >= observed.len() || law.get(k) == T::zero() {
            return Ok(ChiSquare { statistic: f64::INFINITY, dof: 0, p_value: 0.0 });
        }
        observed[i as usize] += 1;
    }
    let mut statistic = 0.0;
    let mut bins = 0;
    let (mut pooled_obs, mut pooled_exp) = (0.0, 0.0);
    for (i, &m) in law.masses().iter().enumerate() {
        let expected = m.as_f64() / total * count;
        if expected == 0.0 {
            continue;
        }
        if expected < 5.0 {
            pooled_obs += observed[i] as f64;
            pooled_exp += expected;
        } else {
            statistic += (observed[i] as f64 - expected).powi(2) / expected;
            bins += 1;
        }
    }
    if pooled_exp > 0.0 {
        statistic += (pooled_obs - pooled_exp).powi(2) / pooled_exp;
        bins += 1;
    }
    if bins < 2 {
        return Ok(ChiSquare { statistic, dof: 0, p_value: 1.0 });
    }
    let dof = bins - 1;
    let dist = ChiSquared::new(dof as f64).map_err(|e| Error::NumericalFailure(e.to_string()))?;
    Ok(ChiSquare { statistic, dof, p_value: dist.sf(statistic) })
}

/// Kolmogorov-Smirnov distance between the sample and a continuous distribution function.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut xs = samples.to_vec();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = xs.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < xs.len() {
        let mut j = i;
        while j < xs.len() && xs[j] == xs[i] {
            j += 1;
        }
        let f = cdf(xs[i]);
        d = d.max((f - i as f64 / n).abs()).max((j as f64 / n - f).abs());
        i = j;
    }
    d
}

pub fn meander_cdf(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        -(-x * x / 2.0).exp_m1()
    }
}

/// KS distance of `S_n+ / a_n` to `1 - e^{-x^2/2}`.
pub fn empirical_meander_distance<T: Real>(step: &StepLaw<T>, n: usize, count: usize, seed: u64) -> Result<f64> {
    Ok(meander_distance_with_metadata(step, n, count, seed)?.0)
}

/// As [`empirical_meander_distance`], with the metadata of the sampled batch.
pub fn meander_distance_with_metadata<T: Real>(step: &StepLaw<T>, n: usize, count: usize, seed: u64) -> Result<(f64, BatchMetadata)> {
    let batch = sample_conditioned(step, n, count, seed)?.batch;
    let a = step.norming_a(T::from_usize_lossy(n)).as_f64();
    let xs: Vec<f64> = batch.points(step).iter().map(|x| x.as_f64() / a).collect();
    Ok((ks_distance(&xs, meander_cdf), batch.metadata()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::{conditioned_pmf, pmf, positive_part_pmf};
    use crate::walk::laws;

    #[test]
    fn determinism() {
        let step = laws::lazy::<f64>();
        let a = sample_unconditioned(&step, 15, 40_000, 11).unwrap();
        let b = sample_unconditioned(&step, 15, 40_000, 11).unwrap();
        assert_eq!(a, b);
        let c = sample_unconditioned(&step, 15, 40_000, 12).unwrap();
        assert_ne!(a.endpoints, c.endpoints);
        let x = sample_conditioned(&step, 15, 40_000, 5).unwrap();
        let y = sample_conditioned(&step, 15, 40_000, 5).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn thread_count_does_not_matter() {
        let step = laws::skewed_up::<f64>();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let a = one.install(|| sample_conditioned(&step, 12, 50_000, 3).unwrap());
        let b = sample_conditioned(&step, 12, 50_000, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn unconditioned_mean_and_mode() {
        let step = laws::simple::<f64>();
        let count = 1_000_000;
        let batch = sample_unconditioned(&step, 10, count, 1).unwrap();
        let mean: f64 = batch.points(&step).iter().sum::<f64>() / count as f64 / 10f64.sqrt();
        assert!(mean.abs() < 4.0 / (count as f64).sqrt());
        let law = pmf(&step, 10).unwrap();
        let p = law.get(0);
        let hits = batch.endpoints.iter().filter(|&&k| step.point(10, k) == 0.0).count() as f64;
        let sd = (p * (1.0 - p) / count as f64).sqrt();
        assert!((hits / count as f64 - p).abs() <= 3.0 * sd);
        // acceptance rate of naive rejection
        let survival = positive_part_pmf(&step, 10).unwrap().survival;
        let sd = (survival * (1.0 - survival) / count as f64).sqrt();
        assert!((batch.survival_rate - survival).abs() <= 3.0 * sd);
    }

    #[test]
    fn conditioned_three_steps() {
        let step = laws::simple::<f64>();
        let count = 100_000;
        let cb = sample_conditioned(&step, 3, count, 9).unwrap();
        let ones = cb.batch.points(&step).iter().filter(|&&x| x == 1.0).count() as f64;
        let threes = cb.batch.points(&step).iter().filter(|&&x| x == 3.0).count() as f64;
        assert_eq!(ones + threes, count as f64);
        let sd = (0.25 / count as f64).sqrt();
        assert!((ones / count as f64 - 0.5).abs() <= 3.0 * sd);
        assert_eq!(cb.audit_indices.len(), 1000);
        assert_eq!(cb.audit_violations(&step), 0);
        assert_eq!(cb.batch.metadata().survival_rate, 0.25);
    }

    #[test]
    fn one_step_lands_on_positive_atoms() {
        for (_, step) in laws::shipped::<f64>() {
            let cb = sample_conditioned(&step, 1, 5000, 2).unwrap();
            assert!(cb.batch.points(&step).iter().all(|&x| x > 0.0));
            assert_eq!(cb.audit_violations(&step), 0);
        }
    }

    #[test]
    fn audit_catches_tampering() {
        let step = laws::simple::<f64>();
        let mut cb = sample_conditioned(&step, 6, 1000, 4).unwrap();
        assert_eq!(cb.audit_violations(&step), 0);
        cb.audit_paths[0][0] = -1;
        cb.audit_paths[1][1] = 5;
        assert_eq!(cb.audit_violations(&step), 2);
    }

    #[test]
    fn chi_square_against_exact_law() {
        for (name, step) in laws::shipped::<f64>() {
            for n in [5usize, 20] {
                let cb = sample_conditioned(&step, n, 200_000, 17).unwrap();
                let law = conditioned_pmf(&step, n).unwrap();
                let chi = chi_square(&cb.batch.endpoints, &law).unwrap();
                assert!(chi.p_value > 1e-6, "{name} n={n}: {chi:?}");
                assert_eq!(cb.audit_violations(&step), 0);
            }
        }
    }

    #[test]
    fn chi_square_rejects_wrong_law() {
        let step = laws::lazy::<f64>();
        let cb = sample_conditioned(&step, 10, 200_000, 1).unwrap();
        let wrong = conditioned_pmf(&step, 11).unwrap();
        let wrong = LatticePmf::new(10, wrong.k_min(), wrong.masses().to_vec(), 0.0, 1.0);
        assert!(chi_square(&cb.batch.endpoints, &wrong).unwrap().p_value < 1e-6);
    }

    #[test]
    fn rejection_matches_exact_sampler() {
        let step = laws::skewed_down::<f64>();
        let n = 8;
        let rej = sample_rejection(&step, n, 100_000, 21, 10_000_000).unwrap();
        let law = conditioned_pmf(&step, n).unwrap();
        assert!(chi_square(&rej.endpoints, &law).unwrap().p_value > 1e-6);
        let survival = positive_part_pmf(&step, n).unwrap().survival;
        let sd = (survival * (1.0 - survival) / rej.attempts as f64).sqrt();
        assert!((rej.survival_rate - survival).abs() <= 3.0 * sd, "{} vs {survival}", rej.survival_rate);
        assert!(matches!(sample_rejection(&step, 40, 1000, 1, 100), Err(Error::ExplosionGuard { .. })));
    }

    #[test]
    fn checkpointed_paths_long_horizon() {
        let step = laws::lazy::<f64>();
        let cb = sample_conditioned(&step, 400, 20_000, 8).unwrap();
        assert_eq!(cb.audit_paths.len(), 200);
        assert!(cb.audit_paths.iter().all(|p| p.len() == 400));
        assert_eq!(cb.audit_violations(&step), 0);
    }

    #[test]
    fn ks_distance_basics() {
        assert_eq!(ks_distance(&[0.5], |x| x.clamp(0.0, 1.0)), 0.5);
        assert!(ks_distance(&[1.0], meander_cdf) <= 1.0);
        let d = empirical_meander_distance(&laws::simple::<f64>(), 10, 1, 3).unwrap();
        assert!((0.0..=1.0).contains(&d));
    }

    #[test]
    fn meander_distance_decreases() {
        let step = laws::simple::<f64>();
        let d: Vec<f64> = [100, 1000].iter().map(|&n| empirical_meander_distance(&step, n, 100_000, 42).unwrap()).collect();
        assert!(d[1] < d[0], "{d:?}");
    }

    #[test]
    fn zero_count_rejected() {
        assert!(sample_unconditioned(&laws::simple::<f64>(), 3, 0, 1).is_err());
    }
}
