//! Ladder epochs `T_k` and heights `H_k`, the renewal objects built from them,
//! and exact checks of the identities tying them to the killed walk.
//!
//! Conventions: `T_0 = 0`, `H_0 = 0`, ladder epochs are strict
//! (`T_{k+1} = inf{n > T_k : S_n > S_{T_k}}`), and
//!
//! ```text
//! u(n, x) = sum_k P(T_k = n, H_k = x)      G(n) = sum_k P(T_k <= n)
//! U(x)    = sum_r P(H_r <= x)
//! ```
//!
//! Both `G` and `U` include the `k = 0` unit mass.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::dp::{killed_sequence, pmf_with, positive_part_pmf_with, DpConfig, Evolution, Keep};
use crate::error::{Error, Result};
use crate::oracle::enumerate_paths_distribution;
use crate::real::Real;
use crate::walk::{LatticePmf, StepLaw};
use crate::wiener_hopf::WienerHopf;

fn empty_at<T: Real>(step: &StepLaw<T>, n: usize) -> LatticePmf<T> {
    LatticePmf::new(n, 0, Vec::new(), step.shift(), step.span())
}

fn require_horizon(horizon: usize) -> Result<()> {
    if horizon == 0 {
        return Err(Error::OutOfRange { value: 0.0, lower: 1.0, upper: f64::INFINITY });
    }
    Ok(())
}

/// Strips zero entries at both ends.
fn compact<T: Real>(p: LatticePmf<T>, shift: T, span: T) -> LatticePmf<T> {
    let m = p.masses();
    let Some(start) = m.iter().position(|&v| v > T::zero()) else {
        return LatticePmf::new(p.n(), 0, Vec::new(), shift, span);
    };
    let end = m.iter().rposition(|&v| v > T::zero()).unwrap() + 1;
    if start == 0 && end == m.len() {
        return p;
    }
    LatticePmf::new(p.n(), p.k_min() + start as i64, m[start..end].to_vec(), shift, span)
}

/// `P(T_1 = n, H_1 = x)` for `n = 0..=horizon` (entry 0 is empty).
///
/// The walk is kept on `(-inf, 0]`; the mass leaving it at step `n` is the
/// first ladder point.
pub fn first_ladder_joint<T: Real>(step: &StepLaw<T>, horizon: usize) -> Result<Vec<LatticePmf<T>>> {
    first_ladder_joint_with(step, horizon, DpConfig::default())
}

pub fn first_ladder_joint_with<T: Real>(
    step: &StepLaw<T>,
    horizon: usize,
    config: DpConfig<T>,
) -> Result<Vec<LatticePmf<T>>> {
    require_horizon(horizon)?;
    let mut evo = Evolution::new(step, Keep::NonPositive, config);
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(empty_at(step, 0));
    for _ in 0..horizon {
        let hit = evo.advance()?;
        out.push(compact(hit, step.shift(), step.span()));
    }
    Ok(out)
}

/// `P(T_1 > t)` for `t = 0..=horizon`.
pub fn first_epoch_tail<T: Real>(step: &StepLaw<T>, horizon: usize, config: DpConfig<T>) -> Result<Vec<T>> {
    let mut evo = Evolution::new(step, Keep::NonPositive, config);
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(T::one());
    for _ in 0..horizon {
        evo.advance()?;
        out.push(evo.total());
    }
    Ok(out)
}

/// Law of the weak descending ladder epoch `inf{n > 0 : S_n <= 0}`: entry `n`
/// is its mass at `n` (entry 0 is zero). Its tail is `P(C_n)`.
pub fn weak_descending_epoch_law<T: Real>(step: &StepLaw<T>, horizon: usize, config: DpConfig<T>) -> Result<Vec<T>> {
    let mut evo = Evolution::new(step, Keep::Positive, config);
    let mut out = Vec::with_capacity(horizon + 1);
    out.push(T::zero());
    for _ in 0..horizon {
        out.push(evo.advance()?.total());
    }
    Ok(out)
}

/// Adds the lattice convolution `a * b` into `acc` (index origin `acc_k_min`).
fn add_product<T: Real>(acc: &mut [T], acc_k_min: i64, a: &LatticePmf<T>, b: &LatticePmf<T>) {
    let offset = a.k_min() + b.k_min() - acc_k_min;
    for (i, &pa) in a.masses().iter().enumerate() {
        if pa == T::zero() {
            continue;
        }
        let base = (offset + i as i64) as usize;
        for (slot, &pb) in acc[base..].iter_mut().zip(b.masses()) {
            *slot += pa * pb;
        }
    }
}

/// One renewal step: `next[n] = sum_{m=1}^{n} first[m] * prev[n - m]`.
fn renewal_step<T: Real>(step: &StepLaw<T>, first: &[LatticePmf<T>], prev: &[LatticePmf<T>]) -> Vec<LatticePmf<T>> {
    let horizon = first.len() - 1;
    (0..=horizon)
        .map(|n| {
            let pairs: Vec<usize> = (1..=n)
                .filter(|&m| !first[m].is_empty() && !prev[n - m].is_empty())
                .collect();
            let lo = pairs.iter().map(|&m| first[m].k_min() + prev[n - m].k_min()).min();
            let hi = pairs.iter().map(|&m| first[m].k_max() + prev[n - m].k_max()).max();
            let (Some(lo), Some(hi)) = (lo, hi) else {
                return empty_at(step, n);
            };
            let mut acc = vec![T::zero(); (hi - lo + 1) as usize];
            for &m in &pairs {
                add_product(&mut acc, lo, &first[m], &prev[n - m]);
            }
            compact(LatticePmf::new(n, lo, acc, step.shift(), step.span()), step.shift(), step.span())
        })
        .collect()
}

fn sum_pmfs<T: Real>(step: &StepLaw<T>, n: usize, parts: &[&LatticePmf<T>]) -> LatticePmf<T> {
    let parts: Vec<_> = parts.iter().filter(|p| !p.is_empty()).collect();
    let (Some(lo), Some(hi)) = (
        parts.iter().map(|p| p.k_min()).min(),
        parts.iter().map(|p| p.k_max()).max(),
    ) else {
        return empty_at(step, n);
    };
    let mut acc = vec![T::zero(); (hi - lo + 1) as usize];
    for p in parts {
        let off = (p.k_min() - lo) as usize;
        for (slot, &m) in acc[off..].iter_mut().zip(p.masses()) {
            *slot += m;
        }
    }
    LatticePmf::new(n, lo, acc, step.shift(), step.span())
}

/// Renewal function of the ladder epochs from the law of `T_1`:
/// `sum_{m <= n} v(m)` with `v(0) = 1`, `v(n) = sum_m P(T_1 = m) v(n - m)`.
pub fn epoch_renewal_function<T: Real>(first_epoch: &[T]) -> Vec<T> {
    let horizon = first_epoch.len() - 1;
    let mut v = vec![T::zero(); horizon + 1];
    v[0] = T::one();
    for n in 1..=horizon {
        let mut acc = T::zero();
        for m in 1..=n {
            acc += first_epoch[m] * v[n - m];
        }
        v[n] = acc;
    }
    let mut g = Vec::with_capacity(horizon + 1);
    let mut run = T::zero();
    for x in v {
        run += x;
        g.push(run);
    }
    g
}

/// Distribution function of the ladder-height renewal measure.
#[derive(Debug, Clone)]
pub struct HeightRenewal<T> {
    points: Vec<T>,
    cumulative: Vec<T>,
    x_max: T,
    /// `None` when exact, otherwise the time horizon the measure was cut at.
    truncated_at: Option<usize>,
}

impl<T: Real> HeightRenewal<T> {
    /// Exact `U` on `[0, x_max]` for a shift-free lattice law, from the
    /// Wiener-Hopf height law and the renewal recursion.
    pub fn exact(step: &StepLaw<T>, x_max: T) -> Result<Self> {
        let law = WienerHopf::new(step)?.ladder_height_law()?;
        let span = step.span();
        let j_max = (x_max / span).floor().to_usize().unwrap_or(0);
        let mut v = vec![T::zero(); j_max + 1];
        v[0] = T::one();
        for j in 1..=j_max {
            let mut acc = T::zero();
            for (i, &h) in law.iter().enumerate().take(j) {
                acc += h * v[j - 1 - i];
            }
            v[j] = acc;
        }
        let mut run = T::zero();
        let cumulative = v
            .iter()
            .map(|&m| {
                run += m;
                run
            })
            .collect();
        let points = (0..=j_max).map(|j| span * T::from_usize_lossy(j)).collect();
        Ok(HeightRenewal { points, cumulative, x_max, truncated_at: None })
    }

    /// `U` from `sum_{n <= N} u(n, .)`: every ladder point with epoch at most `N`.
    pub fn from_renewal_masses(u: &[LatticePmf<T>]) -> Self {
        let mut atoms: Vec<(T, T)> = u
            .iter()
            .flat_map(|p| p.iter().filter(|e| e.2 > T::zero()).map(|e| (e.1, e.2)))
            .collect();
        atoms.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let mut points: Vec<T> = Vec::new();
        let mut cumulative: Vec<T> = Vec::new();
        let mut run = T::zero();
        let merge = T::tol(1e-9);
        for (x, m) in atoms {
            run += m;
            match points.last() {
                Some(&last) if (x - last).abs() <= merge * (T::one() + x.abs()) => {
                    *cumulative.last_mut().unwrap() = run;
                }
                _ => {
                    points.push(x);
                    cumulative.push(run);
                }
            }
        }
        let x_max = points.last().copied().unwrap_or_else(T::zero);
        HeightRenewal { points, cumulative, x_max, truncated_at: Some(u.len().saturating_sub(1)) }
    }

    pub fn x_max(&self) -> T {
        self.x_max
    }

    pub fn is_exact(&self) -> bool {
        self.truncated_at.is_none()
    }

    pub fn truncated_at(&self) -> Option<usize> {
        self.truncated_at
    }

    /// Atom locations and the value of `U` there.
    pub fn table(&self) -> impl Iterator<Item = (T, T)> + '_ {
        self.points.iter().copied().zip(self.cumulative.iter().copied())
    }

    /// `U(x)`; zero for `x < 0`.
    pub fn value(&self, x: T) -> Result<T> {
        let slack = T::tol(1e-9) * (T::one() + x.abs());
        if x > self.x_max + slack {
            return Err(Error::OutOfRange { value: x.as_f64(), lower: f64::NEG_INFINITY, upper: self.x_max.as_f64() });
        }
        let idx = self.points.partition_point(|&p| p <= x + slack);
        Ok(if idx == 0 { T::zero() } else { self.cumulative[idx - 1] })
    }

    /// `U([z, z + width))`.
    pub fn window_mass(&self, z: T, width: T) -> T {
        let slack = T::tol(1e-9) * (T::one() + z.abs());
        let lo = self.points.partition_point(|&p| p < z - slack);
        let hi = self.points.partition_point(|&p| p < z + width - slack);
        let at = |i: usize| if i == 0 { T::zero() } else { self.cumulative[i - 1] };
        at(hi) - at(lo)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,value\n");
        for (x, v) in self.table() {
            let _ = writeln!(out, "{:.16e},{:.16e}", x.as_f64(), v.as_f64());
        }
        out
    }
}

/// Ladder renewal data up to a time horizon `N`.
#[derive(Debug, Clone)]
pub struct LadderTable<T> {
    horizon: usize,
    first_joint: Vec<LatticePmf<T>>,
    joint: Vec<Vec<LatticePmf<T>>>,
    u: Vec<LatticePmf<T>>,
    u_m: Vec<T>,
    g: Vec<T>,
    heights: HeightRenewal<T>,
    tail_dropped: T,
    duality_discrepancy: T,
}

impl<T: Real> LadderTable<T> {
    pub fn horizon(&self) -> usize {
        self.horizon
    }

    /// `P(T_1 = n, H_1 = .)`.
    pub fn first_joint(&self, n: usize) -> &LatticePmf<T> {
        &self.first_joint[n]
    }

    /// Largest `k` with a stored joint law (0 when the table was built from the killed walk).
    pub fn k_max(&self) -> usize {
        self.joint.len().saturating_sub(1)
    }

    pub fn has_joint(&self) -> bool {
        !self.joint.is_empty()
    }

    /// `P(T_k = n, H_k = .)`; `None` past the stored range.
    pub fn joint(&self, k: usize, n: usize) -> Option<&LatticePmf<T>> {
        self.joint.get(k).map(|row| &row[n])
    }

    /// `P(T_k <= N)`.
    pub fn epoch_mass(&self, k: usize) -> Option<T> {
        self.joint.get(k).map(|row| row.iter().map(|p| p.total()).sum())
    }

    /// `u(n, .)`.
    pub fn u(&self, n: usize) -> &LatticePmf<T> {
        &self.u[n]
    }

    pub fn u_slices(&self) -> &[LatticePmf<T>] {
        &self.u
    }

    /// `u(m) = sum_x u(m, x)`.
    pub fn u_m(&self) -> &[T] {
        &self.u_m
    }

    /// `G(n) = sum_k P(T_k <= n)`.
    pub fn g(&self) -> &[T] {
        &self.g
    }

    pub fn heights(&self) -> &HeightRenewal<T> {
        &self.heights
    }

    /// `U(x)`.
    pub fn u_renewal(&self, x: T) -> Result<T> {
        self.heights.value(x)
    }

    /// Mass of `u` lost by stopping the joint laws at `k_max`.
    pub fn tail_dropped(&self) -> T {
        self.tail_dropped
    }

    /// Largest pointwise gap between `u(n, .)` and the killed law seen at build time.
    pub fn duality_discrepancy(&self) -> T {
        self.duality_discrepancy
    }

    /// CSV `k,n,x,mass` of the joint laws.
    pub fn joint_csv(&self) -> String {
        let mut out = String::from("k,n,x,mass\n");
        for (k, row) in self.joint.iter().enumerate() {
            for (n, p) in row.iter().enumerate() {
                for (_, x, m) in p.iter() {
                    if m > T::zero() {
                        let _ = writeln!(out, "{k},{n},{:.16e},{:.16e}", x.as_f64(), m.as_f64());
                    }
                }
            }
        }
        out
    }

    /// CSV `n,x,mass` of `u`.
    pub fn u_csv(&self) -> String {
        let mut out = String::from("n,x,mass\n");
        for (n, p) in self.u.iter().enumerate() {
            for (_, x, m) in p.iter() {
                if m > T::zero() {
                    let _ = writeln!(out, "{n},{:.16e},{:.16e}", x.as_f64(), m.as_f64());
                }
            }
        }
        out
    }

    /// Ladder data whose `u` comes from the killed walk (duality) instead of the
    /// `k`-resolved joint laws, for horizons where the latter are too costly.
    /// `G` is cross-checked against the renewal function of `T_1`.
    pub fn via_duality(step: &StepLaw<T>, horizon: usize, config: DpConfig<T>) -> Result<Self> {
        require_horizon(horizon)?;
        let first_joint = first_ladder_joint_with(step, horizon, config)?;
        let u: Vec<_> = killed_sequence(step, horizon, config)?
            .into_iter()
            .map(|p| compact(p, step.shift(), step.span()))
            .collect();
        let heights = heights_for(step, &u)?;
        let (u_m, g) = renewal_totals(&u);
        check_epoch_renewal(&first_joint, &g)?;
        Ok(LadderTable {
            horizon,
            first_joint,
            joint: Vec::new(),
            u,
            u_m,
            g,
            heights,
            tail_dropped: T::zero(),
            duality_discrepancy: T::zero(),
        })
    }
}

fn renewal_totals<T: Real>(u: &[LatticePmf<T>]) -> (Vec<T>, Vec<T>) {
    let u_m: Vec<T> = u.iter().map(|p| p.total()).collect();
    let mut run = T::zero();
    let g = u_m
        .iter()
        .map(|&m| {
            run += m;
            run
        })
        .collect();
    (u_m, g)
}

fn heights_for<T: Real>(step: &StepLaw<T>, u: &[LatticePmf<T>]) -> Result<HeightRenewal<T>> {
    if step.shift() == T::zero() {
        let top = u
            .iter()
            .filter(|p| !p.is_empty())
            .map(|p| p.point(p.k_max()))
            .fold(step.span(), T::max);
        HeightRenewal::exact(step, top)
    } else {
        Ok(HeightRenewal::from_renewal_masses(u))
    }
}

fn check_epoch_renewal<T: Real>(first_joint: &[LatticePmf<T>], g: &[T]) -> Result<()> {
    let first_epoch: Vec<T> = first_joint.iter().map(|p| p.total()).collect();
    let g_epochs = epoch_renewal_function(&first_epoch);
    for (n, (&a, &b)) in g.iter().zip(&g_epochs).enumerate() {
        let gap = (a - b).abs();
        if gap > T::tol(1e-10) * a.max(T::one()) {
            return Err(Error::DualityViolation { n, discrepancy: gap.as_f64() });
        }
    }
    Ok(())
}

/// Ladder table with `k`-resolved joint laws for `k <= k_max`.
pub fn build_ladder_table<T: Real>(step: &StepLaw<T>, horizon: usize, k_max: usize) -> Result<LadderTable<T>> {
    build_ladder_table_with(step, horizon, k_max, DpConfig::default())
}

pub fn build_ladder_table_with<T: Real>(
    step: &StepLaw<T>,
    horizon: usize,
    k_max: usize,
    config: DpConfig<T>,
) -> Result<LadderTable<T>> {
    require_horizon(horizon)?;
    if k_max > horizon {
        return Err(Error::OutOfRange { value: k_max as f64, lower: 0.0, upper: horizon as f64 });
    }
    let first_joint = first_ladder_joint_with(step, horizon, config)?;
    let origin: Vec<_> = (0..=horizon)
        .map(|n| {
            if n == 0 {
                LatticePmf::point_mass(0, 0, step.shift(), step.span())
            } else {
                empty_at(step, n)
            }
        })
        .collect();
    let mut joint = vec![origin];
    let mut cells = horizon + 1;
    for _ in 1..=k_max {
        let next = renewal_step(step, &first_joint, joint.last().unwrap());
        if next.iter().all(|p| p.is_empty()) {
            break;
        }
        cells += next.iter().map(|p| p.masses().len().max(1)).sum::<usize>();
        if cells > config.max_cells {
            return Err(Error::HorizonTooLarge { cells, budget: config.max_cells });
        }
        joint.push(next);
    }
    let u: Vec<_> = (0..=horizon)
        .map(|n| {
            let parts: Vec<_> = joint.iter().map(|row| &row[n]).collect();
            sum_pmfs(step, n, &parts)
        })
        .collect();

    let killed = killed_sequence(step, horizon, config)?;
    let complete_up_to = if joint.len() == k_max + 1 { k_max } else { horizon };
    let mut worst = T::zero();
    let mut tail_dropped = T::zero();
    for n in 0..=horizon {
        let gap = u[n].max_abs_diff(&killed[n]);
        if n <= complete_up_to {
            if gap > T::tol(1e-12) {
                return Err(Error::DualityViolation { n, discrepancy: gap.as_f64() });
            }
            worst = worst.max(gap);
        } else {
            tail_dropped += (killed[n].total() - u[n].total()).max(T::zero());
        }
    }
    let u: Vec<_> = u.into_iter().map(|p| compact(p, step.shift(), step.span())).collect();
    let heights = heights_for(step, &u)?;
    let (u_m, g) = renewal_totals(&u);
    if tail_dropped == T::zero() {
        check_epoch_renewal(&first_joint, &g)?;
    }
    Ok(LadderTable {
        horizon,
        first_joint,
        joint,
        u,
        u_m,
        g,
        heights,
        tail_dropped,
        duality_discrepancy: worst,
    })
}

/// Both sides of `P(T_k = n, H_k = x) = (k / n) P(H_{k-1} < S_n <= H_k, S_n = x)`
/// for every `k = 1..=n`, the right side by exhaustive enumeration. Returns the
/// sup over `x` of the gap, indexed by `k - 1`.
pub fn alili_doney_discrepancies<T: Real>(step: &StepLaw<T>, n: usize) -> Result<Vec<T>> {
    require_horizon(n)?;
    // the enumeration cap is checked before the (cheaper) table is built
    let rhs = enumerate_paths_distribution(step, n, |path| {
        let end = path.point(n);
        if end <= T::zero() {
            return None;
        }
        let epochs = path.ladder_epochs();
        let k = epochs.iter().position(|&t| end <= path.point(t))? + 1;
        Some((k, path.index(n)))
    })?;
    let table = build_ladder_table(step, n, n)?;
    let nn = T::from_usize_lossy(n);
    let mut out = Vec::with_capacity(n);
    for k in 1..=n {
        let factor = T::from_usize_lossy(k) / nn;
        let lhs = table.joint(k, n);
        let mut worst = T::zero();
        let mut seen = BTreeMap::new();
        for (&(kk, idx), &mass) in rhs.range((k, i64::MIN)..=(k, i64::MAX)) {
            debug_assert_eq!(kk, k);
            seen.insert(idx, factor * mass);
        }
        if let Some(lhs) = lhs {
            for (idx, _, m) in lhs.iter() {
                seen.entry(idx).or_insert_with(T::zero);
                let r = seen[&idx];
                worst = worst.max((m - r).abs());
            }
        }
        for (&idx, &r) in &seen {
            let l = lhs.map_or(T::zero(), |p| p.get(idx));
            worst = worst.max((l - r).abs());
        }
        out.push(worst);
    }
    Ok(out)
}

/// `sup_x |u(n, x) - P(C_n, S_n = x)|` with `u` from the table and the right
/// side by exhaustive enumeration.
pub fn duality_oracle_discrepancy<T: Real>(table: &LadderTable<T>, step: &StepLaw<T>, n: usize) -> Result<T> {
    if n > table.horizon() {
        return Err(Error::OutOfRange { value: n as f64, lower: 0.0, upper: table.horizon() as f64 });
    }
    let oracle = enumerate_paths_distribution(step, n, |path| {
        (1..=n).all(|t| path.point(t) > T::zero()).then(|| path.index(n))
    })?;
    let u = table.u(n);
    let mut worst = T::zero();
    for (&k, &m) in &oracle {
        worst = worst.max((u.get(k) - m).abs());
    }
    for (k, _, m) in u.iter() {
        if !oracle.contains_key(&k) {
            worst = worst.max(m);
        }
    }
    Ok(worst)
}

/// Sup over `x` of the Alili-Doney gap at a single `(n, k)`.
pub fn verify_alili_doney<T: Real>(step: &StepLaw<T>, n: usize, k: usize) -> Result<T> {
    if k == 0 || k > n {
        return Err(Error::OutOfRange { value: k as f64, lower: 1.0, upper: n as f64 });
    }
    Ok(alili_doney_discrepancies(step, n)?[k - 1])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RatioRow<T> {
    pub x: T,
    pub u: T,
    pub p: T,
    /// `U` at the next lattice point below `x`.
    pub u_left: T,
    pub ratio: T,
}

#[derive(Debug, Clone)]
pub struct RenewalRatioReport<T> {
    pub n: usize,
    pub epsilon: T,
    pub rows: Vec<RatioRow<T>>,
    pub sup_err: T,
}

impl<T: Real> RenewalRatioReport<T> {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("n,x,u,p,U_left,ratio\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                self.n,
                r.x.as_f64(),
                r.u.as_f64(),
                r.p.as_f64(),
                r.u_left.as_f64(),
                r.ratio.as_f64()
            );
        }
        out
    }
}

/// `n u(n, x) / (P(S_n = x) U(x - span))` over lattice points with `x / a_n` in `[epsilon, 1 / epsilon]`.
///
/// `u(n, .)` is the killed law (duality). For shift-free laws `U` is exact; for
/// shifted laws it is the renewal measure cut at time `n`.
pub fn renewal_ratio_report<T: Real>(step: &StepLaw<T>, n: usize, epsilon: T) -> Result<RenewalRatioReport<T>> {
    require_horizon(n)?;
    check_epsilon(epsilon)?;
    let config = DpConfig::default();
    let heights = if step.shift() == T::zero() {
        let top = step.span() * T::from_i64_lossy(step.max_offset() * n as i64);
        HeightRenewal::exact(step, top)?
    } else {
        HeightRenewal::from_renewal_masses(&killed_sequence(step, n, config)?)
    };
    renewal_ratio_report_with(step, n, epsilon, &heights, config)
}

fn check_epsilon<T: Real>(epsilon: T) -> Result<()> {
    if !(epsilon > T::zero() && epsilon < T::one()) {
        return Err(Error::OutOfRange { value: epsilon.as_f64(), lower: 0.0, upper: 1.0 });
    }
    Ok(())
}

/// As [`renewal_ratio_report`], with a prebuilt height renewal function.
pub fn renewal_ratio_report_with<T: Real>(
    step: &StepLaw<T>,
    n: usize,
    epsilon: T,
    heights: &HeightRenewal<T>,
    config: DpConfig<T>,
) -> Result<RenewalRatioReport<T>> {
    check_epsilon(epsilon)?;
    let killed = positive_part_pmf_with(step, n, config)?.pmf;
    let law = pmf_with(step, n, config)?;
    let a_n = step.norming_a(T::from_usize_lossy(n));
    let nn = T::from_usize_lossy(n);
    let mut rows = Vec::new();
    for (k, x, p) in law.iter() {
        if p <= T::zero() || !step.admissible(n, k) {
            continue;
        }
        let scaled = x / a_n;
        if scaled < epsilon || scaled > T::one() / epsilon {
            continue;
        }
        let u_left = heights.value(x - step.span())?;
        if u_left <= T::zero() {
            continue;
        }
        let u = killed.get(k);
        rows.push(RatioRow { x, u, p, u_left, ratio: nn * u / (p * u_left) });
    }
    if rows.is_empty() {
        return Err(Error::EmptyRange);
    }
    let sup_err = rows.iter().map(|r| (r.ratio - T::one()).abs()).fold(T::zero(), T::max);
    Ok(RenewalRatioReport { n, epsilon, rows, sup_err })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dp::positive_part_pmf;
    use crate::oracle::enumerate_paths_oracle;
    use crate::walk::laws;
    use proptest::prelude::*;

    #[test]
    fn first_ladder_simple_walk() {
        let first = first_ladder_joint(&laws::simple::<f64>(), 5).unwrap();
        assert_eq!(first[1].get(1), 0.5);
        assert_eq!(first[3].get(1), 0.125);
        assert!(first[2].is_empty());
        assert!(first[4].is_empty());
    }

    #[test]
    fn first_ladder_matches_enumeration() {
        for (name, step) in laws::shipped::<f64>() {
            let first = first_ladder_joint(&step, 8).unwrap();
            for n in 1..=8 {
                let oracle = enumerate_paths_distribution(&step, n, |p| {
                    let e = p.ladder_epochs();
                    (e.first() == Some(&n)).then(|| p.index(n))
                })
                .unwrap();
                for (&k, &m) in &oracle {
                    assert!((first[n].get(k) - m).abs() < 1e-15, "{name} n={n} k={k}");
                }
                assert!((first[n].total() - oracle.values().sum::<f64>()).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn table_examples() {
        let step = laws::simple::<f64>();
        let t = build_ladder_table(&step, 3, 3).unwrap();
        assert_eq!(t.u(3).get(1), 0.125);
        assert_eq!(t.u(3).get(3), 0.125);
        assert_eq!(t.u(0).get(0), 1.0);
        assert_eq!(t.g()[1], 1.5);
        for x in 0..=3 {
            assert_eq!(t.u_renewal(x as f64).unwrap(), x as f64 + 1.0);
        }
        assert_eq!(t.u_renewal(2.5).unwrap(), 3.0);
        assert!(t.u_renewal(3.5).is_err());
        assert_eq!(t.u_renewal(-0.5).unwrap(), 0.0);
    }

    #[test]
    fn joint_row_zero_and_epoch_masses() {
        let step = laws::lazy::<f64>();
        let t = build_ladder_table(&step, 10, 10).unwrap();
        assert_eq!(t.joint(0, 0).unwrap().get(0), 1.0);
        assert_eq!(t.epoch_mass(0).unwrap(), 1.0);
        for k in 1..=t.k_max() {
            let direct = enumerate_paths_oracle(&step, 10, |p| p.ladder_epochs().len() >= k).unwrap();
            assert!((t.epoch_mass(k).unwrap() - direct).abs() < 1e-14);
        }
    }

    #[test]
    fn duality_against_dp_and_oracle() {
        for (name, step) in laws::shipped::<f64>() {
            let t = build_ladder_table(&step, 20, 20).unwrap();
            for n in 0..=20 {
                let killed = positive_part_pmf(&step, n).unwrap().pmf;
                assert!(t.u(n).max_abs_diff(&killed) <= 1e-13, "{name} n={n}");
            }
            for n in 1..=10 {
                let oracle = enumerate_paths_distribution(&step, n, |p| {
                    (1..=n).all(|s| p.point(s) > 0.0).then(|| p.index(n))
                })
                .unwrap();
                for (&k, &m) in &oracle {
                    assert!((t.u(n).get(k) - m).abs() <= 1e-14, "{name} n={n}");
                }
            }
        }
    }

    #[test]
    fn truncated_k_reports_tail() {
        let step = laws::simple::<f64>();
        let t = build_ladder_table(&step, 40, 6).unwrap();
        assert!(t.tail_dropped() > 0.0);
        let full = build_ladder_table(&step, 40, 40).unwrap();
        assert_eq!(full.tail_dropped(), 0.0);
        for n in 0..=6 {
            assert!(t.u(n).max_abs_diff(full.u(n)) < 1e-15);
        }
    }

    #[test]
    fn via_duality_agrees_with_joint_route() {
        for (_, step) in laws::shipped::<f64>() {
            let a = build_ladder_table(&step, 30, 30).unwrap();
            let b = LadderTable::via_duality(&step, 30, DpConfig::default()).unwrap();
            for n in 0..=30 {
                assert!(a.u(n).max_abs_diff(b.u(n)) < 1e-13);
                assert!((a.g()[n] - b.g()[n]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn u_m_is_nonincreasing() {
        for (_, step) in laws::shipped::<f64>() {
            let t = LadderTable::via_duality(&step, 300, DpConfig::default()).unwrap();
            for w in t.u_m()[1..].windows(2) {
                assert!(w[1] <= w[0] + 1e-15);
            }
        }
    }

    #[test]
    fn weak_descending_tail_is_survival() {
        let step = laws::skewed_down::<f64>();
        let law = weak_descending_epoch_law(&step, 15, DpConfig::default()).unwrap();
        let mut tail = 1.0;
        for (n, &m) in law.iter().enumerate().skip(1) {
            tail -= m;
            let c = enumerate_paths_oracle(&step, n, |p| (1..=n).all(|s| p.point(s) > 0.0)).unwrap();
            assert!((tail - c).abs() < 1e-14);
        }
    }

    #[test]
    fn first_epoch_tail_anchor() {
        let tail = first_epoch_tail(&laws::simple::<f64>(), 5, DpConfig::default()).unwrap();
        assert_eq!(tail[0], 1.0);
        assert_eq!(tail[1], 0.5);
        assert_eq!(tail[3], 0.375);
    }

    #[test]
    fn exact_heights_dominate_truncated_ones() {
        // the time-cut measure misses only ladder points after N, at most P(T_1 > N) per height atom
        let step = laws::skewed_up::<f64>();
        let first = first_ladder_joint(&step, 2000).unwrap();
        let law = WienerHopf::new(&step).unwrap().ladder_height_law().unwrap();
        let tail = first_epoch_tail(&step, 2000, DpConfig::default()).unwrap()[2000];
        for j in 1..=2i64 {
            let truncated: f64 = first.iter().map(|p| p.get(j)).sum();
            let exact = law[j as usize - 1];
            assert!(truncated <= exact + 1e-14);
            assert!(exact - truncated <= tail + 1e-14);
        }
    }

    #[test]
    fn shifted_law_uses_time_cut_heights() {
        let t = build_ladder_table(&laws::shifted::<f64>(), 12, 12).unwrap();
        assert!(!t.heights().is_exact());
        assert_eq!(t.heights().truncated_at(), Some(12));
        assert_eq!(t.u_renewal(0.0).unwrap(), 1.0);
    }

    #[test]
    fn height_window_bound() {
        for (_, step) in laws::shipped::<f64>() {
            let t = LadderTable::via_duality(&step, 200, DpConfig::default()).unwrap();
            let h = t.heights();
            let width = step.span() * step.max_offset() as f64;
            let base = h.window_mass(0.0, width);
            let sup = h.table().map(|(z, _)| h.window_mass(z, width)).fold(0.0, f64::max);
            assert!(sup <= base + 1.0);
        }
    }

    #[test]
    fn alili_doney_examples() {
        let step = laws::simple::<f64>();
        assert!(verify_alili_doney(&step, 3, 1).unwrap() < 1e-16);
        let d = alili_doney_discrepancies(&step, 2).unwrap();
        assert_eq!(d, vec![0.0, 0.0]);
        for (_, step) in laws::shipped::<f64>() {
            for n in 1..=7 {
                assert!(verify_alili_doney(&step, n, n).unwrap() <= 1e-14);
            }
        }
    }

    #[test]
    fn alili_doney_bad_k() {
        let step = laws::simple::<f64>();
        assert!(verify_alili_doney(&step, 3, 0).is_err());
        assert!(verify_alili_doney(&step, 3, 4).is_err());
    }

    #[test]
    fn renewal_ratio_small_n() {
        let step = laws::lazy::<f64>();
        let r = renewal_ratio_report(&step, 4, 0.3).unwrap();
        assert!(r.rows.iter().all(|row| row.ratio.is_finite() && row.p > 0.0));
        // skip-free upward: n u(n, x) = x P(S_n = x) and U(x - 1) = x
        for row in &r.rows {
            assert!((row.ratio - 1.0).abs() < 1e-13);
        }
        let simple = renewal_ratio_report(&laws::simple::<f64>(), 4, 0.5).unwrap();
        assert!(simple.rows.iter().any(|row| row.x == 2.0));
        assert!(simple.rows.iter().all(|row| row.x as i64 % 2 == 0));
    }

    #[test]
    fn renewal_ratio_empty_window() {
        assert!(matches!(
            renewal_ratio_report(&laws::simple::<f64>(), 2, 0.9),
            Err(Error::EmptyRange)
        ));
        assert!(renewal_ratio_report(&laws::simple::<f64>(), 4, 1.5).is_err());
    }

    #[test]
    fn duality_against_enumeration() {
        for step in [laws::simple::<f64>(), laws::lazy::<f64>(), laws::shifted::<f64>()] {
            let t = build_ladder_table(&step, 10, 10).unwrap();
            for n in 0..=10 {
                assert!(duality_oracle_discrepancy(&t, &step, n).unwrap() <= 1e-14);
            }
            assert!(duality_oracle_discrepancy(&t, &step, 11).is_err());
        }
    }

    #[test]
    fn csv_layouts() {
        let t = build_ladder_table(&laws::simple::<f64>(), 3, 3).unwrap();
        assert!(t.joint_csv().starts_with("k,n,x,mass\n0,0,"));
        assert!(t.u_csv().starts_with("n,x,mass\n"));
        assert!(t.heights().to_csv().starts_with("x,value\n0.0000000000000000e0,1.0000000000000000e0"));
    }

    #[test]
    fn f32_table() {
        let t = build_ladder_table(&laws::lazy::<f32>(), 10, 10).unwrap();
        assert!((t.u(0).get(0) - 1.0).abs() < 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn duality_for_random_laws(p2 in 0.01f64..0.33, n in 1usize..14) {
            let step = crate::walk::make_lattice_step(0.0, 1.0, &[(-1, 2.0 * p2), (0, 1.0 - 3.0 * p2), (2, p2)]).unwrap();
            let t = build_ladder_table(&step, n, n).unwrap();
            prop_assert!(t.duality_discrepancy() <= 1e-13);
            for w in t.u_m()[1..].windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-15);
            }
        }
    }
}
