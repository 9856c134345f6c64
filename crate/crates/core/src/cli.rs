//! Config-driven experiment runner behind the `fluctlab` binary.

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::continuum::{density_case_errors, snap_to_grid, stone_llt_error, ContinuousLaw};
use crate::dp::{conditioned_pmf, killed_sequence, lattice_llt_errors, DpConfig};
use crate::error::{Error, Result};
use crate::ladder::{alili_doney_discrepancies, build_ladder_table, duality_oracle_discrepancy, renewal_ratio_report, LadderTable};
use crate::limits::{first_passage_convolution_check, meander_identity_residual};
use crate::mixture::{build_mu_n, default_grid, f_limit, mixture_conditioned_law, weak_convergence_rows};
use crate::norming::{norming_report, survival_asymptotics, NormingData};
use crate::report::{write_manifest, write_report, Cell, Format, Manifest, Report, Table, SCHEMA_VERSION};
use crate::simulate::{meander_distance_with_metadata, RNG_ID};
use crate::walk::{StepLaw, StepLawJson};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    LltGnedenko,
    LltPositive,
    DensityCase,
    RenewalRatio,
    WeakConvergence,
    IdentitySuite,
    SurvivalAsymptotics,
    MeanderIntegral,
}

impl Experiment {
    pub const ALL: [Experiment; 8] = [
        Experiment::LltGnedenko,
        Experiment::LltPositive,
        Experiment::DensityCase,
        Experiment::RenewalRatio,
        Experiment::WeakConvergence,
        Experiment::IdentitySuite,
        Experiment::SurvivalAsymptotics,
        Experiment::MeanderIntegral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Experiment::LltGnedenko => "llt-gnedenko",
            Experiment::LltPositive => "llt-positive",
            Experiment::DensityCase => "density-case",
            Experiment::RenewalRatio => "renewal-ratio",
            Experiment::WeakConvergence => "weak-convergence",
            Experiment::IdentitySuite => "identity-suite",
            Experiment::SurvivalAsymptotics => "survival-asymptotics",
            Experiment::MeanderIntegral => "meander-integral",
        }
    }

    fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.name() == s)
            .ok_or_else(|| Error::ConfigInvalid(format!("unknown experiment {s:?}")))
    }

    fn needs_step(self) -> bool {
        !matches!(self, Experiment::DensityCase | Experiment::MeanderIntegral)
    }
}

/// Absolutely continuous step law for the density case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DensityJson {
    Uniform { lo: f64, hi: f64 },
}

/// The JSON config document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default)]
    pub step: Option<StepLawJson>,
    #[serde(default)]
    pub density: Option<DensityJson>,
    #[serde(default)]
    pub n_list: Vec<usize>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub h: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    /// Monte Carlo sample count; sampling is skipped when absent.
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub x_list: Option<Vec<f64>>,
    /// Grid step of the density case (default: sigma / 64).
    #[serde(default)]
    pub grid_step: Option<f64>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
}

fn default_epsilon() -> f64 {
    0.5
}

/// A checked config.
#[derive(Debug, Clone)]
pub struct Validated {
    pub config: ExperimentConfig,
    pub experiment: Experiment,
    pub step: Option<StepLaw<f64>>,
    pub density: Option<ContinuousLaw<f64>>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::ConfigInvalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::ConfigInvalid(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<Validated> {
        let experiment = Experiment::parse(&self.experiment)?;
        if experiment != Experiment::MeanderIntegral {
            if self.n_list.is_empty() {
                return Err(Error::ConfigInvalid("n_list is empty".into()));
            }
            if self.n_list.windows(2).any(|w| w[1] <= w[0]) {
                return Err(Error::ConfigInvalid("n_list must be strictly increasing".into()));
            }
            if self.n_list[0] == 0 {
                return Err(Error::ConfigInvalid("n_list entries must be positive".into()));
            }
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(Error::ConfigInvalid(format!("epsilon {} outside (0, 1)", self.epsilon)));
        }
        if let Some(h) = self.h {
            if !(h > 0.0 && h.is_finite()) {
                return Err(Error::ConfigInvalid(format!("h {h} must be positive")));
            }
        }
        if let Some(d) = self.grid_step {
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::ConfigInvalid(format!("grid_step {d} must be positive")));
            }
        }
        if self.count == Some(0) {
            return Err(Error::ConfigInvalid("count must be positive".into()));
        }
        if let Some(xs) = &self.x_list {
            if xs.is_empty() || xs.iter().any(|x| !(*x > 0.0 && x.is_finite())) {
                return Err(Error::ConfigInvalid("x_list needs positive finite entries".into()));
            }
        }
        let step = match &self.step {
            Some(s) => Some(StepLaw::from_json(s)?),
            None if experiment.needs_step() => {
                return Err(Error::ConfigInvalid(format!("{} needs a step law", experiment.name())))
            }
            None => None,
        };
        let density = match (&self.density, experiment) {
            (Some(DensityJson::Uniform { lo, hi }), _) => Some(ContinuousLaw::uniform(*lo, *hi)?),
            (None, Experiment::DensityCase) => Some(ContinuousLaw::uniform(-1.0, 1.0)?),
            (None, _) => None,
        };
        Ok(Validated { config: self.clone(), experiment, step, density })
    }
}

fn step_of(v: &Validated) -> &StepLaw<f64> {
    v.step.as_ref().expect("validated")
}

fn llt(v: &Validated, conditioned: bool) -> Result<Report> {
    let step = step_of(v);
    let errors: Vec<(f64, f64)> = v.config.n_list.par_iter().map(|&n| lattice_llt_errors(step, n)).collect::<Result<_>>()?;
    let name = if conditioned { "llt_positive" } else { "llt_gnedenko" };
    let mut table = Table::new(name, "n,sup_err");
    for (&n, e) in v.config.n_list.iter().zip(&errors) {
        table.push(vec![n.into(), (if conditioned { e.1 } else { e.0 }).into()]);
    }
    let sup = table.column("sup_err").unwrap();
    let mut report = Report::default();
    report.summary.insert("strictly_decreasing".into(), json!(sup.windows(2).all(|w| w[1] < w[0])));
    report.notes.push(format!(
        "sup over the admissible sublattice shift*n + {}*Z only; densities scaled by a_n / {}",
        step.effective_span(),
        step.effective_span()
    ));
    report.tables.push(table);
    if conditioned {
        if let Some(count) = v.config.count {
            let mut ks = Table::new("meander_ks", "n,count,seed,ks_distance");
            let mut meta = Vec::new();
            for &n in &v.config.n_list {
                let (d, m) = meander_distance_with_metadata(step, n, count, v.config.seed)?;
                ks.push(vec![n.into(), count.into(), Cell::Int(v.config.seed as i64), d.into()]);
                meta.push(serde_json::to_value(m)?);
            }
            report.tables.push(ks);
            report.documents.push(("sample_metadata".into(), Value::Array(meta)));
        }
    }
    Ok(report)
}

fn density_case(v: &Validated) -> Result<Report> {
    let law = v.density.expect("validated");
    let delta = v.config.grid_step.unwrap_or_else(|| law.default_grid_step());
    let ns = &v.config.n_list;
    let rows = density_case_errors(&law, delta, ns)?;
    let mut dens = Table::new("density_case", "n,sup_err_uncond,sup_err_cond,survival");
    for r in &rows {
        dens.push(vec![r.n.into(), r.uncond.into(), r.cond.into(), r.survival.into()]);
    }
    let h = snap_to_grid(v.config.h.unwrap_or(law.sigma() / 2.0), delta);
    let step = law.discretize(delta)?;
    let stone: Vec<_> = ns.par_iter().map(|&n| stone_llt_error(&law, &step, n, h)).collect::<Result<_>>()?;
    let mut llt = Table::new("stone_llt", "n,h,sup_err_uncond,sup_err_cond");
    for r in &stone {
        llt.push(vec![r.n.into(), r.h.into(), r.uncond.into(), r.cond.into()]);
    }
    let mut report = Report { tables: vec![dens, llt], ..Default::default() };
    report.summary.insert("grid_step".into(), json!(delta));
    report.summary.insert("h".into(), json!(h));
    report.notes.push("nonlattice statements are verified at grid precision only (trapezoid convolution on a fixed grid)".into());
    Ok(report)
}

fn renewal_ratio(v: &Validated) -> Result<Report> {
    let step = step_of(v);
    let reports: Vec<_> = v
        .config
        .n_list
        .par_iter()
        .map(|&n| renewal_ratio_report(step, n, v.config.epsilon))
        .collect::<Result<_>>()?;
    let mut rows = Table::new("renewal_ratio", "n,x,u,p,U_left,ratio");
    let mut sup = Table::new("renewal_ratio_sup", "n,epsilon,sup_err");
    for r in &reports {
        for row in &r.rows {
            rows.push(vec![r.n.into(), row.x.into(), row.u.into(), row.p.into(), row.u_left.into(), row.ratio.into()]);
        }
        sup.push(vec![r.n.into(), r.epsilon.into(), r.sup_err.into()]);
    }
    let mut report = Report { tables: vec![rows, sup], ..Default::default() };
    report.notes.push("U(x - 1) is evaluated one lattice step below x, i.e. U(x - span)".into());
    Ok(report)
}

fn weak_convergence(v: &Validated) -> Result<Report> {
    let step = step_of(v);
    let norming = NormingData::new(step, 4096)?;
    let (a, b) = default_grid::<f64>();
    let mut grid = Table::new("weak_convergence", "n,a,b,F_n,F,abs_err");
    let mut sup = Table::new("weak_convergence_sup", "n,sup_err,F_n_1_inf,F_1_inf");
    let f_total = f_limit(1.0, f64::INFINITY)?;
    for &n in &v.config.n_list {
        let ladder = LadderTable::via_duality(step, n - 1, DpConfig::with_floor(1e-25))?;
        let mu = build_mu_n(step, n, &ladder, &norming)?;
        let rows = weak_convergence_rows(&mu, &a, &b)?;
        let mut worst: f64 = 0.0;
        for r in &rows {
            grid.push(vec![r.n.into(), r.a.into(), r.b.into(), r.f_n.into(), r.f.into(), r.abs_err().into()]);
            worst = worst.max(r.abs_err());
        }
        sup.push(vec![n.into(), worst.into(), mu.f_n(1.0, f64::INFINITY).into(), f_total.into()]);
    }
    Ok(Report { tables: vec![grid, sup], ..Default::default() })
}

fn identity_suite(v: &Validated) -> Result<Report> {
    let step = step_of(v);
    let ns = &v.config.n_list;
    let top = *ns.last().unwrap();
    let table = build_ladder_table(step, top, top)?;
    let killed = killed_sequence(step, top, DpConfig::default())?;
    let rows: Vec<(usize, f64, f64, f64, f64)> = ns
        .par_iter()
        .map(|&n| {
            let dp = table.u(n).max_abs_diff(&killed[n]);
            let oracle = duality_oracle_discrepancy(&table, step, n)?;
            let ad = alili_doney_discrepancies(step, n)?.into_iter().fold(0.0, f64::max);
            let mix = if n >= 2 {
                mixture_conditioned_law(step, n)?.max_abs_diff(&conditioned_pmf(step, n)?)
            } else {
                0.0
            };
            Ok((n, dp, oracle, ad, mix))
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new("identity_suite", "n,duality_dp,duality_oracle,alili_doney,mixture");
    let mut max = [0.0f64; 4];
    for &(n, a, b, c, d) in &rows {
        t.push(vec![n.into(), a.into(), b.into(), c.into(), d.into()]);
        for (m, x) in max.iter_mut().zip([a, b, c, d]) {
            *m = m.max(x);
        }
    }
    let mut report = Report { tables: vec![t], ..Default::default() };
    report.summary.insert("max_duality_discrepancy".into(), json!(max[0].max(max[1])));
    report.summary.insert("max_alili_doney_discrepancy".into(), json!(max[2]));
    report.summary.insert("max_mixture_discrepancy".into(), json!(max[3]));
    Ok(report)
}

fn survival(v: &Validated) -> Result<Report> {
    let step = step_of(v);
    let norming = NormingData::new(step, 4096)?;
    let rows = norming_report(step, &norming, &v.config.n_list)?;
    let mut t = Table::new("norming", "n,b_n,c_n,b_inv_n,P_Cn_exact,P_Cn_limit,ratio");
    for r in &rows {
        t.push(vec![r.n.into(), r.b_n.into(), r.c_n.into(), r.b_inv_n.into(), r.exact.into(), r.limit.into(), (r.exact / r.limit).into()]);
    }
    let mut s = Table::new("survival_spitzer", "n,P_Cn_exact,P_Cn_spitzer,ratio");
    for &n in &v.config.n_list {
        let a = survival_asymptotics(step, &norming, n)?;
        s.push(vec![n.into(), a.exact.into(), a.spitzer.into(), a.spitzer_ratio().into()]);
    }
    Ok(Report { tables: vec![t, s], ..Default::default() })
}

fn meander_integral(v: &Validated) -> Result<Report> {
    let xs = v.config.x_list.clone().unwrap_or_else(|| vec![0.5, 1.0, 2.0]);
    let tol = 1e-6;
    let rows: Vec<(f64, f64, f64)> = xs
        .par_iter()
        .map(|&x| Ok((x, meander_identity_residual(x, tol)?, first_passage_convolution_check(x, tol)?)))
        .collect::<Result<_>>()?;
    let mut t = Table::new("meander_integral", "x,meander_residual,first_passage_residual");
    for &(x, a, b) in &rows {
        t.push(vec![x.into(), a.into(), b.into()]);
    }
    let mut report = Report { tables: vec![t], ..Default::default() };
    report.summary.insert("tolerance".into(), json!(tol));
    Ok(report)
}

/// Runs the experiment without touching the file system.
pub fn execute(v: &Validated) -> Result<Report> {
    let mut report = match v.experiment {
        Experiment::LltGnedenko => llt(v, false)?,
        Experiment::LltPositive => llt(v, true)?,
        Experiment::DensityCase => density_case(v)?,
        Experiment::RenewalRatio => renewal_ratio(v)?,
        Experiment::WeakConvergence => weak_convergence(v)?,
        Experiment::IdentitySuite => identity_suite(v)?,
        Experiment::SurvivalAsymptotics => survival(v)?,
        Experiment::MeanderIntegral => meander_integral(v)?,
    };
    report.summary.insert("experiment".into(), json!(v.experiment.name()));
    Ok(report)
}

/// Executes and writes reports plus `manifest.json`; nothing is written if the run fails.
pub fn run(config: &ExperimentConfig, out: Option<&Path>, threads: Option<usize>) -> Result<PathBuf> {
    let v = config.validate()?;
    let dir = out
        .map(Path::to_path_buf)
        .or_else(|| config.output_dir.clone())
        .ok_or_else(|| Error::ConfigInvalid("no output directory (output_dir or --out)".into()))?;
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis()).unwrap_or(0);
    let clock = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.unwrap_or(0))
        .build()
        .map_err(|e| Error::ConfigInvalid(e.to_string()))?;
    let report = pool.install(|| execute(&v))?;
    let files = write_report(&dir, &report, config.format)?;
    let manifest = Manifest {
        schema_version: SCHEMA_VERSION,
        tool: "fluctlab".into(),
        version: env!("CARGO_PKG_VERSION").into(),
        experiment: v.experiment.name().into(),
        config: serde_json::to_value(config)?,
        rng: RNG_ID.into(),
        threads: pool.current_num_threads(),
        files,
        notes: report.notes.clone(),
        started_unix_ms: started,
        wall_time_s: clock.elapsed().as_secs_f64(),
    };
    write_manifest(&dir, &manifest)?;
    Ok(dir)
}

/// `{"error": name, "message": text, "exit_code": code}`.
pub fn error_object(e: &Error) -> Value {
    json!({ "error": e.name(), "message": e.to_string(), "exit_code": e.exit_code() })
}
