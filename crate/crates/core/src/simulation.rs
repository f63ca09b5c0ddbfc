//! Monte Carlo comparison of the three estimators on data generated from a
//! known bloom distribution.

use crate::basis::MonotoneBasis;
use crate::curve::{median_of, BloomCurve, CurveSource};
use crate::data::{Dataset, SiteCounts, VisitSeries};
use crate::error::{Error, Result};
use crate::estimators::{fit_probit, fit_spline_gcv, naive_estimate, SplineOptions, DEFAULT_RIDGE};
use crate::exec::Execution;
use crate::rng;
use crate::special::norm_cdf;
use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// Last day of the season; visit days are drawn from `1..=SEASON`.
pub const SEASON: u32 = 180;

/// The true bloom distribution used to generate reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TruthSpec {
    Normal {
        mean: f64,
        sd: f64,
    },
    /// Three-component uniform mixture: 1/20 of the mass at the start of the
    /// season, then ramps on (37.5, 74.5] and (150, 180].
    UniformMixture,
    /// `F(d)` for integer days `d = 0, 1, …`; a step function between days
    /// and 1 beyond the table.
    Tabulated {
        values: Vec<f64>,
    },
}

impl Default for TruthSpec {
    fn default() -> Self {
        TruthSpec::Normal {
            mean: 90.0,
            sd: 40.0,
        }
    }
}

impl TruthSpec {
    pub fn label(&self) -> &'static str {
        match self {
            TruthSpec::Normal { .. } => "normal",
            TruthSpec::UniformMixture => "mixture",
            TruthSpec::Tabulated { .. } => "tabulated",
        }
    }

    /// Step at `day`: every plant blooms on that day.
    pub fn point_mass(day: u32) -> Self {
        TruthSpec::Tabulated {
            values: (0..=SEASON)
                .map(|t| if t >= day { 1.0 } else { 0.0 })
                .collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            TruthSpec::Normal { mean, sd } if mean.is_finite() && *sd > 0.0 => Ok(()),
            TruthSpec::Normal { .. } => Err(Error::Config(
                "normal truth needs a finite mean and sd > 0".into(),
            )),
            TruthSpec::UniformMixture => Ok(()),
            TruthSpec::Tabulated { values } => {
                BloomCurve::from_values(values.clone(), CurveSource::Truth).map(|_| ())
            }
        }
    }

    /// `F(t)` on the grid `0..=SEASON`.
    pub fn curve(&self) -> Result<BloomCurve> {
        let values = (0..=SEASON)
            .map(|t| truth_cdf(self, t as f64))
            .collect::<Result<Vec<_>>>()?;
        BloomCurve::from_values(values, CurveSource::Truth)
    }

    /// The same distribution delayed by `days`.
    pub fn shifted(&self, days: u32) -> Result<TruthSpec> {
        Ok(match self {
            TruthSpec::Normal { mean, sd } => TruthSpec::Normal {
                mean: mean + days as f64,
                sd: *sd,
            },
            other => {
                let base = other.curve()?;
                let d = days as usize;
                TruthSpec::Tabulated {
                    values: (0..=SEASON as usize)
                        .map(|t| if t < d { 0.0 } else { base.at(t - d) })
                        .collect(),
                }
            }
        })
    }

    /// True peak day under the integer-grid median convention.
    pub fn median(&self) -> Result<u32> {
        median_of(&self.curve()?)
            .ok_or_else(|| Error::Config("truth never exceeds one half within the season".into()))
    }
}

/// `F(t)` for `0 <= t <= 181`.
pub fn truth_cdf(spec: &TruthSpec, t: f64) -> Result<f64> {
    if !(0.0..=181.0).contains(&t) {
        return Err(Error::Domain {
            day: t,
            min: 0.0,
            max: 181.0,
        });
    }
    let f = match spec {
        TruthSpec::Normal { mean, sd } => {
            if t == 0.0 {
                0.0
            } else {
                norm_cdf((t - mean) / sd)
            }
        }
        TruthSpec::UniformMixture => {
            if t == 0.0 {
                0.0
            } else if t <= 37.5 {
                1.0 / 20.0
            } else if t <= 74.5 {
                3.0 * (t - 34.5) / 180.0
            } else if t <= 150.0 {
                2.0 / 3.0
            } else if t <= 180.0 {
                2.0 * (t - 90.0) / 180.0
            } else {
                1.0
            }
        }
        TruthSpec::Tabulated { values } => values.get(t.floor() as usize).copied().unwrap_or(1.0),
    };
    Ok(f)
}

/// `n` distinct visit days from `1..=180`, each with a Bernoulli(F(t)) report.
pub fn simulate_visits(spec: &TruthSpec, n: usize, seed: u64) -> Result<VisitSeries> {
    let mut rng = rng::stream(seed, &[]);
    simulate_with(spec, n, &mut rng)
}

fn simulate_with(spec: &TruthSpec, n: usize, rng: &mut impl Rng) -> Result<VisitSeries> {
    if n == 0 || n > SEASON as usize {
        return Err(Error::Config(format!(
            "visit count must be in 1..={SEASON}, got {n}"
        )));
    }
    let mut days: Vec<u32> = sample(rng, SEASON as usize, n)
        .into_iter()
        .map(|i| i as u32 + 1)
        .collect();
    days.sort_unstable();
    let reports = days
        .iter()
        .map(|&d| truth_cdf(spec, d as f64).map(|p| rng.random::<f64>() < p))
        .collect::<Result<Vec<_>>>()?;
    VisitSeries::new(days, reports)
}

/// One site with `n` single-observer visits.
pub fn simulate_site(
    site_id: impl Into<String>,
    spec: &TruthSpec,
    n: usize,
    seed: u64,
) -> Result<SiteCounts> {
    Ok(SiteCounts::from_series(
        site_id,
        &simulate_visits(spec, n, seed)?,
    ))
}

/// Synthetic multi-site data with a known set of late sites.
#[derive(Debug, Clone)]
pub struct PlantedSites {
    pub dataset: Dataset,
    /// Identifiers of the sites generated from the shifted truth.
    pub planted: Vec<String>,
}

/// `n_sites` sites named `site01, site02, …`; `n_shifted` of them, chosen at
/// random, follow `truth` delayed by `shift` days.
pub fn planted_anomaly_dataset(
    truth: &TruthSpec,
    n_sites: usize,
    n_shifted: usize,
    shift: u32,
    n_visits: usize,
    seed: u64,
) -> Result<PlantedSites> {
    if n_shifted > n_sites {
        return Err(Error::Config(format!(
            "{n_shifted} shifted sites out of {n_sites}"
        )));
    }
    let late = truth.shifted(shift)?;
    let mut r = rng::stream(seed, &[u64::MAX]);
    let chosen = sample(&mut r, n_sites, n_shifted).into_vec();
    let width = n_sites.to_string().len().max(2);
    let mut planted = Vec::with_capacity(n_shifted);
    let sites = (0..n_sites)
        .map(|j| {
            let id = format!("site{:0width$}", j + 1);
            let spec = if chosen.contains(&j) {
                planted.push(id.clone());
                &late
            } else {
                truth
            };
            simulate_site(id, spec, n_visits, rng::derive_seed(seed, &[j as u64]))
        })
        .collect::<Result<Vec<_>>>()?;
    planted.sort();
    Ok(PlantedSites {
        dataset: Dataset::new(sites),
        planted,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Naive,
    Probit,
    Spline,
}

impl EstimatorKind {
    pub const ALL: [EstimatorKind; 3] = [
        EstimatorKind::Naive,
        EstimatorKind::Probit,
        EstimatorKind::Spline,
    ];

    pub fn label(self) -> &'static str {
        match self {
            EstimatorKind::Naive => "naive",
            EstimatorKind::Probit => "probit",
            EstimatorKind::Spline => "spline",
        }
    }
}

/// Bias and RMSE of one estimator over the replications where it produced
/// an estimate. `bias` is signed: `mean(estimate − truth)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimResult {
    pub truth: String,
    pub estimator: EstimatorKind,
    pub n_visits: usize,
    pub replications: usize,
    pub bias: f64,
    pub rmse: f64,
    pub failures: usize,
    pub seed: u64,
}

/// Estimates from one replication; `None` marks a failure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplicationEstimates {
    pub naive: Option<u32>,
    pub probit: Option<u32>,
    pub spline: Option<u32>,
    /// The probit fit needed the fallback ridge.
    pub probit_ridged: bool,
}

impl ReplicationEstimates {
    pub fn get(&self, kind: EstimatorKind) -> Option<u32> {
        match kind {
            EstimatorKind::Naive => self.naive,
            EstimatorKind::Probit => self.probit,
            EstimatorKind::Spline => self.spline,
        }
    }
}

#[derive(Debug, Clone)]
pub struct StudyOptions {
    pub basis: MonotoneBasis,
    pub spline: SplineOptions,
    pub lambda_grid: Vec<f64>,
    pub execution: Execution,
}

impl Default for StudyOptions {
    fn default() -> Self {
        StudyOptions {
            basis: MonotoneBasis::new(0.0, SEASON as f64, 8, 3).expect("default basis"),
            spline: SplineOptions {
                prior: None,
                ..SplineOptions::default()
            },
            lambda_grid: crate::estimators::default_lambda_grid(),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct Study {
    pub truth_median: u32,
    pub estimates: Vec<ReplicationEstimates>,
    pub results: Vec<SimResult>,
}

/// All three estimators on one simulated series.
pub fn estimate_replication(series: &VisitSeries, opts: &StudyOptions) -> ReplicationEstimates {
    let horizon = SEASON as usize;
    let naive = naive_estimate(series);

    let (probit_fit, probit_ridged) = match fit_probit(series, 0.0) {
        Err(Error::Separation) | Err(Error::NoConvergence { .. }) => {
            (fit_probit(series, DEFAULT_RIDGE), true)
        }
        other => (other, false),
    };
    let probit = probit_fit
        .and_then(|f| f.curve(horizon))
        .ok()
        .and_then(|c| median_of(&c));

    let counts = SiteCounts::from_series("sim", series);
    let spline = fit_spline_gcv(&counts, &opts.basis, &opts.lambda_grid, &opts.spline)
        .and_then(|f| f.curve(&opts.basis, horizon))
        .ok()
        .and_then(|c| median_of(&c));

    ReplicationEstimates {
        naive,
        probit,
        spline,
        probit_ridged,
    }
}

/// Bias and RMSE from stored per-replication estimates.
pub fn summarize(
    truth: &TruthSpec,
    truth_median: u32,
    n_visits: usize,
    seed: u64,
    estimates: &[ReplicationEstimates],
) -> Vec<SimResult> {
    EstimatorKind::ALL
        .iter()
        .map(|&kind| {
            let errs: Vec<f64> = estimates
                .iter()
                .filter_map(|e| e.get(kind))
                .map(|v| v as f64 - truth_median as f64)
                .collect();
            let k = errs.len() as f64;
            let (bias, rmse) = if errs.is_empty() {
                (f64::NAN, f64::NAN)
            } else {
                (
                    errs.iter().sum::<f64>() / k,
                    (errs.iter().map(|e| e * e).sum::<f64>() / k).sqrt(),
                )
            };
            SimResult {
                truth: truth.label().to_string(),
                estimator: kind,
                n_visits,
                replications: estimates.len(),
                bias,
                rmse,
                failures: estimates.len() - errs.len(),
                seed,
            }
        })
        .collect()
}

/// Run `replications` independent simulations with `n_visits` visits each.
pub fn run_study_detailed(
    spec: &TruthSpec,
    n_visits: usize,
    replications: usize,
    seed: u64,
    opts: &StudyOptions,
) -> Result<Study> {
    spec.validate()?;
    if replications == 0 {
        return Err(Error::Config("at least one replication is required".into()));
    }
    if n_visits == 0 || n_visits > SEASON as usize {
        return Err(Error::Config(format!(
            "visit count must be in 1..={SEASON}, got {n_visits}"
        )));
    }
    let truth_median = spec.median()?;
    let estimates = opts.execution.map(replications, |r| {
        let mut rng = rng::stream(seed, &[n_visits as u64, r as u64]);
        let series = simulate_with(spec, n_visits, &mut rng).expect("validated visit count");
        estimate_replication(&series, opts)
    });
    let results = summarize(spec, truth_median, n_visits, seed, &estimates);
    Ok(Study {
        truth_median,
        estimates,
        results,
    })
}

pub fn run_study(
    spec: &TruthSpec,
    n_visits: usize,
    replications: usize,
    seed: u64,
    opts: &StudyOptions,
) -> Result<Vec<SimResult>> {
    run_study_detailed(spec, n_visits, replications, seed, opts).map(|s| s.results)
}

pub const STUDY_CSV_HEADER: [&str; 9] = [
    "truth",
    "n",
    "estimator",
    "bias",
    "rmse",
    "failures",
    "replications",
    "seed",
    "schema_version",
];

/// Study table as CSV, one row per (n, estimator).
pub fn write_study_csv<W: Write>(out: W, results: &[SimResult]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(STUDY_CSV_HEADER)?;
    for r in results {
        w.write_record([
            r.truth.clone(),
            r.n_visits.to_string(),
            r.estimator.label().to_string(),
            format!("{:.6}", r.bias),
            format!("{:.6}", r.rmse),
            r.failures.to_string(),
            r.replications.to_string(),
            r.seed.to_string(),
            crate::io::SCHEMA_VERSION.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
