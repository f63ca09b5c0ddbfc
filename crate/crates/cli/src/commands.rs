use crate::Truth;
use bloomcurve::config::RunConfig;
use bloomcurve::curve::median_of;
use bloomcurve::data::Dataset;
use bloomcurve::error::{Error, Result};
use bloomcurve::estimators::SplineOptions;
use bloomcurve::io::{self, CurveRecord, IngestReport, SCHEMA_VERSION};
use bloomcurve::multisite::anomaly_scores;
use bloomcurve::posterior::{curve_bands, sample_posterior, select_lambdas, CurveBand, PosteriorDraws, RhatEntry};
use bloomcurve::simulation::{run_study_detailed, write_study_csv, SimResult, StudyOptions, TruthSpec};
use serde::Serialize;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

pub enum Outcome {
    Success,
    GateFailed(String),
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut w = create(dir, name)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct StudyMeta<'a> {
    schema_version: u32,
    truth: &'a TruthSpec,
    truth_median: u32,
    n: &'a [usize],
    replications: usize,
    seed: u64,
    results: &'a [SimResult],
}

pub fn simulate(config: &RunConfig, truth: Truth, ns: &[usize], reps: usize, out: &Path) -> Result<Outcome> {
    if reps == 0 || ns.is_empty() {
        return Err(Error::Config("need at least one replication and one visit count".into()));
    }
    let spec = match truth {
        Truth::Normal => TruthSpec::default(),
        Truth::Mixture => TruthSpec::UniformMixture,
    };
    let opts = StudyOptions {
        basis: config.basis()?,
        spline: SplineOptions { link: config.link, penalty: config.penalty, prior: None, ..Default::default() },
        lambda_grid: config.lambda_grid.clone(),
        execution: config.execution(),
    };
    let mut results = Vec::new();
    let mut truth_median = 0;
    for &n in ns {
        let study = run_study_detailed(&spec, n, reps, config.seed, &opts)?;
        truth_median = study.truth_median;
        results.extend(study.results);
    }
    let label = spec.label();
    let mut w = create(out, &format!("study_{label}.csv"))?;
    write_study_csv(&mut w, &results)?;
    w.flush()?;
    let meta = StudyMeta {
        schema_version: SCHEMA_VERSION,
        truth: &spec,
        truth_median,
        n: ns,
        replications: reps,
        seed: config.seed,
        results: &results,
    };
    write_json(out, &format!("study_{label}.json"), &meta)?;
    Ok(Outcome::Success)
}

#[derive(Serialize)]
struct SiteEstimate {
    site_id: String,
    lambda: f64,
    naive: Option<u32>,
    /// Median of the MAP-draw curve.
    model_median: Option<u32>,
    /// Median of the pointwise posterior median curve.
    posterior_median: Option<u32>,
    degenerate: bool,
}

#[derive(Serialize)]
struct Diagnostics<'a> {
    schema_version: u32,
    gate: f64,
    passed: bool,
    max_rhat: f64,
    failing: Vec<&'a RhatEntry>,
    rhat: &'a [RhatEntry],
    acceptance: &'a [f64],
}

#[derive(Serialize)]
struct FitMeta<'a> {
    schema_version: u32,
    config: &'a RunConfig,
    ingest: &'a IngestReport,
    map_chain: usize,
    map_iteration: usize,
    map_log_posterior: f64,
    sites: &'a [SiteEstimate],
}

fn load(config: &RunConfig, data: &Path) -> Result<(Dataset, IngestReport)> {
    let (dataset, report) = io::ingest(data, config.min_reports)?;
    for d in &report.dropped {
        log::warn!("dropped site {}: {}", d.site_id, d.reason);
    }
    Ok((dataset, report))
}

pub fn fit(config: &RunConfig, data: &Path, out: &Path) -> Result<Outcome> {
    let (dataset, report) = load(config, data)?;
    if dataset.is_empty() {
        return Err(Error::Precondition("no site has enough reports to fit".into()));
    }
    let basis = config.basis()?;
    let lambdas = match config.fixed_lambdas(dataset.len()) {
        Some(l) => l?,
        None => select_lambdas(
            &dataset,
            &basis,
            &config.prior,
            config.model(),
            &config.lambda_grid,
            config.execution(),
        )?,
    };
    let draws = sample_posterior(&dataset, &basis, &config.prior, &lambdas, config.model(), &config.sampler())?;
    let map = draws.map_draw()?;
    let bands = curve_bands(&draws, &basis, config.link, config.horizon, config.execution())?;

    let estimates: Vec<SiteEstimate> = dataset
        .sites
        .iter()
        .zip(&bands)
        .zip(&lambdas)
        .map(|((site, band), &lambda)| {
            Ok(SiteEstimate {
                site_id: site.site_id.clone(),
                lambda,
                naive: site.first_positive_day(),
                model_median: median_of(&band.map_curve()?),
                posterior_median: median_of(&band.median_curve()?),
                degenerate: site.is_degenerate(),
            })
        })
        .collect::<Result<_>>()?;
    for e in estimates.iter().filter(|e| e.degenerate) {
        log::warn!("site {}: all reports agree; curve is boundary-flat", e.site_id);
    }

    let records = bands
        .iter()
        .zip(&estimates)
        .map(|(b, e)| CurveRecord::from_band(b, e.degenerate))
        .collect::<Result<Vec<_>>>()?;
    let mut w = create(out, "curves.csv")?;
    io::write_curves(&mut w, &records)?;
    w.flush()?;

    let mut w = create(out, "estimates.csv")?;
    write_estimates(&mut w, &estimates)?;
    w.flush()?;

    let mut w = create(out, "draws.csv")?;
    draws.write_csv(&mut w)?;
    w.flush()?;

    let rhats = draws.all_rhats()?;
    let failing: Vec<&RhatEntry> = rhats.iter().filter(|r| !(r.rhat.value < config.rhat_gate)).collect();
    let max_rhat = rhats.iter().map(|r| r.rhat.value).fold(f64::NEG_INFINITY, f64::max);
    let passed = failing.is_empty();
    write_json(
        out,
        "diagnostics.json",
        &Diagnostics {
            schema_version: SCHEMA_VERSION,
            gate: config.rhat_gate,
            passed,
            max_rhat,
            failing: failing.clone(),
            rhat: &rhats,
            acceptance: &draws.acceptance,
        },
    )?;
    write_json(
        out,
        "fit_meta.json",
        &FitMeta {
            schema_version: SCHEMA_VERSION,
            config,
            ingest: &report,
            map_chain: map.chain,
            map_iteration: map.iteration,
            map_log_posterior: map.log_posterior,
            sites: &estimates,
        },
    )?;
    if passed {
        Ok(Outcome::Success)
    } else {
        Ok(Outcome::GateFailed(format!(
            "{} of {} parameters have R-hat >= {} (max {max_rhat:.3})",
            failing.len(),
            rhats.len(),
            config.rhat_gate
        )))
    }
}

fn write_estimates<W: Write>(out: W, estimates: &[SiteEstimate]) -> Result<()> {
    let opt = |v: Option<u32>| v.map(|d| d.to_string()).unwrap_or_default();
    let mut w = csv::Writer::from_writer(out);
    w.write_record([
        "site_id",
        "lambda",
        "naive",
        "model_median",
        "posterior_median",
        "model_minus_naive",
        "degenerate",
        "schema_version",
    ])?;
    for e in estimates {
        let gap = match (e.model_median, e.naive) {
            (Some(m), Some(n)) => (m as i64 - n as i64).to_string(),
            _ => String::new(),
        };
        w.write_record([
            e.site_id.clone(),
            e.lambda.to_string(),
            opt(e.naive),
            opt(e.model_median),
            opt(e.posterior_median),
            gap,
            e.degenerate.to_string(),
            SCHEMA_VERSION.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn write_group_curves<W: Write>(out: W, bands: &[CurveBand], flagged: &[String]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["group", "site_id", "day", "F_map", "F_lower50", "F_upper50", "schema_version"])?;
    for b in bands {
        let group = if flagged.contains(&b.site_id) { "flagged" } else { "typical" };
        for day in 0..b.map.len() {
            w.write_record([
                group.to_string(),
                b.site_id.clone(),
                day.to_string(),
                b.map[day].to_string(),
                b.lower50[day].to_string(),
                b.upper50[day].to_string(),
                SCHEMA_VERSION.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn anomaly(config: &RunConfig, draws_path: &Path, out: &Path) -> Result<Outcome> {
    let draws = PosteriorDraws::read_csv(File::open(draws_path)?, 0)?;
    let basis = config.basis()?;
    if draws.dim != basis.dim() {
        return Err(Error::Config(format!(
            "draws have {} coefficients per site, the configured basis has {}",
            draws.dim,
            basis.dim()
        )));
    }
    let report = anomaly_scores(&draws, &basis, &config.anomaly())?;
    let mut w = create(out, "anomaly.json")?;
    report.write_json(&mut w)?;
    w.write_all(b"\n")?;
    w.flush()?;
    let mut w = create(out, "anomaly.csv")?;
    report.write_csv(&mut w)?;
    w.flush()?;
    let bands = curve_bands(&draws, &basis, config.link, config.horizon, config.execution())?;
    let mut w = create(out, "group_curves.csv")?;
    write_group_curves(&mut w, &bands, &report.flagged)?;
    w.flush()?;
    Ok(Outcome::Success)
}

pub fn ingest_check(config: &RunConfig, data: &Path, out: &Path) -> Result<Outcome> {
    let (dataset, report) = load(config, data)?;
    write_json(out, "ingest_report.json", &report)?;
    println!(
        "{} rows, {} kept sites, {} dropped, {} merged duplicate rows",
        report.rows_read,
        dataset.len(),
        report.dropped.len(),
        report.rows_merged
    );
    Ok(Outcome::Success)
}
