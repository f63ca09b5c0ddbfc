use super::covariance::{CovarianceEstimate, VarianceFormula};
use super::mcd::{fast_mcd, mahalanobis, McdOptions, Point};
use super::pca::principal_components;
use crate::basis::MonotoneBasis;
use crate::error::{Error, Result};
use crate::estimators::{CurveGrid, Link};
use crate::exec::Execution;
use crate::io::SCHEMA_VERSION;
use crate::posterior::{quantile, PosteriorDraws};
use crate::rng;
use serde::{Deserialize, Serialize};
use std::io::Write;

/// `√χ²_{2, 0.975}`; the χ² quantile with two degrees of freedom is `−2 ln(0.025)`.
pub fn default_threshold() -> f64 {
    (-2.0 * 0.025f64.ln()).sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnomalyConfig {
    pub link: Link,
    pub horizon: usize,
    pub formula: VarianceFormula,
    pub mcd: McdOptions,
    pub threshold: f64,
    #[serde(skip)]
    pub execution: Execution,
}

impl Default for AnomalyConfig {
    fn default() -> Self {
        AnomalyConfig {
            link: Link::Logit,
            horizon: 180,
            formula: VarianceFormula::Corrected,
            mcd: McdOptions::default(),
            threshold: default_threshold(),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteDistance {
    pub site_id: String,
    pub map_distance: f64,
    pub lower50: f64,
    pub upper50: f64,
    /// 1-based position in the ranking.
    pub rank: usize,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyReport {
    pub schema_version: u32,
    /// In the order of the input draws.
    pub sites: Vec<SiteDistance>,
    /// Site identifiers by decreasing MAP distance.
    pub ranking: Vec<String>,
    pub flagged: Vec<String>,
    pub threshold: f64,
    pub variance_formula: VarianceFormula,
    pub map_chain: usize,
    pub map_iteration: usize,
    pub draws_used: usize,
    /// Draws whose pipeline failed (typically a degenerate FastMCD scatter).
    pub draws_dropped: usize,
}

pub const REPORT_CSV_HEADER: [&str; 6] = [
    "site",
    "map_distance",
    "lower50",
    "upper50",
    "flagged",
    "schema_version",
];

impl AnomalyReport {
    pub fn site(&self, site_id: &str) -> Option<&SiteDistance> {
        self.sites.iter().find(|s| s.site_id == site_id)
    }

    pub fn write_json<W: Write>(&self, out: W) -> Result<()> {
        serde_json::to_writer_pretty(out, self)?;
        Ok(())
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(REPORT_CSV_HEADER)?;
        for s in &self.sites {
            w.write_record([
                s.site_id.clone(),
                s.map_distance.to_string(),
                s.lower50.to_string(),
                s.upper50.to_string(),
                s.flagged.to_string(),
                SCHEMA_VERSION.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Mahalanobis distance of every site for one set of per-site coefficients,
/// listed in the given order.
pub fn draw_distances(
    coefs: &[&[f64]],
    grid: &CurveGrid,
    config: &AnomalyConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    let curves = coefs
        .iter()
        .map(|c| grid.curve(c, config.link).map(|c| c.closed_at_horizon()))
        .collect::<Result<Vec<_>>>()?;
    let cov = CovarianceEstimate::from_curves(&curves, config.horizon, config.formula)?;
    let scores: Vec<Point> = principal_components(&cov, 2)?
        .site_scores()
        .into_iter()
        .map(|s| [s[0], s[1]])
        .collect();
    let mcd = fast_mcd(&scores, &McdOptions { seed, ..config.mcd })?;
    scores
        .iter()
        .map(|x| mahalanobis(x, &mcd.center, &mcd.scatter))
        .collect()
}

/// Posterior Mahalanobis-distance anomaly scores for every site.
///
/// Sites are processed in sorted order of their identifiers, so the report
/// does not depend on the order in which sites were sampled.
pub fn anomaly_scores(
    draws: &PosteriorDraws,
    basis: &MonotoneBasis,
    config: &AnomalyConfig,
) -> Result<AnomalyReport> {
    let j = draws.n_sites();
    if j < 4 {
        return Err(Error::Precondition(format!(
            "anomaly scoring needs at least 4 sites, got {j}"
        )));
    }
    if config.horizon as f64 > basis.t_max() + 1.0 {
        log::warn!(
            "horizon {} extends past the basis range; curves are held flat beyond it",
            config.horizon
        );
    }
    let mut order: Vec<usize> = (0..j).collect();
    order.sort_by(|&a, &b| draws.site_ids[a].cmp(&draws.site_ids[b]));
    if order
        .windows(2)
        .any(|w| draws.site_ids[w[0]] == draws.site_ids[w[1]])
    {
        return Err(Error::Precondition("duplicate site identifiers".into()));
    }

    let grid = CurveGrid::new(basis, config.horizon)?;
    let map = draws.map_draw()?;
    let map_index = map.chain * draws.kept + map.iteration;
    let total = draws.total_draws();
    let per_draw = config.execution.map(total, |k| {
        let (c, i) = (k / draws.kept, k % draws.kept);
        let coefs: Vec<&[f64]> = order.iter().map(|&s| draws.draw(c, i, s)).collect();
        draw_distances(
            &coefs,
            &grid,
            config,
            rng::derive_seed(config.mcd.seed, &[k as u64]),
        )
    });

    let map_sorted = match &per_draw[map_index] {
        Ok(d) => d.clone(),
        Err(e) => return Err(Error::Degenerate(format!("MAP draw failed: {e}"))),
    };
    let kept: Vec<&Vec<f64>> = per_draw.iter().filter_map(|r| r.as_ref().ok()).collect();
    let dropped = total - kept.len();
    if dropped > 0 {
        log::warn!("{dropped} of {total} posterior draws dropped from anomaly scoring");
    }

    let mut sites: Vec<SiteDistance> = vec![];
    for (pos, &s) in order.iter().enumerate() {
        let column: Vec<f64> = kept.iter().map(|d| d[pos]).collect();
        sites.push(SiteDistance {
            site_id: draws.site_ids[s].clone(),
            map_distance: map_sorted[pos],
            lower50: quantile(&column, 0.25),
            upper50: quantile(&column, 0.75),
            rank: 0,
            flagged: map_sorted[pos] > config.threshold,
        });
    }
    // `sites` is in sorted-identifier order here, so ties rank alphabetically.
    let mut by_distance: Vec<usize> = (0..j).collect();
    by_distance.sort_by(|&a, &b| {
        sites[b]
            .map_distance
            .total_cmp(&sites[a].map_distance)
            .then(a.cmp(&b))
    });
    for (r, &p) in by_distance.iter().enumerate() {
        sites[p].rank = r + 1;
    }
    let ranking: Vec<String> = by_distance
        .iter()
        .map(|&p| sites[p].site_id.clone())
        .collect();
    let flagged = ranking
        .iter()
        .filter(|id| sites.iter().any(|s| &s.site_id == *id && s.flagged))
        .cloned()
        .collect();

    let mut in_input_order = vec![None; j];
    for (pos, &s) in order.iter().enumerate() {
        in_input_order[s] = Some(sites[pos].clone());
    }
    Ok(AnomalyReport {
        schema_version: SCHEMA_VERSION,
        sites: in_input_order
            .into_iter()
            .map(|s| s.expect("every site placed"))
            .collect(),
        ranking,
        flagged,
        threshold: config.threshold,
        variance_formula: config.formula,
        map_chain: map.chain,
        map_iteration: map.iteration,
        draws_used: kept.len(),
        draws_dropped: dropped,
    })
}
