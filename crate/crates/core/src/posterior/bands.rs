use super::diagnostics::quantile_sorted;
use super::draws::PosteriorDraws;
use crate::basis::MonotoneBasis;
use crate::curve::{BloomCurve, CurveSource};
use crate::error::Result;
use crate::estimators::{CurveGrid, Link};
use crate::exec::Execution;
use serde::{Deserialize, Serialize};

/// Pointwise posterior summary of one site's curve on days `0..=horizon`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurveBand {
    pub site_id: String,
    /// Curve of the joint MAP draw.
    pub map: Vec<f64>,
    pub lower50: Vec<f64>,
    pub median: Vec<f64>,
    pub upper50: Vec<f64>,
}

impl CurveBand {
    pub fn map_curve(&self) -> Result<BloomCurve> {
        BloomCurve::from_values(self.map.clone(), CurveSource::Spline)
    }

    /// The pointwise posterior median, which is itself a valid CDF.
    pub fn median_curve(&self) -> Result<BloomCurve> {
        BloomCurve::from_values(self.median.clone(), CurveSource::Spline)
    }
}

/// MAP curve and inner-50% band for every site.
pub fn curve_bands(
    draws: &PosteriorDraws,
    basis: &MonotoneBasis,
    link: Link,
    horizon: usize,
    execution: Execution,
) -> Result<Vec<CurveBand>> {
    let grid = CurveGrid::new(basis, horizon)?;
    let map = draws.map_draw()?;
    let total = draws.total_draws();
    execution
        .map(draws.n_sites(), |site| {
            let curves = (0..total)
                .map(|k| grid.curve(draws.draw(k / draws.kept, k % draws.kept, site), link))
                .collect::<Result<Vec<_>>>()?;
            let mut lower50 = Vec::with_capacity(horizon + 1);
            let mut median = Vec::with_capacity(horizon + 1);
            let mut upper50 = Vec::with_capacity(horizon + 1);
            let mut column = vec![0.0; total];
            for t in 0..=horizon {
                for (c, curve) in column.iter_mut().zip(&curves) {
                    *c = curve.at(t);
                }
                column.sort_by(f64::total_cmp);
                lower50.push(quantile_sorted(&column, 0.25));
                median.push(quantile_sorted(&column, 0.5));
                upper50.push(quantile_sorted(&column, 0.75));
            }
            Ok(CurveBand {
                site_id: draws.site_ids[site].clone(),
                map: grid
                    .curve(map.coefficients[site].as_slice(), link)?
                    .values()
                    .to_vec(),
                lower50,
                median,
                upper50,
            })
        })
        .into_iter()
        .collect()
}
