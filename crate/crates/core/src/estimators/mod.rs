//! Point estimators of the peak event day: the first positive report, a
//! probit regression, and the penalised monotone spline.

pub mod probit;
pub mod spline;

pub use probit::{fit_probit, ProbitFit, DEFAULT_RIDGE};
pub use spline::{
    default_lambda_grid, fit_spline_gcv, fit_spline_map, spline_curve, CurveGrid, Link,
    PenaltyTarget, SplineFit, SplineObjective, SplineOptions,
};

pub use crate::curve::median_of;

use crate::data::VisitSeries;

/// First visit day with a positive report.
pub fn naive_estimate(series: &VisitSeries) -> Option<u32> {
    series.iter().find(|&(_, y)| y).map(|(d, _)| d)
}
