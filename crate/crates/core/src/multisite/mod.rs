//! Cross-site analysis: comonotone covariance of bloom days, principal
//! components, FastMCD and posterior Mahalanobis-distance anomaly scores.

mod anomaly;
mod covariance;
mod mcd;
mod pca;

pub use anomaly::{
    anomaly_scores, default_threshold, draw_distances, AnomalyConfig, AnomalyReport, SiteDistance,
    REPORT_CSV_HEADER,
};
pub use covariance::{covariance_of, variance_of, CovarianceEstimate, VarianceFormula};
pub use mcd::{
    concentrate, consistency_factor, default_h, det, fast_mcd, mahalanobis, Matrix2, McdFit,
    McdOptions, Point, MIN_DETERMINANT,
};
pub use pca::{principal_components, PrincipalComponents};
