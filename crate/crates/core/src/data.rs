//! Visit records: single-monitor series and aggregated per-site counts.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// One monitor's visits to one site: day and reported status per visit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisitSeries {
    days: Vec<u32>,
    reports: Vec<bool>,
}

impl VisitSeries {
    /// Sorts by day; rejects mismatched lengths and repeated days.
    pub fn new(days: Vec<u32>, reports: Vec<bool>) -> Result<Self> {
        if days.len() != reports.len() {
            return Err(Error::Precondition(format!(
                "{} days but {} reports",
                days.len(),
                reports.len()
            )));
        }
        let mut pairs: Vec<(u32, bool)> = days.into_iter().zip(reports).collect();
        pairs.sort_by_key(|p| p.0);
        if pairs.windows(2).any(|w| w[0].0 == w[1].0) {
            return Err(Error::Precondition("visit days must be unique".into()));
        }
        let (days, reports) = pairs.into_iter().unzip();
        Ok(VisitSeries { days, reports })
    }

    pub fn from_bits(days: &[u32], bits: &[u8]) -> Result<Self> {
        if bits.iter().any(|&b| b > 1) {
            return Err(Error::Precondition("reports must be 0 or 1".into()));
        }
        Self::new(days.to_vec(), bits.iter().map(|&b| b == 1).collect())
    }

    pub fn days(&self) -> &[u32] {
        &self.days
    }

    pub fn reports(&self) -> &[bool] {
        &self.reports
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, bool)> + '_ {
        self.days.iter().copied().zip(self.reports.iter().copied())
    }
}

/// Aggregated reports for one site: on `days[i]`, `monitors[i]` visits of which
/// `positives[i]` reported the event.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteCounts {
    pub site_id: String,
    pub days: Vec<u32>,
    pub monitors: Vec<u32>,
    pub positives: Vec<u32>,
}

impl SiteCounts {
    pub fn new(
        site_id: impl Into<String>,
        days: Vec<u32>,
        monitors: Vec<u32>,
        positives: Vec<u32>,
    ) -> Result<Self> {
        let site_id = site_id.into();
        if days.len() != monitors.len() || days.len() != positives.len() {
            return Err(Error::Precondition(format!(
                "site {site_id}: column lengths differ"
            )));
        }
        if let Some(i) = (0..days.len()).find(|&i| positives[i] > monitors[i] || monitors[i] == 0) {
            return Err(Error::Precondition(format!(
                "site {site_id}: day {} has {} positives out of {} monitors",
                days[i], positives[i], monitors[i]
            )));
        }
        Ok(SiteCounts {
            site_id,
            days,
            monitors,
            positives,
        })
    }

    pub fn from_series(site_id: impl Into<String>, series: &VisitSeries) -> Self {
        SiteCounts {
            site_id: site_id.into(),
            days: series.days().to_vec(),
            monitors: vec![1; series.len()],
            positives: series.reports().iter().map(|&r| r as u32).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    pub fn total_monitors(&self) -> u64 {
        self.monitors.iter().map(|&m| m as u64).sum()
    }

    pub fn total_positives(&self) -> u64 {
        self.positives.iter().map(|&y| y as u64).sum()
    }

    /// All reports negative, or all positive.
    pub fn is_degenerate(&self) -> bool {
        let y = self.total_positives();
        y == 0 || y == self.total_monitors()
    }

    /// First day with at least one positive report.
    pub fn first_positive_day(&self) -> Option<u32> {
        self.days
            .iter()
            .zip(&self.positives)
            .filter(|(_, &y)| y > 0)
            .map(|(&d, _)| d)
            .min()
    }
}

/// Site-indexed counts.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub sites: Vec<SiteCounts>,
}

impl Dataset {
    pub fn new(sites: Vec<SiteCounts>) -> Self {
        Dataset { sites }
    }

    pub fn len(&self) -> usize {
        self.sites.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sites.is_empty()
    }

    pub fn site_ids(&self) -> Vec<String> {
        self.sites.iter().map(|s| s.site_id.clone()).collect()
    }
}
