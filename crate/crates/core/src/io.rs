//! File formats: the site report table, curve tables and the ingest report.

use crate::curve::{BloomCurve, CurveSource};
use crate::data::{Dataset, SiteCounts};
use crate::error::{Error, Result};
use crate::posterior::CurveBand;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::io::{Read, Write};
use std::path::Path;

/// Version stamped into every table and report written by this crate.
pub const SCHEMA_VERSION: u32 = 1;

pub const DATASET_CSV_HEADER: [&str; 4] = ["site_id", "day", "monitors", "positives"];
pub const CURVE_CSV_HEADER: [&str; 7] = [
    "site_id",
    "day",
    "F_map",
    "F_lower50",
    "F_upper50",
    "degenerate",
    "schema_version",
];

pub const DEFAULT_MIN_REPORTS: usize = 10;
const FIRST_DAY: u32 = 1;
const LAST_DAY: u32 = 180;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedSite {
    pub site_id: String,
    pub rows: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestReport {
    pub schema_version: u32,
    pub rows_read: usize,
    /// Rows folded into an earlier row for the same site and day.
    pub rows_merged: usize,
    pub min_reports: usize,
    pub kept: Vec<String>,
    pub dropped: Vec<DroppedSite>,
}

#[derive(Default)]
struct SiteRows {
    rows: usize,
    days: BTreeMap<u32, (u32, u32)>,
}

fn parse_field<T: std::str::FromStr>(value: &str, column: &str, line: usize) -> Result<T>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e| Error::Parse {
        line,
        message: format!("{column} {value:?}: {e}"),
    })
}

/// Read a `site_id,day,monitors,positives` table.
///
/// Duplicate (site, day) rows are summed. Sites with fewer than `min_reports`
/// rows are dropped and listed in the report. Sites keep their order of first
/// appearance.
pub fn read_dataset<R: Read>(input: R, min_reports: usize) -> Result<(Dataset, IngestReport)> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(input);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<&str> = header.iter().map(str::trim).collect();
    if names != DATASET_CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header {}, found {}",
                DATASET_CSV_HEADER.join(","),
                names.join(",")
            ),
        });
    }
    let mut order: Vec<String> = Vec::new();
    let mut sites: HashMap<String, SiteRows> = HashMap::new();
    let mut rows_read = 0;
    let mut rows_merged = 0;
    for record in rdr.records() {
        let record = record.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let site_id = record[0].trim().to_string();
        if site_id.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty site_id".into(),
            });
        }
        let day: u32 = parse_field(&record[1], "day", line)?;
        let monitors: u32 = parse_field(&record[2], "monitors", line)?;
        let positives: u32 = parse_field(&record[3], "positives", line)?;
        if !(FIRST_DAY..=LAST_DAY).contains(&day) {
            return Err(Error::Validation {
                line,
                message: format!("day {day} outside {FIRST_DAY}..={LAST_DAY}"),
            });
        }
        if monitors == 0 {
            return Err(Error::Validation {
                line,
                message: "monitors must be positive".into(),
            });
        }
        if positives > monitors {
            return Err(Error::Validation {
                line,
                message: format!("positives ({positives}) exceed monitors ({monitors})"),
            });
        }
        rows_read += 1;
        let site = sites.entry(site_id.clone()).or_insert_with(|| {
            order.push(site_id);
            SiteRows::default()
        });
        site.rows += 1;
        let entry = site.days.entry(day).or_insert((0, 0));
        if entry.0 > 0 {
            rows_merged += 1;
        }
        entry.0 += monitors;
        entry.1 += positives;
    }

    let mut kept = Vec::new();
    let mut dropped = Vec::new();
    for id in order {
        let rows = sites
            .remove(&id)
            .expect("site recorded on first appearance");
        if rows.rows < min_reports {
            dropped.push(DroppedSite {
                site_id: id,
                rows: rows.rows,
                reason: format!(
                    "{} report rows, fewer than the minimum {min_reports}",
                    rows.rows
                ),
            });
            continue;
        }
        let (days, counts): (Vec<u32>, Vec<(u32, u32)>) = rows.days.into_iter().unzip();
        let (monitors, positives) = counts.into_iter().unzip();
        kept.push(SiteCounts::new(id, days, monitors, positives)?);
    }
    let report = IngestReport {
        schema_version: SCHEMA_VERSION,
        rows_read,
        rows_merged,
        min_reports,
        kept: kept.iter().map(|s| s.site_id.clone()).collect(),
        dropped,
    };
    Ok((Dataset::new(kept), report))
}

/// [`read_dataset`] from a file path.
pub fn ingest(path: &Path, min_reports: usize) -> Result<(Dataset, IngestReport)> {
    read_dataset(std::fs::File::open(path)?, min_reports)
}

pub fn write_dataset<W: Write>(out: W, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(DATASET_CSV_HEADER)?;
    for s in &data.sites {
        for i in 0..s.len() {
            w.write_record([
                s.site_id.clone(),
                s.days[i].to_string(),
                s.monitors[i].to_string(),
                s.positives[i].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// One site's rows in a curve table.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveRecord {
    pub site_id: String,
    pub map: BloomCurve,
    pub lower50: Vec<f64>,
    pub upper50: Vec<f64>,
    pub degenerate: bool,
}

impl CurveRecord {
    pub fn from_band(band: &CurveBand, degenerate: bool) -> Result<Self> {
        Ok(CurveRecord {
            site_id: band.site_id.clone(),
            map: band.map_curve()?,
            lower50: band.lower50.clone(),
            upper50: band.upper50.clone(),
            degenerate,
        })
    }
}

pub fn write_curves<W: Write>(out: W, curves: &[CurveRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CURVE_CSV_HEADER)?;
    for c in curves {
        for (day, f) in c.map.values().iter().enumerate() {
            w.write_record([
                c.site_id.clone(),
                day.to_string(),
                f.to_string(),
                c.lower50[day].to_string(),
                c.upper50[day].to_string(),
                c.degenerate.to_string(),
                SCHEMA_VERSION.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Inverse of [`write_curves`]; each site's rows must run over consecutive
/// days from 0.
pub fn read_curves<R: Read>(input: R) -> Result<Vec<CurveRecord>> {
    let mut rdr = csv::Reader::from_reader(input);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != CURVE_CSV_HEADER {
        return Err(Error::Parse {
            line: 1,
            message: format!("unexpected curve header {header:?}"),
        });
    }
    let mut out: Vec<(String, Vec<f64>, Vec<f64>, Vec<f64>, bool)> = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let site = &record[0];
        let day: usize = parse_field(&record[1], "day", line)?;
        let degenerate: bool = parse_field(&record[5], "degenerate", line)?;
        if out.last().is_none_or(|c| c.0 != site) {
            out.push((site.to_string(), vec![], vec![], vec![], degenerate));
        }
        let cur = out.last_mut().expect("pushed above");
        if day != cur.1.len() {
            return Err(Error::Parse {
                line,
                message: format!("site {site}: expected day {}, found {day}", cur.1.len()),
            });
        }
        cur.1.push(parse_field(&record[2], "F_map", line)?);
        cur.2.push(parse_field(&record[3], "F_lower50", line)?);
        cur.3.push(parse_field(&record[4], "F_upper50", line)?);
    }
    out.into_iter()
        .map(|(site_id, map, lower50, upper50, degenerate)| {
            Ok(CurveRecord {
                site_id,
                map: BloomCurve::from_values(map, CurveSource::Spline)?,
                lower50,
                upper50,
                degenerate,
            })
        })
        .collect()
}
