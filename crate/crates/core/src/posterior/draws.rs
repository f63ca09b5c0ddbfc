use super::diagnostics::{split_rhat, Rhat};
use super::sampler::ChainDraws;
use crate::basis::CoefficientVector;
use crate::error::{Error, Result};
use crate::io::SCHEMA_VERSION;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::io::{Read, Write};

pub const DRAWS_CSV_HEADER: [&str; 7] = [
    "chain",
    "iteration",
    "site_id",
    "coefficient",
    "value",
    "site_log_posterior",
    "schema_version",
];

/// Post-warm-up draws, laid out `[chain][iteration][site][coefficient]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorDraws {
    pub site_ids: Vec<String>,
    pub dim: usize,
    pub chains: usize,
    /// Stored draws per chain.
    pub kept: usize,
    pub warmup: usize,
    pub values: Vec<f64>,
    /// Joint log posterior, `[chain][iteration]`.
    pub log_posterior: Vec<f64>,
    /// `[chain][iteration][site]`.
    pub site_log_posterior: Vec<f64>,
    /// Post-warm-up acceptance rate, `[chain][site]`; empty when read from file.
    pub acceptance: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RhatEntry {
    pub site_id: String,
    pub coefficient: usize,
    pub rhat: Rhat,
}

/// The stored draw with the largest joint log posterior.
#[derive(Debug, Clone, PartialEq)]
pub struct MapDraw {
    pub chain: usize,
    pub iteration: usize,
    pub log_posterior: f64,
    pub coefficients: Vec<CoefficientVector>,
}

impl PosteriorDraws {
    /// `chains` is indexed `[chain * n_sites + site]`.
    pub(crate) fn assemble(
        site_ids: Vec<String>,
        dim: usize,
        n_chains: usize,
        kept: usize,
        warmup: usize,
        chains: &[ChainDraws],
    ) -> Self {
        let n_sites = site_ids.len();
        let mut values = Vec::with_capacity(n_chains * kept * n_sites * dim);
        let mut log_posterior = Vec::with_capacity(n_chains * kept);
        let mut site_log_posterior = Vec::with_capacity(n_chains * kept * n_sites);
        for c in 0..n_chains {
            for i in 0..kept {
                let mut joint = 0.0;
                for s in 0..n_sites {
                    let ch = &chains[c * n_sites + s];
                    values.extend_from_slice(&ch.samples[i * dim..(i + 1) * dim]);
                    site_log_posterior.push(ch.log_density[i]);
                    joint += ch.log_density[i];
                }
                log_posterior.push(joint);
            }
        }
        PosteriorDraws {
            site_ids,
            dim,
            chains: n_chains,
            kept,
            warmup,
            values,
            log_posterior,
            site_log_posterior,
            acceptance: chains.iter().map(|c| c.acceptance).collect(),
        }
    }

    pub fn n_sites(&self) -> usize {
        self.site_ids.len()
    }

    pub fn total_draws(&self) -> usize {
        self.chains * self.kept
    }

    fn offset(&self, chain: usize, iteration: usize, site: usize) -> usize {
        ((chain * self.kept + iteration) * self.n_sites() + site) * self.dim
    }

    pub fn draw(&self, chain: usize, iteration: usize, site: usize) -> &[f64] {
        let o = self.offset(chain, iteration, site);
        &self.values[o..o + self.dim]
    }

    pub fn coefficients(&self, chain: usize, iteration: usize, site: usize) -> CoefficientVector {
        CoefficientVector(self.draw(chain, iteration, site).to_vec())
    }

    /// Coefficients of every site for flat draw index `k = chain·kept + iteration`.
    pub fn draw_sites(&self, k: usize) -> Vec<CoefficientVector> {
        let (c, i) = (k / self.kept, k % self.kept);
        (0..self.n_sites())
            .map(|s| self.coefficients(c, i, s))
            .collect()
    }

    /// Per-chain traces of one coefficient of one site.
    pub fn trace(&self, site: usize, coefficient: usize) -> Vec<Vec<f64>> {
        (0..self.chains)
            .map(|c| {
                (0..self.kept)
                    .map(|i| self.draw(c, i, site)[coefficient])
                    .collect()
            })
            .collect()
    }

    pub fn rhat(&self, site: usize, coefficient: usize) -> Result<Rhat> {
        if site >= self.n_sites() || coefficient >= self.dim {
            return Err(Error::Diagnostics(format!(
                "no parameter ({site}, {coefficient})"
            )));
        }
        split_rhat(&self.trace(site, coefficient))
    }

    pub fn all_rhats(&self) -> Result<Vec<RhatEntry>> {
        let mut out = Vec::with_capacity(self.n_sites() * self.dim);
        for s in 0..self.n_sites() {
            for k in 0..self.dim {
                out.push(RhatEntry {
                    site_id: self.site_ids[s].clone(),
                    coefficient: k,
                    rhat: self.rhat(s, k)?,
                });
            }
        }
        Ok(out)
    }

    /// Argmax of the joint log posterior; ties go to the earliest chain, then
    /// the earliest iteration.
    pub fn map_draw(&self) -> Result<MapDraw> {
        let (k, &lp) = self
            .log_posterior
            .iter()
            .enumerate()
            .fold(None, |best: Option<(usize, &f64)>, (k, v)| match best {
                Some((_, b)) if !(v > b) => best,
                _ => Some((k, v)),
            })
            .ok_or_else(|| Error::Precondition("no stored draws".into()))?;
        Ok(MapDraw {
            chain: k / self.kept,
            iteration: k % self.kept,
            log_posterior: lp,
            coefficients: self.draw_sites(k),
        })
    }

    /// One row per chain, iteration, site and coefficient.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(DRAWS_CSV_HEADER)?;
        for c in 0..self.chains {
            for i in 0..self.kept {
                for (s, id) in self.site_ids.iter().enumerate() {
                    let slp = self.site_log_posterior[(c * self.kept + i) * self.n_sites() + s];
                    for (k, v) in self.draw(c, i, s).iter().enumerate() {
                        w.write_record([
                            c.to_string(),
                            i.to_string(),
                            id.clone(),
                            k.to_string(),
                            v.to_string(),
                            slp.to_string(),
                            SCHEMA_VERSION.to_string(),
                        ])?;
                    }
                }
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Inverse of [`write_csv`](Self::write_csv). Rows may appear in any
    /// order; sites keep their order of first appearance.
    pub fn read_csv<R: Read>(input: R, warmup: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(input);
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != DRAWS_CSV_HEADER {
            return Err(Error::Parse {
                line: 1,
                message: format!("unexpected draws header {header:?}"),
            });
        }
        let mut rows = Vec::new();
        let mut site_ids: Vec<String> = Vec::new();
        let mut site_index = HashMap::new();
        for (n, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let line = n + 2;
            let parse = |i: usize| -> Result<f64> {
                rec[i].parse::<f64>().map_err(|e| Error::Parse {
                    line,
                    message: format!("column {}: {e}", DRAWS_CSV_HEADER[i]),
                })
            };
            let c = parse(0)? as usize;
            let i = parse(1)? as usize;
            let site = rec[2].to_string();
            let s = *site_index.entry(site.clone()).or_insert_with(|| {
                site_ids.push(site);
                site_ids.len() - 1
            });
            rows.push((c, i, s, parse(3)? as usize, parse(4)?, parse(5)?));
        }
        let chains = rows.iter().map(|r| r.0 + 1).max().unwrap_or(0);
        let kept = rows.iter().map(|r| r.1 + 1).max().unwrap_or(0);
        let dim = rows.iter().map(|r| r.3 + 1).max().unwrap_or(0);
        let n_sites = site_ids.len();
        let expected = chains * kept * n_sites * dim;
        if expected == 0 || rows.len() != expected {
            return Err(Error::Parse {
                line: rows.len() + 1,
                message: format!("draws file has {} rows, expected {expected}", rows.len()),
            });
        }
        let mut values = vec![f64::NAN; expected];
        let mut site_log_posterior = vec![f64::NAN; chains * kept * n_sites];
        for (c, i, s, k, v, slp) in rows {
            values[((c * kept + i) * n_sites + s) * dim + k] = v;
            site_log_posterior[(c * kept + i) * n_sites + s] = slp;
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::Parse {
                line: 0,
                message: "draws file has missing entries".into(),
            });
        }
        let log_posterior = site_log_posterior
            .chunks(n_sites)
            .map(|c| c.iter().sum())
            .collect();
        Ok(PosteriorDraws {
            site_ids,
            dim,
            chains,
            kept,
            warmup,
            values,
            log_posterior,
            site_log_posterior,
            acceptance: Vec::new(),
        })
    }
}
