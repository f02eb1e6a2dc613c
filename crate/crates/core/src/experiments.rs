//! Monte Carlo size and power studies.
//!
//! A cell fixes the generating margin, the hypothesized family, the lag-1
//! Kendall's τ and the series length. Replicate `r` of cell `c` simulates its
//! path from stream `(seed, PATH, c, r)` and seeds its test with
//! `derive_seed(seed, TEST, c, r)`, so a grid's output does not depend on how
//! replicates are scheduled.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{Family, Params};
use crate::error::{Error, Result};
use crate::gof::{CorrectionKind, TestConfig, TestKind};
use crate::resampling::BlockRule;
use crate::rng::{self, domain};
use crate::tsgen::{self, MarginSpec};

pub const DEFAULT_ALPHAS: [f64; 3] = [0.01, 0.05, 0.10];

#[derive(Clone, Debug, PartialEq)]
pub struct Cell {
    pub id: usize,
    pub generate: MarginSpec,
    pub hypothesis: Family,
    pub tau: f64,
    pub n: usize,
}

impl Cell {
    /// Size cell: the hypothesized family is the generating family.
    pub fn size(id: usize, margin: MarginSpec, tau: f64, n: usize) -> Result<Self> {
        tsgen::phi_for_tau(tau)?;
        let hypothesis = margin.family.clone();
        Ok(Cell {
            id,
            generate: margin,
            hypothesis,
            tau,
            n,
        })
    }

    /// Power cell. When the hypothesized family has a support bounded below
    /// that the generating margin exceeds, the generator is truncated to
    /// that support.
    pub fn power(id: usize, margin: MarginSpec, hypothesis: Family, tau: f64, n: usize) -> Result<Self> {
        tsgen::phi_for_tau(tau)?;
        if same_kind(&margin.family, &hypothesis) {
            return Err(Error::Config(format!(
                "power cell generates from and tests the same family ({hypothesis})"
            )));
        }
        let lower = hypothesis.support_lower();
        let generate = if lower > margin.family.support_lower() {
            MarginSpec::new(Family::truncated_below(margin.family.clone(), lower), margin.params)?
        } else {
            margin
        };
        Ok(Cell {
            id,
            generate,
            hypothesis,
            tau,
            n,
        })
    }
}

fn base_kind(f: &Family) -> &Family {
    match f {
        Family::TruncatedBelow { inner, .. } => base_kind(inner),
        other => other,
    }
}

fn same_kind(a: &Family, b: &Family) -> bool {
    std::mem::discriminant(base_kind(a)) == std::mem::discriminant(base_kind(b))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReplicateRecord {
    pub r: usize,
    pub p_value: f64,
    pub t_obs: f64,
    pub block_length: Option<usize>,
    pub fitted: Params,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellSummary {
    pub cell: Cell,
    pub records: Vec<ReplicateRecord>,
    /// Replicates whose test aborted, with the error message.
    pub aborted: Vec<(usize, String)>,
    pub pvalues: Vec<f64>,
    /// `(α, #{p ≤ α} / R)`.
    pub sizes: Vec<(f64, f64)>,
    pub qq_points: Vec<(f64, f64)>,
}

impl CellSummary {
    pub fn rate(&self, alpha: f64) -> Option<f64> {
        self.sizes.iter().find(|(a, _)| *a == alpha).map(|(_, r)| *r)
    }
}

/// `#{p ≤ α} / R`.
pub fn empirical_size(pvalues: &[f64], alpha: f64) -> f64 {
    if pvalues.is_empty() {
        return f64::NAN;
    }
    pvalues.iter().filter(|&&p| p <= alpha).count() as f64 / pvalues.len() as f64
}

/// Plotting positions `(r − 0.5)/R` paired with the sorted p-values.
pub fn summarize_qq(pvalues: &[f64]) -> Vec<(f64, f64)> {
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len() as f64;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, p)| ((i as f64 + 0.5) / r, p))
        .collect()
}

/// Kolmogorov distance of the p-values from the uniform law.
pub fn uniform_ks_distance(pvalues: &[f64]) -> f64 {
    let mut sorted = pvalues.to_vec();
    sorted.sort_by(f64::total_cmp);
    let r = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            let p = p.clamp(0.0, 1.0);
            ((i + 1) as f64 / r - p).abs().max((p - i as f64 / r).abs())
        })
        .fold(0.0, f64::max)
}

/// Half-width of the two-sided DKW band at level `level` for `r` points.
pub fn dkw_band(r: usize, level: f64) -> f64 {
    ((2.0 / level).ln() / (2.0 * r as f64)).sqrt()
}

fn validate_alphas(alphas: &[f64]) -> Result<()> {
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::Config(format!("significance level {a} not in (0, 1)")));
    }
    Ok(())
}

/// Runs `replicates` independent replicates of one cell.
pub fn run_cell(cell: &Cell, config: &TestConfig, replicates: usize, seed: u64, alphas: &[f64]) -> Result<CellSummary> {
    if replicates == 0 {
        return Err(Error::Config("a cell needs at least one replicate".into()));
    }
    validate_alphas(alphas)?;
    let outcomes: Vec<std::result::Result<ReplicateRecord, String>> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let path = [domain::PATH, cell.id as u64, r as u64];
            let mut s = rng::stream(seed, &path);
            let x = tsgen::gen_series(&cell.generate, cell.tau, cell.n, &mut s).map_err(|e| e.to_string())?;
            let test_seed = rng::derive_seed(seed, &[domain::TEST, cell.id as u64, r as u64]);
            let res = config.run(&x, &cell.hypothesis, test_seed).map_err(|e| e.to_string())?;
            Ok(ReplicateRecord {
                r,
                p_value: res.p_value,
                t_obs: res.t_obs,
                block_length: res.diagnostics.block_length,
                fitted: res.fitted,
            })
        })
        .collect();

    let mut records = Vec::with_capacity(replicates);
    let mut aborted = Vec::new();
    for (r, o) in outcomes.into_iter().enumerate() {
        match o {
            Ok(rec) => records.push(rec),
            Err(e) => aborted.push((r, e)),
        }
    }
    // Cell fails when more than 0.5% of replicates abort.
    if aborted.len() * 200 > replicates {
        return Err(Error::TooManyFailures {
            failed: aborted.len(),
            replicates,
            limit: replicates / 200,
            last: aborted.last().map(|a| a.1.clone()).unwrap_or_default(),
        });
    }
    let pvalues: Vec<f64> = records.iter().map(|r| r.p_value).collect();
    let sizes = alphas.iter().map(|&a| (a, empirical_size(&pvalues, a))).collect();
    let qq_points = summarize_qq(&pvalues);
    Ok(CellSummary {
        cell: cell.clone(),
        records,
        aborted,
        pvalues,
        sizes,
        qq_points,
    })
}

pub fn run_size_cell(
    margin: &MarginSpec,
    tau: f64,
    n: usize,
    config: &TestConfig,
    replicates: usize,
    seed: u64,
) -> Result<CellSummary> {
    let cell = Cell::size(0, margin.clone(), tau, n)?;
    run_cell(&cell, config, replicates, seed, &DEFAULT_ALPHAS)
}

pub fn run_power_cell(
    margin: &MarginSpec,
    hypothesis: &Family,
    tau: f64,
    n: usize,
    config: &TestConfig,
    replicates: usize,
    seed: u64,
) -> Result<CellSummary> {
    let cell = Cell::power(0, margin.clone(), hypothesis.clone(), tau, n)?;
    run_cell(&cell, config, replicates, seed, &DEFAULT_ALPHAS)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Study {
    Size,
    Power,
}

fn default_correction() -> CorrectionKind {
    CorrectionKind::Kn
}

fn default_block_rule() -> String {
    "cube_root".into()
}

fn default_method() -> TestKind {
    TestKind::Npbb
}

/// Test settings of a grid, as they appear in the JSON config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestSpec {
    #[serde(default = "default_method")]
    pub method: TestKind,
    #[serde(default = "default_correction")]
    pub correction: CorrectionKind,
    #[serde(default = "default_block_rule")]
    pub block_rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(rename = "B")]
    pub replicates: usize,
}

impl TestSpec {
    pub fn config(&self) -> Result<TestConfig> {
        let block_rule = match (self.block_rule.as_str(), self.l) {
            ("cube_root", _) => BlockRule::CubeRoot,
            ("politis_white", _) => BlockRule::PolitisWhite,
            ("fixed", Some(l)) if l > 0 => BlockRule::Fixed(l),
            ("fixed", _) => return Err(Error::Config("fixed block rule requires a positive \"l\"".into())),
            (other, _) => return Err(Error::Config(format!("unknown block rule {other:?}"))),
        };
        if self.replicates == 0 {
            return Err(Error::Config("\"B\" must be at least 1".into()));
        }
        Ok(TestConfig {
            kind: self.method,
            correction: self.correction,
            block_rule,
            replicates: self.replicates,
        })
    }
}

/// Generating margin and, for power studies, the family under test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MarginEntry {
    pub generate: MarginSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_family: Option<Family>,
}

/// Cartesian design over margins × τ × n, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentGrid {
    pub name: String,
    pub study: Study,
    pub margins: Vec<MarginEntry>,
    pub taus: Vec<f64>,
    pub ns: Vec<usize>,
    pub test: TestSpec,
    #[serde(rename = "R")]
    pub replicates: usize,
    #[serde(default = "default_alphas")]
    pub alphas: Vec<f64>,
    pub seed: u64,
}

fn default_alphas() -> Vec<f64> {
    DEFAULT_ALPHAS.to_vec()
}

impl ExperimentGrid {
    pub fn from_json(text: &str) -> Result<Self> {
        let grid: ExperimentGrid = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        grid.validate()?;
        Ok(grid)
    }

    /// Full-scale replicate and bootstrap counts.
    pub fn paper_scale(mut self) -> Self {
        self.replicates = 10_000;
        self.test.replicates = 1000;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.name.is_empty()
            || !self
                .name
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(Error::Config(format!(
                "grid name {:?} must be non-empty [A-Za-z0-9_-]",
                self.name
            )));
        }
        if self.margins.is_empty() || self.taus.is_empty() || self.ns.is_empty() {
            return Err(Error::Config("grid has no cells".into()));
        }
        if self.replicates == 0 {
            return Err(Error::Config("\"R\" must be at least 1".into()));
        }
        if let Some(n) = self.ns.iter().find(|&&n| n < 4) {
            return Err(Error::Config(format!("series length {n} too short")));
        }
        validate_alphas(&self.alphas)?;
        self.test.config()?;
        self.cells().map(|_| ())
    }

    pub fn cells(&self) -> Result<Vec<Cell>> {
        let mut cells = Vec::new();
        for m in &self.margins {
            for &tau in &self.taus {
                for &n in &self.ns {
                    let id = cells.len();
                    let cell = match (self.study, &m.test_family) {
                        (Study::Size, None) => Cell::size(id, m.generate.clone(), tau, n)?,
                        (Study::Size, Some(f)) if same_kind(f, &m.generate.family) => {
                            Cell::size(id, m.generate.clone(), tau, n)?
                        }
                        (Study::Size, Some(f)) => {
                            return Err(Error::Config(format!(
                                "size study tests {f} on data from {}",
                                m.generate.family
                            )))
                        }
                        (Study::Power, Some(f)) => Cell::power(id, m.generate.clone(), f.clone(), tau, n)?,
                        (Study::Power, None) => {
                            return Err(Error::Config("power study margins need \"test_family\"".into()))
                        }
                    };
                    cells.push(cell);
                }
            }
        }
        Ok(cells)
    }

    /// Runs every cell in canonical order. `progress` is called after each.
    pub fn run(&self, mut progress: impl FnMut(&CellSummary)) -> Result<Vec<CellSummary>> {
        self.validate()?;
        let config = self.test.config()?;
        let mut out = Vec::new();
        for cell in self.cells()? {
            let summary = run_cell(&cell, &config, self.replicates, self.seed, &self.alphas)?;
            progress(&summary);
            out.push(summary);
        }
        Ok(out)
    }

    /// Writes the per-replicate, summary and Q–Q CSVs plus a JSON manifest.
    pub fn write_outputs(&self, dir: &Path, summaries: &[CellSummary]) -> Result<Vec<String>> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut write = |name: String, body: String| -> Result<()> {
            let path = dir.join(&name);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(name);
            Ok(())
        };

        let prefix = match self.study {
            Study::Size => "size",
            Study::Power => "power",
        };
        let mut reps = csv::Writer::from_writer(Vec::new());
        reps.write_record(["cell", "r", "p", "t_obs", "l", "theta1", "theta2"])?;
        for s in summaries {
            for rec in &s.records {
                reps.write_record([
                    s.cell.id.to_string(),
                    rec.r.to_string(),
                    rec.p_value.to_string(),
                    rec.t_obs.to_string(),
                    rec.block_length.map(|l| l.to_string()).unwrap_or_default(),
                    rec.fitted.0[0].to_string(),
                    rec.fitted.0[1].to_string(),
                ])?;
            }
        }
        write(format!("{prefix}_{}.csv", self.name), csv_body(reps)?)?;

        let mut summary = csv::Writer::from_writer(Vec::new());
        summary.write_record([
            "cell",
            "margin",
            "test_family",
            "tau",
            "n",
            "alpha",
            "rate",
            "replicates",
            "aborted",
        ])?;
        for s in summaries {
            for &(alpha, rate) in &s.sizes {
                summary.write_record([
                    s.cell.id.to_string(),
                    s.cell.generate.label(),
                    s.cell.hypothesis.to_string(),
                    s.cell.tau.to_string(),
                    s.cell.n.to_string(),
                    alpha.to_string(),
                    rate.to_string(),
                    s.records.len().to_string(),
                    s.aborted.len().to_string(),
                ])?;
            }
        }
        let summary_body = csv_body(summary)?;
        if self.study == Study::Power {
            write("power.csv".into(), summary_body.clone())?;
        }
        write("summary.csv".into(), summary_body)?;

        let mut qq = csv::Writer::from_writer(Vec::new());
        qq.write_record(["cell", "uniform_quantile", "p_value"])?;
        for s in summaries {
            for &(u, p) in &s.qq_points {
                qq.write_record([s.cell.id.to_string(), u.to_string(), p.to_string()])?;
            }
        }
        write("qq.csv".into(), csv_body(qq)?)?;

        let cells: Vec<serde_json::Value> = summaries
            .iter()
            .map(|s| {
                serde_json::json!({
                    "cell": s.cell.id,
                    "margin": s.cell.generate.label(),
                    "test_family": s.cell.hypothesis,
                    "tau": s.cell.tau,
                    "phi": tsgen::phi_for_tau(s.cell.tau).unwrap_or(f64::NAN),
                    "n": s.cell.n,
                    "aborted": s.aborted.len(),
                })
            })
            .collect();
        let manifest = serde_json::json!({
            "software": crate::build_id(),
            "grid": self,
            "R": self.replicates,
            "B": self.test.replicates,
            "seed": self.seed,
            "cells": cells,
        });
        write("manifest.json".into(), serde_json::to_string_pretty(&manifest)? + "\n")?;
        Ok(written)
    }
}

fn csv_body(w: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = w.into_inner().map_err(|e| Error::Config(e.to_string()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
