//! Daily index prices to log returns, and the battery of marginal
//! Student-t tests run on them.

use std::fmt;
use std::fs;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::distributions::Family;
use crate::error::{Error, Result};
use crate::gof::{self, CorrectionKind, TestKind};
use crate::resampling::{cube_root_block, BlockRule, BootstrapPlan};
use crate::rng::{self, domain};

#[derive(Clone, Debug, PartialEq)]
pub struct PriceSeries {
    pub dates: Vec<NaiveDate>,
    pub closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(Error::InvalidInput("dates and closes differ in length".into()));
        }
        if let Some(w) = dates.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidInput(format!(
                "dates not strictly increasing at {}",
                w[1]
            )));
        }
        if let Some(c) = closes.iter().find(|c| !(**c > 0.0 && c.is_finite())) {
            return Err(Error::InvalidInput(format!("non-positive close {c}")));
        }
        Ok(PriceSeries { dates, closes })
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }
}

/// Reads a `date,close` CSV with ISO-8601 dates.
pub fn load_prices(path: &Path) -> Result<PriceSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_prices(&text, path)
}

pub fn parse_prices(text: &str, path: &Path) -> Result<PriceSeries> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| parse_err(1, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let (Some(date_col), Some(close_col)) = (col("date"), col("close")) else {
        return Err(parse_err(1, "header must contain `date` and `close`".into()));
    };

    let mut dates: Vec<NaiveDate> = Vec::new();
    let mut closes = Vec::new();
    for rec in reader.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        let date_s = rec.get(date_col).unwrap_or("");
        let close_s = rec.get(close_col).unwrap_or("");
        let date = NaiveDate::parse_from_str(date_s, "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date {date_s:?}: {e}")))?;
        let close: f64 = close_s
            .parse()
            .map_err(|_| parse_err(line, format!("bad close {close_s:?}")))?;
        if !(close > 0.0 && close.is_finite()) {
            return Err(parse_err(line, format!("close must be positive, got {close}")));
        }
        if let Some(prev) = dates.last() {
            if date == *prev {
                return Err(parse_err(line, format!("duplicate date {date}")));
            }
            if date < *prev {
                return Err(parse_err(line, format!("date {date} out of order after {prev}")));
            }
        }
        dates.push(date);
        closes.push(close);
    }
    PriceSeries::new(dates, closes)
}

/// `ln(close[i+1]) − ln(close[i])`.
pub fn log_returns(prices: &PriceSeries) -> Result<Vec<f64>> {
    log_returns_of(&prices.closes)
}

pub fn log_returns_of(closes: &[f64]) -> Result<Vec<f64>> {
    if closes.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 prices, got {}",
            closes.len()
        )));
    }
    Ok(closes.windows(2).map(|w| (w[1] / w[0]).ln()).collect())
}

/// Degrees of freedom of a Student-t row; `Infinite` is the Normal family.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Nu {
    Infinite,
    Finite(f64),
}

impl Nu {
    pub fn family(&self) -> Family {
        match self {
            Nu::Infinite => Family::Normal,
            Nu::Finite(nu) => Family::student_t(*nu),
        }
    }
}

impl fmt::Display for Nu {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Nu::Infinite => f.write_str("inf"),
            Nu::Finite(v) => write!(f, "{v}"),
        }
    }
}

impl std::str::FromStr for Nu {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if matches!(s.to_ascii_lowercase().as_str(), "inf" | "infinity" | "normal") {
            return Ok(Nu::Infinite);
        }
        match s.parse::<f64>() {
            Ok(v) if v > 0.0 && v.is_finite() => Ok(Nu::Finite(v)),
            _ => Err(Error::Config(format!(
                "degrees of freedom {s:?} must be positive or \"inf\""
            ))),
        }
    }
}

pub const TABLE2_METHODS: [TestKind; 4] = [TestKind::Npbb, TestKind::Spb, TestKind::Npb, TestKind::Pb];

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Table2Cell {
    pub method: TestKind,
    pub p_value: Option<f64>,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table2Row {
    pub nu: Nu,
    /// In [`TABLE2_METHODS`] order.
    pub cells: Vec<Table2Cell>,
}

impl Table2Row {
    pub fn p(&self, method: TestKind) -> Option<f64> {
        self.cells.iter().find(|c| c.method == method).and_then(|c| c.p_value)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Table2 {
    pub rows: Vec<Table2Row>,
    pub block_length: usize,
    pub replicates: usize,
    pub seed: u64,
}

impl Table2 {
    pub fn row(&self, nu: Nu) -> Option<&Table2Row> {
        self.rows.iter().find(|r| r.nu == nu)
    }

    /// `nu,npbb,spb,npb,pb`; failed cells are `NA`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("nu,npbb,spb,npb,pb\n");
        for row in &self.rows {
            s.push_str(&row.nu.to_string());
            for c in &row.cells {
                s.push(',');
                match c.p_value {
                    Some(p) => s.push_str(&p.to_string()),
                    None => s.push_str("NA"),
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Runs the four tests for each ν. NPBB uses the cube-root block length and
/// the bootstrap-expectation centering. Cell failures are recorded and the
/// remaining cells still run.
pub fn run_table2(returns: &[f64], nus: &[Nu], replicates: usize, seed: u64) -> Result<Table2> {
    if replicates == 0 {
        return Err(Error::Config("\"B\" must be at least 1".into()));
    }
    if returns.len() < 2 {
        return Err(Error::InvalidInput("need at least 2 returns".into()));
    }
    let block_length = cube_root_block(returns.len());
    let jobs: Vec<(usize, usize)> = (0..nus.len())
        .flat_map(|i| (0..TABLE2_METHODS.len()).map(move |j| (i, j)))
        .collect();
    let results: Vec<Table2Cell> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let family = nus[i].family();
            let method = TABLE2_METHODS[j];
            let cell_seed = rng::derive_seed(seed, &[domain::TABLE, i as u64, j as u64]);
            let res = match method {
                TestKind::Npbb => BootstrapPlan::circular(BlockRule::CubeRoot, replicates, cell_seed)
                    .and_then(|plan| gof::npbb_test(returns, &family, &plan, CorrectionKind::Kn)),
                TestKind::Spb => gof::spb_test(returns, &family, replicates, cell_seed),
                TestKind::Npb => gof::npb_test(returns, &family, replicates, cell_seed),
                TestKind::Pb => gof::pb_test(returns, &family, replicates, cell_seed),
            };
            match res {
                Ok(r) => Table2Cell {
                    method,
                    p_value: Some(r.p_value),
                    error: None,
                },
                Err(e) => {
                    log::warn!("{method} test for nu={} failed: {e}", nus[i]);
                    Table2Cell {
                        method,
                        p_value: None,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();
    let mut it = results.into_iter();
    let rows = nus
        .iter()
        .map(|&nu| Table2Row {
            nu,
            cells: it.by_ref().take(TABLE2_METHODS.len()).collect(),
        })
        .collect();
    Ok(Table2 {
        rows,
        block_length,
        replicates,
        seed,
    })
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
