//! Resampling engines: iid bootstrap and circular block bootstrap, plus the
//! block-length rules.
//!
//! Resamples are materialized as index vectors into the original series.
//! Both engines draw positions with `random_range(0..n)` on a `u32` range so
//! that a block length of one consumes the stream exactly like the iid
//! engine.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    Iid,
    CircularBlock,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BlockRule {
    Fixed(usize),
    CubeRoot,
    PolitisWhite,
}

/// Resampling scheme, block-length rule, replicate count and master seed.
///
/// JSON form: `{"scheme": "circular_block", "block_rule": "fixed", "l": 5, "B": 1000, "seed": 1}`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "PlanJson", into = "PlanJson")]
pub struct BootstrapPlan {
    pub scheme: Scheme,
    pub block_rule: BlockRule,
    pub replicates: usize,
    pub seed: u64,
}

#[derive(Serialize, Deserialize)]
struct PlanJson {
    scheme: Scheme,
    block_rule: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    l: Option<usize>,
    #[serde(rename = "B")]
    replicates: usize,
    seed: u64,
}

impl From<BootstrapPlan> for PlanJson {
    fn from(p: BootstrapPlan) -> Self {
        let (rule, l) = match p.block_rule {
            BlockRule::Fixed(l) => ("fixed", Some(l)),
            BlockRule::CubeRoot => ("cube_root", None),
            BlockRule::PolitisWhite => ("politis_white", None),
        };
        PlanJson {
            scheme: p.scheme,
            block_rule: rule.into(),
            l,
            replicates: p.replicates,
            seed: p.seed,
        }
    }
}

impl TryFrom<PlanJson> for BootstrapPlan {
    type Error = Error;

    fn try_from(j: PlanJson) -> Result<Self> {
        let block_rule = match (j.block_rule.as_str(), j.l) {
            ("fixed", Some(l)) => BlockRule::Fixed(l),
            ("fixed", None) => return Err(Error::Config("fixed block rule requires \"l\"".into())),
            ("cube_root", _) => BlockRule::CubeRoot,
            ("politis_white", _) => BlockRule::PolitisWhite,
            (other, _) => return Err(Error::Config(format!("unknown block rule {other:?}"))),
        };
        BootstrapPlan::new(j.scheme, block_rule, j.replicates, j.seed)
    }
}

impl BootstrapPlan {
    pub fn new(scheme: Scheme, block_rule: BlockRule, replicates: usize, seed: u64) -> Result<Self> {
        if replicates == 0 {
            return Err(Error::Config(
                "number of bootstrap replicates must be at least 1".into(),
            ));
        }
        if block_rule == BlockRule::Fixed(0) {
            return Err(Error::InvalidBlockLength { l: 0, n: 0 });
        }
        Ok(BootstrapPlan {
            scheme,
            block_rule,
            replicates,
            seed,
        })
    }

    pub fn circular(block_rule: BlockRule, replicates: usize, seed: u64) -> Result<Self> {
        Self::new(Scheme::CircularBlock, block_rule, replicates, seed)
    }

    /// Block length for `series`, with any diagnostic warnings.
    pub fn resolve_block_length(&self, series: &[f64]) -> Result<(usize, Vec<String>)> {
        let n = series.len();
        if self.scheme == Scheme::Iid {
            return Ok((1, Vec::new()));
        }
        match self.block_rule {
            BlockRule::Fixed(l) => {
                if l == 0 || l > n {
                    Err(Error::InvalidBlockLength { l, n })
                } else {
                    Ok((l, Vec::new()))
                }
            }
            BlockRule::CubeRoot => Ok((cube_root_block(n), Vec::new())),
            BlockRule::PolitisWhite => {
                let sel = politis_white(series)?;
                let warnings = sel.warning.into_iter().collect();
                Ok((sel.block_length, warnings))
            }
        }
    }
}

/// Positions into the original series making up one bootstrap sample.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct IndexResample(Vec<usize>);

impl IndexResample {
    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<usize> {
        self.0
    }

    pub fn gather(&self, series: &[f64]) -> Vec<f64> {
        self.0.iter().map(|&i| series[i]).collect()
    }
}

/// `⌈n^{1/3}⌉`, checked with integer arithmetic.
pub fn cube_root_block(n: usize) -> usize {
    let n = n.max(1);
    let mut l = (n as f64).cbrt().ceil() as usize;
    while l > 1 && (l - 1).pow(3) >= n {
        l -= 1;
    }
    while l.pow(3) < n {
        l += 1;
    }
    l
}

/// All `n` circular blocks of length `l`; block `j` starts at position `j`
/// and wraps past the end of the series.
pub fn circular_blocks(n: usize, l: usize) -> Result<Vec<Vec<usize>>> {
    if l == 0 || l > n {
        return Err(Error::InvalidBlockLength { l, n });
    }
    Ok((0..n).map(|start| (0..l).map(|t| (start + t) % n).collect()).collect())
}

#[inline]
fn draw_position<R: Rng + ?Sized>(n: usize, rng: &mut R) -> usize {
    rng.random_range(0..n as u32) as usize
}

/// Fills `out` with one circular block bootstrap resample: `⌈n/l⌉` block
/// starts drawn with replacement, concatenated in draw order, the last block
/// cut to its first `n mod l` entries when `l` does not divide `n`.
pub(crate) fn fill_block_resample<R: Rng + ?Sized>(n: usize, l: usize, rng: &mut R, out: &mut Vec<usize>) {
    out.clear();
    while out.len() < n {
        let start = draw_position(n, rng);
        let take = l.min(n - out.len());
        out.extend((0..take).map(|t| {
            let i = start + t;
            if i >= n {
                i - n
            } else {
                i
            }
        }));
    }
}

pub(crate) fn fill_iid_resample<R: Rng + ?Sized>(n: usize, rng: &mut R, out: &mut Vec<usize>) {
    out.clear();
    out.extend((0..n).map(|_| draw_position(n, rng)));
}

pub fn draw_block_resample<R: Rng + ?Sized>(n: usize, l: usize, rng: &mut R) -> Result<IndexResample> {
    if n == 0 || l == 0 || l > n {
        return Err(Error::InvalidBlockLength { l, n });
    }
    let mut out = Vec::with_capacity(n);
    fill_block_resample(n, l, rng, &mut out);
    Ok(IndexResample(out))
}

pub fn draw_iid_resample<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<IndexResample> {
    if n == 0 {
        return Err(Error::InvalidInput("cannot resample an empty series".into()));
    }
    let mut out = Vec::with_capacity(n);
    fill_iid_resample(n, rng, &mut out);
    Ok(IndexResample(out))
}

/// Outcome of the Politis–White plug-in selector.
#[derive(Clone, Debug, PartialEq)]
pub struct BlockSelection {
    /// Unrounded plug-in estimate for the circular bootstrap.
    pub estimate: f64,
    /// Bandwidth `M` of the flat-top lag window.
    pub bandwidth: usize,
    /// `⌈estimate⌉` clamped to `[1, n]`.
    pub block_length: usize,
    pub warning: Option<String>,
}

pub fn politis_white_block(series: &[f64]) -> Result<usize> {
    Ok(politis_white(series)?.block_length)
}

/// Automatic circular-bootstrap block length from a flat-top lag-window
/// estimate of the spectral density and its derivative at frequency zero.
pub fn politis_white(series: &[f64]) -> Result<BlockSelection> {
    let n = series.len();
    if n < 20 {
        return Err(Error::Selection(format!("need at least 20 observations, got {n}")));
    }
    if series.iter().any(|v| !v.is_finite()) {
        return Err(Error::Selection("series contains non-finite values".into()));
    }
    let nf = n as f64;
    let mean = series.iter().sum::<f64>() / nf;
    let centered: Vec<f64> = series.iter().map(|x| x - mean).collect();
    let acov = |k: usize| {
        centered[..n - k]
            .iter()
            .zip(&centered[k..])
            .map(|(a, b)| a * b)
            .sum::<f64>()
            / nf
    };
    let r0 = acov(0);
    if !(r0 > 0.0) {
        return Err(Error::Selection("series has zero variance".into()));
    }

    let log10n = nf.log10();
    let kn = 5usize.max(log10n.sqrt().ceil() as usize);
    let m_max = ((nf.sqrt().ceil() as usize) + kn).min(n - 1);
    let threshold = 2.0 * (log10n / nf).sqrt();
    let rho: Vec<f64> = (0..=m_max).map(|k| acov(k) / r0).collect();

    // Smallest m after which kn consecutive autocorrelations are insignificant.
    let insignificant = |k: usize| rho[k].abs() < threshold;
    let mhat = (0..=m_max.saturating_sub(kn))
        .find(|&m| (1..=kn).all(|j| insignificant(m + j)))
        .unwrap_or_else(|| (1..=m_max).rev().find(|&k| !insignificant(k)).unwrap_or(m_max));
    let bandwidth = (2 * mhat).min(m_max);

    let flat_top = |t: f64| {
        if t <= 0.5 {
            1.0
        } else if t < 1.0 {
            2.0 * (1.0 - t)
        } else {
            0.0
        }
    };
    let mut g_hat = 0.0;
    let mut spec0 = r0;
    for k in 1..=bandwidth {
        let w = flat_top(k as f64 / bandwidth as f64);
        let rk = acov(k);
        g_hat += 2.0 * w * k as f64 * rk;
        spec0 += 2.0 * w * rk;
    }
    let d_cb = 4.0 / 3.0 * spec0 * spec0;
    let estimate = if d_cb > 0.0 {
        (2.0 * g_hat * g_hat / d_cb).cbrt() * nf.cbrt()
    } else {
        0.0
    };

    let mut warning = None;
    let raw = estimate.ceil();
    let block_length = if !raw.is_finite() || raw > nf {
        let msg = format!("plug-in block length {estimate:.2} exceeds series length {n}; clamped to {n}");
        log::warn!("{msg}");
        warning = Some(msg);
        n
    } else {
        (raw as usize).max(1)
    };
    Ok(BlockSelection {
        estimate,
        bandwidth,
        block_length,
        warning,
    })
}
