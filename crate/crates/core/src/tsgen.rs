//! Stationary series with a prescribed marginal: a Gaussian AR(1) driver
//! pushed through `X = F⁻¹(Φ(W))`, plus the lag-1 Kendall's τ used to
//! measure the serial dependence.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::distributions::{Bound, Family, Params};
use crate::error::{Error, Result};
use crate::special::{self, ONE_MINUS_ULP};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ar1Spec {
    pub phi: f64,
    pub n: usize,
    pub innovation_var: f64,
}

impl Ar1Spec {
    pub fn new(phi: f64, n: usize, innovation_var: f64) -> Result<Self> {
        if !(phi.abs() < 1.0) {
            return Err(Error::InvalidInput(format!(
                "AR(1) coefficient {phi} must satisfy |phi| < 1"
            )));
        }
        if !(innovation_var > 0.0 && innovation_var.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "innovation variance {innovation_var} must be positive"
            )));
        }
        Ok(Ar1Spec { phi, n, innovation_var })
    }

    /// Innovation variance `1 − φ²`, so the stationary variance is one.
    pub fn calibrated(phi: f64, n: usize) -> Result<Self> {
        Self::new(phi, n, 1.0 - phi * phi)
    }

    pub fn stationary_var(&self) -> f64 {
        self.innovation_var / (1.0 - self.phi * self.phi)
    }
}

/// AR(1) path started from its stationary law.
pub fn gen_ar1<R: Rng + ?Sized>(spec: &Ar1Spec, rng: &mut R) -> Vec<f64> {
    let mut out = Vec::with_capacity(spec.n);
    if spec.n == 0 {
        return out;
    }
    let sd = spec.innovation_var.sqrt();
    let mut w = spec.stationary_var().sqrt() * rng.sample::<f64, _>(StandardNormal);
    out.push(w);
    for _ in 1..spec.n {
        w = spec.phi * w + sd * rng.sample::<f64, _>(StandardNormal);
        out.push(w);
    }
    out
}

/// Target marginal of a simulated series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(
    try_from = "crate::distributions::FamilySpec",
    into = "crate::distributions::FamilySpec"
)]
pub struct MarginSpec {
    pub family: Family,
    pub params: Params,
}

impl MarginSpec {
    pub fn new(family: Family, params: Params) -> Result<Self> {
        family.bind(&params)?;
        Ok(MarginSpec { family, params })
    }

    pub fn bind(&self) -> Bound {
        self.family.bind(&self.params).expect("validated at construction")
    }

    pub fn label(&self) -> String {
        let [a, b] = self.params.0;
        match &self.family {
            Family::Normal => format!("N({a},{b})"),
            Family::Gamma => format!("Gamma({a},{b})"),
            Family::StudentT { nu } => format!("t{nu}({a},{b})"),
            Family::TruncatedBelow { inner, cut } => {
                let inner = MarginSpec {
                    family: (**inner).clone(),
                    params: self.params,
                };
                format!("{}|>{cut}", inner.label())
            }
        }
    }
}

impl TryFrom<crate::distributions::FamilySpec> for MarginSpec {
    type Error = Error;

    fn try_from(spec: crate::distributions::FamilySpec) -> Result<Self> {
        let (family, params) = spec.resolve()?;
        Ok(MarginSpec { family, params })
    }
}

impl From<MarginSpec> for crate::distributions::FamilySpec {
    fn from(m: MarginSpec) -> Self {
        crate::distributions::FamilySpec::new(&m.family, Some(m.params))
    }
}

/// Elementwise `F⁻¹(Φ(w))`.
pub fn transform_margin(w: &[f64], margin: &MarginSpec) -> Vec<f64> {
    let dist = margin.bind();
    w.iter()
        .map(|&v| dist.quantile_open(special::std_normal_cdf(v).clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP)))
        .collect()
}

/// Gaussian-copula AR(1) coefficient giving lag-1 Kendall's τ: `sin(πτ/2)`.
pub fn phi_for_tau(tau: f64) -> Result<f64> {
    if !(tau.abs() < 1.0) {
        return Err(Error::InvalidInput(format!(
            "Kendall's tau {tau} must satisfy |tau| < 1"
        )));
    }
    Ok((std::f64::consts::FRAC_PI_2 * tau).sin())
}

/// Simulated series with marginal `margin` and lag-1 Kendall's τ `tau`.
pub fn gen_series<R: Rng + ?Sized>(margin: &MarginSpec, tau: f64, n: usize, rng: &mut R) -> Result<Vec<f64>> {
    let spec = Ar1Spec::calibrated(phi_for_tau(tau)?, n)?;
    Ok(transform_margin(&gen_ar1(&spec, rng), margin))
}

/// Kendall's τ-b between `x[i]` and `x[i+1]` over the `n − 1` lag-1 pairs,
/// via merge-sort inversion counting.
pub fn kendall_tau_lag1(x: &[f64]) -> Result<f64> {
    if x.len() < 3 {
        return Err(Error::UndefinedTau(format!(
            "need at least 3 observations, got {}",
            x.len()
        )));
    }
    if x.iter().any(|v| v.is_nan()) {
        return Err(Error::UndefinedTau("series contains NaN".into()));
    }
    kendall_tau_b(&x[..x.len() - 1], &x[1..])
}

fn tie_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

fn merge_count(v: &mut [f64], buf: &mut Vec<f64>) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut swaps = merge_count(&mut v[..mid], buf) + merge_count(&mut v[mid..], buf);
    buf.clear();
    let (mut i, mut j) = (0, mid);
    while i < mid && j < n {
        if v[j] < v[i] {
            swaps += (mid - i) as u64;
            buf.push(v[j]);
            j += 1;
        } else {
            buf.push(v[i]);
            i += 1;
        }
    }
    buf.extend_from_slice(&v[i..mid]);
    buf.extend_from_slice(&v[j..n]);
    v.copy_from_slice(buf);
    swaps
}

/// Knight's O(m log m) τ-b.
pub fn kendall_tau_b(x: &[f64], y: &[f64]) -> Result<f64> {
    let m = x.len();
    if m != y.len() || m < 2 {
        return Err(Error::UndefinedTau(
            "need two equally long vectors of length ≥ 2".into(),
        ));
    }
    let mut pairs: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));

    let xs: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let ties_x = tie_pairs(&xs);
    let mut ties_xy = 0u64;
    let mut run = 1u64;
    for w in pairs.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            ties_xy += run * (run - 1) / 2;
            run = 1;
        }
    }
    ties_xy += run * (run - 1) / 2;

    let mut ys: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut buf = Vec::with_capacity(m);
    let swaps = merge_count(&mut ys, &mut buf);
    let ties_y = tie_pairs(&ys);

    let total = (m as u64) * (m as u64 - 1) / 2;
    let denom_x = (total - ties_x) as f64;
    let denom_y = (total - ties_y) as f64;
    if denom_x == 0.0 || denom_y == 0.0 {
        return Err(Error::UndefinedTau("one margin is constant".into()));
    }
    let numer = total as f64 - ties_x as f64 - ties_y as f64 + ties_xy as f64 - 2.0 * swaps as f64;
    Ok(numer / (denom_x * denom_y).sqrt())
}

/// Lag-1 Pearson autocorrelation.
pub fn lag1_autocorrelation(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let denom: f64 = x.iter().map(|v| (v - m) * (v - m)).sum();
    let num: f64 = x.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    num / denom
}
