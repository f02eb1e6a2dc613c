//! Bootstrap goodness-of-fit tests for a marginal distribution family with
//! estimated parameters.
//!
//! * [`npbb_test`]: circular block bootstrap with a `K_n` or `C_n` centering
//!   term, for stationary series.
//! * [`npb_test`]: iid nonparametric bootstrap with `C_n` centering.
//! * [`pb_test`]: parametric bootstrap from the fitted law.
//! * [`spb_test`]: semiparametric bootstrap with a Gaussian-copula AR(1)
//!   working model for the serial dependence.
//!
//! All four report `p = #{b : T_b > T_n} / B`.

use std::fmt;

use rand::distr::Open01;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::distributions::{Bound, Family, Params};
use crate::edf::{self, Centering, Correction, SampleGrid, StepAverage};
use crate::error::{Error, Result};
use crate::resampling::{self, BootstrapPlan, Scheme};
use crate::rng::{self, domain, Stream};
use crate::special::{self, ONE_MINUS_ULP};
use crate::tsgen::{self, Ar1Spec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestKind {
    Npbb,
    Npb,
    Pb,
    Spb,
}

impl fmt::Display for TestKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TestKind::Npbb => "npbb",
            TestKind::Npb => "npb",
            TestKind::Pb => "pb",
            TestKind::Spb => "spb",
        })
    }
}

impl std::str::FromStr for TestKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "npbb" => Ok(TestKind::Npbb),
            "npb" => Ok(TestKind::Npb),
            "pb" => Ok(TestKind::Pb),
            "spb" => Ok(TestKind::Spb),
            other => Err(Error::Config(format!("unknown test method {other:?}"))),
        }
    }
}

/// Which centering term the block bootstrap subtracts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CorrectionKind {
    /// Bootstrap expectations: `√n (E*[F_n^(b)] − F(·; θ₀*))`.
    Kn,
    /// Sample estimates: `√n (F_n − F(·; θ̂_n))`.
    Cn,
}

impl fmt::Display for CorrectionKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CorrectionKind::Kn => "Kn",
            CorrectionKind::Cn => "Cn",
        })
    }
}

impl std::str::FromStr for CorrectionKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "kn" => Ok(CorrectionKind::Kn),
            "cn" => Ok(CorrectionKind::Cn),
            other => Err(Error::Config(format!("unknown correction {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct Diagnostics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub block_length: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correction: Option<CorrectionKind>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub scheme: Option<Scheme>,
    /// Bootstrap fits that failed and were redrawn.
    pub redraws: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub working_phi: Option<f64>,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GofResult {
    pub test: TestKind,
    pub family: Family,
    pub t_obs: f64,
    pub t_boot: Vec<f64>,
    pub p_value: f64,
    pub fitted: Params,
    pub theta_star: Option<Params>,
    pub seed: u64,
    pub diagnostics: Diagnostics,
}

impl GofResult {
    pub fn replicates(&self) -> usize {
        self.t_boot.len()
    }

    /// Number of bootstrap statistics strictly above the observed one.
    pub fn exceedances(&self) -> usize {
        self.t_boot.iter().filter(|&&t| t > self.t_obs).count()
    }

    /// Machine-readable summary.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = serde_json::json!({
            "test": self.test,
            "family": self.family,
            "t_obs": self.t_obs,
            "p_value": self.p_value,
            "B": self.replicates(),
            "seed": self.seed,
            "fitted": self.fitted,
            "diagnostics": self.diagnostics,
        });
        let obj = v.as_object_mut().expect("object");
        if let Some(l) = self.diagnostics.block_length {
            obj.insert("l".into(), l.into());
        }
        if let Some(c) = self.diagnostics.correction {
            obj.insert("correction".into(), c.to_string().into());
        }
        if let Some(t) = self.theta_star {
            obj.insert("theta_star".into(), serde_json::to_value(t).expect("params"));
        }
        if self.test == TestKind::Spb {
            obj.insert(
                "note".into(),
                "semiparametric baseline reconstructed with an AR(1) working model".into(),
            );
        }
        v
    }

    /// `b,t_boot` rows.
    pub fn t_boot_csv(&self) -> String {
        let mut s = String::from("b,t_boot\n");
        for (b, t) in self.t_boot.iter().enumerate() {
            s.push_str(&format!("{b},{t}\n"));
        }
        s
    }
}

fn p_value(t_obs: f64, t_boot: &[f64]) -> f64 {
    t_boot.iter().filter(|&&t| t > t_obs).count() as f64 / t_boot.len() as f64
}

/// Largest number of failed bootstrap fits tolerated: 1% of `B`.
fn failure_limit(replicates: usize) -> usize {
    replicates / 100
}

/// Runs `attempt(b, k)` for k = 0, 1, … until it succeeds, giving up once the
/// failures across all replicates could exceed the limit. Returns the
/// successful attempt index and value per replicate.
fn with_redraws<T: Send>(
    replicates: usize,
    attempt: impl Fn(usize, u64) -> Result<T> + Sync,
) -> Result<(Vec<(u64, T)>, usize)> {
    let limit = failure_limit(replicates);
    let outcomes: Vec<std::result::Result<(u64, T), (usize, String)>> = (0..replicates)
        .into_par_iter()
        .map(|b| {
            let mut last = String::new();
            for k in 0..=(limit as u64) {
                match attempt(b, k) {
                    Ok(v) => return Ok((k, v)),
                    Err(e) => last = e.to_string(),
                }
            }
            Err((limit + 1, last))
        })
        .collect();
    let mut failed = 0usize;
    let mut last_err = String::new();
    let mut values = Vec::with_capacity(replicates);
    for o in outcomes {
        match o {
            Ok((k, v)) => {
                failed += k as usize;
                values.push((k, v));
            }
            Err((k, e)) => {
                failed += k;
                last_err = e;
            }
        }
    }
    if failed > limit || values.len() < replicates {
        return Err(Error::TooManyFailures {
            failed,
            replicates,
            limit,
            last: last_err,
        });
    }
    if failed > 0 {
        log::info!("{failed} bootstrap replicate fits failed and were redrawn");
    }
    Ok((values, failed))
}

fn check_inputs(sample: &[f64], replicates: usize) -> Result<()> {
    if replicates == 0 {
        return Err(Error::Config(
            "number of bootstrap replicates must be at least 1".into(),
        ));
    }
    if sample.len() < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 observations, got {}",
            sample.len()
        )));
    }
    if let Some(bad) = sample.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite observation {bad}")));
    }
    Ok(())
}

struct ResampleSpec {
    scheme: Scheme,
    block_length: usize,
}

impl ResampleSpec {
    fn draw(&self, n: usize, seed: u64, b: usize, attempt: u64, out: &mut Vec<usize>) {
        let mut s: Stream = rng::stream(seed, &[domain::RESAMPLE, b as u64, attempt]);
        match self.scheme {
            Scheme::Iid => resampling::fill_iid_resample(n, &mut s, out),
            Scheme::CircularBlock => resampling::fill_block_resample(n, self.block_length, &mut s, out),
        }
    }
}

/// Shared engine of the resampling-based tests.
#[allow(clippy::too_many_arguments)]
fn resampling_test(
    test: TestKind,
    sample: &[f64],
    family: &Family,
    spec: ResampleSpec,
    replicates: usize,
    seed: u64,
    correction: CorrectionKind,
    mut diagnostics: Diagnostics,
) -> Result<GofResult> {
    let n = sample.len();
    let grid = SampleGrid::new(sample)?;
    let fitted = family.fit_mle(sample)?;
    let fitted_dist = family.bind(&fitted)?;
    let t_obs = edf::sup_on_grid(grid.values(), grid.counts(), n, &fitted_dist, None);

    // Pass 1: bootstrap fits, and for K_n the accumulated jump counts.
    let fit_one = |b: usize, k: u64| -> Result<(Params, Vec<u32>)> {
        let mut idx = Vec::with_capacity(n);
        spec.draw(n, seed, b, k, &mut idx);
        let values: Vec<f64> = idx.iter().map(|&i| sample[i]).collect();
        let p = family.fit_mle(&values)?;
        let mut counts = Vec::new();
        if correction == CorrectionKind::Kn {
            grid.resample_counts(&idx, &mut counts);
        }
        Ok((p, counts))
    };
    let (pass1, redraws) = with_redraws(replicates, fit_one)?;
    diagnostics.redraws = redraws;

    let (corr, theta_star) = match correction {
        CorrectionKind::Cn => (Correction::sample_based(&grid, family, &fitted)?, None),
        CorrectionKind::Kn => {
            let mut totals = vec![0u64; grid.values().len()];
            let mut sums = [0.0f64; 2];
            for (_, (p, counts)) in &pass1 {
                for (t, &c) in totals.iter_mut().zip(counts) {
                    *t += c as u64;
                }
                sums[0] += p.0[0];
                sums[1] += p.0[1];
            }
            let b = replicates as f64;
            let theta_star = Params([sums[0] / b, sums[1] / b]);
            let avg = StepAverage::from_total_counts(grid.values(), &totals, n, replicates);
            (
                Correction::bootstrap_based(&avg, family, &theta_star)?,
                Some(theta_star),
            )
        }
    };
    let center = family.bind(corr.center())?;
    let plan: Vec<(u64, Params)> = pass1.into_iter().map(|(k, (p, _))| (k, p)).collect();

    // Pass 2: regenerate each resample from its stream and evaluate.
    let t_boot: Vec<f64> = plan
        .par_iter()
        .enumerate()
        .map(|(b, (k, p))| -> Result<f64> {
            let mut idx = Vec::with_capacity(n);
            spec.draw(n, seed, b, *k, &mut idx);
            let mut counts = Vec::new();
            grid.resample_counts(&idx, &mut counts);
            let boot = family.bind(p)?;
            let centering = Centering {
                heights: corr.heights(),
                center: &center,
                crossings: family.density_crossings(p, corr.center())?,
            };
            Ok(edf::sup_on_grid(grid.values(), &counts, n, &boot, Some(&centering)))
        })
        .collect::<Result<_>>()?;

    diagnostics.correction = Some(correction);
    diagnostics.scheme = Some(spec.scheme);
    Ok(GofResult {
        test,
        family: family.clone(),
        t_obs,
        p_value: p_value(t_obs, &t_boot),
        t_boot,
        fitted,
        theta_star,
        seed,
        diagnostics,
    })
}

/// Block bootstrap KS test for the marginal of a stationary series.
pub fn npbb_test(
    sample: &[f64],
    family: &Family,
    plan: &BootstrapPlan,
    correction: CorrectionKind,
) -> Result<GofResult> {
    check_inputs(sample, plan.replicates)?;
    if plan.scheme != Scheme::CircularBlock {
        return Err(Error::Config(
            "the block bootstrap test needs a circular-block plan".into(),
        ));
    }
    let (l, warnings) = plan.resolve_block_length(sample)?;
    if sample.len() < 2 * l {
        return Err(Error::InvalidBlockLength { l, n: sample.len() });
    }
    let diagnostics = Diagnostics {
        block_length: Some(l),
        warnings,
        ..Default::default()
    };
    resampling_test(
        TestKind::Npbb,
        sample,
        family,
        ResampleSpec {
            scheme: Scheme::CircularBlock,
            block_length: l,
        },
        plan.replicates,
        plan.seed,
        correction,
        diagnostics,
    )
}

/// Iid nonparametric bootstrap KS test with sample-based centering.
pub fn npb_test(sample: &[f64], family: &Family, replicates: usize, seed: u64) -> Result<GofResult> {
    check_inputs(sample, replicates)?;
    resampling_test(
        TestKind::Npb,
        sample,
        family,
        ResampleSpec {
            scheme: Scheme::Iid,
            block_length: 1,
        },
        replicates,
        seed,
        CorrectionKind::Cn,
        Diagnostics::default(),
    )
}

/// Simulates from `dist`, refits and returns the uncorrected KS statistic.
fn refit_statistic(family: &Family, values: &[f64]) -> Result<f64> {
    let p = family.fit_mle(values)?;
    let grid = SampleGrid::new(values)?;
    Ok(edf::sup_on_grid(
        grid.values(),
        grid.counts(),
        values.len(),
        &family.bind(&p)?,
        None,
    ))
}

#[allow(clippy::too_many_arguments)]
fn parametric_family_test(
    test: TestKind,
    sample: &[f64],
    family: &Family,
    replicates: usize,
    seed: u64,
    simulate: impl Fn(&Bound, &mut Stream) -> Vec<f64> + Sync,
    domain_tag: u64,
    mut diagnostics: Diagnostics,
) -> Result<GofResult> {
    let fitted = family.fit_mle(sample)?;
    let dist = family.bind(&fitted)?;
    let t_obs = edf::ks_statistic(sample, family, &fitted)?;
    let (stats, redraws) = with_redraws(replicates, |b, k| {
        let mut s = rng::stream(seed, &[domain_tag, b as u64, k]);
        let values = simulate(&dist, &mut s);
        refit_statistic(family, &values)
    })?;
    let t_boot: Vec<f64> = stats.into_iter().map(|(_, t)| t).collect();
    diagnostics.redraws = redraws;
    Ok(GofResult {
        test,
        family: family.clone(),
        t_obs,
        p_value: p_value(t_obs, &t_boot),
        t_boot,
        fitted,
        theta_star: None,
        seed,
        diagnostics,
    })
}

/// Parametric bootstrap: iid draws from the fitted law, each refitted.
pub fn pb_test(sample: &[f64], family: &Family, replicates: usize, seed: u64) -> Result<GofResult> {
    check_inputs(sample, replicates)?;
    let n = sample.len();
    parametric_family_test(
        TestKind::Pb,
        sample,
        family,
        replicates,
        seed,
        |dist, s| (0..n).map(|_| dist.quantile_open(s.sample::<f64, _>(Open01))).collect(),
        domain::PARAMETRIC,
        Diagnostics::default(),
    )
}

/// Lag-1 autocorrelation of the normal scores `Φ⁻¹(F(x_i; θ̂))`.
pub fn working_ar1_coefficient(sample: &[f64], family: &Family, fitted: &Params) -> Result<f64> {
    let dist = family.bind(fitted)?;
    let z: Vec<f64> = sample
        .iter()
        .map(|&x| special::std_normal_quantile(dist.cdf(x).clamp(1e-12, 1.0 - 1e-12)))
        .collect();
    let m = z.iter().sum::<f64>() / z.len() as f64;
    let denom: f64 = z.iter().map(|v| (v - m) * (v - m)).sum();
    if !(denom > 0.0) {
        return Err(Error::DegenerateSample("normal scores have zero variance".into()));
    }
    let num: f64 = z.windows(2).map(|w| (w[0] - m) * (w[1] - m)).sum();
    Ok(num / denom)
}

/// Semiparametric bootstrap with a Gaussian-copula AR(1) working model.
pub fn spb_test(sample: &[f64], family: &Family, replicates: usize, seed: u64) -> Result<GofResult> {
    check_inputs(sample, replicates)?;
    let n = sample.len();
    if n < 30 {
        return Err(Error::InvalidInput(format!(
            "semiparametric bootstrap needs at least 30 observations, got {n}"
        )));
    }
    let fitted = family.fit_mle(sample)?;
    let phi = working_ar1_coefficient(sample, family, &fitted)?;
    if phi.abs() >= 0.999 {
        return Err(Error::NearUnitRoot(phi));
    }
    let ar = Ar1Spec::calibrated(phi, n)?;
    let diagnostics = Diagnostics {
        working_phi: Some(phi),
        ..Default::default()
    };
    parametric_family_test(
        TestKind::Spb,
        sample,
        family,
        replicates,
        seed,
        |dist, s| {
            tsgen::gen_ar1(&ar, s)
                .into_iter()
                .map(|w| dist.quantile_open(special::std_normal_cdf(w).clamp(f64::MIN_POSITIVE, ONE_MINUS_ULP)))
                .collect()
        },
        domain::SEMIPARAMETRIC,
        diagnostics,
    )
}

/// Test configuration independent of the data.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TestConfig {
    pub kind: TestKind,
    pub correction: CorrectionKind,
    pub block_rule: resampling::BlockRule,
    pub replicates: usize,
}

impl TestConfig {
    pub fn run(&self, sample: &[f64], family: &Family, seed: u64) -> Result<GofResult> {
        match self.kind {
            TestKind::Npbb => {
                let plan = BootstrapPlan::circular(self.block_rule, self.replicates, seed)?;
                npbb_test(sample, family, &plan, self.correction)
            }
            TestKind::Npb => npb_test(sample, family, self.replicates, seed),
            TestKind::Pb => pb_test(sample, family, self.replicates, seed),
            TestKind::Spb => spb_test(sample, family, self.replicates, seed),
        }
    }
}
