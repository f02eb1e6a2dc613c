//! Parametric marginal families: distribution function, quantile function
//! and maximum-likelihood fitting.
//!
//! Parameter conventions (always two components):
//!
//! | family      | `params[0]` | `params[1]`      |
//! |-------------|-------------|------------------|
//! | Normal      | mean μ      | variance σ²      |
//! | Gamma       | shape α     | rate β           |
//! | Student-t   | location    | scale            |
//!
//! A [`Family::TruncatedBelow`] wrapper uses the parameters of its inner
//! family and restricts the support to `(cut, ∞)`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{self, beta_reg, gamma_lr, ln_gamma, ONE_MINUS_ULP};

/// Fitted or hypothesized parameter vector of a [`Family`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Params(pub [f64; 2]);

impl Params {
    pub fn new(a: f64, b: f64) -> Self {
        Params([a, b])
    }

    pub fn values(&self) -> [f64; 2] {
        self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Family {
    Normal,
    Gamma,
    /// Location-scale Student-t with fixed degrees of freedom.
    StudentT {
        nu: f64,
    },
    TruncatedBelow {
        inner: Box<Family>,
        cut: f64,
    },
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Family::Normal => write!(f, "normal"),
            Family::Gamma => write!(f, "gamma"),
            Family::StudentT { nu } => write!(f, "student_t(nu={nu})"),
            Family::TruncatedBelow { inner, cut } => write!(f, "{inner} truncated below {cut}"),
        }
    }
}

const T_EM_MAX_ITER: usize = 500;
const T_EM_TOL: f64 = 1e-9;
const GAMMA_NEWTON_MAX_ITER: usize = 100;
const GAMMA_NEWTON_TOL: f64 = 1e-10;

impl Family {
    pub fn student_t(nu: f64) -> Self {
        Family::StudentT { nu }
    }

    pub fn truncated_below(inner: Family, cut: f64) -> Self {
        Family::TruncatedBelow {
            inner: Box::new(inner),
            cut,
        }
    }

    fn name(&self) -> String {
        self.to_string()
    }

    fn invalid(&self, reason: impl Into<String>) -> Error {
        Error::InvalidParams {
            family: self.name(),
            reason: reason.into(),
        }
    }

    /// Checks `params` and precomputes the constants needed for repeated
    /// evaluation.
    pub fn bind(&self, params: &Params) -> Result<Bound> {
        let [a, b] = params.0;
        if !a.is_finite() || !b.is_finite() {
            return Err(self.invalid("parameters must be finite"));
        }
        let kind = match self {
            Family::Normal => {
                if b <= 0.0 {
                    return Err(self.invalid("variance must be positive"));
                }
                let sd = b.sqrt();
                BoundKind::Normal {
                    mean: a,
                    sd,
                    ln_sd: sd.ln(),
                }
            }
            Family::Gamma => {
                if a <= 0.0 || b <= 0.0 {
                    return Err(self.invalid("shape and rate must be positive"));
                }
                BoundKind::Gamma {
                    shape: a,
                    rate: b,
                    ln_norm: a * b.ln() - ln_gamma(a),
                }
            }
            Family::StudentT { nu } => {
                if !(nu.is_finite() && *nu > 0.0) {
                    return Err(self.invalid("degrees of freedom must be positive and finite"));
                }
                if b <= 0.0 {
                    return Err(self.invalid("scale must be positive"));
                }
                let nu = *nu;
                BoundKind::StudentT {
                    nu,
                    loc: a,
                    scale: b,
                    ln_norm: ln_gamma(0.5 * (nu + 1.0))
                        - ln_gamma(0.5 * nu)
                        - 0.5 * (nu * std::f64::consts::PI).ln()
                        - b.ln(),
                }
            }
            Family::TruncatedBelow { inner, cut } => {
                if !cut.is_finite() {
                    return Err(self.invalid("truncation point must be finite"));
                }
                let inner = inner.bind(params)?;
                let below = inner.cdf(*cut);
                let mass = 1.0 - below;
                if !(mass > 0.0) {
                    return Err(self.invalid("no probability mass above the truncation point"));
                }
                BoundKind::Truncated {
                    inner: Box::new(inner),
                    cut: *cut,
                    below,
                    mass,
                }
            }
        };
        Ok(Bound { params: *params, kind })
    }

    pub fn cdf(&self, params: &Params, x: f64) -> Result<f64> {
        Ok(self.bind(params)?.cdf(x))
    }

    pub fn quantile(&self, params: &Params, p: f64) -> Result<f64> {
        self.bind(params)?.quantile(p)
    }

    /// Lower end of the support.
    pub fn support_lower(&self) -> f64 {
        match self {
            Family::Normal | Family::StudentT { .. } => f64::NEG_INFINITY,
            Family::Gamma => 0.0,
            Family::TruncatedBelow { inner, cut } => inner.support_lower().max(*cut),
        }
    }

    /// Maximum-likelihood fit of the family to `sample`.
    pub fn fit_mle(&self, sample: &[f64]) -> Result<Params> {
        if sample.len() < 2 {
            return Err(Error::DegenerateSample(format!(
                "need at least 2 observations, got {}",
                sample.len()
            )));
        }
        if let Some(bad) = sample.iter().find(|v| !v.is_finite()) {
            return Err(Error::InvalidInput(format!("non-finite observation {bad}")));
        }
        let first = sample[0];
        if sample.iter().all(|&v| v == first) {
            return Err(Error::DegenerateSample(format!("all observations equal {first}")));
        }
        match self {
            Family::Normal => Ok(fit_normal(sample)),
            Family::Gamma => fit_gamma(sample),
            Family::StudentT { nu } => fit_student_t(*nu, sample),
            Family::TruncatedBelow { inner, cut } => fit_truncated(self, inner, *cut, sample),
        }
    }

    /// Points where the log-densities under `a` and `b` differ by exactly
    /// `delta`: solutions of `ln f(x; a) − ln f(x; b) = delta`, sorted.
    ///
    /// With `delta = 0` these are the stationary points of
    /// `F(x; b) − F(x; a)`. Every supported family has at most two.
    pub fn log_density_level_set(&self, a: &Params, b: &Params, delta: f64) -> Result<Vec<f64>> {
        let mut roots = match self {
            Family::Normal => {
                let [ma, va] = a.0;
                let [mb, vb] = b.0;
                // −ln(va/vb) − (x−ma)²/va + (x−mb)²/vb = 2δ
                let qa = 1.0 / vb - 1.0 / va;
                let qb = 2.0 * ma / va - 2.0 * mb / vb;
                let qc = -ma * ma / va + mb * mb / vb - (va / vb).ln() - 2.0 * delta;
                quadratic_roots(qa, qb, qc)
            }
            Family::StudentT { nu } => {
                let [ma, sa] = a.0;
                let [mb, sb] = b.0;
                let h = 0.5 * (nu + 1.0);
                // 1 + za²/ν = r (1 + zb²/ν)
                let r = (-(delta + (sa / sb).ln()) / h).exp();
                let ka = 1.0 / (nu * sa * sa);
                let kb = r / (nu * sb * sb);
                quadratic_roots(
                    ka - kb,
                    -2.0 * ma * ka + 2.0 * mb * kb,
                    1.0 - r + ma * ma * ka - mb * mb * kb,
                )
            }
            Family::Gamma => {
                let [aa, ba] = a.0;
                let [ab, bb] = b.0;
                let c0 = aa * ba.ln() - ln_gamma(aa) - ab * bb.ln() + ln_gamma(ab) - delta;
                gamma_level_roots(c0, aa - ab, ba - bb)
            }
            Family::TruncatedBelow { inner, cut } => {
                let ia = inner.bind(a)?;
                let ib = inner.bind(b)?;
                let mass_a = 1.0 - ia.cdf(*cut);
                let mass_b = 1.0 - ib.cdf(*cut);
                let shifted = delta + mass_a.ln() - mass_b.ln();
                let mut r = inner.log_density_level_set(a, b, shifted)?;
                r.retain(|&x| x > *cut);
                r
            }
        };
        roots.retain(|x| x.is_finite() && *x > self.support_lower());
        roots.sort_by(f64::total_cmp);
        roots.dedup();
        Ok(roots)
    }

    /// Stationary points of `F(x; b) − F(x; a)` (where the two densities
    /// cross). Empty when the parameters coincide.
    pub fn density_crossings(&self, a: &Params, b: &Params) -> Result<Vec<f64>> {
        if a == b {
            return Ok(Vec::new());
        }
        self.log_density_level_set(a, b, 0.0)
    }
}

/// Real roots of `a x² + b x + c`, treating a vanishing leading coefficient
/// as the linear case.
fn quadratic_roots(a: f64, b: f64, c: f64) -> Vec<f64> {
    let scale = a.abs().max(b.abs()).max(c.abs());
    if scale == 0.0 {
        return Vec::new();
    }
    if a.abs() <= 1e-14 * scale {
        return if b != 0.0 { vec![-c / b] } else { Vec::new() };
    }
    let disc = b * b - 4.0 * a * c;
    if disc < 0.0 {
        return Vec::new();
    }
    let q = -0.5 * (b + b.signum() * disc.sqrt());
    if q == 0.0 {
        return vec![0.0];
    }
    vec![q / a, c / q]
}

/// Positive roots of `c0 + a1 ln x − b1 x`.
fn gamma_level_roots(c0: f64, a1: f64, b1: f64) -> Vec<f64> {
    // Work in t = ln x where h(t) = c0 + a1 t − b1 eᵗ has at most one
    // stationary point.
    let h = |t: f64| c0 + a1 * t - b1 * t.exp();
    const T_LO: f64 = -700.0;
    const T_HI: f64 = 700.0;
    if a1 == 0.0 {
        if b1 == 0.0 {
            return Vec::new();
        }
        let x = c0 / b1;
        return if x > 0.0 { vec![x] } else { Vec::new() };
    }
    let mut pieces = vec![T_LO];
    if b1 != 0.0 && a1 / b1 > 0.0 {
        let ts = (a1 / b1).ln();
        if ts > T_LO && ts < T_HI {
            pieces.push(ts);
        }
    }
    pieces.push(T_HI);
    let mut roots = Vec::new();
    for w in pieces.windows(2) {
        if let Some(t) = bisect(&h, w[0], w[1]) {
            roots.push(t.exp());
        }
    }
    roots
}

/// Root of a monotone function on `[lo, hi]` if it changes sign there.
fn bisect(f: &impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> Option<f64> {
    let mut flo = f(lo);
    let fhi = f(hi);
    if flo == 0.0 {
        return Some(lo);
    }
    if fhi == 0.0 {
        return Some(hi);
    }
    if !(flo.signum() != fhi.signum()) || flo.is_nan() || fhi.is_nan() {
        return None;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let fm = f(mid);
        if fm == 0.0 {
            return Some(mid);
        }
        if fm.signum() == flo.signum() {
            lo = mid;
            flo = fm;
        } else {
            hi = mid;
        }
    }
    Some(0.5 * (lo + hi))
}

/// A family bound to validated parameters.
#[derive(Clone, Debug)]
pub struct Bound {
    params: Params,
    kind: BoundKind,
}

#[derive(Clone, Debug)]
enum BoundKind {
    Normal {
        mean: f64,
        sd: f64,
        ln_sd: f64,
    },
    Gamma {
        shape: f64,
        rate: f64,
        ln_norm: f64,
    },
    StudentT {
        nu: f64,
        loc: f64,
        scale: f64,
        ln_norm: f64,
    },
    Truncated {
        inner: Box<Bound>,
        cut: f64,
        below: f64,
        mass: f64,
    },
}

fn std_t_cdf(nu: f64, z: f64) -> f64 {
    let x = nu / (nu + z * z);
    let tail = 0.5 * beta_reg(0.5 * nu, 0.5, x);
    if z <= 0.0 {
        tail
    } else {
        1.0 - tail
    }
}

impl Bound {
    pub fn params(&self) -> &Params {
        &self.params
    }

    #[inline]
    pub fn cdf(&self, x: f64) -> f64 {
        match &self.kind {
            BoundKind::Normal { mean, sd, .. } => special::std_normal_cdf((x - mean) / sd),
            BoundKind::Gamma { shape, rate, .. } => {
                if x <= 0.0 {
                    0.0
                } else if x.is_infinite() {
                    1.0
                } else {
                    gamma_lr(*shape, rate * x)
                }
            }
            BoundKind::StudentT { nu, loc, scale, .. } => {
                if x.is_infinite() {
                    if x > 0.0 {
                        1.0
                    } else {
                        0.0
                    }
                } else {
                    std_t_cdf(*nu, (x - loc) / scale)
                }
            }
            BoundKind::Truncated {
                inner,
                cut,
                below,
                mass,
            } => {
                if x <= *cut {
                    0.0
                } else {
                    ((inner.cdf(x) - below) / mass).clamp(0.0, 1.0)
                }
            }
        }
    }

    /// Log-density; `-inf` outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        match &self.kind {
            BoundKind::Normal { mean, sd, ln_sd } => special::std_normal_ln_pdf((x - mean) / sd) - ln_sd,
            BoundKind::Gamma { shape, rate, ln_norm } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    ln_norm + (shape - 1.0) * x.ln() - rate * x
                }
            }
            BoundKind::StudentT {
                nu,
                loc,
                scale,
                ln_norm,
            } => {
                let z = (x - loc) / scale;
                ln_norm - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p()
            }
            BoundKind::Truncated { inner, cut, mass, .. } => {
                if x <= *cut {
                    f64::NEG_INFINITY
                } else {
                    inner.ln_pdf(x) - mass.ln()
                }
            }
        }
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::Domain(format!("quantile probability {p} not in (0, 1)")));
        }
        Ok(self.quantile_open(p))
    }

    /// Quantile for `p` already known to lie in (0, 1).
    pub(crate) fn quantile_open(&self, p: f64) -> f64 {
        match &self.kind {
            BoundKind::Normal { mean, sd, .. } => mean + sd * special::std_normal_quantile(p),
            BoundKind::Gamma { shape, rate, .. } => gamma_quantile_std(*shape, p) / rate,
            BoundKind::StudentT { nu, loc, scale, .. } => loc + scale * t_quantile_std(*nu, p),
            BoundKind::Truncated { inner, below, mass, .. } => {
                let q = (below + p * mass).min(ONE_MINUS_ULP);
                inner.quantile_open(q)
            }
        }
    }
}

/// Safeguarded Newton iteration for `cdf(x) = p` with the bracket `[lo, hi]`
/// known to contain the root.
fn invert_cdf(
    cdf: impl Fn(f64) -> f64,
    ln_pdf: impl Fn(f64) -> f64,
    p: f64,
    mut x: f64,
    mut lo: f64,
    mut hi: f64,
) -> f64 {
    for _ in 0..200 {
        let f = cdf(x) - p;
        if f == 0.0 {
            return x;
        }
        if f < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        let dens = ln_pdf(x).exp();
        let mut next = if dens > 0.0 { x - f / dens } else { f64::NAN };
        if !(next > lo && next < hi) {
            next = if lo.is_finite() && hi.is_finite() {
                0.5 * (lo + hi)
            } else if lo.is_finite() {
                lo + 2.0 * (x - lo).abs().max(1.0)
            } else {
                hi - 2.0 * (hi - x).abs().max(1.0)
            };
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) {
            return next;
        }
        x = next;
    }
    x
}

fn gamma_quantile_std(shape: f64, p: f64) -> f64 {
    let ln_norm = -ln_gamma(shape);
    let z = special::std_normal_quantile(p);
    // Wilson–Hilferty start, falling back to the small-x series.
    let c = 1.0 / (9.0 * shape);
    let mut x0 = shape * (1.0 - c + z * c.sqrt()).powi(3);
    if !(x0 > 0.0) {
        x0 = ((p.ln() + ln_gamma(shape + 1.0)) / shape).exp();
    }
    let x0 = x0.max(1e-300);
    invert_cdf(
        |x| if x <= 0.0 { 0.0 } else { gamma_lr(shape, x) },
        |x| {
            if x <= 0.0 {
                f64::NEG_INFINITY
            } else {
                ln_norm + (shape - 1.0) * x.ln() - x
            }
        },
        p,
        x0,
        0.0,
        f64::INFINITY,
    )
}

fn t_quantile_std(nu: f64, p: f64) -> f64 {
    if nu == 1.0 {
        return (std::f64::consts::PI * (p - 0.5)).tan();
    }
    let ln_norm = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - 0.5 * (nu * std::f64::consts::PI).ln();
    let x0 = special::std_normal_quantile(p);
    invert_cdf(
        |z| std_t_cdf(nu, z),
        |z| ln_norm - 0.5 * (nu + 1.0) * (z * z / nu).ln_1p(),
        p,
        x0,
        f64::NEG_INFINITY,
        f64::INFINITY,
    )
}

fn mean(sample: &[f64]) -> f64 {
    sample.iter().sum::<f64>() / sample.len() as f64
}

fn fit_normal(sample: &[f64]) -> Params {
    let m = mean(sample);
    let ss: f64 = sample.iter().map(|x| (x - m) * (x - m)).sum();
    Params([m, ss / sample.len() as f64])
}

fn fit_gamma(sample: &[f64]) -> Result<Params> {
    if let Some(&bad) = sample.iter().find(|&&x| x <= 0.0) {
        return Err(Error::Support {
            family: "gamma".into(),
            value: bad,
        });
    }
    let n = sample.len() as f64;
    let m = mean(sample);
    let mean_ln = sample.iter().map(|x| x.ln()).sum::<f64>() / n;
    let s = m.ln() - mean_ln;
    if !(s > 0.0) {
        return Err(Error::DegenerateSample(
            "gamma likelihood has no interior maximum".into(),
        ));
    }
    let var = sample.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / n;
    // ln α − ψ(α) = s, started from the method-of-moments shape.
    let mut shape = m * m / var;
    let mut trace = vec![shape];
    for _ in 0..GAMMA_NEWTON_MAX_ITER {
        let f = shape.ln() - special::digamma(shape) - s;
        let df = 1.0 / shape - special::trigamma(shape);
        let mut next = shape - f / df;
        if !(next > 0.0) {
            next = 0.5 * shape;
        }
        trace.push(next);
        let step = (next - shape).abs();
        shape = next;
        if step <= GAMMA_NEWTON_TOL * shape {
            return Ok(Params([shape, shape / m]));
        }
    }
    Err(Error::Convergence {
        what: "gamma shape Newton iteration".into(),
        iterations: GAMMA_NEWTON_MAX_ITER,
        trace,
    })
}

fn median(sample: &[f64]) -> f64 {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    let k = v.len();
    if k % 2 == 1 {
        v[k / 2]
    } else {
        0.5 * (v[k / 2 - 1] + v[k / 2])
    }
}

fn fit_student_t(nu: f64, sample: &[f64]) -> Result<Params> {
    if !(nu.is_finite() && nu > 0.0) {
        return Err(Error::InvalidParams {
            family: "student_t".into(),
            reason: format!("degrees of freedom {nu} must be positive and finite"),
        });
    }
    let n = sample.len() as f64;
    let mut loc = median(sample);
    let mut abs_dev: Vec<f64> = sample.iter().map(|x| (x - loc).abs()).collect();
    abs_dev.sort_by(f64::total_cmp);
    let mut scale = 1.4826 * median(&abs_dev);
    if !(scale > 0.0) {
        scale = fit_normal(sample).0[1].sqrt();
    }
    let mut trace = vec![scale];
    for _ in 0..T_EM_MAX_ITER {
        let mut sw = 0.0;
        let mut swx = 0.0;
        for &x in sample {
            let z = (x - loc) / scale;
            let w = (nu + 1.0) / (nu + z * z);
            sw += w;
            swx += w * x;
        }
        let next_loc = swx / sw;
        let mut ss = 0.0;
        for &x in sample {
            let z = (x - loc) / scale;
            let w = (nu + 1.0) / (nu + z * z);
            ss += w * (x - next_loc) * (x - next_loc);
        }
        let next_scale = (ss / n).sqrt();
        let change = (next_loc - loc).abs().max((next_scale - scale).abs());
        loc = next_loc;
        scale = next_scale;
        trace.push(scale);
        if !(scale > 0.0) {
            return Err(Error::DegenerateSample("student-t scale collapsed to zero".into()));
        }
        if change <= T_EM_TOL * scale {
            return Ok(Params([loc, scale]));
        }
    }
    Err(Error::Convergence {
        what: "student-t location-scale EM".into(),
        iterations: T_EM_MAX_ITER,
        trace,
    })
}

/// Truncated likelihood maximized by Nelder–Mead over the inner family's
/// parameters, with positive components on the log scale.
fn fit_truncated(family: &Family, inner: &Family, cut: f64, sample: &[f64]) -> Result<Params> {
    if let Some(&bad) = sample.iter().find(|&&x| x <= cut) {
        return Err(Error::Support {
            family: family.name(),
            value: bad,
        });
    }
    let start = inner.fit_mle(sample)?;
    let log_first = matches!(inner, Family::Gamma);
    let to_params = |u: [f64; 2]| {
        if log_first {
            Params([u[0].exp(), u[1].exp()])
        } else {
            Params([u[0], u[1].exp()])
        }
    };
    let objective = |u: [f64; 2]| -> f64 {
        match family.bind(&to_params(u)) {
            Ok(b) => -sample.iter().map(|&x| b.ln_pdf(x)).sum::<f64>(),
            Err(_) => f64::INFINITY,
        }
    };
    let s = start.0;
    let u0 = if log_first {
        [s[0].ln(), s[1].ln()]
    } else {
        [s[0], s[1].ln()]
    };
    let u = nelder_mead(objective, u0, 2000, 1e-12)?;
    Ok(to_params(u))
}

fn nelder_mead(f: impl Fn([f64; 2]) -> f64, start: [f64; 2], max_iter: usize, tol: f64) -> Result<[f64; 2]> {
    let step = |v: f64| if v.abs() > 1e-3 { 0.1 * v.abs() } else { 0.1 };
    let mut simplex = [
        start,
        [start[0] + step(start[0]), start[1]],
        [start[0], start[1] + step(start[1])],
    ];
    let mut vals = simplex.map(&f);
    let mut trace = Vec::new();
    let comb = |a: [f64; 2], b: [f64; 2], t: f64| [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
    for _ in 0..max_iter {
        let mut order = [0usize, 1, 2];
        order.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
        simplex = order.map(|i| simplex[i]);
        vals = order.map(|i| vals[i]);
        trace.push(vals[0]);
        if (vals[2] - vals[0]).abs() <= tol * (1.0 + vals[0].abs()) {
            return Ok(simplex[0]);
        }
        let centroid = comb(simplex[0], simplex[1], 0.5);
        let reflected = comb(centroid, simplex[2], -1.0);
        let fr = f(reflected);
        if fr < vals[0] {
            let expanded = comb(centroid, simplex[2], -2.0);
            let fe = f(expanded);
            if fe < fr {
                simplex[2] = expanded;
                vals[2] = fe;
            } else {
                simplex[2] = reflected;
                vals[2] = fr;
            }
        } else if fr < vals[1] {
            simplex[2] = reflected;
            vals[2] = fr;
        } else {
            let contracted = comb(centroid, simplex[2], 0.5);
            let fc = f(contracted);
            if fc < vals[2] {
                simplex[2] = contracted;
                vals[2] = fc;
            } else {
                for i in 1..3 {
                    simplex[i] = comb(simplex[0], simplex[i], 0.5);
                    vals[i] = f(simplex[i]);
                }
            }
        }
    }
    Err(Error::Convergence {
        what: "truncated-likelihood Nelder-Mead".into(),
        iterations: max_iter,
        trace,
    })
}

/// JSON form of a family together with its parameters:
/// `{"family": "normal", "params": [8, 8]}`, `{"family": "student_t", "params": [0, 1], "nu": 5}`,
/// `{"family": "truncated_below", "inner": "normal", "cut": 0, "params": [8, 8]}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FamilySpec {
    pub family: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<Params>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inner_nu: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cut: Option<f64>,
}

fn parse_simple(name: &str, nu: Option<f64>) -> Result<Family> {
    match name.to_ascii_lowercase().as_str() {
        "normal" | "gaussian" => Ok(Family::Normal),
        "gamma" => Ok(Family::Gamma),
        "student_t" | "t" | "studentt" => {
            let nu = nu.ok_or_else(|| Error::Config("student_t requires \"nu\"".into()))?;
            Ok(Family::StudentT { nu })
        }
        other => Err(Error::Config(format!("unknown family {other:?}"))),
    }
}

impl FamilySpec {
    pub fn new(family: &Family, params: Option<Params>) -> Self {
        let mut spec = FamilySpec {
            family: String::new(),
            params,
            nu: None,
            inner: None,
            inner_nu: None,
            cut: None,
        };
        match family {
            Family::Normal => spec.family = "normal".into(),
            Family::Gamma => spec.family = "gamma".into(),
            Family::StudentT { nu } => {
                spec.family = "student_t".into();
                spec.nu = Some(*nu);
            }
            Family::TruncatedBelow { inner, cut } => {
                let inner_spec = FamilySpec::new(inner, None);
                spec.family = "truncated_below".into();
                spec.inner = Some(inner_spec.family);
                spec.inner_nu = inner_spec.nu;
                spec.cut = Some(*cut);
            }
        }
        spec
    }

    pub fn family(&self) -> Result<Family> {
        if self.family.eq_ignore_ascii_case("truncated_below") {
            let inner = self
                .inner
                .as_deref()
                .ok_or_else(|| Error::Config("truncated_below requires \"inner\"".into()))?;
            let cut = self
                .cut
                .ok_or_else(|| Error::Config("truncated_below requires \"cut\"".into()))?;
            return Ok(Family::truncated_below(parse_simple(inner, self.inner_nu)?, cut));
        }
        parse_simple(&self.family, self.nu)
    }

    /// Family and parameters, validated.
    pub fn resolve(&self) -> Result<(Family, Params)> {
        let family = self.family()?;
        let params = self
            .params
            .ok_or_else(|| Error::Config(format!("family {:?} requires \"params\"", self.family)))?;
        family.bind(&params)?;
        Ok((family, params))
    }
}

impl Serialize for Family {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        FamilySpec::new(self, None).serialize(s)
    }
}

impl<'de> Deserialize<'de> for Family {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let spec = FamilySpec::deserialize(d)?;
        spec.family().map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn n88() -> (Family, Params) {
        (Family::Normal, Params([8.0, 8.0]))
    }

    #[test]
    fn normal_cdf_examples() {
        let (f, p) = n88();
        assert_eq!(f.cdf(&p, 8.0).unwrap(), 0.5);
        // Φ(−√8) from an independent high-precision evaluation
        let expected = 0.002_338_867_490_523_633;
        let got = f.cdf(&p, 0.0).unwrap();
        assert!((got - expected).abs() < 1e-15, "{got:e}");
    }

    #[test]
    fn gamma_cdf_support_boundary() {
        let g = Family::Gamma;
        let p = Params([8.0, 1.0]);
        assert_eq!(g.cdf(&p, 0.0).unwrap(), 0.0);
        assert_eq!(g.cdf(&p, -3.0).unwrap(), 0.0);
        assert!(g.cdf(&p, 1e-12).unwrap() < 1e-90);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(matches!(
            Family::Normal.cdf(&Params([0.0, 0.0]), 1.0),
            Err(Error::InvalidParams { .. })
        ));
        assert!(Family::Gamma.bind(&Params([-1.0, 1.0])).is_err());
        assert!(Family::student_t(0.0).bind(&Params([0.0, 1.0])).is_err());
        assert!(Family::student_t(3.0).bind(&Params([0.0, -1.0])).is_err());
        assert!(Family::Normal.bind(&Params([f64::NAN, 1.0])).is_err());
    }

    #[test]
    fn quantile_domain() {
        let (f, p) = n88();
        for bad in [0.0, 1.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(f.quantile(&p, bad), Err(Error::Domain(_))));
        }
        assert!((f.quantile(&p, 0.5).unwrap() - 8.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_quantile_identity() {
        let (inner, p) = n88();
        let t = Family::truncated_below(inner.clone(), 0.0);
        let f0 = inner.cdf(&p, 0.0).unwrap();
        for &q in &[0.01, 0.3, 0.5, 0.9, 0.999] {
            let x = t.quantile(&p, q).unwrap();
            let expected = inner.quantile(&p, f0 + q * (1.0 - f0)).unwrap();
            assert_eq!(x, expected);
            assert!((t.cdf(&p, x).unwrap() - q).abs() < 1e-12);
        }
        assert_eq!(t.cdf(&p, 0.0).unwrap(), 0.0);
        assert!((t.cdf(&p, 1e3).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn gamma_median_matches_cdf() {
        let g = Family::Gamma;
        let p = Params([8.0, 1.0]);
        let m = g.quantile(&p, 0.5).unwrap();
        assert!((g.cdf(&p, m).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn normal_fit_closed_form() {
        let p = Family::Normal.fit_mle(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(p, Params([2.5, 1.25]));
    }

    #[test]
    fn student_t_symmetric_fit() {
        let p = Family::student_t(5.0).fit_mle(&[-1.0, 0.0, 1.0]).unwrap();
        assert!(p.0[0].abs() < 1e-12);
        assert!(p.0[1] > 0.0);
    }

    #[test]
    fn fit_errors() {
        assert!(matches!(
            Family::Normal.fit_mle(&[3.0, 3.0, 3.0]),
            Err(Error::DegenerateSample(_))
        ));
        assert!(matches!(
            Family::Normal.fit_mle(&[1.0]),
            Err(Error::DegenerateSample(_))
        ));
        assert!(matches!(
            Family::Gamma.fit_mle(&[1.0, 2.0, 0.0]),
            Err(Error::Support { .. })
        ));
        assert!(matches!(
            Family::Gamma.fit_mle(&[1.0, -2.0, 3.0]),
            Err(Error::Support { .. })
        ));
    }

    #[test]
    fn normal_crossings_are_density_equalities() {
        let f = Family::Normal;
        let a = Params([0.0, 1.0]);
        let b = Params([0.3, 2.0]);
        let xs = f.density_crossings(&a, &b).unwrap();
        assert_eq!(xs.len(), 2);
        let (ba, bb) = (f.bind(&a).unwrap(), f.bind(&b).unwrap());
        for x in xs {
            assert!((ba.ln_pdf(x) - bb.ln_pdf(x)).abs() < 1e-12);
        }
        // equal variances: single crossing at the midpoint
        let xs = f.density_crossings(&Params([0.0, 1.0]), &Params([1.0, 1.0])).unwrap();
        assert_eq!(xs.len(), 1);
        assert!((xs[0] - 0.5).abs() < 1e-12);
        assert!(f.density_crossings(&a, &a).unwrap().is_empty());
    }

    #[test]
    fn gamma_and_t_crossings() {
        let cases = [
            (Family::Gamma, Params([8.0, 1.0]), Params([7.5, 0.9])),
            (Family::Gamma, Params([2.0, 1.0]), Params([2.0, 1.3])),
            (Family::student_t(3.0), Params([0.0, 1.0]), Params([0.2, 1.4])),
            (
                Family::truncated_below(Family::Normal, 0.0),
                Params([8.0, 8.0]),
                Params([7.0, 10.0]),
            ),
        ];
        for (f, a, b) in cases {
            let xs = f.density_crossings(&a, &b).unwrap();
            assert!(!xs.is_empty(), "{f}");
            let (ba, bb) = (f.bind(&a).unwrap(), f.bind(&b).unwrap());
            for x in xs {
                let d = ba.ln_pdf(x) - bb.ln_pdf(x);
                assert!(d.abs() < 1e-9, "{f}: {x} {d}");
            }
        }
    }

    #[test]
    fn family_json_round_trip() {
        let fams = [
            Family::Normal,
            Family::Gamma,
            Family::student_t(5.0),
            Family::truncated_below(Family::Normal, 0.0),
        ];
        for f in fams {
            let s = serde_json::to_string(&f).unwrap();
            let back: Family = serde_json::from_str(&s).unwrap();
            assert_eq!(back, f);
        }
        let spec: FamilySpec = serde_json::from_str(r#"{"family":"student_t","params":[0,1],"nu":5}"#).unwrap();
        let (f, p) = spec.resolve().unwrap();
        assert_eq!(f, Family::student_t(5.0));
        assert_eq!(p, Params([0.0, 1.0]));
        assert!(serde_json::from_str::<Family>(r#"{"family":"cauchy"}"#).is_err());
    }
}
