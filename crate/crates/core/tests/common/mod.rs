//! Straight-line reference implementations used as test oracles.
//!
//! Apart from the `cases` harness, nothing here calls into the library:
//! special functions, fits, resampling and suprema are written out again
//! from their definitions, trading speed for transparency.

#![allow(dead_code)]

pub mod cases;

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const RESAMPLE: u64 = 1;
pub const PARAMETRIC: u64 = 2;

// ---------------------------------------------------------------- seeds

fn mix(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

pub fn seeded(master: u64, path: &[u64]) -> ChaCha8Rng {
    let mut h = mix(master);
    for &p in path {
        h = mix(h ^ mix(p));
    }
    ChaCha8Rng::seed_from_u64(h)
}

// ---------------------------------------------------------------- special functions

/// erfc via the Maclaurin series below 1.5 and a Lentz continued fraction above.
pub fn erfc(x: f64) -> f64 {
    if x < 0.0 {
        return 2.0 - erfc(-x);
    }
    if x < 1.5 {
        // erf x = 2/√π e^{-x²} Σ 2^k x^{2k+1} / (1·3·…·(2k+1))
        let mut term = x;
        let mut sum = x;
        let mut k = 0.0;
        while term.abs() > 1e-17 * sum.abs() {
            k += 1.0;
            term *= 2.0 * x * x / (2.0 * k + 1.0);
            sum += term;
        }
        return 1.0 - 2.0 / std::f64::consts::PI.sqrt() * (-x * x).exp() * sum;
    }
    // erfc x = e^{-x²}/√π · 1/(x + (1/2)/(x + 1/(x + (3/2)/(x + …))))
    let tiny = 1e-300;
    let mut f = x;
    let mut c = x;
    let mut d = 0.0;
    for k in 1..500 {
        let a = k as f64 / 2.0;
        d = x + a * d;
        d = if d.abs() < tiny { tiny } else { d };
        c = x + a / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = c * d;
        f *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / f
}

pub fn phi(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

/// ln Γ by shifting to x ≥ 15 and applying Stirling's series.
pub fn ln_gamma(mut x: f64) -> f64 {
    let mut shift = 0.0;
    while x < 15.0 {
        shift -= x.ln();
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    let series =
        inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 * (1.0 / 1680.0 - inv2 / 1188.0))));
    shift + (x - 0.5) * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI).ln() + series
}

pub fn digamma(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 15.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv2 = 1.0 / (x * x);
    acc + x.ln() - 0.5 / x - inv2 * (1.0 / 12.0 - inv2 * (1.0 / 120.0 - inv2 * (1.0 / 252.0 - inv2 / 240.0)))
}

/// Regularized lower incomplete gamma P(a, x): power series below a + 1,
/// Legendre continued fraction above.
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    let log_prefix = a * x.ln() - x - ln_gamma(a);
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut k = 0.0;
        while term > 1e-18 * sum {
            k += 1.0;
            term *= x / (a + k);
            sum += term;
        }
        return (log_prefix.exp() * sum).min(1.0);
    }
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..1000 {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        d = if d.abs() < tiny { tiny } else { d };
        c = b + an / c;
        c = if c.abs() < tiny { tiny } else { c };
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            break;
        }
    }
    1.0 - log_prefix.exp() * h
}

// ---------------------------------------------------------------- families

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Fam {
    /// (mean, variance)
    Normal,
    /// (shape, rate)
    Gamma,
}

pub fn cdf(f: Fam, p: [f64; 2], x: f64) -> f64 {
    match f {
        Fam::Normal => phi((x - p[0]) / p[1].sqrt()),
        Fam::Gamma => gamma_p(p[0], p[1] * x),
    }
}

pub fn bisect(mut lo: f64, mut hi: f64, g: impl Fn(f64) -> f64) -> f64 {
    // g(lo) < 0 < g(hi)
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

pub fn quantile(f: Fam, p: [f64; 2], u: f64) -> f64 {
    match f {
        Fam::Normal => {
            let sd = p[1].sqrt();
            bisect(p[0] - 40.0 * sd, p[0] + 40.0 * sd, |x| cdf(f, p, x) - u)
        }
        Fam::Gamma => bisect(0.0, (p[0] + 40.0 * p[0].sqrt() + 40.0) / p[1], |x| cdf(f, p, x) - u),
    }
}

pub fn fit(f: Fam, xs: &[f64]) -> [f64; 2] {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    match f {
        Fam::Normal => [mean, xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n],
        Fam::Gamma => {
            // ln α − ψ(α) = ln x̄ − mean(ln x), decreasing in α
            let s = mean.ln() - xs.iter().map(|x| x.ln()).sum::<f64>() / n;
            let g = |a: f64| s - (a.ln() - digamma(a));
            let mut hi = 1.0;
            while g(hi) < 0.0 {
                hi *= 2.0;
            }
            let alpha = bisect(1e-8, hi, g);
            [alpha, alpha / mean]
        }
    }
}

pub fn gamma_loglik(xs: &[f64], a: f64, b: f64) -> f64 {
    let n = xs.len() as f64;
    n * (a * b.ln() - ln_gamma(a)) + (a - 1.0) * xs.iter().map(|x| x.ln()).sum::<f64>() - b * xs.iter().sum::<f64>()
}

// ---------------------------------------------------------------- suprema

fn ecdf_right(xs: &[f64], x: f64) -> f64 {
    xs.iter().filter(|&&v| v <= x).count() as f64 / xs.len() as f64
}

fn ecdf_left(xs: &[f64], x: f64) -> f64 {
    xs.iter().filter(|&&v| v < x).count() as f64 / xs.len() as f64
}

/// Brute-force `sup_x |h(x)|` for `h = step(x) + cont(x)` where `step` is a
/// right-continuous step function with jumps in `jumps` (given by its left
/// and right values) and `cont` is continuous. Every jump is checked at both
/// limits; each gap between jumps (and the two tails) is scanned on a dense
/// grid and every local extremum of `|h|` is refined by golden section.
pub fn brute_sup(
    jumps: &[f64],
    step_left: impl Fn(f64) -> f64,
    step_right: impl Fn(f64) -> f64,
    cont: impl Fn(f64) -> f64,
    tail: f64,
    points_per_gap: usize,
) -> f64 {
    let mut js: Vec<f64> = jumps.to_vec();
    js.sort_by(f64::total_cmp);
    js.dedup();
    let mut best = 0.0f64;
    for &j in &js {
        best = best
            .max((step_left(j) + cont(j)).abs())
            .max((step_right(j) + cont(j)).abs());
    }
    let mut edges = vec![js[0] - tail];
    edges.extend_from_slice(&js);
    edges.push(js[js.len() - 1] + tail);
    for w in edges.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b <= a {
            continue;
        }
        // the step part is constant on the open gap
        let level = if a < js[0] { step_left(js[0]) } else { step_right(a) };
        let h = |x: f64| (level + cont(x)).abs();
        let m = points_per_gap;
        let xs: Vec<f64> = (0..=m).map(|i| a + (b - a) * i as f64 / m as f64).collect();
        let vals: Vec<f64> = xs.iter().map(|&x| h(x)).collect();
        for v in &vals {
            best = best.max(*v);
        }
        for i in 1..m {
            if vals[i] >= vals[i - 1] && vals[i] >= vals[i + 1] {
                best = best.max(golden_max(&h, xs[i - 1], xs[i + 1]));
            }
        }
    }
    best
}

fn golden_max(h: &impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let r = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - r * (b - a);
    let mut d = a + r * (b - a);
    let (mut fc, mut fd) = (h(c), h(d));
    for _ in 0..120 {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - r * (b - a);
            fc = h(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + r * (b - a);
            fd = h(d);
        }
    }
    fc.max(fd)
}

/// Spread of the hypothesized law used to size tails and scan gaps.
pub fn scale_of(f: Fam, p: [f64; 2]) -> f64 {
    match f {
        Fam::Normal => p[1].sqrt(),
        Fam::Gamma => p[0].sqrt() / p[1],
    }
}

/// `√n sup |F_n − F(·; p)|` by brute force.
pub fn ks_brute(xs: &[f64], f: Fam, p: [f64; 2]) -> f64 {
    let n = xs.len() as f64;
    let tail = 12.0 * scale_of(f, p);
    n.sqrt()
        * brute_sup(
            xs,
            |x| ecdf_left(xs, x),
            |x| ecdf_right(xs, x),
            |x| -cdf(f, p, x),
            tail,
            50,
        )
}

/// Centering term as a step function on `grid` (right-continuous `heights`)
/// minus `F(·; center)`.
pub struct Centering {
    pub grid: Vec<f64>,
    pub heights: Vec<f64>,
    pub center: [f64; 2],
}

impl Centering {
    fn step(&self, x: f64, inclusive: bool) -> f64 {
        let k = self
            .grid
            .iter()
            .filter(|&&g| if inclusive { g <= x } else { g < x })
            .count();
        if k == 0 {
            0.0
        } else {
            self.heights[k - 1]
        }
    }
}

/// `√n sup |(F_b − F(·; θ_b)) − (S − F(·; θ_c))|` by brute force.
pub fn corrected_brute(boot: &[f64], f: Fam, theta_b: [f64; 2], c: &Centering, points_per_gap: usize) -> f64 {
    let n = boot.len() as f64;
    let mut jumps = boot.to_vec();
    jumps.extend_from_slice(&c.grid);
    let tail = 12.0 * scale_of(f, theta_b).max(scale_of(f, c.center));
    let sup = brute_sup(
        &jumps,
        |x| ecdf_left(boot, x) - c.step(x, false),
        |x| ecdf_right(boot, x) - c.step(x, true),
        |x| cdf(f, c.center, x) - cdf(f, theta_b, x),
        tail,
        points_per_gap,
    );
    n.sqrt() * sup
}

// ---------------------------------------------------------------- tests

pub struct Outcome {
    pub t_obs: f64,
    pub t_boot: Vec<f64>,
    pub p_value: f64,
}

fn p_of(t_obs: f64, t_boot: &[f64]) -> f64 {
    t_boot.iter().filter(|&&t| t > t_obs).count() as f64 / t_boot.len() as f64
}

fn block_indices(n: usize, l: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let mut out = Vec::new();
    while out.len() < n {
        let start = rng.random_range(0..n as u32) as usize;
        for t in 0..l {
            if out.len() == n {
                break;
            }
            out.push((start + t) % n);
        }
    }
    out
}

fn distinct_sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    v.dedup();
    v
}

/// Block bootstrap test with `K_n` (`use_kn`) or `C_n` centering; `l = 1`
/// gives the iid bootstrap.
pub fn block_test(xs: &[f64], f: Fam, l: usize, b_count: usize, seed: u64, use_kn: bool) -> Outcome {
    let n = xs.len();
    let theta = fit(f, xs);
    let t_obs = ks_brute(xs, f, theta);
    let resamples: Vec<Vec<f64>> = (0..b_count)
        .map(|b| {
            let mut rng = seeded(seed, &[RESAMPLE, b as u64, 0]);
            block_indices(n, l, &mut rng).into_iter().map(|i| xs[i]).collect()
        })
        .collect();
    let fits: Vec<[f64; 2]> = resamples.iter().map(|r| fit(f, r)).collect();
    let grid = distinct_sorted(xs);
    let centering = if use_kn {
        let heights = grid
            .iter()
            .map(|&g| resamples.iter().map(|r| ecdf_right(r, g)).sum::<f64>() / b_count as f64)
            .collect();
        let center = [
            fits.iter().map(|p| p[0]).sum::<f64>() / b_count as f64,
            fits.iter().map(|p| p[1]).sum::<f64>() / b_count as f64,
        ];
        Centering { grid, heights, center }
    } else {
        let heights = grid.iter().map(|&g| ecdf_right(xs, g)).collect();
        Centering {
            grid,
            heights,
            center: theta,
        }
    };
    let t_boot: Vec<f64> = resamples
        .iter()
        .zip(&fits)
        .map(|(r, p)| corrected_brute(r, f, *p, &centering, 400))
        .collect();
    Outcome {
        t_obs,
        p_value: p_of(t_obs, &t_boot),
        t_boot,
    }
}

pub fn pb(xs: &[f64], f: Fam, b_count: usize, seed: u64) -> Outcome {
    let n = xs.len();
    let theta = fit(f, xs);
    let t_obs = ks_brute(xs, f, theta);
    let t_boot: Vec<f64> = (0..b_count)
        .map(|b| {
            let mut rng = seeded(seed, &[PARAMETRIC, b as u64, 0]);
            let sim: Vec<f64> = (0..n)
                .map(|_| quantile(f, theta, rng.sample::<f64, _>(Open01)))
                .collect();
            ks_brute(&sim, f, fit(f, &sim))
        })
        .collect();
    Outcome {
        t_obs,
        p_value: p_of(t_obs, &t_boot),
        t_boot,
    }
}
