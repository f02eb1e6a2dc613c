//! Empirical distribution functions and Kolmogorov–Smirnov type suprema.
//!
//! The bootstrap statistics have the form
//!
//! ```text
//! sup_x | √n (F_b(x) − F(x; θ_b)) − √n (S(x) − F(x; θ_c)) |
//! ```
//!
//! where `F_b` and `S` are right-continuous step functions and the two
//! parametric CDFs are continuous. Between consecutive jump points the step
//! parts are constant, so the supremum is attained either at a one-sided
//! limit at a jump point, or at an interior stationary point of
//! `F(x; θ_c) − F(x; θ_b)`, i.e. where the two densities cross. Both sets
//! are evaluated exactly.

use crate::distributions::{Bound, Family, Params};
use crate::error::{Error, Result};

fn check_sample(sample: &[f64]) -> Result<()> {
    if sample.is_empty() {
        return Err(Error::InvalidInput("empty sample".into()));
    }
    if let Some(bad) = sample.iter().find(|v| !v.is_finite()) {
        return Err(Error::InvalidInput(format!("non-finite observation {bad}")));
    }
    Ok(())
}

fn sorted(sample: &[f64]) -> Vec<f64> {
    let mut v = sample.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Empirical distribution function `#{X_i ≤ x} / n`.
#[derive(Clone, Debug, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(sample: &[f64]) -> Result<Self> {
        check_sample(sample)?;
        Ok(Ecdf { sorted: sorted(sample) })
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }

    pub fn sorted_values(&self) -> &[f64] {
        &self.sorted
    }

    pub fn eval(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v <= x) as f64 / self.sorted.len() as f64
    }

    /// Left limit `#{X_i < x} / n`.
    pub fn eval_left(&self, x: f64) -> f64 {
        self.sorted.partition_point(|&v| v < x) as f64 / self.sorted.len() as f64
    }
}

/// Distinct sorted values of a sample and, for each original position, the
/// index of its value in that grid. Bootstrap ECDFs over resamples of the
/// sample are then just jump counts on the grid.
#[derive(Clone, Debug)]
pub struct SampleGrid {
    values: Vec<f64>,
    rank: Vec<u32>,
    counts: Vec<u32>,
}

impl SampleGrid {
    pub fn new(sample: &[f64]) -> Result<Self> {
        check_sample(sample)?;
        let mut values = sorted(sample);
        values.dedup();
        let rank: Vec<u32> = sample
            .iter()
            .map(|x| values.partition_point(|v| v < x) as u32)
            .collect();
        let mut counts = vec![0u32; values.len()];
        for &r in &rank {
            counts[r as usize] += 1;
        }
        Ok(SampleGrid { values, rank, counts })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n(&self) -> usize {
        self.rank.len()
    }

    /// Multiplicity of each grid value in the original sample.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    /// Multiplicity of each grid value in the resample given by `indices`.
    pub fn resample_counts(&self, indices: &[usize], out: &mut Vec<u32>) {
        out.clear();
        out.resize(self.values.len(), 0);
        for &i in indices {
            out[self.rank[i] as usize] += 1;
        }
    }

    /// `F_n` at each grid value.
    pub fn ecdf_heights(&self) -> Vec<f64> {
        cumulative_heights(&self.counts, self.n() as f64)
    }
}

fn cumulative_heights(counts: &[u32], total: f64) -> Vec<f64> {
    let mut acc = 0u64;
    counts
        .iter()
        .map(|&c| {
            acc += c as u64;
            acc as f64 / total
        })
        .collect()
}

/// Average of bootstrap ECDFs, stored as its right-continuous values on the
/// grid of original sample values.
#[derive(Clone, Debug, PartialEq)]
pub struct StepAverage {
    pub grid: Vec<f64>,
    pub heights: Vec<f64>,
}

impl StepAverage {
    /// From per-grid-point jump counts summed over `replicates` resamples of
    /// size `n` each.
    pub fn from_total_counts(grid: &[f64], total_counts: &[u64], n: usize, replicates: usize) -> Self {
        let denom = n as f64 * replicates as f64;
        let mut acc = 0u64;
        let heights = total_counts
            .iter()
            .map(|&c| {
                acc += c;
                acc as f64 / denom
            })
            .collect();
        StepAverage {
            grid: grid.to_vec(),
            heights,
        }
    }

    pub fn eval(&self, x: f64) -> f64 {
        let k = self.grid.partition_point(|&g| g <= x);
        if k == 0 {
            0.0
        } else {
            self.heights[k - 1]
        }
    }
}

/// Centering term `√n (S(x) − F(x; center))` subtracted from a bootstrap
/// goodness-of-fit process. `S` is a step function with jumps on `grid`.
#[derive(Clone, Debug)]
pub struct Correction {
    grid: Vec<f64>,
    heights: Vec<f64>,
    center: Bound,
}

impl Correction {
    pub fn new(grid: Vec<f64>, heights: Vec<f64>, family: &Family, center: &Params) -> Result<Self> {
        if grid.len() != heights.len() {
            return Err(Error::InvalidInput(
                "correction grid and heights differ in length".into(),
            ));
        }
        if grid.windows(2).any(|w| !(w[0] < w[1])) {
            return Err(Error::InvalidInput(
                "correction grid must be strictly increasing".into(),
            ));
        }
        Ok(Correction {
            grid,
            heights,
            center: family.bind(center)?,
        })
    }

    /// `C_n(x) = √n (F_n(x) − F(x; θ̂_n))`.
    pub fn sample_based(sample: &SampleGrid, family: &Family, fitted: &Params) -> Result<Self> {
        Correction::new(sample.values().to_vec(), sample.ecdf_heights(), family, fitted)
    }

    /// `K_n(x) = √n (E*_B[F_n^(b)](x) − F(x; θ₀*))`.
    pub fn bootstrap_based(average: &StepAverage, family: &Family, theta_star: &Params) -> Result<Self> {
        Correction::new(average.grid.clone(), average.heights.clone(), family, theta_star)
    }

    pub fn grid(&self) -> &[f64] {
        &self.grid
    }

    pub fn heights(&self) -> &[f64] {
        &self.heights
    }

    pub fn center(&self) -> &Params {
        self.center.params()
    }

    fn step_at(&self, x: f64) -> f64 {
        let k = self.grid.partition_point(|&g| g <= x);
        if k == 0 {
            0.0
        } else {
            self.heights[k - 1]
        }
    }
}

/// `√n sup_x |F_n(x) − F(x; θ)|`, evaluated at both one-sided limits of every
/// order statistic.
pub fn ks_statistic(sample: &[f64], family: &Family, params: &Params) -> Result<f64> {
    check_sample(sample)?;
    let dist = family.bind(params)?;
    let xs = sorted(sample);
    let n = xs.len() as f64;
    let mut sup = 0.0f64;
    for (i, &x) in xs.iter().enumerate() {
        let f = dist.cdf(x);
        let above = ((i + 1) as f64 / n - f).abs();
        let below = (i as f64 / n - f).abs();
        sup = sup.max(above).max(below);
    }
    Ok(n.sqrt() * sup)
}

/// Continuous part of a corrected process: `F(·; center)` and the crossing
/// points of its density with the bootstrap fit's density.
pub(crate) struct Centering<'a> {
    pub heights: &'a [f64],
    pub center: &'a Bound,
    pub crossings: Vec<f64>,
}

/// Supremum over the real line of
/// `|√n (F_b(x) − F(x; θ_b)) − √n (S(x) − F(x; θ_c))|`
/// where `F_b` has jump counts `counts` (summing to `n`) on `grid` and `S`
/// (when present) takes the right-continuous values `heights` on the same
/// grid.
pub(crate) fn sup_on_grid(
    grid: &[f64],
    counts: &[u32],
    n: usize,
    boot: &Bound,
    centering: Option<&Centering<'_>>,
) -> f64 {
    debug_assert_eq!(grid.len(), counts.len());
    let nf = n as f64;
    let mut sup = 0.0f64;
    let mut cum = 0u64;
    let mut step_left = 0.0;
    for (k, &g) in grid.iter().enumerate() {
        let fb_left = cum as f64 / nf;
        cum += counts[k] as u64;
        let fb_right = cum as f64 / nf;
        let cb = boot.cdf(g);
        match centering {
            None => {
                sup = sup.max((fb_left - cb).abs()).max((fb_right - cb).abs());
            }
            Some(c) => {
                let cc = c.center.cdf(g);
                let step_right = c.heights[k];
                let left = (fb_left - cb) - (step_left - cc);
                let right = (fb_right - cb) - (step_right - cc);
                sup = sup.max(left.abs()).max(right.abs());
                step_left = step_right;
            }
        }
    }
    if let Some(c) = centering {
        // x → +∞: both fits and F_b reach 1, the step stays at its last height
        if let Some(&last) = c.heights.last() {
            sup = sup.max((1.0 - last).abs());
        }
        for &x in &c.crossings {
            let k = grid.partition_point(|&g| g <= x);
            let (fb, step) = if k == 0 {
                (0.0, 0.0)
            } else {
                let cum: u64 = counts[..k].iter().map(|&c| c as u64).sum();
                (cum as f64 / nf, c.heights[k - 1])
            };
            let d = (fb - boot.cdf(x)) - (step - c.center.cdf(x));
            sup = sup.max(d.abs());
        }
    }
    nf.sqrt() * sup
}

/// Bootstrap KS statistic with an optional centering term.
///
/// With `correction = None` this equals [`ks_statistic`]. The bootstrap
/// sample may contain ties and values outside the correction's grid.
pub fn corrected_sup(
    bootstrap_sample: &[f64],
    family: &Family,
    boot_params: &Params,
    correction: Option<&Correction>,
) -> Result<f64> {
    check_sample(bootstrap_sample)?;
    let boot = family.bind(boot_params)?;
    let n = bootstrap_sample.len();
    let Some(corr) = correction else {
        let grid = SampleGrid::new(bootstrap_sample)?;
        return Ok(sup_on_grid(grid.values(), grid.counts(), n, &boot, None));
    };

    let mut union: Vec<f64> = bootstrap_sample.iter().chain(corr.grid.iter()).copied().collect();
    union.sort_by(f64::total_cmp);
    union.dedup();
    let mut counts = vec![0u32; union.len()];
    for x in bootstrap_sample {
        counts[union.partition_point(|v| v < x)] += 1;
    }
    let heights: Vec<f64> = union.iter().map(|&g| corr.step_at(g)).collect();
    let centering = Centering {
        heights: &heights,
        center: &corr.center,
        crossings: family.density_crossings(boot_params, corr.center())?,
    };
    Ok(sup_on_grid(&union, &counts, n, &boot, Some(&centering)))
}
