//! Seeded instances that pair a library call with its oracle counterpart.

use npbb::edf::{corrected_sup, Correction};
use npbb::gof::{npb_test, npbb_test, pb_test};
use npbb::{BlockRule, BootstrapPlan, CorrectionKind, Family, GofResult, Params};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use super::{Centering, Fam, Outcome};

pub const TOL: f64 = 1e-9;

pub fn lib_family(f: Fam) -> Family {
    match f {
        Fam::Normal => Family::Normal,
        Fam::Gamma => Family::Gamma,
    }
}

/// `n` draws of N(8, 8) or Gamma(8, 1).
pub fn draw(f: Fam, n: usize, seed: u64) -> Vec<f64> {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    match f {
        Fam::Normal => Normal::new(8.0, 8f64.sqrt())
            .unwrap()
            .sample_iter(&mut r)
            .take(n)
            .collect(),
        Fam::Gamma => Gamma::new(8.0, 1.0).unwrap().sample_iter(&mut r).take(n).collect(),
    }
}

/// Largest statistic deviation, or a description of the first mismatch in
/// shape or p-value.
pub fn deviation(got: &GofResult, want: &Outcome) -> Result<f64, String> {
    if got.t_boot.len() != want.t_boot.len() {
        return Err(format!("{} vs {} replicates", got.t_boot.len(), want.t_boot.len()));
    }
    if got.p_value != want.p_value {
        return Err(format!("p-value {} vs {}", got.p_value, want.p_value));
    }
    Ok(got
        .t_boot
        .iter()
        .zip(&want.t_boot)
        .map(|(g, w)| (g - w).abs())
        .fold((got.t_obs - want.t_obs).abs(), f64::max))
}

/// Every small NPBB/NPB/PB instance (n ≤ 30, B = 8) with its oracle outcome.
pub fn small_instances() -> Vec<(String, GofResult, Outcome)> {
    let mut out = Vec::new();
    for f in [Fam::Normal, Fam::Gamma] {
        for (kind, use_kn) in [(CorrectionKind::Kn, true), (CorrectionKind::Cn, false)] {
            let xs = draw(f, 30, 11);
            let plan = BootstrapPlan::circular(BlockRule::CubeRoot, 8, 5).unwrap();
            let got = npbb_test(&xs, &lib_family(f), &plan, kind).unwrap();
            assert_eq!(got.diagnostics.block_length, Some(4));
            out.push((
                format!("npbb {f:?} {kind} n=30 l=4"),
                got,
                super::block_test(&xs, f, 4, 8, 5, use_kn),
            ));
        }
    }
    let xs = draw(Fam::Normal, 23, 3);
    let plan = BootstrapPlan::circular(BlockRule::Fixed(5), 8, 99).unwrap();
    let got = npbb_test(&xs, &Family::Normal, &plan, CorrectionKind::Kn).unwrap();
    out.push((
        "npbb Normal Kn n=23 l=5".into(),
        got,
        super::block_test(&xs, Fam::Normal, 5, 8, 99, true),
    ));
    for f in [Fam::Normal, Fam::Gamma] {
        let xs = draw(f, 25, 21);
        let got = npb_test(&xs, &lib_family(f), 8, 77).unwrap();
        out.push((
            format!("npb {f:?} n=25"),
            got,
            super::block_test(&xs, f, 1, 8, 77, false),
        ));
        let xs = draw(f, 20, 31);
        let got = pb_test(&xs, &lib_family(f), 8, 3).unwrap();
        out.push((format!("pb {f:?} n=20"), got, super::pb(&xs, f, 8, 3)));
    }
    out
}

/// One random corrected-supremum case: `(library, brute force)`.
pub fn random_sup_case(rng: &mut ChaCha8Rng) -> (f64, f64) {
    let f = if rng.random_bool(0.5) { Fam::Normal } else { Fam::Gamma };
    let n = rng.random_range(3..=30);
    let xs = draw(f, n, rng.random());
    let mut grid = xs.clone();
    grid.sort_by(f64::total_cmp);
    grid.dedup();

    // bootstrap sample: mostly grid values (with ties), occasionally fresh points
    let boot: Vec<f64> = (0..n)
        .map(|_| {
            if rng.random_bool(0.9) {
                grid[rng.random_range(0..grid.len())]
            } else {
                let g = grid[rng.random_range(0..grid.len())];
                g * (1.0 + 0.05 * (rng.random::<f64>() - 0.5))
            }
        })
        .collect();
    let jitter = |rng: &mut ChaCha8Rng, p: [f64; 2]| {
        [
            p[0] * (1.0 + 0.2 * (rng.random::<f64>() - 0.5)),
            p[1] * (1.0 + 0.6 * (rng.random::<f64>() - 0.5)),
        ]
    };
    let theta_b = jitter(rng, super::fit(f, &xs));
    let center = jitter(rng, super::fit(f, &xs));

    // heights: a nondecreasing step in [0, 1], sometimes exactly the sample ECDF
    let heights: Vec<f64> = if rng.random_bool(0.3) {
        grid.iter()
            .map(|&g| xs.iter().filter(|&&v| v <= g).count() as f64 / n as f64)
            .collect()
    } else {
        let mut h: Vec<f64> = grid.iter().map(|_| rng.random::<f64>()).collect();
        h.sort_by(f64::total_cmp);
        h
    };

    let family = lib_family(f);
    let corr = Correction::new(grid.clone(), heights.clone(), &family, &Params(center)).unwrap();
    let got = corrected_sup(&boot, &family, &Params(theta_b), Some(&corr)).unwrap();
    let want = super::corrected_brute(&boot, f, theta_b, &Centering { grid, heights, center }, 2000);
    (got, want)
}

pub const SUP_CASES_SEED: u64 = 2718;
