use expes_core::paths::{make_stream, IncrementSource};
use statrs::distribution::{ContinuousCDF, Normal};

fn draws(seed: u64, traj: u64, n: usize, dt: f64) -> Vec<f64> {
    let mut s = make_stream(seed, traj, 4);
    (0..n).map(|_| s.next_increment(dt)).collect()
}

#[test]
fn mean_of_unit_increments_is_near_zero() {
    let xs = draws(2024, 0, 1_000_000, 1.0);
    let mean = xs.iter().sum::<f64>() / xs.len() as f64;
    assert!(mean.abs() < 4e-3, "mean {mean}");
}

#[test]
fn variance_matches_dt() {
    let xs = draws(2024, 1, 1_000_000, 0.25);
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    assert!((var / 0.25 - 1.0).abs() < 0.02, "variance {var}");
}

#[test]
fn distinct_streams_are_uncorrelated() {
    let a = draws(5, 10, 100_000, 1.0);
    let b = draws(5, 11, 100_000, 1.0);
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a
        .iter()
        .zip(&b)
        .map(|(x, y)| (x - ma) * (y - mb))
        .sum::<f64>()
        / n;
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum::<f64>() / n;
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum::<f64>() / n;
    let corr = cov / (va * vb).sqrt();
    assert!(corr.abs() < 0.02, "correlation {corr}");
}

#[test]
fn kolmogorov_smirnov_against_standard_normal() {
    let mut xs = draws(77, 3, 100_000, 1.0);
    xs.sort_by(f64::total_cmp);
    let normal = Normal::standard();
    let n = xs.len() as f64;
    let ks = xs
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let c = normal.cdf(x);
            (c - i as f64 / n).abs().max(((i + 1) as f64 / n - c).abs())
        })
        .fold(0.0, f64::max);
    assert!(ks < 0.01, "KS statistic {ks}");
}

#[test]
fn draws_do_not_depend_on_simulation_order() {
    let forward: Vec<Vec<f64>> = (0..8).map(|t| draws(9, t, 32, 1.0)).collect();
    let backward: Vec<Vec<f64>> = (0..8).rev().map(|t| draws(9, t, 32, 1.0)).collect();
    assert!(forward.iter().eq(backward.iter().rev()));
}
