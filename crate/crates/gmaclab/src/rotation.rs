//! Surrogate-metric search for the capacity-enlarging inter-user rotation.
//!
//! The metric is a Jensen bound on the rotation-sensitive mutual
//! information term: a deterministic quadruple sum of Gaussian kernels of
//! pairwise differences, with the relative angle entering through
//! `e^{i theta}`. The rotation that minimizes it maximally enlarges the
//! capacity region.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::at_snr_db;
use crate::error::{GmacError, Result};
use crate::signal::Constellation;

/// Relative tolerance under which grid values count as co-minimizers.
pub const TAU_MULT: f64 = 1e-9;

/// Full sweep profile over the rotation grid.
#[derive(Debug, Clone, Serialize)]
pub struct RotationProfile {
    /// Grid angles in degrees, ascending.
    pub grid: Vec<f64>,
    pub metric_values: Vec<f64>,
    pub theta_star: f64,
    pub multiplicity: usize,
    pub snr_db: f64,
}

/// Evaluates the rotation metric at angle `theta` (radians) for an alphabet
/// already scaled to its transmit power. Deterministic, no sampling.
pub fn metric_m(c1: &Constellation, theta: f64, sigma2: f64) -> Result<f64> {
    if sigma2 <= 0.0 || sigma2.is_nan() {
        return Err(GmacError::InvalidParameter(
            "noise variance must be positive".into(),
        ));
    }
    let points = c1.points();
    let n = points.len();
    let rot = Complex64::from_polar(1.0, theta);
    // Precompute all pairwise differences once; the quadruple sum then runs
    // over difference pairs only.
    let mut diffs = vec![Complex64::new(0.0, 0.0); n * n];
    for k in 0..n {
        for i in 0..n {
            diffs[k * n + i] = points[k] - points[i];
        }
    }
    let inv = 1.0 / (4.0 * sigma2);
    // Compensated (Kahan) summation throughout: at low SNR the
    // theta-dependence of the metric sits many orders of magnitude below
    // its constant part, and the argmin must stay trustworthy there.
    let mut total = 0.0;
    let mut total_c = 0.0;
    let kahan = |acc: &mut f64, comp: &mut f64, term: f64| {
        let y = term - *comp;
        let t = *acc + y;
        *comp = (t - *acc) - y;
        *acc = t;
    };
    for k1 in 0..n {
        for k2 in 0..n {
            let mut inner = 0.0;
            let mut inner_c = 0.0;
            for i1 in 0..n {
                let d1 = diffs[k1 * n + i1];
                for i2 in 0..n {
                    let d = d1 + rot * diffs[k2 * n + i2];
                    kahan(&mut inner, &mut inner_c, (-d.norm_sqr() * inv).exp());
                }
            }
            kahan(&mut total, &mut total_c, inner.log2());
        }
    }
    Ok(total)
}

/// Sweeps the metric over `(0, 180]` degrees in steps of `grid_step_deg`
/// and reports the minimizing angle.
///
/// `c1` is a unit-energy alphabet; it is scaled internally to power
/// `snr * sigma^2` with `sigma^2 = 2`. When several grid angles tie within
/// [`TAU_MULT`], the orthogonality-inducing angle (90 degrees) is preferred
/// if present, otherwise the least angle.
pub fn optimal_rotation(
    c1: &Constellation,
    snr_db: f64,
    grid_step_deg: f64,
) -> Result<RotationProfile> {
    if grid_step_deg <= 0.0 || grid_step_deg.is_nan() {
        return Err(GmacError::InvalidParameter(
            "grid step must be positive".into(),
        ));
    }
    let sigma2 = 2.0;
    let scaled = at_snr_db(c1, snr_db, sigma2);
    let n_steps = (180.0 / grid_step_deg).round() as usize;
    let grid: Vec<f64> = (1..=n_steps).map(|j| j as f64 * grid_step_deg).collect();
    let metric_values: Vec<f64> = grid
        .par_iter()
        .map(|&deg| metric_m(&scaled, deg.to_radians(), sigma2).expect("validated sigma2"))
        .collect();
    let min = metric_values
        .iter()
        .cloned()
        .fold(f64::INFINITY, f64::min);
    let tol = TAU_MULT * min.abs().max(1.0);
    let minimizers: Vec<usize> = metric_values
        .iter()
        .enumerate()
        .filter(|(_, &v)| v - min <= tol)
        .map(|(i, _)| i)
        .collect();
    let multiplicity = minimizers.len();
    // preference among co-minimizers: the orthogonality-inducing 90-degree
    // angle first, else the grid point attaining the least metric value;
    // values equal up to summation noise tie-break toward the least angle
    let literal = metric_values
        .iter()
        .position(|&v| v == min)
        .expect("minimum exists");
    // a 90-degree rotation induces orthogonality only for one-dimensional
    // (real-axis) alphabets; only then is it preferred among co-minimizers
    let real_alphabet = c1.points().iter().all(|p| p.im.abs() < 1e-12);
    let theta_star = minimizers
        .iter()
        .map(|&i| grid[i])
        .find(|&deg| real_alphabet && (deg - 90.0).abs() < 1e-9)
        .unwrap_or(grid[literal]);
    Ok(RotationProfile {
        grid,
        metric_values,
        theta_star,
        multiplicity,
        snr_db,
    })
}
