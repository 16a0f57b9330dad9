//! Monte-Carlo estimation of constellation-constrained mutual informations
//! and the pentagon capacity region of the two-user GMAC.
//!
//! The channel is `y = x1 + x2 + z` with `z ~ CN(0, sigma^2)`; the
//! `sigma^2 = 2` convention (unit variance per real dimension) is used
//! throughout the presets. Estimators are stateless: each call derives its
//! own RNG streams from `(seed, call tag, shard index)`, so results are
//! reproducible bit-for-bit and shards may be evaluated in parallel.

use num_complex::Complex64;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{GmacError, Result};
use crate::signal::Constellation;

/// Complex AWGN description: total variance `sigma2` split evenly per
/// real dimension, plus the base seed for reproducible draws.
#[derive(Debug, Clone, Copy)]
pub struct NoiseModel {
    pub sigma2: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub fn new(sigma2: f64, seed: u64) -> Result<Self> {
        if sigma2 <= 0.0 || sigma2.is_nan() {
            return Err(GmacError::InvalidParameter(format!(
                "noise variance must be positive, got {sigma2}"
            )));
        }
        Ok(Self { sigma2, seed })
    }

    /// Paper convention: unit noise variance per dimension.
    pub fn standard(seed: u64) -> Self {
        Self { sigma2: 2.0, seed }
    }
}

/// A Monte-Carlo scalar estimate in bits per channel use.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub value: f64,
    pub n_samples: usize,
    pub std_error: f64,
    pub seed: u64,
}

impl McEstimate {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            n_samples: 0,
            std_error: 0.0,
            seed: 0,
        }
    }
}

/// Pentagon capacity region assembled from the three rate bounds.
#[derive(Debug, Clone)]
pub struct CapacityRegion {
    pub r1_max: McEstimate,
    pub r2_max: McEstimate,
    pub sum_max: McEstimate,
    /// Corner points `(R1, R2)` traversed from the R1 axis to the R2 axis.
    pub corners: Vec<(f64, f64)>,
}

impl CapacityRegion {
    fn assemble(r1_max: McEstimate, r2_max: McEstimate, sum_max: McEstimate) -> Self {
        let r1 = r1_max.value.max(0.0);
        let r2 = r2_max.value.max(0.0);
        let s = sum_max.value.max(0.0).min(r1 + r2);
        let corners = vec![
            (r1.min(s), 0.0),
            (r1.min(s), (s - r1).max(0.0)),
            ((s - r2).max(0.0), r2.min(s)),
            (0.0, r2.min(s)),
        ];
        Self {
            r1_max,
            r2_max,
            sum_max,
            corners,
        }
    }
}

const SHARD: usize = 8192;

/// Deterministic per-shard stream: splitmix64 over (seed, tag, shard).
pub(crate) fn stream(seed: u64, tag: u64, shard: u64) -> ChaCha8Rng {
    let mut x = seed ^ tag.wrapping_mul(0x9e3779b97f4a7c15) ^ shard.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 30;
    x = x.wrapping_mul(0xbf58476d1ce4e5b9);
    x ^= x >> 27;
    x = x.wrapping_mul(0x94d049bb133111eb);
    x ^= x >> 31;
    ChaCha8Rng::seed_from_u64(x)
}

pub(crate) fn draw_noise(rng: &mut ChaCha8Rng, sigma2: f64) -> Complex64 {
    // Box-Muller; per-dimension variance sigma2 / 2.
    let s = (sigma2 / 2.0).sqrt();
    let u1: f64 = rng.gen::<f64>().max(f64::MIN_POSITIVE);
    let u2: f64 = rng.gen();
    let r = (-2.0 * u1.ln()).sqrt();
    let phi = 2.0 * std::f64::consts::PI * u2;
    Complex64::new(s * r * phi.cos(), s * r * phi.sin())
}

fn validate(noise: &NoiseModel, n: usize) -> Result<()> {
    if noise.sigma2 <= 0.0 || noise.sigma2.is_nan() {
        return Err(GmacError::InvalidParameter(
            "noise variance must be positive".into(),
        ));
    }
    if n < 1000 {
        return Err(GmacError::InvalidParameter(format!(
            "at least 1000 samples required, got {n}"
        )));
    }
    Ok(())
}

/// Runs `n` draws of `f` sharded over deterministic RNG streams and returns
/// the mean and standard error of the per-sample values.
fn mc_mean(seed: u64, tag: u64, n: usize, f: impl Fn(&mut ChaCha8Rng) -> f64 + Sync) -> (f64, f64) {
    let n_shards = n.div_ceil(SHARD);
    let partials: Vec<(f64, f64, usize)> = (0..n_shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = stream(seed, tag, shard as u64);
            let count = SHARD.min(n - shard * SHARD);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..count {
                let v = f(&mut rng);
                sum += v;
                sum_sq += v * v;
            }
            (sum, sum_sq, count)
        })
        .collect();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for &(s, sq, _) in &partials {
        sum += s;
        sum_sq += sq;
    }
    let mean = sum / n as f64;
    let var = (sum_sq / n as f64 - mean * mean).max(0.0);
    (mean, (var / n as f64).sqrt())
}

/// Per-sample inner term of the conditional mutual information: with `z`
/// drawn and `k1` uniform, the log-ratio normalized so the `i1 = k1` term
/// contributes exactly 1 (avoids underflow at high SNR).
fn conditional_sample(points: &[Complex64], sigma2: f64, k1: usize, z: Complex64) -> f64 {
    let z_sq = z.norm_sqr();
    let mut acc = 0.0;
    for p in points {
        let d = points[k1] - p + z;
        acc += ((z_sq - d.norm_sqr()) / sigma2).exp();
    }
    acc.log2()
}

/// Estimates `I(x1 : y | x2)`: `log2(N1)` minus the averaged log-ratio.
///
/// Depends only on the distance distribution of `c1`, hence invariant under
/// rotation of the constellation.
pub fn mi_conditional(c1: &Constellation, noise: &NoiseModel, n: usize) -> Result<McEstimate> {
    validate(noise, n)?;
    let points = c1.points().to_vec();
    let sigma2 = noise.sigma2;
    let m = points.len();
    let (mean, std_error) = mc_mean(noise.seed, 0x636f6e64, n, |rng| {
        let k1 = rng.gen_range(0..m);
        let z = draw_noise(rng, sigma2);
        conditional_sample(&points, sigma2, k1, z)
    });
    Ok(McEstimate {
        value: (m as f64).log2() - mean,
        n_samples: n,
        std_error,
        seed: noise.seed,
    })
}

fn marginal_sample(
    p1: &[Complex64],
    p2: &[Complex64],
    sigma2: f64,
    k1: usize,
    k2: usize,
    z: Complex64,
) -> f64 {
    let z_sq = z.norm_sqr();
    let tx = p1[k1] + p2[k2];
    let mut num = 0.0;
    for a in p1 {
        for b in p2 {
            let d = tx - a - b + z;
            num += ((z_sq - d.norm_sqr()) / sigma2).exp();
        }
    }
    let mut den = 0.0;
    for a in p1 {
        let d = p1[k1] - a + z;
        den += ((z_sq - d.norm_sqr()) / sigma2).exp();
    }
    (num / den).log2()
}

/// Estimates `I(x2 : y)` treating `x1 + z` as the additive noise.
///
/// This is the only bound that depends on the relative rotation between the
/// alphabets (through the sum-alphabet distance distribution).
pub fn mi_marginal(
    c1: &Constellation,
    c2: &Constellation,
    noise: &NoiseModel,
    n: usize,
) -> Result<McEstimate> {
    validate(noise, n)?;
    let p1 = c1.points().to_vec();
    let p2 = c2.points().to_vec();
    let sigma2 = noise.sigma2;
    let (n1, n2) = (p1.len(), p2.len());
    let (mean, std_error) = mc_mean(noise.seed, 0x6d617267, n, |rng| {
        let k1 = rng.gen_range(0..n1);
        let k2 = rng.gen_range(0..n2);
        let z = draw_noise(rng, sigma2);
        marginal_sample(&p1, &p2, sigma2, k1, k2, z)
    });
    Ok(McEstimate {
        value: (n2 as f64).log2() - mean,
        n_samples: n,
        std_error,
        seed: noise.seed,
    })
}

/// `I(x2 : y)` with an extra uniform random phase applied to `c2` on every
/// sample (the random-phase-offset channel).
pub fn mi_random_phase(
    c1: &Constellation,
    c2: &Constellation,
    noise: &NoiseModel,
    n: usize,
) -> Result<McEstimate> {
    validate(noise, n)?;
    let p1 = c1.points().to_vec();
    let p2 = c2.points().to_vec();
    let sigma2 = noise.sigma2;
    let (n1, n2) = (p1.len(), p2.len());
    let (mean, std_error) = mc_mean(noise.seed, 0x72706873, n, |rng| {
        let k1 = rng.gen_range(0..n1);
        let k2 = rng.gen_range(0..n2);
        let z = draw_noise(rng, sigma2);
        let phase = Complex64::from_polar(1.0, rng.gen::<f64>() * 2.0 * std::f64::consts::PI);
        let rotated: Vec<Complex64> = p2.iter().map(|p| p * phase).collect();
        marginal_sample(&p1, &rotated, sigma2, k1, k2, z)
    });
    Ok(McEstimate {
        value: (n2 as f64).log2() - mean,
        n_samples: n,
        std_error,
        seed: noise.seed,
    })
}

/// Assembles the pentagon region from the three Monte-Carlo bounds.
pub fn capacity_region(
    c1: &Constellation,
    c2: &Constellation,
    noise: &NoiseModel,
    n: usize,
) -> Result<CapacityRegion> {
    let r1_max = mi_conditional(c1, noise, n)?;
    let r2_max = mi_conditional(c2, noise, n)?;
    let marg = mi_marginal(c1, c2, noise, n)?;
    let sum_max = McEstimate {
        value: r1_max.value + marg.value,
        n_samples: n,
        std_error: (r1_max.std_error.powi(2) + marg.std_error.powi(2)).sqrt(),
        seed: noise.seed,
    };
    Ok(CapacityRegion::assemble(r1_max, r2_max, sum_max))
}

/// Closed-form Gaussian-alphabet region at SNR ratio `rho` (linear).
///
/// Also exposes the real-Gaussian-per-dimension per-user rate
/// `(1/2) log2(1 + rho)`, whose doubled value equals the complex sum rate.
pub fn gaussian_region(rho: f64) -> Result<CapacityRegion> {
    if rho < 0.0 {
        return Err(GmacError::InvalidParameter(format!(
            "SNR ratio must be nonnegative, got {rho}"
        )));
    }
    let r1 = (1.0 + rho / 2.0).log2();
    let r2 = (1.0 + rho / 2.0).log2();
    let sum = (1.0 + rho).log2();
    Ok(CapacityRegion::assemble(
        McEstimate::exact(r1),
        McEstimate::exact(r2),
        McEstimate::exact(sum),
    ))
}

/// Per-user rate of the real-Gaussian (90-degree rotated) scheme.
pub fn gaussian_real_per_user_rate(rho: f64) -> f64 {
    0.5 * (1.0 + rho).log2()
}

/// Scales a unit-energy constellation to average power `snr * sigma2`
/// (SNR defined as `P / sigma^2`).
pub fn at_snr_db(c: &Constellation, snr_db: f64, sigma2: f64) -> Constellation {
    let rho = 10f64.powf(snr_db / 10.0);
    c.scaled_power(rho * sigma2 / c.avg_energy())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature;
    use crate::signal::ConstellationKind;

    fn bpsk() -> Constellation {
        Constellation::make(ConstellationKind::Psk, 2, true).unwrap()
    }

    fn qpsk() -> Constellation {
        Constellation::make(ConstellationKind::Psk, 4, true).unwrap()
    }

    #[test]
    fn conditional_limits() {
        let noise = NoiseModel::new(2.0, 7).unwrap();
        // SNR -> -inf: scale constellation power way down.
        let low = at_snr_db(&bpsk(), -40.0, 2.0);
        let est = mi_conditional(&low, &noise, 20_000).unwrap();
        assert!(est.value.abs() < 0.05, "value {}", est.value);
        // SNR -> +inf.
        let high = at_snr_db(&bpsk(), 30.0, 2.0);
        let est = mi_conditional(&high, &noise, 20_000).unwrap();
        assert!((est.value - 1.0).abs() < 1e-3, "value {}", est.value);
    }

    #[test]
    fn conditional_matches_quadrature_oracle() {
        let noise = NoiseModel::new(2.0, 11).unwrap();
        let c = at_snr_db(&qpsk(), 6.0, 2.0);
        let est = mi_conditional(&c, &noise, 200_000).unwrap();
        let oracle = quadrature::mi_conditional_quadrature(&c, 2.0, 32);
        assert!(
            (est.value - oracle).abs() < (3.0 * est.std_error).max(1e-2),
            "mc {} oracle {}",
            est.value,
            oracle
        );
    }

    #[test]
    fn marginal_orthogonal_bpsk_high_snr() {
        let noise = NoiseModel::new(2.0, 3).unwrap();
        let c1 = at_snr_db(&bpsk(), 20.0, 2.0);
        let c2 = c1.rotated(std::f64::consts::FRAC_PI_2);
        let est = mi_marginal(&c1, &c2, &noise, 50_000).unwrap();
        assert!((est.value - 1.0).abs() < 0.01, "value {}", est.value);
    }

    #[test]
    fn marginal_coincident_bpsk_half_bit() {
        // Noiseless limit: sum alphabet {2, 0, -2} with the midpoint
        // ambiguous half the time, so I(x2 : y) -> 0.5 bits.
        let noise = NoiseModel::new(2.0, 5).unwrap();
        let c1 = at_snr_db(&bpsk(), 25.0, 2.0);
        let est = mi_marginal(&c1, &c1, &noise, 100_000).unwrap();
        let oracle = quadrature::mi_marginal_quadrature(&c1, &c1, 2.0, 32);
        assert!((oracle - 0.5).abs() < 1e-3, "oracle {oracle}");
        assert!(
            (est.value - 0.5).abs() < (3.0 * est.std_error).max(1e-2),
            "value {}",
            est.value
        );
    }

    #[test]
    fn marginal_matches_quadrature_oracle() {
        let noise = NoiseModel::new(2.0, 13).unwrap();
        let c1 = at_snr_db(&qpsk(), 2.0, 2.0);
        let c2 = c1.rotated(std::f64::consts::FRAC_PI_4);
        let est = mi_marginal(&c1, &c2, &noise, 200_000).unwrap();
        let oracle = quadrature::mi_marginal_quadrature(&c1, &c2, 2.0, 32);
        assert!(
            (est.value - oracle).abs() < (3.0 * est.std_error).max(1e-2),
            "mc {} oracle {}",
            est.value,
            oracle
        );
    }

    #[test]
    fn reproducible_bit_identical() {
        let noise = NoiseModel::new(2.0, 42).unwrap();
        let c = at_snr_db(&qpsk(), 4.0, 2.0);
        let a = mi_conditional(&c, &noise, 10_000).unwrap();
        let b = mi_conditional(&c, &noise, 10_000).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn gaussian_region_identity() {
        for &rho in &[0.0, 0.7, 3.0, 10.0, 100.0] {
            let region = gaussian_region(rho).unwrap();
            // staircase identity: log2(1 + rho/2) + log2(1 + rho/(2+rho)) = log2(1+rho)
            let staircase = (1.0 + rho / 2.0).log2() + (1.0 + rho / (2.0 + rho)).log2();
            approx::assert_abs_diff_eq!(staircase, region.sum_max.value, epsilon = 1e-12);
            // real-alphabet scheme sum equals the complex scheme sum
            approx::assert_abs_diff_eq!(
                2.0 * gaussian_real_per_user_rate(rho),
                region.sum_max.value,
                epsilon = 1e-12
            );
        }
        assert_eq!(gaussian_region(0.0).unwrap().sum_max.value, 0.0);
        assert!(gaussian_region(-1.0).is_err());
    }

    #[test]
    fn random_phase_below_optimal_rotation() {
        let noise = NoiseModel::new(2.0, 17).unwrap();
        let c1 = at_snr_db(&bpsk(), 4.0, 2.0);
        let c2 = c1.rotated(std::f64::consts::FRAC_PI_2);
        let fixed = mi_marginal(&c1, &c2, &noise, 100_000).unwrap();
        let random = mi_random_phase(&c1, &c1, &noise, 100_000).unwrap();
        assert!(
            fixed.value - random.value > 3.0 * (fixed.std_error + random.std_error),
            "fixed {} random {}",
            fixed.value,
            random.value
        );
    }

    #[test]
    fn small_n_rejected() {
        let noise = NoiseModel::new(2.0, 1).unwrap();
        assert!(mi_conditional(&bpsk(), &noise, 10).is_err());
        assert!(NoiseModel::new(-1.0, 0).is_err());
    }

    #[test]
    fn region_corners_consistent() {
        let noise = NoiseModel::new(2.0, 9).unwrap();
        let c1 = at_snr_db(&bpsk(), 2.0, 2.0);
        let c2 = c1.rotated(std::f64::consts::FRAC_PI_2);
        let region = capacity_region(&c1, &c2, &noise, 20_000).unwrap();
        let tol = 3.0 * (region.r1_max.std_error + region.r2_max.std_error + region.sum_max.std_error);
        assert!(region.sum_max.value <= region.r1_max.value + region.r2_max.value + tol);
        for &(r1, r2) in &region.corners {
            assert!(r1 >= 0.0 && r2 >= 0.0);
        }
    }
}
