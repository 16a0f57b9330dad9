//! Rate-1 real orthogonal designs and their complexified (separable)
//! counterparts for the two-user MIMO MAC with magnitude-only transmitter
//! CSI, plus capacity estimates, losslessness checks, low-complexity ML
//! decoders, and BER experiments.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::capacity::{stream, McEstimate};
use crate::error::{GmacError, Result};
use crate::signal::{Constellation, ConstellationKind};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum DesignKind {
    Rod,
    Sod,
}

/// `l x k` codeword built column-by-column: antenna `i` transmits `A_i x`
/// over `l` channel uses. ROD variables are real; the SOD applies the same
/// matrices independently to in-phase and quadrature parts.
#[derive(Debug, Clone)]
pub struct OrthogonalDesign {
    pub l: usize,
    pub nt: usize,
    pub k: usize,
    pub rep_matrices: Vec<DMatrix<f64>>,
    pub kind: DesignKind,
}

// Cayley-Dickson product on length-2^n coordinate vectors:
// (a, b)(c, d) = (ac - conj(d) b, da + b conj(c))
fn cd_mul(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return vec![x[0] * y[0]];
    }
    let h = n / 2;
    let conj = |v: &[f64]| -> Vec<f64> {
        let mut w = v.to_vec();
        for e in w.iter_mut().skip(1) {
            *e = -*e;
        }
        w
    };
    let (a, b) = (&x[..h], &x[h..]);
    let (c, d) = (&y[..h], &y[h..]);
    let ac = cd_mul(a, c);
    let db_conj = cd_mul(&conj(d), b);
    let da = cd_mul(d, a);
    let bc_conj = cd_mul(b, &conj(c));
    let mut out = Vec::with_capacity(n);
    for i in 0..h {
        out.push(ac[i] - db_conj[i]);
    }
    for i in 0..h {
        out.push(da[i] + bc_conj[i]);
    }
    out
}

/// Left-multiplication matrix of the `a`-th basis unit of the dimension-8
/// Cayley-Dickson algebra. `{L_0 = I, L_1, ..., L_7}` is a Hurwitz-Radon
/// family.
fn octonion_left_mult(a: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(8, 8);
    let mut ea = [0.0; 8];
    ea[a] = 1.0;
    for v in 0..8 {
        let mut ev = [0.0; 8];
        ev[v] = 1.0;
        let prod = cd_mul(&ea, &ev);
        for u in 0..8 {
            m[(u, v)] = prod[u];
        }
    }
    m
}

fn example4_family() -> Vec<DMatrix<f64>> {
    // columns of the 4x4 rate-1 design with rows
    // ( x1,  x2,  x3,  x4)
    // (-x2,  x1, -x4,  x3)
    // (-x3,  x4,  x1, -x2)
    // (-x4, -x3,  x2,  x1)
    let rows: [[i32; 4]; 4] = [[1, 2, 3, 4], [-2, 1, -4, 3], [-3, 4, 1, -2], [-4, -3, 2, 1]];
    (0..4)
        .map(|col| {
            let mut a = DMatrix::zeros(4, 4);
            for (use_idx, row) in rows.iter().enumerate() {
                let v = row[col];
                a[(use_idx, (v.unsigned_abs() as usize) - 1)] = v.signum() as f64;
            }
            a
        })
        .collect()
}

/// Rate-1 ROD for 1 <= Nt <= 8: the trivial, Alamouti-real, quaternion,
/// and octonion families, with rectangular designs obtained by dropping
/// columns.
pub fn make_rod(nt: usize) -> Result<OrthogonalDesign> {
    if nt == 0 || nt > 8 {
        return Err(GmacError::InvalidParameter(format!(
            "ROD supported for 1 <= Nt <= 8, got {nt}"
        )));
    }
    let rep_matrices: Vec<DMatrix<f64>> = match nt {
        1 => vec![DMatrix::identity(1, 1)],
        2 => vec![
            DMatrix::identity(2, 2),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0]),
        ],
        3 | 4 => example4_family().into_iter().take(nt).collect(),
        _ => (0..nt).map(octonion_left_mult).collect(),
    };
    let l = rep_matrices[0].nrows();
    Ok(OrthogonalDesign {
        l,
        nt,
        k: l,
        rep_matrices,
        kind: DesignKind::Rod,
    })
}

/// Views every real variable of the ROD as a complex variable (identical
/// designs on the in-phase and quadrature parts).
pub fn make_sod(rod: &OrthogonalDesign) -> Result<OrthogonalDesign> {
    if rod.kind != DesignKind::Rod {
        return Err(GmacError::InvalidParameter("SOD is built from a ROD".into()));
    }
    let mut d = rod.clone();
    d.kind = DesignKind::Sod;
    Ok(d)
}

/// Worst violation of the Hurwitz-Radon conditions
/// `A_i A_i^T = I`, `A_i A_j^T + A_j A_i^T = 0`.
pub fn hr_residual(design: &OrthogonalDesign) -> f64 {
    let l = design.l;
    let mut worst: f64 = 0.0;
    for (i, a) in design.rep_matrices.iter().enumerate() {
        let gram = a * a.transpose();
        worst = worst.max((gram - DMatrix::identity(l, l)).abs().max());
        for b in design.rep_matrices.iter().skip(i + 1) {
            let anti = a * b.transpose() + b * a.transpose();
            worst = worst.max(anti.abs().max());
        }
    }
    worst
}

/// Real equivalent channel `H = sum_i |h_i| A_i` (an `l x k` matrix with
/// `H H^T = ||h||^2 I` when the design is orthogonal).
pub fn equivalent_channel(design: &OrthogonalDesign, h: &[Complex64]) -> Result<DMatrix<f64>> {
    if h.len() != design.nt {
        return Err(GmacError::InvalidParameter(format!(
            "channel vector length {} != Nt {}",
            h.len(),
            design.nt
        )));
    }
    let mut m = DMatrix::zeros(design.l, design.k);
    for (i, a) in design.rep_matrices.iter().enumerate() {
        m += a * h[i].norm();
    }
    Ok(m)
}

/// Max-norm residual of the losslessness identity
/// `H_hat H_hat^T = (||h~_1||^2 + ||h~_2||^2) I` for a SOD pair, or the
/// per-user identity for a ROD.
pub fn losslessness_residual(
    design: &OrthogonalDesign,
    h1: &[Complex64],
    h2: &[Complex64],
) -> Result<f64> {
    let g1 = equivalent_channel(design, h1)?;
    let g2 = equivalent_channel(design, h2)?;
    let norm_sq = |h: &[Complex64]| h.iter().map(|v| v.norm_sqr()).sum::<f64>();
    let id = DMatrix::identity(design.l, design.l);
    match design.kind {
        DesignKind::Sod => {
            let mut h_hat = DMatrix::zeros(design.l, 2 * design.k);
            h_hat.view_mut((0, 0), (design.l, design.k)).copy_from(&g1);
            h_hat
                .view_mut((0, design.k), (design.l, design.k))
                .copy_from(&g2);
            let gram = &h_hat * h_hat.transpose();
            Ok((gram - id * (norm_sq(h1) + norm_sq(h2))).abs().max())
        }
        DesignKind::Rod => {
            let r1 = (&g1 * g1.transpose() - &id * norm_sq(h1)).abs().max();
            let r2 = (&g2 * g2.transpose() - &id * norm_sq(h2)).abs().max();
            Ok(r1.max(r2))
        }
    }
}

fn draw_channel<R: Rng>(nt: usize, rng: &mut R) -> Vec<Complex64> {
    use rand::distributions::Distribution;
    let normal = rand::distributions::Uniform::new(0.0f64, 1.0);
    (0..nt)
        .map(|_| {
            // Box-Muller, CN(0, 1): each real part N(0, 1/2)
            let u1: f64 = 1.0 - normal.sample(rng);
            let u2: f64 = normal.sample(rng);
            let r = (-u1.ln()).sqrt();
            let phi = 2.0 * std::f64::consts::PI * u2;
            Complex64::new(r * phi.cos(), r * phi.sin())
        })
        .collect()
}

const SHARD: u64 = 8192;

fn mc_mean_channels<F>(nt: usize, n: u64, seed: u64, tag: u64, f: F) -> McEstimate
where
    F: Fn(&[Complex64], &[Complex64]) -> f64 + Sync,
{
    let n_shards = n.div_ceil(SHARD);
    let partials: Vec<(f64, f64, u64)> = (0..n_shards)
        .into_par_iter()
        .map(|shard| {
            let mut rng = stream(seed, tag, shard);
            let count = SHARD.min(n - shard * SHARD);
            let mut sum = 0.0;
            let mut sum_sq = 0.0;
            for _ in 0..count {
                let h1 = draw_channel(nt, &mut rng);
                let h2 = draw_channel(nt, &mut rng);
                let v = f(&h1, &h2);
                sum += v;
                sum_sq += v * v;
            }
            (sum, sum_sq, count)
        })
        .collect();
    let (sum, sum_sq, total) = partials
        .iter()
        .fold((0.0, 0.0, 0u64), |acc, &(s, q, c)| {
            (acc.0 + s, acc.1 + q, acc.2 + c)
        });
    let mean = sum / total as f64;
    let var = (sum_sq / total as f64 - mean * mean).max(0.0);
    McEstimate {
        value: mean,
        n_samples: total as usize,
        std_error: (var / total as f64).sqrt(),
        seed,
    }
}

/// Eq.-15 sum capacity `E[log2(1 + (rho / 2Nt)(||h_1||^2 + ||h_2||^2))]`
/// of the magnitude-compensated MAC; `rho` is linear.
pub fn mac_sum_capacity(nt: usize, rho: f64, n: u64, seed: u64) -> Result<McEstimate> {
    if nt == 0 || rho < 0.0 {
        return Err(GmacError::InvalidParameter("need Nt >= 1 and rho >= 0".into()));
    }
    if n < 10_000 {
        return Err(GmacError::InvalidParameter("need n >= 10^4 samples".into()));
    }
    let c = rho / (2.0 * nt as f64);
    Ok(mc_mean_channels(nt, n, seed, 0x6d61_6373, |h1, h2| {
        let g: f64 = h1.iter().chain(h2).map(|v| v.norm_sqr()).sum();
        (1.0 + c * g).log2()
    }))
}

/// STBC sum mutual information for the scheme, linear `rho`.
/// SOD pair: `(1/l) E[log2 det(I + (rho/2Nt) H_hat H_hat^T)]`.
/// ROD pair (PAM on orthogonal real dimensions): the collocated
/// `E[log2(1 + (rho/Nt) ||h||^2)]` form.
pub fn stbc_mutual_info(
    design: &OrthogonalDesign,
    rho: f64,
    n: u64,
    seed: u64,
) -> Result<McEstimate> {
    if n < 10_000 {
        return Err(GmacError::InvalidParameter("need n >= 10^4 samples".into()));
    }
    let nt = design.nt;
    match design.kind {
        DesignKind::Sod => {
            let c = rho / (2.0 * nt as f64);
            let d = design.clone();
            Ok(mc_mean_channels(nt, n, seed, 0x736f_6469, move |h1, h2| {
                let g1 = equivalent_channel(&d, h1).unwrap();
                let g2 = equivalent_channel(&d, h2).unwrap();
                let l = d.l;
                let mut h_hat = DMatrix::zeros(l, 2 * d.k);
                h_hat.view_mut((0, 0), (l, d.k)).copy_from(&g1);
                h_hat.view_mut((0, d.k), (l, d.k)).copy_from(&g2);
                let gram = DMatrix::identity(l, l) + &h_hat * h_hat.transpose() * c;
                gram.determinant().log2() / l as f64
            }))
        }
        DesignKind::Rod => {
            let c = rho / nt as f64;
            Ok(mc_mean_channels(nt, n, seed, 0x726f_6469, move |h1, _| {
                let g: f64 = h1.iter().map(|v| v.norm_sqr()).sum();
                (1.0 + c * g).log2()
            }))
        }
    }
}

/// One user pair's channel state and power for a coherence block.
#[derive(Debug, Clone)]
pub struct MacChannel {
    pub nt: usize,
    pub h1: Vec<Complex64>,
    pub h2: Vec<Complex64>,
    /// linear average receive SNR
    pub rho: f64,
}

impl MacChannel {
    pub fn draw<R: Rng>(nt: usize, rho: f64, rng: &mut R) -> Self {
        Self {
            nt,
            h1: draw_channel(nt, rng),
            h2: draw_channel(nt, rng),
            rho,
        }
    }

    pub fn amplitude(&self) -> f64 {
        (self.rho / (2.0 * self.nt as f64)).sqrt()
    }
}

/// Noiseless received block for complex symbol vectors `x` (user 1) and
/// `y` (user 2) under magnitude-compensated channels: the real and
/// imaginary parts each see the real equivalent channels.
pub fn transmit(
    design: &OrthogonalDesign,
    ch: &MacChannel,
    x: &[Complex64],
    y: &[Complex64],
) -> Result<Vec<Complex64>> {
    if x.len() != design.k || y.len() != design.k {
        return Err(GmacError::InvalidParameter(format!(
            "need {} symbols per user",
            design.k
        )));
    }
    let g1 = equivalent_channel(design, &ch.h1)?;
    let g2 = equivalent_channel(design, &ch.h2)?;
    let a = ch.amplitude();
    let xi = DVector::from_iterator(design.k, x.iter().map(|v| v.re));
    let xq = DVector::from_iterator(design.k, x.iter().map(|v| v.im));
    let yi = DVector::from_iterator(design.k, y.iter().map(|v| v.re));
    let yq = DVector::from_iterator(design.k, y.iter().map(|v| v.im));
    let re = (&g1 * xi + &g2 * yi) * a;
    let im = (&g1 * xq + &g2 * yq) * a;
    Ok((0..design.l)
        .map(|i| Complex64::new(re[i], im[i]))
        .collect())
}

fn real_axis_levels(qam: &Constellation) -> Result<Vec<f64>> {
    if qam.kind() != ConstellationKind::Qam {
        return Err(GmacError::InvalidParameter(
            "SOD decoding requires a regular QAM set".into(),
        ));
    }
    let mut re: Vec<f64> = qam.points().iter().map(|p| p.re).collect();
    re.sort_by(|a, b| a.partial_cmp(b).unwrap());
    re.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    let mut im: Vec<f64> = qam.points().iter().map(|p| p.im).collect();
    im.sort_by(|a, b| a.partial_cmp(b).unwrap());
    im.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    if re.len() != im.len()
        || re
            .iter()
            .zip(&im)
            .any(|(a, b)| (a - b).abs() > 1e-9)
    {
        return Err(GmacError::InvalidParameter(
            "QAM set must have identical I and Q level sets".into(),
        ));
    }
    // entanglement check: the point set must be the full I x Q grid
    if qam.len() != re.len() * im.len() {
        return Err(GmacError::InvalidParameter(
            "QAM set must be a full rectangular grid".into(),
        ));
    }
    Ok(re)
}

fn decode_real_group(
    g: &DMatrix<f64>,
    observed: &DVector<f64>,
    amplitude: f64,
    levels: &[f64],
    k: usize,
) -> Vec<f64> {
    // exact ML over the 2k real variables of one dimension (I or Q):
    // brute force |levels|^(2k) hypotheses
    let total = levels.len().pow(2 * k as u32);
    let mut best = (f64::INFINITY, vec![0.0; 2 * k]);
    let mut u = vec![0.0; 2 * k];
    for idx in 0..total {
        let mut rem = idx;
        for slot in u.iter_mut() {
            *slot = levels[rem % levels.len()];
            rem /= levels.len();
        }
        let v = DVector::from_column_slice(&u);
        let resid = (observed - g * &v * amplitude).norm_squared();
        if resid < best.0 {
            best = (resid, u.clone());
        }
    }
    best.1
}

/// Exact ML for a SOD pair by decoupling the in-phase and quadrature
/// dimensions and brute-forcing each 2l-real-variable group.
pub fn ml_decode_sod(
    design: &OrthogonalDesign,
    y: &[Complex64],
    ch: &MacChannel,
    qam: &Constellation,
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    if design.kind != DesignKind::Sod {
        return Err(GmacError::InvalidParameter("expected a SOD".into()));
    }
    if y.len() != design.l {
        return Err(GmacError::InvalidParameter("received length != l".into()));
    }
    let levels = real_axis_levels(qam)?;
    let g1 = equivalent_channel(design, &ch.h1)?;
    let g2 = equivalent_channel(design, &ch.h2)?;
    let mut g = DMatrix::zeros(design.l, 2 * design.k);
    g.view_mut((0, 0), (design.l, design.k)).copy_from(&g1);
    g.view_mut((0, design.k), (design.l, design.k))
        .copy_from(&g2);
    let re = DVector::from_iterator(design.l, y.iter().map(|v| v.re));
    let im = DVector::from_iterator(design.l, y.iter().map(|v| v.im));
    let a = ch.amplitude();
    let in_phase = decode_real_group(&g, &re, a, &levels, design.k);
    let quad = decode_real_group(&g, &im, a, &levels, design.k);
    let user = |offset: usize| -> Vec<Complex64> {
        (0..design.k)
            .map(|i| Complex64::new(in_phase[offset + i], quad[offset + i]))
            .collect()
    };
    Ok((user(0), user(design.k)))
}

fn nearest_level(levels: &[f64], v: f64) -> f64 {
    *levels
        .iter()
        .min_by(|a, b| {
            (*a - v)
                .abs()
                .partial_cmp(&(*b - v).abs())
                .unwrap()
        })
        .unwrap()
}

/// Single-symbol ML for a ROD pair: user 1 on real PAM, user 2 on the
/// 90-degree-rotated PAM; matched filtering decouples every real symbol.
pub fn ml_decode_rod(
    design: &OrthogonalDesign,
    y: &[Complex64],
    ch: &MacChannel,
    pam1: &Constellation,
    pam2: &Constellation,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if design.kind != DesignKind::Rod {
        return Err(GmacError::InvalidParameter("expected a ROD".into()));
    }
    if y.len() != design.l {
        return Err(GmacError::InvalidParameter("received length != l".into()));
    }
    if pam1.points().iter().any(|p| p.im.abs() > 1e-9) {
        return Err(GmacError::InvalidParameter(
            "user-1 set must be real PAM".into(),
        ));
    }
    if pam2.points().iter().any(|p| p.re.abs() > 1e-9) {
        return Err(GmacError::InvalidParameter(
            "user-2 set must be the 90-degree-rotated PAM".into(),
        ));
    }
    let levels1: Vec<f64> = pam1.points().iter().map(|p| p.re).collect();
    let levels2: Vec<f64> = pam2.points().iter().map(|p| p.im).collect();
    let g1 = equivalent_channel(design, &ch.h1)?;
    let g2 = equivalent_channel(design, &ch.h2)?;
    let a = ch.amplitude();
    let norm1: f64 = ch.h1.iter().map(|v| v.norm_sqr()).sum();
    let norm2: f64 = ch.h2.iter().map(|v| v.norm_sqr()).sum();
    let re = DVector::from_iterator(design.l, y.iter().map(|v| v.re));
    let im = DVector::from_iterator(design.l, y.iter().map(|v| v.im));
    // H^T H = ||h||^2 I, so the matched filter is exact ML per symbol
    let stat1 = g1.transpose() * re / (a * norm1);
    let stat2 = g2.transpose() * im / (a * norm2);
    Ok((
        (0..design.k).map(|i| nearest_level(&levels1, stat1[i])).collect(),
        (0..design.k).map(|i| nearest_level(&levels2, stat2[i])).collect(),
    ))
}

/// Joint exhaustive ML over both users' full symbol vectors; the oracle
/// the fast decoders are verified against.
pub fn ml_decode_joint(
    design: &OrthogonalDesign,
    y: &[Complex64],
    ch: &MacChannel,
    set1: &[Complex64],
    set2: &[Complex64],
) -> Result<(Vec<Complex64>, Vec<Complex64>)> {
    let k = design.k;
    let n1 = set1.len();
    let n2 = set2.len();
    let total = n1.pow(k as u32) * n2.pow(k as u32);
    let mut best = (f64::INFINITY, Vec::new(), Vec::new());
    for idx in 0..total {
        let mut rem = idx;
        let x: Vec<Complex64> = (0..k)
            .map(|_| {
                let s = set1[rem % n1];
                rem /= n1;
                s
            })
            .collect();
        let yv: Vec<Complex64> = (0..k)
            .map(|_| {
                let s = set2[rem % n2];
                rem /= n2;
                s
            })
            .collect();
        let noiseless = transmit(design, ch, &x, &yv)?;
        let resid: f64 = y
            .iter()
            .zip(&noiseless)
            .map(|(a, b)| (a - b).norm_sqr())
            .sum();
        if resid < best.0 {
            best = (resid, x, yv);
        }
    }
    Ok((best.1, best.2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Rod,
    Sod,
}

#[derive(Debug, Clone, Serialize)]
pub struct BerPoint {
    pub snr_db: f64,
    pub ber: f64,
    pub bit_errors: u64,
    pub bits: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BerCurve {
    pub scheme: Scheme,
    pub nt: usize,
    pub points: Vec<BerPoint>,
    pub seed: u64,
}

// Gray labelling of 4 amplitude-ordered levels
const GRAY4: [usize; 4] = [0, 1, 3, 2];

fn gray_index_of(slot: usize) -> usize {
    GRAY4[slot]
}

fn bits_of_symbol(levels_len: usize, slot: usize) -> Vec<u8> {
    debug_assert_eq!(levels_len, 4);
    let g = gray_index_of(slot);
    vec![(g >> 1) as u8, (g & 1) as u8]
}

fn count_bit_errors(levels: &[f64], sent: f64, decided: f64) -> u64 {
    let slot = |v: f64| {
        levels
            .iter()
            .enumerate()
            .min_by(|a, b| (a.1 - v).abs().partial_cmp(&(b.1 - v).abs()).unwrap())
            .unwrap()
            .0
    };
    let a = bits_of_symbol(levels.len(), slot(sent));
    let b = bits_of_symbol(levels.len(), slot(decided));
    a.iter().zip(&b).filter(|(x, y)| x != y).count() as u64
}

/// 2-bpcu-per-user BER: 4-QAM on the SOD pair versus unit-energy 4-PAM
/// (user 2 rotated 90 degrees) on the ROD pair. Stops a point once
/// `min_errors` bit errors or `max_bits` bits are reached.
pub fn ber_simulation(
    scheme: Scheme,
    nt: usize,
    snr_grid_db: &[f64],
    min_errors: u64,
    max_bits: u64,
    seed: u64,
) -> Result<BerCurve> {
    let rod = make_rod(nt)?;
    let design = match scheme {
        Scheme::Rod => rod.clone(),
        Scheme::Sod => make_sod(&rod)?,
    };
    let qam = Constellation::make(ConstellationKind::Qam, 4, true)?;
    let pam = Constellation::make(ConstellationKind::Pam, 4, true)?;
    let pam_rot = pam.rotated(std::f64::consts::FRAC_PI_2);
    let qam_levels = real_axis_levels(&qam)?;
    let pam_levels: Vec<f64> = pam.points().iter().map(|p| p.re).collect();
    let mut points = Vec::new();
    for (pt_idx, &snr_db) in snr_grid_db.iter().enumerate() {
        let rho = 10f64.powf(snr_db / 10.0);
        let mut errors = 0u64;
        let mut bits = 0u64;
        let mut shard = 0u64;
        let blocks_per_shard = 256u64;
        // fixed batch geometry so results depend only on the seed
        let batch_shards = 16u64;
        while errors < min_errors && bits < max_bits {
            let batch: Vec<(u64, u64)> = (shard..shard + batch_shards)
                .into_par_iter()
                .map(|s| {
                    let tag = 0x6265_7200 | pt_idx as u64;
                    let mut rng = stream(seed, tag, s);
                    let mut errs = 0u64;
                    let mut bts = 0u64;
                    for _ in 0..blocks_per_shard {
                        let ch = MacChannel::draw(nt, rho, &mut rng);
                        let (e, b) = match scheme {
                            Scheme::Sod => {
                                // 4-QAM: one bit per axis
                                let draw_sym = |rng: &mut rand_chacha::ChaCha8Rng| {
                                    let i = rng.gen_range(0..2usize);
                                    let q = rng.gen_range(0..2usize);
                                    (
                                        Complex64::new(qam_levels[i], qam_levels[q]),
                                        [i as u8, q as u8],
                                    )
                                };
                                let mut x = Vec::new();
                                let mut y = Vec::new();
                                for _ in 0..design.k {
                                    x.push(draw_sym(&mut rng).0);
                                }
                                for _ in 0..design.k {
                                    y.push(draw_sym(&mut rng).0);
                                }
                                let mut rx = transmit(&design, &ch, &x, &y).unwrap();
                                for v in rx.iter_mut() {
                                    *v += crate::capacity::draw_noise(&mut rng, 1.0);
                                }
                                let (dx, dy) =
                                    ml_decode_sod(&design, &rx, &ch, &qam).unwrap();
                                let mut rx_bits = Vec::new();
                                for s in dx.iter().chain(dy.iter()) {
                                    let bi = if s.re > 0.0 { 1u8 } else { 0u8 };
                                    let bq = if s.im > 0.0 { 1u8 } else { 0u8 };
                                    rx_bits.push(bi);
                                    rx_bits.push(bq);
                                }
                                let tx_decoded: Vec<u8> = x
                                    .iter()
                                    .chain(y.iter())
                                    .flat_map(|s| {
                                        vec![
                                            if s.re > 0.0 { 1u8 } else { 0 },
                                            if s.im > 0.0 { 1u8 } else { 0 },
                                        ]
                                    })
                                    .collect();
                                let e = tx_decoded
                                    .iter()
                                    .zip(&rx_bits)
                                    .filter(|(a, b)| a != b)
                                    .count() as u64;
                                (e, 4 * design.k as u64)
                            }
                            Scheme::Rod => {
                                let mut x = Vec::new();
                                let mut y = Vec::new();
                                let mut slots1 = Vec::new();
                                let mut slots2 = Vec::new();
                                for _ in 0..design.k {
                                    let s = rng.gen_range(0..4usize);
                                    slots1.push(s);
                                    x.push(Complex64::new(pam_levels[s], 0.0));
                                }
                                for _ in 0..design.k {
                                    let s = rng.gen_range(0..4usize);
                                    slots2.push(s);
                                    y.push(Complex64::new(0.0, pam_levels[s]));
                                }
                                let mut rx = transmit(&design, &ch, &x, &y).unwrap();
                                for v in rx.iter_mut() {
                                    *v += crate::capacity::draw_noise(&mut rng, 1.0);
                                }
                                let (d1, d2) =
                                    ml_decode_rod(&design, &rx, &ch, &pam, &pam_rot)
                                        .unwrap();
                                let mut e = 0u64;
                                for i in 0..design.k {
                                    e += count_bit_errors(
                                        &pam_levels,
                                        pam_levels[slots1[i]],
                                        d1[i],
                                    );
                                    e += count_bit_errors(
                                        &pam_levels,
                                        pam_levels[slots2[i]],
                                        d2[i],
                                    );
                                }
                                (e, 4 * design.k as u64)
                            }
                        };
                        errs += e;
                        bts += b;
                    }
                    (errs, bts)
                })
                .collect();
            for (e, b) in batch {
                errors += e;
                bits += b;
            }
            shard += batch_shards;
        }
        points.push(BerPoint {
            snr_db,
            ber: errors as f64 / bits as f64,
            bit_errors: errors,
            bits,
        });
    }
    Ok(BerCurve {
        scheme,
        nt,
        points,
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quadrature::expect_log2_gamma;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn hr_invariants_hold_for_all_nt() {
        for nt in 1..=8 {
            let rod = make_rod(nt).unwrap();
            assert!(
                hr_residual(&rod) < 1e-12,
                "Nt = {nt}: residual {}",
                hr_residual(&rod)
            );
            let sod = make_sod(&rod).unwrap();
            assert!(hr_residual(&sod) < 1e-12);
            assert_eq!(rod.k, rod.l, "rate-1");
        }
        assert!(make_rod(0).is_err());
        assert!(make_rod(9).is_err());
    }

    #[test]
    fn nt2_matches_the_stated_matrices() {
        let rod = make_rod(2).unwrap();
        assert_eq!(rod.rep_matrices[0], DMatrix::identity(2, 2));
        assert_eq!(
            rod.rep_matrices[1],
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, 0.0])
        );
    }

    #[test]
    fn nt3_is_rectangular_rate_1() {
        let rod = make_rod(3).unwrap();
        assert_eq!((rod.l, rod.nt, rod.k), (4, 3, 4));
        assert!(hr_residual(&rod) < 1e-12);
    }

    #[test]
    fn corrupted_design_fails_invariants() {
        let mut rod = make_rod(4).unwrap();
        rod.rep_matrices[1][(0, 1)] = -rod.rep_matrices[1][(0, 1)];
        assert!(hr_residual(&rod) > 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let h1 = draw_channel(4, &mut rng);
        let h2 = draw_channel(4, &mut rng);
        let sod = OrthogonalDesign {
            kind: DesignKind::Sod,
            ..rod
        };
        assert!(losslessness_residual(&sod, &h1, &h2).unwrap() > 0.1);
    }

    #[test]
    fn losslessness_residual_is_tiny() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for nt in [2usize, 4, 8] {
            let sod = make_sod(&make_rod(nt).unwrap()).unwrap();
            let rod = make_rod(nt).unwrap();
            let mut worst: f64 = 0.0;
            for _ in 0..1000 {
                let h1 = draw_channel(nt, &mut rng);
                let h2 = draw_channel(nt, &mut rng);
                worst = worst.max(losslessness_residual(&sod, &h1, &h2).unwrap());
                worst = worst.max(losslessness_residual(&rod, &h1, &h2).unwrap());
            }
            assert!(worst < 1e-10, "Nt = {nt}: worst residual {worst}");
        }
    }

    #[test]
    fn sum_capacity_matches_gamma_quadrature() {
        let nt = 2;
        let rho = 10.0f64;
        let est = mac_sum_capacity(nt, rho, 200_000, 77).unwrap();
        // ||h1||^2 + ||h2||^2 is Gamma(2 Nt, 1)
        let oracle = expect_log2_gamma(2 * nt, rho / (2.0 * nt as f64), 80);
        assert!(
            (est.value - oracle).abs() < 3.0 * est.std_error,
            "mc {} vs quadrature {} (se {})",
            est.value,
            oracle,
            est.std_error
        );
    }

    #[test]
    fn zero_snr_capacity_is_zero() {
        let est = mac_sum_capacity(2, 0.0, 10_000, 1).unwrap();
        assert_abs_diff_eq!(est.value, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(est.std_error, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn sod_is_information_lossless() {
        for nt in [2usize, 4] {
            for &rho_db in &[0.0f64, 5.0, 10.0, 15.0] {
                let rho = 10f64.powf(rho_db / 10.0);
                let cap = mac_sum_capacity(nt, rho, 50_000, 5).unwrap();
                let sod = make_sod(&make_rod(nt).unwrap()).unwrap();
                let mi = stbc_mutual_info(&sod, rho, 50_000, 5).unwrap();
                let se = (cap.std_error.powi(2) + mi.std_error.powi(2)).sqrt();
                assert!(
                    (cap.value - mi.value).abs() < 3.0 * se + 1e-9,
                    "Nt={nt} rho={rho_db}dB: {} vs {}",
                    cap.value,
                    mi.value
                );
            }
        }
    }

    #[test]
    fn rod_is_lossy_but_gap_shrinks() {
        let rho = 10.0f64;
        let mut gaps = Vec::new();
        for nt in [2usize, 4, 8] {
            let cap = mac_sum_capacity(nt, rho, 150_000, 9).unwrap();
            let rod = make_rod(nt).unwrap();
            let mi = stbc_mutual_info(&rod, rho, 150_000, 9).unwrap();
            // Eq.-23-form oracle: ||h||^2 is Gamma(Nt, 1)
            let oracle = expect_log2_gamma(nt, rho / nt as f64, 80);
            assert!((mi.value - oracle).abs() < 3.0 * mi.std_error);
            gaps.push(cap.value - mi.value);
        }
        assert!(gaps[0] > 0.01, "Nt=2 should be visibly lossy: {}", gaps[0]);
        assert!(gaps[0] > gaps[1] && gaps[1] > gaps[2], "gaps {gaps:?}");
    }

    #[test]
    fn csit_p_equivalence() {
        // every statistic depends on the channel only through magnitudes,
        // so phase compensation changes nothing with shared |h| draws
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let nt = 4;
        let sod = make_sod(&make_rod(nt).unwrap()).unwrap();
        for _ in 0..50 {
            let h1 = draw_channel(nt, &mut rng);
            let h2 = draw_channel(nt, &mut rng);
            let mag = |h: &[Complex64]| -> Vec<Complex64> {
                h.iter().map(|v| Complex64::new(v.norm(), 0.0)).collect()
            };
            let r_raw = losslessness_residual(&sod, &h1, &h2).unwrap();
            let r_mag = losslessness_residual(&sod, &mag(&h1), &mag(&h2)).unwrap();
            assert_abs_diff_eq!(r_raw, r_mag, epsilon = 1e-12);
            let g_raw = equivalent_channel(&sod, &h1).unwrap();
            let g_mag = equivalent_channel(&sod, &mag(&h1)).unwrap();
            assert!((g_raw - g_mag).abs().max() < 1e-12);
        }
    }

    #[test]
    fn sod_decoder_recovers_noiseless() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let qam = Constellation::make(ConstellationKind::Qam, 4, true).unwrap();
        for nt in [2usize, 4] {
            let sod = make_sod(&make_rod(nt).unwrap()).unwrap();
            for _ in 0..20 {
                let ch = MacChannel::draw(nt, 10.0, &mut rng);
                let pick = |rng: &mut ChaCha8Rng| {
                    (0..sod.k)
                        .map(|_| qam.point(rng.gen_range(0..4)))
                        .collect::<Vec<_>>()
                };
                let x = pick(&mut rng);
                let y = pick(&mut rng);
                let rx = transmit(&sod, &ch, &x, &y).unwrap();
                let (dx, dy) = ml_decode_sod(&sod, &rx, &ch, &qam).unwrap();
                for i in 0..sod.k {
                    assert!((dx[i] - x[i]).norm() < 1e-9);
                    assert!((dy[i] - y[i]).norm() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn rod_decoder_recovers_noiseless_and_rejects_bad_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let pam = Constellation::make(ConstellationKind::Pam, 4, true).unwrap();
        let pam_rot = pam.rotated(std::f64::consts::FRAC_PI_2);
        let rod = make_rod(2).unwrap();
        let ch = MacChannel::draw(2, 10.0, &mut rng);
        let x: Vec<Complex64> = (0..2).map(|_| pam.point(rng.gen_range(0..4))).collect();
        let y: Vec<Complex64> = (0..2).map(|_| pam_rot.point(rng.gen_range(0..4))).collect();
        let rx = transmit(&rod, &ch, &x, &y).unwrap();
        let (d1, d2) = ml_decode_rod(&rod, &rx, &ch, &pam, &pam_rot).unwrap();
        for i in 0..2 {
            assert!((d1[i] - x[i].re).abs() < 1e-9);
            assert!((d2[i] - y[i].im).abs() < 1e-9);
        }
        // orientation check
        assert!(ml_decode_rod(&rod, &rx, &ch, &pam_rot, &pam).is_err());
    }

    #[test]
    fn rod_decisions_are_per_symbol_independent() {
        // the decision statistic for one symbol is unchanged when the
        // other transmitted symbols are permuted
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let pam = Constellation::make(ConstellationKind::Pam, 4, true).unwrap();
        let rod = make_rod(4).unwrap();
        let ch = MacChannel::draw(4, 8.0, &mut rng);
        let g1 = equivalent_channel(&rod, &ch.h1).unwrap();
        let a = ch.amplitude();
        let norm1: f64 = ch.h1.iter().map(|v| v.norm_sqr()).sum();
        let base: Vec<f64> = (0..4).map(|i| pam.point(i).re).collect();
        let noise: Vec<f64> = (0..rod.l).map(|_| 0.1 * rng.gen_range(-1.0f64..1.0)).collect();
        let stat_of = |x: &[f64]| -> f64 {
            let v = DVector::from_column_slice(x);
            let rx = &g1 * v * a + DVector::from_column_slice(&noise);
            (g1.transpose() * rx / (a * norm1))[0]
        };
        let s_a = stat_of(&[base[0], base[1], base[2], base[3]]);
        let s_b = stat_of(&[base[0], base[3], base[1], base[2]]);
        assert_abs_diff_eq!(s_a, s_b, epsilon = 1e-12);
    }

    #[test]
    fn decoders_match_joint_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let qam = Constellation::make(ConstellationKind::Qam, 4, true).unwrap();
        let pam = Constellation::make(ConstellationKind::Pam, 4, true).unwrap();
        let pam_rot = pam.rotated(std::f64::consts::FRAC_PI_2);
        // SOD, Nt = 2: 500 noisy trials against the 4^(2k) joint search
        let sod = make_sod(&make_rod(2).unwrap()).unwrap();
        for _ in 0..500 {
            let ch = MacChannel::draw(2, 6.0, &mut rng);
            let x: Vec<Complex64> = (0..2).map(|_| qam.point(rng.gen_range(0..4))).collect();
            let y: Vec<Complex64> = (0..2).map(|_| qam.point(rng.gen_range(0..4))).collect();
            let mut rx = transmit(&sod, &ch, &x, &y).unwrap();
            for v in rx.iter_mut() {
                *v += crate::capacity::draw_noise(&mut rng, 1.0);
            }
            let (fx, fy) = ml_decode_sod(&sod, &rx, &ch, &qam).unwrap();
            let (jx, jy) =
                ml_decode_joint(&sod, &rx, &ch, qam.points(), qam.points()).unwrap();
            for i in 0..2 {
                assert!((fx[i] - jx[i]).norm() < 1e-9);
                assert!((fy[i] - jy[i]).norm() < 1e-9);
            }
        }
        // ROD, Nt = 2
        let rod = make_rod(2).unwrap();
        for _ in 0..500 {
            let ch = MacChannel::draw(2, 6.0, &mut rng);
            let x: Vec<Complex64> = (0..2).map(|_| pam.point(rng.gen_range(0..4))).collect();
            let y: Vec<Complex64> =
                (0..2).map(|_| pam_rot.point(rng.gen_range(0..4))).collect();
            let mut rx = transmit(&rod, &ch, &x, &y).unwrap();
            for v in rx.iter_mut() {
                *v += crate::capacity::draw_noise(&mut rng, 1.0);
            }
            let (f1, f2) = ml_decode_rod(&rod, &rx, &ch, &pam, &pam_rot).unwrap();
            let (j1, j2) =
                ml_decode_joint(&rod, &rx, &ch, pam.points(), pam_rot.points()).unwrap();
            for i in 0..2 {
                assert!((f1[i] - j1[i].re).abs() < 1e-9);
                assert!((f2[i] - j2[i].im).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn full_diversity_rank_test() {
        // single-user codeword differences have full column rank
        let qam = Constellation::make(ConstellationKind::Qam, 4, true).unwrap();
        for nt in [2usize, 4] {
            let sod = make_sod(&make_rod(nt).unwrap()).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(31);
            let n_trials = 200;
            for _ in 0..n_trials {
                let a: Vec<Complex64> =
                    (0..sod.k).map(|_| qam.point(rng.gen_range(0..4))).collect();
                let b: Vec<Complex64> =
                    (0..sod.k).map(|_| qam.point(rng.gen_range(0..4))).collect();
                if a.iter().zip(&b).all(|(x, y)| (x - y).norm() < 1e-12) {
                    continue;
                }
                // difference codeword as stacked real/imag block
                let d: Vec<Complex64> = a.iter().zip(&b).map(|(x, y)| x - y).collect();
                let di = DVector::from_iterator(sod.k, d.iter().map(|v| v.re));
                let dq = DVector::from_iterator(sod.k, d.iter().map(|v| v.im));
                let mut delta = DMatrix::<f64>::zeros(2 * sod.l, nt);
                for (i, am) in sod.rep_matrices.iter().enumerate() {
                    delta.view_mut((0, i), (sod.l, 1)).copy_from(&(am * &di));
                    delta
                        .view_mut((sod.l, i), (sod.l, 1))
                        .copy_from(&(am * &dq));
                }
                let svd = delta.svd(false, false);
                let smin = svd
                    .singular_values
                    .iter()
                    .cloned()
                    .fold(f64::INFINITY, f64::min);
                assert!(smin > 1e-9, "rank-deficient difference at Nt = {nt}");
            }
        }
    }

    #[test]
    fn ber_rod_beats_sod_at_high_snr() {
        let grid = [6.0, 12.0, 18.0];
        let rod = ber_simulation(Scheme::Rod, 2, &grid, 100, 400_000, 13).unwrap();
        let sod = ber_simulation(Scheme::Sod, 2, &grid, 100, 400_000, 13).unwrap();
        for (r, s) in rod.points.iter().zip(&sod.points).skip(1) {
            assert!(
                r.ber < s.ber,
                "at {} dB: rod {} vs sod {}",
                r.snr_db,
                r.ber,
                s.ber
            );
        }
        // monotone decay on the grid
        assert!(rod.points[2].ber < rod.points[0].ber);
        assert!(sod.points[2].ber < sod.points[0].ber);
    }
}
