//! Deterministic quadrature reference integrators.
//!
//! These serve as independent oracles for the Monte-Carlo estimators in
//! [`crate::capacity`] and [`crate::mimo`]; production paths do not depend
//! on them. Nodes and weights come from the Golub-Welsch eigenvalue method
//! on the Jacobi matrix of the respective orthogonal polynomial family.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

use crate::signal::Constellation;

fn golub_welsch(diag: &[f64], offdiag: &[f64], moment0: f64) -> (Vec<f64>, Vec<f64>) {
    let n = diag.len();
    let mut jacobi = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        jacobi[(i, i)] = diag[i];
    }
    for i in 0..n - 1 {
        jacobi[(i, i + 1)] = offdiag[i];
        jacobi[(i + 1, i)] = offdiag[i];
    }
    let eig = SymmetricEigen::new(jacobi);
    let mut pairs: Vec<(f64, f64)> = (0..n)
        .map(|i| {
            let v0 = eig.eigenvectors[(0, i)];
            (eig.eigenvalues[i], moment0 * v0 * v0)
        })
        .collect();
    pairs.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    pairs.into_iter().unzip()
}

/// Nodes and weights of the order-`n` Gauss-Hermite rule for
/// `integral e^{-t^2} f(t) dt` (physicists' weight).
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let diag = vec![0.0; n];
    let offdiag: Vec<f64> = (1..n).map(|j| (j as f64 / 2.0).sqrt()).collect();
    golub_welsch(&diag, &offdiag, std::f64::consts::PI.sqrt())
}

/// Nodes and weights of the order-`n` Gauss-Laguerre rule for
/// `integral_0^inf e^{-t} f(t) dt`.
pub fn gauss_laguerre(n: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(n >= 2);
    let diag: Vec<f64> = (0..n).map(|j| 2.0 * j as f64 + 1.0).collect();
    let offdiag: Vec<f64> = (1..n).map(|j| j as f64).collect();
    golub_welsch(&diag, &offdiag, 1.0)
}

/// Expectation of `f(z)` over `z ~ CN(0, sigma2)` by a tensor Gauss-Hermite
/// rule of the given order per real dimension.
pub fn expect_complex_gaussian(sigma2: f64, order: usize, f: impl Fn(Complex64) -> f64) -> f64 {
    let (nodes, weights) = gauss_hermite(order);
    // Re z, Im z ~ N(0, sigma2/2): substitution z = sqrt(sigma2) (ta + i tb).
    let s = sigma2.sqrt();
    let mut acc = 0.0;
    for (i, &ta) in nodes.iter().enumerate() {
        for (j, &tb) in nodes.iter().enumerate() {
            let z = Complex64::new(s * ta, s * tb);
            acc += weights[i] * weights[j] * f(z);
        }
    }
    acc / std::f64::consts::PI
}

/// Deterministic evaluation of `I(x1 : y | x2)`.
pub fn mi_conditional_quadrature(c1: &Constellation, sigma2: f64, order: usize) -> f64 {
    let points = c1.points();
    let m = points.len();
    let mut mean = 0.0;
    for k1 in 0..m {
        mean += expect_complex_gaussian(sigma2, order, |z| {
            let z_sq = z.norm_sqr();
            let mut acc = 0.0;
            for p in points {
                let d = points[k1] - p + z;
                acc += ((z_sq - d.norm_sqr()) / sigma2).exp();
            }
            acc.log2()
        });
    }
    (m as f64).log2() - mean / m as f64
}

/// Deterministic evaluation of `I(x2 : y)`.
pub fn mi_marginal_quadrature(
    c1: &Constellation,
    c2: &Constellation,
    sigma2: f64,
    order: usize,
) -> f64 {
    let p1 = c1.points();
    let p2 = c2.points();
    let (n1, n2) = (p1.len(), p2.len());
    let mut mean = 0.0;
    for k1 in 0..n1 {
        for k2 in 0..n2 {
            mean += expect_complex_gaussian(sigma2, order, |z| {
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
            });
        }
    }
    (n2 as f64).log2() - mean / (n1 * n2) as f64
}

/// `E[log2(1 + c * g)]` for `g ~ Gamma(k, 1)` via Gauss-Laguerre.
pub fn expect_log2_gamma(k: usize, c: f64, order: usize) -> f64 {
    let (nodes, weights) = gauss_laguerre(order);
    let log_gamma_k: f64 = (1..k).map(|j| (j as f64).ln()).sum();
    let mut acc = 0.0;
    for (&x, &w) in nodes.iter().zip(&weights) {
        let density = ((k as f64 - 1.0) * x.ln() - log_gamma_k).exp();
        acc += w * density * (1.0 + c * x).log2();
    }
    acc
}
