//! Finite complex constellations, sum alphabets and distance distributions.
//!
//! Everything here is immutable after construction and cheap to clone, so
//! values can be shared freely across worker threads.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{GmacError, Result};

/// Absolute per-coordinate tolerance for treating two complex points as equal.
pub const TAU_EQ: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConstellationKind {
    Psk,
    Pam,
    Qam,
    Custom,
}

impl std::fmt::Display for ConstellationKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            ConstellationKind::Psk => "psk",
            ConstellationKind::Pam => "pam",
            ConstellationKind::Qam => "qam",
            ConstellationKind::Custom => "custom",
        };
        f.write_str(s)
    }
}

/// An ordered finite set of complex signal points.
///
/// Ordering is fixed at construction (phase-ascending for PSK,
/// amplitude-ascending for PAM, row-major for QAM) so that indices used by
/// partitions and trellis labellings are reproducible.
#[derive(Debug, Clone)]
pub struct Constellation {
    points: Vec<Complex64>,
    kind: ConstellationKind,
    m: usize,
    /// Accumulated rotation applied since construction, radians.
    theta: f64,
    avg_energy: f64,
}

impl Constellation {
    /// Builds a standard constellation.
    ///
    /// * PSK: points `e^{i 2 pi n / M}` for `n = 0..M`, unit energy by nature.
    /// * PAM: `{-(M-1), ..., -1, 1, ..., M-1}` on the real axis, scaled to
    ///   unit average energy when `unit_energy` is set (4-PAM becomes
    ///   `sqrt(1/5) * {-3,-1,1,3}`).
    /// * QAM: square grid when `M` is an even power of two, the rectangular
    ///   grid (wider in-phase side) otherwise, scaled likewise.
    pub fn make(kind: ConstellationKind, m: usize, unit_energy: bool) -> Result<Self> {
        if m < 2 {
            return Err(GmacError::UnsupportedConstellation {
                kind: kind.to_string(),
                m,
            });
        }
        let points = match kind {
            ConstellationKind::Psk => {
                if !m.is_power_of_two() {
                    return Err(GmacError::UnsupportedConstellation {
                        kind: kind.to_string(),
                        m,
                    });
                }
                (0..m)
                    .map(|n| Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * n as f64 / m as f64))
                    .collect::<Vec<_>>()
            }
            ConstellationKind::Pam => {
                if !m.is_multiple_of(2) {
                    return Err(GmacError::UnsupportedConstellation {
                        kind: kind.to_string(),
                        m,
                    });
                }
                (0..m)
                    .map(|n| Complex64::new((2 * n as i64 - m as i64 + 1) as f64, 0.0))
                    .collect::<Vec<_>>()
            }
            ConstellationKind::Qam => {
                if !m.is_power_of_two() || m < 4 {
                    return Err(GmacError::UnsupportedConstellation {
                        kind: kind.to_string(),
                        m,
                    });
                }
                let log2m = m.trailing_zeros();
                let (cols, rows) = if log2m.is_multiple_of(2) {
                    let side = 1usize << (log2m / 2);
                    (side, side)
                } else {
                    // rectangular grid, e.g. 8-QAM as 4x2
                    (1usize << (log2m / 2 + 1), 1usize << (log2m / 2))
                };
                let mut pts = Vec::with_capacity(m);
                for r in 0..rows {
                    for c in 0..cols {
                        let re = (2 * c as i64 - cols as i64 + 1) as f64;
                        let im = (2 * r as i64 - rows as i64 + 1) as f64;
                        pts.push(Complex64::new(re, im));
                    }
                }
                pts
            }
            ConstellationKind::Custom => {
                return Err(GmacError::UnsupportedConstellation {
                    kind: kind.to_string(),
                    m,
                })
            }
        };
        let mut c = Self::from_points(points, kind)?;
        if unit_energy && kind != ConstellationKind::Psk {
            let p = c.avg_energy;
            c = c.scaled_power(1.0 / p);
        }
        Ok(c)
    }

    /// Wraps an explicit point list. Points must be distinct under [`TAU_EQ`].
    pub fn from_points(points: Vec<Complex64>, kind: ConstellationKind) -> Result<Self> {
        if points.len() < 2 {
            return Err(GmacError::InvalidParameter(
                "constellation needs at least 2 points".into(),
            ));
        }
        for a in 0..points.len() {
            for b in a + 1..points.len() {
                if points_equal(points[a], points[b]) {
                    return Err(GmacError::InvalidParameter(format!(
                        "constellation points {a} and {b} coincide"
                    )));
                }
            }
        }
        let m = points.len();
        let avg_energy = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
        Ok(Self {
            points,
            kind,
            m,
            theta: 0.0,
            avg_energy,
        })
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn point(&self, idx: usize) -> Complex64 {
        self.points[idx]
    }

    pub fn len(&self) -> usize {
        self.m
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn kind(&self) -> ConstellationKind {
        self.kind
    }

    pub fn theta(&self) -> f64 {
        self.theta
    }

    /// Average energy, recomputed from the points.
    pub fn avg_energy(&self) -> f64 {
        self.avg_energy
    }

    /// Returns the constellation with every point multiplied by `e^{i theta}`.
    pub fn rotated(&self, theta: f64) -> Self {
        let rot = Complex64::from_polar(1.0, theta);
        let points: Vec<_> = self.points.iter().map(|p| p * rot).collect();
        let avg_energy = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.m as f64;
        Self {
            points,
            kind: self.kind,
            m: self.m,
            theta: self.theta + theta,
            avg_energy,
        }
    }

    /// Scales the average energy by `power` (every point by `sqrt(power)`).
    pub fn scaled_power(&self, power: f64) -> Self {
        let s = power.sqrt();
        let points: Vec<_> = self.points.iter().map(|p| p * s).collect();
        let avg_energy = points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.m as f64;
        Self {
            points,
            kind: self.kind,
            m: self.m,
            theta: self.theta,
            avg_energy,
        }
    }

    /// Minimum squared Euclidean distance between distinct points.
    pub fn min_sq_distance(&self) -> f64 {
        self.distance_distribution()
            .into_iter()
            .fold(f64::INFINITY, f64::min)
    }

    /// All `C(M, 2)` squared pairwise distances, as a multiset.
    pub fn distance_distribution(&self) -> Vec<f64> {
        let mut dd = Vec::with_capacity(self.m * (self.m - 1) / 2);
        for a in 0..self.m {
            for b in a + 1..self.m {
                dd.push((self.points[a] - self.points[b]).norm_sqr());
            }
        }
        dd.sort_by(|x, y| x.partial_cmp(y).unwrap());
        dd
    }

    /// Serializable record of the constellation.
    pub fn record(&self) -> ConstellationRecord {
        ConstellationRecord {
            kind: self.kind,
            m: self.m,
            theta: self.theta,
            points: self.points.iter().map(|p| [p.re, p.im]).collect(),
        }
    }
}

/// JSON-facing form of a constellation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConstellationRecord {
    pub kind: ConstellationKind,
    #[serde(rename = "M")]
    pub m: usize,
    pub theta: f64,
    pub points: Vec<[f64; 2]>,
}

pub fn points_equal(a: Complex64, b: Complex64) -> bool {
    (a.re - b.re).abs() <= TAU_EQ && (a.im - b.im).abs() <= TAU_EQ
}

/// The image of the adder map for an alphabet pair, with pair provenance.
#[derive(Debug, Clone)]
pub struct SumAlphabet {
    /// `(index into c1, index into c2, sum point)` for every ordered pair.
    pub entries: Vec<(usize, usize, Complex64)>,
    /// Deduplicated sum points under [`TAU_EQ`].
    pub distinct_points: Vec<Complex64>,
}

impl SumAlphabet {
    pub fn new(c1: &Constellation, c2: &Constellation) -> Self {
        let mut entries = Vec::with_capacity(c1.len() * c2.len());
        for (i1, p1) in c1.points().iter().enumerate() {
            for (i2, p2) in c2.points().iter().enumerate() {
                entries.push((i1, i2, p1 + p2));
            }
        }
        let mut distinct_points: Vec<Complex64> = Vec::new();
        for &(_, _, p) in &entries {
            if !distinct_points.iter().any(|&q| points_equal(p, q)) {
                distinct_points.push(p);
            }
        }
        Self {
            entries,
            distinct_points,
        }
    }
}

/// Builds the sum alphabet of two constellations.
pub fn sum_alphabet(c1: &Constellation, c2: &Constellation) -> SumAlphabet {
    SumAlphabet::new(c1, c2)
}

/// True iff the adder map `(x1, x2) -> x1 + x2` is injective.
pub fn is_uniquely_decodable(c1: &Constellation, c2: &Constellation) -> bool {
    let sa = SumAlphabet::new(c1, c2);
    sa.distinct_points.len() == c1.len() * c2.len()
}
