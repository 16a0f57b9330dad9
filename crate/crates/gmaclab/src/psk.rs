//! Concentric-ring geometry of the sum alphabet of two rotated M-PSK sets,
//! closed-form partition minimum distances, and partition-optimality
//! searches over balanced two-set splits.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;
use std::f64::consts::PI;

use crate::error::{GmacError, Result};
use crate::signal::{sum_alphabet, Constellation, ConstellationKind};

/// Which concentric circle a sum point falls on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ring {
    Outer(usize),
    Inner(usize),
}

/// Ring decomposition of `S1 + e^{i theta} S1` for M-PSK.
#[derive(Debug, Clone)]
pub struct RingStructure {
    pub m: usize,
    pub theta: f64,
    /// `r(O^m) = 2 cos(pi m / M + theta / 2)` for `m = 0..M/2`.
    pub outer_radii: Vec<f64>,
    /// `r(I^m) = 2 cos(pi (m+1) / M - theta / 2)` for `m = 0..M/2`.
    pub inner_radii: Vec<f64>,
    /// Ring and phase of the sum point `x(n) + x'(n')`, indexed `n * M + n'`.
    pub point_assignment: Vec<(Ring, f64)>,
}

fn validate_psk_domain(m: usize, theta: f64) -> Result<f64> {
    if !m.is_power_of_two() || m < 4 {
        return Err(GmacError::Domain(format!(
            "M must be a power of two >= 4, got {m}"
        )));
    }
    // The sum structure at theta is identical to that at theta + pi/M, so
    // reduce from (0, 2 pi / M) down to (0, pi / M].
    let lim = PI / m as f64;
    let reduced = if theta > lim && theta < 2.0 * lim {
        theta - lim
    } else {
        theta
    };
    if !(reduced > 0.0 && reduced <= lim) {
        return Err(GmacError::Domain(format!(
            "theta = {theta} outside (0, pi/M] after reduction"
        )));
    }
    Ok(reduced)
}

impl RingStructure {
    pub fn new(m: usize, theta: f64) -> Result<Self> {
        let theta = validate_psk_domain(m, theta)?;
        let mf = m as f64;
        let half = m / 2;
        let outer_radii: Vec<f64> = (0..half)
            .map(|k| 2.0 * (PI * k as f64 / mf + theta / 2.0).cos())
            .collect();
        let inner_radii: Vec<f64> = (0..half)
            .map(|k| 2.0 * (PI * (k as f64 + 1.0) / mf - theta / 2.0).cos())
            .collect();
        let mut point_assignment = Vec::with_capacity(m * m);
        for n in 0..m {
            for np in 0..m {
                let delta = (np + m - n) % m;
                let (ring, phase) = if delta < half {
                    (
                        Ring::Outer(delta),
                        2.0 * PI * n as f64 / mf + PI * delta as f64 / mf + theta / 2.0,
                    )
                } else {
                    let mm = m - 1 - delta;
                    (
                        Ring::Inner(mm),
                        2.0 * PI * n as f64 / mf - PI * (mm as f64 + 1.0) / mf + theta / 2.0,
                    )
                };
                point_assignment.push((ring, phase));
            }
        }
        Ok(Self {
            m,
            theta,
            outer_radii,
            inner_radii,
            point_assignment,
        })
    }

    pub fn radius(&self, ring: Ring) -> f64 {
        match ring {
            Ring::Outer(k) => self.outer_radii[k],
            Ring::Inner(k) => self.inner_radii[k],
        }
    }

    /// Number of distinct radii (M in general, M/2 when theta = pi/M).
    pub fn distinct_radius_count(&self, tol: f64) -> usize {
        let mut radii: Vec<f64> = self
            .outer_radii
            .iter()
            .chain(self.inner_radii.iter())
            .cloned()
            .collect();
        radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut count = 1;
        for w in radii.windows(2) {
            if (w[1] - w[0]).abs() > tol {
                count += 1;
            }
        }
        count
    }
}

/// Builds the ring structure and cross-checks every radius against the
/// actual sum-point magnitudes.
pub fn ring_structure(m: usize, theta: f64) -> Result<RingStructure> {
    let rs = RingStructure::new(m, theta)?;
    let c1 = Constellation::make(ConstellationKind::Psk, m, true)?;
    let c2 = c1.rotated(rs.theta);
    let sa = sum_alphabet(&c1, &c2);
    for &(n, np, p) in &sa.entries {
        let (ring, _) = rs.point_assignment[n * m + np];
        if (p.norm() - rs.radius(ring)).abs() > 1e-9 {
            return Err(GmacError::Domain(format!(
                "ring radius mismatch at ({n}, {np}): |p| = {}, r = {}",
                p.norm(),
                rs.radius(ring)
            )));
        }
    }
    Ok(rs)
}

/// One verified inequality or monotone-sequence claim.
#[derive(Debug, Clone, Serialize)]
pub struct PropositionCheck {
    pub name: &'static str,
    pub holds: bool,
    /// Worst margin by which the claim holds (negative would mean violated).
    pub worst_slack: f64,
}

fn chord(r1: f64, r2: f64, angle: f64) -> f64 {
    (r1 * r1 + r2 * r2 - 2.0 * r1 * r2 * angle.cos()).sqrt()
}

/// Numerically verifies the monotone-sequence and chord inequalities of the
/// ring radii. Violations are reported, not thrown.
pub fn verify_monotone_propositions(m: usize, theta: f64) -> Result<Vec<PropositionCheck>> {
    let rs = RingStructure::new(m, theta)?;
    let half = m / 2;
    let mf = m as f64;
    let sep = 2.0 * PI / mf;
    let ro = &rs.outer_radii;
    let ri = &rs.inner_radii;
    let mut checks = Vec::new();

    let increasing = |name: &'static str, seq: Vec<f64>| {
        let mut slack = f64::INFINITY;
        for w in seq.windows(2) {
            slack = slack.min(w[1] - w[0]);
        }
        PropositionCheck {
            name,
            holds: slack >= -1e-12,
            worst_slack: slack,
        }
    };
    checks.push(increasing(
        "prop2: r(O^k) - r(I^k) increasing",
        (0..half).map(|k| ro[k] - ri[k]).collect(),
    ));
    checks.push(increasing(
        "prop3: r(O^k) - r(I^{k+1}) increasing",
        (0..half - 1).map(|k| ro[k] - ri[k + 1]).collect(),
    ));
    checks.push(increasing(
        "prop4: r(I^k) - r(O^{k+1}) increasing",
        (0..half - 1).map(|k| ri[k] - ro[k + 1]).collect(),
    ));

    let mut slack6 = f64::INFINITY;
    for q in 1..half {
        slack6 = slack6.min(chord(ri[q - 1], ro[q], sep) - chord(ro[q], ro[q], sep));
    }
    checks.push(PropositionCheck {
        name: "prop6: diagonal chord dominates same-circle chord",
        holds: slack6 >= -1e-12,
        worst_slack: slack6,
    });

    if m >= 8 {
        let mut slack7 = f64::INFINITY;
        for q in 1..=half - 3 {
            slack7 = slack7.min(chord(ro[q], ro[q], sep) - 2.0 * ro[half - 1] * sep.sin());
        }
        checks.push(PropositionCheck {
            name: "prop7: outer chords dominate innermost outer chord",
            holds: slack7 >= -1e-12,
            worst_slack: slack7,
        });
        let mut slack8 = f64::INFINITY;
        for q in 1..=half - 3 {
            slack8 = slack8.min(chord(ri[q], ri[q], sep) - 2.0 * ri[half - 1] * sep.sin());
        }
        checks.push(PropositionCheck {
            name: "prop8: inner chords dominate innermost inner chord",
            holds: slack8 >= -1e-12,
            worst_slack: slack8,
        });
    }

    let q = half - 1;
    let slack9 = (ro[q - 1] - ri[q]).abs() - 2.0 * ri[half - 1] * sep.sin();
    checks.push(PropositionCheck {
        name: "prop9: radial gap dominates innermost inner chord",
        holds: slack9 >= -1e-12,
        worst_slack: slack9,
    });
    Ok(checks)
}

/// Verifies the four angular-separation statements by comparing actual sum
/// point phases against the closed forms, on every point pair.
pub fn verify_angular_separations(m: usize, theta: f64) -> Result<bool> {
    let rs = RingStructure::new(m, theta)?;
    let c1 = Constellation::make(ConstellationKind::Psk, m, true)?;
    let c2 = c1.rotated(rs.theta);
    let sa = sum_alphabet(&c1, &c2);
    let tol = 1e-9;
    let wrap = |a: f64| {
        let mut x = a.rem_euclid(2.0 * PI);
        if x > PI {
            x -= 2.0 * PI;
        }
        x
    };
    let phase_of = |n: usize, np: usize| -> f64 {
        let p = sa
            .entries
            .iter()
            .find(|&&(a, b, _)| a == n && b == np)
            .map(|&(_, _, p)| p)
            .unwrap();
        p.arg()
    };
    let mf = m as f64;
    for n in 0..m {
        for np in 0..m {
            let (ring_a, _) = rs.point_assignment[n * m + np];
            for n2 in 0..m {
                for np2 in 0..m {
                    let (ring_b, _) = rs.point_assignment[n2 * m + np2];
                    let actual = wrap(phase_of(n, np) - phase_of(n2, np2));
                    let diff = n as f64 - n2 as f64;
                    let expected = match (ring_a, ring_b) {
                        // statement 1: same circle, same m
                        (Ring::Outer(a), Ring::Outer(b)) if a == b => 2.0 * PI * diff / mf,
                        (Ring::Inner(a), Ring::Inner(b)) if a == b => 2.0 * PI * diff / mf,
                        // statement 2: O^m against I^m
                        (Ring::Outer(a), Ring::Inner(b)) if a == b => {
                            2.0 * PI * diff / mf + PI * (2.0 * a as f64 + 1.0) / mf
                        }
                        // statement 3: O^m against I^{m-1}
                        (Ring::Outer(a), Ring::Inner(b)) if a >= 1 && b == a - 1 => {
                            2.0 * PI * diff / mf + PI * (2.0 * a as f64) / mf
                        }
                        // statement 4: I^m against O^{m-1}
                        (Ring::Inner(a), Ring::Outer(b)) if a >= 1 && b == a - 1 => {
                            2.0 * PI * diff / mf - PI * (2.0 * a as f64) / mf
                        }
                        _ => continue,
                    };
                    if (wrap(actual - expected)).abs() > tol {
                        return Ok(false);
                    }
                }
            }
        }
    }
    Ok(true)
}

/// A balanced two-set split of constellation indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Partition2 {
    pub set_a: Vec<usize>,
    pub set_b: Vec<usize>,
}

impl Partition2 {
    pub fn new(m: usize, set_a: Vec<usize>, set_b: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; m];
        for &i in set_a.iter().chain(set_b.iter()) {
            if i >= m || seen[i] {
                return Err(GmacError::InvalidParameter(format!(
                    "partition index {i} out of range or repeated"
                )));
            }
            seen[i] = true;
        }
        if !seen.iter().all(|&s| s) || set_a.len() != set_b.len() {
            return Err(GmacError::InvalidParameter(
                "partition cells must cover all indices with equal sizes".into(),
            ));
        }
        Ok(Self { set_a, set_b })
    }
}

/// Even/odd index split: within-cell minimum angular separation `4 pi / M`.
pub fn ungerboeck_split(c: &Constellation) -> Result<Partition2> {
    let m = c.len();
    if !m.is_multiple_of(2) {
        return Err(GmacError::InvalidParameter(
            "Ungerboeck two-set split requires even M".into(),
        ));
    }
    Partition2::new(
        m,
        (0..m).step_by(2).collect(),
        (1..m).step_by(2).collect(),
    )
}

/// The four intra-set minimum squared distances of
/// `A = { S^i_1 + S^j_2 }` plus their bottleneck.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionReport {
    /// Squared minima, ordered (a+a, a+b, b+a, b+b) with the first index
    /// naming the user-1 cell. For Ungerboeck splits these are
    /// (ee, eo, oe, oo).
    pub d_sq: [f64; 4],
    pub bottleneck_sq: f64,
}

impl PartitionReport {
    pub fn d_linear(&self) -> [f64; 4] {
        [
            self.d_sq[0].sqrt(),
            self.d_sq[1].sqrt(),
            self.d_sq[2].sqrt(),
            self.d_sq[3].sqrt(),
        ]
    }

    pub fn bottleneck(&self) -> f64 {
        self.bottleneck_sq.sqrt()
    }
}

fn dmin_sq_of_sumset(
    cell1: &[usize],
    cell2: &[usize],
    p1: &[Complex64],
    p2: &[Complex64],
) -> f64 {
    let pts: Vec<Complex64> = cell1
        .iter()
        .flat_map(|&a| cell2.iter().map(move |&b| p1[a] + p2[b]))
        .collect();
    let mut dmin = f64::INFINITY;
    for i in 0..pts.len() {
        for j in i + 1..pts.len() {
            dmin = dmin.min((pts[i] - pts[j]).norm_sqr());
        }
    }
    dmin
}

/// Brute-force minimum distances of the four sum sets (the oracle side of
/// the Lemma formulas).
pub fn partition_sumset_dmin(
    part1: &Partition2,
    part2: &Partition2,
    c1: &Constellation,
    c2: &Constellation,
) -> PartitionReport {
    let p1 = c1.points();
    let p2 = c2.points();
    let d_sq = [
        dmin_sq_of_sumset(&part1.set_a, &part2.set_a, p1, p2),
        dmin_sq_of_sumset(&part1.set_a, &part2.set_b, p1, p2),
        dmin_sq_of_sumset(&part1.set_b, &part2.set_a, p1, p2),
        dmin_sq_of_sumset(&part1.set_b, &part2.set_b, p1, p2),
    ];
    let bottleneck_sq = d_sq.iter().cloned().fold(f64::INFINITY, f64::min);
    PartitionReport {
        d_sq,
        bottleneck_sq,
    }
}

/// Closed-form `d^{eo}_min = d^{oe}_min` (linear distance) for Ungerboeck
/// splits: the lesser of the innermost-circle chord
/// `4 sin(pi/M - theta/2) sin(2 pi/M)` and the diagonal chord between the
/// two innermost occupied circles.
pub fn dmin_formula_eo(m: usize, theta: f64) -> Result<f64> {
    if m < 8 {
        return Err(GmacError::Domain("formula requires M >= 8".into()));
    }
    let theta = validate_psk_domain(m, theta)?;
    let mf = m as f64;
    let q = m / 2 - 1;
    let r_i_qm1 = 2.0 * ((PI * q as f64) / mf - theta / 2.0).cos();
    let r_o_q = 2.0 * ((PI * q as f64) / mf + theta / 2.0).cos();
    let diag = chord(r_i_qm1, r_o_q, 2.0 * PI / mf);
    let inner_chord = 4.0 * (PI / mf - theta / 2.0).sin() * (2.0 * PI / mf).sin();
    Ok(diag.min(inner_chord))
}

/// Closed-form `d^{ee}_min = d^{oo}_min = 4 sin(theta/2) sin(2 pi/M)`.
pub fn dmin_formula_ee(m: usize, theta: f64) -> Result<f64> {
    if m < 8 {
        return Err(GmacError::Domain("formula requires M >= 8".into()));
    }
    let theta = validate_psk_domain(m, theta)?;
    Ok(4.0 * (theta / 2.0).sin() * (2.0 * PI / m as f64).sin())
}

/// Outcome of the balanced-partition search.
#[derive(Debug, Clone, Serialize)]
pub struct SearchOutcome {
    pub m: usize,
    pub theta: f64,
    pub best: PartitionReport,
    pub best_part1: Partition2,
    pub best_part2: Partition2,
    pub pairs_evaluated: usize,
}

fn balanced_subsets(m: usize) -> Vec<Vec<usize>> {
    // All size-M/2 subsets containing index 0; swapping the cells of a
    // partition leaves the four-set bottleneck unchanged, so this is a
    // canonical form.
    let half = m / 2;
    let mut out = Vec::new();
    let mut current = vec![0usize];
    fn rec(m: usize, half: usize, start: usize, current: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if current.len() == half {
            out.push(current.clone());
            return;
        }
        for i in start..m {
            current.push(i);
            rec(m, half, i + 1, current, out);
            current.pop();
        }
    }
    rec(m, half, 1, &mut current, &mut out);
    out
}

fn has_three_circularly_consecutive(subset: &[usize], m: usize) -> bool {
    let mut member = vec![false; m];
    for &i in subset {
        member[i] = true;
    }
    (0..m).any(|i| member[i] && member[(i + 1) % m] && member[(i + 2) % m])
}

fn complement(subset: &[usize], m: usize) -> Vec<usize> {
    let mut member = vec![false; m];
    for &i in subset {
        member[i] = true;
    }
    (0..m).filter(|&i| !member[i]).collect()
}

/// Exhaustive search for the balanced partition pair maximizing the
/// bottleneck of `A`. With `prune` set, cells holding three circularly
/// consecutive points are discarded (they are provably sub-optimal), which
/// makes M = 16 tractable.
pub fn exhaustive_partition_search(
    m: usize,
    theta: f64,
    prune: bool,
) -> Result<SearchOutcome> {
    if m > 16 {
        return Err(GmacError::InvalidParameter(
            "search supported for M <= 16 only".into(),
        ));
    }
    let theta = validate_psk_domain(m, theta)?;
    let c1 = Constellation::make(ConstellationKind::Psk, m, true)?;
    let c2 = c1.rotated(theta);
    let keep = |s: &Vec<usize>| {
        !prune
            || (!has_three_circularly_consecutive(s, m)
                && !has_three_circularly_consecutive(&complement(s, m), m))
    };
    let candidates: Vec<Vec<usize>> = balanced_subsets(m).into_iter().filter(keep).collect();
    let pairs_evaluated = candidates.len() * candidates.len();
    let best = candidates
        .par_iter()
        .map(|a1| {
            let p1 = Partition2 {
                set_a: a1.clone(),
                set_b: complement(a1, m),
            };
            let mut local_best: Option<(f64, Partition2, Partition2, PartitionReport)> = None;
            for a2 in &candidates {
                let p2 = Partition2 {
                    set_a: a2.clone(),
                    set_b: complement(a2, m),
                };
                let report = partition_sumset_dmin(&p1, &p2, &c1, &c2);
                let better = match &local_best {
                    None => true,
                    Some((b, bp1, bp2, _)) => {
                        report.bottleneck_sq > *b + 1e-12
                            || (report.bottleneck_sq > *b - 1e-12
                                && (p1.set_a.clone(), p2.set_a.clone())
                                    < (bp1.set_a.clone(), bp2.set_a.clone()))
                    }
                };
                if better {
                    local_best = Some((report.bottleneck_sq, p1.clone(), p2.clone(), report));
                }
            }
            local_best.unwrap()
        })
        .reduce_with(|a, b| {
            if a.0 > b.0 + 1e-12 {
                a
            } else if b.0 > a.0 + 1e-12 {
                b
            } else if (a.1.set_a.clone(), a.2.set_a.clone()) <= (b.1.set_a.clone(), b.2.set_a.clone())
            {
                a
            } else {
                b
            }
        })
        .ok_or_else(|| GmacError::InvalidParameter("empty search space".into()))?;
    Ok(SearchOutcome {
        m,
        theta,
        best: best.3,
        best_part1: best.1,
        best_part2: best.2,
        pairs_evaluated,
    })
}

/// True iff every partition pair whose user-1 cell holds three circularly
/// consecutive points scores strictly below `min(d_ee, d_eo)`.
pub fn check_three_consecutive_suboptimal(m: usize, theta: f64) -> Result<bool> {
    let theta = validate_psk_domain(m, theta)?;
    let c1 = Constellation::make(ConstellationKind::Psk, m, true)?;
    let c2 = c1.rotated(theta);
    let bound = dmin_formula_ee(m, theta)?
        .min(dmin_formula_eo(m, theta)?)
        .powi(2);
    let all = balanced_subsets(m);
    let violating: Vec<&Vec<usize>> = all
        .iter()
        .filter(|s| {
            has_three_circularly_consecutive(s, m)
                || has_three_circularly_consecutive(&complement(s, m), m)
        })
        .collect();
    for a1 in &violating {
        let p1 = Partition2 {
            set_a: (*a1).clone(),
            set_b: complement(a1, m),
        };
        for a2 in &all {
            let p2 = Partition2 {
                set_a: a2.clone(),
                set_b: complement(a2, m),
            };
            let report = partition_sumset_dmin(&p1, &p2, &c1, &c2);
            if report.bottleneck_sq >= bound - 1e-12 {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// The non-Ungerboeck 8-PSK partition pair that beats the Ungerboeck
/// bottleneck at `theta = pi / 25` (1-based indices in the source shifted
/// to 0-based).
pub fn example2_partitions() -> (Partition2, Partition2) {
    (
        Partition2 {
            set_a: vec![0, 1, 3, 5],
            set_b: vec![2, 4, 6, 7],
        },
        Partition2 {
            set_a: vec![0, 3, 4, 7],
            set_b: vec![1, 2, 5, 6],
        },
    )
}
