//! Labelled steady-state trellises, the product ("sum") trellis of two
//! users, free-distance search on the pair-state graph, and Viterbi
//! decoding.

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{GmacError, Result};
use crate::psk::Partition2;
use crate::signal::Constellation;

/// Steady-state single-section trellis: `next[s * n_branches + b]`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Trellis {
    pub n_states: usize,
    pub n_branches: usize,
    pub next: Vec<usize>,
}

impl Trellis {
    pub fn new(n_states: usize, n_branches: usize, next: Vec<usize>) -> Result<Self> {
        if n_states == 0 || n_branches == 0 || next.len() != n_states * n_branches {
            return Err(GmacError::Trellis(
                "transition table size must be n_states * n_branches".into(),
            ));
        }
        if next.iter().any(|&s| s >= n_states) {
            return Err(GmacError::Trellis("next-state index out of range".into()));
        }
        let t = Self {
            n_states,
            n_branches,
            next,
        };
        if !t.is_connected() {
            return Err(GmacError::Trellis("trellis is not connected".into()));
        }
        Ok(t)
    }

    pub fn next_state(&self, s: usize, b: usize) -> usize {
        self.next[s * self.n_branches + b]
    }

    /// Shift-register trellis with `nu` memory bits and one input bit:
    /// `next = ((s << 1) | b) & (2^nu - 1)`.
    pub fn shift_register(nu: u32) -> Self {
        let n_states = 1usize << nu;
        let mask = n_states - 1;
        let next = (0..n_states)
            .flat_map(|s| (0..2).map(move |b| ((s << 1) | b) & mask))
            .collect();
        Self {
            n_states,
            n_branches: 2,
            next,
        }
    }

    pub fn two_state() -> Self {
        Self::shift_register(1)
    }

    pub fn four_state() -> Self {
        Self::shift_register(2)
    }

    pub fn one_state(n_branches: usize) -> Self {
        Self {
            n_states: 1,
            n_branches,
            next: vec![0; n_branches],
        }
    }

    fn is_connected(&self) -> bool {
        // reachability from state 0 plus reachability to state 0 over
        // reversed edges
        let reach = |forward: bool| {
            let mut seen = vec![false; self.n_states];
            let mut stack = vec![0usize];
            seen[0] = true;
            while let Some(s) = stack.pop() {
                for from in 0..self.n_states {
                    for b in 0..self.n_branches {
                        let to = self.next_state(from, b);
                        let (src, dst) = if forward { (from, to) } else { (to, from) };
                        if src == s && !seen[dst] {
                            seen[dst] = true;
                            stack.push(dst);
                        }
                    }
                }
            }
            seen.iter().all(|&x| x)
        };
        reach(true) && reach(false)
    }
}

/// Trellis whose edge `(s, b)` emits the complex symbol `labels[s * n_branches + b]`.
#[derive(Debug, Clone)]
pub struct LabeledTrellis {
    pub trellis: Trellis,
    pub labels: Vec<Complex64>,
}

impl LabeledTrellis {
    pub fn new(trellis: Trellis, labels: Vec<Complex64>) -> Result<Self> {
        if labels.len() != trellis.n_states * trellis.n_branches {
            return Err(GmacError::Trellis("label table size mismatch".into()));
        }
        Ok(Self { trellis, labels })
    }

    /// Memoryless trellis carrying the whole constellation on parallel
    /// branches.
    pub fn uncoded(c: &Constellation) -> Self {
        Self {
            trellis: Trellis::one_state(c.len()),
            labels: c.points().to_vec(),
        }
    }

    pub fn label(&self, s: usize, b: usize) -> Complex64 {
        self.labels[s * self.trellis.n_branches + b]
    }

    /// Runs the encoder from state 0 over branch choices, returning the
    /// emitted symbols.
    pub fn encode(&self, branches: &[usize]) -> Vec<Complex64> {
        let mut s = 0usize;
        let mut out = Vec::with_capacity(branches.len());
        for &b in branches {
            out.push(self.label(s, b));
            s = self.trellis.next_state(s, b);
        }
        out
    }

    pub fn rotated(&self, theta: f64) -> Self {
        let rot = Complex64::from_polar(1.0, theta);
        Self {
            trellis: self.trellis.clone(),
            labels: self.labels.iter().map(|&l| l * rot).collect(),
        }
    }
}

/// Two-set Ungerboeck labelling of a shift-register-style trellis: the cell
/// is chosen by state parity, so both cells occur equally often, and the
/// branch picks the symbol within the cell.
pub fn label_ungerboeck(
    t: &Trellis,
    c: &Constellation,
    split: &Partition2,
) -> Result<LabeledTrellis> {
    if t.n_branches != split.set_a.len() {
        return Err(GmacError::Trellis(format!(
            "out-degree {} must equal cell size {}",
            t.n_branches,
            split.set_a.len()
        )));
    }
    let shift = (t.n_states.trailing_zeros() as usize).saturating_sub(1);
    let mut labels = Vec::with_capacity(t.n_states * t.n_branches);
    for s in 0..t.n_states {
        let cell = if s & 1 == 0 { &split.set_a } else { &split.set_b };
        for b in 0..t.n_branches {
            let idx = if t.n_states >= 2 { b ^ (s >> shift) & 1 } else { b };
            labels.push(c.point(cell[idx % cell.len()]));
        }
    }
    LabeledTrellis::new(t.clone(), labels)
}

/// Product trellis: states `(a, b)`, edges `E^a_1 x E^b_2`, labels
/// `X^a + Y^b`.
#[derive(Debug, Clone)]
pub struct SumTrellis {
    pub inner: LabeledTrellis,
    /// For the edge `(s, e)` of the product, the component branch pair
    /// `(b1, b2)` in the two user trellises.
    pub components: Vec<(usize, usize)>,
    pub n_states_1: usize,
    pub n_states_2: usize,
}

impl SumTrellis {
    /// Splits a product state back into `(s1, s2)`.
    pub fn split_state(&self, s: usize) -> (usize, usize) {
        (s / self.n_states_2, s % self.n_states_2)
    }
}

pub fn sum_trellis(t1: &LabeledTrellis, t2: &LabeledTrellis) -> SumTrellis {
    let (q1, q2) = (t1.trellis.n_states, t2.trellis.n_states);
    let (m1, m2) = (t1.trellis.n_branches, t2.trellis.n_branches);
    let n_states = q1 * q2;
    let n_branches = m1 * m2;
    let mut next = Vec::with_capacity(n_states * n_branches);
    let mut labels = Vec::with_capacity(n_states * n_branches);
    let mut components = Vec::with_capacity(n_states * n_branches);
    for s1 in 0..q1 {
        for s2 in 0..q2 {
            for b1 in 0..m1 {
                for b2 in 0..m2 {
                    next.push(t1.trellis.next_state(s1, b1) * q2 + t2.trellis.next_state(s2, b2));
                    labels.push(t1.label(s1, b1) + t2.label(s2, b2));
                    components.push((b1, b2));
                }
            }
        }
    }
    SumTrellis {
        inner: LabeledTrellis {
            trellis: Trellis {
                n_states,
                n_branches,
                next,
            },
            labels,
        },
        components,
        n_states_1: q1,
        n_states_2: q2,
    }
}

/// Minimum accumulated squared Euclidean distance over diverging-remerging
/// path pairs, by Dijkstra on the pair-state graph. Parallel transitions
/// (same start and end state, distinct branches) count as zero-length error
/// events.
pub fn free_distance(t: &LabeledTrellis) -> Result<f64> {
    let tr = &t.trellis;
    if !tr.is_connected() {
        return Err(GmacError::Trellis("trellis is not connected".into()));
    }
    let q = tr.n_states;
    let nb = tr.n_branches;
    let mut best = f64::INFINITY;
    // dist[(u, v)] with u != v: cheapest accumulated distance of two paths
    // that diverged from a common state and currently sit at (u, v)
    let mut dist = vec![f64::INFINITY; q * q];
    let mut heap = std::collections::BinaryHeap::new();
    let push = |heap: &mut std::collections::BinaryHeap<(Ordered, usize)>,
                dist: &mut Vec<f64>,
                best: &mut f64,
                u: usize,
                v: usize,
                d: f64| {
        if u == v {
            *best = best.min(d);
        } else {
            let key = u * q + v;
            if d + 1e-15 < dist[key] {
                dist[key] = d;
                heap.push((Ordered(-d), key));
            }
        }
    };
    for s in 0..q {
        for b1 in 0..nb {
            for b2 in 0..nb {
                if b1 == b2 {
                    continue;
                }
                let d = (t.label(s, b1) - t.label(s, b2)).norm_sqr();
                push(
                    &mut heap,
                    &mut dist,
                    &mut best,
                    tr.next_state(s, b1),
                    tr.next_state(s, b2),
                    d,
                );
            }
        }
    }
    while let Some((nd, key)) = heap.pop() {
        let d = -nd.0;
        if d > dist[key] + 1e-15 || d >= best {
            continue;
        }
        let (u, v) = (key / q, key % q);
        for b1 in 0..nb {
            for b2 in 0..nb {
                let step = (t.label(u, b1) - t.label(v, b2)).norm_sqr();
                push(
                    &mut heap,
                    &mut dist,
                    &mut best,
                    tr.next_state(u, b1),
                    tr.next_state(v, b2),
                    d + step,
                );
            }
        }
    }
    if best.is_infinite() {
        return Err(GmacError::Trellis(
            "no diverging-remerging path pair exists".into(),
        ));
    }
    Ok(best)
}

// f64 max-heap key (we negate distances to get a min-heap)
#[derive(PartialEq, PartialOrd)]
struct Ordered(f64);
impl Eq for Ordered {}
#[allow(clippy::derive_ord_xor_partial_ord)]
impl Ord for Ordered {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.partial_cmp(other).unwrap()
    }
}

/// ML sequence detection from state 0 with free terminal state; returns the
/// branch index taken at each stage.
pub fn viterbi_decode(t: &LabeledTrellis, received: &[Complex64]) -> Result<Vec<usize>> {
    if received.is_empty() {
        return Err(GmacError::Trellis("empty received sequence".into()));
    }
    let tr = &t.trellis;
    let q = tr.n_states;
    let mut metric = vec![f64::INFINITY; q];
    metric[0] = 0.0;
    let mut backptr: Vec<Vec<(usize, usize)>> = Vec::with_capacity(received.len());
    for &y in received {
        let mut next_metric = vec![f64::INFINITY; q];
        let mut bp = vec![(usize::MAX, usize::MAX); q];
        for (s, &ms) in metric.iter().enumerate() {
            if ms.is_infinite() {
                continue;
            }
            for b in 0..tr.n_branches {
                let ns = tr.next_state(s, b);
                let m = ms + (y - t.label(s, b)).norm_sqr();
                if m < next_metric[ns] {
                    next_metric[ns] = m;
                    bp[ns] = (s, b);
                }
            }
        }
        metric = next_metric;
        backptr.push(bp);
    }
    let mut end = 0;
    for s in 1..q {
        if metric[s] < metric[end] {
            end = s;
        }
    }
    let mut branches = vec![0usize; received.len()];
    let mut s = end;
    for stage in (0..received.len()).rev() {
        let (ps, b) = backptr[stage][s];
        branches[stage] = b;
        s = ps;
    }
    Ok(branches)
}

/// Textual single-section trellis description: a header line
/// `n_states n_branches`, then one `from to label_index` line per edge.
/// Label indices refer to constellation points.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrellisSpec {
    pub n_states: usize,
    pub n_branches: usize,
    /// (from, to, label_index), one per edge
    pub edges: Vec<(usize, usize, usize)>,
}

impl TrellisSpec {
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        let header = lines
            .next()
            .ok_or_else(|| GmacError::Trellis("empty trellis description".into()))?;
        let head: Vec<usize> = header
            .split_whitespace()
            .map(|t| t.parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| GmacError::Trellis(format!("bad header: {e}")))?;
        if head.len() != 2 {
            return Err(GmacError::Trellis(
                "header must be 'n_states n_branches'".into(),
            ));
        }
        let (n_states, n_branches) = (head[0], head[1]);
        let mut edges = Vec::new();
        for line in lines {
            let f: Vec<usize> = line
                .split_whitespace()
                .map(|t| t.parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| GmacError::Trellis(format!("bad edge line '{line}': {e}")))?;
            if f.len() != 3 {
                return Err(GmacError::Trellis(format!(
                    "edge line must be 'from to label_index', got '{line}'"
                )));
            }
            if f[0] >= n_states || f[1] >= n_states {
                return Err(GmacError::Trellis(format!("edge state out of range: '{line}'")));
            }
            edges.push((f[0], f[1], f[2]));
        }
        if edges.len() != n_states * n_branches {
            return Err(GmacError::Trellis(format!(
                "expected {} edges, got {}",
                n_states * n_branches,
                edges.len()
            )));
        }
        let mut out_deg = vec![0usize; n_states];
        for &(from, _, _) in &edges {
            out_deg[from] += 1;
        }
        if out_deg.iter().any(|&d| d != n_branches) {
            return Err(GmacError::Trellis("unequal out-degrees".into()));
        }
        Ok(Self {
            n_states,
            n_branches,
            edges,
        })
    }

    /// Canonical echo: edges sorted by (from, label_index, to).
    pub fn canonical_text(&self) -> String {
        let mut edges = self.edges.clone();
        edges.sort_by_key(|&(f, t, l)| (f, l, t));
        let mut s = format!("{} {}\n", self.n_states, self.n_branches);
        for (f, t, l) in edges {
            s.push_str(&format!("{f} {t} {l}\n"));
        }
        s
    }

    pub fn from_labeled(t: &LabeledTrellis, c: &Constellation) -> Result<Self> {
        let mut edges = Vec::new();
        for s in 0..t.trellis.n_states {
            for b in 0..t.trellis.n_branches {
                let lab = t.label(s, b);
                let idx = c
                    .points()
                    .iter()
                    .position(|p| (p - lab).norm() < 1e-9)
                    .ok_or_else(|| {
                        GmacError::Trellis("label not found in constellation".into())
                    })?;
                edges.push((s, t.trellis.next_state(s, b), idx));
            }
        }
        Ok(Self {
            n_states: t.trellis.n_states,
            n_branches: t.trellis.n_branches,
            edges,
        })
    }

    /// Resolves label indices against a constellation, checking per-state
    /// cell purity against the split.
    pub fn resolve(&self, c: &Constellation, split: &Partition2) -> Result<LabeledTrellis> {
        let mut edges = self.edges.clone();
        edges.sort_by_key(|&(f, t, l)| (f, l, t));
        let mut next = Vec::with_capacity(self.n_states * self.n_branches);
        let mut labels = Vec::with_capacity(self.n_states * self.n_branches);
        for s in 0..self.n_states {
            let state_edges: Vec<_> = edges.iter().filter(|&&(f, _, _)| f == s).collect();
            let in_a = state_edges
                .iter()
                .all(|&&(_, _, l)| split.set_a.contains(&l));
            let in_b = state_edges
                .iter()
                .all(|&&(_, _, l)| split.set_b.contains(&l));
            if !(in_a || in_b) {
                return Err(GmacError::Trellis(format!(
                    "state {s} edges are not labelled from a single cell"
                )));
            }
            for &&(_, to, l) in &state_edges {
                if l >= c.len() {
                    return Err(GmacError::Trellis(format!("label index {l} out of range")));
                }
                next.push(to);
                labels.push(c.point(l));
            }
        }
        LabeledTrellis::new(Trellis::new(self.n_states, self.n_branches, next)?, labels)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::psk::ungerboeck_split;
    use crate::signal::{sum_alphabet, ConstellationKind};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn qpsk() -> Constellation {
        Constellation::make(ConstellationKind::Psk, 4, true).unwrap()
    }

    fn pam4() -> Constellation {
        Constellation::make(ConstellationKind::Pam, 4, true).unwrap()
    }

    fn labeled_pair(
        c: &Constellation,
        theta: f64,
        t: &Trellis,
    ) -> (LabeledTrellis, LabeledTrellis) {
        let split = ungerboeck_split(c).unwrap();
        let t1 = label_ungerboeck(t, c, &split).unwrap();
        let t2 = t1.rotated(theta);
        (t1, t2)
    }

    #[test]
    fn sum_trellis_of_two_state_pair_has_product_shape() {
        let (t1, t2) = labeled_pair(&qpsk(), FRAC_PI_4, &Trellis::two_state());
        let st = sum_trellis(&t1, &t2);
        assert_eq!(st.inner.trellis.n_states, 4);
        assert_eq!(st.inner.trellis.n_branches, 4);
        // labels drawn from the sum alphabet
        let sa = sum_alphabet(&qpsk(), &qpsk().rotated(FRAC_PI_4));
        for &l in &st.inner.labels {
            assert!(sa
                .entries
                .iter()
                .any(|&(_, _, p)| (p - l).norm() < 1e-9));
        }
    }

    #[test]
    fn sum_trellis_matches_brute_force_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..20 {
            let q1 = 1 << rng.gen_range(0..3u32);
            let q2 = 1 << rng.gen_range(0..3u32);
            let mk = |q: usize, rng: &mut ChaCha8Rng| {
                let next: Vec<usize> = loop {
                    let cand: Vec<usize> = (0..q * 2).map(|_| rng.gen_range(0..q)).collect();
                    if Trellis::new(q, 2, cand.clone()).is_ok() {
                        break cand;
                    }
                };
                let labels: Vec<Complex64> = (0..q * 2)
                    .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                    .collect();
                LabeledTrellis::new(Trellis::new(q, 2, next).unwrap(), labels).unwrap()
            };
            let t1 = mk(q1, &mut rng);
            let t2 = mk(q2, &mut rng);
            let st = sum_trellis(&t1, &t2);
            assert_eq!(st.inner.trellis.n_states, q1 * q2);
            assert_eq!(st.inner.trellis.n_branches, 4);
            // independently enumerate the product edges per state
            for s1 in 0..q1 {
                for s2 in 0..q2 {
                    let s = s1 * q2 + s2;
                    let mut expect: Vec<(usize, Complex64)> = Vec::new();
                    for b1 in 0..2 {
                        for b2 in 0..2 {
                            expect.push((
                                t1.trellis.next_state(s1, b1) * q2
                                    + t2.trellis.next_state(s2, b2),
                                t1.label(s1, b1) + t2.label(s2, b2),
                            ));
                        }
                    }
                    for (b, &(ns, lab)) in expect.iter().enumerate() {
                        assert_eq!(st.inner.trellis.next_state(s, b), ns);
                        assert!((st.inner.label(s, b) - lab).norm() < 1e-12);
                    }
                }
            }
        }
    }

    fn min_parallel_distance(t: &LabeledTrellis) -> f64 {
        let mut min_parallel = f64::INFINITY;
        for s in 0..t.trellis.n_states {
            for b1 in 0..t.trellis.n_branches {
                for b2 in 0..t.trellis.n_branches {
                    if b1 != b2 && t.trellis.next_state(s, b1) == t.trellis.next_state(s, b2) {
                        min_parallel =
                            min_parallel.min((t.label(s, b1) - t.label(s, b2)).norm_sqr());
                    }
                }
            }
        }
        min_parallel
    }

    #[test]
    fn uncoded_partner_gives_parallel_paths() {
        // Any uncoded partner creates parallel transitions that upper-bound
        // the free distance. Equality holds when the uncoded user's
        // differences cannot cancel the coded user's (orthogonal PAM pair);
        // with a non-orthogonal pair, cross-user cancellation can produce a
        // strictly cheaper coded error event, so only the bound is universal.
        let c = qpsk();
        let (t1, _) = labeled_pair(&c, 0.0, &Trellis::two_state());
        let t2 = LabeledTrellis::uncoded(&c.rotated(FRAC_PI_4));
        let st = sum_trellis(&t1, &t2);
        let s = 0;
        assert_eq!(
            st.inner.trellis.next_state(s, 0),
            st.inner.trellis.next_state(s, 1)
        );
        let d = free_distance(&st.inner).unwrap();
        let min_parallel = min_parallel_distance(&st.inner);
        assert!(min_parallel.is_finite());
        assert!(d <= min_parallel + 1e-12);

        // orthogonal PAM configuration: parallel paths are tight
        let p = pam4();
        let split = ungerboeck_split(&p).unwrap();
        let pt1 = label_ungerboeck(&Trellis::two_state(), &p, &split).unwrap();
        let pt2 = LabeledTrellis::uncoded(&p.rotated(FRAC_PI_2));
        let pst = sum_trellis(&pt1, &pt2);
        let pd = free_distance(&pst.inner).unwrap();
        assert_abs_diff_eq!(pd, min_parallel_distance(&pst.inner), epsilon = 1e-12);
    }

    #[test]
    fn degenerate_product_of_uncoded_pair() {
        let c = qpsk();
        let st = sum_trellis(
            &LabeledTrellis::uncoded(&c),
            &LabeledTrellis::uncoded(&c.rotated(FRAC_PI_4)),
        );
        assert_eq!(st.inner.trellis.n_states, 1);
        assert_eq!(st.inner.trellis.n_branches, 16);
    }

    #[test]
    fn four_state_qpsk_free_distance() {
        let (t1, t2) = labeled_pair(&qpsk(), FRAC_PI_4, &Trellis::four_state());
        let st = sum_trellis(&t1, &t2);
        let d = free_distance(&st.inner).unwrap();
        assert_abs_diff_eq!(d, 20.0 - 10.0 * 2.0f64.sqrt(), epsilon = 1e-9);
        assert_abs_diff_eq!(d, 5.8578, epsilon = 1e-3);
    }

    #[test]
    fn four_state_pam_free_distance() {
        let (t1, t2) = labeled_pair(&pam4(), FRAC_PI_2, &Trellis::four_state());
        let st = sum_trellis(&t1, &t2);
        let d = free_distance(&st.inner).unwrap();
        assert_abs_diff_eq!(d, 7.2, epsilon = 1e-2);
    }

    #[test]
    fn uncoded_free_distance_is_constellation_dmin() {
        let c = qpsk();
        let d = free_distance(&LabeledTrellis::uncoded(&c)).unwrap();
        assert_abs_diff_eq!(d, 2.0, epsilon = 1e-12);
    }

    #[test]
    fn free_distance_matches_exhaustive_enumeration() {
        // small trellises, brute-force over all codeword pairs up to
        // length 8 that start and end in the same state
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let q = 2usize;
            let labels: Vec<Complex64> = (0..q * 2)
                .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect();
            let lt =
                LabeledTrellis::new(Trellis::shift_register(1), labels).unwrap();
            let fast = free_distance(&lt).unwrap();
            let mut brute = f64::INFINITY;
            for len in 1..=8usize {
                let n_words = 1usize << len;
                for w1 in 0..n_words {
                    for w2 in 0..n_words {
                        if w1 == w2 {
                            continue;
                        }
                        let bits = |w: usize| -> Vec<usize> {
                            (0..len).map(|i| (w >> i) & 1).collect()
                        };
                        let (b1, b2) = (bits(w1), bits(w2));
                        // paths must share start state and end state
                        let run = |bs: &[usize]| {
                            let mut s = 0usize;
                            let mut syms = Vec::new();
                            for &b in bs {
                                syms.push(lt.label(s, b));
                                s = lt.trellis.next_state(s, b);
                            }
                            (s, syms)
                        };
                        // shared-prefix stages cost zero, so pairs that
                        // diverge anywhere and end in the same state cover
                        // every error event of this length
                        let (e1, s1) = run(&b1);
                        let (e2, s2) = run(&b2);
                        if e1 != e2 {
                            continue;
                        }
                        let d: f64 =
                            s1.iter().zip(&s2).map(|(a, b)| (a - b).norm_sqr()).sum();
                        brute = brute.min(d);
                    }
                }
            }
            assert_abs_diff_eq!(fast, brute, epsilon = 1e-9);
        }
    }

    #[test]
    fn coding_gain_identities() {
        let gain_4 = 10.0 * (7.2f64 / (20.0 - 10.0 * 2.0f64.sqrt())).log10();
        assert!((gain_4 - 0.89).abs() < 0.01, "4-state gain {gain_4}");
        let t = Trellis::two_state();
        let (q1, q2) = labeled_pair(&qpsk(), FRAC_PI_4, &t);
        let d_qpsk = free_distance(&sum_trellis(&q1, &q2).inner).unwrap();
        let (p1, p2) = labeled_pair(&pam4(), FRAC_PI_2, &t);
        let d_pam = free_distance(&sum_trellis(&p1, &p2).inner).unwrap();
        let gain_2 = 10.0 * (d_pam / d_qpsk).log10();
        assert!((gain_2 - 0.57).abs() < 0.01, "2-state gain {gain_2}");
    }

    #[test]
    fn viterbi_recovers_noiseless_codeword() {
        let (t1, t2) = labeled_pair(&qpsk(), FRAC_PI_4, &Trellis::four_state());
        let st = sum_trellis(&t1, &t2);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            let branches: Vec<usize> = (0..12)
                .map(|_| rng.gen_range(0..st.inner.trellis.n_branches))
                .collect();
            let tx = st.inner.encode(&branches);
            let decoded = viterbi_decode(&st.inner, &tx).unwrap();
            assert_eq!(st.inner.encode(&decoded), tx);
        }
    }

    #[test]
    fn pam_decoupling_matches_joint_decoding() {
        let c = pam4();
        let split = ungerboeck_split(&c).unwrap();
        let t = Trellis::four_state();
        let t1 = label_ungerboeck(&t, &c, &split).unwrap();
        let t2r = t1.rotated(FRAC_PI_2);
        let st = sum_trellis(&t1, &t2r);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..100 {
            let b1: Vec<usize> = (0..16).map(|_| rng.gen_range(0..2)).collect();
            let b2: Vec<usize> = (0..16).map(|_| rng.gen_range(0..2)).collect();
            let x1 = t1.encode(&b1);
            let x2 = t2r.encode(&b2);
            let y: Vec<Complex64> = x1
                .iter()
                .zip(&x2)
                .map(|(a, b)| {
                    a + b
                        + Complex64::new(
                            0.35 * rng.gen_range(-1.0f64..1.0),
                            0.35 * rng.gen_range(-1.0f64..1.0),
                        )
                })
                .collect();
            let joint = viterbi_decode(&st.inner, &y).unwrap();
            let re: Vec<Complex64> = y.iter().map(|v| Complex64::new(v.re, 0.0)).collect();
            let im: Vec<Complex64> = y.iter().map(|v| Complex64::new(v.im, 0.0)).collect();
            let d1 = viterbi_decode(&t1, &re).unwrap();
            let d2 = viterbi_decode(&t1, &im).unwrap();
            for (stage, &e) in joint.iter().enumerate() {
                // product branch order is (b1, b2) row-major
                let (jb1, jb2) = (e / 2, e % 2);
                assert_eq!(jb1, d1[stage], "stage {stage} user 1");
                assert_eq!(jb2, d2[stage], "stage {stage} user 2");
            }
        }
    }

    #[test]
    fn viterbi_block_errors_vanish_at_high_snr() {
        let (t1, t2) = labeled_pair(&qpsk(), FRAC_PI_4, &Trellis::four_state());
        let st = sum_trellis(&t1, &t2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut rates = Vec::new();
        for &sigma in &[0.6f64, 0.25, 0.08] {
            let mut errors = 0;
            let trials = 200;
            for _ in 0..trials {
                let branches: Vec<usize> = (0..10)
                    .map(|_| rng.gen_range(0..st.inner.trellis.n_branches))
                    .collect();
                let tx = st.inner.encode(&branches);
                let y: Vec<Complex64> = tx
                    .iter()
                    .map(|v| {
                        v + Complex64::new(
                            sigma * rng.gen_range(-1.0f64..1.0),
                            sigma * rng.gen_range(-1.0f64..1.0),
                        )
                    })
                    .collect();
                let decoded = viterbi_decode(&st.inner, &y).unwrap();
                if st.inner.encode(&decoded) != tx {
                    errors += 1;
                }
            }
            rates.push(errors as f64 / trials as f64);
        }
        assert!(rates[2] <= rates[0]);
        assert!(rates[2] < 0.05, "high-snr block error rate {}", rates[2]);
    }

    #[test]
    fn trellis_text_round_trip() {
        let c = qpsk();
        let split = ungerboeck_split(&c).unwrap();
        let lt = label_ungerboeck(&Trellis::two_state(), &c, &split).unwrap();
        let spec = TrellisSpec::from_labeled(&lt, &c).unwrap();
        let text = spec.canonical_text();
        let reparsed = TrellisSpec::parse(&text).unwrap();
        assert_eq!(reparsed.canonical_text(), text);
        let resolved = reparsed.resolve(&c, &split).unwrap();
        assert_abs_diff_eq!(
            free_distance(&sum_trellis(&resolved, &resolved.rotated(FRAC_PI_4)).inner).unwrap(),
            free_distance(&sum_trellis(&lt, &lt.rotated(FRAC_PI_4)).inner).unwrap(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn bad_trellis_text_is_rejected() {
        assert!(TrellisSpec::parse("").is_err());
        assert!(TrellisSpec::parse("2 2\n0 0 0\n0 1 2\n1 0 1\n").is_err());
        assert!(TrellisSpec::parse("2 2\n0 0 0\n0 1 2\n1 0 1\n1 1 3\n5 0 0\n").is_err());
        // impure state labelling rejected on resolve
        let c = qpsk();
        let split = ungerboeck_split(&c).unwrap();
        let spec = TrellisSpec::parse("2 2\n0 0 0\n0 1 1\n1 0 1\n1 1 3\n").unwrap();
        assert!(spec.resolve(&c, &split).is_err());
    }

    #[test]
    fn disconnected_trellis_rejected() {
        assert!(Trellis::new(2, 1, vec![0, 1]).is_err());
    }
}
