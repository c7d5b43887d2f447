//! Max-times linear algebra over nonnegative rationals.
//!
//! Addition is `max`, multiplication is the ordinary product, and `0` plays
//! the role of "no edge". Entry `(i, j)` of a matrix is the weight of the
//! edge `j -> i`.

use std::cmp::Ordering;
use std::fmt;

use num_traits::{One, Zero};
use thiserror::Error;

use crate::rat::{self, Rat};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum TropError {
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("support digraph has a directed cycle")]
    CyclicSupport,
    #[error("vector entry {0} is not strictly positive")]
    NonPositive(usize),
    #[error("closure diverges: some cycle has weight above one")]
    Divergent,
}

/// Square matrix with max-times semantics.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct TropMatrix {
    n: usize,
    data: Vec<Rat>,
}

impl fmt::Debug for TropMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "TropMatrix({})", self.n)?;
        for i in 0..self.n {
            let row: Vec<String> = (0..self.n).map(|j| rat::fmt_frac(self.get(i, j))).collect();
            writeln!(f, "  [{}]", row.join(", "))?;
        }
        Ok(())
    }
}

impl TropMatrix {
    pub fn zeros(n: usize) -> Self {
        TropMatrix {
            n,
            data: vec![Rat::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.set(i, i, Rat::one());
        }
        m
    }

    /// Builds from rows. Panics on ragged input or negative entries.
    pub fn from_rows(rows: Vec<Vec<Rat>>) -> Self {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for row in rows {
            assert_eq!(row.len(), n, "matrix must be square");
            for v in row {
                assert!(v >= Rat::zero(), "entries must be nonnegative");
                data.push(v);
            }
        }
        TropMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> &Rat {
        &self.data[i * self.n + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rat) {
        debug_assert!(v >= Rat::zero());
        self.data[i * self.n + j] = v;
    }

    pub fn is_positive(&self, i: usize, j: usize) -> bool {
        !self.get(i, j).is_zero()
    }

    pub fn row(&self, i: usize) -> &[Rat] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    /// Entrywise maximum.
    pub fn join(&self, other: &TropMatrix) -> Result<TropMatrix, TropError> {
        check_dims(self.n, other.n)?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| if a >= b { a.clone() } else { b.clone() })
            .collect();
        Ok(TropMatrix { n: self.n, data })
    }

    /// Principal submatrix on `idx`, in the given order.
    pub fn submatrix(&self, idx: &[usize]) -> TropMatrix {
        let mut m = TropMatrix::zeros(idx.len());
        for (a, &i) in idx.iter().enumerate() {
            for (b, &j) in idx.iter().enumerate() {
                m.set(a, b, self.get(i, j).clone());
            }
        }
        m
    }

    /// `(i, j)` pairs with a positive entry, i.e. edges `j -> i`.
    pub fn support(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for i in 0..self.n {
            for j in 0..self.n {
                if self.is_positive(i, j) {
                    out.push((i, j));
                }
            }
        }
        out
    }

    /// `A ⊙ x`.
    pub fn apply(&self, x: &[Rat]) -> Result<Vec<Rat>, TropError> {
        check_dims(self.n, x.len())?;
        Ok((0..self.n)
            .map(|i| {
                let mut best = Rat::zero();
                for (a, v) in self.row(i).iter().zip(x) {
                    if a.is_zero() || v.is_zero() {
                        continue;
                    }
                    rat::max_assign(&mut best, a * v);
                }
                best
            })
            .collect())
    }

    pub fn to_f64_rows(&self) -> Vec<Vec<f64>> {
        (0..self.n)
            .map(|i| self.row(i).iter().map(rat::to_f64).collect())
            .collect()
    }
}

fn check_dims(a: usize, b: usize) -> Result<(), TropError> {
    if a == b {
        Ok(())
    } else {
        Err(TropError::DimensionMismatch { left: a, right: b })
    }
}

/// Exact max-times product.
pub fn trop_mul(a: &TropMatrix, b: &TropMatrix) -> Result<TropMatrix, TropError> {
    check_dims(a.n, b.n)?;
    let n = a.n;
    let mut out = TropMatrix::zeros(n);
    for i in 0..n {
        for l in 0..n {
            let ail = a.get(i, l);
            if ail.is_zero() {
                continue;
            }
            for j in 0..n {
                let blj = b.get(l, j);
                if blj.is_zero() {
                    continue;
                }
                let p = ail * blj;
                if p > *out.get(i, j) {
                    out.set(i, j, p);
                }
            }
        }
    }
    Ok(out)
}

/// Topological order of the support digraph (edge `j -> i` for entry `(i, j)`),
/// or `None` if it has a cycle. Self-loops count as cycles.
pub fn support_topological_order(a: &TropMatrix) -> Option<Vec<usize>> {
    let n = a.n;
    let mut indeg = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            if a.is_positive(i, j) {
                indeg[i] += 1;
            }
        }
    }
    let mut ready: std::collections::BTreeSet<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
    let mut order = Vec::with_capacity(n);
    while let Some(&j) = ready.iter().next() {
        ready.remove(&j);
        order.push(j);
        for i in 0..n {
            if a.is_positive(i, j) {
                indeg[i] -= 1;
                if indeg[i] == 0 {
                    ready.insert(i);
                }
            }
        }
    }
    (order.len() == n).then_some(order)
}

/// `Γ = C ∨ C² ∨ … ∨ C^(n-1)`: entry `(i, j)` is the best path weight `j -> i`.
pub fn weak_closure(c: &TropMatrix) -> TropMatrix {
    let n = c.n;
    if n <= 1 {
        return TropMatrix::zeros(n);
    }
    let mut acc = c.clone();
    let mut power = c.clone();
    for _ in 2..n {
        power = trop_mul(&power, c).expect("square");
        acc = acc.join(&power).expect("square");
    }
    acc
}

/// `C* = I ∨ Γ(C)` for a matrix with acyclic support.
pub fn kleene_star(c: &TropMatrix) -> Result<TropMatrix, TropError> {
    if support_topological_order(c).is_none() {
        return Err(TropError::CyclicSupport);
    }
    TropMatrix::identity(c.n).join(&weak_closure(c))
}

/// Star of a matrix whose cycles all weigh at most one; the support may be
/// cyclic. Floyd–Warshall over max-times.
pub fn bounded_star(a: &TropMatrix) -> Result<TropMatrix, TropError> {
    if cycle_compare_one(a).ordering == Ordering::Greater {
        return Err(TropError::Divergent);
    }
    let n = a.n;
    let mut d = TropMatrix::identity(n).join(a)?;
    for k in 0..n {
        for i in 0..n {
            let dik = d.get(i, k).clone();
            if dik.is_zero() {
                continue;
            }
            for j in 0..n {
                let dkj = d.get(k, j);
                if dkj.is_zero() {
                    continue;
                }
                let p = &dik * dkj;
                if p > *d.get(i, j) {
                    d.set(i, j, p);
                }
            }
        }
    }
    Ok(d)
}

/// Outcome of comparing the maximum cycle geometric mean with one.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CycleComparison {
    pub ordering: Ordering,
    /// Simple cycle `v0 -> v1 -> … -> v0` (as node list) weighing at least one,
    /// present when the ordering is `Equal` or `Greater`.
    pub witness: Option<Vec<usize>>,
    pub witness_weight: Option<Rat>,
}

/// Compares `λ(A)` with one using exact powers `A, A², …, Aⁿ`.
///
/// `λ(A) > 1` iff some diagonal entry of some power exceeds one; `λ(A) = 1` iff
/// none exceeds one and some equals one. Acyclic support gives `λ = 0`.
pub fn cycle_compare_one(a: &TropMatrix) -> CycleComparison {
    let n = a.n;
    let mut powers: Vec<TropMatrix> = Vec::with_capacity(n);
    let mut ordering = Ordering::Less;
    let mut hit: Option<(usize, usize)> = None;
    let mut p = a.clone();
    for k in 1..=n {
        if k > 1 {
            p = trop_mul(&p, a).expect("square");
        }
        for i in 0..n {
            let d = p.get(i, i);
            if d.is_zero() {
                continue;
            }
            match d.cmp(&Rat::one()) {
                Ordering::Greater => {
                    if ordering != Ordering::Greater {
                        ordering = Ordering::Greater;
                        hit = Some((k, i));
                    }
                }
                Ordering::Equal => {
                    if ordering == Ordering::Less {
                        ordering = Ordering::Equal;
                        hit = Some((k, i));
                    }
                }
                Ordering::Less => {}
            }
        }
        powers.push(p.clone());
        if ordering == Ordering::Greater {
            break;
        }
    }
    let Some((k, i)) = hit else {
        return CycleComparison {
            ordering,
            witness: None,
            witness_weight: None,
        };
    };
    let walk = recover_walk(a, &powers, k, i);
    let (cycle, weight) = heaviest_simple_cycle(a, &walk);
    CycleComparison {
        ordering,
        witness: Some(cycle),
        witness_weight: Some(weight),
    }
}

/// Closed walk of length `k` at `i` attaining `(A^k)_ii`, as a node list
/// without the repeated endpoint. The walk runs against the index
/// convention: consecutive nodes `u, v` mean the entry `(u, v)`, i.e. `v -> u`.
fn recover_walk(a: &TropMatrix, powers: &[TropMatrix], k: usize, i: usize) -> Vec<usize> {
    // Find i = w0, w1, …, wk = i with a(w0,w1)·…·a(w_{k-1},wk) = (A^k)_ii.
    let mut walk = vec![i];
    let mut cur = i;
    let mut target = powers[k - 1].get(i, i).clone();
    for step in (1..=k).rev() {
        if step == 1 {
            debug_assert_eq!(a.get(cur, i), &target);
            break;
        }
        let rest = &powers[step - 2];
        let next = (0..a.n)
            .find(|&l| {
                let x = a.get(cur, l);
                let y = rest.get(l, i);
                !x.is_zero() && !y.is_zero() && (x * y) == target
            })
            .expect("walk must be recoverable");
        target = rest.get(next, i).clone();
        walk.push(next);
        cur = next;
    }
    walk
}

/// Splits a closed walk into simple cycles and returns the heaviest one,
/// rewritten in edge direction (`v0 -> v1 -> …`).
fn heaviest_simple_cycle(a: &TropMatrix, walk: &[usize]) -> (Vec<usize>, Rat) {
    let mut stack: Vec<usize> = Vec::new();
    let mut best: Option<(Vec<usize>, Rat)> = None;
    let mut consider = |cyc: Vec<usize>| {
        // cyc is in walk order: entries (c0,c1),(c1,c2),…,(c_last,c0)
        let m = cyc.len();
        let mut w = Rat::one();
        for t in 0..m {
            w *= a.get(cyc[t], cyc[(t + 1) % m]);
        }
        let better = match &best {
            None => true,
            Some((_, bw)) => w > *bw,
        };
        if better {
            best = Some((cyc, w));
        }
    };
    for &v in walk.iter().chain(std::iter::once(&walk[0])) {
        if let Some(pos) = stack.iter().position(|&u| u == v) {
            let cyc: Vec<usize> = stack.drain(pos..).collect();
            consider(cyc);
        }
        stack.push(v);
    }
    let (mut cyc, w) = best.expect("closed walk contains a cycle");
    // Walk order follows entries (u, v) = edge v -> u; reverse to edge order.
    cyc.reverse();
    let start = cyc.iter().enumerate().min_by_key(|(_, &v)| v).map(|(p, _)| p).unwrap();
    cyc.rotate_left(start);
    (cyc, w)
}

/// Floating estimate of the maximum cycle geometric mean (Karp on logs).
pub fn max_cycle_mean_float(a: &TropMatrix) -> f64 {
    let n = a.n;
    if n == 0 {
        return 0.0;
    }
    let logs: Vec<Vec<Option<f64>>> = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| (!a.get(i, j).is_zero()).then(|| rat::ln(a.get(i, j))))
                .collect()
        })
        .collect();
    // best[k][v]: heaviest walk of exactly k edges ending at v from any start.
    let mut best = vec![vec![Some(0.0f64); n]];
    for k in 1..=n {
        let prev = &best[k - 1];
        let mut cur = vec![None; n];
        for (u, slot) in cur.iter_mut().enumerate() {
            for v in 0..n {
                if let (Some(w), Some(p)) = (logs[u][v], prev[v]) {
                    let cand = p + w;
                    if slot.is_none_or(|s| cand > s) {
                        *slot = Some(cand);
                    }
                }
            }
        }
        best.push(cur);
    }
    let mut lam: Option<f64> = None;
    for v in 0..n {
        let Some(dn) = best[n][v] else { continue };
        let mut worst: Option<f64> = None;
        for (k, row) in best.iter().enumerate().take(n) {
            if let Some(dk) = row[v] {
                let m = (dn - dk) / (n - k) as f64;
                if worst.is_none_or(|w| m < w) {
                    worst = Some(m);
                }
            }
        }
        if let Some(w) = worst {
            if lam.is_none_or(|l| w > l) {
                lam = Some(w);
            }
        }
    }
    lam.map_or(0.0, f64::exp)
}

/// `A ⊙ x ≤ x`, or `<` when `strict`.
pub fn subeigen_check(a: &TropMatrix, x: &[Rat], strict: bool) -> Result<bool, TropError> {
    check_dims(a.n, x.len())?;
    if let Some(p) = x.iter().position(|v| v <= &Rat::zero()) {
        return Err(TropError::NonPositive(p));
    }
    let ax = a.apply(x)?;
    Ok(ax
        .iter()
        .zip(x)
        .all(|(l, r)| if strict { l < r } else { l <= r }))
}
