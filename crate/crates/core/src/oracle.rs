//! Brute-force and Monte Carlo cross-checks.
//!
//! Evaluation here runs the structural recursion in floating point from the
//! edge list alone; nothing below touches the closure or the context engine.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::dist::InnovationDist;
use crate::impact::Galaxy;
use crate::network::{Edge, WeightedDag};
use crate::rat::{int, one, ratio, to_f64, Rat};
use crate::trop::TropMatrix;

#[derive(Debug, Error, PartialEq)]
pub enum OracleError {
    #[error("rejection sampler gave up: {accepted} accepted out of {attempts} draws")]
    Timeout { accepted: usize, attempts: u64 },
    #[error("need at least {need} paired observations, got {got}")]
    TooFewSamples { need: usize, got: usize },
}

/// Draws from the unconditional or band-conditioned law.
#[derive(Clone, Debug)]
pub struct SampleBatch {
    pub seed: u64,
    pub n: usize,
    pub dist: InnovationDist,
    pub z: Vec<Vec<f64>>,
    pub x: Vec<Vec<f64>>,
    pub galaxies: Vec<Galaxy>,
    pub attempts: u64,
}

impl SampleBatch {
    pub fn acceptance_rate(&self) -> f64 {
        self.n as f64 / self.attempts.max(1) as f64
    }

    pub fn column(&self, v: usize) -> Vec<f64> {
        self.x.iter().map(|row| row[v]).collect()
    }
}

struct FloatNet {
    parents: Vec<Vec<(usize, f64)>>,
    order: Vec<usize>,
}

impl FloatNet {
    fn new(model: &WeightedDag) -> Self {
        let n = model.n();
        let mut parents = vec![Vec::new(); n];
        let mut indeg = vec![0usize; n];
        for e in model.edges() {
            parents[e.to].push((e.from, to_f64(&e.weight)));
            indeg[e.to] += 1;
        }
        // Kahn's algorithm on the raw edge list
        let mut order = Vec::with_capacity(n);
        let mut ready: Vec<usize> = (0..n).filter(|&v| indeg[v] == 0).collect();
        while let Some(v) = ready.pop() {
            order.push(v);
            for e in model.edges().iter().filter(|e| e.from == v) {
                indeg[e.to] -= 1;
                if indeg[e.to] == 0 {
                    ready.push(e.to);
                }
            }
        }
        FloatNet { parents, order }
    }

    /// Evaluates `v` from its already evaluated parents.
    /// Returns false on an exact tie.
    fn step(&self, v: usize, z: &[f64], x: &mut [f64], realizer: &mut [usize]) -> bool {
        let mut best = z[v];
        let mut who = v;
        let mut tie = false;
        for &(p, c) in &self.parents[v] {
            let t = c * x[p];
            if t > best {
                best = t;
                who = realizer[p];
                tie = false;
            } else if t == best {
                tie = true;
            }
        }
        x[v] = best;
        realizer[v] = who;
        !tie
    }
}

fn galaxy_of(realizer: &[usize]) -> Galaxy {
    Galaxy::from_parents(
        realizer
            .iter()
            .enumerate()
            .map(|(i, &r)| (r != i).then_some(r))
            .collect(),
    )
}

/// Unconditional draws; ties are redrawn.
pub fn sample_model(model: &WeightedDag, n: usize, dist: InnovationDist, seed: u64) -> SampleBatch {
    let net = FloatNet::new(model);
    let size = model.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch = SampleBatch {
        seed,
        n,
        dist,
        z: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        galaxies: Vec::with_capacity(n),
        attempts: 0,
    };
    while batch.z.len() < n {
        batch.attempts += 1;
        let z: Vec<f64> = (0..size).map(|_| dist.sample(&mut rng)).collect();
        let mut x = vec![0.0; size];
        let mut realizer = vec![0; size];
        if net.order.iter().all(|&v| net.step(v, &z, &mut x, &mut realizer)) {
            batch.galaxies.push(galaxy_of(&realizer));
            batch.z.push(z);
            batch.x.push(x);
        }
    }
    batch
}

/// Realized impact graphs of `n` draws with their counts.
pub fn mc_impact_graphs(
    model: &WeightedDag,
    n: usize,
    dist: InnovationDist,
    seed: u64,
) -> BTreeMap<Galaxy, usize> {
    let mut counts = BTreeMap::new();
    for g in sample_model(model, n, dist, seed).galaxies {
        *counts.entry(g).or_insert(0) += 1;
    }
    counts
}

/// Limits for [`rejection_band_sampler`].
#[derive(Clone, Copy, Debug)]
pub struct RejectionBudget {
    pub max_attempts: u64,
    /// Give up once this many draws have been made with a lower acceptance rate.
    pub floor_after: u64,
    pub floor: f64,
}

impl Default for RejectionBudget {
    fn default() -> Self {
        RejectionBudget {
            max_attempts: 400_000_000,
            floor_after: 2_000_000,
            floor: 1e-5,
        }
    }
}

/// Keeps draws with `|X_k - x_k| <= eps * x_k` for every observed `k`.
/// Ancestors of the observed nodes are drawn first so rejected draws stay cheap.
pub fn rejection_band_sampler(
    model: &WeightedDag,
    observed: &BTreeMap<usize, Rat>,
    eps: f64,
    n: usize,
    dist: InnovationDist,
    seed: u64,
    budget: RejectionBudget,
) -> Result<SampleBatch, OracleError> {
    let net = FloatNet::new(model);
    let size = model.n();
    let target: Vec<(usize, f64)> = observed.iter().map(|(&k, v)| (k, to_f64(v))).collect();

    let mut upstream = vec![false; size];
    let mut stack: Vec<usize> = observed.keys().copied().collect();
    while let Some(v) = stack.pop() {
        if !upstream[v] {
            upstream[v] = true;
            stack.extend(net.parents[v].iter().map(|p| p.0));
        }
    }
    let first: Vec<usize> = net.order.iter().copied().filter(|&v| upstream[v]).collect();
    let rest: Vec<usize> = net.order.iter().copied().filter(|&v| !upstream[v]).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut batch = SampleBatch {
        seed,
        n,
        dist,
        z: Vec::with_capacity(n),
        x: Vec::with_capacity(n),
        galaxies: Vec::with_capacity(n),
        attempts: 0,
    };
    let mut z = vec![0.0; size];
    let mut x = vec![0.0; size];
    let mut realizer = vec![0; size];
    while batch.z.len() < n {
        batch.attempts += 1;
        let rate = batch.z.len() as f64 / batch.attempts as f64;
        if batch.attempts > budget.max_attempts
            || (batch.attempts > budget.floor_after && rate < budget.floor)
        {
            return Err(OracleError::Timeout {
                accepted: batch.z.len(),
                attempts: batch.attempts,
            });
        }
        let mut ok = true;
        for &v in &first {
            z[v] = dist.sample(&mut rng);
            ok &= net.step(v, &z, &mut x, &mut realizer);
        }
        if !ok || target.iter().any(|&(k, t)| (x[k] - t).abs() > eps * t) {
            continue;
        }
        for &v in &rest {
            z[v] = dist.sample(&mut rng);
            ok &= net.step(v, &z, &mut x, &mut realizer);
        }
        if ok {
            batch.galaxies.push(galaxy_of(&realizer));
            batch.z.push(z.clone());
            batch.x.push(x.clone());
        }
    }
    Ok(batch)
}

fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut out = vec![0.0; v.len()];
    let mut s = 0;
    while s < idx.len() {
        let mut e = s;
        while e + 1 < idx.len() && v[idx[e + 1]] == v[idx[s]] {
            e += 1;
        }
        let mid = (s + e) as f64 / 2.0;
        for &i in &idx[s..=e] {
            out[i] = mid;
        }
        s = e + 1;
    }
    out
}

/// Double-centred distance matrix, row-major.
fn centred_distances(v: &[f64]) -> Vec<f64> {
    let n = v.len();
    let mut d = vec![0.0; n * n];
    for a in 0..n {
        for b in 0..n {
            d[a * n + b] = (v[a] - v[b]).abs();
        }
    }
    let row: Vec<f64> = (0..n).map(|a| d[a * n..(a + 1) * n].iter().sum::<f64>() / n as f64).collect();
    let all = row.iter().sum::<f64>() / n as f64;
    for a in 0..n {
        for b in 0..n {
            d[a * n + b] += all - row[a] - row[b];
        }
    }
    d
}

fn dcov_stat(a: &[f64], b: &[f64], perm: &[usize]) -> f64 {
    let n = perm.len();
    let mut s = 0.0;
    for x in 0..n {
        let pa = perm[x] * n;
        let ra = &a[x * n..(x + 1) * n];
        for y in 0..n {
            s += ra[y] * b[pa + perm[y]];
        }
    }
    s
}

pub const MIN_PAIRED: usize = 200;

/// Permutation p-value of the distance covariance between the ranks of `xs`
/// and `ys`: `(1 + #{perm >= observed}) / (1 + permutations)`.
pub fn independence_test(
    xs: &[f64],
    ys: &[f64],
    permutations: usize,
    seed: u64,
) -> Result<f64, OracleError> {
    let n = xs.len().min(ys.len());
    if xs.len() != ys.len() || n < MIN_PAIRED {
        return Err(OracleError::TooFewSamples {
            need: MIN_PAIRED,
            got: n,
        });
    }
    let a = centred_distances(&ranks(xs));
    let b = centred_distances(&ranks(ys));
    let mut perm: Vec<usize> = (0..n).collect();
    let observed = dcov_stat(&a, &b, &perm);
    let tol = 1e-9 * observed.abs().max(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut hits = 0usize;
    for _ in 0..permutations.max(1) {
        perm.shuffle(&mut rng);
        if dcov_stat(&a, &b, &perm) >= observed - tol {
            hits += 1;
        }
    }
    Ok((1 + hits) as f64 / (1 + permutations.max(1)) as f64)
}

/// Conservative large-sample p-value for the same rank statistic:
/// `P(chi2_1 >= n V^2 / S2)`, with `S2` the product of the mean pairwise
/// distances. Cheap and fine-grained, so it survives multiplicity corrections
/// that a permutation count cannot resolve.
pub fn independence_bound_pvalue(xs: &[f64], ys: &[f64]) -> Result<f64, OracleError> {
    let n = xs.len().min(ys.len());
    if xs.len() != ys.len() || n < MIN_PAIRED {
        return Err(OracleError::TooFewSamples {
            need: MIN_PAIRED,
            got: n,
        });
    }
    let (rx, ry) = (ranks(xs), ranks(ys));
    let mean_gap = |v: &[f64]| {
        let mut s = 0.0;
        for a in v {
            for b in v {
                s += (a - b).abs();
            }
        }
        s / (n * n) as f64
    };
    let s2 = mean_gap(&rx) * mean_gap(&ry);
    if s2 == 0.0 {
        // a constant column carries no information
        return Ok(1.0);
    }
    let a = centred_distances(&rx);
    let b = centred_distances(&ry);
    let identity: Vec<usize> = (0..n).collect();
    let v2 = dcov_stat(&a, &b, &identity) / (n * n) as f64;
    let t = (n as f64 * v2 / s2).max(0.0);
    Ok(erfc((t / 2.0).sqrt()))
}

/// Cell of each value: heavy atoms get their own cell, the rest are cut at
/// the empirical quantiles `levels` (each in `(0, 1)`), merging neighbours
/// until every cell holds `sqrt(5 n)` values. That keeps every expected count
/// of the table at 5 or more. Values left in an undersized cell map to
/// `None`; dropping samples by their own value keeps independence intact.
fn cells(v: &[f64], levels: &[f64]) -> Vec<Option<usize>> {
    let min_cell = (5.0 * v.len() as f64).sqrt().ceil() as usize;
    let mut counts: BTreeMap<u64, usize> = BTreeMap::new();
    for x in v {
        *counts.entry(x.to_bits()).or_default() += 1;
    }
    let heavy = (v.len() / 20).max(min_cell);
    let atoms: BTreeMap<u64, usize> = counts
        .iter()
        .filter(|(_, &c)| c >= heavy)
        .enumerate()
        .map(|(k, (&bits, _))| (bits, k))
        .collect();
    let mut rest: Vec<f64> = v.iter().copied().filter(|x| !atoms.contains_key(&x.to_bits())).collect();
    rest.sort_by(f64::total_cmp);
    let mut cuts: Vec<f64> = levels
        .iter()
        .filter_map(|q| rest.get((q * rest.len() as f64) as usize).copied())
        .collect();
    cuts.dedup();
    // greedy left-to-right merge; an undersized last cell joins its neighbour
    let fine = |x: &f64| cuts.partition_point(|c| c < x);
    let mut fine_size = vec![0usize; cuts.len() + 1];
    for x in &rest {
        fine_size[fine(x)] += 1;
    }
    let mut coarse = vec![0usize; fine_size.len()];
    let (mut cell, mut filled) = (0, 0);
    for (f, &c) in fine_size.iter().enumerate() {
        coarse[f] = cell;
        filled += c;
        if filled >= min_cell {
            cell += 1;
            filled = 0;
        }
    }
    if filled > 0 && cell > 0 {
        for c in coarse.iter_mut().filter(|c| **c == cell) {
            *c = cell - 1;
        }
    }
    let rest_ok = rest.len() >= min_cell;
    v.iter()
        .map(|x| match atoms.get(&x.to_bits()) {
            Some(&k) => Some(k),
            None if rest_ok => Some(atoms.len() + coarse[fine(x)]),
            None => None,
        })
        .collect()
}

/// Pearson chi-square test of independence on the table of [`cells`];
/// asymptotic p-value with `(rows - 1)(cols - 1)` degrees
/// of freedom after dropping empty rows and columns.
pub fn independence_chi2_pvalue(xs: &[f64], ys: &[f64], levels: &[f64]) -> Result<f64, OracleError> {
    let n = xs.len().min(ys.len());
    if xs.len() != ys.len() || n < MIN_PAIRED {
        return Err(OracleError::TooFewSamples {
            need: MIN_PAIRED,
            got: n,
        });
    }
    let (cx, cy) = (cells(xs, levels), cells(ys, levels));
    let width = |c: &[Option<usize>]| c.iter().flatten().max().map_or(0, |m| m + 1);
    let (nr, nc) = (width(&cx), width(&cy));
    let mut table = vec![vec![0.0f64; nc]; nr];
    let mut kept = 0usize;
    for (a, b) in cx.iter().zip(&cy) {
        if let (Some(a), Some(b)) = (a, b) {
            table[*a][*b] += 1.0;
            kept += 1;
        }
    }
    let rows: Vec<f64> = table.iter().map(|r| r.iter().sum()).collect();
    let cols: Vec<f64> = (0..nc).map(|c| table.iter().map(|r| r[c]).sum()).collect();
    let live_rows = rows.iter().filter(|&&r| r > 0.0).count();
    let live_cols = cols.iter().filter(|&&c| c > 0.0).count();
    if live_rows < 2 || live_cols < 2 {
        return Ok(1.0);
    }
    let mut stat = 0.0;
    for (r, row) in table.iter().enumerate() {
        for (c, &observed) in row.iter().enumerate() {
            let expected = rows[r] * cols[c] / kept as f64;
            if expected > 0.0 {
                stat += (observed - expected).powi(2) / expected;
            }
        }
    }
    let df = ((live_rows - 1) * (live_cols - 1)) as f64;
    Ok(ChiSquared::new(df).expect("positive degrees of freedom").sf(stat))
}

/// Holm step-down: which hypotheses are rejected at family level `alpha`.
pub fn holm_reject(pvalues: &[f64], alpha: f64) -> Vec<bool> {
    let m = pvalues.len();
    let mut idx: Vec<usize> = (0..m).collect();
    idx.sort_by(|&a, &b| pvalues[a].total_cmp(&pvalues[b]));
    let mut out = vec![false; m];
    for (rank, &i) in idx.iter().enumerate() {
        if pvalues[i] <= alpha / (m - rank) as f64 {
            out[i] = true;
        } else {
            break;
        }
    }
    out
}

fn ecdf(sorted: &[f64], t: f64) -> f64 {
    sorted.partition_point(|&v| v <= t) as f64 / sorted.len() as f64
}

fn sorted(v: &[f64]) -> Vec<f64> {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    s
}

/// Two-sample Kolmogorov distance.
pub fn kolmogorov(a: &[f64], b: &[f64]) -> f64 {
    band_kolmogorov(a, b, 0.0)
}

/// Kolmogorov distance that forgives relative shifts up to `r`:
/// the largest `F_a(t) - F_b(t(1+r))` or `F_b(t) - F_a(t(1+r))`.
/// Needed when one sample smears atoms over a band.
pub fn band_kolmogorov(a: &[f64], b: &[f64], r: f64) -> f64 {
    let (sa, sb) = (sorted(a), sorted(b));
    let mut d: f64 = 0.0;
    for &t in sa.iter().chain(&sb) {
        let stretched = if t >= 0.0 { t * (1.0 + r) } else { t * (1.0 - r) };
        d = d.max(ecdf(&sa, t) - ecdf(&sb, stretched));
        d = d.max(ecdf(&sb, t) - ecdf(&sa, stretched));
    }
    d
}

/// All assignments of `values` to `nodes`.
pub fn context_grid(nodes: &[usize], values: &[Rat]) -> Vec<BTreeMap<usize, Rat>> {
    let mut out = vec![BTreeMap::new()];
    for &k in nodes {
        out = out
            .into_iter()
            .flat_map(|m| {
                values.iter().map(move |v| {
                    let mut m = m.clone();
                    m.insert(k, v.clone());
                    m
                })
            })
            .collect();
    }
    out
}

/// Random DAG on nodes `1..=n` in label order, each forward pair an edge
/// with probability `density`, weights from a small fixed menu.
pub fn random_model<R: Rng + ?Sized>(rng: &mut R, n: usize, density: f64) -> WeightedDag {
    random_model_with(rng, n, density, &[ratio(1, 2), one(), ratio(3, 2), int(2), int(3)])
}

/// Forward edges `j -> i` (`j < i`) kept with probability `density`, weights
/// drawn uniformly from `menu`.
pub fn random_model_with<R: Rng + ?Sized>(rng: &mut R, n: usize, density: f64, menu: &[Rat]) -> WeightedDag {
    let labels: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
    let mut edges = Vec::new();
    for to in 0..n {
        for from in 0..to {
            if rng.random_bool(density) {
                edges.push(Edge {
                    from,
                    to,
                    weight: menu[rng.random_range(0..menu.len())].clone(),
                });
            }
        }
    }
    WeightedDag::new(labels, edges).expect("forward edges are acyclic")
}

/// Compares every simple cycle's weight with one by explicit enumeration.
/// Less when there is no cycle.
pub fn exhaustive_cycle_ordering(a: &TropMatrix) -> Ordering {
    let n = a.dim();
    let mut best = Ordering::Less;
    // cycles whose smallest node is `start`
    fn walk(
        a: &TropMatrix,
        start: usize,
        at: usize,
        weight: &Rat,
        used: &mut Vec<bool>,
        best: &mut Ordering,
    ) {
        for next in start..a.dim() {
            // edge at -> next has weight a[next][at]
            let w = a.get(next, at);
            if w <= &Rat::from_integer(0.into()) {
                continue;
            }
            let total = weight * w;
            if next == start {
                *best = (*best).max(total.cmp(&one()));
            } else if !used[next] {
                used[next] = true;
                walk(a, start, next, &total, used, best);
                used[next] = false;
            }
        }
    }
    for start in 0..n {
        let mut used = vec![false; n];
        used[start] = true;
        walk(a, start, start, &one(), &mut used, &mut best);
    }
    best
}

/// Nodes whose pairwise conditional dependence the sweep checks: every
/// unordered pair outside `given`.
pub fn query_pairs(n: usize, given: &BTreeSet<usize>) -> Vec<(usize, usize)> {
    let free: Vec<usize> = (0..n).filter(|v| !given.contains(v)).collect();
    let mut out = Vec::new();
    for (x, &a) in free.iter().enumerate() {
        for &b in &free[x + 1..] {
            out.push((a, b));
        }
    }
    out
}
