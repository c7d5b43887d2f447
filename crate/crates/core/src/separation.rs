//! *-connecting paths, d-separation and the conditional independence verdicts.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::Serialize;
use thiserror::Error;

use crate::context::{self, Context, ContextAnalysis, ContextError};
use crate::network::WeightedDag;
use crate::rat::{int, ratio};
use crate::trop::{cycle_compare_one, CycleComparison, TropMatrix};

#[derive(Debug, Error)]
pub enum SeparationError {
    #[error("node sets overlap at node {0}")]
    Overlap(String),
    #[error("edge {from} -> {to} is not in the critical DAG")]
    EdgeNotCritical { from: String, to: String },
    #[error(transparent)]
    Context(#[from] ContextError),
}

/// The five admissible configurations, named by their shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum Shape {
    /// `j -> i`
    A,
    /// `j <- j' -> i`
    B,
    /// `j -> k <- i`
    C,
    /// `j <- j' -> k <- i`
    D,
    /// `j <- j' -> k <- i' -> i`
    E,
}

/// A *-connecting path. `nodes` runs from the endpoint in the first set to
/// the endpoint in the second; `edges` are `(from, to)` pairs along it.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize)]
pub struct StarPath {
    pub shape: Shape,
    pub nodes: Vec<usize>,
    pub edges: Vec<(usize, usize)>,
    pub collider: Option<usize>,
}

impl StarPath {
    fn new(shape: Shape, nodes: Vec<usize>, edges: Vec<(usize, usize)>, collider: Option<usize>) -> Self {
        StarPath {
            shape,
            nodes,
            edges,
            collider,
        }
    }

    pub fn describe(&self, model: &WeightedDag) -> String {
        let mut s = model.label(self.nodes[0]).to_string();
        for w in self.nodes.windows(2) {
            let arrow = if self.edges.contains(&(w[0], w[1])) { "->" } else { "<-" };
            s.push_str(&format!(" {arrow} {}", model.label(w[1])));
        }
        s
    }
}

/// Every instance of the five shapes between `first` and `second` over the
/// edge set, deduplicated by node tuple and sorted by it.
pub fn star_connecting_paths(
    edges: &BTreeSet<(usize, usize)>,
    colliders: &BTreeSet<usize>,
    first: &BTreeSet<usize>,
    second: &BTreeSet<usize>,
) -> Vec<StarPath> {
    let mut parents: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    for &(j, i) in edges {
        parents.entry(i).or_default().insert(j);
    }
    let empty = BTreeSet::new();
    let pa = |v: usize| parents.get(&v).unwrap_or(&empty);
    let has = |a: usize, b: usize| edges.contains(&(a, b));
    let free = |v: usize| !colliders.contains(&v);

    let mut found: BTreeMap<Vec<usize>, StarPath> = BTreeMap::new();
    let mut push = |p: StarPath| {
        let mut seen = BTreeSet::new();
        if p.nodes.iter().all(|v| seen.insert(*v)) {
            found.entry(p.nodes.clone()).or_insert(p);
        }
    };

    for &p in first {
        for &q in second {
            if p == q {
                continue;
            }
            if has(p, q) {
                push(StarPath::new(Shape::A, vec![p, q], vec![(p, q)], None));
            }
            if has(q, p) {
                push(StarPath::new(Shape::A, vec![p, q], vec![(q, p)], None));
            }
            for &m in pa(p).intersection(pa(q)) {
                if free(m) {
                    push(StarPath::new(Shape::B, vec![p, m, q], vec![(m, p), (m, q)], None));
                }
            }
            for &k in colliders {
                let pk = pa(k);
                if pk.contains(&p) && pk.contains(&q) {
                    push(StarPath::new(Shape::C, vec![p, k, q], vec![(p, k), (q, k)], Some(k)));
                }
                // p <- m -> k <- q
                if pk.contains(&q) {
                    for &m in pa(p).intersection(pk) {
                        if free(m) {
                            push(StarPath::new(
                                Shape::D,
                                vec![p, m, k, q],
                                vec![(m, p), (m, k), (q, k)],
                                Some(k),
                            ));
                        }
                    }
                }
                // p -> k <- m -> q
                if pk.contains(&p) {
                    for &m in pa(q).intersection(pk) {
                        if free(m) {
                            push(StarPath::new(
                                Shape::D,
                                vec![p, k, m, q],
                                vec![(p, k), (m, k), (m, q)],
                                Some(k),
                            ));
                        }
                    }
                }
                for &m in pa(p).intersection(pk) {
                    if !free(m) {
                        continue;
                    }
                    for &m2 in pa(q).intersection(pk) {
                        if free(m2) {
                            push(StarPath::new(
                                Shape::E,
                                vec![p, m, k, m2, q],
                                vec![(m, p), (m, k), (m2, k), (m2, q)],
                                Some(k),
                            ));
                        }
                    }
                }
            }
        }
    }
    found.into_values().collect()
}

/// Classical d-separation via the moralized ancestral graph.
pub fn d_separated(
    model: &WeightedDag,
    first: &BTreeSet<usize>,
    second: &BTreeSet<usize>,
    given: &BTreeSet<usize>,
) -> bool {
    let n = model.n();
    let mut keep = vec![false; n];
    for &v in first.iter().chain(second).chain(given) {
        keep[v] = true;
        for a in model.ancestors(v) {
            keep[a] = true;
        }
    }
    let mut adj = vec![BTreeSet::new(); n];
    for v in (0..n).filter(|&v| keep[v]) {
        let pa = model.parents(v);
        for &p in pa {
            adj[v].insert(p);
            adj[p].insert(v);
        }
        for (x, &a) in pa.iter().enumerate() {
            for &b in &pa[x + 1..] {
                adj[a].insert(b);
                adj[b].insert(a);
            }
        }
    }
    let mut seen = vec![false; n];
    let mut queue: VecDeque<usize> = first.iter().copied().filter(|v| !given.contains(v)).collect();
    for &v in &queue {
        seen[v] = true;
    }
    while let Some(u) = queue.pop_front() {
        if second.contains(&u) {
            return false;
        }
        for &w in &adj[u] {
            if !seen[w] && !given.contains(&w) {
                seen[w] = true;
                queue.push_back(w);
            }
        }
    }
    true
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Independent,
    Dependent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Mode {
    DSeparation,
    Generic,
    FixedC,
    FixedCComplete,
    ContextSpecific,
}

/// Substitution matrix of a path together with the cycle comparison of
/// `Γ_KK ∨ Ξ`. Rows and columns follow `nodes`.
#[derive(Clone, Debug)]
pub struct SubstitutionEvidence {
    pub nodes: Vec<usize>,
    pub matrix: TropMatrix,
    pub comparison: CycleComparison,
}

#[derive(Clone, Debug)]
pub struct CIVerdict {
    pub result: Verdict,
    pub mode: Mode,
    pub witness: Option<StarPath>,
    /// Coefficients under which the generic dependence is realized.
    pub coefficients: Option<WeightedDag>,
    pub substitution: Option<SubstitutionEvidence>,
}

impl CIVerdict {
    fn independent(mode: Mode) -> Self {
        CIVerdict {
            result: Verdict::Independent,
            mode,
            witness: None,
            coefficients: None,
            substitution: None,
        }
    }

    fn dependent(mode: Mode, path: StarPath) -> Self {
        CIVerdict {
            result: Verdict::Dependent,
            mode,
            witness: Some(path),
            coefficients: None,
            substitution: None,
        }
    }

    pub fn is_independent(&self) -> bool {
        self.result == Verdict::Independent
    }
}

fn check_disjoint(
    model: &WeightedDag,
    sets: &[&BTreeSet<usize>],
) -> Result<(), SeparationError> {
    for (x, a) in sets.iter().enumerate() {
        for b in &sets[x + 1..] {
            if let Some(&v) = a.intersection(b).next() {
                return Err(SeparationError::Overlap(model.label(v).to_string()));
            }
        }
    }
    Ok(())
}

pub fn ci_dsep(
    model: &WeightedDag,
    first: &BTreeSet<usize>,
    second: &BTreeSet<usize>,
    given: &BTreeSet<usize>,
) -> Result<CIVerdict, SeparationError> {
    check_disjoint(model, &[first, second, given])?;
    Ok(if d_separated(model, first, second, given) {
        CIVerdict::independent(Mode::DSeparation)
    } else {
        CIVerdict {
            result: Verdict::Dependent,
            mode: Mode::DSeparation,
            witness: None,
            coefficients: None,
            substitution: None,
        }
    })
}

/// `Ξ` for one edge, as a dense matrix over the sorted `given` nodes.
pub fn substitution_matrix_edge(
    model: &WeightedDag,
    given: &BTreeSet<usize>,
    from: usize,
    to: usize,
) -> Result<TropMatrix, SeparationError> {
    if !model.reaches(from, to) || from == to || model.critical_through(from, to, given) {
        return Err(SeparationError::EdgeNotCritical {
            from: model.label(from).to_string(),
            to: model.label(to).to_string(),
        });
    }
    let pos: BTreeMap<usize, usize> = given.iter().enumerate().map(|(x, &v)| (v, x)).collect();
    let mut m = TropMatrix::zeros(given.len());
    for (k, l, v) in context::substitution_entries(model, from, to, given) {
        m.set(pos[&k], pos[&l], v);
    }
    Ok(m)
}

/// Entrywise max of the edge matrices along the path.
pub fn substitution_matrix(
    model: &WeightedDag,
    given: &BTreeSet<usize>,
    path: &StarPath,
) -> Result<TropMatrix, SeparationError> {
    let mut m = TropMatrix::zeros(given.len());
    for &(from, to) in &path.edges {
        let e = substitution_matrix_edge(model, given, from, to)?;
        m = m.join(&e).expect("same dimension");
    }
    Ok(m)
}

/// The path is effective iff the cycles of `Γ_KK ∨ Ξ` all weigh less than one.
pub fn path_effective(
    model: &WeightedDag,
    given: &BTreeSet<usize>,
    path: &StarPath,
) -> Result<(bool, SubstitutionEvidence), SeparationError> {
    let xi = substitution_matrix(model, given, path)?;
    let nodes: Vec<usize> = given.iter().copied().collect();
    let combined = model.gamma().submatrix(&nodes).join(&xi).expect("same dimension");
    let comparison = cycle_compare_one(&combined);
    let effective = comparison.ordering == std::cmp::Ordering::Less;
    Ok((
        effective,
        SubstitutionEvidence {
            nodes,
            matrix: xi,
            comparison,
        },
    ))
}

/// Sound test: no *-connecting path in the critical DAG.
pub fn ci_fixed_c(
    model: &WeightedDag,
    first: &BTreeSet<usize>,
    second: &BTreeSet<usize>,
    given: &BTreeSet<usize>,
) -> Result<CIVerdict, SeparationError> {
    check_disjoint(model, &[first, second, given])?;
    let crit = model.critical_dag(given);
    let paths = star_connecting_paths(&crit.edges, given, first, second);
    Ok(match paths.into_iter().next() {
        None => CIVerdict::independent(Mode::FixedC),
        Some(p) => CIVerdict::dependent(Mode::FixedC, p),
    })
}

/// Exact test: dependent iff some *-connecting path in the critical DAG is
/// effective.
pub fn ci_fixed_c_complete(
    model: &WeightedDag,
    first: &BTreeSet<usize>,
    second: &BTreeSet<usize>,
    given: &BTreeSet<usize>,
) -> Result<CIVerdict, SeparationError> {
    check_disjoint(model, &[first, second, given])?;
    let crit = model.critical_dag(given);
    for p in star_connecting_paths(&crit.edges, given, first, second) {
        let (effective, evidence) = path_effective(model, given, &p)?;
        if effective {
            let mut v = CIVerdict::dependent(Mode::FixedCComplete, p);
            v.substitution = Some(evidence);
            return Ok(v);
        }
    }
    Ok(CIVerdict::independent(Mode::FixedCComplete))
}

/// Shortest directed path `from -> to` in the model whose interior avoids
/// `given`, as a list of edges.
fn route_avoiding(
    model: &WeightedDag,
    from: usize,
    to: usize,
    given: &BTreeSet<usize>,
) -> Option<Vec<(usize, usize)>> {
    let n = model.n();
    let mut prev = vec![usize::MAX; n];
    let mut queue = VecDeque::from([from]);
    prev[from] = from;
    while let Some(u) = queue.pop_front() {
        if u == to {
            let mut out = Vec::new();
            let mut v = to;
            while v != from {
                out.push((prev[v], v));
                v = prev[v];
            }
            out.reverse();
            return Some(out);
        }
        if u != from && given.contains(&u) {
            continue;
        }
        for &w in model.children(u) {
            if prev[w] == usize::MAX {
                prev[w] = u;
                queue.push_back(w);
            }
        }
    }
    None
}

/// Weights 1 on routes realizing the path's edges, 1/2 elsewhere.
fn witness_coefficients(
    model: &WeightedDag,
    given: &BTreeSet<usize>,
    path: &StarPath,
) -> Option<WeightedDag> {
    let mut heavy = BTreeSet::new();
    for &(from, to) in &path.edges {
        heavy.extend(route_avoiding(model, from, to, given)?);
    }
    model
        .reweighted(|a, b| if heavy.contains(&(a, b)) { int(1) } else { ratio(1, 2) })
        .ok()
}

/// Verdict valid for every coefficient matrix supported on the graph. Only
/// the model's edge structure is used. A dependent verdict carries a
/// coefficient choice under which the exact test also reports dependence.
pub fn ci_generic(
    model: &WeightedDag,
    first: &BTreeSet<usize>,
    second: &BTreeSet<usize>,
    given: &BTreeSet<usize>,
) -> Result<CIVerdict, SeparationError> {
    check_disjoint(model, &[first, second, given])?;
    let reach = model.conditional_reach_dag(given);
    let paths = star_connecting_paths(&reach.edges, given, first, second);
    let Some(first_path) = paths.first().cloned() else {
        return Ok(CIVerdict::independent(Mode::Generic));
    };
    for p in paths {
        let Some(coef) = witness_coefficients(model, given, &p) else {
            continue;
        };
        let check = ci_fixed_c_complete(&coef, first, second, given)?;
        if check.result == Verdict::Dependent {
            let mut v = CIVerdict::dependent(Mode::Generic, p);
            v.coefficients = Some(coef);
            v.substitution = check.substitution;
            return Ok(v);
        }
    }
    Ok(CIVerdict::dependent(Mode::Generic, first_path))
}

/// Context-specific verdict from a finished analysis. Constant nodes are
/// dropped from both sides; colliders are the sources `H ∪ L`.
pub fn ci_in_analysis(
    model: &WeightedDag,
    analysis: &ContextAnalysis,
    first: &BTreeSet<usize>,
    second: &BTreeSet<usize>,
) -> Result<CIVerdict, SeparationError> {
    check_disjoint(model, &[first, second])?;
    let active = |s: &BTreeSet<usize>| -> BTreeSet<usize> {
        s.iter().copied().filter(|v| !analysis.is_constant(*v)).collect()
    };
    let (a, b) = (active(first), active(second));
    let colliders = if analysis.context.is_empty() {
        BTreeSet::new()
    } else {
        analysis.partition.sources()
    };
    let paths = star_connecting_paths(&analysis.source.edges, &colliders, &a, &b);
    Ok(match paths.into_iter().next() {
        None => CIVerdict::independent(Mode::ContextSpecific),
        Some(p) => CIVerdict::dependent(Mode::ContextSpecific, p),
    })
}

pub fn ci_context(
    model: &WeightedDag,
    ctx: &Context,
    first: &BTreeSet<usize>,
    second: &BTreeSet<usize>,
    guard: usize,
) -> Result<CIVerdict, SeparationError> {
    let analysis = context::analyze(model, ctx, guard)?;
    ci_in_analysis(model, &analysis, first, second)
}
