//! Analysis of a context `{X_K = x_K}`: compatible galaxies, constant nodes,
//! the node partition and the source DAG.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use thiserror::Error;

use crate::impact::{self, Galaxy, ImpactError};
use crate::network::WeightedDag;
use crate::rat::{self, Rat};
use crate::trop::{self, TropMatrix};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ContextError {
    #[error("node index {0} out of range")]
    UnknownNode(usize),
    #[error("observed value at node {0} is not strictly positive")]
    NonPositive(usize),
    #[error("impossible context: {0}")]
    Impossible(String),
    #[error(transparent)]
    Impact(#[from] ImpactError),
}

/// Observed nodes with their values.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Context {
    observed: BTreeMap<usize, Rat>,
}

impl Context {
    pub fn new(model: &WeightedDag, observed: BTreeMap<usize, Rat>) -> Result<Self, ContextError> {
        for (&k, v) in &observed {
            if k >= model.n() {
                return Err(ContextError::UnknownNode(k));
            }
            if v <= &Rat::zero() {
                return Err(ContextError::NonPositive(k));
            }
        }
        Ok(Context { observed })
    }

    pub fn empty() -> Self {
        Context {
            observed: BTreeMap::new(),
        }
    }

    pub fn observed(&self) -> &BTreeMap<usize, Rat> {
        &self.observed
    }

    pub fn nodes(&self) -> BTreeSet<usize> {
        self.observed.keys().copied().collect()
    }

    pub fn value(&self, k: usize) -> Option<&Rat> {
        self.observed.get(&k)
    }

    pub fn is_empty(&self) -> bool {
        self.observed.is_empty()
    }

    /// Necessary condition for lying in the image: `x_k ≥ c*_kh x_h`.
    pub fn precheck(&self, model: &WeightedDag) -> Result<(), (usize, usize)> {
        for (&k, xk) in &self.observed {
            for (&h, xh) in &self.observed {
                if k != h && &(model.cs(k, h) * xh) > xk {
                    return Err((h, k));
                }
            }
        }
        Ok(())
    }
}

/// Difference constraints in multiplicative form over positive variables.
///
/// Each constraint reads `z_to ≤ factor · z_from`, or `<` when strict.
#[derive(Clone, Debug, Default)]
pub struct FeasSystem {
    vars: usize,
    constraints: Vec<FeasConstraint>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FeasConstraint {
    pub from: usize,
    pub to: usize,
    pub factor: Rat,
    pub strict: bool,
}

impl FeasSystem {
    pub fn new(vars: usize) -> Self {
        FeasSystem {
            vars,
            constraints: Vec::new(),
        }
    }

    pub fn vars(&self) -> usize {
        self.vars
    }

    pub fn constraints(&self) -> &[FeasConstraint] {
        &self.constraints
    }

    pub fn add_var(&mut self) -> usize {
        self.vars += 1;
        self.vars - 1
    }

    pub fn upper(&mut self, to: usize, factor: Rat, from: usize, strict: bool) {
        self.constraints.push(FeasConstraint {
            from,
            to,
            factor,
            strict,
        });
    }

    /// `z_v = value · z_origin`.
    pub fn pin(&mut self, v: usize, value: &Rat, origin: usize) {
        self.upper(v, value.clone(), origin, false);
        self.upper(origin, rat::one() / value, v, false);
    }

    /// Bellman-Ford over `(product, strict count)` ordered lexicographically;
    /// infeasible iff some cycle has product below one, or equal to one with
    /// a strict edge.
    pub fn feasible(&self) -> bool {
        let n = self.vars;
        // key (p, s) is tighter when p is smaller, then when s is larger
        let mut dist: Vec<(Rat, i64)> = vec![(rat::one(), 0); n];
        let better = |a: &(Rat, i64), b: &(Rat, i64)| match a.0.cmp(&b.0) {
            Ordering::Less => true,
            Ordering::Greater => false,
            Ordering::Equal => a.1 > b.1,
        };
        for round in 0..=n {
            let mut changed = false;
            for c in &self.constraints {
                let cand = (&dist[c.from].0 * &c.factor, dist[c.from].1 + c.strict as i64);
                if better(&cand, &dist[c.to]) {
                    dist[c.to] = cand;
                    changed = true;
                }
            }
            if !changed {
                return true;
            }
            if round == n {
                return false;
            }
        }
        true
    }
}

/// Constraints describing `E(g) ∩ {X_K = x_K}`; the last variable is the origin.
pub fn region_system(model: &WeightedDag, g: &Galaxy, ctx: &Context) -> FeasSystem {
    let n = model.n();
    let mut sys = FeasSystem::new(n + 1);
    let origin = n;
    for i in 0..n {
        let r = g.root_of(i);
        let top = model.cs(i, r);
        for j in 0..n {
            if j == r || !model.reaches(j, i) {
                continue;
            }
            // c*_ir z_r > c*_ij z_j
            sys.upper(j, top / model.cs(i, j), r, true);
        }
    }
    for (&k, xk) in ctx.observed() {
        let r = g.root_of(k);
        sys.pin(r, &(xk / model.cs(k, r)), origin);
    }
    sys
}

pub fn region_feasible(model: &WeightedDag, g: &Galaxy, ctx: &Context) -> bool {
    region_system(model, g, ctx).feasible()
}

/// Rank of the projection of the galaxy's linear map onto `K`.
pub fn projection_rank(g: &Galaxy, k: &BTreeSet<usize>) -> usize {
    k.iter().map(|&v| g.root_of(v)).collect::<BTreeSet<_>>().len()
}

#[derive(Clone, Debug)]
pub struct Compatibility {
    pub compatible: Vec<Galaxy>,
    pub min_rank: usize,
    /// Feasible galaxies dropped by the rank filter.
    pub rejected: Vec<Galaxy>,
}

pub fn compatible_impact_graphs(
    model: &WeightedDag,
    ctx: &Context,
    guard: usize,
) -> Result<Compatibility, ContextError> {
    let all = impact::enumerate_impact_graphs(model, guard)?;
    Ok(compatible_among(model, ctx, &all))
}

/// Compatibility filter over a precomputed list of impact graphs.
pub fn compatible_among(model: &WeightedDag, ctx: &Context, all: &[Galaxy]) -> Compatibility {
    let k = ctx.nodes();
    let mut feasible: Vec<(usize, &Galaxy)> = Vec::new();
    if ctx.precheck(model).is_ok() {
        for g in all {
            if region_feasible(model, g, ctx) {
                feasible.push((projection_rank(g, &k), g));
            }
        }
    }
    let min_rank = feasible.iter().map(|p| p.0).min().unwrap_or(0);
    let (keep, drop): (Vec<_>, Vec<_>) = feasible.into_iter().partition(|p| p.0 == min_rank);
    Compatibility {
        compatible: keep.into_iter().map(|p| p.1.clone()).collect(),
        min_rank,
        rejected: drop.into_iter().map(|p| p.1.clone()).collect(),
    }
}

/// Values of the nodes pinned under `g`: the stars meeting `K`.
pub fn constants_under(model: &WeightedDag, g: &Galaxy, ctx: &Context) -> BTreeMap<usize, Rat> {
    let mut out = BTreeMap::new();
    for (&k, xk) in ctx.observed() {
        let r = g.root_of(k);
        if out.contains_key(&r) {
            continue;
        }
        let pinned = xk / model.cs(k, r);
        for v in g.star_of(k) {
            out.insert(v, model.cs(v, r) * &pinned);
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct Partition {
    pub active: BTreeSet<usize>,
    pub h: BTreeSet<usize>,
    pub l_blocks: Vec<BTreeSet<usize>>,
    pub u: BTreeSet<usize>,
}

impl Partition {
    pub fn l(&self) -> BTreeSet<usize> {
        self.l_blocks.iter().flatten().copied().collect()
    }

    /// `H ∪ L`.
    pub fn sources(&self) -> BTreeSet<usize> {
        let mut s = self.l();
        s.extend(self.h.iter().copied());
        s
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Default)]
pub struct SourceDag {
    pub edges: BTreeSet<(usize, usize)>,
    pub removed: BTreeSet<(usize, usize)>,
    pub total_impact: BTreeSet<(usize, usize)>,
}

impl SourceDag {
    pub fn parents(&self, i: usize) -> BTreeSet<usize> {
        self.edges.iter().filter(|e| e.1 == i).map(|e| e.0).collect()
    }

    pub fn children(&self, j: usize) -> BTreeSet<usize> {
        self.edges.iter().filter(|e| e.0 == j).map(|e| e.1).collect()
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }
}

/// Everything derived from one possible context.
#[derive(Clone, Debug)]
pub struct ContextAnalysis {
    pub context: Context,
    pub compatible: Vec<Galaxy>,
    pub min_rank: usize,
    pub rejected: Vec<Galaxy>,
    /// `K*(g)` with values, aligned with `compatible`.
    pub constants_per_graph: Vec<BTreeMap<usize, Rat>>,
    /// `K*` with the common values.
    pub constants: BTreeMap<usize, Rat>,
    pub warnings: Vec<String>,
    pub partition: Partition,
    pub source: SourceDag,
}

impl ContextAnalysis {
    pub fn k_star(&self) -> BTreeSet<usize> {
        self.constants.keys().copied().collect()
    }

    pub fn is_constant(&self, v: usize) -> bool {
        self.constants.contains_key(&v)
    }

    pub fn value(&self, v: usize) -> Option<&Rat> {
        self.constants.get(&v)
    }
}

pub fn analyze(
    model: &WeightedDag,
    ctx: &Context,
    guard: usize,
) -> Result<ContextAnalysis, ContextError> {
    let all = impact::enumerate_impact_graphs(model, guard)?;
    analyze_with(model, ctx, &all)
}

/// Same as [`analyze`] with the impact graphs supplied by the caller.
pub fn analyze_with(
    model: &WeightedDag,
    ctx: &Context,
    all: &[Galaxy],
) -> Result<ContextAnalysis, ContextError> {
    let n = model.n();
    if ctx.is_empty() {
        let reach = model.reachability_dag().edges;
        return Ok(ContextAnalysis {
            context: ctx.clone(),
            compatible: all.to_vec(),
            min_rank: 0,
            rejected: Vec::new(),
            constants_per_graph: vec![BTreeMap::new(); all.len()],
            constants: BTreeMap::new(),
            warnings: Vec::new(),
            partition: Partition {
                active: (0..n).collect(),
                ..Partition::default()
            },
            source: SourceDag {
                edges: reach.clone(),
                removed: BTreeSet::new(),
                total_impact: reach,
            },
        });
    }
    if let Err((h, k)) = ctx.precheck(model) {
        return Err(ContextError::Impossible(format!(
            "observed {} exceeds what {} allows",
            model.label(h),
            model.label(k)
        )));
    }
    let comp = compatible_among(model, ctx, all);
    if comp.compatible.is_empty() {
        return Err(ContextError::Impossible(
            "no impact graph is compatible".into(),
        ));
    }
    let per_graph: Vec<BTreeMap<usize, Rat>> = comp
        .compatible
        .iter()
        .map(|g| constants_under(model, g, ctx))
        .collect();

    let mut constants = BTreeMap::new();
    let mut warnings = Vec::new();
    for v in 0..n {
        let vals: BTreeSet<&Rat> = per_graph.iter().filter_map(|m| m.get(&v)).collect();
        let everywhere = per_graph.iter().all(|m| m.contains_key(&v));
        if !everywhere {
            continue;
        }
        if vals.len() == 1 {
            constants.insert(v, (*vals.iter().next().unwrap()).clone());
        } else {
            warnings.push(format!(
                "node {} is pinned in every compatible graph but with {} different values; treated as active",
                model.label(v),
                vals.len()
            ));
        }
    }

    let total: BTreeSet<(usize, usize)> =
        comp.compatible.iter().flat_map(|g| g.edges()).collect();
    let mut removed = BTreeSet::new();
    for &(j, i) in &total {
        let redundant = constants.contains_key(&j)
            || (!constants.contains_key(&i)
                && comp
                    .compatible
                    .iter()
                    .zip(&per_graph)
                    .filter(|(g, _)| g.has_edge(j, i))
                    .all(|(_, m)| m.contains_key(&j)));
        if redundant {
            removed.insert((j, i));
        }
    }
    let edges: BTreeSet<(usize, usize)> = total.difference(&removed).copied().collect();
    let source = SourceDag {
        edges,
        removed,
        total_impact: total,
    };

    let mut part = Partition::default();
    for v in 0..n {
        let Some(xv) = constants.get(&v) else {
            part.active.insert(v);
            continue;
        };
        let is_u = constants
            .iter()
            .any(|(&k, xk)| k != v && model.reaches(k, v) && &(model.cs(v, k) * xk) == xv);
        if is_u {
            part.u.insert(v);
        } else if comp.compatible.iter().any(|g| g.parent(v).is_none()) {
            part.h.insert(v);
        }
    }
    let mut blocks: BTreeMap<BTreeSet<usize>, BTreeSet<usize>> = BTreeMap::new();
    for &v in constants.keys() {
        if !part.u.contains(&v) && !part.h.contains(&v) {
            blocks.entry(source.parents(v)).or_default().insert(v);
        }
    }
    part.l_blocks = blocks.into_values().collect();
    part.l_blocks.sort();

    Ok(ContextAnalysis {
        context: ctx.clone(),
        compatible: comp.compatible,
        min_rank: comp.min_rank,
        rejected: comp.rejected,
        constants_per_graph: per_graph,
        constants,
        warnings,
        partition: part,
        source,
    })
}

/// `C̄`: ratios `x_i / x_j` among constant nodes, `c_ij` elsewhere.
pub fn completion_matrix(model: &WeightedDag, analysis: &ContextAnalysis) -> TropMatrix {
    let mut m = model.c().clone();
    for (&i, xi) in &analysis.constants {
        for (&j, xj) in &analysis.constants {
            m.set(i, j, xi / xj);
        }
    }
    m
}

/// Closure of the completion; `None` if its cycle mean exceeds one.
pub fn completion_closure(model: &WeightedDag, analysis: &ContextAnalysis) -> Option<TropMatrix> {
    trop::bounded_star(&completion_matrix(model, analysis)).ok()
}

/// `ξ^{ij}` restricted to `set`: entries `c*_kj c*_iℓ / c*_ij` for `k` below `j`
/// and `ℓ` above or equal to `i`, `k ≠ ℓ`.
pub fn substitution_entries(
    model: &WeightedDag,
    j: usize,
    i: usize,
    set: &BTreeSet<usize>,
) -> Vec<(usize, usize, Rat)> {
    let base = model.cs(i, j);
    let mut out = Vec::new();
    if base.is_zero() {
        return out;
    }
    for &k in set {
        if k == j || !model.reaches(j, k) {
            continue;
        }
        for &l in set {
            if l == k || !model.reaches(l, i) {
                continue;
            }
            out.push((k, l, model.cs(k, j) * model.cs(i, l) / base));
        }
    }
    out
}

/// Edges effective in the context, over all pairs of the critical DAG:
/// `j` not constant, no critical path through a constant node, and
/// `c*_ij = c̄*_ij`.
pub fn effective_edges_in_context(
    model: &WeightedDag,
    analysis: &ContextAnalysis,
) -> BTreeSet<(usize, usize)> {
    let kstar = analysis.k_star();
    let crit = model.critical_dag(&analysis.context.nodes());
    let Some(closure) = completion_closure(model, analysis) else {
        return BTreeSet::new();
    };
    crit.edges
        .iter()
        .copied()
        .filter(|&(j, i)| {
            !kstar.contains(&j)
                && !model.critical_through(j, i, &kstar)
                && closure.get(i, j) == model.cs(i, j)
        })
        .collect()
}

/// Strict form of the substitution test: `ξ_kℓ x_ℓ < x_k` for every entry.
/// Differs from [`effective_edges_in_context`] only on ties.
pub fn substitution_test(model: &WeightedDag, analysis: &ContextAnalysis, j: usize, i: usize) -> bool {
    substitution_entries(model, j, i, &analysis.k_star())
        .iter()
        .all(|(k, l, xi)| (xi * &analysis.constants[l]) < analysis.constants[k])
}

/// `λ(C̄) = 1`; holds for every possible context with constants.
pub fn completion_eigenvalue_is_one(model: &WeightedDag, analysis: &ContextAnalysis) -> bool {
    trop::cycle_compare_one(&completion_matrix(model, analysis)).ordering == Ordering::Equal
}
