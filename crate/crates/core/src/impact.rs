//! Impact graphs: which innovation realizes each node.

use std::cmp::Ordering;
use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use serde::Serialize;
use thiserror::Error;

use crate::network::WeightedDag;
use crate::rat::{self, Rat};
use crate::trop::{self, TropMatrix};

pub const DEFAULT_GUARD: usize = 14;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ImpactError {
    #[error("tie between innovations at node {node}")]
    TieDetected { node: usize },
    #[error("model has {nodes} nodes, enumeration guard is {guard}")]
    TooLarge { nodes: usize, guard: usize },
    #[error("expected {expected} innovations, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("innovation {0} is not strictly positive")]
    NonPositive(usize),
}

/// A forest of stars stored as a parent map. Ordering is by parent map, so
/// sets of galaxies compare structurally.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Galaxy {
    parent: Vec<Option<usize>>,
}

impl Galaxy {
    pub fn empty(n: usize) -> Self {
        Galaxy {
            parent: vec![None; n],
        }
    }

    pub fn from_parents(parent: Vec<Option<usize>>) -> Self {
        Galaxy { parent }
    }

    /// Builds from `(from, to)` edges; a later edge into the same node wins.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut g = Galaxy::empty(n);
        for &(f, t) in edges {
            g.parent[t] = Some(f);
        }
        g
    }

    pub fn n(&self) -> usize {
        self.parent.len()
    }

    pub fn parent(&self, i: usize) -> Option<usize> {
        self.parent[i]
    }

    pub fn parents(&self) -> &[Option<usize>] {
        &self.parent
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.parent[to] == Some(from)
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        self.parent
            .iter()
            .enumerate()
            .filter_map(|(i, p)| p.map(|p| (p, i)))
            .collect()
    }

    /// Nodes without a parent, isolated ones included.
    pub fn roots(&self) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.parent[i].is_none()).collect()
    }

    /// Root of the star containing `i`.
    pub fn root_of(&self, i: usize) -> usize {
        self.parent[i].unwrap_or(i)
    }

    pub fn children(&self, r: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| self.parent[i] == Some(r)).collect()
    }

    /// Root to children, every root listed.
    pub fn stars(&self) -> BTreeMap<usize, BTreeSet<usize>> {
        let mut out: BTreeMap<usize, BTreeSet<usize>> =
            self.roots().into_iter().map(|r| (r, BTreeSet::new())).collect();
        for (p, c) in self.edges() {
            out.entry(p).or_default().insert(c);
        }
        out
    }

    /// Star of `i`: its root together with all of the root's children.
    pub fn star_of(&self, i: usize) -> BTreeSet<usize> {
        let r = self.root_of(i);
        let mut s: BTreeSet<usize> = self.children(r).into_iter().collect();
        s.insert(r);
        s
    }

    pub fn rank(&self) -> usize {
        self.roots().len()
    }
}

/// The galaxy realized by innovations `z`.
pub fn realized_impact_graph(model: &WeightedDag, z: &[Rat]) -> Result<Galaxy, ImpactError> {
    let n = model.n();
    if z.len() != n {
        return Err(ImpactError::DimensionMismatch {
            expected: n,
            got: z.len(),
        });
    }
    if let Some(p) = z.iter().position(|v| v <= &Rat::zero()) {
        return Err(ImpactError::NonPositive(p));
    }
    let mut parent = vec![None; n];
    for (i, slot) in parent.iter_mut().enumerate() {
        let mut best = Rat::zero();
        let mut arg = i;
        let mut tied = false;
        for j in 0..n {
            if !model.reaches(j, i) {
                continue;
            }
            let v = model.cs(i, j) * &z[j];
            match v.cmp(&best) {
                Ordering::Greater => {
                    best = v;
                    arg = j;
                    tied = false;
                }
                Ordering::Equal => tied = true,
                Ordering::Less => {}
            }
        }
        if tied {
            return Err(ImpactError::TieDetected { node: i });
        }
        if arg != i {
            *slot = Some(arg);
        }
    }
    Ok(Galaxy { parent })
}

/// Impact exchange matrix, indexed by the galaxy's roots in increasing order.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImpactExchange {
    pub roots: Vec<usize>,
    pub matrix: TropMatrix,
}

pub fn impact_exchange(model: &WeightedDag, g: &Galaxy) -> ImpactExchange {
    let roots = g.roots();
    let mut m = TropMatrix::zeros(roots.len());
    for (a, &r) in roots.iter().enumerate() {
        let kids = g.children(r);
        for (b, &r2) in roots.iter().enumerate() {
            if a == b {
                continue;
            }
            let mut best = Rat::zero();
            for &i in &kids {
                let den = model.cs(i, r);
                if den.is_zero() {
                    continue;
                }
                rat::max_assign(&mut best, model.cs(i, r2) / den);
            }
            m.set(a, b, best);
        }
    }
    ImpactExchange { roots, matrix: m }
}

/// First failed condition of the impact graph characterization.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Violation {
    /// (a) edge `from -> to` absent from the reachability DAG.
    NotReachable { from: usize, to: usize },
    /// (b) `node` has parent `parent`, which itself has a parent.
    NotGalaxy { node: usize, parent: usize },
    /// (c) `j -> i` is in the galaxy and the best path from `j` to `i` can go
    /// through `k`, but `j -> k` is missing.
    Triangle { j: usize, i: usize, k: usize },
    /// (d) cycle of roots whose exchange weights multiply to at least one.
    ExchangeCycle { cycle: Vec<usize>, weight: Rat },
}

impl Violation {
    pub fn condition(&self) -> char {
        match self {
            Violation::NotReachable { .. } => 'a',
            Violation::NotGalaxy { .. } => 'b',
            Violation::Triangle { .. } => 'c',
            Violation::ExchangeCycle { .. } => 'd',
        }
    }
}

pub fn is_impact_graph(model: &WeightedDag, g: &Galaxy) -> Result<(), Violation> {
    let n = model.n();
    let edges = g.edges();
    for &(j, i) in &edges {
        if j == i || !model.reaches(j, i) {
            return Err(Violation::NotReachable { from: j, to: i });
        }
    }
    for &(j, i) in &edges {
        if g.parent(j).is_some() {
            return Err(Violation::NotGalaxy { node: i, parent: j });
        }
    }
    for &(j, i) in &edges {
        let target = model.cs(i, j);
        for k in 0..n {
            if k == i || k == j {
                continue;
            }
            if &(model.cs(i, k) * model.cs(k, j)) == target
                && (g.has_edge(k, i) || !g.has_edge(j, k))
            {
                return Err(Violation::Triangle { j, i, k });
            }
        }
    }
    let ex = impact_exchange(model, g);
    let cmp = trop::cycle_compare_one(&ex.matrix);
    if cmp.ordering != Ordering::Less {
        let cycle = cmp
            .witness
            .unwrap_or_default()
            .into_iter()
            .map(|p| ex.roots[p])
            .collect();
        return Err(Violation::ExchangeCycle {
            cycle,
            weight: cmp.witness_weight.unwrap_or_else(rat::one),
        });
    }
    Ok(())
}

/// All impact graphs of the model, in canonical order.
pub fn enumerate_impact_graphs(
    model: &WeightedDag,
    guard: usize,
) -> Result<Vec<Galaxy>, ImpactError> {
    let n = model.n();
    if n > guard {
        return Err(ImpactError::TooLarge { nodes: n, guard });
    }
    let order = model.topological_order().to_vec();
    let candidates: Vec<Vec<usize>> = (0..n).map(|i| model.ancestors(i)).collect();
    let mut out = Vec::new();
    let mut parent = vec![None; n];
    assign(model, &order, &candidates, 0, &mut parent, &mut out);
    out.sort();
    Ok(out)
}

// Walk nodes in topological order; a node may only take a parent that has
// none itself, and ancestors are always decided first.
fn assign(
    model: &WeightedDag,
    order: &[usize],
    candidates: &[Vec<usize>],
    pos: usize,
    parent: &mut Vec<Option<usize>>,
    out: &mut Vec<Galaxy>,
) {
    if pos == order.len() {
        let g = Galaxy {
            parent: parent.clone(),
        };
        if is_impact_graph(model, &g).is_ok() {
            out.push(g);
        }
        return;
    }
    let i = order[pos];
    parent[i] = None;
    assign(model, order, candidates, pos + 1, parent, out);
    for &j in &candidates[i] {
        if parent[j].is_none() {
            parent[i] = Some(j);
            assign(model, order, candidates, pos + 1, parent, out);
        }
    }
    parent[i] = None;
}

/// Restricted Kleene star of `g`: one positive entry per row.
pub fn restricted_kleene(model: &WeightedDag, g: &Galaxy) -> (TropMatrix, usize) {
    let n = model.n();
    let mut m = TropMatrix::zeros(n);
    for i in 0..n {
        match g.parent(i) {
            None => m.set(i, i, rat::one()),
            Some(j) => m.set(i, j, model.cs(i, j).clone()),
        }
    }
    (m, g.rank())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rat::{int, ratio};

    pub(crate) fn bipartite() -> WeightedDag {
        WeightedDag::from_labeled(
            &["1", "2", "3", "4"],
            &[
                ("1", "3", ratio(1, 2)),
                ("2", "3", int(1)),
                ("1", "4", int(1)),
                ("2", "4", ratio(1, 2)),
            ],
        )
        .unwrap()
    }

    fn half_butterfly() -> WeightedDag {
        WeightedDag::from_labeled(
            &["1", "2", "3", "4", "5"],
            &[
                ("1", "3", int(1)),
                ("2", "3", ratio(1, 2)),
                ("3", "4", int(3)),
                ("3", "5", int(3)),
                ("2", "5", int(4)),
            ],
        )
        .unwrap()
    }

    #[test]
    fn bipartite_exchange_cycle() {
        let m = bipartite();
        let g = Galaxy::from_edges(4, &[(0, 2), (1, 3)]);
        let ex = impact_exchange(&m, &g);
        assert_eq!(ex.roots, vec![0, 1]);
        assert_eq!(ex.matrix.get(0, 1), &int(2));
        assert_eq!(ex.matrix.get(1, 0), &int(2));
        match is_impact_graph(&m, &g) {
            Err(Violation::ExchangeCycle { weight, .. }) => assert_eq!(weight, int(4)),
            other => panic!("{other:?}"),
        }
        assert_eq!(enumerate_impact_graphs(&m, DEFAULT_GUARD).unwrap().len(), 8);
    }

    #[test]
    fn half_butterfly_galaxies() {
        let m = half_butterfly();
        let g1 = Galaxy::from_edges(5, &[(0, 3), (1, 4), (1, 2)]);
        assert_eq!(
            is_impact_graph(&m, &g1),
            Err(Violation::Triangle { j: 0, i: 3, k: 2 })
        );
        let g2 = Galaxy::from_edges(5, &[(0, 2), (0, 3), (1, 4)]);
        assert_eq!(is_impact_graph(&m, &g2), Ok(()));
        let ex = impact_exchange(&m, &g2);
        assert_eq!(ex.matrix.get(0, 1), &ratio(1, 2));
        assert_eq!(ex.matrix.get(1, 0), &ratio(3, 4));
        let z = vec![int(2), int(3), ratio(1, 10), ratio(2, 5), ratio(1, 5)];
        assert_eq!(realized_impact_graph(&m, &z).unwrap(), g2);
    }

    #[test]
    fn realization_and_ties() {
        let m = bipartite();
        let z = vec![int(1), ratio(1, 3), ratio(1, 4), ratio(1, 5)];
        assert_eq!(
            realized_impact_graph(&m, &z).unwrap(),
            Galaxy::from_edges(4, &[(0, 2), (0, 3)])
        );
        let big = vec![int(1), int(1), int(100), int(100)];
        assert_eq!(realized_impact_graph(&m, &big).unwrap(), Galaxy::empty(4));
        let tie = vec![int(2), int(1), ratio(1, 10), ratio(1, 10)];
        assert_eq!(
            realized_impact_graph(&m, &tie),
            Err(ImpactError::TieDetected { node: 2 })
        );
    }

    #[test]
    fn restricted_star_rows() {
        let m = bipartite();
        let (id, r) = restricted_kleene(&m, &Galaxy::empty(4));
        assert_eq!(id, TropMatrix::identity(4));
        assert_eq!(r, 4);
        let (s, r) = restricted_kleene(&m, &Galaxy::from_edges(4, &[(0, 2), (0, 3)]));
        assert_eq!(r, 2);
        assert_eq!(s.get(2, 0), &ratio(1, 2));
        assert_eq!(s.get(3, 0), &int(1));
        assert!(s.get(2, 2).is_zero());
    }

    #[test]
    fn guard_and_trivial() {
        let one = WeightedDag::from_labeled::<&str>(&["a"], &[]).unwrap();
        assert_eq!(
            enumerate_impact_graphs(&one, DEFAULT_GUARD).unwrap(),
            vec![Galaxy::empty(1)]
        );
        assert!(matches!(
            enumerate_impact_graphs(&bipartite(), 3),
            Err(ImpactError::TooLarge { .. })
        ));
    }
}
