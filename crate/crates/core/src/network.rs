//! Weighted DAG model and the DAGs derived from it.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use thiserror::Error;

use crate::rat::{self, Rat};
use crate::trop::{self, TropMatrix};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelError {
    #[error("duplicate node label `{0}`")]
    DuplicateLabel(String),
    #[error("unknown node `{0}`")]
    UnknownNode(String),
    #[error("self-loop on `{0}`")]
    SelfLoop(String),
    #[error("duplicate edge {0} -> {1}")]
    DuplicateEdge(String, String),
    #[error("edge {0} -> {1} has nonpositive weight {2}")]
    NonPositiveWeight(String, String, String),
    #[error("edges form a directed cycle through `{0}`")]
    Cycle(String),
    #[error("expected {expected} values, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("value for `{0}` is not strictly positive")]
    NonPositiveValue(String),
}

/// An edge `from -> to` with its weight.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    pub weight: Rat,
}

/// A max-linear Bayesian network: `X_i = max(max_j c_ij X_j, Z_i)`.
///
/// Nodes are indexed in label order; `topo` holds one fixed topological order.
#[derive(Clone, Debug)]
pub struct WeightedDag {
    labels: Vec<String>,
    edges: Vec<Edge>,
    parents: Vec<Vec<usize>>,
    children: Vec<Vec<usize>>,
    topo: Vec<usize>,
    c: TropMatrix,
    cstar: TropMatrix,
    gamma: TropMatrix,
}

impl WeightedDag {
    pub fn new(labels: Vec<String>, edges: Vec<Edge>) -> Result<Self, ModelError> {
        let n = labels.len();
        let mut seen = BTreeSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(ModelError::DuplicateLabel(l.clone()));
            }
        }
        let mut c = TropMatrix::zeros(n);
        let mut parents = vec![Vec::new(); n];
        let mut children = vec![Vec::new(); n];
        for e in &edges {
            if e.from >= n || e.to >= n {
                return Err(ModelError::UnknownNode(format!("#{}", e.from.max(e.to))));
            }
            let (f, t) = (&labels[e.from], &labels[e.to]);
            if e.from == e.to {
                return Err(ModelError::SelfLoop(f.clone()));
            }
            if e.weight <= Rat::zero() {
                return Err(ModelError::NonPositiveWeight(
                    f.clone(),
                    t.clone(),
                    rat::fmt_frac(&e.weight),
                ));
            }
            if c.is_positive(e.to, e.from) {
                return Err(ModelError::DuplicateEdge(f.clone(), t.clone()));
            }
            c.set(e.to, e.from, e.weight.clone());
            parents[e.to].push(e.from);
            children[e.from].push(e.to);
        }
        for v in parents.iter_mut().chain(children.iter_mut()) {
            v.sort_unstable();
        }
        let Some(topo) = trop::support_topological_order(&c) else {
            let culprit = first_cycle_node(&parents);
            return Err(ModelError::Cycle(labels[culprit].clone()));
        };
        let gamma = trop::weak_closure(&c);
        let cstar = TropMatrix::identity(n).join(&gamma).expect("square");
        Ok(WeightedDag {
            labels,
            edges,
            parents,
            children,
            topo,
            c,
            cstar,
            gamma,
        })
    }

    /// Convenience constructor from label-based triples.
    pub fn from_labeled<S: AsRef<str>>(
        labels: &[S],
        edges: &[(S, S, Rat)],
    ) -> Result<Self, ModelError> {
        let labels: Vec<String> = labels.iter().map(|s| s.as_ref().to_string()).collect();
        let index: BTreeMap<&str, usize> =
            labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
        let mut es = Vec::with_capacity(edges.len());
        for (f, t, w) in edges {
            let from = *index
                .get(f.as_ref())
                .ok_or_else(|| ModelError::UnknownNode(f.as_ref().into()))?;
            let to = *index
                .get(t.as_ref())
                .ok_or_else(|| ModelError::UnknownNode(t.as_ref().into()))?;
            es.push(Edge {
                from,
                to,
                weight: w.clone(),
            });
        }
        WeightedDag::new(labels, es)
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, i: usize) -> &str {
        &self.labels[i]
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    /// Edge set as `(from, to)` pairs.
    pub fn edge_pairs(&self) -> BTreeSet<(usize, usize)> {
        self.edges.iter().map(|e| (e.from, e.to)).collect()
    }

    pub fn parents(&self, i: usize) -> &[usize] {
        &self.parents[i]
    }

    pub fn children(&self, i: usize) -> &[usize] {
        &self.children[i]
    }

    pub fn topological_order(&self) -> &[usize] {
        &self.topo
    }

    /// Coefficient matrix; entry `(i, j)` weighs `j -> i`.
    pub fn c(&self) -> &TropMatrix {
        &self.c
    }

    pub fn cstar(&self) -> &TropMatrix {
        &self.cstar
    }

    pub fn gamma(&self) -> &TropMatrix {
        &self.gamma
    }

    /// `c*_ij`, the best path weight from `j` to `i`.
    pub fn cs(&self, i: usize, j: usize) -> &Rat {
        self.cstar.get(i, j)
    }

    /// `j` is an ancestor of `i` (or equal to it).
    pub fn reaches(&self, j: usize, i: usize) -> bool {
        self.cstar.is_positive(i, j)
    }

    /// Strict ancestors of `i`.
    pub fn ancestors(&self, i: usize) -> Vec<usize> {
        (0..self.n()).filter(|&j| j != i && self.reaches(j, i)).collect()
    }

    /// Strict descendants of `j`.
    pub fn descendants(&self, j: usize) -> Vec<usize> {
        (0..self.n()).filter(|&i| i != j && self.reaches(j, i)).collect()
    }

    /// Same graph and node order, new weights.
    pub fn reweighted(&self, weight: impl Fn(usize, usize) -> Rat) -> Result<Self, ModelError> {
        let edges = self
            .edges
            .iter()
            .map(|e| Edge {
                from: e.from,
                to: e.to,
                weight: weight(e.from, e.to),
            })
            .collect();
        WeightedDag::new(self.labels.clone(), edges)
    }

    /// `x = C* ⊙ z`.
    pub fn evaluate(&self, z: &[Rat]) -> Result<Vec<Rat>, ModelError> {
        self.check_positive(z)?;
        Ok(self.cstar.apply(z).expect("dimension checked"))
    }

    /// `x_i = max(max_{j ∈ pa(i)} c_ij x_j, z_i)` in topological order.
    pub fn evaluate_by_recursion(&self, z: &[Rat]) -> Result<Vec<Rat>, ModelError> {
        self.check_positive(z)?;
        let mut x = vec![Rat::zero(); self.n()];
        for &i in &self.topo {
            let mut v = z[i].clone();
            for &j in &self.parents[i] {
                rat::max_assign(&mut v, self.c.get(i, j) * &x[j]);
            }
            x[i] = v;
        }
        Ok(x)
    }

    fn check_positive(&self, z: &[Rat]) -> Result<(), ModelError> {
        if z.len() != self.n() {
            return Err(ModelError::DimensionMismatch {
                expected: self.n(),
                got: z.len(),
            });
        }
        if let Some(p) = z.iter().position(|v| v <= &Rat::zero()) {
            return Err(ModelError::NonPositiveValue(self.labels[p].clone()));
        }
        Ok(())
    }

    /// Reachability DAG: support of `Γ`.
    pub fn reachability_dag(&self) -> DerivedDag {
        let edges = self
            .gamma
            .support()
            .into_iter()
            .map(|(i, j)| (j, i))
            .collect();
        DerivedDag {
            kind: DerivedKind::Reachability,
            n: self.n(),
            edges,
        }
    }

    /// `j -> i` iff some directed path from `j` to `i` has no interior node in `k`.
    pub fn conditional_reach_dag(&self, k: &BTreeSet<usize>) -> DerivedDag {
        let n = self.n();
        let mut edges = BTreeSet::new();
        for j in 0..n {
            let mut seen = vec![false; n];
            let mut stack = vec![j];
            while let Some(u) = stack.pop() {
                if u != j && k.contains(&u) {
                    continue;
                }
                for &w in &self.children[u] {
                    if !seen[w] {
                        seen[w] = true;
                        edges.insert((j, w));
                        stack.push(w);
                    }
                }
            }
        }
        DerivedDag {
            kind: DerivedKind::ConditionalReachability(k.clone()),
            n,
            edges,
        }
    }

    /// `j -> i` iff `c*_ij > 0` and no critical path from `j` to `i` passes
    /// through `k`: `c*_ik · c*_kj < c*_ij` for every `k` in the set.
    pub fn critical_dag(&self, k: &BTreeSet<usize>) -> DerivedDag {
        let n = self.n();
        let mut edges = BTreeSet::new();
        for i in 0..n {
            for j in 0..n {
                if i != j && self.reaches(j, i) && !self.critical_through(j, i, k) {
                    edges.insert((j, i));
                }
            }
        }
        DerivedDag {
            kind: DerivedKind::Critical(k.clone()),
            n,
            edges,
        }
    }

    /// Some critical path `j -> i` has an interior node in `set`.
    pub fn critical_through(&self, j: usize, i: usize, set: &BTreeSet<usize>) -> bool {
        let target = self.cs(i, j);
        set.iter()
            .filter(|&&k| k != i && k != j)
            .any(|&k| &(self.cs(i, k) * self.cs(k, j)) == target)
    }
}

fn first_cycle_node(parents: &[Vec<usize>]) -> usize {
    // Repeatedly strip nodes without remaining parents; any survivor is on or
    // downstream of a cycle, and following parents from it must revisit.
    let n = parents.len();
    let mut alive = vec![true; n];
    loop {
        let mut changed = false;
        for v in 0..n {
            if alive[v] && parents[v].iter().all(|&p| !alive[p]) {
                alive[v] = false;
                changed = true;
            }
        }
        if !changed {
            break;
        }
    }
    let mut v = (0..n).find(|&v| alive[v]).unwrap_or(0);
    let mut visited = vec![false; n];
    while !visited[v] {
        visited[v] = true;
        v = *parents[v].iter().find(|&&p| alive[p]).unwrap_or(&v);
    }
    v
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum DerivedKind {
    Reachability,
    ConditionalReachability(BTreeSet<usize>),
    Critical(BTreeSet<usize>),
}

/// Edge set over the model's nodes; pairs are `(from, to)`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DerivedDag {
    pub kind: DerivedKind,
    pub n: usize,
    pub edges: BTreeSet<(usize, usize)>,
}

impl DerivedDag {
    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges.contains(&(from, to))
    }

    pub fn is_subgraph_of(&self, other: &DerivedDag) -> bool {
        self.edges.is_subset(&other.edges)
    }

    pub fn parents(&self, i: usize) -> BTreeSet<usize> {
        self.edges.iter().filter(|e| e.1 == i).map(|e| e.0).collect()
    }
}
