//! Representations of `Z | X_K = x_K` and an exact sampler for them.

use std::collections::{BTreeMap, BTreeSet};

use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::context::{Context, ContextAnalysis};
use crate::dist::InnovationDist;
use crate::network::WeightedDag;
use crate::rat::{self, Rat};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum RepresentationError {
    #[error("equation anchored at node {anchor} has no term able to reach its value")]
    DegenerateBlock { anchor: usize },
    #[error("sample count must be positive")]
    NoSamples,
}

/// `coef · Z_var`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Term {
    pub var: usize,
    pub coef: Rat,
}

/// Innovation system built straight from the closure, with no pruning.
#[derive(Clone, Debug)]
pub struct BasicRepresentation {
    pub observed: Vec<usize>,
    pub hidden: Vec<usize>,
    /// For each hidden node: `C*_{iK} ⊙ x_K`.
    pub offsets: BTreeMap<usize, Rat>,
    /// For each hidden node: terms over hidden innovations.
    pub hidden_terms: BTreeMap<usize, Vec<Term>>,
    /// For each observed node: terms over all innovations; their max must equal `x_k`.
    pub constraint_terms: BTreeMap<usize, Vec<Term>>,
    pub values: BTreeMap<usize, Rat>,
}

pub fn basic_representation(model: &WeightedDag, ctx: &Context) -> BasicRepresentation {
    let n = model.n();
    let k = ctx.nodes();
    let hidden: Vec<usize> = (0..n).filter(|v| !k.contains(v)).collect();
    let terms_over = |i: usize, vars: &mut dyn Iterator<Item = usize>| -> Vec<Term> {
        vars.filter(|&j| model.reaches(j, i))
            .map(|j| Term {
                var: j,
                coef: model.cs(i, j).clone(),
            })
            .collect()
    };
    let mut offsets = BTreeMap::new();
    let mut hidden_terms = BTreeMap::new();
    for &i in &hidden {
        let mut off = Rat::zero();
        for (&kk, xk) in ctx.observed() {
            rat::max_assign(&mut off, model.cs(i, kk) * xk);
        }
        offsets.insert(i, off);
        hidden_terms.insert(i, terms_over(i, &mut hidden.iter().copied()));
    }
    let constraint_terms = k
        .iter()
        .map(|&kk| (kk, terms_over(kk, &mut (0..n))))
        .collect();
    BasicRepresentation {
        observed: k.into_iter().collect(),
        hidden,
        offsets,
        hidden_terms,
        constraint_terms,
        values: ctx.observed().clone(),
    }
}

fn max_terms(terms: &[Term], z: &[Rat]) -> Rat {
    let mut m = Rat::zero();
    for t in terms {
        rat::max_assign(&mut m, &t.coef * &z[t.var]);
    }
    m
}

impl BasicRepresentation {
    /// Whether `z` satisfies the observed equalities exactly.
    pub fn satisfied(&self, z: &[Rat]) -> bool {
        self.constraint_terms
            .iter()
            .all(|(k, ts)| max_terms(ts, z) == self.values[k])
    }

    /// Hidden node values for innovations `z`.
    pub fn hidden_values(&self, z: &[Rat]) -> BTreeMap<usize, Rat> {
        self.hidden
            .iter()
            .map(|&i| {
                let mut v = self.offsets[&i].clone();
                rat::max_assign(&mut v, max_terms(&self.hidden_terms[&i], z));
                (i, v)
            })
            .collect()
    }
}

/// Upper bound on one innovation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Bound {
    pub value: Rat,
    /// Only bounds on active and H innovations affect the active nodes.
    pub needed: bool,
}

/// `value = max(terms)`; anchored at an H node or an L-block representative.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BlockEquation {
    pub anchor: usize,
    pub value: Rat,
    pub terms: Vec<Term>,
    /// Terms that can never reach the value within their bounds.
    pub dropped: Vec<Term>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CondRepresentation {
    pub n: usize,
    pub active: BTreeSet<usize>,
    pub constants: BTreeMap<usize, Rat>,
    pub alpha: BTreeMap<usize, Rat>,
    /// For each active node: its own innovation and the source-DAG parents.
    pub active_terms: BTreeMap<usize, Vec<Term>>,
    pub bounds: BTreeMap<usize, Bound>,
    pub blocks: Vec<BlockEquation>,
}

/// Largest value `Z_i` can take: `min_{k ∈ K*, c*_ki > 0} x_k / c*_ki`.
pub fn innovation_bound(model: &WeightedDag, analysis: &ContextAnalysis, i: usize) -> Option<Rat> {
    analysis
        .constants
        .iter()
        .filter(|(&k, _)| model.reaches(i, k))
        .map(|(&k, xk)| xk / model.cs(k, i))
        .min()
}

/// Constant part of an active node, as the closed form over children in the
/// original graph; kept for comparison with [`build_representation`], which
/// uses the innovation bound instead.
pub fn alpha_by_children(model: &WeightedDag, analysis: &ContextAnalysis, a: usize) -> Rat {
    let sources = analysis.partition.sources();
    let mut alpha = constant_reach(model, analysis, a);
    for &(j, i) in &analysis.source.removed {
        if i != a || analysis.is_constant(j) {
            continue;
        }
        for &k in model.children(j) {
            if sources.contains(&k) {
                rat::max_assign(&mut alpha, model.cs(a, j) * &analysis.constants[&k] / model.cs(k, j));
            }
        }
    }
    alpha
}

fn constant_reach(model: &WeightedDag, analysis: &ContextAnalysis, a: usize) -> Rat {
    let mut alpha = Rat::zero();
    for (&k, xk) in &analysis.constants {
        rat::max_assign(&mut alpha, model.cs(a, k) * xk);
    }
    alpha
}

pub fn build_representation(model: &WeightedDag, analysis: &ContextAnalysis) -> CondRepresentation {
    let n = model.n();
    let part = &analysis.partition;
    let needed: BTreeSet<usize> = part.active.union(&part.h).copied().collect();
    let bounds: BTreeMap<usize, Bound> = (0..n)
        .filter_map(|i| {
            innovation_bound(model, analysis, i).map(|value| {
                (
                    i,
                    Bound {
                        value,
                        needed: needed.contains(&i),
                    },
                )
            })
        })
        .collect();

    let mut alpha = BTreeMap::new();
    let mut active_terms = BTreeMap::new();
    for &a in &part.active {
        let mut al = constant_reach(model, analysis, a);
        for &(j, i) in &analysis.source.removed {
            if i == a && !analysis.is_constant(j) {
                // j only reaches a while pinned, i.e. at its bound
                if let Some(b) = bounds.get(&j) {
                    rat::max_assign(&mut al, model.cs(a, j) * &b.value);
                }
            }
        }
        alpha.insert(a, al);
        let mut terms = vec![Term {
            var: a,
            coef: rat::one(),
        }];
        for j in analysis.source.parents(a) {
            terms.push(Term {
                var: j,
                coef: model.cs(a, j).clone(),
            });
        }
        active_terms.insert(a, terms);
    }

    let mut blocks = Vec::new();
    let mut anchors: Vec<(usize, bool)> = part.h.iter().map(|&h| (h, true)).collect();
    anchors.extend(
        part.l_blocks
            .iter()
            .filter_map(|b| b.iter().next().map(|&l| (l, false))),
    );
    for (anchor, own) in anchors {
        let value = analysis.constants[&anchor].clone();
        let mut cand = Vec::new();
        if own {
            cand.push(Term {
                var: anchor,
                coef: rat::one(),
            });
        }
        for j in analysis.source.parents(anchor) {
            cand.push(Term {
                var: j,
                coef: model.cs(anchor, j).clone(),
            });
        }
        let (terms, dropped): (Vec<Term>, Vec<Term>) = cand.into_iter().partition(|t| {
            let level = &value / &t.coef;
            bounds.get(&t.var).is_none_or(|b| level <= b.value)
        });
        blocks.push(BlockEquation {
            anchor,
            value,
            terms,
            dropped,
        });
    }
    blocks.sort_by_key(|b| b.anchor);

    CondRepresentation {
        n,
        active: part.active.clone(),
        constants: analysis.constants.clone(),
        alpha,
        active_terms,
        bounds,
        blocks,
    }
}

impl CondRepresentation {
    /// Active node values from exact innovations.
    pub fn active_values(&self, z: &[Rat]) -> BTreeMap<usize, Rat> {
        self.active
            .iter()
            .map(|&a| {
                let mut v = self.alpha[&a].clone();
                rat::max_assign(&mut v, max_terms(&self.active_terms[&a], z));
                (a, v)
            })
            .collect()
    }

    /// All node values: constants plus active values.
    pub fn node_values(&self, z: &[Rat]) -> Vec<Rat> {
        let mut out = vec![Rat::zero(); self.n];
        for (&k, v) in &self.constants {
            out[k] = v.clone();
        }
        for (a, v) in self.active_values(z) {
            out[a] = v;
        }
        out
    }

    /// Bounds and block equations hold exactly at `z`.
    pub fn satisfied(&self, z: &[Rat]) -> bool {
        self.bounds.iter().all(|(&i, b)| z[i] <= b.value)
            && self
                .blocks
                .iter()
                .all(|b| max_terms(&b.terms, z) == b.value && max_terms(&b.dropped, z) < b.value)
    }
}

/// Variables grouped by shared equations; singletons for the rest.
pub fn z_dependency_blocks(rep: &CondRepresentation) -> Vec<BTreeSet<usize>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for b in &rep.blocks {
        let vars: BTreeSet<usize> = b.terms.iter().map(|t| t.var).collect();
        seen.extend(vars.iter().copied());
        out.push(vars);
    }
    for v in 0..rep.n {
        if !seen.contains(&v) {
            out.push([v].into());
        }
    }
    out.sort();
    out
}

/// Point masses in the conditional law of the active node `a`: `α_a`, and
/// `c*_aj x_k / c*_kj` for `j` a common source-DAG parent of `a` and a node
/// `k` in `H ∪ L`, or `j = a` itself when `a` feeds such a `k`.
pub fn atoms_of(model: &WeightedDag, analysis: &ContextAnalysis, rep: &CondRepresentation, a: usize) -> BTreeSet<Rat> {
    let mut out = BTreeSet::new();
    if let Some(al) = rep.alpha.get(&a) {
        if !al.is_zero() {
            out.insert(al.clone());
        }
    }
    let pa = analysis.source.parents(a);
    for k in analysis.partition.sources() {
        for j in analysis.source.parents(k) {
            if j == a || pa.contains(&j) {
                out.insert(model.cs(a, j) * &analysis.constants[&k] / model.cs(k, j));
            }
        }
    }
    out
}

/// One draw of `Z` and `X` under the conditional law.
#[derive(Clone, Debug)]
pub struct Sample {
    pub z: Vec<f64>,
    pub x: Vec<f64>,
    /// Achieving variable of each block, aligned with `rep.blocks`.
    pub achieving: Vec<usize>,
}

impl Sample {
    /// Innovations as exact rationals: pinned values exact, the rest from
    /// their binary floating values.
    pub fn exact_z(&self, rep: &CondRepresentation) -> Vec<Rat> {
        let mut z: Vec<Rat> = self
            .z
            .iter()
            .map(|&v| Rat::from_float(v).unwrap_or_else(Rat::zero))
            .collect();
        for (b, &j) in rep.blocks.iter().zip(&self.achieving) {
            let coef = &b.terms.iter().find(|t| t.var == j).expect("term").coef;
            z[j] = &b.value / coef;
        }
        z
    }
}

// Keep float draws strictly below a rational cap even after rounding.
fn shrink(cap: f64) -> f64 {
    cap * (1.0 - 4.0 * f64::EPSILON)
}

pub fn conditional_sampler(
    rep: &CondRepresentation,
    dist: InnovationDist,
    n: usize,
    seed: u64,
) -> Result<Vec<Sample>, RepresentationError> {
    if n == 0 {
        return Err(RepresentationError::NoSamples);
    }
    for b in &rep.blocks {
        if b.terms.is_empty() {
            return Err(RepresentationError::DegenerateBlock { anchor: b.anchor });
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let nv = rep.n;
    let bound_f: Vec<f64> = (0..nv)
        .map(|i| rep.bounds.get(&i).map_or(f64::INFINITY, |b| rat::to_f64(&b.value)))
        .collect();
    // Per block: (level, cap, ln weight) per term.
    let prepared: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = rep
        .blocks
        .iter()
        .map(|b| {
            let v = rat::to_f64(&b.value);
            let levels: Vec<f64> = b.terms.iter().map(|t| v / rat::to_f64(&t.coef)).collect();
            let caps: Vec<f64> = b
                .terms
                .iter()
                .zip(&levels)
                .map(|(t, &l)| l.min(bound_f[t.var]))
                .collect();
            let ln_f: Vec<f64> = caps.iter().map(|&c| dist.ln_cdf(c)).collect();
            let total: f64 = ln_f.iter().sum();
            let ln_w: Vec<f64> = b
                .terms
                .iter()
                .enumerate()
                .map(|(i, t)| {
                    dist.ln_pdf(levels[i]) - rat::to_f64(&t.coef).ln() + total - ln_f[i]
                })
                .collect();
            (levels, caps, normalize(&ln_w))
        })
        .collect();
    let in_block: BTreeSet<usize> = rep
        .blocks
        .iter()
        .flat_map(|b| b.terms.iter().map(|t| t.var))
        .collect();

    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let mut z = vec![0.0; nv];
        let mut achieving = Vec::with_capacity(rep.blocks.len());
        for (b, (levels, caps, weights)) in rep.blocks.iter().zip(&prepared) {
            let u: f64 = rng.random();
            let mut pick = weights.len() - 1;
            let mut acc = 0.0;
            for (i, w) in weights.iter().enumerate() {
                acc += w;
                if u < acc {
                    pick = i;
                    break;
                }
            }
            for (i, t) in b.terms.iter().enumerate() {
                z[t.var] = if i == pick {
                    levels[i]
                } else {
                    dist.sample_below(&mut rng, shrink(caps[i]))
                };
            }
            achieving.push(b.terms[pick].var);
        }
        for (v, zv) in z.iter_mut().enumerate() {
            if in_block.contains(&v) {
                continue;
            }
            *zv = dist.sample_below(&mut rng, shrink(bound_f[v]));
        }
        let mut x = vec![0.0; nv];
        for (&k, val) in &rep.constants {
            x[k] = rat::to_f64(val);
        }
        for &a in &rep.active {
            let mut m = rat::to_f64(&rep.alpha[&a]);
            for t in &rep.active_terms[&a] {
                m = m.max(rat::to_f64(&t.coef) * z[t.var]);
            }
            x[a] = m;
        }
        out.push(Sample { z, x, achieving });
    }
    Ok(out)
}

fn normalize(ln_w: &[f64]) -> Vec<f64> {
    let top = ln_w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = ln_w.iter().map(|l| (l - top).exp()).collect();
    let s: f64 = w.iter().sum();
    w.into_iter().map(|v| v / s).collect()
}
