//! JSON model and context files, and DOT rendering.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::Deserialize;
use serde_json::Value;
use thiserror::Error;

use crate::context::ContextAnalysis;
use crate::network::{Edge, ModelError, WeightedDag};
use crate::rat::{fmt_frac, parse_rat, ParseRatError, Rat};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("line {line}: edge #{index}: {message}")]
    Edge {
        line: usize,
        index: usize,
        message: String,
    },
    #[error("line {line}: {source}")]
    Model {
        line: usize,
        #[source]
        source: ModelError,
    },
    #[error("line {line}: observed `{label}`: {message}")]
    Observed {
        line: usize,
        label: String,
        message: String,
    },
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    nodes: Vec<String>,
    #[serde(default)]
    edges: Vec<EdgeEntry>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct EdgeEntry {
    from: String,
    to: String,
    weight: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ContextFile {
    observed: BTreeMap<String, Value>,
}

/// 1-based line of the `nth` (0-based) occurrence of `needle`, or 1.
fn line_of(text: &str, needle: &str, nth: usize) -> usize {
    text.match_indices(needle)
        .nth(nth)
        .map_or(1, |(pos, _)| text[..pos].matches('\n').count() + 1)
}

fn syntax(err: serde_json::Error) -> IoError {
    IoError::Syntax {
        line: err.line(),
        column: err.column(),
        message: err.to_string(),
    }
}

fn number(v: &Value) -> Result<Rat, String> {
    match v {
        Value::String(s) => parse_rat(s).map_err(|e: ParseRatError| e.to_string()),
        // shortest round-trip text of the double, read exactly
        Value::Number(n) => parse_rat(&n.to_string()).map_err(|e| e.to_string()),
        other => Err(format!("expected a number or string, got {other}")),
    }
}

pub fn parse_model(text: &str) -> Result<WeightedDag, IoError> {
    let file: ModelFile = serde_json::from_str(text).map_err(syntax)?;
    let nodes_line = line_of(text, "\"nodes\"", 0);
    let mut index = BTreeMap::new();
    for (i, l) in file.nodes.iter().enumerate() {
        if index.insert(l.as_str(), i).is_some() {
            return Err(IoError::Model {
                line: nodes_line,
                source: ModelError::DuplicateLabel(l.clone()),
            });
        }
    }
    let mut edges = Vec::with_capacity(file.edges.len());
    let mut seen = BTreeMap::new();
    for (k, e) in file.edges.iter().enumerate() {
        let line = line_of(text, "\"from\"", k);
        let fail = |message: String| IoError::Edge {
            line,
            index: k,
            message,
        };
        let from = *index
            .get(e.from.as_str())
            .ok_or_else(|| fail(ModelError::UnknownNode(e.from.clone()).to_string()))?;
        let to = *index
            .get(e.to.as_str())
            .ok_or_else(|| fail(ModelError::UnknownNode(e.to.clone()).to_string()))?;
        let weight = number(&e.weight).map_err(|m| fail(format!("weight: {m}")))?;
        if from == to {
            return Err(fail(ModelError::SelfLoop(e.from.clone()).to_string()));
        }
        if weight <= Rat::from_integer(0.into()) {
            return Err(fail(
                ModelError::NonPositiveWeight(e.from.clone(), e.to.clone(), fmt_frac(&weight))
                    .to_string(),
            ));
        }
        if let Some(first) = seen.insert((from, to), k) {
            return Err(fail(format!(
                "{} (first given as edge #{first})",
                ModelError::DuplicateEdge(e.from.clone(), e.to.clone())
            )));
        }
        edges.push(Edge { from, to, weight });
    }
    WeightedDag::new(file.nodes, edges).map_err(|source| {
        let line = match &source {
            ModelError::Cycle(label) => text
                .match_indices("\"from\"")
                .position(|(pos, _)| text[pos..].lines().next().is_some_and(|l| l.contains(&format!("\"{label}\""))))
                .map_or(nodes_line, |k| line_of(text, "\"from\"", k)),
            _ => nodes_line,
        };
        IoError::Model { line, source }
    })
}

/// Observed values keyed by node index.
pub fn parse_context(text: &str, model: &WeightedDag) -> Result<BTreeMap<usize, Rat>, IoError> {
    let file: ContextFile = serde_json::from_str(text).map_err(syntax)?;
    let mut out = BTreeMap::new();
    for (label, v) in &file.observed {
        let line = line_of(text, &format!("\"{label}\""), 0);
        let fail = |message: String| IoError::Observed {
            line,
            label: label.clone(),
            message,
        };
        let k = model
            .index_of(label)
            .ok_or_else(|| fail("unknown node".into()))?;
        let value = number(v).map_err(fail)?;
        if value <= Rat::from_integer(0.into()) {
            return Err(fail("value must be strictly positive".into()));
        }
        out.insert(k, value);
    }
    Ok(out)
}

fn quote(s: &str) -> String {
    format!("\"{}\"", s.replace('\\', "\\\\").replace('"', "\\\""))
}

/// The model as a DOT digraph with edge weights as labels.
pub fn model_dot(model: &WeightedDag) -> String {
    let mut s = String::from("digraph model {\n");
    for l in model.labels() {
        let _ = writeln!(s, "  {};", quote(l));
    }
    for e in model.edges() {
        let _ = writeln!(
            s,
            "  {} -> {} [label={}];",
            quote(model.label(e.from)),
            quote(model.label(e.to)),
            quote(&fmt_frac(&e.weight))
        );
    }
    s.push_str("}\n");
    s
}

/// Model and total impact edges of a context: observed nodes red, other
/// constant nodes shaded, edges missing from the source DAG dashed.
pub fn source_dot(model: &WeightedDag, analysis: &ContextAnalysis) -> String {
    let observed = analysis.context.nodes();
    let mut s = String::from("digraph source {\n");
    for (i, l) in model.labels().iter().enumerate() {
        let style = if observed.contains(&i) {
            " [style=filled, fillcolor=red]"
        } else if analysis.is_constant(i) {
            " [style=filled, fillcolor=lightgray]"
        } else {
            ""
        };
        let _ = writeln!(s, "  {}{style};", quote(l));
    }
    let mut all = model.edge_pairs();
    all.extend(analysis.source.total_impact.iter().copied());
    for (j, i) in all {
        let style = if analysis.source.has_edge(j, i) { "" } else { " [style=dashed]" };
        let _ = writeln!(s, "  {} -> {}{style};", quote(model.label(j)), quote(model.label(i)));
    }
    s.push_str("}\n");
    s
}
