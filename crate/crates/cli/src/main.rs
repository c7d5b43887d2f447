use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context as _, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use maxlin::context::{self, Context, ContextAnalysis, ContextError};
use maxlin::dist::InnovationDist;
use maxlin::impact::{self, Galaxy, ImpactError, DEFAULT_GUARD};
use maxlin::model_io::{self, IoError};
use maxlin::network::{ModelError, WeightedDag};
use maxlin::oracle;
use maxlin::rat::{fmt_frac, to_f64, Rat};
use maxlin::representation::{self, CondRepresentation, Term};
use maxlin::separation::{self, CIVerdict, SeparationError, Verdict};
use maxlin::trop::TropMatrix;

#[derive(Parser)]
#[command(name = "maxlin", version, about = "Exact conditional independence for max-linear networks")]
struct Cli {
    /// Model file: {"nodes": [...], "edges": [{"from", "to", "weight"}]}
    #[arg(long, short, global = true)]
    model: Option<PathBuf>,
    /// Write output here instead of stdout
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Kleene star of the coefficient matrix
    Kleene,
    /// Impact graphs, or the compatible ones under a context
    Impact {
        #[arg(long)]
        context: Option<PathBuf>,
    },
    /// Source DAG of a context
    SourceDag {
        #[arg(long)]
        context: PathBuf,
        /// Emit Graphviz instead of JSON
        #[arg(long)]
        dot: bool,
    },
    /// Constant nodes and their partition
    Partition {
        #[arg(long)]
        context: PathBuf,
    },
    /// Compact conditional representation
    Representation {
        #[arg(long)]
        context: PathBuf,
    },
    /// Conditional independence query
    Ci {
        #[arg(long, value_enum)]
        mode: CiMode,
        /// Comma separated labels
        #[arg(long = "i")]
        first: String,
        #[arg(long = "j")]
        second: String,
        /// Conditioning labels (all modes except context)
        #[arg(long = "k", default_value = "")]
        given: String,
        #[arg(long)]
        context: Option<PathBuf>,
    },
    /// Draw from the conditional law; CSV of node values
    Sample {
        #[arg(long)]
        context: Option<PathBuf>,
        #[arg(long, default_value_t = 1000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// frechet | lognormal:mu,sigma | pareto:alpha
        #[arg(long, default_value = "frechet")]
        dist: String,
    },
    /// Cross-check the engine against the Monte Carlo oracles
    Validate {
        #[arg(long)]
        context: Option<PathBuf>,
        #[arg(long, default_value_t = 20_000)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "frechet")]
        dist: String,
        /// Relative band half-width for the rejection sampler
        #[arg(long, default_value_t = 0.01)]
        eps: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum CiMode {
    Dsep,
    Dstar,
    Critical,
    Effective,
    Context,
}

/// Bad flags or input files; exit code 2.
#[derive(Debug)]
struct Usage(String);

impl std::fmt::Display for Usage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Usage {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(Usage(msg.into()))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        let impossible = matches!(cause.downcast_ref::<ContextError>(), Some(ContextError::Impossible(_)))
            || matches!(
                cause.downcast_ref::<SeparationError>(),
                Some(SeparationError::Context(ContextError::Impossible(_)))
            );
        if impossible {
            return 3;
        }
        if cause.is::<Usage>()
            || cause.is::<IoError>()
            || cause.is::<ModelError>()
            || cause.is::<ImpactError>()
            || matches!(cause.downcast_ref::<SeparationError>(), Some(SeparationError::Overlap(_)))
        {
            return 2;
        }
    }
    1
}

fn num(r: &Rat) -> Value {
    json!({"exact": fmt_frac(r), "approx": to_f64(r)})
}

fn labels(model: &WeightedDag, set: impl IntoIterator<Item = usize>) -> Vec<String> {
    set.into_iter().map(|v| model.label(v).to_string()).collect()
}

fn edge_list(model: &WeightedDag, edges: impl IntoIterator<Item = (usize, usize)>) -> Value {
    edges
        .into_iter()
        .map(|(j, i)| json!({"from": model.label(j), "to": model.label(i)}))
        .collect()
}

fn matrix(model: &WeightedDag, m: &TropMatrix, index: &[usize]) -> Value {
    let rows: Vec<Value> = (0..m.dim())
        .map(|r| (0..m.dim()).map(|c| num(m.get(r, c))).collect())
        .collect();
    json!({"nodes": labels(model, index.iter().copied()), "rows": rows})
}

fn galaxy_json(model: &WeightedDag, g: &Galaxy) -> Value {
    json!({
        "edges": edge_list(model, g.edges()),
        "roots": labels(model, g.roots()),
        "rank": g.rank(),
    })
}

fn load_model(path: Option<&Path>) -> Result<WeightedDag> {
    let path = path.ok_or_else(|| usage("--model is required"))?;
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    model_io::parse_model(&text).with_context(|| format!("in {}", path.display()))
}

fn load_context(model: &WeightedDag, path: &Path) -> Result<Context> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let observed =
        model_io::parse_context(&text, model).with_context(|| format!("in {}", path.display()))?;
    Ok(Context::new(model, observed)?)
}

fn guard() -> Result<usize> {
    match std::env::var("MAXLIN_GUARD") {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| usage(format!("MAXLIN_GUARD must be a node count, got `{v}`"))),
        Err(_) => Ok(DEFAULT_GUARD),
    }
}

fn parse_dist(s: &str) -> Result<InnovationDist> {
    InnovationDist::parse(s).ok_or_else(|| usage(format!("unknown distribution `{s}`")))
}

fn parse_set(model: &WeightedDag, text: &str, flag: &str) -> Result<BTreeSet<usize>> {
    text.split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|l| {
            model
                .index_of(l)
                .ok_or_else(|| usage(format!("--{flag}: unknown node `{l}`")))
        })
        .collect()
}

fn analysis_json(model: &WeightedDag, a: &ContextAnalysis) -> Value {
    let constants: BTreeMap<&str, Value> =
        a.constants.iter().map(|(&v, x)| (model.label(v), num(x))).collect();
    let p = &a.partition;
    json!({
        "observed": a.context.observed().iter().map(|(&v, x)| (model.label(v).to_string(), num(x))).collect::<BTreeMap<_, _>>(),
        "constants": constants,
        "partition": {
            "active": labels(model, p.active.iter().copied()),
            "h": labels(model, p.h.iter().copied()),
            "l_blocks": p.l_blocks.iter().map(|b| labels(model, b.iter().copied())).collect::<Vec<_>>(),
            "u": labels(model, p.u.iter().copied()),
        },
        "warnings": a.warnings,
    })
}

fn terms_json(model: &WeightedDag, terms: &[Term]) -> Value {
    terms
        .iter()
        .map(|t| json!({"var": model.label(t.var), "coef": num(&t.coef)}))
        .collect()
}

fn representation_json(model: &WeightedDag, rep: &CondRepresentation) -> Value {
    let label_map = |m: &BTreeMap<usize, Rat>| -> BTreeMap<String, Value> {
        m.iter().map(|(&v, x)| (model.label(v).to_string(), num(x))).collect()
    };
    json!({
        "active": labels(model, rep.active.iter().copied()),
        "constants": label_map(&rep.constants),
        "alpha": label_map(&rep.alpha),
        "active_terms": rep.active_terms.iter()
            .map(|(&v, t)| (model.label(v).to_string(), terms_json(model, t)))
            .collect::<BTreeMap<_, _>>(),
        "bounds": rep.bounds.iter()
            .map(|(&v, b)| (model.label(v).to_string(), json!({"value": num(&b.value), "needed": b.needed})))
            .collect::<BTreeMap<_, _>>(),
        "blocks": rep.blocks.iter().map(|b| json!({
            "anchor": model.label(b.anchor),
            "value": num(&b.value),
            "terms": terms_json(model, &b.terms),
            "dropped": terms_json(model, &b.dropped),
        })).collect::<Vec<_>>(),
    })
}

fn verdict_json(model: &WeightedDag, v: &CIVerdict) -> Value {
    let result = match v.result {
        Verdict::Independent => "independent",
        Verdict::Dependent => "dependent",
    };
    let mut out = json!({
        "schema": "maxlin-ci/1",
        "mode": format!("{:?}", v.mode),
        "result": result,
    });
    if let Some(p) = &v.witness {
        out["witness"] = json!({
            "shape": format!("{:?}", p.shape),
            "path": p.describe(model),
            "nodes": labels(model, p.nodes.iter().copied()),
            "collider": p.collider.map(|k| model.label(k).to_string()),
        });
    }
    if let Some(s) = &v.substitution {
        out["substitution"] = json!({
            "matrix": matrix(model, &s.matrix, &s.nodes),
            "cycle_vs_one": format!("{:?}", s.comparison.ordering),
        });
    }
    if let Some(c) = &v.coefficients {
        out["coefficients"] = c
            .edges()
            .iter()
            .map(|e| json!({"from": model.label(e.from), "to": model.label(e.to), "weight": fmt_frac(&e.weight)}))
            .collect();
    }
    out
}

fn to_text(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

fn run(cli: Cli) -> Result<(String, u8)> {
    let model = load_model(cli.model.as_deref())?;
    let guard = guard()?;
    let mut code = 0;
    let text = match cli.command {
        Command::Kleene => {
            let all: Vec<usize> = (0..model.n()).collect();
            to_text(&json!({"schema": "maxlin-kleene/1", "cstar": matrix(&model, model.cstar(), &all)}))
        }
        Command::Impact { context } => match context {
            None => {
                let all = impact::enumerate_impact_graphs(&model, guard)?;
                to_text(&json!({
                    "schema": "maxlin-impact/1",
                    "count": all.len(),
                    "galaxies": all.iter().map(|g| galaxy_json(&model, g)).collect::<Vec<_>>(),
                }))
            }
            Some(path) => {
                let ctx = load_context(&model, &path)?;
                let a = context::analyze(&model, &ctx, guard)?;
                to_text(&json!({
                    "schema": "maxlin-impact/1",
                    "count": a.compatible.len(),
                    "min_rank": a.min_rank,
                    "galaxies": a.compatible.iter().map(|g| galaxy_json(&model, g)).collect::<Vec<_>>(),
                }))
            }
        },
        Command::SourceDag { context, dot } => {
            let ctx = load_context(&model, &context)?;
            let a = context::analyze(&model, &ctx, guard)?;
            if dot {
                model_io::source_dot(&model, &a)
            } else {
                to_text(&json!({
                    "schema": "maxlin-source/1",
                    "edges": edge_list(&model, a.source.edges.iter().copied()),
                    "removed": edge_list(&model, a.source.removed.iter().copied()),
                    "model_edges_dropped": edge_list(
                        &model,
                        model.edge_pairs().difference(&a.source.edges).copied(),
                    ),
                    "total_impact": edge_list(&model, a.source.total_impact.iter().copied()),
                }))
            }
        }
        Command::Partition { context } => {
            let ctx = load_context(&model, &context)?;
            let a = context::analyze(&model, &ctx, guard)?;
            let mut v = analysis_json(&model, &a);
            v["schema"] = json!("maxlin-partition/1");
            to_text(&v)
        }
        Command::Representation { context } => {
            let ctx = load_context(&model, &context)?;
            let a = context::analyze(&model, &ctx, guard)?;
            let mut v = representation_json(&model, &representation::build_representation(&model, &a));
            v["schema"] = json!("maxlin-representation/1");
            to_text(&v)
        }
        Command::Ci {
            mode,
            first,
            second,
            given,
            context,
        } => {
            let a = parse_set(&model, &first, "i")?;
            let b = parse_set(&model, &second, "j")?;
            if a.is_empty() || b.is_empty() {
                return Err(usage("--i and --j need at least one node each"));
            }
            let verdict = match mode {
                CiMode::Context => {
                    let path = context.ok_or_else(|| usage("--mode context needs --context"))?;
                    let ctx = load_context(&model, &path)?;
                    separation::ci_context(&model, &ctx, &a, &b, guard)?
                }
                _ => {
                    if context.is_some() {
                        return Err(usage("--context only applies to --mode context"));
                    }
                    let k = parse_set(&model, &given, "k")?;
                    match mode {
                        CiMode::Dsep => separation::ci_dsep(&model, &a, &b, &k)?,
                        CiMode::Dstar => separation::ci_generic(&model, &a, &b, &k)?,
                        CiMode::Critical => separation::ci_fixed_c(&model, &a, &b, &k)?,
                        _ => separation::ci_fixed_c_complete(&model, &a, &b, &k)?,
                    }
                }
            };
            to_text(&verdict_json(&model, &verdict))
        }
        Command::Sample { context, n, seed, dist } => {
            let dist = parse_dist(&dist)?;
            if n == 0 {
                return Err(usage("--n must be positive"));
            }
            let ctx = match context {
                Some(p) => load_context(&model, &p)?,
                None => Context::empty(),
            };
            let a = context::analyze(&model, &ctx, guard)?;
            let rep = representation::build_representation(&model, &a);
            let samples = representation::conditional_sampler(&rep, dist, n, seed)?;
            let mut s = model.labels().join(",");
            s.push('\n');
            for row in samples {
                let cells: Vec<String> = row.x.iter().map(|v| v.to_string()).collect();
                let _ = writeln!(s, "{}", cells.join(","));
            }
            s
        }
        Command::Validate {
            context,
            n,
            seed,
            dist,
            eps,
        } => {
            let dist = parse_dist(&dist)?;
            let (report, ok) = validate(&model, context.as_deref(), n, seed, dist, eps, guard)?;
            if !ok {
                code = 1;
            }
            to_text(&report)
        }
    };
    Ok((text, code))
}

fn validate(
    model: &WeightedDag,
    context: Option<&Path>,
    n: usize,
    seed: u64,
    dist: InnovationDist,
    eps: f64,
    guard: usize,
) -> Result<(Value, bool)> {
    if n == 0 || eps.is_nan() || eps <= 0.0 {
        bail!(usage("--n and --eps must be positive"));
    }
    let enumerated: BTreeSet<Galaxy> = impact::enumerate_impact_graphs(model, guard)?.into_iter().collect();
    let seen = oracle::mc_impact_graphs(model, n, dist, seed);
    let unexpected: Vec<Value> = seen
        .keys()
        .filter(|g| !enumerated.contains(*g))
        .map(|g| galaxy_json(model, g))
        .collect();
    let unseen = enumerated.iter().filter(|g| !seen.contains_key(*g)).count();
    let mut ok = unexpected.is_empty();
    let mut report = json!({
        "schema": "maxlin-validate/1",
        "impact": {
            "enumerated": enumerated.len(),
            "observed": seen.len(),
            "unseen": unseen,
            "unexpected": unexpected,
        },
    });
    if let Some(path) = context {
        let ctx = load_context(model, path)?;
        let a = context::analyze(model, &ctx, guard)?;
        let rep = representation::build_representation(model, &a);
        let exact = representation::conditional_sampler(&rep, dist, n, seed)?;
        let band = oracle::rejection_band_sampler(
            model,
            ctx.observed(),
            eps,
            n,
            dist,
            seed.wrapping_add(1),
            oracle::RejectionBudget::default(),
        )
        .map_err(|e| anyhow!(e))?;
        let mut gaps = BTreeMap::new();
        for v in (0..model.n()).filter(|v| !ctx.observed().contains_key(v)) {
            let col: Vec<f64> = exact.iter().map(|s| s.x[v]).collect();
            let d = oracle::band_kolmogorov(&col, &band.column(v), 2.0 * eps);
            ok &= d <= 0.03;
            gaps.insert(model.label(v).to_string(), d);
        }
        report["conditional"] = json!({
            "acceptance_rate": band.acceptance_rate(),
            "band_kolmogorov": gaps,
            "tolerance": 0.03,
        });
    }
    report["ok"] = json!(ok);
    Ok((report, ok))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let out = cli.out.clone();
    match run(cli) {
        Ok((text, code)) => {
            let written = match &out {
                Some(p) => std::fs::write(p, &text).map_err(|e| anyhow!("cannot write {}: {e}", p.display())),
                None => {
                    print!("{text}");
                    Ok(())
                }
            };
            match written {
                Ok(()) => ExitCode::from(code),
                Err(e) => {
                    eprintln!("error: {e:#}");
                    ExitCode::from(1)
                }
            }
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
