use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use log::warn;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde_json::{json, Value};

use tpc_core::delta::{inclusion, reduce_scheme, ReductionTrace, Verdict};
use tpc_core::math::{eliminate, Ineq};
use tpc_core::oracle::{decide_oracle, find_proof_from, reachable_set, SearchBudget};
use tpc_core::pipeline::{pipeline_with, reduced_scheme, DecisionProcedure, PipelineError, PipelineOptions};
use tpc_core::scheme::{parse_scheme, IterExpr};
use tpc_core::sigma::sigma;
use tpc_core::syntax::{parse_ground, parse_theory};
use tpc_core::{GroundTree, Proof, SolverError, Theory};

const SCHEMA: &str = "tpc/1";

#[derive(Parser)]
#[command(name = "tpc", version, about = "Membership procedures for root-rewriting theories")]
struct Cli {
    /// Structured output
    #[arg(long, global = true)]
    json: bool,
    /// Seed for sampled output
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Proof length bound for breadth-first search
    #[arg(long, global = true, default_value_t = 10)]
    max_depth: usize,
    /// Skip checking the synthesized procedure against search
    #[arg(long, global = true)]
    no_selfcheck: bool,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Method {
    /// The synthesized procedure, falling back to search when synthesis fails
    Auto,
    Generated,
    Oracle,
}

#[derive(Subcommand)]
enum Cmd {
    /// Parse and print a theory
    Parse { file: PathBuf },
    /// Breadth-first search from the start sentence
    Oracle {
        file: PathBuf,
        #[arg(long)]
        depth: Option<usize>,
        /// List the reachable sentences
        #[arg(long)]
        dump: bool,
        /// List this many randomly chosen reachable sentences
        #[arg(long)]
        sample: Option<usize>,
    },
    /// Prove the goal (or the given sentence) from the start sentence
    Prove {
        file: PathBuf,
        #[arg(long)]
        goal: Option<String>,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
    },
    /// Whether one sentence derives another
    Decide {
        file: PathBuf,
        #[arg(long)]
        from: Option<String>,
        #[arg(long)]
        to: String,
        #[arg(long, value_enum, default_value_t = Method::Auto)]
        method: Method,
    },
    /// Characteristic function of a scheme
    Sigma {
        file: PathBuf,
        #[arg(long)]
        scheme: String,
    },
    /// Relation inclusion between two schemes
    Includes {
        file: PathBuf,
        #[arg(long)]
        left: String,
        #[arg(long)]
        right: String,
    },
    /// Reduce a scheme, by default the one built from all axioms
    Reduce {
        file: PathBuf,
        #[arg(long)]
        scheme: Option<String>,
    },
}

/// A failure with its exit code.
struct Failure {
    code: u8,
    msg: String,
}

impl Failure {
    fn usage(msg: impl ToString) -> Failure {
        Failure { code: 2, msg: msg.to_string() }
    }

    fn solver(msg: impl ToString) -> Failure {
        Failure { code: 3, msg: msg.to_string() }
    }
}

impl From<SolverError> for Failure {
    fn from(e: SolverError) -> Self {
        Failure::solver(e)
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        Failure::solver(e)
    }
}

/// What a command produced: text for people, a JSON body, and whether
/// the answer was positive.
struct Report {
    text: String,
    data: Value,
    positive: bool,
}

impl Report {
    fn ok(text: String, data: Value) -> Report {
        Report { text, data, positive: true }
    }
}

fn load(file: &PathBuf) -> Result<Theory, Failure> {
    let src = std::fs::read_to_string(file).map_err(|e| Failure::usage(format!("{}: {e}", file.display())))?;
    parse_theory(&src).map_err(|e| Failure::usage(format!("{}: {e}", file.display())))
}

fn ground(s: &str) -> Result<GroundTree, Failure> {
    parse_ground(s).map_err(|e| Failure::usage(format!("{s}: {e}")))
}

fn scheme(s: &str) -> Result<IterExpr, Failure> {
    parse_scheme(s).map_err(|e| Failure::usage(format!("{s}: {e}")))
}

fn trace_json(t: &ReductionTrace) -> Value {
    Value::Array(
        t.steps
            .iter()
            .map(|s| {
                json!({
                    "rule": s.rule.id(),
                    "path": s.path,
                    "before": s.before.to_string(),
                    "after": s.after.to_string(),
                    "scheme": s.scheme.to_string(),
                    "justification": s.justification.as_ref().map(|j| json!({
                        "query": j.query,
                        "verdict": j.verdict.to_string(),
                        "region": j.region.as_ref().map(ToString::to_string),
                    })),
                })
            })
            .collect(),
    )
}

fn synthesize(cli: &Cli, th: &Theory) -> Result<DecisionProcedure, PipelineError> {
    let opts = PipelineOptions { self_check: !cli.no_selfcheck, ..Default::default() };
    pipeline_with(th, opts)
}

/// The synthesized procedure, or `None` when the method asks for search
/// or synthesis fails under `auto`.
fn procedure(cli: &Cli, th: &Theory, method: Method) -> Result<Option<DecisionProcedure>, Failure> {
    match method {
        Method::Oracle => Ok(None),
        Method::Generated => Ok(Some(synthesize(cli, th)?)),
        Method::Auto => match synthesize(cli, th) {
            Ok(dp) => Ok(Some(dp)),
            Err(e) if e.is_unsupported() => {
                warn!("synthesis failed, using search: {e}");
                Ok(None)
            }
            Err(e) => Err(e.into()),
        },
    }
}

fn search_error(e: impl ToString) -> Failure {
    Failure::solver(e)
}

fn run(cli: &Cli) -> Result<Report, Failure> {
    let budget = SearchBudget::depth(cli.max_depth);
    match &cli.cmd {
        Cmd::Parse { file } => {
            let th = load(file)?;
            let mut text = format!("start: {}\n", th.start);
            for a in &th.axioms {
                text.push_str(&format!("{a}\n"));
            }
            if let Some(g) = &th.goal {
                text.push_str(&format!("goal: {g}\n"));
            }
            let data = json!({
                "start": th.start.to_string(),
                "axioms": th.axioms.iter().map(|a| json!({
                    "name": a.name, "lhs": a.lhs.to_string(), "rhs": a.rhs.to_string(),
                })).collect::<Vec<_>>(),
                "goal": th.goal.as_ref().map(ToString::to_string),
            });
            Ok(Report::ok(text, data))
        }
        Cmd::Oracle { file, depth, dump, sample } => {
            let th = load(file)?;
            let b = SearchBudget::depth(depth.unwrap_or(cli.max_depth));
            let mut reach = reachable_set(&th, &th.start, b).map_err(search_error)?;
            let mut text = format!("{} sentences within {} steps\n", reach.len(), b.max_depth);
            let mut data = json!({ "depth": b.max_depth, "reachable": reach.len() });
            let mut positive = true;
            if let Some(g) = &th.goal {
                let p = find_proof_from(&th, &th.start, g, b).map_err(search_error)?;
                positive = p.is_some();
                match &p {
                    Some(p) => text.push_str(&format!("goal {g}: {} steps: {p}\n", p.steps.len())),
                    None => text.push_str(&format!("goal {g}: not found\n")),
                }
                data["proof"] = json!(p.map(|p| p.steps));
            }
            if let Some(k) = sample {
                reach.shuffle(&mut StdRng::seed_from_u64(cli.seed));
                reach.truncate(*k);
            }
            if *dump || sample.is_some() {
                for t in &reach {
                    text.push_str(&format!("{t}\n"));
                }
                data["sentences"] = json!(reach.iter().map(ToString::to_string).collect::<Vec<_>>());
            }
            Ok(Report { text, data, positive })
        }
        Cmd::Prove { file, goal, method } => {
            let th = load(file)?;
            let goal = match goal {
                Some(g) => ground(g)?,
                None => th.goal.clone().ok_or_else(|| Failure::usage("no goal given or declared"))?,
            };
            let (proof, used) = match procedure(cli, &th, *method)? {
                Some(dp) => (dp.prove(&goal)?, "generated"),
                None => (find_proof_from(&th, &th.start, &goal, budget).map_err(search_error)?, "oracle"),
            };
            let text = match &proof {
                Some(p) => format!("{} steps: {p}\n", p.steps.len()),
                None => format!("no proof of {goal}\n"),
            };
            let data = json!({ "goal": goal.to_string(), "method": used, "proof": proof.as_ref().map(|p: &Proof| &p.steps) });
            Ok(Report { text, data, positive: proof.is_some() })
        }
        Cmd::Decide { file, from, to, method } => {
            let th = load(file)?;
            let t = match from {
                Some(s) => ground(s)?,
                None => th.start.clone(),
            };
            let d = ground(to)?;
            let (answer, used) = match procedure(cli, &th, *method)? {
                Some(dp) => (dp.decide_from(&t, &d)?, "generated"),
                None => (decide_oracle(&th, &t, &d, budget).map_err(search_error)?, "oracle"),
            };
            let data = json!({ "from": t.to_string(), "to": d.to_string(), "method": used, "result": answer });
            Ok(Report { text: format!("{answer}\n"), data, positive: answer })
        }
        Cmd::Sigma { file, scheme: s } => {
            let th = load(file)?;
            let e = scheme(s)?;
            let f = sigma(&th, &e)?;
            let data = json!({
                "scheme": e.to_string(),
                "shape": f.shape.to_string(),
                "vars": f.vars.iter().map(|v| json!({ "name": v.name, "path": v.path })).collect::<Vec<_>>(),
                "charfn": f.to_string(),
            });
            Ok(Report::ok(format!("{f}\n"), data))
        }
        Cmd::Includes { file, left, right } => {
            let th = load(file)?;
            let (l, r) = (scheme(left)?, scheme(right)?);
            let j = inclusion(&th, &l, &r);
            if let Verdict::Inconclusive(why) = &j.verdict {
                return Err(Failure::solver(why));
            }
            let sys = j.system.clone().expect("decided inclusion has a system");
            let el = eliminate(&sys)?;
            let params = sys.params().join(", ");
            let region = match &j.region {
                Some(r) if r.is_universal() && !params.is_empty() => format!("all {params}"),
                Some(r) => r.to_string(),
                None => "none".into(),
            };
            let solved: Vec<String> = el.solved.iter().map(ToString::to_string).collect();
            let raw: Vec<String> = el.raw_inequalities.iter().map(|e| Ineq(e).to_string()).collect();
            let mut text = format!("{}\n{}\nregion: {region}\n", j.query, sys.to_string().trim_end());
            for s in &solved {
                text.push_str(&format!("solved: {s}\n"));
            }
            let data = json!({
                "query": j.query,
                "holds": j.verdict.holds(),
                "system": sys.to_string(),
                "region": region,
                "solved": solved,
                "bounds": raw,
            });
            Ok(Report { text, data, positive: j.verdict.holds() })
        }
        Cmd::Reduce { file, scheme: s } => {
            let th = load(file)?;
            let (original, reduced, trace) = match s {
                Some(s) => {
                    let e = scheme(s)?;
                    let (r, t) = reduce_scheme(&th, &e);
                    (e, r, t)
                }
                None => {
                    let (_, stages) = reduced_scheme(&th)?;
                    let built = tpc_core::scheme::build_scheme(&stages.iter().map(|s| s.axiom.clone()).collect::<Vec<_>>());
                    let last = stages.last().expect("theory has axioms").reduced.clone();
                    let steps = stages.into_iter().flat_map(|s| s.trace.steps).collect();
                    (built, last, ReductionTrace { steps })
                }
            };
            let text = format!("{original}\n{trace}{}{reduced}\n", if trace.steps.is_empty() { "" } else { "\n" });
            let data = json!({
                "scheme": original.to_string(),
                "reduced": reduced.to_string(),
                "trace": trace_json(&trace),
            });
            Ok(Report::ok(text, data))
        }
    }
}

fn command_name(c: &Cmd) -> &'static str {
    match c {
        Cmd::Parse { .. } => "parse",
        Cmd::Oracle { .. } => "oracle",
        Cmd::Prove { .. } => "prove",
        Cmd::Decide { .. } => "decide",
        Cmd::Sigma { .. } => "sigma",
        Cmd::Includes { .. } => "includes",
        Cmd::Reduce { .. } => "reduce",
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TPC_LOG", "warn")).init();
    let cli = Cli::parse();
    let cmd = command_name(&cli.cmd);
    match run(&cli) {
        Ok(r) => {
            if cli.json {
                let mut out = json!({ "schema": SCHEMA, "command": cmd });
                if let (Value::Object(o), Value::Object(d)) = (&mut out, r.data) {
                    o.extend(d);
                }
                println!("{out}");
            } else {
                print!("{}", r.text);
            }
            ExitCode::from(if r.positive { 0 } else { 1 })
        }
        Err(f) => {
            if cli.json {
                println!("{}", json!({ "schema": SCHEMA, "command": cmd, "error": f.msg }));
            } else {
                eprintln!("tpc: {}", f.msg);
            }
            ExitCode::from(f.code)
        }
    }
}
