//! Acceptance checks, one line per criterion. Criterion 11 is reported
//! but does not fail the run.

use std::collections::BTreeSet;
use std::time::{Duration, Instant};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use tpc_core::affine::Env;
use tpc_core::atoms::{split_axiom, Conjunct};
use tpc_core::delta::{inclusion, reduce_scheme, Rule};
use tpc_core::final_solver::{decide, extract_proof, tune};
use tpc_core::math::{eliminate, solve_multiindex, ConditionSystem, Ineq, Region};
use tpc_core::oracle::{decide_oracle, find_proof, reachable_set, SearchBudget};
use tpc_core::path::Path;
use tpc_core::pipeline::reduced_scheme;
use tpc_core::scheme::{enumerate_indices, instantiate, parse_multi_index, parse_scheme, reduce_specific, IterExpr, MultiIndex};
use tpc_core::sigma::{sigma, SymbolicCharFn};
use tpc_core::syntax::{parse_ground, parse_term, parse_theory};
use tpc_core::term::{apply_clause, check_proof, replay};
use tpc_core::{Clause, GroundTree, Proof, Term, Theory};

type Outcome = Result<String, String>;

fn theory(name: &str) -> Theory {
    let src = match name {
        "chain" => include_str!("../theories/chain.tpc"),
        "fg" => include_str!("../theories/fg.tpc"),
        "mod" => include_str!("../theories/mod.tpc"),
        "stack" => include_str!("../theories/stack.tpc"),
        "stack3" => include_str!("../theories/stack3.tpc"),
        _ => include_str!("../theories/ancestor.tpc"),
    };
    parse_theory(src).expect("bundled theory parses")
}

fn e(s: &str) -> IterExpr {
    parse_scheme(s).expect("scheme parses")
}

fn g(s: &str) -> GroundTree {
    parse_ground(s).expect("tree parses")
}

fn clause(s: &str) -> Clause {
    let (l, r) = s.split_once("->").expect("arrow");
    Clause::new("c", parse_term(l).unwrap(), parse_term(r).unwrap()).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn unary(f: &str, n: usize, leaf: Term) -> Term {
    (0..n).fold(leaf, |t, _| Term::app(f, vec![t]))
}

fn ancestor() -> Outcome {
    let th = theory("ancestor");
    let goal = th.goal.clone().ok_or("no goal")?;
    let p = find_proof(&th, &goal, SearchBudget::depth(8)).map_err(|e| e.to_string())?.ok_or("no proof found")?;
    ensure(p.len() == 7, || format!("proof has {} steps", p.len()))?;
    ensure(check_proof(&th, &p) == Ok(goal.clone()), || "found proof does not check".into())?;
    let expected = Proof::new(["p3", "a1", "p2", "a2", "p1", "a2", "l1"]);
    ensure(check_proof(&th, &expected) == Ok(goal), || "expected sequence does not check".into())?;
    Ok(format!("7-step proof {p}"))
}

fn instantiation() -> Outcome {
    let seq = instantiate(&e("(a*.b)*.a*"), &parse_multi_index("{{2,0,1},3}").unwrap()).map_err(|e| e.to_string())?;
    let got = seq.join(".");
    ensure(got == "a.a.b.b.a.b.a.a.a", || got.clone())?;
    Ok(got)
}

fn path_algebra() -> Outcome {
    let p = |s: &str| Path::from_clause(&clause(s)).expect("path clause");
    let a = p("P(x, y) -> x").compose(&p("R(x, y) -> y")).to_string();
    let b = p("F(x) -> x").power(4).to_string();
    ensure(a == "[P(R(x, y), z)->y]", || a.clone())?;
    ensure(b == "[F(F(F(F(x))))->x]", || b.clone())?;
    let atoms: Vec<String> = split_axiom(&clause("P(R(x, z), y) -> P(x, R(y, z))"))
        .atoms()
        .map(ToString::to_string)
        .collect();
    let want = [
        "EqualsLR([P(R(x, y), z)->x], [P(x, y)->x])",
        "EqualsLR([P(x, y)->y], [P(x, R(y, z))->y])",
        "EqualsLR([P(R(x, y), z)->y], [P(x, R(y, z))->z])",
    ];
    ensure(atoms == want, || format!("{atoms:?}"))?;
    Ok(format!("{a}, {b}, three EqualsLR atoms"))
}

/// Compares `f` with replayed instantiations on every index up to `len`
/// and every start/goal pair from a window of reachable trees.
fn agrees(th: &Theory, f: &SymbolicCharFn, len: usize) -> Result<usize, String> {
    let b = SearchBudget { max_depth: 5, max_tree_size: 14, ..Default::default() };
    let trees = reachable_set(th, &th.start, b).map_err(|e| e.to_string())?;
    let starts: Vec<&GroundTree> = trees.iter().take(4).collect();
    let mut checked = 0;
    for idx in enumerate_indices(&f.scheme, len) {
        let seq = instantiate(&f.scheme, &idx).map_err(|e| e.to_string())?;
        let c = reduce_specific(th, &seq).ok();
        for t in &starts {
            let want = c.as_ref().and_then(|c| apply_clause(c, t));
            for d in trees.iter().chain(want.iter()).filter(|d| d.size() <= 14) {
                let got = f.accepts(&idx, t, d).map_err(|e| e.to_string())?;
                if got != (want.as_ref() == Some(d)) {
                    return Err(format!("{} at {idx}: {t} -> {d}", f.scheme));
                }
                checked += 1;
            }
        }
    }
    Ok(checked)
}

fn sigma_forms() -> Outcome {
    let chain = theory("chain");
    let f = sigma(&chain, &e("a*")).map_err(|e| e.to_string())?;
    let single = f.atoms().map(ToString::to_string).unwrap_or_default();
    ensure(
        single == "Intersect(\n  EqualsLR([P(x)->x], [P(x)->x].[F(x)->x]^n),\n)",
        || single.clone(),
    )?;
    let stack = theory("stack");
    let f = sigma(&stack, &e("(a*.b)*")).map_err(|e| e.to_string())?;
    let three_part = f.cases.iter().any(|c| {
        let plain = c.atoms.conjuncts.iter().filter(|x| matches!(x, Conjunct::Atom(_))).count();
        let groups = c.atoms.conjuncts.iter().filter(|x| matches!(x, Conjunct::IterGroup { .. })).count();
        plain == 2 && groups == 1
    });
    let s = f.to_string();
    ensure(three_part, || format!("no two-atom-plus-group case in {s}"))?;
    for part in ["^m", "^{m-i}", "^{m[i]}"] {
        ensure(s.contains(part), || format!("missing {part} in {s}"))?;
    }
    let mut total = 0;
    for (name, schemes) in [
        ("chain", vec!["a*"]),
        ("fg", vec!["b*.a*", "a.b.a*.b", "b.a*.b"]),
        ("mod", vec!["a*", "b*"]),
        ("stack", vec!["(a*.b)*", "(a*.b)*.a*", "a* | b"]),
        ("ancestor", vec!["p1*", "l2*.l1"]),
    ] {
        let th = theory(name);
        for s in schemes {
            let f = sigma(&th, &e(s)).map_err(|err| format!("{s}: {err}"))?;
            total += agrees(&th, &f, 6)?;
        }
    }
    Ok(format!("reference forms match, {total} oracle comparisons agree"))
}

fn inclusion_elimination() -> Outcome {
    let th = theory("fg");
    let j = inclusion(&th, &e("a.b.a*.b"), &e("b.a*.b"));
    let sys = j.system.ok_or_else(|| format!("no system: {}", j.verdict))?;
    let el = eliminate(&sys).map_err(|e| e.to_string())?;
    let solved: Vec<String> = el.solved.iter().map(ToString::to_string).collect();
    ensure(solved == ["k = n + 1"], || format!("{solved:?}"))?;
    ensure(el.region == Region::Universal, || el.region.to_string())?;
    // the reversed query names its parameter after the left scheme's
    // variable; the region is the interval [1, inf) either way
    let j = inclusion(&th, &e("b.a*.b"), &e("a.b.a*.b"));
    let sys = j.system.ok_or_else(|| format!("no system: {}", j.verdict))?;
    let p = sys.params().first().map(|p| p.to_string()).ok_or("no parameter")?;
    let region = j.region.map(|r| r.to_string()).unwrap_or_default();
    ensure(region == format!("{p} >= 1"), || region.clone())?;
    Ok(format!("k = n + 1 over all n; reversed region {region}"))
}

fn modular() -> Outcome {
    let th = theory("mod");
    let j = inclusion(&th, &e("a*"), &e("b*"));
    let sys = j.system.ok_or_else(|| format!("no system: {}", j.verdict))?;
    let eqs: Vec<String> = sys.equations.iter().map(|(l, r)| format!("{l} = {r}")).collect();
    ensure(eqs == ["n = 2k"], || format!("{eqs:?}"))?;
    let el = eliminate(&sys).map_err(|e| e.to_string())?;
    let region = el.region.to_string();
    ensure(region == "n = 0 (mod 2)", || region.clone())?;
    Ok(format!("n = 2k gives {region}"))
}

/// End points of every instantiation of `x` of length at most `len`.
fn endpoints(th: &Theory, x: &IterExpr, len: usize) -> BTreeSet<GroundTree> {
    enumerate_indices(x, len)
        .iter()
        .filter_map(|idx| replay(th, &th.start, &Proof::new(instantiate(x, idx).ok()?)).ok())
        .collect()
}

fn delta() -> Outcome {
    let th = theory("fg");
    let original = e("(a*.b)*.a*");
    let (reduced, trace) = reduce_scheme(&th, &original);
    ensure(reduced.to_string() == "b*.a*", || format!("reduced to {reduced}"))?;
    let r1 = trace.steps.iter().find(|s| s.rule == Rule::StarAbsorption).ok_or("no absorption step")?;
    let j = r1.justification.as_ref().ok_or("absorption without justification")?;
    ensure(j.query == "INCLUDES(a.b.a*.b, b.a*.b)" && j.verdict.holds(), || j.query.clone())?;
    ensure(trace.replay(&original) == Ok(reduced.clone()), || "trace does not replay".into())?;
    let a = endpoints(&th, &original, 6);
    let b = endpoints(&th, &reduced, 6);
    ensure(a == b, || format!("{} vs {} end points", a.len(), b.len()))?;
    Ok(format!("{} rewrites, {} end points agree", trace.steps.len(), a.len()))
}

/// Trees `P(u, v)` (or `P(u)`) whose arguments are chains over `unary`
/// ending in `Z`, with at most `size` nodes.
fn chain_trees(binary: bool, unary: &[&str], size: usize) -> Vec<GroundTree> {
    let mut chains: Vec<Vec<Term>> = vec![vec![Term::app("Z", vec![])]];
    for n in 1..size {
        let next = chains[n - 1]
            .iter()
            .flat_map(|t| unary.iter().map(move |f| Term::app(*f, vec![t.clone()])))
            .collect();
        chains.push(next);
    }
    let mut out = Vec::new();
    for i in 0..size {
        if binary {
            for j in 0..size.saturating_sub(i + 3) + 1 {
                if i + j + 3 > size {
                    continue;
                }
                for x in &chains[i] {
                    for y in &chains[j] {
                        out.push(Term::app("P", vec![x.clone(), y.clone()]));
                    }
                }
            }
        } else if i + 2 <= size {
            out.extend(chains[i].iter().map(|x| Term::app("P", vec![x.clone()])));
        }
    }
    out
}

fn final_solver() -> Outcome {
    let chain = theory("chain");
    let fa = sigma(&chain, &e("a*")).map_err(|e| e.to_string())?;
    let r = tune(&fa, &g("P(F(Z))"), &g("P(F(F(F(F(Z)))))")).map_err(|e| e.to_string())?;
    let j = r.assignment.as_ref().map(MultiIndex::len);
    ensure(j == Some(3), || format!("j = {j:?}"))?;

    let fg = theory("fg");
    let fb = sigma(&fg, &e("b*.a*")).map_err(|e| e.to_string())?;
    let d = Term::app("P", vec![unary("F", 8, g("Z")), unary("G", 5, g("Z"))]);
    let r = tune(&fb, &fg.start, &d).map_err(|e| e.to_string())?;
    let idx = r.assignment.ok_or("no assignment for the two-counter pair")?;
    let env = fb.env(&idx);
    let nk = (env.indices["n"].len(), env.indices["k"].len());
    ensure(nk == (2, 3), || format!("(n, k) = {nk:?}"))?;

    let mut compared = 0;
    for (th, f, binary, unaries) in [(&chain, &fa, false, &["F"][..]), (&fg, &fb, true, &["F", "G"][..])] {
        let window = SearchBudget { max_depth: 8, max_tree_size: 14, ..Default::default() };
        let members: BTreeSet<GroundTree> = reachable_set(th, &th.start, window).map_err(|e| e.to_string())?.into_iter().collect();
        // no axiom shrinks a tree, so search saturated at size 14 is exact
        let all: BTreeSet<GroundTree> =
            reachable_set(th, &th.start, SearchBudget::saturate(14)).map_err(|e| e.to_string())?.into_iter().collect();
        let mut trees: BTreeSet<GroundTree> = chain_trees(binary, unaries, 14).into_iter().collect();
        trees.extend(members.iter().cloned());
        for d in &trees {
            let want = all.contains(d);
            let got = decide(f, &th.start, d).map_err(|e| format!("{d}: {e}"))?;
            ensure(got == want, || format!("{}: {d}: generated {got}, search {want}", f.scheme))?;
            if got {
                let p = extract_proof(f, th, &th.start, d).map_err(|e| e.to_string())?.ok_or("no proof")?;
                ensure(replay(th, &th.start, &p).as_ref() == Ok(d), || format!("proof of {d} does not replay"))?;
            }
            compared += 1;
        }
        // spot check against bounded search directly
        for d in trees.iter().take(50) {
            let want = decide_oracle(th, &th.start, d, SearchBudget::saturate(d.size())).map_err(|e| e.to_string())?;
            ensure(want == all.contains(d), || format!("search disagrees with itself on {d}"))?;
        }
    }
    Ok(format!("j = 3, (n, k) = (2, 3), {compared} trees agree with search"))
}

const MERGE: &str = "\
param index m
exists index u
m[1] >= 1
m[2] >= 1
m[1] + m[2] - u - 2 = 0
for i = 1..(m[1] - 2): m[1][i] - u[i] = 0
m[1][m[1] - 1] + m[2][1] - u[m[1] - 1] = 0
m[1][m[1]] + m[2][2] - u[m[1]] = 0
for i = 1..(m[2] - 2): m[2][i + 2] - u[m[1] + i] = 0
";

fn nat_list(xs: &[u64]) -> MultiIndex {
    MultiIndex::List(xs.iter().map(|x| MultiIndex::Nat(*x)).collect())
}

fn multi_index() -> Outcome {
    let sys = ConditionSystem::parse(MERGE).map_err(|e| e.to_string())?;
    let env = Env::new()
        .with_index("m", parse_multi_index("{{4,1,2},{5,2,0,1}}").unwrap())
        .with_index("u", parse_multi_index("{4,6,4,0,1}").unwrap());
    ensure(sys.holds(&env), || "reference point violates the system".into())?;
    let sol = solve_multiindex(&sys, "u").map_err(|e| e.to_string())?;
    let mut got: Vec<String> = sol.elements.iter().map(|e| format!("u{e}")).collect();
    got.sort();
    let mut want = vec![
        "u[i] = m[1][i], for i = 1..(m[1] - 2)",
        "u[m[1] - 1] = m[1][m[1] - 1] + m[2][1]",
        "u[m[1]] = m[1][m[1]] + m[2][2]",
        "u[i + m[1]] = m[2][i + 2], for i = 1..(m[2] - 2)",
    ];
    want.sort();
    ensure(got == want, || format!("{got:?}"))?;
    ensure(sol.length.to_string() == "m[1] + m[2] - 2", || sol.length.to_string())?;
    let region = sol.region.to_string();
    ensure(region == "m[1] >= 1, m[2] >= 1", || region.clone())?;
    let mut rng = StdRng::seed_from_u64(7);
    for _ in 0..50 {
        let part = |rng: &mut StdRng| {
            let n = rng.gen_range(2..7);
            (0..n).map(|_| rng.gen_range(0..10)).collect::<Vec<u64>>()
        };
        let (a, b) = (part(&mut rng), part(&mut rng));
        let env = Env::new().with_index("m", MultiIndex::List(vec![nat_list(&a), nat_list(&b)]));
        let u = sol.build(&env).ok_or("solved form does not build")?;
        ensure(sys.holds(&env.with_index("u", u)), || format!("fails at {a:?} {b:?}"))?;
    }
    let sel: Vec<String> = sol.selector_conditions.iter().map(|e| Ineq(e).to_string()).collect();
    Ok(format!("solved form and region match; selectors {}; 50 random points hold", sel.join(", ")))
}

fn time_decide(f: &SymbolicCharFn, t: &Term, d: &Term) -> Result<Duration, String> {
    let mut best = Duration::MAX;
    for _ in 0..5 {
        let start = Instant::now();
        let ok = decide(f, t, d).map_err(|e| e.to_string())?;
        best = best.min(start.elapsed());
        ensure(ok, || "chain not accepted".into())?;
    }
    Ok(best)
}

fn scaling() -> Outcome {
    let th = theory("chain");
    let f = sigma(&th, &e("a*")).map_err(|e| e.to_string())?;
    let t = th.start.clone();
    let d1 = Term::app("P", vec![unary("F", 1000, g("Z"))]);
    let d4 = Term::app("P", vec![unary("F", 4000, g("Z"))]);
    let a = time_decide(&f, &t, &d1)?;
    let b = time_decide(&f, &t, &d4)?;
    let ratio = b.as_secs_f64() / a.as_secs_f64().max(1e-9);
    ensure(ratio <= 8.0, || format!("ratio {ratio:.2} ({a:?} vs {b:?})"))?;
    // search needs one level per step, so depth 4000 is out of reach; a
    // small bound already fails to see the goal
    let shallow = decide_oracle(&th, &t, &d1, SearchBudget::depth(50)).map_err(|e| e.to_string())?;
    ensure(!shallow, || "depth-50 search reached a 1000-step goal".into())?;
    Ok(format!("N=1000 {a:?}, N=4000 {b:?}, ratio {ratio:.2}; search at depth 50 misses the goal"))
}

fn three_axiom_reduction() -> Outcome {
    let th = theory("stack3");
    let (_, stages) = reduced_scheme(&th).map_err(|e| e.to_string())?;
    let last = stages.last().ok_or("no stages")?;
    let rewrites: usize = stages.iter().map(|s| s.trace.steps.len()).sum();
    let furthest = stages
        .iter()
        .rev()
        .find_map(|s| s.trace.steps.last())
        .map(|s| format!("[{}] {} => {}", s.rule.id(), s.before, s.after))
        .unwrap_or_else(|| "none".into());
    let alpha = stages[stages.len() - 2].reduced.clone();
    let c = IterExpr::axiom("c");
    let target = IterExpr::dot([IterExpr::star(c.clone()), alpha.clone(), IterExpr::star(c.clone())]);
    if last.reduced == target {
        return Ok(format!("reached {target}"));
    }
    let ac = IterExpr::dot([alpha, c.clone()]);
    let query = inclusion(
        &th,
        &IterExpr::dot([ac.clone(), ac.clone()]),
        &IterExpr::alt([IterExpr::dot([c.clone(), ac.clone()]), IterExpr::dot([ac, c])]),
    );
    Err(format!(
        "stopped at {} after {rewrites} rewrites (furthest: {furthest}); target {target}; blocking query {}: {}",
        last.reduced, query.query, query.verdict
    ))
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 11] = [
        ("ancestor proof", ancestor),
        ("instantiation", instantiation),
        ("path algebra", path_algebra),
        ("sigma", sigma_forms),
        ("inclusion and elimination", inclusion_elimination),
        ("modular elimination", modular),
        ("scheme reduction", delta),
        ("tuning and decisions", final_solver),
        ("multi-index solving", multi_index),
        ("scaling", scaling),
        ("three-axiom reduction (stretch)", three_axiom_reduction),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        match run() {
            Ok(detail) => println!("criterion {n} {name}: PASS ({detail})"),
            Err(why) => {
                println!("criterion {n} {name}: FAIL ({why})");
                if n != 11 {
                    failed += 1;
                }
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} required criteria failed");
        std::process::exit(1);
    }
}
