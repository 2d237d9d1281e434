//! Breadth-first enumeration of derivable sentences.
//!
//! This is the exponential baseline prover and the ground truth that every
//! synthesized procedure is validated against.

use std::collections::{HashMap, HashSet};

use crate::error::SearchError;
use crate::term::{apply_clause, GroundTree, Proof, Theory};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SearchBudget {
    /// Maximum proof length.
    pub max_depth: usize,
    /// Sentences with more nodes are discarded, not expanded.
    pub max_tree_size: usize,
    /// Maximum number of distinct sentences kept.
    pub max_frontier: usize,
}

impl SearchBudget {
    pub fn depth(max_depth: usize) -> Self {
        SearchBudget {
            max_depth,
            ..Self::default()
        }
    }

    /// Unbounded depth; the search ends when no new sentence within
    /// `max_tree_size` appears.
    pub fn saturate(max_tree_size: usize) -> Self {
        SearchBudget {
            max_depth: usize::MAX,
            max_tree_size,
            ..Self::default()
        }
    }
}

impl Default for SearchBudget {
    fn default() -> Self {
        SearchBudget {
            max_depth: 8,
            max_tree_size: 64,
            max_frontier: 2_000_000,
        }
    }
}

struct Bfs<'a> {
    th: &'a Theory,
    b: SearchBudget,
    seen: HashSet<GroundTree>,
    frontier: Vec<GroundTree>,
    depth: usize,
}

impl<'a> Bfs<'a> {
    fn new(th: &'a Theory, from: &GroundTree, b: SearchBudget) -> Self {
        let mut seen = HashSet::new();
        let mut frontier = Vec::new();
        if from.size() <= b.max_tree_size {
            seen.insert(from.clone());
            frontier.push(from.clone());
        }
        Bfs {
            th,
            b,
            seen,
            frontier,
            depth: 0,
        }
    }

    /// Expands one level; returns false when the search is finished.
    fn step(&mut self, mut on_new: impl FnMut(&GroundTree, &GroundTree, usize)) -> Result<bool, SearchError> {
        if self.depth >= self.b.max_depth || self.frontier.is_empty() {
            return Ok(false);
        }
        let mut next = Vec::new();
        for t in &self.frontier {
            for (i, c) in self.th.axioms.iter().enumerate() {
                let Some(d) = apply_clause(c, t) else { continue };
                if d.size() > self.b.max_tree_size || self.seen.contains(&d) {
                    continue;
                }
                if self.seen.len() >= self.b.max_frontier {
                    return Err(SearchError::BudgetExceeded {
                        limit: self.b.max_frontier,
                        depth: self.depth + 1,
                    });
                }
                on_new(t, &d, i);
                self.seen.insert(d.clone());
                next.push(d);
            }
        }
        self.frontier = next;
        self.depth += 1;
        Ok(true)
    }
}

/// All sentences reachable from `from` by at most `max_depth` axiom
/// applications, in canonical order.
pub fn reachable_set(
    th: &Theory,
    from: &GroundTree,
    b: SearchBudget,
) -> Result<Vec<GroundTree>, SearchError> {
    let mut bfs = Bfs::new(th, from, b);
    while bfs.step(|_, _, _| {})? {}
    let mut out: Vec<GroundTree> = bfs.seen.into_iter().collect();
    out.sort();
    Ok(out)
}

pub fn decide_oracle(
    th: &Theory,
    t: &GroundTree,
    d: &GroundTree,
    b: SearchBudget,
) -> Result<bool, SearchError> {
    let mut bfs = Bfs::new(th, t, b);
    if bfs.seen.contains(d) {
        return Ok(true);
    }
    let mut found = false;
    while !found && bfs.step(|_, new, _| found |= new == d)? {}
    Ok(found)
}

/// A shortest proof of `d` from the start sentence.
pub fn find_proof(th: &Theory, d: &GroundTree, b: SearchBudget) -> Result<Option<Proof>, SearchError> {
    find_proof_from(th, &th.start, d, b)
}

pub fn find_proof_from(
    th: &Theory,
    from: &GroundTree,
    d: &GroundTree,
    b: SearchBudget,
) -> Result<Option<Proof>, SearchError> {
    let mut bfs = Bfs::new(th, from, b);
    if !bfs.seen.contains(d) {
        let mut parent: HashMap<GroundTree, (GroundTree, usize)> = HashMap::new();
        let mut found = false;
        while !found
            && bfs.step(|t, new, i| {
                parent.insert(new.clone(), (t.clone(), i));
                found |= new == d;
            })?
        {}
        if !found {
            return Ok(None);
        }
        let mut steps = Vec::new();
        let mut cur = d.clone();
        while let Some((p, i)) = parent.get(&cur) {
            steps.push(th.axioms[*i].name.clone());
            cur = p.clone();
        }
        steps.reverse();
        return Ok(Some(Proof { steps }));
    }
    Ok(Some(Proof::default()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::syntax::{parse_ground, parse_theory};
    use crate::term::check_proof;

    fn g(s: &str) -> GroundTree {
        parse_ground(s).unwrap()
    }

    #[test]
    fn chain_depth_three() {
        let th = parse_theory("start: P(Z)\na: P(x) -> P(F(x))").unwrap();
        let got = reachable_set(&th, &th.start, SearchBudget::depth(3)).unwrap();
        let want: Vec<_> = ["P(Z)", "P(F(Z))", "P(F(F(Z)))", "P(F(F(F(Z))))"]
            .into_iter()
            .map(g)
            .collect();
        assert_eq!(got, want);
        assert_eq!(
            find_proof(&th, &g("P(F(F(Z)))"), SearchBudget::depth(5)).unwrap(),
            Some(Proof::new(["a", "a"]))
        );
    }

    #[test]
    fn depth_zero_and_self() {
        let th = parse_theory("start: P(Z)\na: P(x) -> P(F(x))").unwrap();
        let t = g("P(F(Z))");
        assert_eq!(reachable_set(&th, &t, SearchBudget::depth(0)).unwrap(), vec![t.clone()]);
        assert!(decide_oracle(&th, &t, &t, SearchBudget::depth(0)).unwrap());
        assert!(decide_oracle(&th, &t, &g("P(F(F(F(F(Z)))))"), SearchBudget::depth(5)).unwrap());
        assert_eq!(find_proof(&th, &th.start, SearchBudget::depth(0)).unwrap(), Some(Proof::default()));
    }

    #[test]
    fn fg_negative() {
        let th = parse_theory(include_str!("../theories/fg.tpc")).unwrap();
        let d = g("P(F(Z), G(G(Z)))");
        assert!(!decide_oracle(&th, &th.start, &d, SearchBudget::depth(4)).unwrap());
    }

    #[test]
    fn budget_exceeded() {
        let th = parse_theory(include_str!("../theories/fg.tpc")).unwrap();
        let b = SearchBudget {
            max_depth: 10,
            max_tree_size: 1000,
            max_frontier: 5,
        };
        assert!(matches!(
            reachable_set(&th, &th.start, b),
            Err(SearchError::BudgetExceeded { limit: 5, .. })
        ));
    }

    #[test]
    fn ancestor_goal() {
        let th = parse_theory(include_str!("../theories/ancestor.tpc")).unwrap();
        let goal = th.goal.clone().unwrap();
        let p = find_proof(&th, &goal, SearchBudget::depth(8)).unwrap().unwrap();
        assert_eq!(p.len(), 7);
        assert_eq!(check_proof(&th, &p).unwrap(), goal);
    }
}
