//! Turning an outer-bang trace into a shallow-first one of the same length.
//!
//! Adjacent steps `p →ᵢ p₁ →ⱼ p₂` with `i > j` are swapped by searching the
//! depth-`j` redexes of `p` for one after which a depth-`i` redex leads to a
//! program structurally equivalent to `p₂`. A bubble sort over the trace
//! repeats this until depths are non-decreasing.

use crate::reduce::{find_redexes, step, Redex, ReduceError, Relation, Strategy};
use crate::syntax::{struct_equiv, RegionContext, Term};
use crate::trace::{Trace, TraceStep};

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
pub enum ReorderError {
    #[error("no swap found for steps {index} and {next} (depths {deep} then {shallow})", next = index + 1)]
    NoSwapFound { index: usize, deep: usize, shallow: usize },
    #[error("steps of equal depth {depth} are never swapped")]
    EqualDepths { depth: usize },
    #[error("step {index} does not replay: {source}")]
    Replay { index: usize, source: ReduceError },
    #[error("step {index} is not a redex of the {relation} relation")]
    NotARedex { index: usize, relation: Relation },
}

/// Depth of each step.
pub fn depth_profile(t: &Trace) -> Vec<usize> {
    t.steps.iter().map(|s| s.depth).collect()
}

/// Depths never decrease along the trace.
pub fn is_shallow_first(t: &Trace) -> bool {
    depth_profile(t).windows(2).all(|w| w[0] <= w[1])
}

fn redex_of(s: &TraceStep) -> Redex {
    Redex { rule: s.rule, address: s.address.clone(), depth: s.depth, store: s.store.clone() }
}

/// Replays a trace under its own relation, checking every step is a redex
/// of that relation at the recorded depth. Returns the final program.
pub fn validate_trace(t: &Trace) -> Result<Term, ReorderError> {
    let mut cur = t.initial.clone();
    for (index, s) in t.steps.iter().enumerate() {
        let redexes =
            find_redexes(&cur, t.relation, &t.regions).map_err(|source| ReorderError::Replay { index, source })?;
        let r = redex_of(s);
        if !redexes.contains(&r) {
            return Err(ReorderError::NotARedex { index, relation: t.relation });
        }
        cur = step(&cur, &r).map_err(|source| ReorderError::Replay { index, source })?;
    }
    Ok(cur)
}

/// Given `p →ᵢ · →ⱼ p₂` with `i > j`, finds `p →ⱼ p' →ᵢ p₂'` with `p₂' ≡ p₂`.
/// Candidates are tried in lexicographic order of their addresses.
pub fn swap_adjacent(
    p: &Term,
    deep: usize,
    shallow: usize,
    p2: &Term,
    rc: &RegionContext,
) -> Result<Option<(Redex, Term, Redex, Term)>, ReduceError> {
    let rel = Relation::OuterBang;
    for rj in find_redexes(p, rel, rc)?.into_iter().filter(|r| r.depth == shallow) {
        let p1 = step(p, &rj)?;
        for ri in find_redexes(&p1, rel, rc)?.into_iter().filter(|r| r.depth == deep) {
            let q = step(&p1, &ri)?;
            if struct_equiv(&q, p2) {
                return Ok(Some((rj, p1, ri, q)));
            }
        }
    }
    Ok(None)
}

#[derive(Clone, Debug)]
pub struct Reordered {
    pub trace: Trace,
    pub swaps: usize,
    pub passes: usize,
}

fn make_step(index: usize, r: &Redex, program: Term) -> TraceStep {
    TraceStep {
        step: index as u64 + 1,
        rule: r.rule,
        address: r.address.clone(),
        depth: r.depth,
        store: r.store.clone(),
        program,
        seed: None,
    }
}

/// A step of `p` with the rule and depth of `old` whose contractum is
/// equivalent to `target`. The recorded address is tried first.
fn rematch(p: &Term, old: &Redex, target: &Term, rc: &RegionContext) -> Result<Option<(Redex, Term)>, ReorderError> {
    let replay = |source| ReorderError::Replay { index: 0, source };
    let mut candidates = find_redexes(p, Relation::OuterBang, rc).map_err(replay)?;
    candidates.retain(|r| r.rule == old.rule && r.depth == old.depth);
    candidates.sort_by_key(|r| r.address != old.address);
    for r in candidates {
        let q = step(p, &r).map_err(replay)?;
        if struct_equiv(&q, target) {
            return Ok(Some((r, q)));
        }
    }
    Ok(None)
}

/// Bubble-sorts the steps of `t` by depth.
pub fn reorder_shallow_first(t: &Trace) -> Result<Reordered, ReorderError> {
    let rc = &t.regions;
    // programs[k] is the program before step k.
    let mut programs = vec![t.initial.clone()];
    let mut redexes: Vec<Redex> = Vec::with_capacity(t.steps.len());
    for (index, s) in t.steps.iter().enumerate() {
        let r = redex_of(s);
        let next =
            step(programs.last().expect("non-empty"), &r).map_err(|source| ReorderError::Replay { index, source })?;
        programs.push(next);
        redexes.push(r);
    }
    let mut swaps = 0;
    let mut passes = 0;
    loop {
        passes += 1;
        let mut swapped = false;
        for k in 0..redexes.len().saturating_sub(1) {
            let (deep, shallow) = (redexes[k].depth, redexes[k + 1].depth);
            if deep <= shallow {
                continue;
            }
            let found = swap_adjacent(&programs[k], deep, shallow, &programs[k + 2], rc)
                .map_err(|source| ReorderError::Replay { index: k, source })?;
            let Some((rj, p1, ri, q)) = found else {
                return Err(ReorderError::NoSwapFound { index: k, deep, shallow });
            };
            redexes[k] = rj;
            redexes[k + 1] = ri;
            programs[k + 1] = p1;
            if q != programs[k + 2] {
                // Equivalent but laid out differently: later steps are matched again.
                programs[k + 2] = q;
                for m in k + 2..redexes.len() {
                    let (r, next) = rematch(&programs[m], &redexes[m], &programs[m + 1], rc)?
                        .ok_or(ReorderError::NoSwapFound { index: m, deep, shallow })?;
                    let same = next == programs[m + 1];
                    redexes[m] = r;
                    programs[m + 1] = next;
                    if same {
                        break;
                    }
                }
            }
            swaps += 1;
            swapped = true;
        }
        if !swapped {
            break;
        }
    }
    let mut out = Trace::new(t.initial.clone(), rc.clone(), Relation::OuterBang, Strategy::ShallowFirst);
    out.steps = redexes.iter().enumerate().map(|(i, r)| make_step(i, r, programs[i + 1].clone())).collect();
    Ok(Reordered { trace: out, swaps, passes })
}

/// Checks one requested swap; equal depths are refused.
pub fn swap_steps(
    p: &Term,
    first: &TraceStep,
    second: &TraceStep,
    rc: &RegionContext,
) -> Result<(TraceStep, TraceStep), ReorderError> {
    if first.depth == second.depth {
        return Err(ReorderError::EqualDepths { depth: first.depth });
    }
    let replay =
        |index, t: &Term, s: &TraceStep| step(t, &redex_of(s)).map_err(|source| ReorderError::Replay { index, source });
    let p2 = replay(1, &replay(0, p, first)?, second)?;
    let found = swap_adjacent(p, first.depth, second.depth, &p2, rc)
        .map_err(|source| ReorderError::Replay { index: 0, source })?;
    let (rj, p1, ri, q) =
        found.ok_or(ReorderError::NoSwapFound { index: 0, deep: first.depth, shallow: second.depth })?;
    Ok((make_step(0, &rj, p1), make_step(1, &ri, q)))
}
