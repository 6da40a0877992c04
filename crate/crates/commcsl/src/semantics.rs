//! Small-step operational semantics for the concurrent heap language.
//!
//! Execution is deterministic given a [`Schedule`]: a sequence of
//! left/right choices, one consumed each time a step descends into a
//! parallel composition whose branches are both unfinished. When the
//! schedule runs out, choices alternate starting from the left, so every
//! finite schedule prefix still yields a complete run.
//!
//! [`explore`] enumerates the reachable configurations over *all*
//! schedules (breadth-first, memoized) and reports every terminal state
//! with a replayable schedule that reaches it, plus every abort. Atomic
//! blocks run their whole body in one step, as an uninterruptible unit.

use std::collections::{HashSet, VecDeque};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::expr::{eval_expr, Store};
use crate::heap::{lowest_free, Heap};
use crate::lang::{Cmd, CmdKind};
use crate::value::Value;

/// A machine configuration's mutable part: variable store plus heap.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct State {
    pub store: Store,
    pub heap: Heap,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Branch {
    Left,
    Right,
}

/// Branch choices consumed in order; see the module docs.
pub type Schedule = Vec<Branch>;

pub fn schedule_to_string(s: &[Branch]) -> String {
    s.iter()
        .map(|b| match b {
            Branch::Left => 'L',
            Branch::Right => 'R',
        })
        .collect()
}

pub fn schedule_from_str(s: &str) -> Result<Schedule, String> {
    s.chars()
        .map(|c| match c {
            'L' | 'l' => Ok(Branch::Left),
            'R' | 'r' => Ok(Branch::Right),
            other => Err(format!("bad schedule character {other:?} (use L/R)")),
        })
        .collect()
}

/// Hands out branch choices: the schedule first, then alternation starting
/// from the left.
struct Chooser<'a> {
    sched: &'a [Branch],
    pos: usize,
    next_fallback: Branch,
}

impl<'a> Chooser<'a> {
    fn new(sched: &'a [Branch]) -> Chooser<'a> {
        Chooser {
            sched,
            pos: 0,
            next_fallback: Branch::Left,
        }
    }

    fn next(&mut self) -> Branch {
        if self.pos < self.sched.len() {
            self.pos += 1;
            self.sched[self.pos - 1]
        } else {
            let b = self.next_fallback;
            self.next_fallback = match b {
                Branch::Left => Branch::Right,
                Branch::Right => Branch::Left,
            };
            b
        }
    }
}

/// A runtime fault, with the line of the faulting command.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Abort {
    pub line: u32,
    pub reason: AbortReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AbortReason {
    /// Read or write through an unallocated location.
    Unallocated { loc: i64, write: bool },
    /// An atomic block's body did not finish within the step budget.
    AtomicFuel,
}

impl fmt::Display for Abort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.reason {
            AbortReason::Unallocated { loc, write } => write!(
                f,
                "line {}: {} unallocated location {loc}",
                self.line,
                if *write { "write to" } else { "read from" }
            ),
            AbortReason::AtomicFuel => {
                write!(f, "line {}: atomic body exceeded the step budget", self.line)
            }
        }
    }
}

/// Snapshot of one atomic block's execution, for cross-checking traces
/// against declared actions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AtomEvent {
    pub line: u32,
    pub store_before: Store,
    pub heap_before: Heap,
    pub store_after: Store,
    pub heap_after: Heap,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Terminated(State),
    Aborted(Abort),
    /// The step budget ran out before the program finished.
    OutOfFuel(State),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunResult {
    pub outcome: Outcome,
    pub steps: u64,
    /// One event per completed atomic block, in execution order.
    pub atomic_events: Vec<AtomEvent>,
}

impl RunResult {
    pub fn terminal(&self) -> Option<&State> {
        match &self.outcome {
            Outcome::Terminated(st) => Some(st),
            _ => None,
        }
    }
}

/// Runs `cmd` from `state` under `schedule`. Deterministic: equal inputs
/// give equal results.
pub fn run(cmd: &Cmd, state: &State, schedule: &[Branch], bounds: &Bounds) -> RunResult {
    let mut chooser = Chooser::new(schedule);
    let mut st = state.clone();
    let mut c = cmd.clone();
    let mut steps: u64 = 0;
    let mut events = Vec::new();
    loop {
        if c.is_skip() {
            return RunResult {
                outcome: Outcome::Terminated(st),
                steps,
                atomic_events: events,
            };
        }
        if steps >= bounds.max_steps {
            return RunResult {
                outcome: Outcome::OutOfFuel(st),
                steps,
                atomic_events: events,
            };
        }
        match step(&c, &mut st, &mut chooser, bounds, &mut events) {
            Ok(next) => {
                c = next;
                steps += 1;
            }
            Err(abort) => {
                return RunResult {
                    outcome: Outcome::Aborted(abort),
                    steps,
                    atomic_events: events,
                }
            }
        }
    }
}

/// One small step; `st` is updated in place and the residual command is
/// returned. `skip` does not step.
fn step(
    c: &Cmd,
    st: &mut State,
    chooser: &mut Chooser,
    bounds: &Bounds,
    events: &mut Vec<AtomEvent>,
) -> Result<Cmd, Abort> {
    match &c.kind {
        CmdKind::Skip => Ok(Cmd::skip()),
        CmdKind::Assign(x, e) => {
            let v = eval_expr(e, &st.store);
            st.store.insert(x.clone(), v);
            Ok(Cmd::skip())
        }
        CmdKind::Read(x, e) => {
            let loc = eval_expr(e, &st.store).as_int();
            match st.heap.get(&loc) {
                Some(v) => {
                    st.store.insert(x.clone(), v.clone());
                    Ok(Cmd::skip())
                }
                None => Err(Abort {
                    line: c.line,
                    reason: AbortReason::Unallocated { loc, write: false },
                }),
            }
        }
        CmdKind::Write(e1, e2) => {
            let loc = eval_expr(e1, &st.store).as_int();
            if !st.heap.contains_key(&loc) {
                return Err(Abort {
                    line: c.line,
                    reason: AbortReason::Unallocated { loc, write: true },
                });
            }
            let v = eval_expr(e2, &st.store);
            st.heap.insert(loc, v);
            Ok(Cmd::skip())
        }
        CmdKind::Alloc(x, e) => {
            let v = eval_expr(e, &st.store);
            let loc = lowest_free(&st.heap);
            st.heap.insert(loc, v);
            st.store.insert(x.clone(), Value::Int(loc));
            Ok(Cmd::skip())
        }
        CmdKind::Seq(a, b) => {
            if a.is_skip() {
                Ok((**b).clone())
            } else {
                let a2 = step(a, st, chooser, bounds, events)?;
                Ok(Cmd::new(CmdKind::Seq(Box::new(a2), b.clone()), c.line))
            }
        }
        CmdKind::If(b, c1, c2) => {
            if eval_expr(b, &st.store).truthy() {
                Ok((**c1).clone())
            } else {
                Ok((**c2).clone())
            }
        }
        CmdKind::While(b, body) => {
            if eval_expr(b, &st.store).truthy() {
                Ok(Cmd::new(
                    CmdKind::Seq(body.clone(), Box::new(c.clone())),
                    c.line,
                ))
            } else {
                Ok(Cmd::skip())
            }
        }
        CmdKind::Par(a, b) => match (a.is_skip(), b.is_skip()) {
            (true, true) => Ok(Cmd::skip()),
            (false, true) => {
                let a2 = step(a, st, chooser, bounds, events)?;
                Ok(Cmd::new(CmdKind::Par(Box::new(a2), b.clone()), c.line))
            }
            (true, false) => {
                let b2 = step(b, st, chooser, bounds, events)?;
                Ok(Cmd::new(CmdKind::Par(a.clone(), Box::new(b2)), c.line))
            }
            (false, false) => match chooser.next() {
                Branch::Left => {
                    let a2 = step(a, st, chooser, bounds, events)?;
                    Ok(Cmd::new(CmdKind::Par(Box::new(a2), b.clone()), c.line))
                }
                Branch::Right => {
                    let b2 = step(b, st, chooser, bounds, events)?;
                    Ok(Cmd::new(CmdKind::Par(a.clone(), Box::new(b2)), c.line))
                }
            },
        },
        CmdKind::Atomic(body) => {
            let store_before = st.store.clone();
            let heap_before = st.heap.clone();
            run_atomic_body(body, st, c.line, bounds, events)?;
            events.push(AtomEvent {
                line: c.line,
                store_before,
                heap_before,
                store_after: st.store.clone(),
                heap_after: st.heap.clone(),
            });
            Ok(Cmd::skip())
        }
    }
}

/// Runs an atomic body to completion as part of a single step. Bodies are
/// parallel-free, so no schedule choices are consumed.
fn run_atomic_body(
    body: &Cmd,
    st: &mut State,
    line: u32,
    bounds: &Bounds,
    events: &mut Vec<AtomEvent>,
) -> Result<(), Abort> {
    let mut c = body.clone();
    let mut chooser = Chooser::new(&[]);
    let mut inner: u64 = 0;
    while !c.is_skip() {
        if inner >= bounds.max_steps {
            return Err(Abort {
                line,
                reason: AbortReason::AtomicFuel,
            });
        }
        c = step(&c, st, &mut chooser, bounds, events)?;
        inner += 1;
    }
    Ok(())
}

/// A single nondeterministic step: the branch choices it consumed (empty
/// when no scheduling decision was involved) and the result.
type Successor = (Vec<Branch>, Result<(Cmd, State), Abort>);

fn successors(c: &Cmd, st: &State, bounds: &Bounds) -> Vec<Successor> {
    match &c.kind {
        CmdKind::Par(a, b) => match (a.is_skip(), b.is_skip()) {
            (false, false) => {
                let mut out = Vec::new();
                for (mut chs, res) in successors(a, st, bounds) {
                    chs.insert(0, Branch::Left);
                    out.push((
                        chs,
                        res.map(|(a2, st2)| {
                            (
                                Cmd::new(CmdKind::Par(Box::new(a2), b.clone()), c.line),
                                st2,
                            )
                        }),
                    ));
                }
                for (mut chs, res) in successors(b, st, bounds) {
                    chs.insert(0, Branch::Right);
                    out.push((
                        chs,
                        res.map(|(b2, st2)| {
                            (
                                Cmd::new(CmdKind::Par(a.clone(), Box::new(b2)), c.line),
                                st2,
                            )
                        }),
                    ));
                }
                out
            }
            _ => {
                // At most one branch is live (or none): deterministic, no
                // choice recorded — mirrors `step`.
                det_successor(c, st, bounds)
            }
        },
        CmdKind::Seq(a, _) if !a.is_skip() => {
            let CmdKind::Seq(_, b) = &c.kind else { unreachable!() };
            successors(a, st, bounds)
                .into_iter()
                .map(|(chs, res)| {
                    (
                        chs,
                        res.map(|(a2, st2)| {
                            (Cmd::new(CmdKind::Seq(Box::new(a2), b.clone()), c.line), st2)
                        }),
                    )
                })
                .collect()
        }
        _ => det_successor(c, st, bounds),
    }
}

fn det_successor(c: &Cmd, st: &State, bounds: &Bounds) -> Vec<Successor> {
    if c.is_skip() {
        return Vec::new();
    }
    let mut st2 = st.clone();
    let mut chooser = Chooser::new(&[]);
    let mut events = Vec::new();
    match step(c, &mut st2, &mut chooser, bounds, &mut events) {
        Ok(c2) => vec![(Vec::new(), Ok((c2, st2)))],
        Err(a) => vec![(Vec::new(), Err(a))],
    }
}

/// Result of exhaustive schedule exploration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Explored {
    /// Terminal states, each with the first schedule (in breadth-first,
    /// left-before-right order) that reaches it.
    pub terminals: Vec<(State, Schedule)>,
    /// Aborts, each with a schedule that triggers it.
    pub aborts: Vec<(Abort, Schedule)>,
    /// True when every reachable configuration was visited within bounds.
    pub complete: bool,
    /// Number of distinct configurations visited.
    pub configs: usize,
}

/// Enumerates all configurations reachable under any schedule,
/// breadth-first with left-before-right tie-breaking, memoizing on
/// (residual command, state). Loops over a finite state space terminate;
/// growth past `bounds.max_configs` marks the result incomplete.
pub fn explore(cmd: &Cmd, state: &State, bounds: &Bounds) -> Explored {
    let mut seen: HashSet<(Cmd, State)> = HashSet::new();
    let mut queue: VecDeque<(Cmd, State, Schedule)> = VecDeque::new();
    let mut terminals: Vec<(State, Schedule)> = Vec::new();
    let mut terminal_seen: HashSet<State> = HashSet::new();
    let mut aborts: Vec<(Abort, Schedule)> = Vec::new();
    let mut abort_seen: HashSet<Abort> = HashSet::new();
    let mut complete = true;

    seen.insert((cmd.clone(), state.clone()));
    queue.push_back((cmd.clone(), state.clone(), Vec::new()));

    while let Some((c, st, sched)) = queue.pop_front() {
        if c.is_skip() {
            if terminal_seen.insert(st.clone()) {
                terminals.push((st, sched));
            }
            continue;
        }
        if seen.len() as u64 >= bounds.max_configs {
            complete = false;
            break;
        }
        for (chs, res) in successors(&c, &st, bounds) {
            let mut next_sched = sched.clone();
            next_sched.extend(chs);
            match res {
                Ok((c2, st2)) => {
                    if next_sched.len() as u64 > bounds.max_steps {
                        complete = false;
                        continue;
                    }
                    if seen.insert((c2.clone(), st2.clone())) {
                        queue.push_back((c2, st2, next_sched));
                    }
                }
                Err(a) => {
                    if abort_seen.insert(a.clone()) {
                        aborts.push((a, next_sched));
                    }
                }
            }
        }
    }
    // Deterministic output order regardless of hash iteration.
    terminals.sort();
    aborts.sort_by(|a, b| (format!("{:?}", a.0), &a.1).cmp(&(format!("{:?}", b.0), &b.1)));
    Explored {
        terminals,
        aborts,
        complete,
        configs: seen.len(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_program;

    fn run_src(src: &str, sched: &[Branch]) -> RunResult {
        let p = parse_program(src).unwrap();
        run(&p.to_cmd(), &State::default(), sched, &Bounds::default())
    }

    fn int_var(st: &State, x: &str) -> i64 {
        st.store[x].as_int()
    }

    #[test]
    fn straight_line_execution() {
        let r = run_src("x := 2\ny := x + 3\nif y == 5 { z := 1 } else { z := 0 }", &[]);
        let st = r.terminal().unwrap();
        assert_eq!(int_var(st, "z"), 1);
    }

    #[test]
    fn while_loops_run_to_completion() {
        let r = run_src("n := 4\ns := 0\nwhile n > 0 {\n  s := s + n\n  n := n - 1\n}", &[]);
        assert_eq!(int_var(r.terminal().unwrap(), "s"), 10);
    }

    #[test]
    fn allocation_picks_lowest_free_location() {
        let r = run_src("a := alloc(10)\nb := alloc(20)\n[a] := 11\nx := [b]", &[]);
        let st = r.terminal().unwrap();
        assert_eq!(int_var(st, "a"), 0);
        assert_eq!(int_var(st, "b"), 1);
        assert_eq!(st.heap[&0], Value::Int(11));
        assert_eq!(int_var(st, "x"), 20);
    }

    #[test]
    fn unallocated_access_aborts() {
        let r = run_src("x := [3]", &[]);
        match r.outcome {
            Outcome::Aborted(a) => {
                assert_eq!(
                    a.reason,
                    AbortReason::Unallocated {
                        loc: 3,
                        write: false
                    }
                );
                assert_eq!(a.line, 1);
            }
            other => panic!("expected abort, got {other:?}"),
        }
    }

    #[test]
    fn schedule_decides_race_winner() {
        let src = "x := 0\n( x := 1 || x := 2 )";
        let left_first = run_src(src, &schedule_from_str("LR").unwrap());
        let right_first = run_src(src, &schedule_from_str("RL").unwrap());
        assert_eq!(int_var(left_first.terminal().unwrap(), "x"), 2);
        assert_eq!(int_var(right_first.terminal().unwrap(), "x"), 1);
    }

    #[test]
    fn exhausted_schedule_alternates_from_left() {
        // Two two-step branches and no schedule: L R L R order.
        let src = "( a := 1; b := a + 1 || c := 10; d := c + 1 )";
        let r = run_src(src, &[]);
        let st = r.terminal().unwrap();
        assert_eq!(int_var(st, "b"), 2);
        assert_eq!(int_var(st, "d"), 11);
    }

    #[test]
    fn atomic_blocks_run_in_one_step() {
        let plain = run_src("x := 1\ny := 2\nz := 3", &[]);
        let atomic = run_src("atomic {\n  x := 1\n  y := 2\n  z := 3\n}", &[]);
        assert!(atomic.steps < plain.steps);
        assert_eq!(atomic.steps, 1);
        assert_eq!(
            atomic.terminal().unwrap().store,
            plain.terminal().unwrap().store
        );
        assert_eq!(atomic.atomic_events.len(), 1);
        assert_eq!(atomic.atomic_events[0].line, 1);
    }

    #[test]
    fn atomic_snapshots_capture_the_change() {
        let r = run_src("a := alloc(5)\natomic {\n  t := [a]\n  [a] := t + 1\n}", &[]);
        assert!(r.terminal().is_some());
        let ev = &r.atomic_events[0];
        assert_eq!(ev.heap_before[&0], Value::Int(5));
        assert_eq!(ev.heap_after[&0], Value::Int(6));
    }

    #[test]
    fn explore_finds_every_race_outcome() {
        let p = parse_program("x := 0\n( x := 1 || x := 2 )").unwrap();
        let ex = explore(&p.to_cmd(), &State::default(), &Bounds::default());
        assert!(ex.complete);
        let xs: Vec<i64> = ex
            .terminals
            .iter()
            .map(|(st, _)| int_var(st, "x"))
            .collect();
        assert_eq!(xs, vec![1, 2]);
    }

    #[test]
    fn explore_schedules_replay_to_their_terminals() {
        let src = "x := 0\ny := 0\n( x := x + 1; y := y + x || x := 2 * x; y := y - x )";
        let p = parse_program(src).unwrap();
        let b = Bounds::default();
        let ex = explore(&p.to_cmd(), &State::default(), &b);
        assert!(ex.complete);
        assert!(ex.terminals.len() > 1);
        for (st, sched) in &ex.terminals {
            let r = run(&p.to_cmd(), &State::default(), sched, &b);
            assert_eq!(r.terminal().unwrap(), st, "schedule {}", schedule_to_string(sched));
        }
    }

    #[test]
    fn explore_interleaving_count_matches_closed_form() {
        // Two branches of 2 and 2 independent steps: C(4,2) = 6 interleavings,
        // but terminal stores coincide; distinct terminals = 1.
        let src = "( a := 1; b := 2 || c := 3; d := 4 )";
        let p = parse_program(src).unwrap();
        let ex = explore(&p.to_cmd(), &State::default(), &Bounds::default());
        assert!(ex.complete);
        assert_eq!(ex.terminals.len(), 1);
    }

    #[test]
    fn infinite_loops_with_finite_state_space_terminate_exploration() {
        let p = parse_program("while true { skip }").unwrap();
        let ex = explore(&p.to_cmd(), &State::default(), &Bounds::default());
        assert!(ex.complete);
        assert!(ex.terminals.is_empty());
    }

    #[test]
    fn unbounded_state_growth_is_reported_incomplete() {
        let p = parse_program("while true { x := x + 1 }").unwrap();
        let b = Bounds {
            max_configs: 500,
            ..Bounds::default()
        };
        let ex = explore(&p.to_cmd(), &State::default(), &b);
        assert!(!ex.complete);
    }

    #[test]
    fn aborts_are_found_by_exploration() {
        let p = parse_program("( [9] := 1 || skip )").unwrap();
        let ex = explore(&p.to_cmd(), &State::default(), &Bounds::default());
        assert_eq!(ex.aborts.len(), 1);
        assert!(matches!(
            ex.aborts[0].0.reason,
            AbortReason::Unallocated { loc: 9, write: true }
        ));
    }

    #[test]
    fn schedule_strings_roundtrip() {
        let s = schedule_from_str("LRRL").unwrap();
        assert_eq!(schedule_to_string(&s), "LRRL");
        assert!(schedule_from_str("LX").is_err());
    }
}
