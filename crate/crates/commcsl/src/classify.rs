//! Bounded classification of assertions.
//!
//! Proof rules attach side conditions to assertions that are semantic
//! properties, not syntax checks:
//!
//! - **unary** — the assertion does not relate the two executions to one
//!   another: whenever each state satisfies it paired with itself, any
//!   mixed pair satisfies it too.
//! - **precise** — for any stores, at most one sub-heap pair of any heap
//!   pair satisfies it.
//! - **unambiguous in `x`** — for fixed underlying states, the values of
//!   `x` making it true are uniquely determined (per execution, jointly).
//!
//! Each classifier runs a sound syntactic fast path where one exists, then
//! an exhaustive check over the bounded store domain, reasoning directly on
//! the finite model sets that satisfaction computes. Verdicts are
//! three-valued: `Fails` always carries a concrete, re-checkable witness,
//! and `Unknown` is returned when an enumeration cap is hit or a model set
//! is inexact — never a guess.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::assertion::{
    mem_atom, mem_side, models_for, ms_contains, sat_pair, Assertion, Atom, SatCtx, Slack,
    StatePair, Truth,
};
use crate::expr::{enumerate_stores, Store};
use crate::frac::Frac;
use crate::heap::ExtHeap;
use crate::value::{enumerate_type, Multiset, Type, Value};

/// Which property to check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClassifyKind {
    Unary,
    Precise,
    Unambiguous(String),
}

impl std::fmt::Display for ClassifyKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassifyKind::Unary => write!(f, "unary"),
            ClassifyKind::Precise => write!(f, "precise"),
            ClassifyKind::Unambiguous(x) => write!(f, "unambiguous({x})"),
        }
    }
}

/// A concrete state pair refuting a classification, plus a sentence saying
/// what it demonstrates.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ClassifyWitness {
    pub s1: Store,
    pub h1: ExtHeap,
    pub s2: Store,
    pub h2: ExtHeap,
    pub detail: String,
}

/// Outcome of a classification query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ClassifyVerdict {
    Holds,
    Fails { witness: Box<ClassifyWitness> },
    Unknown { reason: String },
}

impl ClassifyVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, ClassifyVerdict::Holds)
    }

    fn unknown(reason: impl Into<String>) -> ClassifyVerdict {
        ClassifyVerdict::Unknown {
            reason: reason.into(),
        }
    }
}

impl std::fmt::Display for ClassifyVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ClassifyVerdict::Holds => write!(f, "holds"),
            ClassifyVerdict::Fails { witness } => write!(f, "fails: {}", witness.detail),
            ClassifyVerdict::Unknown { reason } => write!(f, "unknown: {reason}"),
        }
    }
}

/// Checks the given property of `a` exhaustively over all stores assigning
/// `vars` values within bounds. `vars` must cover the assertion's free
/// variables (for `Unambiguous(x)`, including `x`).
pub fn classify(
    ctx: &SatCtx,
    vars: &BTreeMap<String, Type>,
    a: &Assertion,
    kind: &ClassifyKind,
) -> ClassifyVerdict {
    match kind {
        ClassifyKind::Unary => classify_unary(ctx, vars, a),
        ClassifyKind::Precise => classify_precise(ctx, vars, a),
        ClassifyKind::Unambiguous(x) => classify_unambiguous(ctx, vars, a, x),
    }
}

fn slots_of(ctx: &SatCtx) -> usize {
    ctx.spec.map_or(0, |sp| sp.unique.len())
}

// ---------------------------------------------------------------------------
// Heap-order helpers
// ---------------------------------------------------------------------------

/// Result of looking for the least common extension of two heaps in the
/// composition order.
enum Join {
    /// The least upper bound.
    Lub(ExtHeap),
    /// Upper bounds exist, but none is least (shared-guard fractions are
    /// incomparable below 1); the carried heap is one canonical upper
    /// bound.
    NoLub(ExtHeap),
    /// No common extension exists.
    Incompatible,
}

fn max_union(a: &Multiset, b: &Multiset) -> Multiset {
    let mut out = a.clone();
    for (v, n) in b.counts() {
        for _ in a.count(v)..n {
            out.insert(v.clone());
        }
    }
    out
}

/// Least (or canonical) common extension of two extended heaps under the
/// sub-heap order `x ⊑ y  iff  ∃z. x + z = y`.
fn join_heap(a: &ExtHeap, b: &ExtHeap) -> Join {
    let mut perm = a.perm.clone();
    for (loc, (qb, vb)) in &b.perm {
        match perm.get_mut(loc) {
            None => {
                perm.insert(*loc, (qb.clone(), vb.clone()));
            }
            Some((qa, va)) => {
                if va != vb {
                    return Join::Incompatible;
                }
                if *qb > *qa {
                    *qa = qb.clone();
                }
            }
        }
    }

    let mut uguard = Vec::with_capacity(a.uguard.len());
    for (sa, sb) in a.uguard.iter().zip(&b.uguard) {
        match (sa, sb) {
            (None, x) | (x, None) => uguard.push(x.clone()),
            (Some(x), Some(y)) => {
                if x == y {
                    uguard.push(Some(x.clone()));
                } else {
                    return Join::Incompatible;
                }
            }
        }
    }

    let mut least = true;
    let sguard = match (&a.sguard, &b.sguard) {
        (None, x) | (x, None) => x.clone(),
        (Some((ra, ma)), Some((rb, mb))) => {
            if ra == rb && ma == mb {
                Some((ra.clone(), ma.clone()))
            } else if ra < rb && ms_contains(mb, ma) {
                Some((rb.clone(), mb.clone()))
            } else if rb < ra && ms_contains(ma, mb) {
                Some((ra.clone(), ma.clone()))
            } else {
                // Any common extension needs a strictly larger fraction
                // than both sides carry; there is no least one, and none at
                // all once the larger fraction is already 1.
                let rmax = ra.max(rb);
                if rmax.is_one() {
                    return Join::Incompatible;
                }
                least = false;
                Some((rmax.midpoint_to_one(), max_union(ma, mb)))
            }
        }
    };

    let h = ExtHeap {
        perm,
        sguard,
        uguard,
    };
    if least {
        Join::Lub(h)
    } else {
        Join::NoLub(h)
    }
}

/// An element of an atom's diagonal — a heap `h` with `(h, h)` in the
/// atom's denotation — preferring the least one. The `bool` says whether
/// the element is least.
fn diagonal_element(atom: &Atom) -> Option<(ExtHeap, bool)> {
    if atom.slack == Slack::Exact {
        return (atom.sk1 == atom.sk2).then(|| (atom.sk1.clone(), true));
    }
    let (h, least) = match join_heap(&atom.sk1, &atom.sk2) {
        Join::Lub(h) => (h, true),
        Join::NoLub(h) => (h, false),
        Join::Incompatible => return None,
    };
    (mem_side(&h, &atom.sk1, atom.slack) && mem_side(&h, &atom.sk2, atom.slack))
        .then_some((h, least))
}

/// A common element of two same-side atom denotations, if any.
fn intersection_element(sk_a: &ExtHeap, sl_a: Slack, sk_b: &ExtHeap, sl_b: Slack) -> Option<ExtHeap> {
    if sl_a == Slack::Exact {
        return mem_side(sk_a, sk_b, sl_b).then(|| sk_a.clone());
    }
    if sl_b == Slack::Exact {
        return mem_side(sk_b, sk_a, sl_a).then(|| sk_b.clone());
    }
    let h = match join_heap(sk_a, sk_b) {
        Join::Lub(h) | Join::NoLub(h) => h,
        Join::Incompatible => return None,
    };
    (mem_side(&h, sk_a, sl_a) && mem_side(&h, sk_b, sl_b)).then_some(h)
}

/// Extends a heap by a permission at a location the heap does not use —
/// a second, strictly larger element of any slack atom's denotation.
pub(crate) fn perm_probe(h: &ExtHeap) -> ExtHeap {
    let loc = h.perm.keys().max().map_or(0, |l| l + 1);
    let mut out = h.clone();
    out.perm.insert(loc, (Frac::half(), Value::Int(0)));
    out
}

// ---------------------------------------------------------------------------
// Unary
// ---------------------------------------------------------------------------

/// Assertions built without the cross-execution atoms are unary outright:
/// `low`, the precondition-matching forms, and implication (whose condition
/// must evaluate equally in both executions) are the only constructs
/// relating the two sides.
fn syntactically_unary(a: &Assertion) -> bool {
    match a {
        Assertion::Low(_) | Assertion::PreFor(..) | Assertion::Implies(..) => false,
        Assertion::Emp
        | Assertion::Pure(_)
        | Assertion::PointsTo(..)
        | Assertion::SharedGuard(..)
        | Assertion::UniqueGuard(..) => true,
        Assertion::Star(p, q) | Assertion::And(p, q) => {
            syntactically_unary(p) && syntactically_unary(q)
        }
        Assertion::Exists(_, _, p) | Assertion::NoGuard(p) => syntactically_unary(p),
    }
}

fn classify_unary(
    ctx: &SatCtx,
    vars: &BTreeMap<String, Type>,
    a: &Assertion,
) -> ClassifyVerdict {
    if syntactically_unary(a) {
        return ClassifyVerdict::Holds;
    }
    let slots = slots_of(ctx);
    let stores = match enumerate_stores(vars, ctx.bounds) {
        Ok(s) => s,
        Err(e) => return ClassifyVerdict::unknown(format!("domain too large: {}", e.ty)),
    };

    let mut inexact = false;
    for s1 in &stores {
        let self1 = models_for(ctx, a, s1, s1, slots);
        inexact |= self1.unknown;
        for s2 in &stores {
            let self2 = models_for(ctx, a, s2, s2, slots);
            let cross = models_for(ctx, a, s1, s2, slots);
            inexact |= self2.unknown || cross.unknown;

            for a1 in &self1.atoms {
                let Some((d1, least1)) = diagonal_element(a1) else {
                    continue;
                };
                for a2 in &self2.atoms {
                    let Some((d2, least2)) = diagonal_element(a2) else {
                        continue;
                    };
                    let covered_concretely =
                        cross.atoms.iter().any(|c| mem_atom(&d1, &d2, c));
                    if !covered_concretely && !cross.unknown {
                        let pair = StatePair::new(s1.clone(), d1, s2.clone(), d2);
                        debug_assert_eq!(sat_pair(ctx, a, &pair), Truth::False);
                        return ClassifyVerdict::Fails {
                            witness: Box::new(ClassifyWitness {
                                detail: "each state satisfies the assertion paired with \
                                         itself, but the mixed pair does not"
                                    .to_string(),
                                s1: pair.s1,
                                h1: pair.h1,
                                s2: pair.s2,
                                h2: pair.h2,
                            }),
                        };
                    }
                    // For a definite yes the whole (upward-closed) diagonal
                    // product must sit inside one cross entry, not just the
                    // least element.
                    let covered_fully = least1
                        && least2
                        && cross.atoms.iter().any(|c| {
                            mem_side(&d1, &c.sk1, c.slack)
                                && mem_side(&d2, &c.sk2, c.slack)
                                && a1.slack <= c.slack
                                && a2.slack <= c.slack
                        });
                    if !covered_fully {
                        inexact = true;
                    }
                }
            }
        }
    }

    if inexact {
        ClassifyVerdict::unknown("could not cover all self-satisfying pairs within bounds")
    } else {
        ClassifyVerdict::Holds
    }
}

// ---------------------------------------------------------------------------
// Precise
// ---------------------------------------------------------------------------

/// Compositions of exact spatial atoms have at most one model per store
/// pair, hence are precise. Pure conjuncts, implication, and existentials
/// are excluded: they admit extra heap or several models.
fn syntactically_precise(a: &Assertion) -> bool {
    match a {
        Assertion::Emp
        | Assertion::PointsTo(..)
        | Assertion::SharedGuard(..)
        | Assertion::UniqueGuard(..) => true,
        Assertion::Star(p, q) | Assertion::And(p, q) => {
            syntactically_precise(p) && syntactically_precise(q)
        }
        Assertion::NoGuard(p) => syntactically_precise(p),
        _ => false,
    }
}

fn classify_precise(
    ctx: &SatCtx,
    vars: &BTreeMap<String, Type>,
    a: &Assertion,
) -> ClassifyVerdict {
    if syntactically_precise(a) {
        return ClassifyVerdict::Holds;
    }
    let slots = slots_of(ctx);
    let stores = match enumerate_stores(vars, ctx.bounds) {
        Ok(s) => s,
        Err(e) => return ClassifyVerdict::unknown(format!("domain too large: {}", e.ty)),
    };

    let mut inexact = false;
    for s1 in &stores {
        for s2 in &stores {
            let m = models_for(ctx, a, s1, s2, slots);
            inexact |= m.unknown;

            // A model with room for extra heap yields two nested
            // satisfying sub-heap pairs immediately.
            if let Some(atom) = m.atoms.iter().find(|at| at.slack != Slack::Exact) {
                let h1 = perm_probe(&atom.sk1);
                let h2 = perm_probe(&atom.sk2);
                debug_assert!(mem_atom(&h1, &h2, atom));
                return ClassifyVerdict::Fails {
                    witness: Box::new(ClassifyWitness {
                        detail: format!(
                            "both the whole heap pair and the sub-pair ({}, {}) satisfy \
                             the assertion",
                            atom.sk1, atom.sk2
                        ),
                        s1: s1.clone(),
                        h1,
                        s2: s2.clone(),
                        h2,
                    }),
                };
            }

            // All models exact: imprecision means two distinct models
            // embed into a common heap pair.
            let atoms: Vec<&Atom> = m.atoms.iter().collect();
            for (i, x) in atoms.iter().enumerate() {
                for y in atoms.iter().skip(i + 1) {
                    let j1 = match join_heap(&x.sk1, &y.sk1) {
                        Join::Lub(h) | Join::NoLub(h) => h,
                        Join::Incompatible => continue,
                    };
                    let j2 = match join_heap(&x.sk2, &y.sk2) {
                        Join::Lub(h) | Join::NoLub(h) => h,
                        Join::Incompatible => continue,
                    };
                    return ClassifyVerdict::Fails {
                        witness: Box::new(ClassifyWitness {
                            detail: format!(
                                "sub-heap pairs ({}, {}) and ({}, {}) both satisfy the \
                                 assertion inside one heap pair",
                                x.sk1, x.sk2, y.sk1, y.sk2
                            ),
                            s1: s1.clone(),
                            h1: j1,
                            s2: s2.clone(),
                            h2: j2,
                        }),
                    };
                }
            }
        }
    }

    if inexact {
        ClassifyVerdict::unknown("model sets were inexact within bounds")
    } else {
        ClassifyVerdict::Holds
    }
}

// ---------------------------------------------------------------------------
// Unambiguous
// ---------------------------------------------------------------------------

fn classify_unambiguous(
    ctx: &SatCtx,
    vars: &BTreeMap<String, Type>,
    a: &Assertion,
    x: &str,
) -> ClassifyVerdict {
    let Some(x_ty) = vars.get(x) else {
        return ClassifyVerdict::unknown(format!("no type known for `{x}`"));
    };
    let x_vals = match enumerate_type(x_ty, ctx.bounds) {
        Ok(v) => v,
        Err(e) => return ClassifyVerdict::unknown(format!("domain too large: {}", e.ty)),
    };
    let mut base_vars = vars.clone();
    base_vars.remove(x);
    let stores = match enumerate_stores(&base_vars, ctx.bounds) {
        Ok(s) => s,
        Err(e) => return ClassifyVerdict::unknown(format!("domain too large: {}", e.ty)),
    };
    let slots = slots_of(ctx);

    let with = |s: &Store, v: &Value| {
        let mut t = s.clone();
        t.insert(x.to_string(), v.clone());
        t
    };

    let mut inexact = false;
    for s1 in &stores {
        for s2 in &stores {
            // Model sets per candidate value pair, in enumeration order.
            let mut cases = Vec::new();
            for v1 in &x_vals {
                for v2 in &x_vals {
                    let m = models_for(ctx, a, &with(s1, v1), &with(s2, v2), slots);
                    inexact |= m.unknown;
                    cases.push(((v1, v2), m));
                }
            }
            for (i, ((v1, v2), m)) in cases.iter().enumerate() {
                for ((w1, w2), n) in cases.iter().skip(i + 1) {
                    for p in &m.atoms {
                        for q in &n.atoms {
                            let Some(h1) =
                                intersection_element(&p.sk1, p.slack, &q.sk1, q.slack)
                            else {
                                continue;
                            };
                            let Some(h2) =
                                intersection_element(&p.sk2, p.slack, &q.sk2, q.slack)
                            else {
                                continue;
                            };
                            return ClassifyVerdict::Fails {
                                witness: Box::new(ClassifyWitness {
                                    detail: format!(
                                        "`{x}` = ({v1}, {v2}) and ({w1}, {w2}) are both \
                                         admitted by the same heap pair"
                                    ),
                                    s1: with(s1, v1),
                                    h1,
                                    s2: with(s2, v2),
                                    h2,
                                }),
                            };
                        }
                    }
                }
            }
        }
    }

    if inexact {
        ClassifyVerdict::unknown("model sets were inexact within bounds")
    } else {
        ClassifyVerdict::Holds
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assertion::{check_assertion, parse_assertion};
    use crate::bounds::Bounds;
    use crate::expr::TyCtx;
    use crate::rspec::parse_cspec;
    use crate::rspec::tests::{small_bounds, MAP_SPLIT_SPEC};
    use crate::value::Value;

    /// Parses, type-checks (inferring variable types), and classifies.
    fn run(src: &str, kind: ClassifyKind, bounds: &Bounds) -> ClassifyVerdict {
        let a = parse_assertion(src).unwrap();
        let mut tc = TyCtx::new();
        let a = check_assertion(&mut tc, &a, None).unwrap();
        let ctx = SatCtx { spec: None, bounds };
        classify(&ctx, &tc.typed_vars(), &a, &kind)
    }

    #[test]
    fn spatial_assertions_are_unary_syntactically() {
        let bounds = small_bounds();
        for src in [
            "acc(x, 1/2, v) ** acc(y, 1/2, w)",
            "sguard(1, {||}) && true",
            "exists v: Int :: acc(x, v)",
            "noguard(emp)",
        ] {
            assert_eq!(
                run(src, ClassifyKind::Unary, &bounds),
                ClassifyVerdict::Holds,
                "{src}"
            );
        }
    }

    #[test]
    fn lowness_is_not_unary_and_the_witness_replays() {
        let bounds = small_bounds();
        let ClassifyVerdict::Fails { witness } = run("low(x)", ClassifyKind::Unary, &bounds)
        else {
            panic!("expected a failure");
        };
        // The canonical counterexample: x reads 0 in one execution and 1 in
        // the other. Each state self-satisfies; the mixed pair does not.
        assert_eq!(witness.s1["x"], Value::Int(0));
        assert_eq!(witness.s2["x"], Value::Int(1));

        let a = parse_assertion("low(x)").unwrap();
        let ctx = SatCtx {
            spec: None,
            bounds: &bounds,
        };
        let own = |s: &Store, h: &ExtHeap| {
            StatePair::new(s.clone(), h.clone(), s.clone(), h.clone())
        };
        assert_eq!(sat_pair(&ctx, &a, &own(&witness.s1, &witness.h1)), Truth::True);
        assert_eq!(sat_pair(&ctx, &a, &own(&witness.s2, &witness.h2)), Truth::True);
        let mixed = StatePair::new(
            witness.s1.clone(),
            witness.h1.clone(),
            witness.s2.clone(),
            witness.h2.clone(),
        );
        assert_eq!(sat_pair(&ctx, &a, &mixed), Truth::False);
    }

    #[test]
    fn implication_and_constant_lowness_need_the_bounded_check() {
        let bounds = small_bounds();
        // The condition of `==>` must evaluate equally in both executions,
        // so even a trivial body leaves a cross-execution constraint.
        assert!(matches!(
            run("x == 1 ==> true", ClassifyKind::Unary, &bounds),
            ClassifyVerdict::Fails { .. }
        ));
        // A constant is equal in both executions regardless of state.
        assert_eq!(
            run("low(x * 0)", ClassifyKind::Unary, &bounds),
            ClassifyVerdict::Holds
        );
        assert_eq!(
            run("low(x) && x == 1", ClassifyKind::Unary, &bounds),
            ClassifyVerdict::Holds
        );
    }

    #[test]
    fn exact_spatial_chains_are_precise() {
        let bounds = small_bounds();
        assert_eq!(
            run("acc(x, 1/2, v) ** acc(y, 1, w)", ClassifyKind::Precise, &bounds),
            ClassifyVerdict::Holds
        );
        // Fixed-value points-to under an existential over the value: every
        // candidate model conflicts at the location, so still precise —
        // found by the bounded check, not the syntactic one.
        assert_eq!(
            run("exists v: Int :: acc(0, 1, v)", ClassifyKind::Precise, &bounds),
            ClassifyVerdict::Holds
        );
    }

    #[test]
    fn pure_padding_and_location_choice_break_precision() {
        let bounds = small_bounds();
        let v = run("true", ClassifyKind::Precise, &bounds);
        assert!(matches!(v, ClassifyVerdict::Fails { .. }), "{v}");

        let v = run("acc(x, 1, 0) ** true", ClassifyKind::Precise, &bounds);
        assert!(matches!(v, ClassifyVerdict::Fails { .. }), "{v}");

        // Two witness locations produce two compatible models.
        let v = run("exists l: Int :: acc(l, 1, 0)", ClassifyKind::Precise, &bounds);
        let ClassifyVerdict::Fails { witness } = v else {
            panic!("expected a failure");
        };
        assert!(
            witness.h1.perm.len().max(witness.h2.perm.len()) >= 2,
            "{witness:?}"
        );
    }

    #[test]
    fn guard_assertions_classify_with_a_specification() {
        let spec = parse_cspec(MAP_SPLIT_SPEC).unwrap();
        let bounds = small_bounds();
        let a = parse_assertion("uguard(put_low, q)").unwrap();
        let mut tc = TyCtx::new();
        let a = check_assertion(&mut tc, &a, Some(&spec)).unwrap();
        let ctx = SatCtx {
            spec: Some(&spec),
            bounds: &bounds,
        };
        let vars = tc.typed_vars();
        assert_eq!(
            classify(&ctx, &vars, &a, &ClassifyKind::Unary),
            ClassifyVerdict::Holds
        );
        assert_eq!(
            classify(&ctx, &vars, &a, &ClassifyKind::Precise),
            ClassifyVerdict::Holds
        );
    }

    #[test]
    fn heap_cells_pin_down_existential_values() {
        let bounds = small_bounds();
        assert_eq!(
            run("acc(0, 1, v)", ClassifyKind::Unambiguous("v".into()), &bounds),
            ClassifyVerdict::Holds
        );
        // Extra absorbed heap does not blur the cell's value.
        assert_eq!(
            run(
                "acc(0, 1/2, v) ** true",
                ClassifyKind::Unambiguous("v".into()),
                &bounds
            ),
            ClassifyVerdict::Holds
        );
        // An unconstrained variable is ambiguous...
        let v = run("emp", ClassifyKind::Unambiguous("v".into()), &bounds);
        assert!(matches!(v, ClassifyVerdict::Unknown { .. }), "{v}");
        // ... and so is one constrained only by an inequality.
        let a = parse_assertion("v < 2 && emp").unwrap();
        let mut tc = TyCtx::new();
        let a = check_assertion(&mut tc, &a, None).unwrap();
        let ctx = SatCtx {
            spec: None,
            bounds: &bounds,
        };
        let v = classify(&ctx, &tc.typed_vars(), &a, &ClassifyKind::Unambiguous("v".into()));
        let ClassifyVerdict::Fails { witness } = v else {
            panic!("expected a failure");
        };
        assert!(witness.detail.contains("admitted by the same heap pair"));
    }

    #[test]
    fn oversized_domains_are_reported_as_unknown() {
        let bounds = Bounds {
            max_enum: 2,
            ..small_bounds()
        };
        let v = run("low(x)", ClassifyKind::Unary, &bounds);
        assert!(matches!(v, ClassifyVerdict::Unknown { .. }), "{v}");
    }
}
