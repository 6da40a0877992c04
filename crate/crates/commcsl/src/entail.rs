//! Bounded entailment between relational assertions.
//!
//! `P ⊨ Q` means every state pair satisfying `P` satisfies `Q`. The check
//! enumerates all stores over the declared variables within bounds; heaps
//! are not enumerated blindly — only `P`'s model set matters, so each of
//! its entries is tested for coverage by `Q`'s model set:
//!
//! - a definite **counterexample** is a concrete satisfying state pair of
//!   `P` (a model skeleton, possibly extended by a probe when `P` admits
//!   extra heap) on which `Q` evaluates to false;
//! - **holds** requires every `P` entry to sit inside a single `Q` entry
//!   of at least the same slack, which is sound for arbitrary heaps, not
//!   just bounded ones;
//! - anything else — inexact model sets, coverage that cannot be shown
//!   entry-wise — is reported as **unknown**, never guessed.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::assertion::{
    mem_atom, mem_side, models_for, sat_pair, Assertion, Atom, SatCtx, Slack, StatePair, Truth,
};
use crate::classify::perm_probe;
use crate::expr::enumerate_stores;
use crate::frac::Frac;
use crate::heap::ExtHeap;
use crate::value::{Multiset, Type};

/// Outcome of an entailment query.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EntailVerdict {
    Holds,
    Fails { witness: Box<StatePair> },
    Unknown { reason: String },
}

impl EntailVerdict {
    pub fn holds(&self) -> bool {
        matches!(self, EntailVerdict::Holds)
    }
}

impl std::fmt::Display for EntailVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EntailVerdict::Holds => write!(f, "holds"),
            EntailVerdict::Fails { witness } => {
                write!(
                    f,
                    "fails at stores {:?} / {:?}, heaps {} / {}",
                    witness.s1, witness.s2, witness.h1, witness.h2
                )
            }
            EntailVerdict::Unknown { reason } => write!(f, "unknown: {reason}"),
        }
    }
}

/// Probe extensions that witness "extra heap": a permission cell, a
/// shared-guard fragment, and a unique-guard slot. Only extensions that
/// stay inside the atom's denotation are used.
fn probes(h: &ExtHeap) -> Vec<ExtHeap> {
    let mut out = vec![perm_probe(h)];
    let quarter = Frac::new(1, 4).unwrap();
    let mut sg = h.clone();
    match &mut sg.sguard {
        None => {
            sg.sguard = Some((quarter, Multiset::new()));
            out.push(sg);
        }
        Some((r, _)) => {
            if let Some(bumped) = r.checked_add(&quarter) {
                *r = bumped;
                out.push(sg);
            }
        }
    }
    if let Some(i) = h.uguard.iter().position(|s| s.is_none()) {
        let mut ug = h.clone();
        ug.uguard[i] = Some(Vec::new());
        out.push(ug);
    }
    out
}

/// Concrete state pairs drawn from one model entry: the skeleton pair
/// itself plus, for entries that absorb extra heap, every probed extension
/// that stays inside the entry.
fn sample_pairs(atom: &Atom) -> Vec<(ExtHeap, ExtHeap)> {
    let mut out = vec![(atom.sk1.clone(), atom.sk2.clone())];
    if atom.slack == Slack::Exact {
        return out;
    }
    let c1: Vec<ExtHeap> = std::iter::once(atom.sk1.clone())
        .chain(probes(&atom.sk1))
        .collect();
    let c2: Vec<ExtHeap> = std::iter::once(atom.sk2.clone())
        .chain(probes(&atom.sk2))
        .collect();
    for h1 in &c1 {
        for h2 in &c2 {
            if mem_atom(h1, h2, atom) {
                out.push((h1.clone(), h2.clone()));
            }
        }
    }
    out.dedup();
    out
}

/// Does some single entry of `q_atoms` contain the whole denotation of `p`?
fn covered(p: &Atom, q_atoms: &std::collections::BTreeSet<Atom>) -> bool {
    q_atoms.iter().any(|q| {
        mem_side(&p.sk1, &q.sk1, q.slack)
            && mem_side(&p.sk2, &q.sk2, q.slack)
            && p.slack <= q.slack
    })
}

/// Checks `p ⊨ q` over all stores assigning `vars` values within bounds.
/// `vars` must cover the free variables of both assertions.
pub fn check_entailment(
    ctx: &SatCtx,
    vars: &BTreeMap<String, Type>,
    p: &Assertion,
    q: &Assertion,
) -> EntailVerdict {
    let slots = ctx.spec.map_or(0, |sp| sp.unique.len());
    let stores = match enumerate_stores(vars, ctx.bounds) {
        Ok(s) => s,
        Err(e) => {
            return EntailVerdict::Unknown {
                reason: format!("domain too large: {}", e.ty),
            }
        }
    };

    let universal = Atom {
        sk1: ExtHeap::unit(slots),
        sk2: ExtHeap::unit(slots),
        slack: Slack::AnyExtra,
    };

    let mut inexact = false;
    for s1 in &stores {
        for s2 in &stores {
            let mp = models_for(ctx, p, s1, s2, slots);
            let mq = models_for(ctx, q, s1, s2, slots);

            // Everything satisfies `q` here; nothing to check even if
            // `p`'s models are inexact.
            if mq.atoms.contains(&universal) {
                continue;
            }
            inexact |= mp.unknown || mq.unknown;

            for atom in &mp.atoms {
                if covered(atom, &mq.atoms) {
                    continue;
                }
                // Not contained in any single entry: hunt for a concrete
                // counterexample among the entry's sample states.
                for (h1, h2) in sample_pairs(atom) {
                    let pair = StatePair::new(s1.clone(), h1, s2.clone(), h2);
                    debug_assert_ne!(sat_pair(ctx, p, &pair), Truth::False);
                    if sat_pair(ctx, q, &pair) == Truth::False {
                        return EntailVerdict::Fails {
                            witness: Box::new(pair),
                        };
                    }
                }
                inexact = true;
            }
        }
    }

    if inexact {
        EntailVerdict::Unknown {
            reason: "some satisfying states could not be covered or refuted within bounds"
                .to_string(),
        }
    } else {
        EntailVerdict::Holds
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assertion::{check_assertion, parse_assertion};
    use crate::bounds::Bounds;
    use crate::expr::TyCtx;
    use crate::rspec::tests::small_bounds;
    use crate::value::Value;

    fn run(p: &str, q: &str, bounds: &Bounds) -> EntailVerdict {
        let p = parse_assertion(p).unwrap();
        let q = parse_assertion(q).unwrap();
        let mut tc = TyCtx::new();
        let p = check_assertion(&mut tc, &p, None).unwrap();
        let q = check_assertion(&mut tc, &q, None).unwrap();
        let ctx = SatCtx { spec: None, bounds };
        check_entailment(&ctx, &tc.typed_vars(), &p, &q)
    }

    #[test]
    fn every_assertion_entails_itself() {
        let bounds = small_bounds();
        for src in [
            "emp",
            "low(x)",
            "acc(x, 1/2, v) ** low(v)",
            "x == 0 ==> acc(0, 1, 1)",
            "exists v: Int :: acc(x, v)",
        ] {
            assert_eq!(run(src, src, &bounds), EntailVerdict::Holds, "{src}");
        }
    }

    #[test]
    fn lowness_is_closed_under_sums_but_not_projections() {
        let bounds = small_bounds();
        assert_eq!(
            run("low(x) ** low(y)", "low(x + y)", &bounds),
            EntailVerdict::Holds
        );

        let EntailVerdict::Fails { witness } =
            run("low(x + y)", "low(x)", &bounds)
        else {
            panic!("expected a counterexample");
        };
        // The canonical counterexample: equal sums, different summands.
        assert_eq!(witness.s1["x"], Value::Int(0));
        assert_eq!(witness.s1["y"], Value::Int(1));
        assert_eq!(witness.s2["x"], Value::Int(1));
        assert_eq!(witness.s2["y"], Value::Int(0));
    }

    #[test]
    fn permission_splitting_entails_both_ways() {
        let bounds = small_bounds();
        let whole = "acc(x, 1, v)";
        let halves = "acc(x, 1/2, v) ** acc(x, 1/2, v)";
        assert_eq!(run(whole, halves, &bounds), EntailVerdict::Holds);
        assert_eq!(run(halves, whole, &bounds), EntailVerdict::Holds);
    }

    #[test]
    fn dropping_or_adding_heap_is_caught() {
        let bounds = small_bounds();
        // A cell is not the empty heap.
        let v = run("acc(x, 1, v)", "emp", &bounds);
        let EntailVerdict::Fails { witness } = v else {
            panic!("expected a counterexample");
        };
        assert_eq!(witness.h1.perm.len(), 1);

        // Absorbing arbitrary extra heap is fine in one direction only.
        assert_eq!(
            run("acc(x, 1, v)", "acc(x, 1, v) ** true", &bounds),
            EntailVerdict::Holds
        );
        let v = run("acc(x, 1, v) ** true", "acc(x, 1, v)", &bounds);
        assert!(matches!(v, EntailVerdict::Fails { .. }), "{v}");
    }

    #[test]
    fn guard_freedom_is_not_implied_by_truth() {
        let bounds = small_bounds();
        let EntailVerdict::Fails { witness } = run("true", "noguard(true)", &bounds) else {
            panic!("expected a counterexample");
        };
        let guarded = |h: &ExtHeap| h.sguard.is_some() || h.uguard.iter().any(|s| s.is_some());
        assert!(guarded(&witness.h1) || guarded(&witness.h2), "{witness:?}");
    }

    #[test]
    fn unresolvable_premise_reports_unknown() {
        let bounds = small_bounds();
        // Without a specification the premise cannot be evaluated.
        let p = parse_assertion("allpre({|(0, 0),|})").unwrap();
        let q = parse_assertion("emp").unwrap();
        let mut tc = TyCtx::new();
        let p = check_assertion(&mut tc, &p, None).unwrap();
        let q = check_assertion(&mut tc, &q, None).unwrap();
        let ctx = SatCtx {
            spec: None,
            bounds: &bounds,
        };
        let v = check_entailment(&ctx, &tc.typed_vars(), &p, &q);
        assert!(matches!(v, EntailVerdict::Unknown { .. }), "{v}");
    }

    #[test]
    fn verdicts_are_stable_when_bounds_shrink() {
        // Holding at wider bounds must not hide a failure at narrower ones:
        // the narrower domain is a subset of the wider one.
        let wide = small_bounds();
        let narrow = Bounds {
            int_min: 0,
            int_max: 1,
            ..small_bounds()
        };
        for (p, q) in [
            ("low(x) ** low(y)", "low(x + y)"),
            ("acc(x, 1, v)", "acc(x, 1, v) ** true"),
        ] {
            assert_eq!(run(p, q, &wide), EntailVerdict::Holds);
            assert_eq!(run(p, q, &narrow), EntailVerdict::Holds);
        }
    }
}
