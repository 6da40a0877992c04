//! Heaps.
//!
//! Execution uses plain [`Heap`]s: integer locations mapping to values,
//! with full ownership. The program logic instead works on extended heaps
//! ([`ExtHeap`]): fractional permissions on locations plus guard state for
//! the (single) shared resource — a shared-guard part, held fractionally by
//! any number of threads, and one slot per unique action, held by at most
//! one thread. Extended heaps form a partial commutative monoid under
//! [`ExtHeap::add`]; assertions denote exact heaps and the unit is
//! [`ExtHeap::is_unit`].

use std::collections::BTreeMap;
use std::fmt;

use crate::frac::Frac;
use crate::value::{Multiset, Value};

/// Concrete heap used by the operational semantics.
pub type Heap = BTreeMap<i64, Value>;

/// The lowest nonnegative location not in use (allocation is deterministic
/// so runs are reproducible from a schedule alone).
pub fn lowest_free(h: &Heap) -> i64 {
    let mut l = 0;
    while h.contains_key(&l) {
        l += 1;
    }
    l
}

/// Extended heap: fractional points-to permissions plus guard state.
///
/// The shared guard, when present, carries a fraction and the *multiset* of
/// arguments of shared-action invocations so far: different threads'
/// invocations interleave, so only the combination (not the order) is
/// tracked, and [`ExtHeap::add`] takes the multiset union. Each unique
/// action instead has a single slot holding the *sequence* of its argument
/// history — at most one thread holds a slot, so the order is meaningful
/// and slots never combine.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize)]
pub struct ExtHeap {
    /// Location -> (permission, value). An entry's permission is in (0, 1].
    pub perm: BTreeMap<i64, (Frac, Value)>,
    /// Shared-resource guard: `None` is the absent element; otherwise a
    /// fraction in (0, 1] and the multiset of shared-action arguments.
    pub sguard: Option<(Frac, Multiset)>,
    /// One slot per unique action (in specification order); `None` is
    /// absent, `Some` holds that action's argument sequence.
    pub uguard: Vec<Option<Vec<Value>>>,
}

impl ExtHeap {
    /// The empty extended heap with `unique_slots` (all-absent) guard slots.
    pub fn unit(unique_slots: usize) -> ExtHeap {
        ExtHeap {
            perm: BTreeMap::new(),
            sguard: None,
            uguard: vec![None; unique_slots],
        }
    }

    /// Number of unique-action guard slots.
    pub fn unique_slots(&self) -> usize {
        self.uguard.len()
    }

    /// A single points-to permission and no guards.
    pub fn points_to(unique_slots: usize, loc: i64, q: Frac, v: Value) -> ExtHeap {
        let mut h = ExtHeap::unit(unique_slots);
        h.perm.insert(loc, (q, v));
        h
    }

    pub fn is_unit(&self) -> bool {
        self.perm.is_empty() && self.sguard.is_none() && self.uguard.iter().all(Option::is_none)
    }

    pub fn perm_is_empty(&self) -> bool {
        self.perm.is_empty()
    }

    pub fn uguard_all_absent(&self) -> bool {
        self.uguard.iter().all(Option::is_none)
    }

    /// Partial commutative addition. Point permissions add where the values
    /// agree and the fractions stay at most 1; shared guards add fractions
    /// and take the union of the argument multisets; each unique-action
    /// slot may be present on at most one side.
    pub fn add(&self, other: &ExtHeap) -> Option<ExtHeap> {
        if self.uguard.len() != other.uguard.len() {
            return None;
        }
        let mut perm = self.perm.clone();
        for (loc, (q2, v2)) in &other.perm {
            match perm.get_mut(loc) {
                None => {
                    perm.insert(*loc, (q2.clone(), v2.clone()));
                }
                Some((q1, v1)) => {
                    if v1 != v2 {
                        return None;
                    }
                    *q1 = q1.checked_add(q2)?;
                }
            }
        }
        let sguard = match (&self.sguard, &other.sguard) {
            (None, None) => None,
            (Some(g), None) | (None, Some(g)) => Some(g.clone()),
            (Some((q1, ms1)), Some((q2, ms2))) => {
                let q = q1.checked_add(q2)?;
                Some((q, ms1.union(ms2)))
            }
        };
        let mut uguard = Vec::with_capacity(self.uguard.len());
        for (a, b) in self.uguard.iter().zip(&other.uguard) {
            match (a, b) {
                (Some(_), Some(_)) => return None,
                (Some(m), None) | (None, Some(m)) => uguard.push(Some(m.clone())),
                (None, None) => uguard.push(None),
            }
        }
        Some(ExtHeap {
            perm,
            sguard,
            uguard,
        })
    }

    /// Removes `other` from `self`, the inverse of [`ExtHeap::add`]:
    /// returns `r` with `r + other == self`, if one exists.
    pub fn subtract(&self, other: &ExtHeap) -> Option<ExtHeap> {
        if self.uguard.len() != other.uguard.len() {
            return None;
        }
        let mut perm = self.perm.clone();
        for (loc, (q2, v2)) in &other.perm {
            let (q1, v1) = perm.get(loc)?.clone();
            if &v1 != v2 {
                return None;
            }
            match q1.checked_sub(q2) {
                Some(q) => {
                    perm.insert(*loc, (q, v1));
                }
                None if q1 == *q2 => {
                    perm.remove(loc);
                }
                None => return None,
            }
        }
        let sguard = match (&self.sguard, &other.sguard) {
            (g, None) => g.clone(),
            (None, Some(_)) => return None,
            (Some((q1, ms1)), Some((q2, ms2))) => {
                // The removed side's arguments must be contained in ours.
                if ms2.counts().any(|(v, n)| ms1.count(v) < n) {
                    return None;
                }
                let ms = ms1.diff(ms2);
                match q1.checked_sub(q2) {
                    Some(q) => Some((q, ms)),
                    None if q1 == q2 => {
                        if !ms.is_empty() {
                            return None;
                        }
                        None
                    }
                    None => return None,
                }
            }
        };
        let mut uguard = Vec::with_capacity(self.uguard.len());
        for (a, b) in self.uguard.iter().zip(&other.uguard) {
            match (a, b) {
                (x, None) => uguard.push(x.clone()),
                (Some(m1), Some(m2)) if m1 == m2 => uguard.push(None),
                _ => return None,
            }
        }
        Some(ExtHeap {
            perm,
            sguard,
            uguard,
        })
    }

    /// Erases permissions and guards, leaving the plain heap.
    pub fn normalize(&self) -> Heap {
        self.perm
            .iter()
            .map(|(l, (_, v))| (*l, v.clone()))
            .collect()
    }

    /// Lifts a concrete heap to an extended heap with full permissions and
    /// no guards.
    pub fn from_heap(h: &Heap, unique_slots: usize) -> ExtHeap {
        ExtHeap {
            perm: h
                .iter()
                .map(|(l, v)| (*l, (Frac::one(), v.clone())))
                .collect(),
            sguard: None,
            uguard: vec![None; unique_slots],
        }
    }
}

impl fmt::Display for ExtHeap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut parts: Vec<String> = self
            .perm
            .iter()
            .map(|(l, (q, v))| {
                if q.is_one() {
                    format!("{l} -> {v}")
                } else {
                    format!("{l} -[{q}]-> {v}")
                }
            })
            .collect();
        if let Some((q, ms)) = &self.sguard {
            parts.push(format!("sguard({q}; {ms})"));
        }
        for (i, slot) in self.uguard.iter().enumerate() {
            if let Some(seq) = slot {
                let items: Vec<String> = seq.iter().map(|v| v.to_string()).collect();
                parts.push(format!("uguard#{i}([{}])", items.join(", ")));
            }
        }
        if parts.is_empty() {
            write!(f, "<unit>")
        } else {
            write!(f, "{}", parts.join(" * "))
        }
    }
}

impl fmt::Display for Multiset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{|")?;
        let mut first = true;
        for v in self.elements() {
            if !first {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
            first = false;
        }
        write!(f, "|}}")
    }
}
