//! Value algebra shared by programs, resource specifications, and assertions.
//!
//! Every runtime quantity is a [`Value`]: integers, booleans, pairs,
//! sequences, multisets, or maps, nested arbitrarily. Values have a total
//! structural order so that every container has one canonical printed form
//! and counterexample search can report the least witness deterministically.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;

/// Monomorphic type of a [`Value`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Type {
    Int,
    Bool,
    Pair(Box<Type>, Box<Type>),
    Seq(Box<Type>),
    Multiset(Box<Type>),
    Map(Box<Type>, Box<Type>),
}

impl Type {
    pub fn pair(a: Type, b: Type) -> Type {
        Type::Pair(Box::new(a), Box::new(b))
    }

    pub fn seq(elem: Type) -> Type {
        Type::Seq(Box::new(elem))
    }

    pub fn multiset(elem: Type) -> Type {
        Type::Multiset(Box::new(elem))
    }

    pub fn map(key: Type, val: Type) -> Type {
        Type::Map(Box::new(key), Box::new(val))
    }
}

impl fmt::Display for Type {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Type::Int => write!(f, "Int"),
            Type::Bool => write!(f, "Bool"),
            Type::Pair(a, b) => write!(f, "Pair[{a}, {b}]"),
            Type::Seq(t) => write!(f, "Seq[{t}]"),
            Type::Multiset(t) => write!(f, "Multiset[{t}]"),
            Type::Map(k, v) => write!(f, "Map[{k}, {v}]"),
        }
    }
}

/// Finite multiset with canonical (sorted) representation.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
pub struct Multiset(BTreeMap<Value, usize>);

impl Multiset {
    pub fn new() -> Self {
        Multiset(BTreeMap::new())
    }

    pub fn singleton(v: Value) -> Self {
        let mut m = Multiset::new();
        m.insert(v);
        m
    }

    pub fn insert(&mut self, v: Value) {
        *self.0.entry(v).or_insert(0) += 1;
    }

    /// Removes one occurrence; returns false if the element is absent.
    pub fn remove_one(&mut self, v: &Value) -> bool {
        match self.0.get_mut(v) {
            Some(n) if *n > 1 => {
                *n -= 1;
                true
            }
            Some(_) => {
                self.0.remove(v);
                true
            }
            None => false,
        }
    }

    pub fn count(&self, v: &Value) -> usize {
        self.0.get(v).copied().unwrap_or(0)
    }

    /// Total number of elements counting multiplicity.
    pub fn card(&self) -> usize {
        self.0.values().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Multiset sum (disjoint union): multiplicities add.
    pub fn union(&self, other: &Multiset) -> Multiset {
        let mut out = self.clone();
        for (v, n) in &other.0 {
            *out.0.entry(v.clone()).or_insert(0) += n;
        }
        out
    }

    /// Multiset difference: multiplicities subtract, saturating at zero.
    pub fn diff(&self, other: &Multiset) -> Multiset {
        let mut out = Multiset::new();
        for (v, n) in &self.0 {
            let m = n.saturating_sub(other.count(v));
            if m > 0 {
                out.0.insert(v.clone(), m);
            }
        }
        out
    }

    /// Distinct elements with their multiplicities, in canonical order.
    pub fn counts(&self) -> impl Iterator<Item = (&Value, usize)> {
        self.0.iter().map(|(v, n)| (v, *n))
    }

    /// Every element, repeated by multiplicity, in canonical order.
    pub fn elements(&self) -> Vec<Value> {
        let mut out = Vec::with_capacity(self.card());
        for (v, n) in &self.0 {
            for _ in 0..*n {
                out.push(v.clone());
            }
        }
        out
    }

    /// All sub-multisets (for bounded splitting searches). The number of
    /// results is the product of (multiplicity + 1) over distinct elements.
    pub fn sub_multisets(&self) -> Vec<Multiset> {
        let entries: Vec<(&Value, usize)> = self.counts().collect();
        let mut out = vec![Multiset::new()];
        for (v, n) in entries {
            let prev = std::mem::take(&mut out);
            for sub in prev {
                for take in 0..=n {
                    let mut next = sub.clone();
                    if take > 0 {
                        next.0.insert((*v).clone(), take);
                    }
                    out.push(next);
                }
            }
        }
        out
    }
}

impl FromIterator<Value> for Multiset {
    fn from_iter<I: IntoIterator<Item = Value>>(iter: I) -> Self {
        let mut m = Multiset::new();
        for v in iter {
            m.insert(v);
        }
        m
    }
}

/// Runtime value. The derived `Ord` (variant order, then contents) is the
/// canonical order used for printing and for least-counterexample reporting.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Value {
    Int(i64),
    Bool(bool),
    Pair(Box<Value>, Box<Value>),
    Seq(Vec<Value>),
    Multiset(Multiset),
    Map(BTreeMap<Value, Value>),
}

impl Value {
    pub fn pair(a: Value, b: Value) -> Value {
        Value::Pair(Box::new(a), Box::new(b))
    }

    pub fn empty_map() -> Value {
        Value::Map(BTreeMap::new())
    }

    /// The default a variable or lookup yields when nothing was stored:
    /// 0, false, or the empty container, per type.
    pub fn default_of(ty: &Type) -> Value {
        match ty {
            Type::Int => Value::Int(0),
            Type::Bool => Value::Bool(false),
            Type::Pair(a, b) => Value::pair(Value::default_of(a), Value::default_of(b)),
            Type::Seq(_) => Value::Seq(Vec::new()),
            Type::Multiset(_) => Value::Multiset(Multiset::new()),
            Type::Map(_, _) => Value::empty_map(),
        }
    }

    pub fn as_int(&self) -> i64 {
        match self {
            Value::Int(n) => *n,
            _ => 0,
        }
    }

    pub fn as_bool(&self) -> bool {
        match self {
            Value::Bool(b) => *b,
            _ => false,
        }
    }

    /// True when the value is `true`; anything else (including non-booleans)
    /// counts as false, keeping condition evaluation total.
    pub fn truthy(&self) -> bool {
        self.as_bool()
    }
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Int(n) => write!(f, "{n}"),
            Value::Bool(b) => write!(f, "{b}"),
            Value::Pair(a, b) => write!(f, "({a}, {b})"),
            Value::Seq(xs) => {
                write!(f, "[")?;
                for (i, x) in xs.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "]")
            }
            Value::Multiset(m) => {
                write!(f, "{{|")?;
                for (i, x) in m.elements().iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{x}")?;
                }
                write!(f, "|}}")
            }
            Value::Map(m) => {
                write!(f, "{{")?;
                for (i, (k, v)) in m.iter().enumerate() {
                    if i > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{k} -> {v}")?;
                }
                write!(f, "}}")
            }
        }
    }
}

/// Raised when a bounded enumeration would exceed the configured cap.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("domain of {ty} exceeds the enumeration cap of {cap} values")]
pub struct DomainTooLarge {
    pub ty: String,
    pub cap: u64,
}

/// Enumerates every value of `ty` inside `bounds`, in canonical ascending
/// order. Fails (rather than truncating) when the domain exceeds
/// `bounds.max_enum`, so callers can surface an explicit unknown verdict.
pub fn enumerate_type(ty: &Type, bounds: &Bounds) -> Result<Vec<Value>, DomainTooLarge> {
    let cap = bounds.max_enum;
    let too_large = || DomainTooLarge {
        ty: ty.to_string(),
        cap,
    };
    let check = |v: &Vec<Value>| {
        if v.len() as u64 > cap {
            Err(too_large())
        } else {
            Ok(())
        }
    };
    let mut out = match ty {
        Type::Int => (bounds.int_min..=bounds.int_max).map(Value::Int).collect(),
        Type::Bool => vec![Value::Bool(false), Value::Bool(true)],
        Type::Pair(a, b) => {
            let xs = enumerate_type(a, bounds)?;
            let ys = enumerate_type(b, bounds)?;
            let mut out = Vec::new();
            for x in &xs {
                for y in &ys {
                    out.push(Value::pair(x.clone(), y.clone()));
                    check(&out)?;
                }
            }
            out
        }
        Type::Seq(elem) => {
            let xs = enumerate_type(elem, bounds)?;
            let mut out: Vec<Value> = vec![Value::Seq(Vec::new())];
            let mut layer: Vec<Vec<Value>> = vec![Vec::new()];
            for _ in 0..bounds.container_max {
                let mut next = Vec::new();
                for prefix in &layer {
                    for x in &xs {
                        let mut s = prefix.clone();
                        s.push(x.clone());
                        out.push(Value::Seq(s.clone()));
                        check(&out)?;
                        next.push(s);
                    }
                }
                layer = next;
                if layer.is_empty() {
                    break;
                }
            }
            out
        }
        Type::Multiset(elem) => {
            let xs = enumerate_type(elem, bounds)?;
            // Non-decreasing tuples over xs = multisets of each size.
            let mut out: Vec<Multiset> = vec![Multiset::new()];
            let mut layer: Vec<(usize, Multiset)> = vec![(0, Multiset::new())];
            for _ in 0..bounds.container_max {
                let mut next = Vec::new();
                for (lo, m) in &layer {
                    for (i, x) in xs.iter().enumerate().skip(*lo) {
                        let mut m2 = m.clone();
                        m2.insert(x.clone());
                        out.push(m2.clone());
                        if out.len() as u64 > cap {
                            return Err(too_large());
                        }
                        next.push((i, m2));
                    }
                }
                layer = next;
                if layer.is_empty() {
                    break;
                }
            }
            out.into_iter().map(Value::Multiset).collect()
        }
        Type::Map(k, v) => {
            let keys = enumerate_type(k, bounds)?;
            let vals = enumerate_type(v, bounds)?;
            let mut out: Vec<BTreeMap<Value, Value>> = vec![BTreeMap::new()];
            let mut layer: Vec<(usize, BTreeMap<Value, Value>)> = vec![(0, BTreeMap::new())];
            for _ in 0..bounds.container_max {
                let mut next = Vec::new();
                for (lo, m) in &layer {
                    for (i, key) in keys.iter().enumerate().skip(*lo) {
                        for val in &vals {
                            let mut m2 = m.clone();
                            m2.insert(key.clone(), val.clone());
                            out.push(m2.clone());
                            if out.len() as u64 > cap {
                                return Err(too_large());
                            }
                            next.push((i + 1, m2));
                        }
                    }
                }
                layer = next;
                if layer.is_empty() {
                    break;
                }
            }
            out.into_iter().map(Value::Map).collect()
        }
    };
    check(&out)?;
    out.sort();
    out.dedup();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_display() {
        let m: Multiset = [Value::Int(2), Value::Int(1), Value::Int(2)]
            .into_iter()
            .collect();
        assert_eq!(Value::Multiset(m).to_string(), "{|1, 2, 2|}");
        let mut map = BTreeMap::new();
        map.insert(Value::Int(1), Value::Bool(true));
        map.insert(Value::Int(0), Value::Bool(false));
        assert_eq!(Value::Map(map).to_string(), "{0 -> false, 1 -> true}");
        assert_eq!(
            Value::pair(Value::Int(3), Value::Seq(vec![])).to_string(),
            "(3, [])"
        );
    }

    #[test]
    fn multiset_union_diff() {
        let a: Multiset = [Value::Int(1), Value::Int(1), Value::Int(2)]
            .into_iter()
            .collect();
        let b: Multiset = [Value::Int(1), Value::Int(3)].into_iter().collect();
        assert_eq!(a.union(&b).card(), 5);
        assert_eq!(a.union(&b).count(&Value::Int(1)), 3);
        let d = a.diff(&b);
        assert_eq!(d.count(&Value::Int(1)), 1);
        assert_eq!(d.count(&Value::Int(2)), 1);
        assert_eq!(d.count(&Value::Int(3)), 0);
    }

    #[test]
    fn enumeration_sizes() {
        let b = Bounds {
            int_min: 0,
            int_max: 1,
            container_max: 2,
            ..Bounds::default()
        };
        assert_eq!(enumerate_type(&Type::Int, &b).unwrap().len(), 2);
        assert_eq!(enumerate_type(&Type::Bool, &b).unwrap().len(), 2);
        assert_eq!(
            enumerate_type(&Type::pair(Type::Int, Type::Bool), &b).unwrap().len(),
            4
        );
        // sequences over {0,1} of length <= 2: 1 + 2 + 4
        assert_eq!(enumerate_type(&Type::seq(Type::Int), &b).unwrap().len(), 7);
        // multisets over {0,1} of card <= 2: {}, {0}, {1}, {0,0}, {0,1}, {1,1}
        assert_eq!(
            enumerate_type(&Type::multiset(Type::Int), &b).unwrap().len(),
            6
        );
        // maps over {0,1}->{0,1} with <= 2 entries: 1 + 4 + 4
        assert_eq!(
            enumerate_type(&Type::map(Type::Int, Type::Int), &b).unwrap().len(),
            9
        );
    }

    #[test]
    fn enumeration_cap_is_an_error() {
        let b = Bounds {
            int_min: 0,
            int_max: 100,
            max_enum: 50,
            ..Bounds::default()
        };
        assert!(enumerate_type(&Type::Int, &b).is_err());
    }

    #[test]
    fn sub_multisets_count() {
        let m: Multiset = [Value::Int(1), Value::Int(1), Value::Int(2)]
            .into_iter()
            .collect();
        // (2+1) * (1+1) = 6 sub-multisets
        assert_eq!(m.sub_multisets().len(), 6);
    }
}
