//! SMT-LIB v2 script generation for unbounded obligation discharge.
//!
//! The bounded checkers in [`crate::rspec`] and [`crate::entail`] enumerate
//! finite domains. This module emits the same obligations as self-contained
//! SMT-LIB v2 scripts so an external solver can discharge them for *all*
//! values: each script asserts the **negation** of its obligation, so an
//! `unsat` answer means the obligation holds.
//!
//! Encoding choices, all self-contained (no solver-specific extensions):
//!
//! - integers and booleans map to the builtin sorts — note the script
//!   speaks about unbounded integers while the evaluator wraps at the
//!   64-bit boundary, so scripts are faithful exactly for values that stay
//!   inside it (every bounded domain does);
//! - pairs map to a two-field algebraic datatype;
//! - multisets map to arrays of counts (`(Array T Int)`) with axioms
//!   keeping counts non-negative;
//! - maps pair an array of values with an array of presence flags, so
//!   `{0 -> 0}` and `{}` stay distinguishable, as they are for the
//!   evaluator;
//! - sequences pair an array of elements with a length.
//!
//! Values carried by these encodings beyond the constructed fragment
//! ("junk": negative counts, non-default values at absent keys) are fenced
//! off by well-formedness predicates asserted for every free constant and
//! preserved by every emitted operation, so datatype equality coincides
//! with value equality.
//!
//! `card`, `toms`, and `sum` fold over an entire container; that is not
//! first-order definable, so expressions using them are reported as
//! unsupported rather than encoded approximately.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::assertion::Assertion;
use crate::expr::{BinOp, Expr, ExprKind, UnOp};
use crate::rspec::{ActionRef, RSpec, ARG_BINDER, PRE_BINDERS, VALUE_BINDER};
use crate::value::Type;

/// An expression or assertion with no sound first-order encoding.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Unsupported {
    /// The offending subexpression, pretty-printed.
    pub construct: String,
    pub reason: String,
}

impl std::fmt::Display for Unsupported {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "cannot encode `{}`: {}", self.construct, self.reason)
    }
}

impl std::error::Error for Unsupported {}

/// One emitted script: a validity obligation and its file name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Obligation {
    /// Stable obligation id, e.g. `preserve-put` or `commute-put-put`.
    pub name: String,
    /// `<spec>.<obligation>.smt2`.
    pub file_name: String,
    pub script: String,
}

// ---------------------------------------------------------------------------
// Emitter: sorts, defaults, well-formedness, axiomatized operations
// ---------------------------------------------------------------------------

#[derive(Default)]
struct Emitter {
    need_pair: bool,
    need_map: bool,
    need_seq: bool,
    need_ms: bool,
    /// Helper declarations in dependency order, keyed for dedup.
    decls: Vec<(String, String)>,
    fresh: u32,
}

impl Emitter {
    fn has(&self, key: &str) -> bool {
        self.decls.iter().any(|(k, _)| k == key)
    }

    /// Registers a helper declaration once. `text` is computed lazily so
    /// dependencies register (and therefore print) first.
    fn declare(&mut self, key: &str, text: impl FnOnce(&mut Emitter) -> String) {
        if self.has(key) {
            return;
        }
        let text = text(self);
        if !self.has(key) {
            self.decls.push((key.to_string(), text));
        }
    }

    fn fresh_var(&mut self) -> String {
        self.fresh += 1;
        format!("t!{}", self.fresh)
    }

    /// Renders a type as an SMT sort, recording which datatype
    /// declarations the script will need.
    fn sort(&mut self, ty: &Type) -> String {
        match ty {
            Type::Int => "Int".to_string(),
            Type::Bool => "Bool".to_string(),
            Type::Pair(a, b) => {
                self.need_pair = true;
                format!("(Pair {} {})", self.sort(a), self.sort(b))
            }
            Type::Seq(t) => {
                self.need_seq = true;
                format!("(Sq {})", self.sort(t))
            }
            Type::Multiset(t) => {
                self.need_ms = true;
                format!("(MS {})", self.sort(t))
            }
            Type::Map(k, v) => {
                self.need_map = true;
                format!("(Map {} {})", self.sort(k), self.sort(v))
            }
        }
    }

    /// A type's stable symbol suffix.
    fn mangle(ty: &Type) -> String {
        match ty {
            Type::Int => "Int".to_string(),
            Type::Bool => "Bool".to_string(),
            Type::Pair(a, b) => format!("Pair_{}_{}", Self::mangle(a), Self::mangle(b)),
            Type::Seq(t) => format!("Sq_{}", Self::mangle(t)),
            Type::Multiset(t) => format!("Ms_{}", Self::mangle(t)),
            Type::Map(k, v) => format!("Map_{}_{}", Self::mangle(k), Self::mangle(v)),
        }
    }

    /// The term denoting a type's default value (what unbound variables,
    /// absent keys, and out-of-range indices evaluate to).
    fn default_term(&mut self, ty: &Type) -> String {
        match ty {
            Type::Int => "0".to_string(),
            Type::Bool => "false".to_string(),
            Type::Pair(a, b) => {
                let da = self.default_term(a);
                let db = self.default_term(b);
                self.sort(ty);
                format!("(mk-pair {da} {db})")
            }
            Type::Multiset(t) => {
                let name = format!("empty_{}", Self::mangle(ty));
                let t = t.clone();
                let sort = self.sort(ty);
                self.declare(&name.clone(), |em| {
                    let key_sort = em.sort(&t);
                    format!(
                        "(declare-const {name} {sort})\n\
                         (assert (forall ((k {key_sort})) (= (select {name} k) 0)))"
                    )
                });
                name
            }
            Type::Map(k, v) => {
                let name = format!("empty_{}", Self::mangle(ty));
                let (k, v) = (k.clone(), v.clone());
                let sort = self.sort(ty);
                self.declare(&name.clone(), |em| {
                    let key_sort = em.sort(&k);
                    let dv = em.default_term(&v);
                    format!(
                        "(declare-const {name} {sort})\n\
                         (assert (forall ((k {key_sort})) (and\n\
                         \x20 (not (select (map-pres {name}) k))\n\
                         \x20 (= (select (map-vals {name}) k) {dv}))))"
                    )
                });
                name
            }
            Type::Seq(t) => {
                let name = format!("empty_{}", Self::mangle(ty));
                let t = t.clone();
                let sort = self.sort(ty);
                self.declare(&name.clone(), |em| {
                    let dv = em.default_term(&t);
                    format!(
                        "(declare-const {name} {sort})\n\
                         (assert (and (= (sq-len {name}) 0)\n\
                         \x20 (forall ((i Int)) (= (select (sq-elems {name}) i) {dv}))))"
                    )
                });
                name
            }
        }
    }

    /// Name of the well-formedness predicate for `ty`, registering its
    /// definition; `None` when every value of the sort is well-formed.
    fn wf_name(&mut self, ty: &Type) -> Option<String> {
        fn needs_wf(ty: &Type) -> bool {
            match ty {
                Type::Int | Type::Bool => false,
                Type::Pair(a, b) => needs_wf(a) || needs_wf(b),
                Type::Seq(_) | Type::Multiset(_) | Type::Map(_, _) => true,
            }
        }
        if !needs_wf(ty) {
            return None;
        }
        let name = format!("wf_{}", Self::mangle(ty));
        let ty = ty.clone();
        self.declare(&name.clone(), |em| {
            let sort = em.sort(&ty);
            let body = match &ty {
                Type::Int | Type::Bool => unreachable!(),
                Type::Pair(a, b) => {
                    let mut parts = Vec::new();
                    if let Some(wa) = em.wf_name(a) {
                        parts.push(format!("({wa} (fst x))"));
                    }
                    if let Some(wb) = em.wf_name(b) {
                        parts.push(format!("({wb} (snd x))"));
                    }
                    conj(&parts)
                }
                Type::Multiset(t) => {
                    let key_sort = em.sort(t);
                    let mut parts = vec!["(<= 0 (select x k))".to_string()];
                    if let Some(wt) = em.wf_name(t) {
                        parts.push(format!("(=> (< 0 (select x k)) ({wt} k))"));
                    }
                    format!("(forall ((k {key_sort})) {})", conj(&parts))
                }
                Type::Map(k, v) => {
                    let key_sort = em.sort(k);
                    let dv = em.default_term(v);
                    let mut parts = vec![format!(
                        "(=> (not (select (map-pres x) k)) (= (select (map-vals x) k) {dv}))"
                    )];
                    if let Some(wk) = em.wf_name(k) {
                        parts.push(format!("(=> (select (map-pres x) k) ({wk} k))"));
                    }
                    if let Some(wv) = em.wf_name(v) {
                        parts.push(format!("({wv} (select (map-vals x) k))"));
                    }
                    format!("(forall ((k {key_sort})) {})", conj(&parts))
                }
                Type::Seq(t) => {
                    let dv = em.default_term(t);
                    let inside = match em.wf_name(t) {
                        Some(wt) => format!("({wt} (select (sq-elems x) i))"),
                        None => "true".to_string(),
                    };
                    format!(
                        "(and (<= 0 (sq-len x))\n\
                         \x20 (forall ((i Int)) (ite (and (<= 0 i) (< i (sq-len x)))\n\
                         \x20   {inside}\n\
                         \x20   (= (select (sq-elems x) i) {dv}))))"
                    )
                }
            };
            format!("(define-fun {name} ((x {sort})) Bool {body})")
        });
        Some(name)
    }

    /// Pointwise multiset sum.
    fn ms_union(&mut self, ms_ty: &Type) -> String {
        let name = format!("union_{}", Self::mangle(ms_ty));
        let ty = ms_ty.clone();
        self.declare(&name.clone(), |em| {
            let sort = em.sort(&ty);
            let key_sort = match &ty {
                Type::Multiset(t) => em.sort(t),
                _ => unreachable!(),
            };
            format!(
                "(declare-fun {name} ({sort} {sort}) {sort})\n\
                 (assert (forall ((a {sort}) (b {sort}) (k {key_sort}))\n\
                 \x20 (= (select ({name} a b) k) (+ (select a k) (select b k)))))"
            )
        });
        name
    }

    /// Pointwise multiset difference, saturating at zero.
    fn ms_diff(&mut self, ms_ty: &Type) -> String {
        let name = format!("diff_{}", Self::mangle(ms_ty));
        let ty = ms_ty.clone();
        self.declare(&name.clone(), |em| {
            let sort = em.sort(&ty);
            let key_sort = match &ty {
                Type::Multiset(t) => em.sort(t),
                _ => unreachable!(),
            };
            format!(
                "(declare-fun {name} ({sort} {sort}) {sort})\n\
                 (assert (forall ((a {sort}) (b {sort}) (k {key_sort}))\n\
                 \x20 (= (select ({name} a b) k)\n\
                 \x20    (let ((d (- (select a k) (select b k)))) (ite (< d 0) 0 d)))))"
            )
        });
        name
    }

    /// Map domain as a multiset: present keys get count one.
    fn map_dom(&mut self, map_ty: &Type) -> String {
        let name = format!("dom_{}", Self::mangle(map_ty));
        let ty = map_ty.clone();
        self.declare(&name.clone(), |em| {
            let sort = em.sort(&ty);
            let (key_ty,) = match &ty {
                Type::Map(k, _) => (k.clone(),),
                _ => unreachable!(),
            };
            let key_sort = em.sort(&key_ty);
            let ms_sort = em.sort(&Type::Multiset(Box::new(*key_ty)));
            format!(
                "(declare-fun {name} ({sort}) {ms_sort})\n\
                 (assert (forall ((m {sort}) (k {key_sort}))\n\
                 \x20 (= (select ({name} m) k) (ite (select (map-pres m) k) 1 0))))"
            )
        });
        name
    }

    /// Sequence concatenation.
    fn sq_concat(&mut self, seq_ty: &Type) -> String {
        let name = format!("concat_{}", Self::mangle(seq_ty));
        let ty = seq_ty.clone();
        self.declare(&name.clone(), |em| {
            let sort = em.sort(&ty);
            let dv = match &ty {
                Type::Seq(t) => em.default_term(t),
                _ => unreachable!(),
            };
            format!(
                "(declare-fun {name} ({sort} {sort}) {sort})\n\
                 (assert (forall ((a {sort}) (b {sort}))\n\
                 \x20 (= (sq-len ({name} a b)) (+ (sq-len a) (sq-len b)))))\n\
                 (assert (forall ((a {sort}) (b {sort}) (i Int))\n\
                 \x20 (= (select (sq-elems ({name} a b)) i)\n\
                 \x20    (ite (and (<= 0 i) (< i (sq-len a))) (select (sq-elems a) i)\n\
                 \x20    (ite (and (<= (sq-len a) i) (< i (+ (sq-len a) (sq-len b))))\n\
                 \x20      (select (sq-elems b) (- i (sq-len a)))\n\
                 \x20      {dv})))))"
            )
        });
        name
    }

    /// Sequence without its first element (the empty sequence stays empty).
    fn sq_tail(&mut self, seq_ty: &Type) -> String {
        let name = format!("tail_{}", Self::mangle(seq_ty));
        let ty = seq_ty.clone();
        self.declare(&name.clone(), |em| {
            let sort = em.sort(&ty);
            let dv = match &ty {
                Type::Seq(t) => em.default_term(t),
                _ => unreachable!(),
            };
            format!(
                "(declare-fun {name} ({sort}) {sort})\n\
                 (assert (forall ((a {sort}))\n\
                 \x20 (= (sq-len ({name} a)) (ite (<= (sq-len a) 0) 0 (- (sq-len a) 1)))))\n\
                 (assert (forall ((a {sort}) (i Int))\n\
                 \x20 (= (select (sq-elems ({name} a)) i)\n\
                 \x20    (ite (and (<= 0 i) (< i (sq-len ({name} a))))\n\
                 \x20      (select (sq-elems a) (+ i 1))\n\
                 \x20      {dv}))))"
            )
        });
        name
    }

    /// First `n` elements of a sequence, clamped to what is available.
    fn sq_take(&mut self, seq_ty: &Type) -> String {
        let name = format!("take_{}", Self::mangle(seq_ty));
        let ty = seq_ty.clone();
        self.declare(&name.clone(), |em| {
            let sort = em.sort(&ty);
            let dv = match &ty {
                Type::Seq(t) => em.default_term(t),
                _ => unreachable!(),
            };
            format!(
                "(declare-fun {name} ({sort} Int) {sort})\n\
                 (assert (forall ((a {sort}) (n Int))\n\
                 \x20 (= (sq-len ({name} a n))\n\
                 \x20    (ite (< n 0) 0 (ite (< (sq-len a) n) (sq-len a) n)))))\n\
                 (assert (forall ((a {sort}) (n Int) (i Int))\n\
                 \x20 (= (select (sq-elems ({name} a n)) i)\n\
                 \x20    (ite (and (<= 0 i) (< i (sq-len ({name} a n))))\n\
                 \x20      (select (sq-elems a) i)\n\
                 \x20      {dv}))))"
            )
        });
        name
    }

    // -----------------------------------------------------------------
    // Expression translation
    // -----------------------------------------------------------------

    /// Translates a type-annotated expression to an SMT term. `env` maps
    /// bound variable names to SMT symbols; variables outside it denote
    /// their type's default value, exactly as in the evaluator.
    fn tr(&mut self, e: &Expr, env: &BTreeMap<String, String>) -> Result<String, Unsupported> {
        let term = match &e.kind {
            ExprKind::IntLit(n) => {
                if *n < 0 {
                    format!("(- {})", n.unsigned_abs())
                } else {
                    n.to_string()
                }
            }
            ExprKind::BoolLit(b) => b.to_string(),
            ExprKind::Var(x) => match env.get(x) {
                Some(sym) => sym.clone(),
                None => self.default_term(&e.ty()),
            },
            ExprKind::Unary(op, a) => {
                let ta = self.tr(a, env)?;
                match op {
                    UnOp::Not => format!("(not {ta})"),
                    UnOp::Neg => format!("(- {ta})"),
                }
            }
            ExprKind::Binary(op, a, b) => {
                let ta = self.tr(a, env)?;
                let tb = self.tr(b, env)?;
                let sym = match op {
                    BinOp::Add => "+",
                    BinOp::Sub => "-",
                    BinOp::Mul => "*",
                    BinOp::And => "and",
                    BinOp::Or => "or",
                    BinOp::Eq => "=",
                    BinOp::Ne => "distinct",
                    BinOp::Lt => "<",
                    BinOp::Le => "<=",
                    BinOp::Gt => ">",
                    BinOp::Ge => ">=",
                    BinOp::Concat => {
                        let f = self.sq_concat(&e.ty());
                        return Ok(format!("({f} {ta} {tb})"));
                    }
                    BinOp::Union => {
                        let f = self.ms_union(&e.ty());
                        return Ok(format!("({f} {ta} {tb})"));
                    }
                    BinOp::Diff => {
                        let f = self.ms_diff(&e.ty());
                        return Ok(format!("({f} {ta} {tb})"));
                    }
                };
                format!("({sym} {ta} {tb})")
            }
            ExprKind::Pair(a, b) => {
                let ta = self.tr(a, env)?;
                let tb = self.tr(b, env)?;
                self.sort(&e.ty());
                format!("(mk-pair {ta} {tb})")
            }
            ExprKind::Fst(a) => format!("(fst {})", self.tr(a, env)?),
            ExprKind::Snd(a) => format!("(snd {})", self.tr(a, env)?),
            ExprKind::SeqLit(xs) => {
                let empty = self.default_term(&e.ty());
                let mut elems = format!("(sq-elems {empty})");
                for (i, x) in xs.iter().enumerate() {
                    let tx = self.tr(x, env)?;
                    elems = format!("(store {elems} {i} {tx})");
                }
                format!("(mk-sq {elems} {})", xs.len())
            }
            ExprKind::MsLit(xs) => {
                let mut acc = self.default_term(&e.ty());
                for x in xs {
                    let tx = self.tr(x, env)?;
                    let (m, k) = (self.fresh_var(), self.fresh_var());
                    acc = format!(
                        "(let (({m} {acc}) ({k} {tx})) \
                         (store {m} {k} (+ (select {m} {k}) 1)))"
                    );
                }
                acc
            }
            ExprKind::MapLit(kvs) => {
                let mut acc = self.default_term(&e.ty());
                for (k, v) in kvs {
                    let tk = self.tr(k, env)?;
                    let tv = self.tr(v, env)?;
                    let (m, ks) = (self.fresh_var(), self.fresh_var());
                    acc = format!(
                        "(let (({m} {acc}) ({ks} {tk})) \
                         (mk-map (store (map-vals {m}) {ks} {tv}) \
                         (store (map-pres {m}) {ks} true)))"
                    );
                }
                acc
            }
            ExprKind::Index(c, i) => {
                let tc = self.tr(c, env)?;
                let ti = self.tr(i, env)?;
                match c.ty() {
                    Type::Seq(_) => {
                        let dv = self.default_term(&e.ty());
                        let (s, ix) = (self.fresh_var(), self.fresh_var());
                        format!(
                            "(let (({s} {tc}) ({ix} {ti})) \
                             (ite (and (<= 0 {ix}) (< {ix} (sq-len {s}))) \
                             (select (sq-elems {s}) {ix}) {dv}))"
                        )
                    }
                    // Absent keys hold the default value by well-formedness,
                    // so a plain lookup matches the evaluator.
                    _ => format!("(select (map-vals {tc}) {ti})"),
                }
            }
            ExprKind::MapUpdate(m, k, v) => {
                let tm = self.tr(m, env)?;
                let tk = self.tr(k, env)?;
                let tv = self.tr(v, env)?;
                let (ms, ks) = (self.fresh_var(), self.fresh_var());
                format!(
                    "(let (({ms} {tm}) ({ks} {tk})) \
                     (mk-map (store (map-vals {ms}) {ks} {tv}) \
                     (store (map-pres {ms}) {ks} true)))"
                )
            }
            ExprKind::Len(a) => format!("(sq-len {})", self.tr(a, env)?),
            ExprKind::Dom(a) => {
                let f = self.map_dom(&a.ty());
                format!("({f} {})", self.tr(a, env)?)
            }
            ExprKind::Tail(a) => {
                let f = self.sq_tail(&e.ty());
                format!("({f} {})", self.tr(a, env)?)
            }
            ExprKind::Take(a, n) => {
                let f = self.sq_take(&e.ty());
                let ta = self.tr(a, env)?;
                let tn = self.tr(n, env)?;
                format!("({f} {ta} {tn})")
            }
            ExprKind::Card(_) | ExprKind::ToMultiset(_) | ExprKind::Sum(_) => {
                return Err(Unsupported {
                    construct: e.to_string(),
                    reason: "folds over a whole container; aggregate operations are \
                             not first-order definable — use the bounded checker"
                        .to_string(),
                })
            }
            ExprKind::Cond(b, t, f) => {
                let tb = self.tr(b, env)?;
                let tt = self.tr(t, env)?;
                let tf = self.tr(f, env)?;
                format!("(ite {tb} {tt} {tf})")
            }
            ExprKind::Let(x, e1, e2) => {
                let t1 = self.tr(e1, env)?;
                let sym = format!("{x}!l");
                let mut inner = env.clone();
                inner.insert(x.clone(), sym.clone());
                let t2 = self.tr(e2, &inner)?;
                format!("(let (({sym} {t1})) {t2})")
            }
        };
        Ok(term)
    }

    /// Translates a pure relational assertion over two stores. `env1` and
    /// `env2` map each program variable to its per-execution symbol.
    fn tr_rel(
        &mut self,
        a: &Assertion,
        env1: &BTreeMap<String, String>,
        env2: &BTreeMap<String, String>,
    ) -> Result<String, Unsupported> {
        let term = match a {
            Assertion::Pure(e) => {
                let t1 = self.tr(e, env1)?;
                let t2 = self.tr(e, env2)?;
                format!("(and {t1} {t2})")
            }
            Assertion::Low(e) => {
                let t1 = self.tr(e, env1)?;
                let t2 = self.tr(e, env2)?;
                format!("(= {t1} {t2})")
            }
            Assertion::Star(p, q) | Assertion::And(p, q) => {
                let tp = self.tr_rel(p, env1, env2)?;
                let tq = self.tr_rel(q, env1, env2)?;
                format!("(and {tp} {tq})")
            }
            Assertion::Implies(b, p) => {
                let b1 = self.tr(b, env1)?;
                let b2 = self.tr(b, env2)?;
                let tp = self.tr_rel(p, env1, env2)?;
                format!("(and (= {b1} {b2}) (=> {b1} {tp}))")
            }
            Assertion::Exists(x, ty, p) => {
                let sort = self.sort(ty);
                let (s1, s2) = (format!("{x}!e1"), format!("{x}!e2"));
                let mut inner1 = env1.clone();
                let mut inner2 = env2.clone();
                inner1.insert(x.clone(), s1.clone());
                inner2.insert(x.clone(), s2.clone());
                let mut parts = Vec::new();
                if let Some(wf) = self.wf_name(ty) {
                    parts.push(format!("({wf} {s1})"));
                    parts.push(format!("({wf} {s2})"));
                }
                parts.push(self.tr_rel(p, &inner1, &inner2)?);
                format!(
                    "(exists (({s1} {sort}) ({s2} {sort})) {})",
                    conj(&parts)
                )
            }
            Assertion::Emp
            | Assertion::PointsTo(..)
            | Assertion::SharedGuard(..)
            | Assertion::UniqueGuard(..)
            | Assertion::NoGuard(..)
            | Assertion::PreFor(..) => {
                return Err(Unsupported {
                    construct: a.to_string(),
                    reason: "heap and guard assertions have no store-level encoding — \
                             use the bounded checker"
                        .to_string(),
                })
            }
        };
        Ok(term)
    }

    /// Assembles the final script: header comments, logic, sort
    /// declarations, helper axioms, definitions, and the obligation body.
    fn assemble(&self, header: &[String], defs: &[String], body: &[String]) -> String {
        let mut out = String::new();
        for line in header {
            out.push_str("; ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str("(set-logic ALL)\n");
        if self.need_pair {
            out.push_str(
                "(declare-datatypes ((Pair 2)) ((par (X Y) ((mk-pair (fst X) (snd Y))))))\n",
            );
        }
        if self.need_map {
            out.push_str(
                "(declare-datatypes ((Map 2)) ((par (K V) \
                 ((mk-map (map-vals (Array K V)) (map-pres (Array K Bool)))))))\n",
            );
        }
        if self.need_seq {
            out.push_str(
                "(declare-datatypes ((Sq 1)) ((par (T) \
                 ((mk-sq (sq-elems (Array Int T)) (sq-len Int))))))\n",
            );
        }
        if self.need_ms {
            out.push_str("(define-sort MS (T) (Array T Int))\n");
        }
        for (_, text) in &self.decls {
            out.push_str(text);
            out.push('\n');
        }
        for d in defs {
            out.push_str(d);
            out.push('\n');
        }
        for b in body {
            out.push_str(b);
            out.push('\n');
        }
        out.push_str("(check-sat)\n");
        out.push_str("; after a `sat` answer, (get-model) shows a counterexample\n");
        out
    }
}

fn conj(parts: &[String]) -> String {
    match parts.len() {
        0 => "true".to_string(),
        1 => parts[0].clone(),
        _ => format!("(and {})", parts.join(" ")),
    }
}

// ---------------------------------------------------------------------------
// Validity obligations
// ---------------------------------------------------------------------------

/// Emits one script per validity obligation of `spec`: a preservation
/// script for every action and a commutation script for every relevant
/// pair, in the same order the bounded checker reports them.
pub fn validity_scripts(spec: &RSpec) -> Result<Vec<Obligation>, Unsupported> {
    let mut out = Vec::new();
    for r in spec.action_refs() {
        let name = format!("preserve-{}", spec.action(r).name);
        let script = preservation_script(spec, r)?;
        out.push(Obligation {
            file_name: format!("{}.{}.smt2", spec.name, name),
            name,
            script,
        });
    }
    for (a, b) in spec.relevant_pairs() {
        let name = format!(
            "commute-{}-{}",
            spec.action(a).name,
            spec.action(b).name
        );
        let script = commutation_script(spec, a, b)?;
        out.push(Obligation {
            file_name: format!("{}.{}.smt2", spec.name, name),
            name,
            script,
        });
    }
    Ok(out)
}

/// `(define-fun ...)` for the abstraction and one action's body and
/// precondition; every definition the obligation bodies reference.
fn spec_defs(
    em: &mut Emitter,
    spec: &RSpec,
    actions: &[ActionRef],
) -> Result<Vec<String>, Unsupported> {
    let value_sort = em.sort(&spec.value_ty);
    let abs_sort = em.sort(&spec.abs_ty);
    let env_v: BTreeMap<String, String> =
        [(VALUE_BINDER.to_string(), VALUE_BINDER.to_string())].into();
    let alpha_body = em.tr(&spec.alpha, &env_v)?;
    let mut defs = vec![format!(
        "(define-fun alpha (({VALUE_BINDER} {value_sort})) {abs_sort} {alpha_body})"
    )];
    let mut seen = Vec::new();
    for &r in actions {
        if seen.contains(&r) {
            continue;
        }
        seen.push(r);
        let action = spec.action(r);
        let arg_sort = em.sort(&action.arg_ty);
        let mut env = env_v.clone();
        env.insert(ARG_BINDER.to_string(), ARG_BINDER.to_string());
        let apply_body = em.tr(&action.apply, &env)?;
        defs.push(format!(
            "(define-fun apply-{} (({VALUE_BINDER} {value_sort}) ({ARG_BINDER} {arg_sort})) \
             {value_sort} {apply_body})",
            action.name
        ));
        let env_pre: BTreeMap<String, String> = [
            (PRE_BINDERS.0.to_string(), PRE_BINDERS.0.to_string()),
            (PRE_BINDERS.1.to_string(), PRE_BINDERS.1.to_string()),
        ]
        .into();
        let pre_body = em.tr(&action.pre, &env_pre)?;
        defs.push(format!(
            "(define-fun pre-{} (({} {arg_sort}) ({} {arg_sort})) Bool {pre_body})",
            action.name, PRE_BINDERS.0, PRE_BINDERS.1
        ));
    }
    Ok(defs)
}

/// Declares the two start values and two arguments with well-formedness,
/// plus the shared hypothesis `(= (alpha v1) (alpha v2))`.
fn obligation_prelude(
    em: &mut Emitter,
    spec: &RSpec,
    arg1_ty: &Type,
    arg2_ty: &Type,
) -> Vec<String> {
    let value_sort = em.sort(&spec.value_ty);
    let mut body = vec![
        format!("(declare-const v1 {value_sort})"),
        format!("(declare-const v2 {value_sort})"),
        format!("(declare-const arg1 {})", em.sort(arg1_ty)),
        format!("(declare-const arg2 {})", em.sort(arg2_ty)),
    ];
    if let Some(wf) = em.wf_name(&spec.value_ty) {
        body.push(format!("(assert ({wf} v1))"));
        body.push(format!("(assert ({wf} v2))"));
    }
    if let Some(wf) = em.wf_name(arg1_ty) {
        body.push(format!("(assert ({wf} arg1))"));
    }
    if let Some(wf) = em.wf_name(arg2_ty) {
        body.push(format!("(assert ({wf} arg2))"));
    }
    body.push("(assert (= (alpha v1) (alpha v2)))".to_string());
    body
}

fn preservation_script(spec: &RSpec, r: ActionRef) -> Result<String, Unsupported> {
    let action = spec.action(r);
    let mut em = Emitter::default();
    let defs = spec_defs(&mut em, spec, &[r])?;
    let mut body = obligation_prelude(&mut em, spec, &action.arg_ty, &action.arg_ty);
    let n = &action.name;
    body.push(format!("(assert (pre-{n} arg1 arg2))"));
    body.push(format!(
        "(assert (not (= (alpha (apply-{n} v1 arg1)) (alpha (apply-{n} v2 arg2)))))"
    ));
    let header = vec![
        format!(
            "preservation for action `{n}` of specification `{}`:",
            spec.name
        ),
        "for all v1, v2 with alpha(v1) = alpha(v2) and all arguments".to_string(),
        format!("related by pre-{n}, the updated values stay alpha-equal."),
        "this script asserts the negation: `unsat` means the obligation holds.".to_string(),
    ];
    Ok(em.assemble(&header, &defs, &body))
}

fn commutation_script(spec: &RSpec, a: ActionRef, b: ActionRef) -> Result<String, Unsupported> {
    let (na, nb) = (spec.action(a).name.clone(), spec.action(b).name.clone());
    let mut em = Emitter::default();
    let defs = spec_defs(&mut em, spec, &[a, b])?;
    let mut body = obligation_prelude(
        &mut em,
        spec,
        &spec.action(a).arg_ty,
        &spec.action(b).arg_ty,
    );
    body.push(format!(
        "(assert (not (= (alpha (apply-{nb} (apply-{na} v1 arg1) arg2))\n\
         \x20              (alpha (apply-{na} (apply-{nb} v2 arg2) arg1)))))"
    ));
    let header = vec![
        format!(
            "commutation of actions `{na}` and `{nb}` of specification `{}`:",
            spec.name
        ),
        "for all v1, v2 with alpha(v1) = alpha(v2) and all arguments,".to_string(),
        format!("`{na}`(arg1) then `{nb}`(arg2) applied to v1 and the reverse"),
        "order applied to v2 yield alpha-equal values.".to_string(),
        "this script asserts the negation: `unsat` means the obligation holds.".to_string(),
    ];
    Ok(em.assemble(&header, &defs, &body))
}

// ---------------------------------------------------------------------------
// Entailment export
// ---------------------------------------------------------------------------

/// Emits a script for `P |= Q` over the pure relational assertion
/// fragment: each program variable becomes one constant per execution, `P`
/// is asserted, `Q` is negated, so `unsat` means the entailment holds for
/// unbounded values. Assertions must be type-checked; heap and guard
/// assertions are reported as unsupported.
pub fn entailment_script(
    vars: &BTreeMap<String, Type>,
    p: &Assertion,
    q: &Assertion,
) -> Result<String, Unsupported> {
    let mut em = Emitter::default();
    let mut env1 = BTreeMap::new();
    let mut env2 = BTreeMap::new();
    let mut body = Vec::new();
    for (x, ty) in vars {
        let sort = em.sort(ty);
        let (s1, s2) = (format!("{x}!1"), format!("{x}!2"));
        body.push(format!("(declare-const {s1} {sort})"));
        body.push(format!("(declare-const {s2} {sort})"));
        if let Some(wf) = em.wf_name(ty) {
            body.push(format!("(assert ({wf} {s1}))"));
            body.push(format!("(assert ({wf} {s2}))"));
        }
        env1.insert(x.clone(), s1);
        env2.insert(x.clone(), s2);
    }
    let tp = em.tr_rel(p, &env1, &env2)?;
    let tq = em.tr_rel(q, &env1, &env2)?;
    body.push(format!("(assert {tp})"));
    body.push(format!("(assert (not {tq}))"));
    let header = vec![
        format!("entailment {p} |= {q}"),
        "each program variable x appears as x!1 and x!2, one per execution;".to_string(),
        "the premise is asserted and the conclusion negated, so `unsat`".to_string(),
        "means the entailment holds for unbounded values.".to_string(),
    ];
    Ok(em.assemble(&header, &[], &body))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assertion::{check_assertion, parse_assertion};
    use crate::expr::TyCtx;
    use crate::rspec::parse_cspec;
    use crate::rspec::tests::{MAP_IDENTITY_SPEC, MAP_KEYS_SPEC, MAP_SPLIT_SPEC};

    /// Parentheses must balance outside comments and never go negative.
    fn balanced(script: &str) -> bool {
        let mut depth: i64 = 0;
        for line in script.lines() {
            let code = line.split(';').next().unwrap_or("");
            for c in code.chars() {
                match c {
                    '(' => depth += 1,
                    ')' => depth -= 1,
                    _ => {}
                }
                if depth < 0 {
                    return false;
                }
            }
        }
        depth == 0
    }

    fn assert_script_shape(script: &str) {
        assert!(balanced(script), "unbalanced:\n{script}");
        assert_eq!(script.matches("(check-sat)").count(), 1, "{script}");
        assert_eq!(script.matches("(assert (not ").count(), 1, "{script}");
        assert!(script.starts_with("; "), "{script}");
        assert!(script.contains("(set-logic ALL)"), "{script}");
    }

    #[test]
    fn map_keys_scripts_enumerate_the_obligations() {
        let spec = parse_cspec(MAP_KEYS_SPEC).unwrap();
        let scripts = validity_scripts(&spec).unwrap();
        let names: Vec<&str> = scripts.iter().map(|o| o.name.as_str()).collect();
        assert_eq!(names, ["preserve-put", "commute-put-put"]);
        assert_eq!(scripts[0].file_name, "map_keys.preserve-put.smt2");
        assert_eq!(scripts[1].file_name, "map_keys.commute-put-put.smt2");
        for o in &scripts {
            assert_script_shape(&o.script);
            assert!(o.script.contains("(define-fun alpha"));
            assert!(o.script.contains("(define-fun apply-put"));
            // alpha = dom(m) pulls in the axiomatized domain function and
            // the map/multiset sorts.
            assert!(o.script.contains("dom_Map_Int_Int"));
            assert!(o.script.contains("(declare-datatypes ((Map 2))"));
            assert!(o.script.contains("(define-sort MS (T) (Array T Int))"));
            assert!(o.script.contains("(declare-datatypes ((Pair 2))"));
        }
        // Preservation uses the precondition; commutation must not.
        assert!(scripts[0].script.contains("(assert (pre-put arg1 arg2))"));
        assert!(!scripts[1].script.contains("(assert (pre-put"));
        // The shared/shared pair defines the action once.
        assert_eq!(
            scripts[1].script.matches("(define-fun apply-put").count(),
            1
        );
    }

    #[test]
    fn split_spec_scripts_skip_unique_self_pairs() {
        let spec = parse_cspec(MAP_SPLIT_SPEC).unwrap();
        let scripts = validity_scripts(&spec).unwrap();
        let names: Vec<&str> = scripts.iter().map(|o| o.name.as_str()).collect();
        assert_eq!(
            names,
            [
                "preserve-noop",
                "preserve-put_low",
                "preserve-put_high",
                "commute-noop-noop",
                "commute-noop-put_low",
                "commute-noop-put_high",
                "commute-put_low-put_high",
            ]
        );
        assert!(!names.contains(&"commute-put_low-put_low"));
        for o in &scripts {
            assert_script_shape(&o.script);
        }
    }

    #[test]
    fn scripts_declare_only_what_the_spec_uses() {
        let spec = parse_cspec(MAP_IDENTITY_SPEC).unwrap();
        let scripts = validity_scripts(&spec).unwrap();
        for o in &scripts {
            // alpha = m: no domain function, no multiset sort.
            assert!(!o.script.contains("dom_"), "{}", o.script);
            assert!(!o.script.contains("(define-sort MS"), "{}", o.script);
            assert!(o.script.contains("wf_Map_Int_Int"), "{}", o.script);
        }
        // Emission is deterministic.
        let again = validity_scripts(&spec).unwrap();
        assert_eq!(scripts, again);
    }

    #[test]
    fn aggregate_operations_are_reported_unsupported() {
        let spec = parse_cspec(
            "
spec tally {
  value: Multiset[Int]
  abstract: Int
  alpha(m) = card(m)
  shared add(k: Int) {
    apply = union(m, {|k,|})
    pre(p, q) = p == q
  }
}
",
        )
        .unwrap();
        let err = validity_scripts(&spec).unwrap_err();
        assert!(err.construct.contains("card"), "{err}");
        assert!(err.reason.contains("bounded"), "{err}");
    }

    #[test]
    fn entailment_scripts_compare_the_two_executions() {
        let p = parse_assertion("low(x) ** low(y)").unwrap();
        let q = parse_assertion("low(x + y)").unwrap();
        let mut tc = TyCtx::new();
        let p = check_assertion(&mut tc, &p, None).unwrap();
        let q = check_assertion(&mut tc, &q, None).unwrap();
        let script = entailment_script(&tc.typed_vars(), &p, &q).unwrap();
        assert!(balanced(&script), "{script}");
        assert_eq!(script.matches("(check-sat)").count(), 1);
        assert!(script.contains("(declare-const x!1 Int)"));
        assert!(script.contains("(declare-const x!2 Int)"));
        assert!(script.contains("(assert (and (= x!1 x!2) (= y!1 y!2)))"));
        assert!(script.contains("(assert (not (= (+ x!1 y!1) (+ x!2 y!2))))"));
    }

    #[test]
    fn heap_assertions_have_no_script_encoding() {
        let p = parse_assertion("acc(x, 1, v)").unwrap();
        let q = parse_assertion("low(x)").unwrap();
        let mut tc = TyCtx::new();
        let p = check_assertion(&mut tc, &p, None).unwrap();
        let q = check_assertion(&mut tc, &q, None).unwrap();
        let err = entailment_script(&tc.typed_vars(), &p, &q).unwrap_err();
        assert!(err.construct.contains("acc"), "{err}");
    }

    #[test]
    fn quantified_and_conditional_assertions_translate() {
        let p = parse_assertion("exists w: Int :: low(x + w)").unwrap();
        let q = parse_assertion("x == 0 ==> low(x)").unwrap();
        let mut tc = TyCtx::new();
        let p = check_assertion(&mut tc, &p, None).unwrap();
        let q = check_assertion(&mut tc, &q, None).unwrap();
        let script = entailment_script(&tc.typed_vars(), &p, &q).unwrap();
        assert!(balanced(&script), "{script}");
        assert!(script.contains("(exists ((w!e1 Int) (w!e2 Int))"));
        // The condition must agree between executions before it implies.
        assert!(script.contains("(= (= x!1 0) (= x!2 0))"));
    }
}
