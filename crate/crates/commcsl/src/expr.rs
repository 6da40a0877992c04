//! Expressions: AST, monomorphic type checking, and total evaluation.
//!
//! The expression language covers integers, booleans, pairs, sequences,
//! multisets, and maps. Evaluation is total: unbound variables read the
//! default value for their type, out-of-range indexing and absent map keys
//! yield defaults, and integer arithmetic wraps. Types are inferred by
//! unification; type variables left unconstrained default to `Int`.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use crate::value::{Multiset, Type, Value};

/// Variable store. `BTreeMap` keeps a canonical order for memoization keys
/// and deterministic reports.
pub type Store = BTreeMap<String, Value>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    And,
    Or,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
    /// Sequence concatenation `++`.
    Concat,
    /// Multiset sum `union(a, b)`.
    Union,
    /// Multiset difference `diff(a, b)`.
    Diff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnOp {
    Not,
    Neg,
}

/// Expression node. Equality, ordering, and hashing ignore the inferred
/// type annotation so that parsed and type-checked trees compare equal.
#[derive(Debug, Clone)]
pub struct Expr {
    pub kind: ExprKind,
    pub ty: Option<Type>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ExprKind {
    IntLit(i64),
    BoolLit(bool),
    Var(String),
    Unary(UnOp, Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Pair(Box<Expr>, Box<Expr>),
    Fst(Box<Expr>),
    Snd(Box<Expr>),
    SeqLit(Vec<Expr>),
    MsLit(Vec<Expr>),
    MapLit(Vec<(Expr, Expr)>),
    /// Sequence indexing or map lookup, resolved by the operand's type.
    Index(Box<Expr>, Box<Expr>),
    /// `m[k -> v]`: functional map update.
    MapUpdate(Box<Expr>, Box<Expr>, Box<Expr>),
    /// `len(s)`: sequence length.
    Len(Box<Expr>),
    /// `card(m)`: multiset cardinality.
    Card(Box<Expr>),
    /// `dom(m)`: map domain as a multiset (each key once).
    Dom(Box<Expr>),
    /// `tail(s)`: sequence without its first element (empty stays empty).
    Tail(Box<Expr>),
    /// `take(s, n)`: first n elements (clamped to the available length).
    Take(Box<Expr>, Box<Expr>),
    /// `toms(s)`: the multiset of a sequence's elements.
    ToMultiset(Box<Expr>),
    /// `sum(s)`: sum of an integer sequence.
    Sum(Box<Expr>),
    /// `b ? e1 : e2`.
    Cond(Box<Expr>, Box<Expr>, Box<Expr>),
    Let(String, Box<Expr>, Box<Expr>),
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Eq for Expr {}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.kind.cmp(&other.kind)
    }
}

impl std::hash::Hash for Expr {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.kind.hash(state);
    }
}

impl Expr {
    pub fn new(kind: ExprKind) -> Expr {
        Expr { kind, ty: None }
    }

    pub fn int(n: i64) -> Expr {
        Expr::new(ExprKind::IntLit(n))
    }

    pub fn bool(b: bool) -> Expr {
        Expr::new(ExprKind::BoolLit(b))
    }

    pub fn var(name: impl Into<String>) -> Expr {
        Expr::new(ExprKind::Var(name.into()))
    }

    pub fn binary(op: BinOp, a: Expr, b: Expr) -> Expr {
        Expr::new(ExprKind::Binary(op, Box::new(a), Box::new(b)))
    }

    pub fn eq(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinOp::Eq, a, b)
    }

    pub fn and(a: Expr, b: Expr) -> Expr {
        Expr::binary(BinOp::And, a, b)
    }

    pub fn negate(a: Expr) -> Expr {
        Expr::new(ExprKind::Unary(UnOp::Not, Box::new(a)))
    }

    /// The inferred type; `Int` if the node was never type-checked.
    pub fn ty(&self) -> Type {
        self.ty.clone().unwrap_or(Type::Int)
    }

    /// Free variables (let-bound names are not free in the body).
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free_vars(&mut Vec::new(), &mut out);
        out
    }

    fn collect_free_vars(&self, bound: &mut Vec<String>, out: &mut BTreeSet<String>) {
        match &self.kind {
            ExprKind::Var(x) => {
                if !bound.iter().any(|b| b == x) {
                    out.insert(x.clone());
                }
            }
            ExprKind::Let(x, e1, e2) => {
                e1.collect_free_vars(bound, out);
                bound.push(x.clone());
                e2.collect_free_vars(bound, out);
                bound.pop();
            }
            _ => {
                self.for_each_child(|c| c.collect_free_vars(bound, out));
            }
        }
    }

    fn for_each_child<'a>(&'a self, mut f: impl FnMut(&'a Expr)) {
        match &self.kind {
            ExprKind::IntLit(_) | ExprKind::BoolLit(_) | ExprKind::Var(_) => {}
            ExprKind::Unary(_, a)
            | ExprKind::Fst(a)
            | ExprKind::Snd(a)
            | ExprKind::Len(a)
            | ExprKind::Card(a)
            | ExprKind::Dom(a)
            | ExprKind::Tail(a)
            | ExprKind::ToMultiset(a)
            | ExprKind::Sum(a) => f(a),
            ExprKind::Binary(_, a, b)
            | ExprKind::Pair(a, b)
            | ExprKind::Index(a, b)
            | ExprKind::Take(a, b)
            | ExprKind::Let(_, a, b) => {
                f(a);
                f(b);
            }
            ExprKind::MapUpdate(a, b, c) | ExprKind::Cond(a, b, c) => {
                f(a);
                f(b);
                f(c);
            }
            ExprKind::SeqLit(xs) | ExprKind::MsLit(xs) => xs.iter().for_each(f),
            ExprKind::MapLit(kvs) => {
                for (k, v) in kvs {
                    f(k);
                    f(v);
                }
            }
        }
    }

    /// Capture-avoiding substitution of `repl` for the free variable `x`.
    pub fn subst(&self, x: &str, repl: &Expr) -> Expr {
        match &self.kind {
            ExprKind::Var(v) if v == x => repl.clone(),
            ExprKind::Let(v, e1, e2) => {
                let e1 = e1.subst(x, repl);
                if v == x {
                    Expr {
                        kind: ExprKind::Let(v.clone(), Box::new(e1), e2.clone()),
                        ty: self.ty.clone(),
                    }
                } else if repl.free_vars().contains(v) {
                    // Rename the binder away from the replacement's variables.
                    let fresh = fresh_name(v, &[&repl.free_vars(), &e2.free_vars()]);
                    let renamed = e2.subst(v, &Expr::var(fresh.clone()));
                    Expr {
                        kind: ExprKind::Let(
                            fresh,
                            Box::new(e1),
                            Box::new(renamed.subst(x, repl)),
                        ),
                        ty: self.ty.clone(),
                    }
                } else {
                    Expr {
                        kind: ExprKind::Let(v.clone(), Box::new(e1), Box::new(e2.subst(x, repl))),
                        ty: self.ty.clone(),
                    }
                }
            }
            _ => {
                let kind = self.map_children(|c| c.subst(x, repl));
                Expr {
                    kind,
                    ty: self.ty.clone(),
                }
            }
        }
    }

    fn map_children(&self, mut f: impl FnMut(&Expr) -> Expr) -> ExprKind {
        let fb = |f: &mut dyn FnMut(&Expr) -> Expr, e: &Expr| Box::new(f(e));
        match &self.kind {
            ExprKind::IntLit(_) | ExprKind::BoolLit(_) | ExprKind::Var(_) => self.kind.clone(),
            ExprKind::Unary(op, a) => ExprKind::Unary(*op, fb(&mut f, a)),
            ExprKind::Binary(op, a, b) => ExprKind::Binary(*op, fb(&mut f, a), fb(&mut f, b)),
            ExprKind::Pair(a, b) => ExprKind::Pair(fb(&mut f, a), fb(&mut f, b)),
            ExprKind::Fst(a) => ExprKind::Fst(fb(&mut f, a)),
            ExprKind::Snd(a) => ExprKind::Snd(fb(&mut f, a)),
            ExprKind::SeqLit(xs) => ExprKind::SeqLit(xs.iter().map(&mut f).collect()),
            ExprKind::MsLit(xs) => ExprKind::MsLit(xs.iter().map(&mut f).collect()),
            ExprKind::MapLit(kvs) => {
                ExprKind::MapLit(kvs.iter().map(|(k, v)| (f(k), f(v))).collect())
            }
            ExprKind::Index(a, b) => ExprKind::Index(fb(&mut f, a), fb(&mut f, b)),
            ExprKind::MapUpdate(a, b, c) => {
                ExprKind::MapUpdate(fb(&mut f, a), fb(&mut f, b), fb(&mut f, c))
            }
            ExprKind::Len(a) => ExprKind::Len(fb(&mut f, a)),
            ExprKind::Card(a) => ExprKind::Card(fb(&mut f, a)),
            ExprKind::Dom(a) => ExprKind::Dom(fb(&mut f, a)),
            ExprKind::Tail(a) => ExprKind::Tail(fb(&mut f, a)),
            ExprKind::Take(a, b) => ExprKind::Take(fb(&mut f, a), fb(&mut f, b)),
            ExprKind::ToMultiset(a) => ExprKind::ToMultiset(fb(&mut f, a)),
            ExprKind::Sum(a) => ExprKind::Sum(fb(&mut f, a)),
            ExprKind::Cond(a, b, c) => ExprKind::Cond(fb(&mut f, a), fb(&mut f, b), fb(&mut f, c)),
            ExprKind::Let(v, a, b) => ExprKind::Let(v.clone(), fb(&mut f, a), fb(&mut f, b)),
        }
    }
}

/// Picks a name based on `base` that avoids every set in `avoid`.
pub fn fresh_name(base: &str, avoid: &[&BTreeSet<String>]) -> String {
    let clash = |n: &str| avoid.iter().any(|s| s.contains(n));
    if !clash(base) {
        return base.to_string();
    }
    for i in 0.. {
        let cand = format!("{base}_{i}");
        if !clash(&cand) {
            return cand;
        }
    }
    unreachable!()
}

/// Enumerates every store assigning the given typed variables values from
/// their bounded domains, in canonical (variable-then-value) order. Fails
/// when the total count would exceed `bounds.max_enum`.
pub fn enumerate_stores(
    vars: &BTreeMap<String, Type>,
    bounds: &crate::bounds::Bounds,
) -> Result<Vec<Store>, crate::value::DomainTooLarge> {
    let mut stores = vec![Store::new()];
    for (name, ty) in vars {
        let vals = crate::value::enumerate_type(ty, bounds)?;
        if (stores.len() as u64).saturating_mul(vals.len() as u64) > bounds.max_enum {
            return Err(crate::value::DomainTooLarge {
                ty: format!("stores over {} variables", vars.len()),
                cap: bounds.max_enum,
            });
        }
        let mut next = Vec::with_capacity(stores.len() * vals.len());
        for s in &stores {
            for v in &vals {
                let mut t = s.clone();
                t.insert(name.clone(), v.clone());
                next.push(t);
            }
        }
        stores = next;
    }
    Ok(stores)
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

/// Evaluates an expression in a store. Total: never panics and never errors.
pub fn eval_expr(e: &Expr, store: &Store) -> Value {
    match &e.kind {
        ExprKind::IntLit(n) => Value::Int(*n),
        ExprKind::BoolLit(b) => Value::Bool(*b),
        ExprKind::Var(x) => store
            .get(x)
            .cloned()
            .unwrap_or_else(|| Value::default_of(&e.ty())),
        ExprKind::Unary(op, a) => {
            let va = eval_expr(a, store);
            match op {
                UnOp::Not => Value::Bool(!va.truthy()),
                UnOp::Neg => Value::Int(va.as_int().wrapping_neg()),
            }
        }
        ExprKind::Binary(op, a, b) => {
            let va = eval_expr(a, store);
            let vb = eval_expr(b, store);
            match op {
                BinOp::Add => Value::Int(va.as_int().wrapping_add(vb.as_int())),
                BinOp::Sub => Value::Int(va.as_int().wrapping_sub(vb.as_int())),
                BinOp::Mul => Value::Int(va.as_int().wrapping_mul(vb.as_int())),
                BinOp::And => Value::Bool(va.truthy() && vb.truthy()),
                BinOp::Or => Value::Bool(va.truthy() || vb.truthy()),
                BinOp::Eq => Value::Bool(va == vb),
                BinOp::Ne => Value::Bool(va != vb),
                BinOp::Lt => Value::Bool(va.as_int() < vb.as_int()),
                BinOp::Le => Value::Bool(va.as_int() <= vb.as_int()),
                BinOp::Gt => Value::Bool(va.as_int() > vb.as_int()),
                BinOp::Ge => Value::Bool(va.as_int() >= vb.as_int()),
                BinOp::Concat => {
                    let mut xs = as_seq(va);
                    xs.extend(as_seq(vb));
                    Value::Seq(xs)
                }
                BinOp::Union => Value::Multiset(as_multiset(va).union(&as_multiset(vb))),
                BinOp::Diff => Value::Multiset(as_multiset(va).diff(&as_multiset(vb))),
            }
        }
        ExprKind::Pair(a, b) => Value::pair(eval_expr(a, store), eval_expr(b, store)),
        ExprKind::Fst(a) => match eval_expr(a, store) {
            Value::Pair(x, _) => *x,
            _ => Value::default_of(&e.ty()),
        },
        ExprKind::Snd(a) => match eval_expr(a, store) {
            Value::Pair(_, y) => *y,
            _ => Value::default_of(&e.ty()),
        },
        ExprKind::SeqLit(xs) => Value::Seq(xs.iter().map(|x| eval_expr(x, store)).collect()),
        ExprKind::MsLit(xs) => {
            Value::Multiset(xs.iter().map(|x| eval_expr(x, store)).collect())
        }
        ExprKind::MapLit(kvs) => {
            let mut m = BTreeMap::new();
            for (k, v) in kvs {
                m.insert(eval_expr(k, store), eval_expr(v, store));
            }
            Value::Map(m)
        }
        ExprKind::Index(c, i) => match eval_expr(c, store) {
            Value::Seq(xs) => {
                let i = eval_expr(i, store).as_int();
                if i >= 0 && (i as usize) < xs.len() {
                    xs[i as usize].clone()
                } else {
                    Value::default_of(&e.ty())
                }
            }
            Value::Map(m) => m
                .get(&eval_expr(i, store))
                .cloned()
                .unwrap_or_else(|| Value::default_of(&e.ty())),
            _ => Value::default_of(&e.ty()),
        },
        ExprKind::MapUpdate(m, k, v) => {
            let mut map = match eval_expr(m, store) {
                Value::Map(map) => map,
                _ => BTreeMap::new(),
            };
            map.insert(eval_expr(k, store), eval_expr(v, store));
            Value::Map(map)
        }
        ExprKind::Len(a) => Value::Int(as_seq(eval_expr(a, store)).len() as i64),
        ExprKind::Card(a) => Value::Int(as_multiset(eval_expr(a, store)).card() as i64),
        ExprKind::Dom(a) => match eval_expr(a, store) {
            Value::Map(m) => Value::Multiset(m.into_keys().collect()),
            _ => Value::Multiset(Multiset::new()),
        },
        ExprKind::Tail(a) => {
            let xs = as_seq(eval_expr(a, store));
            Value::Seq(xs.into_iter().skip(1).collect())
        }
        ExprKind::Take(a, n) => {
            let xs = as_seq(eval_expr(a, store));
            let n = eval_expr(n, store).as_int().max(0) as usize;
            Value::Seq(xs.into_iter().take(n).collect())
        }
        ExprKind::ToMultiset(a) => {
            Value::Multiset(as_seq(eval_expr(a, store)).into_iter().collect())
        }
        ExprKind::Sum(a) => Value::Int(
            as_seq(eval_expr(a, store))
                .iter()
                .fold(0i64, |acc, v| acc.wrapping_add(v.as_int())),
        ),
        ExprKind::Cond(b, t, f) => {
            if eval_expr(b, store).truthy() {
                eval_expr(t, store)
            } else {
                eval_expr(f, store)
            }
        }
        ExprKind::Let(x, e1, e2) => {
            let v = eval_expr(e1, store);
            let mut inner = store.clone();
            inner.insert(x.clone(), v);
            eval_expr(e2, &inner)
        }
    }
}

fn as_seq(v: Value) -> Vec<Value> {
    match v {
        Value::Seq(xs) => xs,
        _ => Vec::new(),
    }
}

fn as_multiset(v: Value) -> Multiset {
    match v {
        Value::Multiset(m) => m,
        _ => Multiset::new(),
    }
}

// ---------------------------------------------------------------------------
// Type checking
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("type error{context}: {message}")]
pub struct TypeError {
    pub message: String,
    /// Where the error arose, e.g. " in action Put of spec MK".
    pub context: String,
}

impl TypeError {
    fn new(message: impl Into<String>) -> TypeError {
        TypeError {
            message: message.into(),
            context: String::new(),
        }
    }

    pub fn in_context(mut self, ctx: &str) -> TypeError {
        self.context = format!(" {ctx}");
        self
    }
}

/// Internal type term: `Type` extended with unification variables.
#[derive(Debug, Clone, PartialEq)]
enum Ty {
    Int,
    Bool,
    Pair(Box<Ty>, Box<Ty>),
    Seq(Box<Ty>),
    Multiset(Box<Ty>),
    Map(Box<Ty>, Box<Ty>),
    Var(u32),
}

impl Ty {
    fn of(t: &Type) -> Ty {
        match t {
            Type::Int => Ty::Int,
            Type::Bool => Ty::Bool,
            Type::Pair(a, b) => Ty::Pair(Box::new(Ty::of(a)), Box::new(Ty::of(b))),
            Type::Seq(a) => Ty::Seq(Box::new(Ty::of(a))),
            Type::Multiset(a) => Ty::Multiset(Box::new(Ty::of(a))),
            Type::Map(k, v) => Ty::Map(Box::new(Ty::of(k)), Box::new(Ty::of(v))),
        }
    }
}

/// Type-checking context: a unifier plus the variable environment.
/// Variables are typed per context; checking several expressions in one
/// context (a whole program, a spec) unifies their variable types.
#[derive(Debug, Default)]
pub struct TyCtx {
    vars: Vec<(String, Ty)>,
    subst: HashMap<u32, Ty>,
    next: u32,
    /// Type terms of inferred nodes in post-order. [`TyCtx::annotate`]
    /// replays this, so every expression passed to an `infer_*` method must
    /// later be annotated, in the same order.
    trail: Vec<Ty>,
    trail_pos: usize,
}

impl TyCtx {
    pub fn new() -> TyCtx {
        TyCtx::default()
    }

    /// Declares a variable with a known type (shadows earlier bindings).
    pub fn declare(&mut self, name: &str, ty: &Type) {
        self.vars.push((name.to_string(), Ty::of(ty)));
    }

    /// Removes the most recent binding of `name` (for scoped binders).
    pub fn undeclare(&mut self, name: &str) {
        if let Some(pos) = self.vars.iter().rposition(|(n, _)| n == name) {
            self.vars.remove(pos);
        }
    }

    fn fresh(&mut self) -> Ty {
        self.next += 1;
        Ty::Var(self.next - 1)
    }

    fn var_ty(&mut self, name: &str) -> Ty {
        if let Some((_, t)) = self.vars.iter().rev().find(|(n, _)| n == name) {
            return t.clone();
        }
        let t = self.fresh();
        self.vars.push((name.to_string(), t.clone()));
        t
    }

    fn resolve(&self, t: &Ty) -> Ty {
        match t {
            Ty::Var(v) => match self.subst.get(v) {
                Some(t2) => self.resolve(t2),
                None => t.clone(),
            },
            Ty::Pair(a, b) => Ty::Pair(Box::new(self.resolve(a)), Box::new(self.resolve(b))),
            Ty::Seq(a) => Ty::Seq(Box::new(self.resolve(a))),
            Ty::Multiset(a) => Ty::Multiset(Box::new(self.resolve(a))),
            Ty::Map(k, v) => Ty::Map(Box::new(self.resolve(k)), Box::new(self.resolve(v))),
            _ => t.clone(),
        }
    }

    fn occurs(&self, v: u32, t: &Ty) -> bool {
        match t {
            Ty::Var(w) => *w == v,
            Ty::Pair(a, b) | Ty::Map(a, b) => self.occurs(v, a) || self.occurs(v, b),
            Ty::Seq(a) | Ty::Multiset(a) => self.occurs(v, a),
            _ => false,
        }
    }

    fn unify(&mut self, a: &Ty, b: &Ty) -> Result<(), TypeError> {
        let a = self.resolve(a);
        let b = self.resolve(b);
        match (&a, &b) {
            (Ty::Var(v), _) => {
                if let Ty::Var(w) = b {
                    if w == *v {
                        return Ok(());
                    }
                }
                if self.occurs(*v, &b) {
                    return Err(TypeError::new("cannot construct an infinite type"));
                }
                self.subst.insert(*v, b);
                Ok(())
            }
            (_, Ty::Var(_)) => self.unify(&b, &a),
            (Ty::Int, Ty::Int) | (Ty::Bool, Ty::Bool) => Ok(()),
            (Ty::Pair(a1, a2), Ty::Pair(b1, b2)) | (Ty::Map(a1, a2), Ty::Map(b1, b2)) => {
                self.unify(a1, b1)?;
                self.unify(a2, b2)
            }
            (Ty::Seq(a1), Ty::Seq(b1)) | (Ty::Multiset(a1), Ty::Multiset(b1)) => {
                self.unify(a1, b1)
            }
            _ => Err(TypeError::new(format!(
                "mismatched types: {} vs {}",
                self.describe(&a),
                self.describe(&b)
            ))),
        }
    }

    fn describe(&self, t: &Ty) -> String {
        self.finish_ty(t).to_string()
    }

    /// Resolves a type term to a concrete `Type`; unconstrained variables
    /// default to `Int`.
    fn finish_ty(&self, t: &Ty) -> Type {
        match self.resolve(t) {
            Ty::Int | Ty::Var(_) => Type::Int,
            Ty::Bool => Type::Bool,
            Ty::Pair(a, b) => Type::pair(self.finish_ty(&a), self.finish_ty(&b)),
            Ty::Seq(a) => Type::seq(self.finish_ty(&a)),
            Ty::Multiset(a) => Type::multiset(self.finish_ty(&a)),
            Ty::Map(k, v) => Type::map(self.finish_ty(&k), self.finish_ty(&v)),
        }
    }

    /// Makes sure `name` is registered (with a fresh type if unseen) without
    /// constraining it.
    pub fn touch(&mut self, name: &str) {
        let _ = self.var_ty(name);
    }

    /// The concrete type a variable ended up with (Int if never mentioned).
    pub fn var_type(&mut self, name: &str) -> Type {
        let t = self.var_ty(name);
        self.finish_ty(&t)
    }

    /// All variables seen by this context with their final types.
    pub fn typed_vars(&self) -> BTreeMap<String, Type> {
        let mut out = BTreeMap::new();
        for (name, t) in &self.vars {
            out.entry(name.clone()).or_insert_with(|| self.finish_ty(t));
        }
        out
    }

    /// Infers the expression's type, then rewrites the tree with every
    /// node's concrete type filled in.
    pub fn check(&mut self, e: &Expr) -> Result<Expr, TypeError> {
        let (t, _) = self.infer(e)?;
        // Unification may refine variable types after subtrees were visited,
        // so materialize concrete types in a second pass.
        let _ = t;
        Ok(self.annotate(e))
    }

    /// Like [`TyCtx::check`], but also unifies the result type with `want`.
    pub fn check_expecting(&mut self, e: &Expr, want: &Type) -> Result<Expr, TypeError> {
        self.infer_expecting(e, want)?;
        Ok(self.annotate(e))
    }

    /// Runs inference for its unification side effects only. Callers that
    /// typecheck several expressions sharing variables run this over all of
    /// them first, then [`TyCtx::annotate`] each, so every annotation sees
    /// the final constraint set.
    pub fn infer_only(&mut self, e: &Expr) -> Result<(), TypeError> {
        self.infer(e).map(|_| ())
    }

    /// [`TyCtx::infer_only`], plus unification of the result with `want`.
    pub fn infer_expecting(&mut self, e: &Expr, want: &Type) -> Result<(), TypeError> {
        let (t, _) = self.infer(e)?;
        self.unify(&t, &Ty::of(want))
            .map_err(|err| TypeError::new(format!("expected {want}: {}", err.message)))
    }

    /// Records that variable `name` holds the value of `e` (assignment),
    /// unifying their types.
    pub fn infer_assign(&mut self, name: &str, e: &Expr) -> Result<(), TypeError> {
        let (t, _) = self.infer(e)?;
        let vt = self.var_ty(name);
        self.unify(&vt, &t)
            .map_err(|err| err.in_context(&format!("assignment to {name}")))
    }

    /// Constrains variable `name` to type `ty` without inferring any
    /// expression (and so without touching the annotation trail).
    pub fn constrain_var(&mut self, name: &str, ty: &Type) -> Result<(), TypeError> {
        let vt = self.var_ty(name);
        self.unify(&vt, &Ty::of(ty))
            .map_err(|err| err.in_context(&format!("variable {name}")))
    }

    fn infer(&mut self, e: &Expr) -> Result<(Ty, ()), TypeError> {
        let t = match &e.kind {
            ExprKind::IntLit(_) => Ty::Int,
            ExprKind::BoolLit(_) => Ty::Bool,
            ExprKind::Var(x) => self.var_ty(x),
            ExprKind::Unary(op, a) => {
                let (ta, _) = self.infer(a)?;
                match op {
                    UnOp::Not => {
                        self.unify(&ta, &Ty::Bool)?;
                        Ty::Bool
                    }
                    UnOp::Neg => {
                        self.unify(&ta, &Ty::Int)?;
                        Ty::Int
                    }
                }
            }
            ExprKind::Binary(op, a, b) => {
                let (ta, _) = self.infer(a)?;
                let (tb, _) = self.infer(b)?;
                match op {
                    BinOp::Add | BinOp::Sub | BinOp::Mul => {
                        self.unify(&ta, &Ty::Int)?;
                        self.unify(&tb, &Ty::Int)?;
                        Ty::Int
                    }
                    BinOp::And | BinOp::Or => {
                        self.unify(&ta, &Ty::Bool)?;
                        self.unify(&tb, &Ty::Bool)?;
                        Ty::Bool
                    }
                    BinOp::Eq | BinOp::Ne => {
                        self.unify(&ta, &tb)?;
                        Ty::Bool
                    }
                    BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge => {
                        self.unify(&ta, &Ty::Int)?;
                        self.unify(&tb, &Ty::Int)?;
                        Ty::Bool
                    }
                    BinOp::Concat => {
                        let elem = self.fresh();
                        let seq = Ty::Seq(Box::new(elem));
                        self.unify(&ta, &seq)?;
                        self.unify(&tb, &seq)?;
                        seq
                    }
                    BinOp::Union | BinOp::Diff => {
                        let elem = self.fresh();
                        let ms = Ty::Multiset(Box::new(elem));
                        self.unify(&ta, &ms)?;
                        self.unify(&tb, &ms)?;
                        ms
                    }
                }
            }
            ExprKind::Pair(a, b) => {
                let (ta, _) = self.infer(a)?;
                let (tb, _) = self.infer(b)?;
                Ty::Pair(Box::new(ta), Box::new(tb))
            }
            ExprKind::Fst(a) => {
                let (ta, _) = self.infer(a)?;
                let (x, y) = (self.fresh(), self.fresh());
                self.unify(&ta, &Ty::Pair(Box::new(x.clone()), Box::new(y)))?;
                x
            }
            ExprKind::Snd(a) => {
                let (ta, _) = self.infer(a)?;
                let (x, y) = (self.fresh(), self.fresh());
                self.unify(&ta, &Ty::Pair(Box::new(x), Box::new(y.clone())))?;
                y
            }
            ExprKind::SeqLit(xs) => {
                let elem = self.fresh();
                for x in xs {
                    let (tx, _) = self.infer(x)?;
                    self.unify(&tx, &elem)?;
                }
                Ty::Seq(Box::new(elem))
            }
            ExprKind::MsLit(xs) => {
                let elem = self.fresh();
                for x in xs {
                    let (tx, _) = self.infer(x)?;
                    self.unify(&tx, &elem)?;
                }
                Ty::Multiset(Box::new(elem))
            }
            ExprKind::MapLit(kvs) => {
                let (k, v) = (self.fresh(), self.fresh());
                for (ke, ve) in kvs {
                    let (tk, _) = self.infer(ke)?;
                    let (tv, _) = self.infer(ve)?;
                    self.unify(&tk, &k)?;
                    self.unify(&tv, &v)?;
                }
                Ty::Map(Box::new(k), Box::new(v))
            }
            ExprKind::Index(c, i) => {
                let (tc, _) = self.infer(c)?;
                let (ti, _) = self.infer(i)?;
                match self.resolve(&tc) {
                    Ty::Map(k, v) => {
                        self.unify(&ti, &k)?;
                        *v
                    }
                    other => {
                        // Sequence indexing; an operand of still-unknown type
                        // defaults to a sequence (documented).
                        let elem = self.fresh();
                        self.unify(&other, &Ty::Seq(Box::new(elem.clone())))?;
                        self.unify(&ti, &Ty::Int)?;
                        elem
                    }
                }
            }
            ExprKind::MapUpdate(m, k, v) => {
                let (tm, _) = self.infer(m)?;
                let (tk, _) = self.infer(k)?;
                let (tv, _) = self.infer(v)?;
                let map = Ty::Map(Box::new(tk), Box::new(tv));
                self.unify(&tm, &map)?;
                self.resolve(&tm)
            }
            ExprKind::Len(a) => {
                let (ta, _) = self.infer(a)?;
                let elem = self.fresh();
                self.unify(&ta, &Ty::Seq(Box::new(elem)))?;
                Ty::Int
            }
            ExprKind::Card(a) => {
                let (ta, _) = self.infer(a)?;
                let elem = self.fresh();
                self.unify(&ta, &Ty::Multiset(Box::new(elem)))?;
                Ty::Int
            }
            ExprKind::Dom(a) => {
                let (ta, _) = self.infer(a)?;
                let (k, v) = (self.fresh(), self.fresh());
                self.unify(&ta, &Ty::Map(Box::new(k.clone()), Box::new(v)))?;
                Ty::Multiset(Box::new(k))
            }
            ExprKind::Tail(a) => {
                let (ta, _) = self.infer(a)?;
                let elem = self.fresh();
                self.unify(&ta, &Ty::Seq(Box::new(elem)))?;
                self.resolve(&ta)
            }
            ExprKind::Take(a, n) => {
                let (ta, _) = self.infer(a)?;
                let (tn, _) = self.infer(n)?;
                let elem = self.fresh();
                self.unify(&ta, &Ty::Seq(Box::new(elem)))?;
                self.unify(&tn, &Ty::Int)?;
                self.resolve(&ta)
            }
            ExprKind::ToMultiset(a) => {
                let (ta, _) = self.infer(a)?;
                let elem = self.fresh();
                self.unify(&ta, &Ty::Seq(Box::new(elem.clone())))?;
                Ty::Multiset(Box::new(elem))
            }
            ExprKind::Sum(a) => {
                let (ta, _) = self.infer(a)?;
                self.unify(&ta, &Ty::Seq(Box::new(Ty::Int)))?;
                Ty::Int
            }
            ExprKind::Cond(b, t, f) => {
                let (tb, _) = self.infer(b)?;
                self.unify(&tb, &Ty::Bool)?;
                let (tt, _) = self.infer(t)?;
                let (tf, _) = self.infer(f)?;
                self.unify(&tt, &tf)?;
                self.resolve(&tt)
            }
            ExprKind::Let(x, e1, e2) => {
                let (t1, _) = self.infer(e1)?;
                self.vars.push((x.clone(), t1));
                let r = self.infer(e2);
                // Pop exactly the binding we pushed.
                let pos = self.vars.iter().rposition(|(n, _)| n == x).unwrap();
                self.vars.remove(pos);
                r?.0
            }
        };
        self.trail.push(t.clone());
        Ok((t, ()))
    }

    /// Second pass: rewrite the tree with each node's inferred type term
    /// resolved against the final substitution. Replays the post-order
    /// trail the infer pass recorded, so it must be called on the same
    /// expressions, in the same order, as the preceding `infer_*` calls.
    pub fn annotate(&mut self, e: &Expr) -> Expr {
        let kind = e.map_children(|c| self.annotate(c));
        let ty = match self.trail.get(self.trail_pos) {
            Some(t) => self.finish_ty(t),
            None => Type::Int,
        };
        self.trail_pos += 1;
        Expr {
            kind,
            ty: Some(ty),
        }
    }
}
