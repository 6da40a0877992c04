//! Relational assertions over pairs of program states.
//!
//! An assertion constrains *two* executions at once: it is satisfied (or
//! refuted) by a pair of stores and extended heaps. This lets one formula
//! express both ordinary separation-logic facts (`acc(l, 1/2, v)`, guard
//! ownership) and relational facts such as `low(e)` — the expression
//! evaluates to the same value in both executions.
//!
//! Satisfaction ([`sat_pair`]) is decided exactly: for an assertion and a
//! pair of stores, the checker computes a finite symbolic set of all
//! sub-heap pairs that model the assertion (each entry a skeleton heap pair
//! plus a flag saying how much extra heap it may absorb), then tests the
//! given heap pair for membership. Connectives combine these model sets:
//! separating conjunction sums skeletons, plain conjunction intersects
//! model sets, and existentials enumerate the bounded value domain. The
//! result is three-valued ([`Truth`]): a few degenerate intersections and
//! any blown enumeration cap yield `Unknown` rather than a wrong answer.
//!
//! [`reference`] holds a deliberately naive second implementation used to
//! cross-check this one.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::expr::{eval_expr, fresh_name, BinOp, Expr, ExprKind, Store, TyCtx, TypeError};
use crate::frac::Frac;
use crate::heap::ExtHeap;
use crate::matching::has_perfect_matching;
use crate::parse::{ParseError, Parser, Tok};
use crate::rspec::{ActionRef, RSpec};
use crate::value::{enumerate_type, Multiset, Type, Value};

// ---------------------------------------------------------------------------
// Syntax
// ---------------------------------------------------------------------------

/// Selects an action in guard and precondition assertions: the shared
/// action, a unique action by index, or either by name. Names are resolved
/// against a resource specification by [`check_assertion`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ActionSel {
    Shared,
    Index(usize),
    Named(String),
}

/// A relational assertion.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Assertion {
    /// The empty heap — no permissions and no guards — in both executions.
    Emp,
    /// A boolean expression that must be true in both executions. Pure:
    /// satisfied on any heaps.
    Pure(Expr),
    /// `acc(l, q, v)`: each execution's heap is exactly the one location
    /// `l` with permission fraction `q` and value `v` (location and value
    /// evaluated per execution).
    PointsTo(Expr, Frac, Expr),
    /// `P ** Q`: each execution's heap splits into a part satisfying `P`
    /// and a part satisfying `Q`.
    Star(Box<Assertion>, Box<Assertion>),
    /// `P && Q`: both hold on the same heap pair.
    And(Box<Assertion>, Box<Assertion>),
    /// `exists x: T :: P` — the witness may differ between the executions.
    Exists(String, Type, Box<Assertion>),
    /// `sguard(q, e)`: fraction `q` of the shared-action guard carrying
    /// argument multiset `e`, and nothing else (no permissions, no unique
    /// slots).
    SharedGuard(Frac, Expr),
    /// `uguard(a, e)`: the whole guard slot of unique action `a` holding
    /// argument sequence `e`, and nothing else.
    UniqueGuard(ActionSel, Expr),
    /// `b ==> P`: `b` evaluates the same way in both executions, and if it
    /// is true, `P` holds.
    Implies(Expr, Box<Assertion>),
    /// `low(e)`: `e` evaluates to the same value in both executions.
    Low(Expr),
    /// `noguard(P)`: `P` holds and the heap pair carries no guard state at
    /// all.
    NoGuard(Box<Assertion>),
    /// `allpre(a, e)` (or `allpre(e)` for the shared action): the recorded
    /// arguments of action `a` in the two executions can be matched up so
    /// that every matched pair satisfies the action's relational
    /// precondition. For the shared action `e` is a multiset and the
    /// matching is any bijection; for a unique action `e` is a sequence and
    /// the matching is positional (which forces equal lengths).
    PreFor(ActionSel, Expr),
}

impl Assertion {
    pub fn star(p: Assertion, q: Assertion) -> Assertion {
        Assertion::Star(Box::new(p), Box::new(q))
    }

    pub fn and(p: Assertion, q: Assertion) -> Assertion {
        Assertion::And(Box::new(p), Box::new(q))
    }

    pub fn implies(b: Expr, p: Assertion) -> Assertion {
        Assertion::Implies(b, Box::new(p))
    }

    pub fn exists(x: impl Into<String>, ty: Type, p: Assertion) -> Assertion {
        Assertion::Exists(x.into(), ty, Box::new(p))
    }

    pub fn noguard(p: Assertion) -> Assertion {
        Assertion::NoGuard(Box::new(p))
    }

    pub fn points_to(loc: Expr, q: Frac, val: Expr) -> Assertion {
        Assertion::PointsTo(loc, q, val)
    }

    /// Free program variables (existential binders are bound).
    pub fn free_vars(&self) -> BTreeSet<String> {
        match self {
            Assertion::Emp => BTreeSet::new(),
            Assertion::Pure(e) | Assertion::Low(e) => e.free_vars(),
            Assertion::PointsTo(e1, _, e2) => {
                let mut s = e1.free_vars();
                s.extend(e2.free_vars());
                s
            }
            Assertion::Star(p, q) | Assertion::And(p, q) => {
                let mut s = p.free_vars();
                s.extend(q.free_vars());
                s
            }
            Assertion::Exists(x, _, p) => {
                let mut s = p.free_vars();
                s.remove(x);
                s
            }
            Assertion::SharedGuard(_, e)
            | Assertion::UniqueGuard(_, e)
            | Assertion::PreFor(_, e) => e.free_vars(),
            Assertion::Implies(b, p) => {
                let mut s = b.free_vars();
                s.extend(p.free_vars());
                s
            }
            Assertion::NoGuard(p) => p.free_vars(),
        }
    }

    /// Capture-avoiding substitution of `repl` for the variable `x`.
    pub fn subst(&self, x: &str, repl: &Expr) -> Assertion {
        match self {
            Assertion::Emp => Assertion::Emp,
            Assertion::Pure(e) => Assertion::Pure(e.subst(x, repl)),
            Assertion::Low(e) => Assertion::Low(e.subst(x, repl)),
            Assertion::PointsTo(e1, r, e2) => {
                Assertion::PointsTo(e1.subst(x, repl), r.clone(), e2.subst(x, repl))
            }
            Assertion::Star(p, q) => Assertion::star(p.subst(x, repl), q.subst(x, repl)),
            Assertion::And(p, q) => Assertion::and(p.subst(x, repl), q.subst(x, repl)),
            Assertion::Exists(y, t, p) => {
                if y == x {
                    return self.clone();
                }
                let repl_fv = repl.free_vars();
                if repl_fv.contains(y) {
                    let body_fv = p.free_vars();
                    let mut avoid_x = BTreeSet::new();
                    avoid_x.insert(x.to_string());
                    let fresh = fresh_name(y, &[&repl_fv, &body_fv, &avoid_x]);
                    let renamed = p.subst(y, &Expr::var(fresh.clone()));
                    Assertion::Exists(fresh, t.clone(), Box::new(renamed.subst(x, repl)))
                } else {
                    Assertion::Exists(y.clone(), t.clone(), Box::new(p.subst(x, repl)))
                }
            }
            Assertion::SharedGuard(r, e) => Assertion::SharedGuard(r.clone(), e.subst(x, repl)),
            Assertion::UniqueGuard(sel, e) => {
                Assertion::UniqueGuard(sel.clone(), e.subst(x, repl))
            }
            Assertion::Implies(b, p) => Assertion::implies(b.subst(x, repl), p.subst(x, repl)),
            Assertion::NoGuard(p) => Assertion::noguard(p.subst(x, repl)),
            Assertion::PreFor(sel, e) => Assertion::PreFor(sel.clone(), e.subst(x, repl)),
        }
    }
}

/// Every permission fraction literal in the assertion, with multiplicity.
/// Star-split searches over concrete heaps only ever need boundaries that
/// are sums of subsets of these.
pub fn collect_fracs(a: &Assertion) -> Vec<Frac> {
    fn go(a: &Assertion, out: &mut Vec<Frac>) {
        match a {
            Assertion::PointsTo(_, r, _) | Assertion::SharedGuard(r, _) => out.push(r.clone()),
            Assertion::Star(p, q) | Assertion::And(p, q) => {
                go(p, out);
                go(q, out);
            }
            Assertion::Exists(_, _, p) | Assertion::Implies(_, p) | Assertion::NoGuard(p) => {
                go(p, out)
            }
            _ => {}
        }
    }
    let mut out = Vec::new();
    go(a, &mut out);
    out
}

// ---------------------------------------------------------------------------
// Printing (round-trips through the parser)
// ---------------------------------------------------------------------------

/// Whether a pure expression needs parentheses when printed as an atom
/// (the atom grammar reads expressions at comparison level only).
fn pure_needs_parens(e: &Expr) -> bool {
    matches!(
        &e.kind,
        ExprKind::Let(..) | ExprKind::Cond(..) | ExprKind::Binary(BinOp::Or | BinOp::And, _, _)
    )
}

impl Assertion {
    /// `level`: 0 = full assertion, 1 = `**` operand, 2 = `&&` operand,
    /// 3 = right operand of a binary connective (atom position).
    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, level: u8) -> fmt::Result {
        match self {
            Assertion::Emp => write!(f, "emp"),
            Assertion::Pure(e) => {
                if pure_needs_parens(e) {
                    write!(f, "({e})")
                } else {
                    write!(f, "{e}")
                }
            }
            Assertion::Low(e) => write!(f, "low({e})"),
            Assertion::PointsTo(e1, r, e2) => {
                if r.is_one() {
                    write!(f, "acc({e1}, {e2})")
                } else {
                    write!(f, "acc({e1}, {r}, {e2})")
                }
            }
            Assertion::Star(p, q) => {
                let wrap = level > 1;
                if wrap {
                    write!(f, "(")?;
                }
                p.fmt_prec(f, 1)?;
                write!(f, " ** ")?;
                q.fmt_prec(f, 2)?;
                if wrap {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Assertion::And(p, q) => {
                let wrap = level > 2;
                if wrap {
                    write!(f, "(")?;
                }
                p.fmt_prec(f, 2)?;
                write!(f, " && ")?;
                q.fmt_prec(f, 3)?;
                if wrap {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Assertion::Exists(x, t, p) => {
                let wrap = level > 0;
                if wrap {
                    write!(f, "(")?;
                }
                write!(f, "exists {x}: {t} :: ")?;
                p.fmt_prec(f, 0)?;
                if wrap {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Assertion::SharedGuard(r, e) => write!(f, "sguard({r}, {e})"),
            Assertion::UniqueGuard(sel, e) => match sel {
                ActionSel::Index(i) => write!(f, "uguard({i}, {e})"),
                ActionSel::Named(n) => write!(f, "uguard({n}, {e})"),
                ActionSel::Shared => write!(f, "uguard(shared, {e})"),
            },
            Assertion::Implies(b, p) => {
                let wrap = level > 0;
                if wrap {
                    write!(f, "(")?;
                }
                if pure_needs_parens(b) {
                    write!(f, "({b}) ==> ")?;
                } else {
                    write!(f, "{b} ==> ")?;
                }
                p.fmt_prec(f, 0)?;
                if wrap {
                    write!(f, ")")?;
                }
                Ok(())
            }
            Assertion::NoGuard(p) => {
                write!(f, "noguard(")?;
                p.fmt_prec(f, 0)?;
                write!(f, ")")
            }
            Assertion::PreFor(sel, e) => match sel {
                ActionSel::Shared => write!(f, "allpre({e})"),
                ActionSel::Index(i) => write!(f, "allpre({i}, {e})"),
                ActionSel::Named(n) => write!(f, "allpre({n}, {e})"),
            },
        }
    }
}

impl fmt::Display for Assertion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

/// Parses an assertion. Grammar, loosest first: `b ==> P` (right
/// associative, boolean left-hand side), `P ** Q` (left associative),
/// `P && Q`, then atoms. Atoms are the keyword forms (`emp`, `low(e)`,
/// `acc(l, q, v)`, `sguard(q, e)`, `uguard(a, e)`, `allpre(..)`,
/// `noguard(P)`, `exists x: T :: P`), a parenthesized assertion, or a pure
/// boolean expression at comparison level — boolean `||` and `?:` inside a
/// pure atom must be parenthesized.
pub fn parse_assertion(src: &str) -> Result<Assertion, ParseError> {
    let mut p = Parser::new(src)?;
    p.strip_newlines();
    let a = assertion(&mut p)?;
    p.expect_eof()?;
    Ok(a)
}

pub(crate) fn assertion(p: &mut Parser) -> Result<Assertion, ParseError> {
    let lhs = star_level(p)?;
    if p.eat(&Tok::Implies) {
        let Assertion::Pure(b) = lhs else {
            return Err(p.err(
                "the left-hand side of `==>` must be a boolean expression".to_string(),
            ));
        };
        let rhs = assertion(p)?;
        return Ok(Assertion::implies(b, rhs));
    }
    Ok(lhs)
}

fn star_level(p: &mut Parser) -> Result<Assertion, ParseError> {
    let mut lhs = and_level(p)?;
    while p.eat(&Tok::StarStar) {
        let rhs = and_level(p)?;
        lhs = Assertion::star(lhs, rhs);
    }
    Ok(lhs)
}

fn and_level(p: &mut Parser) -> Result<Assertion, ParseError> {
    let mut lhs = atom(p)?;
    while p.eat(&Tok::AndAnd) {
        let rhs = atom(p)?;
        lhs = Assertion::and(lhs, rhs);
    }
    Ok(lhs)
}

/// Tokens that may legally follow a completed atom.
fn ends_atom(t: &Tok) -> bool {
    matches!(
        t,
        Tok::StarStar
            | Tok::AndAnd
            | Tok::Implies
            | Tok::RParen
            | Tok::RBrace
            | Tok::Comma
            | Tok::Semi
            | Tok::Eof
    )
}

fn fraction(p: &mut Parser) -> Result<Frac, ParseError> {
    let num = p.int()?;
    let den = if p.eat(&Tok::Slash) { p.int()? } else { 1 };
    Frac::new(num, den).map_err(|e| p.err(e.to_string()))
}

/// An action name or index, as used by `uguard` and two-argument `allpre`.
fn action_sel(p: &mut Parser) -> Result<ActionSel, ParseError> {
    if matches!(p.peek(), Tok::Int(_)) {
        return Ok(ActionSel::Index(p.int()? as usize));
    }
    Ok(ActionSel::Named(p.var_ident()?))
}

fn atom(p: &mut Parser) -> Result<Assertion, ParseError> {
    if p.eat_word("emp") {
        return Ok(Assertion::Emp);
    }
    if p.eat_word("low") {
        p.expect(&Tok::LParen)?;
        let e = p.expr()?;
        p.expect(&Tok::RParen)?;
        return Ok(Assertion::Low(e));
    }
    if p.eat_word("acc") {
        p.expect(&Tok::LParen)?;
        let e1 = p.expr()?;
        p.expect(&Tok::Comma)?;
        let save = p.save();
        if matches!(p.peek(), Tok::Int(_)) {
            let n = p.int()?;
            if p.eat(&Tok::Slash) {
                // An explicit `n/d` is always the fraction of a 3-argument
                // form (the expression language has no division).
                let d = p.int()?;
                let r = Frac::new(n, d).map_err(|e| p.err(e.to_string()))?;
                p.expect(&Tok::Comma)?;
                let e2 = p.expr()?;
                p.expect(&Tok::RParen)?;
                return Ok(Assertion::PointsTo(e1, r, e2));
            }
            if p.eat(&Tok::Comma) {
                let r = Frac::new(n, 1).map_err(|e| p.err(e.to_string()))?;
                let e2 = p.expr()?;
                p.expect(&Tok::RParen)?;
                return Ok(Assertion::PointsTo(e1, r, e2));
            }
            p.restore(save);
        }
        let e2 = p.expr()?;
        p.expect(&Tok::RParen)?;
        return Ok(Assertion::PointsTo(e1, Frac::one(), e2));
    }
    if p.eat_word("sguard") {
        p.expect(&Tok::LParen)?;
        let r = fraction(p)?;
        p.expect(&Tok::Comma)?;
        let e = p.expr()?;
        p.expect(&Tok::RParen)?;
        return Ok(Assertion::SharedGuard(r, e));
    }
    if p.eat_word("uguard") {
        p.expect(&Tok::LParen)?;
        let sel = action_sel(p)?;
        p.expect(&Tok::Comma)?;
        let e = p.expr()?;
        p.expect(&Tok::RParen)?;
        return Ok(Assertion::UniqueGuard(sel, e));
    }
    if p.eat_word("allpre") {
        p.expect(&Tok::LParen)?;
        // Two-argument form: an action name or index, then the arguments.
        let save = p.save();
        if matches!(p.peek(), Tok::Int(_) | Tok::Ident(_)) {
            if let Ok(sel) = action_sel(p) {
                if p.eat(&Tok::Comma) {
                    let e = p.expr()?;
                    p.expect(&Tok::RParen)?;
                    return Ok(Assertion::PreFor(sel, e));
                }
            }
            p.restore(save);
        }
        let e = p.expr()?;
        p.expect(&Tok::RParen)?;
        return Ok(Assertion::PreFor(ActionSel::Shared, e));
    }
    if p.eat_word("noguard") {
        p.expect(&Tok::LParen)?;
        let a = assertion(p)?;
        p.expect(&Tok::RParen)?;
        return Ok(Assertion::noguard(a));
    }
    if p.eat_word("exists") {
        let x = p.var_ident()?;
        p.expect(&Tok::Colon)?;
        let t = p.ty()?;
        p.expect(&Tok::ColonColon)?;
        let body = assertion(p)?;
        return Ok(Assertion::exists(x, t, body));
    }

    // A pure expression at comparison level, or a parenthesized assertion.
    let save = p.save();
    match p.cmp_expr() {
        Ok(e) => {
            if ends_atom(p.peek()) {
                return Ok(Assertion::Pure(e));
            }
            if matches!(p.peek(), Tok::OrOr) {
                return Err(p.err(
                    "boolean `||` must be parenthesized inside an assertion, e.g. `(a || b)`"
                        .to_string(),
                ));
            }
            if matches!(p.peek(), Tok::Question) {
                return Err(p.err(
                    "conditional expressions must be parenthesized inside an assertion"
                        .to_string(),
                ));
            }
            p.restore(save);
        }
        Err(e) => {
            p.restore(save);
            if !matches!(p.peek(), Tok::LParen) {
                return Err(e);
            }
        }
    }
    p.expect(&Tok::LParen)?;
    let a = assertion(p)?;
    p.expect(&Tok::RParen)?;
    Ok(a)
}

// ---------------------------------------------------------------------------
// Type checking
// ---------------------------------------------------------------------------

fn ty_err(message: String) -> TypeError {
    TypeError {
        message,
        context: String::new(),
    }
}

/// Resolves an action selector against a specification (if any). `unique
/// permitted / shared permitted` control which kinds the call site accepts.
fn resolve_sel_checked(
    sel: &ActionSel,
    spec: Option<&RSpec>,
    site: &str,
    allow_shared: bool,
) -> Result<ActionSel, TypeError> {
    match sel {
        ActionSel::Shared => Ok(ActionSel::Shared),
        ActionSel::Index(i) => {
            if let Some(sp) = spec {
                if *i >= sp.unique.len() {
                    return Err(ty_err(format!(
                        "{site} refers to unique action {i}, but specification `{}` has {}",
                        sp.name,
                        sp.unique.len()
                    )));
                }
            }
            Ok(ActionSel::Index(*i))
        }
        ActionSel::Named(n) => {
            let Some(sp) = spec else {
                return Err(ty_err(format!(
                    "{site} names action `{n}`, but no specification is in scope; use an index"
                )));
            };
            match sp.action_by_name(n) {
                Some(ActionRef::Unique(i)) => Ok(ActionSel::Index(i)),
                Some(ActionRef::Shared) if allow_shared => Ok(ActionSel::Shared),
                Some(ActionRef::Shared) => Err(ty_err(format!(
                    "{site} names `{n}`, which is the shared action; use sguard"
                ))),
                None => Err(ty_err(format!(
                    "{site} names `{n}`, which is not an action of specification `{}`",
                    sp.name
                ))),
            }
        }
    }
}

/// Type-checks an assertion, returning an annotated copy with action names
/// resolved to indices. Variables are inferred into `ctx` as in expression
/// checking; the binder of `exists` shadows and is restored afterwards.
pub fn check_assertion(
    ctx: &mut TyCtx,
    a: &Assertion,
    spec: Option<&RSpec>,
) -> Result<Assertion, TypeError> {
    match a {
        Assertion::Emp => Ok(Assertion::Emp),
        Assertion::Pure(e) => Ok(Assertion::Pure(ctx.check_expecting(e, &Type::Bool)?)),
        Assertion::Low(e) => Ok(Assertion::Low(ctx.check(e)?)),
        Assertion::PointsTo(e1, r, e2) => {
            let e1 = ctx.check_expecting(e1, &Type::Int)?;
            let e2 = ctx.check(e2)?;
            Ok(Assertion::PointsTo(e1, r.clone(), e2))
        }
        Assertion::Star(p, q) => Ok(Assertion::star(
            check_assertion(ctx, p, spec)?,
            check_assertion(ctx, q, spec)?,
        )),
        Assertion::And(p, q) => Ok(Assertion::and(
            check_assertion(ctx, p, spec)?,
            check_assertion(ctx, q, spec)?,
        )),
        Assertion::Exists(x, t, p) => {
            let shadowed = ctx.typed_vars().get(x).cloned();
            ctx.declare(x, t);
            let body = check_assertion(ctx, p, spec);
            ctx.undeclare(x);
            if let Some(old) = shadowed {
                ctx.declare(x, &old);
            }
            Ok(Assertion::Exists(x.clone(), t.clone(), Box::new(body?)))
        }
        Assertion::SharedGuard(r, e) => {
            let e = match spec {
                Some(sp) => {
                    ctx.check_expecting(e, &Type::multiset(sp.shared.arg_ty.clone()))?
                }
                None => {
                    let e = ctx.check(e)?;
                    if !matches!(e.ty(), Type::Multiset(_)) {
                        return Err(ty_err(format!(
                            "sguard arguments must form a multiset, got {}",
                            e.ty()
                        )));
                    }
                    e
                }
            };
            Ok(Assertion::SharedGuard(r.clone(), e))
        }
        Assertion::UniqueGuard(sel, e) => {
            let sel = resolve_sel_checked(sel, spec, "uguard", false)?;
            let e = match (&sel, spec) {
                (ActionSel::Index(i), Some(sp)) => {
                    ctx.check_expecting(e, &Type::seq(sp.unique[*i].arg_ty.clone()))?
                }
                _ => {
                    let e = ctx.check(e)?;
                    if !matches!(e.ty(), Type::Seq(_)) {
                        return Err(ty_err(format!(
                            "uguard arguments must form a sequence, got {}",
                            e.ty()
                        )));
                    }
                    e
                }
            };
            Ok(Assertion::UniqueGuard(sel, e))
        }
        Assertion::Implies(b, p) => {
            let b = ctx.check_expecting(b, &Type::Bool)?;
            let p = check_assertion(ctx, p, spec)?;
            Ok(Assertion::implies(b, p))
        }
        Assertion::NoGuard(p) => Ok(Assertion::noguard(check_assertion(ctx, p, spec)?)),
        Assertion::PreFor(sel, e) => {
            let sel = resolve_sel_checked(sel, spec, "allpre", true)?;
            let e = match (&sel, spec) {
                (ActionSel::Shared, Some(sp)) => {
                    ctx.check_expecting(e, &Type::multiset(sp.shared.arg_ty.clone()))?
                }
                (ActionSel::Index(i), Some(sp)) => {
                    ctx.check_expecting(e, &Type::seq(sp.unique[*i].arg_ty.clone()))?
                }
                (ActionSel::Shared, None) => {
                    let e = ctx.check(e)?;
                    if !matches!(e.ty(), Type::Multiset(_)) {
                        return Err(ty_err(format!(
                            "allpre for the shared action takes a multiset, got {}",
                            e.ty()
                        )));
                    }
                    e
                }
                _ => {
                    let e = ctx.check(e)?;
                    if !matches!(e.ty(), Type::Seq(_)) {
                        return Err(ty_err(format!(
                            "allpre for a unique action takes a sequence, got {}",
                            e.ty()
                        )));
                    }
                    e
                }
            };
            Ok(Assertion::PreFor(sel, e))
        }
    }
}

// ---------------------------------------------------------------------------
// Satisfaction
// ---------------------------------------------------------------------------

/// A pair of states: one store and extended heap per execution.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct StatePair {
    pub s1: Store,
    pub h1: ExtHeap,
    pub s2: Store,
    pub h2: ExtHeap,
}

impl StatePair {
    /// Panics if the heaps disagree on the number of unique-action slots —
    /// such a pair cannot arise from two runs of one program under one
    /// specification.
    pub fn new(s1: Store, h1: ExtHeap, s2: Store, h2: ExtHeap) -> StatePair {
        assert_eq!(
            h1.unique_slots(),
            h2.unique_slots(),
            "state pair with mismatched guard slots"
        );
        StatePair { s1, h1, s2, h2 }
    }

    pub fn unique_slots(&self) -> usize {
        self.h1.unique_slots()
    }
}

/// Outcome of a satisfaction or entailment query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl Truth {
    pub fn from_bool(b: bool) -> Truth {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }

    pub fn is_true(self) -> bool {
        self == Truth::True
    }
}

impl fmt::Display for Truth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Truth::True => write!(f, "true"),
            Truth::False => write!(f, "false"),
            Truth::Unknown => write!(f, "unknown"),
        }
    }
}

/// Everything a satisfaction query needs besides the assertion and states:
/// the resource specification (for guard and precondition atoms) and the
/// enumeration bounds.
#[derive(Clone, Copy)]
pub struct SatCtx<'a> {
    pub spec: Option<&'a RSpec>,
    pub bounds: &'a Bounds,
}

/// How much extra heap a model skeleton may absorb beyond itself.
/// The order matters: `**` combines two entries with the larger slack,
/// `&&` intersections produce the smaller.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) enum Slack {
    /// The models are exactly the skeleton pair.
    Exact,
    /// Skeleton plus arbitrary permissions (no guard state) on each side.
    PermExtra,
    /// Skeleton plus arbitrary compatible heap on each side.
    AnyExtra,
}

/// One family of models: a skeleton heap per execution plus the slack mode.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub(crate) struct Atom {
    pub(crate) sk1: ExtHeap,
    pub(crate) sk2: ExtHeap,
    pub(crate) slack: Slack,
}

/// A finite under-approximation of an assertion's models (for the given
/// stores). When `unknown` is false it is exact.
#[derive(Debug, Clone, Default)]
pub(crate) struct Models {
    pub(crate) atoms: BTreeSet<Atom>,
    pub(crate) unknown: bool,
}

impl Models {
    fn none() -> Models {
        Models::default()
    }

    fn unknown_only() -> Models {
        Models {
            atoms: BTreeSet::new(),
            unknown: true,
        }
    }

    fn just(atom: Atom) -> Models {
        let mut atoms = BTreeSet::new();
        atoms.insert(atom);
        Models {
            atoms,
            unknown: false,
        }
    }

    fn insert_capped(&mut self, atom: Atom, cap: usize) {
        if self.atoms.len() >= cap {
            self.unknown = true;
        } else {
            self.atoms.insert(atom);
        }
    }
}

/// Does concrete heap `h` belong to the side-denotation of skeleton `sk`
/// under `slack`?
pub(crate) fn mem_side(h: &ExtHeap, sk: &ExtHeap, slack: Slack) -> bool {
    match slack {
        Slack::Exact => h == sk,
        Slack::AnyExtra => h.subtract(sk).is_some(),
        Slack::PermExtra => h
            .subtract(sk)
            .is_some_and(|rest| rest.sguard.is_none() && rest.uguard_all_absent()),
    }
}

pub(crate) fn mem_atom(h1: &ExtHeap, h2: &ExtHeap, atom: &Atom) -> bool {
    mem_side(h1, &atom.sk1, atom.slack) && mem_side(h2, &atom.sk2, atom.slack)
}

pub(crate) fn guard_free(h: &ExtHeap) -> bool {
    h.sguard.is_none() && h.uguard_all_absent()
}

pub(crate) fn ms_contains(big: &Multiset, small: &Multiset) -> bool {
    small.counts().all(|(v, n)| big.count(v) >= n)
}

/// Location-wise join of two permission skeletons under the sub-heap
/// order: max fraction, equal values required.
fn perm_join(
    x: &std::collections::BTreeMap<i64, (Frac, Value)>,
    y: &std::collections::BTreeMap<i64, (Frac, Value)>,
) -> Option<std::collections::BTreeMap<i64, (Frac, Value)>> {
    let mut out = x.clone();
    for (loc, (qy, vy)) in y {
        match out.get_mut(loc) {
            None => {
                out.insert(*loc, (qy.clone(), vy.clone()));
            }
            Some((qx, vx)) => {
                if vx != vy {
                    return None;
                }
                if *qy > *qx {
                    *qx = qy.clone();
                }
            }
        }
    }
    Some(out)
}

/// The intersection of two same-side denotations turned out not to have a
/// finite skeleton representation.
struct Dirty;

/// Intersection of `{x : x ⊇ a, guards fixed}` with `{x : x ⊇ b, extras
/// unrestricted}` — always clean.
fn meet_perm_any(a: &ExtHeap, b: &ExtHeap) -> Option<ExtHeap> {
    for (sa, sb) in a.uguard.iter().zip(&b.uguard) {
        if sb.is_some() && sa != sb {
            return None;
        }
    }
    match (&a.sguard, &b.sguard) {
        (_, None) => {}
        (None, Some(_)) => return None,
        (Some((ra, ma)), Some((rb, mb))) => {
            let ok = (ra == rb && ma == mb) || (ra > rb && ms_contains(ma, mb));
            if !ok {
                return None;
            }
        }
    }
    let perm = perm_join(&a.perm, &b.perm)?;
    Some(ExtHeap {
        perm,
        sguard: a.sguard.clone(),
        uguard: a.uguard.clone(),
    })
}

/// Intersection of two unrestricted-extras denotations.
fn meet_any_any(a: &ExtHeap, b: &ExtHeap) -> Result<Option<ExtHeap>, Dirty> {
    let Some(perm) = perm_join(&a.perm, &b.perm) else {
        return Ok(None);
    };
    let mut uguard = Vec::with_capacity(a.uguard.len());
    for (sa, sb) in a.uguard.iter().zip(&b.uguard) {
        match (sa, sb) {
            (None, None) => uguard.push(None),
            (Some(s), None) | (None, Some(s)) => uguard.push(Some(s.clone())),
            (Some(s), Some(t)) => {
                if s == t {
                    uguard.push(Some(s.clone()));
                } else {
                    return Ok(None);
                }
            }
        }
    }
    let sguard = match (&a.sguard, &b.sguard) {
        (None, None) => None,
        (Some(g), None) | (None, Some(g)) => Some(g.clone()),
        (Some((r1, m1)), Some((r2, m2))) => {
            if r1 == r2 && m1 == m2 {
                Some((r1.clone(), m1.clone()))
            } else if r1 < r2 && ms_contains(m2, m1) {
                Some((r2.clone(), m2.clone()))
            } else if r2 < r1 && ms_contains(m1, m2) {
                Some((r1.clone(), m1.clone()))
            } else {
                // Any common extension needs a strictly larger fraction
                // than both; impossible at 1, not finitely describable
                // otherwise.
                let rmax = if r1 > r2 { r1 } else { r2 };
                if rmax.is_one() {
                    return Ok(None);
                }
                return Err(Dirty);
            }
        }
    };
    Ok(Some(ExtHeap {
        perm,
        sguard,
        uguard,
    }))
}

fn meet_atoms(a: &Atom, b: &Atom) -> Result<Option<Atom>, Dirty> {
    let (lo, hi) = if a.slack <= b.slack { (a, b) } else { (b, a) };
    match (lo.slack, hi.slack) {
        (Slack::Exact, _) => Ok(mem_atom(&lo.sk1, &lo.sk2, hi).then(|| lo.clone())),
        (Slack::PermExtra, Slack::PermExtra) => {
            let eq_guards = |x: &ExtHeap, y: &ExtHeap| x.sguard == y.sguard && x.uguard == y.uguard;
            if !eq_guards(&lo.sk1, &hi.sk1) || !eq_guards(&lo.sk2, &hi.sk2) {
                return Ok(None);
            }
            let (Some(p1), Some(p2)) = (
                perm_join(&lo.sk1.perm, &hi.sk1.perm),
                perm_join(&lo.sk2.perm, &hi.sk2.perm),
            ) else {
                return Ok(None);
            };
            Ok(Some(Atom {
                sk1: ExtHeap {
                    perm: p1,
                    sguard: lo.sk1.sguard.clone(),
                    uguard: lo.sk1.uguard.clone(),
                },
                sk2: ExtHeap {
                    perm: p2,
                    sguard: lo.sk2.sguard.clone(),
                    uguard: lo.sk2.uguard.clone(),
                },
                slack: Slack::PermExtra,
            }))
        }
        (Slack::PermExtra, Slack::AnyExtra) => {
            let (Some(sk1), Some(sk2)) = (
                meet_perm_any(&lo.sk1, &hi.sk1),
                meet_perm_any(&lo.sk2, &hi.sk2),
            ) else {
                return Ok(None);
            };
            Ok(Some(Atom {
                sk1,
                sk2,
                slack: Slack::PermExtra,
            }))
        }
        (Slack::AnyExtra, Slack::AnyExtra) => {
            let (Some(sk1), Some(sk2)) = (
                meet_any_any(&lo.sk1, &hi.sk1)?,
                meet_any_any(&lo.sk2, &hi.sk2)?,
            ) else {
                return Ok(None);
            };
            Ok(Some(Atom {
                sk1,
                sk2,
                slack: Slack::AnyExtra,
            }))
        }
        _ => unreachable!("lo <= hi by construction"),
    }
}

/// Action selector resolution at satisfaction time.
enum Resolved {
    Shared,
    Unique(usize),
    /// Unresolvable without (or against) a specification.
    Unknown,
}

fn resolve_sel(ctx: &SatCtx, sel: &ActionSel) -> Resolved {
    match sel {
        ActionSel::Shared => Resolved::Shared,
        ActionSel::Index(i) => Resolved::Unique(*i),
        ActionSel::Named(n) => match ctx.spec.and_then(|sp| sp.action_by_name(n)) {
            Some(ActionRef::Shared) => Resolved::Shared,
            Some(ActionRef::Unique(i)) => Resolved::Unique(i),
            None => Resolved::Unknown,
        },
    }
}

fn pure_atom(slots: usize) -> Atom {
    Atom {
        sk1: ExtHeap::unit(slots),
        sk2: ExtHeap::unit(slots),
        slack: Slack::AnyExtra,
    }
}

/// Whether the recorded shared-action arguments of the two executions can
/// be paired bijectively with the action's relational precondition holding
/// for every pair.
pub fn shared_args_related(spec: &RSpec, m1: &Multiset, m2: &Multiset) -> bool {
    let l1 = m1.elements();
    let l2 = m2.elements();
    has_perfect_matching(l1.len(), l2.len(), |i, j| {
        spec.pre_sat(ActionRef::Shared, &l1[i], &l2[j])
    })
}

/// Whether two recorded unique-action argument sequences are pointwise
/// related by the action's precondition (equal lengths required).
pub fn unique_args_related(spec: &RSpec, idx: usize, q1: &[Value], q2: &[Value]) -> bool {
    q1.len() == q2.len()
        && q1
            .iter()
            .zip(q2)
            .all(|(a, b)| spec.pre_sat(ActionRef::Unique(idx), a, b))
}

pub(crate) fn models_for(
    ctx: &SatCtx,
    a: &Assertion,
    s1: &Store,
    s2: &Store,
    slots: usize,
) -> Models {
    let cap = usize::try_from(ctx.bounds.max_enum).unwrap_or(usize::MAX);
    match a {
        Assertion::Emp => Models::just(Atom {
            sk1: ExtHeap::unit(slots),
            sk2: ExtHeap::unit(slots),
            slack: Slack::Exact,
        }),
        Assertion::Pure(b) => {
            if eval_expr(b, s1).truthy() && eval_expr(b, s2).truthy() {
                Models::just(pure_atom(slots))
            } else {
                Models::none()
            }
        }
        Assertion::Low(e) => {
            if eval_expr(e, s1) == eval_expr(e, s2) {
                Models::just(pure_atom(slots))
            } else {
                Models::none()
            }
        }
        Assertion::PointsTo(e1, r, e2) => {
            let (l1, l2) = (eval_expr(e1, s1), eval_expr(e1, s2));
            let (Value::Int(l1), Value::Int(l2)) = (l1, l2) else {
                return Models::unknown_only();
            };
            Models::just(Atom {
                sk1: ExtHeap::points_to(slots, l1, r.clone(), eval_expr(e2, s1)),
                sk2: ExtHeap::points_to(slots, l2, r.clone(), eval_expr(e2, s2)),
                slack: Slack::Exact,
            })
        }
        Assertion::Star(p, q) => {
            let mp = models_for(ctx, p, s1, s2, slots);
            let mq = models_for(ctx, q, s1, s2, slots);
            let mut out = Models {
                atoms: BTreeSet::new(),
                unknown: mp.unknown || mq.unknown,
            };
            for x in &mp.atoms {
                for y in &mq.atoms {
                    if let (Some(sk1), Some(sk2)) = (x.sk1.add(&y.sk1), x.sk2.add(&y.sk2)) {
                        out.insert_capped(
                            Atom {
                                sk1,
                                sk2,
                                slack: x.slack.max(y.slack),
                            },
                            cap,
                        );
                    }
                }
            }
            out
        }
        Assertion::And(p, q) => {
            let mp = models_for(ctx, p, s1, s2, slots);
            let mq = models_for(ctx, q, s1, s2, slots);
            let mut out = Models {
                atoms: BTreeSet::new(),
                unknown: mp.unknown || mq.unknown,
            };
            for x in &mp.atoms {
                for y in &mq.atoms {
                    match meet_atoms(x, y) {
                        Ok(Some(atom)) => out.insert_capped(atom, cap),
                        Ok(None) => {}
                        Err(Dirty) => out.unknown = true,
                    }
                }
            }
            out
        }
        Assertion::Exists(x, ty, p) => {
            let Ok(vals) = enumerate_type(ty, ctx.bounds) else {
                return Models::unknown_only();
            };
            let n = vals.len() as u64;
            if n.saturating_mul(n) > ctx.bounds.max_enum {
                return Models::unknown_only();
            }
            let mut out = Models::none();
            for v1 in &vals {
                for v2 in &vals {
                    let mut t1 = s1.clone();
                    t1.insert(x.clone(), v1.clone());
                    let mut t2 = s2.clone();
                    t2.insert(x.clone(), v2.clone());
                    let m = models_for(ctx, p, &t1, &t2, slots);
                    out.unknown |= m.unknown;
                    for atom in m.atoms {
                        out.insert_capped(atom, cap);
                    }
                }
            }
            out
        }
        Assertion::SharedGuard(r, e) => {
            let (m1, m2) = (eval_expr(e, s1), eval_expr(e, s2));
            let (Value::Multiset(m1), Value::Multiset(m2)) = (m1, m2) else {
                return Models::unknown_only();
            };
            let mut sk1 = ExtHeap::unit(slots);
            sk1.sguard = Some((r.clone(), m1));
            let mut sk2 = ExtHeap::unit(slots);
            sk2.sguard = Some((r.clone(), m2));
            Models::just(Atom {
                sk1,
                sk2,
                slack: Slack::Exact,
            })
        }
        Assertion::UniqueGuard(sel, e) => {
            let idx = match resolve_sel(ctx, sel) {
                Resolved::Unique(i) => i,
                _ => return Models::unknown_only(),
            };
            if idx >= slots {
                return Models::none();
            }
            let (q1, q2) = (eval_expr(e, s1), eval_expr(e, s2));
            let (Value::Seq(q1), Value::Seq(q2)) = (q1, q2) else {
                return Models::unknown_only();
            };
            let mut sk1 = ExtHeap::unit(slots);
            sk1.uguard[idx] = Some(q1);
            let mut sk2 = ExtHeap::unit(slots);
            sk2.uguard[idx] = Some(q2);
            Models::just(Atom {
                sk1,
                sk2,
                slack: Slack::Exact,
            })
        }
        Assertion::Implies(b, p) => {
            let (v1, v2) = (eval_expr(b, s1), eval_expr(b, s2));
            if v1 != v2 {
                return Models::none();
            }
            if v1.truthy() {
                models_for(ctx, p, s1, s2, slots)
            } else {
                Models::just(pure_atom(slots))
            }
        }
        Assertion::NoGuard(p) => {
            let m = models_for(ctx, p, s1, s2, slots);
            let mut out = Models {
                atoms: BTreeSet::new(),
                unknown: m.unknown,
            };
            for atom in m.atoms {
                if !(guard_free(&atom.sk1) && guard_free(&atom.sk2)) {
                    continue;
                }
                let slack = match atom.slack {
                    Slack::AnyExtra => Slack::PermExtra,
                    s => s,
                };
                out.insert_capped(Atom { slack, ..atom }, cap);
            }
            out
        }
        Assertion::PreFor(sel, e) => {
            let Some(spec) = ctx.spec else {
                return Models::unknown_only();
            };
            let holds = match resolve_sel(ctx, sel) {
                Resolved::Shared => {
                    let (m1, m2) = (eval_expr(e, s1), eval_expr(e, s2));
                    let (Value::Multiset(m1), Value::Multiset(m2)) = (m1, m2) else {
                        return Models::unknown_only();
                    };
                    shared_args_related(spec, &m1, &m2)
                }
                Resolved::Unique(i) => {
                    if i >= spec.unique.len() {
                        return Models::unknown_only();
                    }
                    let (q1, q2) = (eval_expr(e, s1), eval_expr(e, s2));
                    let (Value::Seq(q1), Value::Seq(q2)) = (q1, q2) else {
                        return Models::unknown_only();
                    };
                    unique_args_related(spec, i, &q1, &q2)
                }
                Resolved::Unknown => return Models::unknown_only(),
            };
            if holds {
                Models::just(pure_atom(slots))
            } else {
                Models::none()
            }
        }
    }
}

/// Does the state pair satisfy the assertion? Exact over the bounded
/// domains; `Unknown` when an enumeration cap was hit or an intersection
/// had no finite description.
pub fn sat_pair(ctx: &SatCtx, a: &Assertion, pair: &StatePair) -> Truth {
    let m = models_for(ctx, a, &pair.s1, &pair.s2, pair.unique_slots());
    if m.atoms.iter().any(|at| mem_atom(&pair.h1, &pair.h2, at)) {
        Truth::True
    } else if m.unknown {
        Truth::Unknown
    } else {
        Truth::False
    }
}

// ---------------------------------------------------------------------------
// Reference implementation
// ---------------------------------------------------------------------------

pub mod reference {
    //! A deliberately naive second implementation of assertion
    //! satisfaction, used to cross-check [`sat_pair`](super::sat_pair).
    //!
    //! Each connective is decided by brute force on the concrete heap pair:
    //! separating conjunction enumerates explicit splits of both heaps
    //! (permission boundaries drawn from a finite candidate pool),
    //! existentials enumerate the bounded value domain, and the
    //! precondition bijection for shared actions is the literal recursive
    //! definition rather than a matching algorithm. Exponential — use only
    //! on small states.

    use super::*;

    /// Fraction boundaries that any satisfying split can be normalized to:
    /// sums of the assertion's fraction literals, the fractions present in
    /// the heaps, and their differences.
    pub fn split_pool(a: &Assertion, pair: &StatePair) -> BTreeSet<Frac> {
        let mut sums: BTreeSet<Frac> = BTreeSet::new();
        for lit in collect_fracs(a) {
            let mut next = sums.clone();
            next.insert(lit.clone());
            for s in &sums {
                if let Some(t) = s.checked_add(&lit) {
                    next.insert(t);
                }
            }
            sums = next;
        }
        let mut heap_fracs: BTreeSet<Frac> = BTreeSet::new();
        for h in [&pair.h1, &pair.h2] {
            for (q, _) in h.perm.values() {
                heap_fracs.insert(q.clone());
            }
            if let Some((q, _)) = &h.sguard {
                heap_fracs.insert(q.clone());
            }
        }
        let mut pool = sums.clone();
        pool.extend(heap_fracs.iter().cloned());
        for q in &heap_fracs {
            for s in &sums {
                if let Some(d) = q.checked_sub(s) {
                    pool.insert(d);
                }
            }
        }
        pool
    }

    /// All splits `h = left + right` with permission boundaries drawn from
    /// `pool`. `None` when the enumeration would exceed `fuel` entries.
    fn splits(h: &ExtHeap, pool: &BTreeSet<Frac>, fuel: u64) -> Option<Vec<(ExtHeap, ExtHeap)>> {
        let slots = h.unique_slots();
        let mut out = vec![(ExtHeap::unit(slots), ExtHeap::unit(slots))];

        for (loc, (q, v)) in &h.perm {
            let mut options: Vec<(Option<Frac>, Option<Frac>)> =
                vec![(Some(q.clone()), None), (None, Some(q.clone()))];
            for c in pool {
                if let Some(rest) = q.checked_sub(c) {
                    options.push((Some(c.clone()), Some(rest)));
                }
            }
            if (out.len() as u64).saturating_mul(options.len() as u64) > fuel {
                return None;
            }
            let mut next = Vec::with_capacity(out.len() * options.len());
            for (l, r) in &out {
                for (ql, qr) in &options {
                    let mut l2 = l.clone();
                    let mut r2 = r.clone();
                    if let Some(ql) = ql {
                        l2.perm.insert(*loc, (ql.clone(), v.clone()));
                    }
                    if let Some(qr) = qr {
                        r2.perm.insert(*loc, (qr.clone(), v.clone()));
                    }
                    next.push((l2, r2));
                }
            }
            out = next;
        }

        type GuardSplit = (Option<(Frac, Multiset)>, Option<(Frac, Multiset)>);
        if let Some((q, m)) = &h.sguard {
            let mut options: Vec<GuardSplit> = vec![
                (Some((q.clone(), m.clone())), None),
                (None, Some((q.clone(), m.clone()))),
            ];
            for c in pool {
                let Some(rest) = q.checked_sub(c) else {
                    continue;
                };
                for part in m.sub_multisets() {
                    let other = m.diff(&part);
                    options.push((Some((c.clone(), part)), Some((rest.clone(), other))));
                }
            }
            if (out.len() as u64).saturating_mul(options.len() as u64) > fuel {
                return None;
            }
            let mut next = Vec::with_capacity(out.len() * options.len());
            for (l, r) in &out {
                for (gl, gr) in &options {
                    let mut l2 = l.clone();
                    let mut r2 = r.clone();
                    l2.sguard = gl.clone();
                    r2.sguard = gr.clone();
                    next.push((l2, r2));
                }
            }
            out = next;
        }

        for (i, slot) in h.uguard.iter().enumerate() {
            let Some(seq) = slot else { continue };
            if (out.len() as u64).saturating_mul(2) > fuel {
                return None;
            }
            let mut next = Vec::with_capacity(out.len() * 2);
            for (l, r) in &out {
                let mut l2 = l.clone();
                l2.uguard[i] = Some(seq.clone());
                next.push((l2, r.clone()));
                let mut r2 = r.clone();
                r2.uguard[i] = Some(seq.clone());
                next.push((l.clone(), r2));
            }
            out = next;
        }
        Some(out)
    }

    /// The literal recursive bijection condition: some element of each
    /// multiset can be matched (satisfying the shared precondition) and
    /// removing both leaves related multisets.
    fn bijection_pre(spec: &RSpec, m1: &Multiset, m2: &Multiset) -> bool {
        if m1.is_empty() && m2.is_empty() {
            return true;
        }
        for (x1, _) in m1.counts() {
            for (x2, _) in m2.counts() {
                if spec.pre_sat(ActionRef::Shared, x1, x2) {
                    let mut r1 = m1.clone();
                    r1.remove_one(x1);
                    let mut r2 = m2.clone();
                    r2.remove_one(x2);
                    if bijection_pre(spec, &r1, &r2) {
                        return true;
                    }
                }
            }
        }
        false
    }

    /// Brute-force satisfaction with no work limit. Panics if a value
    /// domain exceeds the enumeration cap (size the inputs accordingly);
    /// returns `false` for constructs it cannot resolve (unresolvable
    /// action names).
    pub fn naive_sat(ctx: &SatCtx, a: &Assertion, pair: &StatePair) -> bool {
        naive_sat_bounded(ctx, a, pair, u64::MAX).expect("unbounded run cannot exhaust fuel")
    }

    /// Like [`naive_sat`] but gives up (`None`) once roughly `budget` split
    /// pairs have been examined, keeping worst cases affordable.
    pub fn naive_sat_bounded(
        ctx: &SatCtx,
        a: &Assertion,
        pair: &StatePair,
        budget: u64,
    ) -> Option<bool> {
        let pool = split_pool(a, pair);
        let mut fuel = budget;
        go(ctx, a, pair, &pool, &mut fuel)
    }

    fn go(
        ctx: &SatCtx,
        a: &Assertion,
        pair: &StatePair,
        pool: &BTreeSet<Frac>,
        fuel: &mut u64,
    ) -> Option<bool> {
        let slots = pair.unique_slots();
        Some(match a {
            Assertion::Emp => pair.h1.is_unit() && pair.h2.is_unit(),
            Assertion::Pure(b) => {
                eval_expr(b, &pair.s1).truthy() && eval_expr(b, &pair.s2).truthy()
            }
            Assertion::Low(e) => eval_expr(e, &pair.s1) == eval_expr(e, &pair.s2),
            Assertion::PointsTo(e1, r, e2) => {
                let side = |s: &Store, h: &ExtHeap| match eval_expr(e1, s) {
                    Value::Int(l) => {
                        *h == ExtHeap::points_to(slots, l, r.clone(), eval_expr(e2, s))
                    }
                    _ => false,
                };
                side(&pair.s1, &pair.h1) && side(&pair.s2, &pair.h2)
            }
            Assertion::Star(p, q) => {
                for (l1, r1) in splits(&pair.h1, pool, *fuel)? {
                    for (l2, r2) in splits(&pair.h2, pool, *fuel)? {
                        *fuel = fuel.checked_sub(1)?;
                        let left = StatePair {
                            s1: pair.s1.clone(),
                            h1: l1.clone(),
                            s2: pair.s2.clone(),
                            h2: l2,
                        };
                        let right = StatePair {
                            s1: pair.s1.clone(),
                            h1: r1.clone(),
                            s2: pair.s2.clone(),
                            h2: r2,
                        };
                        if go(ctx, p, &left, pool, fuel)? && go(ctx, q, &right, pool, fuel)? {
                            return Some(true);
                        }
                    }
                }
                false
            }
            Assertion::And(p, q) => {
                go(ctx, p, pair, pool, fuel)? && go(ctx, q, pair, pool, fuel)?
            }
            Assertion::Exists(x, ty, p) => {
                let vals = enumerate_type(ty, ctx.bounds).expect("domain exceeds cap");
                let mut found = false;
                'outer: for v1 in &vals {
                    for v2 in &vals {
                        let mut sub = pair.clone();
                        sub.s1.insert(x.clone(), v1.clone());
                        sub.s2.insert(x.clone(), v2.clone());
                        if go(ctx, p, &sub, pool, fuel)? {
                            found = true;
                            break 'outer;
                        }
                    }
                }
                found
            }
            Assertion::SharedGuard(r, e) => {
                let side = |s: &Store, h: &ExtHeap| match eval_expr(e, s) {
                    Value::Multiset(m) => {
                        let mut want = ExtHeap::unit(slots);
                        want.sguard = Some((r.clone(), m));
                        *h == want
                    }
                    _ => false,
                };
                side(&pair.s1, &pair.h1) && side(&pair.s2, &pair.h2)
            }
            Assertion::UniqueGuard(sel, e) => {
                let idx = match resolve_sel(ctx, sel) {
                    Resolved::Unique(i) if i < slots => i,
                    _ => return Some(false),
                };
                let side = |s: &Store, h: &ExtHeap| match eval_expr(e, s) {
                    Value::Seq(q) => {
                        let mut want = ExtHeap::unit(slots);
                        want.uguard[idx] = Some(q);
                        *h == want
                    }
                    _ => false,
                };
                side(&pair.s1, &pair.h1) && side(&pair.s2, &pair.h2)
            }
            Assertion::Implies(b, p) => {
                let (v1, v2) = (eval_expr(b, &pair.s1), eval_expr(b, &pair.s2));
                v1 == v2 && (!v1.truthy() || go(ctx, p, pair, pool, fuel)?)
            }
            Assertion::NoGuard(p) => {
                guard_free(&pair.h1)
                    && guard_free(&pair.h2)
                    && go(ctx, p, pair, pool, fuel)?
            }
            Assertion::PreFor(sel, e) => {
                let Some(spec) = ctx.spec else {
                    return Some(false);
                };
                match resolve_sel(ctx, sel) {
                    Resolved::Shared => {
                        let (m1, m2) = (eval_expr(e, &pair.s1), eval_expr(e, &pair.s2));
                        match (m1, m2) {
                            (Value::Multiset(m1), Value::Multiset(m2)) => {
                                bijection_pre(spec, &m1, &m2)
                            }
                            _ => false,
                        }
                    }
                    Resolved::Unique(i) if i < spec.unique.len() => {
                        let (q1, q2) = (eval_expr(e, &pair.s1), eval_expr(e, &pair.s2));
                        match (q1, q2) {
                            (Value::Seq(q1), Value::Seq(q2)) => {
                                q1.len() == q2.len()
                                    && q1.iter().zip(&q2).all(|(a, b)| {
                                        spec.pre_sat(ActionRef::Unique(i), a, b)
                                    })
                            }
                            _ => false,
                        }
                    }
                    _ => false,
                }
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::parse::parse_expr;
    use crate::rspec::parse_cspec;
    use crate::rspec::tests::{small_bounds, MAP_KEYS_SPEC, MAP_SPLIT_SPEC};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn e(src: &str) -> Expr {
        parse_expr(src).unwrap()
    }

    fn a(src: &str) -> Assertion {
        parse_assertion(src).unwrap()
    }

    fn store(kvs: &[(&str, Value)]) -> Store {
        kvs.iter().map(|(k, v)| (k.to_string(), v.clone())).collect()
    }

    fn int_store(kvs: &[(&str, i64)]) -> Store {
        kvs.iter()
            .map(|(k, v)| (k.to_string(), Value::Int(*v)))
            .collect()
    }

    fn heap(locs: &[(i64, Frac, Value)], slots: usize) -> ExtHeap {
        let mut h = ExtHeap::unit(slots);
        for (l, q, v) in locs {
            h.perm.insert(*l, (q.clone(), v.clone()));
        }
        h
    }

    fn pair(s1: Store, h1: ExtHeap, s2: Store, h2: ExtHeap) -> StatePair {
        StatePair::new(s1, h1, s2, h2)
    }

    fn ctx_with<'a>(spec: Option<&'a RSpec>, bounds: &'a Bounds) -> SatCtx<'a> {
        SatCtx { spec, bounds }
    }

    #[test]
    fn parse_round_trips_through_display() {
        let samples = [
            "emp",
            "x == 0",
            "low(x + y)",
            "acc(x, v)",
            "acc(x, 1/2, v)",
            "acc(x, 1/2, v) ** acc(y, 1/2, w)",
            "low(x) && acc(x, 1, y) ** emp",
            "x == 0 ==> low(y)",
            "exists z: Int :: acc(x, z) && low(z)",
            "(exists z: Int :: acc(x, z)) ** low(y)",
            "noguard(low(x) ** emp)",
            "sguard(1/4, {|(0, 1),|})",
            "uguard(0, [true,])",
            "uguard(put_low, [(0, 1),])",
            "allpre({|(0, 1),|})",
            "allpre(1, [(2, 2),])",
            "allpre(put, toms(s))",
            "(x < 2 || y < 2) ==> low(x)",
            "emp ** (x == 0 ==> low(y))",
        ];
        for src in samples {
            let once = a(src);
            let printed = once.to_string();
            let twice = parse_assertion(&printed)
                .unwrap_or_else(|e| panic!("reparse of `{printed}` (from `{src}`): {e}"));
            assert_eq!(once, twice, "round trip of `{src}` via `{printed}`");
        }
        // Spot-check shapes.
        assert_eq!(
            a("low(x) && x == 0 && emp"),
            Assertion::and(
                Assertion::and(Assertion::Low(e("x")), Assertion::Pure(e("x == 0"))),
                Assertion::Emp
            )
        );
        assert!(matches!(a("acc(x, y)"), Assertion::PointsTo(_, r, _) if r.is_one()));
    }

    #[test]
    fn parse_rejects_malformed_assertions() {
        let bad = [
            ("x == 0 || y == 0", "parenthesized"),
            ("acc(x, 0, y)", "fraction"),
            ("acc(x, 3/2, y)", "fraction"),
            ("low(x) ==> emp", "left-hand side"),
            ("exists x Int :: emp", "expected"),
            ("uguard(-1, [0,])", "expected an identifier"),
            ("b ? emp : emp", "parenthesized"),
        ];
        for (src, needle) in bad {
            let err = parse_assertion(src).unwrap_err().to_string();
            assert!(
                err.contains(needle),
                "`{src}` should mention `{needle}`, got: {err}"
            );
        }
    }

    #[test]
    fn typecheck_resolves_names_and_enforces_shapes() {
        let spec = parse_cspec(MAP_SPLIT_SPEC).unwrap();
        let mk = parse_cspec(MAP_KEYS_SPEC).unwrap();

        let mut ctx = TyCtx::new();
        let checked =
            check_assertion(&mut ctx, &a("uguard(put_low, [(0, 1),])"), Some(&spec)).unwrap();
        assert!(matches!(
            checked,
            Assertion::UniqueGuard(ActionSel::Index(0), _)
        ));

        let mut ctx = TyCtx::new();
        let checked = check_assertion(&mut ctx, &a("allpre(put, ms)"), Some(&mk)).unwrap();
        assert!(matches!(checked, Assertion::PreFor(ActionSel::Shared, _)));

        let mut ctx = TyCtx::new();
        let err = check_assertion(&mut ctx, &a("uguard(put, [(0, 1),])"), Some(&mk))
            .unwrap_err()
            .to_string();
        assert!(err.contains("shared action"), "{err}");

        let mut ctx = TyCtx::new();
        let err = check_assertion(&mut ctx, &a("uguard(put_low, [0,])"), None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("no specification"), "{err}");

        let mut ctx = TyCtx::new();
        let err = check_assertion(&mut ctx, &a("sguard(1/2, 3)"), None)
            .unwrap_err()
            .to_string();
        assert!(err.contains("multiset"), "{err}");

        let mut ctx = TyCtx::new();
        let err = check_assertion(&mut ctx, &a("uguard(2, [0,])"), Some(&spec))
            .unwrap_err()
            .to_string();
        assert!(err.contains("unique action 2"), "{err}");

        // acc locations must be integers.
        let mut ctx = TyCtx::new();
        ctx.declare("p", &Type::pair(Type::Int, Type::Int));
        assert!(check_assertion(&mut ctx, &a("acc(p, 1, x)"), None).is_err());

        // The exists binder shadows and is restored.
        let mut ctx = TyCtx::new();
        ctx.declare("x", &Type::Bool);
        check_assertion(&mut ctx, &a("exists x: Int :: acc(x, 1, y)"), None).unwrap();
        assert_eq!(ctx.typed_vars()["x"], Type::Bool);
    }

    #[test]
    fn satisfaction_of_spatial_atoms_is_exact() {
        let bounds = small_bounds();
        let ctx = ctx_with(None, &bounds);
        let s = int_store(&[("x", 0)]);

        let exact = pair(
            s.clone(),
            heap(&[(0, Frac::one(), Value::Int(7))], 0),
            s.clone(),
            heap(&[(0, Frac::one(), Value::Int(7))], 0),
        );
        assert_eq!(sat_pair(&ctx, &a("acc(x, 7)"), &exact), Truth::True);
        assert_eq!(sat_pair(&ctx, &a("acc(x, 1/2, 7)"), &exact), Truth::False);
        assert_eq!(sat_pair(&ctx, &a("emp"), &exact), Truth::False);

        let empty = pair(s.clone(), ExtHeap::unit(0), s.clone(), ExtHeap::unit(0));
        assert_eq!(sat_pair(&ctx, &a("emp"), &empty), Truth::True);
        assert_eq!(sat_pair(&ctx, &a("x == 0"), &empty), Truth::True);
        assert_eq!(sat_pair(&ctx, &a("x == 1"), &empty), Truth::False);

        // Pure assertions hold on any heap; exact spatial ones do not.
        let bigger = pair(
            s.clone(),
            heap(
                &[
                    (0, Frac::one(), Value::Int(7)),
                    (1, Frac::half(), Value::Int(9)),
                ],
                0,
            ),
            s.clone(),
            heap(
                &[
                    (0, Frac::one(), Value::Int(7)),
                    (1, Frac::half(), Value::Int(9)),
                ],
                0,
            ),
        );
        assert_eq!(sat_pair(&ctx, &a("x == 0"), &bigger), Truth::True);
        assert_eq!(sat_pair(&ctx, &a("acc(x, 7)"), &bigger), Truth::False);
        // ... unless something absorbs the rest.
        assert_eq!(
            sat_pair(&ctx, &a("acc(x, 7) ** true"), &bigger),
            Truth::True
        );
        assert_eq!(
            sat_pair(&ctx, &a("acc(x, 7) ** acc(x + 1, 1/2, 9)"), &bigger),
            Truth::True
        );
    }

    #[test]
    fn star_splits_fractions_and_conjunction_shares_the_heap() {
        let bounds = small_bounds();
        let ctx = ctx_with(None, &bounds);
        let s = int_store(&[("x", 0)]);
        let full = pair(
            s.clone(),
            heap(&[(0, Frac::one(), Value::Int(3))], 0),
            s.clone(),
            heap(&[(0, Frac::one(), Value::Int(3))], 0),
        );
        let half = pair(
            s.clone(),
            heap(&[(0, Frac::half(), Value::Int(3))], 0),
            s.clone(),
            heap(&[(0, Frac::half(), Value::Int(3))], 0),
        );

        let two_halves = a("acc(x, 1/2, 3) ** acc(x, 1/2, 3)");
        assert_eq!(sat_pair(&ctx, &two_halves, &full), Truth::True);
        assert_eq!(sat_pair(&ctx, &two_halves, &half), Truth::False);
        assert_eq!(sat_pair(&ctx, &a("acc(x, 1/2, 3)"), &half), Truth::True);

        let and_same = a("acc(x, 3) && acc(x, 3)");
        assert_eq!(sat_pair(&ctx, &and_same, &full), Truth::True);
        let and_conflict = a("acc(x, 3) && emp");
        assert_eq!(sat_pair(&ctx, &and_conflict, &full), Truth::False);
    }

    #[test]
    fn relational_atoms_compare_the_two_executions() {
        let bounds = small_bounds();
        let ctx = ctx_with(None, &bounds);
        let h = ExtHeap::unit(0);
        let differ = pair(
            int_store(&[("x", 1)]),
            h.clone(),
            int_store(&[("x", 2)]),
            h.clone(),
        );
        let same = pair(
            int_store(&[("x", 2)]),
            h.clone(),
            int_store(&[("x", 2)]),
            h.clone(),
        );
        assert_eq!(sat_pair(&ctx, &a("low(x)"), &differ), Truth::False);
        assert_eq!(sat_pair(&ctx, &a("low(x)"), &same), Truth::True);
        assert_eq!(sat_pair(&ctx, &a("low(x > 0)"), &differ), Truth::True);

        // An implication needs its condition to be low.
        assert_eq!(
            sat_pair(&ctx, &a("x == 1 ==> low(x)"), &differ),
            Truth::False
        );
        assert_eq!(
            sat_pair(&ctx, &a("x == 3 ==> low(x)"), &same),
            Truth::True
        );
        assert_eq!(
            sat_pair(&ctx, &a("x == 2 ==> low(x)"), &same),
            Truth::True
        );
    }

    #[test]
    fn exists_allows_different_witnesses() {
        let bounds = small_bounds();
        let ctx = ctx_with(None, &bounds);
        let s = int_store(&[("x", 0)]);
        // The two heaps store different values at the same location.
        let high = pair(
            s.clone(),
            heap(&[(0, Frac::one(), Value::Int(1))], 0),
            s.clone(),
            heap(&[(0, Frac::one(), Value::Int(2))], 0),
        );
        assert_eq!(
            sat_pair(&ctx, &a("exists v: Int :: acc(x, v)"), &high),
            Truth::True
        );
        assert_eq!(
            sat_pair(&ctx, &a("exists v: Int :: acc(x, v) && low(v)"), &high),
            Truth::False
        );

        let cap = Bounds {
            max_enum: 2,
            ..small_bounds()
        };
        let ctx = ctx_with(None, &cap);
        assert_eq!(
            sat_pair(&ctx, &a("exists v: Int :: acc(x, v)"), &high),
            Truth::Unknown
        );
    }

    #[test]
    fn guard_atoms_demand_exactly_the_guard() {
        let spec = parse_cspec(MAP_SPLIT_SPEC).unwrap();
        let bounds = small_bounds();
        let ctx = ctx_with(Some(&spec), &bounds);
        let s = Store::new();
        let slots = 2;

        let kv = |k: i64, v: i64| Value::pair(Value::Int(k), Value::Int(v));
        let mut h = ExtHeap::unit(slots);
        h.uguard[0] = Some(vec![kv(0, 1)]);
        let p = pair(s.clone(), h.clone(), s.clone(), h.clone());
        assert_eq!(
            sat_pair(&ctx, &a("uguard(put_low, [(0, 1),])"), &p),
            Truth::True
        );
        assert_eq!(
            sat_pair(&ctx, &a("uguard(put_high, [(0, 1),])"), &p),
            Truth::False
        );
        assert_eq!(
            sat_pair(&ctx, &a("uguard(put_low, [(0, 1),]) ** emp"), &p),
            Truth::True
        );
        assert_eq!(sat_pair(&ctx, &a("noguard(true)"), &p), Truth::False);

        let mut g = ExtHeap::unit(slots);
        g.sguard = Some((Frac::one(), Multiset::new()));
        let pg = pair(s.clone(), g.clone(), s.clone(), g.clone());
        assert_eq!(sat_pair(&ctx, &a("sguard(1, {||})"), &pg), Truth::True);
        assert_eq!(sat_pair(&ctx, &a("sguard(1/2, {||})"), &pg), Truth::False);

        let free = pair(s.clone(), ExtHeap::unit(slots), s, ExtHeap::unit(slots));
        assert_eq!(sat_pair(&ctx, &a("noguard(true)"), &free), Truth::True);
    }

    #[test]
    fn allpre_matches_arguments_between_executions() {
        let mk = parse_cspec(MAP_KEYS_SPEC).unwrap();
        let split = parse_cspec(MAP_SPLIT_SPEC).unwrap();
        let bounds = small_bounds();
        let s = Store::new();
        let h = ExtHeap::unit(0);
        let p0 = pair(s.clone(), h.clone(), s.clone(), h.clone());

        let ctx = ctx_with(Some(&mk), &bounds);
        // Same keys, different values: the bijection exists.
        let same_keys = Assertion::PreFor(
            ActionSel::Shared,
            e("{|(0, 1), (2, 0),|}"),
        );
        assert_eq!(sat_pair(&ctx, &same_keys, &p0), Truth::True);

        // Key sets that differ between the executions do not match. The
        // argument expression reads a variable so the sides differ.
        let differ = pair(
            store(&[("m", Value::Multiset(Multiset::singleton(Value::pair(
                Value::Int(0),
                Value::Int(1),
            ))))]),
            h.clone(),
            store(&[("m", Value::Multiset(Multiset::singleton(Value::pair(
                Value::Int(1),
                Value::Int(1),
            ))))]),
            h.clone(),
        );
        assert_eq!(
            sat_pair(&ctx, &a("allpre(m)"), &differ),
            Truth::False
        );

        // Unique actions relate argument sequences pointwise.
        let ctx = ctx_with(Some(&split), &bounds);
        let seqs = pair(
            store(&[("q", Value::Seq(vec![Value::pair(Value::Int(0), Value::Int(1))]))]),
            ExtHeap::unit(2),
            store(&[("q", Value::Seq(vec![Value::pair(Value::Int(0), Value::Int(1))]))]),
            ExtHeap::unit(2),
        );
        assert_eq!(sat_pair(&ctx, &a("allpre(put_low, q)"), &seqs), Truth::True);
        let unequal = pair(
            store(&[("q", Value::Seq(vec![Value::pair(Value::Int(0), Value::Int(1))]))]),
            ExtHeap::unit(2),
            store(&[("q", Value::Seq(vec![]))]),
            ExtHeap::unit(2),
        );
        assert_eq!(
            sat_pair(&ctx, &a("allpre(put_low, q)"), &unequal),
            Truth::False
        );

        // Without a specification the answer is honest.
        let ctx = ctx_with(None, &bounds);
        assert_eq!(sat_pair(&ctx, &same_keys, &p0), Truth::Unknown);
    }

    #[test]
    fn substitution_avoids_capture() {
        let p = a("exists v: Int :: acc(x, v) && low(v)");
        let q = p.subst("x", &e("v + 1"));
        // The binder collides with the replacement's variable and is renamed.
        let fv = q.free_vars();
        assert!(fv.contains("v"));
        let printed = q.to_string();
        assert!(printed.contains("exists v_0"), "{printed}");

        let r = p.subst("v", &e("9"));
        assert_eq!(r, p, "bound variable is not substituted");
    }

    #[test]
    fn collected_fraction_literals_keep_multiplicity() {
        let p = a("acc(x, 1/2, v) ** (acc(y, 1/2, w) && sguard(1/4, {||}))");
        let fr = collect_fracs(&p);
        assert_eq!(fr.len(), 3);
        assert_eq!(fr.iter().filter(|f| **f == Frac::half()).count(), 2);
    }

    // -- differential testing against the reference implementation --------

    fn lit_of(v: &Value) -> Expr {
        match v {
            Value::Int(n) => Expr::int(*n),
            Value::Bool(b) => Expr::bool(*b),
            Value::Pair(a, b) => Expr::new(ExprKind::Pair(
                Box::new(lit_of(a)),
                Box::new(lit_of(b)),
            )),
            Value::Seq(xs) => Expr::new(ExprKind::SeqLit(xs.iter().map(lit_of).collect())),
            Value::Multiset(m) => {
                Expr::new(ExprKind::MsLit(m.elements().iter().map(lit_of).collect()))
            }
            Value::Map(_) => unreachable!("generator does not produce maps"),
        }
    }

    struct Gen {
        rng: StdRng,
        /// Number of unique actions in the ambient specification.
        uniques: usize,
    }

    const GEN_FRACS: [(i64, i64); 4] = [(1, 4), (1, 2), (3, 4), (1, 1)];

    impl Gen {
        fn frac(&mut self) -> Frac {
            let (n, d) = GEN_FRACS[self.rng.random_range(0..GEN_FRACS.len())];
            Frac::new(n, d).unwrap()
        }

        fn arg_value(&mut self) -> Value {
            // Argument type shared by both fixtures' actions: Pair[Int, Int]
            // for the puts; plain values stay in a tiny window.
            Value::pair(
                Value::Int(self.rng.random_range(0..2)),
                Value::Int(self.rng.random_range(0..2)),
            )
        }

        fn bool_arg_value(&mut self) -> Value {
            Value::Bool(self.rng.random_bool(0.5))
        }

        fn int_expr(&mut self) -> Expr {
            match self.rng.random_range(0..4) {
                0 => Expr::int(self.rng.random_range(0..3)),
                1 => Expr::var("x"),
                2 => Expr::var("y"),
                _ => Expr::binary(BinOp::Add, Expr::var("x"), Expr::int(1)),
            }
        }

        fn cmp_expr(&mut self) -> Expr {
            let op = match self.rng.random_range(0..3) {
                0 => BinOp::Eq,
                1 => BinOp::Lt,
                _ => BinOp::Le,
            };
            Expr::binary(op, self.int_expr(), self.int_expr())
        }

        fn ms_expr(&mut self) -> Expr {
            let n = self.rng.random_range(0..=2);
            let elems = (0..n)
                .map(|_| {
                    if self.uniques == 0 {
                        lit_of(&self.arg_value())
                    } else {
                        lit_of(&self.bool_arg_value())
                    }
                })
                .collect();
            Expr::new(ExprKind::MsLit(elems))
        }

        fn seq_expr(&mut self) -> Expr {
            let n = self.rng.random_range(0..=2);
            let elems = (0..n).map(|_| lit_of(&self.arg_value())).collect();
            Expr::new(ExprKind::SeqLit(elems))
        }

        fn assertion(&mut self, depth: usize) -> Assertion {
            let leafy = depth == 0 || self.rng.random_bool(0.45);
            if leafy {
                let max = if self.uniques > 0 { 8 } else { 6 };
                match self.rng.random_range(0..max) {
                    0 => Assertion::Emp,
                    1 => Assertion::Pure(self.cmp_expr()),
                    2 => Assertion::Low(self.int_expr()),
                    3 => Assertion::PointsTo(
                        Expr::int(self.rng.random_range(0..2)),
                        self.frac(),
                        self.int_expr(),
                    ),
                    4 => Assertion::SharedGuard(self.frac(), self.ms_expr()),
                    5 => Assertion::PreFor(ActionSel::Shared, self.ms_expr()),
                    6 => Assertion::UniqueGuard(
                        ActionSel::Index(self.rng.random_range(0..self.uniques)),
                        self.seq_expr(),
                    ),
                    _ => Assertion::PreFor(
                        ActionSel::Index(self.rng.random_range(0..self.uniques)),
                        self.seq_expr(),
                    ),
                }
            } else {
                match self.rng.random_range(0..5) {
                    0 => Assertion::star(self.assertion(depth - 1), self.assertion(depth - 1)),
                    1 => Assertion::and(self.assertion(depth - 1), self.assertion(depth - 1)),
                    2 => Assertion::implies(self.cmp_expr(), self.assertion(depth - 1)),
                    3 => Assertion::exists("z", Type::Bool, self.assertion(depth - 1)),
                    _ => Assertion::noguard(self.assertion(depth - 1)),
                }
            }
        }

        fn heap(&mut self, slots: usize) -> ExtHeap {
            let mut h = ExtHeap::unit(slots);
            for loc in 0..2 {
                if self.rng.random_bool(0.5) {
                    h.perm.insert(
                        loc,
                        (self.frac(), Value::Int(self.rng.random_range(0..3))),
                    );
                }
            }
            if self.rng.random_bool(0.4) {
                let mut m = Multiset::new();
                for _ in 0..self.rng.random_range(0..=2) {
                    if self.uniques == 0 {
                        m.insert(self.arg_value());
                    } else {
                        m.insert(self.bool_arg_value());
                    }
                }
                h.sguard = Some((self.frac(), m));
            }
            for i in 0..slots {
                if self.rng.random_bool(0.3) {
                    let n = self.rng.random_range(0..=2);
                    h.uguard[i] = Some((0..n).map(|_| self.arg_value()).collect());
                }
            }
            h
        }

        fn state_pair(&mut self, slots: usize) -> StatePair {
            let s1 = int_store(&[
                ("x", self.rng.random_range(0..3)),
                ("y", self.rng.random_range(0..3)),
            ]);
            let s2 = if self.rng.random_bool(0.5) {
                s1.clone()
            } else {
                int_store(&[
                    ("x", self.rng.random_range(0..3)),
                    ("y", self.rng.random_range(0..3)),
                ])
            };
            let h1 = self.heap(slots);
            let h2 = if self.rng.random_bool(0.5) {
                h1.clone()
            } else {
                self.heap(slots)
            };
            StatePair::new(s1, h1, s2, h2)
        }
    }

    #[test]
    fn model_set_satisfaction_agrees_with_the_reference() {
        let mk = parse_cspec(MAP_KEYS_SPEC).unwrap();
        let split = parse_cspec(MAP_SPLIT_SPEC).unwrap();
        let bounds = small_bounds();

        let mut decided = 0usize;
        let mut unknowns = 0usize;
        let mut out_of_fuel = 0usize;
        let mut trues = 0usize;

        for (spec, uniques, seed) in [(&mk, 0usize, 0x00a5_5e17), (&split, 2, 0x00a5_5e18)] {
            let ctx = ctx_with(Some(spec), &bounds);
            let mut g = Gen {
                rng: StdRng::seed_from_u64(seed),
                uniques,
            };
            for case in 0..250 {
                let a = g.assertion(2);
                let p = g.state_pair(uniques);
                let got = sat_pair(&ctx, &a, &p);
                if got == Truth::Unknown {
                    unknowns += 1;
                    continue;
                }
                let Some(want) = reference::naive_sat_bounded(&ctx, &a, &p, 60_000) else {
                    out_of_fuel += 1;
                    continue;
                };
                assert_eq!(
                    got,
                    Truth::from_bool(want),
                    "case {case} (uniques={uniques}): {a}\npair: {:?}",
                    p
                );
                decided += 1;
                if want {
                    trues += 1;
                }
            }
        }
        assert!(decided >= 350, "only {decided} cases decided");
        assert!(unknowns <= 50, "{unknowns} unknowns");
        assert!(out_of_fuel <= 100, "{out_of_fuel} reference runs out of fuel");
        assert!(trues >= 40, "only {trues} satisfied cases generated");
    }
}
