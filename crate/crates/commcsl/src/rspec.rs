//! Resource specifications and their validity check.
//!
//! A resource specification describes a shared value of some type together
//! with an abstraction function `alpha` mapping it into an "observable"
//! type, one *shared* action that every thread may perform, and a finite
//! family of *unique* actions, each of which at most one thread may hold the
//! right to perform. Every action has a total body `apply : (v, arg) -> v'`
//! and a relational precondition `pre : (a1, a2) -> Bool` relating the
//! arguments the two compared executions may pass. The precondition may only
//! constrain the arguments, never the resource value itself.
//!
//! A specification is *valid* when two bounded-exhaustive conditions hold:
//!
//! * **(A) preservation** — per action `a`: whenever `alpha(v) = alpha(v')`
//!   and `pre_a(arg, arg')`, then `alpha(f_a(v, arg)) = alpha(f_a(v', arg'))`.
//! * **(B) commutation** — per relevant pair `(a, a')`: whenever
//!   `alpha(v) = alpha(v')` (no precondition hypothesis), then
//!   `alpha(f_a'(f_a(v, arg), arg')) = alpha(f_a(f_a'(v', arg'), arg))`.
//!
//! The relevant pairs are the shared action against itself, the shared
//! action against every unique action, and distinct unique actions against
//! each other. A unique action is never paired with itself: its argument
//! sequence fixes the order of its own applications, so self-commutation is
//! never needed.
//!
//! Specifications are written in `.cspec` files:
//!
//! ```text
//! spec map_keys {
//!   value: Map[Int, Int]
//!   abstract: Multiset[Int]
//!   alpha(m) = dom(m)
//!   shared put(kv: Pair[Int, Int]) {
//!     apply = m[fst(kv) -> snd(kv)]
//!     pre(p, q) = fst(p) == fst(q)
//!   }
//! }
//! ```
//!
//! Binder names are user-chosen and renamed internally to the canonical
//! `v` (resource value), `arg` (action argument), and `a1`/`a2`
//! (precondition argument pair). At most one `shared` block is allowed; if
//! none is given, an implicit no-op shared action named `noop` is added so
//! that every specification has exactly one shared action.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::Serialize;

use crate::bounds::Bounds;
use crate::expr::{eval_expr, fresh_name, Expr, Store, TyCtx};
use crate::parse::{ParseError, Parser};
use crate::parse::lexer::Tok;
use crate::value::{enumerate_type, Type, Value};

/// Canonical binder for the resource value in `alpha` and action bodies.
pub const VALUE_BINDER: &str = "v";
/// Canonical binder for the action argument in action bodies.
pub const ARG_BINDER: &str = "arg";
/// Canonical binders for the precondition's argument pair.
pub const PRE_BINDERS: (&str, &str) = ("a1", "a2");

/// One action of a resource specification: a total body over `(v, arg)` and
/// a relational precondition over `(a1, a2)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ActionSpec {
    pub name: String,
    pub arg_ty: Type,
    /// Body expression with free variables `v` and `arg`; evaluates to the
    /// next resource value.
    pub apply: Expr,
    /// Precondition expression with free variables `a1` and `a2`; `v` must
    /// not occur.
    pub pre: Expr,
}

impl ActionSpec {
    /// The implicit do-nothing shared action used when a spec file declares
    /// no shared block.
    fn noop(value_ty: &Type) -> ActionSpec {
        let _ = value_ty;
        ActionSpec {
            name: "noop".to_string(),
            arg_ty: Type::Bool,
            apply: Expr::var(VALUE_BINDER),
            pre: Expr::bool(true),
        }
    }
}

/// A complete resource specification: value/abstract types, the abstraction
/// function, exactly one shared action, and the unique-action family.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RSpec {
    pub name: String,
    pub value_ty: Type,
    pub abs_ty: Type,
    /// Abstraction body with single free variable `v`.
    pub alpha: Expr,
    pub shared: ActionSpec,
    /// Unique actions in declaration order; the position is the index.
    pub unique: Vec<ActionSpec>,
}

/// Identifies one action of a spec: the shared action or a unique action by
/// index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum ActionRef {
    Shared,
    Unique(usize),
}

impl RSpec {
    pub fn action(&self, r: ActionRef) -> &ActionSpec {
        match r {
            ActionRef::Shared => &self.shared,
            ActionRef::Unique(i) => &self.unique[i],
        }
    }

    /// All actions: the shared action first, then uniques in index order.
    pub fn action_refs(&self) -> Vec<ActionRef> {
        let mut out = vec![ActionRef::Shared];
        out.extend((0..self.unique.len()).map(ActionRef::Unique));
        out
    }

    /// Looks an action up by name.
    pub fn action_by_name(&self, name: &str) -> Option<ActionRef> {
        self.action_refs()
            .into_iter()
            .find(|r| self.action(*r).name == name)
    }

    /// The pairs whose commutation condition is checked: (shared, shared),
    /// (shared, unique_i) for every i, and (unique_i, unique_j) for i < j.
    /// A unique action is never paired with itself.
    pub fn relevant_pairs(&self) -> Vec<(ActionRef, ActionRef)> {
        let mut out = vec![(ActionRef::Shared, ActionRef::Shared)];
        for i in 0..self.unique.len() {
            out.push((ActionRef::Shared, ActionRef::Unique(i)));
        }
        for i in 0..self.unique.len() {
            for j in i + 1..self.unique.len() {
                out.push((ActionRef::Unique(i), ActionRef::Unique(j)));
            }
        }
        out
    }

    /// Whether `(a, b)` (unordered) is a relevant pair for commutation.
    pub fn is_relevant(&self, a: ActionRef, b: ActionRef) -> bool {
        match (a, b) {
            (ActionRef::Unique(i), ActionRef::Unique(j)) => i != j,
            _ => true,
        }
    }

    /// Evaluates the abstraction function on a resource value.
    pub fn alpha_of(&self, v: &Value) -> Value {
        let mut store = Store::new();
        store.insert(VALUE_BINDER.to_string(), v.clone());
        eval_expr(&self.alpha, &store)
    }

    /// Applies one action's body to a resource value and argument.
    pub fn apply(&self, r: ActionRef, v: &Value, arg: &Value) -> Value {
        let mut store = Store::new();
        store.insert(VALUE_BINDER.to_string(), v.clone());
        store.insert(ARG_BINDER.to_string(), arg.clone());
        eval_expr(&self.action(r).apply, &store)
    }

    /// Evaluates one action's relational precondition on an argument pair.
    pub fn pre_sat(&self, r: ActionRef, a1: &Value, a2: &Value) -> bool {
        let mut store = Store::new();
        store.insert(PRE_BINDERS.0.to_string(), a1.clone());
        store.insert(PRE_BINDERS.1.to_string(), a2.clone());
        eval_expr(&self.action(r).pre, &store).as_bool()
    }

    /// Folds a sequence of action applications over a start value.
    pub fn fold(&self, v0: &Value, steps: &[(ActionRef, Value)]) -> Value {
        let mut v = v0.clone();
        for (r, arg) in steps {
            v = self.apply(*r, &v, arg);
        }
        v
    }
}

/// Outcome of one validity obligation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Verdict {
    /// The obligation holds for every instance within the bounds.
    Holds,
    /// A concrete counterexample; the lexicographically smallest one over
    /// `(v1, v2, arg1, arg2)` within the enumerated domain.
    Fails {
        v1: Value,
        v2: Value,
        arg1: Value,
        arg2: Value,
    },
    /// A domain needed by the obligation exceeds the enumeration cap.
    Unknown { cap: u64 },
}

impl Verdict {
    pub fn holds(&self) -> bool {
        matches!(self, Verdict::Holds)
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Verdict::Holds => write!(f, "holds"),
            Verdict::Fails { v1, v2, arg1, arg2 } => write!(
                f,
                "fails at v1 = {v1}, v2 = {v2}, arg1 = {arg1}, arg2 = {arg2}"
            ),
            Verdict::Unknown { cap } => {
                write!(f, "unknown (domain exceeds the cap of {cap} values)")
            }
        }
    }
}

/// Verdict for the preservation condition of one action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ActionVerdict {
    pub action: String,
    pub verdict: Verdict,
}

/// Verdict for the commutation condition of one relevant pair.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PairVerdict {
    pub first: String,
    pub second: String,
    pub verdict: Verdict,
}

/// Full result of checking a specification's validity within bounds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValidityReport {
    pub spec: String,
    /// Preservation verdicts, one per action (shared first).
    pub verdict_a: Vec<ActionVerdict>,
    /// Commutation verdicts, one per relevant pair.
    pub verdict_b: Vec<PairVerdict>,
    /// The relevant pairs, by action name.
    pub checked_pairs: Vec<(String, String)>,
}

impl ValidityReport {
    pub fn all_holds(&self) -> bool {
        self.verdict_a.iter().all(|a| a.verdict.holds())
            && self.verdict_b.iter().all(|b| b.verdict.holds())
    }

    pub fn any_unknown(&self) -> bool {
        let unk = |v: &Verdict| matches!(v, Verdict::Unknown { .. });
        self.verdict_a.iter().any(|a| unk(&a.verdict))
            || self.verdict_b.iter().any(|b| unk(&b.verdict))
    }
}

/// Per-(value, arg) caches for one action: the applied value and its
/// abstraction, plus the precondition matrix over argument pairs.
struct ActionTables {
    /// `applied[i][k] = f_a(values[i], args[k])`.
    applied: Vec<Vec<Value>>,
    /// `alpha_applied[i][k] = alpha(applied[i][k])`.
    alpha_applied: Vec<Vec<Value>>,
    /// `pre[k][l] = pre_a(args[k], args[l])`.
    pre: Vec<Vec<bool>>,
}

fn action_tables(spec: &RSpec, r: ActionRef, values: &[Value], args: &[Value]) -> ActionTables {
    let applied: Vec<Vec<Value>> = values
        .iter()
        .map(|v| args.iter().map(|a| spec.apply(r, v, a)).collect())
        .collect();
    let alpha_applied = applied
        .iter()
        .map(|row| row.iter().map(|w| spec.alpha_of(w)).collect())
        .collect();
    let pre = args
        .iter()
        .map(|a1| args.iter().map(|a2| spec.pre_sat(r, a1, a2)).collect())
        .collect();
    ActionTables {
        applied,
        alpha_applied,
        pre,
    }
}

/// Preservation for one action. Iteration is in ascending order of
/// `(v1, v2, arg1, arg2)`, so the first counterexample found is the
/// lexicographically smallest.
fn check_preservation(
    values: &[Value],
    alphas: &[Value],
    args: &[Value],
    t: &ActionTables,
) -> Verdict {
    for (i, v1) in values.iter().enumerate() {
        for (j, v2) in values.iter().enumerate() {
            if alphas[i] != alphas[j] {
                continue;
            }
            for (k, arg1) in args.iter().enumerate() {
                for (l, arg2) in args.iter().enumerate() {
                    if !t.pre[k][l] {
                        continue;
                    }
                    if t.alpha_applied[i][k] != t.alpha_applied[j][l] {
                        return Verdict::Fails {
                            v1: v1.clone(),
                            v2: v2.clone(),
                            arg1: arg1.clone(),
                            arg2: arg2.clone(),
                        };
                    }
                }
            }
        }
    }
    Verdict::Holds
}

/// Commutation for one relevant pair `(a, b)`: both application orders from
/// two abstraction-equal start values must agree under the abstraction.
/// There is no precondition hypothesis here.
fn check_commutation(
    spec: &RSpec,
    values: &[Value],
    alphas: &[Value],
    (a, a_args, ta): (ActionRef, &[Value], &ActionTables),
    (b, b_args, tb): (ActionRef, &[Value], &ActionTables),
) -> Verdict {
    // lhs[i][k][l] = alpha(f_b(f_a(v_i, a_args[k]), b_args[l]))
    let lhs: Vec<Vec<Vec<Value>>> = ta
        .applied
        .iter()
        .map(|row| {
            row.iter()
                .map(|w| {
                    b_args
                        .iter()
                        .map(|barg| spec.alpha_of(&spec.apply(b, w, barg)))
                        .collect()
                })
                .collect()
        })
        .collect();
    // rhs[j][l][k] = alpha(f_a(f_b(v_j, b_args[l]), a_args[k]))
    let rhs: Vec<Vec<Vec<Value>>> = tb
        .applied
        .iter()
        .map(|row| {
            row.iter()
                .map(|w| {
                    a_args
                        .iter()
                        .map(|aarg| spec.alpha_of(&spec.apply(a, w, aarg)))
                        .collect()
                })
                .collect()
        })
        .collect();
    for (i, v1) in values.iter().enumerate() {
        for (j, v2) in values.iter().enumerate() {
            if alphas[i] != alphas[j] {
                continue;
            }
            for (k, arg1) in a_args.iter().enumerate() {
                for (l, arg2) in b_args.iter().enumerate() {
                    if lhs[i][k][l] != rhs[j][l][k] {
                        return Verdict::Fails {
                            v1: v1.clone(),
                            v2: v2.clone(),
                            arg1: arg1.clone(),
                            arg2: arg2.clone(),
                        };
                    }
                }
            }
        }
    }
    Verdict::Holds
}

/// Checks both validity conditions for `spec` by exhaustive enumeration
/// within `bounds`. Obligations are evaluated concurrently; the report is
/// deterministic regardless of evaluation order, and each counterexample is
/// the lexicographically smallest over `(v1, v2, arg1, arg2)`.
pub fn check_validity(spec: &RSpec, bounds: &Bounds) -> ValidityReport {
    let unknown = Verdict::Unknown {
        cap: bounds.max_enum,
    };
    let values = enumerate_type(&spec.value_ty, bounds);
    let refs = spec.action_refs();
    let arg_domains: Vec<_> = refs
        .iter()
        .map(|r| enumerate_type(&spec.action(*r).arg_ty, bounds))
        .collect();
    let idx = |r: ActionRef| refs.iter().position(|x| *x == r).expect("known action");

    // Shared preparation: abstractions of every value, then per-action
    // tables. Any enumeration failure turns the obligations touching it
    // into unknowns.
    let prepared: Option<(Vec<Value>, Vec<Value>)> = values.ok().map(|vals| {
        let alphas = vals.iter().map(|v| spec.alpha_of(v)).collect();
        (vals, alphas)
    });
    let tables: Vec<Option<ActionTables>> = match &prepared {
        None => refs.iter().map(|_| None).collect(),
        Some((vals, _)) => refs
            .par_iter()
            .zip(&arg_domains)
            .map(|(r, dom)| {
                dom.as_ref()
                    .ok()
                    .map(|args| action_tables(spec, *r, vals, args))
            })
            .collect(),
    };

    let verdict_a: Vec<ActionVerdict> = refs
        .par_iter()
        .map(|r| {
            let verdict = match (&prepared, &tables[idx(*r)], &arg_domains[idx(*r)]) {
                (Some((vals, alphas)), Some(t), Ok(args)) => {
                    check_preservation(vals, alphas, args, t)
                }
                _ => unknown.clone(),
            };
            ActionVerdict {
                action: spec.action(*r).name.clone(),
                verdict,
            }
        })
        .collect();

    let pairs = spec.relevant_pairs();
    let verdict_b: Vec<PairVerdict> = pairs
        .par_iter()
        .map(|(a, b)| {
            let (ia, ib) = (idx(*a), idx(*b));
            let verdict = match (&prepared, &tables[ia], &tables[ib]) {
                (Some((vals, alphas)), Some(ta), Some(tb)) => {
                    let a_args = arg_domains[ia].as_ref().expect("table implies domain");
                    let b_args = arg_domains[ib].as_ref().expect("table implies domain");
                    check_commutation(spec, vals, alphas, (*a, a_args, ta), (*b, b_args, tb))
                }
                _ => unknown.clone(),
            };
            PairVerdict {
                first: spec.action(*a).name.clone(),
                second: spec.action(*b).name.clone(),
                verdict,
            }
        })
        .collect();

    ValidityReport {
        spec: spec.name.clone(),
        verdict_a,
        verdict_b,
        checked_pairs: pairs
            .iter()
            .map(|(a, b)| (spec.action(*a).name.clone(), spec.action(*b).name.clone()))
            .collect(),
    }
}

// ---------------------------------------------------------------------------
// .cspec parsing
// ---------------------------------------------------------------------------

/// Renames two binders to their canonical names in parallel, surviving the
/// case where one user-chosen name equals the other canonical name.
fn rename2(e: &Expr, from1: &str, to1: &str, from2: &str, to2: &str) -> Expr {
    let mut avoid: BTreeSet<String> = e.free_vars();
    avoid.insert(to1.to_string());
    avoid.insert(to2.to_string());
    avoid.insert(from2.to_string());
    let tmp = fresh_name("tmp", &[&avoid]);
    e.subst(from1, &Expr::var(&tmp))
        .subst(from2, &Expr::var(to2))
        .subst(&tmp, &Expr::var(to1))
}

fn check_free_vars(
    e: &Expr,
    allowed: &[&str],
    what: &str,
    line: u32,
) -> Result<(), ParseError> {
    for v in e.free_vars() {
        if !allowed.contains(&v.as_str()) {
            return Err(ParseError {
                line,
                col: 1,
                message: format!(
                    "{what} may only mention {}, but `{v}` occurs free",
                    allowed
                        .iter()
                        .map(|a| format!("`{a}`"))
                        .collect::<Vec<_>>()
                        .join(" and ")
                ),
            });
        }
    }
    Ok(())
}

fn type_error_at(line: u32, err: crate::expr::TypeError) -> ParseError {
    ParseError {
        line,
        col: 1,
        message: err.to_string(),
    }
}

struct ActionBlock {
    name: String,
    arg_ty: Type,
    arg_binder: String,
    apply: Option<(Expr, u32)>,
    pre: Option<(Expr, u32)>,
    line: u32,
}

fn parse_action_block(p: &mut Parser) -> Result<ActionBlock, ParseError> {
    let line = p.line();
    let name = p.ident()?;
    p.expect(&Tok::LParen)?;
    let arg_binder = p.var_ident()?;
    p.expect(&Tok::Colon)?;
    let arg_ty = p.ty()?;
    p.expect(&Tok::RParen)?;
    p.skip_newlines();
    p.expect(&Tok::LBrace)?;
    let mut block = ActionBlock {
        name,
        arg_ty,
        arg_binder,
        apply: None,
        pre: None,
        line,
    };
    loop {
        p.skip_newlines();
        if p.eat(&Tok::RBrace) {
            break;
        }
        let clause_line = p.line();
        if p.eat_word("apply") {
            p.expect(&Tok::Eq)?;
            let e = p.expr()?;
            if block.apply.replace((e, clause_line)).is_some() {
                return Err(p.err(format!(
                    "duplicate `apply` clause in action `{}`",
                    block.name
                )));
            }
        } else if p.eat_word("pre") {
            p.expect(&Tok::LParen)?;
            let b1 = p.var_ident()?;
            p.expect(&Tok::Comma)?;
            let b2 = p.var_ident()?;
            p.expect(&Tok::RParen)?;
            p.expect(&Tok::Eq)?;
            let e = p.expr()?;
            if b1 == b2 {
                return Err(ParseError {
                    line: clause_line,
                    col: 1,
                    message: format!(
                        "precondition binders of action `{}` must be distinct",
                        block.name
                    ),
                });
            }
            check_free_vars(
                &e,
                &[&b1, &b2],
                &format!("the precondition of action `{}`", block.name),
                clause_line,
            )?;
            let e = rename2(&e, &b1, PRE_BINDERS.0, &b2, PRE_BINDERS.1);
            if block.pre.replace((e, clause_line)).is_some() {
                return Err(p.err(format!(
                    "duplicate `pre` clause in action `{}`",
                    block.name
                )));
            }
        } else {
            return Err(p.err(format!(
                "expected `apply`, `pre`, or `}}` in action `{}`, found `{}`",
                block.name,
                p.peek()
            )));
        }
    }
    Ok(block)
}

/// Parses and typechecks a `.cspec` resource-specification file.
pub fn parse_cspec(src: &str) -> Result<RSpec, ParseError> {
    let mut p = Parser::new(src)?;
    p.strip_newlines();
    p.expect_word("spec")?;
    let name = p.ident()?;
    p.skip_newlines();
    p.expect(&Tok::LBrace)?;

    let mut value_ty: Option<Type> = None;
    let mut abs_ty: Option<Type> = None;
    let mut alpha: Option<(String, Expr, u32)> = None;
    let mut shared: Option<ActionBlock> = None;
    let mut unique: Vec<ActionBlock> = Vec::new();

    loop {
        p.skip_newlines();
        if p.eat(&Tok::RBrace) {
            break;
        }
        let clause_line = p.line();
        if p.eat_word("value") {
            p.expect(&Tok::Colon)?;
            if value_ty.replace(p.ty()?).is_some() {
                return Err(p.err("duplicate `value` clause".to_string()));
            }
        } else if p.eat_word("abstract") {
            p.expect(&Tok::Colon)?;
            if abs_ty.replace(p.ty()?).is_some() {
                return Err(p.err("duplicate `abstract` clause".to_string()));
            }
        } else if p.eat_word("alpha") {
            p.expect(&Tok::LParen)?;
            let binder = p.var_ident()?;
            p.expect(&Tok::RParen)?;
            p.expect(&Tok::Eq)?;
            let e = p.expr()?;
            if alpha.replace((binder, e, clause_line)).is_some() {
                return Err(p.err("duplicate `alpha` clause".to_string()));
            }
        } else if p.eat_word("shared") {
            let block = parse_action_block(&mut p)?;
            if shared.replace(block).is_some() {
                return Err(ParseError {
                    line: clause_line,
                    col: 1,
                    message: "a specification has at most one shared action".to_string(),
                });
            }
        } else if p.eat_word("unique") {
            unique.push(parse_action_block(&mut p)?);
        } else {
            return Err(p.err(format!(
                "expected `value`, `abstract`, `alpha`, `shared`, `unique`, or `}}`, found `{}`",
                p.peek()
            )));
        }
    }
    p.skip_newlines();
    p.expect_eof()?;

    let missing = |what: &str| ParseError {
        line: 1,
        col: 1,
        message: format!("spec `{name}` is missing its `{what}` clause"),
    };
    let value_ty = value_ty.ok_or_else(|| missing("value"))?;
    let abs_ty = abs_ty.ok_or_else(|| missing("abstract"))?;
    let (alpha_binder, alpha_raw, alpha_line) = alpha.ok_or_else(|| missing("alpha"))?;

    check_free_vars(
        &alpha_raw,
        &[&alpha_binder],
        "the abstraction body",
        alpha_line,
    )?;
    let alpha_expr = alpha_raw.subst(&alpha_binder, &Expr::var(VALUE_BINDER));
    let alpha_expr = {
        let mut ctx = TyCtx::new();
        ctx.declare(VALUE_BINDER, &value_ty);
        ctx.check_expecting(&alpha_expr, &abs_ty)
            .map_err(|e| type_error_at(alpha_line, e.in_context("in the abstraction body")))?
    };

    let elaborate = |block: ActionBlock| -> Result<ActionSpec, ParseError> {
        let (apply_raw, apply_line) = block.apply.ok_or_else(|| ParseError {
            line: block.line,
            col: 1,
            message: format!("action `{}` is missing its `apply` clause", block.name),
        })?;
        check_free_vars(
            &apply_raw,
            &[&alpha_binder, &block.arg_binder],
            &format!("the body of action `{}`", block.name),
            apply_line,
        )?;
        if alpha_binder == block.arg_binder {
            return Err(ParseError {
                line: block.line,
                col: 1,
                message: format!(
                    "action `{}` reuses the abstraction binder `{}` as its argument binder",
                    block.name, alpha_binder
                ),
            });
        }
        let apply = rename2(
            &apply_raw,
            &alpha_binder,
            VALUE_BINDER,
            &block.arg_binder,
            ARG_BINDER,
        );
        let apply = {
            let mut ctx = TyCtx::new();
            ctx.declare(VALUE_BINDER, &value_ty);
            ctx.declare(ARG_BINDER, &block.arg_ty);
            ctx.check_expecting(&apply, &value_ty).map_err(|e| {
                type_error_at(
                    apply_line,
                    e.in_context(&format!("in the body of action `{}`", block.name)),
                )
            })?
        };
        let pre = match block.pre {
            None => Expr::bool(true),
            Some((pre, pre_line)) => {
                let mut ctx = TyCtx::new();
                ctx.declare(PRE_BINDERS.0, &block.arg_ty);
                ctx.declare(PRE_BINDERS.1, &block.arg_ty);
                ctx.check_expecting(&pre, &Type::Bool).map_err(|e| {
                    type_error_at(
                        pre_line,
                        e.in_context(&format!(
                            "in the precondition of action `{}`",
                            block.name
                        )),
                    )
                })?
            }
        };
        Ok(ActionSpec {
            name: block.name,
            arg_ty: block.arg_ty,
            apply,
            pre,
        })
    };

    let shared_action = match shared {
        Some(block) => elaborate(block)?,
        None => ActionSpec::noop(&value_ty),
    };
    let unique_actions = unique
        .into_iter()
        .map(elaborate)
        .collect::<Result<Vec<_>, _>>()?;

    let mut seen = BTreeSet::new();
    for a in std::iter::once(&shared_action).chain(&unique_actions) {
        if !seen.insert(a.name.clone()) {
            return Err(ParseError {
                line: 1,
                col: 1,
                message: format!("duplicate action name `{}` in spec `{name}`", a.name),
            });
        }
    }

    Ok(RSpec {
        name,
        value_ty,
        abs_ty,
        alpha: alpha_expr,
        shared: shared_action,
        unique: unique_actions,
    })
}
