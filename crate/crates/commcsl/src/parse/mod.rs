//! Recursive-descent parsers for the expression language, type syntax, and
//! annotated programs.
//!
//! Program syntax summary:
//!
//! - statements are separated by newlines or `;`
//! - `x := e` assignment, `x := [e]` heap read, `[e1] := e2` heap write,
//!   `x := alloc(e)` allocation, `skip`
//! - `if b { ... } else { ... }`, `while b { ... }`, `atomic { ... }`,
//!   `( left || right )` parallel composition
//! - `//@ ...` lines carry proof annotations and are kept in [`Block`]s
//!
//! Because `x := [e]` is a heap read, a one-element sequence literal on the
//! right of an assignment needs a trailing comma: `x := [5,]`. In every
//! other position `[5]` is the plain literal.
//!
//! [`parse_program`] also typechecks: all statements are inferred against a
//! shared variable context first, then every expression is annotated with
//! its resolved type, so later passes can enumerate variable domains.

pub mod lexer;

use std::collections::BTreeMap;

use crate::expr::{BinOp, Expr, ExprKind, TyCtx, UnOp};
use crate::lang::{Block, Cmd, CmdKind, Item, RawAnnot, Stmt};
use crate::value::Type;

use lexer::{is_reserved, lex, SpannedTok};
pub(crate) use lexer::Tok;

/// A syntax (or program-level type) error with its 1-based position.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("line {line}:{col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

/// Token-stream cursor shared by the expression, program, assertion, and
/// spec-file parsers.
pub(crate) struct Parser {
    toks: Vec<SpannedTok>,
    pos: usize,
    /// Inside a parallel-composition branch, a `||` at statement level
    /// separates the branches, so the expression grammar must not consume
    /// it. Any bracketed context (parentheses, literals, nested braces)
    /// clears the flag again.
    oror_is_separator: bool,
}

impl Parser {
    pub(crate) fn new(src: &str) -> Result<Parser, ParseError> {
        Ok(Parser {
            toks: lex(src)?,
            pos: 0,
            oror_is_separator: false,
        })
    }

    fn with_oror_separator<T>(
        &mut self,
        sep: bool,
        f: impl FnOnce(&mut Self) -> T,
    ) -> T {
        let old = std::mem::replace(&mut self.oror_is_separator, sep);
        let r = f(self);
        self.oror_is_separator = old;
        r
    }

    pub(crate) fn peek(&self) -> &Tok {
        &self.toks[self.pos].tok
    }

    pub(crate) fn line(&self) -> u32 {
        self.toks[self.pos].line
    }

    fn col(&self) -> u32 {
        self.toks[self.pos].col
    }

    pub(crate) fn bump(&mut self) -> Tok {
        let t = self.toks[self.pos].tok.clone();
        if self.pos + 1 < self.toks.len() {
            self.pos += 1;
        }
        t
    }

    pub(crate) fn eat(&mut self, t: &Tok) -> bool {
        if self.peek() == t {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect(&mut self, t: &Tok) -> Result<(), ParseError> {
        if self.eat(t) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{t}`, found `{}`", self.peek())))
        }
    }

    /// Consumes an identifier equal to `word` (keywords lex as identifiers).
    pub(crate) fn eat_word(&mut self, word: &str) -> bool {
        if matches!(self.peek(), Tok::Ident(s) if s == word) {
            self.bump();
            true
        } else {
            false
        }
    }

    pub(crate) fn expect_word(&mut self, word: &str) -> Result<(), ParseError> {
        if self.eat_word(word) {
            Ok(())
        } else {
            Err(self.err(format!("expected `{word}`, found `{}`", self.peek())))
        }
    }

    pub(crate) fn ident(&mut self) -> Result<String, ParseError> {
        match self.peek().clone() {
            Tok::Ident(s) => {
                self.bump();
                Ok(s)
            }
            other => Err(self.err(format!("expected an identifier, found `{other}`"))),
        }
    }

    /// An identifier usable as a variable name (rejects reserved words).
    pub(crate) fn var_ident(&mut self) -> Result<String, ParseError> {
        let here = self.err(String::new());
        let name = self.ident()?;
        if is_reserved(&name) {
            return Err(ParseError {
                message: format!("`{name}` is a reserved word"),
                ..here
            });
        }
        Ok(name)
    }

    pub(crate) fn int(&mut self) -> Result<i64, ParseError> {
        match *self.peek() {
            Tok::Int(n) => {
                self.bump();
                Ok(n)
            }
            _ => Err(self.err(format!("expected an integer, found `{}`", self.peek()))),
        }
    }

    pub(crate) fn err(&self, message: String) -> ParseError {
        ParseError {
            line: self.line(),
            col: self.col(),
            message,
        }
    }

    pub(crate) fn save(&self) -> usize {
        self.pos
    }

    pub(crate) fn restore(&mut self, pos: usize) {
        self.pos = pos;
    }

    pub(crate) fn skip_newlines(&mut self) {
        while matches!(self.peek(), Tok::Newline) {
            self.bump();
        }
    }

    /// Drops every newline token. Statement parsing needs newlines as
    /// separators, but keyword-introduced clause grammars (specification
    /// files) do not, and dropping them lets expressions span lines freely.
    pub(crate) fn strip_newlines(&mut self) {
        self.toks.retain(|t| !matches!(t.tok, Tok::Newline));
        self.pos = 0;
    }

    fn skip_seps(&mut self) {
        while matches!(self.peek(), Tok::Newline | Tok::Semi) {
            self.bump();
        }
    }

    pub(crate) fn at_eof(&self) -> bool {
        matches!(self.peek(), Tok::Eof)
    }

    pub(crate) fn expect_eof(&mut self) -> Result<(), ParseError> {
        self.skip_seps();
        if self.at_eof() {
            Ok(())
        } else {
            Err(self.err(format!("unexpected `{}`", self.peek())))
        }
    }

    // -----------------------------------------------------------------------
    // Types
    // -----------------------------------------------------------------------

    pub(crate) fn ty(&mut self) -> Result<Type, ParseError> {
        let name = self.ident()?;
        match name.as_str() {
            "Int" => Ok(Type::Int),
            "Bool" => Ok(Type::Bool),
            "Pair" => {
                self.expect(&Tok::LBracket)?;
                let a = self.ty()?;
                self.expect(&Tok::Comma)?;
                let b = self.ty()?;
                self.expect(&Tok::RBracket)?;
                Ok(Type::pair(a, b))
            }
            "Seq" => {
                self.expect(&Tok::LBracket)?;
                let a = self.ty()?;
                self.expect(&Tok::RBracket)?;
                Ok(Type::seq(a))
            }
            "Multiset" => {
                self.expect(&Tok::LBracket)?;
                let a = self.ty()?;
                self.expect(&Tok::RBracket)?;
                Ok(Type::multiset(a))
            }
            "Map" => {
                self.expect(&Tok::LBracket)?;
                let k = self.ty()?;
                self.expect(&Tok::Comma)?;
                let v = self.ty()?;
                self.expect(&Tok::RBracket)?;
                Ok(Type::map(k, v))
            }
            other => Err(self.err(format!("unknown type `{other}`"))),
        }
    }

    // -----------------------------------------------------------------------
    // Expressions
    // -----------------------------------------------------------------------

    pub(crate) fn expr(&mut self) -> Result<Expr, ParseError> {
        if self.eat_word("let") {
            let x = self.var_ident()?;
            self.expect(&Tok::Eq)?;
            let e1 = self.expr()?;
            self.expect_word("in")?;
            let e2 = self.expr()?;
            return Ok(Expr::new(ExprKind::Let(x, Box::new(e1), Box::new(e2))));
        }
        let cond = self.or_expr()?;
        if self.eat(&Tok::Question) {
            let t = self.expr()?;
            self.expect(&Tok::Colon)?;
            let e = self.expr()?;
            return Ok(Expr::new(ExprKind::Cond(
                Box::new(cond),
                Box::new(t),
                Box::new(e),
            )));
        }
        Ok(cond)
    }

    fn or_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.and_expr()?;
        while !self.oror_is_separator && self.eat(&Tok::OrOr) {
            let rhs = self.and_expr()?;
            lhs = Expr::binary(BinOp::Or, lhs, rhs);
        }
        Ok(lhs)
    }

    fn and_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.cmp_expr()?;
        while self.eat(&Tok::AndAnd) {
            let rhs = self.cmp_expr()?;
            lhs = Expr::binary(BinOp::And, lhs, rhs);
        }
        Ok(lhs)
    }

    /// Comparison-level expression: stops below `&&`, `||`, and `?:`.
    /// The assertion grammar reuses this level for pure atoms so that
    /// `&&` stays available as the assertion conjunction.
    pub(crate) fn cmp_expr(&mut self) -> Result<Expr, ParseError> {
        let lhs = self.add_expr()?;
        let op = match self.peek() {
            Tok::EqEq => BinOp::Eq,
            Tok::Ne => BinOp::Ne,
            Tok::Lt => BinOp::Lt,
            Tok::Le => BinOp::Le,
            Tok::Gt => BinOp::Gt,
            Tok::Ge => BinOp::Ge,
            _ => return Ok(lhs),
        };
        self.bump();
        let rhs = self.add_expr()?;
        if matches!(
            self.peek(),
            Tok::EqEq | Tok::Ne | Tok::Lt | Tok::Le | Tok::Gt | Tok::Ge
        ) {
            return Err(self.err("comparison operators do not chain; parenthesize".into()));
        }
        Ok(Expr::binary(op, lhs, rhs))
    }

    fn add_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.mul_expr()?;
        loop {
            let op = match self.peek() {
                Tok::Plus => BinOp::Add,
                Tok::Minus => BinOp::Sub,
                Tok::PlusPlus => BinOp::Concat,
                _ => break,
            };
            self.bump();
            let rhs = self.mul_expr()?;
            lhs = Expr::binary(op, lhs, rhs);
        }
        Ok(lhs)
    }

    fn mul_expr(&mut self) -> Result<Expr, ParseError> {
        let mut lhs = self.unary_expr()?;
        while self.eat(&Tok::Star) {
            let rhs = self.unary_expr()?;
            lhs = Expr::binary(BinOp::Mul, lhs, rhs);
        }
        Ok(lhs)
    }

    fn unary_expr(&mut self) -> Result<Expr, ParseError> {
        if self.eat(&Tok::Bang) {
            let e = self.unary_expr()?;
            return Ok(Expr::new(ExprKind::Unary(UnOp::Not, Box::new(e))));
        }
        if self.eat(&Tok::Minus) {
            let e = self.unary_expr()?;
            return Ok(Expr::new(ExprKind::Unary(UnOp::Neg, Box::new(e))));
        }
        self.postfix_expr()
    }

    fn postfix_expr(&mut self) -> Result<Expr, ParseError> {
        let mut e = self.atom_expr()?;
        while self.eat(&Tok::LBracket) {
            e = self.with_oror_separator(false, |p| {
                let k = p.expr()?;
                if p.eat(&Tok::Arrow) {
                    let v = p.expr()?;
                    p.expect(&Tok::RBracket)?;
                    Ok(Expr::new(ExprKind::MapUpdate(
                        Box::new(e),
                        Box::new(k),
                        Box::new(v),
                    )))
                } else {
                    p.expect(&Tok::RBracket)?;
                    Ok(Expr::new(ExprKind::Index(Box::new(e), Box::new(k))))
                }
            })?;
        }
        Ok(e)
    }

    fn call_args(&mut self, name: &str, arity: usize) -> Result<Vec<Expr>, ParseError> {
        if !self.eat(&Tok::LParen) {
            return Err(self.err(format!("`{name}` is a function and needs `(`")));
        }
        let mut args = Vec::new();
        if !self.eat(&Tok::RParen) {
            self.with_oror_separator(false, |p| {
                loop {
                    args.push(p.expr()?);
                    if p.eat(&Tok::RParen) {
                        break;
                    }
                    p.expect(&Tok::Comma)?;
                }
                Ok(())
            })?;
        }
        if args.len() != arity {
            return Err(self.err(format!(
                "`{name}` takes {arity} argument{}, got {}",
                if arity == 1 { "" } else { "s" },
                args.len()
            )));
        }
        Ok(args)
    }

    fn atom_expr(&mut self) -> Result<Expr, ParseError> {
        match self.peek().clone() {
            Tok::Int(n) => {
                self.bump();
                Ok(Expr::int(n))
            }
            Tok::LParen => {
                self.bump();
                self.with_oror_separator(false, |p| {
                    let a = p.expr()?;
                    if p.eat(&Tok::Comma) {
                        let b = p.expr()?;
                        p.expect(&Tok::RParen)?;
                        Ok(Expr::new(ExprKind::Pair(Box::new(a), Box::new(b))))
                    } else {
                        p.expect(&Tok::RParen)?;
                        Ok(a)
                    }
                })
            }
            Tok::LBracket => {
                self.bump();
                let items = self.literal_items(&Tok::RBracket)?;
                Ok(Expr::new(ExprKind::SeqLit(items)))
            }
            Tok::LMs => {
                self.bump();
                let items = self.literal_items(&Tok::RMs)?;
                Ok(Expr::new(ExprKind::MsLit(items)))
            }
            Tok::LBrace => {
                self.bump();
                self.with_oror_separator(false, |p| {
                    let mut entries = Vec::new();
                    if !p.eat(&Tok::RBrace) {
                        loop {
                            let k = p.expr()?;
                            p.expect(&Tok::Arrow)?;
                            let v = p.expr()?;
                            entries.push((k, v));
                            if p.eat(&Tok::RBrace) {
                                break;
                            }
                            p.expect(&Tok::Comma)?;
                            if p.eat(&Tok::RBrace) {
                                break;
                            }
                        }
                    }
                    Ok(Expr::new(ExprKind::MapLit(entries)))
                })
            }
            Tok::Ident(name) => match name.as_str() {
                "true" => {
                    self.bump();
                    Ok(Expr::bool(true))
                }
                "false" => {
                    self.bump();
                    Ok(Expr::bool(false))
                }
                "fst" | "snd" | "len" | "card" | "dom" | "tail" | "sum" | "toms" => {
                    self.bump();
                    let mut args = self.call_args(&name, 1)?;
                    let a = Box::new(args.pop().unwrap());
                    Ok(Expr::new(match name.as_str() {
                        "fst" => ExprKind::Fst(a),
                        "snd" => ExprKind::Snd(a),
                        "len" => ExprKind::Len(a),
                        "card" => ExprKind::Card(a),
                        "dom" => ExprKind::Dom(a),
                        "tail" => ExprKind::Tail(a),
                        "sum" => ExprKind::Sum(a),
                        _ => ExprKind::ToMultiset(a),
                    }))
                }
                "take" | "union" | "diff" => {
                    self.bump();
                    let mut args = self.call_args(&name, 2)?;
                    let b = Box::new(args.pop().unwrap());
                    let a = Box::new(args.pop().unwrap());
                    Ok(Expr::new(match name.as_str() {
                        "take" => ExprKind::Take(a, b),
                        "union" => ExprKind::Binary(BinOp::Union, a, b),
                        _ => ExprKind::Binary(BinOp::Diff, a, b),
                    }))
                }
                _ if is_reserved(&name) => {
                    Err(self.err(format!("`{name}` cannot be used in an expression here")))
                }
                _ => {
                    self.bump();
                    if matches!(self.peek(), Tok::LParen) {
                        return Err(self.err(format!("unknown function `{name}`")));
                    }
                    Ok(Expr::var(name))
                }
            },
            other => Err(self.err(format!("expected an expression, found `{other}`"))),
        }
    }

    /// Comma-separated expressions until `close`; allows a trailing comma.
    fn literal_items(&mut self, close: &Tok) -> Result<Vec<Expr>, ParseError> {
        let mut items = Vec::new();
        if self.eat(close) {
            return Ok(items);
        }
        self.with_oror_separator(false, |p| {
            loop {
                items.push(p.expr()?);
                if p.eat(close) {
                    break;
                }
                p.expect(&Tok::Comma)?;
                if p.eat(close) {
                    break;
                }
            }
            Ok(())
        })?;
        Ok(items)
    }

    // -----------------------------------------------------------------------
    // Statements and blocks
    // -----------------------------------------------------------------------

    /// True if the current token can end a statement.
    fn at_stmt_end(&self) -> bool {
        matches!(
            self.peek(),
            Tok::Newline
                | Tok::Semi
                | Tok::Eof
                | Tok::RBrace
                | Tok::OrOr
                | Tok::RParen
                | Tok::Annot(_)
        )
    }

    fn block_until(&mut self, stops: &[Tok]) -> Result<Block, ParseError> {
        let mut items = Vec::new();
        loop {
            self.skip_seps();
            if let Tok::Annot(text) = self.peek().clone() {
                items.push(Item::Annot(RawAnnot {
                    line: self.line(),
                    text,
                }));
                self.bump();
                continue;
            }
            if self.at_eof() || stops.iter().any(|s| self.peek() == s) {
                break;
            }
            let stmt = self.stmt()?;
            items.push(Item::Stmt(stmt));
            if !self.at_stmt_end() {
                return Err(self.err(format!(
                    "expected end of statement, found `{}`",
                    self.peek()
                )));
            }
        }
        Ok(Block { items })
    }

    fn braced_block(&mut self) -> Result<Block, ParseError> {
        self.expect(&Tok::LBrace)?;
        let b = self.with_oror_separator(false, |p| p.block_until(&[Tok::RBrace]))?;
        self.expect(&Tok::RBrace)?;
        Ok(b)
    }

    fn stmt(&mut self) -> Result<Stmt, ParseError> {
        let line = self.line();
        match self.peek().clone() {
            Tok::LParen => {
                self.bump();
                // Between `(` and `)`, a top-level `||` separates the two
                // branches; a boolean disjunction there must be
                // parenthesized.
                let (left, right) = self.with_oror_separator(true, |p| {
                    let left = p.block_until(&[Tok::OrOr])?;
                    p.expect(&Tok::OrOr)?;
                    let right = p.block_until(&[Tok::RParen])?;
                    Ok((left, right))
                })?;
                self.expect(&Tok::RParen)?;
                Ok(Stmt::Par(left, right, line))
            }
            Tok::LBracket => {
                self.bump();
                let addr = self.expr()?;
                self.expect(&Tok::RBracket)?;
                self.expect(&Tok::Assign)?;
                let val = self.expr()?;
                Ok(Stmt::Basic(Cmd::new(CmdKind::Write(addr, val), line)))
            }
            Tok::Ident(name) => match name.as_str() {
                "skip" => {
                    self.bump();
                    Ok(Stmt::Basic(Cmd::new(CmdKind::Skip, line)))
                }
                "if" => {
                    self.bump();
                    let cond = self.expr()?;
                    let then_b = self.braced_block()?;
                    let else_b = {
                        let mark = self.save();
                        self.skip_newlines();
                        if self.eat_word("else") {
                            self.braced_block()?
                        } else {
                            self.restore(mark);
                            Block::default()
                        }
                    };
                    Ok(Stmt::If(cond, then_b, else_b, line))
                }
                "while" => {
                    self.bump();
                    let cond = self.expr()?;
                    let body = self.braced_block()?;
                    Ok(Stmt::While(cond, body, line))
                }
                "atomic" => {
                    self.bump();
                    let body = self.braced_block()?;
                    if body.to_cmd().contains_par() {
                        return Err(ParseError {
                            line,
                            col: 1,
                            message: "parallel composition inside atomic is not allowed".into(),
                        });
                    }
                    Ok(Stmt::Atomic(body, line))
                }
                _ => {
                    let x = self.var_ident()?;
                    self.expect(&Tok::Assign)?;
                    self.assign_rhs(x, line)
                }
            },
            other => Err(self.err(format!("expected a statement, found `{other}`"))),
        }
    }

    /// Everything after `x :=`: allocation, heap read, or plain expression.
    fn assign_rhs(&mut self, x: String, line: u32) -> Result<Stmt, ParseError> {
        if matches!(self.peek(), Tok::Ident(s) if s == "alloc") {
            self.bump();
            self.expect(&Tok::LParen)?;
            let e = self.expr()?;
            self.expect(&Tok::RParen)?;
            return Ok(Stmt::Basic(Cmd::new(CmdKind::Alloc(x, e), line)));
        }
        if matches!(self.peek(), Tok::LBracket) {
            // `x := [e]` followed by the end of the statement is a heap
            // read; on any other continuation (`[]`, `[e] ++ ...`,
            // `[e, ...]`) reparse the right-hand side as an expression.
            let mark = self.save();
            self.bump();
            if let Ok(addr) = self.expr() {
                if self.eat(&Tok::RBracket) && self.at_stmt_end() {
                    return Ok(Stmt::Basic(Cmd::new(CmdKind::Read(x, addr), line)));
                }
            }
            self.restore(mark);
        }
        let e = self.expr()?;
        Ok(Stmt::Basic(Cmd::new(CmdKind::Assign(x, e), line)))
    }
}

// ---------------------------------------------------------------------------
// Entry points
// ---------------------------------------------------------------------------

/// Parses a single expression (must consume the whole input).
pub fn parse_expr(src: &str) -> Result<Expr, ParseError> {
    let mut p = Parser::new(src)?;
    p.skip_newlines();
    let e = p.expr()?;
    p.expect_eof()?;
    Ok(e)
}

/// Parses a type such as `Map[Int, Seq[Bool]]`.
pub fn parse_type(src: &str) -> Result<Type, ParseError> {
    let mut p = Parser::new(src)?;
    p.skip_newlines();
    let t = p.ty()?;
    p.expect_eof()?;
    Ok(t)
}

/// A parsed, typechecked program: the annotated block plus the inferred type
/// of every variable (unconstrained variables default to `Int`).
#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub block: Block,
    pub var_types: BTreeMap<String, Type>,
}

impl Program {
    pub fn to_cmd(&self) -> Cmd {
        self.block.to_cmd()
    }
}

/// Parses and typechecks a program.
pub fn parse_program(src: &str) -> Result<Program, ParseError> {
    let mut p = Parser::new(src)?;
    let block = p.block_until(&[])?;
    p.expect_eof()?;
    let mut ctx = TyCtx::new();
    infer_block(&block, &mut ctx)?;
    let block = annotate_block(&block, &mut ctx);
    Ok(Program {
        var_types: ctx.typed_vars(),
        block,
    })
}

fn type_err(line: u32, e: crate::expr::TypeError) -> ParseError {
    ParseError {
        line,
        col: 1,
        message: e.to_string(),
    }
}

fn infer_block(b: &Block, ctx: &mut TyCtx) -> Result<(), ParseError> {
    for s in b.stmts() {
        infer_stmt(s, ctx)?;
    }
    Ok(())
}

fn infer_stmt(s: &Stmt, ctx: &mut TyCtx) -> Result<(), ParseError> {
    match s {
        Stmt::Basic(c) => infer_cmd(c, ctx),
        Stmt::If(b, t, e, line) => {
            ctx.infer_expecting(b, &Type::Bool)
                .map_err(|e| type_err(*line, e))?;
            infer_block(t, ctx)?;
            infer_block(e, ctx)
        }
        Stmt::While(b, body, line) => {
            ctx.infer_expecting(b, &Type::Bool)
                .map_err(|e| type_err(*line, e))?;
            infer_block(body, ctx)
        }
        Stmt::Par(l, r, _) => {
            infer_block(l, ctx)?;
            infer_block(r, ctx)
        }
        Stmt::Atomic(body, _) => infer_block(body, ctx),
    }
}

fn infer_cmd(c: &Cmd, ctx: &mut TyCtx) -> Result<(), ParseError> {
    let line = c.line;
    match &c.kind {
        CmdKind::Assign(x, e) => ctx.infer_assign(x, e).map_err(|e| type_err(line, e)),
        CmdKind::Read(x, e) => {
            ctx.touch(x);
            ctx.infer_expecting(e, &Type::Int)
                .map_err(|e| type_err(line, e))
        }
        CmdKind::Write(e1, e2) => {
            ctx.infer_expecting(e1, &Type::Int)
                .map_err(|e| type_err(line, e))?;
            ctx.infer_only(e2).map_err(|e| type_err(line, e))
        }
        CmdKind::Alloc(x, e) => {
            ctx.constrain_var(x, &Type::Int)
                .map_err(|e| type_err(line, e))?;
            ctx.infer_only(e).map_err(|e| type_err(line, e))
        }
        CmdKind::Skip => Ok(()),
        CmdKind::Seq(a, b) => {
            infer_cmd(a, ctx)?;
            infer_cmd(b, ctx)
        }
        CmdKind::If(b, c1, c2) => {
            ctx.infer_expecting(b, &Type::Bool)
                .map_err(|e| type_err(line, e))?;
            infer_cmd(c1, ctx)?;
            infer_cmd(c2, ctx)
        }
        CmdKind::While(b, body) => {
            ctx.infer_expecting(b, &Type::Bool)
                .map_err(|e| type_err(line, e))?;
            infer_cmd(body, ctx)
        }
        CmdKind::Par(a, b) => {
            infer_cmd(a, ctx)?;
            infer_cmd(b, ctx)
        }
        CmdKind::Atomic(a) => infer_cmd(a, ctx),
    }
}

fn annotate_block(b: &Block, ctx: &mut TyCtx) -> Block {
    Block {
        items: b
            .items
            .iter()
            .map(|item| match item {
                Item::Annot(a) => Item::Annot(a.clone()),
                Item::Stmt(s) => Item::Stmt(annotate_stmt(s, ctx)),
            })
            .collect(),
    }
}

fn annotate_stmt(s: &Stmt, ctx: &mut TyCtx) -> Stmt {
    match s {
        Stmt::Basic(c) => Stmt::Basic(annotate_cmd(c, ctx)),
        Stmt::If(b, t, e, line) => Stmt::If(
            ctx.annotate(b),
            annotate_block(t, ctx),
            annotate_block(e, ctx),
            *line,
        ),
        Stmt::While(b, body, line) => {
            Stmt::While(ctx.annotate(b), annotate_block(body, ctx), *line)
        }
        Stmt::Par(l, r, line) => Stmt::Par(annotate_block(l, ctx), annotate_block(r, ctx), *line),
        Stmt::Atomic(body, line) => Stmt::Atomic(annotate_block(body, ctx), *line),
    }
}

fn annotate_cmd(c: &Cmd, ctx: &mut TyCtx) -> Cmd {
    let kind = match &c.kind {
        CmdKind::Assign(x, e) => CmdKind::Assign(x.clone(), ctx.annotate(e)),
        CmdKind::Read(x, e) => CmdKind::Read(x.clone(), ctx.annotate(e)),
        CmdKind::Write(e1, e2) => CmdKind::Write(ctx.annotate(e1), ctx.annotate(e2)),
        CmdKind::Alloc(x, e) => CmdKind::Alloc(x.clone(), ctx.annotate(e)),
        CmdKind::Skip => CmdKind::Skip,
        CmdKind::Seq(a, b) => CmdKind::Seq(
            Box::new(annotate_cmd(a, ctx)),
            Box::new(annotate_cmd(b, ctx)),
        ),
        CmdKind::If(b, c1, c2) => CmdKind::If(
            ctx.annotate(b),
            Box::new(annotate_cmd(c1, ctx)),
            Box::new(annotate_cmd(c2, ctx)),
        ),
        CmdKind::While(b, body) => CmdKind::While(ctx.annotate(b), Box::new(annotate_cmd(body, ctx))),
        CmdKind::Par(a, b) => CmdKind::Par(
            Box::new(annotate_cmd(a, ctx)),
            Box::new(annotate_cmd(b, ctx)),
        ),
        CmdKind::Atomic(a) => CmdKind::Atomic(Box::new(annotate_cmd(a, ctx))),
    };
    Cmd::new(kind, c.line)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::value::Type;

    #[test]
    fn expression_precedence() {
        let e = parse_expr("a + b * c").unwrap();
        assert_eq!(e.to_string(), "a + b * c");
        let e = parse_expr("(a + b) * c").unwrap();
        assert_eq!(e.to_string(), "(a + b) * c");
        let e = parse_expr("!p && q || r").unwrap();
        assert_eq!(e.to_string(), "!p && q || r");
        let e = parse_expr("a < b ? x + 1 : y").unwrap();
        assert_eq!(e.to_string(), "a < b ? x + 1 : y");
        let e = parse_expr("m[k -> v][k]").unwrap();
        assert_eq!(e.to_string(), "m[k -> v][k]");
    }

    #[test]
    fn chained_comparisons_rejected() {
        assert!(parse_expr("a < b < c").is_err());
    }

    #[test]
    fn literals_roundtrip() {
        for src in [
            "[1, 2, 3]",
            "{|1, 2, 2|}",
            "{0 -> false, 1 -> true}",
            "(1, (2, 3))",
            "union({|1|}, {|2|})",
            "take(s, 2) ++ tail(s)",
            "let x = 3 in x * x",
        ] {
            let e = parse_expr(src).unwrap();
            assert_eq!(e.to_string(), src, "canonical form of {src}");
            let e2 = parse_expr(&e.to_string()).unwrap();
            assert_eq!(e, e2);
        }
    }

    #[test]
    fn type_syntax() {
        assert_eq!(parse_type("Int").unwrap(), Type::Int);
        assert_eq!(
            parse_type("Map[Int, Seq[Bool]]").unwrap(),
            Type::map(Type::Int, Type::seq(Type::Bool))
        );
        assert_eq!(
            parse_type("Pair[Int, Multiset[Int]]").unwrap(),
            Type::pair(Type::Int, Type::multiset(Type::Int))
        );
        assert!(parse_type("List[Int]").is_err());
    }

    #[test]
    fn read_versus_sequence_literal() {
        let p = parse_program("x := [5]").unwrap();
        assert!(matches!(
            p.block.stmts().next().unwrap(),
            Stmt::Basic(Cmd {
                kind: CmdKind::Read(_, _),
                ..
            })
        ));

        let p = parse_program("x := [5,]").unwrap();
        assert!(matches!(
            p.block.stmts().next().unwrap(),
            Stmt::Basic(Cmd {
                kind: CmdKind::Assign(_, _),
                ..
            })
        ));

        let p = parse_program("x := [5] ++ [6]").unwrap();
        let first = p.block.stmts().next().unwrap().clone();
        match first {
            Stmt::Basic(Cmd {
                kind: CmdKind::Assign(_, e),
                ..
            }) => assert_eq!(e.to_string(), "[5] ++ [6]"),
            other => panic!("expected assignment, got {other:?}"),
        }
    }

    #[test]
    fn program_roundtrip_through_display() {
        let src = "x := 0\n[a] := x + 1\ny := [a]\nif y < 2 {\n  skip\n} else {\n  while y > 0 {\n    y := y - 1\n  }\n}\n(\n  atomic {\n    [a] := 2\n  }\n||\n  z := alloc(7)\n)";
        let p1 = parse_program(src).unwrap();
        let printed = p1.to_cmd().to_string();
        let p2 = parse_program(&printed).unwrap();
        assert_eq!(p1.to_cmd(), p2.to_cmd(), "printed form:\n{printed}");
    }

    #[test]
    fn annotations_are_kept_in_order() {
        let src = "//@ pre: emp\nx := 1\n//@ assert: low(x)\ny := 2\n//@ post: low(y)";
        let p = parse_program(src).unwrap();
        let texts: Vec<_> = p
            .block
            .items
            .iter()
            .map(|i| match i {
                Item::Annot(a) => format!("@{}", a.text),
                Item::Stmt(s) => format!("s{}", s.line()),
            })
            .collect();
        assert_eq!(
            texts,
            vec!["@pre: emp", "s2", "@assert: low(x)", "s4", "@post: low(y)"]
        );
    }

    #[test]
    fn par_inside_atomic_rejected() {
        let err = parse_program("atomic {\n  ( skip || skip )\n}").unwrap_err();
        assert!(err.message.contains("atomic"), "{err}");
    }

    #[test]
    fn semicolons_separate_statements() {
        let p = parse_program("x := 1; y := x + 1; skip").unwrap();
        assert_eq!(p.block.stmts().count(), 3);
    }

    #[test]
    fn reserved_words_rejected_as_targets() {
        assert!(parse_program("len := 3").is_err());
        assert!(parse_program("while := 3").is_err());
    }

    #[test]
    fn program_types_are_inferred_across_statements() {
        let p = parse_program("q := []\nq := q ++ [x,]\nb := x < 3").unwrap();
        assert_eq!(p.var_types["q"], Type::seq(Type::Int));
        assert_eq!(p.var_types["x"], Type::Int);
        assert_eq!(p.var_types["b"], Type::Bool);
    }

    #[test]
    fn later_constraints_refine_earlier_annotations() {
        let p = parse_program("q := []\nq := q ++ [true,]").unwrap();
        let first = p.block.stmts().next().unwrap();
        match first {
            Stmt::Basic(Cmd {
                kind: CmdKind::Assign(_, e),
                ..
            }) => assert_eq!(e.ty(), Type::seq(Type::Bool)),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn type_errors_carry_the_statement_line() {
        let err = parse_program("x := 1\ny := x + true").unwrap_err();
        assert_eq!(err.line, 2);
        let err = parse_program("if x + 1 {\n  skip\n}").unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn heap_addresses_must_be_integers() {
        assert!(parse_program("[true] := 1").is_err());
        assert!(parse_program("x := [[1, 2]]").is_err());
        assert!(parse_program("p := alloc(0)\np := [1, 2]").is_err());
    }
}
