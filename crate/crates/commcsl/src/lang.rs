//! Commands of the concurrent heap language, plus the annotated block
//! structure that proof outlines are written in.
//!
//! Programs are parsed into [`Block`]s whose items are statements and raw
//! `//@` annotation lines. Plain execution works on the derived [`Cmd`]
//! tree, which folds blocks into sequencing and drops annotations. `Cmd`
//! equality and hashing ignore source positions so exploration can memoize
//! on (command, state).

use std::collections::BTreeSet;
use std::fmt;

use crate::expr::{Expr, ExprKind};

/// A command with its source line (1-based). Equality/order/hash ignore the
/// line so that structurally equal residual programs memoize together.
#[derive(Debug, Clone)]
pub struct Cmd {
    pub kind: CmdKind,
    pub line: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CmdKind {
    /// `x := e`
    Assign(String, Expr),
    /// `x := [e]` — heap read
    Read(String, Expr),
    /// `[e1] := e2` — heap write
    Write(Expr, Expr),
    /// `x := alloc(e)`
    Alloc(String, Expr),
    Skip,
    Seq(Box<Cmd>, Box<Cmd>),
    If(Expr, Box<Cmd>, Box<Cmd>),
    While(Expr, Box<Cmd>),
    Par(Box<Cmd>, Box<Cmd>),
    Atomic(Box<Cmd>),
}

impl PartialEq for Cmd {
    fn eq(&self, other: &Self) -> bool {
        self.kind == other.kind
    }
}

impl Eq for Cmd {}

impl PartialOrd for Cmd {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cmd {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.kind.cmp(&other.kind)
    }
}

impl std::hash::Hash for Cmd {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.kind.hash(state);
    }
}

impl Cmd {
    pub fn new(kind: CmdKind, line: u32) -> Cmd {
        Cmd { kind, line }
    }

    pub fn skip() -> Cmd {
        Cmd::new(CmdKind::Skip, 0)
    }

    pub fn seq(a: Cmd, b: Cmd) -> Cmd {
        let line = a.line;
        Cmd::new(CmdKind::Seq(Box::new(a), Box::new(b)), line)
    }

    pub fn is_skip(&self) -> bool {
        matches!(self.kind, CmdKind::Skip)
    }

    /// Variables the command can write: targets of assignments, heap reads,
    /// and allocations.
    pub fn mod_set(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_mods(&mut out);
        out
    }

    fn collect_mods(&self, out: &mut BTreeSet<String>) {
        match &self.kind {
            CmdKind::Assign(x, _) | CmdKind::Read(x, _) | CmdKind::Alloc(x, _) => {
                out.insert(x.clone());
            }
            CmdKind::Write(_, _) | CmdKind::Skip => {}
            CmdKind::Seq(a, b) | CmdKind::Par(a, b) => {
                a.collect_mods(out);
                b.collect_mods(out);
            }
            CmdKind::If(_, a, b) => {
                a.collect_mods(out);
                b.collect_mods(out);
            }
            CmdKind::While(_, a) | CmdKind::Atomic(a) => a.collect_mods(out),
        }
    }

    /// Variables occurring in the command. Write targets of assignments,
    /// reads, and allocations count as occurrences, so `mod_set` is always a
    /// subset of `free_vars`.
    pub fn free_vars(&self) -> BTreeSet<String> {
        let mut out = BTreeSet::new();
        self.collect_free(&mut out);
        out
    }

    fn collect_free(&self, out: &mut BTreeSet<String>) {
        match &self.kind {
            CmdKind::Assign(x, e) | CmdKind::Read(x, e) | CmdKind::Alloc(x, e) => {
                out.insert(x.clone());
                out.extend(e.free_vars());
            }
            CmdKind::Write(e1, e2) => {
                out.extend(e1.free_vars());
                out.extend(e2.free_vars());
            }
            CmdKind::Skip => {}
            CmdKind::Seq(a, b) | CmdKind::Par(a, b) => {
                a.collect_free(out);
                b.collect_free(out);
            }
            CmdKind::If(b, c1, c2) => {
                out.extend(b.free_vars());
                c1.collect_free(out);
                c2.collect_free(out);
            }
            CmdKind::While(b, c) => {
                out.extend(b.free_vars());
                c.collect_free(out);
            }
            CmdKind::Atomic(c) => c.collect_free(out),
        }
    }

    /// True if the command contains a parallel composition anywhere.
    pub fn contains_par(&self) -> bool {
        match &self.kind {
            CmdKind::Par(_, _) => true,
            CmdKind::Seq(a, b) => a.contains_par() || b.contains_par(),
            CmdKind::If(_, a, b) => a.contains_par() || b.contains_par(),
            CmdKind::While(_, a) | CmdKind::Atomic(a) => a.contains_par(),
            _ => false,
        }
    }
}

/// A raw `//@ ...` annotation line, parsed further by the outline checker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawAnnot {
    pub line: u32,
    /// Text after `//@`, trimmed.
    pub text: String,
}

/// A block as written: statements and annotation lines, in order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Block {
    pub items: Vec<Item>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Item {
    Annot(RawAnnot),
    Stmt(Stmt),
}

/// An outline-level statement: leaves are commands, compounds keep their
/// annotated sub-blocks.
#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Basic(Cmd),
    If(Expr, Block, Block, u32),
    While(Expr, Block, u32),
    Par(Block, Block, u32),
    Atomic(Block, u32),
}

impl Stmt {
    pub fn line(&self) -> u32 {
        match self {
            Stmt::Basic(c) => c.line,
            Stmt::If(_, _, _, l)
            | Stmt::While(_, _, l)
            | Stmt::Par(_, _, l)
            | Stmt::Atomic(_, l) => *l,
        }
    }

    /// The plain command this statement denotes (annotations dropped).
    pub fn to_cmd(&self) -> Cmd {
        match self {
            Stmt::Basic(c) => c.clone(),
            Stmt::If(b, c1, c2, l) => Cmd::new(
                CmdKind::If(b.clone(), Box::new(c1.to_cmd()), Box::new(c2.to_cmd())),
                *l,
            ),
            Stmt::While(b, c, l) => {
                Cmd::new(CmdKind::While(b.clone(), Box::new(c.to_cmd())), *l)
            }
            Stmt::Par(c1, c2, l) => Cmd::new(
                CmdKind::Par(Box::new(c1.to_cmd()), Box::new(c2.to_cmd())),
                *l,
            ),
            Stmt::Atomic(c, l) => Cmd::new(CmdKind::Atomic(Box::new(c.to_cmd())), *l),
        }
    }
}

impl Block {
    pub fn stmts(&self) -> impl Iterator<Item = &Stmt> {
        self.items.iter().filter_map(|i| match i {
            Item::Stmt(s) => Some(s),
            Item::Annot(_) => None,
        })
    }

    /// Folds the block into a single command; the empty block is `skip`.
    pub fn to_cmd(&self) -> Cmd {
        let mut stmts: Vec<Cmd> = self.stmts().map(Stmt::to_cmd).collect();
        match stmts.len() {
            0 => Cmd::skip(),
            1 => stmts.pop().unwrap(),
            _ => {
                let mut cmd = stmts.pop().unwrap();
                while let Some(c) = stmts.pop() {
                    cmd = Cmd::seq(c, cmd);
                }
                cmd
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Pretty-printing (canonical program form)
// ---------------------------------------------------------------------------

impl fmt::Display for Cmd {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_cmd(f, self, 0)
    }
}

fn indent(f: &mut fmt::Formatter<'_>, depth: usize) -> fmt::Result {
    write!(f, "{:1$}", "", depth * 2)
}

fn write_cmd(f: &mut fmt::Formatter<'_>, c: &Cmd, depth: usize) -> fmt::Result {
    match &c.kind {
        CmdKind::Seq(a, b) => {
            write_cmd(f, a, depth)?;
            writeln!(f)?;
            write_cmd(f, b, depth)
        }
        CmdKind::Assign(x, e) => {
            indent(f, depth)?;
            // A bare one-element sequence literal on an assignment's right
            // side would reparse as a heap read, so keep its trailing comma.
            if let ExprKind::SeqLit(xs) = &e.kind {
                if xs.len() == 1 {
                    return write!(f, "{x} := [{},]", xs[0]);
                }
            }
            write!(f, "{x} := {e}")
        }
        CmdKind::Read(x, e) => {
            indent(f, depth)?;
            write!(f, "{x} := [{e}]")
        }
        CmdKind::Write(e1, e2) => {
            indent(f, depth)?;
            write!(f, "[{e1}] := {e2}")
        }
        CmdKind::Alloc(x, e) => {
            indent(f, depth)?;
            write!(f, "{x} := alloc({e})")
        }
        CmdKind::Skip => {
            indent(f, depth)?;
            write!(f, "skip")
        }
        CmdKind::If(b, c1, c2) => {
            indent(f, depth)?;
            writeln!(f, "if {b} {{")?;
            write_cmd(f, c1, depth + 1)?;
            writeln!(f)?;
            indent(f, depth)?;
            if c2.is_skip() {
                write!(f, "}}")
            } else {
                writeln!(f, "}} else {{")?;
                write_cmd(f, c2, depth + 1)?;
                writeln!(f)?;
                indent(f, depth)?;
                write!(f, "}}")
            }
        }
        CmdKind::While(b, body) => {
            indent(f, depth)?;
            writeln!(f, "while {b} {{")?;
            write_cmd(f, body, depth + 1)?;
            writeln!(f)?;
            indent(f, depth)?;
            write!(f, "}}")
        }
        CmdKind::Par(c1, c2) => {
            indent(f, depth)?;
            writeln!(f, "(")?;
            write_cmd(f, c1, depth + 1)?;
            writeln!(f)?;
            indent(f, depth)?;
            writeln!(f, "||")?;
            write_cmd(f, c2, depth + 1)?;
            writeln!(f)?;
            indent(f, depth)?;
            write!(f, ")")
        }
        CmdKind::Atomic(body) => {
            indent(f, depth)?;
            writeln!(f, "atomic {{")?;
            write_cmd(f, body, depth + 1)?;
            writeln!(f)?;
            indent(f, depth)?;
            write!(f, "}}")
        }
    }
}

// ---------------------------------------------------------------------------
// Expression printing (precedence-aware, reparses to the same tree)
// ---------------------------------------------------------------------------

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write_expr(f, self, 0)
    }
}

/// Precedence levels, loosest first. Used by the printer to decide where
/// parentheses are required.
fn prec(e: &Expr) -> u8 {
    match &e.kind {
        ExprKind::Let(..) | ExprKind::Cond(..) => 0,
        ExprKind::Binary(op, _, _) => match op {
            crate::expr::BinOp::Or => 1,
            crate::expr::BinOp::And => 2,
            crate::expr::BinOp::Eq
            | crate::expr::BinOp::Ne
            | crate::expr::BinOp::Lt
            | crate::expr::BinOp::Le
            | crate::expr::BinOp::Gt
            | crate::expr::BinOp::Ge => 3,
            crate::expr::BinOp::Add | crate::expr::BinOp::Sub | crate::expr::BinOp::Concat => 4,
            crate::expr::BinOp::Mul => 5,
            crate::expr::BinOp::Union | crate::expr::BinOp::Diff => 8,
        },
        ExprKind::Unary(..) => 6,
        ExprKind::Index(..) | ExprKind::MapUpdate(..) => 7,
        _ => 8,
    }
}

pub(crate) fn write_expr(f: &mut fmt::Formatter<'_>, e: &Expr, min: u8) -> fmt::Result {
    let p = prec(e);
    let parens = p < min;
    if parens {
        write!(f, "(")?;
    }
    match &e.kind {
        ExprKind::IntLit(n) => write!(f, "{n}")?,
        ExprKind::BoolLit(b) => write!(f, "{b}")?,
        ExprKind::Var(x) => write!(f, "{x}")?,
        ExprKind::Unary(op, a) => {
            write!(
                f,
                "{}",
                match op {
                    crate::expr::UnOp::Not => "!",
                    crate::expr::UnOp::Neg => "-",
                }
            )?;
            write_expr(f, a, 6)?;
        }
        ExprKind::Binary(op, a, b) => {
            use crate::expr::BinOp::*;
            match op {
                Union => {
                    write!(f, "union(")?;
                    write_expr(f, a, 0)?;
                    write!(f, ", ")?;
                    write_expr(f, b, 0)?;
                    write!(f, ")")?;
                }
                Diff => {
                    write!(f, "diff(")?;
                    write_expr(f, a, 0)?;
                    write!(f, ", ")?;
                    write_expr(f, b, 0)?;
                    write!(f, ")")?;
                }
                _ => {
                    let s = match op {
                        Add => "+",
                        Sub => "-",
                        Mul => "*",
                        And => "&&",
                        Or => "||",
                        Eq => "==",
                        Ne => "!=",
                        Lt => "<",
                        Le => "<=",
                        Gt => ">",
                        Ge => ">=",
                        Concat => "++",
                        Union | Diff => unreachable!(),
                    };
                    // Left-associative: the left child may print at this
                    // level, the right child must bind tighter.
                    write_expr(f, a, p)?;
                    write!(f, " {s} ")?;
                    write_expr(f, b, p + 1)?;
                }
            }
        }
        ExprKind::Pair(a, b) => {
            write!(f, "(")?;
            write_expr(f, a, 0)?;
            write!(f, ", ")?;
            write_expr(f, b, 0)?;
            write!(f, ")")?;
        }
        ExprKind::Fst(a) => call1(f, "fst", a)?,
        ExprKind::Snd(a) => call1(f, "snd", a)?,
        ExprKind::SeqLit(xs) => {
            write!(f, "[")?;
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write_expr(f, x, 0)?;
            }
            write!(f, "]")?;
        }
        ExprKind::MsLit(xs) => {
            write!(f, "{{|")?;
            for (i, x) in xs.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write_expr(f, x, 0)?;
            }
            write!(f, "|}}")?;
        }
        ExprKind::MapLit(kvs) => {
            write!(f, "{{")?;
            for (i, (k, v)) in kvs.iter().enumerate() {
                if i > 0 {
                    write!(f, ", ")?;
                }
                write_expr(f, k, 0)?;
                write!(f, " -> ")?;
                write_expr(f, v, 0)?;
            }
            write!(f, "}}")?;
        }
        ExprKind::Index(c, i) => {
            write_expr(f, c, 7)?;
            write!(f, "[")?;
            write_expr(f, i, 0)?;
            write!(f, "]")?;
        }
        ExprKind::MapUpdate(m, k, v) => {
            write_expr(f, m, 7)?;
            write!(f, "[")?;
            write_expr(f, k, 0)?;
            write!(f, " -> ")?;
            write_expr(f, v, 0)?;
            write!(f, "]")?;
        }
        ExprKind::Len(a) => call1(f, "len", a)?,
        ExprKind::Card(a) => call1(f, "card", a)?,
        ExprKind::Dom(a) => call1(f, "dom", a)?,
        ExprKind::Tail(a) => call1(f, "tail", a)?,
        ExprKind::Take(a, b) => {
            write!(f, "take(")?;
            write_expr(f, a, 0)?;
            write!(f, ", ")?;
            write_expr(f, b, 0)?;
            write!(f, ")")?;
        }
        ExprKind::ToMultiset(a) => call1(f, "toms", a)?,
        ExprKind::Sum(a) => call1(f, "sum", a)?,
        ExprKind::Cond(b, t, e2) => {
            write_expr(f, b, 1)?;
            write!(f, " ? ")?;
            write_expr(f, t, 1)?;
            write!(f, " : ")?;
            write_expr(f, e2, 0)?;
        }
        ExprKind::Let(x, e1, e2) => {
            write!(f, "let {x} = ")?;
            write_expr(f, e1, 1)?;
            write!(f, " in ")?;
            write_expr(f, e2, 0)?;
        }
    }
    if parens {
        write!(f, ")")?;
    }
    Ok(())
}

fn call1(f: &mut fmt::Formatter<'_>, name: &str, a: &Expr) -> fmt::Result {
    write!(f, "{name}(")?;
    write_expr(f, a, 0)?;
    write!(f, ")")
}

#[cfg(test)]
mod tests {
    use crate::parse::parse_program;

    #[test]
    fn mod_set_and_free_vars() {
        let p = parse_program("x := y + 1\n[x] := 2\nz := [x]\nw := alloc(0)").unwrap();
        let c = p.to_cmd();
        let mods = c.mod_set();
        assert_eq!(
            mods.iter().cloned().collect::<Vec<_>>(),
            vec!["w", "x", "z"]
        );
        let fv = c.free_vars();
        assert!(fv.contains("y"));
        // Chosen rule: write targets occur free, so mods are always free.
        assert!(mods.is_subset(&fv));
    }

    #[test]
    fn mods_are_always_free() {
        let srcs = [
            "x := 1",
            "x := [y]",
            "x := alloc(5)",
            "if b { x := 1 } else { y := 2 }",
            "while b { x := x + 1 }",
            "( x := 1 || y := 2 )",
            "atomic { x := [l] }",
        ];
        for src in srcs {
            let c = parse_program(src).unwrap().to_cmd();
            assert!(
                c.mod_set().is_subset(&c.free_vars()),
                "containment failed for {src}"
            );
        }
    }
}
