//! Abstract syntax tree produced by the parser, plus the `--emit ast` dump.

use std::fmt::Write as _;

use crate::lexer::Pos;
use crate::operators::Op;

#[derive(Debug, Clone, PartialEq)]
pub struct AstModule {
    pub name: String,
    pub imports: Vec<(String, Pos)>,
    pub structures: Vec<StructureDecl>,
    pub augmentations: Vec<AugmentDecl>,
    pub functions: Vec<FunctionDecl>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureDecl {
    pub name: String,
    pub fields: Vec<String>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentDecl {
    pub target: String,
    pub functions: Vec<FunctionDecl>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FunctionDecl {
    pub name: String,
    pub local: bool,
    pub params: Vec<String>,
    pub body: Block,
    /// Set only by closure lifting; always false for parser output.
    pub synthetic: bool,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub stmts: Vec<Stmt>,
    pub pos: Pos,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Stmt {
    Let { name: String, value: Expr, pos: Pos },
    Var { name: String, value: Expr, pos: Pos },
    Assign { name: String, value: Expr, pos: Pos },
    If { cond: Expr, then: Block, alt: Option<Block>, pos: Pos },
    While { cond: Expr, body: Block, pos: Pos },
    Return { value: Option<Expr>, pos: Pos },
    Expr(Expr),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    IntLit(i32, Pos),
    LongLit(i64, Pos),
    DoubleLit(f64, Pos),
    StrLit(String, Pos),
    BoolLit(bool, Pos),
    NullLit(Pos),
    Reference(String, Pos),
    Binary { op: Op, lhs: Box<Expr>, rhs: Box<Expr>, pos: Pos },
    Unary { op: Op, expr: Box<Expr>, pos: Pos },
    Call { name: String, args: Vec<Expr>, pos: Pos },
    MethodCall { recv: Box<Expr>, name: String, args: Vec<Expr>, pos: Pos },
    Lambda { params: Vec<String>, body: Box<Block>, pos: Pos },
    TupleLit(Vec<Expr>, Pos),
    ListLit(Vec<Expr>, Pos),
}

impl Expr {
    pub fn pos(&self) -> Pos {
        match self {
            Expr::IntLit(_, p)
            | Expr::LongLit(_, p)
            | Expr::DoubleLit(_, p)
            | Expr::StrLit(_, p)
            | Expr::BoolLit(_, p)
            | Expr::NullLit(p)
            | Expr::Reference(_, p)
            | Expr::Binary { pos: p, .. }
            | Expr::Unary { pos: p, .. }
            | Expr::Call { pos: p, .. }
            | Expr::MethodCall { pos: p, .. }
            | Expr::Lambda { pos: p, .. }
            | Expr::TupleLit(_, p)
            | Expr::ListLit(_, p) => *p,
        }
    }
}

impl Stmt {
    pub fn pos(&self) -> Pos {
        match self {
            Stmt::Let { pos, .. }
            | Stmt::Var { pos, .. }
            | Stmt::Assign { pos, .. }
            | Stmt::If { pos, .. }
            | Stmt::While { pos, .. }
            | Stmt::Return { pos, .. } => *pos,
            Stmt::Expr(e) => e.pos(),
        }
    }
}

/// Stable indented tree dump behind `--emit ast`. For humans and golden
/// tests; not parseable back.
pub fn render_ast(module: &AstModule) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "Module {}", module.name);
    for (import, _) in &module.imports {
        let _ = writeln!(out, "  Import {import}");
    }
    for s in &module.structures {
        let _ = writeln!(out, "  Struct {} {}", s.name, s.fields.join(" "));
    }
    for a in &module.augmentations {
        let _ = writeln!(out, "  Augment {}", a.target);
        for f in &a.functions {
            render_function(&mut out, f, 2);
        }
    }
    for f in &module.functions {
        render_function(&mut out, f, 1);
    }
    out
}

fn indent(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn render_function(out: &mut String, f: &FunctionDecl, depth: usize) {
    indent(out, depth);
    let _ = write!(out, "Function {}", f.name);
    if f.local {
        out.push_str(" local");
    }
    if f.synthetic {
        out.push_str(" synthetic");
    }
    out.push('\n');
    for p in &f.params {
        indent(out, depth + 1);
        let _ = writeln!(out, "Param {p}");
    }
    render_block(out, &f.body, depth + 1);
}

fn render_block(out: &mut String, block: &Block, depth: usize) {
    indent(out, depth);
    out.push_str("Block\n");
    for stmt in &block.stmts {
        render_stmt(out, stmt, depth + 1);
    }
}

fn render_stmt(out: &mut String, stmt: &Stmt, depth: usize) {
    match stmt {
        Stmt::Let { name, value, .. } => {
            indent(out, depth);
            let _ = writeln!(out, "Let {name}");
            render_expr(out, value, depth + 1);
        }
        Stmt::Var { name, value, .. } => {
            indent(out, depth);
            let _ = writeln!(out, "Var {name}");
            render_expr(out, value, depth + 1);
        }
        Stmt::Assign { name, value, .. } => {
            indent(out, depth);
            let _ = writeln!(out, "Assign {name}");
            render_expr(out, value, depth + 1);
        }
        Stmt::If { cond, then, alt, .. } => {
            indent(out, depth);
            out.push_str("If\n");
            render_expr(out, cond, depth + 1);
            render_block(out, then, depth + 1);
            if let Some(alt) = alt {
                render_block(out, alt, depth + 1);
            }
        }
        Stmt::While { cond, body, .. } => {
            indent(out, depth);
            out.push_str("While\n");
            render_expr(out, cond, depth + 1);
            render_block(out, body, depth + 1);
        }
        Stmt::Return { value, .. } => {
            indent(out, depth);
            out.push_str("Return\n");
            if let Some(value) = value {
                render_expr(out, value, depth + 1);
            }
        }
        Stmt::Expr(e) => render_expr(out, e, depth),
    }
}

fn render_expr(out: &mut String, expr: &Expr, depth: usize) {
    indent(out, depth);
    match expr {
        Expr::IntLit(n, _) => {
            let _ = writeln!(out, "Literal Int {n}");
        }
        Expr::LongLit(n, _) => {
            let _ = writeln!(out, "Literal Long {n}");
        }
        Expr::DoubleLit(d, _) => {
            let _ = writeln!(out, "Literal Double {d}");
        }
        Expr::StrLit(s, _) => {
            let _ = writeln!(out, "Literal Str {s:?}");
        }
        Expr::BoolLit(b, _) => {
            let _ = writeln!(out, "Literal Bool {b}");
        }
        Expr::NullLit(_) => out.push_str("Literal Null\n"),
        Expr::Reference(name, _) => {
            let _ = writeln!(out, "Reference {name}");
        }
        Expr::Binary { op, lhs, rhs, .. } => {
            let _ = writeln!(out, "Binary {}", op.symbol());
            render_expr(out, lhs, depth + 1);
            render_expr(out, rhs, depth + 1);
        }
        Expr::Unary { op, expr, .. } => {
            let _ = writeln!(out, "Unary {}", op.symbol());
            render_expr(out, expr, depth + 1);
        }
        Expr::Call { name, args, .. } => {
            let _ = writeln!(out, "Call {name}");
            for a in args {
                render_expr(out, a, depth + 1);
            }
        }
        Expr::MethodCall { recv, name, args, .. } => {
            let _ = writeln!(out, "MethodCall {name}");
            render_expr(out, recv, depth + 1);
            for a in args {
                render_expr(out, a, depth + 1);
            }
        }
        Expr::Lambda { params, body, .. } => {
            out.push_str("Lambda\n");
            for p in params {
                indent(out, depth + 1);
                let _ = writeln!(out, "Param {p}");
            }
            render_block(out, body, depth + 1);
        }
        Expr::TupleLit(items, _) => {
            out.push_str("Tuple\n");
            for item in items {
                render_expr(out, item, depth + 1);
            }
        }
        Expr::ListLit(items, _) => {
            out.push_str("List\n");
            for item in items {
                render_expr(out, item, depth + 1);
            }
        }
    }
}
