//! Intermediate representation: a structure-preserving lowering of the AST
//! with named references that later passes resolve to slots, plus the free
//! variable analysis closure lifting and the tree interpreter both rely on.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::rc::Rc;

use crate::ast;
use crate::lexer::Pos;
use crate::operators::Op;
use crate::value::StructDef;

#[derive(Debug, Clone)]
pub struct IrModule {
    pub name: Rc<str>,
    pub imports: Vec<(Rc<str>, Pos)>,
    pub structures: Vec<Rc<StructDef>>,
    pub augmentations: Vec<IrAugment>,
    pub functions: Vec<IrFunction>,
}

/// One `augment` block: the target type name and (method name, index of the
/// lowered function in the module's function list).
#[derive(Debug, Clone)]
pub struct IrAugment {
    pub target: Rc<str>,
    pub methods: Vec<(Rc<str>, usize)>,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub struct IrFunction {
    pub name: Rc<str>,
    pub local: bool,
    pub synthetic: bool,
    /// After lifting, a synthetic function's captured names come first.
    pub params: Vec<Rc<str>>,
    pub capture_count: usize,
    pub body: IrBlock,
    /// Filled by slot allocation.
    pub local_slots: usize,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub struct IrBlock {
    pub stmts: Vec<IrStmt>,
    pub pos: Pos,
}

#[derive(Debug, Clone)]
pub enum IrStmt {
    Let { name: Rc<str>, slot: Option<u32>, value: IrExpr, pos: Pos },
    Var { name: Rc<str>, slot: Option<u32>, value: IrExpr, pos: Pos },
    Assign { name: Rc<str>, slot: Option<u32>, value: IrExpr, pos: Pos },
    If { cond: IrExpr, then: IrBlock, alt: Option<IrBlock>, pos: Pos },
    While { cond: IrExpr, body: IrBlock, pos: Pos },
    Return { value: Option<IrExpr>, pos: Pos },
    Expr(IrExpr),
}

#[derive(Debug, Clone)]
pub struct IrLambda {
    pub params: Vec<Rc<str>>,
    pub body: IrBlock,
    pub pos: Pos,
}

/// A value a closure captures: its name and, once slots are allocated, the
/// slot in the enclosing frame it is read from at closure creation.
#[derive(Debug, Clone)]
pub struct CaptureRef {
    pub name: Rc<str>,
    pub outer_slot: Option<u32>,
}

#[derive(Debug, Clone)]
pub enum IrExpr {
    ConstInt(i32, Pos),
    ConstLong(i64, Pos),
    ConstDouble(f64, Pos),
    ConstStr(Rc<str>, Pos),
    ConstBool(bool, Pos),
    ConstNull(Pos),
    /// `slot` is filled by allocation when the name binds locally; `None`
    /// after allocation means a free reference (module function, import,
    /// or builtin).
    Reference { name: Rc<str>, slot: Option<u32>, pos: Pos },
    Binary { op: Op, lhs: Box<IrExpr>, rhs: Box<IrExpr>, pos: Pos },
    Unary { op: Op, expr: Box<IrExpr>, pos: Pos },
    /// Named call. A local binding of that name shadows free resolution, in
    /// which case `slot` is set and the call invokes the closure it holds.
    Call { name: Rc<str>, slot: Option<u32>, args: Vec<IrExpr>, pos: Pos },
    MethodCall { recv: Box<IrExpr>, name: Rc<str>, args: Vec<IrExpr>, pos: Pos },
    Lambda(Box<IrLambda>),
    MakeClosure { fn_index: u32, fn_name: Rc<str>, captures: Vec<CaptureRef>, pos: Pos },
    TupleLit(Vec<IrExpr>, Pos),
    ListLit(Vec<IrExpr>, Pos),
}

impl IrExpr {
    pub fn pos(&self) -> Pos {
        match self {
            IrExpr::ConstInt(_, p)
            | IrExpr::ConstLong(_, p)
            | IrExpr::ConstDouble(_, p)
            | IrExpr::ConstStr(_, p)
            | IrExpr::ConstBool(_, p)
            | IrExpr::ConstNull(p)
            | IrExpr::Reference { pos: p, .. }
            | IrExpr::Binary { pos: p, .. }
            | IrExpr::Unary { pos: p, .. }
            | IrExpr::Call { pos: p, .. }
            | IrExpr::MethodCall { pos: p, .. }
            | IrExpr::MakeClosure { pos: p, .. }
            | IrExpr::TupleLit(_, p)
            | IrExpr::ListLit(_, p) => *p,
            IrExpr::Lambda(l) => l.pos,
        }
    }
}

/// Lowers a parsed module. Structure-preserving and infallible: every AST
/// node maps to exactly one IR node, positions carried through. Augment-block
/// functions are flattened into the module function list under mangled
/// `Target::method` names (unreachable from source syntax).
pub fn lower(module: &ast::AstModule) -> IrModule {
    let mut functions: Vec<IrFunction> = module.functions.iter().map(lower_function).collect();
    let mut augmentations = Vec::new();
    for aug in &module.augmentations {
        let target: Rc<str> = Rc::from(aug.target.as_str());
        let mut methods = Vec::new();
        for f in &aug.functions {
            let mut lowered = lower_function(f);
            let mut mangled = format!("{}::{}", target, f.name);
            while functions.iter().any(|g| &*g.name == mangled.as_str()) {
                mangled.push('\'');
            }
            lowered.name = Rc::from(mangled.as_str());
            methods.push((Rc::from(f.name.as_str()), functions.len()));
            functions.push(lowered);
        }
        augmentations.push(IrAugment {
            target,
            methods,
            pos: aug.pos,
        });
    }
    IrModule {
        name: Rc::from(module.name.as_str()),
        imports: module
            .imports
            .iter()
            .map(|(n, p)| (Rc::from(n.as_str()), *p))
            .collect(),
        structures: module
            .structures
            .iter()
            .map(|s| {
                Rc::new(StructDef {
                    name: Rc::from(s.name.as_str()),
                    fields: s.fields.iter().map(|f| Rc::from(f.as_str())).collect(),
                })
            })
            .collect(),
        augmentations,
        functions,
    }
}

fn lower_function(f: &ast::FunctionDecl) -> IrFunction {
    IrFunction {
        name: Rc::from(f.name.as_str()),
        local: f.local,
        synthetic: f.synthetic,
        params: f.params.iter().map(|p| Rc::from(p.as_str())).collect(),
        capture_count: 0,
        body: lower_block(&f.body),
        local_slots: 0,
        pos: f.pos,
    }
}

fn lower_block(b: &ast::Block) -> IrBlock {
    IrBlock {
        stmts: b.stmts.iter().map(lower_stmt).collect(),
        pos: b.pos,
    }
}

fn lower_stmt(s: &ast::Stmt) -> IrStmt {
    match s {
        ast::Stmt::Let { name, value, pos } => IrStmt::Let {
            name: Rc::from(name.as_str()),
            slot: None,
            value: lower_expr(value),
            pos: *pos,
        },
        ast::Stmt::Var { name, value, pos } => IrStmt::Var {
            name: Rc::from(name.as_str()),
            slot: None,
            value: lower_expr(value),
            pos: *pos,
        },
        ast::Stmt::Assign { name, value, pos } => IrStmt::Assign {
            name: Rc::from(name.as_str()),
            slot: None,
            value: lower_expr(value),
            pos: *pos,
        },
        ast::Stmt::If { cond, then, alt, pos } => IrStmt::If {
            cond: lower_expr(cond),
            then: lower_block(then),
            alt: alt.as_ref().map(lower_block),
            pos: *pos,
        },
        ast::Stmt::While { cond, body, pos } => IrStmt::While {
            cond: lower_expr(cond),
            body: lower_block(body),
            pos: *pos,
        },
        ast::Stmt::Return { value, pos } => IrStmt::Return {
            value: value.as_ref().map(lower_expr),
            pos: *pos,
        },
        ast::Stmt::Expr(e) => IrStmt::Expr(lower_expr(e)),
    }
}

fn lower_expr(e: &ast::Expr) -> IrExpr {
    match e {
        ast::Expr::IntLit(n, pos) => IrExpr::ConstInt(*n, *pos),
        ast::Expr::LongLit(n, pos) => IrExpr::ConstLong(*n, *pos),
        ast::Expr::DoubleLit(d, pos) => IrExpr::ConstDouble(*d, *pos),
        ast::Expr::StrLit(s, pos) => IrExpr::ConstStr(Rc::from(s.as_str()), *pos),
        ast::Expr::BoolLit(b, pos) => IrExpr::ConstBool(*b, *pos),
        ast::Expr::NullLit(pos) => IrExpr::ConstNull(*pos),
        ast::Expr::Reference(name, pos) => IrExpr::Reference {
            name: Rc::from(name.as_str()),
            slot: None,
            pos: *pos,
        },
        ast::Expr::Binary { op, lhs, rhs, pos } => IrExpr::Binary {
            op: *op,
            lhs: Box::new(lower_expr(lhs)),
            rhs: Box::new(lower_expr(rhs)),
            pos: *pos,
        },
        ast::Expr::Unary { op, expr, pos } => IrExpr::Unary {
            op: *op,
            expr: Box::new(lower_expr(expr)),
            pos: *pos,
        },
        ast::Expr::Call { name, args, pos } => IrExpr::Call {
            name: Rc::from(name.as_str()),
            slot: None,
            args: args.iter().map(lower_expr).collect(),
            pos: *pos,
        },
        ast::Expr::MethodCall { recv, name, args, pos } => IrExpr::MethodCall {
            recv: Box::new(lower_expr(recv)),
            name: Rc::from(name.as_str()),
            args: args.iter().map(lower_expr).collect(),
            pos: *pos,
        },
        ast::Expr::Lambda { params, body, pos } => IrExpr::Lambda(Box::new(IrLambda {
            params: params.iter().map(|p| Rc::from(p.as_str())).collect(),
            body: lower_block(body),
            pos: *pos,
        })),
        ast::Expr::TupleLit(items, pos) => {
            IrExpr::TupleLit(items.iter().map(lower_expr).collect(), *pos)
        }
        ast::Expr::ListLit(items, pos) => {
            IrExpr::ListLit(items.iter().map(lower_expr).collect(), *pos)
        }
    }
}

/// Free names of a lambda body in first-use order: names used but not bound
/// by the lambda's parameters or its own let/var bindings. Nested lambdas
/// propagate their free names outward, so intermediate lambdas capture what
/// inner ones need.
pub fn lambda_free_names(params: &[Rc<str>], body: &IrBlock) -> Vec<Rc<str>> {
    let mut scope: Vec<HashSet<Rc<str>>> = vec![params.iter().cloned().collect()];
    let mut free: Vec<Rc<str>> = Vec::new();
    free_in_block(body, &mut scope, &mut free);
    free
}

fn name_in_scope(scope: &[HashSet<Rc<str>>], name: &str) -> bool {
    scope.iter().any(|s| s.contains(name))
}

fn note_use(name: &Rc<str>, scope: &[HashSet<Rc<str>>], free: &mut Vec<Rc<str>>) {
    if !name_in_scope(scope, name) && !free.iter().any(|f| f == name) {
        free.push(Rc::clone(name));
    }
}

fn free_in_block(block: &IrBlock, scope: &mut Vec<HashSet<Rc<str>>>, free: &mut Vec<Rc<str>>) {
    scope.push(HashSet::new());
    for stmt in &block.stmts {
        match stmt {
            IrStmt::Let { name, value, .. } | IrStmt::Var { name, value, .. } => {
                free_in_expr(value, scope, free);
                scope.last_mut().unwrap().insert(Rc::clone(name));
            }
            IrStmt::Assign { name, value, .. } => {
                free_in_expr(value, scope, free);
                note_use(name, scope, free);
            }
            IrStmt::If { cond, then, alt, .. } => {
                free_in_expr(cond, scope, free);
                free_in_block(then, scope, free);
                if let Some(alt) = alt {
                    free_in_block(alt, scope, free);
                }
            }
            IrStmt::While { cond, body, .. } => {
                free_in_expr(cond, scope, free);
                free_in_block(body, scope, free);
            }
            IrStmt::Return { value, .. } => {
                if let Some(value) = value {
                    free_in_expr(value, scope, free);
                }
            }
            IrStmt::Expr(e) => free_in_expr(e, scope, free),
        }
    }
    scope.pop();
}

fn free_in_expr(expr: &IrExpr, scope: &mut Vec<HashSet<Rc<str>>>, free: &mut Vec<Rc<str>>) {
    match expr {
        IrExpr::Reference { name, .. } => note_use(name, scope, free),
        IrExpr::Binary { lhs, rhs, .. } => {
            free_in_expr(lhs, scope, free);
            free_in_expr(rhs, scope, free);
        }
        IrExpr::Unary { expr, .. } => free_in_expr(expr, scope, free),
        IrExpr::Call { name, args, .. } => {
            note_use(name, scope, free);
            for a in args {
                free_in_expr(a, scope, free);
            }
        }
        IrExpr::MethodCall { recv, args, .. } => {
            free_in_expr(recv, scope, free);
            for a in args {
                free_in_expr(a, scope, free);
            }
        }
        IrExpr::Lambda(lam) => {
            for name in lambda_free_names(&lam.params, &lam.body) {
                note_use(&name, scope, free);
            }
        }
        IrExpr::MakeClosure { captures, .. } => {
            for c in captures {
                note_use(&c.name, scope, free);
            }
        }
        IrExpr::TupleLit(items, _) | IrExpr::ListLit(items, _) => {
            for item in items {
                free_in_expr(item, scope, free);
            }
        }
        _ => {}
    }
}

/// Indented IR dump behind `--emit ir`: slot indices, synthetic flags, and
/// capture lists included.
pub fn render_ir(modules: &[IrModule]) -> String {
    let mut out = String::new();
    for module in modules {
        let _ = writeln!(out, "Module {}", module.name);
        for (import, _) in &module.imports {
            let _ = writeln!(out, "  Import {import}");
        }
        for s in &module.structures {
            let _ = writeln!(
                out,
                "  Struct {} {}",
                s.name,
                s.fields
                    .iter()
                    .map(|f| f.to_string())
                    .collect::<Vec<_>>()
                    .join(" ")
            );
        }
        for a in &module.augmentations {
            for (method, idx) in &a.methods {
                let _ = writeln!(
                    out,
                    "  Augment {} {} -> {}",
                    a.target, method, module.functions[*idx].name
                );
            }
        }
        for f in &module.functions {
            let mut head = format!("  Function {}", f.name);
            if f.local {
                head.push_str(" local");
            }
            if f.synthetic {
                head.push_str(" synthetic");
            }
            if f.capture_count > 0 {
                let _ = write!(head, " captures={}", f.capture_count);
            }
            let _ = writeln!(out, "{} slots={}", head, f.local_slots);
            for (i, p) in f.params.iter().enumerate() {
                let _ = writeln!(out, "    Param {p} slot={i}");
            }
            render_ir_block(&mut out, &f.body, 2);
        }
    }
    out
}

fn ind(out: &mut String, depth: usize) {
    for _ in 0..depth {
        out.push_str("  ");
    }
}

fn slot_suffix(slot: &Option<u32>) -> String {
    match slot {
        Some(s) => format!(" slot={s}"),
        None => " free".to_string(),
    }
}

fn render_ir_block(out: &mut String, block: &IrBlock, depth: usize) {
    ind(out, depth);
    out.push_str("Block\n");
    for stmt in &block.stmts {
        render_ir_stmt(out, stmt, depth + 1);
    }
}

fn render_ir_stmt(out: &mut String, stmt: &IrStmt, depth: usize) {
    match stmt {
        IrStmt::Let { name, slot, value, .. } => {
            ind(out, depth);
            let _ = writeln!(out, "Let {name}{}", slot_suffix(slot));
            render_ir_expr(out, value, depth + 1);
        }
        IrStmt::Var { name, slot, value, .. } => {
            ind(out, depth);
            let _ = writeln!(out, "Var {name}{}", slot_suffix(slot));
            render_ir_expr(out, value, depth + 1);
        }
        IrStmt::Assign { name, slot, value, .. } => {
            ind(out, depth);
            let _ = writeln!(out, "Assign {name}{}", slot_suffix(slot));
            render_ir_expr(out, value, depth + 1);
        }
        IrStmt::If { cond, then, alt, .. } => {
            ind(out, depth);
            out.push_str("If\n");
            render_ir_expr(out, cond, depth + 1);
            render_ir_block(out, then, depth + 1);
            if let Some(alt) = alt {
                render_ir_block(out, alt, depth + 1);
            }
        }
        IrStmt::While { cond, body, .. } => {
            ind(out, depth);
            out.push_str("While\n");
            render_ir_expr(out, cond, depth + 1);
            render_ir_block(out, body, depth + 1);
        }
        IrStmt::Return { value, .. } => {
            ind(out, depth);
            out.push_str("Return\n");
            if let Some(value) = value {
                render_ir_expr(out, value, depth + 1);
            }
        }
        IrStmt::Expr(e) => render_ir_expr(out, e, depth),
    }
}

fn render_ir_expr(out: &mut String, expr: &IrExpr, depth: usize) {
    ind(out, depth);
    match expr {
        IrExpr::ConstInt(n, _) => {
            let _ = writeln!(out, "Const Int {n}");
        }
        IrExpr::ConstLong(n, _) => {
            let _ = writeln!(out, "Const Long {n}");
        }
        IrExpr::ConstDouble(d, _) => {
            let _ = writeln!(out, "Const Double {d}");
        }
        IrExpr::ConstStr(s, _) => {
            let _ = writeln!(out, "Const Str {s:?}");
        }
        IrExpr::ConstBool(b, _) => {
            let _ = writeln!(out, "Const Bool {b}");
        }
        IrExpr::ConstNull(_) => out.push_str("Const Null\n"),
        IrExpr::Reference { name, slot, .. } => {
            let _ = writeln!(out, "Reference {name}{}", slot_suffix(slot));
        }
        IrExpr::Binary { op, lhs, rhs, .. } => {
            let _ = writeln!(out, "Binary {}", op.symbol());
            render_ir_expr(out, lhs, depth + 1);
            render_ir_expr(out, rhs, depth + 1);
        }
        IrExpr::Unary { op, expr, .. } => {
            let _ = writeln!(out, "Unary {}", op.symbol());
            render_ir_expr(out, expr, depth + 1);
        }
        IrExpr::Call { name, slot, args, .. } => {
            match slot {
                Some(s) => {
                    let _ = writeln!(out, "CallLocal {name} slot={s}");
                }
                None => {
                    let _ = writeln!(out, "Call {name}");
                }
            }
            for a in args {
                render_ir_expr(out, a, depth + 1);
            }
        }
        IrExpr::MethodCall { recv, name, args, .. } => {
            let _ = writeln!(out, "MethodCall {name}");
            render_ir_expr(out, recv, depth + 1);
            for a in args {
                render_ir_expr(out, a, depth + 1);
            }
        }
        IrExpr::Lambda(lam) => {
            out.push_str("Lambda\n");
            for p in &lam.params {
                ind(out, depth + 1);
                let _ = writeln!(out, "Param {p}");
            }
            render_ir_block(out, &lam.body, depth + 1);
        }
        IrExpr::MakeClosure { fn_name, captures, .. } => {
            let _ = writeln!(out, "MakeClosure {fn_name} capc={}", captures.len());
            for c in captures {
                ind(out, depth + 1);
                let _ = writeln!(out, "Capture {}{}", c.name, slot_suffix(&c.outer_slot));
            }
        }
        IrExpr::TupleLit(items, _) => {
            out.push_str("Tuple\n");
            for item in items {
                render_ir_expr(out, item, depth + 1);
            }
        }
        IrExpr::ListLit(items, _) => {
            out.push_str("List\n");
            for item in items {
                render_ir_expr(out, item, depth + 1);
            }
        }
    }
}
