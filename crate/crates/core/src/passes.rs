//! IR passes: undeclared-reference checking, closure lifting, and slot
//! allocation.
//!
//! Name resolution order everywhere: enclosing lambda captures, then function
//! locals/params, then module functions, then structures (constructor calls),
//! then imported module functions/structures, then builtins. Two imports
//! providing the same name is an ambiguity error.

use std::rc::Rc;

use thiserror::Error;

use crate::builtins::BuiltinFn;
use crate::ir::*;
use crate::lexer::Pos;

/// A reference-check finding. Severity is always error; the message names the
/// offending identifier verbatim.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Diagnostic {
    pub message: String,
    pub pos: Pos,
}

impl std::fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.pos, self.message)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{pos}: assignment to captured variable: {name}")]
pub struct CaptureError {
    pub name: String,
    pub pos: Pos,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BindingKind {
    Param,
    Let,
    Var,
}

struct Binding {
    name: Rc<str>,
    kind: BindingKind,
    slot: u32,
}

/// Lexical scope stack shared by the passes. Tracks block boundaries, lambda
/// boundaries, and per-binding slots.
struct Scopes {
    bindings: Vec<Binding>,
    block_marks: Vec<usize>,
    next_slot: u32,
}

impl Scopes {
    fn for_params(params: &[Rc<str>]) -> Scopes {
        let mut s = Scopes {
            bindings: Vec::new(),
            block_marks: Vec::new(),
            next_slot: 0,
        };
        for p in params {
            s.bind(Rc::clone(p), BindingKind::Param);
        }
        s
    }

    fn bind(&mut self, name: Rc<str>, kind: BindingKind) -> u32 {
        let slot = self.next_slot;
        self.next_slot += 1;
        self.bindings.push(Binding { name, kind, slot });
        slot
    }

    fn enter_block(&mut self) {
        self.block_marks.push(self.bindings.len());
    }

    fn exit_block(&mut self) {
        let mark = self.block_marks.pop().unwrap();
        self.bindings.truncate(mark);
    }

    fn resolve(&self, name: &str) -> Option<&Binding> {
        self.bindings.iter().rev().find(|b| &*b.name == name)
    }

    fn duplicate_in_block(&self, name: &str) -> bool {
        let mark = self.block_marks.last().copied().unwrap_or(0);
        self.bindings[mark..].iter().any(|b| &*b.name == name)
    }
}

/// What a free (non-local) name resolves to in a module's environment.
struct ModuleEnv<'p> {
    modules: &'p [IrModule],
    index: usize,
}

enum FreeResolution {
    Found,
    Ambiguous,
    Missing,
}

impl<'p> ModuleEnv<'p> {
    fn module(&self) -> &IrModule {
        &self.modules[self.index]
    }

    /// Resolution tiers past the local scope. `is_call` admits structure
    /// constructors, which are not referenceable as values.
    fn resolve_free(&self, name: &str, is_call: bool) -> FreeResolution {
        let m = self.module();
        if m.functions.iter().any(|f| &*f.name == name) {
            return FreeResolution::Found;
        }
        if is_call && m.structures.iter().any(|s| &*s.name == name) {
            return FreeResolution::Found;
        }
        let mut providers = 0;
        for (import, _) in &m.imports {
            let Some(imported) = self
                .modules
                .iter()
                .find(|other| other.name == *import && !std::ptr::eq(*other, m))
            else {
                continue;
            };
            let has_fn = imported
                .functions
                .iter()
                .any(|f| &*f.name == name && !f.local);
            let has_struct = is_call && imported.structures.iter().any(|s| &*s.name == name);
            if has_fn || has_struct {
                providers += 1;
            }
        }
        match providers {
            0 => {
                if BuiltinFn::by_name(name).is_some() {
                    FreeResolution::Found
                } else {
                    FreeResolution::Missing
                }
            }
            1 => FreeResolution::Found,
            _ => FreeResolution::Ambiguous,
        }
    }
}

/// Checks every reference, call, and assignment in the program. Empty result
/// means everything resolves.
pub fn check_references(modules: &[IrModule]) -> Vec<Diagnostic> {
    let mut diagnostics = Vec::new();
    for (index, module) in modules.iter().enumerate() {
        let env = ModuleEnv { modules, index };
        for f in &module.functions {
            let mut scopes = Scopes::for_params(&f.params);
            check_block(&f.body, &mut scopes, &env, &mut diagnostics);
        }
    }
    diagnostics
}

fn check_block(
    block: &IrBlock,
    scopes: &mut Scopes,
    env: &ModuleEnv<'_>,
    out: &mut Vec<Diagnostic>,
) {
    scopes.enter_block();
    for stmt in &block.stmts {
        match stmt {
            IrStmt::Let { name, value, pos, .. } | IrStmt::Var { name, value, pos, .. } => {
                check_expr(value, scopes, env, out);
                if scopes.duplicate_in_block(name) {
                    out.push(Diagnostic {
                        message: format!("duplicate binding: {name}"),
                        pos: *pos,
                    });
                }
                let kind = if matches!(stmt, IrStmt::Let { .. }) {
                    BindingKind::Let
                } else {
                    BindingKind::Var
                };
                scopes.bind(Rc::clone(name), kind);
            }
            IrStmt::Assign { name, value, pos, .. } => {
                check_expr(value, scopes, env, out);
                match scopes.resolve(name) {
                    Some(b) if b.kind == BindingKind::Var => {}
                    Some(b) if b.kind == BindingKind::Let => out.push(Diagnostic {
                        message: format!("assignment to immutable binding: {name}"),
                        pos: *pos,
                    }),
                    Some(_) => out.push(Diagnostic {
                        message: format!("assignment to parameter: {name}"),
                        pos: *pos,
                    }),
                    None => out.push(Diagnostic {
                        message: format!("undeclared reference: {name}"),
                        pos: *pos,
                    }),
                }
            }
            IrStmt::If { cond, then, alt, .. } => {
                check_expr(cond, scopes, env, out);
                check_block(then, scopes, env, out);
                if let Some(alt) = alt {
                    check_block(alt, scopes, env, out);
                }
            }
            IrStmt::While { cond, body, .. } => {
                check_expr(cond, scopes, env, out);
                check_block(body, scopes, env, out);
            }
            IrStmt::Return { value, .. } => {
                if let Some(value) = value {
                    check_expr(value, scopes, env, out);
                }
            }
            IrStmt::Expr(e) => check_expr(e, scopes, env, out),
        }
    }
    scopes.exit_block();
}

fn check_name(
    name: &Rc<str>,
    pos: Pos,
    is_call: bool,
    scopes: &Scopes,
    env: &ModuleEnv<'_>,
    out: &mut Vec<Diagnostic>,
) {
    if scopes.resolve(name).is_some() {
        return;
    }
    match env.resolve_free(name, is_call) {
        FreeResolution::Found => {}
        FreeResolution::Ambiguous => out.push(Diagnostic {
            message: format!("ambiguous reference: {name}"),
            pos,
        }),
        FreeResolution::Missing => out.push(Diagnostic {
            message: format!("undeclared reference: {name}"),
            pos,
        }),
    }
}

fn check_expr(expr: &IrExpr, scopes: &mut Scopes, env: &ModuleEnv<'_>, out: &mut Vec<Diagnostic>) {
    match expr {
        IrExpr::Reference { name, pos, .. } => {
            check_name(name, *pos, false, scopes, env, out);
        }
        IrExpr::Binary { lhs, rhs, .. } => {
            check_expr(lhs, scopes, env, out);
            check_expr(rhs, scopes, env, out);
        }
        IrExpr::Unary { expr, .. } => check_expr(expr, scopes, env, out),
        IrExpr::Call { name, args, pos, .. } => {
            check_name(name, *pos, true, scopes, env, out);
            for a in args {
                check_expr(a, scopes, env, out);
            }
        }
        IrExpr::MethodCall { recv, args, .. } => {
            check_expr(recv, scopes, env, out);
            for a in args {
                check_expr(a, scopes, env, out);
            }
        }
        IrExpr::Lambda(lam) => {
            // Enclosing bindings stay visible inside the lambda: references
            // to them are captures, which resolve first.
            scopes.enter_block();
            for p in &lam.params {
                scopes.bind(Rc::clone(p), BindingKind::Param);
            }
            check_block(&lam.body, scopes, env, out);
            scopes.exit_block();
        }
        IrExpr::MakeClosure { captures, pos, .. } => {
            for c in captures {
                check_name(&c.name, *pos, false, scopes, env, out);
            }
        }
        IrExpr::TupleLit(items, _) | IrExpr::ListLit(items, _) => {
            for item in items {
                check_expr(item, scopes, env, out);
            }
        }
        _ => {}
    }
}

/// Replaces every lambda with a `MakeClosure` of a fresh synthetic function.
/// Synthetic names are `__lambda$<n>` with `n` dense from 0 in source order
/// (pre-order walk). A closure assigning to a captured variable is a
/// compile-time error: captures are by value.
pub fn lift_closures(module: &IrModule) -> Result<IrModule, CaptureError> {
    let base = module.functions.len() as u32;
    let mut lifter = Lifter {
        counter: 0,
        base,
        synthetics: Vec::new(),
    };
    let mut lifted = module.clone();
    for f in &mut lifted.functions {
        let mut scopes = Scopes::for_params(&f.params);
        lift_block(&mut f.body, &mut scopes, &mut lifter)?;
    }
    lifter.synthetics.sort_by_key(|(n, _)| *n);
    lifted
        .functions
        .extend(lifter.synthetics.into_iter().map(|(_, f)| f));
    Ok(lifted)
}

struct Lifter {
    counter: u32,
    base: u32,
    synthetics: Vec<(u32, IrFunction)>,
}

fn lift_block(block: &mut IrBlock, scopes: &mut Scopes, lifter: &mut Lifter) -> Result<(), CaptureError> {
    scopes.enter_block();
    for stmt in &mut block.stmts {
        let is_let = matches!(stmt, IrStmt::Let { .. });
        match stmt {
            IrStmt::Let { name, value, .. } | IrStmt::Var { name, value, .. } => {
                lift_expr(value, scopes, lifter)?;
                let kind = if is_let { BindingKind::Let } else { BindingKind::Var };
                scopes.bind(Rc::clone(name), kind);
            }
            IrStmt::Assign { value, .. } => lift_expr(value, scopes, lifter)?,
            IrStmt::If { cond, then, alt, .. } => {
                lift_expr(cond, scopes, lifter)?;
                lift_block(then, scopes, lifter)?;
                if let Some(alt) = alt {
                    lift_block(alt, scopes, lifter)?;
                }
            }
            IrStmt::While { cond, body, .. } => {
                lift_expr(cond, scopes, lifter)?;
                lift_block(body, scopes, lifter)?;
            }
            IrStmt::Return { value, .. } => {
                if let Some(value) = value {
                    lift_expr(value, scopes, lifter)?;
                }
            }
            IrStmt::Expr(e) => lift_expr(e, scopes, lifter)?,
        }
    }
    scopes.exit_block();
    Ok(())
}

/// Finds an assignment inside the lambda whose target is not bound within
/// the lambda itself (and therefore writes to a captured variable). Nested
/// lambdas are skipped; they are checked when they are lifted.
fn find_captured_assignment(lam: &IrLambda) -> Option<(Rc<str>, Pos)> {
    let mut local = Scopes::for_params(&lam.params);
    captured_assign_in_block(&lam.body, &mut local)
}

fn captured_assign_in_block(block: &IrBlock, local: &mut Scopes) -> Option<(Rc<str>, Pos)> {
    local.enter_block();
    let mut found = None;
    for stmt in &block.stmts {
        match stmt {
            IrStmt::Let { name, .. } | IrStmt::Var { name, .. } => {
                let kind = if matches!(stmt, IrStmt::Let { .. }) {
                    BindingKind::Let
                } else {
                    BindingKind::Var
                };
                local.bind(Rc::clone(name), kind);
            }
            IrStmt::Assign { name, pos, .. } => {
                if local.resolve(name).is_none() {
                    found = Some((Rc::clone(name), *pos));
                    break;
                }
            }
            IrStmt::If { then, alt, .. } => {
                found = captured_assign_in_block(then, local)
                    .or_else(|| alt.as_ref().and_then(|alt| captured_assign_in_block(alt, local)));
                if found.is_some() {
                    break;
                }
            }
            IrStmt::While { body, .. } => {
                found = captured_assign_in_block(body, local);
                if found.is_some() {
                    break;
                }
            }
            _ => {}
        }
    }
    local.exit_block();
    found
}

fn lift_expr(expr: &mut IrExpr, scopes: &mut Scopes, lifter: &mut Lifter) -> Result<(), CaptureError> {
    match expr {
        IrExpr::Binary { lhs, rhs, .. } => {
            lift_expr(lhs, scopes, lifter)?;
            lift_expr(rhs, scopes, lifter)?;
        }
        IrExpr::Unary { expr, .. } => lift_expr(expr, scopes, lifter)?,
        IrExpr::Call { args, .. } => {
            for a in args {
                lift_expr(a, scopes, lifter)?;
            }
        }
        IrExpr::MethodCall { recv, args, .. } => {
            lift_expr(recv, scopes, lifter)?;
            for a in args {
                lift_expr(a, scopes, lifter)?;
            }
        }
        IrExpr::TupleLit(items, _) | IrExpr::ListLit(items, _) => {
            for item in items {
                lift_expr(item, scopes, lifter)?;
            }
        }
        IrExpr::Lambda(lam) => {
            let n = lifter.counter;
            lifter.counter += 1;
            // Captured names: free in the lambda, bound in the enclosing scope.
            let captures: Vec<Rc<str>> = lambda_free_names(&lam.params, &lam.body)
                .into_iter()
                .filter(|name| scopes.resolve(name).is_some())
                .collect();
            // A write to a name not bound inside the lambda would mutate a
            // by-value capture copy; reject it.
            if let Some((name, pos)) = find_captured_assignment(lam) {
                if scopes.resolve(&name).is_some() {
                    return Err(CaptureError {
                        name: name.to_string(),
                        pos,
                    });
                }
            }
            let fn_name: Rc<str> = Rc::from(format!("__lambda${n}"));
            // Lift inner lambdas first, inside the synthetic's own scope.
            let mut body = std::mem::replace(
                &mut lam.body,
                IrBlock {
                    stmts: Vec::new(),
                    pos: lam.pos,
                },
            );
            let mut params: Vec<Rc<str>> = captures.clone();
            params.extend(lam.params.iter().cloned());
            let mut inner_scopes = Scopes::for_params(&params);
            lift_block(&mut body, &mut inner_scopes, lifter)?;
            lifter.synthetics.push((
                n,
                IrFunction {
                    name: Rc::clone(&fn_name),
                    local: true,
                    synthetic: true,
                    capture_count: captures.len(),
                    params,
                    body,
                    local_slots: 0,
                    pos: lam.pos,
                },
            ));
            *expr = IrExpr::MakeClosure {
                fn_index: lifter.base + n,
                fn_name,
                captures: captures
                    .into_iter()
                    .map(|name| CaptureRef {
                        name,
                        outer_slot: None,
                    })
                    .collect(),
                pos: expr.pos(),
            };
        }
        _ => {}
    }
    Ok(())
}

/// Assigns every binding a distinct frame slot: parameters occupy slots
/// 0..params-1 in declaration order, locals follow in binding order. Slots
/// are never reused across sibling scopes. References that stay unresolved
/// are free names for the linker.
pub fn allocate_slots(f: &IrFunction) -> IrFunction {
    let mut out = f.clone();
    let mut scopes = Scopes::for_params(&out.params);
    alloc_block(&mut out.body, &mut scopes);
    out.local_slots = scopes.next_slot as usize;
    out
}

/// Convenience: slot-allocates every function of every module.
pub fn allocate_all(modules: &mut [IrModule]) {
    for m in modules {
        for f in &mut m.functions {
            *f = allocate_slots(f);
        }
    }
}

fn alloc_block(block: &mut IrBlock, scopes: &mut Scopes) {
    scopes.enter_block();
    for stmt in &mut block.stmts {
        let is_let = matches!(stmt, IrStmt::Let { .. });
        match stmt {
            IrStmt::Let { name, slot, value, .. } | IrStmt::Var { name, slot, value, .. } => {
                alloc_expr(value, scopes);
                let kind = if is_let { BindingKind::Let } else { BindingKind::Var };
                *slot = Some(scopes.bind(Rc::clone(name), kind));
            }
            IrStmt::Assign { name, slot, value, .. } => {
                alloc_expr(value, scopes);
                *slot = scopes.resolve(name).map(|b| b.slot);
            }
            IrStmt::If { cond, then, alt, .. } => {
                alloc_expr(cond, scopes);
                alloc_block(then, scopes);
                if let Some(alt) = alt {
                    alloc_block(alt, scopes);
                }
            }
            IrStmt::While { cond, body, .. } => {
                alloc_expr(cond, scopes);
                alloc_block(body, scopes);
            }
            IrStmt::Return { value, .. } => {
                if let Some(value) = value {
                    alloc_expr(value, scopes);
                }
            }
            IrStmt::Expr(e) => alloc_expr(e, scopes),
        }
    }
    scopes.exit_block();
}

fn alloc_expr(expr: &mut IrExpr, scopes: &mut Scopes) {
    match expr {
        IrExpr::Reference { name, slot, .. } => {
            *slot = scopes.resolve(name).map(|b| b.slot);
        }
        IrExpr::Binary { lhs, rhs, .. } => {
            alloc_expr(lhs, scopes);
            alloc_expr(rhs, scopes);
        }
        IrExpr::Unary { expr, .. } => alloc_expr(expr, scopes),
        IrExpr::Call { name, slot, args, .. } => {
            *slot = scopes.resolve(name).map(|b| b.slot);
            for a in args {
                alloc_expr(a, scopes);
            }
        }
        IrExpr::MethodCall { recv, args, .. } => {
            alloc_expr(recv, scopes);
            for a in args {
                alloc_expr(a, scopes);
            }
        }
        IrExpr::MakeClosure { captures, .. } => {
            for c in captures {
                c.outer_slot = scopes.resolve(&c.name).map(|b| b.slot);
                debug_assert!(c.outer_slot.is_some(), "capture {} must be local", c.name);
            }
        }
        IrExpr::TupleLit(items, _) | IrExpr::ListLit(items, _) => {
            for item in items {
                alloc_expr(item, scopes);
            }
        }
        IrExpr::Lambda(_) => panic!("allocate_slots requires lifted IR"),
        _ => {}
    }
}
