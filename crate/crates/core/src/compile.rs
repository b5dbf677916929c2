//! IR-to-bytecode compiler. Every operator occurrence and every named or
//! method call gets its own fresh call site; `and`/`or` become short-circuit
//! jump sequences; branch refinement to Bool is left to the VM.

use std::collections::HashMap;
use std::rc::Rc;

use thiserror::Error;

use crate::bytecode::{CodeImage, CompiledFunction, Instruction, SiteMeta};
use crate::callsite::SiteKind;
use crate::ir::{IrBlock, IrExpr, IrModule, IrStmt};
use crate::link::layout_program;
use crate::object::FunctionTarget;
use crate::operators::Op;
use crate::value::{FnRef, Value};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{message}")]
pub struct CompileError {
    pub message: String,
}

fn err(message: impl Into<String>) -> CompileError {
    CompileError {
        message: message.into(),
    }
}

#[derive(Hash, PartialEq, Eq)]
enum ConstKey {
    Int(i32),
    Long(i64),
    Double(u64),
    Str(Rc<str>),
    Bool(bool),
    Null,
    Fn(FnRef),
}

#[derive(Default)]
struct ImageBuilder {
    constants: Vec<Value>,
    const_map: HashMap<ConstKey, u32>,
    names: Vec<Rc<str>>,
    name_map: HashMap<Rc<str>, u32>,
    site_meta: Vec<SiteMeta>,
}

impl ImageBuilder {
    fn const_index(&mut self, v: Value) -> u32 {
        let key = match &v {
            Value::Int(n) => ConstKey::Int(*n),
            Value::Long(n) => ConstKey::Long(*n),
            Value::Double(d) => ConstKey::Double(d.to_bits()),
            Value::Str(s) => ConstKey::Str(Rc::clone(s)),
            Value::Bool(b) => ConstKey::Bool(*b),
            Value::Null => ConstKey::Null,
            Value::FunctionRef(f) => ConstKey::Fn(*f),
            _ => unreachable!("non-constant value in pool"),
        };
        if let Some(&i) = self.const_map.get(&key) {
            return i;
        }
        let i = self.constants.len() as u32;
        self.constants.push(v);
        self.const_map.insert(key, i);
        i
    }

    fn name_index(&mut self, name: &Rc<str>) -> u32 {
        if let Some(&i) = self.name_map.get(name) {
            return i;
        }
        let i = self.names.len() as u32;
        self.names.push(Rc::clone(name));
        self.name_map.insert(Rc::clone(name), i);
        i
    }

    fn new_site(&mut self, kind: SiteKind, name: Rc<str>, argc: u32) -> u32 {
        let id = self.site_meta.len() as u32;
        self.site_meta.push(SiteMeta { kind, name, argc });
        id
    }
}

struct FnCompiler<'b> {
    code: Vec<Instruction>,
    builder: &'b mut ImageBuilder,
    module: u32,
    fn_offset: u32,
    module_map: &'b HashMap<Rc<str>, FunctionTarget>,
}

impl FnCompiler<'_> {
    fn here(&self) -> u32 {
        self.code.len() as u32
    }

    fn emit(&mut self, instr: Instruction) -> usize {
        self.code.push(instr);
        self.code.len() - 1
    }

    fn emit_jump_placeholder(&mut self, conditional: bool) -> usize {
        self.emit(if conditional {
            Instruction::JumpIfFalse(u32::MAX)
        } else {
            Instruction::Jump(u32::MAX)
        })
    }

    fn patch_to_here(&mut self, at: usize) {
        let target = self.here();
        match &mut self.code[at] {
            Instruction::Jump(t) | Instruction::JumpIfFalse(t) => *t = target,
            _ => unreachable!("patching a non-jump"),
        }
    }

    fn block(&mut self, block: &IrBlock) -> Result<(), CompileError> {
        for stmt in &block.stmts {
            self.stmt(stmt)?;
        }
        Ok(())
    }

    fn stmt(&mut self, stmt: &IrStmt) -> Result<(), CompileError> {
        match stmt {
            IrStmt::Let { slot, value, name, .. }
            | IrStmt::Var { slot, value, name, .. }
            | IrStmt::Assign { slot, value, name, .. } => {
                self.expr(value)?;
                let slot =
                    slot.ok_or_else(|| err(format!("unresolved binding in compile: {name}")))?;
                self.emit(Instruction::StoreLocal(slot));
            }
            IrStmt::If { cond, then, alt, .. } => {
                self.expr(cond)?;
                let to_else = self.emit_jump_placeholder(true);
                self.block(then)?;
                match alt {
                    Some(alt) => {
                        let to_end = self.emit_jump_placeholder(false);
                        self.patch_to_here(to_else);
                        self.block(alt)?;
                        self.patch_to_here(to_end);
                    }
                    None => self.patch_to_here(to_else),
                }
            }
            IrStmt::While { cond, body, .. } => {
                let start = self.here();
                self.expr(cond)?;
                let to_end = self.emit_jump_placeholder(true);
                self.block(body)?;
                self.emit(Instruction::Jump(start));
                self.patch_to_here(to_end);
            }
            IrStmt::Return { value, .. } => match value {
                Some(value) => {
                    self.expr(value)?;
                    self.emit(Instruction::Return);
                }
                None => {
                    self.emit(Instruction::ReturnNull);
                }
            },
            IrStmt::Expr(e) => {
                self.expr(e)?;
                self.emit(Instruction::Pop);
            }
        }
        Ok(())
    }

    fn expr(&mut self, expr: &IrExpr) -> Result<(), CompileError> {
        match expr {
            IrExpr::ConstInt(n, _) => {
                let k = self.builder.const_index(Value::Int(*n));
                self.emit(Instruction::LoadConst(k));
            }
            IrExpr::ConstLong(n, _) => {
                let k = self.builder.const_index(Value::Long(*n));
                self.emit(Instruction::LoadConst(k));
            }
            IrExpr::ConstDouble(d, _) => {
                let k = self.builder.const_index(Value::Double(*d));
                self.emit(Instruction::LoadConst(k));
            }
            IrExpr::ConstStr(s, _) => {
                let k = self.builder.const_index(Value::Str(Rc::clone(s)));
                self.emit(Instruction::LoadConst(k));
            }
            IrExpr::ConstBool(b, _) => {
                let k = self.builder.const_index(Value::Bool(*b));
                self.emit(Instruction::LoadConst(k));
            }
            IrExpr::ConstNull(_) => {
                let k = self.builder.const_index(Value::Null);
                self.emit(Instruction::LoadConst(k));
            }
            IrExpr::Reference { name, slot, .. } => match slot {
                Some(s) => {
                    self.emit(Instruction::LoadLocal(*s));
                }
                None => {
                    let fn_ref = match self.module_map.get(name) {
                        Some(FunctionTarget::User(idx)) => FnRef::User(*idx),
                        Some(FunctionTarget::Builtin(b)) => FnRef::Builtin(*b),
                        Some(FunctionTarget::Struct(_)) => {
                            return Err(err(format!("structure {name} is not a value")))
                        }
                        None => match crate::builtins::BuiltinFn::by_name(name) {
                            Some(b) => FnRef::Builtin(b),
                            None => return Err(err(format!("unresolved reference: {name}"))),
                        },
                    };
                    let k = self.builder.const_index(Value::FunctionRef(fn_ref));
                    self.emit(Instruction::LoadConst(k));
                }
            },
            IrExpr::Binary { op, lhs, rhs, .. } if op.is_short_circuit() => {
                self.short_circuit(*op, lhs, rhs)?;
            }
            IrExpr::Binary { op, lhs, rhs, .. } => {
                self.expr(lhs)?;
                self.expr(rhs)?;
                let site = self.builder.new_site(SiteKind::Operator, Rc::from(op.name()), 2);
                self.emit(Instruction::CallOperator { site, op: *op });
            }
            IrExpr::Unary { op, expr, .. } => {
                self.expr(expr)?;
                let site = self.builder.new_site(SiteKind::Operator, Rc::from(op.name()), 1);
                self.emit(Instruction::CallOperator { site, op: *op });
            }
            IrExpr::Call { name, slot, args, .. } => {
                match slot {
                    Some(s) => {
                        // Local binding shadows free resolution: the call
                        // invokes the closure value the local holds.
                        self.emit(Instruction::LoadLocal(*s));
                        for a in args {
                            self.expr(a)?;
                        }
                        self.emit(Instruction::CallClosure {
                            argc: args.len() as u32,
                        });
                    }
                    None => {
                        for a in args {
                            self.expr(a)?;
                        }
                        let site =
                            self.builder
                                .new_site(SiteKind::Function, Rc::clone(name), args.len() as u32);
                        let name = self.builder.name_index(name);
                        self.emit(Instruction::CallFunction {
                            site,
                            name,
                            argc: args.len() as u32,
                        });
                    }
                }
            }
            IrExpr::MethodCall { recv, name, args, .. } => {
                self.expr(recv)?;
                for a in args {
                    self.expr(a)?;
                }
                let argc = args.len() as u32 + 1;
                let site = self.builder.new_site(SiteKind::Method, Rc::clone(name), argc);
                let name = self.builder.name_index(name);
                self.emit(Instruction::CallMethod { site, name, argc });
            }
            IrExpr::MakeClosure { fn_index, captures, fn_name, .. } => {
                for c in captures {
                    let slot = c.outer_slot.ok_or_else(|| {
                        err(format!("unresolved capture {} for {fn_name}", c.name))
                    })?;
                    self.emit(Instruction::LoadLocal(slot));
                }
                self.emit(Instruction::MakeClosure {
                    fn_index: self.fn_offset + fn_index,
                    capture_count: captures.len() as u32,
                });
            }
            IrExpr::TupleLit(items, _) => {
                for item in items {
                    self.expr(item)?;
                }
                self.emit(Instruction::MakeTuple(items.len() as u32));
            }
            IrExpr::ListLit(items, _) => {
                for item in items {
                    self.expr(item)?;
                }
                self.emit(Instruction::MakeList(items.len() as u32));
            }
            IrExpr::Lambda(_) => {
                return Err(err("lambda survived closure lifting"));
            }
        }
        let _ = self.module;
        Ok(())
    }

    /// `and`/`or` lower to jump sequences; both operands pass through the
    /// VM's Bool refinement via JUMP_IF_FALSE.
    fn short_circuit(&mut self, op: Op, lhs: &IrExpr, rhs: &IrExpr) -> Result<(), CompileError> {
        let t = self.builder.const_index(Value::Bool(true));
        let f = self.builder.const_index(Value::Bool(false));
        match op {
            Op::And => {
                self.expr(lhs)?;
                let lhs_false = self.emit_jump_placeholder(true);
                self.expr(rhs)?;
                let rhs_false = self.emit_jump_placeholder(true);
                self.emit(Instruction::LoadConst(t));
                let to_end = self.emit_jump_placeholder(false);
                self.patch_to_here(lhs_false);
                self.patch_to_here(rhs_false);
                self.emit(Instruction::LoadConst(f));
                self.patch_to_here(to_end);
            }
            Op::Or => {
                self.expr(lhs)?;
                let try_rhs = self.emit_jump_placeholder(true);
                self.emit(Instruction::LoadConst(t));
                let to_end = self.emit_jump_placeholder(false);
                self.patch_to_here(try_rhs);
                self.expr(rhs)?;
                let rhs_false = self.emit_jump_placeholder(true);
                self.emit(Instruction::LoadConst(t));
                let to_end2 = self.emit_jump_placeholder(false);
                self.patch_to_here(rhs_false);
                self.emit(Instruction::LoadConst(f));
                self.patch_to_here(to_end);
                self.patch_to_here(to_end2);
            }
            _ => unreachable!(),
        }
        Ok(())
    }
}

/// Compiles lifted, slot-allocated modules into one code image.
pub fn compile(modules: &[IrModule]) -> Result<CodeImage, CompileError> {
    let layout = layout_program(modules);
    let mut builder = ImageBuilder::default();
    let mut functions = Vec::new();
    for (mi, module) in modules.iter().enumerate() {
        for f in &module.functions {
            let mut fc = FnCompiler {
                code: Vec::new(),
                builder: &mut builder,
                module: mi as u32,
                fn_offset: layout.fn_offsets[mi],
                module_map: &layout.module_maps[mi],
            };
            fc.block(&f.body)?;
            fc.emit(Instruction::ReturnNull);
            let code = fc.code;
            if code.len() >= i32::MAX as usize {
                return Err(err(format!("function {} exceeds jump range", f.name)));
            }
            functions.push(CompiledFunction {
                name: Rc::clone(&f.name),
                module: mi as u32,
                params: f.params.len() as u32,
                local_slots: f.local_slots as u32,
                code,
            });
        }
    }
    Ok(CodeImage {
        constants: builder.constants,
        names: builder.names,
        functions,
        entry: layout.entry,
        call_site_count: builder.site_meta.len() as u32,
        site_meta: builder.site_meta,
        structures: layout.structures,
        augmentations: layout.augmentations,
        module_maps: layout.module_maps,
    })
}
