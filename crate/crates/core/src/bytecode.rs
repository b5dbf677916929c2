//! The untyped stack instruction set, compiled code images, the
//! disassembler, and the stack-discipline verifier used by tests.
//!
//! All stack operands are dynamic values; no instruction encodes a value
//! kind except LOAD_CONST's pool entry. Instruction arrays never change at
//! runtime — all dynamism lives in the call sites.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::rc::Rc;

use crate::callsite::SiteKind;
use crate::object::FunctionTarget;
use crate::operators::Op;
use crate::value::{StructDef, Value};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Instruction {
    LoadConst(u32),
    LoadLocal(u32),
    StoreLocal(u32),
    Pop,
    Dup,
    Jump(u32),
    JumpIfFalse(u32),
    Return,
    ReturnNull,
    /// `argc` stack arguments; the name operand indexes the image name table.
    CallFunction { site: u32, name: u32, argc: u32 },
    /// `argc` includes the receiver at stack position argc-deep.
    CallMethod { site: u32, name: u32, argc: u32 },
    CallOperator { site: u32, op: Op },
    /// Callee value below `argc` arguments.
    CallClosure { argc: u32 },
    /// Pops `capture_count` captured values.
    MakeClosure { fn_index: u32, capture_count: u32 },
    MakeTuple(u32),
    MakeList(u32),
}

#[derive(Debug, Clone)]
pub struct CompiledFunction {
    pub name: Rc<str>,
    pub module: u32,
    pub params: u32,
    pub local_slots: u32,
    pub code: Vec<Instruction>,
}

#[derive(Debug, Clone)]
pub struct SiteMeta {
    pub kind: SiteKind,
    pub name: Rc<str>,
    pub argc: u32,
}

/// A compiled program. Immutable after construction and shareable; per-run
/// call-site state lives in the VM.
pub struct CodeImage {
    pub constants: Vec<Value>,
    pub names: Vec<Rc<str>>,
    pub functions: Vec<CompiledFunction>,
    pub entry: Option<u32>,
    pub call_site_count: u32,
    pub site_meta: Vec<SiteMeta>,
    pub structures: Vec<Rc<StructDef>>,
    /// (type name, method name, fn index) in registration order.
    pub augmentations: Vec<(Rc<str>, Rc<str>, u32)>,
    /// Per-module runtime name-resolution maps (the dynamic-linking tables
    /// the call-site fallback consults).
    pub module_maps: Vec<HashMap<Rc<str>, FunctionTarget>>,
}

fn const_label(v: &Value) -> String {
    match v {
        Value::Int(n) => format!("Int {n}"),
        Value::Long(n) => format!("Long {n}"),
        Value::Double(d) => format!("Double {d}"),
        Value::Bool(b) => format!("Bool {b}"),
        Value::Str(s) => format!("Str {s:?}"),
        Value::Null => "Null".to_string(),
        Value::FunctionRef(_) => "Fn".to_string(),
        _ => "Const".to_string(),
    }
}

impl CodeImage {
    /// One instruction per line, `<idx>: <OPCODE> <operands>`; functions are
    /// separated by `== <name>/<argc> locals=<n>` headers. Stable across
    /// runs; golden tests pin it.
    pub fn disassemble(&self) -> String {
        let mut out = String::new();
        for f in &self.functions {
            let _ = writeln!(out, "== {}/{} locals={}", f.name, f.params, f.local_slots);
            for (i, instr) in f.code.iter().enumerate() {
                let _ = writeln!(out, "{i}: {}", self.render_instruction(instr));
            }
        }
        out
    }

    fn render_instruction(&self, instr: &Instruction) -> String {
        match instr {
            Instruction::LoadConst(k) => {
                format!("LOAD_CONST {k} ({})", const_label(&self.constants[*k as usize]))
            }
            Instruction::LoadLocal(s) => format!("LOAD_LOCAL {s}"),
            Instruction::StoreLocal(s) => format!("STORE_LOCAL {s}"),
            Instruction::Pop => "POP".to_string(),
            Instruction::Dup => "DUP".to_string(),
            Instruction::Jump(t) => format!("JUMP {t}"),
            Instruction::JumpIfFalse(t) => format!("JUMP_IF_FALSE {t}"),
            Instruction::Return => "RETURN".to_string(),
            Instruction::ReturnNull => "RETURN_NULL".to_string(),
            Instruction::CallFunction { site, name, argc } => format!(
                "CALL_FUNCTION site={site} name={} argc={argc}",
                self.names[*name as usize]
            ),
            Instruction::CallMethod { site, name, argc } => format!(
                "CALL_METHOD site={site} name={} argc={argc}",
                self.names[*name as usize]
            ),
            Instruction::CallOperator { site, op } => {
                format!("CALL_OPERATOR site={site} op={}", op.name())
            }
            Instruction::CallClosure { argc } => format!("CALL_CLOSURE argc={argc}"),
            Instruction::MakeClosure {
                fn_index,
                capture_count,
            } => format!(
                "MAKE_CLOSURE fn={} capc={capture_count}",
                self.functions[*fn_index as usize].name
            ),
            Instruction::MakeTuple(n) => format!("MAKE_TUPLE {n}"),
            Instruction::MakeList(n) => format!("MAKE_LIST {n}"),
        }
    }

    /// Checksum over every function's instruction array; the VM must leave it
    /// unchanged ("the generated bytecode remains stable at runtime").
    pub fn code_checksum(&self) -> u64 {
        use std::hash::{Hash, Hasher};
        let mut h = std::collections::hash_map::DefaultHasher::new();
        for f in &self.functions {
            f.name.hash(&mut h);
            for instr in &f.code {
                format!("{instr:?}").hash(&mut h);
            }
        }
        h.finish()
    }
}

/// Net stack effect of one instruction (pops negative, pushes positive).
fn stack_effect(instr: &Instruction) -> i64 {
    match instr {
        Instruction::LoadConst(_) | Instruction::LoadLocal(_) | Instruction::Dup => 1,
        Instruction::StoreLocal(_) | Instruction::Pop | Instruction::JumpIfFalse(_) => -1,
        Instruction::Jump(_) => 0,
        Instruction::Return | Instruction::ReturnNull => 0,
        Instruction::CallFunction { argc, .. } | Instruction::CallMethod { argc, .. } => {
            1 - i64::from(*argc)
        }
        Instruction::CallOperator { op, .. } => {
            if op.is_unary() {
                0
            } else {
                -1
            }
        }
        Instruction::CallClosure { argc } => -i64::from(*argc),
        Instruction::MakeClosure { capture_count, .. } => 1 - i64::from(*capture_count),
        Instruction::MakeTuple(n) | Instruction::MakeList(n) => 1 - i64::from(*n),
    }
}

/// Abstract interpretation of stack depths: every reachable instruction must
/// have one consistent entry depth, RETURN must see exactly depth 1, and
/// RETURN_NULL depth 0. Test-suite verifier, not a runtime check.
pub fn verify_stack_discipline(image: &CodeImage) -> Result<(), String> {
    for f in &image.functions {
        verify_function(f)?;
    }
    Ok(())
}

fn verify_function(f: &CompiledFunction) -> Result<(), String> {
    let code = &f.code;
    if code.is_empty() {
        return Err(format!("{}: empty code", f.name));
    }
    let mut depth_at: Vec<Option<i64>> = vec![None; code.len()];
    let mut work = vec![(0usize, 0i64)];
    while let Some((at, depth)) = work.pop() {
        if at >= code.len() {
            return Err(format!("{}: control falls off the end", f.name));
        }
        match depth_at[at] {
            Some(d) if d == depth => continue,
            Some(d) => {
                return Err(format!(
                    "{}: inconsistent depth at {at}: {d} vs {depth}",
                    f.name
                ))
            }
            None => depth_at[at] = Some(depth),
        }
        let instr = &code[at];
        match instr {
            Instruction::Return => {
                if depth != 1 {
                    return Err(format!("{}: RETURN at {at} with depth {depth}", f.name));
                }
            }
            Instruction::ReturnNull => {
                if depth != 0 {
                    return Err(format!(
                        "{}: RETURN_NULL at {at} with depth {depth}",
                        f.name
                    ));
                }
            }
            Instruction::Jump(t) => work.push((*t as usize, depth)),
            Instruction::JumpIfFalse(t) => {
                let next = depth + stack_effect(instr);
                if next < 0 {
                    return Err(format!("{}: stack underflow at {at}", f.name));
                }
                work.push((*t as usize, next));
                work.push((at + 1, next));
            }
            _ => {
                let next = depth + stack_effect(instr);
                if next < 0 {
                    return Err(format!("{}: stack underflow at {at}", f.name));
                }
                work.push((at + 1, next));
            }
        }
    }
    Ok(())
}
