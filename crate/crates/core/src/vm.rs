//! Stack-machine engine. Instruction arrays never change at runtime; all
//! adaptivity lives in the call sites, which persist across runs of the same
//! `Vm` so inline caches stay warm for benchmarking.

use std::rc::Rc;

use crate::bytecode::{CodeImage, Instruction};
use crate::callsite::{CallSite, DispatchPolicy, Guard, Target};
use crate::errors::{arity_mismatch, branch_condition_error, RuntimeError};
use crate::link::resolve_name;
use crate::object::{
    construct_struct, discriminator_of, invoke_method_target, method_lookup, FunctionTarget,
};
use crate::operators::{OpRegistry, Op};
use crate::runtime::{EngineCtx, OutputSink, RuntimeCtx};
use crate::value::{Closure, FnRef, Value};

#[derive(Debug, Clone, Copy)]
pub struct VmConfig {
    pub policy: DispatchPolicy,
    pub max_call_depth: usize,
    pub dump_stats: bool,
}

impl Default for VmConfig {
    fn default() -> Self {
        VmConfig {
            policy: DispatchPolicy::Mono,
            max_call_depth: 100_000,
            dump_stats: false,
        }
    }
}

struct Frame {
    fn_index: u32,
    /// Next instruction to execute (the resume/return address).
    ip: usize,
    locals_base: usize,
}

/// Whether a call instruction pushed a user frame (the interpreter loop must
/// re-activate) or completed inline.
enum Control {
    Pushed,
    Done,
}

/// Runtime error with the VM call-stack trace (function names and the
/// instruction index that faulted).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VmError {
    pub error: RuntimeError,
    pub trace: Vec<(Rc<str>, usize)>,
}

impl std::fmt::Display for VmError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error: {}: {}", self.error.kind(), self.error)?;
        for (name, at) in &self.trace {
            write!(f, "\n  at {name} (instr {at})")?;
        }
        Ok(())
    }
}

pub struct Vm {
    image: Rc<CodeImage>,
    sites: Vec<CallSite>,
    operators: OpRegistry,
    ctx: RuntimeCtx,
    config: VmConfig,
    frames: Vec<Frame>,
    stack: Vec<Value>,
}

impl Vm {
    pub fn new(image: Rc<CodeImage>, config: VmConfig, sink: OutputSink) -> Vm {
        let mut ctx = RuntimeCtx::new(sink);
        for (type_name, method, fn_index) in &image.augmentations {
            ctx.register_augmentation(Rc::clone(type_name), Rc::clone(method), *fn_index);
        }
        let sites = image
            .site_meta
            .iter()
            .enumerate()
            .map(|(id, meta)| {
                CallSite::new(
                    id as u32,
                    meta.kind,
                    Rc::clone(&meta.name),
                    meta.argc,
                    config.policy,
                )
            })
            .collect();
        Vm {
            image,
            sites,
            operators: OpRegistry::new(),
            ctx,
            config,
            frames: Vec::new(),
            stack: Vec::new(),
        }
    }

    pub fn image(&self) -> &CodeImage {
        &self.image
    }

    pub fn runtime_ctx(&self) -> &RuntimeCtx {
        &self.ctx
    }

    /// Runs the image's `main` with the given arguments.
    pub fn run_main(&mut self, args: &[Value]) -> Result<Value, VmError> {
        let entry = self.image.entry.ok_or_else(|| VmError {
            error: RuntimeError::NoSuchMethod("no main function".to_string()),
            trace: Vec::new(),
        })?;
        self.call_function(entry, args)
    }

    /// Calls any function by index; used by the harness and tests.
    pub fn call_function(&mut self, fn_index: u32, args: &[Value]) -> Result<Value, VmError> {
        let base = self.frames.len();
        let result = (|| {
            self.stack.extend_from_slice(args);
            self.push_user_frame(fn_index, args.len())?;
            self.run_until(base)
        })();
        match result {
            Ok(v) => {
                self.ctx.sink.flush();
                Ok(v)
            }
            Err(error) => {
                let trace = self
                    .frames
                    .drain(base..)
                    .rev()
                    .map(|f| {
                        let name = Rc::clone(&self.image.functions[f.fn_index as usize].name);
                        (name, f.ip.saturating_sub(1))
                    })
                    .collect();
                self.stack.clear();
                self.ctx.sink.flush();
                Err(VmError { error, trace })
            }
        }
    }

    /// Stats lines for every executed site, sorted by id (the
    /// `--dump-dispatch-stats` payload).
    pub fn stats_dump(&self) -> String {
        let mut out = String::new();
        for site in &self.sites {
            if site.executed() {
                out.push_str(&site.stats_line());
                out.push('\n');
            }
        }
        out
    }

    pub fn sites(&self) -> &[CallSite] {
        &self.sites
    }

    /// Total fallback invocations (misses) across all sites.
    pub fn total_misses(&self) -> u64 {
        self.sites.iter().map(|s| s.stats().misses).sum()
    }

    fn push_user_frame(&mut self, fn_index: u32, argc: usize) -> Result<(), RuntimeError> {
        let f = &self.image.functions[fn_index as usize];
        if argc != f.params as usize {
            return Err(arity_mismatch(&f.name, f.params as usize, argc));
        }
        if self.frames.len() >= self.config.max_call_depth {
            return Err(RuntimeError::StackOverflow);
        }
        let locals_base = self.stack.len() - argc;
        for _ in argc..f.local_slots as usize {
            self.stack.push(Value::Null);
        }
        self.frames.push(Frame {
            fn_index,
            ip: 0,
            locals_base,
        });
        Ok(())
    }

    /// Executes until the frame stack shrinks back to `base`, returning the
    /// value the returning frame produced.
    ///
    /// The outer loop activates one frame; the inner loop keeps ip and the
    /// locals base in registers and only writes ip back when a user-frame
    /// push or pop transfers control.
    fn run_until(&mut self, base: usize) -> Result<Value, RuntimeError> {
        let image = Rc::clone(&self.image);
        'activation: loop {
            let frame = self.frames.last().expect("active frame");
            let fn_index = frame.fn_index as usize;
            let locals_base = frame.locals_base;
            let mut ip = frame.ip;
            let code: &[Instruction] = &image.functions[fn_index].code;
            loop {
                let instr = code[ip];
                ip += 1;
                match instr {
                    Instruction::LoadConst(k) => {
                        self.stack.push(image.constants[k as usize].clone());
                    }
                    Instruction::LoadLocal(s) => {
                        self.stack.push(self.stack[locals_base + s as usize].clone());
                    }
                    Instruction::StoreLocal(s) => {
                        let v = self.stack.pop().expect("store operand");
                        self.stack[locals_base + s as usize] = v;
                    }
                    Instruction::Pop => {
                        self.stack.pop();
                    }
                    Instruction::Dup => {
                        let v = self.stack.last().expect("dup operand").clone();
                        self.stack.push(v);
                    }
                    Instruction::Jump(t) => {
                        ip = t as usize;
                    }
                    Instruction::JumpIfFalse(t) => {
                        let v = self.stack.pop().expect("branch condition");
                        if !self.check_condition(&v, ip)? {
                            ip = t as usize;
                        }
                    }
                    Instruction::Return => {
                        let v = self.stack.pop().expect("return value");
                        self.stack.truncate(locals_base);
                        self.frames.pop();
                        if self.frames.len() == base {
                            return Ok(v);
                        }
                        self.stack.push(v);
                        continue 'activation;
                    }
                    Instruction::ReturnNull => {
                        self.stack.truncate(locals_base);
                        self.frames.pop();
                        if self.frames.len() == base {
                            return Ok(Value::Null);
                        }
                        self.stack.push(Value::Null);
                        continue 'activation;
                    }
                    Instruction::CallOperator { site, op } => {
                        if let Err(e) = self.call_operator(site, op) {
                            self.frames.last_mut().unwrap().ip = ip;
                            return Err(e);
                        }
                    }
                    Instruction::CallFunction { site, name, argc } => {
                        match self.call_named(site, name, argc as usize, fn_index) {
                            Ok(Control::Pushed) => {
                                self.write_back_ip(base, ip);
                                continue 'activation;
                            }
                            Ok(Control::Done) => {}
                            Err(e) => {
                                self.frames.last_mut().unwrap().ip = ip;
                                return Err(e);
                            }
                        }
                    }
                    Instruction::CallMethod { site, name, argc } => {
                        self.frames.last_mut().unwrap().ip = ip;
                        self.call_method(site, name, argc as usize)?;
                    }
                    Instruction::CallClosure { argc } => {
                        self.frames.last_mut().unwrap().ip = ip;
                        match self.call_closure(argc as usize) {
                            Ok(Control::Pushed) => continue 'activation,
                            Ok(Control::Done) => {}
                            Err(e) => return Err(e),
                        }
                    }
                    Instruction::MakeClosure {
                        fn_index,
                        capture_count,
                    } => {
                        let at = self.stack.len() - capture_count as usize;
                        let captures: Box<[Value]> = self.stack.drain(at..).collect();
                        self.stack.push(Value::Closure(Rc::new(Closure {
                            fn_index,
                            captures,
                        })));
                    }
                    Instruction::MakeTuple(n) => {
                        let at = self.stack.len() - n as usize;
                        let items: Vec<Value> = self.stack.drain(at..).collect();
                        self.stack.push(Value::Tuple(Rc::from(items)));
                    }
                    Instruction::MakeList(n) => {
                        let at = self.stack.len() - n as usize;
                        let items: Vec<Value> = self.stack.drain(at..).collect();
                        self.stack
                            .push(Value::List(Rc::new(std::cell::RefCell::new(items))));
                    }
                }
            }
        }
    }

    /// Records the faulting/return address in the caller frame when control
    /// transfers to a fresh frame.
    #[inline]
    fn write_back_ip(&mut self, base: usize, ip: usize) {
        // The callee frame is on top; the caller sits directly below it.
        let caller = self.frames.len() - 2;
        debug_assert!(caller >= base);
        self.frames[caller].ip = ip;
    }

    #[inline]
    fn check_condition(&mut self, v: &Value, at: usize) -> Result<bool, RuntimeError> {
        match truthiness_check(v) {
            Ok(b) => Ok(b),
            Err(e) => {
                self.frames.last_mut().unwrap().ip = at;
                Err(e)
            }
        }
    }

    #[inline]
    fn call_operator(&mut self, site: u32, op: Op) -> Result<(), RuntimeError> {
        if op.is_unary() {
            return self.call_operator_unary(site, op);
        }
        let at = self.stack.len() - 2;
        let (ka, kb) = (self.stack[at].kind(), self.stack[at + 1].kind());
        let site = &mut self.sites[site as usize];
        let target = match site.probe_binary(ka, kb) {
            Some(f) => f,
            None => {
                // Fallback: find a target for the observed kinds in the
                // operator registry and overwrite the chain per policy.
                let f = self.operators.binary(op, ka, kb).ok_or_else(|| {
                    crate::errors::type_mismatch_binary(
                        op.symbol(),
                        &self.stack[at].type_name(),
                        &self.stack[at + 1].type_name(),
                    )
                })?;
                site.relink(Guard::Operands(ka, kb), Target::Binary(f));
                f
            }
        };
        let result = target(&self.stack[at], &self.stack[at + 1])?;
        self.stack.truncate(at);
        self.stack.push(result);
        Ok(())
    }

    #[inline(never)]
    fn call_operator_unary(&mut self, site: u32, op: Op) -> Result<(), RuntimeError> {
        let at = self.stack.len() - 1;
        let args = &self.stack[at..];
        let site = &mut self.sites[site as usize];
        let target = match site.probe(args) {
            Some(t) => t,
            None => {
                let k = args[0].kind();
                let t = self.operators.unary(op, k).ok_or_else(|| {
                    crate::errors::type_mismatch_unary(op.symbol(), &args[0].type_name())
                })?;
                let target = Target::Unary(t);
                site.relink(Guard::Operand(k), target.clone());
                target
            }
        };
        let result = match target {
            Target::Unary(f) => f(&self.stack[at])?,
            _ => unreachable!("unary site resolved a non-unary target"),
        };
        self.stack.truncate(at);
        self.stack.push(result);
        Ok(())
    }

    #[inline(never)]
    fn call_named(
        &mut self,
        site: u32,
        name: u32,
        argc: usize,
        caller_fn: usize,
    ) -> Result<Control, RuntimeError> {
        let at = self.stack.len() - argc;
        let site_ref = &mut self.sites[site as usize];
        let target = match site_ref.probe(&self.stack[at..]) {
            Some(t) => t,
            None => {
                let name = &self.image.names[name as usize];
                let module = self.image.functions[caller_fn].module;
                let resolved = resolve_name(&self.image.module_maps, module, name)
                    .ok_or_else(|| {
                        RuntimeError::NoSuchMethod(format!("undefined function: {name}"))
                    })?;
                let target = Target::Function(resolved);
                site_ref.relink(Guard::Linked, target.clone());
                target
            }
        };
        let Target::Function(ft) = target else {
            unreachable!("function site resolved a non-function target")
        };
        match ft {
            FunctionTarget::User(fn_index) => {
                self.push_user_frame(fn_index, argc)?;
                Ok(Control::Pushed)
            }
            FunctionTarget::Builtin(b) => {
                let args: Vec<Value> = self.stack.drain(at..).collect();
                let result = crate::builtins::invoke_builtin_fn(self, b, &args)?;
                self.stack.push(result);
                Ok(Control::Done)
            }
            FunctionTarget::Struct(def) => {
                let args: Vec<Value> = self.stack.drain(at..).collect();
                let result = construct_struct(&def, &args)?;
                self.stack.push(result);
                Ok(Control::Done)
            }
        }
    }

    #[inline(never)]
    fn call_method(&mut self, site: u32, name: u32, argc: usize) -> Result<(), RuntimeError> {
        let at = self.stack.len() - argc;
        let site_ref = &mut self.sites[site as usize];
        let target = match site_ref.probe(&self.stack[at..]) {
            Some(t) => t,
            None => {
                let name = &self.image.names[name as usize];
                let recv = &self.stack[at];
                let resolved = method_lookup(&self.ctx, recv, name, argc - 1)?;
                debug_assert!(resolved.guard == discriminator_of(recv));
                let target = Target::Method(resolved.target);
                site_ref.relink(Guard::Receiver(resolved.guard), target.clone());
                target
            }
        };
        let Target::Method(mt) = target else {
            unreachable!("method site resolved a non-method target")
        };
        let argv: Vec<Value> = self.stack.drain(at..).collect();
        let result = invoke_method_target(&mut *self, &mt, &argv[0], &argv[1..])?;
        self.stack.push(result);
        Ok(())
    }

    /// CALL_CLOSURE: callee value sits under `argc` arguments. Closures get
    /// their captures spliced in as leading locals.
    #[inline(never)]
    fn call_closure(&mut self, argc: usize) -> Result<Control, RuntimeError> {
        let callee_at = self.stack.len() - argc - 1;
        let callee = self.stack.remove(callee_at);
        match callee {
            Value::Closure(c) => {
                let insert_at = self.stack.len() - argc;
                for (i, cap) in c.captures.iter().enumerate() {
                    self.stack.insert(insert_at + i, cap.clone());
                }
                self.push_user_frame(c.fn_index, c.captures.len() + argc)?;
                Ok(Control::Pushed)
            }
            Value::FunctionRef(FnRef::User(fn_index)) => {
                self.push_user_frame(fn_index, argc)?;
                Ok(Control::Pushed)
            }
            Value::FunctionRef(FnRef::Builtin(b)) => {
                let at = self.stack.len() - argc;
                let args: Vec<Value> = self.stack.drain(at..).collect();
                let result = crate::builtins::invoke_builtin_fn(self, b, &args)?;
                self.stack.push(result);
                Ok(Control::Done)
            }
            other => Err(RuntimeError::TypeMismatch(format!(
                "{} is not callable",
                other.type_name()
            ))),
        }
    }
}

impl EngineCtx for Vm {
    /// Re-entrant call used by builtins (map/filter/reduce, closure-valued
    /// properties, augmentations): runs a nested interpreter loop until the
    /// callee's frame returns.
    fn call_value(&mut self, callee: &Value, args: &[Value]) -> Result<Value, RuntimeError> {
        match callee {
            Value::Closure(c) => {
                let base = self.frames.len();
                self.stack.extend_from_slice(&c.captures);
                self.stack.extend_from_slice(args);
                self.push_user_frame(c.fn_index, c.captures.len() + args.len())?;
                self.run_until(base)
            }
            Value::FunctionRef(FnRef::User(fn_index)) => {
                let base = self.frames.len();
                self.stack.extend_from_slice(args);
                self.push_user_frame(*fn_index, args.len())?;
                self.run_until(base)
            }
            Value::FunctionRef(FnRef::Builtin(b)) => {
                crate::builtins::invoke_builtin_fn(self, *b, args)
            }
            other => Err(RuntimeError::TypeMismatch(format!(
                "{} is not callable",
                other.type_name()
            ))),
        }
    }

    fn runtime(&self) -> &RuntimeCtx {
        &self.ctx
    }
}

/// Branch-condition refinement: only Bool may steer control flow.
pub fn truthiness_check(v: &Value) -> Result<bool, RuntimeError> {
    match v {
        Value::Bool(b) => Ok(*b),
        other => Err(branch_condition_error(other.kind().name())),
    }
}
