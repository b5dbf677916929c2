//! Self-specializing tree interpreter.
//!
//! Execution nodes carry specialization state and an execution counter.
//! Binary-operator nodes move monotonically through Uninitialized ->
//! Specialized(kinds) -> Generic, never backward; while specialized they
//! produce machine-level numbers without constructing boxed values. Call and
//! method nodes carry small inline caches keyed by callee identity, shape id,
//! structure type, or kind, going megamorphic past the configured depth.
//!
//! The engine accepts unlifted IR (lambdas execute in place, captured by
//! value at creation) and lifted IR equally: either way a lambda becomes an
//! anonymous function whose captures occupy the leading frame slots.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::fmt::Write as _;
use std::rc::Rc;

use crate::builtins::{invoke_builtin_fn, BuiltinFn};
use crate::errors::{arity_mismatch, branch_condition_error, RuntimeError};
use crate::ir::{lambda_free_names, IrBlock, IrExpr, IrModule, IrStmt};
use crate::lexer::Pos;
use crate::link::{layout_program, resolve_name};
use crate::object::{
    construct_struct, discriminator_of, invoke_method_target, method_lookup, Discriminator,
    FunctionTarget, MethodTarget,
};
use crate::operators::{apply_binary, apply_unary, Op};
use crate::runtime::{EngineCtx, OutputSink, RuntimeCtx};
use crate::value::{render, Closure, FnRef, Kind, StructDef, Value};

#[derive(Debug, Clone, Copy)]
pub struct AstConfig {
    /// When false, binary nodes are pinned Generic and dispatch nodes start
    /// megamorphic: the uncached, always-boxing baseline.
    pub specialize: bool,
    /// Dispatch-node cache depth D.
    pub dispatch_depth: usize,
    /// Count boxed numeric value constructions.
    pub instrument_boxing: bool,
    pub max_call_depth: usize,
}

impl Default for AstConfig {
    fn default() -> Self {
        AstConfig {
            specialize: true,
            dispatch_depth: 3,
            instrument_boxing: false,
            max_call_depth: 100_000,
        }
    }
}

/// Machine-level number travelling outside boxed values.
#[derive(Debug, Clone, Copy)]
pub enum Prim {
    I(i32),
    L(i64),
    D(f64),
}

impl Prim {
    fn kind(self) -> Kind {
        match self {
            Prim::I(_) => Kind::Int,
            Prim::L(_) => Kind::Long,
            Prim::D(_) => Kind::Double,
        }
    }

    fn to_value(self) -> Value {
        match self {
            Prim::I(n) => Value::Int(n),
            Prim::L(n) => Value::Long(n),
            Prim::D(d) => Value::Double(d),
        }
    }
}

/// Evaluation result: either an unboxed machine number (specialized fast
/// path) or a boxed value.
#[derive(Debug, Clone)]
pub enum EvalOut {
    Prim(Prim),
    Val(Value),
}

impl EvalOut {
    fn kind(&self) -> Kind {
        match self {
            EvalOut::Prim(p) => p.kind(),
            EvalOut::Val(v) => v.kind(),
        }
    }
}

/// Specialization lattice of a binary-operator node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinState {
    Uninit,
    Spec(Kind, Kind),
    Generic,
}

pub fn state_rank(s: BinState) -> u8 {
    match s {
        BinState::Uninit => 0,
        BinState::Spec(..) => 1,
        BinState::Generic => 2,
    }
}

/// Specialization chosen for a first observation: numeric pairs and
/// string-concatenation `+` specialize, everything else goes Generic.
pub fn spec_for(op: Op, kl: Kind, kr: Kind) -> BinState {
    let concat = op == Op::Plus && (kl == Kind::Str || kr == Kind::Str);
    if (kl.is_numeric() && kr.is_numeric()) || concat {
        BinState::Spec(kl, kr)
    } else {
        BinState::Generic
    }
}

/// The monotone transition function: Uninitialized specializes (or gives
/// up), a specialized node re-observing its kinds stays put and anything
/// else generalizes, Generic absorbs everything.
pub fn next_state(current: BinState, op: Op, kl: Kind, kr: Kind) -> BinState {
    let next = match current {
        BinState::Generic => BinState::Generic,
        BinState::Uninit => spec_for(op, kl, kr),
        BinState::Spec(a, b) => {
            if (a, b) == (kl, kr) {
                current
            } else {
                BinState::Generic
            }
        }
    };
    debug_assert!(
        state_rank(next) >= state_rank(current),
        "specialization lattice went backward: {current:?} -> {next:?}"
    );
    next
}

/// Inline-cache key of a dispatch node: receiver discriminator for methods,
/// callee identity for calls.
#[derive(Debug, Clone, PartialEq)]
enum CacheKey {
    Recv(Discriminator),
    Callee(FnRef),
    /// Named calls resolve statically per node; one entry suffices.
    Static,
}

#[derive(Clone)]
enum CachedTarget {
    User(u32),
    Builtin(BuiltinFn),
    StructCtor(Rc<StructDef>),
    Method(MethodTarget),
}

struct DispatchCache {
    entries: Vec<(CacheKey, CachedTarget)>,
    mega: bool,
}

impl DispatchCache {
    fn new(mega_from_start: bool) -> RefCell<DispatchCache> {
        RefCell::new(DispatchCache {
            entries: Vec::new(),
            mega: mega_from_start,
        })
    }
}

enum Lit {
    I(i32),
    L(i64),
    D(f64),
    Str(Rc<str>),
    Bool(bool),
    Null,
}

enum NodeKind {
    Block(Vec<Node>),
    If {
        cond: Box<Node>,
        then: Box<Node>,
        alt: Option<Box<Node>>,
    },
    While {
        cond: Box<Node>,
        body: Box<Node>,
    },
    Return(Option<Box<Node>>),
    LocalWrite {
        slot: usize,
        value: Box<Node>,
    },
    Literal(Lit),
    LocalRead {
        slot: usize,
    },
    FunctionRefRead {
        fn_ref: FnRef,
    },
    Binary {
        op: Op,
        state: Cell<BinState>,
        lhs: Box<Node>,
        rhs: Box<Node>,
    },
    ShortCircuit {
        op: Op,
        lhs: Box<Node>,
        rhs: Box<Node>,
    },
    Unary {
        op: Op,
        operand: Box<Node>,
    },
    CallNamed {
        name: Rc<str>,
        module: u32,
        args: Vec<Node>,
        cache: RefCell<DispatchCache>,
    },
    CallLocal {
        slot: usize,
        name: Rc<str>,
        args: Vec<Node>,
        cache: RefCell<DispatchCache>,
    },
    MethodCall {
        name: Rc<str>,
        recv: Box<Node>,
        args: Vec<Node>,
        cache: RefCell<DispatchCache>,
    },
    ClosureMake {
        fn_index: u32,
        capture_slots: Vec<usize>,
    },
    TupleLit(Vec<Node>),
    ListLit(Vec<Node>),
}

pub struct Node {
    kind: NodeKind,
    pos: Pos,
    count: Cell<u64>,
}

impl Node {
    fn new(kind: NodeKind, pos: Pos) -> Node {
        Node {
            kind,
            pos,
            count: Cell::new(0),
        }
    }

    fn bump(&self) {
        self.count.set(self.count.get() + 1);
    }

    pub fn exec_count(&self) -> u64 {
        self.count.get()
    }
}

struct ExecFunction {
    name: Rc<str>,
    param_total: usize,
    declared_params: usize,
    slots: usize,
    body: Node,
    pos: Pos,
}

/// Frame slots: unboxed primitive slots or boxed values.
enum Slot {
    Val(Value),
    I(i32),
    L(i64),
    D(f64),
}

struct FrameSlots {
    slots: Vec<Slot>,
}

enum Flow {
    Normal,
    Return(EvalOut),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AstError {
    pub error: RuntimeError,
    pub trace: Vec<(Rc<str>, Pos)>,
}

impl std::fmt::Display for AstError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error: {}: {}", self.error.kind(), self.error)?;
        for (name, pos) in &self.trace {
            write!(f, "\n  at {name} ({pos})")?;
        }
        Ok(())
    }
}

pub struct AstEngine {
    functions: Vec<ExecFunction>,
    module_maps: Vec<HashMap<Rc<str>, FunctionTarget>>,
    entry: Option<u32>,
    ctx: RuntimeCtx,
    config: AstConfig,
    boxes: Cell<u64>,
    depth: Cell<usize>,
    error_trace: RefCell<Vec<(Rc<str>, Pos)>>,
}

impl AstEngine {
    /// Builds the executable tree. Works on unlifted IR (lambdas in place)
    /// and on lifted IR (MakeClosure of synthetic functions) alike.
    pub fn new(modules: &[IrModule], config: AstConfig, sink: OutputSink) -> AstEngine {
        let layout = layout_program(modules);
        let mut ctx = RuntimeCtx::new(sink);
        for (type_name, method, fn_index) in &layout.augmentations {
            ctx.register_augmentation(Rc::clone(type_name), Rc::clone(method), *fn_index);
        }

        let mut builder = TreeBuilder {
            functions: Vec::new(),
            fn_offsets: layout.fn_offsets.clone(),
            module_maps: &layout.module_maps,
            specialize: config.specialize,
        };
        // Reserve entries for named functions so lambda entries come after.
        for m in modules {
            for f in &m.functions {
                builder.functions.push(ExecFunction {
                    name: Rc::clone(&f.name),
                    param_total: f.params.len(),
                    declared_params: f.params.len() - f.capture_count,
                    slots: 0,
                    body: Node::new(NodeKind::Block(Vec::new()), f.pos),
                    pos: f.pos,
                });
            }
        }
        for (mi, m) in modules.iter().enumerate() {
            for (fi, f) in m.functions.iter().enumerate() {
                let index = (layout.fn_offsets[mi] + fi as u32) as usize;
                let mut scope = BuildScope::new(&f.params);
                let body = builder.build_block(&f.body, &mut scope, mi as u32);
                builder.functions[index].slots = scope.next_slot;
                builder.functions[index].body = body;
            }
        }
        let functions = builder.functions;

        AstEngine {
            functions,
            module_maps: layout.module_maps,
            entry: layout.entry,
            ctx,
            config,
            boxes: Cell::new(0),
            depth: Cell::new(0),
            error_trace: RefCell::new(Vec::new()),
        }
    }

    pub fn entry(&self) -> Option<u32> {
        self.entry
    }

    pub fn function_named(&self, name: &str) -> Option<u32> {
        self.functions
            .iter()
            .position(|f| &*f.name == name)
            .map(|i| i as u32)
    }

    pub fn runtime_ctx(&self) -> &RuntimeCtx {
        &self.ctx
    }

    /// Boxed numeric allocations since the last reset (instrumented runs).
    pub fn boxed_allocations(&self) -> u64 {
        self.boxes.get()
    }

    pub fn reset_boxed_allocations(&self) {
        self.boxes.set(0);
    }

    pub fn run_main(&self, args: &[Value]) -> Result<Value, AstError> {
        let entry = self.entry.ok_or_else(|| AstError {
            error: RuntimeError::NoSuchMethod("no main function".to_string()),
            trace: Vec::new(),
        })?;
        self.call_by_index(entry, args)
    }

    pub fn call_by_index(&self, fn_index: u32, args: &[Value]) -> Result<Value, AstError> {
        self.error_trace.borrow_mut().clear();
        let outs: Vec<EvalOut> = args.iter().cloned().map(EvalOut::Val).collect();
        let result = self.call_user(fn_index, &[], outs);
        self.ctx.sink.flush();
        match result {
            Ok(out) => Ok(self.out_to_value(out)),
            Err(error) => Err(AstError {
                error,
                trace: self.error_trace.borrow().clone(),
            }),
        }
    }

    #[inline]
    fn count_box(&self) {
        if self.config.instrument_boxing {
            self.boxes.set(self.boxes.get() + 1);
        }
    }

    #[inline]
    fn count_if_numeric(&self, v: &Value) {
        if self.config.instrument_boxing && v.kind().is_numeric() {
            self.boxes.set(self.boxes.get() + 1);
        }
    }

    /// The single funnel where machine numbers become boxed values.
    #[inline]
    fn out_to_value(&self, out: EvalOut) -> Value {
        match out {
            EvalOut::Val(v) => v,
            EvalOut::Prim(p) => {
                self.count_box();
                p.to_value()
            }
        }
    }

    fn call_user(
        &self,
        fn_index: u32,
        captures: &[Value],
        args: Vec<EvalOut>,
    ) -> Result<EvalOut, RuntimeError> {
        let f = &self.functions[fn_index as usize];
        if captures.len() + args.len() != f.param_total {
            return Err(arity_mismatch(&f.name, f.declared_params, args.len()));
        }
        if self.depth.get() >= self.config.max_call_depth {
            return Err(RuntimeError::StackOverflow);
        }
        self.depth.set(self.depth.get() + 1);
        let mut slots = Vec::with_capacity(f.slots);
        for c in captures {
            slots.push(Slot::Val(c.clone()));
        }
        for a in args {
            slots.push(self.out_to_slot(a));
        }
        while slots.len() < f.slots {
            slots.push(Slot::Val(Value::Null));
        }
        let mut frame = FrameSlots { slots };
        let result = self.exec_stmt(&f.body, &mut frame);
        self.depth.set(self.depth.get() - 1);
        match result {
            Ok(Flow::Return(out)) => Ok(out),
            Ok(Flow::Normal) => Ok(EvalOut::Val(Value::Null)),
            Err(e) => {
                // Build the stack trace while unwinding; free on success.
                self.error_trace.borrow_mut().push((Rc::clone(&f.name), f.pos));
                Err(e)
            }
        }
    }

    #[inline]
    fn out_to_slot(&self, out: EvalOut) -> Slot {
        if self.config.specialize {
            match out {
                EvalOut::Prim(Prim::I(n)) => Slot::I(n),
                EvalOut::Prim(Prim::L(n)) => Slot::L(n),
                EvalOut::Prim(Prim::D(d)) => Slot::D(d),
                EvalOut::Val(v) => Slot::Val(v),
            }
        } else {
            Slot::Val(self.out_to_value(out))
        }
    }

    fn exec_stmt(&self, node: &Node, frame: &mut FrameSlots) -> Result<Flow, RuntimeError> {
        node.bump();
        match &node.kind {
            NodeKind::Block(stmts) => {
                for stmt in stmts {
                    if let Flow::Return(out) = self.exec_stmt(stmt, frame)? {
                        return Ok(Flow::Return(out));
                    }
                }
                Ok(Flow::Normal)
            }
            NodeKind::If { cond, then, alt } => {
                if self.eval_condition(cond, frame)? {
                    self.exec_stmt(then, frame)
                } else if let Some(alt) = alt {
                    self.exec_stmt(alt, frame)
                } else {
                    Ok(Flow::Normal)
                }
            }
            NodeKind::While { cond, body } => {
                while self.eval_condition(cond, frame)? {
                    if let Flow::Return(out) = self.exec_stmt(body, frame)? {
                        return Ok(Flow::Return(out));
                    }
                }
                Ok(Flow::Normal)
            }
            NodeKind::Return(value) => {
                let out = match value {
                    Some(v) => self.eval(v, frame)?,
                    None => EvalOut::Val(Value::Null),
                };
                Ok(Flow::Return(out))
            }
            NodeKind::LocalWrite { slot, value } => {
                let out = self.eval(value, frame)?;
                frame.slots[*slot] = self.out_to_slot(out);
                Ok(Flow::Normal)
            }
            _ => {
                // Expression statement: evaluate and discard. The node has
                // already counted itself; route through eval_inner so it is
                // not double-counted.
                self.eval_inner(node, frame)?;
                Ok(Flow::Normal)
            }
        }
    }

    fn eval_condition(&self, node: &Node, frame: &mut FrameSlots) -> Result<bool, RuntimeError> {
        match self.eval(node, frame)? {
            EvalOut::Val(Value::Bool(b)) => Ok(b),
            other => Err(branch_condition_error(other.kind().name())),
        }
    }

    #[inline]
    fn eval(&self, node: &Node, frame: &mut FrameSlots) -> Result<EvalOut, RuntimeError> {
        node.bump();
        self.eval_inner(node, frame)
    }

    fn eval_inner(&self, node: &Node, frame: &mut FrameSlots) -> Result<EvalOut, RuntimeError> {
        match &node.kind {
            NodeKind::Literal(lit) => Ok(self.eval_literal(lit)),
            NodeKind::LocalRead { slot } => Ok(match &frame.slots[*slot] {
                Slot::I(n) => EvalOut::Prim(Prim::I(*n)),
                Slot::L(n) => EvalOut::Prim(Prim::L(*n)),
                Slot::D(d) => EvalOut::Prim(Prim::D(*d)),
                Slot::Val(v) => EvalOut::Val(v.clone()),
            }),
            NodeKind::FunctionRefRead { fn_ref } => Ok(EvalOut::Val(Value::FunctionRef(*fn_ref))),
            NodeKind::Binary { op, state, lhs, rhs } => {
                let lo = self.eval(lhs, frame)?;
                let ro = self.eval(rhs, frame)?;
                self.eval_binary(*op, state, lo, ro)
            }
            NodeKind::ShortCircuit { op, lhs, rhs } => {
                let l = match self.eval(lhs, frame)? {
                    EvalOut::Val(Value::Bool(b)) => b,
                    other => return Err(branch_condition_error(other.kind().name())),
                };
                let result = match op {
                    Op::And if !l => false,
                    Op::Or if l => true,
                    _ => match self.eval(rhs, frame)? {
                        EvalOut::Val(Value::Bool(b)) => b,
                        other => return Err(branch_condition_error(other.kind().name())),
                    },
                };
                Ok(EvalOut::Val(Value::Bool(result)))
            }
            NodeKind::Unary { op, operand } => {
                let out = self.eval(operand, frame)?;
                if self.config.specialize {
                    match (&out, op) {
                        (EvalOut::Prim(Prim::I(n)), Op::Neg) => {
                            return Ok(EvalOut::Prim(Prim::I(n.wrapping_neg())))
                        }
                        (EvalOut::Prim(Prim::L(n)), Op::Neg) => {
                            return Ok(EvalOut::Prim(Prim::L(n.wrapping_neg())))
                        }
                        (EvalOut::Prim(Prim::D(d)), Op::Neg) => {
                            return Ok(EvalOut::Prim(Prim::D(-d)))
                        }
                        _ => {}
                    }
                }
                let v = self.out_to_value(out);
                let result = apply_unary(*op, &v)?;
                self.count_if_numeric(&result);
                Ok(EvalOut::Val(result))
            }
            NodeKind::CallNamed { name, module, args, cache } => {
                let outs = self.eval_args(args, frame)?;
                let target = {
                    let probe = cache.borrow();
                    if probe.mega {
                        None
                    } else {
                        probe.entries.first().map(|(_, t)| t.clone())
                    }
                };
                let target = match target {
                    Some(t) => t,
                    None => {
                        let resolved = resolve_name(&self.module_maps, *module, name)
                            .ok_or_else(|| {
                                RuntimeError::NoSuchMethod(format!("undefined function: {name}"))
                            })?;
                        let t = match resolved {
                            FunctionTarget::User(i) => CachedTarget::User(i),
                            FunctionTarget::Builtin(b) => CachedTarget::Builtin(b),
                            FunctionTarget::Struct(def) => CachedTarget::StructCtor(def),
                        };
                        let mut c = cache.borrow_mut();
                        if !c.mega {
                            c.entries.push((CacheKey::Static, t.clone()));
                        }
                        t
                    }
                };
                self.invoke_cached(target, None, outs)
            }
            NodeKind::CallLocal { slot, name, args, cache } => {
                let callee = match &frame.slots[*slot] {
                    Slot::Val(v) => v.clone(),
                    prim => {
                        let v = match prim {
                            Slot::I(n) => Value::Int(*n),
                            Slot::L(n) => Value::Long(*n),
                            Slot::D(d) => Value::Double(*d),
                            Slot::Val(_) => unreachable!(),
                        };
                        let _ = name;
                        return Err(RuntimeError::TypeMismatch(format!(
                            "{} is not callable",
                            v.type_name()
                        )));
                    }
                };
                let outs = self.eval_args(args, frame)?;
                self.call_callee_value(&callee, outs, cache)
            }
            NodeKind::MethodCall { name, recv, args, cache } => {
                let recv_out = self.eval(recv, frame)?;
                let recv = self.out_to_value(recv_out);
                let outs = self.eval_args(args, frame)?;
                let key = CacheKey::Recv(discriminator_of(&recv));
                let cached = {
                    let probe = cache.borrow();
                    if probe.mega {
                        None
                    } else {
                        probe
                            .entries
                            .iter()
                            .find(|(k, _)| *k == key)
                            .map(|(_, t)| t.clone())
                    }
                };
                let target = match cached {
                    Some(CachedTarget::Method(t)) => t,
                    Some(_) => unreachable!("method cache holds method targets"),
                    None => {
                        let resolved = method_lookup(&self.ctx, &recv, name, outs.len())?;
                        let mut c = cache.borrow_mut();
                        if !c.mega {
                            if c.entries.len() < self.config.dispatch_depth {
                                c.entries
                                    .push((key, CachedTarget::Method(resolved.target.clone())));
                            } else {
                                // Depth exhausted: megamorphic for good.
                                c.entries.clear();
                                c.mega = true;
                            }
                        }
                        resolved.target
                    }
                };
                let argv: Vec<Value> = outs.into_iter().map(|o| self.out_to_value(o)).collect();
                let result = invoke_method_target(&mut CtxBridge(self), &target, &recv, &argv)?;
                self.count_if_numeric(&result);
                Ok(EvalOut::Val(result))
            }
            NodeKind::ClosureMake { fn_index, capture_slots } => {
                let captures: Box<[Value]> = capture_slots
                    .iter()
                    .map(|&s| match &frame.slots[s] {
                        Slot::Val(v) => v.clone(),
                        Slot::I(n) => {
                            self.count_box();
                            Value::Int(*n)
                        }
                        Slot::L(n) => {
                            self.count_box();
                            Value::Long(*n)
                        }
                        Slot::D(d) => {
                            self.count_box();
                            Value::Double(*d)
                        }
                    })
                    .collect();
                Ok(EvalOut::Val(Value::Closure(Rc::new(Closure {
                    fn_index: *fn_index,
                    captures,
                }))))
            }
            NodeKind::TupleLit(items) => {
                let mut values = Vec::with_capacity(items.len());
                for item in items {
                    let out = self.eval(item, frame)?;
                    values.push(self.out_to_value(out));
                }
                Ok(EvalOut::Val(Value::Tuple(Rc::from(values))))
            }
            NodeKind::ListLit(items) => {
                let mut values = Vec::with_capacity(items.len());
                for item in items {
                    let out = self.eval(item, frame)?;
                    values.push(self.out_to_value(out));
                }
                Ok(EvalOut::Val(Value::List(Rc::new(RefCell::new(values)))))
            }
            // Statement kinds as expressions never happen; the builder keeps
            // them under blocks.
            _ => unreachable!("statement node evaluated as expression"),
        }
    }

    fn eval_literal(&self, lit: &Lit) -> EvalOut {
        match lit {
            Lit::I(n) => {
                if self.config.specialize {
                    EvalOut::Prim(Prim::I(*n))
                } else {
                    EvalOut::Val(self.out_to_value(EvalOut::Prim(Prim::I(*n))))
                }
            }
            Lit::L(n) => {
                if self.config.specialize {
                    EvalOut::Prim(Prim::L(*n))
                } else {
                    EvalOut::Val(self.out_to_value(EvalOut::Prim(Prim::L(*n))))
                }
            }
            Lit::D(d) => {
                if self.config.specialize {
                    EvalOut::Prim(Prim::D(*d))
                } else {
                    EvalOut::Val(self.out_to_value(EvalOut::Prim(Prim::D(*d))))
                }
            }
            Lit::Str(s) => EvalOut::Val(Value::Str(Rc::clone(s))),
            Lit::Bool(b) => EvalOut::Val(Value::Bool(*b)),
            Lit::Null => EvalOut::Val(Value::Null),
        }
    }

    fn eval_args(
        &self,
        args: &[Node],
        frame: &mut FrameSlots,
    ) -> Result<Vec<EvalOut>, RuntimeError> {
        let mut outs = Vec::with_capacity(args.len());
        for a in args {
            outs.push(self.eval(a, frame)?);
        }
        Ok(outs)
    }

    /// Binary node evaluation: specialized nodes compute on machine numbers;
    /// a guard failure generalizes the node but still produces the correct
    /// result for the operands in hand (no re-execution, no lost result).
    fn eval_binary(
        &self,
        op: Op,
        state: &Cell<BinState>,
        lo: EvalOut,
        ro: EvalOut,
    ) -> Result<EvalOut, RuntimeError> {
        let (kl, kr) = (lo.kind(), ro.kind());
        let current = state.get();
        let next = if self.config.specialize {
            next_state(current, op, kl, kr)
        } else {
            BinState::Generic
        };
        if next != current {
            state.set(next);
        }
        if let BinState::Spec(a, b) = next {
            if (a, b) == (kl, kr) {
                return self.eval_binary_fast(op, lo, ro);
            }
        }
        // Generic: boxed operands through the shared operator table.
        let va = self.out_to_value(lo);
        let vb = self.out_to_value(ro);
        let result = apply_binary(op, &va, &vb)?;
        self.count_if_numeric(&result);
        Ok(EvalOut::Val(result))
    }

    /// Kind-specialized arithmetic on machine numbers. Semantics mirror the
    /// operator table exactly: wrapping Int/Long, IEEE doubles, integral
    /// division-by-zero errors, string concatenation rendering either side.
    fn eval_binary_fast(&self, op: Op, lo: EvalOut, ro: EvalOut) -> Result<EvalOut, RuntimeError> {
        use Kind::{Double, Int, Long};
        let (kl, kr) = (lo.kind(), ro.kind());
        if kl == Kind::Str || kr == Kind::Str {
            debug_assert_eq!(op, Op::Plus);
            let mut s = String::new();
            self.render_out(&mut s, &lo);
            self.render_out(&mut s, &ro);
            return Ok(EvalOut::Val(Value::str(&s)));
        }
        let promoted = if kl == Double || kr == Double {
            Double
        } else if kl == Long || kr == Long {
            Long
        } else {
            Int
        };
        macro_rules! cmp {
            ($a:expr, $b:expr) => {{
                let (a, b) = ($a, $b);
                return Ok(EvalOut::Val(Value::Bool(match op {
                    Op::Equals => a == b,
                    Op::NotEquals => a != b,
                    Op::Less => a < b,
                    Op::LessOrEquals => a <= b,
                    Op::More => a > b,
                    Op::MoreOrEquals => a >= b,
                    _ => unreachable!(),
                })));
            }};
        }
        match promoted {
            Int => {
                let a = out_i32(&lo);
                let b = out_i32(&ro);
                if op.is_comparison() {
                    cmp!(a, b)
                }
                let r = match op {
                    Op::Plus => a.wrapping_add(b),
                    Op::Minus => a.wrapping_sub(b),
                    Op::Times => a.wrapping_mul(b),
                    Op::Divide => {
                        if b == 0 {
                            return Err(RuntimeError::DivisionByZero);
                        }
                        a.wrapping_div(b)
                    }
                    Op::Modulo => {
                        if b == 0 {
                            return Err(RuntimeError::DivisionByZero);
                        }
                        a.wrapping_rem(b)
                    }
                    _ => unreachable!(),
                };
                Ok(EvalOut::Prim(Prim::I(r)))
            }
            Long => {
                let a = out_i64(&lo);
                let b = out_i64(&ro);
                if op.is_comparison() {
                    cmp!(a, b)
                }
                let r = match op {
                    Op::Plus => a.wrapping_add(b),
                    Op::Minus => a.wrapping_sub(b),
                    Op::Times => a.wrapping_mul(b),
                    Op::Divide => {
                        if b == 0 {
                            return Err(RuntimeError::DivisionByZero);
                        }
                        a.wrapping_div(b)
                    }
                    Op::Modulo => {
                        if b == 0 {
                            return Err(RuntimeError::DivisionByZero);
                        }
                        a.wrapping_rem(b)
                    }
                    _ => unreachable!(),
                };
                Ok(EvalOut::Prim(Prim::L(r)))
            }
            Double => {
                let a = out_f64(&lo);
                let b = out_f64(&ro);
                if op.is_comparison() {
                    cmp!(a, b)
                }
                let r = match op {
                    Op::Plus => a + b,
                    Op::Minus => a - b,
                    Op::Times => a * b,
                    Op::Divide => a / b,
                    Op::Modulo => a % b,
                    _ => unreachable!(),
                };
                Ok(EvalOut::Prim(Prim::D(r)))
            }
            _ => unreachable!(),
        }
    }

    /// Renders an evaluation result without boxing machine numbers.
    fn render_out(&self, out: &mut String, o: &EvalOut) {
        match o {
            EvalOut::Prim(Prim::I(n)) => {
                let _ = write!(out, "{n}");
            }
            EvalOut::Prim(Prim::L(n)) => {
                let _ = write!(out, "{n}");
            }
            EvalOut::Prim(Prim::D(d)) => {
                let _ = write!(out, "{d}");
            }
            EvalOut::Val(Value::Str(s)) => out.push_str(s),
            EvalOut::Val(v) => out.push_str(&render(v)),
        }
    }

    fn call_callee_value(
        &self,
        callee: &Value,
        outs: Vec<EvalOut>,
        cache: &RefCell<DispatchCache>,
    ) -> Result<EvalOut, RuntimeError> {
        let key = match callee {
            Value::Closure(c) => CacheKey::Callee(FnRef::User(c.fn_index)),
            Value::FunctionRef(r) => CacheKey::Callee(*r),
            other => {
                return Err(RuntimeError::TypeMismatch(format!(
                    "{} is not callable",
                    other.type_name()
                )))
            }
        };
        let cached = {
            let probe = cache.borrow();
            if probe.mega {
                None
            } else {
                probe
                    .entries
                    .iter()
                    .find(|(k, _)| *k == key)
                    .map(|(_, t)| t.clone())
            }
        };
        let target = match cached {
            Some(t) => t,
            None => {
                let t = match callee {
                    Value::Closure(c) => CachedTarget::User(c.fn_index),
                    Value::FunctionRef(FnRef::User(i)) => CachedTarget::User(*i),
                    Value::FunctionRef(FnRef::Builtin(b)) => CachedTarget::Builtin(*b),
                    _ => unreachable!(),
                };
                let mut c = cache.borrow_mut();
                if !c.mega {
                    if c.entries.len() < self.config.dispatch_depth {
                        c.entries.push((key, t.clone()));
                    } else {
                        c.entries.clear();
                        c.mega = true;
                    }
                }
                t
            }
        };
        let captures = match callee {
            Value::Closure(c) => Some(Rc::clone(c)),
            _ => None,
        };
        self.invoke_cached(target, captures, outs)
    }

    fn invoke_cached(
        &self,
        target: CachedTarget,
        closure: Option<Rc<Closure>>,
        outs: Vec<EvalOut>,
    ) -> Result<EvalOut, RuntimeError> {
        match target {
            CachedTarget::User(fn_index) => {
                let captures: &[Value] = match &closure {
                    Some(c) => &c.captures,
                    None => &[],
                };
                self.call_user(fn_index, captures, outs)
            }
            CachedTarget::Builtin(b) => {
                let argv: Vec<Value> = outs.into_iter().map(|o| self.out_to_value(o)).collect();
                let result = invoke_builtin_fn(&mut CtxBridge(self), b, &argv)?;
                self.count_if_numeric(&result);
                Ok(EvalOut::Val(result))
            }
            CachedTarget::StructCtor(def) => {
                let argv: Vec<Value> = outs.into_iter().map(|o| self.out_to_value(o)).collect();
                Ok(EvalOut::Val(construct_struct(&def, &argv)?))
            }
            CachedTarget::Method(_) => unreachable!("method target in call position"),
        }
    }

    /// Node counters sorted by execution count (descending), one line per
    /// node: `<count>  <nodeKind>  <fn>:<line>:<col>  state=<state>`.
    pub fn profile_dump(&self) -> String {
        let mut rows: Vec<(u64, &'static str, Rc<str>, Pos, String)> = Vec::new();
        for f in &self.functions {
            collect_profile(&f.body, &f.name, &mut rows);
        }
        rows.sort_by(|a, b| {
            b.0.cmp(&a.0)
                .then_with(|| a.2.cmp(&b.2))
                .then_with(|| (a.3.line, a.3.col).cmp(&(b.3.line, b.3.col)))
                .then_with(|| a.1.cmp(b.1))
        });
        let mut out = String::new();
        for (count, kind, fn_name, pos, state) in rows {
            let _ = writeln!(out, "{count}  {kind}  {fn_name}:{}:{}  state={state}", pos.line, pos.col);
        }
        out
    }

    /// Test hook: visits every binary node's (name, state).
    pub fn binary_states(&self) -> Vec<(Rc<str>, BinState)> {
        let mut rows = Vec::new();
        for f in &self.functions {
            collect_binary_states(&f.body, &f.name, &mut rows);
        }
        rows
    }
}

/// Thin reborrowable bridge: builtins need `&mut dyn EngineCtx`, the tree
/// engine is interior-mutable behind `&self`.
struct CtxBridge<'a>(&'a AstEngine);

impl EngineCtx for CtxBridge<'_> {
    fn call_value(&mut self, callee: &Value, args: &[Value]) -> Result<Value, RuntimeError> {
        let engine = self.0;
        match callee {
            Value::Closure(c) => {
                let outs: Vec<EvalOut> = args.iter().cloned().map(EvalOut::Val).collect();
                let out = engine.call_user(c.fn_index, &c.captures, outs)?;
                Ok(engine.out_to_value(out))
            }
            Value::FunctionRef(FnRef::User(i)) => {
                let outs: Vec<EvalOut> = args.iter().cloned().map(EvalOut::Val).collect();
                let out = engine.call_user(*i, &[], outs)?;
                Ok(engine.out_to_value(out))
            }
            Value::FunctionRef(FnRef::Builtin(b)) => invoke_builtin_fn(self, *b, args),
            other => Err(RuntimeError::TypeMismatch(format!(
                "{} is not callable",
                other.type_name()
            ))),
        }
    }

    fn runtime(&self) -> &RuntimeCtx {
        &self.0.ctx
    }
}

fn out_i32(o: &EvalOut) -> i32 {
    match o {
        EvalOut::Prim(Prim::I(n)) => *n,
        EvalOut::Val(Value::Int(n)) => *n,
        _ => unreachable!("specialized path saw non-Int"),
    }
}

fn out_i64(o: &EvalOut) -> i64 {
    match o {
        EvalOut::Prim(Prim::I(n)) => i64::from(*n),
        EvalOut::Prim(Prim::L(n)) => *n,
        EvalOut::Val(Value::Int(n)) => i64::from(*n),
        EvalOut::Val(Value::Long(n)) => *n,
        _ => unreachable!("specialized path saw non-integral"),
    }
}

fn out_f64(o: &EvalOut) -> f64 {
    match o {
        EvalOut::Prim(Prim::I(n)) => f64::from(*n),
        EvalOut::Prim(Prim::L(n)) => *n as f64,
        EvalOut::Prim(Prim::D(d)) => *d,
        EvalOut::Val(Value::Int(n)) => f64::from(*n),
        EvalOut::Val(Value::Long(n)) => *n as f64,
        EvalOut::Val(Value::Double(d)) => *d,
        _ => unreachable!("specialized path saw non-numeric"),
    }
}

fn node_kind_label(node: &Node) -> &'static str {
    match &node.kind {
        NodeKind::Block(_) => "block",
        NodeKind::If { .. } => "branch",
        NodeKind::While { .. } => "loop",
        NodeKind::Return(_) => "return",
        NodeKind::LocalWrite { .. } => "local-write",
        NodeKind::Literal(_) => "literal",
        NodeKind::LocalRead { .. } => "local-read",
        NodeKind::FunctionRefRead { .. } => "function-ref",
        NodeKind::Binary { .. } => "binary-op",
        NodeKind::ShortCircuit { .. } => "short-circuit",
        NodeKind::Unary { .. } => "unary-op",
        NodeKind::CallNamed { .. } | NodeKind::CallLocal { .. } => "call",
        NodeKind::MethodCall { .. } => "method-call",
        NodeKind::ClosureMake { .. } => "closure-make",
        NodeKind::TupleLit(_) => "tuple",
        NodeKind::ListLit(_) => "list",
    }
}

fn node_state_label(node: &Node) -> String {
    match &node.kind {
        NodeKind::Binary { state, .. } => match state.get() {
            BinState::Uninit => "uninit".to_string(),
            BinState::Spec(a, b) => format!("spec({},{})", a.name(), b.name()),
            BinState::Generic => "generic".to_string(),
        },
        NodeKind::CallNamed { cache, .. }
        | NodeKind::CallLocal { cache, .. }
        | NodeKind::MethodCall { cache, .. } => {
            let c = cache.borrow();
            if c.mega {
                "mega".to_string()
            } else if c.entries.is_empty() {
                "uninit".to_string()
            } else {
                format!("cached({})", c.entries.len())
            }
        }
        _ => "-".to_string(),
    }
}

fn collect_profile(
    node: &Node,
    fn_name: &Rc<str>,
    rows: &mut Vec<(u64, &'static str, Rc<str>, Pos, String)>,
) {
    rows.push((
        node.count.get(),
        node_kind_label(node),
        Rc::clone(fn_name),
        node.pos,
        node_state_label(node),
    ));
    for child in node_children(node) {
        collect_profile(child, fn_name, rows);
    }
}

fn collect_binary_states(node: &Node, fn_name: &Rc<str>, rows: &mut Vec<(Rc<str>, BinState)>) {
    if let NodeKind::Binary { state, .. } = &node.kind {
        rows.push((Rc::clone(fn_name), state.get()));
    }
    for child in node_children(node) {
        collect_binary_states(child, fn_name, rows);
    }
}

fn node_children(node: &Node) -> Vec<&Node> {
    match &node.kind {
        NodeKind::Block(stmts) => stmts.iter().collect(),
        NodeKind::If { cond, then, alt } => {
            let mut v = vec![cond.as_ref(), then.as_ref()];
            if let Some(alt) = alt {
                v.push(alt.as_ref());
            }
            v
        }
        NodeKind::While { cond, body } => vec![cond.as_ref(), body.as_ref()],
        NodeKind::Return(Some(v)) => vec![v.as_ref()],
        NodeKind::Return(None) => Vec::new(),
        NodeKind::LocalWrite { value, .. } => vec![value.as_ref()],
        NodeKind::Binary { lhs, rhs, .. } | NodeKind::ShortCircuit { lhs, rhs, .. } => {
            vec![lhs.as_ref(), rhs.as_ref()]
        }
        NodeKind::Unary { operand, .. } => vec![operand.as_ref()],
        NodeKind::CallNamed { args, .. } | NodeKind::CallLocal { args, .. } => args.iter().collect(),
        NodeKind::MethodCall { recv, args, .. } => {
            let mut v = vec![recv.as_ref()];
            v.extend(args.iter());
            v
        }
        NodeKind::TupleLit(items) | NodeKind::ListLit(items) => items.iter().collect(),
        _ => Vec::new(),
    }
}

/// Name-to-slot resolution scope used while building the tree. The builder
/// resolves purely by name, so it accepts IR with or without allocated slots.
struct BuildScope {
    bindings: Vec<(Rc<str>, usize)>,
    marks: Vec<usize>,
    next_slot: usize,
}

impl BuildScope {
    fn new(params: &[Rc<str>]) -> BuildScope {
        let mut s = BuildScope {
            bindings: Vec::new(),
            marks: Vec::new(),
            next_slot: 0,
        };
        for p in params {
            s.bind(Rc::clone(p));
        }
        s
    }

    fn bind(&mut self, name: Rc<str>) -> usize {
        let slot = self.next_slot;
        self.next_slot += 1;
        self.bindings.push((name, slot));
        slot
    }

    fn enter(&mut self) {
        self.marks.push(self.bindings.len());
    }

    fn exit(&mut self) {
        let mark = self.marks.pop().unwrap();
        self.bindings.truncate(mark);
    }

    fn resolve(&self, name: &str) -> Option<usize> {
        self.bindings
            .iter()
            .rev()
            .find(|(n, _)| &**n == name)
            .map(|(_, s)| *s)
    }
}

struct TreeBuilder<'m> {
    functions: Vec<ExecFunction>,
    fn_offsets: Vec<u32>,
    module_maps: &'m [HashMap<Rc<str>, FunctionTarget>],
    specialize: bool,
}

impl TreeBuilder<'_> {
    fn build_block(&mut self, block: &IrBlock, scope: &mut BuildScope, module: u32) -> Node {
        scope.enter();
        let stmts = block
            .stmts
            .iter()
            .map(|s| self.build_stmt(s, scope, module))
            .collect();
        scope.exit();
        Node::new(NodeKind::Block(stmts), block.pos)
    }

    fn build_stmt(&mut self, stmt: &IrStmt, scope: &mut BuildScope, module: u32) -> Node {
        match stmt {
            IrStmt::Let { name, value, pos, .. } | IrStmt::Var { name, value, pos, .. } => {
                let value = self.build_expr(value, scope, module);
                let slot = scope.bind(Rc::clone(name));
                Node::new(
                    NodeKind::LocalWrite {
                        slot,
                        value: Box::new(value),
                    },
                    *pos,
                )
            }
            IrStmt::Assign { name, value, pos, .. } => {
                let value = self.build_expr(value, scope, module);
                let slot = scope
                    .resolve(name)
                    .expect("checked assignment resolves to a local");
                Node::new(
                    NodeKind::LocalWrite {
                        slot,
                        value: Box::new(value),
                    },
                    *pos,
                )
            }
            IrStmt::If { cond, then, alt, pos } => Node::new(
                NodeKind::If {
                    cond: Box::new(self.build_expr(cond, scope, module)),
                    then: Box::new(self.build_block(then, scope, module)),
                    alt: alt
                        .as_ref()
                        .map(|a| Box::new(self.build_block(a, scope, module))),
                },
                *pos,
            ),
            IrStmt::While { cond, body, pos } => Node::new(
                NodeKind::While {
                    cond: Box::new(self.build_expr(cond, scope, module)),
                    body: Box::new(self.build_block(body, scope, module)),
                },
                *pos,
            ),
            IrStmt::Return { value, pos } => Node::new(
                NodeKind::Return(
                    value
                        .as_ref()
                        .map(|v| Box::new(self.build_expr(v, scope, module))),
                ),
                *pos,
            ),
            IrStmt::Expr(e) => self.build_expr(e, scope, module),
        }
    }

    fn build_expr(&mut self, expr: &IrExpr, scope: &mut BuildScope, module: u32) -> Node {
        match expr {
            IrExpr::ConstInt(n, pos) => Node::new(NodeKind::Literal(Lit::I(*n)), *pos),
            IrExpr::ConstLong(n, pos) => Node::new(NodeKind::Literal(Lit::L(*n)), *pos),
            IrExpr::ConstDouble(d, pos) => Node::new(NodeKind::Literal(Lit::D(*d)), *pos),
            IrExpr::ConstStr(s, pos) => {
                Node::new(NodeKind::Literal(Lit::Str(Rc::clone(s))), *pos)
            }
            IrExpr::ConstBool(b, pos) => Node::new(NodeKind::Literal(Lit::Bool(*b)), *pos),
            IrExpr::ConstNull(pos) => Node::new(NodeKind::Literal(Lit::Null), *pos),
            IrExpr::Reference { name, pos, .. } => match scope.resolve(name) {
                Some(slot) => Node::new(NodeKind::LocalRead { slot }, *pos),
                None => {
                    // Free reference: module function, import, or builtin as
                    // a value. The checker guarantees it resolves.
                    let fn_ref = match resolve_name(self.module_maps, module, name) {
                        Some(FunctionTarget::User(i)) => FnRef::User(i),
                        Some(FunctionTarget::Builtin(b)) => FnRef::Builtin(b),
                        _ => panic!("unresolved free reference: {name} (run check_references first)"),
                    };
                    Node::new(NodeKind::FunctionRefRead { fn_ref }, *pos)
                }
            },
            IrExpr::Binary { op, lhs, rhs, pos } if op.is_short_circuit() => Node::new(
                NodeKind::ShortCircuit {
                    op: *op,
                    lhs: Box::new(self.build_expr(lhs, scope, module)),
                    rhs: Box::new(self.build_expr(rhs, scope, module)),
                },
                *pos,
            ),
            IrExpr::Binary { op, lhs, rhs, pos } => Node::new(
                NodeKind::Binary {
                    op: *op,
                    state: Cell::new(if self.specialize {
                        BinState::Uninit
                    } else {
                        BinState::Generic
                    }),
                    lhs: Box::new(self.build_expr(lhs, scope, module)),
                    rhs: Box::new(self.build_expr(rhs, scope, module)),
                },
                *pos,
            ),
            IrExpr::Unary { op, expr, pos } => Node::new(
                NodeKind::Unary {
                    op: *op,
                    operand: Box::new(self.build_expr(expr, scope, module)),
                },
                *pos,
            ),
            IrExpr::Call { name, args, pos, .. } => {
                let args: Vec<Node> = args
                    .iter()
                    .map(|a| self.build_expr(a, scope, module))
                    .collect();
                match scope.resolve(name) {
                    Some(slot) => Node::new(
                        NodeKind::CallLocal {
                            slot,
                            name: Rc::clone(name),
                            args,
                            cache: DispatchCache::new(!self.specialize),
                        },
                        *pos,
                    ),
                    None => Node::new(
                        NodeKind::CallNamed {
                            name: Rc::clone(name),
                            module,
                            args,
                            cache: DispatchCache::new(!self.specialize),
                        },
                        *pos,
                    ),
                }
            }
            IrExpr::MethodCall { recv, name, args, pos } => Node::new(
                NodeKind::MethodCall {
                    name: Rc::clone(name),
                    recv: Box::new(self.build_expr(recv, scope, module)),
                    args: args
                        .iter()
                        .map(|a| self.build_expr(a, scope, module))
                        .collect(),
                    cache: DispatchCache::new(!self.specialize),
                },
                *pos,
            ),
            IrExpr::Lambda(lam) => {
                // In-place lambda: becomes an anonymous function whose
                // captures fill the leading slots, exactly like the lifted
                // form.
                let captures: Vec<Rc<str>> = lambda_free_names(&lam.params, &lam.body)
                    .into_iter()
                    .filter(|name| scope.resolve(name).is_some())
                    .collect();
                let capture_slots: Vec<usize> = captures
                    .iter()
                    .map(|c| scope.resolve(c).expect("capture resolves"))
                    .collect();
                let mut params: Vec<Rc<str>> = captures.clone();
                params.extend(lam.params.iter().cloned());
                let mut inner = BuildScope::new(&params);
                let body = self.build_block(&lam.body, &mut inner, module);
                let fn_index = self.functions.len() as u32;
                self.functions.push(ExecFunction {
                    name: Rc::from(format!("__lambda@{fn_index}")),
                    param_total: params.len(),
                    declared_params: lam.params.len(),
                    slots: inner.next_slot,
                    body,
                    pos: lam.pos,
                });
                Node::new(
                    NodeKind::ClosureMake {
                        fn_index,
                        capture_slots,
                    },
                    lam.pos,
                )
            }
            IrExpr::MakeClosure { fn_index, captures, pos, .. } => {
                let capture_slots: Vec<usize> = captures
                    .iter()
                    .map(|c| scope.resolve(&c.name).expect("capture resolves"))
                    .collect();
                Node::new(
                    NodeKind::ClosureMake {
                        fn_index: self.fn_offsets[module as usize] + fn_index,
                        capture_slots,
                    },
                    *pos,
                )
            }
            IrExpr::TupleLit(items, pos) => Node::new(
                NodeKind::TupleLit(
                    items
                        .iter()
                        .map(|i| self.build_expr(i, scope, module))
                        .collect(),
                ),
                *pos,
            ),
            IrExpr::ListLit(items, pos) => Node::new(
                NodeKind::ListLit(
                    items
                        .iter()
                        .map(|i| self.build_expr(i, scope, module))
                        .collect(),
                ),
                *pos,
            ),
        }
    }
}

