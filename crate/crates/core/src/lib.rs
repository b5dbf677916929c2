//! minigolo: a small dynamically-typed language with two interchangeable
//! execution engines — a bytecode VM whose call sites relink guarded
//! method-handle chains (adaptive inline caches), and a self-specializing
//! tree interpreter with shape-keyed dispatch caches and node counters —
//! plus a micro-benchmark harness that compares them.

pub mod ast;
pub mod bench;
pub mod builtins;
pub mod bytecode;
pub mod callsite;
pub mod compile;
pub mod errors;
pub mod interp;
pub mod ir;
pub mod lexer;
pub mod link;
pub mod object;
pub mod operators;
pub mod parser;
pub mod passes;
pub mod pipeline;
pub mod runtime;
pub mod shape;
pub mod value;
pub mod vm;

pub use callsite::{CallSite, DispatchPolicy, SiteKind, SiteStats};
pub use errors::RuntimeError;
pub use interp::{AstConfig, AstEngine};
pub use lexer::Pos;
pub use operators::Op;
pub use pipeline::{compile_source, main_args, FrontendError, Program};
pub use runtime::{OutputSink, RuntimeCtx};
pub use value::{Kind, Value};
pub use vm::{Vm, VmConfig, VmError};
