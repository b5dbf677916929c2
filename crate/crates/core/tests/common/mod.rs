//! Shared helpers for the integration suites: corpus loading and running a
//! compiled program under a chosen engine configuration.
#![allow(dead_code)] // each test binary uses a different subset

use std::path::PathBuf;
use std::rc::Rc;

use minigolo_core::callsite::DispatchPolicy;
use minigolo_core::interp::{AstConfig, AstEngine};
use minigolo_core::pipeline::{compile_source, main_args, Program};
use minigolo_core::runtime::OutputSink;
use minigolo_core::vm::{Vm, VmConfig};

pub fn corpus_dir(category: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("tests/corpus")
        .join(category)
}

pub fn corpus_files(category: &str) -> Vec<(String, String)> {
    let mut files: Vec<(String, String)> = std::fs::read_dir(corpus_dir(category))
        .expect("corpus directory")
        .map(|entry| {
            let path = entry.unwrap().path();
            let name = path.file_name().unwrap().to_string_lossy().to_string();
            let source = std::fs::read_to_string(&path).unwrap();
            (name, source)
        })
        .collect();
    files.sort();
    assert!(!files.is_empty(), "empty corpus category {category}");
    files
}

/// One engine+policy combination of the differential grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineConfig {
    Vm(DispatchPolicy),
    Ast { specialize: bool },
}

impl EngineConfig {
    pub fn label(&self) -> String {
        match self {
            EngineConfig::Vm(p) => format!("bytecode/{}", p.label()),
            EngineConfig::Ast { specialize: true } => "ast/specialized".to_string(),
            EngineConfig::Ast { specialize: false } => "ast/generic".to_string(),
        }
    }
}

pub fn differential_grid() -> Vec<EngineConfig> {
    vec![
        EngineConfig::Vm(DispatchPolicy::Mono),
        EngineConfig::Vm(DispatchPolicy::Poly(2)),
        EngineConfig::Vm(DispatchPolicy::Poly(4)),
        EngineConfig::Vm(DispatchPolicy::None),
        EngineConfig::Ast { specialize: true },
        EngineConfig::Ast { specialize: false },
    ]
}

/// Runs a compiled program under one configuration: (stdout, exit code).
/// Exit 0 on success, 1 on runtime error, mirroring the CLI contract.
pub fn run_config(program: &Program, config: EngineConfig) -> (String, i32) {
    let (sink, buf) = OutputSink::buffer();
    let exit = match config {
        EngineConfig::Vm(policy) => {
            let mut vm = Vm::new(
                Rc::clone(&program.image),
                VmConfig {
                    policy,
                    ..VmConfig::default()
                },
                sink,
            );
            match vm.run_main(&main_args(&[])) {
                Ok(_) => 0,
                Err(_) => 1,
            }
        }
        EngineConfig::Ast { specialize } => {
            let engine = AstEngine::new(
                &program.ir,
                AstConfig {
                    specialize,
                    ..AstConfig::default()
                },
                sink,
            );
            match engine.run_main(&main_args(&[])) {
                Ok(_) => 0,
                Err(_) => 1,
            }
        }
    };
    let output = String::from_utf8(buf.borrow().clone()).unwrap();
    (output, exit)
}

pub fn compile_ok(name: &str, source: &str) -> Program {
    match compile_source(source) {
        Ok(p) => p,
        Err(e) => panic!("{name} failed to compile: {e}"),
    }
}
