//! Differential suite: every corpus program must produce byte-identical
//! stdout and exit code across the bytecode engine under every cache policy
//! and the tree engine with and without specialization. Zero tolerance —
//! caching and specialization must never change semantics.

mod common;

use common::{compile_ok, corpus_files, differential_grid, run_config};

#[test]
fn ok_corpus_is_byte_identical_across_engines_and_policies() {
    let files = corpus_files("ok");
    assert!(
        files.len() >= 30,
        "differential corpus needs at least 30 programs, found {}",
        files.len()
    );
    for (name, source) in &files {
        let program = compile_ok(name, source);
        let reference = run_config(&program, differential_grid()[0]);
        assert_eq!(reference.1, 0, "{name} failed on the reference config");
        for config in differential_grid().into_iter().skip(1) {
            let got = run_config(&program, config);
            assert_eq!(
                got, reference,
                "{name} diverged under {}",
                config.label()
            );
        }
    }
}

#[test]
fn runtime_error_corpus_matches_across_engines_and_policies() {
    for (name, source) in &corpus_files("runtime-error") {
        let program = compile_ok(name, source);
        let reference = run_config(&program, differential_grid()[0]);
        assert_eq!(reference.1, 1, "{name} should fail at runtime");
        for config in differential_grid().into_iter().skip(1) {
            let got = run_config(&program, config);
            assert_eq!(
                got, reference,
                "{name} diverged under {}",
                config.label()
            );
        }
    }
}

#[test]
fn runtime_errors_are_deterministic_across_runs() {
    use minigolo_core::pipeline::main_args;
    use minigolo_core::runtime::OutputSink;
    use minigolo_core::vm::{Vm, VmConfig};
    use std::rc::Rc;

    for (name, source) in &corpus_files("runtime-error") {
        let program = compile_ok(name, source);
        let mut seen: Option<String> = None;
        for _ in 0..3 {
            let (sink, _buf) = OutputSink::buffer();
            let mut vm = Vm::new(Rc::clone(&program.image), VmConfig::default(), sink);
            let err = vm.run_main(&main_args(&[])).unwrap_err();
            let rendered = err.to_string();
            assert!(!err.trace.is_empty(), "{name}: error must carry a trace");
            match &seen {
                None => seen = Some(rendered),
                Some(prev) => assert_eq!(prev, &rendered, "{name}: nondeterministic failure"),
            }
        }
    }
}
