//! Shared setup for the criterion benches: compiled workloads and warm
//! engine construction for each engine/policy lane.

use std::cell::RefCell;
use std::rc::Rc;

use minigolo_core::bench::{fib_program, fmr_program, gcd_pairs, gcd_program, GCD_SEED};
use minigolo_core::callsite::DispatchPolicy;
use minigolo_core::interp::{AstConfig, AstEngine};
use minigolo_core::pipeline::{compile_source, main_args, Program};
use minigolo_core::runtime::OutputSink;
use minigolo_core::vm::{Vm, VmConfig};

pub struct Lane {
    pub label: &'static str,
    runner: Runner,
    buf: Rc<RefCell<Vec<u8>>>,
}

enum Runner {
    Vm(Box<Vm>),
    Ast(Box<AstEngine>),
}

impl Lane {
    pub fn run(&mut self) {
        self.buf.borrow_mut().clear();
        match &mut self.runner {
            Runner::Vm(vm) => {
                vm.run_main(&main_args(&[])).expect("benchmark program runs");
            }
            Runner::Ast(engine) => {
                engine.run_main(&main_args(&[])).expect("benchmark program runs");
            }
        }
    }
}

/// One lane per engine/policy combination, caches warm after the first call.
pub fn lanes(program: &Program) -> Vec<Lane> {
    let vm_lane = |label, policy| {
        let (sink, buf) = OutputSink::buffer();
        Lane {
            label,
            runner: Runner::Vm(Box::new(Vm::new(
                Rc::clone(&program.image),
                VmConfig { policy, ..VmConfig::default() },
                sink,
            ))),
            buf,
        }
    };
    let ast_lane = |label, specialize| {
        let (sink, buf) = OutputSink::buffer();
        Lane {
            label,
            runner: Runner::Ast(Box::new(AstEngine::new(
                &program.ir,
                AstConfig { specialize, ..AstConfig::default() },
                sink,
            ))),
            buf,
        }
    };
    vec![
        vm_lane("bytecode-mono", DispatchPolicy::Mono),
        vm_lane("bytecode-poly2", DispatchPolicy::Poly(2)),
        vm_lane("bytecode-none", DispatchPolicy::None),
        ast_lane("ast-specialized", true),
        ast_lane("ast-generic", false),
    ]
}

pub fn fib_workload(n: u32) -> Program {
    compile_source(&fib_program(n)).unwrap()
}

pub fn gcd_workload(pairs: usize) -> Program {
    compile_source(&gcd_program(&gcd_pairs(pairs, GCD_SEED))).unwrap()
}

pub fn fmr_workload(n: i32) -> Program {
    compile_source(&fmr_program(n)).unwrap()
}
