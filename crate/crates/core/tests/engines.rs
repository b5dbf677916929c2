//! Engine behavior: reference results on both engines, call-site counter
//! rules, node counters and profiles, boxing instrumentation, dispatch-cache
//! transitions, and call-depth safety.

mod common;

use std::rc::Rc;

use common::{compile_ok, run_config, EngineConfig};
use minigolo_core::callsite::DispatchPolicy;
use minigolo_core::interp::{AstConfig, AstEngine, BinState};
use minigolo_core::pipeline::main_args;
use minigolo_core::runtime::OutputSink;
use minigolo_core::value::Value;
use minigolo_core::vm::{Vm, VmConfig};
use minigolo_core::RuntimeError;

const FIB_SRC: &str = "module t.fib

local function fib = |n| {
  if n <= 1 {
    return n
  } else {
    return fib(n - 1) + fib(n - 2)
  }
}

function main = |args| {
  println(fib(30))
}
";

fn vm_for(src: &str, policy: DispatchPolicy) -> (Vm, Rc<std::cell::RefCell<Vec<u8>>>) {
    let program = compile_ok("inline", src);
    let (sink, buf) = OutputSink::buffer();
    let vm = Vm::new(
        Rc::clone(&program.image),
        VmConfig {
            policy,
            ..VmConfig::default()
        },
        sink,
    );
    (vm, buf)
}

fn ast_for(src: &str, config: AstConfig) -> (AstEngine, Rc<std::cell::RefCell<Vec<u8>>>) {
    let program = compile_ok("inline", src);
    let (sink, buf) = OutputSink::buffer();
    let engine = AstEngine::new(&program.ir, config, sink);
    (engine, buf)
}

#[test]
fn fib_30_on_both_engines() {
    let program = compile_ok("fib", FIB_SRC);
    for config in [
        EngineConfig::Vm(DispatchPolicy::Mono),
        EngineConfig::Ast { specialize: true },
    ] {
        let (out, exit) = run_config(&program, config);
        assert_eq!(exit, 0);
        assert_eq!(out, "832040\n");
    }
}

#[test]
fn vm_call_function_returns_values_directly() {
    let program = compile_ok(
        "direct",
        "module t
function id = |x| -> x
function gcd_pair = || -> 0
local function gcd = |x, y| {
  var a = x
  var b = y
  while b != 0 {
    let t = a % b
    a = b
    b = t
  }
  return a
}
function run_gcd = |x, y| -> gcd(x, y)
function main = |args| { }",
    );
    let (sink, _) = OutputSink::buffer();
    let mut vm = Vm::new(Rc::clone(&program.image), VmConfig::default(), sink);
    let id = program
        .image
        .functions
        .iter()
        .position(|f| &*f.name == "id")
        .unwrap() as u32;
    let v = vm.call_function(id, &[Value::Int(7)]).unwrap();
    assert!(matches!(v, Value::Int(7)));

    // Euclid: 1071,462 -> 462,147 -> 147,21 -> 21,0
    let run_gcd = program
        .image
        .functions
        .iter()
        .position(|f| &*f.name == "run_gcd")
        .unwrap() as u32;
    let v = vm
        .call_function(run_gcd, &[Value::Int(1071), Value::Int(462)])
        .unwrap();
    assert!(matches!(v, Value::Int(21)));

    // Wrong arity names the function.
    let err = vm.call_function(id, &[]).unwrap_err();
    assert_eq!(err.error.kind(), "arity mismatch");
    assert!(err.error.to_string().contains("id"));
}

#[test]
fn closure_with_capture_runs_captured_fib() {
    // A closure capturing n, body `-> fib(n)`, invoked via the closure-call
    // path on both engines.
    let src = "module t
local function fib = |n| {
  if n <= 1 { return n } else { return fib(n - 1) + fib(n - 2) }
}
function main = |args| {
  let n = 30
  let task = || -> fib(n)
  println(task())
}";
    let program = compile_ok("capture", src);
    for config in [
        EngineConfig::Vm(DispatchPolicy::Mono),
        EngineConfig::Ast { specialize: true },
    ] {
        assert_eq!(run_config(&program, config), ("832040\n".to_string(), 0));
    }
}

#[test]
fn call_depth_limit_yields_stack_overflow_not_a_crash() {
    let src = "module t
local function down = |n| {
  if n == 0 { return 0 }
  return down(n - 1)
}
function run = |n| -> down(n)
function main = |args| { }";
    let program = compile_ok("depth", src);
    let run_idx = program
        .image
        .functions
        .iter()
        .position(|f| &*f.name == "run")
        .unwrap() as u32;

    let (sink, _) = OutputSink::buffer();
    let mut vm = Vm::new(
        Rc::clone(&program.image),
        VmConfig {
            max_call_depth: 100,
            ..VmConfig::default()
        },
        sink,
    );
    // run + down(98)..down(0) = 100 frames exactly: fits.
    assert!(vm.call_function(run_idx, &[Value::Int(98)]).is_ok());
    // One more level: overflow, reported not crashed.
    let err = vm.call_function(run_idx, &[Value::Int(99)]).unwrap_err();
    assert_eq!(err.error, RuntimeError::StackOverflow);

    let (sink, _) = OutputSink::buffer();
    let engine = AstEngine::new(
        &program.ir,
        AstConfig {
            max_call_depth: 100,
            ..AstConfig::default()
        },
        sink,
    );
    let run_idx = engine.function_named("run").unwrap();
    assert!(engine.call_by_index(run_idx, &[Value::Int(98)]).is_ok());
    let err = engine.call_by_index(run_idx, &[Value::Int(99)]).unwrap_err();
    assert_eq!(err.error, RuntimeError::StackOverflow);
}

#[test]
fn monomorphic_loop_counter_rules() {
    // 1000 iterations through one `+` site under mono: bootstrap miss and
    // relink once, hits ever after.
    let src = "module t
function main = |args| {
  var i = 0
  var acc = 0
  while i < 1000 {
    acc = acc + 3
    i = i + 1
  }
  println(acc)
}";
    let (mut vm, buf) = vm_for(src, DispatchPolicy::Mono);
    vm.run_main(&main_args(&[])).unwrap();
    assert_eq!(String::from_utf8(buf.borrow().clone()).unwrap(), "3000\n");
    for site in vm.sites().iter().filter(|s| s.executed()) {
        let stats = site.stats();
        assert_eq!(stats.hits + stats.misses, stats.hits + 1, "{}", site.name);
        assert_eq!(stats.misses, 1);
        assert_eq!(stats.relinks, 1);
        assert_eq!(stats.chain_depth, 1);
        assert!(!stats.megamorphic);
    }
    // The loop-body plus sites each ran 1000 times: 999 hits, 1 miss.
    let plus_sites: Vec<_> = vm
        .sites()
        .iter()
        .filter(|s| &*s.name == "plus" && s.executed())
        .collect();
    assert_eq!(plus_sites.len(), 2);
    for site in plus_sites {
        assert_eq!(site.stats().hits, 999);
    }
}

#[test]
fn strict_alternation_relinks_linearly_under_mono() {
    // One `+` site seeing Int/Int and Double/Double alternately. Under mono
    // every iteration misses and relinks; under poly:2 both kinds install
    // and everything after hits.
    let src = "module t
function main = |args| {
  var v = 1
  var i = 0
  while i < 100 {
    let y = v + v
    if i % 2 == 0 { v = 1.5 } else { v = 1 }
    i = i + 1
  }
  println(\"done\")
}";
    let (mut vm, _) = vm_for(src, DispatchPolicy::Mono);
    vm.run_main(&main_args(&[])).unwrap();
    // Two plus sites execute: `v + v` (alternating kinds) and the loop
    // increment (monomorphic).
    let plus: Vec<_> = vm
        .sites()
        .iter()
        .filter(|s| &*s.name == "plus" && s.executed())
        .collect();
    assert_eq!(plus.len(), 2);
    let alternating = plus.iter().find(|s| s.stats().misses > 1).unwrap().stats();
    assert_eq!(alternating.misses, 100);
    assert_eq!(alternating.relinks, 100);
    assert_eq!(alternating.hits, 0);
    let increment = plus.iter().find(|s| s.stats().misses == 1).unwrap().stats();
    assert_eq!(increment.hits, 99);
    assert_eq!(increment.relinks, 1);

    let (mut vm, _) = vm_for(src, DispatchPolicy::Poly(2));
    vm.run_main(&main_args(&[])).unwrap();
    let stats = vm
        .sites()
        .iter()
        .filter(|s| &*s.name == "plus" && s.executed())
        .map(|s| s.stats())
        .find(|s| s.misses == 2)
        .expect("alternating site installs both kinds");
    assert_eq!(stats.relinks, 2);
    assert_eq!(stats.hits, 98);
    assert_eq!(stats.chain_depth, 2);
    assert!(!stats.megamorphic);
}

#[test]
fn none_policy_counts_every_call_as_miss_and_matches_output() {
    let src = "module t
function main = |args| {
  var i = 0
  while i < 50 { i = i + 1 }
  println(i)
}";
    let (mut vm, buf) = vm_for(src, DispatchPolicy::None);
    vm.run_main(&main_args(&[])).unwrap();
    assert_eq!(String::from_utf8(buf.borrow().clone()).unwrap(), "50\n");
    let plus = vm
        .sites()
        .iter()
        .find(|s| &*s.name == "plus" && s.executed())
        .unwrap();
    let stats = plus.stats();
    assert_eq!(stats.hits, 0);
    assert_eq!(stats.misses, 50);
    assert_eq!(stats.relinks, 0);
    assert_eq!(stats.chain_depth, 0);
}

#[test]
fn stats_dump_is_sorted_and_formatted() {
    let (mut vm, _) = vm_for(
        "module t
function main = |args| { println(1 + 2) }",
        DispatchPolicy::Mono,
    );
    vm.run_main(&main_args(&[])).unwrap();
    let dump = vm.stats_dump();
    let mut last_id = -1i64;
    for line in dump.lines() {
        assert!(line.starts_with("site="), "{line}");
        let id: i64 = line
            .split_whitespace()
            .next()
            .unwrap()
            .trim_start_matches("site=")
            .parse()
            .unwrap();
        assert!(id > last_id, "dump not sorted by id");
        last_id = id;
        for field in ["kind=", "name=", "hits=", "misses=", "relinks=", "depth=", "mega="] {
            assert!(line.contains(field), "{line} missing {field}");
        }
    }
}

#[test]
fn profile_counts_fib_10_calls_exactly() {
    // Oracle: count the calls a naive fib(10) performs.
    fn calls(n: u64) -> u64 {
        if n <= 1 {
            1
        } else {
            1 + calls(n - 1) + calls(n - 2)
        }
    }
    let total_calls = calls(10);
    assert_eq!(total_calls, 177);

    let src = "module t
local function fib = |n| {
  if n <= 1 {
    return n
  } else {
    return fib(n - 1) + fib(n - 2)
  }
}
function main = |args| {
  println(fib(10))
}";
    let (engine, buf) = ast_for(src, AstConfig::default());
    engine.run_main(&main_args(&[])).unwrap();
    assert_eq!(String::from_utf8(buf.borrow().clone()).unwrap(), "55\n");

    let profile = engine.profile_dump();
    // The two recursive call nodes inside fib sum to all calls except the
    // root call from main.
    let fib_call_counts: Vec<u64> = profile
        .lines()
        .filter(|l| l.contains("  call  fib:"))
        .map(|l| l.split_whitespace().next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(fib_call_counts.len(), 2);
    assert_eq!(fib_call_counts.iter().sum::<u64>(), total_calls - 1);

    // The body root (block) counts every invocation of fib.
    let root_count: u64 = profile
        .lines()
        .filter(|l| l.contains("  block  fib:"))
        .map(|l| l.split_whitespace().next().unwrap().parse::<u64>().unwrap())
        .max()
        .unwrap();
    assert_eq!(root_count, total_calls);

    // Sorted by count descending.
    let counts: Vec<u64> = profile
        .lines()
        .map(|l| l.split_whitespace().next().unwrap().parse().unwrap())
        .collect();
    let mut sorted = counts.clone();
    sorted.sort_unstable_by(|a, b| b.cmp(a));
    assert_eq!(counts, sorted);
}

#[test]
fn straight_line_body_counts_once_per_statement() {
    let src = "module t
local function three = || {
  let a = 1
  let b = 2
  println(a + b)
}
function main = |args| { three() }";
    let (engine, _) = ast_for(src, AstConfig::default());
    engine.run_main(&main_args(&[])).unwrap();
    let profile = engine.profile_dump();
    let writes: Vec<&str> = profile
        .lines()
        .filter(|l| l.contains("  local-write  three:"))
        .collect();
    assert_eq!(writes.len(), 2);
    for line in writes {
        assert!(line.starts_with("1  "), "{line}");
    }
    let calls: Vec<&str> = profile
        .lines()
        .filter(|l| l.contains("  call  three:"))
        .collect();
    assert_eq!(calls.len(), 1);
    assert!(calls[0].starts_with("1  "));
}

#[test]
fn boxing_instrumentation_gcd_loop() {
    // All-Int gcd loop: zero boxed numerics when specialized, at least one
    // per iteration in generic mode.
    let iterations = 1000;
    let src = format!(
        "module t
local function gcd = |x, y| {{
  var a = x
  var b = y
  while b != 0 {{
    let t = a % b
    a = b
    b = t
  }}
  return a
}}
function main = |args| {{
  var i = 0
  var acc = 0
  while i < {iterations} {{
    acc = acc + gcd(1071, 462)
    i = i + 1
  }}
  if acc == 21 * {iterations} {{
    println(\"ok\")
  }} else {{
    println(\"fail\")
  }}
}}"
    );
    let (engine, buf) = ast_for(
        &src,
        AstConfig {
            instrument_boxing: true,
            ..AstConfig::default()
        },
    );
    engine.run_main(&main_args(&[])).unwrap();
    assert_eq!(String::from_utf8(buf.borrow().clone()).unwrap(), "ok\n");
    assert_eq!(engine.boxed_allocations(), 0, "specialized mode must not box");

    let (engine, buf) = ast_for(
        &src,
        AstConfig {
            instrument_boxing: true,
            specialize: false,
            ..AstConfig::default()
        },
    );
    engine.run_main(&main_args(&[])).unwrap();
    assert_eq!(String::from_utf8(buf.borrow().clone()).unwrap(), "ok\n");
    assert!(
        engine.boxed_allocations() >= iterations,
        "generic mode boxes per arithmetic evaluation: {} < {iterations}",
        engine.boxed_allocations()
    );
}

#[test]
fn binary_nodes_specialize_and_generalize_monotonically() {
    let src = "module t
function add = |a, b| -> a + b
function main = |args| { }";
    let (engine, _) = ast_for(src, AstConfig::default());
    let add = engine.function_named("add").unwrap();

    let state_of = |engine: &AstEngine| {
        engine
            .binary_states()
            .into_iter()
            .find(|(f, _)| &**f == "add")
            .unwrap()
            .1
    };
    assert_eq!(state_of(&engine), BinState::Uninit);

    let v = engine
        .call_by_index(add, &[Value::Int(1), Value::Int(2)])
        .unwrap();
    assert!(matches!(v, Value::Int(3)));
    assert_eq!(
        state_of(&engine),
        BinState::Spec(minigolo_core::Kind::Int, minigolo_core::Kind::Int)
    );

    // Same kinds: state holds.
    engine
        .call_by_index(add, &[Value::Int(5), Value::Int(6)])
        .unwrap();
    assert_eq!(
        state_of(&engine),
        BinState::Spec(minigolo_core::Kind::Int, minigolo_core::Kind::Int)
    );

    // Guard failure: the deopting evaluation still returns the right value.
    let v = engine
        .call_by_index(add, &[Value::Int(1), Value::Double(2.0)])
        .unwrap();
    assert!(matches!(v, Value::Double(d) if d == 3.0));
    assert_eq!(state_of(&engine), BinState::Generic);

    // Generic absorbs everything.
    let v = engine
        .call_by_index(add, &[Value::Int(1), Value::Int(2)])
        .unwrap();
    assert!(matches!(v, Value::Int(3)));
    assert_eq!(state_of(&engine), BinState::Generic);
}

#[test]
fn no_specialize_pins_nodes_generic() {
    let src = "module t
function add = |a, b| -> a + b
function main = |args| { }";
    let (engine, _) = ast_for(
        src,
        AstConfig {
            specialize: false,
            ..AstConfig::default()
        },
    );
    assert!(engine
        .binary_states()
        .iter()
        .all(|(_, s)| *s == BinState::Generic));
    let add = engine.function_named("add").unwrap();
    engine
        .call_by_index(add, &[Value::Int(1), Value::Int(2)])
        .unwrap();
    assert!(engine
        .binary_states()
        .iter()
        .all(|(_, s)| *s == BinState::Generic));
}

#[test]
fn dispatch_cache_shape_and_type_keyed() {
    // Same shape twice: depth stays 1. A third shape beyond depth D=2 makes
    // the node megamorphic.
    let src = "module t
struct Pt = { x, y }
local function poke = |o| -> o: val()
function main = |args| {
  let a = DynamicObject(): define(\"val\", 1)
  let b = DynamicObject(): define(\"val\", 2)
  println(poke(a))
  println(poke(b))
}";
    let (engine, buf) = ast_for(src, AstConfig::default());
    engine.run_main(&main_args(&[])).unwrap();
    assert_eq!(String::from_utf8(buf.borrow().clone()).unwrap(), "1\n2\n");
    let profile = engine.profile_dump();
    let line = profile
        .lines()
        .find(|l| l.contains("  method-call  poke:"))
        .unwrap();
    assert!(line.contains("state=cached(1)"), "{line}");

    // Struct getters cache by type name: every instance of the type hits.
    let src = "module t
struct Pt = { x, y }
local function getx = |p| -> p: x()
function main = |args| {
  println(getx(Pt(1, 2)))
  println(getx(Pt(3, 4)))
  println(getx(Pt(5, 6)))
}";
    let (engine, buf) = ast_for(src, AstConfig::default());
    engine.run_main(&main_args(&[])).unwrap();
    assert_eq!(
        String::from_utf8(buf.borrow().clone()).unwrap(),
        "1\n3\n5\n"
    );
    let profile = engine.profile_dump();
    let line = profile
        .lines()
        .find(|l| l.contains("  method-call  getx:"))
        .unwrap();
    assert!(line.contains("state=cached(1)"), "{line}");
}

#[test]
fn dispatch_cache_goes_megamorphic_past_depth() {
    // D+1 = 3 distinct receiver shapes through one node with depth 2.
    let src = "module t
local function poke = |o| -> o: val()
function main = |args| {
  let a = DynamicObject(): define(\"val\", 1)
  let b = DynamicObject(): define(\"pad\", 0): define(\"val\", 2)
  let c = DynamicObject(): define(\"x\", 0): define(\"y\", 0): define(\"val\", 3)
  println(poke(a))
  println(poke(b))
  println(poke(c))
  println(poke(a))
}";
    let (engine, buf) = ast_for(
        src,
        AstConfig {
            dispatch_depth: 2,
            ..AstConfig::default()
        },
    );
    engine.run_main(&main_args(&[])).unwrap();
    assert_eq!(
        String::from_utf8(buf.borrow().clone()).unwrap(),
        "1\n2\n3\n1\n"
    );
    let profile = engine.profile_dump();
    let line = profile
        .lines()
        .find(|l| l.contains("  method-call  poke:"))
        .unwrap();
    assert!(line.contains("state=mega"), "{line}");
}

#[test]
fn ast_engine_accepts_lifted_ir_too() {
    let program = compile_ok("lifted", FIB_SRC);
    let (sink, buf) = OutputSink::buffer();
    let engine = AstEngine::new(&program.lifted, AstConfig::default(), sink);
    engine.run_main(&main_args(&[])).unwrap();
    assert_eq!(String::from_utf8(buf.borrow().clone()).unwrap(), "832040\n");
}

#[test]
fn vm_error_trace_names_functions_and_instructions() {
    let src = "module t
local function inner = |x| -> x / 0
local function outer = |x| -> inner(x)
function main = |args| {
  println(outer(4))
}";
    let program = compile_ok("trace", src);
    let (sink, _) = OutputSink::buffer();
    let mut vm = Vm::new(Rc::clone(&program.image), VmConfig::default(), sink);
    let err = vm.run_main(&main_args(&[])).unwrap_err();
    assert_eq!(err.error, RuntimeError::DivisionByZero);
    let names: Vec<&str> = err.trace.iter().map(|(n, _)| &**n).collect();
    assert_eq!(names, vec!["inner", "outer", "main"]);
    let rendered = err.to_string();
    assert!(rendered.starts_with("error: division by zero"), "{rendered}");
    assert!(rendered.contains("at inner (instr"), "{rendered}");
}

#[test]
fn builtin_method_shadows_augmentation_of_the_same_name() {
    let src = "module t
augment List {
  function size = |self| -> 999
  function flavor = |self| -> \"augmented\"
}
function main = |args| {
  let l = list[1, 2]
  println(l: size())
  println(l: flavor())
}";
    let program = compile_ok("shadow", src);
    for config in [
        EngineConfig::Vm(DispatchPolicy::Mono),
        EngineConfig::Ast { specialize: true },
    ] {
        let (out, exit) = run_config(&program, config);
        assert_eq!(exit, 0);
        assert_eq!(out, "2\naugmented\n", "tier order under {}", config.label());
    }
}

#[test]
fn method_lookup_tier_order_and_registration() {
    use minigolo_core::object::{method_lookup, MethodTarget};
    use minigolo_core::runtime::RuntimeCtx;
    use minigolo_core::value::DynamicObject;
    use std::rc::Rc as StdRc;

    let (sink, _) = OutputSink::buffer();
    let mut ctx = RuntimeCtx::new(sink);
    ctx.register_augmentation(StdRc::from("Int"), StdRc::from("twice"), 7);
    ctx.register_augmentation(StdRc::from("Int"), StdRc::from("toDouble"), 9);
    // Last registration for the same key wins.
    ctx.register_augmentation(StdRc::from("Int"), StdRc::from("twice"), 8);

    let t = method_lookup(&ctx, &Value::Int(3), "twice", 0).unwrap();
    assert!(matches!(t.target, MethodTarget::Augment(8)));
    // Tier 1 shadows tier 4 for the same name.
    let t = method_lookup(&ctx, &Value::Int(3), "toDouble", 0).unwrap();
    assert!(matches!(t.target, MethodTarget::Builtin(_)));
    // All four tiers miss: error names the receiver type.
    let err = method_lookup(&ctx, &Value::Int(3), "missing", 2).unwrap_err();
    assert!(err.to_string().contains("Int"));
    assert!(err.to_string().contains("missing/2"));

    // Dynamic object property definition via argc=1 on an absent name.
    let obj = Value::Object(StdRc::new(DynamicObject::new(&ctx.shapes)));
    let t = method_lookup(&ctx, &obj, "fresh", 1).unwrap();
    assert!(matches!(t.target, MethodTarget::ObjectDefine(_)));
    // Absent name with argc 0 falls through to a miss.
    assert!(method_lookup(&ctx, &obj, "fresh", 0).is_err());
}
