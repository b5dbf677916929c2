//! Closure-lifting and slot-allocation behavior: lambda-free trees,
//! deterministic dense synthetic naming, capture layouts, and slot rules.

mod common;

use common::corpus_files;
use minigolo_core::ir::{lower, IrBlock, IrExpr, IrModule, IrStmt};
use minigolo_core::lexer::tokenize;
use minigolo_core::parser::parse_program;
use minigolo_core::passes::{allocate_slots, check_references, lift_closures};

fn modules_of(source: &str) -> Vec<IrModule> {
    let tokens = tokenize(source).unwrap();
    parse_program(&tokens).unwrap().iter().map(lower).collect()
}

fn count_lambdas_block(b: &IrBlock) -> usize {
    b.stmts.iter().map(count_lambdas_stmt).sum()
}

fn count_lambdas_stmt(s: &IrStmt) -> usize {
    match s {
        IrStmt::Let { value, .. } | IrStmt::Var { value, .. } | IrStmt::Assign { value, .. } => {
            count_lambdas_expr(value)
        }
        IrStmt::If { cond, then, alt, .. } => {
            count_lambdas_expr(cond)
                + count_lambdas_block(then)
                + alt.as_ref().map_or(0, count_lambdas_block)
        }
        IrStmt::While { cond, body, .. } => count_lambdas_expr(cond) + count_lambdas_block(body),
        IrStmt::Return { value, .. } => value.as_ref().map_or(0, count_lambdas_expr),
        IrStmt::Expr(e) => count_lambdas_expr(e),
    }
}

fn count_lambdas_expr(e: &IrExpr) -> usize {
    match e {
        IrExpr::Lambda(lam) => 1 + count_lambdas_block(&lam.body),
        IrExpr::Binary { lhs, rhs, .. } => count_lambdas_expr(lhs) + count_lambdas_expr(rhs),
        IrExpr::Unary { expr, .. } => count_lambdas_expr(expr),
        IrExpr::Call { args, .. } => args.iter().map(count_lambdas_expr).sum(),
        IrExpr::MethodCall { recv, args, .. } => {
            count_lambdas_expr(recv) + args.iter().map(count_lambdas_expr).sum::<usize>()
        }
        IrExpr::TupleLit(items, _) | IrExpr::ListLit(items, _) => {
            items.iter().map(count_lambdas_expr).sum()
        }
        _ => 0,
    }
}

#[test]
fn lifting_leaves_no_lambda_nodes_and_counts_match() {
    for (name, source) in &corpus_files("ok") {
        for module in &modules_of(source) {
            let lambda_count: usize = module
                .functions
                .iter()
                .map(|f| count_lambdas_block(&f.body))
                .sum();
            let lifted = lift_closures(module).unwrap_or_else(|e| panic!("{name}: {e}"));
            let residual: usize = lifted
                .functions
                .iter()
                .map(|f| count_lambdas_block(&f.body))
                .sum();
            assert_eq!(residual, 0, "{name}: lambda survived lifting");
            let synthetic = lifted.functions.iter().filter(|f| f.synthetic).count();
            assert_eq!(
                synthetic, lambda_count,
                "{name}: one synthetic function per lambda"
            );
        }
    }
}

#[test]
fn synthetic_names_are_dense_and_deterministic() {
    for (name, source) in &corpus_files("ok") {
        for module in &modules_of(source) {
            let lifted = lift_closures(module).unwrap();
            let names: Vec<String> = lifted
                .functions
                .iter()
                .filter(|f| f.synthetic)
                .map(|f| f.name.to_string())
                .collect();
            for (i, n) in names.iter().enumerate() {
                assert_eq!(n, &format!("__lambda${i}"), "{name}: dense numbering");
            }
            let again = lift_closures(module).unwrap();
            let names2: Vec<String> = again
                .functions
                .iter()
                .filter(|f| f.synthetic)
                .map(|f| f.name.to_string())
                .collect();
            assert_eq!(names, names2, "{name}: nondeterministic synthetic names");
        }
    }
}

#[test]
fn nested_lambdas_capture_transitively() {
    // The middle lambda needs `a` only to feed the inner one; it must still
    // capture it. Hand count: three lambdas, so three synthetics.
    let src = "module m
function main = |args| {
  let a = 5
  let outer = |b| {
    let middle = |c| {
      let inner = || -> a + b + c
      return inner()
    }
    return middle(100)
  }
  println(outer(10))
}";
    let modules = modules_of(src);
    assert!(check_references(&modules).is_empty());
    let lifted = lift_closures(&modules[0]).unwrap();
    let synthetics: Vec<_> = lifted.functions.iter().filter(|f| f.synthetic).collect();
    assert_eq!(synthetics.len(), 3);
    // Source order: outer = $0, middle = $1, inner = $2.
    let outer = synthetics.iter().find(|f| &*f.name == "__lambda$0").unwrap();
    assert_eq!(outer.capture_count, 1); // a
    assert_eq!(outer.params.len(), 2); // a, b
    let middle = synthetics.iter().find(|f| &*f.name == "__lambda$1").unwrap();
    assert_eq!(middle.capture_count, 2); // a, b
    let inner = synthetics.iter().find(|f| &*f.name == "__lambda$2").unwrap();
    assert_eq!(inner.capture_count, 3); // a, b, c
    assert_eq!(inner.params.len(), 3);
}

#[test]
fn zero_capture_lambda() {
    let src = "module m
function main = |args| {
  let f = |x| -> x + 1
  println(f(1))
}";
    let lifted = lift_closures(&modules_of(src)[0]).unwrap();
    let synth = lifted.functions.iter().find(|f| f.synthetic).unwrap();
    assert_eq!(synth.name.as_ref(), "__lambda$0");
    assert_eq!(synth.capture_count, 0);
    assert_eq!(synth.params.len(), 1);
}

#[test]
fn assigning_to_a_captured_var_is_a_capture_error() {
    let src = "module m
function main = |args| {
  var counter = 0
  let bump = || { counter = counter + 1 }
  bump()
}";
    let err = lift_closures(&modules_of(src)[0]).unwrap_err();
    assert_eq!(err.name, "counter");
    assert_eq!(err.pos.line, 4);

    // Rebinding the name inside the lambda makes the write local and legal.
    let src = "module m
function main = |args| {
  var counter = 0
  let bump = || { var counter = 10 counter = counter + 1 return counter }
  println(bump())
  println(counter)
}";
    assert!(lift_closures(&modules_of(src)[0]).is_ok());
}

#[test]
fn slot_allocation_rules() {
    let src = "module m
function f = |a, b| {
  let c = a + b
  return c
}
function g = |x| {
  if x > 0 {
    let y = 1
    println(y)
  } else {
    let z = 2
    println(z)
  }
  let after = 3
  return after
}
function no_locals = |p, q| -> p + q";
    let module = &modules_of(src)[0];
    let lifted = lift_closures(module).unwrap();

    // f(a, b) with one let: slots a=0, b=1, c=2.
    let f = allocate_slots(&lifted.functions[0]);
    assert_eq!(f.local_slots, 3);
    let IrStmt::Let { slot, .. } = &f.body.stmts[0] else { panic!() };
    assert_eq!(*slot, Some(2));

    // Sibling scopes never share slots.
    let g = allocate_slots(&lifted.functions[1]);
    assert_eq!(g.local_slots, 4); // x, y, z, after

    // No locals: slot count equals param count.
    let h = allocate_slots(&lifted.functions[2]);
    assert_eq!(h.local_slots, 2);
}

#[test]
fn shadowing_gets_distinct_slots() {
    let src = "module m
function f = |x| {
  let a = 1
  if x > 0 {
    let a = 2
    println(a)
  }
  return a
}";
    let module = &modules_of(src)[0];
    let f = allocate_slots(&module.functions[0]);
    assert_eq!(f.local_slots, 3); // x, outer a, inner a
    let IrStmt::Let { slot: outer, .. } = &f.body.stmts[0] else { panic!() };
    let IrStmt::If { then, .. } = &f.body.stmts[1] else { panic!() };
    let IrStmt::Let { slot: inner, .. } = &then.stmts[0] else { panic!() };
    assert_ne!(outer, inner);
    // The trailing `return a` refers to the outer slot.
    let IrStmt::Return { value: Some(IrExpr::Reference { slot, .. }), .. } = &f.body.stmts[2]
    else {
        panic!()
    };
    assert_eq!(slot, outer);
}
