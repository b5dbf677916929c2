//! Micro-benchmark harness: fib, gcd, and filter/map/reduce suites, written
//! in the language itself and executed through the normal pipeline on both
//! engines. Each suite validates its computed result against an oracle
//! before any timing; correctness precedes speed.

use std::fmt::Write as _;
use std::rc::Rc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::callsite::DispatchPolicy;
use crate::interp::{AstConfig, AstEngine};
use crate::pipeline::{compile_source, main_args};
use crate::runtime::OutputSink;
use crate::vm::{Vm, VmConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Suite {
    Fib,
    Gcd,
    Fmr,
}

impl Suite {
    pub fn label(self) -> &'static str {
        match self {
            Suite::Fib => "fib",
            Suite::Gcd => "gcd",
            Suite::Fmr => "fmr",
        }
    }

    pub fn parse(text: &str) -> Option<Vec<Suite>> {
        match text {
            "fib" => Some(vec![Suite::Fib]),
            "gcd" => Some(vec![Suite::Gcd]),
            "fmr" => Some(vec![Suite::Fmr]),
            "all" => Some(vec![Suite::Fib, Suite::Gcd, Suite::Fmr]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EngineSel {
    Bytecode,
    Ast,
}

impl EngineSel {
    pub fn label(self) -> &'static str {
        match self {
            EngineSel::Bytecode => "bytecode",
            EngineSel::Ast => "ast",
        }
    }

    pub fn parse(text: &str) -> Option<Vec<EngineSel>> {
        match text {
            "bytecode" => Some(vec![EngineSel::Bytecode]),
            "ast" => Some(vec![EngineSel::Ast]),
            "all" => Some(vec![EngineSel::Bytecode, EngineSel::Ast]),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub suites: Vec<Suite>,
    pub engines: Vec<EngineSel>,
    pub warmup: u32,
    pub runs: u32,
    pub fib_n: u32,
    pub gcd_pairs: usize,
    pub fmr_n: i32,
}

impl Default for BenchConfig {
    fn default() -> Self {
        BenchConfig {
            suites: vec![Suite::Fib, Suite::Gcd, Suite::Fmr],
            engines: vec![EngineSel::Bytecode],
            warmup: 3,
            runs: 10,
            fib_n: 25,
            gcd_pairs: 1000,
            fmr_n: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRow {
    pub suite: String,
    pub engine: String,
    pub policy: String,
    pub param: String,
    pub iterations: u32,
    pub median_ns: u64,
    pub p10_ns: u64,
    pub p90_ns: u64,
}

pub const GCD_SEED: u64 = 42;

/// The fixed pseudo-random gcd input pairs: ChaCha8 stream, seed 42, values
/// uniform in [1, 10^9].
pub fn gcd_pairs(count: usize, seed: u64) -> Vec<(i32, i32)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            (
                rng.gen_range(1..=1_000_000_000),
                rng.gen_range(1..=1_000_000_000),
            )
        })
        .collect()
}

pub fn fib_program(n: u32) -> String {
    format!(
        "module bench.fib

local function fib = |n| {{
  if n <= 1 {{
    return n
  }} else {{
    return fib(n - 1) + fib(n - 2)
  }}
}}

function main = |args| {{
  println(fib({n}))
}}
"
    )
}

pub fn gcd_program(pairs: &[(i32, i32)]) -> String {
    let mut flat = String::new();
    for (i, (a, b)) in pairs.iter().enumerate() {
        if i > 0 {
            flat.push_str(", ");
        }
        let _ = write!(flat, "{a}, {b}");
    }
    format!(
        "module bench.gcd

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
  let pairs = list[{flat}]
  var i = 0
  var acc = 0
  while i < {} {{
    acc = acc + gcd(pairs: get(i), pairs: get(i + 1))
    i = i + 2
  }}
  println(acc)
}}
",
        pairs.len() * 2
    )
}

pub fn fmr_program(n: i32) -> String {
    format!(
        "module bench.fmr

function main = |args| {{
  let result = range(0, {n}): filter(|x| -> x % 2 == 0): map(|x| -> x * x): reduce(0, |acc, x| -> acc + x)
  println(result)
}}
"
    )
}

pub fn fib_oracle(n: u32) -> i64 {
    let (mut a, mut b) = (0i64, 1i64);
    for _ in 0..n {
        let next = a + b;
        a = b;
        b = next;
    }
    a
}

pub fn gcd_oracle(mut a: i64, mut b: i64) -> i64 {
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

/// Expected gcd-suite output: wrapping 32-bit sum of the pair gcds, matching
/// Int arithmetic in the language.
pub fn gcd_sum_oracle(pairs: &[(i32, i32)]) -> i32 {
    let mut acc = 0i32;
    for (a, b) in pairs {
        acc = acc.wrapping_add(gcd_oracle(i64::from(*a), i64::from(*b)) as i32);
    }
    acc
}

/// Expected fmr-suite output: wrapping 32-bit sum of squares of the even
/// numbers below n.
pub fn fmr_oracle(n: i32) -> i32 {
    let mut acc = 0i32;
    let mut x = 0i32;
    while x < n {
        if x % 2 == 0 {
            acc = acc.wrapping_add(x.wrapping_mul(x));
        }
        x += 1;
    }
    acc
}

fn percentile(sorted: &[u64], q: f64) -> u64 {
    if sorted.len() == 1 {
        return sorted[0];
    }
    let rank = q * (sorted.len() - 1) as f64;
    let lo = rank.floor() as usize;
    let hi = rank.ceil() as usize;
    let frac = rank - lo as f64;
    (sorted[lo] as f64 * (1.0 - frac) + sorted[hi] as f64 * frac).round() as u64
}

enum Runner {
    Vm(Box<Vm>),
    Ast(Box<AstEngine>),
}

impl Runner {
    fn run(&mut self) -> Result<(), String> {
        let args = main_args(&[]);
        match self {
            Runner::Vm(vm) => vm.run_main(&args).map(|_| ()).map_err(|e| e.to_string()),
            Runner::Ast(engine) => engine.run_main(&args).map(|_| ()).map_err(|e| e.to_string()),
        }
    }
}

struct Workload {
    suite: Suite,
    source: String,
    param: String,
    expected_output: String,
}

fn workload(suite: Suite, config: &BenchConfig) -> Workload {
    match suite {
        Suite::Fib => Workload {
            suite,
            source: fib_program(config.fib_n),
            param: format!("n={}", config.fib_n),
            expected_output: format!("{}\n", fib_oracle(config.fib_n)),
        },
        Suite::Gcd => {
            let pairs = gcd_pairs(config.gcd_pairs, GCD_SEED);
            Workload {
                suite,
                source: gcd_program(&pairs),
                param: format!("seed={GCD_SEED};pairs={}", config.gcd_pairs),
                expected_output: format!("{}\n", gcd_sum_oracle(&pairs)),
            }
        }
        Suite::Fmr => Workload {
            suite,
            source: fmr_program(config.fmr_n),
            param: format!("n={}", config.fmr_n),
            expected_output: format!("{}\n", fmr_oracle(config.fmr_n)),
        },
    }
}

fn bytecode_policies() -> Vec<DispatchPolicy> {
    vec![
        DispatchPolicy::Mono,
        DispatchPolicy::None,
        DispatchPolicy::Poly(2),
    ]
}

fn ast_policies() -> Vec<(&'static str, bool)> {
    vec![("generic", false), ("specialized", true)]
}

/// Runs the configured suite/engine/policy grid. Timing wraps only the
/// program-execution call; compilation happens once per combination, and the
/// engine (with its inline caches and specialization state) persists across
/// warmup and measured runs.
pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRow>, String> {
    let mut rows = Vec::new();
    for &suite in &config.suites {
        let w = workload(suite, config);
        let program = compile_source(&w.source).map_err(|e| e.to_string())?;
        for &engine in &config.engines {
            match engine {
                EngineSel::Bytecode => {
                    for policy in bytecode_policies() {
                        let (sink, buf) = OutputSink::buffer();
                        let vm = Vm::new(
                            Rc::clone(&program.image),
                            VmConfig {
                                policy,
                                ..VmConfig::default()
                            },
                            sink,
                        );
                        let mut runner = Runner::Vm(Box::new(vm));
                        let times = measure(&mut runner, &buf, &w.expected_output, config)?;
                        rows.push(make_row(&w, engine, policy.label(), config, times));
                    }
                }
                EngineSel::Ast => {
                    for (label, specialize) in ast_policies() {
                        let (sink, buf) = OutputSink::buffer();
                        let eng = AstEngine::new(
                            &program.ir,
                            AstConfig {
                                specialize,
                                ..AstConfig::default()
                            },
                            sink,
                        );
                        let mut runner = Runner::Ast(Box::new(eng));
                        let times = measure(&mut runner, &buf, &w.expected_output, config)?;
                        rows.push(make_row(&w, engine, label.to_string(), config, times));
                    }
                }
            }
        }
    }
    rows.sort_by(|a, b| {
        (&a.suite, &a.engine, &a.policy).cmp(&(&b.suite, &b.engine, &b.policy))
    });
    Ok(rows)
}

fn measure(
    runner: &mut Runner,
    buf: &Rc<std::cell::RefCell<Vec<u8>>>,
    expected: &str,
    config: &BenchConfig,
) -> Result<Vec<u64>, String> {
    let check = |buf: &Rc<std::cell::RefCell<Vec<u8>>>| -> Result<(), String> {
        let got = String::from_utf8_lossy(&buf.borrow()).to_string();
        if got != expected {
            return Err(format!(
                "benchmark result mismatch: expected {expected:?}, got {got:?}"
            ));
        }
        Ok(())
    };
    // Oracle validation run, before any timing.
    buf.borrow_mut().clear();
    runner.run()?;
    check(buf)?;
    for _ in 0..config.warmup {
        buf.borrow_mut().clear();
        runner.run()?;
    }
    let mut times = Vec::with_capacity(config.runs as usize);
    for _ in 0..config.runs {
        buf.borrow_mut().clear();
        let start = Instant::now();
        runner.run()?;
        times.push(start.elapsed().as_nanos() as u64);
        check(buf)?;
    }
    Ok(times)
}

fn make_row(
    w: &Workload,
    engine: EngineSel,
    policy: String,
    config: &BenchConfig,
    mut times: Vec<u64>,
) -> BenchRow {
    times.sort_unstable();
    BenchRow {
        suite: w.suite.label().to_string(),
        engine: engine.label().to_string(),
        policy,
        param: w.param.clone(),
        iterations: config.runs,
        median_ns: percentile(&times, 0.5),
        p10_ns: percentile(&times, 0.1),
        p90_ns: percentile(&times, 0.9),
    }
}

pub fn emit_csv(rows: &[BenchRow]) -> String {
    let mut out = String::from("suite,engine,policy,param,iterations,median_ns,p10_ns,p90_ns\n");
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.suite, r.engine, r.policy, r.param, r.iterations, r.median_ns, r.p10_ns, r.p90_ns
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fib_oracle_matches_known_values() {
        assert_eq!(fib_oracle(10), 55);
        assert_eq!(fib_oracle(30), 832_040);
        assert_eq!(fib_oracle(35), 9_227_465);
    }

    #[test]
    fn gcd_oracle_euclid() {
        assert_eq!(gcd_oracle(1071, 462), 21);
        assert_eq!(gcd_oracle(462, 1071), 21);
    }

    #[test]
    fn fmr_oracle_small() {
        // evens below 10: 0,2,4,6,8 -> squares sum 120
        assert_eq!(fmr_oracle(10), 120);
    }

    #[test]
    fn gcd_pairs_deterministic() {
        let a = gcd_pairs(5, GCD_SEED);
        let b = gcd_pairs(5, GCD_SEED);
        assert_eq!(a, b);
        assert!(a.iter().all(|(x, y)| *x >= 1 && *y >= 1));
    }

    #[test]
    fn percentiles_ordered() {
        let times = vec![5, 1, 4, 2, 3];
        let mut sorted = times.clone();
        sorted.sort_unstable();
        let p10 = percentile(&sorted, 0.1);
        let p50 = percentile(&sorted, 0.5);
        let p90 = percentile(&sorted, 0.9);
        assert!(p10 <= p50 && p50 <= p90);
        assert_eq!(p50, 3);
    }

    #[test]
    fn csv_header_only_for_empty_rows() {
        assert_eq!(
            emit_csv(&[]),
            "suite,engine,policy,param,iterations,median_ns,p10_ns,p90_ns\n"
        );
    }
}
