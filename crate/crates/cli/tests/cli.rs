//! Binary-level checks: exit codes, flag validation, emit stages, dump
//! routing, and the bench CSV contract.

use std::path::PathBuf;
use std::process::{Command, Output};

fn minigolo() -> Command {
    Command::new(env!("CARGO_BIN_EXE_minigolo"))
}

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn corpus(category: &str, name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/corpus")
        .join(category)
        .join(name)
}

fn write_temp(name: &str, content: &str) -> PathBuf {
    let dir = std::env::temp_dir().join("minigolo-cli-tests");
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join(name);
    std::fs::write(&path, content).unwrap();
    path
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

#[test]
fn run_executes_and_prints_program_output() {
    let path = corpus("ok", "gcd_euclid.golo");
    for engine in ["bytecode", "ast"] {
        let out = minigolo().arg("run").arg(&path).args(["--engine", engine]).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{engine}: {}", stderr_of(&out));
        assert_eq!(stdout_of(&out), "21\n21\n1\n10\n6\n", "{engine}");
    }
}

#[test]
fn run_is_deterministic_across_invocations() {
    let path = corpus("ok", "fib_sequential.golo");
    let a = minigolo().arg("run").arg(&path).output().unwrap();
    let b = minigolo().arg("run").arg(&path).output().unwrap();
    assert_eq!(stdout_of(&a), stdout_of(&b));
    assert_eq!(a.status.code(), b.status.code());
}

#[test]
fn runtime_error_exits_1_with_kind_detail_and_trace() {
    let path = corpus("runtime-error", "div_zero.golo");
    let out = minigolo().arg("run").arg(&path).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert_eq!(stdout_of(&out), "before\n", "partial output precedes the error");
    let err = stderr_of(&out);
    assert!(err.starts_with("error: division by zero:"), "{err}");
    assert!(err.contains("  at main (instr "), "{err}");

    // The tree engine reports positions instead of instruction indices.
    let out = minigolo().arg("run").arg(&path).args(["--engine", "ast"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.starts_with("error: division by zero:"), "{err}");
    assert!(err.contains("  at main ("), "{err}");
}

#[test]
fn compile_error_exits_2_with_position() {
    let out = minigolo()
        .arg("run")
        .arg(corpus("bad-syntax", "unbalanced.golo"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let err = stderr_of(&out);
    assert!(err.contains("error: expected"), "{err}");
    assert!(err.contains(":1:"), "{err}");
}

#[test]
fn usage_errors_exit_64() {
    // Unknown subcommand / flag.
    let out = minigolo().arg("frobnicate").output().unwrap();
    assert_eq!(out.status.code(), Some(64));
    let out = minigolo().args(["run", "nope.golo", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(64));
    // Missing file.
    let out = minigolo().args(["run", "definitely-not-here.golo"]).output().unwrap();
    assert_eq!(out.status.code(), Some(64));
    // Engine/flag mismatches.
    let path = corpus("ok", "gcd_euclid.golo");
    let out = minigolo()
        .arg("run")
        .arg(&path)
        .args(["--engine", "ast", "--cache-policy", "mono"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(64));
    let out = minigolo().arg("run").arg(&path).arg("--no-specialize").output().unwrap();
    assert_eq!(out.status.code(), Some(64));
    // Bad values.
    let out = minigolo()
        .arg("run")
        .arg(&path)
        .args(["--cache-policy", "poly:0"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(64));
    let out = minigolo().args(["bench", "--suite", "nope"]).output().unwrap();
    assert_eq!(out.status.code(), Some(64));
    let out = minigolo().args(["compile", "x.golo", "--emit", "wat"]).output().unwrap();
    assert_eq!(out.status.code(), Some(64));
}

#[test]
fn emit_tokens_matches_reference_fragment() {
    let path = write_temp("mixed_add.golo", "10 + 10_L");
    let out = minigolo().arg("compile").arg(&path).args(["--emit", "tokens"]).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(
        stdout_of(&out),
        "1:1 int-literal 10\n1:4 operator +\n1:6 long-literal 10_L\n1:10 eof\n"
    );
}

#[test]
fn emit_stages_produce_their_dumps() {
    let path = corpus("ok", "fib_sequential.golo");
    let out = minigolo().arg("compile").arg(&path).args(["--emit", "ast"]).output().unwrap();
    assert!(stdout_of(&out).contains("Function fib local"));

    let out = minigolo().arg("compile").arg(&path).args(["--emit", "ir"]).output().unwrap();
    let ir = stdout_of(&out);
    assert!(ir.contains("__lambda$0"), "lifted IR names synthetics: {ir}");
    assert!(ir.contains("slot="));

    let out = minigolo().arg("compile").arg(&path).args(["--emit", "bytecode"]).output().unwrap();
    let disasm = stdout_of(&out);
    assert!(disasm.contains("== fib/1 locals=1"));
    assert!(disasm.contains("CALL_OPERATOR site="));

    // Front-end failure during emit: exit 2.
    let out = minigolo()
        .arg("compile")
        .arg(corpus("bad-syntax", "unbalanced.golo"))
        .args(["--emit", "bytecode"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn dumps_go_to_stderr_not_stdout() {
    let path = fixture("ic_mono_loop.golo");
    let out = minigolo().arg("run").arg(&path).arg("--dump-dispatch-stats").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(!stdout_of(&out).contains("site="), "stats polluted stdout");
    assert!(stderr_of(&out).contains("site=0"), "{}", stderr_of(&out));

    let out = minigolo()
        .arg("run")
        .arg(&path)
        .args(["--engine", "ast", "--dump-profile", "--instrument-boxing"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let err = stderr_of(&out);
    assert!(err.contains("loop"), "profile on stderr: {err}");
    // The loop itself runs unboxed; println boxes its argument once.
    assert!(err.contains("boxed-allocations: 1"), "{err}");
    assert!(!stdout_of(&out).contains("boxed-allocations"));
}

#[test]
fn bench_emits_csv_with_deterministic_ordering() {
    let out = minigolo()
        .args([
            "bench", "--suite", "fmr", "--engine", "all", "--runs", "2", "--warmup", "0",
            "--fmr-n", "1000",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", stderr_of(&out));
    let csv = stdout_of(&out);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines[0], "suite,engine,policy,param,iterations,median_ns,p10_ns,p90_ns");
    // 1 suite x (ast: generic+specialized, bytecode: mono+none+poly:2).
    assert_eq!(lines.len(), 1 + 5);
    let configs: Vec<(String, String)> = lines[1..]
        .iter()
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].to_string())
        })
        .collect();
    let mut sorted = configs.clone();
    sorted.sort();
    assert_eq!(configs, sorted, "rows must sort by (suite, engine, policy)");
    for line in &lines[1..] {
        let f: Vec<&str> = line.split(',').collect();
        let (p10, median, p90): (u64, u64, u64) =
            (f[6].parse().unwrap(), f[5].parse().unwrap(), f[7].parse().unwrap());
        assert!(p10 <= median && median <= p90, "{line}");
        assert_eq!(f[3], "n=1000");
        assert_eq!(f[4], "2");
    }

    // --csv writes the same payload to a file.
    let path = std::env::temp_dir().join("minigolo-cli-tests").join("bench.csv");
    std::fs::create_dir_all(path.parent().unwrap()).unwrap();
    let out = minigolo()
        .args(["bench", "--suite", "fmr", "--runs", "1", "--warmup", "0", "--fmr-n", "100"])
        .arg("--csv")
        .arg(&path)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(stdout_of(&out).is_empty());
    let written = std::fs::read_to_string(&path).unwrap();
    assert!(written.starts_with("suite,engine,policy,"));
    assert_eq!(written.lines().count(), 1 + 3);
}

#[test]
fn print_flushes_on_exit() {
    let path = write_temp(
        "prints.golo",
        "module t\nfunction main = |args| { print(\"a\") print(\"b\") }",
    );
    let out = minigolo().arg("run").arg(&path).output().unwrap();
    assert_eq!(stdout_of(&out), "ab");
}

#[test]
fn run_flagship_program_end_to_end() {
    let path = fixture("fig1_seq.golo");
    for engine in ["bytecode", "ast"] {
        let out = minigolo().arg("run").arg(&path).args(["--engine", engine]).output().unwrap();
        assert_eq!(out.status.code(), Some(0), "{engine}: {}", stderr_of(&out));
        assert_eq!(
            stdout_of(&out),
            "Results:\n30 -> 832040\n34 -> 5702887\n35 -> 9227465\n\n",
            "{engine}"
        );
    }
}
