//! `minigolo` command-line driver.
//!
//! Exit codes: 0 success, 1 runtime error, 2 compile/parse error, 64 usage
//! error.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::rc::Rc;

use clap::{Args, Parser, Subcommand};

use minigolo_core::bench::{run_bench, BenchConfig, EngineSel, Suite};
use minigolo_core::callsite::DispatchPolicy;
use minigolo_core::interp::{AstConfig, AstEngine};
use minigolo_core::ir::render_ir;
use minigolo_core::lexer::render_tokens;
use minigolo_core::pipeline::{
    compile_source, main_args, parse_source, tokenize_source, FrontendError, Program,
};
use minigolo_core::runtime::OutputSink;
use minigolo_core::vm::{Vm, VmConfig};

const EXIT_RUNTIME: u8 = 1;
const EXIT_COMPILE: u8 = 2;
const EXIT_USAGE: u8 = 64;

#[derive(Parser)]
#[command(name = "minigolo", disable_help_subcommand = true)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compile and execute a program.
    Run(RunArgs),
    /// Compile a program and print one pipeline stage.
    Compile(CompileArgs),
    /// Run the micro-benchmark suites and emit CSV.
    Bench(BenchArgs),
}

#[derive(Args)]
struct RunArgs {
    file: PathBuf,
    /// Execution engine: bytecode | ast
    #[arg(long, default_value = "bytecode")]
    engine: String,
    /// Call-site relinking policy (bytecode engine): mono | poly:<k> | none
    #[arg(long)]
    cache_policy: Option<String>,
    /// Pin tree-interpreter nodes generic (ast engine baseline).
    #[arg(long)]
    no_specialize: bool,
    /// Dispatch-node inline cache depth (ast engine).
    #[arg(long)]
    dispatch_depth: Option<usize>,
    /// Print per-site dispatch counters to stderr after the run (bytecode).
    #[arg(long)]
    dump_dispatch_stats: bool,
    /// Print node execution counters to stderr after the run (ast).
    #[arg(long)]
    dump_profile: bool,
    /// Count boxed numeric allocations and report them on exit (ast).
    #[arg(long)]
    instrument_boxing: bool,
}

#[derive(Args)]
struct CompileArgs {
    file: PathBuf,
    /// Stage to print: tokens | ast | ir | bytecode
    #[arg(long)]
    emit: String,
}

#[derive(Args)]
struct BenchArgs {
    /// fib | gcd | fmr | all
    #[arg(long, default_value = "all")]
    suite: String,
    /// bytecode | ast | all
    #[arg(long, default_value = "bytecode")]
    engine: String,
    #[arg(long, default_value_t = 3)]
    warmup: u32,
    #[arg(long, default_value_t = 10)]
    runs: u32,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    csv: Option<PathBuf>,
    #[arg(long, default_value_t = 25)]
    fib_n: u32,
    #[arg(long, default_value_t = 1000)]
    gcd_pairs: usize,
    #[arg(long, default_value_t = 100_000)]
    fmr_n: i32,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            eprint!("{e}");
            return ExitCode::from(EXIT_USAGE);
        }
    };
    match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::Compile(args) => cmd_compile(args),
        Command::Bench(args) => cmd_bench(args),
    }
}

fn usage_error(message: &str) -> ExitCode {
    eprintln!("error: {message}");
    ExitCode::from(EXIT_USAGE)
}

fn read_source(path: &Path) -> Result<String, ExitCode> {
    std::fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read {}: {e}", path.display());
        ExitCode::from(EXIT_USAGE)
    })
}

/// Front-end failures print `<path>:<line>:<col>: error: <message>` lines.
fn report_frontend(path: &Path, err: &FrontendError) -> ExitCode {
    let p = path.display();
    match err {
        FrontendError::Lex(e) => eprintln!("{p}:{}: error: {}", e.pos, e.message),
        FrontendError::Parse(e) => {
            eprintln!("{p}:{}: error: expected {}, found {}", e.pos, e.expected, e.found)
        }
        FrontendError::Check(diagnostics) => {
            for d in diagnostics {
                eprintln!("{p}:{}: error: {}", d.pos, d.message);
            }
        }
        FrontendError::Capture(e) => {
            eprintln!("{p}:{}: error: assignment to captured variable: {}", e.pos, e.name)
        }
        FrontendError::Compile(e) => eprintln!("{p}: error: {e}"),
    }
    ExitCode::from(EXIT_COMPILE)
}

fn cmd_run(args: RunArgs) -> ExitCode {
    let ast_flags_used = args.no_specialize
        || args.dispatch_depth.is_some()
        || args.dump_profile
        || args.instrument_boxing;
    match args.engine.as_str() {
        "bytecode" => {
            if ast_flags_used {
                return usage_error(
                    "--no-specialize/--dispatch-depth/--dump-profile/--instrument-boxing require --engine ast",
                );
            }
        }
        "ast" => {
            if args.cache_policy.is_some() || args.dump_dispatch_stats {
                return usage_error(
                    "--cache-policy/--dump-dispatch-stats require --engine bytecode",
                );
            }
        }
        other => return usage_error(&format!("unknown engine: {other}")),
    }
    let policy = match &args.cache_policy {
        None => DispatchPolicy::Mono,
        Some(text) => match DispatchPolicy::parse(text) {
            Some(p) => p,
            None => return usage_error(&format!("unknown cache policy: {text}")),
        },
    };

    let source = match read_source(&args.file) {
        Ok(s) => s,
        Err(code) => return code,
    };

    if args.engine == "bytecode" {
        let program = match compile_source(&source) {
            Ok(p) => p,
            Err(e) => return report_frontend(&args.file, &e),
        };
        let config = VmConfig {
            policy,
            dump_stats: args.dump_dispatch_stats,
            ..VmConfig::default()
        };
        let mut vm = Vm::new(Rc::clone(&program.image), config, OutputSink::Stdout);
        let result = vm.run_main(&main_args(&[]));
        if config.dump_stats {
            eprint!("{}", vm.stats_dump());
        }
        match result {
            Ok(_) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(EXIT_RUNTIME)
            }
        }
    } else {
        let config = AstConfig {
            specialize: !args.no_specialize,
            dispatch_depth: args.dispatch_depth.unwrap_or(3),
            instrument_boxing: args.instrument_boxing,
            ..AstConfig::default()
        };
        // The tree interpreter recurses natively with the program; give it a
        // stack that covers the configured call depth. The program structures
        // are not Send, so the whole compile+run pipeline lives on that
        // thread.
        let stack_size = (config.max_call_depth * 3 * 1024).max(32 * 1024 * 1024);
        let dump_profile = args.dump_profile;
        let file = args.file.clone();
        let handle = std::thread::Builder::new()
            .name("minigolo-ast".to_string())
            .stack_size(stack_size)
            .spawn(move || {
                let program = match compile_source(&source) {
                    Ok(p) => p,
                    Err(e) => return report_frontend(&file, &e),
                };
                let engine = AstEngine::new(&program.ir, config, OutputSink::Stdout);
                let result = engine.run_main(&main_args(&[]));
                if dump_profile {
                    eprint!("{}", engine.profile_dump());
                }
                if config.instrument_boxing {
                    eprintln!("boxed-allocations: {}", engine.boxed_allocations());
                }
                match result {
                    Ok(_) => ExitCode::SUCCESS,
                    Err(e) => {
                        eprintln!("{e}");
                        ExitCode::from(EXIT_RUNTIME)
                    }
                }
            })
            .expect("spawn interpreter thread");
        handle.join().expect("interpreter thread panicked")
    }
}

fn cmd_compile(args: CompileArgs) -> ExitCode {
    let source = match read_source(&args.file) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let stage = args.emit.as_str();
    if !matches!(stage, "tokens" | "ast" | "ir" | "bytecode") {
        return usage_error(&format!("unknown emit stage: {stage}"));
    }
    match stage {
        "tokens" => match tokenize_source(&source) {
            Ok(tokens) => {
                print!("{}", render_tokens(&tokens));
                ExitCode::SUCCESS
            }
            Err(e) => report_frontend(&args.file, &e),
        },
        "ast" => match parse_source(&source) {
            Ok(modules) => {
                for m in &modules {
                    print!("{}", minigolo_core::ast::render_ast(m));
                }
                ExitCode::SUCCESS
            }
            Err(e) => report_frontend(&args.file, &e),
        },
        _ => match compile_source(&source) {
            Ok(Program { lifted, image, .. }) => {
                if stage == "ir" {
                    print!("{}", render_ir(&lifted));
                } else {
                    print!("{}", image.disassemble());
                }
                ExitCode::SUCCESS
            }
            Err(e) => report_frontend(&args.file, &e),
        },
    }
}

fn cmd_bench(args: BenchArgs) -> ExitCode {
    let Some(suites) = Suite::parse(&args.suite) else {
        return usage_error(&format!("unknown suite: {}", args.suite));
    };
    let Some(engines) = EngineSel::parse(&args.engine) else {
        return usage_error(&format!("unknown engine: {}", args.engine));
    };
    if args.runs == 0 {
        return usage_error("--runs must be at least 1");
    }
    let config = BenchConfig {
        suites,
        engines,
        warmup: args.warmup,
        runs: args.runs,
        fib_n: args.fib_n,
        gcd_pairs: args.gcd_pairs,
        fmr_n: args.fmr_n,
    };
    match run_bench(&config) {
        Ok(rows) => {
            let csv = minigolo_core::bench::emit_csv(&rows);
            match &args.csv {
                Some(path) => {
                    if let Err(e) = std::fs::write(path, csv) {
                        eprintln!("error: cannot write {}: {e}", path.display());
                        return ExitCode::from(EXIT_RUNTIME);
                    }
                }
                None => print!("{csv}"),
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}
