//! Front-end pipeline: source -> tokens -> AST -> IR -> checked -> lifted ->
//! slot-allocated -> code image. The tree interpreter consumes the unlifted
//! IR (lambdas execute in place); the VM consumes the compiled image.

use std::rc::Rc;

use thiserror::Error;

use crate::ast::AstModule;
use crate::bytecode::CodeImage;
use crate::compile::{compile, CompileError};
use crate::ir::{lower, IrModule};
use crate::lexer::{tokenize, LexError, Token};
use crate::parser::{parse_program, ParseError};
use crate::passes::{allocate_all, check_references, lift_closures, CaptureError, Diagnostic};
use crate::value::Value;

#[derive(Debug, Error)]
pub enum FrontendError {
    #[error("{0}")]
    Lex(#[from] LexError),
    #[error("{0}")]
    Parse(#[from] ParseError),
    #[error("{}", format_diagnostics(.0))]
    Check(Vec<Diagnostic>),
    #[error("{0}")]
    Capture(#[from] CaptureError),
    #[error("{0}")]
    Compile(#[from] CompileError),
}

fn format_diagnostics(diagnostics: &[Diagnostic]) -> String {
    diagnostics
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// A fully compiled program with every intermediate stage kept around for
/// the `--emit` dumps and for the engine that wants it.
pub struct Program {
    pub ast: Vec<AstModule>,
    /// Unlifted IR: lambdas still in place. Tree-interpreter input.
    pub ir: Vec<IrModule>,
    /// Lifted, slot-allocated IR. VM input and `--emit ir` payload.
    pub lifted: Vec<IrModule>,
    pub image: Rc<CodeImage>,
}

pub fn tokenize_source(source: &str) -> Result<Vec<Token>, FrontendError> {
    Ok(tokenize(source)?)
}

pub fn parse_source(source: &str) -> Result<Vec<AstModule>, FrontendError> {
    let tokens = tokenize(source)?;
    Ok(parse_program(&tokens)?)
}

pub fn compile_source(source: &str) -> Result<Program, FrontendError> {
    let ast = parse_source(source)?;
    let ir: Vec<IrModule> = ast.iter().map(lower).collect();
    let diagnostics = check_references(&ir);
    if !diagnostics.is_empty() {
        return Err(FrontendError::Check(diagnostics));
    }
    let mut lifted = ir
        .iter()
        .map(lift_closures)
        .collect::<Result<Vec<_>, _>>()?;
    allocate_all(&mut lifted);
    let image = compile(&lifted)?;
    Ok(Program {
        ast,
        ir,
        lifted,
        image: Rc::new(image),
    })
}

/// The `main(args)` argument vector: one tuple of program arguments.
pub fn main_args(args: &[String]) -> Vec<Value> {
    let items: Vec<Value> = args.iter().map(|a| Value::str(a)).collect();
    vec![Value::Tuple(Rc::from(items))]
}
