//! Runtime error taxonomy shared by both execution engines.

use thiserror::Error;

/// Errors raised while a program is executing. Both engines produce the same
/// kinds for the same programs; the differential suite relies on that.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RuntimeError {
    #[error("{0}")]
    TypeMismatch(String),
    #[error("{0}")]
    NoSuchMethod(String),
    #[error("integer division or remainder by zero")]
    DivisionByZero,
    #[error("{0}")]
    ArityMismatch(String),
    #[error("call depth limit exceeded")]
    StackOverflow,
    #[error("{0}")]
    IndexOutOfBounds(String),
}

impl RuntimeError {
    /// Stable kind label used in the `error: <kind>: <detail>` output format.
    pub fn kind(&self) -> &'static str {
        match self {
            RuntimeError::TypeMismatch(_) => "type mismatch",
            RuntimeError::NoSuchMethod(_) => "no such method",
            RuntimeError::DivisionByZero => "division by zero",
            RuntimeError::ArityMismatch(_) => "arity mismatch",
            RuntimeError::StackOverflow => "stack overflow",
            RuntimeError::IndexOutOfBounds(_) => "index out of bounds",
        }
    }
}

pub fn type_mismatch_binary(op_symbol: &str, lhs: &str, rhs: &str) -> RuntimeError {
    RuntimeError::TypeMismatch(format!(
        "operator {op_symbol} does not apply to {lhs} and {rhs}"
    ))
}

pub fn type_mismatch_unary(op_symbol: &str, operand: &str) -> RuntimeError {
    RuntimeError::TypeMismatch(format!("operator {op_symbol} does not apply to {operand}"))
}

pub fn branch_condition_error(found: &str) -> RuntimeError {
    RuntimeError::TypeMismatch(format!("branch condition must be Bool, got {found}"))
}

pub fn no_such_method(type_name: &str, method: &str, argc: usize) -> RuntimeError {
    RuntimeError::NoSuchMethod(format!("{type_name} has no method {method}/{argc}"))
}

pub fn arity_mismatch(name: &str, expected: usize, got: usize) -> RuntimeError {
    RuntimeError::ArityMismatch(format!(
        "{name} expects {expected} argument(s), got {got}"
    ))
}
