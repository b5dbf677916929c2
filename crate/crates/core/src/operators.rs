//! Operator semantics: numeric promotion, the full binary/unary operator
//! table, and the kind-specialized target functions installed at call sites.
//!
//! A call site's guarded handle binds one of the `fn(&Value, &Value)` targets
//! below for an exact kind pair; the generic `apply_binary` path resolves
//! through the same table, so cached and uncached execution share semantics.

use crate::errors::{type_mismatch_binary, type_mismatch_unary, RuntimeError};
use crate::value::{render, values_equal, Kind, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Op {
    Plus,
    Minus,
    Times,
    Divide,
    Modulo,
    Equals,
    NotEquals,
    Less,
    LessOrEquals,
    More,
    MoreOrEquals,
    And,
    Or,
    Neg,
    Not,
}

impl Op {
    /// Source symbol, used in AST dumps and error messages.
    pub fn symbol(self) -> &'static str {
        match self {
            Op::Plus => "+",
            Op::Minus => "-",
            Op::Times => "*",
            Op::Divide => "/",
            Op::Modulo => "%",
            Op::Equals => "==",
            Op::NotEquals => "!=",
            Op::Less => "<",
            Op::LessOrEquals => "<=",
            Op::More => ">",
            Op::MoreOrEquals => ">=",
            Op::And => "and",
            Op::Or => "or",
            Op::Neg => "-",
            Op::Not => "not",
        }
    }

    /// Dispatch name, used in disassembly and call-site stats.
    pub fn name(self) -> &'static str {
        match self {
            Op::Plus => "plus",
            Op::Minus => "minus",
            Op::Times => "times",
            Op::Divide => "divide",
            Op::Modulo => "modulo",
            Op::Equals => "equals",
            Op::NotEquals => "notEquals",
            Op::Less => "less",
            Op::LessOrEquals => "lessOrEquals",
            Op::More => "more",
            Op::MoreOrEquals => "moreOrEquals",
            Op::And => "and",
            Op::Or => "or",
            Op::Neg => "neg",
            Op::Not => "not",
        }
    }

    pub fn is_unary(self) -> bool {
        matches!(self, Op::Neg | Op::Not)
    }

    /// `and`/`or` compile to short-circuit branches, never to call sites.
    pub fn is_short_circuit(self) -> bool {
        matches!(self, Op::And | Op::Or)
    }

    pub fn is_comparison(self) -> bool {
        matches!(
            self,
            Op::Equals | Op::NotEquals | Op::Less | Op::LessOrEquals | Op::More | Op::MoreOrEquals
        )
    }
}

/// Numeric promotion: widest wins. Double beats Long beats Int.
pub fn promote(a: Kind, b: Kind) -> Result<Kind, RuntimeError> {
    if !a.is_numeric() || !b.is_numeric() {
        let side = if a.is_numeric() { b } else { a };
        return Err(RuntimeError::TypeMismatch(format!(
            "{} is not numeric",
            side.name()
        )));
    }
    Ok(if a == Kind::Double || b == Kind::Double {
        Kind::Double
    } else if a == Kind::Long || b == Kind::Long {
        Kind::Long
    } else {
        Kind::Int
    })
}

pub type BinaryTarget = fn(&Value, &Value) -> Result<Value, RuntimeError>;
pub type UnaryTarget = fn(&Value) -> Result<Value, RuntimeError>;

#[inline]
fn as_i32(v: &Value) -> i32 {
    match v {
        Value::Int(n) => *n,
        _ => unreachable!("guard admitted non-Int"),
    }
}

#[inline]
fn as_i64(v: &Value) -> i64 {
    match v {
        Value::Int(n) => i64::from(*n),
        Value::Long(n) => *n,
        _ => unreachable!("guard admitted non-integral"),
    }
}

#[inline]
fn as_f64(v: &Value) -> f64 {
    match v {
        Value::Int(n) => f64::from(*n),
        Value::Long(n) => *n as f64,
        Value::Double(d) => *d,
        _ => unreachable!("guard admitted non-numeric"),
    }
}

macro_rules! int_arith {
    ($name:ident, $wrap:ident) => {
        fn $name(a: &Value, b: &Value) -> Result<Value, RuntimeError> {
            Ok(Value::Int(as_i32(a).$wrap(as_i32(b))))
        }
    };
}

macro_rules! long_arith {
    ($name:ident, $wrap:ident) => {
        fn $name(a: &Value, b: &Value) -> Result<Value, RuntimeError> {
            Ok(Value::Long(as_i64(a).$wrap(as_i64(b))))
        }
    };
}

macro_rules! double_arith {
    ($name:ident, $op:tt) => {
        fn $name(a: &Value, b: &Value) -> Result<Value, RuntimeError> {
            Ok(Value::Double(as_f64(a) $op as_f64(b)))
        }
    };
}

int_arith!(add_int, wrapping_add);
int_arith!(sub_int, wrapping_sub);
int_arith!(mul_int, wrapping_mul);
long_arith!(add_long, wrapping_add);
long_arith!(sub_long, wrapping_sub);
long_arith!(mul_long, wrapping_mul);
double_arith!(add_double, +);
double_arith!(sub_double, -);
double_arith!(mul_double, *);
double_arith!(div_double, /);
double_arith!(rem_double, %);

fn div_int(a: &Value, b: &Value) -> Result<Value, RuntimeError> {
    let d = as_i32(b);
    if d == 0 {
        return Err(RuntimeError::DivisionByZero);
    }
    Ok(Value::Int(as_i32(a).wrapping_div(d)))
}

fn rem_int(a: &Value, b: &Value) -> Result<Value, RuntimeError> {
    let d = as_i32(b);
    if d == 0 {
        return Err(RuntimeError::DivisionByZero);
    }
    Ok(Value::Int(as_i32(a).wrapping_rem(d)))
}

fn div_long(a: &Value, b: &Value) -> Result<Value, RuntimeError> {
    let d = as_i64(b);
    if d == 0 {
        return Err(RuntimeError::DivisionByZero);
    }
    Ok(Value::Long(as_i64(a).wrapping_div(d)))
}

fn rem_long(a: &Value, b: &Value) -> Result<Value, RuntimeError> {
    let d = as_i64(b);
    if d == 0 {
        return Err(RuntimeError::DivisionByZero);
    }
    Ok(Value::Long(as_i64(a).wrapping_rem(d)))
}

fn concat(a: &Value, b: &Value) -> Result<Value, RuntimeError> {
    let mut s = String::new();
    match a {
        Value::Str(t) => s.push_str(t),
        other => s.push_str(&render(other)),
    }
    match b {
        Value::Str(t) => s.push_str(t),
        other => s.push_str(&render(other)),
    }
    Ok(Value::str(&s))
}

macro_rules! cmp_target {
    ($name:ident, $conv:ident, $op:tt) => {
        fn $name(a: &Value, b: &Value) -> Result<Value, RuntimeError> {
            Ok(Value::Bool($conv(a) $op $conv(b)))
        }
    };
}

cmp_target!(lt_int, as_i32, <);
cmp_target!(le_int, as_i32, <=);
cmp_target!(gt_int, as_i32, >);
cmp_target!(ge_int, as_i32, >=);
cmp_target!(eq_int, as_i32, ==);
cmp_target!(ne_int, as_i32, !=);
cmp_target!(lt_long, as_i64, <);
cmp_target!(le_long, as_i64, <=);
cmp_target!(gt_long, as_i64, >);
cmp_target!(ge_long, as_i64, >=);
cmp_target!(eq_long, as_i64, ==);
cmp_target!(ne_long, as_i64, !=);
cmp_target!(lt_double, as_f64, <);
cmp_target!(le_double, as_f64, <=);
cmp_target!(gt_double, as_f64, >);
cmp_target!(ge_double, as_f64, >=);
cmp_target!(eq_double, as_f64, ==);
cmp_target!(ne_double, as_f64, !=);

fn eq_generic(a: &Value, b: &Value) -> Result<Value, RuntimeError> {
    Ok(Value::Bool(values_equal(a, b)))
}

fn ne_generic(a: &Value, b: &Value) -> Result<Value, RuntimeError> {
    Ok(Value::Bool(!values_equal(a, b)))
}

/// Resolves the target function for an exact operand kind pair; this is the
/// lookup the call-site fallback performs. `None` means no rule applies.
pub fn resolve_binary_target(op: Op, a: Kind, b: Kind) -> Option<BinaryTarget> {
    use Kind::{Double, Int, Long, Str};
    if op == Op::Plus && (a == Str || b == Str) {
        return Some(concat);
    }
    if op == Op::Equals || op == Op::NotEquals {
        if a.is_numeric() && b.is_numeric() {
            let k = promote(a, b).ok()?;
            return Some(match (op, k) {
                (Op::Equals, Int) => eq_int,
                (Op::Equals, Long) => eq_long,
                (Op::Equals, Double) => eq_double,
                (Op::NotEquals, Int) => ne_int,
                (Op::NotEquals, Long) => ne_long,
                (Op::NotEquals, Double) => ne_double,
                _ => unreachable!(),
            });
        }
        // Equality is total: kinds with no shared rule compare unequal.
        return Some(if op == Op::Equals { eq_generic } else { ne_generic });
    }
    if !a.is_numeric() || !b.is_numeric() {
        return None;
    }
    let k = promote(a, b).ok()?;
    Some(match (op, k) {
        (Op::Plus, Int) => add_int,
        (Op::Plus, Long) => add_long,
        (Op::Plus, Double) => add_double,
        (Op::Minus, Int) => sub_int,
        (Op::Minus, Long) => sub_long,
        (Op::Minus, Double) => sub_double,
        (Op::Times, Int) => mul_int,
        (Op::Times, Long) => mul_long,
        (Op::Times, Double) => mul_double,
        (Op::Divide, Int) => div_int,
        (Op::Divide, Long) => div_long,
        (Op::Divide, Double) => div_double,
        (Op::Modulo, Int) => rem_int,
        (Op::Modulo, Long) => rem_long,
        (Op::Modulo, Double) => rem_double,
        (Op::Less, Int) => lt_int,
        (Op::Less, Long) => lt_long,
        (Op::Less, Double) => lt_double,
        (Op::LessOrEquals, Int) => le_int,
        (Op::LessOrEquals, Long) => le_long,
        (Op::LessOrEquals, Double) => le_double,
        (Op::More, Int) => gt_int,
        (Op::More, Long) => gt_long,
        (Op::More, Double) => gt_double,
        (Op::MoreOrEquals, Int) => ge_int,
        (Op::MoreOrEquals, Long) => ge_long,
        (Op::MoreOrEquals, Double) => ge_double,
        _ => return None,
    })
}

fn neg_int(v: &Value) -> Result<Value, RuntimeError> {
    Ok(Value::Int(as_i32(v).wrapping_neg()))
}

fn neg_long(v: &Value) -> Result<Value, RuntimeError> {
    Ok(Value::Long(-as_i64(v)))
}

fn neg_double(v: &Value) -> Result<Value, RuntimeError> {
    Ok(Value::Double(-as_f64(v)))
}

fn not_bool(v: &Value) -> Result<Value, RuntimeError> {
    match v {
        Value::Bool(b) => Ok(Value::Bool(!b)),
        _ => unreachable!("guard admitted non-Bool"),
    }
}

pub fn resolve_unary_target(op: Op, k: Kind) -> Option<UnaryTarget> {
    match (op, k) {
        (Op::Neg, Kind::Int) => Some(neg_int),
        (Op::Neg, Kind::Long) => Some(neg_long),
        (Op::Neg, Kind::Double) => Some(neg_double),
        (Op::Not, Kind::Bool) => Some(not_bool),
        _ => None,
    }
}

/// Runtime operator table the call-site fallback resolves through, keyed by
/// operator and exact operand kinds. The fallback models the runtime's
/// dynamic lookup: it finds targets by observed types in a registry, it does
/// not branch statically.
pub struct OpRegistry {
    binary: std::collections::HashMap<(Op, Kind, Kind), BinaryTarget>,
    unary: std::collections::HashMap<(Op, Kind), UnaryTarget>,
}

const ALL_KINDS: [Kind; 12] = [
    Kind::Int,
    Kind::Long,
    Kind::Double,
    Kind::Bool,
    Kind::Str,
    Kind::Null,
    Kind::FunctionRef,
    Kind::Closure,
    Kind::Tuple,
    Kind::List,
    Kind::Structure,
    Kind::Object,
];

const BINARY_OPS: [Op; 11] = [
    Op::Plus,
    Op::Minus,
    Op::Times,
    Op::Divide,
    Op::Modulo,
    Op::Equals,
    Op::NotEquals,
    Op::Less,
    Op::LessOrEquals,
    Op::More,
    Op::MoreOrEquals,
];

impl OpRegistry {
    /// Populated once per engine from the semantic table.
    pub fn new() -> OpRegistry {
        let mut binary = std::collections::HashMap::new();
        for op in BINARY_OPS {
            for a in ALL_KINDS {
                for b in ALL_KINDS {
                    if let Some(t) = resolve_binary_target(op, a, b) {
                        binary.insert((op, a, b), t);
                    }
                }
            }
        }
        let mut unary = std::collections::HashMap::new();
        for op in [Op::Neg, Op::Not] {
            for k in ALL_KINDS {
                if let Some(t) = resolve_unary_target(op, k) {
                    unary.insert((op, k), t);
                }
            }
        }
        OpRegistry { binary, unary }
    }

    pub fn binary(&self, op: Op, a: Kind, b: Kind) -> Option<BinaryTarget> {
        self.binary.get(&(op, a, b)).copied()
    }

    pub fn unary(&self, op: Op, k: Kind) -> Option<UnaryTarget> {
        self.unary.get(&(op, k)).copied()
    }
}

impl Default for OpRegistry {
    fn default() -> Self {
        Self::new()
    }
}

/// Uncached binary application: resolve for the operand kinds and invoke.
pub fn apply_binary(op: Op, a: &Value, b: &Value) -> Result<Value, RuntimeError> {
    match resolve_binary_target(op, a.kind(), b.kind()) {
        Some(target) => target(a, b),
        None => Err(type_mismatch_binary(
            op.symbol(),
            &a.type_name(),
            &b.type_name(),
        )),
    }
}

pub fn apply_unary(op: Op, v: &Value) -> Result<Value, RuntimeError> {
    match resolve_unary_target(op, v.kind()) {
        Some(target) => target(v),
        None => Err(type_mismatch_unary(op.symbol(), &v.type_name())),
    }
}
