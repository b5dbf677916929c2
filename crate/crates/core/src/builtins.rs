//! Builtin free functions and builtin methods on the value kinds.

use std::cell::RefCell;
use std::rc::Rc;

use crate::errors::{arity_mismatch, no_such_method, RuntimeError};
use crate::runtime::EngineCtx;
use crate::value::{render, DynamicObject, Kind, Value};

/// Builtin free functions, resolved after module and imported names.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinFn {
    Println,
    Print,
    DynamicObjectNew,
    TupleOf,
    Range,
    CurrentTimeMillis,
}

impl BuiltinFn {
    pub fn by_name(name: &str) -> Option<BuiltinFn> {
        Some(match name {
            "println" => BuiltinFn::Println,
            "print" => BuiltinFn::Print,
            "DynamicObject" => BuiltinFn::DynamicObjectNew,
            "tuple" => BuiltinFn::TupleOf,
            "range" => BuiltinFn::Range,
            "currentTimeMillis" => BuiltinFn::CurrentTimeMillis,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            BuiltinFn::Println => "println",
            BuiltinFn::Print => "print",
            BuiltinFn::DynamicObjectNew => "DynamicObject",
            BuiltinFn::TupleOf => "tuple",
            BuiltinFn::Range => "range",
            BuiltinFn::CurrentTimeMillis => "currentTimeMillis",
        }
    }
}

pub fn invoke_builtin_fn(
    ctx: &mut dyn EngineCtx,
    f: BuiltinFn,
    args: &[Value],
) -> Result<Value, RuntimeError> {
    match f {
        BuiltinFn::Println => {
            expect_arity(f.name(), 1, args)?;
            ctx.runtime().sink.println(&render(&args[0]));
            Ok(Value::Null)
        }
        BuiltinFn::Print => {
            expect_arity(f.name(), 1, args)?;
            ctx.runtime().sink.print(&render(&args[0]));
            Ok(Value::Null)
        }
        BuiltinFn::DynamicObjectNew => {
            expect_arity(f.name(), 0, args)?;
            Ok(Value::Object(Rc::new(DynamicObject::new(
                &ctx.runtime().shapes,
            ))))
        }
        BuiltinFn::TupleOf => Ok(Value::Tuple(Rc::from(args.to_vec()))),
        BuiltinFn::Range => {
            expect_arity(f.name(), 2, args)?;
            let (a, b) = match (&args[0], &args[1]) {
                (Value::Int(a), Value::Int(b)) => (*a, *b),
                _ => {
                    return Err(RuntimeError::TypeMismatch(
                        "range expects Int bounds".to_string(),
                    ))
                }
            };
            let items: Vec<Value> = (a..b).map(Value::Int).collect();
            Ok(Value::List(Rc::new(RefCell::new(items))))
        }
        BuiltinFn::CurrentTimeMillis => {
            expect_arity(f.name(), 0, args)?;
            let ms = std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_millis() as i64)
                .unwrap_or(0);
            Ok(Value::Long(ms))
        }
    }
}

fn expect_arity(name: &str, expected: usize, args: &[Value]) -> Result<(), RuntimeError> {
    if args.len() != expected {
        return Err(arity_mismatch(name, expected, args.len()));
    }
    Ok(())
}

/// Builtin methods, tier 1 of method lookup. `argc` excludes the receiver.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BuiltinMethod {
    CollSize,
    CollGet,
    CollIsEmpty,
    CollMap,
    CollFilter,
    CollReduce,
    ListAdd,
    ListSet,
    StrLength,
    StrToUpperCase,
    NumToDouble,
    NumToInt,
    NumToLong,
    ObjDefine,
}

/// Tier-1 lookup: builtin method table by receiver kind, name, and arity.
pub fn builtin_method(kind: Kind, name: &str, argc: usize) -> Option<BuiltinMethod> {
    use BuiltinMethod::*;
    match kind {
        Kind::Tuple | Kind::List => {
            let m = match (name, argc) {
                ("size", 0) => CollSize,
                ("get", 1) => CollGet,
                ("isEmpty", 0) => CollIsEmpty,
                ("map", 1) => CollMap,
                ("filter", 1) => CollFilter,
                ("reduce", 2) => CollReduce,
                ("add", 1) if kind == Kind::List => ListAdd,
                ("set", 2) if kind == Kind::List => ListSet,
                _ => return None,
            };
            Some(m)
        }
        Kind::Str => match (name, argc) {
            ("length", 0) => Some(StrLength),
            ("toUpperCase", 0) => Some(StrToUpperCase),
            _ => None,
        },
        Kind::Int | Kind::Long | Kind::Double => match (name, argc) {
            ("toDouble", 0) => Some(NumToDouble),
            ("toInt", 0) => Some(NumToInt),
            ("toLong", 0) => Some(NumToLong),
            _ => None,
        },
        Kind::Object => match (name, argc) {
            ("define", 2) => Some(ObjDefine),
            _ => None,
        },
        _ => None,
    }
}

fn index_of(recv_len: usize, v: &Value) -> Result<usize, RuntimeError> {
    let raw = match v {
        Value::Int(i) => i64::from(*i),
        Value::Long(i) => *i,
        _ => {
            return Err(RuntimeError::TypeMismatch(format!(
                "index must be Int or Long, got {}",
                v.type_name()
            )))
        }
    };
    if raw < 0 || raw as usize >= recv_len {
        return Err(RuntimeError::IndexOutOfBounds(format!(
            "index {raw} out of bounds for length {recv_len}"
        )));
    }
    Ok(raw as usize)
}

fn expect_bool_predicate(v: Value) -> Result<bool, RuntimeError> {
    match v {
        Value::Bool(b) => Ok(b),
        other => Err(RuntimeError::TypeMismatch(format!(
            "filter predicate must return Bool, got {}",
            other.type_name()
        ))),
    }
}

pub fn invoke_builtin_method(
    ctx: &mut dyn EngineCtx,
    m: BuiltinMethod,
    recv: &Value,
    args: &[Value],
) -> Result<Value, RuntimeError> {
    use BuiltinMethod::*;
    match m {
        CollSize => Ok(Value::Int(coll_len(recv) as i32)),
        CollIsEmpty => Ok(Value::Bool(coll_len(recv) == 0)),
        CollGet => match recv {
            Value::Tuple(items) => {
                let i = index_of(items.len(), &args[0])?;
                Ok(items[i].clone())
            }
            Value::List(items) => {
                let items = items.borrow();
                let i = index_of(items.len(), &args[0])?;
                Ok(items[i].clone())
            }
            _ => unreachable!("guard admitted non-collection"),
        },
        CollMap => {
            let items = coll_items(recv);
            let mut mapped = Vec::with_capacity(items.len());
            for item in &items {
                mapped.push(ctx.call_value(&args[0], std::slice::from_ref(item))?);
            }
            Ok(rebuild_coll(recv, mapped))
        }
        CollFilter => {
            let items = coll_items(recv);
            let mut kept = Vec::new();
            for item in &items {
                if expect_bool_predicate(
                    ctx.call_value(&args[0], std::slice::from_ref(item))?,
                )? {
                    kept.push(item.clone());
                }
            }
            Ok(rebuild_coll(recv, kept))
        }
        CollReduce => {
            let items = coll_items(recv);
            let mut acc = args[0].clone();
            for item in &items {
                acc = ctx.call_value(&args[1], &[acc, item.clone()])?;
            }
            Ok(acc)
        }
        ListAdd => match recv {
            Value::List(list) => {
                list.borrow_mut().push(args[0].clone());
                Ok(recv.clone())
            }
            _ => unreachable!("guard admitted non-List"),
        },
        ListSet => match recv {
            Value::List(list) => {
                let i = index_of(list.borrow().len(), &args[0])?;
                list.borrow_mut()[i] = args[1].clone();
                Ok(recv.clone())
            }
            _ => unreachable!("guard admitted non-List"),
        },
        StrLength => match recv {
            Value::Str(s) => Ok(Value::Int(s.chars().count() as i32)),
            _ => unreachable!("guard admitted non-Str"),
        },
        StrToUpperCase => match recv {
            Value::Str(s) => Ok(Value::str(&s.to_uppercase())),
            _ => unreachable!("guard admitted non-Str"),
        },
        NumToDouble => Ok(Value::Double(match recv {
            Value::Int(n) => f64::from(*n),
            Value::Long(n) => *n as f64,
            Value::Double(d) => *d,
            _ => unreachable!("guard admitted non-numeric"),
        })),
        NumToInt => Ok(Value::Int(match recv {
            Value::Int(n) => *n,
            Value::Long(n) => *n as i32,
            Value::Double(d) => *d as i32,
            _ => unreachable!("guard admitted non-numeric"),
        })),
        NumToLong => Ok(Value::Long(match recv {
            Value::Int(n) => i64::from(*n),
            Value::Long(n) => *n,
            Value::Double(d) => *d as i64,
            _ => unreachable!("guard admitted non-numeric"),
        })),
        ObjDefine => match recv {
            Value::Object(obj) => {
                let name = match &args[0] {
                    Value::Str(s) => Rc::clone(s),
                    other => {
                        return Err(RuntimeError::TypeMismatch(format!(
                            "define expects a Str property name, got {}",
                            other.type_name()
                        )))
                    }
                };
                obj.define_property(&ctx.runtime().shapes, &name, args[1].clone());
                Ok(recv.clone())
            }
            _ => unreachable!("guard admitted non-object"),
        },
    }
}

fn coll_len(recv: &Value) -> usize {
    match recv {
        Value::Tuple(items) => items.len(),
        Value::List(items) => items.borrow().len(),
        _ => unreachable!("guard admitted non-collection"),
    }
}

/// Snapshot of the receiver's elements. map/filter/reduce iterate the
/// snapshot so a callback mutating the list cannot invalidate iteration
/// (collection-copy semantics).
fn coll_items(recv: &Value) -> Vec<Value> {
    match recv {
        Value::Tuple(items) => items.to_vec(),
        Value::List(items) => items.borrow().clone(),
        _ => unreachable!("guard admitted non-collection"),
    }
}

/// map/filter return the receiver's own collection kind.
fn rebuild_coll(recv: &Value, items: Vec<Value>) -> Value {
    match recv {
        Value::Tuple(_) => Value::Tuple(Rc::from(items)),
        Value::List(_) => Value::List(Rc::new(RefCell::new(items))),
        _ => unreachable!(),
    }
}

/// Error for a method miss across all four lookup tiers.
pub fn method_miss(recv: &Value, name: &str, argc: usize) -> RuntimeError {
    no_such_method(&recv.type_name(), name, argc)
}
