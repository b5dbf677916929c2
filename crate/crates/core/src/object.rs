//! Method lookup over the four dispatch tiers, and the target/discriminator
//! types cached at call sites.
//!
//! Tier order: builtin methods, structure field accessors, dynamic-object
//! properties, augmentations. Lookup results carry the guard discriminator a
//! call site installs: shape id for dynamic objects, the structure definition
//! for structures, the kind otherwise. Tier-3 decisions depend only on the
//! receiver's shape and the argument count, never on property values, so a
//! cached target always behaves exactly like an uncached lookup.

use std::rc::Rc;

use crate::builtins::{
    builtin_method, invoke_builtin_fn, invoke_builtin_method, method_miss, BuiltinFn,
    BuiltinMethod,
};
use crate::errors::{arity_mismatch, RuntimeError};
use crate::runtime::{EngineCtx, RuntimeCtx};
use crate::shape::ShapeId;
use crate::value::{Kind, StructDef, StructureInstance, Value};

/// Guard vocabulary for dispatch: kind, shape identity, or structure type.
#[derive(Debug, Clone)]
pub enum Discriminator {
    Kind(Kind),
    Shape(ShapeId),
    Struct(Rc<StructDef>),
}

impl PartialEq for Discriminator {
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Discriminator::Kind(a), Discriminator::Kind(b)) => a == b,
            (Discriminator::Shape(a), Discriminator::Shape(b)) => a == b,
            (Discriminator::Struct(a), Discriminator::Struct(b)) => Rc::ptr_eq(a, b),
            _ => false,
        }
    }
}

impl Eq for Discriminator {}

#[inline]
pub fn discriminator_of(v: &Value) -> Discriminator {
    match v {
        Value::Object(o) => Discriminator::Shape(o.shape_id()),
        Value::Structure(s) => Discriminator::Struct(Rc::clone(&s.def)),
        other => Discriminator::Kind(other.kind()),
    }
}

/// Resolved method-dispatch target.
#[derive(Debug, Clone)]
pub enum MethodTarget {
    Builtin(BuiltinMethod),
    StructGet(usize),
    StructSet(usize),
    /// Property present in the receiver's shape; behavior at invocation:
    /// closure-valued properties are invoked with the receiver prepended,
    /// plain values are returned (argc 0) or replaced (argc 1).
    ObjectProp(usize),
    /// Property absent and argc is 1: define it (shape transition).
    ObjectDefine(Rc<str>),
    Augment(u32),
}

/// Lookup result: target plus the discriminator to guard on.
#[derive(Debug, Clone)]
pub struct DispatchTarget {
    pub target: MethodTarget,
    pub guard: Discriminator,
}

/// Full four-tier lookup; `argc` excludes the receiver.
pub fn method_lookup(
    ctx: &RuntimeCtx,
    recv: &Value,
    name: &str,
    argc: usize,
) -> Result<DispatchTarget, RuntimeError> {
    let guard = discriminator_of(recv);
    if let Some(m) = builtin_method(recv.kind(), name, argc) {
        return Ok(DispatchTarget {
            target: MethodTarget::Builtin(m),
            guard,
        });
    }
    if let Value::Structure(s) = recv {
        if let Some(field) = s.def.field_index(name) {
            if argc == 0 {
                return Ok(DispatchTarget {
                    target: MethodTarget::StructGet(field),
                    guard,
                });
            }
            if argc == 1 {
                return Ok(DispatchTarget {
                    target: MethodTarget::StructSet(field),
                    guard,
                });
            }
        }
    }
    if let Value::Object(o) = recv {
        if let Some(slot) = o.shape.borrow().slot_of(name) {
            return Ok(DispatchTarget {
                target: MethodTarget::ObjectProp(slot),
                guard,
            });
        }
        if argc == 1 {
            return Ok(DispatchTarget {
                target: MethodTarget::ObjectDefine(Rc::from(name)),
                guard,
            });
        }
    }
    if let Some(fn_index) = ctx.augmentation(&recv.type_name(), name) {
        return Ok(DispatchTarget {
            target: MethodTarget::Augment(fn_index),
            guard,
        });
    }
    Err(method_miss(recv, name, argc))
}

/// Invokes a resolved method target. Shared by the VM call-site chains and
/// the AST engine's dispatch nodes.
pub fn invoke_method_target(
    ctx: &mut dyn EngineCtx,
    target: &MethodTarget,
    recv: &Value,
    args: &[Value],
) -> Result<Value, RuntimeError> {
    match target {
        MethodTarget::Builtin(m) => invoke_builtin_method(ctx, *m, recv, args),
        MethodTarget::StructGet(field) => match recv {
            Value::Structure(s) => Ok(s.fields.borrow()[*field].clone()),
            _ => unreachable!("guard admitted non-structure"),
        },
        MethodTarget::StructSet(field) => match recv {
            Value::Structure(s) => {
                s.fields.borrow_mut()[*field] = args[0].clone();
                Ok(recv.clone())
            }
            _ => unreachable!("guard admitted non-structure"),
        },
        MethodTarget::ObjectProp(slot) => match recv {
            Value::Object(o) => {
                let current = o.slots.borrow()[*slot].clone();
                match current {
                    callable @ (Value::Closure(_) | Value::FunctionRef(_)) => {
                        let mut call_args = Vec::with_capacity(args.len() + 1);
                        call_args.push(recv.clone());
                        call_args.extend_from_slice(args);
                        ctx.call_value(&callable, &call_args)
                    }
                    plain => match args.len() {
                        0 => Ok(plain),
                        1 => {
                            o.slots.borrow_mut()[*slot] = args[0].clone();
                            Ok(recv.clone())
                        }
                        n => Err(method_miss(recv, &property_name(recv, *slot), n)),
                    },
                }
            }
            _ => unreachable!("guard admitted non-object"),
        },
        MethodTarget::ObjectDefine(name) => match recv {
            Value::Object(o) => {
                o.define_property(&ctx.runtime().shapes, name, args[0].clone());
                Ok(recv.clone())
            }
            _ => unreachable!("guard admitted non-object"),
        },
        MethodTarget::Augment(fn_index) => {
            let mut call_args = Vec::with_capacity(args.len() + 1);
            call_args.push(recv.clone());
            call_args.extend_from_slice(args);
            ctx.call_value(
                &Value::FunctionRef(crate::value::FnRef::User(*fn_index)),
                &call_args,
            )
        }
    }
}

fn property_name(recv: &Value, slot: usize) -> String {
    match recv {
        Value::Object(o) => o.shape.borrow().properties[slot].to_string(),
        _ => String::new(),
    }
}

/// Resolved target of a named (free-function position) call.
#[derive(Debug, Clone)]
pub enum FunctionTarget {
    User(u32),
    Struct(Rc<StructDef>),
    Builtin(BuiltinFn),
}

/// Constructs a structure instance; arity must equal the field count.
pub fn construct_struct(def: &Rc<StructDef>, args: &[Value]) -> Result<Value, RuntimeError> {
    if args.len() != def.fields.len() {
        return Err(arity_mismatch(&def.name, def.fields.len(), args.len()));
    }
    Ok(Value::Structure(Rc::new(StructureInstance {
        def: Rc::clone(def),
        fields: std::cell::RefCell::new(args.to_vec()),
    })))
}

/// Invokes a non-user function target (builtins, struct constructors).
/// User targets need a frame and are handled by each engine.
pub fn invoke_simple_target(
    ctx: &mut dyn EngineCtx,
    target: &FunctionTarget,
    args: &[Value],
) -> Result<Value, RuntimeError> {
    match target {
        FunctionTarget::Builtin(f) => invoke_builtin_fn(ctx, *f, args),
        FunctionTarget::Struct(def) => construct_struct(def, args),
        FunctionTarget::User(_) => unreachable!("user targets are engine-invoked"),
    }
}
