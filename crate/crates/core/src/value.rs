//! The dynamic value universe shared by both engines.

use std::cell::RefCell;
use std::fmt::Write as _;
use std::rc::Rc;

use crate::builtins::BuiltinFn;
use crate::shape::{Shape, ShapeCtx};

/// A callable reference: either a program function by index or a builtin.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FnRef {
    User(u32),
    Builtin(BuiltinFn),
}

/// A closure: target function plus the values captured at creation time.
/// Captures are by value and occupy the target's leading parameter slots.
#[derive(Debug)]
pub struct Closure {
    pub fn_index: u32,
    pub captures: Box<[Value]>,
}

/// A structure definition: named record with a fixed field list.
#[derive(Debug, PartialEq, Eq)]
pub struct StructDef {
    pub name: Rc<str>,
    pub fields: Vec<Rc<str>>,
}

impl StructDef {
    pub fn field_index(&self, name: &str) -> Option<usize> {
        self.fields.iter().position(|f| &**f == name)
    }
}

/// A structure instance. Fields mutate in place; setters return the receiver.
#[derive(Debug)]
pub struct StructureInstance {
    pub def: Rc<StructDef>,
    pub fields: RefCell<Vec<Value>>,
}

/// A dynamic object: shape-described property layout plus a slot vector.
/// Defining a new property transitions the shape and appends a slot.
#[derive(Debug)]
pub struct DynamicObject {
    pub shape: RefCell<Rc<Shape>>,
    pub slots: RefCell<Vec<Value>>,
}

impl DynamicObject {
    pub fn new(shapes: &ShapeCtx) -> Self {
        DynamicObject {
            shape: RefCell::new(shapes.root()),
            slots: RefCell::new(Vec::new()),
        }
    }

    pub fn shape_id(&self) -> u32 {
        self.shape.borrow().id
    }

    pub fn get_property(&self, name: &str) -> Option<Value> {
        let slot = self.shape.borrow().slot_of(name)?;
        Some(self.slots.borrow()[slot].clone())
    }

    /// Defines or redefines `name`. Redefinition writes the existing slot;
    /// a new property transitions the shape.
    pub fn define_property(&self, shapes: &ShapeCtx, name: &str, value: Value) {
        let current = self.shape.borrow().slot_of(name);
        match current {
            Some(slot) => self.slots.borrow_mut()[slot] = value,
            None => {
                let next = shapes.define(&self.shape.borrow(), name);
                *self.shape.borrow_mut() = next;
                self.slots.borrow_mut().push(value);
            }
        }
    }
}

/// Tagged dynamic value. Int/Long are two's-complement with wrapping
/// arithmetic; Double is IEEE binary64.
#[derive(Debug, Clone)]
pub enum Value {
    Int(i32),
    Long(i64),
    Double(f64),
    Bool(bool),
    Str(Rc<str>),
    Null,
    FunctionRef(FnRef),
    Closure(Rc<Closure>),
    Tuple(Rc<[Value]>),
    List(Rc<RefCell<Vec<Value>>>),
    Structure(Rc<StructureInstance>),
    Object(Rc<DynamicObject>),
}

/// Value tag, the guard vocabulary for operator call sites. Dynamic objects
/// additionally discriminate by shape id and structures by type name.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Kind {
    Int,
    Long,
    Double,
    Bool,
    Str,
    Null,
    FunctionRef,
    Closure,
    Tuple,
    List,
    Structure,
    Object,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::Int => "Int",
            Kind::Long => "Long",
            Kind::Double => "Double",
            Kind::Bool => "Bool",
            Kind::Str => "Str",
            Kind::Null => "Null",
            Kind::FunctionRef => "FunctionRef",
            Kind::Closure => "Closure",
            Kind::Tuple => "Tuple",
            Kind::List => "List",
            Kind::Structure => "Structure",
            Kind::Object => "DynamicObject",
        }
    }

    pub fn is_numeric(self) -> bool {
        matches!(self, Kind::Int | Kind::Long | Kind::Double)
    }
}

impl Value {
    #[inline]
    pub fn kind(&self) -> Kind {
        match self {
            Value::Int(_) => Kind::Int,
            Value::Long(_) => Kind::Long,
            Value::Double(_) => Kind::Double,
            Value::Bool(_) => Kind::Bool,
            Value::Str(_) => Kind::Str,
            Value::Null => Kind::Null,
            Value::FunctionRef(_) => Kind::FunctionRef,
            Value::Closure(_) => Kind::Closure,
            Value::Tuple(_) => Kind::Tuple,
            Value::List(_) => Kind::List,
            Value::Structure(_) => Kind::Structure,
            Value::Object(_) => Kind::Object,
        }
    }

    /// Name used in error messages and as the augmentation-registry key:
    /// structures report their declared type name, everything else its kind.
    pub fn type_name(&self) -> Rc<str> {
        match self {
            Value::Structure(s) => Rc::clone(&s.def.name),
            other => Rc::from(other.kind().name()),
        }
    }

    pub fn str(text: &str) -> Value {
        Value::Str(Rc::from(text))
    }
}

/// Structural equality for Str/Tuple and numerics (after promotion), identity
/// for List/Structure/DynamicObject, value equality for Bool, `null == null`.
/// Total: kind pairs with no rule compare unequal.
pub fn values_equal(a: &Value, b: &Value) -> bool {
    match (a, b) {
        (Value::Int(x), Value::Int(y)) => x == y,
        (Value::Long(x), Value::Long(y)) => x == y,
        (Value::Double(x), Value::Double(y)) => x == y,
        (Value::Int(x), Value::Long(y)) => i64::from(*x) == *y,
        (Value::Long(x), Value::Int(y)) => *x == i64::from(*y),
        (Value::Int(x), Value::Double(y)) => f64::from(*x) == *y,
        (Value::Double(x), Value::Int(y)) => *x == f64::from(*y),
        (Value::Long(x), Value::Double(y)) => *x as f64 == *y,
        (Value::Double(x), Value::Long(y)) => *x == *y as f64,
        (Value::Bool(x), Value::Bool(y)) => x == y,
        (Value::Str(x), Value::Str(y)) => x == y,
        (Value::Null, Value::Null) => true,
        (Value::FunctionRef(x), Value::FunctionRef(y)) => x == y,
        (Value::Closure(x), Value::Closure(y)) => Rc::ptr_eq(x, y),
        (Value::Tuple(x), Value::Tuple(y)) => {
            x.len() == y.len() && x.iter().zip(y.iter()).all(|(a, b)| values_equal(a, b))
        }
        (Value::List(x), Value::List(y)) => Rc::ptr_eq(x, y),
        (Value::Structure(x), Value::Structure(y)) => Rc::ptr_eq(x, y),
        (Value::Object(x), Value::Object(y)) => Rc::ptr_eq(x, y),
        _ => false,
    }
}

/// Textual rendering used by `println`, string concatenation, and dumps.
pub fn render(v: &Value) -> String {
    let mut out = String::new();
    render_into(&mut out, v);
    out
}

fn render_into(out: &mut String, v: &Value) {
    match v {
        Value::Int(n) => {
            let _ = write!(out, "{n}");
        }
        Value::Long(n) => {
            let _ = write!(out, "{n}");
        }
        Value::Double(d) => {
            let _ = write!(out, "{d}");
        }
        Value::Bool(b) => out.push_str(if *b { "true" } else { "false" }),
        Value::Str(s) => out.push_str(s),
        Value::Null => out.push_str("null"),
        Value::FunctionRef(_) => out.push_str("<function>"),
        Value::Closure(_) => out.push_str("<closure>"),
        Value::Tuple(items) => {
            out.push('[');
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                render_into(out, item);
            }
            out.push(']');
        }
        Value::List(items) => {
            out.push_str("list[");
            for (i, item) in items.borrow().iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                render_into(out, item);
            }
            out.push(']');
        }
        Value::Structure(s) => {
            let _ = write!(out, "{}{{", s.def.name);
            let fields = s.fields.borrow();
            for (i, (name, value)) in s.def.fields.iter().zip(fields.iter()).enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                let _ = write!(out, "{name}=");
                render_into(out, value);
            }
            out.push('}');
        }
        Value::Object(_) => out.push_str("<object>"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn render_primitives() {
        assert_eq!(render(&Value::Long(832040)), "832040");
        assert_eq!(render(&Value::Null), "null");
        assert_eq!(render(&Value::Bool(true)), "true");
        assert_eq!(render(&Value::Double(3.0)), "3");
        assert_eq!(render(&Value::Double(0.5)), "0.5");
    }

    #[test]
    fn render_collections() {
        let t = Value::Tuple(Rc::from(vec![Value::Int(1), Value::Int(2)]));
        assert_eq!(render(&t), "[1, 2]");
        let l = Value::List(Rc::new(RefCell::new(vec![Value::Int(3)])));
        assert_eq!(render(&l), "list[3]");
    }

    #[test]
    fn equality_mixes_numerics_after_promotion() {
        assert!(values_equal(&Value::Int(1), &Value::Long(1)));
        assert!(values_equal(&Value::Int(1), &Value::Double(1.0)));
        assert!(!values_equal(&Value::Int(1), &Value::Str(Rc::from("1"))));
        assert!(values_equal(&Value::Null, &Value::Null));
        assert!(!values_equal(&Value::Null, &Value::Int(0)));
    }

    #[test]
    fn tuple_equality_is_structural_list_is_identity() {
        let t1 = Value::Tuple(Rc::from(vec![Value::Int(1)]));
        let t2 = Value::Tuple(Rc::from(vec![Value::Long(1)]));
        assert!(values_equal(&t1, &t2));
        let l1 = Value::List(Rc::new(RefCell::new(vec![Value::Int(1)])));
        let l2 = Value::List(Rc::new(RefCell::new(vec![Value::Int(1)])));
        assert!(!values_equal(&l1, &l2));
        assert!(values_equal(&l1, &l1.clone()));
    }
}
