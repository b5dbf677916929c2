//! Hidden-class style shapes for dynamic objects.
//!
//! A shape is an immutable property-layout descriptor. Objects built by the
//! same property-definition sequence share the identical shape (same id),
//! which lets dispatch guard on a single integer comparison instead of a
//! property-table lookup.

use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

pub type ShapeId = u32;

/// Immutable property layout. `properties[i]` is stored at object slot `i`.
#[derive(Debug)]
pub struct Shape {
    pub id: ShapeId,
    pub properties: Vec<Rc<str>>,
    transitions: RefCell<HashMap<Rc<str>, Rc<Shape>>>,
}

impl Shape {
    /// Slot index of `name`, if this layout has it.
    pub fn slot_of(&self, name: &str) -> Option<usize> {
        self.properties.iter().position(|p| &**p == name)
    }

    pub fn property_count(&self) -> usize {
        self.properties.len()
    }
}

/// Engine-local shape universe: owns the root (empty) shape and allocates ids
/// for successors. Transition caching lives on the shapes themselves.
pub struct ShapeCtx {
    root: Rc<Shape>,
    next_id: Cell<ShapeId>,
}

impl ShapeCtx {
    pub fn new() -> Self {
        ShapeCtx {
            root: Rc::new(Shape {
                id: 0,
                properties: Vec::new(),
                transitions: RefCell::new(HashMap::new()),
            }),
            next_id: Cell::new(1),
        }
    }

    pub fn root(&self) -> Rc<Shape> {
        Rc::clone(&self.root)
    }

    /// Defining an existing property returns the same shape (the slot is
    /// reused); defining a new one returns the cached successor, appending the
    /// property at the next slot index.
    pub fn define(&self, shape: &Rc<Shape>, name: &str) -> Rc<Shape> {
        if shape.slot_of(name).is_some() {
            return Rc::clone(shape);
        }
        if let Some(next) = shape.transitions.borrow().get(name) {
            return Rc::clone(next);
        }
        let name: Rc<str> = Rc::from(name);
        let mut properties = shape.properties.clone();
        properties.push(Rc::clone(&name));
        let id = self.next_id.get();
        self.next_id.set(id + 1);
        let successor = Rc::new(Shape {
            id,
            properties,
            transitions: RefCell::new(HashMap::new()),
        });
        shape
            .transitions
            .borrow_mut()
            .insert(name, Rc::clone(&successor));
        successor
    }
}

impl Default for ShapeCtx {
    fn default() -> Self {
        Self::new()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_plus_property() {
        let ctx = ShapeCtx::new();
        let s = ctx.define(&ctx.root(), "x");
        assert_eq!(s.slot_of("x"), Some(0));
        assert_eq!(s.property_count(), 1);
    }

    #[test]
    fn same_sequence_shares_shape() {
        let ctx = ShapeCtx::new();
        let a = ctx.define(&ctx.define(&ctx.root(), "x"), "y");
        let b = ctx.define(&ctx.define(&ctx.root(), "x"), "y");
        assert_eq!(a.id, b.id);
        assert!(Rc::ptr_eq(&a, &b));
    }

    #[test]
    fn redefinition_reuses_slot_and_shape() {
        let ctx = ShapeCtx::new();
        let s = ctx.define(&ctx.root(), "x");
        let s2 = ctx.define(&s, "x");
        assert_eq!(s.id, s2.id);
        assert_eq!(s2.slot_of("x"), Some(0));
    }

    #[test]
    fn diverging_sequences_get_distinct_ids() {
        let ctx = ShapeCtx::new();
        let xy = ctx.define(&ctx.define(&ctx.root(), "x"), "y");
        let yx = ctx.define(&ctx.define(&ctx.root(), "y"), "x");
        assert_ne!(xy.id, yx.id);
    }
}
