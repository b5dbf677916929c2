//! Program linking: per-module name-resolution tables and the global
//! function/structure/augmentation layout. Both engines build their runtime
//! tables from this so resolution order cannot drift between them.

use std::collections::HashMap;
use std::rc::Rc;

use crate::builtins::BuiltinFn;
use crate::ir::IrModule;
use crate::object::FunctionTarget;
use crate::value::StructDef;

pub struct ProgramLayout {
    /// Per-module resolution map: own functions, own structures, imported
    /// public functions/structures (first import wins). Builtins are not in
    /// the map; resolve falls back to the builtin table.
    pub module_maps: Vec<HashMap<Rc<str>, FunctionTarget>>,
    /// Offset of each module's functions in the global function table.
    pub fn_offsets: Vec<u32>,
    pub structures: Vec<Rc<StructDef>>,
    /// (type name, method name, global fn index), in registration order.
    pub augmentations: Vec<(Rc<str>, Rc<str>, u32)>,
    /// Global index of the entry module's `main`, when present.
    pub entry: Option<u32>,
}

pub fn layout_program(modules: &[IrModule]) -> ProgramLayout {
    let mut fn_offsets = Vec::with_capacity(modules.len());
    let mut total = 0u32;
    for m in modules {
        fn_offsets.push(total);
        total += m.functions.len() as u32;
    }

    let mut structures = Vec::new();
    let mut module_maps = Vec::with_capacity(modules.len());
    for (mi, m) in modules.iter().enumerate() {
        let mut map: HashMap<Rc<str>, FunctionTarget> = HashMap::new();
        for (fi, f) in m.functions.iter().enumerate() {
            map.insert(
                Rc::clone(&f.name),
                FunctionTarget::User(fn_offsets[mi] + fi as u32),
            );
        }
        for s in &m.structures {
            map.entry(Rc::clone(&s.name))
                .or_insert_with(|| FunctionTarget::Struct(Rc::clone(s)));
        }
        for (import, _) in &m.imports {
            let Some((oi, other)) = modules
                .iter()
                .enumerate()
                .find(|(oi, other)| other.name == *import && *oi != mi)
            else {
                continue;
            };
            for (fi, f) in other.functions.iter().enumerate() {
                if f.local {
                    continue;
                }
                map.entry(Rc::clone(&f.name))
                    .or_insert_with(|| FunctionTarget::User(fn_offsets[oi] + fi as u32));
            }
            for s in &other.structures {
                map.entry(Rc::clone(&s.name))
                    .or_insert_with(|| FunctionTarget::Struct(Rc::clone(s)));
            }
        }
        module_maps.push(map);
        structures.extend(m.structures.iter().cloned());
    }

    let mut augmentations = Vec::new();
    for (mi, m) in modules.iter().enumerate() {
        for aug in &m.augmentations {
            for (method, local_index) in &aug.methods {
                augmentations.push((
                    Rc::clone(&aug.target),
                    Rc::clone(method),
                    fn_offsets[mi] + *local_index as u32,
                ));
            }
        }
    }

    let entry = modules.first().and_then(|m| {
        m.functions
            .iter()
            .position(|f| &*f.name == "main")
            .map(|i| fn_offsets[0] + i as u32)
    });

    ProgramLayout {
        module_maps,
        fn_offsets,
        structures,
        augmentations,
        entry,
    }
}

/// Runtime name resolution for a call in module `module_index`: the module
/// map first, then the builtin table.
pub fn resolve_name(
    maps: &[HashMap<Rc<str>, FunctionTarget>],
    module_index: u32,
    name: &str,
) -> Option<FunctionTarget> {
    if let Some(t) = maps[module_index as usize].get(name) {
        return Some(t.clone());
    }
    BuiltinFn::by_name(name).map(FunctionTarget::Builtin)
}
