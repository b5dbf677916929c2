//! Engine-shared runtime context: program output, shape universe, and the
//! augmentation registry.

use std::cell::RefCell;
use std::collections::HashMap;
use std::io::Write;
use std::rc::Rc;

use crate::errors::RuntimeError;
use crate::shape::ShapeCtx;
use crate::value::Value;

/// Where program output goes. `println` is line-buffered (each line reaches
/// the sink immediately); `print` output is flushed on program exit.
#[derive(Clone)]
pub enum OutputSink {
    Stdout,
    Buffer(Rc<RefCell<Vec<u8>>>),
}

impl OutputSink {
    pub fn buffer() -> (OutputSink, Rc<RefCell<Vec<u8>>>) {
        let buf = Rc::new(RefCell::new(Vec::new()));
        (OutputSink::Buffer(Rc::clone(&buf)), buf)
    }

    pub fn print(&self, text: &str) {
        match self {
            OutputSink::Stdout => {
                let mut out = std::io::stdout().lock();
                let _ = out.write_all(text.as_bytes());
            }
            OutputSink::Buffer(buf) => buf.borrow_mut().extend_from_slice(text.as_bytes()),
        }
    }

    pub fn println(&self, text: &str) {
        match self {
            OutputSink::Stdout => {
                let mut out = std::io::stdout().lock();
                let _ = out.write_all(text.as_bytes());
                let _ = out.write_all(b"\n");
                let _ = out.flush();
            }
            OutputSink::Buffer(buf) => {
                let mut buf = buf.borrow_mut();
                buf.extend_from_slice(text.as_bytes());
                buf.push(b'\n');
            }
        }
    }

    pub fn flush(&self) {
        if let OutputSink::Stdout = self {
            let _ = std::io::stdout().flush();
        }
    }
}

/// Mutable-per-run state shared by VM and AST engines.
pub struct RuntimeCtx {
    pub shapes: ShapeCtx,
    /// (type name, method name) -> user function index; last registration wins.
    augmentations: HashMap<(Rc<str>, Rc<str>), u32>,
    pub sink: OutputSink,
}

impl RuntimeCtx {
    pub fn new(sink: OutputSink) -> Self {
        RuntimeCtx {
            shapes: ShapeCtx::new(),
            augmentations: HashMap::new(),
            sink,
        }
    }

    pub fn register_augmentation(&mut self, type_name: Rc<str>, method: Rc<str>, fn_index: u32) {
        self.augmentations.insert((type_name, method), fn_index);
    }

    pub fn augmentation(&self, type_name: &str, method: &str) -> Option<u32> {
        // Keyed lookup without allocating: the map is small, scan it.
        self.augmentations
            .iter()
            .find(|((t, m), _)| &**t == type_name && &**m == method)
            .map(|(_, idx)| *idx)
    }
}

/// Re-entry point builtins use to invoke closures and function references
/// (map/filter/reduce and closure-valued object properties).
pub trait EngineCtx {
    fn call_value(&mut self, callee: &Value, args: &[Value]) -> Result<Value, RuntimeError>;
    fn runtime(&self) -> &RuntimeCtx;
}
