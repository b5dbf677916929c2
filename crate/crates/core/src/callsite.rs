//! Call sites and their guarded method-handle chains.
//!
//! Every operator, named-call, and method-call occurrence owns a call site.
//! A site starts unlinked (chain = fallback). The first call misses, resolves
//! a target for the observed operand discriminators, and relinks the chain
//! with a guarded handle per the site's policy. Guard hits dispatch straight
//! to the target; guard misses fall through to the fallback, which resolves
//! again and overwrites the chain.

use std::rc::Rc;

use crate::object::{discriminator_of, Discriminator, FunctionTarget, MethodTarget};
use crate::operators::{BinaryTarget, UnaryTarget};
use crate::value::{Kind, Value};

/// Relinking policy. `Mono` is the default: depth-1 chain, replaced on every
/// miss. `Poly(k)` appends guards up to depth k, then goes megamorphic and
/// stops caching for good. `None` never installs anything; every call walks
/// the full lookup.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DispatchPolicy {
    Mono,
    Poly(u32),
    None,
}

impl DispatchPolicy {
    pub fn parse(text: &str) -> Option<DispatchPolicy> {
        match text {
            "mono" => Some(DispatchPolicy::Mono),
            "none" => Some(DispatchPolicy::None),
            _ => {
                let k = text.strip_prefix("poly:")?.parse::<u32>().ok()?;
                if k >= 1 {
                    Some(DispatchPolicy::Poly(k))
                } else {
                    None
                }
            }
        }
    }

    pub fn label(self) -> String {
        match self {
            DispatchPolicy::Mono => "mono".to_string(),
            DispatchPolicy::Poly(k) => format!("poly:{k}"),
            DispatchPolicy::None => "none".to_string(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SiteKind {
    Operator,
    Function,
    Method,
}

impl SiteKind {
    pub fn label(self) -> &'static str {
        match self {
            SiteKind::Operator => "operator",
            SiteKind::Function => "function",
            SiteKind::Method => "method",
        }
    }
}

/// Guard predicate over the argument discriminators. Operator guards test the
/// exact operand kind tuple; method guards test the receiver's discriminator
/// (shape id for dynamic objects, type for structures, kind otherwise);
/// function guards always match because the callee is fixed by name.
#[derive(Debug, Clone, PartialEq)]
pub enum Guard {
    Operand(Kind),
    Operands(Kind, Kind),
    Receiver(Discriminator),
    Linked,
}

impl Guard {
    #[inline]
    pub fn matches(&self, args: &[Value]) -> bool {
        match self {
            Guard::Operand(k) => args[0].kind() == *k,
            Guard::Operands(k1, k2) => args[0].kind() == *k1 && args[1].kind() == *k2,
            Guard::Receiver(d) => discriminator_of(&args[0]) == *d,
            Guard::Linked => true,
        }
    }
}

/// A dispatch target a handle can invoke.
#[derive(Clone)]
pub enum Target {
    Binary(BinaryTarget),
    Unary(UnaryTarget),
    Function(FunctionTarget),
    Method(MethodTarget),
}

/// Method-handle analogue: a chain of guarded handles terminated by the
/// fallback.
pub enum Handle {
    Direct(Target),
    Guarded {
        guard: Guard,
        target: Box<Handle>,
        next: Box<Handle>,
    },
    Fallback,
}

impl Handle {
    fn first_target(&self) -> Target {
        match self {
            Handle::Direct(t) => t.clone(),
            Handle::Guarded { target, .. } => target.first_target(),
            Handle::Fallback => unreachable!("fallback handle has no direct target"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SiteStats {
    pub hits: u64,
    pub misses: u64,
    pub relinks: u64,
    pub chain_depth: u32,
    pub megamorphic: bool,
}

/// Per-occurrence dispatch point.
pub struct CallSite {
    pub id: u32,
    pub kind: SiteKind,
    pub name: Rc<str>,
    pub argc: u32,
    pub policy: DispatchPolicy,
    chain: Handle,
    stats: SiteStats,
}

impl CallSite {
    pub fn new(id: u32, kind: SiteKind, name: Rc<str>, argc: u32, policy: DispatchPolicy) -> Self {
        CallSite {
            id,
            kind,
            name,
            argc,
            policy,
            chain: Handle::Fallback,
            stats: SiteStats::default(),
        }
    }

    /// Lean probe for binary-operator sites: the common mono case is one
    /// guard compare and a function-pointer return.
    #[inline]
    pub fn probe_binary(&mut self, a: Kind, b: Kind) -> Option<BinaryTarget> {
        let mut handle = &self.chain;
        loop {
            match handle {
                Handle::Guarded { guard, target, next } => {
                    if matches!(guard, Guard::Operands(k1, k2) if *k1 == a && *k2 == b) {
                        if let Handle::Direct(Target::Binary(f)) = &**target {
                            self.stats.hits += 1;
                            return Some(*f);
                        }
                    }
                    handle = next;
                }
                Handle::Fallback => {
                    self.stats.misses += 1;
                    return None;
                }
                Handle::Direct(_) => unreachable!("operator chains are guarded"),
            }
        }
    }

    /// Walks the chain. A guard match is a hit and returns the cached target;
    /// reaching the fallback is a miss and the caller resolves + relinks.
    #[inline]
    pub fn probe(&mut self, args: &[Value]) -> Option<Target> {
        debug_assert_eq!(args.len(), self.argc as usize);
        let mut handle = &self.chain;
        loop {
            match handle {
                Handle::Guarded { guard, target, next } => {
                    if guard.matches(args) {
                        // Guard soundness: the target runs only for operands
                        // whose discriminators equal the guard.
                        debug_assert!(guard.matches(args));
                        self.stats.hits += 1;
                        return Some(target.first_target());
                    }
                    handle = next;
                }
                Handle::Fallback => {
                    self.stats.misses += 1;
                    return None;
                }
                Handle::Direct(t) => {
                    self.stats.hits += 1;
                    return Some(t.clone());
                }
            }
        }
    }

    /// Called from the fallback path only. The fallback always constructs
    /// the replacement guarded handle (that is the bootstrap's job); the
    /// policy then decides whether the new chain is installed. Megamorphic
    /// sites and the `none` policy build and discard.
    pub fn relink(&mut self, guard: Guard, target: Target) {
        let built = Handle::Guarded {
            guard,
            target: Box::new(Handle::Direct(target)),
            next: Box::new(Handle::Fallback),
        };
        match self.policy {
            DispatchPolicy::None => {}
            _ if self.stats.megamorphic => {}
            DispatchPolicy::Mono => {
                self.chain = built;
                self.stats.chain_depth = 1;
                self.stats.relinks += 1;
            }
            DispatchPolicy::Poly(k) => {
                if self.stats.chain_depth < k {
                    let old = std::mem::replace(&mut self.chain, Handle::Fallback);
                    let Handle::Guarded { guard, target, .. } = built else {
                        unreachable!()
                    };
                    self.chain = Handle::Guarded {
                        guard,
                        target,
                        next: Box::new(old),
                    };
                    self.stats.chain_depth += 1;
                    self.stats.relinks += 1;
                } else {
                    // Too many shapes seen: give up caching for the rest of
                    // the run. The transition is not a relink.
                    self.chain = Handle::Fallback;
                    self.stats.chain_depth = 0;
                    self.stats.megamorphic = true;
                }
            }
        }
    }

    pub fn stats(&self) -> SiteStats {
        self.stats
    }

    pub fn executed(&self) -> bool {
        self.stats.hits + self.stats.misses > 0
    }

    /// One stats line, the `--dump-dispatch-stats` format.
    pub fn stats_line(&self) -> String {
        let s = &self.stats;
        format!(
            "site={} kind={} name={} hits={} misses={} relinks={} depth={} mega={}",
            self.id,
            self.kind.label(),
            self.name,
            s.hits,
            s.misses,
            s.relinks,
            s.chain_depth,
            s.megamorphic
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::operators::{resolve_binary_target, Op};

    fn operator_site(policy: DispatchPolicy) -> CallSite {
        CallSite::new(0, SiteKind::Operator, Rc::from("plus"), 2, policy)
    }

    fn drive(site: &mut CallSite, a: Value, b: Value) -> Value {
        let args = [a, b];
        let target = match site.probe(&args) {
            Some(t) => t,
            None => {
                let t = resolve_binary_target(Op::Plus, args[0].kind(), args[1].kind()).unwrap();
                site.relink(
                    Guard::Operands(args[0].kind(), args[1].kind()),
                    Target::Binary(t),
                );
                Target::Binary(t)
            }
        };
        match target {
            Target::Binary(f) => f(&args[0], &args[1]).unwrap(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn bootstrap_counts_miss_and_relink() {
        let mut site = operator_site(DispatchPolicy::Mono);
        let v = drive(&mut site, Value::Int(1), Value::Int(2));
        assert!(matches!(v, Value::Int(3)));
        let s = site.stats();
        assert_eq!((s.hits, s.misses, s.relinks), (0, 1, 1));
        assert_eq!(s.chain_depth, 1);
    }

    #[test]
    fn second_monomorphic_call_hits() {
        let mut site = operator_site(DispatchPolicy::Mono);
        drive(&mut site, Value::Int(1), Value::Int(2));
        drive(&mut site, Value::Int(3), Value::Int(4));
        let s = site.stats();
        assert_eq!((s.hits, s.misses), (1, 1));
    }

    #[test]
    fn mono_replaces_on_kind_change() {
        let mut site = operator_site(DispatchPolicy::Mono);
        drive(&mut site, Value::Int(1), Value::Int(2));
        let v = drive(&mut site, Value::Double(1.0), Value::Int(2));
        assert!(matches!(v, Value::Double(d) if d == 3.0));
        let s = site.stats();
        assert_eq!((s.misses, s.relinks), (2, 2));
        assert_eq!(s.chain_depth, 1);
        // The chain now holds only the (Double, Int) guard.
        assert!(site.probe(&[Value::Double(1.0), Value::Int(1)]).is_some());
        assert!(site.probe(&[Value::Int(1), Value::Int(1)]).is_none());
    }

    #[test]
    fn poly_two_kinds_then_megamorphic() {
        let mut site = operator_site(DispatchPolicy::Poly(2));
        drive(&mut site, Value::Int(1), Value::Int(2));
        drive(&mut site, Value::Double(1.0), Value::Double(2.0));
        assert_eq!(site.stats().chain_depth, 2);
        // Both installed kinds hit.
        drive(&mut site, Value::Int(1), Value::Int(2));
        drive(&mut site, Value::Double(1.0), Value::Double(2.0));
        assert_eq!(site.stats().hits, 2);
        // A third kind pair trips the megamorphic transition; relinks freeze.
        drive(&mut site, Value::Long(1), Value::Long(2));
        assert!(site.stats().megamorphic);
        assert_eq!(site.stats().relinks, 2);
        drive(&mut site, Value::Long(1), Value::Long(2));
        let s = site.stats();
        assert_eq!(s.relinks, 2);
        assert_eq!(s.hits + s.misses, 6);
    }

    #[test]
    fn none_policy_never_links() {
        let mut site = operator_site(DispatchPolicy::None);
        for _ in 0..5 {
            drive(&mut site, Value::Int(1), Value::Int(2));
        }
        let s = site.stats();
        assert_eq!((s.hits, s.misses, s.relinks), (0, 5, 0));
        assert_eq!(s.chain_depth, 0);
        assert!(!s.megamorphic);
    }

    #[test]
    fn unexecuted_site_stats_are_zero() {
        let site = operator_site(DispatchPolicy::Mono);
        assert_eq!(site.stats(), SiteStats::default());
        assert!(!site.executed());
    }

    #[test]
    fn stats_line_format() {
        let mut site = operator_site(DispatchPolicy::Mono);
        drive(&mut site, Value::Int(1), Value::Int(2));
        assert_eq!(
            site.stats_line(),
            "site=0 kind=operator name=plus hits=0 misses=1 relinks=1 depth=1 mega=false"
        );
    }
}
