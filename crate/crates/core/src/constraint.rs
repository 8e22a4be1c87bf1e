//! Constraints on tree nodes: a closed atom language, its algebra (sum,
//! cover, empty), the inherit map, constraint trees and validation.
//!
//! An *inherited* constraint holds on a value node when its atom holds on the
//! leaf, and on a tree node when every child satisfies it. A *non-inherited*
//! constraint is pinned to a single node. Distributing a constraint tree adds
//! each node's inherited part to all of its children.

use std::collections::BTreeMap;
use std::fmt;

use crate::leaf::{Device, TensorLeaf};
use crate::scalar::DType;
use crate::tree::{Key, Node, Path};

/// Predicates on a single leaf.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum LeafAtom {
    DtypeIs(DType),
    NdimIs(usize),
    /// `shape[axis] == size`, axes are 0-based.
    DimEquals { axis: usize, size: usize },
    /// `shape[axis] >= size`.
    DimAtLeast { axis: usize, size: usize },
    DeviceIs(Device),
}

impl LeafAtom {
    pub fn holds(&self, leaf: &TensorLeaf) -> bool {
        let shape = leaf.shape();
        match self {
            LeafAtom::DtypeIs(d) => leaf.dtype() == *d,
            LeafAtom::NdimIs(n) => shape.len() == *n,
            LeafAtom::DimEquals { axis, size } => shape.get(*axis) == Some(size),
            LeafAtom::DimAtLeast { axis, size } => shape.get(*axis).is_some_and(|s| s >= size),
            LeafAtom::DeviceIs(dev) => leaf.device() == dev,
        }
    }

    /// Whether every leaf satisfying `self` satisfies `other`.
    fn implies(&self, other: &LeafAtom) -> bool {
        use LeafAtom::*;
        match (self, other) {
            (a, b) if a == b => true,
            (DimAtLeast { axis: a1, size: s1 }, DimAtLeast { axis: a2, size: s2 }) => a1 == a2 && s1 >= s2,
            (DimEquals { axis: a1, size: s1 }, DimAtLeast { axis: a2, size: s2 }) => a1 == a2 && s1 >= s2,
            _ => false,
        }
    }
}

/// Predicates on a whole node, relative to that node.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum NodeAtom {
    /// The subtree holds exactly this many value nodes.
    LeafCountIs(usize),
    /// The value nodes at these relative paths all exist and share one shape.
    ShapesEqual(Vec<Path>),
    /// The value nodes at these relative paths all exist, have at least `len`
    /// dimensions, and agree on their first `len` dimensions.
    SharedPrefix { paths: Vec<Path>, len: usize },
}

impl NodeAtom {
    pub fn shapes_equal(paths: impl IntoIterator<Item = Path>) -> Self {
        NodeAtom::ShapesEqual(canonical_paths(paths))
    }

    pub fn shared_prefix(paths: impl IntoIterator<Item = Path>, len: usize) -> Self {
        NodeAtom::SharedPrefix {
            paths: canonical_paths(paths),
            len,
        }
    }

    pub fn holds(&self, node: &Node) -> bool {
        match self {
            NodeAtom::LeafCountIs(n) => node.leaf_count() == *n,
            NodeAtom::ShapesEqual(paths) => match resolve_leaves(node, paths) {
                Some(leaves) => leaves.windows(2).all(|w| w[0].shape() == w[1].shape()),
                None => false,
            },
            NodeAtom::SharedPrefix { paths, len } => match resolve_leaves(node, paths) {
                Some(leaves) => {
                    leaves.iter().all(|l| l.ndim() >= *len)
                        && leaves.windows(2).all(|w| w[0].shape()[..*len] == w[1].shape()[..*len])
                }
                None => false,
            },
        }
    }

    fn implies(&self, other: &NodeAtom) -> bool {
        match (self, other) {
            (a, b) if a == b => true,
            (
                NodeAtom::SharedPrefix { paths: p1, len: l1 },
                NodeAtom::SharedPrefix { paths: p2, len: l2 },
            ) => p1 == p2 && l1 >= l2,
            _ => false,
        }
    }
}

fn canonical_paths(paths: impl IntoIterator<Item = Path>) -> Vec<Path> {
    let mut v: Vec<Path> = paths.into_iter().collect();
    v.sort();
    v.dedup();
    v
}

fn resolve_leaves<'a>(node: &'a Node, paths: &[Path]) -> Option<Vec<&'a TensorLeaf>> {
    paths
        .iter()
        .map(|p| node.get(p.keys()).and_then(Node::as_value))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Atom {
    Leaf(LeafAtom),
    Node(NodeAtom),
}

impl Atom {
    fn holds_on(&self, node: &Node) -> bool {
        match (self, node) {
            (Atom::Leaf(a), Node::Value(leaf)) => a.holds(leaf),
            (Atom::Leaf(_), Node::Tree(_)) => false,
            (Atom::Node(a), n) => a.holds(n),
        }
    }

    fn implies(&self, other: &Atom) -> bool {
        match (self, other) {
            (Atom::Leaf(a), Atom::Leaf(b)) => a.implies(b),
            (Atom::Node(a), Atom::Node(b)) => a.implies(b),
            _ => false,
        }
    }
}

impl From<LeafAtom> for Atom {
    fn from(a: LeafAtom) -> Self {
        Atom::Leaf(a)
    }
}

impl From<NodeAtom> for Atom {
    fn from(a: NodeAtom) -> Self {
        Atom::Node(a)
    }
}

/// A constraint in canonical form.
///
/// `Sum` always holds two or more distinct simple constraints (never `Empty`
/// or a nested `Sum`) in sorted order; build sums with [`Constraint::sum`] or
/// [`c_sum`] to keep that invariant.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Constraint {
    #[default]
    Empty,
    Inherit(LeafAtom),
    NonInherit(Atom),
    Sum(Vec<Constraint>),
}

impl Constraint {
    pub fn inherit(atom: LeafAtom) -> Self {
        Constraint::Inherit(atom)
    }

    pub fn non_inherit(atom: impl Into<Atom>) -> Self {
        Constraint::NonInherit(atom.into())
    }

    pub fn sum<I: IntoIterator<Item = Constraint>>(parts: I) -> Self {
        let mut flat = Vec::new();
        for c in parts {
            match c {
                Constraint::Empty => {}
                Constraint::Sum(inner) => flat.extend(inner),
                simple => flat.push(simple),
            }
        }
        flat.sort();
        flat.dedup();
        match flat.len() {
            0 => Constraint::Empty,
            1 => flat.pop().unwrap(),
            _ => Constraint::Sum(flat),
        }
    }

    /// The simple constraints this one is the sum of.
    pub fn parts(&self) -> &[Constraint] {
        match self {
            Constraint::Empty => &[],
            Constraint::Sum(v) => v,
            simple => std::slice::from_ref(simple),
        }
    }

    pub fn plus(&self, other: &Constraint) -> Constraint {
        if other.is_empty() {
            return self.clone();
        }
        if self.is_empty() {
            return other.clone();
        }
        Constraint::sum(self.parts().iter().chain(other.parts()).cloned())
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Constraint::Empty)
    }

    /// The part passed on to children: inherited atoms survive, everything
    /// pinned to this node is dropped.
    pub fn inherit_part(&self) -> Constraint {
        match self {
            Constraint::Empty | Constraint::NonInherit(_) => Constraint::Empty,
            Constraint::Inherit(_) => self.clone(),
            Constraint::Sum(v) => Constraint::sum(v.iter().filter(|c| matches!(c, Constraint::Inherit(_))).cloned()),
        }
    }

    /// `self ⊒ other`: every node satisfying `self` satisfies `other`.
    ///
    /// Decided syntactically: each simple part of `other` must be implied by
    /// some simple part of `self`. This is sound for every node and complete
    /// up to the listed atom implications.
    pub fn covers(&self, other: &Constraint) -> bool {
        other
            .parts()
            .iter()
            .all(|b| self.parts().iter().any(|a| simple_implies(a, b)))
    }

    pub fn equals(&self, other: &Constraint) -> bool {
        self.covers(other) && other.covers(self)
    }

    pub fn satisfied_by(&self, node: &Node) -> bool {
        satisfies(self, node)
    }
}

fn simple_implies(a: &Constraint, b: &Constraint) -> bool {
    use Constraint::*;
    match (a, b) {
        (Inherit(x), Inherit(y)) => x.implies(y),
        (NonInherit(x), NonInherit(y)) => x.implies(y),
        // A pinned leaf atom is false on tree nodes and agrees with the
        // inherited form on value nodes.
        (NonInherit(Atom::Leaf(x)), Inherit(y)) => x.implies(y),
        _ => false,
    }
}

/// Canonical sum of constraints.
pub fn c_sum<I: IntoIterator<Item = Constraint>>(cs: I) -> Constraint {
    Constraint::sum(cs)
}

pub fn covers(c1: &Constraint, c2: &Constraint) -> bool {
    c1.covers(c2)
}

pub fn equals(c1: &Constraint, c2: &Constraint) -> bool {
    c1.equals(c2)
}

pub fn is_empty(c: &Constraint) -> bool {
    c.is_empty()
}

/// The inherit map: inherited atoms map to themselves, pinned atoms to the
/// empty constraint.
pub fn inherit(c: &Constraint) -> Constraint {
    c.inherit_part()
}

/// Full semantic check of `c` against `node`.
pub fn satisfies(c: &Constraint, node: &Node) -> bool {
    match c {
        Constraint::Empty => true,
        Constraint::Inherit(atom) => match node {
            Node::Value(leaf) => atom.holds(leaf),
            Node::Tree(children) => children.values().all(|ch| satisfies(c, ch)),
        },
        Constraint::NonInherit(atom) => atom.holds_on(node),
        Constraint::Sum(parts) => parts.iter().all(|p| satisfies(p, node)),
    }
}

/// The parts of `c` that fail on `node` itself. Inherited parts on a tree node
/// are skipped: after distribution they are checked on the children.
fn local_failures(c: &Constraint, node: &Node) -> Constraint {
    let failing = c.parts().iter().filter(|part| match (part, node) {
        (Constraint::Inherit(atom), Node::Value(leaf)) => !atom.holds(leaf),
        (Constraint::Inherit(_), Node::Tree(_)) => false,
        (Constraint::NonInherit(atom), n) => !atom.holds_on(n),
        _ => unreachable!("parts are simple"),
    });
    Constraint::sum(failing.cloned())
}

impl fmt::Display for LeafAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LeafAtom::DtypeIs(d) => write!(f, "dtype={d}"),
            LeafAtom::NdimIs(n) => write!(f, "ndim={n}"),
            LeafAtom::DimEquals { axis, size } => write!(f, "dim[{axis}]={size}"),
            LeafAtom::DimAtLeast { axis, size } => write!(f, "dim[{axis}]>={size}"),
            LeafAtom::DeviceIs(d) => write!(f, "device={d}"),
        }
    }
}

fn write_paths(f: &mut fmt::Formatter<'_>, paths: &[Path]) -> fmt::Result {
    for (i, p) in paths.iter().enumerate() {
        if i > 0 {
            f.write_str(",")?;
        }
        write!(f, "{p}")?;
    }
    Ok(())
}

impl fmt::Display for NodeAtom {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            NodeAtom::LeafCountIs(n) => write!(f, "leaf_count={n}"),
            NodeAtom::ShapesEqual(paths) => {
                f.write_str("shapes_equal(")?;
                write_paths(f, paths)?;
                f.write_str(")")
            }
            NodeAtom::SharedPrefix { paths, len } => {
                f.write_str("shared_prefix(")?;
                write_paths(f, paths)?;
                write!(f, "; {len})")
            }
        }
    }
}

impl fmt::Display for Constraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Constraint::Empty => f.write_str("empty"),
            Constraint::Inherit(a) => write!(f, "inherit({a})"),
            Constraint::NonInherit(Atom::Leaf(a)) => write!(f, "pinned({a})"),
            Constraint::NonInherit(Atom::Node(a)) => write!(f, "pinned({a})"),
            Constraint::Sum(parts) => {
                for (i, p) in parts.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    write!(f, "{p}")?;
                }
                Ok(())
            }
        }
    }
}

/// A constraint failing at one node.
#[derive(Clone, Debug, PartialEq)]
pub struct Violation {
    pub path: Path,
    /// The failing parts of the node's effective constraint.
    pub constraint: Constraint,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: violates {}", self.path, self.constraint)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Violations(pub Vec<Violation>);

impl fmt::Display for Violations {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        Ok(())
    }
}

/// Constraints attached to the nodes of one tree.
///
/// Storage is sparse. A child without an entry carries exactly the inherited
/// part of its parent's constraint, and so does its whole subtree. Entries
/// that add nothing over that default are pruned, so two constraint trees
/// describing the same assignment compare equal.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintTree {
    constraint: Constraint,
    children: BTreeMap<Key, ConstraintTree>,
}

impl ConstraintTree {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn constraint(&self) -> &Constraint {
        &self.constraint
    }

    pub fn explicit_children(&self) -> &BTreeMap<Key, ConstraintTree> {
        &self.children
    }

    /// True when every node of the paired tree is unconstrained.
    pub fn is_trivial(&self) -> bool {
        self.constraint.is_empty() && self.children.is_empty()
    }

    /// Places each constraint at its path, without distribution.
    pub fn placed(root: &Node, placements: &BTreeMap<Path, Constraint>) -> Result<Self, Path> {
        let mut ct = ConstraintTree::empty();
        for (path, c) in placements {
            if root.get(path.keys()).is_none() {
                return Err(path.clone());
            }
            let mut entry = &mut ct;
            for k in path.keys() {
                entry = entry.children.entry(k.clone()).or_default();
            }
            entry.constraint = entry.constraint.plus(c);
        }
        Ok(ct)
    }

    /// Places and distributes. Does not validate.
    pub fn build(root: &Node, placements: &BTreeMap<Path, Constraint>) -> Result<Self, Path> {
        let mut ct = Self::placed(root, placements)?;
        ct.distribute();
        ct.normalize();
        Ok(ct)
    }

    /// One top-down pass of `child ← child + Ψ(parent)`. The inherit map is
    /// idempotent, so a single pass reaches the fixpoint.
    pub fn distribute(&mut self) {
        let inherited = self.constraint.inherit_part();
        for child in self.children.values_mut() {
            child.constraint = child.constraint.plus(&inherited);
            child.distribute();
        }
    }

    fn normalize(&mut self) {
        let inherited = self.constraint.inherit_part();
        self.children.retain(|_, child| {
            child.normalize();
            !(child.children.is_empty() && child.constraint == inherited)
        });
    }

    /// Drops entries for nodes that no longer exist in `node`.
    fn retain_structure(&mut self, node: &Node) {
        match node {
            Node::Value(_) => self.children.clear(),
            Node::Tree(children) => self.children.retain(|k, entry| match children.get(k) {
                Some(child) => {
                    entry.retain_structure(child);
                    true
                }
                None => false,
            }),
        }
    }

    /// Effective constraint at `path`. Past the last explicit entry every
    /// node carries that entry's inherited part.
    pub fn at(&self, path: &[Key]) -> Constraint {
        let mut entry = self;
        for k in path {
            match entry.children.get(k) {
                Some(child) => entry = child,
                None => return entry.constraint.inherit_part(),
            }
        }
        entry.constraint.clone()
    }

    /// Dense copy with an explicit entry for every node of `root`.
    pub fn expand(&self, root: &Node) -> ConstraintTree {
        fn go(entry: Option<&ConstraintTree>, inherited: &Constraint, node: &Node) -> ConstraintTree {
            let constraint = match entry {
                Some(e) => e.constraint.plus(inherited),
                None => inherited.clone(),
            };
            let psi = constraint.inherit_part();
            let children = match node {
                Node::Value(_) => BTreeMap::new(),
                Node::Tree(ch) => ch
                    .iter()
                    .map(|(k, child)| {
                        let sub = entry.and_then(|e| e.children.get(k));
                        (k.clone(), go(sub, &psi, child))
                    })
                    .collect(),
            };
            ConstraintTree { constraint, children }
        }
        go(Some(self), &Constraint::Empty, root)
    }

    /// Minimal placements that rebuild this tree: at each explicit entry, the
    /// parts not already inherited from the parent.
    pub fn placements(&self) -> BTreeMap<Path, Constraint> {
        fn go(entry: &ConstraintTree, inherited: &Constraint, path: &mut Vec<Key>, out: &mut BTreeMap<Path, Constraint>) {
            let own = Constraint::sum(
                entry
                    .constraint
                    .parts()
                    .iter()
                    .filter(|p| !inherited.parts().contains(p))
                    .cloned(),
            );
            if !own.is_empty() {
                out.insert(Path::new(path.clone()), own);
            }
            let psi = entry.constraint.inherit_part();
            for (k, child) in &entry.children {
                path.push(k.clone());
                go(child, &psi, path, out);
                path.pop();
            }
        }
        let mut out = BTreeMap::new();
        go(self, &Constraint::Empty, &mut Vec::new(), &mut out);
        out
    }

    /// Checks every node of `root`; reports each failing node once.
    pub fn validate(&self, root: &Node) -> Vec<Violation> {
        let mut out = Vec::new();
        validate_node(root, Some(self), &Constraint::Empty, &mut Vec::new(), &mut out);
        out
    }

    /// Constraint tree after the subtree at `path` of the previous tree was
    /// replaced (or removed, when `new_root` has nothing there). Only the
    /// ancestors of `path` and the new subtree are checked.
    pub(crate) fn after_update(&self, new_root: &Node, path: &[Key]) -> Result<ConstraintTree, Violations> {
        let mut ct = self.clone();
        let target = new_root.get(path);
        if let Some((last, parent_keys)) = path.split_last() {
            let mut entry = Some(&mut ct);
            for k in parent_keys {
                entry = entry.and_then(|e| e.children.get_mut(k));
            }
            if let Some(parent) = entry {
                match target {
                    Some(node) => {
                        if let Some(e) = parent.children.get_mut(last) {
                            e.retain_structure(node);
                        }
                    }
                    None => {
                        parent.children.remove(last);
                    }
                }
            }
        } else if let Some(node) = target {
            ct.retain_structure(node);
        }
        ct.normalize();

        let mut violations = Vec::new();
        let mut entry = Some(&ct);
        let mut inherited = Constraint::Empty;
        let mut node = new_root;
        let mut walked = Vec::new();
        for k in path {
            let eff = effective(entry, &inherited);
            let failing = local_failures(&eff, node);
            if !failing.is_empty() {
                violations.push(Violation {
                    path: Path::new(walked.clone()),
                    constraint: failing,
                });
            }
            inherited = eff.inherit_part();
            entry = entry.and_then(|e| e.children.get(k));
            walked.push(k.clone());
            match node.get(std::slice::from_ref(k)) {
                Some(n) => node = n,
                None => break,
            }
        }
        if let Some(target) = target {
            validate_node(target, entry, &inherited, &mut walked, &mut violations);
        }
        if violations.is_empty() {
            Ok(ct)
        } else {
            Err(Violations(violations))
        }
    }
}

fn effective(entry: Option<&ConstraintTree>, inherited: &Constraint) -> Constraint {
    match entry {
        Some(e) => e.constraint.plus(inherited),
        None => inherited.clone(),
    }
}

fn validate_node(
    node: &Node,
    entry: Option<&ConstraintTree>,
    inherited: &Constraint,
    path: &mut Vec<Key>,
    out: &mut Vec<Violation>,
) {
    let eff = effective(entry, inherited);
    if eff.is_empty() && entry.is_none_or(|e| e.children.is_empty()) {
        return;
    }
    let failing = local_failures(&eff, node);
    if !failing.is_empty() {
        out.push(Violation {
            path: Path::new(path.clone()),
            constraint: failing,
        });
    }
    if let Node::Tree(children) = node {
        let psi = eff.inherit_part();
        for (k, child) in children {
            path.push(k.clone());
            validate_node(child, entry.and_then(|e| e.children.get(k)), &psi, path, out);
            path.pop();
        }
    }
}
