//! Tree nodes, keys, paths and the persistent [`TreeTensor`].
//!
//! A tree node is an ordered mapping from keys to child nodes; a value node
//! wraps a leaf. Nodes hold no parent links, so a subtree can be shared by any
//! number of trees. Every mutation copies the path from the root to the
//! changed node and shares everything else.

use std::borrow::Borrow;
use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::constraint::{Constraint, ConstraintTree, Violations};
use crate::leaf::TensorLeaf;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TreeError {
    #[error("keys must be non-empty")]
    EmptyKey,
    #[error("invalid key {key:?}: {reason}")]
    InvalidKey { key: String, reason: &'static str },
    #[error("duplicate key {0:?}")]
    DuplicateKey(String),
    #[error("no node at path {0}")]
    PathNotFound(Path),
    #[error("node at path {0} is a value node, not a tree node")]
    NotATree(Path),
    #[error("the root of a tree tensor must be a tree node")]
    RootNotTree,
    #[error("constraint violation: {0}")]
    ConstraintViolation(Violations),
}

/// A child name. Non-empty, without `/`, and not one of the reserved document
/// markers.
#[derive(Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Key(Arc<str>);

impl Key {
    /// Names used as markers by the document format.
    pub const RESERVED: [&'static str; 3] = ["__leaf__", "__constraints__", "__struct__"];

    pub fn new(s: &str) -> Result<Key, TreeError> {
        if s.is_empty() {
            return Err(TreeError::EmptyKey);
        }
        if s.contains('/') {
            return Err(TreeError::InvalidKey {
                key: s.to_string(),
                reason: "'/' is the path separator",
            });
        }
        if Self::RESERVED.contains(&s) {
            return Err(TreeError::InvalidKey {
                key: s.to_string(),
                reason: "reserved name",
            });
        }
        Ok(Key(Arc::from(s)))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Borrow<str> for Key {
    fn borrow(&self) -> &str {
        &self.0
    }
}

impl fmt::Debug for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(&*self.0, f)
    }
}

impl fmt::Display for Key {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl TryFrom<&str> for Key {
    type Error = TreeError;

    fn try_from(s: &str) -> Result<Self, Self::Error> {
        Key::new(s)
    }
}

/// Keys from the root down to a node. The empty path is the root.
#[derive(Clone, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Path(Vec<Key>);

impl Path {
    pub fn new(keys: Vec<Key>) -> Self {
        Path(keys)
    }

    pub fn root() -> Self {
        Path(Vec::new())
    }

    /// Parses `a/b/c`. Both `""` and `"/"` denote the root.
    pub fn parse(s: &str) -> Result<Self, TreeError> {
        let s = s.strip_prefix('/').unwrap_or(s);
        if s.is_empty() {
            return Ok(Path::root());
        }
        s.split('/').map(Key::new).collect::<Result<_, _>>().map(Path)
    }

    pub fn keys(&self) -> &[Key] {
        &self.0
    }

    pub fn is_root(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn child(&self, key: Key) -> Path {
        let mut keys = self.0.clone();
        keys.push(key);
        Path(keys)
    }

    pub(crate) fn prepend(&mut self, key: Key) {
        self.0.insert(0, key);
    }

    pub fn parent(&self) -> Option<Path> {
        self.0.split_last().map(|(_, p)| Path(p.to_vec()))
    }
}

impl From<&[Key]> for Path {
    fn from(keys: &[Key]) -> Self {
        Path(keys.to_vec())
    }
}

impl FromStr for Path {
    type Err = TreeError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Path::parse(s)
    }
}

impl fmt::Display for Path {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.0.is_empty() {
            return f.write_str("/");
        }
        for (i, k) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str("/")?;
            }
            f.write_str(k.as_str())?;
        }
        Ok(())
    }
}

pub type Children<L = TensorLeaf> = BTreeMap<Key, Arc<Node<L>>>;

/// A value node holding a leaf, or a tree node holding keyed children.
/// Children iterate in ascending key order.
#[derive(Clone, Debug, PartialEq)]
pub enum Node<L = TensorLeaf> {
    Value(L),
    Tree(Children<L>),
}

impl<L> Node<L> {
    pub fn empty_tree() -> Self {
        Node::Tree(BTreeMap::new())
    }

    pub fn is_value(&self) -> bool {
        matches!(self, Node::Value(_))
    }

    pub fn as_value(&self) -> Option<&L> {
        match self {
            Node::Value(v) => Some(v),
            Node::Tree(_) => None,
        }
    }

    pub fn children(&self) -> Option<&Children<L>> {
        match self {
            Node::Value(_) => None,
            Node::Tree(ch) => Some(ch),
        }
    }

    pub fn get(&self, keys: &[Key]) -> Option<&Node<L>> {
        let mut node = self;
        for k in keys {
            node = node.children()?.get(k)?;
        }
        Some(node)
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            Node::Value(_) => 1,
            Node::Tree(ch) => ch.values().map(|c| c.leaf_count()).sum(),
        }
    }

    /// Visits value nodes depth-first in key order.
    pub fn for_each_leaf<'a>(&'a self, f: &mut impl FnMut(&[Key], &'a L)) {
        fn go<'a, L>(node: &'a Node<L>, path: &mut Vec<Key>, f: &mut impl FnMut(&[Key], &'a L)) {
            match node {
                Node::Value(v) => f(path, v),
                Node::Tree(ch) => {
                    for (k, child) in ch {
                        path.push(k.clone());
                        go(child, path, f);
                        path.pop();
                    }
                }
            }
        }
        go(self, &mut Vec::new(), f)
    }

    pub fn leaves(&self) -> Vec<(Path, &L)> {
        let mut out = Vec::new();
        self.for_each_leaf(&mut |p, v| out.push((Path::from(p), v)));
        out
    }

    /// Same key sets at every tree node, and value nodes in the same places.
    /// Leaf contents are ignored.
    pub fn structure_equal<M>(&self, other: &Node<M>) -> bool {
        match (self, other) {
            (Node::Value(_), Node::Value(_)) => true,
            (Node::Tree(a), Node::Tree(b)) => {
                a.len() == b.len()
                    && a.iter()
                        .zip(b.iter())
                        .all(|((ka, ca), (kb, cb))| ka == kb && ca.structure_equal(cb))
            }
            _ => false,
        }
    }

    pub fn try_map<M, E>(&self, f: &mut impl FnMut(&[Key], &L) -> Result<M, E>) -> Result<Node<M>, E> {
        fn go<L, M, E>(
            node: &Node<L>,
            path: &mut Vec<Key>,
            f: &mut impl FnMut(&[Key], &L) -> Result<M, E>,
        ) -> Result<Node<M>, E> {
            match node {
                Node::Value(v) => Ok(Node::Value(f(path, v)?)),
                Node::Tree(ch) => {
                    let mut out = BTreeMap::new();
                    for (k, child) in ch {
                        path.push(k.clone());
                        let mapped = go(child, path, f);
                        path.pop();
                        out.insert(k.clone(), Arc::new(mapped?));
                    }
                    Ok(Node::Tree(out))
                }
            }
        }
        go(self, &mut Vec::new(), f)
    }

    pub fn map<M>(&self, mut f: impl FnMut(&L) -> M) -> Node<M> {
        self.try_map(&mut |_, v| Ok::<_, std::convert::Infallible>(f(v)))
            .unwrap_or_else(|e| match e {})
    }
}

impl From<TensorLeaf> for Node {
    fn from(leaf: TensorLeaf) -> Self {
        Node::Value(leaf)
    }
}

impl From<TreeTensor> for Node {
    fn from(t: TreeTensor) -> Self {
        Arc::unwrap_or_clone(t.root)
    }
}

/// Nested description of a tree, used to build one with key checks.
#[derive(Clone, Debug)]
pub enum Entry {
    Leaf(TensorLeaf),
    Tree(Vec<(String, Entry)>),
}

impl Entry {
    fn into_node(self) -> Result<Node, TreeError> {
        match self {
            Entry::Leaf(l) => Ok(Node::Value(l)),
            Entry::Tree(pairs) => {
                let mut children = BTreeMap::new();
                for (k, e) in pairs {
                    let key = Key::new(&k)?;
                    if children.contains_key(&key) {
                        return Err(TreeError::DuplicateKey(k));
                    }
                    children.insert(key, Arc::new(e.into_node()?));
                }
                Ok(Node::Tree(children))
            }
        }
    }
}

/// Builds a [`TreeTensor`] from nested `"key": value` pairs.
///
/// Values are either a braced subtree or a single token convertible into a
/// [`TensorLeaf`]; wrap longer expressions in parentheses.
///
/// ```
/// use treetensor::tree;
/// let t = tree! { "a": 2, "b": 3, "x": { "c": 5, "d": 7 } }.unwrap();
/// assert_eq!(t.leaf_count(), 4);
/// ```
#[macro_export]
macro_rules! tree {
    (@entries $($key:literal : $val:tt),* $(,)?) => {
        vec![$(($key.to_string(), $crate::tree!(@entry $val))),*]
    };
    (@entry { $($inner:tt)* }) => {
        $crate::tree::Entry::Tree($crate::tree!(@entries $($inner)*))
    };
    (@entry $val:expr) => {
        $crate::tree::Entry::Leaf($crate::TensorLeaf::from($val))
    };
    ($($body:tt)*) => {
        $crate::TreeTensor::build($crate::tree!(@entries $($body)*))
    };
}

/// A tree whose root is a tree node, paired with the constraints on its nodes.
///
/// Values are immutable; [`set`](Self::set) and [`remove`](Self::remove)
/// return new trees that share all untouched subtrees with the original.
#[derive(Clone, Debug, PartialEq)]
pub struct TreeTensor {
    root: Arc<Node>,
    constraints: Arc<ConstraintTree>,
}

impl Default for TreeTensor {
    fn default() -> Self {
        Self::empty()
    }
}

impl TreeTensor {
    pub fn empty() -> Self {
        Self::from_children(BTreeMap::new())
    }

    pub fn from_children(children: Children) -> Self {
        TreeTensor {
            root: Arc::new(Node::Tree(children)),
            constraints: Arc::default(),
        }
    }

    pub fn from_node(node: Node) -> Result<Self, TreeError> {
        match node {
            Node::Tree(ch) => Ok(Self::from_children(ch)),
            Node::Value(_) => Err(TreeError::RootNotTree),
        }
    }

    /// Builds an unconstrained tree from key/entry pairs, rejecting empty,
    /// invalid and duplicate keys.
    pub fn build(pairs: Vec<(String, Entry)>) -> Result<Self, TreeError> {
        Self::from_node(Entry::Tree(pairs).into_node()?)
    }

    /// Pairs a root with a constraint tree without distributing or validating.
    #[doc(hidden)]
    pub fn from_parts_unchecked(root: Node, constraints: ConstraintTree) -> Self {
        assert!(!root.is_value(), "root must be a tree node");
        TreeTensor {
            root: Arc::new(root),
            constraints: Arc::new(constraints),
        }
    }

    pub fn root(&self) -> &Node {
        &self.root
    }

    pub fn children(&self) -> &Children {
        self.root.children().expect("root is a tree node")
    }

    pub fn constraints(&self) -> &ConstraintTree {
        &self.constraints
    }

    pub fn is_empty(&self) -> bool {
        self.children().is_empty()
    }

    pub fn get(&self, path: &Path) -> Result<&Node, TreeError> {
        self.root
            .get(path.keys())
            .ok_or_else(|| TreeError::PathNotFound(path.clone()))
    }

    pub fn get_leaf(&self, path: &Path) -> Result<&TensorLeaf, TreeError> {
        self.get(path)?
            .as_value()
            .ok_or_else(|| TreeError::PathNotFound(path.clone()))
    }

    /// Returns a tree with `node` placed at `path`, replacing whatever was
    /// there. The parent of `path` must be an existing tree node. Fails without
    /// side effects if the new subtree or its ancestors violate a constraint.
    pub fn set(&self, path: &Path, node: impl Into<Node>) -> Result<TreeTensor, TreeError> {
        let node = node.into();
        let root = match path.keys().split_last() {
            None => {
                if node.is_value() {
                    return Err(TreeError::RootNotTree);
                }
                node
            }
            Some(_) => replace_at(&self.root, path.keys(), 0, Some(Arc::new(node)))?,
        };
        self.with_new_root(root, path)
    }

    /// Returns a tree without the node at `path`.
    pub fn remove(&self, path: &Path) -> Result<TreeTensor, TreeError> {
        if path.is_root() {
            return self.set(path, Node::empty_tree());
        }
        let root = replace_at(&self.root, path.keys(), 0, None)?;
        self.with_new_root(root, path)
    }

    fn with_new_root(&self, root: Node, path: &Path) -> Result<TreeTensor, TreeError> {
        let constraints = if self.constraints.is_trivial() {
            Arc::clone(&self.constraints)
        } else {
            Arc::new(
                self.constraints
                    .after_update(&root, path.keys())
                    .map_err(TreeError::ConstraintViolation)?,
            )
        };
        Ok(TreeTensor {
            root: Arc::new(root),
            constraints,
        })
    }

    /// Value nodes in depth-first, key-ascending order.
    pub fn leaves(&self) -> Vec<(Path, &TensorLeaf)> {
        self.root.leaves()
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    pub fn structure_equal(&self, other: &TreeTensor) -> bool {
        self.root.structure_equal(&other.root)
    }

    /// A copy sharing no storage with `self`.
    pub fn deep_copy(&self) -> TreeTensor {
        let root = self.root.map(TensorLeaf::deep_copy);
        TreeTensor {
            root: Arc::new(root),
            constraints: Arc::new((*self.constraints).clone()),
        }
    }

    /// The same tree with every node unconstrained.
    pub fn without_constraints(&self) -> TreeTensor {
        TreeTensor {
            root: Arc::clone(&self.root),
            constraints: Arc::default(),
        }
    }

    /// Places constraints, distributes them down the tree, and validates the
    /// result. Existing constraints are kept and added to.
    pub fn with_placements(&self, placements: &BTreeMap<Path, Constraint>) -> Result<TreeTensor, TreeError> {
        let t = self.with_placements_unchecked(placements)?;
        t.validate_full().map_err(TreeError::ConstraintViolation)?;
        Ok(t)
    }

    /// Like [`with_placements`](Self::with_placements) but leaves validation
    /// to the caller.
    pub fn with_placements_unchecked(&self, placements: &BTreeMap<Path, Constraint>) -> Result<TreeTensor, TreeError> {
        let mut all = self.constraints.placements();
        for (p, c) in placements {
            let merged = all.get(p).map_or_else(|| c.clone(), |prev| prev.plus(c));
            all.insert(p.clone(), merged);
        }
        let ct = ConstraintTree::build(&self.root, &all).map_err(TreeError::PathNotFound)?;
        Ok(TreeTensor {
            root: Arc::clone(&self.root),
            constraints: Arc::new(ct),
        })
    }

    /// Checks every node against its constraint, reporting all failing nodes.
    pub fn validate_full(&self) -> Result<(), Violations> {
        let v = self.constraints.validate(&self.root);
        if v.is_empty() {
            Ok(())
        } else {
            Err(Violations(v))
        }
    }
}

fn replace_at(node: &Node, keys: &[Key], depth: usize, value: Option<Arc<Node>>) -> Result<Node, TreeError> {
    let Node::Tree(children) = node else {
        return Err(TreeError::NotATree(Path::from(&keys[..depth])));
    };
    let key = &keys[depth];
    let mut children = children.clone();
    if depth + 1 == keys.len() {
        match value {
            Some(v) => {
                children.insert(key.clone(), v);
            }
            None => {
                if children.remove(key).is_none() {
                    return Err(TreeError::PathNotFound(Path::from(keys)));
                }
            }
        }
    } else {
        let child = children
            .get(key)
            .ok_or_else(|| TreeError::PathNotFound(Path::from(&keys[..=depth])))?;
        let updated = replace_at(child, keys, depth + 1, value)?;
        children.insert(key.clone(), Arc::new(updated));
    }
    Ok(Node::Tree(children))
}

impl fmt::Display for TreeTensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn go(node: &Node, prefix: &str, f: &mut fmt::Formatter<'_>) -> fmt::Result {
            if let Node::Tree(ch) = node {
                let n = ch.len();
                for (i, (k, child)) in ch.iter().enumerate() {
                    let last = i + 1 == n;
                    let branch = if last { "└── " } else { "├── " };
                    match &**child {
                        Node::Value(leaf) => writeln!(f, "{prefix}{branch}{k} --> {leaf}")?,
                        Node::Tree(_) => {
                            writeln!(f, "{prefix}{branch}{k}")?;
                            let ext = if last { "    " } else { "│   " };
                            go(child, &format!("{prefix}{ext}"), f)?;
                        }
                    }
                }
            }
            Ok(())
        }
        writeln!(f, "<TreeTensor>")?;
        go(&self.root, "", f)
    }
}
