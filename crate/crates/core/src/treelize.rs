//! Lifting leaf functions to functions over trees.
//!
//! A lifted function walks its tree arguments in lockstep. At each position
//! tree-node arguments contribute their children, merged under a
//! [`MismatchPolicy`]; raw values and value nodes are handed unchanged to
//! every branch below. Once no tree node is left among the arguments the leaf
//! function runs.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use smallvec::SmallVec;

use crate::constraint::Violations;
use crate::leaf::{self, BinaryFn, LeafError, TensorLeaf, UnaryFn};
use crate::tree::{Children, Key, Node, Path, TreeTensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LiftError {
    #[error("at {path}: {source}")]
    Leaf { path: Path, source: LeafError },
    #[error("key sets differ at {path}; unmatched keys: {}", join_keys(.keys))]
    StrictKeyMismatch { path: Path, keys: Vec<Key> },
    #[error("policy {0} needs a default value")]
    MissingDefault(PolicyKind),
    #[error("policy {0} takes no default value")]
    UnexpectedDefault(PolicyKind),
    #[error("`{op}` takes {expected} arguments, got {actual}")]
    ArityMismatch { op: String, expected: usize, actual: usize },
    #[error("at least one argument must be a tree")]
    NoTreeArgument,
    #[error("at {path}: split gives {actual} pieces where other leaves give {expected}")]
    InconsistentSplit { path: Path, expected: usize, actual: usize },
    #[error("the tree has no leaves")]
    NoLeaves,
    #[error("result violates carried-over constraints: {0}")]
    Constraint(Violations),
}

fn join_keys(keys: &[Key]) -> String {
    keys.iter().map(Key::as_str).collect::<Vec<_>>().join(", ")
}

impl LiftError {
    /// Re-roots the error one level down, under `key`.
    fn under(mut self, key: &Key) -> Self {
        match &mut self {
            LiftError::Leaf { path, .. }
            | LiftError::StrictKeyMismatch { path, .. }
            | LiftError::InconsistentSplit { path, .. } => path.prepend(key.clone()),
            _ => {}
        }
        self
    }

    fn leaf(source: LeafError) -> Self {
        LiftError::Leaf {
            path: Path::root(),
            source,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PolicyKind {
    Strict,
    Inner,
    Outer,
    Left,
}

impl PolicyKind {
    pub const ALL: [PolicyKind; 4] = [PolicyKind::Strict, PolicyKind::Inner, PolicyKind::Outer, PolicyKind::Left];

    pub fn name(self) -> &'static str {
        match self {
            PolicyKind::Strict => "strict",
            PolicyKind::Inner => "inner",
            PolicyKind::Outer => "outer",
            PolicyKind::Left => "left",
        }
    }

    pub fn needs_default(self) -> bool {
        matches!(self, PolicyKind::Outer | PolicyKind::Left)
    }
}

impl fmt::Display for PolicyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PolicyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown policy `{s}` (expected strict, inner, outer or left)"))
    }
}

/// How differing key sets are reconciled. Outer and Left substitute their
/// default leaf wherever a tree argument lacks a child.
#[derive(Clone, Debug, Default, PartialEq)]
pub enum MismatchPolicy {
    #[default]
    Strict,
    Inner,
    Outer(TensorLeaf),
    Left(TensorLeaf),
}

impl MismatchPolicy {
    pub fn new(kind: PolicyKind, default: Option<TensorLeaf>) -> Result<Self, LiftError> {
        match (kind, default) {
            (PolicyKind::Strict, None) => Ok(MismatchPolicy::Strict),
            (PolicyKind::Inner, None) => Ok(MismatchPolicy::Inner),
            (PolicyKind::Outer, Some(d)) => Ok(MismatchPolicy::Outer(d)),
            (PolicyKind::Left, Some(d)) => Ok(MismatchPolicy::Left(d)),
            (k, None) => Err(LiftError::MissingDefault(k)),
            (k, Some(_)) => Err(LiftError::UnexpectedDefault(k)),
        }
    }

    pub fn kind(&self) -> PolicyKind {
        match self {
            MismatchPolicy::Strict => PolicyKind::Strict,
            MismatchPolicy::Inner => PolicyKind::Inner,
            MismatchPolicy::Outer(_) => PolicyKind::Outer,
            MismatchPolicy::Left(_) => PolicyKind::Left,
        }
    }

    pub fn default_leaf(&self) -> Option<&TensorLeaf> {
        match self {
            MismatchPolicy::Outer(d) | MismatchPolicy::Left(d) => Some(d),
            _ => None,
        }
    }
}

/// Merges the key sets of sibling tree nodes. The result is in canonical
/// (ascending) order.
pub fn merge_keys<L>(nodes: &[&Children<L>], kind: PolicyKind) -> Result<Vec<Key>, LiftError> {
    let Some((first, rest)) = nodes.split_first() else {
        return Ok(Vec::new());
    };
    let union = || {
        let mut all: Vec<Key> = nodes.iter().flat_map(|c| c.keys().cloned()).collect();
        all.sort_unstable();
        all.dedup();
        all
    };
    let in_all = |k: &Key| rest.iter().all(|c| c.contains_key(k));
    Ok(match kind {
        PolicyKind::Left => first.keys().cloned().collect(),
        PolicyKind::Inner => first.keys().filter(|k| in_all(k)).cloned().collect(),
        PolicyKind::Outer => union(),
        PolicyKind::Strict => {
            let union = union();
            let odd: Vec<Key> = union
                .iter()
                .filter(|k| !nodes.iter().all(|c| c.contains_key(*k)))
                .cloned()
                .collect();
            if !odd.is_empty() {
                return Err(LiftError::StrictKeyMismatch {
                    path: Path::root(),
                    keys: odd,
                });
            }
            union
        }
    })
}

/// A leaf-level function that can be lifted.
pub trait LeafFn {
    fn name(&self) -> &str;

    /// Fixed number of arguments, or `None` when variadic.
    fn arity(&self) -> Option<usize>;

    fn call(&self, args: &[&TensorLeaf]) -> Result<TensorLeaf, LeafError>;
}

impl LeafFn for UnaryFn {
    fn name(&self) -> &str {
        UnaryFn::name(*self)
    }

    fn arity(&self) -> Option<usize> {
        Some(1)
    }

    fn call(&self, args: &[&TensorLeaf]) -> Result<TensorLeaf, LeafError> {
        leaf::ew_unary(*self, args[0])
    }
}

impl LeafFn for BinaryFn {
    fn name(&self) -> &str {
        BinaryFn::name(*self)
    }

    fn arity(&self) -> Option<usize> {
        Some(2)
    }

    fn call(&self, args: &[&TensorLeaf]) -> Result<TensorLeaf, LeafError> {
        leaf::ew_binary(*self, args[0], args[1])
    }
}

/// `x * y - z` on three arguments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MulSub;

impl LeafFn for MulSub {
    fn name(&self) -> &str {
        "mul_sub"
    }

    fn arity(&self) -> Option<usize> {
        Some(3)
    }

    fn call(&self, args: &[&TensorLeaf]) -> Result<TensorLeaf, LeafError> {
        leaf::mul_sub(args[0], args[1], args[2])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Stack {
    pub axis: usize,
}

impl LeafFn for Stack {
    fn name(&self) -> &str {
        "stack"
    }

    fn arity(&self) -> Option<usize> {
        None
    }

    fn call(&self, args: &[&TensorLeaf]) -> Result<TensorLeaf, LeafError> {
        leaf::stack(args, self.axis)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Cat {
    pub axis: usize,
}

impl LeafFn for Cat {
    fn name(&self) -> &str {
        "cat"
    }

    fn arity(&self) -> Option<usize> {
        None
    }

    fn call(&self, args: &[&TensorLeaf]) -> Result<TensorLeaf, LeafError> {
        leaf::cat(args, self.axis)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ShapeOf;

impl LeafFn for ShapeOf {
    fn name(&self) -> &str {
        "shape"
    }

    fn arity(&self) -> Option<usize> {
        Some(1)
    }

    fn call(&self, args: &[&TensorLeaf]) -> Result<TensorLeaf, LeafError> {
        Ok(leaf::shape_of(args[0]))
    }
}

/// An argument of a lifted function: a tree, or a raw value that takes part
/// at every position as if it were a value node there.
#[derive(Clone, Copy, Debug)]
pub enum TreeArg<'a> {
    Tree(&'a TreeTensor),
    Raw(&'a TensorLeaf),
}

impl<'a> From<&'a TreeTensor> for TreeArg<'a> {
    fn from(t: &'a TreeTensor) -> Self {
        TreeArg::Tree(t)
    }
}

impl<'a> From<&'a TensorLeaf> for TreeArg<'a> {
    fn from(l: &'a TensorLeaf) -> Self {
        TreeArg::Raw(l)
    }
}

#[derive(Clone, Copy)]
enum Slot<'a> {
    Leaf(&'a TensorLeaf),
    Tree(&'a Children),
}

impl<'a> Slot<'a> {
    fn of(node: &'a Node) -> Self {
        match node {
            Node::Value(l) => Slot::Leaf(l),
            Node::Tree(c) => Slot::Tree(c),
        }
    }
}

type Slots<'a> = SmallVec<[Slot<'a>; 4]>;

fn zip_slots<F: LeafFn + ?Sized>(slots: &[Slot<'_>], policy: &MismatchPolicy, f: &F) -> Result<Node, LiftError> {
    let trees: SmallVec<[&Children; 4]> = slots
        .iter()
        .filter_map(|s| match s {
            Slot::Tree(c) => Some(*c),
            Slot::Leaf(_) => None,
        })
        .collect();
    let Some(first) = trees.first() else {
        let leaves: SmallVec<[&TensorLeaf; 4]> = slots
            .iter()
            .map(|s| match s {
                Slot::Leaf(l) => *l,
                Slot::Tree(_) => unreachable!(),
            })
            .collect();
        return f.call(&leaves).map(Node::Value).map_err(LiftError::leaf);
    };

    let aligned = trees[1..]
        .iter()
        .all(|c| c.len() == first.len() && c.keys().eq(first.keys()));
    let mut out: Vec<(Key, Arc<Node>)> = Vec::with_capacity(first.len());
    if aligned {
        let mut iters: SmallVec<[_; 4]> = slots
            .iter()
            .map(|s| match s {
                Slot::Tree(c) => Some(c.values()),
                Slot::Leaf(_) => None,
            })
            .collect();
        for key in first.keys() {
            let child: Slots = slots
                .iter()
                .zip(iters.iter_mut())
                .map(|(s, it)| match it {
                    Some(it) => Slot::of(it.next().expect("aligned key sets")),
                    None => *s,
                })
                .collect();
            let node = zip_slots(&child, policy, f).map_err(|e| e.under(key))?;
            out.push((key.clone(), Arc::new(node)));
        }
    } else {
        for key in merge_keys(&trees, policy.kind())? {
            let child: Slots = slots
                .iter()
                .map(|s| match s {
                    Slot::Leaf(_) => *s,
                    Slot::Tree(c) => match c.get(&key) {
                        Some(n) => Slot::of(n),
                        None => Slot::Leaf(policy.default_leaf().expect("only policies with a default admit missing keys")),
                    },
                })
                .collect();
            let node = zip_slots(&child, policy, f).map_err(|e| e.under(&key))?;
            out.push((key, Arc::new(node)));
        }
    }
    Ok(Node::Tree(out.into_iter().collect()))
}

/// Applies `f` position-wise across `args`. The result is unconstrained.
pub fn lift_multi<F: LeafFn + ?Sized>(f: &F, policy: &MismatchPolicy, args: &[TreeArg<'_>]) -> Result<TreeTensor, LiftError> {
    if let Some(n) = f.arity() {
        if n != args.len() {
            return Err(LiftError::ArityMismatch {
                op: f.name().to_string(),
                expected: n,
                actual: args.len(),
            });
        }
    }
    if !args.iter().any(|a| matches!(a, TreeArg::Tree(_))) {
        return Err(LiftError::NoTreeArgument);
    }
    let slots: Slots = args
        .iter()
        .map(|a| match a {
            TreeArg::Tree(t) => Slot::of(t.root()),
            TreeArg::Raw(l) => Slot::Leaf(l),
        })
        .collect();
    let root = zip_slots(&slots, policy, f)?;
    Ok(TreeTensor::from_node(root).expect("tree arguments yield a tree root"))
}

/// Maps every leaf through `f`, keeping the structure. The result is
/// unconstrained.
pub fn map_leaves(
    t: &TreeTensor,
    mut f: impl FnMut(&TensorLeaf) -> Result<TensorLeaf, LeafError>,
) -> Result<TreeTensor, LiftError> {
    fn go(node: &Node, f: &mut impl FnMut(&TensorLeaf) -> Result<TensorLeaf, LeafError>) -> Result<Node, LiftError> {
        match node {
            Node::Value(l) => f(l).map(Node::Value).map_err(LiftError::leaf),
            Node::Tree(ch) => {
                let mut out = Vec::with_capacity(ch.len());
                for (k, c) in ch {
                    out.push((k.clone(), Arc::new(go(c, f).map_err(|e| e.under(k))?)));
                }
                Ok(Node::Tree(out.into_iter().collect()))
            }
        }
    }
    Ok(TreeTensor::from_node(go(t.root(), &mut f)?).expect("structure preserved"))
}

pub fn lift_unary(f: UnaryFn, t: &TreeTensor) -> Result<TreeTensor, LiftError> {
    map_leaves(t, |l| leaf::ew_unary(f, l))
}

/// Like [`lift_unary`] but keeps the input's constraints, failing if the
/// result no longer satisfies them.
pub fn lift_unary_carry(f: UnaryFn, t: &TreeTensor) -> Result<TreeTensor, LiftError> {
    let out = lift_unary(f, t)?;
    if t.constraints().is_trivial() {
        return Ok(out);
    }
    let out = TreeTensor::from_parts_unchecked(out.root().clone(), t.constraints().clone());
    out.validate_full().map_err(LiftError::Constraint)?;
    Ok(out)
}

pub fn lift_binary(f: BinaryFn, policy: &MismatchPolicy, a: TreeArg<'_>, b: TreeArg<'_>) -> Result<TreeTensor, LiftError> {
    lift_multi(&f, policy, &[a, b])
}

pub fn lift_stack(trees: &[&TreeTensor], axis: usize, policy: &MismatchPolicy) -> Result<TreeTensor, LiftError> {
    let args: Vec<TreeArg<'_>> = trees.iter().map(|t| TreeArg::Tree(t)).collect();
    lift_multi(&Stack { axis }, policy, &args)
}

pub fn lift_cat(trees: &[&TreeTensor], axis: usize, policy: &MismatchPolicy) -> Result<TreeTensor, LiftError> {
    let args: Vec<TreeArg<'_>> = trees.iter().map(|t| TreeArg::Tree(t)).collect();
    lift_multi(&Cat { axis }, policy, &args)
}

pub fn lift_shape(t: &TreeTensor) -> TreeTensor {
    map_leaves(t, |l| Ok(leaf::shape_of(l))).expect("shape query cannot fail")
}

/// Splits every leaf and regroups the pieces into one tree per piece index.
/// All leaves must split into the same number of pieces.
pub fn lift_split(t: &TreeTensor, chunk: usize, axis: usize) -> Result<Vec<TreeTensor>, LiftError> {
    let mut count: Option<usize> = None;
    let pieces = t.root().try_map(&mut |path, l| {
        let ps = leaf::split(l, chunk, axis).map_err(|source| LiftError::Leaf {
            path: Path::from(path),
            source,
        })?;
        match count {
            None => count = Some(ps.len()),
            Some(n) if n != ps.len() => {
                return Err(LiftError::InconsistentSplit {
                    path: Path::from(path),
                    expected: n,
                    actual: ps.len(),
                })
            }
            Some(_) => {}
        }
        Ok(ps)
    })?;
    let n = count.ok_or(LiftError::NoLeaves)?;
    Ok((0..n)
        .map(|i| TreeTensor::from_node(pieces.map(|ps| ps[i].clone())).expect("tree root"))
        .collect())
}

/// The catalogue of lifted operations, addressable by name.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LiftedOp {
    Unary(UnaryFn),
    Binary(BinaryFn),
    MulSub,
    Stack { axis: usize },
    Cat { axis: usize },
    Split { chunk: usize, axis: usize },
    Shape,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Yields {
    Tree,
    Trees,
}

/// One entry of [`lifted_surface`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct OpInfo {
    pub name: &'static str,
    pub arity: Option<usize>,
    pub yields: Yields,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LiftOutput {
    Tree(TreeTensor),
    Trees(Vec<TreeTensor>),
}

impl LiftOutput {
    pub fn into_tree(self) -> Option<TreeTensor> {
        match self {
            LiftOutput::Tree(t) => Some(t),
            LiftOutput::Trees(_) => None,
        }
    }

    pub fn into_trees(self) -> Vec<TreeTensor> {
        match self {
            LiftOutput::Tree(t) => vec![t],
            LiftOutput::Trees(ts) => ts,
        }
    }
}

impl LiftedOp {
    /// Every registered operation with default axis 0 and chunk 1.
    pub fn all() -> Vec<LiftedOp> {
        let mut ops: Vec<LiftedOp> = UnaryFn::ALL.into_iter().map(LiftedOp::Unary).collect();
        ops.extend(BinaryFn::ALL.into_iter().map(LiftedOp::Binary));
        ops.extend([
            LiftedOp::MulSub,
            LiftedOp::Stack { axis: 0 },
            LiftedOp::Cat { axis: 0 },
            LiftedOp::Split { chunk: 1, axis: 0 },
            LiftedOp::Shape,
        ]);
        ops
    }

    /// Looks an operation up by name; `axis` and `chunk` parameterize the
    /// shape operations and are ignored otherwise.
    pub fn from_name(name: &str, axis: usize, chunk: usize) -> Result<Self, LeafError> {
        Ok(match name {
            "mul_sub" => LiftedOp::MulSub,
            "stack" => LiftedOp::Stack { axis },
            "cat" => LiftedOp::Cat { axis },
            "split" => LiftedOp::Split { chunk, axis },
            "shape" => LiftedOp::Shape,
            _ => match name.parse::<UnaryFn>() {
                Ok(f) => LiftedOp::Unary(f),
                Err(_) => LiftedOp::Binary(name.parse()?),
            },
        })
    }

    pub fn info(&self) -> OpInfo {
        let (name, arity, yields) = match *self {
            LiftedOp::Unary(f) => (f.name(), Some(1), Yields::Tree),
            LiftedOp::Binary(f) => (f.name(), Some(2), Yields::Tree),
            LiftedOp::MulSub => ("mul_sub", Some(3), Yields::Tree),
            LiftedOp::Stack { .. } => ("stack", None, Yields::Tree),
            LiftedOp::Cat { .. } => ("cat", None, Yields::Tree),
            LiftedOp::Split { .. } => ("split", Some(1), Yields::Trees),
            LiftedOp::Shape => ("shape", Some(1), Yields::Tree),
        };
        OpInfo { name, arity, yields }
    }

    pub fn name(&self) -> &'static str {
        self.info().name
    }

    pub fn apply(&self, policy: &MismatchPolicy, args: &[TreeArg<'_>]) -> Result<LiftOutput, LiftError> {
        let tree = |out: Result<TreeTensor, LiftError>| out.map(LiftOutput::Tree);
        match *self {
            LiftedOp::Unary(f) => tree(lift_multi(&f, policy, args)),
            LiftedOp::Binary(f) => tree(lift_multi(&f, policy, args)),
            LiftedOp::MulSub => tree(lift_multi(&MulSub, policy, args)),
            LiftedOp::Stack { axis } => tree(lift_multi(&Stack { axis }, policy, args)),
            LiftedOp::Cat { axis } => tree(lift_multi(&Cat { axis }, policy, args)),
            LiftedOp::Shape => tree(lift_multi(&ShapeOf, policy, args)),
            LiftedOp::Split { chunk, axis } => match args {
                [TreeArg::Tree(t)] => lift_split(t, chunk, axis).map(LiftOutput::Trees),
                [TreeArg::Raw(_)] => Err(LiftError::NoTreeArgument),
                _ => Err(LiftError::ArityMismatch {
                    op: "split".into(),
                    expected: 1,
                    actual: args.len(),
                }),
            },
        }
    }
}

/// Names, arities and result kinds of all lifted operations.
pub fn lifted_surface() -> Vec<OpInfo> {
    LiftedOp::all().iter().map(LiftedOp::info).collect()
}

/// Broadcasts `leaf` to every leaf position of `like`.
pub fn broadcast_like(leaf: &TensorLeaf, like: &TreeTensor) -> TreeTensor {
    map_leaves(like, |_| Ok(leaf.clone())).expect("infallible")
}
