//! Structural utilities: masking, filtering, folding, and exchanging an outer
//! container of trees with a tree of containers.

use std::collections::BTreeMap;
use std::sync::Arc;

use crate::leaf::{self, LeafError, TensorLeaf};
use crate::scalar::Scalar;
use crate::tree::{Children, Key, Node, Path, TreeTensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FuncError {
    #[error("structures differ at {0}")]
    StructureMismatch(Path),
    #[error("mask entry at {0} is not a scalar bool")]
    NonBooleanMask(Path),
    #[error("the outer structure holds no tree")]
    NoEmbeddedTree,
    #[error("inner structures differ at {0}")]
    InconsistentInnerStructure(Path),
    #[error("the common tree structure has no leaves")]
    NoLeaves,
    #[error("the root of a tree of structures must be a tree node")]
    RootNotTree,
    #[error("leaf at {0} does not hold a flat sequence")]
    NotStackable(Path),
    #[error("at {path}: {source}")]
    Leaf { path: Path, source: LeafError },
}

/// First path at which two nodes differ structurally.
pub fn structure_diff<L, M>(a: &Node<L>, b: &Node<M>) -> Option<Path> {
    fn go<L, M>(a: &Node<L>, b: &Node<M>, path: &mut Vec<Key>) -> Option<Path> {
        match (a, b) {
            (Node::Value(_), Node::Value(_)) => None,
            (Node::Tree(x), Node::Tree(y)) => {
                if !x.keys().eq(y.keys()) {
                    return Some(Path::from(path.as_slice()));
                }
                for ((k, cx), cy) in x.iter().zip(y.values()) {
                    path.push(k.clone());
                    let d = go(cx, cy, path);
                    path.pop();
                    if d.is_some() {
                        return d;
                    }
                }
                None
            }
            _ => Some(Path::from(path.as_slice())),
        }
    }
    go(a, b, &mut Vec::new())
}

/// Keeps the leaves selected by `keep`. Tree nodes emptied by the removal are
/// pruned; subtrees that were empty to begin with are left alone.
fn prune(
    node: &Node,
    path: &mut Vec<Key>,
    keep: &mut impl FnMut(&[Key], &TensorLeaf) -> Result<bool, FuncError>,
) -> Result<Option<Node>, FuncError> {
    match node {
        Node::Value(l) => Ok(keep(path, l)?.then(|| node.clone())),
        Node::Tree(ch) if ch.is_empty() => Ok(Some(node.clone())),
        Node::Tree(ch) => {
            let mut out = Children::new();
            let mut changed = false;
            for (k, c) in ch {
                path.push(k.clone());
                let kept = prune(c, path, keep);
                path.pop();
                match kept? {
                    Some(n) if !changed && n == **c => {
                        out.insert(k.clone(), Arc::clone(c));
                    }
                    Some(n) => {
                        changed = true;
                        out.insert(k.clone(), Arc::new(n));
                    }
                    None => changed = true,
                }
            }
            Ok((!out.is_empty()).then_some(Node::Tree(out)))
        }
    }
}

fn pruned_tree(t: &TreeTensor, mut keep: impl FnMut(&[Key], &TensorLeaf) -> Result<bool, FuncError>) -> Result<TreeTensor, FuncError> {
    let root = prune(t.root(), &mut Vec::new(), &mut keep)?.unwrap_or_else(Node::empty_tree);
    Ok(TreeTensor::from_node(root).expect("tree root"))
}

/// Keeps the leaves whose counterpart in `sel` is `true`. `sel` must have the
/// same structure as `t` with a scalar bool at every leaf.
pub fn mask(t: &TreeTensor, sel: &TreeTensor) -> Result<TreeTensor, FuncError> {
    if let Some(p) = structure_diff(t.root(), sel.root()) {
        return Err(FuncError::StructureMismatch(p));
    }
    pruned_tree(t, |path, _| {
        let bit = sel.root().get(path).and_then(Node::as_value).and_then(TensorLeaf::scalar_value);
        match bit {
            Some(Scalar::Bool(b)) => Ok(b),
            _ => Err(FuncError::NonBooleanMask(Path::from(path))),
        }
    })
}

/// Keeps the leaves for which `pred` holds, pruning as [`mask`] does.
pub fn filter(t: &TreeTensor, mut pred: impl FnMut(&Path, &TensorLeaf) -> bool) -> TreeTensor {
    pruned_tree(t, |path, l| Ok(pred(&Path::from(path), l))).expect("predicate is infallible")
}

/// Folds the leaves in depth-first, key-ascending order.
pub fn reduce<A>(t: &TreeTensor, init: A, mut f: impl FnMut(A, &TensorLeaf) -> A) -> A {
    let mut acc = Some(init);
    t.root().for_each_leaf(&mut |_, l| {
        let a = acc.take().expect("accumulator present");
        acc = Some(f(a, l));
    });
    acc.expect("accumulator present")
}

/// Error from a failing fold step, with the path of the leaf being folded.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("at {path}: {source}")]
pub struct ReduceError<E> {
    pub path: Path,
    pub source: E,
}

/// Like [`reduce`] but stops at the first failing step.
pub fn try_reduce<A, E>(t: &TreeTensor, init: A, mut f: impl FnMut(A, &TensorLeaf) -> Result<A, E>) -> Result<A, ReduceError<E>> {
    let mut acc = init;
    for (path, l) in t.leaves() {
        acc = f(acc, l).map_err(|source| ReduceError { path, source })?;
    }
    Ok(acc)
}

/// A container of sequences and string-keyed maps with items at the bottom.
#[derive(Clone, Debug, PartialEq)]
pub enum Structure<T> {
    Seq(Vec<Structure<T>>),
    Map(BTreeMap<String, Structure<T>>),
    Item(T),
}

/// Trees held in an outer container, the input of [`subside`].
pub type OuterStructure = Structure<TreeTensor>;

/// A tree whose leaves are containers of tensor leaves, the output of
/// [`subside`].
pub type StructTree = Node<Structure<TensorLeaf>>;

impl<T> Structure<T> {
    /// Items in sequence order, with map entries in key order.
    pub fn items(&self) -> Vec<&T> {
        fn go<'a, T>(s: &'a Structure<T>, out: &mut Vec<&'a T>) {
            match s {
                Structure::Item(t) => out.push(t),
                Structure::Seq(xs) => xs.iter().for_each(|x| go(x, out)),
                Structure::Map(m) => m.values().for_each(|x| go(x, out)),
            }
        }
        let mut out = Vec::new();
        go(self, &mut out);
        out
    }

    pub fn map<U>(&self, f: &mut impl FnMut(&T) -> U) -> Structure<U> {
        match self {
            Structure::Item(t) => Structure::Item(f(t)),
            Structure::Seq(xs) => Structure::Seq(xs.iter().map(|x| x.map(f)).collect()),
            Structure::Map(m) => Structure::Map(m.iter().map(|(k, x)| (k.clone(), x.map(f))).collect()),
        }
    }

    pub fn try_map<U, E>(&self, f: &mut impl FnMut(&T) -> Result<U, E>) -> Result<Structure<U>, E> {
        Ok(match self {
            Structure::Item(t) => Structure::Item(f(t)?),
            Structure::Seq(xs) => Structure::Seq(xs.iter().map(|x| x.try_map(f)).collect::<Result<_, _>>()?),
            Structure::Map(m) => Structure::Map(
                m.iter()
                    .map(|(k, x)| Ok((k.clone(), x.try_map(f)?)))
                    .collect::<Result<_, _>>()?,
            ),
        })
    }

    /// Same sequence lengths and map keys at every level.
    pub fn same_shape<U>(&self, other: &Structure<U>) -> bool {
        match (self, other) {
            (Structure::Item(_), Structure::Item(_)) => true,
            (Structure::Seq(a), Structure::Seq(b)) => a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.same_shape(y)),
            (Structure::Map(a), Structure::Map(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|((ka, x), (kb, y))| ka == kb && x.same_shape(y))
            }
            _ => false,
        }
    }
}

/// Sinks the outer container into every leaf position of the embedded trees,
/// which must all share one structure.
pub fn subside(outer: &OuterStructure) -> Result<StructTree, FuncError> {
    let trees = outer.items();
    let first = trees.first().ok_or(FuncError::NoEmbeddedTree)?;
    for t in &trees[1..] {
        if let Some(p) = structure_diff(first.root(), t.root()) {
            return Err(FuncError::InconsistentInnerStructure(p));
        }
    }
    if first.leaf_count() == 0 {
        return Err(FuncError::NoLeaves);
    }
    let leaf_at = |t: &TreeTensor, path: &[Key]| t.root().get(path).and_then(Node::as_value).cloned();
    let node = first
        .root()
        .try_map(&mut |path, _| outer.try_map(&mut |t| leaf_at(t, path).ok_or(())))
        .expect("structures were checked equal");
    Ok(node)
}

/// Lifts the common inner container back out, producing one tree per item.
pub fn rise(tree: &StructTree) -> Result<OuterStructure, FuncError> {
    if tree.is_value() {
        return Err(FuncError::RootNotTree);
    }
    let leaves = tree.leaves();
    let (_, template) = leaves.first().ok_or(FuncError::NoLeaves)?;
    for (path, s) in &leaves[1..] {
        if !s.same_shape(template) {
            return Err(FuncError::InconsistentInnerStructure(path.clone()));
        }
    }
    let flat: Node<Vec<TensorLeaf>> = tree.map(|s| s.items().into_iter().cloned().collect());
    let mut i = 0;
    Ok(template.map(&mut |_| {
        let node = flat.map(|items| items[i].clone());
        i += 1;
        TreeTensor::from_node(node).expect("tree root")
    }))
}

/// Stacks every leaf's flat sequence along a new leading axis.
pub fn stack_structured(tree: &StructTree) -> Result<TreeTensor, FuncError> {
    let node = tree.try_map(&mut |path, s| {
        let Structure::Seq(xs) = s else {
            return Err(FuncError::NotStackable(Path::from(path)));
        };
        let items = xs
            .iter()
            .map(|x| match x {
                Structure::Item(l) => Ok(l),
                _ => Err(FuncError::NotStackable(Path::from(path))),
            })
            .collect::<Result<Vec<_>, _>>()?;
        leaf::stack(&items, 0).map_err(|source| FuncError::Leaf {
            path: Path::from(path),
            source,
        })
    })?;
    TreeTensor::from_node(node).map_err(|_| FuncError::RootNotTree)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree;
    use crate::treelize::{lift_stack, MismatchPolicy};

    fn example_tree() -> TreeTensor {
        tree! { "a": 2, "b": 3, "x": { "c": 5, "d": 7 } }.unwrap()
    }

    #[test]
    fn mask_examples() {
        let t = tree! { "a": 1, "b": 2 }.unwrap();
        let sel = tree! { "a": true, "b": false }.unwrap();
        assert_eq!(mask(&t, &sel).unwrap(), tree! { "a": 1 }.unwrap());
        let all = tree! { "a": true, "b": true }.unwrap();
        assert_eq!(mask(&t, &all).unwrap(), t);
        let x = tree! { "x": { "c": 5 } }.unwrap();
        let none = tree! { "x": { "c": false } }.unwrap();
        assert!(mask(&x, &none).unwrap().is_empty());
    }

    #[test]
    fn mask_errors() {
        let t = tree! { "a": 1, "b": 2 }.unwrap();
        assert!(matches!(mask(&t, &tree! { "a": true }.unwrap()), Err(FuncError::StructureMismatch(_))));
        let err = mask(&t, &tree! { "a": true, "b": 1 }.unwrap()).unwrap_err();
        assert_eq!(err, FuncError::NonBooleanMask("b".parse().unwrap()));
    }

    #[test]
    fn pruning_keeps_preexisting_empty_subtrees() {
        let t = tree! { "e": {}, "x": { "c": 1 } }.unwrap();
        let out = filter(&t, |_, _| false);
        assert_eq!(out, tree! { "e": {} }.unwrap());
    }

    #[test]
    fn filter_examples() {
        let big = TensorLeaf::zeros(&[4], crate::DType::F64);
        let t = tree! { "a": 1, "b": (big.clone()), "x": { "c": (big.clone()), "d": 2.0 } }.unwrap();
        let out = filter(&t, |_, l| l.len() > 3);
        let want: Vec<String> = t.leaves().into_iter().filter(|(_, l)| l.len() > 3).map(|(p, _)| p.to_string()).collect();
        let got: Vec<String> = out.leaves().into_iter().map(|(p, _)| p.to_string()).collect();
        assert_eq!(got, want);
        assert_eq!(filter(&t, |_, _| true), t);
        assert!(filter(&t, |_, _| false).is_empty());
    }

    #[test]
    fn reduce_examples() {
        let sum = reduce(&example_tree(), 0i64, |acc, l| match l.scalar_value() {
            Some(Scalar::I64(v)) => acc + v,
            _ => acc,
        });
        assert_eq!(sum, 17);
        assert_eq!(reduce(&TreeTensor::empty(), 42, |a, _| a + 1), 42);
        assert_eq!(reduce(&example_tree(), 0, |a, _| a + 1), 4);
        let order = reduce(&example_tree(), String::new(), |s, l| format!("{s}{l}|"));
        assert!(order.starts_with("i64[] 2|i64[] 3|i64[] 5|"));
    }

    #[test]
    fn try_reduce_reports_path() {
        let err = try_reduce(&example_tree(), 0, |a, l| {
            if l.scalar_value() == Some(Scalar::I64(5)) {
                Err("five")
            } else {
                Ok(a + 1)
            }
        })
        .unwrap_err();
        assert_eq!(err.path.to_string(), "x/c");
    }

    #[test]
    fn subside_transposes_a_sequence() {
        let t1 = tree! { "a": 1, "b": 2 }.unwrap();
        let t2 = tree! { "a": 3, "b": 4 }.unwrap();
        let outer = Structure::Seq(vec![Structure::Item(t1.clone()), Structure::Item(t2.clone())]);
        let s = subside(&outer).unwrap();
        let a = s.get(&[Key::new("a").unwrap()]).unwrap().as_value().unwrap();
        assert_eq!(a, &Structure::Seq(vec![Structure::Item(1.into()), Structure::Item(3.into())]));
        assert_eq!(rise(&s).unwrap(), outer);
        let stacked = stack_structured(&s).unwrap();
        assert_eq!(stacked, lift_stack(&[&t1, &t2], 0, &MismatchPolicy::Strict).unwrap());
    }

    #[test]
    fn subside_degenerate_and_map() {
        let t = example_tree();
        let item = Structure::Item(t.clone());
        let s = subside(&item).unwrap();
        assert!(matches!(s.get(&[Key::new("a").unwrap()]), Some(Node::Value(Structure::Item(_)))));
        assert_eq!(rise(&s).unwrap(), item);
        let t2 = lift_stack(&[&t], 0, &MismatchPolicy::Strict).unwrap();
        let m = Structure::Map(BTreeMap::from([("u".to_string(), Structure::Item(t)), ("v".to_string(), Structure::Item(t2))]));
        assert_eq!(rise(&subside(&m).unwrap()).unwrap(), m);
    }

    #[test]
    fn subside_and_rise_errors() {
        let empty: OuterStructure = Structure::Seq(vec![]);
        assert_eq!(subside(&empty), Err(FuncError::NoEmbeddedTree));
        let odd = Structure::Seq(vec![Structure::Item(tree! { "a": 1 }.unwrap()), Structure::Item(tree! { "b": 1 }.unwrap())]);
        assert_eq!(subside(&odd), Err(FuncError::InconsistentInnerStructure(Path::root())));
        assert_eq!(subside(&Structure::Item(TreeTensor::empty())), Err(FuncError::NoLeaves));

        let mut ch = BTreeMap::new();
        ch.insert(Key::new("a").unwrap(), Arc::new(Node::Value(Structure::Item(TensorLeaf::from(1)))));
        ch.insert(Key::new("b").unwrap(), Arc::new(Node::Value(Structure::Seq(vec![Structure::Item(TensorLeaf::from(1))]))));
        let bad: StructTree = Node::Tree(ch);
        assert_eq!(rise(&bad), Err(FuncError::InconsistentInnerStructure("b".parse().unwrap())));
        assert_eq!(rise(&Node::Value(Structure::Item(TensorLeaf::from(1)))), Err(FuncError::RootNotTree));
    }
}
