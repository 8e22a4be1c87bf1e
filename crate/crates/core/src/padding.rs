//! Group padding: batching structurally equal trees whose leaves differ in
//! length along axis 0.

use crate::func::structure_diff;
use crate::leaf::{self, LeafError, TensorLeaf};
use crate::scalar::{DType, Scalar};
use crate::tree::{Key, Node, Path, TreeTensor};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PadError {
    #[error("group padding needs at least one tree")]
    EmptyInput,
    #[error("tree structures differ at {0}")]
    StructureMismatch(Path),
    #[error("leaves at {0} disagree beyond axis 0")]
    TailShapeMismatch(Path),
    #[error("leaf at {0} is a scalar and has no axis to pad")]
    ScalarLeaf(Path),
    #[error("recorded lengths at {0} do not fit the padded data")]
    CorruptLengths(Path),
    #[error("at {path}: {source}")]
    Leaf { path: Path, source: LeafError },
}

/// A batch of `batch` trees padded along axis 0 and stacked on a new leading
/// axis. `lengths` mirrors `stacked` and holds the original axis-0 size of
/// every member at each path, as a 1-D i64 leaf.
#[derive(Clone, Debug, PartialEq)]
pub struct PaddedGroup {
    pub stacked: TreeTensor,
    pub lengths: TreeTensor,
    pub fill: Scalar,
    pub batch: usize,
}

fn at(path: &[Key], source: LeafError) -> PadError {
    PadError::Leaf {
        path: Path::from(path),
        source,
    }
}

fn pad_position(path: &[Key], leaves: &[&TensorLeaf], fill: Scalar) -> Result<(TensorLeaf, TensorLeaf), PadError> {
    let first = leaves[0];
    if first.is_scalar() {
        return Err(PadError::ScalarLeaf(Path::from(path)));
    }
    for l in &leaves[1..] {
        if l.dtype() != first.dtype() {
            return Err(at(
                path,
                LeafError::DtypeMismatch {
                    left: first.dtype(),
                    right: l.dtype(),
                },
            ));
        }
        if l.ndim() != first.ndim() || l.shape()[1..] != first.shape()[1..] {
            return Err(PadError::TailShapeMismatch(Path::from(path)));
        }
    }
    let max = leaves.iter().map(|l| l.shape()[0]).max().expect("non-empty batch");
    let padded = leaves
        .iter()
        .map(|l| l.pad_axis0(max, fill))
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| at(path, e))?;
    let refs: Vec<&TensorLeaf> = padded.iter().collect();
    let stacked = leaf::stack(&refs, 0).map_err(|e| at(path, e))?;
    let lens: Vec<i64> = leaves.iter().map(|l| l.shape()[0] as i64).collect();
    let lens = TensorLeaf::new(&[lens.len()], lens).expect("length matches");
    Ok((stacked, lens))
}

/// Pads every leaf to the longest axis-0 size at its path, then stacks.
pub fn group_pad(trees: &[&TreeTensor], fill: Scalar) -> Result<PaddedGroup, PadError> {
    let first = trees.first().ok_or(PadError::EmptyInput)?;
    for t in &trees[1..] {
        if let Some(p) = structure_diff(first.root(), t.root()) {
            return Err(PadError::StructureMismatch(p));
        }
    }
    let pairs = first.root().try_map(&mut |path, _| {
        let leaves: Vec<&TensorLeaf> = trees
            .iter()
            .map(|t| t.root().get(path).and_then(Node::as_value).expect("structures match"))
            .collect();
        pad_position(path, &leaves, fill)
    })?;
    let stacked = TreeTensor::from_node(pairs.map(|(s, _)| s.clone())).expect("tree root");
    let lengths = TreeTensor::from_node(pairs.map(|(_, l)| l.clone())).expect("tree root");
    Ok(PaddedGroup {
        stacked,
        lengths,
        fill,
        batch: trees.len(),
    })
}

fn unpad_position(path: &[Key], data: &TensorLeaf, lens: &TensorLeaf, batch: usize) -> Result<Vec<TensorLeaf>, PadError> {
    let corrupt = || PadError::CorruptLengths(Path::from(path));
    let lens = lens.as_array::<i64>().ok_or_else(corrupt)?;
    if lens.shape() != [batch] || data.ndim() < 2 || data.shape()[0] != batch {
        return Err(corrupt());
    }
    let max = data.shape()[1];
    lens.data()
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let n = usize::try_from(n).ok().filter(|&n| n <= max).ok_or_else(corrupt)?;
            data.index_axis(0, i)
                .and_then(|row| row.truncate_axis0(n))
                .map_err(|e| at(path, e))
        })
        .collect()
}

/// Recovers the original trees from a padded group.
pub fn unpad(g: &PaddedGroup) -> Result<Vec<TreeTensor>, PadError> {
    if let Some(p) = structure_diff(g.stacked.root(), g.lengths.root()) {
        return Err(PadError::StructureMismatch(p));
    }
    let rows = g.stacked.root().try_map(&mut |path, data| {
        let lens = g.lengths.root().get(path).and_then(Node::as_value).expect("structures match");
        unpad_position(path, data, lens, g.batch)
    })?;
    Ok((0..g.batch)
        .map(|i| TreeTensor::from_node(rows.map(|r| r[i].clone())).expect("tree root"))
        .collect())
}

/// Whether `fill` can be stored in every dtype present in `t` without loss.
pub fn fill_fits(t: &TreeTensor, fill: Scalar) -> bool {
    t.leaves().iter().all(|(_, l)| match l.dtype() {
        DType::F32 => fill.cast::<f32>().is_some(),
        DType::F64 => fill.cast::<f64>().is_some(),
        DType::I64 => fill.cast::<i64>().is_some(),
        DType::Bool => fill.cast::<bool>().is_some(),
    })
}
