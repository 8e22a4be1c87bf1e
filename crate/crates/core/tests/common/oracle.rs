//! Leaf operations recomputed from flat element buffers with plain index
//! arithmetic. `None` means the library is expected to reject the input.

use treetensor::{BinaryFn, DType, Device, TensorLeaf, UnaryFn};

#[derive(Clone, Debug, PartialEq)]
pub enum Vals {
    F32(Vec<f32>),
    F64(Vec<f64>),
    I64(Vec<i64>),
    Bool(Vec<bool>),
}

pub fn vals(l: &TensorLeaf) -> Vals {
    match l.dtype() {
        DType::F32 => Vals::F32(l.as_array::<f32>().unwrap().data().to_vec()),
        DType::F64 => Vals::F64(l.as_array::<f64>().unwrap().data().to_vec()),
        DType::I64 => Vals::I64(l.as_array::<i64>().unwrap().data().to_vec()),
        DType::Bool => Vals::Bool(l.as_array::<bool>().unwrap().data().to_vec()),
    }
}

pub fn make(shape: &[usize], v: Vals, device: &Device) -> TensorLeaf {
    match v {
        Vals::F32(d) => TensorLeaf::new(shape, d),
        Vals::F64(d) => TensorLeaf::new(shape, d),
        Vals::I64(d) => TensorLeaf::new(shape, d),
        Vals::Bool(d) => TensorLeaf::new(shape, d),
    }
    .unwrap()
    .with_device(device.clone())
}

fn as_f64(v: &Vals) -> Option<Vec<f64>> {
    match v {
        Vals::F32(d) => Some(d.iter().map(|&x| x as f64).collect()),
        Vals::F64(d) => Some(d.clone()),
        Vals::I64(d) => Some(d.iter().map(|&x| x as f64).collect()),
        Vals::Bool(_) => None,
    }
}

fn unary_f64(f: UnaryFn, x: f64) -> f64 {
    match f {
        UnaryFn::Neg => 0.0 - x,
        UnaryFn::Exp => std::f64::consts::E.powf(x),
        UnaryFn::Pow2 => 2f64.powf(x),
        UnaryFn::Sigmoid => {
            let e = std::f64::consts::E.powf(-x.abs());
            if x < 0.0 {
                e / (1.0 + e)
            } else {
                1.0 / (1.0 + e)
            }
        }
        UnaryFn::Abs => {
            if x < 0.0 {
                -x
            } else {
                x
            }
        }
        UnaryFn::Square => x.powi(2),
    }
}

pub fn unary(f: UnaryFn, l: &TensorLeaf) -> Option<TensorLeaf> {
    let transcendental = matches!(f, UnaryFn::Exp | UnaryFn::Pow2 | UnaryFn::Sigmoid);
    let out = match vals(l) {
        Vals::Bool(_) => return None,
        Vals::F64(d) => Vals::F64(d.iter().map(|&x| unary_f64(f, x)).collect()),
        Vals::F32(d) => Vals::F32(d.iter().map(|&x| unary_f64(f, x as f64) as f32).collect()),
        Vals::I64(d) if transcendental => Vals::F64(d.iter().map(|&x| unary_f64(f, x as f64)).collect()),
        Vals::I64(d) => Vals::I64(
            d.iter()
                .map(|&x| match f {
                    UnaryFn::Neg => x.wrapping_neg(),
                    UnaryFn::Abs => x.wrapping_abs(),
                    _ => x.wrapping_mul(x),
                })
                .collect(),
        ),
    };
    Some(make(l.shape(), out, l.device()))
}

/// Pairs element indices of `a` and `b`, broadcasting a 0-d operand.
fn pairing(a: &TensorLeaf, b: &TensorLeaf) -> Option<(Vec<usize>, Vec<(usize, usize)>)> {
    if a.shape() == b.shape() {
        Some((a.shape().to_vec(), (0..a.len()).map(|i| (i, i)).collect()))
    } else if a.ndim() == 0 {
        Some((b.shape().to_vec(), (0..b.len()).map(|i| (0, i)).collect()))
    } else if b.ndim() == 0 {
        Some((a.shape().to_vec(), (0..a.len()).map(|i| (i, 0)).collect()))
    } else {
        None
    }
}

pub fn binary(f: BinaryFn, a: &TensorLeaf, b: &TensorLeaf) -> Option<TensorLeaf> {
    if a.device() != b.device() {
        return None;
    }
    let (shape, idx) = pairing(a, b)?;
    let out = match (vals(a), vals(b)) {
        (Vals::Bool(_), _) | (_, Vals::Bool(_)) => return None,
        (Vals::I64(x), Vals::I64(y)) => Vals::I64(
            idx.iter()
                .map(|&(i, j)| match f {
                    BinaryFn::Add => Some(x[i].wrapping_add(y[j])),
                    BinaryFn::Sub => Some(x[i].wrapping_sub(y[j])),
                    BinaryFn::Mul => Some(x[i].wrapping_mul(y[j])),
                    BinaryFn::Div => (y[j] != 0).then(|| x[i].wrapping_div(y[j])),
                })
                .collect::<Option<_>>()?,
        ),
        (Vals::F32(x), Vals::F32(y)) => Vals::F32(idx.iter().map(|&(i, j)| float_op(f, x[i], y[j])).collect()),
        (x, y) => {
            let (x, y) = (as_f64(&x)?, as_f64(&y)?);
            Vals::F64(idx.iter().map(|&(i, j)| float_op(f, x[i], y[j])).collect())
        }
    };
    Some(make(&shape, out, a.device()))
}

fn float_op<T: std::ops::Add<Output = T> + std::ops::Sub<Output = T> + std::ops::Mul<Output = T> + std::ops::Div<Output = T>>(
    f: BinaryFn,
    x: T,
    y: T,
) -> T {
    match f {
        BinaryFn::Add => x + y,
        BinaryFn::Sub => x - y,
        BinaryFn::Mul => x * y,
        BinaryFn::Div => x / y,
    }
}

pub fn mul_sub(x: &TensorLeaf, y: &TensorLeaf, z: &TensorLeaf) -> Option<TensorLeaf> {
    binary(BinaryFn::Sub, &binary(BinaryFn::Mul, x, y)?, z)
}

fn same_kind(leaves: &[&TensorLeaf]) -> bool {
    let first = leaves[0];
    leaves
        .iter()
        .all(|l| l.dtype() == first.dtype() && l.device() == first.device())
}

/// Interleaves equally sized blocks: for every outer index, block `o` of
/// each input in turn.
fn interleave(bufs: &[Vals], outer: usize, blocks: &[usize]) -> Vals {
    macro_rules! go {
        ($variant:ident) => {{
            let parts: Vec<&Vec<_>> = bufs
                .iter()
                .map(|b| match b {
                    Vals::$variant(d) => d,
                    _ => unreachable!("dtypes checked"),
                })
                .collect();
            let mut out = Vec::new();
            for o in 0..outer {
                for (p, &w) in parts.iter().zip(blocks) {
                    out.extend_from_slice(&p[o * w..(o + 1) * w]);
                }
            }
            Vals::$variant(out)
        }};
    }
    match &bufs[0] {
        Vals::F32(_) => go!(F32),
        Vals::F64(_) => go!(F64),
        Vals::I64(_) => go!(I64),
        Vals::Bool(_) => go!(Bool),
    }
}

pub fn stack(leaves: &[&TensorLeaf], axis: usize) -> Option<TensorLeaf> {
    let first = *leaves.first()?;
    if !same_kind(leaves) || leaves.iter().any(|l| l.shape() != first.shape()) || axis > first.ndim() {
        return None;
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let inner: usize = first.shape()[axis..].iter().product();
    let bufs: Vec<Vals> = leaves.iter().map(|l| vals(l)).collect();
    let mut shape = first.shape().to_vec();
    shape.insert(axis, leaves.len());
    Some(make(&shape, interleave(&bufs, outer, &vec![inner; leaves.len()]), first.device()))
}

pub fn cat(leaves: &[&TensorLeaf], axis: usize) -> Option<TensorLeaf> {
    let first = *leaves.first()?;
    if !same_kind(leaves) || axis >= first.ndim() {
        return None;
    }
    let fits = |l: &&TensorLeaf| {
        l.ndim() == first.ndim() && (0..first.ndim()).all(|i| i == axis || l.shape()[i] == first.shape()[i])
    };
    if !leaves.iter().all(fits) {
        return None;
    }
    let outer: usize = first.shape()[..axis].iter().product();
    let tail: usize = first.shape()[axis + 1..].iter().product();
    let blocks: Vec<usize> = leaves.iter().map(|l| l.shape()[axis] * tail).collect();
    let bufs: Vec<Vals> = leaves.iter().map(|l| vals(l)).collect();
    let mut shape = first.shape().to_vec();
    shape[axis] = leaves.iter().map(|l| l.shape()[axis]).sum();
    Some(make(&shape, interleave(&bufs, outer, &blocks), first.device()))
}

pub fn split(l: &TensorLeaf, chunk: usize, axis: usize) -> Option<Vec<TensorLeaf>> {
    if chunk == 0 || axis >= l.ndim() {
        return None;
    }
    let d = l.shape()[axis];
    let outer: usize = l.shape()[..axis].iter().product();
    let tail: usize = l.shape()[axis + 1..].iter().product();
    let all = vals(l);
    let mut out = Vec::new();
    let mut start = 0;
    while start < d {
        let w = chunk.min(d - start);
        macro_rules! piece {
            ($variant:ident, $d:expr) => {{
                let mut buf = Vec::new();
                for o in 0..outer {
                    let row = o * d * tail;
                    buf.extend_from_slice(&$d[row + start * tail..row + (start + w) * tail]);
                }
                Vals::$variant(buf)
            }};
        }
        let v = match &all {
            Vals::F32(d) => piece!(F32, d),
            Vals::F64(d) => piece!(F64, d),
            Vals::I64(d) => piece!(I64, d),
            Vals::Bool(d) => piece!(Bool, d),
        };
        let mut shape = l.shape().to_vec();
        shape[axis] = w;
        out.push(make(&shape, v, l.device()));
        start += w;
    }
    Some(out)
}

pub fn shape(l: &TensorLeaf) -> TensorLeaf {
    let dims: Vec<i64> = l.shape().iter().map(|&d| d as i64).collect();
    TensorLeaf::new(&[dims.len()], dims).unwrap()
}

fn rel_close(x: f64, y: f64, tol: f64) -> bool {
    x == y || (x.is_nan() && y.is_nan()) || (x - y).abs() <= tol * x.abs().max(y.abs())
}

/// Exact for integers and booleans, relative `1e-12` for f64, `1e-6` for f32.
pub fn leaf_close(a: &TensorLeaf, b: &TensorLeaf) -> Result<(), String> {
    if a.dtype() != b.dtype() || a.shape() != b.shape() || a.device() != b.device() {
        return Err(format!("{a} vs {b}"));
    }
    let ok = match (vals(a), vals(b)) {
        (Vals::F64(x), Vals::F64(y)) => x.iter().zip(&y).all(|(&p, &q)| rel_close(p, q, 1e-12)),
        (Vals::F32(x), Vals::F32(y)) => x.iter().zip(&y).all(|(&p, &q)| rel_close(p as f64, q as f64, 1e-6)),
        (x, y) => x == y,
    };
    if ok {
        Ok(())
    } else {
        Err(format!("values differ: {a} vs {b}"))
    }
}

pub fn tree_close(a: &treetensor::TreeTensor, b: &treetensor::TreeTensor) -> Result<(), String> {
    if !a.structure_equal(b) {
        return Err(format!("structures differ:\n{a}\n{b}"));
    }
    for ((pa, la), (_, lb)) in a.leaves().into_iter().zip(b.leaves()) {
        leaf_close(la, lb).map_err(|e| format!("at {pa}: {e}"))?;
    }
    Ok(())
}
