//! Dynamically typed leaf values and the leaf-level operations that the tree
//! layer lifts.

use std::borrow::Cow;
use std::fmt;
use std::str::FromStr;

use num_traits::Float;

use crate::array::Array;
use crate::scalar::{DType, Element, Numeric, Scalar};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LeafError {
    #[error("shape holds {expected} elements but {actual} were given")]
    ShapeDataMismatch { expected: usize, actual: usize },
    #[error("incompatible shapes {left:?} and {right:?}")]
    ShapeMismatch { left: Vec<usize>, right: Vec<usize> },
    #[error("incompatible dtypes {left} and {right}")]
    DtypeMismatch { left: DType, right: DType },
    #[error("`{op}` does not support dtype {dtype}")]
    DtypeUnsupported { op: &'static str, dtype: DType },
    #[error("operands live on different devices ({left} vs {right})")]
    DeviceMismatch { left: Device, right: Device },
    #[error("unknown function `{0}`")]
    UnknownFunction(String),
    #[error("integer division by zero")]
    DivisionByZero,
    #[error("operation needs at least one input")]
    EmptyInput,
    #[error("axis {axis} out of range for rank {ndim}")]
    InvalidAxis { axis: usize, ndim: usize },
    #[error("chunk size must be positive, got {0}")]
    InvalidChunk(usize),
    #[error("expected {expected} arguments, got {actual}")]
    ArityMismatch { expected: usize, actual: usize },
}

/// Inert device tag. Nothing executes anywhere but the host; the tag exists
/// so that placement constraints can be expressed and checked.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Device(Cow<'static, str>);

impl Device {
    pub const CPU: Device = Device(Cow::Borrowed("cpu"));

    pub fn new(tag: impl Into<String>) -> Self {
        let tag = tag.into();
        if tag == "cpu" {
            Self::CPU
        } else {
            Device(Cow::Owned(tag))
        }
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl Default for Device {
    fn default() -> Self {
        Self::CPU
    }
}

impl fmt::Display for Device {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum LeafData {
    F32(Array<f32>),
    F64(Array<f64>),
    I64(Array<i64>),
    Bool(Array<bool>),
}

macro_rules! with_array {
    ($data:expr, $a:ident => $body:expr) => {
        match $data {
            LeafData::F32($a) => $body,
            LeafData::F64($a) => $body,
            LeafData::I64($a) => $body,
            LeafData::Bool($a) => $body,
        }
    };
}

/// A dense array value held by a value node.
#[derive(Clone, Debug, PartialEq)]
pub struct TensorLeaf {
    data: LeafData,
    device: Device,
}

impl TensorLeaf {
    pub fn new<T: Element>(shape: &[usize], data: Vec<T>) -> Result<Self, LeafError> {
        Ok(Self::from_array(Array::new(shape, data)?))
    }

    pub fn from_array<T: Element>(array: Array<T>) -> Self {
        TensorLeaf {
            data: T::wrap(array),
            device: Device::CPU,
        }
    }

    pub fn scalar<T: Element>(value: T) -> Self {
        Self::from_array(Array::scalar(value))
    }

    pub fn from_scalar(value: Scalar) -> Self {
        match value {
            Scalar::F32(v) => Self::scalar(v),
            Scalar::F64(v) => Self::scalar(v),
            Scalar::I64(v) => Self::scalar(v),
            Scalar::Bool(v) => Self::scalar(v),
        }
    }

    pub fn zeros(shape: &[usize], dtype: DType) -> Self {
        match dtype {
            DType::F32 => Self::from_array(Array::full(shape, 0f32)),
            DType::F64 => Self::from_array(Array::full(shape, 0f64)),
            DType::I64 => Self::from_array(Array::full(shape, 0i64)),
            DType::Bool => Self::from_array(Array::full(shape, false)),
        }
    }

    pub fn with_device(mut self, device: Device) -> Self {
        self.device = device;
        self
    }

    pub fn data(&self) -> &LeafData {
        &self.data
    }

    pub fn device(&self) -> &Device {
        &self.device
    }

    pub fn dtype(&self) -> DType {
        match self.data {
            LeafData::F32(_) => DType::F32,
            LeafData::F64(_) => DType::F64,
            LeafData::I64(_) => DType::I64,
            LeafData::Bool(_) => DType::Bool,
        }
    }

    pub fn shape(&self) -> &[usize] {
        with_array!(&self.data, a => a.shape())
    }

    pub fn ndim(&self) -> usize {
        self.shape().len()
    }

    pub fn len(&self) -> usize {
        with_array!(&self.data, a => a.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(&self) -> bool {
        self.shape().is_empty()
    }

    pub fn as_array<T: Element>(&self) -> Option<&Array<T>> {
        T::unwrap(&self.data)
    }

    /// Value of a single-element leaf.
    pub fn scalar_value(&self) -> Option<Scalar> {
        if self.len() != 1 {
            return None;
        }
        Some(with_array!(&self.data, a => a.data()[0].to_scalar()))
    }

    pub fn deep_copy(&self) -> Self {
        TensorLeaf {
            data: with_array!(&self.data, a => Element::wrap(a.deep_copy())),
            device: self.device.clone(),
        }
    }

    pub fn shares_buffer(&self, other: &TensorLeaf) -> bool {
        match (&self.data, &other.data) {
            (LeafData::F32(a), LeafData::F32(b)) => a.shares_buffer(b),
            (LeafData::F64(a), LeafData::F64(b)) => a.shares_buffer(b),
            (LeafData::I64(a), LeafData::I64(b)) => a.shares_buffer(b),
            (LeafData::Bool(a), LeafData::Bool(b)) => a.shares_buffer(b),
            _ => false,
        }
    }

    fn rewrap<T: Element>(&self, array: Array<T>) -> Self {
        TensorLeaf {
            data: T::wrap(array),
            device: self.device.clone(),
        }
    }

    /// Converts every element to f64.
    pub fn to_f64(&self) -> Result<TensorLeaf, LeafError> {
        let out = match &self.data {
            LeafData::F32(a) => a.map(|x| x as f64),
            LeafData::F64(_) => return Ok(self.clone()),
            LeafData::I64(a) => a.map(|x| x as f64),
            LeafData::Bool(_) => {
                return Err(LeafError::DtypeUnsupported {
                    op: "to_f64",
                    dtype: DType::Bool,
                })
            }
        };
        Ok(self.rewrap(out))
    }

    pub fn unary(&self, f: UnaryFn) -> Result<TensorLeaf, LeafError> {
        ew_unary(f, self)
    }

    pub fn binary(&self, f: BinaryFn, rhs: &TensorLeaf) -> Result<TensorLeaf, LeafError> {
        ew_binary(f, self, rhs)
    }

    pub fn split(&self, chunk: usize, axis: usize) -> Result<Vec<TensorLeaf>, LeafError> {
        split(self, chunk, axis)
    }

    /// Slice `index` along `axis`, dropping that axis.
    pub fn index_axis(&self, axis: usize, index: usize) -> Result<TensorLeaf, LeafError> {
        let ndim = self.ndim();
        let size = self.shape().get(axis).copied();
        if size.is_none_or(|s| index >= s) {
            return Err(LeafError::InvalidAxis { axis, ndim });
        }
        Ok(with_array!(&self.data, a => self.rewrap(a.index_axis(axis, index))))
    }

    /// The leading `len` entries along axis 0.
    pub fn truncate_axis0(&self, len: usize) -> Result<TensorLeaf, LeafError> {
        match self.shape().first() {
            Some(&n) if len <= n => {
                Ok(with_array!(&self.data, a => self.rewrap(a.slice_axis(0, 0..len))))
            }
            _ => Err(LeafError::InvalidAxis {
                axis: 0,
                ndim: self.ndim(),
            }),
        }
    }

    /// Pads axis 0 up to `len` with `fill`, which must be exactly representable
    /// in this leaf's dtype.
    pub fn pad_axis0(&self, len: usize, fill: Scalar) -> Result<TensorLeaf, LeafError> {
        fn go<T: Element>(leaf: &TensorLeaf, a: &Array<T>, len: usize, fill: Scalar) -> Result<TensorLeaf, LeafError> {
            let v = fill.cast::<T>().ok_or(LeafError::DtypeMismatch {
                left: T::DTYPE,
                right: fill.dtype(),
            })?;
            Ok(leaf.rewrap(a.pad_axis0(len, v)?))
        }
        with_array!(&self.data, a => go(self, a, len, fill))
    }
}

impl From<f32> for TensorLeaf {
    fn from(v: f32) -> Self {
        Self::scalar(v)
    }
}

impl From<f64> for TensorLeaf {
    fn from(v: f64) -> Self {
        Self::scalar(v)
    }
}

impl From<i64> for TensorLeaf {
    fn from(v: i64) -> Self {
        Self::scalar(v)
    }
}

/// Untyped integer literals land here; they become i64 leaves.
impl From<i32> for TensorLeaf {
    fn from(v: i32) -> Self {
        Self::scalar(v as i64)
    }
}

impl From<bool> for TensorLeaf {
    fn from(v: bool) -> Self {
        Self::scalar(v)
    }
}

impl<T: Element> From<Array<T>> for TensorLeaf {
    fn from(a: Array<T>) -> Self {
        Self::from_array(a)
    }
}

impl fmt::Display for TensorLeaf {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{:?}", self.dtype(), self.shape())?;
        if self.device != Device::CPU {
            write!(f, "@{}", self.device)?;
        }
        const PREVIEW: usize = 8;
        with_array!(&self.data, a => {
            let d = a.data();
            if a.is_scalar() {
                write!(f, " {:?}", d[0])
            } else if d.len() <= PREVIEW {
                write!(f, " {:?}", d)
            } else {
                write!(f, " {:?}..", &d[..PREVIEW])
            }
        })
    }
}

/// Registered elementwise unary functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum UnaryFn {
    Neg,
    Exp,
    /// x ↦ 2^x
    Pow2,
    Sigmoid,
    Abs,
    Square,
}

impl UnaryFn {
    pub const ALL: [UnaryFn; 6] = [
        UnaryFn::Neg,
        UnaryFn::Exp,
        UnaryFn::Pow2,
        UnaryFn::Sigmoid,
        UnaryFn::Abs,
        UnaryFn::Square,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UnaryFn::Neg => "neg",
            UnaryFn::Exp => "exp",
            UnaryFn::Pow2 => "pow2",
            UnaryFn::Sigmoid => "sigmoid",
            UnaryFn::Abs => "abs",
            UnaryFn::Square => "square",
        }
    }

    /// Functions whose integer inputs are promoted to f64.
    pub fn is_transcendental(self) -> bool {
        matches!(self, UnaryFn::Exp | UnaryFn::Pow2 | UnaryFn::Sigmoid)
    }

    fn apply_float<T: Numeric + Float>(self, x: T) -> T {
        match self {
            UnaryFn::Neg => -x,
            UnaryFn::Exp => x.exp(),
            UnaryFn::Pow2 => x.exp2(),
            UnaryFn::Sigmoid => T::one() / (T::one() + (-x).exp()),
            UnaryFn::Abs => Float::abs(x),
            UnaryFn::Square => x * x,
        }
    }

    fn apply_int(self, x: i64) -> i64 {
        match self {
            UnaryFn::Neg => Numeric::neg(x),
            UnaryFn::Abs => Numeric::abs(x),
            UnaryFn::Square => Numeric::square(x),
            UnaryFn::Exp | UnaryFn::Pow2 | UnaryFn::Sigmoid => unreachable!("promoted"),
        }
    }
}

impl FromStr for UnaryFn {
    type Err = LeafError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| LeafError::UnknownFunction(s.to_string()))
    }
}

/// Registered elementwise binary functions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BinaryFn {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinaryFn {
    pub const ALL: [BinaryFn; 4] = [BinaryFn::Add, BinaryFn::Sub, BinaryFn::Mul, BinaryFn::Div];

    pub fn name(self) -> &'static str {
        match self {
            BinaryFn::Add => "add",
            BinaryFn::Sub => "sub",
            BinaryFn::Mul => "mul",
            BinaryFn::Div => "div",
        }
    }

    fn apply<T: Numeric>(self, a: T, b: T) -> Result<T, LeafError> {
        match self {
            BinaryFn::Add => Ok(Numeric::add(a, b)),
            BinaryFn::Sub => Ok(Numeric::sub(a, b)),
            BinaryFn::Mul => Ok(Numeric::mul(a, b)),
            BinaryFn::Div => Numeric::div(a, b).ok_or(LeafError::DivisionByZero),
        }
    }
}

impl FromStr for BinaryFn {
    type Err = LeafError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| LeafError::UnknownFunction(s.to_string()))
    }
}

fn float_unary<T: Numeric + Float>(f: UnaryFn, a: &Array<T>) -> Array<T> {
    a.map(|x| f.apply_float(x))
}

/// Applies a registered unary function to every element.
///
/// Integer leaves stay integer under `neg`, `abs` and `square` (wrapping on
/// overflow) and are promoted to f64 under the transcendental functions.
/// Boolean leaves are rejected.
pub fn ew_unary(f: UnaryFn, t: &TensorLeaf) -> Result<TensorLeaf, LeafError> {
    let out = match &t.data {
        LeafData::F32(a) => LeafData::F32(float_unary(f, a)),
        LeafData::F64(a) => LeafData::F64(float_unary(f, a)),
        LeafData::I64(a) if f.is_transcendental() => LeafData::F64(float_unary(f, &a.map(|x| x as f64))),
        LeafData::I64(a) => LeafData::I64(a.map(|x| f.apply_int(x))),
        LeafData::Bool(_) => {
            return Err(LeafError::DtypeUnsupported {
                op: f.name(),
                dtype: DType::Bool,
            })
        }
    };
    Ok(TensorLeaf {
        data: out,
        device: t.device.clone(),
    })
}

/// Dtype both operands are brought to before a binary arithmetic op.
pub fn promote(op: &'static str, a: DType, b: DType) -> Result<DType, LeafError> {
    match (a, b) {
        (DType::Bool, _) | (_, DType::Bool) => Err(LeafError::DtypeUnsupported {
            op,
            dtype: DType::Bool,
        }),
        (x, y) if x == y => Ok(x),
        _ => Ok(DType::F64),
    }
}

fn check_device(a: &TensorLeaf, b: &TensorLeaf) -> Result<(), LeafError> {
    if a.device != b.device {
        return Err(LeafError::DeviceMismatch {
            left: a.device.clone(),
            right: b.device.clone(),
        });
    }
    Ok(())
}

/// Elementwise binary arithmetic with scalar broadcasting.
///
/// Mixed numeric dtypes are computed in f64. Float division by zero follows
/// IEEE semantics; integer division by zero is an error.
pub fn ew_binary(f: BinaryFn, a: &TensorLeaf, b: &TensorLeaf) -> Result<TensorLeaf, LeafError> {
    check_device(a, b)?;
    let target = promote(f.name(), a.dtype(), b.dtype())?;
    let data = if a.dtype() == b.dtype() {
        match (&a.data, &b.data) {
            (LeafData::F32(x), LeafData::F32(y)) => LeafData::F32(x.zip_with(y, |p, q| f.apply(p, q))?),
            (LeafData::F64(x), LeafData::F64(y)) => LeafData::F64(x.zip_with(y, |p, q| f.apply(p, q))?),
            (LeafData::I64(x), LeafData::I64(y)) => LeafData::I64(x.zip_with(y, |p, q| f.apply(p, q))?),
            _ => unreachable!("bool rejected by promote"),
        }
    } else {
        debug_assert_eq!(target, DType::F64);
        let (x, y) = (a.to_f64()?, b.to_f64()?);
        let (x, y) = (x.as_array::<f64>().unwrap(), y.as_array::<f64>().unwrap());
        LeafData::F64(x.zip_with(y, |p, q| f.apply(p, q))?)
    };
    Ok(TensorLeaf {
        data,
        device: a.device.clone(),
    })
}

fn same_typed<'a, T: Element>(leaves: &[&'a TensorLeaf]) -> Result<Vec<&'a Array<T>>, LeafError> {
    let first = leaves[0];
    leaves
        .iter()
        .map(|l| {
            check_device(first, l)?;
            l.as_array::<T>().ok_or(LeafError::DtypeMismatch {
                left: T::DTYPE,
                right: l.dtype(),
            })
        })
        .collect()
}

fn gather<F>(leaves: &[&TensorLeaf], op: F) -> Result<TensorLeaf, LeafError>
where
    F: GatherOp,
{
    let first = leaves.first().ok_or(LeafError::EmptyInput)?;
    let data = match first.dtype() {
        DType::F32 => LeafData::F32(op.run(&same_typed::<f32>(leaves)?)?),
        DType::F64 => LeafData::F64(op.run(&same_typed::<f64>(leaves)?)?),
        DType::I64 => LeafData::I64(op.run(&same_typed::<i64>(leaves)?)?),
        DType::Bool => LeafData::Bool(op.run(&same_typed::<bool>(leaves)?)?),
    };
    Ok(TensorLeaf {
        data,
        device: first.device.clone(),
    })
}

trait GatherOp {
    fn run<T: Element>(&self, items: &[&Array<T>]) -> Result<Array<T>, LeafError>;
}

struct StackOp(usize);
struct CatOp(usize);

impl GatherOp for StackOp {
    fn run<T: Element>(&self, items: &[&Array<T>]) -> Result<Array<T>, LeafError> {
        Array::stack(items, self.0)
    }
}

impl GatherOp for CatOp {
    fn run<T: Element>(&self, items: &[&Array<T>]) -> Result<Array<T>, LeafError> {
        Array::cat(items, self.0)
    }
}

/// Stacks leaves of identical shape and dtype along a new axis.
pub fn stack(leaves: &[&TensorLeaf], axis: usize) -> Result<TensorLeaf, LeafError> {
    gather(leaves, StackOp(axis))
}

/// Concatenates leaves along an existing axis.
pub fn cat(leaves: &[&TensorLeaf], axis: usize) -> Result<TensorLeaf, LeafError> {
    gather(leaves, CatOp(axis))
}

pub fn split(t: &TensorLeaf, chunk: usize, axis: usize) -> Result<Vec<TensorLeaf>, LeafError> {
    with_array!(&t.data, a => Ok(a.split(chunk, axis)?.into_iter().map(|p| t.rewrap(p)).collect()))
}

/// `x * y - z`, the ternary composite exposed by the registry.
pub fn mul_sub(x: &TensorLeaf, y: &TensorLeaf, z: &TensorLeaf) -> Result<TensorLeaf, LeafError> {
    ew_binary(BinaryFn::Sub, &ew_binary(BinaryFn::Mul, x, y)?, z)
}

/// The shape of a leaf as a 1-D i64 leaf.
pub fn shape_of(t: &TensorLeaf) -> TensorLeaf {
    let dims: Vec<i64> = t.shape().iter().map(|&d| d as i64).collect();
    let n = dims.len();
    TensorLeaf::new(&[n], dims).expect("length matches")
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn f64s(shape: &[usize], d: &[f64]) -> TensorLeaf {
        TensorLeaf::new(shape, d.to_vec()).unwrap()
    }

    fn i64s(shape: &[usize], d: &[i64]) -> TensorLeaf {
        TensorLeaf::new(shape, d.to_vec()).unwrap()
    }

    #[test]
    fn make_leaf_cases() {
        let l = f64s(&[2, 2], &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(l.shape(), &[2, 2]);
        assert_eq!(l.dtype(), DType::F64);
        let s = f64s(&[], &[7.0]);
        assert!(s.is_scalar());
        assert_eq!(s.scalar_value(), Some(Scalar::F64(7.0)));
        let e = f64s(&[3, 0], &[]);
        assert!(e.is_empty());
        assert!(TensorLeaf::new(&[3], vec![1i64]).is_err());
    }

    #[test]
    fn unary_examples() {
        let five = TensorLeaf::scalar(5i64);
        assert_eq!(ew_unary(UnaryFn::Pow2, &five).unwrap(), TensorLeaf::scalar(32.0f64));
        assert_eq!(ew_unary(UnaryFn::Pow2, &TensorLeaf::scalar(5.0f32)).unwrap(), TensorLeaf::scalar(32.0f32));
        assert_eq!(ew_unary(UnaryFn::Neg, &i64s(&[2], &[1, -2])).unwrap(), i64s(&[2], &[-1, 2]));
        assert_eq!(ew_unary(UnaryFn::Abs, &i64s(&[1], &[0])).unwrap(), i64s(&[1], &[0]));
        assert_eq!(ew_unary(UnaryFn::Square, &i64s(&[2], &[-3, 4])).unwrap(), i64s(&[2], &[9, 16]));
        let sig = ew_unary(UnaryFn::Sigmoid, &TensorLeaf::scalar(0i64)).unwrap();
        assert_eq!(sig, TensorLeaf::scalar(0.5f64));
        assert!(matches!(
            ew_unary(UnaryFn::Exp, &TensorLeaf::scalar(true)),
            Err(LeafError::DtypeUnsupported { .. })
        ));
        assert!(matches!("tanh".parse::<UnaryFn>(), Err(LeafError::UnknownFunction(_))));
    }

    #[test]
    fn binary_examples() {
        let r = ew_binary(BinaryFn::Add, &f64s(&[2], &[1.0, 2.0]), &f64s(&[2], &[3.0, 4.0])).unwrap();
        assert_eq!(r, f64s(&[2], &[4.0, 6.0]));
        let r = ew_binary(BinaryFn::Mul, &i64s(&[2], &[1, 2]), &TensorLeaf::scalar(3i64)).unwrap();
        assert_eq!(r, i64s(&[2], &[3, 6]));
        let h = mul_sub(&2i64.into(), &3i64.into(), &1i64.into()).unwrap();
        assert_eq!(h, TensorLeaf::scalar(5i64));
        assert!(matches!(
            ew_binary(BinaryFn::Add, &f64s(&[2], &[1.0, 2.0]), &f64s(&[3], &[1.0, 2.0, 3.0])),
            Err(LeafError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn division_by_zero() {
        let r = ew_binary(BinaryFn::Div, &TensorLeaf::scalar(1.0f64), &TensorLeaf::scalar(0.0f64)).unwrap();
        assert_eq!(r, TensorLeaf::scalar(f64::INFINITY));
        assert_eq!(
            ew_binary(BinaryFn::Div, &TensorLeaf::scalar(1i64), &TensorLeaf::scalar(0i64)),
            Err(LeafError::DivisionByZero)
        );
    }

    #[test]
    fn mixed_dtypes_promote_to_f64() {
        let r = ew_binary(BinaryFn::Add, &TensorLeaf::scalar(1i64), &TensorLeaf::scalar(0.5f32)).unwrap();
        assert_eq!(r, TensorLeaf::scalar(1.5f64));
        let r = ew_binary(BinaryFn::Mul, &TensorLeaf::scalar(2.0f32), &TensorLeaf::scalar(0.25f64)).unwrap();
        assert_eq!(r, TensorLeaf::scalar(0.5f64));
        assert!(ew_binary(BinaryFn::Add, &TensorLeaf::scalar(true), &TensorLeaf::scalar(1i64)).is_err());
    }

    #[test]
    fn devices_must_agree() {
        let a = TensorLeaf::scalar(1.0f64);
        let b = TensorLeaf::scalar(1.0f64).with_device(Device::new("cuda:0"));
        assert!(matches!(ew_binary(BinaryFn::Add, &a, &b), Err(LeafError::DeviceMismatch { .. })));
        assert!(stack(&[&a, &b], 0).is_err());
        assert_eq!(ew_unary(UnaryFn::Neg, &b).unwrap().device().as_str(), "cuda:0");
    }

    #[test]
    fn stack_cat_split_dispatch() {
        let a = i64s(&[2], &[1, 2]);
        let b = i64s(&[2], &[3, 4]);
        assert_eq!(stack(&[&a, &b], 0).unwrap(), i64s(&[2, 2], &[1, 2, 3, 4]));
        assert_eq!(cat(&[&a, &b], 0).unwrap(), i64s(&[4], &[1, 2, 3, 4]));
        let parts = split(&i64s(&[5], &[1, 2, 3, 4, 5]), 2, 0).unwrap();
        assert_eq!(parts.len(), 3);
        assert_eq!(parts[2], i64s(&[1], &[5]));
        assert!(matches!(
            stack(&[&a, &f64s(&[2], &[1.0, 2.0])], 0),
            Err(LeafError::DtypeMismatch { .. })
        ));
        assert_eq!(shape_of(&f64s(&[2, 3], &[0.0; 6])), i64s(&[2], &[2, 3]));
    }

    #[test]
    fn deep_copy_owns_its_buffer() {
        let a = f64s(&[3], &[1.0, 2.0, 3.0]);
        let shallow = a.clone();
        let deep = a.deep_copy();
        assert!(a.shares_buffer(&shallow));
        assert!(!a.shares_buffer(&deep));
        assert_eq!(a, deep);
    }

    fn scalar_loop(f: UnaryFn, x: f64) -> f64 {
        match f {
            UnaryFn::Neg => -x,
            UnaryFn::Exp => x.exp(),
            UnaryFn::Pow2 => 2f64.powf(x),
            UnaryFn::Sigmoid => 1.0 / (1.0 + (-x).exp()),
            UnaryFn::Abs => Float::abs(x),
            UnaryFn::Square => x * x,
        }
    }

    proptest! {
        #[test]
        fn unary_matches_scalar_loop(data in prop::collection::vec(-20.0f64..20.0, 0..=64), which in 0usize..6) {
            let f = UnaryFn::ALL[which];
            let n = data.len();
            let out = ew_unary(f, &f64s(&[n], &data)).unwrap();
            let got = out.as_array::<f64>().unwrap().data();
            for (g, &x) in got.iter().zip(&data) {
                let want = scalar_loop(f, x);
                prop_assert!((g - want).abs() <= 1e-12 * want.abs().max(1.0), "{f:?}({x}) = {g}, want {want}");
            }
        }

        #[test]
        fn add_commutes_and_has_zero(data in prop::collection::vec(-1000i64..1000, 1..32), other_seed in 0i64..100) {
            let n = data.len();
            let a = i64s(&[n], &data);
            let b = i64s(&[n], &data.iter().map(|x| x * other_seed - 7).collect::<Vec<_>>());
            prop_assert_eq!(ew_binary(BinaryFn::Add, &a, &b).unwrap(), ew_binary(BinaryFn::Add, &b, &a).unwrap());
            let z = TensorLeaf::zeros(&[n], DType::I64);
            prop_assert_eq!(ew_binary(BinaryFn::Add, &a, &z).unwrap(), a);
        }
    }
}
