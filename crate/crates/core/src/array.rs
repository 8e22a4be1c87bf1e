//! Minimal dense row-major array, generic over the element type.

use std::ops::Range;
use std::sync::Arc;

use smallvec::SmallVec;

use crate::leaf::LeafError;
use crate::scalar::Element;

/// Dimension sizes of an array. Rank 0 denotes a scalar.
pub type Shape = SmallVec<[usize; 4]>;

/// Immutable dense array with row-major storage.
///
/// Cloning is cheap: the element buffer is shared. Use [`Array::deep_copy`]
/// for an independent buffer.
#[derive(Clone, Debug, PartialEq)]
pub struct Array<T> {
    shape: Shape,
    data: Arc<Vec<T>>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl<T: Element> Array<T> {
    pub fn new(shape: &[usize], data: Vec<T>) -> Result<Self, LeafError> {
        let expected = numel(shape);
        if expected != data.len() {
            return Err(LeafError::ShapeDataMismatch {
                expected,
                actual: data.len(),
            });
        }
        Ok(Array {
            shape: Shape::from_slice(shape),
            data: Arc::new(data),
        })
    }

    fn from_parts(shape: Shape, data: Vec<T>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Array {
            shape,
            data: Arc::new(data),
        }
    }

    pub fn scalar(value: T) -> Self {
        Self::from_parts(Shape::new(), vec![value])
    }

    pub fn full(shape: &[usize], value: T) -> Self {
        Self::from_parts(Shape::from_slice(shape), vec![value; numel(shape)])
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn ndim(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.shape.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn deep_copy(&self) -> Self {
        Self::from_parts(self.shape.clone(), self.data.as_ref().clone())
    }

    /// True when both arrays share one element buffer.
    pub fn shares_buffer(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.data, &other.data)
    }

    pub fn map<U: Element>(&self, f: impl Fn(T) -> U) -> Array<U> {
        Array::from_parts(self.shape.clone(), self.data.iter().map(|&x| f(x)).collect())
    }

    pub fn try_map<U: Element, E>(&self, f: impl Fn(T) -> Result<U, E>) -> Result<Array<U>, E> {
        let data = self.data.iter().map(|&x| f(x)).collect::<Result<Vec<_>, E>>()?;
        Ok(Array::from_parts(self.shape.clone(), data))
    }

    /// Elementwise combination. Shapes must agree unless one side is a scalar,
    /// which is broadcast across the other.
    pub fn zip_with<U: Element>(
        &self,
        other: &Self,
        f: impl Fn(T, T) -> Result<U, LeafError>,
    ) -> Result<Array<U>, LeafError> {
        let (shape, data) = if self.shape == other.shape {
            let data = self
                .data
                .iter()
                .zip(other.data.iter())
                .map(|(&a, &b)| f(a, b))
                .collect::<Result<Vec<_>, _>>();
            (self.shape.clone(), data)
        } else if other.is_scalar() {
            let b = other.data[0];
            (self.shape.clone(), self.data.iter().map(|&a| f(a, b)).collect())
        } else if self.is_scalar() {
            let a = self.data[0];
            (other.shape.clone(), other.data.iter().map(|&b| f(a, b)).collect())
        } else {
            return Err(LeafError::ShapeMismatch {
                left: self.shape.to_vec(),
                right: other.shape.to_vec(),
            });
        };
        Ok(Array::from_parts(shape, data?))
    }

    /// Stacks equally shaped arrays along a new axis inserted at `axis`.
    pub fn stack(items: &[&Array<T>], axis: usize) -> Result<Self, LeafError> {
        let first = items.first().ok_or(LeafError::EmptyInput)?;
        let base = &first.shape;
        if axis > base.len() {
            return Err(LeafError::InvalidAxis {
                axis,
                ndim: base.len() + 1,
            });
        }
        for it in &items[1..] {
            if it.shape != *base {
                return Err(LeafError::ShapeMismatch {
                    left: base.to_vec(),
                    right: it.shape.to_vec(),
                });
            }
        }
        let outer = numel(&base[..axis]);
        let inner = numel(&base[axis..]);
        let mut data = Vec::with_capacity(outer * inner * items.len());
        for o in 0..outer {
            for it in items {
                data.extend_from_slice(&it.data[o * inner..(o + 1) * inner]);
            }
        }
        let mut shape = base.clone();
        shape.insert(axis, items.len());
        Ok(Self::from_parts(shape, data))
    }

    /// Concatenates along an existing axis; all other dimensions must agree.
    pub fn cat(items: &[&Array<T>], axis: usize) -> Result<Self, LeafError> {
        let first = items.first().ok_or(LeafError::EmptyInput)?;
        let base = &first.shape;
        if axis >= base.len() {
            return Err(LeafError::InvalidAxis {
                axis,
                ndim: base.len(),
            });
        }
        let mut total = 0;
        for it in items {
            let s = &it.shape;
            if s.len() != base.len()
                || s[..axis] != base[..axis]
                || s[axis + 1..] != base[axis + 1..]
            {
                return Err(LeafError::ShapeMismatch {
                    left: base.to_vec(),
                    right: s.to_vec(),
                });
            }
            total += s[axis];
        }
        let outer = numel(&base[..axis]);
        let tail = numel(&base[axis + 1..]);
        let mut data = Vec::with_capacity(outer * total * tail);
        for o in 0..outer {
            for it in items {
                let chunk = it.shape[axis] * tail;
                data.extend_from_slice(&it.data[o * chunk..(o + 1) * chunk]);
            }
        }
        let mut shape = base.clone();
        shape[axis] = total;
        Ok(Self::from_parts(shape, data))
    }

    /// Splits into pieces of `chunk` entries along `axis`; the last piece may
    /// be shorter. An axis of size zero yields no pieces.
    pub fn split(&self, chunk: usize, axis: usize) -> Result<Vec<Self>, LeafError> {
        if chunk == 0 {
            return Err(LeafError::InvalidChunk(chunk));
        }
        if axis >= self.ndim() {
            return Err(LeafError::InvalidAxis {
                axis,
                ndim: self.ndim(),
            });
        }
        let size = self.shape[axis];
        let starts = (0..size).step_by(chunk);
        Ok(starts
            .map(|start| self.slice_axis(axis, start..(start + chunk).min(size)))
            .collect())
    }

    /// Contiguous sub-range along one axis, keeping the axis.
    pub fn slice_axis(&self, axis: usize, range: Range<usize>) -> Self {
        assert!(axis < self.ndim() && range.start <= range.end && range.end <= self.shape[axis]);
        let outer = numel(&self.shape[..axis]);
        let size = self.shape[axis];
        let tail = numel(&self.shape[axis + 1..]);
        let width = range.len() * tail;
        let mut data = Vec::with_capacity(outer * width);
        for o in 0..outer {
            let base = (o * size + range.start) * tail;
            data.extend_from_slice(&self.data[base..base + width]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = range.len();
        Self::from_parts(shape, data)
    }

    /// Slice `index` along `axis`, dropping the axis.
    pub fn index_axis(&self, axis: usize, index: usize) -> Self {
        let mut out = self.slice_axis(axis, index..index + 1);
        out.shape.remove(axis);
        out
    }

    /// Extends axis 0 to `len` entries, filling the new tail with `fill`.
    pub fn pad_axis0(&self, len: usize, fill: T) -> Result<Self, LeafError> {
        if self.ndim() == 0 {
            return Err(LeafError::InvalidAxis { axis: 0, ndim: 0 });
        }
        let cur = self.shape[0];
        if len < cur {
            return Err(LeafError::ShapeMismatch {
                left: self.shape.to_vec(),
                right: vec![len],
            });
        }
        if len == cur {
            return Ok(self.clone());
        }
        let tail = numel(&self.shape[1..]);
        let mut data = Vec::with_capacity(len * tail);
        data.extend_from_slice(&self.data);
        data.resize(len * tail, fill);
        let mut shape = self.shape.clone();
        shape[0] = len;
        Ok(Self::from_parts(shape, data))
    }
}
