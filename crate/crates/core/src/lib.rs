//! Nested tensor trees with lifted elementwise operations, inheritable
//! constraints and persistent updates.

pub mod array;
pub mod bench;
pub mod constraint;
pub mod func;
pub mod io;
pub mod leaf;
pub mod padding;
pub mod scalar;
pub mod tree;
pub mod treelize;

pub use array::{Array, Shape};
pub use constraint::{Atom, Constraint, ConstraintTree, LeafAtom, NodeAtom, Violation, Violations};
pub use func::{FuncError, OuterStructure, Structure, StructTree};
pub use leaf::{BinaryFn, Device, LeafData, LeafError, TensorLeaf, UnaryFn};
pub use padding::{PadError, PaddedGroup};
pub use scalar::{DType, Element, Numeric, Scalar};
pub use tree::{Key, Node, Path, TreeError, TreeTensor};
pub use treelize::{LiftError, LiftedOp, MismatchPolicy, PolicyKind, TreeArg};

pub type ArrayF32 = Array<f32>;
pub type ArrayF64 = Array<f64>;
pub type ArrayI64 = Array<i64>;
pub type ArrayBool = Array<bool>;
