//! Element types and the scalar traits the dense kernel is generic over.

use std::fmt;
use std::str::FromStr;

use num_traits::{NumCast, One, Zero};
use serde::{Deserialize, Serialize};

use crate::array::Array;
use crate::leaf::LeafData;

/// Runtime element type tag of a leaf.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    F64,
    I64,
    Bool,
}

impl DType {
    pub const ALL: [DType; 4] = [DType::F32, DType::F64, DType::I64, DType::Bool];

    pub fn name(self) -> &'static str {
        match self {
            DType::F32 => "f32",
            DType::F64 => "f64",
            DType::I64 => "i64",
            DType::Bool => "bool",
        }
    }

    pub fn is_float(self) -> bool {
        matches!(self, DType::F32 | DType::F64)
    }
}

impl fmt::Display for DType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown dtype `{0}`")]
pub struct UnknownDType(pub String);

impl FromStr for DType {
    type Err = UnknownDType;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "f32" => Ok(DType::F32),
            "f64" => Ok(DType::F64),
            "i64" => Ok(DType::I64),
            "bool" => Ok(DType::Bool),
            other => Err(UnknownDType(other.to_string())),
        }
    }
}

/// A type that can be stored in an [`Array`].
pub trait Element: Copy + PartialEq + fmt::Debug + Send + Sync + 'static {
    const DTYPE: DType;

    fn wrap(array: Array<Self>) -> LeafData;

    fn unwrap(data: &LeafData) -> Option<&Array<Self>>;

    /// Converts a scalar into this element type when no information is lost.
    fn from_scalar(s: Scalar) -> Option<Self>;

    fn to_scalar(self) -> Scalar;
}

/// Arithmetic element types. Integer arithmetic wraps; integer division by
/// zero is the only failing operation.
pub trait Numeric: Element + PartialOrd + NumCast + Zero + One {
    fn add(self, rhs: Self) -> Self;
    fn sub(self, rhs: Self) -> Self;
    fn mul(self, rhs: Self) -> Self;
    fn div(self, rhs: Self) -> Option<Self>;
    fn neg(self) -> Self;
    fn abs(self) -> Self;

    fn square(self) -> Self {
        Numeric::mul(self, self)
    }

    fn to_f64(self) -> f64;
}

macro_rules! float_element {
    ($t:ty, $variant:ident) => {
        impl Element for $t {
            const DTYPE: DType = DType::$variant;

            fn wrap(array: Array<Self>) -> LeafData {
                LeafData::$variant(array)
            }

            fn unwrap(data: &LeafData) -> Option<&Array<Self>> {
                match data {
                    LeafData::$variant(a) => Some(a),
                    _ => None,
                }
            }

            fn from_scalar(s: Scalar) -> Option<Self> {
                match s {
                    Scalar::F32(v) => {
                        let x = v as $t;
                        (v.is_nan() || x as f64 == v as f64).then_some(x)
                    }
                    Scalar::F64(v) => {
                        let x = v as $t;
                        (v.is_nan() || x as f64 == v).then_some(x)
                    }
                    Scalar::I64(v) => {
                        let x = v as $t;
                        // i128 comparison avoids the saturating round trip at 2^63.
                        (x.is_finite() && x as i128 == v as i128).then_some(x)
                    }
                    Scalar::Bool(_) => None,
                }
            }

            fn to_scalar(self) -> Scalar {
                Scalar::$variant(self)
            }
        }

        impl Numeric for $t {
            fn add(self, rhs: Self) -> Self {
                self + rhs
            }
            fn sub(self, rhs: Self) -> Self {
                self - rhs
            }
            fn mul(self, rhs: Self) -> Self {
                self * rhs
            }
            fn div(self, rhs: Self) -> Option<Self> {
                Some(self / rhs)
            }
            fn neg(self) -> Self {
                -self
            }
            fn abs(self) -> Self {
                <$t>::abs(self)
            }
            fn to_f64(self) -> f64 {
                self as f64
            }
        }
    };
}

float_element!(f32, F32);
float_element!(f64, F64);

impl Element for i64 {
    const DTYPE: DType = DType::I64;

    fn wrap(array: Array<Self>) -> LeafData {
        LeafData::I64(array)
    }

    fn unwrap(data: &LeafData) -> Option<&Array<Self>> {
        match data {
            LeafData::I64(a) => Some(a),
            _ => None,
        }
    }

    fn from_scalar(s: Scalar) -> Option<Self> {
        let wide = match s {
            Scalar::I64(v) => return Some(v),
            Scalar::Bool(_) => return None,
            Scalar::F32(v) => v as f64,
            Scalar::F64(v) => v,
        };
        if wide.fract() != 0.0 || !(-9.223_372_036_854_776e18..9.223_372_036_854_776e18).contains(&wide) {
            return None;
        }
        Some(wide as i64)
    }

    fn to_scalar(self) -> Scalar {
        Scalar::I64(self)
    }
}

impl Numeric for i64 {
    fn add(self, rhs: Self) -> Self {
        self.wrapping_add(rhs)
    }
    fn sub(self, rhs: Self) -> Self {
        self.wrapping_sub(rhs)
    }
    fn mul(self, rhs: Self) -> Self {
        self.wrapping_mul(rhs)
    }
    fn div(self, rhs: Self) -> Option<Self> {
        (rhs != 0).then(|| self.wrapping_div(rhs))
    }
    fn neg(self) -> Self {
        self.wrapping_neg()
    }
    fn abs(self) -> Self {
        self.wrapping_abs()
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Element for bool {
    const DTYPE: DType = DType::Bool;

    fn wrap(array: Array<Self>) -> LeafData {
        LeafData::Bool(array)
    }

    fn unwrap(data: &LeafData) -> Option<&Array<Self>> {
        match data {
            LeafData::Bool(a) => Some(a),
            _ => None,
        }
    }

    fn from_scalar(s: Scalar) -> Option<Self> {
        match s {
            Scalar::Bool(b) => Some(b),
            Scalar::I64(0) => Some(false),
            Scalar::I64(1) => Some(true),
            Scalar::F32(v) if v == 0.0 || v == 1.0 => Some(v == 1.0),
            Scalar::F64(v) if v == 0.0 || v == 1.0 => Some(v == 1.0),
            _ => None,
        }
    }

    fn to_scalar(self) -> Scalar {
        Scalar::Bool(self)
    }
}

/// A single dynamically typed value, used for padding fills.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Scalar {
    F32(f32),
    F64(f64),
    I64(i64),
    Bool(bool),
}

impl Scalar {
    pub fn dtype(self) -> DType {
        match self {
            Scalar::F32(_) => DType::F32,
            Scalar::F64(_) => DType::F64,
            Scalar::I64(_) => DType::I64,
            Scalar::Bool(_) => DType::Bool,
        }
    }

    pub fn cast<T: Element>(self) -> Option<T> {
        T::from_scalar(self)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scalar::F32(v) => write!(f, "{v}"),
            Scalar::F64(v) => write!(f, "{v}"),
            Scalar::I64(v) => write!(f, "{v}"),
            Scalar::Bool(v) => write!(f, "{v}"),
        }
    }
}

impl From<f32> for Scalar {
    fn from(v: f32) -> Self {
        Scalar::F32(v)
    }
}

impl From<f64> for Scalar {
    fn from(v: f64) -> Self {
        Scalar::F64(v)
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::I64(v)
    }
}

impl From<bool> for Scalar {
    fn from(v: bool) -> Self {
        Scalar::Bool(v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_scalar_casts() {
        assert_eq!(Scalar::F64(0.5).cast::<f32>(), Some(0.5f32));
        assert_eq!(Scalar::F64(0.1).cast::<f32>(), None);
        assert_eq!(Scalar::F64(3.0).cast::<i64>(), Some(3));
        assert_eq!(Scalar::F64(3.5).cast::<i64>(), None);
        assert_eq!(Scalar::I64(1).cast::<bool>(), Some(true));
        assert_eq!(Scalar::I64(2).cast::<bool>(), None);
        assert_eq!(Scalar::I64(i64::MAX).cast::<f64>(), None);
        assert_eq!(Scalar::I64(-7).cast::<f32>(), Some(-7.0));
        assert!(Scalar::F64(f64::NAN).cast::<f32>().unwrap().is_nan());
        assert_eq!(Scalar::F64(f64::INFINITY).cast::<f32>(), Some(f32::INFINITY));
        assert_eq!(Scalar::Bool(true).cast::<f64>(), None);
    }

    #[test]
    fn integer_division_by_zero_fails() {
        assert_eq!(Numeric::div(7i64, 0), None);
        assert_eq!(Numeric::div(7i64, 2), Some(3));
        assert!(Numeric::div(1.0f64, 0.0).unwrap().is_infinite());
    }

    #[test]
    fn dtype_names_round_trip() {
        for d in DType::ALL {
            assert_eq!(d.name().parse::<DType>().unwrap(), d);
        }
        assert!("f16".parse::<DType>().is_err());
    }
}
