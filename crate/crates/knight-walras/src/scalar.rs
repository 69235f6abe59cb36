//! Scalar abstraction for the numeric core.
//!
//! Everything upstream of the LP kernel needs a full floating-point
//! scalar (powers, exp/ln, sqrt), so [`Scalar`] bundles
//! `num_traits::Float` with the conversion and formatting bounds the
//! solvers use. A blanket impl covers `f32` and `f64`.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar used by the numeric core.
pub trait Scalar: Float + FromPrimitive + Sum + Debug + Display + 'static {}

impl<T> Scalar for T where T: Float + FromPrimitive + Sum + Debug + Display + 'static {}

/// Converts an `f64` literal into the working scalar type.
///
/// Panics if the target type cannot represent the value at all (never
/// the case for `f32`/`f64`).
#[inline]
pub fn fp<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 literal must convert into the scalar type")
}

/// Sums a slice.
#[inline]
pub fn total<S: Scalar>(xs: &[S]) -> S {
    xs.iter().copied().sum()
}

/// Dot product of two equal-length slices.
#[inline]
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Maximum absolute entry, zero for an empty slice.
#[inline]
pub fn linf_norm<S: Scalar>(xs: &[S]) -> S {
    xs.iter().fold(S::zero(), |m, &x| m.max(x.abs()))
}

/// Euclidean norm.
#[inline]
pub fn l2_norm<S: Scalar>(xs: &[S]) -> S {
    xs.iter().map(|&x| x * x).sum::<S>().sqrt()
}

/// Sum of absolute entries.
#[inline]
pub fn l1_norm<S: Scalar>(xs: &[S]) -> S {
    xs.iter().map(|&x| x.abs()).sum()
}
