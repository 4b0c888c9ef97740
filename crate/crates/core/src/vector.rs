//! Small fixed-size vector helpers on `[T; N]`.

use crate::Scalar;

pub type Point<T, const N: usize> = [T; N];

#[inline]
pub fn dot<T: Scalar, const N: usize>(a: &[T; N], b: &[T; N]) -> T {
    let mut s = T::zero();
    for i in 0..N {
        s = s + a[i] * b[i];
    }
    s
}

#[inline]
pub fn norm_sq<T: Scalar, const N: usize>(a: &[T; N]) -> T {
    dot(a, a)
}

#[inline]
pub fn norm<T: Scalar, const N: usize>(a: &[T; N]) -> T {
    norm_sq(a).sqrt()
}

#[inline]
pub fn add<T: Scalar, const N: usize>(a: &[T; N], b: &[T; N]) -> [T; N] {
    std::array::from_fn(|i| a[i] + b[i])
}

#[inline]
pub fn sub<T: Scalar, const N: usize>(a: &[T; N], b: &[T; N]) -> [T; N] {
    std::array::from_fn(|i| a[i] - b[i])
}

#[inline]
pub fn scale<T: Scalar, const N: usize>(a: &[T; N], s: T) -> [T; N] {
    std::array::from_fn(|i| a[i] * s)
}

/// `a + s * b`
#[inline]
pub fn axpy<T: Scalar, const N: usize>(a: &[T; N], s: T, b: &[T; N]) -> [T; N] {
    std::array::from_fn(|i| a[i] + s * b[i])
}

#[inline]
pub fn unit<T: Scalar, const N: usize>(k: usize) -> [T; N] {
    std::array::from_fn(|i| if i == k { T::one() } else { T::zero() })
}

pub fn to_f64<T: Scalar, const N: usize>(a: &[T; N]) -> [f64; N] {
    std::array::from_fn(|i| a[i].to_f64_lossy())
}

pub fn from_f64<T: Scalar, const N: usize>(a: &[f64; N]) -> [T; N] {
    std::array::from_fn(|i| T::lit(a[i]))
}

/// Symmetric matrix-vector quadratic form `<H v, v>`.
#[inline]
pub fn quad_form<T: Scalar, const N: usize>(h: &[[T; N]; N], v: &[T; N]) -> T {
    let mut s = T::zero();
    for i in 0..N {
        for j in 0..N {
            s = s + h[i][j] * v[i] * v[j];
        }
    }
    s
}

pub fn trace<T: Scalar, const N: usize>(h: &[[T; N]; N]) -> T {
    (0..N).fold(T::zero(), |acc, i| acc + h[i][i])
}
