//! Scalar abstractions shared by the statistics modules.

use std::fmt::Debug;

use num_traits::{Float, Num};

/// A number type closed under the field operations, constructible from counts.
///
/// Implemented for `f32`, `f64` and the exact rationals `Ratio<i64>` / `Ratio<i128>`,
/// so counting statistics (Jaccard, kappa, precision/recall) can run exactly.
pub trait Scalar: Num + Clone + PartialOrd + Debug + Send + Sync + 'static {
    fn from_count(n: u64) -> Self;

    fn to_f64(&self) -> f64;

    fn ratio(num: u64, den: u64) -> Self {
        Self::from_count(num) / Self::from_count(den)
    }
}

/// A floating-point [`Scalar`].
pub trait Real: Scalar + Float {
    fn from_f64(v: f64) -> Self;
}

impl Scalar for f64 {
    fn from_count(n: u64) -> Self {
        n as f64
    }
    fn to_f64(&self) -> f64 {
        *self
    }
}

impl Scalar for f32 {
    fn from_count(n: u64) -> Self {
        n as f32
    }
    fn to_f64(&self) -> f64 {
        f64::from(*self)
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
}

impl Real for f32 {
    fn from_f64(v: f64) -> Self {
        v as f32
    }
}

macro_rules! impl_ratio_scalar {
    ($int:ty) => {
        impl Scalar for num_rational::Ratio<$int> {
            fn from_count(n: u64) -> Self {
                num_rational::Ratio::from_integer(n as $int)
            }
            fn to_f64(&self) -> f64 {
                *self.numer() as f64 / *self.denom() as f64
            }
        }
    };
}

impl_ratio_scalar!(i64);
impl_ratio_scalar!(i128);

/// Arithmetic mean; `None` for an empty slice.
pub fn mean<T: Scalar>(values: &[T]) -> Option<T> {
    if values.is_empty() {
        return None;
    }
    let sum = values.iter().cloned().fold(T::zero(), |acc, v| acc + v);
    Some(sum / T::from_count(values.len() as u64))
}

/// Population standard deviation; `None` for an empty slice.
pub fn std_dev<T: Real>(values: &[T]) -> Option<T> {
    let m = mean(values)?;
    let var = values
        .iter()
        .map(|&v| (v - m) * (v - m))
        .fold(T::zero(), |acc, v| acc + v)
        / T::from_count(values.len() as u64);
    Some(var.sqrt())
}

/// Count, mean and population standard deviation of a group of values.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct MeanStd {
    pub n: usize,
    pub mean: f64,
    pub std_dev: f64,
}

impl MeanStd {
    /// `None` for an empty group.
    pub fn of(values: &[f64]) -> Option<Self> {
        Some(Self {
            n: values.len(),
            mean: mean(values)?,
            std_dev: std_dev(values)?,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_rational::Ratio;

    #[test]
    fn rational_ratio_is_exact() {
        let third = Ratio::<i64>::ratio(1, 3);
        assert_eq!(third + third + third, Ratio::from_integer(1));
        assert!((third.to_f64() - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn mean_and_std() {
        assert_eq!(mean::<f64>(&[]), None);
        assert_eq!(mean(&[1.0f64, 2.0, 3.0]), Some(2.0));
        let sd = std_dev(&[2.0f32, 4.0, 4.0, 4.0, 5.0, 5.0, 7.0, 9.0]).unwrap();
        assert!((sd - 2.0).abs() < 1e-6);
    }
}
