use std::fmt::{Debug, Display};
use std::iter::Sum;

use candle_core::{DType, Device, Shape, Tensor};
use ndarray::ScalarOperand;
use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating-point scalar the numeric core is written against: `f32` for
/// production runs, `f64` for oracles and gradient checks.
pub trait Scalar:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + FftNum
    + ScalarOperand
    + Sum
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Tensor dtype matching this scalar.
    const TENSOR_DTYPE: DType;

    fn of(v: f64) -> Self;

    fn f64(self) -> f64;

    fn tensor<S: Into<Shape>>(
        data: Vec<Self>,
        shape: S,
        device: &Device,
    ) -> candle_core::Result<Tensor>;

    /// Flattened tensor contents, converted to this scalar type.
    fn tensor_values(t: &Tensor) -> candle_core::Result<Vec<Self>>;
}

impl Scalar for f32 {
    const TENSOR_DTYPE: DType = DType::F32;

    #[inline]
    fn of(v: f64) -> Self {
        v as f32
    }

    #[inline]
    fn f64(self) -> f64 {
        self as f64
    }

    fn tensor<S: Into<Shape>>(
        data: Vec<Self>,
        shape: S,
        device: &Device,
    ) -> candle_core::Result<Tensor> {
        Tensor::from_vec(data, shape, device)
    }

    fn tensor_values(t: &Tensor) -> candle_core::Result<Vec<Self>> {
        t.to_dtype(DType::F32)?.flatten_all()?.to_vec1::<f32>()
    }
}

impl Scalar for f64 {
    const TENSOR_DTYPE: DType = DType::F64;

    #[inline]
    fn of(v: f64) -> Self {
        v
    }

    #[inline]
    fn f64(self) -> f64 {
        self
    }

    fn tensor<S: Into<Shape>>(
        data: Vec<Self>,
        shape: S,
        device: &Device,
    ) -> candle_core::Result<Tensor> {
        Tensor::from_vec(data, shape, device)
    }

    fn tensor_values(t: &Tensor) -> candle_core::Result<Vec<Self>> {
        t.to_dtype(DType::F64)?.flatten_all()?.to_vec1::<f64>()
    }
}
