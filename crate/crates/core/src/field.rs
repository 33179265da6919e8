use crate::error::Result;

/// A vector value together with whether any part of it came from the
/// nearest-center fallback.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldValue {
    pub value: Vec<f64>,
    pub extrapolated: bool,
}

impl FieldValue {
    pub fn exact(value: Vec<f64>) -> Self {
        FieldValue {
            value,
            extrapolated: false,
        }
    }
}

/// Anything that can be evaluated as a vector field on R^d.
pub trait VectorField: Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, x: &[f64]) -> Result<FieldValue>;
}

impl<F: VectorField + ?Sized> VectorField for &F {
    fn dim(&self) -> usize {
        (**self).dim()
    }

    fn evaluate(&self, x: &[f64]) -> Result<FieldValue> {
        (**self).evaluate(x)
    }
}

/// Adapts a closure into a [`VectorField`].
pub struct FnField<F> {
    dim: usize,
    f: F,
}

impl<F> FnField<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    pub fn new(dim: usize, f: F) -> Self {
        FnField { dim, f }
    }
}

impl<F> VectorField for FnField<F>
where
    F: Fn(&[f64]) -> Vec<f64> + Sync,
{
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64]) -> Result<FieldValue> {
        crate::points::check_dim(self.dim, x.len())?;
        Ok(FieldValue::exact((self.f)(x)))
    }
}
