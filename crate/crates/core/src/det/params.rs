use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use crate::Real;

/// Location of one named tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamRef {
    pub offset: usize,
    pub len: usize,
}

impl ParamRef {
    pub fn range(&self) -> core::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParamSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl ParamSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// All trainable parameters of a model in one flat buffer.
///
/// Gradients and optimizer state use the same layout, so a parameter is
/// addressed by the same [`ParamRef`] everywhere.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<F> {
    specs: Vec<ParamSpec>,
    data: Vec<F>,
}

impl<F: Real> Default for ParamStore<F> {
    fn default() -> Self {
        Self { specs: Vec::new(), data: Vec::new() }
    }
}

impl<F: Real> ParamStore<F> {
    pub fn add(&mut self, name: &str, shape: &[usize]) -> ParamRef {
        let offset = self.data.len();
        let len: usize = shape.iter().product();
        self.specs.push(ParamSpec { name: name.into(), shape: shape.to_vec(), offset });
        self.data.resize(offset + len, F::zero());
        ParamRef { offset, len }
    }

    pub fn specs(&self) -> &[ParamSpec] {
        &self.specs
    }

    pub fn values(&self) -> &[F] {
        &self.data
    }

    pub fn values_mut(&mut self) -> &mut [F] {
        &mut self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn get(&self, r: ParamRef) -> &[F] {
        &self.data[r.range()]
    }

    pub fn get_mut(&mut self, r: ParamRef) -> &mut [F] {
        &mut self.data[r.range()]
    }

    pub fn find(&self, name: &str) -> Option<&ParamSpec> {
        self.specs.iter().find(|s| s.name == name)
    }

    pub fn zeros_like(&self) -> Vec<F> {
        vec![F::zero(); self.data.len()]
    }

    /// Same layout with every value converted to another float type.
    pub fn cast<G: Real>(&self) -> ParamStore<G> {
        ParamStore {
            specs: self.specs.clone(),
            data: self.data.iter().map(|&x| G::lit(x.as_f64())).collect(),
        }
    }
}
