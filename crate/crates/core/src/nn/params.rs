use serde::{Deserialize, Serialize};

use super::spec::{Layer, NetworkSpec};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Flat parameter vector: a model, or an update between two models.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamVector(Vec<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn zeros_for(spec: &NetworkSpec) -> Self {
        Self::zeros(spec.param_count())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn dot(&self, other: &Self) -> f64 {
        self.0.iter().zip(&other.0).map(|(a, b)| a * b).sum()
    }

    pub fn squared_distance(&self, other: &Self) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum()
    }

    pub fn distance(&self, other: &Self) -> f64 {
        self.squared_distance(other).sqrt()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|v| v * c).collect())
    }

    /// `self + c * other`.
    pub fn axpy(&self, c: f64, other: &Self) -> Result<Self> {
        self.check_len(other)?;
        Ok(Self(
            self.0
                .iter()
                .zip(&other.0)
                .map(|(a, b)| a + c * b)
                .collect(),
        ))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    /// In-place `self += c * other`.
    pub fn add_scaled(&mut self, c: f64, other: &Self) -> Result<()> {
        self.check_len(other)?;
        for (a, b) in self.0.iter_mut().zip(&other.0) {
            *a += c * b;
        }
        Ok(())
    }

    pub fn check_len(&self, other: &Self) -> Result<()> {
        if self.len() != other.len() {
            return Err(Error::dim(format!(
                "parameter vectors of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        Ok(())
    }

    pub fn check_spec(&self, spec: &NetworkSpec) -> Result<()> {
        if self.len() != spec.param_count() {
            return Err(Error::dim(format!(
                "`{}` has {} parameters, vector has {}",
                spec.name(),
                spec.param_count(),
                self.len()
            )));
        }
        Ok(())
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        Self(v)
    }
}

/// Gradient of a scalar loss, aligned with a [`ParamVector`].
#[derive(Debug, Clone, PartialEq)]
pub struct Gradient(Vec<f64>);

impl Gradient {
    pub fn new(values: Vec<f64>) -> Self {
        Self(values)
    }

    pub fn zeros(len: usize) -> Self {
        Self(vec![0.0; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

/// Weights of one parametric layer in structured form.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerWeights {
    pub weight: Tensor,
    pub bias: Tensor,
}

fn weight_shapes(spec: &NetworkSpec) -> Vec<(Vec<usize>, usize)> {
    spec.plan()
        .iter()
        .filter_map(|p| match p.layer {
            Layer::Conv2d {
                in_ch,
                out_ch,
                kernel,
                ..
            } => Some((vec![out_ch, in_ch, kernel, kernel], out_ch)),
            Layer::FullyConnected { in_dim, out_dim } => Some((vec![out_dim, in_dim], out_dim)),
            _ => None,
        })
        .collect()
}

/// Concatenates structured weights in the documented layout order.
pub fn flatten_params(spec: &NetworkSpec, weights: &[LayerWeights]) -> Result<ParamVector> {
    let shapes = weight_shapes(spec);
    if shapes.len() != weights.len() {
        return Err(Error::dim(format!(
            "expected {} parametric layers, got {}",
            shapes.len(),
            weights.len()
        )));
    }
    let mut out = Vec::with_capacity(spec.param_count());
    for (i, ((wshape, blen), lw)) in shapes.iter().zip(weights).enumerate() {
        if lw.weight.shape() != wshape.as_slice() || lw.bias.shape() != [*blen] {
            return Err(Error::dim(format!(
                "layer {i}: expected weight {wshape:?} and bias [{blen}], got {:?} and {:?}",
                lw.weight.shape(),
                lw.bias.shape()
            )));
        }
        out.extend_from_slice(lw.weight.values());
        out.extend_from_slice(lw.bias.values());
    }
    Ok(ParamVector(out))
}

/// Splits a flat vector back into per-layer weight and bias tensors.
pub fn unflatten_params(spec: &NetworkSpec, params: &ParamVector) -> Result<Vec<LayerWeights>> {
    params.check_spec(spec)?;
    let mut rest = params.as_slice();
    let mut out = Vec::new();
    for (wshape, blen) in weight_shapes(spec) {
        let wlen: usize = wshape.iter().product();
        let (w, tail) = rest.split_at(wlen);
        let (b, tail) = tail.split_at(blen);
        rest = tail;
        out.push(LayerWeights {
            weight: Tensor::new(wshape, w.to_vec())?,
            bias: Tensor::new(vec![blen], b.to_vec())?,
        });
    }
    Ok(out)
}
