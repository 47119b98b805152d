//! Mesh convolution operators with forward and reverse-mode evaluation.
//!
//! * [`vc_conv`]: every edge mixes a shared kernel basis with its own
//!   coefficients, `W_ij = Σ_k α_ijk B_k`, then `y_i = Σ_j W_ijᵀ x_j + b`.
//! * [`vd_aggregate`]: density-weighted pooling with
//!   `ρ'_ij = |ρ_ij| / Σ_j |ρ_ij|`.
//! * [`vd_res`]: the same weights followed by a channel map `C`.
//! * [`reference_pool`]: plain max or mean pooling.
//! * [`Activation`]: ELU and ReLU.
//!
//! Sums over a neighborhood always run in ascending neighbor order, so
//! forward and backward results are bit-reproducible.

mod activation;
mod init;
mod vc;
mod vd;

use thiserror::Error;

use crate::hierarchy::ConvTopology;

pub use activation::{activation, activation_backward, elu, relu, Activation};
pub use init::{init_vc_conv, init_vd};
pub use vc::{vc_conv, vc_conv_backward, vc_trans_conv, vc_trans_conv_backward, VcConvParams};
pub use vd::{
    normalized_density, reference_pool, vd_aggregate, vd_backward, vd_res, PoolMode, VdParams,
};

#[derive(Debug, Error, PartialEq)]
pub enum OpsError {
    #[error("{what}: expected {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("all density coefficients of output vertex {0} are zero")]
    ZeroDensity(usize),
    #[error("invalid topology: {0}")]
    Topology(String),
}

pub(crate) fn check_shape(what: &'static str, expected: usize, got: usize) -> Result<(), OpsError> {
    if expected == got {
        Ok(())
    } else {
        Err(OpsError::Shape {
            what,
            expected,
            got,
        })
    }
}

/// Per-vertex feature vectors of uniform dimension, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMap {
    data: Vec<f64>,
    dim: usize,
}

impl FeatureMap {
    pub fn new(data: Vec<f64>, dim: usize) -> Result<Self, OpsError> {
        if dim == 0 || data.len() % dim != 0 {
            return Err(OpsError::Shape {
                what: "feature data length",
                expected: dim,
                got: data.len(),
            });
        }
        Ok(Self { data, dim })
    }

    pub fn zeros(rows: usize, dim: usize) -> Self {
        Self {
            data: vec![0.0; rows * dim],
            dim,
        }
    }

    pub fn from_rows(rows: &[[f64; 3]]) -> Self {
        Self {
            data: rows.iter().flatten().copied().collect(),
            dim: 3,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn add_assign(&mut self, other: &FeatureMap) {
        debug_assert_eq!(self.data.len(), other.data.len());
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> FeatureMap {
        FeatureMap {
            data: self.data.iter().map(|&x| f(x)).collect(),
            dim: self.dim,
        }
    }
}

pub(crate) fn check_input(
    topology: &ConvTopology,
    input: &FeatureMap,
    in_dim: usize,
) -> Result<(), OpsError> {
    check_shape("input vertex count", topology.input_count(), input.rows())?;
    check_shape("input feature dimension", in_dim, input.dim())?;
    if !input.is_finite() {
        return Err(OpsError::NonFinite("input features"));
    }
    Ok(())
}

pub(crate) fn check_upstream(
    topology: &ConvTopology,
    upstream: &FeatureMap,
    out_dim: usize,
) -> Result<(), OpsError> {
    check_shape(
        "upstream vertex count",
        topology.output_count(),
        upstream.rows(),
    )?;
    check_shape("upstream feature dimension", out_dim, upstream.dim())?;
    if !upstream.is_finite() {
        return Err(OpsError::NonFinite("upstream gradient"));
    }
    Ok(())
}

/// One differentiable layer with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    VcConv(VcConvParams),
    /// Evaluated on the transpose of the topology it is given.
    VcTransConv(VcConvParams),
    /// vdPool / vdUnpool, or vdRes when the params carry a channel map.
    Vd(VdParams),
    Activation(Activation),
}

/// Parameter gradients, shaped like the layer's parameters.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerGrads {
    VcConv(VcConvParams),
    Vd(VdParams),
    None,
}

impl Layer {
    pub fn forward(
        &self,
        topology: &ConvTopology,
        input: &FeatureMap,
    ) -> Result<FeatureMap, OpsError> {
        match self {
            Layer::VcConv(p) => vc_conv(p, topology, input),
            Layer::VcTransConv(p) => vc_trans_conv(p, topology, input),
            Layer::Vd(p) => vd_res(p, topology, input),
            Layer::Activation(a) => {
                if !input.is_finite() {
                    return Err(OpsError::NonFinite("input features"));
                }
                Ok(activation(*a, input))
            }
        }
    }

    /// Gradients of a downstream scalar with respect to the input and to every
    /// parameter, given its gradient with respect to this layer's output.
    pub fn backward(
        &self,
        topology: &ConvTopology,
        input: &FeatureMap,
        upstream: &FeatureMap,
    ) -> Result<(FeatureMap, LayerGrads), OpsError> {
        match self {
            Layer::VcConv(p) => {
                let (dx, g) = vc_conv_backward(p, topology, input, upstream)?;
                Ok((dx, LayerGrads::VcConv(g)))
            }
            Layer::VcTransConv(p) => {
                let (dx, g) = vc_trans_conv_backward(p, topology, input, upstream)?;
                Ok((dx, LayerGrads::VcConv(g)))
            }
            Layer::Vd(p) => {
                let (dx, g) = vd_backward(p, topology, input, upstream)?;
                Ok((dx, LayerGrads::Vd(g)))
            }
            Layer::Activation(a) => {
                check_shape(
                    "upstream length",
                    input.as_slice().len(),
                    upstream.as_slice().len(),
                )?;
                if !upstream.is_finite() {
                    return Err(OpsError::NonFinite("upstream gradient"));
                }
                Ok((activation_backward(*a, input, upstream), LayerGrads::None))
            }
        }
    }
}
