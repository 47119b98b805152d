use serde::{Deserialize, Serialize};

use super::FeatureMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Activation {
    Elu { alpha: f64 },
    Relu,
}

impl Default for Activation {
    fn default() -> Self {
        Activation::Elu { alpha: 1.0 }
    }
}

/// `x` for `x > 0`, otherwise `alpha * (exp(x) - 1)`.
pub fn elu(input: &FeatureMap, alpha: f64) -> FeatureMap {
    input.map(|x| if x > 0.0 { x } else { alpha * x.exp_m1() })
}

pub fn relu(input: &FeatureMap) -> FeatureMap {
    input.map(|x| x.max(0.0))
}

pub fn activation(kind: Activation, input: &FeatureMap) -> FeatureMap {
    match kind {
        Activation::Elu { alpha } => elu(input, alpha),
        Activation::Relu => relu(input),
    }
}

/// Upstream gradient times the activation's derivative at `input`. The ELU
/// branch for `x <= 0` is used at zero, and ReLU's derivative at zero is 0.
pub fn activation_backward(
    kind: Activation,
    input: &FeatureMap,
    upstream: &FeatureMap,
) -> FeatureMap {
    let mut out = upstream.clone();
    for (g, &x) in out.as_mut_slice().iter_mut().zip(input.as_slice()) {
        let slope = match kind {
            Activation::Elu { alpha } => {
                if x > 0.0 {
                    1.0
                } else {
                    alpha * x.exp()
                }
            }
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
        };
        *g *= slope;
    }
    out
}
