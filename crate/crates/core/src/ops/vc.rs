use super::{check_input, check_shape, check_upstream, FeatureMap, OpsError};
use crate::hierarchy::ConvTopology;

/// Parameters of one variant-coefficient convolution.
///
/// `basis` holds `M` matrices of shape `I × O`, laid out `[k][a][o]`.
/// `coeffs` holds `M` mixing weights per topology edge, laid out `[edge][k]`
/// in the topology's flat edge order.
#[derive(Debug, Clone, PartialEq)]
pub struct VcConvParams {
    pub in_dim: usize,
    pub out_dim: usize,
    pub basis_count: usize,
    pub basis: Vec<f64>,
    pub coeffs: Vec<f64>,
    pub bias: Vec<f64>,
}

impl VcConvParams {
    pub fn zeros(in_dim: usize, out_dim: usize, basis_count: usize, edge_count: usize) -> Self {
        Self {
            in_dim,
            out_dim,
            basis_count,
            basis: vec![0.0; basis_count * in_dim * out_dim],
            coeffs: vec![0.0; edge_count * basis_count],
            bias: vec![0.0; out_dim],
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self::zeros(
            self.in_dim,
            self.out_dim,
            self.basis_count,
            self.coeffs.len() / self.basis_count.max(1),
        )
    }

    pub fn parameter_count(&self) -> usize {
        self.basis.len() + self.coeffs.len() + self.bias.len()
    }

    /// Mixed edge weight `W_e = Σ_k α_ek B_k`, laid out `[a][o]`.
    pub fn edge_weight(&self, edge: usize) -> Vec<f64> {
        let io = self.in_dim * self.out_dim;
        let mut w = vec![0.0; io];
        for k in 0..self.basis_count {
            let alpha = self.coeffs[edge * self.basis_count + k];
            for (wi, bi) in w.iter_mut().zip(&self.basis[k * io..(k + 1) * io]) {
                *wi += alpha * bi;
            }
        }
        w
    }

    fn check(&self, topology: &ConvTopology) -> Result<(), OpsError> {
        check_shape("basis count", topology.basis_count(), self.basis_count)?;
        check_shape(
            "basis length",
            self.basis_count * self.in_dim * self.out_dim,
            self.basis.len(),
        )?;
        check_shape(
            "coefficient length",
            topology.edge_count() * self.basis_count,
            self.coeffs.len(),
        )?;
        check_shape("bias length", self.out_dim, self.bias.len())?;
        Ok(())
    }
}

pub fn vc_conv(
    params: &VcConvParams,
    topology: &ConvTopology,
    input: &FeatureMap,
) -> Result<FeatureMap, OpsError> {
    params.check(topology)?;
    check_input(topology, input, params.in_dim)?;
    let (m, id, od) = (params.basis_count, params.in_dim, params.out_dim);

    // projected[j][k][o] = (B_k^T x_j)_o
    let mut projected = vec![0.0; input.rows() * m * od];
    for j in 0..input.rows() {
        let x = input.row(j);
        for k in 0..m {
            let out = &mut projected[(j * m + k) * od..(j * m + k + 1) * od];
            for (a, &xa) in x.iter().enumerate() {
                let b = &params.basis[(k * id + a) * od..(k * id + a + 1) * od];
                for (o, bv) in out.iter_mut().zip(b) {
                    *o += xa * bv;
                }
            }
        }
    }

    let mut output = FeatureMap::zeros(topology.output_count(), od);
    for i in 0..topology.output_count() {
        let y = output.row_mut(i);
        y.copy_from_slice(&params.bias);
        for (e, &j) in topology.edge_range(i).zip(topology.neighbors(i)) {
            for k in 0..m {
                let alpha = params.coeffs[e * m + k];
                let p = &projected[(j * m + k) * od..(j * m + k + 1) * od];
                for (yo, pv) in y.iter_mut().zip(p) {
                    *yo += alpha * pv;
                }
            }
        }
    }
    Ok(output)
}

pub fn vc_conv_backward(
    params: &VcConvParams,
    topology: &ConvTopology,
    input: &FeatureMap,
    upstream: &FeatureMap,
) -> Result<(FeatureMap, VcConvParams), OpsError> {
    params.check(topology)?;
    check_input(topology, input, params.in_dim)?;
    check_upstream(topology, upstream, params.out_dim)?;
    let (m, id, od) = (params.basis_count, params.in_dim, params.out_dim);
    let mut grads = params.zeros_like();
    let mut dx = FeatureMap::zeros(input.rows(), id);

    for i in 0..topology.output_count() {
        let dy = upstream.row(i);
        for (g, d) in grads.bias.iter_mut().zip(dy) {
            *g += d;
        }

        // pulled[k][a] = (B_k dy_i)_a
        let mut pulled = vec![0.0; m * id];
        for k in 0..m {
            for a in 0..id {
                let b = &params.basis[(k * id + a) * od..(k * id + a + 1) * od];
                pulled[k * id + a] = b.iter().zip(dy).map(|(bv, d)| bv * d).sum();
            }
        }

        // mixed[k][a] = Σ_j α_ijk x_j[a]
        let mut mixed = vec![0.0; m * id];
        for (e, &j) in topology.edge_range(i).zip(topology.neighbors(i)) {
            let x = input.row(j);
            let dxj = dx.row_mut(j);
            for k in 0..m {
                let alpha = params.coeffs[e * m + k];
                let pk = &pulled[k * id..(k + 1) * id];
                grads.coeffs[e * m + k] = x.iter().zip(pk).map(|(xa, pa)| xa * pa).sum();
                for a in 0..id {
                    dxj[a] += alpha * pk[a];
                    mixed[k * id + a] += alpha * x[a];
                }
            }
        }

        for k in 0..m {
            for a in 0..id {
                let s = mixed[k * id + a];
                let gb = &mut grads.basis[(k * id + a) * od..(k * id + a + 1) * od];
                for (g, d) in gb.iter_mut().zip(dy) {
                    *g += s * d;
                }
            }
        }
    }
    Ok((dx, grads))
}

fn transposed(topology: &ConvTopology) -> Result<ConvTopology, OpsError> {
    topology
        .transpose()
        .map_err(|e| OpsError::Topology(e.to_string()))
}

/// `vc_conv` on the transpose of `topology`: up-sampling along the edges of
/// a down-sampling layout. Coefficients follow the transposed edge order.
pub fn vc_trans_conv(
    params: &VcConvParams,
    topology: &ConvTopology,
    input: &FeatureMap,
) -> Result<FeatureMap, OpsError> {
    vc_conv(params, &transposed(topology)?, input)
}

pub fn vc_trans_conv_backward(
    params: &VcConvParams,
    topology: &ConvTopology,
    input: &FeatureMap,
    upstream: &FeatureMap,
) -> Result<(FeatureMap, VcConvParams), OpsError> {
    vc_conv_backward(params, &transposed(topology)?, input, upstream)
}
