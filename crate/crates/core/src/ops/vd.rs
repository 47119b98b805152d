use super::{check_input, check_shape, check_upstream, FeatureMap, OpsError};
use crate::hierarchy::ConvTopology;

/// Density coefficients `ρ` per topology edge and, for residual layers with
/// differing widths, a learned `O × I` channel map `C` (row-major). Without
/// `mix` the channel map is the identity and `in_dim == out_dim`.
#[derive(Debug, Clone, PartialEq)]
pub struct VdParams {
    pub in_dim: usize,
    pub out_dim: usize,
    pub density: Vec<f64>,
    pub mix: Option<Vec<f64>>,
}

impl VdParams {
    pub fn zeros_like(&self) -> Self {
        Self {
            in_dim: self.in_dim,
            out_dim: self.out_dim,
            density: vec![0.0; self.density.len()],
            mix: self.mix.as_ref().map(|m| vec![0.0; m.len()]),
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.density.len() + self.mix.as_ref().map_or(0, Vec::len)
    }

    fn check(&self, topology: &ConvTopology) -> Result<(), OpsError> {
        check_shape("density length", topology.edge_count(), self.density.len())?;
        match &self.mix {
            Some(c) => check_shape("channel map length", self.out_dim * self.in_dim, c.len()),
            None => check_shape("output dimension", self.in_dim, self.out_dim),
        }
    }
}

/// `ρ'_ij = |ρ_ij| / Σ_j |ρ_ij|` for every neighborhood.
pub fn normalized_density(density: &[f64], topology: &ConvTopology) -> Result<Vec<f64>, OpsError> {
    check_shape("density length", topology.edge_count(), density.len())?;
    if density.iter().any(|r| !r.is_finite()) {
        return Err(OpsError::NonFinite("density"));
    }
    let mut out = vec![0.0; density.len()];
    for i in 0..topology.output_count() {
        let range = topology.edge_range(i);
        let total: f64 = density[range.clone()].iter().map(|r| r.abs()).sum();
        if total == 0.0 {
            return Err(OpsError::ZeroDensity(i));
        }
        for e in range {
            out[e] = density[e].abs() / total;
        }
    }
    Ok(out)
}

fn aggregate(weights: &[f64], topology: &ConvTopology, input: &FeatureMap) -> FeatureMap {
    let dim = input.dim();
    let mut out = FeatureMap::zeros(topology.output_count(), dim);
    for i in 0..topology.output_count() {
        let z = out.row_mut(i);
        for (e, &j) in topology.edge_range(i).zip(topology.neighbors(i)) {
            for (zv, xv) in z.iter_mut().zip(input.row(j)) {
                *zv += weights[e] * xv;
            }
        }
    }
    out
}

fn apply_mix(mix: &[f64], out_dim: usize, z: &FeatureMap) -> FeatureMap {
    let in_dim = z.dim();
    let mut y = FeatureMap::zeros(z.rows(), out_dim);
    for i in 0..z.rows() {
        let zi = z.row(i);
        for (o, yo) in y.row_mut(i).iter_mut().enumerate() {
            *yo = mix[o * in_dim..(o + 1) * in_dim]
                .iter()
                .zip(zi)
                .map(|(c, x)| c * x)
                .sum();
        }
    }
    y
}

/// Density-weighted pooling or unpooling (no channel map).
pub fn vd_aggregate(
    params: &VdParams,
    topology: &ConvTopology,
    input: &FeatureMap,
) -> Result<FeatureMap, OpsError> {
    if params.mix.is_some() {
        return Err(OpsError::Topology(
            "vd_aggregate takes no channel map; use vd_res".into(),
        ));
    }
    vd_res(params, topology, input)
}

/// `y_i = Σ_j ρ'_ij C x_j`, with `C` the identity when `params.mix` is `None`.
pub fn vd_res(
    params: &VdParams,
    topology: &ConvTopology,
    input: &FeatureMap,
) -> Result<FeatureMap, OpsError> {
    params.check(topology)?;
    check_input(topology, input, params.in_dim)?;
    let weights = normalized_density(&params.density, topology)?;
    let z = aggregate(&weights, topology, input);
    Ok(match &params.mix {
        Some(c) => apply_mix(c, params.out_dim, &z),
        None => z,
    })
}

/// Reverse pass for [`vd_aggregate`] and [`vd_res`].
///
/// `d|ρ|/dρ` is taken as `sign(ρ)`, with 0 at `ρ = 0`.
pub fn vd_backward(
    params: &VdParams,
    topology: &ConvTopology,
    input: &FeatureMap,
    upstream: &FeatureMap,
) -> Result<(FeatureMap, VdParams), OpsError> {
    params.check(topology)?;
    check_input(topology, input, params.in_dim)?;
    check_upstream(topology, upstream, params.out_dim)?;
    let weights = normalized_density(&params.density, topology)?;
    let mut grads = params.zeros_like();

    let dz = match &params.mix {
        Some(c) => {
            let z = aggregate(&weights, topology, input);
            let (id, od) = (params.in_dim, params.out_dim);
            let gc = grads.mix.as_mut().unwrap();
            let mut dz = FeatureMap::zeros(upstream.rows(), id);
            for i in 0..upstream.rows() {
                let dy = upstream.row(i);
                let zi = z.row(i);
                let dzi = dz.row_mut(i);
                for o in 0..od {
                    let row = &c[o * id..(o + 1) * id];
                    for a in 0..id {
                        gc[o * id + a] += dy[o] * zi[a];
                        dzi[a] += row[a] * dy[o];
                    }
                }
            }
            dz
        }
        None => upstream.clone(),
    };

    let mut dx = FeatureMap::zeros(input.rows(), params.in_dim);
    for i in 0..topology.output_count() {
        let dzi = dz.row(i);
        let range = topology.edge_range(i);
        let total: f64 = params.density[range.clone()].iter().map(|r| r.abs()).sum();
        let mut inner = vec![0.0; range.len()];
        for ((slot, e), &j) in inner
            .iter_mut()
            .zip(range.clone())
            .zip(topology.neighbors(i))
        {
            let xj = input.row(j);
            *slot = dzi.iter().zip(xj).map(|(d, x)| d * x).sum();
            for (g, d) in dx.row_mut(j).iter_mut().zip(dzi) {
                *g += weights[e] * d;
            }
        }
        let mean: f64 = range.clone().zip(&inner).map(|(e, g)| weights[e] * g).sum();
        for (e, g) in range.zip(&inner) {
            let r = params.density[e];
            let sign = if r > 0.0 {
                1.0
            } else if r < 0.0 {
                -1.0
            } else {
                0.0
            };
            grads.density[e] = sign * (g - mean) / total;
        }
    }
    Ok((dx, grads))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Max,
    Avg,
}

/// Componentwise max or mean over each neighborhood.
pub fn reference_pool(
    topology: &ConvTopology,
    input: &FeatureMap,
    mode: PoolMode,
) -> Result<FeatureMap, OpsError> {
    check_shape("input vertex count", topology.input_count(), input.rows())?;
    let dim = input.dim();
    let mut out = FeatureMap::zeros(topology.output_count(), dim);
    for i in 0..topology.output_count() {
        let hood = topology.neighbors(i);
        let y = out.row_mut(i);
        match mode {
            PoolMode::Max => {
                y.copy_from_slice(input.row(hood[0]));
                for &j in &hood[1..] {
                    for (yv, xv) in y.iter_mut().zip(input.row(j)) {
                        *yv = yv.max(*xv);
                    }
                }
            }
            PoolMode::Avg => {
                for &j in hood {
                    for (yv, xv) in y.iter_mut().zip(input.row(j)) {
                        *yv += xv;
                    }
                }
                let inv = hood.len() as f64;
                y.iter_mut().for_each(|v| *v /= inv);
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fm(values: &[f64], dim: usize) -> FeatureMap {
        FeatureMap::new(values.to_vec(), dim).unwrap()
    }

    fn pool(density: Vec<f64>) -> VdParams {
        VdParams {
            in_dim: 1,
            out_dim: 1,
            density,
            mix: None,
        }
    }

    #[test]
    fn normalization_of_signed_density() {
        let topo = ConvTopology::new(3, vec![vec![0, 1, 2]], 1).unwrap();
        let w = normalized_density(&[2.0, -2.0, 4.0], &topo).unwrap();
        assert_eq!(w, vec![0.25, 0.25, 0.5]);
        assert_eq!(
            normalized_density(&[0.0, 0.0, 0.0], &topo),
            Err(OpsError::ZeroDensity(0))
        );
        let y = vd_aggregate(&pool(vec![2.0, -2.0, 4.0]), &topo, &fm(&[4.0, 8.0, 1.0], 1)).unwrap();
        assert_eq!(y.as_slice(), &[3.5]);
    }

    #[test]
    fn equal_density_is_average_pooling() {
        let topo = ConvTopology::new(4, vec![vec![0, 1], vec![1, 2, 3]], 1).unwrap();
        let x = fm(&[1.0, 2.0, 3.0, 5.0, 7.0, 11.0, 13.0, 17.0], 2);
        let params = VdParams {
            in_dim: 2,
            out_dim: 2,
            density: vec![0.3; 5],
            mix: None,
        };
        let y = vd_aggregate(&params, &topo, &x).unwrap();
        let avg = reference_pool(&topo, &x, PoolMode::Avg).unwrap();
        for (a, b) in y.as_slice().iter().zip(avg.as_slice()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_input_passes_through() {
        let topo = ConvTopology::new(3, vec![vec![0, 2], vec![0, 1, 2]], 1).unwrap();
        let y = vd_aggregate(
            &pool(vec![0.1, 5.0, -3.0, 0.0, 2.0]),
            &topo,
            &fm(&[4.2; 3], 1),
        )
        .unwrap();
        for v in y.as_slice() {
            assert!((v - 4.2).abs() < 1e-12);
        }
    }

    #[test]
    fn residual_hand_values() {
        let topo = ConvTopology::new(1, vec![vec![0]], 1).unwrap();
        let params = VdParams {
            in_dim: 1,
            out_dim: 1,
            density: vec![0.4],
            mix: Some(vec![2.0]),
        };
        assert_eq!(
            vd_res(&params, &topo, &fm(&[3.0], 1)).unwrap().as_slice(),
            &[6.0]
        );
        assert_eq!(
            vd_res(&params, &topo, &fm(&[0.0], 1)).unwrap().as_slice(),
            &[0.0]
        );
        assert!(vd_aggregate(&params, &topo, &fm(&[3.0], 1)).is_err());

        let wide = VdParams {
            in_dim: 2,
            out_dim: 3,
            density: vec![1.0],
            mix: Some(vec![0.0; 5]),
        };
        assert!(matches!(
            vd_res(&wide, &topo, &fm(&[1.0, 2.0], 2)),
            Err(OpsError::Shape { .. })
        ));
    }

    #[test]
    fn reference_pooling() {
        let topo = ConvTopology::new(2, vec![vec![0, 1]], 1).unwrap();
        let x = fm(&[2.0, 4.0], 1);
        assert_eq!(
            reference_pool(&topo, &x, PoolMode::Max).unwrap().as_slice(),
            &[4.0]
        );
        assert_eq!(
            reference_pool(&topo, &x, PoolMode::Avg).unwrap().as_slice(),
            &[3.0]
        );
        let id = ConvTopology::identity(2);
        for mode in [PoolMode::Max, PoolMode::Avg] {
            assert_eq!(reference_pool(&id, &x, mode).unwrap(), x);
        }
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let topo = ConvTopology::new(3, vec![vec![0, 1], vec![1, 2]], 1).unwrap();
        let params = VdParams {
            in_dim: 2,
            out_dim: 1,
            density: vec![1.0, -2.0, 0.5, 3.0],
            mix: Some(vec![0.3, -0.7]),
        };
        let x = fm(&[1.0, 2.0, 3.0, 4.0, 5.0, 6.0], 2);
        let (dx, g) = vd_backward(&params, &topo, &x, &FeatureMap::zeros(2, 1)).unwrap();
        assert!(dx.as_slice().iter().all(|v| *v == 0.0));
        assert!(g.density.iter().all(|v| *v == 0.0));
        assert!(g.mix.unwrap().iter().all(|v| *v == 0.0));
    }
}
