use rand::Rng;

use super::{VcConvParams, VdParams};
use crate::hierarchy::ConvTopology;

fn uniform<R: Rng + ?Sized>(rng: &mut R, bound: f64, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-bound..=bound)).collect()
}

/// Basis entries uniform in ±√(1/(M·I)), coefficients uniform in ±√(1/M),
/// zero bias. The basis is drawn before the coefficients.
pub fn init_vc_conv<R: Rng + ?Sized>(
    rng: &mut R,
    topology: &ConvTopology,
    in_dim: usize,
    out_dim: usize,
) -> VcConvParams {
    let m = topology.basis_count();
    let basis = uniform(
        rng,
        (1.0 / (m * in_dim) as f64).sqrt(),
        m * in_dim * out_dim,
    );
    let coeffs = uniform(rng, (1.0 / m as f64).sqrt(), topology.edge_count() * m);
    VcConvParams {
        in_dim,
        out_dim,
        basis_count: m,
        basis,
        coeffs,
        bias: vec![0.0; out_dim],
    }
}

/// Unit densities, so the layer starts as exact average pooling. A channel
/// map is created only when the widths differ, uniform in ±√(1/I).
pub fn init_vd<R: Rng + ?Sized>(
    rng: &mut R,
    topology: &ConvTopology,
    in_dim: usize,
    out_dim: usize,
) -> VdParams {
    let mix =
        (in_dim != out_dim).then(|| uniform(rng, (1.0 / in_dim as f64).sqrt(), out_dim * in_dim));
    VdParams {
        in_dim,
        out_dim,
        density: vec![1.0; topology.edge_count()],
        mix,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ops::{reference_pool, vd_aggregate, FeatureMap, PoolMode};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn fresh_vd_layer_is_average_pooling() {
        let topo = ConvTopology::new(5, vec![vec![0, 1, 4], vec![2, 3]], 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let params = init_vd(&mut rng, &topo, 2, 2);
        assert!(params.mix.is_none());
        let x = FeatureMap::new((0..10).map(|v| v as f64 * 1.5).collect(), 2).unwrap();
        assert_eq!(
            vd_aggregate(&params, &topo, &x).unwrap(),
            reference_pool(&topo, &x, PoolMode::Avg).unwrap()
        );
    }

    #[test]
    fn init_bounds_and_determinism() {
        let topo = ConvTopology::new(3, vec![vec![0, 1], vec![1, 2]], 4).unwrap();
        let a = init_vc_conv(&mut ChaCha8Rng::seed_from_u64(9), &topo, 3, 5);
        let b = init_vc_conv(&mut ChaCha8Rng::seed_from_u64(9), &topo, 3, 5);
        assert_eq!(a, b);
        let bb = (1.0f64 / 12.0).sqrt();
        assert!(a.basis.iter().all(|v| v.abs() <= bb));
        assert!(a.coeffs.iter().all(|v| v.abs() <= 0.5));
        assert_eq!(a.parameter_count(), 4 * 3 * 5 + 4 * 4 + 5);
        assert!(a.bias.iter().all(|v| *v == 0.0));
    }
}
