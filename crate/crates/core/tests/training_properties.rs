use facefill::filling::{distance_set, extract_filling, outlier_indices};
use facefill::mesh::{Mesh, Point};
use facefill::scargen::{
    generate_scar, make_dataset, synth_head, DatasetConfig, ScarProfile, ScarRanges, ScarSpec,
    Split,
};
use facefill::training::{
    adam_step, evaluate, load_split, loss_positions, train, vertex_distance, AdamConfig, AdamState,
    Architecture, IdentityReconstructor, LossMetric, TrainConfig,
};
use proptest::prelude::*;

fn points(n: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(prop::array::uniform3(-10.0f64..10.0), n)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 128, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn loss_ignores_a_shared_translation(
        (a, b) in (1usize..40).prop_flat_map(|n| (points(n), points(n))),
        shift in prop::array::uniform3(-100.0f64..100.0),
    ) {
        let moved = |p: &[Point]| p.iter().map(|v| [0, 1, 2].map(|c| v[c] + shift[c])).collect::<Vec<_>>();
        for metric in [LossMetric::L2, LossMetric::L1] {
            let (l0, _) = loss_positions(&a, &b, metric).unwrap();
            let (l1, _) = loss_positions(&moved(&a), &moved(&b), metric).unwrap();
            prop_assert!((l0 - l1).abs() <= 1e-9 * (1.0 + l0));
        }
    }

    #[test]
    fn outliers_are_scale_and_shift_equivariant(
        d in prop::collection::vec(0.0f64..10.0, 1..60),
        c in 1e-3f64..1e3,
        shift in -50.0f64..50.0,
    ) {
        // dyadic values keep the affine maps exact in floating point
        let d: Vec<f64> = d.iter().map(|x| (x * 64.0).round() / 64.0).collect();
        let c = 2f64.powi(c.log2().round() as i32);
        let shift = (shift * 4.0).round() / 4.0;
        let base = outlier_indices(&d, 2.0);
        prop_assert_eq!(&outlier_indices(&d.iter().map(|x| x * c).collect::<Vec<_>>(), 2.0), &base);
        prop_assert_eq!(&outlier_indices(&d.iter().map(|x| x + shift).collect::<Vec<_>>(), 2.0), &base);
        prop_assert!(outlier_indices(&d, f64::INFINITY).is_empty());
    }

    #[test]
    fn filling_volume_is_bounded(seed in any::<u64>(), center in 0usize..642, radius in 2usize..5) {
        let truth = synth_head(seed, 3);
        let depth = 1.5 * truth.mean_edge_length();
        let spec = ScarSpec { center, radius, max_depth: depth, profile: ScarProfile::Quadratic, seed };
        let (wounded, _) = generate_scar(&truth, &spec).unwrap();
        prop_assert!(distance_set(&truth, &truth).unwrap().iter().all(|d| *d == 0.0));
        let report = extract_filling(&wounded, &truth, 2.0).unwrap();
        prop_assume!(report.diagnostics.watertight);
        let volume = report.filling.signed_volume();
        let (lo, hi) = report.filling.bounding_box().unwrap();
        let box_volume: f64 = (0..3).map(|c| hi[c] - lo[c]).product();
        prop_assert!(volume > 0.0 && volume <= box_volume);
    }
}

#[test]
fn adam_runs_are_identical() {
    let run = || {
        let mut p = vec![0.3, -1.2, 2.0];
        let mut s = AdamState::new(3);
        for step in 0..100 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x + step as f64 * 1e-3).collect();
            adam_step(&mut p, &g, &mut s, &AdamConfig::default()).unwrap();
        }
        p
    };
    assert_eq!(run(), run());
}

#[test]
fn identity_evaluation_matches_vertex_distances() {
    let dir = tempfile::tempdir().unwrap();
    let config = DatasetConfig {
        count: 3,
        scars_per_mesh: 2,
        split_ratios: [1.0, 0.0, 0.0],
        subdivisions: 2,
        ..DatasetConfig::default()
    };
    let manifest = make_dataset(&config, dir.path()).unwrap();
    let pairs = load_split(&manifest, dir.path(), Split::Train).unwrap();
    let (report, meshes) = evaluate(&IdentityReconstructor, &pairs, Split::Train).unwrap();

    let per_mesh: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| vertex_distance(&p.input, &p.ground_truth).unwrap())
        .collect();
    let all: Vec<f64> = per_mesh.iter().flatten().copied().collect();
    let means: Vec<f64> = per_mesh
        .iter()
        .map(|d| d.iter().sum::<f64>() / d.len() as f64)
        .collect();
    let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
    let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(report.min_vertex_distance, min(&all));
    assert_eq!(report.max_vertex_distance, max(&all));
    assert!(
        (report.mean_vertex_distance - all.iter().sum::<f64>() / all.len() as f64).abs() < 1e-15
    );
    assert_eq!(report.min_mesh_mean, min(&means));
    assert_eq!(report.max_mesh_mean, max(&means));
    assert_eq!(report.statistics.len(), 5);
    for (mesh, d) in meshes.iter().zip(&per_mesh) {
        assert_eq!(mesh.attribute("error").unwrap(), d.as_slice());
    }
}

fn block_means(losses: &[f64], width: usize) -> Vec<f64> {
    losses
        .chunks_exact(width)
        .map(|c| c.iter().sum::<f64>() / width as f64)
        .collect()
}

#[test]
fn overfit_loss_curve_decreases_after_smoothing() {
    let dir = tempfile::tempdir().unwrap();
    let config = DatasetConfig {
        count: 8,
        scars_per_mesh: 1,
        seed: 4,
        split_ratios: [1.0, 0.0, 0.0],
        subdivisions: 2,
        ranges: ScarRanges {
            radius: (2, 4),
            depth: (0.5, 2.0),
        },
    };
    let manifest = make_dataset(&config, dir.path()).unwrap();
    let pairs = load_split(&manifest, dir.path(), Split::Train).unwrap();
    let arch = Architecture {
        level_ratios: vec![1.0, 0.25],
        widths: vec![3, 32],
        ..Architecture::default()
    };
    let cfg = TrainConfig {
        batch_size: 8,
        epochs: 2000,
        patience: 2000,
        max_steps: Some(2000),
        seed: 9,
        adam: AdamConfig {
            lr: 5e-4,
            ..AdamConfig::default()
        },
        ..TrainConfig::default()
    };
    let outcome = train(&pairs, &[], arch, &cfg).unwrap();
    let blocks = block_means(&outcome.step_losses, 50);
    assert_eq!(blocks.len(), 40);
    for (i, w) in blocks.windows(2).enumerate() {
        assert!(
            w[1] <= w[0],
            "block {} mean {} rose above {}",
            i + 1,
            w[1],
            w[0]
        );
    }
}

#[test]
fn unchanged_mesh_has_no_filling() {
    let m: Mesh = synth_head(2, 2);
    assert!(extract_filling(&m, &m, 2.0).is_err());
}
