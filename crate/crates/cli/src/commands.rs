use std::path::{Path, PathBuf};

use facefill::filling::{extract_filling, FillError};
use facefill::mesh::{
    boundary_loops, connected_components, euler_characteristic, fill_holes, is_watertight,
    keep_largest_component, load_mesh, load_mesh_file, save_mesh_file, Mesh, MeshError, MeshFormat,
};
use facefill::ops::Activation;
use facefill::scargen::{
    make_dataset, manifest_dir, DatasetManifest, ScarError, Split, MANIFEST_FILE,
};
use facefill::training::{
    append_metrics_csv, evaluate, load_checkpoint, load_split, save_checkpoint, train as fit,
    vertex_distance, IdentityReconstructor, Reconstructor,
};
use log::info;
use serde::de::DeserializeOwned;
use serde_json::json;

use crate::config::RunConfig;
use crate::{EvalArgs, ExtractArgs, Failure, GenDataArgs, PreprocessArgs, StatsArgs, TrainArgs};

fn mesh_failure(path: &Path, e: MeshError) -> Failure {
    Failure::data(format!("{}: {e}", path.display()))
}

fn scar_failure(e: ScarError) -> Failure {
    match e {
        ScarError::InvalidConfig(_) | ScarError::EmptyRange(_) => Failure::usage(e),
        other => Failure::data(other),
    }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), Failure> {
    std::fs::write(path, bytes).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn ensure_dir(path: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn required(value: Option<PathBuf>, what: &str) -> Result<PathBuf, Failure> {
    value.ok_or_else(|| {
        Failure::usage(format!(
            "missing {what}: pass the flag or set it in the config"
        ))
    })
}

/// Parses a bare keyword through the serde names of `T`.
fn keyword<T: DeserializeOwned>(flag: &str, value: &str) -> Result<T, Failure> {
    serde_json::from_value(serde_json::Value::String(value.to_string()))
        .map_err(|_| Failure::usage(format!("invalid value `{value}` for --{flag}")))
}

pub fn gen_data(mut config: RunConfig, a: GenDataArgs) -> Result<(), Failure> {
    let d = &mut config.dataset;
    if let Some(v) = a.count {
        d.count = v;
    }
    if let Some(v) = a.scars {
        d.scars_per_mesh = v;
    }
    if let Some(v) = a.seed {
        d.seed = v;
    }
    if let Some(v) = a.ratios {
        d.split_ratios = [v[0], v[1], v[2]];
    }
    if let Some(v) = a.subdivisions {
        d.subdivisions = v;
    }
    if let Some(v) = a.radius {
        d.ranges.radius = (v[0], v[1]);
    }
    if let Some(v) = a.depth {
        d.ranges.depth = (v[0], v[1]);
    }
    let out = required(
        a.out.or(config.paths.out_dir.clone()),
        "output directory (--out)",
    )?;
    config.validate()?;
    ensure_dir(&out)?;
    let manifest = make_dataset(&config.dataset, &out).map_err(scar_failure)?;
    let sizes = config.dataset.split_sizes();
    let files = config.dataset.count * (config.dataset.scars_per_mesh + 1);
    println!(
        "wrote {files} meshes and {}",
        out.join(MANIFEST_FILE).display()
    );
    println!(
        "{} entries; heads per split: train {}, val {}, test {}",
        manifest.entries.len(),
        sizes[0],
        sizes[1],
        sizes[2]
    );
    Ok(())
}

pub fn preprocess(config: RunConfig, a: PreprocessArgs) -> Result<(), Failure> {
    let out = required(
        a.out.or(config.paths.out_dir.clone()),
        "output directory (--out)",
    )?;
    config.validate()?;
    ensure_dir(&out)?;
    for path in &a.inputs {
        let name = path
            .file_name()
            .ok_or_else(|| Failure::usage(format!("{} is not a file", path.display())))?;
        let target = out.join(name);
        let format = MeshFormat::from_path(path).map_err(|e| mesh_failure(path, e))?;
        let bytes =
            std::fs::read(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let mesh = load_mesh(&bytes, format).map_err(|e| mesh_failure(path, e))?;
        let (_, components) = connected_components(&mesh);
        let watertight = is_watertight(&mesh);
        if components == 1 && watertight {
            write_file(&target, &bytes)?;
            println!("{}: no-op (1 component, watertight)", path.display());
            continue;
        }
        let (largest, _) = keep_largest_component(&mesh).map_err(|e| mesh_failure(path, e))?;
        let filled = fill_holes(&largest).map_err(|e| mesh_failure(path, e))?;
        save_mesh_file(&filled, &target).map_err(|e| mesh_failure(&target, e))?;
        println!(
            "{}: {components} components -> 1, watertight {watertight} -> {}, {} -> {} vertices",
            path.display(),
            is_watertight(&filled),
            mesh.vertex_count(),
            filled.vertex_count()
        );
    }
    Ok(())
}

fn load_manifest(path: &Path) -> Result<DatasetManifest, Failure> {
    DatasetManifest::load(path).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

pub fn train(mut config: RunConfig, a: TrainArgs) -> Result<(), Failure> {
    let arch = &mut config.architecture;
    if let Some(v) = a.arch.level_ratios {
        arch.level_ratios = v;
    }
    if let Some(v) = a.arch.widths {
        arch.widths = v;
    }
    if let Some(v) = a.arch.activation {
        arch.activation = match v.as_str() {
            "elu" => Activation::Elu { alpha: 1.0 },
            "relu" => Activation::Relu,
            _ => {
                return Err(Failure::usage(format!(
                    "invalid value `{v}` for --activation"
                )))
            }
        };
    }
    let t = &mut config.training;
    if let Some(v) = a.lr {
        t.adam.lr = v;
    }
    if let Some(v) = a.batch_size {
        t.batch_size = v;
    }
    if let Some(v) = a.epochs {
        t.epochs = v;
    }
    if let Some(v) = a.patience {
        t.patience = v;
    }
    if a.max_steps.is_some() {
        t.max_steps = a.max_steps;
    }
    if let Some(v) = a.seed {
        t.seed = v;
    }
    if let Some(v) = a.loss_target {
        t.loss.target = keyword("loss-target", &v)?;
    }
    if let Some(v) = a.loss_metric {
        t.loss.metric = keyword("loss-metric", &v)?;
    }
    let manifest_path = required(
        a.manifest.or(config.paths.manifest.clone()),
        "manifest (--manifest)",
    )?;
    let out = required(
        a.out.or(config.paths.checkpoint.clone()),
        "checkpoint path (--out)",
    )?;
    let metrics = a
        .metrics
        .or(config.paths.metrics.clone())
        .unwrap_or_else(|| out.with_file_name("metrics.csv"));
    config.validate()?;

    let manifest = load_manifest(&manifest_path)?;
    let dir = manifest_dir(&manifest_path);
    let train_pairs = load_split(&manifest, &dir, Split::Train)?;
    let val_pairs = load_split(&manifest, &dir, Split::Val)?;
    info!(
        "training on {} pairs, validating on {}",
        train_pairs.len(),
        val_pairs.len()
    );
    let outcome = fit(
        &train_pairs,
        &val_pairs,
        config.architecture.clone(),
        &config.training,
    )?;
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    save_checkpoint(&outcome.model, &out)?;
    append_metrics_csv(&metrics, &outcome.metrics)?;
    println!(
        "{} steps, best epoch {} with loss {:.6e}{}",
        outcome.steps,
        outcome.best_epoch,
        outcome.best_loss,
        if outcome.stopped_early {
            " (stopped early)"
        } else {
            ""
        }
    );
    println!("checkpoint {}", out.display());
    println!("metrics {}", metrics.display());
    Ok(())
}

pub fn eval(config: RunConfig, a: EvalArgs) -> Result<(), Failure> {
    let split: Split = a.split.parse().map_err(Failure::usage)?;
    let manifest_path = required(
        a.manifest.or(config.paths.manifest.clone()),
        "manifest (--manifest)",
    )?;
    let checkpoint = a.checkpoint.or(config.paths.checkpoint.clone());
    if checkpoint.is_none() && !a.identity {
        return Err(Failure::usage("pass --checkpoint or --identity"));
    }
    let out = a.out.or(config.paths.out_dir.clone());
    config.validate()?;

    let manifest = load_manifest(&manifest_path)?;
    let pairs = load_split(&manifest, &manifest_dir(&manifest_path), split)?;
    let model;
    let reconstructor: &dyn Reconstructor = match (&checkpoint, a.identity) {
        (_, true) => &IdentityReconstructor,
        (Some(path), false) => {
            model = load_checkpoint(path)?;
            &model
        }
        (None, false) => unreachable!(),
    };
    let (report, meshes) = evaluate(reconstructor, &pairs, split)?;
    for row in &report.statistics {
        println!("{:<28} {:.6e}", row.statistic, row.value);
    }
    if let Some(out) = out {
        ensure_dir(&out)?;
        write_file(&out.join("report.json"), &report.to_json_bytes())?;
        for (pair, mesh) in pairs.iter().zip(&meshes) {
            let stem = Path::new(&pair.name)
                .file_stem()
                .map_or(pair.name.clone(), |s| s.to_string_lossy().into_owned());
            let path = out.join(format!("{stem}_error.ply"));
            save_mesh_file(mesh, &path).map_err(|e| mesh_failure(&path, e))?;
        }
        println!("report {}", out.join("report.json").display());
    }
    Ok(())
}

pub fn extract_fill(mut config: RunConfig, a: ExtractArgs) -> Result<(), Failure> {
    if let Some(k) = a.k_sigma {
        config.extraction.k_sigma = k;
    }
    let out = a.out.or(config.paths.out_dir.clone());
    config.validate()?;
    let input = load_mesh_file(&a.input).map_err(|e| mesh_failure(&a.input, e))?;
    let output = load_mesh_file(&a.output).map_err(|e| mesh_failure(&a.output, e))?;
    let report =
        extract_filling(&input, &output, config.extraction.k_sigma).map_err(|e| match e {
            FillError::Mesh(m) => Failure::data(m),
            other => Failure::data(other),
        })?;
    let d = &report.diagnostics;
    println!("vertices    {}", d.vertex_count);
    println!("mean        {:.6e}", d.mean);
    println!("std         {:.6e}", d.std);
    println!("outliers    {}", d.outlier_count);
    println!("watertight  {}", d.watertight);
    for m in &d.messages {
        log::warn!("{m}");
    }
    if let Some(out) = out {
        ensure_dir(&out)?;
        for name in ["filling.stl", "filling.ply"] {
            let path = out.join(name);
            save_mesh_file(&report.filling, &path).map_err(|e| mesh_failure(&path, e))?;
        }
        write_file(&out.join("fill_report.json"), &report.to_json_bytes())?;
        println!("filling {}", out.join("filling.stl").display());
    }
    Ok(())
}

fn describe(
    path: &Path,
    mesh: &Mesh,
    against: Option<&Mesh>,
) -> Result<serde_json::Value, Failure> {
    let loops = boundary_loops(mesh).map_err(|e| mesh_failure(path, e))?;
    let mut v = json!({
        "path": path.display().to_string(),
        "vertices": mesh.vertex_count(),
        "faces": mesh.face_count(),
        "components": connected_components(mesh).1,
        "boundary_loops": loops.len(),
        "watertight": is_watertight(mesh),
        "euler_characteristic": euler_characteristic(mesh),
        "bounding_box_diagonal": mesh.bounding_box_diagonal(),
        "mean_edge_length": mesh.mean_edge_length(),
        "signed_volume": mesh.signed_volume(),
    });
    if let Some(reference) = against {
        let d = vertex_distance(mesh, reference)
            .map_err(|e| Failure::data(format!("{}: {e}", path.display())))?;
        let n = d.len().max(1) as f64;
        v["distance"] = json!({
            "min": d.iter().copied().fold(f64::INFINITY, f64::min),
            "mean": d.iter().sum::<f64>() / n,
            "max": d.iter().copied().fold(0.0, f64::max),
        });
    }
    Ok(v)
}

pub fn stats(a: StatsArgs) -> Result<(), Failure> {
    let reference = match &a.against {
        Some(p) => Some(load_mesh_file(p).map_err(|e| mesh_failure(p, e))?),
        None => None,
    };
    let mut rows = Vec::new();
    for path in &a.meshes {
        let mesh = load_mesh_file(path).map_err(|e| mesh_failure(path, e))?;
        rows.push(describe(path, &mesh, reference.as_ref())?);
    }
    println!(
        "{}",
        serde_json::to_string_pretty(&rows).expect("stats serialize")
    );
    Ok(())
}
