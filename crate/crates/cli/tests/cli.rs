use std::path::Path;
use std::process::{Command, Output};

use facefill::mesh::{
    boundary_loops, connected_components, is_watertight, load_mesh_file, save_mesh_file, Mesh,
};
use facefill::scargen::{icosphere, synth_head, DatasetManifest, Split};

fn facefill(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_facefill"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = facefill(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str]) -> i32 {
    facefill(args).status.code().unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn gen(dir: &Path, extra: &[&str]) {
    let mut args = vec!["gen-data", "--out", s(dir), "--subdivisions", "2"];
    args.extend_from_slice(extra);
    ok(&args);
}

#[test]
fn gen_data_counts_and_reproducibility() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let flags = ["--count", "10", "--scars", "10", "--seed", "7"];
    gen(&a, &flags);
    gen(&b, &flags);
    let files = std::fs::read_dir(&a).unwrap().count();
    assert_eq!(files, 111);
    let bytes = std::fs::read(a.join("manifest.json")).unwrap();
    assert_eq!(bytes, std::fs::read(b.join("manifest.json")).unwrap());
    let m: DatasetManifest = serde_json::from_slice(&bytes).unwrap();
    assert_eq!(m.entries.len(), 100);
}

#[test]
fn ratios_split_heads() {
    let tmp = tempfile::tempdir().unwrap();
    gen(
        tmp.path(),
        &[
            "--count", "10", "--scars", "1", "--ratios", "0.8", "0.1", "0.1",
        ],
    );
    let m = DatasetManifest::load(tmp.path().join("manifest.json")).unwrap();
    let heads = |split| m.entries_in(split).count();
    assert_eq!(
        [heads(Split::Train), heads(Split::Val), heads(Split::Test)],
        [8, 1, 1]
    );
}

#[test]
fn config_file_and_flag_precedence() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("run.json");
    std::fs::write(
        &config,
        r#"{"dataset":{"count":3,"scars_per_mesh":2,"subdivisions":1}}"#,
    )
    .unwrap();
    let out = tmp.path().join("d");
    ok(&[
        "--config",
        s(&config),
        "gen-data",
        "--out",
        s(&out),
        "--scars",
        "1",
    ]);
    let m = DatasetManifest::load(out.join("manifest.json")).unwrap();
    assert_eq!(m.config.count, 3);
    assert_eq!(m.config.scars_per_mesh, 1);
    assert_eq!(m.entries.len(), 3);
}

#[test]
fn usage_and_config_errors_exit_1() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(code(&["no-such-command"]), 1);
    assert_eq!(code(&["gen-data"]), 1);
    let config = tmp.path().join("bad.json");
    std::fs::write(&config, r#"{"training":{"learning_rate":1}}"#).unwrap();
    assert_eq!(code(&["--config", s(&config), "gen-data", "--out", "x"]), 1);
    let out = tmp.path().join("d");
    assert_eq!(
        code(&[
            "gen-data",
            "--out",
            s(&out),
            "--ratios",
            "0.5",
            "0.5",
            "0.5"
        ]),
        1
    );
    assert_eq!(code(&["--help"]), 0);
}

#[test]
fn missing_data_exits_2() {
    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("none.json");
    let ckpt = tmp.path().join("m.ckpt");
    assert_eq!(
        code(&["train", "--manifest", s(&missing), "--out", s(&ckpt)]),
        2
    );
}

#[test]
fn train_eval_round_trip_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let data = tmp.path().join("d");
    gen(&data, &["--count", "10", "--scars", "1", "--seed", "3"]);
    let manifest = data.join("manifest.json");
    let run = |tag: &str| {
        let ckpt = tmp.path().join(format!("{tag}.ckpt"));
        let ev = tmp.path().join(format!("{tag}_eval"));
        ok(&[
            "--threads",
            "2",
            "train",
            "--manifest",
            s(&manifest),
            "--out",
            s(&ckpt),
            "--level-ratios",
            "1",
            "0.25",
            "--widths",
            "3",
            "8",
            "--max-steps",
            "10",
            "--batch-size",
            "4",
            "--seed",
            "1",
        ]);
        ok(&[
            "eval",
            "--manifest",
            s(&manifest),
            "--checkpoint",
            s(&ckpt),
            "--split",
            "test",
            "--out",
            s(&ev),
        ]);
        (
            std::fs::read(&ckpt).unwrap(),
            std::fs::read(ev.join("report.json")).unwrap(),
        )
    };
    let (a, b) = (run("a"), run("b"));
    assert_eq!(a, b);
    let metrics = std::fs::read_to_string(tmp.path().join("metrics.csv")).unwrap();
    assert!(metrics.starts_with("epoch,split,loss\n"));
    let report: serde_json::Value = serde_json::from_slice(&a.1).unwrap();
    assert_eq!(report["split"], "test");
    let error_meshes = std::fs::read_dir(tmp.path().join("a_eval"))
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .file_name()
                .to_string_lossy()
                .ends_with("_error.ply")
        })
        .count();
    assert_eq!(error_meshes, 1);
}

#[test]
fn identity_eval_on_unwounded_data_is_zero() {
    let tmp = tempfile::tempdir().unwrap();
    gen(
        tmp.path(),
        &["--count", "2", "--scars", "1", "--ratios", "1", "0", "0"],
    );
    // point every wounded entry at its own ground truth
    let path = tmp.path().join("manifest.json");
    let mut m = DatasetManifest::load(&path).unwrap();
    for e in &mut m.entries {
        e.wounded = e.ground_truth.clone();
    }
    std::fs::write(&path, m.to_json_bytes()).unwrap();
    let out = tmp.path().join("eval");
    ok(&[
        "eval",
        "--manifest",
        s(&path),
        "--identity",
        "--split",
        "train",
        "--out",
        s(&out),
    ]);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    for row in report["statistics"].as_array().unwrap() {
        assert_eq!(row["value"].as_f64(), Some(0.0), "{row}");
    }
}

#[test]
fn extract_fill_outputs_and_no_filling_code() {
    let tmp = tempfile::tempdir().unwrap();
    gen(
        tmp.path(),
        &[
            "--count", "1", "--scars", "1", "--ratios", "1", "0", "0", "--radius", "2", "3",
        ],
    );
    let wounded = tmp.path().join("0000_00.ply");
    let truth = tmp.path().join("0000_gt.ply");
    let out = tmp.path().join("fill");
    let stdout = ok(&[
        "extract-fill",
        "--input",
        s(&wounded),
        "--output",
        s(&truth),
        "--out",
        s(&out),
    ]);
    assert!(stdout.contains("watertight  true"), "{stdout}");
    let stl = std::fs::read(out.join("filling.stl")).unwrap();
    let faces = u32::from_le_bytes(stl[80..84].try_into().unwrap()) as usize;
    assert_eq!(stl.len(), 84 + 50 * faces);
    assert!(is_watertight(
        &load_mesh_file(out.join("filling.ply")).unwrap()
    ));
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out.join("fill_report.json")).unwrap()).unwrap();
    assert!(report["diagnostics"]["outlier_count"].as_u64().unwrap() > 0);

    let same = facefill(&["extract-fill", "--input", s(&truth), "--output", s(&truth)]);
    assert_eq!(same.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&same.stderr).contains("no filling detected"));
}

fn merge(parts: &[Mesh]) -> Mesh {
    let mut positions = Vec::new();
    let mut faces = Vec::new();
    for m in parts {
        let base = positions.len();
        positions.extend_from_slice(m.positions());
        faces.extend(m.faces().iter().map(|f| f.map(|v| v + base)));
    }
    Mesh::new(positions, faces).unwrap()
}

fn shifted(m: &Mesh, scale: f64, offset: [f64; 3]) -> Mesh {
    let p = m
        .positions()
        .iter()
        .map(|v| [0, 1, 2].map(|c| v[c] * scale + offset[c]))
        .collect();
    m.with_positions(p).unwrap()
}

#[test]
fn preprocess_cases() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("clean");

    let closed = tmp.path().join("closed.ply");
    save_mesh_file(&synth_head(1, 2), &closed).unwrap();
    let stdout = ok(&["preprocess", s(&closed), "--out", s(&out)]);
    assert!(stdout.contains("no-op"));
    assert_eq!(
        std::fs::read(&closed).unwrap(),
        std::fs::read(out.join("closed.ply")).unwrap()
    );

    let eye = icosphere(1);
    let with_eyes = merge(&[
        synth_head(2, 2),
        shifted(&eye, 0.1, [0.3, 0.3, 0.9]),
        shifted(&eye, 0.1, [-0.3, 0.3, 0.9]),
    ]);
    let eyes = tmp.path().join("eyes.obj");
    save_mesh_file(&with_eyes, &eyes).unwrap();
    ok(&["preprocess", s(&eyes), "--out", s(&out)]);
    let cleaned = load_mesh_file(out.join("eyes.obj")).unwrap();
    assert_eq!(connected_components(&cleaned).1, 1);
    assert_eq!(cleaned.vertex_count(), 162);

    let head = synth_head(3, 2);
    let far = head.face_count() / 2;
    let kept: Vec<_> = (0..head.face_count())
        .filter(|&f| f != 0 && f != far)
        .map(|f| head.faces()[f])
        .collect();
    let holed_mesh = Mesh::new(head.positions().to_vec(), kept).unwrap();
    assert_eq!(boundary_loops(&holed_mesh).unwrap().len(), 2);
    let holed = tmp.path().join("holed.ply");
    save_mesh_file(&holed_mesh, &holed).unwrap();
    ok(&["preprocess", s(&holed), "--out", s(&out)]);
    let filled = load_mesh_file(out.join("holed.ply")).unwrap();
    assert!(is_watertight(&filled));
    assert!(boundary_loops(&filled).unwrap().is_empty());
}

#[test]
fn stats_reports_topology() {
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.ply");
    save_mesh_file(&icosphere(1), &a).unwrap();
    let stdout = ok(&["stats", s(&a), "--against", s(&a)]);
    let rows: serde_json::Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(rows[0]["vertices"], 42);
    assert_eq!(rows[0]["euler_characteristic"], 2);
    assert_eq!(rows[0]["watertight"], true);
    assert_eq!(rows[0]["distance"]["max"], 0.0);
}

#[test]
fn divergence_exits_3() {
    let tmp = tempfile::tempdir().unwrap();
    gen(tmp.path(), &["--count", "4", "--scars", "1"]);
    let manifest = tmp.path().join("manifest.json");
    let ckpt = tmp.path().join("m.ckpt");
    let out = facefill(&[
        "train",
        "--manifest",
        s(&manifest),
        "--out",
        s(&ckpt),
        "--level-ratios",
        "1",
        "0.25",
        "--widths",
        "3",
        "8",
        "--max-steps",
        "30",
        "--lr",
        "1e250",
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(!ckpt.exists());
}
