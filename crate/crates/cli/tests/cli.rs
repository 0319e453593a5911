use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use panoptic_core::geo::{
    encode_tiff, write_point_shapefile, write_world_file, BitDepth, GeoTransform, Raster,
    TiffOptions,
};

const SIDE: u32 = 640;

fn geotransform() -> GeoTransform {
    GeoTransform::new(190_000.0, 8_260_000.0, 0.25, -0.25).unwrap()
}

fn registry_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/bsb_registry.toml")
}

/// Stuff in vertical stripes of all three classes, a grid of square things and
/// a few void cells.
fn scene() -> (Raster, Raster, Raster) {
    let n = (SIDE * SIDE) as usize;
    let (mut sem, mut seq) = (vec![0u16; n], vec![0u16; n]);
    for y in 0..SIDE {
        for x in 0..SIDE {
            let i = (y * SIDE + x) as usize;
            let (cx, cy) = (x / 40, y / 40);
            if x % 40 >= 5 && x % 40 < 17 && y % 40 >= 5 && y % 40 < 17 {
                let k = cy * (SIDE / 40) + cx;
                seq[i] = k as u16 + 1;
                sem[i] = 4 + (k % 11) as u16;
            } else if (x / 30 + y / 30) % 7 != 0 {
                sem[i] = 1 + ((x / 30) % 3) as u16;
            }
        }
    }
    let rgb = sem
        .iter()
        .flat_map(|&l| [l * 15, 255 - l * 15, 100])
        .collect();
    (
        Raster::new(SIDE, SIDE, 3, BitDepth::Eight, rgb).unwrap(),
        Raster::new(SIDE, SIDE, 1, BitDepth::Eight, sem).unwrap(),
        Raster::new(SIDE, SIDE, 1, BitDepth::Sixteen, seq).unwrap(),
    )
}

fn point(col: u32, row: u32) -> (f64, f64) {
    geotransform().pixel_to_world(col as f64, row as f64)
}

/// Writes rasters, point files and `job.toml` into `dir`; returns the config path.
fn write_job(dir: &Path, valid: &[(u32, u32)], test: &[(u32, u32)]) -> PathBuf {
    let (img, sem, seq) = scene();
    for (name, r) in [
        ("ortho.tif", img),
        ("semantic.tif", sem),
        ("sequential.tif", seq),
    ] {
        std::fs::write(
            dir.join(name),
            encode_tiff(&r, &TiffOptions::default()).unwrap(),
        )
        .unwrap();
        write_world_file(&dir.join(name.replace(".tif", ".tfw")), &geotransform()).unwrap();
    }
    let train: Vec<(u32, u32)> = (0..10)
        .map(|i| (64 + (i % 4) * 128, 64 + (i / 4) * 128))
        .collect();
    for (name, pts) in [
        ("train.shp", &train[..]),
        ("valid.shp", valid),
        ("test.shp", test),
    ] {
        let world: Vec<(f64, f64)> = pts.iter().map(|&(c, r)| point(c, r)).collect();
        write_point_shapefile(&dir.join(name), &world).unwrap();
    }
    let cfg = format!(
        r#"original = "ortho.tif"
semantic = "semantic.tif"
sequential = "sequential.tif"
output = "dataset"
registry = "{}"
tile_size = 128

[points]
train = "train.shp"
valid = "valid.shp"
test = "test.shp"
"#,
        registry_path().display()
    );
    let path = dir.join("job.toml");
    std::fs::write(&path, cfg).unwrap();
    path
}

fn standard_job(dir: &Path) -> PathBuf {
    write_job(dir, &[(64, 448), (192, 448)], &[(320, 448), (448, 448)])
}

fn panoptic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_panoptic"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_stdout(out: &Output) -> String {
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Converts the standard job and returns the dataset root.
fn converted(dir: &Path) -> PathBuf {
    let cfg = standard_job(dir);
    ok_stdout(&panoptic(&["convert", "--config", s(&cfg)]));
    dir.join("dataset")
}

#[test]
fn convert_reports_tiles_per_set() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = standard_job(dir.path());
    let text = ok_stdout(&panoptic(&["convert", "--config", s(&cfg)]));
    let rows: Vec<Vec<&str>> = text
        .lines()
        .skip(2)
        .map(|l| l.split_whitespace().collect())
        .collect();
    assert_eq!(rows[0][..2], ["Training", "10"]);
    assert_eq!(rows[1][..2], ["Validation", "2"]);
    assert_eq!(rows[2][..2], ["Testing", "2"]);
    let folders = std::fs::read_dir(dir.path().join("dataset"))
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().is_dir())
        .count();
    assert_eq!(folders, 10);
}

#[test]
fn convert_json_summary_and_output_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = standard_job(dir.path());
    let out = dir.path().join("elsewhere");
    let text = ok_stdout(&panoptic(&[
        "convert",
        "-c",
        s(&cfg),
        "-o",
        s(&out),
        "--json",
        "-w",
        "2",
    ]));
    let v: serde_json::Value = serde_json::from_str(&text).unwrap();
    let tiles: u64 = v["sets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["tiles"].as_u64().unwrap())
        .sum();
    assert_eq!(tiles, 14);
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn convert_without_force_keeps_existing_output() {
    let dir = tempfile::tempdir().unwrap();
    let root = converted(dir.path());
    let cfg = dir.path().join("job.toml");
    assert_eq!(
        panoptic(&["convert", "--config", s(&cfg)]).status.code(),
        Some(2)
    );
    ok_stdout(&panoptic(&["convert", "--config", s(&cfg), "--force"]));
    assert!(root.join("manifest.json").is_file());
}

#[test]
fn misregistered_raster_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = standard_job(dir.path());
    std::fs::write(
        dir.path().join("sequential.tfw"),
        "0.5\n0\n0\n-0.5\n190000.25\n8259999.75\n",
    )
    .unwrap();
    let out = panoptic(&["convert", "--config", s(&cfg)]);
    assert_eq!(out.status.code(), Some(2));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn overlapping_test_tiles_fail_with_policy_code() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_job(dir.path(), &[(64, 448)], &[(100, 460)]);
    let out = panoptic(&["convert", "--config", s(&cfg), "--fail-on-overlap"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!dir.path().join("dataset/manifest.json").exists());

    // Without the flag the overlap is only reported.
    ok_stdout(&panoptic(&["convert", "--config", s(&cfg)]));
    let v = panoptic(&["validate", s(&dir.path().join("dataset"))]);
    assert_eq!(v.status.code(), Some(1));
}

#[test]
fn validate_detects_missing_png_and_wrong_area() {
    let dir = tempfile::tempdir().unwrap();
    let root = converted(dir.path());
    let text = ok_stdout(&panoptic(&["validate", s(&root)]));
    assert!(!text.is_empty());
    let json: serde_json::Value =
        serde_json::from_str(&ok_stdout(&panoptic(&["validate", s(&root), "--json"]))).unwrap();
    assert_eq!(json["violations"].as_array().unwrap().len(), 0);

    let doc_path = root.join("annotations/panoptic_valid.json");
    let mut doc: serde_json::Value =
        serde_json::from_slice(&std::fs::read(&doc_path).unwrap()).unwrap();
    let seg = &mut doc["annotations"][0]["segments_info"][0]["area"];
    *seg = (seg.as_u64().unwrap() + 3).into();
    std::fs::write(&doc_path, serde_json::to_vec(&doc).unwrap()).unwrap();
    assert_eq!(panoptic(&["validate", s(&root)]).status.code(), Some(1));

    let dir = tempfile::tempdir().unwrap();
    let root = converted(dir.path());
    std::fs::remove_file(root.join("semantic_train/train_000003.png")).unwrap();
    assert_eq!(panoptic(&["validate", s(&root)]).status.code(), Some(1));
}

fn summary_row<'a>(text: &'a str, first: &str) -> Vec<&'a str> {
    text.lines()
        .map(|l| l.split_whitespace().collect::<Vec<_>>())
        .find(|cells| cells.first() == Some(&first))
        .unwrap_or_else(|| panic!("no `{first}` row in\n{text}"))
}

#[test]
fn self_evaluation_prints_perfect_scores() {
    let dir = tempfile::tempdir().unwrap();
    let root = converted(dir.path());

    let pan = ok_stdout(&panoptic(&[
        "evaluate",
        "--task",
        "panoptic",
        "--gt",
        s(&root),
        "--pred",
        s(&root.join("annotations/panoptic_test.json")),
        "--pred-png-dir",
        s(&root.join("panoptic_test")),
        "--name",
        "R101",
    ]));
    assert_eq!(
        summary_row(&pan, "R101"),
        ["R101", "All", "100.000", "100.000", "100.000"]
    );
    assert_eq!(
        summary_row(&pan, "Things")[1..],
        ["100.000", "100.000", "100.000"]
    );
    assert_eq!(
        summary_row(&pan, "Stuff")[1..],
        ["100.000", "100.000", "100.000"]
    );

    let sem = ok_stdout(&panoptic(&[
        "evaluate",
        "--task",
        "semantic",
        "--gt",
        s(&root),
        "--pred",
        s(&root.join("semantic_test")),
    ]));
    assert_eq!(summary_row(&sem, "model")[1..], ["100.000"; 4]);

    let out_json = dir.path().join("report.json");
    let inst = ok_stdout(&panoptic(&[
        "evaluate",
        "--task",
        "instance",
        "--gt",
        s(&root),
        "--pred",
        s(&root.join("annotations/instances_test.json")),
        "--out",
        s(&out_json),
    ]));
    let boxes = summary_row(&inst, "model");
    assert_eq!(boxes[1..5], ["Box", "100.000", "100.000", "100.000"]);
    assert_eq!(summary_row(&inst, "Mask")[1..4], ["100.000"; 3]);
    let report: serde_json::Value =
        serde_json::from_slice(&std::fs::read(out_json).unwrap()).unwrap();
    assert_eq!(report["detection"]["box"]["ap"], 1.0);
}

#[test]
fn empty_prediction_list_scores_zero_ap() {
    let dir = tempfile::tempdir().unwrap();
    let root = converted(dir.path());
    let pred = dir.path().join("empty.json");
    std::fs::write(&pred, "[]").unwrap();
    let text = ok_stdout(&panoptic(&[
        "evaluate",
        "--task",
        "instance",
        "--gt",
        s(&root),
        "--pred",
        s(&pred),
        "--set",
        "valid",
    ]));
    assert_eq!(summary_row(&text, "model")[1..4], ["Box", "0.000", "0.000"]);
}

#[test]
fn merged_semantic_table_has_stuff_and_all_things() {
    let dir = tempfile::tempdir().unwrap();
    let root = converted(dir.path());
    let text = ok_stdout(&panoptic(&[
        "evaluate",
        "--task",
        "semantic",
        "--gt",
        s(&root),
        "--pred",
        s(&root.join("semantic_test")),
        "--merge-things",
    ]));
    let class_table: Vec<&str> = text
        .split("\n\n")
        .find(|t| t.starts_with("Category"))
        .unwrap()
        .lines()
        .skip(2)
        .collect();
    assert_eq!(class_table.len(), 4, "{text}");
    assert!(class_table[0].starts_with("All things"));
}

#[test]
fn malformed_prediction_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let root = converted(dir.path());
    let pred = dir.path().join("bad.json");
    std::fs::write(&pred, "{\"nope\": 1}").unwrap();
    let out = panoptic(&[
        "evaluate",
        "--task",
        "instance",
        "--gt",
        s(&root),
        "--pred",
        s(&pred),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stats_lists_every_category_and_set() {
    let dir = tempfile::tempdir().unwrap();
    let root = converted(dir.path());
    let text = ok_stdout(&panoptic(&["stats", s(&root)]));
    assert!(text.starts_with("Category"));
    assert_eq!(summary_row(&text, "Background")[1], "0");
    assert_eq!(summary_row(&text, "Street")[2], "Stuff");
    let v: serde_json::Value =
        serde_json::from_str(&ok_stdout(&panoptic(&["stats", s(&root), "--json"]))).unwrap();
    assert_eq!(v["categories"].as_array().unwrap().len(), 15);
    let images: Vec<u64> = v["sets"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["images"].as_u64().unwrap())
        .collect();
    assert_eq!(images, [10, 2, 2]);
}
