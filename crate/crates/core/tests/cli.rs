use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use mbpool::io::{load_feature_store, FeatureStore};
use mbpool::pooling::{build_image_representation, FeatureVector, PoolMode};
use mbpool::proposals::{greedy_nms, select_top_k, ScoredBox};

fn mbpool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mbpool"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = mbpool(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn synth(dir: &Path, extra: &[&str]) {
    let mut args = vec![
        "synth",
        "--out",
        p(dir),
        "--images",
        "48",
        "--concepts",
        "4",
        "--vocab",
        "16",
        "--proposals",
        "30",
    ];
    args.extend_from_slice(extra);
    ok(&args);
}

/// Pooling computed from the library primitives, box by box.
fn expected_pool(
    store: &FeatureStore,
    beta: f64,
    k: usize,
    mode: PoolMode,
) -> Vec<(String, FeatureVector)> {
    store
        .iter()
        .map(|(id, f)| {
            let boxes: Vec<ScoredBox> = f.proposals.iter().map(|(b, _)| *b).collect();
            let chosen = select_top_k(&greedy_nms(&boxes, beta).unwrap(), k);
            let feats: Vec<FeatureVector> = chosen
                .iter()
                .map(|c| {
                    let i = boxes.iter().position(|b| b == c).unwrap();
                    f.proposals[i].1.clone()
                })
                .collect();
            (
                id.to_string(),
                build_image_representation(&f.global, &feats, mode).unwrap(),
            )
        })
        .collect()
}

#[test]
fn pool_matches_primitive_chain() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let raw = load_feature_store(dir.path().join("features.txt")).unwrap();
    for (beta, k, mode) in [
        ("0.75", "100", PoolMode::Mean),
        ("0.3", "5", PoolMode::Max),
        ("1.0", "10", PoolMode::Mean),
    ] {
        let out = dir.path().join("pooled.txt");
        ok(&[
            "pool",
            "--features",
            p(&dir.path().join("features.txt")),
            "--out",
            p(&out),
            "--nms",
            beta,
            "--top-k",
            k,
            "--mode",
            &mode.to_string(),
        ]);
        let pooled = load_feature_store(&out).unwrap();
        assert!(pooled.is_pooled());
        let expected = expected_pool(&raw, beta.parse().unwrap(), k.parse().unwrap(), mode);
        assert_eq!(pooled.len(), expected.len());
        for (id, v) in expected {
            assert_eq!(pooled.get(&id).unwrap().global, v, "image {id}");
        }
    }
}

#[test]
fn top_k_zero_keeps_global_vectors() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path(), &[]);
    let out = dir.path().join("pooled.txt");
    ok(&[
        "pool",
        "--features",
        p(&dir.path().join("features.txt")),
        "--out",
        p(&out),
        "--top-k",
        "0",
    ]);
    let raw = load_feature_store(dir.path().join("features.txt")).unwrap();
    let pooled = load_feature_store(&out).unwrap();
    for (id, f) in raw.iter() {
        assert_eq!(pooled.get(id).unwrap().global, f.global);
    }
}

#[test]
fn pool_fixture_file() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("f.txt");
    fs::write(
        &input,
        "3 1\nimg\n1 2 3\n2\n0 0 10 10 0.9 4 5 6\n1 1 10 10 0.8 7 8 9\n",
    )
    .unwrap();
    let out = dir.path().join("p.txt");
    ok(&[
        "pool",
        "--features",
        p(&input),
        "--out",
        p(&out),
        "--nms",
        "0.75",
        "--top-k",
        "100",
        "--mode",
        "mean",
    ]);
    let pooled = load_feature_store(&out).unwrap();
    // iou of the two boxes is 81/119, below 0.75, so both survive
    assert_eq!(
        pooled.get("img").unwrap().global.as_slice(),
        &[4.0, 5.0, 6.0]
    );
}

#[test]
fn full_pipeline_runs() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    synth(d, &["--categories", "2"]);
    let at = |name: &str| d.join(name).to_str().unwrap().to_string();
    ok(&[
        "pool",
        "--features",
        &at("features.txt"),
        "--out",
        &at("pooled.txt"),
    ]);
    let with_data = |head: &[&str]| -> String {
        let mut args: Vec<String> = head.iter().map(|s| s.to_string()).collect();
        for (flag, file) in [
            ("--manifest", "manifest.jsonl"),
            ("--features", "pooled.txt"),
            ("--words", "words.txt"),
        ] {
            args.push(flag.into());
            args.push(at(file));
        }
        ok(&args.iter().map(String::as_str).collect::<Vec<_>>())
    };

    with_data(&["cca-fit", "--out", &at("cca")]);
    assert!(d.join("cca/scenes.ncca").exists() && d.join("cca/emotion.ncca").exists());
    let table = with_data(&[
        "cca-eval",
        "--models",
        &at("cca"),
        "--out",
        &at("cca.jsonl"),
    ]);
    assert!(
        table.contains("Image's scenes")
            && table.contains("Image's emotion")
            && table.contains("Average")
    );

    with_data(&[
        "lstm-train",
        "--out",
        &at("lstm"),
        "--epochs",
        "2",
        "--dh",
        "8",
        "--dt",
        "4",
        "--dv",
        "4",
    ]);
    let log = fs::read_to_string(d.join("lstm/scenes.loss.jsonl")).unwrap();
    assert_eq!(log.lines().count(), 2);
    with_data(&[
        "lstm-eval",
        "--models",
        &at("lstm"),
        "--out",
        &at("lstm.jsonl"),
    ]);

    let rendered = ok(&["report", "--input", &at("cca.jsonl")]);
    assert_eq!(rendered, table);
}

#[test]
fn unknown_command_prints_usage() {
    let out = mbpool(&["frobnicate"]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.starts_with("error[usage]: "));
    assert!(err.contains("Usage:"));
}

#[test]
fn data_errors_exit_two_with_one_line() {
    let dir = tempfile::tempdir().unwrap();
    let missing = mbpool(&["report", "--input", p(&dir.path().join("nope.jsonl"))]);
    assert_eq!(missing.status.code(), Some(2));
    let err = String::from_utf8(missing.stderr).unwrap();
    assert_eq!(err.lines().count(), 1);
    assert!(err.starts_with("error[io]: "));

    // cca-fit needs a pooled store
    synth(dir.path(), &[]);
    let d = dir.path();
    let out = mbpool(&[
        "cca-fit",
        "--manifest",
        p(&d.join("manifest.jsonl")),
        "--features",
        p(&d.join("features.txt")),
        "--words",
        p(&d.join("words.txt")),
        "--out",
        p(&d.join("m")),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error[data]: "));

    let bad = d.join("bad.txt");
    fs::write(&bad, "2 1\nimg\n1 2\n1\n0 0 1 1 0.5 1 x\n").unwrap();
    let out = mbpool(&["pool", "--features", p(&bad), "--out", p(&d.join("o.txt"))]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.starts_with("error[parse]: ") && err.contains("line 5"),
        "{err}"
    );

    fs::write(&bad, "2 1\nimg\n1 2\n1\n0 0 1 1 0.5 1\n").unwrap();
    let out = mbpool(&["pool", "--features", p(&bad), "--out", p(&d.join("o.txt"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8(out.stderr)
        .unwrap()
        .starts_with("error[shape]: "));
}
