use std::path::Path;
use std::process::{Command, Output};

use skullface::xfml;

fn run(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_skullface"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn corpus(dir: &Path) {
    ok(dir, &["synth", "--out", "corpus", "--seed", "3", "--subjects", "10", "--distractors", "4"]);
}

#[test]
fn synth_folds_extract_train_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    corpus(dir);
    assert!(dir.join("corpus/manifest.json").is_file());

    let plan: serde_json::Value =
        serde_json::from_str(&ok(dir, &["folds", "--manifest", "corpus/manifest.json", "--seed", "1"])).unwrap();
    let folds = plan["folds"].as_array().unwrap();
    assert_eq!(folds.len(), 5);
    assert!(folds.iter().all(|f| f.as_array().unwrap().len() == 2));

    ok(dir, &["extract", "--manifest", "corpus/manifest.json", "--features", "hog", "--pca", "12", "--out", "f.xfml"]);
    let x = xfml::matrix_from_bytes(&std::fs::read(dir.join("f.xfml")).unwrap()).unwrap();
    assert_eq!(x.shape(), (12, 10 * 2 + 20 + 4));

    let train = ["train", "--manifest", "corpus/manifest.json", "--features", "f.xfml", "--seed", "2", "--tau", "4"];
    ok(dir, &[&train[..], &["--method", "sstl", "--out", "m.xfml"]].concat());
    let model = xfml::coupled_from_bytes(&std::fs::read(dir.join("m.xfml")).unwrap()).unwrap();
    assert_eq!(model.dim(), 12);
    assert_eq!(model.params.tau, 4);

    ok(dir, &[&train[..], &["--method", "dl", "--dl-atoms", "6", "--dl-sparsity", "2", "--out", "d.xfml"]].concat());
    let dict = xfml::dictionary_from_bytes(&std::fs::read(dir.join("d.xfml")).unwrap()).unwrap();
    assert_eq!((dict.dim(), dict.n_atoms()), (12, 6));
}

#[test]
fn eval_writes_reports_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    corpus(dir);
    let eval = |out: &str| {
        ok(dir, &["eval", "--manifest", "corpus/manifest.json", "--seed", "5", "--methods", "hog,pixels", "--out", out]);
    };
    eval("a");
    eval("b");
    for method in ["hog", "pixels"] {
        let a = std::fs::read(dir.join("a").join(method).join("results.json")).unwrap();
        let b = std::fs::read(dir.join("b").join(method).join("results.json")).unwrap();
        assert_eq!(a, b);
        for file in ["cmc.csv", "scores.csv", "runconfig.json"] {
            assert!(dir.join("a").join(method).join(file).is_file());
        }
    }
    // 2 identities per fold: header plus two ranks
    let cmc = std::fs::read_to_string(dir.join("a/hog/cmc.csv")).unwrap();
    assert_eq!(cmc.lines().count(), 3);
    assert!(cmc.starts_with("rank,fold_1,fold_2,fold_3,fold_4,fold_5,mean"));

    let summary = ok(dir, &["report", "a"]);
    assert!(summary.contains("hog") && summary.contains("pixels"));
}

#[test]
fn exit_codes_follow_error_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path();
    corpus(dir);
    assert_eq!(run(dir, &["folds", "--manifest", "corpus/manifest.json"]).status.code(), Some(2));
    assert_eq!(run(dir, &["synth", "--out", "x"]).status.code(), Some(2));
    let bad_method = ["eval", "--manifest", "corpus/manifest.json", "--methods", "nope", "--out", "r"];
    assert_eq!(run(dir, &bad_method).status.code(), Some(2));
    assert_eq!(run(dir, &["folds", "--manifest", "missing.json", "--seed", "1"]).status.code(), Some(3));

    // P2 needs extended-gallery records
    ok(dir, &["synth", "--out", "plain", "--seed", "4", "--subjects", "5"]);
    let p2 = ["folds", "--manifest", "plain/manifest.json", "--seed", "1", "--protocol", "P2"];
    assert_eq!(run(dir, &p2).status.code(), Some(3));
}
