use std::collections::BTreeMap;
use std::ffi::{CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use feet::embedding_io::{load_embedding_set, save_embedding_set, EmbeddingRecord, EmbeddingSet};
use feet::sampling::derive_cell_seed;
use feet::Regime;
use feet_ffi::*;

fn c(s: &str) -> CString {
    CString::new(s).unwrap()
}

fn cpath(p: &Path) -> CString {
    c(p.to_str().unwrap())
}

fn last_error() -> String {
    let p = feet_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn sample_set() -> EmbeddingSet {
    EmbeddingSet {
        model_id: "org/m".into(),
        task_id: "t".into(),
        regime: Regime::Frozen,
        shot: None,
        dim: 3,
        num_classes: 2,
        metadata: BTreeMap::new(),
        records: (0..6)
            .map(|i| EmbeddingRecord {
                id: format!("r{i}"),
                label: i % 2,
                vector: vec![i as f32, -0.5, f32::MIN_POSITIVE],
            })
            .collect(),
    }
}

#[test]
fn rank_metrics_and_errors() {
    let scores = [0.1, 0.4, 0.35, 0.8];
    let labels = [0u8, 0, 1, 2];
    let mut out = 0.0;
    let st = unsafe { feet_auroc(scores.as_ptr(), labels.as_ptr(), 4, &mut out) };
    assert_eq!(st, FeetStatus::Ok);
    assert!((out - 0.75).abs() < 1e-12);
    let st = unsafe { feet_auprc(scores.as_ptr(), labels.as_ptr(), 4, &mut out) };
    assert_eq!(st, FeetStatus::Ok);
    assert!((out - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-12);

    let st = unsafe { feet_auroc(ptr::null(), labels.as_ptr(), 4, &mut out) };
    assert_eq!(st, FeetStatus::NullArgument);
    assert!(last_error().contains("scores"));

    let all_pos = [1u8; 4];
    let st = unsafe { feet_auroc(scores.as_ptr(), all_pos.as_ptr(), 4, &mut out) };
    assert_eq!(st, FeetStatus::Undefined);
}

#[test]
fn embedding_handle_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("a.feet.jsonl");
    save_embedding_set(&sample_set(), &src).unwrap();

    let mut set = ptr::null_mut();
    assert_eq!(unsafe { feet_embedding_set_load(cpath(&src).as_ptr(), &mut set) }, FeetStatus::Ok);
    unsafe {
        assert_eq!(feet_embedding_set_count(set), 6);
        assert_eq!(feet_embedding_set_dim(set), 3);
        assert_eq!(feet_embedding_set_num_classes(set), 2);

        let mut buf = [0f32; 3];
        let mut label = 0;
        assert_eq!(feet_embedding_set_record(set, 3, buf.as_mut_ptr(), 3, &mut label), FeetStatus::Ok);
        assert_eq!((buf, label), ([3.0, -0.5, f32::MIN_POSITIVE], 1));
        assert_eq!(
            feet_embedding_set_record(set, 3, buf.as_mut_ptr(), 2, &mut label),
            FeetStatus::BufferTooSmall
        );
        assert_eq!(
            feet_embedding_set_record(set, 6, buf.as_mut_ptr(), 3, &mut label),
            FeetStatus::IndexOutOfRange
        );

        let bin = dir.path().join("a.feet.bin");
        assert_eq!(feet_embedding_set_save(set, cpath(&bin).as_ptr()), FeetStatus::Ok);
        feet_embedding_set_free(set);
        assert_eq!(load_embedding_set(&bin).unwrap(), sample_set());

        assert_eq!(feet_embedding_set_count(ptr::null()), 0);
        feet_embedding_set_free(ptr::null_mut());
    }

    let bad = dir.path().join("bad.feet.jsonl");
    std::fs::write(&bad, "not json\n").unwrap();
    let mut set = ptr::null_mut();
    assert_eq!(unsafe { feet_embedding_set_load(cpath(&bad).as_ptr(), &mut set) }, FeetStatus::Format);
    assert!(set.is_null());
    let missing = dir.path().join("missing.feet.bin");
    assert_eq!(unsafe { feet_embedding_set_load(cpath(&missing).as_ptr(), &mut set) }, FeetStatus::Io);
    assert!(last_error().contains("missing.feet.bin"));
}

#[test]
fn predictions_and_bootstrap() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("p.jsonl");
    let text: String = (0..50)
        .map(|i| {
            let y = i % 2;
            let p = if y == 1 { 0.6 + (i % 7) as f64 * 0.05 } else { 0.2 + (i % 5) as f64 * 0.1 };
            format!("{{\"id\":\"q{i}\",\"label\":{y},\"scores\":[{},{p}]}}\n", 1.0 - p)
        })
        .collect();
    std::fs::write(&path, text).unwrap();

    let mut preds = ptr::null_mut();
    assert_eq!(unsafe { feet_predictions_load(cpath(&path).as_ptr(), &mut preds) }, FeetStatus::Ok);
    assert_eq!(unsafe { feet_predictions_len(preds) }, 50);

    let mut est = FeetEstimate {
        point: 0.0,
        ci_low: 0.0,
        ci_high: 0.0,
        half_width: 0.0,
        n: 0,
        replicates: 0,
        dropped: 0,
    };
    let metric = c("auroc");
    let st = unsafe { feet_bootstrap_ci(preds, metric.as_ptr(), FeetAveraging::Macro, 1, 300, 9, &mut est) };
    assert_eq!(st, FeetStatus::Ok);
    assert_eq!((est.n, est.replicates), (50, 300));
    assert!(est.ci_low <= est.point && est.point <= est.ci_high);
    assert!((est.half_width - (est.ci_high - est.ci_low) / 2.0).abs() < 1e-15);

    let mut again = est;
    unsafe { feet_bootstrap_ci(preds, metric.as_ptr(), FeetAveraging::Macro, 1, 300, 9, &mut again) };
    assert_eq!(again, est);

    let bogus = c("bogus");
    let st = unsafe { feet_bootstrap_ci(preds, bogus.as_ptr(), FeetAveraging::Macro, 1, 300, 9, &mut est) };
    assert_eq!(st, FeetStatus::InvalidArgument);
    assert!(last_error().contains("bogus"));
    unsafe { feet_predictions_free(preds) };
}

#[test]
fn seeds_match_the_library() {
    let key = c("org/m|t|fewshot|8|0");
    let mut seed = 0;
    assert_eq!(unsafe { feet_derive_cell_seed(42, key.as_ptr(), &mut seed) }, FeetStatus::Ok);
    assert_eq!(seed, derive_cell_seed(42, "org/m|t|fewshot|8|0"));

    let bad = [0xffu8, 0];
    let st = unsafe { feet_derive_cell_seed(42, bad.as_ptr().cast(), &mut seed) };
    assert_eq!(st, FeetStatus::InvalidUtf8);
}

#[test]
fn validate_and_run_a_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let manifest = feet::synthetic::write_bundled(&data, 3).unwrap();

    let mut errors = 99;
    assert_eq!(unsafe { feet_validate_manifest(cpath(&manifest).as_ptr(), &mut errors) }, FeetStatus::Ok);
    assert_eq!(errors, 0);

    let out = dir.path().join("run");
    assert_eq!(unsafe { feet_run(cpath(&manifest).as_ptr(), cpath(&out).as_ptr(), 2, false) }, FeetStatus::Ok);
    assert!(out.join("results.json").exists());
    assert_eq!(
        unsafe { feet_run(cpath(&manifest).as_ptr(), cpath(&out).as_ptr(), 1, false) },
        FeetStatus::RunDirectory
    );
    assert_eq!(unsafe { feet_run(cpath(&manifest).as_ptr(), cpath(&out).as_ptr(), 1, true) }, FeetStatus::Ok);

    std::fs::remove_file(data.join("alpha.frozen.feet.jsonl")).unwrap();
    assert_eq!(
        unsafe { feet_validate_manifest(cpath(&manifest).as_ptr(), &mut errors) },
        FeetStatus::Manifest
    );
    assert!(errors >= 1);
    assert!(last_error().contains("alpha.frozen.feet.jsonl"));
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(feet_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

fn artifact_dir() -> PathBuf {
    // target/<profile>/deps/<test binary>
    std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let manifest_dir = Path::new(env!("CARGO_MANIFEST_DIR"));
    let header = manifest_dir.join("include/feet.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["feet_run", "feet_last_error", "FEET_STATUS_OK", "typedef struct FeetEmbeddingSet FeetEmbeddingSet"] {
        assert!(text.contains(name), "header lacks {name}");
    }

    let lib = artifact_dir().join("libfeet_ffi.a");
    if Command::new("cc").arg("--version").output().is_err() || !lib.exists() {
        eprintln!("skipping C link check: no cc or {} missing", lib.display());
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let exe = dir.path().join("smoke");
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-Werror")
        .arg("-I")
        .arg(manifest_dir.join("include"))
        .arg(manifest_dir.join("tests/smoke.c"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C smoke test failed to build");

    let src = dir.path().join("in.feet.jsonl");
    save_embedding_set(&sample_set(), &src).unwrap();
    let copy = dir.path().join("copy.feet.bin");
    let out = Command::new(&exe).arg(&src).arg(&copy).output().unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let line = String::from_utf8(out.stdout).unwrap();
    let expected = format!("{} {}\n", env!("CARGO_PKG_VERSION"), derive_cell_seed(7, "m|t|frozen||0"));
    assert_eq!(line, expected);
    assert_eq!(load_embedding_set(&copy).unwrap(), sample_set());
}
