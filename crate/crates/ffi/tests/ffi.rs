use std::ffi::{CStr, CString};
use std::path::Path;
use std::ptr;

use zoomnet::corpus::{read_corpus, Vocab};
use zoomnet::model::{ModelConfig, TrainingProgress, ZoomNet};
use zoomnet_ffi::*;

fn c(p: &Path) -> CString {
    CString::new(p.to_str().unwrap()).unwrap()
}

fn last_error() -> String {
    unsafe { CStr::from_ptr(zn_last_error_message()) }.to_str().unwrap().to_string()
}

/// Generates a corpus through the C ABI and saves a small untrained model.
fn fixture(dir: &Path) -> (std::path::PathBuf, std::path::PathBuf) {
    let corpus = dir.join("c.jsonl");
    assert_eq!(unsafe { zn_generate_corpus(0, 4, 9, c(&corpus).as_ptr()) }, ZnStatus::Ok);
    let docs = read_corpus(&corpus).unwrap();
    assert_eq!(docs.len(), 4);
    let cfg = ModelConfig {
        embed_dim: 4,
        word_hidden: 3,
        sentence_hidden: 3,
        controller_hidden: 5,
        ..ModelConfig::default()
    };
    let model = ZoomNet::new(cfg, Vocab::build(&docs), 1);
    let ckpt = dir.join("m.ckpt");
    model.save(&ckpt, &serde_json::Value::Null, TrainingProgress::default(), None).unwrap();
    (corpus, ckpt)
}

#[test]
fn load_label_and_free() {
    let dir = tempfile::tempdir().unwrap();
    let (corpus, ckpt) = fixture(dir.path());
    let mut model = ptr::null_mut();
    assert_eq!(unsafe { zn_model_load(c(&ckpt).as_ptr(), &mut model) }, ZnStatus::Ok);
    assert!(!model.is_null());
    assert_eq!(last_error(), "");

    let (mut total, mut enc, mut ctl) = (0usize, 0usize, 0usize);
    assert_eq!(unsafe { zn_model_param_count(model, &mut total, &mut enc, &mut ctl) }, ZnStatus::Ok);
    assert!(enc > 0 && ctl > 0);
    assert_eq!(enc + ctl, total);
    assert_eq!(unsafe { zn_model_param_count(model, &mut total, ptr::null_mut(), ptr::null_mut()) }, ZnStatus::Ok);

    let line = std::fs::read_to_string(&corpus).unwrap().lines().next().unwrap().to_string();
    let n = serde_json::from_str::<serde_json::Value>(&line).unwrap()["tokens"].as_array().unwrap().len();
    let mut out = ptr::null_mut();
    let doc = CString::new(line).unwrap();
    assert_eq!(unsafe { zn_model_label_json(model, doc.as_ptr(), &mut out) }, ZnStatus::Ok);
    let json: serde_json::Value = serde_json::from_str(unsafe { CStr::from_ptr(out) }.to_str().unwrap()).unwrap();
    unsafe { zn_string_free(out) };
    assert_eq!(json["labels"].as_array().unwrap().len(), n);
    let counts = &json["counts"];
    let actions = counts["N_aw"].as_u64().unwrap() + counts["N_as"].as_u64().unwrap() + counts["N_ap"].as_u64().unwrap();
    assert_eq!(json["trace"]["steps"].as_array().unwrap().len() as u64, actions);

    let bad = CString::new("{not json").unwrap();
    let mut out = ptr::null_mut();
    assert_eq!(unsafe { zn_model_label_json(model, bad.as_ptr(), &mut out) }, ZnStatus::Parse);
    assert!(out.is_null());
    assert!(!last_error().is_empty());

    unsafe { zn_model_free(model) };
    unsafe { zn_model_free(ptr::null_mut()) };
    unsafe { zn_string_free(ptr::null_mut()) };
}

#[test]
fn errors_are_reported() {
    let dir = tempfile::tempdir().unwrap();
    let mut model = ptr::null_mut();
    let missing = c(&dir.path().join("absent.ckpt"));
    assert_eq!(unsafe { zn_model_load(missing.as_ptr(), &mut model) }, ZnStatus::Model);
    assert!(model.is_null());
    assert!(last_error().contains("absent.ckpt"));

    assert_eq!(unsafe { zn_model_load(ptr::null(), &mut model) }, ZnStatus::NullArgument);
    assert_eq!(unsafe { zn_model_load(missing.as_ptr(), ptr::null_mut()) }, ZnStatus::NullArgument);
    let mut total = 0;
    assert_eq!(
        unsafe { zn_model_param_count(ptr::null(), &mut total, ptr::null_mut(), ptr::null_mut()) },
        ZnStatus::NullArgument
    );
    let path = c(&dir.path().join("x.jsonl"));
    assert_eq!(unsafe { zn_generate_corpus(7, 1, 0, path.as_ptr()) }, ZnStatus::InvalidArgument);
    let unwritable = c(&dir.path().join("no/such/dir/x.jsonl"));
    assert_eq!(unsafe { zn_generate_corpus(1, 1, 0, unwritable.as_ptr()) }, ZnStatus::Io);

    let invalid = [0xffu8, 0];
    assert_eq!(
        unsafe { zn_model_load(invalid.as_ptr().cast(), &mut model) },
        ZnStatus::InvalidUtf8
    );
}

#[test]
fn action_index_and_version() {
    assert_eq!(zn_action_index(0, 0), 0);
    assert_eq!(zn_action_index(1, 0), 3);
    assert_eq!(zn_action_index(2, 2), 8);
    assert_eq!(zn_action_index(3, 0), -1);
    assert_eq!(zn_action_index(0, 3), -1);
    let v = unsafe { CStr::from_ptr(zn_version()) }.to_str().unwrap();
    assert_eq!(v, env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("include/zoomnet.h")).unwrap();
    for name in [
        "zn_version",
        "zn_last_error_message",
        "zn_action_index",
        "zn_model_load",
        "zn_model_free",
        "zn_model_param_count",
        "zn_model_label_json",
        "zn_string_free",
        "zn_generate_corpus",
        "typedef struct ZnModel ZnModel;",
        "ZN_STATUS_OK = 0",
    ] {
        assert!(header.contains(name), "{name} missing from header");
    }
}

#[test]
fn header_compiles_as_c_and_cpp() {
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include/zoomnet.h");
    for (compiler, lang) in [("cc", "c"), ("c++", "c++")] {
        let Ok(out) = std::process::Command::new(compiler)
            .args(["-fsyntax-only", "-Wall", "-Werror", "-x", lang])
            .arg(&include)
            .output()
        else {
            eprintln!("{compiler} not found; skipping");
            continue;
        };
        assert!(out.status.success(), "{compiler}: {}", String::from_utf8_lossy(&out.stderr));
    }
}
