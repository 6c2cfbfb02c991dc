//! C ABI over the zoomnet library.
//!
//! Models are opaque `ZnModel` handles owned by the caller and released with
//! `zn_model_free`. Every fallible call returns a `ZnStatus`; on failure the
//! message is available from `zn_last_error_message` on the same thread.
//! Strings returned through out-parameters are owned by the caller and must
//! be released with `zn_string_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::ptr;

use zoomnet::actions::{Action, Level};
use zoomnet::config::Preset;
use zoomnet::corpus::{generate_synthetic, parse_document, write_corpus, Bio, Document};
use zoomnet::model::AnyModel;

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZnStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Io = 4,
    Parse = 5,
    Model = 6,
    Panic = 7,
}

/// A loaded checkpoint of either model kind.
pub struct ZnModel {
    inner: AnyModel,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).expect("nul bytes removed"));
}

struct Failure(ZnStatus, String);

fn fail(status: ZnStatus, message: impl Into<String>) -> Failure {
    Failure(status, message.into())
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ZnStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            ZnStatus::Ok
        }
        Ok(Err(Failure(status, message))) => {
            set_error(message);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ZnStatus::Panic
        }
    }
}

/// # Safety
/// `s` must be null or a valid NUL-terminated string.
unsafe fn read_str<'a>(s: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if s.is_null() {
        return Err(fail(ZnStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(s)
        .to_str()
        .map_err(|e| fail(ZnStatus::InvalidUtf8, format!("{name}: {e}")))
}

fn into_c_string(s: String) -> *mut c_char {
    CString::new(s.replace('\0', " ")).expect("nul bytes removed").into_raw()
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn zn_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn zn_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Index (`3 * level + kind`) of an action, or -1 when out of range.
/// Levels: 0 word, 1 sentence, 2 paragraph. Kinds: 0 B, 1 I, 2 O.
#[no_mangle]
pub extern "C" fn zn_action_index(level: u32, kind: u32) -> i32 {
    let level = match level {
        0 => Level::Word,
        1 => Level::Sentence,
        2 => Level::Paragraph,
        _ => return -1,
    };
    match Bio::from_ordinal(kind as usize) {
        Some(kind) => Action::new(level, kind).index() as i32,
        None => -1,
    }
}

/// Loads a checkpoint written by the `zoomnet` CLI or library.
///
/// # Safety
/// `path` must be a valid NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zn_model_load(path: *const c_char, out: *mut *mut ZnModel) -> ZnStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(ZnStatus::NullArgument, "out is null"));
        }
        *out = ptr::null_mut();
        let path = read_str(path, "path")?;
        let inner = AnyModel::load(Path::new(path)).map_err(|e| fail(ZnStatus::Model, format!("{path}: {e}")))?;
        *out = Box::into_raw(Box::new(ZnModel { inner }));
        Ok(())
    })
}

/// Releases a handle from `zn_model_load`. Null is ignored.
///
/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn zn_model_free(model: *mut ZnModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Parameter counts. For the baseline, `encoder` and `controller` are 0.
///
/// # Safety
/// `model` must be a live handle; each out pointer must be valid or null.
#[no_mangle]
pub unsafe extern "C" fn zn_model_param_count(
    model: *const ZnModel,
    total: *mut usize,
    encoder: *mut usize,
    controller: *mut usize,
) -> ZnStatus {
    guard(|| {
        let model = model.as_ref().ok_or_else(|| fail(ZnStatus::NullArgument, "model is null"))?;
        let counts = model.inner.tagger().param_counts();
        for (ptr, value) in [
            (total, counts.total),
            (encoder, counts.group("encoder")),
            (controller, counts.group("controller")),
        ] {
            if let Some(p) = ptr.as_mut() {
                *p = value;
            }
        }
        Ok(())
    })
}

/// Labels one document given as a corpus JSON line (gold labels optional).
///
/// `out` receives a JSON object with `id`, `labels`, `counts`
/// (`N_aw`/`N_as`/`N_ap`), `wlar` and, for the zooming network, `trace`.
///
/// # Safety
/// `model` must be a live handle, `doc_json` a valid NUL-terminated string
/// and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn zn_model_label_json(
    model: *const ZnModel,
    doc_json: *const c_char,
    out: *mut *mut c_char,
) -> ZnStatus {
    guard(|| {
        if out.is_null() {
            return Err(fail(ZnStatus::NullArgument, "out is null"));
        }
        *out = ptr::null_mut();
        let model = model.as_ref().ok_or_else(|| fail(ZnStatus::NullArgument, "model is null"))?;
        let line = read_str(doc_json, "doc_json")?;
        let doc = parse_document(line).map_err(|e| fail(ZnStatus::Parse, e.to_string()))?;
        let tagger = model.inner.tagger();
        let indexed = tagger.vocab().index(doc);
        let pred = tagger.predict(&indexed).map_err(|e| fail(ZnStatus::Model, e.to_string()))?;
        let labels: Vec<String> = pred.labels.iter().map(|b| b.as_char().to_string()).collect();
        let value = serde_json::json!({
            "id": indexed.doc.id(),
            "labels": labels,
            "counts": pred.counts,
            "wlar": pred.counts.wlar().ok(),
            "trace": pred.trace,
        });
        *out = into_c_string(value.to_string());
        Ok(())
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must be null or a string from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn zn_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Writes `docs` synthetic documents to `path` as JSONL.
/// `preset` 0 selects the court-judgment-like layout, 1 the
/// contract-like layout.
///
/// # Safety
/// `path` must be a valid NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn zn_generate_corpus(preset: u32, docs: usize, seed: u64, path: *const c_char) -> ZnStatus {
    guard(|| {
        let preset = match preset {
            0 => Preset::Task1,
            1 => Preset::Task2,
            other => return Err(fail(ZnStatus::InvalidArgument, format!("unknown preset {other}"))),
        };
        let path = read_str(path, "path")?;
        let cfg = preset.gen(seed);
        let generated: Vec<Document> = generate_synthetic(&cfg)
            .map_err(|e| fail(ZnStatus::InvalidArgument, e.to_string()))?
            .take(docs)
            .map(|d| d.doc)
            .collect();
        write_corpus(Path::new(path), &generated).map_err(|e| fail(ZnStatus::Io, format!("{path}: {e}")))
    })
}
