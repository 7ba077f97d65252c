//! Exercises the C ABI from Rust and compiles a C client against the generated header.

use std::ffi::{c_char, CStr, CString};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::ptr;

use elab_ffi::*;

const CONFIG: &str = r#"
seed = 3
output_dir = "unused"

[trainer]
epochs = 2
learning_rate = 10.0
predictor_learning_rate = 1.0
alternation_block = 50

[data]
source = "synthetic"
n_instances = 100
n_dev = 40
"#;

fn last_error() -> String {
    let p = elab_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn c_strings(items: &[&str]) -> (Vec<CString>, Vec<*const c_char>) {
    let owned: Vec<CString> = items.iter().map(|s| CString::new(*s).unwrap()).collect();
    let ptrs = owned.iter().map(|c| c.as_ptr()).collect();
    (owned, ptrs)
}

#[test]
fn nucleus_filter_keeps_smallest_prefix() {
    // Unnormalized input; the filter normalizes first.
    let probs = [4.0, 2.5, 2.0, 1.0, 0.5];
    let mut out = [f64::NAN; 5];
    let st = unsafe { elab_nucleus_filter(probs.as_ptr(), 5, 0.5, out.as_mut_ptr()) };
    assert_eq!(st, ElabStatus::Ok);
    let expected = [0.4 / 0.65, 0.25 / 0.65, 0.0, 0.0, 0.0];
    for (a, b) in out.iter().zip(expected) {
        assert!((a - b).abs() < 1e-12, "{out:?}");
    }
}

#[test]
fn nucleus_filter_rejects_bad_arguments() {
    let probs = [0.5, 0.5];
    let mut out = [0.0; 2];
    assert_eq!(unsafe { elab_nucleus_filter(probs.as_ptr(), 2, 0.0, out.as_mut_ptr()) }, ElabStatus::Config);
    assert!(last_error().contains("p must"));
    assert_eq!(unsafe { elab_nucleus_filter(ptr::null(), 2, 0.5, out.as_mut_ptr()) }, ElabStatus::NullPointer);
    let neg = [-0.5, 1.5];
    assert_eq!(unsafe { elab_nucleus_filter(neg.as_ptr(), 2, 0.5, out.as_mut_ptr()) }, ElabStatus::Config);
}

#[test]
fn cosine_similarity_values_and_errors() {
    let u = [1.0, 0.0];
    let v = [1.0, 1.0];
    let mut out = 0.0;
    assert_eq!(unsafe { elab_cosine_similarity(u.as_ptr(), v.as_ptr(), 2, &mut out) }, ElabStatus::Ok);
    assert!((out - 1.0 / 2f64.sqrt()).abs() < 1e-12);
    let z = [0.0, 0.0];
    assert_eq!(unsafe { elab_cosine_similarity(u.as_ptr(), z.as_ptr(), 2, &mut out) }, ElabStatus::Config);
    assert!(last_error().contains("zero vector"));
}

#[test]
fn render_prompt_includes_question() {
    let (_keep, cands) = c_strings(&["river", "ocean"]);
    let dataset = CString::new("csqa").unwrap();
    let question = CString::new("where do fish live?").unwrap();
    let mut out: *mut c_char = ptr::null_mut();
    let st = unsafe { elab_render_prompt(dataset.as_ptr(), question.as_ptr(), cands.as_ptr(), 2, &mut out) };
    assert_eq!(st, ElabStatus::Ok);
    let text = unsafe { CStr::from_ptr(out) }.to_str().unwrap().to_string();
    unsafe { elab_string_free(out) };
    assert!(text.contains("where do fish live?"));

    let unknown = CString::new("trivia").unwrap();
    let st = unsafe { elab_render_prompt(unknown.as_ptr(), question.as_ptr(), cands.as_ptr(), 2, &mut out) };
    assert_eq!(st, ElabStatus::Config);
    let bad = [0x66u8, 0xff, 0x00];
    let st = unsafe { elab_render_prompt(bad.as_ptr().cast(), question.as_ptr(), cands.as_ptr(), 2, &mut out) };
    assert_eq!(st, ElabStatus::InvalidUtf8);
}

#[test]
fn session_lifecycle() {
    let config = CString::new(CONFIG).unwrap();
    let mut s: *mut ElabSession = ptr::null_mut();
    assert_eq!(unsafe { elab_session_new(config.as_ptr(), false, &mut s) }, ElabStatus::Ok);
    assert!(!s.is_null());

    let mut dev = 0.0;
    assert_eq!(unsafe { elab_session_train(s, false, &mut dev) }, ElabStatus::Ok);
    assert!((0.0..=1.0).contains(&dev));
    let mut acc = -1.0;
    assert_eq!(unsafe { elab_session_evaluate(s, &mut acc) }, ElabStatus::Ok);
    assert!((0.0..=1.0).contains(&acc));

    let (_keep, cands) = c_strings(&["v1", "v2", "v3"]);
    let question = CString::new("what does k4 map to ?").unwrap();
    let mut index = usize::MAX;
    let mut elab: *mut c_char = ptr::null_mut();
    let st = unsafe { elab_session_predict(s, question.as_ptr(), cands.as_ptr(), 3, 9, &mut index, &mut elab) };
    assert_eq!(st, ElabStatus::Ok, "{}", last_error());
    assert!(index < 3);
    if !elab.is_null() {
        assert!(!unsafe { CStr::from_ptr(elab) }.to_bytes().is_empty());
        unsafe { elab_string_free(elab) };
    }

    let missing = CString::new("/nonexistent/final.json").unwrap();
    assert_eq!(unsafe { elab_session_load_checkpoint(s, missing.as_ptr()) }, ElabStatus::Config);
    unsafe { elab_session_free(s) };
}

#[test]
fn session_errors() {
    let mut s: *mut ElabSession = ptr::null_mut();
    let no_seed = CString::new("mode = \"elabor\"").unwrap();
    assert_eq!(unsafe { elab_session_new(no_seed.as_ptr(), false, &mut s) }, ElabStatus::Config);
    assert!(last_error().contains("seed"));
    assert!(s.is_null());
    assert_eq!(unsafe { elab_session_train(ptr::null_mut(), false, ptr::null_mut()) }, ElabStatus::NullPointer);
    unsafe { elab_session_free(ptr::null_mut()) };
    unsafe { elab_string_free(ptr::null_mut()) };
}

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

#[test]
fn header_compiles_as_c() {
    let header = crate_dir().join("include/elab.h");
    let out = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-x", "c"])
        .arg(&header)
        .output()
        .expect("a C compiler is on PATH");
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn header_declares_every_export() {
    let header = std::fs::read_to_string(crate_dir().join("include/elab.h")).unwrap();
    let source = std::fs::read_to_string(crate_dir().join("src/lib.rs")).unwrap();
    let exports: Vec<&str> = source
        .lines()
        .filter_map(|l| l.split("extern \"C\" fn ").nth(1))
        .map(|rest| rest.split('(').next().unwrap())
        .collect();
    assert!(exports.len() >= 10);
    for name in exports {
        assert!(header.contains(&format!("{name}(")), "{name} missing from header");
    }
}

/// Directory holding the library artifacts for the current profile.
fn artifact_dir() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    exe.parent().and_then(Path::parent).unwrap().to_path_buf()
}

#[test]
fn c_client_links_against_static_library() {
    let lib = artifact_dir().join("libelab_ffi.a");
    assert!(lib.exists(), "{} not built", lib.display());
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("client.c");
    std::fs::write(
        &src,
        r#"#include <stdio.h>
#include <string.h>
#include "elab.h"

int main(void) {
    double probs[3] = {0.6, 0.3, 0.1};
    double out[3];
    if (elab_nucleus_filter(probs, 3, 0.5, out) != ELAB_STATUS_OK) return 1;
    if (out[0] != 1.0 || out[1] != 0.0) return 2;
    if (elab_nucleus_filter(probs, 3, 2.0, out) != ELAB_STATUS_CONFIG) return 3;
    if (strstr(elab_last_error_message(), "p must") == NULL) return 4;
    ElabSession *s = NULL;
    if (elab_session_new("seed = 1\n[data]\nsource = \"synthetic\"\nn_instances = 10\nn_dev = 5\n", false, &s) != ELAB_STATUS_OK) return 5;
    double acc = -1.0;
    if (elab_session_evaluate(s, &acc) != ELAB_STATUS_OK || acc < 0.0 || acc > 1.0) return 6;
    elab_session_free(s);
    printf("%s\n", elab_version());
    return 0;
}
"#,
    )
    .unwrap();
    let exe = tmp.path().join("client");
    let out = Command::new("cc")
        .arg("-I")
        .arg(crate_dir().join("include"))
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&exe).output().unwrap();
    assert!(run.status.success(), "exit {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), env!("CARGO_PKG_VERSION"));
}
