use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use dtomo_ffi::*;

fn last_error() -> String {
    let p = dt_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

const PROP1: &str = r#"{
  "format": "dtomo-instance/1", "width": 2, "height": 1, "k": 2,
  "pairwise": {"kind": "potts", "weight": 1.0},
  "rays": [{"nodes": [0, 1], "target": 1, "direction": "horizontal"}]
}"#;

#[test]
fn solve_round_trip_through_the_c_api() {
    unsafe {
        let json = CString::new(PROP1).unwrap();
        let mut inst = ptr::null_mut();
        assert_eq!(dt_instance_from_json(json.as_ptr(), &mut inst), DtStatus::Ok);
        assert_eq!((dt_instance_width(inst), dt_instance_height(inst), dt_instance_k(inst)), (2, 1, 2));
        assert_eq!(dt_instance_num_rays(inst), 1);

        let mut opts = DtSolveOptions {
            max_iters: 0,
            time_limit_seconds: 0.0,
            deterministic: 0,
            no_early_stop: 0,
        };
        dt_solve_options_default(&mut opts);
        assert_eq!(opts.max_iters, 1000);
        opts.deterministic = 1;

        let mut res = ptr::null_mut();
        assert_eq!(dt_solve(inst, DtMethod::Ctg, &opts, &mut res), DtStatus::Ok);
        assert!((dt_result_lower_bound(res) - 1.0).abs() < 1e-9);
        assert_eq!(dt_result_certified(res), 1);
        assert_eq!(dt_result_status(res), DtSolveStatus::Optimal);
        let mut v = 0.0;
        assert_eq!(dt_result_primal_value(res, &mut v), DtStatus::Ok);
        assert_eq!(v, 1.0);

        let mut written = 0usize;
        assert_eq!(dt_result_labeling(res, ptr::null_mut(), 0, &mut written), DtStatus::BufferTooSmall);
        assert_eq!(written, 2);
        let mut buf = [9u32; 2];
        assert_eq!(dt_result_labeling(res, buf.as_mut_ptr(), 2, &mut written), DtStatus::Ok);
        let (mut energy, mut feasible) = (0.0, 0);
        assert_eq!(dt_instance_evaluate(inst, buf.as_ptr(), 2, &mut energy, &mut feasible), DtStatus::Ok);
        assert_eq!((energy, feasible), (1.0, 1));

        let text = dt_result_to_json(res);
        assert!(!text.is_null());
        assert!(CStr::from_ptr(text).to_str().unwrap().contains("\"format\": \"dtomo-result/1\""));
        dt_string_free(text);

        let mut std_res = ptr::null_mut();
        assert_eq!(dt_solve(inst, DtMethod::Std, ptr::null(), &mut std_res), DtStatus::Ok);
        assert!(dt_result_lower_bound(std_res).abs() < 1e-9);
        assert_eq!(dt_result_certified(std_res), 0);

        dt_result_free(std_res);
        dt_result_free(res);
        dt_instance_free(inst);
    }
}

#[test]
fn errors_are_reported_with_codes_and_messages() {
    unsafe {
        let mut inst = ptr::null_mut();
        assert_eq!(dt_instance_from_json(ptr::null(), &mut inst), DtStatus::NullPointer);
        assert!(last_error().contains("json"));

        let bad = CString::new(PROP1.replace("\"k\": 2", "\"k\": \"two\"")).unwrap();
        assert_eq!(dt_instance_from_json(bad.as_ptr(), &mut inst), DtStatus::Parse);
        assert!(last_error().contains('k'), "{}", last_error());

        let invalid = CString::new(PROP1.replace("\"k\": 2", "\"k\": 1")).unwrap();
        assert_eq!(dt_instance_from_json(invalid.as_ptr(), &mut inst), DtStatus::Validation);

        let missing = CString::new("/nonexistent/instance.json").unwrap();
        assert_eq!(dt_instance_load(missing.as_ptr(), &mut inst), DtStatus::Io);
        assert!(inst.is_null());

        let mut v = 0.0;
        assert_eq!(dt_result_primal_value(ptr::null(), &mut v), DtStatus::NullPointer);
        assert!(dt_result_lower_bound(ptr::null()).is_nan());
        dt_instance_free(ptr::null_mut());
        dt_result_free(ptr::null_mut());
        dt_string_free(ptr::null_mut());

        // A successful call clears the message.
        let ok = CString::new(PROP1).unwrap();
        assert_eq!(dt_instance_from_json(ok.as_ptr(), &mut inst), DtStatus::Ok);
        assert!(dt_last_error_message().is_null());
        dt_instance_free(inst);
    }
}

#[test]
fn generate_save_and_load() {
    let dir = tempfile::tempdir().unwrap();
    unsafe {
        let dirs = CString::new("hv").unwrap();
        let mut truth = vec![0u32; 16];
        let mut inst = ptr::null_mut();
        assert_eq!(dt_instance_generate(7, 4, 4, 3, dirs.as_ptr(), 1, truth.as_mut_ptr(), &mut inst), DtStatus::Ok);
        assert_eq!(dt_instance_num_rays(inst), 8);
        let (mut energy, mut feasible) = (0.0, 0);
        assert_eq!(dt_instance_evaluate(inst, truth.as_ptr(), 16, &mut energy, &mut feasible), DtStatus::Ok);
        assert_eq!(feasible, 1);

        let path = CString::new(dir.path().join("i.json").to_str().unwrap()).unwrap();
        assert_eq!(dt_instance_save(inst, path.as_ptr()), DtStatus::Ok);
        let mut back = ptr::null_mut();
        assert_eq!(dt_instance_load(path.as_ptr(), &mut back), DtStatus::Ok);
        assert_eq!(dt_instance_num_rays(back), 8);

        let bad = CString::new("hx").unwrap();
        let mut none = ptr::null_mut();
        assert_ne!(dt_instance_generate(7, 4, 4, 3, bad.as_ptr(), 1, ptr::null_mut(), &mut none), DtStatus::Ok);
        dt_instance_free(back);
        dt_instance_free(inst);
    }
}

fn header_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include")
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include "dtomo.h"

int main(void) {
    const char *json = "{\"format\":\"dtomo-instance/1\",\"width\":2,\"height\":1,\"k\":2,"
        "\"pairwise\":{\"kind\":\"potts\",\"weight\":1.0},"
        "\"rays\":[{\"nodes\":[0,1],\"target\":1,\"direction\":\"horizontal\"}]}";
    DtInstance *inst = NULL;
    if (dt_instance_from_json(json, &inst) != DT_STATUS_OK) return 1;
    DtSolveOptions opts;
    dt_solve_options_default(&opts);
    DtResult *res = NULL;
    if (dt_solve(inst, DT_METHOD_CTG, &opts, &res) != DT_STATUS_OK) return 2;
    printf("%.3f %d\n", dt_result_lower_bound(res), dt_result_certified(res));
    dt_result_free(res);
    dt_instance_free(inst);
    return 0;
}
"#;

/// Compiles and runs a C client against the generated header and the
/// static library, when a C compiler and the archive are available.
#[test]
fn header_compiles_and_links_from_c() {
    let header = header_dir().join("dtomo.h");
    assert!(header.exists(), "build script must emit {}", header.display());
    let Ok(cc) = which_cc() else {
        eprintln!("no C compiler found; skipping C client test");
        return;
    };
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let syntax = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(header_dir())
        .arg(&src)
        .status()
        .unwrap();
    assert!(syntax.success(), "header does not compile as C99");

    // target/<profile>/deps/<test binary> → target/<profile>/libdtomo_ffi.a
    let exe = std::env::current_exe().unwrap();
    let lib = exe.parent().and_then(|d| d.parent()).map(|d| d.join("libdtomo_ffi.a"));
    let Some(lib) = lib.filter(|l| l.exists()) else {
        eprintln!("static library not found next to the test binary; skipping link test");
        return;
    };
    let bin = dir.path().join("client");
    let link = Command::new(&cc)
        .arg("-I")
        .arg(header_dir())
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .status()
        .unwrap();
    assert!(link.success(), "linking the C client failed");
    let out = Command::new(&bin).output().unwrap();
    assert!(out.status.success());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "1.000 1");
}

fn which_cc() -> Result<String, ()> {
    for cc in ["cc", "gcc", "clang"] {
        if Command::new(cc).arg("--version").output().is_ok_and(|o| o.status.success()) {
            return Ok(cc.to_string());
        }
    }
    Err(())
}
