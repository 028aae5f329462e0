use std::ffi::{c_int, CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use bsdelab_ffi::*;

const BASIC: &str = include_str!("../../core/configs/basic.json");
const REFLECT: &str = include_str!("../../core/configs/reflect.json");

fn last_error() -> String {
    let p = bsde_last_error();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn config(json: &str) -> *mut BsdeConfig {
    let text = CString::new(json).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { bsde_config_from_json(text.as_ptr(), &mut cfg) }, BsdeStatus::Ok);
    assert!(bsde_last_error().is_null());
    cfg
}

#[test]
fn solve_and_read_back() {
    let cfg = config(BASIC);
    unsafe {
        let mut count = 0usize;
        assert_eq!(bsde_config_instance_count(cfg, &mut count), BsdeStatus::Ok);
        assert_eq!(count, 1);

        let mut sol = ptr::null_mut();
        assert_eq!(bsde_solve(cfg, 0, 0, &mut sol), BsdeStatus::Ok);
        let (mut nodes, mut steps) = (0usize, 0usize);
        assert_eq!(bsde_solution_node_count(sol, &mut nodes), BsdeStatus::Ok);
        assert_eq!(bsde_solution_n_steps(sol, &mut steps), BsdeStatus::Ok);
        assert_eq!(steps, 8);
        assert_eq!(nodes, (1usize << 9) - 1);

        let mut y0 = f64::NAN;
        assert_eq!(bsde_solution_y0(sol, &mut y0), BsdeStatus::Ok);
        let mut y = vec![0.0; nodes];
        assert_eq!(bsde_solution_copy(sol, BsdeComponent::Y, y.as_mut_ptr(), nodes), BsdeStatus::Ok);
        assert_eq!(y[0], y0);
        let mut k = vec![1.0; nodes];
        assert_eq!(bsde_solution_copy(sol, BsdeComponent::K, k.as_mut_ptr(), nodes), BsdeStatus::Ok);
        assert!(k.iter().all(|v| *v == 0.0));
        let mut residual = f64::NAN;
        assert_eq!(bsde_solution_residual(sol, &mut residual), BsdeStatus::Ok);
        assert!(residual < 1e-10);

        assert_eq!(
            bsde_solution_copy(sol, BsdeComponent::M, y.as_mut_ptr(), nodes - 1),
            BsdeStatus::OutOfRange
        );
        assert!(last_error().contains("nodes"));

        let mut other = ptr::null_mut();
        assert_eq!(bsde_solve(cfg, 3, 0, &mut other), BsdeStatus::OutOfRange);
        assert!(other.is_null());

        bsde_solution_free(sol);
        bsde_config_free(cfg);
    }
}

#[test]
fn reflected_solve_has_a_nonnegative_push() {
    let cfg = config(REFLECT);
    unsafe {
        let mut sol = ptr::null_mut();
        assert_eq!(bsde_solve(cfg, 0, 1, &mut sol), BsdeStatus::Ok);
        let mut nodes = 0usize;
        bsde_solution_node_count(sol, &mut nodes);
        let mut k = vec![0.0; nodes];
        assert_eq!(bsde_solution_copy(sol, BsdeComponent::K, k.as_mut_ptr(), nodes), BsdeStatus::Ok);
        assert_eq!(k[0], 0.0);
        assert!(k.iter().all(|v| *v >= 0.0));
        bsde_solution_free(sol);
        bsde_config_free(cfg);
    }
}

#[test]
fn errors_are_reported_with_codes() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(bsde_config_from_json(ptr::null(), &mut cfg), BsdeStatus::NullPointer);
        assert!(last_error().contains("json"));

        let bad = CString::new(r#"{"version": 1, "tree": {"horizon": 1.0, "n_steps": 4, "d": "two"}}"#).unwrap();
        assert_eq!(bsde_config_from_json(bad.as_ptr(), &mut cfg), BsdeStatus::InvalidConfig);
        assert!(last_error().contains("tree.d"));
        assert!(cfg.is_null());

        let invalid = [0xffu8, 0xfe, 0];
        assert_eq!(bsde_config_from_json(invalid.as_ptr().cast(), &mut cfg), BsdeStatus::InvalidUtf8);

        let mut y0 = 0.0;
        assert_eq!(bsde_solution_y0(ptr::null(), &mut y0), BsdeStatus::NullPointer);

        bsde_config_free(ptr::null_mut());
        bsde_solution_free(ptr::null_mut());
    }
}

#[test]
fn run_picard_with_and_without_output() {
    let cfg = config(include_str!("../../core/configs/picard.json"));
    let dir = tempfile::TempDir::new().unwrap();
    let out = CString::new(dir.path().to_str().unwrap()).unwrap();
    let picard = CString::new("picard").unwrap();
    unsafe {
        let mut passed: c_int = -1;
        assert_eq!(bsde_run(cfg, picard.as_ptr(), ptr::null(), ptr::null(), &mut passed), BsdeStatus::Ok);
        assert_eq!(passed, 1);
        passed = -1;
        assert_eq!(bsde_run(cfg, picard.as_ptr(), ptr::null(), out.as_ptr(), &mut passed), BsdeStatus::Ok);
        assert_eq!(passed, 1);
        assert!(dir.path().join("manifest.json").exists());

        let nope = CString::new("nope").unwrap();
        assert_eq!(bsde_run(cfg, nope.as_ptr(), ptr::null(), ptr::null(), &mut passed), BsdeStatus::InvalidConfig);
        assert!(last_error().contains("nope"));
        bsde_config_free(cfg);
    }
}

#[test]
fn default_config_and_seed() {
    unsafe {
        let mut cfg = ptr::null_mut();
        assert_eq!(bsde_config_default(&mut cfg), BsdeStatus::Ok);
        assert_eq!(bsde_config_set_seed(cfg, 99), BsdeStatus::Ok);
        let mut count = 0usize;
        assert_eq!(bsde_config_instance_count(cfg, &mut count), BsdeStatus::Ok);
        assert!(count > 0);
        bsde_config_free(cfg);
    }
    let v = unsafe { CStr::from_ptr(bsde_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_links_and_runs() {
    let crate_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let header = crate_dir.join("include/bsdelab.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for f in ["bsde_config_from_json", "bsde_solve", "bsde_solution_copy", "bsde_run", "bsde_last_error"] {
        assert!(text.contains(f), "{f}");
    }
    let dir = tempfile::TempDir::new().unwrap();
    let src = dir.path().join("use.c");
    std::fs::write(
        &src,
        "#include \"bsdelab.h\"\n\
         int main(void) {\n\
           BsdeConfig *cfg = NULL;\n\
           BsdeSolution *sol = NULL;\n\
           double y0 = 0.0;\n\
           if (bsde_config_default(&cfg) != BSDE_STATUS_OK) return 1;\n\
           if (bsde_solve(cfg, 0, 1, &sol) != BSDE_STATUS_OK) return 2;\n\
           bsde_solution_y0(sol, &y0);\n\
           bsde_solution_free(sol);\n\
           bsde_config_free(cfg);\n\
           return bsde_last_error() == NULL ? 0 : 3;\n\
         }\n",
    )
    .unwrap();
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let status = Command::new(&cc)
        .args(["-std=c99", "-Wall", "-Werror", "-fsyntax-only", "-I"])
        .arg(crate_dir.join("include"))
        .arg(&src)
        .status()
        .unwrap_or_else(|e| panic!("running {cc}: {e}"));
    assert!(status.success());

    // Link against the shared library next to the test binary and run it.
    let lib_dir = std::env::current_exe().unwrap().parent().unwrap().parent().unwrap().to_path_buf();
    assert!(lib_dir.join("libbsdelab_ffi.so").exists(), "{}", lib_dir.display());
    let exe = dir.path().join("use");
    let status = Command::new(&cc)
        .args(["-std=c99", "-I"])
        .arg(crate_dir.join("include"))
        .arg(&src)
        .arg("-L")
        .arg(&lib_dir)
        .args(["-lbsdelab_ffi", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let run = Command::new(&exe).env("LD_LIBRARY_PATH", &lib_dir).status().unwrap();
    assert_eq!(run.code(), Some(0));
}
