//! Checks the generated header from C. The program is always compiled
//! against the header; it is also linked and run when the static library
//! of the same profile exists (`cargo build` produces it, `cargo test`
//! alone does not).

use std::path::PathBuf;
use std::process::Command;

fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

fn cc_available() -> bool {
    Command::new("cc").arg("--version").output().is_ok_and(|o| o.status.success())
}

fn cc_base() -> Command {
    let mut c = Command::new("cc");
    c.args(["-std=c99", "-Wall", "-Wextra", "-Werror"])
        .arg(crate_dir().join("tests/smoke.c"))
        .arg("-I")
        .arg(crate_dir().join("include"));
    c
}

#[test]
fn header_is_generated() {
    let text = std::fs::read_to_string(crate_dir().join("include/efflab.h")).expect("header exists");
    for name in ["efflab_last_error", "efflab_lattice_classify", "efflab_experiment_run", "EFFLAB_STATUS_OK"] {
        assert!(text.contains(name), "{name} missing from header");
    }
}

#[test]
fn c_program_compiles_against_header() {
    if !cc_available() {
        eprintln!("skipping: no C compiler");
        return;
    }
    let status = cc_base().arg("-fsyntax-only").status().expect("cc runs");
    assert!(status.success());
}

#[test]
fn c_program_links_and_runs() {
    // .../target/<profile>/deps/<test binary>
    let Some(profile_dir) = std::env::current_exe().ok().and_then(|p| p.parent()?.parent().map(PathBuf::from)) else {
        return;
    };
    let archive = profile_dir.join("libefflab_ffi.a");
    if !archive.exists() || !cc_available() {
        eprintln!("skipping link: {} not built", archive.display());
        return;
    }
    let out = std::env::temp_dir().join(format!("efflab_smoke_{}", std::process::id()));
    let status = cc_base()
        .arg(&archive)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&out)
        .status()
        .expect("cc runs");
    assert!(status.success(), "C link failed");
    let run = Command::new(&out).output().expect("smoke binary runs");
    let _ = std::fs::remove_file(&out);
    assert!(run.status.success(), "smoke exited with {:?}", run.status.code());
    assert_eq!(String::from_utf8_lossy(&run.stdout).trim(), "0.500000000000");
}
