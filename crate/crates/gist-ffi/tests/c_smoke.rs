//! Best-effort C toolchain smoke test: compile a real C program against the
//! generated header, link the static library, and run it. Skips (passing)
//! when no C compiler is available.

use std::path::{Path, PathBuf};
use std::process::Command;

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "gist_ffi.h"

int main(void) {
    if (strlen(gd_version()) == 0) return 1;

    double base[2] = {0.6, 0.4};
    double gist[2] = {0.1, 0.9};
    double out[2] = {0.0, 0.0};
    if (gd_blend_scores(base, gist, 2, 0.2, out) != GD_STATUS_OK) return 2;
    if (out[0] < 0.49 || out[0] > 0.51) return 3;
    if (out[1] < 0.49 || out[1] > 0.51) return 4;

    /* lambda outside [0,1] must fail and leave a message. */
    if (gd_blend_scores(base, gist, 2, 2.0, out) != GD_STATUS_FAIL) return 5;
    if (strlen(gd_last_error()) == 0) return 6;

    /* NULL handling. */
    if (gd_blend_scores(NULL, gist, 2, 0.5, out) != GD_STATUS_NULL_ARG) return 7;
    gd_student_free(NULL);
    gd_gist_free(NULL);
    gd_string_free(NULL);

    double v[2] = {1.0, 0.0};
    double w[1] = {1.0};
    double reps[2] = {0.0, 2.0};
    double ctx[2];
    if (gd_blend_context(v, 2, w, 1, reps, 0.5, ctx) != GD_STATUS_OK) return 8;
    if (ctx[0] != 0.5 || ctx[1] != 1.0) return 9;

    printf("c smoke ok\n");
    return 0;
}
"#;

fn find_compiler() -> Option<String> {
    if let Ok(cc) = std::env::var("CC") {
        if !cc.is_empty() {
            return Some(cc);
        }
    }
    for cand in ["cc", "gcc", "clang"] {
        if Command::new(cand)
            .arg("--version")
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
        {
            return Some(cand.to_string());
        }
    }
    None
}

fn static_lib_path() -> Option<PathBuf> {
    // target/{debug,release}/libgist_ffi.a relative to the workspace root.
    let manifest = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let target = manifest.parent()?.parent()?.join("target");
    for profile in ["debug", "release"] {
        let p = target.join(profile).join("libgist_ffi.a");
        if p.exists() {
            return Some(p);
        }
    }
    None
}

#[test]
fn c_program_compiles_links_and_runs() {
    let Some(cc) = find_compiler() else {
        eprintln!("skipping: no C compiler found");
        return;
    };
    // cargo test builds the rlib for Rust tests; the staticlib is produced
    // by a normal build of this crate.
    if static_lib_path().is_none() {
        let status = Command::new(env!("CARGO"))
            .args(["build", "-p", "gist-ffi"])
            .status()
            .expect("cargo should run");
        assert!(status.success(), "building the static library failed");
    }
    let lib = static_lib_path().expect("static library after build");
    let include = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    assert!(include.join("gist_ffi.h").exists(), "generated header missing");

    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("smoke.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let bin = dir.path().join("smoke");

    let compile = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lm", "-lpthread", "-ldl", "-o"])
        .arg(&bin)
        .output()
        .expect("compiler should run");
    assert!(
        compile.status.success(),
        "C compile/link failed:\n{}",
        String::from_utf8_lossy(&compile.stderr)
    );

    let run = Command::new(&bin).output().expect("smoke binary should run");
    assert!(
        run.status.success(),
        "smoke binary exited with {:?}: {}",
        run.status.code(),
        String::from_utf8_lossy(&run.stdout)
    );
    assert!(String::from_utf8_lossy(&run.stdout).contains("c smoke ok"));
}
