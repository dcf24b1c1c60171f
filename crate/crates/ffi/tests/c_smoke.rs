//! Compiles a small C program against the generated header and the static
//! library. Skipped when no C compiler or static library is available.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "bsr.h"

int main(void) {
    double taps[3] = {0.25, 0.5, 0.25};
    BsrModel *model = NULL;
    if (bsr_model_conv_new(taps, 3, 8, 2, &model) != BSR_STATUS_OK) return 1;
    double data[16], out[16];
    for (int i = 0; i < 16; i++) data[i] = (double)(i % 5) - 2.0;
    if (bsr_bista_solve(model, data, 16, 0.01, 0.0, 50, out, 16) != BSR_STATUS_OK) return 2;
    BsrParams *net = NULL;
    if (bsr_params_init(model, 0.5, 0.01, 3, BSR_MODE_TIED, &net) != BSR_STATUS_OK) return 3;
    if (bsr_params_layers(net) != 3) return 4;
    if (bsr_model_conv_new(taps, 2, 8, 2, &model) != BSR_STATUS_INVALID_ARGUMENT) return 5;
    if (strlen(bsr_last_error_message()) == 0) return 6;
    bsr_params_free(net);
    bsr_model_free(model);
    printf("ok %s\n", bsr_version());
    return 0;
}
"#;

/// The static library next to this test binary (`<target>/<profile>/deps`),
/// else the uplifted copy one level up.
fn static_lib() -> Option<PathBuf> {
    let exe = std::env::current_exe().ok()?;
    let deps = exe.parent()?;
    [deps.to_path_buf(), deps.parent()?.to_path_buf()]
        .into_iter()
        .map(|d| d.join("libbsr_ffi.a"))
        .find(|p| p.is_file())
}

#[test]
fn c_program_links_and_runs() {
    let header_dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    let Some(lib) = static_lib() else {
        eprintln!("skipping: static library not found");
        return;
    };
    if !header_dir.join("bsr.h").is_file() || Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("skipping: C compiler or generated header not available");
        return;
    }
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("smoke.c");
    let exe = tmp.path().join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&header_dir)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm"])
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success(), "C compilation failed");
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "smoke program exited with {:?}", out.status.code());
    assert!(String::from_utf8_lossy(&out.stdout).starts_with("ok "));
}
