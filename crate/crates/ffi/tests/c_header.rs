use std::path::{Path, PathBuf};
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "warpmetric.h"

int main(void) {
    WmMetric *w = NULL;
    if (wm_metric_identity(2, WM_STRUCTURE_PSD, &w) != WM_STATUS_OK) return 1;
    double a[4] = {0, 0, 1, 1};
    double c[4];
    if (wm_affinity(a, 2, a, 2, 2, w, c, 4) != WM_STATUS_OK) return 2;
    size_t steps[6];
    size_t len = 0;
    double score = 0;
    if (wm_decode(c, 2, 2, -1, steps, 3, &len, &score) != WM_STATUS_OK) return 3;
    if (len != 2 || steps[2] != 2 || steps[3] != 2 || score != 0.0) return 4;
    if (wm_metric_new(NULL, 2, WM_STRUCTURE_PSD, &w) != WM_STATUS_NULL_POINTER) return 5;
    if (wm_last_error() == NULL) return 6;
    wm_metric_free(w);
    printf("ok\n");
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from <target>/<profile>/deps/
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn header_compiles_and_links_from_c() {
    let header_dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("include");
    let lib = target_dir().join("libwarpmetric_ffi.a");
    assert!(
        lib.exists(),
        "static library not found at {}",
        lib.display()
    );
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let exe = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new("cc")
        .arg("-std=c99")
        .arg("-Wall")
        .arg("-I")
        .arg(&header_dir)
        .arg(&src)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(String::from_utf8_lossy(&out.stdout), "ok\n");
}
