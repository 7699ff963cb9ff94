//! Compiles a small C program against the generated header and the static
//! library. Skipped when no C compiler or static archive is available.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "qrep.h"

int main(void) {
    QrepSpec *spec = NULL;
    QrepMetaGame *meta = NULL;
    if (qrep_spec_from_scenario("pd_standard", 0.9, 1, &spec) != QREP_STATUS_OK) return 10;
    if (qrep_meta_game_build(spec, 0.0, &meta) != QREP_STATUS_OK) return 11;
    size_t k = 0;
    qrep_meta_game_strategy_count(meta, 0, &k);
    if (k != 32) return 12;
    double w[64] = {0};
    w[31] = 1.0;
    w[63] = 1.0;
    double v[2];
    if (qrep_meta_game_value(meta, w, 64, v, 2) != QREP_STATUS_OK) return 13;
    int verdict = -1;
    qrep_meta_game_check_strict(meta, w, 64, &verdict);
    printf("%.9f %.9f %d\n", v[0], v[1], verdict);
    if (qrep_spec_from_scenario("nope", 0.9, 1, &spec) != QREP_STATUS_INVALID_ARGUMENT) return 14;
    char buf[128];
    if (qrep_last_error(buf, sizeof buf) == 0) return 15;
    qrep_meta_game_free(meta);
    qrep_spec_free(spec);
    return 0;
}
"#;

#[test]
fn c_program_links_and_runs() {
    let exe = std::env::current_exe().unwrap();
    let profile_dir = exe.parent().and_then(|d| d.parent()).unwrap().to_path_buf();
    let archive = profile_dir.join("libqrep_ffi.a");
    if !archive.exists() || Command::new("cc").arg("--version").output().is_err() {
        eprintln!("skipping: no static archive or C compiler");
        return;
    }
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("client.c");
    std::fs::write(&src, PROGRAM).unwrap();
    let bin: PathBuf = dir.path().join("client");
    let include = concat!(env!("CARGO_MANIFEST_DIR"), "/include");
    let status = Command::new("cc")
        .args(["-std=c99", "-Wall", "-Werror", "-I", include])
        .arg(&src)
        .arg(&archive)
        .args(["-o"])
        .arg(&bin)
        .args(["-lpthread", "-ldl", "-lm"])
        .status()
        .unwrap();
    assert!(status.success(), "C client failed to compile");
    let out = Command::new(&bin).output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    // Always-defect forever at δ = 0.9 is worth 1/(1-0.9) = 10 and is strict.
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "10.000000000 10.000000000 0");
}
