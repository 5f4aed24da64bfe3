//! Compiles a small C program against the generated header and the static
//! library. Skipped when no C compiler is available.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include "hyperlattice.h"

int main(void) {
    uint64_t n = 0;
    if (hl_edge_count(4, &n) != HL_STATUS_OK || n != 32) return 1;
    HlLattice *l = NULL;
    if (hl_lattice_generate(1, 1, &l) != HL_STATUS_OK) return 2;
    HlPoint drive = {1, 0.2, 1.0};
    HlPoint assess = {1, 0.7, 0.0};
    HlArrival paths[8];
    size_t total = 0;
    if (hl_oracle_paths(l, drive, assess, 3.2, 1e-4, paths, 8, &total) != HL_STATUS_OK) return 3;
    if (total != 7) return 4;
    if (hl_edge_count(0, &n) != HL_STATUS_INVALID_ARGUMENT) return 5;
    char *msg = hl_last_error_message();
    if (msg == NULL) return 6;
    hl_string_free(msg);
    printf("%zu %.3f\n", total, paths[0].time);
    hl_lattice_free(l);
    return 0;
}
"#;

fn target_dir() -> PathBuf {
    // tests run from target/<profile>/deps
    let exe = std::env::current_exe().unwrap();
    exe.parent().unwrap().parent().unwrap().to_path_buf()
}

#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler; skipping");
        return;
    }
    let lib = target_dir().join("libhyperlattice_ffi.a");
    assert!(lib.exists(), "{} missing", lib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let dir = std::env::temp_dir().join(format!("hyperlattice-c-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let src = dir.join("smoke.c");
    let exe = dir.join("smoke");
    std::fs::write(&src, PROGRAM).unwrap();
    let status = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(&include)
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    std::fs::remove_dir_all(&dir).ok();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8_lossy(&out.stdout).trim(), "7 0.500");
}
