//! Compiles and runs a C program against the generated header and the
//! static library.

use std::path::PathBuf;
use std::process::Command;

const PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "ptsdim.h"

int main(void) {
    const char *cfg =
        "[system]\nn_u = 2\nn_tx = 6\nn_rx = 2\nn_s = 2\nn_a = 1\nmodulation = \"qpsk\"\n"
        "[sweep]\nmax_symbols = 50\nseed = 3\n";
    PtsdimSimulator *sim = NULL;
    if (ptsdim_simulator_new(cfg, NULL, &sim) != PTSDIM_STATUS_OK) {
        fprintf(stderr, "%s\n", ptsdim_last_error());
        return 1;
    }
    PtsdimBerRecord rec;
    if (ptsdim_simulator_run_point(sim, 10.0, &rec) != PTSDIM_STATUS_OK) return 2;
    ptsdim_simulator_free(sim);
    if (rec.bits_sent != rec.symbols_sent * 2 * 3) return 3;

    PtsdimCodec *codec = NULL;
    if (ptsdim_codec_new(4, 2, 4, false, &codec) != PTSDIM_STATUS_OK) return 4;
    uint8_t bits[6] = {1, 0, 1, 1, 0, 1}, back[6];
    double sym[8];
    if (ptsdim_codec_encode(codec, bits, 6, sym, 8) != PTSDIM_STATUS_OK) return 5;
    if (ptsdim_codec_decode(codec, sym, 8, back, 6) != PTSDIM_STATUS_OK) return 6;
    ptsdim_codec_free(codec);
    if (memcmp(bits, back, 6) != 0) return 7;

    if (ptsdim_codec_new(4, 2, 12, false, &codec) != PTSDIM_STATUS_INVALID_CONFIG) return 8;
    if (ptsdim_flops_min_power(15, 4, 105) != 618105.0) return 9;
    printf("ok %llu\n", (unsigned long long)rec.bits_sent);
    return 0;
}
"#;

/// `cargo test` leaves the archive next to the test binary in
/// `<target>/<profile>/deps`; `cargo build` uplifts it one level.
fn static_lib() -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let deps = exe.parent().unwrap();
    let name = "libptsdim_ffi.a";
    let local = deps.join(name);
    if local.exists() {
        local
    } else {
        deps.parent().unwrap().join(name)
    }
}

#[test]
fn header_declares_api() {
    let header = std::fs::read_to_string(concat!(env!("CARGO_MANIFEST_DIR"), "/include/ptsdim.h")).unwrap();
    for name in [
        "typedef struct PtsdimSimulator PtsdimSimulator;",
        "typedef struct PtsdimCodec PtsdimCodec;",
        "PTSDIM_STATUS_OK = 0",
        "PTSDIM_STATUS_INVALID_CONFIG = 2",
        "ptsdim_simulator_new(",
        "ptsdim_simulator_run_point(",
        "ptsdim_codec_encode(",
        "ptsdim_last_error(",
    ] {
        assert!(header.contains(name), "header lacks {name}");
    }
}

#[test]
fn c_program_links_and_runs() {
    let cc = std::env::var("CC").unwrap_or_else(|_| "cc".into());
    if Command::new(&cc).arg("--version").output().is_err() {
        eprintln!("no C compiler ({cc}); skipping");
        return;
    }
    let lib = static_lib();
    assert!(lib.exists(), "{} not built", lib.display());
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("main.c");
    let bin = dir.path().join("main");
    std::fs::write(&src, PROGRAM).unwrap();
    let out = Command::new(&cc)
        .arg(&src)
        .arg("-I")
        .arg(concat!(env!("CARGO_MANIFEST_DIR"), "/include"))
        .arg(&lib)
        .args(["-lpthread", "-ldl", "-lm", "-o"])
        .arg(&bin)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let run = Command::new(&bin).output().unwrap();
    assert!(run.status.success(), "exit {:?}: {}", run.status.code(), String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stdout).starts_with("ok "));
}
