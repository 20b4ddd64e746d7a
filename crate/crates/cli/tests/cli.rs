//! Black-box tests of the command-line pipeline: exit codes, file layouts
//! and byte-level reproducibility.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_xdctrl"))
}

fn workdir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("xdctrl-cli-{name}-{}", std::process::id()));
    let _ = fs::remove_dir_all(&dir);
    fs::create_dir_all(&dir).unwrap();
    dir
}

fn toy_ring_config(dir: &Path) -> PathBuf {
    let path = dir.join("ring.json");
    fs::write(
        &path,
        r#"{ "n": 2, "n_y": 3, "n_s": 3, "n_f": 1, "seed": 7 }"#,
    )
    .unwrap();
    path
}

#[test]
fn gen_ring_produces_loadable_circulant_matrices() {
    let dir = workdir("gen");
    let cfg = toy_ring_config(&dir);
    let out = dir.join("ring");
    let status = bin()
        .args(["gen-ring", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .status()
        .unwrap();
    assert!(status.success());
    for f in ["ring.json", "r_slow.bcm", "r_fast.bcm", "manifest.json"] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    // The stored matrix passes circulant validation exactly.
    let m = xdctrl::io::read_bcm(&out.join("r_slow.bcm")).unwrap();
    let (_, worst) =
        xdctrl::block_circulant::BlockCirculantMatrix::from_dense(&m.to_dense(), 2, 1e-12).unwrap();
    assert_eq!(worst, 0.0);
}

#[test]
fn seed_variation_changes_values_not_shapes() {
    let dir = workdir("seeds");
    let cfg = toy_ring_config(&dir);
    for (seed, name) in [("1", "a"), ("2", "b")] {
        let status = bin()
            .args(["gen-ring", "--config"])
            .arg(&cfg)
            .args(["--seed", seed, "--out"])
            .arg(dir.join(name))
            .status()
            .unwrap();
        assert!(status.success());
    }
    let a = xdctrl::io::read_bcm(&dir.join("a/r_slow.bcm")).unwrap();
    let b = xdctrl::io::read_bcm(&dir.join("b/r_slow.bcm")).unwrap();
    assert_eq!(a.nrows(), b.nrows());
    assert_ne!(a.blocks(), b.blocks());
}

#[test]
fn malformed_config_exits_2_with_position() {
    let dir = workdir("badcfg");
    let cfg = dir.join("broken.json");
    fs::write(&cfg, "{ \"n\": 2,\n  oops }").unwrap();
    let out = bin()
        .args(["gen-ring", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("ring"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("line 2"), "diagnostics missing: {stderr}");
}

#[test]
fn invalid_bandwidth_ordering_exits_2() {
    let dir = workdir("badlambda");
    let ring_cfg = toy_ring_config(&dir);
    assert!(bin()
        .args(["gen-ring", "--config"])
        .arg(&ring_cfg)
        .arg("--out")
        .arg(dir.join("ring"))
        .status()
        .unwrap()
        .success());
    let ctrl_cfg = dir.join("controller.json");
    fs::write(&ctrl_cfg, r#"{ "lambda_s_hz": 1400, "lambda_f_hz": 100 }"#).unwrap();
    let out = bin()
        .args(["design", "--ring"])
        .arg(dir.join("ring"))
        .arg("--controller")
        .arg(&ctrl_cfg)
        .arg("--out")
        .arg(dir.join("ctrl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn zero_steps_exits_2() {
    let dir = workdir("zerosteps");
    let cfg = toy_ring_config(&dir);
    assert!(bin()
        .args(["gen-ring", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("ring"))
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args(["design", "--ring"])
        .arg(dir.join("ring"))
        .arg("--out")
        .arg(dir.join("ctrl"))
        .status()
        .unwrap()
        .success());
    let out = bin()
        .args(["simulate", "--ring"])
        .arg(dir.join("ring"))
        .arg("--controller")
        .arg(dir.join("ctrl"))
        .args(["--steps", "0", "--out"])
        .arg(dir.join("trace"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn design_reports_channel_split() {
    let dir = workdir("split");
    let cfg = toy_ring_config(&dir);
    assert!(bin()
        .args(["gen-ring", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(dir.join("ring"))
        .status()
        .unwrap()
        .success());
    let out = bin()
        .args(["design", "--ring"])
        .arg(dir.join("ring"))
        .arg("--out")
        .arg(dir.join("ctrl"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        stdout.contains("1 coupled + 2 slow-only"),
        "split table missing: {stdout}"
    );
    assert!(stdout.contains("cond(X)"));
}

#[test]
fn full_pipeline_is_byte_reproducible() {
    let dir = workdir("determinism");
    let cfg = toy_ring_config(&dir);
    let run = |tag: &str| {
        let ring = dir.join(format!("{tag}-ring"));
        let ctrl = dir.join(format!("{tag}-ctrl"));
        let trace = dir.join(format!("{tag}-trace"));
        let ibm = dir.join(format!("{tag}-ibm"));
        assert!(bin()
            .args(["gen-ring", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&ring)
            .status()
            .unwrap()
            .success());
        assert!(bin()
            .args(["design", "--ring"])
            .arg(&ring)
            .arg("--out")
            .arg(&ctrl)
            .status()
            .unwrap()
            .success());
        assert!(bin()
            .args(["simulate", "--ring"])
            .arg(&ring)
            .arg("--controller")
            .arg(&ctrl)
            .args(["--steps", "4096", "--seed", "5", "--out"])
            .arg(&trace)
            .status()
            .unwrap()
            .success());
        assert!(bin()
            .args(["analyze", "ibm", "--trace"])
            .arg(&trace)
            .args(["--sensor", "3", "--segment", "1024", "--out"])
            .arg(&ibm)
            .status()
            .unwrap()
            .success());
        (ring, ctrl, trace, ibm)
    };
    let (ring1, ctrl1, trace1, ibm1) = run("one");
    let (ring2, ctrl2, trace2, ibm2) = run("two");

    let same = |a: &Path, b: &Path| {
        assert_eq!(
            fs::read(a).unwrap(),
            fs::read(b).unwrap(),
            "{} differs between runs",
            a.file_name().unwrap().to_string_lossy()
        );
    };
    same(&ring1.join("r_slow.bcm"), &ring2.join("r_slow.bcm"));
    same(&ring1.join("r_fast.bcm"), &ring2.join("r_fast.bcm"));
    same(&ctrl1.join("design.json"), &ctrl2.join("design.json"));
    same(
        &ctrl1.join("xdag_slow.re.bcm"),
        &ctrl2.join("xdag_slow.re.bcm"),
    );
    same(&trace1.join("y.bin"), &trace2.join("y.bin"));
    same(&trace1.join("u_slow.bin"), &trace2.join("u_slow.bin"));
    same(&trace1.join("u_fast.bin"), &trace2.join("u_fast.bin"));
    same(&ibm1.join("ibm.csv"), &ibm2.join("ibm.csv"));
}

#[test]
fn verify_detects_tampering() {
    let dir = workdir("verify");
    let cfg = toy_ring_config(&dir);
    let ring = dir.join("ring");
    assert!(bin()
        .args(["gen-ring", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&ring)
        .status()
        .unwrap()
        .success());
    let manifest = ring.join("manifest.json");
    assert!(bin()
        .args(["verify", "--manifest"])
        .arg(&manifest)
        .status()
        .unwrap()
        .success());
    // Flip one byte of a listed output.
    let target = ring.join("r_slow.bcm");
    let mut bytes = fs::read(&target).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xFF;
    fs::write(&target, bytes).unwrap();
    let out = bin()
        .args(["verify", "--manifest"])
        .arg(&manifest)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn hypothetical_design_and_compare_run() {
    let dir = workdir("compare");
    let cfg = toy_ring_config(&dir);
    let ring = dir.join("ring");
    assert!(bin()
        .args(["gen-ring", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&ring)
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args(["design", "--ring"])
        .arg(&ring)
        .arg("--out")
        .arg(dir.join("ctrl"))
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args(["design", "--ring"])
        .arg(&ring)
        .arg("--hypothetical")
        .arg("--out")
        .arg(dir.join("hyp"))
        .status()
        .unwrap()
        .success());
    assert!(dir.join("hyp/xdag.re.bcm").exists());
    let out = bin()
        .args(["analyze", "compare", "--ring"])
        .arg(&ring)
        .arg("--controller")
        .arg(dir.join("ctrl"))
        .arg("--hypothetical")
        .arg(dir.join("hyp"))
        .args([
            "--steps",
            "8192",
            "--segment",
            "2048",
            "--sensor",
            "1",
            "--out",
        ])
        .arg(dir.join("cmp"))
        .output()
        .unwrap();
    assert!(out.status.success());
    let summary: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.join("cmp/compare_summary.json")).unwrap()).unwrap();
    assert!(summary["ibm_final"].as_f64().unwrap() > 0.0);
    assert!(summary["ratio"].as_f64().unwrap().is_finite());
    // Header layout of the emitted curve file.
    let csv = fs::read_to_string(dir.join("cmp/ibm_compare.csv")).unwrap();
    assert!(csv.starts_with("freq_hz,present,hypothetical,open_loop,ratio"));
}

#[test]
fn simulate_accepts_external_disturbance_csv() {
    let dir = workdir("extdist");
    let cfg = toy_ring_config(&dir);
    let ring = dir.join("ring");
    assert!(bin()
        .args(["gen-ring", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&ring)
        .status()
        .unwrap()
        .success());
    assert!(bin()
        .args(["design", "--ring"])
        .arg(&ring)
        .arg("--out")
        .arg(dir.join("ctrl"))
        .status()
        .unwrap()
        .success());
    // 6 sensors in the toy ring; constant disturbance.
    let d = nalgebra::DMatrix::from_element(512, 6, 0.25);
    let dpath = dir.join("d.csv");
    xdctrl::io::write_dense_csv(&dpath, &d).unwrap();
    let status = bin()
        .args(["simulate", "--ring"])
        .arg(&ring)
        .arg("--controller")
        .arg(dir.join("ctrl"))
        .args(["--steps", "512", "--disturbance"])
        .arg(&dpath)
        .arg("--out")
        .arg(dir.join("trace"))
        .status()
        .unwrap();
    assert!(status.success());
    let y = xdctrl::io::read_dense_bin(&dir.join("trace/y.bin")).unwrap();
    assert_eq!(y.nrows(), 512);
    assert_eq!(y.ncols(), 6);
}
