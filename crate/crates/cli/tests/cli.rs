use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use smokeflow::flo;
use smokeflow::imageio;
use smokeflow_core::{FlowField, Frame, Vec2};

fn smokeflow(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_smokeflow"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok_json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "exit {:?}, stderr: {}",
        out.status,
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn err_json(out: &Output) -> Value {
    assert!(!out.status.success());
    let text = String::from_utf8_lossy(&out.stderr);
    serde_json::from_str(text.lines().last().unwrap()).expect("stderr is JSON")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth_small(dir: &Path, extra: &[&str]) -> Value {
    let mut args = vec![
        "synth", "--width", "64", "--height", "64", "--blobs", "3", "--seed", "7", "--out-dir",
    ];
    args.push(s(dir));
    args.extend_from_slice(extra);
    ok_json(&smokeflow(&args))
}

#[test]
fn synth_is_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    synth_small(a.path(), &["--kind", "translate", "--tx", "3"]);
    synth_small(b.path(), &["--kind", "translate", "--tx", "3"]);
    for name in ["f1.png", "f2.png", "gt.flo", "synth.json"] {
        assert_eq!(
            std::fs::read(a.path().join(name)).unwrap(),
            std::fs::read(b.path().join(name)).unwrap(),
            "{name}"
        );
    }
    let gt = flo::read_flo(a.path().join("gt.flo")).unwrap();
    assert!(gt.iter().all(|d| d == Vec2::new(3.0, 0.0)));
}

#[test]
fn synth_descriptor_records_degrees() {
    let d = tempfile::tempdir().unwrap();
    let desc = synth_small(d.path(), &["--kind", "rotate", "--angle", "5"]);
    assert_eq!(desc["kind"], "rotate");
    assert_eq!(desc["params"]["angle_degrees"], 5.0);
    assert!((desc["params"]["angle_radians"].as_f64().unwrap() - 5f64.to_radians()).abs() < 1e-15);
    assert_eq!(desc["seed"], 7);
}

#[test]
fn estimate_writes_flow_and_report() {
    let d = tempfile::tempdir().unwrap();
    synth_small(d.path(), &["--kind", "translate", "--tx", "2"]);
    let out = d.path().join("out.flo");
    let csv = d.path().join("sparse.csv");
    let skel = d.path().join("skel");
    let report = ok_json(&smokeflow(&[
        "estimate",
        "--frame1",
        s(&d.path().join("f1.png")),
        "--frame2",
        s(&d.path().join("f2.png")),
        "--out",
        s(&out),
        "--scales",
        "1,2,4",
        "--dump-sparse",
        s(&csv),
        "--dump-skeleton",
        s(&skel),
        "--color",
        s(&d.path().join("color.png")),
        "--warped",
        s(&d.path().join("warped.png")),
    ]));
    assert_eq!(report["status"], "ok");
    assert_eq!(report["mode"], "full");
    assert_eq!(report["config"]["scales"], serde_json::json!([1.0, 2.0, 4.0]));
    assert_eq!(report["config"]["attraction"]["sigma_v"], 1.0);
    assert_eq!(report["config_hash"].as_str().unwrap().len(), 64);
    for key in ["segmentation_ms", "skeletons_ms", "sparse_flow_ms", "interpolation_ms", "refinement_ms"] {
        assert!(report["timings"][key].as_f64().unwrap() >= 0.0, "{key}");
    }
    let samples = report["counts"]["sparse_samples"].as_u64().unwrap();
    assert!(samples > 0);

    let flow = flo::read_flo(&out).unwrap();
    assert_eq!(flow.dims(), (64, 64));
    let text = std::fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x,y,u,v,stability"));
    assert_eq!(lines.count() as u64, samples);
    assert!(skel.join("skeleton1.png").exists() && skel.join("skeleton2.png").exists());
    assert_eq!(imageio::read_frame(d.path().join("warped.png")).unwrap().dims(), (64, 64));
}

#[test]
fn no_refine_reports_no_ef_mode() {
    let d = tempfile::tempdir().unwrap();
    synth_small(d.path(), &["--kind", "translate", "--ty", "-2"]);
    let report_path = d.path().join("report.json");
    let out = smokeflow(&[
        "estimate",
        "--frame1",
        s(&d.path().join("f1.png")),
        "--frame2",
        s(&d.path().join("f2.png")),
        "--out",
        s(&d.path().join("o.flo")),
        "--no-refine",
        "--report",
        s(&report_path),
    ]);
    assert!(out.status.success());
    assert!(out.stdout.is_empty());
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&report_path).unwrap()).unwrap();
    assert_eq!(report["mode"], "noEF");
    assert_eq!(report["config"]["refine"]["enabled"], false);
    assert_eq!(report["timings"]["refinement_ms"], 0.0);
    assert!(report["energies"].as_array().unwrap().is_empty());
}

#[test]
fn config_file_is_overridden_by_flags() {
    let d = tempfile::tempdir().unwrap();
    synth_small(d.path(), &["--kind", "translate", "--tx", "1"]);
    let cfg = d.path().join("c.toml");
    std::fs::write(&cfg, "scales = [1.0, 2.0, 4.0]\n[attraction]\nsigma_spatial = 6.0\neta = 0.2\n[interp]\nlambda = 3.0\n").unwrap();
    let report = ok_json(&smokeflow(&[
        "estimate",
        "--frame1",
        s(&d.path().join("f1.png")),
        "--frame2",
        s(&d.path().join("f2.png")),
        "--out",
        s(&d.path().join("o.flo")),
        "--config",
        s(&cfg),
        "--sigma-spatial",
        "4",
        "--no-refine",
    ]));
    let c = &report["config"];
    assert_eq!(c["attraction"]["sigma_spatial"], 4.0);
    assert_eq!(c["attraction"]["eta"], 0.2);
    assert_eq!(c["attraction"]["neighbor_radius"], 12.0);
    assert_eq!(c["interp"]["lambda"], 3.0);
}

#[test]
fn dark_frames_give_zero_flow_with_warning() {
    let d = tempfile::tempdir().unwrap();
    let black = Frame::from_u8(16, 16, &[0; 256]).unwrap();
    let p = d.path().join("black.png");
    imageio::write_frame(&p, &black).unwrap();
    let out = d.path().join("o.flo");
    let report = ok_json(&smokeflow(&[
        "estimate",
        "--frame1",
        s(&p),
        "--frame2",
        s(&p),
        "--out",
        s(&out),
    ]));
    assert_eq!(report["status"], "no-smoke");
    assert!(report["warning"].is_string());
    assert_eq!(flo::read_flo(&out).unwrap(), FlowField::zeros(16, 16));
}

#[test]
fn mismatched_frames_fail_with_json_error() {
    let d = tempfile::tempdir().unwrap();
    let a = d.path().join("a.png");
    let b = d.path().join("b.png");
    imageio::write_frame(&a, &Frame::from_u8(4, 4, &[9; 16]).unwrap()).unwrap();
    imageio::write_frame(&b, &Frame::from_u8(5, 4, &[9; 20]).unwrap()).unwrap();
    let out = smokeflow(&[
        "estimate",
        "--frame1",
        s(&a),
        "--frame2",
        s(&b),
        "--out",
        s(&d.path().join("o.flo")),
    ]);
    assert_eq!(err_json(&out)["error"]["kind"], "dimension-mismatch");
}

#[test]
fn unknown_flags_and_missing_files_are_rejected() {
    let out = smokeflow(&["estimate", "--bogus"]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(err_json(&out)["error"]["kind"], "usage");

    let out = smokeflow(&["viz", "/nonexistent.flo", "/tmp/never.png"]);
    assert_eq!(err_json(&out)["error"]["kind"], "io");
}

#[test]
fn viz_of_zero_flow_is_white() {
    let d = tempfile::tempdir().unwrap();
    let f = d.path().join("z.flo");
    let png = d.path().join("z.png");
    flo::write_flo(&f, &FlowField::zeros(5, 3)).unwrap();
    let out = smokeflow(&["viz", s(&f), s(&png)]);
    assert!(out.status.success());
    let img = image::open(&png).unwrap().to_rgb8();
    assert_eq!(img.dimensions(), (5, 3));
    assert!(img.as_raw().iter().all(|&b| b == 255));
}

#[test]
fn eval_of_identical_flows() {
    let d = tempfile::tempdir().unwrap();
    let f = d.path().join("f.flo");
    flo::write_flo(&f, &FlowField::constant(6, 4, Vec2::new(1.0, -2.0))).unwrap();
    let report = ok_json(&smokeflow(&["eval", "--flow", s(&f), "--gt", s(&f)]));
    assert_eq!(report["ee_mean"], 0.0);
    assert_eq!(report["ee_max"], 0.0);
    assert_eq!(report["ae_mean"], 0.0);
    assert_eq!(report["region"], "full");
    assert!(report["ie"].is_null());
    assert_eq!(report["params_hash"].as_str().unwrap().len(), 64);
}

#[test]
fn eval_with_frames_reports_ie_and_ratio() {
    let d = tempfile::tempdir().unwrap();
    synth_small(d.path(), &["--kind", "translate", "--tx", "3"]);
    let gt = d.path().join("gt.flo");
    let (f1, f2) = (d.path().join("f1.png"), d.path().join("f2.png"));
    let report = ok_json(&smokeflow(&[
        "eval",
        "--flow",
        s(&gt),
        "--gt",
        s(&gt),
        "--frame1",
        s(&f1),
        "--frame2",
        s(&f2),
        "--region",
        "mask",
        "--normalize-ie",
        "0.5",
    ]));
    let ie = report["ie"].as_f64().unwrap();
    assert!(ie < 0.02, "{ie}");
    assert_eq!(report["ie_ratio"].as_f64().unwrap(), ie / 0.5);
    assert_eq!(report["region"], "mask");

    let out = smokeflow(&["eval", "--flow", s(&gt), "--region", "mask", "--gt", s(&gt)]);
    assert_eq!(err_json(&out)["error"]["kind"], "usage");
}
