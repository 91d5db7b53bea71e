use std::path::{Path, PathBuf};
use std::process::Command;

use roadlift::cli::{run, EXIT_INPUT, EXIT_NO_TRACKS, EXIT_OK};

const SMALL: &str = "[synth]\nn_signs = 3\nn_lights = 1\nn_circles = 1\nn_cones = 1\nn_frames = 30\npixel_noise_sigma = 0.5\n";

struct Dir {
    dir: tempfile::TempDir,
}

impl Dir {
    fn new() -> Dir {
        let d = Dir { dir: tempfile::tempdir().unwrap() };
        std::fs::write(d.p("cfg.toml"), SMALL).unwrap();
        d
    }

    fn p(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.p(name).to_string_lossy().into_owned()
    }

    fn run(&self, args: &[&str]) -> i32 {
        let cfg = self.s("cfg.toml");
        let mut all = vec!["roadlift", "--config", &cfg];
        all.extend_from_slice(args);
        run(all)
    }

    fn synth(&self) {
        assert_eq!(self.run(&["synth", "--out", &self.s("scene.json"), "--gt-out", &self.s("gt.json"), "--seed", "3"]), EXIT_OK);
    }
}

fn read(p: &Path) -> Vec<u8> {
    std::fs::read(p).unwrap()
}

#[test]
fn synth_annotate_eval() {
    let d = Dir::new();
    d.synth();
    assert_eq!(d.run(&["annotate", "--scene", &d.s("scene.json"), "--out", &d.s("a.json"), "--threads", "2"]), EXIT_OK);
    assert_eq!(d.run(&["eval", "--scene", &d.s("scene.json"), "--pred", &d.s("a.json"), "--out", &d.s("r.json")]), EXIT_OK);
    assert_eq!(
        d.run(&["eval", "--scene", &d.s("scene.json"), "--pred", &d.s("a.json"), "--ref", &d.s("gt.json"), "--out", &d.s("r2.json")]),
        EXIT_OK
    );
    assert_eq!(read(&d.p("r.json")), read(&d.p("r2.json")));
    let report: serde_json::Value = serde_json::from_slice(&read(&d.p("r.json"))).unwrap();
    assert_eq!(report["eval_3d"]["recall"], 1.0);
    assert_eq!(report["eval_3d"]["precision"], 1.0);
    assert!(report["eval_2d"]["mean_error"].as_f64().unwrap() < 1.5);
    assert_eq!(d.run(&["eval", "--scene", &d.s("scene.json"), "--pred", &d.s("a.json"), "--timestamp-filter-ms"]), EXIT_OK);
}

#[test]
fn outputs_are_deterministic() {
    let d = Dir::new();
    d.synth();
    let first = read(&d.p("scene.json"));
    d.synth();
    assert_eq!(read(&d.p("scene.json")), first);
    assert_eq!(d.run(&["annotate", "--scene", &d.s("scene.json"), "--out", &d.s("a1.json"), "--threads", "1"]), EXIT_OK);
    assert_eq!(d.run(&["annotate", "--scene", &d.s("scene.json"), "--out", &d.s("a4.json"), "--threads", "4"]), EXIT_OK);
    assert_eq!(read(&d.p("a1.json")), read(&d.p("a4.json")));
    assert_eq!(d.run(&["annotate", "--scene", &d.s("scene.json"), "--out", &d.s("l2.json"), "--no-robust-loss"]), EXIT_OK);
}

#[test]
fn overlay_matches_image_size() {
    let d = Dir::new();
    d.synth();
    let scene = roadlift::scene::load_scene(&read(&d.p("scene.json"))).unwrap();
    let f = &scene.frames()[5];
    let (w, h) = (f.intrinsics.width, f.intrinsics.height);
    let id = f.frame_id.to_string();
    for name in ["o.svg", "o.ppm"] {
        let code = d.run(&["overlay", "--scene", &d.s("scene.json"), "--annotations", &d.s("gt.json"), "--frame", &id, "--out", &d.s(name), "--gt"]);
        assert_eq!(code, EXIT_OK);
    }
    let svg = String::from_utf8(read(&d.p("o.svg"))).unwrap();
    assert!(svg.contains(&format!(r#"width="{w}" height="{h}""#)));
    assert!(svg.contains("<polygon"));
    let ppm = read(&d.p("o.ppm"));
    let header = format!("P6\n{w} {h}\n255\n");
    assert!(ppm.starts_with(header.as_bytes()));
    assert_eq!(ppm.len(), header.len() + (w * h * 3) as usize);
    assert_eq!(d.run(&["overlay", "--scene", &d.s("scene.json"), "--annotations", &d.s("gt.json"), "--frame", "999999", "--out", &d.s("x.svg")]), EXIT_INPUT);
}

#[test]
fn bad_input_exits_two() {
    let d = Dir::new();
    assert_eq!(d.run(&["annotate", "--scene", &d.s("missing.json"), "--out", &d.s("a.json")]), EXIT_INPUT);
    std::fs::write(d.p("junk.json"), "{").unwrap();
    assert_eq!(d.run(&["annotate", "--scene", &d.s("junk.json"), "--out", &d.s("a.json")]), EXIT_INPUT);
    d.synth();
    assert_eq!(d.run(&["annotate", "--scene", &d.s("scene.json"), "--out", &d.s("scene.json")]), EXIT_INPUT);
    std::fs::write(d.p("bad.toml"), "[solver]\nhuber_delta = -1.0\n").unwrap();
    let bad = d.s("bad.toml");
    assert_eq!(run(["roadlift", "--config", &bad, "annotate", "--scene", &d.s("scene.json"), "--out", &d.s("a.json")]), EXIT_INPUT);
    std::fs::write(d.p("typo.toml"), "[solvr]\n").unwrap();
    let typo = d.s("typo.toml");
    assert_eq!(run(["roadlift", "--config", &typo, "synth", "--out", &d.s("s.json")]), EXIT_INPUT);
    assert_eq!(run(["roadlift", "annotate"]), EXIT_INPUT);
    assert_eq!(run(["roadlift", "--help"]), EXIT_OK);
}

#[test]
fn no_valid_tracks_exits_three() {
    let d = Dir::new();
    d.synth();
    std::fs::write(d.p("strict.toml"), "[association]\nmin_support_points = 1000000\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_roadlift"))
        .args(["--config", &d.s("strict.toml"), "annotate", "--scene", &d.s("scene.json"), "--out", &d.s("a.json")])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(EXIT_NO_TRACKS));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no valid tracks"));
    assert!(!d.p("a.json").exists());
}
