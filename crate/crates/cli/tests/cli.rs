use std::io::{BufRead, BufReader};
use std::path::Path;
use std::process::{Command, Output, Stdio};

use serde_json::Value;

fn snowgt(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_snowgt"))
        .args(args)
        .output()
        .expect("spawn snowgt")
}

fn ok(args: &[&str]) -> Output {
    let out = snowgt(args);
    assert!(
        out.status.success(),
        "snowgt {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn pngs(dir: &Path) -> usize {
    std::fs::read_dir(dir)
        .unwrap()
        .filter(|e| {
            e.as_ref()
                .unwrap()
                .path()
                .extension()
                .is_some_and(|x| x == "png")
        })
        .count()
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn synth_snow_writes_frames_masks_and_particles() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("snow");
    ok(&[
        "synth",
        "snow",
        "--output",
        s(&out),
        "--width",
        "48",
        "--height",
        "32",
        "--frames",
        "6",
        "--seed",
        "3",
    ]);
    assert_eq!(pngs(&out), 6);
    assert_eq!(pngs(&out.join("masks")), 6);
    assert_eq!(pngs(&out.join("clean")), 6);
    let particles = read_json(&out.join("particles.json"));
    let list = particles.as_array().unwrap();
    assert!(!list.is_empty());
    for p in list {
        for key in ["x", "y", "size", "opacity"] {
            assert!(p[key].is_number(), "particle lacks {key}: {p}");
        }
    }
}

#[test]
fn synth_rain_records_particles_per_frame() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("rain");
    ok(&[
        "synth",
        "rain",
        "--output",
        s(&out),
        "--width",
        "40",
        "--height",
        "40",
        "--frames",
        "3",
        "--channels",
        "1",
    ]);
    assert_eq!(pngs(&out), 3);
    assert_eq!(pngs(&out.join("masks")), 3);
    let particles = read_json(&out.join("particles.json"));
    let frames = particles.as_array().unwrap();
    assert_eq!(frames.len(), 3);
    assert!(frames
        .iter()
        .all(|f| f.as_array().is_some_and(|ps| !ps.is_empty())));
}

#[test]
fn desnow_and_exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    ok(&[
        "synth",
        "snow",
        "--output",
        s(&input),
        "--width",
        "24",
        "--height",
        "16",
        "--frames",
        "5",
    ]);
    let output = tmp.path().join("out");
    let args = [
        "desnow",
        "--input",
        s(&input),
        "--output",
        s(&output),
        "--mode",
        "lateral",
        "--q",
        "fixed:3",
        "--band",
        "0.0:0.2",
        "--drop-noise",
    ];
    ok(&args);
    assert_eq!(pngs(&output), 5);

    let missing = snowgt(&[
        "desnow",
        "--input",
        s(&tmp.path().join("nope")),
        "--output",
        s(&output),
    ]);
    assert_eq!(missing.status.code(), Some(1));
    let bad_q = snowgt(&[
        "desnow",
        "--input",
        s(&input),
        "--output",
        s(&output),
        "--q",
        "energy:2",
    ]);
    assert_eq!(bad_q.status.code(), Some(1));
    assert_eq!(snowgt(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(snowgt(&["--help"]).status.code(), Some(0));
}

#[test]
fn desnow_rejects_too_few_frames() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    ok(&[
        "synth",
        "snow",
        "--output",
        s(&input),
        "--width",
        "24",
        "--height",
        "16",
        "--frames",
        "4",
    ]);
    for f in ["frame_000001.png", "frame_000002.png", "frame_000003.png"] {
        std::fs::remove_file(input.join(f)).unwrap();
    }
    let out = snowgt(&[
        "desnow",
        "--input",
        s(&input),
        "--output",
        s(&tmp.path().join("out")),
    ]);
    assert_eq!(
        out.status.code(),
        Some(1),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn eval_report_schema() {
    let tmp = tempfile::tempdir().unwrap();
    let set = tmp.path().join("set");
    ok(&[
        "synth",
        "snow",
        "--output",
        s(&set),
        "--width",
        "32",
        "--height",
        "24",
        "--frames",
        "4",
    ]);
    let report = tmp.path().join("r/report.json");
    ok(&[
        "eval",
        "--pred",
        s(&set),
        "--gt",
        s(&set.join("clean")),
        "--degraded",
        s(&set),
        "--report",
        s(&report),
    ]);
    let r = read_json(&report);
    let keys: Vec<_> = r.as_object().unwrap().keys().cloned().collect();
    assert_eq!(keys, ["mean", "per_image", "weights"]);
    let rows = r["per_image"].as_array().unwrap();
    assert_eq!(rows.len(), 4);
    for key in ["name", "psnr", "ssim", "f_measure"] {
        assert!(!rows[0][key].is_null(), "missing {key}");
    }
    assert!(r["mean"]["ssim"].is_number());
    assert!(r["weights"]["lambda"].is_number());

    // identical directories: PSNR is the string "inf"
    let same = snowgt(&["eval", "--pred", s(&set), "--gt", s(&set)]);
    let r: Value = serde_json::from_slice(&same.stdout).unwrap();
    assert_eq!(r["mean"]["psnr"], "inf");
}

fn dataset_with_two_videos(root: &Path) -> std::path::PathBuf {
    let ds = root.join("ds");
    let mut sources = Vec::new();
    for (i, name) in ["north", "south"].iter().enumerate() {
        let dir = root.join(name);
        let seed = (10 + i).to_string();
        ok(&[
            "synth",
            "snow",
            "--output",
            s(&dir),
            "--width",
            "32",
            "--height",
            "24",
            "--frames",
            "6",
            "--seed",
            &seed,
        ]);
        sources.push(dir);
    }
    let mut args = vec!["ingest", "--dataset", s(&ds)];
    args.extend(sources.iter().map(|p| s(p)));
    ok(&args);
    ok(&[
        "candidates",
        "--dataset",
        s(&ds),
        "--q",
        "energy:0.999",
        "--q",
        "fixed:2",
    ]);
    ds
}

#[test]
fn local_curation_flow_matches_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset_with_two_videos(tmp.path());

    let list: Value = serde_json::from_slice(&ok(&["list", "--dataset", s(&ds)]).stdout).unwrap();
    let ids: Vec<_> = list
        .as_array()
        .unwrap()
        .iter()
        .map(|v| v["id"].as_str().unwrap().to_string())
        .collect();
    assert_eq!(ids.len(), 2);
    assert!(list
        .as_array()
        .unwrap()
        .iter()
        .all(|v| v["status"] == "pending"));

    // a second ingest of the same source is a conflict
    let again = snowgt(&["ingest", "--dataset", s(&ds), s(&tmp.path().join("north"))]);
    assert_eq!(again.status.code(), Some(1));

    let nothing = snowgt(&["export", "--dataset", s(&ds)]);
    assert_eq!(nothing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&nothing.stderr).contains("nothing selected"));

    ok(&[
        "select",
        "--dataset",
        s(&ds),
        &ids[0],
        "3",
        "--note",
        "clear",
    ]);
    ok(&["reject", "--dataset", s(&ds), &ids[1]]);
    let out_dir = tmp.path().join("pairs");
    let ack: Value =
        serde_json::from_slice(&ok(&["export", "--dataset", s(&ds), "--out", s(&out_dir)]).stdout)
            .unwrap();
    assert_eq!(ack["pairs"], 1);

    let exported = read_json(Path::new(ack["report_path"].as_str().unwrap()));
    let eval: Value = serde_json::from_slice(
        &ok(&[
            "eval",
            "--pred",
            s(&out_dir.join("snowy")),
            "--gt",
            s(&out_dir.join("gt")),
        ])
        .stdout,
    )
    .unwrap();
    let (a, b) = (&exported["per_image"][0], &eval["per_image"][0]);
    assert_eq!(a["name"], b["name"]);
    for key in ["psnr", "ssim", "l1", "gradient_l1", "l_ssim"] {
        let (x, y) = (a[key].as_f64().unwrap(), b[key].as_f64().unwrap());
        assert!((x - y).abs() <= 1e-9, "{key}: {x} vs {y}");
    }
}

struct Service(std::process::Child);

impl Drop for Service {
    fn drop(&mut self) {
        self.0.kill().ok();
        self.0.wait().ok();
    }
}

fn serve(ds: &Path) -> (Service, String) {
    let mut child = Command::new(env!("CARGO_BIN_EXE_snowgt"))
        .args(["serve", "--dataset", s(ds), "--bind", "127.0.0.1:0"])
        .stderr(Stdio::piped())
        .stdout(Stdio::null())
        .spawn()
        .unwrap();
    let mut line = String::new();
    BufReader::new(child.stderr.take().unwrap())
        .read_line(&mut line)
        .unwrap();
    let url = line.trim().rsplit(' ').next().unwrap().to_string();
    assert!(url.starts_with("http://"), "unexpected banner {line:?}");
    (Service(child), url)
}

#[test]
fn remote_commands_go_through_the_service() {
    let tmp = tempfile::tempdir().unwrap();
    let ds = dataset_with_two_videos(tmp.path());
    let (service, url) = serve(&ds);

    let list: Value = serde_json::from_slice(&ok(&["list", "--server", &url]).stdout).unwrap();
    let id = list[0]["id"].as_str().unwrap().to_string();
    ok(&["select", "--server", &url, &id, "2"]);
    let missing = snowgt(&["select", "--server", &url, "ghost", "0"]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("not_found"));
    let ack: Value = serde_json::from_slice(&ok(&["export", "--server", &url]).stdout).unwrap();
    assert_eq!(ack["pairs"], 1);
    drop(service);

    // the service persisted before answering
    let list: Value = serde_json::from_slice(&ok(&["list", "--dataset", s(&ds)]).stdout).unwrap();
    assert_eq!(list[0]["status"], "selected");
    assert!(ds.join("export/report.json").is_file());
}

#[test]
fn target_is_required_and_exclusive() {
    assert_eq!(snowgt(&["list"]).status.code(), Some(1));
    assert_eq!(
        snowgt(&["list", "--dataset", "x", "--server", "y"])
            .status
            .code(),
        Some(1)
    );
}
