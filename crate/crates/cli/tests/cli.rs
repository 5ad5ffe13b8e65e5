use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn edgesplat(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_edgesplat"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(dir: &Path, seed: u64) {
    let out = edgesplat(&[
        "synth", "--out", s(dir), "--gaussians", "6", "--cameras", "10", "--resolution", "32", "--seed", &seed.to_string(),
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
}

const QUICK: &[&str] = &[
    "--threads", "1",
    "--train.total_iters", "60",
    "--train.log_interval", "10",
    "--train.eval_interval", "30",
    "--train.init_count", "12",
    "--train.checkpoint_iters", "[30]",
    "--densify.start_iter", "15",
    "--densify.interval", "15",
];

fn train(scene: &Path, run: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["train", "--scene", s(scene), "--run-dir", s(run)];
    args.extend_from_slice(QUICK);
    args.extend_from_slice(extra);
    edgesplat(&args)
}

struct Fixture {
    _tmp: tempfile::TempDir,
    scene: PathBuf,
    run: PathBuf,
}

fn trained() -> Fixture {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    let run = tmp.path().join("run");
    synth(&scene, 1);
    let out = train(&scene, &run, &[]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    Fixture { _tmp: tmp, scene, run }
}

#[test]
fn synth_is_deterministic_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (tmp.path().join("a"), tmp.path().join("b"), tmp.path().join("c"));
    synth(&a, 9);
    synth(&b, 9);
    synth(&c, 10);
    for f in ["manifest.txt", "reference.ckpt", "images/cam_0005.ppm"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    assert_ne!(fs::read(a.join("reference.ckpt")).unwrap(), fs::read(c.join("reference.ckpt")).unwrap());
}

#[test]
fn train_writes_a_complete_run_directory() {
    let f = trained();
    for name in ["config.toml", "VERSION", "metrics.csv", "events.log", "final.ckpt", "final.state", "eval.csv"] {
        assert!(f.run.join(name).is_file(), "missing {name}");
    }
    assert!(f.run.join("checkpoints/iter_000030.ckpt").is_file());
    assert!(f.run.join("checkpoints/iter_000030.state").is_file());
    assert!(f.run.join("renders/cam_0000.ppm").is_file());
    let metrics = fs::read_to_string(f.run.join("metrics.csv")).unwrap();
    let lines: Vec<&str> = metrics.lines().collect();
    assert_eq!(lines[0], "iter,L,L1,L_geo,L_app,f,cloud_size,train_psnr,test_psnr");
    assert_eq!(lines.len(), 7);
    assert!(lines[3].starts_with("30,") && !lines[3].ends_with(','));
    assert!(lines[1].ends_with(",,"));
    let events = fs::read_to_string(f.run.join("events.log")).unwrap();
    assert!(events.lines().all(|l| l.starts_with("densify iter=")));
    assert!(fs::read_to_string(f.run.join("config.toml")).unwrap().contains("mode = \"full\""));
}

#[test]
fn single_threaded_runs_are_byte_identical() {
    let f = trained();
    let again = f.run.with_file_name("again");
    assert_eq!(code(&train(&f.scene, &again, &[])), 0);
    assert_eq!(fs::read(f.run.join("metrics.csv")).unwrap(), fs::read(again.join("metrics.csv")).unwrap());
    assert_eq!(fs::read(f.run.join("final.ckpt")).unwrap(), fs::read(again.join("final.ckpt")).unwrap());
}

#[test]
fn resume_reproduces_the_uninterrupted_tail() {
    let f = trained();
    let copy = f.run.with_file_name("resumed");
    fs::create_dir_all(copy.join("checkpoints")).unwrap();
    for name in ["metrics.csv", "checkpoints/iter_000030.ckpt", "checkpoints/iter_000030.state"] {
        fs::copy(f.run.join(name), copy.join(name)).unwrap();
    }
    let ckpt = copy.join("checkpoints/iter_000030.ckpt");
    let out = train(&f.scene, &copy, &["--resume", s(&ckpt)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        fs::read_to_string(f.run.join("metrics.csv")).unwrap(),
        fs::read_to_string(copy.join("metrics.csv")).unwrap()
    );
    assert_eq!(fs::read(f.run.join("final.ckpt")).unwrap(), fs::read(copy.join("final.ckpt")).unwrap());
}

#[test]
fn render_and_eval() {
    let f = trained();
    let ckpt = f.run.join("final.ckpt");
    let renders = f.run.with_file_name("renders");
    let out = edgesplat(&["render", "--checkpoint", s(&ckpt), "--scene", s(&f.scene), "--views", "1,2", "--out", s(&renders), "--bits", "8"]);
    assert_eq!(code(&out), 0);
    let img = fs::read(renders.join("cam_0002.ppm")).unwrap();
    assert!(img.starts_with(b"P6\n32 32\n255\n"));
    assert!(!renders.join("cam_0000.ppm").exists());

    let report_dir = f.run.with_file_name("report");
    let out = edgesplat(&["eval", "--scene", s(&f.scene), "--checkpoint", s(&ckpt), "--out", s(&report_dir)]);
    assert_eq!(code(&out), 0);
    let csv = fs::read_to_string(report_dir.join("eval.csv")).unwrap();
    assert_eq!(csv, fs::read_to_string(f.run.join("eval.csv")).unwrap());
    assert!(csv.starts_with("view,psnr,ssim\n"));

    assert_eq!(code(&edgesplat(&["eval", "--scene", s(&f.scene), "--run", s(&f.run)])), 0);
}

#[test]
fn bad_input_exits_with_usage_code() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, 2);
    let (x, y, z) = (tmp.path().join("x"), tmp.path().join("y"), tmp.path().join("z"));
    let bad = [
        vec!["synth", "--out", s(&x), "--rig", "spiral"],
        vec!["synth", "--out", s(&y), "--resolution", "4"],
        vec!["train", "--scene", s(&scene), "--mode", "nope"],
        vec!["train", "--scene", s(&scene), "--train.no_such_key", "1"],
        vec!["train", "--scene", s(&scene), "--schedule.m", "1.5"],
        vec!["render", "--checkpoint", "x.ckpt", "--scene", s(&scene), "--out", "o", "--train.seed", "1"],
        vec!["frobnicate"],
        vec!["--threads", "0", "synth", "--out", s(&z)],
    ];
    for args in bad {
        let out = edgesplat(&args);
        assert_eq!(code(&out), 2, "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn failed_runs_exit_with_one() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    synth(&scene, 3);
    let missing = tmp.path().join("missing");
    let out = edgesplat(&["train", "--scene", s(&missing), "--run-dir", s(&tmp.path().join("r"))]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing"));
    let out = edgesplat(&["eval", "--scene", s(&scene), "--checkpoint", s(&tmp.path().join("none.ckpt"))]);
    assert_eq!(code(&out), 1);
    let out = edgesplat(&["render", "--checkpoint", s(&tmp.path().join("none.ckpt")), "--scene", s(&scene), "--out", s(&tmp.path().join("o")), "--views", "99"]);
    assert_eq!(code(&out), 2);
}

#[test]
fn ablate_writes_per_seed_and_mean_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let scene = tmp.path().join("scene");
    let out_dir = tmp.path().join("abl");
    synth(&scene, 4);
    let out = edgesplat(&[
        "ablate", "--scene", s(&scene), "--out", s(&out_dir), "--seeds", "0,1",
        "--train.total_iters", "30", "--train.init_count", "8", "--densify.start_iter", "10", "--densify.interval", "10",
    ]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let mean = fs::read_to_string(out_dir.join("ablation.csv")).unwrap();
    let modes: Vec<&str> = mean.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(modes, ["baseline", "geo", "geo+opacity", "full"]);
    for seed in ["seed0.csv", "seed1.csv", "seed1-geo-opacity.ckpt"] {
        assert!(out_dir.join(seed).is_file(), "missing {seed}");
    }
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("PSNR(dB)") && stdout.contains("geo+opacity"));
}
