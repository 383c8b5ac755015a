use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use candle_core::{DType, Device};
use hypsam_cli::commands::{self, plot};
use hypsam_cli::{split_dotted_args, RunConfig, MANIFEST_FILE, MAPS_DIR, VERSION};
use hypsam_core::data::synthetic::{synthetic_set, write_split};
use hypsam_core::data::{decode_image, list_images, prepare, Normalization};
use hypsam_core::metrics::{aggregate, read_report, score_image, write_report};
use hypsam_core::p2rnet::SelectorMode;
use hypsam_core::SaliencyMap;
use hypsam_dfnet::{checkpoint, DfNet, DfNetConfig};

fn hypsam(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hypsam"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a small dataset and a config pointing at it; returns the config path.
fn setup(dir: &Path, n: usize, size: usize) -> PathBuf {
    let root = dir.join("data");
    write_split(&root, "test", &synthetic_set(n, size, 9)).unwrap();
    let mut cfg = RunConfig::default();
    cfg.data.root = root;
    cfg.data.resolution = 32;
    cfg.model = DfNetConfig::tiny(32);
    cfg.p2rnet.backend = "stub".into();
    cfg.p2rnet.selector = SelectorMode::Rgb;
    cfg.p2rnet.scorer = "none".into();
    cfg.train.batch = 2;
    let path = dir.join("run.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read(&p).unwrap(),
            )
        })
        .collect();
    v.sort();
    v
}

#[test]
fn config_round_trip_is_a_fixed_point() {
    let mut cfg = RunConfig::default();
    cfg.train.max_steps = Some(7);
    cfg.p2rnet.tau = 0.02;
    cfg.data.val_split = Some("val".into());
    for c in [RunConfig::default(), cfg] {
        let text = c.to_toml();
        let back = RunConfig::from_toml(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_toml(), text);
        assert_eq!(back.sha256(), c.sha256());
    }
}

#[test]
fn defaults_follow_the_published_training_setup() {
    let c = RunConfig::default();
    assert_eq!((c.train.epochs, c.train.batch), (50, 8));
    assert_eq!((c.train.lr_backbone, c.train.lr_head), (5e-3, 5e-2));
    assert_eq!(c.model.resolution, 384);
    assert_eq!((c.p2rnet.tau, c.p2rnet.theta), (0.01, 0.85));
    assert_eq!(c.eval.thresholds, 256);
    c.validate().unwrap();
}

#[test]
fn dotted_flags_become_overrides() {
    let args = [
        "hypsam",
        "--p2rnet.tau",
        "0.02",
        "eval",
        "--train.epochs=3",
        "--pred",
        "a.b",
        "--data.root",
        "x/y",
    ];
    let (rest, ov) = split_dotted_args(args.iter().map(|s| s.to_string()).collect());
    assert_eq!(rest, ["hypsam", "eval", "--pred", "a.b"]);
    let cfg = RunConfig::load(None, &ov).unwrap();
    assert_eq!(cfg.p2rnet.tau, 0.02);
    assert_eq!(cfg.train.epochs, 3);
    assert_eq!(cfg.data.root, PathBuf::from("x/y"));
}

#[test]
fn bad_configs_exit_with_code_2() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("c.toml");
    std::fs::write(&cfg, "[train]\nepochz = 3\n").unwrap();
    let pred = s(tmp.path());
    for args in [
        vec!["--config", s(&cfg), "eval", "--pred", pred],
        vec!["eval", "--pred", pred, "--train.epochs", "0"],
        vec!["eval", "--pred", pred, "--train.lr_head=-1"],
        vec!["eval", "--pred", pred, "--data.resolution", "256"],
        vec!["eval", "--pred", pred, "--p2rnet.strategy", "median"],
        vec!["eval", "--pred", pred, "--p2rnet.backend", "sam_vit_z"],
        vec!["eval", "--pred", pred, "--eval.thresholds", "100"],
        vec!["eval", "--pred", pred, "--set", "nokey"],
        vec!["frobnicate"],
    ] {
        let out = hypsam(&args);
        assert_eq!(
            out.status.code(),
            Some(2),
            "{args:?}: {}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
}

#[test]
fn version_string_carries_a_revision() {
    assert!(VERSION.starts_with("v0.1.0-g"), "{VERSION}");
    let out = hypsam(&["--version"]);
    assert_eq!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stdout).contains(VERSION));
}

#[test]
fn eval_of_ground_truth_is_perfect_and_missing_files_are_named() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), 6, 40);
    let gt = tmp.path().join("data/test/GT");
    let out = tmp.path().join("report");
    let r = hypsam(&[
        "--config",
        s(&cfg),
        "eval",
        "--pred",
        s(&gt),
        "--out",
        s(&out),
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let report = read_report(&out).unwrap();
    assert_eq!(report.f_max, 1.0);
    assert_eq!(report.mae, 0.0);
    assert!((report.s_m - 1.0).abs() < 1e-3);
    for f in ["summary.csv", "per_image.csv", "pr.csv", MANIFEST_FILE] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out.join(MANIFEST_FILE)).unwrap()).unwrap();
    let loaded = RunConfig::load(Some(&cfg), &[]).unwrap();
    assert_eq!(manifest["config_sha256"], loaded.sha256());
    assert_eq!(manifest["version"], VERSION);
    assert_eq!(manifest["seed"], loaded.train.seed);

    let partial = tmp.path().join("partial");
    std::fs::create_dir_all(&partial).unwrap();
    let names = list_images(&gt).unwrap();
    for n in &names[1..] {
        std::fs::copy(
            gt.join(format!("{n}.png")),
            partial.join(format!("{n}.png")),
        )
        .unwrap();
    }
    let r = hypsam(&[
        "--config",
        s(&cfg),
        "eval",
        "--pred",
        s(&partial),
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains(&names[0]));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let tmp = tempfile::tempdir().unwrap();
    let r = hypsam(&[
        "eval",
        "--pred",
        s(tmp.path()),
        "--data.root",
        s(&tmp.path().join("nope")),
    ]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn infer_writes_one_deterministic_map_per_image() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg_path = setup(tmp.path(), 5, 40);
    let cfg = RunConfig::load(Some(&cfg_path), &[]).unwrap();
    let net = DfNet::new(cfg.model.clone(), 1, DType::F32, &Device::Cpu, None).unwrap();
    let ckpt = tmp.path().join("m.safetensors");
    checkpoint::save(&net, &ckpt).unwrap();

    let run = |out: &Path| {
        let r = hypsam(&[
            "--config",
            s(&cfg_path),
            "infer",
            "--checkpoint",
            s(&ckpt),
            "--out",
            s(out),
        ]);
        assert_eq!(
            r.status.code(),
            Some(0),
            "{}",
            String::from_utf8_lossy(&r.stderr)
        );
        dir_bytes(&out.join(MAPS_DIR))
    };
    let a = run(&tmp.path().join("a"));
    let b = run(&tmp.path().join("b"));
    assert_eq!(a.len(), 5);
    assert_eq!(a, b);

    // Saved maps rescore within 8-bit quantization of the in-memory maps.
    let samples = synthetic_set(5, 40, 9);
    for s in &samples {
        let gt = s.gt.as_ref().unwrap();
        let mem = net
            .predict(&prepare(s, 32, &Normalization::IMAGENET))
            .unwrap()
            .sal_fused
            .resize(40, 40);
        let png = decode_image(
            &tmp.path()
                .join("a")
                .join(MAPS_DIR)
                .join(format!("{}.png", s.name)),
        )
        .unwrap();
        let disk = SaliencyMap::from_gray(&png.to_luma8());
        assert_eq!(disk.dim(), gt.dim());
        let (x, y) = (
            score_image(&s.name, &mem, gt).unwrap(),
            score_image(&s.name, &disk, gt).unwrap(),
        );
        assert!(
            (x.mae - y.mae).abs() <= 1.0 / 255.0,
            "{} vs {}",
            x.mae,
            y.mae
        );
    }

    let r = hypsam(&[
        "--config",
        s(&cfg_path),
        "infer",
        "--checkpoint",
        s(&ckpt),
        "--out",
        s(&tmp.path().join("c")),
        "--model.channels",
        "24",
    ]);
    assert_eq!(r.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&r.stderr).contains("channels"));
}

#[test]
fn refine_copies_through_when_the_backend_is_missing() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), 4, 40);
    let coarse = tmp.path().join("data/test/GT");
    let empty_cache = tmp.path().join("cache");
    let out = tmp.path().join("r");
    let base = [
        "--config",
        s(&cfg),
        "--cache",
        s(&empty_cache),
        "refine",
        "--coarse",
        s(&coarse),
        "--out",
        s(&out),
    ];
    let mut args = base.to_vec();
    args.extend(["--p2rnet.backend", "sam_vit_b"]);
    let r = hypsam(&args);
    assert_eq!(
        r.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    assert_eq!(dir_bytes(&out.join(MAPS_DIR)), dir_bytes(&coarse));
    let log = std::fs::read_to_string(out.join(commands::refine::LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 4);

    args.push("--allow-fallback");
    assert_eq!(hypsam(&args).status.code(), Some(0));
    assert_eq!(dir_bytes(&out.join(MAPS_DIR)), dir_bytes(&coarse));

    let r = hypsam(&base);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let log = std::fs::read_to_string(out.join(commands::refine::LOG_FILE)).unwrap();
    let records: Vec<serde_json::Value> = log
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records.len(), 4);
    for rec in &records {
        assert_eq!(rec["modality"], "rgb");
        assert_eq!(rec["strategy"], "max");
        assert!(rec["boxes"].as_u64().is_some());
    }
    assert_eq!(list_images(&out.join(MAPS_DIR)).unwrap().len(), 4);
}

fn fake_report(tmp: &Path, method: &str, maps: &[SaliencyMap]) -> PathBuf {
    let samples = synthetic_set(maps.len(), 32, 3);
    let scores = samples
        .iter()
        .zip(maps)
        .map(|(s, m)| score_image(&s.name, m, s.gt.as_ref().unwrap()).unwrap())
        .collect();
    let dir = tmp.join(method);
    write_report(&dir, &aggregate(method, scores, None).unwrap()).unwrap();
    dir
}

#[test]
fn plots_follow_the_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let samples = synthetic_set(3, 32, 3);
    let perfect: Vec<_> = samples
        .iter()
        .map(|s| SaliencyMap::from(s.gt.as_ref().unwrap()))
        .collect();
    let blurry: Vec<_> = perfect
        .iter()
        .map(|m| m.resize(8, 8).resize(32, 32))
        .collect();
    let flat: Vec<_> = (0..3).map(|_| SaliencyMap::filled(32, 32, 0.5)).collect();
    let a = fake_report(tmp.path(), "flat", &flat);
    let b = fake_report(tmp.path(), "sharp", &perfect);
    let c = fake_report(tmp.path(), "blurry", &blurry);

    let out = tmp.path().join("plot1");
    let r = hypsam(&["plot-pr", "--report", s(&c), "--out", s(&out)]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let svg = std::fs::read_to_string(out.join(plot::PLOT_FILE)).unwrap();
    assert!(svg.contains("blurry"));
    let series =
        svg.matches("<polyline").count() - svg.matches("stroke-width=\"1\" points").count();
    assert_eq!(series, 2, "one curve plus its legend swatch");

    let report = read_report(&c).unwrap();
    let pts = plot::curve_points(&report);
    let csv = std::fs::read_to_string(c.join("pr.csv")).unwrap();
    let rows: Vec<Vec<f64>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    let (first, last) = (&rows[0], rows.last().unwrap());
    assert_eq!(pts[0], (first[2], first[1]));
    assert_eq!(*pts.last().unwrap(), (last[2], last[1]));

    let reports: Vec<_> = [&a, &b, &c]
        .iter()
        .map(|p| read_report(p).unwrap())
        .collect();
    let mut expected: Vec<(f64, String)> = reports
        .iter()
        .map(|r| (r.f_max, r.method.clone()))
        .collect();
    expected.sort_by(|x, y| y.0.total_cmp(&x.0));
    let order: Vec<String> = plot::legend_order(&reports)
        .iter()
        .map(|r| r.method.clone())
        .collect();
    assert_eq!(
        order,
        expected.iter().map(|e| e.1.clone()).collect::<Vec<_>>()
    );
    assert_eq!(order[0], "sharp");

    let out = tmp.path().join("plot3");
    let r = hypsam(&[
        "plot-pr",
        "--report",
        s(&a),
        "--report",
        s(&b),
        "--report",
        s(&c),
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(0));
    let svg = std::fs::read_to_string(out.join(plot::PLOT_FILE)).unwrap();
    let pos: Vec<usize> = reports
        .iter()
        .map(|r| svg.find(&plot::legend_label(r)).expect("legend entry"))
        .collect();
    let mut by_fmax: Vec<(f64, usize)> = reports.iter().map(|r| r.f_max).zip(pos).collect();
    by_fmax.sort_by(|x, y| y.0.total_cmp(&x.0));
    assert!(
        by_fmax.windows(2).all(|w| w[0].1 < w[1].1),
        "legend not sorted by F_max"
    );

    std::fs::write(tmp.path().join("bad.json"), "{\"method\": 1}").unwrap();
    let r = hypsam(&[
        "plot-pr",
        "--report",
        s(&tmp.path().join("bad.json")),
        "--out",
        s(&out),
    ]);
    assert_eq!(r.status.code(), Some(3));
}

#[test]
fn train_writes_logs_checkpoints_and_manifest() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("t");
    let r = hypsam(&[
        "train",
        "--synthetic",
        "8",
        "--out",
        s(&out),
        "--model.backbone",
        "tiny",
        "--model.pretrained",
        "false",
        "--model.channels",
        "16",
        "--model.resolution",
        "32",
        "--data.resolution",
        "32",
        "--train.epochs",
        "2",
        "--train.batch",
        "4",
    ]);
    assert_eq!(
        r.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
    let log = std::fs::read_to_string(out.join(commands::train::LOG_FILE)).unwrap();
    assert_eq!(log.lines().count(), 4);
    assert!(log
        .lines()
        .all(|l| l.starts_with("step=") && l.contains("total=")));
    let ck = out.join(commands::train::CHECKPOINT_DIR);
    for f in [
        "epoch_001.safetensors",
        "epoch_002.safetensors",
        "last.safetensors",
        "best.safetensors",
    ] {
        assert!(ck.join(f).is_file(), "{f}");
    }
    let m = checkpoint::read_manifest(&ck.join("last.safetensors")).unwrap();
    assert_eq!(m.resolution, 32);
    assert!(out.join(MANIFEST_FILE).is_file());
}

#[test]
fn pretrained_backbone_without_weights_is_a_backend_error() {
    let tmp = tempfile::tempdir().unwrap();
    let r = hypsam(&[
        "--cache",
        s(&tmp.path().join("empty")),
        "train",
        "--synthetic",
        "2",
        "--out",
        s(&tmp.path().join("t")),
        "--model.backbone",
        "swinv2_base",
        "--model.pretrained",
        "true",
    ]);
    assert_eq!(
        r.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&r.stderr)
    );
}

#[test]
fn synthetic_training_drives_the_loss_below_a_fifth() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.model = DfNetConfig::tiny(64);
    cfg.data.resolution = 64;
    cfg.train.epochs = 25;
    cfg.train.max_steps = Some(200);
    let summary = commands::train::run(&cfg, &tmp.path().join("t"), Some(64), tmp.path()).unwrap();
    assert_eq!(summary.steps, 200);
    let log =
        std::fs::read_to_string(tmp.path().join("t").join(commands::train::LOG_FILE)).unwrap();
    let totals: Vec<f64> = log
        .lines()
        .map(|l| {
            l.split_whitespace()
                .find_map(|kv| kv.strip_prefix("total="))
                .unwrap()
                .parse()
                .unwrap()
        })
        .collect();
    let tail = totals[190..].iter().sum::<f64>() / 10.0;
    assert!(tail < 0.2 * totals[0], "loss {} -> {tail}", totals[0]);
}
