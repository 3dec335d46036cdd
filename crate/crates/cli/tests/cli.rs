use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use qdiff_core::io::{load_decomposition, read_real_values, write_pgm, GrayImage};


fn qdiff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_qdiff")).args(args).output().unwrap()
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "qdiff failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

/// Writes a ring-plus-offset-blob object and a config referencing it.
fn setup(dir: &Path, extra: &str) -> PathBuf {
    let n = 32;
    let pixels = (0..n * n)
        .map(|p| {
            let (x, y) = ((p % n) as f64 - 16.0, (p / n) as f64 - 16.0);
            let ring = (-((x.hypot(y) - 6.0) / 2.0).powi(2)).exp();
            let blob = (-((x - 4.0).powi(2) + (y + 3.0).powi(2)) / 6.0).exp();
            (200.0 * ring + 55.0 * blob).round() as u32
        })
        .collect();
    let img = GrayImage { width: n, height: n, max_value: 255, pixels };
    write_pgm(&dir.join("obj.pgm"), &img).unwrap();
    let cfg = dir.join("run.toml");
    std::fs::write(
        &cfg,
        format!("pump.sigma_p_L = 0.2\nmatter.magnitude = \"obj.pgm\"\ngrid.samples = 32\n{extra}"),
    )
    .unwrap();
    cfg
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn unentangled_image_is_fundamental_idler_intensity() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "");
    std::fs::write(
        &cfg,
        "pump.sigma_p_L = 1\nmatter.magnitude = \"obj.pgm\"\ngrid.samples = 32\nimaging.truncations = [1, 5]\nimaging.schemes = [\"natural\"]\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    ok(&qdiff(&["--config", s(&cfg), "--out", s(&out), "run"]));

    let dec = load_decomposition(&out.join("decompose/decomposition")).unwrap();
    assert!((dec.weights()[0] - 1.0).abs() < 1e-10);
    let v0 = dec.sample_frame_idler(0).unwrap();
    let reference: Vec<f64> = v0.values().iter().map(|z| z.norm_sqr()).collect();
    for n in [1, 5] {
        let (_, img) = read_real_values(&out.join(format!("image/image_p1_N{n}_natural.bin"))).unwrap();
        let scale = img.iter().zip(&reference).map(|(a, b)| a * b).sum::<f64>()
            / reference.iter().map(|b| b * b).sum::<f64>();
        assert!(scale.abs() > 1e-6);
        let resid = img
            .iter()
            .zip(&reference)
            .map(|(a, b)| (a - scale * b).powi(2))
            .sum::<f64>()
            .sqrt()
            / img.iter().map(|a| a * a).sum::<f64>().sqrt();
        assert!(resid < 1e-6, "N={n}: residual {resid}");
    }
}

#[test]
fn rerun_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "");
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    ok(&qdiff(&["--config", s(&cfg), "--out", s(&a), "run"]));
    ok(&qdiff(&["--config", s(&cfg), "--out", s(&b), "run"]));
    let ma = std::fs::read(a.join("manifest.sha256")).unwrap();
    assert_eq!(ma, std::fs::read(b.join("manifest.sha256")).unwrap());

    let again = qdiff(&["--config", s(&cfg), "--out", s(&a), "run"]);
    ok(&again);
    assert!(String::from_utf8_lossy(&again.stdout).contains("cached"));
    assert_eq!(ma, std::fs::read(a.join("manifest.sha256")).unwrap());
}

#[test]
fn staged_commands_match_full_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "");
    let (full, staged) = (dir.path().join("full"), dir.path().join("staged"));
    ok(&qdiff(&["--config", s(&cfg), "--out", s(&full), "run"]));
    ok(&qdiff(&["--config", s(&cfg), "--out", s(&staged), "decompose"]));
    ok(&qdiff(&["--config", s(&cfg), "--out", s(&staged), "image"]));
    assert_eq!(
        std::fs::read(full.join("manifest.sha256")).unwrap(),
        std::fs::read(staged.join("manifest.sha256")).unwrap()
    );
}

#[test]
fn image_without_decompose_is_actionable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "");
    let out = qdiff(&["--config", s(&cfg), "--out", s(&dir.path().join("o")), "image"]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("qdiff decompose"), "{err}");
}

#[test]
fn changed_matter_reruns_only_downstream_stages() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "");
    let out = dir.path().join("o");
    ok(&qdiff(&["--config", s(&cfg), "--out", s(&out), "run"]));
    let img = GrayImage { width: 32, height: 32, max_value: 255, pixels: (0..1024).map(|p| (p % 32) as u32 * 8).collect() };
    write_pgm(&dir.path().join("obj.pgm"), &img).unwrap();
    let again = qdiff(&["--config", s(&cfg), "--out", s(&out), "run"]);
    ok(&again);
    let text = String::from_utf8_lossy(&again.stdout);
    assert!(text.lines().any(|l| l.starts_with("decompose") && l.contains("cached")), "{text}");
    assert!(text.lines().any(|l| l.starts_with("couple") && l.contains("done")), "{text}");
}

#[test]
fn metrics_prints_nmse_and_pearson() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "");
    let out = dir.path().join("o");
    ok(&qdiff(&["--config", s(&cfg), "--out", s(&out), "run"]));
    let ideal = out.join("image/ideal_p1.bin");
    let r = qdiff(&["metrics", "--ref", s(&ideal), "--img", s(&ideal)]);
    ok(&r);
    let text = String::from_utf8_lossy(&r.stdout).to_string();
    assert!(text.contains("nmse = 0\n"), "{text}");
    assert!(text.contains("pearson = 1"), "{text}");

    let noisy = |seed: &str| {
        let r = qdiff(&["metrics", "--ref", s(&ideal), "--img", s(&ideal), "--noise", "0.1", "--seed", seed]);
        ok(&r);
        String::from_utf8_lossy(&r.stdout).to_string()
    };
    assert_eq!(noisy("3"), noisy("3"));
    assert_ne!(noisy("3"), noisy("4"));
}

#[test]
fn sweep_writes_eight_images_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "");
    let out = dir.path().join("o");
    ok(&qdiff(&["--config", s(&cfg), "--out", s(&out), "run"]));
    let mut images = 0;
    for n in [1, 5, 10, 20] {
        for scheme in ["natural", "flattened"] {
            assert!(out.join(format!("image/image_p1_N{n}_{scheme}.bin")).is_file());
            assert!(out.join(format!("image/image_p1_N{n}_{scheme}.pgm")).is_file());
            images += 1;
        }
    }
    assert_eq!(images, 8);
    let metrics = std::fs::read_to_string(out.join("image/metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 9);
    assert_eq!(metrics.lines().next(), Some("order,truncation,scheme,nmse,pearson"));

    let manifest = std::fs::read_to_string(out.join("manifest.sha256")).unwrap();
    for line in manifest.lines() {
        let (hash, path) = line.split_once("  ").unwrap();
        let bytes = std::fs::read(out.join(path)).unwrap();
        assert_eq!(hash.len(), 64);
        assert!(!bytes.is_empty() || path.ends_with(".key"));
    }
    assert!(manifest.contains("decompose/spectrum.csv"));
    assert!(manifest.contains("couple/density_first_order.pgm"));
    assert!(manifest.contains("decompose/gallery/signal_00.pgm"));
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = setup(dir.path(), "pump.sigmap = 1\n");
    let out = qdiff(&["--config", s(&cfg), "--out", s(&dir.path().join("o")), "run"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("pump.sigma_p_L"));

    let cfg = setup(dir.path(), "pump.model = \"sinc\"\nimaging.truncations = [0]\n");
    let out = qdiff(&["--config", s(&cfg), "--out", s(&dir.path().join("o")), "run"]);
    assert_eq!(out.status.code(), Some(2));
}
