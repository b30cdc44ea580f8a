//! The `mmsc` binary end to end: artifacts, CSV rows and exit codes.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mmsc_core::codec::EncodedFrame;
use mmsc_core::fusion::names;
use mmsc_core::tensors::{
    read_archive, read_pgm, read_ppm, write_archive, write_pgm, write_ppm, GrayImage, RasterImage,
    Tensor, TensorArchive,
};

fn mmsc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mmsc"))
        .args(args)
        .output()
        .expect("spawn mmsc")
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}\n{}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn save_ppm(path: &Path, img: &RasterImage) {
    let mut b = Vec::new();
    write_ppm(img, &mut b).unwrap();
    std::fs::write(path, b).unwrap();
}

fn save_pgm(path: &Path, img: &GrayImage) {
    let mut b = Vec::new();
    write_pgm(img, &mut b).unwrap();
    std::fs::write(path, b).unwrap();
}

/// A textured image with a mask over the patch-aligned rectangle `[x0, x1) x [y0, y1)`.
fn scene(
    dir: &Path,
    id: &str,
    w: usize,
    h: usize,
    rect: (usize, usize, usize, usize),
) -> (PathBuf, PathBuf) {
    let mut px = Vec::with_capacity(w * h * 3);
    for y in 0..h {
        for x in 0..w {
            px.extend([
                (x * 7 + y * 3) as u8,
                (x * y) as u8,
                255u8.wrapping_sub((x * 5) as u8),
            ]);
        }
    }
    let (x0, x1, y0, y1) = rect;
    let mask: Vec<u8> = (0..w * h)
        .map(|i| {
            if (x0..x1).contains(&(i % w)) && (y0..y1).contains(&(i / w)) {
                255
            } else {
                0
            }
        })
        .collect();
    let (ip, mp) = (dir.join(format!("{id}.ppm")), dir.join(format!("{id}.pgm")));
    save_ppm(&ip, &RasterImage::new(w, h, px).unwrap());
    save_pgm(&mp, &GrayImage::new(w, h, mask).unwrap());
    (ip, mp)
}

#[test]
fn toy_score_single_pixel_with_radius_one() {
    let dir = tempfile::tempdir().unwrap();
    let mut mask = vec![0u8; 25];
    mask[2 * 5 + 2] = 255;
    let mp = dir.path().join("dot.pgm");
    save_pgm(&mp, &GrayImage::new(5, 5, mask).unwrap());
    let out = dir.path().join("out");
    ok(&mmsc(&[
        "score",
        "--toy",
        "--mask",
        s(&mp),
        "--blur-radius",
        "1",
        "--out-dir",
        s(&out),
    ]));

    let a = read_archive(
        std::fs::read(out.join("dot.s_inf.mmta"))
            .unwrap()
            .as_slice(),
    )
    .unwrap();
    let t = a.require(names::RELEVANCE).unwrap();
    assert_eq!(t.shape(), &[5, 5]);
    // the 1/9 plateau normalizes to 1, the rest to 0
    let v = t.as_f32().unwrap();
    for y in 0..5 {
        for x in 0..5 {
            let inside = (1..=3).contains(&x) && (1..=3).contains(&y);
            assert_eq!(v[y * 5 + x], if inside { 1.0 } else { 0.0 });
        }
    }
    let heat = read_pgm(std::fs::read(out.join("dot.s_inf.pgm")).unwrap().as_slice()).unwrap();
    assert_eq!(heat.pixels()[0], 0);
    assert_eq!(heat.pixels()[12], 255);
}

#[test]
fn score_matches_golden_reference_from_archive() {
    let dir = tempfile::tempdir().unwrap();
    let (n, d) = (2, 3);
    let logits: Vec<f32> = (0..n * 16)
        .map(|i| ((i * 37 % 11) as f32 - 5.0) * 0.7)
        .collect();
    let pooled: Vec<f32> = vec![0.5, -1.0, 2.0, 1.5, 0.25, -0.5];
    let t_hat: Vec<f32> = vec![1.0, 0.5, -0.25];
    // same-size grid: relevance is sum_i <t, v_i> sigmoid(logit)
    let reference: Vec<f32> = (0..16)
        .map(|p| {
            (0..n)
                .map(|i| {
                    let s: f64 = (0..d)
                        .map(|k| pooled[i * d + k] as f64 * t_hat[k] as f64)
                        .sum();
                    s / (1.0 + (-(logits[i * 16 + p] as f64)).exp())
                })
                .sum::<f64>() as f32
        })
        .collect();
    let mut a = TensorArchive::new();
    a.push(Tensor::f32(names::MASK_LOGITS, vec![n, 4, 4], logits).unwrap())
        .unwrap();
    a.push(Tensor::f32(names::POOLED, vec![n, d], pooled).unwrap())
        .unwrap();
    a.push(Tensor::f32(names::TEXT_CONDITIONED, vec![d], t_hat).unwrap())
        .unwrap();
    a.push(Tensor::f32(names::RELEVANCE_REF, vec![4, 4], reference.clone()).unwrap())
        .unwrap();
    let ap = dir.path().join("golden.mmta");
    let mut bytes = Vec::new();
    write_archive(&a, &mut bytes).unwrap();
    std::fs::write(&ap, bytes).unwrap();

    let out = dir.path().join("out");
    let stdout = ok(&mmsc(&["score", "--archive", s(&ap), "--out-dir", s(&out)]));
    let err: f64 = stdout
        .lines()
        .find_map(|l| l.strip_prefix("reference_error = "))
        .expect("parity line")
        .parse()
        .unwrap();
    assert!(err < 1e-6, "{err}");

    let emitted = read_archive(
        std::fs::read(out.join("golden.s_inf.mmta"))
            .unwrap()
            .as_slice(),
    )
    .unwrap();
    let got = emitted
        .require(names::RELEVANCE)
        .unwrap()
        .as_f32()
        .unwrap()
        .to_vec();
    let (lo, hi) = reference
        .iter()
        .fold((f32::MAX, f32::MIN), |(l, h), &v| (l.min(v), h.max(v)));
    for (g, r) in got.iter().zip(&reference) {
        assert!((g - (r - lo) / (hi - lo)).abs() < 1e-4);
    }
}

#[test]
fn full_and_zero_rate_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (img, mask) = scene(dir.path(), "pic", 32, 16, (8, 24, 0, 8));
    let original = read_ppm(std::fs::read(&img).unwrap().as_slice()).unwrap();
    for (rate, tag) in [("1", "full"), ("0", "zero")] {
        let out = dir.path().join(tag);
        let frame = out.join("f.mmsf");
        let recon = out.join("r.ppm");
        ok(&mmsc(&[
            "transmit",
            "--toy",
            "--image",
            s(&img),
            "--mask",
            s(&mask),
            "--rate",
            rate,
            "--frame",
            s(&frame),
            "--out-dir",
            s(&out),
        ]));
        ok(&mmsc(&[
            "receive",
            "--frame",
            s(&frame),
            "--recon",
            s(&recon),
        ]));
        let rec = read_ppm(std::fs::read(&recon).unwrap().as_slice()).unwrap();
        if tag == "full" {
            assert_eq!(rec, original);
        } else {
            assert!(rec.pixels().iter().all(|&v| v == 128));
            // header + level map only
            assert_eq!(std::fs::read(&frame).unwrap().len(), 32 + 8);
        }
    }
}

#[test]
fn half_rate_on_480x320_fits_budget() {
    let dir = tempfile::tempdir().unwrap();
    let (img, mask) = scene(dir.path(), "big", 480, 320, (96, 200, 64, 160));
    let out = dir.path().join("out");
    let stdout = ok(&mmsc(&[
        "transmit",
        "--toy",
        "--image",
        s(&img),
        "--mask",
        s(&mask),
        "--out-dir",
        s(&out),
    ]));
    assert!(stdout.contains("budget = 230400"));
    assert!(stdout.contains("full_payload = 460800"));
    let frame = EncodedFrame::from_bytes(&std::fs::read(out.join("big.mmsf")).unwrap()).unwrap();
    assert!(frame.payload_len() <= 230_400);
    let plan = std::fs::read_to_string(out.join("big.plan.txt")).unwrap();
    let counts: usize = plan
        .lines()
        .filter(|l| l.starts_with("count_"))
        .map(|l| l.split(" = ").nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(counts, 2400);
}

#[test]
fn evaluate_zero_rate_two_patch_fixture() {
    let dir = tempfile::tempdir().unwrap();
    // left patch 100, right patch 200; mask covers the left patch
    let px: Vec<u8> = (0..16 * 8)
        .flat_map(|i| if i % 16 < 8 { [100; 3] } else { [200; 3] })
        .collect();
    let img = dir.path().join("two.ppm");
    save_ppm(&img, &RasterImage::new(16, 8, px).unwrap());
    let mask = dir.path().join("two.pgm");
    save_pgm(
        &mask,
        &GrayImage::new(
            16,
            8,
            (0..128).map(|i| if i % 16 < 8 { 255 } else { 0 }).collect(),
        )
        .unwrap(),
    );
    let frame = dir.path().join("two.mmsf");
    let common = [
        "--image",
        s(&img),
        "--mask",
        s(&mask),
        "--rate",
        "0",
        "--frame",
        s(&frame),
    ];
    ok(&mmsc(
        &[
            &["transmit", "--toy", "--out-dir", s(dir.path())][..],
            &common,
        ]
        .concat(),
    ));
    let out = dir.path().join("eval");
    let csv = ok(&mmsc(
        &[&["evaluate", "--out-dir", s(&out)][..], &common].concat(),
    ));
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "image_id,budget,rate,count_0,count_12,count_24,count_48,count_192,\
         masked_mse,masked_mse_unit,relevance_l1,embedding_score,psnr"
    );
    let f: Vec<&str> = lines[1].split(',').collect();
    assert_eq!(&f[..8], &["two", "0", "0", "2", "0", "0", "0", "0"]);
    // (100 - 128)^2
    assert_eq!(f[8], "784.000000");
    assert_eq!(f[10], "");
    assert_eq!(f[11], "");
    assert_eq!(
        std::fs::read_to_string(out.join("two.metrics.csv")).unwrap(),
        csv
    );
}

#[test]
fn pipeline_full_rate_has_zero_error_and_infinite_psnr() {
    let dir = tempfile::tempdir().unwrap();
    let (img, mask) = scene(dir.path(), "p", 24, 16, (0, 8, 0, 16));
    let out = dir.path().join("out");
    let stdout = ok(&mmsc(&[
        "pipeline",
        "--toy",
        "--image",
        s(&img),
        "--mask",
        s(&mask),
        "--rate",
        "1.0",
        "--out-dir",
        s(&out),
    ]));
    let row = stdout.lines().last().unwrap();
    assert!(
        row.starts_with("p,1152,1,0,0,0,0,6,0.000000,0.000000,,,inf"),
        "{row}"
    );
    for f in [
        "p.s_inf.mmta",
        "p.s_inf.pgm",
        "p.mmsf",
        "p.plan.txt",
        "p.recon.ppm",
        "p.metrics.csv",
    ] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn sweep_rows_and_lossless_endpoint() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = dir.path().join("corpus");
    std::fs::create_dir(&corpus).unwrap();
    scene(&corpus, "b", 32, 16, (0, 16, 0, 8));
    scene(&corpus, "a", 32, 16, (16, 32, 8, 16));
    let out = dir.path().join("out");
    let stdout = ok(&mmsc(&[
        "sweep",
        "--toy",
        "--corpus",
        s(&corpus),
        "--sweep-rates",
        "0,1",
        "--out-dir",
        s(&out),
    ]));
    let agg = std::fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert!(stdout.starts_with(&agg));
    let rows: Vec<&str> = agg.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[1].starts_with("1,2,0.000000,"));
    let per_image = std::fs::read_to_string(out.join("sweep_images.csv")).unwrap();
    let ids: Vec<(&str, &str)> = per_image
        .lines()
        .skip(1)
        .map(|l| {
            let mut f = l.split(',');
            (f.next().unwrap(), f.nth(1).unwrap())
        })
        .collect();
    assert_eq!(ids, [("a", "0"), ("a", "1"), ("b", "0"), ("b", "1")]);
    assert!(out.join("sweep_masked_mse.svg").exists());
    assert!(out.join("sweep_psnr.svg").exists());
    assert!(!out.join("sweep_relevance_l1.svg").exists());
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let (img, mask) = scene(dir.path(), "c", 32, 16, (0, 8, 0, 8));
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        format!(
            "# test run\nimage = {}\nmask = {}\ntoy = true\nrate = 1.0\nout-dir = {}\n",
            s(&img),
            s(&mask),
            s(&dir.path().join("o"))
        ),
    )
    .unwrap();
    let stdout = ok(&mmsc(&["transmit", "--config", s(&cfg), "--budget", "100"]));
    assert!(stdout.contains("budget = 100\n"), "{stdout}");
    assert!(stdout.contains("payload = 96\n"), "{stdout}");
}

#[test]
fn stored_score_is_reused_by_transmit() {
    let dir = tempfile::tempdir().unwrap();
    let (img, mask) = scene(dir.path(), "r", 32, 16, (24, 32, 8, 16));
    let out = dir.path().join("out");
    ok(&mmsc(&[
        "score",
        "--toy",
        "--image",
        s(&img),
        "--mask",
        s(&mask),
        "--out-dir",
        s(&out),
    ]));
    let scored = out.join("r.s_inf.mmta");
    let a = ok(&mmsc(&[
        "transmit",
        "--image",
        s(&img),
        "--archive",
        s(&scored),
        "--budget",
        "192",
        "--out-dir",
        s(&out),
    ]));
    assert!(a.contains("count_192 = 1\n"), "{a}");
    let frame = EncodedFrame::from_bytes(&std::fs::read(out.join("r.mmsf")).unwrap()).unwrap();
    // bottom-right patch of a 4x2 grid
    assert_eq!(frame.levels(), &[0, 0, 0, 0, 0, 0, 0, 4]);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let (img, mask) = scene(dir.path(), "e", 16, 8, (0, 8, 0, 8));

    // missing input
    let out = mmsc(&["transmit", "--toy", "--image", s(&img)]);
    assert_eq!(
        out.status.code(),
        Some(2),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let out = mmsc(&["transmit", "--image", s(&dir.path().join("nope.ppm"))]);
    assert_eq!(out.status.code(), Some(2));
    // unusable option values
    let out = mmsc(&[
        "transmit",
        "--toy",
        "--image",
        s(&img),
        "--mask",
        s(&mask),
        "--patch-size",
        "16",
    ]);
    assert_eq!(out.status.code(), Some(2));
    let out = mmsc(&[
        "transmit",
        "--toy",
        "--image",
        s(&img),
        "--mask",
        s(&mask),
        "--rate",
        "2",
    ]);
    assert_eq!(out.status.code(), Some(2));

    // corrupt inputs
    let bad = dir.path().join("bad.mmsf");
    std::fs::write(&bad, b"MMSX\x01").unwrap();
    assert_eq!(
        mmsc(&["receive", "--frame", s(&bad)]).status.code(),
        Some(3)
    );
    let bad_img = dir.path().join("bad.ppm");
    std::fs::write(&bad_img, b"P3 1 1 255\n0 0 0\n").unwrap();
    let out = mmsc(&[
        "transmit",
        "--toy",
        "--image",
        s(&bad_img),
        "--mask",
        s(&mask),
    ]);
    assert_eq!(out.status.code(), Some(3));

    // empty corpus
    let empty = dir.path().join("empty");
    std::fs::create_dir(&empty).unwrap();
    assert_eq!(
        mmsc(&["sweep", "--toy", "--corpus", s(&empty)])
            .status
            .code(),
        Some(2)
    );
}
