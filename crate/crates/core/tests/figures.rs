//! Seeded figure reproductions pinned against golden summaries.
//!
//! Set `ASYMSPEC_UPDATE_GOLDEN=1` to rewrite `tests/golden/*.json`.

use std::fs;
use std::path::PathBuf;

use asymspec::harness::figures::{reproduce_at, FIGURE_SEED as SEED};
use asymspec::harness::{reproduce_figure, Figure, FigureOutput};
use serde_json::{json, Value};

const LAMBDA_TOL: f64 = 1e-6;

fn golden_path(figure: Figure) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden").join(format!("{}.json", figure.name()))
}

fn summary(out: &FigureOutput) -> Value {
    json!({
        "figure": out.figure.name(),
        "seed": SEED,
        "ev_flagged": out.ev_flagged,
        "sv_flagged": out.sv_flagged,
        "lambda_max_s": out.lambda_max_s,
        "null_edge": out.null_edge,
    })
}

fn check_golden(figure: Figure) -> FigureOutput {
    let dir = tempfile::tempdir().unwrap();
    let out = reproduce_figure(figure, dir.path(), SEED).unwrap();
    let path = golden_path(figure);
    let got = summary(&out);
    if std::env::var_os("ASYMSPEC_UPDATE_GOLDEN").is_some() {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, serde_json::to_string_pretty(&got).unwrap() + "\n").unwrap();
    }
    let want: Value = serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(got["ev_flagged"], want["ev_flagged"], "{}", figure.name());
    assert_eq!(got["sv_flagged"], want["sv_flagged"], "{}", figure.name());
    for key in ["lambda_max_s", "null_edge"] {
        let (g, w) = (got[key].as_f64().unwrap(), want[key].as_f64().unwrap());
        assert!((g - w).abs() <= LAMBDA_TOL * w.abs().max(1.0), "{key}: {g} vs golden {w}");
    }
    out
}

#[test]
fn gaussian_iid_flags_exactly_the_two_detectable_signals() {
    let out = check_golden(Figure::GaussianIid);
    assert_eq!(out.ev_flagged, 2);
}

#[test]
fn heavy_tails_inflate_singular_value_outliers() {
    let out = check_golden(Figure::HeavyIid);
    assert!(out.sv_flagged > out.ev_flagged, "sv {} vs ev {}", out.sv_flagged, out.ev_flagged);
}

#[test]
fn reruns_are_byte_identical() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for dir in [&a, &b] {
        reproduce_at(Figure::GaussianGeneral, 120, 300, dir.path(), 4).unwrap();
    }
    for f in ["sv.csv", "ev.csv", "sv.svg", "ev.svg", "summary.json"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f}");
    }
}
