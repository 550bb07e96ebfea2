use std::fs;

use modalpath_bench::output::PlotLayout;
use modalpath_bench::runner::Stage;
use modalpath_bench::{emit_csv, emit_plot, run_benchmark, BenchConfig, Method, ModelKind};

fn config(model: ModelKind, threads: usize) -> BenchConfig {
    BenchConfig {
        model,
        horizon: 24,
        trials: 12,
        master_seed: 7,
        threads: Some(threads),
        ..Default::default()
    }
}

#[test]
fn csv_bytes_do_not_depend_on_thread_count() {
    let mut contents = Vec::new();
    for threads in [1, 3, 8] {
        let dir = tempfile::tempdir().unwrap();
        let out = run_benchmark(&config(ModelKind::Ricker, threads)).unwrap();
        emit_csv(&out.trials, &out.summary, dir.path()).unwrap();
        contents.push((
            fs::read(dir.path().join("trials.csv")).unwrap(),
            fs::read(dir.path().join("summary.csv")).unwrap(),
        ));
    }
    assert!(contents.windows(2).all(|w| w[0] == w[1]));
}

#[test]
fn csv_shapes_and_recomputable_errors() {
    let cfg = config(ModelKind::Lgssm, 2);
    let out = run_benchmark(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_csv(&out.trials, &out.summary, dir.path()).unwrap();

    let mut rdr = csv::Reader::from_path(dir.path().join("trials.csv")).unwrap();
    let header = rdr.headers().unwrap().clone();
    assert_eq!(&header[0], "trial");
    assert_eq!(&header[3], "amp_filter_est");
    assert_eq!(header.len(), 3 + 4 * 3);
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let truth: f64 = rec[2].parse().unwrap();
        for m in 0..3 {
            let base = 3 + 4 * m;
            let fe: f64 = rec[base].parse().unwrap();
            let se: f64 = rec[base + 1].parse().unwrap();
            assert_eq!((fe - truth).abs(), rec[base + 2].parse::<f64>().unwrap());
            assert_eq!((se - truth).abs(), rec[base + 3].parse::<f64>().unwrap());
        }
        rows += 1;
    }
    assert_eq!(rows, cfg.trials * (cfg.horizon + 1));

    let mut rdr = csv::Reader::from_path(dir.path().join("summary.csv")).unwrap();
    assert_eq!(
        rdr.headers().unwrap().iter().collect::<Vec<_>>(),
        ["t", "method", "stage", "median", "q10", "q90"]
    );
    let mut count = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        assert!(matches!(&rec[2], "filter" | "smoother"));
        let (med, lo, hi): (f64, f64, f64) = (rec[3].parse().unwrap(), rec[4].parse().unwrap(), rec[5].parse().unwrap());
        assert!(lo <= med && med <= hi);
        count += 1;
    }
    assert_eq!(count, (cfg.horizon + 1) * 3 * 2);
}

#[test]
fn numbers_carry_seventeen_significant_digits() {
    let out = run_benchmark(&config(ModelKind::Ricker, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_csv(&out.trials, &out.summary, dir.path()).unwrap();
    let text = fs::read_to_string(dir.path().join("trials.csv")).unwrap();
    let line = text.lines().nth(1).unwrap();
    let truth = line.split(',').nth(2).unwrap();
    let mantissa = truth.split('e').next().unwrap().replace(['-', '.'], "");
    assert_eq!(mantissa.len(), 17, "{truth}");
}

#[test]
fn svg_is_well_formed_and_bands_match_summary() {
    let out = run_benchmark(&config(ModelKind::Ricker, 2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = emit_plot(&out.summary, dir.path()).unwrap();
    let text = fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap();
    let layout = PlotLayout::for_summary(&out.summary);

    let mut bands = 0;
    for node in doc.descendants().filter(|n| n.attribute("class") == Some("band")) {
        bands += 1;
        let method = match node.attribute("data-method").unwrap() {
            "amp" => Method::Amp,
            "klf" => Method::Klf,
            _ => Method::Iplf,
        };
        let stage = if node.attribute("data-stage") == Some("filter") { Stage::Filter } else { Stage::Smoother };
        let ys: Vec<f64> = node
            .attribute("points")
            .unwrap()
            .split_whitespace()
            .map(|p| p.split(',').nth(1).unwrap().parse().unwrap())
            .collect();
        let series: Vec<_> = out.summary.series(method, stage).collect();
        let lo = series.iter().map(|r| r.q10).fold(f64::INFINITY, f64::min);
        let hi = series.iter().map(|r| r.q90).fold(f64::NEG_INFINITY, f64::max);
        let y_top = ys.iter().copied().fold(f64::INFINITY, f64::min);
        let y_bottom = ys.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        assert!((y_top - layout.y_of(stage, hi)).abs() <= 0.5);
        assert!((y_bottom - layout.y_of(stage, lo)).abs() <= 0.5);
        assert!((layout.value_of(stage, layout.y_of(stage, hi)) - hi).abs() <= 1e-9 * hi.max(1.0));
    }
    assert_eq!(bands, 6);
    assert_eq!(doc.descendants().filter(|n| n.attribute("class") == Some("median")).count(), 6);
}
