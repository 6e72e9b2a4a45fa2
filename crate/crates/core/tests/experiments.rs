use memxbar::experiments::{
    rce_csv, run_aging_sweep, run_levels_report, run_noise_sweep, run_ratio_sweep, run_rce_grid, run_wire_table,
    strip_comments, ExperimentConfig, GridSection, PlacementName, RceTable, WireCondition,
};

fn small() -> ExperimentConfig {
    let mut cfg = ExperimentConfig {
        trials: 6,
        grid: GridSection {
            m: vec![1, 3],
            levels: vec![2, 5],
        },
        ..ExperimentConfig::default()
    };
    cfg.crossbar.n = 5;
    cfg.crossbar.k = 4;
    cfg.seed = 21;
    cfg
}

fn same_samples(a: &RceTable, b: &RceTable) {
    assert_eq!(a.cells.len(), b.cells.len());
    for (x, y) in a.cells.iter().zip(&b.cells) {
        assert_eq!((x.m, x.levels), (y.m, y.levels));
        assert_eq!(x.trials, y.trials);
    }
}

#[test]
fn degenerate_sweeps_reduce_to_the_plain_grid() {
    let cfg = small();
    let base = run_rce_grid(&cfg).unwrap();

    let mut ratio = cfg.clone();
    ratio.ratio.ratios = vec![100.0];
    same_samples(&run_ratio_sweep(&ratio).unwrap(), &base);

    let mut aging = cfg.clone();
    aging.aging.ratios = vec![0.0];
    same_samples(&run_aging_sweep(&aging).unwrap(), &base);

    let mut noise = cfg.clone();
    noise.noise.variances = vec![0.0];
    same_samples(&run_noise_sweep(&noise).unwrap(), &base);

    let mut wire = cfg.clone();
    wire.wire.conditions = vec![WireCondition::N];
    wire.wire.boundary_drift_frac = 0.0;
    same_samples(&run_wire_table(&wire).unwrap(), &base);
}

#[test]
fn embedded_aggregates_match_raw_rows() {
    let cfg = small();
    let table = run_rce_grid(&cfg).unwrap();
    let body = strip_comments(&rce_csv(&cfg, &table).unwrap());
    let mut rdr = csv::Reader::from_reader(body.as_bytes());
    let mut samples: Vec<f64> = Vec::new();
    let mut checked = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let value = &rec[6];
        match &rec[0] {
            "sample" => samples.extend(value.parse::<f64>().ok()),
            "mean" => {
                let mean = samples.iter().sum::<f64>() / samples.len() as f64;
                let embedded: f64 = value.parse().unwrap();
                assert!((embedded - mean).abs() <= 1e-12 * mean.abs());
            }
            "std" => {
                let n = samples.len() as f64;
                let mean = samples.iter().sum::<f64>() / n;
                let std = (samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
                let embedded: f64 = value.parse().unwrap();
                assert!((embedded - std).abs() <= 1e-12 * std.abs());
                samples.clear();
                checked += 1;
            }
            other => panic!("unexpected row kind {other}"),
        }
    }
    assert_eq!(checked, 4);
}

#[test]
fn sweep_trends() {
    let mut cfg = small();
    cfg.trials = 40;
    cfg.grid = GridSection {
        m: vec![1, 4, 6],
        levels: vec![2],
    };
    cfg.ratio.ratios = vec![100.0, 5.0];
    let ratio = run_ratio_sweep(&cfg).unwrap();
    assert!(ratio.mean(Some("5"), 6, 2) < ratio.mean(Some("100"), 1, 2));

    cfg.aging.ratios = vec![0.7];
    let aging = run_aging_sweep(&cfg).unwrap();
    assert!(aging.mean(Some("0.7"), 1, 2) > aging.mean(Some("0.7"), 4, 2));
}

#[test]
fn levels_report_uses_the_configured_levels() {
    let mut cfg = ExperimentConfig::default();
    cfg.levels.m_max = 4;
    cfg.levels.l_max = 6;
    cfg.device.placement = PlacementName::LinearInConductance;
    let rows = run_levels_report(&cfg).unwrap();
    assert_eq!(rows.len(), 24);
    for r in &rows {
        let eff = r.effective.unwrap() as u64;
        assert!(eff <= r.l_c);
        if r.levels == 1 {
            assert_eq!(r.l_c, 1);
        }
        // Equally spaced levels make sums coincide.
        if r.m >= 2 && r.levels >= 3 {
            assert!(eff < r.l_c, "m={} L={}", r.m, r.levels);
        }
    }
}
