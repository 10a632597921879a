use perishlab::datagen::{gen_instance, stationarity_report, DgpKind, GenConfig};

#[test]
fn long_run_moments_match_ar1_formulas() {
    for kind in [DgpKind::Cc, DgpKind::Cr, DgpKind::Scr] {
        let g = GenConfig::new(kind, 10, 10, 2024, 0);
        let rows = stationarity_report(&g, 10_000, 0.05).unwrap();
        for r in &rows {
            assert!(!r.flagged, "{kind} {r:?}");
            assert!((r.lag1 - r.lag1_ref).abs() < 0.05, "{kind} {r:?}");
        }
        assert_eq!(rows.len(), if kind.random_lead() { 6 } else { 5 });
    }
}

#[test]
fn independent_streams_have_no_autocorrelation() {
    let g = GenConfig::new(DgpKind::Ic, 5, 5, 9, 3);
    for r in stationarity_report(&g, 10_000, 0.05).unwrap() {
        assert!(r.lag1.abs() < 0.05, "{r:?}");
        assert!(!r.flagged, "{r:?}");
    }
}

#[test]
fn csv_output_is_byte_identical_across_runs() {
    let g = GenConfig::new(DgpKind::Scr, 3, 2, 7, 4);
    let write = || {
        let mut buf = Vec::new();
        gen_instance(&g).unwrap().0.write_csv(&mut buf).unwrap();
        buf
    };
    assert_eq!(write(), write());
}

#[test]
fn feature_means_vary_across_instances() {
    let a = GenConfig::new(DgpKind::Cc, 1, 1, 5, 0).feature_means();
    let b = GenConfig::new(DgpKind::Cc, 1, 1, 5, 1).feature_means();
    assert_ne!(a, b);
    assert!(a.iter().chain(&b).all(|m| (0.0..1.0).contains(m)));
}
