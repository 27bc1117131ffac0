use lowdeg_core::validation::*;

fn json(r: &ValidationReport) -> String {
    serde_json::to_string(r).unwrap()
}

#[test]
fn small_reports_pass_and_repeat() {
    let dec = DecompositionConfig { matrices: 12, naive_max: 6, mc_samples: 20_000, ..Default::default() };
    let orth = OrthogonalityConfig { samples: 20_000, ..Default::default() };
    let tel = TelescopingConfig { n: 3, m: 7, prefixes: 30, ..Default::default() };
    let samp = SamplerConfig { m: 6, hist_samples: 20_000, budget_samples: 200, ..Default::default() };
    let decay = DecayConfig { m: 14, draws: 10, ..Default::default() };
    let runs: Vec<Box<dyn Fn() -> ValidationReport>> = vec![
        Box::new(move || validate_decomposition(&dec).unwrap()),
        Box::new(move || mc_orthogonality_suite(&orth).unwrap()),
        Box::new(move || validate_telescoping(&tel).unwrap()),
        Box::new(move || validate_sampler(&samp).unwrap()),
        Box::new(move || decay_experiment(&decay).unwrap()),
        Box::new(|| validate_loss(&Default::default()).unwrap()),
        Box::new(|| validate_dist_barrier(&Default::default()).unwrap()),
    ];
    for run in runs {
        let a = run();
        assert!(a.pass, "{} failed: {}", a.experiment, a.metrics);
        assert_eq!(json(&a), json(&run()), "{} not reproducible", a.experiment);
        let value: serde_json::Value = serde_json::from_str(&json(&a)).unwrap();
        for key in ["experiment", "parameters", "metrics", "pass"] {
            assert!(value.get(key).is_some());
        }
    }
}

#[test]
fn decay_rows_cover_every_cutoff() {
    let r = decay_experiment(&DecayConfig { m: 10, draws: 4, ..Default::default() }).unwrap();
    let table = r.table.unwrap();
    assert_eq!(table.rows.len(), 4);
    assert_eq!(table.rows[3][5], table.rows[3][5].min(1e-9));
    assert!(table.to_csv().starts_with("l,bound,pass_fraction,"));
}
