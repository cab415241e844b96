use gibbscode_experiments::{run_experiment, ExpError, ExperimentConfig, ExperimentOutput};

fn cfg(extra: &str) -> ExperimentConfig {
    ExperimentConfig::from_json(&format!(
        r#"{{"experiment":"gexit-curve",
            "code":{{"type":"ensemble","family":"ldpc","var_coeffs":[0,0,1],"chk_coeffs":[0,0,0,1],"n":9}},
            "channel":"bsc","eps":[0.1,0.3],"samples":40,"methods":["functional","bp","series"]{extra}}}"#
    ))
    .unwrap()
}

fn csv(out: &ExperimentOutput) -> Vec<String> {
    out.tables.iter().map(|t| t.to_csv().unwrap()).collect()
}

#[test]
fn same_seed_same_bytes() {
    let c = cfg(r#","seed":3"#);
    assert_eq!(csv(&run_experiment(&c).unwrap()), csv(&run_experiment(&c).unwrap()));
    let other = run_experiment(&cfg(r#","seed":4"#)).unwrap();
    assert_ne!(csv(&run_experiment(&c).unwrap()), csv(&other));
}

#[test]
fn thread_count_does_not_matter() {
    let c = cfg(r#","seed":3"#);
    let run = |n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .unwrap()
            .install(|| csv(&run_experiment(&c).unwrap()))
    };
    assert_eq!(run(1), run(4));
}

#[test]
fn seed_is_mandatory() {
    let err = run_experiment(&cfg("")).unwrap_err();
    assert!(matches!(err, ExpError::Config(ref m) if m.contains("seed")), "{err}");
}

#[test]
fn unknown_fields_are_rejected() {
    let text = r#"{"experiment":"limits","code":{"type":"file","path":"x"},"channel":"bsc","samples":2,"seed":1,"depth":3}"#;
    assert!(ExperimentConfig::from_json(text).is_err());
}

#[test]
fn bad_knobs_are_rejected() {
    for extra in [r#","seed":1,"s":0.7"#, r#","seed":1,"llr_range":[2,1]"#, r#","seed":1,"p_max":0"#] {
        assert!(run_experiment(&cfg(extra)).is_err(), "{extra}");
    }
    let base = cfg(r#","seed":1"#);
    let mut c = base.clone();
    c.eps = vec![0.7];
    assert!(run_experiment(&c).is_err());
    let mut c = base.clone();
    c.methods = Some(vec!["magic".into()]);
    assert!(run_experiment(&c).is_err());
    let mut c = base;
    c.code = gibbscode_experiments::config::CodeSpec::File { path: "/nonexistent".into() };
    assert!(run_experiment(&c).is_err());
}

#[test]
fn corr_decay_tables_per_eps() {
    let c = ExperimentConfig::from_json(
        r#"{"experiment":"corr-decay",
            "code":{"type":"ensemble","family":"ldgm","var_coeffs":[0,0,0.5,0.5],"chk_coeffs":[0,0,1],"n":10},
            "channel":"biawgnc","eps":[1.0,2.0],"samples":40,"seed":9}"#,
    )
    .unwrap();
    let out = run_experiment(&c).unwrap();
    let names: Vec<&str> = out.tables.iter().map(|t| t.name.as_str()).collect();
    assert_eq!(names, ["corr-decay_eps=1", "corr-decay_eps=2"]);
    for t in &out.tables {
        assert_eq!(t.header, ["distance", "mean_abs_corr", "std_err", "n_samples"]);
        assert!(t.column("mean_abs_corr").iter().all(|x| x.unwrap() >= 0.0));
    }
}

#[test]
fn identity_suites_pass_on_small_corpora() {
    for kind in ["duality-check", "berretti-check"] {
        let c = ExperimentConfig::from_json(&format!(
            r#"{{"experiment":"{kind}",
                "code":{{"type":"random","family":"ldpc","count":6,"min_var":2,"max_var":6,"max_chk":4,"density":0.3}},
                "channel":"bsc","samples":2,"seed":5}}"#
        ))
        .unwrap();
        let out = run_experiment(&c).unwrap();
        assert_eq!(out.passed, Some(true), "{kind}: {}", out.summary);
        assert!(!out.tables[0].rows.is_empty());
    }
}

#[test]
fn identity_suites_reject_ldgm() {
    let c = ExperimentConfig::from_json(
        r#"{"experiment":"duality-check",
            "code":{"type":"random","family":"ldgm","count":2,"min_var":2,"max_var":4,"max_chk":3,"density":0.3},
            "channel":"bsc","samples":1,"seed":5}"#,
    )
    .unwrap();
    assert!(run_experiment(&c).is_err());
}
