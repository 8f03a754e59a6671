use sifo_core::subspace::effective_rate;
use sifo_harness::config::{SchemeKind, SchemeSpec};
use sifo_harness::data::ue_id;
use sifo_harness::experiments::{
    adaptation_tag, run_ablation, run_all, run_effective_rate, run_loco, Ablation, CrossingReport, Workspace,
};
use sifo_harness::metrics::{percentile, write_csv};
use sifo_harness::{emit_csv, emit_plot_script, read_csv, ExperimentConfig, HarnessError, MetricsRecord, CSV_HEADER};

fn record(scheme: &str, site: u32, budget: usize, seed: u64, eta: f64) -> MetricsRecord {
    MetricsRecord::from_samples(scheme, site, budget, seed, &[eta, eta / 2.0, 1.0 / 3.0], &[1.5, 2.0 / 7.0, 0.1])
}

#[test]
fn config_round_trips_through_toml_and_json() {
    let dir = tempfile::tempdir().unwrap();
    for cfg in [ExperimentConfig::desk(), ExperimentConfig::tiny()] {
        let toml_path = dir.path().join("c.toml");
        std::fs::write(&toml_path, cfg.to_toml()).unwrap();
        assert_eq!(ExperimentConfig::load(&toml_path).unwrap(), cfg);
        let json_path = dir.path().join("c.json");
        std::fs::write(&json_path, serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(ExperimentConfig::load(&json_path).unwrap(), cfg);
    }
}

#[test]
fn invalid_configs_are_config_errors() {
    let mut cfg = ExperimentConfig::tiny();
    cfg.budgets = vec![0, 25];
    assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));

    let mut cfg = ExperimentConfig::tiny();
    cfg.budgets = vec![cfg.ues_per_site];
    let err = cfg.validate().unwrap_err();
    assert_eq!(err.exit_code(), 2);

    let mut cfg = ExperimentConfig::tiny();
    cfg.schemes[0].feedback_uses = cfg.coherence_uses;
    assert!(cfg.validate().is_err());

    let mut cfg = ExperimentConfig::tiny();
    cfg.n_sites = 1;
    assert!(cfg.validate().is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    std::fs::write(&path, "n_sites = \"four\"").unwrap();
    assert_eq!(ExperimentConfig::load(&path).unwrap_err().exit_code(), 2);
    assert!(ExperimentConfig::load(&dir.path().join("missing.toml")).is_err());
}

#[test]
fn numerical_errors_exit_with_three() {
    let e: HarnessError = sifo_core::Error::ZeroChannel.into();
    assert_eq!(e.exit_code(), 3);
}

#[test]
fn default_overheads() {
    let conv = SchemeSpec::with_default_overhead(SchemeKind::ConvT2Omp, 16, 64);
    let sifo = SchemeSpec::with_default_overhead(SchemeKind::Sifo, 16, 64);
    assert_eq!(conv.overhead_uses(), 16 + 64 + 8);
    assert_eq!(sifo.overhead_uses(), 16 + 1);
    let cfg = ExperimentConfig::desk();
    assert_eq!(cfg.overhead(SchemeKind::ConvT2Dft), 88);
    assert_eq!(cfg.overhead(SchemeKind::FusionFineTune), 17);
}

#[test]
fn smaller_overhead_wins_at_equal_capture() {
    for eta in [0.1, 0.5, 0.9, 1.0] {
        let conv = effective_rate(eta, 10.0, 307, 1000).unwrap();
        let sifo = effective_rate(eta, 10.0, 50, 1000).unwrap();
        assert!(sifo > conv);
    }
}

#[test]
fn percentiles_interpolate_linearly() {
    let v = [1.0, 2.0, 3.0, 4.0];
    assert_eq!(percentile(&v, 0.5), 2.5);
    assert!((percentile(&v, 0.1) - 1.3).abs() < 1e-12);
    assert!((percentile(&v, 0.9) - 3.7).abs() < 1e-12);
    assert_eq!(percentile(&[7.0], 0.9), 7.0);
    let r = record("x", 0, 1, 1, 0.8);
    assert!(r.p10 <= r.p50 && r.p50 <= r.p90);
    assert!((0.0..=1.0).contains(&r.mean_eta));
}

#[test]
fn csv_round_trip_preserves_records() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.csv");
    let records = vec![
        record("sifo", 1, 200, 2, 0.9123456789012345),
        record("conv_t2_dft", 0, 50, 1, 0.7),
        record("sifo", 0, 50, 1, 1.0 / 7.0),
        record("sifo", 0, 50, 0, 0.31),
    ];
    emit_csv(&records, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_HEADER);
    assert_eq!(CSV_HEADER, "scheme,site,budget,seed,mean_eta,p10,p50,p90,mean_rate,n_ues,wall_ms");

    let back = read_csv(&path).unwrap();
    let mut expected = records.clone();
    sifo_harness::metrics::sort_records(&mut expected);
    assert_eq!(back, expected);
    let order: Vec<(String, u32, usize, u64)> =
        back.iter().map(|r| (r.scheme.clone(), r.site, r.budget, r.seed)).collect();
    assert_eq!(
        order,
        vec![
            ("conv_t2_dft".into(), 0, 50, 1),
            ("sifo".into(), 0, 50, 0),
            ("sifo".into(), 0, 50, 1),
            ("sifo".into(), 1, 200, 2)
        ]
    );
}

#[test]
fn empty_records_and_bad_paths_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    assert!(emit_csv(&[], &dir.path().join("e.csv")).is_err());
    assert!(write_csv(&[], Vec::new()).is_err());
    assert!(emit_plot_script(&[], "e.csv", &dir.path().join("e.gp")).is_err());
    let recs = [record("a", 0, 1, 1, 0.5)];
    assert!(emit_csv(&recs, &dir.path().join("missing/dir/e.csv")).is_err());

    let gp = dir.path().join("p.gp");
    emit_plot_script(&recs, "p.csv", &gp).unwrap();
    let script = std::fs::read_to_string(gp).unwrap();
    assert!(script.contains("'p.csv'") && script.contains("set datafile separator ','"));
}

#[test]
fn crossing_report_finds_first_budget() {
    let mut records = Vec::new();
    for (b, s) in [(0, 2.0), (50, 3.1), (200, 3.3)] {
        let mut r = record("sifo", 0, b, 1, 0.5);
        r.mean_rate = s;
        records.push(r);
        let mut c = record("conv_t2_omp", 0, b, 1, 0.9);
        c.mean_rate = 3.2;
        records.push(c);
    }
    let rep = CrossingReport::from_records(&records, &[0, 50, 200]);
    assert_eq!(rep.crossing_budget, Some(200));
    assert_eq!(rep.exceeds_at_zero, Some(false));
    assert!(rep.to_text().contains("from budget 200"));
}

fn smoke_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::tiny();
    cfg.budgets = vec![50];
    cfg.rate_budgets = vec![0, 50];
    cfg
}

#[test]
fn two_site_smoke_run() {
    let mut cfg = smoke_config();
    cfg.schemes.retain(|s| s.kind == SchemeKind::ConvT2Dft);
    let records = run_loco(&cfg, false).unwrap();
    assert_eq!(records.len(), 2);
    for r in &records {
        assert_eq!(r.scheme, "conv_t2_dft");
        assert!((0.0..=1.0).contains(&r.mean_eta) && r.p10 <= r.p50 && r.p50 <= r.p90);
        assert_eq!(r.n_ues, cfg.eval_ues);
        assert_eq!(r.wall_ms, 0);
    }
}

#[test]
fn calibration_and_evaluation_ues_are_disjoint() {
    let ws = Workspace::new(smoke_config()).unwrap();
    let mut all_ids: Vec<u64> = ws.sites.iter().flat_map(|p| p.channels.iter().map(|c| c.ue_id)).collect();
    let n = all_ids.len();
    all_ids.sort_unstable();
    all_ids.dedup();
    assert_eq!(all_ids.len(), n);
    assert_eq!(ws.sites[1].channels[3].ue_id, ue_id(1, 3));

    let reps = ws.replicates().unwrap();
    assert_eq!(reps.len(), 2);
    for rep in &reps {
        let cal = rep.calibration_ue_ids();
        let eval = rep.evaluation_ue_ids();
        assert_eq!(cal.len(), 50);
        assert_eq!(eval.len(), ws.cfg.eval_ues);
        assert!(eval.iter().all(|id| !cal.contains(id)));
        assert!(rep.split.overlap(rep.target).is_empty());
        assert_eq!(rep.memory(50).len(), 50);
        assert_eq!(rep.memory(0).len(), 0);
    }
}

#[test]
fn memory_only_without_budget_falls_back_and_is_flagged() {
    let ws = Workspace::new(smoke_config()).unwrap();
    let reps = ws.replicates().unwrap();
    let out = reps[0].evaluate(&[SchemeKind::Pretrained, SchemeKind::MemoryOnly, SchemeKind::Sifo], &[0]).unwrap();
    let mem = out.iter().find(|o| o.kind == SchemeKind::MemoryOnly).unwrap();
    let pre = out.iter().find(|o| o.kind == SchemeKind::Pretrained).unwrap();
    let sifo = out.iter().find(|o| o.kind == SchemeKind::Sifo).unwrap();
    assert!(mem.fallback);
    assert_eq!(adaptation_tag(mem), "memory_only_fallback");
    assert_eq!(mem.etas, pre.etas);
    assert_eq!(sifo.etas, pre.etas);
}

#[test]
fn zero_overhead_rates_follow_capture_ordering() {
    let mut cfg = smoke_config();
    for s in &mut cfg.schemes {
        *s = SchemeSpec { kind: s.kind, ssb_uses: 0, rsrp_report_uses: 0, csirs_uses: 0, feedback_uses: 0 };
    }
    let ws = Workspace::new(cfg).unwrap();
    let reps = ws.replicates().unwrap();
    let out = reps[1].evaluate(&[SchemeKind::ConvT2Dft, SchemeKind::Sifo], &[50]).unwrap();
    let (a, b) = (&out[0], &out[1]);
    for i in 0..a.etas.len() {
        assert_eq!(a.etas[i].total_cmp(&b.etas[i]), a.rates[i].total_cmp(&b.rates[i]));
    }
}

#[test]
fn ablations_and_rate_sweep_produce_expected_rows() {
    let cfg = smoke_config();
    assert!(matches!(run_ablation(&cfg, "warmup", false), Err(HarnessError::Config(_))));
    assert!("key_coordinates".parse::<Ablation>().is_ok());

    let keys = run_ablation(&cfg, "key_coordinates", false).unwrap();
    assert_eq!(keys.len(), 4 * 2);
    let (rate, report) = run_effective_rate(&cfg, false).unwrap();
    assert_eq!(rate.len(), 4 * 2 * 2);
    assert_eq!(report.rows.len(), 2);
    assert_eq!(report.exceeds_at_zero, Some(false));
}

#[test]
fn full_run_is_deterministic() {
    let cfg = smoke_config();
    let a = run_all(&cfg, false).unwrap();
    let b = run_all(&cfg, false).unwrap();
    let bytes = |r: &[MetricsRecord]| {
        let mut v = Vec::new();
        write_csv(r, &mut v).unwrap();
        v
    };
    for (x, y) in [(&a.loco, &b.loco), (&a.adaptation, &b.adaptation), (&a.keys, &b.keys), (&a.rate, &b.rate)] {
        assert_eq!(bytes(x), bytes(y));
    }
    assert_eq!(a.adaptation.len(), 5 * 2);
    assert!(a.codebooks.iter().all(|(_, _, c)| c.gram_energy <= 0.05 && c.max_coherence < 0.99));
}
