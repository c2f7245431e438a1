use scq_core::bounds::Scenario;
use scq_core::harness::emit::write_results_csv;
use scq_core::harness::ingest::{ingest_labels, write_labels};
use scq_core::harness::instances::{genre_corpus, planted_instance};
use scq_core::harness::{recover, run_sweep, run_trial, summarize, ExperimentConfig, TrialOptions};
use scq_core::model::{gram, sample_uniform, Params};
use scq_core::oracle::{batch_pairwise, OracleHandle, OracleKind, PairOracle, ReplayOracle};
use scq_core::quantized::RecoveryOptions;
use scq_core::rng::noise_seed;
use scq_core::worstcase::recover_worst_case;
use std::sync::Arc;

fn csv_of(cfg: &ExperimentConfig) -> Vec<u8> {
    let mut buf = Vec::new();
    write_results_csv(&mut buf, &run_sweep(cfg, None)).unwrap();
    buf
}

#[test]
fn toml_grid_expands_in_declared_order() {
    let cfg = ExperimentConfig::from_toml(
        r#"
        scenario = "quantized-uniform"
        n = [200, 300]
        k = 6
        q = [0.0, 0.1]
        s_size = 150
        trials = 2
        seed = 5
        "#,
    )
    .unwrap();
    let pts = cfg.points();
    assert_eq!(pts.len(), 4);
    assert_eq!((pts[1].n, pts[1].q), (200, 0.1));
    assert_eq!((pts[2].n, pts[2].q), (300, 0.0));
    assert!(pts.iter().all(|p| p.s_size == Some(150)));
    assert!(ExperimentConfig::from_toml("scenario = \"quantized-uniform\"\nbogus = 1").is_err());
    assert!(ExperimentConfig::from_toml("scenario = \"quantized-uniform\"\ntrials = 0").is_err());
}

#[test]
fn overrides_replace_file_values() {
    let over = [("n".to_string(), "100,200".to_string()), ("seed".to_string(), "9".to_string())];
    let cfg = ExperimentConfig::load(Some("scenario = \"direct-uniform\"\nn = 50"), &over).unwrap();
    assert_eq!(cfg.n.values(), vec![100, 200]);
    assert_eq!(cfg.seed, 9);
}

#[test]
fn sweeps_are_reproducible_per_seed() {
    let mut cfg = ExperimentConfig::new(Scenario::QuantizedUniform);
    cfg.n = scq_core::harness::Grid::One(300);
    cfg.q = scq_core::harness::Grid::Many(vec![0.0, 0.05]);
    cfg.s_size = Some(scq_core::harness::Grid::One(300));
    cfg.trials = 3;
    cfg.seed = 11;
    let a = csv_of(&cfg);
    assert_eq!(a, csv_of(&cfg));
    cfg.seed = 12;
    assert_ne!(a, csv_of(&cfg));
    let results = run_sweep(&cfg, None);
    assert_eq!(summarize(&results).len(), 2);
    assert!(results.iter().all(|r| r.queries == 44850 && r.failure != "invalid-params"));
}

#[test]
fn recorded_responses_replay_to_the_same_recovery() {
    let mut cfg = ExperimentConfig::new(Scenario::QuantizedUniform);
    cfg.n = scq_core::harness::Grid::One(1000);
    cfg.k = scq_core::harness::Grid::One(8);
    cfg.s_size = Some(scq_core::harness::Grid::One(1000));
    cfg.seed = 3;
    let point = &cfg.points()[0];
    let out = run_trial(&cfg, point, 0, 0, None, &TrialOptions { keep_log: true, ..Default::default() });
    assert!(out.result.success);
    let log = out.log.unwrap();
    assert_eq!(log.len() as u64, out.result.queries);
    let mut replay = ReplayOracle::new(point.n, log).unwrap();
    let params = point.params(cfg.epsilon);
    let rec = recover(Scenario::QuantizedUniform, &mut replay, &params, 1000, out.result.seed, &RecoveryOptions::default(), 0);
    assert!(rec.failure.is_none());
    let truth = scq_core::harness::make_truth(&cfg, point, out.result.seed).unwrap();
    assert_eq!(rec.similarity.unwrap(), gram(&truth));
    assert_eq!(replay.ledger_size(), replay.recorded());
}

#[test]
fn replaying_a_short_log_reports_the_gap() {
    let truth = Arc::new(sample_uniform(&Params::new(40, 6, 2), 1).unwrap());
    let mut o = OracleHandle::new(truth, OracleKind::Quantized { q: 0.0 }, 1).unwrap();
    batch_pairwise(&mut o, &(0..20).collect::<Vec<_>>()).unwrap();
    let mut replay = ReplayOracle::new(40, o.log()).unwrap();
    let rec = recover(Scenario::QuantizedUniform, &mut replay, &Params::new(40, 6, 2), 40, 1, &RecoveryOptions::default(), 0);
    assert_eq!(rec.failure.map(|e| e.tag()), Some("incomplete-data"));
}

#[test]
fn worst_case_cover_reproduces_the_sample_responses() {
    let truth = Arc::new(planted_instance(600, 6, 3, 8, 21).unwrap());
    let params = Params::new(600, 6, 3);
    let mut o = OracleHandle::new(truth.clone(), OracleKind::Quantized { q: 0.0 }, noise_seed(21)).unwrap();
    let out = recover_worst_case(&mut o, &params, 200, 21, false).unwrap();
    let assignment = out.assignment.unwrap();
    let masks = assignment.masks(600);
    for (a, &i) in out.s.iter().enumerate() {
        for &j in &out.s[a + 1..] {
            assert_eq!((masks[i] & masks[j] != 0) as u32, o.answer(i, j), "pair ({i}, {j})");
        }
    }
}

#[test]
fn genre_labels_ingest_and_recover() {
    let rows = genre_corpus(7);
    let mut csv = Vec::new();
    write_labels(&mut csv, &rows).unwrap();
    let ing = ingest_labels(&csv[..], 2).unwrap();
    assert_eq!((ing.stats.n, ing.stats.k, ing.stats.dropped), (3470, 5, 1612));
    assert!((ing.stats.alpha_triplet - 53.0 / 3470.0).abs() < 1e-12);
    assert_eq!(ing.stats.exclusive.iter().min(), Some(&21));
    let truth = Arc::new(ing.truth);

    let mut cfg = ExperimentConfig::new(Scenario::WorstCaseDelta2);
    cfg.seed = 2;
    let point = scq_core::harness::GridPoint { n: 3470, k: 5, delta: 2, p: 0.5, q: 0.0, sigma: 1.0, s_size: None };
    let out = run_trial(&cfg, &point, 0, 0, Some(&truth), &TrialOptions::default()).result;
    assert_eq!(out.s_size, 850);
    assert!(out.success, "{out:?}");
    assert_eq!(out.queries, out.queries_expected.unwrap());
}
