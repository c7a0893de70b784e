use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::*;
use crate::model::{ModelConfig, Params};

fn gaussian(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, p), |_| rng.sample(StandardNormal))
}

fn board(fen: &str) -> Board {
    Board::from_fen(fen).unwrap()
}

fn concept(name: &str) -> Builtin {
    Builtin::by_name(name, 1).unwrap()
}

#[test]
fn linear_fixture_recovers_r2() {
    let x = gaussian(400, 20, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let y: Vec<f64> = x
        .rows()
        .into_iter()
        .map(|r| 2.0 * r[0] - 3.0 * r[1] + 0.5 * r[2] + 0.01 * rng.sample::<f64, _>(StandardNormal))
        .collect();
    let s = fit_probe(x.view(), &y, ConceptKind::Continuous, &FitConfig::default(), 0).unwrap();
    assert_eq!(s.metric, Metric::R2);
    assert!(s.score > 0.99, "{}", s.score);
}

#[test]
fn threshold_fixture_recovers_f1() {
    // desk-scale position count; the fitted boundary sharpens with more data
    let x = gaussian(5000, 20, 3);
    let y: Vec<f64> = x.rows().into_iter().map(|r| if r[4] > 0.3 { 1.0 } else { 0.0 }).collect();
    let s = fit_probe(x.view(), &y, ConceptKind::Binary, &FitConfig::default(), 0).unwrap();
    assert_eq!(s.metric, Metric::MacroF1);
    assert!(s.score > 0.99, "{}", s.score);
}

#[test]
fn null_fixtures_score_near_chance() {
    let x = gaussian(500, 20, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let y: Vec<f64> = (0..500).map(|_| rng.sample(StandardNormal)).collect();
    let s = fit_probe(x.view(), &y, ConceptKind::Continuous, &FitConfig::default(), 0).unwrap();
    assert!(s.score <= 0.05, "{}", s.score);
    let yb: Vec<f64> = (0..500).map(|_| if rng.gen_bool(0.5) { 1.0 } else { 0.0 }).collect();
    let s = fit_probe(x.view(), &yb, ConceptKind::Binary, &FitConfig::default(), 0).unwrap();
    assert!((0.3..=0.7).contains(&s.score), "{}", s.score);
}

#[test]
fn degenerate_labels_are_skipped() {
    let x = gaussian(100, 4, 7);
    assert!(fit_probe(x.view(), &[1.0; 100], ConceptKind::Continuous, &FitConfig::default(), 0).is_err());
    assert!(fit_probe(x.view(), &[0.0; 100], ConceptKind::Binary, &FitConfig::default(), 0).is_err());
}

#[test]
fn penalty_selection_is_deterministic() {
    let x = gaussian(200, 10, 8);
    let y: Vec<f64> = x.rows().into_iter().map(|r| r[0] + 0.3 * r[5]).collect();
    let a = fit_lasso(x.view(), &y, &FitConfig::default(), 11);
    let b = fit_lasso(x.view(), &y, &FitConfig::default(), 11);
    assert_eq!(a.lambda, b.lambda);
    assert_eq!(a.weights, b.weights);
}

#[test]
fn downsampling_balances_only_the_given_split() {
    let labels: Vec<bool> = (0..100).map(|i| i % 5 == 0).collect();
    let (train, test) = train_test_split(100, 0.2, 3);
    let bal = downsample_majority(&train, &labels, 1);
    let pos = bal.iter().filter(|&&i| labels[i]).count();
    assert_eq!(pos * 2, bal.len());
    assert!(bal.iter().all(|i| train.contains(i)));
    assert!(bal.iter().all(|i| !test.contains(i)));
    assert_eq!(pos, train.iter().filter(|&&i| labels[i]).count());
}

#[test]
fn macro_f1_and_r2_by_hand() {
    let t = [true, true, false, false];
    assert_eq!(macro_f1(&t, &t), 1.0);
    // class true: tp 1, fp 1, fn 1 -> 0.5; class false likewise
    assert_eq!(macro_f1(&t, &[true, false, true, false]), 0.5);
    assert_eq!(r2(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), Some(1.0));
    assert_eq!(r2(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]), Some(0.0));
    assert_eq!(r2(&[1.0, 1.0], &[0.0, 2.0]), None);
}

#[test]
fn concept_values() {
    let start = Board::startpos();
    assert_eq!(concept("active_two_bishops").compute(&start, None).unwrap(), 1.0);
    assert_eq!(concept("opponent_two_bishops").compute(&start, None).unwrap(), 1.0);
    assert_eq!(concept("material_balance").compute(&start, None).unwrap(), 0.0);

    let bare = board("K6k/8/8/8/8/8/8/8 w - - 0 1");
    for name in ["active_two_bishops", "opponent_two_bishops", "can_capture_queen", "capture_on_d3"] {
        assert_eq!(concept(name).compute(&bare, None).unwrap(), 0.0, "{name}");
    }

    // black knight on d5 attacks the white queen on e3
    let fork = board("4k3/8/8/3n4/8/4Q3/8/4K3 b - - 0 1");
    assert_eq!(concept("can_capture_queen").compute(&fork, None).unwrap(), 1.0);
    assert_eq!(concept("material_balance").compute(&fork, None).unwrap(), -6.0);
    let white = board("4k3/8/8/3n4/8/4Q3/8/4K3 w - - 0 1");
    assert_eq!(concept("can_capture_queen").compute(&white, None).unwrap(), 0.0);

    let d3 = board("4k3/8/8/8/8/3p4/4P3/4K3 w - - 0 1");
    assert_eq!(concept("capture_on_d3").compute(&d3, None).unwrap(), 1.0);
}

#[test]
fn engine_concept_needs_engine() {
    let err = compute_labels(&concept("engine_eval"), &[Board::startpos()], None).unwrap_err();
    assert!(matches!(err, ProbeError::EngineRequired(_)));
}

#[test]
fn activations_shapes_and_invariance() {
    let cfg = ModelConfig::toy();
    let net = Network::new(&Params::init(&cfg, 2));
    let boards = [Board::startpos(), board("r1bqkbnr/pppp1ppp/2n5/4p3/4P3/5N2/PPPP1PPP/RNBQKB1R b KQkq - 3 3")];
    let acts = extract_activations(&net, &boards, &[0, 5, 10]).unwrap();
    assert_eq!(acts.pre.dim(), (2, cfg.patch_channels * 64));
    assert_eq!(acts.post[0].dim(), (2, cfg.patch_channels * cfg.attention_dim));
    assert_ne!(acts.post[0], acts.post[2]);

    let mut p = Params::init(&cfg, 2);
    p.zero_skill_projections();
    let acts = extract_activations(&Network::new(&p), &boards, &[0, 5, 10]).unwrap();
    assert_eq!(acts.post[0], acts.post[1]);
    assert_eq!(acts.post[0], acts.post[2]);
}

#[test]
fn probe_report_layout() {
    let net = Network::new(&Params::init(&ModelConfig::toy(), 4));
    let boards: Vec<Board> = crate::trainer::random_examples(40, 11, 9)
        .iter()
        .enumerate()
        .map(|(i, _)| if i % 2 == 0 { Board::startpos() } else { board("4k3/8/8/3n4/8/4Q3/8/4K3 b - - 0 1") })
        .collect();
    let cfg = ProbeConfig {
        buckets: vec![1, 9],
        concepts: vec!["material_balance".into(), "active_two_bishops".into()],
        ..Default::default()
    };
    let results = run_probes(&net, &boards, &cfg, None, 0).unwrap();
    assert_eq!(results.len(), 2 * 4);
    let pre: Vec<_> = results.iter().filter(|r| r.layer == Layer::Pre && r.concept == "material_balance").collect();
    assert_eq!(pre[0].score, pre[1].score);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("probes.csv");
    write_probe_csv(&path, &results).unwrap();
    let text = std::fs::read_to_string(path).unwrap();
    assert!(text.starts_with('#'));
    assert_eq!(text.lines().count(), 2 + results.len());
}
