use proptest::prelude::*;

use sourcebias::debias::*;
use sourcebias::store::load_embeddings;

fn small_set() -> TripletSet {
    let data = shortcut_dataset(&ShortcutConfig {
        dim: 8,
        train: 24,
        test: 8,
        ..ShortcutConfig::default()
    })
    .unwrap();
    data.train
}

#[test]
fn alpha_zero_is_bitwise_rank_only() {
    let set = small_set();
    let cfg = TrainConfig {
        epochs: 5,
        batch_size: 7,
        rank: 4,
        ..TrainConfig::default()
    };
    let (a, la) = train(&set, &cfg.with_alpha(0.0)).unwrap();
    let (b, lb) = train_rank_only(&set, &cfg).unwrap();
    let bits = |h: &ScoringHead| h.weights().iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&a), bits(&b));
    // The α = 0 log still reports the unweighted hinge for monitoring.
    for (x, y) in la.epochs.iter().zip(&lb.epochs) {
        assert_eq!((x.rank.to_bits(), x.total.to_bits()), (y.rank.to_bits(), y.total.to_bits()));
        assert_eq!(x.total, x.rank);
    }
}

#[test]
fn nonzero_alpha_changes_the_head() {
    let set = small_set();
    let cfg = TrainConfig {
        epochs: 5,
        rank: 4,
        ..TrainConfig::default()
    };
    let (a, _) = train(&set, &cfg.with_alpha(0.0)).unwrap();
    let (b, _) = train(&set, &cfg.with_alpha(1.0)).unwrap();
    assert_ne!(a.weights(), b.weights());
}

#[test]
fn training_is_deterministic_across_thread_counts() {
    let set = small_set();
    let cfg = TrainConfig {
        epochs: 3,
        rank: 4,
        alpha: 0.1,
        ..TrainConfig::default()
    };
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
    let (a, _) = one.install(|| train(&set, &cfg)).unwrap();
    let (b, _) = four.install(|| train(&set, &cfg)).unwrap();
    assert_eq!(a.to_json(), b.to_json());
}

#[test]
fn zero_head_loss_is_log_of_candidates() {
    let (_, batch) = gradient_probe(1, 5, 6, 3, 0.0, false).unwrap();
    let head = ScoringHead::zeros(3, 6, DEFAULT_TAU).unwrap();
    let (parts, grad) = loss_and_grad(&head, &batch, DebiasTerm::from_alpha(1.0)).unwrap();
    assert!((parts.rank - 9f64.ln()).abs() < 1e-12);
    assert_eq!(parts.debias, 0.0);
    assert!(grad.iter().all(|g| *g == 0.0));
}

#[test]
fn hinge_examples() {
    assert_eq!(debias_loss(&[0.8], &[0.5]).unwrap(), 0.30000000000000004);
    assert_eq!(debias_loss(&[0.2], &[0.5]).unwrap(), 0.0);
    assert_eq!(debias_loss(&[0.5, 0.9], &[0.5, 0.4]).unwrap(), 0.5);
    assert!(debias_loss(&[0.5], &[]).is_err());
}

#[test]
fn head_json_roundtrips_exactly() {
    let set = small_set();
    let (h, _) = train(&set, &TrainConfig { epochs: 2, rank: 3, ..TrainConfig::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("head.json");
    h.save(&p).unwrap();
    assert_eq!(ScoringHead::load(&p).unwrap(), h);
}

#[test]
fn fixture_triplets_train() {
    let dir = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/fixtures/");
    let mut emb = load_embeddings(format!("{dir}embeddings.jsonl")).unwrap();
    for (id, v) in load_embeddings(format!("{dir}query_embeddings.jsonl")).unwrap().iter() {
        emb.insert(id, v.to_vec()).unwrap();
    }
    let set = TripletSet::new(load_triplets(format!("{dir}triplets.tsv")).unwrap(), emb).unwrap();
    assert_eq!((set.len(), set.dim()), (4, 4));
    let (_, log) = train(&set, &TrainConfig { epochs: 3, rank: 4, batch_size: 2, ..TrainConfig::default() }).unwrap();
    assert_eq!(log.epochs.len(), 3);
}

#[test]
fn invalid_configs_rejected() {
    let set = small_set();
    for cfg in [
        TrainConfig { alpha: -1.0, ..TrainConfig::default() },
        TrainConfig { lr: 0.0, ..TrainConfig::default() },
        TrainConfig { epochs: 0, ..TrainConfig::default() },
        TrainConfig { tau: 0.0, ..TrainConfig::default() },
        TrainConfig { rank: 0, ..TrainConfig::default() },
    ] {
        assert!(train(&set, &cfg).is_err(), "{cfg:?}");
    }
    let cfg = TrainConfig { epochs: 1, rank: 2, ..TrainConfig::default() };
    assert!(alpha_sweep(&set, &set, &cfg, &[]).is_err());
    assert!(alpha_sweep(&set, &set, &cfg, &[0.1, 0.1]).is_err());
}

/// Queries drawn independently of the shortcut give every generated doc the
/// same extra component, and a bilinear head can push its score up for all
/// queries at once; generated twins then win at every α on this grid.
#[test]
fn unshifted_queries_favour_generated_at_every_alpha() {
    let data = shortcut_dataset(&ShortcutConfig { query_shortcut: 0.0, ..ShortcutConfig::default() }).unwrap();
    let cfg = TrainConfig { rank: 32, ..TrainConfig::default() };
    let rows = alpha_sweep(&data.train, &data.test, &cfg, &[0.0, 1e-2, 1.0]).unwrap();
    for r in &rows {
        assert_eq!(r.delta_ndcg1, 200.0, "alpha {}", r.alpha);
    }
}

#[test]
fn spearman_basics() {
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
    assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
    assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gradients_match_finite_differences(seed in any::<u64>(), alpha in prop::sample::select(vec![0.0, 1e-3, 0.5, 1.0])) {
        let (head, batch) = gradient_probe(seed, 3, 5, 3, 1e-2, alpha > 0.0).unwrap();
        let err = gradient_check(&head, &batch, DebiasTerm::from_alpha(alpha), 1e-5).unwrap();
        prop_assert!(err < 1e-4, "relative error {}", err);
    }

    #[test]
    fn hinge_is_nonnegative_and_zero_when_human_wins(
        pairs in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..20)
    ) {
        let g: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let h: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        prop_assert!(debias_loss(&g, &h).unwrap() >= 0.0);
        let hw: Vec<f64> = g.iter().map(|x| x + 1.0).collect();
        prop_assert_eq!(debias_loss(&g, &hw).unwrap(), 0.0);
    }
}
