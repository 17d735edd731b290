use std::fs;
use std::path::PathBuf;

use proptest::prelude::*;

use sourcebias::builder::{build_benchmark, clean_generated, corpus_stats, jaccard_overlap, BuildConfig, DEFAULT_CLEANUP_PATTERNS};
use sourcebias::error::Error;
use sourcebias::store::*;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn adapter_formats_load() {
    let emb = load_embeddings(fixture("embeddings.jsonl")).unwrap();
    assert_eq!((emb.len(), emb.dim()), (12, 4));
    assert_eq!(emb.get("d3@llama2").unwrap()[2], 0.85);
    let lp = load_logprobs(fixture("logprobs.jsonl")).unwrap();
    assert_eq!(lp[0].token_count(), 5);
    let raw = load_generated_texts(fixture("generated.jsonl")).unwrap();
    assert!(raw["d1"].starts_with("Sure, here"));
}

#[test]
fn beir_inputs_load() {
    let corpus = load_corpus(fixture("corpus.jsonl")).unwrap();
    assert_eq!(corpus.count(Source::Human), 6);
    let queries = load_queries(fixture("queries.jsonl")).unwrap();
    let qrels = load_qrels(fixture("qrels.tsv")).unwrap();
    assert_eq!(qrels.len(), 6);
    qrels.validate(Some(&queries), Some(&corpus)).unwrap();
}

#[test]
fn roundtrips() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("x");
    let corpus = load_corpus(fixture("corpus.jsonl")).unwrap();
    write_corpus(&corpus, &p).unwrap();
    assert_eq!(load_corpus(&p).unwrap(), corpus);
    let emb = load_embeddings(fixture("embeddings.jsonl")).unwrap();
    write_embeddings(&emb, &p).unwrap();
    assert_eq!(load_embeddings(&p).unwrap(), emb);
    let lp = load_logprobs(fixture("logprobs.jsonl")).unwrap();
    write_logprobs(&lp, &p).unwrap();
    assert_eq!(load_logprobs(&p).unwrap(), lp);
    let q = load_qrels(fixture("qrels.tsv")).unwrap();
    write_qrels(&q, &p).unwrap();
    assert_eq!(load_qrels(&p).unwrap(), q);
}

#[test]
fn malformed_lines_report_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("bad.jsonl");
    fs::write(&p, "{\"_id\": \"a\", \"vector\": [1.0, 2.0]}\n\n{\"_id\": \"b\", \"vector\": [1.0]}\n").unwrap();
    match load_embeddings(&p) {
        Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
        other => panic!("{other:?}"),
    }
    fs::write(&p, "q1 d1 1\nq1 d1 x\n").unwrap();
    assert!(matches!(load_qrels(&p), Err(Error::Parse { line: 2, .. })));
    fs::write(&p, "q1 d1 1\nq1 d2 -1\n").unwrap();
    assert!(matches!(load_qrels(&p), Err(Error::Parse { line: 2, .. })));
    fs::write(&p, "q Q0 d 1 0.5\n").unwrap();
    assert!(matches!(load_run(&p), Err(Error::Parse { line: 1, .. })));
    assert!(matches!(load_corpus(dir.path().join("missing")), Err(Error::Io { .. })));
}

#[test]
fn duplicate_ids_rejected() {
    assert!(Corpus::new(vec![SourcedDocument::human("a", "", "x"), SourcedDocument::human("a", "", "y")]).is_err());
    let mut e = EmbeddingSet::new(1).unwrap();
    e.insert("a", vec![1.0]).unwrap();
    assert!(e.insert("a", vec![2.0]).is_err());
    assert!(e.insert("b", vec![1.0, 2.0]).is_err());
}

#[test]
fn benchmark_from_fixtures() {
    let corpus = load_corpus(fixture("corpus.jsonl")).unwrap();
    let raw = load_generated_texts(fixture("generated.jsonl")).unwrap();
    let qrels = load_qrels(fixture("qrels.tsv")).unwrap();
    let (mixed, mq) = build_benchmark(&corpus, &raw, &qrels, &BuildConfig::new("llama2")).unwrap();
    assert_eq!(mixed.len(), 12);
    for (q, d, g) in qrels.iter() {
        assert_eq!(mq.grade(q, &format!("{d}@llama2")), Some(g));
        assert_eq!(mq.grade(q, d), Some(g));
    }
    let twin = mixed.get("d2@llama2").unwrap();
    assert_eq!(twin.origin_id.as_deref(), Some("d2"));
    assert_eq!(twin.model_tag.as_deref(), Some("llama2"));
    assert_eq!(twin.text, "Sleeping too little increases the risk of heart disease.");

    let stats = corpus_stats(&mixed, Some(&load_embeddings(fixture("embeddings.jsonl")).unwrap())).unwrap();
    assert_eq!(stats.pairs.len(), 6);
    assert!(stats.mean_jaccard > 0.0 && stats.mean_jaccard < 1.0);
}

#[test]
fn partial_rewrites_and_unknown_origins() {
    let corpus = load_corpus(fixture("corpus.jsonl")).unwrap();
    let mut raw = load_generated_texts(fixture("generated.jsonl")).unwrap();
    let qrels = load_qrels(fixture("qrels.tsv")).unwrap();
    raw.remove("d6");
    let (mixed, mq) = build_benchmark(&corpus, &raw, &qrels, &BuildConfig::new("llama2")).unwrap();
    assert_eq!(mixed.len(), 11);
    assert_eq!(mq.grade("q2", "d6@llama2"), None);
    raw.insert("nope".into(), "text".into());
    assert!(matches!(
        build_benchmark(&corpus, &raw, &qrels, &BuildConfig::new("llama2")),
        Err(Error::UnknownId(_))
    ));
}

#[test]
fn cleanup_examples() {
    let p = DEFAULT_CLEANUP_PATTERNS;
    assert_eq!(clean_generated("Sure, here's a possible rewrite of the text:\nBody.", &p).unwrap(), "Body.");
    assert!(clean_generated("Sure, here's a possible rewrite of the text:", &p).is_err());
    assert_eq!(clean_generated("Plain body.", &p).unwrap(), "Plain body.");
}

#[test]
fn jaccard_identical_and_disjoint() {
    assert_eq!(jaccard_overlap("a b c", "c b a").unwrap(), (1.0, 1.0));
    assert_eq!(jaccard_overlap("a b", "c d").unwrap().0, 0.0);
}

proptest! {
    #[test]
    fn cleanup_is_idempotent(lines in proptest::collection::vec("(Sure, here|Here is|Here's|Body|text)[ a-z:]{0,8}", 1..5)) {
        let raw = lines.join("\n");
        if let Ok(once) = clean_generated(&raw, &DEFAULT_CLEANUP_PATTERNS) {
            prop_assert_eq!(clean_generated(&once, &DEFAULT_CLEANUP_PATTERNS).unwrap(), once);
        }
    }

    #[test]
    fn run_files_roundtrip(scores in proptest::collection::vec(-1e6f64..1e6, 1..20)) {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run");
        let scored = scores.iter().enumerate().map(|(i, s)| (format!("d{i}"), *s)).collect();
        let run = RunList::from_scored("q", scored).unwrap();
        write_run(std::slice::from_ref(&run), &p, "tag").unwrap();
        prop_assert_eq!(load_run(&p).unwrap(), vec![run]);
    }
}
