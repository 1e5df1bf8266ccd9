use std::sync::Arc;
use std::time::Duration;

use enrichbench::datasets::{parse_pairs, synthetic_pairset};
use enrichbench::embed::{EmbedProviderConfig, Embedder, MockEmbedder};
use enrichbench::enrich::{
    builtin_prompts, ChatProviderConfig, EnrichInput, Enricher, FallbackPolicy, FaultChat,
    FaultStep, IdentityChat,
};
use enrichbench::eval::{
    run_experiment, scores_to_ap_percent, DatasetSource, ExperimentConfig, Metric, BASELINE,
};
use enrichbench::provider::RetryPolicy;
use enrichbench::store::Cache;
use enrichbench::textprep::CleanText;

fn inputs(texts: &[&str]) -> Vec<EnrichInput> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| EnrichInput::new(format!("d{i}"), CleanText::untouched(*t)))
        .collect()
}

fn fast_retry(max_retries: u32) -> RetryPolicy {
    RetryPolicy {
        max_retries,
        base_delay: Duration::from_millis(1),
        max_delay: Duration::from_millis(2),
    }
}

#[test]
fn enrichment_resumes_from_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    let provider = Arc::new(IdentityChat::default());
    let enricher =
        Enricher::with_provider(ChatProviderConfig::identity(), provider.clone()).unwrap();
    let prompt = &builtin_prompts()[1];
    let docs = inputs(&[
        "card declined twice",
        "where is my refund",
        "card declined twice",
    ]);

    let first = enricher.enrich_batch(&docs, prompt, &cache).unwrap();
    let calls = provider.calls();
    assert!(calls >= 2);
    let second = enricher.enrich_batch(&docs, prompt, &cache).unwrap();
    assert_eq!(provider.calls(), calls);
    assert_eq!(first, second);
    assert_eq!(cache.stats().unwrap().entries, 2);
}

#[test]
fn transient_failures_are_retried() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    let flaky = FaultChat::new(
        Arc::new(IdentityChat::default()),
        vec![FaultStep::Fail, FaultStep::Fail],
        FaultStep::Ok,
        503,
    );
    let mut cfg = ChatProviderConfig::identity();
    cfg.retry = fast_retry(3);
    let enricher = Enricher::with_provider(cfg, Arc::new(flaky)).unwrap();
    let rec = enricher
        .enrich(&inputs(&["hello"])[0], &builtin_prompts()[0], &cache)
        .unwrap();
    assert_eq!(rec.enriched, "hello");
    assert_eq!(rec.attempt_count, 3);
    assert!(!rec.fallback_used);
}

#[test]
fn exhausted_retries_fall_back_without_caching() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    let mut cfg = ChatProviderConfig::identity();
    cfg.retry = fast_retry(1);
    cfg.fallback = FallbackPolicy::Passthrough;
    let down = FaultChat::new(
        Arc::new(IdentityChat::default()),
        Vec::new(),
        FaultStep::Fail,
        500,
    );
    let enricher = Enricher::with_provider(cfg.clone(), Arc::new(down)).unwrap();
    let recs = enricher
        .enrich_batch(&inputs(&["a b", "c d"]), &builtin_prompts()[0], &cache)
        .unwrap();
    assert!(recs
        .iter()
        .all(|r| r.fallback_used && r.enriched == r.original.value));
    assert_eq!(cache.stats().unwrap().entries, 0);

    cfg.fallback = FallbackPolicy::Fail;
    let down = FaultChat::new(
        Arc::new(IdentityChat::default()),
        Vec::new(),
        FaultStep::Fail,
        500,
    );
    let enricher = Enricher::with_provider(cfg, Arc::new(down)).unwrap();
    assert!(enricher
        .enrich_batch(&inputs(&["a b"]), &builtin_prompts()[0], &cache)
        .is_err());
}

#[test]
fn embeddings_come_from_cache_on_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    let mock = Arc::new(MockEmbedder::new(32, 9).unwrap());
    let mut cfg = EmbedProviderConfig::mock(32, 9);
    cfg.batch_size = 2;
    let embedder = Embedder::with_provider(cfg, mock.clone()).unwrap();
    let texts = ["one two", "three four", "five", "one two"];
    let first = embedder.embed_batch(&texts, &cache).unwrap();
    let calls = mock.calls();
    assert_eq!(calls, 2);
    let second = embedder.embed_batch(&texts, &cache).unwrap();
    assert_eq!(mock.calls(), calls);
    assert_eq!(first, second);
    assert_eq!(first[0], first[3]);
}

#[test]
fn injected_scores_give_hand_computed_ap() {
    let set = parse_pairs(
        "fixture",
        r#"{"id": "1", "text_a": "a", "text_b": "b", "label": 1}
{"id": "2", "text_a": "a", "text_b": "b", "label": 0}
{"id": "3", "text_a": "a", "text_b": "b", "label": 1}
{"id": "4", "text_a": "a", "text_b": "b", "label": 0}
{"id": "5", "text_a": "a", "text_b": "b", "label": 1}
"#,
    )
    .unwrap();
    // Ranking 1, 2, 3, 4, 5: positives at ranks 1, 3 and 5.
    let ap = scores_to_ap_percent(&set, &[0.9, 0.8, 0.7, 0.6, 0.5]).unwrap();
    let want = 100.0 * (1.0 + 2.0 / 3.0 + 3.0 / 5.0) / 3.0;
    assert!((ap - want).abs() < 1e-12);
}

#[test]
fn experiment_over_files_fills_every_cell() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = synthetic_pairset(8, 8, 3);
    std::fs::write(dir.path().join("pairs.jsonl"), pairs.to_jsonl()).unwrap();
    let mut classification = String::new();
    for (i, (text, label)) in [
        ("ATM ate my card", "card"),
        ("card stuck in machine", "card"),
        ("my card was swallowed", "card"),
        ("reset my PIN please", "pin"),
        ("forgot pin code", "pin"),
        ("new pin needed", "pin"),
    ]
    .iter()
    .enumerate()
    {
        let split = if i % 3 == 2 { "test" } else { "train" };
        classification.push_str(&format!(
            "{{\"id\": \"{i}\", \"text\": \"{text}\", \"label\": \"{label}\", \"split\": \"{split}\"}}\n"
        ));
    }
    std::fs::write(dir.path().join("intents.jsonl"), classification).unwrap();

    let cfg_json = r#"{
        "datasets": [
            {"name": "pairs", "task": "pair", "path": "pairs.jsonl"},
            {"name": "intents", "task": "classification", "path": "intents.jsonl", "metric": "accuracy"}
        ],
        "variants": ["baseline", "paper-1", "paper-2"],
        "chat": {"provider_id": "mock-rulebook", "model_id": "rulebook-v1", "kind": "rulebook"},
        "embed": {"provider_id": "mock", "model_id": "mock-hash-64-5", "kind": "mock", "dim": 64, "seed": 5},
        "pair_sides": "a",
        "preprocess_stage": "after_enrichment"
    }"#;
    let mut cfg: ExperimentConfig = serde_json::from_str(cfg_json).unwrap();
    cfg.resolve_paths(dir.path());
    assert!(matches!(&cfg.datasets[0].source, DatasetSource::Path { path } if path.is_absolute()));

    let cache = Cache::open(dir.path().join("cache")).unwrap();
    let outcome = run_experiment(&cfg, &cache).unwrap();
    let table = &outcome.table;
    assert!(table.is_complete());
    assert_eq!(table.rows.len(), 6);
    assert_eq!(table.metric_for("intents"), Some(Metric::Accuracy));
    assert_eq!(table.metric_for("pairs"), Some(Metric::CosineAp));
    for ds in ["pairs", "intents"] {
        let score = table.score(BASELINE, ds).unwrap();
        assert!((0.0..=100.0).contains(&score));
        assert!(table.improvement_for(ds).is_some());
    }

    let rerun = run_experiment(&cfg, &cache).unwrap();
    assert_eq!(rerun.table, outcome.table);
}

#[test]
fn unknown_variant_is_rejected() {
    let cfg = ExperimentConfig {
        variants: vec!["paper-7".into()],
        ..serde_json::from_str(
            r#"{"datasets": [{"name": "s", "task": "pair", "synthetic": {"n_pos": 2, "n_neg": 2, "seed": 1}}],
                "variants": ["baseline"],
                "chat": {"provider_id": "mock-identity", "model_id": "identity", "kind": "identity"},
                "embed": {"provider_id": "mock", "model_id": "mock-hash-8-1", "kind": "mock", "dim": 8, "seed": 1}}"#,
        )
        .unwrap()
    };
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    assert!(run_experiment(&cfg, &cache).is_err());
}
