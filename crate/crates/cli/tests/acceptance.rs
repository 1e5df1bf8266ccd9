//! Acceptance suite. Each criterion prints one PASS/FAIL line; the test fails
//! if any criterion fails. Run with `--nocapture` to see the lines.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use enrichbench::datasets::synthetic_pairset;
use enrichbench::embed::{EmbedProvider, EmbedProviderConfig, MockEmbedder};
use enrichbench::enrich::{builtin_prompts, ChatProviderConfig};
use enrichbench::eval::{
    accuracy, average_precision, fit_classifier, improvement, loss_and_gradient, run_experiment,
    DatasetSource, DatasetSpec, ExperimentConfig, Hyperparameters, LinearClassifier, OutputPaths,
    PairSides, PreprocessStage, ScoredPair, SyntheticSpec, TaskKind, BASELINE,
};
use enrichbench::store::{AbortPoint, Cache, CacheKey};
use enrichbench::textprep::{lowercase, strip_noise, PreprocessConfig};
use enrichbench::EmbeddingVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

/// SHA-256 digests of the four built-in system prompts.
const PROMPT_DIGESTS: [&str; 4] = [
    "7f577fe4549cdaf1644eb1bcdfc767e7983a90f36c26d7ffb736d52ddce7f3e3",
    "a1e78ca56bd17ff3a150e94e76a371bdab23339d560d52ded4c63c7a090fc4c3",
    "f6dfe685bb0fc9f70f2f6314cde0f36276d28b7daee02d87bd636e362703288f",
    "f6dfe685bb0fc9f70f2f6314cde0f36276d28b7daee02d87bd636e362703288f",
];

/// Cosine AP x 100 of synthetic_pairset(50, 50, 7) under the mock embedder
/// (dim 256, seed 42).
const MOCK_AP_PERCENT: f64 = 100.0;

fn sha256_hex(s: &str) -> String {
    Sha256::digest(s.as_bytes())
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

struct Criterion {
    name: &'static str,
    budget: Duration,
    check: fn(),
}

#[test]
fn acceptance() {
    let criteria = [
        Criterion {
            name: "prompt fidelity",
            budget: Duration::from_secs(1),
            check: prompt_fidelity,
        },
        Criterion {
            name: "improvement arithmetic",
            budget: Duration::from_secs(1),
            check: improvement_arithmetic,
        },
        Criterion {
            name: "AP oracle equivalence",
            budget: Duration::from_secs(30),
            check: ap_oracle,
        },
        Criterion {
            name: "AP monotone invariance",
            budget: Duration::from_secs(10),
            check: ap_monotone,
        },
        Criterion {
            name: "classifier gradient check",
            budget: Duration::from_secs(10),
            check: gradient_check,
        },
        Criterion {
            name: "separable-cluster accuracy",
            budget: Duration::from_secs(5),
            check: separable_clusters,
        },
        Criterion {
            name: "identity-enrichment equivalence",
            budget: Duration::from_secs(10),
            check: identity_equivalence,
        },
        Criterion {
            name: "mock end-to-end discrimination",
            budget: Duration::from_secs(10),
            check: mock_discrimination,
        },
        Criterion {
            name: "cache determinism and crash safety",
            budget: Duration::from_secs(10),
            check: cache_safety,
        },
        Criterion {
            name: "preprocessing goldens",
            budget: Duration::from_secs(5),
            check: preprocessing,
        },
    ];
    let mut failed = Vec::new();
    for (i, c) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(c.check));
        let elapsed = start.elapsed();
        let verdict = match outcome {
            Ok(()) if elapsed <= c.budget => "PASS".to_owned(),
            Ok(()) => format!("FAIL (over {:?} budget)", c.budget),
            Err(_) => "FAIL".to_owned(),
        };
        println!("{verdict:<4} {:>2}. {} [{:.2?}]", i + 1, c.name, elapsed);
        if verdict != "PASS" {
            failed.push(c.name);
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

fn prompt_fidelity() {
    let prompts = builtin_prompts();
    assert_eq!(prompts.len(), 4);
    assert!(prompts[0]
        .system_text
        .starts_with("You are a text enhancer tasked with pre-processing text"));
    for (p, want) in prompts.iter().zip(PROMPT_DIGESTS) {
        assert_eq!(sha256_hex(&p.system_text), want, "{}", p.id);
    }
    assert_eq!(
        prompts[2].system_text.as_bytes(),
        prompts[3].system_text.as_bytes()
    );
}

fn improvement_arithmetic() {
    assert_eq!(format!("{:.2}", improvement(85.34, 77.13)), "8.21");
    assert_eq!(format!("{:.2}", improvement(82.24, 85.69)), "-3.45");
    assert_eq!(format!("{:.2}", improvement(76.20, 78.93)), "-2.73");
    assert_eq!(improvement(85.34, 77.13), 8.21);
    assert_eq!(improvement(82.24, 85.69), -3.45);
    assert_eq!(improvement(76.20, 78.93), -2.73);
}

fn scored(scores: &[f64], gold: &[u8]) -> Vec<ScoredPair> {
    scores
        .iter()
        .zip(gold)
        .enumerate()
        .map(|(i, (&score, &gold))| ScoredPair {
            pair_id: i.to_string(),
            score,
            gold,
        })
        .collect()
}

/// Precision at each positive's rank, averaged. Ranks count strictly higher
/// scores, with equal scores ordered by input position.
fn ap_oracle_value(scores: &[f64], gold: &[u8]) -> f64 {
    let rank = |i: usize| {
        1 + (0..scores.len())
            .filter(|&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
            .count()
    };
    let positives: Vec<usize> = (0..gold.len()).filter(|&i| gold[i] == 1).collect();
    let mut total = 0.0;
    for &i in &positives {
        let r = rank(i);
        let above = positives.iter().filter(|&&j| rank(j) <= r).count();
        total += above as f64 / r as f64;
    }
    total / positives.len() as f64
}

fn ap_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut checked = 0;
    for n in 2..=8usize {
        for mask in 0u32..(1 << n) {
            let gold: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
            let positives = gold.iter().filter(|&&g| g == 1).count();
            if positives == 0 || positives == n {
                assert!(average_precision(&scored(&vec![0.5; n], &gold)).is_err());
                continue;
            }
            for draw in 0..100 {
                let scores: Vec<f64> = if draw % 4 == 0 {
                    (0..n).map(|_| rng.gen_range(0..3) as f64 / 2.0).collect()
                } else {
                    (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
                };
                let got = average_precision(&scored(&scores, &gold)).unwrap();
                let want = ap_oracle_value(&scores, &gold);
                assert!(
                    (got - want).abs() <= 1e-9,
                    "{scores:?} {gold:?}: {got} vs {want}"
                );
                checked += 1;
            }
        }
    }
    assert!(checked > 40_000);
}

fn ap_monotone() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for _ in 0..1000 {
        let n = rng.gen_range(2..60);
        let mut gold: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        gold[0] = 0;
        gold[1] = 1;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let base = average_precision(&scored(&scores, &gold)).unwrap();
        for f in [|x: f64| 2.0 * x + 1.0, f64::tanh] {
            let mapped: Vec<f64> = scores.iter().map(|&x| f(x)).collect();
            let got = average_precision(&scored(&mapped, &gold)).unwrap();
            assert!((got - base).abs() <= 1e-12, "{got} vs {base}");
        }
    }
}

/// Mean cross-entropy of a softmax linear model plus `l2/2 · ‖W‖²`.
fn reference_loss(w: &[f64], b: &[f64], dim: usize, xs: &[Vec<f64>], ys: &[usize], l2: f64) -> f64 {
    let mut total = 0.0;
    for (x, &y) in xs.iter().zip(ys) {
        let z: Vec<f64> = b
            .iter()
            .enumerate()
            .map(|(c, bc)| bc + (0..dim).map(|k| w[c * dim + k] * x[k]).sum::<f64>())
            .collect();
        let norm: f64 = z.iter().map(|v| v.exp()).sum();
        total += norm.ln() - z[y];
    }
    total / xs.len() as f64 + 0.5 * l2 * w.iter().map(|v| v * v).sum::<f64>()
}

fn relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let diff: Vec<f64> = analytic.iter().zip(numeric).map(|(a, n)| a - n).collect();
    norm(&diff) / norm(analytic).max(norm(numeric)).max(f64::MIN_POSITIVE)
}

fn gradient_check() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let h = 1e-5;
    for _ in 0..50 {
        let dim = rng.gen_range(1..=5);
        let k = rng.gen_range(2..=4);
        let n = rng.gen_range(3..12);
        let l2 = rng.gen_range(0.0..0.1);
        let xs: Vec<Vec<f64>> = (0..n)
            .map(|_| (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect();
        let ys: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let mut model = LinearClassifier::zeros((0..k).map(|c| format!("c{c}")).collect(), dim);
        model
            .weights
            .iter_mut()
            .for_each(|w| *w = rng.gen_range(-1.0..1.0));
        model
            .bias
            .iter_mut()
            .for_each(|b| *b = rng.gen_range(-1.0..1.0));

        let x_refs: Vec<&[f64]> = xs.iter().map(Vec::as_slice).collect();
        let (loss, grad_w, grad_b) = loss_and_gradient(&model, &x_refs, &ys, l2);
        let reference = reference_loss(&model.weights, &model.bias, dim, &xs, &ys, l2);
        assert!((loss - reference).abs() <= 1e-12 * reference.abs().max(1.0));

        let mut numeric_w = Vec::new();
        for i in 0..model.weights.len() {
            let (mut plus, mut minus) = (model.weights.clone(), model.weights.clone());
            plus[i] += h;
            minus[i] -= h;
            numeric_w.push(
                (reference_loss(&plus, &model.bias, dim, &xs, &ys, l2)
                    - reference_loss(&minus, &model.bias, dim, &xs, &ys, l2))
                    / (2.0 * h),
            );
        }
        let mut numeric_b = Vec::new();
        for i in 0..k {
            let (mut plus, mut minus) = (model.bias.clone(), model.bias.clone());
            plus[i] += h;
            minus[i] -= h;
            numeric_b.push(
                (reference_loss(&model.weights, &plus, dim, &xs, &ys, l2)
                    - reference_loss(&model.weights, &minus, dim, &xs, &ys, l2))
                    / (2.0 * h),
            );
        }
        let ew = relative_error(&grad_w, &numeric_w);
        let eb = relative_error(&grad_b, &numeric_b);
        assert!(ew < 1e-5 && eb < 1e-5, "weights {ew:e}, bias {eb:e}");
    }
}

fn cluster(rng: &mut ChaCha8Rng, n: usize) -> Vec<(EmbeddingVector, String)> {
    let mut out = Vec::new();
    for (cx, label) in [(-5.0, "left"), (5.0, "right")] {
        for _ in 0..n {
            let v = vec![cx + rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
            out.push((EmbeddingVector::from_values(v).unwrap(), label.to_owned()));
        }
    }
    out
}

fn separable_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let train = cluster(&mut rng, 25);
    let held_out = cluster(&mut rng, 25);
    let fit = fit_classifier(&train, &Hyperparameters::default()).unwrap();
    assert_eq!(accuracy(&fit.classifier, &train).unwrap(), 100.0);
    assert_eq!(accuracy(&fit.classifier, &held_out).unwrap(), 100.0);
}

fn synthetic_config(variants: Vec<String>) -> ExperimentConfig {
    ExperimentConfig {
        datasets: vec![DatasetSpec {
            name: "synthetic".into(),
            task: TaskKind::Pair,
            source: DatasetSource::Synthetic {
                synthetic: SyntheticSpec {
                    n_pos: 50,
                    n_neg: 50,
                    seed: 7,
                },
            },
            metric: None,
            preprocess: None,
        }],
        variants,
        chat: ChatProviderConfig::identity(),
        embed: EmbedProviderConfig::mock(256, 42),
        prompts: Vec::new(),
        preprocess_stage: PreprocessStage::BeforeEnrichment,
        pair_sides: PairSides::Both,
        classifier: Hyperparameters::default(),
        max_parallel_cells: 2,
        references: Vec::new(),
        output: OutputPaths::default(),
    }
}

fn identity_equivalence() {
    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    let mut variants = vec![BASELINE.to_owned()];
    variants.extend(builtin_prompts().into_iter().map(|p| p.id));
    let outcome = run_experiment(&synthetic_config(variants.clone()), &cache).unwrap();
    let table = outcome.table;
    assert!(table.is_complete());
    let baseline = table.score(BASELINE, "synthetic").unwrap();
    for v in &variants[1..] {
        assert_eq!(
            table.score(v, "synthetic").unwrap().to_bits(),
            baseline.to_bits(),
            "{v}"
        );
    }
    assert_eq!(table.improvement_for("synthetic"), Some(0.0));
}

fn reference_cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    dot / (na * nb)
}

fn mock_discrimination() {
    let set = synthetic_pairset(50, 50, 7);
    let embedder = MockEmbedder::new(256, 42).unwrap();
    let mut scores = Vec::new();
    let mut gold = Vec::new();
    for p in &set.pairs {
        let v = embedder
            .embed("mock-hash-256-42", &[&p.text_a, &p.text_b])
            .unwrap();
        scores.push(reference_cosine(&v[0], &v[1]));
        gold.push(p.label);
    }
    let direct = 100.0 * ap_oracle_value(&scores, &gold);

    let dir = tempfile::tempdir().unwrap();
    let cache = Cache::open(dir.path()).unwrap();
    let mut cfg = synthetic_config(vec![BASELINE.to_owned()]);
    cfg.datasets[0].preprocess = Some(Vec::new());
    let piped = run_experiment(&cfg, &cache)
        .unwrap()
        .table
        .score(BASELINE, "synthetic")
        .unwrap();

    assert!(piped > 90.0, "{piped}");
    assert!((piped - direct).abs() < 1e-6, "{piped} vs {direct}");
    assert!(
        (piped - MOCK_AP_PERCENT).abs() < 1e-9,
        "frozen value is {MOCK_AP_PERCENT}"
    );
}

fn run_cli(args: &[&str], cache: &Path) -> Vec<u8> {
    let out = Command::new(env!("CARGO_BIN_EXE_enrichbench"))
        .arg("--cache-dir")
        .arg(cache)
        .args(args)
        .output()
        .unwrap();
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out.stdout
}

fn cache_safety() {
    let dir = tempfile::tempdir().unwrap();
    let docs = dir.path().join("docs.jsonl");
    std::fs::write(
        &docs,
        "{\"id\": \"1\", \"text\": \"atm pin reset plz\"}\n{\"id\": \"2\", \"text\": \"idk\"}\n",
    )
    .unwrap();
    let chat = dir.path().join("chat.json");
    std::fs::write(
        &chat,
        r#"{"provider_id": "mock-rulebook", "model_id": "rulebook-v1", "kind": "rulebook"}"#,
    )
    .unwrap();
    let cache_dir = dir.path().join("cache");
    let args = [
        "enrich",
        "--in",
        docs.to_str().unwrap(),
        "--prompt",
        "paper-2",
        "--provider-config",
        chat.to_str().unwrap(),
    ];
    let cold = run_cli(&args, &cache_dir);
    let warm = run_cli(&args, &cache_dir);
    assert!(!cold.is_empty());
    assert_eq!(cold, warm);

    for point in [
        AbortPoint::BeforePayloadRename,
        AbortPoint::BeforeSidecarRename,
    ] {
        let root = dir.path().join(format!("abort-{point:?}"));
        let cache = Cache::open(&root)
            .unwrap()
            .with_abort_hook(move |p| p == point);
        let key = CacheKey::chat("p", "m", "paper-1", "text");
        assert!(cache.put(&key, b"payload").is_err());
        let reopened = Cache::open(&root).unwrap();
        assert!(reopened.get(&key).unwrap().is_none());
        reopened.put(&key, b"payload").unwrap();
        assert_eq!(reopened.get(&key).unwrap().unwrap().payload, b"payload");
    }

    let cache = Cache::open(dir.path().join("corrupt")).unwrap();
    let key = CacheKey::embed("p", "m", "text");
    cache.put(&key, b"some payload bytes").unwrap();
    let path = cache.payload_path(&key);
    let mut bytes = std::fs::read(&path).unwrap();
    bytes[3] ^= 0x01;
    std::fs::write(&path, bytes).unwrap();
    assert!(cache.get(&key).unwrap().is_none());
    assert_eq!(cache.stats().unwrap().corrupt_count, 1);
}

/// Characters biased towards noise markers, case and whitespace.
const ALPHABET: &[&str] = &[
    "a", "B", "z", "Q", "0", "_", "#", "@", "http://", "https://", "www.", ".", "/", " ", "  ",
    "\t", "\n", "Ü", "ß", "É", "İ", "Σ", "ǅ", "日", "!", "-", ":",
];

fn preprocessing() {
    assert_eq!(strip_noise("").value, "");
    assert_eq!(
        strip_noise("great product, no complaints").value,
        "great product, no complaints"
    );
    assert_eq!(
        strip_noise("loved it https://t.co/abc #happy @support thanks").value,
        "loved it thanks"
    );
    assert_eq!(
        strip_noise("see www.example.com/x today").value,
        "see today"
    );
    assert_eq!(lowercase(strip_noise("ABC")).value, "abc");
    assert_eq!(lowercase(strip_noise("")).value, "");
    assert_eq!(
        lowercase(strip_noise("Überweisung FAILED")).value,
        "überweisung failed"
    );
    let both = PreprocessConfig::PAIRS.apply("Loved IT https://t.co/abc #Happy @Support THANKS");
    assert_eq!(both.value, "loved it thanks");
    assert_eq!(both.applied_steps, PreprocessConfig::PAIRS.steps());

    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for _ in 0..1000 {
        let len = rng.gen_range(0..24);
        let s: String = (0..len)
            .map(|_| ALPHABET[rng.gen_range(0..ALPHABET.len())])
            .collect();
        let once = strip_noise(&s);
        assert_eq!(strip_noise(&once.value).value, once.value, "{s:?}");
        for c in once.value.chars().filter(|c| !c.is_whitespace()) {
            assert!(s.contains(c), "{s:?} gained {c:?}");
        }
        let lower = lowercase(once);
        assert_eq!(lowercase(lower.clone()).value, lower.value, "{s:?}");
        assert!(
            !lower.value.chars().any(char::is_uppercase),
            "{s:?} -> {:?}",
            lower.value
        );
        let full = PreprocessConfig::PAIRS.apply(&s);
        assert_eq!(
            PreprocessConfig::PAIRS.apply(&full.value).value,
            full.value,
            "{s:?}"
        );
    }
}
