use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::datasets::PairDataset;
use crate::embed::{cosine_similarity, Embedder};
use crate::store::Cache;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredPair {
    pub pair_id: String,
    pub score: f64,
    pub gold: u8,
}

/// Non-interpolated average precision: rank by descending score and average
/// the precision at the rank of every gold positive.
///
/// Equal scores keep their input order.
pub fn average_precision(scored: &[ScoredPair]) -> Result<f64, EvalError> {
    if let Some(bad) = scored.iter().find(|p| !p.score.is_finite()) {
        return Err(EvalError::NonFiniteScore(bad.pair_id.clone()));
    }
    let positives = scored.iter().filter(|p| p.gold == 1).count();
    if positives == 0 || positives == scored.len() {
        return Err(EvalError::DegenerateLabels);
    }
    let mut ranked: Vec<&ScoredPair> = scored.iter().collect();
    ranked.sort_by(|a, b| b.score.total_cmp(&a.score));
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (rank, pair) in ranked.iter().enumerate() {
        if pair.gold == 1 {
            hits += 1;
            sum += hits as f64 / (rank + 1) as f64;
        }
    }
    Ok(sum / positives as f64)
}

/// `100 × AP` of the given scores against the dataset's gold labels.
pub fn scores_to_ap_percent(pairs: &PairDataset, scores: &[f64]) -> Result<f64, EvalError> {
    if scores.len() != pairs.pairs.len() {
        return Err(EvalError::DimensionMismatch {
            expected: pairs.pairs.len(),
            found: scores.len(),
        });
    }
    let scored: Vec<ScoredPair> = pairs
        .pairs
        .iter()
        .zip(scores)
        .map(|(p, &score)| ScoredPair {
            pair_id: p.id.clone(),
            score,
            gold: p.label,
        })
        .collect();
    Ok(100.0 * average_precision(&scored)?)
}

/// Embeds both sides of every pair (using `texts`, one `(a, b)` per pair, in
/// place of the dataset's own text) and scores the cosine ranking.
pub fn pair_task_score(
    pairs: &PairDataset,
    texts: &[(String, String)],
    embedder: &Embedder,
    cache: &Cache,
) -> Result<f64, EvalError> {
    if texts.len() != pairs.pairs.len() {
        return Err(EvalError::DimensionMismatch {
            expected: pairs.pairs.len(),
            found: texts.len(),
        });
    }
    let flat: Vec<&str> = texts
        .iter()
        .flat_map(|(a, b)| [a.as_str(), b.as_str()])
        .collect();
    let vectors = embedder.embed_batch(&flat, cache)?;
    let scores = vectors
        .chunks_exact(2)
        .map(|ab| cosine_similarity(&ab[0], &ab[1]))
        .collect::<Result<Vec<f64>, _>>()?;
    scores_to_ap_percent(pairs, &scores)
}
