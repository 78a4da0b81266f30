use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::harvest::QueryExample;
use crate::retrieval::{cosine, EmbeddingError, EmbeddingProvider};
use crate::sparql::parse_query;

use super::stats::{mean, median};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnparseableExample {
    pub id: String,
    pub error: String,
}

/// Triple-pattern counts over a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusProfile {
    pub examples: usize,
    /// Triple-pattern count to number of examples with that count.
    pub histogram: BTreeMap<usize, usize>,
    pub min: Option<usize>,
    pub max: Option<usize>,
    pub mean: Option<f64>,
    pub median: Option<f64>,
    /// The most frequent count; the smallest one on ties.
    pub mode: Option<usize>,
    pub unparseable: Vec<UnparseableExample>,
}

pub fn profile_corpus(corpus: &[QueryExample]) -> CorpusProfile {
    let mut counts = Vec::new();
    let mut unparseable = Vec::new();
    for ex in corpus {
        match ex.parsed().map_or_else(|| parse_query(&ex.sparql).map(|p| p.triple_count()), |p| Ok(p.triple_count())) {
            Ok(n) => counts.push(n),
            Err(e) => unparseable.push(UnparseableExample { id: ex.id.clone(), error: e.to_string() }),
        }
    }
    let mut histogram = BTreeMap::new();
    for &n in &counts {
        *histogram.entry(n).or_insert(0) += 1;
    }
    let values: Vec<f64> = counts.iter().map(|&n| n as f64).collect();
    let mode = histogram.iter().max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(a.0))).map(|(n, _)| *n);
    CorpusProfile {
        examples: corpus.len(),
        min: counts.iter().copied().min(),
        max: counts.iter().copied().max(),
        mean: (!values.is_empty()).then(|| mean(&values)),
        median: (!values.is_empty()).then(|| median(&values)),
        mode,
        histogram,
        unparseable,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearDuplicate {
    pub a: String,
    pub b: String,
    pub score: f64,
}

/// Pairs of examples whose questions embed at cosine similarity
/// `>= threshold`, most similar first. Nothing is removed; the caller
/// decides what to do with them.
pub async fn near_duplicates(
    corpus: &[QueryExample],
    embedder: &dyn EmbeddingProvider,
    threshold: f64,
) -> Result<Vec<NearDuplicate>, EmbeddingError> {
    let texts: Vec<String> = corpus.iter().map(|e| e.question.clone()).collect();
    let vectors: Vec<Vec<f32>> = embedder.embed_batch(&texts).await?.into_iter().map(normalized).collect();
    let mut out = Vec::new();
    for i in 0..corpus.len() {
        for j in i + 1..corpus.len() {
            let score = cosine(&vectors[i], &vectors[j]);
            if score >= threshold {
                out.push(NearDuplicate { a: corpus[i].id.clone(), b: corpus[j].id.clone(), score });
            }
        }
    }
    out.sort_by(|x, y| y.score.total_cmp(&x.score).then_with(|| (&x.a, &x.b).cmp(&(&y.a, &y.b))));
    Ok(out)
}

fn normalized(mut v: Vec<f32>) -> Vec<f32> {
    let norm = v.iter().map(|x| x * x).sum::<f32>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}
