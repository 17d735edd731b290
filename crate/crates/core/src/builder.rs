//! Mixed-corpus construction (cleanup of raw rewrites, label transfer) and
//! the term and embedding statistics used to validate a built benchmark.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{Corpus, EmbeddingSet, QrelSet, Source, SourcedDocument};
use crate::text::{tokenize, whitespace_len};

pub const DEFAULT_CLEANUP_PATTERNS: [&str; 3] = ["Sure, here", "Here is", "Here's"];

/// The instruction used to produce rewrites. Recorded for provenance only.
pub const DEFAULT_REWRITE_PROMPT: &str = "Please rewrite the following text: {{text}}";

pub const HISTOGRAM_BINS: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildConfig {
    pub model_tag: String,
    /// Literal line prefixes; no pattern syntax.
    pub cleanup_patterns: Vec<String>,
    pub prompt_id: Option<String>,
}

impl BuildConfig {
    pub fn new(model_tag: impl Into<String>) -> Self {
        Self {
            model_tag: model_tag.into(),
            cleanup_patterns: DEFAULT_CLEANUP_PATTERNS.iter().map(|s| s.to_string()).collect(),
            prompt_id: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.model_tag.is_empty() || self.model_tag.contains(char::is_whitespace) {
            return Err(Error::invalid("model tag must be a non-empty token"));
        }
        Ok(())
    }
}

/// Drops a leading chatter line such as "Sure, here's a possible rewrite
/// of the text:" and trims. Repeats while the first non-empty line still
/// matches, so the result is a fixed point.
pub fn clean_generated<S: AsRef<str>>(raw: &str, patterns: &[S]) -> Result<String> {
    let mut rest = raw;
    loop {
        let trimmed = rest.trim_start();
        let first = trimmed.lines().next().unwrap_or("");
        let first = first.trim_start();
        if first.is_empty() || !patterns.iter().any(|p| !p.as_ref().is_empty() && first.starts_with(p.as_ref())) {
            break;
        }
        rest = match trimmed.find('\n') {
            Some(i) => &trimmed[i + 1..],
            None => "",
        };
    }
    let out = rest.trim();
    if out.is_empty() {
        return Err(Error::invalid("generated text is empty after cleanup"));
    }
    Ok(out.to_owned())
}

pub fn generated_id(origin_id: &str, model_tag: &str) -> String {
    format!("{origin_id}@{model_tag}")
}

/// Adds one cleaned generated document per entry of `generated_texts`
/// (keyed by the human origin id) and copies every human judgment onto the
/// generated counterpart.
///
/// The input corpus may already hold generated documents from an earlier
/// build with another model; only human judgments are transferred.
pub fn build_benchmark(
    corpus: &Corpus,
    generated_texts: &BTreeMap<String, String>,
    qrels: &QrelSet,
    cfg: &BuildConfig,
) -> Result<(Corpus, QrelSet)> {
    cfg.validate()?;
    for origin in generated_texts.keys() {
        match corpus.get(origin) {
            Some(d) if d.source == Source::Human => {}
            Some(_) => {
                return Err(Error::invalid(format!("origin `{origin}` is not a human document")))
            }
            None => return Err(Error::UnknownId(origin.clone())),
        }
    }

    let mut docs: Vec<SourcedDocument> = corpus.docs().to_vec();
    let mut counterpart: BTreeMap<&str, String> = BTreeMap::new();
    for human in corpus.by_source(Source::Human) {
        let Some(raw) = generated_texts.get(&human.id) else {
            continue;
        };
        let id = generated_id(&human.id, &cfg.model_tag);
        if corpus.contains(&id) {
            return Err(Error::DuplicateId(id));
        }
        let text = clean_generated(raw, &cfg.cleanup_patterns)
            .map_err(|e| Error::invalid(format!("origin `{}`: {e}", human.id)))?;
        docs.push(SourcedDocument::generated(
            id.clone(),
            human.title.clone(),
            text,
            cfg.model_tag.clone(),
            human.id.clone(),
        ));
        counterpart.insert(human.id.as_str(), id);
    }
    let mixed = Corpus::new(docs)?;

    let mut extended = qrels.clone();
    for (q, d, g) in qrels.iter() {
        if corpus.get(d).map(|doc| doc.source) != Some(Source::Human) {
            continue;
        }
        if let Some(gid) = counterpart.get(d) {
            extended.insert(q, gid.clone(), g)?;
        }
    }
    Ok((mixed, extended))
}

/// Term-set Jaccard `|G∩H|/|G∪H|` and overlap `|G∩H|/|H|`. Overlap is not
/// symmetric.
pub fn jaccard_overlap(generated_text: &str, human_text: &str) -> Result<(f64, f64)> {
    let g: HashSet<String> = tokenize(generated_text).into_iter().collect();
    let h: HashSet<String> = tokenize(human_text).into_iter().collect();
    if h.is_empty() {
        return Err(Error::invalid("human document has no terms"));
    }
    let inter = g.intersection(&h).count() as f64;
    let union = g.union(&h).count() as f64;
    Ok((inter / union, inter / h.len() as f64))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na * nb)).clamp(-1.0, 1.0)
}

/// Fixed-width histogram over `[lo, hi]`; the upper edge falls in the last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    pub lo: f64,
    pub hi: f64,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn new(lo: f64, hi: f64, bins: usize) -> Self {
        Self {
            lo,
            hi,
            counts: vec![0; bins.max(1)],
        }
    }

    pub fn from_values(lo: f64, hi: f64, bins: usize, values: impl IntoIterator<Item = f64>) -> Self {
        let mut h = Self::new(lo, hi, bins);
        for v in values {
            h.add(v);
        }
        h
    }

    pub fn add(&mut self, v: f64) {
        let n = self.counts.len();
        let width = self.hi - self.lo;
        let bin = if width <= 0.0 {
            0
        } else {
            (((v - self.lo) / width) * n as f64).floor().clamp(0.0, (n - 1) as f64) as usize
        };
        self.counts[bin] += 1;
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairStat {
    pub generated_id: String,
    pub human_id: String,
    pub jaccard: f64,
    pub overlap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cosine: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub human_docs: usize,
    pub generated_docs: usize,
    pub avg_len_human: f64,
    pub avg_len_generated: f64,
    pub mean_jaccard: f64,
    pub mean_overlap: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean_cosine: Option<f64>,
    pub jaccard_histogram: Histogram,
    pub overlap_histogram: Histogram,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cosine_histogram: Option<Histogram>,
    pub pairs: Vec<PairStat>,
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Pairs every generated document of a mixed corpus with its human origin.
/// Pairs come back sorted by generated doc id.
pub fn corpus_stats(corpus: &Corpus, embeddings: Option<&EmbeddingSet>) -> Result<CorpusStats> {
    let mut generated: Vec<&SourcedDocument> = corpus.by_source(Source::Generated).collect();
    generated.sort_by(|a, b| a.id.cmp(&b.id));

    let pairs: Vec<PairStat> = generated
        .par_iter()
        .map(|g| {
            let origin = g.origin_id.as_deref().unwrap_or_default();
            let h = corpus
                .get(origin)
                .ok_or_else(|| Error::UnknownId(origin.to_owned()))?;
            let (jaccard, overlap) = jaccard_overlap(&g.text, &h.text)
                .map_err(|e| Error::invalid(format!("pair ({}, {}): {e}", g.id, h.id)))?;
            let cosine = match embeddings {
                Some(emb) => {
                    let ge = emb.get(&g.id).ok_or_else(|| Error::UnknownId(g.id.clone()))?;
                    let he = emb.get(&h.id).ok_or_else(|| Error::UnknownId(h.id.clone()))?;
                    Some(cosine(ge, he))
                }
                None => None,
            };
            Ok(PairStat {
                generated_id: g.id.clone(),
                human_id: h.id.clone(),
                jaccard,
                overlap,
                cosine,
            })
        })
        .collect::<Result<_>>()?;

    let avg_len = |s: Source| mean(corpus.by_source(s).map(|d| whitespace_len(&d.text) as f64));
    let jaccard_histogram = Histogram::from_values(0.0, 1.0, HISTOGRAM_BINS, pairs.iter().map(|p| p.jaccard));
    let overlap_histogram = Histogram::from_values(0.0, 1.0, HISTOGRAM_BINS, pairs.iter().map(|p| p.overlap));
    let (mean_cosine, cosine_histogram) = if embeddings.is_some() {
        let values = || pairs.iter().filter_map(|p| p.cosine);
        (
            Some(mean(values())),
            Some(Histogram::from_values(-1.0, 1.0, HISTOGRAM_BINS, values())),
        )
    } else {
        (None, None)
    };
    Ok(CorpusStats {
        human_docs: corpus.count(Source::Human),
        generated_docs: generated.len(),
        avg_len_human: avg_len(Source::Human),
        avg_len_generated: avg_len(Source::Generated),
        mean_jaccard: mean(pairs.iter().map(|p| p.jaccard)),
        mean_overlap: mean(pairs.iter().map(|p| p.overlap)),
        mean_cosine,
        jaccard_histogram,
        overlap_histogram,
        cosine_histogram,
        pairs,
    })
}

impl CorpusStats {
    pub fn pairs_csv(&self) -> String {
        let mut out = String::from("generated_id,human_id,jaccard,overlap,cosine\n");
        for p in &self.pairs {
            let cos = p.cosine.map(|c| c.to_string()).unwrap_or_default();
            let _ = writeln!(out, "{},{},{},{},{}", p.generated_id, p.human_id, p.jaccard, p.overlap, cos);
        }
        out
    }
}
