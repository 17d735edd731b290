//! Lexical (TF-IDF, BM25) and exhaustive dense retrieval over a mixed corpus.

use std::collections::{BTreeMap, HashMap};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{rank_order, Corpus, EmbeddingSet, Query, RunList};
use crate::text::tokenize;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) {
            return Err(Error::invalid(format!("k1 must be >= 0, got {}", self.k1)));
        }
        if !(0.0..=1.0).contains(&self.b) {
            return Err(Error::invalid(format!("b must lie in [0, 1], got {}", self.b)));
        }
        Ok(())
    }
}

/// Inverted index. Term ids follow lexicographic term order; postings are
/// sorted by internal document id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LexicalIndex {
    vocabulary: BTreeMap<String, u32>,
    postings: Vec<Vec<(u32, u32)>>,
    doc_ids: Vec<String>,
    doc_lengths: Vec<u32>,
    avgdl: f64,
    tfidf_norms: Vec<f64>,
}

impl LexicalIndex {
    /// Indexes title and body of every document.
    pub fn build(corpus: &Corpus) -> Result<Self> {
        Self::from_texts(corpus.iter().map(|d| (d.id.clone(), d.full_text())))
    }

    pub fn from_texts(docs: impl IntoIterator<Item = (String, String)>) -> Result<Self> {
        let mut doc_ids = Vec::new();
        let mut doc_terms: Vec<BTreeMap<String, u32>> = Vec::new();
        let mut doc_lengths = Vec::new();
        for (id, text) in docs {
            let tokens = tokenize(&text);
            doc_lengths.push(tokens.len() as u32);
            let mut tf: BTreeMap<String, u32> = BTreeMap::new();
            for t in tokens {
                *tf.entry(t).or_default() += 1;
            }
            doc_ids.push(id);
            doc_terms.push(tf);
        }
        if doc_ids.is_empty() {
            return Err(Error::invalid("cannot index an empty corpus"));
        }
        let total: u64 = doc_lengths.iter().map(|&l| u64::from(l)).sum();
        if total == 0 {
            return Err(Error::invalid("every document is empty"));
        }
        let avgdl = total as f64 / doc_ids.len() as f64;

        let mut vocabulary: BTreeMap<String, u32> = BTreeMap::new();
        for tf in &doc_terms {
            for t in tf.keys() {
                vocabulary.entry(t.clone()).or_insert(0);
            }
        }
        for (i, id) in vocabulary.values_mut().enumerate() {
            *id = i as u32;
        }
        let mut postings = vec![Vec::new(); vocabulary.len()];
        for (doc, tf) in doc_terms.iter().enumerate() {
            for (t, &f) in tf {
                postings[vocabulary[t] as usize].push((doc as u32, f));
            }
        }

        let n = doc_ids.len();
        let mut sq = vec![0.0f64; n];
        for list in &postings {
            let idf = tfidf_idf(n, list.len());
            for &(doc, tf) in list {
                let w = f64::from(tf) * idf;
                sq[doc as usize] += w * w;
            }
        }
        let tfidf_norms = sq.into_iter().map(f64::sqrt).collect();

        Ok(Self {
            vocabulary,
            postings,
            doc_ids,
            doc_lengths,
            avgdl,
            tfidf_norms,
        })
    }

    pub fn doc_count(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn avgdl(&self) -> f64 {
        self.avgdl
    }

    pub fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    pub fn doc_length(&self, doc: usize) -> u32 {
        self.doc_lengths[doc]
    }

    pub fn vocabulary_size(&self) -> usize {
        self.vocabulary.len()
    }

    pub fn term_id(&self, term: &str) -> Option<u32> {
        self.vocabulary.get(term).copied()
    }

    pub fn df(&self, term: &str) -> usize {
        self.term_id(term).map_or(0, |t| self.postings[t as usize].len())
    }

    pub fn tf(&self, term: &str, doc: usize) -> u32 {
        let Some(t) = self.term_id(term) else { return 0 };
        let list = &self.postings[t as usize];
        list.binary_search_by_key(&(doc as u32), |&(d, _)| d)
            .map_or(0, |i| list[i].1)
    }

    pub fn doc_index(&self, doc_id: &str) -> Option<usize> {
        self.doc_ids.iter().position(|d| d == doc_id)
    }

    pub fn bm25_idf(&self, term: &str) -> f64 {
        bm25_idf(self.doc_count(), self.df(term))
    }

    pub fn tfidf_idf(&self, term: &str) -> f64 {
        tfidf_idf(self.doc_count(), self.df(term))
    }

    fn bm25_term(&self, idf: f64, tf: u32, doc: usize, p: Bm25Params) -> f64 {
        let tf = f64::from(tf);
        let norm = 1.0 - p.b + p.b * f64::from(self.doc_lengths[doc]) / self.avgdl;
        idf * tf * (p.k1 + 1.0) / (tf + p.k1 * norm)
    }

    /// BM25 over the distinct query terms; unknown terms contribute 0.
    pub fn bm25_score(&self, query_terms: &[String], doc: usize, p: Bm25Params) -> f64 {
        distinct(query_terms)
            .into_keys()
            .map(|t| {
                let tf = self.tf(t, doc);
                if tf == 0 {
                    0.0
                } else {
                    self.bm25_term(self.bm25_idf(t), tf, doc, p)
                }
            })
            .sum()
    }

    /// Cosine-style TF-IDF: query weights (count·idf) dotted with the
    /// L2-normalized document vector (tf·idf).
    pub fn tfidf_score(&self, query_terms: &[String], doc: usize) -> f64 {
        let norm = self.tfidf_norms[doc];
        if norm == 0.0 {
            return 0.0;
        }
        distinct(query_terms)
            .into_iter()
            .map(|(t, count)| {
                let idf = self.tfidf_idf(t);
                f64::from(count) * idf * f64::from(self.tf(t, doc)) * idf
            })
            .sum::<f64>()
            / norm
    }

    /// Scores every document at once by walking the postings.
    pub fn score_all(&self, query_terms: &[String], model: LexicalModel) -> Vec<f64> {
        let mut scores = vec![0.0; self.doc_count()];
        for (term, count) in distinct(query_terms) {
            let Some(t) = self.term_id(term) else { continue };
            let list = &self.postings[t as usize];
            match model {
                LexicalModel::Bm25(p) => {
                    let idf = bm25_idf(self.doc_count(), list.len());
                    for &(doc, tf) in list {
                        scores[doc as usize] += self.bm25_term(idf, tf, doc as usize, p);
                    }
                }
                LexicalModel::TfIdf => {
                    let idf = tfidf_idf(self.doc_count(), list.len());
                    for &(doc, tf) in list {
                        let norm = self.tfidf_norms[doc as usize];
                        scores[doc as usize] += f64::from(count) * idf * f64::from(tf) * idf / norm;
                    }
                }
            }
        }
        scores
    }
}

fn distinct(terms: &[String]) -> BTreeMap<&str, u32> {
    let mut m = BTreeMap::new();
    for t in terms {
        *m.entry(t.as_str()).or_default() += 1;
    }
    m
}

pub fn bm25_idf(n: usize, df: usize) -> f64 {
    let (n, df) = (n as f64, df as f64);
    ((n - df + 0.5) / (df + 0.5) + 1.0).ln()
}

pub fn tfidf_idf(n: usize, df: usize) -> f64 {
    ((n as f64 + 1.0) / (df as f64 + 1.0)).ln() + 1.0
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LexicalModel {
    Bm25(Bm25Params),
    TfIdf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    Dot,
    Cosine,
}

/// Exhaustive dense scorer over precomputed document embeddings.
#[derive(Debug, Clone)]
pub struct DenseScorer {
    doc_ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    similarity: Similarity,
    query_embeddings: EmbeddingSet,
}

impl DenseScorer {
    /// `docs` lists the ids to search; each must have an embedding.
    pub fn new(
        docs: impl IntoIterator<Item = String>,
        doc_embeddings: &EmbeddingSet,
        query_embeddings: EmbeddingSet,
        similarity: Similarity,
    ) -> Result<Self> {
        if doc_embeddings.dim() != query_embeddings.dim() {
            return Err(Error::invalid(format!(
                "document dim {} != query dim {}",
                doc_embeddings.dim(),
                query_embeddings.dim()
            )));
        }
        let mut doc_ids = Vec::new();
        let mut vectors = Vec::new();
        for id in docs {
            let v = doc_embeddings.get(&id).ok_or_else(|| Error::UnknownId(id.clone()))?;
            let v = match similarity {
                Similarity::Dot => v.to_vec(),
                Similarity::Cosine => normalized(v),
            };
            doc_ids.push(id);
            vectors.push(v);
        }
        Ok(Self {
            doc_ids,
            vectors,
            similarity,
            query_embeddings,
        })
    }

    pub fn for_corpus(
        corpus: &Corpus,
        doc_embeddings: &EmbeddingSet,
        query_embeddings: EmbeddingSet,
        similarity: Similarity,
    ) -> Result<Self> {
        Self::new(corpus.iter().map(|d| d.id.clone()), doc_embeddings, query_embeddings, similarity)
    }

    pub fn score_vector(&self, query: &[f64]) -> Vec<f64> {
        let q = match self.similarity {
            Similarity::Dot => query.to_vec(),
            Similarity::Cosine => normalized(query),
        };
        self.vectors
            .iter()
            .map(|d| {
                let s: f64 = d.iter().zip(&q).map(|(a, b)| a * b).sum();
                match self.similarity {
                    Similarity::Dot => s,
                    Similarity::Cosine => s.clamp(-1.0, 1.0),
                }
            })
            .collect()
    }
}

fn normalized(v: &[f64]) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n == 0.0 {
        v.to_vec()
    } else {
        v.iter().map(|x| x / n).collect()
    }
}

/// Something that can score every document of its corpus for a query.
pub trait Retriever: Sync {
    fn doc_ids(&self) -> &[String];
    fn score_query(&self, query: &Query) -> Result<Vec<f64>>;
}

/// A lexical index paired with the model used to score it.
pub struct Lexical<'a> {
    pub index: &'a LexicalIndex,
    pub model: LexicalModel,
}

impl Retriever for Lexical<'_> {
    fn doc_ids(&self) -> &[String] {
        self.index.doc_ids()
    }

    fn score_query(&self, query: &Query) -> Result<Vec<f64>> {
        Ok(self.index.score_all(&tokenize(&query.text), self.model))
    }
}

impl Retriever for DenseScorer {
    fn doc_ids(&self) -> &[String] {
        &self.doc_ids
    }

    fn score_query(&self, query: &Query) -> Result<Vec<f64>> {
        let q = self
            .query_embeddings
            .get(&query.id)
            .ok_or_else(|| Error::UnknownId(query.id.clone()))?;
        Ok(self.score_vector(q))
    }
}

/// Top-k per query, ties broken by ascending doc id. Output order follows
/// `queries` regardless of thread count.
pub fn search(retriever: &dyn Retriever, queries: &[Query], top_k: usize) -> Result<Vec<RunList>> {
    if top_k == 0 {
        return Err(Error::invalid("top_k must be >= 1"));
    }
    queries
        .par_iter()
        .map(|q| {
            let scores = retriever.score_query(q)?;
            let mut scored: Vec<(String, f64)> = retriever
                .doc_ids()
                .iter()
                .cloned()
                .zip(scores)
                .collect();
            if scored.len() > top_k {
                scored.select_nth_unstable_by(top_k - 1, rank_order);
                scored.truncate(top_k);
            }
            RunList::from_scored(q.id.clone(), scored)
        })
        .collect()
}

/// Restricts queries to the given ids, failing on unknown ones.
pub fn select_queries(queries: &[Query], ids: &[String]) -> Result<Vec<Query>> {
    let by_id: HashMap<&str, &Query> = queries.iter().map(|q| (q.id.as_str(), q)).collect();
    ids.iter()
        .map(|id| {
            by_id
                .get(id.as_str())
                .map(|q| (*q).clone())
                .ok_or_else(|| Error::UnknownId(id.clone()))
        })
        .collect()
}
