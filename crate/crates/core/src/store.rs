//! Data model and file formats: corpora, queries, qrels, run files,
//! embeddings and per-token log-probabilities.
//!
//! Corpora, queries, embeddings and log-probabilities are JSON lines. Qrels
//! are whitespace-separated `qid docid grade` (the 4-column TREC layout
//! `qid 0 docid grade` is accepted too). Runs are TREC 6-column files.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Human,
    Generated,
}

impl Source {
    pub fn other(self) -> Source {
        match self {
            Source::Human => Source::Generated,
            Source::Generated => Source::Human,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Human => "human",
            Source::Generated => "generated",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "human" => Ok(Source::Human),
            "generated" => Ok(Source::Generated),
            other => Err(Error::invalid(format!("unknown source `{other}`"))),
        }
    }
}

/// Anything that can tell which corpus a document id came from.
pub trait SourceLookup {
    fn source_of(&self, doc_id: &str) -> Option<Source>;
}

impl SourceLookup for HashMap<String, Source> {
    fn source_of(&self, doc_id: &str) -> Option<Source> {
        self.get(doc_id).copied()
    }
}

impl SourceLookup for BTreeMap<String, Source> {
    fn source_of(&self, doc_id: &str) -> Option<Source> {
        self.get(doc_id).copied()
    }
}

/// A corpus entry together with its provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourcedDocument {
    #[serde(rename = "_id")]
    pub id: String,
    #[serde(default)]
    pub title: String,
    pub text: String,
    #[serde(default = "default_source")]
    pub source: Source,
    #[serde(rename = "model", default, skip_serializing_if = "Option::is_none")]
    pub model_tag: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin_id: Option<String>,
}

fn default_source() -> Source {
    Source::Human
}

impl SourcedDocument {
    pub fn human(id: impl Into<String>, title: impl Into<String>, text: impl Into<String>) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            text: text.into(),
            source: Source::Human,
            model_tag: None,
            origin_id: None,
        }
    }

    pub fn generated(
        id: impl Into<String>,
        title: impl Into<String>,
        text: impl Into<String>,
        model_tag: impl Into<String>,
        origin_id: impl Into<String>,
    ) -> Self {
        Self {
            id: id.into(),
            title: title.into(),
            text: text.into(),
            source: Source::Generated,
            model_tag: Some(model_tag.into()),
            origin_id: Some(origin_id.into()),
        }
    }

    /// Title and body joined, as seen by the lexical models.
    pub fn full_text(&self) -> String {
        if self.title.is_empty() {
            self.text.clone()
        } else {
            format!("{} {}", self.title, self.text)
        }
    }

    fn check_provenance(&self) -> std::result::Result<(), String> {
        if self.id.is_empty() {
            return Err("empty document id".into());
        }
        match self.source {
            Source::Generated => {
                if self.origin_id.is_none() {
                    return Err(format!("generated document `{}` has no origin_id", self.id));
                }
                if self.model_tag.as_deref().is_none_or(str::is_empty) {
                    return Err(format!("generated document `{}` has no model", self.id));
                }
            }
            Source::Human => {
                if self.origin_id.is_some() {
                    return Err(format!("human document `{}` carries an origin_id", self.id));
                }
                if self.model_tag.is_some() {
                    return Err(format!("human document `{}` carries a model", self.id));
                }
            }
        }
        Ok(())
    }
}

/// An immutable, validated collection of documents in file order.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Corpus {
    docs: Vec<SourcedDocument>,
    index: HashMap<String, usize>,
}

impl Corpus {
    /// Validates ids, provenance fields, and that every `origin_id`
    /// resolves to a human document of this corpus.
    pub fn new(docs: Vec<SourcedDocument>) -> Result<Self> {
        let mut index = HashMap::with_capacity(docs.len());
        for (i, doc) in docs.iter().enumerate() {
            doc.check_provenance().map_err(Error::Invalid)?;
            if index.insert(doc.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(doc.id.clone()));
            }
        }
        let corpus = Self { docs, index };
        for doc in &corpus.docs {
            if let Some(origin) = &doc.origin_id {
                match corpus.get(origin) {
                    Some(o) if o.source == Source::Human => {}
                    Some(_) => {
                        return Err(Error::invalid(format!(
                            "origin `{origin}` of `{}` is not a human document",
                            doc.id
                        )))
                    }
                    None => return Err(Error::UnknownId(origin.clone())),
                }
            }
        }
        Ok(corpus)
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&SourcedDocument> {
        self.index.get(id).map(|&i| &self.docs[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn docs(&self) -> &[SourcedDocument] {
        &self.docs
    }

    pub fn iter(&self) -> impl Iterator<Item = &SourcedDocument> {
        self.docs.iter()
    }

    pub fn by_source(&self, source: Source) -> impl Iterator<Item = &SourcedDocument> {
        self.docs.iter().filter(move |d| d.source == source)
    }

    pub fn count(&self, source: Source) -> usize {
        self.by_source(source).count()
    }

    pub fn into_docs(self) -> Vec<SourcedDocument> {
        self.docs
    }
}

impl SourceLookup for Corpus {
    fn source_of(&self, doc_id: &str) -> Option<Source> {
        self.get(doc_id).map(|d| d.source)
    }
}

fn open(path: &Path) -> Result<BufReader<fs::File>> {
    fs::File::open(path)
        .map(BufReader::new)
        .map_err(|e| Error::io(path, e))
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    fs::File::create(path)
        .map(BufWriter::new)
        .map_err(|e| Error::io(path, e))
}

/// Reads non-blank lines with their 1-based line numbers.
pub(crate) fn read_lines(path: &Path) -> Result<Vec<(usize, String)>> {
    let mut out = Vec::new();
    for (i, line) in open(path)?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if !line.trim().is_empty() {
            out.push((i + 1, line));
        }
    }
    Ok(out)
}

pub(crate) fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    read_lines(path)?
        .into_iter()
        .map(|(n, line)| {
            serde_json::from_str(&line)
                .map(|v| (n, v))
                .map_err(|e| Error::parse(path, n, e.to_string()))
        })
        .collect()
}

pub(crate) fn write_jsonl<T: Serialize>(path: &Path, items: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = create(path)?;
    for item in items {
        let line = serde_json::to_string(&item).map_err(|e| Error::invalid(e.to_string()))?;
        writeln!(w, "{line}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_corpus(path: impl AsRef<Path>) -> Result<Corpus> {
    let path = path.as_ref();
    let mut docs: Vec<SourcedDocument> = Vec::new();
    let mut seen = HashSet::new();
    for (n, doc) in read_jsonl::<SourcedDocument>(path)? {
        doc.check_provenance()
            .map_err(|m| Error::parse(path, n, m))?;
        if !seen.insert(doc.id.clone()) {
            return Err(Error::parse(path, n, format!("duplicate id `{}`", doc.id)));
        }
        docs.push(doc);
    }
    Corpus::new(docs)
}

pub fn write_corpus(corpus: &Corpus, path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(path.as_ref(), corpus.iter())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Query {
    #[serde(rename = "_id")]
    pub id: String,
    pub text: String,
}

pub fn load_queries(path: impl AsRef<Path>) -> Result<Vec<Query>> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, q) in read_jsonl::<Query>(path)? {
        if q.id.is_empty() {
            return Err(Error::parse(path, n, "empty query id"));
        }
        if q.text.trim().is_empty() {
            return Err(Error::parse(path, n, format!("query `{}` has empty text", q.id)));
        }
        if !seen.insert(q.id.clone()) {
            return Err(Error::parse(path, n, format!("duplicate query id `{}`", q.id)));
        }
        out.push(q);
    }
    Ok(out)
}

pub fn write_queries(queries: &[Query], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(path.as_ref(), queries)
}

/// Graded relevance judgments keyed by `(query_id, doc_id)`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QrelSet {
    entries: BTreeMap<(String, String), u32>,
}

impl QrelSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a judgment. Re-inserting an identical grade is a no-op; a
    /// different grade for the same key is an error.
    pub fn insert(&mut self, query_id: impl Into<String>, doc_id: impl Into<String>, grade: u32) -> Result<()> {
        let key = (query_id.into(), doc_id.into());
        match self.entries.get(&key) {
            Some(&g) if g != grade => Err(Error::invalid(format!(
                "conflicting grades {g} and {grade} for ({}, {})",
                key.0, key.1
            ))),
            Some(_) => Ok(()),
            None => {
                self.entries.insert(key, grade);
                Ok(())
            }
        }
    }

    pub fn grade(&self, query_id: &str, doc_id: &str) -> Option<u32> {
        self.entries
            .get(&(query_id.to_owned(), doc_id.to_owned()))
            .copied()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, u32)> {
        self.entries
            .iter()
            .map(|((q, d), &g)| (q.as_str(), d.as_str(), g))
    }

    /// Query ids in sorted order.
    pub fn query_ids(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.entries.keys().map(|(q, _)| q.as_str()).collect();
        set.into_iter().collect()
    }

    /// All judgments of one query, sorted by doc id.
    pub fn for_query<'a>(&'a self, query_id: &'a str) -> impl Iterator<Item = (&'a str, u32)> + 'a {
        let start = (query_id.to_owned(), String::new());
        self.entries
            .range(start..)
            .take_while(move |((q, _), _)| q == query_id)
            .map(|((_, d), &g)| (d.as_str(), g))
    }

    /// Set union; conflicting grades for one key are an error.
    pub fn union(&self, other: &QrelSet) -> Result<QrelSet> {
        let mut out = self.clone();
        for (q, d, g) in other.iter() {
            out.insert(q, d, g)?;
        }
        Ok(out)
    }

    /// Checks that every query and document id resolves.
    pub fn validate(&self, queries: Option<&[Query]>, corpus: Option<&Corpus>) -> Result<()> {
        let qids: Option<HashSet<&str>> = queries.map(|qs| qs.iter().map(|q| q.id.as_str()).collect());
        for (q, d, _) in self.iter() {
            if let Some(ids) = &qids {
                if !ids.contains(q) {
                    return Err(Error::UnknownId(q.to_owned()));
                }
            }
            if let Some(c) = corpus {
                if !c.contains(d) {
                    return Err(Error::UnknownId(d.to_owned()));
                }
            }
        }
        Ok(())
    }
}

pub fn load_qrels(path: impl AsRef<Path>) -> Result<QrelSet> {
    let path = path.as_ref();
    let mut qrels = QrelSet::new();
    for (idx, (n, line)) in read_lines(path)?.into_iter().enumerate() {
        let cols: Vec<&str> = line.split_whitespace().collect();
        let (q, d, g) = match cols.as_slice() {
            [q, d, g] => (*q, *d, *g),
            [q, _, d, g] => (*q, *d, *g),
            _ => {
                return Err(Error::parse(
                    path,
                    n,
                    format!("expected 3 or 4 columns, found {}", cols.len()),
                ))
            }
        };
        let grade: i64 = match g.parse() {
            Ok(v) => v,
            // BEIR TSV files start with a `query-id corpus-id score` header.
            Err(_) if idx == 0 => continue,
            Err(_) => return Err(Error::parse(path, n, format!("grade `{g}` is not an integer"))),
        };
        if grade < 0 {
            return Err(Error::parse(path, n, format!("negative grade {grade}")));
        }
        let grade = u32::try_from(grade).map_err(|_| Error::parse(path, n, "grade out of range"))?;
        qrels
            .insert(q, d, grade)
            .map_err(|e| Error::parse(path, n, e.to_string()))?;
    }
    Ok(qrels)
}

pub fn write_qrels(qrels: &QrelSet, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut w = create(path)?;
    for (q, d, g) in qrels.iter() {
        writeln!(w, "{q}\t{d}\t{g}").map_err(|e| Error::io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub doc_id: String,
    pub score: f64,
    pub rank: usize,
}

/// One query's ranked list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunList {
    pub query_id: String,
    pub entries: Vec<RunEntry>,
}

/// Descending score, then ascending doc id.
pub(crate) fn rank_order(a: &(String, f64), b: &(String, f64)) -> std::cmp::Ordering {
    b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0))
}

impl RunList {
    /// Sorts by score (descending, ties by ascending doc id) and assigns
    /// ranks 1..n.
    pub fn from_scored(query_id: impl Into<String>, mut scored: Vec<(String, f64)>) -> Result<Self> {
        scored.sort_by(rank_order);
        let entries = scored
            .into_iter()
            .enumerate()
            .map(|(i, (doc_id, score))| RunEntry {
                doc_id,
                score,
                rank: i + 1,
            })
            .collect();
        let run = Self {
            query_id: query_id.into(),
            entries,
        };
        run.validate()?;
        Ok(run)
    }

    pub fn doc_ids(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|e| e.doc_id.as_str())
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for (i, e) in self.entries.iter().enumerate() {
            if e.rank != i + 1 {
                return Err(Error::invalid(format!(
                    "query `{}`: ranks are not contiguous (expected {}, found {})",
                    self.query_id,
                    i + 1,
                    e.rank
                )));
            }
            if !e.score.is_finite() {
                return Err(Error::invalid(format!(
                    "query `{}`: non-finite score for `{}`",
                    self.query_id, e.doc_id
                )));
            }
            if i > 0 && e.score > self.entries[i - 1].score {
                return Err(Error::invalid(format!(
                    "query `{}`: scores increase at rank {}",
                    self.query_id, e.rank
                )));
            }
            if !seen.insert(e.doc_id.as_str()) {
                return Err(Error::invalid(format!(
                    "duplicate pair ({}, {})",
                    self.query_id, e.doc_id
                )));
            }
        }
        Ok(())
    }
}

/// Writes `qid Q0 docid rank score tag`. Scores use the shortest decimal
/// form that parses back to the same `f64`.
pub fn write_run(runs: &[RunList], path: impl AsRef<Path>, tag: &str) -> Result<()> {
    let path = path.as_ref();
    if tag.is_empty() || tag.contains(char::is_whitespace) {
        return Err(Error::invalid(format!("run tag `{tag}` must be one non-empty token")));
    }
    let mut seen = HashSet::new();
    for run in runs {
        run.validate()?;
        if !seen.insert(run.query_id.as_str()) {
            return Err(Error::invalid(format!("query `{}` appears twice", run.query_id)));
        }
    }
    let mut w = create(path)?;
    for run in runs {
        for e in &run.entries {
            writeln!(w, "{} Q0 {} {} {} {}", run.query_id, e.doc_id, e.rank, e.score, tag)
                .map_err(|err| Error::io(path, err))?;
        }
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Loads a TREC run. Queries come back in order of first appearance, each
/// list sorted by rank and validated.
pub fn load_run(path: impl AsRef<Path>) -> Result<Vec<RunList>> {
    let path = path.as_ref();
    let mut order: Vec<String> = Vec::new();
    let mut lists: HashMap<String, Vec<(usize, RunEntry)>> = HashMap::new();
    for (n, line) in read_lines(path)? {
        let cols: Vec<&str> = line.split_whitespace().collect();
        if cols.len() != 6 {
            return Err(Error::parse(path, n, format!("expected 6 columns, found {}", cols.len())));
        }
        let rank: usize = cols[3]
            .parse()
            .map_err(|_| Error::parse(path, n, format!("bad rank `{}`", cols[3])))?;
        let score: f64 = cols[4]
            .parse()
            .map_err(|_| Error::parse(path, n, format!("bad score `{}`", cols[4])))?;
        let qid = cols[0].to_owned();
        if !lists.contains_key(&qid) {
            order.push(qid.clone());
        }
        lists.entry(qid).or_default().push((
            n,
            RunEntry {
                doc_id: cols[2].to_owned(),
                score,
                rank,
            },
        ));
    }
    order
        .into_iter()
        .map(|qid| {
            let mut entries = lists.remove(&qid).unwrap_or_default();
            entries.sort_by_key(|(_, e)| e.rank);
            let first_line = entries.first().map_or(0, |(n, _)| *n);
            let run = RunList {
                query_id: qid,
                entries: entries.into_iter().map(|(_, e)| e).collect(),
            };
            run.validate()
                .map_err(|e| Error::parse(path, first_line, e.to_string()))?;
            Ok(run)
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
struct EmbeddingRecord {
    #[serde(rename = "_id")]
    id: String,
    vector: Vec<f64>,
}

/// Dense vectors of one fixed dimension, in insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    dim: usize,
    ids: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
}

impl EmbeddingSet {
    pub fn new(dim: usize) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("embedding dimension must be positive"));
        }
        Ok(Self {
            dim,
            ids: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
        })
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Vec<f64>) -> Result<()> {
        let id = id.into();
        if vector.len() != self.dim {
            return Err(Error::DimensionMismatch {
                id,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("embedding `{id}` has a non-finite component")));
        }
        if self.index.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.index.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn from_pairs(dim: usize, pairs: impl IntoIterator<Item = (String, Vec<f64>)>) -> Result<Self> {
        let mut set = Self::new(dim)?;
        for (id, v) in pairs {
            set.insert(id, v)?;
        }
        Ok(set)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&[f64]> {
        self.index.get(id).map(|&i| self.vectors[i].as_slice())
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[f64])> {
        self.ids
            .iter()
            .zip(&self.vectors)
            .map(|(id, v)| (id.as_str(), v.as_slice()))
    }
}

pub fn load_embeddings(path: impl AsRef<Path>) -> Result<EmbeddingSet> {
    let path = path.as_ref();
    let records = read_jsonl::<EmbeddingRecord>(path)?;
    let dim = match records.first() {
        Some((_, r)) => r.vector.len(),
        None => return Err(Error::invalid(format!("{}: no embeddings", path.display()))),
    };
    let mut set = EmbeddingSet::new(dim).map_err(|e| Error::parse(path, records[0].0, e.to_string()))?;
    for (n, r) in records {
        set.insert(r.id, r.vector)
            .map_err(|e| Error::parse(path, n, e.to_string()))?;
    }
    Ok(set)
}

pub fn write_embeddings(set: &EmbeddingSet, path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(
        path.as_ref(),
        set.iter().map(|(id, v)| EmbeddingRecord {
            id: id.to_owned(),
            vector: v.to_vec(),
        }),
    )
}

/// Per-token log-probabilities of one document (natural log, each <= 0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenLogProbs {
    #[serde(rename = "_id")]
    pub doc_id: String,
    pub logprobs: Vec<f64>,
}

impl TokenLogProbs {
    pub fn new(doc_id: impl Into<String>, logprobs: Vec<f64>) -> Result<Self> {
        let t = Self {
            doc_id: doc_id.into(),
            logprobs,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn token_count(&self) -> usize {
        self.logprobs.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.logprobs.is_empty() {
            return Err(Error::invalid(format!("`{}` has no tokens", self.doc_id)));
        }
        if let Some(v) = self.logprobs.iter().find(|v| !v.is_finite() || **v > 0.0) {
            return Err(Error::invalid(format!(
                "`{}`: log-probability {v} must be finite and <= 0",
                self.doc_id
            )));
        }
        Ok(())
    }
}

pub fn load_logprobs(path: impl AsRef<Path>) -> Result<Vec<TokenLogProbs>> {
    let path = path.as_ref();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (n, t) in read_jsonl::<TokenLogProbs>(path)? {
        t.validate().map_err(|e| Error::parse(path, n, e.to_string()))?;
        if !seen.insert(t.doc_id.clone()) {
            return Err(Error::parse(path, n, format!("duplicate id `{}`", t.doc_id)));
        }
        out.push(t);
    }
    Ok(out)
}

pub fn write_logprobs(items: &[TokenLogProbs], path: impl AsRef<Path>) -> Result<()> {
    write_jsonl(path.as_ref(), items)
}

/// Raw LLM output for one human document, before cleanup.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedText {
    #[serde(rename = "_id")]
    pub origin_id: String,
    pub text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub prompt_id: Option<String>,
}

pub fn load_generated_texts(path: impl AsRef<Path>) -> Result<BTreeMap<String, String>> {
    let path = path.as_ref();
    let mut out = BTreeMap::new();
    for (n, g) in read_jsonl::<GeneratedText>(path)? {
        if out.insert(g.origin_id.clone(), g.text).is_some() {
            return Err(Error::parse(path, n, format!("duplicate origin `{}`", g.origin_id)));
        }
    }
    Ok(out)
}
