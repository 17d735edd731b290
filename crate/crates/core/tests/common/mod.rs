//! Brute-force reference implementations used by the integration and
//! acceptance tests. They work from raw inputs (token lists, dense
//! matrices, explicit grade lists) and share no code with the library.

#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sourcebias::store::{QrelSet, RunList, Source};
use sourcebias::theorem::TheoremInstance;

/// One ranked query: docs in rank order, per-doc source, graded judgments.
#[derive(Debug, Clone)]
pub struct RankCase {
    pub ranking: Vec<String>,
    pub sources: BTreeMap<String, Source>,
    pub grades: BTreeMap<String, u32>,
}

impl RankCase {
    pub fn run(&self) -> RunList {
        let n = self.ranking.len();
        let scored = self
            .ranking
            .iter()
            .enumerate()
            .map(|(i, d)| (d.clone(), (n - i) as f64))
            .collect();
        RunList::from_scored("q", scored).unwrap()
    }

    pub fn qrels(&self) -> QrelSet {
        let mut q = QrelSet::new();
        for (d, g) in &self.grades {
            q.insert("q", d.clone(), *g).unwrap();
        }
        q
    }

    fn masked(&self, d: &str, target: Source) -> u32 {
        if self.sources[d] == target {
            self.grades.get(d).copied().unwrap_or(0)
        } else {
            0
        }
    }

    pub fn dcg(&self, target: Option<Source>, k: usize) -> f64 {
        let mut total = 0.0;
        for (i, d) in self.ranking.iter().take(k).enumerate() {
            let g = match target {
                Some(t) => self.masked(d, t),
                None => self.grades.get(d).copied().unwrap_or(0),
            };
            total += g as f64 / ((i + 2) as f64).log2();
        }
        total
    }

    pub fn ndcg(&self, target: Source, k: usize) -> f64 {
        let mut ideal: Vec<u32> = self
            .grades
            .iter()
            .filter(|(d, g)| **g > 0 && self.sources[d.as_str()] == target)
            .map(|(_, g)| *g)
            .collect();
        ideal.sort_unstable_by(|a, b| b.cmp(a));
        let mut idcg = 0.0;
        for (i, g) in ideal.iter().take(k).enumerate() {
            idcg += *g as f64 / ((i + 2) as f64).log2();
        }
        if idcg == 0.0 {
            0.0
        } else {
            self.dcg(Some(target), k) / idcg
        }
    }

    pub fn map(&self, target: Source, k: usize) -> f64 {
        let r = self
            .grades
            .iter()
            .filter(|(d, g)| **g > 0 && self.sources[d.as_str()] == target)
            .count();
        if r == 0 {
            return 0.0;
        }
        let mut hits = 0;
        let mut sum = 0.0;
        for (i, d) in self.ranking.iter().take(k).enumerate() {
            if self.masked(d, target) > 0 {
                hits += 1;
                sum += hits as f64 / (i + 1) as f64;
            }
        }
        sum / r as f64
    }
}

/// Up to 10 docs with random sources, up to 4 positives (grades 1..=3,
/// plus occasional explicit zeros), and a ranking over a random subset.
pub fn random_rank_case(rng: &mut impl Rng) -> RankCase {
    let n = rng.random_range(1..=10);
    let ids: Vec<String> = (0..n).map(|i| format!("d{i}")).collect();
    let sources = ids
        .iter()
        .map(|d| {
            let s = if rng.random_bool(0.5) { Source::Human } else { Source::Generated };
            (d.clone(), s)
        })
        .collect();
    let mut shuffled = ids.clone();
    shuffled.shuffle(rng);
    let positives = rng.random_range(0..=4.min(n));
    let mut grades = BTreeMap::new();
    for d in shuffled.iter().take(positives) {
        grades.insert(d.clone(), rng.random_range(1..=3));
    }
    if positives < n && rng.random_bool(0.3) {
        grades.insert(shuffled[positives].clone(), 0);
    }
    shuffled.shuffle(rng);
    let len = rng.random_range(1..=n);
    RankCase {
        ranking: shuffled[..len].to_vec(),
        sources,
        grades,
    }
}

/// BM25 straight from token lists.
pub fn bm25_oracle(docs: &[Vec<String>], query: &[String], doc: usize, k1: f64, b: f64) -> f64 {
    let n = docs.len() as f64;
    let avgdl = docs.iter().map(Vec::len).sum::<usize>() as f64 / n;
    let terms: BTreeSet<&String> = query.iter().collect();
    let len = docs[doc].len() as f64;
    let mut score = 0.0;
    for t in terms {
        let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
        let tf = docs[doc].iter().filter(|w| *w == t).count() as f64;
        if tf == 0.0 {
            continue;
        }
        let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avgdl));
    }
    score
}

/// Cosine of the raw-tf·idf document vector with the count·idf query vector,
/// divided by the document norm only.
pub fn tfidf_oracle(docs: &[Vec<String>], query: &[String], doc: usize) -> f64 {
    let n = docs.len() as f64;
    let idf = |t: &String| {
        let df = docs.iter().filter(|d| d.contains(t)).count() as f64;
        ((n + 1.0) / (df + 1.0)).ln() + 1.0
    };
    let vocab: BTreeSet<&String> = docs[doc].iter().collect();
    let weight = |t: &String| docs[doc].iter().filter(|w| *w == t).count() as f64 * idf(t);
    let norm = vocab.iter().map(|t| weight(t).powi(2)).sum::<f64>().sqrt();
    if norm == 0.0 {
        return 0.0;
    }
    let qterms: BTreeSet<&String> = query.iter().collect();
    qterms
        .iter()
        .map(|t| {
            let qc = query.iter().filter(|w| w == t).count() as f64;
            qc * idf(t) * weight(t)
        })
        .sum::<f64>()
        / norm
}

/// Small corpus over a 6-word vocabulary so terms repeat and collide.
pub fn random_token_corpus(rng: &mut impl Rng) -> Vec<Vec<String>> {
    const VOCAB: [&str; 6] = ["alpha", "beta", "gamma", "delta", "eps", "zeta"];
    let n = rng.random_range(1..=10);
    (0..n)
        .map(|_| {
            let len = rng.random_range(1..=8);
            (0..len).map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_owned()).collect()
        })
        .collect()
}

pub fn random_query(rng: &mut impl Rng) -> Vec<String> {
    const VOCAB: [&str; 7] = ["alpha", "beta", "gamma", "delta", "eps", "zeta", "unseen"];
    let len = rng.random_range(1..=4);
    (0..len).map(|_| VOCAB[rng.random_range(0..VOCAB.len())].to_owned()).collect()
}

/// Singular values from nalgebra's SVD, descending.
pub fn svd_oracle(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let m = nalgebra::DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let mut s: Vec<f64> = m.singular_values().iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

/// Square roots of the Gram-matrix eigenvalues (nalgebra's symmetric solver).
pub fn gram_oracle(rows: &[Vec<f64>]) -> Vec<f64> {
    let n = rows.len();
    let d = rows[0].len();
    let m = nalgebra::DMatrix::from_fn(n, d, |i, j| rows[i][j]);
    let gram = if n >= d { m.transpose() * &m } else { &m * m.transpose() };
    let mut ev: Vec<f64> = gram
        .symmetric_eigenvalues()
        .iter()
        .map(|x| x.max(0.0).sqrt())
        .collect();
    ev.sort_by(|a, b| b.total_cmp(a));
    ev
}

pub fn random_matrix(rng: &mut impl Rng, n: usize, d: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// E_{LLM}[PPL under BERT] - PPL(human doc under BERT) by walking the
/// prefix tree recursively.
pub fn theorem_gap_oracle(inst: &TheoremInstance) -> f64 {
    fn row(v: usize, prefix: &[usize]) -> usize {
        let mut offset = 0;
        for l in 0..prefix.len() {
            offset += v.pow(l as u32);
        }
        let mut code = 0;
        for &t in prefix {
            code = code * v + t;
        }
        offset + code
    }
    fn walk(inst: &TheoremInstance, prefix: &mut Vec<usize>, p: f64, logb: f64, acc: &mut f64) {
        if prefix.len() == inst.length {
            *acc += p * (-logb / inst.length as f64);
            return;
        }
        let r = row(inst.alphabet, prefix);
        for t in 0..inst.alphabet {
            let (pl, pb) = (inst.llm[r][t], inst.bert[r][t]);
            prefix.push(t);
            walk(inst, prefix, p * pl, logb + pb.ln(), acc);
            prefix.pop();
        }
    }
    let mut acc = 0.0;
    walk(inst, &mut Vec::new(), 1.0, 0.0, &mut acc);
    let mut logh = 0.0;
    for s in 0..inst.length {
        logh += inst.bert[row(inst.alphabet, &inst.human_doc[..s])][inst.human_doc[s]].ln();
    }
    acc - (-logh / inst.length as f64)
}

/// The same instance with every token `t` renamed to `perm[t]`.
pub fn relabel(inst: &TheoremInstance, perm: &[usize]) -> TheoremInstance {
    let v = inst.alphabet;
    let rows = inst.bert.len();
    // Decode each row index back to its prefix, permute, re-encode.
    let mut prefixes = Vec::with_capacity(rows);
    for l in 0..inst.length {
        for code in 0..v.pow(l as u32) {
            let mut p = vec![0; l];
            let mut c = code;
            for slot in p.iter_mut().rev() {
                *slot = c % v;
                c /= v;
            }
            prefixes.push(p);
        }
    }
    let index = |p: &[usize]| {
        let offset: usize = (0..p.len()).map(|l| v.pow(l as u32)).sum();
        offset + p.iter().fold(0, |a, &t| a * v + t)
    };
    let map = |table: &Vec<Vec<f64>>| {
        let mut out = vec![vec![0.0; v]; rows];
        for (i, p) in prefixes.iter().enumerate() {
            let q: Vec<usize> = p.iter().map(|&t| perm[t]).collect();
            for t in 0..v {
                out[index(&q)][perm[t]] = table[i][t];
            }
        }
        out
    };
    TheoremInstance {
        alphabet: v,
        length: inst.length,
        human_doc: inst.human_doc.iter().map(|&t| perm[t]).collect(),
        bert: map(&inst.bert),
        bert_cond: map(&inst.bert_cond),
        human: map(&inst.human),
        human_cond: map(&inst.human_cond),
        llm: map(&inst.llm),
        epsilon: inst.epsilon,
    }
}
