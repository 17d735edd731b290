//! Log-perplexity (in nats) aggregated from per-token log-probabilities.

use std::collections::{BTreeMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::builder::{Histogram, HISTOGRAM_BINS};
use crate::error::{Error, Result};
use crate::store::TokenLogProbs;

/// -(1/S) Σ log p. Not exponentiated.
pub fn perplexity_of(logprobs: &[f64]) -> Result<f64> {
    if logprobs.is_empty() {
        return Err(Error::invalid("perplexity of an empty token list"));
    }
    let s: f64 = logprobs.iter().sum();
    Ok(-s / logprobs.len() as f64)
}

pub fn perplexity(doc: &TokenLogProbs) -> Result<f64> {
    doc.validate()?;
    perplexity_of(&doc.logprobs)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourcePpl {
    pub per_doc: BTreeMap<String, f64>,
    pub mean: f64,
    pub median: f64,
    pub histogram: Histogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PplSummary {
    pub human: SourcePpl,
    pub generated: SourcePpl,
    /// Generated mean minus human mean; negative when generated text is
    /// more predictable.
    pub mean_difference: f64,
}

pub fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n == 0 {
        return 0.0;
    }
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn per_doc(docs: &[TokenLogProbs]) -> Result<Vec<(String, f64)>> {
    docs.par_iter()
        .map(|d| Ok((d.doc_id.clone(), perplexity(d)?)))
        .collect()
}

fn summarize(values: Vec<(String, f64)>, lo: f64, hi: f64) -> SourcePpl {
    let ppl: Vec<f64> = values.iter().map(|(_, p)| *p).collect();
    SourcePpl {
        mean: ppl.iter().sum::<f64>() / ppl.len() as f64,
        median: median(&ppl),
        histogram: Histogram::from_values(lo, hi, HISTOGRAM_BINS, ppl.iter().copied()),
        per_doc: values.into_iter().collect(),
    }
}

/// Both histograms share the observed range of the two collections.
pub fn ppl_summary(human: &[TokenLogProbs], generated: &[TokenLogProbs]) -> Result<PplSummary> {
    if human.is_empty() || generated.is_empty() {
        return Err(Error::invalid("both collections must be non-empty"));
    }
    let mut seen = HashSet::new();
    for d in human.iter().chain(generated) {
        if !seen.insert(d.doc_id.as_str()) {
            return Err(Error::DuplicateId(d.doc_id.clone()));
        }
    }
    let h = per_doc(human)?;
    let g = per_doc(generated)?;
    let (lo, hi) = h
        .iter()
        .chain(&g)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, p)| (lo.min(*p), hi.max(*p)));
    let human = summarize(h, lo, hi);
    let generated = summarize(g, lo, hi);
    Ok(PplSummary {
        mean_difference: generated.mean - human.mean,
        human,
        generated,
    })
}
