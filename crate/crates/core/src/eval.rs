//! Per-source (masked) ranking metrics and the relative difference between
//! sources.

use std::collections::{BTreeSet, HashMap};
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::{QrelSet, RunList, Source, SourceLookup};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_CUTOFFS: [usize; 3] = [1, 3, 5];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Metric {
    #[serde(rename = "NDCG")]
    Ndcg,
    #[serde(rename = "MAP")]
    Map,
}

impl Metric {
    pub const ALL: [Metric; 2] = [Metric::Ndcg, Metric::Map];

    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Ndcg => "NDCG",
            Metric::Map => "MAP",
        }
    }
}

/// Judgments of one query with every non-target positive forced to grade 0.
/// Zero grades are dropped, so the map holds exactly the target positives.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MaskedQrels {
    pub target: Source,
    grades: HashMap<String, u32>,
}

impl MaskedQrels {
    pub fn new(qrels: &QrelSet, query_id: &str, sources: &dyn SourceLookup, target: Source) -> Result<Self> {
        let mut grades = HashMap::new();
        for (doc, grade) in qrels.for_query(query_id) {
            let source = sources
                .source_of(doc)
                .ok_or_else(|| Error::UnknownId(doc.to_owned()))?;
            if source == target && grade > 0 {
                grades.insert(doc.to_owned(), grade);
            }
        }
        Ok(Self { target, grades })
    }

    pub fn grade(&self, doc_id: &str) -> u32 {
        self.grades.get(doc_id).copied().unwrap_or(0)
    }

    pub fn positives(&self) -> usize {
        self.grades.len()
    }

    fn ideal(&self) -> Vec<u32> {
        let mut g: Vec<u32> = self.grades.values().copied().collect();
        g.sort_unstable_by(|a, b| b.cmp(a));
        g
    }
}

fn discount(rank: usize) -> f64 {
    ((rank + 1) as f64).log2()
}

fn dcg(grades: impl Iterator<Item = u32>, k: usize) -> f64 {
    grades
        .take(k)
        .enumerate()
        .map(|(i, g)| f64::from(g) / discount(i + 1))
        .sum()
}

fn check_run(run: &RunList, sources: &dyn SourceLookup) -> Result<()> {
    for doc in run.doc_ids() {
        if sources.source_of(doc).is_none() {
            return Err(Error::UnknownId(doc.to_owned()));
        }
    }
    Ok(())
}

/// DCG@k of the masked grades along the unchanged mixed ranking.
pub fn masked_dcg(run: &RunList, masked: &MaskedQrels, k: usize) -> f64 {
    dcg(run.doc_ids().map(|d| masked.grade(d)), k)
}

fn metric_value(run: &RunList, masked: &MaskedQrels, metric: Metric, k: usize) -> f64 {
    match metric {
        Metric::Ndcg => {
            let ideal = dcg(masked.ideal().into_iter(), k);
            if ideal == 0.0 {
                0.0
            } else {
                masked_dcg(run, masked, k) / ideal
            }
        }
        Metric::Map => {
            let r = masked.positives();
            if r == 0 {
                return 0.0;
            }
            let mut hits = 0usize;
            let mut sum = 0.0;
            for (i, doc) in run.doc_ids().take(k).enumerate() {
                if masked.grade(doc) > 0 {
                    hits += 1;
                    sum += hits as f64 / (i + 1) as f64;
                }
            }
            sum / r as f64
        }
    }
}

pub fn masked_metric(
    run: &RunList,
    qrels: &QrelSet,
    sources: &dyn SourceLookup,
    target: Source,
    metric: Metric,
    k: usize,
) -> Result<f64> {
    if k == 0 {
        return Err(Error::invalid("cutoff must be >= 1"));
    }
    check_run(run, sources)?;
    let masked = MaskedQrels::new(qrels, &run.query_id, sources, target)?;
    Ok(metric_value(run, &masked, metric, k))
}

/// (h - g) / mean(h, g) * 100. Both zero gives 0; see [`is_degenerate`].
pub fn relative_delta(human: f64, generated: f64) -> Result<f64> {
    if !(human.is_finite() && generated.is_finite()) {
        return Err(Error::invalid("relative delta of non-finite values"));
    }
    if human < 0.0 || generated < 0.0 {
        return Err(Error::invalid(format!(
            "relative delta needs non-negative inputs, got ({human}, {generated})"
        )));
    }
    if is_degenerate(human, generated) {
        return Ok(0.0);
    }
    Ok((human - generated) / (0.5 * (human + generated)) * 100.0)
}

pub fn is_degenerate(human: f64, generated: f64) -> bool {
    human + generated == 0.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub metric: Metric,
    pub k: usize,
    pub human: f64,
    pub generated: f64,
    pub relative_delta: f64,
    pub degenerate: bool,
}

/// Metrics in [0, 1]; deltas in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasReport {
    pub schema_version: u32,
    pub query_count: usize,
    /// Judged queries with no ranked list; they score 0 on both sides.
    pub missing_run_queries: Vec<String>,
    /// Ranked queries without any judgment; ignored.
    pub unjudged_run_queries: Vec<String>,
    pub cutoffs: Vec<usize>,
    pub rows: Vec<ReportRow>,
}

impl BiasReport {
    pub fn row(&self, metric: Metric, k: usize) -> Option<&ReportRow> {
        self.rows.iter().find(|r| r.metric == metric && r.k == k)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::invalid(e.to_string()))
    }

    /// Plain table on the 0-100 scale.
    pub fn render(&self) -> String {
        let mut out = String::from("metric\thuman\tgenerated\tdelta\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}@{}\t{:.1}\t{:.1}\t{:.1}{}",
                r.metric.as_str(),
                r.k,
                r.human * 100.0,
                r.generated * 100.0,
                r.relative_delta,
                if r.degenerate { "*" } else { "" }
            );
        }
        out
    }
}

/// Means over every judged query, for each metric, cutoff and source.
pub fn evaluate_runs(
    runs: &[RunList],
    qrels: &QrelSet,
    sources: &(dyn SourceLookup + Sync),
    cutoffs: &[usize],
) -> Result<BiasReport> {
    if runs.is_empty() {
        return Err(Error::invalid("no runs to evaluate"));
    }
    if cutoffs.is_empty() || cutoffs.contains(&0) {
        return Err(Error::invalid("cutoffs must be non-empty and >= 1"));
    }
    let cutoffs: Vec<usize> = cutoffs.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();

    let mut by_query: HashMap<&str, &RunList> = HashMap::new();
    for run in runs {
        if by_query.insert(run.query_id.as_str(), run).is_some() {
            return Err(Error::DuplicateId(run.query_id.clone()));
        }
    }
    let judged = qrels.query_ids();
    let judged_set: BTreeSet<&str> = judged.iter().copied().collect();
    let unjudged: Vec<String> = runs
        .iter()
        .map(|r| r.query_id.as_str())
        .filter(|q| !judged_set.contains(q))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .map(str::to_owned)
        .collect();
    let missing: Vec<String> = judged
        .iter()
        .filter(|q| !by_query.contains_key(*q))
        .map(|q| (*q).to_owned())
        .collect();

    let cells: Vec<(Metric, usize, Source)> = Metric::ALL
        .iter()
        .flat_map(|&m| {
            cutoffs
                .iter()
                .flat_map(move |&k| [Source::Human, Source::Generated].map(|s| (m, k, s)))
        })
        .collect();

    let per_query: Vec<Vec<f64>> = judged
        .par_iter()
        .map(|q| -> Result<Vec<f64>> {
            let Some(run) = by_query.get(q) else {
                return Ok(vec![0.0; cells.len()]);
            };
            check_run(run, sources)?;
            let human = MaskedQrels::new(qrels, q, sources, Source::Human)?;
            let generated = MaskedQrels::new(qrels, q, sources, Source::Generated)?;
            Ok(cells
                .iter()
                .map(|&(m, k, s)| {
                    let masked = if s == Source::Human { &human } else { &generated };
                    metric_value(run, masked, m, k)
                })
                .collect())
        })
        .collect::<Result<_>>()?;

    let n = judged.len();
    let mut sums = vec![0.0; cells.len()];
    for values in &per_query {
        for (s, v) in sums.iter_mut().zip(values) {
            *s += v;
        }
    }
    let means: Vec<f64> = sums.iter().map(|s| if n == 0 { 0.0 } else { s / n as f64 }).collect();

    let mut rows = Vec::new();
    for pair in cells.chunks(2).zip(means.chunks(2)) {
        let ((metric, k, _), values) = (pair.0[0], pair.1);
        let (human, generated) = (values[0], values[1]);
        rows.push(ReportRow {
            metric,
            k,
            human,
            generated,
            relative_delta: relative_delta(human, generated)?,
            degenerate: is_degenerate(human, generated),
        });
    }

    Ok(BiasReport {
        schema_version: REPORT_SCHEMA_VERSION,
        query_count: n,
        missing_run_queries: missing,
        unjudged_run_queries: unjudged,
        cutoffs,
        rows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn toy() -> (RunList, QrelSet, BTreeMap<String, Source>) {
        let run = RunList::from_scored(
            "q",
            vec![("d1@g".into(), 3.0), ("d1".into(), 2.0), ("x".into(), 1.0)],
        )
        .unwrap();
        let mut qrels = QrelSet::new();
        qrels.insert("q", "d1", 1).unwrap();
        qrels.insert("q", "d1@g", 1).unwrap();
        let sources = BTreeMap::from([
            ("d1".to_string(), Source::Human),
            ("d1@g".to_string(), Source::Generated),
            ("x".to_string(), Source::Human),
        ]);
        (run, qrels, sources)
    }

    #[test]
    fn top_document_masking() {
        let (run, qrels, src) = toy();
        let m = |t, metric, k| masked_metric(&run, &qrels, &src, t, metric, k).unwrap();
        assert_eq!(m(Source::Human, Metric::Ndcg, 1), 0.0);
        assert_eq!(m(Source::Human, Metric::Map, 1), 0.0);
        assert_eq!(m(Source::Generated, Metric::Ndcg, 1), 1.0);
        assert_eq!(m(Source::Generated, Metric::Map, 1), 1.0);
        assert!((m(Source::Human, Metric::Ndcg, 3) - 1.0 / 3f64.log2()).abs() < 1e-15);
        assert_eq!(m(Source::Human, Metric::Map, 3), 0.5);
    }

    #[test]
    fn unknown_run_doc_is_an_error() {
        let (_, qrels, src) = toy();
        let run = RunList::from_scored("q", vec![("zzz".into(), 1.0)]).unwrap();
        assert!(masked_metric(&run, &qrels, &src, Source::Human, Metric::Ndcg, 1).is_err());
    }

    #[test]
    fn delta_examples() {
        let r = |h, g| (relative_delta(h, g).unwrap() * 10.0).round() / 10.0;
        assert_eq!(r(22.0, 17.0), 25.6);
        assert_eq!(r(15.3, 24.7), -47.0);
        assert_eq!(r(19.7, 39.7), -67.3);
        assert_eq!(relative_delta(0.4, 0.4).unwrap(), 0.0);
        assert_eq!(relative_delta(0.0, 0.0).unwrap(), 0.0);
        assert!(is_degenerate(0.0, 0.0));
        assert_eq!(relative_delta(0.3, 0.0).unwrap(), 200.0);
        assert!(relative_delta(-0.1, 0.2).is_err());
    }

    #[test]
    fn report_of_toy_query() {
        let (run, qrels, src) = toy();
        let report = evaluate_runs(&[run], &qrels, &src, &DEFAULT_CUTOFFS).unwrap();
        assert_eq!(report.query_count, 1);
        let r1 = report.row(Metric::Ndcg, 1).unwrap();
        assert_eq!((r1.human, r1.generated, r1.relative_delta), (0.0, 1.0, -200.0));
        assert_eq!(report.row(Metric::Map, 3).unwrap().human, 0.5);
        assert_eq!(report.rows.len(), 6);
    }

    #[test]
    fn missing_and_unjudged_queries_are_flagged() {
        let (run, mut qrels, src) = toy();
        qrels.insert("q2", "d1", 1).unwrap();
        let stray = RunList::from_scored("q9", vec![("d1".into(), 1.0)]).unwrap();
        let report = evaluate_runs(&[run, stray], &qrels, &src, &[1]).unwrap();
        assert_eq!(report.query_count, 2);
        assert_eq!(report.missing_run_queries, vec!["q2"]);
        assert_eq!(report.unjudged_run_queries, vec!["q9"]);
        assert_eq!(report.row(Metric::Ndcg, 1).unwrap().generated, 0.5);
    }

    #[test]
    fn empty_runs_rejected() {
        let (_, qrels, src) = toy();
        assert!(evaluate_runs(&[], &qrels, &src, &[1]).is_err());
    }
}
