//! Exhaustive numerical check, over small alphabets, of the claim that an
//! LLM rewrite of a human document has lower expected perplexity under a
//! BERT-like model, together with every intermediate step of its argument.
//!
//! All conditioning on the human document d^H is implicit: it is fixed per
//! instance, so a conditional table is indexed by the prefix of d^G alone.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const ENUMERATION_LIMIT: u128 = 1_000_000;
pub const CONDITION_TOL: f64 = 1e-12;
pub const PASS_TOL: f64 = 1e-10;
pub const STEP_TOL: f64 = 1e-10;
const SUM_TOL: f64 = 1e-12;
const MAX_ATTEMPTS: usize = 100_000;
const BLOCK: usize = 4096;

/// Number of prefixes of length < `length`.
pub fn prefix_count(alphabet: usize, length: usize) -> usize {
    (0..length).map(|l| alphabet.pow(l as u32)).sum()
}

/// Row of a prefix: all shorter prefixes come first, then base-V order.
pub fn prefix_index(alphabet: usize, prefix: &[usize]) -> usize {
    let offset = prefix_count(alphabet, prefix.len());
    offset + prefix.iter().fold(0, |acc, &t| acc * alphabet + t)
}

/// V^S, or an error when it exceeds the enumeration budget.
pub fn sequence_count(alphabet: usize, length: usize) -> Result<usize> {
    let n = u32::try_from(length)
        .ok()
        .and_then(|l| (alphabet as u128).checked_pow(l))
        .unwrap_or(u128::MAX);
    if n > ENUMERATION_LIMIT {
        return Err(Error::BudgetExceeded {
            size: n,
            limit: ENUMERATION_LIMIT,
        });
    }
    Ok(n as usize)
}

/// One next-token distribution per prefix.
pub type Table = Vec<Vec<f64>>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoremInstance {
    pub alphabet: usize,
    pub length: usize,
    pub human_doc: Vec<usize>,
    pub bert: Table,
    pub bert_cond: Table,
    pub human: Table,
    pub human_cond: Table,
    pub llm: Table,
    pub epsilon: f64,
}

impl TheoremInstance {
    /// Every table uniform, ε = 0.
    pub fn uniform(alphabet: usize, length: usize, human_doc: Vec<usize>) -> Result<Self> {
        let t = vec![vec![1.0 / alphabet.max(1) as f64; alphabet]; prefix_count(alphabet, length)];
        let inst = Self {
            alphabet,
            length,
            human_doc,
            bert: t.clone(),
            bert_cond: t.clone(),
            human: t.clone(),
            human_cond: t.clone(),
            llm: t,
            epsilon: 0.0,
        };
        inst.validate()?;
        Ok(inst)
    }

    pub fn tables(&self) -> [(&'static str, &Table); 5] {
        [
            ("bert", &self.bert),
            ("bert_cond", &self.bert_cond),
            ("human", &self.human),
            ("human_cond", &self.human_cond),
            ("llm", &self.llm),
        ]
    }

    pub fn validate(&self) -> Result<()> {
        if self.alphabet == 0 || self.length == 0 {
            return Err(Error::invalid("alphabet and length must be >= 1"));
        }
        if self.human_doc.len() != self.length || self.human_doc.iter().any(|&t| t >= self.alphabet) {
            return Err(Error::invalid("human document must have `length` tokens from the alphabet"));
        }
        if !(self.epsilon >= 0.0 && self.epsilon.is_finite()) {
            return Err(Error::invalid(format!("epsilon must be >= 0, got {}", self.epsilon)));
        }
        let rows = prefix_count(self.alphabet, self.length);
        for (name, table) in self.tables() {
            if table.len() != rows {
                return Err(Error::invalid(format!("table `{name}` has {} rows, expected {rows}", table.len())));
            }
            for (i, row) in table.iter().enumerate() {
                if row.len() != self.alphabet {
                    return Err(Error::invalid(format!("table `{name}` row {i} has wrong width")));
                }
                if row.iter().any(|p| !(p.is_finite() && *p > 0.0)) {
                    return Err(Error::invalid(format!("table `{name}` row {i} has a non-positive entry")));
                }
                let s: f64 = row.iter().sum();
                if (s - 1.0).abs() > SUM_TOL {
                    return Err(Error::invalid(format!("table `{name}` row {i} sums to {s}")));
                }
            }
        }
        Ok(())
    }

    pub fn sequence_count(&self) -> Result<usize> {
        sequence_count(self.alphabet, self.length)
    }

    fn decode(&self, mut code: usize) -> Vec<usize> {
        let mut seq = vec![0; self.length];
        for slot in seq.iter_mut().rev() {
            *slot = code % self.alphabet;
            code /= self.alphabet;
        }
        seq
    }
}

/// -(1/S) Σ log P(d_s | d_<s).
pub fn ppl_under(table: &Table, alphabet: usize, seq: &[usize]) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::invalid("perplexity of an empty sequence"));
    }
    let mut total = 0.0;
    let mut row = 0;
    for (s, &tok) in seq.iter().enumerate() {
        let p = table
            .get(row)
            .and_then(|r| r.get(tok))
            .ok_or_else(|| Error::invalid(format!("no table entry for position {s}, token {tok}")))?;
        total += p.ln();
        row = prefix_index(alphabet, &seq[..=s]);
    }
    Ok(-total / seq.len() as f64)
}

/// Per-sequence quantities gathered in one pass over Σ^S.
#[derive(Debug, Clone, Copy, Default)]
struct SeqTerms {
    llm_prob: f64,
    ppl_b: f64,
    ppl_b_cond: f64,
    ppl_h_cond: f64,
    ppl_g_cond: f64,
}

fn seq_terms(inst: &TheoremInstance, seq: &[usize]) -> SeqTerms {
    let v = inst.alphabet;
    let mut logs = [0.0f64; 4];
    let mut row = 0;
    for (s, &t) in seq.iter().enumerate() {
        logs[0] += inst.llm[row][t].ln();
        logs[1] += inst.bert[row][t].ln();
        logs[2] += inst.bert_cond[row][t].ln();
        logs[3] += inst.human_cond[row][t].ln();
        row = prefix_index(v, &seq[..=s]);
    }
    let n = seq.len() as f64;
    SeqTerms {
        llm_prob: logs[0].exp(),
        ppl_b: -logs[1] / n,
        ppl_b_cond: -logs[2] / n,
        ppl_h_cond: -logs[3] / n,
        ppl_g_cond: -logs[0] / n,
    }
}

/// Applies `f` to every sequence in lexicographic order, summing within
/// fixed blocks and then across blocks in order, so the result does not
/// depend on thread count.
fn enumerate_sum<const N: usize>(inst: &TheoremInstance, f: impl Fn(&[usize], SeqTerms) -> [f64; N] + Sync) -> Result<[f64; N]> {
    let total = inst.sequence_count()?;
    let blocks: Vec<[f64; N]> = (0..total.div_ceil(BLOCK))
        .into_par_iter()
        .map(|b| {
            let mut acc = [0.0; N];
            for code in b * BLOCK..((b + 1) * BLOCK).min(total) {
                let seq = inst.decode(code);
                let v = f(&seq, seq_terms(inst, &seq));
                for (a, x) in acc.iter_mut().zip(v) {
                    *a += x;
                }
            }
            acc
        })
        .collect();
    let mut out = [0.0; N];
    for b in blocks {
        for (o, x) in out.iter_mut().zip(b) {
            *o += x;
        }
    }
    Ok(out)
}

/// Σ_t p_t ln(p_t / q_t).
pub fn kl(p: &[f64], q: &[f64]) -> f64 {
    p.iter().zip(q).map(|(a, b)| if *a == 0.0 { 0.0 } else { a * (a / b).ln() }).sum()
}

/// For every position s (0-based) and every prefix of length s: the prefix
/// probability under the LLM and the two KL terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrefixKl {
    pub position: usize,
    pub index: usize,
    pub llm_prob: f64,
    pub kl_bert: f64,
    pub kl_human: f64,
}

pub fn prefix_kls(inst: &TheoremInstance) -> Vec<PrefixKl> {
    let v = inst.alphabet;
    let mut out = Vec::with_capacity(inst.llm.len());
    // Probability of each prefix at the current depth, in base-V order.
    let mut probs = vec![1.0];
    for position in 0..inst.length {
        let offset = prefix_count(v, position);
        let mut next = Vec::with_capacity(probs.len() * v);
        for (k, &p) in probs.iter().enumerate() {
            let index = offset + k;
            let g = &inst.llm[index];
            out.push(PrefixKl {
                position,
                index,
                llm_prob: p,
                kl_bert: kl(g, &inst.bert_cond[index]),
                kl_human: kl(g, &inst.human_cond[index]),
            });
            next.extend(g.iter().map(|x| p * x));
        }
        probs = next;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KlMode {
    /// Required at every prefix.
    #[default]
    PerPrefix,
    /// Required per position, after averaging over LLM prefixes.
    PrefixAveraged,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub holds: bool,
    /// Non-negative iff the condition holds (before tolerance).
    pub slack: f64,
}

impl Check {
    fn from_slack(slack: f64) -> Self {
        Self {
            holds: slack >= -CONDITION_TOL,
            slack,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Conditions {
    pub semantic_superiority: Check,
    pub conditional_redundancy: Check,
    pub bounded_perplexity: Check,
    pub kl_alignment: Check,
}

impl Conditions {
    pub fn all_hold(&self) -> bool {
        self.semantic_superiority.holds
            && self.conditional_redundancy.holds
            && self.bounded_perplexity.holds
            && self.kl_alignment.holds
    }
}

/// Largest PPL(d^G, B) - PPL(d^G | d^H, B) over all d^G.
pub fn max_bounded_gap(inst: &TheoremInstance) -> Result<f64> {
    extreme(inst, |t| t.ppl_b - t.ppl_b_cond, f64::max, f64::NEG_INFINITY)
}

fn extreme(
    inst: &TheoremInstance,
    f: impl Fn(SeqTerms) -> f64 + Sync,
    pick: fn(f64, f64) -> f64,
    init: f64,
) -> Result<f64> {
    let total = inst.sequence_count()?;
    Ok((0..total)
        .into_par_iter()
        .map(|code| f(seq_terms(inst, &inst.decode(code))))
        .reduce(|| init, pick))
}

pub fn check_conditions(inst: &TheoremInstance, mode: KlMode) -> Result<Conditions> {
    inst.validate()?;
    let v = inst.alphabet;
    let ppl_h_b = ppl_under(&inst.bert, v, &inst.human_doc)?;
    let ppl_h_h = ppl_under(&inst.human, v, &inst.human_doc)?;
    let min_cr = extreme(inst, |t| ppl_h_h - t.ppl_h_cond, f64::min, f64::INFINITY)?;
    let max_bp = max_bounded_gap(inst)?;
    let kls = prefix_kls(inst);
    let kl_slack = match mode {
        KlMode::PerPrefix => kls
            .iter()
            .map(|k| k.kl_human - k.kl_bert - inst.epsilon)
            .fold(f64::INFINITY, f64::min),
        KlMode::PrefixAveraged => (0..inst.length)
            .map(|s| {
                kls.iter()
                    .filter(|k| k.position == s)
                    .map(|k| k.llm_prob * (k.kl_human - k.kl_bert))
                    .sum::<f64>()
                    - inst.epsilon
            })
            .fold(f64::INFINITY, f64::min),
    };
    Ok(Conditions {
        semantic_superiority: Check::from_slack(ppl_h_b - ppl_h_h),
        conditional_redundancy: Check::from_slack(min_cr),
        bounded_perplexity: Check::from_slack(inst.epsilon - max_bp),
        kl_alignment: Check::from_slack(kl_slack),
    })
}

/// E_{P_LLM(d^G | d^H)}[PPL(d^G, B)] - PPL(d^H, B).
pub fn expected_ppl_gap(inst: &TheoremInstance) -> Result<f64> {
    inst.validate()?;
    let [e] = enumerate_sum(inst, |_, t| [t.llm_prob * t.ppl_b])?;
    Ok(e - ppl_under(&inst.bert, inst.alphabet, &inst.human_doc)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub expectation: f64,
    pub pass: bool,
    pub conditions_hold: bool,
}

/// Reports the expectation even when a condition fails; the claim only
/// runs one way, so such a result is not a failure of the verifier.
pub fn verify_theorem(inst: &TheoremInstance, mode: KlMode) -> Result<Verdict> {
    let conditions = check_conditions(inst, mode)?;
    let expectation = expected_ppl_gap(inst)?;
    Ok(Verdict {
        expectation,
        pass: expectation <= PASS_TOL,
        conditions_hold: conditions.all_hold(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    Equal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProofStep {
    pub label: String,
    pub relation: Relation,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

impl ProofStep {
    fn new(label: &str, relation: Relation, lhs: f64, rhs: f64) -> Self {
        let holds = match relation {
            Relation::AtMost => lhs <= rhs + STEP_TOL,
            Relation::Equal => (lhs - rhs).abs() <= STEP_TOL,
        };
        Self {
            label: label.to_owned(),
            relation,
            lhs,
            rhs,
            holds,
        }
    }
}

/// Every intermediate relation of the argument, in expectation over
/// P_LLM(d^G | d^H). Sequence-level sides come from enumerating Σ^S; the KL
/// sides come from walking the prefix tree, so the two identities compare
/// independent computations.
pub fn verify_proof_chain(inst: &TheoremInstance) -> Result<Vec<ProofStep>> {
    inst.validate()?;
    let v = inst.alphabet;
    let s = inst.length as f64;
    let ppl_h_b = ppl_under(&inst.bert, v, &inst.human_doc)?;
    let ppl_h_h = ppl_under(&inst.human, v, &inst.human_doc)?;
    let [mass, e_b, e_b_cond, e_h_cond, e_g_cond, e_gap_h, e_gap_b] = enumerate_sum(inst, |_, t| {
        let p = t.llm_prob;
        [
            p,
            p * t.ppl_b,
            p * t.ppl_b_cond,
            p * t.ppl_h_cond,
            p * t.ppl_g_cond,
            p * (t.ppl_g_cond - t.ppl_h_cond),
            p * (t.ppl_b_cond - t.ppl_g_cond),
        ]
    })?;
    if (mass - 1.0).abs() > 1e-9 {
        return Err(Error::Numerical(format!("LLM sequence probabilities sum to {mass}")));
    }
    let kls = prefix_kls(inst);
    let kl_h: f64 = kls.iter().map(|k| k.llm_prob * k.kl_human).sum();
    let kl_b: f64 = kls.iter().map(|k| k.llm_prob * k.kl_bert).sum();

    let target = e_b - ppl_h_b;
    let bounded = e_b - e_b_cond;
    let kl_gap = (kl_b - kl_h) / s;
    let combined = bounded + kl_gap;
    Ok(vec![
        ProofStep::new("semantic_superiority_substitution", Relation::AtMost, target, e_b - ppl_h_h),
        ProofStep::new(
            "conditional_redundancy_bound",
            Relation::AtMost,
            e_g_cond - ppl_h_h,
            e_g_cond - e_h_cond,
        ),
        ProofStep::new("kl_identity_human", Relation::Equal, -s * e_gap_h, kl_h),
        ProofStep::new("kl_identity_bert", Relation::Equal, s * e_gap_b, kl_b),
        ProofStep::new("combined_bound", Relation::AtMost, target, combined),
        ProofStep::new("bounded_perplexity", Relation::AtMost, bounded, inst.epsilon),
        ProofStep::new("kl_gap", Relation::AtMost, kl_gap, -inst.epsilon),
        // The ε terms of the two bounds cancel.
        ProofStep::new("final", Relation::AtMost, combined, 0.0),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Sampler {
    /// Every table drawn from a symmetric Dirichlet(1).
    Dirichlet,
    /// Tables built around a peaked LLM distribution so that the conditions
    /// are likely to hold; see [`random_instance`].
    #[default]
    Structured,
}

fn dirichlet(rng: &mut impl Rng, v: usize) -> Vec<f64> {
    loop {
        let draws: Vec<f64> = (0..v).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let s: f64 = draws.iter().sum();
        if s > 0.0 && draws.iter().all(|x| *x > 0.0) {
            return normalize(draws);
        }
    }
}

fn normalize(v: Vec<f64>) -> Vec<f64> {
    let s: f64 = v.iter().sum();
    v.into_iter().map(|x| x / s).collect()
}

fn mix(w: f64, a: &[f64], b: &[f64]) -> Vec<f64> {
    normalize(a.iter().zip(b).map(|(x, y)| w * x + (1.0 - w) * y).collect())
}

fn draw_tables(rng: &mut impl Rng, sampler: Sampler, v: usize, len: usize, dh: &[usize]) -> [Table; 5] {
    let rows = prefix_count(v, len);
    let mut t: [Table; 5] = Default::default();
    let uniform = vec![1.0 / v as f64; v];
    // Rows that are prefixes of d^H, mapped to the next d^H token.
    let on_path: Vec<Option<usize>> = (0..rows)
        .map(|r| (0..len).find(|&l| prefix_index(v, &dh[..l]) == r).map(|l| dh[l]))
        .collect();
    for next_on_path in on_path {
        let [bert, bert_cond, human, human_cond, llm] = match sampler {
            Sampler::Dirichlet => std::array::from_fn(|_| dirichlet(rng, v)),
            Sampler::Structured => {
                let mut peak = rng.random_range(0..v);
                if let Some(next) = next_on_path {
                    if v > 1 {
                        while peak == next {
                            peak = rng.random_range(0..v);
                        }
                    }
                }
                let mut e = vec![0.0; v];
                e[peak] = 1.0;
                let llm = mix(rng.random_range(0.85..0.97), &e, &dirichlet(rng, v));
                let bert_cond = mix(rng.random_range(0.95..0.99), &llm, &dirichlet(rng, v));
                let bert = normalize(
                    bert_cond
                        .iter()
                        .map(|p| p * (0.005 * rng.sample::<f64, _>(rand_distr::StandardNormal)).exp())
                        .collect(),
                );
                let human_cond = mix(rng.random_range(0.85..1.0), &uniform, &dirichlet(rng, v));
                let human = mix(rng.random_range(0.7..0.9), &bert, &uniform);
                [bert, bert_cond, human, human_cond, llm]
            }
        };
        for (table, row) in t.iter_mut().zip([bert, bert_cond, human, human_cond, llm]) {
            table.push(row);
        }
    }
    t
}

/// Draws tables until conditions (1), (2) and (4) hold, with ε set to the
/// smallest value satisfying (3). Gives up after 100 000 attempts.
pub fn random_instance(rng: &mut impl Rng, alphabet: usize, length: usize, sampler: Sampler, mode: KlMode) -> Result<TheoremInstance> {
    if alphabet == 0 || length == 0 {
        return Err(Error::invalid("alphabet and length must be >= 1"));
    }
    sequence_count(alphabet, length)?;
    for _ in 0..MAX_ATTEMPTS {
        let human_doc: Vec<usize> = (0..length).map(|_| rng.random_range(0..alphabet)).collect();
        let [bert, bert_cond, human, human_cond, llm] = draw_tables(rng, sampler, alphabet, length, &human_doc);
        let mut inst = TheoremInstance {
            alphabet,
            length,
            human_doc,
            bert,
            bert_cond,
            human,
            human_cond,
            llm,
            epsilon: 0.0,
        };
        inst.epsilon = max_bounded_gap(&inst)?.max(0.0);
        if check_conditions(&inst, mode)?.all_hold() {
            return Ok(inst);
        }
    }
    Err(Error::Numerical(format!(
        "no condition-satisfying instance for V={alphabet}, S={length} after {MAX_ATTEMPTS} attempts"
    )))
}

/// `count` instances from one seeded stream; sizes cycle through the given
/// alphabets and lengths.
pub fn random_instances(
    seed: u64,
    count: usize,
    alphabets: &[usize],
    lengths: &[usize],
    sampler: Sampler,
    mode: KlMode,
) -> Result<Vec<TheoremInstance>> {
    if alphabets.is_empty() || lengths.is_empty() {
        return Err(Error::invalid("need at least one alphabet size and one length"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|i| {
            let v = alphabets[i % alphabets.len()];
            let s = lengths[(i / alphabets.len()) % lengths.len()];
            random_instance(&mut rng, v, s, sampler, mode)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceReport {
    pub alphabet: usize,
    pub length: usize,
    pub epsilon: f64,
    pub conditions: Conditions,
    pub verdict: Verdict,
    pub proof: Vec<ProofStep>,
}

impl InstanceReport {
    pub fn build(inst: &TheoremInstance, mode: KlMode) -> Result<Self> {
        Ok(Self {
            alphabet: inst.alphabet,
            length: inst.length,
            epsilon: inst.epsilon,
            conditions: check_conditions(inst, mode)?,
            verdict: verify_theorem(inst, mode)?,
            proof: verify_proof_chain(inst)?,
        })
    }

    pub fn all_ok(&self) -> bool {
        self.verdict.pass && self.proof.iter().all(|s| s.holds)
    }
}
