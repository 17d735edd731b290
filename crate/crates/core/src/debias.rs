//! A projection scoring head over frozen embeddings, trained with an
//! in-batch contrastive ranking loss plus a weighted hinge that penalizes
//! ranking a generated twin above its human original.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{evaluate_runs, BiasReport, Metric, DEFAULT_CUTOFFS};
use crate::store::{read_lines, EmbeddingSet, QrelSet, RunList, Source};

pub const DEFAULT_TAU: f64 = 0.05;
const INIT_NOISE: f64 = 1e-3;

/// s(q, d) = (A q)·(A d) / τ with A of shape `rank`×`dim`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoringHead {
    rank: usize,
    dim: usize,
    tau: f64,
    a: Vec<f64>,
}

impl ScoringHead {
    pub fn new(rank: usize, dim: usize, tau: f64, a: Vec<f64>) -> Result<Self> {
        if rank == 0 || dim == 0 || rank > dim {
            return Err(Error::invalid(format!("need 1 <= rank <= dim, got rank {rank}, dim {dim}")));
        }
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::invalid(format!("temperature must be > 0, got {tau}")));
        }
        if a.len() != rank * dim {
            return Err(Error::invalid(format!("projection needs {} entries, found {}", rank * dim, a.len())));
        }
        if a.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("projection has non-finite entries"));
        }
        Ok(Self { rank, dim, tau, a })
    }

    /// [I_r | 0] plus N(0, 1e-3²) noise.
    pub fn init(rank: usize, dim: usize, tau: f64, rng: &mut impl Rng) -> Result<Self> {
        let mut a = vec![0.0; rank * dim];
        for (i, x) in a.iter_mut().enumerate() {
            let noise: f64 = rng.sample(StandardNormal);
            *x = INIT_NOISE * noise + if i / dim == i % dim { 1.0 } else { 0.0 };
        }
        Self::new(rank, dim, tau, a)
    }

    pub fn zeros(rank: usize, dim: usize, tau: f64) -> Result<Self> {
        Self::new(rank, dim, tau, vec![0.0; rank * dim])
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn weights(&self) -> &[f64] {
        &self.a
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.a
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.a
            .chunks(self.dim)
            .map(|row| row.iter().zip(v).map(|(x, y)| x * y).sum())
            .collect()
    }

    pub fn score(&self, q: &[f64], d: &[f64]) -> f64 {
        dot(&self.project(q), &self.project(d)) / self.tau
    }

    /// JSON with every weight printed to 17 significant digits.
    pub fn to_json(&self) -> String {
        let mut s = format!(
            "{{\n  \"rank\": {},\n  \"dim\": {},\n  \"tau\": {:.16e},\n  \"a\": [\n",
            self.rank, self.dim, self.tau
        );
        for (i, row) in self.a.chunks(self.dim).enumerate() {
            let cells: Vec<String> = row.iter().map(|x| format!("{x:.16e}")).collect();
            let sep = if i + 1 == self.rank { "" } else { "," };
            let _ = writeln!(s, "    [{}]{sep}", cells.join(", "));
        }
        s.push_str("  ]\n}\n");
        s
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct File {
            rank: usize,
            dim: usize,
            tau: f64,
            a: Vec<Vec<f64>>,
        }
        let f: File = serde_json::from_str(text).map_err(|e| Error::invalid(format!("head file: {e}")))?;
        if f.a.len() != f.rank || f.a.iter().any(|r| r.len() != f.dim) {
            return Err(Error::invalid("head file: matrix shape disagrees with rank/dim"));
        }
        Self::new(f.rank, f.dim, f.tau, f.a.concat())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Triplet {
    pub query_id: String,
    pub human_id: String,
    pub generated_id: String,
}

impl Triplet {
    pub fn new(q: impl Into<String>, h: impl Into<String>, g: impl Into<String>) -> Self {
        Self {
            query_id: q.into(),
            human_id: h.into(),
            generated_id: g.into(),
        }
    }
}

/// Triplets whose ids all resolve in one embedding table.
#[derive(Debug, Clone)]
pub struct TripletSet {
    triplets: Vec<Triplet>,
    embeddings: EmbeddingSet,
}

impl TripletSet {
    pub fn new(triplets: Vec<Triplet>, embeddings: EmbeddingSet) -> Result<Self> {
        let mut seen = HashSet::new();
        for t in &triplets {
            if !seen.insert(t) {
                return Err(Error::DuplicateId(format!(
                    "({}, {}, {})",
                    t.query_id, t.human_id, t.generated_id
                )));
            }
            if t.human_id == t.generated_id {
                return Err(Error::invalid(format!("`{}` used as both human and generated", t.human_id)));
            }
            for id in [&t.query_id, &t.human_id, &t.generated_id] {
                if embeddings.get(id).is_none() {
                    return Err(Error::UnknownId(id.clone()));
                }
            }
        }
        Ok(Self { triplets, embeddings })
    }

    pub fn len(&self) -> usize {
        self.triplets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triplets.is_empty()
    }

    pub fn triplets(&self) -> &[Triplet] {
        &self.triplets
    }

    pub fn embeddings(&self) -> &EmbeddingSet {
        &self.embeddings
    }

    pub fn dim(&self) -> usize {
        self.embeddings.dim()
    }

    fn vector(&self, id: &str) -> Vec<f64> {
        self.embeddings.get(id).expect("ids checked at construction").to_vec()
    }

    pub fn batch(&self, indices: &[usize]) -> Batch {
        let mut b = Batch::default();
        for &i in indices {
            let t = &self.triplets[i];
            b.queries.push(self.vector(&t.query_id));
            b.human.push(self.vector(&t.human_id));
            b.generated.push(self.vector(&t.generated_id));
        }
        b
    }

    pub fn full_batch(&self) -> Batch {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }
}

/// Tab-separated `query_id human_id generated_id`; an optional header whose
/// first field is `query_id` is skipped.
pub fn load_triplets(path: impl AsRef<Path>) -> Result<Vec<Triplet>> {
    let path = path.as_ref();
    let mut out = Vec::new();
    for (n, line) in read_lines(path)? {
        let fields: Vec<&str> = line.split('\t').map(str::trim).collect();
        if out.is_empty() && fields.first() == Some(&"query_id") {
            continue;
        }
        match fields.as_slice() {
            [q, h, g] if !q.is_empty() && !h.is_empty() && !g.is_empty() => out.push(Triplet::new(*q, *h, *g)),
            _ => return Err(Error::parse(path, n, "expected `query_id<TAB>human_id<TAB>generated_id`")),
        }
    }
    Ok(out)
}

pub fn write_triplets(triplets: &[Triplet], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut s = String::from("query_id\thuman_id\tgenerated_id\n");
    for t in triplets {
        let _ = writeln!(s, "{}\t{}\t{}", t.query_id, t.human_id, t.generated_id);
    }
    fs::write(path, s).map_err(|e| Error::io(path, e))
}

/// Row `i` of each field belongs to the same triplet.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub queries: Vec<Vec<f64>>,
    pub human: Vec<Vec<f64>>,
    pub generated: Vec<Vec<f64>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.queries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.queries.is_empty()
    }

    /// Human docs first, then generated.
    fn docs(&self) -> impl Iterator<Item = &Vec<f64>> {
        self.human.iter().chain(&self.generated)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum DebiasTerm {
    Off,
    Weighted(f64),
}

impl DebiasTerm {
    pub fn from_alpha(alpha: f64) -> Self {
        if alpha == 0.0 {
            DebiasTerm::Off
        } else {
            DebiasTerm::Weighted(alpha)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossParts {
    pub rank: f64,
    pub debias: f64,
    pub total: f64,
}

/// Σ max(0, g - h).
pub fn debias_loss(scores_generated: &[f64], scores_human: &[f64]) -> Result<f64> {
    if scores_generated.len() != scores_human.len() {
        return Err(Error::invalid(format!(
            "paired score lists differ in length: {} vs {}",
            scores_generated.len(),
            scores_human.len()
        )));
    }
    Ok(scores_generated
        .iter()
        .zip(scores_human)
        .map(|(g, h)| (g - h).max(0.0))
        .sum())
}

struct Forward {
    /// Projected queries, B×r.
    p: Vec<Vec<f64>>,
    /// Projected docs, 2B×r: human then generated.
    d: Vec<Vec<f64>>,
    /// Scores, B×2B.
    s: Vec<Vec<f64>>,
}

fn forward(head: &ScoringHead, batch: &Batch) -> Result<Forward> {
    if batch.len() < 2 {
        return Err(Error::invalid("a batch needs at least two triplets"));
    }
    if batch.human.len() != batch.len() || batch.generated.len() != batch.len() {
        return Err(Error::invalid("batch fields differ in length"));
    }
    for v in batch.queries.iter().chain(batch.docs()) {
        if v.len() != head.dim {
            return Err(Error::DimensionMismatch {
                id: "batch vector".into(),
                expected: head.dim,
                found: v.len(),
            });
        }
    }
    let p: Vec<Vec<f64>> = batch.queries.iter().map(|q| head.project(q)).collect();
    let d: Vec<Vec<f64>> = batch.docs().map(|x| head.project(x)).collect();
    let s = p
        .iter()
        .map(|pi| d.iter().map(|dj| dot(pi, dj) / head.tau).collect())
        .collect();
    Ok(Forward { p, d, s })
}

/// InfoNCE averaged over 2B positives. Query i sees its positive and every
/// document of the other triplets; its own twin is not a candidate.
fn rank_part(s: &[Vec<f64>], mut grad: Option<&mut [Vec<f64>]>) -> f64 {
    let b = s.len();
    let count = (2 * b) as f64;
    let mut loss = 0.0;
    for (i, row) in s.iter().enumerate() {
        for (pos, twin) in [(i, b + i), (b + i, i)] {
            let max = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != twin)
                .fold(f64::NEG_INFINITY, |m, (_, &x)| m.max(x));
            let z: f64 = row
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != twin)
                .map(|(_, &x)| (x - max).exp())
                .sum();
            let lse = max + z.ln();
            loss += lse - row[pos];
            if let Some(g) = grad.as_deref_mut() {
                for (j, &x) in row.iter().enumerate() {
                    if j != twin {
                        g[i][j] += (x - lse).exp() / count;
                    }
                }
                g[i][pos] -= 1.0 / count;
            }
        }
    }
    loss / count
}

pub fn rank_loss(head: &ScoringHead, batch: &Batch) -> Result<f64> {
    let f = forward(head, batch)?;
    Ok(rank_part(&f.s, None))
}

fn paired_scores(s: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let b = s.len();
    let g = (0..b).map(|i| s[i][b + i]).collect();
    let h = (0..b).map(|i| s[i][i]).collect();
    (g, h)
}

/// Loss parts and ∂L/∂A (row-major, like the weights). With
/// `DEBIAS = false` the hinge is absent from the build entirely; the
/// reported debias part is then 0.
fn loss_and_grad_impl<const DEBIAS: bool>(
    head: &ScoringHead,
    batch: &Batch,
    term: DebiasTerm,
) -> Result<(LossParts, Vec<f64>)> {
    let f = forward(head, batch)?;
    let b = batch.len();
    let mut gs = vec![vec![0.0; 2 * b]; b];
    let rank = rank_part(&f.s, Some(&mut gs));
    let mut total = rank;
    let mut debias = 0.0;
    if DEBIAS {
        let (sg, sh) = paired_scores(&f.s);
        debias = debias_loss(&sg, &sh)?;
        if let DebiasTerm::Weighted(alpha) = term {
            total += alpha * debias;
            for i in 0..b {
                // Subgradient 0 at a tie.
                if sg[i] > sh[i] {
                    gs[i][b + i] += alpha;
                    gs[i][i] -= alpha;
                }
            }
        }
    }

    let r = head.rank;
    let tau = head.tau;
    let mut grad = vec![0.0; r * head.dim];
    let docs: Vec<&Vec<f64>> = batch.docs().collect();
    for (gs_i, q_i) in gs.iter().zip(&batch.queries).take(b) {
        // gP_i = Σ_j gS_ij D_j / τ, accumulated straight into A's gradient.
        let mut gp = vec![0.0; r];
        for (j, dj) in f.d.iter().enumerate() {
            let w = gs_i[j] / tau;
            for k in 0..r {
                gp[k] += w * dj[k];
            }
        }
        outer_add(&mut grad, &gp, q_i);
    }
    for (j, doc) in docs.iter().enumerate() {
        let mut gd = vec![0.0; r];
        for (i, pi) in f.p.iter().enumerate() {
            let w = gs[i][j] / tau;
            for k in 0..r {
                gd[k] += w * pi[k];
            }
        }
        outer_add(&mut grad, &gd, doc);
    }
    Ok((LossParts { rank, debias, total }, grad))
}

fn outer_add(grad: &mut [f64], left: &[f64], right: &[f64]) {
    let dim = right.len();
    for (k, l) in left.iter().enumerate() {
        for (g, x) in grad[k * dim..(k + 1) * dim].iter_mut().zip(right) {
            *g += l * x;
        }
    }
}

pub fn loss_and_grad(head: &ScoringHead, batch: &Batch, term: DebiasTerm) -> Result<(LossParts, Vec<f64>)> {
    loss_and_grad_impl::<true>(head, batch, term)
}

pub fn loss(head: &ScoringHead, batch: &Batch, term: DebiasTerm) -> Result<LossParts> {
    let f = forward(head, batch)?;
    let rank = rank_part(&f.s, None);
    let (sg, sh) = paired_scores(&f.s);
    let debias = debias_loss(&sg, &sh)?;
    let total = match term {
        DebiasTerm::Off => rank,
        DebiasTerm::Weighted(alpha) => rank + alpha * debias,
    };
    Ok(LossParts { rank, debias, total })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub alpha: f64,
    pub lr: f64,
    pub epochs: usize,
    /// Triplets per step. Negatives are the other triplets of the batch.
    pub batch_size: usize,
    pub rank: usize,
    pub tau: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 0.0,
            lr: 1e-3,
            epochs: 50,
            batch_size: 200,
            rank: 32,
            tau: DEFAULT_TAU,
            seed: 42,
        }
    }
}

impl TrainConfig {
    pub fn with_alpha(self, alpha: f64) -> Self {
        Self { alpha, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::invalid(format!("alpha must be >= 0, got {}", self.alpha)));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::invalid(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if self.epochs == 0 {
            return Err(Error::invalid("epochs must be >= 1"));
        }
        if self.batch_size < 2 {
            return Err(Error::invalid("batch size must be >= 2"));
        }
        if self.rank == 0 {
            return Err(Error::invalid("rank must be >= 1"));
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::invalid("temperature must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub rank: f64,
    pub debias: f64,
    pub total: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub epochs: Vec<EpochLog>,
}

/// Splits a shuffled index list into batches; a trailing batch of one is
/// merged into the previous one so every batch has negatives.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() < 2) {
        out.pop();
        let n = order.len();
        let start = (out.len() - 1) * size;
        *out.last_mut().expect("non-empty") = &order[start..n];
    }
    out
}

/// Plain gradient descent, fixed step, seeded shuffling. Each epoch logs the
/// mean batch loss measured before that batch's update.
pub fn train(set: &TripletSet, cfg: &TrainConfig) -> Result<(ScoringHead, TrainLog)> {
    train_impl::<true>(set, cfg)
}

fn train_impl<const DEBIAS: bool>(set: &TripletSet, cfg: &TrainConfig) -> Result<(ScoringHead, TrainLog)> {
    cfg.validate()?;
    if set.len() < 2 {
        return Err(Error::invalid("training needs at least two triplets"));
    }
    if cfg.rank > set.dim() {
        return Err(Error::invalid(format!("rank {} exceeds embedding dim {}", cfg.rank, set.dim())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut head = ScoringHead::init(cfg.rank, set.dim(), cfg.tau, &mut rng)?;
    let term = DebiasTerm::from_alpha(cfg.alpha);
    let mut log = TrainLog::default();
    let mut order: Vec<usize> = (0..set.len()).collect();
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sum = LossParts {
            rank: 0.0,
            debias: 0.0,
            total: 0.0,
        };
        let groups = batches(&order, cfg.batch_size);
        for idx in &groups {
            let batch = set.batch(idx);
            let (parts, grad) = loss_and_grad_impl::<DEBIAS>(&head, &batch, term)?;
            if !parts.total.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::Numerical(format!("training diverged at epoch {epoch}")));
            }
            sum.rank += parts.rank;
            sum.debias += parts.debias;
            sum.total += parts.total;
            for (w, g) in head.a.iter_mut().zip(&grad) {
                *w -= cfg.lr * g;
            }
        }
        if head.a.iter().any(|w| !w.is_finite()) {
            return Err(Error::Numerical(format!("training diverged at epoch {epoch}")));
        }
        let n = groups.len() as f64;
        log.epochs.push(EpochLog {
            epoch,
            rank: sum.rank / n,
            debias: sum.debias / n,
            total: sum.total / n,
        });
    }
    Ok((head, log))
}

/// The same trainer built without the hinge term at all.
pub fn train_rank_only(set: &TripletSet, cfg: &TrainConfig) -> Result<(ScoringHead, TrainLog)> {
    train_impl::<false>(set, cfg)
}

/// Largest entrywise relative error between the analytic gradient and
/// central differences with step `h`.
pub fn gradient_check(head: &ScoringHead, batch: &Batch, term: DebiasTerm, h: f64) -> Result<f64> {
    let (_, analytic) = loss_and_grad(head, batch, term)?;
    let mut probe = head.clone();
    let mut worst = 0.0f64;
    for (k, &a) in analytic.iter().enumerate() {
        let w = head.a[k];
        probe.a[k] = w + h;
        let up = loss(&probe, batch, term)?.total;
        probe.a[k] = w - h;
        let down = loss(&probe, batch, term)?.total;
        probe.a[k] = w;
        let numeric = (up - down) / (2.0 * h);
        let scale = a.abs().max(numeric.abs()).max(1e-7);
        worst = worst.max((a - numeric).abs() / scale);
    }
    Ok(worst)
}

/// Random head and batch with every hinge at least `margin` away from its
/// kink; when `all_active`, every generated twin also outscores its human
/// original. Resamples until both hold.
pub fn gradient_probe(
    seed: u64,
    batch_size: usize,
    dim: usize,
    rank: usize,
    margin: f64,
    all_active: bool,
) -> Result<(ScoringHead, Batch)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..100_000 {
        let a: Vec<f64> = (0..rank * dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal) / (dim as f64).sqrt())
            .collect();
        let head = ScoringHead::new(rank, dim, DEFAULT_TAU, a)?;
        let mut batch = Batch::default();
        for _ in 0..batch_size {
            batch.queries.push(unit(gaussian(&mut rng, dim)));
            batch.human.push(unit(gaussian(&mut rng, dim)));
            batch.generated.push(unit(gaussian(&mut rng, dim)));
        }
        let f = forward(&head, &batch)?;
        let (sg, sh) = paired_scores(&f.s);
        let ok = sg.iter().zip(&sh).all(|(g, h)| {
            let gap = g - h;
            gap.abs() > margin && (!all_active || gap > 0.0)
        });
        if ok {
            return Ok((head, batch));
        }
    }
    Err(Error::Numerical("could not draw a probe away from hinge kinks".into()))
}

fn gaussian(rng: &mut impl Rng, dim: usize) -> Vec<f64> {
    (0..dim).map(|_| rng.sample(StandardNormal)).collect()
}

fn unit(mut v: Vec<f64>) -> Vec<f64> {
    let n = dot(&v, &v).sqrt();
    if n > 0.0 {
        for x in &mut v {
            *x /= n;
        }
    }
    v
}

/// Synthetic triplets in which every generated document carries a shared
/// "shortcut" direction u. With `query_shortcut` > 0 queries also lean
/// towards u, so a head that amplifies u ranks generated twins higher.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ShortcutConfig {
    pub seed: u64,
    pub dim: usize,
    pub train: usize,
    pub test: usize,
    pub human_noise: f64,
    pub shortcut_strength: f64,
    pub query_shortcut: f64,
}

impl Default for ShortcutConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            dim: 32,
            train: 200,
            test: 100,
            human_noise: 0.3,
            shortcut_strength: 0.5,
            query_shortcut: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ShortcutData {
    pub train: TripletSet,
    pub test: TripletSet,
    pub shortcut: Vec<f64>,
}

/// Ids: `q{i}`, `h{i}`, `g{i}`; the first `train` triplets are the training split.
pub fn shortcut_dataset(cfg: &ShortcutConfig) -> Result<ShortcutData> {
    if cfg.dim == 0 || cfg.train < 2 || cfg.test < 1 {
        return Err(Error::invalid("shortcut dataset needs dim >= 1, train >= 2, test >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let u = unit(gaussian(&mut rng, cfg.dim));
    let mut train = (EmbeddingSet::new(cfg.dim)?, Vec::new());
    let mut test = (EmbeddingSet::new(cfg.dim)?, Vec::new());
    for i in 0..cfg.train + cfg.test {
        let z = unit(gaussian(&mut rng, cfg.dim));
        let q = unit(z.iter().zip(&u).map(|(a, b)| a + cfg.query_shortcut * b).collect());
        let n1 = unit(gaussian(&mut rng, cfg.dim));
        let n2 = unit(gaussian(&mut rng, cfg.dim));
        let h = unit((0..cfg.dim).map(|k| q[k] + cfg.human_noise * n1[k]).collect());
        let g = unit(
            (0..cfg.dim)
                .map(|k| q[k] + cfg.human_noise * n2[k] + cfg.shortcut_strength * u[k])
                .collect(),
        );
        let (emb, trips) = if i < cfg.train { &mut train } else { &mut test };
        let (qi, hi, gi) = (format!("q{i}"), format!("h{i}"), format!("g{i}"));
        emb.insert(qi.clone(), q)?;
        emb.insert(hi.clone(), h)?;
        emb.insert(gi.clone(), g)?;
        trips.push(Triplet::new(qi, hi, gi));
    }
    Ok(ShortcutData {
        train: TripletSet::new(train.1, train.0)?,
        test: TripletSet::new(test.1, test.0)?,
        shortcut: u,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadEvaluation {
    /// Every query ranks all human and generated docs of the set.
    pub mixed: BiasReport,
    /// NDCG@1 when only the human docs are ranked.
    pub human_only_ndcg1: f64,
}

fn rank_with_head(head: &ScoringHead, set: &TripletSet, docs: &[&str]) -> Result<Vec<RunList>> {
    let projected: Vec<Vec<f64>> = docs.iter().map(|d| head.project(&set.vector(d))).collect();
    let queries: BTreeSet<&str> = set.triplets.iter().map(|t| t.query_id.as_str()).collect();
    queries
        .into_par_iter()
        .map(|q| {
            let pq = head.project(&set.vector(q));
            let scored = docs
                .iter()
                .zip(&projected)
                .map(|(d, pd)| ((*d).to_owned(), dot(&pq, pd) / head.tau))
                .collect();
            RunList::from_scored(q, scored)
        })
        .collect()
}

/// Both twins of a triplet are relevant to its query.
pub fn evaluate_head(head: &ScoringHead, set: &TripletSet) -> Result<HeadEvaluation> {
    if head.dim != set.dim() {
        return Err(Error::DimensionMismatch {
            id: "head".into(),
            expected: set.dim(),
            found: head.dim,
        });
    }
    let mut sources = BTreeMap::new();
    let mut qrels = QrelSet::new();
    let mut human_qrels = QrelSet::new();
    for t in &set.triplets {
        sources.insert(t.human_id.clone(), Source::Human);
        sources.insert(t.generated_id.clone(), Source::Generated);
        qrels.insert(&t.query_id, &t.human_id, 1)?;
        qrels.insert(&t.query_id, &t.generated_id, 1)?;
        human_qrels.insert(&t.query_id, &t.human_id, 1)?;
    }
    let all: Vec<&str> = sources.keys().map(String::as_str).collect();
    let humans: Vec<&str> = sources
        .iter()
        .filter(|(_, s)| **s == Source::Human)
        .map(|(d, _)| d.as_str())
        .collect();
    let mixed = evaluate_runs(&rank_with_head(head, set, &all)?, &qrels, &sources, &DEFAULT_CUTOFFS)?;
    let human_only = evaluate_runs(&rank_with_head(head, set, &humans)?, &human_qrels, &sources, &[1])?;
    Ok(HeadEvaluation {
        mixed,
        human_only_ndcg1: human_only.row(Metric::Ndcg, 1).expect("cutoff 1 present").human,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha: f64,
    pub human_ndcg1: f64,
    pub generated_ndcg1: f64,
    pub delta_ndcg1: f64,
    pub human_map1: f64,
    pub generated_map1: f64,
    pub delta_map1: f64,
    pub human_only_ndcg1: f64,
    pub final_loss: f64,
}

/// One training and held-out evaluation per α, sorted by α. Trainings run
/// in parallel; each is seed-deterministic on its own.
pub fn alpha_sweep(train_set: &TripletSet, eval_set: &TripletSet, template: &TrainConfig, alphas: &[f64]) -> Result<Vec<SweepRow>> {
    if alphas.is_empty() {
        return Err(Error::invalid("alpha grid is empty"));
    }
    let mut grid = alphas.to_vec();
    grid.sort_by(f64::total_cmp);
    if grid.windows(2).any(|w| w[0] == w[1]) {
        return Err(Error::invalid("alpha grid has duplicates"));
    }
    grid.par_iter()
        .map(|&alpha| {
            let cfg = template.with_alpha(alpha);
            let (head, log) = train(train_set, &cfg)?;
            let ev = evaluate_head(&head, eval_set)?;
            let n = ev.mixed.row(Metric::Ndcg, 1).expect("cutoff 1");
            let m = ev.mixed.row(Metric::Map, 1).expect("cutoff 1");
            Ok(SweepRow {
                alpha,
                human_ndcg1: n.human,
                generated_ndcg1: n.generated,
                delta_ndcg1: n.relative_delta,
                human_map1: m.human,
                generated_map1: m.generated,
                delta_map1: m.relative_delta,
                human_only_ndcg1: ev.human_only_ndcg1,
                final_loss: log.epochs.last().map_or(f64::NAN, |e| e.total),
            })
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut s = String::from(
        "alpha,human_ndcg1,generated_ndcg1,delta_ndcg1,human_map1,generated_map1,delta_map1,human_only_ndcg1,final_loss\n",
    );
    for r in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{}",
            r.alpha,
            r.human_ndcg1,
            r.generated_ndcg1,
            r.delta_ndcg1,
            r.human_map1,
            r.generated_map1,
            r.delta_map1,
            r.human_only_ndcg1,
            r.final_loss
        );
    }
    s
}

/// Ranks with ties averaged, starting at 1.
fn average_ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut ranks = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let r = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = r;
        }
        i = j + 1;
    }
    ranks
}

/// Spearman correlation (Pearson on average ranks). `None` when either side
/// is constant or lengths differ.
pub fn spearman(x: &[f64], y: &[f64]) -> Option<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return None;
    }
    let (rx, ry) = (average_ranks(x), average_ranks(y));
    let n = x.len() as f64;
    let (mx, my) = (rx.iter().sum::<f64>() / n, ry.iter().sum::<f64>() / n);
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    if vx == 0.0 || vy == 0.0 {
        return None;
    }
    Some(cov / (vx * vy).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hinge_examples() {
        assert!((debias_loss(&[0.8], &[0.5]).unwrap() - 0.3).abs() < 1e-15);
        assert_eq!(debias_loss(&[0.5], &[0.8]).unwrap(), 0.0);
        assert!((debias_loss(&[0.8, 0.2], &[0.5, 0.9]).unwrap() - 0.3).abs() < 1e-15);
        assert!(debias_loss(&[0.1], &[]).is_err());
    }

    fn tiny_batch() -> Batch {
        Batch {
            queries: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            human: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            generated: vec![vec![0.9, 0.1], vec![0.1, 0.9]],
        }
    }

    #[test]
    fn zero_head_is_uniform() {
        let head = ScoringHead::zeros(2, 2, DEFAULT_TAU).unwrap();
        let b = tiny_batch();
        let (parts, grad) = loss_and_grad(&head, &b, DebiasTerm::Weighted(1.0)).unwrap();
        assert!((parts.rank - 3f64.ln()).abs() < 1e-15);
        assert_eq!(parts.debias, 0.0);
        assert!(grad.iter().all(|g| *g == 0.0));
    }

    #[test]
    fn single_triplet_batch_rejected() {
        let head = ScoringHead::zeros(2, 2, DEFAULT_TAU).unwrap();
        let b = Batch {
            queries: vec![vec![1.0, 0.0]],
            human: vec![vec![1.0, 0.0]],
            generated: vec![vec![0.0, 1.0]],
        };
        assert!(rank_loss(&head, &b).is_err());
    }

    #[test]
    fn dominant_positive_drives_loss_to_zero() {
        let mut head = ScoringHead::new(2, 2, DEFAULT_TAU, vec![1.0, 0.0, 0.0, 1.0]).unwrap();
        let b = Batch {
            queries: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            human: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
            generated: vec![vec![1.0, 0.0], vec![0.0, 1.0]],
        };
        let mut last = f64::INFINITY;
        for scale in [0.1, 0.3, 1.0] {
            head.a = vec![scale, 0.0, 0.0, scale];
            let l = rank_loss(&head, &b).unwrap();
            assert!(l < last);
            last = l;
        }
        assert!(last < 1e-8);
    }

    #[test]
    fn score_scales_quadratically() {
        let head = ScoringHead::new(1, 2, 0.5, vec![0.3, -0.7]).unwrap();
        let (q, d) = ([0.2, 0.9], [1.1, -0.4]);
        let s = head.score(&q, &d);
        let s3 = head.score(&[0.6, 2.7], &[3.3, -1.2]);
        assert!((s3 - 9.0 * s).abs() < 1e-12);
    }

    #[test]
    fn head_json_round_trips_exactly() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let head = ScoringHead::init(3, 5, DEFAULT_TAU, &mut rng).unwrap();
        let json = head.to_json();
        assert!(json.contains("e0"));
        assert_eq!(ScoringHead::from_json(&json).unwrap(), head);
        assert!(ScoringHead::from_json("{\"rank\":1,\"dim\":2,\"tau\":1,\"a\":[[1]]}").is_err());
    }

    #[test]
    fn init_is_identity_like() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let head = ScoringHead::init(2, 4, DEFAULT_TAU, &mut rng).unwrap();
        for (i, w) in head.weights().iter().enumerate() {
            let target = if i / 4 == i % 4 { 1.0 } else { 0.0 };
            assert!((w - target).abs() < 1e-2);
        }
        assert!(ScoringHead::init(5, 4, DEFAULT_TAU, &mut rng).is_err());
    }

    #[test]
    fn batching_merges_singleton_tail() {
        let order: Vec<usize> = (0..7).collect();
        let b = batches(&order, 3);
        assert_eq!(b.iter().map(|x| x.len()).collect::<Vec<_>>(), vec![3, 4]);
        assert_eq!(batches(&order, 10).len(), 1);
    }

    #[test]
    fn triplet_validation() {
        let mut emb = EmbeddingSet::new(1).unwrap();
        for id in ["q", "h", "g"] {
            emb.insert(id, vec![1.0]).unwrap();
        }
        let t = Triplet::new("q", "h", "g");
        assert!(TripletSet::new(vec![t.clone(), t.clone()], emb.clone()).is_err());
        assert!(TripletSet::new(vec![Triplet::new("q", "h", "x")], emb.clone()).is_err());
        assert!(TripletSet::new(vec![Triplet::new("q", "h", "h")], emb.clone()).is_err());
        assert_eq!(TripletSet::new(vec![t], emb).unwrap().len(), 1);
    }

    #[test]
    fn spearman_basics() {
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]), Some(1.0));
        assert_eq!(spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]), Some(-1.0));
        assert_eq!(spearman(&[1.0, 2.0], &[5.0, 5.0]), None);
        assert_eq!(average_ranks(&[2.0, 1.0, 2.0]), vec![2.5, 1.0, 2.5]);
    }

    #[test]
    fn config_validation() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig::default().with_alpha(-1.0).validate().is_err());
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}
