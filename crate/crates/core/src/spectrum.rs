//! Singular-value spectra of corpus embedding matrices.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::store::EmbeddingSet;

const JACOBI_TOL: f64 = 1e-15;
const MAX_SWEEPS: usize = 60;
const TRACE_TOL: f64 = 1e-8;

/// Eigenvalues of a symmetric matrix (row-major, `m`×`m`) by cyclic Jacobi
/// rotations, in descending order.
///
/// An off-diagonal entry is rotated away while it is large relative to the
/// geometric mean of its two diagonal entries, which keeps small eigenvalues
/// accurate when the matrix is well scaled.
pub fn symmetric_eigenvalues(a: &[f64], m: usize) -> Result<Vec<f64>> {
    if a.len() != m * m {
        return Err(Error::invalid(format!("expected {} entries, found {}", m * m, a.len())));
    }
    if a.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("matrix has non-finite entries"));
    }
    let mut a = a.to_vec();
    let scale = a.iter().fold(0.0f64, |acc, x| acc.max(x.abs()));
    if scale == 0.0 {
        return Ok(vec![0.0; m]);
    }
    let floor = scale * f64::EPSILON * f64::EPSILON;

    let mut converged = m < 2;
    for _ in 0..MAX_SWEEPS {
        if converged {
            break;
        }
        let mut rotated = false;
        for p in 0..m {
            for q in p + 1..m {
                let apq = a[p * m + q];
                let app = a[p * m + p];
                let aqq = a[q * m + q];
                let bound = JACOBI_TOL * (app.abs() * aqq.abs()).sqrt();
                if apq.abs() <= bound.max(floor) {
                    continue;
                }
                rotated = true;
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..m {
                    let akp = a[k * m + p];
                    let akq = a[k * m + q];
                    a[k * m + p] = c * akp - s * akq;
                    a[k * m + q] = s * akp + c * akq;
                }
                for k in 0..m {
                    let apk = a[p * m + k];
                    let aqk = a[q * m + k];
                    a[p * m + k] = c * apk - s * aqk;
                    a[q * m + k] = s * apk + c * aqk;
                }
                a[p * m + q] = 0.0;
                a[q * m + p] = 0.0;
            }
        }
        converged = !rotated;
    }
    if !converged {
        return Err(Error::Numerical(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
        )));
    }
    let mut eig: Vec<f64> = (0..m).map(|i| a[i * m + i]).collect();
    eig.sort_by(|x, y| y.total_cmp(x));
    Ok(eig)
}

/// Row-major `n`×`d` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl Matrix {
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::invalid("matrix needs at least one row"));
        }
        let d = rows[0].len();
        if d == 0 {
            return Err(Error::invalid("matrix needs at least one column"));
        }
        let mut data = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            if r.len() != d {
                return Err(Error::DimensionMismatch {
                    id: format!("row {i}"),
                    expected: d,
                    found: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("matrix has non-finite entries"));
        }
        Ok(Self { rows: n, cols: d, data })
    }

    pub fn from_embeddings(set: &EmbeddingSet) -> Result<Self> {
        let rows: Vec<Vec<f64>> = set.iter().map(|(_, v)| v.to_vec()).collect();
        Self::from_rows(&rows)
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn centered(&self) -> Self {
        let mut mean = vec![0.0; self.cols];
        for i in 0..self.rows {
            for (m, x) in mean.iter_mut().zip(self.row(i)) {
                *m += x;
            }
        }
        for m in &mut mean {
            *m /= self.rows as f64;
        }
        let mut data = self.data.clone();
        for row in data.chunks_mut(self.cols) {
            for (x, m) in row.iter_mut().zip(&mean) {
                *x -= m;
            }
        }
        Self { data, ..*self }
    }

    pub fn frobenius_sq(&self) -> f64 {
        self.data.iter().map(|x| x * x).sum()
    }

    /// Gram matrix of the smaller side: EᵀE when rows ≥ cols, else EEᵀ.
    pub fn small_gram(&self) -> (Vec<f64>, usize) {
        let (n, d) = (self.rows, self.cols);
        if n >= d {
            let mut g = vec![0.0; d * d];
            for i in 0..n {
                let r = self.row(i);
                for a in 0..d {
                    let ra = r[a];
                    for b in a..d {
                        g[a * d + b] += ra * r[b];
                    }
                }
            }
            mirror(&mut g, d);
            (g, d)
        } else {
            let mut g = vec![0.0; n * n];
            for a in 0..n {
                for b in a..n {
                    g[a * n + b] = self.row(a).iter().zip(self.row(b)).map(|(x, y)| x * y).sum();
                }
            }
            mirror(&mut g, n);
            (g, n)
        }
    }
}

fn mirror(g: &mut [f64], m: usize) {
    for a in 0..m {
        for b in 0..a {
            g[a * m + b] = g[b * m + a];
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Spectrum {
    pub rows: usize,
    pub cols: usize,
    pub centered: bool,
    pub singular_values: Vec<f64>,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.singular_values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.singular_values.is_empty()
    }

    /// σ_i / Σσ; all zeros for the zero matrix.
    pub fn normalized(&self) -> Vec<f64> {
        let total: f64 = self.singular_values.iter().sum();
        if total == 0.0 {
            return vec![0.0; self.len()];
        }
        self.singular_values.iter().map(|s| s / total).collect()
    }
}

pub fn singular_values(m: &Matrix) -> Result<Spectrum> {
    let (gram, size) = m.small_gram();
    let eig = symmetric_eigenvalues(&gram, size)?;
    let trace: f64 = eig.iter().sum();
    let fro = m.frobenius_sq();
    if (trace - fro).abs() > TRACE_TOL * fro.max(f64::MIN_POSITIVE) {
        return Err(Error::Numerical(format!(
            "eigenvalue sum {trace} disagrees with squared Frobenius norm {fro}"
        )));
    }
    Ok(Spectrum {
        rows: m.rows,
        cols: m.cols,
        centered: false,
        singular_values: eig.into_iter().map(|l| l.max(0.0).sqrt()).collect(),
    })
}

pub fn embedding_spectrum(set: &EmbeddingSet, center: bool) -> Result<Spectrum> {
    let m = Matrix::from_embeddings(set)?;
    let m = if center { m.centered() } else { m };
    let mut s = singular_values(&m)?;
    s.centered = center;
    Ok(s)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HeadTail {
    NoDifference,
    /// Generated spectrum carries more mass at the top and less at the tail.
    HeadHeavyGenerated,
    HeadHeavyHuman,
    Mixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectrumComparison {
    /// σ_i^G / σ_i^H, absent where σ_i^H = 0.
    pub ratios: Vec<Option<f64>>,
    pub human_normalized: Vec<f64>,
    pub generated_normalized: Vec<f64>,
    pub band: usize,
    /// Normalized generated mass over normalized human mass in the top band.
    pub head_ratio: Option<f64>,
    pub tail_ratio: Option<f64>,
    pub summary: HeadTail,
}

const SUMMARY_TOL: f64 = 1e-12;

pub fn compare_spectra(human: &Spectrum, generated: &Spectrum) -> Result<SpectrumComparison> {
    let m = human.len();
    if m != generated.len() {
        return Err(Error::invalid(format!(
            "spectrum lengths differ: {m} vs {}",
            generated.len()
        )));
    }
    if m == 0 {
        return Err(Error::invalid("empty spectra"));
    }
    let ratios = human
        .singular_values
        .iter()
        .zip(&generated.singular_values)
        .map(|(h, g)| (*h != 0.0).then(|| g / h))
        .collect();
    let hn = human.normalized();
    let gn = generated.normalized();
    let band = (m / 10).max(1);
    let band_ratio = |range: std::ops::Range<usize>| {
        let h: f64 = hn[range.clone()].iter().sum();
        let g: f64 = gn[range].iter().sum();
        (h != 0.0).then(|| g / h)
    };
    let head_ratio = band_ratio(0..band);
    let tail_ratio = band_ratio(m - band..m);

    let same = hn.iter().zip(&gn).all(|(a, b)| (a - b).abs() <= SUMMARY_TOL);
    let summary = if same {
        HeadTail::NoDifference
    } else {
        match (head_ratio, tail_ratio) {
            (Some(h), Some(t)) if h > 1.0 + SUMMARY_TOL && t < 1.0 - SUMMARY_TOL => HeadTail::HeadHeavyGenerated,
            (Some(h), Some(t)) if h < 1.0 - SUMMARY_TOL && t > 1.0 + SUMMARY_TOL => HeadTail::HeadHeavyHuman,
            // A vanishing human tail with a positive generated one is never head-heavy.
            (Some(h), None) if h > 1.0 + SUMMARY_TOL && gn[m - band..].iter().all(|&x| x == 0.0) => {
                HeadTail::HeadHeavyGenerated
            }
            _ => HeadTail::Mixed,
        }
    };
    Ok(SpectrumComparison {
        ratios,
        human_normalized: hn,
        generated_normalized: gn,
        band,
        head_ratio,
        tail_ratio,
        summary,
    })
}
