//! Sparsity-objective diagnostics over a batch of document score vectors.
//!
//! `x[i][j]` is the score of vocabulary entry `j` in document `i` of a batch
//! of `B` documents over a vocabulary of size `V`. All logarithms are natural.

use std::io::Write;

use crate::error::{Error, Result};
use crate::eval::pairwise_sum;
use crate::types::ForwardIndex;

/// Probabilities are clamped to `[EPS, 1 - EPS]` before taking logs.
pub const EPS: f64 = 1e-12;

/// Dense `B x V` non-negative matrix, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl BatchMatrix {
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::Domain(format!("batch matrix must be non-empty, got {rows}x{cols}")));
        }
        if values.len() != rows * cols {
            return Err(Error::Domain(format!(
                "expected {} values for {rows}x{cols}, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(v) = values.iter().find(|v| !(**v >= 0.0 && v.is_finite())) {
            return Err(Error::Domain(format!("batch matrix entry {v} is not a finite non-negative number")));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Domain("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    /// Rows are documents, columns the vocabulary.
    pub fn from_forward(fwd: &ForwardIndex) -> Result<Self> {
        let cols = fwd.vocab.len();
        let mut values = vec![0.0; fwd.docs.len() * cols];
        for (i, doc) in fwd.docs.iter().enumerate() {
            for &(t, w) in doc.entries() {
                values[i * cols + t.index()] = w;
            }
        }
        Self::new(fwd.docs.len(), cols, values)
    }

    /// Batch size `B`.
    pub fn batch_size(&self) -> usize {
        self.rows
    }

    /// Vocabulary size `V`.
    pub fn vocab_size(&self) -> usize {
        self.cols
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.cols + col]
    }

    fn column_sum(&self, j: usize, f: impl Fn(f64) -> f64) -> f64 {
        let terms: Vec<f64> = (0..self.rows).map(|i| f(self.get(i, j))).collect();
        pairwise_sum(&terms)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsityConfig {
    /// Saturation constant `tau > 0`.
    pub tau: f64,
    /// Desired number of active terms per document.
    pub k_target: usize,
    /// Target activation probability, in `(0, 1)`.
    pub p_target: f64,
}

impl SparsityConfig {
    pub fn new(tau: f64, k_target: usize, p_target: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::Config(format!("tau must be positive, got {tau}")));
        }
        if k_target == 0 {
            return Err(Error::Config("k_target must be positive".into()));
        }
        if !(p_target > 0.0 && p_target < 1.0) {
            return Err(Error::Config(format!("p_target must be in (0, 1), got {p_target}")));
        }
        Ok(Self { tau, k_target, p_target })
    }

    /// Desired activation probability `k / V`.
    pub fn p_hat(&self, vocab_size: usize) -> f64 {
        self.k_target as f64 / vocab_size as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ActivationForm {
    /// `p_j = sum_i (x_ij / B)^2`
    #[default]
    SquaredTerms,
    /// `p_j = (sum_i x_ij / B)^2`, the usual FLOPS regularizer.
    SquaredMean,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MseForm {
    /// `sum_j |p_hat^2 - p_j| / V`
    #[default]
    Literal,
    /// `sum_j (p_hat - p_j)^2 / V`
    Symmetric,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActivationProfile {
    pub p: Vec<f64>,
    /// `sum_j p_j`
    pub flops_estimate: f64,
}

pub fn activation_profile(m: &BatchMatrix, form: ActivationForm) -> ActivationProfile {
    let b = m.batch_size() as f64;
    let p: Vec<f64> = (0..m.vocab_size())
        .map(|j| match form {
            ActivationForm::SquaredTerms => m.column_sum(j, |x| (x / b).powi(2)),
            ActivationForm::SquaredMean => (m.column_sum(j, |x| x) / b).powi(2),
        })
        .collect();
    let flops_estimate = pairwise_sum(&p);
    ActivationProfile { p, flops_estimate }
}

pub fn target_mse_loss(m: &BatchMatrix, cfg: &SparsityConfig, activation: ActivationForm, form: MseForm) -> f64 {
    let v = m.vocab_size();
    let p_hat = cfg.p_hat(v);
    let profile = activation_profile(m, activation);
    let errors: Vec<f64> = profile
        .p
        .iter()
        .map(|&p| match form {
            MseForm::Literal => (p_hat * p_hat - p).abs(),
            MseForm::Symmetric => (p_hat - p).powi(2),
        })
        .collect();
    pairwise_sum(&errors) / v as f64
}

/// Batch estimate `q_j = sum_i x_ij / (B (x_ij + tau))`.
pub fn activation_estimate(m: &BatchMatrix, tau: f64) -> Vec<f64> {
    let b = m.batch_size() as f64;
    (0..m.vocab_size())
        .map(|j| m.column_sum(j, |x| x / (b * (x + tau))))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct KlReport {
    pub q: Vec<f64>,
    pub loss: Vec<f64>,
    pub mean: f64,
}

/// Cross-entropy `-p ln q - (1 - p) ln(1 - q)` between the target `p` and
/// the clamped estimate `q`.
pub fn binary_cross_entropy(p: f64, q: f64) -> f64 {
    let q = q.clamp(EPS, 1.0 - EPS);
    -p * q.ln() - (1.0 - p) * (1.0 - q).ln()
}

pub fn binary_entropy(p: f64) -> f64 {
    binary_cross_entropy(p, p)
}

pub fn kl_activation_loss(m: &BatchMatrix, cfg: &SparsityConfig) -> KlReport {
    let q = activation_estimate(m, cfg.tau);
    let loss: Vec<f64> = q.iter().map(|&q| binary_cross_entropy(cfg.p_target, q)).collect();
    let mean = pairwise_sum(&loss) / loss.len() as f64;
    KlReport { q, loss, mean }
}

/// `C_j = sum_i x_ij / (tau + x_ij)`, divided by `B` when `normalized`.
pub fn saturated_flops(m: &BatchMatrix, cfg: &SparsityConfig, normalized: bool) -> Vec<f64> {
    let b = m.batch_size() as f64;
    (0..m.vocab_size())
        .map(|j| {
            let c = m.column_sum(j, |x| x / (cfg.tau + x));
            if normalized {
                c / b
            } else {
                c
            }
        })
        .collect()
}

/// `-(C_j / B) ln p_target` per vocabulary entry.
pub fn dfr_measure(m: &BatchMatrix, cfg: &SparsityConfig) -> Vec<f64> {
    let b = m.batch_size() as f64;
    let log_p = cfg.p_target.clamp(EPS, 1.0 - EPS).ln();
    saturated_flops(m, cfg, false)
        .into_iter()
        .map(|c| -(c / b) * log_p)
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparsityReport {
    pub terms: Vec<String>,
    pub p: Vec<f64>,
    pub c: Vec<f64>,
    pub kl: Vec<f64>,
    pub dfr: Vec<f64>,
    pub flops_estimate: f64,
    pub target_mse: f64,
    pub kl_mean: f64,
}

pub fn sparsity_report(
    fwd: &ForwardIndex,
    cfg: &SparsityConfig,
    activation: ActivationForm,
    mse: MseForm,
) -> Result<SparsityReport> {
    let m = BatchMatrix::from_forward(fwd)?;
    let profile = activation_profile(&m, activation);
    let kl = kl_activation_loss(&m, cfg);
    Ok(SparsityReport {
        terms: fwd.vocab.iter().map(|(_, t)| t.to_string()).collect(),
        p: profile.p,
        c: saturated_flops(&m, cfg, false),
        kl: kl.loss,
        dfr: dfr_measure(&m, cfg),
        flops_estimate: profile.flops_estimate,
        target_mse: target_mse_loss(&m, cfg, activation, mse),
        kl_mean: kl.mean,
    })
}

/// One row per term; the batch-level scalars repeat on every row.
pub fn write_sparsity_csv<W: Write>(mut w: W, r: &SparsityReport) -> Result<()> {
    writeln!(w, "term,p_j,c_i,kl,dfr,flops_estimate,target_mse")?;
    for j in 0..r.terms.len() {
        writeln!(
            w,
            "{},{:e},{:e},{:e},{:e},{:e},{:e}",
            csv_field(&r.terms[j]),
            r.p[j],
            r.c[j],
            r.kl[j],
            r.dfr[j],
            r.flops_estimate,
            r.target_mse
        )?;
    }
    Ok(())
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}
