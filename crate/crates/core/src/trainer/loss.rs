//! InfoNCE over in-batch negatives.
//!
//! Row `i` of `Q` is a query, row `i` of `C` its positive; every other row
//! of `C` is a negative for it. With logits `s_ij = q_i · c_j / τ`:
//!
//! `L = (1/N) Σ_i [ logsumexp_j(s_ij) − s_ii ]`

use crate::error::{Error, Result};
use crate::encoder::model::dot;

fn check_inputs<R: AsRef<[f64]>>(q: &[R], c: &[R], tau: f64) -> Result<usize> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Config(format!("temperature must be positive, got {tau}")));
    }
    if q.is_empty() {
        return Err(Error::Validation("InfoNCE needs at least one pair".into()));
    }
    if q.len() != c.len() {
        return Err(Error::DimensionMismatch {
            expected: q.len(),
            actual: c.len(),
        });
    }
    let d = q[0].as_ref().len();
    for row in q.iter().chain(c) {
        let row = row.as_ref();
        if row.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: row.len(),
            });
        }
        if row.iter().any(|v| v.is_nan()) {
            return Err(Error::Numeric("NaN in embedding".into()));
        }
    }
    Ok(d)
}

fn logits<R: AsRef<[f64]>>(q: &[R], c: &[R], tau: f64) -> Vec<Vec<f64>> {
    q.iter()
        .map(|qi| c.iter().map(|cj| dot(qi.as_ref(), cj.as_ref()) / tau).collect())
        .collect()
}

fn logsumexp(row: &[f64]) -> f64 {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + row.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

pub fn infonce_loss<R: AsRef<[f64]>>(q: &[R], c: &[R], tau: f64) -> Result<f64> {
    check_inputs(q, c, tau)?;
    let s = logits(q, c, tau);
    let n = q.len();
    let total: f64 = s.iter().enumerate().map(|(i, row)| logsumexp(row) - row[i]).sum();
    let loss = total / n as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss}")));
    }
    Ok(loss)
}

/// Loss and its gradients with respect to every row of `Q` and `C`.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoNceGrads {
    pub loss: f64,
    pub d_q: Vec<Vec<f64>>,
    pub d_c: Vec<Vec<f64>>,
}

/// With `p_ij = softmax_j(s_ij)`:
/// `∂L/∂q_i = Σ_j (p_ij − δ_ij) c_j / (Nτ)` and
/// `∂L/∂c_j = Σ_i (p_ij − δ_ij) q_i / (Nτ)`.
pub fn infonce_with_grads<R: AsRef<[f64]>>(q: &[R], c: &[R], tau: f64) -> Result<InfoNceGrads> {
    let d = check_inputs(q, c, tau)?;
    let n = q.len();
    let s = logits(q, c, tau);
    let scale = 1.0 / (n as f64 * tau);
    let mut d_q = vec![vec![0.0; d]; n];
    let mut d_c = vec![vec![0.0; d]; n];
    let mut total = 0.0;
    for (i, row) in s.iter().enumerate() {
        let lse = logsumexp(row);
        total += lse - row[i];
        for (j, &sij) in row.iter().enumerate() {
            let delta = if i == j { 1.0 } else { 0.0 };
            let coef = ((sij - lse).exp() - delta) * scale;
            if coef == 0.0 {
                continue;
            }
            let (qi, cj) = (q[i].as_ref(), c[j].as_ref());
            for k in 0..d {
                d_q[i][k] += coef * cj[k];
                d_c[j][k] += coef * qi[k];
            }
        }
    }
    let loss = total / n as f64;
    if !loss.is_finite() {
        return Err(Error::Numeric(format!("non-finite loss {loss}")));
    }
    Ok(InfoNceGrads { loss, d_q, d_c })
}

/// Row-major matrix, one embedding per row.
pub type Rows = Vec<Vec<f64>>;

pub fn infonce_embedding_grads<R: AsRef<[f64]>>(
    q: &[R],
    c: &[R],
    tau: f64,
) -> Result<(Rows, Rows)> {
    let g = infonce_with_grads(q, c, tau)?;
    Ok((g.d_q, g.d_c))
}
