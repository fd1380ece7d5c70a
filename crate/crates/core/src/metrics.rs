//! Evaluation metrics: average excess label loss (mean KL divergence from
//! the true label distribution), relative prediction difference normalised
//! by the true positive-label probability, and weight-space diagnostics.

use std::io::Write;

use crate::datagen::{Truth, FEATURES};
use crate::error::{Error, Result};
use crate::nnet::Network;
use crate::rng::{derived_stream, Purpose};
use crate::scalar::{sigmoid, Scalar};

const PROB_GUARD: f64 = 1e-15;

/// Fresh evaluation inputs with their true label probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalSet {
    xs: Vec<[u8; FEATURES]>,
    p_pos: Vec<f64>,
    p_neg: Vec<f64>,
}

impl EvalSet {
    pub fn from_inputs(truth: &Truth, xs: Vec<[u8; FEATURES]>) -> Self {
        let (p_pos, p_neg) = xs
            .iter()
            .map(|x| {
                let lo = truth.log_odds(x);
                (sigmoid(lo), sigmoid(-lo))
            })
            .unzip();
        EvalSet { xs, p_pos, p_neg }
    }

    /// `n` inputs drawn from the truth's feature priors on a stream derived
    /// from `seed`.
    pub fn draw(truth: &Truth, seed: u64, n: usize) -> Self {
        let mut rng = derived_stream(seed, Purpose::Eval, 0);
        let xs = (0..n).map(|_| truth.sample_features(&mut rng)).collect();
        Self::from_inputs(truth, xs)
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn inputs(&self) -> &[[u8; FEATURES]] {
        &self.xs
    }

    pub fn true_positive(&self) -> &[f64] {
        &self.p_pos
    }

    /// Positive-label predictions of `net` on every input.
    pub fn predict<S: Scalar>(&self, net: &Network<S>) -> Vec<f64> {
        net.logits(&self.xs)
            .into_iter()
            .map(|z| sigmoid(z.wide()))
            .collect()
    }
}

fn kl_term(p: f64, q: f64) -> f64 {
    if p == 0.0 {
        0.0
    } else {
        p * (p / q).ln()
    }
}

/// Mean over the eval set of `sum_y p(y|x) ln(p(y|x) / q(y|x))`, in nats.
pub fn excess_label_loss(eval: &EvalSet, predicted_pos: &[f64]) -> Result<f64> {
    if eval.is_empty() {
        return Err(Error::invalid("eval", "evaluation set is empty"));
    }
    if predicted_pos.len() != eval.len() {
        return Err(Error::Shape {
            expected: eval.len(),
            got: predicted_pos.len(),
        });
    }
    let mut total = 0.0;
    for ((&pp, &pn), &q) in eval.p_pos.iter().zip(&eval.p_neg).zip(predicted_pos) {
        let q = q.clamp(PROB_GUARD, 1.0 - PROB_GUARD);
        total += kl_term(pp, q) + kl_term(pn, 1.0 - q);
    }
    Ok((total / eval.len() as f64).max(0.0))
}

pub fn model_excess_loss<S: Scalar>(net: &Network<S>, eval: &EvalSet) -> Result<f64> {
    excess_label_loss(eval, &eval.predict(net))
}

/// Relative prediction difference of one pair: mean over the eval set of
/// `|a - b| / p_true(+1)`.
pub fn relative_pd(eval: &EvalSet, pred_a: &[f64], pred_b: &[f64]) -> Result<f64> {
    relative_pd_pairs(eval, &[(pred_a, pred_b)])
}

/// Relative prediction difference averaged over pairs sharing one eval set.
pub fn relative_pd_pairs(eval: &EvalSet, pairs: &[(&[f64], &[f64])]) -> Result<f64> {
    if eval.is_empty() || pairs.is_empty() {
        return Err(Error::invalid("eval", "need a nonempty eval set and at least one pair"));
    }
    let mut total = 0.0;
    for (a, b) in pairs {
        for got in [a.len(), b.len()] {
            if got != eval.len() {
                return Err(Error::Shape {
                    expected: eval.len(),
                    got,
                });
            }
        }
    }
    for (n, &p) in eval.p_pos.iter().enumerate() {
        let s: f64 = pairs.iter().map(|(a, b)| (a[n] - b[n]).abs()).sum();
        total += s / pairs.len() as f64 / p;
    }
    Ok(total / eval.len() as f64)
}

/// Cosine between `w_a - theta` and `w_b - theta`; `None` when either
/// difference vanishes or the lengths disagree.
pub fn diff_cosine(w_a: &[f64], w_b: &[f64], theta: &[f64]) -> Option<f64> {
    if w_a.len() != theta.len() || w_b.len() != theta.len() {
        return None;
    }
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for ((a, b), t) in w_a.iter().zip(w_b).zip(theta) {
        let (da, db) = (a - t, b - t);
        dot += da * db;
        na += da * da;
        nb += db * db;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some((dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0))
}

/// One parameter of a pair, side by side.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightRow {
    pub layer_id: String,
    pub param_index: usize,
    pub value_a: f64,
    pub value_b: f64,
}

pub fn weight_pairs_export<S: Scalar>(a: &Network<S>, b: &Network<S>) -> Result<Vec<WeightRow>> {
    if a.spec() != b.spec() {
        return Err(Error::SpecMismatch(a.spec().descriptor(), b.spec().descriptor()));
    }
    Ok(a.layout()
        .param_names()
        .into_iter()
        .zip(a.params().iter().zip(b.params()))
        .map(|((layer_id, param_index), (va, vb))| WeightRow {
            layer_id,
            param_index,
            value_a: va.wide(),
            value_b: vb.wide(),
        })
        .collect())
}

pub fn write_weight_pairs<W: Write>(rows: &[WeightRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["layer_id", "param_index", "value_a", "value_b"])?;
    for r in rows {
        w.write_record([
            r.layer_id.clone(),
            r.param_index.to_string(),
            format!("{:.16e}", r.value_a),
            format!("{:.16e}", r.value_b),
        ])?;
    }
    w.flush().map_err(|e| Error::io("<weights>", e))?;
    Ok(())
}
