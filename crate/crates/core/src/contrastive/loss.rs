use serde::{Deserialize, Serialize};

use super::embedding::{dot, norm, UNIT_NORM_TOLERANCE};
use crate::error::{ensure, Result};

/// Default contrastive temperature.
pub const DEFAULT_TAU: f64 = 0.07;

/// Which terms enter the softmax denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Denominator {
    /// Negatives only: `Z₁ + Z₂`.
    #[default]
    AsPrinted,
    /// Standard InfoNCE: the positive term is added to `Z₁ + Z₂`.
    WithPositive,
}

/// One `(anchor, positive)` pair with the negatives it is contrasted against.
/// All fields index into the pools of the owning [`ContrastiveBatch`].
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct PairTerm {
    pub anchor: usize,
    pub positive: usize,
    pub pos_negatives: Vec<usize>,
    pub ori_negatives: Vec<usize>,
}

/// Pools of unit embeddings and the pair terms that reference them.
#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveBatch {
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub pos_negatives: Vec<Vec<f64>>,
    pub ori_negatives: Vec<Vec<f64>>,
    pub terms: Vec<PairTerm>,
    pub temperature: f64,
}

/// Gradient of the loss with respect to every pooled vector, same layout as the batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchGrad {
    pub anchors: Vec<Vec<f64>>,
    pub positives: Vec<Vec<f64>>,
    pub pos_negatives: Vec<Vec<f64>>,
    pub ori_negatives: Vec<Vec<f64>>,
}

impl ContrastiveBatch {
    pub fn dim(&self) -> usize {
        self.anchors.first().map_or(0, Vec::len)
    }

    pub fn validate(&self) -> Result<()> {
        ensure!(
            self.temperature.is_finite() && self.temperature > 0.0,
            Validation,
            "temperature must be positive, got {}",
            self.temperature
        );
        ensure!(!self.terms.is_empty(), Validation, "batch has no pair terms");
        let e = self.dim();
        ensure!(e > 0, Validation, "embeddings must have positive dimension");
        for (name, pool) in self.pools() {
            for (i, v) in pool.iter().enumerate() {
                ensure!(v.len() == e, Validation, "{name}[{i}] has dimension {}, expected {e}", v.len());
                let n = norm(v);
                ensure!(
                    (n - 1.0).abs() <= UNIT_NORM_TOLERANCE,
                    Validation,
                    "{name}[{i}] has norm {n}, expected 1"
                );
            }
        }
        for (t, term) in self.terms.iter().enumerate() {
            ensure!(term.anchor < self.anchors.len(), Validation, "term {t}: anchor out of range");
            ensure!(term.positive < self.positives.len(), Validation, "term {t}: positive out of range");
            ensure!(
                term.pos_negatives.iter().all(|&m| m < self.pos_negatives.len())
                    && term.ori_negatives.iter().all(|&m| m < self.ori_negatives.len()),
                Validation,
                "term {t}: negative index out of range"
            );
            ensure!(
                !term.pos_negatives.is_empty() || !term.ori_negatives.is_empty(),
                Validation,
                "term {t} has no negatives"
            );
        }
        Ok(())
    }

    fn pools(&self) -> [(&'static str, &Vec<Vec<f64>>); 4] {
        [
            ("anchors", &self.anchors),
            ("positives", &self.positives),
            ("pos_negatives", &self.pos_negatives),
            ("ori_negatives", &self.ori_negatives),
        ]
    }

    /// Scaled similarities of one term: positive first, then position and
    /// orientation negatives in order.
    fn logits(&self, term: &PairTerm) -> (f64, Vec<f64>) {
        let f = &self.anchors[term.anchor];
        let tau = self.temperature;
        let pos = dot(f, &self.positives[term.positive]) / tau;
        let negs = term
            .pos_negatives
            .iter()
            .map(|&m| dot(f, &self.pos_negatives[m]) / tau)
            .chain(term.ori_negatives.iter().map(|&m| dot(f, &self.ori_negatives[m]) / tau))
            .collect();
        (pos, negs)
    }
}

/// Softmax weights over the denominator terms and the term's loss.
/// Returns `(loss, p_positive, p_negatives)`; `p_positive` is 0 in as-printed mode.
fn term_softmax(pos: f64, negs: &[f64], mode: Denominator) -> (f64, f64, Vec<f64>) {
    let m = negs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = negs.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    // log of the negatives' share relative to the positive
    let a = m + z.ln() - pos;
    match mode {
        Denominator::AsPrinted => (a, 0.0, exps.into_iter().map(|e| e / z).collect()),
        Denominator::WithPositive => {
            // softplus(a), which stays positive where -ln(e⁺/Z) would round to 0
            let loss = a.max(0.0) + (-a.abs()).exp().ln_1p();
            let p_pos = 1.0 / (1.0 + a.exp());
            let share = 1.0 / (1.0 + (-a).exp());
            (loss, p_pos, exps.into_iter().map(|e| e / z * share).collect())
        }
    }
}

/// Contrastive loss summed over the batch's pair terms.
pub fn point_info_nce(batch: &ContrastiveBatch, mode: Denominator) -> Result<f64> {
    batch.validate()?;
    Ok(batch
        .terms
        .iter()
        .map(|term| {
            let (pos, negs) = batch.logits(term);
            term_softmax(pos, &negs, mode).0
        })
        .sum())
}

/// Loss and its gradient with respect to every pooled (unit) vector.
pub fn point_info_nce_grad(batch: &ContrastiveBatch, mode: Denominator) -> Result<(f64, BatchGrad)> {
    batch.validate()?;
    let e = batch.dim();
    let zeros = |n: usize| vec![vec![0.0; e]; n];
    let mut g = BatchGrad {
        anchors: zeros(batch.anchors.len()),
        positives: zeros(batch.positives.len()),
        pos_negatives: zeros(batch.pos_negatives.len()),
        ori_negatives: zeros(batch.ori_negatives.len()),
    };
    let inv_tau = 1.0 / batch.temperature;
    let mut total = 0.0;

    for term in &batch.terms {
        let (pos, negs) = batch.logits(term);
        let (loss, p_pos, p_neg) = term_softmax(pos, &negs, mode);
        total += loss;
        let f = &batch.anchors[term.anchor];

        let mut gf = vec![0.0; e];
        let mut push = |coef: f64, other: &[f64], slot: &mut Vec<f64>| {
            let c = coef * inv_tau;
            for k in 0..e {
                gf[k] += c * other[k];
                slot[k] += c * f[k];
            }
        };

        push(p_pos - 1.0, &batch.positives[term.positive], &mut g.positives[term.positive]);
        let n_pos = term.pos_negatives.len();
        for (j, &m) in term.pos_negatives.iter().enumerate() {
            push(p_neg[j], &batch.pos_negatives[m], &mut g.pos_negatives[m]);
        }
        for (j, &m) in term.ori_negatives.iter().enumerate() {
            push(p_neg[n_pos + j], &batch.ori_negatives[m], &mut g.ori_negatives[m]);
        }
        for (a, d) in g.anchors[term.anchor].iter_mut().zip(gf) {
            *a += d;
        }
    }
    Ok((total, g))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_term(pos: Vec<f64>, pn: Vec<f64>, on: Vec<f64>, tau: f64) -> ContrastiveBatch {
        ContrastiveBatch {
            anchors: vec![vec![1.0, 0.0, 0.0]],
            positives: vec![pos],
            pos_negatives: vec![pn],
            ori_negatives: vec![on],
            terms: vec![PairTerm {
                anchor: 0,
                positive: 0,
                pos_negatives: vec![0],
                ori_negatives: vec![0],
            }],
            temperature: tau,
        }
    }

    #[test]
    fn orthogonal_batch_values() {
        let b = one_term(vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, -1.0, 0.0], 1.0);
        let l = point_info_nce(&b, Denominator::AsPrinted).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
        let l = point_info_nce(&b, Denominator::WithPositive).unwrap();
        assert!((l - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn separated_batch_is_flat() {
        let b = one_term(vec![1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0], vec![-1.0, 0.0, 0.0], 0.02);
        let (l, g) = point_info_nce_grad(&b, Denominator::WithPositive).unwrap();
        assert!(l < 1e-30);
        let all = g.anchors.iter().chain(&g.positives).chain(&g.pos_negatives).chain(&g.ori_negatives);
        for v in all {
            assert!(norm(v) < 1e-6);
        }
    }

    #[test]
    fn as_printed_loss_goes_negative() {
        // positive dominates the negatives-only denominator
        let b = one_term(vec![1.0, 0.0, 0.0], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], 0.1);
        assert!(point_info_nce(&b, Denominator::AsPrinted).unwrap() < 0.0);
        assert!(point_info_nce(&b, Denominator::WithPositive).unwrap() > 0.0);
    }

    #[test]
    fn duplicate_negative_doubles_gradient() {
        let s = 0.6f64;
        let c = (1.0 - s * s).sqrt();
        let neg = vec![s, c, 0.0];
        let mut twice = one_term(vec![0.0, 0.0, 1.0], neg.clone(), vec![0.0, -1.0, 0.0], 0.5);
        twice.terms[0].ori_negatives.clear();
        twice.terms[0].pos_negatives = vec![0, 0];
        let mut split = twice.clone();
        split.pos_negatives = vec![neg.clone(), neg];
        split.terms[0].pos_negatives = vec![0, 1];
        for mode in [Denominator::AsPrinted, Denominator::WithPositive] {
            let (_, gt) = point_info_nce_grad(&twice, mode).unwrap();
            let (_, gs) = point_info_nce_grad(&split, mode).unwrap();
            assert_eq!(gs.pos_negatives[0], gs.pos_negatives[1]);
            let doubled: Vec<f64> = gs.pos_negatives[0].iter().map(|x| 2.0 * x).collect();
            assert_eq!(gt.pos_negatives[0], doubled);
        }
    }

    #[test]
    fn validation_errors() {
        let mut b = one_term(vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0], vec![0.0, -1.0, 0.0], 1.0);
        b.temperature = 0.0;
        assert!(point_info_nce(&b, Denominator::AsPrinted).is_err());
        b.temperature = 1.0;
        b.positives[0] = vec![0.0, 2.0, 0.0];
        assert!(point_info_nce(&b, Denominator::AsPrinted).is_err());
        b.positives[0] = vec![0.0, 1.0];
        assert!(point_info_nce(&b, Denominator::AsPrinted).is_err());
        b.positives[0] = vec![0.0, 1.0, 0.0];
        b.terms[0].pos_negatives.clear();
        b.terms[0].ori_negatives.clear();
        assert!(point_info_nce(&b, Denominator::AsPrinted).is_err());
    }
}
