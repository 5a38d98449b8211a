//! Inter-intra contrastive regularization (I2CR).
//!
//! For each anchor view, every other view with the same class label is a
//! positive: the anchor's own second augmented view (intra) and views of
//! different samples with the same label (inter). The loss pulls anchors
//! toward their positives and pushes them from the denominator set under a
//! temperature-scaled cosine softmax, and is weighted into the training
//! objective by a linear ramp `alpha` clipped at 0.5.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-view embeddings with class labels and source-sample provenance.
/// Two views share `view_of` iff they are augmentations of the same clip.
#[derive(Debug, Clone)]
pub struct EmbeddingBatch {
    pub z: Array2<f64>,
    pub labels: Vec<usize>,
    pub view_of: Vec<usize>,
}

impl EmbeddingBatch {
    pub fn new(z: Array2<f64>, labels: Vec<usize>, view_of: Vec<usize>) -> Result<Self> {
        let n = z.nrows();
        if n == 0 {
            return Err(Error::Loss("embedding batch is empty".into()));
        }
        if labels.len() != n || view_of.len() != n {
            return Err(Error::Loss(format!(
                "batch size mismatch: {} embeddings, {} labels, {} view tags",
                n,
                labels.len(),
                view_of.len()
            )));
        }
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::Loss("non-finite embedding".into()));
        }
        Ok(Self { z, labels, view_of })
    }

    pub fn n_views(&self) -> usize {
        self.z.nrows()
    }
}

/// Which views go into the softmax denominator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Denominator {
    /// Only non-positives (the loss equation read literally). The loss may
    /// be negative.
    #[default]
    NegativesOnly,
    /// All views except the anchor (the usual supervised-contrastive form).
    /// The loss is non-negative.
    AllNonAnchor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Reduction {
    #[default]
    Mean,
    Sum,
}

/// Which positives the regularizer may use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pairing {
    /// Full positive set: same label, any source sample.
    InterIntra,
    /// Positives restricted to other views of the anchor's own sample.
    IntraOnly,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossConfig {
    pub temperature: f64,
    pub reduction: Reduction,
    pub denominator: Denominator,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            temperature: 0.1,
            reduction: Reduction::Mean,
            denominator: Denominator::NegativesOnly,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature > 0.0) || !self.temperature.is_finite() {
            return Err(Error::Loss(format!(
                "temperature must be positive, got {}",
                self.temperature
            )));
        }
        Ok(())
    }
}

/// Linear regularizer ramp: zero in the first epoch, then
/// `epoch / total_epochs`, clipped at `max_alpha`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RampSchedule {
    pub max_alpha: f64,
    pub total_epochs: usize,
}

impl Default for RampSchedule {
    fn default() -> Self {
        Self {
            max_alpha: 0.5,
            total_epochs: 100,
        }
    }
}

/// One step's loss record.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub ce: f64,
    pub i2cr: f64,
    pub alpha: f64,
    pub total: f64,
}

impl LossBreakdown {
    pub fn compose(ce: f64, i2cr: f64, alpha: f64) -> Self {
        Self {
            ce,
            i2cr,
            alpha,
            total: ce + alpha * i2cr,
        }
    }
}

/// Positive index sets: `P(i) = { j != i : label_j == label_i }`.
/// Anchors with an empty set take no part in the loss.
pub fn positive_sets(labels: &[usize]) -> Vec<Vec<usize>> {
    let n = labels.len();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && labels[j] == labels[i])
                .collect()
        })
        .collect()
}

/// Positive sets restricted to views of the anchor's own source sample.
pub fn intra_positive_sets(labels: &[usize], view_of: &[usize]) -> Vec<Vec<usize>> {
    let n = labels.len();
    (0..n)
        .map(|i| {
            (0..n)
                .filter(|&j| j != i && labels[j] == labels[i] && view_of[j] == view_of[i])
                .collect()
        })
        .collect()
}

/// Cosine similarity: dot product of the normalized vectors, in [-1, 1].
pub fn sim(a: &[f64], b: &[f64]) -> Result<f64> {
    let na = a.iter().map(|v| v * v).sum::<f64>().sqrt();
    let nb = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Loss("cosine similarity of zero-norm vector".into()));
    }
    Ok(a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() / (na * nb))
}

struct LossWork {
    /// Row-normalized embeddings.
    zhat: Array2<f64>,
    norms: Vec<f64>,
    /// Cosine similarity gram matrix.
    gram: Array2<f64>,
    positives: Vec<Vec<usize>>,
}

fn prepare(batch: &EmbeddingBatch, cfg: &LossConfig, pairing: Pairing) -> Result<LossWork> {
    cfg.validate()?;
    let n = batch.n_views();
    let mut zhat = batch.z.clone();
    let mut norms = Vec::with_capacity(n);
    for mut row in zhat.rows_mut() {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm == 0.0 {
            return Err(Error::Loss("zero-norm embedding row".into()));
        }
        row.mapv_inplace(|v| v / norm);
        norms.push(norm);
    }
    let gram = zhat.dot(&zhat.t());
    let positives = match pairing {
        Pairing::InterIntra => positive_sets(&batch.labels),
        Pairing::IntraOnly => intra_positive_sets(&batch.labels, &batch.view_of),
    };
    Ok(LossWork {
        zhat,
        norms,
        gram,
        positives,
    })
}

fn denominator_set(
    cfg: &LossConfig,
    positives: &[usize],
    anchor: usize,
    n: usize,
) -> Vec<usize> {
    match cfg.denominator {
        Denominator::NegativesOnly => (0..n)
            .filter(|&j| j != anchor && !positives.contains(&j))
            .collect(),
        Denominator::AllNonAnchor => (0..n).filter(|&j| j != anchor).collect(),
    }
}

/// The contrastive loss with its gradient w.r.t. the raw (unnormalized)
/// embeddings. Anchors with no positives — or, under `NegativesOnly`, with
/// an empty denominator — are excluded; if no anchor is valid the loss and
/// gradient are zero.
pub fn i2cr_loss_and_grad(
    batch: &EmbeddingBatch,
    cfg: &LossConfig,
    pairing: Pairing,
) -> Result<(f64, Array2<f64>)> {
    let n = batch.n_views();
    let tau = cfg.temperature;
    let work = prepare(batch, cfg, pairing)?;

    // First pass: identify valid anchors and their log-sum-exp terms.
    struct AnchorTerm {
        anchor: usize,
        denom: Vec<usize>,
        lse: f64,
        loss: f64,
    }
    let mut terms = Vec::new();
    for i in 0..n {
        let pos = &work.positives[i];
        if pos.is_empty() {
            continue;
        }
        let denom = denominator_set(cfg, pos, i, n);
        if denom.is_empty() {
            continue;
        }
        let m = denom
            .iter()
            .map(|&j| work.gram[[i, j]] / tau)
            .fold(f64::NEG_INFINITY, f64::max);
        let lse = m + denom
            .iter()
            .map(|&j| (work.gram[[i, j]] / tau - m).exp())
            .sum::<f64>()
            .ln();
        let loss = pos
            .iter()
            .map(|&p| lse - work.gram[[i, p]] / tau)
            .sum::<f64>()
            / pos.len() as f64;
        terms.push(AnchorTerm {
            anchor: i,
            denom,
            lse,
            loss,
        });
    }

    if terms.is_empty() {
        return Ok((0.0, Array2::zeros(batch.z.raw_dim())));
    }

    let n_valid = terms.len() as f64;
    let (loss, anchor_weight) = match cfg.reduction {
        Reduction::Mean => (
            terms.iter().map(|t| t.loss).sum::<f64>() / n_valid,
            1.0 / n_valid,
        ),
        Reduction::Sum => (terms.iter().map(|t| t.loss).sum::<f64>(), 1.0),
    };

    // d(loss)/d(gram): positives pull, denominator members push by their
    // softmax mass. A view can appear in both roles under AllNonAnchor.
    let mut g = Array2::<f64>::zeros((n, n));
    for t in &terms {
        let i = t.anchor;
        let pos = &work.positives[i];
        for &p in pos {
            g[[i, p]] -= anchor_weight / (pos.len() as f64 * tau);
        }
        for &d in &t.denom {
            let softmax = (work.gram[[i, d]] / tau - t.lse).exp();
            g[[i, d]] += anchor_weight * softmax / tau;
        }
    }

    // Through the gram matrix: d/d(zhat) = (G + G^T) zhat, then through row
    // normalization: project out the radial component and divide by the norm.
    let gsym = &g + &g.t();
    let dzhat = gsym.dot(&work.zhat);
    let mut dz = Array2::<f64>::zeros((n, batch.z.ncols()));
    for i in 0..n {
        let zi = work.zhat.row(i);
        let gi = dzhat.row(i);
        let radial: f64 = gi.dot(&zi);
        for (k, out) in dz.row_mut(i).iter_mut().enumerate() {
            *out = (gi[k] - radial * zi[k]) / work.norms[i];
        }
    }
    Ok((loss, dz))
}

/// Loss value only, full inter-intra pairing.
pub fn i2cr_loss(batch: &EmbeddingBatch, cfg: &LossConfig) -> Result<f64> {
    i2cr_loss_and_grad(batch, cfg, Pairing::InterIntra).map(|(l, _)| l)
}

/// Regularizer weight for an epoch: zero in epoch 0, then linear
/// `epoch / total_epochs`, clipped at `max_alpha`.
pub fn alpha(epoch: usize, sched: &RampSchedule) -> f64 {
    if epoch == 0 || sched.total_epochs == 0 {
        return 0.0;
    }
    (epoch as f64 / sched.total_epochs as f64).min(sched.max_alpha)
}

/// Mean cross-entropy over all views, with its gradient w.r.t. the logits.
pub fn cross_entropy(logits: &Array2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    let (n, c) = (logits.nrows(), logits.ncols());
    if labels.len() != n {
        return Err(Error::Loss(format!(
            "{n} logit rows but {} labels",
            labels.len()
        )));
    }
    let mut grad = Array2::<f64>::zeros((n, c));
    let mut total = 0.0;
    for (i, row) in logits.rows().into_iter().enumerate() {
        let y = labels[i];
        if y >= c {
            return Err(Error::Loss(format!("label {y} out of range for {c} classes")));
        }
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - row[y];
        for k in 0..c {
            grad[[i, k]] = ((row[k] - lse).exp() - if k == y { 1.0 } else { 0.0 }) / n as f64;
        }
    }
    Ok((total / n as f64, grad))
}

/// The combined objective `total = ce + alpha(epoch) * i2cr` with the full
/// inter-intra pairing.
pub fn total_loss(
    logits: &Array2<f64>,
    labels: &[usize],
    batch: &EmbeddingBatch,
    epoch: usize,
    sched: &RampSchedule,
    cfg: &LossConfig,
) -> Result<LossBreakdown> {
    total_loss_for(logits, labels, batch, epoch, sched, cfg, Pairing::InterIntra)
}

/// As `total_loss`, with an explicit pairing choice for the regularizer.
pub fn total_loss_for(
    logits: &Array2<f64>,
    labels: &[usize],
    batch: &EmbeddingBatch,
    epoch: usize,
    sched: &RampSchedule,
    cfg: &LossConfig,
    pairing: Pairing,
) -> Result<LossBreakdown> {
    if logits.nrows() != batch.n_views() {
        return Err(Error::Loss(format!(
            "{} logit rows for {} views",
            logits.nrows(),
            batch.n_views()
        )));
    }
    let (ce, _) = cross_entropy(logits, labels)?;
    let (reg, _) = i2cr_loss_and_grad(batch, cfg, pairing)?;
    Ok(LossBreakdown::compose(ce, reg, alpha(epoch, sched)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;
    use proptest::prelude::*;
    use rand::Rng;

    fn symmetric_batch() -> EmbeddingBatch {
        EmbeddingBatch::new(
            array![[1.0, 0.0], [1.0, 0.0], [0.0, 1.0], [0.0, 1.0]],
            vec![0, 0, 1, 1],
            vec![0, 1, 2, 3],
        )
        .unwrap()
    }

    fn random_batch(n: usize, d: usize, classes: usize, seed: u64) -> EmbeddingBatch {
        let mut rng = crate::rngutil::rng_from(&[seed, n as u64, d as u64]);
        let z = Array2::from_shape_fn((n, d), |_| rng.gen_range(-1.0..1.0));
        let labels: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
        let view_of: Vec<usize> = (0..n).map(|i| i / 2).collect();
        EmbeddingBatch::new(z, labels, view_of).unwrap()
    }

    #[test]
    fn positive_sets_by_definition() {
        assert_eq!(
            positive_sets(&[0, 0, 1, 1]),
            vec![vec![1], vec![0], vec![3], vec![2]]
        );
        assert_eq!(
            positive_sets(&[0, 1, 2]),
            vec![Vec::<usize>::new(), vec![], vec![]]
        );
        assert_eq!(
            positive_sets(&[0, 0, 0, 1]),
            vec![vec![1, 2], vec![0, 2], vec![0, 1], vec![]]
        );
    }

    #[test]
    fn sim_identity_orthogonality_scale() {
        assert_abs_diff_eq!(sim(&[3.0, 4.0], &[3.0, 4.0]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(sim(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            sim(&[1.0, 2.0], &[3.0, 6.0]).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        assert!(sim(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn hand_computed_symmetric_batch() {
        // Each anchor: one positive at similarity 1, two orthogonal
        // denominators -> -log(e / 2) = ln 2 - 1 per anchor.
        let cfg = LossConfig {
            temperature: 1.0,
            reduction: Reduction::Sum,
            denominator: Denominator::NegativesOnly,
        };
        let loss = i2cr_loss(&symmetric_batch(), &cfg).unwrap();
        assert_abs_diff_eq!(loss, -1.227411, epsilon = 1e-5);
        assert_abs_diff_eq!(loss, 4.0 * (2f64.ln() - 1.0), epsilon = 1e-12);

        let mean_cfg = LossConfig {
            reduction: Reduction::Mean,
            ..cfg
        };
        let mean_loss = i2cr_loss(&symmetric_batch(), &mean_cfg).unwrap();
        assert_abs_diff_eq!(mean_loss, 2f64.ln() - 1.0, epsilon = 1e-12);
    }

    #[test]
    fn all_distinct_labels_yield_zero() {
        let batch = EmbeddingBatch::new(
            array![[1.0, 0.0], [0.0, 1.0], [0.5, 0.5]],
            vec![0, 1, 2],
            vec![0, 1, 2],
        )
        .unwrap();
        let (loss, grad) = i2cr_loss_and_grad(&batch, &LossConfig::default(), Pairing::InterIntra)
            .unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn all_same_class_under_negatives_only_has_no_valid_anchor() {
        let batch = EmbeddingBatch::new(
            array![[1.0, 0.0], [0.9, 0.1], [0.0, 1.0]],
            vec![0, 0, 0],
            vec![0, 0, 1],
        )
        .unwrap();
        let cfg = LossConfig::default();
        assert_eq!(i2cr_loss(&batch, &cfg).unwrap(), 0.0);
        // AllNonAnchor still has a denominator.
        let cfg = LossConfig {
            denominator: Denominator::AllNonAnchor,
            ..cfg
        };
        assert!(i2cr_loss(&batch, &cfg).unwrap() > 0.0);
    }

    #[test]
    fn sign_conventions() {
        // NegativesOnly admits negative losses (hand example above); the
        // AllNonAnchor form is non-negative for tau > 0.
        for seed in 0..10u64 {
            let batch = random_batch(8, 4, 3, seed);
            for tau in [0.05, 0.1, 1.0] {
                let cfg = LossConfig {
                    temperature: tau,
                    reduction: Reduction::Mean,
                    denominator: Denominator::AllNonAnchor,
                };
                assert!(i2cr_loss(&batch, &cfg).unwrap() >= 0.0);
            }
        }
    }

    #[test]
    fn zero_norm_row_is_an_error() {
        let batch = EmbeddingBatch::new(
            array![[0.0, 0.0], [1.0, 0.0]],
            vec![0, 0],
            vec![0, 0],
        )
        .unwrap();
        assert!(i2cr_loss(&batch, &LossConfig::default()).is_err());
    }

    #[test]
    fn nonpositive_temperature_is_an_error() {
        let cfg = LossConfig {
            temperature: 0.0,
            ..LossConfig::default()
        };
        assert!(i2cr_loss(&symmetric_batch(), &cfg).is_err());
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        for seed in 0..6u64 {
            for tau in [0.05, 0.1, 1.0] {
                for denom in [Denominator::NegativesOnly, Denominator::AllNonAnchor] {
                    let cfg = LossConfig {
                        temperature: tau,
                        reduction: Reduction::Mean,
                        denominator: denom,
                    };
                    let batch = random_batch(8, 4, 3, seed);
                    let (_, grad) =
                        i2cr_loss_and_grad(&batch, &cfg, Pairing::InterIntra).unwrap();

                    let h = 1e-5;
                    let mut max_abs = 0.0f64;
                    let mut max_err = 0.0f64;
                    for r in 0..batch.n_views() {
                        for c in 0..batch.z.ncols() {
                            let mut plus = batch.clone();
                            plus.z[[r, c]] += h;
                            let mut minus = batch.clone();
                            minus.z[[r, c]] -= h;
                            let fd = (i2cr_loss(&plus, &cfg).unwrap()
                                - i2cr_loss(&minus, &cfg).unwrap())
                                / (2.0 * h);
                            max_abs = max_abs.max(fd.abs());
                            max_err = max_err.max((fd - grad[[r, c]]).abs());
                        }
                    }
                    let rel = max_err / max_abs.max(1e-12);
                    assert!(rel < 1e-4, "rel err {rel} at tau={tau}, seed={seed}");
                }
            }
        }
    }

    #[test]
    fn alpha_ramp_values() {
        let sched = RampSchedule {
            max_alpha: 0.5,
            total_epochs: 100,
        };
        assert_eq!(alpha(0, &sched), 0.0);
        assert_eq!(alpha(20, &sched), 0.2);
        assert_eq!(alpha(50, &sched), 0.5);
        assert_eq!(alpha(80, &sched), 0.5);
        assert_eq!(alpha(99, &sched), 0.5);
    }

    #[test]
    fn intra_restriction_matches_full_on_unique_samples_and_differs_otherwise() {
        let cfg = LossConfig::default();
        // Every class appears in exactly one sample (two views).
        let mut rng = crate::rngutil::rng_from(&[33]);
        let z = Array2::from_shape_fn((6, 4), |_| rng.gen_range(-1.0..1.0));
        let unique = EmbeddingBatch::new(z.clone(), vec![0, 0, 1, 1, 2, 2], vec![0, 0, 1, 1, 2, 2])
            .unwrap();
        let full = i2cr_loss_and_grad(&unique, &cfg, Pairing::InterIntra).unwrap().0;
        let intra = i2cr_loss_and_grad(&unique, &cfg, Pairing::IntraOnly).unwrap().0;
        assert_abs_diff_eq!(full, intra, epsilon = 1e-9);

        // Class 0 spans two samples: the sets differ, so must the losses.
        let shared = EmbeddingBatch::new(z, vec![0, 0, 0, 0, 1, 1], vec![0, 0, 1, 1, 2, 2])
            .unwrap();
        let full = i2cr_loss_and_grad(&shared, &cfg, Pairing::InterIntra).unwrap().0;
        let intra = i2cr_loss_and_grad(&shared, &cfg, Pairing::IntraOnly).unwrap().0;
        assert!((full - intra).abs() > 1e-6);
    }

    #[test]
    fn cross_entropy_perfect_and_uniform() {
        // Strongly peaked logits at the true class: ce near 0.
        let logits = array![[20.0, 0.0, 0.0], [0.0, 20.0, 0.0]];
        let (ce, grad) = cross_entropy(&logits, &[0, 1]).unwrap();
        assert!(ce < 1e-6);
        assert!(grad.iter().all(|g| g.abs() < 1e-6));

        // Uniform logits: ce = ln(c), gradient pushes toward the label.
        let logits = array![[0.0, 0.0, 0.0]];
        let (ce, grad) = cross_entropy(&logits, &[2]).unwrap();
        assert_abs_diff_eq!(ce, 3f64.ln(), epsilon = 1e-12);
        assert!(grad[[0, 2]] < 0.0 && grad[[0, 0]] > 0.0);
    }

    #[test]
    fn cross_entropy_gradient_matches_finite_differences() {
        let mut rng = crate::rngutil::rng_from(&[77]);
        let logits = Array2::from_shape_fn((5, 4), |_| rng.gen_range(-2.0..2.0));
        let labels = vec![0, 3, 1, 2, 2];
        let (_, grad) = cross_entropy(&logits, &labels).unwrap();
        let h = 1e-6;
        for r in 0..5 {
            for c in 0..4 {
                let mut plus = logits.clone();
                plus[[r, c]] += h;
                let mut minus = logits.clone();
                minus[[r, c]] -= h;
                let fd = (cross_entropy(&plus, &labels).unwrap().0
                    - cross_entropy(&minus, &labels).unwrap().0)
                    / (2.0 * h);
                assert_abs_diff_eq!(fd, grad[[r, c]], epsilon = 1e-6);
            }
        }
    }

    #[test]
    fn total_is_exact_composition() {
        let batch = random_batch(6, 4, 2, 5);
        let mut rng = crate::rngutil::rng_from(&[6]);
        let logits = Array2::from_shape_fn((6, 2), |_| rng.gen_range(-1.0..1.0));
        let sched = RampSchedule::default();
        let cfg = LossConfig::default();

        let at0 = total_loss(&logits, &batch.labels, &batch, 0, &sched, &cfg).unwrap();
        assert_eq!(at0.alpha, 0.0);
        assert_eq!(at0.total, at0.ce);

        let at50 = total_loss(&logits, &batch.labels, &batch, 50, &sched, &cfg).unwrap();
        assert_eq!(at50.alpha, 0.5);
        let (ce, _) = cross_entropy(&logits, &batch.labels).unwrap();
        let reg = i2cr_loss(&batch, &cfg).unwrap();
        assert_eq!(at50.ce, ce);
        assert_eq!(at50.i2cr, reg);
        assert_eq!(at50.total, ce + 0.5 * reg);
    }

    proptest! {
        #[test]
        fn alpha_is_monotone_and_bounded(total in 1usize..200) {
            let sched = RampSchedule { max_alpha: 0.5, total_epochs: total };
            let mut prev = 0.0;
            for e in 0..total {
                let a = alpha(e, &sched);
                prop_assert!((0.0..=0.5).contains(&a));
                prop_assert!(a >= prev);
                prev = a;
            }
        }

        #[test]
        fn loss_is_invariant_to_row_rescaling(seed in 0u64..40) {
            let batch = random_batch(8, 4, 3, seed);
            let cfg = LossConfig::default();
            let base = i2cr_loss(&batch, &cfg).unwrap();

            let mut rng = crate::rngutil::rng_from(&[seed, 999]);
            let mut scaled = batch.clone();
            for mut row in scaled.z.rows_mut() {
                let s = rng.gen_range(0.1..10.0);
                row.mapv_inplace(|v| v * s);
            }
            let rescaled = i2cr_loss(&scaled, &cfg).unwrap();
            prop_assert!((base - rescaled).abs() <= 1e-6, "{base} vs {rescaled}");
        }

        #[test]
        fn loss_is_invariant_to_simultaneous_permutation(seed in 0u64..40) {
            let batch = random_batch(8, 4, 3, seed);
            let cfg = LossConfig::default();
            let base = i2cr_loss(&batch, &cfg).unwrap();

            use rand::seq::SliceRandom;
            let mut rng = crate::rngutil::rng_from(&[seed, 1234]);
            let mut perm: Vec<usize> = (0..8).collect();
            perm.shuffle(&mut rng);

            let z = Array2::from_shape_fn((8, 4), |(r, c)| batch.z[[perm[r], c]]);
            let labels = perm.iter().map(|&p| batch.labels[p]).collect();
            let view_of = perm.iter().map(|&p| batch.view_of[p]).collect();
            let permuted = EmbeddingBatch::new(z, labels, view_of).unwrap();
            let shuffled = i2cr_loss(&permuted, &cfg).unwrap();
            prop_assert!((base - shuffled).abs() <= 1e-9, "{base} vs {shuffled}");
        }
    }
}
