//! Continual training of the base classifier.
//!
//! Each optimizer step mixes a minibatch of current-batch samples, trained
//! on their labels, with a minibatch of images regenerated by the
//! autoencoder from earlier indices, trained to match the outputs of a copy
//! of the classifier frozen at the start of the batch.

use std::fmt::Write as _;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::Rng;

use crate::assign::shuffle_order;
use crate::error::{Error, Result};
use crate::nn::{distill_loss, softmax_ce_loss, softmax_rows, Activation, Adam, AdamConfig, ModelParams, Tensor2};
use crate::replay::{AutoencoderState, BatchLedger};

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub minibatch_current: usize,
    pub minibatch_replay: usize,
    pub lr: f64,
    /// Weight of the replay term. `None` uses `(K - 1) / N`, the share of
    /// past samples among everything seen so far.
    pub replay_weight: Option<f64>,
    /// Feed current samples through the autoencoder before training on them.
    pub preprocess: bool,
    /// Distill towards the frozen copy's full distribution; when off,
    /// replayed samples get the frozen copy's argmax as a hard label.
    pub soft_targets: bool,
}

impl Default for ClassifierConfig {
    fn default() -> Self {
        Self {
            hidden: 256,
            epochs: 10,
            minibatch_current: 32,
            minibatch_replay: 32,
            lr: 1e-3,
            replay_weight: None,
            preprocess: true,
            soft_targets: true,
        }
    }
}

impl ClassifierConfig {
    /// Plain supervised training: no replay and raw inputs.
    pub fn finetune(&self) -> Self {
        Self {
            replay_weight: Some(0.0),
            preprocess: false,
            ..self.clone()
        }
    }

    pub fn replay_weight_for(&self, first: u64, total: u64) -> f64 {
        self.replay_weight
            .unwrap_or_else(|| (first - 1) as f64 / total as f64)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRow {
    pub epoch: usize,
    pub ce_loss: f64,
    pub distill_loss: f64,
    pub train_acc: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct ClassifierLog {
    pub rows: Vec<EpochRow>,
    pub replay_weight: f64,
}

impl ClassifierLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,ce_loss,distill_loss,train_acc\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.epoch, r.ce_loss, r.distill_loss, r.train_acc).expect("string write");
        }
        out
    }
}

/// Accuracy on a labelled set. `per_class[c]` is `None` when class `c` has
/// no test sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Evaluation {
    pub average: f64,
    pub per_class: Vec<Option<f64>>,
    pub count: usize,
}

impl Evaluation {
    /// Accuracy over the samples whose label is in `classes`.
    pub fn over(&self, classes: &[u8], counts: &[usize]) -> Option<f64> {
        let (mut hit, mut total) = (0.0, 0usize);
        for &c in classes {
            if let Some(acc) = self.per_class.get(c as usize).copied().flatten() {
                hit += acc * counts[c as usize] as f64;
                total += counts[c as usize];
            }
        }
        (total > 0).then(|| hit / total as f64)
    }
}

/// Index of the largest entry, the lowest index on ties.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (k, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = k;
        }
    }
    best
}

pub fn predict(params: &ModelParams, images: &Tensor2) -> Result<Vec<usize>> {
    let logits = params.forward(images)?;
    Ok(logits.rows().into_iter().map(|r| argmax(r.as_slice().expect("row-major logits"))).collect())
}

/// Per-class and overall accuracy of `params` on `(images, labels)`.
pub fn evaluate(params: &ModelParams, images: &Tensor2, labels: &[u8]) -> Result<Evaluation> {
    if labels.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    if images.nrows() != labels.len() {
        return Err(Error::CountMismatch {
            images: images.nrows(),
            labels: labels.len(),
        });
    }
    let classes = params.output_width();
    let predicted = predict(params, images)?;
    let mut hits = vec![0usize; classes];
    let mut counts = vec![0usize; classes];
    for (&p, &l) in predicted.iter().zip(labels) {
        let l = l as usize;
        if l >= classes {
            return Err(Error::LabelOutOfRange { label: l, classes });
        }
        counts[l] += 1;
        hits[l] += usize::from(p == l);
    }
    Ok(Evaluation {
        average: hits.iter().sum::<usize>() as f64 / labels.len() as f64,
        per_class: hits
            .iter()
            .zip(&counts)
            .map(|(&h, &c)| (c > 0).then(|| h as f64 / c as f64))
            .collect(),
        count: labels.len(),
    })
}

/// Softmax of the frozen copy's logits, one distribution per row.
pub fn soft_targets(frozen: &ModelParams, images: &Tensor2) -> Result<Tensor2> {
    Ok(softmax_rows(&frozen.forward(images)?))
}

/// One-hot rows of the frozen copy's predictions.
pub fn hard_targets(frozen: &ModelParams, images: &Tensor2) -> Result<Tensor2> {
    let predicted = predict(frozen, images)?;
    let mut out = Array2::zeros((predicted.len(), frozen.output_width()));
    for (r, &p) in predicted.iter().enumerate() {
        out[[r, p]] = 1.0;
    }
    Ok(out)
}

/// Autoencoder reconstructions of the given current-batch indices.
pub fn preprocess_current(ae: &AutoencoderState, indices: &[u64], ledger: &BatchLedger) -> Result<Tensor2> {
    let current = ledger
        .current()
        .ok_or_else(|| Error::InvalidScenario("ledger has no open batch".into()))?;
    if let Some(&i) = indices.iter().find(|&&i| !current.contains(i)) {
        return Err(Error::IndexOutOfRange {
            index: i,
            total: current.last,
        });
    }
    ae.reconstruct_many(indices, ledger)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierState {
    params: ModelParams,
    frozen: Option<ModelParams>,
}

impl ClassifierState {
    /// Fresh network `pixels → hidden → classes`.
    pub fn new<R: Rng + ?Sized>(pixels: usize, hidden: usize, classes: usize, rng: &mut R) -> Result<Self> {
        let params = ModelParams::init(&[pixels, hidden, classes], Activation::LeakyRelu, Activation::Identity, rng)?;
        Ok(Self::from_params(params))
    }

    pub fn from_params(params: ModelParams) -> Self {
        Self { params, frozen: None }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ModelParams {
        &mut self.params
    }

    pub fn classes(&self) -> usize {
        self.params.output_width()
    }

    pub fn frozen(&self) -> Option<&ModelParams> {
        self.frozen.as_ref()
    }

    pub fn snapshot_classifier(&mut self) -> &ModelParams {
        self.frozen.insert(self.params.clone())
    }

    pub fn release_snapshot(&mut self) {
        self.frozen = None;
    }

    pub fn evaluate(&self, images: &Tensor2, labels: &[u8]) -> Result<Evaluation> {
        evaluate(&self.params, images, labels)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.params.save(path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Self::from_params(ModelParams::load(path)?))
    }

    /// Trains on the ledger's last batch. `images` and `labels` hold the raw
    /// samples `K..=N`; `ae` must already have learned this batch when it
    /// is used for preprocessing or replay. `rng` orders the current
    /// samples and `replay_rng` draws replayed indices.
    #[allow(clippy::too_many_arguments)]
    pub fn train_batch_classifier<R: Rng + ?Sized, Q: Rng + ?Sized>(
        &mut self,
        images: &Tensor2,
        labels: &[u8],
        ae: Option<&AutoencoderState>,
        ledger: &BatchLedger,
        config: &ClassifierConfig,
        rng: &mut R,
        replay_rng: &mut Q,
    ) -> Result<ClassifierLog> {
        let current = ledger
            .current()
            .ok_or_else(|| Error::InvalidScenario("ledger has no open batch".into()))?
            .clone();
        if images.nrows() != current.len() || labels.len() != current.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} images and {} labels for a batch of {}",
                images.nrows(),
                labels.len(),
                current.len()
            )));
        }
        if config.minibatch_current == 0 {
            return Err(Error::Config("classifier.minibatch_current must be positive".into()));
        }
        let classes = self.classes();
        let labels: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
        if let Some(&l) = labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label: l, classes });
        }
        let weight = config.replay_weight_for(current.first, current.last);
        let replaying = current.first > 1 && weight != 0.0 && config.minibatch_replay > 0;
        let needs_ae = config.preprocess || replaying;
        let ae = match (ae, needs_ae) {
            (Some(ae), true) => Some(ae),
            (None, true) => {
                return Err(Error::Config(
                    "autoencoder preprocessing or replay requested without an autoencoder".into(),
                ))
            }
            (_, false) => None,
        };
        let inputs = match ae {
            Some(ae) if config.preprocess => {
                let indices: Vec<u64> = (current.first..=current.last).collect();
                preprocess_current(ae, &indices, ledger)?
            }
            _ => images.clone(),
        };
        if replaying && self.frozen.is_none() {
            return Err(Error::MissingFrozenCopy);
        }

        let mut opt = Adam::new(&self.params, AdamConfig::with_lr(config.lr));
        let mut log = ClassifierLog {
            rows: Vec::with_capacity(config.epochs),
            replay_weight: weight,
        };
        for epoch in 0..config.epochs {
            let order = shuffle_order(inputs.nrows(), rng);
            let (mut ce_sum, mut distill_sum, mut correct, mut steps) = (0.0, 0.0, 0usize, 0usize);
            for chunk in order.chunks(config.minibatch_current) {
                let x = inputs.select(Axis(0), chunk);
                let y: Vec<usize> = chunk.iter().map(|&k| labels[k]).collect();
                let trace = self.params.forward_trace(&x)?;
                let (ce, grad) = softmax_ce_loss(trace.output(), &y)?;
                correct += trace
                    .output()
                    .rows()
                    .into_iter()
                    .zip(&y)
                    .filter(|(row, &l)| argmax(row.as_slice().expect("row-major")) == l)
                    .count();
                let (mut grads, _) = self.params.backward(&trace, &grad)?;
                let mut distill = 0.0;
                if replaying {
                    let ae = ae.expect("replay requires the autoencoder");
                    let frozen = self.frozen.as_ref().expect("checked above");
                    let (_, replayed) = ae.sample_replay(config.minibatch_replay, current.first - 1, replay_rng, ledger)?;
                    let targets = if config.soft_targets {
                        soft_targets(frozen, &replayed)?
                    } else {
                        hard_targets(frozen, &replayed)?
                    };
                    let trace = self.params.forward_trace(&replayed)?;
                    let (d, grad) = distill_loss(trace.output(), &targets)?;
                    let (mut replay_grads, _) = self.params.backward(&trace, &grad)?;
                    replay_grads.scale(weight);
                    grads.add_assign(&replay_grads);
                    distill = d;
                }
                if !(ce + weight * distill).is_finite() || !grads.is_finite() {
                    return Err(Error::NonFiniteLoss {
                        context: format!("classifier batch {} epoch {epoch}", current.batch),
                    });
                }
                opt.step(&mut self.params, &grads)?;
                ce_sum += ce;
                distill_sum += distill;
                steps += 1;
            }
            log.rows.push(EpochRow {
                epoch,
                ce_loss: ce_sum / steps as f64,
                distill_loss: distill_sum / steps as f64,
                train_acc: correct as f64 / inputs.nrows() as f64,
            });
        }
        Ok(log)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codes::CodeLayout;
    use crate::replay::AutoencoderConfig;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn blobs(count: usize, pixels: usize, classes: usize, seed: u64) -> (Tensor2, Vec<u8>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<u8> = (0..count).map(|i| (i % classes) as u8).collect();
        let images = Array2::from_shape_fn((count, pixels), |(r, c)| {
            let centre = if c % classes == labels[r] as usize { 0.8 } else { 0.2 };
            (centre + rng.random_range(-0.1..0.1f64)).clamp(0.0, 1.0)
        });
        (images, labels)
    }

    fn zero_last_layer(state: &mut ClassifierState) {
        let last = state.params_mut().layers_mut().last_mut().unwrap();
        last.weights.fill(0.0);
        last.bias.fill(0.0);
    }

    #[test]
    fn argmax_ties_go_low() {
        assert_eq!(argmax(&[0.0, 0.0, 0.0]), 0);
        assert_eq!(argmax(&[0.1, 0.3, 0.3]), 1);
    }

    #[test]
    fn zero_head_predicts_class_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut state = ClassifierState::new(6, 8, 10, &mut rng).unwrap();
        zero_last_layer(&mut state);
        let (x, y) = blobs(50, 6, 10, 1);
        let eval = state.evaluate(&x, &y).unwrap();
        assert!((eval.average - 0.1).abs() < 1e-12);
        assert_eq!(eval.per_class[0], Some(1.0));
        assert_eq!(eval.per_class[3], Some(0.0));
        let uniform = soft_targets(state.params(), &x).unwrap();
        assert!(uniform.iter().all(|&p| (p - 0.1).abs() < 1e-15));
        assert!(matches!(
            state.evaluate(&Array2::zeros((0, 6)), &[]),
            Err(Error::EmptyTestSet)
        ));
    }

    #[test]
    fn soft_targets_are_distributions() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let state = ClassifierState::new(6, 8, 10, &mut rng).unwrap();
        let (x, _) = blobs(7, 6, 10, 3);
        let t = soft_targets(state.params(), &x).unwrap();
        for row in t.rows() {
            assert!((row.sum() - 1.0).abs() < 1e-9);
            assert!(row.iter().all(|&p| p >= 0.0));
        }
        assert_eq!(t, soft_targets(state.params(), &x).unwrap());
        assert!(soft_targets(state.params(), &Array2::zeros((1, 5))).is_err());
    }

    fn trained_ae(x: &Tensor2, ledger: &BatchLedger, ae: &mut AutoencoderState, rng: &mut ChaCha8Rng) {
        let cfg = AutoencoderConfig {
            hidden: 16,
            warmup_epochs: 1,
            assign_epoch_cap: 2,
            decoder_epochs: 2,
            minibatch: 8,
            ..AutoencoderConfig::default()
        };
        ae.train_batch(x, ledger, &cfg, rng).unwrap();
    }

    #[test]
    fn frozen_copy_is_untouched_by_training() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let layout = CodeLayout::uniform(6, &[3, 5], 4, 3).unwrap();
        let mut ae = AutoencoderState::new(layout, 6, 16, &mut rng).unwrap();
        let mut clf = ClassifierState::new(6, 8, 4, &mut rng).unwrap();
        let mut ledger = BatchLedger::new();
        let (x1, y1) = blobs(12, 6, 2, 5);
        ledger.push(12, vec![0, 1]).unwrap();
        trained_ae(&x1, &ledger, &mut ae, &mut rng);
        let cfg = ClassifierConfig {
            epochs: 2,
            minibatch_current: 4,
            minibatch_replay: 4,
            ..ClassifierConfig::default()
        };
        let log = clf
            .train_batch_classifier(&x1, &y1, Some(&ae), &ledger, &cfg, &mut rng.clone(), &mut rng)
            .unwrap();
        assert!(log.rows.iter().all(|r| r.distill_loss == 0.0));
        assert_eq!(log.replay_weight, 0.0);

        let (x2, y2) = blobs(10, 6, 2, 6);
        let y2: Vec<u8> = y2.iter().map(|l| l + 2).collect();
        ledger.push(10, vec![2, 3]).unwrap();
        trained_ae(&x2, &ledger, &mut ae, &mut rng);
        let err = clf.train_batch_classifier(&x2, &y2, Some(&ae), &ledger, &cfg, &mut rng.clone(), &mut rng);
        assert!(matches!(err, Err(Error::MissingFrozenCopy)));

        clf.snapshot_classifier();
        let probe = blobs(5, 6, 4, 7).0;
        let before = clf.frozen().unwrap().forward(&probe).unwrap();
        let live_before = clf.params().forward(&probe).unwrap();
        let log = clf
            .train_batch_classifier(&x2, &y2, Some(&ae), &ledger, &cfg, &mut rng.clone(), &mut rng)
            .unwrap();
        assert!((log.replay_weight - 12.0 / 22.0).abs() < 1e-15);
        assert!(log.rows.iter().all(|r| r.distill_loss > 0.0));
        assert_eq!(clf.frozen().unwrap().forward(&probe).unwrap(), before);
        assert_ne!(clf.params().forward(&probe).unwrap(), live_before);
    }

    #[test]
    fn preprocessing_uses_reconstructions_only() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let layout = CodeLayout::uniform(6, &[3, 5], 4, 3).unwrap();
        let mut ae = AutoencoderState::new(layout, 6, 16, &mut rng).unwrap();
        let mut ledger = BatchLedger::new();
        let (x, _) = blobs(9, 6, 3, 9);
        ledger.push(9, vec![0, 1, 2]).unwrap();
        trained_ae(&x, &ledger, &mut ae, &mut rng);
        let indices: Vec<u64> = (1..=9).collect();
        let once = preprocess_current(&ae, &indices, &ledger).unwrap();
        assert_eq!(once, preprocess_current(&ae, &indices, &ledger).unwrap());
        assert_eq!(once, ae.reconstruct_many(&indices, &ledger).unwrap());
        assert!(once.rows().into_iter().zip(x.rows()).all(|(a, b)| a != b));
        assert!(preprocess_current(&ae, &[10], &ledger).is_err());
    }

    /// Textbook minibatch training with the same ordering stream.
    fn reference_trainer(params: &mut ModelParams, x: &Tensor2, y: &[u8], cfg: &ClassifierConfig, rng: &mut ChaCha8Rng) {
        let mut opt = Adam::new(params, AdamConfig::with_lr(cfg.lr));
        for _ in 0..cfg.epochs {
            for chunk in shuffle_order(x.nrows(), rng).chunks(cfg.minibatch_current) {
                let xb = x.select(Axis(0), chunk);
                let yb: Vec<usize> = chunk.iter().map(|&k| y[k] as usize).collect();
                let trace = params.forward_trace(&xb).unwrap();
                let (_, g) = softmax_ce_loss(trace.output(), &yb).unwrap();
                let (grads, _) = params.backward(&trace, &g).unwrap();
                opt.step(params, &grads).unwrap();
            }
        }
    }

    #[test]
    fn without_replay_or_preprocessing_it_is_plain_finetuning() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let mut clf = ClassifierState::new(6, 8, 4, &mut rng).unwrap();
        let mut reference = clf.params().clone();
        let mut ledger = BatchLedger::new();
        let (x1, y1) = blobs(10, 6, 2, 11);
        let (x2, y2) = blobs(14, 6, 4, 12);
        let cfg = ClassifierConfig {
            epochs: 3,
            minibatch_current: 4,
            ..ClassifierConfig::default()
        }
        .finetune();
        let mut order = ChaCha8Rng::seed_from_u64(13);
        let mut ref_order = order.clone();
        let mut unused = ChaCha8Rng::seed_from_u64(14);
        for (x, y) in [(&x1, &y1), (&x2, &y2)] {
            ledger.push(x.nrows(), vec![]).unwrap();
            clf.snapshot_classifier();
            clf.train_batch_classifier(x, y, None, &ledger, &cfg, &mut order, &mut unused)
                .unwrap();
            reference_trainer(&mut reference, x, y, &cfg, &mut ref_order);
        }
        assert_eq!(clf.params(), &reference);
    }

    #[test]
    fn overfits_a_handful_of_images() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut clf = ClassifierState::new(6, 32, 10, &mut rng).unwrap();
        let (x, y) = blobs(10, 6, 10, 16);
        let mut ledger = BatchLedger::new();
        ledger.push(10, vec![]).unwrap();
        let cfg = ClassifierConfig {
            epochs: 300,
            minibatch_current: 10,
            lr: 1e-2,
            ..ClassifierConfig::default()
        }
        .finetune();
        clf.train_batch_classifier(&x, &y, None, &ledger, &cfg, &mut rng.clone(), &mut rng)
            .unwrap();
        assert_eq!(clf.evaluate(&x, &y).unwrap().average, 1.0);
    }

    #[test]
    fn checkpoint_keeps_accuracy() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let clf = ClassifierState::new(6, 8, 10, &mut rng).unwrap();
        let (x, y) = blobs(30, 6, 10, 18);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("clf.bin");
        clf.save(&path).unwrap();
        let loaded = ClassifierState::load(&path).unwrap();
        assert_eq!(loaded.evaluate(&x, &y).unwrap(), clf.evaluate(&x, &y).unwrap());
    }
}
