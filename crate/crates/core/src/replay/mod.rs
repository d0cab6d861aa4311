//! The binary-latent autoencoder: per-batch training with self-rehearsal and
//! regeneration of past samples from recomputed codes.
//!
//! Training a batch runs three phases:
//!
//! 1. **Warm-up**: encoder and decoder minimize reconstruction error only.
//! 2. **Assignment**: every epoch the batch's latents are greedily matched to
//!    the batch codebook and the encoder is pulled towards its codes, until
//!    the matching repeats for `stability_window` epochs or the epoch cap.
//!    The final matching is frozen.
//! 3. **Decoder focus**: the encoder is left alone and the decoder is trained
//!    on pairs for every index `1..=N`. Indices of the current batch pair
//!    their frozen code with the real image; older indices pair `c(i)` with
//!    what the decoder snapshot taken at the start of the batch produces
//!    for it.
//!
//! No code is ever stored: `c(i)` is recomputed from the index, the batch
//! prefix comes from the [`BatchLedger`], and the frozen assignments hold
//! only codebook positions.

mod ledger;

pub use ledger::{BatchLedger, BatchRecord};

use std::fmt::{self, Write as _};
use std::path::Path;

use ndarray::{s, Array2, Axis};
use rand::Rng;

use crate::assign::{greedy_assign, is_stable, shuffle_order, Assignment};
use crate::codes::{BinaryCode, CodeLayout};
use crate::error::{Error, Result};
use crate::nn::{latent_reg_batch, mse_loss, Activation, Adam, AdamConfig, ModelParams, Tensor2};

#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderConfig {
    pub hidden: usize,
    pub warmup_epochs: usize,
    pub assign_epoch_cap: usize,
    pub stability_window: usize,
    pub decoder_epochs: usize,
    pub minibatch: usize,
    pub lr: f64,
    /// Weight of the latent regularization relative to reconstruction.
    pub reg_weight: f64,
}

impl Default for AutoencoderConfig {
    fn default() -> Self {
        Self {
            hidden: 512,
            warmup_epochs: 5,
            assign_epoch_cap: 30,
            stability_window: 3,
            decoder_epochs: 40,
            minibatch: 64,
            lr: 1e-3,
            reg_weight: 0.1,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Warmup,
    Assignment,
    Decoder,
}

impl fmt::Display for Phase {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Phase::Warmup => "warmup",
            Phase::Assignment => "assign",
            Phase::Decoder => "decoder",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub phase: Phase,
    pub epoch: usize,
    pub recon_mse: f64,
    pub reg_loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub rows: Vec<LogRow>,
    pub assignment_epochs: usize,
    pub stable: bool,
    /// Mean per-pixel error of the current batch's reconstructions after training.
    pub recon_mse: f64,
    /// For each earlier batch, mean per-pixel change of its decoded codes
    /// between the start and the end of this batch.
    pub drift: Vec<f64>,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("phase,epoch,recon_mse,reg_loss\n");
        for r in &self.rows {
            writeln!(out, "{},{},{},{}", r.phase, r.epoch, r.recon_mse, r.reg_loss).expect("string write");
        }
        out
    }

    pub fn phase_rows(&self, phase: Phase) -> impl Iterator<Item = &LogRow> {
        self.rows.iter().filter(move |r| r.phase == phase)
    }
}

/// Decoder input and reconstruction target for one index.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub code: BinaryCode,
    pub target: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AutoencoderState {
    layout: CodeLayout,
    encoder: ModelParams,
    decoder: ModelParams,
    snapshot: Option<ModelParams>,
    assignments: Vec<Assignment>,
}

fn rows_of<I: IntoIterator<Item = BinaryCode>>(codes: I, width: usize) -> Tensor2 {
    let mut data = Vec::new();
    let mut rows = 0;
    for c in codes {
        data.extend(c.values().iter().map(|&v| v as f64));
        rows += 1;
    }
    Array2::from_shape_vec((rows, width), data).expect("code rows")
}

fn check_finite(loss: f64, phase: Phase, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFiniteLoss {
            context: format!("autoencoder {phase} epoch {epoch}"),
        })
    }
}

/// Mean over epochs' minibatches, weighted by minibatch size.
#[derive(Default)]
struct Running {
    sum: f64,
    count: usize,
}

impl Running {
    fn add(&mut self, value: f64, weight: usize) {
        self.sum += value * weight as f64;
        self.count += weight;
    }

    fn mean(&self) -> f64 {
        if self.count == 0 {
            0.0
        } else {
            self.sum / self.count as f64
        }
    }
}

impl AutoencoderState {
    /// Fresh encoder `pixels → hidden → n` and decoder `n → hidden → pixels`.
    pub fn new<R: Rng + ?Sized>(layout: CodeLayout, pixels: usize, hidden: usize, rng: &mut R) -> Result<Self> {
        let n = layout.len();
        let encoder = ModelParams::init(&[pixels, hidden, n], Activation::LeakyRelu, Activation::Identity, rng)?;
        let decoder = ModelParams::init(&[n, hidden, pixels], Activation::LeakyRelu, Activation::Logistic, rng)?;
        Self::from_parts(layout, encoder, decoder, Vec::new())
    }

    pub fn from_parts(
        layout: CodeLayout,
        encoder: ModelParams,
        decoder: ModelParams,
        assignments: Vec<Assignment>,
    ) -> Result<Self> {
        let n = layout.len();
        if encoder.output_width() != n || decoder.input_width() != n {
            return Err(Error::ShapeMismatch(format!(
                "encoder yields {}, decoder takes {}, code length is {n}",
                encoder.output_width(),
                decoder.input_width()
            )));
        }
        if encoder.input_width() != decoder.output_width() {
            return Err(Error::ShapeMismatch("encoder input and decoder output differ".into()));
        }
        Ok(Self {
            layout,
            encoder,
            decoder,
            snapshot: None,
            assignments,
        })
    }

    pub fn layout(&self) -> &CodeLayout {
        &self.layout
    }

    pub fn encoder(&self) -> &ModelParams {
        &self.encoder
    }

    pub fn decoder(&self) -> &ModelParams {
        &self.decoder
    }

    pub fn decoder_mut(&mut self) -> &mut ModelParams {
        &mut self.decoder
    }

    pub fn snapshot(&self) -> Option<&ModelParams> {
        self.snapshot.as_ref()
    }

    pub fn pixels(&self) -> usize {
        self.decoder.output_width()
    }

    /// Frozen assignment of each completed batch, in batch order.
    pub fn assignments(&self) -> &[Assignment] {
        &self.assignments
    }

    /// Freezes a copy of the decoder to serve as the source of past pairs.
    pub fn snapshot_decoder(&mut self) -> &ModelParams {
        self.snapshot.insert(self.decoder.clone())
    }

    pub fn release_snapshot(&mut self) {
        self.snapshot = None;
    }

    /// `c(i)`: the code allocated to index `i`, under its batch's prefix.
    pub fn code_at(&self, index: u64, ledger: &BatchLedger) -> Result<BinaryCode> {
        let record = ledger.batch_of(index)?;
        self.layout.full_code(record.batch, index)
    }

    /// The frozen code of the sample presented at index `i`.
    pub fn assigned_code(&self, index: u64, ledger: &BatchLedger) -> Result<BinaryCode> {
        let record = ledger.batch_of(index)?;
        let assignment = self
            .assignments
            .get(record.batch as usize - 1)
            .ok_or_else(|| Error::InvalidScenario(format!("batch {} has no frozen assignment", record.batch)))?;
        let pos = (index - record.first) as usize;
        let code_index = record.first + assignment.code_of(pos) as u64;
        self.layout.full_code(record.batch, code_index)
    }

    /// Decoder output for the sample presented at index `i`.
    pub fn reconstruct(&self, index: u64, ledger: &BatchLedger) -> Result<Vec<f64>> {
        Ok(self.reconstruct_many(&[index], ledger)?.row(0).to_vec())
    }

    pub fn reconstruct_many(&self, indices: &[u64], ledger: &BatchLedger) -> Result<Tensor2> {
        let codes = indices
            .iter()
            .map(|&i| self.assigned_code(i, ledger))
            .collect::<Result<Vec<_>>>()?;
        self.decoder.forward(&rows_of(codes, self.layout.len()))
    }

    /// Draws `count` indices uniformly from `1..=upper` and reconstructs them.
    pub fn sample_replay<R: Rng + ?Sized>(
        &self,
        count: usize,
        upper: u64,
        rng: &mut R,
        ledger: &BatchLedger,
    ) -> Result<(Vec<u64>, Tensor2)> {
        if count == 0 {
            return Ok((Vec::new(), Array2::zeros((0, self.pixels()))));
        }
        if upper == 0 || upper > ledger.total() {
            return Err(Error::IndexOutOfRange {
                index: upper,
                total: ledger.total(),
            });
        }
        let indices: Vec<u64> = (0..count).map(|_| rng.random_range(1..=upper)).collect();
        let images = self.reconstruct_many(&indices, ledger)?;
        Ok((indices, images))
    }

    /// The pair used to train the decoder for index `i` while the ledger's
    /// last batch is being learned. `current_images` holds `x_K..x_N`.
    pub fn make_training_pair(&self, index: u64, current_images: &Tensor2, ledger: &BatchLedger) -> Result<TrainingPair> {
        let current = ledger.current().ok_or(Error::IndexOutOfRange { index, total: 0 })?;
        if index == 0 || index > current.last {
            return Err(Error::IndexOutOfRange {
                index,
                total: current.last,
            });
        }
        if index < current.first {
            let snapshot = self.snapshot.as_ref().ok_or(Error::MissingSnapshot(index))?;
            let code = self.code_at(index, ledger)?;
            let target = snapshot.forward(&rows_of([code.clone()], self.layout.len()))?.row(0).to_vec();
            Ok(TrainingPair { code, target })
        } else {
            let pos = (index - current.first) as usize;
            if current_images.nrows() != current.len() {
                return Err(Error::ShapeMismatch(format!(
                    "{} current images for a batch of {}",
                    current_images.nrows(),
                    current.len()
                )));
            }
            Ok(TrainingPair {
                code: self.assigned_code(index, ledger)?,
                target: current_images.row(pos).to_vec(),
            })
        }
    }

    /// Decoder inputs and targets for every index `1..=N`, row `i - 1` per index.
    fn decoder_pairs(&self, images: &Tensor2, ledger: &BatchLedger) -> Result<(Tensor2, Tensor2)> {
        let current = ledger.current().expect("non-empty ledger");
        let n = self.layout.len();
        let past = (1..current.first)
            .map(|i| self.code_at(i, ledger))
            .collect::<Result<Vec<_>>>()?;
        let now = (current.first..=current.last)
            .map(|i| self.assigned_code(i, ledger))
            .collect::<Result<Vec<_>>>()?;
        let inputs = rows_of(past.into_iter().chain(now), n);
        let past_rows = (current.first - 1) as usize;
        let mut targets = Array2::zeros((inputs.nrows(), self.pixels()));
        if past_rows > 0 {
            let snapshot = self.snapshot.as_ref().ok_or(Error::MissingSnapshot(1))?;
            let replayed = snapshot.forward(&inputs.slice(s![..past_rows, ..]).to_owned())?;
            targets.slice_mut(s![..past_rows, ..]).assign(&replayed);
        }
        targets.slice_mut(s![past_rows.., ..]).assign(images);
        Ok((inputs, targets))
    }

    fn joint_step(
        &mut self,
        x: &Tensor2,
        codes: Option<(&Tensor2, f64)>,
        enc_opt: &mut Adam,
        dec_opt: &mut Adam,
    ) -> Result<(f64, f64)> {
        let enc = self.encoder.forward_trace(x)?;
        let dec = self.decoder.forward_trace(enc.output())?;
        let (recon, grad) = mse_loss(dec.output(), x)?;
        let (dec_grads, mut dz) = self.decoder.backward(&dec, &grad)?;
        let mut reg = 0.0;
        if let Some((targets, weight)) = codes {
            let (r, g) = latent_reg_batch(enc.output(), targets)?;
            reg = r;
            dz.scaled_add(weight, &g);
        }
        let (enc_grads, _) = self.encoder.backward(&enc, &dz)?;
        dec_opt.step(&mut self.decoder, &dec_grads)?;
        enc_opt.step(&mut self.encoder, &enc_grads)?;
        Ok((recon, reg))
    }

    fn decoder_step(&mut self, codes: &Tensor2, targets: &Tensor2, opt: &mut Adam) -> Result<f64> {
        let trace = self.decoder.forward_trace(codes)?;
        let (loss, grad) = mse_loss(trace.output(), targets)?;
        let (grads, _) = self.decoder.backward(&trace, &grad)?;
        opt.step(&mut self.decoder, &grads)?;
        Ok(loss)
    }

    /// Learns the ledger's last batch, whose images are `images` (one row
    /// per index `K..=N`).
    pub fn train_batch<R: Rng + ?Sized>(
        &mut self,
        images: &Tensor2,
        ledger: &BatchLedger,
        config: &AutoencoderConfig,
        rng: &mut R,
    ) -> Result<TrainingLog> {
        let current = ledger
            .current()
            .ok_or_else(|| Error::InvalidScenario("ledger has no open batch".into()))?
            .clone();
        if images.nrows() == 0 || images.nrows() != current.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} images for a batch of {}",
                images.nrows(),
                current.len()
            )));
        }
        if images.ncols() != self.pixels() {
            return Err(Error::ShapeMismatch(format!(
                "images have {} pixels, autoencoder expects {}",
                images.ncols(),
                self.pixels()
            )));
        }
        if self.assignments.len() + 1 != current.batch as usize {
            return Err(Error::InvalidScenario(format!(
                "autoencoder holds {} frozen batches but ledger is at batch {}",
                self.assignments.len(),
                current.batch
            )));
        }
        if config.minibatch == 0 {
            return Err(Error::Config("autoencoder.minibatch must be positive".into()));
        }
        self.snapshot_decoder();
        let mut log = TrainingLog::default();
        let count = images.nrows();
        let adam = AdamConfig::with_lr(config.lr);

        let mut enc_opt = Adam::new(&self.encoder, adam);
        let mut dec_opt = Adam::new(&self.decoder, adam);
        for epoch in 0..config.warmup_epochs {
            let order = shuffle_order(count, rng);
            let mut recon = Running::default();
            for chunk in order.chunks(config.minibatch) {
                let x = images.select(Axis(0), chunk);
                let (r, _) = self.joint_step(&x, None, &mut enc_opt, &mut dec_opt)?;
                check_finite(r, Phase::Warmup, epoch)?;
                recon.add(r, chunk.len());
            }
            log.rows.push(LogRow {
                phase: Phase::Warmup,
                epoch,
                recon_mse: recon.mean(),
                reg_loss: 0.0,
            });
        }

        let codebook = self.layout.codebook(current.batch, current.first, current.last)?;
        let code_rows = rows_of(codebook.iter().cloned(), self.layout.len());
        let mut history: Vec<Assignment> = Vec::new();
        for epoch in 0..config.assign_epoch_cap.max(1) {
            let latents = self.encoder.forward(images)?;
            let order = shuffle_order(count, rng);
            history.push(greedy_assign(&latents, &codebook, &order)?);
            log.assignment_epochs = epoch + 1;
            if is_stable(&history, config.stability_window) {
                log.stable = true;
                break;
            }
            let assignment = history.last().expect("pushed above");
            let targets = code_rows.select(Axis(0), assignment.codes());
            let order = shuffle_order(count, rng);
            let (mut recon, mut reg) = (Running::default(), Running::default());
            for chunk in order.chunks(config.minibatch) {
                let x = images.select(Axis(0), chunk);
                let c = targets.select(Axis(0), chunk);
                let (r, g) = self.joint_step(&x, Some((&c, config.reg_weight)), &mut enc_opt, &mut dec_opt)?;
                check_finite(r + g, Phase::Assignment, epoch)?;
                recon.add(r, chunk.len());
                reg.add(g, chunk.len());
            }
            log.rows.push(LogRow {
                phase: Phase::Assignment,
                epoch,
                recon_mse: recon.mean(),
                reg_loss: reg.mean(),
            });
        }
        self.assignments.push(history.pop().expect("at least one assignment epoch"));

        let (inputs, targets) = self.decoder_pairs(images, ledger)?;
        let total = inputs.nrows();
        let mut dec_opt = Adam::new(&self.decoder, adam);
        for epoch in 0..config.decoder_epochs {
            let order = shuffle_order(total, rng);
            let mut recon = Running::default();
            for chunk in order.chunks(config.minibatch) {
                let c = inputs.select(Axis(0), chunk);
                let t = targets.select(Axis(0), chunk);
                let r = self.decoder_step(&c, &t, &mut dec_opt)?;
                check_finite(r, Phase::Decoder, epoch)?;
                recon.add(r, chunk.len());
            }
            log.rows.push(LogRow {
                phase: Phase::Decoder,
                epoch,
                recon_mse: recon.mean(),
                reg_loss: 0.0,
            });
        }

        let outputs = self.decoder.forward(&inputs)?;
        let past_rows = (current.first - 1) as usize;
        log.recon_mse = mse_loss(&outputs.slice(s![past_rows.., ..]).to_owned(), images)?.0;
        for record in &ledger.records()[..ledger.len() - 1] {
            let rows = s![(record.first - 1) as usize..record.last as usize, ..];
            let drift = mse_loss(&outputs.slice(rows).to_owned(), &targets.slice(rows).to_owned())?.0;
            log.drift.push(drift);
        }
        self.release_snapshot();
        Ok(log)
    }

    /// Writes encoder and decoder as one chained checkpoint.
    pub fn save(&self, path: &Path) -> Result<()> {
        self.encoder.concat(&self.decoder)?.save(path)
    }

    /// Inverse of [`AutoencoderState::save`]: the stack is split after the
    /// first layer whose width equals the code length.
    pub fn load(path: &Path, layout: CodeLayout, assignments: Vec<Assignment>) -> Result<Self> {
        let (encoder, decoder) = split_autoencoder(ModelParams::load(path)?, layout.len())?;
        Self::from_parts(layout, encoder, decoder, assignments)
    }
}

/// Splits a chained autoencoder checkpoint into encoder and decoder. The two
/// halves mirror each other, so the split is in the middle; asymmetric stacks
/// fall back to the first layer producing `code_len` outputs.
pub fn split_autoencoder(params: ModelParams, code_len: usize) -> Result<(ModelParams, ModelParams)> {
    let layers = params.layers();
    let half = layers.len() / 2;
    let split = if layers.len().is_multiple_of(2) && half > 0 && layers[half - 1].outputs() == code_len {
        half
    } else {
        layers
            .iter()
            .position(|l| l.outputs() == code_len)
            .map(|p| p + 1)
            .ok_or_else(|| Error::InvalidCheckpoint(format!("no layer of width {code_len}")))?
    };
    params.split_at(split)
}
