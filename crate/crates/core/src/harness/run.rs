//! Experiment driver: scenario playback, baselines, ablation and run
//! directories.
//!
//! A BinPlay run directory holds
//!
//! ```text
//! config.txt                canonical configuration
//! ledger.csv                batch index ranges, written last for each batch
//! checkpoints/ae_batch<b>.bin, checkpoints/clf_batch<b>.bin
//! assignments/batch<b>.csv  frozen code positions
//! logs/ae_batch<b>.csv, logs/clf_batch<b>.csv
//! metrics.csv               one row per batch, deterministic for a seed
//! timing.csv                wall-clock seconds per batch
//! summary.json
//! ```
//!
//! Nothing in it holds an image. Training an existing directory resumes
//! after its last completed batch and only ever reads the samples of the
//! batches still to come.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;

use super::config::ExperimentConfig;
use super::data::{load_mnist_dir, verify_checksums, Dataset, SourceFile, CLASSES};
use super::scenario::{build_scenario, Scenario, ScenarioBatch};
use crate::assign::Assignment;
use crate::classifier::{ClassifierConfig, ClassifierLog, ClassifierState, Evaluation};
use crate::error::{Error, Result};
use crate::nn::checkpoint_len;
use crate::replay::{AutoencoderState, BatchLedger, TrainingLog};
use crate::seeds;

/// Noted in every summary: the networks are fully connected.
pub const ARCHITECTURE: &str = "fully-connected encoder, decoder and classifier";

/// Training and test data plus the scenario built from them.
#[derive(Clone, Debug)]
pub struct Experiment {
    pub config: ExperimentConfig,
    pub scenario: Scenario,
    pub test: Dataset,
    pub sources: Vec<SourceFile>,
}

impl Experiment {
    pub fn from_datasets(config: ExperimentConfig, train: &Dataset, test: &Dataset) -> Result<Self> {
        config.validate()?;
        let mut rng = seeds::stream(config.seed, seeds::SCENARIO);
        let scenario = build_scenario(train, &config.data.groups, config.data.per_class, &mut rng)?;
        let limit = match config.data.test_limit {
            0 => test.len(),
            k => k.min(test.len()),
        };
        let test = test.subset(&(0..limit).collect::<Vec<_>>());
        if test.is_empty() {
            return Err(Error::EmptyTestSet);
        }
        let sources = train.sources.iter().chain(&test.sources).cloned().collect();
        Ok(Self {
            config,
            scenario,
            test,
            sources,
        })
    }

    /// Reads the dataset directory named by the configuration (or
    /// `BINPLAY_DATA`) and verifies any configured checksums.
    pub fn load(config: ExperimentConfig) -> Result<Self> {
        let (train, test) = load_mnist_dir(&config.data.resolve_dir())?;
        verify_checksums(&train, &config.data.checksums)?;
        verify_checksums(&test, &config.data.checksums)?;
        Self::from_datasets(config, &train, &test)
    }

    pub fn with_seed(&self, seed: u64, train: &Dataset) -> Result<Self> {
        let config = ExperimentConfig { seed, ..self.config.clone() };
        Self::from_datasets(config, train, &self.test)
    }

    pub fn pixels(&self) -> usize {
        self.test.pixels()
    }

    pub fn group_labels(&self) -> Vec<String> {
        self.config
            .data
            .groups
            .iter()
            .map(|g| format!("acc_c{}", g.iter().map(u8::to_string).collect::<String>()))
            .collect()
    }

    fn test_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; CLASSES];
        for &l in &self.test.labels {
            counts[l as usize] += 1;
        }
        counts
    }
}

/// Results after one batch.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BatchMetrics {
    pub batch: u64,
    /// Accuracy on the whole test set.
    pub test_avg_acc: f64,
    /// Accuracy on each group's test samples, for groups seen so far.
    pub group_acc: Vec<Option<f64>>,
    /// Accuracy on test samples of the classes seen so far.
    pub seen_acc: f64,
    pub ae_recon_mse: Option<f64>,
    /// Change of each earlier batch's decoded codes during this batch.
    pub ae_drift: Vec<f64>,
    pub assignment_epochs: Option<usize>,
    pub wall_s: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunMetrics {
    pub mode: String,
    pub seed: u64,
    pub config_hash: String,
    pub group_labels: Vec<String>,
    pub rows: Vec<BatchMetrics>,
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

impl RunMetrics {
    pub fn new(mode: &str, exp: &Experiment) -> Self {
        Self {
            mode: mode.to_string(),
            seed: exp.config.seed,
            config_hash: exp.config.hash(),
            group_labels: exp.group_labels(),
            rows: Vec::new(),
        }
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.rows.last().map(|r| r.test_avg_acc)
    }

    pub fn csv_header(&self) -> String {
        format!("batch,test_avg_acc,{},seen_acc,ae_recon_mse\n", self.group_labels.join(","))
    }

    pub fn csv_row(row: &BatchMetrics) -> String {
        let groups: Vec<String> = row.group_acc.iter().map(|&a| opt(a)).collect();
        format!(
            "{},{},{},{},{}\n",
            row.batch,
            row.test_avg_acc,
            groups.join(","),
            row.seen_acc,
            opt(row.ae_recon_mse)
        )
    }

    /// Everything here is a function of configuration and seed; wall-clock
    /// time lives in [`RunMetrics::timing_csv`].
    pub fn to_csv(&self) -> String {
        let mut out = self.csv_header();
        for r in &self.rows {
            out.push_str(&Self::csv_row(r));
        }
        out
    }

    pub fn timing_csv(&self) -> String {
        let mut out = String::from("batch,wall_s\n");
        for r in &self.rows {
            writeln!(out, "{},{}", r.batch, r.wall_s).expect("string write");
        }
        out
    }
}

fn batch_metrics(
    exp: &Experiment,
    state: &ClassifierState,
    ledger: &BatchLedger,
    ae_log: Option<&TrainingLog>,
    wall_s: f64,
) -> Result<BatchMetrics> {
    let eval: Evaluation = state.evaluate(&exp.test.images, &exp.test.labels)?;
    let counts = exp.test_counts();
    let seen: Vec<u8> = ledger.records().iter().flat_map(|r| r.classes.iter().copied()).collect();
    let group_acc = exp
        .config
        .data
        .groups
        .iter()
        .map(|g| {
            if g.iter().all(|c| seen.contains(c)) {
                eval.over(g, &counts)
            } else {
                None
            }
        })
        .collect();
    Ok(BatchMetrics {
        batch: ledger.len() as u64,
        test_avg_acc: eval.average,
        group_acc,
        seen_acc: eval.over(&seen, &counts).unwrap_or(0.0),
        ae_recon_mse: ae_log.map(|l| l.recon_mse),
        ae_drift: ae_log.map(|l| l.drift.clone()).unwrap_or_default(),
        assignment_epochs: ae_log.map(|l| l.assignment_epochs),
        wall_s,
    })
}

/// Everything a run carries from one batch to the next: one autoencoder
/// and any number of classifiers trained side by side on its replay.
pub struct Session {
    pub ledger: BatchLedger,
    pub ae: AutoencoderState,
    pub tracks: Vec<(ClassifierConfig, ClassifierState)>,
}

pub struct BatchOutcome {
    pub ae_log: TrainingLog,
    pub clf_logs: Vec<ClassifierLog>,
    pub metrics: Vec<BatchMetrics>,
}

impl Session {
    pub fn new(exp: &Experiment, tracks: &[ClassifierConfig]) -> Result<Self> {
        let cfg = &exp.config;
        let layout = cfg.layout.build()?;
        let ae = AutoencoderState::new(
            layout,
            exp.pixels(),
            cfg.autoencoder.hidden,
            &mut seeds::stream(cfg.seed, seeds::AE_INIT),
        )?;
        let tracks = tracks
            .iter()
            .map(|t| {
                let state = ClassifierState::new(
                    exp.pixels(),
                    t.hidden,
                    CLASSES,
                    &mut seeds::stream(cfg.seed, seeds::CLF_INIT),
                )?;
                Ok((t.clone(), state))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            ledger: BatchLedger::new(),
            ae,
            tracks,
        })
    }

    /// Autoencoder first, then each classifier against a copy of itself
    /// frozen before the batch.
    pub fn step(&mut self, exp: &Experiment, batch: &ScenarioBatch) -> Result<BatchOutcome> {
        let started = Instant::now();
        let seed = exp.config.seed;
        self.ledger.push(batch.data.len(), batch.classes.clone())?;
        let b = self.ledger.len() as u64;
        if batch.batch != b {
            return Err(Error::InvalidScenario(format!("batch {} presented as batch {b}", batch.batch)));
        }
        let ae_log = self.ae.train_batch(
            &batch.data.images,
            &self.ledger,
            &exp.config.autoencoder,
            &mut seeds::batch_stream(seed, seeds::AE_TRAIN, b),
        )?;
        let ae_wall = started.elapsed().as_secs_f64();
        let mut clf_logs = Vec::with_capacity(self.tracks.len());
        let mut metrics = Vec::with_capacity(self.tracks.len());
        for (config, state) in &mut self.tracks {
            let clf_started = Instant::now();
            if b > 1 {
                state.snapshot_classifier();
            }
            let log = state.train_batch_classifier(
                &batch.data.images,
                &batch.data.labels,
                Some(&self.ae),
                &self.ledger,
                config,
                &mut seeds::batch_stream(seed, seeds::CLF_TRAIN, b),
                &mut seeds::batch_stream(seed, seeds::CLF_REPLAY, b),
            )?;
            state.release_snapshot();
            let wall = ae_wall + clf_started.elapsed().as_secs_f64();
            metrics.push(batch_metrics(exp, state, &self.ledger, Some(&ae_log), wall)?);
            clf_logs.push(log);
        }
        Ok(BatchOutcome {
            ae_log,
            clf_logs,
            metrics,
        })
    }
}

/// Paths inside a run directory.
#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> PathBuf {
        self.root.join("config.txt")
    }

    pub fn ledger(&self) -> PathBuf {
        self.root.join("ledger.csv")
    }

    pub fn metrics(&self) -> PathBuf {
        self.root.join("metrics.csv")
    }

    pub fn timing(&self) -> PathBuf {
        self.root.join("timing.csv")
    }

    pub fn summary(&self) -> PathBuf {
        self.root.join("summary.json")
    }

    pub fn ae_checkpoint(&self, b: u64) -> PathBuf {
        self.root.join(format!("checkpoints/ae_batch{b}.bin"))
    }

    pub fn clf_checkpoint(&self, b: u64) -> PathBuf {
        self.root.join(format!("checkpoints/clf_batch{b}.bin"))
    }

    pub fn assignment(&self, b: u64) -> PathBuf {
        self.root.join(format!("assignments/batch{b}.csv"))
    }

    pub fn ae_log(&self, b: u64) -> PathBuf {
        self.root.join(format!("logs/ae_batch{b}.csv"))
    }

    pub fn clf_log(&self, b: u64) -> PathBuf {
        self.root.join(format!("logs/clf_batch{b}.csv"))
    }

    fn create(&self) -> Result<()> {
        for sub in ["checkpoints", "assignments", "logs"] {
            let p = self.root.join(sub);
            fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
        }
        Ok(())
    }

    pub fn load_config(&self) -> Result<ExperimentConfig> {
        ExperimentConfig::load(&self.config())
    }

    pub fn load_ledger(&self) -> Result<BatchLedger> {
        BatchLedger::load(&self.ledger())
    }

    /// Autoencoder after batch `b`, with the frozen assignments of batches `1..=b`.
    pub fn load_autoencoder(&self, config: &ExperimentConfig, ledger: &BatchLedger, b: u64) -> Result<AutoencoderState> {
        let assignments = (1..=b)
            .map(|k| {
                let record = ledger
                    .record(k)
                    .ok_or_else(|| Error::InvalidCheckpoint(format!("ledger has no batch {k}")))?;
                Assignment::load(&self.assignment(k), record.first)
            })
            .collect::<Result<Vec<_>>>()?;
        let path = self.ae_checkpoint(b);
        if !path.exists() {
            return Err(Error::MissingCheckpoint(path));
        }
        AutoencoderState::load(&path, config.layout.build()?, assignments)
    }

    pub fn load_classifier(&self, b: u64) -> Result<ClassifierState> {
        ClassifierState::load(&self.clf_checkpoint(b))
    }
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_lines(path: &Path, keep: usize) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().skip(1).take(keep).map(|l| format!("{l}\n")).collect())
}

fn checkpoint_sizes(dir: &RunDir, b: u64) -> Result<serde_json::Value> {
    let size = |p: PathBuf| fs::metadata(&p).map(|m| m.len()).map_err(|e| Error::io(&p, e));
    Ok(serde_json::json!({
        "batch": b,
        "autoencoder_bytes": size(dir.ae_checkpoint(b))?,
        "classifier_bytes": size(dir.clf_checkpoint(b))?,
    }))
}

fn write_summary(path: &Path, metrics: &RunMetrics, exp: &Experiment, extra: serde_json::Value) -> Result<()> {
    let sources: Vec<_> = exp
        .sources
        .iter()
        .map(|s| serde_json::json!({ "path": s.path.display().to_string(), "sha256": s.sha256 }))
        .collect();
    let summary = serde_json::json!({
        "mode": metrics.mode,
        "seed": metrics.seed,
        "config_hash": metrics.config_hash,
        "architecture": ARCHITECTURE,
        "final_test_avg_acc": metrics.final_accuracy(),
        "total_wall_s": metrics.rows.iter().map(|r| r.wall_s).sum::<f64>(),
        "data_sources": sources,
        "batches": metrics.rows,
        "extra": extra,
    });
    let text = serde_json::to_string_pretty(&summary).expect("summary serializes");
    write(path, &(text + "\n"))
}

/// Trains BinPlay over the scenario, writing `out` as it goes. If `out`
/// already holds a run of the same configuration and seed, training resumes
/// after its last completed batch. `stop_after` caps the total number of
/// completed batches.
///
/// The returned metrics cover only the batches trained by this call.
pub fn run_binplay(exp: &Experiment, out: &Path, stop_after: Option<usize>) -> Result<RunMetrics> {
    let dir = RunDir::new(out);
    dir.create()?;
    let mut metrics = RunMetrics::new("binplay", exp);
    let (mut session, mut metric_lines, mut timing_lines) = if dir.ledger().exists() {
        let saved = dir.load_config()?;
        if saved.hash() != exp.config.hash() || saved.seed != exp.config.seed {
            return Err(Error::Config(format!(
                "{} holds a run with a different configuration or seed",
                out.display()
            )));
        }
        let ledger = dir.load_ledger()?;
        let b = ledger.len() as u64;
        let ae = dir.load_autoencoder(&saved, &ledger, b)?;
        let clf = dir.load_classifier(b)?;
        let done = ledger.len();
        let session = Session {
            ledger,
            ae,
            tracks: vec![(exp.config.classifier.clone(), clf)],
        };
        (session, read_lines(&dir.metrics(), done)?, read_lines(&dir.timing(), done)?)
    } else {
        write(&dir.config(), &exp.config.to_text())?;
        (Session::new(exp, std::slice::from_ref(&exp.config.classifier))?, Vec::new(), Vec::new())
    };
    let limit = stop_after.unwrap_or(usize::MAX).min(exp.scenario.len());
    let mut sizes = Vec::new();
    for batch in &exp.scenario.batches[session.ledger.len().min(limit)..limit] {
        let outcome = session.step(exp, batch)?;
        let b = batch.batch;
        let (_, clf) = &session.tracks[0];
        session.ae.save(&dir.ae_checkpoint(b))?;
        clf.save(&dir.clf_checkpoint(b))?;
        session
            .ae
            .assignments()
            .last()
            .expect("trained batch has an assignment")
            .save(&dir.assignment(b), session.ledger.current().expect("open batch").first)?;
        write(&dir.ae_log(b), &outcome.ae_log.to_csv())?;
        write(&dir.clf_log(b), &outcome.clf_logs[0].to_csv())?;
        let row = outcome.metrics.into_iter().next().expect("one track");
        metric_lines.push(RunMetrics::csv_row(&row));
        timing_lines.push(format!("{},{}\n", row.batch, row.wall_s));
        write(&dir.metrics(), &(metrics.csv_header() + &metric_lines.concat()))?;
        write(&dir.timing(), &(String::from("batch,wall_s\n") + &timing_lines.concat()))?;
        session.ledger.save(&dir.ledger())?;
        sizes.push(checkpoint_sizes(&dir, b)?);
        metrics.rows.push(row);
    }
    write_summary(&dir.summary(), &metrics, exp, serde_json::json!({ "checkpoints": sizes }))?;
    Ok(metrics)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BaselineMode {
    /// Sequential training on raw batches without replay.
    Finetune,
    /// One training run on the union of all batches.
    Joint,
}

impl std::str::FromStr for BaselineMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "finetune" => Ok(Self::Finetune),
            "joint" => Ok(Self::Joint),
            other => Err(Error::Config(format!("unknown baseline mode {other:?}"))),
        }
    }
}

impl std::fmt::Display for BaselineMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Finetune => "finetune",
            Self::Joint => "joint",
        })
    }
}

/// Classifier-only reference runs. Writes `metrics.csv` and `summary.json`
/// into `out` when given.
pub fn run_baseline(exp: &Experiment, mode: BaselineMode, out: Option<&Path>) -> Result<RunMetrics> {
    let cfg = &exp.config;
    let clf_cfg = cfg.classifier.finetune();
    let mut state = ClassifierState::new(
        exp.pixels(),
        clf_cfg.hidden,
        CLASSES,
        &mut seeds::stream(cfg.seed, seeds::CLF_INIT),
    )?;
    let mut metrics = RunMetrics::new(&mode.to_string(), exp);
    let mut ledger = BatchLedger::new();
    let train = |state: &mut ClassifierState, ledger: &BatchLedger, data: &Dataset, b: u64| {
        state.train_batch_classifier(
            &data.images,
            &data.labels,
            None,
            ledger,
            &clf_cfg,
            &mut seeds::batch_stream(cfg.seed, seeds::CLF_TRAIN, b),
            &mut seeds::batch_stream(cfg.seed, seeds::CLF_REPLAY, b),
        )
    };
    match mode {
        BaselineMode::Finetune => {
            for batch in &exp.scenario.batches {
                let started = Instant::now();
                ledger.push(batch.data.len(), batch.classes.clone())?;
                train(&mut state, &ledger, &batch.data, batch.batch)?;
                let wall = started.elapsed().as_secs_f64();
                metrics.rows.push(batch_metrics(exp, &state, &ledger, None, wall)?);
            }
        }
        BaselineMode::Joint => {
            let started = Instant::now();
            let parts: Vec<&Dataset> = exp.scenario.batches.iter().map(|b| &b.data).collect();
            let union = concat_datasets(&parts)?;
            ledger.push(union.len(), exp.scenario.classes())?;
            train(&mut state, &ledger, &union, 1)?;
            let mut row = batch_metrics(exp, &state, &ledger, None, started.elapsed().as_secs_f64())?;
            row.batch = exp.scenario.len() as u64;
            metrics.rows.push(row);
        }
    }
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        let dir = RunDir::new(out);
        write(&dir.config(), &cfg.to_text())?;
        write(&dir.metrics(), &metrics.to_csv())?;
        write(&dir.timing(), &metrics.timing_csv())?;
        write_summary(&dir.summary(), &metrics, exp, serde_json::Value::Null)?;
    }
    Ok(metrics)
}

fn concat_datasets(parts: &[&Dataset]) -> Result<Dataset> {
    let first = parts.first().ok_or(Error::EmptyTestSet)?;
    let views: Vec<_> = parts.iter().map(|d| d.images.view()).collect();
    let images = ndarray::concatenate(ndarray::Axis(0), &views)
        .map_err(|e| Error::ShapeMismatch(e.to_string()))?;
    let labels = parts.iter().flat_map(|d| d.labels.iter().copied()).collect();
    Dataset::new(images, labels, first.rows, first.cols)
}

/// The three classifier variants compared by [`ablation`], in order.
pub fn ablation_variants(base: &ClassifierConfig) -> [(&'static str, ClassifierConfig); 3] {
    let with = |preprocess, soft_targets| ClassifierConfig {
        preprocess,
        soft_targets,
        ..base.clone()
    };
    [
        ("reference", with(false, false)),
        ("autoencoder_preprocessing", with(true, false)),
        ("soft_targets", with(true, true)),
    ]
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationRow {
    pub variant: String,
    pub preprocess: bool,
    pub soft_targets: bool,
    pub seeds: Vec<u64>,
    pub final_acc: Vec<f64>,
}

impl AblationRow {
    pub fn mean(&self) -> f64 {
        self.final_acc.iter().sum::<f64>() / self.final_acc.len().max(1) as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AblationTable {
    pub rows: Vec<AblationRow>,
    /// Full BinPlay metrics of the last variant, one entry per seed.
    #[serde(skip)]
    pub binplay: Vec<RunMetrics>,
}

impl AblationTable {
    pub fn to_csv(&self) -> String {
        let seeds = self.rows.first().map(|r| r.seeds.clone()).unwrap_or_default();
        let mut out = String::from("variant,preprocess,soft_targets,mean_final_acc");
        for s in &seeds {
            write!(out, ",acc_seed{s}").expect("string write");
        }
        out.push('\n');
        for r in &self.rows {
            write!(out, "{},{},{},{}", r.variant, r.preprocess, r.soft_targets, r.mean()).expect("string write");
            for a in &r.final_acc {
                write!(out, ",{a}").expect("string write");
            }
            out.push('\n');
        }
        out
    }
}

/// Runs the three variants side by side for every seed. The variants share
/// one autoencoder per seed, so they differ only in how the classifier is
/// trained; the last variant is exactly [`run_binplay`].
pub fn ablation(exp: &Experiment, train: &Dataset, seed_list: &[u64], out: Option<&Path>) -> Result<AblationTable> {
    let variants = ablation_variants(&exp.config.classifier);
    let configs: Vec<ClassifierConfig> = variants.iter().map(|(_, c)| c.clone()).collect();
    let mut rows: Vec<AblationRow> = variants
        .iter()
        .map(|(name, c)| AblationRow {
            variant: name.to_string(),
            preprocess: c.preprocess,
            soft_targets: c.soft_targets,
            seeds: seed_list.to_vec(),
            final_acc: Vec::new(),
        })
        .collect();
    let mut binplay = Vec::new();
    for &seed in seed_list {
        let seeded = exp.with_seed(seed, train)?;
        let per_track = run_tracks(&seeded, &configs)?;
        for (row, m) in rows.iter_mut().zip(&per_track) {
            row.final_acc.push(m.final_accuracy().unwrap_or(0.0));
        }
        binplay.push(per_track.into_iter().last().expect("three tracks"));
    }
    let table = AblationTable { rows, binplay };
    if let Some(out) = out {
        fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
        write(&out.join("ablation.csv"), &table.to_csv())?;
    }
    Ok(table)
}

/// Plays the whole scenario with one autoencoder and several classifiers,
/// returning metrics per classifier. Nothing is written to disk.
pub fn run_tracks(exp: &Experiment, tracks: &[ClassifierConfig]) -> Result<Vec<RunMetrics>> {
    let mut session = Session::new(exp, tracks)?;
    let mut metrics: Vec<RunMetrics> = tracks.iter().map(|_| RunMetrics::new("binplay", exp)).collect();
    for batch in &exp.scenario.batches {
        let outcome = session.step(exp, batch)?;
        for (m, row) in metrics.iter_mut().zip(outcome.metrics) {
            m.rows.push(row);
        }
    }
    Ok(metrics)
}

/// Serialized bytes of each component after one batch.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct MemoryRow {
    pub batch: u64,
    pub encoder_bytes: usize,
    pub decoder_bytes: usize,
    pub classifier_bytes: usize,
}

impl MemoryRow {
    /// Bytes that must be kept between batches to continue learning and replaying.
    pub fn stored_bytes(&self) -> usize {
        self.decoder_bytes + self.classifier_bytes
    }

    pub fn total_bytes(&self) -> usize {
        self.encoder_bytes + self.decoder_bytes + self.classifier_bytes
    }
}

pub fn memory_csv(rows: &[MemoryRow]) -> String {
    let mut out = String::from("batch,encoder_bytes,decoder_bytes,classifier_bytes,stored_bytes,total_bytes\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            r.batch,
            r.encoder_bytes,
            r.decoder_bytes,
            r.classifier_bytes,
            r.stored_bytes(),
            r.total_bytes()
        )
        .expect("string write");
    }
    out
}

/// Checkpoint sizes per batch of a run directory. Fails if the decoder's
/// size ever changes.
pub fn memory_report(run: &Path) -> Result<Vec<MemoryRow>> {
    let dir = RunDir::new(run);
    let config = dir.load_config()?;
    let ledger = dir.load_ledger()?;
    let code_len = config.layout.build()?.len();
    let mut rows: Vec<MemoryRow> = Vec::new();
    for b in 1..=ledger.len() as u64 {
        let ae_path = dir.ae_checkpoint(b);
        if !ae_path.exists() {
            return Err(Error::MissingCheckpoint(ae_path));
        }
        let clf_path = dir.clf_checkpoint(b);
        if !clf_path.exists() {
            return Err(Error::MissingCheckpoint(clf_path));
        }
        let (encoder, decoder) = crate::replay::split_autoencoder(crate::nn::ModelParams::load(&ae_path)?, code_len)?;
        let classifier = crate::nn::ModelParams::load(&clf_path)?;
        let row = MemoryRow {
            batch: b,
            encoder_bytes: checkpoint_len(&encoder.shape_signature()),
            decoder_bytes: checkpoint_len(&decoder.shape_signature()),
            classifier_bytes: checkpoint_len(&classifier.shape_signature()),
        };
        if let Some(first) = rows.first() {
            if first.decoder_bytes != row.decoder_bytes {
                return Err(Error::InvalidCheckpoint(format!(
                    "decoder grew from {} to {} bytes at batch {b}",
                    first.decoder_bytes, row.decoder_bytes
                )));
            }
        }
        rows.push(row);
    }
    Ok(rows)
}

/// Binary PGM of a square single-channel image with pixels in `[0, 1]`.
pub fn pgm_bytes(pixels: &[f64], width: usize, height: usize) -> Vec<u8> {
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend(pixels.iter().map(|&v| (255.0 * v.clamp(0.0, 1.0)).round() as u8));
    out
}

/// Writes the reconstruction of each index, as decoded after batch `batch`
/// (default: the last completed one), to `dest/recon_<batch>_<index>.pgm`.
pub fn dump_images(run: &Path, indices: &[u64], batch: Option<u64>, dest: &Path) -> Result<Vec<PathBuf>> {
    let dir = RunDir::new(run);
    let config = dir.load_config()?;
    let ledger = dir.load_ledger()?;
    let b = batch.unwrap_or(ledger.len() as u64);
    if b == 0 || b > ledger.len() as u64 {
        return Err(Error::IndexOutOfRange {
            index: b,
            total: ledger.len() as u64,
        });
    }
    let mut seen = BatchLedger::new();
    for r in &ledger.records()[..b as usize] {
        seen.push(r.len(), r.classes.clone())?;
    }
    let ae = dir.load_autoencoder(&config, &seen, b)?;
    let side = (ae.pixels() as f64).sqrt().round() as usize;
    if side * side != ae.pixels() {
        return Err(Error::ShapeMismatch(format!("{} pixels is not a square image", ae.pixels())));
    }
    fs::create_dir_all(dest).map_err(|e| Error::io(dest, e))?;
    let mut written = Vec::with_capacity(indices.len());
    for &i in indices {
        let image = ae.reconstruct(i, &seen)?;
        let path = dest.join(format!("recon_{b}_{i}.pgm"));
        fs::write(&path, pgm_bytes(&image, side, side)).map_err(|e| Error::io(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

/// Accuracy of the classifier checkpoint after `batch` (default: last).
pub fn evaluate_run(run: &Path, batch: Option<u64>, test: &Dataset) -> Result<(u64, Evaluation)> {
    let dir = RunDir::new(run);
    let ledger = dir.load_ledger()?;
    let b = batch.unwrap_or(ledger.len() as u64);
    let path = dir.clf_checkpoint(b);
    if !path.exists() {
        return Err(Error::MissingCheckpoint(path));
    }
    Ok((b, ClassifierState::load(&path)?.evaluate(&test.images, &test.labels)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_header_and_quantization() {
        let bytes = pgm_bytes(&[0.0, 0.5, 1.0, 0.2], 2, 2);
        assert!(bytes.starts_with(b"P5\n2 2\n255\n"));
        assert_eq!(&bytes[bytes.len() - 4..], &[0, 128, 255, 51]);
    }

    #[test]
    fn memory_row_arithmetic() {
        let r = MemoryRow {
            batch: 1,
            encoder_bytes: 10,
            decoder_bytes: 20,
            classifier_bytes: 5,
        };
        assert_eq!((r.stored_bytes(), r.total_bytes()), (25, 35));
        assert!(memory_csv(&[r]).ends_with("1,10,20,5,25,35\n"));
    }

    #[test]
    fn baseline_mode_parsing() {
        assert_eq!("joint".parse::<BaselineMode>().unwrap(), BaselineMode::Joint);
        assert_eq!(BaselineMode::Finetune.to_string(), "finetune");
        assert!("other".parse::<BaselineMode>().is_err());
    }
}
