//! Two-stage training: manifest-driven feature extraction, replay sampling,
//! epoch/batch iteration with Adam, per-stage checkpoints and test scoring.

use crate::checkpoint::Checkpoint;
use crate::classifier::{adam_step, backward, bce_loss, forward, AdamConfig, AdamState, ClassifierError, MlpParams};
use crate::config::{PipelineConfig, StageConfig};
use crate::evaluation::ScoredSample;
use crate::fusion::{fit_normalizer, fuse, FusionError, FusionNormalizer};
use crate::manifest::{Label, ManifestRecord, Split, Stage};
use crate::preprocess::{apply_degradation, decode_image, standardize, DegradationConfig, NormalizedImage, PreprocessError};
use crate::semantic::{EncoderHandle, SemanticEmbedding, SemanticError};
use crate::spectral::{extract_spectral, ReductionMode, SpectralError, SpectralFeatureVector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;
use thiserror::Error;

/// Batches whose features are extracted together before their updates run.
const BATCHES_PER_CHUNK: usize = 8;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("stage {0} has no training records")]
    EmptyTrainSet(u8),
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {source}")]
    Image { path: PathBuf, source: PreprocessError },
    #[error("{path}: {source}")]
    Spectral { path: PathBuf, source: SpectralError },
    #[error("{path}: {source}")]
    Semantic { path: PathBuf, source: SemanticError },
    #[error(transparent)]
    Fusion(#[from] FusionError),
    #[error(transparent)]
    Classifier(#[from] ClassifierError),
    #[error("invalid training configuration: {0}")]
    Config(String),
}

impl PipelineError {
    /// True for errors caused by input data (unreadable or undecodable images).
    pub fn is_data_error(&self) -> bool {
        matches!(self, Self::EmptyTrainSet(_) | Self::Read { .. } | Self::Image { .. } | Self::Spectral { .. })
    }
}

/// SplitMix64 finalizer, used to derive independent stream seeds.
fn mix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

// stream tags
const TAG_SHUFFLE: u64 = 1;
const TAG_DEGRADE: u64 = 2;
const TAG_REPLAY: u64 = 3;
const TAG_STAGE2_SET: u64 = 4;
const TAG_HOLDOUT: u64 = 5;
const TAG_INIT: u64 = 6;

/// Number of records replayed from a stage of `n`: `ceil(fraction * n)`.
pub fn replay_count(n: usize, fraction: f64) -> usize {
    let exact = fraction * n as f64;
    let nearest = exact.round();
    // products like 0.05 * 300 land a hair above the integer in binary
    let k = if (exact - nearest).abs() <= 1e-9 * nearest.max(1.0) { nearest } else { exact.ceil() };
    (k as usize).min(n)
}

/// Uniform sample without replacement of `replay_count(n)` records,
/// stratified by label (largest-remainder allocation). Selected records keep
/// their input order.
pub fn replay_sample(records: &[ManifestRecord], fraction: f64, seed: u64) -> Vec<ManifestRecord> {
    let total = replay_count(records.len(), fraction);
    if total == 0 {
        return Vec::new();
    }
    let classes: Vec<Vec<usize>> = [Label::Real, Label::Fake]
        .iter()
        .map(|&l| (0..records.len()).filter(|&i| records[i].label == l).collect())
        .collect();
    let n = records.len() as f64;
    let quotas: Vec<f64> = classes.iter().map(|c| total as f64 * c.len() as f64 / n).collect();
    let mut alloc: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut remaining = total - alloc.iter().sum::<usize>();
    let mut by_remainder: Vec<usize> = (0..classes.len()).collect();
    by_remainder.sort_by(|&a, &b| (quotas[b] - quotas[b].floor()).total_cmp(&(quotas[a] - quotas[a].floor())));
    for &c in by_remainder.iter().cycle().take(4 * classes.len()) {
        if remaining == 0 {
            break;
        }
        if alloc[c] < classes[c].len() {
            alloc[c] += 1;
            remaining -= 1;
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_REPLAY]));
    let mut chosen: Vec<usize> = classes
        .iter()
        .zip(&alloc)
        .flat_map(|(members, &k)| {
            rand::seq::index::sample(&mut rng, members.len(), k).into_iter().map(|j| members[j]).collect::<Vec<_>>()
        })
        .collect();
    chosen.sort_unstable();
    chosen.into_iter().map(|i| records[i].clone()).collect()
}

/// Replay sample of the stage-1 set plus every new stage-2 record, shuffled.
pub fn build_stage2_set(
    stage1: &[ManifestRecord],
    stage2_new: &[ManifestRecord],
    cfg: &StageConfig,
    seed: u64,
) -> Vec<ManifestRecord> {
    let mut set = replay_sample(stage1, cfg.replay_fraction, seed);
    set.extend_from_slice(stage2_new);
    set.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_STAGE2_SET])));
    set
}

/// Splits off a seeded `ceil(fraction * n)` validation subset (never the
/// whole list). Both halves keep input order.
pub fn holdout_split(records: &[ManifestRecord], fraction: f64, seed: u64) -> (Vec<ManifestRecord>, Vec<ManifestRecord>) {
    if records.len() < 2 {
        return (records.to_vec(), Vec::new());
    }
    let k = replay_count(records.len(), fraction).min(records.len() - 1);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_HOLDOUT]));
    let mut is_val = vec![false; records.len()];
    for i in rand::seq::index::sample(&mut rng, records.len(), k) {
        is_val[i] = true;
    }
    let (val, train): (Vec<_>, Vec<_>) = records.iter().cloned().zip(is_val).partition(|(_, v)| *v);
    (train.into_iter().map(|(r, _)| r).collect(), val.into_iter().map(|(r, _)| r).collect())
}

/// Decodes and standardizes one image file.
pub fn load_image(path: &Path) -> Result<NormalizedImage, PipelineError> {
    let bytes = std::fs::read(path).map_err(|source| PipelineError::Read { path: path.to_path_buf(), source })?;
    let raw = decode_image(&bytes).map_err(|source| PipelineError::Image { path: path.to_path_buf(), source })?;
    Ok(standardize(&raw))
}

/// Spectral features and embedding of one record, optionally degraded with
/// a dedicated seed.
pub fn record_features(
    path: &Path,
    mode: ReductionMode,
    encoder: &EncoderHandle,
    degradation: Option<(&DegradationConfig, u64)>,
) -> Result<(SpectralFeatureVector, SemanticEmbedding), PipelineError> {
    let mut img = load_image(path)?;
    if let Some((cfg, seed)) = degradation {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        img = apply_degradation(&img, cfg, &mut rng)
            .map_err(|source| PipelineError::Image { path: path.to_path_buf(), source })?
            .0;
    }
    let spec = extract_spectral(&img, mode).map_err(|source| PipelineError::Spectral { path: path.to_path_buf(), source })?;
    let sem = encoder.encode(&img).map_err(|source| PipelineError::Semantic { path: path.to_path_buf(), source })?;
    Ok((spec, sem))
}

/// Probability that the image at `path` is generated. No degradation.
pub fn score_image(path: &Path, ckpt: &Checkpoint, encoder: &EncoderHandle) -> Result<f64, PipelineError> {
    let (spec, sem) = record_features(path, ckpt.config.features.reduction_mode, encoder, None)?;
    let x = fuse(&spec, &sem, &ckpt.normalizer)?;
    Ok(forward(&ckpt.params, &x)?.0)
}

/// Probability for an already standardized image.
pub fn score_normalized(img: &NormalizedImage, ckpt: &Checkpoint, encoder: &EncoderHandle) -> Result<f64, PipelineError> {
    let here = PathBuf::from("<memory>");
    let spec = extract_spectral(img, ckpt.config.features.reduction_mode)
        .map_err(|source| PipelineError::Spectral { path: here.clone(), source })?;
    let sem = encoder.encode(img).map_err(|source| PipelineError::Semantic { path: here, source })?;
    let x = fuse(&spec, &sem, &ckpt.normalizer)?;
    Ok(forward(&ckpt.params, &x)?.0)
}

/// Scores every record (in parallel, output in input order).
pub fn score_records(records: &[ManifestRecord], ckpt: &Checkpoint, encoder: &EncoderHandle) -> Result<Vec<ScoredSample>, PipelineError> {
    records
        .par_iter()
        .map(|r| {
            let score = score_image(&r.image_path, ckpt, encoder)?;
            Ok(ScoredSample::new(score, r.label.target() as u8, r.generator.clone()))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub stage: u8,
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
}

impl TrainReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stage,epoch,train_loss,val_loss,seconds\n");
        for e in &self.epochs {
            let val = e.val_loss.map(|v| crate::evaluation::fmt_sig(v, 9)).unwrap_or_default();
            writeln!(
                out,
                "{},{},{},{},{:.3}",
                e.stage,
                e.epoch,
                crate::evaluation::fmt_sig(e.train_loss, 9),
                val,
                e.seconds
            )
            .expect("writing to String");
        }
        out
    }

    pub fn stage_losses(&self, stage: u8) -> Vec<f64> {
        self.epochs.iter().filter(|e| e.stage == stage).map(|e| e.train_loss).collect()
    }
}

#[derive(Debug, Clone)]
pub struct StageOutcome {
    pub checkpoint: Checkpoint,
    /// Test-set scores after the stage; `None` without test records.
    pub test_scores: Option<Vec<ScoredSample>>,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub stage1: StageOutcome,
    pub stage2: StageOutcome,
    pub report: TrainReport,
}

/// Records of `stage` with `split`, in manifest order.
pub fn select(records: &[ManifestRecord], stage: Stage, split: Split) -> Vec<ManifestRecord> {
    records.iter().filter(|r| r.stage == stage && r.split == split).cloned().collect()
}

struct Trainer<'a> {
    cfg: &'a PipelineConfig,
    encoder: &'a EncoderHandle,
    mode: ReductionMode,
}

impl Trainer<'_> {
    fn clean_features(&self, records: &[ManifestRecord]) -> Result<Vec<(SpectralFeatureVector, SemanticEmbedding)>, PipelineError> {
        records.par_iter().map(|r| record_features(&r.image_path, self.mode, self.encoder, None)).collect()
    }

    fn fused_clean(&self, records: &[ManifestRecord], norm: &FusionNormalizer) -> Result<Vec<(Vec<f64>, f64)>, PipelineError> {
        self.clean_features(records)?
            .iter()
            .zip(records)
            .map(|((s, e), r)| Ok((fuse(s, e, norm)?, r.label.target())))
            .collect()
    }

    fn mean_loss(params: &MlpParams, data: &[(Vec<f64>, f64)]) -> Result<Option<f64>, PipelineError> {
        if data.is_empty() {
            return Ok(None);
        }
        let mut total = 0.0;
        for (x, y) in data {
            total += bce_loss(forward(params, x)?.1.logit, *y);
        }
        Ok(Some(total / data.len() as f64))
    }

    #[allow(clippy::too_many_arguments)]
    fn run_stage(
        &self,
        stage: Stage,
        train: &[ManifestRecord],
        val: &[ManifestRecord],
        epochs: usize,
        params: &mut MlpParams,
        norm: &FusionNormalizer,
        cached: Option<Vec<(Vec<f64>, f64)>>,
    ) -> Result<Vec<EpochRecord>, PipelineError> {
        let t = &self.cfg.training;
        let seed = self.cfg.seed;
        let sn = u64::from(stage.number());
        let val_data = self.fused_clean(val, norm)?;
        let cached = match (cached, t.feature_cache) {
            (Some(c), _) => Some(c),
            (None, true) => Some(self.fused_clean(train, norm)?),
            (None, false) => None,
        };
        let mut adam = AdamState::for_params(params, AdamConfig { lr: t.learning_rate, ..AdamConfig::default() });
        let mut records = Vec::with_capacity(epochs);
        for epoch in 1..=epochs {
            let started = Instant::now();
            let mut order: Vec<usize> = (0..train.len()).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, &[TAG_SHUFFLE, sn, epoch as u64])));
            let mut loss_sum = 0.0;
            for chunk in order.chunks(t.batch_size * BATCHES_PER_CHUNK) {
                let feats: Vec<(Vec<f64>, f64)> = match &cached {
                    Some(c) => chunk.iter().map(|&i| c[i].clone()).collect(),
                    None => chunk
                        .par_iter()
                        .map(|&i| {
                            let rec = &train[i];
                            let dseed = derive_seed(seed, &[TAG_DEGRADE, sn, epoch as u64, i as u64]);
                            let (s, e) = record_features(&rec.image_path, self.mode, self.encoder, Some((&self.cfg.degradation, dseed)))?;
                            Ok((fuse(&s, &e, norm)?, rec.label.target()))
                        })
                        .collect::<Result<_, PipelineError>>()?,
                };
                for batch in feats.chunks(t.batch_size) {
                    let view: Vec<(&[f64], f64)> = batch.iter().map(|(x, y)| (x.as_slice(), *y)).collect();
                    let (loss, grad) = backward(params, &view)?;
                    adam_step(params.as_mut_slice(), grad.as_slice(), &mut adam)?;
                    params.round_to_f32();
                    loss_sum += loss * batch.len() as f64;
                }
            }
            let train_loss = loss_sum / train.len() as f64;
            let val_loss = Self::mean_loss(params, &val_data)?;
            log::info!(
                "stage {} epoch {epoch}/{epochs}: train_loss {train_loss:.6} val_loss {}",
                stage.number(),
                val_loss.map_or("-".to_string(), |v| format!("{v:.6}"))
            );
            records.push(EpochRecord { stage: stage.number(), epoch, train_loss, val_loss, seconds: started.elapsed().as_secs_f64() });
        }
        Ok(records)
    }

    fn evaluate(&self, test: &[ManifestRecord], ckpt: &Checkpoint) -> Result<Option<Vec<ScoredSample>>, PipelineError> {
        if test.is_empty() {
            return Ok(None);
        }
        score_records(test, ckpt, self.encoder).map(Some)
    }

    fn validation_split(&self, stage: Stage, train: Vec<ManifestRecord>, all: &[ManifestRecord]) -> (Vec<ManifestRecord>, Vec<ManifestRecord>) {
        let val = select(all, stage, Split::Val);
        if !val.is_empty() {
            return (train, val);
        }
        holdout_split(&train, self.cfg.training.val_fraction, derive_seed(self.cfg.seed, &[u64::from(stage.number())]))
    }
}

/// Runs both training stages. `records` supplies train/val records of both
/// stages; `test` is scored after each stage.
pub fn run_training(
    records: &[ManifestRecord],
    test: &[ManifestRecord],
    cfg: &PipelineConfig,
    encoder: &EncoderHandle,
) -> Result<TrainOutcome, PipelineError> {
    cfg.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
    let trainer = Trainer { cfg, encoder, mode: cfg.features.reduction_mode };
    let t = &cfg.training;

    let stage1_all = select(records, Stage::Stage1, Split::Train);
    if stage1_all.is_empty() {
        return Err(PipelineError::EmptyTrainSet(1));
    }
    let (stage1_train, stage1_val) = trainer.validation_split(Stage::Stage1, stage1_all.clone(), records);

    // normalizer statistics come from clean stage-1 training features
    let clean = trainer.clean_features(&stage1_train)?;
    let normalizer = fit_normalizer(clean.iter().map(|(s, _)| s))?.to_storage_precision();
    let cached = if t.feature_cache {
        Some(
            clean
                .iter()
                .zip(&stage1_train)
                .map(|((s, e), r)| Ok((fuse(s, e, &normalizer)?, r.label.target())))
                .collect::<Result<Vec<_>, PipelineError>>()?,
        )
    } else {
        None
    };
    drop(clean);

    let input_dim = normalizer.dim() + crate::semantic::EMBEDDING_DIM;
    let mut params = MlpParams::init(input_dim, t.hidden_units, derive_seed(cfg.seed, &[TAG_INIT]));
    params.round_to_f32();

    let mut report = TrainReport::default();
    report.epochs.extend(trainer.run_stage(Stage::Stage1, &stage1_train, &stage1_val, t.stage1_epochs, &mut params, &normalizer, cached)?);
    let ckpt1 = Checkpoint::new(params.clone(), normalizer.clone(), cfg);
    let eval1 = trainer.evaluate(test, &ckpt1)?;

    let stage2_new = select(records, Stage::Stage2, Split::Train);
    let stage2_set = build_stage2_set(&stage1_all, &stage2_new, t, cfg.seed);
    let (stage2_train, stage2_val) = trainer.validation_split(Stage::Stage2, stage2_set, records);
    if stage2_train.is_empty() {
        return Err(PipelineError::EmptyTrainSet(2));
    }
    report.epochs.extend(trainer.run_stage(Stage::Stage2, &stage2_train, &stage2_val, t.stage2_epochs, &mut params, &normalizer, None)?);
    let ckpt2 = Checkpoint::new(params, normalizer, cfg);
    let eval2 = trainer.evaluate(test, &ckpt2)?;

    Ok(TrainOutcome {
        stage1: StageOutcome { checkpoint: ckpt1, test_scores: eval1 },
        stage2: StageOutcome { checkpoint: ckpt2, test_scores: eval2 },
        report,
    })
}
