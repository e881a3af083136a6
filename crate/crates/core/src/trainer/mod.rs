//! Training runs: single-framework, multi-task and fine-tuning, with
//! per-framework early stopping.

pub mod ensemble;
pub mod search;
pub mod split;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unimrp_tensor::{clip_gradients, AdamConfig, AdamState, ParamGrads, ParamStore};

pub use ensemble::{build_ensemble, combine_scores, Combination, EnsembleMember, EnsembleSpec};
pub use search::{random_search, SearchSpace};
pub use split::{split_dataset, DataSplit, SplitConfig};

use crate::error::{Error, Result};
use crate::evaluator::{mrp_f1, sdp_labeled_f1_corpus, GraphCounts, FrameworkScore};
use crate::graph::{Framework, MrpGraph, Sentence};
use crate::model::{Embeddings, ModelConfig, MultitaskWeights, Objective, Parser, Prepared};
use crate::nn::Ctx;
use crate::parallel::{self, Execution};
use crate::sdp::SdpLossWeights;

/// Optimizer and schedule of one training stage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Stage {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epochs: usize,
    pub batch_size: usize,
}

impl Default for Stage {
    fn default() -> Self {
        Stage {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 50,
            batch_size: 64,
        }
    }
}

impl Stage {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            beta1: self.beta1,
            beta2: self.beta2,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("learning rate must be positive, got {}", self.lr)));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return Err(Error::config(format!("Adam betas ({}, {}) outside [0, 1)", self.beta1, self.beta2)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch size must be positive"));
        }
        Ok(())
    }
}

/// Per-framework stages for fine-tuning a multi-task model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FineTuneConfig {
    /// Use the learning rate and betas of the original DM/PSD fine-tuning
    /// runs instead of the tuned single-framework values.
    pub bug_compat: bool,
    pub sdp: Stage,
    pub sdp_label: f64,
    pub ucca: Stage,
    pub amr: Stage,
    pub eds: Stage,
}

impl Default for FineTuneConfig {
    fn default() -> Self {
        FineTuneConfig {
            bug_compat: false,
            sdp: Stage {
                lr: 0.000858,
                beta1: 0.9,
                beta2: 0.999,
                epochs: 50,
                batch_size: 64,
            },
            sdp_label: 0.025,
            ucca: Stage {
                lr: 0.00117,
                beta1: 0.0,
                beta2: 0.95,
                epochs: 40,
                batch_size: 100,
            },
            amr: Stage {
                lr: 0.00059,
                beta1: 0.0,
                beta2: 0.95,
                epochs: 50,
                batch_size: 64,
            },
            eds: Stage::default(),
        }
    }
}

impl FineTuneConfig {
    pub fn stage(&self, fw: Framework) -> Stage {
        match fw {
            Framework::Dm | Framework::Psd if self.bug_compat => Stage {
                lr: 0.001,
                beta1: 0.0,
                beta2: 0.95,
                ..self.sdp
            },
            Framework::Dm | Framework::Psd => self.sdp,
            Framework::Ucca => self.ucca,
            Framework::Amr => self.amr,
            Framework::Eds => self.eds,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub name: String,
    pub seed: u64,
    /// Rescales split sizes and epoch counts.
    pub scale: f64,
    /// Worker threads; 0 lets the pool decide, 1 runs sequentially.
    pub jobs: usize,
    /// Global gradient-norm bound; 0 disables clipping.
    pub clip: f64,
    pub stage: Stage,
    /// Stage of the EDS anchor network after its encoder transfer.
    pub eds_stage: Stage,
    pub sdp: SdpLossWeights,
    pub multitask: MultitaskWeights,
    pub fine_tune: FineTuneConfig,
    pub split: SplitConfig,
    pub model: ModelConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            name: "run".into(),
            seed: 1,
            scale: 1.0,
            jobs: 0,
            clip: 5.0,
            stage: Stage::default(),
            eds_stage: Stage::default(),
            sdp: SdpLossWeights::default(),
            multitask: MultitaskWeights::default(),
            fine_tune: FineTuneConfig::default(),
            split: SplitConfig::default(),
            model: ModelConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Settings of the multi-task pretraining run.
    pub fn multitask() -> Self {
        let mut c = TrainConfig::default();
        c.stage = Stage {
            lr: 0.00006,
            beta1: 0.9,
            beta2: 0.999,
            epochs: 60,
            batch_size: 128,
        };
        c.sdp.label = 0.15;
        let e = &mut c.model.encoder;
        (e.word_drop, e.pos_drop, e.lemma_drop, e.dropout) = (0.2, 0.2, 0.2, 0.5);
        c.model.sdp.input_dropout = 0.45;
        c.model.sdp.edge_dropout = 0.25;
        c.model.sdp.label_dropout = 0.33;
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: TrainConfig = toml::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::config(format!("scale must be positive, got {}", self.scale)));
        }
        if !(self.clip >= 0.0) {
            return Err(Error::config(format!("clip norm must be non-negative, got {}", self.clip)));
        }
        for s in [self.stage, self.eds_stage, self.fine_tune.sdp, self.fine_tune.ucca, self.fine_tune.amr, self.fine_tune.eds] {
            s.validate()?;
        }
        self.sdp.validate()?;
        self.multitask.validate()?;
        self.model.encoder.validate()?;
        self.model.ucca.weights.validate()?;
        self.model.amr.weights.validate()
    }

    /// Epoch count after scaling, at least one.
    pub fn epochs(&self, stage: &Stage) -> usize {
        ((stage.epochs as f64 * self.scale).round() as usize).max(1)
    }

    pub fn execution(&self) -> Execution {
        Execution::from_jobs(self.jobs)
    }
}

/// Seed for a derived random stream.
pub fn derive_seed(seed: u64, parts: &[u64]) -> u64 {
    let mut x = seed ^ 0x9e37_79b9_7f4a_7c15;
    for &p in parts {
        x = x.wrapping_add(p.wrapping_add(1).wrapping_mul(0xbf58_476d_1ce4_e5b9));
        x = (x ^ (x >> 30)).wrapping_mul(0x94d0_49bb_1331_11eb);
        x ^= x >> 31;
    }
    x
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Goal {
    Maximize,
    Minimize,
}

/// Tracks the best epoch of one validation quantity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EarlyStopper {
    pub goal: Goal,
    pub best: Option<(usize, f64)>,
    pub history: Vec<(usize, f64)>,
}

impl EarlyStopper {
    pub fn new(goal: Goal) -> Self {
        EarlyStopper {
            goal,
            best: None,
            history: Vec::new(),
        }
    }

    /// Records a value; true when it is strictly better than every earlier
    /// one. Non-finite values never win.
    pub fn observe(&mut self, epoch: usize, value: f64) -> bool {
        self.history.push((epoch, value));
        if !value.is_finite() {
            return false;
        }
        let better = match self.best {
            None => true,
            Some((_, b)) => match self.goal {
                Goal::Maximize => value > b,
                Goal::Minimize => value < b,
            },
        };
        if better {
            self.best = Some((epoch, value));
        }
        better
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best.map(|b| b.0)
    }
}

/// What a tracked checkpoint is selected by.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum Criterion {
    /// Labeled dependency F1 of the framework's predictions.
    SdpF1(Framework),
    /// MRP all-component F1 of the framework's predictions.
    MrpF1(Framework),
    /// Validation objective restricted to one framework.
    Loss(Framework),
    /// Validation objective over every framework.
    TotalLoss,
}

impl Criterion {
    pub fn goal(&self) -> Goal {
        match self {
            Criterion::SdpF1(_) | Criterion::MrpF1(_) => Goal::Maximize,
            Criterion::Loss(_) | Criterion::TotalLoss => Goal::Minimize,
        }
    }

    pub fn key(&self) -> String {
        match self {
            Criterion::SdpF1(fw) | Criterion::MrpF1(fw) | Criterion::Loss(fw) => fw.as_str().to_string(),
            Criterion::TotalLoss => "total".to_string(),
        }
    }
}

/// A retained parameter snapshot.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub epoch: usize,
    pub value: f64,
    pub store: ParamStore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub stage: String,
    pub epoch: usize,
    pub train_loss: f64,
    pub sentences: usize,
    pub validation: BTreeMap<String, f64>,
    pub best: BTreeMap<String, usize>,
}

/// Result of a training run.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub parser: Parser,
    /// Best checkpoint per tracked key (framework name or `total`).
    pub best: BTreeMap<String, Checkpoint>,
    pub last: ParamStore,
    pub history: Vec<EpochRecord>,
}

impl TrainedModel {
    /// Parameters used to predict each framework.
    pub fn stores(&self) -> BTreeMap<Framework, ParamStore> {
        self.parser
            .frameworks
            .iter()
            .map(|&fw| {
                let s = self.best.get(fw.as_str()).map(|c| &c.store).unwrap_or(&self.last);
                (fw, s.clone())
            })
            .collect()
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        save_bundle(dir, &self.parser, &self.stores(), &self.best)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
struct BundleIndex {
    checkpoints: BTreeMap<Framework, String>,
    selected: BTreeMap<String, (usize, f64)>,
}

/// Writes `model.json`, one parameter file per framework and an index.
pub fn save_bundle(
    dir: &Path,
    parser: &Parser,
    stores: &BTreeMap<Framework, ParamStore>,
    best: &BTreeMap<String, Checkpoint>,
) -> Result<()> {
    fs::create_dir_all(dir)?;
    parser.save_meta(&dir.join("model.json"))?;
    let mut index = BundleIndex::default();
    for (fw, store) in stores {
        let file = format!("{}.ckpt", fw.as_str());
        store.write_checkpoint(BufWriter::new(File::create(dir.join(&file))?))?;
        index.checkpoints.insert(*fw, file);
    }
    for (k, c) in best {
        index.selected.insert(k.clone(), (c.epoch, c.value));
    }
    fs::write(dir.join("bundle.json"), serde_json::to_string_pretty(&index)? + "\n")?;
    Ok(())
}

/// Reads a bundle written by [`save_bundle`].
pub fn load_bundle(dir: &Path) -> Result<(Parser, BTreeMap<Framework, ParamStore>)> {
    let meta = dir.join("model.json");
    if !meta.exists() {
        return Err(Error::model(format!("no model at {}", dir.display())));
    }
    let parser = Parser::load_meta(&meta)?;
    let index: BundleIndex = serde_json::from_reader(BufReader::new(File::open(dir.join("bundle.json"))?))?;
    let mut stores = BTreeMap::new();
    for (fw, file) in index.checkpoints {
        let path = dir.join(&file);
        if !path.exists() {
            return Err(Error::model(format!("missing checkpoint {}", path.display())));
        }
        stores.insert(fw, parser.load_params(&path)?);
    }
    Ok((parser, stores))
}

/// One optimization stage over fixed data.
pub struct Run<'a> {
    pub name: &'a str,
    pub parser: &'a Parser,
    pub objective: Objective,
    pub criteria: Vec<Criterion>,
    pub stage: Stage,
    pub train: &'a [Sentence],
    pub validation: &'a [Sentence],
    pub embeddings: &'a Embeddings,
    pub config: &'a TrainConfig,
    /// Directory for per-epoch checkpoints and the metrics log.
    pub run_dir: Option<PathBuf>,
}

fn prepare_all(parser: &Parser, sentences: &[Sentence], emb: &Embeddings, exec: Execution) -> Result<Vec<Prepared>> {
    parallel::try_map(sentences, exec, |_, s| parser.prepare(s, emb))
}

/// Mean validation quantity of one criterion.
pub fn validation_value(
    parser: &Parser,
    store: &ParamStore,
    objective: &Objective,
    criterion: Criterion,
    sentences: &[Sentence],
    prepared: &[Prepared],
    emb: &Embeddings,
    exec: Execution,
) -> Result<f64> {
    let idx: Vec<usize> = match criterion {
        Criterion::SdpF1(fw) | Criterion::MrpF1(fw) | Criterion::Loss(fw) => {
            (0..sentences.len()).filter(|&i| prepared[i].has(fw) && sentences[i].graph(fw).is_some()).collect()
        }
        Criterion::TotalLoss => (0..sentences.len()).collect(),
    };
    if idx.is_empty() {
        return Ok(f64::NAN);
    }
    match criterion {
        Criterion::Loss(_) | Criterion::TotalLoss => {
            let only = match criterion {
                Criterion::Loss(fw) => Some(fw),
                _ => None,
            };
            let fws = objective.frameworks();
            let values = parallel::try_map(&idx, exec, |_, &i| {
                let l = parser.eval_losses(store, &sentences[i], &prepared[i], emb, &fws)?;
                let terms = objective.terms(&l, only);
                Ok::<_, Error>((!terms.is_empty()).then(|| objective.value(&l, only)))
            })?;
            let present: Vec<f64> = values.into_iter().flatten().collect();
            if present.is_empty() {
                return Ok(f64::NAN);
            }
            Ok(present.iter().sum::<f64>() / present.len() as f64)
        }
        Criterion::SdpF1(fw) | Criterion::MrpF1(fw) => {
            let preds = parallel::try_map(&idx, exec, |_, &i| {
                let s = &sentences[i];
                let sc = parser.scores(store, s, &prepared[i].features, emb, fw)?;
                parser.assemble(s, &sc, fw)
            })?;
            let golds: Vec<&MrpGraph> = idx.iter().map(|&i| sentences[i].graph(fw).expect("filtered")).collect();
            if let Criterion::SdpF1(_) = criterion {
                return Ok(sdp_labeled_f1_corpus(golds.into_iter().zip(preds.iter())));
            }
            let mut total = GraphCounts::default();
            for (g, p) in golds.iter().zip(&preds) {
                total.add(&crate::evaluator::correspond(g, p, Default::default())?.counts);
            }
            Ok(FrameworkScore::from_counts(fw, golds.len(), &total).all.f1)
        }
    }
}

/// Sum of per-sentence gradients over a batch, in input order.
fn batch_gradients(
    run: &Run,
    store: &ParamStore,
    prepared: &[Prepared],
    batch: &[usize],
    epoch: usize,
    exec: Execution,
) -> Result<Option<(f64, usize, ParamGrads)>> {
    let seed = run.config.seed;
    let results = parallel::try_map(batch, exec, |_, &i| {
        let mut ctx = Ctx::train(ChaCha8Rng::seed_from_u64(derive_seed(seed, &[epoch as u64, i as u64])));
        run.parser
            .sentence_gradients(store, &run.train[i], &prepared[i], run.embeddings, &run.objective, &mut ctx)
            .map(|r| r.map(|(v, _, g)| (i, v, g)))
    })?;
    let mut total: Option<ParamGrads> = None;
    let mut loss = 0.0;
    let mut count = 0;
    for (i, v, g) in results.into_iter().flatten() {
        if !v.is_finite() || g.has_nonfinite() {
            return Err(Error::Diverged {
                epoch,
                message: format!("non-finite loss or gradient on sentence {}", run.train[i].id),
            });
        }
        loss += v;
        count += 1;
        match &mut total {
            None => total = Some(g),
            Some(t) => t.merge(&g),
        }
    }
    Ok(total.map(|t| (loss, count, t)))
}

/// Trains from `store`, keeping the best checkpoint of every criterion.
pub fn run_training(run: &Run, mut store: ParamStore) -> Result<TrainedModel> {
    run.objective.validate()?;
    run.stage.validate()?;
    let exec = run.config.execution();
    let prepared = prepare_all(run.parser, run.train, run.embeddings, exec)?;
    let val_prepared = prepare_all(run.parser, run.validation, run.embeddings, exec)?;
    if let Some(dir) = &run.run_dir {
        fs::create_dir_all(dir)?;
    }
    let mut adam = AdamState::new(run.stage.adam());
    let mut stoppers: Vec<(Criterion, EarlyStopper)> =
        run.criteria.iter().map(|&c| (c, EarlyStopper::new(c.goal()))).collect();
    let mut best: BTreeMap<String, Checkpoint> = BTreeMap::new();
    let mut history = Vec::new();
    let epochs = run.config.epochs(&run.stage);
    let mut order: Vec<usize> = (0..run.train.len()).collect();
    for epoch in 1..=epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(run.config.seed, &[u64::MAX, epoch as u64]));
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut epoch_count = 0;
        for batch in order.chunks(run.stage.batch_size) {
            let Some((loss, count, mut grads)) = batch_gradients(run, &store, &prepared, batch, epoch, exec)? else {
                continue;
            };
            grads.scale(1.0 / count as f64);
            if run.config.clip > 0.0 {
                clip_gradients(&mut grads, run.config.clip);
            }
            adam.step(&mut store, &grads);
            epoch_loss += loss;
            epoch_count += count;
        }
        let mut validation = BTreeMap::new();
        for (c, stopper) in stoppers.iter_mut() {
            let v = validation_value(
                run.parser,
                &store,
                &run.objective,
                *c,
                run.validation,
                &val_prepared,
                run.embeddings,
                exec,
            )?;
            validation.insert(c.key(), v);
            if stopper.observe(epoch, v) {
                best.insert(
                    c.key(),
                    Checkpoint {
                        epoch,
                        value: v,
                        store: store.clone(),
                    },
                );
            }
        }
        let record = EpochRecord {
            stage: run.name.to_string(),
            epoch,
            train_loss: if epoch_count > 0 { epoch_loss / epoch_count as f64 } else { 0.0 },
            sentences: epoch_count,
            validation,
            best: best.iter().map(|(k, c)| (k.clone(), c.epoch)).collect(),
        };
        log::info!(
            "{} epoch {epoch}/{epochs}: loss {:.6} {:?}",
            run.name,
            record.train_loss,
            record.validation
        );
        if let Some(dir) = &run.run_dir {
            write_epoch(dir, &store, &record, &best, epoch)?;
        }
        history.push(record);
    }
    Ok(TrainedModel {
        parser: run.parser.clone(),
        best,
        last: store,
        history,
    })
}

fn write_epoch(dir: &Path, store: &ParamStore, record: &EpochRecord, best: &BTreeMap<String, Checkpoint>, epoch: usize) -> Result<()> {
    let path = dir.join(format!("epoch-{epoch}.ckpt"));
    store.write_checkpoint(BufWriter::new(File::create(&path)?))?;
    let mut log = fs::OpenOptions::new().create(true).append(true).open(dir.join("metrics.jsonl"))?;
    writeln!(log, "{}", serde_json::to_string(record)?)?;
    // Keep the last epoch and every best epoch.
    let keep: BTreeSet<usize> = best.values().map(|c| c.epoch).chain([epoch]).collect();
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name().to_string_lossy().to_string();
        let Some(k) = name.strip_prefix("epoch-").and_then(|r| r.strip_suffix(".ckpt")) else { continue };
        if let Ok(k) = k.parse::<usize>() {
            if !keep.contains(&k) {
                fs::remove_file(entry.path())?;
            }
        }
    }
    Ok(())
}

/// Frameworks with at least one graph among `sentences`.
pub fn frameworks_in(sentences: &[Sentence]) -> Vec<Framework> {
    let set: BTreeSet<Framework> = sentences.iter().flat_map(|s| s.graphs.keys().copied()).collect();
    set.into_iter().collect()
}

fn stage_dir(run_dir: Option<&Path>, name: &str) -> Option<PathBuf> {
    run_dir.map(|d| d.join(name))
}

/// Single-framework training. DM and PSD train jointly; EDS needs DM in the
/// same request and trains its anchor network afterwards, starting from the
/// DM-best encoder.
pub fn train_single(
    frameworks: &[Framework],
    train: &[Sentence],
    validation: &[Sentence],
    emb: &Embeddings,
    cfg: &TrainConfig,
    run_dir: Option<&Path>,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let fws: BTreeSet<Framework> = frameworks.iter().copied().collect();
    let sdp: Vec<Framework> = fws.iter().copied().filter(|f| matches!(f, Framework::Dm | Framework::Psd)).collect();
    let others: Vec<Framework> = fws.iter().copied().filter(|f| matches!(f, Framework::Ucca | Framework::Amr)).collect();
    let (objective, criteria) = match (sdp.is_empty(), others.as_slice()) {
        (false, []) => (Objective::Sdp(cfg.sdp), sdp.iter().map(|&f| Criterion::SdpF1(f)).collect()),
        (true, [Framework::Ucca]) => (Objective::Ucca(cfg.model.ucca.weights), vec![Criterion::MrpF1(Framework::Ucca)]),
        (true, [Framework::Amr]) => (Objective::Amr(cfg.model.amr.weights), vec![Criterion::Loss(Framework::Amr)]),
        (true, []) => return Err(Error::config("EDS training needs DM in the same run")),
        _ => {
            return Err(Error::config(format!(
                "cannot train {:?} as one single-framework model; only DM and PSD train jointly",
                frameworks.iter().map(|f| f.as_str()).collect::<Vec<_>>()
            )))
        }
    };
    let (parser, store) = Parser::build(&cfg.model, frameworks, train, emb, cfg.seed)?;
    let run = Run {
        name: "main",
        parser: &parser,
        objective,
        criteria,
        stage: cfg.stage,
        train,
        validation,
        embeddings: emb,
        config: cfg,
        run_dir: run_dir.map(Path::to_path_buf),
    };
    let mut model = run_training(&run, store)?;
    if fws.contains(&Framework::Eds) {
        let start = model.best.get("dm").map(|c| c.store.clone()).unwrap_or_else(|| model.last.clone());
        let eds = train_eds(&parser, start, train, validation, emb, cfg, cfg.eds_stage, stage_dir(run_dir, "eds").as_deref())?;
        if let Some(c) = eds.best.get("eds") {
            model.best.insert("eds".into(), c.clone());
        }
        model.history.extend(eds.history);
    }
    Ok(model)
}

/// Anchor-network training after copying the shared encoder into the EDS
/// encoder.
pub fn train_eds(
    parser: &Parser,
    mut store: ParamStore,
    train: &[Sentence],
    validation: &[Sentence],
    emb: &Embeddings,
    cfg: &TrainConfig,
    stage: Stage,
    run_dir: Option<&Path>,
) -> Result<TrainedModel> {
    if parser.eds.is_none() {
        return Err(Error::config("model has no EDS head"));
    }
    let copied = parser.transfer_eds_encoder(&mut store);
    log::info!("EDS encoder initialized from {copied} shared encoder parameters");
    let run = Run {
        name: "eds",
        parser,
        objective: Objective::Eds,
        criteria: vec![Criterion::Loss(Framework::Eds)],
        stage,
        train,
        validation,
        embeddings: emb,
        config: cfg,
        run_dir: run_dir.map(Path::to_path_buf),
    };
    run_training(&run, store)
}

/// Multi-task pretraining over every framework in the data; EDS follows by
/// transfer from the checkpoint with the lowest total validation loss.
pub fn train_multitask(
    train: &[Sentence],
    validation: &[Sentence],
    emb: &Embeddings,
    cfg: &TrainConfig,
    run_dir: Option<&Path>,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let fws = frameworks_in(train);
    if fws.is_empty() {
        return Err(Error::config("no training graphs"));
    }
    let (parser, store) = Parser::build(&cfg.model, &fws, train, emb, cfg.seed)?;
    let mut criteria: Vec<Criterion> = fws
        .iter()
        .filter(|f| **f != Framework::Eds)
        .map(|&f| Criterion::Loss(f))
        .collect();
    criteria.push(Criterion::TotalLoss);
    let run = Run {
        name: "multitask",
        parser: &parser,
        objective: Objective::Multitask(cfg.multitask),
        criteria,
        stage: cfg.stage,
        train,
        validation,
        embeddings: emb,
        config: cfg,
        run_dir: run_dir.map(Path::to_path_buf),
    };
    let mut model = run_training(&run, store)?;
    if parser.eds.is_some() {
        let start = model.best.get("total").map(|c| c.store.clone()).unwrap_or_else(|| model.last.clone());
        let eds = train_eds(&parser, start, train, validation, emb, cfg, cfg.eds_stage, stage_dir(run_dir, "eds").as_deref())?;
        if let Some(c) = eds.best.get("eds") {
            model.best.insert("eds".into(), c.clone());
        }
        model.history.extend(eds.history);
    }
    Ok(model)
}

/// Continues a multi-task model on one framework (DM and PSD together) with
/// its single-framework objective. DM/PSD start from the epoch with the
/// lowest total loss, others from their own best epoch.
pub fn fine_tune(
    pretrained: &TrainedModel,
    framework: Framework,
    train: &[Sentence],
    validation: &[Sentence],
    emb: &Embeddings,
    cfg: &TrainConfig,
    run_dir: Option<&Path>,
) -> Result<TrainedModel> {
    let parser = &pretrained.parser;
    if !parser.has(framework) {
        return Err(Error::config(format!("model has no {} head to fine-tune", framework.as_str())));
    }
    let start_key = match framework {
        Framework::Dm | Framework::Psd | Framework::Eds => "total",
        f => f.as_str(),
    };
    let start = pretrained
        .best
        .get(start_key)
        .map(|c| c.store.clone())
        .unwrap_or_else(|| pretrained.last.clone());
    let stage = cfg.fine_tune.stage(framework);
    let (objective, criteria) = match framework {
        Framework::Dm | Framework::Psd => {
            let w = SdpLossWeights {
                label: cfg.fine_tune.sdp_label,
                ..cfg.sdp
            };
            let crit = [Framework::Dm, Framework::Psd]
                .into_iter()
                .filter(|f| parser.has(*f))
                .map(Criterion::SdpF1)
                .collect();
            (Objective::Sdp(w), crit)
        }
        Framework::Ucca => (Objective::Ucca(cfg.model.ucca.weights), vec![Criterion::MrpF1(Framework::Ucca)]),
        Framework::Amr => (Objective::Amr(cfg.model.amr.weights), vec![Criterion::Loss(Framework::Amr)]),
        Framework::Eds => return train_eds(parser, start, train, validation, emb, cfg, stage, run_dir),
    };
    let run = Run {
        name: "fine-tune",
        parser,
        objective,
        criteria,
        stage,
        train,
        validation,
        embeddings: emb,
        config: cfg,
        run_dir: run_dir.map(Path::to_path_buf),
    };
    run_training(&run, start)
}

/// Fine-tunes every framework group of a multi-task model and gathers the
/// best checkpoints into one model.
pub fn fine_tune_all(
    pretrained: &TrainedModel,
    train: &[Sentence],
    validation: &[Sentence],
    emb: &Embeddings,
    cfg: &TrainConfig,
    run_dir: Option<&Path>,
) -> Result<TrainedModel> {
    let mut out = pretrained.clone();
    let parser = &pretrained.parser;
    let mut groups = Vec::new();
    if parser.has(Framework::Dm) || parser.has(Framework::Psd) {
        groups.push((Framework::Dm, "ft-sdp"));
    }
    for (fw, dir) in [(Framework::Ucca, "ft-ucca"), (Framework::Amr, "ft-amr"), (Framework::Eds, "ft-eds")] {
        if parser.has(fw) {
            groups.push((fw, dir));
        }
    }
    for (fw, dir) in groups {
        let m = fine_tune(pretrained, fw, train, validation, emb, cfg, stage_dir(run_dir, dir).as_deref())?;
        for (k, c) in m.best {
            if k != "total" {
                out.best.insert(k, c);
            }
        }
        out.history.extend(m.history);
    }
    Ok(out)
}

/// Graphs for every sentence and framework, in sentence order.
pub fn predict_corpus(
    parser: &Parser,
    stores: &BTreeMap<Framework, ParamStore>,
    sentences: &[Sentence],
    emb: &Embeddings,
    fws: &[Framework],
    exec: Execution,
) -> Result<Vec<MrpGraph>> {
    let per = parallel::try_map(sentences, exec, |_, s| {
        parser.predict(stores, s, emb, fws).map_err(|e| match e {
            Error::Model(m) => Error::Model(format!("sentence {}: {m}", s.id)),
            e => e,
        })
    })?;
    Ok(per.into_iter().flatten().collect())
}

/// MRP F1 of one graph pair, for callers that score single predictions.
pub fn graph_f1(gold: &MrpGraph, pred: &MrpGraph) -> Result<f64> {
    Ok(mrp_f1(gold, pred)?.all.f1)
}
