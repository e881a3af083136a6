//! Random hyperparameter search over [`TrainConfig`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::TrainConfig;
use crate::error::Result;

/// Sampling ranges. Scalars are drawn uniformly; `lr_exponent` is the range
/// of the base-10 exponent; lists are drawn from uniformly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SearchSpace {
    pub lr_exponent: (f64, f64),
    pub word_drop: Vec<f64>,
    pub pos_drop: Vec<f64>,
    pub lemma_drop: Vec<f64>,
    pub encoder_layers: Vec<usize>,
    pub encoder_hidden: Vec<usize>,
    pub encoder_dropout: Vec<f64>,
    pub biaffine_input_dropout: Vec<f64>,
    pub edge_dropout: Vec<f64>,
    pub betas: Vec<(f64, f64)>,
    pub sdp_label: (f64, f64),
    pub amr_label: (f64, f64),
    pub amr_cov: (f64, f64),
    pub amr_gen: (f64, f64),
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            lr_exponent: (-3.32, -2.92),
            word_drop: vec![0.1, 0.2, 0.4],
            pos_drop: vec![0.1, 0.2, 0.4],
            lemma_drop: vec![0.1, 0.2, 0.4],
            encoder_layers: vec![2, 3],
            encoder_hidden: vec![256, 512],
            encoder_dropout: vec![0.1, 0.25, 0.5],
            biaffine_input_dropout: vec![0.2, 0.45],
            edge_dropout: vec![0.25, 0.4],
            betas: vec![(0.9, 0.999), (0.0, 0.95)],
            sdp_label: (0.02, 0.03),
            amr_label: (0.1, 0.5),
            amr_cov: (0.2, 0.4),
            amr_gen: (0.2, 0.4),
        }
    }
}

fn choose<T: Copy>(rng: &mut ChaCha8Rng, xs: &[T], fallback: T) -> T {
    if xs.is_empty() {
        fallback
    } else {
        xs[rng.random_range(0..xs.len())]
    }
}

fn uniform(rng: &mut ChaCha8Rng, (a, b): (f64, f64)) -> f64 {
    if b > a {
        rng.random_range(a..b)
    } else {
        a
    }
}

impl SearchSpace {
    /// A copy of `base` with every searched value redrawn.
    pub fn sample(&self, base: &TrainConfig, rng: &mut ChaCha8Rng) -> TrainConfig {
        let mut c = base.clone();
        c.stage.lr = 10f64.powf(uniform(rng, self.lr_exponent));
        (c.stage.beta1, c.stage.beta2) = choose(rng, &self.betas, (c.stage.beta1, c.stage.beta2));
        let e = &mut c.model.encoder;
        e.word_drop = choose(rng, &self.word_drop, e.word_drop);
        e.pos_drop = choose(rng, &self.pos_drop, e.pos_drop);
        e.lemma_drop = choose(rng, &self.lemma_drop, e.lemma_drop);
        e.layers = choose(rng, &self.encoder_layers, e.layers);
        e.hidden = choose(rng, &self.encoder_hidden, e.hidden);
        e.dropout = choose(rng, &self.encoder_dropout, e.dropout);
        let b = &mut c.model.sdp;
        b.input_dropout = choose(rng, &self.biaffine_input_dropout, b.input_dropout);
        b.edge_dropout = choose(rng, &self.edge_dropout, b.edge_dropout);
        c.sdp.label = uniform(rng, self.sdp_label);
        // The decoder share is what remains after the biaffine and coverage
        // terms, so the sampled generation weight fixes the biaffine share.
        let w = &mut c.model.amr.weights;
        w.label = uniform(rng, self.amr_label);
        w.cov = uniform(rng, self.amr_cov);
        let gen = uniform(rng, self.amr_gen);
        w.biaf = (1.0 - w.cov - gen).max(0.0);
        c
    }
}

/// Runs `trials` sampled configurations through `evaluate` (higher is
/// better) and returns them sorted best first.
pub fn random_search(
    base: &TrainConfig,
    space: &SearchSpace,
    trials: usize,
    seed: u64,
    mut evaluate: impl FnMut(&TrainConfig) -> Result<f64>,
) -> Result<Vec<(TrainConfig, f64)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(trials);
    for t in 0..trials {
        let mut c = space.sample(base, &mut rng);
        c.name = format!("{}-trial{t}", base.name);
        c.validate()?;
        let score = evaluate(&c)?;
        log::info!("trial {t}: score {score:.4}");
        out.push((c, score));
    }
    out.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(std::cmp::Ordering::Equal));
    Ok(out)
}
