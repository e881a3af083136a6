//! Training / validation splits over a multi-framework corpus.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Corpus, Framework, Sentence};

/// Validation sizes (i, ii) per framework before scaling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitConfig {
    pub dm: (usize, usize),
    pub psd: (usize, usize),
    pub eds: (usize, usize),
    pub ucca: (usize, usize),
    pub amr: (usize, usize),
    /// Share of a framework's sentences that validation may take before
    /// sizes shrink.
    pub max_share: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            dm: (500, 1500),
            psd: (500, 1500),
            eds: (500, 1500),
            ucca: (300, 700),
            amr: (500, 1500),
            max_share: 0.5,
        }
    }
}

impl SplitConfig {
    pub fn sizes(&self, fw: Framework) -> (usize, usize) {
        match fw {
            Framework::Dm => self.dm,
            Framework::Psd => self.psd,
            Framework::Eds => self.eds,
            Framework::Ucca => self.ucca,
            Framework::Amr => self.amr,
        }
    }

    /// Sizes multiplied by `scale`, rounded, at least one each when non-zero.
    pub fn scaled(&self, fw: Framework, scale: f64) -> (usize, usize) {
        let (a, b) = self.sizes(fw);
        let s = |n: usize| if n == 0 { 0 } else { ((n as f64 * scale).round() as usize).max(1) };
        (s(a), s(b))
    }
}

/// Sentence ids of each part. Validation sets are per framework.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DataSplit {
    pub train: Vec<String>,
    pub validation_i: BTreeMap<Framework, Vec<String>>,
    pub validation_ii: BTreeMap<Framework, Vec<String>>,
}

impl DataSplit {
    /// Every id appears in at most one part.
    pub fn check_disjoint(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        let all = self
            .train
            .iter()
            .chain(self.validation_i.values().flatten())
            .chain(self.validation_ii.values().flatten());
        for id in all {
            if !seen.insert(id.as_str()) {
                return Err(Error::config(format!("sentence {id} is in more than one split")));
            }
        }
        Ok(())
    }

    pub fn train_sentences(&self, corpus: &Corpus) -> Vec<Sentence> {
        pick(corpus, &self.train)
    }

    /// Validation (i) sentences of every framework, in framework order.
    pub fn validation_i_sentences(&self, corpus: &Corpus) -> Vec<Sentence> {
        let ids: Vec<String> = self.validation_i.values().flatten().cloned().collect();
        pick(corpus, &ids)
    }

    pub fn validation_ii_sentences(&self, corpus: &Corpus, fw: Framework) -> Vec<Sentence> {
        pick(corpus, self.validation_ii.get(&fw).map(Vec::as_slice).unwrap_or(&[]))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split serializes") + "\n"
    }
}

fn pick(corpus: &Corpus, ids: &[String]) -> Vec<Sentence> {
    let index: BTreeMap<&str, &Sentence> = corpus.sentences.iter().map(|s| (s.id.as_str(), s)).collect();
    ids.iter().filter_map(|id| index.get(id.as_str()).map(|s| (*s).clone())).collect()
}

/// Validation sentences are drawn per framework from the sentences annotated
/// in the fewest frameworks, so sentences shared across frameworks stay in
/// training. Frameworks are served in the order AMR, UCCA, DM, PSD, EDS; a
/// sentence picked for one framework's validation is not reused. When a
/// framework has too few sentences, both sizes shrink proportionally so
/// validation takes at most `max_share` of them.
pub fn split_dataset(corpus: &Corpus, cfg: &SplitConfig, scale: f64, seed: u64) -> Result<DataSplit> {
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::config(format!("scale must be positive, got {scale}")));
    }
    if !(cfg.max_share > 0.0 && cfg.max_share < 1.0) {
        return Err(Error::config(format!("max_share must be in (0, 1), got {}", cfg.max_share)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..corpus.sentences.len()).collect();
    order.shuffle(&mut rng);
    let mut taken = vec![false; corpus.sentences.len()];
    let mut split = DataSplit::default();
    for fw in [Framework::Amr, Framework::Ucca, Framework::Dm, Framework::Psd, Framework::Eds] {
        let (mut a, mut b) = cfg.scaled(fw, scale);
        let pool: Vec<usize> = order.iter().copied().filter(|&i| corpus.sentences[i].graph(fw).is_some()).collect();
        if pool.is_empty() {
            continue;
        }
        let budget = (pool.len() as f64 * cfg.max_share).floor() as usize;
        if a + b > budget {
            let f = budget as f64 / (a + b) as f64;
            let (na, nb) = ((a as f64 * f).floor() as usize, (b as f64 * f).floor() as usize);
            log::warn!(
                "{}: {} sentences cannot hold validation sizes ({a}, {b}); shrinking to ({na}, {nb})",
                fw.as_str(),
                pool.len()
            );
            (a, b) = (na, nb);
        }
        // Fewest frameworks first; ties keep the shuffled order.
        let mut cands: Vec<usize> = pool.into_iter().filter(|&i| !taken[i]).collect();
        cands.sort_by_key(|&i| corpus.sentences[i].graphs.len());
        let chosen: Vec<usize> = cands.into_iter().take(a + b).collect();
        if chosen.len() < a + b {
            log::warn!("{}: only {} unassigned sentences for validation", fw.as_str(), chosen.len());
        }
        for &i in &chosen {
            taken[i] = true;
        }
        let ids: Vec<String> = chosen.iter().map(|&i| corpus.sentences[i].id.clone()).collect();
        let cut = a.min(ids.len());
        split.validation_i.insert(fw, ids[..cut].to_vec());
        split.validation_ii.insert(fw, ids[cut..].to_vec());
    }
    split.train = corpus
        .sentences
        .iter()
        .enumerate()
        .filter(|(i, _)| !taken[*i])
        .map(|(_, s)| s.id.clone())
        .collect();
    split.check_disjoint()?;
    Ok(split)
}
