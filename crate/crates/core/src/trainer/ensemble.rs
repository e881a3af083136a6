//! Greedy ensemble selection and score combination.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use unimrp_tensor::ParamStore;

use crate::biaffine::EdgeScores;
use crate::error::{Error, Result};
use crate::graph::{Framework, MrpGraph, Sentence};
use crate::model::{Embeddings, Parser, SentenceScores};
use crate::parallel::{self, Execution};
use crate::sdp::FramePrediction;
use crate::ucca::voting_ensemble;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Combination {
    /// Mean edge and label probabilities (and frame distributions).
    Average,
    /// Majority pointer sequence, then averaged scores of its voters.
    UccaVote,
    /// Converted from the ensembled DM graphs.
    FromDm,
    /// Best single member only.
    None,
}

impl Combination {
    pub fn for_framework(fw: Framework) -> Self {
        match fw {
            Framework::Dm | Framework::Psd => Combination::Average,
            Framework::Ucca => Combination::UccaVote,
            Framework::Eds => Combination::FromDm,
            Framework::Amr => Combination::None,
        }
    }
}

/// A trained candidate and its validation (ii) F1 on its own.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleMember {
    pub name: String,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleSpec {
    pub framework: Framework,
    pub rule: Combination,
    /// Member names in the order they were added.
    pub members: Vec<String>,
    pub f1: f64,
}

/// Greedy forward selection: candidates are tried in descending order of
/// their own F1 and added while the ensemble's F1 (from `score`, given
/// candidate indices) strictly improves; the first non-improving candidate
/// ends the search. AMR keeps only the best candidate.
pub fn build_ensemble(
    candidates: &[EnsembleMember],
    fw: Framework,
    mut score: impl FnMut(&[usize]) -> Result<f64>,
) -> Result<EnsembleSpec> {
    if candidates.is_empty() {
        return Err(Error::model("ensemble needs at least one candidate"));
    }
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| candidates[b].f1.partial_cmp(&candidates[a].f1).unwrap_or(std::cmp::Ordering::Equal));
    let rule = Combination::for_framework(fw);
    let mut chosen = vec![order[0]];
    let mut best = candidates[order[0]].f1;
    if rule != Combination::None {
        for &c in &order[1..] {
            let mut trial = chosen.clone();
            trial.push(c);
            let s = score(&trial)?;
            if s > best {
                chosen = trial;
                best = s;
            } else {
                break;
            }
        }
    }
    Ok(EnsembleSpec {
        framework: fw,
        rule,
        members: chosen.iter().map(|&i| candidates[i].name.clone()).collect(),
        f1: best,
    })
}

/// Combines the scores several members produced for one sentence.
pub fn combine_scores(fw: Framework, members: &[SentenceScores]) -> Result<SentenceScores> {
    if members.is_empty() {
        return Err(Error::model("combining zero members"));
    }
    let mut out = SentenceScores::default();
    match Combination::for_framework(fw) {
        Combination::Average => match fw {
            Framework::Dm => {
                let parts: Option<Vec<&(EdgeScores, FramePrediction)>> = members.iter().map(|m| m.dm.as_ref()).collect();
                if let Some(parts) = parts {
                    let e: Vec<&EdgeScores> = parts.iter().map(|p| &p.0).collect();
                    let f: Vec<&FramePrediction> = parts.iter().map(|p| &p.1).collect();
                    check_shapes(&e)?;
                    out.dm = Some((EdgeScores::average(&e), FramePrediction::average(&f)));
                }
            }
            _ => {
                let parts: Option<Vec<&EdgeScores>> = members.iter().map(|m| m.psd.as_ref()).collect();
                if let Some(parts) = parts {
                    check_shapes(&parts)?;
                    out.psd = Some(EdgeScores::average(&parts));
                }
            }
        },
        Combination::UccaVote => {
            let parts: Option<Vec<_>> = members.iter().map(|m| m.ucca.clone()).collect();
            if let Some(parts) = parts {
                out.ucca = Some(voting_ensemble(&parts)?);
            }
        }
        Combination::None => out.amr = members[0].amr.clone(),
        Combination::FromDm => return Err(Error::model("EDS scores are not combined directly")),
    }
    Ok(out)
}

fn check_shapes(parts: &[&EdgeScores]) -> Result<()> {
    let first = (parts[0].edge.shape(), parts[0].labels.shape());
    if parts.iter().any(|p| (p.edge.shape(), p.labels.shape()) != first) {
        return Err(Error::model("ensemble members disagree on score shapes"));
    }
    Ok(())
}

/// A trained model usable as an ensemble member.
pub struct Member<'a> {
    pub parser: &'a Parser,
    pub stores: &'a BTreeMap<Framework, ParamStore>,
}

/// Ensemble predictions for one framework. Members must share label
/// inventories; graphs are assembled with the first member's resources.
/// EDS graphs come from the ensembled DM graphs and the first member's
/// anchor network.
pub fn ensemble_predict(
    members: &[Member],
    sentences: &[Sentence],
    emb: &Embeddings,
    fw: Framework,
    exec: Execution,
) -> Result<Vec<MrpGraph>> {
    let first = members.first().ok_or_else(|| Error::model("ensemble has no members"))?;
    let score_fw = if fw == Framework::Eds { Framework::Dm } else { fw };
    for m in &members[1..] {
        let same = match score_fw {
            Framework::Dm => m.parser.dm.as_ref().map(|h| &h.edges.labels) == first.parser.dm.as_ref().map(|h| &h.edges.labels),
            Framework::Psd => m.parser.psd.as_ref().map(|h| &h.labels) == first.parser.psd.as_ref().map(|h| &h.labels),
            Framework::Ucca => m.parser.ucca.as_ref().map(|h| h.labels()) == first.parser.ucca.as_ref().map(|h| h.labels()),
            _ => true,
        };
        if !same {
            return Err(Error::model(format!("ensemble members disagree on {} labels", score_fw.as_str())));
        }
    }
    let used: &[Member] = if fw == Framework::Amr { &members[..1] } else { members };
    parallel::try_map(sentences, exec, |_, s| {
        let mut all = Vec::with_capacity(used.len());
        for m in used {
            let store = m
                .stores
                .get(&score_fw)
                .ok_or_else(|| Error::model(format!("member has no {} parameters", score_fw.as_str())))?;
            let features = m.parser.features(s, emb)?;
            all.push(m.parser.scores(store, s, &features, emb, score_fw)?);
        }
        let combined = combine_scores(score_fw, &all)?;
        let g = first.parser.assemble(s, &combined, score_fw)?;
        if fw != Framework::Eds {
            return Ok(g);
        }
        let store = first
            .stores
            .get(&Framework::Eds)
            .ok_or_else(|| Error::model("first member has no EDS parameters"))?;
        let features = first.parser.features(s, emb)?;
        first.parser.predict_eds(store, s, &features, &g)
    })
}
