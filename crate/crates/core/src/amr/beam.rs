//! Beam search over an abstract step model.

use crate::error::Result;

/// A step-wise generator. `expand` lists continuations with their
/// log-probabilities; a `None` token ends the sequence.
pub trait StepModel {
    type State: Clone;
    type Token: Clone;

    fn expand(
        &mut self,
        state: &Self::State,
        history: &[Self::Token],
        limit: usize,
    ) -> Result<Vec<(Option<Self::Token>, f64, Self::State)>>;
}

#[derive(Clone, Debug)]
pub struct Hypothesis<T, S> {
    pub tokens: Vec<T>,
    pub logp: f64,
    pub state: S,
    pub finished: bool,
}

impl<T, S> Hypothesis<T, S> {
    /// Log-probability divided by the number of generated tokens.
    pub fn normalized(&self) -> f64 {
        self.logp / self.tokens.len().max(1) as f64
    }
}

/// Keeps the `width` best continuations by cumulative log-probability at each
/// step; ended hypotheses leave the beam. The winner is the finished
/// hypothesis with the best length-normalized score (earliest on ties).
/// Hypotheses still open after `max_len` steps are closed as they are.
pub fn beam_search<M: StepModel>(
    model: &mut M,
    init: M::State,
    width: usize,
    max_len: usize,
) -> Result<Hypothesis<M::Token, M::State>> {
    let width = width.max(1);
    let mut beam = vec![Hypothesis {
        tokens: Vec::new(),
        logp: 0.0,
        state: init,
        finished: false,
    }];
    let mut finished: Vec<Hypothesis<M::Token, M::State>> = Vec::new();
    for _ in 0..max_len {
        if beam.is_empty() {
            break;
        }
        let mut candidates: Vec<(usize, Option<M::Token>, f64, M::State)> = Vec::new();
        for (k, h) in beam.iter().enumerate() {
            for (tok, lp, st) in model.expand(&h.state, &h.tokens, width)? {
                candidates.push((k, tok, h.logp + lp, st));
            }
        }
        // Stable sort keeps expansion order among equal scores.
        candidates.sort_by(|a, b| b.2.partial_cmp(&a.2).unwrap_or(std::cmp::Ordering::Equal));
        candidates.truncate(width);
        let mut next = Vec::new();
        for (k, tok, logp, state) in candidates {
            let mut tokens = beam[k].tokens.clone();
            match tok {
                Some(t) => {
                    tokens.push(t);
                    next.push(Hypothesis {
                        tokens,
                        logp,
                        state,
                        finished: false,
                    });
                }
                None => finished.push(Hypothesis {
                    tokens,
                    logp,
                    state,
                    finished: true,
                }),
            }
        }
        beam = next;
    }
    finished.extend(beam);
    let mut best: Option<Hypothesis<M::Token, M::State>> = None;
    for h in finished {
        if best.as_ref().is_none_or(|b| h.normalized() > b.normalized()) {
            best = Some(h);
        }
    }
    Ok(best.expect("at least one hypothesis"))
}

/// Width-one beam search.
pub fn greedy<M: StepModel>(model: &mut M, init: M::State, max_len: usize) -> Result<Hypothesis<M::Token, M::State>> {
    beam_search(model, init, 1, max_len)
}

/// The better of beam search and greedy decoding by normalized score, so a
/// wider beam never scores below greedy.
pub fn beam_or_greedy<M: StepModel>(
    model: &mut M,
    init: M::State,
    width: usize,
    max_len: usize,
) -> Result<Hypothesis<M::Token, M::State>> {
    let b = beam_search(model, init.clone(), width, max_len)?;
    if width <= 1 {
        return Ok(b);
    }
    let g = greedy(model, init, max_len)?;
    Ok(if g.normalized() > b.normalized() { g } else { b })
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Fixed per-step distributions over `{a, b, end}`.
    struct Toy(Vec<[f64; 3]>);

    impl StepModel for Toy {
        type State = ();
        type Token = usize;

        fn expand(&mut self, _: &(), history: &[usize], _: usize) -> Result<Vec<(Option<usize>, f64, ())>> {
            let p = self.0[history.len().min(self.0.len() - 1)];
            Ok(vec![
                (Some(0), p[0].ln(), ()),
                (Some(1), p[1].ln(), ()),
                (None, p[2].ln(), ()),
            ])
        }
    }

    #[test]
    fn width_one_is_greedy() {
        let mut m = Toy(vec![[0.5, 0.3, 0.2], [0.1, 0.2, 0.7]]);
        let h = greedy(&mut m, (), 5).unwrap();
        assert_eq!(h.tokens, vec![0]);
    }
}
