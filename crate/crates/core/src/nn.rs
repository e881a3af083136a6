//! Layers built on the tape: linear maps, one-hidden-layer MLPs and
//! (bi)LSTMs, plus the forward-pass context that carries dropout state.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use unimrp_tensor::{dropout_mask, ParamId, ParamStore, Tape, Tensor, Var};

use crate::error::Result;

/// Training flag and the random stream used for dropout.
pub struct Ctx {
    pub train: bool,
    pub rng: ChaCha8Rng,
}

impl Ctx {
    pub fn train(rng: ChaCha8Rng) -> Self {
        Ctx { train: true, rng }
    }

    pub fn eval() -> Self {
        use rand::SeedableRng;
        Ctx {
            train: false,
            rng: ChaCha8Rng::seed_from_u64(0),
        }
    }

    /// Inverted dropout; identity outside training or when `p` is 0.
    pub fn dropout(&mut self, tape: &mut Tape, x: Var, p: f64) -> Result<Var> {
        if !self.train || p <= 0.0 {
            return Ok(x);
        }
        let [r, c] = tape.shape(x);
        let mask = dropout_mask(r, c, p, &mut self.rng);
        Ok(tape.mul_const(x, mask)?)
    }

    pub fn bernoulli(&mut self, p: f64) -> bool {
        self.train && p > 0.0 && self.rng.random::<f64>() < p
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Elu,
    Tanh,
    Relu,
    Softplus,
}

impl Activation {
    pub fn apply(self, tape: &mut Tape, x: Var) -> Var {
        match self {
            Activation::Elu => tape.elu(x),
            Activation::Tanh => tape.tanh(x),
            Activation::Relu => tape.relu(x),
            Activation::Softplus => tape.softplus(x),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
    pub input: usize,
    pub output: usize,
}

impl Linear {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        output: usize,
        bias: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = store.add(format!("{name}.w"), Tensor::glorot(input, output, rng));
        let b = bias.then(|| store.add(format!("{name}.b"), Tensor::zeros(1, output)));
        Linear { w, b, input, output }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(self.w);
        let y = tape.matmul(x, w)?;
        match self.b {
            Some(b) => {
                let b = tape.param(b);
                Ok(tape.add(y, b)?)
            }
            None => Ok(y),
        }
    }
}

/// `out(act(hidden(x)))` with dropout on the hidden activations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub hidden: Linear,
    pub out: Linear,
    pub act: Activation,
    pub dropout: f64,
}

impl Mlp {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        output: usize,
        act: Activation,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        Mlp {
            hidden: Linear::new(store, &format!("{name}.hidden"), input, hidden, true, rng),
            out: Linear::new(store, &format!("{name}.out"), hidden, output, true, rng),
            act,
            dropout,
        }
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, ctx: &mut Ctx) -> Result<Var> {
        let h = self.hidden.forward(tape, x)?;
        let h = self.act.apply(tape, h);
        let h = ctx.dropout(tape, h, self.dropout)?;
        self.out.forward(tape, h)
    }

    pub fn output(&self) -> usize {
        self.out.output
    }
}

/// One LSTM direction with gates ordered input, forget, cell, output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Lstm {
    pub w_ih: ParamId,
    pub w_hh: ParamId,
    pub b: ParamId,
    pub input: usize,
    pub hidden: usize,
}

#[derive(Clone, Copy, Debug)]
pub struct LstmState {
    pub h: Var,
    pub c: Var,
}

impl Lstm {
    pub fn new(store: &mut ParamStore, name: &str, input: usize, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (hidden as f64).sqrt();
        let w_ih = store.add(format!("{name}.w_ih"), Tensor::uniform(input, 4 * hidden, bound, rng));
        let w_hh = store.add(format!("{name}.w_hh"), Tensor::uniform(hidden, 4 * hidden, bound, rng));
        let mut b = Tensor::zeros(1, 4 * hidden);
        for k in hidden..2 * hidden {
            b.data_mut()[k] = 1.0;
        }
        let b = store.add(format!("{name}.b"), b);
        Lstm {
            w_ih,
            w_hh,
            b,
            input,
            hidden,
        }
    }

    pub fn zero_state(&self, tape: &mut Tape) -> LstmState {
        let h = tape.constant(Tensor::zeros(1, self.hidden));
        let c = tape.constant(Tensor::zeros(1, self.hidden));
        LstmState { h, c }
    }

    /// Input contributions `x·W_ih + b` for a whole sequence at once.
    pub fn project(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let w = tape.param(self.w_ih);
        let b = tape.param(self.b);
        let xw = tape.matmul(x, w)?;
        Ok(tape.add(xw, b)?)
    }

    /// Advances one step given the projected input row `xw` (1×4H).
    pub fn step_projected(&self, tape: &mut Tape, xw: Var, state: LstmState) -> Result<LstmState> {
        let w_hh = tape.param(self.w_hh);
        let hh = tape.matmul(state.h, w_hh)?;
        let gates = tape.add(xw, hh)?;
        let hc = tape.lstm_cell(gates, state.c)?;
        let h = tape.slice_cols(hc, 0, self.hidden)?;
        let c = tape.slice_cols(hc, self.hidden, self.hidden)?;
        Ok(LstmState { h, c })
    }

    pub fn step(&self, tape: &mut Tape, x: Var, state: LstmState) -> Result<LstmState> {
        let xw = self.project(tape, x)?;
        self.step_projected(tape, xw, state)
    }

    /// Runs over the rows of `x`, left to right or right to left. Returns the
    /// hidden states in row order of `x` and the state after the last step.
    pub fn run(&self, tape: &mut Tape, x: Var, reverse: bool, init: Option<LstmState>) -> Result<(Var, LstmState)> {
        let n = tape.shape(x)[0];
        let xw = self.project(tape, x)?;
        let mut state = match init {
            Some(s) => s,
            None => self.zero_state(tape),
        };
        let mut hs = vec![None; n];
        let order: Vec<usize> = if reverse { (0..n).rev().collect() } else { (0..n).collect() };
        for t in order {
            let row = tape.slice_rows(xw, t, 1)?;
            state = self.step_projected(tape, row, state)?;
            hs[t] = Some(state.h);
        }
        let hs: Vec<Var> = hs.into_iter().map(|h| h.expect("every step ran")).collect();
        Ok((tape.concat_rows(&hs)?, state))
    }
}

/// Stacked bidirectional LSTM with dropout on each layer's input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BiLstm {
    pub layers: Vec<[Lstm; 2]>,
    pub dropout: f64,
}

#[derive(Clone, Debug)]
pub struct BiLstmOutput {
    /// Per layer, an `n × 2H` matrix of `[forward; backward]` states.
    pub layers: Vec<Var>,
    /// Final states per layer as `[forward, backward]`.
    pub finals: Vec<[LstmState; 2]>,
}

impl BiLstmOutput {
    pub fn top(&self) -> Var {
        *self.layers.last().expect("at least one layer")
    }
}

impl BiLstm {
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        input: usize,
        hidden: usize,
        layers: usize,
        dropout: f64,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let layers = (0..layers)
            .map(|l| {
                let inp = if l == 0 { input } else { 2 * hidden };
                [
                    Lstm::new(store, &format!("{name}.l{l}.fwd"), inp, hidden, rng),
                    Lstm::new(store, &format!("{name}.l{l}.bwd"), inp, hidden, rng),
                ]
            })
            .collect();
        BiLstm { layers, dropout }
    }

    pub fn hidden(&self) -> usize {
        self.layers[0][0].hidden
    }

    pub fn output(&self) -> usize {
        2 * self.hidden()
    }

    pub fn forward(&self, tape: &mut Tape, x: Var, ctx: &mut Ctx) -> Result<BiLstmOutput> {
        let mut input = x;
        let mut out = BiLstmOutput {
            layers: Vec::new(),
            finals: Vec::new(),
        };
        for [fwd, bwd] in &self.layers {
            let inp = ctx.dropout(tape, input, self.dropout)?;
            let (hf, sf) = fwd.run(tape, inp, false, None)?;
            let (hb, sb) = bwd.run(tape, inp, true, None)?;
            let h = tape.concat_cols(&[hf, hb])?;
            out.layers.push(h);
            out.finals.push([sf, sb]);
            input = h;
        }
        Ok(out)
    }
}

/// Sinusoidal position encoding of width `dim` for positions `0..n`.
pub fn positional_encoding(n: usize, dim: usize) -> Tensor {
    let mut t = Tensor::zeros(n, dim);
    for pos in 0..n {
        for i in 0..dim {
            let rate = 1.0 / 10000f64.powf((2 * (i / 2)) as f64 / dim as f64);
            let angle = pos as f64 * rate;
            t.set(pos, i, if i % 2 == 0 { angle.sin() } else { angle.cos() });
        }
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn bilstm_shapes() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let net = BiLstm::new(&mut store, "enc", 3, 4, 2, 0.0, &mut rng);
        let mut tape = Tape::new(&store);
        let x = tape.constant(Tensor::uniform(5, 3, 1.0, &mut rng));
        let out = net.forward(&mut tape, x, &mut Ctx::eval()).unwrap();
        assert_eq!(out.layers.len(), 2);
        assert_eq!(tape.shape(out.top()), [5, 8]);
    }

    #[test]
    fn forget_bias_starts_at_one() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let l = Lstm::new(&mut store, "l", 2, 3, &mut rng);
        assert_eq!(store.get(l.b).data(), &[0., 0., 0., 1., 1., 1., 0., 0., 0., 0., 0., 0.]);
    }

    #[test]
    fn positions_differ() {
        let p = positional_encoding(4, 6);
        assert_ne!(p.row_slice(1), p.row_slice(2));
        assert_eq!(p.get(0, 0), 0.0);
        assert_eq!(p.get(0, 1), 1.0);
    }
}
