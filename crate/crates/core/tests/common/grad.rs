//! Central differences over random coordinates of one head's parameters,
//! through the full sentence pipeline.

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unimrp::model::{Embeddings, Losses, ModelConfig, Parser, Prepared};
use unimrp::nn::Ctx;
use unimrp::{synthetic, Corpus, Framework};
use unimrp_tensor::gradcheck::{rel_err, STEP};
use unimrp_tensor::{ParamId, ParamStore, Tape, Var};

pub const TOL: f64 = 1e-4;
const COORDS: usize = 24;
const SEEDS: u64 = 4;
const SENTENCES: usize = 5;

pub type Pick = fn(&Losses<Var>) -> Option<Var>;

pub struct Setup {
    corpus: Corpus,
    emb: Embeddings,
    models: Vec<(Parser, ParamStore, Vec<Prepared>)>,
}

pub fn setup() -> Setup {
    let corpus = synthetic::corpus(12, 21);
    let emb = synthetic::embeddings(&corpus, 6, 2, 6, 3);
    let fws = [Framework::Dm, Framework::Psd, Framework::Eds, Framework::Ucca, Framework::Amr];
    let models = (0..SEEDS)
        .map(|seed| {
            let (parser, store) = Parser::build(&ModelConfig::small(), &fws, &corpus.sentences, &emb, seed).unwrap();
            let prepared = corpus.sentences[..SENTENCES].iter().map(|s| parser.prepare(s, &emb).unwrap()).collect();
            (parser, store, prepared)
        })
        .collect();
    Setup { corpus, emb, models }
}

/// A loss component, the framework it belongs to and the parameter name
/// prefixes it is differentiated against.
pub struct Component {
    pub name: &'static str,
    pub framework: Framework,
    pub pick: Pick,
    pub prefixes: &'static [&'static str],
}

pub fn components() -> Vec<Component> {
    use Framework::*;
    let c = |name, framework, pick: Pick, prefixes| Component { name, framework, pick, prefixes };
    vec![
        c("dm edge biaffine", Dm, |l| l.dm.map(|d| d.edge), &["dm.u_edge", "dm.w_edge", "dm.b_edge", "dm.edge_"]),
        c("dm label biaffine", Dm, |l| l.dm.map(|d| d.label), &["dm.u_label", "dm.w_label", "dm.label_"]),
        c("dm frames", Dm, |l| l.dm.and_then(|d| d.frame), &["dm_frame"]),
        c("psd edges", Psd, |l| l.psd.map(|d| d.edge), &["psd."]),
        c("encoder lstm", Psd, |l| l.psd.map(|d| d.label), &["encoder."]),
        c("ucca pointer attention", Ucca, |l| l.ucca.map(|u| u.dec), &["ucca.attn", "ucca.decoder", "ucca.seed", "ucca.bullet"]),
        c("ucca edges", Ucca, |l| l.ucca.map(|u| u.edge), &["ucca.reencoder", "ucca.edges"]),
        c("ucca labels", Ucca, |l| l.ucca.map(|u| u.label), &["ucca.edges.label", "ucca.edges.u_label"]),
        c("ucca remote", Ucca, |l| l.ucca.map(|u| u.remote), &["ucca.remote"]),
        c(
            "amr pointer-generator",
            Amr,
            |l| l.amr.map(|a| a.dec),
            &["amr.gate", "amr.vocab", "amr.tgt_", "amr.attn_", "amr.decoder", "amr.init"],
        ),
        c("amr coverage", Amr, |l| l.amr.map(|a| a.cov), &["amr.attn_", "amr.decoder", "amr.init"]),
        c("amr edges", Amr, |l| l.amr.map(|a| a.edge), &["amr.edges", "amr.tgt_mem", "amr.decoder"]),
        c("amr labels", Amr, |l| l.amr.map(|a| a.label), &["amr.edges.label", "amr.edges.u_label"]),
        c("eds anchors", Eds, |l| l.eds, &["eds_anchor", "eds_encoder"]),
    ]
}

/// Number of instances checked, or the first instance whose worst relative
/// error over random coordinates exceeds `TOL`.
pub fn check(setup: &Setup, c: &Component) -> Result<usize, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(c.name.len() as u64);
    let mut instances = 0;
    for (parser, store, prepared) in &setup.models {
        let ids: Vec<ParamId> = store.ids().filter(|&id| c.prefixes.iter().any(|p| store.name(id).starts_with(p))).collect();
        if ids.is_empty() {
            return Err(format!("{}: no parameters match {:?}", c.name, c.prefixes));
        }
        for (s, p) in setup.corpus.sentences.iter().zip(prepared) {
            let eval = |st: &ParamStore| -> Option<f64> {
                let mut tape = Tape::new(st);
                let l = parser.losses(&mut tape, s, p, &setup.emb, &[c.framework], &mut Ctx::eval()).unwrap();
                (c.pick)(&l).map(|v| tape.scalar_value(v))
            };
            let analytic = {
                let mut tape = Tape::new(store);
                let l = parser.losses(&mut tape, s, p, &setup.emb, &[c.framework], &mut Ctx::eval()).unwrap();
                let Some(v) = (c.pick)(&l) else { continue };
                tape.backward(v).into_params()
            };
            let mut st = store.clone();
            let mut worst: f64 = 0.0;
            for _ in 0..COORDS {
                let id = *ids.choose(&mut rng).unwrap();
                let e = rng.random_range(0..st.get(id).len());
                let orig = st.get(id).data()[e];
                st.get_mut(id).data_mut()[e] = orig + STEP;
                let plus = eval(&st).unwrap();
                st.get_mut(id).data_mut()[e] = orig - STEP;
                let minus = eval(&st).unwrap();
                st.get_mut(id).data_mut()[e] = orig;
                let numeric = (plus - minus) / (2.0 * STEP);
                let a = analytic.get(id).map_or(0.0, |g| g.data()[e]);
                worst = worst.max(rel_err(a, numeric));
            }
            if worst > TOL {
                return Err(format!("{}: relative error {worst} on {}", c.name, s.id));
            }
            instances += 1;
        }
    }
    if instances < 20 {
        return Err(format!("{}: only {instances} instances", c.name));
    }
    Ok(instances)
}
