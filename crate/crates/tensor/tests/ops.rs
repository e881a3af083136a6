use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unimrp_tensor::gradcheck::check_inputs;
use unimrp_tensor::{
    bilinear, bilinear_label, dropout_mask, ParamStore, Result, Tape, Tensor, Var,
};

const TOL: f64 = 1e-4;
const INSTANCES: u64 = 20;

fn rand_t(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::uniform(r, c, 1.0, rng)
}

/// Reduces an arbitrary output to a scalar with fixed random weights so that
/// every output element contributes a distinct gradient.
fn weighted_sum(tape: &mut Tape, v: Var, seed: u64) -> Result<Var> {
    let [r, c] = tape.shape(v);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xdead);
    let w = tape.constant(Tensor::uniform(r, c, 1.0, &mut rng));
    let p = tape.mul(v, w)?;
    Ok(tape.sum(p))
}

fn run<F>(name: &str, shapes: &[(usize, usize)], f: F)
where
    F: Fn(&mut Tape, &[Var]) -> Result<Var>,
{
    let store = ParamStore::new();
    for seed in 0..INSTANCES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let inputs: Vec<Tensor> = shapes.iter().map(|&(r, c)| rand_t(&mut rng, r, c)).collect();
        let err = check_inputs(&store, &inputs, |t, xs| {
            let out = f(t, xs)?;
            weighted_sum(t, out, seed)
        })
        .unwrap();
        assert!(err <= TOL, "{name}: relative error {err} on instance {seed}");
    }
}

#[test]
fn grad_matmul_family() {
    run("matmul", &[(3, 4), (4, 2)], |t, x| t.matmul(x[0], x[1]));
    run("matmul_t", &[(3, 4), (2, 4)], |t, x| t.matmul_t(x[0], x[1]));
    run("t_matmul", &[(4, 3), (4, 2)], |t, x| t.t_matmul(x[0], x[1]));
    run("transpose", &[(3, 4)], |t, x| Ok(t.transpose(x[0])));
}

#[test]
fn grad_broadcast_arithmetic() {
    run("add", &[(3, 4), (3, 4)], |t, x| t.add(x[0], x[1]));
    run("add_row", &[(3, 4), (1, 4)], |t, x| t.add(x[0], x[1]));
    run("add_col", &[(3, 4), (3, 1)], |t, x| t.add(x[0], x[1]));
    run("sub_scalar", &[(3, 4), (1, 1)], |t, x| t.sub(x[0], x[1]));
    run("mul", &[(3, 4), (3, 4)], |t, x| t.mul(x[0], x[1]));
    run("mul_row", &[(3, 4), (1, 4)], |t, x| t.mul(x[0], x[1]));
    run("scale", &[(3, 4)], |t, x| Ok(t.scale(x[0], -1.7)));
    run("add_scalar", &[(3, 4)], |t, x| Ok(t.add_scalar(x[0], 0.3)));
    run("lin_comb", &[(3, 4), (3, 4)], |t, x| {
        t.lin_comb(&[(0.3, x[0]), (-2.0, x[1]), (0.5, x[0])])
    });
}

#[test]
fn grad_elementwise() {
    run("tanh", &[(3, 4)], |t, x| Ok(t.tanh(x[0])));
    run("sigmoid", &[(3, 4)], |t, x| Ok(t.sigmoid(x[0])));
    run("exp", &[(3, 4)], |t, x| Ok(t.exp(x[0])));
    run("elu", &[(3, 4)], |t, x| Ok(t.elu(x[0])));
    run("softplus", &[(3, 4)], |t, x| Ok(t.softplus(x[0])));
    run("log", &[(3, 4)], |t, x| {
        let e = t.exp(x[0]);
        Ok(t.log(e))
    });
    run("min", &[(3, 4), (3, 4)], |t, x| t.min(x[0], x[1]));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mask = dropout_mask(3, 4, 0.5, &mut rng);
    run("mul_const", &[(3, 4)], move |t, x| t.mul_const(x[0], mask.clone()));
}

#[test]
fn grad_softmax_and_reductions() {
    run("softmax", &[(3, 4)], |t, x| Ok(t.softmax(x[0])));
    run("log_softmax", &[(3, 4)], |t, x| Ok(t.log_softmax(x[0])));
    run("sum", &[(3, 4)], |t, x| Ok(t.sum(x[0])));
    run("mean", &[(3, 4)], |t, x| Ok(t.mean(x[0])));
    run("sum_rows", &[(3, 4)], |t, x| Ok(t.sum_rows(x[0])));
    run("sum_cols", &[(3, 4)], |t, x| Ok(t.sum_cols(x[0])));
}

#[test]
fn grad_structural() {
    run("concat_cols", &[(3, 4), (3, 2)], |t, x| t.concat_cols(&[x[0], x[1], x[0]]));
    run("concat_rows", &[(3, 4), (1, 4)], |t, x| t.concat_rows(&[x[0], x[1]]));
    run("slice_cols", &[(3, 4)], |t, x| t.slice_cols(x[0], 1, 2));
    run("slice_rows", &[(3, 4)], |t, x| t.slice_rows(x[0], 1, 2));
    run("gather_rows", &[(3, 4)], |t, x| t.gather_rows(x[0], &[2, 0, 2, 1]));
    run("select", &[(3, 4)], |t, x| t.select(x[0], &[0, 5, 5, 11]));
    run("reshape", &[(3, 4)], |t, x| t.reshape(x[0], 2, 6));
}

#[test]
fn grad_losses() {
    run("cross_entropy", &[(3, 4)], |t, x| t.cross_entropy(x[0], &[0, 3, 1], None));
    run("cross_entropy_weighted", &[(3, 4)], |t, x| {
        t.cross_entropy(x[0], &[2, 2, 1], Some(&[0.5, 1.0, 0.0]))
    });
    let targets = Tensor::from_rows(&[
        vec![1.0, 0.0, 0.0, 1.0],
        vec![0.0, 0.0, 1.0, 1.0],
        vec![1.0, 1.0, 0.0, 0.0],
    ])
    .unwrap();
    let mask = Tensor::from_rows(&[
        vec![1.0, 1.0, 0.0, 1.0],
        vec![1.0, 1.0, 1.0, 1.0],
        vec![0.0, 1.0, 1.0, 1.0],
    ])
    .unwrap();
    run("bce", &[(3, 4)], move |t, x| {
        t.bce_with_logits(x[0], targets.clone(), Some(mask.clone()))
    });
}

#[test]
fn grad_lstm_cell() {
    run("lstm_cell", &[(2, 12), (2, 3)], |t, x| t.lstm_cell(x[0], x[1]));
}

#[test]
fn grad_bilinear_forms() {
    run("bilinear", &[(1, 3), (1, 4), (3, 4), (1, 7), (1, 1)], |t, x| {
        bilinear(t, x[0], x[1], x[2], x[3], x[4])
    });
    run("bilinear_label", &[(1, 3), (1, 4), (3, 12), (3, 4)], |t, x| {
        bilinear_label(t, x[0], x[1], x[2], x[3])
    });
}

#[test]
fn fan_out_accumulates() {
    // y = x ⊙ x + tanh(x): x is consumed three times.
    run("fan_out", &[(3, 4)], |t, x| {
        let sq = t.mul(x[0], x[0])?;
        let th = t.tanh(x[0]);
        t.add(sq, th)
    });
}

#[test]
fn softmax_uniform_and_shift_invariant() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let c = tape.constant(Tensor::full(1, 4, 2.5));
    let s = tape.softmax(c);
    assert_eq!(tape.value(s).data(), &[0.25; 4]);

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..50 {
        let x = rand_t(&mut rng, 3, 5);
        let shift: f64 = rng.random_range(-20.0..20.0);
        let a = tape.constant(x.clone());
        let b = tape.constant(x.map(|v| v + shift));
        let sa = tape.softmax(a);
        let sb = tape.softmax(b);
        assert!(tape.value(sa).max_abs_diff(tape.value(sb)) < 1e-12);
        for r in 0..3 {
            let row = tape.value(sa).row_slice(r);
            assert!(row.iter().all(|&p| p >= 0.0));
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
    }
}

#[test]
fn bilinear_examples() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = tape.constant(rand_t(&mut rng, 1, 3));
    let y = tape.constant(rand_t(&mut rng, 1, 3));
    let u0 = tape.constant(Tensor::zeros(3, 3));
    let w0 = tape.constant(Tensor::zeros(1, 6));
    let b = tape.constant(Tensor::scalar(0.7));
    let s = bilinear(&mut tape, x, y, u0, w0, b).unwrap();
    assert_eq!(tape.scalar_value(s), 0.7);

    let e1 = tape.constant(Tensor::row(vec![1.0, 0.0, 0.0]));
    let id = tape.constant(Tensor::identity(3));
    let b0 = tape.constant(Tensor::scalar(0.0));
    let s = bilinear(&mut tape, e1, e1, id, w0, b0).unwrap();
    assert_eq!(tape.scalar_value(s), 1.0);
}

#[test]
fn bilinear_label_examples() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let y_t = rand_t(&mut rng, 1, 4);
    let w_t = rand_t(&mut rng, 3, 4);
    let y = tape.constant(y_t.clone());
    let w = tape.constant(w_t.clone());
    let u0 = tape.constant(Tensor::zeros(2, 12));
    let x1 = tape.constant(rand_t(&mut rng, 1, 2));
    let x2 = tape.constant(rand_t(&mut rng, 1, 2));
    let s1 = bilinear_label(&mut tape, x1, y, u0, w).unwrap();
    let s2 = bilinear_label(&mut tape, x2, y, u0, w).unwrap();
    assert_eq!(tape.value(s1), tape.value(s2));
    let expect = w_t.matmul(&y_t.transpose()).unwrap().transpose();
    assert!(tape.value(s1).max_abs_diff(&expect) < 1e-15);

    // A single class is a bilinear score without bias or x-linear term.
    let u_t = rand_t(&mut rng, 2, 4);
    let u = tape.constant(u_t.clone());
    let w1 = tape.constant(Tensor::zeros(1, 4));
    let s = bilinear_label(&mut tape, x1, y, u, w1).unwrap();
    let x1v = tape.value(x1).clone();
    let direct = x1v.matmul(&u_t).unwrap().matmul(&y_t.transpose()).unwrap();
    assert_eq!(tape.shape(s), [1, 1]);
    assert!((tape.scalar_value(s) - direct.item()).abs() < 1e-14);
}

#[test]
fn shape_errors_name_both_shapes() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let a = tape.constant(Tensor::zeros(3, 4));
    let b = tape.constant(Tensor::zeros(3, 4));
    let msg = tape.matmul(a, b).unwrap_err().to_string();
    assert!(msg.contains("3x4") && msg.matches("3x4").count() == 2, "{msg}");
    let c = tape.constant(Tensor::zeros(2, 3));
    assert!(tape.add(a, c).is_err());
}

#[test]
fn constants_get_no_gradient() {
    let store = ParamStore::new();
    let mut tape = Tape::new(&store);
    let c = tape.constant(Tensor::full(2, 2, 1.0));
    let x = tape.input(Tensor::full(2, 2, 3.0));
    let p = tape.mul(c, x).unwrap();
    let s = tape.sum(p);
    let g = tape.backward(s);
    assert!(g.wrt(c).is_none());
    assert_eq!(g.wrt(x).unwrap().data(), &[1.0; 4]);
}

#[test]
fn params_and_embeddings_accumulate() {
    let mut store = ParamStore::new();
    let table = store.add("emb", Tensor::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
    let w = store.add("w", Tensor::scalar(2.0));
    let mut tape = Tape::new(&store);
    let e = tape.embedding(table, &[1, 1, 0]).unwrap();
    let wv = tape.param(w);
    assert_eq!(tape.param(w), wv);
    let y = tape.mul(e, wv).unwrap();
    let s = tape.sum(y);
    let g = tape.backward(s).into_params();
    assert_eq!(g.get(table).unwrap().data(), &[2.0, 2.0, 4.0, 4.0]);
    assert_eq!(g.get(w).unwrap().item(), 1.0 + 2.0 + 3.0 * 2.0 + 4.0 * 2.0);
}

#[test]
fn dropout_mask_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let m = dropout_mask(100, 100, 0.3, &mut rng);
    let dropped = m.data().iter().filter(|&&x| x == 0.0).count() as f64 / 10_000.0;
    assert!((dropped - 0.3).abs() < 0.02);
    let kept = m.data().iter().find(|&&x| x != 0.0).unwrap();
    assert!((kept - 1.0 / 0.7).abs() < 1e-12);
}
