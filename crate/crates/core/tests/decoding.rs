mod common;

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use unimrp::amr::cle::{chu_liu_edmonds, tree_score};
use unimrp::biaffine::{decode_flavor0, EdgeScores, Flavor0Decode};
use unimrp_tensor::Tensor;

/// Scores with edge probabilities `edge` and, for every pair, a label
/// distribution peaked at `label(i, j)`.
fn scores(edge: Vec<Vec<f64>>, classes: usize, label: impl Fn(usize, usize) -> usize) -> EdgeScores {
    let n = edge.len();
    let mut labels = Tensor::zeros(n * n, classes);
    for i in 0..n {
        for j in 0..n {
            for c in 0..classes {
                labels.set(i * n + j, c, if c == label(i, j) { 0.7 } else { 0.3 / (classes - 1) as f64 });
            }
        }
    }
    EdgeScores {
        edge: Tensor::from_rows(&edge).unwrap(),
        labels,
    }
}

#[test]
fn probability_above_half_adopts_an_edge() {
    let mut e = vec![vec![0.0; 3]; 3];
    e[1][2] = 0.6;
    e[2][1] = 0.5;
    let d = decode_flavor0(&scores(e, 3, |_, _| 2));
    assert_eq!(
        d,
        Flavor0Decode {
            edges: vec![(1, 2, 2)],
            tops: vec![],
            nodes: vec![1, 2],
        }
    );
}

#[test]
fn several_tops_are_allowed() {
    let mut e = vec![vec![0.0; 4]; 4];
    e[0][1] = 0.7;
    e[0][3] = 0.8;
    e[0][2] = 0.5;
    let d = decode_flavor0(&scores(e, 2, |_, _| 0));
    assert_eq!(d.tops, vec![1, 3]);
    assert_eq!(d.nodes, vec![1, 3]);
    assert!(d.edges.is_empty());
}

#[test]
fn isolated_non_tops_are_pruned() {
    let mut e = vec![vec![0.1; 5]; 5];
    e[0][4] = 0.9;
    e[1][2] = 0.95;
    // Diagonal cells never yield edges.
    e[3][3] = 0.99;
    let d = decode_flavor0(&scores(e, 2, |i, j| (i + j) % 2));
    assert_eq!(
        d,
        Flavor0Decode {
            edges: vec![(1, 2, 1)],
            tops: vec![4],
            nodes: vec![1, 2, 4],
        }
    );
}

#[test]
fn label_ties_take_the_lowest_index() {
    let mut e = vec![vec![0.0; 3]; 3];
    e[2][1] = 0.8;
    let mut s = scores(e, 3, |_, _| 0);
    for c in 0..3 {
        s.labels.set(2 * 3 + 1, c, 1.0 / 3.0);
    }
    assert_eq!(decode_flavor0(&s).edges, vec![(2, 1, 0)]);
}

fn random_scores(rng: &mut ChaCha8Rng, n: usize) -> EdgeScores {
    let edge: Vec<Vec<f64>> = (0..n).map(|_| (0..n).map(|_| rng.random::<f64>()).collect()).collect();
    let k = rng.random_range(0..3);
    scores(edge, 3, move |i, j| (i * 7 + j + k) % 3)
}

proptest! {
    /// Any strictly increasing recalibration that keeps each cell on the same
    /// side of 0.5 gives the same graph.
    #[test]
    fn decode_depends_only_on_the_threshold_side(seed in any::<u64>(), n in 1usize..9, a in 0.05f64..0.95) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_scores(&mut rng, n);
        let mut t = s.clone();
        for i in 0..n {
            for j in 0..n {
                let p = s.edge.get(i, j);
                let q = if p > 0.5 { 0.5 + (p - 0.5) * a + 1e-9 } else { (p.powf(1.0 + a) * 0.5f64.powf(-a)).min(0.5) };
                t.edge.set(i, j, q);
            }
        }
        prop_assert_eq!(decode_flavor0(&s), decode_flavor0(&t));
    }

    #[test]
    fn decoded_nodes_cover_edges_and_tops(seed in any::<u64>(), n in 1usize..10) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = decode_flavor0(&random_scores(&mut rng, n));
        for &(i, j, _) in &d.edges {
            prop_assert!(i != j && i > 0 && j > 0);
            prop_assert!(d.nodes.contains(&i) && d.nodes.contains(&j));
        }
        for t in &d.tops {
            prop_assert!(d.nodes.contains(t));
        }
        for v in &d.nodes {
            prop_assert!(d.tops.contains(v) || d.edges.iter().any(|&(i, j, _)| i == *v || j == *v));
        }
    }
}

fn dense_matrix(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    // Quarter-integer weights keep every sum exact.
    (0..n)
        .map(|_| (0..n).map(|_| rng.random_range(-40i32..40) as f64 * 0.25).collect())
        .collect()
}

#[test]
fn cle_matches_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for k in 0..200 {
        let n = rng.random_range(1..=6);
        let s = dense_matrix(&mut rng, n);
        let root = rng.random_range(0..n);
        let heads = chu_liu_edmonds(&s, root).unwrap();
        assert_eq!(heads[root], None);
        for (d, h) in heads.iter().enumerate() {
            if d != root {
                assert!(h.is_some_and(|h| h != d), "matrix {k}: node {d} has head {h:?}");
            }
        }
        let expected = if n == 1 { 0.0 } else { common::brute_force_arborescence(&s, root) };
        assert_eq!(tree_score(&s, &heads), expected, "matrix {k}");
    }
}

#[test]
fn cle_rejects_ragged_input() {
    assert!(chu_liu_edmonds(&[vec![0.0, 1.0], vec![0.0]], 0).is_err());
    assert!(chu_liu_edmonds(&[vec![0.0]], 3).is_err());
}
