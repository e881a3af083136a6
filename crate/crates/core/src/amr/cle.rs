//! Maximum spanning arborescence (Chu-Liu-Edmonds).

use crate::error::{Error, Result};

/// Heads of the maximum-weight arborescence rooted at `root` over a dense
/// `n × n` score matrix (`scores[h][d]` scores the edge `h → d`). The root's
/// entry is `None`. Ties go to the lower head index.
pub fn chu_liu_edmonds(scores: &[Vec<f64>], root: usize) -> Result<Vec<Option<usize>>> {
    let n = scores.len();
    if root >= n || scores.iter().any(|r| r.len() != n) {
        return Err(Error::model(format!("bad score matrix for root {root}")));
    }
    let nodes: Vec<usize> = (0..n).collect();
    let heads = solve(scores, &nodes, root)?;
    let mut out = vec![None; n];
    for (d, h) in heads {
        out[d] = Some(h);
    }
    Ok(out)
}

/// Works on the sub-problem over `nodes` (original indices); returns
/// `(dependent, head)` pairs.
fn solve(scores: &[Vec<f64>], nodes: &[usize], root: usize) -> Result<Vec<(usize, usize)>> {
    let m = nodes.len();
    let local = |i: usize| nodes[i];
    let root_l = nodes.iter().position(|&x| x == root).expect("root in nodes");
    // Best incoming edge for each non-root node.
    let mut best = vec![usize::MAX; m];
    for d in 0..m {
        if d == root_l {
            continue;
        }
        let mut bh = usize::MAX;
        let mut bs = f64::NEG_INFINITY;
        for h in 0..m {
            if h == d {
                continue;
            }
            let s = scores[local(h)][local(d)];
            if bh == usize::MAX || s > bs {
                bh = h;
                bs = s;
            }
        }
        if bh == usize::MAX {
            return Err(Error::model(format!("node {} has no incoming edge", local(d))));
        }
        best[d] = bh;
    }
    // Look for a cycle.
    let mut color = vec![0u8; m];
    let mut cycle: Option<Vec<usize>> = None;
    for start in 0..m {
        if color[start] != 0 {
            continue;
        }
        let mut path = Vec::new();
        let mut x = start;
        while x != root_l && color[x] == 0 {
            color[x] = 1;
            path.push(x);
            x = best[x];
        }
        if x != root_l && color[x] == 1 {
            let pos = path.iter().position(|&p| p == x).expect("on path");
            cycle = Some(path[pos..].to_vec());
        }
        for p in path {
            color[p] = 2;
        }
        if cycle.is_some() {
            break;
        }
    }
    let Some(cycle) = cycle else {
        return Ok((0..m).filter(|&d| d != root_l).map(|d| (local(d), local(best[d]))).collect());
    };
    // Contract the cycle into its first member's slot.
    let in_cycle: Vec<bool> = (0..m).map(|i| cycle.contains(&i)).collect();
    let cycle_score = |d: usize| scores[local(best[d])][local(d)];
    let outside: Vec<usize> = (0..m).filter(|&i| !in_cycle[i]).collect();
    // New sub-problem nodes: outside nodes plus a virtual node at index `nn`.
    let nn = outside.len();
    let mut sub = vec![vec![f64::NEG_INFINITY; nn + 1]; nn + 1];
    let mut enter = vec![usize::MAX; nn + 1];
    let mut leave = vec![usize::MAX; nn + 1];
    for (a, &u) in outside.iter().enumerate() {
        for (b, &v) in outside.iter().enumerate() {
            if a != b {
                sub[a][b] = scores[local(u)][local(v)];
            }
        }
        // u → cycle: best entry point.
        let mut bs = f64::NEG_INFINITY;
        for &v in &cycle {
            let s = scores[local(u)][local(v)] - cycle_score(v);
            if enter[a] == usize::MAX || s > bs {
                bs = s;
                enter[a] = v;
            }
        }
        sub[a][nn] = bs;
        // cycle → u: best exit.
        let mut bs = f64::NEG_INFINITY;
        for &c in &cycle {
            let s = scores[local(c)][local(u)];
            if leave[a] == usize::MAX || s > bs {
                bs = s;
                leave[a] = c;
            }
        }
        sub[nn][a] = bs;
    }
    // Solve recursively with the contracted matrix, using local indices as
    // "original" ones.
    let sub_nodes: Vec<usize> = (0..=nn).collect();
    let sub_root = outside.iter().position(|&x| x == root_l).expect("root is outside any cycle");
    let heads = solve(&sub, &sub_nodes, sub_root)?;
    let mut result: Vec<(usize, usize)> = Vec::new();
    let mut cycle_entry: Option<(usize, usize)> = None;
    for (d, h) in heads {
        if d == nn {
            // Edge entering the cycle.
            cycle_entry = Some((enter[h], outside[h]));
        } else if h == nn {
            result.push((local(outside[d]), local(leave[d])));
        } else {
            result.push((local(outside[d]), local(outside[h])));
        }
    }
    let (entry, from) = cycle_entry.ok_or_else(|| Error::model("contracted cycle unreachable"))?;
    for &c in &cycle {
        if c == entry {
            result.push((local(c), local(from)));
        } else {
            result.push((local(c), local(best[c])));
        }
    }
    Ok(result)
}

/// Total score of a head assignment.
pub fn tree_score(scores: &[Vec<f64>], heads: &[Option<usize>]) -> f64 {
    heads
        .iter()
        .enumerate()
        .filter_map(|(d, h)| h.map(|h| scores[h][d]))
        .sum()
}
