//! Test-only oracles. Everything here enumerates CTC paths directly and
//! shares no code with the search or scoring implementations.
#![allow(dead_code)]

use std::collections::BTreeMap;

use kws_core::posteriorgram::Posteriorgram;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Calls `f(path, log_prob)` for each of the V^T frame paths in `[ws, we)`.
pub fn for_each_path(pg: &Posteriorgram, ws: usize, we: usize, mut f: impl FnMut(&[u32], f64)) {
    let len = we - ws;
    let vocab = pg.vocab() as u32;
    let mut path = vec![0u32; len];
    loop {
        let lp: f64 = path.iter().enumerate().map(|(i, &u)| pg.at(ws + i, u)).sum();
        f(&path, lp);
        let mut i = 0;
        loop {
            if i == len {
                return;
            }
            path[i] += 1;
            if path[i] < vocab {
                break;
            }
            path[i] = 0;
            i += 1;
        }
    }
}

/// Removes repeats, then blanks (unit 0).
pub fn collapse(path: &[u32]) -> Vec<u32> {
    let mut out = Vec::new();
    let mut prev = 0;
    for &u in path {
        if u != 0 && u != prev {
            out.push(u);
        }
        prev = u;
    }
    out
}

/// Linear-domain probability of every label sequence over the window.
pub fn label_probs(pg: &Posteriorgram, ws: usize, we: usize) -> BTreeMap<Vec<u32>, f64> {
    let mut out = BTreeMap::new();
    for_each_path(pg, ws, we, |p, lp| {
        *out.entry(collapse(p)).or_insert(0.0) += lp.exp();
    });
    out
}

/// Best single path (log prob, path) for each label sequence.
pub fn best_paths(pg: &Posteriorgram) -> BTreeMap<Vec<u32>, (f64, Vec<u32>)> {
    let mut out: BTreeMap<Vec<u32>, (f64, Vec<u32>)> = BTreeMap::new();
    for_each_path(pg, 0, pg.frames(), |p, lp| {
        let e = out.entry(collapse(p)).or_insert((f64::NEG_INFINITY, Vec::new()));
        if lp > e.0 {
            *e = (lp, p.to_vec());
        }
    });
    out
}

/// Random normalized posteriorgram with rows drawn from a flat Dirichlet.
pub fn random_pg(rng: &mut ChaCha8Rng, frames: usize, vocab: usize, unit_set_id: &str) -> Posteriorgram {
    let rows: Vec<Vec<f64>> = (0..frames)
        .map(|_| {
            let raw: Vec<f64> = (0..vocab).map(|_| -rng.gen_range(1e-9f64..1.0).ln()).collect();
            let total: f64 = raw.iter().sum();
            raw.iter().map(|x| x / total).collect()
        })
        .collect();
    let mut pg = Posteriorgram::from_probs("rand", unit_set_id, &rows).unwrap();
    if frames == 0 {
        pg = Posteriorgram::new("rand", unit_set_id, 0.04, vocab, Vec::new()).unwrap();
    }
    pg
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1e-300)
}
