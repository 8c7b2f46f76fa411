#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use toromod::complex::{build_ring, Edge, Face, Step, ToroidalComplex, Vertex, DEFAULT_Q};

fn fwd(edge: usize) -> Step {
    Step { edge, forward: true }
}

fn back(edge: usize) -> Step {
    Step { edge, forward: false }
}

fn assemble(n: usize, edges: Vec<Edge>, faces: Vec<Face>, name: &str) -> ToroidalComplex {
    let mut meta = BTreeMap::new();
    meta.insert("builder".into(), name.into());
    ToroidalComplex::from_parts(vec![Vertex { mu: 1.0 }; n], edges, faces, DEFAULT_Q, meta).unwrap()
}

fn random_edge(rng: &mut ChaCha8Rng, u: usize, v: usize, w: i32) -> Edge {
    Edge { u, v, ell: rng.gen_range(0.5..2.0), mu: rng.gen_range(0.5..2.0), w }
}

/// Ring with random edge lengths and measures.
pub fn random_ring(m: usize, seed: u64) -> ToroidalComplex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let edges = (0..m).map(|i| random_edge(&mut rng, i, (i + 1) % m, i32::from(i + 1 == m))).collect();
    assemble(m, edges, Vec::new(), "random-ring")
}

/// Two rings of `m` vertices joined by rungs, with square faces. Edges:
/// bottom `i`, top `m + i`, rung `2m + i`.
pub fn ladder(m: usize, seed: u64) -> ToroidalComplex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for row in 0..2 {
        for i in 0..m {
            edges.push(random_edge(&mut rng, row * m + i, row * m + (i + 1) % m, i32::from(i + 1 == m)));
        }
    }
    for i in 0..m {
        edges.push(random_edge(&mut rng, i, m + i, 0));
    }
    let faces = (0..m)
        .map(|i| Face { cycle: vec![fwd(i), fwd(2 * m + (i + 1) % m), back(m + i), back(2 * m + i)] })
        .collect();
    assemble(2 * m, edges, faces, "ladder")
}

/// Ladder with one diagonal per square, split into two triangles.
pub fn braced_ladder(m: usize, seed: u64) -> ToroidalComplex {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut edges = Vec::new();
    for row in 0..2 {
        for i in 0..m {
            edges.push(random_edge(&mut rng, row * m + i, row * m + (i + 1) % m, i32::from(i + 1 == m)));
        }
    }
    for i in 0..m {
        edges.push(random_edge(&mut rng, i, m + i, 0));
    }
    for i in 0..m {
        edges.push(random_edge(&mut rng, i, m + (i + 1) % m, i32::from(i + 1 == m)));
    }
    let mut faces = Vec::new();
    for i in 0..m {
        let (b, t, r0, r1, d) = (i, m + i, 2 * m + i, 2 * m + (i + 1) % m, 3 * m + i);
        faces.push(Face { cycle: vec![fwd(b), fwd(r1), back(d)] });
        faces.push(Face { cycle: vec![fwd(d), back(t), back(r0)] });
    }
    assemble(2 * m, edges, faces, "braced-ladder")
}

/// Every complex with at most 20 edges used by the equivalence and surface suites.
pub fn small_corpus() -> Vec<(String, ToroidalComplex)> {
    let mut out = Vec::new();
    for (m, len, area) in [(3, 1.0, 1.0), (4, 2.0, 3.0), (8, 1.0, 3.0)] {
        out.push((format!("ring-{m}-{len}-{area}"), build_ring(m, len, area).unwrap()));
    }
    for m in [3, 5, 7] {
        out.push((format!("random-ring-{m}"), random_ring(m, m as u64)));
    }
    for m in [3, 4, 5, 6] {
        out.push((format!("ladder-{m}"), ladder(m, 10 + m as u64)));
    }
    for m in [3, 4, 5] {
        out.push((format!("braced-ladder-{m}"), braced_ladder(m, 20 + m as u64)));
    }
    out
}
