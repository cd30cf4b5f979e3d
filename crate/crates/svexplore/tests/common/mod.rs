#![allow(dead_code)]

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use svexplore::bundle::{precompute_bundle, Bundle, PrecomputeParams};
use svexplore::io::write_volume;
use svexplore_core::graph::{AdjacencyGraph, Edge};
use svexplore_core::volume::{generate_spheres_phantom, SpherePhantomSpec};

pub struct Phantom {
    pub dir: tempfile::TempDir,
    pub volume: PathBuf,
    pub truth: Vec<u8>,
}

/// Two-sphere phantom of side `n` written as raw f32 plus sidecar.
pub fn write_phantom(n: usize, sigma: f64, seed: u64) -> Phantom {
    let dir = tempfile::tempdir().unwrap();
    let volume = dir.path().join("phantom.raw");
    let (vol, truth) = generate_spheres_phantom(&SpherePhantomSpec::two_spheres(n, sigma, seed)).unwrap();
    write_volume(&volume, &vol).unwrap();
    Phantom { dir, volume, truth }
}

pub fn params(target: usize) -> PrecomputeParams {
    PrecomputeParams {
        supervoxel_size: target,
        ..PrecomputeParams::default()
    }
}

pub fn build_bundle(ph: &Phantom, name: &str, params: &PrecomputeParams) -> (PathBuf, Bundle) {
    let out = ph.dir.path().join(name);
    precompute_bundle(&ph.volume, &out, params).unwrap();
    let b = Bundle::load(&out).unwrap();
    (out, b)
}

pub fn read(dir: &Path, rel: &str) -> Vec<u8> {
    std::fs::read(dir.join(rel)).unwrap()
}

/// Plain FH written independently of the library: sorted edges, explicit
/// component relabeling, and the merge test `(w - Int(C)) |C| <= k` for both
/// sides. Returns the first-appearance partition and per-edge merge flags.
pub fn naive_fh(graph: &AdjacencyGraph, k: f64) -> (Vec<u32>, Vec<bool>) {
    let n = graph.node_sizes.len();
    let mut comp: Vec<usize> = (0..n).collect();
    let mut size: Vec<f64> = graph.node_sizes.clone();
    let mut int: Vec<f64> = vec![0.0; n];
    let mut order: Vec<usize> = (0..graph.edges.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (&graph.edges[i], &graph.edges[j]);
        a.weight.total_cmp(&b.weight).then(a.a.cmp(&b.a)).then(a.b.cmp(&b.b))
    });
    let mut merged = vec![false; graph.edges.len()];
    for i in order {
        let e = &graph.edges[i];
        let (ca, cb) = (comp[e.a as usize], comp[e.b as usize]);
        if ca == cb {
            continue;
        }
        let w = e.weight as f64;
        if (w - int[ca]) * size[ca] <= k && (w - int[cb]) * size[cb] <= k {
            merged[i] = true;
            for c in comp.iter_mut() {
                if *c == cb {
                    *c = ca;
                }
            }
            size[ca] += size[cb];
            int[ca] = w;
        }
    }
    let mut names = std::collections::HashMap::new();
    let part = comp
        .iter()
        .map(|c| {
            let next = names.len() as u32;
            *names.entry(*c).or_insert(next)
        })
        .collect();
    (part, merged)
}

/// Random `s^3` grid graph; `levels > 0` quantizes weights to force ties.
pub fn random_grid_graph(rng: &mut ChaCha8Rng, s: usize, levels: u32) -> AdjacencyGraph {
    let idx = |x: usize, y: usize, z: usize| (x + s * (y + s * z)) as u32;
    let sizes: Vec<f64> = (0..s * s * s).map(|_| rng.random_range(1..=64) as f64).collect();
    let mut edges = Vec::new();
    for z in 0..s {
        for y in 0..s {
            for x in 0..s {
                let mut push = |b: u32| {
                    let w: f32 = if levels > 0 {
                        rng.random_range(0..levels) as f32 / levels as f32
                    } else {
                        rng.random::<f32>()
                    };
                    edges.push(Edge { a: idx(x, y, z), b, weight: w });
                };
                if x + 1 < s {
                    push(idx(x + 1, y, z));
                }
                if y + 1 < s {
                    push(idx(x, y + 1, z));
                }
                if z + 1 < s {
                    push(idx(x, y, z + 1));
                }
            }
        }
    }
    AdjacencyGraph::new(sizes, edges).unwrap()
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
