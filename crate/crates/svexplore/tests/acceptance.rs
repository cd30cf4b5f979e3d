//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails.

mod common;

use std::collections::{BTreeSet, HashSet, VecDeque};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::*;
use rand::seq::SliceRandom;
use rand::Rng;
use svexplore::bundle::{Bundle, DATA_FILES, MANIFEST};
use svexplore::Manifest;
use svexplore_core::fh::{exhaustive_cluster, SweepConfig, ThresholdRule};
use svexplore_core::graph::{chi_squared_distance, AdjacencyGraph, SvHistogram};
use svexplore_core::metacluster::{jaccard_distance, reverse_delete_cluster, Region, RegionCatalog};
use svexplore_core::tree::{SearchHit, ROOT};
use svexplore_core::viz::{persistence_simplify, Polyline1D};
use svexplore_core::{IntervalClustering, MetaClusterTree, SearchQuery};

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn partition_set(cs: &[IntervalClustering]) -> BTreeSet<Vec<u32>> {
    cs.iter().map(|c| c.partition.clone()).collect()
}

fn sweep(graph: &AdjacencyGraph, workers: usize, rule: ThresholdRule) -> Vec<IntervalClustering> {
    let cfg = SweepConfig {
        workers,
        threshold_rule: rule,
        ..SweepConfig::default()
    };
    exhaustive_cluster(graph, &cfg).unwrap()
}

/// Start of the terminal interval; every output interval lies in `[0, K_stop]`
/// except the terminal one, which begins there.
fn k_stop(cs: &[IntervalClustering]) -> f64 {
    cs.last().unwrap().k_start
}

struct Fixture {
    phantom: Phantom,
    bundle: Bundle,
    pipeline_time: Duration,
}

fn fixture() -> Fixture {
    let phantom = write_phantom(24, 2.0, 7);
    let t0 = Instant::now();
    let (_, bundle) = build_bundle(&phantom, "bundle", &params(64));
    Fixture {
        phantom,
        bundle,
        pipeline_time: t0.elapsed(),
    }
}

fn exhaustiveness(f: &Fixture) -> Outcome {
    let g = &f.bundle.graph;
    let t0 = Instant::now();
    let cs = sweep(g, 1, ThresholdRule::Max);
    let elapsed = t0.elapsed();
    let stop = k_stop(&cs);
    let mut rng = rng(11);
    let mut ks: Vec<f64> = (0..1000).map(|_| rng.random_range(0.0..=stop)).collect();
    for c in &cs {
        ks.push(c.k_start);
        if c.k_end <= stop {
            ks.push(c.k_end);
        }
    }
    let sampled: BTreeSet<Vec<u32>> = ks.iter().map(|&k| naive_fh(g, k).0).collect();
    let ours = partition_set(&cs);
    ensure(sampled == ours, || {
        format!(
            "{} sampled partitions vs {} enumerated ({} missing, {} extra)",
            sampled.len(),
            ours.len(),
            sampled.difference(&ours).count(),
            ours.difference(&sampled).count()
        )
    })?;
    ensure(elapsed < Duration::from_secs(60), || format!("sweep took {elapsed:?}"))?;
    Ok(format!(
        "{} nodes, {} edges, {} distinct partitions, {} samples, K_stop={stop:.4}, sweep {:.3}s",
        g.node_count(),
        g.edges.len(),
        ours.len(),
        ks.len(),
        elapsed.as_secs_f64()
    ))
}

fn interval_validity(f: &Fixture) -> Outcome {
    let g = &f.bundle.graph;
    let cs = &f.bundle.clusterings;
    let mut rng = rng(12);
    let mut picks: Vec<usize> = (0..cs.len()).collect();
    picks.shuffle(&mut rng);
    picks.truncate(20);
    let mut below_end_skipped = 0;
    for &i in &picks {
        let c = &cs[i];
        let (base, base_merges) = naive_fh(g, c.k_start);
        ensure(base == c.partition, || format!("interval {i}: partition differs at k_start"))?;
        if c.k_end.is_finite() {
            let mid = 0.5 * (c.k_start + c.k_end);
            ensure(naive_fh(g, mid).0 == c.partition, || format!("interval {i}: differs at midpoint"))?;
            let near = c.k_end * (1.0 - 1e-9);
            if near >= c.k_start {
                ensure(naive_fh(g, near).0 == c.partition, || format!("interval {i}: differs just below k_end"))?;
            } else {
                below_end_skipped += 1;
            }
            ensure(naive_fh(g, c.k_end).1 != base_merges, || {
                format!("interval {i}: no merge decision changes at k_end={}", c.k_end)
            })?;
        } else {
            for k in [c.k_start + 1.0, c.k_start * 2.0 + 1e6] {
                ensure(naive_fh(g, k).0 == c.partition, || format!("interval {i}: differs at k={k}"))?;
            }
        }
    }
    Ok(format!(
        "{} of {} intervals checked; {below_end_skipped} narrower than 1e-9 relative",
        picks.len(),
        cs.len()
    ))
}

fn check_tiling(cs: &[IntervalClustering]) -> Result<(), String> {
    ensure(cs[0].k_start == 0.0, || "first interval does not start at 0".into())?;
    for (i, w) in cs.windows(2).enumerate() {
        ensure(w[0].k_start < w[0].k_end, || format!("interval {i} is empty"))?;
        ensure(w[0].k_end == w[1].k_start, || format!("gap or overlap after interval {i}"))?;
        ensure(w[0].partition != w[1].partition, || format!("intervals {i} and {} not coalesced", i + 1))?;
    }
    // Every graph checked here is connected.
    let last = cs.last().unwrap();
    ensure(last.region_count == 1, || format!("final interval has {} regions", last.region_count))?;
    let first_small = cs
        .iter()
        .position(|c| c.region_count <= 2)
        .ok_or("no interval with two regions or fewer")?;
    let first_one_after = first_small + cs[first_small..].iter().position(|c| c.region_count == 1).unwrap();
    ensure(first_one_after == cs.len() - 1, || {
        format!("sweep continued past interval {first_one_after}")
    })?;
    Ok(())
}

fn tiling(f: &Fixture) -> Outcome {
    check_tiling(&f.bundle.clusterings)?;
    let mut rng = rng(13);
    for t in 0..10 {
        let g = random_grid_graph(&mut rng, 5, if t % 2 == 0 { 0 } else { 8 });
        check_tiling(&sweep(&g, 4, ThresholdRule::Max)).map_err(|e| format!("random graph {t}: {e}"))?;
    }
    let last = f.bundle.clusterings.last().unwrap();
    Ok(format!(
        "phantom: {} intervals tile [0, {:.4}), final region_count={}; 10 random graphs tiled",
        f.bundle.clusterings.len(),
        last.k_end,
        last.region_count
    ))
}

fn determinism(f: &Fixture) -> Outcome {
    let mut p1 = params(64);
    p1.workers = 1;
    let mut p12 = params(64);
    p12.workers = 12;
    let (d1, _) = build_bundle(&f.phantom, "w1", &p1);
    let (d12, _) = build_bundle(&f.phantom, "w12", &p12);
    for file in DATA_FILES {
        ensure(read(&d1, file) == read(&d12, file), || format!("{file} differs"))?;
    }
    let mut previews: Vec<_> = std::fs::read_dir(d1.join("previews")).unwrap().map(|e| e.unwrap().file_name()).collect();
    previews.sort();
    for p in &previews {
        let rel = format!("previews/{}", p.to_string_lossy());
        ensure(read(&d1, &rel) == read(&d12, &rel), || format!("{rel} differs"))?;
    }
    let g = &f.bundle.graph;
    ensure(sweep(g, 1, ThresholdRule::Max) == sweep(g, 12, ThresholdRule::Max), || {
        "in-memory interval lists differ".into()
    })?;
    Ok(format!("{} data files and {} previews byte-identical", DATA_FILES.len(), previews.len()))
}

fn min_rule(_: &Fixture) -> Outcome {
    let mut rng = rng(14);
    let mut counts = Vec::new();
    for t in 0..10 {
        let g = random_grid_graph(&mut rng, 6, if t % 3 == 2 { 6 } else { 0 });
        let max = sweep(&g, 3, ThresholdRule::Max);
        let min = sweep(&g, 3, ThresholdRule::Min);
        ensure(partition_set(&max) == partition_set(&min), || format!("graph {t}: partition sets differ"))?;
        counts.push((partition_set(&max).len(), max.len(), min.len()));
    }
    Ok(format!("10 graphs; (partitions, max intervals, min intervals) = {counts:?}"))
}

fn feature_recovery(f: &Fixture) -> Outcome {
    let b = &f.bundle;
    let truth = &f.phantom.truth;
    let mut best = Vec::new();
    for sphere in 1..=2u8 {
        let mut per_sv = vec![0u64; b.labeling.count()];
        for (l, &t) in b.labeling.labels.iter().zip(truth) {
            if t == sphere {
                per_sv[*l as usize] += 1;
            }
        }
        let total: u64 = per_sv.iter().sum();
        let j = b
            .metaclusters
            .iter()
            .map(|mc| {
                let inter: u64 = mc.footprint.iter().map(|&s| per_sv[s as usize]).sum();
                inter as f64 / (mc.footprint_voxel_size + total - inter) as f64
            })
            .fold(0.0, f64::max);
        best.push(j);
    }
    ensure(best.iter().all(|&j| j >= 0.9), || format!("best Jaccard per sphere {best:?}"))?;
    ensure(f.pipeline_time < Duration::from_secs(120), || format!("pipeline took {:?}", f.pipeline_time))?;
    Ok(format!(
        "best Jaccard per sphere {:.4} / {:.4}; pipeline {:.2}s",
        best[0],
        best[1],
        f.pipeline_time.as_secs_f64()
    ))
}

fn random_catalog(rng: &mut rand_chacha::ChaCha8Rng) -> (RegionCatalog, Vec<u64>) {
    let nsv = rng.random_range(20..60);
    let sizes: Vec<u64> = (0..nsv).map(|_| rng.random_range(1..40)).collect();
    let bases: Vec<Vec<u32>> = (0..rng.random_range(2..6))
        .map(|_| {
            let lo = rng.random_range(0..nsv as u32 - 5);
            let hi = rng.random_range(lo + 1..=nsv as u32);
            (lo..hi).collect()
        })
        .collect();
    let mut seen = BTreeSet::new();
    for _ in 0..rng.random_range(5..40) {
        let mut s: BTreeSet<u32> = bases[rng.random_range(0..bases.len())].iter().copied().collect();
        for _ in 0..rng.random_range(0..4) {
            let v = rng.random_range(0..nsv as u32);
            if !s.remove(&v) {
                s.insert(v);
            }
        }
        if !s.is_empty() {
            seen.insert(s.into_iter().collect::<Vec<u32>>());
        }
    }
    let regions = seen
        .into_iter()
        .map(|svs| Region {
            voxel_size: svs.iter().map(|&s| sizes[s as usize]).sum(),
            supervoxels: svs,
            intervals: vec![0],
        })
        .collect();
    (RegionCatalog { regions }, sizes)
}

fn brute_jaccard(a: &[u32], b: &[u32], sizes: &[u64]) -> f64 {
    let sa: HashSet<u32> = a.iter().copied().collect();
    let sb: HashSet<u32> = b.iter().copied().collect();
    let inter: u64 = sa.intersection(&sb).map(|&s| sizes[s as usize]).sum();
    let union: u64 = sa.union(&sb).map(|&s| sizes[s as usize]).sum();
    1.0 - inter as f64 / union as f64
}

fn reverse_delete(_: &Fixture) -> Outcome {
    let mut rng = rng(15);
    let thresholds = [0.1, 0.3, 0.5, 0.7];
    let mut total_regions = 0;
    for t in 0..50 {
        let (cat, sizes) = random_catalog(&mut rng);
        let thr = thresholds[t % thresholds.len()];
        let n = cat.regions.len();
        total_regions += n;
        let mut adj = vec![Vec::new(); n];
        for i in 0..n {
            for j in i + 1..n {
                if brute_jaccard(&cat.regions[i].supervoxels, &cat.regions[j].supervoxels, &sizes) < thr {
                    adj[i].push(j);
                    adj[j].push(i);
                }
            }
        }
        let mut comp = vec![usize::MAX; n];
        let mut expected: BTreeSet<Vec<u32>> = BTreeSet::new();
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut members = vec![];
            let mut q = VecDeque::from([s]);
            comp[s] = s;
            while let Some(v) = q.pop_front() {
                members.push(v as u32);
                for &w in &adj[v] {
                    if comp[w] == usize::MAX {
                        comp[w] = s;
                        q.push_back(w);
                    }
                }
            }
            members.sort_unstable();
            expected.insert(members);
        }
        let got: BTreeSet<Vec<u32>> = reverse_delete_cluster(&cat, &sizes, thr)
            .unwrap()
            .into_iter()
            .map(|m| m.members)
            .collect();
        ensure(got == expected, || format!("catalog {t} (t={thr}): components differ"))?;
    }
    Ok(format!("50 catalogs, {total_regions} regions, thresholds {thresholds:?}"))
}

fn footprint_sets(tree: &MetaClusterTree) -> Vec<HashSet<u32>> {
    tree.footprints.iter().map(|f| f.iter().copied().collect()).collect()
}

fn check_tree(tree: &MetaClusterTree) -> Result<(), String> {
    let fps = footprint_sets(tree);
    let nsv = tree.leaf_index.len() as u32;
    let whole: HashSet<u32> = (0..nsv).collect();
    let fp_of = |inst: u32| match tree.nodes[inst as usize].metacluster_id {
        None => &whole,
        Some(m) => &fps[m as usize],
    };
    for n in &tree.nodes {
        let mut prev = u64::MAX;
        for &c in &n.children {
            let child = &tree.nodes[c as usize];
            ensure(child.parent_instance == Some(n.instance_id), || format!("bad parent link at {c}"))?;
            ensure(fp_of(c).is_subset(fp_of(n.instance_id)), || {
                format!("child {c} not contained in {}", n.instance_id)
            })?;
            ensure(child.footprint_voxel_size <= prev, || format!("siblings under {} not descending", n.instance_id))?;
            prev = child.footprint_voxel_size;
        }
    }
    // Meta-clusters present in each instance's subtree, as bitsets.
    let n = fps.len();
    let words = n.div_ceil(64);
    let mut desc = vec![vec![0u64; words]; tree.nodes.len()];
    for inst in (0..tree.nodes.len()).rev() {
        let node = &tree.nodes[inst];
        let mut acc = vec![0u64; words];
        if let Some(m) = node.metacluster_id {
            acc[m as usize / 64] |= 1 << (m % 64);
        }
        for &c in &node.children {
            ensure((c as usize) > inst, || format!("child {c} precedes parent {inst}"))?;
            for (w, d) in acc.iter_mut().zip(&desc[c as usize]) {
                *w |= d;
            }
        }
        desc[inst] = acc;
    }
    let has = |inst: u32, m: usize| desc[inst as usize][m / 64] >> (m % 64) & 1 == 1;
    for b in 0..n {
        for a in 0..n {
            if a == b || !fps[a].is_subset(&fps[b]) {
                continue;
            }
            // Equal footprints: the lower id plays the superset.
            if fps[a].len() == fps[b].len() && a < b {
                continue;
            }
            for &inst in &tree.instances[b] {
                ensure(has(inst, a), || {
                    format!("instance {inst} of meta-cluster {b} has no instance of subset {a} below it")
                })?;
            }
            ensure(tree.instances[a].iter().any(|&i| ancestors_of(tree, i).contains(&(b as u32))), || {
                format!("superset {b} is not an ancestor of any instance of {a}")
            })?;
        }
    }
    Ok(())
}

fn ancestors_of(tree: &MetaClusterTree, inst: u32) -> HashSet<u32> {
    let mut out = HashSet::new();
    let mut cur = tree.nodes[inst as usize].parent_instance;
    while let Some(p) = cur {
        if let Some(m) = tree.nodes[p as usize].metacluster_id {
            out.insert(m);
        }
        cur = tree.nodes[p as usize].parent_instance;
    }
    out
}

fn tree_invariants(f: &Fixture) -> Outcome {
    let mut summary = Vec::new();
    check_tree(&f.bundle.tree)?;
    summary.push(f.bundle.tree.nodes.len());
    for (seed, target) in [(21u64, 27usize), (22, 64), (23, 125)] {
        let ph = write_phantom(24, 2.0, seed);
        let (_, b) = build_bundle(&ph, "t", &params(target));
        ensure(b.tree.nodes.len() <= 5000, || format!("tree of {} nodes exceeds 5,000", b.tree.nodes.len()))?;
        check_tree(&b.tree).map_err(|e| format!("seed {seed}, target {target}: {e}"))?;
        summary.push(b.tree.nodes.len());
    }
    Ok(format!("trees of {summary:?} nodes checked on all pairs"))
}

fn search_oracle(f: &Fixture) -> Outcome {
    let b = &f.bundle;
    let tree = &b.tree;
    let fps = footprint_sets(tree);
    let dims = b.labeling.dims;
    let total = tree.total_voxels;
    let mut rng = rng(16);
    let mut nonempty = 0;
    for q in 0..100 {
        let c: [i64; 3] = std::array::from_fn(|a| rng.random_range(0..dims[a] as i64));
        let voxels: Vec<[i64; 3]> = (0..rng.random_range(1..6))
            .map(|_| std::array::from_fn(|a| (c[a] + rng.random_range(-2..=2)).clamp(0, dims[a] as i64 - 1)))
            .collect();
        let (min, max) = if q % 4 == 0 {
            (0, u64::MAX)
        } else {
            let x = rng.random_range(0..=total);
            let y = rng.random_range(0..=total);
            (x.min(y), x.max(y))
        };
        let svs: HashSet<u32> = voxels
            .iter()
            .map(|p| b.labeling.label_at([p[0] as usize, p[1] as usize, p[2] as usize]))
            .collect();
        let mut seen = HashSet::new();
        let mut expected: Vec<SearchHit> = Vec::new();
        for n in &tree.nodes {
            let Some(m) = n.metacluster_id else { continue };
            let size = n.footprint_voxel_size;
            if (min..=max).contains(&size) && svs.is_subset(&fps[m as usize]) && seen.insert(m) {
                expected.push(SearchHit {
                    metacluster_id: m,
                    instance_id: tree.canonical[m as usize],
                    footprint_voxel_size: size,
                });
            }
        }
        expected.sort_by_key(|h| (h.footprint_voxel_size, h.metacluster_id));
        let got = tree
            .search_nodes(
                &b.labeling,
                &SearchQuery {
                    brushed_voxels: voxels.clone(),
                    min_size: min,
                    max_size: max,
                },
            )
            .unwrap();
        ensure(got == expected, || format!("query {q}: {} hits vs {} expected", got.len(), expected.len()))?;
        nonempty += usize::from(!got.is_empty());

        let smallest = tree
            .nodes
            .iter()
            .filter_map(|n| n.metacluster_id.map(|m| (n.footprint_voxel_size, m)))
            .filter(|&(s, m)| s < total && svs.is_subset(&fps[m as usize]))
            .min();
        let want = smallest.map_or(ROOT, |(_, m)| tree.canonical[m as usize]);
        let got = tree.containing_node(&b.labeling, &voxels).unwrap();
        ensure(got == want, || format!("query {q}: containing node {got}, expected {want}"))?;
    }

    let manifest: Manifest =
        serde_json::from_slice(&std::fs::read(f.bundle.dir.join(MANIFEST)).unwrap()).unwrap();
    let p = &manifest.params;
    ensure(p.jaccard_threshold == 0.3, || format!("jaccard_threshold {}", p.jaccard_threshold))?;
    ensure(p.bins == 64, || format!("bins {}", p.bins))?;
    ensure(p.initial_range == 50.0, || format!("initial_range {}", p.initial_range))?;
    ensure(p.growth_factor == 1.5, || format!("growth_factor {}", p.growth_factor))?;
    let sweep = SweepConfig::default();
    ensure(sweep.processing_range(0) == (0.0, 50.0) && sweep.processing_range(1) == (50.0, 125.0), || {
        "processing ranges".into()
    })?;
    Ok(format!(
        "100 queries ({nonempty} with hits) match full scans; manifest t=0.3, bins=64, ranges [0,50) x1.5"
    ))
}

/// Interior extremum runs of `vals` as `(first, last, value)`.
fn oracle_extrema(vals: &[u8]) -> Vec<(usize, usize, u8)> {
    let mut res = Vec::new();
    let mut i = 0;
    let mut runs = Vec::new();
    while i < vals.len() {
        let mut j = i;
        while j + 1 < vals.len() && vals[j + 1] == vals[i] {
            j += 1;
        }
        runs.push((i, j, vals[i]));
        i = j + 1;
    }
    for r in 1..runs.len().saturating_sub(1) {
        let (l, m, rt) = (runs[r - 1].2, runs[r].2, runs[r + 1].2);
        if (m > l && m > rt) || (m < l && m < rt) {
            res.push(runs[r]);
        }
    }
    res
}

/// Every terminal vertex selection reachable by cancelling, at each step,
/// any neighbouring extremum pair of minimal persistence below `t`.
fn oracle_terminals(keep: Vec<usize>, vals: &[u8], t: u8, out: &mut HashSet<Vec<usize>>) {
    let sub: Vec<u8> = keep.iter().map(|&i| vals[i]).collect();
    let ext = oracle_extrema(&sub);
    let pairs: Vec<(u8, usize)> = ext
        .windows(2)
        .enumerate()
        .map(|(i, w)| (w[0].2.abs_diff(w[1].2), i))
        .filter(|&(p, _)| p < t)
        .collect();
    let Some(&(pmin, _)) = pairs.iter().min() else {
        out.insert(keep);
        return;
    };
    for &(p, i) in &pairs {
        if p != pmin {
            continue;
        }
        let (lo, hi) = (ext[i].0, ext[i + 1].1);
        let next: Vec<usize> = keep
            .iter()
            .enumerate()
            .filter(|&(pos, _)| pos < lo || pos > hi)
            .map(|(_, &v)| v)
            .collect();
        oracle_terminals(next, vals, t, out);
    }
}

fn micro_checks(_: &Fixture) -> Outcome {
    let mut rng = rng(17);
    for i in 0..10_000 {
        let mk = |rng: &mut rand_chacha::ChaCha8Rng| {
            let counts: Vec<u64> = (0..64)
                .map(|_| if rng.random_bool(0.6) { 0 } else { rng.random_range(0..500) })
                .collect();
            SvHistogram::from_counts(&counts)
        };
        let (a, b) = (mk(&mut rng), mk(&mut rng));
        let (ab, ba) = (chi_squared_distance(&a, &b), chi_squared_distance(&b, &a));
        ensure(ab == ba, || format!("chi2 pair {i} asymmetric"))?;
        ensure((0.0..=1.0 + 1e-12).contains(&ab), || format!("chi2 pair {i} out of range: {ab}"))?;
        ensure(chi_squared_distance(&a, &a) == 0.0, || format!("chi2 self-distance {i}"))?;
    }
    for i in 0..10_000 {
        let nsv = 40;
        let sizes: Vec<u64> = (0..nsv).map(|_| rng.random_range(1..100)).collect();
        let mut mk = || {
            let mut s: Vec<u32> = (0..nsv as u32).filter(|_| rng.random_bool(0.3)).collect();
            if s.is_empty() {
                s.push(0);
            }
            s
        };
        let (a, b, c) = (mk(), mk(), mk());
        let d = |x: &[u32], y: &[u32]| jaccard_distance(x, y, &sizes);
        ensure(d(&a, &a) == 0.0, || format!("jaccard triple {i}: identity"))?;
        ensure(d(&a, &b) == d(&b, &a), || format!("jaccard triple {i}: symmetry"))?;
        ensure((0.0..=1.0).contains(&d(&a, &b)), || format!("jaccard triple {i}: range"))?;
        ensure(d(&a, &c) <= d(&a, &b) + d(&b, &c) + 1e-12, || format!("jaccard triple {i}: triangle"))?;
        ensure((d(&a, &b) - brute_jaccard(&a, &b, &sizes)).abs() < 1e-12, || {
            format!("jaccard triple {i}: value")
        })?;
    }
    let mut curves = 0u64;
    let mut tied = 0u64;
    let mut vals = Vec::with_capacity(10);
    for len in 1..=10u32 {
        for code in 0..5u64.pow(len) {
            vals.clear();
            let mut c = code;
            for _ in 0..len {
                vals.push((c % 5) as u8);
                c /= 5;
            }
            let curve = Polyline1D::from_values(&vals.iter().map(|&v| v as f64).collect::<Vec<_>>());
            for t in 2..=5u8 {
                let ours = persistence_simplify(&curve, t as f64);
                let kept: Vec<usize> = ours.points.iter().map(|p| p.0 as usize).collect();
                let mut terminals = HashSet::new();
                oracle_terminals((0..vals.len()).collect(), &vals, t, &mut terminals);
                ensure(terminals.contains(&kept), || {
                    format!("curve {vals:?}, t={t}: kept {kept:?}, oracle {terminals:?}")
                })?;
                tied += u64::from(terminals.len() > 1);
            }
            curves += 1;
        }
    }
    Ok(format!(
        "10^4 chi2 pairs, 10^4 Jaccard triples, {curves} curves x 4 thresholds ({tied} with tie-dependent results)"
    ))
}

fn main() {
    let t0 = Instant::now();
    let fx = fixture();
    type Check = fn(&Fixture) -> Outcome;
    let checks: [(&str, Check); 10] = [
        ("exhaustiveness oracle", exhaustiveness),
        ("interval validity", interval_validity),
        ("tiling and termination", tiling),
        ("determinism under parallelism", determinism),
        ("min rule partition sets", min_rule),
        ("feature recovery", feature_recovery),
        ("reverse-delete equivalence", reverse_delete),
        ("tree invariants", tree_invariants),
        ("search oracle and defaults", search_oracle),
        ("numerical micro-checks", micro_checks),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| check(&fx))).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS  {name} ({secs:.2}s): {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {detail}");
            }
        }
    }
    println!(
        "acceptance: {} passed, {failed} failed in {:.1}s",
        checks.len() - failed,
        t0.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
