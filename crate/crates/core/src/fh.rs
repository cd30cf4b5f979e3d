//! Exhaustive Felzenszwalb–Huttenlocher clustering over the scale parameter.
//!
//! A single FH pass at `k_start` over the fixed edge order can also report the
//! smallest `k` at which any of its rejected edges would have been accepted.
//! Every `k` below that value makes the same accept/reject decision on every
//! edge, so the pass yields one clustering together with the maximal interval
//! `[k_start, k_end)` that produces it. Chaining passes from `k = 0` visits
//! every distinct clustering exactly once.

use alloc::format;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AdjacencyGraph;
use crate::unionfind::DisjointSet;

/// Size `|C|` and internal variation `Int(C)` of one region.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegionState {
    pub size: f64,
    pub int_var: f64,
}

impl RegionState {
    pub fn singleton(size: f64) -> Self {
        Self { size, int_var: 0.0 }
    }
}

/// Smallest `k` at which an edge of weight `w` joins `a` and `b`.
///
/// `w <= Int(C) + k/|C|` holds iff `k >= (w - Int(C)) |C|`, and the merge
/// needs it for both regions, hence the maximum.
#[inline]
pub fn edge_flip_threshold(w: f64, a: &RegionState, b: &RegionState) -> f64 {
    let ta = (w - a.int_var) * a.size;
    let tb = (w - b.int_var) * b.size;
    ta.max(tb)
}

/// The minimum of the two per-region terms. It is not a valid bound on its
/// own: it can fall below the `k` that rejected the edge.
#[inline]
pub fn printed_flip_threshold(w: f64, a: &RegionState, b: &RegionState) -> f64 {
    let ta = (w - a.int_var) * a.size;
    let tb = (w - b.int_var) * b.size;
    ta.min(tb)
}

/// FH merge test `w <= min(Int(A) + k/|A|, Int(B) + k/|B|)`.
///
/// Evaluated in the equivalent multiplied-out form so that it agrees bit for
/// bit with [`edge_flip_threshold`]: the edge merges exactly when
/// `k >= edge_flip_threshold(w, a, b)`.
#[inline]
pub fn merge_predicate(w: f64, a: &RegionState, b: &RegionState, k: f64) -> bool {
    k >= edge_flip_threshold(w, a, b)
}

/// How a rejected edge bounds the tracked interval.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThresholdRule {
    /// The exact flip point, [`edge_flip_threshold`].
    #[default]
    Max,
    /// The smaller per-region term when it lies above the current `k`, and
    /// the exact flip point otherwise. Yields shorter intervals.
    Min,
}

impl ThresholdRule {
    #[inline]
    fn bound(self, w: f64, a: &RegionState, b: &RegionState, k: f64) -> f64 {
        match self {
            ThresholdRule::Max => edge_flip_threshold(w, a, b),
            ThresholdRule::Min => {
                let lo = printed_flip_threshold(w, a, b);
                if lo > k {
                    lo
                } else {
                    edge_flip_threshold(w, a, b)
                }
            }
        }
    }
}

/// One clustering and the contiguous `k` interval producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalClustering {
    pub k_start: f64,
    /// `f64::INFINITY` when no larger `k` changes any decision.
    pub k_end: f64,
    /// Region label per node, numbered by first appearance in node order.
    pub partition: Vec<u32>,
    pub region_count: usize,
}

impl IntervalClustering {
    pub fn contains(&self, k: f64) -> bool {
        self.k_start <= k && k < self.k_end
    }
}

/// Result of a plain FH pass.
#[derive(Debug, Clone, PartialEq)]
pub struct FhRun {
    pub partition: Vec<u32>,
    pub region_count: usize,
    /// Per edge in graph order: whether the edge merged two regions.
    pub collapsed: Vec<bool>,
}

struct Pass {
    sets: DisjointSet,
    regions: Vec<RegionState>,
}

impl Pass {
    fn new(graph: &AdjacencyGraph) -> Self {
        Self {
            sets: DisjointSet::new(graph.node_count()),
            regions: graph.node_sizes.iter().map(|&s| RegionState::singleton(s)).collect(),
        }
    }

    /// Visits edges in order. Returns the tracked upper bound on `k`.
    fn run(
        &mut self,
        graph: &AdjacencyGraph,
        k: f64,
        rule: ThresholdRule,
        mut collapsed: Option<&mut Vec<bool>>,
    ) -> f64 {
        let mut k_end = f64::INFINITY;
        for e in &graph.edges {
            let ra = self.sets.find(e.a);
            let rb = self.sets.find(e.b);
            let mut merged = false;
            if ra != rb {
                let w = e.weight as f64;
                let a = self.regions[ra as usize];
                let b = self.regions[rb as usize];
                if merge_predicate(w, &a, &b, k) {
                    let root = self.sets.union(ra, rb);
                    self.regions[root as usize] = RegionState {
                        size: a.size + b.size,
                        int_var: w,
                    };
                    merged = true;
                } else {
                    k_end = k_end.min(rule.bound(w, &a, &b, k));
                }
            }
            if let Some(c) = collapsed.as_deref_mut() {
                c.push(merged);
            }
        }
        k_end
    }
}

fn check_k(graph: &AdjacencyGraph, k: f64) -> Result<()> {
    if graph.node_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    if !(k >= 0.0) || k.is_infinite() {
        return Err(Error::InvalidParameter(format!("k must be finite and >= 0, got {k}")));
    }
    Ok(())
}

/// Plain FH segmentation at a single `k`.
pub fn segment_at(graph: &AdjacencyGraph, k: f64) -> Result<FhRun> {
    check_k(graph, k)?;
    let mut pass = Pass::new(graph);
    let mut collapsed = Vec::with_capacity(graph.edges.len());
    pass.run(graph, k, ThresholdRule::Max, Some(&mut collapsed));
    let (partition, region_count) = pass.sets.canonical_labels();
    Ok(FhRun {
        partition,
        region_count,
        collapsed,
    })
}

/// One FH pass at `k_start` that also tracks the interval end.
pub fn fh_run_tracked(
    graph: &AdjacencyGraph,
    k_start: f64,
    rule: ThresholdRule,
) -> Result<IntervalClustering> {
    check_k(graph, k_start)?;
    let mut pass = Pass::new(graph);
    let k_end = pass.run(graph, k_start, rule, None);
    debug_assert!(k_end > k_start);
    let (partition, region_count) = pass.sets.canonical_labels();
    Ok(IntervalClustering {
        k_start,
        k_end,
        partition,
        region_count,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    /// Width of the first worker's processing range.
    pub initial_range_width: f64,
    /// Each subsequent range is this much wider than the previous one.
    pub growth_factor: f64,
    pub workers: usize,
    pub threshold_rule: ThresholdRule,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            initial_range_width: 50.0,
            growth_factor: 1.5,
            workers: 12,
            threshold_rule: ThresholdRule::Max,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.initial_range_width > 0.0) || !self.initial_range_width.is_finite() {
            return Err(Error::InvalidParameter("initial_range_width must be > 0".into()));
        }
        if !(self.growth_factor > 1.0) || !self.growth_factor.is_finite() {
            return Err(Error::InvalidParameter("growth_factor must be > 1".into()));
        }
        if self.workers == 0 {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
        Ok(())
    }

    /// The `[start, end)` processing range handed to the `index`-th worker.
    pub fn processing_range(&self, index: usize) -> (f64, f64) {
        let mut start = 0.0;
        let mut width = self.initial_range_width;
        for _ in 0..index {
            start += width;
            width *= self.growth_factor;
        }
        (start, start + width)
    }
}

/// Intervals produced for one processing range.
fn process_range(
    graph: &AdjacencyGraph,
    (lo, hi): (f64, f64),
    rule: ThresholdRule,
) -> Result<Vec<IntervalClustering>> {
    let mut out = Vec::new();
    let mut k = lo;
    loop {
        let c = fh_run_tracked(graph, k, rule)?;
        let done = c.region_count == 1 || c.k_end >= hi;
        k = c.k_end;
        out.push(c);
        if done {
            return Ok(out);
        }
    }
}

/// A range result that ends the dispatch of further ranges.
fn is_terminal(chunk: &[IntervalClustering]) -> bool {
    chunk
        .iter()
        .any(|c| c.region_count <= 2 || c.k_end == f64::INFINITY)
}

#[cfg(feature = "std")]
fn sweep_ranges(
    graph: &AdjacencyGraph,
    config: &SweepConfig,
) -> Result<Vec<Vec<IntervalClustering>>> {
    use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
    use std::sync::Mutex;

    if config.workers == 1 {
        return sweep_ranges_serial(graph, config);
    }
    let next = AtomicUsize::new(0);
    let stop = AtomicBool::new(false);
    let results: Mutex<Vec<(usize, Result<Vec<IntervalClustering>>)>> = Mutex::new(Vec::new());
    std::thread::scope(|scope| {
        for _ in 0..config.workers {
            scope.spawn(|| {
                while !stop.load(Ordering::Acquire) {
                    let index = next.fetch_add(1, Ordering::AcqRel);
                    let chunk = process_range(graph, config.processing_range(index), config.threshold_rule);
                    let terminal = chunk.as_ref().map_or(true, |c| is_terminal(c));
                    if terminal {
                        stop.store(true, Ordering::Release);
                    }
                    results.lock().unwrap().push((index, chunk));
                }
            });
        }
    });
    let mut results = results.into_inner().unwrap();
    results.sort_by_key(|(i, _)| *i);
    results.into_iter().map(|(_, r)| r).collect()
}

#[cfg(not(feature = "std"))]
fn sweep_ranges(
    graph: &AdjacencyGraph,
    config: &SweepConfig,
) -> Result<Vec<Vec<IntervalClustering>>> {
    sweep_ranges_serial(graph, config)
}

fn sweep_ranges_serial(
    graph: &AdjacencyGraph,
    config: &SweepConfig,
) -> Result<Vec<Vec<IntervalClustering>>> {
    let mut out = Vec::new();
    for index in 0.. {
        let chunk = process_range(graph, config.processing_range(index), config.threshold_rule)?;
        let terminal = is_terminal(&chunk);
        out.push(chunk);
        if terminal {
            break;
        }
    }
    Ok(out)
}

/// Enumerates every distinct FH clustering of `graph`.
///
/// The returned intervals are sorted, contiguous from `k = 0`, and adjacent
/// intervals never share a partition. The sweep ends with the first
/// single-region interval reached after a clustering of two regions or fewer
/// (or at an unbounded interval if the graph is disconnected). The result
/// does not depend on `config.workers`.
pub fn exhaustive_cluster(
    graph: &AdjacencyGraph,
    config: &SweepConfig,
) -> Result<Vec<IntervalClustering>> {
    config.validate()?;
    if graph.node_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let chunks = sweep_ranges(graph, config)?;

    // Stitch range results into one chain; a range's first interval repeats
    // the previous range's last one whenever that crossed the boundary.
    let mut chain: Vec<IntervalClustering> = Vec::new();
    let mut cursor = 0.0f64;
    let mut seen_small = false;
    let mut finished = false;
    let mut accept = |c: IntervalClustering, chain: &mut Vec<IntervalClustering>, cursor: &mut f64| {
        *cursor = c.k_end;
        seen_small |= c.region_count <= 2;
        let done = (seen_small && c.region_count == 1) || c.k_end == f64::INFINITY;
        chain.push(c);
        done
    };
    'outer: for chunk in chunks {
        for c in chunk {
            if c.k_end <= cursor {
                continue;
            }
            if c.k_start > cursor {
                // Gap: fall through to the sequential tail below.
                break 'outer;
            }
            debug_assert!(c.k_start == cursor || chain.last().is_some_and(|p| p.partition == c.partition));
            let c = IntervalClustering {
                k_start: cursor,
                ..c
            };
            if accept(c, &mut chain, &mut cursor) {
                finished = true;
                break 'outer;
            }
        }
    }
    while !finished {
        let c = fh_run_tracked(graph, cursor, config.threshold_rule)?;
        finished = accept(c, &mut chain, &mut cursor);
    }
    Ok(coalesce(chain))
}

/// Merges neighbouring intervals that carry the same partition.
pub fn coalesce(chain: Vec<IntervalClustering>) -> Vec<IntervalClustering> {
    let mut out: Vec<IntervalClustering> = Vec::with_capacity(chain.len());
    for c in chain {
        match out.last_mut() {
            Some(prev) if prev.k_end == c.k_start && prev.partition == c.partition => {
                prev.k_end = c.k_end;
            }
            _ => out.push(c),
        }
    }
    out
}
