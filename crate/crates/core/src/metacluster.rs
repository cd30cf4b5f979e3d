//! Region catalog and reverse-delete meta-clustering.
//!
//! Every region of every interval clustering is collected once. Regions that
//! overlap are joined by an edge weighted with their voxel-weighted Jaccard
//! distance; deleting the minimum spanning forest edges at or above the
//! threshold leaves the meta-clusters as connected components.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fh::IntervalClustering;
use crate::unionfind::DisjointSet;

pub const DEFAULT_JACCARD_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    /// Sorted super-voxel ids.
    pub supervoxels: Vec<u32>,
    pub voxel_size: u64,
    /// Indices of the intervals whose partition contains this region.
    pub intervals: Vec<u32>,
}

/// Unique regions ordered by voxel size (descending), then by id sequence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionCatalog {
    pub regions: Vec<Region>,
}

impl RegionCatalog {
    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

/// Deduplicates the regions of all `clusterings`.
/// `sv_sizes[s]` is the voxel count of super-voxel `s`.
pub fn catalog_regions(clusterings: &[IntervalClustering], sv_sizes: &[u64]) -> Result<RegionCatalog> {
    if clusterings.is_empty() {
        return Err(Error::InvalidParameter("no clusterings to catalog".into()));
    }
    let mut seen: BTreeMap<Vec<u32>, Vec<u32>> = BTreeMap::new();
    for (ci, c) in clusterings.iter().enumerate() {
        if c.partition.len() != sv_sizes.len() {
            return Err(Error::SizeMismatch {
                expected: sv_sizes.len(),
                actual: c.partition.len(),
            });
        }
        let mut groups: Vec<Vec<u32>> = vec![Vec::new(); c.region_count];
        for (s, &r) in c.partition.iter().enumerate() {
            groups[r as usize].push(s as u32);
        }
        for g in groups {
            let intervals = seen.entry(g).or_default();
            if intervals.last() != Some(&(ci as u32)) {
                intervals.push(ci as u32);
            }
        }
    }
    let mut regions: Vec<Region> = seen
        .into_iter()
        .map(|(supervoxels, intervals)| Region {
            voxel_size: supervoxels.iter().map(|&s| sv_sizes[s as usize]).sum(),
            supervoxels,
            intervals,
        })
        .collect();
    regions.sort_by(|a, b| b.voxel_size.cmp(&a.voxel_size).then_with(|| a.supervoxels.cmp(&b.supervoxels)));
    Ok(RegionCatalog { regions })
}

/// Voxel counts of `|a ∩ b|` for two sorted id lists.
fn intersection_size(a: &[u32], b: &[u32], sv_sizes: &[u64]) -> u64 {
    let (mut i, mut j, mut acc) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                acc += sv_sizes[a[i] as usize];
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

#[inline]
fn jaccard_from_sizes(inter: u64, size_a: u64, size_b: u64) -> f64 {
    let union = size_a + size_b - inter;
    if union == 0 {
        return 0.0;
    }
    1.0 - inter as f64 / union as f64
}

/// `1 - |a ∩ b| / |a ∪ b|` with sizes in voxels. Inputs are sorted id lists.
pub fn jaccard_distance(a: &[u32], b: &[u32], sv_sizes: &[u64]) -> f64 {
    let inter = intersection_size(a, b, sv_sizes);
    let sa: u64 = a.iter().map(|&s| sv_sizes[s as usize]).sum();
    let sb: u64 = b.iter().map(|&s| sv_sizes[s as usize]).sum();
    jaccard_from_sizes(inter, sa, sb)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverlapEdge {
    pub a: u32,
    pub b: u32,
    pub distance: f64,
}

/// All pairs of catalog regions sharing a super-voxel, sorted by
/// `(distance, a, b)` with `a < b`.
pub fn overlap_edges(catalog: &RegionCatalog, sv_sizes: &[u64]) -> Vec<OverlapEdge> {
    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); sv_sizes.len()];
    for (r, region) in catalog.regions.iter().enumerate() {
        for &s in &region.supervoxels {
            buckets[s as usize].push(r as u32);
        }
    }
    let n = catalog.regions.len();
    let mut inter = vec![0u64; n];
    let mut touched: Vec<u32> = Vec::new();
    let mut edges = Vec::new();
    for (r, region) in catalog.regions.iter().enumerate() {
        for &s in &region.supervoxels {
            for &o in &buckets[s as usize] {
                if (o as usize) <= r {
                    continue;
                }
                if inter[o as usize] == 0 {
                    touched.push(o);
                }
                inter[o as usize] += sv_sizes[s as usize];
            }
        }
        for &o in &touched {
            let other = &catalog.regions[o as usize];
            edges.push(OverlapEdge {
                a: r as u32,
                b: o,
                distance: jaccard_from_sizes(inter[o as usize], region.voxel_size, other.voxel_size),
            });
            inter[o as usize] = 0;
        }
        touched.clear();
    }
    edges.sort_by(|x, y| {
        x.distance
            .total_cmp(&y.distance)
            .then(x.a.cmp(&y.a))
            .then(x.b.cmp(&y.b))
    });
    edges
}

/// Kruskal minimum spanning forest over edges already in sorted order.
pub fn minimum_spanning_forest(n: usize, sorted: &[OverlapEdge]) -> Vec<OverlapEdge> {
    let mut sets = DisjointSet::new(n);
    let mut forest = Vec::new();
    for e in sorted {
        if sets.find(e.a) != sets.find(e.b) {
            sets.union(e.a, e.b);
            forest.push(*e);
        }
    }
    forest
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaCluster {
    pub id: u32,
    /// Catalog indices, ascending.
    pub members: Vec<u32>,
    /// Sorted union of the members' super-voxels.
    pub footprint: Vec<u32>,
    pub footprint_voxel_size: u64,
    /// Members containing each footprint super-voxel, parallel to `footprint`.
    pub overlap_counts: Vec<u32>,
}

impl MetaCluster {
    pub fn contains_supervoxel(&self, s: u32) -> bool {
        self.footprint.binary_search(&s).is_ok()
    }

    pub fn max_overlap(&self) -> u32 {
        self.overlap_counts.iter().copied().max().unwrap_or(0)
    }

    /// Overlap count for `s`, 0 outside the footprint.
    pub fn overlap_of(&self, s: u32) -> u32 {
        self.footprint
            .binary_search(&s)
            .map_or(0, |i| self.overlap_counts[i])
    }
}

/// Groups catalog regions into meta-clusters by reverse-delete at `threshold`.
pub fn reverse_delete_cluster(
    catalog: &RegionCatalog,
    sv_sizes: &[u64],
    threshold: f64,
) -> Result<Vec<MetaCluster>> {
    if !(threshold > 0.0 && threshold <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold must lie in (0, 1], got {threshold}"
        )));
    }
    let n = catalog.regions.len();
    let edges = overlap_edges(catalog, sv_sizes);
    let forest = minimum_spanning_forest(n, &edges);
    let mut sets = DisjointSet::new(n);
    for e in forest.iter().filter(|e| e.distance < threshold) {
        sets.union(e.a, e.b);
    }
    let (component, count) = sets.canonical_labels();
    let mut groups: Vec<Vec<u32>> = vec![Vec::new(); count];
    for (r, &c) in component.iter().enumerate() {
        groups[c as usize].push(r as u32);
    }
    Ok(groups
        .into_iter()
        .enumerate()
        .map(|(id, members)| build_metacluster(id as u32, members, catalog, sv_sizes))
        .collect())
}

fn build_metacluster(id: u32, members: Vec<u32>, catalog: &RegionCatalog, sv_sizes: &[u64]) -> MetaCluster {
    let mut counts: BTreeMap<u32, u32> = BTreeMap::new();
    for &m in &members {
        for &s in &catalog.regions[m as usize].supervoxels {
            *counts.entry(s).or_insert(0) += 1;
        }
    }
    let footprint: Vec<u32> = counts.keys().copied().collect();
    let overlap_counts = counts.values().copied().collect();
    let footprint_voxel_size = footprint.iter().map(|&s| sv_sizes[s as usize]).sum();
    MetaCluster {
        id,
        members,
        footprint,
        footprint_voxel_size,
        overlap_counts,
    }
}
