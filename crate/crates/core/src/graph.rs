//! Super-voxel adjacency graph with chi-squared histogram edge weights.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::slic::SuperVoxelLabeling;
use crate::volume::ScalarVolume;

pub const DEFAULT_BINS: usize = 64;

/// Probability-normalized intensity histogram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SvHistogram {
    pub bins: Vec<f64>,
}

impl SvHistogram {
    /// Normalizes raw counts. All-zero counts stay all zero.
    pub fn from_counts(counts: &[u64]) -> Self {
        let total: u64 = counts.iter().sum();
        let bins = if total == 0 {
            vec![0.0; counts.len()]
        } else {
            counts.iter().map(|&c| c as f64 / total as f64).collect()
        };
        Self { bins }
    }
}

/// Maps a scalar to one of `bins` uniform bins over `[lo, hi]`.
#[inline]
pub fn bin_index(v: f64, lo: f64, hi: f64, bins: usize) -> usize {
    if !(hi > lo) {
        return 0;
    }
    let t = (v - lo) / (hi - lo) * bins as f64;
    if t <= 0.0 {
        0
    } else {
        (t as usize).min(bins - 1)
    }
}

/// `1/2 * sum (a_i - b_i)^2 / (a_i + b_i)` over bins with non-zero mass.
pub fn chi_squared_distance(a: &SvHistogram, b: &SvHistogram) -> f64 {
    debug_assert_eq!(a.bins.len(), b.bins.len());
    let mut acc = 0.0;
    for (&x, &y) in a.bins.iter().zip(&b.bins) {
        let s = x + y;
        if s > 0.0 {
            let d = x - y;
            acc += d * d / s;
        }
    }
    0.5 * acc
}

/// How region sizes `|C|` are measured by the clustering.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SizeUnits {
    #[default]
    Voxels,
    Nodes,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: u32,
    pub b: u32,
    pub weight: f32,
}

impl Edge {
    fn order_key(&self, other: &Self) -> core::cmp::Ordering {
        self.weight
            .total_cmp(&other.weight)
            .then(self.a.cmp(&other.a))
            .then(self.b.cmp(&other.b))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdjacencyGraph {
    pub node_sizes: Vec<f64>,
    /// Sorted by `(weight, a, b)`, `a < b`, no duplicates.
    pub edges: Vec<Edge>,
}

impl AdjacencyGraph {
    /// Validates and sorts an explicit edge list.
    pub fn new(node_sizes: Vec<f64>, mut edges: Vec<Edge>) -> Result<Self> {
        let n = node_sizes.len();
        if node_sizes.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::InvalidParameter("node sizes must be > 0".into()));
        }
        for e in &mut edges {
            if e.a > e.b {
                core::mem::swap(&mut e.a, &mut e.b);
            }
            if e.a == e.b || e.b as usize >= n {
                return Err(Error::InvalidParameter(format!("bad edge ({}, {})", e.a, e.b)));
            }
            if !(e.weight >= 0.0) || !e.weight.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "edge ({}, {}) has weight {}",
                    e.a, e.b, e.weight
                )));
            }
        }
        edges.sort_by(Edge::order_key);
        let mut pairs: Vec<(u32, u32)> = edges.iter().map(|e| (e.a, e.b)).collect();
        pairs.sort_unstable();
        if pairs.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidParameter("duplicate edge".into()));
        }
        Ok(Self { node_sizes, edges })
    }

    pub fn node_count(&self) -> usize {
        self.node_sizes.len()
    }

    pub fn total_size(&self) -> f64 {
        self.node_sizes.iter().sum()
    }
}

/// Super-voxel histograms plus the adjacency graph built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperVoxelGraph {
    pub histograms: Vec<SvHistogram>,
    pub graph: AdjacencyGraph,
}

/// Histograms every super-voxel over the volume's full scalar range and
/// connects each pair of labels sharing a voxel face.
pub fn build_adjacency_graph(
    vol: &ScalarVolume,
    labeling: &SuperVoxelLabeling,
    bins: usize,
    units: SizeUnits,
) -> Result<SuperVoxelGraph> {
    if bins == 0 {
        return Err(Error::InvalidParameter("bins must be >= 1".into()));
    }
    if labeling.labels.len() != vol.len() {
        return Err(Error::SizeMismatch {
            expected: vol.len(),
            actual: labeling.labels.len(),
        });
    }
    let n = labeling.count();
    let [lo, hi] = vol.meta.scalar_range;
    let mut counts = vec![0u64; n * bins];
    for (i, &l) in labeling.labels.iter().enumerate() {
        counts[l as usize * bins + bin_index(vol.data[i] as f64, lo, hi, bins)] += 1;
    }
    let histograms: Vec<SvHistogram> = counts.chunks(bins).map(SvHistogram::from_counts).collect();

    let [nx, ny, nz] = vol.dims();
    let mut pairs = BTreeSet::new();
    let labels = &labeling.labels;
    for z in 0..nz {
        for y in 0..ny {
            for x in 0..nx {
                let i = vol.index(x, y, z);
                let l = labels[i];
                let mut see = |j: usize| {
                    let m = labels[j];
                    if m != l {
                        pairs.insert((l.min(m), l.max(m)));
                    }
                };
                if x + 1 < nx {
                    see(i + 1);
                }
                if y + 1 < ny {
                    see(i + nx);
                }
                if z + 1 < nz {
                    see(i + nx * ny);
                }
            }
        }
    }
    let edges = pairs
        .into_iter()
        .map(|(a, b)| Edge {
            a,
            b,
            weight: chi_squared_distance(&histograms[a as usize], &histograms[b as usize]) as f32,
        })
        .collect();
    let node_sizes = match units {
        SizeUnits::Voxels => labeling.stats.iter().map(|s| s.voxel_count as f64).collect(),
        SizeUnits::Nodes => vec![1.0; n],
    };
    Ok(SuperVoxelGraph {
        histograms,
        graph: AdjacencyGraph::new(node_sizes, edges)?,
    })
}
