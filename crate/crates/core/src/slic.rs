//! Compact super-voxels via 3D SLIC.
//!
//! Seeds sit on a regular grid with spacing `S = round(cbrt(target_size))`,
//! are nudged to the lowest-gradient voxel of their 3x3x3 neighbourhood, and
//! then iterate local k-means inside a `2S` cube using
//! `D = sqrt(d_c^2 + (m d_s / S)^2)`. A connectivity pass afterwards makes
//! every label a single 6-connected component.

use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::ScalarVolume;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlicParams {
    /// Desired voxels per super-voxel.
    pub target_size: usize,
    /// Spatial weight `m`, relative to intensities in `[0, 1]`.
    pub compactness: f64,
    pub max_iterations: usize,
    /// Stop once no center moves by this many voxels or more.
    pub convergence_eps: f64,
}

impl Default for SlicParams {
    fn default() -> Self {
        Self {
            target_size: 512,
            compactness: 0.1,
            max_iterations: 10,
            convergence_eps: 0.5,
        }
    }
}

impl SlicParams {
    pub fn with_target(target_size: usize) -> Self {
        Self {
            target_size,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.target_size < 8 {
            return Err(Error::InvalidParameter(format!(
                "target_size must be >= 8, got {}",
                self.target_size
            )));
        }
        if !(self.compactness > 0.0) {
            return Err(Error::InvalidParameter("compactness must be > 0".into()));
        }
        if self.max_iterations == 0 {
            return Err(Error::InvalidParameter("max_iterations must be >= 1".into()));
        }
        if !(self.convergence_eps >= 0.0) {
            return Err(Error::InvalidParameter("convergence_eps must be >= 0".into()));
        }
        Ok(())
    }

    /// Grid interval `S`.
    pub fn grid_step(&self) -> usize {
        (libm::round(libm::cbrt(self.target_size as f64)) as usize).max(1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuperVoxelStats {
    pub voxel_count: u64,
    pub centroid: [f64; 3],
    pub mean_intensity: f64,
    pub bbox_min: [usize; 3],
    pub bbox_max: [usize; 3],
}

/// Per-voxel super-voxel ids plus per-super-voxel statistics.
#[derive(Debug, Clone, PartialEq)]
pub struct SuperVoxelLabeling {
    pub dims: [usize; 3],
    pub labels: Vec<u32>,
    pub stats: Vec<SuperVoxelStats>,
    /// Set when the volume was too small for the requested size and a single
    /// super-voxel was produced.
    pub degenerate: bool,
}

impl SuperVoxelLabeling {
    /// Builds a labeling from dense ids `0..count`, each of which must be used.
    pub fn from_labels(vol: &ScalarVolume, labels: Vec<u32>) -> Result<Self> {
        if labels.len() != vol.len() {
            return Err(Error::SizeMismatch {
                expected: vol.len(),
                actual: labels.len(),
            });
        }
        let count = labels.iter().map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut acc = vec![
            (0u64, [0.0f64; 3], 0.0f64, [usize::MAX; 3], [0usize; 3]);
            count
        ];
        for (i, &l) in labels.iter().enumerate() {
            let p = vol.coords(i);
            let a = &mut acc[l as usize];
            a.0 += 1;
            for (d, &c) in p.iter().enumerate() {
                a.1[d] += c as f64;
                a.3[d] = a.3[d].min(c);
                a.4[d] = a.4[d].max(c);
            }
            a.2 += vol.data[i] as f64;
        }
        let mut stats = Vec::with_capacity(count);
        for (id, (n, sum, isum, lo, hi)) in acc.into_iter().enumerate() {
            if n == 0 {
                return Err(Error::InvalidParameter(format!("super-voxel {id} is empty")));
            }
            let nf = n as f64;
            stats.push(SuperVoxelStats {
                voxel_count: n,
                centroid: [sum[0] / nf, sum[1] / nf, sum[2] / nf],
                mean_intensity: isum / nf,
                bbox_min: lo,
                bbox_max: hi,
            });
        }
        Ok(Self {
            dims: vol.dims(),
            labels,
            stats,
            degenerate: false,
        })
    }

    pub fn count(&self) -> usize {
        self.stats.len()
    }

    pub fn voxel_counts(&self) -> Vec<u64> {
        self.stats.iter().map(|s| s.voxel_count).collect()
    }

    pub fn label_at(&self, p: [usize; 3]) -> u32 {
        let [nx, ny, _] = self.dims;
        self.labels[p[0] + nx * (p[1] + ny * p[2])]
    }
}

struct Center {
    pos: [f64; 3],
    intensity: f64,
}

fn gradient_sq(vol: &ScalarVolume, p: [usize; 3]) -> f64 {
    let dims = vol.dims();
    let mut g = 0.0;
    for a in 0..3 {
        let mut lo = p;
        let mut hi = p;
        lo[a] = p[a].saturating_sub(1);
        hi[a] = (p[a] + 1).min(dims[a] - 1);
        let d = vol.get(hi[0], hi[1], hi[2]) as f64 - vol.get(lo[0], lo[1], lo[2]) as f64;
        g += d * d;
    }
    g
}

fn seed_centers(vol: &ScalarVolume, step: usize) -> Vec<Center> {
    let dims = vol.dims();
    let counts: [usize; 3] = core::array::from_fn(|a| {
        (libm::round(dims[a] as f64 / step as f64) as usize).max(1)
    });
    let mut centers = Vec::with_capacity(counts[0] * counts[1] * counts[2]);
    for iz in 0..counts[2] {
        for iy in 0..counts[1] {
            for ix in 0..counts[0] {
                let idx = [ix, iy, iz];
                let pos: [f64; 3] = core::array::from_fn(|a| {
                    (idx[a] as f64 + 0.5) * dims[a] as f64 / counts[a] as f64 - 0.5
                });
                let base: [usize; 3] = core::array::from_fn(|a| {
                    (libm::round(pos[a]).max(0.0) as usize).min(dims[a] - 1)
                });
                let mut best = gradient_sq(vol, base);
                let mut best_voxel = None;
                for dz in -1i64..=1 {
                    for dy in -1i64..=1 {
                        for dx in -1i64..=1 {
                            let q = [base[0] as i64 + dx, base[1] as i64 + dy, base[2] as i64 + dz];
                            if !vol.contains(q) {
                                continue;
                            }
                            let q = [q[0] as usize, q[1] as usize, q[2] as usize];
                            let g = gradient_sq(vol, q);
                            if g < best {
                                best = g;
                                best_voxel = Some(q);
                            }
                        }
                    }
                }
                let (pos, at) = match best_voxel {
                    Some(q) => ([q[0] as f64, q[1] as f64, q[2] as f64], q),
                    None => (pos, base),
                };
                centers.push(Center {
                    pos,
                    intensity: vol.get(at[0], at[1], at[2]) as f64,
                });
            }
        }
    }
    centers
}

/// Runs 3D SLIC on an intensity-normalized volume.
pub fn compute_supervoxels(vol: &ScalarVolume, params: &SlicParams) -> Result<SuperVoxelLabeling> {
    params.validate()?;
    if !vol.normalized {
        return Err(Error::InvalidParameter(
            "SLIC expects a volume normalized to [0, 1]".into(),
        ));
    }
    if params.target_size > vol.len() {
        let mut labeling = SuperVoxelLabeling::from_labels(vol, vec![0; vol.len()])?;
        labeling.degenerate = true;
        return Ok(labeling);
    }
    let dims = vol.dims();
    let step = params.grid_step();
    let s = step as f64;
    let spatial = (params.compactness / s) * (params.compactness / s);
    let mut centers = seed_centers(vol, step);
    let n = vol.len();
    let mut labels = vec![u32::MAX; n];
    let mut dist = vec![f64::INFINITY; n];

    for _ in 0..params.max_iterations {
        labels.fill(u32::MAX);
        dist.fill(f64::INFINITY);
        for (k, c) in centers.iter().enumerate() {
            let range: [(usize, usize); 3] = core::array::from_fn(|a| {
                let lo = libm::ceil(c.pos[a] - s).max(0.0) as usize;
                let hi = (libm::floor(c.pos[a] + s).max(0.0) as usize).min(dims[a] - 1);
                (lo, hi)
            });
            for z in range[2].0..=range[2].1 {
                let dz = z as f64 - c.pos[2];
                for y in range[1].0..=range[1].1 {
                    let dy = y as f64 - c.pos[1];
                    let row = vol.index(0, y, z);
                    for x in range[0].0..=range[0].1 {
                        let dx = x as f64 - c.pos[0];
                        let i = row + x;
                        let dc = vol.data[i] as f64 - c.intensity;
                        let d = dc * dc + spatial * (dx * dx + dy * dy + dz * dz);
                        if d < dist[i] {
                            dist[i] = d;
                            labels[i] = k as u32;
                        }
                    }
                }
            }
        }
        // Voxels outside every window fall back to a global search.
        for i in 0..n {
            if labels[i] != u32::MAX {
                continue;
            }
            let p = vol.coords(i);
            for (k, c) in centers.iter().enumerate() {
                let dc = vol.data[i] as f64 - c.intensity;
                let ds: f64 = (0..3).map(|a| (p[a] as f64 - c.pos[a]) * (p[a] as f64 - c.pos[a])).sum();
                let d = dc * dc + spatial * ds;
                if d < dist[i] {
                    dist[i] = d;
                    labels[i] = k as u32;
                }
            }
        }

        let mut sums = vec![([0.0f64; 3], 0.0f64, 0u64); centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            let p = vol.coords(i);
            let acc = &mut sums[l as usize];
            for (s, &c) in acc.0.iter_mut().zip(&p) {
                *s += c as f64;
            }
            acc.1 += vol.data[i] as f64;
            acc.2 += 1;
        }
        let mut moved = 0.0f64;
        for (c, (psum, isum, cnt)) in centers.iter_mut().zip(sums) {
            if cnt == 0 {
                continue;
            }
            let nf = cnt as f64;
            let next = [psum[0] / nf, psum[1] / nf, psum[2] / nf];
            let d2: f64 = (0..3).map(|a| (next[a] - c.pos[a]) * (next[a] - c.pos[a])).sum();
            moved = moved.max(libm::sqrt(d2));
            c.pos = next;
            c.intensity = isum / nf;
        }
        if moved < params.convergence_eps {
            break;
        }
    }

    enforce_connectivity(vol, &labels, params.target_size / 4)
}

const NEIGHBOURS: [[i64; 3]; 6] = [
    [-1, 0, 0],
    [1, 0, 0],
    [0, -1, 0],
    [0, 1, 0],
    [0, 0, -1],
    [0, 0, 1],
];

fn neighbours(dims: [usize; 3], i: usize) -> impl Iterator<Item = usize> {
    let [nx, ny, _] = dims;
    let p = [(i % nx) as i64, ((i / nx) % ny) as i64, (i / (nx * ny)) as i64];
    NEIGHBOURS.iter().filter_map(move |d| {
        let q = [p[0] + d[0], p[1] + d[1], p[2] + d[2]];
        if (0..3).all(|a| q[a] >= 0 && (q[a] as usize) < dims[a]) {
            Some(q[0] as usize + nx * (q[1] as usize + ny * q[2] as usize))
        } else {
            None
        }
    })
}

/// 6-connected components of equal labels, numbered in scan order of their
/// first voxel. Returns `(component per voxel, voxels per component)`.
fn label_components(dims: [usize; 3], labels: &[u32]) -> (Vec<u32>, Vec<Vec<u32>>) {
    let mut comp = vec![u32::MAX; labels.len()];
    let mut members: Vec<Vec<u32>> = Vec::new();
    let mut queue = VecDeque::new();
    for start in 0..labels.len() {
        if comp[start] != u32::MAX {
            continue;
        }
        let id = members.len() as u32;
        let mut voxels = Vec::new();
        comp[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            voxels.push(i as u32);
            for j in neighbours(dims, i) {
                if comp[j] == u32::MAX && labels[j] == labels[i] {
                    comp[j] = id;
                    queue.push_back(j);
                }
            }
        }
        members.push(voxels);
    }
    (comp, members)
}

/// Splits labels into 6-connected pieces, folds pieces smaller than
/// `min_size` voxels into the neighbour sharing the most voxel faces, and
/// renumbers densely ordered by (original label, first voxel).
pub fn enforce_connectivity(
    vol: &ScalarVolume,
    labels: &[u32],
    min_size: usize,
) -> Result<SuperVoxelLabeling> {
    if labels.len() != vol.len() {
        return Err(Error::SizeMismatch {
            expected: vol.len(),
            actual: labels.len(),
        });
    }
    let dims = vol.dims();
    let (comp, members) = label_components(dims, labels);
    let ncomp = members.len();

    // Group forest over components; the absorbing group's root is kept.
    let mut parent: Vec<u32> = (0..ncomp as u32).collect();
    let mut group_members: Vec<Vec<u32>> = (0..ncomp as u32).map(|c| vec![c]).collect();
    let mut group_size: Vec<usize> = members.iter().map(Vec::len).collect();
    fn root(parent: &mut [u32], mut c: u32) -> u32 {
        while parent[c as usize] != c {
            parent[c as usize] = parent[parent[c as usize] as usize];
            c = parent[c as usize];
        }
        c
    }

    let mut order: Vec<u32> = (0..ncomp as u32)
        .filter(|&c| members[c as usize].len() < min_size)
        .collect();
    order.sort_by_key(|&c| (members[c as usize].len(), members[c as usize][0]));
    let mut boundary: Vec<u32> = vec![0; ncomp];
    let mut touched: Vec<u32> = Vec::new();
    for c in order {
        if parent[c as usize] != c || group_size[c as usize] >= min_size {
            continue;
        }
        for &m in &group_members[c as usize] {
            for &v in &members[m as usize] {
                for j in neighbours(dims, v as usize) {
                    let g = root(&mut parent, comp[j]);
                    if g != c {
                        if boundary[g as usize] == 0 {
                            touched.push(g);
                        }
                        boundary[g as usize] += 1;
                    }
                }
            }
        }
        let target = touched
            .iter()
            .copied()
            .max_by(|&a, &b| boundary[a as usize].cmp(&boundary[b as usize]).then(b.cmp(&a)));
        for &g in &touched {
            boundary[g as usize] = 0;
        }
        touched.clear();
        if let Some(t) = target {
            parent[c as usize] = t;
            let moved = core::mem::take(&mut group_members[c as usize]);
            group_members[t as usize].extend(moved);
            group_size[t as usize] += group_size[c as usize];
        }
    }

    let mut roots: Vec<u32> = (0..ncomp as u32).filter(|&c| parent[c as usize] == c).collect();
    roots.sort_by_key(|&c| {
        let first = members[c as usize][0];
        (labels[first as usize], first)
    });
    let mut new_id = vec![u32::MAX; ncomp];
    for (id, &r) in roots.iter().enumerate() {
        new_id[r as usize] = id as u32;
    }
    let mut out = Vec::with_capacity(labels.len());
    for &c in &comp {
        let r = root(&mut parent, c);
        out.push(new_id[r as usize]);
    }
    SuperVoxelLabeling::from_labels(vol, out)
}
