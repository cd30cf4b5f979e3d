//! Transfer functions, overlap previews and slice composites.

use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::bin_index;
use crate::metacluster::{MetaCluster, RegionCatalog};
use crate::slic::SuperVoxelLabeling;
use crate::tree::MetaClusterTree;
use crate::volume::{Axis, ScalarVolume};

pub type Rgb = [u8; 3];

/// Red–yellow–blue diverging table, ordered from the blue end to the red end.
pub const DIVERGING_PALETTE: [Rgb; 11] = [
    [0x31, 0x36, 0x95],
    [0x45, 0x75, 0xb4],
    [0x74, 0xad, 0xd1],
    [0xab, 0xd9, 0xe9],
    [0xe0, 0xf3, 0xf8],
    [0xff, 0xff, 0xbf],
    [0xfe, 0xe0, 0x90],
    [0xfd, 0xae, 0x61],
    [0xf4, 0x6d, 0x43],
    [0xd7, 0x30, 0x27],
    [0xa5, 0x00, 0x26],
];

/// Preview colors for the lowest and highest overlap counts.
pub const OVERLAP_LOW: Rgb = [0x31, 0x82, 0xbd];
pub const OVERLAP_HIGH: Rgb = [0xfd, 0x8d, 0x3c];

pub const TF_BINS: usize = 64;
pub const DEFAULT_PERSISTENCE_FRACTION: f64 = 0.05;
pub const OPACITY_MIN: f64 = 0.05;
pub const OPACITY_MAX: f64 = 0.8;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    /// Row-major RGB triples.
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn pixel(&self, col: usize, row: usize) -> Rgb {
        let i = 3 * (row * self.width + col);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn set_pixel(&mut self, col: usize, row: usize, c: Rgb) {
        let i = 3 * (row * self.width + col);
        self.data[i..i + 3].copy_from_slice(&c);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlPoint {
    pub scalar: f64,
    pub color: Rgb,
    pub opacity: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferFunction1D {
    pub control_points: Vec<ControlPoint>,
    pub domain: [f64; 2],
}

impl TransferFunction1D {
    pub fn new(control_points: Vec<ControlPoint>) -> Result<Self> {
        if control_points.len() < 2 {
            return Err(Error::InvalidParameter("transfer function needs >= 2 points".into()));
        }
        if control_points.windows(2).any(|w| !(w[0].scalar < w[1].scalar)) {
            return Err(Error::InvalidParameter("control scalars must increase".into()));
        }
        if control_points.iter().any(|p| !(0.0..=1.0).contains(&p.opacity)) {
            return Err(Error::InvalidParameter("opacity must lie in [0, 1]".into()));
        }
        let domain = [
            control_points[0].scalar,
            control_points[control_points.len() - 1].scalar,
        ];
        Ok(Self {
            control_points,
            domain,
        })
    }

    /// Piecewise-linear color and opacity, clamped outside the domain.
    pub fn evaluate(&self, v: f64) -> (Rgb, f64) {
        let pts = &self.control_points;
        if v <= pts[0].scalar {
            return (pts[0].color, pts[0].opacity);
        }
        let last = pts[pts.len() - 1];
        if v >= last.scalar {
            return (last.color, last.opacity);
        }
        let i = pts.partition_point(|p| p.scalar <= v) - 1;
        let (a, b) = (pts[i], pts[i + 1]);
        let t = (v - a.scalar) / (b.scalar - a.scalar);
        let color = core::array::from_fn(|c| lerp_u8(a.color[c], b.color[c], t));
        (color, a.opacity + (b.opacity - a.opacity) * t)
    }
}

#[inline]
fn lerp_u8(a: u8, b: u8, t: f64) -> u8 {
    libm::round(a as f64 + (b as f64 - a as f64) * t).clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, PartialEq)]
pub struct Polyline1D {
    /// `(x, y)` with strictly increasing `x`.
    pub points: Vec<(f64, f64)>,
}

impl Polyline1D {
    pub fn new(points: Vec<(f64, f64)>) -> Result<Self> {
        if points.windows(2).any(|w| !(w[0].0 < w[1].0)) {
            return Err(Error::InvalidParameter("polyline x must increase".into()));
        }
        Ok(Self { points })
    }

    /// Unit-spaced samples.
    pub fn from_values(ys: &[f64]) -> Self {
        Self {
            points: ys.iter().enumerate().map(|(i, &y)| (i as f64, y)).collect(),
        }
    }

    pub fn ys(&self) -> Vec<f64> {
        self.points.iter().map(|p| p.1).collect()
    }
}

/// Interior extremum spanning vertex range `[start, end]` (a plateau).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extremum {
    pub start: usize,
    pub end: usize,
    pub value: f64,
    pub is_max: bool,
}

/// Interior local extrema, treating runs of equal values as one vertex.
/// Runs touching either endpoint are never extrema.
pub fn interior_extrema(ys: &[f64]) -> Vec<Extremum> {
    let mut runs: Vec<(usize, usize)> = Vec::new();
    for (i, &y) in ys.iter().enumerate() {
        match runs.last_mut() {
            Some(r) if ys[r.0] == y => r.1 = i,
            _ => runs.push((i, i)),
        }
    }
    let mut out = Vec::new();
    for w in runs.windows(3) {
        let (prev, cur, next) = (ys[w[0].0], ys[w[1].0], ys[w[2].0]);
        if cur > prev && cur > next {
            out.push(Extremum {
                start: w[1].0,
                end: w[1].1,
                value: cur,
                is_max: true,
            });
        } else if cur < prev && cur < next {
            out.push(Extremum {
                start: w[1].0,
                end: w[1].1,
                value: cur,
                is_max: false,
            });
        }
    }
    out
}

/// Cancels neighbouring extremum pairs whose persistence is below
/// `threshold`, smallest first (leftmost on ties), until none remain. A
/// cancelled pair is removed together with the vertices between them.
pub fn persistence_simplify(curve: &Polyline1D, threshold: f64) -> Polyline1D {
    let mut points = curve.points.clone();
    loop {
        let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
        let ext = interior_extrema(&ys);
        let mut best: Option<(f64, usize)> = None;
        for (i, w) in ext.windows(2).enumerate() {
            let p = (w[0].value - w[1].value).abs();
            if p < threshold && best.is_none_or(|(bp, _)| p < bp) {
                best = Some((p, i));
            }
        }
        let Some((_, i)) = best else {
            break;
        };
        points.drain(ext[i].start..=ext[i + 1].end);
    }
    Polyline1D { points }
}

/// Samples `n` evenly spaced entries of the diverging table.
pub fn palette(n: usize) -> Vec<Rgb> {
    let n = n.clamp(2, DIVERGING_PALETTE.len());
    let last = DIVERGING_PALETTE.len() - 1;
    (0..n)
        .map(|i| DIVERGING_PALETTE[(libm::round(i as f64 * last as f64 / (n - 1) as f64)) as usize])
        .collect()
}

/// Initial transfer function for the voxels of `footprint`: the histogram
/// curve is simplified and each surviving vertex becomes a control point.
pub fn auto_transfer_function(
    vol: &ScalarVolume,
    labeling: &SuperVoxelLabeling,
    footprint: &[u32],
    palette_size: usize,
    persistence_fraction: f64,
) -> Result<TransferFunction1D> {
    if footprint.is_empty() {
        return Err(Error::InvalidParameter("empty footprint".into()));
    }
    let mut inside = vec![false; labeling.count()];
    for &s in footprint {
        *inside
            .get_mut(s as usize)
            .ok_or(Error::UnknownId { kind: "super-voxel", id: s as usize })? = true;
    }
    let values: Vec<f64> = labeling
        .labels
        .iter()
        .zip(&vol.data)
        .filter(|(l, _)| inside[**l as usize])
        .map(|(_, &v)| v as f64)
        .collect();
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let colors = palette(palette_size);
    if !(hi > lo) {
        return TransferFunction1D::new(vec![
            ControlPoint {
                scalar: lo - 0.5,
                color: colors[0],
                opacity: OPACITY_MAX,
            },
            ControlPoint {
                scalar: lo + 0.5,
                color: colors[colors.len() - 1],
                opacity: OPACITY_MAX,
            },
        ]);
    }
    let mut counts = [0u64; TF_BINS];
    for &v in &values {
        counts[bin_index(v, lo, hi, TF_BINS)] += 1;
    }
    let width = (hi - lo) / TF_BINS as f64;
    let curve = Polyline1D {
        points: counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (lo + (i as f64 + 0.5) * width, c as f64))
            .collect(),
    };
    let peak = counts.iter().copied().max().unwrap_or(0) as f64;
    let simplified = persistence_simplify(&curve, persistence_fraction * peak);
    let ymax = simplified.points.iter().map(|p| p.1).fold(0.0, f64::max);
    let n = simplified.points.len();
    let points = simplified
        .points
        .iter()
        .enumerate()
        .map(|(j, &(x, y))| {
            let ci = libm::round(j as f64 * (colors.len() - 1) as f64 / (n - 1).max(1) as f64) as usize;
            let h = if ymax > 0.0 { y / ymax } else { 0.0 };
            ControlPoint {
                scalar: x,
                color: colors[ci],
                opacity: OPACITY_MIN + (OPACITY_MAX - OPACITY_MIN) * h,
            }
        })
        .collect();
    TransferFunction1D::new(points)
}

/// Maximum-intensity projection of per-voxel overlap counts along `axis`,
/// colored from [`OVERLAP_LOW`] (one member) to [`OVERLAP_HIGH`] (the
/// node's maximum). Voxels outside the footprint are black.
pub fn render_overlap_preview(node: &MetaCluster, labeling: &SuperVoxelLabeling, axis: Axis) -> RgbImage {
    let counts = overlap_projection(node, labeling, axis);
    let max = node.max_overlap();
    let (w, h) = projection_size(labeling.dims, axis);
    let mut img = RgbImage::new(w, h);
    for row in 0..h {
        for col in 0..w {
            let c = counts[row * w + col];
            if c == 0 {
                continue;
            }
            let t = if max > 1 {
                (c - 1) as f64 / (max - 1) as f64
            } else {
                0.0
            };
            let color = core::array::from_fn(|k| lerp_u8(OVERLAP_LOW[k], OVERLAP_HIGH[k], t));
            img.set_pixel(col, row, color);
        }
    }
    img
}

fn projection_size(dims: [usize; 3], axis: Axis) -> (usize, usize) {
    let (ca, ra) = axis.plane_axes();
    (dims[ca], dims[ra])
}

/// Per-pixel maximum overlap count along `axis`, row-major.
pub fn overlap_projection(node: &MetaCluster, labeling: &SuperVoxelLabeling, axis: Axis) -> Vec<u32> {
    let mut per_sv = vec![0u32; labeling.count()];
    for (&s, &c) in node.footprint.iter().zip(&node.overlap_counts) {
        if let Some(slot) = per_sv.get_mut(s as usize) {
            *slot = c;
        }
    }
    let dims = labeling.dims;
    let (ca, ra) = axis.plane_axes();
    let (w, h) = (dims[ca], dims[ra]);
    let mut out = vec![0u32; w * h];
    for (i, &l) in labeling.labels.iter().enumerate() {
        let c = per_sv[l as usize];
        if c == 0 {
            continue;
        }
        let p = [i % dims[0], (i / dims[0]) % dims[1], i / (dims[0] * dims[1])];
        let slot = &mut out[p[ra] * w + p[ca]];
        *slot = (*slot).max(c);
    }
    out
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RenderMode {
    #[default]
    Flat,
    Tf1d,
    SurfaceOutline,
}

/// A tree node instance and, optionally, a subset of its member regions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub instance: u32,
    /// Catalog region ids; empty selects the whole node footprint.
    #[serde(default)]
    pub regions: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Bookmark {
    pub id: u32,
    pub name: String,
    pub selections: Vec<Selection>,
    #[serde(default)]
    pub render_mode: RenderMode,
    pub color: Rgb,
    pub opacity: f64,
    #[serde(default)]
    pub transfer_function: Option<TransferFunction1D>,
}

/// A bookmark resolved to a super-voxel mask.
#[derive(Debug, Clone, PartialEq)]
pub struct BookmarkLayer {
    pub supervoxels: Vec<bool>,
    pub render_mode: RenderMode,
    pub color: Rgb,
    pub opacity: f64,
    pub transfer_function: Option<TransferFunction1D>,
}

impl Bookmark {
    /// Sorted super-voxels covered by the selections.
    pub fn supervoxels(
        &self,
        tree: &MetaClusterTree,
        metaclusters: &[MetaCluster],
        catalog: &RegionCatalog,
    ) -> Result<Vec<u32>> {
        let mut svs = Vec::new();
        for sel in &self.selections {
            let node = tree
                .node(sel.instance)
                .ok_or(Error::UnknownId { kind: "instance", id: sel.instance as usize })?;
            let Some(m) = node.metacluster_id else {
                svs.extend(0..tree.leaf_index.len() as u32);
                continue;
            };
            let mc = &metaclusters[m as usize];
            if sel.regions.is_empty() {
                svs.extend_from_slice(&mc.footprint);
            }
            for &r in &sel.regions {
                if mc.members.binary_search(&r).is_err() {
                    return Err(Error::UnknownId { kind: "region", id: r as usize });
                }
                svs.extend_from_slice(&catalog.regions[r as usize].supervoxels);
            }
        }
        svs.sort_unstable();
        svs.dedup();
        Ok(svs)
    }

    pub fn resolve(
        &self,
        tree: &MetaClusterTree,
        metaclusters: &[MetaCluster],
        catalog: &RegionCatalog,
    ) -> Result<BookmarkLayer> {
        if self.render_mode == RenderMode::Tf1d && self.transfer_function.is_none() {
            return Err(Error::InvalidParameter("tf1d bookmark without transfer function".into()));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::InvalidParameter("opacity must lie in [0, 1]".into()));
        }
        let mut mask = vec![false; tree.leaf_index.len()];
        for s in self.supervoxels(tree, metaclusters, catalog)? {
            mask[s as usize] = true;
        }
        Ok(BookmarkLayer {
            supervoxels: mask,
            render_mode: self.render_mode,
            color: self.color,
            opacity: self.opacity,
            transfer_function: self.transfer_function.clone(),
        })
    }
}

/// Maps a scalar to 8-bit gray through `[lo, hi]`.
#[inline]
pub fn window_gray(v: f64, [lo, hi]: [f64; 2]) -> u8 {
    if !(hi > lo) {
        return if v >= lo { 255 } else { 0 };
    }
    libm::round(((v - lo) / (hi - lo)).clamp(0.0, 1.0) * 255.0) as u8
}

#[inline]
fn blend(under: Rgb, over: Rgb, alpha: f64) -> Rgb {
    core::array::from_fn(|k| {
        libm::round(over[k] as f64 * alpha + under[k] as f64 * (1.0 - alpha)).clamp(0.0, 255.0) as u8
    })
}

/// Windowed grayscale slice.
pub fn render_gray_slice(vol: &ScalarVolume, axis: Axis, index: usize, window: [f64; 2]) -> Result<RgbImage> {
    let slice = vol.slice(axis, index)?;
    let mut img = RgbImage::new(slice.width, slice.height);
    for (i, &v) in slice.data.iter().enumerate() {
        let g = window_gray(v as f64, window);
        img.data[3 * i..3 * i + 3].copy_from_slice(&[g, g, g]);
    }
    Ok(img)
}

/// Grayscale slice with bookmark layers drawn over it in order.
pub fn render_composite_slice(
    vol: &ScalarVolume,
    labeling: &SuperVoxelLabeling,
    layers: &[BookmarkLayer],
    axis: Axis,
    index: usize,
    window: [f64; 2],
) -> Result<RgbImage> {
    let mut img = render_gray_slice(vol, axis, index, window)?;
    let dims = vol.dims();
    let (ca, ra) = axis.plane_axes();
    let (w, h) = (img.width, img.height);
    let voxel = |col: usize, row: usize| {
        let mut p = [0usize; 3];
        p[axis.index()] = index;
        p[ca] = col;
        p[ra] = row;
        p[0] + dims[0] * (p[1] + dims[1] * p[2])
    };
    for layer in layers {
        let in_mask = |col: usize, row: usize| layer.supervoxels[labeling.labels[voxel(col, row)] as usize];
        for row in 0..h {
            for col in 0..w {
                if !in_mask(col, row) {
                    continue;
                }
                let under = img.pixel(col, row);
                let out = match layer.render_mode {
                    RenderMode::Flat => blend(under, layer.color, layer.opacity),
                    RenderMode::Tf1d => {
                        let tf = layer.transfer_function.as_ref().ok_or_else(|| {
                            Error::InvalidParameter("tf1d layer without transfer function".into())
                        })?;
                        let (c, a) = tf.evaluate(vol.data[voxel(col, row)] as f64);
                        blend(under, c, a)
                    }
                    RenderMode::SurfaceOutline => {
                        let edge = (col > 0 && !in_mask(col - 1, row))
                            || (col + 1 < w && !in_mask(col + 1, row))
                            || (row > 0 && !in_mask(col, row - 1))
                            || (row + 1 < h && !in_mask(col, row + 1));
                        if !edge {
                            continue;
                        }
                        blend(under, layer.color, layer.opacity)
                    }
                };
                img.set_pixel(col, row, out);
            }
        }
    }
    Ok(img)
}
