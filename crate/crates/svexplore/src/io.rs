//! File formats. All binary files are headerless little-endian.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use svexplore_core::graph::{AdjacencyGraph, Edge, SvHistogram};
use svexplore_core::metacluster::MetaCluster;
use svexplore_core::slic::{SuperVoxelLabeling, SuperVoxelStats};
use svexplore_core::viz::RgbImage;
use svexplore_core::{IntervalClustering, ScalarVolume, VolumeMeta};

use crate::error::{Error, IoContext, Result};

/// Writes through a temporary sibling and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).at(dir)?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).at(&tmp)?;
    fs::rename(&tmp, path).at(path)
}

pub fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).at(path)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let bytes = read_bytes(path)?;
    serde_json::from_slice(&bytes).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        source,
    })
}

pub fn to_json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    let mut out = serde_json::to_vec_pretty(value).expect("serializable value");
    out.push(b'\n');
    out
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    atomic_write(path, &to_json_bytes(value))
}

/// `<volume>.json` next to the raw file.
pub fn sidecar_path(volume: &Path) -> PathBuf {
    volume.with_extension("json")
}

pub fn load_raw_volume(path: &Path, meta: &VolumeMeta) -> Result<ScalarVolume> {
    let bytes = read_bytes(path)?;
    ScalarVolume::decode_raw(&bytes, meta).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        msg: e.to_string(),
    })
}

/// Loads a raw volume described by its sidecar.
pub fn load_volume(path: &Path) -> Result<ScalarVolume> {
    let sidecar = sidecar_path(path);
    if !sidecar.is_file() {
        return Err(Error::MissingFile(sidecar));
    }
    let meta: VolumeMeta = read_json(&sidecar)?;
    load_raw_volume(path, &meta)
}

/// Writes `vol` as raw f32 plus its sidecar.
pub fn write_volume(path: &Path, vol: &ScalarVolume) -> Result<()> {
    atomic_write(path, &vol.encode_f32())?;
    write_json(&sidecar_path(path), &vol.f32_meta())
}

pub fn encode_u32s(values: &[u32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

pub fn decode_u32s(path: &Path, bytes: &[u8]) -> Result<Vec<u32>> {
    if !bytes.len().is_multiple_of(4) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("length {} is not a multiple of 4", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect())
}

pub fn encode_edges(edges: &[Edge]) -> Vec<u8> {
    let mut out = Vec::with_capacity(edges.len() * 12);
    for e in edges {
        out.extend_from_slice(&e.a.to_le_bytes());
        out.extend_from_slice(&e.b.to_le_bytes());
        out.extend_from_slice(&e.weight.to_le_bytes());
    }
    out
}

pub fn decode_edges(path: &Path, bytes: &[u8]) -> Result<Vec<Edge>> {
    if !bytes.len().is_multiple_of(12) {
        return Err(Error::Format {
            path: path.to_path_buf(),
            msg: format!("length {} is not a multiple of 12", bytes.len()),
        });
    }
    Ok(bytes
        .chunks_exact(12)
        .map(|c| Edge {
            a: u32::from_le_bytes([c[0], c[1], c[2], c[3]]),
            b: u32::from_le_bytes([c[4], c[5], c[6], c[7]]),
            weight: f32::from_le_bytes([c[8], c[9], c[10], c[11]]),
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvRecord {
    #[serde(flatten)]
    pub stats: SuperVoxelStats,
    pub node_size: f64,
    pub histogram: SvHistogram,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvStatsFile {
    pub degenerate: bool,
    pub bins: usize,
    pub supervoxels: Vec<SvRecord>,
}

impl SvStatsFile {
    pub fn new(labeling: &SuperVoxelLabeling, graph: &AdjacencyGraph, hists: &[SvHistogram]) -> Self {
        Self {
            degenerate: labeling.degenerate,
            bins: hists.first().map_or(0, |h| h.bins.len()),
            supervoxels: labeling
                .stats
                .iter()
                .zip(&graph.node_sizes)
                .zip(hists)
                .map(|((s, &n), h)| SvRecord {
                    stats: s.clone(),
                    node_size: n,
                    histogram: h.clone(),
                })
                .collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalRecord {
    pub k_start: f64,
    /// `None` for an unbounded interval.
    pub k_end: Option<f64>,
    pub region_count: usize,
    /// Offset into `partitions.bin`, in labels.
    pub partition_offset: usize,
}

pub fn encode_clusterings(cs: &[IntervalClustering]) -> (Vec<IntervalRecord>, Vec<u8>) {
    let mut records = Vec::with_capacity(cs.len());
    let mut labels = Vec::new();
    for c in cs {
        records.push(IntervalRecord {
            k_start: c.k_start,
            k_end: c.k_end.is_finite().then_some(c.k_end),
            region_count: c.region_count,
            partition_offset: labels.len(),
        });
        labels.extend_from_slice(&c.partition);
    }
    (records, encode_u32s(&labels))
}

pub fn decode_clusterings(
    path: &Path,
    records: &[IntervalRecord],
    labels: &[u32],
    nodes: usize,
) -> Result<Vec<IntervalClustering>> {
    records
        .iter()
        .map(|r| {
            let part = labels.get(r.partition_offset..r.partition_offset + nodes).ok_or_else(|| {
                Error::Format {
                    path: path.to_path_buf(),
                    msg: format!("partition offset {} out of range", r.partition_offset),
                }
            })?;
            Ok(IntervalClustering {
                k_start: r.k_start,
                k_end: r.k_end.unwrap_or(f64::INFINITY),
                partition: part.to_vec(),
                region_count: r.region_count,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaClusterRecord {
    pub id: u32,
    pub members: Vec<u32>,
    pub footprint_voxel_size: u64,
    /// `(super-voxel, member count)` for every footprint super-voxel.
    pub overlap: Vec<(u32, u32)>,
}

impl From<&MetaCluster> for MetaClusterRecord {
    fn from(mc: &MetaCluster) -> Self {
        Self {
            id: mc.id,
            members: mc.members.clone(),
            footprint_voxel_size: mc.footprint_voxel_size,
            overlap: mc.footprint.iter().copied().zip(mc.overlap_counts.iter().copied()).collect(),
        }
    }
}

impl From<MetaClusterRecord> for MetaCluster {
    fn from(r: MetaClusterRecord) -> Self {
        let (footprint, overlap_counts) = r.overlap.into_iter().unzip();
        Self {
            id: r.id,
            members: r.members,
            footprint,
            footprint_voxel_size: r.footprint_voxel_size,
            overlap_counts,
        }
    }
}

/// 8-bit RGB PNG.
pub fn encode_png(img: &RgbImage) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, img.width as u32, img.height as u32);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        let mut w = enc.write_header()?;
        w.write_image_data(&img.data)?;
    }
    Ok(out)
}

/// Run-length encoding of one mask row as `(start, len)` runs.
pub fn rle_row(row: impl IntoIterator<Item = bool>) -> Vec<(u32, u32)> {
    let mut runs: Vec<(u32, u32)> = Vec::new();
    let mut open = false;
    for (i, v) in row.into_iter().enumerate() {
        match (v, open) {
            (true, true) => runs.last_mut().expect("open run").1 += 1,
            (true, false) => runs.push((i as u32, 1)),
            _ => {}
        }
        open = v;
    }
    runs
}
