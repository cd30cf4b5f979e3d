//! Offline pipeline and the on-disk bundle it produces.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use svexplore_core::graph::{build_adjacency_graph, AdjacencyGraph, DEFAULT_BINS};
use svexplore_core::metacluster::{catalog_regions, reverse_delete_cluster, DEFAULT_JACCARD_THRESHOLD};
use svexplore_core::slic::compute_supervoxels;
use svexplore_core::tree::{build_tree, TreeNode, DEFAULT_MAX_INSTANCES, ROOT};
use svexplore_core::viz::render_overlap_preview;
use svexplore_core::{
    exhaustive_cluster, Axis, IntervalClustering, MetaCluster, MetaClusterTree, RegionCatalog, ScalarVolume,
    SizeUnits, SlicParams, SuperVoxelLabeling, SweepConfig, ThresholdRule, VolumeMeta,
};

use crate::error::{Error, IoContext, Result};
use crate::io::{
    self, decode_clusterings, decode_edges, decode_u32s, encode_clusterings, encode_edges, encode_png, encode_u32s,
    read_bytes, read_json, write_json, IntervalRecord, MetaClusterRecord, SvStatsFile,
};
use crate::store::Bookmarks;

pub const FORMAT_VERSION: u32 = 1;

pub const META: &str = "meta.json";
pub const VOLUME: &str = "volume.f32";
pub const LABELS: &str = "labels.u32";
pub const SVSTATS: &str = "svstats.json";
pub const EDGES: &str = "edges.bin";
pub const INTERVALS: &str = "clusterings/intervals.json";
pub const PARTITIONS: &str = "clusterings/partitions.bin";
pub const REGIONS: &str = "regions.json";
pub const METACLUSTERS: &str = "metaclusters.json";
pub const TREE: &str = "tree.json";
pub const PREVIEWS: &str = "previews";
pub const BOOKMARKS: &str = "bookmarks.json";
pub const MANIFEST: &str = "manifest.json";

/// Every file the pipeline writes except the manifest and previews.
pub const DATA_FILES: [&str; 11] = [
    META, VOLUME, LABELS, SVSTATS, EDGES, INTERVALS, PARTITIONS, REGIONS, METACLUSTERS, TREE, BOOKMARKS,
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PrecomputeParams {
    pub supervoxel_size: usize,
    pub compactness: f64,
    pub max_iterations: usize,
    pub convergence_eps: f64,
    pub bins: usize,
    pub size_units: SizeUnits,
    pub jaccard_threshold: f64,
    pub initial_range: f64,
    pub growth_factor: f64,
    pub workers: usize,
    pub threshold_rule: ThresholdRule,
    /// 0 disables smoothing.
    pub smooth_sigma: f64,
    pub max_tree_instances: usize,
}

impl Default for PrecomputeParams {
    fn default() -> Self {
        let slic = SlicParams::default();
        let sweep = SweepConfig::default();
        Self {
            supervoxel_size: slic.target_size,
            compactness: slic.compactness,
            max_iterations: slic.max_iterations,
            convergence_eps: slic.convergence_eps,
            bins: DEFAULT_BINS,
            size_units: SizeUnits::default(),
            jaccard_threshold: DEFAULT_JACCARD_THRESHOLD,
            initial_range: sweep.initial_range_width,
            growth_factor: sweep.growth_factor,
            workers: sweep.workers,
            threshold_rule: sweep.threshold_rule,
            smooth_sigma: 0.0,
            max_tree_instances: DEFAULT_MAX_INSTANCES,
        }
    }
}

impl PrecomputeParams {
    pub fn slic(&self) -> SlicParams {
        SlicParams {
            target_size: self.supervoxel_size,
            compactness: self.compactness,
            max_iterations: self.max_iterations,
            convergence_eps: self.convergence_eps,
        }
    }

    pub fn sweep(&self) -> SweepConfig {
        SweepConfig {
            initial_range_width: self.initial_range,
            growth_factor: self.growth_factor,
            workers: self.workers,
            threshold_rule: self.threshold_rule,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BundleCounts {
    pub supervoxels: usize,
    pub edges: usize,
    pub intervals: usize,
    pub regions: usize,
    pub metaclusters: usize,
    pub tree_nodes: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub valid: bool,
    #[serde(default)]
    pub failed_stage: Option<String>,
    pub params: PrecomputeParams,
    pub degenerate_supervoxels: bool,
    pub counts: BundleCounts,
    pub stage_timings: Vec<StageTiming>,
}

/// Preview file for a meta-cluster along `axis`, relative to the bundle.
pub fn preview_path(metacluster: u32, axis: Axis) -> PathBuf {
    Path::new(PREVIEWS).join(format!("mc{metacluster}_{}.png", axis_name(axis)))
}

pub fn axis_name(axis: Axis) -> &'static str {
    match axis {
        Axis::X => "x",
        Axis::Y => "y",
        Axis::Z => "z",
    }
}

pub const AXES: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];

#[derive(Serialize, Deserialize)]
struct TreeFile {
    nodes: Vec<TreeNode>,
    identical_footprints: Vec<(u32, u32)>,
    duplicate_instances: usize,
}

struct Timer {
    timings: Vec<StageTiming>,
}

impl Timer {
    fn stage<T>(&mut self, stage: &'static str, f: impl FnOnce() -> Result<T>) -> Result<T> {
        let t0 = Instant::now();
        let out = f().map_err(|e| Error::Stage {
            stage,
            source: Box::new(e),
        })?;
        self.timings.push(StageTiming {
            stage: stage.to_string(),
            seconds: t0.elapsed().as_secs_f64(),
        });
        Ok(out)
    }
}

/// Runs the full pipeline on the raw volume at `volume_path` (with its
/// `.json` sidecar) and writes the bundle to `out`. On failure the manifest
/// is left marked invalid with the failing stage.
pub fn precompute_bundle(volume_path: &Path, out: &Path, params: &PrecomputeParams) -> Result<Manifest> {
    fs::create_dir_all(out).at(out)?;
    let mut manifest = Manifest {
        format_version: FORMAT_VERSION,
        valid: false,
        failed_stage: None,
        params: params.clone(),
        degenerate_supervoxels: false,
        counts: BundleCounts::default(),
        stage_timings: Vec::new(),
    };
    write_json(&out.join(MANIFEST), &manifest)?;
    let mut timer = Timer { timings: Vec::new() };
    match run_pipeline(volume_path, out, params, &mut timer, &mut manifest) {
        Ok(()) => {
            manifest.valid = true;
            manifest.stage_timings = timer.timings;
            write_json(&out.join(MANIFEST), &manifest)?;
            Ok(manifest)
        }
        Err(e) => {
            if let Error::Stage { stage, .. } = &e {
                manifest.failed_stage = Some(stage.to_string());
            }
            manifest.stage_timings = timer.timings;
            write_json(&out.join(MANIFEST), &manifest)?;
            Err(e)
        }
    }
}

fn core_err(e: svexplore_core::Error) -> Error {
    Error::Core(e)
}

fn run_pipeline(
    volume_path: &Path,
    out: &Path,
    params: &PrecomputeParams,
    timer: &mut Timer,
    manifest: &mut Manifest,
) -> Result<()> {
    let vol = timer.stage("load", || {
        let vol = io::load_volume(volume_path)?;
        io::atomic_write(&out.join(VOLUME), &vol.encode_f32())?;
        write_json(&out.join(META), &vol.f32_meta())?;
        Ok(vol)
    })?;
    let work = timer.stage("smooth", || Ok(vol.gaussian_smooth(params.smooth_sigma)?.normalized()))?;
    let labeling = timer.stage("slic", || {
        let l = compute_supervoxels(&work, &params.slic()).map_err(core_err)?;
        io::atomic_write(&out.join(LABELS), &encode_u32s(&l.labels))?;
        Ok(l)
    })?;
    manifest.degenerate_supervoxels = labeling.degenerate;
    let svg = timer.stage("graph", || {
        let g = build_adjacency_graph(&work, &labeling, params.bins, params.size_units)?;
        io::atomic_write(&out.join(EDGES), &encode_edges(&g.graph.edges))?;
        write_json(&out.join(SVSTATS), &SvStatsFile::new(&labeling, &g.graph, &g.histograms))?;
        Ok(g)
    })?;
    let clusterings = timer.stage("exhaustive_fh", || {
        let cs = exhaustive_cluster(&svg.graph, &params.sweep())?;
        let (records, bytes) = encode_clusterings(&cs);
        write_json(&out.join(INTERVALS), &records)?;
        io::atomic_write(&out.join(PARTITIONS), &bytes)?;
        Ok(cs)
    })?;
    let sv_sizes = labeling.voxel_counts();
    let catalog = timer.stage("catalog", || {
        let c = catalog_regions(&clusterings, &sv_sizes)?;
        write_json(&out.join(REGIONS), &c)?;
        Ok(c)
    })?;
    let mcs = timer.stage("metaclusters", || {
        let m = reverse_delete_cluster(&catalog, &sv_sizes, params.jaccard_threshold)?;
        let records: Vec<MetaClusterRecord> = m.iter().map(Into::into).collect();
        write_json(&out.join(METACLUSTERS), &records)?;
        Ok(m)
    })?;
    let tree = timer.stage("tree", || {
        let t = build_tree(&mcs, &sv_sizes, params.max_tree_instances)?;
        write_tree(&out.join(TREE), &t)?;
        Ok(t)
    })?;
    timer.stage("previews", || {
        for &inst in &tree.nodes[ROOT as usize].children {
            let m = tree.nodes[inst as usize].metacluster_id.expect("non-root child");
            for axis in AXES {
                let png = encode_png(&render_overlap_preview(&mcs[m as usize], &labeling, axis))?;
                io::atomic_write(&out.join(preview_path(m, axis)), &png)?;
            }
        }
        Ok(())
    })?;
    timer.stage("bookmarks", || {
        let path = out.join(BOOKMARKS);
        Bookmarks::default().save(&path)
    })?;
    manifest.counts = BundleCounts {
        supervoxels: labeling.count(),
        edges: svg.graph.edges.len(),
        intervals: clusterings.len(),
        regions: catalog.len(),
        metaclusters: mcs.len(),
        tree_nodes: tree.nodes.len(),
    };
    Ok(())
}

pub fn write_tree(path: &Path, tree: &MetaClusterTree) -> Result<()> {
    write_json(
        path,
        &TreeFile {
            nodes: tree.nodes.clone(),
            identical_footprints: tree.report.identical_footprints.clone(),
            duplicate_instances: tree.report.duplicate_instances,
        },
    )
}

/// A loaded, cross-checked bundle.
#[derive(Debug, Clone)]
pub struct Bundle {
    pub dir: PathBuf,
    pub manifest: Manifest,
    pub volume: ScalarVolume,
    pub labeling: SuperVoxelLabeling,
    pub sv_sizes: Vec<u64>,
    pub graph: AdjacencyGraph,
    pub clusterings: Vec<IntervalClustering>,
    pub catalog: RegionCatalog,
    pub metaclusters: Vec<MetaCluster>,
    pub tree: MetaClusterTree,
}

fn format_err(path: &Path, msg: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        msg: msg.into(),
    }
}

impl Bundle {
    pub fn load(dir: &Path) -> Result<Self> {
        let manifest: Manifest = read_json(&dir.join(MANIFEST))?;
        if !manifest.valid {
            return Err(Error::InvalidBundle(dir.to_path_buf()));
        }
        if manifest.format_version != FORMAT_VERSION {
            return Err(format_err(
                &dir.join(MANIFEST),
                format!("unsupported format version {}", manifest.format_version),
            ));
        }
        let meta: VolumeMeta = read_json(&dir.join(META))?;
        let volume = io::load_raw_volume(&dir.join(VOLUME), &meta)?;

        let labels_path = dir.join(LABELS);
        let labels = decode_u32s(&labels_path, &read_bytes(&labels_path)?)?;
        let mut labeling =
            SuperVoxelLabeling::from_labels(&volume, labels).map_err(|e| format_err(&labels_path, e.to_string()))?;
        let stats_path = dir.join(SVSTATS);
        let stats: SvStatsFile = read_json(&stats_path)?;
        if stats.supervoxels.len() != labeling.count() {
            return Err(format_err(&stats_path, "super-voxel count disagrees with labels"));
        }
        labeling.degenerate = stats.degenerate;
        let sv_sizes = labeling.voxel_counts();

        let edges_path = dir.join(EDGES);
        let edges = decode_edges(&edges_path, &read_bytes(&edges_path)?)?;
        let graph = AdjacencyGraph::new(stats.supervoxels.iter().map(|s| s.node_size).collect(), edges)
            .map_err(|e| format_err(&edges_path, e.to_string()))?;

        let records: Vec<IntervalRecord> = read_json(&dir.join(INTERVALS))?;
        let part_path = dir.join(PARTITIONS);
        let part = decode_u32s(&part_path, &read_bytes(&part_path)?)?;
        let clusterings = decode_clusterings(&part_path, &records, &part, labeling.count())?;

        let reg_path = dir.join(REGIONS);
        let catalog: RegionCatalog = read_json(&reg_path)?;
        for r in &catalog.regions {
            if r.supervoxels.iter().any(|&s| s as usize >= labeling.count())
                || r.intervals.iter().any(|&i| i as usize >= clusterings.len())
            {
                return Err(format_err(&reg_path, "region references an unknown id"));
            }
        }
        let mc_path = dir.join(METACLUSTERS);
        let mc_records: Vec<MetaClusterRecord> = read_json(&mc_path)?;
        let metaclusters: Vec<MetaCluster> = mc_records.into_iter().map(Into::into).collect();
        for mc in &metaclusters {
            if mc.members.iter().any(|&r| r as usize >= catalog.len()) {
                return Err(format_err(&mc_path, format!("meta-cluster {} references an unknown region", mc.id)));
            }
        }
        let tree = build_tree(&metaclusters, &sv_sizes, manifest.params.max_tree_instances)
            .map_err(|e| format_err(&mc_path, e.to_string()))?;
        let tree_path = dir.join(TREE);
        let stored: TreeFile = read_json(&tree_path)?;
        if stored.nodes != tree.nodes {
            return Err(format_err(&tree_path, "tree does not match meta-clusters"));
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            volume,
            labeling,
            sv_sizes,
            graph,
            clusterings,
            catalog,
            metaclusters,
            tree,
        })
    }
}
