//! Containment hierarchy over meta-clusters.
//!
//! Containment is footprint containment. A meta-cluster hangs below each of
//! its minimal supersets, so every superset of a node is an ancestor of at
//! least one of its instances. The tree is the unfolding of that superset
//! diagram from a synthetic root: a meta-cluster reachable along several
//! paths gets one instance per path, the one on the chain of smallest
//! supersets being canonical. Super-voxels are not materialized as leaves;
//! an inverted index maps each one to the instances of the smallest
//! meta-clusters containing it.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metacluster::MetaCluster;
use crate::slic::SuperVoxelLabeling;

pub const ROOT: u32 = 0;
pub const DEFAULT_MAX_INSTANCES: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreeNode {
    pub instance_id: u32,
    /// `None` for the root.
    pub metacluster_id: Option<u32>,
    pub parent_instance: Option<u32>,
    /// Ordered by footprint size, largest first.
    pub children: Vec<u32>,
    pub footprint_voxel_size: u64,
    pub is_duplicate: bool,
    pub canonical_instance: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct BuildReport {
    /// Pairs `(kept_above, placed_below)` of meta-clusters with identical
    /// footprints; the lower id is treated as the superset.
    pub identical_footprints: Vec<(u32, u32)>,
    pub duplicate_instances: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetaClusterTree {
    pub nodes: Vec<TreeNode>,
    pub footprints: Vec<Vec<u32>>,
    pub sizes: Vec<u64>,
    /// Minimal supersets per meta-cluster, smallest first. Empty means root.
    pub parents: Vec<Vec<u32>>,
    pub instances: Vec<Vec<u32>>,
    pub canonical: Vec<u32>,
    /// Per super-voxel: instances of the smallest meta-clusters containing it.
    pub leaf_index: Vec<Vec<u32>>,
    pub total_voxels: u64,
    pub report: BuildReport,
}

#[inline]
fn order_key(sizes: &[u64], m: u32) -> (u64, core::cmp::Reverse<u32>) {
    (sizes[m as usize], core::cmp::Reverse(m))
}

/// Builds the tree. `sv_sizes` gives voxels per super-voxel.
pub fn build_tree(
    metaclusters: &[MetaCluster],
    sv_sizes: &[u64],
    max_instances: usize,
) -> Result<MetaClusterTree> {
    let n = metaclusters.len();
    let nsv = sv_sizes.len();
    for (i, mc) in metaclusters.iter().enumerate() {
        if mc.id as usize != i {
            return Err(Error::InvalidParameter(format!("meta-cluster at {i} has id {}", mc.id)));
        }
        if mc.footprint.is_empty() || mc.footprint.iter().any(|&s| s as usize >= nsv) {
            return Err(Error::UnknownId { kind: "super-voxel", id: i });
        }
    }
    let sizes: Vec<u64> = metaclusters.iter().map(|m| m.footprint_voxel_size).collect();
    let mut report = BuildReport::default();

    let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); nsv];
    for mc in metaclusters {
        for &s in &mc.footprint {
            buckets[s as usize].push(mc.id);
        }
    }

    // Supersets of each meta-cluster, smallest first.
    let mut supersets: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut hits = vec![0u32; n];
    let mut touched = Vec::new();
    for mc in metaclusters {
        for &s in &mc.footprint {
            for &o in &buckets[s as usize] {
                if hits[o as usize] == 0 {
                    touched.push(o);
                }
                hits[o as usize] += 1;
            }
        }
        let need = mc.footprint.len() as u32;
        let me = order_key(&sizes, mc.id);
        let mut sup: Vec<u32> = touched
            .iter()
            .copied()
            .filter(|&o| o != mc.id && hits[o as usize] == need && order_key(&sizes, o) > me)
            .collect();
        for &o in &touched {
            if hits[o as usize] == need
                && o != mc.id
                && metaclusters[o as usize].footprint.len() == mc.footprint.len()
                && o < mc.id
            {
                report.identical_footprints.push((o, mc.id));
            }
            hits[o as usize] = 0;
        }
        touched.clear();
        sup.sort_by_key(|&o| order_key(&sizes, o));
        supersets.push(sup);
    }

    // Minimal supersets: skip any superset already above a chosen parent.
    let mut parents: Vec<Vec<u32>> = Vec::with_capacity(n);
    let mut stamp = vec![u32::MAX; n];
    for (v, sup) in supersets.iter().enumerate() {
        let mut chosen = Vec::new();
        for &s in sup {
            if stamp[s as usize] == v as u32 {
                continue;
            }
            chosen.push(s);
            for &t in &supersets[s as usize] {
                stamp[t as usize] = v as u32;
            }
        }
        parents.push(chosen);
    }

    let mut children: Vec<Vec<u32>> = vec![Vec::new(); n + 1];
    for (v, ps) in parents.iter().enumerate() {
        if ps.is_empty() {
            children[n].push(v as u32);
        }
        for &p in ps {
            children[p as usize].push(v as u32);
        }
    }
    for list in &mut children {
        list.sort_by(|&a, &b| sizes[b as usize].cmp(&sizes[a as usize]).then(a.cmp(&b)));
    }

    // Unfold depth-first; instance ids in pre-order.
    let total_voxels: u64 = sv_sizes.iter().sum();
    let mut nodes = vec![TreeNode {
        instance_id: ROOT,
        metacluster_id: None,
        parent_instance: None,
        children: Vec::new(),
        footprint_voxel_size: total_voxels,
        is_duplicate: false,
        canonical_instance: ROOT,
    }];
    let mut instances: Vec<Vec<u32>> = vec![Vec::new(); n];
    let mut canonical = vec![u32::MAX; n];
    // (mc, parent instance, parent is canonical and this edge is primary)
    let mut stack: Vec<(u32, u32, bool)> = children[n].iter().rev().map(|&v| (v, ROOT, true)).collect();
    while let Some((v, parent, primary)) = stack.pop() {
        if nodes.len() >= max_instances {
            return Err(Error::TreeTooLarge { limit: max_instances });
        }
        let id = nodes.len() as u32;
        nodes[parent as usize].children.push(id);
        if primary {
            canonical[v as usize] = id;
        }
        nodes.push(TreeNode {
            instance_id: id,
            metacluster_id: Some(v),
            parent_instance: Some(parent),
            children: Vec::new(),
            footprint_voxel_size: sizes[v as usize],
            is_duplicate: !primary,
            canonical_instance: u32::MAX,
        });
        instances[v as usize].push(id);
        for &c in children[v as usize].iter().rev() {
            let edge_primary = primary && parents[c as usize][0] == v;
            stack.push((c, id, edge_primary));
        }
    }
    for node in nodes.iter_mut().skip(1) {
        node.canonical_instance = canonical[node.metacluster_id.unwrap() as usize];
    }
    report.duplicate_instances = nodes.len() - 1 - n;

    let mut leaf_index: Vec<Vec<u32>> = vec![Vec::new(); nsv];
    for (s, bucket) in buckets.iter().enumerate() {
        for &m in bucket {
            let minimal = children[m as usize]
                .iter()
                .all(|&c| !metaclusters[c as usize].contains_supervoxel(s as u32));
            if minimal {
                leaf_index[s].extend_from_slice(&instances[m as usize]);
            }
        }
        leaf_index[s].sort_unstable();
    }

    Ok(MetaClusterTree {
        nodes,
        footprints: metaclusters.iter().map(|m| m.footprint.clone()).collect(),
        sizes,
        parents,
        instances,
        canonical,
        leaf_index,
        total_voxels,
        report,
    })
}

impl MetaClusterTree {
    pub fn node(&self, instance: u32) -> Option<&TreeNode> {
        self.nodes.get(instance as usize)
    }

    pub fn metacluster_count(&self) -> usize {
        self.sizes.len()
    }

    /// Footprint of an instance; `None` for the root (the whole volume).
    pub fn footprint_of(&self, instance: u32) -> Option<&[u32]> {
        let m = self.nodes[instance as usize].metacluster_id?;
        Some(&self.footprints[m as usize])
    }

    fn contains_all(&self, m: u32, svs: &[u32]) -> bool {
        let fp = &self.footprints[m as usize];
        svs.iter().all(|s| fp.binary_search(s).is_ok())
    }

    /// Meta-clusters whose footprint holds every super-voxel of `svs` (sorted,
    /// non-empty) with size in `[min_size, max_size]`, smallest first.
    pub fn search_supervoxels(&self, svs: &[u32], min_size: u64, max_size: u64) -> Vec<SearchHit> {
        let Some(&first) = svs.first() else {
            return Vec::new();
        };
        let Some(entries) = self.leaf_index.get(first as usize) else {
            return Vec::new();
        };
        let mut visited = vec![false; self.nodes.len()];
        let mut found = vec![false; self.sizes.len()];
        let mut hits = Vec::new();
        for &start in entries {
            let mut cur = Some(start);
            while let Some(inst) = cur {
                if visited[inst as usize] {
                    break;
                }
                visited[inst as usize] = true;
                let node = &self.nodes[inst as usize];
                let Some(m) = node.metacluster_id else {
                    break;
                };
                let size = self.sizes[m as usize];
                if size > max_size {
                    break;
                }
                if size >= min_size && !found[m as usize] && self.contains_all(m, svs) {
                    found[m as usize] = true;
                    hits.push(SearchHit {
                        metacluster_id: m,
                        instance_id: self.canonical[m as usize],
                        footprint_voxel_size: size,
                    });
                }
                cur = node.parent_instance;
            }
        }
        hits.sort_by_key(|h| (h.footprint_voxel_size, h.metacluster_id));
        hits
    }

    /// Brushing search over voxel coordinates.
    pub fn search_nodes(&self, labeling: &SuperVoxelLabeling, q: &SearchQuery) -> Result<Vec<SearchHit>> {
        if q.min_size > q.max_size {
            return Err(Error::InvalidParameter(format!(
                "min_size {} exceeds max_size {}",
                q.min_size, q.max_size
            )));
        }
        let svs = brushed_supervoxels(labeling, &q.brushed_voxels)?;
        Ok(self.search_supervoxels(&svs, q.min_size, q.max_size))
    }

    /// Instance of the smallest meta-cluster containing every brushed voxel,
    /// or the root when nothing smaller than the whole volume does.
    pub fn containing_node(&self, labeling: &SuperVoxelLabeling, brushed: &[[i64; 3]]) -> Result<u32> {
        let svs = brushed_supervoxels(labeling, brushed)?;
        Ok(self
            .search_supervoxels(&svs, 0, self.total_voxels.saturating_sub(1))
            .first()
            .map_or(ROOT, |h| h.instance_id))
    }

    /// Unfiltered view.
    pub fn view(&self) -> TreeView<'_> {
        TreeView {
            tree: self,
            visible: vec![true; self.nodes.len()],
        }
    }

    pub fn filter_tree(&self, spec: &FilterSpec) -> TreeView<'_> {
        self.view().filter(spec)
    }
}

/// Sorted unique super-voxel ids under the brushed voxels.
pub fn brushed_supervoxels(labeling: &SuperVoxelLabeling, brushed: &[[i64; 3]]) -> Result<Vec<u32>> {
    if brushed.is_empty() {
        return Err(Error::InvalidParameter("empty brush".into()));
    }
    let dims = labeling.dims;
    let mut svs = Vec::with_capacity(brushed.len());
    for &p in brushed {
        if !(0..3).all(|a| p[a] >= 0 && (p[a] as usize) < dims[a]) {
            return Err(Error::VoxelOutOfBounds {
                x: p[0],
                y: p[1],
                z: p[2],
            });
        }
        svs.push(labeling.label_at([p[0] as usize, p[1] as usize, p[2] as usize]));
    }
    svs.sort_unstable();
    svs.dedup();
    Ok(svs)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SearchHit {
    pub metacluster_id: u32,
    pub instance_id: u32,
    pub footprint_voxel_size: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchQuery {
    pub brushed_voxels: Vec<[i64; 3]>,
    pub min_size: u64,
    pub max_size: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FilterSpec {
    pub min_voxel_size: u64,
    /// `None` means unlimited.
    pub max_branching: Option<usize>,
}

/// Read-only visibility mask over a tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeView<'a> {
    pub tree: &'a MetaClusterTree,
    visible: Vec<bool>,
}

impl<'a> TreeView<'a> {
    /// Further restricts this view. Hidden nodes stay hidden.
    pub fn filter(&self, spec: &FilterSpec) -> TreeView<'a> {
        let tree = self.tree;
        let mut visible = vec![false; tree.nodes.len()];
        visible[ROOT as usize] = true;
        let mut stack = vec![ROOT];
        let cap = spec.max_branching.unwrap_or(usize::MAX);
        while let Some(i) = stack.pop() {
            let kept = tree.nodes[i as usize]
                .children
                .iter()
                .copied()
                .filter(|&c| self.visible[c as usize])
                .filter(|&c| tree.nodes[c as usize].footprint_voxel_size >= spec.min_voxel_size)
                .take(cap);
            for c in kept {
                visible[c as usize] = true;
                stack.push(c);
            }
        }
        TreeView { tree, visible }
    }

    pub fn is_visible(&self, instance: u32) -> bool {
        self.visible.get(instance as usize).copied().unwrap_or(false)
    }

    pub fn children(&self, instance: u32) -> impl Iterator<Item = u32> + '_ {
        self.tree.nodes[instance as usize]
            .children
            .iter()
            .copied()
            .filter(move |&c| self.visible[c as usize])
    }

    /// Visible instances in pre-order.
    pub fn instances(&self) -> Vec<u32> {
        let mut out = Vec::new();
        let mut stack = vec![ROOT];
        while let Some(i) = stack.pop() {
            out.push(i);
            let kids: Vec<u32> = self.children(i).collect();
            stack.extend(kids.into_iter().rev());
        }
        out
    }

    pub fn len(&self) -> usize {
        self.visible.iter().filter(|&&v| v).count()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mc(id: u32, footprint: &[u32], sv_sizes: &[u64]) -> MetaCluster {
        MetaCluster {
            id,
            members: vec![id],
            footprint: footprint.to_vec(),
            footprint_voxel_size: footprint.iter().map(|&s| sv_sizes[s as usize]).sum(),
            overlap_counts: vec![1; footprint.len()],
        }
    }

    fn paths(tree: &MetaClusterTree, m: u32) -> Vec<Vec<Option<u32>>> {
        tree.instances[m as usize]
            .iter()
            .map(|&i| {
                let mut path = Vec::new();
                let mut cur = tree.nodes[i as usize].parent_instance;
                while let Some(p) = cur {
                    path.push(tree.nodes[p as usize].metacluster_id);
                    cur = tree.nodes[p as usize].parent_instance;
                }
                path
            })
            .collect()
    }

    #[test]
    fn nested_chain_has_no_duplicates() {
        let sz = [1u64; 6];
        let mcs = vec![mc(0, &[0, 1, 2, 3, 4], &sz), mc(1, &[1, 2, 3], &sz), mc(2, &[2], &sz)];
        let t = build_tree(&mcs, &sz, 100).unwrap();
        assert_eq!(t.nodes.len(), 4);
        assert_eq!(t.report.duplicate_instances, 0);
        assert_eq!(t.nodes[0].children, vec![1]);
        assert_eq!(t.nodes[1].metacluster_id, Some(0));
        assert_eq!(t.nodes[2].metacluster_id, Some(1));
        assert_eq!(t.nodes[3].metacluster_id, Some(2));
        assert_eq!(t.nodes[3].parent_instance, Some(2));
    }

    #[test]
    fn shared_child_is_duplicated_under_both_parents() {
        let sz = [1u64; 8];
        // A and B overlap only in C; B is smaller.
        let mcs = vec![
            mc(0, &[0, 1, 2, 3, 4], &sz),
            mc(1, &[3, 4, 5, 6], &sz),
            mc(2, &[3, 4], &sz),
        ];
        let t = build_tree(&mcs, &sz, 100).unwrap();
        assert_eq!(t.parents[2], vec![1, 0]);
        assert_eq!(t.instances[2].len(), 2);
        assert_eq!(t.report.duplicate_instances, 1);
        let root_kids: Vec<_> = t.nodes[0].children.iter().map(|&c| t.nodes[c as usize].metacluster_id).collect();
        assert_eq!(root_kids, vec![Some(0), Some(1)]);
        let canon = t.canonical[2];
        assert!(!t.nodes[canon as usize].is_duplicate);
        let parent = t.nodes[canon as usize].parent_instance.unwrap();
        assert_eq!(t.nodes[parent as usize].metacluster_id, Some(1));
        // Brute force: every superset of C is an ancestor of some instance.
        let ps = paths(&t, 2);
        for s in [0u32, 1] {
            assert!(ps.iter().any(|p| p.contains(&Some(s))));
        }
        for &i in &t.instances[2] {
            assert_eq!(t.nodes[i as usize].canonical_instance, canon);
        }
    }

    #[test]
    fn identical_footprints_resolve_by_id() {
        let sz = [2u64; 3];
        let mcs = vec![mc(0, &[0, 1], &sz), mc(1, &[0, 1], &sz), mc(2, &[2], &sz)];
        let t = build_tree(&mcs, &sz, 100).unwrap();
        assert_eq!(t.report.identical_footprints, vec![(0, 1)]);
        assert_eq!(t.parents[1], vec![0]);
        assert!(t.parents[0].is_empty());
    }

    #[test]
    fn diamond_shares_copy_through_common_branch() {
        let sz = [1u64; 10];
        // D ⊂ C ⊂ A and D ⊂ B ⊂ A: D needs one instance per path through A.
        let mcs = vec![
            mc(0, &[0, 1, 2, 3, 4, 5, 6, 7], &sz),
            mc(1, &[0, 1, 2, 3], &sz),
            mc(2, &[2, 3, 4, 5, 6], &sz),
            mc(3, &[2, 3], &sz),
        ];
        let t = build_tree(&mcs, &sz, 100).unwrap();
        assert_eq!(t.parents[3], vec![1, 2]);
        assert_eq!(t.parents[1], vec![0]);
        assert_eq!(t.instances[3].len(), 2);
        assert_eq!(t.instances[0].len(), 1);
    }

    #[test]
    fn instance_limit() {
        let sz = [1u64; 4];
        let mcs = vec![mc(0, &[0, 1, 2], &sz), mc(1, &[0, 1], &sz), mc(2, &[0], &sz)];
        assert_eq!(build_tree(&mcs, &sz, 3), Err(Error::TreeTooLarge { limit: 3 }));
    }

    #[test]
    fn filters_are_views() {
        let sz = [1u64; 10];
        let mcs = vec![
            mc(0, &[0, 1, 2, 3, 4, 5], &sz),
            mc(1, &[0, 1, 2], &sz),
            mc(2, &[3, 4], &sz),
            mc(3, &[5], &sz),
            mc(4, &[6, 7, 8], &sz),
        ];
        let t = build_tree(&mcs, &sz, 100).unwrap();
        assert_eq!(t.view().len(), t.nodes.len());
        let one = t.filter_tree(&FilterSpec {
            min_voxel_size: 0,
            max_branching: Some(1),
        });
        for i in one.instances() {
            let kids: Vec<u32> = one.children(i).collect();
            assert!(kids.len() <= 1);
            if let Some(&k) = kids.first() {
                assert_eq!(k, t.nodes[i as usize].children[0]);
            }
        }
        let big = t.filter_tree(&FilterSpec {
            min_voxel_size: 3,
            max_branching: None,
        });
        for i in big.instances() {
            assert!(t.nodes[i as usize].footprint_voxel_size >= 3);
        }
        assert_eq!(big.len(), 4);
        // Composition keeps the stricter of both.
        let both = big.filter(&FilterSpec {
            min_voxel_size: 0,
            max_branching: Some(1),
        });
        assert_eq!(both.instances().len(), 3);
        assert_eq!(t.view().len(), t.nodes.len());
    }
}
