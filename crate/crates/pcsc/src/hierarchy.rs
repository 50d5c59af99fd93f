//! Multiresolution occupancy hierarchy.
//!
//! From the leaf voxel set at depth `L`, coarser levels `l0..L` are obtained
//! by halving integer coordinates (dropping one Morton bit triple per step).
//! Each adjacent pair of levels carries two edge sets: the octree relation
//! (child's coordinates halved give the parent) and the two-scale stencil
//! relation (child key = 2*parent + k with k in {0..p}^3), which is wider
//! than the octree for p = 2.

use crate::cloud::{morton_decode, morton_key, MAX_DEPTH};
use crate::error::{Error, Result};
use crate::transform::stencil::TwoScaleKernel;

/// Occupied nodes of one level, sorted by Morton key.
#[derive(Debug, Clone)]
pub struct LevelNodes {
    pub keys: Vec<u64>,
    pub coords: Vec<[u16; 3]>,
}

impl LevelNodes {
    fn from_keys(keys: Vec<u64>) -> LevelNodes {
        let coords = keys.iter().map(|&k| morton_decode(k)).collect();
        LevelNodes { keys, coords }
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Index of the node with the given key, if occupied.
    pub fn index_of(&self, key: u64) -> Option<usize> {
        self.keys.binary_search(&key).ok()
    }
}

/// Edges between one level (parents) and the next finer one (children).
#[derive(Debug, Clone)]
pub struct LevelPair {
    /// Octree row starts, one row per parent. Children are Morton-sorted, so
    /// the children of parent `p` are exactly the contiguous index range
    /// `oct_start[p]..oct_start[p + 1]` of the finer level.
    pub oct_start: Vec<usize>,
    /// Octree parent of each child node.
    pub oct_parent: Vec<u32>,
    /// Child indices kept on the detail side: every child except the
    /// Morton-first child of its parent, ascending.
    pub select: Vec<u32>,
    /// Morton-first child per parent (the elided coordinate), parent order.
    pub elide: Vec<u32>,
    /// CSR row starts into the stencil arrays, one row per parent.
    pub stencil_start: Vec<usize>,
    /// Two-scale stencil children per parent.
    pub stencil_child: Vec<u32>,
    /// Matching two-scale weight per stencil edge.
    pub stencil_weight: Vec<f64>,
}

/// The full level stack for one cloud.
#[derive(Debug, Clone)]
pub struct LevelHierarchy {
    pub l0: u8,
    pub depth: u8,
    /// `levels[i]` holds level `l0 + i`; the last entry is the leaf level.
    pub levels: Vec<LevelNodes>,
    /// `pairs[i]` connects `levels[i]` (parents) to `levels[i + 1]`.
    pub pairs: Vec<LevelPair>,
}

impl LevelHierarchy {
    /// Build the hierarchy for sorted, distinct leaf keys at `depth`.
    pub fn build(leaf_keys: &[u64], l0: u8, depth: u8, kernel: &TwoScaleKernel) -> Result<Self> {
        if depth == 0 || depth > MAX_DEPTH || l0 >= depth {
            return Err(Error::Geometry(format!(
                "level range invalid: need l0 {l0} < depth {depth} <= {MAX_DEPTH}"
            )));
        }
        if leaf_keys.is_empty() {
            return Err(Error::Geometry("empty leaf set".into()));
        }
        if !leaf_keys.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::Geometry(
                "leaf keys must be sorted and distinct".into(),
            ));
        }
        let grid = 1u64 << (3 * depth);
        if *leaf_keys.last().unwrap() >= grid {
            return Err(Error::Geometry(format!(
                "leaf key exceeds grid for depth {depth}"
            )));
        }

        let mut levels = Vec::with_capacity((depth - l0 + 1) as usize);
        levels.push(LevelNodes::from_keys(leaf_keys.to_vec()));
        for _ in l0..depth {
            let child = &levels.last().unwrap().keys;
            let mut parent: Vec<u64> = child.iter().map(|k| k >> 3).collect();
            parent.dedup();
            levels.push(LevelNodes::from_keys(parent));
        }
        levels.reverse();

        let pairs = (0..levels.len() - 1)
            .map(|i| {
                let level = l0 as usize + i;
                build_pair(&levels[i], &levels[i + 1], level as u8, kernel)
            })
            .collect();

        Ok(LevelHierarchy {
            l0,
            depth,
            levels,
            pairs,
        })
    }

    /// Number of stored levels, coarsest through leaves.
    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn leaves(&self) -> &LevelNodes {
        self.levels.last().unwrap()
    }
}

fn build_pair(
    parents: &LevelNodes,
    children: &LevelNodes,
    parent_level: u8,
    kernel: &TwoScaleKernel,
) -> LevelPair {
    let np = parents.len();

    // Octree rows: children are Morton-sorted, so each parent's children are
    // one contiguous run and the run's first entry is the Morton-first child.
    let mut oct_start = Vec::with_capacity(np + 1);
    let mut oct_parent = vec![0u32; children.len()];
    let mut child_at = 0usize;
    oct_start.push(0);
    for (pi, &pk) in parents.keys.iter().enumerate() {
        while child_at < children.len() && children.keys[child_at] >> 3 == pk {
            oct_parent[child_at] = pi as u32;
            child_at += 1;
        }
        oct_start.push(child_at);
    }
    debug_assert_eq!(child_at, children.len());

    let elide: Vec<u32> = oct_start[..np].iter().map(|&s| s as u32).collect();
    let mut is_elided = vec![false; children.len()];
    for &e in &elide {
        is_elided[e as usize] = true;
    }
    let select: Vec<u32> = (0..children.len() as u32)
        .filter(|&c| !is_elided[c as usize])
        .collect();

    // Two-scale stencil rows: child key 2n + k for each kernel offset k.
    let child_grid = 1u32 << (parent_level as u32 + 1).min(16);
    let mut stencil_start = Vec::with_capacity(np + 1);
    let mut stencil_child = Vec::new();
    let mut stencil_weight = Vec::new();
    stencil_start.push(0);
    let mut row: Vec<(u32, f64)> = Vec::new();
    for pc in &parents.coords {
        row.clear();
        for (k, w) in kernel.offsets() {
            let cx = 2 * pc[0] as u32 + k[0] as u32;
            let cy = 2 * pc[1] as u32 + k[1] as u32;
            let cz = 2 * pc[2] as u32 + k[2] as u32;
            if cx >= child_grid || cy >= child_grid || cz >= child_grid {
                continue;
            }
            let key = morton_key([cx as u16, cy as u16, cz as u16]);
            if let Some(ci) = children.index_of(key) {
                row.push((ci as u32, w));
            }
        }
        row.sort_unstable_by_key(|&(ci, _)| ci);
        for &(ci, w) in &row {
            stencil_child.push(ci);
            stencil_weight.push(w);
        }
        stencil_start.push(stencil_child.len());
    }

    LevelPair {
        oct_start,
        oct_parent,
        select,
        elide,
        stencil_start,
        stencil_child,
        stencil_weight,
    }
}
