//! Per-level Gram matrices in compact 27-column form.
//!
//! The inner product between two basis functions is the sum of their
//! products over the point set. Leaf functions are interpolatory (value 1 at
//! their own point, 0 at every other), so the leaf Gram is the identity, and
//! each coarser Gram follows from the two-scale relation restricted to
//! occupied nodes. Same-level functions more than one cell apart never
//! overlap for degrees 1 and 2, so a row never needs more than the 27
//! neighbor offsets in {-1, 0, 1}^3.

use crate::hierarchy::{LevelNodes, LevelPair};
use crate::solvers::LinearOperator;
use crate::transform::stencil::TwoScaleKernel;

/// Neighbor slot marking an unoccupied or out-of-grid node.
pub const NEIGHBOR_NONE: u32 = u32::MAX;

/// Slot of the zero offset.
pub const CENTER: usize = 13;

/// Slot for an offset in {-1, 0, 1}^3.
pub fn offset_index(d: [i32; 3]) -> usize {
    debug_assert!(d.iter().all(|&c| (-1..=1).contains(&c)));
    ((d[0] + 1) + 3 * (d[1] + 1) + 9 * (d[2] + 1)) as usize
}

/// Offset stored at a slot.
pub fn index_offset(j: usize) -> [i32; 3] {
    [(j % 3) as i32 - 1, ((j / 3) % 3) as i32 - 1, (j / 9) as i32 - 1]
}

/// For each node, the level index of each of its 27 neighbors.
pub fn neighbor_table(nodes: &LevelNodes, level: u8) -> Vec<[u32; 27]> {
    let grid = 1i64 << level;
    nodes
        .coords
        .iter()
        .map(|&c| {
            let mut row = [NEIGHBOR_NONE; 27];
            for (j, slot) in row.iter_mut().enumerate() {
                let d = index_offset(j);
                let x = c[0] as i64 + d[0] as i64;
                let y = c[1] as i64 + d[1] as i64;
                let z = c[2] as i64 + d[2] as i64;
                if x < 0 || y < 0 || z < 0 || x >= grid || y >= grid || z >= grid {
                    continue;
                }
                let key = crate::cloud::morton_key([x as u16, y as u16, z as u16]);
                if let Some(i) = nodes.index_of(key) {
                    *slot = i as u32;
                }
            }
            row
        })
        .collect()
}

/// Symmetric sparse matrix with rows clipped to the 27-neighborhood.
#[derive(Debug, Clone)]
pub struct CompactGram {
    pub entries: Vec<[f64; 27]>,
    pub neighbors: Vec<[u32; 27]>,
}

impl CompactGram {
    /// Identity rows over the given neighbor table (the leaf-level Gram).
    pub fn identity(neighbors: Vec<[u32; 27]>) -> CompactGram {
        let mut entries = vec![[0.0; 27]; neighbors.len()];
        for row in &mut entries {
            row[CENTER] = 1.0;
        }
        CompactGram { entries, neighbors }
    }

    /// Gram of the next coarser level from the finer one.
    pub fn coarsen(
        child_gram: &CompactGram,
        child_nodes: &LevelNodes,
        parent_nodes: &LevelNodes,
        parent_neighbors: Vec<[u32; 27]>,
        pair: &LevelPair,
        kernel: &TwoScaleKernel,
    ) -> CompactGram {
        let mask = kernel.mask_1d();
        let mut entries = vec![[0.0; 27]; parent_nodes.len()];
        for pi in 0..parent_nodes.len() {
            let pc = parent_nodes.coords[pi];
            for e in pair.stencil_start[pi]..pair.stencil_start[pi + 1] {
                let ci = pair.stencil_child[e] as usize;
                let w = pair.stencil_weight[e];
                for j in 0..27 {
                    let g = child_gram.entries[ci][j];
                    if g == 0.0 {
                        continue;
                    }
                    let cj = child_gram.neighbors[ci][j];
                    if cj == NEIGHBOR_NONE {
                        continue;
                    }
                    let cc = child_nodes.coords[cj as usize];
                    // Enumerate coarse nodes whose stencil reaches the
                    // neighbor child: per axis at most two offsets.
                    let mut cand = [[(0i32, 0.0f64); 2]; 3];
                    let mut cand_len = [0usize; 3];
                    for a in 0..3 {
                        for (k, &wk) in mask.iter().enumerate() {
                            let c = cc[a] as i32 - k as i32;
                            if c < 0 || c % 2 != 0 {
                                continue;
                            }
                            let d = c / 2 - pc[a] as i32;
                            if (-1..=1).contains(&d) {
                                cand[a][cand_len[a]] = (d, wk);
                                cand_len[a] += 1;
                            }
                        }
                    }
                    for &(dx, wx) in &cand[0][..cand_len[0]] {
                        for &(dy, wy) in &cand[1][..cand_len[1]] {
                            for &(dz, wz) in &cand[2][..cand_len[2]] {
                                let dj = offset_index([dx, dy, dz]);
                                if parent_neighbors[pi][dj] == NEIGHBOR_NONE {
                                    continue;
                                }
                                entries[pi][dj] += w * wx * wy * wz * g;
                            }
                        }
                    }
                }
            }
        }
        CompactGram {
            entries,
            neighbors: parent_neighbors,
        }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Main diagonal; for degree 1 this is the whole matrix.
    pub fn diagonal(&self) -> Vec<f64> {
        self.entries.iter().map(|row| row[CENTER]).collect()
    }
}

impl LinearOperator for CompactGram {
    fn dim(&self) -> usize {
        self.entries.len()
    }

    fn apply(&self, input: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            let row = &self.entries[i];
            let nbr = &self.neighbors[i];
            let mut acc = 0.0;
            for j in 0..27 {
                let v = row[j];
                if v != 0.0 {
                    acc += v * input[nbr[j] as usize];
                }
            }
            *o = acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cloud::morton_key;
    use crate::hierarchy::LevelHierarchy;

    fn keys(coords: &[[u16; 3]]) -> Vec<u64> {
        let mut k: Vec<u64> = coords.iter().map(|&c| morton_key(c)).collect();
        k.sort_unstable();
        k.dedup();
        k
    }

    fn scattered(depth: u8, n: usize) -> Vec<u64> {
        let grid = 1u16 << depth;
        let coords: Vec<[u16; 3]> = (0..n)
            .map(|i| {
                let x = (i * 37 + 11) % grid as usize;
                let y = (i * 101 + 3) % grid as usize;
                let z = (i * 53 + 29) % grid as usize;
                [x as u16, y as u16, z as u16]
            })
            .collect();
        keys(&coords)
    }

    /// Grams for every level, leaves up.
    fn build_all(h: &LevelHierarchy, kernel: &TwoScaleKernel) -> Vec<CompactGram> {
        let leaf = h.num_levels() - 1;
        let mut grams = vec![CompactGram::identity(neighbor_table(&h.levels[leaf], h.depth))];
        for i in (0..leaf).rev() {
            let level = h.l0 + i as u8;
            let parent_nb = neighbor_table(&h.levels[i], level);
            let g = CompactGram::coarsen(
                &grams[0],
                &h.levels[i + 1],
                &h.levels[i],
                parent_nb,
                &h.pairs[i],
                kernel,
            );
            grams.insert(0, g);
        }
        grams
    }

    #[test]
    fn offset_index_round_trips() {
        for j in 0..27 {
            assert_eq!(offset_index(index_offset(j)), j);
        }
        assert_eq!(offset_index([0, 0, 0]), CENTER);
    }

    #[test]
    fn neighbor_table_matches_brute_force() {
        let leaves = scattered(3, 30);
        let h = LevelHierarchy::build(&leaves, 2, 3, &TwoScaleKernel::new(1).unwrap()).unwrap();
        let nodes = h.leaves();
        let table = neighbor_table(nodes, 3);
        for (i, &c) in nodes.coords.iter().enumerate() {
            for j in 0..27 {
                let d = index_offset(j);
                let want = nodes.coords.iter().position(|&o| {
                    (0..3).all(|a| o[a] as i32 == c[a] as i32 + d[a])
                });
                let got = table[i][j];
                match want {
                    Some(w) => assert_eq!(got, w as u32),
                    None => assert_eq!(got, NEIGHBOR_NONE),
                }
            }
        }
    }

    #[test]
    fn box_grams_count_subtree_leaves() {
        let kernel = TwoScaleKernel::new(1).unwrap();
        let leaves = scattered(4, 60);
        let h = LevelHierarchy::build(&leaves, 1, 4, &kernel).unwrap();
        let grams = build_all(&h, &kernel);
        for (i, gram) in grams.iter().enumerate() {
            let level = h.l0 as usize + i;
            let shift = 3 * (h.depth as usize - level);
            for (n, row) in gram.entries.iter().enumerate() {
                let key = h.levels[i].keys[n];
                let count = leaves.iter().filter(|&&lk| lk >> shift == key).count();
                assert_eq!(row[CENTER], count as f64, "level {level} node {n}");
                for (j, &v) in row.iter().enumerate() {
                    if j != CENTER {
                        assert_eq!(v, 0.0, "box gram must stay diagonal");
                    }
                }
            }
        }
    }

    #[test]
    fn hat_gram_rows_are_symmetric() {
        let kernel = TwoScaleKernel::new(2).unwrap();
        let leaves = scattered(4, 80);
        let h = LevelHierarchy::build(&leaves, 1, 4, &kernel).unwrap();
        for gram in build_all(&h, &kernel) {
            for (n, row) in gram.entries.iter().enumerate() {
                for j in 0..27 {
                    let m = gram.neighbors[n][j];
                    if m == NEIGHBOR_NONE {
                        assert_eq!(row[j], 0.0);
                        continue;
                    }
                    let d = index_offset(j);
                    let back = offset_index([-d[0], -d[1], -d[2]]);
                    let mirror = gram.entries[m as usize][back];
                    assert!(
                        (row[j] - mirror).abs() < 1e-12,
                        "asymmetry at node {n} slot {j}: {} vs {mirror}",
                        row[j]
                    );
                }
            }
        }
    }

    #[test]
    fn hat_gram_one_level_up_matches_point_evaluation() {
        // One step above the leaves the recursion agrees with evaluating
        // the hats at the far-corner point of every occupied leaf.
        let kernel = TwoScaleKernel::new(2).unwrap();
        let leaves = scattered(3, 25);
        let h = LevelHierarchy::build(&leaves, 2, 3, &kernel).unwrap();
        let grams = build_all(&h, &kernel);
        let coarse = &grams[0];
        let nodes = &h.levels[0];
        let eval = |n: usize, leaf: [u16; 3]| -> f64 {
            let t: Vec<f64> = (0..3)
                .map(|a| (leaf[a] as f64 + 1.0) / 2.0 - nodes.coords[n][a] as f64)
                .collect();
            kernel.basis_3d([t[0], t[1], t[2]])
        };
        for n in 0..nodes.len() {
            for j in 0..27 {
                let m = coarse.neighbors[n][j];
                if m == NEIGHBOR_NONE {
                    continue;
                }
                let direct: f64 = h
                    .leaves()
                    .coords
                    .iter()
                    .map(|&leaf| eval(n, leaf) * eval(m as usize, leaf))
                    .sum();
                assert!(
                    (coarse.entries[n][j] - direct).abs() < 1e-12,
                    "node {n} slot {j}: {} vs {direct}",
                    coarse.entries[n][j]
                );
            }
        }
    }

    #[test]
    fn gram_apply_matches_dense_product() {
        let kernel = TwoScaleKernel::new(2).unwrap();
        let leaves = scattered(3, 40);
        let h = LevelHierarchy::build(&leaves, 1, 3, &kernel).unwrap();
        let grams = build_all(&h, &kernel);
        let g = &grams[0];
        let n = g.len();
        let x: Vec<f64> = (0..n).map(|i| ((i * 7) as f64 * 0.3).sin()).collect();
        let mut y = vec![0.0; n];
        g.apply(&x, &mut y);
        for i in 0..n {
            let mut want = 0.0;
            for j in 0..27 {
                let m = g.neighbors[i][j];
                if m != NEIGHBOR_NONE {
                    want += g.entries[i][j] * x[m as usize];
                }
            }
            assert!((y[i] - want).abs() < 1e-12);
        }
    }
}
