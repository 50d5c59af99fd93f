//! Point cloud containers, Morton ordering, and voxelization.

use crate::color::{convert_in, ColorSpace};
use crate::error::{Error, Result};

/// Maximum supported octree depth; Morton keys fit 3 * 16 = 48 bits.
pub const MAX_DEPTH: u8 = 16;

/// A raw point cloud as read from disk: float positions plus RGB bytes.
#[derive(Debug, Clone, PartialEq)]
pub struct RawCloud {
    pub positions: Vec<[f64; 3]>,
    pub colors: Vec<[u8; 3]>,
}

impl RawCloud {
    pub fn new(positions: Vec<[f64; 3]>, colors: Vec<[u8; 3]>) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::Geometry("empty point cloud".into()));
        }
        if positions.len() != colors.len() {
            return Err(Error::Geometry(format!(
                "{} positions but {} colors",
                positions.len(),
                colors.len()
            )));
        }
        Ok(RawCloud { positions, colors })
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }
}

/// A voxelized cloud: occupied voxel coordinates at a fixed octree depth in
/// strictly increasing Morton order, with one real-valued attribute triple
/// (YUV by default) per voxel.
#[derive(Debug, Clone, PartialEq)]
pub struct VoxelizedCloud {
    pub depth: u8,
    pub coords: Vec<[u16; 3]>,
    pub attributes: Vec<[f64; 3]>,
}

impl VoxelizedCloud {
    pub fn new(depth: u8, coords: Vec<[u16; 3]>, attributes: Vec<[f64; 3]>) -> Result<Self> {
        if depth == 0 || depth > MAX_DEPTH {
            return Err(Error::Geometry(format!(
                "depth {depth} outside supported range 1..={MAX_DEPTH}"
            )));
        }
        if coords.is_empty() {
            return Err(Error::Geometry("empty voxel set".into()));
        }
        if coords.len() != attributes.len() {
            return Err(Error::Geometry(format!(
                "{} voxels but {} attribute rows",
                coords.len(),
                attributes.len()
            )));
        }
        let bound = 1u32 << depth;
        let mut prev = None;
        for &c in &coords {
            if c.iter().any(|&v| (v as u32) >= bound) {
                return Err(Error::Geometry(format!(
                    "voxel {c:?} outside grid of side {bound}"
                )));
            }
            let key = morton_key(c);
            if let Some(p) = prev {
                if key <= p {
                    return Err(Error::Geometry(format!(
                        "voxels not in strictly increasing Morton order near key {key:#x}"
                    )));
                }
            }
            prev = Some(key);
        }
        Ok(VoxelizedCloud {
            depth,
            coords,
            attributes,
        })
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    /// Morton keys of the occupied voxels, strictly increasing.
    pub fn morton_keys(&self) -> Vec<u64> {
        self.coords.iter().map(|&c| morton_key(c)).collect()
    }

    /// One attribute channel as a plain vector.
    pub fn channel(&self, ch: usize) -> Vec<f64> {
        self.attributes.iter().map(|a| a[ch]).collect()
    }
}

/// Interleaved Morton (z-order) key; x occupies the least significant bit of
/// each 3-bit group, then y, then z. Halving all coordinates is `key >> 3`.
pub fn morton_key(c: [u16; 3]) -> u64 {
    let mut key = 0u64;
    for bit in 0..16 {
        key |= ((c[0] as u64 >> bit) & 1) << (3 * bit);
        key |= ((c[1] as u64 >> bit) & 1) << (3 * bit + 1);
        key |= ((c[2] as u64 >> bit) & 1) << (3 * bit + 2);
    }
    key
}

/// FNV-1a fingerprint of a Morton key list. Streams carry it so a decoder
/// can reject geometry other than what the attributes were coded against.
pub fn geometry_fingerprint(keys: &[u64]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for key in keys {
        for b in key.to_le_bytes() {
            h ^= u64::from(b);
            h = h.wrapping_mul(0x100_0000_01b3);
        }
    }
    h
}

/// Inverse of [`morton_key`].
pub fn morton_decode(key: u64) -> [u16; 3] {
    let mut c = [0u16; 3];
    for bit in 0..16 {
        c[0] |= (((key >> (3 * bit)) & 1) as u16) << bit;
        c[1] |= (((key >> (3 * bit + 1)) & 1) as u16) << bit;
        c[2] |= (((key >> (3 * bit + 2)) & 1) as u16) << bit;
    }
    c
}

/// Quantize a raw cloud onto the `2^depth` grid.
///
/// The axis-aligned bounding box is scaled uniformly (aspect ratio preserved)
/// so the longest axis spans the grid, colors are converted via `space`, and
/// points landing in the same voxel are merged by averaging their attributes.
/// Output voxels are Morton sorted.
pub fn voxelize(cloud: &RawCloud, depth: u8, space: ColorSpace) -> Result<VoxelizedCloud> {
    if depth == 0 || depth > MAX_DEPTH {
        return Err(Error::Geometry(format!(
            "depth {depth} outside supported range 1..={MAX_DEPTH}"
        )));
    }
    if cloud.positions.is_empty() {
        return Err(Error::Geometry("empty point cloud".into()));
    }
    for p in &cloud.positions {
        if p.iter().any(|v| !v.is_finite()) {
            return Err(Error::Geometry(format!("non-finite position {p:?}")));
        }
    }

    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for p in &cloud.positions {
        for d in 0..3 {
            lo[d] = lo[d].min(p[d]);
            hi[d] = hi[d].max(p[d]);
        }
    }
    let extent = (0..3).map(|d| hi[d] - lo[d]).fold(0.0f64, f64::max);
    let grid = (1u32 << depth) as f64;

    let mut cells: Vec<(u64, [f64; 3])> = Vec::with_capacity(cloud.len());
    for (p, &rgb) in cloud.positions.iter().zip(&cloud.colors) {
        let mut c = [0u16; 3];
        if extent > 0.0 {
            for d in 0..3 {
                let v = ((p[d] - lo[d]) * grid / extent).floor();
                c[d] = (v.min(grid - 1.0).max(0.0)) as u16;
            }
        }
        cells.push((morton_key(c), convert_in(space, rgb)));
    }
    cells.sort_by_key(|&(key, _)| key);

    let mut coords = Vec::new();
    let mut attributes: Vec<[f64; 3]> = Vec::new();
    let mut i = 0;
    while i < cells.len() {
        let key = cells[i].0;
        let mut sum = [0.0f64; 3];
        let mut n = 0u32;
        while i < cells.len() && cells[i].0 == key {
            for d in 0..3 {
                sum[d] += cells[i].1[d];
            }
            n += 1;
            i += 1;
        }
        coords.push(morton_decode(key));
        attributes.push([sum[0] / n as f64, sum[1] / n as f64, sum[2] / n as f64]);
    }

    VoxelizedCloud::new(depth, coords, attributes)
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Scalar reference: interleave by formatting each coordinate in binary
    /// and merging the digit strings.
    fn morton_oracle(c: [u16; 3]) -> u64 {
        let digits: Vec<String> = c.iter().map(|&v| format!("{v:016b}")).collect();
        let mut out = String::new();
        for i in 0..16 {
            out.push(digits[2].as_bytes()[i] as char);
            out.push(digits[1].as_bytes()[i] as char);
            out.push(digits[0].as_bytes()[i] as char);
        }
        u64::from_str_radix(&out, 2).unwrap()
    }

    #[test]
    fn morton_matches_oracle() {
        for c in [
            [0, 0, 0],
            [1, 0, 0],
            [0, 1, 0],
            [0, 0, 1],
            [3, 5, 7],
            [65535, 0, 1],
            [12345, 54321, 4097],
        ] {
            assert_eq!(morton_key(c), morton_oracle(c), "coords {c:?}");
        }
    }

    #[test]
    fn morton_round_trip() {
        for c in [[0, 0, 0], [1, 2, 3], [65535, 65535, 65535], [40000, 1, 999]] {
            assert_eq!(morton_decode(morton_key(c)), c);
        }
    }

    #[test]
    fn parent_key_is_shifted_child_key() {
        let c = [13u16, 6, 9];
        let parent = [6u16, 3, 4];
        assert_eq!(morton_key(c) >> 3, morton_key(parent));
    }

    fn raw(points: &[([f64; 3], [u8; 3])]) -> RawCloud {
        RawCloud::new(
            points.iter().map(|p| p.0).collect(),
            points.iter().map(|p| p.1).collect(),
        )
        .unwrap()
    }

    #[test]
    fn single_point_lands_at_origin() {
        let cloud = raw(&[([17.0, -4.0, 2.5], [10, 20, 30])]);
        let vox = voxelize(&cloud, 10, ColorSpace::Identity).unwrap();
        assert_eq!(vox.coords, vec![[0, 0, 0]]);
        assert_eq!(vox.attributes, vec![[10.0, 20.0, 30.0]]);
    }

    #[test]
    fn duplicate_voxels_average() {
        let cloud = raw(&[
            ([0.0, 0.0, 0.0], [10, 10, 10]),
            ([0.01, 0.0, 0.0], [20, 20, 20]),
            ([100.0, 100.0, 100.0], [30, 30, 30]),
        ]);
        let vox = voxelize(&cloud, 4, ColorSpace::Identity).unwrap();
        assert_eq!(vox.len(), 2);
        assert_eq!(vox.attributes[0], [15.0, 15.0, 15.0]);
    }

    #[test]
    fn bounding_box_corner_stays_in_grid() {
        let cloud = raw(&[
            ([0.0, 0.0, 0.0], [0, 0, 0]),
            ([1.0, 1.0, 1.0], [255, 255, 255]),
        ]);
        let vox = voxelize(&cloud, 6, ColorSpace::Identity).unwrap();
        assert_eq!(vox.coords.last().unwrap(), &[63, 63, 63]);
    }

    #[test]
    fn aspect_ratio_preserved() {
        // Longest axis spans the grid (clamped at the top edge); an axis of
        // half that length reaches only the grid midpoint.
        let cloud = raw(&[
            ([0.0, 0.0, 0.0], [0, 0, 0]),
            ([8.0, 4.0, 0.0], [0, 0, 0]),
        ]);
        let vox = voxelize(&cloud, 4, ColorSpace::Identity).unwrap();
        assert_eq!(vox.coords[1], [15, 8, 0]);
    }

    #[test]
    fn output_is_morton_sorted_regardless_of_input_order() {
        let pts: Vec<([f64; 3], [u8; 3])> = (0..40)
            .map(|i| {
                let t = (i * 37 % 41) as f64;
                ([t, (i * 13 % 17) as f64, (i * 7 % 11) as f64], [i as u8; 3])
            })
            .collect();
        let vox = voxelize(&raw(&pts), 5, ColorSpace::Identity).unwrap();
        let keys = vox.morton_keys();
        assert!(keys.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn rejects_bad_depth() {
        let cloud = raw(&[([0.0; 3], [0; 3])]);
        assert!(voxelize(&cloud, 0, ColorSpace::Bt601).is_err());
        assert!(voxelize(&cloud, 17, ColorSpace::Bt601).is_err());
    }
}
