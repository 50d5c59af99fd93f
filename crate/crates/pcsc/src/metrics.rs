//! Reconstruction quality metrics.

use crate::cloud::VoxelizedCloud;
use crate::error::{Error, Result};

/// Per-channel and combined PSNR against a peak of 255.
#[derive(Debug, Clone, Copy)]
pub struct QualityReport {
    /// PSNR per attribute channel, in dB.
    pub psnr: [f64; 3],
    /// PSNR of the mean of the three channel MSEs, in dB.
    pub psnr_combined: f64,
}

fn psnr_from_mse(mse: f64) -> f64 {
    if mse <= 0.0 {
        f64::INFINITY
    } else {
        10.0 * (255.0f64 * 255.0 / mse).log10()
    }
}

/// Compare two clouds over identical voxel sets.
pub fn quality(reference: &VoxelizedCloud, degraded: &VoxelizedCloud) -> Result<QualityReport> {
    if reference.depth != degraded.depth || reference.coords.len() != degraded.coords.len() {
        let key = first_mismatch(reference, degraded);
        return Err(Error::CoordMismatch { key });
    }
    for (a, b) in reference.coords.iter().zip(&degraded.coords) {
        if a != b {
            // Both key lists are sorted, so the smaller key at the first
            // differing slot is the first key the two sets disagree on.
            let ka = crate::cloud::morton_key(*a);
            let kb = crate::cloud::morton_key(*b);
            return Err(Error::CoordMismatch { key: ka.min(kb) });
        }
    }
    let n = reference.coords.len() as f64;
    let mut mse = [0.0f64; 3];
    for (a, b) in reference.attributes.iter().zip(&degraded.attributes) {
        for ch in 0..3 {
            let d = a[ch] - b[ch];
            mse[ch] += d * d;
        }
    }
    for m in &mut mse {
        *m /= n;
    }
    Ok(QualityReport {
        psnr: [
            psnr_from_mse(mse[0]),
            psnr_from_mse(mse[1]),
            psnr_from_mse(mse[2]),
        ],
        psnr_combined: psnr_from_mse((mse[0] + mse[1] + mse[2]) / 3.0),
    })
}

fn first_mismatch(a: &VoxelizedCloud, b: &VoxelizedCloud) -> u64 {
    let ka = a.morton_keys();
    let kb = b.morton_keys();
    for i in 0..ka.len().min(kb.len()) {
        if ka[i] != kb[i] {
            return ka[i].min(kb[i]);
        }
    }
    // One set is a prefix of the other; report the first extra key.
    if ka.len() > kb.len() {
        ka[kb.len()]
    } else if kb.len() > ka.len() {
        kb[ka.len()]
    } else {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cloud(coords: Vec<[u16; 3]>, attributes: Vec<[f64; 3]>) -> VoxelizedCloud {
        VoxelizedCloud::new(3, coords, attributes).unwrap()
    }

    #[test]
    fn identical_clouds_have_infinite_psnr() {
        let c = cloud(
            vec![[0, 0, 0], [1, 2, 3]],
            vec![[10.0, 20.0, 30.0], [40.0, 50.0, 60.0]],
        );
        let q = quality(&c, &c).unwrap();
        assert!(q.psnr.iter().all(|p| p.is_infinite()));
        assert!(q.psnr_combined.is_infinite());
    }

    #[test]
    fn uniform_error_matches_closed_form() {
        let a = cloud(vec![[0, 0, 0], [1, 1, 1]], vec![[100.0; 3], [100.0; 3]]);
        let b = cloud(vec![[0, 0, 0], [1, 1, 1]], vec![[105.0; 3], [105.0; 3]]);
        let q = quality(&a, &b).unwrap();
        let expected = 10.0 * (255.0f64 * 255.0 / 25.0).log10();
        for p in q.psnr {
            assert!((p - expected).abs() < 1e-12);
        }
        assert!((q.psnr_combined - expected).abs() < 1e-12);
    }

    #[test]
    fn combined_uses_mean_of_channel_mses() {
        let a = cloud(vec![[0, 0, 0]], vec![[0.0, 0.0, 0.0]]);
        let b = cloud(vec![[0, 0, 0]], vec![[3.0, 0.0, 0.0]]);
        let q = quality(&a, &b).unwrap();
        let expected = 10.0 * (255.0f64 * 255.0 / 3.0).log10();
        assert!((q.psnr_combined - expected).abs() < 1e-12);
        assert!(q.psnr[1].is_infinite());
    }

    #[test]
    fn differing_voxels_name_the_first_key() {
        let a = cloud(vec![[0, 0, 0], [1, 1, 1]], vec![[0.0; 3], [0.0; 3]]);
        let b = cloud(vec![[0, 0, 0], [1, 1, 0]], vec![[0.0; 3], [0.0; 3]]);
        let e = quality(&a, &b).unwrap_err();
        match e {
            Error::CoordMismatch { key } => {
                assert_eq!(key, crate::cloud::morton_key([1, 1, 0]));
            }
            other => panic!("unexpected error {other}"),
        }
    }
}
