//! Non-overlapping subvolume grids.
//!
//! A volume of shape `(H, W, C)` is cut into `n_h * n_w * n_d` blocks of shape
//! `(h, w, d)`. Block `(i, j, k)` starts at voxel `(i*h, j*w, k*d)` and has
//! flat index `p = (i * n_w + j) * n_d + k`, so `k` (the depth axis) varies
//! fastest. Mask plan files refer to blocks by this flat index.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{linear_index, voxel_count, IntensityUnit, Shape3, Volume3D};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridPlan {
    pub volume_shape: Shape3,
    pub sub_shape: Shape3,
    pub grid: Shape3,
}

impl GridPlan {
    /// Total number of subvolumes `P`.
    pub fn count(&self) -> usize {
        voxel_count(self.grid)
    }

    pub fn sub_len(&self) -> usize {
        voxel_count(self.sub_shape)
    }

    pub fn coords(&self, p: usize) -> [usize; 3] {
        let [_, nw, nd] = self.grid;
        [p / (nw * nd), (p / nd) % nw, p % nd]
    }

    pub fn flat(&self, [i, j, k]: [usize; 3]) -> usize {
        (i * self.grid[1] + j) * self.grid[2] + k
    }

    pub fn origin(&self, p: usize) -> [usize; 3] {
        let c = self.coords(p);
        [c[0] * self.sub_shape[0], c[1] * self.sub_shape[1], c[2] * self.sub_shape[2]]
    }

    /// Recheck the divisibility identities (used on plans read from disk).
    pub fn validate(&self) -> Result<()> {
        let again = plan_grid(self.volume_shape, self.sub_shape)?;
        if again != *self {
            return Err(Error::Shape(format!("grid {:?} inconsistent with shapes", self.grid)));
        }
        Ok(())
    }

    fn check_volume(&self, v: &Volume3D) -> Result<()> {
        if v.shape() != self.volume_shape {
            return Err(Error::Shape(format!(
                "volume shape {:?} does not match grid volume shape {:?}",
                v.shape(),
                self.volume_shape
            )));
        }
        Ok(())
    }
}

/// A copied block of voxels, x fastest within the block.
#[derive(Debug, Clone, PartialEq)]
pub struct Subvolume {
    pub origin: [usize; 3],
    pub shape: Shape3,
    pub voxels: Vec<f32>,
}

pub fn plan_grid(shape: Shape3, sub: Shape3) -> Result<GridPlan> {
    if shape.iter().chain(sub.iter()).any(|&d| d == 0) {
        return Err(Error::InvalidParameter(format!(
            "shape {shape:?} and subvolume {sub:?} must be positive"
        )));
    }
    let mut grid = [0; 3];
    for axis in 0..3 {
        if !shape[axis].is_multiple_of(sub[axis]) {
            let lower = shape[axis] / sub[axis] * sub[axis];
            return Err(Error::Divisibility {
                axis: axis + 1,
                size: shape[axis],
                sub: sub[axis],
                lower,
                upper: lower + sub[axis],
            });
        }
        grid[axis] = shape[axis] / sub[axis];
    }
    Ok(GridPlan {
        volume_shape: shape,
        sub_shape: sub,
        grid,
    })
}

pub fn extract(v: &Volume3D, g: &GridPlan, p: usize) -> Result<Subvolume> {
    g.check_volume(v)?;
    if p >= g.count() {
        return Err(Error::Index { index: p, count: g.count() });
    }
    Ok(extract_unchecked(v.voxels(), g, p))
}

pub(crate) fn extract_unchecked(voxels: &[f32], g: &GridPlan, p: usize) -> Subvolume {
    let [h, w, d] = g.sub_shape;
    let [ox, oy, oz] = g.origin(p);
    let mut out = Vec::with_capacity(h * w * d);
    for z in oz..oz + d {
        for y in oy..oy + w {
            let start = linear_index(g.volume_shape, ox, y, z);
            out.extend_from_slice(&voxels[start..start + h]);
        }
    }
    Subvolume {
        origin: [ox, oy, oz],
        shape: g.sub_shape,
        voxels: out,
    }
}

/// All `P` blocks in flat-index order.
pub fn extract_all(v: &Volume3D, g: &GridPlan) -> Result<Vec<Subvolume>> {
    g.check_volume(v)?;
    Ok((0..g.count())
        .into_par_iter()
        .map(|p| extract_unchecked(v.voxels(), g, p))
        .collect())
}

/// Write block `p`'s voxels back into a flat voxel buffer.
pub(crate) fn scatter(voxels: &mut [f32], g: &GridPlan, p: usize, block: &[f32]) {
    let [h, w, d] = g.sub_shape;
    let [ox, oy, oz] = g.origin(p);
    let mut src = 0;
    for z in oz..oz + d {
        for y in oy..oy + w {
            let start = linear_index(g.volume_shape, ox, y, z);
            voxels[start..start + h].copy_from_slice(&block[src..src + h]);
            src += h;
        }
    }
}

/// Inverse of [`extract_all`]. Blocks are positional: block `p` must carry
/// the origin of grid cell `p`.
pub fn reassemble(g: &GridPlan, blocks: &[Subvolume], unit: IntensityUnit) -> Result<Volume3D> {
    if blocks.len() != g.count() {
        return Err(Error::Shape(format!("{} blocks for P = {}", blocks.len(), g.count())));
    }
    let mut voxels = vec![0f32; voxel_count(g.volume_shape)];
    for (p, b) in blocks.iter().enumerate() {
        if b.shape != g.sub_shape || b.voxels.len() != g.sub_len() {
            return Err(Error::Shape(format!(
                "block {p} has shape {:?} with {} voxels, expected {:?}",
                b.shape,
                b.voxels.len(),
                g.sub_shape
            )));
        }
        if b.origin != g.origin(p) {
            return Err(Error::Shape(format!(
                "block {p} has origin {:?}, grid cell {p} starts at {:?}",
                b.origin,
                g.origin(p)
            )));
        }
        scatter(&mut voxels, g, p, &b.voxels);
    }
    Volume3D::from_voxels(g.volume_shape, voxels, unit)
}

/// Pad the high end of each axis with `fill` up to the next multiple of `sub`.
pub fn pad_to_divisible(v: &Volume3D, sub: Shape3, fill: f32) -> Result<Volume3D> {
    if sub.contains(&0) {
        return Err(Error::InvalidParameter(format!("subvolume {sub:?} must be positive")));
    }
    let old = v.shape();
    let new: Shape3 = std::array::from_fn(|a| old[a].div_ceil(sub[a]) * sub[a]);
    if new == old {
        return Ok(v.clone());
    }
    let mut voxels = vec![fill; voxel_count(new)];
    for z in 0..old[2] {
        for y in 0..old[1] {
            let src = linear_index(old, 0, y, z);
            let dst = linear_index(new, 0, y, z);
            voxels[dst..dst + old[0]].copy_from_slice(&v.voxels()[src..src + old[0]]);
        }
    }
    Volume3D::new(new, voxels, v.spacing(), *v.affine(), v.unit())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn indexed(shape: Shape3) -> Volume3D {
        let v = (0..voxel_count(shape)).map(|i| i as f32).collect();
        Volume3D::from_voxels(shape, v, IntensityUnit::RawHU).unwrap()
    }

    #[test]
    fn crop_96_with_16_cubes() {
        let g = plan_grid([96, 96, 96], [16, 16, 16]).unwrap();
        assert_eq!(g.grid, [6, 6, 6]);
        assert_eq!(g.count(), 216);
    }

    #[test]
    fn single_block() {
        let g = plan_grid([16, 16, 16], [16, 16, 16]).unwrap();
        assert_eq!(g.count(), 1);
        let v = indexed([16, 16, 16]);
        let back = reassemble(&g, &extract_all(&v, &g).unwrap(), IntensityUnit::RawHU).unwrap();
        assert_eq!(back.voxels(), v.voxels());
    }

    #[test]
    fn non_divisible_reports_neighbors() {
        match plan_grid([96, 96, 100], [16, 16, 16]) {
            Err(Error::Divisibility { axis, lower, upper, .. }) => {
                assert_eq!((axis, lower, upper), (3, 96, 112));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn first_block_at_origin_and_depth_fastest() {
        let g = plan_grid([8, 8, 8], [4, 4, 4]).unwrap();
        let v = indexed([8, 8, 8]);
        assert_eq!(extract(&v, &g, 0).unwrap().origin, [0, 0, 0]);
        assert_eq!(g.origin(1), [0, 0, 4]);
        assert_eq!(g.origin(2), [0, 4, 0]);
        assert_eq!(g.origin(4), [4, 0, 0]);
        for p in 0..g.count() {
            assert_eq!(g.flat(g.coords(p)), p);
        }
    }

    #[test]
    fn extract_matches_brute_force_gather() {
        let shape = [12, 6, 9];
        let g = plan_grid(shape, [4, 3, 3]).unwrap();
        let v = indexed(shape);
        for p in 0..g.count() {
            let b = extract(&v, &g, p).unwrap();
            let [i, j, k] = g.coords(p);
            let mut expected = Vec::new();
            for z in 0..3 {
                for y in 0..3 {
                    for x in 0..4 {
                        let (gx, gy, gz) = (i * 4 + x, j * 3 + y, k * 3 + z);
                        expected.push((gx + 12 * (gy + 6 * gz)) as f32);
                    }
                }
            }
            assert_eq!(b.voxels, expected, "block {p}");
        }
    }

    #[test]
    fn out_of_range_index() {
        let g = plan_grid([8, 8, 8], [4, 4, 4]).unwrap();
        let v = indexed([8, 8, 8]);
        assert!(matches!(extract(&v, &g, 8), Err(Error::Index { index: 8, count: 8 })));
    }

    #[test]
    fn permuted_blocks_rejected() {
        let g = plan_grid([8, 8, 8], [4, 4, 4]).unwrap();
        let v = indexed([8, 8, 8]);
        let mut blocks = extract_all(&v, &g).unwrap();
        blocks.swap(0, 3);
        assert!(matches!(reassemble(&g, &blocks, IntensityUnit::RawHU), Err(Error::Shape(_))));
        blocks.swap(0, 3);
        blocks.pop();
        assert!(matches!(reassemble(&g, &blocks, IntensityUnit::RawHU), Err(Error::Shape(_))));
    }

    #[test]
    fn blocks_tile_exactly_once() {
        let shape = [6, 4, 10];
        let g = plan_grid(shape, [3, 2, 5]).unwrap();
        let mut hits = vec![0u32; voxel_count(shape)];
        for p in 0..g.count() {
            let [ox, oy, oz] = g.origin(p);
            for z in oz..oz + 5 {
                for y in oy..oy + 2 {
                    for x in ox..ox + 3 {
                        hits[linear_index(shape, x, y, z)] += 1;
                    }
                }
            }
        }
        assert!(hits.iter().all(|&h| h == 1));
    }

    #[test]
    fn pad_to_divisible_fills_high_end() {
        let v = indexed([3, 2, 1]);
        let p = pad_to_divisible(&v, [2, 2, 2], -1.0).unwrap();
        assert_eq!(p.shape(), [4, 2, 2]);
        assert_eq!(p.get(2, 1, 0), 5.0);
        assert_eq!(p.get(3, 0, 0), -1.0);
        assert_eq!(p.get(0, 0, 1), -1.0);
        assert!(plan_grid(p.shape(), [2, 2, 2]).is_ok());
    }

    proptest! {
        #[test]
        fn round_trip_identity(
            sub in prop::array::uniform3(1usize..6),
            n in prop::array::uniform3(1usize..5),
            seed in any::<u64>(),
        ) {
            let shape = [sub[0] * n[0], sub[1] * n[1], sub[2] * n[2]];
            let mut rng = crate::rng::SeededRng::new(seed);
            let vox = (0..voxel_count(shape)).map(|_| rng.unit_f64() as f32).collect();
            let v = Volume3D::from_voxels(shape, vox, IntensityUnit::Normalized).unwrap();
            let g = plan_grid(shape, sub).unwrap();
            let back = reassemble(&g, &extract_all(&v, &g).unwrap(), IntensityUnit::Normalized).unwrap();
            prop_assert_eq!(back.voxels(), v.voxels());
        }
    }
}
