//! Synthetic feature maps with a known number of planted objects.
//!
//! Every object is a `size x size` block of cells; cell `(i, j)` of an object
//! carries the basis vector `e_{i*size+j}`, so an object only matches itself
//! when exactly aligned. Background cells carry random nonnegative mixtures
//! of the remaining channels and are therefore orthogonal to every object
//! cell. Optional Gaussian noise is added to all channels.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::PixelBox;
use crate::tensorio::FeatureMap;

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    /// Object side in cells.
    pub object_size: usize,
    pub channels: usize,
    pub patch_size: usize,
    /// Standard deviation of additive noise on every value.
    pub noise: f32,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            object_size: 3,
            channels: 16,
            patch_size: 14,
            noise: 0.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedScene {
    pub map: FeatureMap,
    /// Tight pixel box of every planted object, in placement order.
    pub objects: Vec<PixelBox>,
}

impl PlantedScene {
    pub fn count(&self) -> usize {
        self.objects.len()
    }
}

/// Plants `count` objects into randomly chosen slots of a square layout
/// that always keeps some slots empty. Objects are separated by at least
/// one background cell.
pub fn planted_scene(count: usize, spec: &SceneSpec) -> Result<PlantedScene> {
    let s = spec.object_size;
    if s == 0 {
        return Err(Error::Argument("object size must be positive".into()));
    }
    if spec.channels <= s * s {
        return Err(Error::Argument(format!(
            "{} channels leave no room for background beside {} object channels",
            spec.channels,
            s * s
        )));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::Argument(format!("invalid noise level {}", spec.noise)));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let slots_per_side = (count as f64).sqrt().ceil() as usize + 1;
    let pitch = s + 1;
    let side = slots_per_side * pitch + 1;
    let d = spec.channels;
    let bg_channels = s * s..d;

    let mut data = vec![0.0f32; side * side * d];
    for cell in data.chunks_exact_mut(d) {
        for ch in bg_channels.clone() {
            cell[ch] = rng.random_range(0.0..1.0);
        }
    }

    let mut slots: Vec<usize> = (0..slots_per_side * slots_per_side).collect();
    slots.shuffle(&mut rng);
    let p = spec.patch_size as f64;
    let mut objects = Vec::with_capacity(count);
    for &slot in &slots[..count] {
        let (r0, c0) = (1 + (slot / slots_per_side) * pitch, 1 + (slot % slots_per_side) * pitch);
        for i in 0..s {
            for j in 0..s {
                let at = ((r0 + i) * side + c0 + j) * d;
                let cell = &mut data[at..at + d];
                cell.fill(0.0);
                cell[i * s + j] = 1.0;
            }
        }
        objects.push(PixelBox::new(
            c0 as f64 * p,
            r0 as f64 * p,
            (c0 + s) as f64 * p,
            (r0 + s) as f64 * p,
        )?);
    }

    if spec.noise > 0.0 {
        let normal = Normal::new(0.0f32, spec.noise)
            .map_err(|e| Error::Argument(format!("noise distribution: {e}")))?;
        for v in data.iter_mut() {
            *v += normal.sample(&mut rng);
        }
    }

    let map = FeatureMap::new(data, side, side, d, spec.patch_size)?;
    Ok(PlantedScene { map, objects })
}
