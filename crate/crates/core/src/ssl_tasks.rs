//! Image-level pretext tasks: rotation prediction and 2×2 jigsaw.

use alloc::format;
use alloc::vec::Vec;

use crate::rng::CounterRng;
use crate::tensor::Tensor3;
use crate::{Error, Real, Result};

pub const ROTATION_CLASSES: usize = 4;
pub const JIGSAW_CLASSES: usize = 24;

/// Square crop placement inside an image.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CropWindow {
    pub top: usize,
    pub left: usize,
    pub size: usize,
}

impl CropWindow {
    /// Uniformly placed `size × size` window inside an `h × w` image.
    pub fn random(rng: &mut CounterRng, h: usize, w: usize, size: usize) -> Result<Self> {
        if size == 0 || size > h || size > w {
            return Err(Error::contract(format!("crop size {size} does not fit {h}x{w}")));
        }
        let top = rng.below(h - size + 1);
        let left = rng.below(w - size + 1);
        Ok(Self { top, left, size })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RotationSample<F> {
    pub image: Tensor3<F>,
    /// Index into {0°, 90°, 180°, 270°}, counter-clockwise.
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JigsawSample<F> {
    /// Tiles in presentation order; `tiles[k]` is original tile `perm[k]`
    /// where tiles are numbered in reading order (TL, TR, BL, BR).
    pub tiles: [Tensor3<F>; 4],
    pub label: usize,
}

/// Rotates a square tensor counter-clockwise by 90° once: the pixel at
/// column `x`, row `y` moves to column `y`, row `n - 1 - x`.
fn rotate90_ccw<F: Copy + Default>(t: &Tensor3<F>) -> Tensor3<F> {
    let n = t.h;
    let mut out = Tensor3::zeros(t.c, n, n);
    for c in 0..t.c {
        for y in 0..n {
            for x in 0..n {
                *out.at_mut(c, n - 1 - x, y) = t.at(c, y, x);
            }
        }
    }
    out
}

/// Crops `window` out of `image` and rotates it by `90° · angle_index`
/// counter-clockwise.
pub fn rotate_and_label<F: Copy + Default>(
    image: &Tensor3<F>,
    angle_index: usize,
    window: CropWindow,
) -> Result<RotationSample<F>> {
    if angle_index >= ROTATION_CLASSES {
        return Err(Error::contract(format!("rotation index {angle_index} not in 0..4")));
    }
    let mut out = image.crop(window.top, window.left, window.size, window.size)?;
    for _ in 0..angle_index {
        out = rotate90_ccw(&out);
    }
    Ok(RotationSample { image: out, label: angle_index })
}

/// All 24 permutations of `[0, 1, 2, 3]` in lexicographic order.
pub fn permutation_table() -> [[usize; 4]; JIGSAW_CLASSES] {
    let mut table = [[0usize; 4]; JIGSAW_CLASSES];
    let mut n = 0;
    for a in 0..4 {
        for b in 0..4 {
            for c in 0..4 {
                for d in 0..4 {
                    if a != b && a != c && a != d && b != c && b != d && c != d {
                        table[n] = [a, b, c, d];
                        n += 1;
                    }
                }
            }
        }
    }
    table
}

/// Index of `perm` in [`permutation_table`].
pub fn permutation_index(perm: [usize; 4]) -> Option<usize> {
    permutation_table().iter().position(|p| *p == perm)
}

pub fn inverse_permutation(perm: [usize; 4]) -> [usize; 4] {
    let mut inv = [0usize; 4];
    for (k, &p) in perm.iter().enumerate() {
        inv[p] = k;
    }
    inv
}

/// Cuts `window` into a 2×2 grid and reorders the tiles by permutation
/// `perm_index` of the lexicographic table.
pub fn jigsaw_shuffle<F: Copy + Default>(
    image: &Tensor3<F>,
    perm_index: usize,
    window: CropWindow,
) -> Result<JigsawSample<F>> {
    if perm_index >= JIGSAW_CLASSES {
        return Err(Error::contract(format!("permutation index {perm_index} not in 0..24")));
    }
    if !window.size.is_multiple_of(2) || window.size == 0 {
        return Err(Error::contract(format!("jigsaw crop side {} must be even", window.size)));
    }
    let crop = image.crop(window.top, window.left, window.size, window.size)?;
    let half = window.size / 2;
    let original: Vec<Tensor3<F>> = (0..4)
        .map(|t| crop.crop((t / 2) * half, (t % 2) * half, half, half))
        .collect::<Result<_>>()?;
    let perm = permutation_table()[perm_index];
    let tiles = perm.map(|p| original[p].clone());
    Ok(JigsawSample { tiles, label: perm_index })
}

/// Reassembles tiles presented in `perm` order back into reading order.
pub fn unshuffle_tiles<F: Clone>(tiles: &[Tensor3<F>; 4], perm_index: usize) -> Result<[Tensor3<F>; 4]> {
    if perm_index >= JIGSAW_CLASSES {
        return Err(Error::contract(format!("permutation index {perm_index} not in 0..24")));
    }
    let inv = inverse_permutation(permutation_table()[perm_index]);
    Ok(inv.map(|k| tiles[k].clone()))
}

/// Stabilized softmax cross-entropy and its gradient with respect to the logits.
pub fn softmax_cross_entropy<F: Real>(logits: &[F], label: usize) -> Result<(F, Vec<F>)> {
    if label >= logits.len() {
        return Err(Error::contract(format!("label {label} out of range for {} classes", logits.len())));
    }
    if logits.iter().any(|x| !x.is_finite()) {
        return Err(Error::non_finite("classification logits"));
    }
    let m = logits.iter().copied().fold(F::neg_infinity(), F::max);
    let z: F = logits.iter().map(|&x| (x - m).exp()).sum();
    let loss = (m - logits[label]) + z.ln();
    let grad = logits
        .iter()
        .enumerate()
        .map(|(k, &x)| (x - m).exp() / z - if k == label { F::one() } else { F::zero() })
        .collect();
    Ok((loss, grad))
}

pub fn rotation_loss<F: Real>(logits: &[F], label: usize) -> Result<(F, Vec<F>)> {
    if logits.len() != ROTATION_CLASSES {
        return Err(Error::contract(format!("rotation head needs 4 logits, got {}", logits.len())));
    }
    softmax_cross_entropy(logits, label)
}

pub fn jigsaw_loss<F: Real>(logits: &[F], label: usize) -> Result<(F, Vec<F>)> {
    if logits.len() != JIGSAW_CLASSES {
        return Err(Error::contract(format!("jigsaw head needs 24 logits, got {}", logits.len())));
    }
    softmax_cross_entropy(logits, label)
}
