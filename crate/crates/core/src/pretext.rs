//! Pretext sample generators: rotation labels, jigsaw permutations,
//! Gaussian-corrupted pairs, and the shared train-time shift/flip
//! augmentation. All generators are pure functions of (input, seed).

use std::path::Path;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::data::{LabeledDataset, SonarImage};
use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum PretextError {
    #[error("rotation requires a square image, got {0}x{1}")]
    NotSquare(usize, usize),
    #[error("permutation count {0} outside [1, 362880]")]
    BadPermutationCount(usize),
    #[error("jigsaw requires a {want}x{want} image, got {h}x{w}")]
    BadJigsawShape { want: usize, h: usize, w: usize },
    #[error("permutation set is empty")]
    EmptyPermutationSet,
    #[error("noise standard deviation must be non-negative, got {0}")]
    NegativeSigma(f64),
    #[error("failed to write pretext archive: {0}")]
    Archive(#[from] std::io::Error),
}

/// Label mapping is fixed: 0° -> 1, 90° -> 2, 180° -> 3, 270° -> 4.
pub const ROTATION_LABELS: [u8; 4] = [1, 2, 3, 4];

pub const JIGSAW_GRID: usize = 3;
pub const JIGSAW_TILES: usize = JIGSAW_GRID * JIGSAW_GRID;
/// 9! — size of the tile permutation space.
pub const PERMUTATION_SPACE: usize = 362_880;

/// A rotated image with its synthetic label (and the retained class label).
#[derive(Debug, Clone)]
pub struct RotationSample<F: Scalar> {
    pub image: SonarImage<F>,
    /// In `{1, 2, 3, 4}`; `label - 1` quarter turns were applied.
    pub rotation_label: u8,
}

/// Ordered, pairwise-distinct tile orderings sampled from S9.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationSet {
    pub permutations: Vec<[usize; JIGSAW_TILES]>,
    pub seed: u64,
}

impl PermutationSet {
    pub fn len(&self) -> usize {
        self.permutations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutations.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("permutation set serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }
}

/// Nine 32x32 tiles in shuffled order plus the permutation index.
#[derive(Debug, Clone)]
pub struct JigsawSample<F: Scalar> {
    pub tiles: Vec<Array2<F>>,
    pub permutation_label: usize,
    pub class_label: Option<usize>,
    pub source_id: String,
}

/// Noisy/clean training pair for the denoising task.
#[derive(Debug, Clone)]
pub struct CorruptedPair<F: Scalar> {
    pub noisy: SonarImage<F>,
    pub clean: SonarImage<F>,
    pub sigma: f64,
}

// ---------------------------------------------------------------------------
// Rotation
// ---------------------------------------------------------------------------

/// Exact 90°-step rotation (counter-clockwise), lossless pixel remapping.
pub fn rotate<F: Scalar>(img: &SonarImage<F>, quarter_turns: usize) -> Result<SonarImage<F>, PretextError> {
    let (h, w) = (img.height(), img.width());
    if h != w {
        return Err(PretextError::NotSquare(h, w));
    }
    let k = quarter_turns % 4;
    let n = h;
    let mut out = Array2::<F>::zeros((n, n));
    for y in 0..n {
        for x in 0..n {
            let (ny, nx) = match k {
                0 => (y, x),
                1 => (n - 1 - x, y),
                2 => (n - 1 - y, n - 1 - x),
                3 => (x, n - 1 - y),
                _ => unreachable!(),
            };
            out[[ny, nx]] = img.pixels[[y, x]];
        }
    }
    Ok(SonarImage {
        pixels: out,
        class_label: img.class_label,
        source_id: img.source_id.clone(),
    })
}

/// Expand a dataset fourfold: each image under all four rotations, labeled
/// `{1, 2, 3, 4}`; class labels are retained as metadata.
pub fn make_rotation_dataset<F: Scalar>(
    ds: &LabeledDataset<F>,
) -> Result<Vec<RotationSample<F>>, PretextError> {
    let mut out = Vec::with_capacity(ds.len() * 4);
    for img in &ds.images {
        for (k, &label) in ROTATION_LABELS.iter().enumerate() {
            out.push(RotationSample {
                image: rotate(img, k)?,
                rotation_label: label,
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Jigsaw
// ---------------------------------------------------------------------------

/// Sample `p` distinct permutations of the 9 tile indices by rejection from
/// S9. Entry 0 is always the identity permutation.
pub fn sample_permutations(p: usize, seed: u64) -> Result<PermutationSet, PretextError> {
    if p == 0 || p > PERMUTATION_SPACE {
        return Err(PretextError::BadPermutationCount(p));
    }
    let identity: [usize; JIGSAW_TILES] = [0, 1, 2, 3, 4, 5, 6, 7, 8];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut set = vec![identity];
    while set.len() < p {
        let mut cand = identity;
        // Fisher-Yates
        for i in (1..JIGSAW_TILES).rev() {
            let j = rng.random_range(0..=i);
            cand.swap(i, j);
        }
        if !set.contains(&cand) {
            set.push(cand);
        }
    }
    Ok(PermutationSet {
        permutations: set,
        seed,
    })
}

/// Cut a 96x96 image into a row-major 3x3 grid and emit tiles in permuted
/// order: output tile `i` is grid cell `perm[i]` of the input.
pub fn shuffle_patches<F: Scalar>(
    img: &SonarImage<F>,
    perm: &[usize; JIGSAW_TILES],
) -> Result<Vec<Array2<F>>, PretextError> {
    let (h, w) = (img.height(), img.width());
    if h != 96 || w != 96 {
        return Err(PretextError::BadJigsawShape { want: 96, h, w });
    }
    let tile = 96 / JIGSAW_GRID;
    let mut tiles = Vec::with_capacity(JIGSAW_TILES);
    for &cell in perm {
        let ty = cell / JIGSAW_GRID;
        let tx = cell % JIGSAW_GRID;
        tiles.push(
            img.pixels
                .slice(ndarray::s![ty * tile..(ty + 1) * tile, tx * tile..(tx + 1) * tile])
                .to_owned(),
        );
    }
    Ok(tiles)
}

/// Invert [`shuffle_patches`]: stitch tiles back into the source image.
pub fn unshuffle_patches<F: Scalar>(
    tiles: &[Array2<F>],
    perm: &[usize; JIGSAW_TILES],
) -> Array2<F> {
    let tile = tiles[0].shape()[0];
    let n = tile * JIGSAW_GRID;
    let mut out = Array2::<F>::zeros((n, n));
    for (i, &cell) in perm.iter().enumerate() {
        let ty = cell / JIGSAW_GRID;
        let tx = cell % JIGSAW_GRID;
        out.slice_mut(ndarray::s![ty * tile..(ty + 1) * tile, tx * tile..(tx + 1) * tile])
            .assign(&tiles[i]);
    }
    out
}

/// Cross every image with every permutation: output size is `|ds| * P`,
/// labeled by permutation index.
pub fn make_jigsaw_dataset<F: Scalar>(
    ds: &LabeledDataset<F>,
    perms: &PermutationSet,
) -> Result<Vec<JigsawSample<F>>, PretextError> {
    if perms.is_empty() {
        return Err(PretextError::EmptyPermutationSet);
    }
    let mut out = Vec::with_capacity(ds.len() * perms.len());
    for img in &ds.images {
        for (label, perm) in perms.permutations.iter().enumerate() {
            out.push(JigsawSample {
                tiles: shuffle_patches(img, perm)?,
                permutation_label: label,
                class_label: img.class_label,
                source_id: img.source_id.clone(),
            });
        }
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
// Gaussian corruption
// ---------------------------------------------------------------------------

/// `noisy = clean + eps`, `eps ~ N(0, sigma^2)` i.i.d. per pixel. The clean
/// image is retained as the reconstruction target. Noise belongs to training
/// only; embedding extraction always consumes clean inputs.
pub fn corrupt_gaussian<F: Scalar>(
    img: &SonarImage<F>,
    sigma: f64,
    seed: u64,
) -> Result<CorruptedPair<F>, PretextError> {
    if sigma < 0.0 {
        return Err(PretextError::NegativeSigma(sigma));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noisy = img.pixels.mapv(|p| p + F::fd(sigma * standard_normal(&mut rng)));
    Ok(CorruptedPair {
        noisy: SonarImage {
            pixels: noisy,
            class_label: img.class_label,
            source_id: img.source_id.clone(),
        },
        clean: img.clone(),
        sigma,
    })
}

/// Box-Muller draw, always in f64 so every scalar type sees the same stream.
pub fn standard_normal(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random_range(0.0..1.0);
    (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
}

// ---------------------------------------------------------------------------
// Augmentation
// ---------------------------------------------------------------------------

/// Train-time augmentation: integer translation with magnitudes
/// `s_w ~ U(0, 0.1 w)`, `s_h ~ U(0, 0.1 h)` (zero fill, which is the
/// post-normalization background), then independent up-down and left-right
/// flips with probability 0.5 each.
pub fn augment<F: Scalar>(img: &SonarImage<F>, seed: u64) -> SonarImage<F> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (h, w) = (img.height(), img.width());
    let sw = rng.random_range(0.0..0.1 * w as f64).floor() as usize;
    let sh = rng.random_range(0.0..0.1 * h as f64).floor() as usize;
    let flip_ud = rng.random_range(0.0..1.0) < 0.5;
    let flip_lr = rng.random_range(0.0..1.0) < 0.5;
    let mut out = Array2::<F>::zeros((h, w));
    // shift down by sh, right by sw
    for y in 0..h - sh {
        for x in 0..w - sw {
            out[[y + sh, x + sw]] = img.pixels[[y, x]];
        }
    }
    if flip_ud {
        out.invert_axis(ndarray::Axis(0));
    }
    if flip_lr {
        out.invert_axis(ndarray::Axis(1));
    }
    SonarImage {
        pixels: out.as_standard_layout().to_owned(),
        class_label: img.class_label,
        source_id: img.source_id.clone(),
    }
}

// ---------------------------------------------------------------------------
// Materialization
// ---------------------------------------------------------------------------

fn write_png<F: Scalar>(pixels: &Array2<F>, path: &Path) -> std::io::Result<()> {
    let (h, w) = (pixels.shape()[0], pixels.shape()[1]);
    let img = image::GrayImage::from_fn(w as u32, h as u32, |x, y| {
        let v = pixels[[y as usize, x as usize]].as_f64().clamp(0.0, 255.0);
        image::Luma([v.round() as u8])
    });
    img.save(path).map_err(std::io::Error::other)
}

/// Write rotation samples (raw-intensity images) as PNG files plus a
/// `manifest.csv` with `path,pretext_label,true_label` rows.
pub fn materialize_rotation_dataset<F: Scalar>(
    samples: &[RotationSample<F>],
    dir: &Path,
) -> Result<(), PretextError> {
    std::fs::create_dir_all(dir)?;
    let mut manifest = String::from("path,pretext_label,true_label\n");
    for (i, s) in samples.iter().enumerate() {
        let name = format!("rot_{i:06}.png");
        write_png(&s.image.pixels, &dir.join(&name))?;
        let true_label = s
            .image
            .class_label
            .map(|c| c.to_string())
            .unwrap_or_default();
        manifest.push_str(&format!("{name},{},{true_label}\n", s.rotation_label));
    }
    std::fs::write(dir.join("manifest.csv"), manifest)?;
    Ok(())
}

/// Write jigsaw samples as reassembled (shuffled) montages plus the manifest.
pub fn materialize_jigsaw_dataset<F: Scalar>(
    samples: &[JigsawSample<F>],
    dir: &Path,
) -> Result<(), PretextError> {
    std::fs::create_dir_all(dir)?;
    let identity: [usize; JIGSAW_TILES] = [0, 1, 2, 3, 4, 5, 6, 7, 8];
    let mut manifest = String::from("path,pretext_label,true_label\n");
    for (i, s) in samples.iter().enumerate() {
        let name = format!("jig_{i:06}.png");
        let montage = unshuffle_patches(&s.tiles, &identity);
        write_png(&montage, &dir.join(&name))?;
        let true_label = s.class_label.map(|c| c.to_string()).unwrap_or_default();
        manifest.push_str(&format!("{name},{},{true_label}\n", s.permutation_label));
    }
    std::fs::write(dir.join("manifest.csv"), manifest)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::SplitTag;

    fn counter_image(n: usize) -> SonarImage<f64> {
        SonarImage::new(
            Array2::from_shape_fn((n, n), |(y, x)| (y * n + x) as f64),
            Some(3),
            "counter",
        )
    }

    #[test]
    fn rotate_identity_and_group_closure() {
        let img = counter_image(8);
        let r0 = rotate(&img, 0).unwrap();
        assert_eq!(r0.pixels, img.pixels);
        let mut r = img.clone();
        for _ in 0..4 {
            r = rotate(&r, 1).unwrap();
        }
        assert_eq!(r.pixels, img.pixels, "four quarter turns are the identity");
        let twice = rotate(&rotate(&img, 1).unwrap(), 1).unwrap();
        assert_eq!(twice.pixels, rotate(&img, 2).unwrap().pixels);
    }

    #[test]
    fn rotate_rejects_non_square() {
        let img = SonarImage::new(Array2::<f64>::zeros((4, 6)), None, "rect");
        assert!(rotate(&img, 1).is_err());
    }

    #[test]
    fn rotation_dataset_quadruples_and_labels() {
        let ds = LabeledDataset {
            images: vec![counter_image(6)],
            class_names: vec!["a".into(), "b".into(), "c".into(), "d".into()],
            split_tag: SplitTag::Train,
        };
        let samples = make_rotation_dataset(&ds).unwrap();
        assert_eq!(samples.len(), 4);
        let labels: Vec<u8> = samples.iter().map(|s| s.rotation_label).collect();
        assert_eq!(labels, vec![1, 2, 3, 4]);
        assert!(samples.iter().all(|s| s.image.class_label == Some(3)));
        let empty = LabeledDataset::<f64> {
            images: vec![],
            class_names: vec![],
            split_tag: SplitTag::Train,
        };
        assert!(make_rotation_dataset(&empty).unwrap().is_empty());
    }

    #[test]
    fn permutations_distinct_and_seeded() {
        let one = sample_permutations(1, 0).unwrap();
        assert_eq!(one.permutations, vec![[0, 1, 2, 3, 4, 5, 6, 7, 8]]);
        let five = sample_permutations(5, 123).unwrap();
        assert_eq!(five.len(), 5);
        for i in 0..5 {
            let mut sorted = five.permutations[i];
            sorted.sort_unstable();
            assert_eq!(sorted, [0, 1, 2, 3, 4, 5, 6, 7, 8], "entry {i} is a bijection");
            for j in i + 1..5 {
                assert_ne!(five.permutations[i], five.permutations[j]);
            }
        }
        assert_eq!(five, sample_permutations(5, 123).unwrap());
        assert!(sample_permutations(0, 1).is_err());
        assert!(sample_permutations(PERMUTATION_SPACE + 1, 1).is_err());
    }

    #[test]
    fn permutation_set_json_round_trip() {
        let set = sample_permutations(10, 7).unwrap();
        let back = PermutationSet::from_json(&set.to_json()).unwrap();
        assert_eq!(set, back);
    }

    #[test]
    fn shuffle_identity_and_inverse() {
        let img = counter_image(96);
        let identity = [0, 1, 2, 3, 4, 5, 6, 7, 8];
        let tiles = shuffle_patches(&img, &identity).unwrap();
        assert_eq!(tiles.len(), 9);
        assert_eq!(tiles[0].shape(), [32, 32]);
        assert_eq!(tiles[0][[0, 0]], img.pixels[[0, 0]]);
        assert_eq!(tiles[4][[0, 0]], img.pixels[[32, 32]]);

        let perm = [2, 0, 1, 5, 3, 4, 8, 6, 7];
        let shuffled = shuffle_patches(&img, &perm).unwrap();
        let restored = unshuffle_patches(&shuffled, &perm);
        assert_eq!(restored, img.pixels, "unshuffle inverts shuffle exactly");
        assert_ne!(shuffled[0], tiles[0], "non-identity permutation moves tiles");
    }

    #[test]
    fn jigsaw_dataset_size_is_n_times_p() {
        let ds = LabeledDataset {
            images: vec![counter_image(96), counter_image(96)],
            class_names: vec![],
            split_tag: SplitTag::Test,
        };
        let perms = sample_permutations(5, 3).unwrap();
        let samples = make_jigsaw_dataset(&ds, &perms).unwrap();
        assert_eq!(samples.len(), 10);
        assert_eq!(samples[0].permutation_label, 0);
        assert_eq!(samples[4].permutation_label, 4);
        let empty = PermutationSet { permutations: vec![], seed: 0 };
        assert!(make_jigsaw_dataset(&ds, &empty).is_err());
    }

    #[test]
    fn corruption_sigma_zero_is_identity() {
        let img = counter_image(16);
        let pair = corrupt_gaussian(&img, 0.0, 5).unwrap();
        assert_eq!(pair.noisy.pixels, pair.clean.pixels);
        assert!(corrupt_gaussian(&img, -0.1, 5).is_err());
    }

    #[test]
    fn corruption_noise_statistics() {
        let img = SonarImage::new(Array2::<f64>::zeros((96, 96)), None, "z");
        let pair = corrupt_gaussian(&img, 0.1, 99).unwrap();
        let diffs: Vec<f64> = pair.noisy.pixels.iter().cloned().collect();
        let n = diffs.len() as f64;
        let mean = diffs.iter().sum::<f64>() / n;
        let std = (diffs.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(std > 0.09 && std < 0.11, "sample std {std}");
        assert!(mean.abs() < 5.0 * 0.1 / n.sqrt(), "sample mean {mean}");
    }

    #[test]
    fn augment_deterministic_and_bounded_shift() {
        let img = counter_image(96);
        let a = augment(&img, 11);
        let b = augment(&img, 11);
        assert_eq!(a.pixels, b.pixels);
        // a constant zero image is fixed by every shift/flip
        let zero = SonarImage::new(Array2::<f64>::zeros((96, 96)), None, "z");
        for seed in 0..8 {
            assert_eq!(augment(&zero, seed).pixels, zero.pixels);
        }
        // shift magnitude bound: the top-left occupied cell moves at most
        // floor(0.1 * 96) = 9 pixels in each direction
        let mut marker = Array2::<f64>::zeros((96, 96));
        marker.fill(1.0);
        let m = SonarImage::new(marker, None, "m");
        for seed in 0..32 {
            let out = augment(&m, seed);
            let occupied = out.pixels.iter().filter(|&&v| v != 0.0).count();
            assert!(occupied >= (96 - 9) * (96 - 9), "seed {seed}: shift too large");
        }
    }

    #[test]
    fn materialize_rotation_writes_manifest() {
        let dir = tempfile::tempdir().unwrap();
        let ds = LabeledDataset {
            images: vec![counter_image(8)],
            class_names: vec![],
            split_tag: SplitTag::Train,
        };
        let samples = make_rotation_dataset(&ds).unwrap();
        materialize_rotation_dataset(&samples, dir.path()).unwrap();
        let manifest = std::fs::read_to_string(dir.path().join("manifest.csv")).unwrap();
        assert_eq!(manifest.lines().count(), 5);
        assert!(manifest.lines().nth(1).unwrap().contains("rot_000000.png,1,3"));
        assert!(dir.path().join("rot_000003.png").exists());
    }
}
