//! Sonar image corpora: loading, deterministic stratified splits,
//! normalization statistics, resizing and wild-patch extraction.
//!
//! On-disk layout is one directory per class, each holding 8-bit
//! single-channel PNG files: `<root>/<class_name>/<image>.png`. Multi-channel
//! files are accepted by averaging the channels (with a warning).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use log::warn;
use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("dataset root {0} is missing or not a directory")]
    MissingRoot(PathBuf),
    #[error("dataset root {0} contains no class directories with images")]
    EmptyRoot(PathBuf),
    #[error("failed to read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("failed to decode image {path}: {source}")]
    Decode {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },
    #[error("image {0} is not an 8-bit grayscale-convertible file")]
    NotGrayscale(PathBuf),
    #[error("split fractions {0:?} do not sum to 1")]
    BadFractions([f64; 3]),
    #[error("class '{class}' has {available} images, fewer than the {needed} split slots")]
    ClassTooSmall {
        class: String,
        available: usize,
        needed: usize,
    },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("resize target has a zero dimension")]
    ZeroResizeTarget,
    #[error("no source image is at least {0}x{1}, cannot extract patches")]
    NoEligibleSources(usize, usize),
    #[error("split manifest line {0} is malformed (expected `path<TAB>split`)")]
    BadManifestLine(usize),
    #[error("manifest references unknown image '{0}'")]
    ManifestUnknownImage(String),
}

/// Which partition a dataset represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitTag {
    Train,
    Val,
    Test,
    All,
}

impl std::fmt::Display for SplitTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SplitTag::Train => "train",
            SplitTag::Val => "val",
            SplitTag::Test => "test",
            SplitTag::All => "all",
        })
    }
}

/// One grayscale frame. Raw pixels live in `[0, 255]`; normalized pixels in
/// `[-255, 255]`.
#[derive(Debug, Clone)]
pub struct SonarImage<F: Scalar> {
    pub pixels: Array2<F>,
    pub class_label: Option<usize>,
    pub source_id: String,
}

impl<F: Scalar> SonarImage<F> {
    pub fn new(pixels: Array2<F>, class_label: Option<usize>, source_id: impl Into<String>) -> Self {
        let img = Self {
            pixels,
            class_label,
            source_id: source_id.into(),
        };
        assert!(img.height() > 0 && img.width() > 0, "image must be non-empty");
        img
    }

    pub fn height(&self) -> usize {
        self.pixels.shape()[0]
    }

    pub fn width(&self) -> usize {
        self.pixels.shape()[1]
    }
}

/// Ordered image collection with its class vocabulary.
#[derive(Debug, Clone)]
pub struct LabeledDataset<F: Scalar> {
    pub images: Vec<SonarImage<F>>,
    pub class_names: Vec<String>,
    pub split_tag: SplitTag,
}

impl<F: Scalar> LabeledDataset<F> {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Per-class image counts, indexed like `class_names`.
    pub fn class_histogram(&self) -> Vec<usize> {
        let mut counts = vec![0usize; self.class_names.len()];
        for img in &self.images {
            if let Some(c) = img.class_label {
                counts[c] += 1;
            }
        }
        counts
    }

    /// Labels of every image, erroring on unlabeled entries.
    pub fn labels(&self) -> Option<Vec<usize>> {
        self.images.iter().map(|i| i.class_label).collect()
    }
}

/// Training-set pixel mean used for mean-subtraction normalization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub pixel_mean: f64,
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

fn decode_image<F: Scalar>(path: &Path) -> Result<Array2<F>, DataError> {
    let img = image::open(path).map_err(|source| DataError::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let (gray, warned) = match &img {
        image::DynamicImage::ImageLuma8(g) => (g.clone(), false),
        image::DynamicImage::ImageRgb8(_) | image::DynamicImage::ImageRgba8(_) | image::DynamicImage::ImageLumaA8(_) => {
            (img.to_luma8(), true)
        }
        _ => return Err(DataError::NotGrayscale(path.to_path_buf())),
    };
    if warned {
        warn!("{}: multi-channel input converted to grayscale by channel averaging", path.display());
    }
    let (w, h) = gray.dimensions();
    if w == 0 || h == 0 {
        return Err(DataError::NotGrayscale(path.to_path_buf()));
    }
    let mut pixels = Array2::<F>::zeros((h as usize, w as usize));
    for (x, y, p) in gray.enumerate_pixels() {
        pixels[[y as usize, x as usize]] = F::fd(p.0[0] as f64);
    }
    Ok(pixels)
}

/// Load a directory-per-class corpus with deterministic lexicographic order
/// over class names and file names.
pub fn load_dataset<F: Scalar>(root: &Path) -> Result<LabeledDataset<F>, DataError> {
    if !root.is_dir() {
        return Err(DataError::MissingRoot(root.to_path_buf()));
    }
    let mut class_dirs: Vec<(String, PathBuf)> = Vec::new();
    for entry in std::fs::read_dir(root).map_err(|source| DataError::Io {
        path: root.to_path_buf(),
        source,
    })? {
        let entry = entry.map_err(|source| DataError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_dir() {
            let name = entry.file_name().to_string_lossy().into_owned();
            class_dirs.push((name, path));
        }
    }
    class_dirs.sort_by(|a, b| a.0.cmp(&b.0));
    if class_dirs.is_empty() {
        return Err(DataError::EmptyRoot(root.to_path_buf()));
    }
    let class_names: Vec<String> = class_dirs.iter().map(|(n, _)| n.clone()).collect();
    let mut images = Vec::new();
    for (class_idx, (class_name, dir)) in class_dirs.iter().enumerate() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|source| DataError::Io { path: dir.clone(), source })?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .map(|e| e.eq_ignore_ascii_case("png"))
                        .unwrap_or(false)
            })
            .collect();
        files.sort();
        if files.is_empty() {
            warn!("class directory '{class_name}' contains no images");
        }
        for file in files {
            let pixels = decode_image::<F>(&file)?;
            let rel = format!(
                "{}/{}",
                class_name,
                file.file_name().unwrap().to_string_lossy()
            );
            images.push(SonarImage::new(pixels, Some(class_idx), rel));
        }
    }
    Ok(LabeledDataset {
        images,
        class_names,
        split_tag: SplitTag::All,
    })
}

// ---------------------------------------------------------------------------
// Splitting
// ---------------------------------------------------------------------------

/// Stratified (train, val, test) split.
///
/// Per class, after a seeded shuffle: `test` gets the ceiling of its
/// fraction, `val` the floor, and `train` the remainder. Identical seeds
/// give identical partitions.
pub fn split_dataset<F: Scalar>(
    ds: &LabeledDataset<F>,
    fractions: (f64, f64, f64),
    seed: u64,
) -> Result<(LabeledDataset<F>, LabeledDataset<F>, LabeledDataset<F>), DataError> {
    let (ft, fv, fe) = fractions;
    if (ft + fv + fe - 1.0).abs() > 1e-9 {
        return Err(DataError::BadFractions([ft, fv, fe]));
    }
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, img) in ds.images.iter().enumerate() {
        by_class.entry(img.class_label.unwrap_or(usize::MAX)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    let mut test_idx = Vec::new();
    let slots = [ft, fv, fe].iter().filter(|f| **f > 0.0).count();
    for (&class, indices) in &by_class {
        let n = indices.len();
        let n_test = (fe * n as f64 - 1e-9).ceil().max(0.0) as usize;
        let n_val = (fv * n as f64 + 1e-9).floor() as usize;
        if n < slots || n_test + n_val > n {
            let name = ds
                .class_names
                .get(class)
                .cloned()
                .unwrap_or_else(|| "<unlabeled>".into());
            return Err(DataError::ClassTooSmall {
                class: name,
                available: n,
                needed: slots.max(n_test + n_val),
            });
        }
        let mut shuffled = indices.clone();
        shuffled.shuffle(&mut rng);
        test_idx.extend_from_slice(&shuffled[..n_test]);
        val_idx.extend_from_slice(&shuffled[n_test..n_test + n_val]);
        train_idx.extend_from_slice(&shuffled[n_test + n_val..]);
    }
    // stable order inside each split: original dataset order
    train_idx.sort_unstable();
    val_idx.sort_unstable();
    test_idx.sort_unstable();
    let take = |idx: &[usize], tag: SplitTag| LabeledDataset {
        images: idx.iter().map(|&i| ds.images[i].clone()).collect(),
        class_names: ds.class_names.clone(),
        split_tag: tag,
    };
    Ok((
        take(&train_idx, SplitTag::Train),
        take(&val_idx, SplitTag::Val),
        take(&test_idx, SplitTag::Test),
    ))
}

/// Serialize a split as `relative_path<TAB>split` lines.
pub fn write_split_manifest<F: Scalar>(
    splits: &[&LabeledDataset<F>],
) -> String {
    let mut out = String::new();
    for ds in splits {
        for img in &ds.images {
            writeln!(out, "{}\t{}", img.source_id, ds.split_tag).unwrap();
        }
    }
    out
}

/// Re-apply a previously written manifest to a freshly loaded dataset, so
/// downstream stages never re-randomize.
pub fn apply_split_manifest<F: Scalar>(
    ds: &LabeledDataset<F>,
    manifest: &str,
) -> Result<(LabeledDataset<F>, LabeledDataset<F>, LabeledDataset<F>), DataError> {
    let mut assignment: BTreeMap<&str, &str> = BTreeMap::new();
    for (lineno, line) in manifest.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let Some((path, tag)) = line.split_once('\t') else {
            return Err(DataError::BadManifestLine(lineno + 1));
        };
        assignment.insert(path, tag.trim());
    }
    let mut parts: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, img) in ds.images.iter().enumerate() {
        if let Some(&tag) = assignment.get(img.source_id.as_str()) {
            parts.entry(tag).or_default().push(i);
        }
    }
    for path in assignment.keys() {
        if !ds.images.iter().any(|img| img.source_id == *path) {
            return Err(DataError::ManifestUnknownImage(path.to_string()));
        }
    }
    let take = |tag: &str, split: SplitTag| LabeledDataset {
        images: parts
            .get(tag)
            .map(|idx| idx.iter().map(|&i| ds.images[i].clone()).collect())
            .unwrap_or_default(),
        class_names: ds.class_names.clone(),
        split_tag: split,
    };
    Ok((
        take("train", SplitTag::Train),
        take("val", SplitTag::Val),
        take("test", SplitTag::Test),
    ))
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Mean over all pixels of all images.
pub fn compute_pixel_mean<F: Scalar>(ds: &LabeledDataset<F>) -> Result<NormalizationStats, DataError> {
    if ds.is_empty() {
        return Err(DataError::EmptyDataset);
    }
    let mut sum = 0.0f64;
    let mut count = 0usize;
    for img in &ds.images {
        sum += img.pixels.iter().map(|p| p.as_f64()).sum::<f64>();
        count += img.pixels.len();
    }
    Ok(NormalizationStats {
        pixel_mean: sum / count as f64,
    })
}

/// Mean subtraction: every output pixel is `input - pixel_mean`.
pub fn normalize<F: Scalar>(img: &SonarImage<F>, stats: &NormalizationStats) -> SonarImage<F> {
    let mu = F::fd(stats.pixel_mean);
    SonarImage {
        pixels: img.pixels.mapv(|p| p - mu),
        class_label: img.class_label,
        source_id: img.source_id.clone(),
    }
}

/// Inverse of [`normalize`]: adds the mean back.
pub fn denormalize<F: Scalar>(img: &SonarImage<F>, stats: &NormalizationStats) -> SonarImage<F> {
    let mu = F::fd(stats.pixel_mean);
    SonarImage {
        pixels: img.pixels.mapv(|p| p + mu),
        class_label: img.class_label,
        source_id: img.source_id.clone(),
    }
}

pub fn normalize_dataset<F: Scalar>(ds: &LabeledDataset<F>, stats: &NormalizationStats) -> LabeledDataset<F> {
    LabeledDataset {
        images: ds.images.iter().map(|i| normalize(i, stats)).collect(),
        class_names: ds.class_names.clone(),
        split_tag: ds.split_tag,
    }
}

// ---------------------------------------------------------------------------
// Resizing (bilinear)
// ---------------------------------------------------------------------------

/// Bilinear resample to `(target_h, target_w)`. An identity-size input is
/// returned with unchanged pixels.
pub fn resize<F: Scalar>(
    img: &SonarImage<F>,
    target_h: usize,
    target_w: usize,
) -> Result<SonarImage<F>, DataError> {
    if target_h == 0 || target_w == 0 {
        return Err(DataError::ZeroResizeTarget);
    }
    let (h, w) = (img.height(), img.width());
    if h == target_h && w == target_w {
        return Ok(img.clone());
    }
    // pixel-center alignment: source = (dst + 0.5) * scale - 0.5
    let sy = h as f64 / target_h as f64;
    let sx = w as f64 / target_w as f64;
    let mut out = Array2::<F>::zeros((target_h, target_w));
    for ty in 0..target_h {
        let fy = ((ty as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let y0 = fy.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let wy = fy - y0 as f64;
        for tx in 0..target_w {
            let fx = ((tx as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let x0 = fx.floor() as usize;
            let x1 = (x0 + 1).min(w - 1);
            let wx = fx - x0 as f64;
            let p00 = img.pixels[[y0, x0]].as_f64();
            let p01 = img.pixels[[y0, x1]].as_f64();
            let p10 = img.pixels[[y1, x0]].as_f64();
            let p11 = img.pixels[[y1, x1]].as_f64();
            let top = p00 + (p01 - p00) * wx;
            let bot = p10 + (p11 - p10) * wx;
            out[[ty, tx]] = F::fd(top + (bot - top) * wy);
        }
    }
    Ok(SonarImage {
        pixels: out,
        class_label: img.class_label,
        source_id: img.source_id.clone(),
    })
}

pub fn resize_dataset<F: Scalar>(
    ds: &LabeledDataset<F>,
    target_h: usize,
    target_w: usize,
) -> Result<LabeledDataset<F>, DataError> {
    let images = ds
        .images
        .iter()
        .map(|i| resize(i, target_h, target_w))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(LabeledDataset {
        images,
        class_names: ds.class_names.clone(),
        split_tag: ds.split_tag,
    })
}

// ---------------------------------------------------------------------------
// Wild patches
// ---------------------------------------------------------------------------

/// Extract `count` patches with uniformly random top-left corners from the
/// eligible (large enough) sources. Reproducible per seed; undersized sources
/// are skipped with a warning.
pub fn extract_wild_patches<F: Scalar>(
    sources: &[SonarImage<F>],
    patch_h: usize,
    patch_w: usize,
    count: usize,
    seed: u64,
) -> Result<LabeledDataset<F>, DataError> {
    let mut eligible = Vec::new();
    for (i, src) in sources.iter().enumerate() {
        if src.height() >= patch_h && src.width() >= patch_w {
            eligible.push(i);
        } else {
            warn!(
                "source '{}' ({}x{}) smaller than patch {}x{}; skipped",
                src.source_id,
                src.height(),
                src.width(),
                patch_h,
                patch_w
            );
        }
    }
    if eligible.is_empty() {
        return Err(DataError::NoEligibleSources(patch_h, patch_w));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(count);
    for k in 0..count {
        let src = &sources[eligible[rng.random_range(0..eligible.len())]];
        let max_y = src.height() - patch_h;
        let max_x = src.width() - patch_w;
        let y = rng.random_range(0..=max_y);
        let x = rng.random_range(0..=max_x);
        let patch = src
            .pixels
            .slice(ndarray::s![y..y + patch_h, x..x + patch_w])
            .to_owned();
        images.push(SonarImage::new(
            patch,
            None,
            format!("{}#patch{}@{},{}", src.source_id, k, y, x),
        ));
    }
    Ok(LabeledDataset {
        images,
        class_names: Vec::new(),
        split_tag: SplitTag::All,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn uniform_image(h: usize, w: usize, v: f64, label: Option<usize>) -> SonarImage<f64> {
        SonarImage::new(Array2::from_elem((h, w), v), label, format!("u{h}x{w}"))
    }

    fn toy_dataset(per_class: &[usize]) -> LabeledDataset<f64> {
        let mut images = Vec::new();
        for (c, &n) in per_class.iter().enumerate() {
            for i in 0..n {
                let mut img = uniform_image(4, 4, c as f64, Some(c));
                img.source_id = format!("c{c}/img{i:03}.png");
                images.push(img);
            }
        }
        LabeledDataset {
            images,
            class_names: (0..per_class.len()).map(|c| format!("c{c}")).collect(),
            split_tag: SplitTag::All,
        }
    }

    #[test]
    fn split_exact_fractions_ten_images() {
        let ds = toy_dataset(&[10]);
        let (tr, va, te) = split_dataset(&ds, (0.8, 0.1, 0.1), 7).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (8, 1, 1));
    }

    #[test]
    fn split_is_exact_partition_and_deterministic() {
        let ds = toy_dataset(&[13, 29, 7]);
        let (tr, va, te) = split_dataset(&ds, (0.70, 0.15, 0.15), 42).unwrap();
        assert_eq!(tr.len() + va.len() + te.len(), ds.len());
        let mut all: Vec<&str> = tr
            .images
            .iter()
            .chain(&va.images)
            .chain(&te.images)
            .map(|i| i.source_id.as_str())
            .collect();
        all.sort_unstable();
        all.dedup();
        assert_eq!(all.len(), ds.len(), "splits are disjoint and cover the input");
        let (tr2, va2, te2) = split_dataset(&ds, (0.70, 0.15, 0.15), 42).unwrap();
        let manifest1 = write_split_manifest(&[&tr, &va, &te]);
        let manifest2 = write_split_manifest(&[&tr2, &va2, &te2]);
        assert_eq!(manifest1, manifest2, "same seed gives byte-identical manifests");
    }

    #[test]
    fn split_rounding_is_test_ceil_val_floor() {
        // 9 images, 0.7/0.15/0.15: test = ceil(1.35) = 2, val = floor(1.35) = 1
        let ds = toy_dataset(&[9]);
        let (tr, va, te) = split_dataset(&ds, (0.70, 0.15, 0.15), 3).unwrap();
        assert_eq!((tr.len(), va.len(), te.len()), (6, 1, 2));
    }

    #[test]
    fn split_class_too_small_is_error() {
        // two images cannot fill three nonzero split slots
        let ds = toy_dataset(&[10, 2]);
        let err = split_dataset(&ds, (0.70, 0.15, 0.15), 3).unwrap_err();
        match err {
            DataError::ClassTooSmall { class, .. } => assert_eq!(class, "c1"),
            other => panic!("expected ClassTooSmall, got {other}"),
        }
    }

    #[test]
    fn manifest_round_trip() {
        let ds = toy_dataset(&[8, 8]);
        let (tr, va, te) = split_dataset(&ds, (0.5, 0.25, 0.25), 5).unwrap();
        let manifest = write_split_manifest(&[&tr, &va, &te]);
        let (tr2, va2, te2) = apply_split_manifest(&ds, &manifest).unwrap();
        assert_eq!(tr.len(), tr2.len());
        assert_eq!(va.len(), va2.len());
        assert_eq!(te.len(), te2.len());
        for (a, b) in tr.images.iter().zip(&tr2.images) {
            assert_eq!(a.source_id, b.source_id);
        }
    }

    #[test]
    fn pixel_mean_examples() {
        let zero = LabeledDataset {
            images: vec![uniform_image(3, 3, 0.0, None)],
            class_names: vec![],
            split_tag: SplitTag::All,
        };
        assert_eq!(compute_pixel_mean(&zero).unwrap().pixel_mean, 0.0);
        let hundred = LabeledDataset {
            images: vec![uniform_image(5, 7, 100.0, None)],
            class_names: vec![],
            split_tag: SplitTag::All,
        };
        assert_eq!(compute_pixel_mean(&hundred).unwrap().pixel_mean, 100.0);
        let empty: LabeledDataset<f64> = LabeledDataset {
            images: vec![],
            class_names: vec![],
            split_tag: SplitTag::All,
        };
        assert!(compute_pixel_mean(&empty).is_err());
    }

    #[test]
    fn normalize_examples() {
        let img = uniform_image(2, 2, 84.5, None);
        let stats = NormalizationStats { pixel_mean: 84.5 };
        let n = normalize(&img, &stats);
        assert_eq!(n.pixels[[0, 0]], 0.0);
        let img0 = uniform_image(2, 2, 0.0, None);
        assert_eq!(normalize(&img0, &stats).pixels[[1, 1]], -84.5);
        let ident = NormalizationStats { pixel_mean: 0.0 };
        assert_eq!(normalize(&img, &ident).pixels, img.pixels);
        let back = denormalize(&n, &stats);
        assert!((back.pixels[[0, 0]] - 84.5).abs() < 1e-12);
    }

    #[test]
    fn resize_contracts() {
        let img = SonarImage::new(
            arr2(&[[0.0, 1.0], [2.0, 3.0]]),
            None,
            "t",
        );
        let same = resize(&img, 2, 2).unwrap();
        assert_eq!(same.pixels, img.pixels);
        let constant = uniform_image(192, 192, 7.0, None);
        let down = resize(&constant, 96, 96).unwrap();
        assert!(down.pixels.iter().all(|&v| (v - 7.0).abs() < 1e-9));
        let rect = uniform_image(48, 96, 1.0, None);
        let up = resize(&rect, 96, 96).unwrap();
        assert_eq!((up.height(), up.width()), (96, 96));
        assert!(resize(&img, 0, 5).is_err());
    }

    #[test]
    fn wild_patches_single_corner_and_count() {
        let src = uniform_image(96, 96, 3.0, None);
        let ds = extract_wild_patches(&[src], 96, 96, 3, 9).unwrap();
        assert_eq!(ds.len(), 3);
        for img in &ds.images {
            assert_eq!(img.pixels.shape(), [96, 96]);
            assert!(img.class_label.is_none());
        }
        let tiny = uniform_image(10, 10, 0.0, None);
        assert!(extract_wild_patches(&[tiny], 96, 96, 1, 0).is_err());
    }

    #[test]
    fn wild_patches_bit_identical_per_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let src = SonarImage::new(
            Array2::from_shape_fn((64, 64), |_| rng.random_range(0.0..255.0)),
            None,
            "noise",
        );
        let a = extract_wild_patches(&[src.clone()], 16, 16, 20, 5).unwrap();
        let b = extract_wild_patches(&[src], 16, 16, 20, 5).unwrap();
        for (x, y) in a.images.iter().zip(&b.images) {
            assert_eq!(x.pixels, y.pixels);
            assert_eq!(x.source_id, y.source_id);
        }
    }
}
