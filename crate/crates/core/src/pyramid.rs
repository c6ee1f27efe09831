//! Multi-scale patch pyramid scoring.
//!
//! Level `k` (1-based) splits the image into a `2^(k-1) x 2^(k-1)` grid of equal
//! patches. Every patch is embedded, compared with each attribute embedding by cosine
//! similarity, and each pixel receives the combination (mean by default) of the scores
//! of the patches that contain it across all levels.

use image::imageops::{self, FilterType};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attributes::AttributeEmbeddings;
use crate::image::RgbImage;

/// Largest pyramid depth accepted by the scorer (1 + 4 + 16 + 64 patches).
pub const MAX_LEVELS: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProviderError {
    #[error("embedding provider unavailable: {0}")]
    Unavailable(String),
    #[error("embedding provider protocol error: {0}")]
    Protocol(String),
    #[error("provider does not know text {0:?}")]
    UnknownText(String),
    #[error("provider returned {got} vectors for {expected} inputs")]
    CountMismatch { expected: usize, got: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ScoringError {
    #[error("{height}x{width} image is not divisible into {levels} pyramid levels")]
    IndivisibleImage {
        height: usize,
        width: usize,
        levels: usize,
    },
    #[error("pyramid levels must be in 1..={MAX_LEVELS}, got {0}")]
    InvalidLevels(usize),
    #[error("pixel ({row}, {col}) or level {level} out of bounds")]
    OutOfBounds { row: usize, col: usize, level: usize },
    #[error("zero-norm vector in cosine similarity")]
    ZeroVector,
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("provider failed on level {level} patch ({h}, {w}): {source}")]
    ProviderFailure {
        level: usize,
        h: usize,
        w: usize,
        #[source]
        source: ProviderError,
    },
}

/// Image/text encoder with a shared embedding space.
///
/// Implementations must be deterministic and return unit-norm vectors of a fixed
/// dimension.
pub trait EmbeddingProvider {
    fn dim(&self) -> usize;

    /// Native input resolution; patches are bilinearly resized to it when set.
    fn input_size(&self) -> Option<(u32, u32)> {
        None
    }

    fn embed_images(&self, patches: &[RgbImage]) -> Result<Vec<Vec<f64>>, ProviderError>;

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError>;
}

impl<T: EmbeddingProvider + ?Sized> EmbeddingProvider for &T {
    fn dim(&self) -> usize {
        (**self).dim()
    }
    fn input_size(&self) -> Option<(u32, u32)> {
        (**self).input_size()
    }
    fn embed_images(&self, patches: &[RgbImage]) -> Result<Vec<Vec<f64>>, ProviderError> {
        (**self).embed_images(patches)
    }
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<Vec<f64>>, ProviderError> {
        (**self).embed_texts(texts)
    }
}

#[derive(Debug, Clone)]
pub struct Patch {
    pub level: usize,
    /// 1-based patch row.
    pub h: usize,
    /// 1-based patch column.
    pub w: usize,
    pub rows: std::ops::Range<usize>,
    pub cols: std::ops::Range<usize>,
    pub image: RgbImage,
}

#[derive(Debug, Clone)]
pub struct PatchPyramid {
    pub height: usize,
    pub width: usize,
    /// `levels[k - 1]` holds the `4^(k-1)` patches of level `k` in row-major order.
    pub levels: Vec<Vec<Patch>>,
}

impl PatchPyramid {
    pub fn patch_count(&self) -> usize {
        self.levels.iter().map(Vec::len).sum()
    }
}

fn check_levels(height: usize, width: usize, levels: usize) -> Result<(), ScoringError> {
    if levels == 0 || levels > MAX_LEVELS {
        return Err(ScoringError::InvalidLevels(levels));
    }
    let div = 1usize << (levels - 1);
    if height == 0 || width == 0 || height % div != 0 || width % div != 0 {
        return Err(ScoringError::IndivisibleImage {
            height,
            width,
            levels,
        });
    }
    Ok(())
}

/// Largest size not above `(height, width)` that `levels` pyramid levels divide evenly.
pub fn divisible_size(height: usize, width: usize, levels: usize) -> (usize, usize) {
    let div = 1usize << levels.saturating_sub(1);
    (height / div * div, width / div * div)
}

/// Splits `image` into a `levels`-deep pyramid, resizing patches to `resize` when given.
pub fn partition(
    image: &RgbImage,
    levels: usize,
    resize: Option<(u32, u32)>,
) -> Result<PatchPyramid, ScoringError> {
    let (height, width) = (image.height() as usize, image.width() as usize);
    check_levels(height, width, levels)?;
    let mut out = Vec::with_capacity(levels);
    for k in 1..=levels {
        let side = 1usize << (k - 1);
        let (ph, pw) = (height / side, width / side);
        let mut patches = Vec::with_capacity(side * side);
        for h in 0..side {
            for w in 0..side {
                let crop =
                    imageops::crop_imm(image, (w * pw) as u32, (h * ph) as u32, pw as u32, ph as u32)
                        .to_image();
                let image = match resize {
                    Some((rw, rh)) if (rw, rh) != (pw as u32, ph as u32) => {
                        imageops::resize(&crop, rw, rh, FilterType::Triangle)
                    }
                    _ => crop,
                };
                patches.push(Patch {
                    level: k,
                    h: h + 1,
                    w: w + 1,
                    rows: h * ph..(h + 1) * ph,
                    cols: w * pw..(w + 1) * pw,
                    image,
                });
            }
        }
        out.push(patches);
    }
    Ok(PatchPyramid {
        height,
        width,
        levels: out,
    })
}

/// 1-based `(h, w)` index of the level-`k` patch containing pixel `(p, q)`.
pub fn patch_index(
    p: usize,
    q: usize,
    k: usize,
    height: usize,
    width: usize,
) -> Result<(usize, usize), ScoringError> {
    if p >= height || q >= width || k == 0 || k > usize::BITS as usize {
        return Err(ScoringError::OutOfBounds {
            row: p,
            col: q,
            level: k,
        });
    }
    let side = 1usize << (k - 1);
    if height % side != 0 || width % side != 0 {
        return Err(ScoringError::IndivisibleImage {
            height,
            width,
            levels: k,
        });
    }
    Ok((p / (height / side) + 1, q / (width / side) + 1))
}

/// Cosine similarity.
pub fn similarity(v: &[f64], e: &[f64]) -> Result<f64, ScoringError> {
    if v.len() != e.len() {
        return Err(ScoringError::DimensionMismatch(v.len(), e.len()));
    }
    let (mut dot, mut nv, mut ne) = (0.0, 0.0, 0.0);
    for (a, b) in v.iter().zip(e) {
        dot += a * b;
        nv += a * a;
        ne += b * b;
    }
    if nv == 0.0 || ne == 0.0 {
        return Err(ScoringError::ZeroVector);
    }
    Ok((dot / (nv.sqrt() * ne.sqrt())).clamp(-1.0, 1.0))
}

/// How per-level scores of a pixel are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LevelAggregation {
    #[default]
    Mean,
    Max,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScoringConfig {
    pub levels: usize,
    pub aggregation: LevelAggregation,
    /// Patches per provider call.
    pub batch_size: usize,
}

impl Default for ScoringConfig {
    fn default() -> Self {
        Self {
            levels: 3,
            aggregation: LevelAggregation::Mean,
            batch_size: 64,
        }
    }
}

/// Patch scores of one level: `scores[((h - 1) * side + (w - 1)) * channels + e]`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelScores {
    pub level: usize,
    pub channels: usize,
    pub scores: Vec<f64>,
}

impl LevelScores {
    pub fn side(&self) -> usize {
        1 << (self.level - 1)
    }

    pub fn get(&self, h: usize, w: usize, e: usize) -> f64 {
        self.scores[((h - 1) * self.side() + (w - 1)) * self.channels + e]
    }
}

/// Per-pixel, per-channel accumulated score, row-major with channels innermost.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreImage {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ScoreImage {
    pub fn new(height: usize, width: usize, channels: usize, fill: f64) -> Self {
        Self {
            height,
            width,
            channels,
            data: vec![fill; height * width * channels],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }
    pub fn width(&self) -> usize {
        self.width
    }
    pub fn channels(&self) -> usize {
        self.channels
    }

    #[inline]
    pub fn get(&self, p: usize, q: usize, e: usize) -> f64 {
        self.data[(p * self.width + q) * self.channels + e]
    }

    #[inline]
    pub fn set(&mut self, p: usize, q: usize, e: usize, v: f64) {
        self.data[(p * self.width + q) * self.channels + e] = v;
    }

    /// All channel scores of pixel `(p, q)`.
    #[inline]
    pub fn pixel(&self, p: usize, q: usize) -> &[f64] {
        let i = (p * self.width + q) * self.channels;
        &self.data[i..i + self.channels]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    /// Combines per-level patch scores into pixel scores.
    ///
    /// The per-pixel values are reduced in sorted order, so the result does not depend
    /// on the order of `levels`.
    pub fn from_levels(
        height: usize,
        width: usize,
        levels: &[LevelScores],
        aggregation: LevelAggregation,
    ) -> Result<Self, ScoringError> {
        let channels = levels.first().map_or(0, |l| l.channels);
        for l in levels {
            check_levels(height, width, l.level)?;
            if l.channels != channels {
                return Err(ScoringError::DimensionMismatch(channels, l.channels));
            }
        }
        let n = levels.len();
        let mut out = ScoreImage::new(height, width, channels, 0.0);
        let mut buf = vec![0.0; n];
        for p in 0..height {
            for q in 0..width {
                for e in 0..channels {
                    for (slot, l) in buf.iter_mut().zip(levels) {
                        let side = l.side();
                        let h = p / (height / side) + 1;
                        let w = q / (width / side) + 1;
                        *slot = l.get(h, w, e);
                    }
                    out.set(p, q, e, combine(&mut buf, aggregation));
                }
            }
        }
        Ok(out)
    }
}

fn combine(values: &mut [f64], aggregation: LevelAggregation) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.sort_by(f64::total_cmp);
    match aggregation {
        LevelAggregation::Mean => values.iter().sum::<f64>() / values.len() as f64,
        LevelAggregation::Max => values[values.len() - 1],
    }
}

/// Patch-level cosine scores for every level of `pyramid`.
pub fn score_levels<P: EmbeddingProvider + ?Sized>(
    pyramid: &PatchPyramid,
    attrs: &AttributeEmbeddings,
    provider: &P,
    batch_size: usize,
) -> Result<Vec<LevelScores>, ScoringError> {
    let channels = attrs.len();
    let batch_size = batch_size.max(1);
    let mut out = Vec::with_capacity(pyramid.levels.len());
    for patches in &pyramid.levels {
        let level = patches.first().map_or(1, |p| p.level);
        let mut scores = Vec::with_capacity(patches.len() * channels);
        for chunk in patches.chunks(batch_size) {
            let images: Vec<RgbImage> = chunk.iter().map(|p| p.image.clone()).collect();
            let fail = |source| ScoringError::ProviderFailure {
                level,
                h: chunk[0].h,
                w: chunk[0].w,
                source,
            };
            let vectors = provider.embed_images(&images).map_err(fail)?;
            if vectors.len() != chunk.len() {
                return Err(fail(ProviderError::CountMismatch {
                    expected: chunk.len(),
                    got: vectors.len(),
                }));
            }
            for v in &vectors {
                for e in attrs.vectors() {
                    scores.push(similarity(v, e)?);
                }
            }
        }
        out.push(LevelScores {
            level,
            channels,
            scores,
        });
    }
    Ok(out)
}

/// Scores every pixel of `image` against every attribute channel.
pub fn score_observation<P: EmbeddingProvider + ?Sized>(
    image: &RgbImage,
    attrs: &AttributeEmbeddings,
    provider: &P,
    config: &ScoringConfig,
) -> Result<ScoreImage, ScoringError> {
    let pyramid = partition(image, config.levels, provider.input_size())?;
    let levels = score_levels(&pyramid, attrs, provider, config.batch_size)?;
    ScoreImage::from_levels(pyramid.height, pyramid.width, &levels, config.aggregation)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn partition_counts() {
        let img = RgbImage::new(64, 64);
        let one = partition(&img, 1, None).unwrap();
        assert_eq!(one.patch_count(), 1);
        assert_eq!(one.levels[0][0].image.dimensions(), (64, 64));
        let three = partition(&img, 3, None).unwrap();
        assert_eq!(three.patch_count(), 1 + 4 + 16);
        assert!(three.levels[2].iter().all(|p| p.image.dimensions() == (16, 16)));
        assert_eq!(three.levels[2][5].rows, 16..32);
        assert_eq!(three.levels[2][5].cols, 16..32);
    }

    #[test]
    fn partition_rejects_indivisible() {
        let img = RgbImage::new(63, 63);
        assert!(matches!(
            partition(&img, 3, None),
            Err(ScoringError::IndivisibleImage { .. })
        ));
        assert!(matches!(
            partition(&RgbImage::new(64, 64), 5, None),
            Err(ScoringError::InvalidLevels(5))
        ));
    }

    #[test]
    fn partition_resizes() {
        let img = RgbImage::new(64, 32);
        let pyr = partition(&img, 2, Some((8, 8))).unwrap();
        assert!(pyr.levels.iter().flatten().all(|p| p.image.dimensions() == (8, 8)));
    }

    #[test]
    fn level_tiles_cover_image_exactly() {
        let pyr = partition(&RgbImage::new(32, 48), 3, None).unwrap();
        for patches in &pyr.levels {
            let mut hits = vec![0u8; 48 * 32];
            for p in patches {
                for r in p.rows.clone() {
                    for c in p.cols.clone() {
                        hits[r * 32 + c] += 1;
                    }
                }
            }
            assert!(hits.iter().all(|&h| h == 1));
        }
    }

    #[test]
    fn patch_index_examples() {
        assert_eq!(patch_index(63, 5, 1, 64, 64).unwrap(), (1, 1));
        assert_eq!(patch_index(40, 20, 3, 64, 64).unwrap(), (3, 2));
        for k in 1..=4 {
            assert_eq!(patch_index(0, 0, k, 64, 64).unwrap(), (1, 1));
        }
        assert!(patch_index(64, 0, 1, 64, 64).is_err());
    }

    #[test]
    fn similarity_examples() {
        assert_relative_eq!(similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert_relative_eq!(
            similarity(&[1.0, 2.0, 2.0], &[2.0, 1.0, 2.0]).unwrap(),
            8.0 / 9.0,
            max_relative = 1e-12
        );
        assert_eq!(similarity(&[0.0, 0.0], &[1.0, 0.0]), Err(ScoringError::ZeroVector));
    }

    #[test]
    fn two_level_mean_by_hand() {
        let l1 = LevelScores {
            level: 1,
            channels: 1,
            scores: vec![0.2],
        };
        let l2 = LevelScores {
            level: 2,
            channels: 1,
            scores: vec![0.6, 0.0, 0.0, 0.0],
        };
        let s = ScoreImage::from_levels(4, 4, &[l1.clone(), l2.clone()], LevelAggregation::Mean)
            .unwrap();
        assert_relative_eq!(s.get(0, 0, 0), 0.4, max_relative = 1e-12);
        assert_relative_eq!(s.get(3, 3, 0), 0.1, max_relative = 1e-12);
        let m = ScoreImage::from_levels(4, 4, &[l1, l2], LevelAggregation::Max).unwrap();
        assert_eq!(m.get(0, 0, 0), 0.6);
        assert_eq!(m.get(3, 3, 0), 0.2);
    }
}
