//! Image containers shared by the renderer, the scorer and the mapper.

pub use image::{Rgb, RgbImage};

/// Row-major depth image in meters (distance along the optical axis).
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: usize, height: usize, fill: f64) -> Self {
        Self {
            width,
            height,
            data: vec![fill; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Option<Self> {
        (data.len() == width * height).then_some(Self {
            width,
            height,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }
}

/// Centre crop of `img` to `width` x `height`; `None` if the crop is larger than the image.
pub fn center_crop(img: &RgbImage, width: u32, height: u32) -> Option<RgbImage> {
    if width > img.width() || height > img.height() {
        return None;
    }
    let x0 = (img.width() - width) / 2;
    let y0 = (img.height() - height) / 2;
    Some(image::imageops::crop_imm(img, x0, y0, width, height).to_image())
}
