//! Dense real-valued images in `[0, 1]`.

use crate::error::{Error, Result};

/// Row-major, channel-interleaved pixel grid. Pixel `(row, col, ch)` lives at
/// `data[(row * width + col) * channels + ch]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        Image {
            height,
            width,
            channels,
            data: vec![0.0; height * width * channels],
        }
    }

    pub fn from_vec(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height * width * channels != data.len() {
            return Err(Error::Shape(format!(
                "image {height}x{width}x{channels} needs {} values, got {}",
                height * width * channels,
                data.len()
            )));
        }
        Ok(Image {
            height,
            width,
            channels,
            data,
        })
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

    pub fn pixel_count(&self) -> usize {
        self.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, ch: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + ch]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, ch: usize, value: f64) {
        self.data[(row * self.width + col) * self.channels + ch] = value;
    }

    pub fn same_shape(&self, other: &Image) -> bool {
        self.height == other.height && self.width == other.width && self.channels == other.channels
    }
}

/// Concatenates equal-shape images left to right into one strip.
pub fn hstack(images: &[&Image]) -> Result<Image> {
    let first = images
        .first()
        .ok_or_else(|| Error::Shape("hstack of zero images".into()))?;
    if images.iter().any(|img| !img.same_shape(first)) {
        return Err(Error::Shape("hstack images must share one shape".into()));
    }
    let (h, w, c) = (first.height(), first.width(), first.channels());
    let mut strip = Image::zeros(h, w * images.len(), c);
    for (i, img) in images.iter().enumerate() {
        for row in 0..h {
            for col in 0..w {
                for ch in 0..c {
                    strip.set(row, i * w + col, ch, img.get(row, col, ch));
                }
            }
        }
    }
    Ok(strip)
}

/// Unsquared Euclidean distance between two equal-shape images.
pub fn image_distance(a: &Image, b: &Image) -> f64 {
    squared_image_distance(a, b).sqrt()
}

/// Squared Euclidean pixel distance, the route-matching similarity metric.
pub fn squared_image_distance(a: &Image, b: &Image) -> f64 {
    debug_assert!(a.same_shape(b));
    a.data()
        .iter()
        .zip(b.data())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}
