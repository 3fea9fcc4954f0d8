//! Dense real-valued images with interleaved channels, plus 8-bit PNG I/O.

use std::path::Path;

use image::{DynamicImage, GrayImage, ImageBuffer, Luma, Rgb, RgbImage};

use crate::error::{Error, Result};

/// Row-major image, channels interleaved per pixel. Values are nominally in
/// `[0, 1]` but signed images (residuals) reuse the same type.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    rows: usize,
    cols: usize,
    channels: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn zeros(rows: usize, cols: usize, channels: usize) -> Self {
        Self::filled(rows, cols, channels, 0.0)
    }

    pub fn filled(rows: usize, cols: usize, channels: usize, value: f64) -> Self {
        Self {
            rows,
            cols,
            channels,
            data: vec![value; rows * cols * channels],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols * channels {
            return Err(Error::DimensionMismatch(format!(
                "buffer of {} values for {rows}x{cols}x{channels} image",
                data.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            channels,
            data,
        })
    }

    pub fn from_fn(
        rows: usize,
        cols: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Self {
        let mut data = Vec::with_capacity(rows * cols * channels);
        for r in 0..rows {
            for c in 0..cols {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self {
            rows,
            cols,
            channels,
            data,
        }
    }

    /// Single-channel image from nested rows.
    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let height = rows.len();
        let width = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != width) {
            return Err(Error::DimensionMismatch("ragged rows".into()));
        }
        Self::from_vec(height, width, 1, rows.concat())
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn shape(&self) -> (usize, usize, usize) {
        (self.rows, self.cols, self.channels)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    fn offset(&self, r: usize, c: usize, ch: usize) -> usize {
        (r * self.cols + c) * self.channels + ch
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize, ch: usize) -> f64 {
        self.data[self.offset(r, c, ch)]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, ch: usize, value: f64) {
        let i = self.offset(r, c, ch);
        self.data[i] = value;
    }

    /// Extracts one channel as a single-channel image.
    pub fn channel(&self, ch: usize) -> Image {
        Image::from_fn(self.rows, self.cols, 1, |r, c, _| self.get(r, c, ch))
    }

    /// Copies a sub-rectangle.
    pub fn crop(&self, top: usize, left: usize, height: usize, width: usize) -> Image {
        Image::from_fn(height, width, self.channels, |r, c, ch| {
            self.get(top + r, left + c, ch)
        })
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Image {
        Image {
            rows: self.rows,
            cols: self.cols,
            channels: self.channels,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn clamped(&self) -> Image {
        self.map(|v| v.clamp(0.0, 1.0))
    }

    /// Rounds every value to the nearest 8-bit level, i.e. what a PNG
    /// round trip would produce.
    pub fn quantized(&self) -> Image {
        self.map(|v| f64::from(to_u8(v)) / 255.0)
    }

    pub fn ensure_same_shape(&self, other: &Image) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch(format!(
                "{:?} vs {:?}",
                self.shape(),
                other.shape()
            )));
        }
        Ok(())
    }

    /// Reads an 8-bit PNG (or any format the decoder knows) as 1 or 3
    /// channels, mapping `v` to `v / 255`.
    pub fn load(path: &Path, channels: usize) -> Result<Image> {
        let img = image::open(path).map_err(|e| match e {
            image::ImageError::IoError(source) => Error::io(path, source),
            other => Error::Decode {
                path: path.to_path_buf(),
                message: other.to_string(),
            },
        })?;
        Self::from_dynamic(&img, channels)
    }

    pub fn from_dynamic(img: &DynamicImage, channels: usize) -> Result<Image> {
        match channels {
            1 => {
                let g = img.to_luma8();
                let (w, h) = g.dimensions();
                let data = g
                    .into_raw()
                    .into_iter()
                    .map(|v| f64::from(v) / 255.0)
                    .collect();
                Image::from_vec(h as usize, w as usize, 1, data)
            }
            3 => {
                let rgb = img.to_rgb8();
                let (w, h) = rgb.dimensions();
                let data = rgb
                    .into_raw()
                    .into_iter()
                    .map(|v| f64::from(v) / 255.0)
                    .collect();
                Image::from_vec(h as usize, w as usize, 3, data)
            }
            n => Err(Error::Parameter(format!("unsupported channel count {n}"))),
        }
    }

    /// Converts to an 8-bit image (values clamped and rounded).
    pub fn to_dynamic(&self) -> Result<DynamicImage> {
        let (w, h) = (self.cols as u32, self.rows as u32);
        let raw: Vec<u8> = self.data.iter().map(|&v| to_u8(v)).collect();
        match self.channels {
            1 => {
                let buf: GrayImage = ImageBuffer::<Luma<u8>, _>::from_raw(w, h, raw)
                    .ok_or_else(|| Error::DimensionMismatch("gray buffer".into()))?;
                Ok(DynamicImage::ImageLuma8(buf))
            }
            3 => {
                let buf: RgbImage = ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, raw)
                    .ok_or_else(|| Error::DimensionMismatch("rgb buffer".into()))?;
                Ok(DynamicImage::ImageRgb8(buf))
            }
            n => Err(Error::Parameter(format!("unsupported channel count {n}"))),
        }
    }

    pub fn save_png(&self, path: &Path) -> Result<()> {
        let bytes = self.to_png_bytes()?;
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn to_png_bytes(&self) -> Result<Vec<u8>> {
        let img = self.to_dynamic()?;
        let mut out = std::io::Cursor::new(Vec::new());
        img.write_to(&mut out, image::ImageFormat::Png)
            .map_err(|e| Error::Decode {
                path: "<memory>".into(),
                message: e.to_string(),
            })?;
        Ok(out.into_inner())
    }
}

#[inline]
pub(crate) fn to_u8(v: f64) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}
