//! Three-channel interior sensor image with values in [0, 1].

use std::path::Path;

use super::SimError;

/// RGB image as seen by the interior camera, either rendered synthetically
/// or loaded from disk. Values are interleaved row-major RGB in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct SensorImage {
    width: u32,
    height: u32,
    data: Vec<f32>,
}

impl SensorImage {
    pub fn new(width: u32, height: u32, data: Vec<f32>) -> Result<SensorImage, SimError> {
        if width == 0 || height == 0 {
            return Err(SimError::EmptyImage { width, height });
        }
        let expected = width as usize * height as usize * 3;
        if data.len() != expected {
            return Err(SimError::ImageLength {
                width,
                height,
                expected,
                got: data.len(),
            });
        }
        for (index, &value) in data.iter().enumerate() {
            if !value.is_finite() || !(0.0..=1.0).contains(&value) {
                return Err(SimError::ImageValue { index, value });
            }
        }
        Ok(SensorImage {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: u32, height: u32) -> SensorImage {
        SensorImage {
            width,
            height,
            data: vec![0.0; width as usize * height as usize * 3],
        }
    }

    /// Builds an image by evaluating `f(x, y) -> [r, g, b]` per pixel;
    /// values are clamped to [0, 1].
    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [f32; 3]) -> SensorImage {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                let rgb = f(x, y);
                data.extend(rgb.iter().map(|c| c.clamp(0.0, 1.0)));
            }
        }
        SensorImage {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    fn index(&self, x: u32, y: u32) -> usize {
        (y as usize * self.width as usize + x as usize) * 3
    }

    pub fn get(&self, x: u32, y: u32, channel: usize) -> f32 {
        self.data[self.index(x, y) + channel]
    }

    pub fn set(&mut self, x: u32, y: u32, rgb: [f32; 3]) {
        let i = self.index(x, y);
        for (c, v) in rgb.iter().enumerate() {
            self.data[i + c] = v.clamp(0.0, 1.0);
        }
    }

    /// Mean of the three channels at a pixel.
    pub fn luminance(&self, x: u32, y: u32) -> f64 {
        let i = self.index(x, y);
        (self.data[i] as f64 + self.data[i + 1] as f64 + self.data[i + 2] as f64) / 3.0
    }

    /// Bilinear luminance at sub-pixel coordinates; coordinates are clamped
    /// to the pixel-center span.
    pub fn sample_luminance(&self, u: f64, v: f64) -> f64 {
        let u = u.clamp(0.0, (self.width - 1) as f64);
        let v = v.clamp(0.0, (self.height - 1) as f64);
        let x0 = u.floor() as u32;
        let y0 = v.floor() as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = u - x0 as f64;
        let fy = v - y0 as f64;
        let top = self.luminance(x0, y0) * (1.0 - fx) + self.luminance(x1, y0) * fx;
        let bottom = self.luminance(x0, y1) * (1.0 - fx) + self.luminance(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    pub fn to_rgb8(&self) -> Vec<u8> {
        self.data
            .iter()
            .map(|&v| (v * 255.0).round() as u8)
            .collect()
    }

    pub fn from_rgb8(width: u32, height: u32, bytes: &[u8]) -> Result<SensorImage, SimError> {
        let data = bytes.iter().map(|&b| b as f32 / 255.0).collect();
        SensorImage::new(width, height, data)
    }

    pub fn write_png(&self, path: &Path) -> Result<(), SimError> {
        let buffer = ::image::RgbImage::from_raw(self.width, self.height, self.to_rgb8())
            .expect("raw buffer length matches dimensions");
        buffer.save_with_format(path, ::image::ImageFormat::Png)?;
        Ok(())
    }

    pub fn read_png(path: &Path) -> Result<SensorImage, SimError> {
        let decoded = ::image::open(path)?;
        let rgb = match decoded {
            ::image::DynamicImage::ImageRgb8(rgb) => rgb,
            _ => {
                return Err(SimError::NotRgb8 {
                    path: path.display().to_string(),
                })
            }
        };
        SensorImage::from_rgb8(rgb.width(), rgb.height(), rgb.as_raw())
    }
}
