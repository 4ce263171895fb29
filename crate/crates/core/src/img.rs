//! Planar RGB image buffers for linear-light radiance and display-referred
//! LDR data, with conversions into the tensor engine.

use thiserror::Error;

use crate::tensor::Tensor;
use crate::Scalar;

#[derive(Debug, Error)]
pub enum ImageError {
    #[error("radiance map contains a negative value at pixel {index}: {value}")]
    NegativeRadiance { index: usize, value: f32 },
    #[error("non-finite value at pixel {index}")]
    NonFinite { index: usize },
    #[error("LDR value out of [0,1] at pixel {index}: {value}")]
    OutOfRange { index: usize, value: f32 },
    #[error("buffer length {got} does not match {width}x{height}x3")]
    BadLength {
        got: usize,
        width: usize,
        height: usize,
    },
    #[error("tensor shape {0:?} is not a 3-channel image")]
    BadTensorShape(Vec<usize>),
}

/// Linear-light radiance map: three planar channels of nonnegative floats.
#[derive(Debug, Clone, PartialEq)]
pub struct HdrImage {
    width: usize,
    height: usize,
    /// Planar layout: `data[c*w*h + y*w + x]`.
    data: Vec<f32>,
}

impl HdrImage {
    pub fn new(width: usize, height: usize, data: Vec<f32>) -> Result<Self, ImageError> {
        if data.len() != width * height * 3 {
            return Err(ImageError::BadLength {
                got: data.len(),
                width,
                height,
            });
        }
        for (index, &value) in data.iter().enumerate() {
            if !value.is_finite() {
                return Err(ImageError::NonFinite { index });
            }
            if value < 0.0 {
                return Err(ImageError::NegativeRadiance { index, value });
            }
        }
        Ok(HdrImage {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        HdrImage {
            width,
            height,
            data: vec![0.0; width * height * 3],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.width * self.height..(c + 1) * self.width * self.height]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let plane = self.width * self.height;
        let off = y * self.width + x;
        [
            self.data[off],
            self.data[plane + off],
            self.data[2 * plane + off],
        ]
    }

    /// Exposure-scaled copy `H * t`.
    pub fn scaled(&self, t: f32) -> HdrImage {
        HdrImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| v * t).collect(),
        }
    }

    /// Rec.709 luminance plane.
    pub fn luminance(&self) -> Vec<f32> {
        let plane = self.width * self.height;
        (0..plane)
            .map(|i| {
                0.2126 * self.data[i] + 0.7152 * self.data[plane + i] + 0.0722 * self.data[2 * plane + i]
            })
            .collect()
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> HdrImage {
        let mut data = Vec::with_capacity(w * h * 3);
        for c in 0..3 {
            let chan = self.channel(c);
            for y in 0..h {
                let row = &chan[(y0 + y) * self.width + x0..(y0 + y) * self.width + x0 + w];
                data.extend_from_slice(row);
            }
        }
        HdrImage {
            width: w,
            height: h,
            data,
        }
    }

    /// (1,3,H,W) tensor view for the network.
    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new(
            vec![1, 3, self.height, self.width],
            self.data.iter().map(|&v| crate::sc(v as f64)).collect(),
        )
    }

    /// Rebuild from a (1,3,H,W) or (3,H,W) tensor, clamping tiny negative
    /// round-off to zero.
    pub fn from_tensor<T: Scalar>(t: &Tensor<T>) -> Result<Self, ImageError> {
        let shape = t.shape();
        let (c, h, w) = match shape.len() {
            4 if shape[0] == 1 && shape[1] == 3 => (3, shape[2], shape[3]),
            3 if shape[0] == 3 => (3, shape[1], shape[2]),
            _ => return Err(ImageError::BadTensorShape(shape.to_vec())),
        };
        let _ = c;
        let data = t
            .data()
            .iter()
            .map(|v| (v.to_f64().unwrap_or(0.0) as f32).max(0.0))
            .collect();
        HdrImage::new(w, h, data)
    }
}

/// Display-referred image with values in [0,1]; `quantized` marks data on
/// the 8-bit lattice {0, 1/255, ..., 1}.
#[derive(Debug, Clone, PartialEq)]
pub struct LdrImage {
    width: usize,
    height: usize,
    data: Vec<f32>,
    quantized: bool,
}

impl LdrImage {
    pub fn new(
        width: usize,
        height: usize,
        data: Vec<f32>,
        quantized: bool,
    ) -> Result<Self, ImageError> {
        if data.len() != width * height * 3 {
            return Err(ImageError::BadLength {
                got: data.len(),
                width,
                height,
            });
        }
        for (index, &value) in data.iter().enumerate() {
            if !(0.0..=1.0).contains(&value) {
                return Err(ImageError::OutOfRange { index, value });
            }
        }
        Ok(LdrImage {
            width,
            height,
            data,
            quantized,
        })
    }

    pub(crate) fn new_unchecked(
        width: usize,
        height: usize,
        data: Vec<f32>,
        quantized: bool,
    ) -> Self {
        LdrImage {
            width,
            height,
            data,
            quantized,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_quantized(&self) -> bool {
        self.quantized
    }

    pub fn channel(&self, c: usize) -> &[f32] {
        &self.data[c * self.width * self.height..(c + 1) * self.width * self.height]
    }

    #[inline]
    pub fn pixel(&self, x: usize, y: usize) -> [f32; 3] {
        let plane = self.width * self.height;
        let off = y * self.width + x;
        [
            self.data[off],
            self.data[plane + off],
            self.data[2 * plane + off],
        ]
    }

    /// Per-pixel lightness: max over the RGB channels.
    pub fn lightness(&self) -> Vec<f32> {
        let plane = self.width * self.height;
        (0..plane)
            .map(|i| {
                self.data[i]
                    .max(self.data[plane + i])
                    .max(self.data[2 * plane + i])
            })
            .collect()
    }

    pub fn crop(&self, x0: usize, y0: usize, w: usize, h: usize) -> LdrImage {
        let mut data = Vec::with_capacity(w * h * 3);
        for c in 0..3 {
            let chan = self.channel(c);
            for y in 0..h {
                let row = &chan[(y0 + y) * self.width + x0..(y0 + y) * self.width + x0 + w];
                data.extend_from_slice(row);
            }
        }
        LdrImage {
            width: w,
            height: h,
            data,
            quantized: self.quantized,
        }
    }

    pub fn to_tensor<T: Scalar>(&self) -> Tensor<T> {
        Tensor::new(
            vec![1, 3, self.height, self.width],
            self.data.iter().map(|&v| crate::sc(v as f64)).collect(),
        )
    }

    /// Interleaved 8-bit RGB rows, for PNG/JPEG encoders.
    pub fn to_rgb8(&self) -> Vec<u8> {
        let plane = self.width * self.height;
        let mut out = Vec::with_capacity(plane * 3);
        for i in 0..plane {
            for c in 0..3 {
                out.push((self.data[c * plane + i] * 255.0 + 0.5).floor() as u8);
            }
        }
        out
    }

    /// Build from interleaved 8-bit RGB (decoder output); lands on the lattice.
    pub fn from_rgb8(width: usize, height: usize, rgb: &[u8]) -> Result<Self, ImageError> {
        if rgb.len() != width * height * 3 {
            return Err(ImageError::BadLength {
                got: rgb.len(),
                width,
                height,
            });
        }
        let plane = width * height;
        let mut data = vec![0.0f32; plane * 3];
        for i in 0..plane {
            for c in 0..3 {
                data[c * plane + i] = rgb[i * 3 + c] as f32 / 255.0;
            }
        }
        Ok(LdrImage {
            width,
            height,
            data,
            quantized: true,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hdr_rejects_negative_values() {
        let err = HdrImage::new(1, 1, vec![0.5, -0.1, 0.2]).unwrap_err();
        assert!(matches!(err, ImageError::NegativeRadiance { index: 1, .. }));
    }

    #[test]
    fn ldr_rejects_out_of_range() {
        assert!(LdrImage::new(1, 1, vec![0.0, 0.5, 1.1], false).is_err());
        assert!(LdrImage::new(1, 1, vec![0.0, 0.5, 1.0], false).is_ok());
    }

    #[test]
    fn lightness_is_channel_max() {
        let img = LdrImage::new(1, 1, vec![0.2, 0.9, 0.4], false).unwrap();
        assert_eq!(img.lightness(), vec![0.9]);
    }

    #[test]
    fn rgb8_round_trip_lattice() {
        let img = LdrImage::new(2, 1, vec![0.0, 1.0, 0.5, 0.25, 0.75, 1.0], false).unwrap();
        let bytes = img.to_rgb8();
        let back = LdrImage::from_rgb8(2, 1, &bytes).unwrap();
        assert!(back.is_quantized());
        for &v in back.data() {
            assert!((v * 255.0 - (v * 255.0).round()).abs() < 1e-9);
        }
    }

    #[test]
    fn crop_extracts_planar_window() {
        let mut data = Vec::new();
        for c in 0..3 {
            for i in 0..16 {
                data.push((c * 16 + i) as f32);
            }
        }
        let img = HdrImage::new(4, 4, data).unwrap();
        let crop = img.crop(1, 1, 2, 2);
        assert_eq!(crop.channel(0), &[5.0, 6.0, 9.0, 10.0]);
        assert_eq!(crop.channel(2), &[37.0, 38.0, 41.0, 42.0]);
    }
}
