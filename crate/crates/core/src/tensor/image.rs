use std::path::Path;

use image::{Rgb, RgbImage};

use super::{FeatureMap, Rect};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// RGB image with values in `[0, 1]`, stored channel-major like [`FeatureMap`].
#[derive(Debug, Clone, PartialEq)]
pub struct Image<T> {
    width: usize,
    height: usize,
    data: Vec<T>,
}

impl<T: Real> Image<T> {
    pub fn new(width: usize, height: usize, data: Vec<T>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument(format!(
                "image dims must be positive, got {width}x{height}"
            )));
        }
        if data.len() != 3 * width * height {
            return Err(Error::dims(3 * width * height, data.len()));
        }
        if let Some(index) = data
            .iter()
            .position(|v| !(v.is_finite() && *v >= T::zero() && *v <= T::one()))
        {
            return Err(Error::InvalidArgument(format!(
                "image value at {index} outside [0,1]"
            )));
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    /// Builds an image from `f(x, y) -> [r, g, b]`.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> [T; 3]) -> Result<Self> {
        let plane = width * height;
        let mut data = vec![T::zero(); 3 * plane];
        for y in 0..height {
            for x in 0..width {
                let px = f(x, y);
                for (c, v) in px.into_iter().enumerate() {
                    data[c * plane + y * width + x] = v;
                }
            }
        }
        Self::new(width, height, data)
    }

    pub fn from_rgb8(img: &RgbImage) -> Result<Self> {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let scale = T::lit(1.0 / 255.0);
        Self::from_fn(w, h, |x, y| {
            let Rgb(p) = *img.get_pixel(x as u32, y as u32);
            p.map(|v| T::lit(v as f64) * scale)
        })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let img = image::open(path)?.to_rgb8();
        Self::from_rgb8(&img)
    }

    /// Quantizes to 8 bits per channel (round to nearest).
    pub fn to_rgb8(&self) -> RgbImage {
        RgbImage::from_fn(self.width as u32, self.height as u32, |x, y| {
            let p = self.pixel(x as usize, y as usize);
            Rgb(p.map(|v| (v.to_f64_lossy() * 255.0).round().clamp(0.0, 255.0) as u8))
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn pixel(&self, x: usize, y: usize) -> [T; 3] {
        let plane = self.width * self.height;
        let i = y * self.width + x;
        [self.data[i], self.data[plane + i], self.data[2 * plane + i]]
    }

    pub fn full_rect(&self) -> Rect {
        Rect::full(self.width, self.height)
    }

    /// The image as a 3-channel feature map, the input of the first layer.
    pub fn to_feature_map(&self) -> FeatureMap<T> {
        FeatureMap::from_parts_unchecked(self.width, self.height, 3, self.data.clone(), true)
    }

    pub fn crop(&self, rect: &Rect) -> Result<Self> {
        let fm = self.to_feature_map().crop(rect)?;
        Ok(Image {
            width: fm.width(),
            height: fm.height(),
            data: fm.into_data(),
        })
    }

    /// Bilinear resampling with half-pixel centers and edge clamping.
    pub fn resize_bilinear(&self, width: usize, height: usize) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidArgument("resize target must be positive".into()));
        }
        if width == self.width && height == self.height {
            return Ok(self.clone());
        }
        let xs = sample_axis::<T>(self.width, width);
        let ys = sample_axis::<T>(self.height, height);
        let plane_in = self.width * self.height;
        let mut data = Vec::with_capacity(3 * width * height);
        for c in 0..3 {
            let src = &self.data[c * plane_in..(c + 1) * plane_in];
            for &(y0, y1, ty) in &ys {
                let (r0, r1) = (&src[y0 * self.width..], &src[y1 * self.width..]);
                for &(x0, x1, tx) in &xs {
                    let top = r0[x0] + (r0[x1] - r0[x0]) * tx;
                    let bottom = r1[x0] + (r1[x1] - r1[x0]) * tx;
                    let v = top + (bottom - top) * ty;
                    data.push(v.max(T::zero()).min(T::one()));
                }
            }
        }
        Ok(Image {
            width,
            height,
            data,
        })
    }

    /// Target dimensions when the longer side is resized to `long_side`,
    /// preserving aspect ratio (short side rounded half up, at least 1).
    pub fn dims_for_long_side(&self, long_side: usize) -> (usize, usize) {
        let (w, h) = (self.width, self.height);
        let round_div = |num: usize, den: usize| ((2 * num + den) / (2 * den)).max(1);
        if w >= h {
            (long_side, round_div(h * long_side, w))
        } else {
            (round_div(w * long_side, h), long_side)
        }
    }

    pub fn resize_long_side(&self, long_side: usize) -> Result<Self> {
        let (w, h) = self.dims_for_long_side(long_side);
        self.resize_bilinear(w, h)
    }

    pub fn save_png(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_rgb8().save_with_format(path, image::ImageFormat::Png)?;
        Ok(())
    }
}

fn sample_axis<T: Real>(src: usize, dst: usize) -> Vec<(usize, usize, T)> {
    let ratio = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let s = ((i as f64 + 0.5) * ratio - 0.5).clamp(0.0, (src - 1) as f64);
            let i0 = s.floor() as usize;
            let i1 = (i0 + 1).min(src - 1);
            (i0, i1, T::lit(s - i0 as f64))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: usize, h: usize) -> Image<f64> {
        Image::from_fn(w, h, |x, y| {
            [
                x as f64 / (w - 1).max(1) as f64,
                y as f64 / (h - 1).max(1) as f64,
                0.25,
            ]
        })
        .unwrap()
    }

    #[test]
    fn long_side_dims_follow_aspect_ratio() {
        let img = gradient(1000, 750);
        assert_eq!(img.dims_for_long_side(550), (550, 413));
        assert_eq!(img.dims_for_long_side(800), (800, 600));
        assert_eq!(img.dims_for_long_side(1050), (1050, 788));
        let tall = gradient(30, 60);
        assert_eq!(tall.dims_for_long_side(20), (10, 20));
    }

    #[test]
    fn identity_resize_is_noop() {
        let img = gradient(7, 5);
        assert_eq!(img.resize_bilinear(7, 5).unwrap(), img);
    }

    #[test]
    fn upscale_of_constant_is_constant() {
        let img = Image::from_fn(3, 2, |_, _| [0.3, 0.6, 0.9]).unwrap();
        let big = img.resize_bilinear(11, 7).unwrap();
        assert!(big.data()[..77].iter().all(|v| (*v - 0.3f64).abs() < 1e-15));
    }

    #[test]
    fn half_pixel_downscale_averages_pairs() {
        let img = Image::from_fn(4, 1, |x, _| [x as f64 / 3.0, 0.0, 0.0]).unwrap();
        let small = img.resize_bilinear(2, 1).unwrap();
        assert!((small.pixel(0, 0)[0] - 0.5 / 3.0).abs() < 1e-12);
        assert!((small.pixel(1, 0)[0] - 2.5 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_out_of_range_values() {
        assert!(Image::<f64>::new(1, 1, vec![0.0, 1.5, 0.0]).is_err());
    }

    #[test]
    fn rgb8_round_trip() {
        let img = Image::<f64>::from_fn(4, 3, |x, y| {
            [x as f64 * 51.0 / 255.0, y as f64 * 85.0 / 255.0, 1.0]
        })
        .unwrap();
        let back = Image::<f64>::from_rgb8(&img.to_rgb8()).unwrap();
        for (a, b) in img.data().iter().zip(back.data()) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
