//! PNG export/import for [0,1] grayscale planes.

use std::path::Path;

use image::{ImageBuffer, Luma, Rgb};
use ndarray::{Array2, ArrayView2};

pub use image::ImageError;

/// Writes `plane` (values clamped to [0,1]) as 16-bit grayscale.
pub fn save_gray16(path: impl AsRef<Path>, plane: ArrayView2<f32>) -> Result<(), ImageError> {
    let (h, w) = plane.dim();
    let img = ImageBuffer::<Luma<u16>, Vec<u16>>::from_fn(w as u32, h as u32, |x, y| {
        let v = plane[[y as usize, x as usize]].clamp(0.0, 1.0);
        Luma([(v * u16::MAX as f32).round() as u16])
    });
    img.save(path)
}

/// Reads any grayscale-convertible image into [0,1].
pub fn load_gray(path: impl AsRef<Path>) -> Result<Array2<f32>, ImageError> {
    let img = image::open(path)?.into_luma16();
    let (w, h) = img.dimensions();
    Ok(Array2::from_shape_fn((h as usize, w as usize), |(y, x)| {
        img.get_pixel(x as u32, y as u32)[0] as f32 / u16::MAX as f32
    }))
}

/// Writes three [0,1] channel planes of equal shape as 8-bit RGB.
pub fn save_rgb(path: impl AsRef<Path>, channels: [ArrayView2<f32>; 3]) -> Result<(), ImageError> {
    let (h, w) = channels[0].dim();
    let img = ImageBuffer::<Rgb<u8>, Vec<u8>>::from_fn(w as u32, h as u32, |x, y| {
        let px = |c: usize| (channels[c][[y as usize, x as usize]].clamp(0.0, 1.0) * 255.0).round() as u8;
        Rgb([px(0), px(1), px(2)])
    });
    img.save(path)
}
