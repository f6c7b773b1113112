//! PNG / PGM / PPM reading and writing for `C×H×W` tensors with values in
//! `[0, 1]`.

use std::path::Path;

use image::{DynamicImage, GrayImage, RgbImage};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Reads an image as `3×H×W` (colour) or `1×H×W` (grayscale) in `[0, 1]`.
pub fn read_image(path: &Path) -> Result<Tensor<f32>> {
    let img = image::open(path)?;
    Ok(from_dynamic(&img))
}

fn from_dynamic(img: &DynamicImage) -> Tensor<f32> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    if img.color().has_color() {
        let rgb = img.to_rgb8();
        let n = w * h;
        let mut data = vec![0.0f32; 3 * n];
        for (i, p) in rgb.pixels().enumerate() {
            for c in 0..3 {
                data[c * n + i] = p[c] as f32 / 255.0;
            }
        }
        Tensor::new(vec![3, h, w], data).expect("finite pixels")
    } else {
        let g = img.to_luma8();
        Tensor::new(vec![1, h, w], g.pixels().map(|p| p[0] as f32 / 255.0).collect()).expect("finite pixels")
    }
}

fn to_u8(v: f32) -> u8 {
    (v.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// Writes a `1×H×W`, `3×H×W` or `H×W` tensor, clamping to `[0, 1]`. The
/// format follows the file extension.
pub fn write_image(path: &Path, image: &Tensor<f32>) -> Result<()> {
    let (c, h, w) = match image.shape() {
        [h, w] => (1, *h, *w),
        [c @ (1 | 3), h, w] => (*c, *h, *w),
        [c, _, _] => return Err(Error::dim("write_image", "0 (channels)", "1 or 3", c)),
        s => return Err(Error::dim("write_image", "rank", "2 or 3", s.len())),
    };
    let d = image.data();
    let n = w * h;
    if c == 1 {
        let buf = GrayImage::from_raw(w as u32, h as u32, d.iter().map(|&v| to_u8(v)).collect())
            .expect("buffer matches extent");
        buf.save(path)?;
    } else {
        let raw = (0..n).flat_map(|i| (0..3).map(move |ch| to_u8(d[ch * n + i]))).collect();
        let buf = RgbImage::from_raw(w as u32, h as u32, raw).expect("buffer matches extent");
        buf.save(path)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_and_pgm_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let rgb = Tensor::from_fn(&[3, 4, 5], |i| (i % 256) as f32 / 255.0);
        let p = dir.path().join("a.png");
        write_image(&p, &rgb).unwrap();
        assert_eq!(read_image(&p).unwrap(), rgb);

        let gray = Tensor::from_fn(&[1, 3, 2], |i| (i * 40) as f32 / 255.0);
        let q = dir.path().join("b.pgm");
        write_image(&q, &gray).unwrap();
        assert_eq!(read_image(&q).unwrap(), gray);
    }
}
