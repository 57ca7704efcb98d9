use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::image::{ImageTensor, ValueRange};

const EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

pub fn is_image_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .is_some_and(|e| EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
}

/// Image files directly inside `dir`, sorted by file name.
pub fn list_images(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::data(dir, e.to_string()))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && is_image_file(p))
        .collect();
    out.sort();
    Ok(out)
}

/// Decodes a PNG or JPEG file into a unit-range tensor.
pub fn load_image(path: impl AsRef<Path>) -> Result<ImageTensor> {
    let path = path.as_ref();
    let decoded = image::open(path).map_err(|e| Error::data(path, e.to_string()))?;
    let rgb = decoded.into_rgb32f();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let raw = rgb.as_raw();
    let mut data = vec![0.0; 3 * h * w];
    for (i, px) in raw.chunks_exact(3).enumerate() {
        for c in 0..3 {
            data[c * h * w + i] = f64::from(px[c]).clamp(0.0, 1.0);
        }
    }
    ImageTensor::new(h, w, ValueRange::Unit, data)
}

/// Writes an 8-bit RGB file; the format follows the extension.
pub fn save_image(img: &ImageTensor, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let unit = img.to_range(ValueRange::Unit);
    let (h, w) = (unit.height(), unit.width());
    let mut buf = image::RgbImage::new(w as u32, h as u32);
    for y in 0..h {
        for x in 0..w {
            let px = [0, 1, 2].map(|c| (unit.get(c, y, x).clamp(0.0, 1.0) * 255.0).round() as u8);
            buf.put_pixel(x as u32, y as u32, image::Rgb(px));
        }
    }
    buf.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_round_trip_within_quantization() {
        let dir = tempfile::tempdir().unwrap();
        let img = ImageTensor::from_fn(5, 7, ValueRange::Unit, |c, y, x| ((c * 31 + y * 7 + x) % 11) as f64 / 10.0).unwrap();
        let p = dir.path().join("a.png");
        save_image(&img, &p).unwrap();
        let back = load_image(&p).unwrap();
        assert_eq!((back.height(), back.width()), (5, 7));
        assert!(back.data().iter().zip(img.data()).all(|(a, b)| (a - b).abs() <= 0.5 / 255.0 + 1e-6));
        std::fs::write(dir.path().join("b.jpg"), b"not a jpeg").unwrap();
        assert!(matches!(load_image(dir.path().join("b.jpg")), Err(Error::Data { .. })));
        assert_eq!(list_images(dir.path()).unwrap().len(), 2);
    }
}
