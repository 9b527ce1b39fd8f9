#![allow(dead_code)]

use std::path::PathBuf;

use qwio_jpeg::image_io::load_grayscale;
use qwio_jpeg::ImagePlane;

pub fn data_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/data").join(name)
}

/// 128x128 downscale of the standard cameraman photograph.
pub fn camera() -> ImagePlane {
    load_grayscale(data_path("camera_128.pgm")).expect("camera fixture")
}

/// Periodic pattern with a hashed noise component.
pub fn texture() -> ImagePlane {
    ImagePlane::from_fn(128, 128, |x, y| {
        let (fx, fy) = (x as f64, y as f64);
        let hash = ((x * 7 + y * 13) as u64 * 2654435761 % 1000) as f64 / 1000.0 - 0.5;
        128.0 + 50.0 * (fx * 0.35).sin() * (fy * 0.22).cos() + 30.0 * ((fx + fy) * 0.9).sin() + 20.0 * hash
    })
    .unwrap()
}

/// Dark strokes (rings, columns, a diagonal) on a light background.
pub fn lineart() -> ImagePlane {
    ImagePlane::from_fn(128, 128, |x, y| {
        let (fx, fy) = (x as f64 - 64.0, y as f64 - 64.0);
        let r = (fx * fx + fy * fy).sqrt();
        if (r as i64) % 16 < 2 || x % 32 < 2 || (x as i64 - y as i64).abs() < 2 {
            20.0
        } else {
            235.0
        }
    })
    .unwrap()
}

pub fn test_images() -> Vec<(&'static str, ImagePlane)> {
    vec![("camera", camera()), ("texture", texture()), ("lineart", lineart())]
}

/// Optimum used for the sphere objective, inside the parameter box.
pub const SPHERE_OPTIMUM: [f64; 16] = [1.3, 0.7, 0.9, 1.1, 1.6, 2.0, 0.5, 1.0, 1.2, 0.8, 2.5, 3.0, 1.4, 0.6, 1.8, 2.2];
