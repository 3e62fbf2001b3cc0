use std::fs::File;
use std::io::BufWriter;

use lumafuse::image::{load_raster, mean_luminance, save_raster, BitDepth};
use lumafuse::{Error, Raster};
use proptest::prelude::*;
use tempfile::tempdir;

fn write_png(
    path: &std::path::Path,
    width: u32,
    height: u32,
    color: png::ColorType,
    depth: png::BitDepth,
    bytes: &[u8],
) {
    let file = BufWriter::new(File::create(path).unwrap());
    let mut encoder = png::Encoder::new(file, width, height);
    encoder.set_color(color);
    encoder.set_depth(depth);
    let mut writer = encoder.write_header().unwrap();
    writer.write_image_data(bytes).unwrap();
}

#[test]
fn eight_bit_png_samples_map_to_unit_range() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("px.png");
    write_png(&path, 1, 1, png::ColorType::Rgb, png::BitDepth::Eight, &[255, 0, 128]);
    let img = load_raster(&path).unwrap();
    assert_eq!((img.width(), img.height()), (1, 1));
    assert_eq!(img.data(), &[1.0, 0.0, 128.0 / 255.0]);
}

#[test]
fn sixteen_bit_png_is_big_endian() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("px16.png");
    write_png(
        &path,
        1,
        1,
        png::ColorType::Rgb,
        png::BitDepth::Sixteen,
        &[0xff, 0xff, 0x00, 0x00, 0x80, 0x00],
    );
    let img = load_raster(&path).unwrap();
    assert_eq!(img.data(), &[1.0, 0.0, 32768.0 / 65535.0]);
}

#[test]
fn grayscale_png_is_rejected() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("gray.png");
    write_png(&path, 2, 1, png::ColorType::Grayscale, png::BitDepth::Eight, &[10, 20]);
    assert!(matches!(load_raster(&path), Err(Error::ChannelCount { .. })));
}

#[test]
fn unknown_extension_is_rejected() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("img.bmp");
    std::fs::write(&path, b"BM").unwrap();
    assert!(matches!(load_raster(&path), Err(Error::UnsupportedFormat { .. })));
    let img = Raster::filled(1, 1, 0.5);
    assert!(save_raster(&img, &path, BitDepth::Eight).is_err());
}

#[test]
fn handwritten_ppm_with_comment_loads() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("a.ppm");
    let mut bytes = b"P6\n# made by hand\n2 1\n255\n".to_vec();
    bytes.extend_from_slice(&[0, 51, 102, 153, 204, 255]);
    std::fs::write(&path, bytes).unwrap();
    let img = load_raster(&path).unwrap();
    assert_eq!(img.data(), &[0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
}

#[test]
fn truncated_ppm_is_an_error() {
    let dir = tempdir().unwrap();
    let path = dir.path().join("short.ppm");
    std::fs::write(&path, b"P6\n2 2\n255\n\x00\x01").unwrap();
    assert!(load_raster(&path).is_err());
}

#[test]
fn missing_file_reports_the_path() {
    let err = load_raster("/nonexistent/dir/x.png").unwrap_err();
    assert!(err.to_string().contains("/nonexistent/dir/x.png"));
}

fn raster_strategy() -> impl Strategy<Value = Raster> {
    (1usize..6, 1usize..6).prop_flat_map(|(w, h)| {
        prop::collection::vec(0.0f64..=1.0, w * h * 3).prop_map(move |data| Raster::new(w, h, data).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn round_trip_error_is_half_a_step(img in raster_strategy(), ext in prop::sample::select(vec!["png", "ppm"]), sixteen in any::<bool>()) {
        let depth = if sixteen { BitDepth::Sixteen } else { BitDepth::Eight };
        let dir = tempdir().unwrap();
        let path = dir.path().join(format!("rt.{ext}"));
        save_raster(&img, &path, depth).unwrap();
        let back = load_raster(&path).unwrap();
        prop_assert!(img.same_shape(&back));
        let half_step = 0.5 / depth.max_value() as f64 + 1e-12;
        for (a, b) in img.data().iter().zip(back.data()) {
            prop_assert!((a - b).abs() <= half_step);
        }
        // Saving what was loaded is lossless.
        let again = dir.path().join(format!("again.{ext}"));
        save_raster(&back, &again, depth).unwrap();
        let reloaded = load_raster(&again).unwrap();
        prop_assert_eq!(reloaded.data(), back.data());
    }

    #[test]
    fn mean_luminance_is_linear(img in raster_strategy(), s in -2.0f64..2.0, t in -1.0f64..1.0) {
        let scaled = img.map(|v| s * v + t);
        let expected = s * mean_luminance(&img) + t;
        prop_assert!((mean_luminance(&scaled) - expected).abs() < 1e-12);
    }
}
