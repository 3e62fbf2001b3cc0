//! Separable Gaussian filtering with symmetric border reflection.
//!
//! Out-of-range indices reflect about the image edge including the edge
//! sample (`... c b a | a b c ...`), repeating with period `2n` for kernels
//! wider than the image.

/// Normalized 1-D Gaussian taps for a window of `size` samples.
pub fn gaussian_kernel(size: usize, sigma: f64) -> Vec<f64> {
    assert!(size % 2 == 1, "kernel size must be odd");
    let half = (size / 2) as f64;
    let taps: Vec<f64> = (0..size)
        .map(|i| {
            let d = i as f64 - half;
            (-(d * d) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Kernel covering +-3 sigma, used for general-purpose blurring.
pub fn gaussian_kernel_for_sigma(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    gaussian_kernel(2 * radius + 1, sigma)
}

/// Maps a possibly out-of-range index into `0..n` by symmetric reflection.
pub fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}

/// Filters a row-major plane with `kernel` horizontally then vertically.
pub fn blur_plane(plane: &[f64], width: usize, height: usize, kernel: &[f64]) -> Vec<f64> {
    debug_assert_eq!(plane.len(), width * height);
    let half = (kernel.len() / 2) as isize;
    let mut horizontal = vec![0.0; plane.len()];
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for x in 0..width {
            let mut acc = 0.0;
            for (k, &w) in kernel.iter().enumerate() {
                acc += w * row[reflect(x as isize + k as isize - half, width)];
            }
            horizontal[y * width + x] = acc;
        }
    }
    let mut out = vec![0.0; plane.len()];
    for y in 0..height {
        for (k, &w) in kernel.iter().enumerate() {
            let src = reflect(y as isize + k as isize - half, height);
            let src_row = &horizontal[src * width..(src + 1) * width];
            let dst_row = &mut out[y * width..(y + 1) * width];
            for (d, s) in dst_row.iter_mut().zip(src_row) {
                *d += w * s;
            }
        }
    }
    out
}
