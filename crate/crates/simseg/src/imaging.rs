//! Core raster and mask types, the IoU metric, and mask-guided
//! compositing. Every other module moves pixels through these types.
//!
//! Images are 8-bit RGB, row-major interleaved. Masks are row-major
//! booleans with `true` marking instrument foreground. On disk, images
//! are RGB PNGs and masks are single-channel PNGs with 255 = foreground.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Channel count is fixed: everything in this pipeline is RGB.
pub const CHANNELS: usize = 3;

/// Dimension guard for decoded files. Anything larger is rejected as
/// malformed rather than allocated.
const MAX_DIM: u32 = 16_384;
const MAX_PIXELS: u64 = 1 << 24;

#[derive(Debug, Error)]
pub enum ImagingError {
    #[error("shape mismatch: expected {expected_width}x{expected_height}, got {width}x{height}")]
    ShapeMismatch {
        expected_width: u32,
        expected_height: u32,
        width: u32,
        height: u32,
    },
    #[error("buffer length {actual} does not match {width}x{height} ({expected} expected)")]
    BufferSize {
        width: u32,
        height: u32,
        expected: usize,
        actual: usize,
    },
    #[error("image dimensions {width}x{height} exceed the supported maximum")]
    TooLarge { width: u32, height: u32 },
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image decode/encode error: {0}")]
    Image(#[from] image::ImageError),
}

fn check_dims(width: u32, height: u32) -> Result<(), ImagingError> {
    if width == 0
        || height == 0
        || width > MAX_DIM
        || height > MAX_DIM
        || u64::from(width) * u64::from(height) > MAX_PIXELS
    {
        return Err(ImagingError::TooLarge { width, height });
    }
    Ok(())
}

/// H x W x 3 8-bit color raster, the universal pixel carrier.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterImage {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl RasterImage {
    /// Wrap an interleaved RGB buffer. The length must be exactly
    /// `width * height * 3`.
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self, ImagingError> {
        check_dims(width, height)?;
        let expected = width as usize * height as usize * CHANNELS;
        if data.len() != expected {
            return Err(ImagingError::BufferSize {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Uniform-color image.
    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut data = Vec::with_capacity(n * CHANNELS);
        for _ in 0..n {
            data.extend_from_slice(&rgb);
        }
        Self {
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

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [u8] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<u8> {
        self.data
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * CHANNELS;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    #[inline]
    pub fn set_pixel(&mut self, x: u32, y: u32, rgb: [u8; 3]) {
        let i = (y as usize * self.width as usize + x as usize) * CHANNELS;
        self.data[i..i + 3].copy_from_slice(&rgb);
    }

    fn same_shape(&self, other_w: u32, other_h: u32) -> Result<(), ImagingError> {
        if (self.width, self.height) != (other_w, other_h) {
            return Err(ImagingError::ShapeMismatch {
                expected_width: self.width,
                expected_height: self.height,
                width: other_w,
                height: other_h,
            });
        }
        Ok(())
    }
}

/// H x W boolean foreground map, the segmentation label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    width: u32,
    height: u32,
    data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: u32, height: u32, data: Vec<bool>) -> Result<Self, ImagingError> {
        check_dims(width, height)?;
        let expected = width as usize * height as usize;
        if data.len() != expected {
            return Err(ImagingError::BufferSize {
                width,
                height,
                expected,
                actual: data.len(),
            });
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn filled(width: u32, height: u32, value: bool) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dims(&self) -> (u32, u32) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.data[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    /// Number of foreground pixels.
    pub fn foreground_count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Foreground pixels as a fraction of the image area.
    pub fn foreground_fraction(&self) -> f64 {
        self.foreground_count() as f64 / self.data.len() as f64
    }

    fn same_shape(&self, other_w: u32, other_h: u32) -> Result<(), ImagingError> {
        if (self.width, self.height) != (other_w, other_h) {
            return Err(ImagingError::ShapeMismatch {
                expected_width: self.width,
                expected_height: self.height,
                width: other_w,
                height: other_h,
            });
        }
        Ok(())
    }
}

/// Real-valued image in the model's `[-1, 1]` convention, stored
/// channel-major (CHW).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedTensor {
    pub height: u32,
    pub width: u32,
    pub channels: u32,
    pub data: Vec<f64>,
}

/// Intersection over union of two binary masks.
///
/// Both masks empty counts as perfect agreement and returns 1.0, so
/// all-background test images never produce NaN. Callers that need to
/// surface that convention count such cases separately.
pub fn iou(prediction: &BinaryMask, truth: &BinaryMask) -> Result<f64, ImagingError> {
    prediction.same_shape(truth.width, truth.height)?;
    let mut intersection = 0u64;
    let mut union = 0u64;
    for (&p, &t) in prediction.data.iter().zip(truth.data.iter()) {
        if p && t {
            intersection += 1;
        }
        if p || t {
            union += 1;
        }
    }
    if union == 0 {
        return Ok(1.0);
    }
    Ok(intersection as f64 / union as f64)
}

/// Pixelwise select: foreground where the mask is true, background
/// elsewhere. Hard edges, no feathering.
pub fn composite(
    foreground: &RasterImage,
    mask: &BinaryMask,
    background: &RasterImage,
) -> Result<RasterImage, ImagingError> {
    foreground.same_shape(mask.width, mask.height)?;
    foreground.same_shape(background.width, background.height)?;
    let mut data = Vec::with_capacity(foreground.data.len());
    for (i, &m) in mask.data.iter().enumerate() {
        let src = if m { &foreground.data } else { &background.data };
        data.extend_from_slice(&src[i * CHANNELS..i * CHANNELS + CHANNELS]);
    }
    Ok(RasterImage {
        width: foreground.width,
        height: foreground.height,
        data,
    })
}

/// Affine map from `[0, 255]` intensities to the `[-1, 1]` model range.
pub fn normalize(image: &RasterImage) -> NormalizedTensor {
    let (w, h) = (image.width as usize, image.height as usize);
    let plane = w * h;
    let mut data = vec![0.0; CHANNELS * plane];
    for (i, px) in image.data.chunks_exact(CHANNELS).enumerate() {
        for (c, &v) in px.iter().enumerate() {
            data[c * plane + i] = f64::from(v) / 127.5 - 1.0;
        }
    }
    NormalizedTensor {
        height: image.height,
        width: image.width,
        channels: CHANNELS as u32,
        data,
    }
}

/// Inverse of [`normalize`], clamping into the valid 8-bit range.
pub fn denormalize(t: &NormalizedTensor) -> RasterImage {
    let (w, h) = (t.width as usize, t.height as usize);
    let plane = w * h;
    let channels = t.channels as usize;
    let mut data = vec![0u8; plane * CHANNELS];
    for i in 0..plane {
        for c in 0..CHANNELS.min(channels) {
            let v = ((t.data[c * plane + i] + 1.0) * 127.5).round();
            data[i * CHANNELS + c] = v.clamp(0.0, 255.0) as u8;
        }
    }
    RasterImage {
        width: t.width,
        height: t.height,
        data,
    }
}

/// Decode an RGB image from PNG (or other supported) bytes.
pub fn decode_image(bytes: &[u8]) -> Result<RasterImage, ImagingError> {
    let img = image::load_from_memory(bytes)?;
    check_dims(img.width(), img.height())?;
    let rgb = img.to_rgb8();
    RasterImage::new(rgb.width(), rgb.height(), rgb.into_raw())
}

/// Decode a mask from single-channel PNG bytes. Values of 128 and above
/// count as foreground, so a 255/0 encoding round-trips exactly.
pub fn decode_mask(bytes: &[u8]) -> Result<BinaryMask, ImagingError> {
    let img = image::load_from_memory(bytes)?;
    check_dims(img.width(), img.height())?;
    let gray = img.to_luma8();
    let data = gray.as_raw().iter().map(|&v| v >= 128).collect();
    BinaryMask::new(gray.width(), gray.height(), data)
}

pub fn load_image(path: &Path) -> Result<RasterImage, ImagingError> {
    decode_image(&std::fs::read(path)?)
}

pub fn load_mask(path: &Path) -> Result<BinaryMask, ImagingError> {
    decode_mask(&std::fs::read(path)?)
}

pub fn save_image(image: &RasterImage, path: &Path) -> Result<(), ImagingError> {
    let buf: image::RgbImage =
        image::ImageBuffer::from_raw(image.width, image.height, image.data.clone())
            .expect("buffer length is validated at construction");
    buf.save(path)?;
    Ok(())
}

pub fn save_mask(mask: &BinaryMask, path: &Path) -> Result<(), ImagingError> {
    let raw: Vec<u8> = mask.data.iter().map(|&b| if b { 255 } else { 0 }).collect();
    let buf: image::GrayImage = image::ImageBuffer::from_raw(mask.width, mask.height, raw)
        .expect("buffer length is validated at construction");
    buf.save(path)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_from_bits(width: u32, height: u32, bits: &[u8]) -> BinaryMask {
        BinaryMask::new(width, height, bits.iter().map(|&b| b != 0).collect()).unwrap()
    }

    /// Independent pixel-counting oracle for IoU.
    fn iou_oracle(a: &BinaryMask, b: &BinaryMask) -> f64 {
        let mut inter = 0.0;
        let mut union = 0.0;
        for y in 0..a.height() {
            for x in 0..a.width() {
                if a.get(x, y) && b.get(x, y) {
                    inter += 1.0;
                }
                if a.get(x, y) || b.get(x, y) {
                    union += 1.0;
                }
            }
        }
        if union == 0.0 {
            1.0
        } else {
            inter / union
        }
    }

    #[test]
    fn iou_identical_nonempty_is_one() {
        let m = mask_from_bits(2, 2, &[1, 0, 1, 0]);
        assert_eq!(iou(&m, &m).unwrap(), 1.0);
    }

    #[test]
    fn iou_disjoint_nonempty_is_zero() {
        let a = mask_from_bits(2, 2, &[1, 0, 0, 0]);
        let b = mask_from_bits(2, 2, &[0, 1, 1, 1]);
        assert_eq!(iou(&a, &b).unwrap(), 0.0);
    }

    #[test]
    fn iou_partial_overlap_third() {
        // P = {(0,0),(0,1)}, T = {(0,1),(1,1)}: intersection 1, union 3.
        let p = mask_from_bits(2, 2, &[1, 1, 0, 0]);
        let t = mask_from_bits(2, 2, &[0, 1, 0, 1]);
        assert_eq!(iou(&p, &t).unwrap(), 1.0 / 3.0);
    }

    #[test]
    fn iou_both_empty_is_one() {
        let a = BinaryMask::filled(3, 3, false);
        assert_eq!(iou(&a, &a).unwrap(), 1.0);
    }

    #[test]
    fn iou_rejects_shape_mismatch() {
        let a = BinaryMask::filled(2, 2, true);
        let b = BinaryMask::filled(2, 3, true);
        assert!(matches!(
            iou(&a, &b),
            Err(ImagingError::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn composite_all_true_returns_foreground() {
        let fg = RasterImage::filled(3, 2, [10, 20, 30]);
        let bg = RasterImage::filled(3, 2, [200, 100, 50]);
        let m = BinaryMask::filled(3, 2, true);
        assert_eq!(composite(&fg, &m, &bg).unwrap(), fg);
    }

    #[test]
    fn composite_all_false_returns_background() {
        let fg = RasterImage::filled(3, 2, [10, 20, 30]);
        let bg = RasterImage::filled(3, 2, [200, 100, 50]);
        let m = BinaryMask::filled(3, 2, false);
        assert_eq!(composite(&fg, &m, &bg).unwrap(), bg);
    }

    #[test]
    fn composite_left_half_selects_pixelwise() {
        let w = 8;
        let h = 4;
        let fg = RasterImage::filled(w, h, [1, 2, 3]);
        let bg = RasterImage::filled(w, h, [9, 8, 7]);
        let mut m = BinaryMask::filled(w, h, false);
        for y in 0..h {
            for x in 0..w / 2 {
                m.set(x, y, true);
            }
        }
        let out = composite(&fg, &m, &bg).unwrap();
        // Per-pixel select oracle.
        for y in 0..h {
            for x in 0..w {
                let want = if x < w / 2 { [1, 2, 3] } else { [9, 8, 7] };
                assert_eq!(out.pixel(x, y), want, "pixel ({x},{y})");
            }
        }
    }

    #[test]
    fn composite_rejects_shape_mismatch() {
        let fg = RasterImage::filled(2, 2, [0; 3]);
        let bg = RasterImage::filled(2, 3, [0; 3]);
        let m = BinaryMask::filled(2, 2, true);
        assert!(composite(&fg, &m, &bg).is_err());
    }

    #[test]
    fn normalize_endpoints() {
        let img = RasterImage::new(2, 1, vec![0, 0, 0, 255, 255, 255]).unwrap();
        let t = normalize(&img);
        // channel 0 plane holds both pixels
        assert_eq!(t.data[0], -1.0);
        assert_eq!(t.data[1], 1.0);
    }

    #[test]
    fn normalize_round_trips_every_intensity() {
        // Exhaustive over all 256 intensities in one 16x16 gray ramp.
        let data: Vec<u8> = (0..256u32).flat_map(|v| [v as u8; 3]).collect();
        let img = RasterImage::new(16, 16, data).unwrap();
        let back = denormalize(&normalize(&img));
        assert_eq!(img, back);
    }

    #[test]
    fn mask_png_round_trip() {
        let m = mask_from_bits(3, 2, &[1, 0, 1, 0, 1, 0]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.png");
        save_mask(&m, &path).unwrap();
        assert_eq!(load_mask(&path).unwrap(), m);
    }

    #[test]
    fn image_png_round_trip() {
        let mut img = RasterImage::filled(5, 4, [0; 3]);
        for y in 0..4 {
            for x in 0..5 {
                img.set_pixel(x, y, [x as u8 * 40, y as u8 * 60, 7]);
            }
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("i.png");
        save_image(&img, &path).unwrap();
        assert_eq!(load_image(&path).unwrap(), img);
    }

    #[test]
    fn decode_rejects_garbage() {
        assert!(decode_image(&[0xff, 0x00, 0x12]).is_err());
        assert!(decode_mask(&[]).is_err());
    }

    #[test]
    fn raster_rejects_bad_buffer() {
        assert!(matches!(
            RasterImage::new(2, 2, vec![0; 5]),
            Err(ImagingError::BufferSize { .. })
        ));
        assert!(RasterImage::new(0, 2, vec![]).is_err());
    }

    fn small_mask() -> impl Strategy<Value = BinaryMask> {
        (1u32..=8, 1u32..=8).prop_flat_map(|(w, h)| {
            proptest::collection::vec(any::<bool>(), (w * h) as usize)
                .prop_map(move |bits| BinaryMask::new(w, h, bits).unwrap())
        })
    }

    proptest! {
        #[test]
        fn iou_matches_brute_force_oracle(m in small_mask(), bits in proptest::collection::vec(any::<bool>(), 64)) {
            let other = BinaryMask::new(
                m.width(),
                m.height(),
                bits[..(m.width() * m.height()) as usize].to_vec(),
            ).unwrap();
            prop_assert_eq!(iou(&m, &other).unwrap(), iou_oracle(&m, &other));
        }

        #[test]
        fn iou_is_symmetric(m in small_mask(), bits in proptest::collection::vec(any::<bool>(), 64)) {
            let other = BinaryMask::new(
                m.width(),
                m.height(),
                bits[..(m.width() * m.height()) as usize].to_vec(),
            ).unwrap();
            prop_assert_eq!(iou(&m, &other).unwrap(), iou(&other, &m).unwrap());
        }

        #[test]
        fn iou_self_is_one(m in small_mask()) {
            prop_assert_eq!(iou(&m, &m).unwrap(), 1.0);
        }

        #[test]
        fn composite_is_idempotent_in_mask(
            m in small_mask(),
            fg_px in any::<[u8; 3]>(),
            bg_px in any::<[u8; 3]>(),
        ) {
            let fg = RasterImage::filled(m.width(), m.height(), fg_px);
            let bg = RasterImage::filled(m.width(), m.height(), bg_px);
            let once = composite(&fg, &m, &bg).unwrap();
            let twice = composite(&once, &m, &bg).unwrap();
            prop_assert_eq!(once, twice);
        }

        #[test]
        fn normalize_round_trip_random(data in proptest::collection::vec(any::<u8>(), 48)) {
            let img = RasterImage::new(4, 4, data).unwrap();
            prop_assert_eq!(denormalize(&normalize(&img)), img);
        }
    }
}
