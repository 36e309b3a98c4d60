//! Procedural stand-in for a paired capture rig: renders the same
//! sampled scene in a plain "synthetic" style and a textured
//! "realistic" style with an identical pixel-perfect mask, and builds
//! dataset manifests from batches of such renders.
//!
//! The toy instrument is a capsule shaft ending in a two-segment jaw
//! whose opening is controlled by a joint angle. Both styles rasterize
//! the exact same geometry, so the label is style-invariant by
//! construction.

use std::path::Path;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::imaging::{BinaryMask, RasterImage};
use crate::manifest::{DatasetManifest, DomainTag, ManifestError, ManifestMeta, ManifestRow};
use crate::seeding::{derive_seed, rng_from};

/// Supersampling grid per pixel axis; 4x4 subsamples decide coverage.
const SUPERSAMPLE: u32 = 4;
/// A pixel joins the mask when at least half its subsamples are covered.
const COVER_THRESHOLD: u32 = SUPERSAMPLE * SUPERSAMPLE / 2;
/// Minimum fraction of the instrument bounding box that must stay in frame.
const MIN_IN_FRAME: f64 = 0.25;

#[derive(Debug, Error)]
pub enum SceneGenError {
    #[error("range `{name}` is inverted: min {min} > max {max}")]
    InvertedRange {
        name: &'static str,
        min: f64,
        max: f64,
    },
    #[error("range `{name}` is out of bounds: [{min}, {max}]")]
    RangeOutOfBounds {
        name: &'static str,
        min: f64,
        max: f64,
    },
    #[error("i/o error at {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("image error: {0}")]
    Imaging(#[from] crate::imaging::ImagingError),
    #[error("manifest error: {0}")]
    Manifest(#[from] ManifestError),
}

/// One sampled toy scene. Renders are pure functions of these values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SceneParams {
    /// Jaw-pivot position in image fractions (x, y).
    pub position: [f64; 2],
    /// In-plane rotation of the shaft axis, degrees.
    pub rotation_deg: f64,
    /// Instrument length as a fraction of image height.
    pub scale: f64,
    /// Jaw opening, degrees.
    pub joint_angle_deg: f64,
    /// Unit light direction.
    pub light_dir: [f64; 2],
    /// Texture/noise seed for this sample.
    pub seed: u64,
}

/// Uniform sampling ranges for [`SceneParams`], all inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SceneRanges {
    pub position_x: (f64, f64),
    pub position_y: (f64, f64),
    pub rotation_deg: (f64, f64),
    pub scale: (f64, f64),
    pub joint_angle_deg: (f64, f64),
    pub light_angle_deg: (f64, f64),
}

impl Default for SceneRanges {
    fn default() -> Self {
        Self {
            position_x: (0.25, 0.75),
            position_y: (0.25, 0.75),
            rotation_deg: (0.0, 360.0),
            scale: (0.25, 0.55),
            joint_angle_deg: (0.0, 40.0),
            light_angle_deg: (0.0, 360.0),
        }
    }
}

impl SceneRanges {
    pub fn validate(&self) -> Result<(), SceneGenError> {
        let checks: [(&'static str, (f64, f64)); 6] = [
            ("position_x", self.position_x),
            ("position_y", self.position_y),
            ("rotation_deg", self.rotation_deg),
            ("scale", self.scale),
            ("joint_angle_deg", self.joint_angle_deg),
            ("light_angle_deg", self.light_angle_deg),
        ];
        for (name, (min, max)) in checks {
            if !min.is_finite() || !max.is_finite() {
                return Err(SceneGenError::RangeOutOfBounds { name, min, max });
            }
            if min > max {
                return Err(SceneGenError::InvertedRange { name, min, max });
            }
        }
        if self.scale.0 <= 0.0 || self.scale.1 > 1.5 {
            return Err(SceneGenError::RangeOutOfBounds {
                name: "scale",
                min: self.scale.0,
                max: self.scale.1,
            });
        }
        Ok(())
    }
}

/// Draw scene parameters uniformly and independently from the ranges.
///
/// Draw order is fixed (scale, rotation, joint, light, position, seed)
/// so per-parameter statistics are stable under the frame-keeping
/// position redraw below.
pub fn sample_scene_params<R: Rng>(
    rng: &mut R,
    ranges: &SceneRanges,
) -> Result<SceneParams, SceneGenError> {
    ranges.validate()?;
    let scale = rng.random_range(ranges.scale.0..=ranges.scale.1);
    let rotation_deg = rng.random_range(ranges.rotation_deg.0..=ranges.rotation_deg.1);
    let joint_angle_deg =
        rng.random_range(ranges.joint_angle_deg.0..=ranges.joint_angle_deg.1);
    let light_angle = rng
        .random_range(ranges.light_angle_deg.0..=ranges.light_angle_deg.1)
        .to_radians();
    let light_dir = [light_angle.cos(), light_angle.sin()];

    let mut position = [0.5, 0.5];
    // Redraw the position (only) until enough of the instrument stays in
    // frame; fall back to the centre, which always satisfies the bound.
    let mut ok = false;
    for _ in 0..64 {
        position = [
            rng.random_range(ranges.position_x.0..=ranges.position_x.1),
            rng.random_range(ranges.position_y.0..=ranges.position_y.1),
        ];
        if in_frame_fraction(position, rotation_deg, scale, joint_angle_deg) >= MIN_IN_FRAME {
            ok = true;
            break;
        }
    }
    if !ok {
        position = [0.5, 0.5];
    }
    let seed = rng.random::<u64>();

    Ok(SceneParams {
        position,
        rotation_deg,
        scale,
        joint_angle_deg,
        light_dir,
        seed,
    })
}

#[derive(Debug, Clone, Copy)]
struct Capsule {
    a: [f64; 2],
    b: [f64; 2],
    radius: f64,
}

impl Capsule {
    /// Distance from `p` to the segment, and the axis coordinate of the
    /// closest point in [0, 1].
    fn distance(&self, p: [f64; 2]) -> (f64, f64) {
        let ab = [self.b[0] - self.a[0], self.b[1] - self.a[1]];
        let ap = [p[0] - self.a[0], p[1] - self.a[1]];
        let len2 = ab[0] * ab[0] + ab[1] * ab[1];
        let t = if len2 > 0.0 {
            ((ap[0] * ab[0] + ap[1] * ab[1]) / len2).clamp(0.0, 1.0)
        } else {
            0.0
        };
        let q = [self.a[0] + t * ab[0], self.a[1] + t * ab[1]];
        let d = ((p[0] - q[0]).powi(2) + (p[1] - q[1]).powi(2)).sqrt();
        (d, t)
    }
}

/// Shaft takes this fraction of the total instrument length; the jaws
/// take the rest. Radii are proportional to total length.
const SHAFT_FRACTION: f64 = 0.72;
const RADIUS_FRACTION: f64 = 0.06;

/// The three capsules (shaft, two jaw segments) in pixel coordinates.
fn instrument_capsules(p: &SceneParams, size: u32) -> [Capsule; 3] {
    let s = f64::from(size);
    let total_len = p.scale * s;
    let shaft_len = SHAFT_FRACTION * total_len;
    let jaw_len = (1.0 - SHAFT_FRACTION) * total_len;
    let radius = RADIUS_FRACTION * total_len;
    let theta = p.rotation_deg.to_radians();
    let dir = [theta.cos(), theta.sin()];
    let pivot = [p.position[0] * s, p.position[1] * s];
    let tail = [pivot[0] - dir[0] * shaft_len, pivot[1] - dir[1] * shaft_len];

    let half = p.joint_angle_deg.to_radians() / 2.0;
    let jaw = |ang: f64| {
        let d = [
            (theta + ang).cos() * jaw_len,
            (theta + ang).sin() * jaw_len,
        ];
        Capsule {
            a: pivot,
            b: [pivot[0] + d[0], pivot[1] + d[1]],
            radius,
        }
    };

    [
        Capsule {
            a: tail,
            b: pivot,
            radius,
        },
        jaw(half),
        jaw(-half),
    ]
}

/// Fraction of the instrument's bounding box that lies inside the unit
/// frame. Cheap proxy for "how much of the tool is visible".
fn in_frame_fraction(position: [f64; 2], rotation_deg: f64, scale: f64, joint_deg: f64) -> f64 {
    let probe = SceneParams {
        position,
        rotation_deg,
        scale,
        joint_angle_deg: joint_deg,
        light_dir: [1.0, 0.0],
        seed: 0,
    };
    // Use a nominal 1000 px frame; fractions are size-independent.
    let size = 1000u32;
    let caps = instrument_capsules(&probe, size);
    let mut min = [f64::INFINITY; 2];
    let mut max = [f64::NEG_INFINITY; 2];
    for c in &caps {
        for axis in 0..2 {
            min[axis] = min[axis].min(c.a[axis] - c.radius).min(c.b[axis] - c.radius);
            max[axis] = max[axis].max(c.a[axis] + c.radius).max(c.b[axis] + c.radius);
        }
    }
    let area = (max[0] - min[0]).max(1e-9) * (max[1] - min[1]).max(1e-9);
    let s = f64::from(size);
    let cw = (max[0].min(s) - min[0].max(0.0)).max(0.0);
    let ch = (max[1].min(s) - min[1].max(0.0)).max(0.0);
    cw * ch / area
}

/// Per-pixel rasterization of the instrument geometry, shared by both
/// styles so their masks are bit-identical.
struct GeometryRaster {
    size: u32,
    /// Covered subsamples per pixel, 0..=SUPERSAMPLE^2.
    cover: Vec<u8>,
    /// Nearest part per pixel: 0 shaft, 1/2 jaws (valid where cover > 0).
    part: Vec<u8>,
    /// Axis coordinate (px) along the nearest part, for brushed texture.
    axis_u: Vec<f32>,
    /// Perpendicular distance (px) to the nearest part's axis.
    axis_d: Vec<f32>,
}

fn rasterize(p: &SceneParams, size: u32) -> GeometryRaster {
    let caps = instrument_capsules(p, size);
    let n = size as usize * size as usize;
    let mut out = GeometryRaster {
        size,
        cover: vec![0; n],
        part: vec![0; n],
        axis_u: vec![0.0; n],
        axis_d: vec![0.0; n],
    };
    let ss = SUPERSAMPLE;
    let step = 1.0 / f64::from(ss);
    for y in 0..size {
        for x in 0..size {
            let idx = y as usize * size as usize + x as usize;
            let mut covered = 0u32;
            for sy in 0..ss {
                for sx in 0..ss {
                    let px = f64::from(x) + (f64::from(sx) + 0.5) * step;
                    let py = f64::from(y) + (f64::from(sy) + 0.5) * step;
                    if caps
                        .iter()
                        .any(|c| c.distance([px, py]).0 <= c.radius)
                    {
                        covered += 1;
                    }
                }
            }
            out.cover[idx] = covered as u8;
            if covered > 0 {
                let centre = [f64::from(x) + 0.5, f64::from(y) + 0.5];
                let mut best = (f64::INFINITY, 0usize, 0.0f64);
                for (i, c) in caps.iter().enumerate() {
                    let (d, t) = c.distance(centre);
                    if d < best.0 {
                        best = (d, i, t);
                    }
                }
                let cap = &caps[best.1];
                let len = ((cap.b[0] - cap.a[0]).powi(2) + (cap.b[1] - cap.a[1]).powi(2)).sqrt();
                out.part[idx] = best.1 as u8;
                out.axis_u[idx] = (best.2 * len) as f32;
                out.axis_d[idx] = best.0 as f32;
            }
        }
    }
    out
}

fn mask_from_raster(raster: &GeometryRaster) -> BinaryMask {
    let data = raster
        .cover
        .iter()
        .map(|&c| u32::from(c) >= COVER_THRESHOLD)
        .collect();
    BinaryMask::new(raster.size, raster.size, data).expect("raster buffers are square")
}

// ---------------------------------------------------------------------------
// Procedural texture primitives (hash-based, stateless, deterministic).

fn lattice_hash(ix: i64, iy: i64, seed: u64) -> f64 {
    let mut z = (ix as u64)
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((iy as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        ^ seed;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^= z >> 31;
    (z >> 11) as f64 / (1u64 << 53) as f64
}

fn smoothstep(t: f64) -> f64 {
    t * t * (3.0 - 2.0 * t)
}

/// Bilinear value noise in [0, 1).
fn value_noise(x: f64, y: f64, seed: u64) -> f64 {
    let ix = x.floor();
    let iy = y.floor();
    let fx = smoothstep(x - ix);
    let fy = smoothstep(y - iy);
    let (ix, iy) = (ix as i64, iy as i64);
    let v00 = lattice_hash(ix, iy, seed);
    let v10 = lattice_hash(ix + 1, iy, seed);
    let v01 = lattice_hash(ix, iy + 1, seed);
    let v11 = lattice_hash(ix + 1, iy + 1, seed);
    let a = v00 + (v10 - v00) * fx;
    let b = v01 + (v11 - v01) * fx;
    a + (b - a) * fy
}

/// Three-octave fractal noise in [0, 1].
fn fbm(x: f64, y: f64, seed: u64, base_cell: f64) -> f64 {
    let mut total = 0.0;
    let mut amp = 1.0;
    let mut norm = 0.0;
    let mut freq = 1.0 / base_cell;
    for octave in 0..3u64 {
        total += amp * value_noise(x * freq, y * freq, seed.wrapping_add(octave * 0x51_7c_c1));
        norm += amp;
        amp *= 0.5;
        freq *= 2.0;
    }
    total / norm
}

fn lerp3(a: [f64; 3], b: [f64; 3], t: f64) -> [f64; 3] {
    [
        a[0] + (b[0] - a[0]) * t,
        a[1] + (b[1] - a[1]) * t,
        a[2] + (b[2] - a[2]) * t,
    ]
}

fn put(data: &mut [u8], idx: usize, rgb: [f64; 3]) {
    for c in 0..3 {
        data[idx * 3 + c] = rgb[c].round().clamp(0.0, 255.0) as u8;
    }
}

fn mix(base: [f64; 3], over: [f64; 3], t: f64) -> [f64; 3] {
    lerp3(base, over, t.clamp(0.0, 1.0))
}

// ---------------------------------------------------------------------------
// Styles

/// Flat-shaded toy instrument on a uniform dark background; the mask is
/// true exactly where the geometry covers a pixel.
pub fn render_synthetic(p: &SceneParams, size: u32) -> (RasterImage, BinaryMask) {
    let raster = rasterize(p, size);
    let mask = mask_from_raster(&raster);
    let n = size as usize * size as usize;
    let mut data = vec![0u8; n * 3];
    let bg = [22.0, 24.0, 28.0];

    // Flat per-part shading: brightness depends only on how the part's
    // axis faces the light, never on pixel position.
    let theta = p.rotation_deg.to_radians();
    let half = p.joint_angle_deg.to_radians() / 2.0;
    let angles = [theta, theta + half, theta - half];
    let facing: Vec<f64> = angles
        .iter()
        .map(|a| {
            let normal = [-a.sin(), a.cos()];
            let d = normal[0] * p.light_dir[0] + normal[1] * p.light_dir[1];
            0.78 + 0.22 * d.abs()
        })
        .collect();
    let part_base = [[150.0, 153.0, 158.0], [128.0, 131.0, 137.0], [120.0, 123.0, 129.0]];

    for idx in 0..n {
        let coverage = f64::from(raster.cover[idx]) / f64::from(SUPERSAMPLE * SUPERSAMPLE);
        if coverage == 0.0 {
            put(&mut data, idx, bg);
            continue;
        }
        let part = raster.part[idx] as usize;
        let f = facing[part];
        let body = [
            part_base[part][0] * f,
            part_base[part][1] * f,
            part_base[part][2] * f,
        ];
        put(&mut data, idx, mix(bg, body, coverage));
    }
    let image = RasterImage::new(size, size, data).expect("buffer sized to raster");
    (image, mask)
}

/// Same geometry as [`render_synthetic`] for the same params, rendered
/// with specular streak, brushed-metal noise, vignette, and a
/// green-blue textured background. The returned mask is bit-identical
/// to the synthetic one.
pub fn render_realistic(p: &SceneParams, size: u32) -> (RasterImage, BinaryMask) {
    let raster = rasterize(p, size);
    let mask = mask_from_raster(&raster);
    let n = size as usize * size as usize;
    let mut data = vec![0u8; n * 3];
    let s = f64::from(size);
    let centre = s / 2.0;
    let bg_seed = p.seed ^ 0x6bb6_0d8f;
    let metal_seed = p.seed ^ 0x17e3_55a1;
    let total_len = p.scale * s;
    let radius = RADIUS_FRACTION * total_len;
    let theta = p.rotation_deg.to_radians();
    let axis_normal = [-theta.sin(), theta.cos()];
    let light_side = axis_normal[0] * p.light_dir[0] + axis_normal[1] * p.light_dir[1];

    for y in 0..size {
        for x in 0..size {
            let idx = y as usize * size as usize + x as usize;
            let (fx, fy) = (f64::from(x), f64::from(y));

            // Green-blue noisy background.
            let t = fbm(fx, fy, bg_seed, 24.0);
            let speck = fbm(fx, fy, bg_seed ^ 0xff, 3.0) - 0.5;
            let mut px = lerp3([36.0, 115.0, 86.0], [24.0, 84.0, 112.0], t);
            for c in &mut px {
                *c += speck * 22.0;
            }

            let coverage = f64::from(raster.cover[idx]) / f64::from(SUPERSAMPLE * SUPERSAMPLE);
            if coverage > 0.0 {
                let part = raster.part[idx] as usize;
                let u = f64::from(raster.axis_u[idx]);
                let d = f64::from(raster.axis_d[idx]);
                // Brushed metal: intensity varies along the axis only.
                let brush = fbm(u * 0.8, part as f64 * 37.0, metal_seed, 6.0) - 0.5;
                let mut base = 158.0 + 70.0 * brush;
                if part != 0 {
                    base *= 0.88;
                }
                // Specular streak down the centreline, brighter on the
                // side facing the light.
                let spec = (-((d / (0.45 * radius).max(1e-6)).powi(2))).exp()
                    * (60.0 + 55.0 * light_side.abs());
                let body = [
                    (base + spec) * 1.02,
                    base + spec,
                    (base + spec) * 1.06 + 6.0,
                ];
                px = mix(px, body, coverage);
            }

            // Vignette.
            let r2 = ((fx - centre).powi(2) + (fy - centre).powi(2)) / (centre * centre * 2.0);
            let v = 1.0 - 0.32 * r2;
            for c in &mut px {
                *c *= v;
            }
            put(&mut data, idx, px);
        }
    }
    let image = RasterImage::new(size, size, data).expect("buffer sized to raster");
    (image, mask)
}

/// Background families used for compositing and the test tiers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackgroundKind {
    /// The realistic style's own green-blue texture.
    GreenBlue,
    /// Random two-color palettes; used to randomize training backgrounds.
    Varied,
    /// Red-brown blobby texture standing in for organ imagery.
    OrganLike,
}

/// Procedural full-frame background, a pure function of kind and seed.
pub fn render_background(kind: BackgroundKind, seed: u64, size: u32) -> RasterImage {
    let n = size as usize * size as usize;
    let mut data = vec![0u8; n * 3];
    let (pal_a, pal_b): ([f64; 3], [f64; 3]) = match kind {
        BackgroundKind::GreenBlue => ([36.0, 115.0, 86.0], [24.0, 84.0, 112.0]),
        BackgroundKind::Varied => {
            let r = |k: u64| 30.0 + 200.0 * lattice_hash(k as i64, 0, seed);
            ([r(1), r(2), r(3)], [r(4), r(5), r(6)])
        }
        BackgroundKind::OrganLike => ([132.0, 52.0, 44.0], [176.0, 96.0, 70.0]),
    };
    let cell = match kind {
        BackgroundKind::OrganLike => 18.0,
        _ => 24.0,
    };
    let s = f64::from(size);
    let centre = s / 2.0;
    for y in 0..size {
        for x in 0..size {
            let idx = y as usize * size as usize + x as usize;
            let (fx, fy) = (f64::from(x), f64::from(y));
            let t = fbm(fx, fy, seed, cell);
            let speck = fbm(fx, fy, seed ^ 0xff, 3.0) - 0.5;
            let mut px = lerp3(pal_a, pal_b, t);
            for c in &mut px {
                *c += speck * 20.0;
            }
            if kind == BackgroundKind::OrganLike {
                // Glossy wet highlights.
                let gloss = fbm(fx, fy, seed ^ 0xabcd, 9.0);
                if gloss > 0.72 {
                    let g = (gloss - 0.72) / 0.28;
                    px = mix(px, [235.0, 200.0, 190.0], g * 0.6);
                }
            }
            let r2 = ((fx - centre).powi(2) + (fy - centre).powi(2)) / (centre * centre * 2.0);
            let v = 1.0 - 0.25 * r2;
            for c in &mut px {
                *c *= v;
            }
            put(&mut data, idx, px);
        }
    }
    RasterImage::new(size, size, data).expect("buffer sized to loop")
}

/// Which style [`build_dataset`] renders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RenderStyle {
    Synthetic,
    Realistic,
}

impl RenderStyle {
    pub fn domain(self) -> DomainTag {
        match self {
            RenderStyle::Synthetic => DomainTag::Synthetic,
            RenderStyle::Realistic => DomainTag::Realistic,
        }
    }
}

/// Render `count` image/mask pairs into `out_dir` and write a manifest.
///
/// Sample i draws its parameters from a rng seeded by `(seed, i)`, so
/// rendering parallelizes without changing the output. The manifest is
/// written last via an atomic rename: an interrupted build leaves no
/// manifest behind.
pub fn build_dataset(
    count: u32,
    style: RenderStyle,
    ranges: &SceneRanges,
    out_dir: &Path,
    seed: u64,
    size: u32,
) -> Result<DatasetManifest, SceneGenError> {
    ranges.validate()?;
    let io_err = |path: &Path, source: std::io::Error| SceneGenError::Io {
        path: path.display().to_string(),
        source,
    };
    let images_dir = out_dir.join("images");
    let masks_dir = out_dir.join("masks");
    std::fs::create_dir_all(&images_dir).map_err(|e| io_err(&images_dir, e))?;
    std::fs::create_dir_all(&masks_dir).map_err(|e| io_err(&masks_dir, e))?;

    let rows: Vec<ManifestRow> = (0..count)
        .into_par_iter()
        .map(|i| -> Result<ManifestRow, SceneGenError> {
            let sample_seed = derive_seed(seed, u64::from(i));
            let mut rng = rng_from(sample_seed);
            let params = sample_scene_params(&mut rng, ranges)?;
            let (image, mask) = match style {
                RenderStyle::Synthetic => render_synthetic(&params, size),
                RenderStyle::Realistic => render_realistic(&params, size),
            };
            let image_rel = format!("images/{i:05}.png");
            let mask_rel = format!("masks/{i:05}.png");
            crate::imaging::save_image(&image, &out_dir.join(&image_rel))?;
            crate::imaging::save_mask(&mask, &out_dir.join(&mask_rel))?;
            Ok(ManifestRow {
                image: image_rel,
                mask: mask_rel,
                domain: style.domain(),
                params: Some(params),
                seed: sample_seed,
            })
        })
        .collect::<Result<_, _>>()?;

    let manifest = DatasetManifest::new(
        rows,
        ManifestMeta {
            format_version: ManifestMeta::FORMAT_VERSION,
            dataset_seed: seed,
            image_size: size,
            description: format!("{style:?} renders"),
        },
        out_dir.to_path_buf(),
    );
    manifest.save(&out_dir.join("manifest.jsonl"))?;
    manifest.validate()?;
    Ok(manifest)
}
