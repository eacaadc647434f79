//! Procedural datasets for tests and benchmarks.
//!
//! A world is a long horizontal strip of painted shapes. Each place of a loop
//! is a frame-sized window of the strip; a pass over the loop renders every
//! place through a camera rotated about the vertical axis by the pass tilt,
//! with a little positional jitter, photometric gain and sensor noise. The
//! reference pass looks straight at the strip; query passes use the tilts of
//! the evaluation splits. Tiles are seeded independently, so a world with
//! more places extends a smaller one with the same seed.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::imaging::GrayImage;

/// Tilts of the query passes, in degrees.
pub const DEFAULT_TILTS: [f64; 4] = [0.0, 15.0, 30.0, 45.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub places: usize,
    pub width: usize,
    pub height: usize,
    pub tilts: Vec<f64>,
    pub training_frames: usize,
    /// Seed of the mapped world. The training world uses a derived seed.
    pub seed: u64,
    pub noise_sigma: f64,
    /// Maximum positional jitter of a view, in pixels.
    pub jitter: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            places: 200,
            width: 160,
            height: 120,
            tilts: DEFAULT_TILTS.to_vec(),
            training_frames: 539,
            seed: 7,
            noise_sigma: 2.0,
            jitter: 2.0,
        }
    }
}

/// Strip of painted tiles, one per place, with padding above and below so
/// tilted views stay inside it.
#[derive(Debug, Clone)]
pub struct World {
    tile_w: usize,
    tile_h: usize,
    pad: usize,
    width: usize,
    height: usize,
    data: Vec<u8>,
}

fn tile_rng(seed: u64, tile: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tile);
    rng
}

/// Paints background and shapes of one tile into `canvas` (row stride
/// `stride`) over the rectangle starting at `(x0, y0)`.
fn paint_tile(canvas: &mut [u8], stride: usize, x0: usize, y0: usize, w: usize, h: usize, rng: &mut ChaCha8Rng) {
    let rows = canvas.len() / stride;
    let base: f64 = rng.gen_range(60.0..190.0);
    let (gx, gy): (f64, f64) = (rng.gen_range(-0.4..0.4), rng.gen_range(-0.4..0.4));
    for y in y0..(y0 + h).min(rows) {
        for x in x0..(x0 + w).min(stride) {
            let v = base + gx * (x - x0) as f64 + gy * (y - y0) as f64;
            canvas[y * stride + x] = v.clamp(0.0, 255.0) as u8;
        }
    }
    let side = w.min(h) as f64;
    let shapes = (w * h) / 600 + 6;
    for _ in 0..shapes {
        let cx = x0 as f64 + rng.gen_range(0.0..w as f64);
        let cy = y0 as f64 + rng.gen_range(0.0..h as f64);
        let value: u8 = rng.gen();
        let a = rng.gen_range(0.03..0.2) * side + 2.0;
        let b = rng.gen_range(0.03..0.2) * side + 2.0;
        let theta: f64 = rng.gen_range(0.0..std::f64::consts::PI);
        let (s, c) = theta.sin_cos();
        let ellipse = rng.gen_bool(0.4);
        let reach = a.max(b).ceil() as i64 + 1;
        for y in (cy as i64 - reach).max(0)..(cy as i64 + reach).min(rows as i64) {
            for x in (cx as i64 - reach).max(0)..(cx as i64 + reach).min(stride as i64) {
                let (dx, dy) = (x as f64 + 0.5 - cx, y as f64 + 0.5 - cy);
                let (u, v) = (c * dx + s * dy, -s * dx + c * dy);
                let inside = if ellipse {
                    (u / a).powi(2) + (v / b).powi(2) <= 1.0
                } else {
                    u.abs() <= a && v.abs() <= b
                };
                if inside {
                    canvas[y as usize * stride + x as usize] = value;
                }
            }
        }
    }
}

impl World {
    pub fn generate(places: usize, tile_w: usize, tile_h: usize, seed: u64) -> Result<Self> {
        if places == 0 || tile_w < 8 || tile_h < 8 {
            return Err(Error::InvalidParameter(
                "world needs at least one place and tiles of at least 8x8".into(),
            ));
        }
        let pad = tile_h;
        let width = (places + 2) * tile_w;
        let height = tile_h + 2 * pad;
        let mut data = vec![0u8; width * height];
        // padding bands are tiles as well so tilted views see texture there
        for band in 0..3 {
            for t in 0..places + 2 {
                let mut rng = tile_rng(seed, (t as u64) << 2 | band);
                paint_tile(&mut data, width, t * tile_w, band as usize * pad, tile_w, tile_h, &mut rng);
            }
        }
        Ok(World {
            tile_w,
            tile_h,
            pad,
            width,
            height,
            data,
        })
    }

    pub fn places(&self) -> usize {
        self.width / self.tile_w - 2
    }

    fn sample(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let (x0, y0) = (x.floor() as usize, y.floor() as usize);
        let (x1, y1) = ((x0 + 1).min(self.width - 1), (y0 + 1).min(self.height - 1));
        let (fx, fy) = (x - x0 as f64, y - y0 as f64);
        let at = |x: usize, y: usize| self.data[y * self.width + x] as f64;
        let top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
        let bottom = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
        top * (1.0 - fy) + bottom * fy
    }

    /// Centre of place `i` in strip coordinates.
    pub fn place_center(&self, i: usize) -> (f64, f64) {
        (
            ((i + 1) * self.tile_w) as f64 + self.tile_w as f64 / 2.0,
            (self.pad + self.tile_h / 2) as f64,
        )
    }

    /// Renders a `tile_w x tile_h` view of place `i` with the camera rotated
    /// by `tilt_deg` about its vertical axis.
    pub fn render(&self, i: usize, tilt_deg: f64, view: &ViewNoise) -> GrayImage {
        let (w, h) = (self.tile_w, self.tile_h);
        let (cx, cy) = self.place_center(i);
        let f = 1.5 * w as f64;
        let (s, c) = tilt_deg.to_radians().sin_cos();
        let shift = f * s / c;
        let mut rng = ChaCha8Rng::seed_from_u64(view.seed);
        let noise = Normal::new(0.0, view.noise_sigma.max(0.0)).expect("finite sigma");
        let mut data = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                let u = x as f64 + 0.5 - w as f64 / 2.0;
                let v = y as f64 + 0.5 - h as f64 / 2.0;
                let z = -u * s + f * c;
                let wx = f * (u * c + f * s) / z - shift;
                let wy = f * v / z;
                let value = self.sample(cx + wx + view.dx - 0.5, cy + wy + view.dy - 0.5);
                let value = value * view.gain + view.offset + noise.sample(&mut rng);
                data.push(value.round().clamp(0.0, 255.0) as u8);
            }
        }
        GrayImage::new(w, h, data).expect("view dimensions are non-zero")
    }
}

/// Per-view perturbation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ViewNoise {
    pub dx: f64,
    pub dy: f64,
    pub gain: f64,
    pub offset: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl ViewNoise {
    pub const NONE: ViewNoise = ViewNoise {
        dx: 0.0,
        dy: 0.0,
        gain: 1.0,
        offset: 0.0,
        noise_sigma: 0.0,
        seed: 0,
    };

    fn random(rng: &mut ChaCha8Rng, jitter: f64, noise_sigma: f64) -> Self {
        let jitter = jitter.max(0.0);
        let coord = |rng: &mut ChaCha8Rng| if jitter > 0.0 { rng.gen_range(-jitter..=jitter) } else { 0.0 };
        ViewNoise {
            dx: coord(rng),
            dy: coord(rng),
            gain: rng.gen_range(0.9..1.1),
            offset: rng.gen_range(-8.0..8.0),
            noise_sigma,
            seed: rng.gen(),
        }
    }
}

/// A textured stand-alone image.
pub fn texture(width: usize, height: usize, seed: u64) -> GrayImage {
    let mut data = vec![0u8; width * height];
    paint_tile(&mut data, width, 0, 0, width, height, &mut tile_rng(seed, u64::MAX));
    GrayImage::new(width, height, data).expect("texture dimensions must be non-zero")
}

/// One query pass over the loop.
#[derive(Debug, Clone)]
pub struct QuerySplit {
    pub tilt_deg: f64,
    pub name: String,
    pub images: Vec<(String, GrayImage)>,
    /// Query id and the reference ids showing the same place.
    pub ground_truth: Vec<(String, Vec<String>)>,
}

#[derive(Debug, Clone)]
pub struct SyntheticBundle {
    pub config: SyntheticConfig,
    pub training: Vec<(String, GrayImage)>,
    pub reference: Vec<(String, GrayImage)>,
    pub queries: Vec<QuerySplit>,
}

impl SyntheticBundle {
    pub fn split(&self, tilt_deg: f64) -> Option<&QuerySplit> {
        self.queries.iter().find(|q| q.tilt_deg == tilt_deg)
    }
}

pub fn reference_id(i: usize) -> String {
    format!("ref_{i:05}")
}

pub fn split_name(tilt_deg: f64) -> String {
    format!("tilt{:02}", tilt_deg.round() as i64)
}

fn pass(world: &World, count: usize, tilt: f64, rng: &mut ChaCha8Rng, cfg: &SyntheticConfig, id: impl Fn(usize) -> String) -> Vec<(String, GrayImage)> {
    (0..count)
        .map(|i| {
            let noise = ViewNoise::random(rng, cfg.jitter, cfg.noise_sigma);
            (id(i), world.render(i, tilt, &noise))
        })
        .collect()
}

/// Generates training frames, a reference pass and one query pass per tilt.
pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticBundle> {
    if cfg.places == 0 {
        return Err(Error::InvalidParameter("places must be >= 1".into()));
    }
    if cfg.tilts.iter().any(|t| !(t.is_finite() && t.abs() < 60.0)) {
        return Err(Error::InvalidParameter("tilts must lie in (-60, 60) degrees".into()));
    }
    let world = World::generate(cfg.places, cfg.width, cfg.height, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let reference = pass(&world, cfg.places, 0.0, &mut rng, cfg, reference_id);
    let queries = cfg
        .tilts
        .iter()
        .map(|&tilt| {
            let name = split_name(tilt);
            let images = pass(&world, cfg.places, tilt, &mut rng, cfg, |i| format!("{name}_{i:05}"));
            let ground_truth = images
                .iter()
                .enumerate()
                .map(|(i, (id, _))| (id.clone(), vec![reference_id(i)]))
                .collect();
            QuerySplit {
                tilt_deg: tilt,
                name,
                images,
                ground_truth,
            }
        })
        .collect();

    // Training frames come from a separate world so the dictionary never
    // sees the mapped places.
    let training = if cfg.training_frames == 0 {
        Vec::new()
    } else {
        let train_world = World::generate(cfg.training_frames, cfg.width, cfg.height, cfg.seed ^ 0x5eed_7a11)?;
        (0..cfg.training_frames)
            .map(|i| {
                let tilt = cfg.tilts.get(i % cfg.tilts.len().max(1)).copied().unwrap_or(0.0);
                let noise = ViewNoise::random(&mut rng, cfg.jitter, cfg.noise_sigma);
                (format!("train_{i:05}"), train_world.render(i, tilt, &noise))
            })
            .collect()
    };
    Ok(SyntheticBundle {
        config: cfg.clone(),
        training,
        reference,
        queries,
    })
}

/// Ground truth accepting every reference within `tolerance` places of the
/// true one.
pub fn neighbour_ground_truth(places: usize, query_ids: &[String], tolerance: usize) -> Vec<(String, Vec<String>)> {
    query_ids
        .iter()
        .enumerate()
        .map(|(i, q)| {
            let lo = i.saturating_sub(tolerance);
            let hi = (i + tolerance).min(places.saturating_sub(1));
            (q.clone(), (lo..=hi).map(reference_id).collect())
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_tilt_without_noise_reproduces_the_tile() {
        let world = World::generate(3, 40, 30, 1).unwrap();
        let view = world.render(1, 0.0, &ViewNoise::NONE);
        let (cx, cy) = world.place_center(1);
        let (x0, y0) = (cx as usize - 20, cy as usize - 15);
        for y in 0..30 {
            for x in 0..40 {
                assert_eq!(view.get(x, y), world.data[(y0 + y) * world.width + x0 + x]);
            }
        }
    }

    #[test]
    fn larger_worlds_extend_smaller_ones() {
        let a = World::generate(3, 32, 24, 5).unwrap();
        let b = World::generate(6, 32, 24, 5).unwrap();
        for i in 0..3 {
            assert_eq!(a.render(i, 0.0, &ViewNoise::NONE), b.render(i, 0.0, &ViewNoise::NONE));
        }
    }

    #[test]
    fn tilt_changes_the_view() {
        let world = World::generate(2, 64, 48, 2).unwrap();
        let flat = world.render(0, 0.0, &ViewNoise::NONE);
        let tilted = world.render(0, 30.0, &ViewNoise::NONE);
        assert_ne!(flat, tilted);
        // the centre pixel stays on the place centre
        let d = flat.get(32, 24) as i32 - tilted.get(32, 24) as i32;
        assert!(d.abs() <= 40);
    }

    #[test]
    fn bundle_layout() {
        let cfg = SyntheticConfig {
            places: 5,
            width: 48,
            height: 32,
            training_frames: 3,
            ..SyntheticConfig::default()
        };
        let b = generate(&cfg).unwrap();
        assert_eq!(b.reference.len(), 5);
        assert_eq!(b.training.len(), 3);
        assert_eq!(b.queries.len(), 4);
        let q15 = b.split(15.0).unwrap();
        assert_eq!(q15.images[2].0, "tilt15_00002");
        assert_eq!(q15.ground_truth[2].1, vec!["ref_00002".to_string()]);
        let again = generate(&cfg).unwrap();
        assert_eq!(b.reference, again.reference);
        assert_eq!(b.queries[3].images, again.queries[3].images);
    }

    #[test]
    fn neighbour_tolerance() {
        let ids: Vec<String> = (0..4).map(|i| format!("q{i}")).collect();
        let gt = neighbour_ground_truth(4, &ids, 1);
        assert_eq!(gt[0].1, vec!["ref_00000", "ref_00001"]);
        assert_eq!(gt[3].1, vec!["ref_00002", "ref_00003"]);
    }

    #[test]
    fn textures_are_not_flat() {
        let t = texture(64, 48, 3);
        let min = t.data().iter().min().unwrap();
        let max = t.data().iter().max().unwrap();
        assert!(max - min > 50);
    }
}
