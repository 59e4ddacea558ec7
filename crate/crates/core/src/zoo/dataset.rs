//! Procedural 10-class shape dataset and the dataset containers.
//!
//! Images are single-channel, pixel values in [0, 255] quantized to whole
//! numbers (so IDX export round-trips exactly). Every image is drawn from an
//! RNG derived from (seed, class, index), making the dataset bit-identical
//! for a given spec regardless of generation order.

use std::path::PathBuf;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::tensor::Tensor;

pub const SHAPE_CLASS_COUNT: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    SyntheticShapes,
    IdxFiles { images: PathBuf, labels: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSpec {
    pub source: DataSource,
    pub class_count: usize,
    /// `[C, H, W]`; the synthetic renderer requires C = 1 and square H = W >= 16.
    pub image_shape: [usize; 3],
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub seed: u64,
    /// Background noise ceiling in pixel units; one difficulty knob.
    pub noise: u8,
    /// Foreground intensity floor. Together with `noise` this sets the
    /// figure/ground contrast, which controls how robust the trained
    /// classifiers are to bounded pixel perturbations.
    pub contrast: u8,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec {
            source: DataSource::SyntheticShapes,
            class_count: SHAPE_CLASS_COUNT,
            image_shape: [1, 32, 32],
            train_per_class: 1000,
            test_per_class: 50,
            seed: 0,
            noise: 10,
            contrast: 72,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Tensor>,
    pub labels: Vec<usize>,
    pub class_count: usize,
    pub image_shape: [usize; 3],
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataSplit {
    pub train: Dataset,
    pub test: Dataset,
}

/// Renders the full train/test split described by `spec`.
pub fn generate_synthetic_dataset(spec: &DatasetSpec) -> Result<DataSplit> {
    if spec.source != DataSource::SyntheticShapes {
        return Err(Error::InvalidArgument(
            "generate_synthetic_dataset requires the synthetic-shapes source".to_string(),
        ));
    }
    if spec.class_count != SHAPE_CLASS_COUNT {
        return Err(Error::InvalidArgument(format!(
            "the shape renderer draws exactly {SHAPE_CLASS_COUNT} classes, got {}",
            spec.class_count
        )));
    }
    let [c, h, w] = spec.image_shape;
    if c != 1 || h != w || h < 16 {
        return Err(Error::InvalidArgument(format!(
            "synthetic images must be 1 x S x S with S >= 16, got {:?}",
            spec.image_shape
        )));
    }
    let mut train = new_dataset(spec);
    let mut test = new_dataset(spec);
    let per_class = spec.train_per_class + spec.test_per_class;
    for class in 0..spec.class_count {
        for idx in 0..per_class {
            let mut rng =
                ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, class as u64, idx as u64));
            let img = render_shape(class, h, spec.noise, spec.contrast, &mut rng)?;
            if idx < spec.train_per_class {
                train.images.push(img);
                train.labels.push(class);
            } else {
                test.images.push(img);
                test.labels.push(class);
            }
        }
    }
    Ok(DataSplit { train, test })
}

fn new_dataset(spec: &DatasetSpec) -> Dataset {
    Dataset {
        images: Vec::new(),
        labels: Vec::new(),
        class_count: spec.class_count,
        image_shape: spec.image_shape,
    }
}

/// Draws one image of the given class.
///
/// The class shape is painted at foreground intensity on top of two faint
/// "ghost" shapes of other classes, the canvas is softened with a small
/// blur, and background noise is added before quantizing to whole pixel
/// values. The ghosts and the soft edges are what make bounded-perturbation
/// attacks meaningful at this scale: every classifier has to lean on the
/// same low-frequency evidence.
fn render_shape(class: usize, size: usize, noise: u8, contrast: u8, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    let fg = f32::from(contrast) + rng.gen_range(0.0..20.0);
    let mut canvas = vec![0.0f32; size * size];

    // Dimmer shapes of the two successor classes under the true one; the
    // label is the brightest shape. The fixed pairing keeps the comparison
    // learnable while pinning the same intensity-parity boundaries into
    // every model, which is what gives bounded perturbations somewhere
    // shared to go.
    let r: f32 = rng.gen_range(0.0..1.0);
    let runner_up_dim = 0.50 + 0.40 * r * r;
    let third_dim = rng.gen_range(0.35..0.65);
    for (offset, dim) in [(1usize, runner_up_dim), (2, third_dim)] {
        let ghost = (class + offset) % SHAPE_CLASS_COUNT;
        let mask = shape_mask(ghost, size, rng)?;
        for (c, on) in canvas.iter_mut().zip(&mask) {
            if *on {
                *c = c.max(fg * dim);
            }
        }
    }
    let mask = shape_mask(class, size, rng)?;
    for (c, on) in canvas.iter_mut().zip(&mask) {
        if *on {
            *c = fg + rng.gen_range(-3.0..3.0);
        }
    }

    // Soft edges: decision evidence lives at low spatial frequency, which
    // every architecture reads the same way.
    let blurred = blur3(&canvas, size);

    let noise = f32::from(noise);
    let data: Vec<f32> = blurred
        .into_iter()
        .map(|v| {
            let v = v + rng.gen_range(0.0..noise);
            v.round().clamp(0.0, 255.0)
        })
        .collect();
    Tensor::from_vec(vec![1, size, size], data)
}

fn blur3(canvas: &[f32], size: usize) -> Vec<f32> {
    let mut rows = vec![0.0f32; canvas.len()];
    for y in 0..size {
        for x in 0..size {
            let c = canvas[y * size + x];
            let l = if x > 0 { canvas[y * size + x - 1] } else { c };
            let r = if x + 1 < size { canvas[y * size + x + 1] } else { c };
            rows[y * size + x] = 0.25 * l + 0.5 * c + 0.25 * r;
        }
    }
    let mut out = vec![0.0f32; canvas.len()];
    for y in 0..size {
        for x in 0..size {
            let c = rows[y * size + x];
            let u = if y > 0 { rows[(y - 1) * size + x] } else { c };
            let d = if y + 1 < size { rows[(y + 1) * size + x] } else { c };
            out[y * size + x] = 0.25 * u + 0.5 * c + 0.25 * d;
        }
    }
    out
}

/// The boolean mask of one class shape at a randomized position and scale.
fn shape_mask(class: usize, size: usize, rng: &mut ChaCha8Rng) -> Result<Vec<bool>> {
    let s = size as i32;
    let mut mask = vec![false; size * size];
    let paint = |pred: &mut dyn FnMut(i32, i32) -> bool, mask: &mut [bool]| {
        for y in 0..s {
            for x in 0..s {
                if pred(x, y) {
                    mask[(y * s + x) as usize] = true;
                }
            }
        }
    };
    match class {
        0 => {
            // Horizontal bar.
            let t = rng.gen_range(2..=4);
            let y0 = rng.gen_range(2..s - 2 - t);
            let x0 = rng.gen_range(1..=4);
            let x1 = rng.gen_range(s - 5..=s - 2);
            paint(
                &mut |x, y| y >= y0 && y < y0 + t && x >= x0 && x <= x1,
                &mut mask,
            );
        }
        1 => {
            // Vertical bar.
            let t = rng.gen_range(2..=4);
            let x0 = rng.gen_range(2..s - 2 - t);
            let y0 = rng.gen_range(1..=4);
            let y1 = rng.gen_range(s - 5..=s - 2);
            paint(
                &mut |x, y| x >= x0 && x < x0 + t && y >= y0 && y <= y1,
                &mut mask,
            );
        }
        2 => {
            // Filled disk.
            let cx = s / 2 + rng.gen_range(-6..=6);
            let cy = s / 2 + rng.gen_range(-6..=6);
            let r = rng.gen_range(4..=7);
            paint(
                &mut |x, y| (x - cx).pow(2) + (y - cy).pow(2) <= r * r,
                &mut mask,
            );
        }
        3 => {
            // Ring.
            let cx = s / 2 + rng.gen_range(-5..=5);
            let cy = s / 2 + rng.gen_range(-5..=5);
            let r = rng.gen_range(7..=11);
            let t = rng.gen_range(1..=2);
            paint(
                &mut |x, y| {
                    let d2 = (x - cx).pow(2) + (y - cy).pow(2);
                    d2 <= r * r && d2 > (r - t) * (r - t)
                },
                &mut mask,
            );
        }
        4 => {
            // Plus cross.
            let cx = s / 2 + rng.gen_range(-5..=5);
            let cy = s / 2 + rng.gen_range(-5..=5);
            let arm = rng.gen_range(8..=12);
            let t = rng.gen_range(1..=2);
            paint(
                &mut |x, y| {
                    let dx = x - cx;
                    let dy = y - cy;
                    (dx.abs() <= t && dy.abs() <= arm) || (dy.abs() <= t && dx.abs() <= arm)
                },
                &mut mask,
            );
        }
        5 => {
            // Checker patch.
            let cell = rng.gen_range(3..=5);
            let half = rng.gen_range(6..=9);
            let cx = s / 2 + rng.gen_range(-6..=6);
            let cy = s / 2 + rng.gen_range(-6..=6);
            paint(
                &mut |x, y| {
                    (x - cx).abs() <= half
                        && (y - cy).abs() <= half
                        && (x / cell + y / cell) % 2 == 0
                },
                &mut mask,
            );
        }
        6 => {
            // Main-diagonal stripe.
            let off = rng.gen_range(-8..=8);
            let t = rng.gen_range(2..=3);
            paint(&mut |x, y| (y - x - off).abs() <= t, &mut mask);
        }
        7 => {
            // Square outline.
            let cx = s / 2 + rng.gen_range(-5..=5);
            let cy = s / 2 + rng.gen_range(-5..=5);
            let half = rng.gen_range(5..=9);
            let t = rng.gen_range(1..=2);
            paint(
                &mut |x, y| {
                    let d = (x - cx).abs().max((y - cy).abs());
                    d <= half && d > half - t
                },
                &mut mask,
            );
        }
        8 => {
            // X cross (both diagonals).
            let cx = s / 2 + rng.gen_range(-5..=5);
            let cy = s / 2 + rng.gen_range(-5..=5);
            let arm = rng.gen_range(8..=12);
            let t = rng.gen_range(1..=2);
            paint(
                &mut |x, y| {
                    let dx = x - cx;
                    let dy = y - cy;
                    dx.abs() <= arm
                        && dy.abs() <= arm
                        && ((dy - dx).abs() <= t || (dy + dx).abs() <= t)
                },
                &mut mask,
            );
        }
        9 => {
            // Dot-grid patch.
            let spacing = rng.gen_range(5..=7);
            let half = rng.gen_range(7..=10);
            let cx = s / 2 + rng.gen_range(-6..=6);
            let cy = s / 2 + rng.gen_range(-6..=6);
            let r = rng.gen_range(1..=2);
            paint(
                &mut |x, y| {
                    if (x - cx).abs() > half || (y - cy).abs() > half {
                        return false;
                    }
                    let mx = x.rem_euclid(spacing);
                    let my = y.rem_euclid(spacing);
                    let dx = mx.min(spacing - mx);
                    let dy = my.min(spacing - my);
                    dx * dx + dy * dy <= r * r
                },
                &mut mask,
            );
        }
        _ => {
            return Err(Error::InvalidArgument(format!(
                "shape class {class} out of range"
            )))
        }
    }

    Ok(mask)
}
