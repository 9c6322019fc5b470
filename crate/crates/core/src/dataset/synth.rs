use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{save_manifest, ManifestRecord, Modality, CANONICAL_SIZE};
use crate::error::{Error, Result};
use crate::features::Gradients;
use crate::raster::ImageTensor;

/// How the skull image of an identity is derived from its face.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SynthStyle {
    /// Blur, contrast compression and gradient emphasis.
    #[default]
    Degraded,
    /// The skull is the face image itself (no modality gap).
    Identical,
}

/// Records and their decoded images, index-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub records: Vec<ManifestRecord>,
    pub images: Vec<ImageTensor>,
}

impl Corpus {
    pub fn extend(&mut self, other: Corpus) {
        self.records.extend(other.records);
        self.images.extend(other.images);
    }

    pub fn image(&self, sample_id: &str) -> Option<&ImageTensor> {
        self.records
            .iter()
            .position(|r| r.sample_id == sample_id)
            .map(|i| &self.images[i])
    }
}

struct Gabor {
    cy: f64,
    cx: f64,
    theta: f64,
    wavelength: f64,
    sigma: f64,
    phase: f64,
    amplitude: f64,
}

/// Geometry and texture of one synthetic identity.
struct Identity {
    head_ry: f64,
    head_rx: f64,
    eye_row: f64,
    eye_gap: f64,
    mouth_row: f64,
    patterns: Vec<Gabor>,
}

impl Identity {
    fn random(rng: &mut ChaCha8Rng) -> Self {
        let patterns = (0..6)
            .map(|_| Gabor {
                cy: rng.random_range(14.0..50.0),
                cx: rng.random_range(16.0..48.0),
                theta: rng.random_range(0.0..PI),
                wavelength: rng.random_range(10.0..24.0),
                sigma: rng.random_range(6.0..12.0),
                phase: rng.random_range(0.0..2.0 * PI),
                amplitude: rng.random_range(0.15..0.3) * if rng.random_bool(0.5) { 1.0 } else { -1.0 },
            })
            .collect();
        Identity {
            head_ry: rng.random_range(25.0..29.0),
            head_rx: rng.random_range(18.0..23.0),
            eye_row: rng.random_range(22.0..27.0),
            eye_gap: rng.random_range(9.0..13.0),
            mouth_row: rng.random_range(42.0..48.0),
            patterns,
        }
    }

    fn render(&self) -> ImageTensor {
        let c = (CANONICAL_SIZE as f64 - 1.0) / 2.0;
        let bump = |y: f64, x: f64, cy: f64, cx: f64, sy: f64, sx: f64| {
            (-((y - cy).powi(2) / (2.0 * sy * sy) + (x - cx).powi(2) / (2.0 * sx * sx))).exp()
        };
        ImageTensor::from_fn_clamped(CANONICAL_SIZE, CANONICAL_SIZE, |r, col| {
            let (y, x) = (r as f64, col as f64);
            // soft-edged head ellipse
            let rho = ((y - c) / self.head_ry).powi(2) + ((x - c) / self.head_rx).powi(2);
            let head = 1.0 / (1.0 + ((rho - 1.0) * 8.0).exp());
            let mut v = 0.35 + 0.15 * head;
            v -= 0.12 * bump(y, x, self.eye_row, c - self.eye_gap, 2.5, 3.5);
            v -= 0.12 * bump(y, x, self.eye_row, c + self.eye_gap, 2.5, 3.5);
            v += 0.05 * bump(y, x, (self.eye_row + self.mouth_row) / 2.0, c, 5.0, 2.0);
            v -= 0.1 * bump(y, x, self.mouth_row, c, 2.0, 6.0);
            for g in &self.patterns {
                let (dy, dx) = (y - g.cy, x - g.cx);
                let u = dx * g.theta.cos() + dy * g.theta.sin();
                let envelope = (-(dy * dy + dx * dx) / (2.0 * g.sigma * g.sigma)).exp();
                v += g.amplitude * envelope * (2.0 * PI * u / g.wavelength + g.phase).cos();
            }
            v * (0.6 + 0.4 * head)
        })
    }
}

fn gaussian_blur(img: &ImageTensor, sigma: f64) -> ImageTensor {
    let radius = (3.0 * sigma).ceil() as isize;
    let kernel: Vec<f64> = (-radius..=radius)
        .map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = kernel.iter().sum();
    let kernel: Vec<f64> = kernel.iter().map(|k| k / total).collect();
    let (h, w) = (img.height(), img.width());
    let horizontal = ImageTensor::from_fn_clamped(h, w, |r, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * img.get_clamped(r as isize, c as isize + i as isize - radius))
            .sum()
    });
    ImageTensor::from_fn_clamped(h, w, |r, c| {
        kernel
            .iter()
            .enumerate()
            .map(|(i, k)| k * horizontal.get_clamped(r as isize + i as isize - radius, c as isize))
            .sum()
    })
}

/// The fixed cross-modality degradation: Gaussian blur (σ = 2), contrast
/// compressed halfway toward mid-gray, blended 50/50 with the max-normalized
/// gradient magnitude of the blurred image.
pub fn skull_degradation(face: &ImageTensor) -> ImageTensor {
    let blurred = gaussian_blur(face, 2.0);
    let grad = Gradients::compute(&blurred);
    let peak = grad.magnitude.iter().copied().fold(0.0, f64::max);
    ImageTensor::from_fn_clamped(face.height(), face.width(), |r, c| {
        let compressed = 0.5 + 0.5 * (blurred.get(r, c) - 0.5);
        let edge = if peak > 0.0 {
            grad.magnitude[r * face.width() + c] / peak
        } else {
            0.0
        };
        0.5 * compressed + 0.5 * edge
    })
}

fn add_noise(img: &ImageTensor, sd: f64, rng: &mut ChaCha8Rng) -> ImageTensor {
    if sd == 0.0 {
        return img.clone();
    }
    let pixels = img.pixels();
    ImageTensor::from_fn_clamped(img.height(), img.width(), |r, c| {
        let z: f64 = StandardNormal.sample(rng);
        pixels[r * img.width() + c] + sd * z
    })
}

fn record(id: String, subject: String, modality: Modality, labeled: bool) -> ManifestRecord {
    let dir = match modality {
        Modality::Face => "faces",
        Modality::Skull => "skulls",
    };
    ManifestRecord {
        path: format!("{dir}/{id}.png"),
        sample_id: id,
        subject_id: subject,
        modality,
        labeled,
        split_hint: None,
        extended_gallery: None,
    }
}

fn check_noise(noise: f64) -> Result<()> {
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::argument(format!("noise {noise} must be finite and non-negative")));
    }
    Ok(())
}

/// Paired corpus of `n_subjects` labeled face/skull pairs plus
/// `2·n_subjects` unlabeled skulls of fresh identities. Faces mix a shared
/// head layout with per-identity geometry and oriented Gabor patterns;
/// skulls apply the fixed degradation to the same noiseless face. Both
/// receive independent Gaussian pixel noise with standard deviation `noise`.
pub fn synth_paired(n_subjects: usize, noise: f64, seed: u64) -> Result<Corpus> {
    synth_paired_with(n_subjects, noise, seed, SynthStyle::Degraded)
}

pub fn synth_paired_with(
    n_subjects: usize,
    noise: f64,
    seed: u64,
    style: SynthStyle,
) -> Result<Corpus> {
    if n_subjects < 5 {
        return Err(Error::argument(format!("n_subjects = {n_subjects}; at least 5 required")));
    }
    check_noise(noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let skull_of = |face: &ImageTensor| match style {
        SynthStyle::Degraded => skull_degradation(face),
        SynthStyle::Identical => face.clone(),
    };
    let mut corpus = Corpus {
        records: Vec::with_capacity(4 * n_subjects),
        images: Vec::with_capacity(4 * n_subjects),
    };
    for i in 0..n_subjects {
        let clean = Identity::random(&mut rng).render();
        let face = add_noise(&clean, noise, &mut rng);
        let skull = match style {
            SynthStyle::Degraded => add_noise(&skull_of(&clean), noise, &mut rng),
            SynthStyle::Identical => face.clone(),
        };
        let subject = format!("s{i:03}");
        corpus.records.push(record(format!("face_{i:03}"), subject.clone(), Modality::Face, true));
        corpus.images.push(face);
        corpus.records.push(record(format!("skull_{i:03}"), subject, Modality::Skull, true));
        corpus.images.push(skull);
    }
    for i in 0..2 * n_subjects {
        let clean = Identity::random(&mut rng).render();
        let skull = add_noise(&skull_of(&clean), noise, &mut rng);
        corpus
            .records
            .push(record(format!("uskull_{i:03}"), format!("u{i:03}"), Modality::Skull, false));
        corpus.images.push(skull);
    }
    Ok(corpus)
}

/// Unlabeled faces of fresh identities flagged as extended-gallery records.
pub fn synth_extended_gallery(count: usize, noise: f64, seed: u64) -> Result<Corpus> {
    check_noise(noise)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Corpus {
        records: Vec::with_capacity(count),
        images: Vec::with_capacity(count),
    };
    for i in 0..count {
        let clean = Identity::random(&mut rng).render();
        let mut rec = record(format!("xface_{i:04}"), format!("x{i:04}"), Modality::Face, false);
        rec.extended_gallery = Some(true);
        corpus.records.push(rec);
        corpus.images.push(add_noise(&clean, noise, &mut rng));
    }
    Ok(corpus)
}

/// Writes every image as an 8-bit PNG under `dir` at its record path and
/// the manifest as `dir/manifest.json`, which is returned.
pub fn write_corpus(corpus: &Corpus, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    for (rec, img) in corpus.records.iter().zip(&corpus.images) {
        let path = dir.join(&rec.path);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        let gray = image::GrayImage::from_raw(img.width() as u32, img.height() as u32, img.to_gray8())
            .expect("buffer matches dimensions");
        gray.save(&path)
            .map_err(|e| Error::data(format!("cannot write {}: {e}", path.display())))?;
    }
    let manifest = dir.join("manifest.json");
    save_manifest(&corpus.records, &manifest)?;
    Ok(manifest)
}
