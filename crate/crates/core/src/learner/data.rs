//! Training data: procedural texture tiles, an optional on-disk tile corpus,
//! and the Dirichlet split across satellites.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal};

use super::{derive_seed, LearnerError};

/// Number of texture families in the synthetic generator.
pub const N_CLASSES: u8 = 10;

/// Grayscale tiles with pixels in `[0, 1]`, stored row-major.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub samples: Vec<Vec<f64>>,
    /// Class of each sample, used by the partitioner.
    pub labels: Vec<u8>,
    /// Tile width in pixels.
    pub width: usize,
    pub owner: Option<u32>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    fn subset(&self, indices: &[usize], owner: Option<u32>) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            width: self.width,
            owner,
        }
    }
}

/// `n` tiles of `width × width` pixels cycling through the ten texture
/// families. Sample `i` depends only on `(seed, i)`.
pub fn synthetic_dataset(n: usize, width: usize, seed: u64) -> Dataset {
    let mut samples = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % N_CLASSES as usize) as u8;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, i as u64));
        samples.push(texture(class, width, &mut rng));
        labels.push(class);
    }
    Dataset {
        samples,
        labels,
        width,
        owner: None,
    }
}

fn texture(class: u8, width: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mean = rng.random_range(0.3..0.7);
    let amp = rng.random_range(0.2..0.3);
    let freq = rng.random_range(1.0..2.5);
    let phase = rng.random_range(0.0..TAU);
    let angle = rng.random_range(0.0..TAU);
    let (cx, cy) = (rng.random_range(0.2..0.8), rng.random_range(0.2..0.8));
    let sigma = rng.random_range(0.15..0.3);
    let mix: Vec<(f64, f64, f64)> = (0..3)
        .map(|_| (rng.random_range(0.0..2.0), rng.random_range(0.0..2.0), rng.random_range(0.0..TAU)))
        .collect();
    let grain = Normal::new(0.0, 0.02).expect("valid normal");
    let mut px = Vec::with_capacity(width * width);
    for r in 0..width {
        for c in 0..width {
            let u = (c as f64 + 0.5) / width as f64;
            let v = (r as f64 + 0.5) / width as f64;
            let wave = |t: f64| (TAU * freq * t + phase).sin();
            let shape = match class {
                0 => wave(v),
                1 => wave(u),
                2 => wave((u + v) / 2f64.sqrt()),
                3 => wave((u - v) / 2f64.sqrt()),
                4 => (wave(u) * (TAU * freq * v + angle).sin()).signum(),
                5 => 1.0 - 2.0 * ((u - cx).hypot(v - cy) / 0.8).min(1.0),
                6 => 2.0 * ((u - 0.5) * angle.cos() + (v - 0.5) * angle.sin()),
                7 => 2.0 * (-((u - cx).powi(2) + (v - cy).powi(2)) / (2.0 * sigma * sigma)).exp() - 1.0,
                8 => (TAU * freq * (u - cx).hypot(v - cy) + phase).cos(),
                _ => {
                    mix.iter()
                        .map(|(fu, fv, ph)| (TAU * (fu * u + fv * v) + ph).cos())
                        .sum::<f64>()
                        / 3.0
                }
            };
            px.push((mean + amp * shape + grain.sample(rng)).clamp(0.0, 1.0));
        }
    }
    px
}

/// Cuts every readable image in `dir` into non-overlapping `tile × tile`
/// grayscale tiles. Files are visited in name order and file `i` labels its
/// tiles `i mod 10`.
pub fn load_tile_corpus(dir: &Path, tile: usize) -> Result<Dataset, LearnerError> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| LearnerError::Corpus(format!("{}: {e}", dir.display())))?
        .filter_map(|entry| entry.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    paths.sort();
    let mut out = Dataset {
        width: tile,
        ..Dataset::default()
    };
    let mut file_index = 0usize;
    for path in paths {
        let Ok(img) = image::open(&path) else {
            log::debug!("skipping unreadable {}", path.display());
            continue;
        };
        let gray = img.to_luma8();
        let (w, h) = (gray.width() as usize, gray.height() as usize);
        let label = (file_index % N_CLASSES as usize) as u8;
        file_index += 1;
        for ty in 0..h / tile {
            for tx in 0..w / tile {
                let mut px = Vec::with_capacity(tile * tile);
                for r in 0..tile {
                    for c in 0..tile {
                        px.push(gray.get_pixel((tx * tile + c) as u32, (ty * tile + r) as u32)[0] as f64 / 255.0);
                    }
                }
                out.samples.push(px);
                out.labels.push(label);
            }
        }
    }
    if out.is_empty() {
        return Err(LearnerError::Corpus(format!("no {tile}x{tile} tiles under {}", dir.display())));
    }
    Ok(out)
}

/// Splits `total` across `n_clients` satellites.
///
/// For each class, client proportions come from a symmetric Dirichlet(λ)
/// draw (normalized Gamma(λ, 1) variates) and the class's shuffled samples
/// are cut at the rounded cumulative proportions. Shards are disjoint, cover
/// every sample and keep the original sample order.
pub fn dirichlet_partition(total: &Dataset, n_clients: usize, lambda: f64, seed: u64) -> Vec<Dataset> {
    assert!(n_clients >= 1, "at least one client");
    assert!(lambda > 0.0, "concentration must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = Gamma::new(lambda, 1.0).expect("positive shape");
    let mut by_class: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
    for (i, &label) in total.labels.iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }
    let mut shards: Vec<Vec<usize>> = vec![Vec::new(); n_clients];
    for indices in by_class.values_mut() {
        indices.shuffle(&mut rng);
        let mut props: Vec<f64> = (0..n_clients).map(|_| gamma.sample(&mut rng)).collect();
        let sum: f64 = props.iter().sum();
        if sum > 0.0 {
            props.iter_mut().for_each(|p| *p /= sum);
        } else {
            // Every variate underflowed; hand the class to one client.
            let pick = rng.random_range(0..n_clients);
            props = (0..n_clients).map(|j| if j == pick { 1.0 } else { 0.0 }).collect();
        }
        let n = indices.len();
        let mut start = 0usize;
        let mut cum = 0.0;
        for (j, p) in props.iter().enumerate() {
            cum += p;
            let end = if j + 1 == n_clients {
                n
            } else {
                ((cum * n as f64).round() as usize).clamp(start, n)
            };
            shards[j].extend_from_slice(&indices[start..end]);
            start = end;
        }
    }
    shards
        .into_iter()
        .enumerate()
        .map(|(j, mut idx)| {
            idx.sort_unstable();
            total.subset(&idx, Some(j as u32))
        })
        .collect()
}
