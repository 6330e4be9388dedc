//! Block-fading channel simulation on a subcarrier × symbol grid.
//!
//! Gains are drawn cell-by-cell as CN(0, 1), smoothed with a separable
//! circular Gaussian kernel to introduce time/frequency correlation, and
//! renormalised to unit mean power. Transmission is flat per cell:
//! `y = H ⊙ x + n`.

mod dataset;
mod grid;
mod pilots;

pub use dataset::{read_dataset, write_dataset, ChannelDataset, DATASET_MAGIC, DATASET_VERSION};
pub use grid::ComplexGrid;
pub use pilots::{ls_estimate, PilotPattern};

use num_complex::{Complex32, Complex64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Smallest accepted grid extent along either axis.
pub const MIN_EXTENT: usize = 4;

#[derive(Debug, thiserror::Error)]
pub enum ChannelError {
    #[error("grid extents {rows}x{cols} below the {MIN_EXTENT}x{MIN_EXTENT} minimum")]
    GridTooSmall { rows: usize, cols: usize },
    #[error("extent mismatch: {left} vs {right}")]
    ExtentMismatch { left: String, right: String },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("pilot pattern is empty")]
    EmptyPattern,
    #[error("reference grid has zero power")]
    ZeroReference,
    #[error("dataset format: {0}")]
    Format(String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

/// True gains plus the parameters that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub gains: ComplexGrid,
    pub sigma_f: f64,
    pub sigma_t: f64,
    pub seed: u64,
}

/// Draws a correlated Rayleigh-fading gain grid.
///
/// `sigma_f` smooths along rows (subcarriers), `sigma_t` along columns
/// (symbols); both are standard deviations in grid cells, and 0 disables
/// smoothing on that axis.
pub fn gen_channel(
    seed: u64,
    rows: usize,
    cols: usize,
    sigma_f: f64,
    sigma_t: f64,
) -> Result<ChannelRealization, ChannelError> {
    ComplexGrid::check_extents(rows, cols)?;
    if !(sigma_f >= 0.0 && sigma_f.is_finite() && sigma_t >= 0.0 && sigma_t.is_finite()) {
        return Err(ChannelError::InvalidParameter(format!(
            "smoothing stds must be finite and non-negative (sigma_f {sigma_f}, sigma_t {sigma_t})"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = std::f64::consts::FRAC_1_SQRT_2;
    let mut cells: Vec<Complex64> = (0..rows * cols)
        .map(|_| {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            Complex64::new(re * half, im * half)
        })
        .collect();

    if sigma_f > 0.0 {
        let kernel = gaussian_kernel(sigma_f);
        let mut out = vec![Complex64::new(0.0, 0.0); cells.len()];
        for r in 0..rows {
            for c in 0..cols {
                let mut acc = Complex64::new(0.0, 0.0);
                for &(offset, w) in kernel.iter() {
                    let rr = (r as isize + offset).rem_euclid(rows as isize) as usize;
                    acc += cells[rr * cols + c] * w;
                }
                out[r * cols + c] = acc;
            }
        }
        cells = out;
    }
    if sigma_t > 0.0 {
        let kernel = gaussian_kernel(sigma_t);
        let mut out = vec![Complex64::new(0.0, 0.0); cells.len()];
        for r in 0..rows {
            let row = &cells[r * cols..(r + 1) * cols];
            for c in 0..cols {
                let mut acc = Complex64::new(0.0, 0.0);
                for &(offset, w) in kernel.iter() {
                    let cc = (c as isize + offset).rem_euclid(cols as isize) as usize;
                    acc += row[cc] * w;
                }
                out[r * cols + c] = acc;
            }
        }
        cells = out;
    }

    let power = cells.iter().map(|v| v.norm_sqr()).sum::<f64>() / cells.len() as f64;
    let scale = if power > 0.0 { 1.0 / power.sqrt() } else { 1.0 };
    let values = cells
        .into_iter()
        .map(|v| Complex32::new((v.re * scale) as f32, (v.im * scale) as f32))
        .collect();
    Ok(ChannelRealization {
        gains: ComplexGrid::from_values(rows, cols, values)?,
        sigma_f,
        sigma_t,
        seed,
    })
}

/// `(offset, weight)` taps of a unit-sum Gaussian truncated at 3σ.
fn gaussian_kernel(sigma: f64) -> Vec<(isize, f64)> {
    let radius = (3.0 * sigma).ceil() as isize;
    let mut taps: Vec<(isize, f64)> = (-radius..=radius)
        .map(|d| (d, (-(d * d) as f64 / (2.0 * sigma * sigma)).exp()))
        .collect();
    let total: f64 = taps.iter().map(|t| t.1).sum();
    for t in &mut taps {
        t.1 /= total;
    }
    taps
}

/// Noise variance per complex cell for a given SNR; zero when `snr_db` is
/// `+∞` (the noiseless sentinel).
pub fn noise_variance(snr_db: f64) -> f64 {
    if snr_db == f64::INFINITY {
        0.0
    } else {
        10f64.powf(-snr_db / 10.0)
    }
}

/// `y = H ⊙ x + n` with `n ~ CN(0, 10^(-snr_db/10))` per cell.
///
/// Pass `f64::INFINITY` as `snr_db` to disable noise. The noise draw depends
/// only on `noise_seed`, so a fixed seed gives the same underlying noise
/// pattern at every SNR.
pub fn apply_channel(
    x: &ComplexGrid,
    h: &ChannelRealization,
    snr_db: f64,
    noise_seed: u64,
) -> Result<ComplexGrid, ChannelError> {
    x.check_same_extents(&h.gains)?;
    if snr_db.is_nan() || snr_db == f64::NEG_INFINITY {
        return Err(ChannelError::InvalidParameter(format!("snr_db {snr_db}")));
    }
    let var = noise_variance(snr_db);
    let mut y = x.clone();
    for (v, &g) in y.values_mut().iter_mut().zip(h.gains.values()) {
        *v *= g;
    }
    if var > 0.0 {
        let std = (var / 2.0).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(noise_seed);
        for v in y.values_mut() {
            let re: f64 = StandardNormal.sample(&mut rng);
            let im: f64 = StandardNormal.sample(&mut rng);
            *v += Complex32::new((re * std) as f32, (im * std) as f32);
        }
    }
    Ok(y)
}

/// Normalised MSE `Σ|est − truth|² / Σ|truth|²`.
pub fn nmse(est: &ComplexGrid, truth: &ComplexGrid) -> Result<f64, ChannelError> {
    est.check_same_extents(truth)?;
    let mut num = 0.0f64;
    let mut den = 0.0f64;
    for (&e, &t) in est.values().iter().zip(truth.values()) {
        let d = Complex64::new(e.re as f64 - t.re as f64, e.im as f64 - t.im as f64);
        num += d.norm_sqr();
        den += (t.re as f64).powi(2) + (t.im as f64).powi(2);
    }
    if den == 0.0 {
        return Err(ChannelError::ZeroReference);
    }
    Ok(num / den)
}

/// Overwrites the pilot cells of `x` with the pattern's pilot symbols.
pub fn insert_pilots(x: &ComplexGrid, pattern: &PilotPattern) -> Result<ComplexGrid, ChannelError> {
    pattern.check_fits(x)?;
    let mut out = x.clone();
    for (&(r, c), &p) in pattern.positions().iter().zip(pattern.symbols()) {
        out.set(r, c, p);
    }
    Ok(out)
}
