use num_complex::Complex32;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ChannelError, ComplexGrid};

/// Known QPSK pilot symbols at fixed grid positions.
#[derive(Debug, Clone, PartialEq)]
pub struct PilotPattern {
    rows: usize,
    cols: usize,
    spacing: (usize, usize),
    seed: u64,
    positions: Vec<(usize, usize)>,
    symbols: Vec<Complex32>,
    index: Vec<Option<u32>>,
}

fn qpsk_point(i: u32) -> Complex32 {
    let a = std::f32::consts::FRAC_1_SQRT_2;
    match i & 3 {
        0 => Complex32::new(a, a),
        1 => Complex32::new(a, -a),
        2 => Complex32::new(-a, a),
        _ => Complex32::new(-a, -a),
    }
}

impl PilotPattern {
    /// Pilots at every `(i·d_f, j·d_t)` inside a `rows × cols` grid, with
    /// seed-derived QPSK symbols.
    pub fn lattice(rows: usize, cols: usize, d_f: usize, d_t: usize, seed: u64) -> Result<Self, ChannelError> {
        ComplexGrid::check_extents(rows, cols)?;
        if d_f == 0 || d_t == 0 {
            return Err(ChannelError::InvalidParameter(format!("pilot spacing {d_f}x{d_t}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut positions = Vec::new();
        let mut symbols = Vec::new();
        for r in (0..rows).step_by(d_f) {
            for c in (0..cols).step_by(d_t) {
                positions.push((r, c));
                symbols.push(qpsk_point(rng.random_range(0..4)));
            }
        }
        let mut pattern = PilotPattern {
            rows,
            cols,
            spacing: (d_f, d_t),
            seed,
            positions,
            symbols,
            index: Vec::new(),
        };
        pattern.rebuild_index();
        Ok(pattern)
    }

    /// Arbitrary positions and symbols; symbols must have unit modulus.
    pub fn custom(
        rows: usize,
        cols: usize,
        positions: Vec<(usize, usize)>,
        symbols: Vec<Complex32>,
    ) -> Result<Self, ChannelError> {
        ComplexGrid::check_extents(rows, cols)?;
        if positions.len() != symbols.len() {
            return Err(ChannelError::InvalidParameter(format!(
                "{} positions but {} symbols",
                positions.len(),
                symbols.len()
            )));
        }
        if let Some(&(r, c)) = positions.iter().find(|&&(r, c)| r >= rows || c >= cols) {
            return Err(ChannelError::InvalidParameter(format!("pilot ({r}, {c}) outside {rows}x{cols}")));
        }
        if let Some(s) = symbols.iter().find(|s| (s.norm() - 1.0).abs() > 1e-5) {
            return Err(ChannelError::InvalidParameter(format!("pilot symbol {s} is not unit modulus")));
        }
        let mut pattern = PilotPattern {
            rows,
            cols,
            spacing: (0, 0),
            seed: 0,
            positions,
            symbols,
            index: Vec::new(),
        };
        pattern.rebuild_index();
        Ok(pattern)
    }

    fn rebuild_index(&mut self) {
        self.index = vec![None; self.rows * self.cols];
        for (i, &(r, c)) in self.positions.iter().enumerate() {
            self.index[r * self.cols + c] = Some(i as u32);
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Lattice spacing `(d_f, d_t)`; `(0, 0)` for custom patterns.
    pub fn spacing(&self) -> (usize, usize) {
        self.spacing
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn positions(&self) -> &[(usize, usize)] {
        &self.positions
    }

    pub fn symbols(&self) -> &[Complex32] {
        &self.symbols
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn is_pilot(&self, r: usize, c: usize) -> bool {
        self.index[r * self.cols + c].is_some()
    }

    pub fn symbol_at(&self, r: usize, c: usize) -> Option<Complex32> {
        self.index[r * self.cols + c].map(|i| self.symbols[i as usize])
    }

    /// Row-major flat indices of the non-pilot cells.
    pub fn data_cells(&self) -> Vec<usize> {
        (0..self.rows * self.cols).filter(|&i| self.index[i].is_none()).collect()
    }

    pub(crate) fn check_fits(&self, grid: &ComplexGrid) -> Result<(), ChannelError> {
        if (grid.rows(), grid.cols()) != (self.rows, self.cols) {
            return Err(ChannelError::ExtentMismatch {
                left: format!("pattern {}x{}", self.rows, self.cols),
                right: format!("grid {}x{}", grid.rows(), grid.cols()),
            });
        }
        Ok(())
    }
}

/// `(lower index, upper index, weight of upper)` bracketing `x` in the sorted
/// `points`; clamps to the nearest end point outside the covered range.
fn bracket(points: &[usize], x: usize) -> (usize, usize, f32) {
    let last = points.len() - 1;
    if x <= points[0] {
        return (0, 0, 0.0);
    }
    if x >= points[last] {
        return (last, last, 0.0);
    }
    let hi = points.partition_point(|&p| p <= x);
    let lo = hi - 1;
    let w = (x - points[lo]) as f32 / (points[hi] - points[lo]) as f32;
    (lo, hi, w)
}

/// Least-squares pilot estimate `y/p` on the lattice, bilinearly
/// interpolated between pilots and clamped to the nearest pilot row/column
/// beyond the outermost pilots.
pub fn ls_estimate(y: &ComplexGrid, pattern: &PilotPattern) -> Result<ComplexGrid, ChannelError> {
    pattern.check_fits(y)?;
    if pattern.is_empty() {
        return Err(ChannelError::EmptyPattern);
    }
    let mut prow: Vec<usize> = pattern.positions().iter().map(|p| p.0).collect();
    let mut pcol: Vec<usize> = pattern.positions().iter().map(|p| p.1).collect();
    prow.sort_unstable();
    prow.dedup();
    pcol.sort_unstable();
    pcol.dedup();
    if prow.len() * pcol.len() != pattern.len() {
        return Err(ChannelError::InvalidParameter(
            "interpolation needs pilots on a full rectangular lattice".into(),
        ));
    }
    let mut lattice = vec![Complex32::new(0.0, 0.0); pattern.len()];
    for (i, &r) in prow.iter().enumerate() {
        for (j, &c) in pcol.iter().enumerate() {
            let p = pattern
                .symbol_at(r, c)
                .ok_or_else(|| ChannelError::InvalidParameter("interpolation needs a full lattice".into()))?;
            lattice[i * pcol.len() + j] = y.get(r, c) / p;
        }
    }
    let at = |i: usize, j: usize| lattice[i * pcol.len() + j];
    let col_brackets: Vec<_> = (0..y.cols()).map(|c| bracket(&pcol, c)).collect();
    let mut out = ComplexGrid::filled(y.rows(), y.cols(), Complex32::new(0.0, 0.0));
    for r in 0..y.rows() {
        let (i0, i1, wr) = bracket(&prow, r);
        for (c, &(j0, j1, wc)) in col_brackets.iter().enumerate() {
            let v = if wr == 0.0 && wc == 0.0 {
                at(i0, j0)
            } else {
                at(i0, j0) * ((1.0 - wr) * (1.0 - wc))
                    + at(i0, j1) * ((1.0 - wr) * wc)
                    + at(i1, j0) * (wr * (1.0 - wc))
                    + at(i1, j1) * (wr * wc)
            };
            out.set(r, c, v);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::super::{apply_channel, gen_channel, insert_pilots, nmse, ChannelRealization};
    use super::*;

    #[test]
    fn lattice_counts_and_unit_symbols() {
        let p = PilotPattern::lattice(32, 32, 4, 4, 1).unwrap();
        assert_eq!(p.len(), 64);
        assert_eq!(p.data_cells().len(), 1024 - 64);
        assert!(p.symbols().iter().all(|s| (s.norm() - 1.0).abs() < 1e-6));
        // every 4x4 tile holds a pilot
        for tr in 0..8 {
            for tc in 0..8 {
                assert!(p.positions().iter().any(|&(r, c)| r / 4 == tr && c / 4 == tc));
            }
        }
    }

    #[test]
    fn full_pilot_coverage_recovers_exactly() {
        let h = gen_channel(4, 8, 8, 1.0, 1.0).unwrap();
        let pattern = PilotPattern::lattice(8, 8, 1, 1, 9).unwrap();
        let x = insert_pilots(&ComplexGrid::filled(8, 8, Complex32::new(0.0, 0.0)), &pattern).unwrap();
        let y = apply_channel(&x, &h, f64::INFINITY, 0).unwrap();
        let est = ls_estimate(&y, &pattern).unwrap();
        for (a, b) in est.values().iter().zip(h.gains.values()) {
            assert!((a - b).norm() < 1e-6);
        }
    }

    #[test]
    fn constant_channel_interpolates_to_constant() {
        let c = Complex32::new(0.3, -0.8);
        let h = ChannelRealization {
            gains: ComplexGrid::filled(32, 32, c),
            sigma_f: 0.0,
            sigma_t: 0.0,
            seed: 0,
        };
        let pattern = PilotPattern::lattice(32, 32, 4, 4, 2).unwrap();
        let x = insert_pilots(&ComplexGrid::filled(32, 32, Complex32::new(0.0, 0.0)), &pattern).unwrap();
        let y = apply_channel(&x, &h, f64::INFINITY, 0).unwrap();
        let est = ls_estimate(&y, &pattern).unwrap();
        assert!(est.values().iter().all(|v| (v - c).norm() < 1e-6));
    }

    #[test]
    fn empty_pattern_rejected() {
        let pattern = PilotPattern::custom(8, 8, vec![], vec![]).unwrap();
        let y = ComplexGrid::filled(8, 8, Complex32::new(1.0, 0.0));
        assert!(matches!(ls_estimate(&y, &pattern), Err(ChannelError::EmptyPattern)));
    }

    #[test]
    fn custom_rejects_non_unit_symbols() {
        assert!(PilotPattern::custom(8, 8, vec![(0, 0)], vec![Complex32::new(2.0, 0.0)]).is_err());
        assert!(PilotPattern::custom(8, 8, vec![(8, 0)], vec![Complex32::new(1.0, 0.0)]).is_err());
    }

    #[test]
    fn ls_nmse_falls_with_snr() {
        let pattern = PilotPattern::lattice(32, 32, 4, 4, 3).unwrap();
        let x = insert_pilots(&ComplexGrid::filled(32, 32, Complex32::new(0.0, 0.0)), &pattern).unwrap();
        let mut previous = f64::INFINITY;
        for snr in [0.0, 5.0, 10.0, 15.0, 20.0] {
            let mut total = 0.0;
            for i in 0..100u64 {
                let h = gen_channel(1000 + i, 32, 32, 4.0, 4.0).unwrap();
                let y = apply_channel(&x, &h, snr, 5000 + i).unwrap();
                total += nmse(&ls_estimate(&y, &pattern).unwrap(), &h.gains).unwrap();
            }
            let mean = total / 100.0;
            assert!(mean > 0.0);
            assert!(mean < previous, "snr {snr}: {mean} vs {previous}");
            previous = mean;
        }
    }
}
