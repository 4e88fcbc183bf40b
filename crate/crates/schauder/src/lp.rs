//! Dyadic (Littlewood-Paley) frequency decomposition on periodic grids.
//!
//! Blocks are cut with a fixed C^2 piecewise-quintic radial profile phi,
//! equal to 1 on `[0,1]` and 0 on `[2,inf)`, monotone in between:
//!
//! ```text
//! u_0^ = phi(|xi|) u^,   u_j^ = [phi(2^-j |xi|) - phi(2^-(j-1) |xi|)] u^
//! ```
//!
//! computed by FFT on power-of-two torus grids with equal axis lengths. The
//! block sup decay rate recovers the Hölder exponent; Bernstein constants
//! sup|grad u_j| / (2^j sup|u|) are recorded per band. The spectral Poisson
//! solver divides by |xi|^2 away from the zero mode; on a compact torus the
//! low-frequency flatness requirement degenerates to killing the xi = 0 mode,
//! which is enforced exactly.

use crate::error::{Error, Result};
use crate::grid::{DomainKind, Grid, GridFunction};
use num_complex::Complex;
use rustfft::FftPlanner;
use std::sync::Arc;

/// C^2 cutoff profile: 1 on `[0,1]`, 0 on `[2,inf)`, quintic in between.
pub fn cutoff_phi(t: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        1.0
    } else if t >= 2.0 {
        0.0
    } else {
        let s = t - 1.0;
        1.0 - (10.0 * s.powi(3) - 15.0 * s.powi(4) + 6.0 * s.powi(5))
    }
}

/// Spectral workspace: forward transform of a real field plus the signed
/// frequency table of the grid.
struct Spectrum {
    shape: Vec<usize>,
    /// physical frequency per (axis, index)
    freqs: Vec<Vec<f64>>,
    data: Vec<Complex<f64>>,
}

fn check_torus(grid: &Grid) -> Result<()> {
    if grid.domain.kind != DomainKind::Torus {
        return Err(Error::Unsupported(
            "spectral operations need a torus grid".into(),
        ));
    }
    Ok(())
}

fn check_pow2_equal(grid: &Grid) -> Result<()> {
    let shape = grid.shape()?;
    if shape.iter().any(|n| !n.is_power_of_two()) {
        return Err(Error::Unsupported(format!(
            "node counts {shape:?} must be powers of two"
        )));
    }
    let sides = &grid.domain.sides;
    if sides
        .windows(2)
        .any(|w| (w[0] - w[1]).abs() > 1e-14 * w[0].abs())
    {
        return Err(Error::Unsupported("axis lengths must be equal".into()));
    }
    if shape.windows(2).any(|w| w[0] != w[1]) {
        return Err(Error::Unsupported(
            "node counts must be equal per axis".into(),
        ));
    }
    Ok(())
}

fn fft_all_axes(shape: &[usize], data: &mut [Complex<f64>], inverse: bool) {
    let mut planner = FftPlanner::new();
    let dim = shape.len();
    let mut strides = vec![1usize; dim];
    for a in (0..dim.saturating_sub(1)).rev() {
        strides[a] = strides[a + 1] * shape[a + 1];
    }
    let total: usize = shape.iter().product();
    for a in 0..dim {
        let fft = if inverse {
            planner.plan_fft_inverse(shape[a])
        } else {
            planner.plan_fft_forward(shape[a])
        };
        let len = shape[a];
        let stride = strides[a];
        let mut line = vec![Complex::new(0.0, 0.0); len];
        // enumerate starts of lines along axis a
        for base in 0..total / len {
            // decompose base into the index with axis a removed
            let outer = base / stride;
            let inner = base % stride;
            let start = outer * stride * len + inner;
            for k in 0..len {
                line[k] = data[start + k * stride];
            }
            fft.process(&mut line);
            for k in 0..len {
                data[start + k * stride] = line[k];
            }
        }
    }
    if inverse {
        let scale = 1.0 / total as f64;
        for v in data.iter_mut() {
            *v *= scale;
        }
    }
}

fn forward(u: &GridFunction) -> Result<Spectrum> {
    check_torus(&u.grid)?;
    let shape = u.grid.shape()?.to_vec();
    let mut data: Vec<Complex<f64>> = u.values.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft_all_axes(&shape, &mut data, false);
    let mut freqs = Vec::with_capacity(shape.len());
    for (a, &n) in shape.iter().enumerate() {
        let side = u.grid.domain.sides[a];
        let base = crate::grid::TAU / side;
        let f: Vec<f64> = (0..n)
            .map(|k| {
                let signed = if k <= n / 2 {
                    k as isize
                } else {
                    k as isize - n as isize
                };
                base * signed as f64
            })
            .collect();
        freqs.push(f);
    }
    Ok(Spectrum { shape, freqs, data })
}

impl Spectrum {
    fn freq_norm(&self, flat: usize) -> f64 {
        let mut rem = flat;
        let mut s = 0.0;
        for a in (0..self.shape.len()).rev() {
            let idx = rem % self.shape[a];
            rem /= self.shape[a];
            let f = self.freqs[a][idx];
            s += f * f;
        }
        s.sqrt()
    }

    fn freq_component(&self, flat: usize, axis: usize) -> f64 {
        let dim = self.shape.len();
        let mut rem = flat;
        let mut out = 0.0;
        for a in (0..dim).rev() {
            let idx = rem % self.shape[a];
            rem /= self.shape[a];
            if a == axis {
                out = self.freqs[a][idx];
            }
        }
        out
    }

    fn max_freq(&self) -> f64 {
        let per_axis: f64 = self
            .freqs
            .iter()
            .map(|f| f.iter().fold(0.0f64, |m, v| m.max(v.abs())))
            .map(|m| m * m)
            .sum();
        per_axis.sqrt()
    }

    fn inverse_real(
        &self,
        grid: &Arc<Grid>,
        multiplier: impl Fn(usize) -> Complex<f64>,
    ) -> GridFunction {
        let mut data: Vec<Complex<f64>> = self
            .data
            .iter()
            .enumerate()
            .map(|(k, &v)| v * multiplier(k))
            .collect();
        fft_all_axes(&self.shape, &mut data, true);
        let values: Vec<f64> = data.iter().map(|c| c.re).collect();
        GridFunction::from_values(grid, values).expect("shape preserved")
    }
}

/// Dyadic decomposition of a periodic field.
pub struct LpDecomposition {
    pub grid: Arc<Grid>,
    /// blocks u_0 .. u_J in physical space
    pub blocks: Vec<GridFunction>,
    pub block_sups: Vec<f64>,
    /// per-block sup of the spectral gradient magnitude (l2 over axes)
    pub grad_sups: Vec<f64>,
    pub j_max: usize,
    /// true when the requested band count exceeded the grid's Nyquist band
    pub truncated: bool,
    pub sup_u: f64,
}

/// Band multiplier value for band j at radial frequency r.
fn band_multiplier(j: usize, r: f64) -> f64 {
    if j == 0 {
        cutoff_phi(r)
    } else {
        cutoff_phi(r / 2f64.powi(j as i32)) - cutoff_phi(r / 2f64.powi(j as i32 - 1))
    }
}

/// Decompose `u` into dyadic blocks 0..=j_bands.
pub fn lp_decompose(u: &GridFunction, j_bands: usize) -> Result<LpDecomposition> {
    check_torus(&u.grid)?;
    check_pow2_equal(&u.grid)?;
    let spec = forward(u)?;
    // bands with 2^{j-1} beyond the Nyquist frequency are identically zero
    let nyq_band = spec.max_freq().log2().floor() as usize + 1;
    let truncated = j_bands > nyq_band;
    let j_max = j_bands.min(nyq_band);
    let n = u.grid.node_count();
    let mut blocks = Vec::with_capacity(j_max + 1);
    let mut block_sups = Vec::with_capacity(j_max + 1);
    let mut grad_sups = Vec::with_capacity(j_max + 1);
    for j in 0..=j_max {
        let block = spec.inverse_real(&u.grid, |k| {
            Complex::new(band_multiplier(j, spec.freq_norm(k)), 0.0)
        });
        block_sups.push(block.sup_all());
        // spectral gradient of the block, for Bernstein constants
        let dim = u.grid.dim();
        let mut grad_sq = vec![0.0f64; n];
        for a in 0..dim {
            let da = spec.inverse_real(&u.grid, |k| {
                let m = band_multiplier(j, spec.freq_norm(k));
                Complex::new(0.0, spec.freq_component(k, a)) * m
            });
            for i in 0..n {
                grad_sq[i] += da.values[i] * da.values[i];
            }
        }
        grad_sups.push(grad_sq.iter().fold(0.0f64, |m, v| m.max(v.sqrt())));
        blocks.push(block);
    }
    Ok(LpDecomposition {
        grid: Arc::clone(&u.grid),
        blocks,
        block_sups,
        grad_sups,
        j_max,
        truncated,
        sup_u: u.sup_all(),
    })
}

impl LpDecomposition {
    /// Partial sum v_j = u_0 + ... + u_j.
    pub fn partial_sum(&self, j: usize) -> GridFunction {
        let j = j.min(self.j_max);
        let mut values = vec![0.0; self.grid.node_count()];
        for block in &self.blocks[..=j] {
            for (v, b) in values.iter_mut().zip(&block.values) {
                *v += b;
            }
        }
        GridFunction::from_values(&self.grid, values).expect("same grid")
    }

    pub fn reconstruct(&self) -> GridFunction {
        self.partial_sum(self.j_max)
    }
}

#[derive(Debug, Clone)]
pub struct BandConstant {
    pub band: usize,
    pub sup: f64,
    /// sup |grad u_j| / (2^j sup |u|)
    pub bernstein: f64,
}

#[derive(Debug, Clone)]
pub struct LpAlphaReport {
    /// -slope of log2 sup|u_j| against j, when fitted.
    pub alpha_hat: Option<f64>,
    pub fit_residual: Option<f64>,
    pub band_limited: bool,
    pub bands: Vec<BandConstant>,
    pub fitted_range: Option<(usize, usize)>,
}

/// Fit the Hölder exponent from block sup decay over bands `j_lo..=j_hi`
/// (clamped to the decomposition), and record Bernstein constants.
pub fn lp_alpha_estimate_range(
    dec: &LpDecomposition,
    j_lo: usize,
    j_hi: usize,
) -> Result<LpAlphaReport> {
    // Vacuous-band cutoff: spectral multipliers amplify FFT roundoff by up
    // to |xi|^2, so "empty" bands carry ~1e-10 of noise; 1e-8 of the peak
    // block keeps every genuine decade while rejecting them.
    let peak = dec.block_sups.iter().cloned().fold(0.0, f64::max);
    let thresh = 1e-8 * peak;
    let mut bands = Vec::new();
    for j in 0..=dec.j_max {
        let denom = 2f64.powi(j as i32) * dec.sup_u;
        bands.push(BandConstant {
            band: j,
            sup: dec.block_sups[j],
            bernstein: if denom > 0.0 {
                dec.grad_sups[j] / denom
            } else {
                0.0
            },
        });
    }
    let usable: Vec<usize> = (j_lo.max(1)..=j_hi.min(dec.j_max))
        .filter(|&j| dec.block_sups[j] > thresh)
        .collect();
    if usable.len() < 5 {
        return Ok(LpAlphaReport {
            alpha_hat: None,
            fit_residual: None,
            band_limited: true,
            bands,
            fitted_range: None,
        });
    }
    let n = usable.len() as f64;
    let sx: f64 = usable.iter().map(|&j| j as f64).sum();
    let sy: f64 = usable.iter().map(|&j| dec.block_sups[j].log2()).sum();
    let sxx: f64 = usable.iter().map(|&j| (j * j) as f64).sum();
    let sxy: f64 = usable
        .iter()
        .map(|&j| j as f64 * dec.block_sups[j].log2())
        .sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let residual = (usable
        .iter()
        .map(|&j| {
            let e = dec.block_sups[j].log2() - (slope * j as f64 + intercept);
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(LpAlphaReport {
        alpha_hat: Some(-slope),
        fit_residual: Some(residual),
        band_limited: false,
        bands,
        fitted_range: Some((*usable.first().unwrap(), *usable.last().unwrap())),
    })
}

/// Fit over all nonvacuous bands.
pub fn lp_alpha_estimate(dec: &LpDecomposition) -> Result<LpAlphaReport> {
    lp_alpha_estimate_range(dec, 1, dec.j_max)
}

/// Solve -Delta u = rho spectrally: u^ = rho^ / |xi|^2, u^(0) = 0.
///
/// The zero mode of rho must vanish (mean zero within 1e-12 relative);
/// this is the torus version of the low-frequency flatness needed on the
/// whole space.
pub fn lp_poisson_solve(rho: &GridFunction) -> Result<GridFunction> {
    check_torus(&rho.grid)?;
    let spec = forward(rho)?;
    let total = rho.grid.node_count() as f64;
    let mean = spec.data[0].re / total;
    let scale = rho.sup_all();
    if mean.abs() > 1e-12 * (1.0 + scale) {
        return Err(Error::InvalidArgument(format!(
            "lp_poisson_solve needs mean-zero density; mean = {mean:.3e}"
        )));
    }
    Ok(spec.inverse_real(&rho.grid, |k| {
        let r = spec.freq_norm(k);
        if r == 0.0 {
            Complex::new(0.0, 0.0)
        } else {
            Complex::new(1.0 / (r * r), 0.0)
        }
    }))
}

/// Spectral Laplacian (exact for band-limited fields).
pub fn spectral_laplacian(u: &GridFunction) -> Result<GridFunction> {
    let spec = forward(u)?;
    Ok(spec.inverse_real(&u.grid, |k| {
        let r = spec.freq_norm(k);
        Complex::new(-r * r, 0.0)
    }))
}

/// Spectral partial derivative along `axis`.
pub fn spectral_derivative(u: &GridFunction, axis: usize) -> Result<GridFunction> {
    let spec = forward(u)?;
    Ok(spec.inverse_real(&u.grid, |k| Complex::new(0.0, spec.freq_component(k, axis))))
}

/// Second-order periodic finite-difference Laplacian, for residual reports.
pub fn discrete_laplacian_periodic(u: &GridFunction) -> Result<GridFunction> {
    check_torus(&u.grid)?;
    let grid = &u.grid;
    let spacing = grid.spacing()?.to_vec();
    let n = grid.node_count();
    let mut out = vec![0.0; n];
    for i in 0..n {
        let mut acc = 0.0;
        for a in 0..grid.dim() {
            let m = grid.neighbor(i, a, -1).unwrap();
            let p = grid.neighbor(i, a, 1).unwrap();
            acc += (u.values[p] - 2.0 * u.values[i] + u.values[m]) / (spacing[a] * spacing[a]);
        }
        out[i] = acc;
    }
    GridFunction::from_values(grid, out)
}

/// Export blocks as CSV, one column per block.
pub fn blocks_to_csv(dec: &LpDecomposition) -> String {
    let mut out = String::new();
    out.push_str("node");
    for j in 0..=dec.j_max {
        out.push_str(&format!(",u_{j}"));
    }
    out.push('\n');
    for i in 0..dec.grid.node_count() {
        out.push_str(&format!("{i}"));
        for block in &dec.blocks {
            out.push_str(&format!(",{:.17e}", block.values[i]));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analytic::weierstrass;
    use crate::grid::{build_grid, DomainSpec, TAU};

    fn torus_1d(n: usize) -> Arc<Grid> {
        Arc::new(build_grid(&DomainSpec::torus(&[TAU]).unwrap(), n).unwrap())
    }

    #[test]
    fn cutoff_profile_shape() {
        assert_eq!(cutoff_phi(0.0), 1.0);
        assert_eq!(cutoff_phi(1.0), 1.0);
        assert_eq!(cutoff_phi(2.0), 0.0);
        assert_eq!(cutoff_phi(3.0), 0.0);
        let mut prev = 1.0;
        for k in 0..100 {
            let v = cutoff_phi(1.0 + k as f64 / 99.0);
            assert!((0.0..=1.0).contains(&v));
            assert!(v <= prev + 1e-15, "monotone between 1 and 2");
            prev = v;
        }
    }

    #[test]
    fn constant_lives_in_block_zero() {
        let g = torus_1d(64);
        let u = GridFunction::constant(&g, 2.5);
        let dec = lp_decompose(&u, 5).unwrap();
        assert!((dec.blocks[0].values[0] - 2.5).abs() < 1e-12);
        for j in 1..=dec.j_max {
            assert!(
                dec.block_sups[j] < 1e-12,
                "block {j} sup {}",
                dec.block_sups[j]
            );
        }
    }

    #[test]
    fn pure_mode_localizes() {
        let g = torus_1d(256);
        let u = GridFunction::sample(&g, |x| (32.0 * x[0]).cos());
        let dec = lp_decompose(&u, 8).unwrap();
        for j in 0..=dec.j_max {
            if (4..=6).contains(&j) {
                continue;
            }
            assert!(
                dec.block_sups[j] < 1e-10,
                "block {j} sup {}",
                dec.block_sups[j]
            );
        }
        let total: f64 = dec.block_sups.iter().sum();
        assert!(total > 0.9, "energy present near band 5");
        // zero-mean property of high blocks
        for j in 1..=dec.j_max {
            let mean: f64 =
                dec.blocks[j].values.iter().sum::<f64>() / dec.blocks[j].values.len() as f64;
            assert!(mean.abs() < 1e-12, "block {j} mean {mean}");
        }
    }

    #[test]
    fn two_dimensional_mode_localizes() {
        // plane wave at xi = (3, 4), |xi| = 5: only bands 2 and 3 see it
        let g = Arc::new(build_grid(&DomainSpec::torus(&[TAU, TAU]).unwrap(), 64).unwrap());
        let u = GridFunction::sample(&g, |x| (3.0 * x[0] + 4.0 * x[1]).cos());
        let dec = lp_decompose(&u, 6).unwrap();
        for j in 0..=dec.j_max {
            if (2..=3).contains(&j) {
                continue;
            }
            assert!(
                dec.block_sups[j] < 1e-10,
                "block {j} sup {}",
                dec.block_sups[j]
            );
        }
        let recon = dec.reconstruct();
        for i in 0..g.node_count() {
            assert!((recon.values[i] - u.values[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn decomposition_is_linear() {
        let g = torus_1d(256);
        let a = GridFunction::sample(&g, |x| x[0].cos());
        let b = GridFunction::sample(&g, |x| (32.0 * x[0]).cos());
        let sum = GridFunction::sample(&g, |x| x[0].cos() + (32.0 * x[0]).cos());
        let da = lp_decompose(&a, 8).unwrap();
        let db = lp_decompose(&b, 8).unwrap();
        let ds = lp_decompose(&sum, 8).unwrap();
        for j in 0..=ds.j_max {
            for i in 0..g.node_count() {
                let expect = da.blocks[j].values[i] + db.blocks[j].values[i];
                assert!(
                    (ds.blocks[j].values[i] - expect).abs() < 1e-11,
                    "linearity at block {j} node {i}"
                );
            }
        }
    }

    #[test]
    fn reconstruction_of_band_limited_field() {
        let g = torus_1d(512);
        let u = GridFunction::sample(&g, |x| (3.0 * x[0]).cos() + 0.5 * (40.0 * x[0]).sin());
        let dec = lp_decompose(&u, 12).unwrap();
        let r = dec.reconstruct();
        let sup = u.sup_all();
        for i in 0..g.node_count() {
            assert!(
                (r.values[i] - u.values[i]).abs() <= 1e-10 * sup,
                "reconstruction at node {i}"
            );
        }
    }

    #[test]
    fn truncation_flag_set_beyond_nyquist() {
        let g = torus_1d(64);
        let u = GridFunction::sample(&g, |x| (8.0 * x[0]).cos());
        let dec = lp_decompose(&u, 30).unwrap();
        assert!(dec.truncated);
        assert!(dec.j_max < 30);
        let non_torus = Arc::new(build_grid(&DomainSpec::rectangle(&[1.0]).unwrap(), 64).unwrap());
        let v = GridFunction::sample(&non_torus, |x| x[0]);
        assert!(lp_decompose(&v, 4).is_err());
    }

    #[test]
    fn bernstein_constant_of_pure_mode() {
        let g = torus_1d(256);
        let u = GridFunction::sample(&g, |x| (32.0 * x[0]).cos());
        let dec = lp_decompose(&u, 8).unwrap();
        // gradient brings exactly the factor 32 = 2^5
        let ratio = dec.grad_sups[5] / (32.0 * dec.block_sups[5]);
        assert!(ratio <= 2.0, "bernstein ratio {ratio}");
        assert!(ratio > 0.5);
    }

    #[test]
    fn alpha_estimate_weierstrass() {
        let g = torus_1d(4096);
        let w = weierstrass(0.7, 10);
        let u = GridFunction::sample(&g, |x| w(x));
        let dec = lp_decompose(&u, 11).unwrap();
        let rep = lp_alpha_estimate(&dec).unwrap();
        let alpha = rep.alpha_hat.expect("fit exists");
        assert!((alpha - 0.7).abs() < 0.1, "alpha_hat = {alpha}");
        for b in &rep.bands {
            assert!(
                b.bernstein <= 4.0,
                "band {} constant {}",
                b.band,
                b.bernstein
            );
        }
    }

    #[test]
    fn band_limited_flag() {
        let g = torus_1d(256);
        let u = GridFunction::sample(&g, |x| x[0].cos());
        let dec = lp_decompose(&u, 8).unwrap();
        let rep = lp_alpha_estimate(&dec).unwrap();
        assert!(rep.band_limited);
        assert!(rep.alpha_hat.is_none());
    }

    #[test]
    fn poisson_solver_eigenfunctions() {
        let g = torus_1d(128);
        let rho = GridFunction::sample(&g, |x| (4.0 * x[0]).cos());
        let u = lp_poisson_solve(&rho).unwrap();
        for i in 0..g.node_count() {
            let expect = (4.0 * g.coord(i)[0]).cos() / 16.0;
            assert!((u.values[i] - expect).abs() < 1e-12, "node {i}");
        }

        let g2 = Arc::new(build_grid(&DomainSpec::torus(&[TAU, TAU]).unwrap(), 64).unwrap());
        let rho2 = GridFunction::sample(&g2, |x| (4.0 * x[0]).cos() + (8.0 * x[1]).cos());
        let u2 = lp_poisson_solve(&rho2).unwrap();
        for i in 0..g2.node_count() {
            let x = g2.coord(i);
            let expect = (4.0 * x[0]).cos() / 16.0 + (8.0 * x[1]).cos() / 64.0;
            assert!((u2.values[i] - expect).abs() < 1e-12, "2-D node {i}");
        }
    }

    #[test]
    fn poisson_rejects_nonzero_mean() {
        let g = torus_1d(64);
        let rho = GridFunction::sample(&g, |x| 1.0 + x[0].cos());
        let err = lp_poisson_solve(&rho).unwrap_err();
        assert!(format!("{err}").contains("mean"));
    }

    #[test]
    fn poisson_then_spectral_laplacian_is_identity() {
        let g = torus_1d(256);
        let w = weierstrass(0.5, 6);
        let rho = GridFunction::sample(&g, |x| w(x));
        let u = lp_poisson_solve(&rho).unwrap();
        let lap = spectral_laplacian(&u).unwrap();
        let sup = rho.sup_all();
        for i in 0..g.node_count() {
            assert!(
                (-lap.values[i] - rho.values[i]).abs() < 1e-10 * sup,
                "residual at node {i}"
            );
        }
        // FD residual behaves like O(h^2) for smooth band-limited rho
        let smooth = GridFunction::sample(&g, |x| (3.0 * x[0]).cos());
        let us = lp_poisson_solve(&smooth).unwrap();
        let fd = discrete_laplacian_periodic(&us).unwrap();
        let mut res = 0.0f64;
        for i in 0..g.node_count() {
            res = res.max((-fd.values[i] - smooth.values[i]).abs());
        }
        let h = g.spacing().unwrap()[0];
        assert!(
            res <= 2.0 * h * h * smooth.sup_all() * 9.0,
            "fd residual {res}"
        );
    }

    #[test]
    fn second_derivative_blocks_decay_at_alpha() {
        // solve -Delta u = rho for a rough rho, then check that the blocks
        // of the second derivative decay like 2^{-alpha j}
        let g = torus_1d(4096);
        let w = weierstrass(0.5, 10);
        let rho = GridFunction::sample(&g, |x| w(x));
        let u = lp_poisson_solve(&rho).unwrap();
        let du = spectral_derivative(&u, 0).unwrap();
        let d2u = spectral_derivative(&du, 0).unwrap();
        let dec = lp_decompose(&d2u, 11).unwrap();
        let rep = lp_alpha_estimate(&dec).unwrap();
        let alpha = rep.alpha_hat.expect("fit exists");
        assert!(
            (alpha - 0.5).abs() < 0.15,
            "second-derivative decay {alpha}"
        );
    }
}
