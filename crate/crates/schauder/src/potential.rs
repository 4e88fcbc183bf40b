//! Newtonian potential evaluation with singularity splitting, the
//! integrable representation of second derivatives, and empirical
//! interior-estimate probes.
//!
//! Kernel normalization: Delta g = delta, i.e.
//!
//! ```text
//! g(P,Q) = |P-Q|^{2-n} / ((2-n) n omega_n)   (n >= 3)
//! g(P,Q) = ln|P-Q| / (2 pi)                  (n = 2)
//! ```
//!
//! so u(P) = int g(P,Q) f(Q) dQ solves Delta u = f and the potential of a
//! positive density is negative for n >= 3.
//!
//! Quadrature is the midpoint rule over node cells (curved-domain grids are
//! cell-centered, so every node owns a box of volume prod(h)), with the
//! constant-density piece inside the ball B_delta(P), delta = 3h, integrated
//! in closed radial form. Radial grids use the spherical-shell reduction,
//! which evaluates radial densities to quadrature accuracy in 1-D.

use crate::error::{Error, Result};
use crate::grid::{interpolate, DomainKind, Grid, GridFunction, NodeClass};
use crate::holder::holder_seminorm;
use crate::json::Json;

/// Volume of the unit ball in n dimensions.
pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        _ => unit_ball_volume(n - 2) * crate::grid::TAU / n as f64,
    }
}

/// Fundamental solution g(|P-Q|).
pub fn kernel(n: usize, rho: f64) -> f64 {
    let nwn = n as f64 * unit_ball_volume(n);
    if n == 2 {
        rho.ln() / nwn
    } else {
        rho.powi(2 - n as i32) / ((2.0 - n as f64) * nwn)
    }
}

/// d/d rho of the kernel.
fn kernel_radial_derivative(n: usize, rho: f64) -> f64 {
    let nwn = n as f64 * unit_ball_volume(n);
    rho.powi(1 - n as i32) / nwn
}

/// Gradient of g with respect to P.
pub fn kernel_gradient(n: usize, diff: &[f64], out: &mut [f64]) {
    let rho2: f64 = diff.iter().map(|d| d * d).sum();
    let rho = rho2.sqrt();
    let nwn = n as f64 * unit_ball_volume(n);
    let c = rho.powi(-(n as i32)) / nwn;
    for (o, d) in out.iter_mut().zip(diff) {
        *o = c * d;
    }
}

/// Hessian of g with respect to P (n x n, row-major).
pub fn kernel_hessian(n: usize, diff: &[f64], out: &mut [f64]) {
    let rho2: f64 = diff.iter().map(|d| d * d).sum();
    let nwn = n as f64 * unit_ball_volume(n);
    let c = rho2.powf(-(n as f64) / 2.0 - 1.0) / nwn;
    for a in 0..n {
        for b in 0..n {
            let kron = if a == b { rho2 } else { 0.0 };
            out[a * n + b] = c * (kron - n as f64 * diff[a] * diff[b]);
        }
    }
}

/// Integral of g over B_delta(0), in closed form.
fn singular_cell_integral(n: usize, delta: f64) -> f64 {
    if n == 2 {
        0.5 * delta * delta * delta.ln() - 0.25 * delta * delta
    } else {
        delta * delta / (2.0 * (2.0 - n as f64))
    }
}

fn ambient_dim(grid: &Grid) -> usize {
    grid.domain.n
}

#[derive(Debug, Clone, Copy)]
pub struct PotentialValue {
    pub value: f64,
    /// P lies outside the closure of the density's domain (harmonic regime).
    pub exterior: bool,
}

/// Newtonian potential u(P) = int g(P,Q) f(Q) dQ.
pub fn newtonian_potential(f: &GridFunction, p: &[f64]) -> Result<PotentialValue> {
    let grid = &f.grid;
    let n = ambient_dim(grid);
    if n < 2 {
        return Err(Error::Unsupported(
            "the Newtonian kernel needs n >= 2".into(),
        ));
    }
    let exterior = !point_inside(grid, p);
    if grid.is_radial() {
        return Ok(PotentialValue {
            value: radial_potential(f, norm(p))?.0,
            exterior,
        });
    }
    let dim = grid.dim();
    if dim != n {
        return Err(Error::Unsupported(
            "grid dimension must match the ambient dimension".into(),
        ));
    }
    let vol = grid.cell_volume()?;
    let h = grid.h_max();
    let delta = 3.0 * h;
    let fp = if exterior { 0.0 } else { interpolate(f, p) };
    let mut acc = if exterior {
        0.0
    } else {
        fp * singular_cell_integral(n, delta)
    };
    let mut diff = vec![0.0; dim];
    for i in 0..grid.node_count() {
        if grid.class(i) != NodeClass::Interior {
            continue;
        }
        let x = grid.coord(i);
        let mut rho2 = 0.0;
        for a in 0..dim {
            diff[a] = p[a] - x[a];
            rho2 += diff[a] * diff[a];
        }
        let rho = rho2.sqrt();
        if rho < 0.25 * h {
            continue; // the singular cell: its regularized integrand is O(h^alpha) * cell
        }
        let density = if rho < delta {
            f.values[i] - fp
        } else {
            f.values[i]
        };
        acc += kernel(n, rho) * density * vol;
    }
    Ok(PotentialValue {
        value: acc,
        exterior,
    })
}

/// Gradient of the potential by quadrature of the (integrable) kernel
/// gradient.
pub fn newtonian_potential_gradient(f: &GridFunction, p: &[f64]) -> Result<Vec<f64>> {
    let grid = &f.grid;
    let n = ambient_dim(grid);
    if grid.is_radial() {
        let r = norm(p);
        let (_, mass_inside) = radial_potential(f, r)?;
        let du = kernel_radial_derivative(n, r) * mass_inside;
        let mut out = vec![0.0; n];
        if r > 0.0 {
            for (o, pi) in out.iter_mut().zip(p) {
                *o = du * pi / r;
            }
        }
        return Ok(out);
    }
    let dim = grid.dim();
    let vol = grid.cell_volume()?;
    let h = grid.h_max();
    let mut acc = vec![0.0; dim];
    let mut diff = vec![0.0; dim];
    let mut kg = vec![0.0; dim];
    for i in 0..grid.node_count() {
        if grid.class(i) != NodeClass::Interior {
            continue;
        }
        let x = grid.coord(i);
        let mut rho2 = 0.0;
        for a in 0..dim {
            diff[a] = p[a] - x[a];
            rho2 += diff[a] * diff[a];
        }
        if rho2.sqrt() < 0.25 * h {
            continue;
        }
        kernel_gradient(n, &diff, &mut kg);
        for a in 0..dim {
            acc[a] += kg[a] * f.values[i] * vol;
        }
    }
    Ok(acc)
}

/// Spherical-shell reduction: potential at radius r of a radial density,
/// also returning the mass strictly inside radius r.
fn radial_potential(f: &GridFunction, r: f64) -> Result<(f64, f64)> {
    let grid = &f.grid;
    let radii = grid.radii()?;
    let n = ambient_dim(grid);
    let nwn = n as f64 * unit_ball_volume(n);
    let m = radii.len();
    let mut value = 0.0;
    let mut mass_inside = 0.0;
    for i in 0..m {
        let lo = if i == 0 {
            radii[0]
        } else {
            0.5 * (radii[i - 1] + radii[i])
        };
        let hi = if i == m - 1 {
            radii[m - 1]
        } else {
            0.5 * (radii[i] + radii[i + 1])
        };
        let s = radii[i];
        let mass = f.values[i] * nwn * s.powi(n as i32 - 1) * (hi - lo);
        if s <= r {
            mass_inside += mass;
            value += kernel(n, r.max(1e-300)) * mass;
        } else {
            value += kernel(n, s) * mass;
        }
    }
    // at the center the "inside" kernel value multiplies zero mass; the
    // max(1e-300) clamp keeps g finite there without affecting the sum
    Ok((value, mass_inside))
}

fn point_inside(grid: &Grid, p: &[f64]) -> bool {
    match grid.domain.kind {
        DomainKind::Ball => norm(p) < grid.domain.r0,
        DomainKind::Annulus => {
            let r = norm(p);
            r > grid.domain.r_in && r < grid.domain.r_out
        }
        DomainKind::Rectangle => p
            .iter()
            .zip(&grid.domain.sides)
            .all(|(x, s)| *x > 0.0 && x < s),
        _ => true,
    }
}

fn norm(p: &[f64]) -> f64 {
    p.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Latitude-longitude quadrature mesh of the sphere |x| = radius (n = 3) or
/// the circle (n = 2): (point, outward normal, weight).
pub fn sphere_mesh(
    n: usize,
    radius: f64,
    resolution: usize,
) -> Result<Vec<(Vec<f64>, Vec<f64>, f64)>> {
    let mut out = Vec::new();
    match n {
        2 => {
            let m = 4 * resolution;
            let dw = crate::grid::TAU * radius / m as f64;
            for k in 0..m {
                let t = crate::grid::TAU * (k as f64 + 0.5) / m as f64;
                let normal = vec![t.cos(), t.sin()];
                let point = vec![radius * normal[0], radius * normal[1]];
                out.push((point, normal, dw));
            }
        }
        3 => {
            let npol = resolution;
            let naz = 2 * resolution;
            let dth = std::f64::consts::PI / npol as f64;
            let dph = crate::grid::TAU / naz as f64;
            for a in 0..npol {
                let th = (a as f64 + 0.5) * dth;
                for b in 0..naz {
                    let ph = (b as f64 + 0.5) * dph;
                    let normal = vec![th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()];
                    let point: Vec<f64> = normal.iter().map(|v| v * radius).collect();
                    let w = radius * radius * th.sin() * dth * dph;
                    out.push((point, normal, w));
                }
            }
        }
        other => return Err(Error::Unsupported(format!("sphere mesh for n = {other}"))),
    }
    Ok(out)
}

/// Second derivatives of the potential by the integrable representation:
/// volume integral of d_ij g (P,Q) [f(Q) - f(P)] plus the boundary term
/// -f(P) int d_i g n_j ds.
pub fn potential_hessian_wij(f: &GridFunction, p: &[f64]) -> Result<Vec<f64>> {
    let grid = &f.grid;
    let n = ambient_dim(grid);
    if grid.is_radial() {
        return Err(Error::Unsupported(
            "w_ij quadrature needs the Cartesian grid".into(),
        ));
    }
    if grid.domain.kind != DomainKind::Ball {
        return Err(Error::Unsupported(
            "boundary quadrature implemented for ball domains".into(),
        ));
    }
    let h = grid.h_max();
    if !point_inside(grid, p) || grid.domain.boundary_distance(p)? < 2.0 * h {
        return Err(Error::InvalidArgument(
            "evaluation point must be interior, at least 2h from the wall".into(),
        ));
    }
    let dim = grid.dim();
    let vol = grid.cell_volume()?;
    let fp = interpolate(f, p);
    let mut acc = vec![0.0; dim * dim];
    let mut diff = vec![0.0; dim];
    let mut kh = vec![0.0; dim * dim];
    for i in 0..grid.node_count() {
        if grid.class(i) != NodeClass::Interior {
            continue;
        }
        let x = grid.coord(i);
        let mut rho2 = 0.0;
        for a in 0..dim {
            diff[a] = p[a] - x[a];
            rho2 += diff[a] * diff[a];
        }
        if rho2.sqrt() < 0.25 * h {
            continue; // integrand O(|P-Q|^{alpha-n}) over one cell: O(h^alpha)
        }
        kernel_hessian(n, &diff, &mut kh);
        let density = (f.values[i] - fp) * vol;
        for c in 0..dim * dim {
            acc[c] += kh[c] * density;
        }
    }
    // boundary term over the exact sphere
    let mesh = sphere_mesh(n, grid.domain.r0, 64)?;
    let mut kg = vec![0.0; dim];
    for (q, normal, w) in &mesh {
        for a in 0..dim {
            diff[a] = p[a] - q[a];
        }
        kernel_gradient(n, &diff, &mut kg);
        for a in 0..dim {
            for b in 0..dim {
                acc[a * dim + b] -= fp * kg[a] * normal[b] * w;
            }
        }
    }
    Ok(acc)
}

/// Empirical constants of the interior estimates on nested balls.
#[derive(Debug, Clone)]
pub struct PotentialProbeReport {
    pub radius: f64,
    pub alpha: f64,
    pub sup_u: f64,
    pub sup_grad: f64,
    pub sup_hess: f64,
    pub holder_hess: f64,
    pub sup_f: f64,
    pub holder_f: f64,
    /// `(sup|D2 u| + [D2 u]_alpha) / (sup|f| + R^alpha [f]_alpha)`
    pub c_emp_second: Option<f64>,
    /// sup(|u| + |grad u|) / (R^2 sup|f|)
    pub c_emp_first: Option<f64>,
    pub probes_used: usize,
}

impl PotentialProbeReport {
    pub fn to_json(&self) -> Json {
        let mut o = Json::obj();
        o.push("radius", self.radius)
            .push("alpha", self.alpha)
            .push("sup_u", self.sup_u)
            .push("sup_grad", self.sup_grad)
            .push("sup_hess", self.sup_hess)
            .push("holder_hess", self.holder_hess)
            .push("sup_f", self.sup_f)
            .push("holder_f", self.holder_f)
            .push_opt("c_emp_second", self.c_emp_second)
            .push_opt("c_emp_first", self.c_emp_first)
            .push("probes_used", self.probes_used);
        o
    }
}

/// Deterministic probe layout: a small lattice inside the unit ball, scaled
/// by R. Identical layouts at every scale isolate scale effects from
/// sampling artifacts.
fn probe_layout(n: usize, radius: f64) -> Vec<Vec<f64>> {
    let ticks = [-0.75, -0.25, 0.25, 0.75];
    let mut out = Vec::new();
    let mut idx = vec![0usize; n];
    loop {
        let p: Vec<f64> = idx.iter().map(|&i| ticks[i] * radius).collect();
        if norm(&p) < 0.92 * radius {
            out.push(p);
        }
        let mut a = 0;
        loop {
            idx[a] += 1;
            if idx[a] < ticks.len() {
                break;
            }
            idx[a] = 0;
            a += 1;
            if a == n {
                return out;
            }
        }
    }
}

/// Evaluate u = newtonian_potential(f) on a probe set of B_R and report the
/// empirical constants of the first- and second-order interior estimates.
pub fn interior_estimate_probe(
    f: &GridFunction,
    alpha: f64,
    radius: f64,
) -> Result<PotentialProbeReport> {
    let grid = &f.grid;
    let n = ambient_dim(grid);
    let probes = probe_layout(n, radius);
    let mut sup_u = 0.0f64;
    let mut sup_grad = 0.0f64;
    let mut sup_hess = 0.0f64;
    let mut hessians: Vec<Vec<f64>> = Vec::with_capacity(probes.len());
    for p in &probes {
        let u = newtonian_potential(f, p)?.value;
        let g = newtonian_potential_gradient(f, p)?;
        let w = potential_hessian_wij(f, p)?;
        sup_u = sup_u.max(u.abs());
        sup_grad = sup_grad.max(g.iter().map(|v| v.abs()).sum());
        let mut mag = 0.0;
        for a in 0..n {
            for b in a..n {
                mag += w[a * n + b].abs();
            }
        }
        sup_hess = sup_hess.max(mag);
        hessians.push(w);
    }
    let mut holder_hess = 0.0f64;
    for i in 0..probes.len() {
        for j in (i + 1)..probes.len() {
            let mut diff = 0.0;
            for a in 0..n {
                for b in a..n {
                    diff += (hessians[i][a * n + b] - hessians[j][a * n + b]).abs();
                }
            }
            let dist: f64 = probes[i]
                .iter()
                .zip(&probes[j])
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt();
            holder_hess = holder_hess.max(diff / dist.powf(alpha));
        }
    }
    let sup_f = f.sup_interior();
    let holder_f = holder_seminorm(f, alpha)?.value;
    let denom2 = sup_f + radius.powf(alpha) * holder_f;
    let denom1 = radius * radius * sup_f;
    Ok(PotentialProbeReport {
        radius,
        alpha,
        sup_u,
        sup_grad,
        sup_hess,
        holder_hess,
        sup_f,
        holder_f,
        c_emp_second: (denom2 > 0.0).then(|| (sup_hess + holder_hess) / denom2),
        c_emp_first: (denom1 > 0.0).then(|| (sup_u + sup_grad) / denom1),
        probes_used: probes.len(),
    })
}

#[derive(Debug, Clone)]
pub struct DecayReport {
    pub radii: Vec<f64>,
    /// F(r) = int_{B_r(x0)} |u - mean|^2
    pub oscillation: Vec<f64>,
    /// F(r) (R/r)^{n+2} / F(R), 0 when F identically vanishes
    pub ratios: Vec<f64>,
    pub max_ratio: f64,
    pub laplacian_sup: f64,
}

/// Oscillation-decay probe for (discretely) harmonic fields:
/// F(r) <= C (r/R)^{n+2} F(R) on the radius ladder.
pub fn harmonic_decay_probe(
    u: &GridFunction,
    x0: &[f64],
    radii: &[f64],
    harmonic_tol: f64,
) -> Result<DecayReport> {
    let grid = &u.grid;
    let dim = grid.dim();
    let mut radii = radii.to_vec();
    radii.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let r_max = *radii
        .last()
        .ok_or_else(|| Error::InvalidArgument("empty radius ladder".into()))?;
    let spacing = grid.spacing()?.to_vec();
    // verify discrete harmonicity on B_{r_max}(x0) where the stencil is interior
    let mut lap_sup = 0.0f64;
    for i in grid.interior_nodes() {
        let x = grid.coord(i);
        let dist: f64 = x
            .iter()
            .zip(x0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        if dist > r_max {
            continue;
        }
        let mut lap = 0.0;
        let mut ok = true;
        for a in 0..dim {
            match (grid.neighbor(i, a, -1), grid.neighbor(i, a, 1)) {
                (Some(m), Some(p))
                    if grid.class(m) != NodeClass::Exterior
                        && grid.class(p) != NodeClass::Exterior =>
                {
                    lap +=
                        (u.values[p] - 2.0 * u.values[i] + u.values[m]) / (spacing[a] * spacing[a]);
                }
                _ => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            lap_sup = lap_sup.max(lap.abs());
        }
    }
    let scale = u.sup_interior().max(1e-300);
    if lap_sup > harmonic_tol * scale {
        return Err(Error::InvalidArgument(format!(
            "field is not discretely harmonic: sup|Lap_h u| = {lap_sup:.3e} (tol {harmonic_tol:.1e} x {scale:.3e})"
        )));
    }
    let vol = grid.cell_volume()?;
    let u0 = interpolate(u, x0);
    let mut oscillation = Vec::with_capacity(radii.len());
    for &r in &radii {
        let mut sum = 0.0;
        let mut sum2 = 0.0;
        let mut count = 0usize;
        for i in grid.interior_nodes() {
            let x = grid.coord(i);
            let dist: f64 = x
                .iter()
                .zip(x0)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            if dist <= r {
                let v = u.values[i] - u0;
                sum += v;
                sum2 += v * v;
                count += 1;
            }
        }
        let f = if count > 1 {
            (sum2 - sum * sum / count as f64) * vol
        } else {
            0.0
        };
        oscillation.push(f.max(0.0));
    }
    let f_cap = *oscillation.last().unwrap();
    let np2 = (dim + 2) as f64;
    let ratios: Vec<f64> = radii
        .iter()
        .zip(&oscillation)
        .map(|(&r, &fr)| {
            if f_cap <= 1e-28 * scale * scale {
                0.0
            } else {
                fr * (r_max / r).powf(np2) / f_cap
            }
        })
        .collect();
    let max_ratio = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(DecayReport {
        radii,
        oscillation,
        ratios,
        max_ratio,
        laplacian_sup: lap_sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, DomainSpec, Grid};
    use std::sync::Arc;

    #[test]
    fn kernel_symmetry_and_values() {
        // g depends only on |P-Q|, hence symmetric by construction; check
        // the normalization: n=3 kernel is -1/(4 pi rho)
        let g = kernel(3, 2.0);
        assert!((g + 1.0 / (4.0 * std::f64::consts::PI * 2.0)).abs() < 1e-15);
        let g2 = kernel(2, 3.0);
        assert!((g2 - 3.0f64.ln() / (2.0 * std::f64::consts::PI)).abs() < 1e-15);
    }

    #[test]
    fn sphere_average_of_kernel_hessian_vanishes() {
        // midpoint lat-long quadrature is second order, so the mean-value
        // identity holds to quadrature tolerance, not roundoff
        for (res, tol) in [(48usize, 2e-3), (96, 5e-4)] {
            let mesh = sphere_mesh(3, 1.0, res).unwrap();
            let mut avg = [0.0; 9];
            let mut total = 0.0;
            let mut kh = vec![0.0; 9];
            for (q, _, w) in &mesh {
                let diff: Vec<f64> = q.iter().map(|v| -v).collect(); // P = 0
                kernel_hessian(3, &diff, &mut kh);
                for c in 0..9 {
                    avg[c] += kh[c] * w;
                }
                total += w;
            }
            for c in 0..9 {
                assert!(
                    (avg[c] / total).abs() < tol,
                    "res {res} component {c}: {}",
                    avg[c] / total
                );
            }
        }
    }

    #[test]
    fn radial_oracle_unit_density() {
        // n=3, f = 1 on the unit ball: u(0) = -1/2; exterior u(2) = -1/6
        let ball = DomainSpec::ball(3, 1.0).unwrap();
        let g = Arc::new(Grid::radial_uniform(&ball, 512).unwrap());
        let f = GridFunction::constant(&g, 1.0);
        let u0 = newtonian_potential(&f, &[0.0, 0.0, 0.0]).unwrap();
        assert!(!u0.exterior);
        assert!((u0.value + 0.5).abs() < 1e-4, "u(0) = {}", u0.value);
        let ue = newtonian_potential(&f, &[2.0, 0.0, 0.0]).unwrap();
        assert!(ue.exterior);
        assert!((ue.value + 1.0 / 6.0).abs() < 1e-4, "u(2) = {}", ue.value);
        // gradient matches u'(r) = r/3 (x-derivative at (0.5,0,0))
        let gr = newtonian_potential_gradient(&f, &[0.5, 0.0, 0.0]).unwrap();
        assert!((gr[0] - 0.5 / 3.0).abs() < 1e-3, "u'(0.5) = {}", gr[0]);
    }

    #[test]
    fn planar_log_kernel_oracle() {
        // n = 2, f = 1 on the unit disc: Delta u = 1 radially gives
        // u(0) = int_0^1 (ln s / 2pi)(2 pi s) ds = -1/4
        let disc = DomainSpec::ball(2, 1.0).unwrap();
        let g = Arc::new(Grid::radial_uniform(&disc, 512).unwrap());
        let f = GridFunction::constant(&g, 1.0);
        let u0 = newtonian_potential(&f, &[0.0, 0.0]).unwrap().value;
        assert!((u0 + 0.25).abs() < 1e-4, "u(0) = {u0}");
        // exterior: u(r) = u(1) + (total mass / 2pi) ln r with mass = pi
        let u2 = newtonian_potential(&f, &[2.0, 0.0]).unwrap().value;
        let expect = 0.5 * 2.0f64.ln();
        assert!((u2 - expect).abs() < 1e-3, "u(2) = {u2} vs {expect}");
    }

    #[test]
    fn cartesian_quadrature_matches_radial_oracle() {
        let ball = DomainSpec::ball(3, 1.0).unwrap();
        let g = Arc::new(build_grid(&ball, 32).unwrap());
        let f = GridFunction::constant(&g, 1.0);
        let u0 = newtonian_potential(&f, &[0.0, 0.0, 0.0]).unwrap();
        // staircase boundary costs O(h); 32 cells per axis gives a few percent
        assert!((u0.value + 0.5).abs() < 0.02, "u(0) = {}", u0.value);
        let zero = GridFunction::constant(&g, 0.0);
        assert_eq!(
            newtonian_potential(&zero, &[0.1, 0.0, 0.0]).unwrap().value,
            0.0
        );
    }

    #[test]
    fn potential_is_linear_in_density() {
        let ball = DomainSpec::ball(3, 1.0).unwrap();
        let g = Arc::new(build_grid(&ball, 16).unwrap());
        let f1 = GridFunction::sample(&g, |x| x[0] + 0.3);
        let f2 = GridFunction::sample(&g, |x| x[1] * x[1]);
        let fsum = GridFunction::sample(&g, |x| x[0] + 0.3 + x[1] * x[1]);
        let p = [0.2, -0.1, 0.3];
        let a = newtonian_potential(&f1, &p).unwrap().value;
        let b = newtonian_potential(&f2, &p).unwrap().value;
        let s = newtonian_potential(&fsum, &p).unwrap().value;
        assert!((a + b - s).abs() < 1e-12 * (1.0 + s.abs()));
    }

    #[test]
    fn hessian_of_unit_density_at_center() {
        // f = 1: volume term vanishes, boundary term gives delta_ij / 3
        let ball = DomainSpec::ball(3, 1.0).unwrap();
        let g = Arc::new(build_grid(&ball, 24).unwrap());
        let f = GridFunction::constant(&g, 1.0);
        let w = potential_hessian_wij(&f, &[0.0, 0.0, 0.0]).unwrap();
        for a in 0..3 {
            for b in 0..3 {
                let expect = if a == b { 1.0 / 3.0 } else { 0.0 };
                assert!(
                    (w[a * 3 + b] - expect).abs() < 1e-3,
                    "w[{a}{b}] = {} vs {expect}",
                    w[a * 3 + b]
                );
            }
        }
    }

    #[test]
    fn trace_identity_for_linear_density() {
        // trace(w)(P) = f(P); for f = x1 at P = 0 the trace vanishes.
        // Independent oracle: second differences of the potential itself.
        let ball = DomainSpec::ball(3, 1.0).unwrap();
        let g = Arc::new(build_grid(&ball, 24).unwrap());
        let f = GridFunction::sample(&g, |x| x[0]);
        let p = [0.0, 0.0, 0.0];
        let w = potential_hessian_wij(&f, &p).unwrap();
        let trace = w[0] + w[4] + w[8];
        assert!(trace.abs() < 5e-2, "trace = {trace}");
        // FD oracle around 0
        let s = 0.05;
        let mut fd_trace = 0.0;
        let u_at = |q: &[f64]| newtonian_potential(&f, q).unwrap().value;
        let u0 = u_at(&p);
        for a in 0..3 {
            let mut qp = p.to_vec();
            let mut qm = p.to_vec();
            qp[a] += s;
            qm[a] -= s;
            fd_trace += (u_at(&qp) - 2.0 * u0 + u_at(&qm)) / (s * s);
        }
        assert!(
            (trace - fd_trace).abs() < 5e-2,
            "wij trace {trace} vs fd {fd_trace}"
        );
    }

    #[test]
    fn smooth_density_away_from_point() {
        // density supported in a small off-center bump: w_ij agrees with
        // direct second differences of the smooth integral
        let ball = DomainSpec::ball(3, 1.0).unwrap();
        let g = Arc::new(build_grid(&ball, 24).unwrap());
        let f = GridFunction::sample(&g, |x| {
            let d2 = (x[0] - 0.5) * (x[0] - 0.5) + x[1] * x[1] + x[2] * x[2];
            if d2 < 0.04 {
                (1.0 - d2 / 0.04).powi(2)
            } else {
                0.0
            }
        });
        let p = [-0.4, 0.0, 0.0];
        let w = potential_hessian_wij(&f, &p).unwrap();
        let s = 0.04;
        let u_at = |q: &[f64]| newtonian_potential(&f, q).unwrap().value;
        for a in 0..3 {
            let mut qp = p.to_vec();
            let mut qm = p.to_vec();
            qp[a] += s;
            qm[a] -= s;
            let fd = (u_at(&qp) - 2.0 * u_at(&p) + u_at(&qm)) / (s * s);
            assert!(
                (w[a * 3 + a] - fd).abs() < 2e-2 * (1.0 + fd.abs()),
                "w[{a}{a}] = {} vs fd {fd}",
                w[a * 3 + a]
            );
        }
    }

    #[test]
    fn exterior_point_is_harmonic() {
        let ball = DomainSpec::ball(3, 1.0).unwrap();
        let g = Arc::new(Grid::radial_uniform(&ball, 256).unwrap());
        let f = GridFunction::constant(&g, 1.0);
        // discrete Laplacian of u over a stencil around an exterior point
        let p = [1.6, 0.0, 0.0];
        let s = 0.05;
        let u_at = |q: &[f64]| newtonian_potential(&f, q).unwrap().value;
        let mut lap = 0.0;
        for a in 0..3 {
            let mut qp = p.to_vec();
            let mut qm = p.to_vec();
            qp[a] += s;
            qm[a] -= s;
            lap += (u_at(&qp) - 2.0 * u_at(&p) + u_at(&qm)) / (s * s);
        }
        assert!(lap.abs() < 1e-3, "exterior Laplacian {lap}");
    }

    #[test]
    fn first_order_probe_unit_density() {
        let ball = DomainSpec::ball(3, 2.0).unwrap();
        let g = Arc::new(Grid::radial_uniform(&ball, 512).unwrap());
        let f = GridFunction::sample(&g, |x| if x[0] <= 1.0 { 1.0 } else { 0.0 });
        // probe the inner ball B_1 by hand: sup(|u|+|u'|) / (R^2 sup f) <= 2
        let mut worst = 0.0f64;
        for k in 0..20 {
            let r = k as f64 / 19.0 * 0.95;
            let p = [r, 0.0, 0.0];
            let u = newtonian_potential(&f, &p).unwrap().value;
            let gr = newtonian_potential_gradient(&f, &p).unwrap();
            worst = worst.max(u.abs() + gr[0].abs());
        }
        assert!(worst <= 2.0, "first-order constant {worst}");
    }

    #[test]
    fn harmonic_decay_examples() {
        let square = DomainSpec::rectangle(&[2.0, 2.0]).unwrap();
        let g = Arc::new(build_grid(&square, 129).unwrap());
        let x0 = [1.0, 1.0];
        let radii = [0.125, 0.25, 0.5, 0.9];

        // linear field: F(r) ~ r^{n+2} exactly, so ratios stay near 1
        let u = GridFunction::sample(&g, |x| x[0] - 1.0);
        let rep = harmonic_decay_probe(&u, &x0, &radii, 1e-8).unwrap();
        for (r, ratio) in rep.radii.iter().zip(&rep.ratios) {
            assert!((ratio - 1.0).abs() < 0.3, "r = {r}: ratio {ratio}");
        }

        // constant: F vanishes identically, ratios defined as 0
        let c = GridFunction::constant(&g, 5.0);
        let repc = harmonic_decay_probe(&c, &x0, &radii, 1e-8).unwrap();
        assert!(repc.ratios.iter().all(|&r| r == 0.0));

        // saddle x^2 - y^2: ratios bounded over r/R in [1/8, 1/2]
        let s = GridFunction::sample(&g, |x| {
            (x[0] - 1.0) * (x[0] - 1.0) - (x[1] - 1.0) * (x[1] - 1.0)
        });
        let reps = harmonic_decay_probe(&s, &x0, &[0.1125, 0.225, 0.45, 0.9], 1e-8).unwrap();
        assert!(
            reps.max_ratio <= 10.0,
            "saddle max ratio {}",
            reps.max_ratio
        );

        // non-harmonic input is rejected
        let bad = GridFunction::sample(&g, |x| x[0] * x[0]);
        assert!(harmonic_decay_probe(&bad, &x0, &radii, 1e-8).is_err());
    }

    #[test]
    fn interior_probe_scale_robustness() {
        let ball = DomainSpec::ball(3, 2.0).unwrap();
        let g = Arc::new(build_grid(&ball, 28).unwrap());
        let f = GridFunction::sample(&g, |x| norm(x).sqrt().min(1.2));
        let mut consts = Vec::new();
        for radius in [0.25, 0.5, 1.0] {
            let rep = interior_estimate_probe(&f, 0.5, radius).unwrap();
            consts.push(rep.c_emp_second.expect("nonzero density"));
        }
        let lo = consts.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = consts.iter().cloned().fold(0.0f64, f64::max);
        assert!(hi / lo < 4.0, "constants {consts:?} vary by {}", hi / lo);
    }

    #[test]
    fn zero_density_probe() {
        let ball = DomainSpec::ball(3, 2.0).unwrap();
        let g = Arc::new(build_grid(&ball, 16).unwrap());
        let f = GridFunction::constant(&g, 0.0);
        let rep = interior_estimate_probe(&f, 0.5, 0.5).unwrap();
        assert_eq!(rep.sup_u, 0.0);
        assert!(rep.c_emp_second.is_none());
        assert!(rep.c_emp_first.is_none());
    }
}
