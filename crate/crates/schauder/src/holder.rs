//! Discrete Hölder-type norm estimators and the interpolation-inequality
//! checker.
//!
//! Seminorms are sups over node pairs. Pair enumeration is exact up to 1e4
//! nodes; beyond that a seeded, distance-stratified pair sample is used and
//! its size reported. Plain seminorms (and the Campanato estimator, and the
//! exponent fit) run over the closure (interior + boundary nodes); the
//! distance-weighted family runs over interior nodes only, where d > 0.

use crate::error::{Error, Result};
use crate::grid::{distance_field, fd_derivatives, radial_derivatives, GridFunction, NodeClass};
use crate::json::Json;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Exact pair enumeration threshold.
pub const EXACT_PAIR_LIMIT: usize = 10_000;
/// Pair budget for stratified sampling above the limit.
pub const PAIR_SAMPLE_BUDGET: usize = 2_000_000;
/// Seed for the stratified pair sampler (fixed for reproducibility).
pub const PAIR_SAMPLE_SEED: u64 = 0x5eed_9a1f;

#[derive(Debug, Clone, Copy)]
pub struct PairScanInfo {
    pub exact: bool,
    pub pairs_used: usize,
}

/// Visit node pairs of `nodes`: all of them when the set is small, otherwise
/// a seeded sample stratified by distance decade.
fn scan_pairs<F: FnMut(usize, usize, f64)>(
    u: &GridFunction,
    nodes: &[usize],
    mut visit: F,
) -> PairScanInfo {
    let grid = &u.grid;
    let m = nodes.len();
    if m <= EXACT_PAIR_LIMIT {
        let mut used = 0usize;
        for a in 0..m {
            for b in (a + 1)..m {
                let d = grid.node_distance(nodes[a], nodes[b]);
                if d > 0.0 {
                    visit(nodes[a], nodes[b], d);
                    used += 1;
                }
            }
        }
        return PairScanInfo {
            exact: true,
            pairs_used: used,
        };
    }
    // stratify by distance decade between the finest spacing and the diameter
    let lo = grid.h_max() * 0.5;
    let diam = (0..1)
        .map(|_| {
            // distance between the first and the farthest sampled node is a
            // cheap diameter proxy; exact diameter is not needed for binning
            let first = nodes[0];
            nodes
                .iter()
                .step_by((m / 512).max(1))
                .map(|&j| grid.node_distance(first, j))
                .fold(0.0, f64::max)
        })
        .next()
        .unwrap()
        .max(lo * 10.0);
    let mut edges = vec![lo];
    while *edges.last().unwrap() < diam {
        edges.push(edges.last().unwrap() * 10.0);
    }
    let strata = edges.len();
    let quota = PAIR_SAMPLE_BUDGET / strata;
    let mut rng = ChaCha8Rng::seed_from_u64(PAIR_SAMPLE_SEED);
    let mut used = 0usize;
    for s in 0..strata {
        let (d_lo, d_hi) = (edges[s], edges.get(s + 1).copied().unwrap_or(f64::INFINITY));
        let mut accepted = 0usize;
        let mut attempts = 0usize;
        while accepted < quota && attempts < quota * 8 {
            attempts += 1;
            let i = nodes[rng.gen_range(0..m)];
            let j = nodes[rng.gen_range(0..m)];
            if i == j {
                continue;
            }
            let d = grid.node_distance(i, j);
            if d >= d_lo && d < d_hi {
                visit(i, j, d);
                accepted += 1;
                used += 1;
            }
        }
    }
    PairScanInfo {
        exact: false,
        pairs_used: used,
    }
}

fn closure_nodes(u: &GridFunction) -> Vec<usize> {
    (0..u.grid.node_count())
        .filter(|&i| u.grid.class(i) != NodeClass::Exterior)
        .collect()
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "alpha = {alpha} outside (0,1)"
        )));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy)]
pub struct SeminormEstimate {
    pub value: f64,
    pub exact: bool,
    pub pairs_used: usize,
}

/// `[u]_alpha = sup |u(P)-u(Q)| / |P-Q|^alpha` over node pairs.
pub fn holder_seminorm(u: &GridFunction, alpha: f64) -> Result<SeminormEstimate> {
    check_alpha(alpha)?;
    let nodes = closure_nodes(u);
    if nodes.len() < 2 {
        return Err(Error::GridTooCoarse("need at least two nodes".into()));
    }
    let mut best = 0.0f64;
    let info = scan_pairs(u, &nodes, |i, j, d| {
        let q = (u.values[i] - u.values[j]).abs() / d.powf(alpha);
        if q > best {
            best = q;
        }
    });
    Ok(SeminormEstimate {
        value: best,
        exact: info.exact,
        pairs_used: info.pairs_used,
    })
}

/// Derivative tuples of order k per node, as flattened `n * comps` arrays.
/// Components follow the multi-index order: k=1 -> d1..dn, k=2 -> upper
/// triangle (a <= b). Magnitudes are l1 sums, matching the convention that
/// |grad^k u| is the sum of absolute values of the k-th derivatives.
///
/// Radial grids are treated as genuinely one-dimensional: the components
/// are d/dr and d2/dr2 of the profile, not the ambient Hessian (whose
/// tangential parts carry u'/r). Radial weighted norms therefore measure
/// the 1-D reduction, which is what the near-boundary probes sample.
fn derivative_components(u: &GridFunction, k: usize) -> Result<(usize, Vec<f64>)> {
    let grid = &u.grid;
    let n = grid.node_count();
    if k == 0 {
        return Ok((1, u.values.clone()));
    }
    if k > 2 {
        return Err(Error::Unsupported(format!("derivative order {k} > 2")));
    }
    let dim = grid.dim();
    // exact channels win over finite differences when supplied
    let (grad, hess): (Vec<f64>, Vec<f64>) = if u.has_exact_derivs() {
        let mut g = Vec::with_capacity(n * dim);
        let mut h = Vec::with_capacity(n * dim * dim);
        for i in 0..n {
            g.extend_from_slice(u.exact_grad_at(i).unwrap());
            h.extend_from_slice(u.exact_hess_at(i).unwrap());
        }
        (g, h)
    } else if grid.is_radial() {
        let (d1, d2) = radial_derivatives(u)?;
        (d1, d2)
    } else {
        let der = fd_derivatives(u)?;
        (der.grad, der.hess)
    };
    match k {
        1 => Ok((dim, grad)),
        _ => {
            let comps = dim * (dim + 1) / 2;
            let mut out = vec![0.0; n * comps];
            for i in 0..n {
                let hi = &hess[i * dim * dim..(i + 1) * dim * dim];
                let mut c = 0;
                for a in 0..dim {
                    for b in a..dim {
                        out[i * comps + c] = hi[a * dim + b];
                        c += 1;
                    }
                }
            }
            Ok((comps, out))
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct WeightedSeminorm {
    /// `[u]*_k = sup d(P)^k |grad^k u(P)|`
    pub sup_part: f64,
    /// `[u]*_{k+alpha} = sup d_{P,Q}^{k+alpha} |grad^k u(P) - grad^k u(Q)| / |P-Q|^alpha`
    pub holder_part: f64,
    pub exact: bool,
    pub pairs_used: usize,
}

/// Distance-weighted seminorms of order k in {0, 1, 2}.
pub fn weighted_seminorm(u: &GridFunction, k: usize, alpha: f64) -> Result<WeightedSeminorm> {
    check_alpha(alpha)?;
    if k > 2 {
        return Err(Error::Unsupported(format!("derivative order {k} > 2")));
    }
    let dist = distance_field(&u.grid)?;
    let (comps, der) = derivative_components(u, k)?;
    let nodes: Vec<usize> = u.grid.interior_nodes().collect();
    if nodes.len() < 2 {
        return Err(Error::GridTooCoarse(
            "need at least two interior nodes".into(),
        ));
    }
    let mut sup_part = 0.0f64;
    for &i in &nodes {
        let mag: f64 = (0..comps).map(|c| der[i * comps + c].abs()).sum();
        sup_part = sup_part.max(dist.values[i].powi(k as i32) * mag);
    }
    let mut holder_part = 0.0f64;
    let kk = k as f64;
    let info = scan_pairs(u, &nodes, |i, j, d| {
        let diff: f64 = (0..comps)
            .map(|c| (der[i * comps + c] - der[j * comps + c]).abs())
            .sum();
        let dpq = dist.values[i].min(dist.values[j]);
        let q = dpq.powf(kk + alpha) * diff / d.powf(alpha);
        if q > holder_part {
            holder_part = q;
        }
    });
    Ok(WeightedSeminorm {
        sup_part,
        holder_part,
        exact: info.exact,
        pairs_used: info.pairs_used,
    })
}

/// Sharp-weighted norm ||u||^#_{k+alpha} = sum_{j<=k} ||d^j u||_{C^{j+alpha}},
/// built from plain Hölder norms of the products d^j u. Differs from the
/// starred family, which weights pointwise by d_{P,Q}; both appear in the
/// degenerate-operator estimates.
pub fn sharp_norm(u: &GridFunction, k: usize, alpha: f64) -> Result<f64> {
    check_alpha(alpha)?;
    if k > 2 {
        return Err(Error::Unsupported(format!("derivative order {k} > 2")));
    }
    let dist = distance_field(&u.grid)?;
    let mut total = 0.0;
    for j in 0..=k {
        let values: Vec<f64> = u
            .values
            .iter()
            .zip(&dist.values)
            .map(|(&v, &d)| d.powi(j as i32) * v)
            .collect();
        let prod = GridFunction::from_values(&u.grid, values)?;
        // ||v||_{C^j} = max_{i<=j} sup |grad^i v| over interior nodes
        let mut c_j = 0.0f64;
        for i in 0..=j {
            let (comps, der) = derivative_components(&prod, i)?;
            for node in prod.grid.interior_nodes() {
                let mag: f64 = (0..comps).map(|c| der[node * comps + c].abs()).sum();
                c_j = c_j.max(mag);
            }
        }
        // [grad^j v]_alpha
        let (comps, der) = derivative_components(&prod, j)?;
        let nodes: Vec<usize> = prod.grid.interior_nodes().collect();
        let mut semi = 0.0f64;
        scan_pairs(&prod, &nodes, |a, b, d| {
            let diff: f64 = (0..comps)
                .map(|c| (der[a * comps + c] - der[b * comps + c]).abs())
                .sum();
            let q = diff / d.powf(alpha);
            if q > semi {
                semi = q;
            }
        });
        total += c_j + semi;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy)]
pub struct SigmaSeminorm {
    /// sup d_{P,Q}^{alpha+sigma} |u(P)-u(Q)| / |P-Q|^alpha
    pub seminorm: f64,
    /// sup |d^sigma u|
    pub sup_weighted: f64,
    pub exact: bool,
    pub pairs_used: usize,
}

/// Weighted seminorm with fractional weight sigma.
pub fn sigma_seminorm(u: &GridFunction, alpha: f64, sigma: f64) -> Result<SigmaSeminorm> {
    check_alpha(alpha)?;
    let dist = distance_field(&u.grid)?;
    let nodes: Vec<usize> = u.grid.interior_nodes().collect();
    if nodes.len() < 2 {
        return Err(Error::GridTooCoarse(
            "need at least two interior nodes".into(),
        ));
    }
    let mut sup_weighted = 0.0f64;
    for &i in &nodes {
        sup_weighted = sup_weighted.max(dist.values[i].powf(sigma) * u.values[i].abs());
    }
    let mut best = 0.0f64;
    let info = scan_pairs(u, &nodes, |i, j, d| {
        let dpq = dist.values[i].min(dist.values[j]);
        let q = dpq.powf(alpha + sigma) * (u.values[i] - u.values[j]).abs() / d.powf(alpha);
        if q > best {
            best = q;
        }
    });
    Ok(SigmaSeminorm {
        seminorm: best,
        sup_weighted,
        exact: info.exact,
        pairs_used: info.pairs_used,
    })
}

#[derive(Debug, Clone)]
pub struct CampanatoEstimate {
    /// Smallest C with int_{Omega(x,r)} |u - mean|^2 <= C r^lambda over the
    /// sampled centers and the radius ladder.
    pub value: f64,
    pub lambda: f64,
    /// Whether lambda lies in the Hölder-equivalence window (n, n+2).
    pub in_equivalence_range: bool,
    pub radii: Vec<f64>,
    pub centers_used: usize,
}

/// Campanato-type oscillation estimator with masked box sums.
pub fn campanato_seminorm(u: &GridFunction, lambda: f64) -> Result<CampanatoEstimate> {
    let grid = &u.grid;
    if grid.is_radial() {
        return Err(Error::Unsupported(
            "campanato estimator needs a Cartesian grid".into(),
        ));
    }
    let dim = grid.dim() as f64;
    let cellvol = grid.cell_volume()?;
    let nodes = closure_nodes(u);
    // radius ladder: logarithmic between a few cells and half the diameter
    let h = grid.h_max();
    let diam = {
        let mut best = 0.0f64;
        let step = (nodes.len() / 512).max(1);
        for &i in nodes.iter().step_by(step) {
            best = best.max(grid.node_distance(nodes[0], i));
        }
        best
    };
    // resolution-independent ladder floor (falling back to 3h on coarse
    // grids) keeps the estimator stable under refinement: with an h-scaled
    // floor the cusp quotients drift as smaller windows open up
    let r_min = (3.0 * h).max(diam / 16.0);
    let r_max = diam / 2.0;
    if r_max <= r_min {
        return Err(Error::GridTooCoarse(format!(
            "radius ladder empty: r_min = {r_min}, diam/2 = {r_max}"
        )));
    }
    let rungs = 12usize;
    let ratio = (r_max / r_min).powf(1.0 / (rungs - 1) as f64);
    let radii: Vec<f64> = (0..rungs).map(|k| r_min * ratio.powi(k as i32)).collect();
    // deterministic center subsample
    let max_centers = 200usize;
    let stride = (nodes.len() / max_centers).max(1);
    let centers: Vec<usize> = nodes.iter().step_by(stride).copied().collect();
    let mut value = 0.0f64;
    let mut scratch: Vec<(f64, f64)> = Vec::with_capacity(nodes.len());
    for &c in &centers {
        scratch.clear();
        // shift by the center value: variance is translation invariant and
        // this kills the catastrophic cancellation on near-constant fields
        let u0 = u.values[c];
        for &i in &nodes {
            scratch.push((grid.node_distance(c, i), u.values[i] - u0));
        }
        scratch.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        // prefix sums give every radius of the ladder in one pass
        let mut k = 0usize;
        let mut sum = 0.0f64;
        let mut sum2 = 0.0f64;
        let mut count = 0usize;
        for &r in &radii {
            while k < scratch.len() && scratch[k].0 <= r {
                sum += scratch[k].1;
                sum2 += scratch[k].1 * scratch[k].1;
                count += 1;
                k += 1;
            }
            if count < 2 {
                continue;
            }
            let integral = (sum2 - sum * sum / count as f64) * cellvol;
            let quotient = integral / r.powf(lambda);
            if quotient > value {
                value = quotient;
            }
        }
    }
    Ok(CampanatoEstimate {
        value,
        lambda,
        in_equivalence_range: lambda > dim && lambda < dim + 2.0,
        radii,
        centers_used: centers.len(),
    })
}

#[derive(Debug, Clone)]
pub enum ExponentFit {
    /// Constant field: exponent undefined.
    Flat,
    Fitted {
        /// Fitted slope of log modulus-of-continuity vs log distance,
        /// clipped to (0, 1].
        alpha_hat: f64,
        /// RMS residual of the log-log fit.
        residual: f64,
        /// Raw (unclipped) slope.
        slope: f64,
        bins_used: usize,
    },
}

/// Least-squares fit of the modulus of continuity on log-spaced distance
/// bins between 4h and diam/4.
pub fn fit_holder_exponent(u: &GridFunction) -> Result<ExponentFit> {
    let grid = &u.grid;
    let nodes = closure_nodes(u);
    if nodes.len() < 2 {
        return Err(Error::GridTooCoarse("need at least two nodes".into()));
    }
    let h = grid.h_max();
    let diam = {
        let mut best = 0.0f64;
        let step = (nodes.len() / 512).max(1);
        for &i in nodes.iter().step_by(step) {
            best = best.max(grid.node_distance(nodes[0], i));
        }
        best
    };
    let lo = 4.0 * h;
    let hi = diam / 4.0;
    let bins = 16usize;
    if hi <= lo {
        return Err(Error::GridTooCoarse(
            "fewer than 8 distance bins between 4h and diam/4".into(),
        ));
    }
    let log_lo = lo.ln();
    let width = (hi / lo).ln() / bins as f64;
    let mut omega = vec![0.0f64; bins];
    scan_pairs(u, &nodes, |i, j, d| {
        if d < lo || d >= hi {
            return;
        }
        let b = (((d.ln() - log_lo) / width) as usize).min(bins - 1);
        let diff = (u.values[i] - u.values[j]).abs();
        if diff > omega[b] {
            omega[b] = diff;
        }
    });
    let scale = u.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let pts: Vec<(f64, f64)> = omega
        .iter()
        .enumerate()
        .filter(|(_, &w)| w > 1e-13 * (1.0 + scale))
        .map(|(b, &w)| (log_lo + (b as f64 + 0.5) * width, w.ln()))
        .collect();
    if pts.iter().all(|&(_, w)| w == f64::NEG_INFINITY) || pts.is_empty() {
        return Ok(ExponentFit::Flat);
    }
    if pts.len() < 8 {
        return Err(Error::GridTooCoarse(format!(
            "only {} nonempty distance bins (need 8)",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    let intercept = (sy - slope * sx) / n;
    let residual = (pts
        .iter()
        .map(|&(x, y)| {
            let e = y - (slope * x + intercept);
            e * e
        })
        .sum::<f64>()
        / n)
        .sqrt();
    let alpha_hat = slope.clamp(1e-6, 1.0);
    Ok(ExponentFit::Fitted {
        alpha_hat,
        residual,
        slope,
        bins_used: pts.len(),
    })
}

#[derive(Debug, Clone, Copy)]
pub struct InterpolationReport {
    pub epsilon: f64,
    pub theta: f64,
    pub c_eps: f64,
    /// `[u]*_1`
    pub lhs: f64,
    /// `eps [u]*_2 + C_eps sup|u|`
    pub rhs: f64,
    pub weighted_2: f64,
    pub sup_u: f64,
    pub margin: f64,
    pub holds: bool,
}

/// Check `[u]*_1 <= eps [u]*_2 + C_eps sup|u|` with the explicit proof
/// constants theta = min(eps/4, 1/2), C_eps = 2/theta (these guarantee
/// theta (1-theta)^{-2} <= eps for theta <= 1/2).
///
/// Requires exact derivative channels; finite differences are refused so
/// the inequality is tested with exact norms.
pub fn interpolation_check(u: &GridFunction, epsilon: f64) -> Result<InterpolationReport> {
    if !(epsilon > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "epsilon = {epsilon} must be positive"
        )));
    }
    if !u.has_exact_derivs() {
        return Err(Error::InvalidArgument(
            "interpolation_check needs exact derivative channels (finite differences not accepted)"
                .into(),
        ));
    }
    let dist = distance_field(&u.grid)?;
    let dim = u.grid.dim();
    let mut w1 = 0.0f64;
    let mut w2 = 0.0f64;
    let mut sup_u = 0.0f64;
    for i in u.grid.interior_nodes() {
        let d = dist.values[i];
        let g = u.exact_grad_at(i).unwrap();
        let hmat = u.exact_hess_at(i).unwrap();
        let g1: f64 = g.iter().map(|v| v.abs()).sum();
        let mut g2 = 0.0f64;
        for a in 0..dim {
            for b in a..dim {
                g2 += hmat[a * dim + b].abs();
            }
        }
        w1 = w1.max(d * g1);
        w2 = w2.max(d * d * g2);
        sup_u = sup_u.max(u.values[i].abs());
    }
    let theta = (epsilon / 4.0).min(0.5);
    let c_eps = 2.0 / theta;
    let rhs = epsilon * w2 + c_eps * sup_u;
    let margin = rhs - w1;
    Ok(InterpolationReport {
        epsilon,
        theta,
        c_eps,
        lhs: w1,
        rhs,
        weighted_2: w2,
        sup_u,
        margin,
        holds: margin >= -1e-12 * (1.0 + rhs.abs()),
    })
}

/// Flat report aggregating whatever norm fields were requested; absent
/// fields serialize as omitted keys, never as zeros.
#[derive(Debug, Clone, Default)]
pub struct HolderReport {
    pub alpha: Option<f64>,
    pub seminorm: Option<f64>,
    pub sup_norm: Option<f64>,
    pub weighted_1: Option<f64>,
    pub weighted_1_alpha: Option<f64>,
    pub weighted_2: Option<f64>,
    pub weighted_2_alpha: Option<f64>,
    pub sigma: Option<f64>,
    pub sigma_seminorm: Option<f64>,
    pub sigma_sup: Option<f64>,
    pub campanato: Option<f64>,
    pub campanato_lambda: Option<f64>,
    pub fitted_alpha: Option<f64>,
    pub fit_residual: Option<f64>,
    pub flat: Option<bool>,
    pub pairs_used: Option<usize>,
    pub exact_pairs: Option<bool>,
}

impl HolderReport {
    pub fn to_json(&self) -> Json {
        let mut o = Json::obj();
        o.push_opt("alpha", self.alpha)
            .push_opt("seminorm", self.seminorm)
            .push_opt("sup_norm", self.sup_norm)
            .push_opt("weighted_1", self.weighted_1)
            .push_opt("weighted_1_alpha", self.weighted_1_alpha)
            .push_opt("weighted_2", self.weighted_2)
            .push_opt("weighted_2_alpha", self.weighted_2_alpha)
            .push_opt("sigma", self.sigma)
            .push_opt("sigma_seminorm", self.sigma_seminorm)
            .push_opt("sigma_sup", self.sigma_sup)
            .push_opt("campanato", self.campanato)
            .push_opt("campanato_lambda", self.campanato_lambda)
            .push_opt("fitted_alpha", self.fitted_alpha)
            .push_opt("fit_residual", self.fit_residual)
            .push_opt("flat", self.flat)
            .push_opt("pairs_used", self.pairs_used)
            .push_opt("exact_pairs", self.exact_pairs);
        o
    }
}
