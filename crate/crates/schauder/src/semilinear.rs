//! Monotone sub/supersolution iteration for -Delta u = f(u) with zero
//! Dirichlet data.
//!
//! Given an ordered pair v0 <= w0 with -Delta v0 <= f(v0) and
//! -Delta w0 >= f(w0), both sequences
//!
//! ```text
//! -Delta v_j + m v_j = g(v_{j-1}),   g(u) = f(u) + m u
//! ```
//!
//! are driven by one factorization of (-Delta + m). The shift m exceeds the
//! sampled bound on |f'| over [min v0, max w0] by 1, making g nondecreasing
//! with margin; monotone bracketing v_j <= v_{j+1} <= w_{j+1} <= w_j is
//! asserted at every step. Convergence is declared on the sup-change of both
//! sequences, not on the gap: the lower and upper limits may genuinely
//! differ when the problem has multiple solutions between the pair.

use crate::elliptic::{assemble_operator, AssembledSystem, EllipticOperator};
use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::grid::GridFunction;
use crate::json::Json;
use std::sync::Arc;

/// Scalar reaction term with its symbolic derivative and monotonization
/// shift.
pub struct Nonlinearity {
    pub f: Expr,
    pub df: Expr,
    /// working interval [min v0, max w0]
    pub interval: (f64, f64),
    /// sampled sup |f'| over the working interval
    pub m_fprime: f64,
    /// monotonization shift, >= m_fprime (default m_fprime + 1)
    pub m: f64,
}

impl Nonlinearity {
    /// Parse `f(u)` from the whitelisted grammar and choose m = sup|f'| + 1.
    pub fn parse(text: &str, interval: (f64, f64)) -> Result<Self> {
        let f = Expr::parse(text)?;
        Self::new(f, interval)
    }

    pub fn new(f: Expr, interval: (f64, f64)) -> Result<Self> {
        let df = f.derivative("u");
        let m_fprime = sup_abs_on(&df, interval)?;
        Self::with_shift(f, interval, m_fprime + 1.0)
    }

    /// Use an explicit shift; rejected unless g = f + m u is nondecreasing
    /// on a fine sample of the working interval.
    pub fn with_shift(f: Expr, interval: (f64, f64), m: f64) -> Result<Self> {
        let df = f.derivative("u");
        let m_fprime = sup_abs_on(&df, interval)?;
        let samples = 4096;
        for k in 0..=samples {
            let u = interval.0 + (interval.1 - interval.0) * k as f64 / samples as f64;
            let slope = df.eval1("u", u)? + m;
            if slope < 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "g(u) = f(u) + m u decreasing at u = {u} (g' = {slope}); shift m = {m} too small"
                )));
            }
        }
        Ok(Self {
            f,
            df,
            interval,
            m_fprime,
            m,
        })
    }

    pub fn eval(&self, u: f64) -> f64 {
        self.f.eval1("u", u).unwrap_or(f64::NAN)
    }

    pub fn eval_df(&self, u: f64) -> f64 {
        self.df.eval1("u", u).unwrap_or(f64::NAN)
    }

    fn eval_g(&self, u: f64) -> f64 {
        self.eval(u) + self.m * u
    }
}

fn sup_abs_on(e: &Expr, interval: (f64, f64)) -> Result<f64> {
    if !(interval.1 >= interval.0) {
        return Err(Error::InvalidArgument("empty working interval".into()));
    }
    let samples = 4096;
    let mut sup = 0.0f64;
    for k in 0..=samples {
        let u = interval.0 + (interval.1 - interval.0) * k as f64 / samples as f64;
        sup = sup.max(e.eval1("u", u)?.abs());
    }
    Ok(sup)
}

/// Nodewise margins of the ordered-pair conditions.
#[derive(Debug, Clone, Copy)]
pub struct OrderedPairReport {
    /// min (w0 - v0)
    pub order_margin: f64,
    /// min [f(v0) + Delta_h v0] (subsolution condition -Delta v <= f(v))
    pub sub_margin: f64,
    /// min [-Delta_h w0 - f(w0)] (supersolution condition)
    pub super_margin: f64,
    pub ordered: bool,
}

/// Check v0 <= w0 and the sub/supersolution inequalities within `tol`.
pub fn verify_ordered_pair(
    v0: &GridFunction,
    w0: &GridFunction,
    nl: &Nonlinearity,
    tol: f64,
) -> Result<OrderedPairReport> {
    if !Arc::ptr_eq(&v0.grid, &w0.grid) {
        return Err(Error::InvalidArgument("v0 and w0 must share a grid".into()));
    }
    let grid = &v0.grid;
    for i in grid.boundary_nodes() {
        if v0.values[i].abs() > tol || w0.values[i].abs() > tol {
            return Err(Error::InvalidArgument(
                "ordered pairs must carry zero boundary data".into(),
            ));
        }
    }
    let lap = EllipticOperator::laplacian(grid)?;
    let sys = assemble_operator(&lap)?;
    let lap_v = sys.apply(&v0.values);
    let lap_w = sys.apply(&w0.values);
    let mut order_margin = f64::INFINITY;
    let mut sub_margin = f64::INFINITY;
    let mut super_margin = f64::INFINITY;
    for (r, &i) in sys.rows.iter().enumerate() {
        order_margin = order_margin.min(w0.values[i] - v0.values[i]);
        sub_margin = sub_margin.min(nl.eval(v0.values[i]) + lap_v[r]);
        super_margin = super_margin.min(-lap_w[r] - nl.eval(w0.values[i]));
    }
    let ordered = order_margin >= -tol && sub_margin >= -tol && super_margin >= -tol;
    Ok(OrderedPairReport {
        order_margin,
        sub_margin,
        super_margin,
        ordered,
    })
}

/// Result of the monotone iteration.
#[derive(Debug, Clone)]
pub struct MonotoneResult {
    pub u_lower: GridFunction,
    pub u_upper: GridFunction,
    pub iterations: usize,
    /// sup |u_upper - u_lower|
    pub gap: f64,
    /// per-iteration worst monotonicity margins (lower nondecreasing,
    /// upper nonincreasing, ordering), most negative value seen
    pub monotonicity_margin: f64,
    pub margin_trace: Vec<(f64, f64, f64)>,
    /// sup |Delta_h u + f(u)| for both limits
    pub residual_lower: f64,
    pub residual_upper: f64,
}

impl MonotoneResult {
    pub fn to_json(&self) -> Json {
        let mut o = Json::obj();
        o.push("iterations", self.iterations)
            .push("gap", self.gap)
            .push("monotonicity_margin", self.monotonicity_margin)
            .push("residual_lower", self.residual_lower)
            .push("residual_upper", self.residual_upper)
            .push(
                "margin_trace",
                Json::Arr(
                    self.margin_trace
                        .iter()
                        .map(|&(a, b, c)| {
                            let mut row = Json::obj();
                            row.push("lower", a).push("upper", b).push("order", c);
                            row
                        })
                        .collect(),
                ),
            )
            .push("sup_lower", self.u_lower.sup_interior())
            .push("sup_upper", self.u_upper.sup_interior());
        o
    }
}

const MONOTONE_SLACK: f64 = 1e-10;
const ITERATION_CAP: usize = 500;

/// Run both monotone sequences to tolerance `tol` on the sup-change.
pub fn monotone_iterate(
    nl: &Nonlinearity,
    v0: &GridFunction,
    w0: &GridFunction,
    tol: f64,
) -> Result<MonotoneResult> {
    let pair = verify_ordered_pair(v0, w0, nl, 10.0 * MONOTONE_SLACK)?;
    if !pair.ordered {
        return Err(Error::NotOrderedPair(format!(
            "margins: order {:.3e}, sub {:.3e}, super {:.3e}",
            pair.order_margin, pair.sub_margin, pair.super_margin
        )));
    }
    let grid = &v0.grid;
    let scale = 1.0 + v0.sup_all().max(w0.sup_all());
    let helm = EllipticOperator::helmholtz(grid, -nl.m)?;
    let sys = assemble_operator(&helm)?;
    let lu = sys.factor()?;
    let zero_bc = GridFunction::constant(grid, 0.0);
    let step = |prev: &GridFunction| -> GridFunction {
        // (Delta - m) u = -g(prev)
        let rhs_field =
            GridFunction::from_values(grid, prev.values.iter().map(|&u| -nl.eval_g(u)).collect())
                .expect("same grid");
        let mut x = sys.rhs(&rhs_field, &zero_bc);
        lu.solve(&mut x);
        sys.compose(&x, &zero_bc)
    };
    let mut lower = v0.clone();
    let mut upper = w0.clone();
    let mut margin_trace = Vec::new();
    let mut worst_margin = f64::INFINITY;
    let mut iterations = 0usize;
    let mut prev_change = f64::INFINITY;
    loop {
        if iterations >= ITERATION_CAP {
            return Err(Error::IterationFailed(format!(
                "slow convergence: {ITERATION_CAP} iterations without stabilizing"
            )));
        }
        let next_lower = step(&lower);
        let next_upper = step(&upper);
        iterations += 1;
        let mut lower_margin = f64::INFINITY;
        let mut upper_margin = f64::INFINITY;
        let mut order_margin = f64::INFINITY;
        let mut change = 0.0f64;
        for i in grid.interior_nodes() {
            lower_margin = lower_margin.min(next_lower.values[i] - lower.values[i]);
            upper_margin = upper_margin.min(upper.values[i] - next_upper.values[i]);
            order_margin = order_margin.min(next_upper.values[i] - next_lower.values[i]);
            change = change
                .max((next_lower.values[i] - lower.values[i]).abs())
                .max((next_upper.values[i] - upper.values[i]).abs());
        }
        margin_trace.push((lower_margin, upper_margin, order_margin));
        worst_margin = worst_margin
            .min(lower_margin)
            .min(upper_margin)
            .min(order_margin);
        if worst_margin < -MONOTONE_SLACK * scale {
            let node = grid
                .interior_nodes()
                .find(|&i| {
                    next_lower.values[i] - lower.values[i] < -MONOTONE_SLACK * scale
                        || upper.values[i] - next_upper.values[i] < -MONOTONE_SLACK * scale
                        || next_upper.values[i] - next_lower.values[i] < -MONOTONE_SLACK * scale
                })
                .unwrap_or(0);
            return Err(Error::NotOrderedPair(format!(
                "monotonicity violated at node {node} (margin {worst_margin:.3e})"
            )));
        }
        lower = next_lower;
        upper = next_upper;
        // geometric-tail stopping: with observed contraction rate q the
        // remaining distance to the limit is about change * q / (1 - q),
        // so the limits of different admissible shifts agree to ~tol
        let rate = (change / prev_change).clamp(0.0, 0.999);
        let tail = change * rate / (1.0 - rate);
        prev_change = change;
        if change < tol && tail < tol {
            break;
        }
    }
    // both limits must solve the discrete equation
    let lap = EllipticOperator::laplacian(grid)?;
    let lap_sys = assemble_operator(&lap)?;
    let residual = |u: &GridFunction| -> f64 {
        let lap_u = lap_sys.apply(&u.values);
        lap_sys
            .rows
            .iter()
            .enumerate()
            .map(|(r, &i)| (lap_u[r] + nl.eval(u.values[i])).abs())
            .fold(0.0, f64::max)
    };
    let gap = grid
        .interior_nodes()
        .map(|i| (upper.values[i] - lower.values[i]).abs())
        .fold(0.0, f64::max);
    Ok(MonotoneResult {
        residual_lower: residual(&lower),
        residual_upper: residual(&upper),
        u_lower: lower,
        u_upper: upper,
        iterations,
        gap,
        monotonicity_margin: worst_margin,
        margin_trace,
    })
}

/// Damped Newton solve of the discrete system -Delta_h u = f(u), zero
/// Dirichlet data. Independent of the monotone iteration path; used as its
/// oracle.
pub fn newton_solve(
    nl: &Nonlinearity,
    start: &GridFunction,
    tol: f64,
    max_iter: usize,
) -> Result<GridFunction> {
    let grid = &start.grid;
    let lap = EllipticOperator::laplacian(grid)?;
    let sys = assemble_operator(&lap)?;
    let zero_bc = GridFunction::constant(grid, 0.0);
    let mut u = GridFunction::from_values(grid, {
        let mut v = start.values.clone();
        for i in grid.boundary_nodes() {
            v[i] = 0.0;
        }
        v
    })?;
    let res_norm = |u: &GridFunction| -> f64 {
        let lap_u = sys.apply(&u.values);
        sys.rows
            .iter()
            .enumerate()
            .map(|(r, &i)| (lap_u[r] + nl.eval(u.values[i])).abs())
            .fold(0.0, f64::max)
    };
    let mut r0 = res_norm(&u);
    for _ in 0..max_iter {
        if r0 <= tol {
            return Ok(u);
        }
        // Jacobian rows: Delta_h + diag f'(u); solve J delta = -(Delta u + f(u))
        let jac = jacobian_system(&sys, nl, &u)?;
        let lu = jac.factor()?;
        let lap_u = sys.apply(&u.values);
        let mut rhs: Vec<f64> = sys
            .rows
            .iter()
            .enumerate()
            .map(|(r, &i)| -(lap_u[r] + nl.eval(u.values[i])))
            .collect();
        lu.solve(&mut rhs);
        let mut lambda = 1.0;
        loop {
            let mut trial = u.values.clone();
            for (r, &i) in sys.rows.iter().enumerate() {
                trial[i] += lambda * rhs[r];
            }
            let trial = GridFunction::from_values(grid, trial)?;
            let r1 = res_norm(&trial);
            if r1 < r0 || lambda < 1e-8 {
                u = trial;
                r0 = r1;
                break;
            }
            lambda *= 0.5;
        }
        let _ = &zero_bc;
    }
    if r0 <= tol {
        Ok(u)
    } else {
        Err(Error::IterationFailed(format!(
            "newton stalled at residual {r0:.3e}"
        )))
    }
}

fn jacobian_system(
    lap_sys: &AssembledSystem,
    nl: &Nonlinearity,
    u: &GridFunction,
) -> Result<crate::band::BandMatrix> {
    let n = lap_sys.row_count();
    let mut kl = 0usize;
    let mut ku = 0usize;
    for r in 0..n {
        for &(c, _) in lap_sys.row(r) {
            if c < r {
                kl = kl.max(r - c);
            } else {
                ku = ku.max(c - r);
            }
        }
    }
    let mut m = crate::band::BandMatrix::zeros(n, kl, ku);
    for r in 0..n {
        for &(c, v) in lap_sys.row(r) {
            m.add(r, c, v);
        }
        let i = lap_sys.rows[r];
        m.add(r, r, nl.eval_df(u.values[i]));
    }
    Ok(m)
}
