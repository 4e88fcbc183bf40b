//! Named analytic test fields with exact derivative channels.
//!
//! Expression-backed sampling wires the symbolic derivative into the
//! GridFunction's exact gradient/Hessian channels, so norm checks that
//! require exact derivatives (interpolation inequalities, weighted norms on
//! analytic data) never depend on finite differences.

use crate::error::Result;
use crate::expr::{coord_var, Expr};
use crate::grid::{Grid, GridFunction};
use std::sync::Arc;

/// Sample an expression in the coordinate variables (x, y, z / x1..xn).
pub fn sample_expr(grid: &Arc<Grid>, expr: &Expr) -> Result<GridFunction> {
    let mut values = Vec::with_capacity(grid.node_count());
    for i in 0..grid.node_count() {
        values.push(expr.eval(&|name| coord_var(name, grid.coord(i)))?);
    }
    GridFunction::from_values(grid, values)
}

/// Sample an expression together with its exact gradient and Hessian
/// obtained by symbolic differentiation.
pub fn sample_expr_with_derivs(grid: &Arc<Grid>, expr: &Expr) -> Result<GridFunction> {
    let dim = grid.dim();
    let expr = expr.canonicalize_coords();
    let vars: Vec<String> = (1..=dim).map(|a| format!("x{a}")).collect();
    let grads: Vec<Expr> = vars.iter().map(|v| expr.derivative(v)).collect();
    let hesses: Vec<Vec<Expr>> = grads
        .iter()
        .map(|g| vars.iter().map(|v| g.derivative(v)).collect())
        .collect();
    let n = grid.node_count();
    let mut values = Vec::with_capacity(n);
    let mut eg = vec![0.0; n * dim];
    let mut eh = vec![0.0; n * dim * dim];
    for i in 0..n {
        let x = grid.coord(i);
        let lookup = |name: &str| coord_var(name, x);
        values.push(expr.eval(&lookup)?);
        for a in 0..dim {
            eg[i * dim + a] = grads[a].eval(&lookup)?;
            for b in 0..dim {
                eh[i * dim * dim + a * dim + b] = hesses[a][b].eval(&lookup)?;
            }
        }
    }
    let mut f = GridFunction::from_values(grid, values)?;
    f.set_exact_derivs(eg, eh);
    Ok(f)
}

/// Lacunary cosine sum sum_{j=1}^{terms} 2^{-alpha j} cos(2^j x) along the
/// first axis; its Hölder exponent is alpha.
pub fn weierstrass(alpha: f64, terms: usize) -> impl Fn(&[f64]) -> f64 {
    move |x: &[f64]| {
        let mut s = 0.0;
        for j in 1..=terms {
            let freq = (1u64 << j) as f64;
            s += 2f64.powf(-alpha * j as f64) * (freq * x[0]).cos();
        }
        s
    }
}
