//! Low-level cell loops behind the grid operators and the time stepper.
//!
//! Every kernel exists in a sequential form and, with the `parallel` feature
//! (default), a rayon form; the `*_seq`/`*_par` pairs are public so the bench
//! suite can compare them directly. The unsuffixed entry points dispatch to
//! the rayon form when it is compiled in and the workload is large enough to
//! amortize the fork-join overhead.

use crate::grid::Grid;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

/// Below this many cells the parallel dispatch falls back to the sequential
/// loop; desk-scale grids gain nothing from splitting.
#[cfg(feature = "parallel")]
pub const PAR_THRESHOLD: usize = 1 << 14;

#[cfg(feature = "parallel")]
const MIN_CHUNK: usize = 1 << 12;

#[inline]
fn pow_one(v: f64, m: f64) -> f64 {
    if m == 1.0 {
        v
    } else if m == 2.0 {
        v * v
    } else {
        v.powf(m)
    }
}

/// `out[c] = field[c]^m`, with fast paths for m = 1 and m = 2.
pub fn pow_field_seq(field: &[f64], m: f64, out: &mut [f64]) {
    for (o, &v) in out.iter_mut().zip(field) {
        *o = pow_one(v, m);
    }
}

#[cfg(feature = "parallel")]
pub fn pow_field_par(field: &[f64], m: f64, out: &mut [f64]) {
    out.par_iter_mut()
        .with_min_len(MIN_CHUNK)
        .zip(field.par_iter())
        .for_each(|(o, &v)| {
            *o = pow_one(v, m);
        });
}

pub fn pow_field(field: &[f64], m: f64, out: &mut [f64]) {
    #[cfg(feature = "parallel")]
    if field.len() >= PAR_THRESHOLD {
        return pow_field_par(field, m, out);
    }
    pow_field_seq(field, m, out)
}

#[inline]
fn stencil_cell(grid: &Grid, w: &[f64], coeff: f64, idx: usize) -> f64 {
    let (nx, ny) = grid.shape();
    let (hx, hy) = grid.spacing();
    let i = idx % nx;
    let j = idx / nx;
    let c = w[idx];
    // Reflecting ghost cells: the mirror value equals the boundary cell,
    // so the missing-neighbor term reduces to the cell itself.
    let left = if i > 0 { w[idx - 1] } else { c };
    let right = if i + 1 < nx { w[idx + 1] } else { c };
    let mut lap = (left - 2.0 * c + right) / (hx * hx);
    if ny > 1 {
        let down = if j > 0 { w[idx - nx] } else { c };
        let up = if j + 1 < ny { w[idx + nx] } else { c };
        lap += (down - 2.0 * c + up) / (hy * hy);
    }
    coeff * lap
}

/// 3-point / 5-point Laplacian of `w` with reflecting ghost cells.
pub fn neumann_laplacian_seq(grid: &Grid, w: &[f64], coeff: f64, out: &mut [f64]) {
    for (idx, o) in out.iter_mut().enumerate() {
        *o = stencil_cell(grid, w, coeff, idx);
    }
}

#[cfg(feature = "parallel")]
pub fn neumann_laplacian_par(grid: &Grid, w: &[f64], coeff: f64, out: &mut [f64]) {
    out.par_iter_mut()
        .with_min_len(MIN_CHUNK)
        .enumerate()
        .for_each(|(idx, o)| {
            *o = stencil_cell(grid, w, coeff, idx);
        });
}

pub fn neumann_laplacian(grid: &Grid, w: &[f64], coeff: f64, out: &mut [f64]) {
    #[cfg(feature = "parallel")]
    if w.len() >= PAR_THRESHOLD {
        return neumann_laplacian_par(grid, w, coeff, out);
    }
    neumann_laplacian_seq(grid, w, coeff, out)
}

/// Per-cell monomial of a species block: `prod_s fields[s][c]^{exps[s]}`.
#[inline]
pub(crate) fn monomial_at(fields: &[Vec<f64>], exps: &[f64], cell: usize) -> f64 {
    let mut prod = 1.0;
    for (f, &e) in fields.iter().zip(exps) {
        prod *= pow_one(f[cell], e);
    }
    prod
}

#[inline]
#[allow(clippy::too_many_arguments)]
fn reversible_rate_cell(
    a_fields: &[Vec<f64>],
    alpha: &[f64],
    b_fields: &[Vec<f64>],
    beta: &[f64],
    k_f: f64,
    k_b: f64,
    eps: f64,
    stoich_sum: f64,
    cell: usize,
) -> f64 {
    let rate = k_f * monomial_at(a_fields, alpha, cell) - k_b * monomial_at(b_fields, beta, cell);
    if eps > 0.0 {
        rate / (1.0 + eps * stoich_sum * rate.abs())
    } else {
        rate
    }
}

/// Per-cell net mass-action rate `k_f a^alpha - k_b b^beta` for the
/// reversible system, with the approximating-scheme damping for `eps > 0`.
///
/// The species terms derive from this single scalar per cell
/// (`f_i = -alpha_i r`, `g_j = +beta_j r`), which keeps the stoichiometric
/// cancellation exact in floating point.
#[allow(clippy::too_many_arguments)]
pub fn reversible_rates_seq(
    a_fields: &[Vec<f64>],
    alpha: &[f64],
    b_fields: &[Vec<f64>],
    beta: &[f64],
    k_f: f64,
    k_b: f64,
    eps: f64,
    out: &mut [f64],
) {
    let stoich_sum: f64 = alpha.iter().sum::<f64>() + beta.iter().sum::<f64>();
    for (cell, o) in out.iter_mut().enumerate() {
        *o = reversible_rate_cell(
            a_fields, alpha, b_fields, beta, k_f, k_b, eps, stoich_sum, cell,
        );
    }
}

#[cfg(feature = "parallel")]
#[allow(clippy::too_many_arguments)]
pub fn reversible_rates_par(
    a_fields: &[Vec<f64>],
    alpha: &[f64],
    b_fields: &[Vec<f64>],
    beta: &[f64],
    k_f: f64,
    k_b: f64,
    eps: f64,
    out: &mut [f64],
) {
    let stoich_sum: f64 = alpha.iter().sum::<f64>() + beta.iter().sum::<f64>();
    out.par_iter_mut()
        .with_min_len(MIN_CHUNK)
        .enumerate()
        .for_each(|(cell, o)| {
            *o = reversible_rate_cell(
                a_fields, alpha, b_fields, beta, k_f, k_b, eps, stoich_sum, cell,
            );
        });
}

#[allow(clippy::too_many_arguments)]
pub fn reversible_rates(
    a_fields: &[Vec<f64>],
    alpha: &[f64],
    b_fields: &[Vec<f64>],
    beta: &[f64],
    k_f: f64,
    k_b: f64,
    eps: f64,
    out: &mut [f64],
) {
    #[cfg(feature = "parallel")]
    if out.len() >= PAR_THRESHOLD {
        return reversible_rates_par(a_fields, alpha, b_fields, beta, k_f, k_b, eps, out);
    }
    reversible_rates_seq(a_fields, alpha, b_fields, beta, k_f, k_b, eps, out)
}

/// Evaluates a black-box reaction map cellwise into per-species arrays,
/// applying the approximating-scheme damping for `eps > 0`.
pub fn general_reactions_seq<F>(fields: &[Vec<f64>], eps: f64, f: &F, out: &mut [Vec<f64>])
where
    F: Fn(&[f64], &mut [f64]) + Sync + ?Sized,
{
    let species = fields.len();
    let cells = fields[0].len();
    let mut u = vec![0.0; species];
    let mut val = vec![0.0; species];
    for cell in 0..cells {
        for s in 0..species {
            u[s] = fields[s][cell];
        }
        f(&u, &mut val);
        if eps > 0.0 {
            let total: f64 = val.iter().map(|v| v.abs()).sum();
            let scale = 1.0 / (1.0 + eps * total);
            for v in val.iter_mut() {
                *v *= scale;
            }
        }
        for s in 0..species {
            out[s][cell] = val[s];
        }
    }
}

#[cfg(feature = "parallel")]
pub fn general_reactions_par<F>(fields: &[Vec<f64>], eps: f64, f: &F, out: &mut [Vec<f64>])
where
    F: Fn(&[f64], &mut [f64]) + Sync + ?Sized,
{
    let species = fields.len();
    let cells = fields[0].len();
    // Column-major scratch so each cell's species block is one contiguous
    // chunk; the gather buffer is reused per worker.
    let mut scratch = vec![0.0; species * cells];
    scratch
        .par_chunks_mut(species)
        .with_min_len(MIN_CHUNK)
        .enumerate()
        .for_each_init(
            || vec![0.0; species],
            |u, (cell, chunk)| {
                for s in 0..species {
                    u[s] = fields[s][cell];
                }
                f(u, chunk);
                if eps > 0.0 {
                    let total: f64 = chunk.iter().map(|v| v.abs()).sum();
                    let scale = 1.0 / (1.0 + eps * total);
                    for v in chunk.iter_mut() {
                        *v *= scale;
                    }
                }
            },
        );
    for (s, field) in out.iter_mut().enumerate() {
        for (cell, o) in field.iter_mut().enumerate() {
            *o = scratch[cell * species + s];
        }
    }
}

pub fn general_reactions<F>(fields: &[Vec<f64>], eps: f64, f: &F, out: &mut [Vec<f64>])
where
    F: Fn(&[f64], &mut [f64]) + Sync + ?Sized,
{
    #[cfg(feature = "parallel")]
    if fields[0].len() >= PAR_THRESHOLD {
        return general_reactions_par(fields, eps, f, out);
    }
    general_reactions_seq(fields, eps, f, out)
}

/// `out[c] = base[c] + dt * rhs[c]` (the explicit update).
pub fn axpy_seq(base: &[f64], rhs: &[f64], dt: f64, out: &mut [f64]) {
    for ((o, &u), &r) in out.iter_mut().zip(base).zip(rhs) {
        *o = u + dt * r;
    }
}

#[cfg(feature = "parallel")]
pub fn axpy_par(base: &[f64], rhs: &[f64], dt: f64, out: &mut [f64]) {
    out.par_iter_mut()
        .with_min_len(MIN_CHUNK)
        .zip(base.par_iter())
        .zip(rhs.par_iter())
        .for_each(|((o, &u), &r)| {
            *o = u + dt * r;
        });
}

pub fn axpy(base: &[f64], rhs: &[f64], dt: f64, out: &mut [f64]) {
    #[cfg(feature = "parallel")]
    if base.len() >= PAR_THRESHOLD {
        return axpy_par(base, rhs, dt, out);
    }
    axpy_seq(base, rhs, dt, out)
}
