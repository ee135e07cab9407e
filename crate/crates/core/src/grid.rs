//! Cell-centered 1D/2D meshes with unit total measure, no-flux discrete
//! operators for porous-medium fluxes, averages and norms.
//!
//! All grids cover the unit interval or unit square, so the discrete
//! integral of a field is `cell_volume * sum(field)` and the total measure
//! is exactly one. Boundary handling is reflecting ghost cells, which is the
//! cell-centered realization of the zero-flux condition.

use crate::error::{Error, Result};
use crate::kernels;

/// Uniform cell-centered mesh on the unit interval (1D) or unit square (2D).
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    nx: usize,
    ny: usize,
    hx: f64,
    hy: f64,
}

impl Grid {
    /// 1D grid with `n` cells on `[0,1]`.
    pub fn line(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidSystem(format!(
                "grid needs at least 2 cells per axis, got {n}"
            )));
        }
        Ok(Grid {
            nx: n,
            ny: 1,
            hx: 1.0 / n as f64,
            hy: 1.0,
        })
    }

    /// 2D grid with `nx` x `ny` cells on `[0,1]^2`.
    pub fn rectangle(nx: usize, ny: usize) -> Result<Self> {
        if nx < 2 || ny < 2 {
            return Err(Error::InvalidSystem(format!(
                "grid needs at least 2 cells per axis, got {nx}x{ny}"
            )));
        }
        Ok(Grid {
            nx,
            ny,
            hx: 1.0 / nx as f64,
            hy: 1.0 / ny as f64,
        })
    }

    pub fn dim(&self) -> usize {
        if self.ny == 1 {
            1
        } else {
            2
        }
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    /// Cells per axis, `(nx, ny)`; `ny == 1` in 1D.
    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    /// Spacings per axis, `(hx, hy)`; `hy == 1` in 1D.
    pub fn spacing(&self) -> (f64, f64) {
        (self.hx, self.hy)
    }

    pub fn min_spacing(&self) -> f64 {
        if self.dim() == 1 {
            self.hx
        } else {
            self.hx.min(self.hy)
        }
    }

    pub fn cell_volume(&self) -> f64 {
        self.hx * self.hy
    }

    /// Center coordinates of cell `idx` (row-major); `y = 0.5` in 1D.
    pub fn cell_center(&self, idx: usize) -> (f64, f64) {
        let i = idx % self.nx;
        let j = idx / self.nx;
        ((i as f64 + 0.5) * self.hx, (j as f64 + 0.5) * self.hy)
    }
}

/// Nonnegative per-species cell values; species are stored as flat arrays in
/// the order `(a_1..a_M, b_1..b_N)` for the reversible system or `(u_1..u_S)`
/// otherwise.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldSet {
    cells: usize,
    data: Vec<Vec<f64>>,
}

impl FieldSet {
    /// Builds a field set from per-species cell arrays, checking equal
    /// lengths and nonnegativity.
    pub fn from_fields(fields: Vec<Vec<f64>>) -> Result<Self> {
        if fields.is_empty() {
            return Err(Error::InvalidSystem(
                "field set needs at least one species".into(),
            ));
        }
        let cells = fields[0].len();
        for (s, f) in fields.iter().enumerate() {
            if f.len() != cells {
                return Err(Error::InvalidSystem(format!(
                    "species {s} has {} cells, expected {cells}",
                    f.len()
                )));
            }
            if let Some(v) = f.iter().find(|v| !v.is_finite() || **v < 0.0) {
                return Err(Error::Domain(format!(
                    "species {s} contains a negative or non-finite value {v}"
                )));
            }
        }
        Ok(FieldSet {
            cells,
            data: fields,
        })
    }

    /// Spatially constant fields, one value per species.
    pub fn constant(values: &[f64], cells: usize) -> Result<Self> {
        Self::from_fields(values.iter().map(|&v| vec![v; cells]).collect())
    }

    pub(crate) fn zeros(species: usize, cells: usize) -> Self {
        FieldSet {
            cells,
            data: vec![vec![0.0; cells]; species],
        }
    }

    pub fn species(&self) -> usize {
        self.data.len()
    }

    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn field(&self, species: usize) -> &[f64] {
        &self.data[species]
    }

    pub fn field_mut(&mut self, species: usize) -> &mut [f64] {
        &mut self.data[species]
    }

    pub fn fields(&self) -> &[Vec<f64>] {
        &self.data
    }

    pub fn min_max(&self, species: usize) -> (f64, f64) {
        let f = &self.data[species];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for &v in f {
            lo = lo.min(v);
            hi = hi.max(v);
        }
        (lo, hi)
    }

    /// Largest value over all species and cells.
    pub fn max_value(&self) -> f64 {
        self.data
            .iter()
            .flat_map(|f| f.iter().copied())
            .fold(0.0, f64::max)
    }

    /// Smallest strictly positive value over all species and cells, if any.
    pub fn min_positive(&self) -> Option<f64> {
        let mut best = f64::INFINITY;
        for f in &self.data {
            for &v in f {
                if v > 0.0 && v < best {
                    best = v;
                }
            }
        }
        if best.is_finite() {
            Some(best)
        } else {
            None
        }
    }
}

/// Compensated (Neumaier) summation; keeps discrete conservation checks at
/// rounding level over long runs.
pub(crate) fn neumaier_sum(values: &[f64]) -> f64 {
    let mut sum = 0.0;
    let mut comp = 0.0;
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

/// Discrete average `integral of field over the unit-measure domain`,
/// equal to the arithmetic mean on these uniform grids.
pub fn average(grid: &Grid, field: &[f64]) -> f64 {
    debug_assert_eq!(field.len(), grid.cells());
    neumaier_sum(field) * grid.cell_volume()
}

/// `L^p` norm of a field, `p` in `[1, inf]` (`f64::INFINITY` for the max norm).
pub fn lp_norm(grid: &Grid, field: &[f64], p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!(
            "norm exponent must satisfy p >= 1, got {p}"
        )));
    }
    if p.is_infinite() {
        return Ok(field.iter().fold(0.0, |acc, v| acc.max(v.abs())));
    }
    let vol = grid.cell_volume();
    let total = if p == 1.0 {
        field.iter().map(|v| v.abs()).sum::<f64>()
    } else if p == 2.0 {
        field.iter().map(|v| v * v).sum::<f64>()
    } else {
        field.iter().map(|v| v.abs().powf(p)).sum::<f64>()
    };
    Ok((total * vol).powf(1.0 / p))
}

/// Applies `coeff * Laplacian(field^m)` with the 3-point (1D) / 5-point (2D)
/// stencil and reflecting ghost cells. The discrete integral of the output is
/// zero to rounding (discrete divergence theorem).
pub fn neumann_laplacian_of_power(
    grid: &Grid,
    field: &[f64],
    m: f64,
    coeff: f64,
) -> Result<Vec<f64>> {
    if field.len() != grid.cells() {
        return Err(Error::Domain(format!(
            "field has {} cells, grid has {}",
            field.len(),
            grid.cells()
        )));
    }
    if m < 1.0 {
        return Err(Error::Domain(format!(
            "porous-medium exponent must be >= 1, got {m}"
        )));
    }
    if coeff <= 0.0 {
        return Err(Error::Domain(format!(
            "diffusion coefficient must be > 0, got {coeff}"
        )));
    }
    if let Some(v) = field.iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::Domain(format!("field value {v} outside [0, inf)")));
    }
    let mut powered = vec![0.0; field.len()];
    let mut out = vec![0.0; field.len()];
    kernels::pow_field(field, m, &mut powered);
    kernels::neumann_laplacian(grid, &powered, coeff, &mut out);
    Ok(out)
}

/// Face-centered approximation of the Fisher-type integral
/// `integral |grad u|^2 u^(m-2)`.
///
/// Per interior face the contribution is
/// `(u_R - u_L)^2 / h^2 * ((u_L + u_R)/2)^(m-2) * cell_volume`, with weight 0
/// when both face values vanish.
pub fn gradient_quadratic_form(grid: &Grid, field: &[f64], m: f64) -> Result<f64> {
    if field.len() != grid.cells() {
        return Err(Error::Domain(format!(
            "field has {} cells, grid has {}",
            field.len(),
            grid.cells()
        )));
    }
    if let Some(v) = field.iter().find(|v| **v < 0.0 || !v.is_finite()) {
        return Err(Error::Domain(format!("field value {v} outside [0, inf)")));
    }
    let (nx, ny) = grid.shape();
    let (hx, hy) = grid.spacing();
    let vol = grid.cell_volume();
    let mut total = 0.0;
    let face = |left: f64, right: f64, h: f64| -> f64 {
        let diff = right - left;
        if diff == 0.0 {
            return 0.0;
        }
        let mean = 0.5 * (left + right);
        if mean == 0.0 {
            return 0.0;
        }
        let weight = if m == 2.0 { 1.0 } else { mean.powf(m - 2.0) };
        (diff / h) * (diff / h) * weight * vol
    };
    for j in 0..ny {
        for i in 0..nx - 1 {
            let idx = j * nx + i;
            total += face(field[idx], field[idx + 1], hx);
        }
    }
    if ny > 1 {
        for j in 0..ny - 1 {
            for i in 0..nx {
                let idx = j * nx + i;
                total += face(field[idx], field[idx + nx], hy);
            }
        }
    }
    Ok(total)
}
