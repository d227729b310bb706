//! Uniform Cartesian grids and cell-centered fields.
//!
//! Grids live in 1 or 2 space dimensions. A 1-d grid is stored as a 2-d
//! grid with a single row along the second axis and unit spacing there, so
//! cell volume and flat indexing are uniform across the crate. The box is
//! a truncation of the whole space with a vacuum (zero extension) policy:
//! everything outside holds the value 0, and solvers must keep the support
//! strictly interior.

use crate::error::{Error, Result};

/// Uniform cell-centered Cartesian mesh.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    pub dim: usize,
    cells: [usize; 2],
    origin: [f64; 2],
    spacing: [f64; 2],
}

/// Validated constructor. Counts below 4, nonpositive spacing and
/// dimensions outside {1, 2} are rejected.
pub fn make_grid(dim: usize, cells: &[usize], origin: &[f64], spacing: &[f64]) -> Result<Grid> {
    if !(dim == 1 || dim == 2) {
        return Err(Error::invalid(format!(
            "grid dim must be 1 or 2, got {dim}"
        )));
    }
    if cells.len() != dim || origin.len() != dim || spacing.len() != dim {
        return Err(Error::invalid(format!(
            "grid descriptors must have length dim = {dim}"
        )));
    }
    let mut c = [1usize; 2];
    let mut o = [0.0f64; 2];
    let mut s = [1.0f64; 2];
    for a in 0..dim {
        if cells[a] < 4 {
            return Err(Error::invalid(format!(
                "axis {a}: at least 4 cells required, got {}",
                cells[a]
            )));
        }
        if !(spacing[a] > 0.0) || !spacing[a].is_finite() {
            return Err(Error::invalid(format!(
                "axis {a}: spacing must be positive and finite, got {}",
                spacing[a]
            )));
        }
        c[a] = cells[a];
        o[a] = origin[a];
        s[a] = spacing[a];
    }
    Ok(Grid {
        dim,
        cells: c,
        origin: o,
        spacing: s,
    })
}

impl Grid {
    /// Convenience: a symmetric box [-extent, extent]^dim with n cells per axis.
    pub fn centered(dim: usize, n: usize, extent: f64) -> Result<Grid> {
        let cells = vec![n; dim];
        let origin = vec![-extent; dim];
        let spacing = vec![2.0 * extent / n as f64; dim];
        make_grid(dim, &cells, &origin, &spacing)
    }

    pub fn cells(&self, axis: usize) -> usize {
        self.cells[axis]
    }

    pub fn origin(&self, axis: usize) -> f64 {
        self.origin[axis]
    }

    pub fn spacing(&self, axis: usize) -> f64 {
        self.spacing[axis]
    }

    pub fn total_cells(&self) -> usize {
        self.cells[0] * self.cells[1]
    }

    /// Volume (1-d: length) of one cell.
    pub fn cell_volume(&self) -> f64 {
        self.spacing[0] * self.spacing[1]
    }

    pub fn min_spacing(&self) -> f64 {
        if self.dim == 1 {
            self.spacing[0]
        } else {
            self.spacing[0].min(self.spacing[1])
        }
    }

    /// Diagonal of one cell.
    pub fn cell_diagonal(&self) -> f64 {
        if self.dim == 1 {
            self.spacing[0]
        } else {
            self.spacing[0].hypot(self.spacing[1])
        }
    }

    /// Diameter of the whole box.
    pub fn box_diameter(&self) -> f64 {
        let lx = self.spacing[0] * self.cells[0] as f64;
        if self.dim == 1 {
            lx
        } else {
            lx.hypot(self.spacing[1] * self.cells[1] as f64)
        }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize) -> usize {
        debug_assert!(i < self.cells[0] && j < self.cells[1]);
        j * self.cells[0] + i
    }

    /// Center of cell (i, j); the second coordinate is 0 for 1-d grids.
    #[inline]
    pub fn center(&self, i: usize, j: usize) -> [f64; 2] {
        let x = self.origin[0] + (i as f64 + 0.5) * self.spacing[0];
        let y = if self.dim == 2 {
            self.origin[1] + (j as f64 + 0.5) * self.spacing[1]
        } else {
            0.0
        };
        [x, y]
    }

    pub fn lower(&self, axis: usize) -> f64 {
        self.origin[axis]
    }

    pub fn upper(&self, axis: usize) -> f64 {
        self.origin[axis] + self.spacing[axis] * self.cells[axis] as f64
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        for (a, v) in p.iter().enumerate().take(self.dim) {
            if *v < self.lower(a) || *v > self.upper(a) {
                return false;
            }
        }
        true
    }
}

/// Nonnegative cell-centered density samples at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl DensityField {
    pub fn new(grid: Grid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.total_cells() {
            return Err(Error::invalid(format!(
                "value count {} does not match grid cell count {}",
                values.len(),
                grid.total_cells()
            )));
        }
        for (k, &v) in values.iter().enumerate() {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!(
                    "density value at flat index {k} is {v}; must be finite and >= 0"
                )));
            }
        }
        Ok(DensityField { grid, values, time })
    }

    pub fn zero(grid: Grid, time: f64) -> Self {
        DensityField {
            grid,
            values: vec![0.0; grid.total_cells()],
            time,
        }
    }

    pub fn from_fn(grid: Grid, time: f64, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let mut values = vec![0.0; grid.total_cells()];
        for j in 0..grid.cells(1) {
            for i in 0..grid.cells(0) {
                values[grid.idx(i, j)] = f(grid.center(i, j));
            }
        }
        DensityField::new(grid, values, time)
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn as_scalar(&self) -> ScalarField {
        ScalarField {
            grid: self.grid,
            values: self.values.clone(),
            time: self.time,
        }
    }
}

/// Cell-centered real samples (no sign constraint).
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub time: f64,
}

impl ScalarField {
    pub fn new(grid: Grid, values: Vec<f64>, time: f64) -> Result<Self> {
        if values.len() != grid.total_cells() {
            return Err(Error::invalid("value count does not match grid"));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("scalar field holds a non-finite value"));
        }
        Ok(ScalarField { grid, values, time })
    }

    pub fn from_fn(grid: Grid, time: f64, f: impl Fn([f64; 2]) -> f64) -> Result<Self> {
        let mut values = vec![0.0; grid.total_cells()];
        for j in 0..grid.cells(1) {
            for i in 0..grid.cells(0) {
                values[grid.idx(i, j)] = f(grid.center(i, j));
            }
        }
        ScalarField::new(grid, values, time)
    }

    pub fn zero(grid: Grid, time: f64) -> Self {
        ScalarField {
            grid,
            values: vec![0.0; grid.total_cells()],
            time,
        }
    }
}

/// Midpoint quadrature: sum of cell values times cell volume.
pub fn integrate_values(grid: &Grid, values: &[f64]) -> f64 {
    let vol = grid.cell_volume();
    values.iter().sum::<f64>() * vol
}

pub fn integrate(field: &DensityField) -> f64 {
    integrate_values(&field.grid, &field.values)
}

pub fn integrate_scalar(field: &ScalarField) -> f64 {
    integrate_values(&field.grid, &field.values)
}

/// Multilinear interpolation of cell-centered values; points outside the
/// box read 0 (vacuum policy). Exact on per-axis affine data between the
/// first and last cell centers.
pub fn sample_values(grid: &Grid, values: &[f64], p: [f64; 2]) -> f64 {
    // (index, weight of the left neighbor) per axis
    let mut i0 = [0isize; 2];
    let mut w0 = [1.0f64; 2];
    for a in 0..2 {
        if a >= grid.dim {
            i0[a] = 0;
            w0[a] = 1.0;
            continue;
        }
        let u = (p[a] - grid.origin(a)) / grid.spacing(a) - 0.5;
        let f = u.floor();
        i0[a] = f as isize;
        w0[a] = 1.0 - (u - f);
    }
    let pick = |i: isize, j: isize| -> f64 {
        if i < 0 || j < 0 || i >= grid.cells(0) as isize || j >= grid.cells(1) as isize {
            0.0
        } else {
            values[grid.idx(i as usize, j as usize)]
        }
    };
    let (i, j) = (i0[0], i0[1]);
    let (wx, wy) = (w0[0], w0[1]);
    wx * wy * pick(i, j)
        + (1.0 - wx) * wy * pick(i + 1, j)
        + wx * (1.0 - wy) * pick(i, j + 1)
        + (1.0 - wx) * (1.0 - wy) * pick(i + 1, j + 1)
}

pub fn sample(field: &DensityField, p: [f64; 2]) -> f64 {
    sample_values(&field.grid, &field.values, p)
}

pub fn sample_scalar(field: &ScalarField, p: [f64; 2]) -> f64 {
    sample_values(&field.grid, &field.values, p)
}

#[inline]
fn axis_derivative(grid: &Grid, values: &[f64], i: usize, j: usize, axis: usize) -> f64 {
    let n = grid.cells(axis);
    let h = grid.spacing(axis);
    let k = if axis == 0 { i } else { j };
    let at = |k2: usize| -> f64 {
        if axis == 0 {
            values[grid.idx(k2, j)]
        } else {
            values[grid.idx(i, k2)]
        }
    };
    if k == 0 {
        (at(1) - at(0)) / h
    } else if k == n - 1 {
        (at(n - 1) - at(n - 2)) / h
    } else {
        (at(k + 1) - at(k - 1)) / (2.0 * h)
    }
}

/// Centered differences in the interior, one-sided first order at the
/// boundary. One scalar field per axis.
pub fn discrete_gradient_values(grid: &Grid, values: &[f64], time: f64) -> Vec<ScalarField> {
    let mut out = Vec::with_capacity(grid.dim);
    for axis in 0..grid.dim {
        let mut g = vec![0.0; grid.total_cells()];
        for j in 0..grid.cells(1) {
            for i in 0..grid.cells(0) {
                g[grid.idx(i, j)] = axis_derivative(grid, values, i, j, axis);
            }
        }
        out.push(ScalarField {
            grid: *grid,
            values: g,
            time,
        });
    }
    out
}

pub fn discrete_gradient(field: &ScalarField) -> Vec<ScalarField> {
    discrete_gradient_values(&field.grid, &field.values, field.time)
}

/// Divergence of per-axis component samples: sum of the axis derivatives.
pub fn discrete_divergence(components: &[ScalarField]) -> Result<ScalarField> {
    if components.is_empty() {
        return Err(Error::invalid("divergence of an empty component list"));
    }
    let grid = components[0].grid;
    if components.len() != grid.dim {
        return Err(Error::invalid(format!(
            "expected {} components, got {}",
            grid.dim,
            components.len()
        )));
    }
    let mut out = vec![0.0; grid.total_cells()];
    for (axis, comp) in components.iter().enumerate() {
        if comp.grid != grid {
            return Err(Error::invalid("components live on different grids"));
        }
        for j in 0..grid.cells(1) {
            for i in 0..grid.cells(0) {
                out[grid.idx(i, j)] += axis_derivative(&grid, &comp.values, i, j, axis);
            }
        }
    }
    ScalarField::new(grid, out, components[0].time)
}

/// Per-cell (2d+1)-point Laplacian with vacuum outside the box.
#[inline]
pub fn laplacian_at(grid: &Grid, values: &[f64], i: usize, j: usize) -> f64 {
    let nx = grid.cells(0);
    let hx2 = grid.spacing(0) * grid.spacing(0);
    let c = values[grid.idx(i, j)];
    let left = if i > 0 {
        values[grid.idx(i - 1, j)]
    } else {
        0.0
    };
    let right = if i + 1 < nx {
        values[grid.idx(i + 1, j)]
    } else {
        0.0
    };
    let mut lap = (left - 2.0 * c + right) / hx2;
    if grid.dim == 2 {
        let ny = grid.cells(1);
        let hy2 = grid.spacing(1) * grid.spacing(1);
        let down = if j > 0 {
            values[grid.idx(i, j - 1)]
        } else {
            0.0
        };
        let up = if j + 1 < ny {
            values[grid.idx(i, j + 1)]
        } else {
            0.0
        };
        lap += (down - 2.0 * c + up) / hy2;
    }
    lap
}

/// Standard (2d+1)-point stencil; conservative, values outside the box are 0.
pub fn discrete_laplacian(field: &ScalarField) -> ScalarField {
    let grid = field.grid;
    let mut out = vec![0.0; grid.total_cells()];
    for j in 0..grid.cells(1) {
        for i in 0..grid.cells(0) {
            out[grid.idx(i, j)] = laplacian_at(&grid, &field.values, i, j);
        }
    }
    ScalarField {
        grid,
        values: out,
        time: field.time,
    }
}

/// Largest distance from `center` to a cell holding at least
/// `threshold_fraction * max` of the field, plus one cell diagonal.
/// Zero fields return 0.
pub fn support_radius_about(
    field: &DensityField,
    center: [f64; 2],
    threshold_fraction: f64,
) -> f64 {
    let maxv = field.max_value();
    if maxv == 0.0 {
        return 0.0;
    }
    let thr = threshold_fraction * maxv;
    let grid = &field.grid;
    let mut r = -1.0f64;
    for j in 0..grid.cells(1) {
        for i in 0..grid.cells(0) {
            if field.values[grid.idx(i, j)] >= thr {
                let c = grid.center(i, j);
                let dx = c[0] - center[0];
                let dy = if grid.dim == 2 { c[1] - center[1] } else { 0.0 };
                r = r.max(dx.hypot(dy));
            }
        }
    }
    if r < 0.0 {
        0.0
    } else {
        r + grid.cell_diagonal()
    }
}

/// Center of mass; the origin for the zero field.
pub fn center_of_mass(field: &DensityField) -> [f64; 2] {
    let grid = &field.grid;
    let mut m = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for j in 0..grid.cells(1) {
        for i in 0..grid.cells(0) {
            let v = field.values[grid.idx(i, j)];
            let c = grid.center(i, j);
            m += v;
            cx += v * c[0];
            cy += v * c[1];
        }
    }
    if m == 0.0 {
        [0.0, 0.0]
    } else {
        [cx / m, cy / m]
    }
}

/// Number of cells between the support and the box boundary, minimized
/// over axes; `None` for the zero field. Cells below 1e-9 of the max are
/// treated as vacuum for this guard: the degenerate stencil and the
/// transport interpolation both seed steeply decaying fringes that carry
/// no mass at the conservation budget.
pub fn support_margin_cells(field: &DensityField) -> Option<usize> {
    let grid = &field.grid;
    let floor = 1e-9 * field.max_value();
    let mut margin = usize::MAX;
    let mut any = false;
    for j in 0..grid.cells(1) {
        for i in 0..grid.cells(0) {
            if field.values[grid.idx(i, j)] > floor {
                any = true;
                let mut m = i.min(grid.cells(0) - 1 - i);
                if grid.dim == 2 {
                    m = m.min(j.min(grid.cells(1) - 1 - j));
                }
                margin = margin.min(m);
            }
        }
    }
    if any {
        Some(margin)
    } else {
        None
    }
}
