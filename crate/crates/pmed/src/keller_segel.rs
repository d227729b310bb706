//! Repulsive chemotaxis coupling: rho_t - Lap(rho^m) = div(rho grad c),
//! c_t - Lap(c) = rho.
//!
//! The density advances by one splitting cycle per subinterval with the
//! drift frozen at V = -grad c; the chemical field advances by an implicit
//! heat step with source rho. The ledger tracks the free energy
//! (entropy plus half the squared gradient of c) and its dissipation
//! (4/m) |grad rho^(m/2)|^2 + |Lap c|^2, whose sum is conserved along
//! exact solutions; the cross terms cancel.

use crate::defaults;
use crate::error::{Error, Result};
use crate::functionals::entropy;
use crate::grid::{discrete_gradient, discrete_laplacian, laplacian_at, DensityField, ScalarField};
use crate::splitting::SplittingConfig;
use crate::vfield::VectorFieldSpec;

#[derive(Debug, Clone)]
pub struct KsState {
    pub rho: DensityField,
    pub c: ScalarField,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FreeEnergyRow {
    pub time: f64,
    /// Integral of rho log rho.
    pub entropy: f64,
    /// Half the integral of |grad c|^2.
    pub field_energy: f64,
    pub free_energy: f64,
    /// (4/m) int |grad rho^(m/2)|^2 + int |Lap c|^2.
    pub dissipation: f64,
    /// dF/dt + dissipation, finite-differenced across ledger rows; None on
    /// the last row.
    pub residual: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeatScheme {
    /// Backward Euler solved by conjugate gradients; unconditionally stable.
    Implicit,
    /// Forward Euler under the usual parabolic step bound.
    Explicit,
}

/// One heat step (I - dt Lap) c_new = c + dt rho for the implicit scheme,
/// or c + dt (Lap c + rho) explicitly. Zero-Dirichlet outside the box.
pub fn heat_step(
    c: &ScalarField,
    rho: &DensityField,
    dt: f64,
    scheme: HeatScheme,
) -> Result<ScalarField> {
    if c.grid != rho.grid {
        return Err(Error::invalid("heat_step fields live on different grids"));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("heat_step requires dt > 0"));
    }
    let grid = c.grid;
    match scheme {
        HeatScheme::Explicit => {
            let h = grid.min_spacing();
            let bound = h * h / (2.0 * grid.dim as f64);
            if dt > bound * (1.0 + 1e-12) {
                return Err(Error::Cfl {
                    dt,
                    admissible: defaults::CFL_SAFETY * bound,
                });
            }
            let mut out = vec![0.0; c.values.len()];
            for j in 0..grid.cells(1) {
                for i in 0..grid.cells(0) {
                    let k = grid.idx(i, j);
                    out[k] =
                        c.values[k] + dt * (laplacian_at(&grid, &c.values, i, j) + rho.values[k]);
                }
            }
            ScalarField::new(grid, out, c.time + dt)
        }
        HeatScheme::Implicit => {
            // Conjugate gradients on A x = b, A = I - dt Lap (SPD).
            let n = c.values.len();
            let b: Vec<f64> = (0..n).map(|k| c.values[k] + dt * rho.values[k]).collect();
            let apply = |x: &[f64], out: &mut [f64]| {
                for j in 0..grid.cells(1) {
                    for i in 0..grid.cells(0) {
                        let k = grid.idx(i, j);
                        out[k] = x[k] - dt * laplacian_at(&grid, x, i, j);
                    }
                }
            };
            let mut x = c.values.clone();
            let mut ax = vec![0.0; n];
            apply(&x, &mut ax);
            let mut r: Vec<f64> = (0..n).map(|k| b[k] - ax[k]).collect();
            let mut p = r.clone();
            let mut rs: f64 = r.iter().map(|v| v * v).sum();
            let bnorm: f64 = b.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
            let tol = defaults::HEAT_CG_TOL * bnorm;
            let cap = 10 * n + 100;
            let mut ap = vec![0.0; n];
            for _ in 0..cap {
                if rs.sqrt() <= tol {
                    return ScalarField::new(grid, x, c.time + dt);
                }
                apply(&p, &mut ap);
                let pap: f64 = p.iter().zip(&ap).map(|(a, b)| a * b).sum();
                if pap <= 0.0 {
                    break;
                }
                let alpha = rs / pap;
                for k in 0..n {
                    x[k] += alpha * p[k];
                    r[k] -= alpha * ap[k];
                }
                let rs_new: f64 = r.iter().map(|v| v * v).sum();
                let beta = rs_new / rs;
                rs = rs_new;
                for k in 0..n {
                    p[k] = r[k] + beta * p[k];
                }
            }
            if rs.sqrt() <= tol {
                ScalarField::new(grid, x, c.time + dt)
            } else {
                Err(Error::NonConvergence(format!(
                    "heat solve stalled at residual {:.3e} (target {:.3e})",
                    rs.sqrt(),
                    tol
                )))
            }
        }
    }
}

/// Free-energy row of one state; the residual column is filled in when a
/// whole ledger is assembled.
pub fn free_energy(state: &KsState, m: f64) -> Result<FreeEnergyRow> {
    let (ent, _) = entropy(&state.rho);
    let grads = discrete_gradient(&state.c);
    let vol = state.c.grid.cell_volume();
    let mut ge = 0.0;
    for k in 0..state.c.values.len() {
        let mut g2 = 0.0;
        for comp in &grads {
            g2 += comp.values[k] * comp.values[k];
        }
        ge += g2;
    }
    let field_energy = 0.5 * ge * vol;
    let lap = discrete_laplacian(&state.c);
    let lap2 = lap.values.iter().map(|v| v * v).sum::<f64>() * vol;
    let rho_diss = crate::functionals::dissipation(&state.rho, m, 1.0)?;
    Ok(FreeEnergyRow {
        time: state.time,
        entropy: ent,
        field_energy,
        free_energy: ent + field_energy,
        dissipation: (4.0 / m) * rho_diss + lap2,
        residual: None,
    })
}

fn fill_residuals(rows: &mut [FreeEnergyRow]) {
    for k in 0..rows.len() {
        if k + 1 < rows.len() {
            let dt = rows[k + 1].time - rows[k].time;
            let dfdt = (rows[k + 1].free_energy - rows[k].free_energy) / dt;
            let diss = 0.5 * (rows[k].dissipation + rows[k + 1].dissipation);
            rows[k].residual = Some(dfdt + diss);
        } else {
            rows[k].residual = None;
        }
    }
}

#[derive(Debug, Clone)]
pub struct KsRun {
    pub states: Vec<KsState>,
    pub ledger: Vec<FreeEnergyRow>,
    /// (time, max |c| on the boundary ring): the chemical field uses a
    /// zero-Dirichlet box, and this trace tracks how much that truncation
    /// is felt.
    pub c_boundary_trace: Vec<(f64, f64)>,
}

fn boundary_trace(c: &ScalarField) -> f64 {
    let g = c.grid;
    let mut m = 0.0f64;
    for j in 0..g.cells(1) {
        for i in 0..g.cells(0) {
            let edge =
                i == 0 || i == g.cells(0) - 1 || (g.dim == 2 && (j == 0 || j == g.cells(1) - 1));
            if edge {
                m = m.max(c.values[g.idx(i, j)].abs());
            }
        }
    }
    m
}

/// Advance the coupled system to `t_end` in n subintervals: implicit heat
/// update of c, then one splitting cycle of the density along V = -grad c
/// frozen over the subinterval.
pub fn ks_solve(
    rho0: &DensityField,
    c0: &ScalarField,
    m: f64,
    t_end: f64,
    n: usize,
    base: &SplittingConfig,
) -> Result<KsRun> {
    if rho0.grid != c0.grid {
        return Err(Error::invalid("density and chemical grids differ"));
    }
    if n < 1 {
        return Err(Error::invalid("ks_solve needs at least one subinterval"));
    }
    let t0 = rho0.time;
    if !(t_end > t0) {
        return Err(Error::invalid("t_end must exceed the initial time"));
    }
    let dt_sub = (t_end - t0) / n as f64;
    let mut state = KsState {
        rho: rho0.clone(),
        c: c0.clone(),
        time: t0,
    };
    let mut states = vec![state.clone()];
    let mut ledger = vec![free_energy(&state, m)?];
    let mut c_boundary_trace = vec![(t0, boundary_trace(&state.c))];
    let rho_is_zero = rho0.max_value() == 0.0;

    for k in 0..n {
        let a = t0 + k as f64 * dt_sub;
        let b = if k == n - 1 { t_end } else { a + dt_sub };
        let c_new = heat_step(&state.c, &state.rho, b - a, HeatScheme::Implicit)?;
        let rho_new = if rho_is_zero {
            let mut r = state.rho.clone();
            r.time = b;
            r
        } else {
            // One splitting cycle on the raw density. The nonlinear
            // diffusion must see the literal equation, so no mass
            // normalization happens here.
            let drift = VectorFieldSpec::gradient_of_solution(&c_new, -1.0)?;
            let opts = crate::pme::PmeOptions {
                cfl_safety: base.cfl_safety,
                tracked_qs: base.tracked_qs.clone(),
                p: base.p,
                output_times: Vec::new(),
                min_support_margin: 2,
                samples: 8,
            };
            let run = crate::pme::pme_solve(&state.rho, m, b, &opts)?;
            let flow_cfg = crate::flow::FlowConfig {
                substeps: base.flow.substeps,
                clamp: Some(crate::flow::BoxBounds::of_grid(
                    &state.rho.grid,
                    state.rho.grid.box_diameter(),
                )),
            };
            let (moved, rep) =
                crate::flow::push_forward(&run.final_state, &drift, a, b, &flow_cfg, &[])?;
            if rep.support_exit {
                return Err(Error::SupportOverflow { time: b });
            }
            let mut out = moved;
            out.time = b;
            out
        };
        state = KsState {
            rho: rho_new,
            c: ScalarField {
                grid: c_new.grid,
                values: c_new.values,
                time: b,
            },
            time: b,
        };
        states.push(state.clone());
        ledger.push(free_energy(&state, m)?);
        c_boundary_trace.push((b, boundary_trace(&state.c)));
    }
    fill_residuals(&mut ledger);
    Ok(KsRun {
        states,
        ledger,
        c_boundary_trace,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapReport {
    /// Strictly increasing integrability exponents, ending at the first
    /// index where the stopping rule fires.
    pub exponents: Vec<f64>,
    /// Largest admissible moment exponent (m d - d + 2)/(d - 1).
    pub moment_cap: f64,
}

/// Integrability-exponent recursion for the coupled system:
/// q(1) = d(m-1)/(d-2m), q(k+1) = d(m-1) q(k) / (d - 2m + 2 - 2 q(k)),
/// stopping once d - 3m + 3 - q(k) <= 0. Each hypothesis is named on
/// rejection.
pub fn bootstrap_exponents(m: f64, d: usize) -> Result<BootstrapReport> {
    if d <= 2 {
        return Err(Error::invalid(format!("requires d > 2, got {d}")));
    }
    let df = d as f64;
    let lo1 = (2.0 * df - 3.0) / df;
    if !(m > lo1) {
        return Err(Error::invalid(format!(
            "requires m > (2d-3)/d = {lo1:.6}, got {m}"
        )));
    }
    let lo2 = 2.0 * df / (df + 2.0);
    if !(m > lo2) {
        return Err(Error::invalid(format!(
            "requires m > 2d/(d+2) = {lo2:.6}, got {m}"
        )));
    }
    if df - 2.0 * m == 0.0 {
        return Err(Error::invalid("requires d - 2m != 0"));
    }
    if df - 2.0 * m < 0.0 {
        return Err(Error::invalid(format!(
            "requires d - 2m > 0 for the first exponent, got {}",
            df - 2.0 * m
        )));
    }
    let mut q = df * (m - 1.0) / (df - 2.0 * m);
    let mut exponents = vec![q];
    let cap = 10_000;
    for _ in 0..cap {
        if df - 3.0 * m + 3.0 - q <= 0.0 {
            let moment_cap = (m * df - df + 2.0) / (df - 1.0);
            return Ok(BootstrapReport {
                exponents,
                moment_cap,
            });
        }
        let denom = df - 2.0 * m + 2.0 - 2.0 * q;
        if denom <= 0.0 {
            // The next exponent is unbounded; integrability is already
            // beyond every finite requirement, so the recursion ends here.
            let moment_cap = (m * df - df + 2.0) / (df - 1.0);
            return Ok(BootstrapReport {
                exponents,
                moment_cap,
            });
        }
        let next = df * (m - 1.0) * q / denom;
        if !(next > q) {
            return Err(Error::NonConvergence(format!(
                "exponent recursion stalled at q = {q}"
            )));
        }
        q = next;
        exponents.push(q);
    }
    Err(Error::NonConvergence(
        "exponent recursion exceeded the iteration cap".into(),
    ))
}
