//! Functionals tracked along solver trajectories, the mixed-norm scaling
//! classifier, rescaling transforms, and the oscillation-decay fit.

use crate::defaults;
use crate::error::{Error, Result};
use crate::grid::{discrete_gradient, integrate, DensityField, Grid, ScalarField};
use crate::vfield::VectorFieldSpec;

/// Total mass.
pub fn mass(rho: &DensityField) -> f64 {
    integrate(rho)
}

/// (integral of rho^q)^(1/q); q = infinity returns the max cell value.
pub fn lq_norm(rho: &DensityField, q: f64) -> Result<f64> {
    if q.is_infinite() {
        return Ok(rho.max_value());
    }
    if !(q >= 1.0) {
        return Err(Error::invalid(format!("lq_norm requires q >= 1, got {q}")));
    }
    let vol = rho.grid.cell_volume();
    let s: f64 = rho.values.iter().map(|v| v.powf(q)).sum();
    Ok((s * vol).powf(1.0 / q))
}

/// (signed, absolute) entropy: integrals of rho log rho and rho |log rho|,
/// with 0 log 0 = 0.
pub fn entropy(rho: &DensityField) -> (f64, f64) {
    let vol = rho.grid.cell_volume();
    let mut signed = 0.0;
    let mut absolute = 0.0;
    for &v in &rho.values {
        if v > 0.0 {
            let l = v * v.ln();
            signed += l;
            absolute += l.abs();
        }
    }
    (signed * vol, absolute * vol)
}

/// Weight <x>^p = (1 + |x|^2)^(p/2).
#[inline]
pub fn bracket_weight(x: [f64; 2], dim: usize, p: f64) -> f64 {
    let r2 = if dim == 2 {
        x[0] * x[0] + x[1] * x[1]
    } else {
        x[0] * x[0]
    };
    (1.0 + r2).powf(p / 2.0)
}

/// Integral of rho <x>^p.
pub fn p_moment(rho: &DensityField, p: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid(format!("p_moment requires p >= 1, got {p}")));
    }
    let g = &rho.grid;
    let vol = g.cell_volume();
    let mut s = 0.0;
    for j in 0..g.cells(1) {
        for i in 0..g.cells(0) {
            s += rho.values[g.idx(i, j)] * bracket_weight(g.center(i, j), g.dim, p);
        }
    }
    Ok(s * vol)
}

/// The moment weight <x>^p, its gradient p x (1+|x|^2)^((p-2)/2), and the
/// profile p (1+(p-1)|x|^2) (1+|x|^2)^((p-4)/2) whose bound by p drives
/// the moment estimate. Requires 1 < p <= 2.
pub fn moment_weights(grid: &Grid, p: f64) -> Result<(ScalarField, Vec<ScalarField>, ScalarField)> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::invalid(format!(
            "moment_weights requires p in (1, 2], got {p}"
        )));
    }
    let weight = ScalarField::from_fn(*grid, 0.0, |x| bracket_weight(x, grid.dim, p))?;
    let mut comps = Vec::with_capacity(grid.dim);
    for axis in 0..grid.dim {
        comps.push(ScalarField::from_fn(*grid, 0.0, |x| {
            let r2 = if grid.dim == 2 {
                x[0] * x[0] + x[1] * x[1]
            } else {
                x[0] * x[0]
            };
            p * x[axis] * (1.0 + r2).powf((p - 2.0) / 2.0)
        })?);
    }
    let lap = ScalarField::from_fn(*grid, 0.0, |x| {
        let r2 = if grid.dim == 2 {
            x[0] * x[0] + x[1] * x[1]
        } else {
            x[0] * x[0]
        };
        p * (1.0 + (p - 1.0) * r2) * (1.0 + r2).powf((p - 4.0) / 2.0)
    })?;
    Ok((weight, comps, lap))
}

/// Integral of |grad(rho^((q+m-1)/2))|^2.
pub fn dissipation(rho: &DensityField, m: f64, q: f64) -> Result<f64> {
    if !(m >= 1.0) || !(q >= 1.0) {
        return Err(Error::invalid("dissipation requires m >= 1 and q >= 1"));
    }
    let a = (q + m - 1.0) / 2.0;
    let powed = ScalarField {
        grid: rho.grid,
        values: rho.values.iter().map(|v| v.powf(a)).collect(),
        time: rho.time,
    };
    let grads = discrete_gradient(&powed);
    let vol = rho.grid.cell_volume();
    let mut s = 0.0;
    for k in 0..rho.values.len() {
        let mut g2 = 0.0;
        for comp in &grads {
            g2 += comp.values[k] * comp.values[k];
        }
        s += g2;
    }
    Ok(s * vol)
}

/// Integral of |grad(rho^m)/rho|^p rho, evaluated as |grad rho^m|^p rho^(1-p)
/// on cells above the vacuum threshold; vacuum cells contribute 0.
pub fn speed_energy(rho: &DensityField, m: f64, p: f64) -> Result<f64> {
    if !(p > 1.0 && p <= 2.0) {
        return Err(Error::invalid(format!(
            "speed_energy requires p in (1, 2], got {p}"
        )));
    }
    let thr = defaults::VACUUM_THRESHOLD * rho.max_value();
    let powed = ScalarField {
        grid: rho.grid,
        values: rho.values.iter().map(|v| v.powf(m)).collect(),
        time: rho.time,
    };
    let grads = discrete_gradient(&powed);
    let vol = rho.grid.cell_volume();
    let mut s = 0.0;
    for k in 0..rho.values.len() {
        let v = rho.values[k];
        if v > thr {
            let mut g2 = 0.0;
            for comp in &grads {
                g2 += comp.values[k] * comp.values[k];
            }
            s += g2.sqrt().powf(p) * v.powf(1.0 - p);
        }
    }
    Ok(s * vol)
}

/// Integral of |V(x, t)|^p rho.
pub fn drift_energy(rho: &DensityField, v: &VectorFieldSpec, p: f64, t: f64) -> Result<f64> {
    if !(p >= 1.0) {
        return Err(Error::invalid("drift_energy requires p >= 1"));
    }
    let g = &rho.grid;
    let vol = g.cell_volume();
    let mut s = 0.0;
    for j in 0..g.cells(1) {
        for i in 0..g.cells(0) {
            let val = rho.values[g.idx(i, j)];
            if val > 0.0 {
                let w = v.eval(g.center(i, j), t);
                s += w[0].hypot(w[1]).powf(p) * val;
            }
        }
    }
    Ok(s * vol)
}

/// Space-time mixed norm of a drift field: inner spatial L^q1 over the
/// grid, outer temporal L^q2 by trapezoid over `times`. Infinite exponents
/// are handled as maxima.
pub fn mixed_norm(
    v: &VectorFieldSpec,
    grid: &Grid,
    times: &[f64],
    q1: f64,
    q2: f64,
) -> Result<f64> {
    if times.len() < 2 {
        return Err(Error::invalid("mixed_norm needs at least two time nodes"));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("mixed_norm times must increase"));
    }
    if !(q1 >= 1.0) || !(q2 >= 1.0) {
        return Err(Error::invalid("mixed_norm requires q1, q2 >= 1"));
    }
    let vol = grid.cell_volume();
    let inner = |t: f64| -> f64 {
        if q1.is_infinite() {
            let mut m = 0.0f64;
            for j in 0..grid.cells(1) {
                for i in 0..grid.cells(0) {
                    let w = v.eval(grid.center(i, j), t);
                    m = m.max(w[0].hypot(w[1]));
                }
            }
            m
        } else {
            let mut s = 0.0;
            for j in 0..grid.cells(1) {
                for i in 0..grid.cells(0) {
                    let w = v.eval(grid.center(i, j), t);
                    s += w[0].hypot(w[1]).powf(q1);
                }
            }
            (s * vol).powf(1.0 / q1)
        }
    };
    let vals: Vec<f64> = times.iter().map(|&t| inner(t)).collect();
    if q2.is_infinite() {
        return Ok(vals.iter().cloned().fold(0.0, f64::max));
    }
    let mut acc = 0.0;
    for k in 0..times.len() - 1 {
        let dt = times[k + 1] - times[k];
        acc += 0.5 * dt * (vals[k].powf(q2) + vals[k + 1].powf(q2));
    }
    Ok(acc.powf(1.0 / q2))
}

/// Which field the mixed-norm condition constrains.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingTarget {
    Drift,
    DriftGradient,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingQuery {
    pub m: f64,
    pub q: f64,
    pub d: usize,
    pub q1: f64,
    pub q2: f64,
    pub target: ScalingTarget,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScalingVerdict {
    ScalingInvariant,
    SubScaling,
    SuperScaling,
}

impl std::fmt::Display for ScalingVerdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScalingVerdict::ScalingInvariant => write!(f, "scaling_invariant"),
            ScalingVerdict::SubScaling => write!(f, "sub_scaling"),
            ScalingVerdict::SuperScaling => write!(f, "super_scaling"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub q_md: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub verdict: ScalingVerdict,
    pub lambda_q: f64,
}

/// min{2, 1 + (d(q-1)+q) / (d(m-1)+q)}.
pub fn lambda_q(m: f64, q: f64, d: usize) -> f64 {
    let d = d as f64;
    let v = 1.0 + (d * (q - 1.0) + q) / (d * (m - 1.0) + q);
    v.min(2.0)
}

/// Places (q1, q2) relative to the dimensional-balance line
/// d/q1 + (2 + q_md)/q2 = rhs, with rhs = 1 + q_md for the drift and
/// 2 + q_md for its gradient, q_md = d(m-1)/q.
pub fn classify_scaling(query: &ScalingQuery) -> Result<ScalingReport> {
    if !(query.m > 1.0) {
        return Err(Error::invalid(format!(
            "classifier requires m > 1, got {}",
            query.m
        )));
    }
    if !(query.q >= 1.0) {
        return Err(Error::invalid(format!(
            "classifier requires q >= 1, got {}",
            query.q
        )));
    }
    if query.d < 2 {
        return Err(Error::invalid(format!(
            "classifier requires d >= 2, got {}",
            query.d
        )));
    }
    if !(query.q1 >= 1.0) || !(query.q2 >= 1.0) {
        return Err(Error::invalid("classifier requires q1, q2 in [1, inf]"));
    }
    let d = query.d as f64;
    let q_md = d * (query.m - 1.0) / query.q;
    let inv = |x: f64| if x.is_infinite() { 0.0 } else { 1.0 / x };
    let lhs = d * inv(query.q1) + (2.0 + q_md) * inv(query.q2);
    let rhs = match query.target {
        ScalingTarget::Drift => 1.0 + q_md,
        ScalingTarget::DriftGradient => 2.0 + q_md,
    };
    let tol = defaults::CLASSIFIER_TOL;
    let verdict = if (lhs - rhs).abs() <= tol {
        ScalingVerdict::ScalingInvariant
    } else if lhs < rhs - tol {
        ScalingVerdict::SubScaling
    } else {
        ScalingVerdict::SuperScaling
    };
    Ok(ScalingReport {
        q_md,
        lhs,
        rhs,
        verdict,
        lambda_q: lambda_q(query.m, query.q, query.d),
    })
}

/// rho_kappa(x, t) = kappa^(d/q) rho(kappa x, kappa^beta t) on the grid
/// scaled by 1/kappa; returns the field together with (alpha, beta).
pub fn rescale_density(
    rho: &DensityField,
    kappa: f64,
    m: f64,
    q: f64,
) -> Result<(DensityField, f64, f64)> {
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa must be positive"));
    }
    let g = rho.grid;
    let d = g.dim;
    let q_md = d as f64 * (m - 1.0) / q;
    let alpha = q_md + 1.0;
    let beta = q_md + 2.0;
    let cells: Vec<usize> = (0..d).map(|a| g.cells(a)).collect();
    let origin: Vec<f64> = (0..d).map(|a| g.origin(a) / kappa).collect();
    let spacing: Vec<f64> = (0..d).map(|a| g.spacing(a) / kappa).collect();
    let scaled_grid = crate::grid::make_grid(d, &cells, &origin, &spacing)?;
    let amp = kappa.powf(d as f64 / q);
    let values: Vec<f64> = rho.values.iter().map(|v| amp * v).collect();
    let field = DensityField::new(scaled_grid, values, rho.time / kappa.powf(beta))?;
    Ok((field, alpha, beta))
}

/// Fit of essential oscillation over nested space-time cylinders
/// K_r(center) x [0, r^2] to C r^alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct OscillationFit {
    /// None when the data are (nearly) constant.
    pub alpha: Option<f64>,
    pub constant: f64,
    pub residual: f64,
    pub oscillations: Vec<(f64, f64)>,
}

/// Oscillation decay exponent of a space-time trajectory around `center`.
/// Slice times are measured from the first slice; a slice enters the
/// cylinder of radius r when its offset is at most r^2.
pub fn oscillation_decay(
    slices: &[ScalarField],
    center: [f64; 2],
    radii: &[f64],
) -> Result<OscillationFit> {
    if radii.len() < 4 {
        return Err(Error::invalid("oscillation_decay needs at least 4 radii"));
    }
    if slices.is_empty() {
        return Err(Error::invalid("oscillation_decay needs at least one slice"));
    }
    let mut rs: Vec<f64> = radii.to_vec();
    rs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if rs[0] <= 0.0 {
        return Err(Error::invalid("radii must be positive"));
    }
    let t0 = slices[0].time;
    let grid = slices[0].grid;
    let mut osc = Vec::with_capacity(rs.len());
    for &r in &rs {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in slices {
            if s.time - t0 > r * r + 1e-14 {
                continue;
            }
            for j in 0..grid.cells(1) {
                for i in 0..grid.cells(0) {
                    let c = grid.center(i, j);
                    let inside = (c[0] - center[0]).abs() <= r
                        && (grid.dim == 1 || (c[1] - center[1]).abs() <= r);
                    if inside {
                        let v = s.values[grid.idx(i, j)];
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
            }
        }
        if !lo.is_finite() || !hi.is_finite() {
            return Err(Error::invalid(format!(
                "cylinder of radius {r} contains no cells"
            )));
        }
        osc.push((r, hi - lo));
    }
    let scale = osc.iter().map(|p| p.1).fold(0.0f64, f64::max);
    if scale <= 0.0 || osc.iter().any(|p| p.1 <= 1e-14 * scale.max(1.0)) {
        return Ok(OscillationFit {
            alpha: None,
            constant: 0.0,
            residual: 0.0,
            oscillations: osc,
        });
    }
    // Least squares on log osc = log C + alpha log r.
    let n = osc.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(r, o) in &osc {
        let x = r.ln();
        let y = o.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-14 {
        return Ok(OscillationFit {
            alpha: None,
            constant: 0.0,
            residual: 0.0,
            oscillations: osc,
        });
    }
    let alpha = (n * sxy - sx * sy) / denom;
    let logc = (sy - alpha * sx) / n;
    let mut res = 0.0;
    for &(r, o) in &osc {
        let e = o.ln() - (logc + alpha * r.ln());
        res += e * e;
    }
    Ok(OscillationFit {
        alpha: Some(alpha),
        constant: logc.exp(),
        residual: (res / n).sqrt(),
        oscillations: osc,
    })
}

/// One time-slice row of the tracked functionals.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticsRecord {
    pub time: f64,
    pub mass: f64,
    /// (q, L^q norm) for each tracked q.
    pub lq: Vec<(f64, f64)>,
    pub entropy: f64,
    pub abs_entropy: f64,
    pub moment_p: f64,
    /// (q, integral of |grad rho^((q+m-1)/2)|^2) for each tracked q.
    pub dissipation: Vec<(f64, f64)>,
    pub speed_p: f64,
    pub drift_energy_p: f64,
    pub support_radius: f64,
    pub free_energy: Option<f64>,
}

impl DiagnosticsRecord {
    /// Evaluate every functional for one field.
    pub fn compute(
        rho: &DensityField,
        m: f64,
        p: f64,
        tracked_q: &[f64],
        drift: Option<&VectorFieldSpec>,
    ) -> Result<DiagnosticsRecord> {
        let (signed, absolute) = entropy(rho);
        let mut lq = Vec::with_capacity(tracked_q.len());
        let mut diss = Vec::with_capacity(tracked_q.len());
        for &q in tracked_q {
            lq.push((q, lq_norm(rho, q)?));
            diss.push((q, dissipation(rho, m, q)?));
        }
        let com = crate::grid::center_of_mass(rho);
        Ok(DiagnosticsRecord {
            time: rho.time,
            mass: mass(rho),
            lq,
            entropy: signed,
            abs_entropy: absolute,
            moment_p: p_moment(rho, p)?,
            dissipation: diss,
            speed_p: speed_energy(rho, m, p)?,
            drift_energy_p: match drift {
                Some(v) => drift_energy(rho, v, p, rho.time)?,
                None => 0.0,
            },
            support_radius: crate::grid::support_radius_about(
                rho,
                com,
                defaults::SUPPORT_THRESHOLD_FRACTION,
            ),
            free_energy: None,
        })
    }
}
