//! Discrete Wasserstein distances, curve moduli, and the squared-distance
//! contraction check for drifts with bounded gradients.
//!
//! 1-d distances use the exact quantile coupling. 2-d distances use the
//! transportation simplex exactly, or entropic regularization with a
//! geometric epsilon schedule and a debiasing correction for larger
//! supports. Grid fields become discrete measures by placing each cell's
//! mass at its center.

use crate::defaults;
use crate::error::{Error, Result};
use crate::grid::DensityField;
use crate::netflow::transport_min_cost;
use crate::vfield::VectorFieldSpec;

#[derive(Debug, Clone)]
pub struct DiscreteMeasure {
    pub dim: usize,
    pub points: Vec<[f64; 2]>,
    /// Nonnegative, summing to 1 after normalization.
    pub weights: Vec<f64>,
    /// Mass removed by the support threshold when built from a field.
    pub dropped_mass: f64,
    /// Grid the measure was read off, when it came from a field.
    pub source_grid: Option<crate::grid::Grid>,
}

impl DiscreteMeasure {
    pub fn new(dim: usize, points: Vec<[f64; 2]>, weights: Vec<f64>) -> Result<Self> {
        if points.is_empty() || points.len() != weights.len() {
            return Err(Error::invalid(
                "measure needs matching nonempty points and weights",
            ));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::invalid("weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::invalid("measure has no mass"));
        }
        let weights = weights.iter().map(|w| w / total).collect();
        Ok(DiscreteMeasure {
            dim,
            points,
            weights,
            dropped_mass: 0.0,
            source_grid: None,
        })
    }

    /// Cells below MEASURE_DROP times the max are dropped and the rest is
    /// renormalized.
    pub fn from_field(field: &DensityField) -> Result<Self> {
        let g = &field.grid;
        let thr = defaults::MEASURE_DROP * field.max_value();
        let vol = g.cell_volume();
        let mut points = Vec::new();
        let mut weights = Vec::new();
        let mut dropped = 0.0;
        for j in 0..g.cells(1) {
            for i in 0..g.cells(0) {
                let v = field.values[g.idx(i, j)];
                if v > thr {
                    points.push(g.center(i, j));
                    weights.push(v * vol);
                } else {
                    dropped += v * vol;
                }
            }
        }
        let mut m = DiscreteMeasure::new(g.dim, points, weights)?;
        m.dropped_mass = dropped;
        m.source_grid = Some(*g);
        Ok(m)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn weight_sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Push every atom through a map; weights are unchanged.
    pub fn map_points(&self, f: impl Fn([f64; 2]) -> [f64; 2]) -> DiscreteMeasure {
        DiscreteMeasure {
            dim: self.dim,
            points: self.points.iter().map(|&p| f(p)).collect(),
            weights: self.weights.clone(),
            dropped_mass: self.dropped_mass,
            source_grid: self.source_grid,
        }
    }
}

/// Exact W_p on the line by quantile coupling.
pub fn wasserstein_1d(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Result<f64> {
    if mu.dim != 1 || nu.dim != 1 {
        return Err(Error::invalid("wasserstein_1d needs 1-d measures"));
    }
    if !(p >= 1.0) {
        return Err(Error::invalid("wasserstein_1d requires p >= 1"));
    }
    let sort = |m: &DiscreteMeasure| -> Vec<(f64, f64)> {
        let mut v: Vec<(f64, f64)> = m
            .points
            .iter()
            .zip(&m.weights)
            .map(|(pt, &w)| (pt[0], w))
            .collect();
        v.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        v
    };
    let a = sort(mu);
    let b = sort(nu);
    let mut i = 0;
    let mut j = 0;
    let mut ra = a[0].1;
    let mut rb = b[0].1;
    let mut cost = 0.0;
    loop {
        let delta = ra.min(rb);
        cost += delta * (a[i].0 - b[j].0).abs().powf(p);
        ra -= delta;
        rb -= delta;
        if ra <= 1e-17 {
            i += 1;
            if i >= a.len() {
                break;
            }
            ra = a[i].1;
        }
        if rb <= 1e-17 {
            j += 1;
            if j >= b.len() {
                break;
            }
            rb = b[j].1;
        }
    }
    Ok(cost.powf(1.0 / p))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OtMethod {
    Exact,
    Entropic,
}

#[derive(Debug, Clone)]
pub enum OtDetail {
    Exact,
    Entropic {
        epsilon: f64,
        raw_value: f64,
        debias_correction: f64,
        iterations: usize,
    },
}

#[derive(Debug, Clone)]
pub struct OtResult {
    pub distance: f64,
    pub detail: OtDetail,
}

/// W_p between discrete measures in 1 or 2 dimensions.
pub fn wasserstein_discrete(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    method: OtMethod,
) -> Result<OtResult> {
    if mu.is_empty() || nu.is_empty() {
        return Err(Error::invalid("wasserstein on an empty measure"));
    }
    if !(p >= 1.0) {
        return Err(Error::invalid("wasserstein requires p >= 1"));
    }
    match method {
        OtMethod::Exact => {
            if mu.len() * nu.len() > defaults::EXACT_OT_MAX_PRODUCT {
                return Err(Error::invalid(format!(
                    "support product {} exceeds the exact-method cap {}",
                    mu.len() * nu.len(),
                    defaults::EXACT_OT_MAX_PRODUCT
                )));
            }
            let cost = cost_matrix(mu, nu, p);
            let value = transport_min_cost(&mu.weights, &nu.weights, &cost)?;
            Ok(OtResult {
                distance: value.max(0.0).powf(1.0 / p),
                detail: OtDetail::Exact,
            })
        }
        OtMethod::Entropic => {
            let diam = joint_diameter(mu, nu).max(1e-12);
            let eps_hi = defaults::SINKHORN_EPS_START * diam * diam;
            let eps_lo = defaults::SINKHORN_EPS_END * diam * diam;
            // Each solve carries its own iteration budget.
            let mut it_main = 0usize;
            let mut it_mu = 0usize;
            let mut it_nu = 0usize;
            let (raw, eps) = sinkhorn_cost(mu, nu, p, eps_hi, eps_lo, &mut it_main)?;
            let (self_mu, _) = sinkhorn_cost(mu, mu, p, eps_hi, eps_lo, &mut it_mu)?;
            let (self_nu, _) = sinkhorn_cost(nu, nu, p, eps_hi, eps_lo, &mut it_nu)?;
            let iterations = it_main + it_mu + it_nu;
            let correction = 0.5 * (self_mu + self_nu);
            let debiased = (raw - correction).max(0.0);
            Ok(OtResult {
                distance: debiased.powf(1.0 / p),
                detail: OtDetail::Entropic {
                    epsilon: eps,
                    raw_value: raw,
                    debias_correction: correction,
                    iterations,
                },
            })
        }
    }
}

fn cost_matrix(mu: &DiscreteMeasure, nu: &DiscreteMeasure, p: f64) -> Vec<f64> {
    let mut cost = Vec::with_capacity(mu.len() * nu.len());
    for a in &mu.points {
        for b in &nu.points {
            let d = (a[0] - b[0]).hypot(a[1] - b[1]);
            cost.push(d.powf(p));
        }
    }
    cost
}

fn joint_diameter(mu: &DiscreteMeasure, nu: &DiscreteMeasure) -> f64 {
    let mut lo = [f64::INFINITY; 2];
    let mut hi = [f64::NEG_INFINITY; 2];
    for p in mu.points.iter().chain(nu.points.iter()) {
        for a in 0..2 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (hi[0] - lo[0]).hypot(hi[1] - lo[1])
}

/// Log-domain Sinkhorn with a geometric epsilon schedule; returns the
/// regularized transport cost at the final epsilon.
fn sinkhorn_cost(
    mu: &DiscreteMeasure,
    nu: &DiscreteMeasure,
    p: f64,
    eps_hi: f64,
    eps_lo: f64,
    iterations: &mut usize,
) -> Result<(f64, f64)> {
    let m = mu.len();
    let n = nu.len();
    let cost = cost_matrix(mu, nu, p);
    let la: Vec<f64> = mu.weights.iter().map(|w| w.max(1e-300).ln()).collect();
    let lb: Vec<f64> = nu.weights.iter().map(|w| w.max(1e-300).ln()).collect();
    let mut f = vec![0.0f64; m];
    let mut g = vec![0.0f64; n];
    let stages = defaults::SINKHORN_STAGES.max(1);
    let ratio = if stages > 1 {
        (eps_lo / eps_hi).powf(1.0 / (stages - 1) as f64)
    } else {
        1.0
    };
    let mut eps = eps_hi;
    let cap = defaults::SINKHORN_ITER_CAP;
    let mut converged = false;
    for stage in 0..stages {
        if stage > 0 {
            eps *= ratio;
        }
        converged = false;
        while *iterations < cap {
            *iterations += 1;
            // f update then g update, both log-stabilized.
            for i in 0..m {
                let mut mx = f64::NEG_INFINITY;
                for j in 0..n {
                    let e = (g[j] - cost[i * n + j]) / eps + lb[j];
                    if e > mx {
                        mx = e;
                    }
                }
                let mut s = 0.0;
                for j in 0..n {
                    s += ((g[j] - cost[i * n + j]) / eps + lb[j] - mx).exp();
                }
                f[i] = -eps * (mx + s.ln());
            }
            let mut worst = 0.0f64;
            for j in 0..n {
                let mut mx = f64::NEG_INFINITY;
                for i in 0..m {
                    let e = (f[i] - cost[i * n + j]) / eps + la[i];
                    if e > mx {
                        mx = e;
                    }
                }
                let mut s = 0.0;
                for i in 0..m {
                    s += ((f[i] - cost[i * n + j]) / eps + la[i] - mx).exp();
                }
                let new_g = -eps * (mx + s.ln());
                worst = worst.max((new_g - g[j]).abs());
                g[j] = new_g;
            }
            // With g freshly updated the nu-marginal is exact; the mu-side
            // violation is controlled by the last potential change.
            let marginal = marginal_violation(&f, &g, &la, &lb, &cost, m, n, eps);
            if marginal <= defaults::SINKHORN_MARGINAL_TOL || worst < 1e-14 {
                converged = true;
                break;
            }
        }
    }
    if !converged {
        let marginal = marginal_violation(&f, &g, &la, &lb, &cost, m, n, eps);
        if marginal > 1e2 * defaults::SINKHORN_MARGINAL_TOL {
            return Err(Error::NonConvergence(format!(
                "sinkhorn marginal violation {marginal:.3e} after {} iterations",
                *iterations
            )));
        }
    }
    // Transport cost of the implied plan.
    let mut value = 0.0;
    for i in 0..m {
        for j in 0..n {
            let pi = ((f[i] + g[j] - cost[i * n + j]) / eps + la[i] + lb[j]).exp();
            value += pi * cost[i * n + j];
        }
    }
    Ok((value, eps))
}

#[allow(clippy::too_many_arguments)]
fn marginal_violation(
    f: &[f64],
    g: &[f64],
    la: &[f64],
    lb: &[f64],
    cost: &[f64],
    m: usize,
    n: usize,
    eps: f64,
) -> f64 {
    let mut worst = 0.0f64;
    for i in 0..m {
        let mut row = 0.0;
        for j in 0..n {
            row += ((f[i] + g[j] - cost[i * n + j]) / eps + la[i] + lb[j]).exp();
        }
        worst = worst.max((row - la[i].exp()).abs());
    }
    worst
}

/// W_p between two grid densities, exact up to the stated size cap. 2-d
/// fields larger than the cap are block-coarsened first; the report notes
/// the factor.
pub fn field_distance(a: &DensityField, b: &DensityField, p: f64) -> Result<f64> {
    if a.grid.dim == 1 {
        let mu = DiscreteMeasure::from_field(a)?;
        let nu = DiscreteMeasure::from_field(b)?;
        return wasserstein_1d(&mu, &nu, p);
    }
    let (mu, nu, _factor) = coarsened_measures(a, b)?;
    Ok(wasserstein_discrete(&mu, &nu, p, OtMethod::Exact)?.distance)
}

/// Coarsening factor applied before exact 2-d transport of grid fields.
pub fn coarsening_factor(a: &DensityField, b: &DensityField) -> usize {
    let cap = 1600usize; // per-side support cap, product well under the limit
    let worst = a.grid.total_cells().max(b.grid.total_cells());
    let mut f = 1usize;
    while worst / (f * f) > cap {
        f *= 2;
    }
    f
}

fn coarsened_measures(
    a: &DensityField,
    b: &DensityField,
) -> Result<(DiscreteMeasure, DiscreteMeasure, usize)> {
    let f = coarsening_factor(a, b);
    Ok((coarsen_to_measure(a, f)?, coarsen_to_measure(b, f)?, f))
}

/// Sum cell masses over f x f blocks and place them at block centers.
pub fn coarsen_to_measure(field: &DensityField, factor: usize) -> Result<DiscreteMeasure> {
    let g = &field.grid;
    if factor <= 1 {
        return DiscreteMeasure::from_field(field);
    }
    let vol = g.cell_volume();
    let nbx = g.cells(0).div_ceil(factor);
    let nby = g.cells(1).div_ceil(factor);
    let mut mass = vec![0.0; nbx * nby];
    let mut cx = vec![0.0; nbx * nby];
    let mut cy = vec![0.0; nbx * nby];
    for j in 0..g.cells(1) {
        for i in 0..g.cells(0) {
            let v = field.values[g.idx(i, j)] * vol;
            if v > 0.0 {
                let bidx = (j / factor) * nbx + i / factor;
                let c = g.center(i, j);
                mass[bidx] += v;
                cx[bidx] += v * c[0];
                cy[bidx] += v * c[1];
            }
        }
    }
    let mut points = Vec::new();
    let mut weights = Vec::new();
    let maxm = mass.iter().cloned().fold(0.0f64, f64::max);
    for k in 0..mass.len() {
        if mass[k] > defaults::MEASURE_DROP * maxm {
            // Mass-weighted block centroid keeps the first moment exact.
            points.push([cx[k] / mass[k], cy[k] / mass[k]]);
            weights.push(mass[k]);
        }
    }
    DiscreteMeasure::new(g.dim, points, weights)
}

#[derive(Debug, Clone)]
pub struct CurveModulusReport {
    /// (s, t, distance, residual after drift subtraction).
    pub pairs: Vec<(f64, f64, f64, f64)>,
    /// Fitted exponent of residual ~ C gap^gamma; None for degenerate data.
    pub exponent: Option<f64>,
    pub constant: f64,
    pub fit_residual: f64,
}

/// Sample time pairs from a trajectory, measure W_p, optionally subtract
/// the integrated sup-norm of the drift, and fit a power law in the gap.
pub fn curve_modulus(
    trajectory: &[DensityField],
    p: f64,
    pair_count: usize,
    drift: Option<&VectorFieldSpec>,
) -> Result<CurveModulusReport> {
    if trajectory.len() < 6 {
        return Err(Error::invalid("curve_modulus needs at least 6 snapshots"));
    }
    let mut all_pairs = Vec::new();
    for i in 0..trajectory.len() {
        for j in (i + 1)..trajectory.len() {
            all_pairs.push((i, j));
        }
    }
    let stride = (all_pairs.len() / pair_count.max(1)).max(1);
    let chosen: Vec<(usize, usize)> = all_pairs.into_iter().step_by(stride).collect();

    let grid = trajectory[0].grid;
    let mut pairs = Vec::with_capacity(chosen.len());
    for (i, j) in chosen {
        let s = trajectory[i].time;
        let t = trajectory[j].time;
        let dist = field_distance(&trajectory[i], &trajectory[j], p)?;
        let drift_term = match drift {
            Some(v) => time_quad(s, t, 32, |tau| v.sup_norm_on(&grid, tau)),
            None => 0.0,
        };
        pairs.push((s, t, dist, dist - drift_term));
    }

    let scale = pairs.iter().map(|q| q.2).fold(0.0f64, f64::max);
    let usable: Vec<(f64, f64)> = pairs
        .iter()
        .filter(|q| q.3 > 1e-9 * scale.max(1e-300) && q.1 > q.0)
        .map(|q| (q.1 - q.0, q.3))
        .collect();
    if scale <= 0.0 || usable.len() < 2 {
        return Ok(CurveModulusReport {
            pairs,
            exponent: None,
            constant: 0.0,
            fit_residual: 0.0,
        });
    }
    let n = usable.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(gap, r) in &usable {
        let x = gap.ln();
        let y = r.ln();
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return Ok(CurveModulusReport {
            pairs,
            exponent: None,
            constant: 0.0,
            fit_residual: 0.0,
        });
    }
    let gamma = (n * sxy - sx * sy) / denom;
    let logc = (sy - gamma * sx) / n;
    let mut res = 0.0;
    for &(gap, r) in &usable {
        let e = r.ln() - (logc + gamma * gap.ln());
        res += e * e;
    }
    Ok(CurveModulusReport {
        pairs,
        exponent: Some(gamma),
        constant: logc.exp(),
        fit_residual: (res / n).sqrt(),
    })
}

fn time_quad(s: f64, t: f64, nodes: usize, f: impl Fn(f64) -> f64) -> f64 {
    let n = nodes.max(1);
    let dt = (t - s) / n as f64;
    let mut acc = 0.0;
    for k in 0..=n {
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc += w * f(s + k as f64 * dt);
    }
    acc * dt
}

#[derive(Debug, Clone)]
pub struct ContractionReport {
    /// (time, squared distance, bound on the squared distance).
    pub rows: Vec<(f64, f64, f64)>,
    pub initial_squared: f64,
    pub ok: bool,
}

/// Run two splitting solves and compare the squared 2-Wasserstein distance
/// at every output time against exp(integral of the drift-gradient sup)
/// times its initial value, within the given relative slack.
pub fn contraction_check(
    rho1: &DensityField,
    rho2: &DensityField,
    v: &VectorFieldSpec,
    cfg: &crate::splitting::SplittingConfig,
    slack: f64,
) -> Result<ContractionReport> {
    let run1 = crate::splitting::split_solve(rho1, v, cfg)?;
    let run2 = crate::splitting::split_solve(rho2, v, cfg)?;
    if run1.outputs.len() != run2.outputs.len() {
        return Err(Error::invalid("trajectories disagree on output times"));
    }
    let w0 = field_distance(&run1.outputs[0], &run2.outputs[0], 2.0)?;
    let w0sq = w0 * w0;
    let mut rows = Vec::new();
    let mut ok = true;
    for k in 0..run1.outputs.len() {
        let t = run1.outputs[k].time;
        let w = field_distance(&run1.outputs[k], &run2.outputs[k], 2.0)?;
        let gronwall = time_quad(run1.outputs[0].time, t, 64, |tau| v.lipschitz(tau)).exp();
        let bound = gronwall * w0sq * (1.0 + slack);
        if w * w > bound + 1e-14 {
            ok = false;
        }
        rows.push((t, w * w, bound));
    }
    Ok(ContractionReport {
        rows,
        initial_squared: w0sq,
        ok,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::rng::Rng;

    fn atoms_1d(xs: &[f64], ws: &[f64]) -> DiscreteMeasure {
        DiscreteMeasure::new(1, xs.iter().map(|&x| [x, 0.0]).collect(), ws.to_vec()).unwrap()
    }

    fn random_measure_1d(rng: &mut Rng, n: usize) -> DiscreteMeasure {
        let xs: Vec<f64> = (0..n).map(|_| rng.range(-2.0, 2.0)).collect();
        let ws: Vec<f64> = (0..n).map(|_| rng.range(0.1, 1.0)).collect();
        atoms_1d(&xs, &ws)
    }

    #[test]
    fn identical_measures_have_zero_distance() {
        let m = atoms_1d(&[0.0, 1.0, 2.0], &[0.2, 0.5, 0.3]);
        assert_eq!(wasserstein_1d(&m, &m, 2.0).unwrap(), 0.0);
        let r = wasserstein_discrete(&m, &m, 2.0, OtMethod::Exact).unwrap();
        assert!(r.distance < 1e-12);
    }

    #[test]
    fn point_masses_at_distance_a() {
        let m = atoms_1d(&[0.0], &[1.0]);
        let n = atoms_1d(&[0.7], &[1.0]);
        for &p in &[1.0, 1.5, 2.0, 3.0] {
            assert!((wasserstein_1d(&m, &n, p).unwrap() - 0.7).abs() < 1e-14);
        }
    }

    #[test]
    fn uniform_translation_is_exact() {
        // Uniform on [0,1] vs uniform on [1,2] at p=2: distance 1.
        let n = 200;
        let xs: Vec<f64> = (0..n).map(|k| (k as f64 + 0.5) / n as f64).collect();
        let ys: Vec<f64> = xs.iter().map(|x| x + 1.0).collect();
        let w = vec![1.0; n];
        let a = atoms_1d(&xs, &w);
        let b = atoms_1d(&ys, &w);
        let d = wasserstein_1d(&a, &b, 2.0).unwrap();
        assert!((d - 1.0).abs() < 1e-12, "{d}");
    }

    #[test]
    fn exact_2d_translation_of_blob() {
        let g = make_grid(2, &[24, 24], &[-1.5, -1.5], &[0.125, 0.125]).unwrap();
        let f =
            DensityField::from_fn(g, 0.0, |x| (-(x[0] * x[0] + x[1] * x[1]) * 6.0).exp()).unwrap();
        // Shift by exactly 4 cells: 0.5.
        let shift = 0.5;
        let f2 = DensityField::from_fn(g, 0.0, |x| {
            (-((x[0] - shift) * (x[0] - shift) + x[1] * x[1]) * 6.0).exp()
        })
        .unwrap();
        let mu = DiscreteMeasure::from_field(&f).unwrap();
        let nu = DiscreteMeasure::from_field(&f2).unwrap();
        let d = wasserstein_discrete(&mu, &nu, 2.0, OtMethod::Exact)
            .unwrap()
            .distance;
        // Truncation breaks the symmetry a little; a cell of slack.
        assert!((d - shift).abs() < g.spacing(0), "d = {d}");
    }

    #[test]
    fn one_and_two_dimensional_exact_agree_on_a_line() {
        let mut rng = Rng::new(21);
        for _ in 0..10 {
            let n = 12;
            let xs: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
            let ys: Vec<f64> = (0..n).map(|_| rng.range(-1.0, 1.0)).collect();
            let ws: Vec<f64> = (0..n).map(|_| rng.range(0.1, 1.0)).collect();
            let vs: Vec<f64> = (0..n).map(|_| rng.range(0.1, 1.0)).collect();
            // Embed both on the line x -> (x cos a, x sin a).
            let ang: f64 = rng.range(0.0, std::f64::consts::PI);
            let (c, s) = (ang.cos(), ang.sin());
            let mu1 = atoms_1d(&xs, &ws);
            let nu1 = atoms_1d(&ys, &vs);
            let mu2 =
                DiscreteMeasure::new(2, xs.iter().map(|&x| [x * c, x * s]).collect(), ws.clone())
                    .unwrap();
            let nu2 =
                DiscreteMeasure::new(2, ys.iter().map(|&y| [y * c, y * s]).collect(), vs.clone())
                    .unwrap();
            let d1 = wasserstein_1d(&mu1, &nu1, 2.0).unwrap();
            let d2 = wasserstein_discrete(&mu2, &nu2, 2.0, OtMethod::Exact)
                .unwrap()
                .distance;
            assert!((d1 - d2).abs() < 1e-9, "{d1} vs {d2}");
        }
    }

    #[test]
    fn two_point_masses_give_their_distance() {
        let m = DiscreteMeasure::new(2, vec![[0.1, 0.2]], vec![1.0]).unwrap();
        let n = DiscreteMeasure::new(2, vec![[0.7, -0.3]], vec![1.0]).unwrap();
        let want = (0.6f64).hypot(0.5);
        for &p in &[1.0, 2.0, 3.0] {
            let d = wasserstein_discrete(&m, &n, p, OtMethod::Exact)
                .unwrap()
                .distance;
            assert!((d - want).abs() < 1e-12, "p={p}: {d}");
        }
    }

    #[test]
    fn curve_modulus_flags_degenerate_trajectories() {
        let g = make_grid(1, &[64], &[-2.0], &[4.0 / 64.0]).unwrap();
        let f = DensityField::from_fn(g, 0.0, |x| (-(x[0] * x[0]) * 4.0).exp()).unwrap();
        // Stationary: every snapshot equal.
        let frozen: Vec<DensityField> = (0..8)
            .map(|k| DensityField {
                grid: g,
                values: f.values.clone(),
                time: k as f64 * 0.1,
            })
            .collect();
        let rep = curve_modulus(&frozen, 2.0, 20, None).unwrap();
        assert!(rep.exponent.is_none());

        // Pure translation with the drift supplied: residuals collapse.
        let c = 0.25;
        let moving: Vec<DensityField> = (0..8)
            .map(|k| {
                let t = k as f64 * 0.1;
                DensityField::from_fn(g, t, |x| (-((x[0] - c * t) * (x[0] - c * t)) * 4.0).exp())
                    .unwrap()
            })
            .collect();
        let v = VectorFieldSpec::Constant([c, 0.0]);
        let rep = curve_modulus(&moving, 2.0, 20, Some(&v)).unwrap();
        // After subtracting the drift term the residual sits at the cell
        // atomization scale, far below the distances themselves.
        let worst = rep.pairs.iter().map(|q| q.3.abs()).fold(0.0f64, f64::max);
        assert!(worst < 0.5 * g.spacing(0), "residual {worst}");
    }

    #[test]
    fn metric_axioms_on_random_triples() {
        let mut rng = Rng::new(5);
        for _ in 0..25 {
            let a = random_measure_1d(&mut rng, 8);
            let b = random_measure_1d(&mut rng, 8);
            let c = random_measure_1d(&mut rng, 8);
            let embed = |m: &DiscreteMeasure| {
                DiscreteMeasure::new(2, m.points.clone(), m.weights.clone()).unwrap()
            };
            let d = |x: &DiscreteMeasure, y: &DiscreteMeasure| {
                wasserstein_discrete(&embed(x), &embed(y), 2.0, OtMethod::Exact)
                    .unwrap()
                    .distance
            };
            let dab = d(&a, &b);
            let dba = d(&b, &a);
            let dac = d(&a, &c);
            let dcb = d(&c, &b);
            assert!((dab - dba).abs() < 1e-9);
            assert!(dab <= dac + dcb + 1e-9);
        }
    }

    #[test]
    fn monotone_in_p_on_random_pairs() {
        let mut rng = Rng::new(17);
        for _ in 0..20 {
            let a = random_measure_1d(&mut rng, 10);
            let b = random_measure_1d(&mut rng, 10);
            let d15 = wasserstein_1d(&a, &b, 1.5).unwrap();
            let d2 = wasserstein_1d(&a, &b, 2.0).unwrap();
            let d3 = wasserstein_1d(&a, &b, 3.0).unwrap();
            assert!(d15 <= d2 + 1e-12 && d2 <= d3 + 1e-12);
        }
    }

    #[test]
    fn entropic_close_to_exact() {
        let g = make_grid(2, &[20, 20], &[-1.5, -1.5], &[0.15, 0.15]).unwrap();
        let f1 = DensityField::from_fn(g, 0.0, |x| {
            (-((x[0] + 0.5) * (x[0] + 0.5) + (x[1] + 0.3) * (x[1] + 0.3)) * 14.0).exp()
        })
        .unwrap();
        let f2 = DensityField::from_fn(g, 0.0, |x| {
            (-((x[0] - 0.5) * (x[0] - 0.5) + (x[1] - 0.3) * (x[1] - 0.3)) * 14.0).exp()
        })
        .unwrap();
        let mu = DiscreteMeasure::from_field(&f1).unwrap();
        let nu = DiscreteMeasure::from_field(&f2).unwrap();
        let exact = wasserstein_discrete(&mu, &nu, 2.0, OtMethod::Exact)
            .unwrap()
            .distance;
        let ent = wasserstein_discrete(&mu, &nu, 2.0, OtMethod::Entropic).unwrap();
        let gap = (ent.distance - exact).abs() / exact;
        assert!(
            gap <= 0.01,
            "entropic gap {gap}; exact {exact}, got {}",
            ent.distance
        );
    }

    #[test]
    fn exact_size_cap_enforced() {
        let pts: Vec<[f64; 2]> = (0..2001).map(|k| [k as f64, 0.0]).collect();
        let w = vec![1.0; 2001];
        let m = DiscreteMeasure::new(2, pts, w).unwrap();
        let r = wasserstein_discrete(&m, &m, 2.0, OtMethod::Exact);
        assert!(r.is_err());
    }

    #[test]
    fn pushed_pairs_obey_the_flow_bound() {
        // W_p(psi# mu, psi# nu) <= e^{Lip (t-s)} W_p(mu, nu) on atom pushes.
        let v = VectorFieldSpec::Linear([[0.4, 0.3], [0.0, -0.2]]);
        let lip = v.lipschitz(0.0);
        let cfg = crate::flow::FlowConfig {
            substeps: 16,
            clamp: None,
        };
        let mut rng = Rng::new(33);
        let (s, t) = (0.0, 0.6);
        for _ in 0..10 {
            let n = 10;
            let mk = |rng: &mut Rng| {
                DiscreteMeasure::new(
                    2,
                    (0..n)
                        .map(|_| [rng.range(-1.0, 1.0), rng.range(-1.0, 1.0)])
                        .collect(),
                    (0..n).map(|_| rng.range(0.1, 1.0)).collect(),
                )
                .unwrap()
            };
            let mu = mk(&mut rng);
            let nu = mk(&mut rng);
            let push =
                |m: &DiscreteMeasure| m.map_points(|x| crate::flow::flow_map(&v, s, t, x, &cfg));
            let d0 = wasserstein_discrete(&mu, &nu, 2.0, OtMethod::Exact)
                .unwrap()
                .distance;
            let d1 = wasserstein_discrete(&push(&mu), &push(&nu), 2.0, OtMethod::Exact)
                .unwrap()
                .distance;
            assert!(d1 <= (lip * (t - s)).exp() * d0 * (1.0 + 1e-6));
        }
    }
}
