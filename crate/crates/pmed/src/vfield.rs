//! Time-dependent drift fields.
//!
//! A `VectorFieldSpec` evaluates V(x, t) and, where a closed form exists,
//! its divergence and a Lipschitz bound. Sampled variants interpolate grid
//! data (used for the chemotaxis coupling, where the drift is the gradient
//! of a computed scalar field).

use crate::error::{Error, Result};
use crate::grid::{sample_scalar, Grid, ScalarField};

/// Radial Gaussian potential amp * exp(-|x-center|^2 / (2 sigma^2)).
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianPotential {
    pub amplitude: f64,
    pub sigma: f64,
    pub center: [f64; 2],
}

/// One time slice of a sampled vector field.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledFrame {
    pub time: f64,
    /// One component field per axis.
    pub components: Vec<ScalarField>,
    /// Divergence samples on the same grid.
    pub divergence: ScalarField,
}

#[derive(Debug, Clone, PartialEq)]
pub enum VectorFieldSpec {
    Zero,
    Constant([f64; 2]),
    /// omega * (-y, x); 2-d only.
    Rotation(f64),
    /// x -> A x.
    Linear([[f64; 2]; 2]),
    /// (a * y, 0); 2-d only.
    Shear(f64),
    /// Gradient of a Gaussian potential.
    GradientOf(GaussianPotential),
    /// Piecewise-linear interpolation between sampled frames in time;
    /// a single frame means "frozen in time". Carries the gradient of a
    /// solved scalar field in the chemotaxis coupling.
    Sampled(Vec<SampledFrame>),
    /// kappa^alpha * base(kappa x, kappa^beta t).
    Rescaled {
        base: Box<VectorFieldSpec>,
        kappa: f64,
        alpha: f64,
        beta: f64,
    },
}

impl VectorFieldSpec {
    pub fn gradient_of_solution(c: &ScalarField, sign: f64) -> Result<VectorFieldSpec> {
        let comps = crate::grid::discrete_gradient(c);
        let scaled: Vec<ScalarField> = comps
            .iter()
            .map(|g| ScalarField {
                grid: g.grid,
                values: g.values.iter().map(|v| sign * v).collect(),
                time: g.time,
            })
            .collect();
        let divergence = crate::grid::discrete_divergence(&scaled)?;
        Ok(VectorFieldSpec::Sampled(vec![SampledFrame {
            time: c.time,
            components: scaled,
            divergence,
        }]))
    }

    /// V(x, t).
    pub fn eval(&self, x: [f64; 2], t: f64) -> [f64; 2] {
        match self {
            VectorFieldSpec::Zero => [0.0, 0.0],
            VectorFieldSpec::Constant(c) => *c,
            VectorFieldSpec::Rotation(w) => [-w * x[1], w * x[0]],
            VectorFieldSpec::Linear(a) => [
                a[0][0] * x[0] + a[0][1] * x[1],
                a[1][0] * x[0] + a[1][1] * x[1],
            ],
            VectorFieldSpec::Shear(a) => [a * x[1], 0.0],
            VectorFieldSpec::GradientOf(p) => {
                let dx = x[0] - p.center[0];
                let dy = x[1] - p.center[1];
                let s2 = p.sigma * p.sigma;
                let g = p.amplitude * (-(dx * dx + dy * dy) / (2.0 * s2)).exp() / s2;
                [-g * dx, -g * dy]
            }
            VectorFieldSpec::Sampled(frames) => {
                let interp = |k: usize| -> [f64; 2] {
                    let f = &frames[k];
                    let vx = sample_scalar(&f.components[0], x);
                    let vy = if f.components.len() > 1 {
                        sample_scalar(&f.components[1], x)
                    } else {
                        0.0
                    };
                    [vx, vy]
                };
                match frame_weights(frames, t) {
                    FrameBlend::One(k) => interp(k),
                    FrameBlend::Two(k, w) => {
                        let a = interp(k);
                        let b = interp(k + 1);
                        [a[0] + w * (b[0] - a[0]), a[1] + w * (b[1] - a[1])]
                    }
                }
            }
            VectorFieldSpec::Rescaled {
                base,
                kappa,
                alpha,
                beta,
            } => {
                let y = [kappa * x[0], kappa * x[1]];
                let v = base.eval(y, kappa.powf(*beta) * t);
                let s = kappa.powf(*alpha);
                [s * v[0], s * v[1]]
            }
        }
    }

    /// Divergence at (x, t): closed form where available, interpolated
    /// samples for `Sampled`.
    pub fn divergence(&self, x: [f64; 2], t: f64) -> f64 {
        match self {
            VectorFieldSpec::Zero | VectorFieldSpec::Constant(_) => 0.0,
            VectorFieldSpec::Rotation(_) | VectorFieldSpec::Shear(_) => 0.0,
            VectorFieldSpec::Linear(a) => a[0][0] + a[1][1],
            VectorFieldSpec::GradientOf(p) => {
                // Laplacian of the potential, d = 2.
                let dx = x[0] - p.center[0];
                let dy = x[1] - p.center[1];
                let s2 = p.sigma * p.sigma;
                let r2 = dx * dx + dy * dy;
                p.amplitude * (-r2 / (2.0 * s2)).exp() * (r2 / s2 - 2.0) / s2
            }
            VectorFieldSpec::Sampled(frames) => match frame_weights(frames, t) {
                FrameBlend::One(k) => sample_scalar(&frames[k].divergence, x),
                FrameBlend::Two(k, w) => {
                    let a = sample_scalar(&frames[k].divergence, x);
                    let b = sample_scalar(&frames[k + 1].divergence, x);
                    a + w * (b - a)
                }
            },
            VectorFieldSpec::Rescaled {
                base,
                kappa,
                alpha,
                beta,
            } => {
                let y = [kappa * x[0], kappa * x[1]];
                kappa.powf(alpha + 1.0) * base.divergence(y, kappa.powf(*beta) * t)
            }
        }
    }

    /// Spatial Lipschitz bound at time t; closed form where available,
    /// otherwise estimated from samples over the carrier grid.
    // Every built-in kind is steady so only the rescaled wrapper consumes
    // t, but the bound is a function of time by contract.
    #[allow(clippy::only_used_in_recursion)]
    pub fn lipschitz(&self, t: f64) -> f64 {
        match self {
            VectorFieldSpec::Zero | VectorFieldSpec::Constant(_) => 0.0,
            VectorFieldSpec::Rotation(w) => w.abs(),
            VectorFieldSpec::Linear(a) => matrix_norm_2x2(a),
            VectorFieldSpec::Shear(s) => s.abs(),
            // Hessian norm of the Gaussian peaks at the center.
            VectorFieldSpec::GradientOf(p) => p.amplitude.abs() / (p.sigma * p.sigma),
            VectorFieldSpec::Sampled(frames) => {
                let mut lip = 0.0f64;
                for f in frames {
                    for comp in &f.components {
                        for g in crate::grid::discrete_gradient(comp) {
                            lip = lip.max(g.values.iter().fold(0.0f64, |m, v| m.max(v.abs())));
                        }
                    }
                }
                lip * self_dim_factor(frames)
            }
            VectorFieldSpec::Rescaled {
                base,
                kappa,
                alpha,
                beta,
            } => kappa.powf(alpha + 1.0) * base.lipschitz(kappa.powf(*beta) * t),
        }
    }

    /// Sup of |V(., t)| over a box; the bound the support envelope and the
    /// curve-modulus drift term use. Closed form for affine kinds, sampled
    /// corners/extrema otherwise.
    pub fn sup_norm_on(&self, grid: &Grid, t: f64) -> f64 {
        match self {
            VectorFieldSpec::Zero => 0.0,
            VectorFieldSpec::Constant(c) => norm2(*c),
            VectorFieldSpec::Rotation(w) => w.abs() * corner_max_radius(grid),
            VectorFieldSpec::Linear(_) | VectorFieldSpec::Shear(_) => {
                // |V| is convex for affine fields: the max sits at a corner.
                let mut m = 0.0f64;
                for &cx in &[grid.lower(0), grid.upper(0)] {
                    let ys = if grid.dim == 2 {
                        vec![grid.lower(1), grid.upper(1)]
                    } else {
                        vec![0.0]
                    };
                    for &cy in &ys {
                        m = m.max(norm2(self.eval([cx, cy], t)));
                    }
                }
                m
            }
            VectorFieldSpec::GradientOf(p) => {
                // |grad| of the Gaussian peaks at radius sigma.
                p.amplitude.abs() / (p.sigma * (1.0f64).exp().sqrt())
            }
            _ => {
                let mut m = 0.0f64;
                let n = 64;
                for j in 0..if grid.dim == 2 { n } else { 1 } {
                    for i in 0..n {
                        let x = grid.lower(0)
                            + (i as f64 + 0.5) * (grid.upper(0) - grid.lower(0)) / n as f64;
                        let y = if grid.dim == 2 {
                            grid.lower(1)
                                + (j as f64 + 0.5) * (grid.upper(1) - grid.lower(1)) / n as f64
                        } else {
                            0.0
                        };
                        m = m.max(norm2(self.eval([x, y], t)));
                    }
                }
                m
            }
        }
    }

    /// Sup of the negative part of the divergence over a box at time t.
    pub fn div_negative_part_sup(&self, grid: &Grid, t: f64) -> f64 {
        match self {
            VectorFieldSpec::Zero
            | VectorFieldSpec::Constant(_)
            | VectorFieldSpec::Rotation(_)
            | VectorFieldSpec::Shear(_) => 0.0,
            VectorFieldSpec::Linear(a) => (-(a[0][0] + a[1][1])).max(0.0),
            _ => {
                let mut m = 0.0f64;
                let n = 64;
                for j in 0..if grid.dim == 2 { n } else { 1 } {
                    for i in 0..n {
                        let x = grid.lower(0)
                            + (i as f64 + 0.5) * (grid.upper(0) - grid.lower(0)) / n as f64;
                        let y = if grid.dim == 2 {
                            grid.lower(1)
                                + (j as f64 + 0.5) * (grid.upper(1) - grid.lower(1)) / n as f64
                        } else {
                            0.0
                        };
                        m = m.max((-self.divergence([x, y], t)).max(0.0));
                    }
                }
                m
            }
        }
    }

    /// Sup of |div V| over a box at time t.
    pub fn div_abs_sup(&self, grid: &Grid, t: f64) -> f64 {
        match self {
            VectorFieldSpec::Zero
            | VectorFieldSpec::Constant(_)
            | VectorFieldSpec::Rotation(_)
            | VectorFieldSpec::Shear(_) => 0.0,
            VectorFieldSpec::Linear(a) => (a[0][0] + a[1][1]).abs(),
            _ => {
                let fwd = self.div_negative_part_sup(grid, t);
                let mut m = fwd;
                let n = 64;
                for j in 0..if grid.dim == 2 { n } else { 1 } {
                    for i in 0..n {
                        let x = grid.lower(0)
                            + (i as f64 + 0.5) * (grid.upper(0) - grid.lower(0)) / n as f64;
                        let y = if grid.dim == 2 {
                            grid.lower(1)
                                + (j as f64 + 0.5) * (grid.upper(1) - grid.lower(1)) / n as f64
                        } else {
                            0.0
                        };
                        m = m.max(self.divergence([x, y], t).abs());
                    }
                }
                m
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, VectorFieldSpec::Zero)
    }

    /// True when the divergence vanishes identically.
    pub fn is_divergence_free(&self) -> bool {
        match self {
            VectorFieldSpec::Zero
            | VectorFieldSpec::Constant(_)
            | VectorFieldSpec::Rotation(_)
            | VectorFieldSpec::Shear(_) => true,
            VectorFieldSpec::Linear(a) => a[0][0] + a[1][1] == 0.0,
            _ => false,
        }
    }
}

enum FrameBlend {
    One(usize),
    Two(usize, f64),
}

fn frame_weights(frames: &[SampledFrame], t: f64) -> FrameBlend {
    if frames.len() == 1 || t <= frames[0].time {
        return FrameBlend::One(0);
    }
    let last = frames.len() - 1;
    if t >= frames[last].time {
        return FrameBlend::One(last);
    }
    for k in 0..last {
        if t <= frames[k + 1].time {
            let span = frames[k + 1].time - frames[k].time;
            let w = if span > 0.0 {
                (t - frames[k].time) / span
            } else {
                0.0
            };
            return FrameBlend::Two(k, w);
        }
    }
    FrameBlend::One(last)
}

fn norm2(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

fn corner_max_radius(grid: &Grid) -> f64 {
    let mx = grid.lower(0).abs().max(grid.upper(0).abs());
    if grid.dim == 2 {
        let my = grid.lower(1).abs().max(grid.upper(1).abs());
        mx.hypot(my)
    } else {
        mx
    }
}

/// Spectral norm of a 2x2 matrix.
fn matrix_norm_2x2(a: &[[f64; 2]; 2]) -> f64 {
    // Largest singular value via the 2x2 Gram matrix.
    let g11 = a[0][0] * a[0][0] + a[1][0] * a[1][0];
    let g12 = a[0][0] * a[0][1] + a[1][0] * a[1][1];
    let g22 = a[0][1] * a[0][1] + a[1][1] * a[1][1];
    let tr = g11 + g22;
    let det = g11 * g22 - g12 * g12;
    let disc = (tr * tr / 4.0 - det).max(0.0).sqrt();
    (tr / 2.0 + disc).max(0.0).sqrt()
}

fn self_dim_factor(frames: &[SampledFrame]) -> f64 {
    // Componentwise max-gradient bound; the Euclidean operator norm is at
    // most sqrt(d) times it.
    (frames[0].components.len() as f64).sqrt()
}

/// V_kappa(x, t) = kappa^alpha V(kappa x, kappa^beta t) with the exponents
/// tied to (m, q) by alpha = q_md + 1, beta = q_md + 2.
pub fn rescale_drift(
    v: &VectorFieldSpec,
    kappa: f64,
    m: f64,
    q: f64,
    d: usize,
) -> Result<(VectorFieldSpec, f64, f64)> {
    if !(kappa > 0.0) {
        return Err(Error::invalid("kappa must be positive"));
    }
    let q_md = d as f64 * (m - 1.0) / q;
    let alpha = q_md + 1.0;
    let beta = q_md + 2.0;
    Ok((
        VectorFieldSpec::Rescaled {
            base: Box::new(v.clone()),
            kappa,
            alpha,
            beta,
        },
        alpha,
        beta,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;

    #[test]
    fn evaluation_is_finite_on_box() {
        let g = make_grid(2, &[16, 16], &[-2.0, -2.0], &[0.25, 0.25]).unwrap();
        let specs = vec![
            VectorFieldSpec::Zero,
            VectorFieldSpec::Constant([0.3, -0.1]),
            VectorFieldSpec::Rotation(1.5),
            VectorFieldSpec::Linear([[1.0, 0.2], [0.0, -1.0]]),
            VectorFieldSpec::Shear(2.0),
            VectorFieldSpec::GradientOf(GaussianPotential {
                amplitude: 1.0,
                sigma: 0.5,
                center: [0.0, 0.0],
            }),
        ];
        for s in &specs {
            for j in 0..16 {
                for i in 0..16 {
                    let v = s.eval(g.center(i, j), 0.7);
                    assert!(v[0].is_finite() && v[1].is_finite());
                }
            }
        }
    }

    #[test]
    fn analytic_divergence_matches_centered_difference() {
        let g = make_grid(2, &[64, 64], &[-2.0, -2.0], &[4.0 / 64.0; 2]).unwrap();
        let h = g.spacing(0);
        let specs = vec![
            VectorFieldSpec::Linear([[0.7, 0.1], [0.4, -0.2]]),
            VectorFieldSpec::GradientOf(GaussianPotential {
                amplitude: 0.8,
                sigma: 0.6,
                center: [0.2, -0.1],
            }),
        ];
        for s in &specs {
            let mut worst = 0.0f64;
            for j in 4..60 {
                for i in 4..60 {
                    let x = g.center(i, j);
                    let num = (s.eval([x[0] + h, x[1]], 0.0)[0] - s.eval([x[0] - h, x[1]], 0.0)[0])
                        / (2.0 * h)
                        + (s.eval([x[0], x[1] + h], 0.0)[1] - s.eval([x[0], x[1] - h], 0.0)[1])
                            / (2.0 * h);
                    worst = worst.max((num - s.divergence(x, 0.0)).abs());
                }
            }
            assert!(worst < 10.0 * h * h, "divergence mismatch {worst}");
        }
    }

    #[test]
    fn sampled_frames_interpolate_linearly_in_time() {
        let g = make_grid(1, &[8], &[0.0], &[0.125]).unwrap();
        let zero = ScalarField::zero(g, 0.0);
        let ones = ScalarField::from_fn(g, 1.0, |_| 2.0).unwrap();
        let frames = vec![
            SampledFrame {
                time: 0.0,
                components: vec![zero.clone()],
                divergence: zero.clone(),
            },
            SampledFrame {
                time: 1.0,
                components: vec![ones],
                divergence: zero,
            },
        ];
        let v = VectorFieldSpec::Sampled(frames);
        let got = v.eval([0.5, 0.0], 0.25)[0];
        assert!((got - 0.5).abs() < 1e-12, "got {got}");
    }

    #[test]
    fn rescaled_drift_identity_at_unit_kappa() {
        let base = VectorFieldSpec::Rotation(1.0);
        let (rk, alpha, beta) = rescale_drift(&base, 1.0, 2.0, 1.0, 2).unwrap();
        assert!((alpha - 3.0).abs() < 1e-15 && (beta - 4.0).abs() < 1e-15);
        let x = [0.3, -0.7];
        let a = base.eval(x, 0.5);
        let b = rk.eval(x, 0.5);
        assert_eq!(a, b);
    }
}
