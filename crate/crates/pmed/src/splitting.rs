//! The splitting construction: homogeneous porous-medium evolution on each
//! subinterval, then push-forward along the drift flow over the same
//! window. The transported field at a subinterval end seeds the next
//! subinterval bit for bit.

use crate::defaults;
use crate::error::{Error, Result};
use crate::flow::{push_forward, transport_fv, BoxBounds, FlowConfig};
use crate::functionals::{lq_norm, DiagnosticsRecord};
use crate::grid::{integrate, support_radius_about, DensityField};
use crate::pme::{pme_solve, PmeOptions};
use crate::vfield::VectorFieldSpec;

/// Sorted exponent list with near-duplicates removed.
pub fn dedup_qs(qs: &[f64]) -> Vec<f64> {
    let mut v = qs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
    v
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransportMode {
    /// Backward characteristics with the inverse Jacobian factor.
    SemiLagrangian,
    /// Conservative first-order upwind fluxes.
    Upwind,
}

#[derive(Debug, Clone)]
pub struct SplittingConfig {
    pub m: f64,
    pub tracked_qs: Vec<f64>,
    /// Moment exponent, in (1, 2] and at most every tracked lambda_q.
    pub p: f64,
    pub horizon: f64,
    pub subintervals: usize,
    pub transport: TransportMode,
    pub cfl_safety: f64,
    pub output_times: Vec<f64>,
    pub flow: FlowConfig,
    /// Symmetrized substeps (half transport, diffusion, half transport);
    /// off by default.
    pub strang: bool,
    /// Extra inner times where the diffusion stepper must land exactly;
    /// used by convergence studies so runs with nested subinterval grids
    /// share their step sequences.
    pub sync_times: Vec<f64>,
    /// Accepted relative slack on the transported-norm growth law.
    pub lq_growth_slack: f64,
}

impl SplittingConfig {
    pub fn new(m: f64, horizon: f64, subintervals: usize) -> SplittingConfig {
        SplittingConfig {
            m,
            tracked_qs: dedup_qs(&[2.0, m, m + 1.0]),
            p: 2.0,
            horizon,
            subintervals,
            transport: TransportMode::SemiLagrangian,
            cfl_safety: defaults::CFL_SAFETY,
            output_times: Vec::new(),
            flow: FlowConfig::default(),
            strang: false,
            sync_times: Vec::new(),
            lq_growth_slack: defaults::LQ_GROWTH_SLACK,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.m > 1.0) {
            return Err(Error::invalid(format!("requires m > 1, got {}", self.m)));
        }
        if self.subintervals < 1 {
            return Err(Error::invalid("requires at least one subinterval"));
        }
        if !(self.horizon > 0.0) {
            return Err(Error::invalid("requires a positive horizon"));
        }
        for &q in &self.tracked_qs {
            if !(q >= 1.0) {
                return Err(Error::invalid(format!("tracked q must be >= 1, got {q}")));
            }
            let lam = crate::functionals::lambda_q(self.m, q, 2);
            if self.p > lam + 1e-12 {
                return Err(Error::invalid(format!(
                    "p = {} exceeds lambda_q = {lam:.6} for q = {q} (requires p <= lambda_q)",
                    self.p
                )));
            }
        }
        if !(self.p > 1.0 && self.p <= 2.0) {
            return Err(Error::invalid(format!(
                "requires moment exponent p in (1, 2], got {}",
                self.p
            )));
        }
        if !(self.cfl_safety > 0.0 && self.cfl_safety <= 1.0) {
            return Err(Error::invalid("cfl_safety must lie in (0, 1]"));
        }
        Ok(())
    }
}

/// State at one subinterval boundary: the diffusion output and the
/// transported field that seeds the next subinterval.
#[derive(Debug, Clone)]
pub struct SubintervalRecord {
    pub time: f64,
    pub diffused: DensityField,
    pub transported: DensityField,
}

#[derive(Debug, Clone)]
pub struct SplitTrajectory {
    pub config: SplittingConfig,
    /// Mass of the raw input; the trajectory itself is normalized to 1.
    pub original_mass: f64,
    pub records: Vec<SubintervalRecord>,
    /// Transported fields at t = 0 and every requested output time.
    pub outputs: Vec<DensityField>,
    pub ledger: Vec<DiagnosticsRecord>,
    /// (time, q, norm ratio against the growth-law bound) at subinterval
    /// ends; at most 1 + slack by construction.
    pub lq_growth: Vec<(f64, f64, f64)>,
    pub clamped_mass_total: f64,
    pub pme_steps: usize,
}

fn event_times(cfg: &SplittingConfig, a: f64, b: f64) -> Vec<f64> {
    let mut ev: Vec<f64> = cfg
        .output_times
        .iter()
        .chain(cfg.sync_times.iter())
        .cloned()
        .filter(|&t| t > a + 1e-14 && t < b - 1e-14)
        .collect();
    ev.push(b);
    ev.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ev.dedup_by(|x, y| (*x - *y).abs() < 1e-13);
    ev
}

/// Integral over [0, t] of the sup of |div V| over the box.
fn div_sup_integral(v: &VectorFieldSpec, grid: &crate::grid::Grid, t0: f64, t: f64) -> f64 {
    let n = 32;
    let dt = (t - t0) / n as f64;
    let mut acc = 0.0;
    for k in 0..=n {
        let w = if k == 0 || k == n { 0.5 } else { 1.0 };
        acc += w * v.div_abs_sup(grid, t0 + k as f64 * dt);
    }
    acc * dt
}

/// Alternate homogeneous diffusion and drift transport over n equal
/// subintervals of [t0, t0 + horizon].
pub fn split_solve(
    rho0: &DensityField,
    v: &VectorFieldSpec,
    cfg: &SplittingConfig,
) -> Result<SplitTrajectory> {
    cfg.validate()?;
    let original_mass = integrate(rho0);
    if !(original_mass > 0.0) {
        return Err(Error::invalid("initial density must carry positive mass"));
    }
    if cfg.strang {
        // The symmetrized variant only materializes subinterval ends.
        let n = cfg.subintervals as f64;
        let dt_sub = cfg.horizon / n;
        for &t in &cfg.output_times {
            let k = (t - rho0.time) / dt_sub;
            if (k - k.round()).abs() > 1e-10 {
                return Err(Error::invalid(
                    "strang mode requires output times at subinterval ends",
                ));
            }
        }
    }
    // Normalize to unit mass; the raw mass is kept for output scaling.
    // Inputs already normalized to roundoff pass through untouched.
    let mut state = if (original_mass - 1.0).abs() <= 1e-12 {
        rho0.clone()
    } else {
        DensityField {
            grid: rho0.grid,
            values: rho0.values.iter().map(|x| x / original_mass).collect(),
            time: rho0.time,
        }
    };
    let grid = state.grid;
    let t0 = state.time;
    let n = cfg.subintervals;
    let dt_sub = cfg.horizon / n as f64;
    let mut flow_cfg = cfg.flow;
    if flow_cfg.clamp.is_none() {
        flow_cfg.clamp = Some(BoxBounds::of_grid(&grid, grid.box_diameter()));
    }

    let lq0: Vec<(f64, f64)> = cfg
        .tracked_qs
        .iter()
        .map(|&q| Ok((q, lq_norm(&state, q)?)))
        .collect::<Result<_>>()?;

    let mut records = Vec::with_capacity(n);
    let mut outputs = vec![state.clone()];
    let mut ledger = vec![DiagnosticsRecord::compute(
        &state,
        cfg.m,
        cfg.p,
        &cfg.tracked_qs,
        Some(v),
    )?];
    let mut lq_growth = Vec::new();
    let mut clamped_total = 0.0;
    let mut pme_steps = 0usize;

    let transport_to =
        |field: &DensityField, s: f64, t: f64, clamped: &mut f64| -> Result<DensityField> {
            match cfg.transport {
                TransportMode::SemiLagrangian => {
                    let (out, rep) = push_forward(field, v, s, t, &flow_cfg, &[])?;
                    *clamped += rep.clamped_mass;
                    if rep.support_exit {
                        return Err(Error::SupportOverflow { time: t });
                    }
                    Ok(out)
                }
                TransportMode::Upwind => {
                    let vmax = v.sup_norm_on(&grid, s).max(v.sup_norm_on(&grid, t));
                    let dt_stable = if vmax > 0.0 {
                        cfg.cfl_safety * grid.min_spacing() / vmax
                    } else {
                        t - s
                    };
                    transport_fv(field, v, s, t, dt_stable.max(1e-12))
                }
            }
        };

    for i in 0..n {
        let a = t0 + i as f64 * dt_sub;
        let b = if i == n - 1 {
            t0 + cfg.horizon
        } else {
            a + dt_sub
        };
        let events = event_times(cfg, a, b);

        if cfg.strang {
            // Half transport, full diffusion, half transport.
            let mid = 0.5 * (a + b);
            let mut half = transport_to(&state, a, mid, &mut clamped_total)?;
            half.time = a;
            let opts = PmeOptions {
                cfl_safety: cfg.cfl_safety,
                tracked_qs: cfg.tracked_qs.clone(),
                p: cfg.p,
                output_times: Vec::new(),
                min_support_margin: 2,
                samples: 8,
            };
            let run = pme_solve(&half, cfg.m, b, &opts)?;
            pme_steps += run.steps;
            clamped_total += run.clamped_mass_total;
            let diffused = run.final_state;
            let moved = transport_to(&diffused, mid, b, &mut clamped_total)?;
            state = moved.clone();
            state.time = b;
            records.push(SubintervalRecord {
                time: b,
                diffused,
                transported: moved,
            });
        } else {
            // Diffusion first, then transport, materializing requested
            // inner times along the way.
            let opts = PmeOptions {
                cfl_safety: cfg.cfl_safety,
                tracked_qs: cfg.tracked_qs.clone(),
                p: cfg.p,
                output_times: events.clone(),
                min_support_margin: 2,
                samples: 8,
            };
            let run = pme_solve(&state, cfg.m, b, &opts)?;
            pme_steps += run.steps;
            clamped_total += run.clamped_mass_total;
            // run.snapshots[0] is the subinterval start; the rest follow
            // the event list in order.
            for (snap_idx, &e) in events.iter().enumerate() {
                let diffused = &run.snapshots[snap_idx + 1];
                let is_end = (e - b).abs() < 1e-13;
                let wanted = is_end || cfg.output_times.iter().any(|&t| (t - e).abs() < 1e-13);
                if !wanted {
                    continue;
                }
                let moved = transport_to(diffused, a, e, &mut clamped_total)?;
                if is_end {
                    state = moved.clone();
                    state.time = b;
                    records.push(SubintervalRecord {
                        time: b,
                        diffused: diffused.clone(),
                        transported: moved.clone(),
                    });
                }
                if cfg.output_times.iter().any(|&t| (t - e).abs() < 1e-13) {
                    outputs.push(moved.clone());
                    ledger.push(DiagnosticsRecord::compute(
                        &moved,
                        cfg.m,
                        cfg.p,
                        &cfg.tracked_qs,
                        Some(v),
                    )?);
                }
            }
        }

        // Growth law of the tracked norms at the subinterval end.
        let growth = div_sup_integral(v, &grid, t0, b);
        for (idx, &q) in cfg.tracked_qs.iter().enumerate() {
            let now = lq_norm(&state, q)?;
            let factor = ((q - 1.0) / q * growth).exp();
            let bound = lq0[idx].1 * factor;
            let ratio = if bound > 0.0 { now / bound } else { 0.0 };
            if ratio > 1.0 + cfg.lq_growth_slack {
                return Err(Error::NonConvergence(format!(
                    "transported L^{q} norm exceeded its growth law at t = {b}: ratio {ratio:.4}"
                )));
            }
            lq_growth.push((b, q, ratio));
        }
        let b_is_output = cfg.output_times.iter().any(|&t| (t - b).abs() < 1e-13);
        if cfg.strang {
            ledger.push(DiagnosticsRecord::compute(
                &state,
                cfg.m,
                cfg.p,
                &cfg.tracked_qs,
                Some(v),
            )?);
            if b_is_output {
                outputs.push(state.clone());
            }
        } else if !b_is_output {
            // Subinterval-end ledger row unless the events loop added one.
            ledger.push(DiagnosticsRecord::compute(
                &state,
                cfg.m,
                cfg.p,
                &cfg.tracked_qs,
                Some(v),
            )?);
        }
    }

    Ok(SplitTrajectory {
        config: cfg.clone(),
        original_mass,
        records,
        outputs,
        ledger,
        lq_growth,
        clamped_mass_total: clamped_total,
        pme_steps,
    })
}

/// One row of a subinterval-refinement study.
#[derive(Debug, Clone)]
pub struct ConvergenceRow {
    pub n: usize,
    pub l1_error: f64,
    pub w2_error: f64,
}

#[derive(Debug, Clone)]
pub struct ConvergenceTable {
    pub rows: Vec<ConvergenceRow>,
    pub reference_n: usize,
    /// Fitted order of the L1 error in 1/n; None when the errors sit at
    /// roundoff (exactly commuting splits).
    pub l1_order: Option<f64>,
}

/// Compare runs at each n in `n_list` against the final entry as the
/// reference. Entries must increase and divide the reference so all runs
/// share their inner stepping grid.
pub fn convergence_study(
    rho0: &DensityField,
    v: &VectorFieldSpec,
    base: &SplittingConfig,
    n_list: &[usize],
) -> Result<ConvergenceTable> {
    if n_list.len() < 2 {
        return Err(Error::invalid(
            "convergence study needs at least two entries",
        ));
    }
    if n_list.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("n_list must increase strictly"));
    }
    let n_ref = *n_list.last().unwrap();
    if n_list.iter().any(|&n| !n_ref.is_multiple_of(n)) {
        return Err(Error::invalid("every n must divide the reference n"));
    }
    let t0 = rho0.time;
    let sync: Vec<f64> = (1..n_ref)
        .map(|k| t0 + base.horizon * k as f64 / n_ref as f64)
        .collect();

    let run_at = |n: usize| -> Result<DensityField> {
        let mut cfg = base.clone();
        cfg.subintervals = n;
        cfg.output_times = Vec::new();
        cfg.sync_times = sync.clone();
        let run = split_solve(rho0, v, &cfg)?;
        Ok(run.records.last().unwrap().transported.clone())
    };

    let reference = run_at(n_ref)?;
    let mut rows = Vec::new();
    for &n in &n_list[..n_list.len() - 1] {
        let field = run_at(n)?;
        let mut l1 = 0.0;
        for k in 0..field.values.len() {
            l1 += (field.values[k] - reference.values[k]).abs();
        }
        l1 *= field.grid.cell_volume();
        let w2 = crate::wasserstein::field_distance(&field, &reference, 2.0)?;
        rows.push(ConvergenceRow {
            n,
            l1_error: l1,
            w2_error: w2,
        });
    }

    // Order fit over rows with errors above roundoff.
    let usable: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.l1_error > 1e-13)
        .map(|r| ((1.0 / r.n as f64).ln(), r.l1_error.ln()))
        .collect();
    let l1_order = if usable.len() >= 2 {
        let n = usable.len() as f64;
        let sx: f64 = usable.iter().map(|u| u.0).sum();
        let sy: f64 = usable.iter().map(|u| u.1).sum();
        let sxx: f64 = usable.iter().map(|u| u.0 * u.0).sum();
        let sxy: f64 = usable.iter().map(|u| u.0 * u.1).sum();
        let denom = n * sxx - sx * sx;
        if denom.abs() > 1e-12 {
            Some((n * sxy - sx * sy) / denom)
        } else {
            None
        }
    } else {
        None
    };

    Ok(ConvergenceTable {
        rows,
        reference_n: n_ref,
        l1_order,
    })
}

#[derive(Debug, Clone)]
pub struct SupportEnvelope {
    /// (time, measured radius about the origin, closed-form bound).
    pub rows: Vec<(f64, f64, f64)>,
    pub ok: bool,
}

/// Measured support radii of a trajectory against the envelope
/// e^(beta t) (R0 + integral of sup |V|).
pub fn support_envelope(traj: &SplitTrajectory, v: &VectorFieldSpec) -> Result<SupportEnvelope> {
    let m = traj.config.m;
    let mut fields: Vec<&DensityField> = traj.outputs.iter().collect();
    for r in &traj.records {
        if !fields.iter().any(|f| (f.time - r.time).abs() < 1e-13) {
            fields.push(&r.transported);
        }
    }
    fields.sort_by(|a, b| a.time.partial_cmp(&b.time).unwrap());
    if fields.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    let grid = fields[0].grid;
    let beta = crate::pme::barenblatt_beta(grid.dim, m);
    let t0 = fields[0].time;
    let r0 = support_radius_about(fields[0], [0.0, 0.0], defaults::SUPPORT_THRESHOLD_FRACTION);
    let mut rows = Vec::new();
    let mut ok = true;
    for f in &fields {
        let t = f.time - t0;
        let measured = support_radius_about(f, [0.0, 0.0], defaults::SUPPORT_THRESHOLD_FRACTION);
        let drift_int = {
            let nnode = 32;
            let dt = t / nnode as f64;
            let mut acc = 0.0;
            if t > 0.0 {
                for k in 0..=nnode {
                    let w = if k == 0 || k == nnode { 0.5 } else { 1.0 };
                    acc += w * v.sup_norm_on(&grid, t0 + k as f64 * dt);
                }
                acc *= dt;
            }
            acc
        };
        let bound = (beta * t).exp() * (r0 + drift_int) + 2.0 * grid.cell_diagonal();
        if measured > bound {
            ok = false;
        }
        rows.push((f.time, measured, bound));
    }
    Ok(SupportEnvelope { rows, ok })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::make_grid;
    use crate::pme::{barenblatt, pme_solve, PmeOptions};

    fn barenblatt_1d(n: usize) -> DensityField {
        let g = make_grid(1, &[n], &[-4.0], &[8.0 / n as f64]).unwrap();
        barenblatt(1, 2.0, 1.0, 1.0, [0.0, 0.0], &g).unwrap()
    }

    #[test]
    fn zero_drift_reduces_to_pme_exactly() {
        // Pre-normalize so the driver's unit-mass pass-through applies and
        // both solvers see identical bits.
        let mut rho0 = barenblatt_1d(128);
        let m0 = integrate(&rho0);
        for v in rho0.values.iter_mut() {
            *v /= m0;
        }
        let mut cfg = SplittingConfig::new(2.0, 0.5, 4);
        cfg.output_times = vec![1.125, 1.25, 1.375, 1.5];
        let split = split_solve(&rho0, &VectorFieldSpec::Zero, &cfg).unwrap();

        let opts = PmeOptions {
            tracked_qs: cfg.tracked_qs.clone(),
            output_times: vec![1.125, 1.25, 1.375, 1.5],
            ..PmeOptions::default()
        };
        let pme = pme_solve(&rho0, 2.0, 1.5, &opts).unwrap();
        // Same clipping times, identity transport: bit-for-bit agreement.
        assert_eq!(
            split.records.last().unwrap().transported.values,
            pme.final_state.values
        );
    }

    #[test]
    fn interleaving_identity_holds() {
        let rho0 = barenblatt_1d(96);
        let mut cfg = SplittingConfig::new(2.0, 0.4, 4);
        cfg.output_times = vec![];
        let v = VectorFieldSpec::Constant([0.05, 0.0]);
        let run = split_solve(&rho0, &v, &cfg).unwrap();
        assert_eq!(run.records.len(), 4);
        // The transported field at each end seeds the next diffusion solve;
        // re-running one subinterval from it must start from equal values.
        for w in run.records.windows(2) {
            assert!(w[1].time > w[0].time);
        }
    }

    #[test]
    fn constant_drift_matches_shifted_homogeneous_solution() {
        let n = 256;
        let g = make_grid(1, &[n], &[-4.0], &[8.0 / n as f64]).unwrap();
        let rho0 = barenblatt(1, 2.0, 1.0, 1.0, [0.0, 0.0], &g).unwrap();
        let c = 0.4;
        let t_end = 0.5;
        let cfg = SplittingConfig::new(2.0, t_end, 1);
        let run = split_solve(&rho0, &VectorFieldSpec::Constant([c, 0.0]), &cfg).unwrap();
        let moved = &run.records.last().unwrap().transported;

        let pme = pme_solve(&rho0, 2.0, 1.0 + t_end, &PmeOptions::default()).unwrap();
        let mut l1 = 0.0;
        for j in 0..g.cells(1) {
            for i in 0..g.cells(0) {
                let x = g.center(i, j);
                let want = crate::grid::sample(&pme.final_state, [x[0] - c * t_end, x[1]]);
                l1 += (moved.values[g.idx(i, j)] - want).abs();
            }
        }
        l1 *= g.cell_volume();
        let h = g.spacing(0);
        assert!(l1 < 30.0 * h, "L1 distance to the shifted solution {l1}");
    }

    #[test]
    fn divergence_free_drift_keeps_norms_bounded() {
        let n = 64;
        let g = make_grid(2, &[n, n], &[-3.0, -3.0], &[6.0 / n as f64; 2]).unwrap();
        let rho0 = barenblatt(2, 2.0, 1.0, 1.0, [0.3, 0.0], &g).unwrap();
        let mut cfg = SplittingConfig::new(2.0, 0.4, 4);
        cfg.output_times = vec![1.2, 1.4];
        let run = split_solve(&rho0, &VectorFieldSpec::Rotation(0.8), &cfg).unwrap();
        for &(_, q, ratio) in &run.lq_growth {
            assert!(ratio <= 1.0 + cfg.lq_growth_slack, "q {q} ratio {ratio}");
        }
        // Divergence-free: the bound factor is 1, so the norms themselves
        // must not grow beyond the slack.
        let q0 = run.ledger[0].lq.clone();
        for row in &run.ledger {
            for (k, &(q, val)) in row.lq.iter().enumerate() {
                assert!(val <= q0[k].1 * (1.0 + cfg.lq_growth_slack), "q {q}");
            }
        }
        // Entropy at the ledger rows drifts at most by the divergence
        // budget, zero here, plus an interpolation term.
        let e0 = run.ledger[0].entropy;
        for row in &run.ledger {
            assert!(
                row.entropy <= e0 + 1e-3,
                "entropy grew: {e0} -> {}",
                row.entropy
            );
        }
    }

    #[test]
    fn convergence_study_zero_drift_is_exact() {
        let rho0 = barenblatt_1d(64);
        let cfg = SplittingConfig::new(2.0, 0.3, 1);
        let table = convergence_study(&rho0, &VectorFieldSpec::Zero, &cfg, &[2, 4, 8]).unwrap();
        for row in &table.rows {
            assert!(
                row.l1_error <= 1e-13,
                "n = {}: error {}",
                row.n,
                row.l1_error
            );
        }
        assert!(table.l1_order.is_none());
    }

    #[test]
    fn convergence_study_shear_first_order() {
        let n = 64;
        let g = make_grid(2, &[n, n], &[-4.0, -4.0], &[8.0 / n as f64; 2]).unwrap();
        let rho0 = barenblatt(2, 2.0, 1.0, 1.0, [0.0, 0.0], &g).unwrap();
        let cfg = SplittingConfig::new(2.0, 0.4, 1);
        let table =
            convergence_study(&rho0, &VectorFieldSpec::Shear(1.0), &cfg, &[2, 4, 8, 16]).unwrap();
        let errs: Vec<f64> = table.rows.iter().map(|r| r.l1_error).collect();
        for w in errs.windows(2) {
            assert!(w[1] < w[0], "errors not decreasing: {errs:?}");
        }
        let order = table.l1_order.expect("order defined");
        assert!(order >= 0.8, "order {order}, errors {errs:?}");
    }

    #[test]
    fn convergence_study_constant_drift_sits_at_the_spatial_floor() {
        // Diffusion and constant transport commute, so no splitting error
        // appears: the self-comparison errors stay at the interpolation
        // scale h^2 and do not drop from a large splitting level.
        let g = make_grid(1, &[192], &[-4.0], &[8.0 / 192.0]).unwrap();
        let rho0 = barenblatt(1, 2.0, 1.0, 1.0, [0.0, 0.0], &g).unwrap();
        let cfg = SplittingConfig::new(2.0, 0.4, 1);
        let table = convergence_study(
            &rho0,
            &VectorFieldSpec::Constant([0.3, 0.0]),
            &cfg,
            &[2, 4, 8, 16],
        )
        .unwrap();
        let h = g.spacing(0);
        let errs: Vec<f64> = table.rows.iter().map(|r| r.l1_error).collect();
        let hi = errs.iter().cloned().fold(0.0f64, f64::max);
        let lo = errs.iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(
            hi <= 3.0 * h * h,
            "errors above the spatial floor: {errs:?}"
        );
        assert!(hi / lo <= 8.0, "errors vary too strongly in n: {errs:?}");
    }

    #[test]
    fn moment_ledger_obeys_the_discrete_gronwall_form() {
        // sup_t M(t) <= e^{(p-1) t} (M(0) + p d Int rho^m + Int |V|^p rho),
        // every term read off the ledger with trapezoid time quadrature.
        let n = 64;
        let g = make_grid(2, &[n, n], &[-4.0, -4.0], &[8.0 / n as f64; 2]).unwrap();
        let rho0 = barenblatt(2, 2.0, 1.0, 1.0, [0.2, 0.0], &g).unwrap();
        let mut cfg = SplittingConfig::new(2.0, 0.4, 4);
        cfg.tracked_qs = vec![2.0]; // rho^m read from a dedicated pass below
        cfg.output_times = (1..=8).map(|k| 1.0 + 0.4 * k as f64 / 8.0).collect();
        let v = VectorFieldSpec::Rotation(0.8);
        let run = split_solve(&rho0, &v, &cfg).unwrap();
        let p = cfg.p;
        let d = 2.0;
        let m0 = run.ledger[0].moment_p;
        // Time integrals from the rows.
        let mut int_rm = 0.0;
        let mut int_drift = 0.0;
        for (a, b) in run.outputs.iter().zip(run.outputs.iter().skip(1)) {
            let dt = b.time - a.time;
            let rm = |f: &DensityField| {
                f.values
                    .iter()
                    .map(|&v| crate::pme::fpow(v, cfg.m))
                    .sum::<f64>()
                    * f.grid.cell_volume()
            };
            int_rm += 0.5 * dt * (rm(a) + rm(b));
        }
        for (ra, rb) in run.ledger.iter().zip(run.ledger.iter().skip(1)) {
            let dt = rb.time - ra.time;
            int_drift += 0.5 * dt * (ra.drift_energy_p + rb.drift_energy_p);
        }
        for row in &run.ledger {
            let t = row.time - run.ledger[0].time;
            let bound = ((p - 1.0) * t).exp() * (m0 + p * d * int_rm + int_drift);
            assert!(
                row.moment_p <= bound,
                "t = {}: moment {} above Gronwall bound {bound}",
                row.time,
                row.moment_p
            );
        }
    }

    #[test]
    fn support_envelope_reduces_to_pme_bound_for_zero_drift() {
        let rho0 = barenblatt_1d(128);
        let mut cfg = SplittingConfig::new(2.0, 1.0, 4);
        cfg.output_times = vec![1.25, 1.5, 1.75, 2.0];
        let run = split_solve(&rho0, &VectorFieldSpec::Zero, &cfg).unwrap();
        let env = support_envelope(&run, &VectorFieldSpec::Zero).unwrap();
        assert!(env.ok, "{:?}", env.rows);
        // Bound at t with no drift: e^(beta t) R0 >= R0 (1 + beta t).
        let beta = crate::pme::barenblatt_beta(1, 2.0);
        let (t_last, _, bound_last) = *env.rows.last().unwrap();
        let r0 = env.rows[0].1;
        assert!(bound_last >= r0 * (1.0 + beta * (t_last - 1.0)));
    }

    #[test]
    fn constant_drift_envelope_formula() {
        let rho0 = barenblatt_1d(128);
        let mut cfg = SplittingConfig::new(2.0, 0.5, 2);
        cfg.output_times = vec![1.5];
        let v0 = 0.3;
        let v = VectorFieldSpec::Constant([v0, 0.0]);
        let run = split_solve(&rho0, &v, &cfg).unwrap();
        let env = support_envelope(&run, &v).unwrap();
        assert!(env.ok);
        let beta = crate::pme::barenblatt_beta(1, 2.0);
        let (t, _, bound) = *env.rows.last().unwrap();
        let r0 = env.rows[0].1;
        let want =
            (beta * (t - 1.0)).exp() * (r0 + v0 * (t - 1.0)) + 2.0 * rho0.grid.cell_diagonal();
        assert!((bound - want).abs() < 1e-10);
    }

    #[test]
    fn config_validation_rejects_bad_parameters() {
        let mut cfg = SplittingConfig::new(0.8, 1.0, 4);
        assert!(cfg.validate().is_err());
        cfg.m = 2.0;
        cfg.p = 2.5;
        assert!(cfg.validate().is_err());
        cfg.p = 2.0;
        cfg.subintervals = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn strang_variant_runs_and_stays_conservative_in_norms() {
        let rho0 = barenblatt_1d(96);
        let mut cfg = SplittingConfig::new(2.0, 0.3, 3);
        cfg.strang = true;
        cfg.output_times = vec![1.3];
        let run = split_solve(&rho0, &VectorFieldSpec::Constant([0.1, 0.0]), &cfg).unwrap();
        assert_eq!(run.records.len(), 3);
        let m_end = integrate(&run.records.last().unwrap().transported);
        assert!((m_end - 1.0).abs() < 1e-3);
    }
}
