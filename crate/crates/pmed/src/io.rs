//! Run configuration text, binary snapshots, and CSV diagnostics.
//!
//! Snapshots are a minimal little-endian container (magic "PMED") with a
//! bit-exact round trip. Configs are line-oriented `key = value` text with
//! `#` comments; parsing reports the offending line on error, and the
//! canonical echo of a parsed config reproduces the run exactly.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::flow::FlowConfig;
use crate::functionals::DiagnosticsRecord;
use crate::grid::{make_grid, DensityField, Grid, ScalarField};
use crate::keller_segel::FreeEnergyRow;
use crate::pme::barenblatt;
use crate::splitting::{SplittingConfig, TransportMode};
use crate::vfield::{GaussianPotential, VectorFieldSpec};

pub const SNAPSHOT_MAGIC: [u8; 4] = *b"PMED";
pub const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldKind {
    Density,
    Scalar,
}

/// Write a field (values, grid geometry, time stamp) as a binary snapshot.
pub fn write_snapshot_raw(
    path: &Path,
    kind: FieldKind,
    grid: &Grid,
    values: &[f64],
    time: f64,
) -> Result<()> {
    let mut buf: Vec<u8> = Vec::with_capacity(64 + 8 * values.len());
    buf.extend_from_slice(&SNAPSHOT_MAGIC);
    buf.extend_from_slice(&SNAPSHOT_VERSION.to_le_bytes());
    buf.push(match kind {
        FieldKind::Density => 0,
        FieldKind::Scalar => 1,
    });
    buf.push(grid.dim as u8);
    for a in 0..grid.dim {
        buf.extend_from_slice(&(grid.cells(a) as u64).to_le_bytes());
    }
    for a in 0..grid.dim {
        buf.extend_from_slice(&grid.origin(a).to_le_bytes());
    }
    for a in 0..grid.dim {
        buf.extend_from_slice(&grid.spacing(a).to_le_bytes());
    }
    buf.extend_from_slice(&time.to_le_bytes());
    buf.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut file = std::fs::File::create(path)?;
    file.write_all(&buf)?;
    Ok(())
}

pub fn write_snapshot(field: &DensityField, path: &Path) -> Result<()> {
    write_snapshot_raw(
        path,
        FieldKind::Density,
        &field.grid,
        &field.values,
        field.time,
    )
}

pub fn write_snapshot_scalar(field: &ScalarField, path: &Path) -> Result<()> {
    write_snapshot_raw(
        path,
        FieldKind::Scalar,
        &field.grid,
        &field.values,
        field.time,
    )
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub kind: FieldKind,
    pub grid: Grid,
    pub values: Vec<f64>,
    pub time: f64,
}

struct Cursor<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(Error::Snapshot(format!(
                "truncated at byte offset {} (needed {} more)",
                self.pos, n
            )));
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
}

pub fn read_snapshot(path: &Path) -> Result<Snapshot> {
    let mut data = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut data)?;
    let mut cur = Cursor {
        data: &data,
        pos: 0,
    };
    let magic = cur.take(4)?;
    if magic != SNAPSHOT_MAGIC {
        return Err(Error::Snapshot(
            "bad magic at byte offset 0 (expected \"PMED\")".into(),
        ));
    }
    let version = cur.u32()?;
    if version != SNAPSHOT_VERSION {
        return Err(Error::Snapshot(format!(
            "unsupported version {version} (this build reads {SNAPSHOT_VERSION})"
        )));
    }
    let kind = match cur.u8()? {
        0 => FieldKind::Density,
        1 => FieldKind::Scalar,
        other => return Err(Error::Snapshot(format!("unknown field kind {other}"))),
    };
    let dim = cur.u8()? as usize;
    if !(dim == 1 || dim == 2) {
        return Err(Error::Snapshot(format!("unsupported dimension {dim}")));
    }
    let mut cells = Vec::with_capacity(dim);
    for _ in 0..dim {
        cells.push(cur.u64()? as usize);
    }
    let mut origin = Vec::with_capacity(dim);
    for _ in 0..dim {
        origin.push(cur.f64()?);
    }
    let mut spacing = Vec::with_capacity(dim);
    for _ in 0..dim {
        spacing.push(cur.f64()?);
    }
    let time = cur.f64()?;
    let count = cur.u64()? as usize;
    let grid = make_grid(dim, &cells, &origin, &spacing)
        .map_err(|e| Error::Snapshot(format!("bad geometry: {e}")))?;
    if count != grid.total_cells() {
        return Err(Error::Snapshot(format!(
            "value count {count} does not match the {} grid cells",
            grid.total_cells()
        )));
    }
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        values.push(cur.f64()?);
    }
    if cur.pos != data.len() {
        return Err(Error::Snapshot(format!(
            "{} trailing bytes after the value block",
            data.len() - cur.pos
        )));
    }
    Ok(Snapshot {
        kind,
        grid,
        values,
        time,
    })
}

pub fn snapshot_to_density(s: &Snapshot) -> Result<DensityField> {
    if s.kind != FieldKind::Density {
        return Err(Error::Snapshot("snapshot holds a scalar field".into()));
    }
    DensityField::new(s.grid, s.values.clone(), s.time)
}

/// Round-trippable float formatting: 17 significant digits.
pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn csv_header(tracked_qs: &[f64], with_free_energy: bool) -> String {
    let mut cols = vec![
        "time".to_string(),
        "mass".to_string(),
        "entropy".to_string(),
        "abs_entropy".to_string(),
        "moment_p".to_string(),
        "speed_p".to_string(),
        "drift_energy_p".to_string(),
        "support_radius".to_string(),
    ];
    for q in tracked_qs {
        cols.push(format!("lq_{q}"));
    }
    for q in tracked_qs {
        cols.push(format!("diss_{q}"));
    }
    if with_free_energy {
        cols.push("free_energy".to_string());
    }
    cols.join(",")
}

/// CSV with a fixed header and `#`-prefixed config echo lines.
pub fn write_diagnostics(
    ledger: &[DiagnosticsRecord],
    tracked_qs: &[f64],
    echo: &str,
    path: &Path,
) -> Result<()> {
    if ledger.is_empty() {
        return Err(Error::invalid("refusing to write an empty ledger"));
    }
    let mut out = String::new();
    for line in echo.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    let with_fe = ledger.iter().any(|r| r.free_energy.is_some());
    out.push_str(&csv_header(tracked_qs, with_fe));
    out.push('\n');
    for row in ledger {
        let mut cells = vec![
            fmt_f64(row.time),
            fmt_f64(row.mass),
            fmt_f64(row.entropy),
            fmt_f64(row.abs_entropy),
            fmt_f64(row.moment_p),
            fmt_f64(row.speed_p),
            fmt_f64(row.drift_energy_p),
            fmt_f64(row.support_radius),
        ];
        for &q in tracked_qs {
            let v = row
                .lq
                .iter()
                .find(|(qq, _)| (qq - q).abs() < 1e-12)
                .map(|p| p.1)
                .unwrap_or(f64::NAN);
            cells.push(fmt_f64(v));
        }
        for &q in tracked_qs {
            let v = row
                .dissipation
                .iter()
                .find(|(qq, _)| (qq - q).abs() < 1e-12)
                .map(|p| p.1)
                .unwrap_or(f64::NAN);
            cells.push(fmt_f64(v));
        }
        if with_fe {
            cells.push(fmt_f64(row.free_energy.unwrap_or(f64::NAN)));
        }
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    std::fs::write(path, out)?;
    Ok(())
}

/// CSV of the chemotaxis free-energy ledger.
pub fn write_free_energy(rows: &[FreeEnergyRow], echo: &str, path: &Path) -> Result<()> {
    if rows.is_empty() {
        return Err(Error::invalid("refusing to write an empty ledger"));
    }
    let mut out = String::new();
    for line in echo.lines() {
        out.push_str("# ");
        out.push_str(line);
        out.push('\n');
    }
    out.push_str("time,entropy,field_energy,free_energy,dissipation,residual\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            fmt_f64(r.time),
            fmt_f64(r.entropy),
            fmt_f64(r.field_energy),
            fmt_f64(r.free_energy),
            fmt_f64(r.dissipation),
            r.residual.map(fmt_f64).unwrap_or_default(),
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialPreset {
    /// Self-similar profile at internal time t0 with the given mass.
    Barenblatt {
        t0: f64,
        mass: f64,
    },
    Gaussian {
        sigma: f64,
        mass: f64,
    },
    Indicator {
        radius: f64,
        mass: f64,
    },
    FromFile(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum DriftPreset {
    Zero,
    Constant([f64; 2]),
    Rotation(f64),
    Linear([[f64; 2]; 2]),
    Shear(f64),
    GradientGaussian {
        amplitude: f64,
        sigma: f64,
        center: [f64; 2],
    },
}

impl DriftPreset {
    pub fn to_field(&self) -> VectorFieldSpec {
        match self {
            DriftPreset::Zero => VectorFieldSpec::Zero,
            DriftPreset::Constant(c) => VectorFieldSpec::Constant(*c),
            DriftPreset::Rotation(w) => VectorFieldSpec::Rotation(*w),
            DriftPreset::Linear(a) => VectorFieldSpec::Linear(*a),
            DriftPreset::Shear(a) => VectorFieldSpec::Shear(*a),
            DriftPreset::GradientGaussian {
                amplitude,
                sigma,
                center,
            } => VectorFieldSpec::GradientOf(GaussianPotential {
                amplitude: *amplitude,
                sigma: *sigma,
                center: *center,
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChemicalPreset {
    Zero,
    Gaussian { amplitude: f64, sigma: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub grid: Grid,
    pub m: f64,
    pub q_list: Vec<f64>,
    pub p: f64,
    pub horizon: f64,
    pub subintervals: usize,
    pub transport: TransportMode,
    pub cfl_safety: f64,
    pub strang: bool,
    pub ode_substeps: usize,
    pub initial: InitialPreset,
    pub initial_center: [f64; 2],
    pub drift: DriftPreset,
    pub c_initial: ChemicalPreset,
    pub output_dir: String,
    pub output_times: Vec<f64>,
    pub seed: u64,
}

impl RunConfig {
    pub fn splitting_config(&self) -> SplittingConfig {
        SplittingConfig {
            m: self.m,
            tracked_qs: self.q_list.clone(),
            p: self.p,
            horizon: self.horizon,
            subintervals: self.subintervals,
            transport: self.transport,
            cfl_safety: self.cfl_safety,
            output_times: self.output_times.clone(),
            flow: FlowConfig {
                substeps: self.ode_substeps,
                clamp: None,
            },
            strang: self.strang,
            sync_times: Vec::new(),
            lq_growth_slack: crate::defaults::LQ_GROWTH_SLACK,
        }
    }

    /// Initial density on the configured grid.
    pub fn build_initial(&self) -> Result<DensityField> {
        match &self.initial {
            InitialPreset::Barenblatt { t0, mass } => barenblatt(
                self.grid.dim,
                self.m,
                *t0,
                *mass,
                self.initial_center,
                &self.grid,
            ),
            InitialPreset::Gaussian { sigma, mass } => {
                let s2 = sigma * sigma;
                let c = self.initial_center;
                let dim = self.grid.dim;
                let f = DensityField::from_fn(self.grid, 0.0, |x| {
                    let dx = x[0] - c[0];
                    let dy = if dim == 2 { x[1] - c[1] } else { 0.0 };
                    (-(dx * dx + dy * dy) / (2.0 * s2)).exp()
                })?;
                let total = crate::grid::integrate(&f);
                DensityField::new(
                    self.grid,
                    f.values.iter().map(|v| v * mass / total).collect(),
                    0.0,
                )
            }
            InitialPreset::Indicator { radius, mass } => {
                let c = self.initial_center;
                let dim = self.grid.dim;
                let f = DensityField::from_fn(self.grid, 0.0, |x| {
                    let dx = x[0] - c[0];
                    let dy = if dim == 2 { x[1] - c[1] } else { 0.0 };
                    if dx * dx + dy * dy <= radius * radius {
                        1.0
                    } else {
                        0.0
                    }
                })?;
                let total = crate::grid::integrate(&f);
                if total <= 0.0 {
                    return Err(Error::invalid("indicator preset misses every cell"));
                }
                DensityField::new(
                    self.grid,
                    f.values.iter().map(|v| v * mass / total).collect(),
                    0.0,
                )
            }
            InitialPreset::FromFile(path) => {
                let snap = read_snapshot(Path::new(path))?;
                snapshot_to_density(&snap)
            }
        }
    }

    pub fn build_chemical(&self) -> Result<ScalarField> {
        match &self.c_initial {
            ChemicalPreset::Zero => Ok(ScalarField::zero(self.grid, 0.0)),
            ChemicalPreset::Gaussian { amplitude, sigma } => {
                let s2 = sigma * sigma;
                let c = self.initial_center;
                let dim = self.grid.dim;
                ScalarField::from_fn(self.grid, 0.0, |x| {
                    let dx = x[0] - c[0];
                    let dy = if dim == 2 { x[1] - c[1] } else { 0.0 };
                    amplitude * (-(dx * dx + dy * dy) / (2.0 * s2)).exp()
                })
            }
        }
    }

    /// Canonical text form; parsing it back yields an equal config.
    pub fn to_text(&self) -> String {
        let join = |v: &[f64]| v.iter().map(|x| fmt_f64(*x)).collect::<Vec<_>>().join(" ");
        let mut s = String::new();
        s.push_str(&format!("dim = {}\n", self.grid.dim));
        let cells: Vec<String> = (0..self.grid.dim)
            .map(|a| self.grid.cells(a).to_string())
            .collect();
        s.push_str(&format!("cells = {}\n", cells.join(" ")));
        let origin: Vec<f64> = (0..self.grid.dim).map(|a| self.grid.origin(a)).collect();
        s.push_str(&format!("origin = {}\n", join(&origin)));
        let spacing: Vec<f64> = (0..self.grid.dim).map(|a| self.grid.spacing(a)).collect();
        s.push_str(&format!("spacing = {}\n", join(&spacing)));
        s.push_str(&format!("m = {}\n", fmt_f64(self.m)));
        s.push_str(&format!("q_list = {}\n", join(&self.q_list)));
        s.push_str(&format!("p = {}\n", fmt_f64(self.p)));
        s.push_str(&format!("horizon = {}\n", fmt_f64(self.horizon)));
        s.push_str(&format!("subintervals = {}\n", self.subintervals));
        s.push_str(&format!(
            "transport = {}\n",
            match self.transport {
                TransportMode::SemiLagrangian => "semi_lagrangian",
                TransportMode::Upwind => "upwind",
            }
        ));
        s.push_str(&format!("cfl_safety = {}\n", fmt_f64(self.cfl_safety)));
        s.push_str(&format!("strang = {}\n", self.strang));
        s.push_str(&format!("ode_substeps = {}\n", self.ode_substeps));
        s.push_str(&format!(
            "initial = {}\n",
            match &self.initial {
                InitialPreset::Barenblatt { t0, mass } =>
                    format!("barenblatt {} {}", fmt_f64(*t0), fmt_f64(*mass)),
                InitialPreset::Gaussian { sigma, mass } =>
                    format!("gaussian {} {}", fmt_f64(*sigma), fmt_f64(*mass)),
                InitialPreset::Indicator { radius, mass } =>
                    format!("indicator {} {}", fmt_f64(*radius), fmt_f64(*mass)),
                InitialPreset::FromFile(p) => format!("from_file {p}"),
            }
        ));
        s.push_str(&format!(
            "initial_center = {}\n",
            join(&self.initial_center[..self.grid.dim])
        ));
        s.push_str(&format!(
            "drift = {}\n",
            match &self.drift {
                DriftPreset::Zero => "zero".to_string(),
                DriftPreset::Constant(c) => format!("constant {}", join(&c[..self.grid.dim])),
                DriftPreset::Rotation(w) => format!("rotation {}", fmt_f64(*w)),
                DriftPreset::Linear(a) => format!(
                    "linear {} {} {} {}",
                    fmt_f64(a[0][0]),
                    fmt_f64(a[0][1]),
                    fmt_f64(a[1][0]),
                    fmt_f64(a[1][1])
                ),
                DriftPreset::Shear(a) => format!("shear {}", fmt_f64(*a)),
                DriftPreset::GradientGaussian {
                    amplitude,
                    sigma,
                    center,
                } => format!(
                    "gradient_gaussian {} {} {}",
                    fmt_f64(*amplitude),
                    fmt_f64(*sigma),
                    join(&center[..self.grid.dim])
                ),
            }
        ));
        s.push_str(&format!(
            "c_initial = {}\n",
            match &self.c_initial {
                ChemicalPreset::Zero => "zero".to_string(),
                ChemicalPreset::Gaussian { amplitude, sigma } =>
                    format!("gaussian {} {}", fmt_f64(*amplitude), fmt_f64(*sigma)),
            }
        ));
        s.push_str(&format!("output_dir = {}\n", self.output_dir));
        s.push_str(&format!("output_times = {}\n", join(&self.output_times)));
        s.push_str(&format!("seed = {}\n", self.seed));
        s
    }
}

fn parse_f64(tok: &str, line: usize, what: &str) -> Result<f64> {
    tok.parse::<f64>().map_err(|_| Error::Config {
        line,
        msg: format!("{what}: expected a number, got `{tok}`"),
    })
}

fn parse_usize(tok: &str, line: usize, what: &str) -> Result<usize> {
    tok.parse::<usize>().map_err(|_| Error::Config {
        line,
        msg: format!("{what}: expected an integer, got `{tok}`"),
    })
}

/// Parse and validate run configuration text. Every violated hypothesis
/// is reported with its inequality and the offending line.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut dim: Option<(usize, usize)> = None; // (value, line)
    let mut cells: Option<(Vec<usize>, usize)> = None;
    let mut origin: Option<(Vec<f64>, usize)> = None;
    let mut spacing: Option<(Vec<f64>, usize)> = None;
    let mut m: Option<(f64, usize)> = None;
    let mut q_list: Vec<f64> = vec![2.0];
    let mut p: (f64, usize) = (2.0, 0);
    let mut horizon: Option<(f64, usize)> = None;
    let mut subintervals: (usize, usize) = (8, 0);
    let mut transport = TransportMode::SemiLagrangian;
    let mut cfl_safety: (f64, usize) = (crate::defaults::CFL_SAFETY, 0);
    let mut strang = false;
    let mut ode_substeps: usize = crate::defaults::ODE_SUBSTEPS;
    let mut initial: Option<(InitialPreset, usize)> = None;
    let mut initial_center = [0.0f64; 2];
    let mut drift = DriftPreset::Zero;
    let mut c_initial = ChemicalPreset::Zero;
    let mut output_dir = "out".to_string();
    let mut output_times: Vec<f64> = Vec::new();
    let mut seed: u64 = 0;

    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let stripped = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        };
        let trimmed = stripped.trim();
        if trimmed.is_empty() {
            continue;
        }
        let (key, value) = match trimmed.split_once('=') {
            Some((k, v)) => (k.trim(), v.trim()),
            None => {
                return Err(Error::Config {
                    line,
                    msg: format!("expected `key = value`, got `{trimmed}`"),
                })
            }
        };
        let toks: Vec<&str> = value.split_whitespace().collect();
        match key {
            "dim" => dim = Some((parse_usize(value, line, "dim")?, line)),
            "cells" => {
                let mut v = Vec::new();
                for t in &toks {
                    v.push(parse_usize(t, line, "cells")?);
                }
                cells = Some((v, line));
            }
            "origin" => {
                let mut v = Vec::new();
                for t in &toks {
                    v.push(parse_f64(t, line, "origin")?);
                }
                origin = Some((v, line));
            }
            "spacing" => {
                let mut v = Vec::new();
                for t in &toks {
                    v.push(parse_f64(t, line, "spacing")?);
                }
                spacing = Some((v, line));
            }
            "m" => m = Some((parse_f64(value, line, "m")?, line)),
            "q_list" => {
                q_list.clear();
                for t in &toks {
                    q_list.push(parse_f64(t, line, "q_list")?);
                }
            }
            "p" => p = (parse_f64(value, line, "p")?, line),
            "horizon" => horizon = Some((parse_f64(value, line, "horizon")?, line)),
            "subintervals" => subintervals = (parse_usize(value, line, "subintervals")?, line),
            "transport" => {
                transport = match value {
                    "semi_lagrangian" => TransportMode::SemiLagrangian,
                    "upwind" => TransportMode::Upwind,
                    other => {
                        return Err(Error::Config {
                            line,
                            msg: format!(
                                "transport must be semi_lagrangian or upwind, got `{other}`"
                            ),
                        })
                    }
                }
            }
            "cfl_safety" => cfl_safety = (parse_f64(value, line, "cfl_safety")?, line),
            "strang" => {
                strang = match value {
                    "true" => true,
                    "false" => false,
                    other => {
                        return Err(Error::Config {
                            line,
                            msg: format!("strang must be true or false, got `{other}`"),
                        })
                    }
                }
            }
            "ode_substeps" => ode_substeps = parse_usize(value, line, "ode_substeps")?,
            "initial" => {
                let preset = match toks.first().copied() {
                    Some("barenblatt") if toks.len() == 3 => InitialPreset::Barenblatt {
                        t0: parse_f64(toks[1], line, "barenblatt t0")?,
                        mass: parse_f64(toks[2], line, "barenblatt mass")?,
                    },
                    Some("gaussian") if toks.len() == 3 => InitialPreset::Gaussian {
                        sigma: parse_f64(toks[1], line, "gaussian sigma")?,
                        mass: parse_f64(toks[2], line, "gaussian mass")?,
                    },
                    Some("indicator") if toks.len() == 3 => InitialPreset::Indicator {
                        radius: parse_f64(toks[1], line, "indicator radius")?,
                        mass: parse_f64(toks[2], line, "indicator mass")?,
                    },
                    Some("from_file") if toks.len() == 2 => {
                        InitialPreset::FromFile(toks[1].to_string())
                    }
                    _ => {
                        return Err(Error::Config {
                            line,
                            msg: format!("unknown initial preset `{value}`"),
                        })
                    }
                };
                initial = Some((preset, line));
            }
            "initial_center" => {
                for (a, t) in toks.iter().enumerate().take(2) {
                    initial_center[a] = parse_f64(t, line, "initial_center")?;
                }
            }
            "drift" => {
                drift = match toks.first().copied() {
                    Some("zero") => DriftPreset::Zero,
                    Some("constant") if toks.len() >= 2 => {
                        let mut c = [0.0; 2];
                        for (a, t) in toks[1..].iter().enumerate().take(2) {
                            c[a] = parse_f64(t, line, "constant drift")?;
                        }
                        DriftPreset::Constant(c)
                    }
                    Some("rotation") if toks.len() == 2 => {
                        DriftPreset::Rotation(parse_f64(toks[1], line, "rotation rate")?)
                    }
                    Some("linear") if toks.len() == 5 => DriftPreset::Linear([
                        [
                            parse_f64(toks[1], line, "linear a11")?,
                            parse_f64(toks[2], line, "linear a12")?,
                        ],
                        [
                            parse_f64(toks[3], line, "linear a21")?,
                            parse_f64(toks[4], line, "linear a22")?,
                        ],
                    ]),
                    Some("shear") if toks.len() == 2 => {
                        DriftPreset::Shear(parse_f64(toks[1], line, "shear rate")?)
                    }
                    Some("gradient_gaussian") if toks.len() >= 3 => {
                        let mut center = [0.0; 2];
                        for (a, t) in toks[3..].iter().enumerate().take(2) {
                            center[a] = parse_f64(t, line, "potential center")?;
                        }
                        DriftPreset::GradientGaussian {
                            amplitude: parse_f64(toks[1], line, "potential amplitude")?,
                            sigma: parse_f64(toks[2], line, "potential sigma")?,
                            center,
                        }
                    }
                    _ => {
                        return Err(Error::Config {
                            line,
                            msg: format!("unknown drift preset `{value}`"),
                        })
                    }
                }
            }
            "c_initial" => {
                c_initial = match toks.first().copied() {
                    Some("zero") => ChemicalPreset::Zero,
                    Some("gaussian") if toks.len() == 3 => ChemicalPreset::Gaussian {
                        amplitude: parse_f64(toks[1], line, "chemical amplitude")?,
                        sigma: parse_f64(toks[2], line, "chemical sigma")?,
                    },
                    _ => {
                        return Err(Error::Config {
                            line,
                            msg: format!("unknown chemical preset `{value}`"),
                        })
                    }
                }
            }
            "output_dir" => output_dir = value.to_string(),
            "output_times" => {
                output_times.clear();
                for t in &toks {
                    output_times.push(parse_f64(t, line, "output_times")?);
                }
            }
            "seed" => {
                seed = value.parse::<u64>().map_err(|_| Error::Config {
                    line,
                    msg: format!("seed: expected an unsigned integer, got `{value}`"),
                })?
            }
            other => {
                return Err(Error::Config {
                    line,
                    msg: format!("unknown key `{other}`"),
                })
            }
        }
    }

    let (dim, dim_line) = dim.ok_or(Error::Config {
        line: 0,
        msg: "missing key `dim`".into(),
    })?;
    let (cells, cells_line) = cells.ok_or(Error::Config {
        line: 0,
        msg: "missing key `cells`".into(),
    })?;
    let (origin, _) = origin.ok_or(Error::Config {
        line: 0,
        msg: "missing key `origin`".into(),
    })?;
    let (spacing, _) = spacing.ok_or(Error::Config {
        line: 0,
        msg: "missing key `spacing`".into(),
    })?;
    let (m, m_line) = m.ok_or(Error::Config {
        line: 0,
        msg: "missing key `m`".into(),
    })?;
    let (horizon, horizon_line) = horizon.ok_or(Error::Config {
        line: 0,
        msg: "missing key `horizon`".into(),
    })?;
    let (initial, _) = initial.ok_or(Error::Config {
        line: 0,
        msg: "missing key `initial`".into(),
    })?;

    let grid = make_grid(dim, &cells, &origin, &spacing).map_err(|e| Error::Config {
        line: if matches!(e, Error::Invalid(ref s) if s.starts_with("grid dim")) {
            dim_line
        } else {
            cells_line
        },
        msg: format!("{e}"),
    })?;

    // Hypothesis checks, each naming the violated inequality.
    if !(m > 1.0) {
        return Err(Error::Config {
            line: m_line,
            msg: format!("requires m > 1, got {m}"),
        });
    }
    if !(horizon > 0.0) {
        return Err(Error::Config {
            line: horizon_line,
            msg: format!("requires horizon > 0, got {horizon}"),
        });
    }
    if subintervals.0 < 1 {
        return Err(Error::Config {
            line: subintervals.1,
            msg: "requires subintervals >= 1".into(),
        });
    }
    for &q in &q_list {
        if !(q >= 1.0) {
            return Err(Error::Config {
                line: p.1,
                msg: format!("requires every tracked q >= 1, got {q}"),
            });
        }
        let lam = crate::functionals::lambda_q(m, q, 2);
        if p.0 > lam + 1e-12 {
            return Err(Error::Config {
                line: p.1,
                msg: format!(
                    "p = {} exceeds lambda_q = {lam:.6} for q = {q} (requires p <= lambda_q)",
                    p.0
                ),
            });
        }
    }
    if !(p.0 > 1.0 && p.0 <= 2.0) {
        return Err(Error::Config {
            line: p.1,
            msg: format!("requires p in (1, 2], got {}", p.0),
        });
    }
    if !(cfl_safety.0 > 0.0 && cfl_safety.0 <= 1.0) {
        return Err(Error::Config {
            line: cfl_safety.1,
            msg: format!("requires cfl_safety in (0, 1], got {}", cfl_safety.0),
        });
    }

    Ok(RunConfig {
        grid,
        m,
        q_list,
        p: p.0,
        horizon,
        subintervals: subintervals.0,
        transport,
        cfl_safety: cfl_safety.0,
        strang,
        ode_substeps,
        initial,
        initial_center,
        drift,
        c_initial,
        output_dir,
        output_times,
        seed,
    })
}
