//! Command-line verbs.
//!
//! Exit codes: 0 success, 1 invalid input or hypothesis violation,
//! 2 runtime or IO failure. Successful runs write nothing to stderr.

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::functionals::{classify_scaling, DiagnosticsRecord, ScalingQuery, ScalingTarget};
use crate::grid::{DensityField, Grid};
use crate::io::{
    parse_config, read_snapshot, snapshot_to_density, write_diagnostics, write_free_energy,
    write_snapshot, write_snapshot_scalar, RunConfig,
};
use crate::splitting::{convergence_study, split_solve};
use crate::wasserstein::{field_distance, wasserstein_discrete, DiscreteMeasure, OtMethod};

const USAGE: &str = "usage: pmed <verb> [options]

verbs:
  simulate     --config FILE            run the splitting solver
  ks           --config FILE            run the chemotaxis coupling
  classify     --m F --q F --d N --q1 F --q2 F [--target v|gradv]
  wasserstein  --p F [--method exact|entropic] A.snap B.snap
  barenblatt   --d N --m F --t F --mass F --out FILE [--cells N] [--extent F]
  diagnose     --snap FILE --m F [--p F] [--q-list \"2 3\"]
  convergence  --config FILE [--n-list \"4 8 16 32 64\"]

`pmed <verb> --help` prints the verb's options.";

/// Entry point used by the binary and by tests.
pub fn cli_dispatch(args: &[String]) -> i32 {
    match run(args) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("pmed: {e}");
            e.exit_class()
        }
    }
}

fn run(args: &[String]) -> Result<()> {
    let Some(verb) = args.first() else {
        return Err(Error::invalid(format!("missing verb\n{USAGE}")));
    };
    let rest = &args[1..];
    if rest.iter().any(|a| a == "--help") {
        println!("{USAGE}");
        return Ok(());
    }
    match verb.as_str() {
        "simulate" => cmd_simulate(rest),
        "ks" => cmd_ks(rest),
        "classify" => cmd_classify(rest),
        "wasserstein" => cmd_wasserstein(rest),
        "barenblatt" => cmd_barenblatt(rest),
        "diagnose" => cmd_diagnose(rest),
        "convergence" => cmd_convergence(rest),
        "--help" | "-h" | "help" => {
            println!("{USAGE}");
            Ok(())
        }
        other => Err(Error::invalid(format!("unknown verb `{other}`\n{USAGE}"))),
    }
}

struct Flags {
    named: Vec<(String, String)>,
    positional: Vec<String>,
}

impl Flags {
    fn parse(args: &[String]) -> Result<Flags> {
        let mut named = Vec::new();
        let mut positional = Vec::new();
        let mut it = args.iter();
        while let Some(a) = it.next() {
            if let Some(key) = a.strip_prefix("--") {
                let value = it
                    .next()
                    .ok_or_else(|| Error::invalid(format!("flag --{key} needs a value")))?;
                named.push((key.to_string(), value.clone()));
            } else {
                positional.push(a.clone());
            }
        }
        Ok(Flags { named, positional })
    }

    fn get(&self, key: &str) -> Option<&str> {
        self.named
            .iter()
            .rev()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    fn require(&self, key: &str) -> Result<&str> {
        self.get(key)
            .ok_or_else(|| Error::invalid(format!("missing required flag --{key}")))
    }

    fn f64(&self, key: &str) -> Result<f64> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::invalid(format!("--{key}: expected a number, got `{raw}`")))
    }

    fn f64_or(&self, key: &str, default: f64) -> Result<f64> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::invalid(format!("--{key}: expected a number, got `{raw}`"))),
        }
    }

    fn usize(&self, key: &str) -> Result<usize> {
        let raw = self.require(key)?;
        raw.parse()
            .map_err(|_| Error::invalid(format!("--{key}: expected an integer, got `{raw}`")))
    }

    fn usize_or(&self, key: &str, default: usize) -> Result<usize> {
        match self.get(key) {
            None => Ok(default),
            Some(raw) => raw
                .parse()
                .map_err(|_| Error::invalid(format!("--{key}: expected an integer, got `{raw}`"))),
        }
    }
}

fn load_config(flags: &Flags) -> Result<RunConfig> {
    let path = flags.require("config")?;
    let text = std::fs::read_to_string(path)?;
    parse_config(&text)
}

fn ensure_dir(dir: &str) -> Result<PathBuf> {
    let p = PathBuf::from(dir);
    std::fs::create_dir_all(&p)?;
    Ok(p)
}

/// De-normalize and persist one trajectory snapshot.
fn write_output_field(
    dir: &Path,
    stem: &str,
    idx: usize,
    field: &DensityField,
    mass_scale: f64,
) -> Result<PathBuf> {
    let scaled = DensityField {
        grid: field.grid,
        values: field.values.iter().map(|v| v * mass_scale).collect(),
        time: field.time,
    };
    let path = dir.join(format!("{stem}_{idx:03}.snap"));
    write_snapshot(&scaled, &path)?;
    Ok(path)
}

fn cmd_simulate(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args)?;
    let cfg = load_config(&flags)?;
    let rho0 = cfg.build_initial()?;
    let drift = cfg.drift.to_field();
    let scfg = cfg.splitting_config();
    scfg.validate()?;
    let run = split_solve(&rho0, &drift, &scfg)?;
    let dir = ensure_dir(&cfg.output_dir)?;
    let echo = cfg.to_text();
    std::fs::write(dir.join("echo.cfg"), &echo)?;
    write_diagnostics(
        &run.ledger,
        &scfg.tracked_qs,
        &echo,
        &dir.join("ledger.csv"),
    )?;
    for (idx, field) in run.outputs.iter().enumerate() {
        write_output_field(&dir, "rho", idx, field, run.original_mass)?;
    }
    println!(
        "simulate: {} outputs, {} diffusion steps, ledger rows {}, clamped mass {:.3e}",
        run.outputs.len(),
        run.pme_steps,
        run.ledger.len(),
        run.clamped_mass_total
    );
    Ok(())
}

fn cmd_ks(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args)?;
    let cfg = load_config(&flags)?;
    let rho0 = cfg.build_initial()?;
    let c0 = cfg.build_chemical()?;
    let scfg = cfg.splitting_config();
    let t_end = rho0.time + cfg.horizon;
    let run = crate::keller_segel::ks_solve(&rho0, &c0, cfg.m, t_end, cfg.subintervals, &scfg)?;
    let dir = ensure_dir(&cfg.output_dir)?;
    let echo = cfg.to_text();
    std::fs::write(dir.join("echo.cfg"), &echo)?;
    write_free_energy(&run.ledger, &echo, &dir.join("free_energy.csv"))?;
    let mut written = 0usize;
    for state in &run.states {
        let wanted = cfg
            .output_times
            .iter()
            .any(|&t| (t - state.time).abs() < 1e-12)
            || (state.time - t_end).abs() < 1e-12;
        if wanted {
            write_snapshot(&state.rho, &dir.join(format!("rho_{written:03}.snap")))?;
            write_snapshot_scalar(&state.c, &dir.join(format!("c_{written:03}.snap")))?;
            written += 1;
        }
    }
    println!(
        "ks: {} states, wrote {} snapshot pairs, final free energy {:.6e}",
        run.states.len(),
        written,
        run.ledger.last().unwrap().free_energy
    );
    Ok(())
}

fn cmd_classify(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args)?;
    let target = match flags.get("target").unwrap_or("v") {
        "v" => ScalingTarget::Drift,
        "gradv" => ScalingTarget::DriftGradient,
        other => {
            return Err(Error::invalid(format!(
                "--target must be v or gradv, got `{other}`"
            )))
        }
    };
    // Accepts plain numbers, `inf`, and fractions like 5/3 so points can
    // land exactly on the scaling line.
    let parse_exp = |key: &str| -> Result<f64> {
        let raw = flags.require(key)?;
        if raw == "inf" {
            return Ok(f64::INFINITY);
        }
        if let Some((num, den)) = raw.split_once('/') {
            let n: f64 = num
                .parse()
                .map_err(|_| Error::invalid(format!("--{key}: bad fraction numerator `{num}`")))?;
            let d: f64 = den.parse().map_err(|_| {
                Error::invalid(format!("--{key}: bad fraction denominator `{den}`"))
            })?;
            return Ok(n / d);
        }
        raw.parse()
            .map_err(|_| Error::invalid(format!("--{key}: expected a number, fraction, or inf")))
    };
    let query = ScalingQuery {
        m: flags.f64("m")?,
        q: flags.f64("q")?,
        d: flags.usize("d")?,
        q1: parse_exp("q1")?,
        q2: parse_exp("q2")?,
        target,
    };
    let report = classify_scaling(&query)?;
    println!(
        "{} q_md={} lhs={} rhs={} lambda_q={}",
        report.verdict,
        crate::io::fmt_f64(report.q_md),
        crate::io::fmt_f64(report.lhs),
        crate::io::fmt_f64(report.rhs),
        crate::io::fmt_f64(report.lambda_q)
    );
    Ok(())
}

fn cmd_wasserstein(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args)?;
    if flags.positional.len() != 2 {
        return Err(Error::invalid(
            "wasserstein needs exactly two snapshot paths",
        ));
    }
    let p = flags.f64_or("p", 2.0)?;
    let a = snapshot_to_density(&read_snapshot(Path::new(&flags.positional[0]))?)?;
    let b = snapshot_to_density(&read_snapshot(Path::new(&flags.positional[1]))?)?;
    let method = flags.get("method").unwrap_or("exact");
    let d = match method {
        "exact" => field_distance(&a, &b, p)?,
        "entropic" => {
            let mu = DiscreteMeasure::from_field(&a)?;
            let nu = DiscreteMeasure::from_field(&b)?;
            wasserstein_discrete(&mu, &nu, p, OtMethod::Entropic)?.distance
        }
        other => {
            return Err(Error::invalid(format!(
                "--method must be exact or entropic, got `{other}`"
            )))
        }
    };
    println!("{}", crate::io::fmt_f64(d));
    Ok(())
}

fn cmd_barenblatt(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args)?;
    let d = flags.usize("d")?;
    let m = flags.f64("m")?;
    let t = flags.f64("t")?;
    let mass = flags.f64("mass")?;
    let out = flags.require("out")?;
    let cells = flags.usize_or("cells", 128)?;
    let extent = flags.f64_or("extent", 4.0)?;
    let grid = Grid::centered(d, cells, extent)?;
    let field = crate::pme::barenblatt(d, m, t, mass, [0.0, 0.0], &grid)?;
    write_snapshot(&field, Path::new(out))?;
    println!(
        "barenblatt: wrote {out} (mass {})",
        crate::io::fmt_f64(crate::grid::integrate(&field))
    );
    Ok(())
}

fn cmd_diagnose(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args)?;
    let snap = read_snapshot(Path::new(flags.require("snap")?))?;
    let rho = snapshot_to_density(&snap)?;
    let m = flags.f64("m")?;
    if !(m > 1.0) {
        return Err(Error::invalid(format!("requires m > 1, got {m}")));
    }
    let p = flags.f64_or("p", 2.0)?;
    let qs: Vec<f64> = match flags.get("q-list") {
        Some(raw) => raw
            .split_whitespace()
            .map(|t| {
                t.parse::<f64>()
                    .map_err(|_| Error::invalid(format!("--q-list: bad number `{t}`")))
            })
            .collect::<Result<_>>()?,
        None => crate::splitting::dedup_qs(&[2.0, m, m + 1.0]),
    };
    let row = DiagnosticsRecord::compute(&rho, m, p, &qs, None)?;
    let mut header = vec![
        "time",
        "mass",
        "entropy",
        "abs_entropy",
        "moment_p",
        "speed_p",
        "drift_energy_p",
        "support_radius",
    ]
    .into_iter()
    .map(String::from)
    .collect::<Vec<_>>();
    for q in &qs {
        header.push(format!("lq_{q}"));
    }
    for q in &qs {
        header.push(format!("diss_{q}"));
    }
    println!("{}", header.join(","));
    let mut cells = vec![
        crate::io::fmt_f64(row.time),
        crate::io::fmt_f64(row.mass),
        crate::io::fmt_f64(row.entropy),
        crate::io::fmt_f64(row.abs_entropy),
        crate::io::fmt_f64(row.moment_p),
        crate::io::fmt_f64(row.speed_p),
        crate::io::fmt_f64(row.drift_energy_p),
        crate::io::fmt_f64(row.support_radius),
    ];
    for (_, v) in &row.lq {
        cells.push(crate::io::fmt_f64(*v));
    }
    for (_, v) in &row.dissipation {
        cells.push(crate::io::fmt_f64(*v));
    }
    println!("{}", cells.join(","));
    Ok(())
}

fn cmd_convergence(args: &[String]) -> Result<()> {
    let flags = Flags::parse(args)?;
    let cfg = load_config(&flags)?;
    let n_list: Vec<usize> = match flags.get("n-list") {
        Some(raw) => raw
            .split_whitespace()
            .map(|t| {
                t.parse::<usize>()
                    .map_err(|_| Error::invalid(format!("--n-list: bad integer `{t}`")))
            })
            .collect::<Result<_>>()?,
        None => vec![4, 8, 16, 32, 64],
    };
    let rho0 = cfg.build_initial()?;
    let drift = cfg.drift.to_field();
    let scfg = cfg.splitting_config();
    let table = convergence_study(&rho0, &drift, &scfg, &n_list)?;
    println!("n,l1_error,w2_error");
    for row in &table.rows {
        println!(
            "{},{},{}",
            row.n,
            crate::io::fmt_f64(row.l1_error),
            crate::io::fmt_f64(row.w2_error)
        );
    }
    match table.l1_order {
        Some(order) => println!(
            "# reference n = {}, fitted L1 order {}",
            table.reference_n,
            crate::io::fmt_f64(order)
        ),
        None => println!("# reference n = {}, errors at roundoff", table.reference_n),
    }
    Ok(())
}
