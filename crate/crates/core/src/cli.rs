//! Command-line verbs. `main` returns the process exit code: 0 when every
//! check passes, 2 when a driver or a verification fails, 1 on a usage or
//! configuration error.

use crate::config::{BaseFamily, Driver, RunConfig};
use crate::error::{Error, Result};
use crate::isotopy::{classify, constant_isotopy, flux_to_zero, prescribe_flux, verify, FamilyKind, ImmersionFamily, IsotopyOptions};
use crate::labyrinth::{complete_step, AnnularCore, CompleteOptions, CompletedFamily};
use crate::output;
use crate::C64;
use clap::{Args, Parser, Subcommand};
use std::ffi::OsString;
use std::path::{Path, PathBuf};

#[derive(Parser, Debug)]
#[command(name = "fluxiso", version, about = "Flux-deforming isotopies of minimal surfaces")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run the configured driver and write all artifacts.
    Run(Common),
    /// Recompute the verification report of a saved family.
    Verify(Common),
    /// Print the pi_1 class of every generator and the component label.
    Classify(Common),
    /// Write OBJ meshes (and labyrinth polygons) from a saved run.
    Export {
        #[command(flatten)]
        common: Common,
        /// Times of the meshes; defaults to run.obj_times, else 0 and 1.
        #[arg(long = "t", num_args = 1..)]
        times: Vec<f64>,
    },
}

#[derive(Args, Debug, Default)]
struct Common {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long = "t-samples")]
    t_samples: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long = "tol-flux", allow_negative_numbers = true)]
    tol_flux: Option<f64>,
    #[arg(long = "tol-period", allow_negative_numbers = true)]
    tol_period: Option<f64>,
}

/// Exit code of an error: 1 for problems with the inputs, 2 for failures
/// of a construction or a check.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) | Error::Io(_) | Error::UnknownName(_) | Error::InvalidDomain(_) => 1,
        _ => 2,
    }
}

pub fn main<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let result = match cli.command {
        Command::Run(c) => run_verb(&c),
        Command::Verify(c) => verify_verb(&c),
        Command::Classify(c) => classify_verb(&c),
        Command::Export { common, times } => export_verb(&common, &times),
    };
    match result {
        Ok(true) => 0,
        Ok(false) => 2,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn load_config(c: &Common, required: bool) -> Result<Option<RunConfig>> {
    let Some(path) = &c.config else {
        return if required { Err(Error::Config("--config is required".into())) } else { Ok(None) };
    };
    let mut cfg = RunConfig::load(path)?;
    if let Some(o) = &c.out {
        cfg.run.out = o.clone();
    }
    if let Some(n) = c.t_samples {
        cfg.run.t_samples = n;
    }
    if let Some(s) = c.seed {
        cfg.run.seed = s;
    }
    if let Some(t) = c.tol_flux {
        cfg.tolerances.flux = t;
    }
    if let Some(t) = c.tol_period {
        cfg.tolerances.period = t;
    }
    cfg.validate()?;
    Ok(Some(cfg))
}

fn out_dir(c: &Common, cfg: Option<&RunConfig>) -> Result<PathBuf> {
    c.out.clone().or_else(|| cfg.map(|k| k.run.out.clone())).ok_or_else(|| Error::Config("--out is required without --config".into()))
}

/// Isotopy options from a config, or the defaults with command-line
/// overrides when there is none.
fn options(c: &Common, cfg: Option<&RunConfig>) -> Result<IsotopyOptions> {
    let mut o = IsotopyOptions::default();
    if let Some(k) = cfg {
        o.n_t = k.run.t_samples;
        o.seed = k.run.seed;
        o.tol_flux = k.tolerances.flux;
        o.tol_period = k.tolerances.period;
        o.tol_null = k.tolerances.null;
    } else {
        for (name, v) in [("--tol-flux", c.tol_flux), ("--tol-period", c.tol_period)] {
            if let Some(v) = v {
                if !(v > 0.0) {
                    return Err(Error::Config(format!("{name} must be positive, got {v}")));
                }
            }
        }
        o.tol_flux = c.tol_flux.unwrap_or(o.tol_flux);
        o.tol_period = c.tol_period.unwrap_or(o.tol_period);
        o.seed = c.seed.unwrap_or(o.seed);
    }
    Ok(o)
}

/// Executes the configured driver and writes the artifacts into the
/// output directory. Returns whether every check passed.
pub fn run(cfg: &RunConfig) -> Result<bool> {
    let out = &cfg.run.out;
    let u = cfg.immersion()?;
    let opts = options(&Common::default(), Some(cfg))?;
    if cfg.driver.kind == Driver::Classify {
        let c = classify(&u, cfg.run.seed)?;
        print!("{}", c.to_text());
        output::write_json(out, "classification.json", &c)?;
        output::write(out, "report.txt", &c.to_text())?;
        return Ok(true);
    }
    let fam = match cfg.driver.kind {
        Driver::FluxToZero => flux_to_zero(&u, &opts)?,
        Driver::PrescribeFlux => prescribe_flux(&u, cfg.driver.target_flux.as_deref().unwrap_or(&[]), &opts)?,
        Driver::CompleteStep => match cfg.driver.base {
            BaseFamily::Constant => constant_isotopy(&u, &opts)?,
            BaseFamily::FluxToZero => flux_to_zero(&u, &opts)?,
        },
        Driver::Classify => unreachable!(),
    };
    let report = verify(&fam, &opts)?;
    output::write_json(out, "family.json", &fam)?;
    output::write(out, "trace.csv", &output::trace_csv(&fam, &report))?;
    if let Some(nc) = fam.null_curve().filter(|_| fam.kind == FamilyKind::FluxToZero) {
        output::write_json(out, "null_curve.json", &nc)?;
    }
    let mut text = output::report_text(&fam, &report);
    let mut pass = report.passed();
    if cfg.driver.kind == Driver::CompleteStep {
        let [r_in, r_out] = cfg.driver.core.ok_or_else(|| Error::Config("driver.core is required".into()))?;
        let delta = cfg.driver.delta.ok_or_else(|| Error::Config("driver.delta is required".into()))?;
        let x0 = cfg.driver.x0.map_or(u.basepoint, |p| C64::new(p[0], p[1]));
        let copts = CompleteOptions { seed: cfg.run.seed, ..Default::default() };
        let done = complete_step(&fam, AnnularCore { r_in, r_out }, x0, delta, &copts)?;
        output::write_json(out, "completion.json", &done)?;
        output::write(out, "distances.csv", &output::distances_csv(&done))?;
        output::write(out, "labyrinth.csv", &output::labyrinth_csv(&done, 16))?;
        text.push_str("\ncompletion step\n");
        text.push_str(&done.to_text());
        text.push_str(&format!("completion result: {}\n", if done.passed() { "PASS" } else { "FAIL" }));
        pass &= done.passed();
    }
    write_meshes(&fam, out, &cfg.run.obj_times, cfg.run.mesh, cfg.run.mesh_radii)?;
    output::write(out, "report.txt", &text)?;
    print!("{text}");
    Ok(pass)
}

fn run_verb(c: &Common) -> Result<bool> {
    let cfg = load_config(c, true)?.expect("required");
    run(&cfg)
}

fn load_family(dir: &Path) -> Result<ImmersionFamily> {
    output::read_json(&dir.join("family.json"))
}

fn verify_verb(c: &Common) -> Result<bool> {
    let cfg = load_config(c, false)?;
    let dir = out_dir(c, cfg.as_ref())?;
    let fam = load_family(&dir)?;
    let opts = options(c, cfg.as_ref())?;
    let report = verify(&fam, &opts)?;
    let text = output::report_text(&fam, &report);
    output::write(&dir, "verify_report.txt", &text)?;
    print!("{text}");
    Ok(report.passed())
}

fn classify_verb(c: &Common) -> Result<bool> {
    let cfg = load_config(c, true)?.expect("required");
    let u = cfg.immersion()?;
    let res = classify(&u, cfg.run.seed)?;
    print!("{}", res.to_text());
    if c.out.is_some() {
        output::write_json(&cfg.run.out, "classification.json", &res)?;
    }
    Ok(true)
}

fn export_verb(c: &Common, times: &[f64]) -> Result<bool> {
    let cfg = load_config(c, false)?;
    let dir = out_dir(c, cfg.as_ref())?;
    if let Some(t) = times.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::Config(format!("--t value {t} is outside [0, 1]")));
    }
    let fam = load_family(&dir)?;
    let mut ts = times.to_vec();
    if ts.is_empty() {
        ts = cfg.as_ref().map(|k| k.run.obj_times.clone()).unwrap_or_default();
    }
    if ts.is_empty() {
        ts = vec![0.0, 1.0];
    }
    let mesh = cfg.as_ref().map_or([24, 96], |k| k.run.mesh);
    let radii = cfg.as_ref().and_then(|k| k.run.mesh_radii);
    write_meshes(&fam, &dir, &ts, mesh, radii)?;
    let completion = dir.join("completion.json");
    if completion.exists() {
        let done: CompletedFamily = output::read_json(&completion)?;
        output::write(&dir, "labyrinth.csv", &output::labyrinth_csv(&done, 16))?;
    }
    Ok(true)
}

/// One mesh per requested time, of the family member nearest to it.
fn write_meshes(fam: &ImmersionFamily, dir: &Path, times: &[f64], mesh: [usize; 2], radii: Option<[f64; 2]>) -> Result<()> {
    for &t in times {
        let Some(k) = (0..fam.n_t()).min_by(|&a, &b| (fam.members[a].t - t).abs().total_cmp(&(fam.members[b].t - t).abs())) else {
            continue;
        };
        let tk = fam.members[k].t;
        let name = format!("mesh_t{tk:.4}.obj");
        output::write(dir, &name, &output::obj_mesh(&fam.immersion(k), tk, mesh[0], mesh[1], radii.map(|r| (r[0], r[1]))))?;
    }
    Ok(())
}
