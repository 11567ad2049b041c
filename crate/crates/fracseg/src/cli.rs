//! Command-line entry point: a key-value configuration with dotted sections,
//! one run mode per invocation, CSV and JSON artifacts in an output
//! directory, and exit codes 0 (success), 2 (configuration) and 3 (numerics).
//!
//! Configuration format: `key = value` lines, `#` comments, and optional
//! `[section]` headers that prefix the following keys (`[grid]` then
//! `n_t = 256` is the same as `grid.n_t = 256`).

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use clap::Parser;
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::asymptotics::{default_window, extract_expansion, ExpansionOptions};
use crate::core::{make_params, FracParam};
use crate::error::{Error, Result};
use crate::kernels::{appendix_checks, harnack_certificate, poisson_extend, poisson_kernel, solve_phi, KernelEval};
use crate::monotone::{acf_trace, default_truncation, doubling_check, frequency_trace, monotonicity_defect};
use crate::solver::{residual_report, solve_profile, GridSpec, InitialGuess, SolverConfig};
use crate::spectral::solve_mixed_eigen;
use crate::suite::{run_suite, Resolution, SuiteOptions};

#[derive(Debug, Parser)]
#[command(name = "fracseg", about = "Segregated fractional profiles: solver, spectra, monotone functionals, asymptotics, kernels")]
pub struct Cli {
    /// Key-value configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Run mode (overrides the configuration).
    #[arg(long)]
    pub mode: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed (overrides the configuration).
    #[arg(long)]
    pub seed: Option<u64>,
    /// Grid preset: coarse, reference or fine.
    #[arg(long)]
    pub resolution: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Profile,
    Spectrum,
    Monotonicity,
    Asymptotics,
    Kernels,
    Suite,
}

impl Mode {
    pub fn parse(tag: &str) -> Result<Self> {
        Ok(match tag {
            "profile" => Self::Profile,
            "spectrum" => Self::Spectrum,
            "monotonicity" => Self::Monotonicity,
            "asymptotics" => Self::Asymptotics,
            "kernels" => Self::Kernels,
            "suite" => Self::Suite,
            other => return Err(Error::Config(format!("unknown mode '{other}'"))),
        })
    }
}

const KEYS: [&str; 23] = [
    "mode",
    "s",
    "seed",
    "resolution",
    "out",
    "grid.t_min",
    "grid.t_max",
    "grid.n_t",
    "grid.n_theta",
    "solver.damping",
    "solver.tolerance",
    "solver.max_iter",
    "solver.schedule",
    "solver.initial_guess",
    "solver.perturbation",
    "solver.shift",
    "spectrum.n_modes",
    "spectrum.n_theta",
    "fit.t_lo",
    "fit.t_hi",
    "acf.m_star",
    "kernels.t_max",
    "kernels.samples",
];

/// Raw `key = value` pairs in file order, with section prefixes applied.
pub fn parse_config_text(text: &str) -> Result<Vec<(String, String)>> {
    let mut section = String::new();
    let mut out: Vec<(String, String)> = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| Error::Config(format!("line {}: unterminated section header", n + 1)))?
                .trim();
            section = name.to_string();
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", n + 1)))?;
        let k = k.trim();
        let key = if section.is_empty() { k.to_string() } else { format!("{section}.{k}") };
        if !KEYS.contains(&key.as_str()) {
            return Err(Error::Config(format!("line {}: unknown key '{key}'", n + 1)));
        }
        if out.iter().any(|(e, _)| *e == key) {
            return Err(Error::Config(format!("line {}: duplicate key '{key}'", n + 1)));
        }
        out.push((key, v.trim().to_string()));
    }
    Ok(out)
}

/// Fully resolved run configuration.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    pub params: FracParam,
    pub seed: u64,
    pub resolution: Resolution,
    pub out: PathBuf,
    pub solver: SolverConfig,
    pub spectrum_modes: usize,
    pub spectrum_n_theta: usize,
    pub fit_window: (f64, f64),
    pub m_star: Option<f64>,
    pub kernels_t_max: f64,
    pub kernels_samples: usize,
    /// Every key with its effective value, in a fixed order.
    pub record: Map<String, Value>,
}

fn num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| Error::Config(format!("{key}: cannot parse '{v}'")))
}

/// `6, 12, …` below `t_max`, then `t_max`; a single stage for short domains.
fn auto_schedule(t_min: f64, t_max: f64) -> Vec<f64> {
    if t_max - t_min <= 12.0 {
        return Vec::new();
    }
    let mut s: Vec<f64> = (1..).map(|k| 6.0 * k as f64).take_while(|v| *v < t_max - 1e-9).filter(|v| *v > t_min + 2.0).collect();
    s.push(t_max);
    s
}

impl RunConfig {
    /// Resolves raw pairs and command-line overrides into a validated config.
    pub fn resolve(pairs: &[(String, String)], cli: &Cli) -> Result<Self> {
        let get = |k: &str| pairs.iter().find(|(key, _)| key == k).map(|(_, v)| v.as_str());
        let mode_tag = cli.mode.clone().or_else(|| get("mode").map(String::from)).unwrap_or_else(|| "profile".into());
        let mode = Mode::parse(&mode_tag)?;
        let s: f64 = get("s").map(|v| num("s", v)).transpose()?.unwrap_or(0.5);
        let params = make_params(s).map_err(|e| Error::Config(e.to_string()))?;
        let seed = match cli.seed {
            Some(v) => v,
            None => get("seed").map(|v| num("seed", v)).transpose()?.unwrap_or(0),
        };
        let res_tag = cli.resolution.clone().or_else(|| get("resolution").map(String::from)).unwrap_or_else(|| "reference".into());
        let resolution = Resolution::parse(&res_tag)?;
        let out = cli.out.clone().or_else(|| get("out").map(PathBuf::from)).unwrap_or_else(|| PathBuf::from("out"));

        let f = |k: &str, d: f64| -> Result<f64> { get(k).map(|v| num(k, v)).transpose().map(|o| o.unwrap_or(d)) };
        let u = |k: &str, d: usize| -> Result<usize> { get(k).map(|v| num(k, v)).transpose().map(|o| o.unwrap_or(d)) };
        let grid = GridSpec {
            t_min: f("grid.t_min", -6.0)?,
            t_max: f("grid.t_max", 24.0)?,
            n_t: u("grid.n_t", resolution.nodes(512, 16))?,
            n_theta: u("grid.n_theta", resolution.nodes(64, 8))?,
        };
        grid.build(params).map_err(|e| Error::Config(e.to_string()))?;
        let mut solver = SolverConfig::new(grid);
        solver.damping = f("solver.damping", solver.damping)?;
        solver.tolerance = f("solver.tolerance", solver.tolerance)?;
        solver.max_iter = u("solver.max_iter", solver.max_iter)?;
        solver.perturbation = f("solver.perturbation", solver.perturbation)?;
        solver.shift = f("solver.shift", solver.shift)?;
        solver.seed = seed;
        solver.initial_guess = InitialGuess::parse(get("solver.initial_guess").unwrap_or("farfield-extension"))
            .map_err(|e| Error::Config(e.to_string()))?;
        if solver.initial_guess == InitialGuess::Custom {
            return Err(Error::Config("the custom initial guess is available from the library only".into()));
        }
        solver.schedule = match get("solver.schedule") {
            None | Some("auto") => auto_schedule(grid.t_min, grid.t_max),
            Some("") | Some("none") => Vec::new(),
            Some(list) => list.split(',').map(|v| num("solver.schedule", v.trim())).collect::<Result<_>>()?,
        };
        solver.validate()?;
        let built = grid.build(params)?;
        let dw = default_window(&built);
        let fit_window = (f("fit.t_lo", dw.0)?, f("fit.t_hi", dw.1)?);
        if !(fit_window.0 < fit_window.1 && fit_window.0 >= grid.t_min && fit_window.1 <= grid.t_max) {
            return Err(Error::Config(format!("fit window ({}, {}) outside the grid", fit_window.0, fit_window.1)));
        }
        let m_star = match get("acf.m_star") {
            None | Some("auto") => None,
            Some(v) => Some(num::<f64>("acf.m_star", v)?),
        };
        if m_star.is_some_and(|m| !(m >= 0.0)) {
            return Err(Error::Config("acf.m_star must be nonnegative".into()));
        }
        let spectrum_modes = u("spectrum.n_modes", 4)?;
        let spectrum_n_theta = u("spectrum.n_theta", resolution.nodes(2048, 16))?;
        if spectrum_modes == 0 || spectrum_modes > spectrum_n_theta {
            return Err(Error::Config("spectrum.n_modes must lie in [1, spectrum.n_theta]".into()));
        }
        let kernels_t_max = f("kernels.t_max", 12.0)?;
        if !(10.0..=500.0).contains(&kernels_t_max) {
            return Err(Error::Config("kernels.t_max must lie in [10, 500]".into()));
        }
        let kernels_samples = u("kernels.samples", 200)?;

        let mut record = Map::new();
        let mut put = |k: &str, v: Value| {
            record.insert(k.to_string(), v);
        };
        put("mode", json!(mode));
        put("s", json!(s));
        put("seed", json!(seed));
        put("resolution", json!(resolution));
        put("out", json!(out.display().to_string()));
        put("grid.t_min", json!(grid.t_min));
        put("grid.t_max", json!(grid.t_max));
        put("grid.n_t", json!(grid.n_t));
        put("grid.n_theta", json!(grid.n_theta));
        put("solver.damping", json!(solver.damping));
        put("solver.tolerance", json!(solver.tolerance));
        put("solver.max_iter", json!(solver.max_iter));
        put("solver.schedule", json!(solver.schedule));
        put("solver.initial_guess", json!(solver.initial_guess));
        put("solver.perturbation", json!(solver.perturbation));
        put("solver.shift", json!(solver.shift));
        put("spectrum.n_modes", json!(spectrum_modes));
        put("spectrum.n_theta", json!(spectrum_n_theta));
        put("fit.t_lo", json!(fit_window.0));
        put("fit.t_hi", json!(fit_window.1));
        put("acf.m_star", m_star.map_or(json!("auto"), |m| json!(m)));
        put("kernels.t_max", json!(kernels_t_max));
        put("kernels.samples", json!(kernels_samples));
        Ok(Self {
            mode,
            params,
            seed,
            resolution,
            out,
            solver,
            spectrum_modes,
            spectrum_n_theta,
            fit_window,
            m_star,
            kernels_t_max,
            kernels_samples,
            record,
        })
    }
}

fn write_json(path: &Path, v: &Value) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v).map_err(|e| Error::Structural(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn create(path: &Path) -> Result<BufWriter<fs::File>> {
    Ok(BufWriter::new(fs::File::create(path)?))
}

/// Runs one mode and returns the names of the written files and a mode summary.
fn execute(cfg: &RunConfig) -> Result<(Vec<String>, Value)> {
    let dir = &cfg.out;
    let p = cfg.params;
    let mut files = Vec::new();
    let mut file = |name: &str| {
        files.push(name.to_string());
        dir.join(name)
    };
    let summary = match cfg.mode {
        Mode::Profile => {
            let (pair, rep) = solve_profile(p, &cfg.solver)?;
            pair.u.write_csv(create(&file("u.csv"))?)?;
            pair.v.write_csv(create(&file("v.csv"))?)?;
            let res = residual_report(&pair, p)?;
            write_json(&file("solve_report.json"), &json!({ "solve": rep, "residuals": res }))?;
            json!({ "iterations": rep.iterations, "final_residual": rep.final_residual })
        }
        Mode::Spectrum => {
            let e = solve_mixed_eigen(p, cfg.spectrum_modes, cfg.spectrum_n_theta)?;
            e.write_csv(create(&file("eigen.csv"))?)?;
            json!({ "eigenvalues": e.eigenvalues, "lambda1_expected": p.lambda1() })
        }
        Mode::Monotonicity => {
            let (pair, rep) = solve_profile(p, &cfg.solver)?;
            let mut tr = frequency_trace(&pair, p)?;
            let m_star = cfg.m_star.unwrap_or_else(|| default_truncation(&pair));
            let acf = acf_trace(&pair, p, m_star)?;
            tr.attach_acf(&acf);
            tr.write_csv(create(&file("frequency.csv"))?)?;
            let d = tr.frequency.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let out = json!({
                "newton_residual": rep.final_residual,
                "max_frequency_decrease": monotonicity_defect(&tr.frequency),
                "mean_frequency_fit_window": tr.mean_frequency(cfg.fit_window.0, cfg.fit_window.1),
                "doubling_d": d,
                "doubling_excess": doubling_check(&tr, d),
                "pohozaev_max": tr.pohozaev.iter().fold(0.0f64, |a, b| a.max(b.abs())),
                "acf": {
                    "truncation": acf.truncation,
                    "window": acf.window,
                    "limit": acf.limit,
                    "calibration": acf.calibration,
                    "b_estimate": acf.b_estimate,
                    "max_relative_decrease": acf.monotonicity_defect,
                },
            });
            write_json(&file("monotonicity.json"), &out)?;
            out
        }
        Mode::Asymptotics => {
            let (pair, _) = solve_profile(p, &cfg.solver)?;
            let opts = ExpansionOptions { window: Some(cfg.fit_window), subleading: p.s() > 0.25 };
            let rep = extract_expansion(&pair, p, opts)?;
            let v = json!(rep);
            write_json(&file("expansion.json"), &v)?;
            json!({ "b_scale": rep.b_scale, "a_coeff": rep.a_coeff, "b_coeff": rep.b_coeff, "subleading": opts.subleading })
        }
        Mode::Kernels => {
            let phi = solve_phi(p, cfg.kernels_t_max)?;
            phi.write_csv(create(&file("phi.csv"))?)?;
            let k = KernelEval::new(1, p)?;
            {
                use std::io::Write;
                let mut w = create(&file("kernel.csv"))?;
                writeln!(w, "x,y,P")?;
                for i in 0..=100 {
                    let x = -5.0 + 0.1 * i as f64;
                    writeln!(w, "{:e},{:e},{:e}", x, 1.0, poisson_kernel(&[x], 1.0, &k)?)?;
                }
            }
            let line = |lo: f64, hi: f64, n: usize| -> Vec<f64> { (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect() };
            let xs = line(-3.0, 3.0, 6001);
            let g: Vec<f64> = xs.iter().map(|x| if x.abs() <= 1.0 + 1e-12 { 1.0 } else { 0.0 }).collect();
            let field = poisson_extend(&xs, &g, &line(-2.0, 2.0, 81), &line(0.5, 2.5, 41), &k)?;
            let centres: Vec<(f64, f64)> = (0..10).map(|i| (-1.5 + 0.3 * i as f64, 1.0 + 0.05 * i as f64)).collect();
            let harnack = harnack_certificate(&field, &centres, cfg.kernels_samples, cfg.seed)?;
            let appendix = appendix_checks(p)?;
            let out = json!({
                "kernel": k,
                "phi": { "phi0": phi.phi0, "singular_coefficient": phi.singular_coefficient, "t_max": cfg.kernels_t_max },
                "harnack": harnack,
                "appendix": appendix,
            });
            write_json(&file("kernels.json"), &out)?;
            json!({ "phi0": phi.phi0, "appendix_pass": appendix.pass })
        }
        Mode::Suite => {
            let rep = run_suite(SuiteOptions { s: p.s(), resolution: cfg.resolution, seed: cfg.seed })?;
            write_json(&file("suite.json"), &rep.to_json())?;
            for c in &rep.criteria {
                println!("{}", c.line());
            }
            json!({ "passed": rep.passed, "failed": rep.failed })
        }
    };
    Ok((files, summary))
}

fn diagnostic(e: &Error) -> Value {
    let history = match e {
        Error::Numerical { history, .. } => history.clone(),
        _ => Vec::new(),
    };
    json!({ "status": "numerical-failure", "message": e.to_string(), "history": history })
}

/// Parses, validates and runs; returns the process exit code.
pub fn run(cli: &Cli) -> i32 {
    let pairs = match &cli.config {
        Some(path) => match fs::read_to_string(path) {
            Ok(text) => parse_config_text(&text),
            Err(e) => Err(Error::Config(format!("{}: {e}", path.display()))),
        },
        None => Ok(Vec::new()),
    };
    let cfg = match pairs.and_then(|p| RunConfig::resolve(&p, cli)) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return 2;
        }
    };
    if let Err(e) = fs::create_dir_all(&cfg.out) {
        eprintln!("cannot create {}: {e}", cfg.out.display());
        return 2;
    }
    match execute(&cfg) {
        Ok((files, result)) => {
            let summary = json!({
                "status": "ok",
                "mode": cfg.mode,
                "config": cfg.record,
                "outputs": files,
                "result": result,
            });
            match write_json(&cfg.out.join("summary.json"), &summary) {
                Ok(()) => 0,
                Err(e) => {
                    eprintln!("{e}");
                    3
                }
            }
        }
        Err(e) if e.is_config() => {
            eprintln!("{e}");
            2
        }
        Err(e) => {
            eprintln!("{e}");
            let _ = write_json(&cfg.out.join("diagnostic.json"), &diagnostic(&e));
            3
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cli(mode: Option<&str>) -> Cli {
        Cli { config: None, mode: mode.map(String::from), out: None, seed: None, resolution: None }
    }

    #[test]
    fn sections_prefix_keys() {
        let p = parse_config_text("s = 0.3 # order\n[grid]\nn_t = 40\n\n[solver]\nschedule = none\n").unwrap();
        assert_eq!(p, vec![("s".into(), "0.3".into()), ("grid.n_t".into(), "40".into()), ("solver.schedule".into(), "none".into())]);
        assert!(matches!(parse_config_text("grid.bogus = 1"), Err(Error::Config(_))));
        assert!(matches!(parse_config_text("s = 1\ns = 2"), Err(Error::Config(_))));
        assert!(matches!(parse_config_text("[grid\nn_t = 3"), Err(Error::Config(_))));
    }

    #[test]
    fn defaults_are_recorded_in_order() {
        let c = RunConfig::resolve(&[], &cli(None)).unwrap();
        let keys: Vec<&str> = c.record.keys().map(|k| k.as_str()).collect();
        assert_eq!(keys, KEYS.to_vec());
        assert_eq!(c.solver.schedule, vec![6.0, 12.0, 18.0, 24.0]);
        assert_eq!(c.fit_window, (3.0, 18.0));
    }

    #[test]
    fn overrides_and_validation() {
        let pairs = parse_config_text("mode = spectrum\nseed = 4\nresolution = fine").unwrap();
        let mut c = cli(Some("kernels"));
        c.seed = Some(9);
        c.resolution = Some("coarse".into());
        let r = RunConfig::resolve(&pairs, &c).unwrap();
        assert_eq!((r.mode, r.seed, r.resolution), (Mode::Kernels, 9, Resolution::Coarse));
        for bad in ["s = 1.2", "grid.n_t = 2", "solver.damping = 0", "mode = nothing", "fit.t_lo = -100", "solver.initial_guess = custom"] {
            let p = parse_config_text(bad).unwrap();
            assert!(matches!(RunConfig::resolve(&p, &cli(None)), Err(Error::Config(_))), "{bad}");
        }
    }
}
