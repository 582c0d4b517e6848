//! One runner per command. Runners only call into the core library and
//! serialize what it returns; artifacts are assembled in memory and written
//! by a single writer afterwards.

use noncanon::amplitude::{
    canonical_amplitude, noncanonical_amplitude_exact, noncanonical_amplitude_mc, renormalization_sweep, solve_volterra,
    uniform_grid, AmplitudeSeries, CouplingModel,
};
use noncanon::combinatorics::{
    bernoulli_parameter, boundary_conditional, class_probabilities, excitation_distribution, rational_to_f64,
    CombinatoricsError,
};
use noncanon::model::{CoherentSpec, ModeAmplitudes};
use noncanon::output::{fmt_f64, CsvTable};
use noncanon::propagator::{
    coincidence_limit, cutoff_grid, d_z_table, equal_time_commutator_check, lightcone_deviation, linear_fit,
    photon_number_sweep, radiated_four_momentum, radiated_photon_number, write_d_z_csv, write_sweep_csv,
    PropagatorError, RadialCurrent, RadialProfile,
};
use num_complex::Complex64;
use serde_json::{json, Value};

use crate::config::{
    AlphaSpec, AmplitudeMethod, AmplitudeParams, CombinatoricsParams, ExcitationsParams, Params, PropagatorParams,
    RadiationParams, RenormParams, RunConfig, ThermoParams,
};
use crate::error::CliError;
use crate::preflight::use_exact;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Artifact {
    pub name: String,
    pub bytes: Vec<u8>,
}

/// A figure in the optional gnuplot script: curves are `(file, using, label)`.
#[derive(Debug, Clone)]
pub struct Figure {
    pub title: String,
    pub logscale: &'static str,
    pub curves: Vec<(String, &'static str, String)>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub artifacts: Vec<Artifact>,
    /// Scalar results, written as `summary.json`.
    pub summary: Value,
    pub figures: Vec<Figure>,
    /// Set when a numerical contract of the experiment is violated. The
    /// artifacts are still written.
    pub failure: Option<String>,
}

impl Outcome {
    fn new(summary: Value) -> Self {
        Self { artifacts: Vec::new(), summary, figures: Vec::new(), failure: None }
    }

    fn push(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.artifacts.push(Artifact { name: name.into(), bytes });
    }
}

fn csv_err(e: impl std::fmt::Display) -> CliError {
    CliError::Numerical(format!("csv encoding failed: {e}"))
}

fn series_csv(series: &AmplitudeSeries) -> Result<Vec<u8>, CliError> {
    Ok(series.write_csv(Vec::new())?)
}

pub fn execute(cfg: &RunConfig) -> Result<Outcome, CliError> {
    match &cfg.params {
        Params::Combinatorics(p) => combinatorics(p),
        Params::Excitations(p) => excitations(p),
        Params::Amplitude(p) => amplitude(p),
        Params::ThermoLimit(p) => thermo_limit(p, cfg.seed),
        Params::Propagator(p) => propagator(p),
        Params::Radiation(p) => radiation(p),
        Params::RenormSweep(p) => renorm_sweep(p),
    }
}

fn combinatorics(p: &CombinatoricsParams) -> Result<Outcome, CliError> {
    let table = class_probabilities(p.n, p.m)?;
    let by_order = table.by_coincidence_order();
    let mut out = Outcome::new(json!({
        "N": p.n,
        "m": p.m,
        "coincidence": by_order.iter().map(rational_to_f64).collect::<Vec<_>>(),
        "coincidence_exact": by_order.iter().map(|r| r.to_string()).collect::<Vec<_>>(),
        "total_exact": table.total().to_string(),
    }));
    out.push("classes.csv", table.write_classes_csv(Vec::new())?);
    out.push("coincidence.csv", table.write_coincidence_csv(Vec::new())?);
    out.figures.push(Figure {
        title: format!("coincidence order, N = {}, m = {}", p.n, p.m),
        logscale: "",
        curves: vec![("coincidence.csv".into(), "1:2", "P_j".into())],
    });
    Ok(out)
}

fn coherent_spec(alpha: AlphaSpec, modes: &noncanon::model::ModeSet) -> CoherentSpec {
    let amps = match alpha {
        AlphaSpec::Constant { re, im } => ModeAmplitudes::constant(modes.len(), Complex64::new(re, im)),
        AlphaSpec::PowerLaw { scale, exponent } => ModeAmplitudes::from_fn(modes.len(), |k, _| {
            Complex64::new(scale * modes.omega(k).powf(exponent), 0.0)
        }),
    };
    CoherentSpec(amps)
}

fn excitations(p: &ExcitationsParams) -> Result<Outcome, CliError> {
    let modes = p.grid().build()?;
    let alpha = coherent_spec(p.alpha, &modes);
    let mu = alpha.mean_excitations(&modes)?;
    let mut table = CsvTable::new(
        Vec::new(),
        &["N", "mean", "tail_mass", "tv_to_poisson", "bernoulli", "boundary_conditional"],
    )
    .map_err(csv_err)?;
    let mut rows = Vec::new();
    let mut distributions = Vec::new();
    for &n in &p.n {
        let dist = excitation_distribution(&modes, &alpha, n, p.m_max)?;
        let tv = dist.tv_distance_to_poisson(mu);
        let bernoulli = bernoulli_parameter(&modes, &alpha, n)?;
        let boundary = match boundary_conditional(&modes, &alpha, n, p.boundary_m) {
            Ok(b) => Some(b),
            Err(CombinatoricsError::UndefinedConditional(_)) => None,
            Err(e) => return Err(e.into()),
        };
        table
            .row([
                n.to_string(),
                fmt_f64(dist.mean()),
                fmt_f64(dist.tail_mass),
                fmt_f64(tv),
                fmt_f64(bernoulli),
                boundary.map(fmt_f64).unwrap_or_default(),
            ])
            .map_err(csv_err)?;
        let name = format!("distribution_N{n}.csv");
        rows.push(json!({
            "N": n,
            "tv_to_poisson": tv,
            "bernoulli": bernoulli,
            "boundary_conditional": boundary,
            "file": name,
        }));
        distributions.push((name, dist.write_csv(Vec::new())?));
    }
    let tvs: Vec<f64> = rows.iter().filter_map(|r| r["tv_to_poisson"].as_f64()).collect();
    let mut out = Outcome::new(json!({
        "poisson_mean": mu,
        "modes": modes.len(),
        "tv_nonincreasing": tvs.windows(2).all(|w| w[1] <= w[0]),
        "rows": rows,
    }));
    out.push("excitations.csv", table.finish().map_err(csv_err)?);
    for (name, bytes) in distributions {
        out.push(name, bytes);
    }
    out.figures.push(Figure {
        title: "distance to the Poisson limit".into(),
        logscale: "xy",
        curves: vec![("excitations.csv".into(), "1:4", "TV distance".into())],
    });
    Ok(out)
}

fn amplitude(p: &AmplitudeParams) -> Result<Outcome, CliError> {
    let modes = p.grid().build()?;
    let omega0 = p.resolve_omega0(&modes);
    let model = CouplingModel::new(p.c, omega0, modes)?;
    let mut summary = json!({ "omega0": omega0, "modes": model.modes.len(), "rate": model.rate() });
    let mut out = Outcome::new(Value::Null);
    let mut curves = Vec::new();
    if p.method != AmplitudeMethod::Volterra {
        let t = uniform_grid(p.t_max, p.points);
        let res = canonical_amplitude(&model, &t)?;
        summary["resolvent"] = json!({ "method": res.method, "max_abs": res.max_abs() });
        out.push("resolvent.csv", series_csv(&res)?);
        curves.push(("resolvent.csv".to_string(), "1:4", "|F| resolvent".to_string()));
    }
    if p.method != AmplitudeMethod::Resolvent {
        let h = p.h.unwrap_or_else(|| model.default_step());
        let vol = solve_volterra(&model, p.t_max, h)?;
        summary["volterra"] = json!({
            "h": vol.h,
            "steps": vol.t.len() - 1,
            "error_estimate": vol.error_estimate,
            "richardson": vol.richardson,
            "max_abs": vol.max_abs(),
        });
        if p.method == AmplitudeMethod::Both {
            let reference = canonical_amplitude(&model, &vol.t)?;
            summary["volterra"]["sup_distance_to_resolvent"] = Value::from(vol.sup_distance(&reference));
        }
        out.push("volterra.csv", series_csv(&vol)?);
        curves.push(("volterra.csv".to_string(), "1:4", "|F| volterra".to_string()));
    }
    out.summary = summary;
    out.figures.push(Figure { title: "survival amplitude".into(), logscale: "", curves });
    Ok(out)
}

fn thermo_limit(p: &ThermoParams, seed: u64) -> Result<Outcome, CliError> {
    let modes = p.grid().build()?;
    let model = CouplingModel::new(p.c, p.omega0, modes)?;
    let t = uniform_grid(p.t_max, p.points);
    let canonical = canonical_amplitude(&model, &t)?;
    let mut out = Outcome::new(Value::Null);
    out.push("canonical.csv", series_csv(&canonical)?);
    let mut table = CsvTable::new(Vec::new(), &["N", "method", "sup_distance", "max_stderr", "excess"]).map_err(csv_err)?;
    let mut rows = Vec::new();
    let mut curves = vec![("canonical.csv".to_string(), "1:2", "Re F canonical".to_string())];
    for &n in &p.n {
        let series = if use_exact(p.exact, model.modes.len(), n) {
            noncanonical_amplitude_exact(&model, n, &t)?
        } else {
            // a distinct stream family per N keeps the estimates independent
            noncanonical_amplitude_mc(&model, n, p.samples, seed.wrapping_add(n as u64), &t)?
        };
        let distance = series.sup_distance(&canonical);
        let stderr = series.max_stderr();
        let excess = distance - 2.0 * stderr;
        table
            .row([n.to_string(), method_name(&series), fmt_f64(distance), fmt_f64(stderr), fmt_f64(excess)])
            .map_err(csv_err)?;
        rows.push(json!({"N": n, "method": series.method, "sup_distance": distance, "max_stderr": stderr, "excess": excess}));
        let name = format!("amplitude_N{n}.csv");
        out.push(name.clone(), series_csv(&series)?);
        curves.push((name, "1:2", format!("Re F'_N, N = {n}")));
    }
    let excess: Vec<(f64, f64)> = rows
        .iter()
        .filter_map(|r| Some((r["N"].as_f64()?, r["excess"].as_f64()?)))
        .collect();
    let positive: Vec<(f64, f64)> = excess.iter().copied().filter(|&(_, e)| e > 0.0).collect();
    let slope = (positive.len() >= 2).then(|| {
        let xs: Vec<f64> = positive.iter().map(|p| p.0.ln()).collect();
        let ys: Vec<f64> = positive.iter().map(|p| p.1.ln()).collect();
        linear_fit(&xs, &ys)
    });
    out.summary = json!({
        "modes": model.modes.len(),
        "rows": rows,
        "excess_positive": positive.len() == excess.len(),
        "excess_decreasing": excess.windows(2).all(|w| w[1].1 < w[0].1),
        "log_log_fit": slope,
    });
    out.push("discrepancy.csv", table.finish().map_err(csv_err)?);
    out.figures.push(Figure { title: "survival amplitude, real part".into(), logscale: "", curves });
    out.figures.push(Figure {
        title: "discrepancy to the canonical amplitude".into(),
        logscale: "xy",
        curves: vec![("discrepancy.csv".into(), "1:3", "sup distance".into())],
    });
    Ok(out)
}

fn method_name(series: &AmplitudeSeries) -> String {
    serde_json::to_value(series.method).ok().and_then(|v| v.as_str().map(str::to_string)).unwrap_or_default()
}

fn linspace(a: f64, b: f64, points: usize) -> Vec<f64> {
    (0..points).map(|i| if i + 1 == points { b } else { a + (b - a) * i as f64 / (points - 1) as f64 }).collect()
}

fn propagator(p: &PropagatorParams) -> Result<Outcome, CliError> {
    let profile = RadialProfile::new(p.profile)?;
    let rows = d_z_table(&profile, p.r, &linspace(p.t_min, p.t_max, p.points))?;
    let equal_time = equal_time_commutator_check(&profile, p.r)?;
    let coincidence = coincidence_limit(&profile)?;
    let peak = if p.peak && p.r > 0.0 {
        match lightcone_deviation(&profile, p.r) {
            Ok(peak) => json!(peak),
            Err(PropagatorError::FlatLandscape(max)) => json!({"error": "no peak above the noise floor", "max_abs": max}),
            Err(e) => return Err(e.into()),
        }
    } else {
        Value::Null
    };
    let mut out = Outcome::new(json!({
        "r": p.r,
        "equal_time_abs": equal_time,
        "coincidence": coincidence,
        "peak": peak,
    }));
    out.push("dz.csv", write_d_z_csv(&rows, Vec::new())?);
    out.figures.push(Figure {
        title: format!("smeared commutator function at r = {}", p.r),
        logscale: "",
        curves: vec![("dz.csv".into(), "1:3", "D_Z".into())],
    });
    Ok(out)
}

fn radiation(p: &RadiationParams) -> Result<Outcome, CliError> {
    let profile = RadialProfile::new(p.profile)?;
    let current = RadialCurrent { g_plus: p.g_plus, g_minus: p.g_minus, exponent: p.exponent };
    let sweep = photon_number_sweep(&profile, &current, &cutoff_grid(p.eps_lo, p.eps_hi, p.points))?;
    let xs: Vec<f64> = sweep.iter().map(|(e, _)| -e.ln()).collect();
    let ys: Vec<f64> = sweep.iter().map(|(_, n)| *n).collect();
    let fit = linear_fit(&xs, &ys);
    let at_zero = match radiated_photon_number(&profile, &current, 0.0) {
        Ok(n) => json!({"finite": true, "value": n}),
        Err(PropagatorError::DeclaredDivergence(f)) => json!({"finite": false, "log_fit": f}),
        Err(e) => return Err(e.into()),
    };
    let energy = match radiated_four_momentum(&profile, &current, 0.0) {
        Ok((e, pm)) => json!({"finite": true, "energy": e, "momentum_abs": pm}),
        Err(PropagatorError::DeclaredDivergence(f)) => json!({"finite": false, "log_fit": f}),
        Err(e) => return Err(e.into()),
    };
    let mut out = Outcome::new(json!({
        "sweep_log_fit": fit,
        "photon_number_at_zero_cutoff": at_zero,
        "four_momentum": energy,
    }));
    out.push("sweep.csv", write_sweep_csv(&sweep, Vec::new())?);
    out.figures.push(Figure {
        title: "mean photon number against the infrared cutoff".into(),
        logscale: "x",
        curves: vec![("sweep.csv".into(), "1:2", "<n>(eps)".into())],
    });
    Ok(out)
}

fn renorm_sweep(p: &RenormParams) -> Result<Outcome, CliError> {
    let t = uniform_grid(p.t_max, p.points);
    let report = renormalization_sweep(&p.sweep(), &t)?;
    let mut table = CsvTable::new(Vec::new(), &["window", "lambda2", "modes", "plateau", "coupling", "drift"]).map_err(csv_err)?;
    for (i, w) in report.windows.iter().enumerate() {
        let drift = if i == 0 { String::new() } else { fmt_f64(report.drifts[i - 1]) };
        table
            .row([i.to_string(), fmt_f64(w.lambda2), w.modes.to_string(), fmt_f64(w.plateau), fmt_f64(w.coupling), drift])
            .map_err(csv_err)?;
    }
    let mut out = Outcome::new(json!({
        "windows": report.windows,
        "drifts": report.drifts,
        "decreasing": report.decreasing,
        "final_drift": report.drifts.last(),
        "threshold": p.threshold,
        "passed": report.passed,
    }));
    out.push("drift.csv", table.finish().map_err(csv_err)?);
    let mut curves = Vec::new();
    for (i, series) in report.amplitudes.iter().enumerate() {
        let name = format!("amplitude_w{i}.csv");
        out.push(name.clone(), series_csv(series)?);
        curves.push((name, "1:4", format!("|F|, window {i}")));
    }
    out.figures.push(Figure { title: "survival amplitude across window doublings".into(), logscale: "", curves });
    if !report.passed {
        out.failure = Some(format!(
            "renormalization drift check failed: drifts {:?}, decreasing = {}, threshold {}",
            report.drifts, report.decreasing, p.threshold
        ));
    }
    Ok(out)
}

/// A gnuplot script plotting the emitted CSVs, one figure per page.
pub fn plot_script(figures: &[Figure]) -> String {
    let mut s = String::from("# gnuplot script; run with `gnuplot -persist plot.gp` from this directory\nset datafile separator ','\nset grid\n");
    for (i, fig) in figures.iter().enumerate() {
        s.push_str(&format!("\nset title '{}'\n", fig.title.replace('\'', "")));
        if fig.logscale.is_empty() {
            s.push_str("unset logscale\n");
        } else {
            s.push_str(&format!("set logscale {}\n", fig.logscale));
        }
        let curves: Vec<String> = fig
            .curves
            .iter()
            .map(|(file, using, label)| format!("'{file}' every ::1 using {using} with linespoints title '{}'", label.replace('\'', "")))
            .collect();
        s.push_str(&format!("plot {}\n", curves.join(", \\\n     ")));
        if i + 1 < figures.len() {
            s.push_str("pause -1 'press enter for the next figure'\n");
        }
    }
    s
}
