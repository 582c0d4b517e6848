//! Schema-level pre-flight: derived sizes and predicted memory, computed
//! without running the experiment.

use noncanon::amplitude::{CouplingModel, TUPLE_CAP};
use noncanon::combinatorics::GUARD_BAND;
use serde::Serialize;

use crate::config::{AmplitudeMethod, ExactPolicy, Params, RunConfig};
use crate::error::CliError;

pub const MEMORY_CAP_BYTES: u64 = 2 << 30;
/// Largest Volterra grid at the finest refinement; the solver is quadratic.
pub const VOLTERRA_STEP_CAP: u64 = 100_000;
/// Largest number of coincidence classes tabulated.
pub const PARTITION_CAP: u128 = 200_000;
/// Largest number of rows in any single table.
pub const ROW_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, Serialize)]
pub struct Breach {
    pub what: String,
    pub suggestion: String,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Preflight {
    pub quantities: Vec<(String, String)>,
    pub predicted_memory_bytes: u64,
    pub breaches: Vec<Breach>,
}

impl Preflight {
    fn note(&mut self, name: &str, value: impl ToString) {
        self.quantities.push((name.to_string(), value.to_string()));
    }

    fn breach(&mut self, what: String, suggestion: &str) {
        self.breaches.push(Breach { what, suggestion: suggestion.to_string() });
    }

    fn rows(&mut self, key: &str, rows: u64) {
        if rows > ROW_CAP {
            self.breach(format!("{key} = {rows} rows exceeds the cap of {ROW_CAP}"), &format!("reduce `{key}`"));
        }
    }

    /// Rendered for `validate`: one `name: value` line per quantity, then
    /// one warning per breach.
    pub fn render(&self) -> String {
        let mut out = String::new();
        for (k, v) in &self.quantities {
            out.push_str(&format!("{k}: {v}\n"));
        }
        out.push_str(&format!("predicted memory: {:.1} MiB\n", self.predicted_memory_bytes as f64 / (1u64 << 20) as f64));
        for b in &self.breaches {
            out.push_str(&format!("warning: {}; suggestion: {}\n", b.what, b.suggestion));
        }
        out
    }
}

/// Number of integer partitions of `m`, saturating.
pub fn partition_count(m: u32) -> u128 {
    let m = m as usize;
    let mut p = vec![0u128; m + 1];
    p[0] = 1;
    for part in 1..=m {
        for total in part..=m {
            p[total] = p[total].saturating_add(p[total - part]);
        }
    }
    p[m]
}

/// `M^N`, saturating.
pub fn tuple_count(modes: usize, n: usize) -> u128 {
    (modes as u128).checked_pow(n as u32).unwrap_or(u128::MAX)
}

/// Number of frequency multisets of size `N` over `M` modes, `C(N+M−1, N)`.
pub fn multiset_count(modes: usize, n: usize) -> f64 {
    let ln = libm::lgamma((n + modes) as f64) - libm::lgamma((n + 1) as f64) - libm::lgamma(modes as f64);
    ln.exp().round()
}

/// Whether the thermodynamic-limit run uses the exact tuple sum at `N`.
pub fn use_exact(policy: ExactPolicy, modes: usize, n: usize) -> bool {
    match policy {
        ExactPolicy::Always => true,
        ExactPolicy::Never => false,
        ExactPolicy::Auto => tuple_count(modes, n) <= TUPLE_CAP,
    }
}

const C16: u64 = 16;

pub fn preflight(cfg: &RunConfig) -> Result<Preflight, CliError> {
    let mut pf = Preflight::default();
    pf.note("command", cfg.command.as_str());
    pf.note("seed", cfg.seed);
    pf.note("output_dir", cfg.output_dir.display());
    let mut memory: u64 = 0;
    match &cfg.params {
        Params::Combinatorics(p) => {
            let classes = partition_count(p.m);
            pf.note("coincidence classes", classes);
            pf.note("ordered tuples", format!("{}^{}", p.n, p.m));
            if classes > PARTITION_CAP {
                pf.breach(format!("{classes} coincidence classes for m = {} exceed {PARTITION_CAP}", p.m), "reduce `m`");
            }
            memory = (classes.min(u64::MAX as u128) as u64).saturating_mul(64 + 8 * p.m as u64);
        }
        Params::Excitations(p) => {
            let modes = p.grid().build()?;
            pf.note("modes", modes.len());
            pf.note("N", format!("{:?}", p.n));
            pf.note("series length", p.m_max + 1 + GUARD_BAND);
            pf.rows("m_max", p.m_max as u64);
            memory = 8 * 4 * (p.m_max + 1 + GUARD_BAND) as u64 * p.n.len() as u64;
        }
        Params::Amplitude(p) => {
            let modes = p.grid().build()?;
            let m = modes.len() as u64;
            let omega0 = p.resolve_omega0(&modes);
            pf.note("modes", m);
            pf.note("omega0", omega0);
            pf.note("bordered matrix dimension", m + 1);
            pf.rows("points", p.points as u64);
            memory += 6 * C16 * (m + 1) * (m + 1) + 2 * C16 * p.points as u64;
            if p.method != AmplitudeMethod::Resolvent {
                let model = CouplingModel::new(p.c, omega0, modes)?;
                let h = p.h.unwrap_or_else(|| model.default_step());
                let steps = (p.t_max / h).round().max(1.0) as u64;
                pf.note("volterra step", h);
                pf.note("volterra steps (coarse, finest)", format!("{steps}, {}", 4 * steps));
                if 4 * steps > VOLTERRA_STEP_CAP {
                    pf.breach(
                        format!("Volterra grid of {} steps exceeds {VOLTERRA_STEP_CAP}", 4 * steps),
                        "raise `h` or lower `t_max`",
                    );
                }
                memory += 2 * C16 * 7 * steps.min(u64::MAX / 1024);
            }
        }
        Params::ThermoLimit(p) => {
            let modes = p.grid().build()?;
            let m = modes.len();
            pf.note("modes", m);
            pf.rows("points", p.points as u64);
            let points = p.points as u64;
            let mut peak: u64 = 0;
            for &n in &p.n {
                let tuples = tuple_count(m, n);
                let exact = use_exact(p.exact, m, n);
                let cost = if exact {
                    let groups = multiset_count(m, n);
                    let bytes = groups * (points * C16 + 8 * m as u64) as f64;
                    pf.note(&format!("N = {n}"), format!("exact, {tuples} tuples in {groups} multisets"));
                    if tuples > TUPLE_CAP {
                        pf.breach(
                            format!("exact sum at N = {n} needs {tuples} tuples, cap is {TUPLE_CAP}"),
                            "set `exact` to \"auto\" or drop large N",
                        );
                    }
                    bytes.min(u64::MAX as f64) as u64
                } else {
                    let chunks = p.samples.div_ceil(noncanon::amplitude::MC_CHUNK) as u64;
                    pf.note(&format!("N = {n}"), format!("monte carlo, {} samples in {chunks} chunks", p.samples));
                    chunks * points * 24 + C16 * ((n + 1) * (n + 1)) as u64 * 6
                };
                peak = peak.max(cost);
            }
            memory = peak + (p.n.len() as u64 + 1) * points * 32 + 6 * C16 * ((m + 1) * (m + 1)) as u64;
        }
        Params::Propagator(p) => {
            pf.note("time points", p.points);
            pf.rows("points", p.points as u64);
            memory = 24 * p.points as u64;
        }
        Params::Radiation(p) => {
            pf.note("cutoffs", p.points);
            pf.rows("points", p.points as u64);
            memory = 16 * p.points as u64;
        }
        Params::RenormSweep(p) => {
            let sweep = p.sweep();
            let mut largest = 0;
            for i in 0..=p.doublings {
                let n = sweep.window(p.base_width * 2f64.powi(i as i32))?.len();
                largest = largest.max(n);
            }
            pf.note("windows", p.doublings + 1);
            pf.note("largest window modes", largest);
            pf.rows("points", p.points as u64);
            let d = largest as u64 + 1;
            memory = 6 * C16 * d * d + (p.doublings as u64 + 1) * p.points as u64 * C16;
        }
    }
    pf.predicted_memory_bytes = memory;
    if memory > MEMORY_CAP_BYTES {
        pf.breach(
            format!("predicted memory {} MiB exceeds {} MiB", memory >> 20, MEMORY_CAP_BYTES >> 20),
            "reduce mode count, oscillator numbers or time points",
        );
    }
    Ok(pf)
}
