//! Experiment configuration in TOML.
//!
//! Every section and key is optional; missing values fall back to the
//! defaults listed on each field.

use std::path::PathBuf;

use ancilla_core::model::{AncillaStateSpec, BlochVector, ProtocolSpec, MAX_JOINT_PROBES};
use ancilla_core::noise::NoiseSpec;
use ancilla_core::oracle::DissipatorVariant;
use serde::Deserialize;

use crate::error::{LabError, LabResult};

/// Probe state on the Bloch sphere.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ProbeChoice {
    /// Direction of `d_omega k` at the first optimal time point.
    Optimal,
    Explicit(BlochVector),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AncillaChoice {
    /// `alpha = pi/4`, `phi = 0`.
    Optimal,
    Explicit(AncillaStateSpec),
}

impl AncillaChoice {
    pub fn resolve(self) -> AncillaStateSpec {
        match self {
            AncillaChoice::Optimal => AncillaStateSpec::OPTIMAL,
            AncillaChoice::Explicit(a) => a,
        }
    }
}

/// Uniform grid `start..=stop` with `steps` points.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid {
    pub start: f64,
    pub stop: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn points(&self) -> Vec<f64> {
        let span = self.stop - self.start;
        let last = (self.steps - 1) as f64;
        (0..self.steps)
            .map(|i| self.start + span * i as f64 / last)
            .collect()
    }
}

impl Default for TimeGrid {
    fn default() -> Self {
        Self {
            start: 0.0,
            stop: 20.0,
            steps: 401,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    /// Interrogation time from the time grid.
    Time,
    /// Probe count from `sweep.values`, at a fixed time.
    Probes,
    /// Dephasing rate from `sweep.values`.
    NoiseRate,
    /// Total resource time of the segmented strategy, from the time grid or `sweep.values`.
    TotalTime,
}

impl SweepAxis {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepAxis::Time => "time",
            SweepAxis::Probes => "probes",
            SweepAxis::NoiseRate => "noise-rate",
            SweepAxis::TotalTime => "total-time",
        }
    }

    fn parse(s: &str) -> LabResult<Self> {
        match s {
            "time" => Ok(SweepAxis::Time),
            "probes" => Ok(SweepAxis::Probes),
            "noise-rate" => Ok(SweepAxis::NoiseRate),
            "total-time" => Ok(SweepAxis::TotalTime),
            other => Err(LabError::config(
                "sweep.axis",
                format!("unknown axis `{other}` (time, probes, noise-rate, total-time)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    /// Fixed interrogation time for the probes axis; the first optimal
    /// time point when absent.
    pub time: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseConfig {
    pub enabled: bool,
    pub gamma_noise: f64,
    pub variant: DissipatorVariant,
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            enabled: false,
            gamma_noise: 1e-3,
            variant: DissipatorVariant::ProbesOnly,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Method {
    Analytic,
    Oracle,
    Eq33,
    Envelope,
    NoiseAnalytic,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Analytic => "analytic",
            Method::Oracle => "oracle",
            Method::Eq33 => "eq33",
            Method::Envelope => "envelope",
            Method::NoiseAnalytic => "noise-analytic",
        }
    }

    fn parse(s: &str) -> LabResult<Self> {
        match s {
            "analytic" => Ok(Method::Analytic),
            "oracle" => Ok(Method::Oracle),
            "eq33" => Ok(Method::Eq33),
            "envelope" => Ok(Method::Envelope),
            "noise-analytic" => Ok(Method::NoiseAnalytic),
            other => Err(LabError::config(
                "methods",
                format!("unknown method `{other}` (analytic, oracle, eq33, envelope, noise-analytic)"),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
    /// Significant digits in the CSV, default 12.
    pub precision: usize,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            csv: None,
            svg: None,
            precision: 12,
        }
    }
}

/// A fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub protocol: ProtocolSpec,
    pub probe: ProbeChoice,
    pub ancilla: AncillaChoice,
    pub time_grid: TimeGrid,
    pub sweep: SweepSpec,
    pub noise: NoiseConfig,
    /// Sorted and deduplicated.
    pub methods: Vec<Method>,
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn wants(&self, m: Method) -> bool {
        self.methods.contains(&m)
    }

    /// The noise model, when enabled.
    pub fn noise_spec(&self) -> LabResult<Option<NoiseSpec>> {
        if !self.noise.enabled {
            return Ok(None);
        }
        Ok(Some(NoiseSpec::new(self.protocol.clone(), self.noise.gamma_noise)?))
    }

    /// Values along the sweep axis.
    pub fn axis_values(&self) -> Vec<f64> {
        match self.sweep.axis {
            SweepAxis::Time => self.time_grid.points(),
            SweepAxis::TotalTime if self.sweep.values.is_empty() => self.time_grid.points(),
            _ => self.sweep.values.clone(),
        }
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawConfig {
    name: Option<String>,
    methods: Option<Vec<String>>,
    protocol: RawProtocol,
    probe: RawProbe,
    ancilla: RawAncilla,
    time_grid: RawGrid,
    sweep: RawSweep,
    noise: RawNoise,
    output: RawOutput,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawProtocol {
    omega: Option<f64>,
    omega_a: Option<f64>,
    g: Option<f64>,
    lambda: Option<f64>,
    m: Option<[f64; 3]>,
    n: Option<[f64; 3]>,
    a: Option<[f64; 2]>,
    h: Option<[f64; 2]>,
    n_probes: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum RawBloch {
    Named(String),
    Vector([f64; 3]),
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawProbe {
    bloch: Option<RawBloch>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawAncilla {
    state: Option<String>,
    alpha: Option<f64>,
    phi: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawGrid {
    start: Option<f64>,
    stop: Option<f64>,
    steps: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawSweep {
    axis: Option<String>,
    values: Option<Vec<f64>>,
    time: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawNoise {
    enabled: Option<bool>,
    gamma_noise: Option<f64>,
    variant: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields, default)]
struct RawOutput {
    csv: Option<PathBuf>,
    svg: Option<PathBuf>,
    precision: Option<usize>,
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
    (line, column)
}

/// Parses and validates a config document.
pub fn parse_config(text: &str) -> LabResult<ExperimentConfig> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| {
        let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
        LabError::Parse {
            line,
            column,
            message: e.message().to_string(),
        }
    })?;
    resolve(raw)
}

/// Reads and parses a config file.
pub fn load_config(path: &std::path::Path) -> LabResult<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    parse_config(&text)
}

fn resolve(raw: RawConfig) -> LabResult<ExperimentConfig> {
    let d = ProtocolSpec::default();
    let p = raw.protocol;
    let protocol = ProtocolSpec {
        omega: p.omega.unwrap_or(d.omega),
        omega_a: p.omega_a.unwrap_or(d.omega_a),
        g: p.g.unwrap_or(d.g),
        lambda: p.lambda.unwrap_or(d.lambda),
        m: p.m.unwrap_or(d.m),
        n: p.n.unwrap_or(d.n),
        a: p.a.unwrap_or(d.a),
        h: p.h.unwrap_or(d.h),
        n_probes: p.n_probes.unwrap_or(d.n_probes),
    }
    .validate()?;

    let probe = match raw.probe.bloch {
        None => ProbeChoice::Optimal,
        Some(RawBloch::Named(s)) if s == "optimal" => ProbeChoice::Optimal,
        Some(RawBloch::Named(s)) => {
            return Err(LabError::config("probe.bloch", format!("expected \"optimal\" or [x, y, z], got `{s}`")))
        }
        Some(RawBloch::Vector(v)) => ProbeChoice::Explicit(BlochVector::pure(v[0], v[1], v[2])?),
    };

    let ancilla = match (raw.ancilla.state.as_deref(), raw.ancilla.alpha, raw.ancilla.phi) {
        (None | Some("optimal"), None, None) => AncillaChoice::Optimal,
        (None | Some("explicit"), alpha, phi) => AncillaChoice::Explicit(AncillaStateSpec::new(
            alpha.unwrap_or(AncillaStateSpec::OPTIMAL.alpha),
            phi.unwrap_or(AncillaStateSpec::OPTIMAL.phi),
        )),
        (Some("optimal"), _, _) => {
            return Err(LabError::config("ancilla", "state = \"optimal\" cannot be combined with alpha/phi"))
        }
        (Some(other), _, _) => {
            return Err(LabError::config("ancilla.state", format!("expected \"optimal\" or \"explicit\", got `{other}`")))
        }
    };

    let dg = TimeGrid::default();
    let time_grid = TimeGrid {
        start: raw.time_grid.start.unwrap_or(dg.start),
        stop: raw.time_grid.stop.unwrap_or(dg.stop),
        steps: raw.time_grid.steps.unwrap_or(dg.steps),
    };
    if !(time_grid.start.is_finite() && time_grid.stop.is_finite()) || time_grid.stop <= time_grid.start {
        return Err(LabError::config("time_grid", format!("need start < stop, got {} .. {}", time_grid.start, time_grid.stop)));
    }
    if time_grid.start < 0.0 {
        return Err(LabError::config("time_grid.start", "times must be non-negative"));
    }
    if time_grid.steps < 2 {
        return Err(LabError::config("time_grid.steps", format!("need at least 2 points, got {}", time_grid.steps)));
    }

    let axis = SweepAxis::parse(raw.sweep.axis.as_deref().unwrap_or("time"))?;
    let values = raw.sweep.values.unwrap_or_default();
    if matches!(axis, SweepAxis::Probes | SweepAxis::NoiseRate) && values.is_empty() {
        return Err(LabError::config("sweep.values", format!("axis `{}` needs a non-empty value list", axis.as_str())));
    }
    if raw.sweep.time.is_some_and(|t| !(t >= 0.0)) {
        return Err(LabError::config("sweep.time", "must be non-negative"));
    }
    let sweep = SweepSpec {
        axis,
        values,
        time: raw.sweep.time,
    };

    let dn = NoiseConfig::default();
    let noise = NoiseConfig {
        enabled: raw.noise.enabled.unwrap_or(dn.enabled),
        gamma_noise: raw.noise.gamma_noise.unwrap_or(dn.gamma_noise),
        variant: match raw.noise.variant {
            Some(v) => v.parse()?,
            None => dn.variant,
        },
    };

    let mut methods = match raw.methods {
        Some(list) => list.iter().map(|s| Method::parse(s)).collect::<LabResult<Vec<_>>>()?,
        None => vec![Method::Analytic, Method::Envelope],
    };
    methods.sort();
    methods.dedup();
    if methods.is_empty() {
        return Err(LabError::config("methods", "at least one method is required"));
    }

    let precision = raw.output.precision.unwrap_or(12);
    if !(1..=17).contains(&precision) {
        return Err(LabError::config("output.precision", format!("must be 1..=17 digits, got {precision}")));
    }
    let output = OutputConfig {
        csv: raw.output.csv,
        svg: raw.output.svg,
        precision,
    };

    let cfg = ExperimentConfig {
        name: raw.name.unwrap_or_else(|| "experiment".into()),
        protocol,
        probe,
        ancilla,
        time_grid,
        sweep,
        noise,
        methods,
        output,
    };
    check_consistency(&cfg)?;
    Ok(cfg)
}

fn check_consistency(cfg: &ExperimentConfig) -> LabResult<()> {
    let axis = cfg.sweep.axis;
    if axis == SweepAxis::Probes {
        for &v in &cfg.sweep.values {
            if !(v >= 1.0 && v.fract() == 0.0) {
                return Err(LabError::config("sweep.values", format!("probe counts must be positive integers, got {v}")));
            }
        }
    }
    if cfg.wants(Method::Oracle) {
        let largest = match axis {
            SweepAxis::Probes => cfg.sweep.values.iter().fold(0.0f64, |a, &b| a.max(b)) as usize,
            _ => cfg.protocol.n_probes,
        };
        if largest > MAX_JOINT_PROBES {
            return Err(LabError::config(
                "methods",
                format!("oracle needs at most {MAX_JOINT_PROBES} probes, config reaches {largest}"),
            ));
        }
    }
    let needs_noise = cfg.wants(Method::NoiseAnalytic) || matches!(axis, SweepAxis::NoiseRate | SweepAxis::TotalTime);
    if needs_noise {
        if !cfg.noise.enabled {
            return Err(LabError::config("noise.enabled", "the requested sweep needs the noise model enabled"));
        }
        cfg.noise_spec()?;
        let rates: Vec<f64> = match axis {
            SweepAxis::NoiseRate => cfg.sweep.values.clone(),
            _ => vec![cfg.noise.gamma_noise],
        };
        if let Some(bad) = rates.iter().find(|&&g| !(g > 0.0 && g.is_finite())) {
            return Err(LabError::config("noise.gamma_noise", format!("rate must be positive, got {bad}")));
        }
    }
    if axis == SweepAxis::TotalTime && cfg.sweep.values.iter().any(|&t| !(t > 0.0)) {
        return Err(LabError::config("sweep.values", "total times must be positive"));
    }
    Ok(())
}
