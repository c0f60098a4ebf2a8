//! Grid evaluation across the analytic, oracle and noise modules.

use std::time::{Duration, Instant};

use ancilla_core::analytic::{envelope, optimal_probe_bloch, optimal_time_points, qfi_eq33, qfi_protocol};
use ancilla_core::model::{AncillaStateSpec, BlochVector, ProtocolSpec};
use ancilla_core::noise::{
    f_env, f_env_max, gamma_threshold, qfi_noisy, r_perturbative, segment_count, segmented_qfi, t_opt,
    NoiseSpec,
};
use ancilla_core::oracle::NumericQfi;
use ancilla_core::Error;
use log::{debug, info};

use crate::config::{ExperimentConfig, Method, ProbeChoice, SweepAxis};
use crate::error::LabResult;

pub const SCHEMA_VERSION: u32 = 1;

/// A named output column with its unit.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Column {
    pub name: &'static str,
    pub unit: &'static str,
}

const fn col(name: &'static str, unit: &'static str) -> Column {
    Column { name, unit }
}

const QFI_UNIT: &str = "1/omega^2";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Status {
    Ok,
    /// A degenerate branch frequency or vanishing sensitivity.
    Degenerate,
    /// At least one requested value could not be evaluated at this point.
    Skipped,
}

impl Status {
    pub fn as_str(self) -> &'static str {
        match self {
            Status::Ok => "ok",
            Status::Degenerate => "degenerate",
            Status::Skipped => "skipped",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "ok" => Some(Status::Ok),
            "degenerate" => Some(Status::Degenerate),
            "skipped" => Some(Status::Skipped),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub coords: Vec<f64>,
    /// `None` marks a value that failed; the row status says why.
    pub values: Vec<Option<f64>>,
    pub status: Status,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub schema_version: u32,
    pub name: String,
    pub axis: SweepAxis,
    pub coord_columns: Vec<Column>,
    pub value_columns: Vec<Column>,
    pub rows: Vec<Row>,
    pub elapsed: Duration,
}

impl SweepResult {
    pub fn column_names(&self) -> Vec<&'static str> {
        self.coord_columns
            .iter()
            .chain(&self.value_columns)
            .map(|c| c.name)
            .collect()
    }

    /// Values of a named column, coordinates included.
    pub fn column(&self, name: &str) -> Option<Vec<Option<f64>>> {
        if let Some(i) = self.coord_columns.iter().position(|c| c.name == name) {
            return Some(self.rows.iter().map(|r| Some(r.coords[i])).collect());
        }
        let i = self.value_columns.iter().position(|c| c.name == name)?;
        Some(self.rows.iter().map(|r| r.values[i]).collect())
    }
}

/// How a failed evaluation is reported.
pub fn classify(err: &Error) -> Status {
    match err {
        Error::DegenerateFrequency { .. } | Error::ZeroSensitivity { .. } => Status::Degenerate,
        _ => Status::Skipped,
    }
}

/// Evaluates `f` over `items` on `jobs` threads with a static contiguous
/// partition; the output keeps input order.
pub fn par_map<T: Sync, R: Send>(items: &[T], jobs: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let jobs = jobs.clamp(1, items.len().max(1));
    if jobs == 1 {
        return items.iter().map(&f).collect();
    }
    let chunk = items.len().div_ceil(jobs);
    std::thread::scope(|scope| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| {
                let f = &f;
                scope.spawn(move || part.iter().map(f).collect::<Vec<R>>())
            })
            .collect();
        handles
            .into_iter()
            .flat_map(|h| h.join().expect("sweep worker panicked"))
            .collect()
    })
}

/// Default worker count.
pub fn default_jobs() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

/// Probe Bloch vector for the configured choice.
pub fn resolve_probe(cfg: &ExperimentConfig) -> ancilla_core::Result<BlochVector> {
    match cfg.probe {
        ProbeChoice::Explicit(v) => Ok(v),
        ProbeChoice::Optimal => {
            let tp = optimal_time_points(&cfg.protocol, 1, ancilla_core::analytic::DEFAULT_DENOMINATOR_BOUND)?;
            optimal_probe_bloch(&cfg.protocol, &tp[0])
        }
    }
}

/// Accumulates one row while tracking the worst failure.
struct RowBuilder {
    values: Vec<Option<f64>>,
    status: Status,
}

impl RowBuilder {
    fn new() -> Self {
        Self {
            values: Vec::new(),
            status: Status::Ok,
        }
    }

    fn push(&mut self, r: ancilla_core::Result<f64>) {
        match r {
            Ok(v) if v.is_finite() => self.values.push(Some(v)),
            Ok(v) => {
                debug!("non-finite value {v}");
                self.values.push(None);
                self.fail(Status::Skipped);
            }
            Err(e) => {
                debug!("point failed: {e}");
                self.values.push(None);
                self.fail(classify(&e));
            }
        }
    }

    fn fail(&mut self, s: Status) {
        if self.status != Status::Degenerate {
            self.status = s;
        }
    }

    fn finish(self, coords: Vec<f64>) -> Row {
        Row {
            coords,
            values: self.values,
            status: self.status,
        }
    }
}

/// Per-spec evaluators shared by all points of a QFI sweep.
struct QfiContext {
    spec: ProtocolSpec,
    probe: ancilla_core::Result<BlochVector>,
    ancilla: AncillaStateSpec,
    oracle: Option<ancilla_core::Result<NumericQfi>>,
    noise: Option<NoiseSpec>,
    methods: Vec<Method>,
}

impl QfiContext {
    fn new(cfg: &ExperimentConfig, spec: ProtocolSpec) -> LabResult<Self> {
        let oracle = cfg.wants(Method::Oracle).then(|| NumericQfi::with_default_step(&spec));
        let noise = if cfg.wants(Method::NoiseAnalytic) {
            Some(NoiseSpec::new(spec.clone(), cfg.noise.gamma_noise)?)
        } else {
            None
        };
        Ok(Self {
            probe: resolve_probe(cfg),
            spec,
            ancilla: cfg.ancilla.resolve(),
            oracle,
            noise,
            methods: cfg.methods.clone(),
        })
    }

    fn columns(methods: &[Method]) -> Vec<Column> {
        let mut cols = Vec::new();
        for m in methods {
            match m {
                Method::Analytic => cols.push(col("qfi_analytic", QFI_UNIT)),
                Method::Oracle => cols.push(col("qfi_oracle", QFI_UNIT)),
                Method::Eq33 => cols.push(col("qfi_eq33", QFI_UNIT)),
                Method::Envelope | Method::NoiseAnalytic => {}
            }
        }
        cols.push(col("envelope", QFI_UNIT));
        if methods.contains(&Method::NoiseAnalytic) {
            cols.push(col("qfi_noisy", QFI_UNIT));
            cols.push(col("envelope_noisy", QFI_UNIT));
        }
        cols
    }

    fn eval(&self, t: f64, mut coords: Vec<f64>) -> Row {
        let mut row = RowBuilder::new();
        coords.push(t);
        let probe = self.probe.clone();
        for m in &self.methods {
            match m {
                Method::Analytic => row.push(probe.clone().and_then(|v| qfi_protocol(&self.spec, v, self.ancilla, t))),
                Method::Oracle => {
                    let oracle = self.oracle.as_ref().expect("oracle requested");
                    row.push(match (oracle, probe.clone()) {
                        (Ok(o), Ok(v)) => o.eval(v, self.ancilla, t),
                        (Err(e), _) => Err(e.clone()),
                        (_, Err(e)) => Err(e),
                    })
                }
                Method::Eq33 => row.push(probe.clone().and_then(|v| qfi_eq33(&self.spec, v, t))),
                Method::Envelope | Method::NoiseAnalytic => {}
            }
        }
        row.push(Ok(envelope(&self.spec, t)));
        if let Some(ns) = &self.noise {
            let n = self.spec.n_probes;
            row.push(r_perturbative(ns, t).and_then(|r| qfi_noisy(r.value, r.d_omega, n)));
            row.push(Ok(f_env(ns, n, t)));
        }
        row.finish(coords)
    }
}

/// Evaluates the configured sweep.
pub fn run_experiment(cfg: &ExperimentConfig, jobs: usize) -> LabResult<SweepResult> {
    let start = Instant::now();
    let values = cfg.axis_values();
    let (coord_columns, value_columns, rows) = match cfg.sweep.axis {
        SweepAxis::Time => {
            let ctx = QfiContext::new(cfg, cfg.protocol.clone())?;
            let rows = par_map(&values, jobs, |&t| ctx.eval(t, Vec::new()));
            (vec![col("t", "1/omega")], QfiContext::columns(&cfg.methods), rows)
        }
        SweepAxis::Probes => {
            let t = match cfg.sweep.time {
                Some(t) => t,
                None => optimal_time_points(&cfg.protocol, 1, ancilla_core::analytic::DEFAULT_DENOMINATOR_BOUND)?[0].t,
            };
            let contexts = values
                .iter()
                .map(|&n| QfiContext::new(cfg, cfg.protocol.with_probes(n as usize)))
                .collect::<LabResult<Vec<_>>>()?;
            let idx: Vec<usize> = (0..values.len()).collect();
            let rows = par_map(&idx, jobs, |&i| contexts[i].eval(t, vec![values[i]]));
            (
                vec![col("n_probes", "count"), col("t", "1/omega")],
                QfiContext::columns(&cfg.methods),
                rows,
            )
        }
        SweepAxis::NoiseRate => {
            let n = cfg.protocol.n_probes;
            let lambda = cfg.protocol.lambda;
            let omega = cfg.protocol.omega;
            let rows = par_map(&values, jobs, |&gamma| {
                let opt = t_opt(n, gamma);
                let mut row = RowBuilder::new();
                row.push(Ok(opt.closed_form));
                row.push(Ok(opt.numeric));
                row.push(Ok(f_env_max(lambda, gamma, n)));
                row.push(NoiseSpec::new(cfg.protocol.clone(), gamma).map(|ns| f_env(&ns, n, opt.numeric)));
                row.push(Ok(gamma_threshold(lambda, omega, n)));
                row.push(Ok(f_env_max(lambda, gamma, n) / opt.closed_form));
                row.finish(vec![gamma])
            });
            (
                vec![col("gamma_noise", "omega")],
                vec![
                    col("t_opt", "1/omega"),
                    col("t_opt_numeric", "1/omega"),
                    col("f_env_max", QFI_UNIT),
                    col("f_env_at_argmax", QFI_UNIT),
                    col("gamma_threshold", "omega"),
                    col("qfi_rate", "1/omega"),
                ],
                rows,
            )
        }
        SweepAxis::TotalTime => {
            let ns = cfg.noise_spec()?.expect("checked at parse time");
            let n = cfg.protocol.n_probes;
            let gamma = ns.gamma_noise;
            let t_op = t_opt(n, gamma).closed_form;
            let per_segment = f_env_max(cfg.protocol.lambda, gamma, n);
            let rows = par_map(&values, jobs, |&total| {
                let m = segment_count(n, gamma, total);
                let mut row = RowBuilder::new();
                row.push(Ok(m as f64));
                row.push(Ok(segmented_qfi(&ns, n, total)));
                // completed segments plus the running segment's envelope
                let into = (total - m as f64 * t_op).max(0.0);
                row.push(Ok(m as f64 * per_segment + f_env(&ns, n, into)));
                row.push(Ok(f_env(&ns, n, total)));
                row.finish(vec![total])
            });
            (
                vec![col("total_time", "1/omega")],
                vec![
                    col("segments", "count"),
                    col("qfi_segmented", QFI_UNIT),
                    col("qfi_running", QFI_UNIT),
                    col("single_shot", QFI_UNIT),
                ],
                rows,
            )
        }
    };
    let elapsed = start.elapsed();
    info!(
        "{}: {} points on axis {} in {:.3?}",
        cfg.name,
        rows.len(),
        cfg.sweep.axis.as_str(),
        elapsed
    );
    Ok(SweepResult {
        schema_version: SCHEMA_VERSION,
        name: cfg.name.clone(),
        axis: cfg.sweep.axis,
        coord_columns,
        value_columns,
        rows,
        elapsed,
    })
}
