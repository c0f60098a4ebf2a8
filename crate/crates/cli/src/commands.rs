//! Subcommand bodies, kept out of `main` so tests can drive them.

use std::io::Write;
use std::path::{Path, PathBuf};

use ancilla_core::analytic::{envelope, optimal_probe_bloch, optimal_time_points, qfi_protocol, DEFAULT_DENOMINATOR_BOUND};
use ancilla_core::model::AncillaStateSpec;
use log::warn;

use crate::config::{parse_config, ExperimentConfig, SweepAxis};
use crate::error::{LabError, LabResult};
use crate::figure::{emit_figure, FigureStyle};
use crate::output::{emit_csv, write_csv};
use crate::sweep::run_experiment;
use crate::validate::{validate_config, ValidateOptions};

pub const FIG2A: &str = include_str!("../configs/fig2a.cfg");
pub const FIG2B: &str = include_str!("../configs/fig2b.cfg");
pub const FIG3: &str = include_str!("../configs/fig3.cfg");

/// Where a sweep writes its outputs.
#[derive(Debug, Clone, Default)]
pub struct SweepTargets {
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

/// Files written by a sweep.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Written {
    pub csv: Option<PathBuf>,
    pub svg: Option<PathBuf>,
}

fn style_for(cfg: &ExperimentConfig) -> FigureStyle {
    match cfg.sweep.axis {
        SweepAxis::Time => FigureStyle::PeakMarkers,
        _ => FigureStyle::Lines,
    }
}

/// Runs the sweep and writes CSV (and SVG, drawn from that CSV). Flag paths
/// override the config; without any CSV path the table goes to `stdout`.
pub fn cmd_sweep(cfg: &ExperimentConfig, jobs: usize, targets: &SweepTargets, stdout: &mut dyn Write) -> LabResult<Written> {
    let csv = targets.csv.clone().or_else(|| cfg.output.csv.clone());
    let svg = targets.svg.clone().or_else(|| cfg.output.svg.clone());
    let result = run_experiment(cfg, jobs)?;
    let Some(csv) = csv else {
        if svg.is_some() {
            return Err(LabError::config("output.csv", "a figure is drawn from the CSV file, so a CSV path is required"));
        }
        write_csv(&result, cfg.output.precision, stdout).map_err(|e| LabError::Csv {
            path: PathBuf::from("<stdout>"),
            message: e.to_string(),
        })?;
        return Ok(Written::default());
    };
    emit_csv(&result, cfg.output.precision, &csv)?;
    if let Some(svg) = &svg {
        emit_figure(&csv, svg, style_for(cfg))?;
    }
    let bad = result.rows.iter().filter(|r| r.status != crate::sweep::Status::Ok).count();
    if bad > 0 {
        warn!("{bad} of {} points did not evaluate cleanly", result.rows.len());
    }
    Ok(Written { csv: Some(csv), svg })
}

/// Runs a built-in figure config with outputs placed in `out_dir`.
pub fn cmd_builtin(text: &str, out_dir: &Path, jobs: usize) -> LabResult<Written> {
    let cfg = parse_config(text)?;
    let place = |p: &Option<PathBuf>| p.as_ref().map(|p| out_dir.join(p));
    let targets = SweepTargets {
        csv: place(&cfg.output.csv),
        svg: place(&cfg.output.svg),
    };
    cmd_sweep(&cfg, jobs, &targets, &mut std::io::sink())
}

/// Prints the identity report; the exit status is 0 iff all pass.
pub fn cmd_validate(cfg: &ExperimentConfig, opts: &ValidateOptions, stdout: &mut dyn Write) -> LabResult<i32> {
    let report = validate_config(cfg, opts)?;
    write!(stdout, "{report}").map_err(|e| LabError::io("<stdout>", e))?;
    if !report.passed() {
        writeln!(stdout, "failing identities: {}", report.failing().join(", ")).map_err(|e| LabError::io("<stdout>", e))?;
    }
    Ok(report.exit_code())
}

/// Prints the optimal time points with their probe states and QFI.
pub fn cmd_optimal_points(cfg: &ExperimentConfig, count: usize, stdout: &mut dyn Write) -> LabResult<()> {
    let spec = &cfg.protocol;
    let points = optimal_time_points(spec, count, DEFAULT_DENOMINATOR_BOUND)?;
    let io = |e| LabError::io("<stdout>", e);
    writeln!(stdout, "# j  t                kind                      error        |gamma| bound  probe (x, y, z)                 qfi              envelope").map_err(io)?;
    for tp in &points {
        let v = optimal_probe_bloch(spec, tp)?;
        let q = qfi_protocol(spec, v, AncillaStateSpec::OPTIMAL, tp.t)?;
        writeln!(
            stdout,
            "{:>3}  {:<15.10}  {:<24}  {:<11.3e}  {:<13.10}  ({:+.6}, {:+.6}, {:+.6})  {:<15.10}  {:.10}",
            tp.multiple,
            tp.t,
            tp.kind.as_str(),
            tp.approximation_error,
            tp.gamma_lower_bound(spec)?,
            v.x,
            v.y,
            v.z,
            q,
            envelope(spec, tp.t)
        )
        .map_err(io)?;
    }
    if let Some(tp) = points.first() {
        writeln!(stdout, "# convergent p/q = {}/{}", tp.convergent.0, tp.convergent.1).map_err(io)?;
    }
    Ok(())
}
