use super::{parse_potential, state_from, write_file};
use crate::{CliError, RunArgs};
use gflow_core::extensions::{
    damped_oscillator, run_generalized, run_generic, run_metric, DissipationPotential,
    GeneralizedKind, MetricKind, MetricSpaceModel,
};
use gflow_core::partition::Partition;
use gflow_core::sampling::SampleStream;
use gflow_core::schemes::{run_scheme, SchemeKind};
use gflow_core::trajectory::{StepStatus, Trajectory};
use serde::Serialize;

#[derive(Serialize)]
struct StatusCounts {
    exact: usize,
    residual_accepted: usize,
    stationary: usize,
    failed: usize,
}

#[derive(Serialize)]
struct RunSummary {
    format_version: u32,
    command: &'static str,
    scheme: String,
    model: String,
    horizon: f64,
    steps: usize,
    steps_completed: usize,
    failed: bool,
    failure_message: Option<String>,
    final_state: Vec<f64>,
    energy_initial: f64,
    energy_final: f64,
    energy_drop: f64,
    dissipation_total: f64,
    residual_sum: f64,
    residual_positive_total: f64,
    status_counts: StatusCounts,
    #[serde(skip_serializing_if = "Option::is_none")]
    structure: Option<StructureSummary>,
}

#[derive(Serialize)]
struct StructureSummary {
    antisymmetry_defect: f64,
    min_k_eigenvalue: f64,
    compat_entropy: f64,
    compat_energy: f64,
    sampled_states: usize,
}

enum Mode {
    Hilbert(SchemeKind),
    Generalized(DissipationPotential, GeneralizedKind),
    Generic { gamma: f64 },
    Metric(MetricVariant, MetricKind),
}

enum MetricVariant {
    Euclidean,
    Scaled(f64),
}

fn parse_mode(args: &RunArgs) -> Result<Mode, CliError> {
    let scheme = args.scheme.as_deref();
    match args.mode.as_deref() {
        None => {
            let name = scheme
                .ok_or_else(|| CliError::Config("--scheme is required without --mode".into()))?;
            let kind = SchemeKind::parse(name).ok_or_else(|| {
                CliError::Config(format!(
                    "unknown scheme `{name}` (expected euler | gonzalez | dg-root:near | dg-root:far | dg-min)"
                ))
            })?;
            Ok(Mode::Hilbert(kind))
        }
        Some(mode) => {
            let parts: Vec<&str> = mode.split(':').collect();
            match parts.as_slice() {
                ["gen", p, beta] => {
                    let p: f64 = p
                        .parse()
                        .map_err(|_| CliError::Config(format!("bad exponent in `{mode}`")))?;
                    let beta: f64 = beta
                        .parse()
                        .map_err(|_| CliError::Config(format!("bad β in `{mode}`")))?;
                    let psi = DissipationPotential::constant(p, beta)
                        .map_err(|e| CliError::Config(e.to_string()))?;
                    Ok(Mode::Generalized(psi, parse_two_way(scheme, "gen")?.0))
                }
                ["generic", gamma] => {
                    let gamma: f64 = gamma
                        .parse()
                        .map_err(|_| CliError::Config(format!("bad γ in `{mode}`")))?;
                    if gamma < 0.0 {
                        return Err(CliError::Config("γ must be nonnegative".into()));
                    }
                    Ok(Mode::Generic { gamma })
                }
                ["metric", "euclidean"] => Ok(Mode::Metric(
                    MetricVariant::Euclidean,
                    parse_two_way(scheme, "metric")?.1,
                )),
                ["metric", "scaled", factor] => {
                    let factor: f64 = factor
                        .parse()
                        .map_err(|_| CliError::Config(format!("bad factor in `{mode}`")))?;
                    Ok(Mode::Metric(
                        MetricVariant::Scaled(factor),
                        parse_two_way(scheme, "metric")?.1,
                    ))
                }
                _ => Err(CliError::Config(format!(
                    "unknown mode `{mode}` (expected gen:p:β | generic:γ | metric:euclidean | metric:scaled:factor)"
                ))),
            }
        }
    }
}

/// Extension modes offer the Euler and the De Giorgi update.
fn parse_two_way(
    scheme: Option<&str>,
    mode: &str,
) -> Result<(GeneralizedKind, MetricKind), CliError> {
    match scheme {
        Some("euler") => Ok((GeneralizedKind::Euler, MetricKind::Euler)),
        Some("dg") => Ok((GeneralizedKind::DeGiorgi, MetricKind::DeGiorgi)),
        other => Err(CliError::Config(format!(
            "mode `{mode}` needs --scheme euler | dg (got {other:?})"
        ))),
    }
}

fn summarize(
    traj: &Trajectory,
    scheme: String,
    model: String,
    horizon: f64,
    steps: usize,
) -> RunSummary {
    let records = traj.records();
    let mut counts = StatusCounts {
        exact: 0,
        residual_accepted: 0,
        stationary: 0,
        failed: 0,
    };
    let mut residual_sum = 0.0;
    let mut residual_plus = 0.0;
    let mut dissipation = 0.0;
    for (i, r) in records.iter().enumerate() {
        match r.status {
            StepStatus::Exact => counts.exact += 1,
            StepStatus::ResidualAccepted => counts.residual_accepted += 1,
            StepStatus::Stationary => counts.stationary += 1,
            StepStatus::Failed => counts.failed += 1,
        }
        if r.status != StepStatus::Failed {
            residual_sum += r.residual;
            residual_plus += r.residual.max(0.0);
            let tau = traj.partition().steps()[i];
            dissipation += r.increment_norm * r.increment_norm / tau;
        }
    }
    let energy_initial = records.first().map(|r| r.energy_before).unwrap_or(f64::NAN);
    let last_ok = records
        .iter()
        .rev()
        .find(|r| r.status != StepStatus::Failed);
    let energy_final = last_ok.map(|r| r.energy_after).unwrap_or(energy_initial);
    RunSummary {
        format_version: 1,
        command: "run",
        scheme,
        model,
        horizon,
        steps,
        steps_completed: traj.states().len() - 1,
        failed: traj.failed(),
        failure_message: traj.failure_message().map(str::to_string),
        final_state: traj.states().last().unwrap().iter().cloned().collect(),
        energy_initial,
        energy_final,
        energy_drop: energy_initial - energy_final,
        dissipation_total: dissipation,
        residual_sum,
        residual_positive_total: residual_plus,
        status_counts: counts,
        structure: None,
    }
}

pub fn execute(args: &RunArgs) -> Result<u8, CliError> {
    if args.steps == 0 {
        return Err(CliError::Config("--steps must be ≥ 1".into()));
    }
    if args.steps > 10_000_000 {
        return Err(CliError::Config(format!(
            "--steps {} exceeds the supported maximum of 10^7",
            args.steps
        )));
    }
    let partition = Partition::uniform(args.horizon, args.steps)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let u0 = state_from(&args.u0);
    let settings = args.solver.settings();
    let mode = parse_mode(args)?;

    let (mut summary, csv) = match mode {
        Mode::Hilbert(kind) => {
            let p = args
                .potential
                .as_deref()
                .ok_or_else(|| CliError::Config("--potential is required".into()))
                .and_then(parse_potential)?;
            let traj = run_scheme(kind, &p, &u0, &partition, &settings)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let mut csv = Vec::new();
            traj.write_csv(&mut csv)?;
            (
                summarize(
                    &traj,
                    kind.as_str().into(),
                    p.name().into(),
                    args.horizon,
                    args.steps,
                ),
                csv,
            )
        }
        Mode::Generalized(psi, kind) => {
            let p = args
                .potential
                .as_deref()
                .ok_or_else(|| CliError::Config("--potential is required".into()))
                .and_then(parse_potential)?;
            let traj = run_generalized(&p, &psi, kind, &u0, &partition, &settings)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let mut csv = Vec::new();
            traj.write_csv(&mut csv)?;
            let scheme = match kind {
                GeneralizedKind::Euler => "gen-euler",
                GeneralizedKind::DeGiorgi => "gen-dg",
            };
            (
                summarize(
                    &traj,
                    scheme.into(),
                    p.name().into(),
                    args.horizon,
                    args.steps,
                ),
                csv,
            )
        }
        Mode::Generic { gamma } => {
            let sys = damped_oscillator(gamma);
            let run = run_generic(&sys, &u0, &partition, &settings)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let mut csv = Vec::new();
            run.write_csv(&mut csv)?;
            let mut summary = summarize(
                &run.trajectory,
                "generic-dg".into(),
                format!("damped-oscillator:{gamma}"),
                args.horizon,
                args.steps,
            );
            // Structure defects over visited plus seeded sample states.
            let mut states = run.trajectory.states().to_vec();
            let mut stream = SampleStream::new(args.seed);
            for _ in 0..64 {
                states.push(stream.next_vector(3, -2.0, 2.0));
            }
            let report = sys.structure_report(&states);
            summary.structure = Some(StructureSummary {
                antisymmetry_defect: report.antisymmetry_defect,
                min_k_eigenvalue: report.min_k_eigenvalue,
                compat_entropy: report.compat_entropy,
                compat_energy: report.compat_energy,
                sampled_states: states.len(),
            });
            (summary, csv)
        }
        Mode::Metric(variant, kind) => {
            let p = args
                .potential
                .as_deref()
                .ok_or_else(|| CliError::Config("--potential is required".into()))
                .and_then(parse_potential)?;
            let (m, tag) = match variant {
                MetricVariant::Euclidean => (
                    MetricSpaceModel::euclidean(&p).map_err(|e| CliError::Config(e.to_string()))?,
                    format!("metric:euclidean[{}]", p.name()),
                ),
                MetricVariant::Scaled(factor) => (
                    MetricSpaceModel::scaled_euclidean(&p, factor)
                        .map_err(|e| CliError::Config(e.to_string()))?,
                    format!("metric:scaled:{factor}[{}]", p.name()),
                ),
            };
            let traj = run_metric(&m, kind, &u0, &partition, &settings)
                .map_err(|e| CliError::Config(e.to_string()))?;
            let mut csv = Vec::new();
            traj.write_csv(&mut csv)?;
            let scheme = match kind {
                MetricKind::Euler => "metric-euler",
                MetricKind::DeGiorgi => "metric-dg",
            };
            (
                summarize(&traj, scheme.into(), tag, args.horizon, args.steps),
                csv,
            )
        }
    };

    write_file(&args.out, std::str::from_utf8(&csv).expect("csv utf8"))?;
    summary.command = "run";
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes");
    if let Some(path) = &args.json {
        write_file(path, &json)?;
    }
    println!("{json}");
    if summary.failed {
        eprintln!(
            "gflow: trajectory truncated after {} of {} steps",
            summary.steps_completed, args.steps
        );
        return Ok(3);
    }
    Ok(0)
}
