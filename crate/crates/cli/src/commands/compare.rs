use super::write_file;
use crate::parallel::parallel_map_ordered;
use crate::svg::{Plot, Series};
use crate::{CliError, CompareArgs};
use gflow_core::diagnostics::closed_form_sequence;
use gflow_core::partition::Partition;
use gflow_core::potentials::quadratic_1d;
use gflow_core::schemes::{run_scheme, DeGiorgiBranch, SchemeKind};
use gflow_core::Vector;
use serde::Serialize;

const KINDS: [SchemeKind; 4] = [
    SchemeKind::Euler,
    SchemeKind::Gonzalez,
    SchemeKind::DeGiorgiRoot(DeGiorgiBranch::Far),
    SchemeKind::DeGiorgiMin,
];

#[derive(Serialize)]
struct CompareSummary {
    format_version: u32,
    command: &'static str,
    lambda: f64,
    iterations: usize,
    tau_lambdas: Vec<f64>,
    series_files: Vec<String>,
    reduction_file: String,
    max_closed_form_deviation: f64,
}

struct SeriesData {
    tau_lambda: f64,
    /// potential values per iteration: [kind][iter], numeric and closed form.
    numeric: Vec<Vec<f64>>,
    closed: Vec<Vec<f64>>,
    max_dev: f64,
}

pub fn execute(args: &CompareArgs) -> Result<u8, CliError> {
    if !(args.lambda > 0.0) {
        return Err(CliError::Config("λ must be positive".into()));
    }
    if args.iterations == 0 {
        return Err(CliError::Config("--iterations must be ≥ 1".into()));
    }
    if args.tau_lambdas.iter().any(|&x| !(x > 0.0)) {
        return Err(CliError::Config("τλ values must be positive".into()));
    }
    let settings = args.solver.settings();
    let lambda = args.lambda;
    let n = args.iterations;
    let phi = |u: f64| 0.5 * lambda * u * u;

    let data: Vec<Result<SeriesData, String>> =
        parallel_map_ordered(args.tau_lambdas.clone(), |tau_lambda| {
            let tau = tau_lambda / lambda;
            let p = quadratic_1d(lambda).map_err(|e| e.to_string())?;
            let part = Partition::uniform(tau * n as f64, n).map_err(|e| e.to_string())?;
            let mut numeric = Vec::new();
            let mut closed = Vec::new();
            let mut max_dev: f64 = 0.0;
            for kind in KINDS {
                let traj = run_scheme(kind, &p, &Vector::from_vec(vec![1.0]), &part, &settings)
                    .map_err(|e| e.to_string())?;
                if !traj.is_complete() {
                    return Err(format!(
                        "{} failed at τλ={tau_lambda}: {}",
                        kind.as_str(),
                        traj.failure_message().unwrap_or("unknown")
                    ));
                }
                let nums: Vec<f64> = traj.states().iter().map(|u| phi(u[0])).collect();
                let closed_states = closed_form_sequence(kind, lambda, tau, n);
                let clos: Vec<f64> = closed_states.iter().map(|&u| phi(u)).collect();
                for (a, b) in nums.iter().zip(&clos) {
                    max_dev = max_dev.max((a - b).abs());
                }
                numeric.push(nums);
                closed.push(clos);
            }
            Ok(SeriesData {
                tau_lambda,
                numeric,
                closed,
                max_dev,
            })
        });
    let mut all = Vec::new();
    for d in data {
        all.push(d.map_err(CliError::Solver)?);
    }

    let mut series_files = Vec::new();
    let mut overall_dev: f64 = 0.0;
    for d in &all {
        overall_dev = overall_dev.max(d.max_dev);
        let mut csv = String::from("iter");
        for kind in KINDS {
            let tag = kind.as_str().replace(':', "_");
            csv.push_str(&format!(",phi_{tag},phi_{tag}_closed"));
        }
        csv.push('\n');
        for i in 0..=n {
            csv.push_str(&format!("{i}"));
            for k in 0..KINDS.len() {
                csv.push_str(&format!(",{},{}", d.numeric[k][i], d.closed[k][i]));
            }
            csv.push('\n');
        }
        let path = format!("{}_series_tl{}.csv", args.out_prefix, d.tau_lambda);
        write_file(std::path::Path::new(&path), &csv)?;
        series_files.push(path.clone());

        if args.svg {
            let series = KINDS
                .iter()
                .enumerate()
                .map(|(k, kind)| Series {
                    name: kind.as_str().into(),
                    xs: (0..=n).map(|i| i as f64).collect(),
                    ys: d.numeric[k].iter().map(|&v| v.abs().max(1e-300)).collect(),
                })
                .collect();
            let plot = Plot {
                title: format!("potential decay, τλ = {}", d.tau_lambda),
                x_label: "iteration".into(),
                y_label: "|phi|".into(),
                log_x: false,
                log_y: true,
                series,
                guides: vec![],
            };
            write_file(
                std::path::Path::new(&format!(
                    "{}_series_tl{}.svg",
                    args.out_prefix, d.tau_lambda
                )),
                &crate::svg::render(&plot),
            )?;
        }
    }

    // Reduction after the final iteration, per τλ.
    let mut csv = String::from("tau_lambda");
    for kind in KINDS {
        let tag = kind.as_str().replace(':', "_");
        csv.push_str(&format!(",phi_{tag},phi_{tag}_closed"));
    }
    csv.push('\n');
    for d in &all {
        csv.push_str(&format!("{}", d.tau_lambda));
        for k in 0..KINDS.len() {
            csv.push_str(&format!(",{},{}", d.numeric[k][n], d.closed[k][n]));
        }
        csv.push('\n');
    }
    let reduction_file = format!("{}_reduction.csv", args.out_prefix);
    write_file(std::path::Path::new(&reduction_file), &csv)?;

    if args.svg {
        let series = KINDS
            .iter()
            .enumerate()
            .map(|(k, kind)| Series {
                name: kind.as_str().into(),
                xs: all.iter().map(|d| d.tau_lambda).collect(),
                ys: all
                    .iter()
                    .map(|d| d.numeric[k][n].abs().max(1e-300))
                    .collect(),
            })
            .collect();
        let plot = Plot {
            title: format!("|phi| after {n} iterations vs τλ"),
            x_label: "tau * lambda".into(),
            y_label: "|phi|".into(),
            log_x: true,
            log_y: true,
            series,
            guides: vec![],
        };
        write_file(
            std::path::Path::new(&format!("{}_reduction.svg", args.out_prefix)),
            &crate::svg::render(&plot),
        )?;
    }

    let summary = CompareSummary {
        format_version: 1,
        command: "compare",
        lambda,
        iterations: n,
        tau_lambdas: all.iter().map(|d| d.tau_lambda).collect(),
        series_files,
        reduction_file,
        max_closed_form_deviation: overall_dev,
    };
    println!(
        "{}",
        serde_json::to_string_pretty(&summary).expect("serializes")
    );
    Ok(0)
}
