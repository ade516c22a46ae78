use super::{parse_potential, state_from, write_file};
use crate::parallel::parallel_map_ordered;
use crate::svg::{Guide, Plot, Series};
use crate::{CliError, RatesArgs};
use gflow_core::diagnostics::estimate_rate;
use gflow_core::partition::Partition;
use gflow_core::schemes::{run_scheme, SchemeKind};
use serde::Serialize;

#[derive(Serialize)]
struct SchemeRate {
    scheme: String,
    slope: f64,
    r_squared: f64,
    taus: Vec<f64>,
    errors: Vec<f64>,
}

#[derive(Serialize)]
struct RatesReportJson {
    format_version: u32,
    command: &'static str,
    potential: String,
    horizon: f64,
    schemes: Vec<SchemeRate>,
}

pub fn execute(args: &RatesArgs) -> Result<u8, CliError> {
    if args.k_min > args.k_max || args.k_max - args.k_min + 1 < 4 {
        return Err(CliError::Config(
            "need a τ grid with at least 4 dyadic levels (k-max ≥ k-min + 3)".into(),
        ));
    }
    if args.k_max > 22 {
        return Err(CliError::Config(format!(
            "--k-max {} exceeds the supported maximum of 22 (2^22 steps)",
            args.k_max
        )));
    }
    let p = parse_potential(&args.potential)?;
    let u0 = state_from(&args.u0);
    if u0.len() != p.dim() {
        return Err(CliError::Config(format!(
            "u0 has dimension {}, potential `{}` expects {}",
            u0.len(),
            p.name(),
            p.dim()
        )));
    }
    if !p.has_exact_flow() {
        return Err(CliError::Config(format!(
            "potential `{}` exposes no exact flow; rate sweeps need one",
            p.name()
        )));
    }
    let kinds: Vec<SchemeKind> = args
        .schemes
        .iter()
        .map(|s| {
            SchemeKind::parse(s).ok_or_else(|| CliError::Config(format!("unknown scheme `{s}`")))
        })
        .collect::<Result<_, _>>()?;
    let settings = args.solver.settings();

    let ks: Vec<u32> = (args.k_min..=args.k_max).collect();
    let taus: Vec<f64> = ks
        .iter()
        .map(|&k| args.horizon / (1u64 << k) as f64)
        .collect();

    let mut table: Vec<Vec<f64>> = Vec::new(); // table[scheme][k]
    for &kind in &kinds {
        let errors = parallel_map_ordered(ks.clone(), |k| {
            let n = 1usize << k;
            let part = Partition::uniform(args.horizon, n).expect("valid horizon");
            let traj = run_scheme(kind, &p, &u0, &part, &settings).map_err(|e| e.to_string())?;
            if !traj.is_complete() {
                return Err(format!(
                    "{} failed at n={n}: {}",
                    kind.as_str(),
                    traj.failure_message().unwrap_or("unknown")
                ));
            }
            Ok(traj
                .grid_sup_error(|t| p.exact_flow(&u0, t).expect("exact flow checked"), None)
                .state)
        });
        let mut col = Vec::with_capacity(errors.len());
        for e in errors {
            col.push(e.map_err(CliError::Solver)?);
        }
        table.push(col);
    }

    // CSV: tau, then one error column per scheme.
    let mut csv = String::from("tau");
    for kind in &kinds {
        csv.push_str(&format!(",err_{}", kind.as_str()));
    }
    csv.push('\n');
    for (i, &tau) in taus.iter().enumerate() {
        csv.push_str(&format!("{tau}"));
        for col in &table {
            csv.push_str(&format!(",{}", col[i]));
        }
        csv.push('\n');
    }
    write_file(&args.out, &csv)?;

    let mut rates = Vec::new();
    for (kind, col) in kinds.iter().zip(&table) {
        let report = estimate_rate(&taus, col).map_err(|e| CliError::Solver(e.to_string()))?;
        rates.push(SchemeRate {
            scheme: kind.as_str().into(),
            slope: report.slope,
            r_squared: report.r_squared,
            taus: taus.clone(),
            errors: col.clone(),
        });
    }
    let json_report = RatesReportJson {
        format_version: 1,
        command: "rates",
        potential: p.name().into(),
        horizon: args.horizon,
        schemes: rates,
    };
    let json = serde_json::to_string_pretty(&json_report).expect("report serializes");
    if let Some(path) = &args.json {
        write_file(path, &json)?;
    }
    println!("{json}");

    if let Some(path) = &args.svg {
        let series: Vec<Series> = kinds
            .iter()
            .zip(&table)
            .map(|(kind, col)| Series {
                name: kind.as_str().into(),
                xs: taus.clone(),
                ys: col.clone(),
            })
            .collect();
        let anchor_y = table.iter().map(|col| col[0]).fold(f64::INFINITY, f64::min);
        let guides = [0.5, 1.0, 2.0]
            .iter()
            .map(|&order| Guide {
                order,
                anchor: (taus[0], anchor_y),
                label: format!("order {order}"),
            })
            .collect();
        let plot = Plot {
            title: format!("sup-norm error vs step size ({})", p.name()),
            x_label: "tau".into(),
            y_label: "grid sup error".into(),
            log_x: true,
            log_y: true,
            series,
            guides,
        };
        write_file(path, &crate::svg::render(&plot))?;
    }
    Ok(0)
}
