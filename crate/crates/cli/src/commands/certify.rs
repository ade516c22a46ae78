use super::{parse_potential, write_file};
use crate::parallel::parallel_map_ordered;
use crate::{CertifyArgs, CliError};
use gflow_core::diagnostics::{certify, certify_sweep, CertificateVerdict};
use gflow_core::trajectory::Trajectory;
use serde::Serialize;
use std::io::BufReader;
use std::path::PathBuf;

#[derive(Serialize)]
struct CertificateJson {
    format_version: u32,
    command: &'static str,
    potential: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    file: Option<String>,
    total: f64,
    holder_bound: f64,
    per_step: Vec<f64>,
    verdict: String,
}

#[derive(Serialize)]
struct SweepMemberJson {
    file: String,
    fineness: f64,
    total: f64,
    holder_bound: f64,
    verdict: String,
}

#[derive(Serialize)]
struct SweepJson {
    format_version: u32,
    command: &'static str,
    potential: String,
    members: Vec<SweepMemberJson>,
    #[serde(skip_serializing_if = "Option::is_none")]
    fitted_order: Option<f64>,
    verdict: String,
}

fn read_trajectory(path: &PathBuf) -> Result<Trajectory, CliError> {
    let file = std::fs::File::open(path)
        .map_err(|e| CliError::Config(format!("cannot open {}: {e}", path.display())))?;
    Trajectory::read_csv(BufReader::new(file))
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn execute(args: &CertifyArgs) -> Result<u8, CliError> {
    let p = parse_potential(&args.potential)?;
    let meta = std::fs::metadata(&args.input)
        .map_err(|e| CliError::Config(format!("cannot stat {}: {e}", args.input.display())))?;

    let (json, verdict) = if meta.is_dir() {
        let mut files: Vec<PathBuf> = std::fs::read_dir(&args.input)?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|path| path.extension().and_then(|e| e.to_str()) == Some("csv"))
            .collect();
        files.sort();
        if files.is_empty() {
            return Err(CliError::Config(format!(
                "no trajectory CSVs in {}",
                args.input.display()
            )));
        }
        let loaded = parallel_map_ordered(files.clone(), |path| read_trajectory(&path));
        let mut trajs = Vec::new();
        for t in loaded {
            trajs.push(t?);
        }
        let sweep = certify_sweep(&trajs, &p).map_err(|e| CliError::Config(e.to_string()))?;
        let members = sweep
            .source_indices
            .iter()
            .zip(&sweep.members)
            .map(|(&i, cert)| SweepMemberJson {
                file: files[i].display().to_string(),
                fineness: trajs[i].partition().fineness(),
                total: cert.total,
                holder_bound: cert.holder_bound,
                verdict: cert.verdict.as_str().into(),
            })
            .collect();
        let verdict = sweep.verdict;
        (
            serde_json::to_string_pretty(&SweepJson {
                format_version: 1,
                command: "certify",
                potential: p.name().into(),
                members,
                fitted_order: sweep.fitted_order,
                verdict: verdict.as_str().into(),
            })
            .expect("serializes"),
            verdict,
        )
    } else {
        let traj = read_trajectory(&args.input)?;
        let cert = certify(&traj, &p).map_err(|e| CliError::Config(e.to_string()))?;
        let verdict = cert.verdict;
        (
            serde_json::to_string_pretty(&CertificateJson {
                format_version: 1,
                command: "certify",
                potential: p.name().into(),
                file: Some(args.input.display().to_string()),
                total: cert.total,
                holder_bound: cert.holder_bound,
                per_step: cert.per_step_positive_parts,
                verdict: verdict.as_str().into(),
            })
            .expect("serializes"),
            verdict,
        )
    };

    if let Some(path) = &args.json {
        write_file(path, &json)?;
    }
    println!("{json}");
    match verdict {
        CertificateVerdict::CertifiedTrend => Ok(0),
        CertificateVerdict::Inconclusive => Ok(4),
    }
}
