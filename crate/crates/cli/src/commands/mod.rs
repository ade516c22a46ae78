pub mod certify;
pub mod compare;
pub mod rates;
pub mod run;

use crate::CliError;
use gflow_core::Vector;
use std::path::Path;

pub(crate) fn parse_potential(spec: &str) -> Result<gflow_core::PotentialModel, CliError> {
    gflow_core::potentials::parse_potential(spec).map_err(CliError::Config)
}

pub(crate) fn state_from(values: &[f64]) -> Vector {
    Vector::from_vec(values.to_vec())
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(path, contents)?;
    Ok(())
}
