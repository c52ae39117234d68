//! One module per subcommand. Each exposes `run(&Overlay) -> Result<(), CliError>`.

pub mod fit;
pub mod gcomp;
pub mod impute;
pub mod report;
pub mod simulate;

use std::path::Path;

use medgc::data::{read_wide_csv_path, LongitudinalDataset, Mode};

use crate::error::CliError;
use crate::settings::Subset;

/// Reads a wide-format analysis CSV, translating schema problems into
/// validation errors and a missing file into a usage error.
pub fn read_dataset(
    path: &Path,
    visit_grid: Option<Vec<f64>>,
) -> Result<LongitudinalDataset, CliError> {
    read_wide_csv_path(path, visit_grid).map_err(CliError::from)
}

/// Validates the dataset for `mode`; an unclean report aborts the run with
/// every violation rendered.
pub fn require_clean(dataset: &LongitudinalDataset, mode: Mode) -> Result<(), CliError> {
    let report = medgc::data::validate(dataset, mode);
    if report.is_clean() {
        Ok(())
    } else {
        Err(CliError::Invalid(report.render()))
    }
}

/// Restricts a dataset to the subjects matching a baseline filter.
pub fn apply_subset(
    dataset: LongitudinalDataset,
    subset: &Subset,
) -> Result<LongitudinalDataset, CliError> {
    let index = dataset.baseline_index(&subset.column).ok_or_else(|| {
        CliError::invalid(format!(
            "subset `{}`: no baseline column named `{}`",
            subset.label, subset.column
        ))
    })?;
    let visit_grid = dataset.visit_grid.clone();
    let baseline_names = dataset.baseline_names.clone();
    let subjects: Vec<_> = dataset
        .subjects
        .into_iter()
        .filter(|s| s.baseline.values[index] == subset.value)
        .collect();
    if subjects.is_empty() {
        return Err(CliError::invalid(format!(
            "subset `{}` matches no subjects",
            subset.label
        )));
    }
    LongitudinalDataset::new(visit_grid, baseline_names, subjects).map_err(CliError::from)
}

/// Creates an output directory (and parents) if needed.
pub fn ensure_dir(path: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(path)
        .map_err(|e| CliError::invalid(format!("cannot create {}: {e}", path.display())))
}
