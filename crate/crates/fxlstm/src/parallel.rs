//! Worker-pool versions of the exploration and validation loops. Results
//! are assembled in a fixed order, so they do not depend on the pool size.

use fxlstm_core::dse::{baselines, evaluate_cell, Benchmark, DegradationGrid, ExecPath, ValidationReport};
use fxlstm_core::dse::{component_errors, DseError};
use fxlstm_core::net::{GaitWindow, ModelParams};
use fxlstm_core::{BitWidthConfig, FcInput, FxpFormat, RoundingMode};
use rayon::prelude::*;

/// Windows per validation job; fixed so partial sums merge identically.
pub const VALIDATION_CHUNK: usize = 16;

pub fn pool(workers: Option<usize>) -> rayon::ThreadPool {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        b = b.num_threads(n.max(1));
    }
    b.build().expect("thread pool")
}

pub fn sweep(
    pool: &rayon::ThreadPool,
    benches: &[Benchmark],
    param_fmts: &[FxpFormat],
    op_fmts: &[FxpFormat],
    rounding: RoundingMode,
    fc_input: FcInput,
) -> Result<DegradationGrid, DseError> {
    if param_fmts.is_empty() || op_fmts.is_empty() {
        return Err(DseError::Empty("format grid"));
    }
    let base = baselines(benches, fc_input)?;
    let configs = DegradationGrid::configs(param_fmts, op_fmts, rounding, fc_input);
    let cells = pool.install(|| {
        configs
            .into_par_iter()
            .map(|cfg| evaluate_cell(benches, &base, cfg))
            .collect::<Result<Vec<_>, _>>()
    })?;
    Ok(DegradationGrid {
        param_fmts: param_fmts.to_vec(),
        op_fmts: op_fmts.to_vec(),
        cells,
    })
}

pub fn validate(
    pool: &rayon::ThreadPool,
    model: &ModelParams,
    windows: &[GaitWindow],
    cfg: BitWidthConfig,
    path_a: ExecPath,
    path_b: ExecPath,
) -> Result<ValidationReport, DseError> {
    let parts = pool.install(|| {
        windows
            .par_chunks(VALIDATION_CHUNK)
            .map(|chunk| component_errors(model, chunk, cfg, path_a, path_b))
            .collect::<Result<Vec<_>, _>>()
    })?;
    let mut report = ValidationReport::new(path_a, path_b, cfg);
    for p in &parts {
        report.merge(p);
    }
    Ok(report)
}
