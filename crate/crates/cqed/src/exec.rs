//! Order-preserving parallel versions of the library loops. Every item is an
//! independent pure computation, so results do not depend on the number of
//! worker threads.

use std::sync::OnceLock;

use cqed_core::calibration::{gate_time_point, GateTimeRow};
use cqed_core::clifford::CliffordTable;
use cqed_core::dynamics::{
    build_cr_system, cr_tomography_on, stark_shift_zi, CurveRow, TomographyOptions,
};
use cqed_core::model::DeviceModel;
use cqed_core::rb::{aggregate, NoiseModel, RbConfig, RbEngine, RbOutcome, RbVariant};
use cqed_core::spectrum::{sweep_point, ReferenceCoupler, SweepRow};
use cqed_core::Result;
use rayon::prelude::*;

/// The two-qubit Clifford table, built once per process.
pub fn clifford_table() -> &'static CliffordTable {
    static TABLE: OnceLock<CliffordTable> = OnceLock::new();
    TABLE.get_or_init(CliffordTable::build)
}

/// Same rows as `cqed_core::spectrum::sweep_static`.
pub fn sweep(
    model: &DeviceModel,
    mean_freqs_ghz: &[f64],
    detunings_mhz: &[f64],
    reference: Option<ReferenceCoupler>,
) -> Result<Vec<SweepRow>> {
    let points: Vec<(f64, f64)> = detunings_mhz
        .iter()
        .flat_map(|&d| mean_freqs_ghz.iter().map(move |&f| (f, d)))
        .collect();
    points
        .par_iter()
        .map(|&(f, d)| sweep_point(model, f, d, reference))
        .collect()
}

/// Same rows as `cqed_core::dynamics::zx_vs_drive_curve`.
pub fn zx_curve(model: &DeviceModel, control: usize, omegas_mhz: &[f64]) -> Result<Vec<CurveRow>> {
    if omegas_mhz.is_empty() {
        return Ok(Vec::new());
    }
    let system = build_cr_system(model, control)?;
    omegas_mhz
        .par_iter()
        .map(|&w| {
            Ok(CurveRow {
                omega_mhz: w,
                rates: cr_tomography_on(&system, control, w, TomographyOptions::default())?,
            })
        })
        .collect()
}

/// `(omega_mhz, zi_mhz)` for every drive amplitude.
pub fn stark_curve(
    model: &DeviceModel,
    control: usize,
    omegas_mhz: &[f64],
) -> Result<Vec<(f64, f64)>> {
    omegas_mhz
        .par_iter()
        .map(|&w| Ok((w, stark_shift_zi(model, control, w)?)))
        .collect()
}

/// Same outcomes as `RbEngine::run`.
pub fn rb(engine: &RbEngine<'_>, variant: RbVariant, config: &RbConfig) -> Result<Vec<RbOutcome>> {
    config.validate()?;
    let values: Vec<Vec<Vec<f64>>> = (0..config.lengths.len())
        .into_par_iter()
        .map(|l| {
            (0..config.samples)
                .into_par_iter()
                .map(|s| engine.sequence_values(variant, config, l, s))
                .collect()
        })
        .collect();
    aggregate(variant, config, &values)
}

/// Same rows as `cqed_core::calibration::error_vs_gate_time`.
pub fn gate_times(
    model: &DeviceModel,
    control: usize,
    times_ns: &[f64],
    noise: &NoiseModel,
    rb: &RbConfig,
    cnot_per_clifford: f64,
) -> Vec<GateTimeRow> {
    let table = clifford_table();
    times_ns
        .par_iter()
        .map(|&t| gate_time_point(model, control, t, noise, rb, table, cnot_per_clifford))
        .collect()
}
