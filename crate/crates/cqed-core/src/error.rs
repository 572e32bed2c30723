use alloc::string::String;
use alloc::vec::Vec;

use crate::model::Violation;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid device model: {}", format_violations(.0))]
    InvalidModel(Vec<Violation>),

    #[error("matrix is not Hermitian (max |H - H^dagger| = {max_deviation:e})")]
    NotHermitian { max_deviation: f64 },

    #[error("dressed label {0} is not present in the basis")]
    MissingLabel(String),

    #[error("{what} is singular: {detail}")]
    Singular { what: &'static str, detail: String },

    #[error("no sign change of the objective in [{lo}, {hi}]")]
    NoSignChange { lo: f64, hi: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("fit did not converge (rms residual {residual:e}): {detail}")]
    FitFailed { residual: f64, detail: String },

    #[error("drive of {omega_mhz} MHz breaks down: qubit-subspace population {population:.4}")]
    DriveBreakdown { omega_mhz: f64, population: f64 },

    #[error("time step did not converge: halving changed final-state fidelity by {change:e}")]
    StepNotConverged { change: f64 },

    #[error("state norm drifted to {norm} at t = {time_ns} ns")]
    NormDrift { norm: f64, time_ns: f64 },

    #[error("unitary is outside the controlled-X family (infidelity {infidelity:e})")]
    OutsideFamily { infidelity: f64 },

    #[error("target rotation unreachable below the {ceiling_mhz} MHz drive ceiling")]
    Unreachable { ceiling_mhz: f64 },
}

fn format_violations(v: &[Violation]) -> String {
    use core::fmt::Write;
    let mut s = String::new();
    for (i, item) in v.iter().enumerate() {
        if i > 0 {
            s.push_str("; ");
        }
        let _ = write!(s, "{item}");
    }
    s
}
