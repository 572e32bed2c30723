//! Single-pulse direct CNOT: a flat-top CR tone on the control with a
//! simultaneous resonant tone (with DRAG) on the target, followed by a virtual
//! Z frame change on the control.
//!
//! The target rotates by `2π` with the control in `|0>` and by `π` with the
//! control in `|1>`. In the half-Pauli rate convention of [`crate::dynamics`]
//! this means `ZX · t_eff = 1/4` and `IX · t_eff = 3/4` (in cycles, same sign
//! as ZX), where `t_eff` is the flat-top area per unit amplitude.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::channels::coherence_limit;
use crate::clifford::CliffordTable;
use crate::dynamics::{
    build_cr_system, cr_tomography_on, level_index, propagate_states, ConditionalRates,
    EvolveOptions, RotatingFrameSystem, TomographyOptions, DIM,
};
use crate::linalg::{c64, cis, CMatrix, Complex64, TAU};
use crate::model::DeviceModel;
use crate::optimize::{brent_root, nelder_mead, Minimum, NelderMeadOptions};
use crate::pulses::{DriveTone, Envelope, DEFAULT_SIGMA_NS};
use crate::rb::{epg_upper_bound, fit_decay, GateSet, NoiseModel, RbConfig, RbEngine, RbVariant};
use crate::{Error, Result};

/// Largest CR amplitude tried when looking for the conditional π rotation, MHz.
pub const DRIVE_CEILING_MHZ: f64 = 120.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectCnotPulse {
    pub cr: DriveTone,
    pub target_tone: DriveTone,
    pub gate_time_ns: f64,
    /// Virtual Z applied to the control after the pulse, rad.
    pub frame_change_rad: f64,
    pub control: usize,
}

impl DirectCnotPulse {
    pub fn target(&self) -> usize {
        1 - self.control
    }

    /// Optimizer coordinates `[CR amp, target amp, target phase, CR phase, DRAG]`.
    pub fn parameters(&self) -> [f64; 5] {
        [
            self.cr.envelope.amplitude_mhz,
            self.target_tone.envelope.amplitude_mhz,
            self.target_tone.phase_rad,
            self.cr.phase_rad,
            self.target_tone.envelope.drag_ns,
        ]
    }

    pub fn with_parameters(&self, p: &[f64]) -> Self {
        let mut out = *self;
        out.cr = DriveTone::new(
            self.cr.envelope.with_amplitude(p[0]),
            self.cr.carrier_ghz,
            p[3],
            self.control,
        );
        out.target_tone = DriveTone::new(
            self.target_tone
                .envelope
                .with_amplitude(p[1])
                .with_drag(p[4]),
            self.target_tone.carrier_ghz,
            p[2],
            self.target(),
        );
        out
    }

    pub fn tones(&self) -> [DriveTone; 2] {
        [self.cr, self.target_tone]
    }
}

/// Computational-subspace projection `U_P` (control index first) and its
/// 9-dimensional parent, both in the qubit frame and before the frame change.
#[derive(Debug, Clone, PartialEq)]
pub struct GateUnitary {
    pub full: CMatrix,
    pub computational: CMatrix,
}

/// Index in the 9-dimensional space of control level `c` and target level `t`.
fn ct_index(control: usize, c: usize, t: usize) -> usize {
    if control == 0 {
        level_index(c, t)
    } else {
        level_index(t, c)
    }
}

/// Simulated gate unitary. The frame rotating at the target frequency is
/// replaced by each qubit's own frame, so an idle pair maps to the identity
/// up to the ZZ phase.
pub fn gate_unitary(
    system: &RotatingFrameSystem,
    pulse: &DirectCnotPulse,
    opts: EvolveOptions,
) -> Result<GateUnitary> {
    let full_cols = propagate_states(
        system,
        &pulse.tones(),
        pulse.gate_time_ns,
        &CMatrix::identity(DIM, DIM),
        opts,
    )?;
    Ok(to_qubit_frame(system, pulse, full_cols))
}

fn to_qubit_frame(
    system: &RotatingFrameSystem,
    pulse: &DirectCnotPulse,
    mut u: CMatrix,
) -> GateUnitary {
    let c = pulse.control;
    let detuning = system.qubit_freqs_ghz[c] - system.frame_ghz;
    for nc in 0..3 {
        let phase = cis(TAU * nc as f64 * detuning * pulse.gate_time_ns);
        for nt in 0..3 {
            let row = ct_index(c, nc, nt);
            for j in 0..DIM {
                u[(row, j)] *= phase;
            }
        }
    }
    let comp = CMatrix::from_fn(4, 4, |i, j| {
        u[(ct_index(c, i / 2, i % 2), ct_index(c, j / 2, j % 2))]
    });
    GateUnitary {
        full: u,
        computational: comp,
    }
}

/// `(|Tr(V^dagger U_P)|^2 + Tr(U_P^dagger U_P)) / (d (d + 1))` and the leakage
/// `1 - Tr(U_P^dagger U_P) / d`, for a possibly non-unitary projection `U_P`.
pub fn gate_fidelity(u: &CMatrix, v: &CMatrix) -> Result<(f64, f64)> {
    if u.shape() != v.shape() || u.nrows() != u.ncols() {
        return Err(Error::InvalidArgument(format!(
            "shapes {:?} and {:?}",
            u.shape(),
            v.shape()
        )));
    }
    let d = u.nrows() as f64;
    let overlap = crate::linalg::trace(&(v.adjoint() * u)).norm_sqr();
    let norm = crate::linalg::trace(&(u.adjoint() * u)).re;
    let f = (overlap + norm) / (d * (d + 1.0));
    Ok((f.clamp(0.0, 1.0), (1.0 - norm / d).clamp(0.0, 1.0)))
}

/// `|0><0| ⊗ I + e^{iφ} |1><1| ⊗ X`, control first.
pub fn cnot_family(phi: f64) -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = c64(1.0, 0.0);
    m[(1, 1)] = c64(1.0, 0.0);
    m[(2, 3)] = cis(phi);
    m[(3, 2)] = cis(phi);
    m
}

/// Best member of the controlled-X family: `(φ, fidelity, leakage)`.
pub fn best_family_fidelity(u: &CMatrix) -> (f64, f64, f64) {
    // Tr(V_φ^dagger U) = a + e^{-iφ} b with a from the control-|0> block and b
    // from X times the control-|1> block
    let a = u[(0, 0)] + u[(1, 1)];
    let b = u[(3, 2)] + u[(2, 3)];
    let phi = wrap_pm_pi(b.arg() - a.arg());
    let norm = crate::linalg::trace(&(u.adjoint() * u)).re;
    let f = ((a.norm() + b.norm()).powi(2) + norm) / 20.0;
    (phi, f.clamp(0.0, 1.0), (1.0 - norm / 4.0).clamp(0.0, 1.0))
}

fn wrap_pm_pi(x: f64) -> f64 {
    let mut y = x % TAU;
    if y > core::f64::consts::PI {
        y -= TAU;
    } else if y <= -core::f64::consts::PI {
        y += TAU;
    }
    y
}

/// Phase `φ` of the controlled-X family member closest to `u`; rejects
/// unitaries farther than 0.01 in infidelity from the family.
pub fn extract_frame_change(u: &CMatrix) -> Result<f64> {
    let (phi, f, _) = best_family_fidelity(u);
    if 1.0 - f > 0.01 {
        return Err(Error::OutsideFamily {
            infidelity: 1.0 - f,
        });
    }
    Ok(phi)
}

/// Virtual `Z(-φ)` on the control (control first, 4x4) after `u`.
pub fn apply_virtual_z(u: &CMatrix, phi: f64) -> CMatrix {
    let mut out = u.clone();
    let p = cis(-phi);
    for r in 2..4 {
        for j in 0..4 {
            out[(r, j)] *= p;
        }
    }
    out
}

/// Same for the 9-dimensional space: each control excitation picks up `e^{-iφ}`.
pub fn apply_virtual_z_full(u: &CMatrix, phi: f64, control: usize) -> CMatrix {
    let mut out = u.clone();
    for nc in 1..3 {
        let p = cis(-phi * nc as f64);
        for nt in 0..3 {
            let r = ct_index(control, nc, nt);
            for j in 0..DIM {
                out[(r, j)] *= p;
            }
        }
    }
    out
}

/// CR-only pulse of `gate_ns` at amplitude `omega_mhz`; target tone silent.
fn cr_only(
    system: &RotatingFrameSystem,
    control: usize,
    gate_ns: f64,
    omega_mhz: f64,
    phase: f64,
) -> DirectCnotPulse {
    let env = Envelope::flat_top_for_gate(gate_ns, omega_mhz);
    DirectCnotPulse {
        cr: DriveTone::new(env, system.frame_ghz, phase, control),
        target_tone: DriveTone::new(env.with_amplitude(0.0), system.frame_ghz, 0.0, 1 - control),
        gate_time_ns: gate_ns,
        frame_change_rad: 0.0,
        control,
    }
}

fn tomography(
    system: &RotatingFrameSystem,
    control: usize,
    omega: f64,
    phase: f64,
) -> Result<ConditionalRates> {
    cr_tomography_on(
        system,
        control,
        omega,
        TomographyOptions {
            stark: false,
            cr_phase_rad: phase,
            ..Default::default()
        },
    )
}

fn check_gate_time(gate_ns: f64) -> Result<()> {
    if !(gate_ns > 4.0 * DEFAULT_SIGMA_NS) {
        return Err(Error::InvalidArgument(format!(
            "gate time {gate_ns} ns must exceed the 4σ = {} ns ramps",
            4.0 * DEFAULT_SIGMA_NS
        )));
    }
    Ok(())
}

/// CR amplitude (MHz) with `|ZX| · t_eff = 1/4` for a flat-top pulse of
/// `gate_ns`.
pub fn rough_amplitude(model: &DeviceModel, control: usize, gate_ns: f64) -> Result<f64> {
    let system = build_cr_system(model, control)?;
    rough_amplitude_on(&system, control, gate_ns)
}

fn rough_amplitude_on(system: &RotatingFrameSystem, control: usize, gate_ns: f64) -> Result<f64> {
    check_gate_time(gate_ns)?;
    let t_eff = Envelope::flat_top_for_gate(gate_ns, 1.0).effective_duration_ns();
    let objective = |w: f64| -> Result<f64> {
        Ok(tomography(system, control, w, 0.0)?.zx.abs() * 1e-3 * t_eff - 0.25)
    };
    // linear estimate from a weak-drive probe, then expand until bracketed
    let probe = 2.0;
    let slope = tomography(system, control, probe, 0.0)?.zx.abs() / probe;
    if !(slope > 0.0) {
        return Err(Error::Unreachable {
            ceiling_mhz: DRIVE_CEILING_MHZ,
        });
    }
    let mut lo = (0.25 / (slope * 1e-3 * t_eff)).min(DRIVE_CEILING_MHZ) * 0.8;
    let mut f_lo = objective(lo)?;
    while f_lo > 0.0 {
        lo *= 0.7;
        f_lo = objective(lo)?;
    }
    let mut hi = lo;
    loop {
        hi = (hi * 1.25).min(DRIVE_CEILING_MHZ);
        match objective(hi) {
            Ok(v) if v >= 0.0 => break,
            Ok(_) if hi < DRIVE_CEILING_MHZ => lo = hi,
            Ok(_) | Err(Error::DriveBreakdown { .. }) => {
                return Err(Error::Unreachable { ceiling_mhz: hi });
            }
            Err(e) => return Err(e),
        }
    }
    brent_root(objective, lo, hi, 1e-4, 100)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseCalibration {
    pub phase_rad: f64,
    /// ZY left at `phase_rad`, MHz.
    pub zy_mhz: f64,
    /// The objective was flat (no drive); any phase is accepted.
    pub degenerate: bool,
}

/// CR phase that zeroes ZY (no target drive), chosen with ZX of the same
/// sign as at phase zero.
pub fn calibrate_cr_phase(
    model: &DeviceModel,
    control: usize,
    omega_mhz: f64,
) -> Result<PhaseCalibration> {
    let system = build_cr_system(model, control)?;
    calibrate_cr_phase_on(&system, control, omega_mhz)
}

fn calibrate_cr_phase_on(
    system: &RotatingFrameSystem,
    control: usize,
    omega_mhz: f64,
) -> Result<PhaseCalibration> {
    let at0 = tomography(system, control, omega_mhz, 0.0)?;
    let size = at0.zx.hypot(at0.zy);
    if size < 1e-6 {
        return Ok(PhaseCalibration {
            phase_rad: 0.0,
            zy_mhz: at0.zy,
            degenerate: true,
        });
    }
    // (ZX, ZY) rotates rigidly with the phase; start from the geometric guess
    // and polish the zero of ZY around it
    let guess = -at0.zy.atan2(at0.zx);
    let zy = |p: f64| -> Result<f64> { Ok(tomography(system, control, omega_mhz, p)?.zy) };
    let phase = match brent_root(zy, guess - 0.3, guess + 0.3, 1e-9, 100) {
        Ok(p) => p,
        Err(Error::NoSignChange { .. }) => guess,
        Err(e) => return Err(e),
    };
    Ok(PhaseCalibration {
        phase_rad: crate::pulses::wrap_phase(phase),
        zy_mhz: zy(phase)?,
        degenerate: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationReport {
    pub pulse: DirectCnotPulse,
    /// Rows of the 4x4 computational block after the frame change, as
    /// `[re, im]` pairs.
    pub unitary: Vec<Vec<[f64; 2]>>,
    pub fidelity: f64,
    /// Fidelity to the exact CNOT after the frame change.
    pub cnot_fidelity: f64,
    pub leakage: f64,
    /// CR tomography at the calibrated CR amplitude and phase.
    pub residual_rates: ConditionalRates,
    pub rough_amplitude_mhz: f64,
    /// Best infidelity at the end of each optimizer window.
    pub optimizer_trace: Vec<f64>,
    pub evaluations: usize,
    pub converged: bool,
    pub notes: Vec<String>,
}

/// Which parameters the fine calibration may move.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SearchSpace {
    pub drag: bool,
}

impl Default for SearchSpace {
    fn default() -> Self {
        Self { drag: true }
    }
}

fn objective(
    system: &RotatingFrameSystem,
    pulse: &DirectCnotPulse,
    opts: EvolveOptions,
) -> Result<f64> {
    let u = gate_unitary(system, pulse, opts)?;
    Ok(1.0 - best_family_fidelity(&u.computational).1)
}

/// Simplex search over the five pulse parameters maximizing the fidelity to
/// the controlled-X family. Never returns a worse pulse than `start`.
pub fn fine_calibrate(
    model: &DeviceModel,
    start: &DirectCnotPulse,
    space: SearchSpace,
) -> Result<(DirectCnotPulse, Minimum)> {
    let system = build_cr_system(model, start.control)?;
    fine_calibrate_on(&system, start, space, NelderMeadOptions::default())
}

fn fine_calibrate_on(
    system: &RotatingFrameSystem,
    start: &DirectCnotPulse,
    space: SearchSpace,
    nm: NelderMeadOptions,
) -> Result<(DirectCnotPulse, Minimum)> {
    let opts = EvolveOptions::default();
    let p0 = start.parameters();
    let free: Vec<usize> = if space.drag {
        vec![0, 1, 2, 3, 4]
    } else {
        vec![0, 1, 2, 3]
    };
    let x0: Vec<f64> = free.iter().map(|&i| p0[i]).collect();
    let steps: Vec<f64> = free
        .iter()
        .map(|&i| {
            let v = 0.05 * p0[i];
            if v.abs() > 1e-3 {
                v
            } else {
                0.05
            }
        })
        .collect();
    let assemble = |x: &[f64]| {
        let mut p = p0;
        for (k, &i) in free.iter().enumerate() {
            p[i] = x[k];
        }
        start.with_parameters(&p)
    };
    let min = nelder_mead(|x| objective(system, &assemble(x), opts), &x0, &steps, nm)?;
    let mut best = assemble(&min.x);
    let (phi, _, _) = best_family_fidelity(&gate_unitary(system, &best, opts)?.computational);
    best.frame_change_rad = phi;
    Ok((best, min))
}

/// Rough amplitude, phase calibration, target-tone estimate and fine
/// calibration for a gate of `gate_ns`.
pub fn calibrate_direct_cnot(
    model: &DeviceModel,
    control: usize,
    gate_ns: f64,
) -> Result<CalibrationReport> {
    calibrate_direct_cnot_with(model, control, gate_ns, SearchSpace::default())
}

pub fn calibrate_direct_cnot_with(
    model: &DeviceModel,
    control: usize,
    gate_ns: f64,
    space: SearchSpace,
) -> Result<CalibrationReport> {
    let system = build_cr_system(model, control)?;
    let mut notes = Vec::new();
    let omega0 = rough_amplitude_on(&system, control, gate_ns)?;
    let phase = calibrate_cr_phase_on(&system, control, omega0)?;
    if phase.degenerate {
        notes.push(String::from("CR phase objective is flat; phase left at 0"));
    }
    let rates = tomography(&system, control, omega0, phase.phase_rad)?;
    let start = initial_pulse(&system, control, gate_ns, omega0, phase.phase_rad, &rates);
    let (pulse, min) = fine_calibrate_on(&system, &start, space, NelderMeadOptions::default())?;
    if !min.converged {
        notes.push(format!(
            "optimizer stopped after {} evaluations",
            min.evaluations
        ));
    }
    report(&system, pulse, min, omega0, notes)
}

/// Target tone that supplies the IX missing from the CR tone alone.
fn initial_pulse(
    system: &RotatingFrameSystem,
    control: usize,
    gate_ns: f64,
    omega0: f64,
    cr_phase: f64,
    rates: &ConditionalRates,
) -> DirectCnotPulse {
    let mut pulse = cr_only(system, control, gate_ns, omega0, cr_phase);
    let t_eff = pulse.cr.envelope.effective_duration_ns();
    let ix_needed = 0.75 / (t_eff * 1e-3) * rates.zx.signum();
    let target = 1 - control;
    let m_tt = system.raising[target][(ct_index(control, 0, 1), ct_index(control, 0, 0))].norm();
    let amp = (ix_needed - rates.ix) / m_tt;
    let (amp, tphase) = if amp >= 0.0 {
        (amp, 0.0)
    } else {
        (-amp, core::f64::consts::PI)
    };
    pulse.target_tone = DriveTone::new(
        pulse.cr.envelope.with_amplitude(amp),
        system.frame_ghz,
        tphase,
        target,
    );
    pulse
}

fn report(
    system: &RotatingFrameSystem,
    pulse: DirectCnotPulse,
    min: Minimum,
    omega0: f64,
    notes: Vec<String>,
) -> Result<CalibrationReport> {
    let opts = EvolveOptions {
        check_convergence: true,
        ..Default::default()
    };
    let u = gate_unitary(system, &pulse, opts)?;
    let (_, fidelity, leakage) = best_family_fidelity(&u.computational);
    let corrected = apply_virtual_z(&u.computational, pulse.frame_change_rad);
    let (cnot_fidelity, _) = gate_fidelity(&corrected, &cnot_family(0.0))?;
    let residual_rates = tomography(
        system,
        pulse.control,
        pulse.cr.envelope.amplitude_mhz,
        pulse.cr.phase_rad,
    )?;
    Ok(CalibrationReport {
        pulse,
        unitary: (0..4)
            .map(|i| {
                (0..4)
                    .map(|j| [corrected[(i, j)].re, corrected[(i, j)].im])
                    .collect()
            })
            .collect(),
        fidelity,
        cnot_fidelity,
        leakage,
        residual_rates,
        rough_amplitude_mhz: omega0,
        optimizer_trace: min.trace,
        evaluations: min.evaluations,
        converged: min.converged,
        notes,
    })
}

/// 9x9 gate in the qubit frame with the frame change applied, for embedding
/// in leakage-aware simulations.
pub fn calibrated_gate_full(model: &DeviceModel, pulse: &DirectCnotPulse) -> Result<CMatrix> {
    let system = build_cr_system(model, pulse.control)?;
    let u = gate_unitary(&system, pulse, EvolveOptions::default())?;
    Ok(apply_virtual_z_full(
        &u.full,
        pulse.frame_change_rad,
        pulse.control,
    ))
}

/// Rebuilds the 4x4 matrix stored in a report.
pub fn report_unitary(report: &CalibrationReport) -> CMatrix {
    CMatrix::from_fn(4, 4, |i, j| {
        let [re, im] = report.unitary[i][j];
        Complex64::new(re, im)
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateTimeRow {
    pub gate_time_ns: f64,
    /// EPC from simulated RB divided by the CNOTs per Clifford; `None` when
    /// calibration or RB failed.
    pub epg_upper: Option<f64>,
    pub coherence_limit_epg: f64,
    pub fidelity: Option<f64>,
    pub error: Option<String>,
}

/// One row of the error-versus-gate-time table: calibrate at `gate_ns`, run
/// standard RB with the pulse-level CNOT under `noise`, and convert EPC to
/// an upper bound on the error per CNOT.
pub fn gate_time_point(
    model: &DeviceModel,
    control: usize,
    gate_ns: f64,
    noise: &NoiseModel,
    rb: &RbConfig,
    table: &CliffordTable,
    cnot_per_clifford: f64,
) -> GateTimeRow {
    let coherence_limit_epg = match &noise.coherence {
        Some(c) => coherence_limit(c, gate_ns).unwrap_or(f64::NAN),
        None => 0.0,
    };
    let run = || -> Result<(f64, f64)> {
        let report = calibrate_direct_cnot(model, control, gate_ns)?;
        let gates = GateSet::calibrated(
            calibrated_gate_full(model, &report.pulse)?,
            control,
            gate_ns,
        )?;
        let engine = RbEngine::new(table, &gates, noise)?;
        let fit = fit_decay(&engine.run(RbVariant::Standard, rb)?[0])?;
        Ok((
            epg_upper_bound(fit.epc, cnot_per_clifford)?,
            report.fidelity,
        ))
    };
    match run() {
        Ok((epg, f)) => GateTimeRow {
            gate_time_ns: gate_ns,
            epg_upper: Some(epg),
            coherence_limit_epg,
            fidelity: Some(f),
            error: None,
        },
        Err(e) => GateTimeRow {
            gate_time_ns: gate_ns,
            epg_upper: None,
            coherence_limit_epg,
            fidelity: None,
            error: Some(format!("{e}")),
        },
    }
}

pub fn error_vs_gate_time(
    model: &DeviceModel,
    control: usize,
    times_ns: &[f64],
    noise: &NoiseModel,
    rb: &RbConfig,
    table: &CliffordTable,
    cnot_per_clifford: f64,
) -> Vec<GateTimeRow> {
    times_ns
        .iter()
        .map(|&t| gate_time_point(model, control, t, noise, rb, table, cnot_per_clifford))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{identity, kron, max_abs_diff};

    fn pauli_z() -> CMatrix {
        let mut z = identity(2);
        z[(1, 1)] = c64(-1.0, 0.0);
        z
    }

    #[test]
    fn fidelity_identities() {
        let cnot = cnot_family(0.0);
        let (f, l) = gate_fidelity(&cnot, &cnot).unwrap();
        assert!((f - 1.0).abs() < 1e-15 && l.abs() < 1e-15);
        let err = kron(&pauli_z(), &identity(2)) * &cnot;
        let (f, _) = gate_fidelity(&err, &cnot).unwrap();
        assert!((f - 0.2).abs() < 1e-15);
    }

    #[test]
    fn frame_change_extraction() {
        assert!(extract_frame_change(&cnot_family(0.0)).unwrap().abs() < 1e-15);
        let mut zphi = identity(2);
        zphi[(1, 1)] = cis(0.7);
        let u = kron(&zphi, &identity(2)) * cnot_family(0.0);
        let phi = extract_frame_change(&u).unwrap();
        assert!((phi - 0.7).abs() < 1e-9);
        let fixed = apply_virtual_z(&u, phi);
        assert!(max_abs_diff(&fixed, &cnot_family(0.0)) < 1e-12);
        assert!(extract_frame_change(&fixed).unwrap().abs() < 1e-9);
        assert!(matches!(
            extract_frame_change(&identity(4)),
            Err(Error::OutsideFamily { .. })
        ));
    }

    #[test]
    fn family_fidelity_matches_brute_force_scan() {
        let mut u = cnot_family(1.1);
        u[(0, 1)] = c64(0.05, 0.02);
        u[(2, 2)] = c64(0.0, -0.08);
        let (phi, f, _) = best_family_fidelity(&u);
        let mut best: f64 = 0.0;
        for k in 0..20000 {
            let p = TAU * k as f64 / 20000.0;
            best = best.max(gate_fidelity(&u, &cnot_family(p)).unwrap().0);
        }
        assert!((f - best).abs() < 1e-7);
        assert!((gate_fidelity(&u, &cnot_family(phi)).unwrap().0 - f).abs() < 1e-12);
    }

    #[test]
    fn rough_amplitude_scales_inversely_with_time() {
        let m = DeviceModel::device_a();
        let a = rough_amplitude(&m, 0, 200.0).unwrap();
        let b = rough_amplitude(&m, 0, 400.0).unwrap();
        let t_a = Envelope::flat_top_for_gate(200.0, 1.0).effective_duration_ns();
        let t_b = Envelope::flat_top_for_gate(400.0, 1.0).effective_duration_ns();
        // linear regime: amplitude times effective time roughly constant
        let ratio = (a * t_a) / (b * t_b);
        assert!((ratio - 1.0).abs() < 0.2, "{a} MHz @200, {b} MHz @400");
    }

    #[test]
    fn cr_phase_is_zero_or_pi_for_real_couplings() {
        let m = DeviceModel::device_a();
        let cal = calibrate_cr_phase(&m, 0, 20.0).unwrap();
        let d0 = crate::pulses::wrap_phase(cal.phase_rad + 1e-3);
        assert!(
            d0 < 2e-3 || (d0 - core::f64::consts::PI).abs() < 1e-3 || (TAU - d0) < 1e-3,
            "{}",
            cal.phase_rad
        );
        assert!(cal.zy_mhz.abs() < 1e-3);
        let zero = calibrate_cr_phase(&m, 0, 0.0).unwrap();
        assert!(zero.degenerate);
    }

    #[test]
    fn phase_rotates_zx_zy_pair() {
        let system = build_cr_system(&DeviceModel::device_a(), 0).unwrap();
        let a = tomography(&system, 0, 20.0, 0.0).unwrap();
        let b = tomography(&system, 0, 20.0, 0.9).unwrap();
        let (ra, rb) = (a.zx.hypot(a.zy), b.zx.hypot(b.zy));
        assert!(((ra - rb) / ra).abs() < 0.01);
        assert!((b.zy.atan2(b.zx) - a.zy.atan2(a.zx) - 0.9).abs() < 0.02);
    }
}
