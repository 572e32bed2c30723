//! Driven dynamics in a frame rotating at a chosen frequency, restricted to
//! three dressed levels per transmon, plus the cross-resonance rate
//! extraction built on it.
//!
//! The drive of a tone with complex envelope `ε(t)` on qubit `q` enters as
//! `½ (ε R_q + ε* R_q^dagger)`, where `R_q` is the excitation-raising part of
//! the dressed-basis matrix of `a_q + a_q^dagger`. A resonant tone of constant
//! amplitude `Ω` on an isolated qubit therefore Rabi-flips it in `1 / (2Ω)`.
//!
//! Conditional rates follow the half-Pauli convention: the effective target
//! Hamiltonian with the control in `|c>` is `½ ω^(c)·σ`, with `ω^(c)` in
//! cycles per unit time, and `ZX = (ω_x^(0) - ω_x^(1)) / 2`,
//! `IX = (ω_x^(0) + ω_x^(1)) / 2`, likewise for y and z (the z pair is
//! reported as ZZ and IZ). ZI is the control term of the same convention,
//! i.e. minus the drive-induced shift of the control frequency.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::linalg::{c64, cis, hermitian_eigen, CMatrix, Complex64, TAU};
use crate::model::DeviceModel;
use crate::optimize::{levenberg_marquardt, LmOptions};
use crate::pulses::{sample_envelope, DriveTone};
use crate::spectrum::{spectrum_of, DressedSpectrum};
use crate::{Error, Result};

/// Levels kept per transmon.
pub const LEVELS: usize = 3;
/// Dimension of the two-transmon space.
pub const DIM: usize = LEVELS * LEVELS;

type Mat9 = nalgebra::SMatrix<Complex64, DIM, DIM>;
type State9 = nalgebra::OMatrix<Complex64, nalgebra::Const<DIM>, nalgebra::Dyn>;

/// Index of `|n0, n1>` in the 9-dimensional space.
#[inline]
pub fn level_index(n0: usize, n1: usize) -> usize {
    n0 * LEVELS + n1
}

/// Dressed two-transmon system in a rotating frame.
#[derive(Debug, Clone, PartialEq)]
pub struct RotatingFrameSystem {
    /// Diagonal static Hamiltonian, `E_i - frame * n_i`, GHz.
    pub energies_ghz: Vec<f64>,
    pub frame_ghz: f64,
    /// Excitation-raising drive operator per transmon.
    pub raising: [CMatrix; 2],
    /// Undriven dressed `0 -> 1` frequencies, other qubit in ground, GHz.
    pub qubit_freqs_ghz: [f64; 2],
    /// Exact ZZ of the full model, GHz.
    pub zz_ghz: f64,
}

impl RotatingFrameSystem {
    /// Projects the dressed spectrum of `model` onto its three lowest levels per
    /// transmon (buses empty) in a frame rotating at `frame_ghz`.
    pub fn new(model: &DeviceModel, frame_ghz: f64) -> Result<Self> {
        let spectrum = spectrum_of(model)?;
        Self::from_spectrum(&spectrum, frame_ghz)
    }

    pub fn from_spectrum(spectrum: &DressedSpectrum, frame_ghz: f64) -> Result<Self> {
        let dims = spectrum.basis.dims();
        if dims[0] < LEVELS || dims[1] < LEVELS {
            return Err(Error::InvalidArgument(format!(
                "dynamics need at least {LEVELS} levels per transmon, model has {dims:?}"
            )));
        }
        let mut vecs = Vec::with_capacity(DIM);
        let mut energies = Vec::with_capacity(DIM);
        let mut excitation = Vec::with_capacity(DIM);
        for n0 in 0..LEVELS {
            for n1 in 0..LEVELS {
                let occ = spectrum.qubit_occupation(n0, n1);
                vecs.push(spectrum.vector(&occ)?);
                energies.push(spectrum.energy(&occ)? - frame_ghz * (n0 + n1) as f64);
                excitation.push(n0 + n1);
            }
        }
        let mut raising = [CMatrix::zeros(DIM, DIM), CMatrix::zeros(DIM, DIM)];
        for (q, r) in raising.iter_mut().enumerate() {
            let a_dag = spectrum.basis.raising_operator(q);
            let quad = &a_dag + a_dag.adjoint();
            for j in 0..DIM {
                let col = &quad * &vecs[j];
                for i in 0..DIM {
                    if excitation[i] == excitation[j] + 1 {
                        r[(i, j)] = vecs[i].dotc(&col);
                    }
                }
            }
        }
        let zz = spectrum.qubit_energy(1, 1)? + spectrum.qubit_energy(0, 0)?
            - spectrum.qubit_energy(0, 1)?
            - spectrum.qubit_energy(1, 0)?;
        Ok(Self {
            energies_ghz: energies,
            frame_ghz,
            raising,
            qubit_freqs_ghz: [spectrum.qubit_frequency(0)?, spectrum.qubit_frequency(1)?],
            zz_ghz: zz,
        })
    }

    /// Isolated transmon pair with no coupling at all; mainly for tests.
    pub fn uncoupled(freqs_ghz: [f64; 2], anharms_ghz: [f64; 2], frame_ghz: f64) -> Result<Self> {
        Self::new(
            &DeviceModel::direct(freqs_ghz, anharms_ghz, 0.0).with_levels(LEVELS, 2),
            frame_ghz,
        )
    }

    /// Adds a constant to every static energy.
    pub fn with_energy_offset(mut self, offset_ghz: f64) -> Self {
        for e in &mut self.energies_ghz {
            *e += offset_ghz;
        }
        self
    }

    /// Complex envelope of `tone` at time `t` in this frame, GHz.
    pub fn tone_amplitude(&self, tone: &DriveTone, t: f64) -> Complex64 {
        let (i, q) = sample_envelope(&tone.envelope, t);
        if i == 0.0 && q == 0.0 {
            return c64(0.0, 0.0);
        }
        c64(i, q) * 1e-3 * cis(tone.phase_rad - TAU * (tone.carrier_ghz - self.frame_ghz) * t)
    }

    /// Full Hamiltonian at time `t`, GHz.
    pub fn hamiltonian(&self, tones: &[DriveTone], t: f64) -> CMatrix {
        let mut h = CMatrix::zeros(DIM, DIM);
        for (i, e) in self.energies_ghz.iter().enumerate() {
            h[(i, i)] = c64(*e, 0.0);
        }
        for tone in tones {
            let eps = self.tone_amplitude(tone, t);
            add_drive(&mut h, &self.raising[tone.qubit], eps);
        }
        h
    }

    /// Hamiltonian under a constant drive `omega` (MHz, phase `phase_rad`) on
    /// `qubit` whose carrier coincides with the frame.
    pub fn constant_drive_hamiltonian(
        &self,
        qubit: usize,
        omega_mhz: f64,
        phase_rad: f64,
    ) -> CMatrix {
        let mut h = CMatrix::zeros(DIM, DIM);
        for (i, e) in self.energies_ghz.iter().enumerate() {
            h[(i, i)] = c64(*e, 0.0);
        }
        add_drive(
            &mut h,
            &self.raising[qubit],
            cis(phase_rad) * (omega_mhz * 1e-3),
        );
        h
    }
}

fn add_drive(h: &mut CMatrix, r: &CMatrix, eps: Complex64) {
    if eps == c64(0.0, 0.0) {
        return;
    }
    for j in 0..DIM {
        for i in 0..DIM {
            let v = r[(i, j)];
            if v != c64(0.0, 0.0) {
                let term = 0.5 * eps * v;
                h[(i, j)] += term;
                h[(j, i)] += term.conj();
            }
        }
    }
}

/// System for a CR drive on `control`: frame at the dressed target frequency.
pub fn build_cr_system(model: &DeviceModel, control: usize) -> Result<RotatingFrameSystem> {
    check_control(control)?;
    let s = spectrum_of(model)?;
    let target = 1 - control;
    RotatingFrameSystem::from_spectrum(&s, s.qubit_frequency(target)?)
}

fn check_control(control: usize) -> Result<()> {
    if control > 1 {
        return Err(Error::InvalidArgument(format!("control qubit {control}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvolveOptions {
    /// Fixed step; chosen from the spectral range when `None`.
    pub dt_ns: Option<f64>,
    /// Number of recorded samples after the initial one.
    pub samples: usize,
    /// Re-run with half the step and require final-state infidelity below 1e-9.
    pub check_convergence: bool,
}

impl Default for EvolveOptions {
    fn default() -> Self {
        Self {
            dt_ns: None,
            samples: 1,
            check_convergence: false,
        }
    }
}

/// Recorded states, one column per evolved initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times_ns: Vec<f64>,
    pub states: Vec<CMatrix>,
    pub dt_ns: f64,
}

impl Trajectory {
    pub fn final_state(&self) -> &CMatrix {
        self.states
            .last()
            .expect("trajectory has at least the initial sample")
    }
}

/// Step that keeps the RK4 norm error of a `duration` run near 1e-9.
pub fn default_step(system: &RotatingFrameSystem, tones: &[DriveTone], duration: f64) -> f64 {
    let (lo, hi) = spread(&system.energies_ghz);
    let mut w = 0.5 * (hi - lo);
    for tone in tones {
        let r = &system.raising[tone.qubit];
        let rmax = r.iter().map(|v| v.norm()).fold(0.0, f64::max);
        let (a, d) = (
            tone.envelope.amplitude_mhz.abs(),
            tone.envelope.drag_ns.abs(),
        );
        w += 1e-3 * a * (1.0 + d / tone.envelope.sigma_ns()) * rmax * 2.0;
        w += (tone.carrier_ghz - system.frame_ghz).abs() * 0.0;
    }
    let omega = TAU * w.max(1e-3);
    let x = (1e-9 * 144.0 / (duration.max(1.0) * omega)).powf(0.2);
    (x / omega).min(0.02)
}

fn spread(v: &[f64]) -> (f64, f64) {
    v.iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| {
            (a.min(x), b.max(x))
        })
}

/// Integrates `dψ/dt = -2πi H(t) ψ` with classical fourth-order Runge–Kutta.
/// Each column of `initial` is an independent state.
pub fn evolve(
    system: &RotatingFrameSystem,
    tones: &[DriveTone],
    duration_ns: f64,
    initial: &CMatrix,
    opts: EvolveOptions,
) -> Result<Trajectory> {
    if initial.nrows() != DIM {
        return Err(Error::InvalidArgument(format!(
            "initial states need {DIM} rows, got {}",
            initial.nrows()
        )));
    }
    for t in tones {
        if t.qubit > 1 {
            return Err(Error::InvalidArgument(format!("tone on qubit {}", t.qubit)));
        }
    }
    let dt = opts
        .dt_ns
        .unwrap_or_else(|| default_step(system, tones, duration_ns));
    let traj = rk4(system, tones, duration_ns, initial, dt, opts.samples.max(1))?;
    if opts.check_convergence {
        let fine = rk4(system, tones, duration_ns, initial, dt / 2.0, 1)?;
        let change = state_infidelity(traj.final_state(), fine.final_state());
        if change >= 1e-9 {
            return Err(Error::StepNotConverged { change });
        }
    }
    Ok(traj)
}

/// Mean over columns of `1 - |<a|b>|^2`.
fn state_infidelity(a: &CMatrix, b: &CMatrix) -> f64 {
    let k = a.ncols();
    (0..k)
        .map(|j| 1.0 - a.column(j).dotc(&b.column(j)).norm_sqr())
        .sum::<f64>()
        / k as f64
}

fn rk4(
    system: &RotatingFrameSystem,
    tones: &[DriveTone],
    duration: f64,
    initial: &CMatrix,
    dt_max: f64,
    samples: usize,
) -> Result<Trajectory> {
    rk4_from(system, tones, 0.0, duration, initial, dt_max, samples)
}

/// RK4 over `[t0, t0 + duration]`; recorded times are relative to `t0`.
fn rk4_from(
    system: &RotatingFrameSystem,
    tones: &[DriveTone],
    t0: f64,
    duration: f64,
    initial: &CMatrix,
    dt_max: f64,
    samples: usize,
) -> Result<Trajectory> {
    let steps = ((duration / dt_max).ceil() as usize).max(samples);
    // round up so that samples fall on steps
    let steps = steps.div_ceil(samples) * samples;
    let dt = duration / steps as f64;
    let every = steps / samples;

    // a constant energy shift only changes the global phase
    let (lo, hi) = spread(&system.energies_ghz);
    let mid = 0.5 * (lo + hi);
    let mid_phase = |t: f64| cis(-TAU * mid * (t - t0));

    let mut diag = Mat9::zeros();
    for (i, e) in system.energies_ghz.iter().enumerate() {
        diag[(i, i)] = c64(e - mid, 0.0);
    }
    let ops: Vec<(Mat9, Mat9)> = tones
        .iter()
        .map(|t| {
            let r = Mat9::from_fn(|i, j| system.raising[t.qubit][(i, j)]);
            (r, r.adjoint())
        })
        .collect();
    let minus_two_pi_i = c64(0.0, -TAU);
    let deriv = |t: f64, y: &State9| -> State9 {
        let mut h = diag;
        for (tone, (r, rd)) in tones.iter().zip(&ops) {
            let eps = system.tone_amplitude(tone, t);
            if eps != c64(0.0, 0.0) {
                h += r * (0.5 * eps) + rd * (0.5 * eps.conj());
            }
        }
        h *= minus_two_pi_i;
        h * y
    };

    let mut y = State9::from_fn(initial.ncols(), |i, j| initial[(i, j)]);
    let mut times = vec![0.0];
    let mut states = vec![initial.clone()];
    let norms0: Vec<f64> = (0..y.ncols()).map(|j| y.column(j).norm()).collect();
    let (half, sixth) = (c64(dt / 2.0, 0.0), c64(dt / 6.0, 0.0));
    for n in 0..steps {
        let t = t0 + n as f64 * dt;
        let k1 = deriv(t, &y);
        let k2 = deriv(t + dt / 2.0, &(&y + &k1 * half));
        let k3 = deriv(t + dt / 2.0, &(&y + &k2 * half));
        let k4 = deriv(t + dt, &(&y + &k3 * c64(dt, 0.0)));
        y += (k1 + (k2 + k3) * c64(2.0, 0.0) + k4) * sixth;
        if (n + 1) % every == 0 {
            let tn = (n + 1) as f64 * dt;
            for (j, n0) in norms0.iter().enumerate() {
                let norm = y.column(j).norm();
                if (norm - n0).abs() > 1e-8 {
                    return Err(Error::NormDrift {
                        norm,
                        time_ns: t0 + tn,
                    });
                }
            }
            times.push(tn);
            let p = mid_phase(t0 + tn);
            states.push(CMatrix::from_fn(DIM, y.ncols(), |i, j| y[(i, j)] * p));
        }
    }
    Ok(Trajectory {
        times_ns: times,
        states,
        dt_ns: dt,
    })
}

/// Final states of `initial` after `duration_ns`.
///
/// When every tone has its carrier at the frame frequency, the Hamiltonian is
/// constant on the common flat segment of the envelopes; that segment is then
/// propagated exactly and only the ramps are integrated with RK4.
pub fn propagate_states(
    system: &RotatingFrameSystem,
    tones: &[DriveTone],
    duration_ns: f64,
    initial: &CMatrix,
    opts: EvolveOptions,
) -> Result<CMatrix> {
    let opts = EvolveOptions { samples: 1, ..opts };
    let Some((a, b)) = constant_window(system, tones, duration_ns) else {
        return Ok(evolve(system, tones, duration_ns, initial, opts)?
            .final_state()
            .clone());
    };
    let dt = opts
        .dt_ns
        .unwrap_or_else(|| default_step(system, tones, duration_ns));
    let ramp = |t0: f64, len: f64, y: &CMatrix| -> Result<CMatrix> {
        if len <= 0.0 {
            return Ok(y.clone());
        }
        let run = |step: f64| rk4_from(system, tones, t0, len, y, step, 1);
        let coarse = run(dt)?;
        if opts.check_convergence {
            let fine = run(dt / 2.0)?;
            let change = state_infidelity(coarse.final_state(), fine.final_state());
            if change >= 1e-9 {
                return Err(Error::StepNotConverged { change });
            }
        }
        Ok(coarse.final_state().clone())
    };
    let y = ramp(0.0, a, initial)?;
    let h = system.hamiltonian(tones, 0.5 * (a + b));
    let evo = ConstantEvolution::new(&h);
    let y = evo.apply(&(evo.vectors.adjoint() * y), b - a);
    ramp(b, duration_ns - b, &y)
}

/// Common interval on which every tone is constant in the frame.
fn constant_window(
    system: &RotatingFrameSystem,
    tones: &[DriveTone],
    duration: f64,
) -> Option<(f64, f64)> {
    let (mut a, mut b) = (0.0_f64, duration);
    for tone in tones {
        if tone.carrier_ghz != system.frame_ghz {
            return None;
        }
        let e = &tone.envelope;
        match e.shape {
            crate::pulses::Shape::FlatTopGaussian { sigma_ns, flat_ns } => {
                a = a.max(2.0 * sigma_ns);
                b = b.min(2.0 * sigma_ns + flat_ns);
            }
            crate::pulses::Shape::LoweredGaussian { .. } => {
                if e.amplitude_mhz != 0.0 {
                    return None;
                }
            }
        }
    }
    (b - a > 1.0).then_some((a, b))
}

/// Propagator of the full 9-dimensional space over `duration_ns`.
pub fn propagate(
    system: &RotatingFrameSystem,
    tones: &[DriveTone],
    duration_ns: f64,
    opts: EvolveOptions,
) -> Result<CMatrix> {
    propagate_states(
        system,
        tones,
        duration_ns,
        &CMatrix::identity(DIM, DIM),
        opts,
    )
}

/// Cross-resonance rates in MHz.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConditionalRates {
    pub zx: f64,
    pub zy: f64,
    pub zz: f64,
    pub ix: f64,
    pub iy: f64,
    pub iz: f64,
    /// Control Stark term.
    pub zi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TomographyOptions {
    /// Longest evolution time; picked from the expected rates when `None`.
    pub max_time_ns: Option<f64>,
    pub samples: usize,
    pub cr_phase_rad: f64,
    /// Also compute the Stark term ZI.
    pub stark: bool,
}

impl Default for TomographyOptions {
    fn default() -> Self {
        Self {
            max_time_ns: None,
            samples: 200,
            cr_phase_rad: 0.0,
            stark: true,
        }
    }
}

/// Exact time evolution under a time-independent Hamiltonian.
struct ConstantEvolution {
    values: Vec<f64>,
    vectors: CMatrix,
}

impl ConstantEvolution {
    fn new(h: &CMatrix) -> Self {
        let (values, vectors) = hermitian_eigen(h);
        Self { values, vectors }
    }

    /// `exp(-2πiHt) ψ` for every column of `psi`, given `V^dagger ψ`.
    fn apply(&self, coeffs: &CMatrix, t: f64) -> CMatrix {
        let mut c = coeffs.clone();
        for (i, e) in self.values.iter().enumerate() {
            let p = cis(-TAU * e * t);
            for j in 0..c.ncols() {
                c[(i, j)] *= p;
            }
        }
        &self.vectors * c
    }
}

/// Product of a control level and a target superposition `a|0> + b|1>`.
fn product_state(
    control: usize,
    c: usize,
    a: Complex64,
    b: Complex64,
) -> nalgebra::DVector<Complex64> {
    let (i0, i1) = if control == 0 {
        (level_index(c, 0), level_index(c, 1))
    } else {
        (level_index(0, c), level_index(1, c))
    };
    let mut v = nalgebra::DVector::zeros(DIM);
    v[i0] = a;
    v[i1] = b;
    v
}

/// Target Bloch vector (over its qubit block) and target qubit-subspace
/// population for a pure state.
fn target_bloch(control: usize, psi: &nalgebra::DVectorView<Complex64>) -> ([f64; 3], f64) {
    let mut rho = [[c64(0.0, 0.0); 2]; 2];
    for c in 0..LEVELS {
        let idx = |t: usize| {
            if control == 0 {
                level_index(c, t)
            } else {
                level_index(t, c)
            }
        };
        for a in 0..2 {
            for b in 0..2 {
                rho[a][b] += psi[idx(a)] * psi[idx(b)].conj();
            }
        }
    }
    let pop = rho[0][0].re + rho[1][1].re;
    (
        [
            2.0 * rho[0][1].re,
            -2.0 * rho[0][1].im,
            rho[0][0].re - rho[1][1].re,
        ],
        pop,
    )
}

/// Rotation `exp(2π t [ω]×)` applied to `v`.
fn rotate(w: &[f64], t: f64, v: &[f64; 3]) -> [f64; 3] {
    let norm = (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt();
    if norm == 0.0 {
        return *v;
    }
    let n = [w[0] / norm, w[1] / norm, w[2] / norm];
    let th = TAU * norm * t;
    let (s, c) = (th.sin(), th.cos());
    let dot = n[0] * v[0] + n[1] * v[1] + n[2] * v[2];
    let cross = [
        n[1] * v[2] - n[2] * v[1],
        n[2] * v[0] - n[0] * v[2],
        n[0] * v[1] - n[1] * v[0],
    ];
    let mut out = [0.0; 3];
    for i in 0..3 {
        out[i] = v[i] * c + cross[i] * s + n[i] * dot * (1.0 - c);
    }
    out
}

fn cross3(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

/// Rotation vector (axis times angle) of the rotation whose columns are
/// the images of x, y and z.
fn axis_angle(rx: &[f64; 3], ry: &[f64; 3], rz: &[f64; 3]) -> [f64; 3] {
    // r[i][j] = component i of the image of basis vector j
    let r = |i: usize, j: usize| [rx, ry, rz][j][i];
    let tr = r(0, 0) + r(1, 1) + r(2, 2);
    let angle = ((tr - 1.0) / 2.0).clamp(-1.0, 1.0).acos();
    let v = [r(2, 1) - r(1, 2), r(0, 2) - r(2, 0), r(1, 0) - r(0, 1)];
    let s = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    if s < 1e-12 {
        return [0.0; 3];
    }
    [v[0] / s * angle, v[1] / s * angle, v[2] / s * angle]
}

/// Fits `ω^(c)` (GHz) to target Bloch data from the `|0>` and `|+>` starts.
fn fit_conditional_vector(
    times: &[f64],
    from_z: &[[f64; 3]],
    from_x: &[[f64; 3]],
) -> Result<[f64; 3]> {
    // initial guess from the first sample whose rotation angle exceeds ~1 rad
    let mut guess = [0.0; 3];
    for (k, &t) in times.iter().enumerate().skip(1) {
        let rz = from_z[k];
        let rx = from_x[k];
        let ry = cross3(&rz, &rx);
        let v = axis_angle(&rx, &ry, &rz);
        let angle = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        guess = [v[0] / (TAU * t), v[1] / (TAU * t), v[2] / (TAU * t)];
        if angle > 1.0 {
            break;
        }
    }
    let scale = 1e-3; // fit in MHz for conditioning
    let residual = |p: &[f64]| -> Result<Vec<f64>> {
        let w = [p[0] * scale, p[1] * scale, p[2] * scale];
        let mut r = Vec::with_capacity(times.len() * 6);
        for (k, &t) in times.iter().enumerate() {
            let a = rotate(&w, t, &[0.0, 0.0, 1.0]);
            let b = rotate(&w, t, &[1.0, 0.0, 0.0]);
            for i in 0..3 {
                r.push(a[i] - from_z[k][i]);
                r.push(b[i] - from_x[k][i]);
            }
        }
        Ok(r)
    };
    let fit = levenberg_marquardt(
        residual,
        &[guess[0] / scale, guess[1] / scale, guess[2] / scale],
        LmOptions::default(),
    )?;
    let rms = (fit.sse / (times.len() * 6) as f64).sqrt();
    if !rms.is_finite() || rms > 0.05 {
        return Err(Error::FitFailed {
            residual: rms,
            detail: format!("generalized-Rabi fit, guess {guess:?}"),
        });
    }
    Ok([
        fit.params[0] * scale,
        fit.params[1] * scale,
        fit.params[2] * scale,
    ])
}

/// Smallest tolerated target qubit-subspace population during tomography.
pub const BREAKDOWN_POPULATION: f64 = 0.99;

/// Hamiltonian tomography of a constant CR drive of `omega_mhz` on `control`.
pub fn cr_hamiltonian_tomography(
    model: &DeviceModel,
    control: usize,
    omega_mhz: f64,
    opts: TomographyOptions,
) -> Result<ConditionalRates> {
    let system = build_cr_system(model, control)?;
    cr_tomography_on(&system, control, omega_mhz, opts)
}

/// Expected largest conditional rate, GHz, for choosing evolution times.
fn rate_scale(system: &RotatingFrameSystem, control: usize, omega_mhz: f64) -> f64 {
    let r = &system.raising[control];
    let flip = |c: usize| {
        let (i, j) = if control == 0 {
            (level_index(c, 1), level_index(c, 0))
        } else {
            (level_index(1, c), level_index(0, c))
        };
        r[(i, j)].norm()
    };
    omega_mhz.abs() * 1e-3 * flip(0).max(flip(1)) + system.zz_ghz.abs()
}

/// Tomography on a prepared CR system.
pub fn cr_tomography_on(
    system: &RotatingFrameSystem,
    control: usize,
    omega_mhz: f64,
    opts: TomographyOptions,
) -> Result<ConditionalRates> {
    check_control(control)?;
    let t_max = opts
        .max_time_ns
        .unwrap_or_else(|| (1.5 / rate_scale(system, control, omega_mhz)).clamp(50.0, 20_000.0));
    let n = opts.samples.max(10);
    let times: Vec<f64> = (0..=n).map(|k| t_max * k as f64 / n as f64).collect();
    let h = system.constant_drive_hamiltonian(control, omega_mhz, opts.cr_phase_rad);
    let evo = ConstantEvolution::new(&h);
    let s = core::f64::consts::FRAC_1_SQRT_2;

    let mut w = [[0.0; 3]; 2];
    #[allow(clippy::needless_range_loop)]
    for c in 0..2 {
        let mut init = CMatrix::zeros(DIM, 2);
        init.set_column(0, &product_state(control, c, c64(1.0, 0.0), c64(0.0, 0.0)));
        init.set_column(1, &product_state(control, c, c64(s, 0.0), c64(s, 0.0)));
        let coeffs = evo.vectors.adjoint() * init;
        let mut from_z = Vec::with_capacity(times.len());
        let mut from_x = Vec::with_capacity(times.len());
        for &t in &times {
            let psi = evo.apply(&coeffs, t);
            let (bz, pz) = target_bloch(control, &psi.column(0));
            let (bx, px) = target_bloch(control, &psi.column(1));
            let pop = pz.min(px);
            if pop < BREAKDOWN_POPULATION {
                return Err(Error::DriveBreakdown {
                    omega_mhz,
                    population: pop,
                });
            }
            from_z.push(bz);
            from_x.push(bx);
        }
        w[c] = fit_conditional_vector(&times, &from_z, &from_x)?;
    }
    let mhz = 1e3;
    let zi = if opts.stark {
        stark_on(system, control, omega_mhz, opts.cr_phase_rad)?
    } else {
        0.0
    };
    Ok(ConditionalRates {
        zx: (w[0][0] - w[1][0]) / 2.0 * mhz,
        zy: (w[0][1] - w[1][1]) / 2.0 * mhz,
        zz: (w[0][2] - w[1][2]) / 2.0 * mhz,
        ix: (w[0][0] + w[1][0]) / 2.0 * mhz,
        iy: (w[0][1] + w[1][1]) / 2.0 * mhz,
        iz: (w[0][2] + w[1][2]) / 2.0 * mhz,
        zi,
    })
}

/// Control Stark term ZI (MHz, signed; negative when the drive pushes the
/// control frequency up).
///
/// In the frame of the target frequency a constant CR drive is static, so the
/// shift is read from quasi-energies: the control frequency, averaged over
/// the target, is half the difference of the summed energies of the two
/// eigenstates carrying the most `|1, t>` weight and the two carrying the
/// most `|0, t>` weight.
pub fn stark_shift_zi(model: &DeviceModel, control: usize, omega_mhz: f64) -> Result<f64> {
    let system = build_cr_system(model, control)?;
    stark_on(&system, control, omega_mhz, 0.0)
}

#[cfg(test)]
/// Phase rate (GHz) of the control coherence, averaged over the target in
/// `|0>` and `|1>`, after removing `demod_ghz`.
fn ramsey_rate(
    system: &RotatingFrameSystem,
    control: usize,
    omega_mhz: f64,
    phase: f64,
    t_max: f64,
    n: usize,
    demod_ghz: f64,
) -> Result<f64> {
    let h = system.constant_drive_hamiltonian(control, omega_mhz, phase);
    let evo = ConstantEvolution::new(&h);
    let s = core::f64::consts::FRAC_1_SQRT_2;
    let mut init = CMatrix::zeros(DIM, 2);
    for tgt in 0..2 {
        let mut v = nalgebra::DVector::zeros(DIM);
        let (i0, i1) = if control == 0 {
            (level_index(0, tgt), level_index(1, tgt))
        } else {
            (level_index(tgt, 0), level_index(tgt, 1))
        };
        v[i0] = c64(s, 0.0);
        v[i1] = c64(s, 0.0);
        init.set_column(tgt, &v);
    }
    let coeffs = evo.vectors.adjoint() * init;
    // Weighted mean of the phase increments of rho01^2. Squaring removes the
    // sign flips of the real envelope; weighting by amplitude suppresses the
    // increments taken across its zeros.
    let dt = t_max / n as f64;
    let mut prev: Option<Complex64> = None;
    let mut num = 0.0;
    let mut den = 0.0;
    for k in 0..=n {
        let t = dt * k as f64;
        let psi = evo.apply(&coeffs, t);
        // control coherence <0|rho|1>, traced over the target's three levels
        let mut rho01 = c64(0.0, 0.0);
        for col in 0..2 {
            for l in 0..LEVELS {
                let (a, b) = if control == 0 {
                    (level_index(0, l), level_index(1, l))
                } else {
                    (level_index(l, 0), level_index(l, 1))
                };
                rho01 += psi[(a, col)] * psi[(b, col)].conj();
            }
        }
        let rho01 = rho01 * 0.5 * cis(-TAU * demod_ghz * t);
        let sq = rho01 * rho01;
        if let Some(p) = prev {
            let step = sq * p.conj();
            let w = step.norm();
            num += w * step.arg() / 2.0;
            den += w * dt;
        }
        prev = Some(sq);
    }
    if !(den > 0.0) {
        return Err(Error::FitFailed {
            residual: f64::NAN,
            detail: "Ramsey coherence vanished".into(),
        });
    }
    // rho01 ~ exp(+2πi f t) for a control frequency f
    Ok(demod_ghz + num / den / TAU)
}

/// Averaged control frequency (GHz) in the rotating frame under a constant
/// drive.
fn dressed_control_frequency(
    system: &RotatingFrameSystem,
    control: usize,
    omega_mhz: f64,
    phase: f64,
) -> Result<f64> {
    let h = system.constant_drive_hamiltonian(control, omega_mhz, phase);
    let (values, vectors) = hermitian_eigen(&h);
    let index = |c: usize, t: usize| {
        if control == 0 {
            level_index(c, t)
        } else {
            level_index(t, c)
        }
    };
    let mut weights: Vec<(f64, usize, usize)> = Vec::with_capacity(2 * DIM);
    for v in 0..DIM {
        for c in 0..2 {
            let w = (0..2)
                .map(|t| vectors[(index(c, t), v)].norm_sqr())
                .sum::<f64>();
            weights.push((w, v, c));
        }
    }
    weights.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut taken = [false; DIM];
    let mut count = [0usize; 2];
    let mut sum = [0.0f64; 2];
    for (w, v, c) in weights {
        if taken[v] || count[c] == 2 {
            continue;
        }
        if w < 0.5 {
            return Err(Error::DriveBreakdown {
                omega_mhz,
                population: w,
            });
        }
        taken[v] = true;
        count[c] += 1;
        sum[c] += values[v];
    }
    Ok((sum[1] - sum[0]) / 2.0)
}

fn stark_on(
    system: &RotatingFrameSystem,
    control: usize,
    omega_mhz: f64,
    phase: f64,
) -> Result<f64> {
    let driven = dressed_control_frequency(system, control, omega_mhz, phase)?;
    let idle = dressed_control_frequency(system, control, 0.0, phase)?;
    Ok(-(driven - idle) * 1e3)
}

#[cfg(test)]
fn stark_ramsey(
    system: &RotatingFrameSystem,
    control: usize,
    omega_mhz: f64,
    phase: f64,
    max_time_ns: Option<f64>,
) -> Result<f64> {
    let f_c = system.energies_ghz[if control == 0 {
        level_index(1, 0)
    } else {
        level_index(0, 1)
    }] - system.energies_ghz[0];
    // second-order estimate of the shift to size the Ramsey window
    let delta = f_c.abs().max(1e-3);
    let est = (omega_mhz * 1e-3).powi(2) / (4.0 * delta) + system.zz_ghz.abs() / 2.0 + 1e-6;
    let t_max = max_time_ns.unwrap_or_else(|| (0.25 / est).clamp(100.0, 10_000.0));
    // resolve the fast control precession and the drive wiggles at ~delta
    let n = ((t_max * delta * 8.0).ceil() as usize).clamp(400, 200_000);
    let demod = f_c + system.zz_ghz / 2.0;
    let driven = ramsey_rate(system, control, omega_mhz, phase, t_max, n, demod)?;
    let idle = ramsey_rate(system, control, 0.0, phase, t_max, n, demod)?;
    Ok(-(driven - idle) * 1e3)
}

/// One row of the ZX-versus-drive table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub omega_mhz: f64,
    pub rates: ConditionalRates,
}

/// Tomography (with Stark term) at every drive amplitude.
pub fn zx_vs_drive_curve(
    model: &DeviceModel,
    control: usize,
    omegas_mhz: &[f64],
) -> Result<Vec<CurveRow>> {
    if omegas_mhz.is_empty() {
        return Ok(Vec::new());
    }
    let system = build_cr_system(model, control)?;
    omegas_mhz
        .iter()
        .map(|&w| {
            Ok(CurveRow {
                omega_mhz: w,
                rates: cr_tomography_on(&system, control, w, TomographyOptions::default())?,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pulses::Envelope;
    use crate::spectrum::mu_matrix_element;

    fn qubit_pop(psi: &CMatrix, idx: usize) -> f64 {
        psi[(idx, 0)].norm_sqr()
    }

    fn constant_tone(amp_mhz: f64, len: f64, carrier: f64, qubit: usize) -> DriveTone {
        // flat top with a vanishing rise is a square pulse
        DriveTone::new(Envelope::flat_top(1e-9, len, amp_mhz), carrier, 0.0, qubit)
    }

    /// Uncoupled pair with the `1 -> 2` drive element of qubit 0 removed,
    /// so that qubit 0 is an exact two-level system.
    fn two_level_system(frame: f64) -> RotatingFrameSystem {
        let mut sys = RotatingFrameSystem::uncoupled([5.0, 5.3], [-0.3, -0.3], frame).unwrap();
        for n1 in 0..LEVELS {
            sys.raising[0][(level_index(2, n1), level_index(1, n1))] = c64(0.0, 0.0);
        }
        sys
    }

    #[test]
    fn resonant_rabi_pi_pulse() {
        let sys = two_level_system(5.0);
        let omega = 20.0; // MHz
        let t = 1.0 / (2.0 * omega * 1e-3);
        let tone = constant_tone(omega, t, 5.0, 0);
        let mut psi = CMatrix::zeros(DIM, 1);
        psi[(0, 0)] = c64(1.0, 0.0);
        let traj = evolve(&sys, &[tone], t + 2e-9, &psi, EvolveOptions::default()).unwrap();
        let p1 = qubit_pop(traj.final_state(), level_index(1, 0));
        assert!(p1 > 1.0 - 1e-6, "p1 = {p1}");
    }

    #[test]
    fn zero_drive_is_phase_only() {
        let sys = build_cr_system(&DeviceModel::device_a(), 0).unwrap();
        let tone = constant_tone(0.0, 100.0, sys.frame_ghz, 0);
        let mut psi = CMatrix::zeros(DIM, 1);
        let s = core::f64::consts::FRAC_1_SQRT_2;
        psi[(level_index(0, 0), 0)] = c64(s, 0.0);
        psi[(level_index(1, 1), 0)] = c64(0.0, s);
        let out = evolve(&sys, &[tone], 100.0, &psi, EvolveOptions::default()).unwrap();
        let fin = out.final_state();
        for i in 0..DIM {
            let expected = psi[(i, 0)] * cis(-TAU * sys.energies_ghz[i] * 100.0);
            assert!((fin[(i, 0)] - expected).norm() < 1e-6);
        }
    }

    #[test]
    fn detuned_rabi_frequency() {
        let sys = two_level_system(5.0);
        let (omega, delta) = (10.0, 6.0); // MHz
        let t_total = 400.0;
        let tone = constant_tone(omega, t_total, 5.0 - delta * 1e-3, 0);
        let mut psi = CMatrix::zeros(DIM, 1);
        psi[(0, 0)] = c64(1.0, 0.0);
        let traj = evolve(
            &sys,
            &[tone],
            t_total,
            &psi,
            EvolveOptions {
                samples: 4000,
                ..Default::default()
            },
        )
        .unwrap();
        let gen = (omega * omega + delta * delta).sqrt() * 1e-3;
        let amp = (omega * 1e-3 / gen).powi(2);
        let mut worst: f64 = 0.0;
        for (t, s) in traj.times_ns.iter().zip(&traj.states) {
            let p = s[(level_index(1, 0), 0)].norm_sqr();
            let expected = amp * (core::f64::consts::PI * gen * t).sin().powi(2);
            worst = worst.max((p - expected).abs());
        }
        // a 0.1% frequency error would be a ~5e-3 excursion after 4 periods
        assert!(worst < 1e-3, "worst deviation {worst}");
    }

    #[test]
    fn norm_preserved_and_step_converged() {
        let sys = build_cr_system(&DeviceModel::device_a(), 0).unwrap();
        let cr = DriveTone::new(Envelope::flat_top(10.0, 140.0, 40.0), sys.frame_ghz, 0.3, 0);
        let tgt = DriveTone::new(
            Envelope::flat_top(10.0, 140.0, 20.0).with_drag(0.3),
            sys.frame_ghz,
            0.0,
            1,
        );
        let traj = evolve(
            &sys,
            &[cr, tgt],
            180.0,
            &CMatrix::identity(DIM, DIM),
            EvolveOptions {
                samples: 50,
                check_convergence: true,
                ..Default::default()
            },
        )
        .unwrap();
        for s in &traj.states {
            for j in 0..DIM {
                assert!((s.column(j).norm() - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn exact_plateau_matches_rk4() {
        let sys = build_cr_system(&DeviceModel::device_a(), 0).unwrap();
        let cr = DriveTone::new(Envelope::flat_top(10.0, 100.0, 30.0), sys.frame_ghz, 0.4, 0);
        let tgt = DriveTone::new(
            Envelope::flat_top(10.0, 100.0, 12.0).with_drag(0.5),
            sys.frame_ghz,
            2.0,
            1,
        );
        let id = CMatrix::identity(DIM, DIM);
        let full = evolve(&sys, &[cr, tgt], 140.0, &id, EvolveOptions::default()).unwrap();
        let hybrid = propagate(&sys, &[cr, tgt], 140.0, EvolveOptions::default()).unwrap();
        assert!(crate::linalg::max_abs_diff(full.final_state(), &hybrid) < 1e-7);
    }

    #[test]
    fn drive_matrix_elements_near_bare_ladder() {
        let sys = build_cr_system(&DeviceModel::device_a(), 0).unwrap();
        let r = &sys.raising[0];
        for (a, b, bare) in [
            ((1, 0), (0, 0), 1.0),
            ((2, 0), (1, 0), 2f64.sqrt()),
            ((1, 1), (0, 1), 1.0),
        ] {
            let v = r[(level_index(a.0, a.1), level_index(b.0, b.1))].norm();
            assert!((v - bare).abs() < 0.05 * bare, "{a:?}<-{b:?}: {v}");
        }
    }

    #[test]
    fn zero_drive_rates_vanish() {
        let m = DeviceModel::device_a();
        let r = cr_hamiltonian_tomography(&m, 0, 0.0, TomographyOptions::default()).unwrap();
        let zz_mhz = 0.026;
        for v in [r.zx, r.zy, r.ix, r.iy, r.zi] {
            assert!(v.abs() < 1e-3, "{r:?}");
        }
        assert!(
            r.zz.abs() <= zz_mhz / 2.0 * 1.2 && r.iz.abs() <= zz_mhz / 2.0 * 1.2,
            "{r:?}"
        );
    }

    #[test]
    fn low_drive_zx_matches_mu() {
        let m = DeviceModel::device_a();
        let mu = mu_matrix_element(&spectrum_of(&m).unwrap(), 0).unwrap();
        let opts = TomographyOptions {
            stark: false,
            ..Default::default()
        };
        let r = cr_hamiltonian_tomography(&m, 0, 2.0, opts).unwrap();
        assert!(
            ((r.zx / 2.0 - mu) / mu).abs() < 0.02,
            "{} vs {mu}",
            r.zx / 2.0
        );
        assert!(r.zy.abs() < 1e-3 * r.zx.abs().max(1e-3));
    }

    #[test]
    fn frame_offset_leaves_rates_unchanged() {
        let sys = build_cr_system(&DeviceModel::device_b(), 0).unwrap();
        let shifted = sys.clone().with_energy_offset(0.37);
        let opts = TomographyOptions::default();
        let a = cr_tomography_on(&sys, 0, 5.0, opts).unwrap();
        let b = cr_tomography_on(&shifted, 0, 5.0, opts).unwrap();
        for (x, y) in [(a.zx, b.zx), (a.ix, b.ix), (a.zi, b.zi), (a.iz, b.iz)] {
            assert!((x - y).abs() < 1e-3);
        }
    }

    #[test]
    fn stark_shift_is_negative_and_quadratic() {
        let m = DeviceModel::device_a();
        assert!(stark_shift_zi(&m, 0, 0.0).unwrap().abs() < 1e-3);
        let a = stark_shift_zi(&m, 0, 2.0).unwrap();
        let b = stark_shift_zi(&m, 0, 4.0).unwrap();
        assert!(a < 0.0 && b < 0.0, "{a} {b}");
        let slope = (b / a).ln() / 2f64.ln();
        assert!((slope - 2.0).abs() < 0.1, "slope {slope} ({a}, {b})");
    }

    #[test]
    fn quasienergy_stark_matches_ramsey() {
        for (m, control) in [
            (DeviceModel::device_a(), 0),
            (DeviceModel::device_b(), 0),
            (DeviceModel::device_a(), 1),
        ] {
            let sys = build_cr_system(&m, control).unwrap();
            let q = stark_on(&sys, control, 3.0, 0.0).unwrap();
            let r = stark_ramsey(&sys, control, 3.0, 0.0, None).unwrap();
            assert!((q - r).abs() < 0.02 * r.abs(), "{q} vs {r}");
        }
    }

    #[test]
    fn quasienergy_stark_matches_second_order() {
        // isolated control: |0>-|1> coupling Ω/2 at detuning Δ, |1>-|2>
        // coupling Ω/√2 at detuning Δ + α
        let (fc, ft, a) = (5.15, 5.09, -0.30);
        let sys = RotatingFrameSystem::uncoupled([fc, ft], [a, a], ft).unwrap();
        for w in [1.0, 2.0] {
            let (o, d) = (w * 1e-3, fc - ft);
            let shift = (o / 2.0).powi(2) * 2.0 / d - (o * o / 2.0) / (d + a);
            let zi = stark_on(&sys, 0, w, 0.0).unwrap();
            assert!(
                (zi + shift * 1e3).abs() < 1e-3 * shift * 1e3,
                "{zi} vs {}",
                -shift * 1e3
            );
        }
    }
}
