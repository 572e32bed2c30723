//! Dressed spectrum and the static quantities derived from it.

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::FRAC_1_SQRT_2;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::linalg::{hermitian_eigen, hermiticity_defect, CMatrix, Complex64};
use crate::model::{build_hamiltonian, Basis, DeviceModel, HamiltonianMatrix};
use crate::optimize::brent_root;
use crate::{Error, Result};

/// Largest tolerated `|H - H^dagger|` entry, GHz.
pub const HERMITICITY_TOLERANCE: f64 = 1e-12;

/// A bare label whose assigned eigenvector overlaps it by less than `1/sqrt(2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelDiagnostic {
    pub bare_index: usize,
    pub eigen_index: usize,
    pub overlap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DressedSpectrum {
    /// Ascending, GHz.
    pub energies: Vec<f64>,
    /// Orthonormal columns. Each column is phased so that its component on
    /// its assigned bare state is real and positive.
    pub vectors: CMatrix,
    pub basis: Basis,
    /// `assignment[bare index] = eigen index`.
    pub assignment: Vec<usize>,
    pub diagnostics: Vec<LabelDiagnostic>,
}

impl DressedSpectrum {
    pub fn eigen_index(&self, occupation: &[usize]) -> Result<usize> {
        self.basis
            .index_of(occupation)
            .map(|b| self.assignment[b])
            .ok_or_else(|| Error::MissingLabel(format!("{occupation:?}")))
    }

    /// Dressed energy (GHz) of the state adiabatically connected to `occupation`.
    pub fn energy(&self, occupation: &[usize]) -> Result<f64> {
        Ok(self.energies[self.eigen_index(occupation)?])
    }

    /// Occupation of the two transmons with every bus empty.
    pub fn qubit_occupation(&self, n0: usize, n1: usize) -> Vec<usize> {
        let mut occ = vec![0; self.basis.dims().len()];
        occ[0] = n0;
        occ[1] = n1;
        occ
    }

    pub fn qubit_energy(&self, n0: usize, n1: usize) -> Result<f64> {
        self.energy(&self.qubit_occupation(n0, n1))
    }

    /// Dressed eigenvector assigned to `occupation`.
    pub fn vector(&self, occupation: &[usize]) -> Result<nalgebra::DVector<Complex64>> {
        Ok(self
            .vectors
            .column(self.eigen_index(occupation)?)
            .into_owned())
    }

    /// Whether any label with both transmons at most `max_level` and empty
    /// buses was flagged as ambiguous.
    pub fn ambiguous_below(&self, max_level: usize) -> bool {
        self.diagnostics.iter().any(|d| {
            let occ = &self.basis.label(d.bare_index).0;
            occ[0] <= max_level && occ[1] <= max_level && occ[2..].iter().all(|&n| n == 0)
        })
    }

    /// Dressed `0 -> 1` transition frequency of a qubit with the other qubit in
    /// its ground state, GHz.
    pub fn qubit_frequency(&self, qubit: usize) -> Result<f64> {
        let e00 = self.qubit_energy(0, 0)?;
        let e = if qubit == 0 {
            self.qubit_energy(1, 0)?
        } else {
            self.qubit_energy(0, 1)?
        };
        Ok(e - e00)
    }
}

/// Diagonalizes a bare-basis Hamiltonian and labels the dressed states.
pub fn diagonalize(h: &HamiltonianMatrix) -> Result<DressedSpectrum> {
    let defect = hermiticity_defect(&h.matrix);
    if defect > HERMITICITY_TOLERANCE {
        return Err(Error::NotHermitian {
            max_deviation: defect,
        });
    }
    let (energies, mut vectors) = hermitian_eigen(&h.matrix);
    let (assignment, diagnostics) = assign_dressed_labels(&vectors);
    for (bare, &k) in assignment.iter().enumerate() {
        let c = vectors[(bare, k)];
        if c.norm() > 0.0 {
            let phase = c.conj() / c.norm();
            for i in 0..vectors.nrows() {
                vectors[(i, k)] *= phase;
            }
        }
    }
    Ok(DressedSpectrum {
        energies,
        vectors,
        basis: h.basis.clone(),
        assignment,
        diagnostics,
    })
}

/// Greedy maximum-overlap bijection between bare states (rows) and
/// eigenvectors (columns). Returns `assignment[bare] = eigen` plus every
/// assignment whose overlap magnitude is below `1/sqrt(2)`.
pub fn assign_dressed_labels(vectors: &CMatrix) -> (Vec<usize>, Vec<LabelDiagnostic>) {
    let n = vectors.nrows();
    let mut pairs: Vec<(f64, usize, usize)> = Vec::with_capacity(n * n);
    for k in 0..n {
        for b in 0..n {
            pairs.push((vectors[(b, k)].norm(), k, b));
        }
    }
    pairs.sort_by(|x, y| {
        y.0.partial_cmp(&x.0)
            .unwrap_or(core::cmp::Ordering::Equal)
            .then(x.1.cmp(&y.1))
            .then(x.2.cmp(&y.2))
    });
    let mut assignment = vec![usize::MAX; n];
    let mut taken = vec![false; n];
    let mut left = n;
    let mut diagnostics = Vec::new();
    for (overlap, k, b) in pairs {
        if left == 0 {
            break;
        }
        if assignment[b] != usize::MAX || taken[k] {
            continue;
        }
        assignment[b] = k;
        taken[k] = true;
        left -= 1;
        // exact 1/sqrt(2) hybridization lands a rounding error either side
        if overlap < FRAC_1_SQRT_2 + 1e-6 {
            diagnostics.push(LabelDiagnostic {
                bare_index: b,
                eigen_index: k,
                overlap,
            });
        }
    }
    (assignment, diagnostics)
}

/// Builds and diagonalizes the model in one step.
pub fn spectrum_of(model: &DeviceModel) -> Result<DressedSpectrum> {
    diagonalize(&build_hamiltonian(model)?)
}

/// `E11 + E00 - E01 - E10` in Hz.
pub fn zz_exact(spectrum: &DressedSpectrum) -> Result<f64> {
    let e = |a, b| spectrum.qubit_energy(a, b);
    Ok((e(1, 1)? + e(0, 0)? - e(0, 1)? - e(1, 0)?) * 1e9)
}

/// Tolerated change of the exact ZZ when the truncation is raised by one.
pub const ZZ_TRUNCATION_TOLERANCE_HZ: f64 = 1e3;

/// Change of the exact ZZ, Hz, when every mode gets one more level.
pub fn zz_truncation_delta(model: &DeviceModel) -> Result<f64> {
    let mut big = model.clone();
    for t in &mut big.transmons {
        t.levels += 1;
    }
    for b in &mut big.buses {
        b.levels += 1;
    }
    Ok(zz_exact(&spectrum_of(&big)?)? - zz_exact(&spectrum_of(model)?)?)
}

/// Second-order single-coupler ZZ, kHz, from MHz inputs.
pub fn zz_perturbative(
    j_mhz: f64,
    delta_mhz: f64,
    alpha0_mhz: f64,
    alpha1_mhz: f64,
) -> Result<f64> {
    let d0 = delta_mhz + alpha0_mhz;
    let d1 = delta_mhz - alpha1_mhz;
    for (name, d) in [("delta + alpha0", d0), ("delta - alpha1", d1)] {
        if d.abs() < 1e-3 {
            return Err(Error::Singular {
                what: "perturbative ZZ",
                detail: format!("{name} = {d} MHz is within 1 kHz of a pole"),
            });
        }
    }
    Ok(2.0 * j_mhz * j_mhz * (alpha0_mhz + alpha1_mhz) / (d0 * d1) * 1e3)
}

/// Cross-resonance coefficient of `control`: the drive-induced target-flip
/// matrix element `m_c = <c,1| a_control^dagger |c,0>` (control label first)
/// evaluated for control `c = 0, 1`, combined as `(m_0 - m_1) / 2`.
///
/// With this normalization the target's ZX rate per unit Rabi drive equals μ
/// (sign included) and a single exchange coupler reproduces `|J_eff| = J`
/// through [`j_eff`]. A single positive coupler with the control above the
/// target gives a negative μ; Device A's bus path flips it positive.
pub fn mu_matrix_element(spectrum: &DressedSpectrum, control: usize) -> Result<f64> {
    if control > 1 {
        return Err(Error::InvalidArgument(format!("control qubit {control}")));
    }
    let raise = spectrum.basis.raising_operator(control);
    let state = |c: usize, t: usize| {
        if control == 0 {
            spectrum.vector(&spectrum.qubit_occupation(c, t))
        } else {
            spectrum.vector(&spectrum.qubit_occupation(t, c))
        }
    };
    let element = |c: usize| -> Result<f64> {
        let bra = state(c, 1)?;
        let ket = state(c, 0)?;
        Ok(bra.dotc(&(&raise * ket)).re)
    };
    Ok((element(0)? - element(1)?) / 2.0)
}

/// Single-coupler exchange strength with the same μ, MHz.
pub fn j_eff(mu: f64, delta_mhz: f64, alpha_mhz: f64) -> Result<f64> {
    if alpha_mhz == 0.0 {
        return Err(Error::InvalidArgument(
            "anharmonicity must be non-zero".to_string(),
        ));
    }
    Ok(mu * (alpha_mhz + delta_mhz) * delta_mhz / alpha_mhz)
}

/// Single-photon dispersive shift of `qubit` from bus `bus`, Hz.
pub fn dispersive_shift(spectrum: &DressedSpectrum, qubit: usize, bus: usize) -> Result<f64> {
    let dims = spectrum.basis.dims();
    if qubit > 1 || 2 + bus >= dims.len() {
        return Err(Error::InvalidArgument(format!("qubit {qubit}, bus {bus}")));
    }
    let e = |nq: usize, nb: usize| {
        let mut occ = vec![0; dims.len()];
        occ[qubit] = nq;
        occ[2 + bus] = nb;
        spectrum.energy(&occ)
    };
    Ok(((e(1, 1)? - e(1, 0)?) - (e(0, 1)? - e(0, 0)?)) * 1e9)
}

/// Direct coupling (MHz) at which the exact ZZ equals `zz_target_hz`, searched
/// over `bracket_mhz`.
pub fn fit_j0_to_zz(
    model: &DeviceModel,
    zz_target_hz: f64,
    bracket_mhz: (f64, f64),
) -> Result<f64> {
    let objective = |j0_mhz: f64| -> Result<f64> {
        Ok(zz_exact(&spectrum_of(&model.with_j0(j0_mhz * 1e-3))?)? - zz_target_hz)
    };
    let j0 = brent_root(objective, bracket_mhz.0, bracket_mhz.1, 1e-7, 200)?;
    let residual = objective(j0)?;
    if residual.abs() > 100.0 {
        return Err(Error::FitFailed {
            residual,
            detail: format!("ZZ residual {residual} Hz at J0 = {j0} MHz"),
        });
    }
    Ok(j0)
}

/// Every direct coupling (MHz) in `bracket_mhz` whose exact ZZ equals
/// `zz_target_hz`, ascending. ZZ is not monotone in J0 (the direct and bus
/// paths interfere), so the bracket is sampled at `points` values first and
/// each sign change refined.
pub fn j0_candidates_for_zz(
    model: &DeviceModel,
    zz_target_hz: f64,
    bracket_mhz: (f64, f64),
    points: usize,
) -> Result<Vec<f64>> {
    let (lo, hi) = bracket_mhz;
    if !(lo < hi) || points < 2 {
        return Err(Error::InvalidArgument(format!(
            "bad J0 scan [{lo}, {hi}] with {points} points"
        )));
    }
    let objective = |j0_mhz: f64| -> Result<f64> {
        Ok(zz_exact(&spectrum_of(&model.with_j0(j0_mhz * 1e-3))?)? - zz_target_hz)
    };
    let xs: Vec<f64> = (0..points)
        .map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64)
        .collect();
    let ys = xs
        .iter()
        .map(|&x| objective(x))
        .collect::<Result<Vec<_>>>()?;
    let mut roots = Vec::new();
    for i in 1..points {
        if ys[i - 1] == 0.0 {
            roots.push(xs[i - 1]);
        } else if ys[i - 1].signum() != ys[i].signum() && ys[i] != 0.0 {
            roots.push(brent_root(objective, xs[i - 1], xs[i], 1e-7, 200)?);
        }
    }
    if ys[points - 1] == 0.0 {
        roots.push(xs[points - 1]);
    }
    Ok(roots)
}

/// Static figures of merit for one device, with qubit 0 as the CR control.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticRates {
    pub zz_hz: f64,
    pub mu: f64,
    pub j_eff_mhz: f64,
    /// `chi_hz[bus][qubit]`.
    pub chi_hz: Vec<[f64; 2]>,
}

/// ZZ, μ, J_eff and every dispersive shift at the model's parameters.
pub fn static_rates(model: &DeviceModel, control: usize) -> Result<StaticRates> {
    let s = spectrum_of(model)?;
    let target = 1 - control;
    let delta_mhz =
        (model.transmons[control].frequency_ghz - model.transmons[target].frequency_ghz) * 1e3;
    let alpha_mhz = model.transmons[control].anharmonicity_ghz * 1e3;
    let mu = mu_matrix_element(&s, control)?;
    let chi_hz = (0..model.buses.len())
        .map(|b| Ok([dispersive_shift(&s, 0, b)?, dispersive_shift(&s, 1, b)?]))
        .collect::<Result<Vec<_>>>()?;
    Ok(StaticRates {
        zz_hz: zz_exact(&s)?,
        mu,
        j_eff_mhz: j_eff(mu, delta_mhz, alpha_mhz)?,
        chi_hz,
    })
}

/// Single direct coupler used as the comparison line in a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCoupler {
    pub j_mhz: f64,
    pub detuning_mhz: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub mean_freq_ghz: f64,
    pub detuning_mhz: f64,
    pub zz_khz: f64,
    pub jeff_mhz: f64,
    /// `|J_eff / ZZ|`, dimensionless; NaN on flagged rows.
    pub ratio: f64,
    /// Labeling of the computational states was ambiguous or ZZ vanished.
    pub flagged: bool,
    /// Perturbative ZZ (kHz) of the reference coupler.
    pub reference_zz_khz: Option<f64>,
    /// Reference-coupler J (MHz) that reproduces this row's ZZ; NaN when no
    /// real J does.
    pub reference_j_mhz: Option<f64>,
}

/// One sweep point: qubits placed at `mean ± detuning / 2`, qubit 0 above
/// qubit 1 for positive detuning and acting as the control.
pub fn sweep_point(
    model: &DeviceModel,
    mean_freq_ghz: f64,
    detuning_mhz: f64,
    reference: Option<ReferenceCoupler>,
) -> Result<SweepRow> {
    let half = detuning_mhz * 1e-3 / 2.0;
    let m = model.with_qubit_frequencies([mean_freq_ghz + half, mean_freq_ghz - half]);
    let s = spectrum_of(&m)?;
    let zz_khz = zz_exact(&s)? * 1e-3;
    let alpha0 = m.transmons[0].anharmonicity_ghz * 1e3;
    let alpha1 = m.transmons[1].anharmonicity_ghz * 1e3;
    let jeff_mhz = j_eff(mu_matrix_element(&s, 0)?, detuning_mhz, alpha0)?;
    let flagged = s.ambiguous_below(1) || zz_khz == 0.0;
    let ratio = if flagged {
        f64::NAN
    } else {
        (jeff_mhz * 1e3 / zz_khz).abs()
    };
    let (reference_zz_khz, reference_j_mhz) = match reference {
        None => (None, None),
        Some(r) => {
            let zz_ref =
                zz_perturbative(r.j_mhz, r.detuning_mhz, alpha0, alpha1).unwrap_or(f64::NAN);
            let unit = zz_perturbative(1.0, r.detuning_mhz, alpha0, alpha1).unwrap_or(f64::NAN);
            let j2 = zz_khz / unit;
            (
                Some(zz_ref),
                Some(if j2 >= 0.0 { j2.sqrt() } else { f64::NAN }),
            )
        }
    };
    Ok(SweepRow {
        mean_freq_ghz,
        detuning_mhz,
        zz_khz,
        jeff_mhz,
        ratio,
        flagged,
        reference_zz_khz,
        reference_j_mhz,
    })
}

/// Rows in detuning-major order: every mean frequency for the first detuning,
/// then the next.
pub fn sweep_static(
    model: &DeviceModel,
    mean_freqs_ghz: &[f64],
    detunings_mhz: &[f64],
    reference: Option<ReferenceCoupler>,
) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::with_capacity(mean_freqs_ghz.len() * detunings_mhz.len());
    for &d in detunings_mhz {
        for &f in mean_freqs_ghz {
            rows.push(sweep_point(model, f, d, reference)?);
        }
    }
    Ok(rows)
}

/// Linear interpolation of the zero crossings of `ys(xs)`.
pub fn zero_crossings(xs: &[f64], ys: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for i in 1..xs.len().min(ys.len()) {
        let (a, b) = (ys[i - 1], ys[i]);
        if !(a.is_finite() && b.is_finite()) {
            continue;
        }
        if a == 0.0 {
            out.push(xs[i - 1]);
        } else if a.signum() != b.signum() && b != 0.0 {
            out.push(xs[i - 1] + (xs[i] - xs[i - 1]) * a / (a - b));
        }
    }
    out
}
