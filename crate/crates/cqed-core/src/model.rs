//! Device description and the bare-basis circuit Hamiltonian.
//!
//! Modes are ordered `(transmon 0, transmon 1, bus 0, bus 1, ...)` and the
//! product basis is enumerated lexicographically with transmon 0 slowest. Every
//! coupling is a full quadrature product `c (a_i^dagger + a_i)(b^dagger + b)`;
//! no rotating-wave approximation is made.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::linalg::{c64, CMatrix};
use crate::{Error, Result};

/// Default truncation for static analysis.
pub const DEFAULT_TRANSMON_LEVELS: usize = 5;
pub const DEFAULT_BUS_LEVELS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmonSpec {
    pub frequency_ghz: f64,
    /// Negative for transmons.
    pub anharmonicity_ghz: f64,
    pub levels: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BusModeSpec {
    pub frequency_ghz: f64,
    /// Coupling to transmon 0 and transmon 1.
    pub couplings_ghz: [f64; 2],
    pub levels: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeviceModel {
    pub transmons: [TransmonSpec; 2],
    /// Direct exchange coupling; may be zero.
    pub j0_ghz: f64,
    pub buses: Vec<BusModeSpec>,
}

impl DeviceModel {
    /// Two transmons with a single direct coupler.
    pub fn direct(freqs_ghz: [f64; 2], anharms_ghz: [f64; 2], j_ghz: f64) -> Self {
        let t = |i: usize| TransmonSpec {
            frequency_ghz: freqs_ghz[i],
            anharmonicity_ghz: anharms_ghz[i],
            levels: DEFAULT_TRANSMON_LEVELS,
        };
        Self {
            transmons: [t(0), t(1)],
            j0_ghz: j_ghz,
            buses: Vec::new(),
        }
    }

    /// Multi-path device: a direct coupler plus a quarter-wave bus resonator.
    ///
    /// f = 5.1518 / 5.0892 GHz, alpha = -302 MHz each, bus at 5.9638 GHz with
    /// g = 88.5 / 87.5 MHz, J0 = 6.2 MHz.
    pub fn device_a() -> Self {
        let mut m = Self::direct([5.1518, 5.0892], [-0.302, -0.302], 0.0062);
        m.buses.push(BusModeSpec {
            frequency_ghz: 5.9638,
            couplings_ghz: [0.0885, 0.0875],
            levels: DEFAULT_BUS_LEVELS,
        });
        m
    }

    /// Single direct coupler reference device: f = 5.1330 / 5.0442 GHz,
    /// alpha = -318 / -320 MHz, J = 2.07 MHz.
    #[allow(clippy::approx_constant)]
    pub fn device_b() -> Self {
        Self::direct([5.1330, 5.0442], [-0.318, -0.320], 0.00207)
    }

    /// Copy with every transmon truncated to `transmon` levels and every bus
    /// mode to `bus` levels.
    pub fn with_levels(&self, transmon: usize, bus: usize) -> Self {
        let mut m = self.clone();
        for t in &mut m.transmons {
            t.levels = transmon;
        }
        for b in &mut m.buses {
            b.levels = bus;
        }
        m
    }

    /// Copy with both qubit frequencies replaced.
    pub fn with_qubit_frequencies(&self, freqs_ghz: [f64; 2]) -> Self {
        let mut m = self.clone();
        m.transmons[0].frequency_ghz = freqs_ghz[0];
        m.transmons[1].frequency_ghz = freqs_ghz[1];
        m
    }

    pub fn with_j0(&self, j0_ghz: f64) -> Self {
        let mut m = self.clone();
        m.j0_ghz = j0_ghz;
        m
    }

    /// Same circuit with the roles of transmon 0 and transmon 1 exchanged.
    pub fn swapped(&self) -> Self {
        let mut m = self.clone();
        m.transmons.swap(0, 1);
        for b in &mut m.buses {
            b.couplings_ghz.swap(0, 1);
        }
        m
    }

    pub fn mode_count(&self) -> usize {
        2 + self.buses.len()
    }

    /// Truncation of every mode in mode order.
    pub fn dims(&self) -> Vec<usize> {
        let mut d = vec![self.transmons[0].levels, self.transmons[1].levels];
        d.extend(self.buses.iter().map(|b| b.levels));
        d
    }
}

/// A broken invariant of a [`DeviceModel`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub field: String,
    pub rule: &'static str,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.rule)
    }
}

/// Every broken invariant, empty when the model is valid.
pub fn validate_model(model: &DeviceModel) -> Vec<Violation> {
    let mut out = Vec::new();
    let mut push = |field: String, rule| out.push(Violation { field, rule });
    for (i, t) in model.transmons.iter().enumerate() {
        if !(t.frequency_ghz.is_finite() && t.frequency_ghz > 0.0) {
            push(
                format!("transmons[{i}].frequency_ghz"),
                "must be finite and > 0",
            );
        }
        if !t.anharmonicity_ghz.is_finite() || t.anharmonicity_ghz == 0.0 {
            push(
                format!("transmons[{i}].anharmonicity_ghz"),
                "must be finite and non-zero",
            );
        }
        if t.levels < 2 {
            push(format!("transmons[{i}].levels"), "must be >= 2");
        }
    }
    if !model.j0_ghz.is_finite() {
        push(String::from("j0_ghz"), "must be finite");
    }
    for (j, b) in model.buses.iter().enumerate() {
        if !(b.frequency_ghz.is_finite() && b.frequency_ghz > 0.0) {
            push(
                format!("buses[{j}].frequency_ghz"),
                "must be finite and > 0",
            );
        }
        if b.levels < 2 {
            push(format!("buses[{j}].levels"), "must be >= 2");
        }
        if !b.couplings_ghz.iter().all(|g| g.is_finite()) {
            push(format!("buses[{j}].couplings_ghz"), "must be finite");
        }
    }
    out
}

/// Occupation of every mode, in mode order.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct BareLabel(pub Vec<usize>);

impl fmt::Display for BareLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("|")?;
        for (i, n) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{n}")?;
        }
        f.write_str(">")
    }
}

/// The truncated product basis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Basis {
    dims: Vec<usize>,
    strides: Vec<usize>,
    labels: Vec<BareLabel>,
}

impl Basis {
    pub fn new(dims: &[usize]) -> Self {
        let mut strides = vec![1; dims.len()];
        for k in (0..dims.len().saturating_sub(1)).rev() {
            strides[k] = strides[k + 1] * dims[k + 1];
        }
        let size: usize = dims.iter().product();
        let labels = (0..size)
            .map(|mut idx| {
                let mut occ = vec![0; dims.len()];
                for k in 0..dims.len() {
                    occ[k] = idx / strides[k];
                    idx %= strides[k];
                }
                BareLabel(occ)
            })
            .collect();
        Self {
            dims: dims.to_vec(),
            strides,
            labels,
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn labels(&self) -> &[BareLabel] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> &BareLabel {
        &self.labels[index]
    }

    /// Index of an occupation tuple, `None` if it lies outside the truncation.
    pub fn index_of(&self, occupation: &[usize]) -> Option<usize> {
        if occupation.len() != self.dims.len() {
            return None;
        }
        let mut idx = 0;
        for ((&n, &d), &s) in occupation.iter().zip(&self.dims).zip(&self.strides) {
            if n >= d {
                return None;
            }
            idx += n * s;
        }
        Some(idx)
    }

    /// Label with transmon occupations `(n0, n1)` and every bus empty.
    pub fn qubit_index(&self, n0: usize, n1: usize) -> Option<usize> {
        let mut occ = vec![0; self.dims.len()];
        occ[0] = n0;
        occ[1] = n1;
        self.index_of(&occ)
    }

    /// `a_mode^dagger |index>` as `(target index, sqrt(n + 1))`, or `None` at
    /// the truncation edge.
    pub fn raise(&self, mode: usize, index: usize) -> Option<(usize, f64)> {
        let n = self.labels[index].0[mode];
        if n + 1 >= self.dims[mode] {
            return None;
        }
        Some((index + self.strides[mode], ((n + 1) as f64).sqrt()))
    }

    /// Dense matrix of `a_mode^dagger` in this basis.
    pub fn raising_operator(&self, mode: usize) -> CMatrix {
        let n = self.len();
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            if let Some((j, amp)) = self.raise(mode, i) {
                m[(j, i)] = c64(amp, 0.0);
            }
        }
        m
    }
}

/// Product basis of `model`, lexicographic with transmon 0 slowest.
pub fn build_bare_basis(model: &DeviceModel) -> Vec<BareLabel> {
    Basis::new(&model.dims()).labels
}

/// Bare-basis Hamiltonian in GHz.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    pub matrix: CMatrix,
    pub basis: Basis,
}

/// Hamiltonian of two transmons, a direct coupler and any number of bus modes.
pub fn build_hamiltonian(model: &DeviceModel) -> Result<HamiltonianMatrix> {
    let violations = validate_model(model);
    if !violations.is_empty() {
        return Err(Error::InvalidModel(violations));
    }
    let basis = Basis::new(&model.dims());
    let n = basis.len();
    let mut h = CMatrix::zeros(n, n);

    for (i, label) in basis.labels().iter().enumerate() {
        let occ = &label.0;
        let mut e = 0.0;
        for (q, t) in model.transmons.iter().enumerate() {
            let nq = occ[q] as f64;
            e += t.frequency_ghz * nq + 0.5 * t.anharmonicity_ghz * nq * (nq - 1.0);
        }
        for (j, b) in model.buses.iter().enumerate() {
            e += b.frequency_ghz * occ[2 + j] as f64;
        }
        h[(i, i)] = c64(e, 0.0);
    }

    add_quadrature_coupling(&mut h, &basis, 0, 1, model.j0_ghz);
    for (j, b) in model.buses.iter().enumerate() {
        for q in 0..2 {
            add_quadrature_coupling(&mut h, &basis, q, 2 + j, b.couplings_ghz[q]);
        }
    }
    Ok(HamiltonianMatrix { matrix: h, basis })
}

/// Adds `c (a^dagger + a)(b^dagger + b)` between modes `m1` and `m2`.
fn add_quadrature_coupling(h: &mut CMatrix, basis: &Basis, m1: usize, m2: usize, c: f64) {
    if c == 0.0 {
        return;
    }
    // Only the raising-raising and raising-lowering halves are enumerated; the
    // Hermitian conjugate fills in the rest.
    for i in 0..basis.len() {
        if let Some((k, a1)) = basis.raise(m1, i) {
            if let Some((l, a2)) = basis.raise(m2, k) {
                // a1^dagger a2^dagger
                h[(l, i)] += c64(c * a1 * a2, 0.0);
                h[(i, l)] += c64(c * a1 * a2, 0.0);
            }
        }
        if let Some((k, a1)) = basis.raise(m1, i) {
            // a1^dagger a2
            let n2 = basis.labels()[i].0[m2];
            if n2 > 0 {
                let target = k - basis.strides[m2];
                let amp = c * a1 * (n2 as f64).sqrt();
                h[(target, i)] += c64(amp, 0.0);
                h[(i, target)] += c64(amp, 0.0);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::hermiticity_defect;

    #[test]
    fn smallest_basis_is_lexicographic() {
        let m = DeviceModel::direct([5.0, 5.1], [-0.3, -0.3], 0.0).with_levels(2, 2);
        let labels = build_bare_basis(&m);
        let occ: Vec<Vec<usize>> = labels.into_iter().map(|l| l.0).collect();
        assert_eq!(occ, vec![vec![0, 0], vec![0, 1], vec![1, 0], vec![1, 1]]);
    }

    #[test]
    fn basis_size_is_product_of_truncations() {
        let mut m = DeviceModel::device_a().with_levels(3, 2);
        assert_eq!(build_bare_basis(&m).len(), 18);
        m.transmons[1].levels = 4;
        m.buses.push(BusModeSpec {
            frequency_ghz: 18.0,
            couplings_ghz: [0.0, 0.0],
            levels: 3,
        });
        assert_eq!(build_bare_basis(&m).len(), 3 * 4 * 2 * 3);
    }

    #[test]
    fn uncoupled_is_diagonal() {
        let m = DeviceModel::direct([5.0, 5.1], [-0.3, -0.25], 0.0).with_levels(3, 3);
        let h = build_hamiltonian(&m).unwrap();
        let i11 = h.basis.qubit_index(1, 1).unwrap();
        assert_eq!(h.matrix[(i11, i11)].re, 5.0 + 5.1);
        let i20 = h.basis.qubit_index(2, 0).unwrap();
        assert!((h.matrix[(i20, i20)].re - (10.0 - 0.3)).abs() < 1e-15);
        for i in 0..h.basis.len() {
            for j in 0..h.basis.len() {
                if i != j {
                    assert_eq!(h.matrix[(i, j)].norm(), 0.0);
                }
            }
        }
    }

    #[test]
    fn exchange_element_for_two_levels() {
        let j = 0.0123;
        let m = DeviceModel::direct([5.0, 5.1], [-0.3, -0.3], j).with_levels(2, 2);
        let h = build_hamiltonian(&m).unwrap();
        let i01 = h.basis.qubit_index(0, 1).unwrap();
        let i10 = h.basis.qubit_index(1, 0).unwrap();
        let i00 = h.basis.qubit_index(0, 0).unwrap();
        let i11 = h.basis.qubit_index(1, 1).unwrap();
        assert_eq!(h.matrix[(i01, i10)].re, j);
        // counter-rotating term is kept
        assert_eq!(h.matrix[(i00, i11)].re, j);
    }

    #[test]
    fn ladder_elements_follow_sqrt_n() {
        let g = 0.05;
        let mut m = DeviceModel::direct([5.0, 5.1], [-0.3, -0.3], 0.0).with_levels(3, 3);
        m.buses.push(BusModeSpec {
            frequency_ghz: 6.0,
            couplings_ghz: [g, 0.0],
            levels: 3,
        });
        let h = build_hamiltonian(&m).unwrap();
        let a = h.basis.index_of(&[2, 0, 0]).unwrap();
        let b = h.basis.index_of(&[1, 0, 1]).unwrap();
        assert!((h.matrix[(a, b)].re - g * 2f64.sqrt()).abs() < 1e-15);
        let c = h.basis.index_of(&[1, 0, 2]).unwrap();
        let d = h.basis.index_of(&[2, 0, 1]).unwrap();
        assert!((h.matrix[(c, d)].re - g * 2f64.sqrt() * 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn device_a_is_hermitian() {
        let h = build_hamiltonian(&DeviceModel::device_a()).unwrap();
        assert_eq!(h.basis.len(), 75);
        assert!(hermiticity_defect(&h.matrix) < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(validate_model(&DeviceModel::device_a()).is_empty());
        let mut m = DeviceModel::device_a();
        m.transmons[0].levels = 1;
        let v = validate_model(&m);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].field, "transmons[0].levels");
        let mut m = DeviceModel::device_a();
        m.buses[0].frequency_ghz = -6.0;
        assert_eq!(validate_model(&m).len(), 1);
        assert!(matches!(build_hamiltonian(&m), Err(Error::InvalidModel(_))));
        let mut m = DeviceModel::device_b();
        m.transmons[1].anharmonicity_ghz = 0.0;
        assert_eq!(
            validate_model(&m)[0].field,
            "transmons[1].anharmonicity_ghz"
        );
    }

    #[test]
    fn bus_free_model_reduces_to_single_coupler() {
        let j = 0.004;
        let single = DeviceModel::direct([5.0, 5.06], [-0.3, -0.31], j);
        let mut with_dead_bus = single.clone();
        with_dead_bus.buses.push(BusModeSpec {
            frequency_ghz: 6.0,
            couplings_ghz: [0.0, 0.0],
            levels: 2,
        });
        let h1 = build_hamiltonian(&single).unwrap();
        let h2 = build_hamiltonian(&with_dead_bus).unwrap();
        // the bus-empty block of h2 equals h1 exactly
        for (i, li) in h1.basis.labels().iter().enumerate() {
            for (j, lj) in h1.basis.labels().iter().enumerate() {
                let mut a = li.0.clone();
                a.push(0);
                let mut b = lj.0.clone();
                b.push(0);
                let (ia, ib) = (
                    h2.basis.index_of(&a).unwrap(),
                    h2.basis.index_of(&b).unwrap(),
                );
                assert_eq!(h1.matrix[(i, j)], h2.matrix[(ia, ib)]);
            }
        }
    }
}
