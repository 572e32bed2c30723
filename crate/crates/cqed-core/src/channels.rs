//! Kraus-form noise channels and the coherence-limited error bound.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

use crate::linalg::{c64, identity, kron, max_abs_diff, trace, CMatrix};
use crate::{Error, Result};

/// Completely positive map `ρ -> Σ K ρ K^dagger`.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub kraus: Vec<CMatrix>,
}

impl Channel {
    pub fn identity(dim: usize) -> Self {
        Self {
            kraus: vec![identity(dim)],
        }
    }

    pub fn unitary(u: CMatrix) -> Self {
        Self { kraus: vec![u] }
    }

    pub fn dim(&self) -> usize {
        self.kraus.first().map_or(0, |k| k.nrows())
    }

    pub fn apply(&self, rho: &CMatrix) -> CMatrix {
        let mut out = CMatrix::zeros(rho.nrows(), rho.ncols());
        for k in &self.kraus {
            out += k * rho * k.adjoint();
        }
        out
    }

    /// Largest entry of `Σ K^dagger K - I`.
    pub fn trace_defect(&self) -> f64 {
        let d = self.dim();
        let mut s = CMatrix::zeros(d, d);
        for k in &self.kraus {
            s += k.adjoint() * k;
        }
        max_abs_diff(&s, &identity(d))
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Channel) -> Channel {
        let mut kraus = Vec::with_capacity(self.kraus.len() * next.kraus.len());
        for b in &next.kraus {
            for a in &self.kraus {
                kraus.push(b * a);
            }
        }
        Channel { kraus }
    }

    pub fn tensor(&self, other: &Channel) -> Channel {
        let mut kraus = Vec::with_capacity(self.kraus.len() * other.kraus.len());
        for a in &self.kraus {
            for b in &other.kraus {
                kraus.push(kron(a, b));
            }
        }
        Channel { kraus }
    }

    /// Acts on the lowest `self.dim()` levels of a `levels`-dimensional mode
    /// and leaves the rest untouched.
    pub fn embed(&self, levels: usize) -> Channel {
        let d = self.dim();
        let kraus = self
            .kraus
            .iter()
            .enumerate()
            .map(|(i, k)| {
                let mut m = CMatrix::zeros(levels, levels);
                m.view_mut((0, 0), (d, d)).copy_from(k);
                if i == 0 {
                    for j in d..levels {
                        m[(j, j)] = c64(1.0, 0.0);
                    }
                }
                m
            })
            .collect();
        Channel { kraus }
    }

    /// Process fidelity to the identity, `Σ |Tr K|^2 / d^2`.
    pub fn process_fidelity(&self) -> f64 {
        let d = self.dim() as f64;
        self.kraus.iter().map(|k| trace(k).norm_sqr()).sum::<f64>() / (d * d)
    }

    /// Average gate fidelity to the identity, `(d F_pro + 1) / (d + 1)`.
    pub fn average_fidelity(&self) -> f64 {
        let d = self.dim() as f64;
        (d * self.process_fidelity() + 1.0) / (d + 1.0)
    }
}

fn check_probability(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidArgument(format!(
            "{name} = {p} is not a probability"
        )));
    }
    Ok(())
}

/// `ρ -> (1 - λ) ρ + λ Tr(ρ) I/d` with `λ = p d / (d - 1)`, so that the
/// average gate infidelity is `p`.
pub fn depolarizing(p: f64, dim: usize) -> Result<Channel> {
    if dim < 2 {
        return Err(Error::InvalidArgument(format!("dimension {dim} < 2")));
    }
    let d = dim as f64;
    let lambda = p * d / (d - 1.0);
    check_probability("depolarizing strength", lambda)?;
    // Weyl operators X^a Z^b form a unitary error basis
    let omega = crate::linalg::TAU / d;
    let mut kraus = Vec::with_capacity(dim * dim);
    for a in 0..dim {
        for b in 0..dim {
            let w = if a == 0 && b == 0 {
                1.0 - lambda + lambda / (d * d)
            } else {
                lambda / (d * d)
            };
            if w == 0.0 && !(a == 0 && b == 0) {
                continue;
            }
            let mut m = CMatrix::zeros(dim, dim);
            for j in 0..dim {
                m[((j + a) % dim, j)] = crate::linalg::cis(omega * (b * j) as f64) * w.sqrt();
            }
            kraus.push(m);
        }
    }
    Ok(Channel { kraus })
}

/// Qubit energy relaxation for `t_ns` with `T1` in µs.
pub fn amplitude_damping(t_ns: f64, t1_us: f64) -> Result<Channel> {
    if !(t1_us > 0.0) || t_ns < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "t = {t_ns} ns, T1 = {t1_us} µs"
        )));
    }
    let gamma = 1.0 - (-t_ns * 1e-3 / t1_us).exp();
    let mut k0 = identity(2);
    k0[(1, 1)] = c64((1.0 - gamma).sqrt(), 0.0);
    let mut k1 = CMatrix::zeros(2, 2);
    k1[(0, 1)] = c64(gamma.sqrt(), 0.0);
    Ok(Channel {
        kraus: vec![k0, k1],
    })
}

/// Pure dephasing at rate `1/T2 - 1/(2 T1)` for `t_ns`.
pub fn dephasing(t_ns: f64, t1_us: f64, t2_us: f64) -> Result<Channel> {
    if !(t1_us > 0.0 && t2_us > 0.0) || t_ns < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "t = {t_ns} ns, T1 = {t1_us} µs, T2 = {t2_us} µs"
        )));
    }
    if t2_us > 2.0 * t1_us * (1.0 + 1e-12) {
        return Err(Error::InvalidArgument(format!(
            "T2 = {t2_us} µs exceeds 2 T1 = {} µs",
            2.0 * t1_us
        )));
    }
    let rate = (1.0 / t2_us - 0.5 / t1_us).max(0.0);
    let coherence = (-rate * t_ns * 1e-3).exp();
    // ρ01 -> coherence · ρ01 via a random Z flip
    let p = (1.0 - coherence) / 2.0;
    let k0 = identity(2) * c64((1.0 - p).sqrt(), 0.0);
    let mut k1 = identity(2) * c64(p.sqrt(), 0.0);
    k1[(1, 1)] = -k1[(1, 1)];
    Ok(Channel {
        kraus: vec![k0, k1],
    })
}

/// Relaxation followed by pure dephasing on one qubit.
pub fn thermal_relaxation(t_ns: f64, t1_us: f64, t2_us: f64) -> Result<Channel> {
    Ok(amplitude_damping(t_ns, t1_us)?.then(&dephasing(t_ns, t1_us, t2_us)?))
}

/// Incoherent exchange of `|1>` and `|2>` on transmon `qubit` of a two
/// transmon, 3-level space, with probability `q`.
pub fn leakage_exchange(q: f64, qubit: usize) -> Result<Channel> {
    check_probability("exchange probability", q)?;
    let mut swap = CMatrix::zeros(3, 3);
    swap[(0, 0)] = c64(1.0, 0.0);
    swap[(1, 2)] = c64(1.0, 0.0);
    swap[(2, 1)] = c64(1.0, 0.0);
    let (k0, k1) = if qubit == 0 {
        (identity(9), kron(&swap, &identity(3)))
    } else {
        (identity(9), kron(&identity(3), &swap))
    };
    Ok(Channel {
        kraus: vec![k0 * c64((1.0 - q).sqrt(), 0.0), k1 * c64(q.sqrt(), 0.0)],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Coherence {
    pub t1_us: [f64; 2],
    pub t2_us: [f64; 2],
}

impl Coherence {
    pub fn validate(&self) -> Result<()> {
        for q in 0..2 {
            if !(self.t1_us[q] > 0.0 && self.t2_us[q] > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "coherence times of qubit {q} must be positive"
                )));
            }
            if self.t2_us[q] > 2.0 * self.t1_us[q] {
                return Err(Error::InvalidArgument(format!(
                    "qubit {q}: T2 = {} µs exceeds 2 T1 = {} µs",
                    self.t2_us[q],
                    2.0 * self.t1_us[q]
                )));
            }
        }
        Ok(())
    }

    /// Idle channel on both qubits for `t_ns`, acting on `levels` per transmon.
    pub fn idle(&self, t_ns: f64, levels: usize) -> Result<Channel> {
        let a = thermal_relaxation(t_ns, self.t1_us[0], self.t2_us[0])?.embed(levels);
        let b = thermal_relaxation(t_ns, self.t1_us[1], self.t2_us[1])?.embed(levels);
        Ok(a.tensor(&b))
    }
}

/// Error per gate of a `duration_ns` idle under T1/T2: `1 - F_avg` of the
/// two-qubit relaxation channel.
pub fn coherence_limit(coherence: &Coherence, duration_ns: f64) -> Result<f64> {
    coherence.validate()?;
    Ok((1.0 - coherence.idle(duration_ns, 2)?.average_fidelity()).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::c64;

    fn pure(psi: &[(f64, f64)]) -> CMatrix {
        let v = CMatrix::from_fn(psi.len(), 1, |i, _| c64(psi[i].0, psi[i].1));
        &v * v.adjoint()
    }

    #[test]
    fn channels_are_trace_preserving() {
        let chans = [
            depolarizing(0.0, 4).unwrap(),
            depolarizing(0.01, 4).unwrap(),
            depolarizing(0.3, 2).unwrap(),
            amplitude_damping(180.0, 115.0).unwrap(),
            dephasing(180.0, 115.0, 129.0).unwrap(),
            thermal_relaxation(50.0, 20.0, 30.0).unwrap().embed(3),
            leakage_exchange(0.01, 0).unwrap(),
            Coherence {
                t1_us: [115.0, 117.0],
                t2_us: [129.0, 139.0],
            }
            .idle(180.0, 3)
            .unwrap(),
        ];
        for c in &chans {
            assert!(c.trace_defect() < 1e-12, "{}", c.trace_defect());
        }
    }

    #[test]
    fn positivity_on_test_states() {
        let c = thermal_relaxation(300.0, 10.0, 15.0).unwrap();
        let h = core::f64::consts::FRAC_1_SQRT_2;
        for psi in [
            [(1.0, 0.0), (0.0, 0.0)],
            [(0.0, 0.0), (1.0, 0.0)],
            [(h, 0.0), (h, 0.0)],
            [(h, 0.0), (0.0, h)],
        ] {
            let out = c.apply(&pure(&psi));
            let eig = crate::linalg::hermitian_eigen(&out).0;
            assert!(eig.iter().all(|&e| e > -1e-14));
            assert!((trace(&out).re - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn closed_forms() {
        let one = pure(&[(0.0, 0.0), (1.0, 0.0)]);
        let out = amplitude_damping(115_000.0, 115.0).unwrap().apply(&one);
        assert!((out[(1, 1)].re - (-1.0f64).exp()).abs() < 1e-12);

        let mixed = identity(4) * c64(0.25, 0.0);
        let d = depolarizing(0.2, 4).unwrap();
        assert!(max_abs_diff(&d.apply(&mixed), &mixed) < 1e-15);
        assert!(((1.0 - d.average_fidelity()) - 0.2).abs() < 1e-12);
        assert!(
            max_abs_diff(
                &depolarizing(0.0, 4)
                    .unwrap()
                    .apply(&one.clone().resize(4, 4, c64(0.0, 0.0))),
                &one.resize(4, 4, c64(0.0, 0.0))
            ) < 1e-15
        );

        let plus = pure(&[(0.5f64.sqrt(), 0.0), (0.5f64.sqrt(), 0.0)]);
        let t = 1000.0;
        let out = thermal_relaxation(t, 100.0, 80.0).unwrap().apply(&plus);
        assert!((out[(0, 1)].re - 0.5 * (-t * 1e-3 / 80.0).exp()).abs() < 1e-12);
    }

    #[test]
    fn invalid_coherence_rejected() {
        assert!(dephasing(10.0, 50.0, 101.0).is_err());
        assert!(depolarizing(0.9, 2).is_err());
    }

    #[test]
    fn coherence_limit_properties() {
        let c = Coherence {
            t1_us: [115.0, 117.0],
            t2_us: [129.0, 139.0],
        };
        assert_eq!(coherence_limit(&c, 0.0).unwrap(), 0.0);
        let inf = Coherence {
            t1_us: [f64::INFINITY; 2],
            t2_us: [f64::INFINITY; 2],
        };
        assert!(coherence_limit(&inf, 180.0).unwrap().abs() < 1e-15);
        let e180 = coherence_limit(&c, 180.0).unwrap();
        assert!(e180 > 1e-3 && e180 < 2.3e-3, "{e180}");
        let mut prev = 0.0;
        for t in [50.0, 100.0, 180.0, 300.0, 600.0] {
            let e = coherence_limit(&c, t).unwrap();
            assert!(e > prev);
            prev = e;
        }
    }

    #[test]
    fn leakage_exchange_moves_population() {
        let mut rho = CMatrix::zeros(9, 9);
        rho[(3, 3)] = c64(1.0, 0.0); // |1,0>
        let out = leakage_exchange(0.01, 0).unwrap().apply(&rho);
        assert!((out[(6, 6)].re - 0.01).abs() < 1e-15);
    }
}
