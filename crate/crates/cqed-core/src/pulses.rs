//! Drive envelopes: lowered Gaussian and flat-top Gaussian with an optional
//! DRAG quadrature.

use serde::{Deserialize, Serialize};

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::TAU;

/// Default Gaussian width, ns.
pub const DEFAULT_SIGMA_NS: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Shape {
    /// Gaussian truncated at ±2σ, total length 4σ.
    LoweredGaussian { sigma_ns: f64 },
    /// Lowered half-Gaussian rise and fall of 2σ each around a flat segment.
    FlatTopGaussian { sigma_ns: f64, flat_ns: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Envelope {
    pub shape: Shape,
    /// Peak Rabi rate, MHz.
    pub amplitude_mhz: f64,
    /// Quadrature = `drag_ns * dI/dt`; carries units of ns. Zero disables DRAG.
    pub drag_ns: f64,
}

const EDGE: f64 = 0.135_335_283_236_612_7; // exp(-2)

impl Envelope {
    pub fn lowered_gaussian(sigma_ns: f64, amplitude_mhz: f64) -> Self {
        Self {
            shape: Shape::LoweredGaussian { sigma_ns },
            amplitude_mhz,
            drag_ns: 0.0,
        }
    }

    pub fn flat_top(sigma_ns: f64, flat_ns: f64, amplitude_mhz: f64) -> Self {
        Self {
            shape: Shape::FlatTopGaussian { sigma_ns, flat_ns },
            amplitude_mhz,
            drag_ns: 0.0,
        }
    }

    /// Flat-top pulse of total length `gate_ns` with the default σ.
    pub fn flat_top_for_gate(gate_ns: f64, amplitude_mhz: f64) -> Self {
        Self::flat_top(
            DEFAULT_SIGMA_NS,
            (gate_ns - 4.0 * DEFAULT_SIGMA_NS).max(0.0),
            amplitude_mhz,
        )
    }

    pub fn with_drag(mut self, drag_ns: f64) -> Self {
        self.drag_ns = drag_ns;
        self
    }

    pub fn with_amplitude(mut self, amplitude_mhz: f64) -> Self {
        self.amplitude_mhz = amplitude_mhz;
        self
    }

    pub fn sigma_ns(&self) -> f64 {
        match self.shape {
            Shape::LoweredGaussian { sigma_ns } | Shape::FlatTopGaussian { sigma_ns, .. } => {
                sigma_ns
            }
        }
    }

    fn flat_ns(&self) -> f64 {
        match self.shape {
            Shape::LoweredGaussian { .. } => 0.0,
            Shape::FlatTopGaussian { flat_ns, .. } => flat_ns,
        }
    }

    pub fn duration_ns(&self) -> f64 {
        4.0 * self.sigma_ns() + self.flat_ns()
    }

    /// Unit-peak shape and its time derivative at `t`.
    fn unit_shape(&self, t: f64) -> (f64, f64) {
        let s = self.sigma_ns();
        let rise_end = 2.0 * s;
        let fall_start = rise_end + self.flat_ns();
        let x = if t < rise_end {
            t - rise_end
        } else if t > fall_start {
            t - fall_start
        } else {
            return (1.0, 0.0);
        };
        let g = (-x * x / (2.0 * s * s)).exp();
        let norm = 1.0 - EDGE;
        ((g - EDGE) / norm, -x / (s * s) * g / norm)
    }

    /// Length of a square pulse with the same peak and area, ns.
    pub fn effective_duration_ns(&self) -> f64 {
        envelope_area(&self.with_amplitude(1.0))
    }
}

/// In-phase and quadrature amplitude (MHz) at `t` ns; zero outside the pulse.
pub fn sample_envelope(e: &Envelope, t: f64) -> (f64, f64) {
    if !(0.0..=e.duration_ns()).contains(&t) {
        return (0.0, 0.0);
    }
    let (v, dv) = e.unit_shape(t);
    (e.amplitude_mhz * v, e.drag_ns * e.amplitude_mhz * dv)
}

/// Integral of the in-phase component, MHz·ns.
pub fn envelope_area(e: &Envelope) -> f64 {
    // the rise and fall integrate to the same value; the flat part is exact
    let rise = 2.0 * e.sigma_ns();
    let n = 4096;
    let h = rise / n as f64;
    let mut acc = e.unit_shape(0.0).0 + e.unit_shape(rise).0;
    for k in 1..n {
        let w = if k % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * e.unit_shape(k as f64 * h).0;
    }
    e.amplitude_mhz * (2.0 * acc * h / 3.0 + e.flat_ns())
}

/// A tone on one qubit: envelope, carrier and phase.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriveTone {
    pub envelope: Envelope,
    pub carrier_ghz: f64,
    /// Wrapped to `[0, 2π)`.
    pub phase_rad: f64,
    /// Index of the driven transmon.
    pub qubit: usize,
}

impl DriveTone {
    pub fn new(envelope: Envelope, carrier_ghz: f64, phase_rad: f64, qubit: usize) -> Self {
        Self {
            envelope,
            carrier_ghz,
            phase_rad: wrap_phase(phase_rad),
            qubit,
        }
    }
}

pub fn wrap_phase(phi: f64) -> f64 {
    let w = phi % TAU;
    if w < 0.0 {
        w + TAU
    } else {
        w
    }
}
