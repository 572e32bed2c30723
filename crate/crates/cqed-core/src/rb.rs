//! Density-matrix randomized benchmarking: standard, interleaved (CNOT),
//! purity and leakage variants, and the decay fitters.
//!
//! Every random sequence draws its Cliffords from a ChaCha8 stream derived
//! from the root seed and the sequence position, so sequences can be
//! simulated in any order.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{depolarizing, leakage_exchange, Channel, Coherence};
use crate::clifford::{cnot, generators, CliffordTable, GatePrimitive, Tableau};
use crate::linalg::{c64, identity, kron, trace, CMatrix, Complex64};
use crate::optimize::{golden_section, levenberg_marquardt, LmOptions};
use crate::{Error, Result};

/// Longest accepted sequence.
pub const MAX_LENGTH: usize = 100_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbVariant {
    Standard,
    /// CNOT interleaved after every random Clifford.
    Interleaved,
    Purity,
    Leakage,
}

impl RbVariant {
    pub fn name(&self) -> &'static str {
        match self {
            RbVariant::Standard => "standard",
            RbVariant::Interleaved => "interleaved",
            RbVariant::Purity => "purity",
            RbVariant::Leakage => "leakage",
        }
    }
}

impl core::str::FromStr for RbVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "standard" => RbVariant::Standard,
            "interleaved" => RbVariant::Interleaved,
            "purity" => RbVariant::Purity,
            "leakage" => RbVariant::Leakage,
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown RB variant '{other}'"
                )))
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RbConfig {
    pub lengths: Vec<usize>,
    pub samples: usize,
    pub seed: u64,
}

impl RbConfig {
    pub fn validate(&self) -> Result<()> {
        if self.lengths.is_empty() || self.samples == 0 {
            return Err(Error::InvalidArgument(String::from(
                "need at least one length and one sample",
            )));
        }
        if self.lengths.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument(String::from(
                "lengths must be strictly ascending",
            )));
        }
        if let Some(&l) = self.lengths.last() {
            if l > MAX_LENGTH {
                return Err(Error::InvalidArgument(format!(
                    "length {l} exceeds {MAX_LENGTH}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// Two-qubit depolarizing error after every Clifford (average infidelity).
    pub depolarizing_per_clifford: Option<f64>,
    /// Two-qubit depolarizing error after every CNOT primitive.
    pub depolarizing_per_cnot: Option<f64>,
    /// T1/T2 relaxation for each primitive's duration.
    pub coherence: Option<Coherence>,
    /// Average population leaked from the computational subspace of the
    /// control per Clifford; needs three levels per transmon.
    pub leakage_per_clifford: Option<f64>,
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("depolarizing_per_clifford", self.depolarizing_per_clifford),
            ("depolarizing_per_cnot", self.depolarizing_per_cnot),
            ("leakage_per_clifford", self.leakage_per_clifford),
        ] {
            if let Some(p) = p {
                if !(0.0..=0.5).contains(&p) {
                    return Err(Error::InvalidArgument(format!(
                        "{name} = {p} outside [0, 0.5]"
                    )));
                }
            }
        }
        if let Some(c) = &self.coherence {
            c.validate()?;
        }
        Ok(())
    }
}

/// Gate unitaries in a space with `levels` per transmon.
#[derive(Debug, Clone, PartialEq)]
pub struct GateSet {
    pub levels: usize,
    /// Control (qubit 0) first.
    pub cnot: CMatrix,
    pub cnot_ns: f64,
}

/// Index of the transmon product state `|n0, n1>`.
fn idx(levels: usize, n0: usize, n1: usize) -> usize {
    n0 * levels + n1
}

fn computational_indices(levels: usize) -> [usize; 4] {
    [
        idx(levels, 0, 0),
        idx(levels, 0, 1),
        idx(levels, 1, 0),
        idx(levels, 1, 1),
    ]
}

/// Embeds a 4x4 operator on the computational subspace; `fill` goes on the
/// diagonal of the remaining levels.
fn embed_computational(op: &CMatrix, levels: usize, fill: Complex64) -> CMatrix {
    let d = levels * levels;
    let ci = computational_indices(levels);
    let mut m = CMatrix::zeros(d, d);
    for i in 0..d {
        if !ci.contains(&i) {
            m[(i, i)] = fill;
        }
    }
    for (a, &i) in ci.iter().enumerate() {
        for (b, &j) in ci.iter().enumerate() {
            m[(i, j)] = op[(a, b)];
        }
    }
    m
}

impl GateSet {
    pub fn ideal(levels: usize, cnot_ns: f64) -> Result<Self> {
        if !(levels == 2 || levels == 3) {
            return Err(Error::InvalidArgument(format!(
                "{levels} levels per transmon"
            )));
        }
        Ok(Self {
            levels,
            cnot: embed_computational(&cnot(), levels, c64(1.0, 0.0)),
            cnot_ns,
        })
    }

    /// Pulse-level CNOT on three levels per transmon, indexed `n0 * 3 + n1`
    /// in device order; `control` is the device index of the control.
    pub fn calibrated(u9: CMatrix, control: usize, cnot_ns: f64) -> Result<Self> {
        if u9.shape() != (9, 9) {
            return Err(Error::InvalidArgument(format!(
                "CNOT shape {:?}",
                u9.shape()
            )));
        }
        let cnot = if control == 0 {
            u9
        } else {
            let perm = |i: usize| idx(3, i % 3, i / 3);
            CMatrix::from_fn(9, 9, |i, j| u9[(perm(i), perm(j))])
        };
        Ok(Self {
            levels: 3,
            cnot,
            cnot_ns,
        })
    }

    pub fn dim(&self) -> usize {
        self.levels * self.levels
    }

    pub fn primitive_unitary(&self, g: &GatePrimitive) -> CMatrix {
        match g.single_qubit_unitary() {
            None => self.cnot.clone(),
            Some(u2) => {
                let mut u = identity(self.levels);
                u.view_mut((0, 0), (2, 2)).copy_from(&u2);
                if g.qubit() == Some(0) {
                    kron(&u, &identity(self.levels))
                } else {
                    kron(&identity(self.levels), &u)
                }
            }
        }
    }
}

/// Column-stacking Liouville matrix of a channel.
fn superoperator(ch: &Channel) -> CMatrix {
    let d = ch.dim();
    let mut s = CMatrix::zeros(d * d, d * d);
    for k in &ch.kraus {
        s += kron(&k.map(|z| z.conj()), k);
    }
    s
}

#[derive(Debug, Clone)]
enum Process {
    Unitary(CMatrix),
    Liouville(CMatrix),
}

impl Process {
    fn apply(&self, rho: &mut CMatrix) {
        match self {
            Process::Unitary(u) => *rho = u * &*rho * u.adjoint(),
            Process::Liouville(s) => {
                let d = rho.nrows();
                let v = nalgebra::DVector::<Complex64>::from_column_slice(rho.as_slice());
                let out = s * v;
                *rho = CMatrix::from_column_slice(d, d, out.as_slice());
            }
        }
    }
}

fn embed_channel(ch: &Channel, levels: usize) -> Channel {
    Channel {
        kraus: ch
            .kraus
            .iter()
            .enumerate()
            .map(|(i, k)| embed_computational(k, levels, c64(if i == 0 { 1.0 } else { 0.0 }, 0.0)))
            .collect(),
    }
}

/// Noisy processes for each generator plus the per-Clifford error.
pub struct RbEngine<'a> {
    table: &'a CliffordTable,
    levels: usize,
    generators: Vec<GatePrimitive>,
    processes: Vec<Process>,
    per_clifford: Option<Process>,
    cnot_element: usize,
}

impl<'a> RbEngine<'a> {
    pub fn new(table: &'a CliffordTable, gates: &GateSet, noise: &NoiseModel) -> Result<Self> {
        noise.validate()?;
        let levels = gates.levels;
        let gens = generators();
        let mut processes = Vec::with_capacity(gens.len());
        for g in &gens {
            let u = gates.primitive_unitary(g);
            let mut ch: Option<Channel> = None;
            if let (GatePrimitive::Cnot, Some(p)) = (g, noise.depolarizing_per_cnot) {
                ch = Some(embed_channel(&depolarizing(p, 4)?, levels));
            }
            let dur = g.duration_ns(gates.cnot_ns);
            if let (Some(c), true) = (&noise.coherence, dur > 0.0) {
                let idle = c.idle(dur, levels)?;
                ch = Some(match ch {
                    Some(prev) => prev.then(&idle),
                    None => idle,
                });
            }
            processes.push(match ch {
                None => Process::Unitary(u),
                Some(ch) => Process::Liouville(superoperator(&Channel::unitary(u).then(&ch))),
            });
        }
        let mut per: Option<Channel> = None;
        if let Some(p) = noise.depolarizing_per_clifford {
            per = Some(embed_channel(&depolarizing(p, 4)?, levels));
        }
        if let Some(l) = noise.leakage_per_clifford {
            if levels != 3 {
                return Err(Error::InvalidArgument(String::from(
                    "leakage injection needs three levels per transmon",
                )));
            }
            // the control sits in |1> half the time on average
            let ex = leakage_exchange((2.0 * l).min(1.0), 0)?;
            per = Some(match per {
                Some(prev) => prev.then(&ex),
                None => ex,
            });
        }
        let cnot_element = table
            .index_of(
                &Tableau::from_unitary(&cnot())
                    .ok_or_else(|| Error::InvalidArgument(String::from("CNOT")))?,
            )
            .ok_or_else(|| Error::InvalidArgument(String::from("CNOT missing from table")))?;
        Ok(Self {
            table,
            levels,
            generators: gens,
            processes,
            per_clifford: per.map(|c| Process::Liouville(superoperator(&c))),
            cnot_element,
        })
    }

    fn apply_clifford(&self, rho: &mut CMatrix, element: usize) {
        for g in self.table.compile(element) {
            let k = self.generators.iter().position(|h| h == g).unwrap_or(0);
            self.processes[k].apply(rho);
        }
        if let Some(p) = &self.per_clifford {
            p.apply(rho);
        }
    }

    fn apply_cnot(&self, rho: &mut CMatrix) {
        let k = self.generators.len() - 1;
        self.processes[k].apply(rho);
    }

    /// Final density matrix of one random sequence of `length` Cliffords
    /// plus its recovery element.
    pub fn run_sequence(
        &self,
        variant: RbVariant,
        length: usize,
        seed: u64,
        stream: u64,
    ) -> CMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        let d = self.levels * self.levels;
        let mut rho = CMatrix::zeros(d, d);
        rho[(0, 0)] = c64(1.0, 0.0);
        let mut total = 0usize;
        for _ in 0..length {
            let c = self.table.sample(&mut rng);
            self.apply_clifford(&mut rho, c);
            total = self.table.compose(total, c);
            if variant == RbVariant::Interleaved {
                self.apply_cnot(&mut rho);
                total = self.table.compose(total, self.cnot_element);
            }
        }
        self.apply_clifford(&mut rho, self.table.inverse(total));
        rho
    }

    /// Survival of `|00>`, qubit-subspace purity, or the `|2>` population
    /// of each transmon (control first) for the leakage variant.
    pub fn observables(&self, variant: RbVariant, rho: &CMatrix) -> Vec<f64> {
        let ci = computational_indices(self.levels);
        match variant {
            RbVariant::Standard | RbVariant::Interleaved => vec![rho[(0, 0)].re],
            RbVariant::Purity => {
                let block = CMatrix::from_fn(4, 4, |i, j| rho[(ci[i], ci[j])]);
                vec![trace(&(&block * &block)).re]
            }
            RbVariant::Leakage => {
                let l = self.levels;
                if l < 3 {
                    return vec![0.0, 0.0];
                }
                let p0 = (0..l).map(|n| rho[(idx(l, 2, n), idx(l, 2, n))].re).sum();
                let p1 = (0..l).map(|n| rho[(idx(l, n, 2), idx(l, n, 2))].re).sum();
                vec![p0, p1]
            }
        }
    }

    /// Observables of the `sample`-th sequence at the `length_index`-th length.
    pub fn sequence_values(
        &self,
        variant: RbVariant,
        config: &RbConfig,
        length_index: usize,
        sample: usize,
    ) -> Vec<f64> {
        let stream = ((length_index as u64) << 32) | sample as u64;
        let rho = self.run_sequence(variant, config.lengths[length_index], config.seed, stream);
        self.observables(variant, &rho)
            .into_iter()
            .map(|v| v.clamp(0.0, 1.0))
            .collect()
    }

    /// Sequential run; `values[l][s]` may also be produced in parallel and
    /// passed to [`aggregate`].
    pub fn run(&self, variant: RbVariant, config: &RbConfig) -> Result<Vec<RbOutcome>> {
        config.validate()?;
        let values: Vec<Vec<Vec<f64>>> = (0..config.lengths.len())
            .map(|l| {
                (0..config.samples)
                    .map(|s| self.sequence_values(variant, config, l, s))
                    .collect()
            })
            .collect();
        aggregate(variant, config, &values)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RbPoint {
    pub length: usize,
    pub mean: f64,
    pub stderr: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RbOutcome {
    pub variant: RbVariant,
    /// Transmon whose `|2>` population is tracked (leakage variant only).
    pub qubit: Option<usize>,
    pub seed: u64,
    pub points: Vec<RbPoint>,
}

impl RbOutcome {
    pub fn label(&self) -> String {
        match self.qubit {
            Some(q) => format!("{}_q{q}", self.variant.name()),
            None => String::from(self.variant.name()),
        }
    }
}

/// Groups per-sequence observables `values[length][sample][observable]`.
pub fn aggregate(
    variant: RbVariant,
    config: &RbConfig,
    values: &[Vec<Vec<f64>>],
) -> Result<Vec<RbOutcome>> {
    config.validate()?;
    if values.len() != config.lengths.len() {
        return Err(Error::InvalidArgument(format!(
            "{} value rows for {} lengths",
            values.len(),
            config.lengths.len()
        )));
    }
    let k = values
        .first()
        .and_then(|v| v.first())
        .map_or(0, |o| o.len());
    let mut outcomes = Vec::with_capacity(k);
    for obs in 0..k {
        let points = config
            .lengths
            .iter()
            .zip(values)
            .map(|(&length, per_sample)| {
                let v: Vec<f64> = per_sample.iter().map(|o| o[obs]).collect();
                let n = v.len() as f64;
                let mean = v.iter().sum::<f64>() / n;
                let var = if v.len() > 1 {
                    v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
                } else {
                    0.0
                };
                RbPoint {
                    length,
                    mean,
                    stderr: (var / n).sqrt(),
                    samples: v.len(),
                }
            })
            .collect();
        outcomes.push(RbOutcome {
            variant,
            qubit: (variant == RbVariant::Leakage).then_some(obs),
            seed: config.seed,
            points,
        });
    }
    Ok(outcomes)
}

/// `A α^m + B` with derived error per Clifford.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub a: f64,
    pub alpha: f64,
    pub b: f64,
    pub a_err: f64,
    pub alpha_err: f64,
    pub b_err: f64,
    pub rms_residual: f64,
    /// `(3/4)(1 - α)`, or `(3/4)(1 - sqrt(u))` for purity data.
    pub epc: f64,
    pub epc_err: f64,
}

fn linear_ab(ms: &[f64], ys: &[f64], alpha: f64) -> (f64, f64, f64) {
    // least squares for A and B at fixed α
    let n = ms.len() as f64;
    let xs: Vec<f64> = ms.iter().map(|&m| alpha.powf(m)).collect();
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    let det = n * sxx - sx * sx;
    let (a, b) = if det.abs() < 1e-14 * n * sxx.max(1.0) {
        (0.0, sy / n)
    } else {
        ((n * sxy - sx * sy) / det, (sxx * sy - sx * sxy) / det)
    };
    let sse = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (a * x + b - y).powi(2))
        .sum();
    (a, b, sse)
}

fn exp_decay_fit(ms: &[f64], ys: &[f64]) -> Result<(f64, f64, f64, [f64; 3], f64)> {
    if ms.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "{} lengths; need at least 3",
            ms.len()
        )));
    }
    // coarse scan of α = 1 - 10^s, then golden refinement and a joint polish
    let grid: Vec<f64> = (0..=240)
        .map(|k| 1.0 - 10f64.powf(-6.0 + 6.0 * k as f64 / 240.0))
        .collect();
    let mut best = (1.0, f64::INFINITY);
    for &al in &grid {
        let sse = linear_ab(ms, ys, al).2;
        if sse < best.1 {
            best = (al, sse);
        }
    }
    let pos = grid.iter().position(|&g| g == best.0).unwrap_or(0);
    let lo = grid[(pos + 1).min(grid.len() - 1)];
    let hi = grid[pos.saturating_sub(1)];
    let (alpha0, _) = golden_section(
        |al| Ok(linear_ab(ms, ys, al).2),
        lo.min(hi),
        lo.max(hi),
        1e-13,
    )?;
    let (a0, b0, sse0) = linear_ab(ms, ys, alpha0);
    let scale = ys.iter().fold(0.0f64, |m, y| m.max(y.abs())).max(1e-300);
    if sse0 <= 1e-30 * scale * scale * ms.len() as f64 || a0 == 0.0 {
        let alpha = if a0 == 0.0 { 1.0 } else { alpha0 };
        return Ok((a0, alpha, b0, [0.0; 3], sse0));
    }
    let fit = levenberg_marquardt(
        |p| {
            Ok(ms
                .iter()
                .zip(ys)
                .map(|(&m, &y)| p[0] * p[1].powf(m) + p[2] - y)
                .collect())
        },
        &[a0, alpha0, b0],
        LmOptions::default(),
    )?;
    let (p, sse) = if fit.sse <= sse0 {
        (fit.params.clone(), fit.sse)
    } else {
        (vec![a0, alpha0, b0], sse0)
    };
    Ok((
        p[0],
        p[1],
        p[2],
        [fit.stderr(0), fit.stderr(1), fit.stderr(2)],
        sse,
    ))
}

fn lengths_and_means(outcome: &RbOutcome) -> (Vec<f64>, Vec<f64>) {
    (
        outcome.points.iter().map(|p| p.length as f64).collect(),
        outcome.points.iter().map(|p| p.mean).collect(),
    )
}

/// Fits `A α^m + B`; for purity data `α` is the unitarity `u`.
pub fn fit_decay(outcome: &RbOutcome) -> Result<DecayFit> {
    if outcome.variant == RbVariant::Leakage {
        return Err(Error::InvalidArgument(String::from(
            "use fit_leakage for leakage data",
        )));
    }
    let (ms, ys) = lengths_and_means(outcome);
    let (a, alpha, b, err, sse) = exp_decay_fit(&ms, &ys)?;
    if !(alpha > 0.0 && alpha <= 1.0 + 1e-12) {
        return Err(Error::FitFailed {
            residual: (sse / ms.len() as f64).sqrt(),
            detail: format!("decay constant {alpha} outside (0, 1]"),
        });
    }
    let alpha = alpha.min(1.0);
    let (epc, epc_err) = if outcome.variant == RbVariant::Purity {
        let s = alpha.sqrt();
        (0.75 * (1.0 - s), 0.75 * err[1] / (2.0 * s))
    } else {
        (0.75 * (1.0 - alpha), 0.75 * err[1])
    };
    Ok(DecayFit {
        a,
        alpha,
        b,
        a_err: err[0],
        alpha_err: err[1],
        b_err: err[2],
        rms_residual: (sse / ms.len() as f64).sqrt(),
        epc,
        epc_err,
    })
}

/// `(EPG, uncertainty)` from a reference and a CNOT-interleaved fit.
pub fn interleaved_epg(reference: &DecayFit, interleaved: &DecayFit) -> (f64, f64) {
    let r = interleaved.alpha / reference.alpha;
    let rel = ((interleaved.alpha_err / interleaved.alpha).powi(2)
        + (reference.alpha_err / reference.alpha).powi(2))
    .sqrt();
    (0.75 * (1.0 - r), 0.75 * r * rel)
}

/// Error per CNOT when all of the Clifford error is charged to the CNOTs.
pub fn epg_upper_bound(epc: f64, cnot_per_clifford: f64) -> Result<f64> {
    if !(cnot_per_clifford > 0.0) || epc < 0.0 {
        return Err(Error::InvalidArgument(format!(
            "EPC {epc} with {cnot_per_clifford} CNOTs per Clifford"
        )));
    }
    Ok(epc / cnot_per_clifford)
}

/// `p(m) = L∞ (1 - λ^m)` with leakage `L1 = L∞ (1 - λ)` and seepage
/// `L2 = (1 - L∞)(1 - λ)` per Clifford.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageFit {
    pub l_inf: f64,
    pub lambda: f64,
    pub leakage: f64,
    pub leakage_err: f64,
    pub seepage: f64,
    pub rms_residual: f64,
    /// `λ` could not be resolved and `p(m) = L1 m` was fitted instead.
    pub linearized: bool,
}

pub fn fit_leakage(outcome: &RbOutcome) -> Result<LeakageFit> {
    let (ms, ys) = lengths_and_means(outcome);
    if ms.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "{} lengths; need at least 3",
            ms.len()
        )));
    }
    let n = ms.len() as f64;
    let l_of = |lam: f64| -> (f64, f64) {
        let xs: Vec<f64> = ms.iter().map(|&m| 1.0 - lam.powf(m)).collect();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let l = if sxx > 0.0 {
            xs.iter().zip(&ys).map(|(x, y)| x * y).sum::<f64>() / sxx
        } else {
            0.0
        };
        (
            l,
            xs.iter().zip(&ys).map(|(x, y)| (l * x - y).powi(2)).sum(),
        )
    };
    let linear = || -> LeakageFit {
        let smm: f64 = ms.iter().map(|m| m * m).sum();
        let l1 = ms.iter().zip(&ys).map(|(m, y)| m * y).sum::<f64>() / smm;
        let sse: f64 = ms.iter().zip(&ys).map(|(m, y)| (l1 * m - y).powi(2)).sum();
        let err = if n > 1.0 {
            (sse / (n - 1.0) / smm).sqrt()
        } else {
            0.0
        };
        LeakageFit {
            l_inf: 0.0,
            lambda: 1.0,
            leakage: l1,
            leakage_err: err,
            seepage: 0.0,
            rms_residual: (sse / n).sqrt(),
            linearized: true,
        }
    };
    let grid: Vec<f64> = (0..=240)
        .map(|k| 1.0 - 10f64.powf(-7.0 + 7.0 * k as f64 / 240.0))
        .collect();
    let mut best = (grid[0], f64::INFINITY);
    for &g in &grid {
        let sse = l_of(g).1;
        if sse < best.1 {
            best = (g, sse);
        }
    }
    let pos = grid.iter().position(|&g| g == best.0).unwrap_or(0);
    let lo = grid[(pos + 1).min(grid.len() - 1)];
    let hi = grid[pos.saturating_sub(1)];
    let (lam0, _) = golden_section(|g| Ok(l_of(g).1), lo.min(hi), lo.max(hi), 1e-14)?;
    let (l0, _) = l_of(lam0);
    if !(l0 > 0.0) || pos == 0 {
        // flat or non-saturating data: λ is not identifiable
        return Ok(linear());
    }
    let fit = levenberg_marquardt(
        |p| {
            Ok(ms
                .iter()
                .zip(&ys)
                .map(|(&m, &y)| p[0] * (1.0 - p[1].powf(m)) - y)
                .collect())
        },
        &[l0, lam0],
        LmOptions::default(),
    )?;
    let Some(cov) = fit.covariance.as_ref() else {
        return Ok(linear());
    };
    let (l_inf, lambda) = (fit.params[0], fit.params[1]);
    if !(l_inf > 0.0 && l_inf <= 1.0 && lambda > 0.0 && lambda < 1.0) {
        return Ok(linear());
    }
    let g = [1.0 - lambda, -l_inf];
    let var =
        g[0] * g[0] * cov[(0, 0)] + 2.0 * g[0] * g[1] * cov[(0, 1)] + g[1] * g[1] * cov[(1, 1)];
    Ok(LeakageFit {
        l_inf,
        lambda,
        leakage: l_inf * (1.0 - lambda),
        leakage_err: var.max(0.0).sqrt(),
        seepage: (1.0 - l_inf) * (1.0 - lambda),
        rms_residual: (fit.sse / n).sqrt(),
        linearized: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn table() -> &'static CliffordTable {
        static T: OnceLock<CliffordTable> = OnceLock::new();
        T.get_or_init(CliffordTable::build)
    }

    fn synthetic(variant: RbVariant, f: impl Fn(f64) -> f64) -> RbOutcome {
        RbOutcome {
            variant,
            qubit: None,
            seed: 0,
            points: [1usize, 5, 10, 20, 50, 100, 200, 300]
                .iter()
                .map(|&m| RbPoint {
                    length: m,
                    mean: f(m as f64),
                    stderr: 0.0,
                    samples: 1,
                })
                .collect(),
        }
    }

    #[test]
    fn noiseless_sequences_survive() {
        let gates = GateSet::ideal(2, 180.0).unwrap();
        let eng = RbEngine::new(table(), &gates, &NoiseModel::default()).unwrap();
        let cfg = RbConfig {
            lengths: vec![1, 7, 30],
            samples: 3,
            seed: 9,
        };
        for v in [RbVariant::Standard, RbVariant::Interleaved] {
            let out = eng.run(v, &cfg).unwrap().remove(0);
            assert!(out.points.iter().all(|p| (p.mean - 1.0).abs() < 1e-12));
        }
        let gates3 = GateSet::ideal(3, 180.0).unwrap();
        let eng3 = RbEngine::new(table(), &gates3, &NoiseModel::default()).unwrap();
        let out = eng3.run(RbVariant::Leakage, &cfg).unwrap();
        assert_eq!(out.len(), 2);
        assert_eq!(out[1].label(), "leakage_q1");
        assert!(out
            .iter()
            .flat_map(|o| &o.points)
            .all(|p| p.mean.abs() < 1e-12));
    }

    #[test]
    fn exact_decay_recovered() {
        let o = synthetic(RbVariant::Standard, |m| 0.7 * 0.99377f64.powf(m) + 0.25);
        let f = fit_decay(&o).unwrap();
        assert!((f.a - 0.7).abs() < 1e-9);
        assert!((f.alpha - 0.99377).abs() < 1e-9);
        assert!((f.b - 0.25).abs() < 1e-9);
        let flat = fit_decay(&synthetic(RbVariant::Standard, |_| 1.0)).unwrap();
        assert_eq!(flat.epc, 0.0);
    }

    #[test]
    fn interleaved_round_trip() {
        let ar = 0.99377;
        let ai = ar * (1.0 - 4.0 / 3.0 * 2.3e-3);
        let r = fit_decay(&synthetic(RbVariant::Standard, |m| {
            0.72 * ar.powf(m) + 0.25
        }))
        .unwrap();
        let i = fit_decay(&synthetic(RbVariant::Interleaved, |m| {
            0.72 * ai.powf(m) + 0.25
        }))
        .unwrap();
        assert!((interleaved_epg(&r, &i).0 - 2.3e-3).abs() < 1e-5);
    }

    #[test]
    fn upper_bound_arithmetic() {
        assert!((epg_upper_bound(4.67e-3, 1.5712).unwrap() - 2.972e-3).abs() < 1e-6);
        assert_eq!(epg_upper_bound(0.0, 1.5).unwrap(), 0.0);
        assert!((epg_upper_bound(4.67e-3, 1.5).unwrap() - 3.113e-3).abs() < 1e-6);
        assert!(epg_upper_bound(1e-3, 0.0).is_err());
    }

    #[test]
    fn depolarizing_matches_analytic_alpha() {
        let p = 4.67e-3;
        let gates = GateSet::ideal(2, 180.0).unwrap();
        let noise = NoiseModel {
            depolarizing_per_clifford: Some(p),
            ..Default::default()
        };
        let eng = RbEngine::new(table(), &gates, &noise).unwrap();
        let cfg = RbConfig {
            lengths: vec![1, 20, 50, 100, 200],
            samples: 4,
            seed: 1,
        };
        let f = fit_decay(&eng.run(RbVariant::Standard, &cfg).unwrap()[0]).unwrap();
        let analytic = 1.0 - 4.0 / 3.0 * p;
        assert!(
            (f.alpha - analytic).abs() <= 3.0 * f.alpha_err.max(1e-9),
            "{} vs {analytic}",
            f.alpha
        );
        let pur = fit_decay(&eng.run(RbVariant::Purity, &cfg).unwrap()[0]).unwrap();
        assert!((pur.epc - p).abs() < 1e-6, "{}", pur.epc);
    }

    #[test]
    fn leakage_fit_synthetic() {
        let q = 2.0 * 9e-5;
        let lam = 1.0 - 1.5 * q;
        let f = fit_leakage(&synthetic(RbVariant::Leakage, |m| {
            (1.0 / 3.0) * (1.0 - lam.powf(m))
        }))
        .unwrap();
        assert!((f.leakage - 9e-5).abs() < 1e-9, "{f:?}");
        let z = fit_leakage(&synthetic(RbVariant::Leakage, |_| 0.0)).unwrap();
        assert_eq!(z.leakage, 0.0);
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let gates = GateSet::ideal(2, 180.0).unwrap();
        let noise = NoiseModel {
            depolarizing_per_cnot: Some(5e-3),
            ..Default::default()
        };
        let eng = RbEngine::new(table(), &gates, &noise).unwrap();
        let cfg = RbConfig {
            lengths: vec![2, 10],
            samples: 3,
            seed: 77,
        };
        assert_eq!(
            eng.run(RbVariant::Standard, &cfg).unwrap(),
            eng.run(RbVariant::Standard, &cfg).unwrap()
        );
    }

    #[test]
    fn config_validation() {
        let bad = RbConfig {
            lengths: vec![5, 3],
            samples: 1,
            seed: 0,
        };
        assert!(bad.validate().is_err());
        assert!("bogus".parse::<RbVariant>().is_err());
    }
}
