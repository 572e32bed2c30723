//! Two-qubit Clifford group: tableau arithmetic, enumeration of all 11520
//! elements (modulo global phase) and compilation into native primitives.
//!
//! Qubit 0 is the first tensor factor and the CNOT control.

use alloc::collections::BinaryHeap;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Reverse;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::linalg::{c64, identity, kron, trace, CMatrix};

/// Order of the two-qubit Clifford group modulo phases.
pub const GROUP_ORDER: usize = 11520;

/// Length of a single-qubit π/2 pulse, ns.
pub const SINGLE_QUBIT_NS: f64 = 40.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum GatePrimitive {
    X90p(u8),
    X90m(u8),
    Y90p(u8),
    Y90m(u8),
    /// Virtual rotation by `quarter_turns · π/2` about z; zero duration.
    Z {
        qubit: u8,
        quarter_turns: i8,
    },
    /// Control 0, target 1.
    Cnot,
}

impl GatePrimitive {
    pub fn is_virtual(&self) -> bool {
        matches!(self, GatePrimitive::Z { .. })
    }

    pub fn is_single_pulse(&self) -> bool {
        !matches!(self, GatePrimitive::Z { .. } | GatePrimitive::Cnot)
    }

    pub fn duration_ns(&self, cnot_ns: f64) -> f64 {
        match self {
            GatePrimitive::Z { .. } => 0.0,
            GatePrimitive::Cnot => cnot_ns,
            _ => SINGLE_QUBIT_NS,
        }
    }

    pub fn qubit(&self) -> Option<usize> {
        match *self {
            GatePrimitive::X90p(q)
            | GatePrimitive::X90m(q)
            | GatePrimitive::Y90p(q)
            | GatePrimitive::Y90m(q) => Some(q as usize),
            GatePrimitive::Z { qubit, .. } => Some(qubit as usize),
            GatePrimitive::Cnot => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            GatePrimitive::X90p(_) => "X90p",
            GatePrimitive::X90m(_) => "X90m",
            GatePrimitive::Y90p(_) => "Y90p",
            GatePrimitive::Y90m(_) => "Y90m",
            GatePrimitive::Z { .. } => "Z",
            GatePrimitive::Cnot => "CNOT",
        }
    }

    /// 2x2 unitary of a single-qubit primitive.
    pub fn single_qubit_unitary(&self) -> Option<CMatrix> {
        let s = core::f64::consts::FRAC_1_SQRT_2;
        let m = |a: [(f64, f64); 4]| {
            CMatrix::from_row_slice(
                2,
                2,
                &[
                    c64(a[0].0, a[0].1),
                    c64(a[1].0, a[1].1),
                    c64(a[2].0, a[2].1),
                    c64(a[3].0, a[3].1),
                ],
            )
        };
        Some(match *self {
            GatePrimitive::X90p(_) => m([(s, 0.0), (0.0, -s), (0.0, -s), (s, 0.0)]),
            GatePrimitive::X90m(_) => m([(s, 0.0), (0.0, s), (0.0, s), (s, 0.0)]),
            GatePrimitive::Y90p(_) => m([(s, 0.0), (-s, 0.0), (s, 0.0), (s, 0.0)]),
            GatePrimitive::Y90m(_) => m([(s, 0.0), (s, 0.0), (-s, 0.0), (s, 0.0)]),
            GatePrimitive::Z { quarter_turns, .. } => {
                let half = quarter_turns as f64 * core::f64::consts::FRAC_PI_4;
                let mut z = CMatrix::zeros(2, 2);
                z[(0, 0)] = crate::linalg::cis(-half);
                z[(1, 1)] = crate::linalg::cis(half);
                z
            }
            GatePrimitive::Cnot => return None,
        })
    }

    /// 4x4 unitary, qubit 0 first.
    pub fn unitary(&self) -> CMatrix {
        match self.single_qubit_unitary() {
            Some(u) => {
                if self.qubit() == Some(0) {
                    kron(&u, &identity(2))
                } else {
                    kron(&identity(2), &u)
                }
            }
            None => cnot(),
        }
    }
}

pub fn cnot() -> CMatrix {
    let mut m = CMatrix::zeros(4, 4);
    m[(0, 0)] = c64(1.0, 0.0);
    m[(1, 1)] = c64(1.0, 0.0);
    m[(2, 3)] = c64(1.0, 0.0);
    m[(3, 2)] = c64(1.0, 0.0);
    m
}

/// Generators used by the compiler.
pub fn generators() -> Vec<GatePrimitive> {
    let mut g = Vec::new();
    for q in 0..2u8 {
        g.extend([
            GatePrimitive::X90p(q),
            GatePrimitive::X90m(q),
            GatePrimitive::Y90p(q),
            GatePrimitive::Y90m(q),
            GatePrimitive::Z {
                qubit: q,
                quarter_turns: 1,
            },
            GatePrimitive::Z {
                qubit: q,
                quarter_turns: -1,
            },
            GatePrimitive::Z {
                qubit: q,
                quarter_turns: 2,
            },
        ]);
    }
    g.push(GatePrimitive::Cnot);
    g
}

/// `i^phase · X^x · Z^z`; bit `q` of `x`/`z` acts on qubit `q`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Pauli {
    x: u8,
    z: u8,
    phase: u8,
}

impl Pauli {
    fn mul(self, o: Pauli) -> Pauli {
        let swaps = (self.z & o.x).count_ones() as u8;
        Pauli {
            x: self.x ^ o.x,
            z: self.z ^ o.z,
            phase: (self.phase + o.phase + 2 * swaps) % 4,
        }
    }

    /// Hermitian Pauli with sign bit: `(-1)^s i^{|x&z|} X^x Z^z`.
    fn from_signed(code: u8) -> Pauli {
        let x = code & 3;
        let z = (code >> 2) & 3;
        let s = (code >> 4) & 1;
        Pauli {
            x,
            z,
            phase: ((x & z).count_ones() as u8 + 2 * s) % 4,
        }
    }

    fn to_signed(self) -> u8 {
        let rel = (self.phase + 4 - (self.x & self.z).count_ones() as u8) % 4;
        debug_assert!(rel.is_multiple_of(2), "non-Hermitian image");
        self.x | (self.z << 2) | ((rel / 2) << 4)
    }

    fn matrix(self) -> CMatrix {
        let x = CMatrix::from_row_slice(
            2,
            2,
            &[c64(0.0, 0.0), c64(1.0, 0.0), c64(1.0, 0.0), c64(0.0, 0.0)],
        );
        let z = CMatrix::from_row_slice(
            2,
            2,
            &[c64(1.0, 0.0), c64(0.0, 0.0), c64(0.0, 0.0), c64(-1.0, 0.0)],
        );
        let factor = |q: u8| {
            let mut m = identity(2);
            if self.x >> q & 1 == 1 {
                m = &m * &x;
            }
            if self.z >> q & 1 == 1 {
                m = &m * &z;
            }
            m
        };
        let ph =
            [c64(1.0, 0.0), c64(0.0, 1.0), c64(-1.0, 0.0), c64(0.0, -1.0)][self.phase as usize];
        kron(&factor(0), &factor(1)) * ph
    }
}

const BASIS: [Pauli; 4] = [
    Pauli {
        x: 1,
        z: 0,
        phase: 0,
    },
    Pauli {
        x: 0,
        z: 1,
        phase: 0,
    },
    Pauli {
        x: 2,
        z: 0,
        phase: 0,
    },
    Pauli {
        x: 0,
        z: 2,
        phase: 0,
    },
];

/// Images of `X0, Z0, X1, Z1` under conjugation, each a signed Hermitian
/// Pauli packed in 5 bits.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Tableau {
    images: [u8; 4],
}

impl Tableau {
    pub const IDENTITY: Tableau = Tableau {
        images: [0b00001, 0b00100, 0b00010, 0b01000],
    };

    /// Packed 20-bit key.
    pub fn key(&self) -> u32 {
        self.images
            .iter()
            .enumerate()
            .fold(0u32, |k, (i, &v)| k | ((v as u32) << (5 * i)))
    }

    fn apply(&self, p: Pauli) -> Pauli {
        // X part then Z part, matching the storage order of `Pauli`
        let mut out = Pauli {
            x: 0,
            z: 0,
            phase: p.phase,
        };
        for (bit, slot) in [
            (p.x & 1, 0),
            (p.x >> 1 & 1, 2),
            (p.z & 1, 1),
            (p.z >> 1 & 1, 3),
        ] {
            if bit == 1 {
                out = out.mul(Pauli::from_signed(self.images[slot]));
            }
        }
        out
    }

    /// `self` followed by `next`.
    pub fn then(&self, next: &Tableau) -> Tableau {
        let mut images = [0u8; 4];
        for (k, img) in images.iter_mut().enumerate() {
            *img = next.apply(Pauli::from_signed(self.images[k])).to_signed();
        }
        Tableau { images }
    }

    /// Tableau of a Clifford unitary; `None` if `u` is not a 4x4 Clifford.
    pub fn from_unitary(u: &CMatrix) -> Option<Tableau> {
        if u.shape() != (4, 4) {
            return None;
        }
        let mut images = [0u8; 4];
        for (k, b) in BASIS.iter().enumerate() {
            let m = u * b.matrix() * u.adjoint();
            let mut found = None;
            for code in 0..16u8 {
                let q = Pauli::from_signed(code);
                let c = trace(&(q.matrix().adjoint() * &m)) / c64(4.0, 0.0);
                if (c.re.abs() - 1.0).abs() < 1e-9 && c.im.abs() < 1e-9 {
                    found = Some(if c.re > 0.0 { code } else { code | 16 });
                    break;
                }
            }
            images[k] = found?;
        }
        Some(Tableau { images })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompiledCounts {
    pub cnot: usize,
    pub single_pulses: usize,
    pub virtual_z: usize,
}

fn count(seq: &[GatePrimitive]) -> CompiledCounts {
    CompiledCounts {
        cnot: seq.iter().filter(|g| **g == GatePrimitive::Cnot).count(),
        single_pulses: seq.iter().filter(|g| g.is_single_pulse()).count(),
        virtual_z: seq.iter().filter(|g| g.is_virtual()).count(),
    }
}

/// All group elements with their compiled sequences. Index 0 is the identity.
pub struct CliffordTable {
    tableaux: Vec<Tableau>,
    lookup: Vec<u16>,
    sequences: Vec<Vec<GatePrimitive>>,
    inverses: Vec<u16>,
}

impl core::fmt::Debug for CliffordTable {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("CliffordTable")
            .field("len", &self.tableaux.len())
            .finish()
    }
}

const NONE: u16 = u16::MAX;

impl CliffordTable {
    /// Enumerates the group by a shortest-path search over the generators,
    /// minimizing CNOTs first, then physical single-qubit pulses, then virtual Z.
    pub fn build() -> Self {
        let gens = generators();
        let gen_tableaux: Vec<Tableau> = gens
            .iter()
            .map(|g| Tableau::from_unitary(&g.unitary()).expect("generators are Clifford"))
            .collect();
        let weight = |g: &GatePrimitive| -> u32 {
            match g {
                GatePrimitive::Cnot => 1_000_000,
                GatePrimitive::Z { .. } => 1,
                _ => 1_000,
            }
        };
        let mut dist = vec![u32::MAX; 1 << 20];
        let mut parent: Vec<(u32, u8)> = vec![(0, 0); 1 << 20];
        let mut lookup = vec![NONE; 1 << 20];
        let mut tableaux = Vec::with_capacity(GROUP_ORDER);
        let mut sequences: Vec<Vec<GatePrimitive>> = Vec::with_capacity(GROUP_ORDER);

        let start = Tableau::IDENTITY;
        dist[start.key() as usize] = 0;
        let mut heap = BinaryHeap::new();
        heap.push(Reverse((0u32, start.key(), start)));
        while let Some(Reverse((d, key, t))) = heap.pop() {
            if lookup[key as usize] != NONE || d > dist[key as usize] {
                continue;
            }
            let seq = if key == start.key() {
                Vec::new()
            } else {
                let (pk, g) = parent[key as usize];
                let mut s = sequences[lookup[pk as usize] as usize].clone();
                s.push(gens[g as usize]);
                s
            };
            lookup[key as usize] = tableaux.len() as u16;
            tableaux.push(t);
            sequences.push(seq);
            for (gi, (g, gt)) in gens.iter().zip(&gen_tableaux).enumerate() {
                let next = t.then(gt);
                let nk = next.key() as usize;
                let nd = d + weight(g);
                if lookup[nk] == NONE && nd < dist[nk] {
                    dist[nk] = nd;
                    parent[nk] = (key, gi as u8);
                    heap.push(Reverse((nd, nk as u32, next)));
                }
            }
        }
        debug_assert_eq!(tableaux.len(), GROUP_ORDER);

        let mut table = CliffordTable {
            tableaux,
            lookup,
            sequences,
            inverses: Vec::new(),
        };
        let inverse_gen: Vec<Tableau> = gens
            .iter()
            .map(|g| {
                let inv = match *g {
                    GatePrimitive::X90p(q) => GatePrimitive::X90m(q),
                    GatePrimitive::X90m(q) => GatePrimitive::X90p(q),
                    GatePrimitive::Y90p(q) => GatePrimitive::Y90m(q),
                    GatePrimitive::Y90m(q) => GatePrimitive::Y90p(q),
                    GatePrimitive::Z {
                        qubit,
                        quarter_turns,
                    } => GatePrimitive::Z {
                        qubit,
                        quarter_turns: -quarter_turns,
                    },
                    GatePrimitive::Cnot => GatePrimitive::Cnot,
                };
                Tableau::from_unitary(&inv.unitary()).expect("generators are Clifford")
            })
            .collect();
        table.inverses = (0..GROUP_ORDER)
            .map(|i| {
                let t = table.sequences[i]
                    .iter()
                    .rev()
                    .fold(Tableau::IDENTITY, |acc, g| {
                        let gi = gens.iter().position(|h| h == g).unwrap_or(0);
                        acc.then(&inverse_gen[gi])
                    });
                table.lookup[t.key() as usize]
            })
            .collect();
        table
    }

    pub fn len(&self) -> usize {
        self.tableaux.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tableaux.is_empty()
    }

    pub fn tableau(&self, index: usize) -> Tableau {
        self.tableaux[index]
    }

    pub fn index_of(&self, t: &Tableau) -> Option<usize> {
        match self.lookup[t.key() as usize] {
            NONE => None,
            i => Some(i as usize),
        }
    }

    /// Index of `a` followed by `b`.
    pub fn compose(&self, a: usize, b: usize) -> usize {
        self.lookup[self.tableaux[a].then(&self.tableaux[b]).key() as usize] as usize
    }

    pub fn inverse(&self, a: usize) -> usize {
        self.inverses[a] as usize
    }

    /// Native primitives in time order.
    pub fn compile(&self, index: usize) -> &[GatePrimitive] {
        &self.sequences[index]
    }

    pub fn counts(&self, index: usize) -> CompiledCounts {
        count(&self.sequences[index])
    }

    /// 4x4 unitary of the compiled sequence.
    pub fn unitary(&self, index: usize) -> CMatrix {
        self.sequences[index]
            .iter()
            .fold(identity(4), |u, g| g.unitary() * u)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        rng.gen_range(0..self.len())
    }

    /// Number of elements needing 0, 1, 2 and 3 CNOTs.
    pub fn cnot_census(&self) -> [usize; 4] {
        let mut c = [0usize; 4];
        for s in &self.sequences {
            c[count(s).cnot.min(3)] += 1;
        }
        c
    }
}

/// Scheduled length of a compiled sequence: single-qubit pulses on different
/// qubits overlap, a CNOT waits for both.
pub fn sequence_duration_ns(seq: &[GatePrimitive], cnot_ns: f64) -> f64 {
    let mut clock = [0.0f64; 2];
    for g in seq {
        match g {
            GatePrimitive::Cnot => {
                let t = clock[0].max(clock[1]) + cnot_ns;
                clock = [t, t];
            }
            GatePrimitive::Z { .. } => {}
            _ => {
                if let Some(q) = g.qubit() {
                    clock[q] += SINGLE_QUBIT_NS;
                }
            }
        }
    }
    clock[0].max(clock[1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountRow {
    pub primitive: String,
    pub mean: f64,
    pub stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateCountStatistics {
    pub samples: usize,
    /// Both qubits pooled; `Z` counts virtual rotations.
    pub rows: Vec<CountRow>,
    pub cnot_per_clifford: f64,
    pub single_pulses_per_clifford: f64,
    pub mean_duration_ns: f64,
}

fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let var = v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Average primitive counts over `n` uniformly sampled Cliffords.
pub fn gate_counts_statistics<R: Rng + ?Sized>(
    table: &CliffordTable,
    n: usize,
    cnot_ns: f64,
    rng: &mut R,
) -> GateCountStatistics {
    let draws: Vec<usize> = (0..n).map(|_| table.sample(rng)).collect();
    gate_counts_for(table, &draws, cnot_ns)
}

/// Same statistics for an explicit list of elements.
pub fn gate_counts_for(
    table: &CliffordTable,
    elements: &[usize],
    cnot_ns: f64,
) -> GateCountStatistics {
    let names = ["X90p", "X90m", "Y90p", "Y90m", "Z", "CNOT"];
    let mut per: Vec<Vec<f64>> = vec![Vec::with_capacity(elements.len()); names.len()];
    let mut singles = Vec::with_capacity(elements.len());
    let mut durations = Vec::with_capacity(elements.len());
    for &c in elements {
        let seq = table.compile(c);
        for (k, name) in names.iter().enumerate() {
            per[k].push(seq.iter().filter(|g| g.name() == *name).count() as f64);
        }
        singles.push(seq.iter().filter(|g| g.is_single_pulse()).count() as f64);
        durations.push(sequence_duration_ns(seq, cnot_ns));
    }
    let rows: Vec<CountRow> = names
        .iter()
        .zip(&per)
        .map(|(name, v)| {
            let (mean, stderr) = mean_stderr(v);
            CountRow {
                primitive: String::from(*name),
                mean,
                stderr,
            }
        })
        .collect();
    GateCountStatistics {
        samples: elements.len(),
        cnot_per_clifford: rows[5].mean,
        single_pulses_per_clifford: mean_stderr(&singles).0,
        mean_duration_ns: mean_stderr(&durations).0,
        rows,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::distance_up_to_phase;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::sync::OnceLock;

    fn table() -> &'static CliffordTable {
        static T: OnceLock<CliffordTable> = OnceLock::new();
        T.get_or_init(CliffordTable::build)
    }

    #[test]
    fn group_order_and_census() {
        let t = table();
        assert_eq!(t.len(), GROUP_ORDER);
        assert_eq!(t.cnot_census(), [576, 5184, 5184, 576]);
        assert_eq!(t.tableau(0), Tableau::IDENTITY);
        assert!(t.compile(0).is_empty());
    }

    #[test]
    fn cnot_element_has_one_cnot() {
        let t = table();
        let idx = t
            .index_of(&Tableau::from_unitary(&cnot()).unwrap())
            .unwrap();
        assert_eq!(t.counts(idx).cnot, 1);
        assert!(distance_up_to_phase(&t.unitary(idx), &cnot()) < 1e-12);
    }

    #[test]
    fn compiled_unitaries_match_tableaux() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut picks: Vec<usize> = (0..1000).map(|_| t.sample(&mut rng)).collect();
        // a few representatives of every CNOT class
        for class in 0..4 {
            picks.extend((0..t.len()).filter(|&i| t.counts(i).cnot == class).take(5));
        }
        for i in picks {
            let u = t.unitary(i);
            assert_eq!(Tableau::from_unitary(&u), Some(t.tableau(i)), "element {i}");
        }
    }

    #[test]
    fn closure_and_inverses() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10_000 {
            let a = t.sample(&mut rng);
            let b = t.sample(&mut rng);
            let ab = t.compose(a, b);
            assert!(ab < t.len());
            let back = t.compose(ab, t.inverse(ab));
            assert_eq!(back, 0);
            assert_eq!(t.compose(t.inverse(a), a), 0);
        }
    }

    #[test]
    fn composition_matches_matrix_product() {
        let t = table();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..200 {
            let a = t.sample(&mut rng);
            let b = t.sample(&mut rng);
            let ab = t.compose(a, b);
            let prod = t.unitary(b) * t.unitary(a);
            assert!(distance_up_to_phase(&t.unitary(ab), &prod) < 1e-9);
        }
    }

    #[test]
    fn sampling_is_seeded_and_uniform() {
        let t = table();
        let draw = |seed| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            (0..20).map(|_| t.sample(&mut r)).collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));

        let n = 1_000_000;
        let mut hist = vec![0u32; GROUP_ORDER];
        let mut r = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..n {
            hist[t.sample(&mut r)] += 1;
        }
        assert!(hist.iter().all(|&h| h > 0));
        let expected = n as f64 / GROUP_ORDER as f64;
        let chi2: f64 = hist
            .iter()
            .map(|&h| (h as f64 - expected).powi(2) / expected)
            .sum();
        // 11519 degrees of freedom: p = 0.001 sits near 12160
        assert!(chi2 < 12160.0, "chi2 = {chi2}");
    }

    #[test]
    fn average_counts() {
        let t = table();
        let all: Vec<usize> = (0..t.len()).collect();
        let s = gate_counts_for(t, &all, 180.0);
        assert!((s.cnot_per_clifford - 1.5).abs() < 1e-12);
        assert!(
            ((s.single_pulses_per_clifford - 2.66) / 2.66).abs() < 0.25,
            "{}",
            s.single_pulses_per_clifford
        );
        let id = gate_counts_for(t, &[0], 180.0);
        assert!(id.rows.iter().all(|r| r.mean == 0.0));
        assert_eq!(id.mean_duration_ns, 0.0);
    }

    #[test]
    fn schedule_overlaps_single_qubit_pulses() {
        let seq = [
            GatePrimitive::X90p(0),
            GatePrimitive::Y90p(1),
            GatePrimitive::Cnot,
            GatePrimitive::X90m(1),
        ];
        assert_eq!(sequence_duration_ns(&seq, 180.0), 40.0 + 180.0 + 40.0);
    }
}
