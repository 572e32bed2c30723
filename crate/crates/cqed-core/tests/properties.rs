use std::sync::OnceLock;

use cqed_core::calibration::{apply_virtual_z, cnot_family, extract_frame_change};
use cqed_core::channels::{depolarizing, leakage_exchange, thermal_relaxation, Coherence};
use cqed_core::clifford::CliffordTable;
use cqed_core::linalg::{cis, hermiticity_defect, identity, kron, trace};
use cqed_core::model::{build_hamiltonian, BusModeSpec, DeviceModel};
use cqed_core::rb::{
    fit_decay, GateSet, NoiseModel, RbConfig, RbEngine, RbOutcome, RbPoint, RbVariant,
};
use cqed_core::spectrum::{
    diagonalize, dispersive_shift, mu_matrix_element, spectrum_of, sweep_point, sweep_static,
    zz_exact, zz_perturbative,
};
use proptest::prelude::*;

fn table() -> &'static CliffordTable {
    static T: OnceLock<CliffordTable> = OnceLock::new();
    T.get_or_init(CliffordTable::build)
}

prop_compose! {
    fn device()(
        f0 in 4.6f64..5.6,
        f1 in 4.6f64..5.6,
        a0 in -0.35f64..-0.2,
        a1 in -0.35f64..-0.2,
        j0 in -0.01f64..0.01,
        bus in proptest::option::of((5.8f64..6.6, 0.0f64..0.1, 0.0f64..0.1)),
        tl in 2usize..5,
        bl in 2usize..4,
    ) -> DeviceModel {
        let mut m = DeviceModel::direct([f0, f1], [a0, a1], j0);
        if let Some((fb, g0, g1)) = bus {
            m.buses.push(BusModeSpec { frequency_ghz: fb, couplings_ghz: [g0, g1], levels: bl });
        }
        m.with_levels(tl, bl)
    }
}

/// Index map from the basis of `m` to the basis of `m.swapped()`.
fn swap_permutation(m: &DeviceModel) -> Vec<usize> {
    let h = build_hamiltonian(m).unwrap();
    let hs = build_hamiltonian(&m.swapped()).unwrap();
    h.basis
        .labels()
        .iter()
        .map(|l| {
            let mut occ = l.0.clone();
            occ.swap(0, 1);
            hs.basis.index_of(&occ).unwrap()
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, ..ProptestConfig::default() })]

    #[test]
    fn hamiltonian_is_hermitian(m in device()) {
        let h = build_hamiltonian(&m).unwrap();
        prop_assert!(hermiticity_defect(&h.matrix) < 1e-12);
    }

    #[test]
    fn swapping_transmons_permutes_the_matrix(m in device()) {
        let h = build_hamiltonian(&m).unwrap().matrix;
        let hs = build_hamiltonian(&m.swapped()).unwrap().matrix;
        let p = swap_permutation(&m);
        for i in 0..p.len() {
            for j in 0..p.len() {
                prop_assert!((h[(i, j)] - hs[(p[i], p[j])]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn larger_truncation_keeps_existing_elements(m in device()) {
        let big = m.with_levels(m.transmons[0].levels + 1, m.buses.first().map_or(3, |b| b.levels + 1));
        let h = build_hamiltonian(&m).unwrap();
        let hb = build_hamiltonian(&big).unwrap();
        let idx: Vec<usize> = h.basis.labels().iter().map(|l| hb.basis.index_of(&l.0).unwrap()).collect();
        for i in 0..idx.len() {
            for j in 0..idx.len() {
                prop_assert_eq!(h.matrix[(i, j)], hb.matrix[(idx[i], idx[j])]);
            }
        }
    }

    #[test]
    fn eigenvalue_sum_equals_trace(m in device()) {
        let h = build_hamiltonian(&m).unwrap();
        let s = diagonalize(&h).unwrap();
        let sum: f64 = s.energies.iter().sum();
        prop_assert!((sum - trace(&h.matrix).re).abs() < 1e-9);
    }

    #[test]
    fn mu_vanishes_without_coupling(f0 in 4.6f64..5.6, f1 in 4.6f64..5.6, a in -0.35f64..-0.2) {
        let m = DeviceModel::direct([f0, f1], [a, a], 0.0);
        let s = spectrum_of(&m).unwrap();
        prop_assert_eq!(mu_matrix_element(&s, 0).unwrap(), 0.0);
        prop_assert_eq!(mu_matrix_element(&s, 1).unwrap(), 0.0);
    }

    #[test]
    fn clifford_closure_inverse_and_associativity(a in 0usize..11520, b in 0usize..11520, c in 0usize..11520) {
        let t = table();
        prop_assert_eq!(t.compose(t.compose(a, b), t.inverse(t.compose(a, b))), 0);
        prop_assert_eq!(t.compose(t.compose(a, b), c), t.compose(a, t.compose(b, c)));
        prop_assert_eq!(t.compose(t.inverse(a), a), 0);
    }

    #[test]
    fn channels_preserve_trace(
        p in 0.0f64..0.5,
        t in 1.0f64..2000.0,
        t1 in 5.0f64..200.0,
        r in 0.05f64..1.0,
        q in 0.0f64..1.0,
    ) {
        let t2 = 2.0 * t1 * r;
        for ch in [
            depolarizing(p, 4).unwrap(),
            depolarizing(p, 9).unwrap(),
            thermal_relaxation(t, t1, t2).unwrap(),
            thermal_relaxation(t, t1, t2).unwrap().embed(3),
            leakage_exchange(q, 0).unwrap(),
            Coherence { t1_us: [t1, t1 * 1.1], t2_us: [t2, t2] }.idle(t, 3).unwrap(),
        ] {
            prop_assert!(ch.trace_defect() < 1e-12);
        }
    }

    #[test]
    fn frame_change_extraction_is_idempotent(phi in -3.1f64..3.1) {
        let mut z = identity(2);
        z[(1, 1)] = cis(phi);
        let u = kron(&z, &identity(2)) * cnot_family(0.0);
        let found = extract_frame_change(&u).unwrap();
        prop_assert!((found - phi).abs() < 1e-9);
        let fixed = apply_virtual_z(&u, found);
        prop_assert!(extract_frame_change(&fixed).unwrap().abs() < 1e-9);
    }

    #[test]
    fn noiseless_rb_survives(seed in any::<u64>(), len in 1usize..60) {
        let gates = GateSet::ideal(2, 180.0).unwrap();
        let eng = RbEngine::new(table(), &gates, &NoiseModel::default()).unwrap();
        let cfg = RbConfig { lengths: vec![len], samples: 2, seed };
        for v in [RbVariant::Standard, RbVariant::Interleaved, RbVariant::Purity] {
            let o = eng.run(v, &cfg).unwrap();
            prop_assert!((o[0].points[0].mean - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn decay_fit_recovers_exact_curves(a in 0.4f64..0.8, alpha in 0.95f64..0.9999, b in 0.15f64..0.35) {
        let points = [1usize, 5, 10, 20, 50, 100, 200, 300]
            .iter()
            .map(|&m| RbPoint { length: m, mean: a * alpha.powf(m as f64) + b, stderr: 0.0, samples: 1 })
            .collect();
        let o = RbOutcome { variant: RbVariant::Standard, qubit: None, seed: 0, points };
        let fit = fit_decay(&o).unwrap();
        prop_assert!((fit.alpha - alpha).abs() < 1e-7, "{} vs {}", fit.alpha, alpha);
        prop_assert!((fit.epc - 0.75 * (1.0 - alpha)).abs() < 1e-7);
    }
}

#[test]
fn zz_nearly_invariant_under_a_common_offset() {
    // Exact only without counter-rotating terms, which this model keeps. With
    // a bus, their O(g^2 / (f_q + f_b)) exchange moves with the offset and the
    // nearly cancelling paths of the multi-path device amplify it, so only
    // direct couplers are checked tightly.
    let direct = [
        DeviceModel::device_b(),
        DeviceModel::direct([5.2, 5.0], [-0.3, -0.32], 0.004),
        DeviceModel::direct([4.9, 5.15], [-0.28, -0.3], 0.01),
    ];
    for m in direct {
        let z0 = zz_exact(&spectrum_of(&m).unwrap()).unwrap();
        for c in [-0.3, -0.1, 0.1, 0.3] {
            let mut shifted = m.clone();
            for t in &mut shifted.transmons {
                t.frequency_ghz += c;
            }
            for b in &mut shifted.buses {
                b.frequency_ghz += c;
            }
            let z1 = zz_exact(&spectrum_of(&shifted).unwrap()).unwrap();
            assert!(
                (z1 - z0).abs() < 0.01 * z0.abs(),
                "offset {c}: {z0} -> {z1}"
            );
        }
    }
}

#[test]
#[allow(clippy::approx_constant)]
fn zz_converges_to_second_order() {
    for (d, a0, a1) in [
        (0.0888, -0.318, -0.320),
        (-0.150, -0.3, -0.28),
        (0.45, -0.33, -0.31),
    ] {
        for j_mhz in [2.0, 1.0, 0.5] {
            let m = DeviceModel::direct([5.0 + d, 5.0], [a0, a1], j_mhz * 1e-3);
            let exact = zz_exact(&spectrum_of(&m).unwrap()).unwrap() * 1e-3;
            let pert = zz_perturbative(j_mhz, d * 1e3, a0 * 1e3, a1 * 1e3).unwrap();
            let err = (exact / pert - 1.0).abs();
            // the J-independent counter-rotating remainder is ~1e-2 at most
            assert!(err < 0.02, "Δ = {d}: ratio {}", exact / pert);
        }
    }
}

#[test]
fn dispersive_shift_is_quadratic_in_g() {
    let shift = |g: f64| {
        let mut m = DeviceModel::direct([5.1, 5.0], [-0.3, -0.3], 0.0);
        m.buses.push(BusModeSpec {
            frequency_ghz: 6.0,
            couplings_ghz: [g, 0.0],
            levels: 3,
        });
        dispersive_shift(&spectrum_of(&m).unwrap(), 0, 0).unwrap()
    };
    let (lo, hi) = (0.005, 0.05);
    let exponent = (shift(hi) / shift(lo)).abs().ln() / (hi / lo).ln();
    assert!((exponent - 2.0).abs() < 0.05, "exponent {exponent}");
    assert_eq!(shift(0.0), 0.0);
}

#[test]
fn sweep_rows_do_not_depend_on_order() {
    let m = DeviceModel::device_a();
    let means: Vec<f64> = (0..12).map(|k| 4.4 + 0.09 * k as f64).collect();
    let dets = [60.0, -40.0];
    let rows = sweep_static(&m, &means, &dets, None).unwrap();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.reverse();
    order.rotate_left(5);
    for i in order {
        let (d, f) = (dets[i / means.len()], means[i % means.len()]);
        let r = sweep_point(&m, f, d, None).unwrap();
        assert_eq!(r.zz_khz.to_bits(), rows[i].zz_khz.to_bits());
        assert_eq!(r.jeff_mhz.to_bits(), rows[i].jeff_mhz.to_bits());
    }
}

#[test]
fn bus_free_limit_matches_single_coupler_matrix() {
    let direct = DeviceModel::direct([5.1, 5.0], [-0.3, -0.31], 0.004);
    let mut with_idle_bus = direct.clone();
    with_idle_bus.buses.push(BusModeSpec {
        frequency_ghz: 6.0,
        couplings_ghz: [0.0, 0.0],
        levels: 2,
    });
    let a = spectrum_of(&direct).unwrap();
    let b = spectrum_of(&with_idle_bus).unwrap();
    let e = |s: &cqed_core::spectrum::DressedSpectrum, n0, n1| s.qubit_energy(n0, n1).unwrap();
    for (n0, n1) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
        assert!((e(&a, n0, n1) - e(&b, n0, n1)).abs() < 1e-12);
    }
}
