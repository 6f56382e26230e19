use num_complex::Complex64;
use proptest::prelude::*;
use twoport_core::count::count_canonical;
use twoport_core::diffsim::{loss_spectrum, CandidateConfig};
use twoport_core::enumerate::{enumerate_canonical, random_canonical};
use twoport_core::sim::{chain_matrix, default_grid, simulate, FrequencyGrid};
use twoport_core::spectrum_io;
use twoport_core::{Alignment, Component, ComponentType, Configuration, CurrentProbe, Setup, Termination};

fn rel(a: Complex64, b: Complex64) -> f64 {
    (a - b).norm() / a.norm().max(b.norm()).max(1e-300)
}

fn component() -> impl Strategy<Value = Component> {
    (0usize..2, 0usize..3, -7.0f64..3.0).prop_map(|(a, t, e)| {
        Component::new(
            Alignment::from_index(a).unwrap(),
            ComponentType::from_index(t).unwrap(),
            10f64.powf(e),
        )
        .unwrap()
    })
}

fn chain(max: usize) -> impl Strategy<Value = Configuration> {
    prop::collection::vec(component(), 1..=max).prop_map(|c| Configuration::new(c).unwrap())
}

fn resistor_chain(max: usize) -> impl Strategy<Value = Configuration> {
    prop::collection::vec((0usize..2, -2.0f64..3.0), 1..=max).prop_map(|c| {
        Configuration::new(
            c.into_iter()
                .map(|(a, e)| {
                    Component::new(Alignment::from_index(a).unwrap(), ComponentType::Resistor, 10f64.powf(e)).unwrap()
                })
                .collect(),
        )
        .unwrap()
    })
}

fn sparse_grid() -> FrequencyGrid {
    FrequencyGrid::log_spaced(1.0, 1e6, 32).unwrap()
}

#[test]
fn empty_chain_counts_once() {
    for (n_c, n_v) in [(1, 1), (2, 2), (3, 5)] {
        assert_eq!(count_canonical(0, n_c, n_v).unwrap().count, 1u32.into());
    }
}

#[test]
fn counts_match_enumeration() {
    for (n_c, n_v) in [(1, 1), (2, 2), (3, 5)] {
        for n in 1..=4 {
            let listed = enumerate_canonical(n, n_c, n_v, u64::MAX).unwrap().count();
            let counted = count_canonical(n as i64, n_c, n_v).unwrap().count;
            assert_eq!(counted, listed.into(), "n={n} n_c={n_c} n_v={n_v}");
        }
    }
}

#[test]
fn enumeration_is_canonical_and_distinct() {
    let grid = twoport_core::ValueGrid::default();
    let mut seen = std::collections::HashSet::new();
    for c in enumerate_canonical(3, 3, 5, u64::MAX).unwrap() {
        assert!(c.is_canonical());
        assert!(seen.insert(c.canonical_key(&grid).unwrap()));
    }
    assert_eq!(seen.len(), 15310);
}

#[test]
fn symmetry_over_random_circuits() {
    let grid = default_grid();
    for seed in 0..100u64 {
        // shuffle each run of a canonical draw to get a non-canonical chain
        let canon = random_canonical(1 + (seed % 6) as usize, 3, 5, seed).unwrap();
        let mut comps = canon.components().to_vec();
        for r in canon.runs() {
            comps[r].reverse();
        }
        let x = Configuration::new(comps).unwrap();
        for setup in [Setup::default(), Setup::open()] {
            let a = simulate(&x, &grid, &setup).unwrap();
            let b = simulate(&x.canonicalize(), &grid, &setup).unwrap();
            for k in 0..grid.len() {
                assert!(rel(a.v[k], b.v[k]) <= 1e-9 && rel(a.i[k], b.i[k]) <= 1e-9, "{x} at {k}");
            }
        }
    }
}

#[test]
fn resonant_chain_can_exceed_unit_gain() {
    // a series inductor into a shunt capacitor across 1 ohm peaks at R sqrt(C/L) ~ 31
    let c: Configuration = "S:L:1u;P:C:1m".parse().unwrap();
    let s = simulate(&c, &default_grid(), &Setup::load(1.0)).unwrap();
    let peak = s.v.iter().map(|v| v.norm()).fold(0.0, f64::max);
    assert!(peak > 20.0, "{peak}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn canonicalize_is_idempotent(x in chain(8)) {
        let c = x.canonicalize();
        prop_assert!(c.is_canonical());
        prop_assert_eq!(c.canonicalize(), c.clone());
        prop_assert!(x.equivalent(&c));
    }

    #[test]
    fn permuting_a_run_keeps_the_canonical_form(x in chain(8), rot in 0usize..8) {
        let mut comps = x.components().to_vec();
        for r in x.runs() {
            let n = r.len();
            comps[r].rotate_left(rot % n);
        }
        let y = Configuration::new(comps).unwrap();
        prop_assert_eq!(y.canonicalize(), x.canonicalize());
    }

    #[test]
    fn spectrum_survives_canonicalization(x in chain(6)) {
        let grid = sparse_grid();
        for setup in [Setup::default(), Setup::open()] {
            let a = simulate(&x, &grid, &setup).unwrap();
            let b = simulate(&x.canonicalize(), &grid, &setup).unwrap();
            for k in 0..grid.len() {
                prop_assert!(rel(a.v[k], b.v[k]) <= 1e-9);
                prop_assert!(rel(a.i[k], b.i[k]) <= 1e-9);
            }
        }
    }

    #[test]
    fn cascade_is_associative(x in chain(4), y in chain(4), f in 0.0f64..6.0) {
        let f = 10f64.powf(f);
        let mut joined = x.components().to_vec();
        joined.extend_from_slice(y.components());
        let xy = chain_matrix(&Configuration::new(joined).unwrap(), f).unwrap().to_complex();
        let p = chain_matrix(&y, f).unwrap().mul(&chain_matrix(&x, f).unwrap()).to_complex();
        let scale = xy.iter().flatten().map(|z| z.norm()).fold(0.0, f64::max);
        for r in 0..2 {
            for c in 0..2 {
                prop_assert!((xy[r][c] - p[r][c]).norm() <= 1e-12 * scale);
            }
        }
    }

    #[test]
    fn chain_determinant_is_one(x in chain(6), f in 0.0f64..6.0) {
        let m = chain_matrix(&x, 10f64.powf(f)).unwrap().to_complex();
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let scale = (m[0][0] * m[1][1]).norm().max((m[0][1] * m[1][0]).norm()).max(1.0);
        prop_assert!((det - 1.0).norm() <= 1e-12 * scale);
    }

    #[test]
    fn resistive_ladders_attenuate(x in resistor_chain(8), rl in -2.0f64..3.0) {
        let s = simulate(&x, &sparse_grid(), &Setup::load(10f64.powf(rl))).unwrap();
        prop_assert!(s.v.iter().all(|v| v.norm() <= 1.0 + 1e-12));
    }

    #[test]
    fn load_never_receives_more_than_the_source_delivers(x in chain(6), rl in -2.0f64..3.0) {
        let zl = 10f64.powf(rl);
        let setup = Setup::new(Termination::Load(zl), CurrentProbe::Input);
        let s = simulate(&x, &sparse_grid(), &setup).unwrap();
        for (v, i) in s.v.iter().zip(&s.i) {
            // unit source voltage: delivered power is Re(I_in)
            let p_out = v.norm_sqr() / zl;
            prop_assert!(p_out <= i.re + 1e-9 * i.norm().max(p_out), "{p_out} > {}", i.re);
        }
    }

    #[test]
    fn loss_ignores_run_order(x in chain(5)) {
        let grid = sparse_grid();
        let setup = Setup::default();
        let target = simulate(&random_canonical(x.len(), 3, 5, 7).unwrap(), &grid, &setup).unwrap();
        let a = loss_spectrum(&CandidateConfig::from_config(&x), &target, &setup).unwrap();
        let b = loss_spectrum(&CandidateConfig::from_config(&x.canonicalize()), &target, &setup).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1e-300));
    }

    #[test]
    fn spectrum_files_round_trip(x in chain(5)) {
        let s = simulate(&x, &sparse_grid(), &Setup::default()).unwrap();
        let mut csv = Vec::new();
        spectrum_io::write_csv(&s, &mut csv).unwrap();
        prop_assert_eq!(spectrum_io::read_csv(&csv[..]).unwrap(), s.clone());
        let mut bin = Vec::new();
        spectrum_io::write_binary(&s, &mut bin).unwrap();
        prop_assert_eq!(spectrum_io::read_binary(&bin[..]).unwrap(), s);
    }

    #[test]
    fn literals_round_trip(x in chain(6)) {
        let text = x.to_string();
        let back: Configuration = text.parse().unwrap();
        prop_assert_eq!(back.len(), x.len());
        for (a, b) in back.components().iter().zip(x.components()) {
            prop_assert!(a.same_kind(b));
            prop_assert!((a.value - b.value).abs() <= 1e-12 * b.value);
        }
    }
}
