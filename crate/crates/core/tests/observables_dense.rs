mod common;

use common::*;
use proptest::prelude::*;
use tvmc_core::liouvillian::{self, bloch_density, Axis};
use tvmc_core::mpo::MpoAnsatz;
use tvmc_core::observables::{
    correlator, magnetization, min_eigenvalue, purity, renyi2, structure_factor, Measurable,
};
use tvmc_core::oracle::{DenseLindbladian, DenseState};
use tvmc_core::runner::exact_l2;

fn pauli(axis: Axis) -> Mat {
    match axis {
        Axis::X => sx(),
        Axis::Y => sy(),
        Axis::Z => sz(),
    }
}

/// `tr(O_i O_j ρ)` straight from the Kronecker products.
fn dense_two_point(rho: &Mat, op: &Mat, i: usize, j: usize, n: usize) -> C64 {
    (on_site(op, i, n) * on_site(op, j, n) * rho).trace()
}

fn dense_one_point(rho: &Mat, op: &Mat, i: usize, n: usize) -> C64 {
    (on_site(op, i, n) * rho).trace()
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-10 * b.abs().max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn ansatz_observables_match_dense(seed in any::<u64>(), n in 2usize..=4, chi in 1usize..=3) {
        let mut r = rng(seed);
        let a = MpoAnsatz::random(n, 1, 2, chi, 1.0 / (chi as f64).sqrt(), &mut r)
            .unwrap()
            .renormalized()
            .unwrap();
        let rho = a.reconstruct_dense().unwrap();
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            let op = pauli(axis);
            let m: C64 = (0..n).map(|i| dense_one_point(&rho, &op, i, n)).sum::<C64>() / n as f64;
            prop_assert!(close(magnetization(&a, axis).unwrap().value, m.re));
            for d in 1..=n / 2 {
                for connected in [false, true] {
                    let mut want = c(0.0, 0.0);
                    for i in 0..n {
                        let j = (i + d) % n;
                        want += dense_two_point(&rho, &op, i, j, n);
                        if connected {
                            want -= dense_one_point(&rho, &op, i, n) * dense_one_point(&rho, &op, j, n);
                        }
                    }
                    want /= n as f64;
                    prop_assert!(close(correlator(&a, axis, d, connected).unwrap().value, want.re));
                }
            }
            for k in 0..n {
                let q = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
                let mut want = c(0.0, 0.0);
                for i in 0..n {
                    for j in 0..n {
                        want += C64::from_polar(1.0, q * (i as f64 - j as f64)) * dense_two_point(&rho, &op, i, j, n);
                    }
                }
                want /= (n * n) as f64;
                prop_assert!(close(structure_factor(&a, axis, k).unwrap().value, want.re));
            }
        }
        let p = (&rho * &rho).trace();
        prop_assert!(close(purity(&a).unwrap().value, p.re));
        if p.re > 0.0 {
            prop_assert!(close(renyi2(&a).unwrap().value, -p.re.ln()));
        }
        let herm = (&rho + rho.adjoint()) * c(0.5, 0.0);
        let lo = herm.symmetric_eigen().eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(close(min_eigenvalue(&a).unwrap().value, lo));
    }

    #[test]
    fn structure_factor_is_even_and_nonnegative(seed in any::<u64>(), n in 2usize..=4) {
        let state = DenseState::from_matrix(n, 2, &random_density(1 << n, &mut rng(seed))).unwrap();
        for axis in [Axis::X, Axis::Y, Axis::Z] {
            for k in 0..n {
                let s = structure_factor(&state, axis, k).unwrap().value;
                let mirror = structure_factor(&state, axis, (n - k) % n).unwrap().value;
                prop_assert!(s >= -1e-12);
                prop_assert!((s - mirror).abs() < 1e-12);
            }
        }
    }
}

fn diagonal_mixture(n: usize, kets: &[usize]) -> DenseState {
    let dim = 1 << n;
    let mut rho = Mat::zeros(dim, dim);
    for &k in kets {
        rho[(k, k)] = c(1.0 / kets.len() as f64, 0.0);
    }
    DenseState::from_matrix(n, 2, &rho).unwrap()
}

#[test]
fn ghz_diagonal_connected_correlator() {
    let ghz = diagonal_mixture(4, &[0b0000, 0b1111]);
    assert!((correlator(&ghz, Axis::Z, 1, true).unwrap().value - 1.0).abs() < 1e-14);
    assert!(magnetization(&ghz, Axis::Z).unwrap().value.abs() < 1e-14);
}

#[test]
fn neel_mixture_structure_factor() {
    let neel = diagonal_mixture(4, &[0b0101, 0b1010]);
    assert!((structure_factor(&neel, Axis::Z, 2).unwrap().value - 1.0).abs() < 1e-14);
    assert!(structure_factor(&neel, Axis::Z, 0).unwrap().value.abs() < 1e-14);
}

#[test]
fn dense_and_ansatz_agree_on_a_product_state() {
    let rho1 = bloch_density(0.2, -0.6, 0.3);
    let a = MpoAnsatz::init_product(3, 1, 2, &rho1).unwrap();
    let d = DenseState::product(3, &rho1).unwrap();
    assert!((a.purity().unwrap() - d.purity().unwrap()).norm() < 1e-14);
    // tr ρ₁² = (1 + |r|²)/2 per site
    assert!((d.purity().unwrap().re - 0.745f64.powi(3)).abs() < 1e-14);
    assert!((correlator(&a, Axis::Y, 1, false).unwrap().value - 0.36).abs() < 1e-14);
}

#[test]
fn cost_vanishes_only_at_the_steady_state() {
    let p = tfi_ring(2, &[(0.7, f64::INFINITY)], 0.9, 1.0);
    let spec = liouvillian::build(&p).unwrap();
    let lind = DenseLindbladian::new(&spec).unwrap();
    let mut scratch = [vec![], vec![]];

    let sup = superoperator(&hamiltonian(&p), &jumps(&p));
    let svd = sup.svd(false, true);
    let vt = svd.v_t.unwrap();
    let k = (0..svd.singular_values.len())
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .unwrap();
    let rho = Mat::from_fn(4, 4, |i, j| vt[(k, i * 4 + j)].conj());
    let steady = DenseState::from_matrix(2, 2, &rho).unwrap();
    assert!(exact_l2(&lind, &steady, &mut scratch) < 1e-20);

    let product = DenseState::product(2, &bloch_density(0.0, -1.0, 0.0)).unwrap();
    assert!(exact_l2(&lind, &product, &mut scratch) > 1e-3);
}
