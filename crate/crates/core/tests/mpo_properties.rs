mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use tvmc_core::liouvillian::bloch_density;
use tvmc_core::mpo::{MpoAnsatz, SpinConfiguration};

/// Tensor `A_r^s` as a dense matrix.
fn tensor(a: &MpoAnsatz, site: usize, s: usize) -> Mat {
    let chi = a.chi();
    Mat::from_row_slice(chi, chi, a.site_tensor(site, s))
}

/// `tr Π_j A^{x_j}` by plain matrix multiplication.
fn dense_amplitude(a: &MpoAnsatz, x: &[usize]) -> C64 {
    let mut m = eye(a.chi());
    for (j, &s) in x.iter().enumerate() {
        m = m * tensor(a, j, s);
    }
    m.trace()
}

fn random_config<R: Rng>(n: usize, q: usize, rng: &mut R) -> SpinConfiguration {
    SpinConfiguration((0..n).map(|_| rng.random_range(0..q)).collect())
}

/// Random ansatz with entries of order `1/√χ`, so amplitudes stay O(1).
fn random_ansatz<R: Rng>(n: usize, period: usize, chi: usize, rng: &mut R) -> MpoAnsatz {
    MpoAnsatz::random(n, period, 2, chi, 1.0 / (chi as f64).sqrt(), rng).unwrap()
}

fn rel(a: C64, b: C64) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

fn instance() -> impl Strategy<Value = (u64, usize, usize, usize)> {
    // (seed, N, D, χ) with D dividing N
    (any::<u64>(), 1usize..=6, 1usize..=3, 1usize..=4).prop_map(|(seed, n, dsel, chi)| {
        let divisors: Vec<usize> = (1..=n).filter(|p| n % p == 0).collect();
        (seed, n, divisors[dsel % divisors.len()], chi)
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn amplitude_matches_dense_products((seed, n, period, chi) in instance()) {
        let mut r = rng(seed);
        let a = random_ansatz(n, period, chi, &mut r);
        let x = random_config(n, 4, &mut r);
        let want = dense_amplitude(&a, &x.0);
        prop_assert!(rel(a.amplitude(&x).unwrap(), want) < 1e-12);
    }

    #[test]
    fn partial_products_reproduce_the_amplitude((seed, n, period, chi) in instance()) {
        let mut r = rng(seed);
        let a = random_ansatz(n, period, chi, &mut r);
        let x = random_config(n, 4, &mut r);
        let amp = a.amplitude(&x).unwrap();
        let pp = a.partial_products(&x).unwrap();
        let tr = |m: &[C64]| Mat::from_row_slice(chi, chi, m).trace();
        prop_assert!(rel(tr(pp.left(n)), amp) < 1e-12);
        prop_assert!(rel(tr(pp.right(0)), amp) < 1e-12);
        for j in 0..n {
            let l = Mat::from_row_slice(chi, chi, pp.left(j));
            let rr = Mat::from_row_slice(chi, chi, pp.right(j + 1));
            prop_assert!(rel((l * tensor(&a, j, x.0[j]) * rr).trace(), amp) < 1e-12);
        }
    }

    #[test]
    fn log_derivative_matches_finite_differences((seed, n, period, chi) in instance()) {
        let mut r = rng(seed);
        let a = random_ansatz(n, period, chi, &mut r);
        let x = random_config(n, 4, &mut r);
        let pp = a.partial_products(&x).unwrap();
        let delta = a.log_derivative(&x, &pp).unwrap();
        let h = 1e-6;
        let p0 = a.params().to_vec();
        for k in 0..a.n_params() {
            let mut plus = p0.clone();
            let mut minus = p0.clone();
            plus[k] += h;
            minus[k] -= h;
            let ap = a.with_params(&plus).unwrap().amplitude(&x).unwrap();
            let am = a.with_params(&minus).unwrap().amplitude(&x).unwrap();
            let fd = (ap / am).ln() / (2.0 * h);
            // components for absent local indices are exactly zero on both sides
            let err = (fd - delta.0[k]).norm() / delta.0[k].norm().max(1e-300);
            prop_assert!(err < 1e-5, "component {k}: fd {fd} vs {}", delta.0[k]);
        }
    }

    #[test]
    fn scalar_rescaling((seed, n, chi) in (any::<u64>(), 1usize..=6, 1usize..=3), re in 0.3f64..2.0, im in -1.0f64..1.0) {
        let mut r = rng(seed);
        let a = random_ansatz(n, 1, chi, &mut r);
        let k = c(re, im);
        let b = a.with_params(&a.params().iter().map(|z| z * k).collect::<Vec<_>>()).unwrap();
        let x = random_config(n, 4, &mut r);
        prop_assert!(rel(b.amplitude(&x).unwrap(), a.amplitude(&x).unwrap() * k.powu(n as u32)) < 1e-12);
        let da = a.log_derivative(&x, &a.partial_products(&x).unwrap()).unwrap();
        let db = b.log_derivative(&x, &b.partial_products(&x).unwrap()).unwrap();
        let scale = max_abs(&da.0);
        for (u, v) in da.0.iter().zip(&db.0) {
            prop_assert!((u / k - v).norm() <= 1e-12 * scale.max(1.0) / k.norm());
        }
    }

    #[test]
    fn renormalized_dense_state_has_unit_trace((seed, n, period, chi) in instance()) {
        let mut r = rng(seed);
        let a = random_ansatz(n, period, chi, &mut r).renormalized().unwrap();
        prop_assert!((a.trace() - c(1.0, 0.0)).norm() < 1e-12);
        prop_assert!((a.reconstruct_dense().unwrap().trace() - c(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn dense_reconstruction_matches_amplitudes((seed, n, period, chi) in instance()) {
        prop_assume!(n <= 4);
        let mut r = rng(seed);
        let a = random_ansatz(n, period, chi, &mut r);
        let rho = a.reconstruct_dense().unwrap();
        let dim = 1 << n;
        for row in 0..dim {
            for col in 0..dim {
                let ket: Vec<usize> = (0..n).map(|j| (row >> (n - 1 - j)) & 1).collect();
                let bra: Vec<usize> = (0..n).map(|j| (col >> (n - 1 - j)) & 1).collect();
                let x = SpinConfiguration::from_ket_bra(&ket, &bra, 2);
                prop_assert!((rho[(row, col)] - dense_amplitude(&a, &x.0)).norm() < 1e-12);
            }
        }
        prop_assert!((a.trace() - rho.trace()).norm() < 1e-12 * rho.trace().norm().max(1.0));
    }

    #[test]
    fn checkpoint_round_trip((seed, n, period, chi) in instance()) {
        let a = random_ansatz(n, period, chi, &mut rng(seed));
        let mut buf = Vec::new();
        a.write_checkpoint(&mut buf).unwrap();
        prop_assert_eq!(buf.len(), 8 + 32 + 16 * a.n_params());
        prop_assert_eq!(MpoAnsatz::read_checkpoint(buf.as_slice()).unwrap(), a);
    }
}

#[test]
fn wider_bond_embedding_keeps_every_amplitude() {
    let rho1 = bloch_density(0.3, -0.4, 0.5);
    let narrow = MpoAnsatz::init_product(3, 1, 1, &rho1).unwrap();
    let wide = MpoAnsatz::init_product(3, 1, 4, &rho1).unwrap();
    assert_eq!(narrow.amplitudes_all().unwrap(), wide.amplitudes_all().unwrap());
    assert!((wide.trace() - c(1.0, 0.0)).norm() < 1e-15);
}

#[test]
fn negative_trace_renormalizes_to_one() {
    // χ = 1, N = 2 with tr ρ = -1
    let mut a = MpoAnsatz::init_product(2, 1, 1, &bloch_density(0.0, 0.0, 1.0)).unwrap();
    let p: Vec<C64> = a.params().iter().map(|z| z * c(0.0, 1.0)).collect();
    a.set_params(&p).unwrap();
    assert!((a.trace() + c(1.0, 0.0)).norm() < 1e-15);
    a.renormalize_trace().unwrap();
    assert!((a.trace() - c(1.0, 0.0)).norm() < 1e-12);
}

#[test]
fn random_three_site_trace_matches_dense() {
    let a = random_ansatz(3, 1, 2, &mut rng(99));
    let rho = a.reconstruct_dense().unwrap();
    assert!((a.trace() - rho.trace()).norm() < 1e-12);
}
