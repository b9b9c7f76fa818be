mod common;

use common::*;
use proptest::prelude::*;
use rand::Rng;
use tvmc_core::liouvillian::{self, bloch_density, Axis, LindbladianSpec};
use tvmc_core::mpo::{MpoAnsatz, SpinConfiguration};
use tvmc_core::observables::{magnetization, Measurable};
use tvmc_core::oracle::{rk4_evolve, DenseState};
use tvmc_core::sampler::{MarkovChain, Sample, SamplerConfig};
use tvmc_core::tdvp::{
    local_estimator, regularized_solve, ContractionCache, Diagnostics, Engine, EngineConfig, IntegratorConfig,
    LocalEstimator, MomentAccumulator, RegularizationConfig,
};

/// A `LindbladianSpec` as a dense matrix on the interleaved basis, assembled term by
/// term from Kronecker products of the stored site operators.
fn spec_matrix(spec: &LindbladianSpec) -> Mat {
    let n = spec.n_sites;
    let q = spec.local_dim();
    let dim = q.pow(n as u32);
    let mut out = Mat::zeros(dim, dim);
    for idx in 0..dim {
        let x = SpinConfiguration::from_index(idx, n, q);
        out[(idx, idx)] += spec.diagonal.evaluate(&x.0);
    }
    for term in &spec.span_terms {
        let mut per_site: Vec<Mat> = vec![eye(q); n];
        for &(offset, id) in &term.factors {
            let op = &spec.operators[id];
            per_site[(term.anchor + offset) % n] = Mat::from_fn(q, q, |a, b| op.get(a, b));
        }
        let full = per_site.iter().skip(1).fold(per_site[0].clone(), |acc, m| kron(&acc, m));
        out += full * term.coefficient;
    }
    out
}

/// `Σ_y ⟨x|L|y⟩⟨y|ρ⟩ / ⟨x|ρ⟩` for every `x`.
fn enumerated_estimator(spec: &LindbladianSpec, a: &MpoAnsatz) -> Vec<C64> {
    let amps = a.amplitudes_all().unwrap();
    let l = spec_matrix(spec);
    let psi = Mat::from_column_slice(amps.len(), 1, &amps);
    let lpsi = l * psi;
    (0..amps.len()).map(|i| lpsi[(i, 0)] / amps[i]).collect()
}

fn random_ansatz<R: Rng>(n: usize, chi: usize, rng: &mut R) -> MpoAnsatz {
    MpoAnsatz::random(n, 1, 2, chi, 1.0 / (chi as f64).sqrt(), rng).unwrap()
}

fn check_estimator(spec: &LindbladianSpec, a: &MpoAnsatz) -> Result<(), TestCaseError> {
    let want = enumerated_estimator(spec, a);
    let cache = ContractionCache::new(spec, a).unwrap();
    let mut est = LocalEstimator::new(spec, a, &cache).unwrap();
    for (idx, w) in want.iter().enumerate() {
        let x = SpinConfiguration::from_index(idx, spec.n_sites, 4);
        let got = est.evaluate(&Sample::new(a, x).unwrap(), None).unwrap();
        prop_assert!((got - w).norm() <= 1e-10 * w.norm().max(1.0), "x = {idx}: {got} vs {w}");
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn estimator_matches_enumeration_for_model_specs(seed in any::<u64>(), chi in 1usize..=3) {
        let mut r = rng(seed);
        let p = random_model(&mut r, 5);
        let a = MpoAnsatz::random(p.lattice.n_sites(), p.lattice.period(), 2, chi, 1.0 / (chi as f64).sqrt(), &mut r).unwrap();
        check_estimator(&liouvillian::build(&p).unwrap(), &a)?;
    }

    #[test]
    fn estimator_matches_enumeration_for_random_terms(seed in any::<u64>(), n in 1usize..=5, chi in 1usize..=3) {
        let mut r = rng(seed);
        let spec = random_spec(n, &mut r);
        check_estimator(&spec, &random_ansatz(n, chi, &mut r))?;
    }

    #[test]
    fn diagonal_only_estimator_ignores_the_ansatz(seed in any::<u64>(), n in 2usize..=6) {
        let mut r = rng(seed);
        let mut p = random_model(&mut r, n);
        p.h = 0.0;
        p.gamma = 0.0;
        p.kind = liouvillian::ModelKind::Tfi;
        p.couplings.iter_mut().for_each(|c| c.j = liouvillian::CouplingStrength::Ising(0.7));
        let spec = liouvillian::build(&p).unwrap();
        prop_assert!(spec.span_terms.is_empty());
        let nn = p.lattice.n_sites();
        for chi in 1..=3 {
            let a = MpoAnsatz::random(nn, p.lattice.period(), 2, chi, 1.0, &mut r).unwrap();
            let x = SpinConfiguration((0..nn).map(|_| r.random_range(0..4)).collect());
            let got = local_estimator(&spec, &a, &Sample::new(&a, x.clone()).unwrap()).unwrap();
            prop_assert_eq!(got, spec.diagonal.evaluate(&x.0));
        }
    }

    #[test]
    fn sampled_metric_is_psd_and_merge_is_additive(seed in any::<u64>(), n in 2usize..=5, chi in 1usize..=3) {
        let mut r = rng(seed);
        let p = random_model(&mut r, n);
        let nn = p.lattice.n_sites();
        let a = MpoAnsatz::random(nn, p.lattice.period(), 2, chi, 1.0 / (chi as f64).sqrt(), &mut r).unwrap();
        let spec = liouvillian::build(&p).unwrap();
        let cache = ContractionCache::new(&spec, &a).unwrap();
        let mut est = LocalEstimator::new(&spec, &a, &cache).unwrap();
        let cfg = SamplerConfig { n_samples: 300, sweeps_between: 1, burn_in: 2 };
        let mut chain = MarkovChain::new(&a, seed, 0).unwrap();
        let mut whole = MomentAccumulator::new(a.n_params());
        let mut parts = [MomentAccumulator::new(a.n_params()), MomentAccumulator::new(a.n_params())];
        let mut delta = vec![c(0.0, 0.0); a.n_params()];
        for (k, s) in chain.draw_batch(&a, &cfg).enumerate() {
            let l = est.evaluate(&s.unwrap(), Some(&mut delta)).unwrap();
            whole.accumulate(&delta, l);
            parts[usize::from(k % 3 == 0)].accumulate(&delta, l);
        }
        let [mut merged, other] = parts;
        merged.merge(other);
        let m1 = whole.assemble().unwrap();
        let m2 = merged.assemble().unwrap();
        let scale = m1.s.norm().max(1.0);
        prop_assert!((&m1.s - &m2.s).norm() <= 1e-12 * scale);
        prop_assert!(max_abs_diff(&m1.f, &m2.f) <= 1e-12 * max_abs(&m1.f).max(1.0));
        prop_assert!((m1.l2 - m2.l2).abs() <= 1e-12 * m1.l2.max(1.0));
        prop_assert!((&m1.s - m1.s.adjoint()).norm() == 0.0);
        let eig = m1.s.clone().symmetric_eigenvalues();
        let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
        prop_assert!(min >= -1e-12 * scale, "{min}");
    }
}

/// Full-summation moments at N = 2, χ = 1 against `⟨∂_iρ|∂_jρ⟩ / Z`. With
/// scalar tensors `⟨x|ρ⟩ = c_{x_0} c_{x_1}`, so the derivatives follow from
/// the product rule.
#[test]
fn exact_metric_matches_dense_inner_products() {
    let mut r = rng(21);
    let a = random_ansatz(2, 1, &mut r);
    let amps = a.amplitudes_all().unwrap();
    let z: f64 = amps.iter().map(|x| x.norm_sqr()).sum();
    let p = a.n_params();
    let mut acc = MomentAccumulator::new(p);
    for (idx, amp) in amps.iter().enumerate() {
        let x = SpinConfiguration::from_index(idx, 2, 4);
        let delta = a.log_derivative(&x, &a.partial_products(&x).unwrap()).unwrap();
        // each of the 16 entries enters with weight p(x), restored by count
        let w = (16.0 * amp.norm_sqr() / z).sqrt();
        let scaled: Vec<C64> = delta.0.iter().map(|d| d * w).collect();
        acc.accumulate(&scaled, c(0.0, 0.0));
    }
    let s = acc.assemble().unwrap().s;
    let cs = a.params();
    let grad = |k: usize, idx: usize| -> C64 {
        let (x0, x1) = (idx / 4, idx % 4);
        let mut g = c(0.0, 0.0);
        if x0 == k {
            g += cs[x1];
        }
        if x1 == k {
            g += cs[x0];
        }
        g
    };
    for i in 0..p {
        for j in 0..p {
            let want: C64 = (0..16).map(|idx| grad(i, idx).conj() * grad(j, idx)).sum::<C64>() / z;
            assert!((s[(i, j)] - want).norm() < 1e-10 * want.norm().max(1.0), "{i},{j}");
        }
    }
}

#[test]
fn soft_cutoff_closed_form() {
    let s = Mat::from_diagonal(&tvmc_core::DMatrix::from_column_slice(2, 1, &[c(1.0, 0.0), c(1e-12, 0.0)]).column(0));
    let f = vec![c(1.0, 0.0), c(1e-6, 0.0)];
    let cfg = RegularizationConfig {
        eps_shift: 1e-8,
        eps_snr: 1e-8,
    };
    let quiet = regularized_solve(&s, &f, &Mat::zeros(2, 2), &cfg, 1000).unwrap();
    let undamped = 1e-6 / (1e-12 + 1e-8);
    assert!(quiet.adot[1].norm() <= 100.0);
    assert!((quiet.adot[1].re - undamped).abs() < 1e-9 * undamped);
    // a noisy second mode: SNR = 1e-6 / sqrt(var / n)
    let (var, n) = (1e6, 1000usize);
    let cov = Mat::from_diagonal(&tvmc_core::DMatrix::from_column_slice(2, 1, &[c(0.0, 0.0), c(var, 0.0)]).column(0));
    let cfg = RegularizationConfig {
        eps_shift: 1e-8,
        eps_snr: 1e-4,
    };
    let noisy = regularized_solve(&s, &f, &cov, &cfg, n).unwrap();
    let snr = 1e-6 / (var / n as f64 + 1e-30).sqrt();
    let damped = undamped / (1.0 + (1e-4 / snr).powi(6));
    assert!((noisy.adot[1].re - damped).abs() < 1e-9 * undamped);
    assert!(noisy.adot[1].norm() < 1e-6 * undamped);
    assert!((noisy.adot[0].re - 1.0 / (1.0 + 1e-8)).abs() < 1e-12);
}

fn engine_config(n_samples: usize, seed: u64) -> EngineConfig {
    EngineConfig {
        sampler: SamplerConfig {
            n_samples,
            ..Default::default()
        },
        regularization: RegularizationConfig::default(),
        integrator: IntegratorConfig::default(),
        workers: 1,
        seed,
    }
}

#[test]
fn zero_duration_observes_once() {
    let p = tfi_ring(3, &[(0.5, f64::INFINITY)], 1.0, 1.0);
    let a = MpoAnsatz::init_product(3, 1, 2, &bloch_density(0.0, -1.0, 0.0)).unwrap();
    let mut engine = Engine::new(liouvillian::build(&p).unwrap(), a, engine_config(50, 0)).unwrap();
    let mut seen = Vec::new();
    let mut obs = |t: f64, _: &MpoAnsatz, d: &Diagnostics| {
        seen.push((t, d.step));
        Ok(())
    };
    engine.run_to_time(0.0, &mut obs).unwrap();
    assert_eq!(seen, vec![(0.0, 0)]);
}

/// Two sites at χ = 4 can represent any density matrix, so the variational
/// flow must follow the exact one up to sampling noise.
#[test]
fn two_site_dynamics_follow_the_exact_flow() {
    let p = tfi_ring(2, &[(0.5, f64::INFINITY)], 1.0, 1.0);
    let spec = liouvillian::build(&p).unwrap();
    let rho1 = bloch_density(0.0, -1.0, 0.0);
    let a = MpoAnsatz::init_product(2, 1, 4, &rho1).unwrap();
    let mut cfg = engine_config(2000, 4);
    cfg.regularization.eps_shift = 1e-6;
    let mut engine = Engine::new(spec.clone(), a, cfg).unwrap();
    let mut traj = Vec::new();
    let mut obs = |t: f64, a: &MpoAnsatz, d: &Diagnostics| {
        assert!(d.trace_error <= 1e-12, "trace error {}", d.trace_error);
        traj.push((t, magnetization(a, Axis::Y)?.value));
        Ok(())
    };
    engine.run_to_time(1.0, &mut obs).unwrap();
    assert!(engine.state().worst_min_eig_s >= -1e-12);
    let mut exact = Vec::new();
    rk4_evolve(&spec, &DenseState::product(2, &rho1).unwrap(), 1.0, 1e-3, |t, s| {
        exact.push((t, s.expect_product(&[(0, &sy())])?.re));
        Ok(())
    })
    .unwrap();
    for (t, v) in traj {
        let k = ((t / 1e-3).round() as usize).min(exact.len() - 1);
        assert!((v - exact[k].1).abs() < 0.02, "t = {t}: {v} vs {}", exact[k].1);
    }
}
