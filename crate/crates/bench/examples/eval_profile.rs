//! Wall-clock split of one gradient evaluation into sampling, estimation,
//! moment accumulation and the regularized solve.
//!
//! `cargo run --release -p tvmc-bench --example eval_profile -- 6 8 4000`

use std::time::Instant;

use tvmc_bench::{random_ansatz, tfi_spec};
use tvmc_core::sampler::{MarkovChain, SamplerConfig};
use tvmc_core::Complex64;
use tvmc_core::tdvp::{regularized_solve, ContractionCache, LocalEstimator, MomentAccumulator, RegularizationConfig};

fn main() {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let (n, chi, samples) = (args.first().copied().unwrap_or(6), args.get(1).copied().unwrap_or(8), args.get(2).copied().unwrap_or(4000));
    let spec = tfi_spec(n);
    let ansatz = random_ansatz(n, chi, 1);
    let cfg = SamplerConfig {
        n_samples: samples,
        ..Default::default()
    };
    let mut chain = MarkovChain::new(&ansatz, 7, 0).unwrap();

    let t = Instant::now();
    let batch: Vec<_> = chain.draw_batch(&ansatz, &cfg).collect::<Result<_, _>>().unwrap();
    let sampling = t.elapsed();

    let cache = ContractionCache::new(&spec, &ansatz).unwrap();
    let mut est = LocalEstimator::new(&spec, &ansatz, &cache).unwrap();
    let p = ansatz.n_params();
    let mut deltas = vec![Complex64::new(0.0, 0.0); p * batch.len()];
    let mut lloc = Vec::with_capacity(batch.len());
    let t = Instant::now();
    for (s, d) in batch.iter().zip(deltas.chunks_mut(p)) {
        lloc.push(est.evaluate(s, Some(d)).unwrap());
    }
    let estimation = t.elapsed();

    let t = Instant::now();
    let mut acc = MomentAccumulator::new(p);
    for (d, l) in deltas.chunks(p).zip(&lloc) {
        acc.accumulate(d, *l);
    }
    let m = acc.assemble().unwrap();
    let moments = t.elapsed();

    let t = Instant::now();
    regularized_solve(&m.s, &m.f, &m.force_cov, &RegularizationConfig::default(), m.count).unwrap();
    let solve = t.elapsed();

    println!("N = {n}, chi = {chi}, P = {p}, samples = {samples}");
    for (name, d) in [("sampling", sampling), ("estimator", estimation), ("moments", moments), ("solve", solve)] {
        println!("{name:<10} {:>9.3} ms", d.as_secs_f64() * 1e3);
    }
}
