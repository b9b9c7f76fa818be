//! Reference implementations for the integration tests, written against
//! textbook definitions rather than the crate internals: Hamiltonians and
//! Lindbladians assembled from explicit Kronecker products, and a per-site
//! interleaved vectorization done by hand.

#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tvmc_core::lattice::{kac_factor, Lattice};
use tvmc_core::liouvillian::{
    Coupling, CouplingStrength, JumpKind, ModelKind, ModelParams, PairCounting, SignConvention,
};
use tvmc_core::liouvillian::{LindbladianSpec, SiteOperator, SpanTerm};
pub use tvmc_core::{Complex64 as C64, DMatrix};

pub type Mat = DMatrix<C64>;

pub fn c(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sx() -> Mat {
    Mat::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
}

pub fn sy() -> Mat {
    Mat::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
}

pub fn sz() -> Mat {
    Mat::from_row_slice(2, 2, &[c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)])
}

pub fn eye(n: usize) -> Mat {
    Mat::identity(n, n)
}

pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ra, ca) = a.shape();
    let (rb, cb) = b.shape();
    Mat::from_fn(ra * rb, ca * cb, |i, j| a[(i / rb, j / cb)] * b[(i % rb, j % cb)])
}

/// `op` on `site` of an `n`-spin register, site 0 the most significant.
pub fn on_site(op: &Mat, site: usize, n: usize) -> Mat {
    let mut out = eye(1);
    for k in 0..n {
        out = if k == site { kron(&out, op) } else { kron(&out, &eye(2)) };
    }
    out
}

fn weight(dist: f64, alpha: f64) -> f64 {
    if dist == 0.0 {
        0.0
    } else if alpha.is_infinite() {
        if (dist - 1.0).abs() < 1e-9 {
            1.0
        } else {
            0.0
        }
    } else {
        dist.powf(-alpha)
    }
}

pub fn hamiltonian(p: &ModelParams) -> Mat {
    let n = p.lattice.n_sites();
    let dim = 1 << n;
    let sign = match p.sign {
        SignConvention::Negative => -1.0,
        SignConvention::Positive => 1.0,
    };
    let count = match p.pair_counting {
        PairCounting::Unordered => 1.0,
        PairCounting::Ordered => 2.0,
    };
    let paulis = [sx(), sy(), sz()];
    let mut h = Mat::zeros(dim, dim);
    for i in 0..n {
        for j in i + 1..n {
            let dist = p.lattice.distance(i, j);
            for cp in &p.couplings {
                let k = if p.kac { kac_factor(cp.alpha, &p.lattice) } else { 1.0 };
                let w = sign * count * weight(dist, cp.alpha) / k;
                let js = match cp.j {
                    CouplingStrength::Ising(j) => [0.0, 0.0, j],
                    CouplingStrength::Anisotropic(v) => v,
                };
                for (b, jb) in js.iter().enumerate() {
                    // flip-flop terms of the XYZ model are cut at r_trunc
                    if b < 2 && dist > p.r_trunc as f64 + 1e-9 {
                        continue;
                    }
                    if *jb != 0.0 && w != 0.0 {
                        h += on_site(&paulis[b], i, n) * on_site(&paulis[b], j, n) * c(jb * w, 0.0);
                    }
                }
            }
        }
    }
    let field = match p.kind {
        ModelKind::Tfi => sx(),
        ModelKind::Xyz => sz(),
    };
    for i in 0..n {
        h += on_site(&field, i, n) * c(sign * p.h, 0.0);
    }
    h
}

pub fn jump(kind: JumpKind, gamma: f64) -> Mat {
    let a = match kind {
        JumpKind::SpinDecayXy => sx(),
        JumpKind::ZMinusY => sz(),
    };
    (a - sy() * c(0., 1.)) * c(gamma.sqrt() / 2.0, 0.0)
}

pub fn jumps(p: &ModelParams) -> Vec<Mat> {
    let n = p.lattice.n_sites();
    let g = jump(p.jump, p.gamma);
    (0..n).map(|i| on_site(&g, i, n)).collect()
}

/// `-i[H, ρ] + Σ_k Γ ρ Γ† - ½{Γ†Γ, ρ}` on a density matrix.
pub fn lindblad_rhs(h: &Mat, ls: &[Mat], rho: &Mat) -> Mat {
    let mut out = (h * rho - rho * h) * c(0., -1.);
    for l in ls {
        let ld = l.adjoint();
        let ll = &ld * l;
        out += l * rho * &ld - (&ll * rho + rho * &ll) * c(0.5, 0.0);
    }
    out
}

/// Superoperator in the global row-major vectorization `vec(ρ)[r·D + c]`:
/// `-i(H⊗I - I⊗Hᵀ) + Σ Γ⊗Γ̄ - ½(Γ†Γ⊗I + I⊗(Γ†Γ)ᵀ)`.
pub fn superoperator(h: &Mat, ls: &[Mat]) -> Mat {
    let dim = h.nrows();
    let id = eye(dim);
    let mut out = (kron(h, &id) - kron(&id, &h.transpose())) * c(0., -1.);
    for l in ls {
        let ll = l.adjoint() * l;
        out += kron(l, &l.conjugate()) - (kron(&ll, &id) + kron(&id, &ll.transpose())) * c(0.5, 0.0);
    }
    out
}

/// Position of the interleaved index `Σ_j (σ_j·2 + σ'_j) 4^{N-1-j}` in the
/// global row-major vectorization.
pub fn interleaved_to_global(idx: usize, n: usize) -> usize {
    let (mut row, mut col) = (0, 0);
    for j in 0..n {
        let x = (idx >> (2 * (n - 1 - j))) & 3;
        row = (row << 1) | (x >> 1);
        col = (col << 1) | (x & 1);
    }
    (row << n) | col
}

pub fn unvec(v: &[C64], n: usize) -> Mat {
    let dim = 1 << n;
    let mut m = Mat::zeros(dim, dim);
    for (idx, z) in v.iter().enumerate() {
        let g = interleaved_to_global(idx, n);
        m[(g >> n, g & (dim - 1))] = *z;
    }
    m
}

pub fn vec_of(m: &Mat, n: usize) -> Vec<C64> {
    let dim = 1 << n;
    (0..dim * dim)
        .map(|idx| {
            let g = interleaved_to_global(idx, n);
            m[(g >> n, g & (dim - 1))]
        })
        .collect()
}

pub fn random_vec<R: Rng>(len: usize, rng: &mut R) -> Vec<C64> {
    (0..len).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
}

pub fn random_matrix<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Mat {
    Mat::from_fn(rows, cols, |_, _| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
}

/// Random density matrix `A A† / tr(A A†)`.
pub fn random_density<R: Rng>(dim: usize, rng: &mut R) -> Mat {
    let a = random_matrix(dim, dim, rng);
    let rho = &a * a.adjoint();
    let tr = rho.trace();
    rho / tr
}

pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

pub fn max_abs(a: &[C64]) -> f64 {
    a.iter().map(|x| x.norm()).fold(0.0, f64::max)
}

pub fn tfi_ring(n: usize, couplings: &[(f64, f64)], h: f64, gamma: f64) -> ModelParams {
    ModelParams {
        kind: ModelKind::Tfi,
        lattice: Lattice::Ring(n),
        couplings: couplings
            .iter()
            .map(|&(j, alpha)| Coupling {
                j: CouplingStrength::Ising(j),
                alpha,
            })
            .collect(),
        h,
        gamma,
        jump: JumpKind::SpinDecayXy,
        sign: SignConvention::Positive,
        kac: false,
        r_trunc: 4,
        pair_counting: PairCounting::Unordered,
    }
}

/// A random model of either kind on at most `max_sites` sites, mixing every
/// switch the builders expose.
pub fn random_model<R: Rng>(rng: &mut R, max_sites: usize) -> ModelParams {
    let kind = if rng.random_bool(0.5) { ModelKind::Tfi } else { ModelKind::Xyz };
    let lattice = if max_sites >= 4 && rng.random_bool(0.2) {
        Lattice::Torus([2, 2])
    } else {
        let lo = if kind == ModelKind::Xyz { 3 } else { 2 };
        Lattice::Ring(rng.random_range(lo..=max_sites.max(lo)))
    };
    let n = lattice.n_sites();
    let n_couplings = rng.random_range(0..=2);
    let couplings = (0..n_couplings)
        .map(|_| {
            let alpha = if rng.random_bool(0.3) { f64::INFINITY } else { rng.random_range(0.5..4.0) };
            let j = match kind {
                ModelKind::Tfi => CouplingStrength::Ising(rng.random_range(-1.5..1.5)),
                ModelKind::Xyz => CouplingStrength::Anisotropic([
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                    rng.random_range(-1.0..1.0),
                ]),
            };
            Coupling { j, alpha }
        })
        .collect();
    ModelParams {
        kind,
        lattice,
        couplings,
        h: rng.random_range(-1.5..1.5),
        gamma: rng.random_range(0.0..2.0),
        jump: if rng.random_bool(0.5) { JumpKind::SpinDecayXy } else { JumpKind::ZMinusY },
        sign: if rng.random_bool(0.5) { SignConvention::Negative } else { SignConvention::Positive },
        kac: rng.random_bool(0.5),
        r_trunc: rng.random_range(1..n.max(2)),
        pair_counting: if rng.random_bool(0.5) { PairCounting::Unordered } else { PairCounting::Ordered },
    }
}

/// A `LindbladianSpec` with random site operators spread over random windows, on top of a
/// random diagonal.
pub fn random_spec<R: Rng>(n: usize, rng: &mut R) -> LindbladianSpec {
    let mut spec = LindbladianSpec::new(n, 2, 1);
    for i in 0..n {
        for j in i + 1..n {
            spec.diagonal.add_coupling(i, j, rng.random_range(-1.0..1.0));
        }
        spec.diagonal.site_diag[i] = random_vec(4, rng);
    }
    for _ in 0..rng.random_range(1..5) {
        let span = rng.random_range(1..=n);
        let mut offsets = vec![0];
        offsets.extend((1..span).filter(|_| rng.random_bool(0.5)));
        if span > 1 && *offsets.last().unwrap() != span - 1 {
            offsets.push(span - 1);
        }
        let factors = offsets
            .into_iter()
            .map(|o| {
                let op = SiteOperator::from_dense(4, random_vec(16, rng)).unwrap();
                (o, spec.add_operator(op))
            })
            .collect();
        spec.span_terms.push(SpanTerm {
            anchor: rng.random_range(0..n),
            factors,
            coefficient: c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)),
        });
    }
    spec.validate().unwrap();
    spec
}
