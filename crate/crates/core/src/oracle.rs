//! Exact references: matrix-free dense Lindblad evolution for small systems
//! and the mean-field equations of motion.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouvillian::{JumpKind, LindbladianSpec, ModelKind, ModelParams, SiteOperator};
use crate::linalg::ZERO;
use crate::mpo::{vectorized_to_dense, MpoAnsatz, SpinConfiguration};

/// Largest site count of a dense state (`4⁸` amplitudes).
pub const MAX_ORACLE_SITES: usize = 8;

fn check_capacity(n: usize) -> Result<()> {
    if n > MAX_ORACLE_SITES {
        return Err(Error::Capacity {
            what: "sites for dense evolution",
            requested: n,
            limit: MAX_ORACLE_SITES,
        });
    }
    Ok(())
}

/// Vectorized density matrix in the same site-interleaved layout as the
/// ansatz amplitudes: index `Σ_j x_j (d²)^{N-1-j}`.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseState {
    pub n_sites: usize,
    pub phys_dim: usize,
    pub vec: Vec<C64>,
}

impl DenseState {
    pub fn new(n_sites: usize, phys_dim: usize, vec: Vec<C64>) -> Result<Self> {
        check_capacity(n_sites)?;
        if vec.len() != (phys_dim * phys_dim).pow(n_sites as u32) {
            return Err(Error::invalid("dense state length does not match d^(2N)"));
        }
        Ok(DenseState { n_sites, phys_dim, vec })
    }

    /// `⊗_j ρ₁`.
    pub fn product(n_sites: usize, single_site: &DMatrix<C64>) -> Result<Self> {
        check_capacity(n_sites)?;
        let d = single_site.nrows();
        let q = d * d;
        let local: Vec<C64> = (0..q).map(|x| single_site[(x / d, x % d)]).collect();
        let len = q.pow(n_sites as u32);
        let vec = (0..len)
            .map(|idx| {
                SpinConfiguration::from_index(idx, n_sites, q)
                    .0
                    .iter()
                    .map(|&x| local[x])
                    .product()
            })
            .collect();
        Ok(DenseState { n_sites, phys_dim: d, vec })
    }

    pub fn from_ansatz(ansatz: &MpoAnsatz) -> Result<Self> {
        check_capacity(ansatz.n_sites())?;
        Ok(DenseState {
            n_sites: ansatz.n_sites(),
            phys_dim: ansatz.phys_dim(),
            vec: ansatz.amplitudes_all()?,
        })
    }

    /// Builds the vectorization of a `d^N x d^N` matrix.
    pub fn from_matrix(n_sites: usize, phys_dim: usize, rho: &DMatrix<C64>) -> Result<Self> {
        check_capacity(n_sites)?;
        let d = phys_dim;
        let dim = d.pow(n_sites as u32);
        if rho.nrows() != dim || rho.ncols() != dim {
            return Err(Error::invalid("matrix dimension does not match d^N"));
        }
        let q = d * d;
        let vec = (0..q.pow(n_sites as u32))
            .map(|idx| {
                let x = SpinConfiguration::from_index(idx, n_sites, q);
                let (mut r, mut c) = (0, 0);
                for &s in &x.0 {
                    r = r * d + s / d;
                    c = c * d + s % d;
                }
                rho[(r, c)]
            })
            .collect();
        Ok(DenseState { n_sites, phys_dim, vec })
    }

    pub fn to_matrix(&self) -> DMatrix<C64> {
        vectorized_to_dense(&self.vec, self.n_sites, self.phys_dim)
    }

    pub fn local_dim(&self) -> usize {
        self.phys_dim * self.phys_dim
    }

    pub fn trace(&self) -> C64 {
        let d = self.phys_dim;
        let q = self.local_dim();
        let diag: Vec<usize> = (0..d).map(|s| s * d + s).collect();
        // walk only the σ = σ' entries
        let mut total = ZERO;
        let mut digits = vec![0usize; self.n_sites];
        loop {
            let idx = digits.iter().fold(0, |acc, &k| acc * q + diag[k]);
            total += self.vec[idx];
            let mut k = self.n_sites;
            loop {
                if k == 0 {
                    return total;
                }
                k -= 1;
                digits[k] += 1;
                if digits[k] < d {
                    break;
                }
                digits[k] = 0;
            }
        }
    }

    pub fn normalize(&mut self) -> Result<()> {
        let tr = self.trace();
        if tr.norm() < crate::mpo::UNDERFLOW {
            return Err(Error::DegenerateTrace { magnitude: tr.norm() });
        }
        for z in self.vec.iter_mut() {
            *z /= tr;
        }
        Ok(())
    }
}

/// `(x, v, value)` nonzeros of a site operator.
type Sparse = Vec<(usize, usize, C64)>;

fn sparse(op: &SiteOperator) -> Sparse {
    let q = op.local_dim();
    let mut out = Vec::new();
    for x in 0..q {
        for v in 0..q {
            let c = op.get(x, v);
            if c != ZERO {
                out.push((x, v, c));
            }
        }
    }
    out
}

/// `dst = op_j src`, with `op` acting on the digit of site `j`.
fn apply_site(op: &Sparse, j: usize, n: usize, q: usize, src: &[C64], dst: &mut [C64]) {
    let stride = q.pow((n - 1 - j) as u32);
    let block = stride * q;
    dst.fill(ZERO);
    for base in (0..src.len()).step_by(block) {
        for low in 0..stride {
            let b = base + low;
            for &(x, v, c) in op {
                dst[b + x * stride] += c * src[b + v * stride];
            }
        }
    }
}

/// A Lindbladian prepared for repeated matrix-free application.
pub struct DenseLindbladian {
    n_sites: usize,
    phys_dim: usize,
    diagonal: Vec<C64>,
    ops: Vec<Sparse>,
    terms: Vec<(C64, Vec<(usize, usize)>)>,
}

impl DenseLindbladian {
    pub fn new(spec: &LindbladianSpec) -> Result<Self> {
        check_capacity(spec.n_sites)?;
        spec.validate()?;
        let n = spec.n_sites;
        let q = spec.local_dim();
        let diagonal = (0..q.pow(n as u32))
            .map(|idx| spec.diagonal.evaluate(&SpinConfiguration::from_index(idx, n, q).0))
            .collect();
        let terms = spec
            .span_terms
            .iter()
            .map(|t| {
                let factors = t.factors.iter().map(|&(o, id)| ((t.anchor + o) % n, id)).collect();
                (t.coefficient, factors)
            })
            .collect();
        Ok(DenseLindbladian {
            n_sites: n,
            phys_dim: spec.phys_dim,
            diagonal,
            ops: spec.operators.iter().map(sparse).collect(),
            terms,
        })
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    /// `out = L v`.
    pub fn apply_into(&self, v: &[C64], out: &mut [C64], scratch: &mut [Vec<C64>; 2]) {
        let n = self.n_sites;
        let q = self.phys_dim * self.phys_dim;
        for ((o, d), x) in out.iter_mut().zip(&self.diagonal).zip(v) {
            *o = d * x;
        }
        for (coef, factors) in &self.terms {
            let [a, b] = scratch;
            let (&(site, id), rest) = factors.split_first().expect("span terms have factors");
            apply_site(&self.ops[id], site, n, q, v, a);
            for &(site, id) in rest {
                apply_site(&self.ops[id], site, n, q, a, b);
                std::mem::swap(a, b);
            }
            for (o, r) in out.iter_mut().zip(a.iter()) {
                *o += coef * r;
            }
        }
    }
}

/// `L·ρ` without materializing the superoperator.
pub fn apply_lindbladian(spec: &LindbladianSpec, state: &DenseState) -> Result<DenseState> {
    let lind = DenseLindbladian::new(spec)?;
    if state.n_sites != spec.n_sites || state.phys_dim != spec.phys_dim {
        return Err(Error::invalid("dense state does not match the Lindbladian"));
    }
    let mut out = vec![ZERO; state.vec.len()];
    let mut scratch = [vec![ZERO; out.len()], vec![ZERO; out.len()]];
    lind.apply_into(&state.vec, &mut out, &mut scratch);
    DenseState::new(state.n_sites, state.phys_dim, out)
}

/// Classical RK4 with fixed `dt` (the last step is shortened to land on
/// `t_end`). `observe` sees the initial state and every step.
pub fn rk4_evolve<F>(spec: &LindbladianSpec, rho0: &DenseState, t_end: f64, dt: f64, mut observe: F) -> Result<DenseState>
where
    F: FnMut(f64, &DenseState) -> Result<()>,
{
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::invalid("rk4 needs dt > 0 and t_end >= 0"));
    }
    let lind = DenseLindbladian::new(spec)?;
    if rho0.vec.len() != lind.dim() {
        return Err(Error::invalid("dense state does not match the Lindbladian"));
    }
    let len = lind.dim();
    let mut state = rho0.clone();
    let mut scratch = [vec![ZERO; len], vec![ZERO; len]];
    let mut k = [vec![ZERO; len], vec![ZERO; len], vec![ZERO; len], vec![ZERO; len]];
    let mut tmp = vec![ZERO; len];
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    observe(0.0, &state)?;
    for step in 0..steps {
        let t = step as f64 * dt;
        let h = if step + 1 == steps { t_end - t } else { dt };
        let y = &state.vec;
        lind.apply_into(y, &mut k[0], &mut scratch);
        for i in 0..len {
            tmp[i] = y[i] + k[0][i] * (0.5 * h);
        }
        lind.apply_into(&tmp, &mut k[1], &mut scratch);
        for i in 0..len {
            tmp[i] = y[i] + k[1][i] * (0.5 * h);
        }
        lind.apply_into(&tmp, &mut k[2], &mut scratch);
        for i in 0..len {
            tmp[i] = y[i] + k[2][i] * h;
        }
        lind.apply_into(&tmp, &mut k[3], &mut scratch);
        for i in 0..len {
            state.vec[i] += (k[0][i] + (k[1][i] + k[2][i]) * 2.0 + k[3][i]) * (h / 6.0);
        }
        let t_next = if step + 1 == steps { t_end } else { t + h };
        observe(t_next, &state)?;
    }
    Ok(state)
}

/// Single-site magnetizations `(⟨σˣ⟩, ⟨σʸ⟩, ⟨σᶻ⟩)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl MeanFieldState {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        MeanFieldState { x, y, z }
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    fn axpy(&self, h: f64, d: &MeanFieldState) -> MeanFieldState {
        MeanFieldState::new(self.x + h * d.x, self.y + h * d.y, self.z + h * d.z)
    }
}

/// ẋ = 2J y z + γ(1 - x), ẏ = -2J x z + 2h z - (γ/2) y, ż = -2h y - (γ/2) z
pub fn meanfield_rhs(s: &MeanFieldState, jsum: f64, h: f64, gamma: f64) -> MeanFieldState {
    MeanFieldState {
        x: 2.0 * jsum * s.y * s.z + gamma * (1.0 - s.x),
        y: -2.0 * jsum * s.x * s.z + 2.0 * h * s.z - 0.5 * gamma * s.y,
        z: -2.0 * h * s.y - 0.5 * gamma * s.z,
    }
}

/// Mean-field couplings of a model: `(ΣJ̃, h, γ)` in the convention of
/// [`meanfield_rhs`], whose Hamiltonian reads `-Σ J̃ σᶻσᶻ - h Σ σˣ`.
pub fn meanfield_parameters(params: &ModelParams) -> Result<(f64, f64, f64)> {
    if params.kind != ModelKind::Tfi || params.jump != JumpKind::ZMinusY {
        return Err(Error::invalid(
            "mean-field equations are available for the Ising model with the z_minus_y jump only",
        ));
    }
    params.validate()?;
    let n = params.lattice.n_sites();
    let kac: Vec<f64> = params
        .couplings
        .iter()
        .map(|c| {
            if params.kac {
                crate::lattice::kac_factor(c.alpha, &params.lattice)
            } else {
                1.0
            }
        })
        .collect();
    let g: f64 = (1..n).map(|j| params.pair_coupling(0, j, &kac)[2]).sum();
    Ok((-g, -params.sign.factor() * params.h, params.gamma))
}

/// RK4 integration of the mean-field flow; `observe` sees every step.
pub fn meanfield_evolve<F>(
    s0: MeanFieldState,
    jsum: f64,
    h: f64,
    gamma: f64,
    t_end: f64,
    dt: f64,
    mut observe: F,
) -> Result<MeanFieldState>
where
    F: FnMut(f64, &MeanFieldState) -> Result<()>,
{
    if !(dt > 0.0) || !(t_end >= 0.0) {
        return Err(Error::invalid("mean-field integration needs dt > 0 and t_end >= 0"));
    }
    let f = |s: &MeanFieldState| meanfield_rhs(s, jsum, h, gamma);
    let steps = (t_end / dt - 1e-9).ceil().max(0.0) as usize;
    let mut s = s0;
    observe(0.0, &s)?;
    for step in 0..steps {
        let t = step as f64 * dt;
        let dt_k = if step + 1 == steps { t_end - t } else { dt };
        let k1 = f(&s);
        let k2 = f(&s.axpy(0.5 * dt_k, &k1));
        let k3 = f(&s.axpy(0.5 * dt_k, &k2));
        let k4 = f(&s.axpy(dt_k, &k3));
        s = MeanFieldState::new(
            s.x + dt_k / 6.0 * (k1.x + 2.0 * k2.x + 2.0 * k3.x + k4.x),
            s.y + dt_k / 6.0 * (k1.y + 2.0 * k2.y + 2.0 * k3.y + k4.y),
            s.z + dt_k / 6.0 * (k1.z + 2.0 * k2.z + 2.0 * k3.z + k4.z),
        );
        if !(s.x.is_finite() && s.y.is_finite() && s.z.is_finite()) {
            return Err(Error::Numerical(format!("mean-field state diverged at t = {}", t + dt_k)));
        }
        observe(if step + 1 == steps { t_end } else { t + dt_k }, &s)?;
    }
    Ok(s)
}
