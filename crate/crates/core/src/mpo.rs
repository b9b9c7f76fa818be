//! Periodic matrix-product-operator density matrices in vectorized form.
//!
//! A density matrix on `N` sites with local dimension `d` is stored as `D`
//! unit-cell tensors `A_r^s`, each a `χ x χ` complex matrix for every
//! vectorized local index `s = σ·d + σ'` (the ket/bra pair of `|σ⟩⟨σ'|`).
//! Site `j` (0-based) uses unit-cell tensor `r = j mod D`, and the amplitude of
//! a configuration `x` is the cyclic trace
//!
//! ```text
//! ⟨x|ρ⟩ = tr(A^{x_0} A^{x_1} ... A^{x_{N-1}})
//! ```
//!
//! The flat parameter vector is laid out `[r][s][u][v]`, row-major, which is
//! also the layout of [`LogDerivative`].

use std::io::{Read, Write};

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::linalg::{self, ONE, ZERO};

/// Amplitudes and traces below this magnitude are treated as exact zeros.
pub const UNDERFLOW: f64 = 1e-300;

/// Largest site count accepted by [`MpoAnsatz::reconstruct_dense`].
pub const MAX_DENSE_SITES: usize = 10;

const CHECKPOINT_MAGIC: &[u8; 8] = b"MPOCKPT1";

/// One vectorized local index per site, `x_j = σ_j·d + σ'_j`.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct SpinConfiguration(pub Vec<usize>);

impl SpinConfiguration {
    pub fn new(sites: Vec<usize>) -> Self {
        SpinConfiguration(sites)
    }

    /// Builds `x_j = σ_j·d + σ'_j` from separate ket and bra labels.
    pub fn from_ket_bra(ket: &[usize], bra: &[usize], phys_dim: usize) -> Self {
        assert_eq!(ket.len(), bra.len());
        SpinConfiguration(ket.iter().zip(bra).map(|(&s, &t)| s * phys_dim + t).collect())
    }

    /// Decodes the `index`-th configuration in lexicographic order (site 0 is
    /// the most significant digit, base `d²`).
    pub fn from_index(mut index: usize, n_sites: usize, local_dim: usize) -> Self {
        let mut sites = vec![0; n_sites];
        for slot in sites.iter_mut().rev() {
            *slot = index % local_dim;
            index /= local_dim;
        }
        SpinConfiguration(sites)
    }

    pub fn to_index(&self, local_dim: usize) -> usize {
        self.0.iter().fold(0, |acc, &s| acc * local_dim + s)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sites(&self) -> &[usize] {
        &self.0
    }
}

/// Cached partial products for one configuration.
///
/// `left(j) = A^{x_0}···A^{x_{j-1}}` for `j = 0..=N` and
/// `right(j) = A^{x_j}···A^{x_{N-1}}` for `j = 0..=N`, so `left(0)` and
/// `right(N)` are identities and `tr left(N) = tr right(0) = ⟨x|ρ⟩`.
#[derive(Clone, Debug)]
pub struct PartialProducts {
    chi: usize,
    n_sites: usize,
    pub(crate) left: Vec<C64>,
    pub(crate) right: Vec<C64>,
}

impl PartialProducts {
    pub(crate) fn identity_filled(n_sites: usize, chi: usize) -> Self {
        let block = chi * chi;
        let mut left = vec![ZERO; (n_sites + 1) * block];
        let mut right = vec![ZERO; (n_sites + 1) * block];
        linalg::set_identity(&mut left[..block], chi);
        linalg::set_identity(&mut right[n_sites * block..], chi);
        PartialProducts {
            chi,
            n_sites,
            left,
            right,
        }
    }

    pub fn chi(&self) -> usize {
        self.chi
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn left(&self, j: usize) -> &[C64] {
        let b = self.chi * self.chi;
        &self.left[j * b..(j + 1) * b]
    }

    pub fn right(&self, j: usize) -> &[C64] {
        let b = self.chi * self.chi;
        &self.right[j * b..(j + 1) * b]
    }

    /// Recomputes `left(j+1..=N)` from `left(j)` onward.
    pub(crate) fn rebuild_left(&mut self, ansatz: &MpoAnsatz, x: &[usize], from: usize) {
        let b = self.chi * self.chi;
        for j in from..self.n_sites {
            let (done, rest) = self.left.split_at_mut((j + 1) * b);
            linalg::matmul(
                &done[j * b..],
                ansatz.site_tensor(j, x[j]),
                &mut rest[..b],
                self.chi,
            );
        }
    }

    /// Recomputes `right(0..to)` from `right(to)` downward.
    pub(crate) fn rebuild_right(&mut self, ansatz: &MpoAnsatz, x: &[usize], to: usize) {
        let b = self.chi * self.chi;
        for j in (0..to).rev() {
            let (head, tail) = self.right.split_at_mut((j + 1) * b);
            linalg::matmul(
                ansatz.site_tensor(j, x[j]),
                &tail[..b],
                &mut head[j * b..],
                self.chi,
            );
        }
    }

    /// `left(j+1) = left(j)·A^{x_j}`.
    #[inline]
    pub(crate) fn rebuild_left_step(&mut self, ansatz: &MpoAnsatz, x: &[usize], j: usize) {
        let b = self.chi * self.chi;
        let (done, rest) = self.left.split_at_mut((j + 1) * b);
        linalg::matmul(&done[j * b..], ansatz.site_tensor(j, x[j]), &mut rest[..b], self.chi);
    }

    /// `right(j) = A^{x_j}·right(j+1)`.
    #[inline]
    pub(crate) fn rebuild_right_step(&mut self, ansatz: &MpoAnsatz, x: &[usize], j: usize) {
        let b = self.chi * self.chi;
        let (head, tail) = self.right.split_at_mut((j + 1) * b);
        linalg::matmul(ansatz.site_tensor(j, x[j]), &tail[..b], &mut head[j * b..], self.chi);
    }

    /// `right(j+1) · left(j)`, the environment of site `j`: for any local
    /// tensor `A`, `tr(left(j)·A·right(j+1)) = tr(A·env)`.
    pub fn environment(&self, j: usize, out: &mut [C64]) {
        linalg::matmul(self.right(j + 1), self.left(j), out, self.chi);
    }
}

/// `∂ ln⟨x|ρ⟩ / ∂a` for every parameter, in the ansatz parameter layout.
#[derive(Clone, Debug)]
pub struct LogDerivative(pub Vec<C64>);

impl LogDerivative {
    pub fn as_slice(&self) -> &[C64] {
        &self.0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MpoAnsatz {
    n_sites: usize,
    period: usize,
    phys_dim: usize,
    chi: usize,
    tensors: Vec<C64>,
}

impl MpoAnsatz {
    pub fn new(
        n_sites: usize,
        period: usize,
        phys_dim: usize,
        chi: usize,
        tensors: Vec<C64>,
    ) -> Result<Self> {
        if n_sites == 0 || period == 0 || phys_dim == 0 || chi == 0 {
            return Err(Error::invalid("ansatz dimensions must be positive"));
        }
        if n_sites % period != 0 {
            return Err(Error::invalid(format!(
                "site count {n_sites} is not a multiple of the unit cell {period}"
            )));
        }
        let expected = period * phys_dim * phys_dim * chi * chi;
        if tensors.len() != expected {
            return Err(Error::invalid(format!(
                "expected {expected} tensor entries, got {}",
                tensors.len()
            )));
        }
        if tensors.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("tensor entries must be finite"));
        }
        Ok(MpoAnsatz {
            n_sites,
            period,
            phys_dim,
            chi,
            tensors,
        })
    }

    pub fn zeros(n_sites: usize, period: usize, phys_dim: usize, chi: usize) -> Result<Self> {
        let len = period * phys_dim * phys_dim * chi * chi;
        Self::new(n_sites, period, phys_dim, chi, vec![ZERO; len])
    }

    /// Independent complex Gaussian entries of standard deviation `scale`.
    pub fn random<R: Rng + ?Sized>(
        n_sites: usize,
        period: usize,
        phys_dim: usize,
        chi: usize,
        scale: f64,
        rng: &mut R,
    ) -> Result<Self> {
        let mut a = Self::zeros(n_sites, period, phys_dim, chi)?;
        for z in a.tensors.iter_mut() {
            let re: f64 = rng.sample(StandardNormal);
            let im: f64 = rng.sample(StandardNormal);
            *z = C64::new(re, im) * (scale / std::f64::consts::SQRT_2);
        }
        Ok(a)
    }

    /// Embeds the product state `⊗_j ρ₁` in the first bond channel of every
    /// tensor. All other entries are zero, so the represented state is exactly
    /// the product state and `tr ρ = 1`.
    pub fn init_product(
        n_sites: usize,
        period: usize,
        chi: usize,
        single_site: &DMatrix<C64>,
    ) -> Result<Self> {
        let d = single_site.nrows();
        if single_site.ncols() != d || d == 0 {
            return Err(Error::invalid("single-site density matrix must be square"));
        }
        let tr: C64 = single_site.trace();
        if (tr - ONE).norm() > 1e-12 {
            return Err(Error::invalid(format!("single-site density matrix has trace {tr}")));
        }
        if (single_site - single_site.adjoint()).norm() > 1e-12 {
            return Err(Error::invalid("single-site density matrix must be Hermitian"));
        }
        let mut a = Self::zeros(n_sites, period, d, chi)?;
        for r in 0..period {
            for s in 0..d {
                for t in 0..d {
                    a.tensor_mut(r, s * d + t)[0] = single_site[(s, t)];
                }
            }
        }
        Ok(a)
    }

    /// Seeds random entries of size `scale` in the first bond row outside the
    /// leading channel (`A_{0,v}` for `v ≥ 1`). Every cyclic path that leaves
    /// channel 0 must return through a column-0 entry, which stays zero, so the
    /// represented density matrix is unchanged. The seeded entries make the
    /// tangent directions that build inter-site correlations non-degenerate.
    pub fn seed_bond_channels<R: Rng + ?Sized>(&mut self, scale: f64, rng: &mut R) {
        if scale == 0.0 || self.chi == 1 {
            return;
        }
        let chi = self.chi;
        for r in 0..self.period {
            for s in 0..self.local_dim() {
                let m = self.tensor_mut(r, s);
                for v in 1..chi {
                    let re: f64 = rng.sample(StandardNormal);
                    let im: f64 = rng.sample(StandardNormal);
                    m[v] += C64::new(re, im) * (scale / std::f64::consts::SQRT_2);
                }
            }
        }
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn phys_dim(&self) -> usize {
        self.phys_dim
    }

    /// `d²`, the number of vectorized local states.
    pub fn local_dim(&self) -> usize {
        self.phys_dim * self.phys_dim
    }

    pub fn chi(&self) -> usize {
        self.chi
    }

    pub fn n_params(&self) -> usize {
        self.tensors.len()
    }

    #[inline]
    pub fn cell_of(&self, site: usize) -> usize {
        site % self.period
    }

    #[inline]
    pub fn param_index(&self, r: usize, s: usize, u: usize, v: usize) -> usize {
        ((r * self.local_dim() + s) * self.chi + u) * self.chi + v
    }

    #[inline]
    pub fn tensor(&self, r: usize, s: usize) -> &[C64] {
        let b = self.chi * self.chi;
        let off = (r * self.local_dim() + s) * b;
        &self.tensors[off..off + b]
    }

    #[inline]
    pub fn tensor_mut(&mut self, r: usize, s: usize) -> &mut [C64] {
        let b = self.chi * self.chi;
        let off = (r * self.local_dim() + s) * b;
        &mut self.tensors[off..off + b]
    }

    #[inline]
    pub fn site_tensor(&self, site: usize, s: usize) -> &[C64] {
        self.tensor(self.cell_of(site), s)
    }

    pub fn params(&self) -> &[C64] {
        &self.tensors
    }

    /// Replaces all parameters; rejects wrong lengths and non-finite values.
    pub fn set_params(&mut self, params: &[C64]) -> Result<()> {
        if params.len() != self.tensors.len() {
            return Err(Error::invalid("parameter vector length mismatch"));
        }
        if params.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Numerical("non-finite parameter update".into()));
        }
        self.tensors.copy_from_slice(params);
        Ok(())
    }

    pub fn with_params(&self, params: &[C64]) -> Result<Self> {
        let mut a = self.clone();
        a.set_params(params)?;
        Ok(a)
    }

    pub fn check_config(&self, x: &SpinConfiguration) -> Result<()> {
        if x.len() != self.n_sites {
            return Err(Error::invalid(format!(
                "configuration has {} sites, ansatz has {}",
                x.len(),
                self.n_sites
            )));
        }
        if let Some(&bad) = x.0.iter().find(|&&s| s >= self.local_dim()) {
            return Err(Error::invalid(format!(
                "local index {bad} out of range 0..{}",
                self.local_dim()
            )));
        }
        Ok(())
    }

    pub fn amplitude(&self, x: &SpinConfiguration) -> Result<C64> {
        self.check_config(x)?;
        let prod = linalg::chain_product(
            x.0.iter().enumerate().map(|(j, &s)| self.site_tensor(j, s)),
            self.chi,
        );
        Ok(linalg::trace(&prod, self.chi))
    }

    pub fn partial_products(&self, x: &SpinConfiguration) -> Result<PartialProducts> {
        self.check_config(x)?;
        let mut pp = PartialProducts::identity_filled(self.n_sites, self.chi);
        pp.rebuild_left(self, &x.0, 0);
        pp.rebuild_right(self, &x.0, self.n_sites);
        Ok(pp)
    }

    /// `Δ^{rs}_{uv}(x) = ⟨x|ρ⟩⁻¹ Σ_j δ_{r,j mod D} δ_{s,x_j} [right(j+1)·left(j)]_{vu}`.
    pub fn log_derivative(&self, x: &SpinConfiguration, pp: &PartialProducts) -> Result<LogDerivative> {
        self.check_config(x)?;
        let amp = linalg::trace(pp.left(self.n_sites), self.chi);
        let mut env = vec![ZERO; self.chi * self.chi];
        let mut out = vec![ZERO; self.n_params()];
        let inv = checked_inverse(amp)?;
        for j in 0..self.n_sites {
            pp.environment(j, &mut env);
            self.add_environment(&mut out, j, x.0[j], &env, inv);
        }
        Ok(LogDerivative(out))
    }

    /// Adds `scale · envᵀ` into the parameter block of site `j` with local
    /// index `s`.
    #[inline]
    pub(crate) fn add_environment(&self, out: &mut [C64], j: usize, s: usize, env: &[C64], scale: C64) {
        let chi = self.chi;
        let base = self.param_index(self.cell_of(j), s, 0, 0);
        let block = &mut out[base..base + chi * chi];
        for u in 0..chi {
            for v in 0..chi {
                block[u * chi + v] += scale * env[v * chi + u];
            }
        }
    }

    /// `Σ_{σ} A_r^{(σ,σ)}` for each unit-cell tensor: the per-cell transfer
    /// matrix of the physical trace.
    fn trace_transfer(&self, r: usize) -> Vec<C64> {
        let d = self.phys_dim;
        let mut t = vec![ZERO; self.chi * self.chi];
        for s in 0..d {
            linalg::axpy(ONE, self.tensor(r, s * d + s), &mut t);
        }
        t
    }

    pub fn trace(&self) -> C64 {
        let transfers: Vec<Vec<C64>> = (0..self.period).map(|r| self.trace_transfer(r)).collect();
        let prod = linalg::chain_product(
            (0..self.n_sites).map(|j| transfers[self.cell_of(j)].as_slice()),
            self.chi,
        );
        linalg::trace(&prod, self.chi)
    }

    /// Scales every tensor by the principal root `(tr ρ)^{-1/N}`.
    pub fn renormalize_trace(&mut self) -> Result<()> {
        let tr = self.trace();
        if !(tr.norm() >= UNDERFLOW) {
            return Err(Error::DegenerateTrace { magnitude: tr.norm() });
        }
        let factor = (-tr.ln() / self.n_sites as f64).exp();
        for z in self.tensors.iter_mut() {
            *z *= factor;
        }
        Ok(())
    }

    pub fn renormalized(&self) -> Result<Self> {
        let mut a = self.clone();
        a.renormalize_trace()?;
        Ok(a)
    }

    /// All `d^{2N}` amplitudes in lexicographic configuration order (site 0
    /// most significant). Shares prefix products across configurations.
    pub fn amplitudes_all(&self) -> Result<Vec<C64>> {
        if self.n_sites > MAX_DENSE_SITES {
            return Err(Error::Capacity {
                what: "sites for dense reconstruction",
                requested: self.n_sites,
                limit: MAX_DENSE_SITES,
            });
        }
        let q = self.local_dim();
        let chi = self.chi;
        let b = chi * chi;
        let total = q.pow(self.n_sites as u32);
        let mut out = Vec::with_capacity(total);
        // prefix[k] holds the product over sites 0..k of the current branch
        let mut prefix = vec![ZERO; (self.n_sites + 1) * b];
        linalg::set_identity(&mut prefix[..b], chi);
        let mut digits = vec![0usize; self.n_sites];
        let mut valid = 0usize;
        for idx in 0..total {
            if idx > 0 {
                // increment the odometer and find the first changed digit
                let mut k = self.n_sites - 1;
                loop {
                    digits[k] += 1;
                    if digits[k] < q {
                        break;
                    }
                    digits[k] = 0;
                    k -= 1;
                }
                valid = valid.min(k);
            }
            for k in valid..self.n_sites {
                let (done, rest) = prefix.split_at_mut((k + 1) * b);
                linalg::matmul(&done[k * b..], self.site_tensor(k, digits[k]), &mut rest[..b], chi);
            }
            valid = self.n_sites;
            out.push(linalg::trace(&prefix[self.n_sites * b..], chi));
        }
        Ok(out)
    }

    /// Dense `d^N x d^N` matrix with entry `(σ, σ')` equal to the amplitude at
    /// `x_j = σ_j·d + σ'_j`.
    pub fn reconstruct_dense(&self) -> Result<DMatrix<C64>> {
        let amps = self.amplitudes_all()?;
        Ok(vectorized_to_dense(&amps, self.n_sites, self.phys_dim))
    }

    /// Writes the checkpoint layout: 8-byte magic `MPOCKPT1`, then `N`, `D`,
    /// `d`, `χ` as little-endian `u64`, then every parameter as a
    /// little-endian `(re, im)` pair of `f64` in `[r][s][u][v]` order.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(CHECKPOINT_MAGIC)?;
        for v in [self.n_sites, self.period, self.phys_dim, self.chi] {
            w.write_all(&(v as u64).to_le_bytes())?;
        }
        let mut buf = Vec::with_capacity(self.tensors.len() * 16);
        for z in &self.tensors {
            buf.extend_from_slice(&z.re.to_le_bytes());
            buf.extend_from_slice(&z.im.to_le_bytes());
        }
        w.write_all(&buf)?;
        Ok(())
    }

    pub fn read_checkpoint<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut dims = [0usize; 4];
        for d in dims.iter_mut() {
            let mut b = [0u8; 8];
            r.read_exact(&mut b)?;
            *d = usize::try_from(u64::from_le_bytes(b))
                .map_err(|_| Error::Checkpoint("dimension overflow".into()))?;
        }
        let [n, period, d, chi] = dims;
        let len = period
            .checked_mul(d * d)
            .and_then(|v| v.checked_mul(chi * chi))
            .ok_or_else(|| Error::Checkpoint("dimension overflow".into()))?;
        let mut raw = vec![0u8; len * 16];
        r.read_exact(&mut raw)?;
        let tensors = raw
            .chunks_exact(16)
            .map(|c| {
                let re = f64::from_le_bytes(c[..8].try_into().unwrap());
                let im = f64::from_le_bytes(c[8..].try_into().unwrap());
                C64::new(re, im)
            })
            .collect();
        MpoAnsatz::new(n, period, d, chi, tensors).map_err(|e| Error::Checkpoint(e.to_string()))
    }
}

pub(crate) fn checked_inverse(amp: C64) -> Result<C64> {
    if !(amp.norm() >= UNDERFLOW) {
        return Err(Error::DegenerateAmplitude { magnitude: amp.norm() });
    }
    Ok(amp.inv())
}

/// Reorders a vectorized state (site-interleaved `x_j = σ_j·d + σ'_j`
/// digits) into the `d^N x d^N` density matrix.
pub fn vectorized_to_dense(vec: &[C64], n_sites: usize, phys_dim: usize) -> DMatrix<C64> {
    let dim = phys_dim.pow(n_sites as u32);
    let q = phys_dim * phys_dim;
    let mut m = DMatrix::zeros(dim, dim);
    for (idx, &v) in vec.iter().enumerate() {
        let (mut row, mut col) = (0, 0);
        let mut rem = idx;
        let mut place = 1;
        for _ in 0..n_sites {
            let x = rem % q;
            rem /= q;
            row += (x / phys_dim) * place;
            col += (x % phys_dim) * place;
            place *= phys_dim;
        }
        m[(row, col)] = v;
    }
    m
}
