//! Expectation values from the ansatz (by transfer-matrix contraction) and
//! from dense oracle states, behind one [`Measurable`] interface.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::liouvillian::Axis;
use crate::linalg::{self, ONE, ZERO};
use crate::mpo::{MpoAnsatz, SpinConfiguration};
use crate::oracle::DenseState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ObservableRequest {
    /// Site-averaged `⟨σ^α⟩`.
    Magnetization { axis: Axis },
    /// Translation-averaged `⟨σ^α_i σ^α_{i+d}⟩`, optionally connected.
    Correlator {
        axis: Axis,
        distance: usize,
        #[serde(default)]
        connected: bool,
    },
    /// `S(q) = N⁻² Σ_{nm} e^{iq(n-m)} ⟨σ^α_n σ^α_m⟩` at `q = 2πk/N`.
    StructureFactor {
        #[serde(default = "default_axis")]
        axis: Axis,
        k: usize,
    },
    Renyi2 {},
    Purity {},
    MinEigenvalue {},
    /// `E[|L_loc|²] / N`, from the sampler or from the exact `‖Lρ‖²/‖ρ‖²`.
    RhoDotCost {},
}

fn default_axis() -> Axis {
    Axis::Z
}

impl ObservableRequest {
    /// Stable stream name used for output files.
    pub fn name(&self) -> String {
        match self {
            ObservableRequest::Magnetization { axis } => format!("magnetization_{}", axis.label()),
            ObservableRequest::Correlator {
                axis,
                distance,
                connected,
            } => format!(
                "correlator_{}{}_d{distance}{}",
                axis.label(),
                axis.label(),
                if *connected { "_connected" } else { "" }
            ),
            ObservableRequest::StructureFactor { axis, k } => {
                format!("structure_factor_{}{}_k{k}", axis.label(), axis.label())
            }
            ObservableRequest::Renyi2 {} => "renyi2".into(),
            ObservableRequest::Purity {} => "purity".into(),
            ObservableRequest::MinEigenvalue {} => "min_eigenvalue".into(),
            ObservableRequest::RhoDotCost {} => "rho_dot_cost".into(),
        }
    }

    pub fn validate(&self, n_sites: usize) -> Result<()> {
        match *self {
            ObservableRequest::Correlator { distance, .. } if distance < 1 || distance > n_sites / 2 => Err(
                Error::config("observables.distance", format!("must lie in 1..={}", n_sites / 2)),
            ),
            ObservableRequest::StructureFactor { k, .. } if k >= n_sites => {
                Err(Error::config("observables.k", format!("must lie in 0..{n_sites}")))
            }
            _ => Ok(()),
        }
    }
}

/// Real part of a Hermitian-observable measurement plus the discarded
/// imaginary part.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Measurement {
    pub value: f64,
    pub im_residual: f64,
}

impl From<C64> for Measurement {
    fn from(z: C64) -> Self {
        Measurement {
            value: z.re,
            im_residual: z.im,
        }
    }
}

pub trait Measurable {
    fn n_sites(&self) -> usize;

    /// `tr(Π_k O_k ρ)` for operators on distinct sites.
    fn expect_product(&self, site_ops: &[(usize, &DMatrix<C64>)]) -> Result<C64>;

    /// `tr ρ²`
    fn purity(&self) -> Result<C64>;

    /// Dense `d^N x d^N` density matrix.
    fn dense_matrix(&self) -> Result<DMatrix<C64>>;

    /// `C_nm = tr(O_n O_m ρ)`, with `O²` on the diagonal.
    fn two_point(&self, op: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        let n = self.n_sites();
        let sq = op * op;
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            c[(i, i)] = self.expect_product(&[(i, &sq)])?;
            for j in i + 1..n {
                let v = self.expect_product(&[(i, op), (j, op)])?;
                c[(i, j)] = v;
                c[(j, i)] = v;
            }
        }
        Ok(c)
    }
}

fn check_sites(site_ops: &[(usize, &DMatrix<C64>)], n: usize, d: usize) -> Result<()> {
    for (k, &(s, op)) in site_ops.iter().enumerate() {
        if s >= n {
            return Err(Error::invalid(format!("site {s} out of range")));
        }
        if op.nrows() != d || op.ncols() != d {
            return Err(Error::invalid("operator dimension does not match d"));
        }
        if site_ops[..k].iter().any(|&(t, _)| t == s) {
            return Err(Error::invalid(format!("site {s} listed twice")));
        }
    }
    Ok(())
}

/// Weight vector `w_x = O_{σ'σ}` at `x = (σ, σ')`, so that `Σ_x w_x ρ_x`
/// traces `O` against one site.
fn trace_weights(op: Option<&DMatrix<C64>>, d: usize) -> Vec<C64> {
    (0..d * d)
        .map(|x| {
            let (s, sp) = (x / d, x % d);
            match op {
                Some(o) => o[(sp, s)],
                None if s == sp => ONE,
                None => ZERO,
            }
        })
        .collect()
}

impl MpoAnsatz {
    /// `Σ_x w_x A_r^x`.
    fn weighted_transfer(&self, cell: usize, w: &[C64]) -> Vec<C64> {
        let mut t = vec![ZERO; self.chi() * self.chi()];
        for (x, &c) in w.iter().enumerate() {
            if c != ZERO {
                linalg::axpy(c, self.tensor(cell, x), &mut t);
            }
        }
        t
    }

    fn site_transfers(&self, site_ops: &[(usize, &DMatrix<C64>)]) -> Vec<Vec<C64>> {
        let d = self.phys_dim();
        let plain = trace_weights(None, d);
        let identity: Vec<Vec<C64>> = (0..self.period()).map(|r| self.weighted_transfer(r, &plain)).collect();
        (0..self.n_sites())
            .map(|j| match site_ops.iter().find(|&&(s, _)| s == j) {
                Some(&(_, op)) => self.weighted_transfer(self.cell_of(j), &trace_weights(Some(op), d)),
                None => identity[self.cell_of(j)].clone(),
            })
            .collect()
    }
}

impl Measurable for MpoAnsatz {
    fn n_sites(&self) -> usize {
        MpoAnsatz::n_sites(self)
    }

    fn expect_product(&self, site_ops: &[(usize, &DMatrix<C64>)]) -> Result<C64> {
        check_sites(site_ops, MpoAnsatz::n_sites(self), self.phys_dim())?;
        let transfers = self.site_transfers(site_ops);
        let prod = linalg::chain_product(transfers.iter().map(|t| t.as_slice()), self.chi());
        Ok(linalg::trace(&prod, self.chi()))
    }

    /// `tr Π_j E_j` with `E_j = Σ_{σσ'} A^{(σ,σ')} ⊗ A^{(σ',σ)}`.
    fn purity(&self) -> Result<C64> {
        let chi = self.chi();
        let d = self.phys_dim();
        let big = chi * chi;
        let cells: Vec<Vec<C64>> = (0..self.period())
            .map(|r| {
                let mut e = vec![ZERO; big * big];
                for s in 0..d {
                    for sp in 0..d {
                        let a = self.tensor(r, s * d + sp);
                        let b = self.tensor(r, sp * d + s);
                        for i in 0..chi {
                            for k in 0..chi {
                                let aik = a[i * chi + k];
                                if aik == ZERO {
                                    continue;
                                }
                                for j in 0..chi {
                                    let row = (i * chi + j) * big + k * chi;
                                    for l in 0..chi {
                                        e[row + l] += aik * b[j * chi + l];
                                    }
                                }
                            }
                        }
                    }
                }
                e
            })
            .collect();
        let prod = linalg::chain_product((0..MpoAnsatz::n_sites(self)).map(|j| cells[self.cell_of(j)].as_slice()), big);
        Ok(linalg::trace(&prod, big))
    }

    fn dense_matrix(&self) -> Result<DMatrix<C64>> {
        self.reconstruct_dense()
    }

    /// Prefix/suffix transfer products make every pair `O(χ³)` amortized.
    fn two_point(&self, op: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        let n = MpoAnsatz::n_sites(self);
        let chi = self.chi();
        let d = self.phys_dim();
        if op.nrows() != d || op.ncols() != d {
            return Err(Error::invalid("operator dimension does not match d"));
        }
        let plain = trace_weights(None, d);
        let w = trace_weights(Some(op), d);
        let sq = op * op;
        let w2 = trace_weights(Some(&sq), d);
        let e: Vec<Vec<C64>> = (0..self.period()).map(|r| self.weighted_transfer(r, &plain)).collect();
        let x: Vec<Vec<C64>> = (0..self.period()).map(|r| self.weighted_transfer(r, &w)).collect();
        let x2: Vec<Vec<C64>> = (0..self.period()).map(|r| self.weighted_transfer(r, &w2)).collect();
        let b = chi * chi;
        // suffix[j] = E_j ... E_{N-1}
        let mut suffix = vec![ZERO; (n + 1) * b];
        linalg::set_identity(&mut suffix[n * b..], chi);
        for j in (0..n).rev() {
            let (head, tail) = suffix.split_at_mut((j + 1) * b);
            linalg::matmul(&e[self.cell_of(j)], &tail[..b], &mut head[j * b..], chi);
        }
        let mut prefix = linalg::identity(chi);
        let mut acc = vec![ZERO; b];
        let mut tmp = vec![ZERO; b];
        let mut c = DMatrix::zeros(n, n);
        for i in 0..n {
            let ci = self.cell_of(i);
            linalg::matmul(&prefix, &x2[ci], &mut acc, chi);
            c[(i, i)] = linalg::trace_of_product(&acc, &suffix[(i + 1) * b..(i + 2) * b], chi);
            linalg::matmul(&prefix, &x[ci], &mut acc, chi);
            for j in i + 1..n {
                let cj = self.cell_of(j);
                linalg::matmul(&acc, &x[cj], &mut tmp, chi);
                let v = linalg::trace_of_product(&tmp, &suffix[(j + 1) * b..(j + 2) * b], chi);
                c[(i, j)] = v;
                c[(j, i)] = v;
                linalg::matmul(&acc, &e[cj], &mut tmp, chi);
                std::mem::swap(&mut acc, &mut tmp);
            }
            linalg::matmul(&prefix, &e[ci], &mut tmp, chi);
            prefix.copy_from_slice(&tmp);
        }
        Ok(c)
    }
}

impl Measurable for DenseState {
    fn n_sites(&self) -> usize {
        self.n_sites
    }

    fn expect_product(&self, site_ops: &[(usize, &DMatrix<C64>)]) -> Result<C64> {
        let d = self.phys_dim;
        check_sites(site_ops, self.n_sites, d)?;
        let plain = trace_weights(None, d);
        let weights: Vec<Vec<C64>> = (0..self.n_sites)
            .map(|j| match site_ops.iter().find(|&&(s, _)| s == j) {
                Some(&(_, op)) => trace_weights(Some(op), d),
                None => plain.clone(),
            })
            .collect();
        let q = d * d;
        let mut total = ZERO;
        for (idx, &v) in self.vec.iter().enumerate() {
            if v == ZERO {
                continue;
            }
            let x = SpinConfiguration::from_index(idx, self.n_sites, q);
            let w: C64 = x.0.iter().zip(&weights).map(|(&s, wj)| wj[s]).product();
            total += w * v;
        }
        Ok(total)
    }

    fn purity(&self) -> Result<C64> {
        let m = self.to_matrix();
        Ok((&m * &m).trace())
    }

    fn dense_matrix(&self) -> Result<DMatrix<C64>> {
        Ok(self.to_matrix())
    }

    /// One pass over the vector: only entries with at most two off-diagonal
    /// sites survive the partial trace.
    fn two_point(&self, op: &DMatrix<C64>) -> Result<DMatrix<C64>> {
        let (n, d) = (self.n_sites, self.phys_dim);
        if op.nrows() != d || op.ncols() != d {
            return Err(Error::invalid("operator dimension does not match d"));
        }
        let q = d * d;
        let w = trace_weights(Some(op), d);
        let w2 = trace_weights(Some(&(op * op)), d);
        let mut c = DMatrix::zeros(n, n);
        let mut off = Vec::with_capacity(2);
        for (idx, &v) in self.vec.iter().enumerate() {
            if v == ZERO {
                continue;
            }
            let x = SpinConfiguration::from_index(idx, n, q);
            off.clear();
            for (j, &s) in x.0.iter().enumerate() {
                if s / d != s % d {
                    if off.len() == 2 {
                        off.push(j);
                        break;
                    }
                    off.push(j);
                }
            }
            match off[..] {
                [] => {
                    for i in 0..n {
                        c[(i, i)] += w2[x.0[i]] * v;
                        for j in i + 1..n {
                            c[(i, j)] += w[x.0[i]] * w[x.0[j]] * v;
                        }
                    }
                }
                [a] => {
                    c[(a, a)] += w2[x.0[a]] * v;
                    for j in (0..n).filter(|&j| j != a) {
                        let (i, k) = (a.min(j), a.max(j));
                        c[(i, k)] += w[x.0[a]] * w[x.0[j]] * v;
                    }
                }
                [a, b] => c[(a, b)] += w[x.0[a]] * w[x.0[b]] * v,
                _ => {}
            }
        }
        for i in 0..n {
            for j in 0..i {
                c[(i, j)] = c[(j, i)];
            }
        }
        Ok(c)
    }
}

/// Site-averaged single-site expectation.
pub fn magnetization<M: Measurable + ?Sized>(target: &M, axis: Axis) -> Result<Measurement> {
    let op = axis.pauli();
    let n = target.n_sites();
    let mut total = ZERO;
    for j in 0..n {
        total += target.expect_product(&[(j, &op)])?;
    }
    Ok((total / n as f64).into())
}

/// Average of `⟨O_i O_{i+d}⟩` (minus `⟨O_i⟩⟨O_{i+d}⟩` if connected) over all
/// `i`, with periodic wrap.
pub fn correlator<M: Measurable + ?Sized>(target: &M, axis: Axis, distance: usize, connected: bool) -> Result<Measurement> {
    let n = target.n_sites();
    if distance < 1 || distance > n / 2 {
        return Err(Error::invalid(format!("distance {distance} outside 1..={}", n / 2)));
    }
    let op = axis.pauli();
    let c = target.two_point(&op)?;
    let single: Vec<C64> = if connected {
        (0..n).map(|j| target.expect_product(&[(j, &op)])).collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let mut total = ZERO;
    for i in 0..n {
        let j = (i + distance) % n;
        total += c[(i, j)];
        if connected {
            total -= single[i] * single[j];
        }
    }
    Ok((total / n as f64).into())
}

/// `S(q) = N⁻² Σ_{nm} e^{iq(n-m)} C_nm` with `q = 2πk/N`.
pub fn structure_factor<M: Measurable + ?Sized>(target: &M, axis: Axis, k: usize) -> Result<Measurement> {
    let c = target.two_point(&axis.pauli())?;
    Ok(structure_factor_from(&c, k).into())
}

/// Fourier sum over a precomputed correlation matrix.
pub fn structure_factor_from(c: &DMatrix<C64>, k: usize) -> C64 {
    let n = c.nrows();
    let q = 2.0 * std::f64::consts::PI * k as f64 / n as f64;
    let mut total = ZERO;
    for a in 0..n {
        for b in 0..n {
            let phase = q * (a as f64 - b as f64);
            total += C64::new(phase.cos(), phase.sin()) * c[(a, b)];
        }
    }
    total / (n * n) as f64
}

pub fn purity<M: Measurable + ?Sized>(target: &M) -> Result<Measurement> {
    Ok(target.purity()?.into())
}

/// `-ln tr ρ²`; a non-positive purity is reported as a non-physical state.
pub fn renyi2<M: Measurable + ?Sized>(target: &M) -> Result<Measurement> {
    let p = target.purity()?;
    if !(p.re > 0.0) {
        return Err(Error::NonPhysical(format!("tr ρ² = {p} is not positive")));
    }
    Ok(Measurement {
        value: -p.re.ln(),
        im_residual: p.im,
    })
}

/// Smallest eigenvalue of the Hermitian part `(ρ + ρ†)/2`.
pub fn min_eigenvalue<M: Measurable + ?Sized>(target: &M) -> Result<Measurement> {
    let rho = target.dense_matrix()?;
    let herm = (&rho + rho.adjoint()) * C64::new(0.5, 0.0);
    let anti = (&rho - rho.adjoint()) * C64::new(0.5, 0.0);
    let values = linalg::hermitian_eigenvalues(&herm)?;
    Ok(Measurement {
        value: values.first().copied().unwrap_or(0.0),
        im_residual: anti.norm(),
    })
}

/// `|ρ̇|²/N` from the assembled `E[|L_loc|²]`.
pub fn rho_dot_cost(l2: f64, n_sites: usize) -> f64 {
    l2 / n_sites as f64
}

/// Evaluates one request. `l2` is the current `E[|L_loc|²]` when available.
pub fn measure<M: Measurable + ?Sized>(target: &M, request: &ObservableRequest, l2: Option<f64>) -> Result<Measurement> {
    match *request {
        ObservableRequest::Magnetization { axis } => magnetization(target, axis),
        ObservableRequest::Correlator {
            axis,
            distance,
            connected,
        } => correlator(target, axis, distance, connected),
        ObservableRequest::StructureFactor { axis, k } => structure_factor(target, axis, k),
        ObservableRequest::Renyi2 {} => renyi2(target),
        ObservableRequest::Purity {} => purity(target),
        ObservableRequest::MinEigenvalue {} => min_eigenvalue(target),
        ObservableRequest::RhoDotCost {} => match l2 {
            Some(l2) => Ok(Measurement {
                value: rho_dot_cost(l2, target.n_sites()),
                im_residual: 0.0,
            }),
            None => Err(Error::invalid("rho_dot_cost needs a variational gradient evaluation")),
        },
    }
}
