//! Vectorized Lindbladians split into an exactly evaluated diagonal part and
//! quasi-local span terms.
//!
//! With `x = σ·d + σ'` per site, left multiplication `Oρ` acts as `O ⊗ I` and
//! right multiplication `ρO` as `I ⊗ Oᵀ`. A Lindbladian
//!
//! ```text
//! L = -i(H ⊗ I - I ⊗ Hᵀ) + Σ_k [Γ_k ⊗ Γ̄_k - ½(Γ_k†Γ_k ⊗ I + I ⊗ (Γ_k†Γ_k)ᵀ)]
//! ```
//!
//! is stored as `D(x) + Σ_terms c · (⊗ site factors)`. Every σᶻσᶻ coupling, at
//! any range, lands in the diagonal part; so does the diagonal of each
//! single-site generator. What remains are products of single-site
//! superoperators on a contiguous (periodically wrapped) window of sites.

use nalgebra::DMatrix;
use num_complex::Complex64 as C64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{kac_factor, power_law, Lattice};
use crate::linalg::{ONE, ZERO};

const I: C64 = C64 { re: 0.0, im: 1.0 };

pub fn pauli_x() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[ZERO, ONE, ONE, ZERO])
}

pub fn pauli_y() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[ZERO, -I, I, ZERO])
}

/// `σᶻ` with `σ = 0` as spin up.
pub fn pauli_z() -> DMatrix<C64> {
    DMatrix::from_row_slice(2, 2, &[ONE, ZERO, ZERO, -ONE])
}

/// Spin-½ density matrix `(I + x σˣ + y σʸ + z σᶻ) / 2`.
pub fn bloch_density(x: f64, y: f64, z: f64) -> DMatrix<C64> {
    let h = 0.5;
    DMatrix::from_row_slice(
        2,
        2,
        &[
            C64::new(h * (1.0 + z), 0.0),
            C64::new(h * x, -h * y),
            C64::new(h * x, h * y),
            C64::new(h * (1.0 - z), 0.0),
        ],
    )
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub fn pauli(self) -> DMatrix<C64> {
        match self {
            Axis::X => pauli_x(),
            Axis::Y => pauli_y(),
            Axis::Z => pauli_z(),
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

/// A `d² x d²` superoperator acting on one vectorized site.
#[derive(Clone, Debug, PartialEq)]
pub struct SiteOperator {
    local_dim: usize,
    mat: Vec<C64>,
}

impl SiteOperator {
    pub fn from_dense(local_dim: usize, mat: Vec<C64>) -> Result<Self> {
        if mat.len() != local_dim * local_dim {
            return Err(Error::invalid("site operator must be d² x d²"));
        }
        if mat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::invalid("site operator entries must be finite"));
        }
        Ok(SiteOperator { local_dim, mat })
    }

    pub fn zeros(local_dim: usize) -> Self {
        SiteOperator {
            local_dim,
            mat: vec![ZERO; local_dim * local_dim],
        }
    }

    pub fn identity(local_dim: usize) -> Self {
        let mut op = Self::zeros(local_dim);
        for x in 0..local_dim {
            op.mat[x * local_dim + x] = ONE;
        }
        op
    }

    /// Left: `op ⊗ I_d` (acts on the ket label σ). Right: `I_d ⊗ opᵀ` (acts on
    /// the bra label σ').
    pub fn vectorize(op: &DMatrix<C64>, side: Side) -> Self {
        let d = op.nrows();
        let q = d * d;
        let mut out = Self::zeros(q);
        for s in 0..d {
            for sp in 0..d {
                for t in 0..d {
                    for tp in 0..d {
                        let v = match side {
                            Side::Left if sp == tp => op[(s, t)],
                            Side::Right if s == t => op[(tp, sp)],
                            _ => continue,
                        };
                        out.mat[(s * d + sp) * q + t * d + tp] = v;
                    }
                }
            }
        }
        out
    }

    /// `-i(H ⊗ I - I ⊗ Hᵀ)`.
    pub fn commutator(h: &DMatrix<C64>) -> Self {
        let l = Self::vectorize(h, Side::Left);
        let r = Self::vectorize(h, Side::Right);
        l.add_scaled(&r, -ONE).scaled(-I)
    }

    /// `Γ ⊗ Γ̄ - ½(Γ†Γ ⊗ I + I ⊗ (Γ†Γ)ᵀ)`.
    pub fn dissipator(jump: &DMatrix<C64>) -> Self {
        let recycle = Self::vectorize(jump, Side::Left).compose(&Self::vectorize(&jump.adjoint(), Side::Right));
        let n = jump.adjoint() * jump;
        let anti = Self::vectorize(&n, Side::Left).add_scaled(&Self::vectorize(&n, Side::Right), ONE);
        recycle.add_scaled(&anti, C64::new(-0.5, 0.0))
    }

    pub fn local_dim(&self) -> usize {
        self.local_dim
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> C64 {
        self.mat[x * self.local_dim + y]
    }

    pub fn as_slice(&self) -> &[C64] {
        &self.mat
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.local_dim).map(|x| self.get(x, x)).collect()
    }

    pub fn without_diagonal(&self) -> Self {
        let mut out = self.clone();
        for x in 0..self.local_dim {
            out.mat[x * self.local_dim + x] = ZERO;
        }
        out
    }

    pub fn is_zero(&self) -> bool {
        self.mat.iter().all(|z| *z == ZERO)
    }

    pub fn scaled(&self, c: C64) -> Self {
        SiteOperator {
            local_dim: self.local_dim,
            mat: self.mat.iter().map(|z| z * c).collect(),
        }
    }

    pub fn add_scaled(&self, other: &Self, c: C64) -> Self {
        SiteOperator {
            local_dim: self.local_dim,
            mat: self.mat.iter().zip(&other.mat).map(|(a, b)| a + b * c).collect(),
        }
    }

    /// Matrix product `self · other`.
    pub fn compose(&self, other: &Self) -> Self {
        let q = self.local_dim;
        let mut out = Self::zeros(q);
        crate::linalg::matmul(&self.mat, &other.mat, &mut out.mat, q);
        out
    }
}

pub type OpId = usize;

/// `coefficient · ⊗_k op_k` on sites `anchor + offset_k` (mod N); sites inside
/// the window without a listed factor pass through as identities.
#[derive(Clone, Debug, PartialEq)]
pub struct SpanTerm {
    pub anchor: usize,
    pub factors: Vec<(usize, OpId)>,
    pub coefficient: C64,
}

impl SpanTerm {
    pub fn span(&self) -> usize {
        self.factors.last().map_or(0, |&(o, _)| o + 1)
    }

    /// Site index and optional factor for each position of the window.
    pub fn window(&self, n_sites: usize) -> impl Iterator<Item = (usize, Option<OpId>)> + '_ {
        let mut next = 0;
        (0..self.span()).map(move |k| {
            let site = (self.anchor + k) % n_sites;
            if next < self.factors.len() && self.factors[next].0 == k {
                next += 1;
                (site, Some(self.factors[next - 1].1))
            } else {
                (site, None)
            }
        })
    }
}

/// `D(x) = Σ_j site_diag[j][x_j] - i Σ_{i<j} g_ij (z_i z_j - z'_i z'_j)`, where
/// `z`/`z'` are the σᶻ eigenvalues of the ket/bra labels.
#[derive(Clone, Debug, PartialEq)]
pub struct DiagonalTerm {
    n_sites: usize,
    phys_dim: usize,
    spin_z: Vec<f64>,
    pair_couplings: Vec<f64>,
    pub site_diag: Vec<Vec<C64>>,
}

impl DiagonalTerm {
    pub fn new(n_sites: usize, phys_dim: usize) -> Self {
        let spin_z = if phys_dim == 2 { vec![1.0, -1.0] } else { vec![0.0; phys_dim] };
        DiagonalTerm {
            n_sites,
            phys_dim,
            spin_z,
            pair_couplings: vec![0.0; n_sites * n_sites],
            site_diag: vec![vec![ZERO; phys_dim * phys_dim]; n_sites],
        }
    }

    pub fn coupling(&self, i: usize, j: usize) -> f64 {
        self.pair_couplings[i * self.n_sites + j]
    }

    pub fn add_coupling(&mut self, i: usize, j: usize, g: f64) {
        assert_ne!(i, j, "self-coupling");
        self.pair_couplings[i * self.n_sites + j] += g;
        self.pair_couplings[j * self.n_sites + i] += g;
    }

    pub fn pair_couplings(&self) -> &[f64] {
        &self.pair_couplings
    }

    pub fn evaluate(&self, x: &[usize]) -> C64 {
        let d = self.phys_dim;
        let mut acc: C64 = x.iter().zip(&self.site_diag).map(|(&s, diag)| diag[s]).sum();
        let mut zz = 0.0;
        for i in 0..self.n_sites {
            let (zi, zpi) = (self.spin_z[x[i] / d], self.spin_z[x[i] % d]);
            let row = &self.pair_couplings[i * self.n_sites..(i + 1) * self.n_sites];
            for j in i + 1..self.n_sites {
                let g = row[j];
                if g != 0.0 {
                    zz += g * (zi * self.spin_z[x[j] / d] - zpi * self.spin_z[x[j] % d]);
                }
            }
        }
        acc += -I * zz;
        acc
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct LindbladianSpec {
    pub n_sites: usize,
    pub phys_dim: usize,
    /// Translation period of the term pattern along the chain.
    pub period: usize,
    pub diagonal: DiagonalTerm,
    pub operators: Vec<SiteOperator>,
    pub span_terms: Vec<SpanTerm>,
}

impl LindbladianSpec {
    pub fn new(n_sites: usize, phys_dim: usize, period: usize) -> Self {
        LindbladianSpec {
            n_sites,
            phys_dim,
            period,
            diagonal: DiagonalTerm::new(n_sites, phys_dim),
            operators: Vec::new(),
            span_terms: Vec::new(),
        }
    }

    pub fn local_dim(&self) -> usize {
        self.phys_dim * self.phys_dim
    }

    pub fn add_operator(&mut self, op: SiteOperator) -> OpId {
        if let Some(id) = self.operators.iter().position(|o| *o == op) {
            return id;
        }
        self.operators.push(op);
        self.operators.len() - 1
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.local_dim();
        if self.n_sites == 0 || self.period == 0 || self.n_sites % self.period != 0 {
            return Err(Error::invalid("site count must be a positive multiple of the period"));
        }
        if self.operators.iter().any(|o| o.local_dim() != q) {
            return Err(Error::invalid("site operator dimension does not match d²"));
        }
        for t in &self.span_terms {
            if t.anchor >= self.n_sites {
                return Err(Error::invalid(format!("term anchor {} out of range", t.anchor)));
            }
            if t.factors.first().map(|f| f.0) != Some(0) {
                return Err(Error::invalid("span term offsets must start at 0"));
            }
            if t.factors.windows(2).any(|w| w[1].0 <= w[0].0) {
                return Err(Error::invalid("span term offsets must be strictly increasing"));
            }
            if t.span() > self.n_sites {
                return Err(Error::invalid("span term wider than the lattice"));
            }
            if t.factors.iter().any(|&(_, id)| id >= self.operators.len()) {
                return Err(Error::invalid("span term references an unknown operator"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    /// `Σ_n J_n Σ_{ij} d^{-α_n} σᶻσᶻ + h Σ σˣ`
    Tfi,
    /// `Σ_n Σ_β J_n^β Σ_{ij} d^{-α_n} σ^βσ^β + h Σ σᶻ`
    Xyz,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JumpKind {
    /// `Γ = (√γ/2)(σˣ - iσʸ) = √γ σ⁻`
    SpinDecayXy,
    /// `Γ = (√γ/2)(σᶻ - iσʸ)`, whose dark state is `σˣ = +1`.
    ZMinusY,
}

impl JumpKind {
    pub fn operator(self, gamma: f64) -> DMatrix<C64> {
        let (a, b) = match self {
            JumpKind::SpinDecayXy => (pauli_x(), pauli_y()),
            JumpKind::ZMinusY => (pauli_z(), pauli_y()),
        };
        (a - b * I) * C64::new(gamma.sqrt() / 2.0, 0.0)
    }
}

/// Overall sign of the Hamiltonian: `Negative` reads `H = -Σ J ... - h Σ`,
/// `Positive` reads `H = +Σ J ... + h Σ`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignConvention {
    Negative,
    Positive,
}

impl SignConvention {
    pub fn factor(self) -> f64 {
        match self {
            SignConvention::Negative => -1.0,
            SignConvention::Positive => 1.0,
        }
    }
}

/// How `Σ_{i,j}` in the Hamiltonian counts pairs: `Unordered` counts each
/// `{i, j}` once, `Ordered` counts `(i, j)` and `(j, i)` separately.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairCounting {
    Unordered,
    Ordered,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CouplingStrength {
    Ising(f64),
    Anisotropic([f64; 3]),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Coupling {
    pub j: CouplingStrength,
    /// Power-law exponent; `inf` means nearest neighbours only.
    pub alpha: f64,
}

fn default_gamma() -> f64 {
    1.0
}
fn default_jump() -> JumpKind {
    JumpKind::SpinDecayXy
}
fn default_sign() -> SignConvention {
    SignConvention::Positive
}
fn default_r_trunc() -> usize {
    4
}
fn default_pairs() -> PairCounting {
    PairCounting::Unordered
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub kind: ModelKind,
    pub lattice: Lattice,
    pub couplings: Vec<Coupling>,
    pub h: f64,
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    #[serde(default = "default_jump")]
    pub jump: JumpKind,
    #[serde(default = "default_sign")]
    pub sign: SignConvention,
    #[serde(default)]
    pub kac: bool,
    #[serde(default = "default_r_trunc")]
    pub r_trunc: usize,
    #[serde(default = "default_pairs")]
    pub pair_counting: PairCounting,
}

impl ModelParams {
    pub fn validate(&self) -> Result<()> {
        if self.lattice.n_sites() < 1 {
            return Err(Error::config("model.lattice", "lattice must have at least one site"));
        }
        if let Lattice::Torus([lx, ly]) = self.lattice {
            if lx == 0 || ly == 0 {
                return Err(Error::config("model.lattice", "torus dimensions must be positive"));
            }
        }
        for (k, c) in self.couplings.iter().enumerate() {
            if !(c.alpha >= 0.0) {
                return Err(Error::config(format!("model.couplings[{k}].alpha"), "exponent must be >= 0 or inf"));
            }
            match (self.kind, c.j) {
                (ModelKind::Tfi, CouplingStrength::Anisotropic(_)) => {
                    return Err(Error::config(format!("model.couplings[{k}].j"), "Ising model takes a scalar J"))
                }
                (ModelKind::Xyz, CouplingStrength::Ising(_)) => {
                    return Err(Error::config(format!("model.couplings[{k}].j"), "XYZ model takes [Jx, Jy, Jz]"))
                }
                _ => {}
            }
        }
        if self.gamma < 0.0 || !self.gamma.is_finite() {
            return Err(Error::config("model.gamma", "rate must be finite and non-negative"));
        }
        if self.r_trunc < 1 {
            return Err(Error::config("model.r_trunc", "truncation radius must be at least 1"));
        }
        Ok(())
    }

    /// Per-axis coupling between two sites, including sign, pair counting and
    /// Kac factors.
    pub fn pair_coupling(&self, i: usize, j: usize, kac: &[f64]) -> [f64; 3] {
        let dist = self.lattice.distance(i, j);
        let scale = self.sign.factor()
            * match self.pair_counting {
                PairCounting::Unordered => 1.0,
                PairCounting::Ordered => 2.0,
            };
        let mut g = [0.0; 3];
        for (c, &k) in self.couplings.iter().zip(kac) {
            let w = power_law(dist, c.alpha) / k;
            let js = match c.j {
                CouplingStrength::Ising(jz) => [0.0, 0.0, jz],
                CouplingStrength::Anisotropic(v) => v,
            };
            for (gb, jb) in g.iter_mut().zip(js) {
                *gb += scale * jb * w;
            }
        }
        g
    }

    fn kac_factors(&self) -> Vec<f64> {
        self.couplings
            .iter()
            .map(|c| {
                if self.kac {
                    kac_factor(c.alpha, &self.lattice)
                } else {
                    1.0
                }
            })
            .collect()
    }

    /// `-i[h_s σ^a, ·] + D[Γ]` for one site, with the field axis set by the
    /// model.
    pub fn single_site_generator(&self) -> SiteOperator {
        let axis = match self.kind {
            ModelKind::Tfi => Axis::X,
            ModelKind::Xyz => Axis::Z,
        };
        let field = axis.pauli() * C64::new(self.sign.factor() * self.h, 0.0);
        SiteOperator::commutator(&field).add_scaled(&SiteOperator::dissipator(&self.jump.operator(self.gamma)), ONE)
    }
}

pub fn build(params: &ModelParams) -> Result<LindbladianSpec> {
    match params.kind {
        ModelKind::Tfi => build_tfi(params),
        ModelKind::Xyz => build_xyz(params),
    }
}

fn single_site_part(params: &ModelParams, spec: &mut LindbladianSpec) {
    let gen = params.single_site_generator();
    let diag = gen.diagonal();
    for site in spec.diagonal.site_diag.iter_mut() {
        site.clone_from(&diag);
    }
    let off = gen.without_diagonal();
    if !off.is_zero() {
        let id = spec.add_operator(off);
        for j in 0..spec.n_sites {
            spec.span_terms.push(SpanTerm {
                anchor: j,
                factors: vec![(0, id)],
                coefficient: ONE,
            });
        }
    }
}

pub fn build_tfi(params: &ModelParams) -> Result<LindbladianSpec> {
    if params.kind != ModelKind::Tfi {
        return Err(Error::invalid("build_tfi requires the tfi model kind"));
    }
    params.validate()?;
    let n = params.lattice.n_sites();
    let mut spec = LindbladianSpec::new(n, 2, params.lattice.period());
    let kac = params.kac_factors();
    for i in 0..n {
        for j in i + 1..n {
            let g = params.pair_coupling(i, j, &kac)[2];
            if g != 0.0 {
                spec.diagonal.add_coupling(i, j, g);
            }
        }
    }
    single_site_part(params, &mut spec);
    spec.validate()?;
    Ok(spec)
}

/// Anchor and offset of the shorter chain path between two sites.
fn window_for_pair(i: usize, j: usize, n: usize) -> (usize, usize) {
    let fwd = (j + n - i) % n;
    if fwd <= n - fwd {
        (i, fwd)
    } else {
        (j, n - fwd)
    }
}

pub fn build_xyz(params: &ModelParams) -> Result<LindbladianSpec> {
    if params.kind != ModelKind::Xyz {
        return Err(Error::invalid("build_xyz requires the xyz model kind"));
    }
    params.validate()?;
    let n = params.lattice.n_sites();
    if params.r_trunc >= n {
        return Err(Error::config(
            "model.r_trunc",
            format!("truncation radius {} must be smaller than the site count {n}", params.r_trunc),
        ));
    }
    let mut spec = LindbladianSpec::new(n, 2, params.lattice.period());
    let kac = params.kac_factors();
    let ops: Vec<(OpId, OpId)> = [Axis::X, Axis::Y]
        .iter()
        .map(|a| {
            let p = a.pauli();
            (
                spec.add_operator(SiteOperator::vectorize(&p, Side::Left)),
                spec.add_operator(SiteOperator::vectorize(&p, Side::Right)),
            )
        })
        .collect();
    for i in 0..n {
        for j in i + 1..n {
            let g = params.pair_coupling(i, j, &kac);
            if g[2] != 0.0 {
                spec.diagonal.add_coupling(i, j, g[2]);
            }
            if params.lattice.distance(i, j) > params.r_trunc as f64 + 1e-12 {
                continue;
            }
            let (anchor, offset) = window_for_pair(i, j, n);
            for (b, &(left, right)) in ops.iter().enumerate() {
                if g[b] == 0.0 {
                    continue;
                }
                spec.span_terms.push(SpanTerm {
                    anchor,
                    factors: vec![(0, left), (offset, left)],
                    coefficient: -I * g[b],
                });
                spec.span_terms.push(SpanTerm {
                    anchor,
                    factors: vec![(0, right), (offset, right)],
                    coefficient: I * g[b],
                });
            }
        }
    }
    single_site_part(params, &mut spec);
    spec.validate()?;
    Ok(spec)
}
