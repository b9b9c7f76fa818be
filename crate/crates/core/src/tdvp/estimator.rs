//! Local Lindbladian estimator `L_loc(x) = ⟨x|Lρ⟩ / ⟨x|ρ⟩` by tensor
//! contraction, evaluated together with the log-derivative since both reuse
//! the per-site environments of a sample.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::liouvillian::{LindbladianSpec, OpId, SpanTerm};
use crate::linalg::{self, ZERO};
use crate::mpo::{checked_inverse, MpoAnsatz};
use crate::sampler::Sample;

/// `M_{op,r}^x = Σ_v op[x][v] A_r^v` for every operator, unit-cell tensor and
/// local index. Valid for one ansatz; rebuilt once per gradient evaluation.
#[derive(Clone, Debug)]
pub struct ContractionCache {
    chi: usize,
    period: usize,
    local_dim: usize,
    m: Vec<C64>,
}

impl ContractionCache {
    pub fn new(spec: &LindbladianSpec, ansatz: &MpoAnsatz) -> Result<Self> {
        check_compatible(spec, ansatz)?;
        let chi = ansatz.chi();
        let b = chi * chi;
        let q = ansatz.local_dim();
        let period = ansatz.period();
        let mut m = vec![ZERO; spec.operators.len() * period * q * b];
        for (op_id, op) in spec.operators.iter().enumerate() {
            for r in 0..period {
                for x in 0..q {
                    let off = ((op_id * period + r) * q + x) * b;
                    let out = &mut m[off..off + b];
                    for v in 0..q {
                        let c = op.get(x, v);
                        if c != ZERO {
                            linalg::axpy(c, ansatz.tensor(r, v), out);
                        }
                    }
                }
            }
        }
        Ok(ContractionCache {
            chi,
            period,
            local_dim: q,
            m,
        })
    }

    #[inline]
    pub fn get(&self, op: OpId, cell: usize, x: usize) -> &[C64] {
        let b = self.chi * self.chi;
        let off = ((op * self.period + cell) * self.local_dim + x) * b;
        &self.m[off..off + b]
    }
}

fn check_compatible(spec: &LindbladianSpec, ansatz: &MpoAnsatz) -> Result<()> {
    if spec.n_sites != ansatz.n_sites() || spec.phys_dim != ansatz.phys_dim() {
        return Err(Error::invalid(format!(
            "Lindbladian on {} sites (d = {}) does not match ansatz on {} sites (d = {})",
            spec.n_sites,
            spec.phys_dim,
            ansatz.n_sites(),
            ansatz.phys_dim()
        )));
    }
    Ok(())
}

/// Reusable evaluator with scratch buffers for one (spec, ansatz) pair.
pub struct LocalEstimator<'a> {
    spec: &'a LindbladianSpec,
    ansatz: &'a MpoAnsatz,
    cache: &'a ContractionCache,
    envs: Vec<C64>,
    site_traces: Vec<C64>,
    acc: Vec<C64>,
    tmp: Vec<C64>,
}

impl<'a> LocalEstimator<'a> {
    pub fn new(spec: &'a LindbladianSpec, ansatz: &'a MpoAnsatz, cache: &'a ContractionCache) -> Result<Self> {
        check_compatible(spec, ansatz)?;
        let n = ansatz.n_sites();
        let b = ansatz.chi() * ansatz.chi();
        Ok(LocalEstimator {
            spec,
            ansatz,
            cache,
            envs: vec![ZERO; n * b],
            site_traces: vec![ZERO; n * ansatz.local_dim()],
            acc: vec![ZERO; b],
            tmp: vec![ZERO; b],
        })
    }

    /// `L_loc` of a sample whose left and right products are both valid. If
    /// `delta` is given, the log-derivative is written into it as well.
    pub fn evaluate(&mut self, sample: &Sample, delta: Option<&mut [C64]>) -> Result<C64> {
        let a = self.ansatz;
        let n = a.n_sites();
        let chi = a.chi();
        let b = chi * chi;
        let q = a.local_dim();
        let x = &sample.x.0;
        if x.len() != n {
            return Err(Error::invalid("sample size does not match the ansatz"));
        }
        let inv = checked_inverse(sample.amp)?;

        for j in 0..n {
            sample.pp.environment(j, &mut self.envs[j * b..(j + 1) * b]);
        }
        if let Some(out) = delta {
            if out.len() != a.n_params() {
                return Err(Error::invalid("log-derivative buffer has the wrong length"));
            }
            out.fill(ZERO);
            for j in 0..n {
                a.add_environment(out, j, x[j], &self.envs[j * b..(j + 1) * b], inv);
            }
        }
        for j in 0..n {
            let env = &self.envs[j * b..(j + 1) * b];
            for v in 0..q {
                self.site_traces[j * q + v] = linalg::trace_of_product(a.site_tensor(j, v), env, chi);
            }
        }

        let mut num = ZERO;
        for term in &self.spec.span_terms {
            num += term.coefficient * self.term_numerator(term, sample);
        }
        Ok(self.spec.diagonal.evaluate(x) + num * inv)
    }

    /// `⟨x|l|ρ⟩` for one span term, without its coefficient.
    fn term_numerator(&mut self, term: &SpanTerm, sample: &Sample) -> C64 {
        let a = self.ansatz;
        let n = a.n_sites();
        let chi = a.chi();
        let q = a.local_dim();
        let x = &sample.x.0;
        let span = term.span();
        if span == 1 {
            let op = &self.spec.operators[term.factors[0].1];
            let j = term.anchor;
            let traces = &self.site_traces[j * q..(j + 1) * q];
            return (0..q).map(|v| op.get(x[j], v) * traces[v]).sum();
        }

        let wraps = term.anchor + span > n;
        if wraps {
            linalg::set_identity(&mut self.acc, chi);
        } else {
            self.acc.copy_from_slice(sample.pp.left(term.anchor));
        }
        for (site, op) in term.window(n) {
            let m = match op {
                Some(id) => self.cache.get(id, a.cell_of(site), x[site]),
                None => a.site_tensor(site, x[site]),
            };
            linalg::matmul(&self.acc, m, &mut self.tmp, chi);
            std::mem::swap(&mut self.acc, &mut self.tmp);
        }
        if wraps {
            // remaining sites between the window's end and its anchor
            let end = (term.anchor + span) % n;
            for site in end..term.anchor {
                linalg::matmul(&self.acc, a.site_tensor(site, x[site]), &mut self.tmp, chi);
                std::mem::swap(&mut self.acc, &mut self.tmp);
            }
            linalg::trace(&self.acc, chi)
        } else {
            linalg::trace_of_product(&self.acc, sample.pp.right(term.anchor + span), chi)
        }
    }
}

/// One-off local estimator; builds a contraction cache internally.
pub fn local_estimator(spec: &LindbladianSpec, ansatz: &MpoAnsatz, sample: &Sample) -> Result<C64> {
    let cache = ContractionCache::new(spec, ansatz)?;
    LocalEstimator::new(spec, ansatz, &cache)?.evaluate(sample, None)
}
