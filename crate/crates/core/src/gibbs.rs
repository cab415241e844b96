//! Exact evaluation of the posterior Gibbs measures by enumeration.
//!
//! LDGM: `p(u | y) ∝ ∏_i exp(l_i ∏_{a∈∂i} u_a)` over information bits.
//! LDPC: `p(x | y) ∝ ∏_c ½(1 + ∏_{i∈∂c} x_i) ∏_i exp(l_i x_i)`.
//!
//! Both measures only see the code bits through the codebook, so the
//! enumeration runs over the codewords (a GF(2) span of a basis) with the
//! multiplicity `2^{m − rank}` of each LDGM codeword kept as a log weight.
//! Codewords are stored as masks with bit `i` set when `x_i = −1`.

use crate::duality::{null_space_u64, row_basis_u64};
use crate::error::{Error, Result};
use crate::graph::{CodeKind, TannerGraph};
use crate::sum::Compensated;

const CHUNK: usize = 256;

/// Default cap on the number of free spins.
pub const BRUTE_FORCE_CAP: usize = 24;

/// A graph together with one half-loglikelihood per code bit.
#[derive(Debug, Clone)]
pub struct PosteriorInstance<'g> {
    graph: &'g TannerGraph,
    llrs: Vec<f64>,
}

impl<'g> PosteriorInstance<'g> {
    pub fn new(graph: &'g TannerGraph, llrs: Vec<f64>) -> Result<Self> {
        if llrs.len() != graph.n_code_bits() {
            return Err(Error::LlrLength {
                got: llrs.len(),
                expected: graph.n_code_bits(),
            });
        }
        if let Some(i) = llrs.iter().position(|l| !l.is_finite()) {
            return Err(Error::NonFiniteLlr(i));
        }
        Ok(Self { graph, llrs })
    }

    pub fn graph(&self) -> &'g TannerGraph {
        self.graph
    }

    pub fn llrs(&self) -> &[f64] {
        &self.llrs
    }

    pub fn kind(&self) -> CodeKind {
        self.graph.kind()
    }

    /// Copy with `l_i` replaced by `value`.
    pub fn with_llr(&self, i: usize, value: f64) -> Self {
        let mut llrs = self.llrs.clone();
        llrs[i] = value;
        Self {
            graph: self.graph,
            llrs,
        }
    }
}

/// Codewords of a graph's code, enumerated once and reused across noise
/// realizations.
#[derive(Debug, Clone)]
pub struct Codebook {
    n: usize,
    words: Vec<u64>,
    rank: usize,
    log_multiplicity: f64,
}

impl Codebook {
    pub fn new(g: &TannerGraph, cap: usize) -> Result<Self> {
        let free = g.n_free_spins();
        if free > cap {
            return Err(Error::BruteForceCap { free, cap });
        }
        let n = g.n_code_bits();
        if n > 64 {
            return Err(Error::Parameter(format!("{n} code bits exceed the 64-bit word size")));
        }
        let (basis, rank, log_multiplicity) = match g.kind() {
            CodeKind::Ldgm => {
                let rows: Vec<u64> = (0..g.n_var())
                    .map(|v| g.var_neighbors(v).iter().fold(0u64, |m, &c| m | 1 << c))
                    .collect();
                let basis = row_basis_u64(&rows);
                let r = basis.len();
                (basis, r, (g.n_var() - r) as f64 * std::f64::consts::LN_2)
            }
            CodeKind::Ldpc => {
                let rows: Vec<u64> = (0..g.n_chk())
                    .map(|c| g.chk_neighbors(c).iter().fold(0u64, |m, &v| m | 1 << v))
                    .collect();
                let kernel = null_space_u64(&rows, n);
                let r = n - kernel.len();
                (kernel, r, 0.0)
            }
        };
        let mut words = Vec::with_capacity(1 << basis.len());
        let mut cur = 0u64;
        words.push(cur);
        for k in 1u64..(1 << basis.len()) {
            cur ^= basis[k.trailing_zeros() as usize];
            words.push(cur);
        }
        Ok(Self {
            n,
            words,
            rank,
            log_multiplicity,
        })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn words(&self) -> &[u64] {
        &self.words
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }

    /// GF(2) rank of the generator (LDGM) or parity-check (LDPC) matrix.
    pub fn rank(&self) -> usize {
        self.rank
    }

    /// `ln` of the number of free-spin configurations mapping to each
    /// codeword.
    pub fn log_multiplicity(&self) -> f64 {
        self.log_multiplicity
    }

    /// True iff the all-minus word belongs to the code.
    pub fn contains_all_minus(&self) -> bool {
        let full = if self.n == 64 { u64::MAX } else { (1u64 << self.n) - 1 };
        self.words.contains(&full)
    }
}

/// Everything the exact solver computes for one noise realization.
#[derive(Debug, Clone)]
pub struct GibbsSummary {
    /// `ln Z`.
    pub log_z: f64,
    /// `⟨x_i⟩`.
    pub marginals: Vec<f64>,
    /// `⟨x_i⟩` with `l_i` set to zero.
    pub extrinsics: Vec<f64>,
    /// Gibbs entropy per code bit (nats).
    pub entropy: f64,
    /// Row-major `n × n` covariance `⟨x_i x_j⟩ − ⟨x_i⟩⟨x_j⟩` when requested.
    pub covariance: Option<Vec<f64>>,
}

impl GibbsSummary {
    pub fn cov(&self, i: usize, j: usize) -> Option<f64> {
        let n = self.marginals.len();
        self.covariance.as_ref().map(|c| c[i * n + j])
    }
}

/// Exact solver bound to one graph.
#[derive(Debug, Clone)]
pub struct ExactSolver<'g> {
    graph: &'g TannerGraph,
    book: Codebook,
}

impl<'g> ExactSolver<'g> {
    pub fn new(graph: &'g TannerGraph) -> Result<Self> {
        Self::with_cap(graph, BRUTE_FORCE_CAP)
    }

    pub fn with_cap(graph: &'g TannerGraph, cap: usize) -> Result<Self> {
        Ok(Self {
            graph,
            book: Codebook::new(graph, cap)?,
        })
    }

    pub fn graph(&self) -> &'g TannerGraph {
        self.graph
    }

    pub fn codebook(&self) -> &Codebook {
        &self.book
    }

    /// Evaluates the measure for one LLR vector.
    pub fn evaluate(&self, llrs: &[f64], with_covariance: bool) -> Result<GibbsSummary> {
        let n = self.book.n;
        if llrs.len() != n {
            return Err(Error::LlrLength {
                got: llrs.len(),
                expected: n,
            });
        }
        if let Some(i) = llrs.iter().position(|l| !l.is_finite()) {
            return Err(Error::NonFiniteLlr(i));
        }
        let base: f64 = llrs.iter().sum();
        let energy = |w: u64| {
            let mut e = Compensated::new();
            e.add(base);
            let mut m = w;
            while m != 0 {
                let i = m.trailing_zeros() as usize;
                e.add(-2.0 * llrs[i]);
                m &= m - 1;
            }
            e.value()
        };
        let e_max = self
            .book
            .words
            .iter()
            .map(|&w| energy(w))
            .fold(f64::NEG_INFINITY, f64::max);

        let mut z = Compensated::new();
        let mut ez = Compensated::new();
        let mut minus = vec![Compensated::new(); n];
        let mut plus = vec![Compensated::new(); n];
        // pair cells: [i*n + j] accumulates weight with x_i = x_j = −1,
        // cross[i*n + j] with x_i = −1, x_j = +1
        // pair cells are summed in blocks of CHUNK words, then the block
        // sums are added with compensation
        let cells = if with_covariance { n * n } else { 0 };
        let mut both = vec![0.0; cells];
        let mut cross = vec![0.0; cells];
        let mut both_tot = vec![Compensated::new(); cells];
        let mut cross_tot = vec![Compensated::new(); cells];
        let flush = |local: &mut [f64], tot: &mut [Compensated]| {
            for (x, t) in local.iter_mut().zip(tot.iter_mut()) {
                t.add(*x);
                *x = 0.0;
            }
        };
        let full = if n == 64 { u64::MAX } else { (1u64 << n) - 1 };
        for (k, &w) in self.book.words.iter().enumerate() {
            if with_covariance && k % CHUNK == 0 && k > 0 {
                flush(&mut both, &mut both_tot);
                flush(&mut cross, &mut cross_tot);
            }
            let de = energy(w) - e_max;
            let wt = de.exp();
            z.add(wt);
            ez.add(wt * de);
            let mut p = !w & full;
            while p != 0 {
                plus[p.trailing_zeros() as usize].add(wt);
                p &= p - 1;
            }
            let mut m = w;
            while m != 0 {
                let i = m.trailing_zeros() as usize;
                minus[i].add(wt);
                if with_covariance {
                    let mut mj = w;
                    while mj != 0 {
                        let j = mj.trailing_zeros() as usize;
                        both[i * n + j] += wt;
                        mj &= mj - 1;
                    }
                    let mut pj = !w & full;
                    while pj != 0 {
                        let j = pj.trailing_zeros() as usize;
                        cross[i * n + j] += wt;
                        pj &= pj - 1;
                    }
                }
                m &= m - 1;
            }
        }
        flush(&mut both, &mut both_tot);
        flush(&mut cross, &mut cross_tot);
        let zt = z.value();
        let log_z = e_max + zt.ln() + self.book.log_multiplicity;
        let mut marginals = Vec::with_capacity(n);
        let mut extrinsics = Vec::with_capacity(n);
        for i in 0..n {
            let sm = minus[i].value();
            let sp = plus[i].value();
            marginals.push((sp - sm) / (sp + sm));
            let l = llrs[i];
            let (a, b) = (sp * (-l).exp(), sm * l.exp());
            extrinsics.push(if a + b > 0.0 { (a - b) / (a + b) } else { 0.0 });
        }
        let entropy = (zt.ln() - ez.value() / zt + self.book.log_multiplicity) / n as f64;
        let covariance = with_covariance.then(|| {
            let mut cov = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        cov[i * n + j] = 4.0 * plus[i].value() * minus[i].value() / (zt * zt);
                        continue;
                    }
                    let mm = both_tot[i * n + j].value();
                    let mp = cross_tot[i * n + j].value();
                    let pm = cross_tot[j * n + i].value();
                    let pp = zt - mm - mp - pm;
                    cov[i * n + j] = 4.0 * (mm * pp - mp * pm) / (zt * zt);
                }
            }
            cov
        });
        Ok(GibbsSummary {
            log_z,
            marginals,
            extrinsics,
            entropy,
            covariance,
        })
    }
}

fn code_bit(inst: &PosteriorInstance, i: usize) -> Result<()> {
    let n = inst.graph.n_code_bits();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, limit: n });
    }
    Ok(())
}

/// `ln Z`.
pub fn partition_function(inst: &PosteriorInstance) -> Result<f64> {
    Ok(ExactSolver::new(inst.graph)?.evaluate(&inst.llrs, false)?.log_z)
}

/// `⟨x_i⟩`.
pub fn marginal(inst: &PosteriorInstance, i: usize) -> Result<f64> {
    code_bit(inst, i)?;
    Ok(ExactSolver::new(inst.graph)?.evaluate(&inst.llrs, false)?.marginals[i])
}

/// `⟨x_i⟩` with `l_i = 0`.
pub fn extrinsic_marginal(inst: &PosteriorInstance, i: usize) -> Result<f64> {
    code_bit(inst, i)?;
    Ok(ExactSolver::new(inst.graph)?.evaluate(&inst.llrs, false)?.extrinsics[i])
}

/// `⟨x_i x_j⟩ − ⟨x_i⟩⟨x_j⟩`.
pub fn pair_correlation(inst: &PosteriorInstance, i: usize, j: usize) -> Result<f64> {
    code_bit(inst, i)?;
    code_bit(inst, j)?;
    let s = ExactSolver::new(inst.graph)?.evaluate(&inst.llrs, true)?;
    Ok(s.cov(i, j).expect("covariance requested"))
}

/// Gibbs entropy per code bit, in nats.
pub fn conditional_entropy(inst: &PosteriorInstance) -> Result<f64> {
    Ok(ExactSolver::new(inst.graph)?.evaluate(&inst.llrs, false)?.entropy)
}

/// Combines an extrinsic estimate with the bit's own observation:
/// `(m + tanh l) / (1 + m tanh l)`.
pub fn combine(extrinsic: f64, l: f64) -> f64 {
    let t = l.tanh();
    (extrinsic + t) / (1.0 + extrinsic * t)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_check() -> TannerGraph {
        TannerGraph::new(2, 1, &[(0, 0), (1, 0)], CodeKind::Ldpc).unwrap()
    }

    fn repetition3() -> TannerGraph {
        TannerGraph::new(3, 2, &[(0, 0), (1, 0), (1, 1), (2, 1)], CodeKind::Ldpc).unwrap()
    }

    /// Sum over every spin configuration of the literal Gibbs weight.
    fn literal(g: &TannerGraph, l: &[f64]) -> (f64, Vec<f64>) {
        let m = g.n_var();
        let n = g.n_code_bits();
        let mut z = 0.0;
        let mut mag = vec![0.0; n];
        for cfg in 0u64..(1 << m) {
            let s = |v: usize| if cfg >> v & 1 == 1 { -1.0 } else { 1.0 };
            let (x, w): (Vec<f64>, f64) = match g.kind() {
                CodeKind::Ldgm => {
                    let x: Vec<f64> = (0..n).map(|i| g.chk_neighbors(i).iter().map(|&v| s(v)).product()).collect();
                    let w = x.iter().zip(l).map(|(xi, li)| (li * xi).exp()).product();
                    (x, w)
                }
                CodeKind::Ldpc => {
                    let x: Vec<f64> = (0..n).map(s).collect();
                    let ind: f64 = (0..g.n_chk())
                        .map(|c| 0.5 * (1.0 + g.chk_neighbors(c).iter().map(|&v| x[v]).product::<f64>()))
                        .product();
                    let w = ind * x.iter().zip(l).map(|(xi, li)| (li * xi).exp()).product::<f64>();
                    (x, w)
                }
            };
            z += w;
            for i in 0..n {
                mag[i] += w * x[i];
            }
        }
        (z, mag.into_iter().map(|v| v / z).collect())
    }

    #[test]
    fn single_check_examples() {
        let g = single_check();
        let inst = PosteriorInstance::new(&g, vec![0.5, 0.0]).unwrap();
        let z = partition_function(&inst).unwrap().exp();
        assert!((z - 2.0 * 0.5f64.cosh()).abs() < 1e-12);
        assert!((z - 2.2552).abs() < 1e-4);
        assert!((marginal(&inst, 0).unwrap() - 0.5f64.tanh()).abs() < 1e-14);
        assert!((pair_correlation(&inst, 0, 1).unwrap() - (1.0 - 0.5f64.tanh().powi(2))).abs() < 1e-14);
        let p = 0.5f64.exp() / z;
        let q = 1.0 - p;
        let h = -(p * p.ln() + q * q.ln()) / 2.0;
        assert!((conditional_entropy(&inst).unwrap() - h).abs() < 1e-14);
        let inst = PosteriorInstance::new(&g, vec![0.5, 0.7]).unwrap();
        assert!((extrinsic_marginal(&inst, 0).unwrap() - 0.7f64.tanh()).abs() < 1e-14);
    }

    #[test]
    fn single_spin_ldgm() {
        let g = TannerGraph::new(1, 1, &[(0, 0)], CodeKind::Ldgm).unwrap();
        let inst = PosteriorInstance::new(&g, vec![0.3]).unwrap();
        assert!((partition_function(&inst).unwrap() - (2.0 * 0.3f64.cosh()).ln()).abs() < 1e-14);
        assert!((marginal(&inst, 0).unwrap() - 0.2913).abs() < 1e-4);
        assert!((marginal(&inst, 0).unwrap() - 0.3f64.tanh()).abs() < 1e-15);
    }

    #[test]
    fn shared_info_bit() {
        let g = TannerGraph::new(1, 2, &[(0, 0), (0, 1)], CodeKind::Ldgm).unwrap();
        let inst = PosteriorInstance::new(&g, vec![0.4, -0.9]).unwrap();
        let c = pair_correlation(&inst, 0, 1).unwrap();
        assert!((c - (1.0 - (0.4f64 - 0.9).tanh().powi(2))).abs() < 1e-14);
    }

    #[test]
    fn repetition_code_zero_field() {
        let g = repetition3();
        let inst = PosteriorInstance::new(&g, vec![0.0; 3]).unwrap();
        // weight one per codeword: Z = |C| = 2
        assert!((partition_function(&inst).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!((conditional_entropy(&inst).unwrap() - 2f64.ln() / 3.0).abs() < 1e-15);
        for i in 0..3 {
            assert_eq!(marginal(&inst, i).unwrap(), 0.0);
        }
    }

    #[test]
    fn disconnected_bits_uncorrelated() {
        let g = TannerGraph::new(4, 2, &[(0, 0), (1, 0), (2, 1), (3, 1)], CodeKind::Ldpc).unwrap();
        let inst = PosteriorInstance::new(&g, vec![0.3, -1.2, 0.7, 2.0]).unwrap();
        assert!(pair_correlation(&inst, 0, 2).unwrap().abs() < 1e-16);
        let iso = TannerGraph::new(3, 1, &[(0, 0), (1, 0)], CodeKind::Ldpc).unwrap();
        let inst = PosteriorInstance::new(&iso, vec![0.3, -1.2, 0.7]).unwrap();
        assert!(extrinsic_marginal(&inst, 2).unwrap().abs() < 1e-15);
    }

    #[test]
    fn saturated_entropy() {
        let g = repetition3();
        let inst = PosteriorInstance::new(&g, vec![30.0, -30.0, 30.0]).unwrap();
        assert!(conditional_entropy(&inst).unwrap() < 1e-8);
    }

    #[test]
    fn matches_literal_enumeration() {
        let ldgm = TannerGraph::new(3, 4, &[(0, 0), (1, 0), (1, 1), (2, 1), (0, 2), (2, 2), (2, 3), (0, 3), (1, 3)], CodeKind::Ldgm).unwrap();
        let ldpc = TannerGraph::new(5, 3, &[(0, 0), (1, 0), (2, 0), (2, 1), (3, 1), (3, 2), (4, 2), (0, 2)], CodeKind::Ldpc).unwrap();
        for g in [ldgm, ldpc] {
            let l: Vec<f64> = (0..g.n_code_bits()).map(|i| 0.37 * i as f64 - 0.8).collect();
            let (z, mag) = literal(&g, &l);
            let s = ExactSolver::new(&g).unwrap().evaluate(&l, true).unwrap();
            assert!((s.log_z - z.ln()).abs() < 1e-13);
            for i in 0..l.len() {
                assert!((s.marginals[i] - mag[i]).abs() < 1e-13);
                assert!((s.marginals[i] - combine(s.extrinsics[i], l[i])).abs() < 1e-13);
            }
        }
    }

    #[test]
    fn cap_and_length_errors() {
        let edges: Vec<(usize, usize)> = (0..25).map(|v| (v, 0)).collect();
        let g = TannerGraph::new(25, 1, &edges, CodeKind::Ldpc).unwrap();
        assert!(matches!(ExactSolver::new(&g), Err(Error::BruteForceCap { free: 25, cap: 24 })));
        let g = single_check();
        assert!(matches!(PosteriorInstance::new(&g, vec![0.1]), Err(Error::LlrLength { .. })));
        assert!(matches!(PosteriorInstance::new(&g, vec![0.1, f64::NAN]), Err(Error::NonFiniteLlr(1))));
    }

    #[test]
    fn ldgm_codebook_multiplicity() {
        // two info bits with identical neighbourhoods: rank 1, multiplicity 2
        let g = TannerGraph::new(2, 2, &[(0, 0), (0, 1), (1, 0), (1, 1)], CodeKind::Ldgm).unwrap();
        let b = Codebook::new(&g, 24).unwrap();
        assert_eq!(b.len(), 2);
        assert_eq!(b.rank(), 1);
        assert!((b.log_multiplicity() - 2f64.ln()).abs() < 1e-15);
        let l = [0.2, -0.5];
        let (z, _) = literal(&g, &l);
        let s = ExactSolver::new(&g).unwrap().evaluate(&l, false).unwrap();
        assert!((s.log_z - z.ln()).abs() < 1e-14);
    }
}
