//! GEXIT estimates for finite codes.
//!
//! Every estimator draws sample `k` from its own substreams: the code (for
//! ensembles) from `derive_seed(seed, 1)` and the channel base variates from
//! `derive_seed(seed, 2)`. Estimators called with the same seed therefore
//! see the same codes and the same noise, and `entropy_fd` couples its two
//! noise levels through shared base variates.
//!
//! Per-sample values average the kernel over all code bits, which is the
//! conditional expectation of the uniformly chosen root bit.

use std::borrow::Cow;
use std::fmt;

use rayon::prelude::*;

use crate::bp::bp_run;
use crate::channel::{ChannelKind, ChannelModel};
use crate::error::{Error, Result};
use crate::gibbs::{ExactSolver, PosteriorInstance, BRUTE_FORCE_CAP};
use crate::graph::{sample_ensemble, CodeKind, DegreeDistribution, TannerGraph};
use crate::rng::{derive_seed, substream};
use crate::sum::mean_se;

/// Default truncation order of the moment series.
pub const DEFAULT_P_MAX: u32 = 20;

/// Where the codes come from.
#[derive(Debug, Clone)]
pub enum CodeSource {
    Fixed(TannerGraph),
    /// Configuration-model ensemble with `n` code bits; a fresh graph per
    /// sample.
    Ensemble {
        dd: DegreeDistribution,
        kind: CodeKind,
        n: usize,
    },
}

impl CodeSource {
    pub fn kind(&self) -> CodeKind {
        match self {
            CodeSource::Fixed(g) => g.kind(),
            CodeSource::Ensemble { kind, .. } => *kind,
        }
    }

    /// Number of code bits.
    pub fn n(&self) -> usize {
        match self {
            CodeSource::Fixed(g) => g.n_code_bits(),
            CodeSource::Ensemble { n, .. } => *n,
        }
    }

    fn graph(&self, seed: u64, k: u64) -> Result<Cow<'_, TannerGraph>> {
        match self {
            CodeSource::Fixed(g) => Ok(Cow::Borrowed(g)),
            CodeSource::Ensemble { dd, kind, n } => {
                let s = derive_seed(derive_seed(seed, 1), k);
                Ok(Cow::Owned(sample_ensemble(dd, *n, *kind, s)?))
            }
        }
    }
}

/// Family prefactor: code bits per information bit for LDGM, 1 for LDPC.
/// For LDGM this equals `Λ'(1)/P'(1)` by edge counting.
pub fn prefactor(g: &TannerGraph) -> f64 {
    match g.kind() {
        CodeKind::Ldgm => g.n_chk() as f64 / g.n_var() as f64,
        CodeKind::Ldpc => 1.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GexitMethod {
    Functional,
    Series,
    AwgnMagnetization,
    Bp,
    EntropyFd,
}

impl GexitMethod {
    pub fn as_str(self) -> &'static str {
        match self {
            GexitMethod::Functional => "functional",
            GexitMethod::Series => "series",
            GexitMethod::AwgnMagnetization => "awgn-magnetization",
            GexitMethod::Bp => "bp",
            GexitMethod::EntropyFd => "entropy-fd",
        }
    }
}

impl fmt::Display for GexitMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A Monte Carlo GEXIT value with the parameters that reproduce it.
#[derive(Debug, Clone, PartialEq)]
pub struct GexitEstimate {
    pub value: f64,
    pub std_error: f64,
    pub method: GexitMethod,
    pub eps: f64,
    pub n: usize,
    /// BP depth, or `None` for MAP methods.
    pub d: Option<usize>,
    pub samples: usize,
    pub seed: u64,
    /// Bound on the series truncation error; zero for other methods.
    pub tail_bound: f64,
}

impl GexitEstimate {
    /// Standard error above `tol`.
    pub fn exceeds(&self, tol: f64) -> bool {
        self.std_error > tol
    }
}

struct Sample<'a> {
    graph: Cow<'a, TannerGraph>,
    base: Vec<f64>,
}

fn validate(source: &CodeSource, samples: usize) -> Result<()> {
    if samples < 2 {
        return Err(Error::Parameter("at least two samples are needed".into()));
    }
    let n = source.n();
    if n > BRUTE_FORCE_CAP {
        return Err(Error::BruteForceCap {
            free: n,
            cap: BRUTE_FORCE_CAP,
        });
    }
    Ok(())
}

/// Runs `f` on every sample in parallel, in sample order.
fn monte_carlo<R, F>(source: &CodeSource, ch: &ChannelModel, samples: usize, seed: u64, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(&Sample, &ChannelModel) -> Result<R> + Sync,
{
    let noise_seed = derive_seed(seed, 2);
    (0..samples as u64)
        .into_par_iter()
        .map(|k| {
            let graph = source.graph(seed, k)?;
            let mut rng = substream(noise_seed, k);
            let base = (0..graph.n_code_bits()).map(|_| ch.base_variate(&mut rng)).collect();
            f(&Sample { graph, base }, ch)
        })
        .collect()
}

fn llrs(s: &Sample, ch: &ChannelModel) -> Vec<f64> {
    s.base.iter().map(|&b| ch.llr_from_base(b)).collect()
}

/// Codebook enumeration costs `2^rank ≤ 2^n`; the LDGM spin count may
/// exceed the code length, so the spin cap is lifted once `n` is checked.
fn solver(g: &TannerGraph) -> Result<ExactSolver<'_>> {
    ExactSolver::with_cap(g, 64)
}

/// `∫ (∂c/∂ε) ln[(1 + m tanh l)/(1 + tanh l)] dl`.
pub fn extrinsic_kernel(ch: &ChannelModel, m: f64) -> Result<f64> {
    ch.gexit_kernel_integral(|l| {
        let t = l.tanh();
        (m * t).ln_1p() - t.ln_1p()
    })
}

fn kernel_mean(ch: &ChannelModel, extrinsics: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for &m in extrinsics {
        acc += extrinsic_kernel(ch, m)?;
    }
    Ok(acc / extrinsics.len() as f64)
}

fn finish(
    xs: Vec<(f64, f64)>,
    method: GexitMethod,
    ch: &ChannelModel,
    source: &CodeSource,
    d: Option<usize>,
    seed: u64,
) -> GexitEstimate {
    // each sample carries (prefactor, raw value)
    let vals: Vec<f64> = xs.iter().map(|(p, v)| p * v).collect();
    let (value, std_error) = mean_se(&vals);
    GexitEstimate {
        value,
        std_error,
        method,
        eps: ch.eps(),
        n: source.n(),
        d,
        samples: xs.len(),
        seed,
        tail_bound: 0.0,
    }
}

/// MAP-GEXIT through the extrinsic functional.
pub fn map_gexit(source: &CodeSource, ch: &ChannelModel, samples: usize, seed: u64) -> Result<GexitEstimate> {
    validate(source, samples)?;
    let xs = exact_map(source, ch, samples, seed, |g, sum, _| {
        Ok((prefactor(g), kernel_mean(ch, &sum.extrinsics)?))
    })?;
    Ok(finish(xs, GexitMethod::Functional, ch, source, None, seed))
}

/// Per-sample exact summaries, reusing the solver for a fixed graph.
fn exact_map<R, F>(source: &CodeSource, ch: &ChannelModel, samples: usize, seed: u64, f: F) -> Result<Vec<R>>
where
    R: Send,
    F: Fn(&TannerGraph, &crate::gibbs::GibbsSummary, &[f64]) -> Result<R> + Sync,
{
    match source {
        CodeSource::Fixed(g) => {
            let sol = solver(g)?;
            monte_carlo(source, ch, samples, seed, |s, ch| {
                let l = llrs(s, ch);
                f(g, &sol.evaluate(&l, false)?, &l)
            })
        }
        CodeSource::Ensemble { .. } => monte_carlo(source, ch, samples, seed, |s, ch| {
            let l = llrs(s, ch);
            f(&s.graph, &solver(&s.graph)?.evaluate(&l, false)?, &l)
        }),
    }
}

/// `Σ_{p > p_max} 1/(2p(2p−1))`.
pub fn series_tail_weight(p_max: u32) -> f64 {
    let head: f64 = (1..=p_max).map(|p| 1.0 / (2.0 * p as f64 * (2.0 * p as f64 - 1.0))).sum();
    (std::f64::consts::LN_2 - head).max(0.0)
}

/// `Σ_{p=1}^{p_max} T_2p/(2p(2p−1)) (μ_2p − 1)` for given moments
/// `μ_2p`, `moments[p−1]`.
pub fn series_from_moments(ch: &ChannelModel, moments: &[f64]) -> Result<f64> {
    let mut acc = 0.0;
    for (k, &mu) in moments.iter().enumerate() {
        let p = k as u32 + 1;
        let w = 2.0 * p as f64 * (2.0 * p as f64 - 1.0);
        acc += ch.t2p(p)? / w * (mu - 1.0);
    }
    Ok(acc)
}

/// MAP-GEXIT through the moment series truncated at `p_max`, with a bound
/// on the truncation error in `tail_bound`.
pub fn map_gexit_series(
    source: &CodeSource,
    ch: &ChannelModel,
    p_max: u32,
    samples: usize,
    seed: u64,
) -> Result<GexitEstimate> {
    if p_max == 0 {
        return Err(Error::Parameter("p_max must be at least 1".into()));
    }
    validate(source, samples)?;
    let weights: Vec<f64> = (1..=p_max)
        .map(|p| Ok(ch.t2p(p)? / (2.0 * p as f64 * (2.0 * p as f64 - 1.0))))
        .collect::<Result<_>>()?;
    let xs = exact_map(source, ch, samples, seed, |g, sum, _| {
        let mut acc = 0.0;
        for &m in &sum.extrinsics {
            let m2 = m * m;
            let mut pw = 1.0;
            for w in &weights {
                pw *= m2;
                acc += w * (pw - 1.0);
            }
        }
        Ok((prefactor(g), acc / sum.extrinsics.len() as f64))
    })?;
    let pref_max = xs.iter().map(|x| x.0).fold(0.0, f64::max);
    let mut est = finish(xs, GexitMethod::Series, ch, source, None, seed);
    est.tail_bound = pref_max * ch.t2p_sup(p_max + 1)? * series_tail_weight(p_max);
    Ok(est)
}

/// BIAWGNC GEXIT through the magnetization:
/// `prefactor (1 − E⟨x_i⟩)/(2ε²)`.
pub fn awgn_gexit(source: &CodeSource, ch: &ChannelModel, samples: usize, seed: u64) -> Result<GexitEstimate> {
    if ch.kind() != ChannelKind::Biawgnc {
        return Err(Error::InvalidChannel("magnetization form needs the BIAWGNC".into()));
    }
    validate(source, samples)?;
    let scale = 1.0 / (2.0 * ch.eps() * ch.eps());
    let xs = exact_map(source, ch, samples, seed, |g, sum, _| {
        let n = sum.marginals.len() as f64;
        let v = sum.marginals.iter().map(|m| 1.0 - m).sum::<f64>() / n;
        Ok((prefactor(g), scale * v))
    })?;
    Ok(finish(xs, GexitMethod::AwgnMagnetization, ch, source, None, seed))
}

/// BP-GEXIT: the functional with extrinsics from `d` BP iterations.
pub fn bp_gexit(source: &CodeSource, ch: &ChannelModel, d: usize, samples: usize, seed: u64) -> Result<GexitEstimate> {
    if samples < 2 {
        return Err(Error::Parameter("at least two samples are needed".into()));
    }
    let xs = monte_carlo(source, ch, samples, seed, |s, ch| {
        let inst = PosteriorInstance::new(&s.graph, llrs(s, ch))?;
        let out = bp_run(&inst, d);
        Ok((prefactor(&s.graph), kernel_mean(ch, &out.extrinsics)?))
    })?;
    Ok(finish(xs, GexitMethod::Bp, ch, source, Some(d), seed))
}

/// Central difference of the conditional entropy per code bit, with both
/// noise levels driven by the same base variates.
pub fn entropy_fd(
    source: &CodeSource,
    ch: &ChannelModel,
    eps_step: f64,
    samples: usize,
    seed: u64,
) -> Result<GexitEstimate> {
    validate(source, samples)?;
    let eps = ch.eps();
    let room = eps.min(ch.eps_max() - eps);
    if !(eps_step > 0.0) || eps_step > 0.1 * room {
        return Err(Error::Parameter(format!(
            "step {eps_step} too large at eps = {eps}; at most {}",
            0.1 * room
        )));
    }
    let hi = ch.with_eps(eps + eps_step)?;
    let lo = ch.with_eps(eps - eps_step)?;
    let entropy_pair = |g: &TannerGraph, sol: &ExactSolver, s: &Sample| -> Result<(f64, f64)> {
        let h1 = sol.evaluate(&llrs(s, &hi), false)?.entropy;
        let h0 = sol.evaluate(&llrs(s, &lo), false)?.entropy;
        Ok((prefactor(g), (h1 - h0) / (2.0 * eps_step)))
    };
    let xs = match source {
        CodeSource::Fixed(g) => {
            let sol = solver(g)?;
            monte_carlo(source, ch, samples, seed, |s, _| entropy_pair(g, &sol, s))?
        }
        CodeSource::Ensemble { .. } => {
            monte_carlo(source, ch, samples, seed, |s, _| entropy_pair(&s.graph, &solver(&s.graph)?, s))?
        }
    };
    Ok(finish(xs, GexitMethod::EntropyFd, ch, source, None, seed))
}

/// `Ê⟨x_i⟩^{2p−1} − Ê⟨x_i⟩^{2p}` over full marginals.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NishimoriResidual {
    /// Absolute difference of the two empirical moments.
    pub residual: f64,
    pub std_error: f64,
    pub odd_moment: f64,
    pub even_moment: f64,
}

impl NishimoriResidual {
    pub fn within(&self, k_se: f64) -> bool {
        self.residual <= k_se * self.std_error
    }
}

pub fn nishimori_residual(
    source: &CodeSource,
    ch: &ChannelModel,
    p: u32,
    samples: usize,
    seed: u64,
) -> Result<NishimoriResidual> {
    if p == 0 {
        return Err(Error::Parameter("p must be at least 1".into()));
    }
    validate(source, samples)?;
    let xs = exact_map(source, ch, samples, seed, |_, sum, _| {
        let n = sum.marginals.len() as f64;
        let odd = sum.marginals.iter().map(|m| m.powi(2 * p as i32 - 1)).sum::<f64>() / n;
        let even = sum.marginals.iter().map(|m| m.powi(2 * p as i32)).sum::<f64>() / n;
        Ok((odd, even))
    })?;
    let diff: Vec<f64> = xs.iter().map(|(o, e)| o - e).collect();
    let (d, se) = mean_se(&diff);
    let odd: Vec<f64> = xs.iter().map(|x| x.0).collect();
    let even: Vec<f64> = xs.iter().map(|x| x.1).collect();
    Ok(NishimoriResidual {
        residual: d.abs(),
        std_error: se,
        odd_moment: mean_se(&odd).0,
        even_moment: mean_se(&even).0,
    })
}

/// `Ê⟨x_i⟩_0^{2p}` for `p = 1..=p_max`, each with its standard error.
pub fn extrinsic_moments(
    source: &CodeSource,
    ch: &ChannelModel,
    p_max: u32,
    samples: usize,
    seed: u64,
) -> Result<Vec<(f64, f64)>> {
    validate(source, samples)?;
    let xs = exact_map(source, ch, samples, seed, |_, sum, _| {
        let n = sum.extrinsics.len() as f64;
        Ok((1..=p_max)
            .map(|p| sum.extrinsics.iter().map(|m| m.powi(2 * p as i32)).sum::<f64>() / n)
            .collect::<Vec<f64>>())
    })?;
    Ok((0..p_max as usize)
        .map(|k| mean_se(&xs.iter().map(|x| x[k]).collect::<Vec<_>>()))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::random_tree;

    fn repetition3() -> TannerGraph {
        TannerGraph::new(3, 2, &[(0, 0), (1, 0), (1, 1), (2, 1)], CodeKind::Ldpc).unwrap()
    }

    fn small_ldgm() -> TannerGraph {
        TannerGraph::new(
            3,
            5,
            &[(0, 0), (1, 0), (1, 1), (2, 1), (2, 2), (0, 3), (1, 3), (2, 4), (0, 4)],
            CodeKind::Ldgm,
        )
        .unwrap()
    }

    #[test]
    fn kernel_limits() {
        let ch = ChannelModel::bsc(0.2).unwrap();
        assert!(extrinsic_kernel(&ch, 1.0).unwrap().abs() < 1e-15);
        let zero = extrinsic_kernel(&ch, 0.0).unwrap();
        assert!((zero - 2.0 * 0.6f64.atanh()).abs() < 1e-6);
        let moments = vec![0.0; 200];
        let series = series_from_moments(&ch, &moments).unwrap();
        assert!((series - 2.0 * 0.6f64.atanh()).abs() < 1e-9);
        let ones = vec![1.0; 5];
        assert_eq!(series_from_moments(&ch, &ones).unwrap(), 0.0);
    }

    #[test]
    fn uncoded_bit_matches_binary_entropy_derivative() {
        let g = TannerGraph::new(1, 0, &[], CodeKind::Ldpc).unwrap();
        let src = CodeSource::Fixed(g);
        let ch = ChannelModel::bsc(0.3).unwrap();
        let exact = (0.7f64 / 0.3).ln();
        let fd = entropy_fd(&src, &ch, 1e-3, 50, 1).unwrap();
        assert!((fd.value - exact).abs() < 1e-5, "{}", fd.value);
        let fun = map_gexit(&src, &ch, 50, 1).unwrap();
        assert!((fun.value - exact).abs() < 1e-6);
        let ser = map_gexit_series(&src, &ch, 20, 50, 1).unwrap();
        assert!((ser.value - exact).abs() < 1e-3 + ser.tail_bound);
    }

    #[test]
    fn functional_matches_entropy_difference() {
        let src = CodeSource::Fixed(repetition3());
        let ch = ChannelModel::bsc(0.3).unwrap();
        let f = map_gexit(&src, &ch, 4000, 3).unwrap();
        let e = entropy_fd(&src, &ch, 0.01, 4000, 3).unwrap();
        let tol = 3.0 * (f.std_error.powi(2) + e.std_error.powi(2)).sqrt();
        assert!((f.value - e.value).abs() < tol, "{f:?} {e:?}");
        let s = map_gexit_series(&src, &ch, 20, 4000, 3).unwrap();
        assert!((s.value - f.value).abs() < 3.0 * s.std_error + s.tail_bound + 1e-9);
    }

    #[test]
    fn awgn_magnetization_matches_functional() {
        let src = CodeSource::Fixed(small_ldgm());
        let ch = ChannelModel::biawgnc(0.8).unwrap();
        let a = awgn_gexit(&src, &ch, 300, 5).unwrap();
        let f = map_gexit(&src, &ch, 300, 5).unwrap();
        let tol = 3.0 * (a.std_error.powi(2) + f.std_error.powi(2)).sqrt();
        assert!((a.value - f.value).abs() < tol, "{a:?} {f:?}");
        assert!(awgn_gexit(&src, &ChannelModel::bsc(0.1).unwrap(), 10, 5).is_err());
    }

    #[test]
    fn bp_on_trees_equals_map() {
        for kind in [CodeKind::Ldgm, CodeKind::Ldpc] {
            let g = random_tree(5, 4, kind, 11).unwrap();
            let src = CodeSource::Fixed(g);
            let ch = ChannelModel::bsc(0.25).unwrap();
            let b = bp_gexit(&src, &ch, 20, 50, 2).unwrap();
            let m = map_gexit(&src, &ch, 50, 2).unwrap();
            assert!((b.value - m.value).abs() < 1e-9);
            let b0 = bp_gexit(&src, &ch, 0, 50, 2).unwrap();
            let pref = prefactor(match &src {
                CodeSource::Fixed(g) => g,
                _ => unreachable!(),
            });
            assert!((b0.value - pref * 2.0 * 0.5f64.atanh()).abs() < 1e-6);
        }
    }

    #[test]
    fn nishimori_on_small_codes() {
        let ch = ChannelModel::bsc(0.2).unwrap();
        for g in [repetition3(), small_ldgm()] {
            let src = CodeSource::Fixed(g);
            for p in 1..=3 {
                let r = nishimori_residual(&src, &ch, p, 3000, 8).unwrap();
                assert!(r.within(4.0), "{r:?}");
            }
        }
        let half = ChannelModel::bsc(0.5).unwrap();
        let r = nishimori_residual(&CodeSource::Fixed(repetition3()), &half, 1, 10, 0).unwrap();
        assert!(r.odd_moment.abs() < 1e-15 && r.even_moment.abs() < 1e-15);
    }

    #[test]
    fn ensemble_source_and_determinism() {
        let src = CodeSource::Ensemble {
            dd: DegreeDistribution::regular(3, 2).unwrap(),
            kind: CodeKind::Ldgm,
            n: 6,
        };
        let ch = ChannelModel::bsc(0.4).unwrap();
        let a = map_gexit(&src, &ch, 40, 9).unwrap();
        let b = map_gexit(&src, &ch, 40, 9).unwrap();
        assert_eq!(a, b);
        assert!(a.value.is_finite() && a.std_error > 0.0);
    }

    #[test]
    fn step_checks() {
        let src = CodeSource::Fixed(repetition3());
        let ch = ChannelModel::bsc(0.45).unwrap();
        assert!(entropy_fd(&src, &ch, 0.01, 10, 0).is_err());
        assert!(entropy_fd(&src, &ch, 0.001, 10, 0).is_ok());
    }
}
