//! Density evolution by population dynamics.
//!
//! A [`Population`] holds `N_pop` samples of one message density. Each half
//! step resamples the whole population: an edge-perspective degree is
//! drawn, the needed incoming messages are picked uniformly with
//! replacement, and the sum-product rule is applied. All samples saturate
//! at [`L_SAT`].

use rand::Rng as _;
use rayon::prelude::*;

use crate::bp::{boxplus_all, L_SAT};
use crate::channel::{ChannelKind, ChannelModel};
use crate::error::{Error, Result};
use crate::graph::{sample_discrete, CodeKind, DegreeDistribution};
use crate::rng::{derive_seed, substream, Rng};
use crate::sum::mean_se;

/// Default population size.
pub const DEFAULT_POPULATION: usize = 100_000;
const CHUNK: usize = 4096;
const DEGENERATE_FRACTION: f64 = 0.99;

/// Direction of the messages held by a population.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    VarToChk,
    ChkToVar,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Population {
    pub samples: Vec<f64>,
    /// Completed full iterations.
    pub generation: usize,
    pub family: CodeKind,
    pub side: Side,
}

impl Population {
    /// Starting variable-to-check population: all zeros for LDGM, channel
    /// samples for LDPC.
    pub fn initial(family: CodeKind, ch: &ChannelModel, n_pop: usize, seed: u64) -> Result<Self> {
        if n_pop == 0 {
            return Err(Error::Parameter("population must be non-empty".into()));
        }
        let samples = match family {
            CodeKind::Ldgm => vec![0.0; n_pop],
            CodeKind::Ldpc => generate(n_pop, seed, |rng| ch.draw(rng).clamp(-L_SAT, L_SAT)),
        };
        Ok(Self {
            samples,
            generation: 0,
            family,
            side: Side::VarToChk,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Fraction of samples at the saturation bound.
    pub fn saturated_fraction(&self) -> f64 {
        saturated_fraction(&self.samples)
    }

    fn pick(&self, rng: &mut Rng) -> f64 {
        self.samples[rng.random_range(0..self.samples.len())]
    }
}

fn saturated_fraction(xs: &[f64]) -> f64 {
    xs.iter().filter(|x| x.abs() >= L_SAT).count() as f64 / xs.len() as f64
}

/// `n` samples from `f`, chunk `c` drawing from `substream(seed, c)`.
fn generate<F>(n: usize, seed: u64, f: F) -> Vec<f64>
where
    F: Fn(&mut Rng) -> f64 + Sync,
{
    let chunks: Vec<Vec<f64>> = (0..n.div_ceil(CHUNK))
        .into_par_iter()
        .map(|c| {
            let mut rng = substream(seed, c as u64);
            let len = CHUNK.min(n - c * CHUNK);
            (0..len).map(|_| f(&mut rng)).collect()
        })
        .collect();
    chunks.concat()
}

fn sat(x: f64) -> f64 {
    x.clamp(-L_SAT, L_SAT)
}

/// One half-iteration. A variable-to-check population goes through a check
/// step, a check-to-variable population through a variable step.
pub fn de_step(pop: &Population, dd: &DegreeDistribution, ch: &ChannelModel, seed: u64) -> Result<Population> {
    if pop.is_empty() {
        return Err(Error::Parameter("population must be non-empty".into()));
    }
    let (side, generation, samples) = match pop.side {
        Side::VarToChk => {
            let w = dd.chk_edge_perspective();
            let samples = match pop.family {
                CodeKind::Ldgm => generate(pop.len(), seed, |rng| {
                    let k = sample_discrete(&w, rng);
                    let l = ch.draw(rng);
                    let vs: Vec<f64> = (1..k).map(|_| pop.pick(rng)).collect();
                    sat(boxplus_all(std::iter::once(l).chain(vs)))
                }),
                CodeKind::Ldpc => generate(pop.len(), seed, |rng| {
                    let k = sample_discrete(&w, rng);
                    let ls: Vec<f64> = (1..k).map(|_| pop.pick(rng)).collect();
                    sat(boxplus_all(ls))
                }),
            };
            (Side::ChkToVar, pop.generation, samples)
        }
        Side::ChkToVar => {
            let w = dd.var_edge_perspective();
            let samples = match pop.family {
                CodeKind::Ldgm => generate(pop.len(), seed, |rng| {
                    let k = sample_discrete(&w, rng);
                    sat((1..k).map(|_| pop.pick(rng)).sum())
                }),
                CodeKind::Ldpc => generate(pop.len(), seed, |rng| {
                    let k = sample_discrete(&w, rng);
                    let l = ch.draw(rng);
                    sat(l + (1..k).map(|_| pop.pick(rng)).sum::<f64>())
                }),
            };
            (Side::VarToChk, pop.generation + 1, samples)
        }
    };
    Ok(Population {
        samples,
        generation,
        family: pop.family,
        side,
    })
}

/// Samples of the extrinsic root field after `d` iterations: `Δ^{(d)}`
/// (LDGM, `tanh Δ = ∏_{i≤k} tanh v_i`, `k ~ P_k`) or `Λ^{(d)}` (LDPC,
/// `Σ_{a≤l} w_a`, `l ~ Λ_l`).
pub fn de_run(
    family: CodeKind,
    dd: &DegreeDistribution,
    ch: &ChannelModel,
    d: usize,
    n_pop: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut pop = Population::initial(family, ch, n_pop, derive_seed(seed, 0))?;
    let mut step = 1u64;
    let mut next = |pop: &Population| {
        step += 1;
        de_step(pop, dd, ch, derive_seed(seed, step))
    };
    match family {
        CodeKind::Ldgm => {
            for _ in 0..d {
                pop = next(&pop)?;
                pop = next(&pop)?;
            }
            let pk = dd.chk_coeffs().to_vec();
            Ok(generate(n_pop, derive_seed(seed, u64::MAX), |rng| {
                let k = sample_discrete(&pk, rng);
                sat(boxplus_all((0..k).map(|_| pop.pick(rng))))
            }))
        }
        CodeKind::Ldpc => {
            if d == 0 {
                return Ok(vec![0.0; n_pop]);
            }
            for t in 0..d {
                pop = next(&pop)?;
                if t + 1 < d {
                    pop = next(&pop)?;
                }
            }
            let lk = dd.var_coeffs().to_vec();
            Ok(generate(n_pop, derive_seed(seed, u64::MAX), |rng| {
                let k = sample_discrete(&lk, rng);
                sat((0..k).map(|_| pop.pick(rng)).sum())
            }))
        }
    }
}

/// GEXIT prefactor: `Λ'(1)/P'(1)` for LDGM, 1 for LDPC.
pub fn gexit_prefactor(family: CodeKind, dd: &DegreeDistribution) -> f64 {
    match family {
        CodeKind::Ldgm => dd.var_mean() / dd.chk_mean(),
        CodeKind::Ldpc => 1.0,
    }
}

/// DE estimate with its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeEstimate {
    pub value: f64,
    pub std_error: f64,
    /// More than 99% of the final population is saturated.
    pub degenerate: bool,
}

/// DE limit of the BP-GEXIT function after `d` iterations.
///
/// BSC: the kernel `∫ dl (∂c/∂ε) ln{(1 + tanh Δ tanh l)/(1 + tanh l)}` per
/// population sample. BIAWGNC: the magnetization form
/// `(1 − tanh(l + Δ))/(2ε²)` with a fresh channel sample per population
/// sample.
pub fn de_gexit(
    family: CodeKind,
    dd: &DegreeDistribution,
    ch: &ChannelModel,
    d: usize,
    n_pop: usize,
    seed: u64,
) -> Result<DeEstimate> {
    if d == 0 {
        return Err(Error::Parameter("de_gexit needs d >= 1".into()));
    }
    let fields = de_run(family, dd, ch, d, n_pop, seed)?;
    let pref = gexit_prefactor(family, dd);
    let per_sample: Vec<f64> = match ch.kind() {
        ChannelKind::Bsc => fields
            .par_iter()
            .map(|&delta| {
                let t = delta.tanh();
                ch.gexit_kernel_integral(|l| {
                    let tl = l.tanh();
                    (1.0 + t * tl).ln() - (1.0 + tl).ln()
                })
                .map(|v| pref * v)
            })
            .collect::<Result<_>>()?,
        ChannelKind::Biawgnc => {
            let eps = ch.eps();
            let ls = generate(n_pop, derive_seed(seed, u64::MAX - 1), |rng| ch.draw(rng));
            fields
                .iter()
                .zip(&ls)
                .map(|(&delta, &l)| pref * (1.0 - (l + delta).tanh()) / (2.0 * eps * eps))
                .collect()
        }
    };
    let (value, std_error) = mean_se(&per_sample);
    Ok(DeEstimate {
        value,
        std_error,
        degenerate: saturated_fraction(&fields) > DEGENERATE_FRACTION,
    })
}

/// `E[(tanh F)^{2p}]` for the extrinsic root field `F` after `d` iterations.
pub fn de_moment(
    family: CodeKind,
    dd: &DegreeDistribution,
    ch: &ChannelModel,
    d: usize,
    n_pop: usize,
    p: u32,
    seed: u64,
) -> Result<DeEstimate> {
    if p == 0 {
        return Err(Error::Parameter("moment order p must be >= 1".into()));
    }
    let fields = de_run(family, dd, ch, d, n_pop, seed)?;
    let xs: Vec<f64> = fields.iter().map(|f| f.tanh().powi(2 * p as i32)).collect();
    let (value, std_error) = mean_se(&xs);
    Ok(DeEstimate {
        value,
        std_error,
        degenerate: saturated_fraction(&fields) > DEGENERATE_FRACTION,
    })
}

/// Full BP marginals `tanh(l + F)` with a fresh channel sample per
/// population sample.
pub fn de_marginals(
    family: CodeKind,
    dd: &DegreeDistribution,
    ch: &ChannelModel,
    d: usize,
    n_pop: usize,
    seed: u64,
) -> Result<Vec<f64>> {
    let fields = de_run(family, dd, ch, d, n_pop, seed)?;
    let ls = generate(n_pop, derive_seed(seed, u64::MAX - 1), |rng| ch.draw(rng));
    Ok(fields.iter().zip(&ls).map(|(f, l)| (l + f).tanh()).collect())
}
