//! Experiment drivers.

use std::collections::BTreeMap;

use gibbscode::bp::bp_run;
use gibbscode::channel::{ChannelKind, ChannelModel};
use gibbscode::cluster::{
    berretti_avg_bound, berretti_identity, dkp_avg_bound, CompatibilityRule, DkpWalks, CLUSTER_SIZE_CAP, WALK_CAP,
};
use gibbscode::de::{de_gexit, DEFAULT_POPULATION};
use gibbscode::duality::{gf2_rank, macwilliams_residual, max_duality_residuals, DualInstance, Gf2Matrix, SINH_FLOOR};
use gibbscode::error::Error as CoreError;
use gibbscode::gexit::{
    awgn_gexit, bp_gexit, entropy_fd, map_gexit, map_gexit_series, CodeSource, GexitEstimate, DEFAULT_P_MAX,
};
use gibbscode::gibbs::{ExactSolver, PosteriorInstance, BRUTE_FORCE_CAP};
use gibbscode::graph::{sample_ensemble, CodeKind, DegreeDistribution, TannerGraph};
use gibbscode::rng::{derive_seed, substream};
use gibbscode::sum::mean_se;
use rayon::prelude::*;
use serde_json::{json, Value};

use crate::config::{CodeSpec, ExperimentConfig, ExperimentKind};
use crate::corpus::{random_sized_graph, uniform_llrs};
use crate::emit::{num, object, Cell, ExperimentOutput, Table};
use crate::error::{Context, ExpError, Result};
use crate::fit::{fit_exponential, DecayFit, DecayPoint};

pub const CORR_DECAY_HEADER: [&str; 4] = ["distance", "mean_abs_corr", "std_err", "n_samples"];
pub const GEXIT_HEADER: [&str; 8] = ["eps", "method", "value", "std_err", "n", "d", "samples", "seed"];
pub const DE_HEADER: [&str; 7] = ["eps", "d", "value", "std_err", "n_pop", "seed", "degenerate"];
pub const LIMITS_HEADER: [&str; 7] = ["eps", "d_prime", "d", "g_d_prime", "g_d", "abs_diff", "seed"];
pub const WALK_BOUND_HEADER: [&str; 11] = [
    "eps",
    "graph",
    "i",
    "j",
    "distance",
    "mean_abs_corr",
    "mean_pointwise_bound",
    "max_excess",
    "avg_bound",
    "avg_diverged",
    "walks_truncated",
];
pub const CLUSTER_BOUND_HEADER: [&str; 9] =
    ["eps", "graph", "i", "j", "distance", "mean_abs_corr", "std_err", "avg_bound", "avg_diverged"];
pub const DUALITY_HEADER: [&str; 8] = [
    "graph",
    "draw",
    "n",
    "m",
    "rank",
    "macwilliams_residual",
    "max_marginal_residual",
    "max_pair_residual",
];
pub const BERRETTI_HEADER: [&str; 8] = ["graph", "draw", "i", "j", "lhs", "rhs", "residual", "n_clusters"];

/// Default pass thresholds.
pub const WALK_BOUND_SLACK: f64 = 1e-12;
pub const MACWILLIAMS_TOL: f64 = 1e-10;
pub const DUALITY_TOL: f64 = 1e-8;
pub const BERRETTI_TOL: f64 = 1e-8;
pub const LIMITS_TAIL_TOL: f64 = 1e-6;

/// Seed of grid point `k`.
pub fn point_seed(seed: u64, k: usize) -> u64 {
    derive_seed(seed, k as u64 + 1)
}

/// Resolved code specification.
enum Codes {
    Fixed(TannerGraph),
    Ensemble {
        dd: DegreeDistribution,
        kind: CodeKind,
        n: usize,
    },
    Random {
        kind: CodeKind,
        count: usize,
        min_var: usize,
        max_var: usize,
        max_chk: usize,
        density: f64,
    },
}

impl Codes {
    fn load(spec: &CodeSpec) -> Result<Self> {
        Ok(match spec {
            CodeSpec::File { path } => Codes::Fixed(TannerGraph::from_text(&std::fs::read_to_string(path)?)?),
            CodeSpec::Ensemble { family, n, .. } => Codes::Ensemble {
                dd: spec.degree_distribution().expect("ensemble")?,
                kind: (*family).into(),
                n: *n,
            },
            CodeSpec::Random {
                family,
                count,
                min_var,
                max_var,
                max_chk,
                density,
            } => Codes::Random {
                kind: (*family).into(),
                count: *count,
                min_var: *min_var,
                max_var: *max_var,
                max_chk: *max_chk,
                density: *density,
            },
        })
    }

    fn kind(&self) -> CodeKind {
        match self {
            Codes::Fixed(g) => g.kind(),
            Codes::Ensemble { kind, .. } | Codes::Random { kind, .. } => *kind,
        }
    }

    /// Graph `k` of the family seeded by `seed`.
    fn graph(&self, seed: u64, k: u64) -> Result<TannerGraph> {
        let s = derive_seed(derive_seed(seed, 1), k);
        match self {
            Codes::Fixed(g) => Ok(g.clone()),
            Codes::Ensemble { dd, kind, n } => Ok(sample_ensemble(dd, *n, *kind, s)?),
            Codes::Random {
                kind,
                min_var,
                max_var,
                max_chk,
                density,
                ..
            } => random_sized_graph(*min_var, *max_var, *max_chk, *density, *kind, s),
        }
    }

    /// Distinct graphs used by the corpus suites.
    fn corpus(&self, seed: u64, graphs: Option<usize>) -> Result<Vec<TannerGraph>> {
        let count = match self {
            Codes::Fixed(_) => 1,
            Codes::Random { count, .. } => *count,
            Codes::Ensemble { .. } => graphs.unwrap_or(10),
        };
        (0..count as u64).map(|k| self.graph(seed, k)).collect()
    }

    fn gexit_source(&self) -> Result<CodeSource> {
        match self {
            Codes::Fixed(g) => Ok(CodeSource::Fixed(g.clone())),
            Codes::Ensemble { dd, kind, n } => Ok(CodeSource::Ensemble {
                dd: dd.clone(),
                kind: *kind,
                n: *n,
            }),
            Codes::Random { .. } => Err(ExpError::Config("GEXIT needs a file or ensemble code spec".into())),
        }
    }
}

/// Runs the configured experiment. Deterministic given the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let codes = Codes::load(&cfg.code)?;
    match cfg.kind()? {
        ExperimentKind::CorrDecay => corr_decay(cfg, &codes),
        ExperimentKind::GexitCurve => gexit_curve(cfg, &codes),
        ExperimentKind::DeCurve => de_curve(cfg, &codes),
        ExperimentKind::Bounds => bounds(cfg, &codes),
        ExperimentKind::DualityCheck => duality_check(cfg, &codes),
        ExperimentKind::BerrettiCheck => berretti_check(cfg, &codes),
        ExperimentKind::Limits => limits(cfg, &codes),
    }
}

fn need_samples(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.samples < 2 {
        return Err(ExpError::Config("this experiment needs at least two samples".into()));
    }
    Ok(())
}

fn check_size(g: &TannerGraph) -> Result<()> {
    if g.n_code_bits() > BRUTE_FORCE_CAP {
        return Err(ExpError::Config(format!(
            "{} code bits exceed the brute-force cap {BRUTE_FORCE_CAP}",
            g.n_code_bits()
        )));
    }
    Ok(())
}

/// Exact solver bound to a code of at most `BRUTE_FORCE_CAP` code bits.
fn solver(g: &TannerGraph) -> Result<ExactSolver<'_>> {
    check_size(g)?;
    Ok(ExactSolver::with_cap(g, 64)?)
}

fn noise(ch: &ChannelModel, n: usize, seed: u64, k: u64) -> Vec<f64> {
    let mut rng = substream(derive_seed(seed, 2), k);
    (0..n).map(|_| ch.draw(&mut rng)).collect()
}

// ---------------------------------------------------------- corr-decay ---

/// Per-distance means of `|⟨x_ix_j⟩ − ⟨x_i⟩⟨x_j⟩|` over pairs `i < j`.
fn decay_sample(g: &TannerGraph, sol: &ExactSolver, l: &[f64]) -> Result<BTreeMap<usize, f64>> {
    let s = sol.evaluate(l, true)?;
    let dist = g.code_bit_distances();
    let mut acc: BTreeMap<usize, (f64, usize)> = BTreeMap::new();
    for (i, row) in dist.iter().enumerate() {
        for (j, d) in row.iter().enumerate().skip(i + 1) {
            if let Some(d) = d {
                let e = acc.entry(*d).or_default();
                e.0 += s.cov(i, j).expect("covariance requested").abs();
                e.1 += 1;
            }
        }
    }
    Ok(acc.into_iter().map(|(d, (s, c))| (d, s / c as f64)).collect())
}

/// Bins correlations by distance for one noise level.
pub fn decay_points(
    cfg: &ExperimentConfig,
    codes_spec: &CodeSpec,
    ch: &ChannelModel,
    seed: u64,
) -> Result<Vec<DecayPoint>> {
    let codes = Codes::load(codes_spec)?;
    decay_points_inner(cfg, &codes, ch, seed)
}

fn decay_points_inner(cfg: &ExperimentConfig, codes: &Codes, ch: &ChannelModel, seed: u64) -> Result<Vec<DecayPoint>> {
    let per_sample: Vec<BTreeMap<usize, f64>> = match codes {
        Codes::Fixed(g) => {
            let sol = solver(g)?;
            (0..cfg.samples as u64)
                .into_par_iter()
                .map(|k| decay_sample(g, &sol, &noise(ch, g.n_code_bits(), seed, k)))
                .collect::<Result<_>>()?
        }
        _ => (0..cfg.samples as u64)
            .into_par_iter()
            .map(|k| {
                let g = codes.graph(seed, k)?;
                let sol = solver(&g)?;
                decay_sample(&g, &sol, &noise(ch, g.n_code_bits(), seed, k))
                    .map_err(|e| with_case(e, &format!("sample {k}, seed {seed}")))
            })
            .collect::<Result<_>>()?,
    };
    let mut bins: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for s in &per_sample {
        for (&d, &v) in s {
            bins.entry(d).or_default().push(v);
        }
    }
    Ok(bins
        .into_iter()
        .map(|(d, xs)| {
            let (m, se) = mean_se(&xs);
            DecayPoint {
                distance: d as f64,
                mean: m,
                std_err: if se.is_finite() { se } else { 0.0 },
                n_samples: xs.len(),
            }
        })
        .collect())
}

fn with_case(e: ExpError, case: &str) -> ExpError {
    match e {
        ExpError::Core { context, source } => ExpError::Core {
            context: format!("{case}: {context}"),
            source,
        },
        other => other,
    }
}

fn fit_json(fit: &std::result::Result<DecayFit, ExpError>) -> Value {
    match fit {
        Ok(f) => object(vec![
            ("xi", num(f.xi)),
            ("inverse_xi", num(f.inverse_xi())),
            ("c1", num(f.c1)),
            ("r", num(f.r)),
            ("points", json!(f.points)),
            ("flat", json!(f.flat)),
        ]),
        Err(e) => json!({ "error": e.to_string() }),
    }
}

fn corr_decay(cfg: &ExperimentConfig, codes: &Codes) -> Result<ExperimentOutput> {
    need_samples(cfg)?;
    let seed = cfg.seed()?;
    let mut tables = Vec::new();
    let mut fits = Vec::new();
    let mut inverse = Vec::new();
    for (k, &eps) in cfg.eps.iter().enumerate() {
        let ch = cfg.channel(eps)?;
        let ps = point_seed(seed, k);
        let points = decay_points_inner(cfg, codes, &ch, ps)?;
        let mut t = Table::new(format!("corr-decay_eps={eps}"), &CORR_DECAY_HEADER);
        for p in &points {
            t.push(vec![
                (p.distance as usize).into(),
                p.mean.into(),
                p.std_err.into(),
                p.n_samples.into(),
            ]);
        }
        tables.push(t);
        let fit = fit_exponential(&points);
        inverse.push(fit.as_ref().ok().map(|f| f.inverse_xi()));
        let mut entry = fit_json(&fit);
        entry["eps"] = json!(eps);
        entry["seed"] = json!(ps);
        fits.push(entry);
    }
    let increasing = inverse.windows(2).all(|w| matches!((w[0], w[1]), (Some(a), Some(b)) if b > a));
    let sorted = cfg.eps.windows(2).all(|w| w[0] < w[1]);
    let summary = object(vec![
        ("fits", Value::Array(fits)),
        ("inverse_xi_increasing", if sorted && cfg.eps.len() > 1 { json!(increasing) } else { Value::Null }),
    ]);
    Ok(ExperimentOutput {
        tables,
        summary,
        passed: None,
    })
}

// --------------------------------------------------------- gexit-curve ---

fn default_step(ch: &ChannelModel) -> f64 {
    let room = ch.eps().min(ch.eps_max() - ch.eps());
    (0.05 * room).min(5e-3)
}

fn gexit_row(t: &mut Table, e: &GexitEstimate) {
    t.push(vec![
        e.eps.into(),
        e.method.as_str().into(),
        e.value.into(),
        e.std_error.into(),
        e.n.into(),
        e.d.into(),
        e.samples.into(),
        e.seed.into(),
    ]);
}

fn gexit_curve(cfg: &ExperimentConfig, codes: &Codes) -> Result<ExperimentOutput> {
    need_samples(cfg)?;
    let seed = cfg.seed()?;
    let source = codes.gexit_source()?;
    let biawgnc = cfg.channel(cfg.eps[0])?.kind() == ChannelKind::Biawgnc;
    let methods: Vec<String> = match &cfg.methods {
        Some(m) => m.clone(),
        None => {
            let mut m: Vec<String> = ["functional", "series", "bp", "entropy-fd"].map(String::from).to_vec();
            if biawgnc {
                m.push("awgn-magnetization".into());
            }
            if matches!(codes, Codes::Ensemble { .. }) {
                m.push("de".into());
            }
            m
        }
    };
    let d = cfg.d.unwrap_or(20);
    let p_max = cfg.p_max.unwrap_or(DEFAULT_P_MAX);
    let n_pop = cfg.n_pop.unwrap_or(DEFAULT_POPULATION);
    let mut t = Table::new("gexit-curve", &GEXIT_HEADER);
    let mut tails = Vec::new();
    for (k, &eps) in cfg.eps.iter().enumerate() {
        let ch = cfg.channel(eps)?;
        let ps = point_seed(seed, k);
        let case = |m: &String| {
            let m = m.clone();
            move || format!("method {m}, eps {eps}, seed {ps}")
        };
        for m in &methods {
            let est = match m.as_str() {
                "functional" => map_gexit(&source, &ch, cfg.samples, ps).context(case(m))?,
                "series" => {
                    let e = map_gexit_series(&source, &ch, p_max, cfg.samples, ps).context(case(m))?;
                    tails.push(json!({ "eps": eps, "tail_bound": e.tail_bound, "p_max": p_max }));
                    e
                }
                "bp" => bp_gexit(&source, &ch, d, cfg.samples, ps).context(case(m))?,
                "entropy-fd" => {
                    let step = cfg.eps_step.unwrap_or_else(|| default_step(&ch));
                    entropy_fd(&source, &ch, step, cfg.samples, ps).context(case(m))?
                }
                "awgn-magnetization" => awgn_gexit(&source, &ch, cfg.samples, ps).context(case(m))?,
                "de" => {
                    let Codes::Ensemble { dd, kind, n } = codes else {
                        return Err(ExpError::Config("density evolution needs an ensemble".into()));
                    };
                    let e = de_gexit(*kind, dd, &ch, d, n_pop, ps).context(case(m))?;
                    t.push(vec![
                        eps.into(),
                        "de".into(),
                        e.value.into(),
                        e.std_error.into(),
                        (*n).into(),
                        d.into(),
                        n_pop.into(),
                        ps.into(),
                    ]);
                    continue;
                }
                other => return Err(ExpError::Config(format!("unknown method {other}"))),
            };
            gexit_row(&mut t, &est);
        }
    }
    Ok(ExperimentOutput {
        tables: vec![t],
        summary: object(vec![("methods", json!(methods)), ("series_tails", Value::Array(tails))]),
        passed: None,
    })
}

// ------------------------------------------------------------ de-curve ---

fn de_curve(cfg: &ExperimentConfig, codes: &Codes) -> Result<ExperimentOutput> {
    let seed = cfg.seed()?;
    let Codes::Ensemble { dd, kind, .. } = codes else {
        return Err(ExpError::Config("de-curve needs an ensemble".into()));
    };
    let ds: Vec<usize> = cfg.d_list.clone().unwrap_or_else(|| (1..=cfg.d.unwrap_or(20)).collect());
    let n_pop = cfg.n_pop.unwrap_or(DEFAULT_POPULATION);
    let mut t = Table::new("de-curve", &DE_HEADER);
    for (k, &eps) in cfg.eps.iter().enumerate() {
        let ch = cfg.channel(eps)?;
        let ps = point_seed(seed, k);
        for &d in &ds {
            let e = de_gexit(*kind, dd, &ch, d, n_pop, ps).context(|| format!("eps {eps}, d {d}, seed {ps}"))?;
            t.push(vec![
                eps.into(),
                d.into(),
                e.value.into(),
                e.std_error.into(),
                n_pop.into(),
                ps.into(),
                e.degenerate.into(),
            ]);
        }
    }
    Ok(ExperimentOutput {
        tables: vec![t],
        summary: object(vec![("depths", json!(ds)), ("n_pop", json!(n_pop))]),
        passed: None,
    })
}

// -------------------------------------------------------------- bounds ---

fn bounds(cfg: &ExperimentConfig, codes: &Codes) -> Result<ExperimentOutput> {
    let seed = cfg.seed()?;
    let graphs = codes.corpus(seed, cfg.graphs)?;
    match codes.kind() {
        CodeKind::Ldgm => walk_bounds(cfg, &graphs),
        CodeKind::Ldpc => cluster_bounds(cfg, &graphs),
    }
}

fn walk_bounds(cfg: &ExperimentConfig, graphs: &[TannerGraph]) -> Result<ExperimentOutput> {
    let seed = cfg.seed()?;
    let slack = cfg.tolerance.unwrap_or(WALK_BOUND_SLACK);
    let mut t = Table::new("bounds-walk", &WALK_BOUND_HEADER);
    let mut worst = f64::NEG_INFINITY;
    let mut checked = 0usize;
    for (k, &eps) in cfg.eps.iter().enumerate() {
        let ch = cfg.channel(eps)?;
        let h = cfg.h.unwrap_or_else(|| ch.default_h());
        let ps = point_seed(seed, k);
        for (gi, g) in graphs.iter().enumerate() {
            let sol = solver(g)?;
            let n = g.n_code_bits();
            let max_len = cfg.walk_len.unwrap_or(g.n_chk());
            let pairs: Vec<(usize, usize)> = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
            let walks: Vec<DkpWalks> = pairs
                .iter()
                .map(|&(i, j)| DkpWalks::new(g, g.chk_neighbors(i), g.chk_neighbors(j), max_len, WALK_CAP))
                .collect::<std::result::Result<_, _>>()
                .context(|| format!("graph {gi}: walk enumeration"))?;
            let gseed = derive_seed(ps, gi as u64);
            // per sample: (|cov|, bound) per pair
            let per_sample: Vec<Vec<(f64, f64)>> = (0..cfg.samples as u64)
                .into_par_iter()
                .map(|s| {
                    let l = noise(&ch, n, gseed, s);
                    let sum = sol.evaluate(&l, true)?;
                    Ok(pairs
                        .iter()
                        .zip(&walks)
                        .map(|(&(i, j), w)| (sum.cov(i, j).expect("covariance").abs(), w.pointwise(&l, h).value))
                        .collect())
                })
                .collect::<Result<_>>()?;
            let dist = g.code_bit_distances();
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let corr: Vec<f64> = per_sample.iter().map(|s| s[p].0).collect();
                let bnd: Vec<f64> = per_sample.iter().map(|s| s[p].1).collect();
                let excess = per_sample.iter().map(|s| s[p].0 - s[p].1).fold(f64::NEG_INFINITY, f64::max);
                worst = worst.max(excess);
                checked += per_sample.len();
                let avg = dkp_avg_bound(g, &ch, g.chk_neighbors(i), g.chk_neighbors(j), h)
                    .context(|| format!("graph {gi}, pair ({i}, {j}): averaged bound"))?;
                t.push(vec![
                    eps.into(),
                    gi.into(),
                    i.into(),
                    j.into(),
                    dist[i][j].into(),
                    mean_se(&corr).0.into(),
                    mean_se(&bnd).0.into(),
                    excess.into(),
                    avg.value.into(),
                    avg.diverged.into(),
                    walks[p].truncated().into(),
                ]);
            }
        }
    }
    let passed = worst <= slack;
    Ok(ExperimentOutput {
        tables: vec![t],
        summary: object(vec![
            ("max_excess", num(worst)),
            ("slack", json!(slack)),
            ("cases", json!(checked)),
            ("graphs", json!(graphs.len())),
        ]),
        passed: Some(passed),
    })
}

fn cluster_bounds(cfg: &ExperimentConfig, graphs: &[TannerGraph]) -> Result<ExperimentOutput> {
    let seed = cfg.seed()?;
    let s = cfg.s.unwrap_or(0.1);
    let mut t = Table::new("bounds-cluster", &CLUSTER_BOUND_HEADER);
    let mut violations = 0usize;
    let mut converged = 0usize;
    for (k, &eps) in cfg.eps.iter().enumerate() {
        let ch = cfg.channel(eps)?;
        let ps = point_seed(seed, k);
        for (gi, g) in graphs.iter().enumerate() {
            let sol = solver(g)?;
            let n = g.n_code_bits();
            let gseed = derive_seed(ps, gi as u64);
            let covs: Vec<Vec<f64>> = (0..cfg.samples as u64)
                .into_par_iter()
                .map(|smp| {
                    let sum = sol.evaluate(&noise(&ch, n, gseed, smp), true)?;
                    Ok(sum.covariance.expect("covariance"))
                })
                .collect::<Result<_>>()?;
            let dist = g.code_bit_distances();
            for i in 0..n {
                for j in i + 1..n {
                    let xs: Vec<f64> = covs.iter().map(|c| c[i * n + j].abs()).collect();
                    let (m, se) = mean_se(&xs);
                    let b = berretti_avg_bound(g, &ch, i, j, s)
                        .context(|| format!("graph {gi}, pair ({i}, {j}): averaged bound"))?;
                    if !b.diverged {
                        converged += 1;
                        if m > b.value + WALK_BOUND_SLACK {
                            violations += 1;
                        }
                    }
                    t.push(vec![
                        eps.into(),
                        gi.into(),
                        i.into(),
                        j.into(),
                        dist[i][j].into(),
                        m.into(),
                        se.into(),
                        b.value.into(),
                        b.diverged.into(),
                    ]);
                }
            }
        }
    }
    Ok(ExperimentOutput {
        tables: vec![t],
        summary: object(vec![
            ("converged_pairs", json!(converged)),
            ("violations", json!(violations)),
            ("s", json!(s)),
        ]),
        passed: Some(violations == 0),
    })
}

// ------------------------------------------------------- duality-check ---

fn identity_corpus(
    cfg: &ExperimentConfig,
    codes: &Codes,
    default_range: [f64; 2],
) -> Result<Vec<(usize, usize, TannerGraph, Vec<f64>)>> {
    let seed = cfg.seed()?;
    if codes.kind() != CodeKind::Ldpc {
        return Err(ExpError::Config("identity suites need LDPC codes".into()));
    }
    let [lo, hi] = cfg.llr_range.unwrap_or(default_range);
    let graphs = codes.corpus(seed, cfg.graphs)?;
    let mut out = Vec::new();
    for (gi, g) in graphs.into_iter().enumerate() {
        for draw in 0..cfg.samples {
            let l = uniform_llrs(g.n_var(), lo, hi, derive_seed(derive_seed(seed, 3 + gi as u64), draw as u64));
            out.push((gi, draw, g.clone(), l));
        }
    }
    Ok(out)
}

fn duality_check(cfg: &ExperimentConfig, codes: &Codes) -> Result<ExperimentOutput> {
    let tol = cfg.tolerance.unwrap_or(DUALITY_TOL);
    let corpus = identity_corpus(cfg, codes, [-3.0, 3.0])?;
    let rows: Vec<(f64, Option<(f64, f64)>, usize)> = corpus
        .par_iter()
        .map(|(gi, draw, g, l)| {
            let case = || format!("graph {gi}, draw {draw}");
            let inst = PosteriorInstance::new(g, l.clone()).context(case)?;
            let mw = macwilliams_residual(&inst).context(case)?;
            let dinst = DualInstance::new(inst).context(case)?;
            let corr = match max_duality_residuals(&dinst, SINH_FLOOR) {
                Ok(r) => Some(r),
                Err(CoreError::NearZeroDualPartition(_)) => None,
                Err(e) => return Err(e).context(case),
            };
            Ok((mw, corr, gf2_rank(&Gf2Matrix::parity_check(g))))
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new("duality-check", &DUALITY_HEADER);
    let (mut max_mw, mut max_r1, mut max_r2, mut skipped) = (0.0f64, 0.0f64, 0.0f64, 0usize);
    for ((gi, draw, g, _), (mw, corr, rank)) in corpus.iter().zip(&rows) {
        max_mw = max_mw.max(*mw);
        if let Some((r1, r2)) = corr {
            max_r1 = max_r1.max(*r1);
            max_r2 = max_r2.max(*r2);
        } else {
            skipped += 1;
        }
        t.push(vec![
            (*gi).into(),
            (*draw).into(),
            g.n_var().into(),
            g.n_chk().into(),
            (*rank).into(),
            (*mw).into(),
            corr.map(|c| c.0).into(),
            corr.map(|c| c.1).into(),
        ]);
    }
    let passed = max_mw < MACWILLIAMS_TOL && max_r1 < tol && max_r2 < tol;
    Ok(ExperimentOutput {
        tables: vec![t],
        summary: object(vec![
            ("instances", json!(corpus.len())),
            ("max_macwilliams_residual", num(max_mw)),
            ("max_marginal_residual", num(max_r1)),
            ("max_pair_residual", num(max_r2)),
            ("near_zero_dual_skipped", json!(skipped)),
            ("sinh_floor", json!(SINH_FLOOR)),
        ]),
        passed: Some(passed),
    })
}

// ------------------------------------------------------ berretti-check ---

fn berretti_check(cfg: &ExperimentConfig, codes: &Codes) -> Result<ExperimentOutput> {
    let tol = cfg.tolerance.unwrap_or(BERRETTI_TOL);
    let cap = cfg.cluster_size.unwrap_or(CLUSTER_SIZE_CAP);
    let corpus = identity_corpus(cfg, codes, [-1.0, 2.0])?;
    type Row = (usize, usize, Option<(f64, f64, f64, usize)>);
    let rows: Vec<Vec<Row>> = corpus
        .par_iter()
        .map(|(gi, draw, g, l)| {
            let inst = PosteriorInstance::new(g, l.clone())?;
            let n = g.n_var();
            let mut out = Vec::new();
            for i in 0..n {
                for j in i + 1..n {
                    match berretti_identity(&inst, i, j, cap, CompatibilityRule::Exact) {
                        Ok(c) => out.push((i, j, Some((c.lhs, c.rhs, c.residual, c.n_clusters)))),
                        Err(CoreError::NearZeroDualPartition(_)) => out.push((i, j, None)),
                        Err(e) => {
                            return Err(e).context(|| format!("graph {gi}, draw {draw}, pair ({i}, {j})"));
                        }
                    }
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut t = Table::new("berretti-check", &BERRETTI_HEADER);
    let (mut worst, mut skipped, mut pairs) = (0.0f64, 0usize, 0usize);
    for ((gi, draw, _, _), rs) in corpus.iter().zip(&rows) {
        for &(i, j, r) in rs {
            pairs += 1;
            match r {
                Some((lhs, rhs, res, nc)) => {
                    worst = worst.max(res);
                    t.push(vec![
                        (*gi).into(),
                        (*draw).into(),
                        i.into(),
                        j.into(),
                        lhs.into(),
                        rhs.into(),
                        res.into(),
                        nc.into(),
                    ]);
                }
                None => {
                    skipped += 1;
                    t.push(vec![
                        (*gi).into(),
                        (*draw).into(),
                        i.into(),
                        j.into(),
                        Cell::Empty,
                        Cell::Empty,
                        Cell::Empty,
                        Cell::Empty,
                    ]);
                }
            }
        }
    }
    Ok(ExperimentOutput {
        tables: vec![t],
        summary: object(vec![
            ("instances", json!(corpus.len())),
            ("pairs", json!(pairs)),
            ("max_residual", num(worst)),
            ("near_zero_dual_skipped", json!(skipped)),
            ("tolerance", json!(tol)),
        ]),
        passed: Some(worst < tol),
    })
}

// -------------------------------------------------------------- limits ---

/// BP-GEXIT at each depth with shared codes and noise.
fn bp_series(g: &TannerGraph, ch: &ChannelModel, ds: &[usize], samples: usize, seed: u64) -> Result<Vec<f64>> {
    let source = CodeSource::Fixed(g.clone());
    ds.iter()
        .map(|&d| Ok(bp_gexit(&source, ch, d, samples, seed).context(|| format!("depth {d}, seed {seed}"))?.value))
        .collect()
}

fn limits(cfg: &ExperimentConfig, codes: &Codes) -> Result<ExperimentOutput> {
    need_samples(cfg)?;
    let seed = cfg.seed()?;
    let g = match codes {
        Codes::Fixed(g) => g.clone(),
        _ => codes.graph(seed, 0)?,
    };
    let tol = cfg.tolerance.unwrap_or(LIMITS_TAIL_TOL);
    let dp = cfg.d_prime.clone().unwrap_or_else(|| vec![2, 4, 6]);
    let tail = cfg.d_tail.clone().unwrap_or_else(|| vec![100, 200]);
    let d_ref = tail[1];
    let mut t = Table::new("limits", &LIMITS_HEADER);
    let mut points = Vec::new();
    let mut passed = true;
    for (k, &eps) in cfg.eps.iter().enumerate() {
        let ch = cfg.channel(eps)?;
        let ps = point_seed(seed, k);
        let g_dp = bp_series(&g, &ch, &dp, cfg.samples, ps)?;
        let g_tail = bp_series(&g, &ch, &tail, cfg.samples, ps)?;
        let g_ref = g_tail[1];
        let diffs: Vec<f64> = g_dp.iter().map(|x| (x - g_ref).abs()).collect();
        for (idx, &d) in dp.iter().enumerate() {
            t.push(vec![
                eps.into(),
                d.into(),
                d_ref.into(),
                g_dp[idx].into(),
                g_ref.into(),
                diffs[idx].into(),
                ps.into(),
            ]);
        }
        let monotone = diffs.windows(2).all(|w| w[1] < w[0] || w[1] == 0.0);
        let tail_diff = (g_tail[0] - g_tail[1]).abs();
        // envelope |g_d − g_d′| ≈ A e^{−c d′}
        let rate = {
            let xs: Vec<f64> = dp.iter().map(|&d| d as f64).collect();
            let ys: Vec<f64> = diffs.iter().map(|x| x.max(f64::MIN_POSITIVE).ln()).collect();
            (xs.len() >= 2).then(|| -crate::fit::linear_fit(&xs, &ys).1)
        };
        passed &= monotone && tail_diff < tol;
        points.push(object(vec![
            ("eps", json!(eps)),
            ("seed", json!(ps)),
            ("monotone", json!(monotone)),
            ("tail_depths", json!(tail)),
            ("tail_diff", num(tail_diff)),
            ("envelope_rate", rate.map_or(Value::Null, num)),
            ("growth_constant", json!(g.growth_constant())),
        ]));
    }
    Ok(ExperimentOutput {
        tables: vec![t],
        summary: object(vec![
            ("points", Value::Array(points)),
            ("graph", json!(g.to_text())),
            ("tail_tolerance", json!(tol)),
        ]),
        passed: Some(passed),
    })
}

/// BP marginals of every code bit after `d` iterations; exposed for
/// callers that sweep depths on one noise draw.
pub fn bp_marginals(g: &TannerGraph, l: &[f64], d: usize) -> Result<Vec<f64>> {
    let inst = PosteriorInstance::new(g, l.to_vec())?;
    Ok(bp_run(&inst, d).marginals)
}
