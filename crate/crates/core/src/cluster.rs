//! Cluster expansions as executable bounds and identities.
//!
//! LDGM side: the self-avoiding-walk bound on information-bit correlations
//! with its bad set of strongly observed code bits, the averaged bound, and
//! an exhaustive evaluator of the replica sum over check subsets `G`.
//!
//! LDPC side: the two-replica expansion of dual correlations over check
//! clusters `X̂` and compatible variable sets `Γ`, checked exactly against
//! the dual enumeration.

use std::collections::{HashSet, VecDeque};

use crate::channel::ChannelModel;
use crate::duality::{dual_partition, dual_summary, DualInstance};
use crate::error::{Error, Result};
use crate::gibbs::{PosteriorInstance, BRUTE_FORCE_CAP};
use crate::graph::{enumerate_saws, CodeKind, Node, SelfAvoidingWalk, TannerGraph};
use crate::quad::integrate_split;
use crate::sum::Compensated;

/// Default cap on enumerated walks.
pub const WALK_CAP: usize = 1_000_000;
/// Default cap on `|X|` for cluster enumeration.
pub const CLUSTER_SIZE_CAP: usize = 10;
/// Cap on `|X̂|` for the replica sum in [`berretti_term`].
pub const REPLICA_CAP: usize = 12;
/// Cap on `|B^c|` for the exhaustive `G` sum.
pub const G_SUM_CAP: usize = 12;
const CONNECTED_SET_CAP: usize = 2_000_000;

fn require(g: &TannerGraph, kind: CodeKind) -> Result<()> {
    if g.kind() != kind {
        return Err(Error::WrongCodeKind(format!("expected an {} graph", kind.as_str())));
    }
    Ok(())
}

fn check_vars(g: &TannerGraph, vs: &[usize]) -> Result<()> {
    for &v in vs {
        if v >= g.n_var() {
            return Err(Error::IndexOutOfRange { index: v, limit: g.n_var() });
        }
    }
    Ok(())
}

fn parity(x: u64) -> f64 {
    if x.count_ones() % 2 == 0 {
        1.0
    } else {
        -1.0
    }
}

// ---------------------------------------------------------------- LDGM ---

/// Code bits with `|l_i| > H`.
#[derive(Debug, Clone, PartialEq)]
pub struct BadSet {
    pub threshold: f64,
    pub members: Vec<usize>,
}

impl BadSet {
    pub fn new(llrs: &[f64], threshold: f64) -> Self {
        let members = (0..llrs.len()).filter(|&i| llrs[i].abs() > threshold).collect();
        Self { threshold, members }
    }

    pub fn contains(&self, i: usize) -> bool {
        self.members.binary_search(&i).is_ok()
    }
}

/// Walk weight of a code bit: 1 on the bad set, `e^{4|l|} − 1` otherwise.
pub fn rho(l: f64, threshold: f64) -> f64 {
    if l.abs() > threshold {
        1.0
    } else {
        (4.0 * l.abs()).exp_m1()
    }
}

/// `E[ρ]` under the channel.
pub fn expected_rho(ch: &ChannelModel, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0) {
        return Err(Error::Parameter(format!("threshold H = {threshold} must be positive")));
    }
    match ch.density(0.0) {
        None => ch.expect(|l| rho(l, threshold)),
        Some(_) => {
            let inner = integrate_split(
                |l| ch.density(l).unwrap() * (4.0 * l.abs()).exp_m1(),
                -threshold,
                threshold,
                &[0.0],
                1e-15,
                1e-12,
            )?;
            Ok(inner + ch.tail_prob(threshold))
        }
    }
}

/// A walk-sum bound with its enumeration status.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkBound {
    pub value: f64,
    pub n_walks: usize,
    /// Walks longer than `max_len` may exist; the value is then only a
    /// partial sum.
    pub truncated: bool,
}

/// The self-avoiding walks joining two sets of information bits, reusable
/// across noise draws.
#[derive(Debug, Clone)]
pub struct DkpWalks {
    walks: Vec<SelfAvoidingWalk>,
    truncated: bool,
}

impl DkpWalks {
    pub fn new(g: &TannerGraph, a: &[usize], b: &[usize], max_len: usize, cap: usize) -> Result<Self> {
        require(g, CodeKind::Ldgm)?;
        let walks = enumerate_saws(g, a, b, max_len, cap)?;
        let longest_possible = g.n_chk().min(g.n_var().saturating_sub(1));
        Ok(Self {
            walks,
            truncated: max_len < longest_possible,
        })
    }

    pub fn walks(&self) -> &[SelfAvoidingWalk] {
        &self.walks
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// `2 Σ_w ∏_{i∈w} ρ_i`.
    pub fn pointwise(&self, llrs: &[f64], threshold: f64) -> WalkBound {
        let value: Compensated = self
            .walks
            .iter()
            .map(|w| w.chks.iter().map(|&c| rho(llrs[c], threshold)).product::<f64>())
            .collect();
        WalkBound {
            value: 2.0 * value.value(),
            n_walks: self.walks.len(),
            truncated: self.truncated,
        }
    }

    /// `2 Σ_w r^{|w|}`.
    pub fn geometric(&self, r: f64) -> WalkBound {
        let value: Compensated = self.walks.iter().map(|w| r.powi(w.len() as i32)).collect();
        WalkBound {
            value: 2.0 * value.value(),
            n_walks: self.walks.len(),
            truncated: self.truncated,
        }
    }
}

/// Pointwise walk bound on `|⟨u_A u_B⟩ − ⟨u_A⟩⟨u_B⟩|`.
pub fn dkp_pointwise_bound(
    inst: &PosteriorInstance,
    a: &[usize],
    b: &[usize],
    threshold: f64,
    max_len: usize,
) -> Result<WalkBound> {
    let walks = DkpWalks::new(inst.graph(), a, b, max_len, WALK_CAP)?;
    Ok(walks.pointwise(inst.llrs(), threshold))
}

/// An averaged bound that may fail to converge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AvgBound {
    pub value: f64,
    /// The geometric series behind the closed form diverges.
    pub diverged: bool,
}

/// `2|A||B| (Kδ)^{dist(A,B)}/(1 − Kδ)` with `K = l_max k_max`. When
/// `Kδ ≥ 1` the finite walk sum `2 Σ_w δ^{|w|}` is returned instead,
/// flagged as diverged.
pub fn dkp_avg_bound(g: &TannerGraph, ch: &ChannelModel, a: &[usize], b: &[usize], threshold: f64) -> Result<AvgBound> {
    require(g, CodeKind::Ldgm)?;
    check_vars(g, a)?;
    check_vars(g, b)?;
    let delta = ch.delta_high(threshold)?;
    let k = g.growth_constant() as f64;
    let Some(dist) = g.var_set_distance(a, b) else {
        return Ok(AvgBound {
            value: 0.0,
            diverged: false,
        });
    };
    let kd = k * delta;
    if kd < 1.0 {
        let value = 2.0 * (a.len() * b.len()) as f64 * kd.powi(dist as i32) / (1.0 - kd);
        return Ok(AvgBound { value, diverged: false });
    }
    let walks = DkpWalks::new(g, a, b, g.n_chk(), WALK_CAP)?;
    Ok(AvgBound {
        value: walks.geometric(delta).value,
        diverged: true,
    })
}

fn ldgm_weights(g: &TannerGraph) -> Result<Vec<u64>> {
    let m = g.n_var();
    if m > BRUTE_FORCE_CAP.min(20) {
        return Err(Error::BruteForceCap {
            free: m,
            cap: BRUTE_FORCE_CAP.min(20),
        });
    }
    Ok((0..g.n_chk())
        .map(|c| g.chk_neighbors(c).iter().fold(0u64, |acc, &v| acc | 1 << v))
        .collect())
}

/// Exact `⟨u_A u_B⟩ − ⟨u_A⟩⟨u_B⟩` by enumeration of the information bits.
pub fn info_bit_correlation(inst: &PosteriorInstance, a: &[usize], b: &[usize]) -> Result<f64> {
    let g = inst.graph();
    require(g, CodeKind::Ldgm)?;
    check_vars(g, a)?;
    check_vars(g, b)?;
    let l = inst.llrs();
    let masks = ldgm_weights(g)?;
    let ma = a.iter().fold(0u64, |acc, &v| acc ^ 1 << v);
    let mb = b.iter().fold(0u64, |acc, &v| acc ^ 1 << v);
    let shift: f64 = l.iter().map(|x| x.abs()).sum();
    let (mut z, mut sa, mut sb, mut sab) = (
        Compensated::new(),
        Compensated::new(),
        Compensated::new(),
        Compensated::new(),
    );
    for u in 0..(1u64 << g.n_var()) {
        let e: f64 = masks.iter().zip(l).map(|(&m, &li)| li * parity(m & u)).sum();
        let w = (e - shift).exp();
        let (xa, xb) = (parity(ma & u), parity(mb & u));
        z.add(w);
        sa.add(w * xa);
        sb.add(w * xb);
        sab.add(w * xa * xb);
    }
    let z = z.value();
    Ok(sab.value() / z - sa.value() / z * (sb.value() / z))
}

/// The replica sum over `G ⊆ B^c`, split by whether `G ∪ B` connects `A`
/// and `B`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GSumSplit {
    /// Contribution of the connecting `G`.
    pub connecting: f64,
    /// Contribution of the remaining `G`; vanishes identically.
    pub non_connecting: f64,
    /// `⟨u_A u_B⟩ − ⟨u_A⟩⟨u_B⟩`, which the two parts sum to.
    pub correlation: f64,
}

/// Exhaustive evaluation of
/// `(2Z'²)^{-1} Σ_G Σ_{u¹,u²} f_A f_B ∏_{i∈B} e^{l_i(x¹_i+x²_i)+2|l_i|} ∏_{i∈G} K_i`
/// with `K_i = e^{l_i(x¹_i+x²_i)+2|l_i|} − 1 ≥ 0`.
pub fn g_sum_split(inst: &PosteriorInstance, a: &[usize], b: &[usize], threshold: f64) -> Result<GSumSplit> {
    let g = inst.graph();
    require(g, CodeKind::Ldgm)?;
    check_vars(g, a)?;
    check_vars(g, b)?;
    let l = inst.llrs();
    let m = g.n_var();
    if 2 * m > 20 {
        return Err(Error::BruteForceCap { free: 2 * m, cap: 20 });
    }
    let bad = BadSet::new(l, threshold);
    let good: Vec<usize> = (0..g.n_chk()).filter(|&c| !bad.contains(c)).collect();
    if good.len() > G_SUM_CAP {
        return Err(Error::EnumerationCap { cap: G_SUM_CAP });
    }
    let masks = ldgm_weights(g)?;
    let ma = a.iter().fold(0u64, |acc, &v| acc ^ 1 << v);
    let mb = b.iter().fold(0u64, |acc, &v| acc ^ 1 << v);

    let n_g = 1usize << good.len();
    let connects: Vec<bool> = (0..n_g)
        .map(|gm| {
            let mut allowed = vec![false; g.n_chk()];
            for &c in &bad.members {
                allowed[c] = true;
            }
            for (k, &c) in good.iter().enumerate() {
                if gm >> k & 1 == 1 {
                    allowed[c] = true;
                }
            }
            sets_connected(g, a, b, &allowed)
        })
        .collect();

    // Z' = Σ_u ∏ e^{l x + |l|}, scaled by e^{-2Σ|l|} throughout
    let shift: f64 = l.iter().map(|x| 2.0 * x.abs()).sum();
    let mut zp = Compensated::new();
    for u in 0..(1u64 << m) {
        let e: f64 = masks.iter().zip(l).map(|(&mk, &li)| li * parity(mk & u) + li.abs()).sum();
        zp.add((e - shift / 2.0).exp());
    }
    let zp = zp.value();

    let (mut conn, mut non) = (Compensated::new(), Compensated::new());
    let mut prod = vec![0.0; n_g];
    for u1 in 0..(1u64 << m) {
        for u2 in 0..(1u64 << m) {
            let fab = (parity(ma & u1) - parity(ma & u2)) * (parity(mb & u1) - parity(mb & u2));
            if fab == 0.0 {
                continue;
            }
            let expo = |c: usize| l[c] * (parity(masks[c] & u1) + parity(masks[c] & u2)) + 2.0 * l[c].abs();
            let bad_w: f64 = bad.members.iter().map(|&c| expo(c)).sum();
            let base = fab * (bad_w - shift).exp();
            let kk: Vec<f64> = good.iter().map(|&c| expo(c).exp_m1()).collect();
            prod[0] = 1.0;
            for gm in 1..n_g {
                let low = gm.trailing_zeros() as usize;
                prod[gm] = prod[gm & (gm - 1)] * kk[low];
            }
            for gm in 0..n_g {
                let t = base * prod[gm];
                if connects[gm] {
                    conn.add(t);
                } else {
                    non.add(t);
                }
            }
        }
    }
    let norm = 2.0 * zp * zp;
    Ok(GSumSplit {
        connecting: conn.value() / norm,
        non_connecting: non.value() / norm,
        correlation: info_bit_correlation(inst, a, b)?,
    })
}

/// True when a variable of `a` reaches a variable of `b` through checks
/// marked in `allowed`.
fn sets_connected(g: &TannerGraph, a: &[usize], b: &[usize], allowed: &[bool]) -> bool {
    let mut seen = vec![false; g.n_var()];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &v in a {
        if !seen[v] {
            seen[v] = true;
            queue.push_back(v);
        }
    }
    while let Some(v) = queue.pop_front() {
        if b.contains(&v) {
            return true;
        }
        for &c in g.var_neighbors(v) {
            if !allowed[c] {
                continue;
            }
            for &w in g.chk_neighbors(c) {
                if !seen[w] {
                    seen[w] = true;
                    queue.push_back(w);
                }
            }
        }
    }
    false
}

// ---------------------------------------------------------------- LDPC ---

/// Reading of the `Γ`-compatibility conditions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CompatibilityRule {
    /// (i) `∂Γ ∪ ∂i ∪ ∂j = X̂`, (ii) `∂Γ` meets both `∂i` and `∂j`,
    /// (iii) a walk from `∂i` to `∂j` with all variables in `Γ`.
    PaperLiteral,
    /// (i) and (iii), with `Γ = ∅` allowed when `∂i ∩ ∂j ≠ ∅`, and every
    /// connected component of `Γ` touching `∂i ∪ ∂j`.
    Exact,
}

/// A walk between check nodes: `chks[0], vars[0], chks[1], …`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CheckWalk {
    pub chks: Vec<usize>,
    pub vars: Vec<usize>,
}

/// One check cluster with its compatible variable sets.
#[derive(Debug, Clone, PartialEq)]
pub struct ClusterTerm {
    /// Sorted check ids.
    pub xhat: Vec<usize>,
    pub gammas: Vec<Vec<usize>>,
    /// For each `Γ`, a walk from `∂i` to `∂j` through `Γ`.
    pub witness_walks: Vec<CheckWalk>,
}

fn chk_mask(g: &TannerGraph, v: usize) -> u64 {
    g.var_neighbors(v).iter().fold(0u64, |acc, &c| acc | 1 << c)
}

fn boundary(g: &TannerGraph, set: u64) -> u64 {
    let mut out = 0u64;
    let mut s = set;
    while s != 0 {
        let v = s.trailing_zeros() as usize;
        out |= chk_mask(g, v);
        s &= s - 1;
    }
    out
}

/// Walk from a check of `from` to a check of `to` using only variables in
/// `gamma`.
fn find_walk(g: &TannerGraph, from: u64, to: u64, gamma: u64) -> Option<CheckWalk> {
    let mut prev: Vec<Option<(usize, usize)>> = vec![None; g.n_chk()];
    let mut seen = vec![false; g.n_chk()];
    let mut queue = VecDeque::new();
    for c in 0..g.n_chk() {
        if from >> c & 1 == 1 {
            seen[c] = true;
            queue.push_back(c);
        }
    }
    while let Some(c) = queue.pop_front() {
        if to >> c & 1 == 1 {
            let mut chks = vec![c];
            let mut vars = Vec::new();
            let mut cur = c;
            while let Some((v, p)) = prev[cur] {
                vars.push(v);
                chks.push(p);
                cur = p;
            }
            chks.reverse();
            vars.reverse();
            return Some(CheckWalk { chks, vars });
        }
        for &v in g.chk_neighbors(c) {
            if gamma >> v & 1 == 0 {
                continue;
            }
            for &d in g.var_neighbors(v) {
                if !seen[d] {
                    seen[d] = true;
                    prev[d] = Some((v, c));
                    queue.push_back(d);
                }
            }
        }
    }
    None
}

/// Every connected component of `gamma` has a check in `touch`.
fn components_touch(g: &TannerGraph, gamma: u64, touch: u64) -> bool {
    let mut left = gamma;
    while left != 0 {
        let start = left.trailing_zeros() as usize;
        let mut comp = 1u64 << start;
        let mut frontier = vec![start];
        while let Some(v) = frontier.pop() {
            for &c in g.var_neighbors(v) {
                for &w in g.chk_neighbors(c) {
                    if gamma >> w & 1 == 1 && comp >> w & 1 == 0 {
                        comp |= 1 << w;
                        frontier.push(w);
                    }
                }
            }
        }
        if boundary(g, comp) & touch == 0 {
            return false;
        }
        left &= !comp;
    }
    true
}

/// Checks `Γ` against `X̂` under `rule`; returns a witness walk when
/// compatible.
pub fn compatible(
    g: &TannerGraph,
    xhat: &[usize],
    gamma: &[usize],
    i: usize,
    j: usize,
    rule: CompatibilityRule,
) -> Option<CheckWalk> {
    let xm = xhat.iter().fold(0u64, |acc, &c| acc | 1 << c);
    let gm = gamma.iter().fold(0u64, |acc, &v| acc | 1 << v);
    compatible_mask(g, xm, gm, i, j, rule)
}

fn compatible_mask(g: &TannerGraph, xm: u64, gm: u64, i: usize, j: usize, rule: CompatibilityRule) -> Option<CheckWalk> {
    let (di, dj) = (chk_mask(g, i), chk_mask(g, j));
    let dg = boundary(g, gm);
    if dg | di | dj != xm {
        return None;
    }
    match rule {
        CompatibilityRule::PaperLiteral => {
            if dg & di == 0 || dg & dj == 0 {
                return None;
            }
        }
        CompatibilityRule::Exact => {
            if !components_touch(g, gm, di | dj) {
                return None;
            }
        }
    }
    find_walk(g, di, dj, gm)
}

/// Connected variable sets containing `i` and `j` with at most `size_cap`
/// members, as bitmasks.
fn connected_sets(g: &TannerGraph, i: usize, j: usize, size_cap: usize) -> Result<Vec<u64>> {
    let adj: Vec<u64> = (0..g.n_var())
        .map(|v| {
            let mut m = 0u64;
            for &c in g.var_neighbors(v) {
                for &w in g.chk_neighbors(c) {
                    m |= 1 << w;
                }
            }
            m & !(1u64 << v)
        })
        .collect();
    let mut seen: HashSet<u64> = HashSet::new();
    let mut layer = vec![1u64 << i];
    seen.insert(1u64 << i);
    let mut out = Vec::new();
    for size in 1..=size_cap {
        let mut next = Vec::new();
        for &s in &layer {
            if s >> j & 1 == 1 {
                out.push(s);
            }
            if size == size_cap {
                continue;
            }
            let mut frontier = 0u64;
            let mut t = s;
            while t != 0 {
                let v = t.trailing_zeros() as usize;
                frontier |= adj[v];
                t &= t - 1;
            }
            frontier &= !s;
            while frontier != 0 {
                let v = frontier.trailing_zeros() as usize;
                frontier &= frontier - 1;
                let ns = s | 1 << v;
                if seen.insert(ns) {
                    if seen.len() > CONNECTED_SET_CAP {
                        return Err(Error::EnumerationCap { cap: CONNECTED_SET_CAP });
                    }
                    next.push(ns);
                }
            }
        }
        layer = next;
        if layer.is_empty() {
            break;
        }
    }
    Ok(out)
}

/// All clusters `X̂ = ∂X` for connected `X ∋ i, j` with `|X| ≤ size_cap`,
/// each with its compatible `Γ` sets. Clusters without a compatible `Γ`
/// are dropped.
pub fn enumerate_clusters(
    g: &TannerGraph,
    i: usize,
    j: usize,
    size_cap: usize,
    rule: CompatibilityRule,
) -> Result<Vec<ClusterTerm>> {
    require(g, CodeKind::Ldpc)?;
    check_vars(g, &[i, j])?;
    if g.n_var() > 64 || g.n_chk() > 64 {
        return Err(Error::Parameter("cluster enumeration supports at most 64 nodes per side".into()));
    }
    let mut xhats: Vec<u64> = connected_sets(g, i, j, size_cap)?
        .into_iter()
        .map(|x| boundary(g, x))
        .collect::<HashSet<_>>()
        .into_iter()
        .collect();
    xhats.sort_unstable();
    let mut out = Vec::new();
    for xm in xhats {
        let cand: Vec<usize> = (0..g.n_var())
            .filter(|&v| {
                let dv = chk_mask(g, v);
                dv & !xm == 0 && (rule == CompatibilityRule::PaperLiteral || dv != 0)
            })
            .collect();
        if cand.len() > 24 {
            return Err(Error::EnumerationCap { cap: 1 << 24 });
        }
        let mut gammas = Vec::new();
        let mut walks = Vec::new();
        for sub in 0..(1u64 << cand.len()) {
            let gm = cand
                .iter()
                .enumerate()
                .filter(|&(k, _)| sub >> k & 1 == 1)
                .fold(0u64, |acc, (_, &v)| acc | 1 << v);
            if let Some(w) = compatible_mask(g, xm, gm, i, j, rule) {
                gammas.push((0..g.n_var()).filter(|&v| gm >> v & 1 == 1).collect());
                walks.push(w);
            }
        }
        if !gammas.is_empty() {
            out.push(ClusterTerm {
                xhat: (0..g.n_chk()).filter(|&c| xm >> c & 1 == 1).collect(),
                gammas,
                witness_walks: walks,
            });
        }
    }
    Ok(out)
}

/// `K_{i,j}(X̂)` together with the reduced dual partition function
/// `Z_⊥(X̂^c)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerrettiTerm {
    pub k: f64,
    pub z_reduced: f64,
}

/// `K_{i,j}(X̂) = Σ_{u¹,u² on X̂} Σ_Γ (τ_i¹ − τ_i²)(τ_j¹ − τ_j²) ∏_{k∈Γ} E_k`
/// with `E_k = (τ_k¹ + τ_k²) e^{−2l_k} + τ_k¹τ_k² e^{−4l_k}`.
pub fn berretti_term(inst: &PosteriorInstance, term: &ClusterTerm, i: usize, j: usize) -> Result<BerrettiTerm> {
    let g = inst.graph();
    require(g, CodeKind::Ldpc)?;
    check_vars(g, &[i, j])?;
    let l = inst.llrs();
    let h = term.xhat.len();
    if h > REPLICA_CAP {
        return Err(Error::BruteForceCap { free: 2 * h, cap: 2 * REPLICA_CAP });
    }
    // local check index inside X̂
    let mut local = vec![usize::MAX; g.n_chk()];
    for (k, &c) in term.xhat.iter().enumerate() {
        local[c] = k;
    }
    let lmask = |v: usize| -> u64 {
        g.var_neighbors(v)
            .iter()
            .filter(|&&c| local[c] != usize::MAX)
            .fold(0u64, |acc, &c| acc | 1 << local[c])
    };
    let (mi, mj) = (lmask(i), lmask(j));
    let gammas: Vec<Vec<(u64, f64, f64)>> = term
        .gammas
        .iter()
        .map(|gm| gm.iter().map(|&v| (lmask(v), (-2.0 * l[v]).exp(), (-4.0 * l[v]).exp())).collect())
        .collect();
    let mut k_sum = Compensated::new();
    for u1 in 0..(1u64 << h) {
        for u2 in 0..(1u64 << h) {
            let f = (parity(mi & u1) - parity(mi & u2)) * (parity(mj & u1) - parity(mj & u2));
            if f == 0.0 {
                continue;
            }
            for gm in &gammas {
                let prod: f64 = gm
                    .iter()
                    .map(|&(mk, e2, e4)| {
                        let (t1, t2) = (parity(mk & u1), parity(mk & u2));
                        (t1 + t2) * e2 + t1 * t2 * e4
                    })
                    .product();
                k_sum.add(f * prod);
            }
        }
    }
    Ok(BerrettiTerm {
        k: k_sum.value(),
        z_reduced: reduced_dual_partition(inst, &term.xhat)?,
    })
}

/// `Z_⊥(X̂^c)`: the dual sum over checks outside `X̂`, keeping only the
/// variables with no neighbour in `X̂`.
pub fn reduced_dual_partition(inst: &PosteriorInstance, xhat: &[usize]) -> Result<f64> {
    let g = inst.graph();
    let l = inst.llrs();
    let mut inside = vec![false; g.n_chk()];
    for &c in xhat {
        inside[c] = true;
    }
    let rest: Vec<usize> = (0..g.n_chk()).filter(|&c| !inside[c]).collect();
    if rest.len() > BRUTE_FORCE_CAP {
        return Err(Error::BruteForceCap {
            free: rest.len(),
            cap: BRUTE_FORCE_CAP,
        });
    }
    let mut local = vec![usize::MAX; g.n_chk()];
    for (k, &c) in rest.iter().enumerate() {
        local[c] = k;
    }
    let vars: Vec<(u64, f64)> = (0..g.n_var())
        .filter(|&v| g.var_neighbors(v).iter().all(|&c| !inside[c]))
        .map(|v| {
            let m = g.var_neighbors(v).iter().fold(0u64, |acc, &c| acc | 1 << local[c]);
            (m, (-2.0 * l[v]).exp())
        })
        .collect();
    let z: Compensated = (0..(1u64 << rest.len()))
        .map(|u| vars.iter().map(|&(m, e)| 1.0 + e * parity(m & u)).product::<f64>())
        .collect();
    Ok(z.value())
}

/// Both sides of the dual-correlation expansion.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BerrettiCheck {
    /// `⟨τ_iτ_j⟩_⊥ − ⟨τ_i⟩_⊥⟨τ_j⟩_⊥` from the dual enumeration.
    pub lhs: f64,
    /// `½ Σ_X̂ K_{i,j}(X̂) (Z_⊥(X̂^c)/Z_⊥)²`.
    pub rhs: f64,
    pub residual: f64,
    pub n_clusters: usize,
}

pub fn berretti_identity(
    inst: &PosteriorInstance,
    i: usize,
    j: usize,
    size_cap: usize,
    rule: CompatibilityRule,
) -> Result<BerrettiCheck> {
    let g = inst.graph();
    let dinst = DualInstance::new(inst.clone())?;
    let lhs = dual_summary(&dinst)?.connected(i, j);
    let (sign, log_abs) = dual_partition(&dinst)?;
    let z = sign * log_abs.exp();
    let terms = enumerate_clusters(g, i, j, size_cap, rule)?;
    let mut rhs = Compensated::new();
    for t in &terms {
        let b = berretti_term(inst, t, i, j)?;
        rhs.add(0.5 * b.k * (b.z_reduced / z).powi(2));
    }
    let rhs = rhs.value();
    Ok(BerrettiCheck {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        n_clusters: terms.len(),
    })
}

/// `|lhs − rhs|` of the dual-correlation expansion with the exact
/// compatibility rule.
pub fn berretti_identity_residual(inst: &PosteriorInstance, i: usize, j: usize, size_cap: usize) -> Result<f64> {
    Ok(berretti_identity(inst, i, j, size_cap, CompatibilityRule::Exact)?.residual)
}

/// Averaged bound on `E|⟨x_ix_j⟩ − ⟨x_i⟩⟨x_j⟩|` for an LDPC graph:
/// `2^{1−s} E|sinh 2l|^{−2s} · [2^{−2s} Σ_{x ≥ x₀} K^x 2^{(2+k_max)x} Δ^{e(x)}]^{1/2}`
/// with `x₀ = max(1, ⌈dist(i,j)/2⌉)` and `e(x)` the smaller of
/// `(x − 2l_max)/l_max` and `(x − 2l_max)/(2l_max)` when `Δ < 1`.
pub fn berretti_avg_bound(g: &TannerGraph, ch: &ChannelModel, i: usize, j: usize, s: f64) -> Result<AvgBound> {
    require(g, CodeKind::Ldpc)?;
    check_vars(g, &[i, j])?;
    let prefactor = 2f64.powf(1.0 - s) * ch.inv_sinh_moment(s)?;
    let delta = ch.delta_dual(s)?;
    let Some(dist) = g.graph_distance(Node::Var(i), Node::Var(j))? else {
        return Ok(AvgBound {
            value: 0.0,
            diverged: false,
        });
    };
    let lm = g.l_max().max(1) as f64;
    let km = g.k_max() as f64;
    let kk = g.growth_constant() as f64;
    let base = kk * 2f64.powf(2.0 + km);
    let x0 = dist.div_ceil(2).max(1);
    let ratio = base * delta.powf(1.0 / (2.0 * lm));
    if delta >= 1.0 || ratio >= 1.0 {
        return Ok(AvgBound {
            value: f64::INFINITY,
            diverged: true,
        });
    }
    let term = |x: usize| {
        let x = x as f64;
        let e1 = (x - 2.0 * lm) / lm;
        let e2 = (x - 2.0 * lm) / (2.0 * lm);
        base.powf(x) * delta.powf(e1.min(e2))
    };
    let x1 = x0.max(2 * lm as usize);
    let head: f64 = (x0..x1).map(term).sum();
    let tail = term(x1) / (1.0 - ratio);
    let sum = 2f64.powf(-2.0 * s) * (head + tail);
    Ok(AvgBound {
        value: prefactor * sum.sqrt(),
        diverged: false,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gibbs::ExactSolver;
    use crate::rng::substream;
    use rand::Rng as _;

    #[test]
    fn single_check_walk_bound() {
        let g = TannerGraph::new(2, 1, &[(0, 0), (1, 0)], CodeKind::Ldgm).unwrap();
        let inst = PosteriorInstance::new(&g, vec![0.1]).unwrap();
        let b = dkp_pointwise_bound(&inst, &[0], &[1], 1.0, 10).unwrap();
        assert!((b.value - 2.0 * (0.4f64.exp() - 1.0)).abs() < 1e-15);
        assert!(!b.truncated);
        let c = info_bit_correlation(&inst, &[0], &[1]).unwrap();
        assert!((c - 0.1f64.tanh()).abs() < 1e-15);
        let t = dkp_pointwise_bound(&inst, &[0], &[0], 1.0, 10).unwrap();
        assert_eq!(t.value, 2.0);
        let all_bad = dkp_pointwise_bound(&inst, &[0], &[1], 0.05, 10).unwrap();
        assert_eq!(all_bad.value, 2.0);
    }

    #[test]
    fn avg_bound_closed_form() {
        // chain v0 - c0 - v1 - c1 - v2: K = 2·2 = 4
        let g = TannerGraph::new(3, 2, &[(0, 0), (1, 0), (1, 1), (2, 1)], CodeKind::Ldgm).unwrap();
        let ch = ChannelModel::bsc(0.45).unwrap();
        let h = ch.default_h();
        let delta = ch.delta_high(h).unwrap();
        let b = dkp_avg_bound(&g, &ch, &[0], &[2], h).unwrap();
        if 4.0 * delta < 1.0 {
            assert!(!b.diverged);
        } else {
            assert!(b.diverged);
            assert!((b.value - 2.0 * delta * delta).abs() < 1e-14);
        }
        let ch = ChannelModel::bsc(0.499).unwrap();
        let h = 0.01;
        let kd = 4.0 * ch.delta_high(h).unwrap();
        let b = dkp_avg_bound(&g, &ch, &[0], &[2], h).unwrap();
        assert!(!b.diverged);
        assert!((b.value - 2.0 * kd * kd / (1.0 - kd)).abs() < 1e-14);
        let b0 = dkp_avg_bound(&g, &ch, &[1], &[1], h).unwrap();
        assert!((b0.value - 2.0 / (1.0 - kd)).abs() < 1e-14);
    }

    #[test]
    fn expected_rho_matches_monte_carlo() {
        for ch in [ChannelModel::biawgnc(4.0).unwrap(), ChannelModel::bsc(0.45).unwrap()] {
            let h = ch.default_h();
            let exact = expected_rho(&ch, h).unwrap();
            let mut rng = substream(5, 0);
            let n = 200_000;
            let xs: Vec<f64> = (0..n).map(|_| rho(ch.draw(&mut rng), h)).collect();
            let (m, se) = crate::sum::mean_se(&xs);
            assert!((m - exact).abs() < 5.0 * se + 1e-12, "{ch}: {m} vs {exact}");
            assert!(exact <= ch.delta_high(h).unwrap() + 1e-12);
        }
    }

    #[test]
    fn pointwise_dominance_small() {
        let g = TannerGraph::new(
            4,
            5,
            &[(0, 0), (1, 0), (1, 1), (2, 1), (2, 2), (3, 2), (3, 3), (0, 3), (0, 4), (2, 4)],
            CodeKind::Ldgm,
        )
        .unwrap();
        let ch = ChannelModel::bsc(0.3).unwrap();
        let h = ch.default_h();
        let solver = ExactSolver::new(&g).unwrap();
        let pairs: Vec<(usize, usize, DkpWalks)> = (0..5)
            .flat_map(|i| (0..5).map(move |j| (i, j)))
            .filter(|(i, j)| i < j)
            .map(|(i, j)| {
                let w = DkpWalks::new(&g, g.chk_neighbors(i), g.chk_neighbors(j), 10, WALK_CAP).unwrap();
                (i, j, w)
            })
            .collect();
        for seed in 0..200 {
            let l = ch.sample_llr(5, seed);
            let s = solver.evaluate(&l, true).unwrap();
            for (i, j, w) in &pairs {
                let c = s.cov(*i, *j).unwrap().abs();
                assert!(c <= w.pointwise(&l, h).value + 1e-12);
            }
        }
    }

    #[test]
    fn g_sum_split_vanishes_off_connecting_sets() {
        let g = TannerGraph::new(
            4,
            5,
            &[(0, 0), (1, 0), (1, 1), (2, 1), (2, 2), (3, 2), (3, 3), (0, 3), (1, 4)],
            CodeKind::Ldgm,
        )
        .unwrap();
        let mut rng = substream(2, 0);
        for _ in 0..5 {
            let l: Vec<f64> = (0..5).map(|_| rng.random_range(-1.0..1.0)).collect();
            let inst = PosteriorInstance::new(&g, l).unwrap();
            let s = g_sum_split(&inst, &[0], &[2, 3], 0.5).unwrap();
            assert!(s.non_connecting.abs() < 1e-12);
            assert!((s.connecting - s.correlation).abs() < 1e-12);
        }
    }

    fn tiny_ldpc() -> TannerGraph {
        TannerGraph::new(
            5,
            4,
            &[(0, 0), (1, 0), (1, 1), (2, 1), (2, 2), (3, 2), (3, 3), (0, 3), (4, 1), (4, 2)],
            CodeKind::Ldpc,
        )
        .unwrap()
    }

    #[test]
    fn berretti_identity_exact_rule() {
        let g = tiny_ldpc();
        let mut rng = substream(9, 0);
        for _ in 0..4 {
            let l: Vec<f64> = (0..5).map(|_| rng.random_range(-0.5..2.0)).collect();
            let inst = PosteriorInstance::new(&g, l).unwrap();
            for (i, j) in [(0, 2), (0, 1), (1, 4), (0, 3)] {
                let c = berretti_identity(&inst, i, j, 10, CompatibilityRule::Exact).unwrap();
                assert!(c.residual < 1e-8, "{i} {j}: {c:?}");
            }
        }
    }

    #[test]
    fn disconnected_pairs_have_no_clusters() {
        let g = TannerGraph::new(3, 2, &[(0, 0), (1, 0), (2, 1)], CodeKind::Ldpc).unwrap();
        assert!(enumerate_clusters(&g, 0, 2, 10, CompatibilityRule::Exact).unwrap().is_empty());
        let inst = PosteriorInstance::new(&g, vec![0.3, 0.8, -0.2]).unwrap();
        assert!(berretti_identity_residual(&inst, 0, 2, 10).unwrap() < 1e-15);
    }

    #[test]
    fn two_variable_cluster() {
        let g = TannerGraph::new(2, 1, &[(0, 0), (1, 0)], CodeKind::Ldpc).unwrap();
        let terms = enumerate_clusters(&g, 0, 1, 10, CompatibilityRule::Exact).unwrap();
        assert_eq!(terms.len(), 1);
        assert_eq!(terms[0].xhat, vec![0]);
        // Γ ranges over all subsets: ∅ (shared check) plus the nonempty ones
        assert_eq!(terms[0].gammas.len(), 4);
        let inst = PosteriorInstance::new(&g, vec![0.5, 0.3]).unwrap();
        let c = berretti_identity(&inst, 0, 1, 10, CompatibilityRule::Exact).unwrap();
        assert!(c.residual < 1e-10);
        // clean channel: only Γ = ∅ survives and both spins copy u
        let inst = PosteriorInstance::new(&g, vec![30.0, 30.0]).unwrap();
        let t = berretti_term(&inst, &terms[0], 0, 1).unwrap();
        assert!((t.k - 8.0).abs() < 1e-12);
        let c = berretti_identity(&inst, 0, 1, 10, CompatibilityRule::Exact).unwrap();
        assert!((c.lhs - 1.0).abs() < 1e-12 && c.residual < 1e-12);
    }

    #[test]
    fn paper_literal_rule_misses_empty_gamma() {
        let g = TannerGraph::new(2, 1, &[(0, 0), (1, 0)], CodeKind::Ldpc).unwrap();
        let inst = PosteriorInstance::new(&g, vec![0.5, 0.3]).unwrap();
        let lit = berretti_identity(&inst, 0, 1, 10, CompatibilityRule::PaperLiteral).unwrap();
        assert!(lit.residual > 1e-3);
    }

    #[test]
    fn berretti_avg_bound_behaviour() {
        let g = tiny_ldpc();
        let noisy = ChannelModel::bsc(0.2).unwrap();
        assert!(berretti_avg_bound(&g, &noisy, 0, 2, 0.1).unwrap().diverged);
        let quiet = ChannelModel::biawgnc(0.01).unwrap();
        let b1 = berretti_avg_bound(&g, &quiet, 0, 1, 0.1).unwrap();
        let b2 = berretti_avg_bound(&g, &quiet, 0, 2, 0.1).unwrap();
        assert!(!b1.diverged && b1.value.is_finite());
        assert!(b2.value <= b1.value);
    }
}
