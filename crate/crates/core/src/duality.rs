//! MacWilliams duality for LDPC Gibbs measures.
//!
//! The LDPC partition function is rewritten as a signed sum over the dual
//! code, an LDGM code living on the same graph with information bits `u_a`
//! on the checks and dual bits `τ_i = ∏_{a∈∂i} u_a` on the variables:
//!
//! ```text
//! Z_⊥ = Σ_u ∏_i (1 + e^{−2 l_i} τ_i),     Z = 2^{−m} e^{Σ l} Z_⊥.
//! ```
//!
//! Each factor is `(1 + e^{−2l})` times `1` or `tanh l` depending on the
//! sign of `τ_i`, which keeps the enumeration bounded in magnitude.

use crate::error::{Error, Result};
use crate::gibbs::{ExactSolver, GibbsSummary, PosteriorInstance, BRUTE_FORCE_CAP};
use crate::graph::{CodeKind, TannerGraph};
use twofloat::TwoFloat;

/// Dense GF(2) matrix with rows packed into 64-bit words.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Gf2Matrix {
    n_cols: usize,
    rows: Vec<Vec<u64>>,
}

impl Gf2Matrix {
    pub fn new(n_cols: usize) -> Self {
        Self {
            n_cols,
            rows: Vec::new(),
        }
    }

    /// Appends a row given by the column indices of its ones.
    pub fn push_row(&mut self, support: &[usize]) -> Result<()> {
        let mut row = vec![0u64; self.n_cols.div_ceil(64)];
        for &c in support {
            if c >= self.n_cols {
                return Err(Error::IndexOutOfRange {
                    index: c,
                    limit: self.n_cols,
                });
            }
            row[c / 64] ^= 1 << (c % 64);
        }
        self.rows.push(row);
        Ok(())
    }

    /// Parity-check matrix of an LDPC graph: row `c` has support `∂c`.
    pub fn parity_check(g: &TannerGraph) -> Self {
        let mut m = Self::new(g.n_var());
        for c in 0..g.n_chk() {
            m.push_row(g.chk_neighbors(c)).expect("graph indices are in range");
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn get(&self, r: usize, c: usize) -> bool {
        self.rows[r][c / 64] >> (c % 64) & 1 == 1
    }
}

/// Rank over GF(2) by Gaussian elimination.
pub fn gf2_rank(mat: &Gf2Matrix) -> usize {
    let mut rows = mat.rows.clone();
    let mut rank = 0;
    for col in 0..mat.n_cols {
        let (w, b) = (col / 64, 1u64 << (col % 64));
        let Some(p) = (rank..rows.len()).find(|&r| rows[r][w] & b != 0) else {
            continue;
        };
        rows.swap(rank, p);
        let pivot = rows[rank].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r != rank && row[w] & b != 0 {
                for (d, s) in row.iter_mut().zip(&pivot) {
                    *d ^= s;
                }
            }
        }
        rank += 1;
    }
    rank
}

/// A basis of the GF(2) span of `rows`, each row a bit mask.
pub fn row_basis_u64(rows: &[u64]) -> Vec<u64> {
    let mut basis: Vec<u64> = Vec::new();
    for &r in rows {
        let mut x = r;
        for &b in &basis {
            x = x.min(x ^ b);
        }
        if x != 0 {
            basis.push(x);
            // keep the basis sorted by leading bit so `min` reduction works
            basis.sort_unstable_by(|a, b| b.cmp(a));
        }
    }
    basis
}

/// A basis of `{x : row · x = 0 for every row}` over `n` columns.
pub fn null_space_u64(rows: &[u64], n: usize) -> Vec<u64> {
    // reduced row echelon form with pivot columns
    let mut ech: Vec<u64> = Vec::new();
    let mut pivots: Vec<usize> = Vec::new();
    for &r in rows {
        let mut x = r;
        for (k, &p) in pivots.iter().enumerate() {
            if x >> p & 1 == 1 {
                x ^= ech[k];
            }
        }
        if x == 0 {
            continue;
        }
        let p = x.trailing_zeros() as usize;
        for e in ech.iter_mut() {
            if *e >> p & 1 == 1 {
                *e ^= x;
            }
        }
        ech.push(x);
        pivots.push(p);
    }
    let mut out = Vec::new();
    for f in 0..n {
        if pivots.contains(&f) {
            continue;
        }
        let mut v = 1u64 << f;
        for (k, &p) in pivots.iter().enumerate() {
            if ech[k] >> f & 1 == 1 {
                v |= 1 << p;
            }
        }
        out.push(v);
    }
    out
}

/// An LDPC instance read through its dual LDGM code.
#[derive(Debug, Clone)]
pub struct DualInstance<'g> {
    base: PosteriorInstance<'g>,
}

impl<'g> DualInstance<'g> {
    pub fn new(base: PosteriorInstance<'g>) -> Result<Self> {
        if base.kind() != CodeKind::Ldpc {
            return Err(Error::WrongCodeKind("duality needs an LDPC instance".into()));
        }
        Ok(Self { base })
    }

    pub fn base(&self) -> &PosteriorInstance<'g> {
        &self.base
    }
}

/// Result of one dual enumeration.
#[derive(Debug, Clone)]
pub struct DualSummary {
    /// Sign of `Z_⊥`.
    pub sign: f64,
    /// `ln |Z_⊥|`.
    pub log_abs_z: f64,
    /// `⟨τ_i⟩_⊥`.
    pub tau: Vec<f64>,
    /// Row-major `⟨τ_i τ_j⟩_⊥`.
    pub tau_pair: Vec<f64>,
}

impl DualSummary {
    pub fn pair(&self, i: usize, j: usize) -> f64 {
        self.tau_pair[i * self.tau.len() + j]
    }

    /// `⟨τ_i τ_j⟩_⊥ − ⟨τ_i⟩_⊥⟨τ_j⟩_⊥`.
    pub fn connected(&self, i: usize, j: usize) -> f64 {
        self.pair(i, j) - self.tau[i] * self.tau[j]
    }
}

/// Floor on `|Z_⊥|` below which dual ratios are not trusted.
pub const NEAR_ZERO: f64 = 1e-12;

struct DualSums {
    log_scale: f64,
    total: TwoFloat,
    single: Vec<TwoFloat>,
    pair: Vec<TwoFloat>,
}

/// `e^x` in double-double: Taylor series at `x/2^10`, then ten squarings.
fn exp_dd(x: f64) -> TwoFloat {
    let y = TwoFloat::from(x / 1024.0);
    let mut term = TwoFloat::from(1.0);
    let mut acc = TwoFloat::from(1.0);
    for k in 1..=20 {
        term = term * y / k as f64;
        acc += term;
    }
    for _ in 0..10 {
        acc = acc * acc;
    }
    acc
}

/// `a / b` in double-double by long division on the leading words.
fn div_dd(a: TwoFloat, b: TwoFloat) -> TwoFloat {
    let q1 = a.hi() / b.hi();
    let r = a - b * q1;
    let q2 = r.hi() / b.hi();
    let r = r - b * q2;
    let q3 = r.hi() / b.hi();
    TwoFloat::from(q1) + q2 + q3
}

/// `tanh l` in double-double.
fn tanh_dd(l: f64) -> TwoFloat {
    let e = exp_dd(-2.0 * l.abs());
    let t = div_dd(1.0 - e, 1.0 + e);
    if l < 0.0 {
        -t
    } else {
        t
    }
}

/// Row masks and GF(2) basis of the dual code, plus the scale
/// `Σ ln(1 + e^{−2l}) + (m − rank) ln 2`.
fn dual_setup(g: &TannerGraph, llrs: &[f64], cap: usize) -> Result<(Vec<u64>, f64)> {
    let m = g.n_chk();
    if m > cap {
        return Err(Error::BruteForceCap { free: m, cap });
    }
    let n = g.n_var();
    if n > 64 {
        return Err(Error::Parameter(format!("{n} variables exceed the 64-bit word size")));
    }
    let rows: Vec<u64> = (0..m)
        .map(|c| g.chk_neighbors(c).iter().fold(0u64, |acc, &v| acc | 1 << v))
        .collect();
    let basis = row_basis_u64(&rows);
    let log_scale: f64 = llrs.iter().map(|&l| softplus(-2.0 * l)).sum::<f64>()
        + (m - basis.len()) as f64 * std::f64::consts::LN_2;
    Ok((basis, log_scale))
}

/// Visits every dual word `τ` with its weight `∏_{τ_i = −1} tanh l_i`.
/// The signed sum is badly conditioned, so weights and sums are kept in
/// double-double.
fn for_each_dual_word(basis: &[u64], llrs: &[f64], mut f: impl FnMut(u64, TwoFloat)) {
    let t: Vec<TwoFloat> = llrs.iter().map(|&l| tanh_dd(l)).collect();
    let mut tau = 0u64;
    for k in 0u64..(1 << basis.len()) {
        if k > 0 {
            tau ^= basis[k.trailing_zeros() as usize];
        }
        let mut term = TwoFloat::from(1.0);
        let mut mm = tau;
        while mm != 0 {
            term *= t[mm.trailing_zeros() as usize];
            mm &= mm - 1;
        }
        f(tau, term);
    }
}

fn enumerate_dual(g: &TannerGraph, llrs: &[f64], want_pairs: bool, cap: usize) -> Result<DualSums> {
    let (basis, log_scale) = dual_setup(g, llrs, cap)?;
    let n = g.n_var();
    let zero = TwoFloat::from(0.0);
    let mut total = zero;
    let mut single = vec![zero; n];
    let mut pair = vec![zero; if want_pairs { n * n } else { 0 }];
    for_each_dual_word(&basis, llrs, |tau, term| {
        total += term;
        for i in 0..n {
            let si = if tau >> i & 1 == 1 { -term } else { term };
            single[i] += si;
            if want_pairs {
                for j in 0..n {
                    pair[i * n + j] += if tau >> j & 1 == 1 { -si } else { si };
                }
            }
        }
    });
    Ok(DualSums {
        log_scale,
        total,
        single,
        pair,
    })
}

/// `ln(1 + e^x)` without overflow.
fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// `(sign, ln |Z_⊥|)`.
pub fn dual_partition(dinst: &DualInstance) -> Result<(f64, f64)> {
    let s = enumerate_dual(dinst.base.graph(), dinst.base.llrs(), false, BRUTE_FORCE_CAP)?;
    let total = s.total.hi();
    Ok((total.signum(), s.log_scale + total.abs().ln()))
}

/// Full dual summary: `Z_⊥` with all one- and two-point brackets.
pub fn dual_summary(dinst: &DualInstance) -> Result<DualSummary> {
    let s = enumerate_dual(dinst.base.graph(), dinst.base.llrs(), true, BRUTE_FORCE_CAP)?;
    let total = s.total.hi();
    let log_abs_z = s.log_scale + total.abs().ln();
    if log_abs_z < NEAR_ZERO.ln() {
        return Err(Error::NearZeroDualPartition(total.signum() * log_abs_z.exp()));
    }
    Ok(DualSummary {
        sign: total.signum(),
        log_abs_z,
        tau: s.single.iter().map(|&v| div_dd(v, s.total).hi()).collect(),
        tau_pair: s.pair.iter().map(|&v| div_dd(v, s.total).hi()).collect(),
    })
}

/// `⟨∏_{i∈S} τ_i⟩_⊥`.
pub fn dual_bracket(dinst: &DualInstance, set: &[usize]) -> Result<f64> {
    let g = dinst.base.graph();
    let n = g.n_var();
    let mut mask = 0u64;
    for &i in set {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, limit: n });
        }
        mask ^= 1 << i;
    }
    let (basis, log_scale) = dual_setup(g, dinst.base.llrs(), BRUTE_FORCE_CAP)?;
    let mut num = TwoFloat::from(0.0);
    let mut den = TwoFloat::from(0.0);
    for_each_dual_word(&basis, dinst.base.llrs(), |tau, term| {
        den += term;
        num += if (tau & mask).count_ones() % 2 == 1 { -term } else { term };
    });
    if log_scale + den.hi().abs().ln() < NEAR_ZERO.ln() {
        return Err(Error::NearZeroDualPartition(den.hi() * log_scale.exp()));
    }
    Ok(div_dd(num, den).hi())
}

/// Relative residual of `Z = 2^{−m} e^{Σ l} Z_⊥`, where `2^m` counts the
/// dual configurations `u` (equal to `|C⊥|` when the checks are
/// independent).
pub fn macwilliams_residual(inst: &PosteriorInstance) -> Result<f64> {
    let dinst = DualInstance::new(inst.clone())?;
    let (sign, log_zd) = dual_partition(&dinst)?;
    let log_z = crate::gibbs::partition_function(inst)?;
    if sign <= 0.0 {
        return Ok(f64::INFINITY);
    }
    let m = inst.graph().n_chk() as f64;
    let sum_l: f64 = inst.llrs().iter().sum();
    let rhs = -m * std::f64::consts::LN_2 + sum_l + log_zd;
    Ok((rhs - log_z).exp_m1().abs())
}

/// Residuals of the one- and two-point duality formulas.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DualityResiduals {
    /// `|⟨x_i⟩ − (coth 2l_i − ⟨τ_i⟩_⊥ / sinh 2l_i)|`, `None` below the floor.
    pub r1: Option<f64>,
    /// Connected two-point residual, `None` below the floor.
    pub r2: Option<f64>,
}

/// Default floor on `|sinh 2l|` for residual checks.
pub const SINH_FLOOR: f64 = 1e-3;

fn residuals_from(primal: &GibbsSummary, dual: &DualSummary, llrs: &[f64], i: usize, j: usize, floor: f64) -> DualityResiduals {
    let si = (2.0 * llrs[i]).sinh();
    let sj = (2.0 * llrs[j]).sinh();
    let ok_i = si.abs() > floor;
    let ok_j = sj.abs() > floor;
    let r1 = ok_i.then(|| {
        let rhs = 1.0 / (2.0 * llrs[i]).tanh() - dual.tau[i] / si;
        (primal.marginals[i] - rhs).abs()
    });
    let r2 = (ok_i && ok_j && i != j).then(|| {
        let lhs = primal.cov(i, j).expect("covariance computed");
        (lhs - dual.connected(i, j) / (si * sj)).abs()
    });
    DualityResiduals { r1, r2 }
}

/// Residuals at the pair `(i, j)`, with the primal side computed exactly.
pub fn duality_residuals(dinst: &DualInstance, i: usize, j: usize, floor: f64) -> Result<DualityResiduals> {
    let n = dinst.base.graph().n_var();
    for x in [i, j] {
        if x >= n {
            return Err(Error::IndexOutOfRange { index: x, limit: n });
        }
    }
    let primal = ExactSolver::new(dinst.base.graph())?.evaluate(dinst.base.llrs(), true)?;
    let dual = dual_summary(dinst)?;
    Ok(residuals_from(&primal, &dual, dinst.base.llrs(), i, j, floor))
}

/// Largest residuals over all bits and pairs meeting the floor.
pub fn max_duality_residuals(dinst: &DualInstance, floor: f64) -> Result<(f64, f64)> {
    let llrs = dinst.base.llrs();
    let primal = ExactSolver::new(dinst.base.graph())?.evaluate(llrs, true)?;
    let dual = dual_summary(dinst)?;
    let n = llrs.len();
    let (mut m1, mut m2) = (0.0f64, 0.0f64);
    for i in 0..n {
        for j in 0..n {
            let r = residuals_from(&primal, &dual, llrs, i, j, floor);
            if let Some(v) = r.r1 {
                m1 = m1.max(v);
            }
            if let Some(v) = r.r2 {
                m2 = m2.max(v);
            }
        }
    }
    Ok((m1, m2))
}

/// Dual brackets recovered from the primal measure by inverting the
/// duality formulas; used when `Z_⊥` is too close to zero to divide by.
pub fn dual_from_primal(primal: &GibbsSummary, llrs: &[f64]) -> DualSummary {
    let n = llrs.len();
    let tau: Vec<f64> = (0..n)
        .map(|i| {
            let l2 = 2.0 * llrs[i];
            l2.cosh() - primal.marginals[i] * l2.sinh()
        })
        .collect();
    let mut tau_pair = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            tau_pair[i * n + j] = if i == j {
                1.0
            } else {
                let c = primal.cov(i, j).expect("covariance computed");
                c * (2.0 * llrs[i]).sinh() * (2.0 * llrs[j]).sinh() + tau[i] * tau[j]
            };
        }
    }
    DualSummary {
        sign: 1.0,
        log_abs_z: f64::NAN,
        tau,
        tau_pair,
    }
}
