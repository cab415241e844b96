//! Sum-product belief propagation on Tanner graphs and exact decoding on
//! computational trees.
//!
//! Messages are half-loglikelihoods. The check rule `atanh(∏ tanh a_j)` is
//! evaluated as a fold of the two-input [`boxplus`], which stays exact when
//! inputs are large.
//!
//! Running `d` flooding iterations from zero messages gives the same root
//! estimate as exact decoding on the computational tree of depth `2d`.

use crate::error::{Error, Result};
use crate::gibbs::{combine, PosteriorInstance};
use crate::graph::{CodeKind, ComputationalTree, Node, TannerGraph};

/// Saturation bound on messages (nats).
pub const L_SAT: f64 = 30.0;
/// Clamp applied to `atanh` arguments.
pub const ATANH_CLAMP: f64 = 1.0 - 1e-12;

/// `ln cosh x` without overflow.
pub fn ln_cosh(x: f64) -> f64 {
    let a = x.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// `atanh(tanh a · tanh b)`.
pub fn boxplus(a: f64, b: f64) -> f64 {
    if a == 0.0 || b == 0.0 {
        return 0.0;
    }
    if a.is_infinite() {
        return if a > 0.0 { b } else { -b };
    }
    if b.is_infinite() {
        return if b > 0.0 { a } else { -a };
    }
    let p = a.tanh() * b.tanh();
    if p.abs() < 0.9 {
        p.atanh()
    } else {
        0.5 * (ln_cosh(a + b) - ln_cosh(a - b))
    }
}

/// `atanh(∏ tanh a_j)` over `xs` (zero for an empty product is not
/// meaningful; an empty slice gives `+∞`).
pub fn boxplus_all<I: IntoIterator<Item = f64>>(xs: I) -> f64 {
    xs.into_iter().fold(f64::INFINITY, boxplus)
}

/// `∂/∂a_j atanh(∏ tanh a_i)` given the result `h` and the product `q` of
/// the other factors' `tanh`.
fn boxplus_partial(h: f64, a_j: f64, q: f64) -> f64 {
    if a_j.is_infinite() {
        return 0.0;
    }
    (2.0 * (ln_cosh(h) - ln_cosh(a_j))).exp() * q
}

fn saturate(x: f64) -> f64 {
    x.clamp(-L_SAT, L_SAT)
}

fn clamped_atanh(p: f64) -> f64 {
    p.clamp(-ATANH_CLAMP, ATANH_CLAMP).atanh()
}

/// Per-edge messages. Edge `e` joins `edges[e].0` (variable) and
/// `edges[e].1` (check).
#[derive(Debug, Clone, PartialEq)]
pub struct MessageState {
    pub v2c: Vec<f64>,
    pub c2v: Vec<f64>,
    pub iteration: usize,
}

/// Output of [`bp_run`].
#[derive(Debug, Clone, PartialEq)]
pub struct BpOutput {
    /// `⟨x_i⟩^{BP}_d` per code bit.
    pub marginals: Vec<f64>,
    /// Extrinsic estimates: the same estimate without the bit's own
    /// observation.
    pub extrinsics: Vec<f64>,
    pub state: MessageState,
}

struct EdgeIndex {
    var_edges: Vec<Vec<usize>>,
    chk_edges: Vec<Vec<usize>>,
}

impl EdgeIndex {
    fn new(g: &TannerGraph) -> Self {
        let mut var_edges = vec![Vec::new(); g.n_var()];
        let mut chk_edges = vec![Vec::new(); g.n_chk()];
        for (e, (v, c)) in g.edges().into_iter().enumerate() {
            var_edges[v].push(e);
            chk_edges[c].push(e);
        }
        Self {
            var_edges,
            chk_edges,
        }
    }
}

/// `d` flooding iterations of sum-product from zero messages.
pub fn bp_run(inst: &PosteriorInstance, d: usize) -> BpOutput {
    let g = inst.graph();
    let l = inst.llrs();
    let idx = EdgeIndex::new(g);
    let ne = g.n_edges();
    let mut v2c = vec![0.0; ne];
    let mut c2v = vec![0.0; ne];
    match g.kind() {
        CodeKind::Ldpc => {
            for _ in 0..d {
                for (v, es) in idx.var_edges.iter().enumerate() {
                    let total: f64 = l[v] + es.iter().map(|&e| c2v[e]).sum::<f64>();
                    for &e in es {
                        v2c[e] = saturate(total - c2v[e]);
                    }
                }
                for es in &idx.chk_edges {
                    for &e in es {
                        let m = boxplus_all(es.iter().filter(|&&f| f != e).map(|&f| v2c[f]));
                        c2v[e] = saturate(m);
                    }
                }
            }
            let ext: Vec<f64> = idx
                .var_edges
                .iter()
                .map(|es| saturate(es.iter().map(|&e| c2v[e]).sum::<f64>()))
                .collect();
            BpOutput {
                marginals: ext.iter().zip(l).map(|(u, li)| (li + u).tanh()).collect(),
                extrinsics: ext.iter().map(|u| u.tanh()).collect(),
                state: MessageState {
                    v2c,
                    c2v,
                    iteration: d,
                },
            }
        }
        CodeKind::Ldgm => {
            for _ in 0..d {
                for (a, es) in idx.chk_edges.iter().enumerate() {
                    for &e in es {
                        let others = es.iter().filter(|&&f| f != e).map(|&f| v2c[f]);
                        c2v[e] = saturate(boxplus_all(std::iter::once(l[a]).chain(others)));
                    }
                }
                for es in &idx.var_edges {
                    let total: f64 = es.iter().map(|&e| c2v[e]).sum();
                    for &e in es {
                        v2c[e] = saturate(total - c2v[e]);
                    }
                }
            }
            let pi: Vec<f64> = idx
                .chk_edges
                .iter()
                .map(|es| es.iter().map(|&e| v2c[e].tanh()).product::<f64>())
                .collect();
            BpOutput {
                marginals: pi.iter().zip(l).map(|(&p, &li)| combine(p, li)).collect(),
                extrinsics: pi.iter().map(|&p| clamped_atanh(p).tanh()).collect(),
                state: MessageState {
                    v2c,
                    c2v,
                    iteration: d,
                },
            }
        }
    }
}

/// Extrinsic BP estimate for code bit `i` after `d` iterations.
pub fn bp_extrinsic(inst: &PosteriorInstance, i: usize, d: usize) -> Result<f64> {
    let n = inst.graph().n_code_bits();
    if i >= n {
        return Err(Error::IndexOutOfRange { index: i, limit: n });
    }
    Ok(bp_run(inst, d).extrinsics[i])
}

/// Exact root quantities of the tree Gibbs measure.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeDecode {
    /// Root field `H` with `⟨x_root⟩ = tanh H`.
    pub root_field: f64,
    pub marginal: f64,
    /// Root estimate with the root's own observation removed.
    pub extrinsic: f64,
    /// `(tree node, same-type distance from the root, covariance)` for
    /// every code-bit tree node, when requested.
    pub correlations: Option<Vec<(usize, usize, f64)>>,
}

/// Exact leaf-to-root elimination on a computational tree, with the
/// channel values pulled back through the projection.
///
/// Covariances with the root are obtained as `∂⟨x_root⟩/∂l_k` by a second,
/// root-to-leaf pass of the chain rule.
pub fn tree_decode(ct: &ComputationalTree, inst: &PosteriorInstance, with_correlations: bool) -> Result<TreeDecode> {
    let g = inst.graph();
    if ct.kind() != g.kind() {
        return Err(Error::WrongCodeKind("tree and instance code kinds differ".into()));
    }
    let l = inst.llrs();
    let field = |t: usize| -> f64 {
        match (ct.kind(), ct.proj(t)) {
            (CodeKind::Ldpc, Node::Var(v)) => l[v],
            (CodeKind::Ldgm, Node::Chk(c)) => l[c],
            _ => 0.0,
        }
    };
    let nodes = ct.nodes();
    let n = nodes.len();
    // upward messages; for the root, the field aggregated from its children
    let mut msg = vec![0.0; n];
    for t in (0..n).rev() {
        let node = &nodes[t];
        let code_bit = ct.is_code_bit(t);
        let is_var = matches!(node.proj, Node::Var(_));
        msg[t] = if is_var {
            // variable: sum of child check messages, plus the field for LDPC
            field(t) + node.children.iter().map(|&c| msg[c]).sum::<f64>()
        } else if t == 0 {
            // LDGM root check: boxplus of the children, field added below
            if node.truncated > 0 {
                0.0
            } else {
                boxplus_all(node.children.iter().map(|&c| msg[c]))
            }
        } else if node.truncated > 0 {
            0.0
        } else if code_bit {
            boxplus_all(std::iter::once(field(t)).chain(node.children.iter().map(|&c| msg[c])))
        } else {
            boxplus_all(node.children.iter().map(|&c| msg[c]))
        };
    }
    let (h, ext_field) = match ct.kind() {
        CodeKind::Ldpc => (msg[0], msg[0] - field(0)),
        CodeKind::Ldgm => (field(0) + msg[0], msg[0]),
    };
    let marginal = h.tanh();
    let extrinsic = ext_field.tanh();
    let correlations = with_correlations.then(|| {
        // dh[t] = ∂H/∂msg[t]
        let mut dh = vec![0.0; n];
        let sech2 = (-2.0 * ln_cosh(h)).exp();
        let mut out = Vec::new();
        for t in 0..n {
            let node = &nodes[t];
            let is_var = matches!(node.proj, Node::Var(_));
            let d_self = if t == 0 { 1.0 } else { dh[t] };
            if d_self != 0.0 {
                if is_var || (t == 0 && ct.kind() == CodeKind::Ldpc) {
                    for &c in &node.children {
                        dh[c] = d_self;
                    }
                } else if node.truncated == 0 {
                    // check: boxplus over children (and the field for a
                    // non-root LDGM code bit)
                    let own = if t != 0 && ct.is_code_bit(t) { Some(field(t)) } else { None };
                    let args: Vec<f64> = own.into_iter().chain(node.children.iter().map(|&c| msg[c])).collect();
                    let offset = usize::from(own.is_some());
                    for (k, &c) in node.children.iter().enumerate() {
                        let q: f64 = args
                            .iter()
                            .enumerate()
                            .filter(|&(j, _)| j != k + offset)
                            .map(|(_, a)| a.tanh())
                            .product();
                        dh[c] = d_self * boxplus_partial(msg[t], msg[c], q);
                    }
                }
            }
            if ct.is_code_bit(t) {
                let dl = if t == 0 {
                    1.0
                } else {
                    match ct.kind() {
                        CodeKind::Ldpc => dh[t],
                        CodeKind::Ldgm => {
                            if node.truncated > 0 {
                                0.0
                            } else {
                                let q: f64 = node.children.iter().map(|&c| msg[c].tanh()).product();
                                dh[t] * boxplus_partial(msg[t], field(t), q)
                            }
                        }
                    }
                };
                out.push((t, node.depth / 2, sech2 * dl));
            }
        }
        out
    });
    Ok(TreeDecode {
        root_field: h,
        marginal,
        extrinsic,
        correlations,
    })
}
