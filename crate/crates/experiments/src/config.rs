//! Experiment configuration documents.

use std::path::{Path, PathBuf};

use gibbscode::channel::ChannelModel;
use gibbscode::graph::{CodeKind, DegreeDistribution, TannerGraph};
use serde::{Deserialize, Serialize};

use crate::error::{ExpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    CorrDecay,
    GexitCurve,
    Bounds,
    DualityCheck,
    BerrettiCheck,
    Limits,
    DeCurve,
}

impl ExperimentKind {
    pub const ALL: [ExperimentKind; 7] = [
        ExperimentKind::CorrDecay,
        ExperimentKind::GexitCurve,
        ExperimentKind::Bounds,
        ExperimentKind::DualityCheck,
        ExperimentKind::BerrettiCheck,
        ExperimentKind::Limits,
        ExperimentKind::DeCurve,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::CorrDecay => "corr-decay",
            ExperimentKind::GexitCurve => "gexit-curve",
            ExperimentKind::Bounds => "bounds",
            ExperimentKind::DualityCheck => "duality-check",
            ExperimentKind::BerrettiCheck => "berretti-check",
            ExperimentKind::Limits => "limits",
            ExperimentKind::DeCurve => "de-curve",
        }
    }

    /// Experiments whose outcome is a pass/fail verdict.
    pub fn is_check(self) -> bool {
        matches!(
            self,
            ExperimentKind::Bounds | ExperimentKind::DualityCheck | ExperimentKind::BerrettiCheck | ExperimentKind::Limits
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Ldgm,
    Ldpc,
}

impl From<Family> for CodeKind {
    fn from(f: Family) -> Self {
        match f {
            Family::Ldgm => CodeKind::Ldgm,
            Family::Ldpc => CodeKind::Ldpc,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum CodeSpec {
    /// A graph file in the text format of the core crate.
    File { path: PathBuf },
    /// Configuration-model ensemble with `n` code bits. Coefficients are
    /// node-perspective fractions indexed by degree.
    Ensemble {
        family: Family,
        var_coeffs: Vec<f64>,
        chk_coeffs: Vec<f64>,
        n: usize,
    },
    /// Independent random bipartite graphs; each check gets one forced
    /// neighbour plus each variable with probability `density`.
    Random {
        family: Family,
        count: usize,
        min_var: usize,
        max_var: usize,
        max_chk: usize,
        density: f64,
    },
}

impl CodeSpec {
    pub fn family(&self, loaded: Option<&TannerGraph>) -> CodeKind {
        match self {
            CodeSpec::File { .. } => loaded.expect("file graphs are loaded before use").kind(),
            CodeSpec::Ensemble { family, .. } | CodeSpec::Random { family, .. } => (*family).into(),
        }
    }

    pub fn degree_distribution(&self) -> Option<Result<DegreeDistribution>> {
        match self {
            CodeSpec::Ensemble { var_coeffs, chk_coeffs, .. } => {
                Some(DegreeDistribution::new(var_coeffs.clone(), chk_coeffs.clone()).map_err(ExpError::from))
            }
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChannelSpec {
    Bsc,
    Biawgnc,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// May be omitted when the CLI subcommand names the experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub experiment: Option<ExperimentKind>,
    pub code: CodeSpec,
    pub channel: ChannelSpec,
    #[serde(default)]
    pub eps: Vec<f64>,
    pub samples: usize,
    pub seed: Option<u64>,
    /// BP or DE depth.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d: Option<usize>,
    /// Truncated depths `d′` for the limits experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_prime: Option<Vec<usize>>,
    /// Large depths compared in the limits experiment.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_tail: Option<Vec<usize>>,
    /// Depths swept by de-curve.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_list: Option<Vec<usize>>,
    /// Bad-set threshold `H`; the channel default when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    /// Exponent `s` of the averaged cluster bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_max: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_pop: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub methods: Option<Vec<String>>,
    /// Walk length cap for the walk bound.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub walk_len: Option<usize>,
    /// `|X|` cap for cluster enumeration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cluster_size: Option<usize>,
    /// Number of graphs drawn from an ensemble by bounds.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub graphs: Option<usize>,
    /// Range of uniform LLRs for the identity suites.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub llr_range: Option<[f64; 2]>,
    /// Pass threshold of check experiments.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerance: Option<f64>,
}

pub const GEXIT_METHODS: [&str; 6] = ["functional", "series", "bp", "entropy-fd", "awgn-magnetization", "de"];

fn invalid(msg: impl Into<String>) -> ExpError {
    ExpError::Config(msg.into())
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| invalid(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = Self::from_json(&text)?;
        if let CodeSpec::File { path: p } = &mut cfg.code {
            if p.is_relative() {
                if let Some(dir) = path.parent() {
                    *p = dir.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn kind(&self) -> Result<ExperimentKind> {
        self.experiment.ok_or_else(|| invalid("experiment kind missing"))
    }

    pub fn seed(&self) -> Result<u64> {
        self.seed.ok_or_else(|| invalid("seed is mandatory"))
    }

    pub fn channel(&self, eps: f64) -> Result<ChannelModel> {
        let ch = match self.channel {
            ChannelSpec::Bsc => ChannelModel::bsc(eps),
            ChannelSpec::Biawgnc => ChannelModel::biawgnc(eps),
        };
        ch.map_err(|e| invalid(format!("eps = {eps}: {e}")))
    }

    /// Checks every knob against the preconditions of the experiment.
    pub fn validate(&self) -> Result<()> {
        let kind = self.kind()?;
        self.seed()?;
        if self.samples == 0 {
            return Err(invalid("samples must be positive"));
        }
        match kind {
            ExperimentKind::DualityCheck | ExperimentKind::BerrettiCheck => {}
            _ if self.eps.is_empty() => return Err(invalid("eps grid is empty")),
            _ => {}
        }
        for &e in &self.eps {
            self.channel(e)?;
        }
        match &self.code {
            CodeSpec::Ensemble { n, .. } => {
                if *n == 0 {
                    return Err(invalid("ensemble needs n > 0"));
                }
                self.code.degree_distribution().expect("ensemble")?;
            }
            CodeSpec::Random {
                min_var,
                max_var,
                max_chk,
                density,
                count,
                ..
            } => {
                if *count == 0 || *min_var == 0 || min_var > max_var || *max_chk == 0 {
                    return Err(invalid("random corpus needs count > 0, 1 ≤ min_var ≤ max_var, max_chk ≥ 1"));
                }
                if !(0.0..=1.0).contains(density) {
                    return Err(invalid("density must lie in [0, 1]"));
                }
            }
            CodeSpec::File { path } => {
                if !path.exists() {
                    return Err(invalid(format!("graph file {} not found", path.display())));
                }
            }
        }
        if let Some(r) = self.llr_range {
            if !(r[0] < r[1]) || !r[0].is_finite() || !r[1].is_finite() {
                return Err(invalid("llr_range must be a finite increasing pair"));
            }
        }
        if let Some(h) = self.h {
            if !(h > 0.0) {
                return Err(invalid("h must be positive"));
            }
        }
        if let Some(s) = self.s {
            if !(s > 0.0 && s < 0.5) {
                return Err(invalid("s must lie in (0, 1/2)"));
            }
        }
        if self.p_max == Some(0) {
            return Err(invalid("p_max must be at least 1"));
        }
        if let Some(ms) = &self.methods {
            for m in ms {
                if !GEXIT_METHODS.contains(&m.as_str()) {
                    return Err(invalid(format!("unknown method {m}")));
                }
            }
        }
        let needs_ensemble = match kind {
            ExperimentKind::DeCurve => true,
            ExperimentKind::GexitCurve => self.methods.as_ref().is_some_and(|m| m.iter().any(|x| x == "de")),
            _ => false,
        };
        if needs_ensemble && !matches!(self.code, CodeSpec::Ensemble { .. }) {
            return Err(invalid("density evolution needs an ensemble code spec"));
        }
        match kind {
            ExperimentKind::Limits => {
                if matches!(self.code, CodeSpec::Random { .. }) {
                    return Err(invalid("limits needs one fixed graph"));
                }
                if self.d_prime.as_ref().is_some_and(|v| v.is_empty()) {
                    return Err(invalid("d_prime is empty"));
                }
                if self.d_tail.as_ref().is_some_and(|v| v.len() != 2) {
                    return Err(invalid("d_tail needs exactly two depths"));
                }
            }
            ExperimentKind::DualityCheck | ExperimentKind::BerrettiCheck => {
                if !matches!(self.code.family_hint(), Some(Family::Ldpc) | None) {
                    return Err(invalid("identity suites need LDPC codes"));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

impl CodeSpec {
    fn family_hint(&self) -> Option<Family> {
        match self {
            CodeSpec::File { .. } => None,
            CodeSpec::Ensemble { family, .. } | CodeSpec::Random { family, .. } => Some(*family),
        }
    }
}
