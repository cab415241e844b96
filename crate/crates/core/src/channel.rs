//! Binary-input memoryless symmetric channels and their half-loglikelihoods.
//!
//! All quantities are expressed in terms of the half-loglikelihood
//! `l = ½ ln(p(y|+1)/p(y|−1))` under the all-one codeword.
//!
//! * BSC with flip probability `ε`: `l = ±½ ln((1−ε)/ε)` with probabilities
//!   `(1−ε, ε)`.
//! * BIAWGNC with noise variance `ε`: `l ~ N(1/ε, 1/ε)`.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::Rng as _;
use rand_distr::StandardNormal;
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quad::integrate_split;
use crate::rng::{substream, Rng};

const QUAD_ABS: f64 = 1e-15;
const QUAD_REL: f64 = 1e-12;
/// Half-width of the BIAWGNC integration window in standard deviations.
const WINDOW_SD: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ChannelKind {
    Bsc,
    Biawgnc,
}

/// A channel with its noise parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelModel {
    kind: ChannelKind,
    eps: f64,
}

impl ChannelModel {
    /// BSC with flip probability `eps ∈ (0, ½]`.
    pub fn bsc(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps <= 0.5) {
            return Err(Error::InvalidChannel(format!("bsc flip probability {eps} outside (0, 0.5]")));
        }
        Ok(Self {
            kind: ChannelKind::Bsc,
            eps,
        })
    }

    /// BIAWGNC with noise variance `eps > 0`.
    pub fn biawgnc(eps: f64) -> Result<Self> {
        if !(eps > 0.0 && eps.is_finite()) {
            return Err(Error::InvalidChannel(format!("biawgnc variance {eps} must be positive")));
        }
        Ok(Self {
            kind: ChannelKind::Biawgnc,
            eps,
        })
    }

    pub fn new(kind: ChannelKind, eps: f64) -> Result<Self> {
        match kind {
            ChannelKind::Bsc => Self::bsc(eps),
            ChannelKind::Biawgnc => Self::biawgnc(eps),
        }
    }

    pub fn kind(&self) -> ChannelKind {
        self.kind
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    /// Upper end of the noise range (`½` for the BSC, infinite for the
    /// BIAWGNC).
    pub fn eps_max(&self) -> f64 {
        match self.kind {
            ChannelKind::Bsc => 0.5,
            ChannelKind::Biawgnc => f64::INFINITY,
        }
    }

    /// Same family at another noise level.
    pub fn with_eps(&self, eps: f64) -> Result<Self> {
        Self::new(self.kind, eps)
    }

    /// BSC atom `½ ln((1−ε)/ε)`.
    fn atom(eps: f64) -> f64 {
        0.5 * ((1.0 - eps) / eps).ln()
    }

    /// Mean (and variance) `1/ε` of the BIAWGNC half-loglikelihood.
    fn mu(&self) -> f64 {
        1.0 / self.eps
    }

    /// Draws the channel-independent base variate used to couple samples
    /// across noise levels: a uniform for the BSC, a standard normal for
    /// the BIAWGNC.
    pub fn base_variate(&self, rng: &mut Rng) -> f64 {
        match self.kind {
            ChannelKind::Bsc => rng.random::<f64>(),
            ChannelKind::Biawgnc => rng.sample(StandardNormal),
        }
    }

    /// Maps a base variate to a half-loglikelihood at this noise level.
    pub fn llr_from_base(&self, b: f64) -> f64 {
        match self.kind {
            ChannelKind::Bsc => {
                let a = Self::atom(self.eps);
                if b < self.eps {
                    -a
                } else {
                    a
                }
            }
            ChannelKind::Biawgnc => {
                let mu = self.mu();
                mu + mu.sqrt() * b
            }
        }
    }

    /// One half-loglikelihood drawn from `rng`.
    pub fn draw(&self, rng: &mut Rng) -> f64 {
        let b = self.base_variate(rng);
        self.llr_from_base(b)
    }

    /// `n` i.i.d. half-loglikelihoods, deterministic in `seed`.
    pub fn sample_llr(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = substream(seed, 0);
        (0..n).map(|_| self.draw(&mut rng)).collect()
    }

    /// BIAWGNC density `c(l)`; for the BSC returns `None`.
    pub fn density(&self, l: f64) -> Option<f64> {
        match self.kind {
            ChannelKind::Bsc => None,
            ChannelKind::Biawgnc => {
                let mu = self.mu();
                Some((-(l - mu).powi(2) / (2.0 * mu)).exp() / (2.0 * PI * mu).sqrt())
            }
        }
    }

    /// BIAWGNC `∂c(l)/∂ε`; for the BSC returns `None`.
    pub fn density_eps_derivative(&self, l: f64) -> Option<f64> {
        let c = self.density(l)?;
        let mu = self.mu();
        let x = l - mu;
        Some(c * (0.5 * mu - mu * x - 0.5 * x * x))
    }

    fn window(&self) -> (f64, f64) {
        let mu = self.mu();
        let w = WINDOW_SD * mu.sqrt();
        (mu - w, mu + w)
    }

    /// `E f(l)`: exact on the BSC atoms, by quadrature for the BIAWGNC.
    pub fn expect<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        match self.kind {
            ChannelKind::Bsc => {
                let a = Self::atom(self.eps);
                Ok((1.0 - self.eps) * f(a) + self.eps * f(-a))
            }
            ChannelKind::Biawgnc => {
                let (lo, hi) = self.window();
                let c = |l: f64| self.density(l).unwrap();
                integrate_split(|l| c(l) * f(l), lo, hi, &[0.0], QUAD_ABS, QUAD_REL)
            }
        }
    }

    /// `T_2p(ε) = d/dε ∫ c(l) tanh^{2p}(l) dl`.
    ///
    /// BSC: `−4p(1−2ε)^{2p−1}`. BIAWGNC: central difference of the
    /// quadrature.
    pub fn t2p(&self, p: u32) -> Result<f64> {
        if p == 0 {
            return Err(Error::Parameter("t2p needs p >= 1".into()));
        }
        match self.kind {
            ChannelKind::Bsc => {
                let p = p as f64;
                Ok(-4.0 * p * (1.0 - 2.0 * self.eps).powf(2.0 * p - 1.0))
            }
            ChannelKind::Biawgnc => {
                let h = fd_step(self.eps);
                let g = |eps: f64| -> Result<f64> {
                    self.with_eps(eps)?.expect(|l| l.tanh().powi(2 * p as i32))
                };
                Ok((g(self.eps + h)? - g(self.eps - h)?) / (2.0 * h))
            }
        }
    }

    /// `sup_p |T_2p|`, used for series tail bounds.
    pub fn t2p_sup(&self, p_from: u32) -> Result<f64> {
        match self.kind {
            ChannelKind::Bsc => {
                // |T_2p| = 4p r^{2p-1} peaks near p* = -1/(2 ln r)
                let r = 1.0 - 2.0 * self.eps;
                if r <= 0.0 {
                    return Ok(0.0);
                }
                let mut best = 0.0f64;
                let mut p = p_from.max(1);
                loop {
                    let v = 4.0 * p as f64 * r.powi(2 * p as i32 - 1);
                    if v < best {
                        break;
                    }
                    best = v;
                    p += 1;
                }
                Ok(best)
            }
            ChannelKind::Biawgnc => self.abs_density_derivative_mass(),
        }
    }

    /// `∫ |∂c/∂ε| dl`, a uniform bound on every `|T_2p|` for the BIAWGNC.
    pub fn abs_density_derivative_mass(&self) -> Result<f64> {
        if self.kind != ChannelKind::Biawgnc {
            return Err(Error::InvalidChannel("density derivative needs a continuous channel".into()));
        }
        let (lo, hi) = self.window();
        let mu = self.mu();
        // sign changes at the roots of μ/2 − μx − x²/2, x = l − μ
        let disc = (mu * mu + mu).sqrt();
        integrate_split(
            |l| self.density_eps_derivative(l).unwrap().abs(),
            lo,
            hi,
            &[-disc, disc],
            QUAD_ABS,
            QUAD_REL,
        )
    }

    /// `E e^{m|l|}`.
    pub fn exp_abs_moment(&self, m: f64) -> Result<f64> {
        match self.kind {
            ChannelKind::Bsc => Ok(((1.0 - self.eps) / self.eps).powf(m / 2.0)),
            ChannelKind::Biawgnc => {
                let mu = self.mu();
                // the integrand's Gaussian shifts by m·μ
                let (lo, hi) = self.window();
                let shift = (m * mu).abs();
                let w = WINDOW_SD * mu.sqrt();
                let lo = lo.min(-mu - shift - w);
                let hi = hi.max(mu + shift + w);
                let c = |l: f64| self.density(l).unwrap();
                integrate_split(|l| c(l) * (m * l.abs()).exp(), lo, hi, &[0.0, -mu, mu], 0.0, QUAD_REL)
            }
        }
    }

    /// `E e^{−s l}` in closed form.
    pub fn exp_neg_moment(&self, s: f64) -> f64 {
        let e = self.eps;
        match self.kind {
            ChannelKind::Bsc => e.powf(s / 2.0) * (1.0 - e).powf(1.0 - s / 2.0) + (1.0 - e).powf(s / 2.0) * e.powf(1.0 - s / 2.0),
            ChannelKind::Biawgnc => (-s * self.mu() * (1.0 - s / 2.0)).exp(),
        }
    }

    /// `P(|l| > H)`.
    pub fn tail_prob(&self, h: f64) -> f64 {
        match self.kind {
            ChannelKind::Bsc => {
                if Self::atom(self.eps).abs() > h {
                    1.0
                } else {
                    0.0
                }
            }
            ChannelKind::Biawgnc => {
                let mu = self.mu();
                let s = (2.0 * mu).sqrt();
                0.5 * erfc((h - mu) / s) + 0.5 * erfc((h + mu) / s)
            }
        }
    }

    /// Default bad-set threshold: `ln((1−ε)/ε)` for the BSC, `2ε^{−1/4}`
    /// for the BIAWGNC.
    pub fn default_h(&self) -> f64 {
        match self.kind {
            ChannelKind::Bsc => ((1.0 - self.eps) / self.eps).ln(),
            ChannelKind::Biawgnc => 2.0 * self.eps.powf(-0.25),
        }
    }

    /// `δ(ε, H) = e^{4H} − 1 + P(|l| > H)`.
    pub fn delta_high(&self, h: f64) -> Result<f64> {
        if !(h > 0.0) {
            return Err(Error::Parameter(format!("threshold H = {h} must be positive")));
        }
        Ok((4.0 * h).exp_m1() + self.tail_prob(h))
    }

    /// `Δ(ε) = 2^{2s} E e^{−4sl} + E e^{−8sl}` for `s ∈ (0, ½)`.
    pub fn delta_dual(&self, s: f64) -> Result<f64> {
        check_s(s)?;
        Ok(2f64.powf(2.0 * s) * self.exp_neg_moment(4.0 * s) + self.exp_neg_moment(8.0 * s))
    }

    /// `E |sinh 2l|^{−2s}` for `s ∈ (0, ½)`.
    pub fn inv_sinh_moment(&self, s: f64) -> Result<f64> {
        check_s(s)?;
        match self.kind {
            ChannelKind::Bsc => {
                let e = self.eps;
                if e >= 0.5 {
                    return Ok(f64::INFINITY);
                }
                Ok((2.0 * e * (1.0 - e) / (1.0 - 2.0 * e)).powf(2.0 * s))
            }
            ChannelKind::Biawgnc => {
                let (lo, hi) = self.window();
                let lo = lo.min(-1.0);
                let c = |l: f64| self.density(l).unwrap();
                integrate_split(
                    |l| c(l) * (2.0 * l).sinh().abs().powf(-2.0 * s),
                    lo,
                    hi.max(1.0),
                    &[0.0],
                    QUAD_ABS,
                    1e-10,
                )
            }
        }
    }

    /// `∫ (∂c(l)/∂ε) f(l) dl`.
    ///
    /// BSC: central difference in `ε` of `(1−ε) f(l⁺) + ε f(l⁻)`, atoms
    /// moving with `ε`. BIAWGNC: quadrature against the closed-form density
    /// derivative.
    pub fn gexit_kernel_integral<F: Fn(f64) -> f64>(&self, f: F) -> Result<f64> {
        match self.kind {
            ChannelKind::Bsc => {
                let h = fd_step(self.eps);
                let hi = self.eps + h;
                let lo = self.eps - h;
                let g = |eps: f64| {
                    let a = Self::atom(eps);
                    (1.0 - eps) * f(a) + eps * f(-a)
                };
                Ok((g(hi) - g(lo)) / (hi - lo))
            }
            ChannelKind::Biawgnc => {
                let (lo, hi) = self.window();
                integrate_split(
                    |l| self.density_eps_derivative(l).unwrap() * f(l),
                    lo,
                    hi,
                    &[0.0],
                    QUAD_ABS,
                    QUAD_REL,
                )
            }
        }
    }
}

fn check_s(s: f64) -> Result<()> {
    if !(s > 0.0 && s < 0.5) {
        return Err(Error::Parameter(format!("s = {s} outside (0, 1/2)")));
    }
    Ok(())
}

/// Central-difference step `1e−4 · max(ε, 0.01)`.
pub fn fd_step(eps: f64) -> f64 {
    1e-4 * eps.max(0.01)
}

impl fmt::Display for ChannelModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ChannelKind::Bsc => write!(f, "bsc:{}", self.eps),
            ChannelKind::Biawgnc => write!(f, "biawgnc:{}", self.eps),
        }
    }
}

impl FromStr for ChannelModel {
    type Err = Error;

    /// Parses `bsc:0.25` or `biawgnc:0.5`.
    fn from_str(s: &str) -> Result<Self> {
        let (name, val) = s
            .split_once(':')
            .ok_or_else(|| Error::InvalidChannel(format!("expected `kind:eps`, got `{s}`")))?;
        let eps: f64 = val
            .trim()
            .parse()
            .map_err(|_| Error::InvalidChannel(format!("bad noise parameter `{val}`")))?;
        match name.trim().to_ascii_lowercase().as_str() {
            "bsc" => Self::bsc(eps),
            "biawgnc" | "awgn" => Self::biawgnc(eps),
            other => Err(Error::InvalidChannel(format!("unknown channel `{other}`"))),
        }
    }
}
