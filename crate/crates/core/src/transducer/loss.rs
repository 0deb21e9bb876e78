//! Transducer loss, alignment-restricted loss, fast-emit and the weighted
//! cascade loss.
//!
//! Forward variable `α(t,u)` is the log-probability of reaching node
//! `(t,u)`; backward variable `β(t,u)` the log-probability of finishing from
//! it, terminal blank included. With `P = α(T−1,U) + blank(T−1,U)`:
//!
//! ```text
//! ∂(−log P)/∂blank(t,u) = −exp(α(t,u) + blank(t,u) + β(t+1,u) − log P)
//! ∂(−log P)/∂label(t,u) = −exp(α(t,u) + label(t,u) + β(t,u+1) − log P)
//! ```
//!
//! Gradients are taken with respect to the lattice log-probabilities
//! themselves.
//!
//! Fast-emit scales the label-emission gradients by `1 + λ_fe` and leaves the
//! blank gradients alone. That is the exact gradient of the augmented
//! objective
//!
//! ```text
//! J(blank, label) = L(blank, label) + λ_fe · L(sg(blank), label)
//! ```
//!
//! where `sg` holds the blank log-probabilities at their current value. The
//! reported fast-emit loss is `J`, i.e. `(1 + λ_fe) · L`.

use serde::{Deserialize, Serialize};

use super::LossLattice;
use crate::error::{Error, Result};
use crate::numerics::log_add;

/// Default weight of the fast-encoder loss in the cascade loss.
pub const DEFAULT_LAMBDA: f64 = 0.5;

/// Restricts where each target token may be emitted.
///
/// Token `u` may only be emitted at frames
/// `token_alignment[u] − left_slack ..= token_alignment[u] + right_slack`;
/// `None` leaves that side open.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PathRestriction {
    pub token_alignment: Vec<usize>,
    pub left_slack: Option<usize>,
    pub right_slack: Option<usize>,
}

impl PathRestriction {
    pub fn unrestricted(target_len: usize) -> Self {
        Self {
            token_alignment: vec![0; target_len],
            left_slack: None,
            right_slack: None,
        }
    }

    /// Builds a restriction from millisecond alignments and slacks, rounding
    /// slacks down to whole frames.
    pub fn from_ms(token_end_ms: &[f64], left_ms: Option<f64>, right_ms: Option<f64>, frame_ms: f64) -> Self {
        Self {
            token_alignment: token_end_ms.iter().map(|ms| (ms / frame_ms).floor().max(0.0) as usize).collect(),
            left_slack: left_ms.map(|ms| (ms / frame_ms).floor() as usize),
            right_slack: right_ms.map(|ms| (ms / frame_ms).floor() as usize),
        }
    }

    fn check(&self, lattice: &LossLattice) -> Result<()> {
        if self.token_alignment.len() != lattice.target_len() {
            return Err(Error::Config(format!(
                "restriction has {} alignments for {} target tokens",
                self.token_alignment.len(),
                lattice.target_len()
            )));
        }
        if self.token_alignment.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::Config("token alignment must be nondecreasing".into()));
        }
        Ok(())
    }

    pub fn allows(&self, t: usize, u: usize) -> bool {
        let centre = self.token_alignment[u];
        let lo = self.left_slack.is_none_or(|l| t + l >= centre);
        let hi = self.right_slack.is_none_or(|r| t <= centre + r);
        lo && hi
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// Same layout as [`LossLattice::log_probs`].
    pub grad: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    /// Weight of the fast-encoder loss, `0 < lambda < 1`.
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    #[serde(default)]
    pub fe_lambda: f64,
    /// Alignment restriction slacks in encoder frames.
    #[serde(default)]
    pub left_slack: Option<usize>,
    #[serde(default)]
    pub right_slack: Option<usize>,
    #[serde(default = "yes")]
    pub fastemit_on_fast: bool,
    #[serde(default = "yes")]
    pub fastemit_on_slow: bool,
}

fn default_lambda() -> f64 {
    DEFAULT_LAMBDA
}

fn yes() -> bool {
    true
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            fe_lambda: 0.0,
            left_slack: None,
            right_slack: None,
            fastemit_on_fast: true,
            fastemit_on_slow: true,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return Err(Error::LambdaOutOfRange(self.lambda));
        }
        if !(self.fe_lambda >= 0.0) {
            return Err(Error::NegativeFastEmit(self.fe_lambda));
        }
        Ok(())
    }

    pub fn is_restricted(&self) -> bool {
        self.left_slack.is_some() || self.right_slack.is_some()
    }
}

struct Variables {
    alpha: Vec<f64>,
    beta: Vec<f64>,
    log_p: f64,
}

fn forward_backward(l: &LossLattice, restriction: Option<&PathRestriction>) -> Variables {
    let big_t = l.frames();
    let big_u = l.target_len();
    let width = big_u + 1;
    let allowed = |t: usize, u: usize| restriction.is_none_or(|r| r.allows(t, u));

    let mut alpha = vec![f64::NEG_INFINITY; big_t * width];
    alpha[0] = 0.0;
    for t in 0..big_t {
        for u in 0..width {
            if t == 0 && u == 0 {
                continue;
            }
            let mut a = f64::NEG_INFINITY;
            if t > 0 {
                a = log_add(a, alpha[(t - 1) * width + u] + l.blank_at(t - 1, u));
            }
            if u > 0 && allowed(t, u - 1) {
                a = log_add(a, alpha[t * width + u - 1] + l.label_at(t, u - 1));
            }
            alpha[t * width + u] = a;
        }
    }

    let mut beta = vec![f64::NEG_INFINITY; big_t * width];
    for t in (0..big_t).rev() {
        for u in (0..width).rev() {
            let b = if t == big_t - 1 && u == big_u {
                l.blank_at(t, u)
            } else {
                let mut b = f64::NEG_INFINITY;
                if t + 1 < big_t {
                    b = log_add(b, l.blank_at(t, u) + beta[(t + 1) * width + u]);
                }
                if u < big_u && allowed(t, u) {
                    b = log_add(b, l.label_at(t, u) + beta[t * width + u + 1]);
                }
                b
            };
            beta[t * width + u] = b;
        }
    }

    let log_p = alpha[(big_t - 1) * width + big_u] + l.blank_at(big_t - 1, big_u);
    Variables { alpha, beta, log_p }
}

/// Loss and gradients with optional path restriction and fast-emit weight.
pub fn lattice_loss(lattice: &LossLattice, restriction: Option<&PathRestriction>, fe_lambda: f64) -> Result<LossOutput> {
    if !(fe_lambda >= 0.0) {
        return Err(Error::NegativeFastEmit(fe_lambda));
    }
    if let Some(r) = restriction {
        r.check(lattice)?;
    }
    let v = forward_backward(lattice, restriction);
    if !v.log_p.is_finite() {
        return Err(if restriction.is_some() {
            Error::InfeasibleRestriction
        } else {
            Error::NonFinite("lattice has no path with nonzero probability")
        });
    }

    let big_t = lattice.frames();
    let big_u = lattice.target_len();
    let width = big_u + 1;
    let allowed = |t: usize, u: usize| restriction.is_none_or(|r| r.allows(t, u));
    let label_scale = 1.0 + fe_lambda;
    let mut grad = vec![0.0; lattice.log_probs().len()];
    for t in 0..big_t {
        for u in 0..width {
            let a = v.alpha[t * width + u];
            if a == f64::NEG_INFINITY {
                continue;
            }
            let next_blank = if t + 1 < big_t {
                Some(v.beta[(t + 1) * width + u])
            } else if u == big_u {
                Some(0.0)
            } else {
                None
            };
            if let Some(nb) = next_blank {
                let occ = (a + lattice.blank_at(t, u) + nb - v.log_p).exp();
                grad[lattice.index(t, u, lattice.blank())] = -occ;
            }
            if u < big_u && allowed(t, u) {
                let occ = (a + lattice.label_at(t, u) + v.beta[t * width + u + 1] - v.log_p).exp();
                grad[lattice.index(t, u, lattice.target()[u])] = -label_scale * occ;
            }
        }
    }
    Ok(LossOutput {
        loss: -label_scale * v.log_p,
        grad,
    })
}

/// `−log P(target | lattice)` summed over every alignment path.
pub fn transducer_loss(lattice: &LossLattice) -> Result<LossOutput> {
    lattice_loss(lattice, None, 0.0)
}

/// Transducer loss over the paths that emit each token inside its window.
pub fn restricted_loss(lattice: &LossLattice, restriction: &PathRestriction) -> Result<LossOutput> {
    lattice_loss(lattice, Some(restriction), 0.0)
}

/// Transducer loss with fast-emit regularization; see the module docs.
pub fn fastemit_loss(lattice: &LossLattice, fe_lambda: f64) -> Result<LossOutput> {
    lattice_loss(lattice, None, fe_lambda)
}

/// `loss_slow + lambda · loss_fast`, `0 < lambda < 1`.
pub fn combined_loss(loss_fast: f64, loss_slow: f64, lambda: f64) -> Result<f64> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::LambdaOutOfRange(lambda));
    }
    Ok(loss_slow + lambda * loss_fast)
}

/// Cascade loss over a fast and a slow lattice of the same utterance.
#[derive(Debug, Clone, PartialEq)]
pub struct CascadeLoss {
    pub loss: f64,
    pub fast: LossOutput,
    pub slow: LossOutput,
    /// `lambda · ∂L_fast`.
    pub grad_fast: Vec<f64>,
    /// `∂L_slow`.
    pub grad_slow: Vec<f64>,
}

pub fn cascade_loss(
    fast: &LossLattice,
    slow: &LossLattice,
    token_alignment: Option<&[usize]>,
    cfg: &LossConfig,
) -> Result<CascadeLoss> {
    cfg.validate()?;
    let restriction = match (cfg.is_restricted(), token_alignment) {
        (false, _) => None,
        (true, Some(a)) => Some(PathRestriction {
            token_alignment: a.to_vec(),
            left_slack: cfg.left_slack,
            right_slack: cfg.right_slack,
        }),
        (true, None) => {
            return Err(Error::Config("alignment restriction configured but no token alignment given".into()))
        }
    };
    let fe = |on: bool| if on { cfg.fe_lambda } else { 0.0 };
    let fast_out = lattice_loss(fast, restriction.as_ref(), fe(cfg.fastemit_on_fast))?;
    let slow_out = lattice_loss(slow, restriction.as_ref(), fe(cfg.fastemit_on_slow))?;
    let loss = combined_loss(fast_out.loss, slow_out.loss, cfg.lambda)?;
    let grad_fast = fast_out.grad.iter().map(|g| cfg.lambda * g).collect();
    let grad_slow = slow_out.grad.clone();
    Ok(CascadeLoss {
        loss,
        fast: fast_out,
        slow: slow_out,
        grad_fast,
        grad_slow,
    })
}
