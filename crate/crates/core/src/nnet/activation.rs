use crate::error::{Error, Result};
use crate::scalar::{sigmoid, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ActivationKind {
    Identity,
    Relu,
    /// Smooth ReLU: zero below `-beta`, identity above `beta`, and the
    /// quadratic `(u + beta)^2 / (4 beta)` in between.
    Smelu,
    /// `u * sigmoid(beta * u)`.
    Swish,
}

impl ActivationKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ActivationKind::Identity => "identity",
            ActivationKind::Relu => "relu",
            ActivationKind::Smelu => "smelu",
            ActivationKind::Swish => "swish",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "identity" => Some(ActivationKind::Identity),
            "relu" => Some(ActivationKind::Relu),
            "smelu" => Some(ActivationKind::Smelu),
            "swish" => Some(ActivationKind::Swish),
            _ => None,
        }
    }

    pub fn needs_beta(self) -> bool {
        matches!(self, ActivationKind::Smelu | ActivationKind::Swish)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Activation {
    kind: ActivationKind,
    beta: f64,
}

impl Activation {
    pub const IDENTITY: Activation = Activation {
        kind: ActivationKind::Identity,
        beta: 1.0,
    };
    pub const RELU: Activation = Activation {
        kind: ActivationKind::Relu,
        beta: 1.0,
    };

    /// `beta` is required (and must be positive) for SmeLU and Swish, and
    /// ignored otherwise.
    pub fn new(kind: ActivationKind, beta: Option<f64>) -> Result<Self> {
        if !kind.needs_beta() {
            return Ok(Activation { kind, beta: 1.0 });
        }
        match beta {
            None => Err(Error::invalid(
                "model.beta",
                format!("beta required for {}", kind.as_str()),
            )),
            Some(b) if !(b > 0.0 && b.is_finite()) => {
                Err(Error::invalid("model.beta", "beta must be positive"))
            }
            Some(b) => Ok(Activation { kind, beta: b }),
        }
    }

    pub fn smelu(beta: f64) -> Result<Self> {
        Self::new(ActivationKind::Smelu, Some(beta))
    }

    pub fn swish(beta: f64) -> Result<Self> {
        Self::new(ActivationKind::Swish, Some(beta))
    }

    pub fn kind(&self) -> ActivationKind {
        self.kind
    }

    /// `None` for activations without a shape parameter.
    pub fn beta(&self) -> Option<f64> {
        self.kind.needs_beta().then_some(self.beta)
    }

    #[inline]
    pub fn apply<S: Scalar>(&self, u: S) -> S {
        match self.kind {
            ActivationKind::Identity => u,
            ActivationKind::Relu => {
                if u > S::zero() {
                    u
                } else {
                    S::zero()
                }
            }
            ActivationKind::Smelu => {
                let b = S::of(self.beta);
                if u <= -b {
                    S::zero()
                } else if u >= b {
                    u
                } else {
                    let t = u + b;
                    t * t / (S::of(4.0) * b)
                }
            }
            ActivationKind::Swish => u * sigmoid(S::of(self.beta) * u),
        }
    }

    /// Derivative of [`apply`](Self::apply). ReLU takes derivative 0 at 0.
    #[inline]
    pub fn grad<S: Scalar>(&self, u: S) -> S {
        match self.kind {
            ActivationKind::Identity => S::one(),
            ActivationKind::Relu => {
                if u > S::zero() {
                    S::one()
                } else {
                    S::zero()
                }
            }
            ActivationKind::Smelu => {
                let b = S::of(self.beta);
                if u <= -b {
                    S::zero()
                } else if u >= b {
                    S::one()
                } else {
                    (u + b) / (S::of(2.0) * b)
                }
            }
            ActivationKind::Swish => {
                let b = S::of(self.beta);
                let s = sigmoid(b * u);
                s + b * u * s * (S::one() - s)
            }
        }
    }

    /// Points where the activation is not twice differentiable.
    pub fn kinks(&self) -> &'static [f64] {
        match self.kind {
            ActivationKind::Relu => &[0.0],
            ActivationKind::Smelu => &[-1.0, 1.0],
            _ => &[],
        }
    }

    /// Distance from `u` to the nearest kink, or infinity for smooth ones.
    pub fn kink_distance(&self, u: f64) -> f64 {
        let scale = if self.kind == ActivationKind::Smelu {
            self.beta
        } else {
            1.0
        };
        self.kinks()
            .iter()
            .map(|k| (u - k * scale).abs())
            .fold(f64::INFINITY, f64::min)
    }
}

impl std::fmt::Display for Activation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.beta() {
            Some(b) => write!(f, "{}({b})", self.kind.as_str()),
            None => f.write_str(self.kind.as_str()),
        }
    }
}
