//! Ground-truth models and the synthetic examples they generate.
//!
//! Two generating models are supported. The linear model assigns a log-odds
//! weight to each of 32 binary features split into two groups of 16. The
//! quadratic model splits the features into 8 blocks of 4 and scores each
//! block with a lower-triangular 4x4 matrix. Both draw their parameters from
//! the same three-component normal mixture.

use std::f64::consts::PI;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};

pub const FEATURES: usize = 32;
pub const LINEAR_GROUP: usize = 16;
pub const BLOCKS: usize = 8;
pub const BLOCK: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TruthKind {
    Linear,
    Quadratic,
}

impl TruthKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TruthKind::Linear => "linear",
            TruthKind::Quadratic => "quadratic",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "linear" => Some(TruthKind::Linear),
            "quadratic" => Some(TruthKind::Quadratic),
            _ => None,
        }
    }

    fn group_len(self) -> usize {
        match self {
            TruthKind::Linear => LINEAR_GROUP,
            TruthKind::Quadratic => BLOCK,
        }
    }
}

/// Equal-weight mixture of unit-variance normals centred at -2, 0 and 2.
#[derive(Debug, Clone, Copy)]
pub struct MixtureSpec {
    pub means: [f64; 3],
    pub component_sd: f64,
}

impl Default for MixtureSpec {
    fn default() -> Self {
        MixtureSpec {
            means: [-2.0, 0.0, 2.0],
            component_sd: 1.0,
        }
    }
}

impl MixtureSpec {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let mu = self.means[rng.random_range(0..self.means.len())];
        let z: f64 = StandardNormal.sample(rng);
        mu + self.component_sd * z
    }
}

/// Closed-form activation prior of the `j`-th feature (1-based) within its
/// group: `6/(j pi)^2` for the linear model, `90/(j pi)^4` for the quadratic.
pub fn feature_probability(kind: TruthKind, j: usize) -> Result<f64> {
    let max = kind.group_len();
    if j == 0 || j > max {
        return Err(Error::FeatureIndex { index: j, max });
    }
    let jp = j as f64 * PI;
    Ok(match kind {
        TruthKind::Linear => 6.0 / (jp * jp),
        TruthKind::Quadratic => 90.0 / (jp * jp * jp * jp),
    })
}

fn priors(kind: TruthKind) -> [f64; FEATURES] {
    let g = kind.group_len();
    std::array::from_fn(|k| feature_probability(kind, k % g + 1).expect("index in range"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Neg,
    Pos,
}

impl Label {
    #[inline]
    pub fn sign(self) -> f64 {
        match self {
            Label::Neg => -1.0,
            Label::Pos => 1.0,
        }
    }

    #[inline]
    pub fn is_pos(self) -> bool {
        self == Label::Pos
    }

    /// Report-side `{0,1}` encoding.
    pub fn as_bit(self) -> u8 {
        self.is_pos() as u8
    }
}

/// One binary feature vector with its label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Example {
    pub x: [u8; FEATURES],
    pub y: Label,
}

impl Example {
    pub fn active(&self) -> impl Iterator<Item = usize> + '_ {
        self.x.iter().enumerate().filter(|(_, &v)| v != 0).map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LinearTruth {
    theta: [f64; FEATURES],
    feature_priors: [f64; FEATURES],
}

impl LinearTruth {
    pub fn new(theta: [f64; FEATURES]) -> Self {
        LinearTruth {
            theta,
            feature_priors: priors(TruthKind::Linear),
        }
    }

    pub fn theta(&self) -> &[f64; FEATURES] {
        &self.theta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticTruth {
    /// Row-major 4x4 blocks; entries above the diagonal are always zero.
    blocks: [[[f64; BLOCK]; BLOCK]; BLOCKS],
    feature_priors: [f64; FEATURES],
}

impl QuadraticTruth {
    /// Builds from the 10 lower-triangular entries of each block, listed row
    /// by row (`(0,0), (1,0), (1,1), (2,0), ...`).
    pub fn from_lower(lower: [[f64; 10]; BLOCKS]) -> Self {
        let mut blocks = [[[0.0; BLOCK]; BLOCK]; BLOCKS];
        for (b, vals) in lower.iter().enumerate() {
            let mut it = vals.iter();
            for i in 0..BLOCK {
                for j in 0..=i {
                    blocks[b][i][j] = *it.next().expect("10 entries");
                }
            }
        }
        QuadraticTruth {
            blocks,
            feature_priors: priors(TruthKind::Quadratic),
        }
    }

    pub fn blocks(&self) -> &[[[f64; BLOCK]; BLOCK]; BLOCKS] {
        &self.blocks
    }

    /// Dense 32x32 block-diagonal matrix.
    pub fn dense(&self) -> Vec<[f64; FEATURES]> {
        let mut m = vec![[0.0; FEATURES]; FEATURES];
        for (b, block) in self.blocks.iter().enumerate() {
            for i in 0..BLOCK {
                for j in 0..BLOCK {
                    m[b * BLOCK + i][b * BLOCK + j] = block[i][j];
                }
            }
        }
        m
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Truth {
    Linear(LinearTruth),
    Quadratic(QuadraticTruth),
}

pub fn sample_linear_truth<R: Rng + ?Sized>(rng: &mut R) -> LinearTruth {
    let mix = MixtureSpec::default();
    let theta = std::array::from_fn(|_| mix.sample(rng));
    LinearTruth::new(theta)
}

pub fn sample_quadratic_truth<R: Rng + ?Sized>(rng: &mut R) -> QuadraticTruth {
    let mix = MixtureSpec::default();
    let lower = std::array::from_fn(|_| std::array::from_fn(|_| mix.sample(rng)));
    QuadraticTruth::from_lower(lower)
}

impl Truth {
    pub fn sample<R: Rng + ?Sized>(kind: TruthKind, rng: &mut R) -> Self {
        match kind {
            TruthKind::Linear => Truth::Linear(sample_linear_truth(rng)),
            TruthKind::Quadratic => Truth::Quadratic(sample_quadratic_truth(rng)),
        }
    }

    pub fn kind(&self) -> TruthKind {
        match self {
            Truth::Linear(_) => TruthKind::Linear,
            Truth::Quadratic(_) => TruthKind::Quadratic,
        }
    }

    pub fn feature_priors(&self) -> &[f64; FEATURES] {
        match self {
            Truth::Linear(t) => &t.feature_priors,
            Truth::Quadratic(t) => &t.feature_priors,
        }
    }

    /// Linear weights, when the truth has them.
    pub fn theta(&self) -> Option<&[f64; FEATURES]> {
        match self {
            Truth::Linear(t) => Some(&t.theta),
            Truth::Quadratic(_) => None,
        }
    }

    pub fn log_odds(&self, x: &[u8; FEATURES]) -> f64 {
        match self {
            Truth::Linear(t) => x
                .iter()
                .zip(&t.theta)
                .filter(|(&xi, _)| xi != 0)
                .map(|(_, &w)| w)
                .sum(),
            Truth::Quadratic(t) => {
                let mut s = 0.0;
                for (b, block) in t.blocks.iter().enumerate() {
                    let xb = &x[b * BLOCK..(b + 1) * BLOCK];
                    for i in 0..BLOCK {
                        if xb[i] == 0 {
                            continue;
                        }
                        for j in 0..=i {
                            if xb[j] != 0 {
                                s += block[i][j];
                            }
                        }
                    }
                }
                s
            }
        }
    }

    pub fn label_probability(&self, x: &[u8; FEATURES], y: Label) -> f64 {
        crate::scalar::sigmoid(y.sign() * self.log_odds(x))
    }

    pub fn positive_probability(&self, x: &[u8; FEATURES]) -> f64 {
        self.label_probability(x, Label::Pos)
    }

    pub fn sample_features<R: Rng + ?Sized>(&self, rng: &mut R) -> [u8; FEATURES] {
        let p = self.feature_priors();
        std::array::from_fn(|k| (rng.random::<f64>() < p[k]) as u8)
    }

    pub fn sample_label<R: Rng + ?Sized>(&self, x: &[u8; FEATURES], rng: &mut R) -> Label {
        if rng.random::<f64>() < self.positive_probability(x) {
            Label::Pos
        } else {
            Label::Neg
        }
    }

    pub fn sample_example<R: Rng + ?Sized>(&self, rng: &mut R) -> Example {
        let x = self.sample_features(rng);
        let y = self.sample_label(&x, rng);
        Example { x, y }
    }

    /// Key/value text form, one parameter per line, 17 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "kind = {}", self.kind().as_str());
        match self {
            Truth::Linear(t) => {
                for (j, v) in t.theta.iter().enumerate() {
                    let _ = writeln!(out, "theta.{j} = {v:.16e}");
                }
            }
            Truth::Quadratic(t) => {
                for (b, block) in t.blocks.iter().enumerate() {
                    for i in 0..BLOCK {
                        for j in 0..=i {
                            let _ = writeln!(out, "block.{b}.{i}.{j} = {:.16e}", block[i][j]);
                        }
                    }
                }
            }
        }
        for (k, p) in self.feature_priors().iter().enumerate() {
            let _ = writeln!(out, "prior.{k} = {p:.16e}");
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut kind = None;
        let mut values = std::collections::BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Truth(format!("line {}: expected `key = value`", n + 1)))?;
            let (k, v) = (k.trim(), v.trim());
            if k == "kind" {
                kind = Some(
                    TruthKind::parse(v)
                        .ok_or_else(|| Error::Truth(format!("unknown kind `{v}`")))?,
                );
                continue;
            }
            let val: f64 = v
                .parse()
                .map_err(|_| Error::Truth(format!("line {}: bad number `{v}`", n + 1)))?;
            if !val.is_finite() {
                return Err(Error::Truth(format!("line {}: non-finite value", n + 1)));
            }
            if values.insert(k.to_string(), val).is_some() {
                return Err(Error::Truth(format!("duplicate key `{k}`")));
            }
        }
        let kind = kind.ok_or_else(|| Error::Truth("missing `kind`".into()))?;
        let mut take = |key: String| {
            values
                .remove(&key)
                .ok_or_else(|| Error::Truth(format!("missing `{key}`")))
        };
        let mut truth = match kind {
            TruthKind::Linear => {
                let mut theta = [0.0; FEATURES];
                for (j, t) in theta.iter_mut().enumerate() {
                    *t = take(format!("theta.{j}"))?;
                }
                Truth::Linear(LinearTruth::new(theta))
            }
            TruthKind::Quadratic => {
                let mut lower = [[0.0; 10]; BLOCKS];
                for (b, vals) in lower.iter_mut().enumerate() {
                    let mut n = 0;
                    for i in 0..BLOCK {
                        for j in 0..=i {
                            vals[n] = take(format!("block.{b}.{i}.{j}"))?;
                            n += 1;
                        }
                    }
                }
                Truth::Quadratic(QuadraticTruth::from_lower(lower))
            }
        };
        let mut pinned = [0.0; FEATURES];
        for (k, p) in pinned.iter_mut().enumerate() {
            *p = take(format!("prior.{k}"))?;
            if !(*p > 0.0 && *p < 1.0) {
                return Err(Error::Truth(format!("prior.{k} outside (0,1)")));
            }
        }
        if let Some(k) = values.keys().next() {
            return Err(Error::Truth(format!("unexpected key `{k}`")));
        }
        match &mut truth {
            Truth::Linear(t) => t.feature_priors = pinned,
            Truth::Quadratic(t) => t.feature_priors = pinned,
        }
        Ok(truth)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}
