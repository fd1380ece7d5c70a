use crate::datagen::{FEATURES, LINEAR_GROUP};
use crate::error::{Error, Result};

use super::activation::{Activation, ActivationKind};

pub const DEFAULT_TOWER: [usize; 4] = [16, 8, 4, 2];
pub const DEFAULT_QUAD_TOWER: [usize; 2] = [1024, 512];
pub const DEFAULT_EMBEDDING_DIM: usize = 2;
pub const DEFAULT_WIDE_HIDDEN: usize = 1000;

/// Network topology. Every variant ends in a single logit.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum ArchKind {
    /// Logistic regression on the raw features.
    Linear,
    /// One hidden unit.
    SingleHidden,
    /// Two hidden units.
    DoubleHidden,
    /// Stack of fully connected hidden layers.
    Tower(Vec<usize>),
    /// Per-group embedding sums (two groups of 16 features, concatenated)
    /// feeding one wide hidden layer.
    WideEmbedding { dim: usize, hidden: usize },
    /// Tower used on quadratic data; same topology as [`ArchKind::Tower`].
    QuadTower(Vec<usize>),
}

impl ArchKind {
    pub fn tower() -> Self {
        ArchKind::Tower(DEFAULT_TOWER.to_vec())
    }

    pub fn quad_tower() -> Self {
        ArchKind::QuadTower(DEFAULT_QUAD_TOWER.to_vec())
    }

    pub fn wide() -> Self {
        ArchKind::WideEmbedding {
            dim: DEFAULT_EMBEDDING_DIM,
            hidden: DEFAULT_WIDE_HIDDEN,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ArchKind::Linear => "linear",
            ArchKind::SingleHidden => "single",
            ArchKind::DoubleHidden => "double",
            ArchKind::Tower(_) => "tower",
            ArchKind::WideEmbedding { .. } => "wide",
            ArchKind::QuadTower(_) => "quadtower",
        }
    }

    /// Hidden layer widths, input to output.
    pub fn hidden_widths(&self) -> Vec<usize> {
        match self {
            ArchKind::Linear => vec![],
            ArchKind::SingleHidden => vec![1],
            ArchKind::DoubleHidden => vec![2],
            ArchKind::Tower(w) | ArchKind::QuadTower(w) => w.clone(),
            ArchKind::WideEmbedding { hidden, .. } => vec![*hidden],
        }
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden_widths().iter().sum()
    }

    /// Compact form used in checkpoints and reports, e.g. `tower:16-8-4-2`.
    pub fn descriptor(&self) -> String {
        match self {
            ArchKind::Tower(w) | ArchKind::QuadTower(w) => format!(
                "{}:{}",
                self.name(),
                w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("-")
            ),
            ArchKind::WideEmbedding { dim, hidden } => format!("wide:{dim}x{hidden}"),
            _ => self.name().to_string(),
        }
    }

    pub fn parse_descriptor(s: &str) -> Result<Self> {
        let bad = || Error::Architecture(format!("unrecognized architecture `{s}`"));
        let (name, rest) = match s.split_once(':') {
            Some((n, r)) => (n, Some(r)),
            None => (s, None),
        };
        let widths = |r: Option<&str>| -> Result<Option<Vec<usize>>> {
            r.map(|r| {
                r.split(['-', ','])
                    .map(|w| w.trim().parse::<usize>().map_err(|_| bad()))
                    .collect()
            })
            .transpose()
        };
        let kind = match name {
            "linear" => ArchKind::Linear,
            "single" => ArchKind::SingleHidden,
            "double" => ArchKind::DoubleHidden,
            "tower" => ArchKind::Tower(widths(rest)?.unwrap_or_else(|| DEFAULT_TOWER.to_vec())),
            "quadtower" => {
                ArchKind::QuadTower(widths(rest)?.unwrap_or_else(|| DEFAULT_QUAD_TOWER.to_vec()))
            }
            "wide" => match rest {
                None => ArchKind::wide(),
                Some(r) => {
                    let (d, h) = r.split_once('x').ok_or_else(bad)?;
                    ArchKind::WideEmbedding {
                        dim: d.parse().map_err(|_| bad())?,
                        hidden: h.parse().map_err(|_| bad())?,
                    }
                }
            },
            _ => return Err(bad()),
        };
        if matches!(name, "linear" | "single" | "double") && rest.is_some() {
            return Err(bad());
        }
        Ok(kind)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArchitectureSpec {
    pub kind: ArchKind,
    pub activation: Activation,
}

impl ArchitectureSpec {
    pub fn new(kind: ArchKind, activation: Activation) -> Result<Self> {
        let spec = ArchitectureSpec { kind, activation };
        spec.validate()?;
        Ok(spec)
    }

    pub fn linear() -> Self {
        ArchitectureSpec {
            kind: ArchKind::Linear,
            activation: Activation::IDENTITY,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.kind {
            ArchKind::Tower(w) | ArchKind::QuadTower(w) => {
                if w.is_empty() || w.contains(&0) {
                    return Err(Error::Architecture(format!(
                        "tower widths must be nonempty and positive, got {w:?}"
                    )));
                }
            }
            ArchKind::WideEmbedding { dim, hidden } => {
                if *dim == 0 || *hidden == 0 {
                    return Err(Error::Architecture(
                        "embedding dim and hidden width must be positive".into(),
                    ));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Full descriptor including the activation, e.g. `double;relu`.
    pub fn descriptor(&self) -> String {
        let mut d = format!("{};{}", self.kind.descriptor(), self.activation.kind().as_str());
        if let Some(b) = self.activation.beta() {
            d.push_str(&format!(";{b:?}"));
        }
        d
    }

    pub fn parse_descriptor(s: &str) -> Result<Self> {
        let mut parts = s.split(';');
        let kind = ArchKind::parse_descriptor(parts.next().unwrap_or(""))?;
        let act = parts
            .next()
            .and_then(ActivationKind::parse)
            .ok_or_else(|| Error::Architecture(format!("missing activation in `{s}`")))?;
        let beta = parts
            .next()
            .map(|b| {
                b.parse::<f64>()
                    .map_err(|_| Error::Architecture(format!("bad beta in `{s}`")))
            })
            .transpose()?;
        if parts.next().is_some() {
            return Err(Error::Architecture(format!("trailing fields in `{s}`")));
        }
        Self::new(kind, Activation::new(act, beta)?)
    }

    /// Legend label: activation followed by hidden unit count, or `linear`.
    pub fn label(&self) -> String {
        match &self.kind {
            ArchKind::Linear => "linear".into(),
            ArchKind::Tower(w) | ArchKind::QuadTower(w) => format!(
                "{} {}",
                self.activation,
                w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join("-")
            ),
            k => format!("{} {}", self.activation, k.hidden_units()),
        }
    }
}

/// Location of one fully connected layer inside the flat parameter vector.
/// Weights are stored input-major: `w[i * outputs + o]` connects input `i`
/// to output `o`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DenseLayout {
    pub inputs: usize,
    pub outputs: usize,
    pub w_off: usize,
    pub b_off: usize,
}

impl DenseLayout {
    pub fn w_range(&self) -> std::ops::Range<usize> {
        self.w_off..self.w_off + self.inputs * self.outputs
    }

    pub fn b_range(&self) -> std::ops::Range<usize> {
        self.b_off..self.b_off + self.outputs
    }
}

/// Two embedding tables, one per feature group, each `16 x dim`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EmbeddingLayout {
    pub dim: usize,
    pub offsets: [usize; 2],
}

impl EmbeddingLayout {
    pub const ROWS: usize = LINEAR_GROUP;

    /// Flat index of component `d` of the vector for `feature` (0..32).
    #[inline]
    pub fn index(&self, feature: usize, d: usize) -> usize {
        let group = feature / Self::ROWS;
        self.offsets[group] + (feature % Self::ROWS) * self.dim + d
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub embedding: Option<EmbeddingLayout>,
    pub dense: Vec<DenseLayout>,
    pub len: usize,
}

impl Layout {
    pub fn of(kind: &ArchKind) -> Self {
        let mut off = 0;
        let mut input = FEATURES;
        let embedding = match kind {
            ArchKind::WideEmbedding { dim, .. } => {
                let e = EmbeddingLayout {
                    dim: *dim,
                    offsets: [0, EmbeddingLayout::ROWS * dim],
                };
                off = 2 * EmbeddingLayout::ROWS * dim;
                input = 2 * dim;
                Some(e)
            }
            _ => None,
        };
        let mut dense = Vec::new();
        for out in kind.hidden_widths().into_iter().chain([1]) {
            let w_off = off;
            let b_off = w_off + input * out;
            dense.push(DenseLayout {
                inputs: input,
                outputs: out,
                w_off,
                b_off,
            });
            off = b_off + out;
            input = out;
        }
        Layout {
            embedding,
            dense,
            len: off,
        }
    }

    pub fn input_width(&self) -> usize {
        self.dense[0].inputs
    }

    /// Stable name and in-block index for every parameter, in storage order.
    pub fn param_names(&self) -> Vec<(String, usize)> {
        let mut out = Vec::with_capacity(self.len);
        if let Some(e) = &self.embedding {
            for g in 0..2 {
                for i in 0..EmbeddingLayout::ROWS * e.dim {
                    out.push((format!("emb{g}"), i));
                }
            }
        }
        for (l, d) in self.dense.iter().enumerate() {
            for i in 0..d.inputs * d.outputs {
                out.push((format!("w{l}"), i));
            }
            for i in 0..d.outputs {
                out.push((format!("b{l}"), i));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parameter_counts() {
        assert_eq!(Layout::of(&ArchKind::Linear).len, 33);
        assert_eq!(Layout::of(&ArchKind::SingleHidden).len, 35);
        assert_eq!(Layout::of(&ArchKind::DoubleHidden).len, 69);
        assert_eq!(Layout::of(&ArchKind::wide()).len, 6065);
        // 32*16+16 + 16*8+8 + 8*4+4 + 4*2+2 + 2+1
        assert_eq!(Layout::of(&ArchKind::tower()).len, 528 + 136 + 36 + 10 + 3);
        // 32*1024+1024 + 1024*512+512 + 512+1
        assert_eq!(
            Layout::of(&ArchKind::quad_tower()).len,
            33_792 + 524_800 + 513
        );
    }

    #[test]
    fn param_names_cover_layout() {
        for kind in [ArchKind::Linear, ArchKind::wide(), ArchKind::tower()] {
            let l = Layout::of(&kind);
            assert_eq!(l.param_names().len(), l.len);
        }
    }

    #[test]
    fn descriptors_round_trip() {
        let specs = [
            ArchitectureSpec::linear(),
            ArchitectureSpec::new(ArchKind::DoubleHidden, Activation::RELU).unwrap(),
            ArchitectureSpec::new(ArchKind::Tower(vec![3, 2]), Activation::smelu(0.5).unwrap())
                .unwrap(),
            ArchitectureSpec::new(ArchKind::wide(), Activation::swish(1.25).unwrap()).unwrap(),
            ArchitectureSpec::new(ArchKind::quad_tower(), Activation::RELU).unwrap(),
        ];
        for s in specs {
            assert_eq!(ArchitectureSpec::parse_descriptor(&s.descriptor()).unwrap(), s);
        }
        assert!(ArchitectureSpec::parse_descriptor("linear:3;relu").is_err());
        assert!(ArchitectureSpec::parse_descriptor("tower:0;relu").is_err());
        assert!(ArchitectureSpec::parse_descriptor("tower;smelu").is_err());
    }

    #[test]
    fn labels() {
        let s = ArchitectureSpec::new(ArchKind::DoubleHidden, Activation::RELU).unwrap();
        assert_eq!(s.label(), "relu 2");
        assert_eq!(ArchitectureSpec::linear().label(), "linear");
        let t = ArchitectureSpec::new(ArchKind::tower(), Activation::IDENTITY).unwrap();
        assert_eq!(t.label(), "identity 16-8-4-2");
    }
}
