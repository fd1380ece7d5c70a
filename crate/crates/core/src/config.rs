//! Flat `key = value` experiment configuration.
//!
//! Keys carry a section prefix (`data.`, `model.`, `optim.`, `stream.`,
//! `harness.`). Blank lines and `#` comments are ignored, values may be
//! double-quoted, and unknown or duplicate keys are errors. Anything not
//! given takes the desk-scale default.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::PathBuf;

use sha2::{Digest, Sha256};

use crate::datagen::TruthKind;
use crate::error::{Error, Result};
use crate::harness::{ExperimentConfig, Precision, WarmStart};
use crate::nnet::{
    Activation, ActivationKind, ArchKind, ArchitectureSpec, DEFAULT_EMBEDDING_DIM,
    DEFAULT_QUAD_TOWER, DEFAULT_TOWER, DEFAULT_WIDE_HIDDEN,
};
use crate::optim::{OptimizerConfig, OptimizerKind};
use crate::stream::InitMode;

const KEYS: &[&str] = &[
    "data.truth",
    "data.truth_file",
    "data.eval_size",
    "model.arch",
    "model.widths",
    "model.embedding_dim",
    "model.hidden",
    "model.activation",
    "model.beta",
    "model.precision",
    "optim.kind",
    "optim.lr",
    "optim.acc_init",
    "optim.momentum",
    "optim.decay",
    "stream.examples",
    "stream.batch_size",
    "stream.log2_z",
    "stream.master_seed",
    "harness.pairs",
    "harness.init",
    "harness.emulate",
    "harness.warm_start",
    "harness.teacher_checkpoint",
    "harness.teacher_lr_ratio",
    "harness.stuck_factor",
];

struct Fields {
    map: BTreeMap<String, (usize, String)>,
}

impl Fields {
    fn take(&mut self, key: &str) -> Option<String> {
        self.map.remove(key).map(|(_, v)| v)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::invalid(key, format!("cannot parse `{v}`"))),
        }
    }

    fn flag(&mut self, key: &str) -> Result<Option<bool>> {
        match self.take(key).as_deref() {
            None => Ok(None),
            Some("true" | "yes" | "1") => Ok(Some(true)),
            Some("false" | "no" | "0") => Ok(Some(false)),
            Some(v) => Err(Error::invalid(key, format!("expected true or false, got `{v}`"))),
        }
    }

    fn forbid(&mut self, key: &str, why: &str) -> Result<()> {
        match self.map.get(key) {
            Some(_) => Err(Error::invalid(key, why)),
            None => Ok(()),
        }
    }
}

fn unquote(v: &str) -> &str {
    v.strip_prefix('"')
        .and_then(|s| s.strip_suffix('"'))
        .unwrap_or(v)
}

fn lex(text: &str) -> Result<Fields> {
    let mut map = BTreeMap::new();
    for (n, raw) in text.lines().enumerate() {
        let line = n + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let (k, v) = content.split_once('=').ok_or_else(|| Error::Parse {
            line,
            msg: format!("expected `key = value`, got `{content}`"),
        })?;
        let key = k.trim();
        if !KEYS.contains(&key) {
            return Err(Error::Parse {
                line,
                msg: format!("unknown key `{key}`"),
            });
        }
        let value = unquote(v.trim()).to_string();
        if let Some((first, _)) = map.insert(key.to_string(), (line, value)) {
            return Err(Error::Parse {
                line,
                msg: format!("duplicate key `{key}` (first on line {first})"),
            });
        }
    }
    Ok(Fields { map })
}

fn parse_widths(key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',')
        .map(|w| {
            w.trim()
                .parse::<usize>()
                .ok()
                .filter(|&w| w > 0)
                .ok_or_else(|| Error::invalid(key, format!("bad width `{w}`")))
        })
        .collect()
}

pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut f = lex(text)?;
    let mut cfg = ExperimentConfig::default();

    if let Some(v) = f.take("data.truth") {
        cfg.truth_kind = TruthKind::parse(&v)
            .ok_or_else(|| Error::invalid("data.truth", format!("unknown truth `{v}`")))?;
    }
    cfg.truth_file = f.take("data.truth_file").map(PathBuf::from);
    if let Some(n) = f.parse("data.eval_size")? {
        cfg.eval_size = n;
    }

    let arch = f.take("model.arch").unwrap_or_else(|| "linear".into());
    let kind = match arch.as_str() {
        "tower" | "quadtower" => {
            let default = if arch == "tower" {
                DEFAULT_TOWER.to_vec()
            } else {
                DEFAULT_QUAD_TOWER.to_vec()
            };
            let widths = match f.take("model.widths") {
                Some(v) => parse_widths("model.widths", &v)?,
                None => default,
            };
            if arch == "tower" {
                ArchKind::Tower(widths)
            } else {
                ArchKind::QuadTower(widths)
            }
        }
        "wide" => ArchKind::WideEmbedding {
            dim: f.parse("model.embedding_dim")?.unwrap_or(DEFAULT_EMBEDDING_DIM),
            hidden: f.parse("model.hidden")?.unwrap_or(DEFAULT_WIDE_HIDDEN),
        },
        "linear" => ArchKind::Linear,
        "single" => ArchKind::SingleHidden,
        "double" => ArchKind::DoubleHidden,
        other => {
            return Err(Error::invalid(
                "model.arch",
                format!("unknown architecture `{other}`"),
            ))
        }
    };
    f.forbid("model.widths", "only towers take widths")?;
    f.forbid("model.embedding_dim", "only the wide model has embeddings")?;
    f.forbid("model.hidden", "only the wide model takes a hidden width")?;

    let act_kind = match f.take("model.activation") {
        None => ActivationKind::Identity,
        Some(v) => ActivationKind::parse(&v)
            .ok_or_else(|| Error::invalid("model.activation", format!("unknown activation `{v}`")))?,
    };
    let beta: Option<f64> = f.parse("model.beta")?;
    if beta.is_some() && !act_kind.needs_beta() {
        return Err(Error::invalid(
            "model.beta",
            format!("{} takes no beta", act_kind.as_str()),
        ));
    }
    cfg.architecture = ArchitectureSpec::new(kind, Activation::new(act_kind, beta)?)
        .map_err(|e| Error::invalid("model", e.to_string()))?;
    if let Some(v) = f.take("model.precision") {
        cfg.precision = Precision::parse(&v)
            .ok_or_else(|| Error::invalid("model.precision", format!("expected f32 or f64, got `{v}`")))?;
    }

    let okind = match f.take("optim.kind") {
        None => OptimizerKind::AdaGrad,
        Some(v) => OptimizerKind::parse(&v)
            .ok_or_else(|| Error::invalid("optim.kind", format!("unknown optimizer `{v}`")))?,
    };
    let mut opt = match okind {
        OptimizerKind::AdaGrad => OptimizerConfig::adagrad(0.1),
        OptimizerKind::SgdMomentum => OptimizerConfig::sgd(0.1),
    };
    if let Some(v) = f.parse("optim.lr")? {
        opt.learning_rate = v;
    }
    if let Some(v) = f.parse("optim.acc_init")? {
        opt.accumulator_init = v;
    }
    if let Some(v) = f.parse("optim.momentum")? {
        opt.momentum = v;
    }
    if let Some(v) = f.parse("optim.decay")? {
        opt.decay = v;
    }
    cfg.optimizer = opt;

    if let Some(v) = f.parse("stream.examples")? {
        cfg.stream.total_examples = v;
    }
    if let Some(v) = f.parse("stream.batch_size")? {
        cfg.stream.batch_size = v;
    }
    if let Some(v) = f.parse("stream.log2_z")? {
        cfg.stream.log2_z = v;
    }
    if let Some(v) = f.parse("stream.master_seed")? {
        cfg.stream.master_seed = v;
    }

    if let Some(v) = f.parse("harness.pairs")? {
        cfg.pairs = v;
    }
    if let Some(v) = f.take("harness.init") {
        cfg.init_mode = InitMode::parse(&v).ok_or_else(|| {
            Error::invalid("harness.init", format!("expected identical or distinct, got `{v}`"))
        })?;
    }
    if let Some(v) = f.flag("harness.emulate")? {
        cfg.emulate_batch_nondeterminism = v;
    }
    if f.flag("harness.warm_start")?.unwrap_or(false) {
        let mut w = WarmStart {
            checkpoint: f.take("harness.teacher_checkpoint").map(PathBuf::from),
            ..WarmStart::default()
        };
        if let Some(r) = f.parse("harness.teacher_lr_ratio")? {
            w.lr_ratio = r;
        }
        cfg.warm_start = Some(w);
    }
    f.forbid("harness.teacher_checkpoint", "requires harness.warm_start = true")?;
    f.forbid("harness.teacher_lr_ratio", "requires harness.warm_start = true")?;
    if let Some(v) = f.parse("harness.stuck_factor")? {
        cfg.stuck_factor = v;
    }

    debug_assert!(f.map.is_empty(), "unconsumed keys: {:?}", f.map.keys());
    cfg.validate()?;
    Ok(cfg)
}

/// Canonical text form; `parse_config` of the result reproduces `cfg`.
pub fn emit_config(cfg: &ExperimentConfig) -> String {
    let mut out = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(out, "{k} = {v}");
    };
    kv("data.truth", cfg.truth_kind.as_str().into());
    if let Some(p) = &cfg.truth_file {
        kv("data.truth_file", format!("\"{}\"", p.display()));
    }
    kv("data.eval_size", cfg.eval_size.to_string());

    let arch = &cfg.architecture;
    kv("model.arch", arch.kind.name().into());
    match &arch.kind {
        ArchKind::Tower(w) | ArchKind::QuadTower(w) => kv(
            "model.widths",
            w.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","),
        ),
        ArchKind::WideEmbedding { dim, hidden } => {
            kv("model.embedding_dim", dim.to_string());
            kv("model.hidden", hidden.to_string());
        }
        _ => {}
    }
    kv("model.activation", arch.activation.kind().as_str().into());
    if let Some(b) = arch.activation.beta() {
        kv("model.beta", format!("{b:?}"));
    }
    kv("model.precision", cfg.precision.as_str().into());

    let o = &cfg.optimizer;
    kv("optim.kind", o.kind.as_str().into());
    kv("optim.lr", format!("{:?}", o.learning_rate));
    kv("optim.acc_init", format!("{:?}", o.accumulator_init));
    kv("optim.momentum", format!("{:?}", o.momentum));
    kv("optim.decay", format!("{:?}", o.decay));

    let s = &cfg.stream;
    kv("stream.examples", s.total_examples.to_string());
    kv("stream.batch_size", s.batch_size.to_string());
    kv("stream.log2_z", s.log2_z.to_string());
    kv("stream.master_seed", s.master_seed.to_string());

    kv("harness.pairs", cfg.pairs.to_string());
    kv("harness.init", cfg.init_mode.as_str().into());
    kv("harness.emulate", cfg.emulate_batch_nondeterminism.to_string());
    kv("harness.warm_start", cfg.warm_start.is_some().to_string());
    if let Some(w) = &cfg.warm_start {
        if let Some(p) = &w.checkpoint {
            kv("harness.teacher_checkpoint", format!("\"{}\"", p.display()));
        }
        kv("harness.teacher_lr_ratio", format!("{:?}", w.lr_ratio));
    }
    kv("harness.stuck_factor", format!("{:?}", cfg.stuck_factor));
    out
}

/// First 12 hex digits of the SHA-256 of `text`.
pub fn short_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .take(6)
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn config_hash(cfg: &ExperimentConfig) -> String {
    short_hash(&emit_config(cfg))
}

/// Applies `key=value` overrides separated by `;` on top of `cfg`.
pub fn apply_overrides(cfg: &ExperimentConfig, overrides: &str) -> Result<ExperimentConfig> {
    let mut text = String::new();
    let mut given = Vec::new();
    for part in overrides.split(';').map(str::trim).filter(|p| !p.is_empty()) {
        let (k, _) = part.split_once('=').ok_or_else(|| Error::Parse {
            line: 0,
            msg: format!("override `{part}` is not key=value"),
        })?;
        given.push(k.trim().to_string());
        text.push_str(part);
        text.push('\n');
    }
    // Keys made inapplicable by an override (say, widths after switching
    // away from a tower) are dropped from the base.
    for line in emit_config(cfg).lines() {
        let key = line.split('=').next().unwrap_or("").trim();
        if given.iter().any(|g| g == key) {
            continue;
        }
        let section_switch = given.iter().any(|g| g == "model.arch")
            && matches!(key, "model.widths" | "model.embedding_dim" | "model.hidden");
        let beta_switch = given.iter().any(|g| g == "model.activation") && key == "model.beta";
        let optim_switch = given.iter().any(|g| g == "optim.kind") && key.starts_with("optim.");
        if section_switch || beta_switch || optim_switch {
            continue;
        }
        text.push_str(line);
        text.push('\n');
    }
    parse_config(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_config_gets_defaults() {
        let c = parse_config("").unwrap();
        assert_eq!(c.optimizer.kind, OptimizerKind::AdaGrad);
        assert_eq!(c.optimizer.learning_rate, 0.1);
        assert_eq!(c.optimizer.accumulator_init, 0.1);
        assert_eq!(c.stream.total_examples, 1 << 20);
        assert_eq!(c.eval_size, 1 << 13);
        assert_eq!(c.pairs, 8);
    }

    #[test]
    fn log2_z_sets_window() {
        let c = parse_config("stream.log2_z = 20").unwrap();
        assert_eq!(c.stream.window_len(), (1u64 << 20) * 32);
    }

    #[test]
    fn smelu_needs_beta() {
        let err = parse_config("model.arch = double\nmodel.activation = \"smelu\"").unwrap_err();
        assert!(err.to_string().contains("beta"), "{err}");
        assert!(parse_config("model.arch = double\nmodel.activation = smelu\nmodel.beta = 1").is_ok());
    }

    #[test]
    fn errors_carry_locations() {
        match parse_config("# c\n\nmodel.arch = tower\nbogus.key = 3").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 4),
            e => panic!("{e}"),
        }
        match parse_config("no equals sign").unwrap_err() {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            e => panic!("{e}"),
        }
        match parse_config("optim.lr = fast").unwrap_err() {
            Error::Invalid { field, .. } => assert_eq!(field, "optim.lr"),
            e => panic!("{e}"),
        }
        assert!(parse_config("harness.pairs = 1\nharness.pairs = 2").is_err());
        assert!(parse_config("model.widths = 4,2").is_err());
        assert!(parse_config("model.arch = tower\nmodel.widths = 4,0").is_err());
        assert!(parse_config("model.activation = relu\nmodel.beta = 1").is_err());
    }

    #[test]
    fn full_config() {
        let text = "\
data.truth = quadratic
model.arch = quadtower
model.widths = 256, 128
model.activation = swish
model.beta = 1.5
optim.kind = sgd
optim.lr = 0.01
stream.log2_z = 6
harness.init = distinct
harness.emulate = true
harness.warm_start = true
harness.teacher_lr_ratio = 0.1
";
        let c = parse_config(text).unwrap();
        assert_eq!(c.architecture.kind, ArchKind::QuadTower(vec![256, 128]));
        assert_eq!(c.optimizer.momentum, 0.9);
        assert_eq!(c.optimizer.decay, 0.001);
        assert!(c.emulate_batch_nondeterminism);
        assert_eq!(c.warm_start.as_ref().unwrap().lr_ratio, 0.1);
        assert_eq!(parse_config(&emit_config(&c)).unwrap(), c);
    }

    #[test]
    fn overrides() {
        let base = parse_config("model.arch = tower\nmodel.widths = 4,2").unwrap();
        let c = apply_overrides(&base, "model.arch = double; model.activation = relu").unwrap();
        assert_eq!(c.architecture.kind, ArchKind::DoubleHidden);
        assert_eq!(c.architecture.activation, Activation::RELU);
        assert_eq!(c.stream, base.stream);
    }

    #[test]
    fn hash_tracks_content() {
        let a = parse_config("").unwrap();
        let b = parse_config("stream.master_seed = 1").unwrap();
        assert_eq!(config_hash(&a).len(), 12);
        assert_eq!(config_hash(&a), config_hash(&a.clone()));
        assert_ne!(config_hash(&a), config_hash(&b));
    }

    fn arb_config() -> impl Strategy<Value = ExperimentConfig> {
        (
            0usize..6,
            0usize..4,
            0.1f64..4.0,
            any::<bool>(),
            0u32..25,
            any::<u64>(),
            1usize..20,
            any::<bool>(),
            prop::option::of(0.01f64..1.0),
            1e-4f64..2.0,
        )
            .prop_map(|(arch, act, beta, sgd, z, seed, pairs, distinct, warm, lr)| {
                let kind = match arch {
                    0 => ArchKind::Linear,
                    1 => ArchKind::SingleHidden,
                    2 => ArchKind::DoubleHidden,
                    3 => ArchKind::Tower(vec![1 + seed as usize % 9, 3]),
                    4 => ArchKind::wide(),
                    _ => ArchKind::QuadTower(vec![7, 5]),
                };
                let act_kind = [
                    ActivationKind::Identity,
                    ActivationKind::Relu,
                    ActivationKind::Smelu,
                    ActivationKind::Swish,
                ][act];
                let mut c = ExperimentConfig {
                    architecture: ArchitectureSpec::new(
                        kind,
                        Activation::new(act_kind, Some(beta)).unwrap(),
                    )
                    .unwrap(),
                    optimizer: if sgd {
                        OptimizerConfig::sgd(lr)
                    } else {
                        OptimizerConfig::adagrad(lr)
                    },
                    pairs,
                    init_mode: if distinct { InitMode::Distinct } else { InitMode::Identical },
                    warm_start: warm.map(|r| WarmStart {
                        checkpoint: None,
                        lr_ratio: r,
                    }),
                    ..ExperimentConfig::default()
                };
                c.stream.log2_z = z;
                c.stream.master_seed = seed;
                c
            })
    }

    proptest! {
        #[test]
        fn emit_parse_round_trip(c in arb_config()) {
            prop_assert_eq!(parse_config(&emit_config(&c)).unwrap(), c);
        }
    }
}
