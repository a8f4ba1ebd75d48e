//! Flat `key = value` run configuration.
//!
//! One setting per line; `#` starts a comment. Keys are namespaced
//! (`analytic.*`, `backbone.*`, `sgd.*`, `sscl.*`, `red.*`, `plan.*`,
//! `grid.*`, `synth.*`, `seed.*`). Unknown and repeated keys are errors.
//! `sgd.*` drives both supervised pretraining and distillation.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::protocol::{PipelineConfig, SeedSet};
use crate::rng::RngSeed;
use crate::synth::SynthConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub pipeline: PipelineConfig,
    pub synth: SynthConfig,
    pub k: usize,
    pub validation_fraction: f64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            pipeline: PipelineConfig::default(),
            synth: SynthConfig::default(),
            k: 5,
            validation_fraction: 0.1,
        }
    }
}

fn list<T: Display>(v: &[T]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse<T: FromStr>(key: &str, value: &str) -> std::result::Result<T, String> {
    value
        .parse()
        .map_err(|_| format!("invalid value {value:?} for {key}"))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> std::result::Result<Vec<T>, String> {
    if value.is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

impl RunConfig {
    /// Every key with its current value, in key order.
    pub fn resolved(&self) -> BTreeMap<String, String> {
        let p = &self.pipeline;
        let s = &self.synth;
        let pairs: Vec<(&str, String)> = vec![
            ("analytic.gamma", p.gamma.to_string()),
            ("analytic.d_b", p.d_b.to_string()),
            (
                "analytic.buffer_scale",
                p.buffer_scale.map_or_else(|| "auto".to_string(), |v| v.to_string()),
            ),
            ("analytic.chunk_rows", p.chunk_rows.to_string()),
            ("backbone.hidden", list(&p.hidden)),
            ("backbone.d_cnn", p.d_cnn.to_string()),
            ("sgd.lr", p.sl.lr.to_string()),
            ("sgd.momentum", p.sl.momentum.to_string()),
            ("sgd.weight_decay", p.sl.weight_decay.to_string()),
            ("sgd.epochs", p.sl.epochs.to_string()),
            ("sgd.batch_size", p.sl.batch_size.to_string()),
            ("sgd.milestones", list(&p.sl.milestones)),
            ("sgd.lr_divisor", p.sl.lr_divisor.to_string()),
            ("sscl.lr", p.sscl.lr.to_string()),
            ("sscl.momentum", p.sscl.momentum.to_string()),
            ("sscl.weight_decay", p.sscl.weight_decay.to_string()),
            ("sscl.epochs", p.sscl.epochs.to_string()),
            ("sscl.batch_size", p.sscl.batch_size.to_string()),
            ("sscl.jitter", p.jitter.to_string()),
            ("sscl.mask_prob", p.mask_prob.to_string()),
            ("sscl.d_proj", p.d_proj.to_string()),
            ("sscl.d_pred_hidden", p.d_pred_hidden.to_string()),
            ("red.lambda", p.red.lambda.to_string()),
            ("red.epochs", p.red.epochs.to_string()),
            ("plan.k", self.k.to_string()),
            ("grid.validation_fraction", self.validation_fraction.to_string()),
            ("synth.classes", s.classes.to_string()),
            ("synth.dim", s.dim.to_string()),
            ("synth.train_per_class", s.train_per_class.to_string()),
            ("synth.test_per_class", s.test_per_class.to_string()),
            ("synth.margin", s.margin.to_string()),
            ("synth.noise", s.noise.to_string()),
            ("seed.data", p.seeds.data.to_string()),
            ("seed.plan", p.seeds.plan.to_string()),
            ("seed.init", p.seeds.init.to_string()),
            ("seed.train", p.seeds.train.to_string()),
            ("seed.augment", p.seeds.augment.to_string()),
            ("seed.buffer", p.seeds.buffer.to_string()),
        ];
        pairs.into_iter().map(|(k, v)| (k.to_string(), v)).collect()
    }

    pub fn keys() -> Vec<String> {
        RunConfig::default().resolved().into_keys().collect()
    }

    /// Applies one setting; `line` is used in error messages (0 for
    /// settings that did not come from a file).
    pub fn set(&mut self, key: &str, value: &str, line: usize) -> Result<()> {
        self.apply(key, value.trim())
            .map_err(|msg| Error::Config { line, msg })
    }

    fn apply(&mut self, key: &str, v: &str) -> std::result::Result<(), String> {
        let p = &mut self.pipeline;
        match key {
            "analytic.gamma" => p.gamma = parse(key, v)?,
            "analytic.d_b" => p.d_b = parse(key, v)?,
            "analytic.buffer_scale" => {
                p.buffer_scale = if v == "auto" { None } else { Some(parse(key, v)?) }
            }
            "analytic.chunk_rows" => p.chunk_rows = parse(key, v)?,
            "backbone.hidden" => p.hidden = parse_list(key, v)?,
            "backbone.d_cnn" => p.d_cnn = parse(key, v)?,
            "sgd.lr" => {
                p.sl.lr = parse(key, v)?;
                p.red.optimizer.lr = p.sl.lr;
            }
            "sgd.momentum" => {
                p.sl.momentum = parse(key, v)?;
                p.red.optimizer.momentum = p.sl.momentum;
            }
            "sgd.weight_decay" => {
                p.sl.weight_decay = parse(key, v)?;
                p.red.optimizer.weight_decay = p.sl.weight_decay;
            }
            "sgd.epochs" => p.sl.epochs = parse(key, v)?,
            "sgd.batch_size" => {
                p.sl.batch_size = parse(key, v)?;
                p.red.optimizer.batch_size = p.sl.batch_size;
            }
            "sgd.milestones" => {
                p.sl.milestones = parse_list(key, v)?;
                p.red.optimizer.milestones = p.sl.milestones.clone();
            }
            "sgd.lr_divisor" => {
                p.sl.lr_divisor = parse(key, v)?;
                p.red.optimizer.lr_divisor = p.sl.lr_divisor;
            }
            "sscl.lr" => p.sscl.lr = parse(key, v)?,
            "sscl.momentum" => p.sscl.momentum = parse(key, v)?,
            "sscl.weight_decay" => p.sscl.weight_decay = parse(key, v)?,
            "sscl.epochs" => p.sscl.epochs = parse(key, v)?,
            "sscl.batch_size" => p.sscl.batch_size = parse(key, v)?,
            "sscl.jitter" => p.jitter = parse(key, v)?,
            "sscl.mask_prob" => p.mask_prob = parse(key, v)?,
            "sscl.d_proj" => p.d_proj = parse(key, v)?,
            "sscl.d_pred_hidden" => p.d_pred_hidden = parse(key, v)?,
            "red.lambda" => p.red.lambda = parse(key, v)?,
            "red.epochs" => p.red.epochs = parse(key, v)?,
            "plan.k" => self.k = parse(key, v)?,
            "grid.validation_fraction" => self.validation_fraction = parse(key, v)?,
            "synth.classes" => self.synth.classes = parse(key, v)?,
            "synth.dim" => self.synth.dim = parse(key, v)?,
            "synth.train_per_class" => self.synth.train_per_class = parse(key, v)?,
            "synth.test_per_class" => self.synth.test_per_class = parse(key, v)?,
            "synth.margin" => self.synth.margin = parse(key, v)?,
            "synth.noise" => self.synth.noise = parse(key, v)?,
            "seed.data" => {
                p.seeds.data = parse(key, v)?;
                self.synth.seed = RngSeed(p.seeds.data);
            }
            "seed.plan" => p.seeds.plan = parse(key, v)?,
            "seed.init" => p.seeds.init = parse(key, v)?,
            "seed.train" => p.seeds.train = parse(key, v)?,
            "seed.augment" => p.seeds.augment = parse(key, v)?,
            "seed.buffer" => p.seeds.buffer = parse(key, v)?,
            _ => return Err(format!("unknown key {key:?}")),
        }
        Ok(())
    }

    /// Sets every `seed.*` key to `seed`.
    pub fn set_all_seeds(&mut self, seed: u64) {
        self.pipeline.seeds = SeedSet::uniform(seed);
        self.synth.seed = RngSeed(seed);
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        let mut seen = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let content = raw.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let (key, value) = content.split_once('=').ok_or_else(|| Error::Config {
                line,
                msg: format!("expected key = value, found {content:?}"),
            })?;
            let key = key.trim();
            if let Some(first) = seen.insert(key.to_string(), line) {
                return Err(Error::Config {
                    line,
                    msg: format!("duplicate key {key:?} (first set on line {first})"),
                });
            }
            cfg.set(key, value, line)?;
        }
        cfg.pipeline.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Text form that [`RunConfig::parse`] reads back to an equal value.
    pub fn to_text(&self) -> String {
        self.resolved()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn comments_and_overrides() {
        let cfg = RunConfig::parse(
            "# tuned\nanalytic.gamma = 0.5  # ridge\n\nred.lambda=0.7\nplan.k = 10\nseed.data = 3\nbackbone.hidden = 16, 8\n",
        )
        .unwrap();
        assert_eq!(cfg.pipeline.gamma, 0.5);
        assert_eq!(cfg.pipeline.red.lambda, 0.7);
        assert_eq!(cfg.k, 10);
        assert_eq!(cfg.synth.seed, RngSeed(3));
        assert_eq!(cfg.pipeline.hidden, vec![16, 8]);
    }

    #[test]
    fn unknown_duplicate_and_bad_values_fail() {
        let e = RunConfig::parse("analytic.gama = 0.1\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 1, .. }), "{e}");
        let e = RunConfig::parse("red.lambda = 0.1\nred.lambda = 0.2\n").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        assert!(RunConfig::parse("plan.k = five\n").is_err());
        assert!(RunConfig::parse("just words\n").is_err());
        assert!(RunConfig::parse("analytic.gamma = -1\n").is_err());
    }

    #[test]
    fn text_round_trip() {
        let mut cfg = RunConfig::default();
        cfg.set("analytic.buffer_scale", "0.3", 0).unwrap();
        cfg.set("sgd.milestones", "0.3,0.6,0.9", 0).unwrap();
        cfg.set("sgd.lr", "0.1234567890123", 0).unwrap();
        let back = RunConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back, cfg);
        assert_eq!(back.pipeline.red.optimizer.lr, 0.1234567890123);
        assert_eq!(RunConfig::keys().len(), cfg.resolved().len());
    }
}
