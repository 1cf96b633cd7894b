//! Flat `key = value` run configuration.
//!
//! Keys are dotted paths into [`TrainConfig`] (`stage2.alpha`,
//! `model.d_model`, `seed`) or, with a `corpus.` prefix, into
//! [`SynthConfig`] (`corpus.signal_strength`). Values are JSON literals
//! (`0.99`, `true`, `[1, 4]`, `null`); anything that does not parse as JSON
//! is taken as a bare string. `#` starts a comment.

use serde::de::DeserializeOwned;
use serde::Serialize;
use serde_json::Value;

use crate::corpus::SynthConfig;
use crate::error::{Error, Result};
use crate::trainer::TrainConfig;

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub corpus: SynthConfig,
}

impl RunConfig {
    pub fn desk(seed: u64) -> Self {
        Self {
            train: TrainConfig::desk(seed),
            corpus: SynthConfig::benchmark(seed),
        }
    }

    /// Applies every assignment in `text` on top of `self`.
    pub fn apply(&mut self, text: &str) -> Result<()> {
        let mut train = serde_json::to_value(&self.train)?;
        let mut corpus = serde_json::to_value(&self.corpus)?;
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let bad = |reason: String| Error::Config(format!("line {}: {reason}", n + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            let value = serde_json::from_str(value).unwrap_or_else(|_| Value::String(value.to_string()));
            let (root, path) = match key.strip_prefix("corpus.") {
                Some(rest) => (&mut corpus, rest),
                None => (&mut train, key),
            };
            let slot = lookup(root, path).ok_or_else(|| bad(format!("unknown key {key}")))?;
            *slot = value;
        }
        self.train = decode(train)?;
        self.corpus = decode(corpus)?;
        self.train.validate()?;
        self.corpus.validate()
    }

    pub fn from_str_with_base(text: &str, base: RunConfig) -> Result<Self> {
        let mut cfg = base;
        cfg.apply(text)?;
        Ok(cfg)
    }

    /// Every key with its current value, one assignment per line, in the
    /// format [`RunConfig::apply`] reads.
    pub fn render(&self) -> Result<String> {
        let mut out = String::new();
        flatten("", &serde_json::to_value(&self.train)?, &mut out);
        flatten("corpus.", &serde_json::to_value(&self.corpus)?, &mut out);
        Ok(out)
    }
}

fn lookup<'a>(root: &'a mut Value, path: &str) -> Option<&'a mut Value> {
    path.split('.').try_fold(root, |v, k| v.as_object_mut()?.get_mut(k))
}

fn decode<T: DeserializeOwned + Serialize>(v: Value) -> Result<T> {
    serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))
}

fn flatten(prefix: &str, v: &Value, out: &mut String) {
    match v {
        Value::Object(map) => {
            for (k, child) in map {
                flatten(&format!("{prefix}{k}."), child, out);
            }
        }
        leaf => {
            out.push_str(prefix.trim_end_matches('.'));
            out.push_str(" = ");
            out.push_str(&leaf.to_string());
            out.push('\n');
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn assignments_override_nested_fields() {
        let mut c = RunConfig::desk(0);
        c.apply("# comment\nstage2.alpha = 0.95\nmodel.d_model=32 # trailing\nseed = 7\ncorpus.cross_talk = 0.1\ncheckpoint_dir = runs/a\n")
            .unwrap();
        assert_eq!(c.train.stage2.alpha, 0.95);
        assert_eq!(c.train.model.d_model, 32);
        assert_eq!(c.train.seed, 7);
        assert_eq!(c.corpus.cross_talk, 0.1);
        assert_eq!(c.train.checkpoint_dir.as_deref(), Some(std::path::Path::new("runs/a")));
    }

    #[test]
    fn unknown_key_and_bad_value_fail() {
        let mut c = RunConfig::desk(0);
        let e = c.apply("stage2.alfa = 1").unwrap_err();
        assert!(e.to_string().contains("line 1"), "{e}");
        assert!(RunConfig::desk(0).apply("stage2.alpha = 1.5").is_err());
        assert!(RunConfig::desk(0).apply("stage2.alpha = fast").is_err());
        assert!(RunConfig::desk(0).apply("just words").is_err());
    }

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::desk(3);
        c.train.stage2.sigma = 0.25;
        c.corpus.report_len = (2, 9);
        let text = c.render().unwrap();
        let back = RunConfig::from_str_with_base(&text, RunConfig::desk(0)).unwrap();
        assert_eq!(back, c);
    }
}
