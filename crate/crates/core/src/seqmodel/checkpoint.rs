//! Plain-text checkpoints.
//!
//! ```text
//! ltee-checkpoint v1
//! config <context_dim> <hidden> <t0> <tied_short_heads> <single_head> <seed>
//! x_mean <d values>
//! x_scale <d values>
//! y <mean> <scale>
//! param <name> <shape...>
//! <values>
//! ```
//!
//! Floats use shortest round-trip exponent notation, so save then load is
//! value-exact.

use std::fmt::Write as _;
use std::path::Path;

use super::{LteeModel, ModelConfig, Normalizer};
use crate::error::{Error, Result};
use crate::ndcore::Tensor;

const MAGIC: &str = "ltee-checkpoint v1";

fn parse_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Parse(msg.into()))
}

fn floats(tokens: &[&str], what: &str) -> Result<Vec<f64>> {
    tokens
        .iter()
        .map(|t| t.parse::<f64>().map_err(|e| Error::Parse(format!("{what}: bad number {t:?}: {e}"))))
        .collect()
}

fn join(vals: &[f64]) -> String {
    let mut s = String::new();
    for (i, v) in vals.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        write!(s, "{v:e}").expect("write to string");
    }
    s
}

impl LteeModel {
    pub fn to_checkpoint(&self) -> String {
        let c = &self.config;
        let mut out = String::new();
        writeln!(out, "{MAGIC}").unwrap();
        writeln!(
            out,
            "config {} {} {} {} {} {}",
            c.context_dim, c.hidden, c.t0, c.tied_short_heads, c.single_head, c.seed
        )
        .unwrap();
        writeln!(out, "x_mean {}", join(&self.normalizer.x_mean)).unwrap();
        writeln!(out, "x_scale {}", join(&self.normalizer.x_scale)).unwrap();
        writeln!(out, "y {:e} {:e}", self.normalizer.y_mean, self.normalizer.y_scale).unwrap();
        for id in self.store.ids() {
            let t = self.store.get(id);
            let shape: Vec<String> = t.shape().iter().map(usize::to_string).collect();
            writeln!(out, "param {} {}", self.store.name(id), shape.join(" ")).unwrap();
            writeln!(out, "{}", join(t.data())).unwrap();
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return parse_err("missing checkpoint header");
        }
        fn next<'a>(lines: &mut std::str::Lines<'a>, what: &str) -> Result<Vec<&'a str>> {
            match lines.next() {
                Some(l) => Ok(l.split_whitespace().collect()),
                None => parse_err(format!("checkpoint truncated before {what}")),
            }
        }

        let cfg = next(&mut lines, "config")?;
        if cfg.len() != 7 || cfg[0] != "config" {
            return parse_err("malformed config line");
        }
        let num = |s: &str| s.parse::<usize>().map_err(|e| Error::Parse(format!("config: {s:?}: {e}")));
        let flag = |s: &str| s.parse::<bool>().map_err(|e| Error::Parse(format!("config: {s:?}: {e}")));
        let config = ModelConfig {
            context_dim: num(cfg[1])?,
            hidden: num(cfg[2])?,
            t0: num(cfg[3])?,
            tied_short_heads: flag(cfg[4])?,
            single_head: flag(cfg[5])?,
            seed: cfg[6].parse().map_err(|e| Error::Parse(format!("config seed: {e}")))?,
        };
        let mut model = LteeModel::new(config)?;

        let xm = next(&mut lines, "x_mean")?;
        let xs = next(&mut lines, "x_scale")?;
        let y = next(&mut lines, "y")?;
        if xm.first() != Some(&"x_mean") || xs.first() != Some(&"x_scale") || y.len() != 3 || y[0] != "y" {
            return parse_err("malformed normalizer lines");
        }
        let x_mean = floats(&xm[1..], "x_mean")?;
        let x_scale = floats(&xs[1..], "x_scale")?;
        if x_mean.len() != model.config.context_dim || x_scale.len() != x_mean.len() {
            return parse_err("normalizer width does not match context_dim");
        }
        let yv = floats(&y[1..], "y")?;
        model.normalizer = Normalizer { x_mean, x_scale, y_mean: yv[0], y_scale: yv[1] };

        let mut seen = 0;
        loop {
            let head = match lines.next() {
                None => break,
                Some(l) if l.trim().is_empty() => continue,
                Some(l) => l.split_whitespace().collect::<Vec<_>>(),
            };
            if head.len() < 2 || head[0] != "param" {
                return parse_err(format!("expected a param line, got {:?}", head.join(" ")));
            }
            let name = head[1];
            let shape = head[2..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
            let vals = floats(&next(&mut lines, name)?, name)?;
            let id = model
                .store
                .find(name)
                .ok_or_else(|| Error::Parse(format!("unknown parameter {name}")))?;
            let t = Tensor::new(shape, vals).map_err(|e| Error::Parse(format!("{name}: {e}")))?;
            model.store.set(id, t).map_err(|e| Error::Parse(e.to_string()))?;
            seen += 1;
        }
        if seen != model.store.len() {
            return parse_err(format!("checkpoint has {seen} parameters, model needs {}", model.store.len()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_checkpoint(&std::fs::read_to_string(path)?)
    }
}
