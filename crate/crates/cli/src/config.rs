//! Run configuration: a flat `key = value` file plus command-line
//! overrides. Keys are checked against the subcommand's allowed set.
//! Relative paths resolve against the config file's directory, or the
//! working directory for command-line values.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use aquarender_core::checkpoint::Checkpoint;
use aquarender_core::{CameraParams, RenderModel, WaterParams, ZeroDepth};

use crate::error::{CliError, Result};
use crate::manifest::{parse_zero_depth, Resolution};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Render,
    GenDataset,
    Fit,
    Restore,
    Eval,
}

const COMMON_KEYS: &[&str] = &[
    "seed",
    "out",
    "checkpoint",
    "eta",
    "beta",
    "a",
    "b",
    "c",
    "k",
    "noise_sigma",
    "max_altitude",
    "depth_scale",
    "zero_depth",
    "resolution",
];

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Render => "render",
            Command::GenDataset => "gen-dataset",
            Command::Fit => "fit",
            Command::Restore => "restore",
            Command::Eval => "eval",
        }
    }

    fn keys(self) -> &'static [&'static str] {
        match self {
            Command::Render => &["color", "depth", "dataset"],
            Command::GenDataset => &["dataset", "synthetic", "width", "height", "near", "far"],
            Command::Fit => &[
                "mode",
                "dataset",
                "batch_size",
                "learning_rate",
                "gen_learning_rate",
                "epochs",
                "adam_beta1",
                "adam_beta2",
                "adam_eps",
                "holdout_fraction",
                "max_iterations",
            ],
            Command::Restore => &[
                "mode",
                "underwater",
                "depth",
                "dataset",
                "grid_samples",
                "golden_tolerance",
                "median",
            ],
            Command::Eval => &[
                "reference",
                "candidate",
                "reference_depth",
                "candidate_depth",
                "patches",
                "tracks",
                "normalization",
                "baselines",
            ],
        }
    }

    pub fn allows(self, key: &str) -> bool {
        COMMON_KEYS.contains(&key) || self.keys().contains(&key)
    }
}

#[derive(Debug, Clone)]
struct Value {
    text: String,
    base: PathBuf,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    command: Command,
    values: BTreeMap<String, Value>,
}

impl RunConfig {
    pub fn new(command: Command) -> Self {
        Self {
            command,
            values: BTreeMap::new(),
        }
    }

    pub fn command(&self) -> Command {
        self.command
    }

    pub fn load(command: Command, path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::config(format!("cannot read config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let mut cfg = Self::new(command);
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            cfg.set_line(line, &base).map_err(|e| {
                CliError::config(format!("{} line {}: {}", path.display(), n + 1, inner(&e)))
            })?;
        }
        Ok(cfg)
    }

    /// Applies a `key=value` override given on the command line.
    pub fn apply_override(&mut self, kv: &str) -> Result<()> {
        self.set_line(kv, Path::new("."))
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        self.set_with_base(key, value, Path::new("."))
    }

    fn set_line(&mut self, line: &str, base: &Path) -> Result<()> {
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| CliError::config(format!("expected `key=value`, got `{line}`")))?;
        self.set_with_base(k.trim(), v.trim(), base)
    }

    fn set_with_base(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        if !self.command.allows(key) {
            return Err(CliError::config(format!(
                "unknown key `{key}` for `{}`",
                self.command.name()
            )));
        }
        self.values.insert(
            key.to_string(),
            Value {
                text: value.to_string(),
                base: base.to_path_buf(),
            },
        );
        Ok(())
    }

    pub fn has(&self, key: &str) -> bool {
        self.values.contains_key(key)
    }

    pub fn str(&self, key: &str) -> Option<&str> {
        self.values.get(key).map(|v| v.text.as_str())
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.values.get(key).map(|v| v.base.join(&v.text))
    }

    pub fn require_path(&self, key: &str) -> Result<PathBuf> {
        self.path(key)
            .ok_or_else(|| CliError::config(format!("missing required key `{key}`")))
    }

    pub fn f64(&self, key: &str) -> Result<Option<f64>> {
        self.str(key)
            .map(|s| {
                s.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(key, s, "a finite number"))
            })
            .transpose()
    }

    pub fn usize(&self, key: &str) -> Result<Option<usize>> {
        self.str(key)
            .map(|s| s.parse::<usize>().map_err(|_| bad(key, s, "a non-negative integer")))
            .transpose()
    }

    pub fn u64(&self, key: &str) -> Result<Option<u64>> {
        self.str(key)
            .map(|s| s.parse::<u64>().map_err(|_| bad(key, s, "a non-negative integer")))
            .transpose()
    }

    pub fn bool(&self, key: &str) -> Result<Option<bool>> {
        self.str(key)
            .map(|s| match s {
                "true" | "yes" | "1" => Ok(true),
                "false" | "no" | "0" => Ok(false),
                _ => Err(bad(key, s, "true or false")),
            })
            .transpose()
    }

    /// A per-channel triple; a single value is broadcast to all channels.
    pub fn triple(&self, key: &str) -> Result<Option<[f64; 3]>> {
        let Some(s) = self.str(key) else {
            return Ok(None);
        };
        let v: Vec<f64> = s
            .split(',')
            .map(|p| p.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| bad(key, s, "one or three comma-separated numbers"))?;
        match v.as_slice() {
            [x] => Ok(Some([*x; 3])),
            [r, g, b] => Ok(Some([*r, *g, *b])),
            _ => Err(bad(key, s, "one or three comma-separated numbers")),
        }
    }

    pub fn seed(&self) -> Result<u64> {
        Ok(self.u64("seed")?.unwrap_or(0))
    }

    pub fn out_dir(&self) -> Result<PathBuf> {
        self.require_path("out")
    }

    pub fn choice<'a>(&self, key: &str, allowed: &[&'a str], default: &'a str) -> Result<&'a str> {
        match self.str(key) {
            None => Ok(default),
            Some(s) => allowed
                .iter()
                .copied()
                .find(|a| *a == s)
                .ok_or_else(|| bad(key, s, &allowed.join(" or "))),
        }
    }

    pub fn resolution(&self, default: Resolution) -> Result<Resolution> {
        match self.str("resolution") {
            None => Ok(default),
            Some(s) => Resolution::parse(s).ok_or_else(|| bad("resolution", s, "native or train")),
        }
    }

    pub fn zero_depth(&self) -> Result<Option<ZeroDepth>> {
        self.str("zero_depth")
            .map(|s| parse_zero_depth(s).ok_or_else(|| bad("zero_depth", s, "range or missing")))
            .transpose()
    }

    pub fn positive(&self, key: &str) -> Result<Option<f64>> {
        match self.f64(key)? {
            Some(v) if v <= 0.0 => Err(bad(key, &v.to_string(), "a positive number")),
            other => Ok(other),
        }
    }

    /// Builds a model from an optional `checkpoint` and explicit parameter
    /// keys, which take precedence. Missing camera keys fall back to `base`.
    pub fn model(&self, base: RenderModel) -> Result<RenderModel> {
        let mut m = match self.path("checkpoint") {
            Some(p) => load_checkpoint(&p)?.model,
            None => base,
        };
        if let Some(v) = self.triple("eta")? {
            m.water.eta = v;
        }
        if let Some(v) = self.triple("beta")? {
            m.water.beta = v;
        }
        for (key, slot) in [
            ("a", &mut m.camera.a),
            ("b", &mut m.camera.b),
            ("c", &mut m.camera.c),
            ("k", &mut m.camera.k),
        ] {
            if let Some(v) = self.f64(key)? {
                *slot = v;
            }
        }
        if let Some(v) = self.f64("noise_sigma")? {
            m.noise_sigma = v;
        }
        if let Some(v) = self.f64("max_altitude")? {
            m.max_altitude = v;
        }
        let m = RenderModel::new(
            WaterParams::new(m.water.eta, m.water.beta).map_err(to_config)?,
            CameraParams::new(m.camera.a, m.camera.b, m.camera.c, m.camera.k)
                .map_err(to_config)?,
            m.noise_sigma,
            m.max_altitude,
        )
        .map_err(to_config)?;
        Ok(m)
    }

    /// True when the config names a model source for commands that need one.
    pub fn has_model_source(&self) -> bool {
        self.has("checkpoint") || (self.has("eta") && self.has("beta"))
    }
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::data(format!("cannot read checkpoint {}: {e}", path.display())))?;
    Checkpoint::from_bytes(&bytes)
        .map_err(|e| CliError::data(format!("invalid checkpoint {}: {e}", path.display())))
}

fn to_config(e: aquarender_core::Error) -> CliError {
    CliError::config(format!("invalid model parameters: {e}"))
}

fn bad(key: &str, value: &str, want: &str) -> CliError {
    CliError::config(format!("`{key}` must be {want}, got `{value}`"))
}

fn inner(e: &CliError) -> String {
    match e {
        CliError::Config(m) | CliError::Data(m) | CliError::Divergence(m) => m.clone(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_win_and_paths_resolve() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("run.conf");
        std::fs::write(&p, "seed = 3 # comment\ncolor = in.png\nout = o\n").unwrap();
        let mut cfg = RunConfig::load(Command::Render, &p).unwrap();
        assert_eq!(cfg.seed().unwrap(), 3);
        assert_eq!(cfg.path("color").unwrap(), dir.path().join("in.png"));
        cfg.apply_override("seed=9").unwrap();
        assert_eq!(cfg.seed().unwrap(), 9);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let mut cfg = RunConfig::new(Command::Render);
        let e = cfg.apply_override("epochs=3").unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(RunConfig::new(Command::Fit).apply_override("epochs=3").is_ok());
    }

    #[test]
    fn seed_defaults_to_zero() {
        assert_eq!(RunConfig::new(Command::Eval).seed().unwrap(), 0);
    }

    #[test]
    fn model_from_keys_checks_constraints() {
        let mut cfg = RunConfig::new(Command::Render);
        cfg.set("eta", "0.3,0.2,0.1").unwrap();
        cfg.set("beta", "0.1").unwrap();
        let m = cfg.model(RenderModel::near_identity(10.0)).unwrap();
        assert_eq!(m.water.eta, [0.3, 0.2, 0.1]);
        assert_eq!(m.water.beta, [0.1; 3]);
        cfg.set("b", "5").unwrap();
        cfg.set("a", "0.1").unwrap();
        assert_eq!(cfg.model(RenderModel::near_identity(10.0)).unwrap_err().exit_code(), 1);
    }

    #[test]
    fn malformed_values_name_the_key() {
        let mut cfg = RunConfig::new(Command::Fit);
        cfg.set("epochs", "ten").unwrap();
        let e = cfg.usize("epochs").unwrap_err();
        assert!(e.to_string().contains("epochs"));
    }
}
