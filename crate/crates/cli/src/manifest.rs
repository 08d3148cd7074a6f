//! Dataset manifest: a `key = value` text file listing RGB-D pairs.
//!
//! ```text
//! root = data            # relative to the manifest's directory
//! depth_scale = 0.001    # meters per depth unit
//! max_altitude = 10
//! zero_depth = range     # or `missing`
//! resolution = train     # or `native`
//! entry = color/0001.png depth/0001.png [underwater/0001.png]
//! real = underwater/extra.png
//! ```

use std::path::{Path, PathBuf};

use aquarender_core::ZeroDepth;

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Resolution {
    #[default]
    Native,
    Train,
}

impl Resolution {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "native" => Some(Self::Native),
            "train" => Some(Self::Train),
            _ => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Native => "native",
            Self::Train => "train",
        }
    }
}

pub fn parse_zero_depth(s: &str) -> Option<ZeroDepth> {
    match s {
        "range" => Some(ZeroDepth::Range),
        "missing" => Some(ZeroDepth::Missing),
        _ => None,
    }
}

pub fn zero_depth_str(z: ZeroDepth) -> &'static str {
    match z {
        ZeroDepth::Range => "range",
        ZeroDepth::Missing => "missing",
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    pub color: PathBuf,
    pub depth: PathBuf,
    pub underwater: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Manifest {
    /// Directory that entry paths are resolved against.
    pub root: PathBuf,
    pub depth_scale: f64,
    pub max_altitude: Option<f64>,
    pub zero_depth: ZeroDepth,
    pub resolution: Resolution,
    pub entries: Vec<Entry>,
    /// Underwater images without a paired scene, used as real samples.
    pub reals: Vec<PathBuf>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            root: PathBuf::from("."),
            depth_scale: 0.001,
            max_altitude: None,
            zero_depth: ZeroDepth::Range,
            resolution: Resolution::Native,
            entries: Vec::new(),
            reals: Vec::new(),
        }
    }
}

impl Manifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::data(format!("cannot read manifest {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        Self::parse(&text, base).map_err(|e| match e {
            CliError::Config(m) => CliError::config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Parses manifest text; a relative `root` is resolved against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut m = Manifest {
            root: base.to_path_buf(),
            ..Default::default()
        };
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |msg: String| CliError::config(format!("line {}: {msg}", n + 1));
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            let number = || -> Result<f64> {
                value
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite() && *v > 0.0)
                    .ok_or_else(|| err(format!("`{key}` must be a positive number, got `{value}`")))
            };
            match key {
                "root" => m.root = base.join(value),
                "depth_scale" => m.depth_scale = number()?,
                "max_altitude" => m.max_altitude = Some(number()?),
                "zero_depth" => {
                    m.zero_depth = parse_zero_depth(value)
                        .ok_or_else(|| err(format!("zero_depth must be range|missing, got `{value}`")))?
                }
                "resolution" => {
                    m.resolution = Resolution::parse(value)
                        .ok_or_else(|| err(format!("resolution must be native|train, got `{value}`")))?
                }
                "entry" => {
                    let parts: Vec<&str> = value.split_whitespace().collect();
                    if !(2..=3).contains(&parts.len()) {
                        return Err(err(format!(
                            "entry needs `color depth [underwater]`, got `{value}`"
                        )));
                    }
                    m.entries.push(Entry {
                        color: parts[0].into(),
                        depth: parts[1].into(),
                        underwater: parts.get(2).map(PathBuf::from),
                    });
                }
                "real" => m.reals.push(value.into()),
                other => return Err(err(format!("unknown manifest key `{other}`"))),
            }
        }
        Ok(m)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        self.root.join(p)
    }

    pub fn to_text(&self, root: &str) -> String {
        let mut s = format!("root = {root}\n");
        s += &format!("depth_scale = {}\n", self.depth_scale);
        if let Some(a) = self.max_altitude {
            s += &format!("max_altitude = {a}\n");
        }
        s += &format!("zero_depth = {}\n", zero_depth_str(self.zero_depth));
        s += &format!("resolution = {}\n", self.resolution.as_str());
        for e in &self.entries {
            s += &format!("entry = {} {}", e.color.display(), e.depth.display());
            if let Some(u) = &e.underwater {
                s += &format!(" {}", u.display());
            }
            s += "\n";
        }
        for r in &self.reals {
            s += &format!("real = {}\n", r.display());
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_entries_and_settings() {
        let text = "root = data\ndepth_scale = 0.0005 # half mm\n\nentry = c/1.png d/1.png\nentry = c/2.png d/2.png u/2.png\nreal = u/9.png\nzero_depth = missing\n";
        let m = Manifest::parse(text, Path::new("/base")).unwrap();
        assert_eq!(m.root, PathBuf::from("/base/data"));
        assert_eq!(m.depth_scale, 0.0005);
        assert_eq!(m.entries.len(), 2);
        assert_eq!(m.entries[1].underwater, Some(PathBuf::from("u/2.png")));
        assert_eq!(m.reals, vec![PathBuf::from("u/9.png")]);
        assert_eq!(m.zero_depth, ZeroDepth::Missing);
        assert_eq!(m.resolve(&m.entries[0].color), PathBuf::from("/base/data/c/1.png"));
    }

    #[test]
    fn text_round_trip() {
        let text = "depth_scale = 0.001\nmax_altitude = 8\nentry = a.png b.png c.png\nreal = r.png\n";
        let m = Manifest::parse(text, Path::new("/x")).unwrap();
        let again = Manifest::parse(&m.to_text("."), Path::new("/x")).unwrap();
        assert_eq!(again.entries, m.entries);
        assert_eq!(again.reals, m.reals);
        assert_eq!(again.max_altitude, Some(8.0));
    }

    #[test]
    fn rejects_bad_lines() {
        for text in ["bogus = 1", "entry = only_one.png", "depth_scale = -1", "no equals"] {
            let e = Manifest::parse(text, Path::new(".")).unwrap_err();
            assert_eq!(e.exit_code(), 1, "{text}");
            assert!(e.to_string().contains("line 1"));
        }
    }
}
