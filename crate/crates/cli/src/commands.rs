//! Subcommand implementations. Every command writes into its output
//! directory, records the files it produced in `manifest.txt` and a flat
//! `key = value` summary in `summary.txt`.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use aquarender_core::checkpoint::Checkpoint;
use aquarender_core::evaluation::{
    baseline_grayworld, baseline_histeq, color_accuracy, color_consistency, rmse_depth_norm,
    rmse_rgb, valid_depth_mask, ColorPatch, ColorPatchSet, Normalization, TrackSet,
};
use aquarender_core::fit::{default_init, fit_direct, FitOptions, Pair};
use aquarender_core::gan::{train, Scene, TrainConfig};
use aquarender_core::optim::AdamConfig;
use aquarender_core::physics::render;
use aquarender_core::resample::{area_downsample, area_downsample_depth, TRAIN_HEIGHT, TRAIN_WIDTH};
use aquarender_core::restoration::{invert_render, restore_monocular, DepthSearch};
use aquarender_core::synth::textured_scene;
use aquarender_core::{DepthMap, LinearImage, PixelMask, RenderModel, NUM_PARAMS, PARAM_NAMES};

use crate::config::{Command, RunConfig};
use crate::error::{CliError, Result};
use crate::io;
use crate::manifest::{Entry, Manifest, Resolution};

const DEFAULT_MAX_ALTITUDE: f64 = 10.0;
const DEFAULT_DEPTH_SCALE: f64 = 0.001;
/// Scale used to store relative range maps in `[0, 1]` as 16-bit PNG.
pub const REL_DEPTH_SCALE: f64 = 1.0 / 65535.0;

/// What a command produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub out_dir: PathBuf,
    /// Paths relative to `out_dir`, in write order.
    pub files: Vec<String>,
    pub summary: Vec<(String, String)>,
}

impl RunReport {
    pub fn get(&self, key: &str) -> Option<&str> {
        self.summary
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }
}

struct Output {
    dir: PathBuf,
    files: Vec<(String, usize)>,
    summary: Vec<(String, String)>,
}

impl Output {
    fn new(dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir)
            .map_err(|e| CliError::data(format!("cannot create {}: {e}", dir.display())))?;
        Ok(Self {
            dir,
            files: Vec::new(),
            summary: Vec::new(),
        })
    }

    fn write(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        io::write_atomic(&self.dir.join(rel), bytes)?;
        self.files.push((rel.to_string(), bytes.len()));
        Ok(())
    }

    fn image(&mut self, rel: &str, img: &LinearImage) -> Result<()> {
        self.write(rel, &io::encode_image(img)?)
    }

    fn depth(&mut self, rel: &str, d: &DepthMap, scale: f64) -> Result<()> {
        self.write(rel, &io::encode_depth(d, scale)?)
    }

    fn mask(&mut self, rel: &str, m: &PixelMask, w: usize, h: usize) -> Result<()> {
        let data = (0..w * h)
            .flat_map(|i| [if m.get(i) { 1.0 } else { 0.0 }; 3])
            .collect();
        self.image(rel, &LinearImage::new(w, h, data)?)
    }

    fn note(&mut self, key: &str, value: impl ToString) {
        self.summary.push((key.to_string(), value.to_string()));
    }

    fn finish(mut self) -> Result<RunReport> {
        let mut s = String::new();
        for (k, v) in &self.summary {
            let _ = writeln!(s, "{k} = {v}");
        }
        self.write("summary.txt", s.as_bytes())?;
        let mut m = String::new();
        for (f, n) in &self.files {
            let _ = writeln!(m, "{f} {n}");
        }
        io::write_atomic(&self.dir.join("manifest.txt"), m.as_bytes())?;
        let mut files: Vec<String> = self.files.into_iter().map(|(f, _)| f).collect();
        files.push("manifest.txt".into());
        Ok(RunReport {
            out_dir: self.dir,
            files,
            summary: self.summary,
        })
    }
}

pub fn run(cfg: &RunConfig) -> Result<RunReport> {
    match cfg.command() {
        Command::Render => cmd_render(cfg),
        Command::GenDataset => cmd_gen_dataset(cfg),
        Command::Fit => cmd_fit(cfg),
        Command::Restore => cmd_restore(cfg),
        Command::Eval => cmd_eval(cfg),
    }
}

/// Independent per-item seed from the run seed (SplitMix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Brings an image to the training resolution: area averaging when
/// shrinking, bicubic when either side must grow.
pub fn to_train_image(img: &LinearImage) -> Result<LinearImage> {
    let (w, h) = (img.width(), img.height());
    if (w, h) == (TRAIN_WIDTH, TRAIN_HEIGHT) {
        Ok(img.clone())
    } else if w >= TRAIN_WIDTH && h >= TRAIN_HEIGHT {
        Ok(area_downsample(img, TRAIN_WIDTH, TRAIN_HEIGHT)?)
    } else {
        io::bicubic_resize(img, TRAIN_WIDTH, TRAIN_HEIGHT)
    }
}

pub fn to_train_depth(d: &DepthMap) -> Result<DepthMap> {
    let (w, h) = (d.width(), d.height());
    if (w, h) == (TRAIN_WIDTH, TRAIN_HEIGHT) {
        Ok(d.clone())
    } else if w >= TRAIN_WIDTH && h >= TRAIN_HEIGHT {
        Ok(area_downsample_depth(d, TRAIN_WIDTH, TRAIN_HEIGHT)?)
    } else {
        io::bicubic_resize_depth(d, TRAIN_WIDTH, TRAIN_HEIGHT)
    }
}

fn at_resolution_image(img: LinearImage, res: Resolution) -> Result<LinearImage> {
    match res {
        Resolution::Native => Ok(img),
        Resolution::Train => to_train_image(&img),
    }
}

fn at_resolution_depth(d: DepthMap, res: Resolution) -> Result<DepthMap> {
    match res {
        Resolution::Native => Ok(d),
        Resolution::Train => to_train_depth(&d),
    }
}

/// Loads a dataset manifest, letting config keys override its settings.
fn load_manifest(cfg: &RunConfig) -> Result<Manifest> {
    let path = cfg.require_path("dataset")?;
    let mut m = Manifest::load(&path)?;
    if let Some(s) = cfg.positive("depth_scale")? {
        m.depth_scale = s;
    }
    if let Some(z) = cfg.zero_depth()? {
        m.zero_depth = z;
    }
    Ok(m)
}

fn load_entry(m: &Manifest, e: &Entry, res: Resolution) -> Result<(LinearImage, DepthMap)> {
    let color = io::load_image(&m.resolve(&e.color))?;
    let depth = io::load_depth(&m.resolve(&e.depth), m.depth_scale, m.zero_depth)?;
    if !color.same_dims(&depth) {
        return Err(CliError::data(format!(
            "{} is {}x{} but {} is {}x{}",
            e.color.display(),
            color.width(),
            color.height(),
            e.depth.display(),
            depth.width(),
            depth.height()
        )));
    }
    Ok((at_resolution_image(color, res)?, at_resolution_depth(depth, res)?))
}

fn require_model_source(cfg: &RunConfig) -> Result<()> {
    if cfg.has_model_source() {
        Ok(())
    } else {
        Err(CliError::config(format!(
            "`{}` needs a model: set `checkpoint` or both `eta` and `beta`",
            cfg.command().name()
        )))
    }
}

fn note_model(out: &mut Output, prefix: &str, m: &RenderModel) {
    let nat = m.natural();
    for i in 0..NUM_PARAMS {
        out.note(&format!("{prefix}{}", PARAM_NAMES[i]), nat[i]);
    }
    out.note(&format!("{prefix}noise_sigma"), m.noise_sigma);
    out.note(&format!("{prefix}max_altitude"), m.max_altitude);
}

fn cmd_render(cfg: &RunConfig) -> Result<RunReport> {
    require_model_source(cfg)?;
    let model = cfg.model(RenderModel::near_identity(DEFAULT_MAX_ALTITUDE))?;
    let res = cfg.resolution(Resolution::Native)?;
    let seed = cfg.seed()?;
    let mut out = Output::new(cfg.out_dir()?)?;
    if cfg.has("dataset") {
        let m = load_manifest(cfg)?;
        if m.entries.is_empty() {
            return Err(CliError::data("dataset has no entries"));
        }
        for (i, e) in m.entries.iter().enumerate() {
            let (color, depth) = load_entry(&m, e, res)?;
            let uw = render(&color, &depth, &model, derive_seed(seed, i as u64))?;
            out.image(&format!("underwater/{i:04}.png"), &uw)?;
        }
        out.note("images", m.entries.len());
    } else {
        let scale = cfg.positive("depth_scale")?.unwrap_or(DEFAULT_DEPTH_SCALE);
        let zero = cfg.zero_depth()?.unwrap_or_default();
        let color = io::load_image(&cfg.require_path("color")?)?;
        let depth = io::load_depth(&cfg.require_path("depth")?, scale, zero)?;
        let color = at_resolution_image(color, res)?;
        let depth = at_resolution_depth(depth, res)?;
        let uw = render(&color, &depth, &model, derive_seed(seed, 0))?;
        out.image("underwater.png", &uw)?;
        out.note("images", 1);
    }
    out.note("seed", seed);
    note_model(&mut out, "model.", &model);
    out.finish()
}

/// Rounds an image to what an 8-bit PNG stores.
fn quantize_image(img: &LinearImage) -> Result<LinearImage> {
    let data = img
        .as_slice()
        .iter()
        .map(|v| (v * 255.0).round() / 255.0)
        .collect();
    Ok(LinearImage::new(img.width(), img.height(), data)?)
}

fn quantize_depth(d: &DepthMap, scale: f64) -> Result<DepthMap> {
    let data = d
        .as_slice()
        .iter()
        .map(|v| (v / scale).round().clamp(0.0, u16::MAX as f64) * scale)
        .collect();
    Ok(DepthMap::new(d.width(), d.height(), data)?.with_zero(d.zero_mode()))
}

fn cmd_gen_dataset(cfg: &RunConfig) -> Result<RunReport> {
    require_model_source(cfg)?;
    let model = cfg.model(RenderModel::near_identity(DEFAULT_MAX_ALTITUDE))?;
    let seed = cfg.seed()?;
    let res = cfg.resolution(Resolution::Native)?;
    let mut out = Output::new(cfg.out_dir()?)?;
    let mut scenes: Vec<(LinearImage, DepthMap)> = Vec::new();
    let (scale, zero) = if cfg.has("dataset") {
        if cfg.has("synthetic") {
            return Err(CliError::config("set either `dataset` or `synthetic`, not both"));
        }
        let m = load_manifest(cfg)?;
        for e in &m.entries {
            scenes.push(load_entry(&m, e, res)?);
        }
        (m.depth_scale, m.zero_depth)
    } else {
        let n = cfg
            .usize("synthetic")?
            .ok_or_else(|| CliError::config("set `dataset` or `synthetic = N`"))?;
        let w = cfg.usize("width")?.unwrap_or(TRAIN_WIDTH);
        let h = cfg.usize("height")?.unwrap_or(TRAIN_HEIGHT);
        let near = cfg.positive("near")?.unwrap_or(0.5);
        let far = cfg.positive("far")?.unwrap_or(0.9 * model.max_altitude);
        if w == 0 || h == 0 || !(far > near) {
            return Err(CliError::config(
                "synthetic scenes need width, height > 0 and far > near",
            ));
        }
        for i in 0..n {
            let s = textured_scene(w, h, near, far, derive_seed(seed, i as u64));
            scenes.push((
                at_resolution_image(s.image, res)?,
                at_resolution_depth(s.depth, res)?,
            ));
        }
        (
            cfg.positive("depth_scale")?.unwrap_or(DEFAULT_DEPTH_SCALE),
            cfg.zero_depth()?.unwrap_or_default(),
        )
    };
    if scenes.is_empty() {
        return Err(CliError::data("no scenes to render"));
    }
    let mut manifest = Manifest {
        root: ".".into(),
        depth_scale: scale,
        max_altitude: Some(model.max_altitude),
        zero_depth: zero,
        resolution: Resolution::Native,
        ..Default::default()
    };
    for (i, (color, depth)) in scenes.iter().enumerate() {
        // Render from exactly what the files will hold.
        let color = quantize_image(color)?;
        let depth = quantize_depth(depth, scale)?;
        let uw = render(&color, &depth, &model, derive_seed(seed ^ 0x0a0b, i as u64))?;
        let (c, d, u) = (
            format!("color/{i:04}.png"),
            format!("depth/{i:04}.png"),
            format!("underwater/{i:04}.png"),
        );
        out.image(&c, &color)?;
        out.depth(&d, &depth, scale)?;
        out.image(&u, &uw)?;
        manifest.entries.push(Entry {
            color: c.into(),
            depth: d.into(),
            underwater: Some(u.into()),
        });
    }
    out.write("dataset.txt", manifest.to_text(".").as_bytes())?;
    let truth = Checkpoint {
        model,
        weights: Vec::new(),
    };
    out.write("truth.ckpt", &truth.to_bytes()?)?;
    out.note("entries", scenes.len());
    out.note("seed", seed);
    note_model(&mut out, "truth.", &model);
    out.finish()
}

fn train_config(cfg: &RunConfig) -> Result<TrainConfig> {
    let d = TrainConfig::default();
    let tc = TrainConfig {
        batch_size: cfg.usize("batch_size")?.unwrap_or(d.batch_size),
        learning_rate: cfg.f64("learning_rate")?.unwrap_or(d.learning_rate),
        gen_learning_rate: cfg.f64("gen_learning_rate")?.unwrap_or(d.gen_learning_rate),
        epochs: cfg.usize("epochs")?.unwrap_or(d.epochs),
        seed: cfg.seed()?,
        adam: AdamConfig {
            beta1: cfg.f64("adam_beta1")?.unwrap_or(d.adam.beta1),
            beta2: cfg.f64("adam_beta2")?.unwrap_or(d.adam.beta2),
            eps: cfg.f64("adam_eps")?.unwrap_or(d.adam.eps),
        },
        holdout_fraction: cfg.f64("holdout_fraction")?.unwrap_or(d.holdout_fraction),
    };
    tc.validate()
        .map_err(|e| CliError::config(format!("invalid training settings: {e}")))?;
    Ok(tc)
}

fn cmd_fit(cfg: &RunConfig) -> Result<RunReport> {
    let mode = cfg.choice("mode", &["direct", "adversarial"], "direct")?;
    let res = cfg.resolution(Resolution::Train)?;
    let seed = cfg.seed()?;
    let train_cfg = if mode == "adversarial" {
        Some(train_config(cfg)?)
    } else {
        if let Some(k) = ["batch_size", "learning_rate", "gen_learning_rate", "epochs"]
            .into_iter()
            .find(|k| cfg.has(k))
        {
            return Err(CliError::config(format!("`{k}` only applies to mode = adversarial")));
        }
        None
    };
    let m = load_manifest(cfg)?;
    let max_alt = cfg
        .positive("max_altitude")?
        .or(m.max_altitude)
        .unwrap_or(DEFAULT_MAX_ALTITUDE);
    let init = cfg.model(default_init(max_alt))?;
    let mut out = Output::new(cfg.out_dir()?)?;
    out.note("mode", mode);
    out.note("seed", seed);
    if m.entries.is_empty() {
        return Err(CliError::data("dataset has no entries"));
    }
    match train_cfg {
        None => {
            let mut pairs = Vec::with_capacity(m.entries.len());
            for (i, e) in m.entries.iter().enumerate() {
                let uw_path = e.underwater.as_ref().ok_or_else(|| {
                    CliError::data(format!(
                        "entry {} ({}) has no underwater image, needed for a direct fit",
                        i + 1,
                        e.color.display()
                    ))
                })?;
                let (air, depth) = load_entry(&m, e, res)?;
                let uw = at_resolution_image(io::load_image(&m.resolve(uw_path))?, res)?;
                if !uw.same_dims(&air) {
                    return Err(CliError::data(format!(
                        "{} does not match the size of {}",
                        uw_path.display(),
                        e.color.display()
                    )));
                }
                pairs.push(Pair {
                    air,
                    depth,
                    underwater: uw,
                });
            }
            let opts = FitOptions {
                init,
                max_iterations: cfg
                    .usize("max_iterations")?
                    .unwrap_or(FitOptions::default().max_iterations),
                ..Default::default()
            };
            let fit = fit_direct(&pairs, &opts)?;
            let ck = Checkpoint {
                model: fit.model,
                weights: Vec::new(),
            };
            out.write("model.ckpt", &ck.to_bytes()?)?;
            out.note("pairs", pairs.len());
            out.note("samples", fit.samples);
            out.note("iterations", fit.iterations);
            out.note("rms_residual", fit.rms_residual);
            note_model(&mut out, "model.", &fit.model);
        }
        Some(tc) => {
            if cfg.has("max_iterations") {
                return Err(CliError::config("`max_iterations` only applies to mode = direct"));
            }
            let mut reals = Vec::new();
            let mut scenes = Vec::new();
            for e in &m.entries {
                let (image, depth) = load_entry(&m, e, Resolution::Train)?;
                scenes.push(Scene { image, depth });
                if let Some(u) = &e.underwater {
                    reals.push(to_train_image(&io::load_image(&m.resolve(u))?)?);
                }
            }
            for r in &m.reals {
                reals.push(to_train_image(&io::load_image(&m.resolve(r))?)?);
            }
            let outcome = train(&tc, &reals, &scenes, &init)?;
            let ck = Checkpoint {
                model: outcome.model,
                weights: outcome
                    .discriminator
                    .params()
                    .iter()
                    .map(|&w| w as f32)
                    .collect(),
            };
            out.write("model.ckpt", &ck.to_bytes()?)?;
            out.write("train_log.csv", outcome.report.to_csv().as_bytes())?;
            out.note("reals", reals.len());
            out.note("scenes", scenes.len());
            out.note("epochs", tc.epochs);
            if let Some(last) = outcome.report.epochs.last() {
                out.note("final_disc_accuracy", last.disc_accuracy);
                out.note("final_disc_loss", last.disc_loss);
                out.note("final_gen_loss", last.gen_loss);
            }
            note_model(&mut out, "model.", &outcome.model);
        }
    }
    out.finish()
}

fn cmd_restore(cfg: &RunConfig) -> Result<RunReport> {
    require_model_source(cfg)?;
    let mode = cfg.choice("mode", &["monocular", "known-depth"], "monocular")?;
    let model = cfg.model(RenderModel::near_identity(DEFAULT_MAX_ALTITUDE))?;
    let d = DepthSearch::default();
    let search = DepthSearch {
        grid_samples: cfg.usize("grid_samples")?.unwrap_or(d.grid_samples),
        golden_tolerance: match cfg.str("golden_tolerance") {
            Some("none") => None,
            Some(_) => cfg.positive("golden_tolerance")?,
            None => d.golden_tolerance,
        },
        median: cfg.bool("median")?.unwrap_or(d.median),
    };
    let res = cfg.resolution(Resolution::Native)?;

    // (name, underwater, optional range map)
    let mut jobs: Vec<(String, LinearImage, Option<DepthMap>)> = Vec::new();
    if cfg.has("dataset") {
        let m = load_manifest(cfg)?;
        for (i, e) in m.entries.iter().enumerate() {
            let Some(u) = &e.underwater else { continue };
            let uw = at_resolution_image(io::load_image(&m.resolve(u))?, res)?;
            let depth = if mode == "known-depth" {
                let d = io::load_depth(&m.resolve(&e.depth), m.depth_scale, m.zero_depth)?;
                Some(at_resolution_depth(d, res)?)
            } else {
                None
            };
            jobs.push((format!("{i:04}"), uw, depth));
        }
        for (i, r) in m.reals.iter().enumerate() {
            if mode == "known-depth" {
                break;
            }
            let uw = at_resolution_image(io::load_image(&m.resolve(r))?, res)?;
            jobs.push((format!("real{i:04}"), uw, None));
        }
        if jobs.is_empty() {
            return Err(CliError::data("dataset has no underwater images to restore"));
        }
    } else {
        let uw = at_resolution_image(io::load_image(&cfg.require_path("underwater")?)?, res)?;
        let depth = if mode == "known-depth" {
            let scale = cfg.positive("depth_scale")?.unwrap_or(DEFAULT_DEPTH_SCALE);
            let zero = cfg.zero_depth()?.unwrap_or_default();
            let d = io::load_depth(&cfg.require_path("depth")?, scale, zero)?;
            Some(at_resolution_depth(d, res)?)
        } else {
            None
        };
        jobs.push((String::new(), uw, depth));
    }

    let mut out = Output::new(cfg.out_dir()?)?;
    out.note("mode", mode);
    let name = |dir: &str, job: &str| {
        if job.is_empty() {
            format!("{dir}.png")
        } else {
            format!("{dir}/{job}.png")
        }
    };
    let mut residual_sum = 0.0;
    let mut residual_n = 0usize;
    let mut flagged = 0usize;
    for (job, uw, depth) in &jobs {
        let (w, h) = (uw.width(), uw.height());
        match depth {
            Some(depth) => {
                if !uw.same_dims(depth) {
                    return Err(CliError::data(format!(
                        "underwater image {w}x{h} and range map {}x{} differ in size",
                        depth.width(),
                        depth.height()
                    )));
                }
                let inv = invert_render(uw, depth, &model)?;
                out.image(&name("restored", job), &inv.image)?;
                out.mask(&name("flagged", job), &inv.flagged, w, h)?;
                flagged += inv.flagged.count();
            }
            None => {
                let r = restore_monocular(uw, &model, &search)?;
                out.image(&name("restored", job), &r.restored)?;
                out.depth(&name("depth_rel", job), &r.depth_rel, REL_DEPTH_SCALE)?;
                out.mask(&name("saturation", job), &r.saturation_mask, w, h)?;
                flagged += r.saturation_mask.count();
                for (i, v) in r.residual.as_slice().iter().enumerate() {
                    if !r.saturation_mask.get(i) {
                        residual_sum += v;
                        residual_n += 1;
                    }
                }
            }
        }
    }
    out.note("images", jobs.len());
    out.note("flagged_pixels", flagged);
    if mode == "monocular" {
        out.note("depth_scale", REL_DEPTH_SCALE);
        out.note(
            "mean_residual",
            if residual_n > 0 {
                residual_sum / residual_n as f64
            } else {
                0.0
            },
        );
    }
    out.finish()
}

fn read_csv_rows(path: &Path) -> Result<Vec<Vec<String>>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::data(format!("cannot read {}: {e}", path.display())))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| l.split(',').map(|s| s.trim().to_string()).collect())
        .collect())
}

fn parse_field<T: std::str::FromStr>(path: &Path, line: usize, s: &str) -> Result<T> {
    s.parse().map_err(|_| {
        CliError::data(format!("{} row {line}: cannot parse `{s}`", path.display()))
    })
}

/// Patch file rows: `name,x0,y0,x1,y1,r,g,b` with a half-open pixel box and
/// the in-air reference color in [0,1].
fn load_patches(path: &Path, img: &LinearImage) -> Result<ColorPatchSet> {
    let mut set = ColorPatchSet::default();
    for (n, row) in read_csv_rows(path)?.iter().enumerate() {
        if row.len() != 8 {
            return Err(CliError::data(format!(
                "{} row {}: expected name,x0,y0,x1,y1,r,g,b",
                path.display(),
                n + 1
            )));
        }
        let b: Vec<usize> = (1..5)
            .map(|i| parse_field(path, n + 1, &row[i]))
            .collect::<Result<_>>()?;
        let reference: Vec<f64> = (5..8)
            .map(|i| parse_field(path, n + 1, &row[i]))
            .collect::<Result<_>>()?;
        if b[2] > img.width() || b[3] > img.height() || b[0] >= b[2] || b[1] >= b[3] {
            return Err(CliError::data(format!(
                "{} row {}: box outside the {}x{} image or empty",
                path.display(),
                n + 1,
                img.width(),
                img.height()
            )));
        }
        let mut pixels = Vec::new();
        for y in b[1]..b[3] {
            for x in b[0]..b[2] {
                pixels.push(img.pixel(x, y));
            }
        }
        set.patches.push(ColorPatch {
            name: row[0].clone(),
            pixels,
            reference: [reference[0], reference[1], reference[2]],
        });
    }
    Ok(set)
}

/// Track file rows: `track,image,x,y`; image paths are relative to the
/// track file. Observations are read after applying `transform`.
fn load_tracks(
    path: &Path,
    transform: &dyn Fn(&LinearImage) -> Result<LinearImage>,
) -> Result<TrackSet> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut images: std::collections::BTreeMap<String, LinearImage> = Default::default();
    let mut tracks: std::collections::BTreeMap<String, Vec<[f64; 3]>> = Default::default();
    let mut order = Vec::new();
    for (n, row) in read_csv_rows(path)?.iter().enumerate() {
        if row.len() != 4 {
            return Err(CliError::data(format!(
                "{} row {}: expected track,image,x,y",
                path.display(),
                n + 1
            )));
        }
        let x: usize = parse_field(path, n + 1, &row[2])?;
        let y: usize = parse_field(path, n + 1, &row[3])?;
        if !images.contains_key(&row[1]) {
            let img = io::load_image(&base.join(&row[1]))?;
            images.insert(row[1].clone(), transform(&img)?);
        }
        let img = &images[&row[1]];
        if x >= img.width() || y >= img.height() {
            return Err(CliError::data(format!(
                "{} row {}: ({x}, {y}) is outside {}",
                path.display(),
                n + 1,
                row[1]
            )));
        }
        if !tracks.contains_key(&row[0]) {
            order.push(row[0].clone());
        }
        tracks.entry(row[0].clone()).or_default().push(img.pixel(x, y));
    }
    Ok(TrackSet {
        tracks: order.iter().map(|t| tracks[t].clone()).collect(),
    })
}

fn cmd_eval(cfg: &RunConfig) -> Result<RunReport> {
    let norm = match cfg.choice("normalization", &["euclidean", "chromaticity"], "euclidean")? {
        "chromaticity" => Normalization::Chromaticity,
        _ => Normalization::Euclidean,
    };
    let baselines = cfg.bool("baselines")?.unwrap_or(true);
    let header = format!(
        "# normalization = {}\n",
        cfg.str("normalization").unwrap_or("euclidean")
    );
    let candidate = cfg
        .path("candidate")
        .map(|p| io::load_image(&p))
        .transpose()?;
    let reference = cfg
        .path("reference")
        .map(|p| io::load_image(&p))
        .transpose()?;

    type Method = (&'static str, fn(&LinearImage) -> Result<LinearImage>);
    let mut methods: Vec<Method> = vec![("candidate", |i| Ok(i.clone()))];
    if baselines {
        methods.push(("histeq", |i| Ok(baseline_histeq(i))));
        methods.push(("grayworld", |i| Ok(baseline_grayworld(i)?)));
    }

    let mut out = Output::new(cfg.out_dir()?)?;
    let mut did_something = false;

    let variants: Vec<(&str, LinearImage)> = match &candidate {
        Some(c) => methods
            .iter()
            .map(|(n, f)| Ok((*n, f(c)?)))
            .collect::<Result<_>>()?,
        None => Vec::new(),
    };
    if baselines {
        for (n, img) in variants.iter().skip(1) {
            out.image(&format!("baseline_{n}.png"), img)?;
        }
    }

    if let Some(r) = &reference {
        if variants.is_empty() {
            return Err(CliError::config("`reference` needs a `candidate`"));
        }
        let mut csv = header.clone() + "method,R,G,B\n";
        for (n, img) in &variants {
            let e = rmse_rgb(r, img)?;
            let _ = writeln!(csv, "{n},{},{},{}", e[0], e[1], e[2]);
            out.note(&format!("rmse.{n}"), format!("{},{},{}", e[0], e[1], e[2]));
        }
        out.write("rmse.csv", csv.as_bytes())?;
        did_something = true;
    }

    if cfg.has("reference_depth") || cfg.has("candidate_depth") {
        let scale = cfg.positive("depth_scale")?.unwrap_or(DEFAULT_DEPTH_SCALE);
        let zero = cfg.zero_depth()?.unwrap_or_default();
        let a = io::load_depth(&cfg.require_path("reference_depth")?, scale, zero)?;
        let b = io::load_depth(&cfg.require_path("candidate_depth")?, scale, zero)?;
        let mask = valid_depth_mask(&a, &b)?;
        let e = rmse_depth_norm(&a, &b, &mask)?;
        out.write(
            "depth_rmse.csv",
            format!("{header}metric,value\nnormalized_range_rmse,{e}\n").as_bytes(),
        )?;
        out.note("depth_rmse", e);
        did_something = true;
    }

    if let Some(p) = cfg.path("patches") {
        if variants.is_empty() {
            return Err(CliError::config("`patches` needs a `candidate`"));
        }
        let sets: Vec<(&str, ColorPatchSet)> = variants
            .iter()
            .map(|(n, img)| Ok((*n, load_patches(&p, img)?)))
            .collect::<Result<_>>()?;
        let scores: Vec<Vec<(String, f64)>> = sets
            .iter()
            .map(|(_, s)| Ok(color_accuracy(s, norm)?))
            .collect::<Result<_>>()?;
        let mut csv = header.clone() + "patch";
        for (n, _) in &sets {
            csv += &format!(",{n}");
        }
        csv += "\n";
        for (i, (name, _)) in scores[0].iter().enumerate() {
            csv += name;
            for s in &scores {
                csv += &format!(",{}", s[i].1);
            }
            csv += "\n";
        }
        for (j, (n, _)) in sets.iter().enumerate() {
            let mean = scores[j].iter().map(|s| s.1).sum::<f64>() / scores[j].len() as f64;
            out.note(&format!("color_accuracy_mean.{n}"), mean);
        }
        out.write("color_accuracy.csv", csv.as_bytes())?;
        did_something = true;
    }

    if let Some(p) = cfg.path("tracks") {
        let mut csv = header.clone() + "method,R,G,B\n";
        for (n, f) in &methods {
            let set = load_tracks(&p, f)?;
            let v = color_consistency(&set, norm)?;
            let _ = writeln!(csv, "{n},{},{},{}", v[0], v[1], v[2]);
            out.note(&format!("consistency.{n}"), format!("{},{},{}", v[0], v[1], v[2]));
        }
        out.write("color_consistency.csv", csv.as_bytes())?;
        did_something = true;
    }

    if !did_something {
        return Err(CliError::config(
            "nothing to evaluate: set `reference`, `patches`, `tracks` or range maps",
        ));
    }
    out.finish()
}
