//! On-disk layout of a trained generative classifier: `manifest.txt` plus
//! one `class-<y>.bin` per class holding the encoder snapshot followed by the
//! decoder snapshot.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};
use crate::netcore::snapshot::{parse_snapshot, parse_snapshot_prefix, write_snapshot};
use crate::numerics::Rng;

use super::classifier::{GcConfig, GenerativeClassifier, PriorMode};
use super::vae::{ReconScale, VaeModel};

const MANIFEST: &str = "manifest.txt";
const FORMAT_TAG: &str = "genclass-vae-set-1";

fn class_file(y: usize) -> String {
    format!("class-{y}.bin")
}

pub fn save_classifier(gc: &GenerativeClassifier, dir: &Path) -> Result<()> {
    fs::create_dir_all(dir)?;
    let cfg = gc.config();
    let classes = gc.classes();
    let mut m = String::new();
    m.push_str(&format!("format = {FORMAT_TAG}\n"));
    m.push_str(&format!("input_dim = {}\n", cfg.input_dim));
    m.push_str(&format!("latent_dim = {}\n", cfg.latent_dim));
    m.push_str(&format!("hidden = {}\n", join(&cfg.hidden)));
    m.push_str(&format!("num_classes = {}\n", cfg.num_classes));
    m.push_str(&format!("prior_mode = {}\n", cfg.prior_mode.as_str()));
    m.push_str(&format!("seed = {}\n", cfg.seed));
    m.push_str(&format!("lr = {}\n", cfg.lr));
    m.push_str(&format!("sub_batch = {}\n", cfg.sub_batch));
    m.push_str(&format!("recon_scale = {}\n", cfg.recon_scale.as_str()));
    m.push_str(&format!("classes = {}\n", join(&classes)));
    for (y, n) in gc.counts() {
        m.push_str(&format!("count.{y} = {n}\n"));
    }
    for &y in &classes {
        let model = gc.model(y).expect("listed class");
        let mut f = fs::File::create(dir.join(class_file(y)))?;
        write_snapshot(&model.encoder, &mut f)?;
        write_snapshot(&model.decoder, &mut f)?;
        f.flush()?;
    }
    fs::write(dir.join(MANIFEST), m)?;
    Ok(())
}

pub fn load_classifier(dir: &Path) -> Result<GenerativeClassifier> {
    let text = fs::read_to_string(dir.join(MANIFEST))
        .map_err(|e| Error::Manifest(format!("cannot read {}: {e}", dir.join(MANIFEST).display())))?;
    let mut kv = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Manifest(format!("line {}: expected `key = value`", i + 1)))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| kv.get(k).ok_or_else(|| Error::Manifest(format!("missing key `{k}`")));
    if get("format")? != FORMAT_TAG {
        return Err(Error::Manifest(format!("unsupported format `{}`", get("format")?)));
    }
    let config = GcConfig {
        input_dim: parse_num(get("input_dim")?)?,
        hidden: parse_list(get("hidden")?)?,
        latent_dim: parse_num(get("latent_dim")?)?,
        num_classes: parse_num(get("num_classes")?)?,
        prior_mode: PriorMode::parse(get("prior_mode")?).map_err(|e| Error::Manifest(e.to_string()))?,
        seed: parse_num(get("seed")?)? as u64,
        lr: get("lr")?
            .parse()
            .map_err(|_| Error::Manifest("`lr` is not a number".into()))?,
        sub_batch: parse_num(get("sub_batch")?)?,
        recon_scale: ReconScale::parse(get("recon_scale")?).map_err(|e| Error::Manifest(e.to_string()))?,
    };
    let classes = parse_list(get("classes")?)?;
    let mut models = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for y in classes {
        let path = dir.join(class_file(y));
        let bytes =
            fs::read(&path).map_err(|e| Error::Manifest(format!("missing model for class {y} ({}): {e}", path.display())))?;
        let (encoder, used) = parse_snapshot_prefix(&bytes)?;
        let decoder = parse_snapshot(&bytes[used..])?;
        let model = VaeModel::from_parts(encoder, decoder)?;
        if model.latent_dim() != config.latent_dim || model.input_dim() != config.input_dim {
            return Err(Error::Manifest(format!("class {y} model does not match manifest dimensions")));
        }
        models.insert(y, model);
        if let Some(n) = kv.get(&format!("count.{y}")) {
            counts.insert(y, parse_num(n)? as u64);
        }
    }
    Ok(GenerativeClassifier::from_parts(config, models, counts))
}

fn join(v: &[usize]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_num(s: &str) -> Result<usize> {
    s.parse().map_err(|_| Error::Manifest(format!("`{s}` is not a count")))
}

fn parse_list(s: &str) -> Result<Vec<usize>> {
    if s.is_empty() {
        return Ok(Vec::new());
    }
    s.split(',').map(|p| parse_num(p.trim())).collect()
}

/// 8-bit greyscale image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GreyImage {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<u8>,
}

impl GreyImage {
    /// Binary PGM (`P5`, maxval 255).
    pub fn to_pgm(&self) -> Vec<u8> {
        let mut out = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.pixels);
        out
    }
}

/// One row per requested class, `per_row` prior samples per row. Inputs
/// must be square images with values in `[0, 1]`.
pub fn sample_grid(gc: &GenerativeClassifier, classes: &[usize], per_row: usize, seed: u64) -> Result<GreyImage> {
    let d = gc.config().input_dim;
    let side = (d as f64).sqrt().round() as usize;
    if side * side != d {
        return Err(Error::Usage(format!("inputs of dimension {d} are not square images")));
    }
    let width = side * per_row;
    let height = side * classes.len();
    let mut pixels = vec![0u8; width * height];
    for (row, &y) in classes.iter().enumerate() {
        let model = gc
            .model(y)
            .ok_or_else(|| Error::Manifest(format!("no model for class {y}")))?;
        let mut rng = Rng::named(seed, "sample-grid", &[y as u64]);
        let samples = model.sample_batch(per_row, &mut rng)?;
        for col in 0..per_row {
            let img = samples.row(col);
            for r in 0..side {
                for c in 0..side {
                    let v = (img[r * side + c] * 255.0).round() as u8;
                    pixels[(row * side + r) * width + col * side + c] = v;
                }
            }
        }
    }
    Ok(GreyImage { width, height, pixels })
}
