use std::io::Write;
use std::path::{Path, PathBuf};

use hsnc_core::codec::{
    compress_batch, compression_ratio, decompress, eval_reconstruction, read_latent, write_latent, CodecOptions, LatentCode, LatentContent,
    LatentDtype,
};
use hsnc_core::dataio::{id_from_path, read_tile, split_files, write_tile, DirSource, HyperspectralTile, SynthSource, TileSource, TILE_EXT};
use hsnc_core::normalize::{Product, RadianceStats};
use hsnc_core::probes::{evaluate_probe_suite, ProbeKind};
use hsnc_core::train::data::{fit_normalization, load_sample};
use hsnc_core::train::{train_vae, Checkpoint, DataConfig, Normalization, RunOptions, TrainConfig};
use hsnc_core::vae::{Vae, VaeConfig};
use hsnc_core::{Error, Result};
use serde::Serialize;
use serde_json::Value;

use crate::args::*;
use crate::config::*;
use crate::manifest::{hash_file, InputFile};
use crate::report;

pub const LATENT_EXT: &str = "hsl";
pub const STATS_FILE: &str = "stats.json";
pub const NORMALIZATION_FILE: &str = "normalization.json";

/// What a finished command recorded, minus timing and argv.
#[derive(Debug, Default)]
pub struct Outcome {
    pub command: &'static str,
    /// Where the manifest goes.
    pub dir: PathBuf,
    pub config: Value,
    pub inputs: Vec<InputFile>,
    pub input_ids: Vec<String>,
    pub outputs: Vec<PathBuf>,
    pub seed: Option<u64>,
}

pub enum Ran {
    Printed,
    Done(Outcome),
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Usage(format!("missing required flag {flag}")))
}

/// Print `cfg` and stop when `--print-config` was given.
fn printed<T: Serialize>(common: &Common, cfg: &T) -> Result<bool> {
    if common.print_config {
        let _ = writeln!(std::io::stdout(), "{}", serde_json::to_string_pretty(cfg)?);
    }
    Ok(common.print_config)
}

fn outcome<T: Serialize>(command: &'static str, dir: &Path, cfg: &T) -> Result<Outcome> {
    Ok(Outcome {
        command,
        dir: dir.to_path_buf(),
        config: serde_json::to_value(cfg)?,
        ..Outcome::default()
    })
}

fn mkdir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn stem(s: &str) -> String {
    let p = Path::new(s.trim());
    if p.extension().is_some() {
        id_from_path(p)
    } else {
        s.trim().to_string()
    }
}

fn listed_ids(list: &FileList) -> Result<Option<Vec<String>>> {
    if let Some(path) = &list.files_from {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        return Ok(Some(text.lines().filter(|l| !l.trim().is_empty()).map(stem).collect()));
    }
    if list.files.is_empty() {
        return Ok(None);
    }
    Ok(Some(list.files.iter().map(|s| stem(s)).collect()))
}

/// Accepts either a normalization file or bare radiance stats.
fn load_norm(path: &Path) -> Result<Normalization> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    if let Ok(n) = serde_json::from_str::<Normalization>(&text) {
        n.stats.validate()?;
        return Ok(n);
    }
    Ok(Normalization {
        stats: RadianceStats::from_json(&text)?,
        l2: Vec::new(),
    })
}

fn files_with_ext(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let p = e.map_err(|e| Error::io(dir, e))?.path();
        if p.extension().is_some_and(|x| x == ext) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

pub fn synth(a: &SynthArgs) -> Result<Ran> {
    let mut cfg = layered(SynthCommand::default(), a.common.config.as_deref())?;
    if let Some(v) = a.seed {
        cfg.seed = v;
    }
    if let Some(v) = a.count {
        cfg.count = v;
    }
    if let Some(v) = a.channels {
        cfg.synth.channels = v;
    }
    if let Some(v) = a.tile {
        cfg.synth.tile = v;
    }
    if printed(&a.common, &cfg)? {
        return Ok(Ran::Printed);
    }
    let out = need(a.common.out.as_deref(), "--out")?;
    let src = SynthSource::new(cfg.synth.clone(), cfg.count, cfg.seed)?;
    let mut o = outcome("synth", out, &cfg)?;
    o.outputs = src.materialize(out)?;
    o.seed = Some(cfg.seed);
    Ok(Ran::Done(o))
}

pub fn stats(a: &StatsArgs) -> Result<Ran> {
    let mut cfg = layered(StatsCommand::default(), a.common.config.as_deref())?;
    if let Some(p) = &a.products {
        cfg.products = parse_list(p)?;
    }
    if let Some(v) = a.pool_factor {
        cfg.pool_factor = v;
    }
    if printed(&a.common, &cfg)? {
        return Ok(Ran::Printed);
    }
    let data = need(a.data.as_deref(), "--data")?;
    let out = need(a.common.out.as_deref(), "--out")?;
    let ids = match listed_ids(&a.list)? {
        Some(ids) => ids,
        None => split_files(DirSource::scan(data)?.ids(), cfg.train_pct)?.train_ids,
    };
    let src = DirSource::with_ids(data, ids.clone());
    let norm = fit_normalization(&src, &ids, &cfg.products, cfg.pool_factor)?;
    mkdir(out)?;
    let mut o = outcome("stats", out, &cfg)?;
    let sp = out.join(STATS_FILE);
    norm.stats.save(&sp)?;
    let np = out.join(NORMALIZATION_FILE);
    std::fs::write(&np, serde_json::to_string_pretty(&norm)?).map_err(|e| Error::io(&np, e))?;
    o.outputs = vec![sp, np];
    o.input_ids = ids;
    Ok(Ran::Done(o))
}

pub fn train(a: &TrainArgs, supervised: bool) -> Result<Ran> {
    let (vae, train) = match a.preset {
        Preset::Full => (VaeConfig::full(), TrainConfig::full()),
        Preset::Desk => (VaeConfig::desk(), TrainConfig::desk()),
        Preset::Tiny => (VaeConfig::tiny(), TrainConfig::desk()),
    };
    let base = TrainCommand {
        vae,
        train,
        data: DataConfig::default(),
    };
    let mut cfg = layered(base, a.common.config.as_deref())?;
    cfg.vae.supervised = supervised;
    if let Some(v) = a.steps {
        cfg.train.steps = v;
    }
    if let Some(v) = a.batch {
        cfg.train.batch = v;
    }
    if let Some(v) = a.lr {
        cfg.train.lr = v;
    }
    if let Some(v) = a.seed {
        cfg.train.seed = v;
    }
    if printed(&a.common, &cfg)? {
        return Ok(Ran::Printed);
    }
    let data = need(a.data.as_deref(), "--data")?;
    let out = need(a.common.out.as_deref(), "--out")?;
    let src = DirSource::scan(data)?;
    let mut o = outcome(if supervised { "train-supervised" } else { "train-vae" }, out, &cfg)?;
    let norm = match &a.stats {
        Some(p) => {
            o.inputs.push(hash_file(p)?);
            Some(load_norm(p)?)
        }
        None => None,
    };
    if let Some(p) = &a.resume {
        o.inputs.push(hash_file(p)?);
    }
    let opts = RunOptions {
        norm,
        resume_from: a.resume.clone(),
    };
    let summary = train_vae(&cfg.vae, &cfg.train, &cfg.data, &src, out, &opts)?;
    o.outputs = vec![out.join(hsnc_core::train::CONFIG_FILE), out.join(hsnc_core::train::METRICS_FILE)];
    o.outputs.extend(summary.checkpoints);
    o.input_ids = src.ids().to_vec();
    o.seed = Some(cfg.train.seed);
    Ok(Ran::Done(o))
}

struct Model {
    vae: Vae,
    norm: Normalization,
    data: DataConfig,
}

fn load_checkpoint(codec: &CodecArgs, o: &mut Outcome) -> Result<Model> {
    let path = need(codec.model.as_deref(), "--model")?;
    o.inputs.push(hash_file(path)?);
    let ck = Checkpoint::load(path)?;
    let data = ck.data.clone().unwrap_or_default();
    let vae = Vae::from_params(ck.vae, ck.params)?;
    let norm = match (&codec.stats, ck.norm) {
        (Some(p), _) => {
            o.inputs.push(hash_file(p)?);
            load_norm(p)?
        }
        (None, Some(n)) => n,
        (None, None) => return Err(Error::Usage("checkpoint carries no statistics; pass --stats".into())),
    };
    Ok(Model { vae, norm, data })
}

fn codec_config(a: &CodecArgs, common: &Common) -> Result<CodecCommand> {
    let mut cfg = layered(CodecCommand::default(), common.config.as_deref())?;
    if let Some(d) = a.dtype {
        cfg.dtype = match d {
            DtypeArg::F32 => LatentDtype::F32,
            DtypeArg::F16 => LatentDtype::F16,
        };
    }
    if let Some(c) = a.content {
        cfg.content = match c {
            ContentArg::Mean => LatentContent::MeanOnly,
            ContentArg::MeanLogvar => LatentContent::MeanLogvar,
        };
    }
    Ok(cfg)
}

/// Inputs under `input` (a file or a directory) and the matching output
/// paths under `out`, plus the directory that receives the manifest.
fn io_pairs(input: &Path, out: &Path, in_ext: &str, out_ext: &str) -> Result<(Vec<(PathBuf, PathBuf)>, PathBuf)> {
    if input.is_dir() {
        mkdir(out)?;
        let pairs = files_with_ext(input, in_ext)?
            .into_iter()
            .map(|p| {
                let o = out.join(format!("{}.{out_ext}", id_from_path(&p)));
                (p, o)
            })
            .collect();
        Ok((pairs, out.to_path_buf()))
    } else {
        let dir = out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new(".")).to_path_buf();
        mkdir(&dir)?;
        Ok((vec![(input.to_path_buf(), out.to_path_buf())], dir))
    }
}

pub fn encode(a: &EncodeArgs) -> Result<Ran> {
    let cfg = codec_config(&a.codec, &a.common)?;
    if printed(&a.common, &cfg)? {
        return Ok(Ran::Printed);
    }
    let input = need(a.input.as_deref(), "--in")?;
    let out = need(a.common.out.as_deref(), "--out")?;
    let (pairs, dir) = io_pairs(input, out, TILE_EXT, LATENT_EXT)?;
    let mut o = outcome("encode", &dir, &cfg)?;
    let m = load_checkpoint(&a.codec, &mut o)?;
    let tiles = pairs.iter().map(|(p, _)| read_tile(p)).collect::<Result<Vec<_>>>()?;
    let opts = CodecOptions {
        dtype: cfg.dtype,
        content: cfg.content,
    };
    let codes = compress_batch(&tiles, &m.norm.stats, &m.vae, opts)?;
    for (code, (_, path)) in codes.iter().zip(&pairs) {
        write_latent(code, path)?;
        o.outputs.push(path.clone());
    }
    o.input_ids = tiles.into_iter().map(|t| t.id).collect();
    Ok(Ran::Done(o))
}

pub fn decode(a: &DecodeArgs) -> Result<Ran> {
    let cfg = codec_config(&a.codec, &a.common)?;
    if printed(&a.common, &cfg)? {
        return Ok(Ran::Printed);
    }
    let input = need(a.input.as_deref(), "--in")?;
    let out = need(a.common.out.as_deref(), "--out")?;
    let (pairs, dir) = io_pairs(input, out, LATENT_EXT, TILE_EXT)?;
    let mut o = outcome("decode", &dir, &cfg)?;
    let m = load_checkpoint(&a.codec, &mut o)?;
    for (src, dst) in &pairs {
        let code = read_latent(src)?;
        write_tile(&decompress(&code, &m.norm.stats, &m.vae)?, dst)?;
        o.input_ids.push(code.id);
        o.outputs.push(dst.clone());
    }
    Ok(Ran::Done(o))
}

pub fn eval_recon(a: &EvalReconArgs) -> Result<Ran> {
    let cfg = codec_config(&a.codec, &a.common)?;
    if printed(&a.common, &cfg)? {
        return Ok(Ran::Printed);
    }
    let data = need(a.data.as_deref(), "--data")?;
    let out = need(a.common.out.as_deref(), "--out")?;
    let mut o = outcome("eval-recon", out, &cfg)?;
    let m = load_checkpoint(&a.codec, &mut o)?;
    let ids = match listed_ids(&a.list)? {
        Some(ids) => ids,
        None => DirSource::scan(data)?.ids().to_vec(),
    };
    let src = DirSource::with_ids(data, ids.clone());
    let orig = ids.iter().map(|id| src.load_tile(id)).collect::<Result<Vec<HyperspectralTile>>>()?;
    let opts = CodecOptions {
        dtype: cfg.dtype,
        content: cfg.content,
    };
    let codes: Vec<LatentCode> = compress_batch(&orig, &m.norm.stats, &m.vae, opts)?;
    let recon = codes
        .iter()
        .map(|c| decompress(c, &m.norm.stats, &m.vae))
        .collect::<Result<Vec<_>>>()?;
    let mut report = eval_reconstruction(&orig, &recon, &m.norm.stats)?;
    if let (Some(t), Some(c)) = (orig.first(), codes.first()) {
        report.compression_ratio = Some(compression_ratio([t.channels, t.height, t.width], c).elements);
    }
    o.outputs = report.write(out)?;
    o.input_ids = ids;
    Ok(Ran::Done(o))
}

pub fn train_probes(a: &ProbeArgs) -> Result<Ran> {
    let mut cfg = layered(ProbeCommand::default(), a.common.config.as_deref())?;
    if let Some(p) = &a.products {
        cfg.products = parse_list(p)?;
    }
    if let Some(k) = &a.kinds {
        cfg.kinds = parse_list::<ProbeKind>(k)?;
    }
    for pc in [&mut cfg.linear, &mut cfg.mlp] {
        if let Some(v) = a.max_epochs {
            pc.max_epochs = v;
            pc.patience = pc.patience.min(v.saturating_sub(1));
        }
        if let Some(v) = a.seed {
            pc.seed = v;
        }
    }
    if printed(&a.common, &cfg)? {
        return Ok(Ran::Printed);
    }
    let data = need(a.data.as_deref(), "--data")?;
    let out = need(a.common.out.as_deref(), "--out")?;
    let mut o = outcome("train-probes", out, &cfg)?;
    let codec = CodecArgs {
        model: a.model.clone(),
        stats: a.stats.clone(),
        dtype: None,
        content: None,
    };
    let mut m = load_checkpoint(&codec, &mut o)?;
    let ids = match listed_ids(&a.list)? {
        Some(ids) => ids,
        None => DirSource::scan(data)?.ids().to_vec(),
    };
    let missing: Vec<Product> = cfg.products.iter().copied().filter(|&p| m.norm.normalizer(p).is_err()).collect();
    if !missing.is_empty() {
        let train_ids = m.norm.stats.source_ids.clone();
        if train_ids.is_empty() {
            return Err(Error::Data("no L2 normalizers available; pass --stats from `hsnc stats`".into()));
        }
        log::info!("fitting normalizers for {missing:?} on {} training tiles", train_ids.len());
        let fitted = fit_normalization(&DirSource::with_ids(data, train_ids.clone()), &train_ids, &missing, m.data.pool_factor)?;
        m.norm.l2.extend(fitted.l2);
    }
    let src = DirSource::with_ids(data, ids.clone());
    let samples = ids
        .iter()
        .map(|id| load_sample(&src, id, &m.norm, &cfg.products, m.data.pool_factor))
        .collect::<Result<Vec<_>>>()?;
    let probe_cfgs: Vec<_> = cfg
        .kinds
        .iter()
        .map(|k| match k {
            ProbeKind::Linear => cfg.linear.clone(),
            ProbeKind::Mlp => cfg.mlp.clone(),
        })
        .collect();
    let report = evaluate_probe_suite(&m.vae, &samples, &probe_cfgs, &cfg.products)?;
    o.outputs = report.write(out)?;
    o.input_ids = ids;
    o.seed = Some(cfg.linear.seed);
    Ok(Ran::Done(o))
}

pub fn report(a: &ReportArgs) -> Result<Ran> {
    let cfg = layered(ReportCommand::default(), a.common.config.as_deref())?;
    if printed(&a.common, &cfg)? {
        return Ok(Ran::Printed);
    }
    let out = need(a.common.out.as_deref(), "--out")?;
    if a.runs.is_empty() {
        return Err(Error::Usage("report needs at least one --runs directory".into()));
    }
    let mut o = outcome("report", out, &cfg)?;
    o.outputs = report::merge(&a.runs, out)?;
    o.input_ids = a.runs.iter().map(|r| report::run_name(r)).collect();
    Ok(Ran::Done(o))
}
