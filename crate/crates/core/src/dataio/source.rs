use std::path::{Path, PathBuf};

use super::l2::{read_l2, write_l2, L2ProductSet};
use super::synth::{synth_generate, SynthConfig};
use super::tile::{read_tile, write_tile, HyperspectralTile};
use crate::error::{Error, Result};
use crate::rng::RngState;

pub const TILE_EXT: &str = "tile";
pub const L2_EXT: &str = "l2";

/// Somewhere tiles and their Level-2 companions can be loaded by id.
pub trait TileSource: Send + Sync {
    fn ids(&self) -> &[String];

    fn load_tile(&self, id: &str) -> Result<HyperspectralTile>;

    /// `Ok(None)` when the tile has no Level-2 companion.
    fn load_l2(&self, id: &str) -> Result<Option<L2ProductSet>>;
}

/// `<dir>/<id>.tile` with optional `<dir>/<id>.l2`.
#[derive(Debug, Clone)]
pub struct DirSource {
    dir: PathBuf,
    ids: Vec<String>,
}

impl DirSource {
    /// Every `*.tile` in `dir`, ids sorted.
    pub fn scan(dir: &Path) -> Result<Self> {
        let mut ids = Vec::new();
        for entry in std::fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.extension().is_some_and(|e| e == TILE_EXT) {
                if let Some(stem) = path.file_stem() {
                    ids.push(stem.to_string_lossy().into_owned());
                }
            }
        }
        ids.sort();
        Ok(Self { dir: dir.to_path_buf(), ids })
    }

    pub fn with_ids(dir: &Path, ids: Vec<String>) -> Self {
        Self { dir: dir.to_path_buf(), ids }
    }

    pub fn tile_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.{TILE_EXT}"))
    }

    pub fn l2_path(&self, id: &str) -> PathBuf {
        self.dir.join(format!("{id}.{L2_EXT}"))
    }
}

impl TileSource for DirSource {
    fn ids(&self) -> &[String] {
        &self.ids
    }

    fn load_tile(&self, id: &str) -> Result<HyperspectralTile> {
        read_tile(&self.tile_path(id))
    }

    fn load_l2(&self, id: &str) -> Result<Option<L2ProductSet>> {
        let p = self.l2_path(id);
        if p.exists() {
            read_l2(&p).map(Some)
        } else {
            Ok(None)
        }
    }
}

/// Generates tile `i` on demand from `RngState::new(seed).split(i)`.
#[derive(Debug, Clone)]
pub struct SynthSource {
    cfg: SynthConfig,
    seed: u64,
    ids: Vec<String>,
}

impl SynthSource {
    pub fn new(cfg: SynthConfig, count: usize, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let ids = (0..count).map(|i| synth_id(seed, i)).collect();
        Ok(Self { cfg, seed, ids })
    }

    pub fn config(&self) -> &SynthConfig {
        &self.cfg
    }

    fn index(&self, id: &str) -> Result<usize> {
        let prefix = format!("syn{}_", self.seed);
        id.strip_prefix(&prefix)
            .and_then(|s| s.parse::<usize>().ok())
            .filter(|&i| i < self.ids.len())
            .ok_or_else(|| Error::Data(format!("'{id}' is not a tile of this synthetic source")))
    }

    pub fn generate(&self, id: &str) -> Result<(HyperspectralTile, L2ProductSet)> {
        let i = self.index(id)?;
        synth_generate(id, &self.cfg, &mut RngState::new(self.seed).split(i as u64))
    }

    /// Write every tile and its products into `dir`.
    pub fn materialize(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let out = DirSource::with_ids(dir, Vec::new());
        let mut written = Vec::with_capacity(2 * self.ids.len());
        for id in &self.ids {
            let (t, l2) = self.generate(id)?;
            let (tp, lp) = (out.tile_path(id), out.l2_path(id));
            write_tile(&t, &tp)?;
            write_l2(&l2, &lp)?;
            written.push(tp);
            written.push(lp);
        }
        Ok(written)
    }
}

pub fn synth_id(seed: u64, index: usize) -> String {
    format!("syn{seed}_{index:05}")
}

impl TileSource for SynthSource {
    fn ids(&self) -> &[String] {
        &self.ids
    }

    fn load_tile(&self, id: &str) -> Result<HyperspectralTile> {
        self.generate(id).map(|(t, _)| t)
    }

    fn load_l2(&self, id: &str) -> Result<Option<L2ProductSet>> {
        self.generate(id).map(|(_, l)| Some(l))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn materialized_dir_matches_on_the_fly() {
        let cfg = SynthConfig {
            channels: 6,
            tile: 4,
            ..SynthConfig::default()
        };
        let src = SynthSource::new(cfg, 3, 42).unwrap();
        let dir = tempfile::tempdir().unwrap();
        src.materialize(dir.path()).unwrap();
        let d = DirSource::scan(dir.path()).unwrap();
        assert_eq!(d.ids(), src.ids());
        for id in src.ids() {
            assert_eq!(d.load_tile(id).unwrap(), src.load_tile(id).unwrap());
            assert_eq!(d.load_l2(id).unwrap().unwrap().to_bytes(), src.load_l2(id).unwrap().unwrap().to_bytes());
        }
        assert!(src.load_tile("syn42_00009").is_err());
    }
}
