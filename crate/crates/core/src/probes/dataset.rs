use serde::{Deserialize, Serialize};

use super::ProbeConfig;
use crate::error::{Error, Result};
use crate::normalize::Product;
use crate::rng::RngState;
use crate::tensor::Tensor;
use crate::train::Sample;
use crate::vae::Vae;

/// Rows of latent-mean features paired with one normalized product value.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ProbeDataset {
    pub dim: usize,
    /// Row-major `[len, dim]`.
    pub features: Vec<f32>,
    pub targets: Vec<f32>,
    /// `(tile id, y, x)` of each row on the latent grid.
    pub provenance: Vec<(String, usize, usize)>,
}

impl ProbeDataset {
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    fn push(&mut self, feat: &[f32], target: f32, prov: (String, usize, usize)) {
        self.features.extend_from_slice(feat);
        self.targets.push(target);
        self.provenance.push(prov);
    }

    /// Build from in-memory rows, e.g. for planted-signal checks.
    pub fn from_rows(dim: usize, features: Vec<f32>, targets: Vec<f32>) -> Result<Self> {
        if dim == 0 || features.len() != dim * targets.len() {
            return Err(Error::Data(format!("{} features do not form {} rows of {dim}", features.len(), targets.len())));
        }
        let provenance = (0..targets.len()).map(|i| (String::new(), 0, i)).collect();
        Ok(Self {
            dim,
            features,
            targets,
            provenance,
        })
    }
}

/// Latent means `[c, h, w]` of one tile plus its normalized target maps.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedTile {
    pub id: String,
    pub mu: Tensor,
    pub targets: Vec<(Product, Vec<f32>)>,
}

/// Eval-mode encoding of every sample, in order.
pub fn encode_samples(vae: &Vae, samples: &[Sample]) -> Result<Vec<EncodedTile>> {
    let cfg = vae.config();
    let shape = [cfg.in_channels, cfg.tile, cfg.tile];
    let mut out = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(8) {
        let xs: Vec<&[f32]> = chunk.iter().map(|s| s.x.as_slice()).collect();
        let mu = vae.encode(&Tensor::stack(&xs, &shape)?)?.mu;
        for (i, s) in chunk.iter().enumerate() {
            out.push(EncodedTile {
                id: s.id.clone(),
                mu: mu.batch_item(i),
                targets: s.targets.clone(),
            });
        }
    }
    Ok(out)
}

/// Sample up to `pixels_per_file` valid positions per tile without
/// replacement, shuffle all rows and split them by `train_fraction`.
pub fn dataset_from_latents(
    tiles: &[EncodedTile],
    product: Product,
    cfg: &ProbeConfig,
    rng: &mut RngState,
) -> Result<(ProbeDataset, ProbeDataset)> {
    let Some(first) = tiles.first() else {
        return Err(Error::Data("no tiles to build a probe dataset from".into()));
    };
    let [c, h, w] = match *first.mu.shape() {
        [_, c, h, w] | [c, h, w] => [c, h, w],
        _ => return Err(Error::Data("latent must be [c, h, w]".into())),
    };
    let plane = h * w;
    let mut all = ProbeDataset {
        dim: c,
        ..ProbeDataset::default()
    };
    let mut feat = vec![0f32; c];
    for t in tiles {
        if t.mu.numel() != c * plane {
            return Err(Error::Data(format!("latent of {} has {} values, expected {}", t.id, t.mu.numel(), c * plane)));
        }
        let target = t
            .targets
            .iter()
            .find(|(p, _)| *p == product)
            .map(|(_, v)| v)
            .ok_or_else(|| Error::Data(format!("tile {} has no {product} target", t.id)))?;
        if target.len() != plane {
            return Err(Error::Data(format!(
                "pooled {product} map of {} has {} cells but the latent grid is {h}x{w}",
                t.id,
                target.len()
            )));
        }
        let mut valid: Vec<usize> = (0..plane).filter(|&p| !target[p].is_nan()).collect();
        rng.shuffle(&mut valid);
        valid.truncate(cfg.pixels_per_file);
        valid.sort_unstable();
        for p in valid {
            for (k, f) in feat.iter_mut().enumerate() {
                *f = t.mu.data()[k * plane + p];
            }
            all.push(&feat, target[p], (t.id.clone(), p / w, p % w));
        }
    }
    if all.is_empty() {
        return Err(Error::Data(format!("no valid {product} pixels in any tile")));
    }
    let mut order: Vec<usize> = (0..all.len()).collect();
    rng.shuffle(&mut order);
    let n_train = ((all.len() as f64) * cfg.train_fraction).round() as usize;
    let mut train = ProbeDataset { dim: c, ..ProbeDataset::default() };
    let mut test = ProbeDataset { dim: c, ..ProbeDataset::default() };
    for (rank, &i) in order.iter().enumerate() {
        let dst = if rank < n_train { &mut train } else { &mut test };
        dst.push(all.row(i), all.targets[i], all.provenance[i].clone());
    }
    Ok((train, test))
}

pub fn build_probe_dataset(
    vae: &Vae,
    samples: &[Sample],
    product: Product,
    cfg: &ProbeConfig,
    rng: &mut RngState,
) -> Result<(ProbeDataset, ProbeDataset)> {
    dataset_from_latents(&encode_samples(vae, samples)?, product, cfg, rng)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tile(id: &str, valid: usize) -> EncodedTile {
        let mu = Tensor::from_fn([2, 4, 4], |i| i as f32);
        let map = (0..16).map(|i| if i < valid { i as f32 } else { f32::NAN }).collect();
        EncodedTile {
            id: id.into(),
            mu,
            targets: vec![(Product::Cloud, map)],
        }
    }

    #[test]
    fn exhausts_small_files() {
        let (tr, te) = dataset_from_latents(&[tile("a", 5)], Product::Cloud, &ProbeConfig::linear(), &mut RngState::new(0)).unwrap();
        assert_eq!(tr.len() + te.len(), 5);
        assert_eq!(tr.len(), 4);
        assert!(tr.targets.iter().chain(&te.targets).all(|v| !v.is_nan()));
    }

    #[test]
    fn caps_pixels_per_file_and_keeps_alignment() {
        let cfg = ProbeConfig {
            pixels_per_file: 3,
            ..ProbeConfig::linear()
        };
        let tiles = [tile("a", 16), tile("b", 16)];
        let (tr, te) = dataset_from_latents(&tiles, Product::Cloud, &cfg, &mut RngState::new(1)).unwrap();
        assert_eq!(tr.len() + te.len(), 6);
        for ds in [&tr, &te] {
            for i in 0..ds.len() {
                let (_, y, x) = &ds.provenance[i];
                let p = y * 4 + x;
                assert_eq!(ds.row(i), &[p as f32, (16 + p) as f32]);
                assert_eq!(ds.targets[i], p as f32);
            }
        }
    }

    #[test]
    fn all_invalid_is_data_error() {
        let r = dataset_from_latents(&[tile("a", 0)], Product::Cloud, &ProbeConfig::linear(), &mut RngState::new(0));
        assert!(matches!(r, Err(Error::Data(_))));
    }
}
