use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::dataio::{HyperspectralTile, L2ProductSet, TileSource, TileSpace};
use crate::error::{Error, Result};
use crate::normalize::{
    pool_l2, transform_l2, transform_radiance_slice, valid_values, Direction, L2Normalizer, Product, RadianceStats,
    StatsAccumulator,
};
use crate::tensor::Tensor;

/// Radiance statistics plus per-product L2 normalizers fitted on one split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub stats: RadianceStats,
    #[serde(default)]
    pub l2: Vec<L2Normalizer>,
}

impl Normalization {
    pub fn normalizer(&self, product: Product) -> Result<&L2Normalizer> {
        self.l2
            .iter()
            .find(|n| n.product == product.name())
            .ok_or_else(|| Error::Data(format!("no normalizer fitted for {product}")))
    }
}

fn required_l2(source: &dyn TileSource, id: &str) -> Result<L2ProductSet> {
    source.load_l2(id)?.ok_or_else(|| Error::Data(format!("tile {id} has no L2 products")))
}

fn pooled(set: &L2ProductSet, product: Product, factor: usize) -> Result<Vec<f32>> {
    let map = set
        .get(product)
        .ok_or_else(|| Error::Data(format!("tile {} lacks product {product}", set.id)))?;
    pool_l2(&map.data, set.height, set.width, factor)
}

/// Fit radiance statistics over `ids` and, for each of `products`, an L2
/// normalizer over the valid values of the pooled maps.
pub fn fit_normalization(source: &dyn TileSource, ids: &[String], products: &[Product], pool_factor: usize) -> Result<Normalization> {
    if ids.is_empty() {
        return Err(Error::Data("cannot fit normalization on an empty split".into()));
    }
    let mut acc = StatsAccumulator::new();
    let mut values: Vec<Vec<f32>> = vec![Vec::new(); products.len()];
    for id in ids {
        acc.push(&source.load_tile(id)?)?;
        if !products.is_empty() {
            let set = required_l2(source, id)?;
            for (k, &p) in products.iter().enumerate() {
                values[k].extend(valid_values(&pooled(&set, p, pool_factor)?));
            }
        }
    }
    let mut stats = acc.finish()?;
    stats.source_ids = ids.to_vec();
    let l2 = products
        .iter()
        .zip(&values)
        .map(|(&p, v)| L2Normalizer::fit(p.name(), v, p.kind(), p.unit_scale()))
        .collect::<Result<_>>()?;
    Ok(Normalization { stats, l2 })
}

/// One training example in normalized space.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub x: Vec<f32>,
    /// Pooled, normalized L2 maps with NaN marking invalid cells.
    pub targets: Vec<(Product, Vec<f32>)>,
}

pub fn normalize_tile(tile: &HyperspectralTile, stats: &RadianceStats) -> Result<Vec<f32>> {
    if tile.space != TileSpace::Raw {
        return Err(Error::Data(format!("tile {} is not in raw space", tile.id)));
    }
    let mut x = tile.data.clone();
    transform_radiance_slice(&mut x, tile.channels, stats, Direction::Forward)?;
    Ok(x)
}

pub fn load_sample(source: &dyn TileSource, id: &str, norm: &Normalization, products: &[Product], pool_factor: usize) -> Result<Sample> {
    let tile = source.load_tile(id)?;
    let x = normalize_tile(&tile, &norm.stats)?;
    let mut targets = Vec::with_capacity(products.len());
    if !products.is_empty() {
        let set = required_l2(source, id)?;
        for &p in products {
            let y = transform_l2(&pooled(&set, p, pool_factor)?, norm.normalizer(p)?, Direction::Forward)?;
            targets.push((p, y));
        }
    }
    Ok(Sample {
        id: id.to_string(),
        x,
        targets,
    })
}

/// Stack samples into a `[B, C, H, W]` input and `[B, 1, h, w]` targets.
pub fn collate(samples: &[&Sample], item_shape: [usize; 3], target_hw: [usize; 2]) -> Result<(Tensor, Vec<(Product, Tensor)>)> {
    let xs: Vec<&[f32]> = samples.iter().map(|s| s.x.as_slice()).collect();
    let x = Tensor::stack(&xs, &item_shape)?;
    let Some(first) = samples.first() else {
        return Ok((x, Vec::new()));
    };
    let mut targets = Vec::with_capacity(first.targets.len());
    for (k, (p, _)) in first.targets.iter().enumerate() {
        let ys: Vec<&[f32]> = samples.iter().map(|s| s.targets[k].1.as_slice()).collect();
        let y = Tensor::stack(&ys, &[1, target_hw[0], target_hw[1]]).map_err(|_| {
            Error::Data(format!(
                "pooled {p} maps do not match the {}x{} latent grid",
                target_hw[0], target_hw[1]
            ))
        })?;
        targets.push((*p, y));
    }
    Ok((x, targets))
}

/// Resident samples keyed by id, kept in step with a sample buffer.
#[derive(Debug, Default)]
pub struct SampleCache {
    map: HashMap<String, Sample>,
}

impl SampleCache {
    pub fn get(&self, id: &str) -> Result<&Sample> {
        self.map.get(id).ok_or_else(|| Error::Usage(format!("tile {id} is not resident")))
    }

    pub fn insert(&mut self, s: Sample) {
        self.map.insert(s.id.clone(), s);
    }

    pub fn remove(&mut self, id: &str) {
        self.map.remove(id);
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}
