use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the relational caption model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_enc_layers: usize,
    pub n_dec_layers: usize,
    pub n_heads: usize,
    pub d_ff: usize,
    pub vocab_size: usize,
    pub max_seq_len: usize,
    /// Sinusoidal features per displacement component.
    pub geo_embed_dim: usize,
    /// Dimension of region appearance vectors.
    pub d_in: usize,
}

impl ModelConfig {
    /// Small configuration that trains on one CPU core in seconds.
    pub fn desk(vocab_size: usize) -> Self {
        ModelConfig {
            d_model: 32,
            n_enc_layers: 2,
            n_dec_layers: 2,
            n_heads: 2,
            d_ff: 64,
            vocab_size,
            max_seq_len: 32,
            geo_embed_dim: 8,
            d_in: 16,
        }
    }

    /// Full-size configuration: six encoder and decoder layers, eight heads,
    /// 512-wide model over 2048-d region features.
    pub fn paper() -> Self {
        ModelConfig {
            d_model: 512,
            n_enc_layers: 6,
            n_dec_layers: 6,
            n_heads: 8,
            d_ff: 2048,
            vocab_size: 9486,
            max_seq_len: 20,
            geo_embed_dim: 64,
            d_in: 2048,
        }
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("d_model", self.d_model),
            ("n_heads", self.n_heads),
            ("d_ff", self.d_ff),
            ("vocab_size", self.vocab_size),
            ("max_seq_len", self.max_seq_len),
            ("geo_embed_dim", self.geo_embed_dim),
            ("d_in", self.d_in),
        ];
        if let Some((name, _)) = positive.iter().find(|(_, v)| *v == 0) {
            return Err(Error::InvalidConfig(format!("{name} must be positive")));
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return Err(Error::InvalidConfig(format!(
                "d_model {} is not divisible by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if !self.geo_embed_dim.is_multiple_of(2) {
            return Err(Error::InvalidConfig("geo_embed_dim must be even".into()));
        }
        Ok(())
    }
}

/// A detected object: box center, size and appearance features.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub x: f64,
    pub y: f64,
    pub w: f64,
    pub h: f64,
    pub appearance: Vec<f64>,
}

impl Region {
    pub fn new(x: f64, y: f64, w: f64, h: f64, appearance: Vec<f64>) -> Result<Self> {
        if !(w > 0.0 && h > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "box size must be positive, got {w}x{h}"
            )));
        }
        Ok(Region {
            x,
            y,
            w,
            h,
            appearance,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSet {
    regions: Vec<Region>,
}

impl RegionSet {
    pub fn new(regions: Vec<Region>) -> Result<Self> {
        let Some(first) = regions.first() else {
            return Err(Error::InvalidConfig(
                "a region set needs at least one region".into(),
            ));
        };
        let dim = first.appearance.len();
        if regions.iter().any(|r| r.appearance.len() != dim) {
            return Err(Error::Shape(
                "appearance dimensions differ within a region set".into(),
            ));
        }
        Ok(RegionSet { regions })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn appearance_dim(&self) -> usize {
        self.regions[0].appearance.len()
    }

    /// Reorders regions: output position i holds input region `order[i]`.
    pub fn permuted(&self, order: &[usize]) -> RegionSet {
        RegionSet {
            regions: order.iter().map(|&i| self.regions[i].clone()).collect(),
        }
    }
}
