//! Parameter layout, initialization and checkpoints.

use std::io::{Read, Write};

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::ModelConfig;
use super::tape::Mat;

#[derive(Debug, Clone, Copy)]
pub(crate) struct AttentionIdx {
    pub w_q: usize,
    pub w_k: usize,
    pub w_v: usize,
    pub w_o: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FeedForwardIdx {
    pub w1: usize,
    pub b1: usize,
    pub w2: usize,
    pub b2: usize,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct NormIdx {
    pub gain: usize,
    pub bias: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderLayerIdx {
    pub attn: AttentionIdx,
    pub w_g: usize,
    pub norm1: NormIdx,
    pub ffn: FeedForwardIdx,
    pub norm2: NormIdx,
}

#[derive(Debug, Clone)]
pub(crate) struct DecoderLayerIdx {
    pub self_attn: AttentionIdx,
    pub norm1: NormIdx,
    pub cross_attn: AttentionIdx,
    pub norm2: NormIdx,
    pub ffn: FeedForwardIdx,
    pub norm3: NormIdx,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(super) enum Init {
    Xavier,
    Zeros,
    Ones,
}

/// Tensor order and shapes for a configuration.
#[derive(Debug, Clone)]
pub(crate) struct Layout {
    pub specs: Vec<(String, (usize, usize), Init)>,
    pub app_w: usize,
    pub app_b: usize,
    pub encoder: Vec<EncoderLayerIdx>,
    pub decoder: Vec<DecoderLayerIdx>,
    pub tok_emb: usize,
    pub out_proj: usize,
}

impl Layout {
    pub fn new(cfg: &ModelConfig) -> Self {
        let mut specs = Vec::new();
        let mut add = |name: String, shape: (usize, usize), init: Init| {
            specs.push((name, shape, init));
            specs.len() - 1
        };
        let d = cfg.d_model;
        let app_w = add("appearance.w".into(), (cfg.d_in, d), Init::Xavier);
        let app_b = add("appearance.b".into(), (1, d), Init::Zeros);

        let attention =
            |add: &mut dyn FnMut(String, (usize, usize), Init) -> usize, p: &str| AttentionIdx {
                w_q: add(format!("{p}.w_q"), (d, d), Init::Xavier),
                w_k: add(format!("{p}.w_k"), (d, d), Init::Xavier),
                w_v: add(format!("{p}.w_v"), (d, d), Init::Xavier),
                w_o: add(format!("{p}.w_o"), (d, d), Init::Xavier),
            };
        let norm = |add: &mut dyn FnMut(String, (usize, usize), Init) -> usize, p: &str| NormIdx {
            gain: add(format!("{p}.gain"), (1, d), Init::Ones),
            bias: add(format!("{p}.bias"), (1, d), Init::Zeros),
        };
        let ffn =
            |add: &mut dyn FnMut(String, (usize, usize), Init) -> usize, p: &str| FeedForwardIdx {
                w1: add(format!("{p}.w1"), (d, cfg.d_ff), Init::Xavier),
                b1: add(format!("{p}.b1"), (1, cfg.d_ff), Init::Zeros),
                w2: add(format!("{p}.w2"), (cfg.d_ff, d), Init::Xavier),
                b2: add(format!("{p}.b2"), (1, d), Init::Zeros),
            };

        let encoder = (0..cfg.n_enc_layers)
            .map(|i| {
                let p = format!("enc.{i}");
                let attn = attention(&mut add, &format!("{p}.attn"));
                let w_g = add(
                    format!("{p}.attn.w_g"),
                    (4 * cfg.geo_embed_dim, cfg.n_heads),
                    Init::Xavier,
                );
                EncoderLayerIdx {
                    attn,
                    w_g,
                    norm1: norm(&mut add, &format!("{p}.norm1")),
                    ffn: ffn(&mut add, &format!("{p}.ffn")),
                    norm2: norm(&mut add, &format!("{p}.norm2")),
                }
            })
            .collect();
        let decoder = (0..cfg.n_dec_layers)
            .map(|i| {
                let p = format!("dec.{i}");
                DecoderLayerIdx {
                    self_attn: attention(&mut add, &format!("{p}.self_attn")),
                    norm1: norm(&mut add, &format!("{p}.norm1")),
                    cross_attn: attention(&mut add, &format!("{p}.cross_attn")),
                    norm2: norm(&mut add, &format!("{p}.norm2")),
                    ffn: ffn(&mut add, &format!("{p}.ffn")),
                    norm3: norm(&mut add, &format!("{p}.norm3")),
                }
            })
            .collect();
        let tok_emb = add("token_embedding".into(), (cfg.vocab_size, d), Init::Xavier);
        let out_proj = add(
            "output_projection".into(),
            (d, cfg.vocab_size),
            Init::Xavier,
        );
        Layout {
            specs,
            app_w,
            app_b,
            encoder,
            decoder,
            tok_emb,
            out_proj,
        }
    }
}

/// All trainable tensors of the caption model, in layout order.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Array2<f64>>,
}

impl ModelParams {
    /// Xavier-uniform weights, zero biases, unit layer-norm gains.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let layout = Layout::new(config);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut names = Vec::with_capacity(layout.specs.len());
        let mut tensors = Vec::with_capacity(layout.specs.len());
        for (name, (r, c), init) in layout.specs {
            let t = match init {
                Init::Zeros => Array2::zeros((r, c)),
                Init::Ones => Array2::ones((r, c)),
                Init::Xavier => {
                    let a = (6.0 / (r + c) as f64).sqrt();
                    Array2::from_shape_simple_fn((r, c), || rng.gen_range(-a..a))
                }
            };
            names.push(name);
            tensors.push(t);
        }
        Ok(ModelParams {
            config: config.clone(),
            names,
            tensors,
        })
    }

    /// Same layout with every tensor set to zero.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        let mut p = ModelParams::init(config, 0)?;
        for t in &mut p.tensors {
            t.fill(0.0);
        }
        Ok(p)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Array2<f64>] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Array2<f64>] {
        &mut self.tensors
    }

    pub fn get(&self, name: &str) -> Option<&Array2<f64>> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Array2<f64>> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.tensors[i])
    }

    pub fn num_params(&self) -> usize {
        self.tensors.iter().map(|t| t.len()).sum()
    }

    pub(crate) fn tensor(&self, i: usize) -> &Mat {
        &self.tensors[i]
    }

    pub fn is_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.iter().all(|v| v.is_finite()))
    }
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"RELCAPLM";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: [usize; 2],
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    dtype: String,
    tensors: Vec<TensorEntry>,
}

impl ModelParams {
    /// Checkpoint layout: 8-byte magic, u32 LE version, u64 LE header
    /// length, JSON header (config plus tensor name/shape table), then every
    /// tensor as little-endian f64 in header order.
    pub fn write_checkpoint(&self, mut out: impl Write) -> Result<()> {
        let header = CheckpointHeader {
            config: self.config.clone(),
            dtype: "f64".into(),
            tensors: self
                .names
                .iter()
                .zip(&self.tensors)
                .map(|(n, t)| TensorEntry {
                    name: n.clone(),
                    shape: [t.nrows(), t.ncols()],
                })
                .collect(),
        };
        let json = serde_json::to_vec(&header)?;
        let io = |e| Error::io("<checkpoint>", e);
        out.write_all(CHECKPOINT_MAGIC).map_err(io)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())
            .map_err(io)?;
        out.write_all(&(json.len() as u64).to_le_bytes())
            .map_err(io)?;
        out.write_all(&json).map_err(io)?;
        for t in &self.tensors {
            for v in t.iter() {
                out.write_all(&v.to_le_bytes()).map_err(io)?;
            }
        }
        Ok(())
    }

    pub fn read_checkpoint(mut input: impl Read) -> Result<Self> {
        let io = |e| Error::io("<checkpoint>", e);
        let mut magic = [0u8; 8];
        input.read_exact(&mut magic).map_err(io)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint("bad magic".into()));
        }
        let mut u32buf = [0u8; 4];
        input.read_exact(&mut u32buf).map_err(io)?;
        let version = u32::from_le_bytes(u32buf);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!("unsupported version {version}")));
        }
        let mut u64buf = [0u8; 8];
        input.read_exact(&mut u64buf).map_err(io)?;
        let mut json = vec![0u8; u64::from_le_bytes(u64buf) as usize];
        input.read_exact(&mut json).map_err(io)?;
        let header: CheckpointHeader = serde_json::from_slice(&json)?;
        if header.dtype != "f64" {
            return Err(Error::Checkpoint(format!(
                "unsupported dtype {}",
                header.dtype
            )));
        }
        header.config.validate()?;
        let expected = Layout::new(&header.config);
        if expected.specs.len() != header.tensors.len() {
            return Err(Error::Checkpoint(
                "tensor table does not match config".into(),
            ));
        }
        let mut names = Vec::new();
        let mut tensors = Vec::new();
        for ((name, shape, _), entry) in expected.specs.iter().zip(&header.tensors) {
            if *name != entry.name || [shape.0, shape.1] != entry.shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {} {:?} does not match config layout {name} {shape:?}",
                    entry.name, entry.shape
                )));
            }
            let mut data = vec![0f64; shape.0 * shape.1];
            for v in data.iter_mut() {
                input.read_exact(&mut u64buf).map_err(io)?;
                *v = f64::from_le_bytes(u64buf);
            }
            names.push(entry.name.clone());
            tensors.push(
                Array2::from_shape_vec(*shape, data)
                    .map_err(|e| Error::Checkpoint(e.to_string()))?,
            );
        }
        Ok(ModelParams {
            config: header.config,
            names,
            tensors,
        })
    }

    pub fn to_checkpoint_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.write_checkpoint(&mut buf)
            .expect("writing to a Vec cannot fail");
        buf
    }
}
