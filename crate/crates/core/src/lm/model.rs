//! Encoder and decoder forward graphs.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::config::RegionSet;
use super::geometry::{displacement_matrix, geometry_features};
use super::params::{AttentionIdx, FeedForwardIdx, Layout, ModelParams, NormIdx};
use super::tape::{Mat, Tape, Var};

/// Encoded regions, one row per region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderOutput {
    pub q: Array2<f64>,
}

/// Sinusoidal token-position encoding (base 10000), `len`×`d`.
pub fn sinusoidal_positions(len: usize, d: usize) -> Array2<f64> {
    let mut pe = Array2::zeros((len, d));
    for pos in 0..len {
        for i in 0..d {
            let exponent = (2 * (i / 2)) as f64 / d as f64;
            let angle = pos as f64 / 10000f64.powf(exponent);
            pe[[pos, i]] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

/// Builds forward graphs on a tape and remembers every attention matrix.
pub(crate) struct Forward<'a> {
    pub tape: Tape,
    params: &'a ModelParams,
    layout: Layout,
    pub attention: Vec<Var>,
}

impl<'a> Forward<'a> {
    pub fn new(params: &'a ModelParams) -> Self {
        Forward {
            tape: Tape::new(),
            params,
            layout: Layout::new(params.config()),
            attention: Vec::new(),
        }
    }

    fn p(&mut self, idx: usize) -> Var {
        self.tape.param(idx, self.params.tensor(idx))
    }

    fn linear(&mut self, x: Var, w: usize, b: usize) -> Var {
        let wv = self.p(w);
        let bv = self.p(b);
        let y = self.tape.matmul(x, wv);
        self.tape.add_row(y, bv)
    }

    fn norm(&mut self, x: Var, idx: NormIdx) -> Var {
        let g = self.p(idx.gain);
        let b = self.p(idx.bias);
        self.tape.layer_norm(x, g, b)
    }

    fn feed_forward(&mut self, x: Var, idx: FeedForwardIdx) -> Var {
        let h = self.linear(x, idx.w1, idx.b1);
        let h = self.tape.relu(h);
        self.linear(h, idx.w2, idx.b2)
    }

    fn multi_head(
        &mut self,
        queries: Var,
        keys: Var,
        idx: AttentionIdx,
        geo: Option<Var>,
        causal: bool,
    ) -> Var {
        let cfg = self.params.config();
        let (heads, dk) = (cfg.n_heads, cfg.head_dim());
        let wq = self.p(idx.w_q);
        let wk = self.p(idx.w_k);
        let wv = self.p(idx.w_v);
        let q = self.tape.matmul(queries, wq);
        let k = self.tape.matmul(keys, wk);
        let v = self.tape.matmul(keys, wv);
        let scale = 1.0 / (dk as f64).sqrt();
        let mut outs = Vec::with_capacity(heads);
        for h in 0..heads {
            let qh = self.tape.columns(q, h * dk, dk);
            let kh = self.tape.columns(k, h * dk, dk);
            let vh = self.tape.columns(v, h * dk, dk);
            let scores = self.tape.matmul_t(qh, kh);
            let scores = self.tape.scale(scores, scale);
            let weights = self.tape.attention(scores, geo.map(|g| (g, h)), causal);
            self.attention.push(weights);
            outs.push(self.tape.matmul(weights, vh));
        }
        let joined = self.tape.concat_columns(outs);
        let wo = self.p(idx.w_o);
        self.tape.matmul(joined, wo)
    }

    pub fn encoder(&mut self, regions: &RegionSet) -> Result<Var> {
        let cfg = self.params.config().clone();
        if regions.appearance_dim() != cfg.d_in {
            return Err(Error::Shape(format!(
                "region appearance has {} features, model expects {}",
                regions.appearance_dim(),
                cfg.d_in
            )));
        }
        let n = regions.len();
        let mut appearance = Mat::zeros((n, cfg.d_in));
        for (i, r) in regions.regions().iter().enumerate() {
            for (j, v) in r.appearance.iter().enumerate() {
                appearance[[i, j]] = *v;
            }
        }
        let a = self.tape.constant(appearance);
        let (app_w, app_b) = (self.layout.app_w, self.layout.app_b);
        let y = self.linear(a, app_w, app_b);
        let mut x = self.tape.relu(y);

        let feats = geometry_features(&displacement_matrix(regions), cfg.geo_embed_dim);
        let feats = self.tape.constant(feats);
        for layer in self.layout.encoder.clone() {
            let wg = self.p(layer.w_g);
            let g = self.tape.matmul(feats, wg);
            let g = self.tape.relu(g);
            let attn = self.multi_head(x, x, layer.attn, Some(g), false);
            let r = self.tape.add(x, attn);
            x = self.norm(r, layer.norm1);
            let f = self.feed_forward(x, layer.ffn);
            let r = self.tape.add(x, f);
            x = self.norm(r, layer.norm2);
        }
        Ok(x)
    }

    pub fn decoder(&mut self, memory: Var, prefix: &[usize]) -> Result<Var> {
        let cfg = self.params.config().clone();
        if prefix.len() > cfg.max_seq_len {
            return Err(Error::SequenceTooLong {
                len: prefix.len(),
                max: cfg.max_seq_len,
            });
        }
        if let Some(&id) = prefix.iter().find(|&&id| id >= cfg.vocab_size) {
            return Err(Error::TokenOutOfRange {
                id,
                vocab_size: cfg.vocab_size,
            });
        }
        if self.tape.value(memory).ncols() != cfg.d_model {
            return Err(Error::Shape(
                "encoder output width differs from d_model".into(),
            ));
        }
        let tok_emb = self.layout.tok_emb;
        let table = self.p(tok_emb);
        let emb = self.tape.gather_rows(table, prefix);
        let emb = self.tape.scale(emb, (cfg.d_model as f64).sqrt());
        let pe = self
            .tape
            .constant(sinusoidal_positions(prefix.len(), cfg.d_model));
        let mut x = self.tape.add(emb, pe);
        for layer in self.layout.decoder.clone() {
            let a = self.multi_head(x, x, layer.self_attn, None, true);
            let r = self.tape.add(x, a);
            x = self.norm(r, layer.norm1);
            let c = self.multi_head(x, memory, layer.cross_attn, None, false);
            let r = self.tape.add(x, c);
            x = self.norm(r, layer.norm2);
            let f = self.feed_forward(x, layer.ffn);
            let r = self.tape.add(x, f);
            x = self.norm(r, layer.norm3);
        }
        let out_proj = self.layout.out_proj;
        let w = self.p(out_proj);
        Ok(self.tape.matmul(x, w))
    }
}

/// Runs the relational encoder over a set of regions.
pub fn encoder_forward(regions: &RegionSet, params: &ModelParams) -> Result<EncoderOutput> {
    let mut f = Forward::new(params);
    let q = f.encoder(regions)?;
    Ok(EncoderOutput {
        q: f.tape.value(q).clone(),
    })
}

/// Next-token logits for every prefix position, shape `prefix.len()`×vocab.
pub fn decoder_forward(
    encoded: &EncoderOutput,
    prefix: &[usize],
    params: &ModelParams,
) -> Result<Array2<f64>> {
    let mut f = Forward::new(params);
    let memory = f.tape.constant(encoded.q.clone());
    let logits = f.decoder(memory, prefix)?;
    Ok(f.tape.value(logits).clone())
}

/// Every attention matrix computed while encoding `regions` and decoding
/// `prefix`: encoder layers first, then per decoder layer the self- and
/// cross-attention heads.
pub fn attention_maps(
    regions: &RegionSet,
    prefix: &[usize],
    params: &ModelParams,
) -> Result<Vec<Array2<f64>>> {
    let mut f = Forward::new(params);
    let q = f.encoder(regions)?;
    f.decoder(q, prefix)?;
    Ok(f.attention
        .iter()
        .map(|v| f.tape.value(*v).clone())
        .collect())
}
