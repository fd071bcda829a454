//! Object-relational transformer caption model.
//!
//! The encoder refines region features with attention whose weights mix
//! appearance similarity and relative box geometry. The decoder is a causal
//! transformer over subword ids that cross-attends to the encoded regions.
//! Everything runs in `f64` on a small reverse-mode tape.
//!
//! Model token ids reserve `0..3` for `<pad>`, `<bos>` and `<eos>`; subword
//! piece `i` is model token `i + 3`.

mod beam;
mod config;
mod geometry;
mod model;
mod params;
mod synthetic;
mod tape;
mod train;

pub use beam::{beam_search, generate, greedy_decode, DecoderScorer, Hypothesis, StepScorer};
pub use config::{ModelConfig, Region, RegionSet};
pub use geometry::{
    displacement, displacement_matrix, fused_attention, geometric_weights, geometry_features,
    positional_embed, DISPLACEMENT_EPS, GEO_WAVELENGTH_BASE,
};
pub use model::{
    attention_maps, decoder_forward, encoder_forward, sinusoidal_positions, EncoderOutput,
};
pub use params::ModelParams;
pub use synthetic::{
    class_templates, grammar_words, nearest_class, read_sidecar, shuffle_regions,
    synthetic_regions, to_corpus_lines, write_dataset, SyntheticConfig, SyntheticScene,
    OBJECT_CLASSES, RELATIONS,
};
pub use train::{
    batch_loss, frame_tokens, grad_check, loss_and_grads, next_token_accuracy, train_step, Adam,
    Example, TrainConfig, GRAD_CHECK_STEP,
};

use crate::error::{Error, Result};
use crate::unigram::{CONTROL_PIECES, EOS_ID};

/// Number of reserved control ids ahead of the subword pieces.
pub const NUM_CONTROL_IDS: usize = CONTROL_PIECES.len();

/// Model vocabulary size for a subword vocabulary of `pieces` entries.
pub fn model_vocab_size(pieces: usize) -> usize {
    pieces + NUM_CONTROL_IDS
}

pub fn to_model_ids(piece_ids: &[usize]) -> Vec<usize> {
    piece_ids.iter().map(|&i| i + NUM_CONTROL_IDS).collect()
}

/// Maps generated model ids back to piece ids, stopping at `<eos>`.
pub fn from_model_ids(model_ids: &[usize]) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(model_ids.len());
    for &id in model_ids {
        if id == EOS_ID {
            break;
        }
        if id < NUM_CONTROL_IDS {
            return Err(Error::UnknownPiece(CONTROL_PIECES[id].to_string()));
        }
        out.push(id - NUM_CONTROL_IDS);
    }
    Ok(out)
}
