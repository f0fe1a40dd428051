use crate::error::Result;
use crate::lexsem::{Embedding, NormalizedText};

use super::{EmbedSlot, Embedder};

pub const TOY_DIM: usize = 64;
pub const TOY_SEED: u64 = 0x5eed_b10c_c7a5_0001;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;
const START: char = '\u{2}';
const END: char = '\u{3}';

/// Deterministic stand-in for a sentence encoder.
///
/// The text is wrapped in start/end markers (U+0002, U+0003) and split into
/// overlapping character bigrams. Each bigram's UTF-8 bytes are hashed with
/// FNV-1a 64 whose initial state is the FNV offset basis XOR [`TOY_SEED`];
/// the hash modulo [`TOY_DIM`] picks the bucket whose count is incremented.
/// The count vector is L2-normalized. Empty text maps to the zero vector.
#[derive(Debug, Clone, Copy, Default)]
pub struct ToyEmbedder;

impl ToyEmbedder {
    pub fn bucket(bigram: [char; 2]) -> usize {
        let mut buf = [0u8; 8];
        let a = bigram[0].encode_utf8(&mut buf).len();
        let b = bigram[1].encode_utf8(&mut buf[a..]).len();
        let mut h = FNV_OFFSET ^ TOY_SEED;
        for &byte in &buf[..a + b] {
            h ^= u64::from(byte);
            h = h.wrapping_mul(FNV_PRIME);
        }
        (h % TOY_DIM as u64) as usize
    }

    pub fn embed_text(&self, text: &NormalizedText) -> Embedding {
        let mut counts = [0f64; TOY_DIM];
        if !text.is_empty() {
            let chars: Vec<char> = std::iter::once(START)
                .chain(text.as_str().chars())
                .chain(std::iter::once(END))
                .collect();
            for pair in chars.windows(2) {
                counts[Self::bucket([pair[0], pair[1]])] += 1.0;
            }
            let norm = counts.iter().map(|c| c * c).sum::<f64>().sqrt();
            counts.iter_mut().for_each(|c| *c /= norm);
        }
        Embedding::new(counts.to_vec()).expect("bigram counts are finite")
    }
}

impl Embedder for ToyEmbedder {
    fn embed(&self, _image_id: &str, _slot: EmbedSlot, text: &NormalizedText) -> Result<Embedding> {
        Ok(self.embed_text(text))
    }

    fn describe(&self, _image_id: &str) -> String {
        "toy".into()
    }
}
