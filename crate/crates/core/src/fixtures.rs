//! Seeded synthetic evaluation sets for replay runs.
//!
//! Every image has a single rectangular text block, one ground-truth word,
//! recorded recognizer and captioner outputs, and a correct fallback text.
//! Recording styles are mixed so that confidences under the toy embedder
//! spread across the usual thresholds: captions that name the word, captions
//! that mention it among other words, misread crops, misleading scenes where
//! recognizer and caption agree on the wrong word, and captions unrelated to
//! the text.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adapters::{AdapterSet, InMemorySegmenter, ReplayBackend, ReplayBundle};
use crate::error::{Error, Result};
use crate::maskio::{format_manifest, write_mask, BinaryMask, ManifestEntry};

const WORDS: &[&str] = &[
    "exit", "stop", "open", "hotel", "pizza", "coffee", "bank", "parking", "market", "taxi",
    "police", "pharmacy", "bakery", "museum", "cinema", "library", "school", "station", "garage",
    "florist", "sale", "closed", "welcome", "entrance", "toilets", "bar", "cafe", "diner", "motel",
    "books", "shoes", "fresh", "burger", "sushi", "gym", "dental", "salon", "tickets",
];

const SURFACES: &[&str] = &[
    "sign",
    "board",
    "banner",
    "storefront",
    "door",
    "window",
    "poster",
    "awning",
];

const SCENES: &[&str] = &[
    "a busy street at night with cars",
    "a group of people walking in a park",
    "a blurry photo of a building",
    "a car parked next to a tree",
    "a crowd waiting at a crosswalk",
];

pub const FIXTURE_WIDTH: u32 = 96;
pub const FIXTURE_HEIGHT: u32 = 48;

/// A manifest plus in-memory masks.
#[derive(Debug, Clone)]
pub struct SyntheticFixture {
    pub entries: Vec<ManifestEntry>,
    pub masks: HashMap<String, BinaryMask>,
}

fn misread(word: &str, rng: &mut impl Rng) -> String {
    let mut chars: Vec<char> = word.chars().collect();
    let i = rng.random_range(0..chars.len());
    let replacement = loop {
        let c = (b'a' + rng.random_range(0..26u8)) as char;
        if c != chars[i] {
            break c;
        }
    };
    chars[i] = replacement;
    chars.into_iter().collect()
}

fn caption_for(word: &str, rng: &mut impl Rng) -> String {
    let surface = SURFACES.choose(rng).expect("non-empty");
    match rng.random_range(0..6) {
        0 | 1 => word.to_string(),
        2 => format!("{word}s"),
        3 => format!("the {word}"),
        4 => format!("{word} {surface}"),
        _ => format!("a {surface} reading {word}"),
    }
}

impl SyntheticFixture {
    pub fn generate(n: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut entries = Vec::with_capacity(n);
        let mut masks = HashMap::with_capacity(n);
        for i in 0..n {
            let image_id = format!("synth_{i:05}");
            let word = *WORDS.choose(&mut rng).expect("non-empty");

            let w = rng.random_range(20..60u32);
            let h = rng.random_range(8..24u32);
            let x0 = rng.random_range(0..FIXTURE_WIDTH - w);
            let y0 = rng.random_range(0..FIXTURE_HEIGHT - h);
            let mask = BinaryMask::from_fn(FIXTURE_WIDTH, FIXTURE_HEIGHT, |x, y| {
                (x0..x0 + w).contains(&x) && (y0..y0 + h).contains(&y)
            })
            .expect("fixture dimensions are positive");

            let style = rng.random_range(0..100u32);
            let (t1, t2, t3) = match style {
                // Caption names the word and both reads agree.
                0..=44 => (
                    word.to_string(),
                    caption_for(word, &mut rng),
                    word.to_string(),
                ),
                // Crop misread, full image correct.
                45..=59 => (
                    word.to_string(),
                    caption_for(word, &mut rng),
                    misread(word, &mut rng),
                ),
                // Both reads wrong.
                60..=69 => {
                    let bad = misread(word, &mut rng);
                    (bad.clone(), caption_for(word, &mut rng), bad)
                }
                // Misleading: caption and reads agree on a different word.
                70..=79 => {
                    let other = *WORDS.choose(&mut rng).expect("non-empty");
                    (
                        other.to_string(),
                        caption_for(other, &mut rng),
                        other.to_string(),
                    )
                }
                // Unrelated caption.
                _ => (
                    word.to_string(),
                    SCENES.choose(&mut rng).expect("non-empty").to_string(),
                    word.to_string(),
                ),
            };

            entries.push(ManifestEntry {
                image_id: image_id.clone(),
                mask_path: PathBuf::from(format!("masks/{image_id}.pgm")),
                ground_truth: vec![word.to_string()],
                recorded: Some(ReplayBundle {
                    t1,
                    t2,
                    t3_by_rank: vec![t3],
                    fallback_text: Some(word.to_string()),
                    embeddings: None,
                }),
                embeddings_path: None,
                image_path: None,
            });
            masks.insert(image_id, mask);
        }
        Self { entries, masks }
    }

    /// Replay adapters with masks served from memory.
    pub fn adapters(&self) -> Result<AdapterSet> {
        let backend = ReplayBackend::from_manifest(&self.entries)?;
        Ok(AdapterSet::replay_with_segmenter(
            backend,
            Arc::new(InMemorySegmenter::new(self.masks.clone())),
        ))
    }

    /// Writes `manifest.jsonl` and `masks/*.pgm` under `dir` and returns the
    /// manifest path.
    pub fn write_to(&self, dir: impl AsRef<Path>) -> Result<PathBuf> {
        let dir = dir.as_ref();
        let mask_dir = dir.join("masks");
        fs::create_dir_all(&mask_dir).map_err(|e| Error::io(&mask_dir, e))?;
        for entry in &self.entries {
            write_mask(&self.masks[&entry.image_id], dir.join(&entry.mask_path))?;
        }
        let manifest = dir.join("manifest.jsonl");
        fs::write(&manifest, format_manifest(&self.entries))
            .map_err(|e| Error::io(&manifest, e))?;
        Ok(manifest)
    }
}
