//! Reference implementations used as test oracles. Written from the
//! definitions, sharing no code with the crate under test.
#![allow(dead_code)]

use std::collections::VecDeque;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use blockctx::adapters::FallbackRecognizer;
use blockctx::maskio::{BinaryMask, SourceImageRef};
use rand::Rng;

/// Component pixel sets from BFS flood fill, in order of first raster pixel.
pub fn flood_fill(mask: &BinaryMask, eight: bool) -> Vec<Vec<(u32, u32)>> {
    let (w, h) = (mask.width() as i64, mask.height() as i64);
    let mut seen = vec![false; (w * h) as usize];
    let mut out = Vec::new();
    let offsets: &[(i64, i64)] = if eight {
        &[
            (-1, -1),
            (0, -1),
            (1, -1),
            (-1, 0),
            (1, 0),
            (-1, 1),
            (0, 1),
            (1, 1),
        ]
    } else {
        &[(0, -1), (-1, 0), (1, 0), (0, 1)]
    };
    for y in 0..h {
        for x in 0..w {
            let i = (y * w + x) as usize;
            if seen[i] || !mask.is_foreground(x as u32, y as u32) {
                continue;
            }
            seen[i] = true;
            let mut pixels = Vec::new();
            let mut queue = VecDeque::from([(x, y)]);
            while let Some((cx, cy)) = queue.pop_front() {
                pixels.push((cx as u32, cy as u32));
                for (dx, dy) in offsets {
                    let (nx, ny) = (cx + dx, cy + dy);
                    if nx < 0 || ny < 0 || nx >= w || ny >= h {
                        continue;
                    }
                    let j = (ny * w + nx) as usize;
                    if !seen[j] && mask.is_foreground(nx as u32, ny as u32) {
                        seen[j] = true;
                        queue.push_back((nx, ny));
                    }
                }
            }
            pixels.sort_by_key(|&(px, py)| (py, px));
            out.push(pixels);
        }
    }
    out
}

/// `(x_min, y_min, x_max, y_max)`.
pub type Rect = (u32, u32, u32, u32);

pub fn rect_of(pixels: &[(u32, u32)]) -> Rect {
    let xs = pixels.iter().map(|p| p.0);
    let ys = pixels.iter().map(|p| p.1);
    (
        xs.clone().min().unwrap(),
        ys.clone().min().unwrap(),
        xs.max().unwrap(),
        ys.max().unwrap(),
    )
}

pub fn rect_area(r: Rect) -> u64 {
    u64::from(r.2 - r.0) * u64::from(r.3 - r.1)
}

/// Expected blocks as `(rank, rect, area, component index + 1)`.
pub fn localize_oracle(
    mask: &BinaryMask,
    padding: u32,
    min_area: u64,
    max_blocks: usize,
    eight: bool,
) -> Vec<(usize, Rect, u64, u32)> {
    let (w, h) = (mask.width(), mask.height());
    let mut kept: Vec<(Rect, u64, u32)> = Vec::new();
    for (i, pixels) in flood_fill(mask, eight).iter().enumerate() {
        let r = rect_of(pixels);
        if rect_area(r) < min_area {
            continue;
        }
        let padded = (
            r.0.saturating_sub(padding),
            r.1.saturating_sub(padding),
            (r.2 + padding).min(w - 1),
            (r.3 + padding).min(h - 1),
        );
        kept.push((padded, rect_area(padded), i as u32 + 1));
    }
    kept.sort_by_key(|&(r, area, label)| (std::cmp::Reverse(area), r.1, r.0, label));
    kept.into_iter()
        .take(max_blocks)
        .enumerate()
        .map(|(rank, (r, a, l))| (rank, r, a, l))
        .collect()
}

pub fn random_mask(rng: &mut impl Rng, w: u32, h: u32) -> BinaryMask {
    let density = rng.random_range(0.05..0.7);
    let data = (0..w * h)
        .map(|_| u8::from(rng.random_bool(density)))
        .collect();
    BinaryMask::new(w, h, data).unwrap()
}

/// A mask of a few random filled rectangles, so components are large enough
/// to survive area filtering.
pub fn random_blocks_mask(rng: &mut impl Rng, w: u32, h: u32, n: usize) -> BinaryMask {
    let rects: Vec<Rect> = (0..n)
        .map(|_| {
            let x0 = rng.random_range(0..w - 2);
            let y0 = rng.random_range(0..h - 2);
            let x1 = rng.random_range(x0..(x0 + 16).min(w));
            let y1 = rng.random_range(y0..(y0 + 10).min(h));
            (x0, y0, x1, y1)
        })
        .collect();
    BinaryMask::from_fn(w, h, |x, y| {
        rects
            .iter()
            .any(|r| (r.0..=r.2).contains(&x) && (r.1..=r.3).contains(&y))
    })
    .unwrap()
}

/// `(|a| + |b| - D) / (|a| + |b|)` with `D = |a| + |b| - 2 LCS(a, b)`, as an
/// exact rational `(numerator, denominator)`; both empty gives `(1, 1)`.
pub fn ratio_oracle(a: &[char], b: &[char]) -> (usize, usize) {
    let total = a.len() + b.len();
    if total == 0 {
        return (1, 1);
    }
    let mut t = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            t[i][j] = if a[i - 1] == b[j - 1] {
                t[i - 1][j - 1] + 1
            } else {
                t[i - 1][j].max(t[i][j - 1])
            };
        }
    }
    (2 * t[a.len()][b.len()], total)
}

/// `(intersection, union, |pred|, |gt|)` by pixel counting.
pub fn mask_counts(pred: &BinaryMask, gt: &BinaryMask) -> (usize, usize, usize, usize) {
    let (mut inter, mut union, mut p, mut g) = (0, 0, 0, 0);
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            let (a, b) = (pred.is_foreground(x, y), gt.is_foreground(x, y));
            inter += usize::from(a && b);
            union += usize::from(a || b);
            p += usize::from(a);
            g += usize::from(b);
        }
    }
    (inter, union, p, g)
}

/// Wraps a fallback recognizer and counts invocations.
pub struct CountingFallback {
    pub inner: Arc<dyn FallbackRecognizer>,
    pub calls: AtomicUsize,
}

impl CountingFallback {
    pub fn new(inner: Arc<dyn FallbackRecognizer>) -> Arc<Self> {
        Arc::new(Self {
            inner,
            calls: AtomicUsize::new(0),
        })
    }

    pub fn count(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl FallbackRecognizer for CountingFallback {
    fn fallback_recognize(&self, image: &SourceImageRef) -> blockctx::Result<Vec<String>> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.fallback_recognize(image)
    }
}
