//! Block-level text localization from a binary segmentation mask.
//!
//! The mask is split into connected foreground components with a two-pass
//! union-find labeller. Each component becomes a bounding box which is
//! filtered by area, padded and clamped to the frame, ranked by area and
//! truncated to a maximum block count. The whole pass is
//! O(H·W + N + n log n) for N foreground pixels and n components.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::maskio::BinaryMask;

/// Which neighbours of a pixel count as connected to it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum Connectivity {
    /// N, S, E and W neighbours.
    Four,
    /// All eight neighbours.
    #[default]
    Eight,
}

impl TryFrom<u8> for Connectivity {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        match v {
            4 => Ok(Connectivity::Four),
            8 => Ok(Connectivity::Eight),
            other => Err(Error::Config(format!(
                "connectivity must be 4 or 8, got {other}"
            ))),
        }
    }
}

impl From<Connectivity> for u8 {
    fn from(c: Connectivity) -> u8 {
        match c {
            Connectivity::Four => 4,
            Connectivity::Eight => 8,
        }
    }
}

/// Axis-aligned box with inclusive pixel coordinates on both ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct BBox {
    pub x_min: u32,
    pub y_min: u32,
    pub x_max: u32,
    pub y_max: u32,
}

impl BBox {
    pub fn new(x_min: u32, y_min: u32, x_max: u32, y_max: u32) -> Self {
        debug_assert!(x_min <= x_max && y_min <= y_max);
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    /// `(x_max - x_min) * (y_max - y_min)`. A one-pixel-wide box has area 0.
    pub fn area(&self) -> u64 {
        u64::from(self.x_max - self.x_min) * u64::from(self.y_max - self.y_min)
    }

    pub fn contains(&self, x: u32, y: u32) -> bool {
        (self.x_min..=self.x_max).contains(&x) && (self.y_min..=self.y_max).contains(&y)
    }

    pub fn contains_box(&self, other: &BBox) -> bool {
        self.x_min <= other.x_min
            && self.y_min <= other.y_min
            && self.x_max >= other.x_max
            && self.y_max >= other.y_max
    }

    pub fn within(&self, width: u32, height: u32) -> bool {
        self.x_min <= self.x_max
            && self.y_min <= self.y_max
            && self.x_max < width
            && self.y_max < height
    }

    /// Half-open column and row ranges for slicing a raster.
    pub fn slice_ranges(&self) -> (Range<u32>, Range<u32>) {
        (self.x_min..self.x_max + 1, self.y_min..self.y_max + 1)
    }
}

/// A maximal connected foreground region.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    /// 1-based, assigned in order of first raster encounter.
    pub label: u32,
    pub pixel_count: usize,
    pub bbox_raw: BBox,
}

/// A padded, area-filtered region handed to the crop recognizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextBlock {
    pub rank: usize,
    #[serde(flatten)]
    pub bbox: BBox,
    pub area: u64,
    #[serde(rename = "label")]
    pub source_component: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct LocalizerConfig {
    pub padding: u32,
    pub min_area: u64,
    pub max_blocks: usize,
    pub connectivity: Connectivity,
}

impl Default for LocalizerConfig {
    fn default() -> Self {
        Self {
            padding: 5,
            min_area: 100,
            max_blocks: 10,
            connectivity: Connectivity::Eight,
        }
    }
}

impl LocalizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_blocks == 0 {
            return Err(Error::Config("max_blocks must be at least 1".into()));
        }
        Ok(())
    }
}

/// Serialized localization output for one image.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Localization {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_id: Option<String>,
    pub blocks: Vec<TextBlock>,
}

/// Per-pixel component labels; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMap {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u32>,
    pub count: u32,
}

impl LabelMap {
    pub fn get(&self, x: u32, y: u32) -> u32 {
        self.labels[y as usize * self.width as usize + x as usize]
    }
}

fn find_root(parent: &mut [u32], mut x: u32) -> u32 {
    let mut root = x;
    while parent[root as usize] != root {
        root = parent[root as usize];
    }
    while parent[x as usize] != root {
        let next = parent[x as usize];
        parent[x as usize] = root;
        x = next;
    }
    root
}

/// Unions keep the smaller label as root, so a root is always the first
/// provisional label handed out in its component.
fn union(parent: &mut [u32], a: u32, b: u32) -> u32 {
    let ra = find_root(parent, a);
    let rb = find_root(parent, b);
    let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
    parent[hi as usize] = lo;
    lo
}

/// Labels every foreground pixel with its component id.
pub fn label_components(mask: &BinaryMask, connectivity: Connectivity) -> LabelMap {
    let (w, h) = (mask.width() as usize, mask.height() as usize);
    let data = mask.data();
    let mut labels = vec![0u32; w * h];
    // parent[0] is a placeholder so provisional labels index directly.
    let mut parent: Vec<u32> = vec![0];

    for y in 0..h {
        let row = y * w;
        for x in 0..w {
            if data[row + x] == 0 {
                continue;
            }
            let mut current = 0u32;
            let mut link = |neighbour: u32, parent: &mut Vec<u32>| {
                if neighbour != 0 {
                    current = if current == 0 {
                        find_root(parent, neighbour)
                    } else {
                        union(parent, current, neighbour)
                    };
                }
            };
            if x > 0 {
                link(labels[row + x - 1], &mut parent);
            }
            if y > 0 {
                let up = row - w;
                link(labels[up + x], &mut parent);
                if connectivity == Connectivity::Eight {
                    if x > 0 {
                        link(labels[up + x - 1], &mut parent);
                    }
                    if x + 1 < w {
                        link(labels[up + x + 1], &mut parent);
                    }
                }
            }
            if current == 0 {
                current = parent.len() as u32;
                parent.push(current);
            }
            labels[row + x] = current;
        }
    }

    // Second pass: collapse to roots and renumber densely in raster order.
    let mut dense = vec![0u32; parent.len()];
    let mut count = 0u32;
    for label in labels.iter_mut().filter(|l| **l != 0) {
        let root = find_root(&mut parent, *label);
        if dense[root as usize] == 0 {
            count += 1;
            dense[root as usize] = count;
        }
        *label = dense[root as usize];
    }

    LabelMap {
        width: mask.width(),
        height: mask.height(),
        labels,
        count,
    }
}

/// Connected foreground components with pixel counts and raw bounding boxes,
/// ordered by label.
pub fn find_components(mask: &BinaryMask, connectivity: Connectivity) -> Vec<Component> {
    components_of(&label_components(mask, connectivity))
}

pub fn components_of(map: &LabelMap) -> Vec<Component> {
    let mut out: Vec<Component> = (1..=map.count)
        .map(|label| Component {
            label,
            pixel_count: 0,
            bbox_raw: BBox {
                x_min: u32::MAX,
                y_min: u32::MAX,
                x_max: 0,
                y_max: 0,
            },
        })
        .collect();
    let w = map.width as usize;
    for (idx, &label) in map.labels.iter().enumerate() {
        if label == 0 {
            continue;
        }
        let (x, y) = ((idx % w) as u32, (idx / w) as u32);
        let c = &mut out[label as usize - 1];
        c.pixel_count += 1;
        let b = &mut c.bbox_raw;
        b.x_min = b.x_min.min(x);
        b.y_min = b.y_min.min(y);
        b.x_max = b.x_max.max(x);
        b.y_max = b.y_max.max(y);
    }
    out
}

/// Tight bounding box of a set of `(x, y)` pixels.
pub fn component_bbox(pixels: &[(u32, u32)]) -> Result<BBox> {
    let (&(x0, y0), rest) = pixels
        .split_first()
        .ok_or_else(|| Error::Contract("bounding box of an empty pixel set".into()))?;
    Ok(rest
        .iter()
        .fold(BBox::new(x0, y0, x0, y0), |b, &(x, y)| BBox {
            x_min: b.x_min.min(x),
            y_min: b.y_min.min(y),
            x_max: b.x_max.max(x),
            y_max: b.y_max.max(y),
        }))
}

/// Grows a box by `padding` on every side, clamped to a `width`×`height` frame.
pub fn pad_bbox(b: BBox, padding: u32, width: u32, height: u32) -> BBox {
    BBox {
        x_min: b.x_min.saturating_sub(padding),
        y_min: b.y_min.saturating_sub(padding),
        x_max: b.x_max.saturating_add(padding).min(width - 1),
        y_max: b.y_max.saturating_add(padding).min(height - 1),
    }
}

/// Keeps blocks whose area is at least `min_area`, preserving order.
pub fn filter_by_area(blocks: Vec<TextBlock>, min_area: u64) -> Vec<TextBlock> {
    blocks.into_iter().filter(|b| b.area >= min_area).collect()
}

/// Sorts by area descending (ties by `y_min`, `x_min`, then label), keeps
/// the first `max_blocks` and renumbers ranks from 0.
pub fn sort_and_limit(mut blocks: Vec<TextBlock>, max_blocks: usize) -> Vec<TextBlock> {
    blocks.sort_by(|a, b| {
        b.area
            .cmp(&a.area)
            .then(a.bbox.y_min.cmp(&b.bbox.y_min))
            .then(a.bbox.x_min.cmp(&b.bbox.x_min))
            .then(a.source_component.cmp(&b.source_component))
    });
    blocks.truncate(max_blocks);
    for (rank, block) in blocks.iter_mut().enumerate() {
        block.rank = rank;
    }
    blocks
}

/// Full localization pass. An empty result means no text was found.
///
/// Small components are dropped on their unpadded box area; the surviving
/// boxes are then padded and ranked on their padded area.
pub fn localize(mask: &BinaryMask, cfg: &LocalizerConfig) -> Vec<TextBlock> {
    let (w, h) = (mask.width(), mask.height());
    let raw: Vec<TextBlock> = find_components(mask, cfg.connectivity)
        .into_iter()
        .map(|c| TextBlock {
            rank: 0,
            bbox: c.bbox_raw,
            area: c.bbox_raw.area(),
            source_component: c.label,
        })
        .collect();
    let padded = filter_by_area(raw, cfg.min_area)
        .into_iter()
        .map(|mut block| {
            block.bbox = pad_bbox(block.bbox, cfg.padding, w, h);
            block.area = block.bbox.area();
            block
        })
        .collect();
    sort_and_limit(padded, cfg.max_blocks)
}

/// Cuts the region covered by `bbox` out of a mask.
pub fn crop_mask(mask: &BinaryMask, bbox: &BBox) -> Result<BinaryMask> {
    if !bbox.within(mask.width(), mask.height()) {
        return Err(Error::Contract(format!(
            "crop {bbox:?} outside {}x{} mask",
            mask.width(),
            mask.height()
        )));
    }
    let (xs, ys) = bbox.slice_ranges();
    let width = xs.end - xs.start;
    let mut data = Vec::with_capacity(width as usize * (ys.end - ys.start) as usize);
    for y in ys.clone() {
        let row = y as usize * mask.width() as usize;
        data.extend_from_slice(&mask.data()[row + xs.start as usize..row + xs.end as usize]);
    }
    BinaryMask::new(width, ys.end - ys.start, data)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_with(w: u32, h: u32, fg: &[(u32, u32)]) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| fg.contains(&(x, y))).unwrap()
    }

    fn block(label: u32, bbox: BBox) -> TextBlock {
        TextBlock {
            rank: 0,
            bbox,
            area: bbox.area(),
            source_component: label,
        }
    }

    #[test]
    fn empty_mask_has_no_components() {
        let m = BinaryMask::zeros(8, 8).unwrap();
        assert!(find_components(&m, Connectivity::Eight).is_empty());
        assert!(localize(&m, &LocalizerConfig::default()).is_empty());
    }

    #[test]
    fn two_components_in_4x4() {
        let m = mask_with(4, 4, &[(0, 0), (0, 1), (3, 3)]);
        let cs = find_components(&m, Connectivity::Four);
        assert_eq!(cs.len(), 2);
        assert_eq!(cs[0].pixel_count, 2);
        assert_eq!(cs[1].pixel_count, 1);
        assert_eq!(cs[0].bbox_raw, BBox::new(0, 0, 0, 1));
    }

    #[test]
    fn diagonal_pair_depends_on_connectivity() {
        let m = mask_with(2, 2, &[(0, 0), (1, 1)]);
        assert_eq!(find_components(&m, Connectivity::Eight).len(), 1);
        assert_eq!(find_components(&m, Connectivity::Four).len(), 2);
    }

    #[test]
    fn u_shape_merges_late() {
        // Two arms meet only on the bottom row; labels must still collapse.
        let m = BinaryMask::from_fn(5, 3, |x, y| x == 0 || x == 4 || y == 2).unwrap();
        let map = label_components(&m, Connectivity::Four);
        assert_eq!(map.count, 1);
        assert!(map.labels.iter().all(|&l| l <= 1));
    }

    #[test]
    fn labels_follow_first_raster_encounter() {
        // The component touching (3,0) is met first even though the other
        // component extends further left on a later row.
        let m = mask_with(5, 3, &[(3, 0), (3, 1), (0, 2)]);
        let map = label_components(&m, Connectivity::Eight);
        assert_eq!(map.get(3, 0), 1);
        assert_eq!(map.get(0, 2), 2);
    }

    #[test]
    fn bbox_examples() {
        assert_eq!(component_bbox(&[(5, 7)]).unwrap(), BBox::new(5, 7, 5, 7));
        assert_eq!(
            component_bbox(&[(1, 2), (4, 2), (2, 9)]).unwrap(),
            BBox::new(1, 2, 4, 9)
        );
        let row: Vec<_> = (0..10).map(|x| (x, 3)).collect();
        assert_eq!(component_bbox(&row).unwrap(), BBox::new(0, 3, 9, 3));
        assert!(matches!(component_bbox(&[]), Err(Error::Contract(_))));
    }

    #[test]
    fn padding_examples() {
        let b = BBox::new(3, 4, 5, 6);
        assert_eq!(pad_bbox(b, 0, 10, 10), b);
        assert_eq!(
            pad_bbox(BBox::new(0, 0, 2, 2), 5, 10, 10),
            BBox::new(0, 0, 7, 7)
        );
        assert_eq!(
            pad_bbox(BBox::new(4, 4, 5, 5), 100, 10, 10),
            BBox::new(0, 0, 9, 9)
        );
    }

    #[test]
    fn area_filter_examples() {
        // Boxes sized to give areas 4, 100 and 9.
        let blocks = vec![
            block(1, BBox::new(0, 0, 2, 2)),
            block(2, BBox::new(0, 0, 10, 10)),
            block(3, BBox::new(0, 0, 3, 3)),
        ];
        assert_eq!(
            blocks.iter().map(|b| b.area).collect::<Vec<_>>(),
            vec![4, 100, 9]
        );
        assert_eq!(filter_by_area(blocks.clone(), 0), blocks);
        let kept = filter_by_area(blocks.clone(), 10);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].area, 100);
        assert!(filter_by_area(blocks, 1000).is_empty());
    }

    #[test]
    fn sort_examples() {
        let blocks = vec![
            block(1, BBox::new(0, 0, 3, 3)),
            block(2, BBox::new(0, 0, 5, 5)),
            block(3, BBox::new(0, 0, 4, 4)),
        ];
        let top = sort_and_limit(blocks.clone(), 2);
        assert_eq!(top.iter().map(|b| b.area).collect::<Vec<_>>(), vec![25, 16]);
        assert_eq!(top.iter().map(|b| b.rank).collect::<Vec<_>>(), vec![0, 1]);

        let all = sort_and_limit(blocks, 10);
        assert_eq!(
            all.iter().map(|b| b.area).collect::<Vec<_>>(),
            vec![25, 16, 9]
        );
    }

    #[test]
    fn equal_areas_break_ties_in_reading_order() {
        // 12 unit-area boxes laid out on a 4x3 grid, fed in reverse.
        let mut blocks = Vec::new();
        for label in 0..12u32 {
            let (gx, gy) = (label % 4, label / 4);
            blocks.push(block(
                label + 1,
                BBox::new(gx * 3, gy * 3, gx * 3 + 1, gy * 3 + 1),
            ));
        }
        blocks.reverse();
        let top = sort_and_limit(blocks, 10);
        assert_eq!(top.len(), 10);
        let labels: Vec<u32> = top.iter().map(|b| b.source_component).collect();
        assert_eq!(labels, (1..=10).collect::<Vec<_>>());
    }

    #[test]
    fn three_squares() {
        let m = BinaryMask::from_fn(30, 10, |x, y| {
            (2..7).contains(&y)
                && ((2..7).contains(&x) || (12..17).contains(&x) || (22..27).contains(&x))
        })
        .unwrap();
        let cfg = LocalizerConfig {
            padding: 1,
            min_area: 4,
            max_blocks: 10,
            connectivity: Connectivity::Eight,
        };
        let blocks = localize(&m, &cfg);
        assert_eq!(blocks.len(), 3);
        let boxes: Vec<BBox> = blocks.iter().map(|b| b.bbox).collect();
        assert_eq!(
            boxes,
            vec![
                BBox::new(1, 1, 7, 7),
                BBox::new(11, 1, 17, 7),
                BBox::new(21, 1, 27, 7)
            ]
        );
        assert!(blocks.iter().all(|b| b.area == 36));
    }

    #[test]
    fn crop_region_is_inclusive() {
        let m = mask_with(4, 3, &[(1, 1), (2, 1)]);
        let c = crop_mask(&m, &BBox::new(1, 0, 2, 1)).unwrap();
        assert_eq!((c.width(), c.height()), (2, 2));
        assert_eq!(c.data(), &[0, 0, 1, 1]);
        assert!(crop_mask(&m, &BBox::new(0, 0, 4, 0)).is_err());
    }

    #[test]
    fn config_serde_uses_numeric_connectivity() {
        let json = serde_json::to_string(&LocalizerConfig::default()).unwrap();
        assert!(json.contains("\"connectivity\":8"));
        let cfg: LocalizerConfig = serde_json::from_str(r#"{"connectivity":4}"#).unwrap();
        assert_eq!(cfg.connectivity, Connectivity::Four);
        assert_eq!(cfg.max_blocks, 10);
        assert!(serde_json::from_str::<LocalizerConfig>(r#"{"connectivity":6}"#).is_err());
    }

    #[test]
    fn block_serializes_flat() {
        let b = block(3, BBox::new(1, 2, 3, 4));
        let v = serde_json::to_value(b).unwrap();
        assert_eq!(
            v,
            serde_json::json!({"rank":0,"x_min":1,"y_min":2,"x_max":3,"y_max":4,"area":4,"label":3})
        );
    }
}
