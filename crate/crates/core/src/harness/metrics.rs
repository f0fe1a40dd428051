use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gate::{GateConfig, Outcome};
use crate::lexsem::{normalize, NormalizedText};
use crate::maskio::BinaryMask;

use super::pipeline::{EvalRecord, Scenario};

/// Aggregate counts over a batch of records. One row of `metrics.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<Scenario>,
    pub images: usize,
    pub failed_images: usize,
    pub gated_units: usize,
    pub ground_truth_instances: usize,
    pub matched: usize,
    pub accuracy: f64,
    /// Confident (context-based) decisions.
    pub cbr: usize,
    pub fallbacks: usize,
    /// Confident decisions whose text matches no ground truth.
    pub false_positives: usize,
    pub fallback_calls: usize,
}

impl MetricsReport {
    pub fn with_setting(mut self, label: impl Into<String>, gate: &GateConfig) -> Self {
        self.label = label.into();
        self.alpha = Some(gate.alpha);
        self.beta = Some(gate.beta);
        self.tau = Some(gate.tau);
        self
    }
}

/// Greedily pairs each candidate with an unused equal ground-truth string.
/// Returns how many candidates found a partner.
fn greedy_matches<'a>(
    candidates: impl IntoIterator<Item = &'a NormalizedText>,
    truth: &[String],
) -> usize {
    let mut pool: Vec<Option<NormalizedText>> = truth.iter().map(|t| Some(normalize(t))).collect();
    let mut matched = 0;
    for c in candidates {
        if let Some(slot) = pool.iter_mut().find(|s| s.as_ref() == Some(c)) {
            *slot = None;
            matched += 1;
        }
    }
    matched
}

/// Accuracy is matched ground-truth instances over all instances (1.0 when
/// there are none). Failed images still contribute their ground truth.
pub fn compute_metrics(records: &[EvalRecord]) -> MetricsReport {
    let mut r = MetricsReport {
        label: String::new(),
        alpha: None,
        beta: None,
        tau: None,
        scenario: None,
        images: records.len(),
        failed_images: 0,
        gated_units: 0,
        ground_truth_instances: 0,
        matched: 0,
        accuracy: 0.0,
        cbr: 0,
        fallbacks: 0,
        false_positives: 0,
        fallback_calls: 0,
    };
    for rec in records {
        r.ground_truth_instances += rec.ground_truth.len();
        r.fallback_calls += rec.adapter_calls.fallback as usize;
        if rec.failed() {
            r.failed_images += 1;
        }
        r.gated_units += rec.decisions.len();
        let confident: Vec<&NormalizedText> = rec
            .decisions
            .iter()
            .filter_map(|d| match d {
                Outcome::Confident { final_text } => Some(final_text),
                Outcome::Fallback => None,
            })
            .collect();
        r.cbr += confident.len();
        r.fallbacks += rec.decisions.len() - confident.len();
        r.false_positives +=
            confident.len() - greedy_matches(confident.iter().copied(), &rec.ground_truth);
        r.matched += greedy_matches(&rec.final_texts, &rec.ground_truth);
    }
    r.accuracy = if r.ground_truth_instances == 0 {
        1.0
    } else {
        r.matched as f64 / r.ground_truth_instances as f64
    };
    r
}

struct Overlap {
    pred: usize,
    gt: usize,
    both: usize,
}

fn overlap(pred: &BinaryMask, gt: &BinaryMask) -> Result<Overlap> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(Error::Contract(format!(
            "mask dimensions differ: {}x{} vs {}x{}",
            pred.width(),
            pred.height(),
            gt.width(),
            gt.height()
        )));
    }
    let mut o = Overlap {
        pred: 0,
        gt: 0,
        both: 0,
    };
    for (&p, &g) in pred.data().iter().zip(gt.data()) {
        o.pred += p as usize;
        o.gt += g as usize;
        o.both += (p & g) as usize;
    }
    Ok(o)
}

/// Foreground intersection over union; 1.0 when both masks are empty.
pub fn fg_iou(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let o = overlap(pred, gt)?;
    let union = o.pred + o.gt - o.both;
    Ok(if union == 0 {
        1.0
    } else {
        o.both as f64 / union as f64
    })
}

/// Foreground F1, `2|P∩G| / (|P| + |G|)`; 1.0 when both masks are empty.
pub fn f1_foreground(pred: &BinaryMask, gt: &BinaryMask) -> Result<f64> {
    let o = overlap(pred, gt)?;
    let total = o.pred + o.gt;
    Ok(if total == 0 {
        1.0
    } else {
        (2 * o.both) as f64 / total as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gate::Outcome;
    use crate::harness::pipeline::AdapterCalls;

    fn record(id: &str, decisions: Vec<Outcome>, finals: &[&str], truth: &[&str]) -> EvalRecord {
        EvalRecord {
            image_id: id.into(),
            embedder: "toy".into(),
            blocks: vec![],
            candidates: vec![],
            breakdowns: vec![],
            decisions,
            image_fallback: false,
            final_texts: finals.iter().map(|s| NormalizedText::new(s)).collect(),
            ground_truth: truth.iter().map(|s| s.to_string()).collect(),
            adapter_calls: AdapterCalls::default(),
            warnings: vec![],
            error: None,
        }
    }

    fn confident(t: &str) -> Outcome {
        Outcome::Confident {
            final_text: t.into(),
        }
    }

    #[test]
    fn single_match() {
        let m = compute_metrics(&[record("a", vec![confident("exit")], &["exit"], &["exit"])]);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!((m.cbr, m.fallbacks, m.false_positives), (1, 0, 0));
    }

    #[test]
    fn three_confident_one_wrong() {
        let recs = vec![
            record("a", vec![confident("exit")], &["exit"], &["EXIT"]),
            record("b", vec![confident("stop")], &["stop"], &["stop"]),
            record("c", vec![confident("hotol")], &["hotol"], &["hotel"]),
        ];
        let m = compute_metrics(&recs);
        assert_eq!(m.cbr, 3);
        assert_eq!(m.false_positives, 1);
        assert!((m.accuracy - 2.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn matching_is_one_to_one() {
        // Two predictions of "exit" can consume only one "exit" instance.
        let m = compute_metrics(&[record("a", vec![], &["exit", "exit"], &["exit", "open"])]);
        assert_eq!(m.matched, 1);
        assert_eq!(m.accuracy, 0.5);
        assert_eq!(m.gated_units, 0);
    }

    #[test]
    fn empty_batch() {
        let m = compute_metrics(&[]);
        assert_eq!((m.images, m.cbr, m.fallbacks), (0, 0, 0));
    }

    fn mask(w: u32, h: u32, fg: &[(u32, u32)]) -> BinaryMask {
        BinaryMask::from_fn(w, h, |x, y| fg.contains(&(x, y))).unwrap()
    }

    #[test]
    fn mask_metric_examples() {
        let p = mask(3, 3, &[(0, 0), (1, 0)]);
        let g = mask(3, 3, &[(1, 0), (2, 0)]);
        assert_eq!(fg_iou(&p, &g).unwrap(), 1.0 / 3.0);
        assert_eq!(f1_foreground(&p, &g).unwrap(), 0.5);
        assert_eq!(fg_iou(&p, &p).unwrap(), 1.0);
        assert_eq!(f1_foreground(&p, &p).unwrap(), 1.0);
        let d = mask(3, 3, &[(2, 2)]);
        assert_eq!(fg_iou(&p, &d).unwrap(), 0.0);
        assert_eq!(f1_foreground(&p, &d).unwrap(), 0.0);
        let z = BinaryMask::zeros(3, 3).unwrap();
        assert_eq!(fg_iou(&z, &z).unwrap(), 1.0);
        assert_eq!(f1_foreground(&z, &z).unwrap(), 1.0);
        assert!(fg_iou(&z, &BinaryMask::zeros(3, 4).unwrap()).is_err());
        assert!(f1_foreground(&z, &BinaryMask::zeros(4, 3).unwrap()).is_err());
    }
}
