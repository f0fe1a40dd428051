//! Contextual scoring and confidence-gated routing.
//!
//! Each candidate recognition (full image, crop) is compared with the scene
//! description semantically (embedding cosine) and lexically (edit ratio).
//! The candidate with the higher semantic score wins, ties going to the
//! crop; its weighted score is the confidence. Confidence below `tau`
//! routes the unit to the fallback recognizer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lexsem::{cosine_similarity, Embedding, LexicalMode, NormalizedText};

/// Full-image recognition, scene description, crop recognition.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CandidateTexts {
    pub t1: NormalizedText,
    pub t2: NormalizedText,
    pub t3: NormalizedText,
}

impl CandidateTexts {
    pub fn new(t1: &str, t2: &str, t3: &str) -> Self {
        Self {
            t1: t1.into(),
            t2: t2.into(),
            t3: t3.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GateConfig {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub lexical: LexicalMode,
}

impl Default for GateConfig {
    fn default() -> Self {
        Self {
            alpha: 0.6,
            beta: 0.4,
            tau: 0.8,
            lexical: LexicalMode::WholeString,
        }
    }
}

impl GateConfig {
    pub fn new(alpha: f64, beta: f64, tau: f64) -> Result<Self> {
        let cfg = Self {
            alpha,
            beta,
            tau,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let finite = self.alpha.is_finite() && self.beta.is_finite() && self.tau.is_finite();
        if !finite || self.alpha < 0.0 || self.beta < 0.0 {
            return Err(Error::Config(format!(
                "weights must be non-negative, got alpha={} beta={}",
                self.alpha, self.beta
            )));
        }
        if (self.alpha + self.beta - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "alpha + beta must equal 1, got {}",
                self.alpha + self.beta
            )));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!(
                "tau must lie in [0, 1], got {}",
                self.tau
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Selected {
    T1,
    T3,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreBreakdown {
    pub s1: f64,
    pub s3: f64,
    pub l1: f64,
    pub l3: f64,
    pub selected: Selected,
    pub selected_text: NormalizedText,
    pub s_selected: f64,
    pub l_selected: f64,
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Confident { final_text: NormalizedText },
    Fallback,
}

impl Outcome {
    pub fn is_fallback(&self) -> bool {
        matches!(self, Outcome::Fallback)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoutingDecision {
    pub outcome: Outcome,
    pub breakdown: ScoreBreakdown,
}

/// Scores one gated unit. `e1`, `e2`, `e3` embed `t1`, `t2`, `t3`.
pub fn score(
    c: &CandidateTexts,
    e1: &Embedding,
    e2: &Embedding,
    e3: &Embedding,
    cfg: &GateConfig,
) -> Result<ScoreBreakdown> {
    let s1 = cosine_similarity(e1, e2)?;
    let s3 = cosine_similarity(e3, e2)?;
    let l1 = cfg.lexical.score(&c.t1, &c.t2);
    let l3 = cfg.lexical.score(&c.t3, &c.t2);
    let (selected, selected_text, s_selected, l_selected) = if s1 > s3 {
        (Selected::T1, &c.t1, s1, l1)
    } else {
        (Selected::T3, &c.t3, s3, l3)
    };
    Ok(ScoreBreakdown {
        s1,
        s3,
        l1,
        l3,
        selected,
        selected_text: selected_text.clone(),
        s_selected,
        l_selected,
        confidence: cfg.alpha * s_selected + cfg.beta * l_selected,
    })
}

/// Confident when `confidence >= tau`, fallback otherwise.
pub fn route(b: &ScoreBreakdown, cfg: &GateConfig) -> RoutingDecision {
    let outcome = if b.confidence < cfg.tau {
        Outcome::Fallback
    } else {
        Outcome::Confident {
            final_text: b.selected_text.clone(),
        }
    };
    RoutingDecision {
        outcome,
        breakdown: b.clone(),
    }
}

/// How block-level decisions combine into the image-level fallback call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImagePolicy {
    /// Fall back if any block falls back.
    #[default]
    Any,
    /// Fall back only if every block falls back.
    All,
    /// Fall back if more than half of the blocks fall back.
    Majority,
}

impl ImagePolicy {
    /// Whether an image with these block outcomes is sent to the fallback
    /// recognizer. An image with no blocks never is.
    pub fn image_falls_back<'a>(self, outcomes: impl IntoIterator<Item = &'a Outcome>) -> bool {
        let (mut total, mut fallbacks) = (0usize, 0usize);
        for o in outcomes {
            total += 1;
            fallbacks += usize::from(o.is_fallback());
        }
        if total == 0 {
            return false;
        }
        match self {
            ImagePolicy::Any => fallbacks > 0,
            ImagePolicy::All => fallbacks == total,
            ImagePolicy::Majority => 2 * fallbacks > total,
        }
    }
}

impl std::str::FromStr for ImagePolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "any" => Ok(ImagePolicy::Any),
            "all" => Ok(ImagePolicy::All),
            "majority" => Ok(ImagePolicy::Majority),
            other => Err(Error::Config(format!("unknown image policy {other:?}"))),
        }
    }
}
