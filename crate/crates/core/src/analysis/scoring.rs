//! Questionnaire scoring for PANAS and PXI.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::AnalysisError;

pub const PANAS_ITEMS: usize = 10;
pub const PXI_ITEMS_PER_CONSTRUCT: usize = 3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PanasResponse {
    pub positive_items: Vec<u8>,
    pub negative_items: Vec<u8>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PanasScore {
    pub positive_affect: u32,
    pub negative_affect: u32,
}

impl PanasResponse {
    pub fn validate(&self) -> Result<(), AnalysisError> {
        for (scale, items) in [("positive", &self.positive_items), ("negative", &self.negative_items)] {
            if items.len() != PANAS_ITEMS {
                return Err(AnalysisError::Item(format!(
                    "{scale} scale has {} items, expected {PANAS_ITEMS}",
                    items.len()
                )));
            }
            if let Some((i, v)) = items.iter().enumerate().find(|(_, v)| !(1..=5).contains(*v)) {
                return Err(AnalysisError::Item(format!(
                    "{scale} item {} = {v} outside [1, 5]",
                    i + 1
                )));
            }
        }
        Ok(())
    }
}

pub fn score_panas(r: &PanasResponse) -> Result<PanasScore, AnalysisError> {
    r.validate()?;
    let sum = |items: &[u8]| items.iter().map(|&v| u32::from(v)).sum();
    Ok(PanasScore {
        positive_affect: sum(&r.positive_items),
        negative_affect: sum(&r.negative_items),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PxiConstruct {
    EaseOfControl,
    Challenge,
    ProgressFeedback,
    GoalsAndRules,
    AudioVisualAppeal,
    Meaning,
    Immersion,
    Mastery,
    Curiosity,
    Autonomy,
}

impl PxiConstruct {
    pub const ALL: [PxiConstruct; 10] = [
        PxiConstruct::EaseOfControl,
        PxiConstruct::Challenge,
        PxiConstruct::ProgressFeedback,
        PxiConstruct::GoalsAndRules,
        PxiConstruct::AudioVisualAppeal,
        PxiConstruct::Meaning,
        PxiConstruct::Immersion,
        PxiConstruct::Mastery,
        PxiConstruct::Curiosity,
        PxiConstruct::Autonomy,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PxiConstruct::EaseOfControl => "Ease of Control",
            PxiConstruct::Challenge => "Challenge",
            PxiConstruct::ProgressFeedback => "Progress Feedback",
            PxiConstruct::GoalsAndRules => "Goals and Rules",
            PxiConstruct::AudioVisualAppeal => "Audio-visual Appeal",
            PxiConstruct::Meaning => "Meaning",
            PxiConstruct::Immersion => "Immersion",
            PxiConstruct::Mastery => "Mastery",
            PxiConstruct::Curiosity => "Curiosity",
            PxiConstruct::Autonomy => "Autonomy",
        }
    }

    pub fn is_functional(self) -> bool {
        matches!(
            self,
            PxiConstruct::EaseOfControl
                | PxiConstruct::Challenge
                | PxiConstruct::ProgressFeedback
                | PxiConstruct::GoalsAndRules
                | PxiConstruct::AudioVisualAppeal
        )
    }
}

impl fmt::Display for PxiConstruct {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PxiConstruct {
    type Err = AnalysisError;

    /// Case-insensitive; ignores spaces, hyphens, underscores and "and"/"&" spelling.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let key: String = s
            .to_ascii_lowercase()
            .replace('&', "and")
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect();
        PxiConstruct::ALL
            .into_iter()
            .find(|c| {
                let name: String =
                    c.name().to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
                name == key
            })
            .ok_or_else(|| AnalysisError::Item(format!("unknown PXI construct {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PxiItem {
    /// Construct name as written on the form; unknown names are kept but not scored.
    pub construct: String,
    pub value: i8,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PxiResponse {
    pub items: Vec<PxiItem>,
}

/// Per-construct means plus any items outside the ten scored constructs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PxiScore {
    pub constructs: BTreeMap<PxiConstruct, f64>,
    pub unscored: Vec<PxiItem>,
}

impl PxiScore {
    pub fn get(&self, c: PxiConstruct) -> f64 {
        self.constructs[&c]
    }
}

pub fn score_pxi(r: &PxiResponse) -> Result<PxiScore, AnalysisError> {
    if r.items.len() != 30 && r.items.len() != 33 {
        return Err(AnalysisError::Item(format!(
            "PXI response has {} items, expected 30 or 33",
            r.items.len()
        )));
    }
    let mut grouped: BTreeMap<PxiConstruct, Vec<i8>> = BTreeMap::new();
    let mut unscored = Vec::new();
    for (i, item) in r.items.iter().enumerate() {
        if !(-3..=3).contains(&item.value) {
            return Err(AnalysisError::Item(format!(
                "PXI item {} ({}) = {} outside [-3, 3]",
                i + 1,
                item.construct,
                item.value
            )));
        }
        match item.construct.parse::<PxiConstruct>() {
            Ok(c) => grouped.entry(c).or_default().push(item.value),
            Err(_) => unscored.push(item.clone()),
        }
    }
    let mut constructs = BTreeMap::new();
    for c in PxiConstruct::ALL {
        let values = grouped.get(&c).map(Vec::as_slice).unwrap_or(&[]);
        if values.len() != PXI_ITEMS_PER_CONSTRUCT {
            return Err(AnalysisError::Item(format!(
                "construct {c} has {} items, expected {PXI_ITEMS_PER_CONSTRUCT}",
                values.len()
            )));
        }
        let mean = values.iter().map(|&v| f64::from(v)).sum::<f64>() / values.len() as f64;
        constructs.insert(c, mean);
    }
    Ok(PxiScore { constructs, unscored })
}
