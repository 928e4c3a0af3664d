//! Clinic finder and education quiz.
//!
//! Both registries are static JSON documents loaded once; every query is a
//! pure function over them. Replacing the registry file and restarting is the
//! refresh path.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

const DEFAULT_CLINICS: &str = include_str!("../data/clinics.json");
const DEFAULT_QUIZ: &str = include_str!("../data/quiz.json");

#[derive(Debug, Error)]
pub enum ResourceError {
    #[error("invalid coordinates ({latitude}, {longitude})")]
    InvalidCoordinates { latitude: f64, longitude: f64 },
    #[error("search radius must be positive and finite, got {0}")]
    InvalidRadius(f64),
    #[error("unknown quiz item {0:?}")]
    UnknownItemId(String),
    #[error("invalid registry: {0}")]
    InvalidRegistry(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

fn check_coordinates(latitude: f64, longitude: f64) -> Result<(), ResourceError> {
    if latitude.is_finite()
        && longitude.is_finite()
        && (-90.0..=90.0).contains(&latitude)
        && (-180.0..=180.0).contains(&longitude)
    {
        Ok(())
    } else {
        Err(ResourceError::InvalidCoordinates { latitude, longitude })
    }
}

fn read(path: &Path) -> Result<String, ResourceError> {
    std::fs::read_to_string(path).map_err(|source| ResourceError::Io { path: path.display().to_string(), source })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClinicRecord {
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    pub accepts_medicaid: bool,
    #[serde(default)]
    pub phone: String,
    #[serde(default)]
    pub address: String,
}

/// Great-circle distance in kilometres.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().min(1.0).asin()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClinicRegistry {
    clinics: Vec<ClinicRecord>,
}

impl ClinicRegistry {
    pub fn new(clinics: Vec<ClinicRecord>) -> Result<Self, ResourceError> {
        for c in &clinics {
            check_coordinates(c.latitude, c.longitude)
                .map_err(|_| ResourceError::InvalidRegistry(format!("clinic {:?} has invalid coordinates", c.name)))?;
        }
        Ok(Self { clinics })
    }

    pub fn from_json(text: &str) -> Result<Self, ResourceError> {
        let clinics = serde_json::from_str(text).map_err(|e| ResourceError::InvalidRegistry(e.to_string()))?;
        Self::new(clinics)
    }

    pub fn from_path(path: &Path) -> Result<Self, ResourceError> {
        Self::from_json(&read(path)?)
    }

    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_CLINICS).expect("built-in clinic registry is valid")
    }

    pub fn clinics(&self) -> &[ClinicRecord] {
        &self.clinics
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NearbyClinic {
    #[serde(flatten)]
    pub clinic: ClinicRecord,
    pub distance_km: f64,
}

/// Clinics within `radius_km`, nearest first (ties by name).
pub fn nearby_clinics(
    latitude: f64,
    longitude: f64,
    radius_km: f64,
    medicaid_only: bool,
    registry: &ClinicRegistry,
) -> Result<Vec<NearbyClinic>, ResourceError> {
    check_coordinates(latitude, longitude)?;
    if !(radius_km.is_finite() && radius_km > 0.0) {
        return Err(ResourceError::InvalidRadius(radius_km));
    }
    let mut found: Vec<NearbyClinic> = registry
        .clinics
        .iter()
        .filter(|c| !medicaid_only || c.accepts_medicaid)
        .map(|c| NearbyClinic {
            distance_km: haversine_km(latitude, longitude, c.latitude, c.longitude),
            clinic: c.clone(),
        })
        .filter(|n| n.distance_km <= radius_km)
        .collect();
    found.sort_by(|a, b| a.distance_km.total_cmp(&b.distance_km).then_with(|| a.clinic.name.cmp(&b.clinic.name)));
    Ok(found)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuizTopic {
    PregnancyOralHealth,
    ToothDevelopment,
    Hygiene,
    Diet,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizOption {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizItem {
    pub id: String,
    pub topic: QuizTopic,
    pub text: String,
    pub options: Vec<QuizOption>,
    pub correct_option: String,
    pub explanation: String,
}

/// A quiz item as shown before answering.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicQuizItem {
    pub id: String,
    pub topic: QuizTopic,
    pub text: String,
    pub options: Vec<QuizOption>,
}

impl From<&QuizItem> for PublicQuizItem {
    fn from(item: &QuizItem) -> Self {
        Self { id: item.id.clone(), topic: item.topic, text: item.text.clone(), options: item.options.clone() }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QuizBank {
    items: Vec<QuizItem>,
}

impl QuizBank {
    pub fn new(items: Vec<QuizItem>) -> Result<Self, ResourceError> {
        let mut ids = HashSet::new();
        for item in &items {
            if !ids.insert(item.id.as_str()) {
                return Err(ResourceError::InvalidRegistry(format!("duplicate quiz item {:?}", item.id)));
            }
            if !item.options.iter().any(|o| o.id == item.correct_option) {
                return Err(ResourceError::InvalidRegistry(format!(
                    "quiz item {:?} names a correct option that does not exist",
                    item.id
                )));
            }
        }
        Ok(Self { items })
    }

    pub fn from_json(text: &str) -> Result<Self, ResourceError> {
        let items = serde_json::from_str(text).map_err(|e| ResourceError::InvalidRegistry(e.to_string()))?;
        Self::new(items)
    }

    pub fn from_path(path: &Path) -> Result<Self, ResourceError> {
        Self::from_json(&read(path)?)
    }

    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_QUIZ).expect("built-in quiz bank is valid")
    }

    pub fn items(&self) -> &[QuizItem] {
        &self.items
    }

    pub fn public_items(&self) -> Vec<PublicQuizItem> {
        self.items.iter().map(PublicQuizItem::from).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizItemResult {
    pub id: String,
    pub answered: Option<String>,
    pub correct: bool,
    /// Present only for wrong or missing answers.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuizScore {
    pub score: usize,
    pub total: usize,
    pub results: Vec<QuizItemResult>,
}

/// Scores `answers` (item id to option id) against the bank. Unanswered items
/// count as wrong.
pub fn score_quiz(items: &[QuizItem], answers: &BTreeMap<String, String>) -> Result<QuizScore, ResourceError> {
    if let Some(unknown) = answers.keys().find(|id| !items.iter().any(|i| &i.id == *id)) {
        return Err(ResourceError::UnknownItemId(unknown.clone()));
    }
    let results: Vec<QuizItemResult> = items
        .iter()
        .map(|item| {
            let answered = answers.get(&item.id).cloned();
            let correct = answered.as_deref() == Some(item.correct_option.as_str());
            QuizItemResult {
                id: item.id.clone(),
                answered,
                correct,
                explanation: (!correct).then(|| item.explanation.clone()),
            }
        })
        .collect();
    Ok(QuizScore { score: results.iter().filter(|r| r.correct).count(), total: items.len(), results })
}
