//! Caregiver questionnaire scoring and fusion with visual findings.
//!
//! The questionnaire alone yields Low, Moderate or High. Visual findings can
//! only raise that: any level2 (cavitated) detection makes the report Urgent,
//! and any level1 (early lesion) detection lifts it to at least Moderate.

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::GroupTable;
use crate::detection::{Detection, SeverityGroup};
use crate::geometry::BoundingBox;

const DEFAULT_FORM: &str = include_str!("../data/questionnaire.json");
const MAX_OPTION_POINTS: u32 = 3;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RiskError {
    #[error("unknown question id {0:?}")]
    UnknownQuestionId(String),
    #[error("question {question:?} has no option {option:?}")]
    UnknownOptionId { question: String, option: String },
    #[error("questionnaire is incomplete; missing {missing:?}")]
    IncompleteResponse { missing: Vec<String> },
    #[error("invalid form definition: {0}")]
    InvalidForm(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FactorCategory {
    Diet,
    Hygiene,
    Fluoride,
    Medical,
    Social,
}

impl FactorCategory {
    pub const ALL: [FactorCategory; 5] = [
        FactorCategory::Diet,
        FactorCategory::Hygiene,
        FactorCategory::Fluoride,
        FactorCategory::Medical,
        FactorCategory::Social,
    ];

    fn tip(self) -> &'static str {
        match self {
            FactorCategory::Diet => "Cut down on sweet drinks and snacks between meals. Offer water instead.",
            FactorCategory::Hygiene => "Brush your child's teeth twice a day, and always before bed.",
            FactorCategory::Fluoride => {
                "Use a fluoride toothpaste and ask the dentist or doctor about fluoride varnish."
            }
            FactorCategory::Medical => {
                "Tell the dentist about past cavities or health conditions so they can plan extra prevention."
            }
            FactorCategory::Social => {
                "Use the clinic finder to locate a dentist near you that accepts Medicaid or low-cost plans."
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnswerOption {
    pub id: String,
    pub text: String,
    pub points: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub id: String,
    pub category: FactorCategory,
    pub text: String,
    pub plain_text: String,
    pub options: Vec<AnswerOption>,
}

impl Question {
    fn option(&self, id: &str) -> Option<&AnswerOption> {
        self.options.iter().find(|o| o.id == id)
    }
}

/// Level cut-offs: Low when total <= t1, Moderate when total <= t2, else High.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Thresholds {
    pub t1: u32,
    pub t2: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireForm {
    #[serde(default)]
    pub title: String,
    pub thresholds: Thresholds,
    pub questions: Vec<Question>,
}

impl QuestionnaireForm {
    pub fn from_json(text: &str) -> Result<Self, RiskError> {
        let form: QuestionnaireForm = serde_json::from_str(text).map_err(|e| RiskError::InvalidForm(e.to_string()))?;
        form.validate()?;
        Ok(form)
    }

    /// The form shipped with the crate.
    pub fn builtin() -> Self {
        Self::from_json(DEFAULT_FORM).expect("built-in questionnaire is valid")
    }

    pub fn validate(&self) -> Result<(), RiskError> {
        let invalid = |m: String| Err(RiskError::InvalidForm(m));
        if self.questions.is_empty() {
            return invalid("form has no questions".into());
        }
        if self.thresholds.t1 >= self.thresholds.t2 {
            return invalid("thresholds must satisfy t1 < t2".into());
        }
        let mut ids = HashSet::new();
        for q in &self.questions {
            if !ids.insert(q.id.as_str()) {
                return invalid(format!("duplicate question id {:?}", q.id));
            }
            if q.options.len() < 2 {
                return invalid(format!("question {:?} needs at least two options", q.id));
            }
            let mut opts = HashSet::new();
            for o in &q.options {
                if !opts.insert(o.id.as_str()) {
                    return invalid(format!("question {:?} repeats option {:?}", q.id, o.id));
                }
                if o.points > MAX_OPTION_POINTS {
                    return invalid(format!("option {:?}/{:?} exceeds {MAX_OPTION_POINTS} points", q.id, o.id));
                }
            }
        }
        Ok(())
    }

    pub fn question(&self, id: &str) -> Option<&Question> {
        self.questions.iter().find(|q| q.id == id)
    }

    pub fn max_points(&self) -> u32 {
        self.questions.iter().map(|q| q.options.iter().map(|o| o.points).max().unwrap_or(0)).sum()
    }

    pub fn level_for(&self, total: u32) -> RiskLevel {
        if total <= self.thresholds.t1 {
            RiskLevel::Low
        } else if total <= self.thresholds.t2 {
            RiskLevel::Moderate
        } else {
            RiskLevel::High
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct QuestionnaireResponse {
    /// Question id to chosen option id.
    pub answers: BTreeMap<String, String>,
}

impl QuestionnaireResponse {
    pub fn answer(mut self, question: &str, option: &str) -> Self {
        self.answers.insert(question.to_string(), option.to_string());
        self
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseCheck {
    pub complete: bool,
    /// Unanswered question ids, in form order.
    pub missing: Vec<String>,
}

pub fn validate_response(
    form: &QuestionnaireForm,
    response: &QuestionnaireResponse,
) -> Result<ResponseCheck, RiskError> {
    for (qid, oid) in &response.answers {
        let q = form.question(qid).ok_or_else(|| RiskError::UnknownQuestionId(qid.clone()))?;
        if q.option(oid).is_none() {
            return Err(RiskError::UnknownOptionId { question: qid.clone(), option: oid.clone() });
        }
    }
    let missing: Vec<String> =
        form.questions.iter().filter(|q| !response.answers.contains_key(&q.id)).map(|q| q.id.clone()).collect();
    Ok(ResponseCheck { complete: missing.is_empty(), missing })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RiskLevel {
    Low,
    Moderate,
    High,
    Urgent,
}

impl std::fmt::Display for RiskLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            RiskLevel::Low => "Low",
            RiskLevel::Moderate => "Moderate",
            RiskLevel::High => "High",
            RiskLevel::Urgent => "Urgent",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuestionnaireScore {
    pub total: u32,
    pub max_possible: u32,
    pub by_category: BTreeMap<FactorCategory, u32>,
    pub level: RiskLevel,
}

pub fn score_questionnaire(
    form: &QuestionnaireForm,
    response: &QuestionnaireResponse,
) -> Result<QuestionnaireScore, RiskError> {
    let check = validate_response(form, response)?;
    if !check.complete {
        return Err(RiskError::IncompleteResponse { missing: check.missing });
    }
    let mut by_category: BTreeMap<FactorCategory, u32> = FactorCategory::ALL.iter().map(|&c| (c, 0)).collect();
    let mut total = 0;
    for q in &form.questions {
        let points = q.option(&response.answers[&q.id]).map_or(0, |o| o.points);
        total += points;
        *by_category.entry(q.category).or_default() += points;
    }
    Ok(QuestionnaireScore { total, max_possible: form.max_points(), by_category, level: form.level_for(total) })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Finding {
    pub group: SeverityGroup,
    pub score: f64,
    #[serde(rename = "box")]
    pub bbox: BoundingBox,
    pub color: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub counts: GroupTable<u64>,
    pub max_severity: Option<SeverityGroup>,
    pub findings: Vec<Finding>,
}

impl DetectionSummary {
    fn from_detections(detections: &[Detection]) -> Self {
        let counts = GroupTable::from_fn(|g| detections.iter().filter(|d| d.group == g).count() as u64);
        let max_severity = detections.iter().map(|d| d.group).max_by_key(|g| g.severity_rank());
        let findings = detections
            .iter()
            .map(|d| Finding {
                group: d.group,
                score: d.score,
                bbox: d.bbox,
                color: d.group.overlay_color().to_string(),
            })
            .collect();
        Self { counts, max_severity, findings }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub level: RiskLevel,
    pub detections: DetectionSummary,
    pub questionnaire: Option<QuestionnaireScore>,
    pub recommendations: Vec<String>,
    pub referral: bool,
}

pub const URGENT_REFERRAL: &str =
    "Severe tooth decay was found. Please contact a dentist right away; do not wait for a routine check-up.";
const HIGH_REFERRAL: &str = "Your child has several risk factors for tooth decay. Please book a dental visit soon.";
const EARLY_LESION: &str = "Early signs of decay (white spots) were found. These can often be reversed with \
                            fluoride and good brushing, so schedule a dental check-up.";
const MODERATE_ADVICE: &str = "Your child has some risk factors for tooth decay. A dental check-up within the next \
                               few months is a good idea.";
const PREVENTIVE_ADVICE: &str = "Keep up the good habits: brush twice a day with a small smear of fluoride \
                                 toothpaste, limit sweet drinks, and keep regular dental check-ups.";
const COVERED_TEETH: &str = "Some teeth are covered by braces, crowns or other devices and could not be checked.";
const NO_QUESTIONNAIRE: &str = "Answer the risk questions to get advice that fits your child's habits.";

/// Fuses visual findings with the questionnaire outcome.
pub fn assess(detections: &[Detection], questionnaire: Option<&QuestionnaireScore>) -> RiskReport {
    let summary = DetectionSummary::from_detections(detections);
    let base = questionnaire.map_or(RiskLevel::Low, |q| q.level);
    let level = if summary.counts.level2 > 0 {
        RiskLevel::Urgent
    } else if summary.counts.level1 > 0 {
        base.max(RiskLevel::Moderate)
    } else {
        base
    };

    let mut recommendations = Vec::new();
    match level {
        RiskLevel::Urgent => recommendations.push(URGENT_REFERRAL.to_string()),
        RiskLevel::High => recommendations.push(HIGH_REFERRAL.to_string()),
        RiskLevel::Moderate => recommendations.push(MODERATE_ADVICE.to_string()),
        RiskLevel::Low => recommendations.push(PREVENTIVE_ADVICE.to_string()),
    }
    if summary.counts.level1 > 0 {
        recommendations.push(EARLY_LESION.to_string());
    }
    if summary.counts.other > 0 {
        recommendations.push(COVERED_TEETH.to_string());
    }
    match questionnaire {
        Some(q) => {
            recommendations.extend(q.by_category.iter().filter(|(_, &p)| p > 0).map(|(c, _)| c.tip().to_string()))
        }
        None => recommendations.push(NO_QUESTIONNAIRE.to_string()),
    }

    RiskReport {
        level,
        referral: level >= RiskLevel::High,
        detections: summary,
        questionnaire: questionnaire.cloned(),
        recommendations,
    }
}

/// Deterministic plain-text rendering of a report.
pub fn render_report(report: &RiskReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "ORAL HEALTH SCREENING REPORT");
    let _ = writeln!(out, "Risk level: {}", report.level);
    if report.level == RiskLevel::Urgent {
        let _ = writeln!(out, "SEE A DENTIST IMMEDIATELY. {URGENT_REFERRAL}");
    } else if report.referral {
        let _ = writeln!(out, "Referral recommended: {HIGH_REFERRAL}");
    }
    let c = &report.detections.counts;
    let _ = writeln!(
        out,
        "Teeth checked: {} normal, {} early decay (level1), {} severe decay (level2), {} covered (other)",
        c.normal, c.level1, c.level2, c.other
    );
    if report.detections.findings.is_empty() {
        let _ = writeln!(out, "Findings: none");
    } else {
        let _ = writeln!(out, "Findings:");
        for f in &report.detections.findings {
            let _ = writeln!(
                out,
                "  - {} ({}) confidence {:.2} at [{:.3}, {:.3}, {:.3}, {:.3}]",
                f.group,
                f.color,
                f.score,
                f.bbox.x_min(),
                f.bbox.y_min(),
                f.bbox.x_max(),
                f.bbox.y_max()
            );
        }
    }
    match &report.questionnaire {
        Some(q) => {
            let parts: Vec<String> = q.by_category.iter().map(|(c, p)| format!("{c:?} {p}").to_lowercase()).collect();
            let _ = writeln!(
                out,
                "Questionnaire: {} of {} points ({}); {}",
                q.total,
                q.max_possible,
                q.level,
                parts.join(", ")
            );
        }
        None => {
            let _ = writeln!(out, "Questionnaire: not answered");
        }
    }
    let _ = writeln!(out, "What to do next:");
    for r in &report.recommendations {
        let _ = writeln!(out, "  - {r}");
    }
    let _ = writeln!(out, "This screening does not replace an examination by a dentist.");
    out
}
