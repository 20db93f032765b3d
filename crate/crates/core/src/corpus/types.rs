use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// First and last exam year in the bank; 2010 has no sitting.
pub const FIRST_EXAM_YEAR: i32 = 1993;
pub const LAST_EXAM_YEAR: i32 = 2021;
pub const MISSING_EXAM_YEAR: i32 = 2010;
pub const MAX_PAGE_SIZE: usize = 100;

pub fn is_valid_exam_year(year: i32) -> bool {
    (FIRST_EXAM_YEAR..=LAST_EXAM_YEAR).contains(&year) && year != MISSING_EXAM_YEAR
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    TextbookDataset,
    SimpleEncyclopedia,
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "textbook_dataset" | "textbook" => Ok(Source::TextbookDataset),
            "simple_encyclopedia" | "encyclopedia" => Ok(Source::SimpleEncyclopedia),
            other => Err(format!("unknown source {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Paragraph {
    pub id: String,
    pub source: Source,
    pub heading: String,
    pub text: String,
    #[serde(default)]
    pub figure_refs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Passage {
    pub id: String,
    pub paragraph_id: String,
    pub ordinal: usize,
    pub text: String,
    pub sentence_count: usize,
    #[serde(default)]
    pub figure_refs: Vec<String>,
}

impl Passage {
    pub fn make_id(paragraph_id: &str, ordinal: usize) -> String {
        format!("{paragraph_id}#{ordinal}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Figure {
    pub id: String,
    pub caption: String,
    pub uri: String,
}

/// Exam paper part. Ordering follows paper layout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Section {
    Objectives,
    Theory,
    Practicals,
}

impl Section {
    pub const ALL: [Section; 3] = [Section::Objectives, Section::Theory, Section::Practicals];

    pub fn as_str(self) -> &'static str {
        match self {
            Section::Objectives => "objectives",
            Section::Theory => "theory",
            Section::Practicals => "practicals",
        }
    }
}

impl fmt::Display for Section {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Section {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "objectives" => Ok(Section::Objectives),
            "theory" => Ok(Section::Theory),
            "practicals" => Ok(Section::Practicals),
            other => Err(format!("unknown section {other:?}")),
        }
    }
}

/// Multiple-choice option letter.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum OptionKey {
    A,
    B,
    C,
    D,
}

impl OptionKey {
    pub const ALL: [OptionKey; 4] = [OptionKey::A, OptionKey::B, OptionKey::C, OptionKey::D];
}

impl FromStr for OptionKey {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_uppercase().as_str() {
            "A" => Ok(OptionKey::A),
            "B" => Ok(OptionKey::B),
            "C" => Ok(OptionKey::C),
            "D" => Ok(OptionKey::D),
            _ => Err("invalid answer key".into()),
        }
    }
}

impl fmt::Display for OptionKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExamQuestion {
    pub id: String,
    pub year: i32,
    pub exam_label: String,
    pub section: Section,
    pub number: String,
    pub text: String,
    /// Present for objectives questions only, always with all four keys.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub options: Option<BTreeMap<OptionKey, String>>,
    pub answer: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub explanation: Option<String>,
    #[serde(default)]
    pub figure_refs: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub topic: Option<String>,
}

impl ExamQuestion {
    pub fn make_id(year: i32, exam_label: &str, section: Section, number: &str) -> String {
        let slug: String = exam_label
            .trim()
            .chars()
            .map(|c| {
                if c.is_alphanumeric() {
                    c.to_ascii_lowercase()
                } else {
                    '-'
                }
            })
            .collect();
        format!("{year}/{slug}/{section}/{}", number.trim())
    }

    /// Check the record-level invariants.
    pub fn validate(&self) -> Result<(), String> {
        if !is_valid_exam_year(self.year) {
            return Err(format!(
                "year {} outside {FIRST_EXAM_YEAR}..={LAST_EXAM_YEAR} or is {MISSING_EXAM_YEAR}",
                self.year
            ));
        }
        if self.text.trim().is_empty() {
            return Err("empty question text".into());
        }
        match self.section {
            Section::Objectives => {
                let options = self
                    .options
                    .as_ref()
                    .ok_or("objectives question without options")?;
                if options.len() != 4 || options.values().any(|o| o.trim().is_empty()) {
                    return Err("objectives question needs exactly 4 options".into());
                }
                self.answer.parse::<OptionKey>()?;
            }
            Section::Theory | Section::Practicals => {
                if self.options.is_some() {
                    return Err("options are only allowed on objectives questions".into());
                }
                if self.explanation.is_some() {
                    return Err("explanations are only allowed on objectives questions".into());
                }
            }
        }
        Ok(())
    }
}

/// Criteria for browsing the question bank. Unset fields match anything.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionFilter {
    #[serde(default)]
    pub year: Option<i32>,
    #[serde(default)]
    pub exam_label: Option<String>,
    #[serde(default)]
    pub section: Option<Section>,
    #[serde(default)]
    pub topic: Option<String>,
    #[serde(default = "default_page")]
    pub page: usize,
    #[serde(default = "default_page_size")]
    pub page_size: usize,
}

fn default_page() -> usize {
    1
}

fn default_page_size() -> usize {
    20
}

impl Default for QuestionFilter {
    fn default() -> Self {
        Self {
            year: None,
            exam_label: None,
            section: None,
            topic: None,
            page: default_page(),
            page_size: default_page_size(),
        }
    }
}

impl QuestionFilter {
    pub fn validate(&self) -> Result<(), String> {
        if self.page == 0 {
            return Err("page must be at least 1".into());
        }
        if self.page_size == 0 || self.page_size > MAX_PAGE_SIZE {
            return Err(format!("page_size must be in 1..={MAX_PAGE_SIZE}"));
        }
        Ok(())
    }

    pub fn matches(&self, q: &ExamQuestion) -> bool {
        self.year.is_none_or(|y| q.year == y)
            && self.exam_label.as_ref().is_none_or(|e| &q.exam_label == e)
            && self.section.is_none_or(|s| q.section == s)
            && self
                .topic
                .as_ref()
                .is_none_or(|t| q.topic.as_ref() == Some(t))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Page<T> {
    pub items: Vec<T>,
    pub total: usize,
}
