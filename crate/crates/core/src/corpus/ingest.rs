use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{
    CorpusError, CorpusStore, ExamQuestion, Figure, OptionKey, Paragraph, Passage, Section, Source,
    MAX_REJECT_FRACTION,
};
use crate::segmenter::{make_passages, split_sentences, DEFAULT_GROUP_SIZE};

/// Exact header of an exam CSV file.
pub const EXAM_CSV_HEADER: [&str; 12] = [
    "year",
    "exam_label",
    "section",
    "number",
    "question",
    "option_a",
    "option_b",
    "option_c",
    "option_d",
    "answer",
    "explanation",
    "figure_ids",
];

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LineDiagnostic {
    pub line: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct IngestReport {
    pub paragraphs: usize,
    pub passages: usize,
    pub figures: usize,
    pub rejected: Vec<LineDiagnostic>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ExamIngestReport {
    pub accepted: usize,
    pub per_section: BTreeMap<Section, usize>,
    pub rejected: Vec<LineDiagnostic>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ParagraphLine {
    id: String,
    #[serde(default)]
    source: Option<Source>,
    #[serde(default)]
    heading: String,
    text: String,
    #[serde(default)]
    figure_refs: Vec<String>,
}

fn open(path: &Path) -> Result<File, CorpusError> {
    File::open(path).map_err(|source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    })
}

impl CorpusStore {
    /// Load a figure manifest (JSON lines with `id`, `caption`, `uri`).
    pub fn ingest_figures(&mut self, path: impl AsRef<Path>) -> Result<IngestReport, CorpusError> {
        let path = path.as_ref();
        let name = path.display().to_string();
        let mut report = IngestReport::default();
        let mut figures = Vec::new();
        let mut total = 0;
        for (i, line) in BufReader::new(open(path)?).lines().enumerate() {
            let line = line.map_err(|source| CorpusError::Io {
                path: name.clone(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            total += 1;
            match serde_json::from_str::<Figure>(&line) {
                Ok(f) if f.id.trim().is_empty() => report.rejected.push(LineDiagnostic {
                    line: i + 1,
                    reason: "empty figure id".into(),
                }),
                Ok(f) => figures.push(f),
                Err(e) => report.rejected.push(LineDiagnostic {
                    line: i + 1,
                    reason: e.to_string(),
                }),
            }
        }
        check_reject_rate(&name, total, &report.rejected)?;
        report.figures = figures.len();
        for f in figures {
            self.add_figure(f);
        }
        Ok(report)
    }

    /// Ingest a JSON-lines paragraph file, splitting each paragraph into
    /// passages of up to three sentences.
    ///
    /// Bad lines are skipped with a diagnostic; if more than 10% of lines
    /// are bad nothing is stored. References to unknown figures are kept and
    /// reported as warnings.
    pub fn ingest_paragraphs(
        &mut self,
        path: impl AsRef<Path>,
        source: Source,
    ) -> Result<IngestReport, CorpusError> {
        let path = path.as_ref();
        self.ingest_paragraphs_from(open(path)?, &path.display().to_string(), source)
    }

    pub fn ingest_paragraphs_from(
        &mut self,
        reader: impl Read,
        name: &str,
        source: Source,
    ) -> Result<IngestReport, CorpusError> {
        let mut report = IngestReport::default();
        let mut accepted: Vec<Paragraph> = Vec::new();
        let mut batch_ids = std::collections::HashSet::new();
        let mut total = 0;

        for (i, line) in BufReader::new(reader).lines().enumerate() {
            let line = line.map_err(|source| CorpusError::Io {
                path: name.to_string(),
                source,
            })?;
            if line.trim().is_empty() {
                continue;
            }
            total += 1;
            let reject = |reason: String| LineDiagnostic {
                line: i + 1,
                reason,
            };
            let parsed: ParagraphLine = match serde_json::from_str(&line) {
                Ok(p) => p,
                Err(e) => {
                    report.rejected.push(reject(e.to_string()));
                    continue;
                }
            };
            if parsed.id.trim().is_empty() {
                report.rejected.push(reject("empty paragraph id".into()));
                continue;
            }
            if parsed.text.trim().is_empty() {
                report.rejected.push(reject("empty paragraph text".into()));
                continue;
            }
            if matches!(parsed.source, Some(s) if s != source) {
                report.rejected.push(reject(format!(
                    "source {:?} does not match ingestion source {source:?}",
                    parsed.source.unwrap()
                )));
                continue;
            }
            if self.paragraphs.contains_key(&parsed.id) || !batch_ids.insert(parsed.id.clone()) {
                report
                    .rejected
                    .push(reject(format!("duplicate paragraph id {}", parsed.id)));
                continue;
            }
            accepted.push(Paragraph {
                id: parsed.id,
                source,
                heading: parsed.heading,
                text: parsed.text,
                figure_refs: parsed.figure_refs,
            });
        }
        check_reject_rate(name, total, &report.rejected)?;

        for paragraph in accepted {
            for fig in &paragraph.figure_refs {
                if !self.figures.contains_key(fig) {
                    report.warnings.push(format!(
                        "paragraph {} references unknown figure {fig}",
                        paragraph.id
                    ));
                }
            }
            let sentences = split_sentences(&paragraph.text);
            for draft in make_passages(&paragraph.id, &sentences, DEFAULT_GROUP_SIZE) {
                let passage = Passage {
                    id: Passage::make_id(&paragraph.id, draft.ordinal),
                    paragraph_id: paragraph.id.clone(),
                    ordinal: draft.ordinal,
                    sentence_count: draft.sentence_count(),
                    text: draft.text,
                    figure_refs: paragraph.figure_refs.clone(),
                };
                self.passages.insert(passage.id.clone(), passage);
                report.passages += 1;
            }
            report.paragraphs += 1;
            self.paragraphs.insert(paragraph.id.clone(), paragraph);
        }
        for w in &report.warnings {
            tracing::warn!("{name}: {w}");
        }
        Ok(report)
    }

    /// Ingest one exam CSV file. Invalid rows are rejected individually.
    pub fn ingest_exam_csv(
        &mut self,
        path: impl AsRef<Path>,
    ) -> Result<ExamIngestReport, CorpusError> {
        let path = path.as_ref();
        self.ingest_exam_csv_from(open(path)?, &path.display().to_string())
    }

    pub fn ingest_exam_csv_from(
        &mut self,
        reader: impl Read,
        name: &str,
    ) -> Result<ExamIngestReport, CorpusError> {
        let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
        let header = rdr.headers().map_err(|e| CorpusError::Parse {
            path: name.to_string(),
            line: 1,
            reason: e.to_string(),
        })?;
        let found: Vec<&str> = header.iter().map(str::trim).collect();
        if found != EXAM_CSV_HEADER {
            return Err(CorpusError::BadHeader {
                path: name.to_string(),
                expected: EXAM_CSV_HEADER.join(","),
                found: found.join(","),
            });
        }

        let mut report = ExamIngestReport::default();
        for record in rdr.records() {
            let record = match record {
                Ok(r) => r,
                Err(e) => {
                    let line = e.position().map_or(0, |p| p.line() as usize);
                    report.rejected.push(LineDiagnostic {
                        line,
                        reason: e.to_string(),
                    });
                    continue;
                }
            };
            let line = record.position().map_or(0, |p| p.line() as usize);
            match parse_exam_row(&record) {
                Ok(q) if self.questions.contains_key(&q.id) => {
                    report.rejected.push(LineDiagnostic {
                        line,
                        reason: format!("duplicate question {}", q.id),
                    });
                }
                Ok(q) => {
                    *report.per_section.entry(q.section).or_default() += 1;
                    report.accepted += 1;
                    self.questions.insert(q.id.clone(), q);
                }
                Err(reason) => report.rejected.push(LineDiagnostic { line, reason }),
            }
        }
        for d in &report.rejected {
            tracing::warn!("{name}:{}: {}", d.line, d.reason);
        }
        Ok(report)
    }

    /// Write the bank in the exam CSV layout. Topics are not part of it.
    pub fn export_exam_csv(&self, writer: impl Write) -> Result<(), CorpusError> {
        let to_err = |e: csv::Error| CorpusError::Io {
            path: "<csv>".into(),
            source: std::io::Error::other(e),
        };
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(EXAM_CSV_HEADER).map_err(to_err)?;
        for q in self.questions.values() {
            let option = |k: OptionKey| {
                q.options
                    .as_ref()
                    .and_then(|o| o.get(&k).cloned())
                    .unwrap_or_default()
            };
            w.write_record([
                q.year.to_string(),
                q.exam_label.clone(),
                q.section.to_string(),
                q.number.clone(),
                q.text.clone(),
                option(OptionKey::A),
                option(OptionKey::B),
                option(OptionKey::C),
                option(OptionKey::D),
                q.answer.clone(),
                q.explanation.clone().unwrap_or_default(),
                q.figure_refs.join(";"),
            ])
            .map_err(to_err)?;
        }
        w.flush().map_err(|source| CorpusError::Io {
            path: "<csv>".into(),
            source,
        })
    }
}

fn parse_exam_row(r: &csv::StringRecord) -> Result<ExamQuestion, String> {
    if r.len() != EXAM_CSV_HEADER.len() {
        return Err(format!(
            "expected {} fields, found {}",
            EXAM_CSV_HEADER.len(),
            r.len()
        ));
    }
    let field = |i: usize| r.get(i).unwrap_or_default().trim();
    let year: i32 = field(0)
        .parse()
        .map_err(|_| format!("invalid year {:?}", field(0)))?;
    let exam_label = field(1).to_string();
    let section: Section = field(2).parse()?;
    let number = field(3).to_string();
    if number.is_empty() {
        return Err("missing question number".into());
    }
    let option_texts: Vec<&str> = (5..9).map(field).collect();
    let any_option = option_texts.iter().any(|o| !o.is_empty());
    let explanation = Some(field(10))
        .filter(|e| !e.is_empty())
        .map(str::to_string);

    let (options, answer) = match section {
        Section::Objectives => {
            if option_texts.iter().any(|o| o.is_empty()) {
                return Err("objectives question is missing an option".into());
            }
            let key: OptionKey = field(9).parse()?;
            let options = OptionKey::ALL
                .into_iter()
                .zip(option_texts.iter().map(|s| s.to_string()))
                .collect();
            (Some(options), key.to_string())
        }
        Section::Theory | Section::Practicals => {
            if any_option {
                return Err("options are only allowed on objectives questions".into());
            }
            (None, field(9).to_string())
        }
    };
    let figure_refs = field(11)
        .split(';')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect();

    let q = ExamQuestion {
        id: ExamQuestion::make_id(year, &exam_label, section, &number),
        year,
        exam_label,
        section,
        number,
        text: field(4).to_string(),
        options,
        answer,
        explanation,
        figure_refs,
        topic: None,
    };
    q.validate()?;
    Ok(q)
}

fn check_reject_rate(
    name: &str,
    total: usize,
    rejected: &[LineDiagnostic],
) -> Result<(), CorpusError> {
    if total > 0 && rejected.len() as f64 / total as f64 > MAX_REJECT_FRACTION {
        return Err(CorpusError::TooManyRejects {
            path: name.to_string(),
            rejected: rejected.len(),
            total,
            first: rejected
                .first()
                .map(|d| format!("line {}: {}", d.line, d.reason))
                .unwrap_or_default(),
        });
    }
    Ok(())
}
