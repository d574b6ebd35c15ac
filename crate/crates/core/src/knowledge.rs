//! Domain knowledge: the declarative file format and the decision-provider
//! contract through which every open synthesis choice is resolved.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::CellValue;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ColumnKind {
    Identifier,
    BooleanFeature,
    EnumeratedFeatures,
    Attribute,
}

impl ColumnKind {
    pub const ALL: [ColumnKind; 4] = [
        ColumnKind::BooleanFeature,
        ColumnKind::EnumeratedFeatures,
        ColumnKind::Attribute,
        ColumnKind::Identifier,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ColumnKind::Identifier => "identifier",
            ColumnKind::BooleanFeature => "boolean-feature",
            ColumnKind::EnumeratedFeatures => "enumerated-features",
            ColumnKind::Attribute => "attribute",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.as_str() == s)
    }
}

impl fmt::Display for ColumnKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Presence {
    Present,
    Absent,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ColumnSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<ColumnKind>,
    /// Cell token to presence; tokens are compared after trimming.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub interpretation: BTreeMap<String, Presence>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OrderSpec {
    Natural,
    Unordered,
    Ranked(Vec<CellValue>),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttributeSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub null: Option<CellValue>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub order: Option<OrderSpec>,
}

/// The parametrization that fixes every choice left open by the matrix.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainKnowledge {
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub columns: BTreeMap<String, ColumnSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub root: Option<String>,
    /// child -> parent
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub hierarchy: BTreeMap<String, String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub attributes: BTreeMap<String, AttributeSpec>,
    /// attribute -> host feature
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub placements: BTreeMap<String, String>,
    /// Preferred groups, consulted when candidate groups overlap.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub groups: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub interesting_values: BTreeMap<String, Vec<u64>>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("{path}: {message}")]
pub struct SchemaError {
    pub path: String,
    pub message: String,
}

/// Parses a domain-knowledge document. An empty document leaves every
/// decision open.
pub fn load_dk(text: &str) -> Result<DomainKnowledge, SchemaError> {
    if text.trim().is_empty() {
        return Ok(DomainKnowledge::default());
    }
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|e| SchemaError {
        path: match e.path().to_string() {
            p if p == "." => "$".to_string(),
            p => format!("$.{p}"),
        },
        message: e.inner().to_string(),
    })
}

impl DomainKnowledge {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("dk serializes")
    }

    /// Columns the file marks as identifiers.
    pub fn identifier_columns(&self) -> Vec<String> {
        self.columns
            .iter()
            .filter(|(_, s)| s.kind == Some(ColumnKind::Identifier))
            .map(|(c, _)| c.clone())
            .collect()
    }
}

/// The five decision points.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecisionKind {
    ClassifyColumn,
    ChooseParent,
    ChoosePlace,
    ChooseGroup,
    ConfirmBounds,
}

impl DecisionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DecisionKind::ClassifyColumn => "classify_column",
            DecisionKind::ChooseParent => "choose_parent",
            DecisionKind::ChoosePlace => "choose_place",
            DecisionKind::ChooseGroup => "choose_group",
            DecisionKind::ConfirmBounds => "confirm_bounds",
        }
    }

    /// Whether the answer may list several candidates.
    pub fn multi(self) -> bool {
        matches!(self, DecisionKind::ChooseGroup | DecisionKind::ConfirmBounds)
    }
}

/// A question put to a provider. Candidates are rendered as text so that
/// questions and answers can travel over the wire unchanged.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Question {
    pub kind: DecisionKind,
    pub subject: String,
    pub candidates: Vec<String>,
}

/// One answered question.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Decision {
    pub kind: DecisionKind,
    pub subject: String,
    pub candidates: Vec<String>,
    pub answer: Vec<String>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DecisionError {
    /// No answer is available yet; the question must be put to a person.
    #[error("awaiting answer to {} for {:?}", .0.kind.as_str(), .0.subject)]
    Pending(Question),
    #[error("answer {answer:?} to {kind} for {subject:?} is not among the candidates")]
    NotACandidate { kind: &'static str, subject: String, answer: String },
    #[error("bound {bound} for {attribute:?} lies outside the domain range {min}..={max}")]
    BoundOutOfRange { attribute: String, bound: u64, min: u64, max: u64 },
    #[error("transcript entry {index} answers {found}, but synthesis asked {expected}")]
    Diverged { index: usize, expected: String, found: String },
    #[error("{0}")]
    Io(String),
}

/// The contract through which synthesis asks for domain knowledge. Every
/// answer must come from the offered candidates; consumers re-check this.
pub trait DecisionProvider {
    fn knowledge(&self) -> &DomainKnowledge;
    fn classify_column(&mut self, column: &str, observed: &[CellValue]) -> Result<ColumnKind, DecisionError>;
    fn choose_parent(&mut self, feature: &str, candidates: &[String]) -> Result<String, DecisionError>;
    fn choose_place(&mut self, attribute: &str, candidates: &[String]) -> Result<String, DecisionError>;
    /// Picks a non-overlapping subset of overlapping candidate groups.
    fn choose_group(&mut self, parent: &str, candidates: &[Vec<String>]) -> Result<Vec<usize>, DecisionError>;
    fn confirm_bounds(&mut self, attribute: &str, domain: &[u64]) -> Result<Vec<u64>, DecisionError>;
    /// Every decision taken so far, in question order.
    fn transcript(&self) -> &[Decision];
}

pub(crate) fn render_group(g: &[String]) -> String {
    format!("{{{}}}", g.join(", "))
}

const PRESENT_TOKENS: [&str; 6] = ["yes", "y", "true", "x", "present", "1"];
const ABSENT_TOKENS: [&str; 10] = ["no", "n", "false", "absent", "0", "--", "-", "none", "n/a", "na"];

/// Default reading of a cell token when the file gives no interpretation.
pub fn default_presence(v: &CellValue) -> Option<Presence> {
    let s = v.to_string().to_ascii_lowercase();
    if PRESENT_TOKENS.contains(&s.as_str()) {
        Some(Presence::Present)
    } else if ABSENT_TOKENS.contains(&s.as_str()) {
        Some(Presence::Absent)
    } else {
        None
    }
}

/// Tokens conventionally used for "no value" in textual columns.
pub const NULL_TOKENS: [&str; 5] = ["--", "-", "none", "n/a", "na"];

/// Heuristic classification used when the file is silent.
pub fn heuristic_kind(observed: &[CellValue]) -> ColumnKind {
    let numeric = observed.iter().all(|v| v.as_nat().is_some());
    if numeric {
        if observed.iter().all(|v| matches!(v, CellValue::Nat(0 | 1))) {
            ColumnKind::BooleanFeature
        } else {
            ColumnKind::Attribute
        }
    } else if observed.iter().all(|v| default_presence(v).is_some()) {
        ColumnKind::BooleanFeature
    } else {
        ColumnKind::EnumeratedFeatures
    }
}

/// Lower median of the (sorted) domain.
pub fn median_bound(domain: &[u64]) -> Vec<u64> {
    let mut d = domain.to_vec();
    d.sort_unstable();
    d.dedup();
    if d.is_empty() {
        Vec::new()
    } else {
        vec![d[(d.len() - 1) / 2]]
    }
}

fn check_bounds(attribute: &str, bounds: &[u64], domain: &[u64]) -> Result<(), DecisionError> {
    let (min, max) = match (domain.iter().min(), domain.iter().max()) {
        (Some(&a), Some(&b)) => (a, b),
        _ => return Ok(()),
    };
    for &b in bounds {
        if b < min || b > max {
            return Err(DecisionError::BoundOutOfRange { attribute: attribute.to_string(), bound: b, min, max });
        }
    }
    Ok(())
}

fn dk_group_choice(dk: &DomainKnowledge, candidates: &[Vec<String>]) -> Option<Vec<usize>> {
    for pref in &dk.groups {
        let mut p = pref.clone();
        p.sort();
        if let Some(i) = candidates.iter().position(|c| {
            let mut c = c.clone();
            c.sort();
            c == p
        }) {
            return Some(vec![i]);
        }
    }
    None
}

fn dk_bounds(dk: &DomainKnowledge, attribute: &str) -> Option<Vec<u64>> {
    dk.interesting_values.get(attribute).map(|b| {
        let mut b = b.clone();
        b.sort_unstable();
        b.dedup();
        b
    })
}

fn classify_question(column: &str) -> Question {
    Question {
        kind: DecisionKind::ClassifyColumn,
        subject: column.to_string(),
        candidates: ColumnKind::ALL.iter().map(|k| k.as_str().to_string()).collect(),
    }
}

/// Answers from the file first, then from fixed heuristics.
#[derive(Clone, Debug, Default)]
pub struct DefaultProvider {
    dk: DomainKnowledge,
    transcript: Vec<Decision>,
}

impl DefaultProvider {
    pub fn new(dk: DomainKnowledge) -> Self {
        DefaultProvider { dk, transcript: Vec::new() }
    }

    fn record(&mut self, q: Question, answer: Vec<String>) {
        self.transcript.push(Decision { kind: q.kind, subject: q.subject, candidates: q.candidates, answer });
    }
}

/// Same as [`DefaultProvider::new`].
pub fn default_provider(dk: DomainKnowledge) -> DefaultProvider {
    DefaultProvider::new(dk)
}

impl DecisionProvider for DefaultProvider {
    fn knowledge(&self) -> &DomainKnowledge {
        &self.dk
    }

    fn classify_column(&mut self, column: &str, observed: &[CellValue]) -> Result<ColumnKind, DecisionError> {
        let kind = self.dk.columns.get(column).and_then(|s| s.kind).unwrap_or_else(|| heuristic_kind(observed));
        self.record(classify_question(column), vec![kind.as_str().to_string()]);
        Ok(kind)
    }

    fn choose_parent(&mut self, feature: &str, candidates: &[String]) -> Result<String, DecisionError> {
        let answer = match self.dk.hierarchy.get(feature) {
            Some(p) => p.clone(),
            None => candidates.first().cloned().unwrap_or_default(),
        };
        let q = Question { kind: DecisionKind::ChooseParent, subject: feature.to_string(), candidates: candidates.to_vec() };
        self.record(q, vec![answer.clone()]);
        Ok(answer)
    }

    fn choose_place(&mut self, attribute: &str, candidates: &[String]) -> Result<String, DecisionError> {
        let answer = match self.dk.placements.get(attribute) {
            Some(p) => p.clone(),
            None => candidates.first().cloned().unwrap_or_default(),
        };
        let q = Question { kind: DecisionKind::ChoosePlace, subject: attribute.to_string(), candidates: candidates.to_vec() };
        self.record(q, vec![answer.clone()]);
        Ok(answer)
    }

    fn choose_group(&mut self, parent: &str, candidates: &[Vec<String>]) -> Result<Vec<usize>, DecisionError> {
        let pick = dk_group_choice(&self.dk, candidates).unwrap_or_else(|| {
            let first = (0..candidates.len()).min_by(|&a, &b| candidates[a].cmp(&candidates[b]));
            first.into_iter().collect()
        });
        let q = group_question(parent, candidates);
        self.record(q, pick.iter().map(|i| render_group(&candidates[*i])).collect());
        Ok(pick)
    }

    fn confirm_bounds(&mut self, attribute: &str, domain: &[u64]) -> Result<Vec<u64>, DecisionError> {
        let bounds = dk_bounds(&self.dk, attribute).unwrap_or_else(|| median_bound(domain));
        check_bounds(attribute, &bounds, domain)?;
        let q = bounds_question(attribute, domain);
        self.record(q, bounds.iter().map(u64::to_string).collect());
        Ok(bounds)
    }

    fn transcript(&self) -> &[Decision] {
        &self.transcript
    }
}

fn group_question(parent: &str, candidates: &[Vec<String>]) -> Question {
    Question {
        kind: DecisionKind::ChooseGroup,
        subject: parent.to_string(),
        candidates: candidates.iter().map(|c| render_group(c)).collect(),
    }
}

fn bounds_question(attribute: &str, domain: &[u64]) -> Question {
    let mut d = domain.to_vec();
    d.sort_unstable();
    d.dedup();
    Question {
        kind: DecisionKind::ConfirmBounds,
        subject: attribute.to_string(),
        candidates: d.iter().map(u64::to_string).collect(),
    }
}

/// Answers from the file, then from a recorded script of earlier answers;
/// anything else surfaces as [`DecisionError::Pending`]. Used for
/// interactive sessions, which re-run synthesis after every answer.
#[derive(Clone, Debug, Default)]
pub struct ScriptedProvider {
    dk: DomainKnowledge,
    script: Vec<Decision>,
    cursor: usize,
    transcript: Vec<Decision>,
}

impl ScriptedProvider {
    pub fn new(dk: DomainKnowledge, script: Vec<Decision>) -> Self {
        ScriptedProvider { dk, script, cursor: 0, transcript: Vec::new() }
    }

    /// Number of script entries consumed.
    pub fn consumed(&self) -> usize {
        self.cursor
    }

    fn from_script(&mut self, q: &Question) -> Result<Vec<String>, DecisionError> {
        match self.script.get(self.cursor) {
            None => Err(DecisionError::Pending(q.clone())),
            Some(d) if d.kind == q.kind && d.subject == q.subject => {
                self.cursor += 1;
                let allowed = |a: &String| q.candidates.contains(a);
                if let Some(bad) = d.answer.iter().find(|a| !allowed(a)) {
                    return Err(DecisionError::NotACandidate {
                        kind: q.kind.as_str(),
                        subject: q.subject.clone(),
                        answer: bad.clone(),
                    });
                }
                if !q.kind.multi() && d.answer.len() != 1 {
                    return Err(DecisionError::NotACandidate {
                        kind: q.kind.as_str(),
                        subject: q.subject.clone(),
                        answer: d.answer.join(", "),
                    });
                }
                Ok(d.answer.clone())
            }
            Some(d) => Err(DecisionError::Diverged {
                index: self.cursor,
                expected: format!("{} {}", q.kind.as_str(), q.subject),
                found: format!("{} {}", d.kind.as_str(), d.subject),
            }),
        }
    }

    fn record(&mut self, q: Question, answer: Vec<String>) {
        self.transcript.push(Decision { kind: q.kind, subject: q.subject, candidates: q.candidates, answer });
    }
}

impl DecisionProvider for ScriptedProvider {
    fn knowledge(&self) -> &DomainKnowledge {
        &self.dk
    }

    fn classify_column(&mut self, column: &str, _observed: &[CellValue]) -> Result<ColumnKind, DecisionError> {
        let q = classify_question(column);
        let kind = match self.dk.columns.get(column).and_then(|s| s.kind) {
            Some(k) => k,
            None => {
                let a = self.from_script(&q)?;
                ColumnKind::parse(&a[0]).expect("candidate kinds parse")
            }
        };
        self.record(q, vec![kind.as_str().to_string()]);
        Ok(kind)
    }

    fn choose_parent(&mut self, feature: &str, candidates: &[String]) -> Result<String, DecisionError> {
        let q = Question { kind: DecisionKind::ChooseParent, subject: feature.to_string(), candidates: candidates.to_vec() };
        let answer = match self.dk.hierarchy.get(feature) {
            Some(p) => p.clone(),
            None => self.from_script(&q)?.remove(0),
        };
        self.record(q, vec![answer.clone()]);
        Ok(answer)
    }

    fn choose_place(&mut self, attribute: &str, candidates: &[String]) -> Result<String, DecisionError> {
        let q = Question { kind: DecisionKind::ChoosePlace, subject: attribute.to_string(), candidates: candidates.to_vec() };
        let answer = match self.dk.placements.get(attribute) {
            Some(p) => p.clone(),
            None => self.from_script(&q)?.remove(0),
        };
        self.record(q, vec![answer.clone()]);
        Ok(answer)
    }

    fn choose_group(&mut self, parent: &str, candidates: &[Vec<String>]) -> Result<Vec<usize>, DecisionError> {
        let q = group_question(parent, candidates);
        let pick = match dk_group_choice(&self.dk, candidates) {
            Some(p) => p,
            None => {
                let a = self.from_script(&q)?;
                a.iter().map(|s| q.candidates.iter().position(|c| c == s).expect("checked candidate")).collect()
            }
        };
        self.record(q, pick.iter().map(|i| render_group(&candidates[*i])).collect());
        Ok(pick)
    }

    fn confirm_bounds(&mut self, attribute: &str, domain: &[u64]) -> Result<Vec<u64>, DecisionError> {
        let q = bounds_question(attribute, domain);
        let bounds = match dk_bounds(&self.dk, attribute) {
            Some(b) => b,
            None => {
                let mut b: Vec<u64> =
                    self.from_script(&q)?.iter().map(|s| s.parse().expect("candidates are numbers")).collect();
                b.sort_unstable();
                b.dedup();
                b
            }
        };
        check_bounds(attribute, &bounds, domain)?;
        self.record(q, bounds.iter().map(u64::to_string).collect());
        Ok(bounds)
    }

    fn transcript(&self) -> &[Decision] {
        &self.transcript
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_open() {
        assert_eq!(load_dk("").unwrap(), DomainKnowledge::default());
        assert_eq!(load_dk("{}").unwrap(), DomainKnowledge::default());
    }

    #[test]
    fn schema_error_names_path() {
        let err = load_dk(r#"{"columns": {"A": {"kind": "feature"}}}"#).unwrap_err();
        assert!(err.path.starts_with("$.columns.A.kind"), "{}", err.path);
        let err = load_dk(r#"{"rooot": "x"}"#).unwrap_err();
        assert!(err.message.contains("rooot"));
    }

    #[test]
    fn heuristics() {
        let nums = |v: &[u64]| v.iter().map(|&n| CellValue::Nat(n)).collect::<Vec<_>>();
        assert_eq!(heuristic_kind(&nums(&[10, 20, 0])), ColumnKind::Attribute);
        assert_eq!(heuristic_kind(&nums(&[0, 1])), ColumnKind::BooleanFeature);
        assert_eq!(heuristic_kind(&[CellValue::text("Yes"), CellValue::text("No")]), ColumnKind::BooleanFeature);
        assert_eq!(heuristic_kind(&[CellValue::text("GPL"), CellValue::text("Commercial")]), ColumnKind::EnumeratedFeatures);
        assert_eq!(median_bound(&[20, 0, 10]), vec![10]);
        assert_eq!(median_bound(&[3, 1]), vec![1]);
    }

    #[test]
    fn default_provider_prefers_file() {
        let dk = load_dk(r#"{"hierarchy": {"WYSIWYG": "Wiki engine"}}"#).unwrap();
        let mut p = DefaultProvider::new(dk);
        let cands = vec!["LicenseType".to_string(), "Wiki engine".to_string()];
        assert_eq!(p.choose_parent("WYSIWYG", &cands).unwrap(), "Wiki engine");
        assert_eq!(p.choose_parent("GPL", &cands).unwrap(), "LicenseType");
        assert_eq!(p.transcript().len(), 2);
    }

    #[test]
    fn bounds_must_lie_in_range() {
        let dk = load_dk(r#"{"interesting_values": {"P": [50]}}"#).unwrap();
        let mut p = DefaultProvider::new(dk);
        assert!(matches!(p.confirm_bounds("P", &[0, 10, 20]), Err(DecisionError::BoundOutOfRange { .. })));
    }

    #[test]
    fn scripted_provider_pends_then_replays() {
        let mut p = ScriptedProvider::new(DomainKnowledge::default(), Vec::new());
        let cands = vec!["A".to_string(), "B".to_string()];
        let err = p.choose_parent("f", &cands).unwrap_err();
        let DecisionError::Pending(q) = err else { panic!("expected pending") };
        assert_eq!(q.candidates, cands);
        let script = vec![Decision { kind: q.kind, subject: q.subject, candidates: q.candidates, answer: vec!["B".into()] }];
        let mut p = ScriptedProvider::new(DomainKnowledge::default(), script.clone());
        assert_eq!(p.choose_parent("f", &cands).unwrap(), "B");
        assert_eq!(p.transcript(), script.as_slice());
    }

    #[test]
    fn scripted_provider_rejects_non_candidates() {
        let script = vec![Decision {
            kind: DecisionKind::ChooseParent,
            subject: "f".into(),
            candidates: vec![],
            answer: vec!["C".into()],
        }];
        let mut p = ScriptedProvider::new(DomainKnowledge::default(), script);
        let err = p.choose_parent("f", &["A".to_string()]).unwrap_err();
        assert!(matches!(err, DecisionError::NotACandidate { .. }));
    }
}
