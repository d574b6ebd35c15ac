//! Extraction of features, attributes and domains from a matrix.

use std::cmp::Ordering;
use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::knowledge::{default_presence, ColumnKind, DecisionError, DecisionProvider, OrderSpec, Presence, NULL_TOKENS};
use crate::matrix::{CellValue, ConfigurationMatrix};

/// How values of a domain compare.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ValueOrder {
    Natural,
    Unordered,
    Ranked(Vec<CellValue>),
}

/// The values an attribute may take, its null value and their order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Domain {
    /// Distinct column values, first occurrence first.
    pub values: Vec<CellValue>,
    /// Taken whenever the hosting feature is deselected; may lie outside
    /// `values` when the host is never deselected.
    pub null: Option<CellValue>,
    pub order: ValueOrder,
}

impl Domain {
    pub fn contains(&self, v: &CellValue) -> bool {
        self.values.contains(v)
    }

    pub fn is_ordered(&self) -> bool {
        !matches!(self.order, ValueOrder::Unordered)
    }

    /// Position of `v` in the order, if the domain is ordered and `v` ranks.
    pub fn rank(&self, v: &CellValue) -> Option<u64> {
        match (&self.order, v) {
            (ValueOrder::Natural, CellValue::Nat(n)) => Some(*n),
            (ValueOrder::Ranked(r), v) => r.iter().position(|x| x == v).map(|p| p as u64),
            _ => None,
        }
    }

    pub fn compare(&self, a: &CellValue, b: &CellValue) -> Option<Ordering> {
        Some(self.rank(a)?.cmp(&self.rank(b)?))
    }

    /// Every value a configuration may assign: the domain plus an outside null.
    pub fn value_space(&self) -> Vec<CellValue> {
        let mut v = self.values.clone();
        if let Some(n) = &self.null {
            if !self.values.contains(n) {
                v.push(n.clone());
            }
        }
        v
    }

    /// Numeric values, when the domain is numeric.
    pub fn naturals(&self) -> Option<Vec<u64>> {
        self.values.iter().map(CellValue::as_nat).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FeatureKind {
    /// One column, selected on present tokens.
    Boolean,
    /// Parent of an enumerated column, selected on any present value.
    Enumeration,
    /// One value of an enumerated column.
    Value,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub column: usize,
    /// Cell values that select the feature.
    pub present: Vec<CellValue>,
    pub kind: FeatureKind,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Attribute {
    pub name: String,
    pub column: usize,
    pub domain: Domain,
}

/// Features F, attributes A with their domains, and the column each came from.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariableModel {
    pub columns: Vec<String>,
    pub kinds: Vec<ColumnKind>,
    pub features: Vec<Feature>,
    pub attributes: Vec<Attribute>,
    /// Features removed because no row selects them.
    pub dead: Vec<String>,
}

impl VariableModel {
    pub fn feature_index(&self, name: &str) -> Option<usize> {
        self.features.iter().position(|f| f.name == name)
    }

    pub fn attribute_index(&self, name: &str) -> Option<usize> {
        self.attributes.iter().position(|a| a.name == name)
    }

    pub fn selected(&self, matrix: &ConfigurationMatrix, f: usize, row: usize) -> bool {
        let feat = &self.features[f];
        feat.present.contains(matrix.cell(row, feat.column))
    }

    /// Columns classified as identifiers (not modelled).
    pub fn identifier_columns(&self) -> Vec<String> {
        self.kinds
            .iter()
            .zip(&self.columns)
            .filter(|(k, _)| **k == ColumnKind::Identifier)
            .map(|(_, c)| c.clone())
            .collect()
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ExtractError {
    #[error("column {0:?} was not classified")]
    UnclassifiedColumn(String),
    #[error("null value {null} of {attribute:?} is not in its domain, yet its host {host:?} is deselected in some row")]
    NullValueNotInDomain { attribute: String, null: CellValue, host: String },
    #[error("value {value} of column {column:?} maps to neither presence nor absence")]
    AmbiguousPresenceMapping { column: String, value: CellValue },
    #[error("two variables are named {0:?}")]
    DuplicateVariable(String),
    #[error("attribute {attribute:?}: {message}")]
    BadOrder { attribute: String, message: String },
    #[error(transparent)]
    Decision(#[from] DecisionError),
}

fn presence(interp: Option<&crate::knowledge::ColumnSpec>, v: &CellValue) -> Option<Presence> {
    if let Some(spec) = interp {
        if let Some(p) = spec.interpretation.get(&v.to_string()) {
            return Some(*p);
        }
    }
    default_presence(v)
}

fn default_null(values: &[CellValue]) -> Option<CellValue> {
    if values.iter().all(|v| v.as_nat().is_some()) {
        return values.iter().find(|v| **v == CellValue::Nat(0)).cloned();
    }
    NULL_TOKENS.iter().find_map(|t| values.iter().find(|v| v.to_string().eq_ignore_ascii_case(t)).cloned())
}

/// Classifies every column through the provider and builds the variable
/// model. Dead features are dropped and listed in [`VariableModel::dead`].
pub fn extract_variables(
    matrix: &ConfigurationMatrix,
    provider: &mut dyn DecisionProvider,
) -> Result<VariableModel, ExtractError> {
    let mut kinds = Vec::with_capacity(matrix.n_cols());
    let mut domains = Vec::with_capacity(matrix.n_cols());
    for (j, name) in matrix.variables().iter().enumerate() {
        let dom = matrix.column_domain(j).expect("index in range");
        kinds.push(provider.classify_column(name, &dom)?);
        domains.push(dom);
    }
    let dk = provider.knowledge().clone();

    let mut features = Vec::new();
    let mut attributes = Vec::new();
    let mut dead = Vec::new();
    let mut value_children: Vec<(usize, CellValue)> = Vec::new();
    for (j, name) in matrix.variables().iter().enumerate() {
        let spec = dk.columns.get(name);
        let dom = &domains[j];
        match kinds[j] {
            ColumnKind::Identifier => {}
            ColumnKind::BooleanFeature => {
                let mut present = Vec::new();
                for v in dom {
                    match presence(spec, v) {
                        Some(Presence::Present) => present.push(v.clone()),
                        Some(Presence::Absent) => {}
                        None => {
                            return Err(ExtractError::AmbiguousPresenceMapping { column: name.clone(), value: v.clone() })
                        }
                    }
                }
                if present.is_empty() {
                    dead.push(name.clone());
                } else {
                    features.push(Feature { name: name.clone(), column: j, present, kind: FeatureKind::Boolean });
                }
            }
            ColumnKind::EnumeratedFeatures => {
                let present: Vec<CellValue> = dom
                    .iter()
                    .filter(|v| match spec.and_then(|s| s.interpretation.get(&v.to_string())) {
                        Some(p) => *p == Presence::Present,
                        None => default_presence(v) != Some(Presence::Absent),
                    })
                    .cloned()
                    .collect();
                if present.is_empty() {
                    dead.push(name.clone());
                    continue;
                }
                features.push(Feature { name: name.clone(), column: j, present: present.clone(), kind: FeatureKind::Enumeration });
                for v in present {
                    value_children.push((features.len(), v.clone()));
                    features.push(Feature { name: v.to_string(), column: j, present: vec![v], kind: FeatureKind::Value });
                }
            }
            ColumnKind::Attribute => {
                let aspec = dk.attributes.get(name);
                let null = aspec.and_then(|a| a.null.clone()).or_else(|| default_null(dom));
                let numeric = dom.iter().all(|v| v.as_nat().is_some());
                let order = match aspec.and_then(|a| a.order.clone()) {
                    Some(OrderSpec::Natural) if !numeric => {
                        return Err(ExtractError::BadOrder {
                            attribute: name.clone(),
                            message: "natural order needs a numeric column".into(),
                        })
                    }
                    Some(OrderSpec::Natural) => ValueOrder::Natural,
                    Some(OrderSpec::Unordered) => ValueOrder::Unordered,
                    Some(OrderSpec::Ranked(r)) => {
                        if let Some(v) = dom.iter().find(|v| !r.contains(v)) {
                            return Err(ExtractError::BadOrder {
                                attribute: name.clone(),
                                message: format!("ranking omits {v}"),
                            });
                        }
                        ValueOrder::Ranked(r)
                    }
                    None if numeric => ValueOrder::Natural,
                    None => ValueOrder::Unordered,
                };
                attributes.push(Attribute { name: name.clone(), column: j, domain: Domain { values: dom.clone(), null, order } });
            }
        }
    }

    // Value features borrow their value as name; qualify on collision.
    let mut taken: HashSet<String> = features
        .iter()
        .filter(|f| f.kind != FeatureKind::Value)
        .map(|f| f.name.clone())
        .chain(attributes.iter().map(|a| a.name.clone()))
        .collect();
    let mut counts = std::collections::HashMap::<String, usize>::new();
    for (i, _) in &value_children {
        *counts.entry(features[*i].name.clone()).or_default() += 1;
    }
    for (i, v) in &value_children {
        let plain = v.to_string();
        if taken.contains(&plain) || counts[&plain] > 1 {
            features[*i].name = format!("{}.{}", matrix.variables()[features[*i].column], plain);
        }
    }
    taken.clear();
    for n in features.iter().map(|f| &f.name).chain(attributes.iter().map(|a| &a.name)) {
        if !taken.insert(n.clone()) {
            return Err(ExtractError::DuplicateVariable(n.clone()));
        }
    }

    let vm = VariableModel { columns: matrix.variables().to_vec(), kinds, features, attributes, dead };
    for a in &vm.attributes {
        let Some(null) = dk.attributes.get(&a.name).and_then(|s| s.null.clone()) else { continue };
        if a.domain.contains(&null) {
            continue;
        }
        if let Some(host) = dk.placements.get(&a.name) {
            if let Some(f) = vm.feature_index(host) {
                if (0..matrix.n_rows()).any(|k| !vm.selected(matrix, f, k)) {
                    return Err(ExtractError::NullValueNotInDomain { attribute: a.name.clone(), null, host: host.clone() });
                }
            }
        }
    }
    Ok(vm)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::{load_dk, DefaultProvider, DomainKnowledge};
    use crate::matrix::{parse_matrix, IngestionHints};

    pub(crate) const WIKI: &str = "Identifier,LicenseType,LicensePrice,LanguageSupport,Language,WYSIWYG
Confluence,Commercial,10,Yes,Java,Yes
PBwiki,NoLimit,20,No,--,Yes
SimpleWiki,NoLimit,10,No,--,Yes
MoinMoin,GPL,0,Yes,Python,Yes
TWiki,GPL,0,Yes,Perl,Yes
PerlWiki,GPL,10,Yes,Perl,Yes
MediaWiki,GPL,0,Yes,PHP,No
PHPWiki,GPL,10,Yes,PHP,Yes
";

    fn names(vm: &VariableModel) -> (Vec<&str>, Vec<&str>) {
        (
            vm.features.iter().map(|f| f.name.as_str()).collect(),
            vm.attributes.iter().map(|a| a.name.as_str()).collect(),
        )
    }

    #[test]
    fn wiki_with_defaults() {
        let m = parse_matrix(WIKI, &IngestionHints::new()).unwrap();
        let vm = extract_variables(&m, &mut DefaultProvider::new(DomainKnowledge::default())).unwrap();
        let (f, a) = names(&vm);
        assert_eq!(
            f,
            ["LicenseType", "Commercial", "NoLimit", "GPL", "LanguageSupport", "Language", "Java", "Python", "Perl", "PHP", "WYSIWYG"]
        );
        assert_eq!(a, ["LicensePrice"]);

        let dk = load_dk(r#"{"columns": {"Language": {"kind": "attribute"}}}"#).unwrap();
        let vm = extract_variables(&m, &mut DefaultProvider::new(dk)).unwrap();
        let (f, a) = names(&vm);
        assert_eq!(f, ["LicenseType", "Commercial", "NoLimit", "GPL", "LanguageSupport", "WYSIWYG"]);
        assert_eq!(a, ["LicensePrice", "Language"]);
        let lang = &vm.attributes[1].domain;
        assert_eq!(lang.null, Some(CellValue::text("--")));
        assert_eq!(lang.order, ValueOrder::Unordered);
        assert_eq!(vm.attributes[0].domain.null, Some(CellValue::Nat(0)));
    }

    #[test]
    fn dead_boolean_feature_removed() {
        let m = parse_matrix("A,B\nYes,No\nNo,No\n", &IngestionHints::new()).unwrap();
        let vm = extract_variables(&m, &mut DefaultProvider::new(DomainKnowledge::default())).unwrap();
        assert_eq!(names(&vm).0, ["A"]);
        assert_eq!(vm.dead, ["B"]);
    }

    #[test]
    fn ambiguous_presence() {
        let dk = load_dk(r#"{"columns": {"A": {"kind": "boolean-feature"}}}"#).unwrap();
        let m = parse_matrix("A\nYes\nMaybe\n", &IngestionHints::new()).unwrap();
        let err = extract_variables(&m, &mut DefaultProvider::new(dk)).unwrap_err();
        assert!(matches!(err, ExtractError::AmbiguousPresenceMapping { .. }));
    }

    #[test]
    fn null_outside_domain_with_deselected_host() {
        let dk = load_dk(
            r#"{"columns": {"Language": {"kind": "attribute"}}, "attributes": {"Language": {"null": "none"}}, "placements": {"Language": "LanguageSupport"}}"#,
        )
        .unwrap();
        let m = parse_matrix(WIKI, &IngestionHints::new()).unwrap();
        let err = extract_variables(&m, &mut DefaultProvider::new(dk)).unwrap_err();
        assert!(matches!(err, ExtractError::NullValueNotInDomain { .. }));
    }

    #[test]
    fn colliding_values_are_qualified() {
        let m = parse_matrix("A,B\np,q\nq,p\n", &IngestionHints::new()).unwrap();
        let vm = extract_variables(&m, &mut DefaultProvider::new(DomainKnowledge::default())).unwrap();
        assert_eq!(names(&vm).0, ["A", "A.p", "A.q", "B", "B.q", "B.p"]);
    }

    #[test]
    fn extraction_is_deterministic() {
        let m = parse_matrix(WIKI, &IngestionHints::new()).unwrap();
        let a = extract_variables(&m, &mut DefaultProvider::new(DomainKnowledge::default())).unwrap();
        let b = extract_variables(&m, &mut DefaultProvider::new(DomainKnowledge::default())).unwrap();
        assert_eq!(a, b);
    }
}
