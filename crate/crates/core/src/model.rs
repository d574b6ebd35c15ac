//! The synthesized attributed feature model and its serializations.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{parse_constraint, render_constraint, ReadableConstraint, ResidualConstraint};
use crate::knowledge::Decision;
use crate::matrix::CellValue;
use crate::variability::GroupKind;
use crate::variables::Domain;

/// How a feature is read off a matrix row: selected iff the cell of
/// `column` is one of `present`. Synthetic features have no binding and are
/// always selected.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureBinding {
    pub column: String,
    pub present: Vec<CellValue>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureDecl {
    pub name: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub binding: Option<FeatureBinding>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HierarchyEdge {
    pub child: String,
    pub parent: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupDecl {
    pub parent: String,
    pub kind: GroupKind,
    pub children: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributeDecl {
    pub name: String,
    pub column: String,
    /// The feature the attribute is placed on.
    pub host: String,
    pub domain: Domain,
    /// Bounds used for relational constraints over this attribute.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub interesting: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    /// SHA-256 of the stage's canonical input, hex encoded.
    pub input: String,
    pub summary: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct OptionsRecord {
    /// Or-group budget in milliseconds, absent when or-groups are off.
    pub or_groups_ms: Option<u64>,
    /// `off`, `complete` or `timed-out`.
    pub or_groups: String,
    pub phi: bool,
    pub textual_equality: bool,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub options: OptionsRecord,
    pub stages: Vec<StageRecord>,
    pub transcript: Vec<Decision>,
    /// Group candidates found but not kept.
    pub discarded: Vec<GroupDecl>,
    pub notes: Vec<String>,
}

pub const LABEL_EXACT: &str = "exact";
pub const LABEL_OVER_APPROXIMATE: &str = "diagram-only, over-approximate";

/// Feature diagram plus residual constraint. Features are listed in
/// hierarchy preorder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttributedFeatureModel {
    pub label: String,
    pub root: String,
    pub features: Vec<FeatureDecl>,
    pub hierarchy: Vec<HierarchyEdge>,
    pub mandatory: Vec<String>,
    pub groups: Vec<GroupDecl>,
    pub attributes: Vec<AttributeDecl>,
    #[serde(with = "constraint_text")]
    pub constraints: Vec<ReadableConstraint>,
    #[serde(default)]
    pub phi: Option<ResidualConstraint>,
    pub provenance: Provenance,
}

mod constraint_text {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[ReadableConstraint], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(v.iter().map(render_constraint))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<ReadableConstraint>, D::Error> {
        let texts = Vec::<String>::deserialize(d)?;
        texts.iter().map(|t| parse_constraint(t).map_err(serde::de::Error::custom)).collect()
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid model document: {0}")]
    Json(String),
    #[error("model refers to unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("hierarchy is not a tree rooted at {0:?}")]
    NotATree(String),
}

impl AttributedFeatureModel {
    /// Pretty JSON with a trailing newline.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("model serializes");
        s.push('\n');
        s
    }

    pub fn from_json(text: &str) -> Result<Self, ModelError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let m: Self = serde_path_to_error::deserialize(de)
            .map_err(|e| ModelError::Json(format!("{}: {}", e.path(), e.inner())))?;
        m.validate()?;
        Ok(m)
    }

    /// Names resolve and the hierarchy is a tree over all features.
    pub fn validate(&self) -> Result<(), ModelError> {
        let idx = self.feature_index();
        let known = |n: &str| idx.get(n).copied().ok_or_else(|| ModelError::UnknownFeature(n.to_string()));
        let root = known(&self.root)?;
        let mut parent = vec![None; self.features.len()];
        for e in &self.hierarchy {
            let c = known(&e.child)?;
            if parent[c].is_some() || c == root {
                return Err(ModelError::NotATree(self.root.clone()));
            }
            parent[c] = Some(known(&e.parent)?);
        }
        for f in 0..self.features.len() {
            let mut cur = f;
            let mut steps = 0;
            while let Some(p) = parent[cur] {
                cur = p;
                steps += 1;
                if steps > self.features.len() {
                    return Err(ModelError::NotATree(self.root.clone()));
                }
            }
            if cur != root {
                return Err(ModelError::NotATree(self.root.clone()));
            }
        }
        for n in &self.mandatory {
            known(n)?;
        }
        for g in &self.groups {
            known(&g.parent)?;
            for c in &g.children {
                known(c)?;
            }
        }
        for a in &self.attributes {
            known(&a.host)?;
        }
        Ok(())
    }

    pub fn feature_index(&self) -> BTreeMap<&str, usize> {
        self.features.iter().enumerate().map(|(i, f)| (f.name.as_str(), i)).collect()
    }

    pub fn parent_of(&self, f: &str) -> Option<&str> {
        self.hierarchy.iter().find(|e| e.child == f).map(|e| e.parent.as_str())
    }

    /// The same model with Φ dropped.
    pub fn without_phi(&self) -> Self {
        let mut m = self.clone();
        m.phi = None;
        m.label = LABEL_OVER_APPROXIMATE.to_string();
        m
    }

    /// Compares everything but Φ, label and provenance.
    pub fn same_diagram(&self, other: &Self) -> bool {
        self.root == other.root
            && self.features == other.features
            && self.hierarchy == other.hierarchy
            && self.mandatory == other.mandatory
            && self.groups == other.groups
            && self.attributes == other.attributes
            && self.constraints == other.constraints
    }

    /// Indented tree, one feature per line, followed by the constraints.
    pub fn render_text(&self) -> String {
        let mut out = String::new();
        let mandatory: std::collections::BTreeSet<&str> = self.mandatory.iter().map(String::as_str).collect();
        let mut kids: BTreeMap<&str, Vec<&str>> = BTreeMap::new();
        for f in &self.features {
            if let Some(p) = self.parent_of(&f.name) {
                kids.entry(p).or_default().push(&f.name);
            }
        }
        let mut stack = vec![(self.root.as_str(), 0usize)];
        while let Some((f, depth)) = stack.pop() {
            let marker = match (depth, mandatory.contains(f)) {
                (0, _) => "",
                (_, true) => "[m] ",
                (_, false) => "[o] ",
            };
            let _ = writeln!(out, "{}{}{}", "  ".repeat(depth), marker, f);
            for a in self.attributes.iter().filter(|a| a.host == f) {
                let vals: Vec<String> = a.domain.values.iter().map(|v| v.to_string()).collect();
                let null = a.domain.null.as_ref().map(|n| format!(", null {n}")).unwrap_or_default();
                let _ = writeln!(out, "{}  @ {}: {{{}}}{}", "  ".repeat(depth), a.name, vals.join(", "), null);
            }
            for g in self.groups.iter().filter(|g| g.parent == f) {
                let _ = writeln!(out, "{}  <{}> {}", "  ".repeat(depth), g.kind.as_str(), g.children.join(" | "));
            }
            if let Some(ks) = kids.get(f) {
                stack.extend(ks.iter().rev().map(|k| (*k, depth + 1)));
            }
        }
        out.push_str("constraints:\n");
        for c in &self.constraints {
            let _ = writeln!(out, "  {}", render_constraint(c));
        }
        match &self.phi {
            Some(phi) => {
                let _ = writeln!(out, "phi: {} disjuncts over {} columns", phi.disjuncts.len(), phi.variables.len());
            }
            None => {
                let _ = writeln!(out, "phi: omitted ({})", LABEL_OVER_APPROXIMATE);
            }
        }
        out
    }
}
