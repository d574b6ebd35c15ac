//! Configuration semantics by explicit enumeration, soundness and
//! completeness checks, and the maximality audit.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constraints::{candidate_universe, rel_holds, BoolFactor, Vocabulary};
use crate::matrix::{CellValue, ConfigurationMatrix};
use crate::model::AttributedFeatureModel;
use crate::variability::GroupKind;
use crate::variables::Domain;
use crate::words;

pub const DEFAULT_BUDGET: u64 = 1_000_000;

/// Selected features and one value per attribute.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Configuration {
    pub selected: BTreeSet<String>,
    pub values: BTreeMap<String, CellValue>,
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sel: Vec<&str> = self.selected.iter().map(String::as_str).collect();
        write!(f, "{{{}}}", sel.join(", "))?;
        for (a, v) in &self.values {
            write!(f, " {a}={v}")?;
        }
        Ok(())
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum SemanticsError {
    #[error("unknown variable {0:?}")]
    UnknownVariable(String),
    #[error("configuration gives no value for attribute {0:?}")]
    MissingValue(String),
    #[error("enumeration exceeded the budget of {0} nodes")]
    BudgetExceeded(u64),
    #[error("model constraint {0:?} refers to an unknown variable")]
    BadConstraint(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Lit {
    Feat(usize, bool),
    /// Attribute index and offset into `attr_sets`.
    Attr(usize, usize),
}

#[derive(Clone, Debug)]
struct Group {
    parent: usize,
    children: Vec<usize>,
    kind: GroupKind,
}

/// A model lowered to integer variables: features first (value 1 when
/// selected), then attributes (value = index into the value space).
#[derive(Clone, Debug)]
struct Compiled {
    features: Vec<String>,
    parent: Vec<Option<usize>>,
    mandatory: Vec<bool>,
    order: Vec<usize>,
    groups: Vec<Group>,
    attrs: Vec<String>,
    host: Vec<usize>,
    space: Vec<Vec<CellValue>>,
    domains: Vec<Domain>,
    null: Vec<Option<u32>>,
    constraints: Vec<(Lit, Lit)>,
    attr_sets: Vec<Vec<bool>>,
    phi: Option<Vec<Vec<u32>>>,
}

impl Compiled {
    fn new(model: &AttributedFeatureModel) -> Result<Self, SemanticsError> {
        let idx = model.feature_index();
        let fid = |n: &str| idx.get(n).copied().ok_or_else(|| SemanticsError::UnknownVariable(n.to_string()));
        let n = model.features.len();
        let mut parent = vec![None; n];
        for e in &model.hierarchy {
            parent[fid(&e.child)?] = Some(fid(&e.parent)?);
        }
        let mut mandatory = vec![false; n];
        for m in &model.mandatory {
            mandatory[fid(m)?] = true;
        }
        let root = fid(&model.root)?;
        let mut kids = vec![Vec::new(); n];
        for (c, p) in parent.iter().enumerate() {
            if let Some(p) = p {
                kids[*p].push(c);
            }
        }
        let mut order = Vec::with_capacity(n);
        let mut stack = vec![root];
        while let Some(f) = stack.pop() {
            order.push(f);
            stack.extend(kids[f].iter().rev());
        }
        let groups = model
            .groups
            .iter()
            .map(|g| {
                Ok(Group {
                    parent: fid(&g.parent)?,
                    children: g.children.iter().map(|c| fid(c)).collect::<Result<_, _>>()?,
                    kind: g.kind,
                })
            })
            .collect::<Result<Vec<_>, SemanticsError>>()?;
        let mut c = Compiled {
            features: model.features.iter().map(|f| f.name.clone()).collect(),
            parent,
            mandatory,
            order,
            groups,
            attrs: Vec::new(),
            host: Vec::new(),
            space: Vec::new(),
            domains: Vec::new(),
            null: Vec::new(),
            constraints: Vec::new(),
            attr_sets: Vec::new(),
            phi: None,
        };
        for a in &model.attributes {
            let space = a.domain.value_space();
            c.null.push(a.domain.null.as_ref().map(|nv| space.iter().position(|v| v == nv).unwrap() as u32));
            c.attrs.push(a.name.clone());
            c.host.push(fid(&a.host)?);
            c.space.push(space);
            c.domains.push(a.domain.clone());
        }
        for rc in &model.constraints {
            let l = c.lit(&rc.left).ok_or_else(|| SemanticsError::BadConstraint(rc.to_string()))?;
            let r = c.lit(&rc.right).ok_or_else(|| SemanticsError::BadConstraint(rc.to_string()))?;
            c.constraints.push((l, r));
        }
        if let Some(phi) = &model.phi {
            let mut rows = Vec::new();
            let mut seen = HashSet::new();
            for d in &phi.disjuncts {
                let cells: HashMap<&str, &CellValue> = phi.variables.iter().map(String::as_str).zip(d).collect();
                if let Some(a) = c.assignment_from_cells(model, |col| cells.get(col).map(|v| (*v).clone()))? {
                    if seen.insert(a.clone()) {
                        rows.push(a);
                    }
                }
            }
            c.phi = Some(rows);
        }
        Ok(c)
    }

    fn n_vars(&self) -> usize {
        self.features.len() + self.attrs.len()
    }

    fn lit(&mut self, f: &BoolFactor) -> Option<Lit> {
        match f {
            BoolFactor::Feature(n) => Some(Lit::Feat(self.features.iter().position(|x| x == n)?, true)),
            BoolFactor::NotFeature(n) => Some(Lit::Feat(self.features.iter().position(|x| x == n)?, false)),
            BoolFactor::Rel { attribute, op, literal } => {
                let a = self.attrs.iter().position(|x| x == attribute)?;
                let set = self.space[a].iter().map(|v| rel_holds(&self.domains[a], *op, literal, v)).collect();
                self.attr_sets.push(set);
                Some(Lit::Attr(a, self.attr_sets.len() - 1))
            }
        }
    }

    fn lit_holds(&self, l: Lit, asg: &[u32]) -> bool {
        match l {
            Lit::Feat(f, pos) => (asg[f] == 1) == pos,
            Lit::Attr(a, s) => self.attr_sets[s][asg[self.features.len() + a] as usize],
        }
    }

    fn lit_var(&self, l: Lit) -> usize {
        match l {
            Lit::Feat(f, _) => f,
            Lit::Attr(a, _) => self.features.len() + a,
        }
    }

    /// Reads an assignment off a cell lookup by column name. `None` when a
    /// value lies outside the model's value spaces.
    fn assignment_from_cells(
        &self,
        model: &AttributedFeatureModel,
        cell: impl Fn(&str) -> Option<CellValue>,
    ) -> Result<Option<Vec<u32>>, SemanticsError> {
        let mut asg = vec![0u32; self.n_vars()];
        for (f, decl) in model.features.iter().enumerate() {
            asg[f] = match &decl.binding {
                None => 1,
                Some(b) => {
                    let v = cell(&b.column).ok_or_else(|| SemanticsError::UnknownVariable(b.column.clone()))?;
                    b.present.contains(&v) as u32
                }
            };
        }
        for (a, decl) in model.attributes.iter().enumerate() {
            let v = cell(&decl.column).ok_or_else(|| SemanticsError::UnknownVariable(decl.column.clone()))?;
            match self.space[a].iter().position(|x| *x == v) {
                Some(p) => asg[self.features.len() + a] = p as u32,
                None => return Ok(None),
            }
        }
        Ok(Some(asg))
    }

    fn assignment_from_config(&self, cfg: &Configuration) -> Result<Option<Vec<u32>>, SemanticsError> {
        for s in &cfg.selected {
            if !self.features.contains(s) {
                return Err(SemanticsError::UnknownVariable(s.clone()));
            }
        }
        for a in cfg.values.keys() {
            if !self.attrs.contains(a) {
                return Err(SemanticsError::UnknownVariable(a.clone()));
            }
        }
        let mut asg = vec![0u32; self.n_vars()];
        for (f, name) in self.features.iter().enumerate() {
            asg[f] = cfg.selected.contains(name) as u32;
        }
        for (a, name) in self.attrs.iter().enumerate() {
            let v = cfg.values.get(name).ok_or_else(|| SemanticsError::MissingValue(name.clone()))?;
            match self.space[a].iter().position(|x| x == v) {
                Some(p) => asg[self.features.len() + a] = p as u32,
                None => return Ok(None),
            }
        }
        Ok(Some(asg))
    }

    fn to_config(&self, asg: &[u32]) -> Configuration {
        let nf = self.features.len();
        Configuration {
            selected: (0..nf).filter(|&f| asg[f] == 1).map(|f| self.features[f].clone()).collect(),
            values: self.attrs.iter().enumerate().map(|(a, n)| (n.clone(), self.space[a][asg[nf + a] as usize].clone())).collect(),
        }
    }

    fn group_ok(&self, g: &Group, asg: &[u32]) -> bool {
        if asg[g.parent] == 0 {
            return true;
        }
        let k = g.children.iter().filter(|&&c| asg[c] == 1).count();
        match g.kind {
            GroupKind::Mutex => k <= 1,
            GroupKind::Or => k >= 1,
            GroupKind::Xor => k == 1,
        }
    }

    /// Every rule except Φ, on a complete assignment.
    fn diagram_ok(&self, asg: &[u32]) -> bool {
        let nf = self.features.len();
        for f in 0..nf {
            match self.parent[f] {
                None => {
                    if asg[f] != 1 {
                        return false;
                    }
                }
                Some(p) => {
                    if asg[f] == 1 && asg[p] == 0 || self.mandatory[f] && asg[p] == 1 && asg[f] == 0 {
                        return false;
                    }
                }
            }
        }
        for (a, &h) in self.host.iter().enumerate() {
            let v = asg[nf + a];
            let ok = if asg[h] == 1 { self.domains[a].contains(&self.space[a][v as usize]) } else { self.null[a] == Some(v) };
            if !ok {
                return false;
            }
        }
        self.groups.iter().all(|g| self.group_ok(g, asg))
            && self.constraints.iter().all(|&(l, r)| !self.lit_holds(l, asg) || self.lit_holds(r, asg))
    }

    fn holds(&self, asg: &[u32]) -> bool {
        self.diagram_ok(asg) && self.phi.as_ref().is_none_or(|rows| rows.iter().any(|r| r == asg))
    }
}

/// Depth-first enumeration with checks fired as soon as their variables
/// are assigned and Φ tracked as a mask of still-matching disjuncts.
struct Enumerator<'a> {
    c: &'a Compiled,
    vars: Vec<usize>,
    groups_at: Vec<Vec<usize>>,
    constraints_at: Vec<Vec<usize>>,
    phi_masks: Option<Vec<Vec<Vec<u64>>>>,
    budget: u64,
    nodes: u64,
    asg: Vec<u32>,
    out: Vec<Vec<u32>>,
}

impl<'a> Enumerator<'a> {
    fn new(c: &'a Compiled, budget: u64) -> Self {
        let nf = c.features.len();
        let mut vars = c.order.clone();
        vars.extend(nf..c.n_vars());
        let mut pos = vec![0usize; c.n_vars()];
        for (i, &v) in vars.iter().enumerate() {
            pos[v] = i;
        }
        let mut groups_at = vec![Vec::new(); vars.len()];
        for (gi, g) in c.groups.iter().enumerate() {
            let last = g.children.iter().chain([&g.parent]).map(|&f| pos[f]).max().unwrap();
            groups_at[last].push(gi);
        }
        let mut constraints_at = vec![Vec::new(); vars.len()];
        for (ci, &(l, r)) in c.constraints.iter().enumerate() {
            constraints_at[pos[c.lit_var(l)].max(pos[c.lit_var(r)])].push(ci);
        }
        let phi_masks = c.phi.as_ref().map(|rows| {
            (0..c.n_vars())
                .map(|v| {
                    let size = if v < nf { 2 } else { c.space[v - nf].len() };
                    let mut m = vec![vec![0u64; words::words_for(rows.len())]; size];
                    for (r, row) in rows.iter().enumerate() {
                        words::set(&mut m[row[v] as usize], r);
                    }
                    m
                })
                .collect()
        });
        Enumerator { c, vars, groups_at, constraints_at, phi_masks, budget, nodes: 0, asg: vec![0; c.n_vars()], out: Vec::new() }
    }

    fn run(mut self) -> Result<Vec<Vec<u32>>, SemanticsError> {
        let mask = self.c.phi.as_ref().map(|rows| words::full(rows.len()));
        if mask.as_ref().is_none_or(|m| words::count(m) > 0) {
            self.descend(0, mask.as_deref())?;
        }
        Ok(self.out)
    }

    fn candidates(&self, v: usize) -> Vec<u32> {
        let c = self.c;
        let nf = c.features.len();
        if v < nf {
            return match c.parent[v] {
                None => vec![1],
                Some(p) if self.asg[p] == 0 => vec![0],
                Some(_) if c.mandatory[v] => vec![1],
                Some(_) => vec![0, 1],
            };
        }
        let a = v - nf;
        if self.asg[c.host[a]] == 1 {
            (0..c.space[a].len() as u32).filter(|&i| c.domains[a].contains(&c.space[a][i as usize])).collect()
        } else {
            c.null[a].into_iter().collect()
        }
    }

    fn descend(&mut self, depth: usize, mask: Option<&[u64]>) -> Result<(), SemanticsError> {
        if depth == self.vars.len() {
            self.out.push(self.asg.clone());
            return Ok(());
        }
        let v = self.vars[depth];
        for val in self.candidates(v) {
            self.nodes += 1;
            if self.nodes > self.budget {
                return Err(SemanticsError::BudgetExceeded(self.budget));
            }
            self.asg[v] = val;
            let next = match (&self.phi_masks, mask) {
                (Some(pm), Some(m)) => {
                    let n: Vec<u64> = m.iter().zip(&pm[v][val as usize]).map(|(a, b)| a & b).collect();
                    if words::count(&n) == 0 {
                        continue;
                    }
                    Some(n)
                }
                _ => None,
            };
            let c = self.c;
            if !self.groups_at[depth].iter().all(|&g| c.group_ok(&c.groups[g], &self.asg)) {
                continue;
            }
            if !self.constraints_at[depth].iter().all(|&i| {
                let (l, r) = c.constraints[i];
                !c.lit_holds(l, &self.asg) || c.lit_holds(r, &self.asg)
            }) {
                continue;
            }
            self.descend(depth + 1, next.as_deref())?;
        }
        Ok(())
    }
}

fn enumerate_compiled(c: &Compiled, budget: u64) -> Result<Vec<Vec<u32>>, SemanticsError> {
    Enumerator::new(c, budget).run()
}

/// Membership in the model's configuration set (Φ included when present).
pub fn eval_config(model: &AttributedFeatureModel, cfg: &Configuration) -> Result<bool, SemanticsError> {
    let c = Compiled::new(model)?;
    Ok(c.assignment_from_config(cfg)?.is_some_and(|a| c.holds(&a)))
}

/// All valid configurations, in enumeration order. Fails once more than
/// `budget` search nodes are visited.
pub fn enumerate_configurations(model: &AttributedFeatureModel, budget: u64) -> Result<Vec<Configuration>, SemanticsError> {
    let c = Compiled::new(model)?;
    Ok(enumerate_compiled(&c, budget)?.iter().map(|a| c.to_config(a)).collect())
}

/// Reads a matrix row as a configuration: features selected per their
/// presence values, attribute values copied.
pub fn row_configuration(
    model: &AttributedFeatureModel,
    matrix: &ConfigurationMatrix,
    row: usize,
) -> Result<Configuration, SemanticsError> {
    let cell = |col: &str| -> Result<CellValue, SemanticsError> {
        let j = matrix.column_index(col).ok_or_else(|| SemanticsError::UnknownVariable(col.to_string()))?;
        Ok(matrix.cell(row, j).clone())
    };
    let mut cfg = Configuration::default();
    for f in &model.features {
        let sel = match &f.binding {
            None => true,
            Some(b) => b.present.contains(&cell(&b.column)?),
        };
        if sel {
            cfg.selected.insert(f.name.clone());
        }
    }
    for a in &model.attributes {
        cfg.values.insert(a.name.clone(), cell(&a.column)?);
    }
    Ok(cfg)
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SemanticsReport {
    pub sound: bool,
    pub complete: bool,
    pub configurations: usize,
    pub rows: usize,
    /// In the model, not in the matrix.
    pub extra: Vec<Configuration>,
    /// In the matrix, not in the model.
    pub missing: Vec<Configuration>,
}

impl SemanticsReport {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "sound: {}", self.sound);
        let _ = writeln!(s, "complete: {}", self.complete);
        let _ = writeln!(s, "configurations: {}", self.configurations);
        let _ = writeln!(s, "rows: {}", self.rows);
        let _ = writeln!(s, "extra: {}", self.extra.len());
        for c in &self.extra {
            let _ = writeln!(s, "  {c}");
        }
        let _ = writeln!(s, "missing: {}", self.missing.len());
        for c in &self.missing {
            let _ = writeln!(s, "  {c}");
        }
        s
    }
}

/// Compares the model's configuration set with the matrix rows.
pub fn check_semantics(
    model: &AttributedFeatureModel,
    matrix: &ConfigurationMatrix,
    budget: u64,
) -> Result<SemanticsReport, SemanticsError> {
    let c = Compiled::new(model)?;
    let configs: BTreeSet<Configuration> = enumerate_compiled(&c, budget)?.iter().map(|a| c.to_config(a)).collect();
    let rows: BTreeSet<Configuration> =
        (0..matrix.n_rows()).map(|r| row_configuration(model, matrix, r)).collect::<Result<_, _>>()?;
    let extra: Vec<Configuration> = configs.difference(&rows).cloned().collect();
    let missing: Vec<Configuration> = rows.difference(&configs).cloned().collect();
    Ok(SemanticsReport {
        sound: extra.is_empty(),
        complete: missing.is_empty(),
        configurations: configs.len(),
        rows: rows.len(),
        extra,
        missing,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MutationClass {
    MandatoryEdge,
    AddGroup,
    PromoteToXor,
    AddConstraint,
}

impl MutationClass {
    pub const ALL: [MutationClass; 4] =
        [MutationClass::MandatoryEdge, MutationClass::AddGroup, MutationClass::PromoteToXor, MutationClass::AddConstraint];

    pub fn as_str(self) -> &'static str {
        match self {
            MutationClass::MandatoryEdge => "mandatory-edge",
            MutationClass::AddGroup => "add-group",
            MutationClass::PromoteToXor => "promote-to-xor",
            MutationClass::AddConstraint => "add-constraint",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Violation {
    pub class: MutationClass,
    pub mutation: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AuditReport {
    /// Mutations tried per class.
    pub tried: BTreeMap<MutationClass, usize>,
    pub violations: Vec<Violation>,
    /// Or-groups were not computed, so or mutations were not tried.
    pub or_groups_skipped: bool,
}

impl AuditReport {
    pub fn maximal(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "maximal: {}", self.maximal());
        for class in MutationClass::ALL {
            let n = self.tried.get(&class).copied().unwrap_or(0);
            let v = self.violations.iter().filter(|x| x.class == class).count();
            let _ = writeln!(s, "{}: tried {}, violations {}", class.as_str(), n, v);
        }
        if self.or_groups_skipped {
            s.push_str("or-group mutations skipped\n");
        }
        for v in &self.violations {
            let _ = writeln!(s, "  {}: {}", v.class.as_str(), v.mutation);
        }
        s
    }
}

fn subsets_of_size_at_least_two(items: &[usize]) -> Vec<Vec<usize>> {
    let n = items.len().min(16);
    (0u32..1 << n)
        .filter(|m| m.count_ones() >= 2)
        .map(|m| (0..n).filter(|i| m >> i & 1 == 1).map(|i| items[i]).collect())
        .collect()
}

/// Tries every mutation the maximality definition allows and reports those
/// that leave the semantics unchanged. Structural mutations are compared on
/// the full model; a candidate constraint is a violation when it holds on
/// every configuration of the model yet is not implied by the diagram.
/// The matrix is only used to confirm the model is sound and complete.
pub fn audit_maximality(
    model: &AttributedFeatureModel,
    matrix: &ConfigurationMatrix,
    budget: u64,
) -> Result<AuditReport, SemanticsError> {
    let base = Compiled::new(model)?;
    let reference: BTreeSet<Vec<u32>> = enumerate_compiled(&base, budget)?.into_iter().collect();
    let _ = check_semantics(model, matrix, budget)?;
    let or_on = model.provenance.options.or_groups == "complete";
    let mut report = AuditReport { or_groups_skipped: !or_on, ..Default::default() };
    let nf = base.features.len();
    let same = |c: &Compiled| -> Result<bool, SemanticsError> {
        let got: BTreeSet<Vec<u32>> = enumerate_compiled(c, budget)?.into_iter().collect();
        Ok(got == reference)
    };
    let record = |report: &mut AuditReport, class: MutationClass, unchanged: bool, what: String| {
        *report.tried.entry(class).or_default() += 1;
        if unchanged {
            report.violations.push(Violation { class, mutation: what });
        }
    };

    for f in 0..nf {
        if base.parent[f].is_some() && !base.mandatory[f] {
            let mut m = base.clone();
            m.mandatory[f] = true;
            let unchanged = same(&m)?;
            record(&mut report, MutationClass::MandatoryEdge, unchanged, format!("make {} mandatory", base.features[f]));
        }
    }

    let grouped: HashSet<usize> = base.groups.iter().flat_map(|g| g.children.iter().copied()).collect();
    let kinds: Vec<GroupKind> =
        if or_on { vec![GroupKind::Mutex, GroupKind::Or, GroupKind::Xor] } else { vec![GroupKind::Mutex, GroupKind::Xor] };
    for p in 0..nf {
        let free: Vec<usize> =
            (0..nf).filter(|&c| base.parent[c] == Some(p) && !base.mandatory[c] && !grouped.contains(&c)).collect();
        for set in subsets_of_size_at_least_two(&free) {
            for &kind in &kinds {
                let mut m = base.clone();
                m.groups.push(Group { parent: p, children: set.clone(), kind });
                let unchanged = same(&m)?;
                let names: Vec<&str> = set.iter().map(|&c| base.features[c].as_str()).collect();
                record(
                    &mut report,
                    MutationClass::AddGroup,
                    unchanged,
                    format!("{} group {{{}}} under {}", kind.as_str(), names.join(", "), base.features[p]),
                );
            }
        }
    }

    for (gi, g) in base.groups.iter().enumerate() {
        if g.kind == GroupKind::Xor || g.kind == GroupKind::Or && !or_on {
            continue;
        }
        let mut m = base.clone();
        m.groups[gi].kind = GroupKind::Xor;
        let unchanged = same(&m)?;
        let names: Vec<&str> = g.children.iter().map(|&c| base.features[c].as_str()).collect();
        record(
            &mut report,
            MutationClass::PromoteToXor,
            unchanged,
            format!("{} group {{{}}} to xor", g.kind.as_str(), names.join(", ")),
        );
    }

    let mut fd = base.clone();
    fd.phi = None;
    let fd_configs = enumerate_compiled(&fd, budget)?;
    let always: Vec<bool> = (0..nf).map(|f| reference.iter().all(|a| a[f] == 1)).collect();
    let vocab = Vocabulary {
        features: (0..nf).filter(|&f| !always[f]).map(|f| base.features[f].as_str()).collect(),
        attributes: model.attributes.iter().map(|a| (a.name.as_str(), &a.domain, a.interesting.as_slice())).collect(),
        textual_equality: model.provenance.options.textual_equality,
    };
    let mut scratch = base.clone();
    for rc in candidate_universe(&vocab) {
        let (Some(l), Some(r)) = (scratch.lit(&rc.left), scratch.lit(&rc.right)) else {
            return Err(SemanticsError::BadConstraint(rc.to_string()));
        };
        let holds = |a: &Vec<u32>| !scratch.lit_holds(l, a) || scratch.lit_holds(r, a);
        let valid = reference.iter().all(holds);
        let redundant = fd_configs.iter().all(holds);
        record(&mut report, MutationClass::AddConstraint, valid && !redundant, rc.to_string());
        scratch.attr_sets.truncate(base.attr_sets.len());
    }
    Ok(report)
}

/// Configurations admitted by the diagram alone but not by the full model.
pub fn over_approximation(model: &AttributedFeatureModel, budget: u64) -> Result<Vec<Configuration>, SemanticsError> {
    let full: BTreeSet<Configuration> = enumerate_configurations(model, budget)?.into_iter().collect();
    Ok(enumerate_configurations(&model.without_phi(), budget)?.into_iter().filter(|c| !full.contains(c)).collect())
}
