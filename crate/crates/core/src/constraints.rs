//! Readable cross-tree constraints and the residual constraint.

use std::collections::{HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::implications::{BiSet, BinaryImplicationGraph, MutexGraph};
use crate::matrix::{CellValue, ConfigurationMatrix};
use crate::structure::Hierarchy;
use crate::variability::{FeatureGroup, GroupKind};
use crate::variables::{Domain, ValueOrder, VariableModel};
use crate::words;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelOp {
    Eq,
    Le,
    Ge,
    Lt,
    Gt,
}

impl RelOp {
    /// Preference order for canonical encodings.
    pub const ALL: [RelOp; 5] = [RelOp::Eq, RelOp::Le, RelOp::Ge, RelOp::Lt, RelOp::Gt];

    pub fn symbol(self) -> &'static str {
        match self {
            RelOp::Eq => "=",
            RelOp::Le => "<=",
            RelOp::Ge => ">=",
            RelOp::Lt => "<",
            RelOp::Gt => ">",
        }
    }
}

/// One side of a readable constraint.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum BoolFactor {
    Feature(String),
    NotFeature(String),
    Rel { attribute: String, op: RelOp, literal: CellValue },
}

/// `left => right`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ReadableConstraint {
    pub left: BoolFactor,
    pub right: BoolFactor,
}

impl ReadableConstraint {
    pub fn new(left: BoolFactor, right: BoolFactor) -> Self {
        ReadableConstraint { left, right }
    }
}

fn is_plain(s: &str) -> bool {
    let mut ch = s.chars();
    matches!(ch.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && ch.all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '.')
}

fn quote(s: &str) -> String {
    if is_plain(s) {
        return s.to_string();
    }
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        if c == '"' || c == '\\' {
            out.push('\\');
        }
        out.push(c);
    }
    out.push('"');
    out
}

impl fmt::Display for BoolFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoolFactor::Feature(n) => f.write_str(&quote(n)),
            BoolFactor::NotFeature(n) => write!(f, "!{}", quote(n)),
            BoolFactor::Rel { attribute, op, literal } => {
                let lit = match literal {
                    CellValue::Nat(n) => n.to_string(),
                    CellValue::Text(t) => quote(t),
                };
                write!(f, "{} {} {}", quote(attribute), op.symbol(), lit)
            }
        }
    }
}

impl fmt::Display for ReadableConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} => {}", self.left, self.right)
    }
}

/// Canonical text, e.g. `GPL => LicensePrice <= 10`.
pub fn render_constraint(rc: &ReadableConstraint) -> String {
    rc.to_string()
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("cannot parse constraint {text:?}: {message}")]
pub struct ParseError {
    pub text: String,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
enum Tok {
    Name(String),
    Quoted(String),
    Num(u64),
    Arrow,
    Bang,
    Op(RelOp),
}

fn tokenize(s: &str) -> Result<Vec<Tok>, String> {
    let cs: Vec<char> = s.chars().collect();
    let mut i = 0;
    let mut out = Vec::new();
    while i < cs.len() {
        let c = cs[i];
        match c {
            ' ' | '\t' => i += 1,
            '=' if cs.get(i + 1) == Some(&'>') => {
                out.push(Tok::Arrow);
                i += 2;
            }
            '=' => {
                out.push(Tok::Op(RelOp::Eq));
                i += 1;
            }
            '<' | '>' => {
                let eq = cs.get(i + 1) == Some(&'=');
                out.push(Tok::Op(match (c, eq) {
                    ('<', true) => RelOp::Le,
                    ('<', false) => RelOp::Lt,
                    ('>', true) => RelOp::Ge,
                    _ => RelOp::Gt,
                }));
                i += 1 + eq as usize;
            }
            '!' => {
                out.push(Tok::Bang);
                i += 1;
            }
            '"' => {
                let mut t = String::new();
                i += 1;
                loop {
                    match cs.get(i) {
                        None => return Err("unterminated string".into()),
                        Some('"') => break,
                        Some('\\') => {
                            t.push(*cs.get(i + 1).ok_or("dangling escape")?);
                            i += 2;
                        }
                        Some(&ch) => {
                            t.push(ch);
                            i += 1;
                        }
                    }
                }
                i += 1;
                out.push(Tok::Quoted(t));
            }
            c if c.is_ascii_digit() => {
                let start = i;
                while i < cs.len() && cs[i].is_ascii_digit() {
                    i += 1;
                }
                let t: String = cs[start..i].iter().collect();
                out.push(Tok::Num(t.parse().map_err(|_| "number too large")?));
            }
            c if c.is_ascii_alphabetic() || c == '_' => {
                let start = i;
                while i < cs.len() && (cs[i].is_ascii_alphanumeric() || cs[i] == '_' || cs[i] == '.') {
                    i += 1;
                }
                out.push(Tok::Name(cs[start..i].iter().collect()));
            }
            other => return Err(format!("unexpected character {other:?}")),
        }
    }
    Ok(out)
}

fn parse_factor(toks: &[Tok]) -> Result<BoolFactor, String> {
    match toks {
        [Tok::Bang, Tok::Name(n) | Tok::Quoted(n)] => Ok(BoolFactor::NotFeature(n.clone())),
        [Tok::Name(n) | Tok::Quoted(n)] => Ok(BoolFactor::Feature(n.clone())),
        [Tok::Name(a) | Tok::Quoted(a), Tok::Op(op), lit] => {
            let literal = match lit {
                Tok::Num(n) => CellValue::Nat(*n),
                Tok::Name(t) | Tok::Quoted(t) => CellValue::Text(t.clone()),
                _ => return Err("expected a literal".into()),
            };
            Ok(BoolFactor::Rel { attribute: a.clone(), op: *op, literal })
        }
        _ => Err("malformed factor".into()),
    }
}

/// Inverse of [`render_constraint`].
pub fn parse_constraint(text: &str) -> Result<ReadableConstraint, ParseError> {
    let err = |m: String| ParseError { text: text.to_string(), message: m };
    let toks = tokenize(text).map_err(err)?;
    let arrows: Vec<usize> = toks.iter().enumerate().filter(|(_, t)| **t == Tok::Arrow).map(|(i, _)| i).collect();
    let [a] = arrows[..] else { return Err(err("expected exactly one `=>`".into())) };
    Ok(ReadableConstraint { left: parse_factor(&toks[..a]).map_err(err)?, right: parse_factor(&toks[a + 1..]).map_err(err)? })
}

/// Whether `value` satisfies `op literal` under the domain's order.
pub fn rel_holds(domain: &Domain, op: RelOp, literal: &CellValue, value: &CellValue) -> bool {
    if op == RelOp::Eq {
        return value == literal;
    }
    let (Some(v), Some(l)) = (domain.rank(value), domain.rank(literal)) else { return false };
    match op {
        RelOp::Eq => v == l,
        RelOp::Le => v <= l,
        RelOp::Ge => v >= l,
        RelOp::Lt => v < l,
        RelOp::Gt => v > l,
    }
}

/// Whether `a op literal` is well formed: non-equality needs an ordered
/// domain, textual literals need the textual extension.
pub fn rel_allowed(domain: &Domain, op: RelOp, literal: &CellValue, textual_equality: bool) -> bool {
    let textual = matches!(literal, CellValue::Text(_));
    if op == RelOp::Eq {
        return !textual || textual_equality;
    }
    match &domain.order {
        ValueOrder::Natural => !textual,
        ValueOrder::Ranked(_) => (!textual || textual_equality) && domain.rank(literal).is_some(),
        ValueOrder::Unordered => false,
    }
}

/// Encodes a set of domain values (bit set over domain indices) as
/// `op literal` with a domain value as literal, if any encoding is exact.
pub fn express(domain: &Domain, set: &[u64], textual_equality: bool) -> Option<(RelOp, CellValue)> {
    for op in RelOp::ALL {
        for lit in &domain.values {
            if !rel_allowed(domain, op, lit, textual_equality) {
                continue;
            }
            let exact = domain.values.iter().enumerate().all(|(c, v)| rel_holds(domain, op, lit, v) == words::get(set, c));
            if exact {
                return Some((op, lit.clone()));
            }
        }
    }
    None
}

/// `f => g` for every implication edge not already shown by the diagram:
/// hierarchy edges, inverted mandatory edges, edges into always-selected
/// features or ancestors, and edges down a mandatory chain.
pub fn compute_requires(
    big: &BinaryImplicationGraph,
    h: &Hierarchy,
    mandatory: &[bool],
    core: &[bool],
) -> Vec<ReadableConstraint> {
    let mandatory_down = |f: usize, g: usize| {
        let mut cur = g;
        while let Some(p) = h.parent[cur] {
            if !mandatory[cur] {
                return false;
            }
            if p == f {
                return true;
            }
            cur = p;
        }
        false
    };
    let mut out: Vec<ReadableConstraint> = big
        .edges()
        .filter(|&(f, g)| {
            f != g && !core[g] && g != h.root && !h.is_ancestor(g, f) && !mandatory_down(f, g)
        })
        .map(|(f, g)| ReadableConstraint::new(BoolFactor::Feature(h.names[f].clone()), BoolFactor::Feature(h.names[g].clone())))
        .collect();
    out.sort_by_key(render_constraint);
    out
}

/// `f => !g` for every mutex edge not inside a kept mutex or xor group.
/// The deeper feature goes on the left, ties broken by name.
pub fn compute_excludes(mutex: &MutexGraph, h: &Hierarchy, groups: &[FeatureGroup]) -> Vec<ReadableConstraint> {
    let covered = |a: usize, b: usize| {
        groups.iter().any(|g| {
            matches!(g.kind, GroupKind::Mutex | GroupKind::Xor) && g.children.contains(&a) && g.children.contains(&b)
        })
    };
    let mut out: Vec<ReadableConstraint> = mutex
        .edges()
        .filter(|&(a, b)| !covered(a, b))
        .map(|(a, b)| {
            let key = |f: usize| (std::cmp::Reverse(h.depth(f)), h.names[f].clone());
            let (l, r) = if key(a) <= key(b) { (a, b) } else { (b, a) };
            ReadableConstraint::new(BoolFactor::Feature(h.names[l].clone()), BoolFactor::NotFeature(h.names[r].clone()))
        })
        .collect();
    out.sort_by_key(render_constraint);
    out
}

/// Constraints over attributes: feature-to-attribute implications whose
/// value set is a single relational expression, and attribute-to-attribute
/// implications merged around the interesting bounds `(a, k)` into the
/// classes below, at and above `k`.
pub fn compute_complex(
    bi: &BiSet,
    vm: &VariableModel,
    bounds: &[Vec<u64>],
    textual_equality: bool,
) -> Vec<ReadableConstraint> {
    let mut out = Vec::new();
    for f in &vm.features {
        let mask = bi.presence_mask(f);
        for a in &vm.attributes {
            let s = bi.image(f.column, &mask, a.column);
            if words::count(&s) == a.domain.values.len() {
                continue;
            }
            if let Some((op, literal)) = express(&a.domain, &s, textual_equality) {
                out.push(ReadableConstraint::new(
                    BoolFactor::Feature(f.name.clone()),
                    BoolFactor::Rel { attribute: a.name.clone(), op, literal },
                ));
            }
        }
    }
    for (ai, a) in vm.attributes.iter().enumerate() {
        if a.domain.order != ValueOrder::Natural {
            continue;
        }
        for &k in &bounds[ai] {
            let kv = CellValue::Nat(k);
            for op in [RelOp::Lt, RelOp::Eq, RelOp::Gt] {
                let mut class = vec![0u64; words::words_for(a.domain.values.len())];
                for (c, v) in a.domain.values.iter().enumerate() {
                    if rel_holds(&a.domain, op, &kv, v) {
                        words::set(&mut class, c);
                    }
                }
                if words::count(&class) == 0 {
                    continue;
                }
                for b in &vm.attributes {
                    if b.column == a.column {
                        continue;
                    }
                    let s = bi.image(a.column, &class, b.column);
                    if words::count(&s) == b.domain.values.len() {
                        continue;
                    }
                    if let Some((rop, literal)) = express(&b.domain, &s, textual_equality) {
                        out.push(ReadableConstraint::new(
                            BoolFactor::Rel { attribute: a.name.clone(), op, literal: kv.clone() },
                            BoolFactor::Rel { attribute: b.name.clone(), op: rop, literal },
                        ));
                    }
                }
            }
        }
    }
    let mut seen = HashSet::new();
    out.retain(|c| seen.insert(c.clone()));
    out.sort_by_key(render_constraint);
    out
}

/// The vocabulary of candidate constraints: non-core features and
/// attributes with their interesting bounds.
pub struct Vocabulary<'a> {
    pub features: Vec<&'a str>,
    pub attributes: Vec<(&'a str, &'a Domain, &'a [u64])>,
    pub textual_equality: bool,
}

/// Relational factors over one attribute: the five operators at each
/// interesting bound for numeric domains, `= v` for each textual value.
/// Factors denoting the same value set keep the preferred encoding; empty
/// and full sets are left out.
pub fn rel_factors(name: &str, domain: &Domain, bounds: &[u64], textual_equality: bool) -> Vec<BoolFactor> {
    let space = domain.value_space();
    let mut lits: Vec<(RelOp, CellValue)> = Vec::new();
    if domain.order == ValueOrder::Natural {
        for &k in bounds {
            for op in RelOp::ALL {
                lits.push((op, CellValue::Nat(k)));
            }
        }
    } else if textual_equality || domain.values.iter().all(|v| v.as_nat().is_some()) {
        for v in &domain.values {
            if rel_allowed(domain, RelOp::Eq, v, textual_equality) {
                lits.push((RelOp::Eq, v.clone()));
            }
        }
    }
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (op, lit) in lits {
        let set: Vec<bool> = space.iter().map(|v| rel_holds(domain, op, &lit, v)).collect();
        let n = set.iter().filter(|b| **b).count();
        if n == 0 || n == space.len() || !seen.insert(set) {
            continue;
        }
        out.push(BoolFactor::Rel { attribute: name.to_string(), op, literal: lit });
    }
    out
}

/// Every candidate constraint of the shapes `f => g`, `f => !g`,
/// `f => a op k` and `a op k => b op k'` over the vocabulary.
pub fn candidate_universe(vocab: &Vocabulary<'_>) -> Vec<ReadableConstraint> {
    let rels: Vec<Vec<BoolFactor>> = vocab
        .attributes
        .iter()
        .map(|(n, d, b)| rel_factors(n, d, b, vocab.textual_equality))
        .collect();
    let mut out = Vec::new();
    for &f in &vocab.features {
        for &g in &vocab.features {
            if f != g {
                out.push(ReadableConstraint::new(BoolFactor::Feature(f.into()), BoolFactor::Feature(g.into())));
                out.push(ReadableConstraint::new(BoolFactor::Feature(f.into()), BoolFactor::NotFeature(g.into())));
            }
        }
        for r in rels.iter().flatten() {
            out.push(ReadableConstraint::new(BoolFactor::Feature(f.into()), r.clone()));
        }
    }
    for (i, ri) in rels.iter().enumerate() {
        for (j, rj) in rels.iter().enumerate() {
            if i == j {
                continue;
            }
            for l in ri {
                for r in rj {
                    out.push(ReadableConstraint::new(l.clone(), r.clone()));
                }
            }
        }
    }
    out
}

/// Variables of the clause form used for domination checks.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
enum Var {
    F(usize),
    A(usize),
}

const SEL: u64 = 1;
const DESEL: u64 = 2;

/// A disjunction of `(variable in set)` literals; sets are bit masks over
/// the variable's value space (features: bit 0 selected, bit 1 deselected).
#[derive(Clone, Debug, PartialEq, Eq)]
struct Clause {
    lits: Vec<(Var, Vec<u64>)>,
}

impl Clause {
    fn dominates(&self, other: &Clause) -> bool {
        self.lits.iter().all(|(v, s)| other.lits.iter().any(|(w, t)| v == w && words::is_subset(s, t)))
    }

    fn vars(&self) -> Vec<Var> {
        let mut v: Vec<Var> = self.lits.iter().map(|l| l.0).collect();
        v.sort();
        v.dedup();
        v
    }
}

/// Inputs of the completion step.
pub struct CompletionInput<'a> {
    pub bi: &'a BiSet,
    pub vm: &'a VariableModel,
    pub h: &'a Hierarchy,
    pub mandatory: &'a [bool],
    pub core: &'a [bool],
    pub alpha: &'a [usize],
    pub groups: &'a [FeatureGroup],
    pub bounds: &'a [Vec<u64>],
    pub textual_equality: bool,
}

struct Resolver<'a> {
    input: &'a CompletionInput<'a>,
    features: HashMap<&'a str, usize>,
    attrs: HashMap<&'a str, usize>,
    spaces: Vec<Vec<CellValue>>,
}

impl<'a> Resolver<'a> {
    fn new(input: &'a CompletionInput<'a>) -> Self {
        let features = input.h.names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let attrs = input.vm.attributes.iter().enumerate().map(|(i, a)| (a.name.as_str(), i)).collect();
        let spaces = input.vm.attributes.iter().map(|a| a.domain.value_space()).collect();
        Resolver { input, features, attrs, spaces }
    }

    /// The factor as `(variable, value-space mask)`; `None` for unknown names.
    fn literal(&self, f: &BoolFactor) -> Option<(Var, Vec<u64>)> {
        match f {
            BoolFactor::Feature(n) => Some((Var::F(*self.features.get(n.as_str())?), vec![SEL])),
            BoolFactor::NotFeature(n) => Some((Var::F(*self.features.get(n.as_str())?), vec![DESEL])),
            BoolFactor::Rel { attribute, op, literal } => {
                let a = *self.attrs.get(attribute.as_str())?;
                let dom = &self.input.vm.attributes[a].domain;
                let mut m = vec![0u64; words::words_for(self.spaces[a].len())];
                for (c, v) in self.spaces[a].iter().enumerate() {
                    if rel_holds(dom, *op, literal, v) {
                        words::set(&mut m, c);
                    }
                }
                Some((Var::A(a), m))
            }
        }
    }

    fn space_len(&self, v: Var) -> usize {
        match v {
            Var::F(_) => 2,
            Var::A(a) => self.spaces[a].len(),
        }
    }

    fn negate(&self, (v, m): (Var, Vec<u64>)) -> (Var, Vec<u64>) {
        let full = words::full(self.space_len(v));
        (v, full.iter().zip(&m).map(|(f, x)| f & !x).collect())
    }

    fn clause(&self, rc: &ReadableConstraint) -> Option<Clause> {
        let l = self.negate(self.literal(&rc.left)?);
        let r = self.literal(&rc.right)?;
        Some(Clause { lits: vec![l, r] })
    }

    /// Column and mask over column codes for rows satisfying the literal.
    fn row_mask(&self, (v, m): &(Var, Vec<u64>)) -> Option<(usize, Vec<u64>)> {
        let bi = self.input.bi;
        match *v {
            Var::F(f) => {
                let feat = self.input.vm.features.get(f)?;
                let present = bi.presence_mask(feat);
                let n = bi.domain(feat.column).len();
                let mask = match m[0] & (SEL | DESEL) {
                    SEL => present,
                    DESEL => words::full(n).iter().zip(&present).map(|(a, b)| a & !b).collect(),
                    _ => return None,
                };
                Some((feat.column, mask))
            }
            Var::A(a) => {
                let attr = &self.input.vm.attributes[a];
                let mut mask = vec![0u64; words::words_for(attr.domain.values.len())];
                for (c, v) in self.spaces[a].iter().enumerate() {
                    if words::get(m, c) {
                        if let Some(code) = bi.code(attr.column, v) {
                            words::set(&mut mask, code as usize);
                        }
                    }
                }
                Some((attr.column, mask))
            }
        }
    }

    /// Whether `left => right` holds on every row.
    fn valid(&self, rc: &ReadableConstraint) -> bool {
        let (Some(l), Some(r)) = (self.literal(&rc.left), self.literal(&rc.right)) else { return false };
        let (Some((lc, lm)), Some((rc_, rm))) = (self.row_mask(&l), self.row_mask(&r)) else { return false };
        words::is_subset(&self.input.bi.image(lc, &lm, rc_), &rm)
    }
}

/// Closes the constraint set: every candidate of [`candidate_universe`]
/// that holds on all rows and is not already implied by the diagram or the
/// constraints so far is added. Stronger candidates are considered first.
pub fn complete_constraints(input: &CompletionInput<'_>, emitted: &[ReadableConstraint]) -> Vec<ReadableConstraint> {
    let h = input.h;
    let res = Resolver::new(input);
    let n = h.len();

    let vocab = Vocabulary {
        features: (0..n).filter(|&f| !input.core[f]).map(|f| h.names[f].as_str()).collect(),
        attributes: input
            .vm
            .attributes
            .iter()
            .enumerate()
            .map(|(i, a)| (a.name.as_str(), &a.domain, input.bounds[i].as_slice()))
            .collect(),
        textual_equality: input.textual_equality,
    };

    // Feature implications shown by the diagram or the constraints so far.
    let mut implies: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut excl: HashSet<(usize, usize)> = HashSet::new();
    for (c, p) in h.edges() {
        implies[c].push(p);
        if input.mandatory[c] {
            implies[p].push(c);
        }
    }
    for g in input.groups.iter().filter(|g| g.kind != GroupKind::Or) {
        for &a in &g.children {
            for &b in &g.children {
                if a != b {
                    excl.insert((a, b));
                }
            }
        }
    }
    let mut by_vars: HashMap<Vec<Var>, Vec<Clause>> = HashMap::new();
    let add_clause = |c: Clause, by_vars: &mut HashMap<Vec<Var>, Vec<Clause>>| {
        by_vars.entry(c.vars()).or_default().push(c);
    };
    for f in 0..n {
        if input.core[f] {
            add_clause(Clause { lits: vec![(Var::F(f), vec![SEL])] }, &mut by_vars);
        }
    }
    for (a, &host) in input.alpha.iter().enumerate() {
        let attr = &input.vm.attributes[a];
        if let Some(null) = &attr.domain.null {
            let pos = res.spaces[a].iter().position(|v| v == null).expect("null is in the value space");
            let mut m = vec![0u64; words::words_for(res.spaces[a].len())];
            words::set(&mut m, pos);
            add_clause(Clause { lits: vec![(Var::F(host), vec![SEL]), (Var::A(a), m)] }, &mut by_vars);
        }
    }
    for rc in emitted {
        if let Some(c) = res.clause(rc) {
            record_features(&c, &mut implies, &mut excl);
            add_clause(c, &mut by_vars);
        }
    }

    let mut cands: Vec<(usize, String, ReadableConstraint, Clause)> = candidate_universe(&vocab)
        .into_iter()
        .filter_map(|rc| {
            let c = res.clause(&rc)?;
            let weight: usize = c.lits.iter().map(|(_, m)| words::count(m)).sum();
            Some((weight, render_constraint(&rc), rc, c))
        })
        .collect();
    cands.sort_by(|a, b| a.0.cmp(&b.0).then_with(|| a.1.cmp(&b.1)));

    let mut out = Vec::new();
    for (_, _, rc, clause) in cands {
        if clause.lits.iter().any(|(v, m)| words::count(m) == res.space_len(*v)) {
            continue;
        }
        let dominated = |by_vars: &HashMap<Vec<Var>, Vec<Clause>>| {
            let vars = clause.vars();
            let mut keys: Vec<Vec<Var>> = vars.iter().map(|v| vec![*v]).collect();
            keys.push(vars);
            keys.iter().any(|k| by_vars.get(k).is_some_and(|cs| cs.iter().any(|d| d.dominates(&clause))))
        };
        if dominated(&by_vars) || derivable(&rc, &res, &implies, &excl, &by_vars) || !res.valid(&rc) {
            continue;
        }
        record_features(&clause, &mut implies, &mut excl);
        add_clause(clause, &mut by_vars);
        out.push(rc);
    }
    out
}

fn record_features(c: &Clause, implies: &mut [Vec<usize>], excl: &mut HashSet<(usize, usize)>) {
    if let [(Var::F(f), lf), (Var::F(g), lg)] = c.lits.as_slice() {
        match (lf[0], lg[0]) {
            (DESEL, SEL) => implies[*f].push(*g),
            (SEL, DESEL) => implies[*g].push(*f),
            (DESEL, DESEL) => {
                excl.insert((*f, *g));
                excl.insert((*g, *f));
            }
            _ => {}
        }
    }
}

fn reach(implies: &[Vec<usize>], f: usize) -> Vec<usize> {
    let mut seen = vec![false; implies.len()];
    let mut stack = vec![f];
    seen[f] = true;
    let mut out = Vec::new();
    while let Some(x) = stack.pop() {
        out.push(x);
        for &y in &implies[x] {
            if !seen[y] {
                seen[y] = true;
                stack.push(y);
            }
        }
    }
    out
}

/// Follows chains of feature implications already present.
fn derivable(
    rc: &ReadableConstraint,
    res: &Resolver<'_>,
    implies: &[Vec<usize>],
    excl: &HashSet<(usize, usize)>,
    by_vars: &HashMap<Vec<Var>, Vec<Clause>>,
) -> bool {
    let BoolFactor::Feature(fname) = &rc.left else { return false };
    let Some(&f) = res.features.get(fname.as_str()) else { return false };
    let up = reach(implies, f);
    match &rc.right {
        BoolFactor::Feature(g) => res.features.get(g.as_str()).is_some_and(|g| up.contains(g)),
        BoolFactor::NotFeature(g) => res.features.get(g.as_str()).is_some_and(|&g| {
            let gup = reach(implies, g);
            up.iter().any(|&a| gup.iter().any(|&b| excl.contains(&(a, b))))
        }),
        rel @ BoolFactor::Rel { .. } => {
            let Some((v, m)) = res.literal(rel) else { return false };
            let key = vec![Var::F(0), v];
            up.iter().any(|&x| {
                let mut key = key.clone();
                key[0] = Var::F(x);
                key.sort();
                by_vars.get(&key).is_some_and(|cs| {
                    cs.iter().any(|d| {
                        d.lits.iter().any(|(w, s)| *w == Var::F(x) && s[0] == DESEL)
                            && d.lits.iter().any(|(w, s)| *w == v && words::is_subset(s, &m))
                    })
                })
            })
        }
    }
}

/// The residual constraint: one conjunction of column equalities per row.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResidualConstraint {
    pub variables: Vec<String>,
    pub disjuncts: Vec<Vec<CellValue>>,
}

/// Builds the residual constraint over the modelled columns (identifier
/// columns are left out; rows that coincide on the rest are merged).
pub fn compute_phi(matrix: &ConfigurationMatrix, vm: &VariableModel) -> ResidualConstraint {
    let ids = vm.identifier_columns();
    let cols: Vec<usize> = (0..matrix.n_cols()).filter(|&j| !ids.contains(&matrix.variables()[j])).collect();
    let mut seen = HashSet::new();
    let mut disjuncts = Vec::new();
    for row in matrix.rows() {
        let d: Vec<CellValue> = cols.iter().map(|&j| row[j].clone()).collect();
        if seen.insert(d.clone()) {
            disjuncts.push(d);
        }
    }
    ResidualConstraint { variables: cols.iter().map(|&j| matrix.variables()[j].clone()).collect(), disjuncts }
}
