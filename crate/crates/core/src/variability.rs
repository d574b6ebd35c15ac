//! Mandatory edges and feature groups.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::time::{Duration, Instant};

use fixedbitset::FixedBitSet;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::implications::{BinaryImplicationGraph, MutexGraph};
use crate::knowledge::{DecisionError, DecisionProvider};
use crate::matrix::ConfigurationMatrix;
use crate::structure::Hierarchy;
use crate::variables::VariableModel;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GroupKind {
    Mutex,
    Or,
    Xor,
}

impl GroupKind {
    pub fn as_str(self) -> &'static str {
        match self {
            GroupKind::Mutex => "mutex",
            GroupKind::Or => "or",
            GroupKind::Xor => "xor",
        }
    }
}

/// Siblings under one parent with a cardinality: at most one (mutex), at
/// least one (or), exactly one (xor) when the parent is selected.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FeatureGroup {
    pub parent: usize,
    pub children: Vec<usize>,
    pub kind: GroupKind,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GroupError {
    #[error("group choice {answer:?} under {parent:?} is empty, out of range or overlapping")]
    IllegalGroupChoice { parent: String, answer: Vec<usize> },
    #[error(transparent)]
    Decision(#[from] DecisionError),
}

/// Per row, the set of selected features (a synthetic root is always selected).
#[derive(Clone, Debug)]
pub struct Selections {
    rows: Vec<FixedBitSet>,
}

impl Selections {
    pub fn new(matrix: &ConfigurationMatrix, vm: &VariableModel, n_features: usize) -> Self {
        let rows = (0..matrix.n_rows())
            .map(|k| {
                let mut s = FixedBitSet::with_capacity(n_features);
                for f in 0..n_features {
                    if f >= vm.features.len() || vm.selected(matrix, f, k) {
                        s.insert(f);
                    }
                }
                s
            })
            .collect();
        Selections { rows }
    }

    pub fn rows(&self) -> &[FixedBitSet] {
        &self.rows
    }

    /// Every row selecting `parent` selects some member of `set`.
    pub fn covers(&self, parent: usize, set: &[usize]) -> bool {
        self.rows.iter().all(|r| !r.contains(parent) || set.iter().any(|&c| r.contains(c)))
    }
}

/// Per feature, whether its edge to the parent is mandatory: the parent
/// implies the child.
pub fn compute_mandatory(h: &Hierarchy, big: &BinaryImplicationGraph) -> Vec<bool> {
    (0..h.len()).map(|c| h.parent[c].is_some_and(|p| big.has_edge(p, c))).collect()
}

fn optional_children(h: &Hierarchy, mandatory: &[bool], p: usize) -> Vec<usize> {
    h.children(p).into_iter().filter(|&c| !mandatory[c]).collect()
}

fn by_name(h: &Hierarchy, mut v: Vec<usize>) -> Vec<usize> {
    v.sort_by(|&a, &b| h.names[a].cmp(&h.names[b]));
    v
}

/// Maximal cliques (any size) of the graph induced on `vertices`, found by
/// Bron-Kerbosch with pivoting.
pub fn maximal_cliques(mutex: &MutexGraph, vertices: &[usize]) -> Vec<Vec<usize>> {
    let k = vertices.len();
    let adj: Vec<FixedBitSet> = vertices
        .iter()
        .map(|&a| {
            let mut s = FixedBitSet::with_capacity(k);
            for (j, &b) in vertices.iter().enumerate() {
                if a != b && mutex.has_edge(a, b) {
                    s.insert(j);
                }
            }
            s
        })
        .collect();
    let mut out = Vec::new();
    let mut p = FixedBitSet::with_capacity(k);
    p.insert_range(..);
    bron_kerbosch(&adj, &mut Vec::new(), p, FixedBitSet::with_capacity(k), &mut out);
    out.into_iter().map(|c| c.into_iter().map(|j| vertices[j]).collect()).collect()
}

fn bron_kerbosch(adj: &[FixedBitSet], r: &mut Vec<usize>, mut p: FixedBitSet, mut x: FixedBitSet, out: &mut Vec<Vec<usize>>) {
    if p.is_clear() && x.is_clear() {
        out.push(r.clone());
        return;
    }
    let pivot = p
        .ones()
        .chain(x.ones())
        .max_by_key(|&u| adj[u].intersection(&p).count())
        .expect("p or x non-empty");
    let mut todo = p.clone();
    todo.difference_with(&adj[pivot]);
    for v in todo.ones() {
        let mut np = p.clone();
        np.intersect_with(&adj[v]);
        let mut nx = x.clone();
        nx.intersect_with(&adj[v]);
        r.push(v);
        bron_kerbosch(adj, r, np, nx, out);
        r.pop();
        p.set(v, false);
        x.insert(v);
    }
}

/// Mutex-group candidates: per parent, the maximal cliques (size >= 2) of
/// the mutex graph restricted to its optional children.
pub fn compute_mutex_groups(mutex: &MutexGraph, h: &Hierarchy, mandatory: &[bool]) -> Vec<FeatureGroup> {
    let mut out = Vec::new();
    for p in 0..h.len() {
        out.extend(cliques_under(mutex, h, p, &optional_children(h, mandatory, p)));
    }
    out
}

fn cliques_under(mutex: &MutexGraph, h: &Hierarchy, p: usize, free: &[usize]) -> Vec<FeatureGroup> {
    let mut gs: Vec<FeatureGroup> = maximal_cliques(mutex, free)
        .into_iter()
        .filter(|c| c.len() >= 2)
        .map(|c| FeatureGroup { parent: p, children: by_name(h, c), kind: GroupKind::Mutex })
        .collect();
    gs.sort_by(|a, b| names(h, &a.children).cmp(&names(h, &b.children)));
    gs
}

fn names<'a>(h: &'a Hierarchy, v: &[usize]) -> Vec<&'a str> {
    v.iter().map(|&f| h.names[f].as_str()).collect()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OrGroupOutcome {
    Complete(Vec<FeatureGroup>),
    TimedOut,
}

/// Minimal sets of at least two optional siblings such that every row
/// selecting the parent selects one of them. Enumerated as minimal hitting
/// sets of the rows' sibling patterns by depth-first branch and bound.
pub fn compute_or_groups(sel: &Selections, h: &Hierarchy, mandatory: &[bool], budget: Duration) -> OrGroupOutcome {
    let deadline = Instant::now() + budget;
    let mut out = Vec::new();
    for p in 0..h.len() {
        let sibs = by_name(h, optional_children(h, mandatory, p));
        if sibs.len() < 2 {
            continue;
        }
        let Some(found) = minimal_covers(sel, p, &sibs, deadline) else {
            return OrGroupOutcome::TimedOut;
        };
        for c in found {
            if c.len() >= 2 {
                out.push(FeatureGroup { parent: p, children: c, kind: GroupKind::Or });
            }
        }
    }
    OrGroupOutcome::Complete(out)
}

type Bits = Vec<u64>;

fn bit(b: &Bits, i: usize) -> bool {
    b[i / 64] >> (i % 64) & 1 == 1
}

/// Minimal hitting sets of the sibling patterns, members in `sibs` order;
/// `None` on deadline.
fn minimal_covers(sel: &Selections, p: usize, sibs: &[usize], deadline: Instant) -> Option<Vec<Vec<usize>>> {
    let k = sibs.len();
    let w = k.div_ceil(64);
    let mut patterns: Vec<Bits> = Vec::new();
    for r in sel.rows() {
        if !r.contains(p) {
            continue;
        }
        let mut b = vec![0u64; w];
        for (i, &s) in sibs.iter().enumerate() {
            if r.contains(s) {
                b[i / 64] |= 1 << (i % 64);
            }
        }
        if b.iter().all(|x| *x == 0) {
            return Some(Vec::new());
        }
        patterns.push(b);
    }
    patterns.sort();
    patterns.dedup();
    let subset = |a: &Bits, b: &Bits| a.iter().zip(b).all(|(x, y)| x & !y == 0);
    let minimal: Vec<Bits> = patterns
        .iter()
        .filter(|a| !patterns.iter().any(|b| b != *a && subset(b, a)))
        .cloned()
        .collect();
    let containing: Vec<Vec<usize>> =
        (0..k).map(|e| (0..minimal.len()).filter(|&q| bit(&minimal[q], e)).collect()).collect();

    let mut search = Search {
        patterns: &minimal,
        containing: &containing,
        hits: vec![0; minimal.len()],
        chosen: Vec::new(),
        forbidden: vec![false; k],
        out: Vec::new(),
        deadline,
        timed_out: false,
    };
    search.run();
    if search.timed_out {
        return None;
    }
    let mut out: Vec<Vec<usize>> = search.out.into_iter().map(|mut s| {
        s.sort_unstable();
        s.into_iter().map(|i| sibs[i]).collect()
    }).collect();
    out.sort();
    Some(out)
}

struct Search<'a> {
    patterns: &'a [Bits],
    containing: &'a [Vec<usize>],
    hits: Vec<u32>,
    chosen: Vec<usize>,
    forbidden: Vec<bool>,
    out: Vec<Vec<usize>>,
    deadline: Instant,
    timed_out: bool,
}

impl Search<'_> {
    fn run(&mut self) {
        if self.timed_out {
            return;
        }
        // nodes are costly enough that reading the clock on each is noise
        if Instant::now() >= self.deadline {
            self.timed_out = true;
            return;
        }
        let Some(q) = (0..self.patterns.len()).find(|&q| self.hits[q] == 0) else {
            self.out.push(self.chosen.clone());
            return;
        };
        let k = self.forbidden.len();
        let branch: Vec<usize> = (0..k).filter(|&e| bit(&self.patterns[q], e) && !self.forbidden[e]).collect();
        let mut newly_forbidden = Vec::new();
        for e in branch {
            self.add(e);
            if self.every_member_private() && !self.some_pattern_blocked() {
                self.run();
            }
            self.remove(e);
            self.forbidden[e] = true;
            newly_forbidden.push(e);
            if self.timed_out {
                break;
            }
        }
        for e in newly_forbidden {
            self.forbidden[e] = false;
        }
    }

    fn add(&mut self, e: usize) {
        for &q in &self.containing[e] {
            self.hits[q] += 1;
        }
        self.chosen.push(e);
    }

    fn remove(&mut self, e: usize) {
        for &q in &self.containing[e] {
            self.hits[q] -= 1;
        }
        self.chosen.pop();
    }

    /// Each chosen element still hits some pattern no other chosen element hits.
    fn every_member_private(&self) -> bool {
        self.chosen.iter().all(|&m| self.containing[m].iter().any(|&q| self.hits[q] == 1))
    }

    /// An unhit pattern whose elements are all forbidden can never be hit.
    fn some_pattern_blocked(&self) -> bool {
        (0..self.patterns.len()).any(|q| {
            self.hits[q] == 0 && (0..self.forbidden.len()).all(|e| !bit(&self.patterns[q], e) || self.forbidden[e])
        })
    }
}

/// Xor groups. With or-groups available, the groups that are both mutex and
/// or; otherwise the mutex groups whose parent implies their disjunction.
pub fn compute_xor_groups(
    mutex_groups: &[FeatureGroup],
    or_groups: Option<&[FeatureGroup]>,
    sel: &Selections,
) -> Vec<FeatureGroup> {
    mutex_groups
        .iter()
        .filter(|g| match or_groups {
            Some(ors) => ors.iter().any(|o| o.parent == g.parent && o.children == g.children),
            None => sel.covers(g.parent, &g.children),
        })
        .map(|g| FeatureGroup { kind: GroupKind::Xor, ..g.clone() })
        .collect()
}

/// Kept groups plus the candidates set aside, for provenance.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct GroupSelection {
    pub groups: Vec<FeatureGroup>,
    pub discarded: Vec<FeatureGroup>,
}

impl GroupSelection {
    pub fn of_kind(&self, kind: GroupKind) -> impl Iterator<Item = &FeatureGroup> {
        self.groups.iter().filter(move |g| g.kind == kind)
    }
}

/// Selects a non-overlapping set of groups. Xor absorbs coextensive mutex
/// and or candidates; overlapping candidates are resolved by the provider.
/// After each round the remaining free siblings are searched again, so that
/// no further group can be formed from them.
pub fn finalize_groups(
    h: &Hierarchy,
    mandatory: &[bool],
    mutex: &MutexGraph,
    or_groups: Option<&[FeatureGroup]>,
    sel: &Selections,
    provider: &mut dyn DecisionProvider,
) -> Result<GroupSelection, GroupError> {
    let mut result = GroupSelection::default();
    for p in h.preorder() {
        let mut free = by_name(h, optional_children(h, mandatory, p));
        loop {
            if free.len() < 2 {
                break;
            }
            let cliques = cliques_under(mutex, h, p, &free);
            let mut cands: Vec<FeatureGroup> = Vec::new();
            for c in &cliques {
                if sel.covers(p, &c.children) {
                    result.discarded.push(c.clone());
                    cands.push(FeatureGroup { kind: GroupKind::Xor, ..c.clone() });
                } else {
                    cands.push(c.clone());
                }
            }
            if let Some(ors) = or_groups {
                let clique_sets: HashSet<Vec<usize>> = cands.iter().map(|c| c.children.clone()).collect();
                for o in ors.iter().filter(|o| o.parent == p && o.children.iter().all(|c| free.contains(c))) {
                    let o = FeatureGroup { children: by_name(h, o.children.clone()), ..o.clone() };
                    if clique_sets.contains(&o.children) {
                        result.discarded.push(o);
                    } else {
                        cands.push(o);
                    }
                }
            }
            if cands.is_empty() {
                break;
            }
            cands.sort_by(|a, b| names(h, &a.children).cmp(&names(h, &b.children)).then(a.kind.cmp(&b.kind)));
            let kept = resolve_overlaps(h, p, &cands, provider)?;
            for g in kept {
                free.retain(|f| !g.children.contains(f));
                result.groups.push(g);
            }
        }
    }
    result.discarded.sort_by_key(|g| (g.parent, g.kind, g.children.clone()));
    result.discarded.dedup();
    Ok(result)
}

fn overlaps(a: &FeatureGroup, b: &FeatureGroup) -> bool {
    a.children.iter().any(|c| b.children.contains(c))
}

fn resolve_overlaps(
    h: &Hierarchy,
    p: usize,
    cands: &[FeatureGroup],
    provider: &mut dyn DecisionProvider,
) -> Result<Vec<FeatureGroup>, GroupError> {
    // components of the overlap graph, joined through shared children
    let n = cands.len();
    let mut link: Vec<usize> = (0..n).collect();
    fn find(link: &mut [usize], mut a: usize) -> usize {
        while link[a] != a {
            link[a] = link[link[a]];
            a = link[a];
        }
        a
    }
    let mut owner: HashMap<usize, usize> = HashMap::new();
    for (i, g) in cands.iter().enumerate() {
        for &c in &g.children {
            let j = *owner.entry(c).or_insert(i);
            let (a, b) = (find(&mut link, i), find(&mut link, j));
            link[a.max(b)] = a.min(b);
        }
    }
    let mut by_root: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..n {
        let r = find(&mut link, i);
        by_root.entry(r).or_default().push(i);
    }
    let clusters = by_root.into_values();
    let mut kept = Vec::new();
    for members in clusters {
        if members.len() == 1 {
            kept.push(cands[members[0]].clone());
            continue;
        }
        let offered: Vec<Vec<String>> = members
            .iter()
            .map(|&m| names(h, &cands[m].children).into_iter().map(str::to_string).collect())
            .collect();
        let pick = provider.choose_group(&h.names[p], &offered)?;
        let legal = !pick.is_empty()
            && pick.iter().all(|&i| i < members.len())
            && pick.iter().enumerate().all(|(x, &i)| {
                pick[..x].iter().all(|&j| j != i && !overlaps(&cands[members[i]], &cands[members[j]]))
            });
        if !legal {
            return Err(GroupError::IllegalGroupChoice { parent: h.names[p].clone(), answer: pick });
        }
        kept.extend(pick.iter().map(|&i| cands[members[i]].clone()));
    }
    Ok(kept)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::DefaultProvider;

    fn star(n_children: usize) -> Hierarchy {
        let mut names = vec!["p".to_string()];
        names.extend((0..n_children).map(|i| format!("c{i}")));
        let mut parent = vec![None];
        parent.extend((0..n_children).map(|_| Some(0)));
        Hierarchy { names, root: 0, parent }
    }

    fn graph(n: usize, edges: &[(usize, usize)]) -> MutexGraph {
        let mut g = MutexGraph::new((0..n).map(|i| i.to_string()).collect());
        for &(a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    #[test]
    fn cliques_of_a_path_and_triangle() {
        let g = graph(5, &[(0, 1), (1, 2), (0, 2), (2, 3)]);
        let mut c = maximal_cliques(&g, &[0, 1, 2, 3, 4]);
        for x in &mut c {
            x.sort();
        }
        c.sort();
        assert_eq!(c, vec![vec![0, 1, 2], vec![2, 3], vec![4]]);
    }

    #[test]
    fn empty_mutex_graph_has_no_groups() {
        let h = star(3);
        let g = graph(4, &[]);
        assert!(compute_mutex_groups(&g, &h, &[false; 4]).is_empty());
    }

    fn selections(rows: &[&[usize]], n: usize) -> Selections {
        Selections {
            rows: rows
                .iter()
                .map(|r| {
                    let mut s = FixedBitSet::with_capacity(n);
                    s.insert(0);
                    for &f in *r {
                        s.insert(f);
                    }
                    s
                })
                .collect(),
        }
    }

    #[test]
    fn or_groups_are_minimal_covers() {
        let h = star(4);
        let sel = selections(&[&[1, 2], &[2, 3], &[1, 4], &[3, 4]], 5);
        let OrGroupOutcome::Complete(gs) = compute_or_groups(&sel, &h, &[false; 5], Duration::from_secs(5)) else {
            panic!("timed out")
        };
        let sets: Vec<Vec<usize>> = gs.into_iter().map(|g| g.children).collect();
        assert_eq!(sets, vec![vec![1, 3], vec![2, 4]]);
    }

    #[test]
    fn a_row_without_children_rules_out_or_groups() {
        let h = star(2);
        let sel = selections(&[&[1], &[2], &[]], 3);
        assert_eq!(compute_or_groups(&sel, &h, &[false; 3], Duration::from_secs(5)), OrGroupOutcome::Complete(vec![]));
    }

    #[test]
    fn overlapping_cliques_keep_one_then_refill() {
        // c0-c1 and c1-c2 mutex; c0, c2 co-occur.
        let h = star(3);
        let g = graph(4, &[(1, 2), (2, 3)]);
        let sel = selections(&[&[1, 3], &[2], &[]], 4);
        let mut p = DefaultProvider::default();
        let out = finalize_groups(&h, &[false; 4], &g, None, &sel, &mut p).unwrap();
        assert_eq!(out.groups.len(), 1);
        assert_eq!(out.groups[0].children, vec![1, 2]);
        assert_eq!(p.transcript().len(), 1);
    }

    #[test]
    fn xor_modes_agree_on_a_partition() {
        let h = star(3);
        let g = graph(4, &[(1, 2), (2, 3), (1, 3)]);
        let sel = selections(&[&[1], &[2], &[3]], 4);
        let m = compute_mutex_groups(&g, &h, &[false; 4]);
        let OrGroupOutcome::Complete(ors) = compute_or_groups(&sel, &h, &[false; 4], Duration::from_secs(5)) else {
            panic!()
        };
        let a = compute_xor_groups(&m, Some(&ors), &sel);
        let b = compute_xor_groups(&m, None, &sel);
        assert_eq!(a, b);
        assert_eq!(a.len(), 1);
    }
}
