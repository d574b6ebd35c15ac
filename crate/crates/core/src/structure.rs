//! Hierarchy selection and attribute placement.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::implications::{BiSet, BinaryImplicationGraph, MutexGraph};
use crate::knowledge::{DecisionError, DecisionProvider};
use crate::variables::VariableModel;
use crate::words;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum StructureError {
    #[error("{answer:?} cannot be the parent of {feature:?}; candidates are {candidates:?}")]
    IllegalParent { feature: String, answer: String, candidates: Vec<String> },
    #[error("{answer:?} is not a legal place for {attribute:?}; candidates are {candidates:?}")]
    IllegalPlacement { attribute: String, answer: String, candidates: Vec<String> },
    #[error("feature {0:?} cannot reach the root")]
    Unreachable(String),
    #[error(transparent)]
    Decision(#[from] DecisionError),
}

/// Features selected in every row.
pub fn core_features(vm: &VariableModel, bi: &BiSet) -> Vec<bool> {
    vm.features
        .iter()
        .map(|f| words::count(&bi.presence_mask(f)) == bi.domain(f.column).len())
        .collect()
}

/// How the root was obtained.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RootChoice {
    pub index: usize,
    pub synthetic: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub note: Option<String>,
}

fn fresh_name(big: &BinaryImplicationGraph, base: &str) -> String {
    if big.index(base).is_none() {
        return base.to_string();
    }
    (1..).map(|k| format!("{base}_{k}")).find(|n| big.index(n).is_none()).expect("unbounded")
}

/// Makes the graphs rooted. An existing always-selected feature named by
/// the domain knowledge (or, failing a name, the first such feature) becomes
/// the root; otherwise a synthetic root implied by every feature is added.
/// `core` gains an entry for a synthetic root.
pub fn ensure_rooted(
    big: &mut BinaryImplicationGraph,
    mutex: &mut MutexGraph,
    core: &mut Vec<bool>,
    root_name: Option<&str>,
) -> RootChoice {
    let mut note = None;
    let synthetic_name = match root_name {
        Some(name) => match big.index(name) {
            Some(i) if core[i] => return RootChoice { index: i, synthetic: false, note: None },
            Some(_) => {
                note = Some(format!("{name:?} is not selected in every configuration; a synthetic root is used"));
                fresh_name(big, "root")
            }
            None => name.to_string(),
        },
        None => {
            let first_core = (0..big.len()).filter(|&i| core[i]).min_by(|&a, &b| big.names[a].cmp(&big.names[b]));
            if let Some(i) = first_core {
                return RootChoice { index: i, synthetic: false, note: None };
            }
            fresh_name(big, "root")
        }
    };
    let r = big.push_node(synthetic_name);
    mutex.push_node(big.names[r].clone());
    for f in 0..r {
        big.add_edge(f, r);
        if core[f] {
            big.add_edge(r, f);
        }
    }
    core.push(true);
    RootChoice { index: r, synthetic: true, note }
}

/// A rooted tree over all features, stored as a parent array.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hierarchy {
    pub names: Vec<String>,
    pub root: usize,
    pub parent: Vec<Option<usize>>,
}

impl Hierarchy {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    /// `(child, parent)` pairs in feature order.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.parent.iter().enumerate().filter_map(|(c, p)| p.map(|p| (c, p)))
    }

    pub fn children(&self, p: usize) -> Vec<usize> {
        (0..self.len()).filter(|&c| self.parent[c] == Some(p)).collect()
    }

    pub fn depth(&self, f: usize) -> usize {
        let mut d = 0;
        let mut cur = f;
        while let Some(p) = self.parent[cur] {
            d += 1;
            cur = p;
        }
        d
    }

    /// Whether `a` is a proper ancestor of `f`.
    pub fn is_ancestor(&self, a: usize, f: usize) -> bool {
        let mut cur = self.parent[f];
        while let Some(p) = cur {
            if p == a {
                return true;
            }
            cur = self.parent[p];
        }
        false
    }

    /// Root first, then children in feature order, depth first.
    pub fn preorder(&self) -> Vec<usize> {
        let mut kids: Vec<Vec<usize>> = vec![Vec::new(); self.len()];
        for (c, p) in self.edges() {
            kids[p].push(c);
        }
        let mut out = Vec::with_capacity(self.len());
        let mut stack = vec![self.root];
        while let Some(f) = stack.pop() {
            out.push(f);
            stack.extend(kids[f].iter().rev());
        }
        out
    }

    /// A rooted spanning tree: one root, acyclic, everything reaches it.
    pub fn is_tree(&self) -> bool {
        if self.parent[self.root].is_some() {
            return false;
        }
        (0..self.len()).all(|f| {
            let mut cur = f;
            for _ in 0..self.len() {
                match self.parent[cur] {
                    Some(p) => cur = p,
                    None => return cur == self.root,
                }
            }
            false
        })
    }
}

fn sorted_by_degree(big: &BinaryImplicationGraph, mut v: Vec<usize>) -> Vec<usize> {
    v.sort_by(|&a, &b| big.out_degree(b).cmp(&big.out_degree(a)).then_with(|| big.names[a].cmp(&big.names[b])));
    v
}

/// Picks a parent for every non-root feature among its implication-graph
/// successors. Features are visited by increasing out-degree; candidates
/// exclude the feature's current descendants, so the result is a tree.
pub fn extract_hierarchy(
    big: &BinaryImplicationGraph,
    root: usize,
    provider: &mut dyn DecisionProvider,
) -> Result<Hierarchy, StructureError> {
    let n = big.len();
    let mut parent: Vec<Option<usize>> = vec![None; n];
    let mut order: Vec<usize> = (0..n).filter(|&f| f != root).collect();
    order.sort_by_key(|&f| (big.out_degree(f), f));
    for f in order {
        let is_desc = |g: usize, parent: &[Option<usize>]| {
            let mut cur = Some(g);
            while let Some(c) = cur {
                if c == f {
                    return true;
                }
                cur = parent[c];
            }
            false
        };
        let cands: Vec<usize> = big.out_neighbors(f).filter(|&g| g != f && !is_desc(g, &parent)).collect();
        let cands = sorted_by_degree(big, cands);
        if cands.is_empty() {
            return Err(StructureError::Unreachable(big.names[f].clone()));
        }
        let names: Vec<String> = cands.iter().map(|&g| big.names[g].clone()).collect();
        let answer = provider.choose_parent(&big.names[f], &names)?;
        match names.iter().position(|n| *n == answer) {
            Some(k) => parent[f] = Some(cands[k]),
            None => {
                return Err(StructureError::IllegalParent { feature: big.names[f].clone(), answer, candidates: names })
            }
        }
    }
    Ok(Hierarchy { names: big.names.clone(), root, parent })
}

/// For each attribute, the features `f` such that every row deselecting `f`
/// gives the attribute its null value. Features never deselected (including
/// the root) qualify vacuously. Indices follow the hierarchy's feature order;
/// `vm` features come first, a synthetic root last.
pub fn legal_attribute_places(bi: &BiSet, vm: &VariableModel, n_features: usize) -> Vec<Vec<usize>> {
    vm.attributes
        .iter()
        .map(|a| {
            let null_code = a.domain.null.as_ref().and_then(|v| bi.code(a.column, v));
            let mut legal = Vec::new();
            for f in 0..n_features {
                let Some(feat) = vm.features.get(f) else {
                    legal.push(f);
                    continue;
                };
                let mut absent = vec![0u64; words::words_for(bi.domain(feat.column).len())];
                let present = bi.presence_mask(feat);
                for c in 0..bi.domain(feat.column).len() {
                    if !words::get(&present, c) {
                        words::set(&mut absent, c);
                    }
                }
                let img = bi.image(feat.column, &absent, a.column);
                let ok = words::ones(&img).all(|c| Some(c as u32) == null_code);
                if ok {
                    legal.push(f);
                }
            }
            legal
        })
        .collect()
}

/// The host feature of every attribute, chosen among its legal places
/// (deepest first, then by name).
pub fn place_attributes(
    vm: &VariableModel,
    legal: &[Vec<usize>],
    h: &Hierarchy,
    provider: &mut dyn DecisionProvider,
) -> Result<Vec<usize>, StructureError> {
    let mut alpha = Vec::with_capacity(legal.len());
    for (a, places) in vm.attributes.iter().zip(legal) {
        let mut cands = places.clone();
        cands.sort_by(|&x, &y| h.depth(y).cmp(&h.depth(x)).then_with(|| h.names[x].cmp(&h.names[y])));
        let names: Vec<String> = cands.iter().map(|&f| h.names[f].clone()).collect();
        let answer = provider.choose_place(&a.name, &names)?;
        match names.iter().position(|n| *n == answer) {
            Some(k) => alpha.push(cands[k]),
            None => {
                return Err(StructureError::IllegalPlacement { attribute: a.name.clone(), answer, candidates: names })
            }
        }
    }
    Ok(alpha)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::implications::{build_graphs, compute_binary_implications};
    use crate::knowledge::{load_dk, DefaultProvider};
    use crate::matrix::{parse_matrix, IngestionHints};
    use crate::variables::extract_variables;

    const WIKI: &str = "Identifier,LicenseType,LicensePrice,LanguageSupport,Language,WYSIWYG
Confluence,Commercial,10,Yes,Java,Yes
PBwiki,NoLimit,20,No,--,Yes
SimpleWiki,NoLimit,10,No,--,Yes
MoinMoin,GPL,0,Yes,Python,Yes
TWiki,GPL,0,Yes,Perl,Yes
PerlWiki,GPL,10,Yes,Perl,Yes
MediaWiki,GPL,0,Yes,PHP,No
PHPWiki,GPL,10,Yes,PHP,Yes
";

    struct Fixture {
        vm: VariableModel,
        bi: BiSet,
        big: BinaryImplicationGraph,
        root: RootChoice,
    }

    fn fixture(dk_text: &str) -> (Fixture, DefaultProvider) {
        let m = parse_matrix(WIKI, &IngestionHints::new()).unwrap();
        let mut p = DefaultProvider::new(load_dk(dk_text).unwrap());
        let vm = extract_variables(&m, &mut p).unwrap();
        let bi = compute_binary_implications(&m);
        let (mut big, mut mutex) = build_graphs(&vm, &bi);
        let mut core = core_features(&vm, &bi);
        let root = ensure_rooted(&mut big, &mut mutex, &mut core, p.knowledge().root.clone().as_deref());
        (Fixture { vm, bi, big, root }, p)
    }

    const ATTRS: &str = r#""columns": {"Language": {"kind": "attribute"}}"#;

    #[test]
    fn synthetic_root_named_by_knowledge() {
        let (fx, _) = fixture(&format!(r#"{{{ATTRS}, "root": "Wiki engine"}}"#));
        assert!(fx.root.synthetic);
        assert_eq!(fx.big.names[fx.root.index], "Wiki engine");
        assert!((0..fx.root.index).all(|f| fx.big.has_edge(f, fx.root.index)));
    }

    #[test]
    fn core_feature_becomes_root_without_knowledge() {
        let (fx, _) = fixture(&format!("{{{ATTRS}}}"));
        assert!(!fx.root.synthetic);
        assert_eq!(fx.big.names[fx.root.index], "LicenseType");
    }

    #[test]
    fn two_components_get_a_synthetic_root() {
        let m = parse_matrix("A,B\nYes,No\nNo,Yes\n", &IngestionHints::new()).unwrap();
        let mut p = DefaultProvider::default();
        let vm = extract_variables(&m, &mut p).unwrap();
        let bi = compute_binary_implications(&m);
        let (mut big, mut mutex) = build_graphs(&vm, &bi);
        assert_eq!(big.components(), 2);
        let mut core = core_features(&vm, &bi);
        let r = ensure_rooted(&mut big, &mut mutex, &mut core, None);
        assert!(r.synthetic);
        assert_eq!(big.names[r.index], "root");
    }

    #[test]
    fn hierarchy_and_placement_from_knowledge() {
        let dk = format!(
            r#"{{{ATTRS}, "root": "Wiki engine", "hierarchy": {{"LanguageSupport": "Wiki engine", "LicenseType": "Wiki engine",
            "WYSIWYG": "Wiki engine", "GPL": "LicenseType", "Commercial": "LicenseType", "NoLimit": "LicenseType"}},
            "placements": {{"Language": "LanguageSupport", "LicensePrice": "LicenseType"}}}}"#
        );
        let (fx, mut p) = fixture(&dk);
        let h = extract_hierarchy(&fx.big, fx.root.index, &mut p).unwrap();
        assert!(h.is_tree());
        assert_eq!(h.edges().count(), 6);
        let ix = |n: &str| h.index(n).unwrap();
        assert_eq!(h.parent[ix("GPL")], Some(ix("LicenseType")));
        assert_eq!(h.parent[ix("WYSIWYG")], Some(ix("Wiki engine")));
        let legal = legal_attribute_places(&fx.bi, &fx.vm, h.len());
        let alpha = place_attributes(&fx.vm, &legal, &h, &mut p).unwrap();
        assert_eq!(h.names[alpha[0]], "LicenseType");
        assert_eq!(h.names[alpha[1]], "LanguageSupport");
    }

    #[test]
    fn gpl_cannot_sit_under_commercial() {
        let dk = format!(r#"{{{ATTRS}, "root": "Wiki engine", "hierarchy": {{"GPL": "Commercial"}}}}"#);
        let (fx, mut p) = fixture(&dk);
        let err = extract_hierarchy(&fx.big, fx.root.index, &mut p).unwrap_err();
        assert!(matches!(err, StructureError::IllegalParent { ref feature, .. } if feature == "GPL"));
    }

    #[test]
    fn language_places() {
        let (fx, mut p) = fixture(&format!(r#"{{{ATTRS}, "root": "Wiki engine"}}"#));
        let h = extract_hierarchy(&fx.big, fx.root.index, &mut p).unwrap();
        let legal = legal_attribute_places(&fx.bi, &fx.vm, h.len());
        let names: Vec<&str> = legal[1].iter().map(|&f| h.names[f].as_str()).collect();
        assert!(names.contains(&"LanguageSupport"));
        assert!(names.contains(&"Wiki engine"));
        assert!(!names.contains(&"WYSIWYG"));
        let alpha = place_attributes(&fx.vm, &legal, &h, &mut p).unwrap();
        assert_eq!(h.names[alpha[1]], "LanguageSupport");
    }
}
