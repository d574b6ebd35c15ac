//! Binary implications between columns, and the implication and mutex
//! graphs derived from them.

use std::collections::{HashMap, HashSet};

use fixedbitset::FixedBitSet;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::{CellValue, ConfigurationMatrix};
use crate::variables::{Feature, VariableModel};
use crate::words;

/// "column `i` equals `u` implies column `j` lies in `s`".
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryImplication {
    pub i: usize,
    pub j: usize,
    pub u: CellValue,
    pub s: Vec<CellValue>,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BiError {
    #[error("column index out of range or i == j")]
    BadColumns,
    #[error("value {0} is not in the column domain")]
    UnknownValue(CellValue),
    #[error("an implication needs a non-empty right-hand side")]
    EmptySet,
}

#[derive(Clone, Debug)]
struct ColumnCodes {
    domain: Vec<CellValue>,
    index: HashMap<CellValue, u32>,
}

impl ColumnCodes {
    fn words(&self) -> usize {
        words::words_for(self.domain.len())
    }
}

/// Per ordered column pair, a bit table of `|D_i|` rows of `|D_j|` bits.
#[derive(Clone, Debug, Default)]
struct PairTable {
    stride: usize,
    bits: Vec<u64>,
    present: Vec<bool>,
}

/// All binary implications of a matrix, indexed by `(i, j, u)`.
#[derive(Clone, Debug)]
pub struct BiSet {
    cols: Vec<ColumnCodes>,
    pairs: Vec<PairTable>,
}

fn encode(matrix: &ConfigurationMatrix) -> (Vec<ColumnCodes>, Vec<Vec<u32>>) {
    let mut cols = Vec::with_capacity(matrix.n_cols());
    let mut codes = Vec::with_capacity(matrix.n_cols());
    for j in 0..matrix.n_cols() {
        let domain = matrix.column_domain(j).expect("index in range");
        let index: HashMap<CellValue, u32> = domain.iter().enumerate().map(|(c, v)| (v.clone(), c as u32)).collect();
        codes.push(matrix.rows().iter().map(|r| index[&r[j]]).collect());
        cols.push(ColumnCodes { domain, index });
    }
    (cols, codes)
}

/// Builds the full set of binary implications: for every ordered pair of
/// distinct columns and every value `u` of the first, the set of values the
/// second takes alongside `u`.
pub fn compute_binary_implications(matrix: &ConfigurationMatrix) -> BiSet {
    let (cols, codes) = encode(matrix);
    let n = cols.len();
    let pairs: Vec<PairTable> = (0..n * n)
        .into_par_iter()
        .map(|p| {
            let (i, j) = (p / n, p % n);
            if i == j {
                return PairTable::default();
            }
            let stride = cols[j].words();
            let mut bits = vec![0u64; cols[i].domain.len() * stride];
            for (&u, &w) in codes[i].iter().zip(&codes[j]) {
                words::set(&mut bits[u as usize * stride..(u as usize + 1) * stride], w as usize);
            }
            PairTable { stride, bits, present: vec![true; cols[i].domain.len()] }
        })
        .collect();
    BiSet { cols, pairs }
}

impl BiSet {
    pub fn n_cols(&self) -> usize {
        self.cols.len()
    }

    pub fn domain(&self, j: usize) -> &[CellValue] {
        &self.cols[j].domain
    }

    pub fn code(&self, j: usize, v: &CellValue) -> Option<u32> {
        self.cols[j].index.get(v).copied()
    }

    fn table(&self, i: usize, j: usize) -> Option<&PairTable> {
        let n = self.n_cols();
        if i >= n || j >= n || i == j {
            None
        } else {
            Some(&self.pairs[i * n + j])
        }
    }

    /// The value set of `(i, j, u)` as a bit set over column `j`'s codes.
    pub fn support(&self, i: usize, j: usize, u: u32) -> Option<&[u64]> {
        let t = self.table(i, j)?;
        let u = u as usize;
        if !*t.present.get(u)? {
            return None;
        }
        Some(&t.bits[u * t.stride..(u + 1) * t.stride])
    }

    pub fn contains(&self, i: usize, j: usize, u: &CellValue) -> bool {
        self.code(i, u).is_some_and(|c| self.support(i, j, c).is_some())
    }

    pub fn get(&self, i: usize, j: usize, u: &CellValue) -> Option<BinaryImplication> {
        let c = self.code(i, u)?;
        let s = self.support(i, j, c)?;
        Some(BinaryImplication { i, j, u: u.clone(), s: words::ones(s).map(|b| self.cols[j].domain[b].clone()).collect() })
    }

    /// Number of `(i, j, u)` entries.
    pub fn len(&self) -> usize {
        self.pairs.iter().map(|t| t.present.iter().filter(|p| **p).count()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Entries in `(i, j, u)` order, `u` following the column's value order.
    pub fn iter(&self) -> impl Iterator<Item = BinaryImplication> + '_ {
        let n = self.n_cols();
        (0..n).flat_map(move |i| {
            (0..n).filter(move |&j| j != i).flat_map(move |j| {
                self.cols[i].domain.iter().filter_map(move |u| self.get(i, j, u))
            })
        })
    }

    pub fn remove(&mut self, i: usize, j: usize, u: &CellValue) -> bool {
        let n = self.n_cols();
        let Some(c) = self.code(i, u) else { return false };
        if self.table(i, j).is_none() {
            return false;
        }
        let t = &mut self.pairs[i * n + j];
        std::mem::replace(&mut t.present[c as usize], false)
    }

    /// Inserts or replaces an entry; values must come from the column domains.
    pub fn insert(&mut self, bi: BinaryImplication) -> Result<(), BiError> {
        let n = self.n_cols();
        if self.table(bi.i, bi.j).is_none() {
            return Err(BiError::BadColumns);
        }
        if bi.s.is_empty() {
            return Err(BiError::EmptySet);
        }
        let u = self.code(bi.i, &bi.u).ok_or_else(|| BiError::UnknownValue(bi.u.clone()))?;
        let mut row = vec![0u64; self.cols[bi.j].words()];
        for v in &bi.s {
            let c = self.code(bi.j, v).ok_or_else(|| BiError::UnknownValue(v.clone()))?;
            words::set(&mut row, c as usize);
        }
        let t = &mut self.pairs[bi.i * n + bi.j];
        t.bits[u as usize * t.stride..(u as usize + 1) * t.stride].copy_from_slice(&row);
        t.present[u as usize] = true;
        Ok(())
    }

    /// Feeds the support bits of every pair into `hasher`, pair by pair.
    pub fn hash_into(&self, hasher: &mut impl sha2::Digest) {
        for t in &self.pairs {
            hasher.update((t.stride as u64).to_le_bytes());
            for w in &t.bits {
                hasher.update(w.to_le_bytes());
            }
        }
    }

    /// Line-oriented dump `i<TAB>j<TAB>u<TAB>{s1,s2,...}`, sorted.
    pub fn dump(&self) -> String {
        let mut lines: Vec<String> = self
            .iter()
            .map(|b| {
                let s: Vec<String> = b.s.iter().map(|v| v.to_string()).collect();
                format!("{}\t{}\t{}\t{{{}}}", b.i, b.j, b.u, s.join(","))
            })
            .collect();
        lines.sort();
        let mut out = lines.join("\n");
        if !out.is_empty() {
            out.push('\n');
        }
        out
    }

    /// Bit set of the codes of column `col` at which `f` is selected.
    pub(crate) fn presence_mask(&self, f: &Feature) -> Vec<u64> {
        let mut m = vec![0u64; self.cols[f.column].words()];
        for v in &f.present {
            if let Some(c) = self.code(f.column, v) {
                words::set(&mut m, c as usize);
            }
        }
        m
    }

    /// Union of the supports over the codes in `mask`: the values column
    /// `j` takes in rows where column `i` lies in `mask`.
    pub(crate) fn image(&self, i: usize, mask: &[u64], j: usize) -> Vec<u64> {
        if i == j {
            return mask.to_vec();
        }
        let mut out = vec![0u64; self.cols[j].words()];
        for u in words::ones(mask) {
            if let Some(s) = self.support(i, j, u as u32) {
                words::union_into(&mut out, s);
            }
        }
        out
    }
}

/// Every entry holds on every row.
pub fn bi_valid(bi: &BiSet, matrix: &ConfigurationMatrix) -> bool {
    bi.iter().all(|b| {
        let s: HashSet<&CellValue> = b.s.iter().collect();
        matrix.rows().iter().all(|r| r.get(b.i) != Some(&b.u) || r.get(b.j).is_some_and(|v| s.contains(v)))
    })
}

/// Every `(i, j, u)` combination occurring in the matrix has an entry.
pub fn bi_comprehensive(bi: &BiSet, matrix: &ConfigurationMatrix) -> bool {
    let n = matrix.n_cols();
    if bi.n_cols() != n {
        return n < 2 && bi.is_empty();
    }
    matrix
        .rows()
        .iter()
        .all(|r| (0..n).all(|i| (0..n).filter(|&j| j != i).all(|j| bi.contains(i, j, &r[i]))))
}

/// Directed graph over features: `f -> g` iff every row selecting `f`
/// selects `g`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BinaryImplicationGraph {
    pub names: Vec<String>,
    out: Vec<FixedBitSet>,
}

impl BinaryImplicationGraph {
    pub fn new(names: Vec<String>) -> Self {
        let n = names.len();
        BinaryImplicationGraph { names, out: vec![FixedBitSet::with_capacity(n); n] }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        self.out[a].insert(b);
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.out[a].contains(b)
    }

    pub fn out_neighbors(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        self.out[a].ones()
    }

    pub fn out_degree(&self, a: usize) -> usize {
        self.out[a].count_ones(..)
    }

    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |a| self.out[a].ones().map(move |b| (a, b)))
    }

    /// Adds a node, growing every adjacency set.
    pub fn push_node(&mut self, name: String) -> usize {
        self.names.push(name);
        let n = self.names.len();
        for s in &mut self.out {
            s.grow(n);
        }
        self.out.push(FixedBitSet::with_capacity(n));
        n - 1
    }

    /// Number of weakly connected components.
    pub fn components(&self) -> usize {
        let n = self.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], x: usize) -> usize {
            let mut r = x;
            while p[r] != r {
                r = p[r];
            }
            let mut c = x;
            while p[c] != r {
                let next = p[c];
                p[c] = r;
                c = next;
            }
            r
        }
        for (a, b) in self.edges().collect::<Vec<_>>() {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra] = rb;
            }
        }
        (0..n).filter(|&x| find(&mut parent, x) == x).count()
    }
}

/// Undirected graph over features: `{f, g}` iff no row selects both.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct MutexGraph {
    pub names: Vec<String>,
    adj: Vec<FixedBitSet>,
}

impl MutexGraph {
    pub fn new(names: Vec<String>) -> Self {
        let n = names.len();
        MutexGraph { names, adj: vec![FixedBitSet::with_capacity(n); n] }
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn add_edge(&mut self, a: usize, b: usize) {
        self.adj[a].insert(b);
        self.adj[b].insert(a);
    }

    pub fn has_edge(&self, a: usize, b: usize) -> bool {
        self.adj[a].contains(b)
    }

    pub fn neighbors(&self, a: usize) -> &FixedBitSet {
        &self.adj[a]
    }

    /// Each undirected edge once, as `(a, b)` with `a < b`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (0..self.len()).flat_map(move |a| self.adj[a].ones().filter(move |&b| b > a).map(move |b| (a, b)))
    }

    pub fn push_node(&mut self, name: String) -> usize {
        self.names.push(name);
        let n = self.names.len();
        for s in &mut self.adj {
            s.grow(n);
        }
        self.adj.push(FixedBitSet::with_capacity(n));
        n - 1
    }
}

/// Derives both graphs over the features of `vm` from the implications.
pub fn build_graphs(vm: &VariableModel, bi: &BiSet) -> (BinaryImplicationGraph, MutexGraph) {
    let names: Vec<String> = vm.features.iter().map(|f| f.name.clone()).collect();
    let mut big = BinaryImplicationGraph::new(names.clone());
    let mut mutex = MutexGraph::new(names);
    let masks: Vec<Vec<u64>> = vm.features.iter().map(|f| bi.presence_mask(f)).collect();
    let mut feature_cols: Vec<usize> = vm.features.iter().map(|f| f.column).collect();
    feature_cols.sort_unstable();
    feature_cols.dedup();

    let rows: Vec<(Vec<usize>, Vec<(usize, usize)>)> = (0..vm.features.len())
        .into_par_iter()
        .map(|a| {
            let fa = &vm.features[a];
            let images: HashMap<usize, Vec<u64>> =
                feature_cols.iter().map(|&j| (j, bi.image(fa.column, &masks[a], j))).collect();
            let mut imp = Vec::new();
            let mut mtx = Vec::new();
            for (b, fb) in vm.features.iter().enumerate() {
                if a == b {
                    continue;
                }
                let img = &images[&fb.column];
                if words::is_subset(img, &masks[b]) {
                    imp.push(b);
                }
                if b > a && words::is_disjoint(img, &masks[b]) {
                    mtx.push((a, b));
                }
            }
            (imp, mtx)
        })
        .collect();
    for (a, (imp, mtx)) in rows.into_iter().enumerate() {
        for b in imp {
            big.add_edge(a, b);
        }
        for (x, y) in mtx {
            mutex.add_edge(x, y);
        }
    }
    (big, mutex)
}

#[cfg(test)]
mod tests {
    use super::*;
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

    fn wiki() -> ConfigurationMatrix {
        parse_matrix(WIKI, &IngestionHints::new()).unwrap()
    }

    #[test]
    fn gpl_price_implication() {
        let m = wiki();
        let bi = compute_binary_implications(&m);
        let b = bi.get(0, 1, &CellValue::text("GPL")).unwrap();
        assert_eq!(b.s, vec![CellValue::Nat(10), CellValue::Nat(0)]);
        assert!(bi_valid(&bi, &m));
        assert!(bi_comprehensive(&bi, &m));
        assert_eq!(bi.len(), 4 * (3 + 3 + 2 + 5 + 2));
    }

    #[test]
    fn single_column_has_no_implications() {
        let m = parse_matrix("a\nx\ny\n", &IngestionHints::new()).unwrap();
        let bi = compute_binary_implications(&m);
        assert!(bi.is_empty());
        assert!(bi_comprehensive(&bi, &m));
    }

    #[test]
    fn removal_and_narrowing_break_the_checks() {
        let m = wiki();
        let mut bi = compute_binary_implications(&m);
        let mut b = bi.get(0, 1, &CellValue::text("GPL")).unwrap();
        b.s.push(CellValue::Nat(20));
        bi.insert(b.clone()).unwrap();
        assert!(bi_valid(&bi, &m));
        b.s = vec![CellValue::Nat(0)];
        bi.insert(b).unwrap();
        assert!(!bi_valid(&bi, &m));
        let mut bi = compute_binary_implications(&m);
        assert!(bi.remove(0, 1, &CellValue::text("GPL")));
        assert!(!bi_comprehensive(&bi, &m));
    }

    #[test]
    fn dump_is_sorted_and_tabbed() {
        let m = parse_matrix("a,b\nx,1\ny,2\n", &IngestionHints::new()).unwrap();
        let bi = compute_binary_implications(&m);
        assert_eq!(bi.dump(), "0\t1\tx\t{1}\n0\t1\ty\t{2}\n1\t0\t1\t{x}\n1\t0\t2\t{y}\n");
    }

    #[test]
    fn wiki_graphs() {
        let m = wiki();
        let dk = load_dk(r#"{"columns": {"Language": {"kind": "attribute"}}}"#).unwrap();
        let vm = extract_variables(&m, &mut DefaultProvider::new(dk)).unwrap();
        let bi = compute_binary_implications(&m);
        let (big, mtx) = build_graphs(&vm, &bi);
        let ix = |n: &str| big.index(n).unwrap();
        assert!(big.has_edge(ix("GPL"), ix("LicenseType")));
        assert!(big.has_edge(ix("Commercial"), ix("LanguageSupport")));
        assert!(!big.has_edge(ix("LicenseType"), ix("GPL")));
        assert!(mtx.has_edge(ix("GPL"), ix("Commercial")));
        assert!(mtx.has_edge(ix("NoLimit"), ix("LanguageSupport")));
        assert!(!mtx.has_edge(ix("WYSIWYG"), ix("LanguageSupport")));
    }

    #[test]
    fn one_row_gives_complete_digraph() {
        let m = parse_matrix("a,b,c\nYes,Yes,Yes\n", &IngestionHints::new()).unwrap();
        let vm = extract_variables(&m, &mut DefaultProvider::default()).unwrap();
        let (big, mtx) = build_graphs(&vm, &compute_binary_implications(&m));
        assert_eq!(big.edges().count(), 6);
        assert_eq!(mtx.edges().count(), 0);
    }
}
