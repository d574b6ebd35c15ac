//! Acceptance suite. Runs sequentially so the timing criteria are not
//! disturbed by other work, prints one line per criterion and exits
//! non-zero if any fails.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::io::Cursor;
use std::path::Path;
use std::time::{Duration, Instant};

use afm_forge::implications::{bi_comprehensive, bi_valid, build_graphs, MutexGraph};
use afm_forge::knowledge::{ColumnKind, ColumnSpec, DefaultProvider, DomainKnowledge};
use afm_forge::labkit::{Axis, BenchPlan, BenchReport, Trend};
use afm_forge::pipeline::{ingest, synthesize_timed};
use afm_forge::semantics::{audit_maximality, check_semantics, AuditReport, MutationClass, DEFAULT_BUDGET};
use afm_forge::structure::{core_features, ensure_rooted, extract_hierarchy, Hierarchy};
use afm_forge::variability::{
    compute_mandatory, compute_mutex_groups, compute_or_groups, compute_xor_groups, FeatureGroup, GroupKind,
    OrGroupOutcome, Selections,
};
use afm_forge::variables::extract_variables;
use afm_forge::{
    compute_binary_implications, eval_config, generate_matrix, load_dk, run_benchmark, synthesize_with_knowledge,
    AttributedFeatureModel, CellValue, Configuration, ConfigurationMatrix, GeneratorParams,
    SynthesisOptions,
};
use afm_forge_cli::{cmd_gen, cmd_synth, GenArgs, SynthArgs};

const WIKI_CSV: &str = include_str!("../../../docs/examples/wiki.csv");
const WIKI_DK: &str = include_str!("../../../docs/examples/wiki.dk.json");

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn wiki() -> (ConfigurationMatrix, DomainKnowledge) {
    let dk = load_dk(WIKI_DK).unwrap();
    (ingest(WIKI_CSV, &dk).unwrap(), dk)
}

fn wiki_config(features: &[&str], price: u64, language: &str) -> Configuration {
    Configuration {
        selected: features.iter().map(|s| s.to_string()).chain(["Wiki engine".into(), "LicenseType".into()]).collect(),
        values: [
            ("LicensePrice".to_string(), CellValue::Nat(price)),
            ("Language".to_string(), CellValue::parse_token(language).unwrap()),
        ]
        .into_iter()
        .collect(),
    }
}

fn criterion_1() -> Outcome {
    let (m, dk) = wiki();
    let t = Instant::now();
    let afm = synthesize_with_knowledge(&m, &dk, &SynthesisOptions::default()).map_err(|e| e.to_string())?;
    let elapsed = t.elapsed();
    let edges: BTreeSet<(&str, &str)> = afm.hierarchy.iter().map(|e| (e.child.as_str(), e.parent.as_str())).collect();
    let expected: BTreeSet<(&str, &str)> = [
        ("LicenseType", "Wiki engine"),
        ("LanguageSupport", "Wiki engine"),
        ("WYSIWYG", "Wiki engine"),
        ("GPL", "LicenseType"),
        ("Commercial", "LicenseType"),
        ("NoLimit", "LicenseType"),
    ]
    .into_iter()
    .collect();
    ensure(edges == expected, || format!("hierarchy {edges:?}"))?;
    ensure(afm.mandatory == ["LicenseType"], || format!("mandatory {:?}", afm.mandatory))?;
    let xor: Vec<BTreeSet<&str>> = afm
        .groups
        .iter()
        .filter(|g| g.kind == GroupKind::Xor)
        .map(|g| g.children.iter().map(String::as_str).collect())
        .collect();
    ensure(afm.groups.len() == 1 && xor == [BTreeSet::from(["GPL", "Commercial", "NoLimit"])], || {
        format!("groups {:?}", afm.groups)
    })?;
    let host = |a: &str| afm.attributes.iter().find(|x| x.name == a).map(|x| x.host.as_str());
    ensure(host("Language") == Some("LanguageSupport") && host("LicensePrice") == Some("LicenseType"), || {
        "attribute placement".into()
    })?;
    let rc: HashSet<String> = afm.constraints.iter().map(|c| c.to_string()).collect();
    for needed in ["GPL => LicensePrice <= 10", "Commercial => LicensePrice = 10", "NoLimit => !LanguageSupport"] {
        ensure(rc.contains(needed), || format!("missing constraint {needed}"))?;
    }
    ensure(elapsed < Duration::from_secs(1), || format!("took {elapsed:?}"))?;
    Ok(format!("golden model reproduced in {elapsed:.1?}"))
}

/// Parameters for the n-th small matrix: every size in range is visited.
fn small(n: u64, v_max: usize, c_max: usize, d_max: usize) -> GeneratorParams {
    let v = 1 + (n as usize % v_max);
    let c = 1 + (n as usize * 7 % c_max);
    let d = 2 + (n as usize / v_max % (d_max - 1));
    GeneratorParams::new(v, c, d, 0x5eed_0000 + n)
}

fn exact(afm: &AttributedFeatureModel, m: &ConfigurationMatrix) -> Result<(), String> {
    let r = check_semantics(afm, m, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
    ensure(r.sound && r.complete, || r.render())
}

fn criterion_2() -> Outcome {
    let t = Instant::now();
    let (m, dk) = wiki();
    let afm = synthesize_with_knowledge(&m, &dk, &SynthesisOptions::default()).map_err(|e| e.to_string())?;
    exact(&afm, &m).map_err(|e| format!("wiki: {e}"))?;
    let n = 120;
    for k in 0..n {
        let p = small(k, 8, 16, 4);
        let g = generate_matrix(p);
        let afm = synthesize_with_knowledge(&g.matrix, &g.knowledge, &SynthesisOptions::default())
            .map_err(|e| format!("{p:?}: {e}"))?;
        exact(&afm, &g.matrix).map_err(|e| format!("{p:?}: {e}"))?;
        // each row must be accepted on its own as well
        for r in 0..g.matrix.n_rows() {
            let cfg = afm_forge::semantics::row_configuration(&afm, &g.matrix, r).map_err(|e| e.to_string())?;
            ensure(eval_config(&afm, &cfg) == Ok(true), || format!("{p:?}: row {r} rejected"))?;
        }
    }
    let elapsed = t.elapsed();
    ensure(elapsed < Duration::from_secs(60), || format!("took {elapsed:?}"))?;
    Ok(format!("wiki and {n} generated matrices sound and complete in {elapsed:.1?}"))
}

fn criterion_3() -> Outcome {
    let (m, dk) = wiki();
    let afm = synthesize_with_knowledge(&m, &dk, &SynthesisOptions { phi: false, ..Default::default() })
        .map_err(|e| e.to_string())?;
    for extra in [
        wiki_config(&["GPL", "LanguageSupport", "WYSIWYG"], 0, "PHP"),
        wiki_config(&["GPL", "LanguageSupport"], 10, "PHP"),
    ] {
        ensure(eval_config(&afm, &extra) == Ok(true), || format!("{extra} not admitted"))?;
    }
    let r = check_semantics(&afm, &m, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
    ensure(r.complete, || r.render())?;
    Ok(format!("diagram alone admits both extra rows, complete, {} extra configurations", r.extra.len()))
}

fn criterion_4() -> Outcome {
    let t = Instant::now();
    let n = 1000;
    for k in 0..n {
        let p = small(k, 10, 50, 6);
        let g = generate_matrix(p);
        let m = &g.matrix;
        let bi = compute_binary_implications(m);
        ensure(bi_valid(&bi, m) && bi_comprehensive(&bi, m), || format!("{p:?}: not valid and comprehensive"))?;
        let cols = m.n_cols();
        let distinct: Vec<usize> =
            (0..cols).map(|i| m.rows().iter().map(|r| &r[i]).collect::<HashSet<_>>().len()).collect();
        let expected: usize = (0..cols).map(|i| distinct[i] * (cols - 1)).sum();
        ensure(bi.len() == expected, || format!("{p:?}: {} entries, expected {expected}", bi.len()))?;
        let mut seen: BTreeMap<(usize, usize, CellValue), BTreeSet<CellValue>> = BTreeMap::new();
        for r in m.rows() {
            for i in 0..cols {
                for j in (0..cols).filter(|&j| j != i) {
                    seen.entry((i, j, r[i].clone())).or_default().insert(r[j].clone());
                }
            }
        }
        for b in bi.iter() {
            let s: BTreeSet<CellValue> = b.s.iter().cloned().collect();
            ensure(seen.get(&(b.i, b.j, b.u.clone())) == Some(&s), || format!("{p:?}: entry {b:?}"))?;
        }
    }
    let elapsed = t.elapsed();
    ensure(elapsed < Duration::from_secs(120), || format!("took {elapsed:?}"))?;
    Ok(format!("{n} matrices, implications valid, comprehensive and counted, {elapsed:.1?}"))
}

struct Staged {
    matrix: ConfigurationMatrix,
    h: Hierarchy,
    mandatory: Vec<bool>,
    mutex: MutexGraph,
    sel: Selections,
}

fn stage(matrix: ConfigurationMatrix, dk: DomainKnowledge) -> Staged {
    let mut p = DefaultProvider::new(dk);
    let vm = extract_variables(&matrix, &mut p).unwrap();
    let bi = compute_binary_implications(&matrix);
    let (mut big, mut mutex) = build_graphs(&vm, &bi);
    let mut core = core_features(&vm, &bi);
    let root = ensure_rooted(&mut big, &mut mutex, &mut core, None);
    let h = extract_hierarchy(&big, root.index, &mut p).unwrap();
    let mandatory = compute_mandatory(&h, &big);
    let sel = Selections::new(&matrix, &vm, h.len());
    Staged { matrix, h, mandatory, mutex, sel }
}

fn selected(s: &Staged, row: usize, f: usize) -> bool {
    match s.matrix.column_index(&s.h.names[f]) {
        Some(j) => *s.matrix.cell(row, j) == CellValue::Nat(1),
        None => true,
    }
}

type NameSets = BTreeSet<BTreeSet<String>>;

fn sibling_subsets(s: &Staged, p: usize) -> Vec<Vec<usize>> {
    let kids: Vec<usize> = s.h.children(p).into_iter().filter(|&c| !s.mandatory[c]).collect();
    (0u32..1 << kids.len())
        .map(|m| (0..kids.len()).filter(|i| m >> i & 1 == 1).map(|i| kids[i]).collect::<Vec<_>>())
        .filter(|x| x.len() >= 2)
        .collect()
}

fn names(s: &Staged, fs: &[usize]) -> BTreeSet<String> {
    fs.iter().map(|&f| s.h.names[f].clone()).collect()
}

fn brute_mutex(s: &Staged, p: usize) -> NameSets {
    let rows = s.matrix.n_rows();
    let excl = |x: &[usize]| (0..rows).all(|r| x.iter().filter(|&&f| selected(s, r, f)).count() <= 1);
    let all: Vec<Vec<usize>> = sibling_subsets(s, p).into_iter().filter(|x| excl(x)).collect();
    all.iter()
        .filter(|x| !all.iter().any(|y| y.len() > x.len() && x.iter().all(|f| y.contains(f))))
        .map(|x| names(s, x))
        .collect()
}

fn brute_or(s: &Staged, p: usize) -> NameSets {
    let rows = s.matrix.n_rows();
    let covers = |x: &[usize]| (0..rows).filter(|&r| selected(s, r, p)).all(|r| x.iter().any(|&f| selected(s, r, f)));
    sibling_subsets(s, p)
        .into_iter()
        .filter(|x| covers(x))
        .filter(|x| {
            (0..x.len()).all(|i| {
                let mut y = x.clone();
                y.remove(i);
                !covers(&y)
            })
        })
        .map(|x| names(s, &x))
        .collect()
}

fn under(s: &Staged, gs: &[FeatureGroup], p: usize) -> NameSets {
    gs.iter().filter(|g| g.parent == p).map(|g| names(s, &g.children)).collect()
}

fn criterion_5() -> Outcome {
    let n = 240;
    let (mut mutex_total, mut or_total, mut xor_total) = (0, 0, 0);
    for k in 0..n {
        let p = small(k, 10, 24, 2);
        let g = generate_matrix(p);
        // every column read as a feature
        let mut dk = DomainKnowledge::default();
        for v in g.matrix.variables() {
            dk.columns.insert(v.clone(), ColumnSpec { kind: Some(ColumnKind::BooleanFeature), ..Default::default() });
        }
        let s = stage(g.matrix, dk);
        let mutex = compute_mutex_groups(&s.mutex, &s.h, &s.mandatory);
        let OrGroupOutcome::Complete(ors) = compute_or_groups(&s.sel, &s.h, &s.mandatory, Duration::from_secs(10))
        else {
            return Err(format!("{p:?}: or-groups timed out"));
        };
        for f in 0..s.h.len() {
            ensure(under(&s, &mutex, f) == brute_mutex(&s, f), || format!("{p:?}: mutex groups under {}", s.h.names[f]))?;
            ensure(under(&s, &ors, f) == brute_or(&s, f), || format!("{p:?}: or-groups under {}", s.h.names[f]))?;
        }
        let key = |gs: Vec<FeatureGroup>| -> BTreeSet<(usize, BTreeSet<String>)> {
            gs.into_iter().map(|g| (g.parent, names(&s, &g.children))).collect()
        };
        let a = key(compute_xor_groups(&mutex, Some(&ors), &s.sel));
        let b = key(compute_xor_groups(&mutex, None, &s.sel));
        ensure(a == b, || format!("{p:?}: xor modes disagree"))?;
        mutex_total += mutex.len();
        or_total += ors.len();
        xor_total += a.len();
    }
    ensure(mutex_total > 0 && or_total > 0 && xor_total > 0, || "oracles never exercised".into())?;
    Ok(format!("{n} matrices; {mutex_total} mutex, {or_total} or, {xor_total} xor groups match brute force"))
}

fn criterion_6() -> Outcome {
    let mut tried: BTreeMap<MutationClass, usize> = BTreeMap::new();
    let mut add = |r: &AuditReport| {
        for (c, k) in &r.tried {
            *tried.entry(*c).or_default() += k;
        }
    };
    let opts = SynthesisOptions { or_groups: Some(Duration::from_secs(10)), ..Default::default() };
    let (m, dk) = wiki();
    let afm = synthesize_with_knowledge(&m, &dk, &opts).map_err(|e| e.to_string())?;
    let r = audit_maximality(&afm, &m, DEFAULT_BUDGET).map_err(|e| e.to_string())?;
    ensure(r.maximal(), || format!("wiki: {}", r.render()))?;
    add(&r);
    let n = 120;
    for k in 0..n {
        let p = small(k, 6, 12, 3);
        let g = generate_matrix(p);
        let afm = synthesize_with_knowledge(&g.matrix, &g.knowledge, &opts).map_err(|e| format!("{p:?}: {e}"))?;
        ensure(afm.provenance.options.or_groups == "complete", || format!("{p:?}: or-groups not computed"))?;
        let r = audit_maximality(&afm, &g.matrix, DEFAULT_BUDGET).map_err(|e| format!("{p:?}: {e}"))?;
        ensure(r.maximal(), || format!("{p:?}: {}", r.render()))?;
        add(&r);
    }
    for c in MutationClass::ALL {
        ensure(tried.get(&c).copied().unwrap_or(0) > 0, || format!("class {} never exercised", c.as_str()))?;
    }
    let summary: Vec<String> = tried.iter().map(|(c, k)| format!("{} {k}", c.as_str())).collect();
    Ok(format!("wiki and {n} matrices maximal; mutations tried: {}", summary.join(", ")))
}

fn sweep(axis: Axis, trend: Trend, values: &[usize], (v, c, d): (usize, usize, usize), reps: usize) -> (BenchReport, Duration) {
    let t = Instant::now();
    let plan = BenchPlan {
        points: BenchPlan::sweep(axis, values, v, c, d, 11),
        reps,
        options: SynthesisOptions::default(),
        axis,
        trend,
    };
    (run_benchmark(&plan), t.elapsed())
}

fn criterion_7() -> Outcome {
    let limit = Duration::from_secs(600);
    let mut parts = Vec::new();
    // the swept parameter's slot in (v, c, d) is ignored
    for (label, axis, trend, values, fixed, reps, min_r) in [
        ("a: time~c", Axis::C, Trend::Linear, vec![500, 1000, 2000, 4000, 8000], (50, 0, 10), 9, 0.95),
        ("b: sqrt(time)~v", Axis::V, Trend::Sqrt, vec![50, 100, 200, 400], (0, 1000, 10), 3, 0.9),
        ("c: sqrt(time)~d", Axis::D, Trend::Sqrt, vec![5, 10, 50, 100, 500], (10, 5000, 0), 9, 0.85),
    ] {
        let (report, took) = sweep(axis, trend, &values, fixed, reps);
        let errors: Vec<&String> = report.runs.iter().filter_map(|r| r.error.as_ref()).collect();
        ensure(errors.is_empty(), || format!("{label}: {errors:?}"))?;
        let fit = report.fit.ok_or_else(|| format!("{label}: no fit"))?;
        ensure(fit.r >= min_r, || format!("{label}: r = {:.4} < {min_r}", fit.r))?;
        ensure(took < limit, || format!("{label}: took {took:?}"))?;
        parts.push(format!("{label} r={:.4} in {took:.0?}", fit.r));
    }
    Ok(parts.join("; "))
}

fn criterion_8() -> Outcome {
    let budget = Duration::from_secs(10);
    let reps = 10;
    let rate = |v: usize| -> Result<f64, String> {
        let plan = BenchPlan {
            points: vec![GeneratorParams::new(v, 1000, 10, 23)],
            reps,
            options: SynthesisOptions { or_groups: Some(budget), ..Default::default() },
            axis: Axis::V,
            trend: Trend::Sqrt,
        };
        let report = run_benchmark(&plan);
        if let Some(e) = report.runs.iter().find_map(|r| r.error.clone()) {
            return Err(format!("v={v}: {e}"));
        }
        Ok(report.timeout_rate_by_v().get(&v).copied().unwrap_or(0.0))
    };
    let low = rate(5)?;
    ensure(low == 0.0, || format!("{:.0}% timeouts at v=5", low * 100.0))?;
    let mut seen = Vec::new();
    for v in [40, 60] {
        let r = rate(v)?;
        seen.push(format!("v={v}: {:.0}%", r * 100.0));
        if r >= 0.8 {
            return Ok(format!("0% timeouts at v=5, {}", seen.join(", ")));
        }
    }
    Err(format!("no v <= 60 reached 80% timeouts ({})", seen.join(", ")))
}

fn criterion_9() -> Outcome {
    let mut shares = Vec::new();
    for rep in 0..3 {
        let g = generate_matrix(GeneratorParams::new(100, 1000, 10, 31 + rep));
        let mut provider = DefaultProvider::new(g.knowledge.clone());
        let s = synthesize_timed(&g.matrix, &mut provider, &SynthesisOptions::default()).map_err(|e| e.to_string())?;
        let part = s.timings.binary_implications + s.timings.complex_constraints;
        shares.push(part.as_secs_f64() / s.timings.total.as_secs_f64());
    }
    shares.sort_by(f64::total_cmp);
    let median = shares[1];
    ensure(median >= 0.5, || format!("implications and complex constraints take {:.0}%", median * 100.0))?;
    Ok(format!("implications and complex constraints take {:.0}% of synthesis (median of 3)", median * 100.0))
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let n = 24;
    for seed in 0..n {
        let csv = dir.path().join(format!("m{seed}.csv"));
        let dk = dir.path().join(format!("m{seed}.dk.json"));
        let v = 3 + seed as usize % 12;
        let g = cmd_gen(&GenArgs { v, c: 60, d: 5, seed, output: Some(csv.clone()), dk_out: Some(dk.clone()) });
        ensure(g.code == 0, || format!("gen: {:?}", g.messages))?;
        let run = |name: &str| -> Result<(Vec<u8>, Vec<u8>), String> {
            let out = dir.path().join(format!("{name}.afm.json"));
            let args = SynthArgs {
                matrix: csv.clone(),
                dk: Some(dk.clone()),
                output: Some(out.clone()),
                no_phi: false,
                or_groups: (seed % 2 == 0).then_some(2000),
                no_textual_equality: false,
                dedup: false,
                interactive: false,
                no_interactive: true,
            };
            let o = cmd_synth(&args, &mut Cursor::new(Vec::new()), &mut Vec::new());
            ensure(o.code == 0, || format!("seed {seed}: {:?}", o.messages))?;
            let read = |p: &Path| std::fs::read(p).map_err(|e| e.to_string());
            Ok((read(&out)?, read(&out.with_extension("txt"))?))
        };
        let a = run(&format!("a{seed}"))?;
        let b = run(&format!("b{seed}"))?;
        ensure(a == b, || format!("seed {seed}: outputs differ"))?;
    }
    Ok(format!("{n} seeds, model and text files byte-identical across runs"))
}

fn main() {
    let criteria: [(u32, fn() -> Outcome); 10] = [
        (1, criterion_1),
        (2, criterion_2),
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
    ];
    let only: Option<u32> = std::env::var("ACCEPTANCE_ONLY").ok().and_then(|s| s.parse().ok());
    let mut failed = 0;
    for (n, f) in criteria {
        if only.is_some_and(|o| o != n) {
            continue;
        }
        match std::panic::catch_unwind(f) {
            Ok(Ok(msg)) => println!("criterion {n}: PASS {msg}"),
            Ok(Err(msg)) => {
                failed += 1;
                println!("criterion {n}: FAIL {msg}");
            }
            Err(_) => {
                failed += 1;
                println!("criterion {n}: FAIL panicked");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
