//! Random matrix generator and benchmark harness.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::knowledge::{ColumnKind, ColumnSpec, DefaultProvider, DomainKnowledge};
use crate::matrix::{CellValue, ConfigurationMatrix};
use crate::pipeline::{synthesize_timed, PhaseTimings, SynthesisOptions};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct GeneratorParams {
    /// Columns.
    pub v: usize,
    /// Rows attempted.
    pub c: usize,
    /// Largest attribute domain.
    pub d: usize,
    pub seed: u64,
}

impl GeneratorParams {
    pub fn new(v: usize, c: usize, d: usize, seed: u64) -> Self {
        GeneratorParams { v, c, d, seed }
    }
}

#[derive(Clone, Debug)]
pub struct GeneratedMatrix {
    pub matrix: ConfigurationMatrix,
    /// Column kinds as generated, so no heuristics are involved.
    pub knowledge: DomainKnowledge,
    pub params: GeneratorParams,
    /// Distinct rows actually produced.
    pub effective_rows: usize,
    /// Largest number of distinct values in any column.
    pub effective_d: usize,
}

/// Every column is a feature (cells 0/1) or an attribute (cells drawn from
/// `0..d`) with equal probability; cells are uniform. Duplicate rows are
/// dropped, so fewer than `c` rows may come out.
pub fn generate_matrix(p: GeneratorParams) -> GeneratedMatrix {
    assert!(p.v >= 1 && p.c >= 1 && p.d >= 2, "generator needs v >= 1, c >= 1, d >= 2");
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
    let attribute: Vec<bool> = (0..p.v).map(|_| rng.gen_bool(0.5)).collect();
    let names: Vec<String> =
        attribute.iter().enumerate().map(|(j, &a)| format!("{}{}", if a { "a" } else { "f" }, j)).collect();
    let rows: Vec<Vec<CellValue>> = (0..p.c)
        .map(|_| {
            attribute
                .iter()
                .map(|&a| CellValue::Nat(if a { rng.gen_range(0..p.d as u64) } else { rng.gen_range(0..2) }))
                .collect()
        })
        .collect();
    let labels = (1..=p.c).map(|k| format!("c{k}")).collect();
    let matrix = ConfigurationMatrix::with_labels(names.clone(), rows, labels, true).expect("generated matrix is well formed");
    let mut knowledge = DomainKnowledge::default();
    for (name, &a) in names.iter().zip(&attribute) {
        let kind = if a { ColumnKind::Attribute } else { ColumnKind::BooleanFeature };
        knowledge.columns.insert(name.clone(), ColumnSpec { kind: Some(kind), ..Default::default() });
    }
    GeneratedMatrix { effective_rows: matrix.n_rows(), effective_d: matrix.max_domain_size(), matrix, knowledge, params: p }
}

/// The quantity plotted on the x axis of a sweep.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    C,
    V,
    /// The effective (not requested) largest domain.
    D,
}

/// How time is fitted against the axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Trend {
    Linear,
    /// `sqrt(time)` against the axis.
    Sqrt,
}

#[derive(Clone, Debug)]
pub struct BenchPlan {
    pub points: Vec<GeneratorParams>,
    pub reps: usize,
    pub options: SynthesisOptions,
    pub axis: Axis,
    pub trend: Trend,
}

impl BenchPlan {
    /// One point per value of the swept parameter, the others fixed.
    pub fn sweep(axis: Axis, values: &[usize], v: usize, c: usize, d: usize, seed: u64) -> Vec<GeneratorParams> {
        values
            .iter()
            .map(|&x| match axis {
                Axis::C => GeneratorParams::new(v, x, d, seed),
                Axis::V => GeneratorParams::new(x, c, d, seed),
                Axis::D => GeneratorParams::new(v, c, x, seed),
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchRun {
    pub params: GeneratorParams,
    pub rep: usize,
    pub effective_rows: usize,
    pub effective_d: usize,
    /// With or-groups on: the search gave up, or the whole run overran its budget.
    pub timed_out: bool,
    pub error: Option<String>,
    pub timings: PhaseTimings,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Fit {
    pub slope: f64,
    pub intercept: f64,
    /// Pearson correlation of the fitted series.
    pub r: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchReport {
    pub axis: Axis,
    pub trend: Trend,
    pub runs: Vec<BenchRun>,
    /// Per point: axis value and median fitted quantity.
    pub series: Vec<(f64, f64)>,
    pub fit: Option<Fit>,
}

/// Least-squares line through `points` with its correlation coefficient.
/// `None` with fewer than two points or no spread.
pub fn linear_fit(points: &[(f64, f64)]) -> Option<Fit> {
    let n = points.len() as f64;
    if points.len() < 2 {
        return None;
    }
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let syy: f64 = points.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    Some(Fit { slope, intercept: my - slope * mx, r: (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0) })
}

fn median(mut xs: Vec<f64>) -> f64 {
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        (xs[n / 2 - 1] + xs[n / 2]) / 2.0
    }
}

/// Runs every point `reps` times (rep `k` uses seed `seed + k`), timing
/// synthesis only, then fits the per-point medians.
pub fn run_benchmark(plan: &BenchPlan) -> BenchReport {
    let mut runs = Vec::new();
    for p in &plan.points {
        for rep in 0..plan.reps.max(1) {
            let params = GeneratorParams { seed: p.seed.wrapping_add(rep as u64), ..*p };
            let g = generate_matrix(params);
            let mut provider = DefaultProvider::new(g.knowledge.clone());
            let (timings, timed_out, error) = match synthesize_timed(&g.matrix, &mut provider, &plan.options) {
                Ok(s) => {
                    let over = plan.options.or_groups.is_some_and(|budget| s.timings.total > budget);
                    (s.timings, s.or_groups_timed_out || over, None)
                }
                Err(e) => (PhaseTimings::default(), false, Some(e.to_string())),
            };
            log::debug!("bench {:?} rep {} total {:?}", params, rep, timings.total);
            runs.push(BenchRun {
                params,
                rep,
                effective_rows: g.effective_rows,
                effective_d: g.effective_d,
                timed_out,
                error,
                timings,
            });
        }
    }
    let mut by_point: BTreeMap<usize, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for (i, p) in plan.points.iter().enumerate() {
        let reps = runs.iter().filter(|r| r.params.v == p.v && r.params.c == p.c && r.params.d == p.d);
        let entry = by_point.entry(i).or_default();
        for r in reps.filter(|r| r.error.is_none() && !r.timed_out) {
            let x = match plan.axis {
                Axis::C => r.params.c as f64,
                Axis::V => r.params.v as f64,
                Axis::D => r.effective_d as f64,
            };
            let secs = r.timings.total.as_secs_f64();
            entry.0.push(x);
            entry.1.push(match plan.trend {
                Trend::Linear => secs,
                Trend::Sqrt => secs.sqrt(),
            });
        }
    }
    let series: Vec<(f64, f64)> =
        by_point.into_values().filter(|(x, _)| !x.is_empty()).map(|(x, y)| (median(x), median(y))).collect();
    let fit = linear_fit(&series);
    BenchReport { axis: plan.axis, trend: plan.trend, runs, series, fit }
}

fn ms(d: Duration) -> String {
    format!("{:.3}", d.as_secs_f64() * 1e3)
}

impl BenchReport {
    /// Fraction of runs whose or-group computation timed out, per `v`.
    pub fn timeout_rate_by_v(&self) -> BTreeMap<usize, f64> {
        let mut acc: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for r in &self.runs {
            let e = acc.entry(r.params.v).or_default();
            e.0 += r.timed_out as usize;
            e.1 += 1;
        }
        acc.into_iter().map(|(v, (t, n))| (v, t as f64 / n as f64)).collect()
    }

    /// One line per run: parameters, effective sizes, phase times in ms.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("v,c,d,seed,rep,rows,effective_d,timed_out,error,total_ms");
        for n in PhaseTimings::NAMES {
            let _ = write!(s, ",{n}_ms");
        }
        s.push('\n');
        for r in &self.runs {
            let p = r.params;
            let _ = write!(
                s,
                "{},{},{},{},{},{},{},{},{},{}",
                p.v,
                p.c,
                p.d,
                p.seed,
                r.rep,
                r.effective_rows,
                r.effective_d,
                r.timed_out,
                r.error.as_deref().unwrap_or("").replace(',', ";"),
                ms(r.timings.total)
            );
            for d in r.timings.phases() {
                let _ = write!(s, ",{}", ms(d));
            }
            s.push('\n');
        }
        s
    }

    /// `series,x,y` lines: measured medians, then the fitted line.
    pub fn plot_data(&self) -> String {
        let mut s = String::from("series,x,y\n");
        for &(x, y) in &self.series {
            let _ = writeln!(s, "measured,{x},{y}");
        }
        if let Some(f) = self.fit {
            for &(x, _) in &self.series {
                let _ = writeln!(s, "fit,{x},{}", f.slope * x + f.intercept);
            }
        }
        s
    }

    pub fn summary(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "runs: {}", self.runs.len());
        match self.fit {
            Some(f) => {
                let _ = writeln!(s, "fit ({:?} vs {:?}): slope {:.6e}, intercept {:.6e}, r {:.4}", self.trend, self.axis, f.slope, f.intercept, f.r);
            }
            None => s.push_str("fit: not enough points\n"),
        }
        for (v, rate) in self.timeout_rate_by_v() {
            if rate > 0.0 {
                let _ = writeln!(s, "timeouts at v={v}: {:.0}%", rate * 100.0);
            }
        }
        s
    }
}
