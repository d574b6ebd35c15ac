//! End-to-end synthesis: variables, implications, graphs, hierarchy,
//! placement, mandatory edges, groups, constraints and Φ, in that order.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constraints::{
    complete_constraints, compute_complex, compute_excludes, compute_phi, compute_requires, CompletionInput,
};
use crate::implications::{build_graphs, compute_binary_implications};
use crate::knowledge::{DecisionError, DecisionProvider, DefaultProvider, DomainKnowledge, Question};
use crate::matrix::ConfigurationMatrix;
use crate::model::{
    AttributeDecl, AttributedFeatureModel, FeatureBinding, FeatureDecl, GroupDecl, HierarchyEdge, OptionsRecord,
    Provenance, StageRecord, LABEL_EXACT, LABEL_OVER_APPROXIMATE,
};
use crate::structure::{
    core_features, ensure_rooted, extract_hierarchy, legal_attribute_places, place_attributes, Hierarchy,
    StructureError,
};
use crate::variability::{
    compute_mandatory, compute_or_groups, finalize_groups, FeatureGroup, GroupError, OrGroupOutcome, Selections,
};
use crate::variables::{extract_variables, ExtractError, ValueOrder};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthesisOptions {
    /// Compute or-groups within this budget; `None` leaves them out.
    pub or_groups: Option<Duration>,
    pub phi: bool,
    /// Allow `attribute = "text"` constraints over textual attributes.
    pub textual_equality: bool,
}

impl Default for SynthesisOptions {
    fn default() -> Self {
        SynthesisOptions { or_groups: None, phi: true, textual_equality: true }
    }
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("variables: {0}")]
    Variables(#[from] ExtractError),
    #[error("hierarchy: {0}")]
    Hierarchy(StructureError),
    #[error("placement: {0}")]
    Placement(StructureError),
    #[error("groups: {0}")]
    Groups(#[from] GroupError),
    #[error("constraints: {0}")]
    Bounds(DecisionError),
}

impl SynthesisError {
    pub fn stage(&self) -> &'static str {
        match self {
            SynthesisError::Variables(_) => "variables",
            SynthesisError::Hierarchy(_) => "hierarchy",
            SynthesisError::Placement(_) => "placement",
            SynthesisError::Groups(_) => "groups",
            SynthesisError::Bounds(_) => "constraints",
        }
    }

    fn decision(&self) -> Option<&DecisionError> {
        match self {
            SynthesisError::Variables(ExtractError::Decision(d))
            | SynthesisError::Hierarchy(StructureError::Decision(d))
            | SynthesisError::Placement(StructureError::Decision(d))
            | SynthesisError::Groups(GroupError::Decision(d))
            | SynthesisError::Bounds(d) => Some(d),
            _ => None,
        }
    }

    /// The question synthesis stopped at, when the provider had no answer.
    pub fn pending(&self) -> Option<&Question> {
        match self.decision() {
            Some(DecisionError::Pending(q)) => Some(q),
            _ => None,
        }
    }

    /// Short machine-readable error code.
    pub fn code(&self) -> &'static str {
        match self.decision() {
            Some(DecisionError::Pending(_)) => "pending",
            Some(DecisionError::NotACandidate { .. }) => "illegal-answer",
            Some(DecisionError::BoundOutOfRange { .. }) => "illegal-answer",
            Some(DecisionError::Diverged { .. }) => "diverged",
            Some(DecisionError::Io(_)) => "io",
            None => match self {
                SynthesisError::Variables(_) => "invalid-variables",
                SynthesisError::Hierarchy(_) | SynthesisError::Placement(_) => "illegal-answer",
                SynthesisError::Groups(_) => "illegal-answer",
                SynthesisError::Bounds(_) => "illegal-answer",
            },
        }
    }
}

/// Wall-clock time per stage.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub variables: Duration,
    pub binary_implications: Duration,
    pub graphs: Duration,
    pub hierarchy: Duration,
    pub placement: Duration,
    pub mandatory: Duration,
    pub groups: Duration,
    pub requires_excludes: Duration,
    pub complex_constraints: Duration,
    pub phi: Duration,
    pub total: Duration,
}

impl PhaseTimings {
    pub const NAMES: [&'static str; 10] = [
        "variables",
        "binary_implications",
        "graphs",
        "hierarchy",
        "placement",
        "mandatory",
        "groups",
        "requires_excludes",
        "complex_constraints",
        "phi",
    ];

    pub fn phases(&self) -> [Duration; 10] {
        [
            self.variables,
            self.binary_implications,
            self.graphs,
            self.hierarchy,
            self.placement,
            self.mandatory,
            self.groups,
            self.requires_excludes,
            self.complex_constraints,
            self.phi,
        ]
    }
}

#[derive(Clone, Debug)]
pub struct Synthesis {
    pub model: AttributedFeatureModel,
    pub timings: PhaseTimings,
    pub or_groups_timed_out: bool,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

fn digest(text: &str) -> String {
    hex(&Sha256::digest(text.as_bytes()))
}

fn edges_text(names: &[String], edges: impl Iterator<Item = (usize, usize)>) -> String {
    let mut s = String::new();
    for (a, b) in edges {
        s.push_str(&names[a]);
        s.push('\t');
        s.push_str(&names[b]);
        s.push('\n');
    }
    s
}

fn timed<T>(slot: &mut Duration, f: impl FnOnce() -> T) -> T {
    let t = Instant::now();
    let out = f();
    *slot += t.elapsed();
    out
}

/// Runs every stage and assembles the model, asking `provider` at each
/// decision point.
pub fn synthesize(
    matrix: &ConfigurationMatrix,
    provider: &mut dyn DecisionProvider,
    options: &SynthesisOptions,
) -> Result<AttributedFeatureModel, SynthesisError> {
    synthesize_timed(matrix, provider, options).map(|s| s.model)
}

/// Synthesis with the domain knowledge answering, and the first candidate
/// wherever it is silent.
pub fn synthesize_with_knowledge(
    matrix: &ConfigurationMatrix,
    dk: &DomainKnowledge,
    options: &SynthesisOptions,
) -> Result<AttributedFeatureModel, SynthesisError> {
    synthesize(matrix, &mut DefaultProvider::new(dk.clone()), options)
}

pub fn synthesize_timed(
    matrix: &ConfigurationMatrix,
    provider: &mut dyn DecisionProvider,
    options: &SynthesisOptions,
) -> Result<Synthesis, SynthesisError> {
    let start = Instant::now();
    let mut t = PhaseTimings::default();
    let mut stages = Vec::new();
    let mut notes = Vec::new();
    let matrix_hash = digest(&matrix.to_csv());

    let vm = timed(&mut t.variables, || extract_variables(matrix, provider))?;
    stages.push(StageRecord {
        stage: "variables".into(),
        input: matrix_hash.clone(),
        summary: format!("{} features, {} attributes", vm.features.len(), vm.attributes.len()),
    });
    for d in &vm.dead {
        notes.push(format!("column {d:?} never selected; no feature created"));
    }
    if matrix.duplicates_dropped() > 0 {
        notes.push(format!("{} duplicate rows dropped", matrix.duplicates_dropped()));
    }

    let bi = timed(&mut t.binary_implications, || compute_binary_implications(matrix));
    stages.push(StageRecord {
        stage: "binary-implications".into(),
        input: matrix_hash.clone(),
        summary: format!("{} implications", bi.len()),
    });

    let (mut big, mut mutex, mut core) = timed(&mut t.graphs, || {
        let (big, mutex) = build_graphs(&vm, &bi);
        let core = core_features(&vm, &bi);
        (big, mutex, core)
    });
    let mut hasher = Sha256::new();
    bi.hash_into(&mut hasher);
    stages.push(StageRecord {
        stage: "graphs".into(),
        input: hex(&hasher.finalize()),
        summary: format!("{} implication edges, {} mutex edges", big.edges().count(), mutex.edges().count()),
    });

    let h = timed(&mut t.hierarchy, || {
        let root = ensure_rooted(&mut big, &mut mutex, &mut core, provider.knowledge().root.as_deref());
        if let Some(n) = &root.note {
            notes.push(n.clone());
        }
        extract_hierarchy(&big, root.index, provider)
    })
    .map_err(SynthesisError::Hierarchy)?;
    stages.push(StageRecord {
        stage: "hierarchy".into(),
        input: digest(&edges_text(&big.names, big.edges())),
        summary: format!("root {:?}, {} edges", h.names[h.root], h.edges().count()),
    });

    let n = h.len();
    let legal = timed(&mut t.placement, || legal_attribute_places(&bi, &vm, n));
    let alpha = timed(&mut t.placement, || place_attributes(&vm, &legal, &h, provider)).map_err(SynthesisError::Placement)?;
    let legal_text: String = legal
        .iter()
        .zip(&vm.attributes)
        .map(|(l, a)| format!("{}\t{}\n", a.name, l.iter().map(|&f| h.names[f].as_str()).collect::<Vec<_>>().join(",")))
        .collect();
    stages.push(StageRecord {
        stage: "placement".into(),
        input: digest(&legal_text),
        summary: format!("{} attributes placed", alpha.len()),
    });

    let mandatory = timed(&mut t.mandatory, || compute_mandatory(&h, &big));
    let h_text = edges_text(&h.names, h.edges());
    stages.push(StageRecord {
        stage: "mandatory".into(),
        input: digest(&h_text),
        summary: format!("{} mandatory edges", mandatory.iter().filter(|m| **m).count()),
    });

    let sel = Selections::new(matrix, &vm, n);
    let mut or_state = "off";
    let or_groups: Option<Vec<FeatureGroup>> = match options.or_groups {
        None => None,
        Some(budget) => match timed(&mut t.groups, || compute_or_groups(&sel, &h, &mandatory, budget)) {
            OrGroupOutcome::Complete(g) => {
                log::debug!("{} or-group candidates after {:?}", g.len(), t.groups);
                or_state = "complete";
                Some(g)
            }
            OrGroupOutcome::TimedOut => {
                or_state = "timed-out";
                notes.push("or-group computation timed out; or-groups omitted".into());
                None
            }
        },
    };
    let groups = timed(&mut t.groups, || finalize_groups(&h, &mandatory, &mutex, or_groups.as_deref(), &sel, provider))?;
    log::debug!("groups finalized after {:?}", t.groups);
    let mandatory_names: Vec<&str> = (0..n).filter(|&f| mandatory[f]).map(|f| h.names[f].as_str()).collect();
    stages.push(StageRecord {
        stage: "groups".into(),
        input: digest(&format!(
            "{h_text}mandatory\t{}\n{}",
            mandatory_names.join(","),
            edges_text(&mutex.names, mutex.edges())
        )),
        summary: format!("{} groups kept, {} discarded", groups.groups.len(), groups.discarded.len()),
    });

    let mut bounds: Vec<Vec<u64>> = Vec::with_capacity(vm.attributes.len());
    for a in &vm.attributes {
        if a.domain.order == ValueOrder::Natural {
            let mut dom = a.domain.naturals().unwrap_or_default();
            dom.sort_unstable();
            bounds.push(provider.confirm_bounds(&a.name, &dom).map_err(SynthesisError::Bounds)?);
        } else {
            bounds.push(Vec::new());
        }
    }

    let (requires, excludes) = timed(&mut t.requires_excludes, || {
        (compute_requires(&big, &h, &mandatory, &core), compute_excludes(&mutex, &h, &groups.groups))
    });
    let (complex, completion) = timed(&mut t.complex_constraints, || {
        let complex = compute_complex(&bi, &vm, &bounds, options.textual_equality);
        let emitted: Vec<_> = requires.iter().chain(&excludes).chain(&complex).cloned().collect();
        let input = CompletionInput {
            bi: &bi,
            vm: &vm,
            h: &h,
            mandatory: &mandatory,
            core: &core,
            alpha: &alpha,
            groups: &groups.groups,
            bounds: &bounds,
            textual_equality: options.textual_equality,
        };
        let completion = complete_constraints(&input, &emitted);
        (complex, completion)
    });
    let bounds_text: String =
        vm.attributes.iter().zip(&bounds).map(|(a, b)| format!("{}\t{:?}\n", a.name, b)).collect();
    stages.push(StageRecord {
        stage: "constraints".into(),
        input: digest(&format!("{h_text}{bounds_text}")),
        summary: format!(
            "{} requires, {} excludes, {} complex, {} completing",
            requires.len(),
            excludes.len(),
            complex.len(),
            completion.len()
        ),
    });

    let phi = if options.phi { Some(timed(&mut t.phi, || compute_phi(matrix, &vm))) } else { None };
    stages.push(StageRecord {
        stage: "phi".into(),
        input: matrix_hash,
        summary: match &phi {
            Some(p) => format!("{} disjuncts", p.disjuncts.len()),
            None => "suppressed".into(),
        },
    });

    let model = assemble(AssembleInput {
        vm: &vm,
        h: &h,
        mandatory: &mandatory,
        groups: &groups.groups,
        discarded: &groups.discarded,
        alpha: &alpha,
        bounds: &bounds,
        constraints: requires.into_iter().chain(excludes).chain(complex).chain(completion).collect(),
        phi,
        provenance: Provenance {
            options: OptionsRecord {
                or_groups_ms: options.or_groups.map(|d| d.as_millis() as u64),
                or_groups: or_state.into(),
                phi: options.phi,
                textual_equality: options.textual_equality,
            },
            stages,
            transcript: provider.transcript().to_vec(),
            discarded: Vec::new(),
            notes,
        },
    });
    t.total = start.elapsed();
    Ok(Synthesis { model, timings: t, or_groups_timed_out: or_state == "timed-out" })
}

struct AssembleInput<'a> {
    vm: &'a crate::variables::VariableModel,
    h: &'a Hierarchy,
    mandatory: &'a [bool],
    groups: &'a [FeatureGroup],
    discarded: &'a [FeatureGroup],
    alpha: &'a [usize],
    bounds: &'a [Vec<u64>],
    constraints: Vec<crate::constraints::ReadableConstraint>,
    phi: Option<crate::constraints::ResidualConstraint>,
    provenance: Provenance,
}

fn assemble(x: AssembleInput<'_>) -> AttributedFeatureModel {
    let h = x.h;
    let order = h.preorder();
    let mut pos = vec![0usize; h.len()];
    for (i, &f) in order.iter().enumerate() {
        pos[f] = i;
    }
    let features = order
        .iter()
        .map(|&f| FeatureDecl {
            name: h.names[f].clone(),
            binding: x.vm.features.get(f).map(|feat| FeatureBinding {
                column: x.vm.columns[feat.column].clone(),
                present: feat.present.clone(),
            }),
        })
        .collect();
    let hierarchy = order
        .iter()
        .filter_map(|&c| h.parent[c].map(|p| HierarchyEdge { child: h.names[c].clone(), parent: h.names[p].clone() }))
        .collect();
    let mandatory = order.iter().filter(|&&f| x.mandatory[f]).map(|&f| h.names[f].clone()).collect();
    let decl = |g: &FeatureGroup| GroupDecl {
        parent: h.names[g.parent].clone(),
        kind: g.kind,
        children: g.children.iter().map(|&c| h.names[c].clone()).collect(),
    };
    let mut sorted: Vec<&FeatureGroup> = x.groups.iter().collect();
    sorted.sort_by_key(|g| (pos[g.parent], g.kind, g.children.iter().map(|&c| pos[c]).collect::<Vec<_>>()));
    let groups = sorted.into_iter().map(decl).collect();
    let attributes = x
        .vm
        .attributes
        .iter()
        .enumerate()
        .map(|(a, attr)| AttributeDecl {
            name: attr.name.clone(),
            column: x.vm.columns[attr.column].clone(),
            host: h.names[x.alpha[a]].clone(),
            domain: attr.domain.clone(),
            interesting: x.bounds[a].clone(),
        })
        .collect();
    let mut provenance = x.provenance;
    provenance.discarded = x.discarded.iter().map(decl).collect();
    AttributedFeatureModel {
        label: if x.phi.is_some() { LABEL_EXACT } else { LABEL_OVER_APPROXIMATE }.to_string(),
        root: h.names[h.root].clone(),
        features,
        hierarchy,
        mandatory,
        groups,
        attributes,
        constraints: x.constraints,
        phi: x.phi,
        provenance,
    }
}

/// Parses a matrix, treating the columns the domain knowledge marks as
/// identifiers (and auto-detected ones) as row labels.
pub fn ingest(csv_text: &str, dk: &DomainKnowledge) -> Result<ConfigurationMatrix, crate::matrix::MatrixError> {
    ingest_with(csv_text, dk, false)
}

/// [`ingest`], optionally dropping duplicate rows with a warning instead of
/// rejecting them.
pub fn ingest_with(
    csv_text: &str,
    dk: &DomainKnowledge,
    dedup: bool,
) -> Result<ConfigurationMatrix, crate::matrix::MatrixError> {
    let header: Vec<String> = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(csv_text.as_bytes())
        .headers()
        .map(|h| h.iter().map(str::to_string).collect())
        .unwrap_or_default();
    let hints = crate::matrix::IngestionHints {
        identifier_columns: dk.identifier_columns().into_iter().filter(|c| header.contains(c)).collect(),
        dedup,
        ..crate::matrix::IngestionHints::new()
    };
    crate::matrix::parse_matrix(csv_text, &hints)
}
