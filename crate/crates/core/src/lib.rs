//! Synthesis of attributed feature models from configuration matrices.
//!
//! The engine takes a matrix whose rows are product configurations and whose
//! columns are Boolean features or valued attributes, and produces a feature
//! diagram (hierarchy, mandatory edges, mutex/or/xor groups, attribute
//! placements, readable cross-tree constraints) together with a residual
//! constraint that makes the model exact.
//!
//! The stages are exposed individually so that each can be tested and
//! benchmarked on its own; [`pipeline::synthesize`] runs them in order.

pub mod constraints;
pub mod implications;
pub mod knowledge;
pub mod labkit;
pub mod matrix;
pub mod model;
pub mod pipeline;
pub mod semantics;
pub mod structure;
pub mod variability;
pub mod variables;

mod words;

pub use constraints::{parse_constraint, render_constraint, BoolFactor, ReadableConstraint, RelOp, ResidualConstraint};
pub use implications::{compute_binary_implications, BiSet, BinaryImplication};
pub use knowledge::{
    load_dk, ColumnKind, Decision, DecisionKind, DecisionProvider, DefaultProvider, DomainKnowledge, Question,
    ScriptedProvider,
};
pub use labkit::{generate_matrix, run_benchmark, GeneratorParams};
pub use matrix::{parse_matrix, CellValue, ConfigurationMatrix, IngestionHints, MatrixError};
pub use model::AttributedFeatureModel;
pub use pipeline::{synthesize, synthesize_timed, synthesize_with_knowledge, SynthesisError, SynthesisOptions};
pub use semantics::{audit_maximality, check_semantics, enumerate_configurations, eval_config, Configuration};
