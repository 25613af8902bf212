//! Probabilistic grammar parsing of segmented 3D scenes.
//!
//! A scene arrives as a set of planar segments with summary statistics and
//! an adjacency graph over them. A grammar composes segments into planes,
//! planes into object parts, parts into objects, and objects into the whole
//! scene; every production carries a probability model fitted from labeled
//! parse trees. Parsing finds a low-cost (high-probability) derivation:
//! exactly with a lightest-derivation priority-queue search, approximately
//! with a stochastic beam over forests, or by exhaustive enumeration on
//! tiny scenes for verification.
//!
//! The crate is organized around the pipeline:
//!
//! * [`scene`] — segment statistics, scenes, adjacency, ground-truth trees
//! * [`grammar`] — symbols, rules, extraction, binarization, composition
//! * [`features`] — the geometric feature function over entities
//! * [`model`] — rule probability models, training, tree costs
//! * [`parse`] — lightest-derivation, beam, and exhaustive parsers
//! * [`synth`] — synthetic desk-scene generator for reproducible corpora
//! * [`eval`] — segment-label extraction and precision/recall reports
//!
//! The `examples/` directory has one runnable example per capability; the
//! `scene-grammar` binary exposes the same operations as subcommands.

pub mod cli;
pub mod dot;
pub mod eval;
pub mod features;
pub mod gaussian;
pub mod grammar;
pub mod model;
pub mod parse;
pub mod scene;
pub mod span;
pub mod synth;

pub use dot::export_dot;
pub use eval::{
    extract_labels, extract_labels_gt, labels_for_result, precision_recall, LabelReport,
    LabelTally,
};
pub use features::{feature_vector, Entity, FeatureSchema, FeatureVector, GEOM_V1};
pub use grammar::{extract_rules, Grammar, Rule, RuleKind, Symbol, SymbolKind};
pub use model::{
    compose, derive_tree, fit_gaussian, fit_priors, rule_cost, train, tree_cost, CostOutcome,
    GaussianParams, ModelVariant, RuleModel, StoredGrammar, TrainConfig, TrainedGrammar,
};
pub use parse::{
    applicable, parse_beam, parse_exhaustive, parse_kld, BeamConfig, Budget, KldOutcome,
    ParseNode, ParseResult, ParseTree, SearchStats,
};
pub use scene::{
    build_adjacency, load_scene, load_tree, merge_stats, save_scene, save_tree, AdjacencyInput,
    GroundTruthTree, Scene, Segment, SegmentId, SegmentStats,
};
pub use span::Span;
pub use synth::{gen_corpus, gen_scene, load_corpus, CorpusManifest, SceneTemplate};

/// Errors shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid json in {path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },
    #[error("{file}: {field}: {reason}")]
    Format {
        file: String,
        field: String,
        reason: String,
    },
    #[error("duplicate leaf segment id {0} in ground-truth tree")]
    DuplicateLeaf(SegmentId),
    #[error("insufficient points for plane (need at least 3, have {0})")]
    InsufficientPoints(u64),
    #[error("unknown symbol {0:?}")]
    UnknownSymbol(String),
    #[error("cyclic intermediate definition involving {0:?}")]
    CyclicIntermediate(String),
    #[error("tree not derivable: node {symbol:?} with children {children:?}")]
    NotDerivable {
        symbol: String,
        children: Vec<String>,
    },
    #[error("conflicting models for rule {0:?}")]
    ConflictingModels(String),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("rule {0:?} has no model")]
    MissingModel(String),
    #[error("rule cost is not finite for rule {0:?}")]
    NonFiniteCost(String),
    #[error("feature schema mismatch: grammar has {grammar:?}, this build supports {supported:?}")]
    SchemaMismatch {
        grammar: String,
        supported: String,
    },
    #[error("scene has {0} terminals, exhaustive parser is capped at {1}")]
    TerminalCap(usize, usize),
    #[error("label domains differ: {0}")]
    DomainMismatch(String),
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn format(file: &str, field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Format {
            file: file.to_string(),
            field: field.into(),
            reason: reason.into(),
        }
    }
}
