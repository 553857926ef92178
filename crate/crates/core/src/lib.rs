//! Weak-supervision tooling for natural language interfaces to databases:
//! synthesize an NL-SQL training corpus from a database schema alone,
//! augment it with paraphrase and dropout variants, anonymize constants at
//! runtime, and score translators with an execution-based relaxed
//! correctness criterion.
//!
//! Pipeline stages map onto modules:
//!
//! - [`schema`] — schema/value-file ingestion and the value index
//! - [`templates`] — SQL/NL template pairs, slots, phrase lexicon
//! - [`paraphrase`] — PPDB-format paraphrase index
//! - [`generate`] — slot-filling enumeration, instantiation, balancing
//! - [`augment`] — paraphrase substitution and word dropout
//! - [`bridge`] — anonymize/bind runtime phase and translator plug point
//! - [`eval`] — execution harness, relaxed result comparison, reports
//! - [`db`] — in-memory SQLite instances seeded from schema fixtures
//! - [`sql`] — the supported SQL subset grammar
//! - [`pairs`] — corpus records and run manifests

pub mod augment;
pub mod bridge;
pub mod db;
pub mod eval;
pub mod generate;
pub mod pairs;
pub mod paraphrase;
pub mod schema;
pub mod sql;
pub mod templates;
pub mod text;

pub use augment::{augment, AugmentationParams, ProtectedVocab};
pub use bridge::{anonymize, bind, BaselineTranslator, BindingMap, SubprocessTranslator, Translator};
pub use eval::{evaluate, load_benchmark, results_match, EvalCase, EvalReport, Variant};
pub use generate::{enumerate_slot_fillings, generate, instantiate_pair, GenerationConfig};
pub use pairs::TrainingPair;
pub use paraphrase::{load_paraphrase_index, lookup_paraphrases, ParaphraseIndex};
pub use schema::{build_value_index, load_schema, load_values, Schema, ValueIndex};
pub use templates::{load_phrase_lexicon, load_templates, PhraseLexicon, TemplateCatalog};
