//! Topic-gated document similarity: text preprocessing, corpus vectors, LDA
//! topic models, cosine ranking, dataset ingestion and durable storage.

pub mod corpus;
pub mod ingest;
pub mod matching;
pub mod store;
pub mod textprep;
pub mod topics;

pub use corpus::{BowVector, Dictionary, DictionaryHash, TfidfVector};
pub use ingest::{Dataset, DatasetStatus, DatasetTableRow};
pub use matching::{compare, CompareParams, ComparisonReport, MatchResult};
pub use store::{Store, StoreError};
pub use textprep::{CleanDocument, PrepConfig, Preprocessor, RawDocument};
pub use topics::{LdaConfig, LdaModel, TopicDistribution};
