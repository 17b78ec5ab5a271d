//! Auditing demographic disparities in college-major recommendations.

pub mod audit;
pub mod demographics;
pub mod embeddings;
pub mod ingest;
pub mod metrics;
pub mod prompt;
pub mod recommender;
pub mod stats;
pub mod vocab;

pub use demographics::{DemographicValue, Demographics, Dimension, Gender, Race, Ses};
pub use embeddings::{CostMatrix, EmbeddingTable};
pub use metrics::{jaccard, Distribution, RankWeights, TopK, Weighting};
pub use prompt::{BracketScheme, Cell, Percentile, PromptTemplate, ScoreBracket, StudentProfile};
pub use recommender::{QuerySpec, RawResponse, RecommenderClient};
pub use vocab::{MajorVocabulary, RecommendationSet, StemLexicon};
