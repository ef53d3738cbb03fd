pub mod corpus;
pub mod diagnostics;
pub mod embedding;
pub mod issue_query;
pub mod party_distance;
pub mod reports;
pub mod text;
pub mod topic;

/// Fixed-precision rendering shared by every CSV report and chart label.
pub fn fmt_value(v: f64) -> String {
    let s = format!("{v:.6}");
    if s == "-0.000000" {
        "0.000000".to_string()
    } else {
        s
    }
}

pub use corpus::{Comment, Corpus};
pub use embedding::{Backend, DocVector, EmbedOptions, EmbeddingTable};
pub use issue_query::{ExpandedQuery, ExpansionParams, IssueSpec, MatchMode};
pub use party_distance::{Bucketing, PartyAnalyzer, Period};
pub use reports::{PipelineConfig, PipelineError};
pub use text::Stopwords;
pub use topic::{NmfConfig, TopicModel};
