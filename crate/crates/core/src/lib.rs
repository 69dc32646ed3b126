//! Late-interaction retrieval over token embeddings.
//!
//! Documents and queries are represented by one embedding per token and scored
//! with a sum-of-max kernel: every query token contributes the best inner
//! product it can find among the document's tokens. Two flavours exist:
//!
//! - **soft** matching takes the max over every document token;
//! - **hard** matching only considers document tokens carrying the same token id
//!   (optionally plus a document-level summary vector).
//!
//! On top of the kernels the crate provides index-time document-token pruning,
//! query-time token selection for candidate generation, an IVF-partitioned
//! index for soft retrieval, an embedding inverted index for hard retrieval,
//! matching-mechanism instrumentation and an evaluation harness.
//!
//! ```
//! use latte_core::{scoring, TokenEmbeddings, TokenId};
//!
//! let q = TokenEmbeddings::new(1, vec![TokenId(3)], vec![1.0, 0.0], 2).unwrap();
//! let d = TokenEmbeddings::new(7, vec![TokenId(4), TokenId(5)], vec![0.3, 0.4, 0.6, 0.0], 2).unwrap();
//! let trace = scoring::soft_match(&q, &d).unwrap();
//! assert!((trace.total - 0.6).abs() < 1e-6);
//! assert_eq!(trace.matches[0].doc_pos, Some(1));
//! ```

pub mod analysis;
pub mod doc_pruning;
pub mod engine;
mod error;
pub mod eval;
pub mod hard_index;
mod io_util;
pub mod kmeans;
pub mod query_pruning;
pub mod scoring;
pub mod soft_index;
pub mod store;
pub mod synthetic;
mod topk;

pub use error::{Error, Result};
pub use store::{Corpus, Dtype, IdfTable, TokenEmbeddings, TokenId, TokenMatrix, Vocabulary};
