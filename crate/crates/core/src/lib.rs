//! Disk-resident graph ANN search.
//!
//! The index stores a bounded-degree proximity graph as compressed vertex
//! records packed into slotted pages. Queries run as cooperatively scheduled
//! tasks that cache individual records in a shared buffer pool and overlap
//! their computation with asynchronous page reads.

pub mod builder;
pub mod engine;
pub mod error;
pub mod graph;
pub mod io;
pub mod layout;
pub mod pool;
pub mod quantizer;
pub mod report;
pub mod search;
pub mod synthetic;
pub mod vecs;
pub mod vectors;

pub use builder::{build_index, BuildReport, IndexParams};
pub use engine::{compute_batch_size, Engine, QueryOutcome, SchedulerConfig, SearchKind};
pub use error::{Error, Result};
pub use graph::{build_graph, AffinityDictionary, BuildParams, Graph};
pub use layout::{IndexFile, PlacementPlan};
pub use quantizer::{train, QuantizerModel, TrainParams};
pub use search::{best_first_search, cache_aware_search, SearchOutput, SearchParams};
pub use vectors::{brute_force_topk, euclidean_distance, recall_at_k, Dataset, ResultSet, VertexId};
