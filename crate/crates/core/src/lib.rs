//! Runtime for agents that write, run, keep and retrieve their own code
//! actions.

pub mod executor;
pub mod gateway;
pub mod harness;
pub mod metrics;
pub mod orchestrator;
pub mod registry;
pub mod retrieval;
pub mod types;

pub use executor::{Executor, ExecutorError, MockExecutor, ProcessExecutor, WorkerCommand};
pub use gateway::{ChatMessage, ChatProvider, ProviderConfig, ProviderError, ScriptedProvider};
pub use metrics::{complexity_summary, coverage_of_trajectory, score_answer, CoverageReport};
pub use orchestrator::{run_task, LoopOptions, TaskRun};
pub use registry::{load_initial_actions, ActionLibrary, SharedLibrary};
pub use retrieval::{Embedder, TrigramEmbedder};
pub use types::{
    ActionRecord, Flags, Origin, Phase, RunConfig, Step, StepStatus, TaskSpec, Trajectory,
};

/// Index with double-precision vectors, as used by the library.
pub type EmbeddingIndex = retrieval::EmbeddingIndex<f64>;
/// Single-precision index for large libraries.
pub type EmbeddingIndex32 = retrieval::EmbeddingIndex<f32>;
