//! Gene-culture coevolution in a population of foraging agents.
//!
//! Agents carry an inert genome and a mutable memome, each a set of fifty
//! daily action programs. Genomes evolve through asexual reproduction;
//! memomes additionally change through individual learning (self-mutation)
//! and social learning (pooling and sharing of the best programs).

pub mod agent;
pub mod engine;
pub mod error;
pub mod harness;
pub mod plex;
pub mod social;
pub mod task;

pub use agent::{Agent, AgentId, DayOutcome};
pub use engine::{run_simulation, RunConfig, RunRecord, SampleRow, Simulation, Treatment};
pub use error::{ConfigError, HarnessError};
pub use harness::{aggregate, emit_plot_data, run_experiment, AggregateRow, ExperimentConfig};
pub use plex::{Action, FitnessKey, MutationOptions, Plex, PlexSet};
pub use task::{Environment, ResourceSite, SearchOrder, SiteId};
