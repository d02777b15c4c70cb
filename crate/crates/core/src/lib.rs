//! Critical probabilistic roadmaps.
//!
//! A learned regressor predicts, from a local occupancy patch, how often a
//! state lies on shortest paths that cannot be shortcut. A Critical PRM
//! samples a few such states, connects them to every visible node, and fills
//! the rest of its budget with an ordinary radius-connected uniform PRM.
//!
//! The pipeline, module by module:
//!
//! - [`env`]: boxes in the unit cube, collision checks, rasters and patches,
//!   and the narrow-passage generator.
//! - [`roadmap`]: PRM construction, Dijkstra, path shortcutting.
//! - [`centrality`]: smoothed betweenness labels and balanced datasets.
//! - [`learner`]: the MLP regressor, training and gradient checks.
//! - [`cprm`]: Critical PRM, the baselines, and queries.
//! - [`bench`]: the success/cost versus time harness.
//! - [`io`]: file formats.
//!
//! ```
//! use critical_prm::env::{generate_narrow_passage, NarrowPassageParams};
//! use critical_prm::roadmap::{build_prm, RoadmapConfig};
//! use rand_chacha::rand_core::SeedableRng;
//!
//! let env = generate_narrow_passage(&NarrowPassageParams::default(), 7).unwrap();
//! let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
//! let rm = build_prm(&env, &RoadmapConfig::new(200, 2), &mut rng).unwrap();
//! assert_eq!(rm.len(), 200);
//! ```

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bench;
pub mod centrality;
pub mod cprm;
pub mod env;
pub mod io;
pub mod learner;
pub mod roadmap;
pub mod verify;

pub use centrality::{betweenness, build_dataset, CentralityConfig, CentralityScores, Dataset};
pub use cprm::{
    build_critical_local_prm, build_critical_prm, build_hybrid_prm, build_uniform_prm, plan,
    CriticalPrmConfig, Method, PlanProblem, PlanResult,
};
pub use env::{Aabb, Environment, LocalPatch, State};
pub use learner::{train, MlpModel, TrainConfig};
pub use roadmap::{build_prm, Roadmap, RoadmapConfig};

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/intro.md")]
    mod intro {}
    #[doc = include_str!("../../../book/src/environments.md")]
    mod environments {}
    #[doc = include_str!("../../../book/src/roadmaps.md")]
    mod roadmaps {}
    #[doc = include_str!("../../../book/src/criticality.md")]
    mod criticality {}
    #[doc = include_str!("../../../book/src/learning.md")]
    mod learning {}
    #[doc = include_str!("../../../book/src/critical-prm.md")]
    mod critical_prm {}
    #[doc = include_str!("../../../book/src/benchmarking.md")]
    mod benchmarking {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
