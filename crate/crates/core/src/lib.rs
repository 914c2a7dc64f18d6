//! Curation toolkit for GUI-agent trajectories.
//!
//! Rollout groups are compared screen-by-screen to find *fork points*: steps
//! where a failed trajectory sees the same screen as a successful one but acts
//! differently. Each fork becomes a corrective supervised sample pairing the
//! failed trajectory's context with the successful trajectory's response.
//!
//! * [`trajectory`]: data model, archive format, history windows
//! * [`imaging`]: preprocessing, mean-hash prefilter, SSIM, screen equivalence
//! * [`fork`]: fork point detection and group pairing
//! * [`forge`]: corrective samples, response-only loss, filtering, datasets
//! * [`rl`]: reference advantage and surrogate-objective math
//! * [`sim`]: deterministic GUI environments with scripted policies
//! * [`pipeline`]: end-to-end simulate/filter/detect/forge run

pub mod forge;
pub mod fork;
pub mod imaging;
pub mod pipeline;
pub mod pnm;
pub mod rl;
pub mod sim;
pub mod trajectory;
