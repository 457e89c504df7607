//! Multi-tag detection.
//!
//! [`mpa`] holds the iterative log-domain message-passing detector that runs
//! on the dyadic factor graph. Function nodes in the spill region of a slot
//! evaluate the joint forward-plus-backward likelihood over full codeword
//! indices; all other function nodes work on the projected three-level
//! alphabet (see [`projection`]). [`oracle`] enumerates the exact joint
//! likelihood for small instances and [`baseline`] is the time-division
//! receiver that drops the samples hit by the previous slot.

pub mod baseline;
pub mod maxstar;
pub mod mpa;
pub mod oracle;
pub mod projection;

pub use baseline::{
    composite_model, detect_td_baseline, retained_energy_fraction, retained_samples, TdDecision,
};
pub use maxstar::{max_star, max_star_all};
pub use mpa::{
    detect, fn_initial_info, fn_to_vn_update, vn_to_fn_update, DetectionResult, DetectorConfig,
    FnTable, MessageState, MpaDetector, TagDecision, VnUpdate,
};
pub use oracle::{map_oracle, oracle_combinations, ORACLE_LIMIT};
pub use projection::{expand_messages, project_messages, Projection};
