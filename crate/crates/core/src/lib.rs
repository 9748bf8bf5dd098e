//! Reproduce Android bugs from natural-language reports.
//!
//! [`extraction`] turns a report into typed [`Step`]s with a few-shot prompt,
//! [`gui`] encodes screens as HTML, [`guidance`] asks the model which element
//! each step targets, and [`replay`] drives a [`device::Device`] through the
//! steps, exploring and backtracking when a step has no match on screen.

pub mod batch;
pub mod device;
pub mod entity;
pub mod exemplar;
pub mod extraction;
pub mod gui;
pub mod guidance;
pub mod llm;
pub mod prompt;
pub mod replay;
#[cfg(feature = "testkit")]
pub mod testkit;

pub use entity::{ActionType, BugReport, Direction, Step};
pub use exemplar::ExemplarCorpus;
pub use gui::{encode_gui, EncodedGui, ViewNode};
pub use guidance::GuidanceResult;
pub use llm::{LlmClient, LlmError};
pub use prompt::Prompt;
