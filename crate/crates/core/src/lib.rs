//! Headless engine for a mixed-reality tour-guide agent.
//!
//! The crate is organised around the agent's request pipeline:
//!
//! - [`fsm`]: gaze-and-speech interaction state machine.
//! - [`anchor`]: persisted spatial anchors, room disambiguation and gaze hit tests.
//! - [`dialogue`]: knowledge-base chatbot with a lexicon sentiment engine.
//! - [`vision`]: object-recognition client contract and a deterministic stub.
//! - [`composer`]: speech/body/face/viseme performance timelines.
//! - [`orchestrator`]: per-session module manager, latency masking and metrics.
//! - [`sim`]: seeded discrete-event harness for response-time studies.
//!
//! Everything runs on a simulated clock expressed in seconds (`f64`).

pub mod anchor;
pub mod composer;
pub mod dialogue;
pub mod fixtures;
pub mod fsm;
pub mod geometry;
pub mod latency;
pub mod orchestrator;
pub mod sim;
pub mod text;
pub mod vision;

pub use geometry::Vec3;
