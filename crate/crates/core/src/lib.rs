//! Situated 3D question answering through scene-query programs.
//!
//! Layers, bottom-up: [`scene`] (annotated boxes and the agent pose),
//! [`relations`] (geometric predicates), [`api`] (the query functions
//! programs call), [`interp`] (the sandbox that runs programs), [`llm`]
//! (chat clients), [`agent`] (the refinement loop), [`dataset`] (SFT/DPO
//! harvesting and metrics) and [`augment`] (question generation).

// Validation is written `!(x > 0.0)` on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent;
pub mod api;
pub mod augment;
pub mod config;
pub mod dataset;
pub mod interp;
pub mod llm;
pub mod parallel;
pub mod relations;
pub mod scene;
