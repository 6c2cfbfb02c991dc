//! Zooming network: a hierarchical document encoder plus a recurrent
//! controller that labels long documents with word-, sentence- and
//! paragraph-level BIO actions.

pub mod actions;
pub mod baseline;
pub mod checks;
pub mod cli;
pub mod config;
pub mod controller;
pub mod corpus;
pub mod encoder;
pub mod eval;
pub mod experiments;
pub mod model;
pub mod render;
pub mod tensor;
pub mod training;
