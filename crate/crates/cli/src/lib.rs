//! Command-line front end: configuration, data ingestion and the
//! `project`, `bounds`, `fit`, `predict`, `simulate` and `bench` commands.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod data;
pub mod error;
pub mod output;
