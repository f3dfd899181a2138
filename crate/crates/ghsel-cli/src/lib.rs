//! Library half of the `ghsel` command-line tool: settings resolution, CSV
//! ingestion, report writers and the subcommands themselves.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod data;
pub mod report;
pub mod settings;
