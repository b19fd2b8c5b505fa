//! Benchmark campaigns, grid export and result tables.

pub mod campaign;
mod config;
pub mod grid;
pub mod report;

pub use campaign::{run_campaign, CampaignReport, Layout, RunKey, RunRecord, SummaryRow};
pub use config::{CampaignConfig, OUTPUT_ENV};
pub use grid::emit_grid;
pub use report::{compare, Report};
