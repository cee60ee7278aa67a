//! Individualized path recommendation for disrupted transit networks.
#![allow(clippy::needless_range_loop)]

pub mod benders;
pub mod choice;
pub mod evaluate;
pub mod ipr;
pub mod lp;
pub mod ofp;
pub mod report;
pub mod scenario;
