//! Bit-level fragmentation of additive dataflow designs.
//!
//! The pipeline parses a design ([`dsl`]), lowers it to unsigned additions
//! ([`kernel`]), measures ripple timing ([`timing`]), splits additions into
//! fragments by bit mobility ([`fragment`]), schedules the fragments
//! ([`schedule`]), estimates datapath cost ([`cost`]) and checks the result
//! against the original by simulation ([`sim`]).

pub mod cli;
pub mod cost;
pub mod dfg;
pub mod dsl;
pub mod fixtures;
pub mod fragment;
pub mod kernel;
pub mod schedule;
pub mod sim;
pub mod timing;
