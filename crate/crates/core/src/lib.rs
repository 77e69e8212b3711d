//! Discovery of kinetic rate laws from concentration time series.
//!
//! Candidate rate expressions are generated by genetic programming, their
//! constants are estimated by a global-then-local optimizer, and the winner
//! is chosen by an information criterion. Two formulations are supported:
//! regressing against rates estimated from smoothed concentration profiles
//! ([`pipeline::adok_s_iteration`]) and integrating each candidate as an ODE
//! and comparing concentrations directly ([`pipeline::adok_w_iteration`]).
//! A discriminating-experiment designer closes the loop.

pub mod expr;
pub mod io;
pub mod rng;
pub mod simulate;
pub mod estimate;
pub mod select;
pub mod gpsearch;
pub mod mbdoe;
pub mod pipeline;
pub mod studies;
