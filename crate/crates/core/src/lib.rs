//! Purity analysis for 2-D Euclidean TSP: purity orders, tour purity
//! profiles and their exponential fit, structural checks on 0-order pure
//! edges, and a purity-weighted policy-gradient trainer for a small
//! construction policy.

pub mod error;
pub mod generate;
pub mod geometry;
pub mod policy;
pub mod purity;
pub mod seed;
pub mod solvers;
pub mod stats;
pub mod topology;
pub mod trainer;
pub mod tsplib;

pub use error::{Error, Result};
pub use geometry::{purity_order, purity_order_fast, Instance, Point, PurityTable};
pub use solvers::Tour;
