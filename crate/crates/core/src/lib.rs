//! Moving-object location store with leader/follower update shedding.
//!
//! Objects moving together are grouped into schools; only each school's
//! leader is written to the spatial index, and follower updates that stay
//! close to their modeled position are dropped. The crate provides the
//! sorted multi-tier table store, Hilbert-curve cell keys, the schooling
//! engine, exact kNN search with adaptive cell size, the parallel archiver,
//! a road-network workload generator and the benchmark harness.

// Negated float comparisons are used on purpose: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod archive;
pub mod bench;
pub mod nn;
pub mod schooling;
pub mod spatial;
pub mod store;
pub mod types;
pub mod workload;
