//! Structure alignment: compatibility between objects, expansion of the base
//! set, and the selection problem that turns a search set into a draft.

pub mod compat;
pub mod expand;
pub mod mip;

pub use compat::{
    column_compat, object_compat, passage_passage_compat, table_passage_compat, table_table_compat, CompatError,
    CompatMatrix, Connection, ConnectionKind, Endpoint, Locator, DEFAULT_COMPAT_WEIGHT,
};
pub use expand::{expand_base, SearchSet, Strategy, DEFAULT_STRATEGIES};
pub use mip::{brute_force_mip, solve_mip, BranchAndBound, BruteForce, Draft, Link, MipError, MipInstance, MipSolver};
