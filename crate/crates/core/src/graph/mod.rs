//! Directed acyclic graphs: representation, acyclicity, random generation
//! and single-edge moves.

mod dag;
pub mod export;

pub use dag::{find_cycle, is_acyclic, random_er_dag, Dag, EdgeMove};
