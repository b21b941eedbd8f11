//! Sampling and verification lab for labeled Galton-Watson trees, their
//! spine decompositions, the Cori-Vauquelin-Schaeffer bijection and the
//! associated label chains.

pub mod chains;
pub mod cvs;
pub mod experiments;
pub mod law;
pub mod metrics;
pub mod report;
pub mod samplers;
pub mod tree;

pub use chains::Q;
pub use law::{law_mass, law_table, enumerate_labeled_trees, Law, LawError};
pub use tree::{CornerSequence, LabeledTree, PlanarTree, SpineTree, SpineVariant, TreeBuilder, Validity};
