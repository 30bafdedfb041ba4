pub mod adaptivity;
pub mod bus;
pub mod executor;
pub mod generator;
pub mod optimizer;
pub mod par;
pub mod query;
pub mod rdf;
pub mod runtime;
