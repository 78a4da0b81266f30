pub mod client;
pub mod eval;
pub mod harvest;
pub mod iri;
pub mod knowledge;
pub mod llm;
pub mod pipeline;
pub mod results;
pub mod retrieval;
pub mod schema;
pub mod sparql;
pub mod validation;
