pub mod cfg;
pub mod cli;
pub mod clients;
pub mod engine;
pub mod incremental;
pub mod lattice;
pub mod oracle;
pub mod store;
pub mod verify;
