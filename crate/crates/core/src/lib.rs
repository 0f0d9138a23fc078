pub mod analysis;
pub mod build;
pub mod code;
pub mod formula;
pub mod persistence;
pub mod runtime;
pub mod table;
pub mod varmodel;
