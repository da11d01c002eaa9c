pub mod ast;
pub mod bench;
pub mod catalog;
pub mod conversion;
pub mod fixtures;
pub mod optimizer;
pub mod parser;
pub mod printer;
pub mod refdb;
pub mod rewriter;
pub mod session;
pub mod tenant;
pub mod value;
