//! A small Python-subset interpreter used as an in-process code kernel.
//!
//! It covers the statement and expression forms agents typically write
//! (functions, closures, comprehensions, exceptions, f-strings, files) plus
//! a handful of standard modules. Integers are 64-bit.

pub mod analysis;
pub mod ast;
pub mod builtins;
pub mod complexity;
pub mod error;
pub mod format;
pub mod interp;
pub mod kernel;
pub mod lexer;
pub mod methods;
pub mod modules;
pub mod parser;
pub mod value;

pub use analysis::{analyze, CodeAnalysis, FunctionInfo, HOOKS};
pub use complexity::complexity_of_source;
pub use error::SyntaxError;
pub use interp::{Host, NoHost, RetrievedAction};
pub use kernel::{ErrorInfo, ExecOutcome, Kernel, RECOMMENDED_STACK};
pub use parser::{clean_doc, parse_module};
