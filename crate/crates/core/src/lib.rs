//! A modal λ-calculus with threads and regions: syntax, depth and type
//! checking, three reduction relations, shallow-first reordering, polynomial
//! bound instrumentation, a reference front-end and Church encodings.

pub mod bounds;
pub mod corpus;
pub mod depth;
pub mod encodings;
pub mod parse;
pub mod print;
pub mod programs;
pub mod reduce;
pub mod refs;
pub mod reorder;
pub mod syntax;
pub mod trace;
pub mod types;
pub mod typing;

pub use parse::{parse_source, parse_term, parse_type, ParseError, Source};
pub use print::{print, print_source};
pub use syntax::{Address, Loc, Modality, Name, RegionContext, SizeConvention, Term};
pub use types::Type;
