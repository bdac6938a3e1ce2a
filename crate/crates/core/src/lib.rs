// `!(x > 0.0)` comparisons deliberately reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod exec;
pub mod io;
pub mod linalg;
pub mod penalty;
pub mod poly;
pub mod refine;
pub mod tracer;
pub mod witness;
