pub mod expr;
pub mod cir;
pub mod check;
pub mod cvn;
pub mod translate;
pub mod analyze;
pub mod diag;
pub mod pipeline;
