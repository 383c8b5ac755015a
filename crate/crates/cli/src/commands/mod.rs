pub mod eval;
pub mod infer;
pub mod plot;
pub mod refine;
pub mod train;
