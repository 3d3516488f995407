pub mod eval;
pub mod export_assignments;
pub mod gradcheck;
pub mod synth;
pub mod train;
