pub mod expr;
pub mod sde;
pub mod symmetry;
pub mod kozlov;
pub mod montecarlo;
pub mod model;
pub mod analysis;
pub mod suite;
