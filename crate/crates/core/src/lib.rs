//! Ground states of few-electron model systems coupled to cavity modes,
//! in the dressed-orbital (electron plus mode displacement) representation.

pub mod container;
pub mod eigen;
pub mod exact;
pub mod grid;
pub mod model;
pub mod observables;
pub mod solver;
pub mod spbasis;
