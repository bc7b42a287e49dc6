pub mod atom_structure;
pub mod cli;
pub mod games;
pub mod hyperplane;
pub mod networks;
pub mod rainbow;
pub mod rainbow_games;
pub mod service;
pub mod session;
