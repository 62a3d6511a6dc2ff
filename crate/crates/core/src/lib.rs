pub mod lucid;
pub mod engine;
pub mod fabric;
pub mod marf;
pub mod tier;
pub mod autonomic;
pub mod sim;
pub mod cli;
