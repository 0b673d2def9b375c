pub mod audit;
pub mod board;
pub mod client;
pub mod crypto;
pub mod protocol;
pub mod registrar;
pub mod scenarios;
pub mod server;
