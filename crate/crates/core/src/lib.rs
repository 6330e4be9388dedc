pub mod cge;
pub mod lkb;
pub mod mma;
pub mod channel;
pub mod nn;
pub mod phy;
pub mod pipeline;
pub mod remote;
pub mod semeval;
pub mod server;
