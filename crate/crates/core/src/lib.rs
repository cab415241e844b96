pub mod bp;
pub mod channel;
pub mod cluster;
pub mod de;
pub mod duality;
pub mod error;
pub mod gexit;
pub mod gibbs;
pub mod graph;
pub mod quad;
pub mod rng;
pub mod sum;
