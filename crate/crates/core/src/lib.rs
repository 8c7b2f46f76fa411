pub mod complex;
pub mod covering;
pub mod graph;
pub mod linalg;
pub mod modulus;
pub mod paths;
pub mod maxflow;
pub mod surfaces;
pub mod capacity;
pub mod harness;
