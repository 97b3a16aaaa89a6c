pub mod channel;
pub mod config;
pub mod dualsolve;
pub mod sched;
pub mod simkit;
pub mod traffic;
