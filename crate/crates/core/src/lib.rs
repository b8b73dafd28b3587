//! Multi-objective tuning of an epsilon-greedy RL task scheduler running
//! inside a trace-driven HTC energy simulator.
//!
//! * [`moo`]: generic NSGA-II engine
//! * [`genome`]: scheduler parameter set as a mixed-type genome
//! * [`sim`]: discrete-event HTC simulator with energy ledger
//! * [`rl`]: epsilon-greedy placement scheduler
//! * [`traces`]: synthetic trace generation and CSV ingestion
//! * [`analysis`]: Pareto extraction, scaling, DBSCAN and Lasso
//! * [`tuning`]: the simulator wrapped as an NSGA-II problem

pub mod analysis;
pub mod genome;
pub mod moo;
pub mod rl;
pub mod sim;
pub mod traces;
pub mod tuning;
