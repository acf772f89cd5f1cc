//! Exact simulation and fault analysis of Toffoli ancilla preparation for
//! CSS codes, plus the analytic error-rate model of the concatenated
//! Steane-code Toffoli gate.

pub mod analytic;
pub mod builders;
pub mod circuit;
pub mod code;
pub mod expr;
pub mod fault;
pub mod layout;
pub mod pauli;
pub mod rates;
pub mod sim;
