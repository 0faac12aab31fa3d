//! gridsmith builds optimization-ready transmission network models.
//!
//! The pipeline: relational CSV component tables are parsed and converted
//! to a per-unit network model (two- and three-winding transformers become
//! Π-model branches via exact T-to-Π / star equivalencing), the network is
//! reduced (breaker removal, degree-2 series joins), thermal limits are
//! fitted from reference line data and applied with an upper-bound
//! fallback, generators receive data-driven fuel categories and per-fuel
//! cost and operational parameters, and feasibility is verified through
//! slack-variable power flow and OPF diagnosis. Models round-trip through
//! the MATPOWER case format (plus a JSON sidecar for what the format
//! cannot carry).
//!
//! Solvers are in-crate: Newton-Raphson AC power flow, linearized DC power
//! flow, damped-least-squares slack power flow, and a primal-dual
//! interior-point method behind both the DC-OPF (LP/QP) and AC-OPF (NLP).

pub mod diagnosis;
pub mod equiv;
pub mod genclass;
pub mod ingest;
pub mod matpower;
pub mod netmodel;
pub mod opf;
pub mod pf;
pub mod reduce;
pub mod sidecar;
pub mod thermal;

pub use netmodel::NetworkModel;
