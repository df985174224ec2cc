//! Deterministic discrete-event harness for off-path spoofing attacks.
//!
//! One trial wires a [`crate::resolver::Resolver`] to a case-preserving
//! [`AuthoritySim`] over a simulated network, optionally through a NAT, while an
//! [`Attacker`] injects forged responses. The attacker only ever sees what an
//! off-path host could know plus any fields it is explicitly granted.

pub mod attacker;
pub mod authority;
pub mod experiment;
pub mod nat;
pub mod network;
pub mod trial;

pub use attacker::{kaminsky_query_name, Attacker, AttackerConfig, KnownFields, Strategy};
pub use authority::AuthoritySim;
pub use experiment::{run_experiment, to_csv, wilson_interval, CellResult, ExperimentConfig};
pub use nat::{Nat, NatMode};
pub use network::{EventQueue, NetConfig};
pub use trial::{derive_seed, run_trial, AttackOutcome, Defense, Scenario};
